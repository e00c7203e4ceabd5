//! End-to-end runs: configuration, the individual stages, and the persisted
//! artifacts each stage produces.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, registry::load_registry, BuiltinRegistry};
use crate::enforce::{evaluate_payloads, Payload, PayloadReport, ThreadId};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::jscg::{
    build_static_cg, extract_commands, merge_dynamic, reachable_builtins, CallGraph, DynamicTrace, FunctionId,
};
use crate::mapping::{self, LayerMappings, MappingDatabase, MethodKey, SCHEMA_VERSION};
use crate::metrics::{compute_metrics, MetricsRecord};
use crate::native::{build_base_cg, refine, resolve_syscalls, CloneReport, NativeCallGraph};
use crate::nir::{parse_nir, Program};
use crate::policy::{emit_policy, FsAdvisory, Policy};
use crate::syscalls::{CommandProfile, EngineBaseline, SyscallTable};
use crate::whitelist::{generate_whitelist, Whitelist, WhitelistInputs};

pub const APP_CG: &str = "app_cg.json";
pub const APP_SUMMARY: &str = "app_summary.json";
pub const BUILTIN_CG: &str = "builtin_cg.json";
pub const NATIVE_CG_BASE: &str = "native_cg_base.json";
pub const NATIVE_CG_REFINED: &str = "native_cg_refined.json";
pub const CLONE_REPORT: &str = "clone_report.json";
pub const MAPPING: &str = "mapping.json";
pub const WHITELIST: &str = "whitelist.json";
pub const METRICS: &str = "metrics.json";
pub const POLICY: &str = "policy.json";
pub const POLICY_RULES: &str = "policy.rules";
pub const PAYLOAD_REPORT: &str = "payload_report.json";

fn default_true() -> bool {
    true
}

/// Pipeline configuration. Relative paths are taken from the directory of
/// the config file. Data paths left out use the copies shipped with the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub builtin_corpus: PathBuf,
    pub nir: PathBuf,
    #[serde(default)]
    pub registry: Option<PathBuf>,
    /// When false, no builtin execution patterns are applied.
    #[serde(default = "default_true")]
    pub use_registry: bool,
    #[serde(default)]
    pub syscall_table: Option<PathBuf>,
    #[serde(default)]
    pub engine_baseline: Option<PathBuf>,
    #[serde(default)]
    pub trace: Option<PathBuf>,
    #[serde(default)]
    pub profile: Option<PathBuf>,
    #[serde(default)]
    pub payloads: Option<PathBuf>,
    #[serde(default)]
    pub injection_thread: ThreadId,
    #[serde(default = "default_true")]
    pub strict: bool,
    #[serde(default = "default_true")]
    pub refine: bool,
    #[serde(default)]
    pub fs_advisory: Option<FsAdvisory>,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
        cfg.rebase(path.parent().unwrap_or_else(|| Path::new(".")));
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.builtin_corpus);
        fix(&mut self.nir);
        fix(&mut self.output_dir);
        for p in [
            &mut self.registry,
            &mut self.syscall_table,
            &mut self.engine_baseline,
            &mut self.trace,
            &mut self.profile,
            &mut self.payloads,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    /// Required and given paths must exist.
    pub fn validate(&self) -> Result<()> {
        let required = [&self.corpus, &self.builtin_corpus, &self.nir];
        let optional = [
            &self.registry,
            &self.syscall_table,
            &self.engine_baseline,
            &self.trace,
            &self.profile,
            &self.payloads,
        ];
        for p in required.into_iter().chain(optional.into_iter().flatten()) {
            if !p.is_file() {
                return Err(Error::input(format!("{}: no such file", p.display())));
            }
        }
        if self.output_dir.exists() && !self.output_dir.is_dir() {
            return Err(Error::input(format!("{}: not a directory", self.output_dir.display())));
        }
        Ok(())
    }
}

pub fn load_table(path: Option<&Path>) -> Result<SyscallTable> {
    path.map_or_else(|| Ok(SyscallTable::default_x86_64()), SyscallTable::load)
}

pub fn load_baseline(path: Option<&Path>, table: &SyscallTable) -> Result<EngineBaseline> {
    match path {
        Some(p) => EngineBaseline::load(p, table),
        None => EngineBaseline::default_for(table),
    }
}

pub fn load_profile(path: Option<&Path>, table: &SyscallTable) -> Result<CommandProfile> {
    path.map_or_else(|| Ok(CommandProfile::default()), |p| CommandProfile::load(p, table))
}

pub fn load_registry_or_default(path: Option<&Path>, enabled: bool) -> Result<BuiltinRegistry> {
    match (enabled, path) {
        (false, _) => Ok(BuiltinRegistry::empty()),
        (true, Some(p)) => load_registry(p),
        (true, None) => Ok(BuiltinRegistry::default_registry()),
    }
}

/// What the whitelist needs to know about the application.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSummary {
    pub entry: FunctionId,
    pub reachable_builtins: BTreeSet<MethodKey>,
    pub commands: Vec<String>,
    pub warnings: Vec<String>,
}

impl AppSummary {
    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct AppAnalysis {
    pub cg: CallGraph,
    pub summary: AppSummary,
}

pub fn analyze_app(corpus: &Path, registry: &BuiltinRegistry, trace: Option<&Path>) -> Result<AppAnalysis> {
    let graph = load_corpus(corpus)?;
    let mut cg = build_static_cg(&graph, registry);
    let trace = match trace {
        Some(p) => DynamicTrace::load(p)?,
        None => DynamicTrace::default(),
    };
    if !trace.call_records.is_empty() {
        cg = merge_dynamic(&cg, &trace)?;
    }
    let entry = FunctionId::top(&graph.entry);
    let reachable = reachable_builtins(&cg, &entry)?;
    // Only commands started from code the entry reaches count.
    let reach = cg.reachable_from(&entry);
    let mut live = cg.clone();
    live.builtin_calls.retain(|c| reach.contains(&c.caller));
    let extraction = extract_commands(&graph, &live, &trace);
    let mut warnings = graph.warnings.clone();
    warnings.extend(cg.warnings.iter().cloned());
    warnings.extend(extraction.warnings);
    Ok(AppAnalysis {
        summary: AppSummary {
            entry,
            reachable_builtins: reachable.into_iter().map(MethodKey::from).collect(),
            commands: extraction.commands,
            warnings,
        },
        cg,
    })
}

pub fn analyze_builtins(corpus: &Path, registry: &BuiltinRegistry) -> Result<CallGraph> {
    let graph = load_corpus(corpus)?;
    let mut cg = build_static_cg(&graph, registry);
    let mut warnings = graph.warnings.clone();
    warnings.append(&mut cg.warnings);
    cg.warnings = warnings;
    Ok(cg)
}

#[derive(Debug, Clone)]
pub struct NativeAnalysis {
    pub refined: Program,
    pub base_cg: NativeCallGraph,
    pub refined_cg: NativeCallGraph,
    pub report: CloneReport,
}

pub fn analyze_native(program: &Program, refinement: bool) -> NativeAnalysis {
    let base_cg = build_base_cg(program);
    if !refinement {
        return NativeAnalysis {
            refined: program.clone(),
            refined_cg: base_cg.clone(),
            base_cg,
            report: CloneReport::default(),
        };
    }
    let (refined, report) = refine(program);
    NativeAnalysis {
        refined_cg: build_base_cg(&refined),
        refined,
        base_cg,
        report,
    }
}

pub fn build_mapping(
    builtin_cg: &CallGraph,
    native: &NativeAnalysis,
    table: &SyscallTable,
    strict: bool,
) -> Result<MappingDatabase> {
    let program = &native.refined;
    let m_builtin = mapping::map_builtin(builtin_cg);
    let m_binding = mapping::map_binding(program)?;
    let resolution = resolve_syscalls(program, &native.refined_cg, table, strict)?;
    let pool = mapping::identify_pool(program, &native.refined_cg, &m_builtin, &m_binding, strict)?;
    let m_depend = mapping::map_depend(&m_binding, &pool.pool_tasks, &resolution);
    let layers = LayerMappings {
        m_builtin,
        m_binding,
        m_depend,
        pool_builtins: pool.pool_builtins,
        pool_tasks: pool.pool_tasks,
    };
    let composition = mapping::compose(&layers);
    let witnesses = mapping::witnesses(program, &layers, &composition.composed, &native.refined_cg, &resolution);
    let mut warnings = pool.warnings;
    warnings.extend(
        resolution
            .unresolved_sites
            .iter()
            .map(|(f, s)| format!("function `{f}`, statement {s}: syscall number unresolved, charged the full table")),
    );
    Ok(MappingDatabase {
        schema_version: SCHEMA_VERSION,
        layers,
        composed: composition.composed,
        dangling: composition.dangling,
        witnesses,
        warnings,
    })
}

pub fn whitelist_for(
    app: &AppSummary,
    db: &MappingDatabase,
    baseline: &EngineBaseline,
    profile: &CommandProfile,
    table: &SyscallTable,
    strict: bool,
) -> Result<Whitelist> {
    let inputs = WhitelistInputs {
        reachable: app.reachable_builtins.clone(),
        composed: db.composed.clone(),
        pool_builtins: db.layers.pool_builtins.clone(),
        commands: app.commands.clone(),
        profile: profile.clone(),
    };
    generate_whitelist(&inputs, baseline, table, strict)
}

/// An error together with the stage it stopped.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}`: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub artifacts: Vec<PathBuf>,
    pub metrics: MetricsRecord,
    pub policy: Policy,
    pub payloads: Option<PayloadReport>,
    /// `(stage, message)` pairs.
    pub warnings: Vec<(&'static str, String)>,
}

impl PipelineReport {
    pub fn summary(&self) -> String {
        let mut out = format!(
            "SR = {} ({}), critical {}, trivial {}, warnings {}\n",
            self.metrics.sr_rounded,
            self.metrics.sr_fraction,
            self.metrics.critical_allowed,
            self.metrics.trivial_allowed,
            self.warnings.len()
        );
        if !self.metrics.critical.is_empty() {
            out.push_str(&format!("critical allowed: {}\n", self.metrics.critical.join(", ")));
        }
        if let Some(p) = &self.payloads {
            out.push_str(&p.table());
        }
        out
    }
}

struct Writer {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_file(&path, contents.as_bytes())?;
        self.written.push(path);
        Ok(())
    }
}

pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<PipelineReport, StageError> {
    let at = |stage: &'static str| move |error: Error| StageError { stage, error };
    cfg.validate().map_err(at("config"))?;
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|source| Error::Io {
            path: cfg.output_dir.clone(),
            source,
        })
        .map_err(at("config"))?;
    let mut out = Writer {
        dir: cfg.output_dir.clone(),
        written: Vec::new(),
    };
    let mut warnings: Vec<(&'static str, String)> = Vec::new();

    let table = load_table(cfg.syscall_table.as_deref()).map_err(at("config"))?;
    let baseline = load_baseline(cfg.engine_baseline.as_deref(), &table).map_err(at("config"))?;
    let profile = load_profile(cfg.profile.as_deref(), &table).map_err(at("config"))?;
    let registry = load_registry_or_default(cfg.registry.as_deref(), cfg.use_registry).map_err(at("config"))?;

    let app = analyze_app(&cfg.corpus, &registry, cfg.trace.as_deref()).map_err(at("cg-js"))?;
    out.put(APP_CG, &app.cg.to_json()).map_err(at("cg-js"))?;
    out.put(APP_SUMMARY, &app.summary.to_json()).map_err(at("cg-js"))?;
    warnings.extend(app.summary.warnings.iter().map(|w| ("cg-js", w.clone())));

    let builtin_cg = analyze_builtins(&cfg.builtin_corpus, &registry).map_err(at("cg-builtin"))?;
    out.put(BUILTIN_CG, &builtin_cg.to_json()).map_err(at("cg-builtin"))?;
    warnings.extend(builtin_cg.warnings.iter().map(|w| ("cg-builtin", w.clone())));

    let program = parse_nir(&cfg.nir).map_err(at("cg-native"))?;
    let native = analyze_native(&program, cfg.refine);
    out.put(NATIVE_CG_BASE, &native.base_cg.to_json())
        .map_err(at("cg-native"))?;
    out.put(NATIVE_CG_REFINED, &native.refined_cg.to_json())
        .map_err(at("cg-native"))?;
    out.put(CLONE_REPORT, &native.report.to_json())
        .map_err(at("cg-native"))?;

    let db = build_mapping(&builtin_cg, &native, &table, cfg.strict).map_err(at("map"))?;
    out.put(MAPPING, &db.to_json()).map_err(at("map"))?;
    warnings.extend(db.warnings.iter().map(|w| ("map", w.clone())));
    warnings.extend(db.dangling.iter().map(|d| {
        (
            "map",
            format!("{}: dangling {:?} link `{}`", d.method, d.layer, d.missing),
        )
    }));

    let wl = whitelist_for(&app.summary, &db, &baseline, &profile, &table, cfg.strict).map_err(at("whitelist"))?;
    out.put(WHITELIST, &wl.to_json()).map_err(at("whitelist"))?;
    warnings.extend(wl.warnings.iter().map(|w| ("whitelist", w.clone())));

    let metrics = compute_metrics::<f64>(&wl, &table)
        .map_err(at("metrics"))?
        .record(&wl, &table);
    out.put(METRICS, &metrics.to_json()).map_err(at("metrics"))?;

    let policy = emit_policy(&wl, cfg.fs_advisory.clone());
    out.put(POLICY, &policy.to_json()).map_err(at("emit"))?;
    out.put(POLICY_RULES, &policy.to_rules()).map_err(at("emit"))?;

    let payloads = match &cfg.payloads {
        Some(path) => {
            let list = Payload::load_list(path).map_err(at("payloads"))?;
            let report = evaluate_payloads(&policy, &list, cfg.injection_thread).map_err(at("payloads"))?;
            out.put(PAYLOAD_REPORT, &report.to_json()).map_err(at("payloads"))?;
            Some(report)
        }
        None => None,
    };

    Ok(PipelineReport {
        artifacts: out.written,
        metrics,
        policy,
        payloads,
        warnings,
    })
}
