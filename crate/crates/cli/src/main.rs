use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use syswall::enforce::{evaluate_payloads, simulate, verdicts_table, verdicts_to_json, EventTrace, Payload};
use syswall::jscg::CallGraph;
use syswall::mapping::MappingDatabase;
use syswall::metrics::compute_metrics;
use syswall::nir::parse_nir;
use syswall::pipeline::{self, AppSummary, PipelineConfig};
use syswall::policy::{emit_policy, FsAdvisory, Policy};
use syswall::whitelist::Whitelist;
use syswall::{Error, ExactMetrics};

#[derive(Parser)]
#[command(name = "syswall", version, about = "Syscall whitelists for scripted applications")]
struct Cli {
    /// Stop on any soundness gap (default).
    #[arg(long, global = true, conflicts_with = "permissive")]
    strict: bool,
    /// Over-approximate instead of failing on soundness gaps.
    #[arg(long, global = true)]
    permissive: bool,
    #[command(subcommand)]
    command: Command,
}

impl Cli {
    fn strict_override(&self) -> Option<bool> {
        match (self.strict, self.permissive) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Args)]
struct RegistryArgs {
    /// Builtin execution-pattern registry; the shipped one by default.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Apply no execution patterns.
    #[arg(long)]
    no_registry: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the call graph of a corpus.
    CgJs {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        registry: RegistryArgs,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Treat the corpus as the engine's builtin layer.
        #[arg(long)]
        builtin_layer: bool,
        #[arg(long)]
        out: PathBuf,
        /// Where to write reachable builtins and commands (application corpora).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Build the baseline and refined native call graphs.
    CgNative {
        #[arg(long)]
        nir: PathBuf,
        #[arg(long)]
        no_refine: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build the mapping database.
    Map {
        #[arg(long)]
        builtin_cg: PathBuf,
        #[arg(long)]
        nir: PathBuf,
        #[arg(long)]
        no_refine: bool,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the per-thread whitelist.
    Whitelist {
        #[arg(long)]
        app_summary: PathBuf,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute attack-surface metrics of a whitelist.
    Metrics {
        #[arg(long)]
        whitelist: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the policy document and its rules text.
    Emit {
        #[arg(long)]
        whitelist: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Directory to confine the application to.
        #[arg(long)]
        fs_root: Option<PathBuf>,
        #[arg(long, requires = "fs_root")]
        read_only: bool,
    },
    /// Run an event trace under a policy.
    Simulate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate attack payloads against a policy.
    Payloads {
        #[arg(long)]
        policy: PathBuf,
        /// Payload set; the shipped one by default.
        #[arg(long)]
        payloads: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        thread: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage from a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        no_refine: bool,
        #[arg(long)]
        no_registry: bool,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        payloads: Option<PathBuf>,
    },
}

fn write(path: &Path, text: &str) -> syswall::Result<()> {
    syswall::error::write_file(path, text.as_bytes())
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_input() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: &Cli) -> syswall::Result<()> {
    let strict = cli.strict_override().unwrap_or(true);
    match &cli.command {
        Command::CgJs {
            corpus,
            registry,
            trace,
            builtin_layer,
            out,
            summary,
        } => {
            let reg = pipeline::load_registry_or_default(registry.registry.as_deref(), !registry.no_registry)?;
            if *builtin_layer {
                write(out, &pipeline::analyze_builtins(corpus, &reg)?.to_json())?;
            } else {
                let app = pipeline::analyze_app(corpus, &reg, trace.as_deref())?;
                write(out, &app.cg.to_json())?;
                if let Some(s) = summary {
                    write(s, &app.summary.to_json())?;
                }
                for w in &app.summary.warnings {
                    eprintln!("warning: {w}");
                }
            }
        }
        Command::CgNative {
            nir,
            no_refine,
            out_dir,
        } => {
            let native = pipeline::analyze_native(&parse_nir(nir)?, !no_refine);
            std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
                path: out_dir.clone(),
                source,
            })?;
            write(&out_dir.join(pipeline::NATIVE_CG_BASE), &native.base_cg.to_json())?;
            write(&out_dir.join(pipeline::NATIVE_CG_REFINED), &native.refined_cg.to_json())?;
            write(&out_dir.join(pipeline::CLONE_REPORT), &native.report.to_json())?;
            println!(
                "{} functions, {} clones",
                native.refined_cg.nodes.len(),
                native.report.clones.len()
            );
        }
        Command::Map {
            builtin_cg,
            nir,
            no_refine,
            table,
            out,
        } => {
            let text = std::fs::read_to_string(builtin_cg).map_err(|source| Error::Io {
                path: builtin_cg.clone(),
                source,
            })?;
            let cg: CallGraph =
                serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", builtin_cg.display())))?;
            let table = pipeline::load_table(table.as_deref())?;
            let native = pipeline::analyze_native(&parse_nir(nir)?, !no_refine);
            let db = pipeline::build_mapping(&cg, &native, &table, strict)?;
            write(out, &db.to_json())?;
            for d in &db.dangling {
                eprintln!("warning: {}: dangling {:?} link `{}`", d.method, d.layer, d.missing);
            }
        }
        Command::Whitelist {
            app_summary,
            mapping,
            baseline,
            profile,
            table,
            out,
        } => {
            let table = pipeline::load_table(table.as_deref())?;
            let baseline = pipeline::load_baseline(baseline.as_deref(), &table)?;
            let profile = pipeline::load_profile(profile.as_deref(), &table)?;
            let app = AppSummary::load(app_summary)?;
            let db = MappingDatabase::load(mapping)?;
            let wl = pipeline::whitelist_for(&app, &db, &baseline, &profile, &table, strict)?;
            write(out, &wl.to_json())?;
            println!("main {}, pool {}", wl.main.len(), wl.pool.len());
        }
        Command::Metrics { whitelist, table, out } => {
            let table = pipeline::load_table(table.as_deref())?;
            let wl = Whitelist::load(whitelist)?;
            let m: ExactMetrics = compute_metrics(&wl, &table)?;
            let record = m.record(&wl, &table);
            println!(
                "SR = {} ({}/{}), critical {}, trivial {}",
                record.sr_rounded, m.s_app, m.s_base, m.critical_allowed, m.trivial_allowed
            );
            if let Some(o) = out {
                write(o, &record.to_json())?;
            }
        }
        Command::Emit {
            whitelist,
            out,
            rules,
            fs_root,
            read_only,
        } => {
            let wl = Whitelist::load(whitelist)?;
            let advisory = fs_root.as_ref().map(|root| FsAdvisory {
                root_dir: root.clone(),
                read_only: *read_only,
            });
            let policy = emit_policy(&wl, advisory);
            write(out, &policy.to_json())?;
            if let Some(r) = rules {
                write(r, &policy.to_rules())?;
            }
        }
        Command::Simulate { policy, trace, out } => {
            let policy = Policy::load(policy)?;
            let verdicts = simulate(&policy, &EventTrace::load(trace)?)?;
            print!("{}", verdicts_table(&verdicts));
            if let Some(o) = out {
                write(o, &verdicts_to_json(&verdicts))?;
            }
        }
        Command::Payloads {
            policy,
            payloads,
            thread,
            out,
        } => {
            let policy = Policy::load(policy)?;
            let list = match payloads {
                Some(p) => Payload::load_list(p)?,
                None => Payload::defaults(),
            };
            let report = evaluate_payloads(&policy, &list, *thread)?;
            print!("{}", report.table());
            if let Some(o) = out {
                write(o, &report.to_json())?;
            }
        }
        Command::Pipeline {
            config,
            output_dir,
            no_refine,
            no_registry,
            trace,
            profile,
            payloads,
        } => {
            let mut cfg = PipelineConfig::load(config)?;
            if let Some(s) = cli.strict_override() {
                cfg.strict = s;
            }
            if let Some(d) = output_dir {
                cfg.output_dir = d.clone();
            }
            cfg.refine &= !no_refine;
            cfg.use_registry &= !no_registry;
            if trace.is_some() {
                cfg.trace = trace.clone();
            }
            if profile.is_some() {
                cfg.profile = profile.clone();
            }
            if payloads.is_some() {
                cfg.payloads = payloads.clone();
            }
            match pipeline::run_pipeline(&cfg) {
                Ok(report) => {
                    for (stage, w) in &report.warnings {
                        eprintln!("warning [{stage}]: {w}");
                    }
                    print!("{}", report.summary());
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return Err(e.error);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut cmd = Cli::command();
    cmd.build();
    let matches = cmd.clone().get_matches();
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(cli.command, Command::Pipeline { .. }) {
                eprintln!("error: {e}");
            }
            if e.is_input() {
                if let Some(sub) = matches.subcommand_name().and_then(|n| cmd.find_subcommand_mut(n)) {
                    eprintln!("\n{}", sub.render_usage());
                }
            }
            exit_code(&e)
        }
    }
}
