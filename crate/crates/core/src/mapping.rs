//! Layer mappings from builtin methods down to syscalls, their composition,
//! and thread-pool classification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jscg::CallGraph;
use crate::native::{CallerIndex, NativeCallGraph, SyscallResolution};
use crate::nir::{walk, Operand, Program, StmtKind};

pub const SCHEMA_VERSION: u32 = 1;

/// A `(module, method)` pair, written `module.method`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MethodKey {
    pub module: String,
    pub method: String,
}

impl MethodKey {
    pub fn new(module: impl Into<String>, method: impl Into<String>) -> Self {
        MethodKey {
            module: module.into(),
            method: method.into(),
        }
    }
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.module, self.method)
    }
}

impl FromStr for MethodKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.rsplit_once('.') {
            Some((m, x)) if !m.is_empty() && !x.is_empty() => Ok(MethodKey::new(m, x)),
            _ => Err(Error::input(format!("`{s}` is not of the form module.method"))),
        }
    }
}

impl Serialize for MethodKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MethodKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl From<(String, String)> for MethodKey {
    fn from((module, method): (String, String)) -> Self {
        MethodKey { module, method }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerMappings {
    /// Builtin method to the binding methods it reaches.
    pub m_builtin: BTreeMap<MethodKey, BTreeSet<MethodKey>>,
    /// Binding method to the native function registered for it.
    pub m_binding: BTreeMap<MethodKey, String>,
    /// Native function to the syscalls it reaches. Covers binding targets
    /// and pool task functions.
    pub m_depend: BTreeMap<String, BTreeSet<String>>,
    pub pool_builtins: BTreeSet<MethodKey>,
    pub pool_tasks: BTreeMap<MethodKey, BTreeSet<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedEntry {
    pub main_syscalls: BTreeSet<String>,
    pub pool_syscalls: BTreeSet<String>,
}

pub type ComposedMapping = BTreeMap<MethodKey, ComposedEntry>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layer {
    /// A binding method with no registered native function.
    Binding,
    /// A native function with no syscall mapping.
    Depend,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DanglingLink {
    pub method: MethodKey,
    pub layer: Layer,
    pub missing: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub composed: ComposedMapping,
    pub dangling: Vec<DanglingLink>,
}

/// How one syscall is reached from one builtin method.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Witness {
    pub method: MethodKey,
    pub syscall: String,
    pub binding: MethodKey,
    /// Native functions from the binding target, through the pool task when
    /// there is one, to the function issuing the syscall.
    pub native_path: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_task: Option<String>,
}

/// The persisted mapping database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingDatabase {
    pub schema_version: u32,
    pub layers: LayerMappings,
    pub composed: ComposedMapping,
    pub dangling: Vec<DanglingLink>,
    pub witnesses: Vec<Witness>,
    pub warnings: Vec<String>,
}

impl MappingDatabase {
    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let db: MappingDatabase =
            serde_json::from_str(text).map_err(|e| Error::input(format!("mapping database: {e}")))?;
        if db.schema_version != SCHEMA_VERSION {
            return Err(Error::input(format!(
                "mapping database: schema version {} (expected {SCHEMA_VERSION})",
                db.schema_version
            )));
        }
        Ok(db)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&crate::error::read_to_string(path)?).map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// For every exported builtin method, the binding methods called anywhere
/// in its intra-corpus reach.
pub fn map_builtin(builtin_cg: &CallGraph) -> BTreeMap<MethodKey, BTreeSet<MethodKey>> {
    let mut out: BTreeMap<MethodKey, BTreeSet<MethodKey>> = BTreeMap::new();
    for export in &builtin_cg.exports {
        let reach = builtin_cg.reachable_from(&export.function);
        let entry = out.entry(MethodKey::new(&export.name, &export.method)).or_default();
        for b in &builtin_cg.binding_calls {
            if reach.contains(&b.caller) {
                entry.insert(MethodKey::new(&b.binding, &b.method));
            }
        }
    }
    out
}

pub fn map_binding(program: &Program) -> Result<BTreeMap<MethodKey, String>> {
    let mut out = BTreeMap::new();
    for b in &program.bindings {
        if program.function(&b.function).is_none() {
            return Err(Error::input(format!(
                "binding {}.{} names unknown function `{}`",
                b.module, b.method, b.function
            )));
        }
        let key = MethodKey::new(&b.module, &b.method);
        match out.get(&key) {
            Some(existing) if existing != &b.function => {
                return Err(Error::input(format!(
                    "binding {key} registered to both `{existing}` and `{}`",
                    b.function
                )))
            }
            _ => {
                out.insert(key, b.function.clone());
            }
        }
    }
    Ok(out)
}

/// Syscall sets for the native functions in `m_binding`'s range and for
/// every pool task they may submit.
pub fn map_depend(
    m_binding: &BTreeMap<MethodKey, String>,
    pool_tasks: &BTreeMap<MethodKey, BTreeSet<String>>,
    resolution: &SyscallResolution,
) -> BTreeMap<String, BTreeSet<String>> {
    m_binding
        .values()
        .chain(pool_tasks.values().flatten())
        .map(|f| (f.clone(), resolution.of(f)))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PoolInfo {
    pub pool_builtins: BTreeSet<MethodKey>,
    pub pool_tasks: BTreeMap<MethodKey, BTreeSet<String>>,
    pub warnings: Vec<String>,
}

/// Task functions submitted by `submit_pool` statements reachable from
/// `root`. An unresolvable task is an error when `strict`; otherwise the
/// flow-insensitive candidates are used.
fn submitted_tasks(
    program: &Program,
    cg: &NativeCallGraph,
    idx: &CallerIndex<'_>,
    root: &str,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<Option<BTreeSet<String>>> {
    let mut tasks = BTreeSet::new();
    let mut any = false;
    for name in cg.reachable_from(root) {
        let Some(f) = program.function(&name) else { continue };
        let mut sites = Vec::new();
        walk(&f.body, &mut |s| {
            if let StmtKind::SubmitPool { task } = &s.kind {
                sites.push((s.site, task));
            }
        });
        for (site, task) in sites {
            any = true;
            let resolved = idx
                .resolve(&f.name, &crate::native::query(f, site, task))
                .filter(|set| set.iter().all(|v| matches!(v, Operand::Fnref(_))));
            match resolved {
                Some(set) => tasks.extend(set.into_iter().filter_map(|v| match v {
                    Operand::Fnref(t) => Some(t),
                    _ => None,
                })),
                None if strict => {
                    return Err(Error::analysis(format!(
                        "function `{name}`, statement {site}: pool task cannot be resolved"
                    )))
                }
                None => {
                    let fallback = crate::native::pool_task_values(program)
                        .remove(&(name.clone(), site))
                        .unwrap_or_default();
                    warnings.push(format!(
                        "function `{name}`, statement {site}: pool task unresolved, using {} flow candidates",
                        fallback.len()
                    ));
                    tasks.extend(fallback);
                }
            }
        }
    }
    Ok(any.then_some(tasks))
}

pub fn identify_pool(
    program: &Program,
    refined_cg: &NativeCallGraph,
    m_builtin: &BTreeMap<MethodKey, BTreeSet<MethodKey>>,
    m_binding: &BTreeMap<MethodKey, String>,
    strict: bool,
) -> Result<PoolInfo> {
    let idx = CallerIndex::new(program, refined_cg);
    let mut info = PoolInfo::default();
    let mut per_native: BTreeMap<&str, Option<BTreeSet<String>>> = BTreeMap::new();
    for (method, bindings) in m_builtin {
        for b in bindings {
            let Some(native) = m_binding.get(b) else { continue };
            if !per_native.contains_key(native.as_str()) {
                let found = submitted_tasks(program, refined_cg, &idx, native, strict, &mut info.warnings)?;
                per_native.insert(native, found);
            }
            if let Some(tasks) = &per_native[native.as_str()] {
                info.pool_builtins.insert(method.clone());
                info.pool_tasks
                    .entry(method.clone())
                    .or_default()
                    .extend(tasks.iter().cloned());
            }
        }
    }
    Ok(info)
}

/// Per builtin method: the syscalls of the native functions behind its
/// bindings go to `main_syscalls`, those of its pool tasks to `pool_syscalls`.
pub fn compose(layers: &LayerMappings) -> Composition {
    let mut out = Composition::default();
    for (method, bindings) in &layers.m_builtin {
        let entry = out.composed.entry(method.clone()).or_default();
        for b in bindings {
            let Some(native) = layers.m_binding.get(b) else {
                out.dangling.push(DanglingLink {
                    method: method.clone(),
                    layer: Layer::Binding,
                    missing: b.to_string(),
                });
                continue;
            };
            match layers.m_depend.get(native) {
                Some(set) => entry.main_syscalls.extend(set.iter().cloned()),
                None => out.dangling.push(DanglingLink {
                    method: method.clone(),
                    layer: Layer::Depend,
                    missing: native.clone(),
                }),
            }
        }
        for task in layers.pool_tasks.get(method).into_iter().flatten() {
            match layers.m_depend.get(task) {
                Some(set) => entry.pool_syscalls.extend(set.iter().cloned()),
                None => out.dangling.push(DanglingLink {
                    method: method.clone(),
                    layer: Layer::Depend,
                    missing: task.clone(),
                }),
            }
        }
    }
    out.dangling.sort();
    out.dangling.dedup();
    out
}

/// Shortest call path from `root` to a function that issues `syscall`
/// itself; ties go to the lexicographically smallest path.
fn path_to_syscall(
    cg: &NativeCallGraph,
    resolution: &SyscallResolution,
    root: &str,
    syscall: &str,
) -> Option<Vec<String>> {
    cg.reachable_from(root)
        .into_iter()
        .filter(|f| resolution.direct.get(f).is_some_and(|d| d.contains(syscall)))
        .filter_map(|f| cg.path(root, &f))
        .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
}

/// One witness chain per `(method, syscall)` pair of the composition.
pub fn witnesses(
    program: &Program,
    layers: &LayerMappings,
    composed: &ComposedMapping,
    refined_cg: &NativeCallGraph,
    resolution: &SyscallResolution,
) -> Vec<Witness> {
    let mut out = Vec::new();
    for (method, entry) in composed {
        let bindings: Vec<(&MethodKey, &String)> = layers.m_builtin[method]
            .iter()
            .filter_map(|b| layers.m_binding.get(b).map(|n| (b, n)))
            .collect();
        let main = entry.main_syscalls.iter().map(|s| (s, false));
        let pool = entry.pool_syscalls.iter().map(|s| (s, true));
        for (syscall, on_pool) in main.chain(pool) {
            let found = bindings.iter().find_map(|(b, native)| {
                if !on_pool {
                    let path = path_to_syscall(refined_cg, resolution, native, syscall)?;
                    return Some(Witness {
                        method: method.clone(),
                        syscall: syscall.clone(),
                        binding: (*b).clone(),
                        native_path: path,
                        pool_task: None,
                    });
                }
                let reach = refined_cg.reachable_from(native);
                layers.pool_tasks.get(method)?.iter().find_map(|task| {
                    let tail = path_to_syscall(refined_cg, resolution, task, syscall)?;
                    let submitter = reach
                        .iter()
                        .filter_map(|f| refined_cg.path(native, f))
                        .filter(|p| p.last().is_some_and(|f| submits(program, f, task)))
                        .min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))?;
                    Some(Witness {
                        method: method.clone(),
                        syscall: syscall.clone(),
                        binding: (*b).clone(),
                        native_path: submitter.into_iter().chain(tail).collect(),
                        pool_task: Some(task.clone()),
                    })
                })
            });
            out.extend(found);
        }
    }
    out
}

/// Whether `function` holds a `submit_pool` whose task is `task`, or an
/// unresolved one when no exact match exists anywhere.
fn submits(program: &Program, function: &str, task: &str) -> bool {
    let Some(f) = program.function(function) else {
        return false;
    };
    let mut hit = false;
    walk(&f.body, &mut |s| {
        if let StmtKind::SubmitPool { task: op } = &s.kind {
            hit |= match crate::native::query(f, s.site, op) {
                crate::native::Source::Known(Operand::Fnref(t)) => t == task,
                _ => true,
            };
        }
    });
    hit
}
