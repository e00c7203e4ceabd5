//! Corpus ingestion: a scripted application (or the engine's builtin-layer
//! modules) loaded from ESTree JSON files and linked through `require`.

pub mod ast;
pub mod registry;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{read_json, read_to_string, Error, Result};
pub use ast::{Node, NodeKind, Position};
pub use registry::{load_registry, ArgPosition, BuiltinRegistry, RegistryEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModuleKind {
    App,
    Dependency,
    BuiltinJs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceModule {
    pub id: String,
    pub kind: ModuleKind,
    /// Name the module is required by. For builtin-layer modules this is the
    /// builtin name (`child_process`); for everything else it equals `id`.
    pub name: String,
    pub ast: Node,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Local(String),
    Builtin(String),
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportEdge {
    pub importer: String,
    pub site: Position,
    /// The literal specifier, or `None` when the argument is not a string literal.
    pub specifier: Option<String>,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleGraph {
    pub entry: String,
    pub modules: Vec<SourceModule>,
    pub edges: Vec<ImportEdge>,
    pub builtin_names: Vec<String>,
    pub warnings: Vec<String>,
}

impl ModuleGraph {
    pub fn module(&self, id: &str) -> Option<&SourceModule> {
        self.modules.iter().find(|m| m.id == id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.module(id).is_some()
    }

    pub fn resolve_at(&self, importer: &str, site: Position) -> Option<&Resolution> {
        self.edges
            .iter()
            .find(|e| e.importer == importer && e.site == site)
            .map(|e| &e.resolution)
    }

    /// Module id of the builtin-layer module registered under `name`.
    pub fn builtin_module_named(&self, name: &str) -> Option<&SourceModule> {
        self.modules
            .iter()
            .find(|m| m.kind == ModuleKind::BuiltinJs && m.name == name)
    }
}

#[derive(Debug, Clone, Deserialize)]
struct Manifest {
    entry: String,
    modules: Vec<ManifestModule>,
    #[serde(default)]
    builtin_names: Vec<String>,
    /// Bare package specifiers mapped to module ids, e.g. `"growl": "lib/growl.js"`.
    #[serde(default)]
    packages: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestModule {
    id: String,
    kind: ModuleKind,
    ast_file: PathBuf,
    #[serde(default)]
    name: Option<String>,
}

pub fn normalize_id(raw: &str) -> String {
    let unified = raw.replace('\\', "/");
    let mut parts: Vec<&str> = Vec::new();
    for seg in unified.split('/') {
        match seg {
            "" | "." => {}
            ".." => {
                parts.pop();
            }
            s => parts.push(s),
        }
    }
    parts.join("/")
}

fn dir_of(id: &str) -> &str {
    id.rsplit_once('/').map(|(d, _)| d).unwrap_or("")
}

fn resolve_relative(importer: &str, spec: &str, ids: &BTreeSet<String>) -> Option<String> {
    let base = normalize_id(&format!("{}/{}", dir_of(importer), spec));
    [base.clone(), format!("{base}.js"), format!("{base}/index.js")]
        .into_iter()
        .find(|candidate| ids.contains(candidate))
}

/// Load a corpus manifest together with every module AST it lists.
pub fn load_corpus(manifest_path: &Path) -> Result<ModuleGraph> {
    let manifest: Manifest = read_json(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut warnings = Vec::new();
    let mut modules = Vec::with_capacity(manifest.modules.len());
    let mut ids = BTreeSet::new();
    for entry in &manifest.modules {
        let id = normalize_id(&entry.id);
        if !ids.insert(id.clone()) {
            return Err(Error::input(format!("duplicate module id `{id}` in manifest")));
        }
        let path = base.join(&entry.ast_file);
        let text = read_to_string(&path)?;
        let mut raw: serde_json::Value = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        ast::prune_unsupported(&mut raw, &id, &mut warnings);
        let ast: Node = serde_json::from_value(raw).map_err(|source| Error::Json {
            path: path.clone(),
            source,
        })?;
        if !matches!(ast.kind, NodeKind::Program { .. }) {
            return Err(Error::input(format!(
                "{}: AST root is `{}`, expected `Program`",
                path.display(),
                ast.type_name()
            )));
        }
        let name = match (&entry.name, entry.kind) {
            (Some(name), _) => name.clone(),
            (None, ModuleKind::BuiltinJs) => {
                let file = id.rsplit('/').next().unwrap_or(&id);
                file.strip_suffix(".js").unwrap_or(file).to_string()
            }
            (None, _) => id.clone(),
        };
        modules.push(SourceModule {
            id,
            kind: entry.kind,
            name,
            ast,
        });
    }

    // A builtin-layer corpus has no app modules; its entry is only nominal.
    let has_app = modules.iter().any(|m| m.kind == ModuleKind::App);
    let entry = normalize_id(&manifest.entry);
    match modules.iter().find(|m| m.id == entry) {
        Some(m) if m.kind == ModuleKind::App || !has_app => {}
        Some(_) => return Err(Error::input(format!("entry module `{entry}` is not an app module"))),
        None => {
            return Err(Error::input(format!(
                "entry module `{entry}` is not listed in the manifest"
            )))
        }
    }

    let packages: BTreeMap<String, String> = manifest
        .packages
        .iter()
        .map(|(k, v)| (k.clone(), normalize_id(v)))
        .collect();
    for (name, target) in &packages {
        if !ids.contains(target) {
            return Err(Error::input(format!(
                "package `{name}` maps to unknown module `{target}`"
            )));
        }
    }
    let builtin_names: BTreeSet<&str> = manifest.builtin_names.iter().map(String::as_str).collect();

    let mut edges = Vec::new();
    for module in &modules {
        for (site, arg) in require_sites(&module.ast) {
            let resolution = match arg {
                None => {
                    warnings.push(format!("{}:{site}: non-literal require argument", module.id));
                    Resolution::Unresolved
                }
                Some(spec) if spec.starts_with("./") || spec.starts_with("../") => {
                    match resolve_relative(&module.id, spec, &ids) {
                        Some(target) => Resolution::Local(target),
                        None => {
                            warnings.push(format!("{}:{site}: cannot resolve `{spec}`", module.id));
                            Resolution::Unresolved
                        }
                    }
                }
                Some(spec) => {
                    let bare = spec.strip_prefix("node:").unwrap_or(spec);
                    if let Some(target) = packages.get(bare) {
                        Resolution::Local(target.clone())
                    } else if builtin_names.contains(bare) {
                        Resolution::Builtin(bare.to_string())
                    } else {
                        warnings.push(format!("{}:{site}: cannot resolve `{spec}`", module.id));
                        Resolution::Unresolved
                    }
                }
            };
            edges.push(ImportEdge {
                importer: module.id.clone(),
                site,
                specifier: arg.map(str::to_string),
                resolution,
            });
        }
    }
    edges.sort_by(|a, b| (&a.importer, a.site).cmp(&(&b.importer, b.site)));

    Ok(ModuleGraph {
        entry,
        modules,
        edges,
        builtin_names: manifest.builtin_names.clone(),
        warnings,
    })
}

/// Every `require(...)` call in a module: its position and literal argument, if any.
pub fn require_sites(ast: &Node) -> Vec<(Position, Option<&str>)> {
    let mut out = Vec::new();
    ast.walk(&mut |node| {
        if let NodeKind::CallExpression { callee, arguments } = &node.kind {
            if callee.as_identifier() == Some("require") {
                out.push((node.pos(), arguments.first().and_then(Node::as_string_literal)));
            }
        }
    });
    out
}
