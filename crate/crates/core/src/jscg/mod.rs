//! Modular call graphs over a [`ModuleGraph`](crate::corpus::ModuleGraph):
//! field-based static construction, builtin execution-pattern edges, merge of
//! dynamic traces, and command extraction.

mod annotate;
mod build;
mod commands;
mod reach;
mod trace;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Position;

pub use annotate::annotate_builtin_edges;
pub use build::{build_static_cg, build_static_cg_unannotated};
pub use commands::{extract_commands, CommandExtraction, COMMAND_METHODS};
pub use reach::reachable_builtins;
pub use trace::{merge_dynamic, CallRecord, CommandRecord, DynamicTrace};

pub const TOP: &str = "<top>";

/// A function identified by its module and lexical nesting path,
/// e.g. `lib/growl.js#<top>/growl/anon@15:23`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionId {
    pub module: String,
    pub path: String,
}

impl FunctionId {
    pub fn new(module: impl Into<String>, path: impl Into<String>) -> Self {
        FunctionId {
            module: module.into(),
            path: path.into(),
        }
    }

    pub fn top(module: impl Into<String>) -> Self {
        Self::new(module, TOP)
    }

    pub fn is_top(&self) -> bool {
        self.path == TOP
    }

    /// Parse the `module#path` form used in trace files.
    pub fn parse(text: &str) -> Option<Self> {
        let (module, path) = text.split_once('#')?;
        if module.is_empty() || !path.starts_with(TOP) {
            return None;
        }
        Some(Self::new(module, path))
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.module, self.path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Site {
    pub module: String,
    pub line: u32,
    pub col: u32,
}

impl Site {
    pub fn new(module: impl Into<String>, pos: Position) -> Self {
        Site {
            module: module.into(),
            line: pos.line,
            col: pos.column,
        }
    }

    pub fn pos(&self) -> Position {
        Position {
            line: self.line,
            column: self.col,
        }
    }

    /// Parse `<module>:<line>:<col>`; the module id may itself contain colons.
    pub fn parse(text: &str) -> Option<Self> {
        let mut parts = text.rsplitn(3, ':');
        let col = parts.next()?.parse().ok()?;
        let line = parts.next()?.parse().ok()?;
        let module = parts.next()?;
        if module.is_empty() {
            return None;
        }
        Some(Site {
            module: module.to_string(),
            line,
            col,
        })
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.module, self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Static,
    BuiltinPattern,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallEdge {
    pub site: Site,
    pub caller: FunctionId,
    pub callee: FunctionId,
    pub kind: EdgeKind,
}

/// Whether a builtin call targets a required builtin module or a language
/// global (`Promise`, `Array`, `setTimeout`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallOrigin {
    Module,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BuiltinCall {
    pub site: Site,
    pub caller: FunctionId,
    /// Builtin module or global object name; `*` when the receiver is unknown.
    pub owner: String,
    pub method: String,
    pub origin: CallOrigin,
    /// Per argument: the function it statically denotes, if any.
    pub args: Vec<Option<FunctionId>>,
}

/// A call on an object obtained from `internalBinding(<name>)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BindingCall {
    pub site: Site,
    pub caller: FunctionId,
    pub binding: String,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExportRecord {
    pub module: String,
    /// The name the module is required by.
    pub name: String,
    pub method: String,
    pub function: FunctionId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    pub nodes: BTreeSet<FunctionId>,
    pub edges: BTreeSet<CallEdge>,
    pub builtin_calls: BTreeSet<BuiltinCall>,
    pub binding_calls: BTreeSet<BindingCall>,
    pub exports: BTreeSet<ExportRecord>,
    /// Call sites with no statically resolved target.
    pub unresolved_calls: usize,
    /// Registry-matched callback arguments that did not denote a function.
    pub unresolved_callbacks: usize,
    pub warnings: Vec<String>,
}

impl CallGraph {
    /// Whether some edge of any kind already links `caller` to `callee` at `site`.
    pub fn has_link(&self, site: &Site, caller: &FunctionId, callee: &FunctionId) -> bool {
        self.edges
            .iter()
            .any(|e| &e.site == site && &e.caller == caller && &e.callee == callee)
    }

    pub fn successors(&self) -> BTreeMap<&FunctionId, BTreeSet<&FunctionId>> {
        let mut out: BTreeMap<&FunctionId, BTreeSet<&FunctionId>> = BTreeMap::new();
        for e in &self.edges {
            out.entry(&e.caller).or_default().insert(&e.callee);
        }
        out
    }

    /// Every node reachable from `entry` over edges of any kind, `entry` included.
    pub fn reachable_from(&self, entry: &FunctionId) -> BTreeSet<FunctionId> {
        let succ = self.successors();
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([entry.clone()]);
        seen.insert(entry.clone());
        while let Some(f) = queue.pop_front() {
            if let Some(next) = succ.get(&f) {
                for n in next {
                    if seen.insert((*n).clone()) {
                        queue.push_back((*n).clone());
                    }
                }
            }
        }
        seen
    }

    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_trace_identifiers() {
        let f = FunctionId::parse("lib/growl.js#<top>/growl/anon@15:23").unwrap();
        assert_eq!(f.module, "lib/growl.js");
        assert_eq!(f.path, "<top>/growl/anon@15:23");
        assert!(FunctionId::parse("main.js#growl").is_none());
        let s = Site::parse("c:/x.js:3:14").unwrap();
        assert_eq!((s.module.as_str(), s.line, s.col), ("c:/x.js", 3, 14));
    }
}
