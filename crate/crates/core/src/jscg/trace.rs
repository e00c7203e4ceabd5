use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CallEdge, CallGraph, EdgeKind, FunctionId, Site};
use crate::error::{read_to_string, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub site: Site,
    pub caller: FunctionId,
    pub callee: FunctionId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub site: Site,
    pub command: String,
}

/// Call and command records logged by an instrumented run.
///
/// ```text
/// CALL main.js#<top> @main.js:3:0 -> main.js#<top>/target
/// CMD @lib/growl.js:9:2 notify-send 'hi'
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicTrace {
    pub call_records: Vec<CallRecord>,
    pub command_records: Vec<CommandRecord>,
}

impl DynamicTrace {
    /// Parse the line format. Blank lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut trace = DynamicTrace::default();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::input(format!("trace line {lineno}: {what}: `{line}`"));
            if let Some(rest) = line.strip_prefix("CALL ") {
                let (caller, rest) = rest.split_once(" @").ok_or_else(|| bad("expected `@<site>`"))?;
                let (site, callee) = rest.split_once(" -> ").ok_or_else(|| bad("expected `-> <callee>`"))?;
                trace.call_records.push(CallRecord {
                    site: Site::parse(site.trim()).ok_or_else(|| bad("malformed site"))?,
                    caller: FunctionId::parse(caller.trim()).ok_or_else(|| bad("malformed caller"))?,
                    callee: FunctionId::parse(callee.trim()).ok_or_else(|| bad("malformed callee"))?,
                });
            } else if let Some(rest) = line.strip_prefix("CMD @") {
                let (site, command) = rest.split_once(' ').unwrap_or((rest, ""));
                trace.command_records.push(CommandRecord {
                    site: Site::parse(site).ok_or_else(|| bad("malformed site"))?,
                    command: command.to_string(),
                });
            } else {
                return Err(bad("unknown record"));
            }
        }
        Ok(trace)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Module ids referenced anywhere in the trace.
    pub fn modules(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for r in &self.call_records {
            out.insert(r.site.module.as_str());
            out.insert(r.caller.module.as_str());
            out.insert(r.callee.module.as_str());
        }
        for r in &self.command_records {
            out.insert(r.site.module.as_str());
        }
        out
    }

    /// Reject records naming modules outside `known`.
    pub fn check_modules<'a>(&self, known: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let known: BTreeSet<&str> = known.into_iter().collect();
        match self.modules().into_iter().find(|m| !known.contains(m)) {
            Some(m) => Err(Error::input(format!("trace references unknown module `{m}`"))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.call_records {
            out.push_str(&format!("CALL {} @{} -> {}\n", r.caller, r.site, r.callee));
        }
        for r in &self.command_records {
            out.push_str(&format!("CMD @{} {}\n", r.site, r.command));
        }
        out
    }
}

/// Union trace call records into `cg` as dynamic edges. Links the static
/// graph already has (at any kind) are left as they are.
pub fn merge_dynamic(cg: &CallGraph, trace: &DynamicTrace) -> Result<CallGraph> {
    let modules: BTreeSet<&str> = cg
        .nodes
        .iter()
        .filter(|n| n.is_top())
        .map(|n| n.module.as_str())
        .collect();
    trace.check_modules(modules)?;
    let mut out = cg.clone();
    for r in &trace.call_records {
        out.nodes.insert(r.caller.clone());
        out.nodes.insert(r.callee.clone());
        if out.has_link(&r.site, &r.caller, &r.callee) {
            continue;
        }
        out.edges.insert(CallEdge {
            site: r.site.clone(),
            caller: r.caller.clone(),
            callee: r.callee.clone(),
            kind: EdgeKind::Dynamic,
        });
    }
    Ok(out)
}
