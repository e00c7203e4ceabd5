//! Native call graphs over NIR: the context-insensitive baseline, the two
//! cloning refinements, and per-function syscall resolution.

mod flow;
mod fnptr;
mod resolve;
mod switch;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::nir::{walk, Operand, Place, Program, StmtKind};

pub use flow::{query, CallerIndex, Source};
pub use fnptr::specialize_fnptr;
pub use resolve::{resolve_syscalls, SyscallResolution};
pub use switch::{find_switch_candidates, specialize_switch, SwitchCandidate};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NativeEdge {
    pub caller: String,
    pub site: usize,
    pub callee: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NativeCallGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<NativeEdge>,
}

impl NativeCallGraph {
    pub fn successors(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut out: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for e in &self.edges {
            out.entry(e.caller.as_str()).or_default().insert(e.callee.as_str());
        }
        out
    }

    /// Functions reachable from `start`, `start` included.
    pub fn reachable_from(&self, start: &str) -> BTreeSet<String> {
        let succ = self.successors();
        let mut seen = BTreeSet::from([start.to_string()]);
        let mut queue = VecDeque::from([start]);
        while let Some(f) = queue.pop_front() {
            for &n in succ.get(f).into_iter().flatten() {
                if seen.insert(n.to_string()) {
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Shortest call path from `from` to `to`, both included.
    pub fn path(&self, from: &str, to: &str) -> Option<Vec<String>> {
        let succ = self.successors();
        let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(f) = queue.pop_front() {
            if f == to {
                let mut path = vec![to.to_string()];
                let mut cur = to;
                while let Some(&p) = parent.get(cur) {
                    path.push(p.to_string());
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for &n in succ.get(f).into_iter().flatten() {
                if seen.insert(n) {
                    parent.insert(n, f);
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Some cycle of functions, if the graph has one.
    pub fn find_cycle(&self) -> Option<Vec<String>> {
        let succ = self.successors();
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Open,
            Done,
        }
        let mut marks: BTreeMap<&str, Mark> = BTreeMap::new();
        for start in &self.nodes {
            if marks.contains_key(start.as_str()) {
                continue;
            }
            // iterative DFS keeping the current path
            let mut stack: Vec<(&str, Vec<&str>)> = vec![(
                start,
                succ.get(start.as_str())
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default(),
            )];
            marks.insert(start, Mark::Open);
            while let Some((node, pending)) = stack.last_mut() {
                match pending.pop() {
                    Some(next) => match marks.get(next) {
                        Some(Mark::Open) => {
                            let mut cycle: Vec<String> = stack.iter().map(|(n, _)| n.to_string()).collect();
                            let at = cycle.iter().position(|n| n == next).unwrap_or(0);
                            cycle.drain(..at);
                            cycle.push(next.to_string());
                            return Some(cycle);
                        }
                        Some(Mark::Done) => {}
                        None => {
                            marks.insert(next, Mark::Open);
                            let nexts = succ.get(next).map(|s| s.iter().copied().collect()).unwrap_or_default();
                            stack.push((next, nexts));
                        }
                    },
                    None => {
                        marks.insert(node, Mark::Done);
                        stack.pop();
                    }
                }
            }
        }
        None
    }

    /// Rename every node through `project`, collapsing clones onto originals.
    pub fn project(&self, project: impl Fn(&str) -> String) -> NativeCallGraph {
        NativeCallGraph {
            nodes: self.nodes.iter().map(|n| project(n)).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| NativeEdge {
                    caller: project(&e.caller),
                    site: e.site,
                    callee: project(&e.callee),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }
}

/// Flow-insensitive sets of function values per parameter, local and
/// record field (fields are keyed by name alone).
#[derive(Debug, Default)]
pub(crate) struct FnFlow {
    pub params: BTreeMap<(String, String), BTreeSet<String>>,
    pub locals: BTreeMap<(String, String), BTreeSet<String>>,
    pub fields: BTreeMap<String, BTreeSet<String>>,
}

impl FnFlow {
    pub fn values(&self, function: &str, op: &Operand) -> BTreeSet<String> {
        let get = |m: &BTreeMap<(String, String), BTreeSet<String>>, n: &str| {
            m.get(&(function.to_string(), n.to_string()))
                .cloned()
                .unwrap_or_default()
        };
        match op {
            Operand::Const(_) => BTreeSet::new(),
            Operand::Fnref(f) => BTreeSet::from([f.clone()]),
            Operand::Param(p) => get(&self.params, p),
            Operand::Local(l) => get(&self.locals, l),
            Operand::Field(_, f) => self.fields.get(f).cloned().unwrap_or_default(),
        }
    }

    pub fn compute(program: &Program) -> FnFlow {
        let mut flow = FnFlow::default();
        let mut changed = true;
        while changed {
            changed = false;
            for f in &program.functions {
                let mut updates: Vec<(Target, BTreeSet<String>)> = Vec::new();
                walk(&f.body, &mut |s| match &s.kind {
                    StmtKind::Assign { dst, src } => {
                        let vals = flow.values(&f.name, src);
                        let target = match dst {
                            Place::Local(l) => Target::Local(f.name.clone(), l.clone()),
                            Place::Field(_, field) => Target::Field(field.clone()),
                        };
                        updates.push((target, vals));
                    }
                    StmtKind::Call { callee, args } => {
                        if let Some(g) = program.function(callee) {
                            for (p, a) in g.params.iter().zip(args) {
                                updates.push((Target::Param(g.name.clone(), p.name.clone()), flow.values(&f.name, a)));
                            }
                        }
                    }
                    StmtKind::CallIndirect { target, args } => {
                        for callee in flow.values(&f.name, &Operand::Param(target.clone())) {
                            if let Some(g) = program.function(&callee) {
                                if g.params.len() != args.len() {
                                    continue;
                                }
                                for (p, a) in g.params.iter().zip(args) {
                                    updates
                                        .push((Target::Param(g.name.clone(), p.name.clone()), flow.values(&f.name, a)));
                                }
                            }
                        }
                    }
                    _ => {}
                });
                for (target, vals) in updates {
                    if vals.is_empty() {
                        continue;
                    }
                    let slot = match target {
                        Target::Param(g, p) => flow.params.entry((g, p)).or_default(),
                        Target::Local(g, l) => flow.locals.entry((g, l)).or_default(),
                        Target::Field(field) => flow.fields.entry(field).or_default(),
                    };
                    for v in vals {
                        changed |= slot.insert(v);
                    }
                }
            }
        }
        flow
    }
}

enum Target {
    Param(String, String),
    Local(String, String),
    Field(String),
}

/// The context-insensitive call graph: every switch branch is taken and an
/// indirect call reaches every function that may flow into its pointer.
pub fn build_base_cg(program: &Program) -> NativeCallGraph {
    let flow = FnFlow::compute(program);
    let mut cg = NativeCallGraph {
        nodes: program.functions.iter().map(|f| f.name.clone()).collect(),
        edges: BTreeSet::new(),
    };
    for f in &program.functions {
        walk(&f.body, &mut |s| match &s.kind {
            StmtKind::Call { callee, .. } => {
                cg.edges.insert(NativeEdge {
                    caller: f.name.clone(),
                    site: s.site,
                    callee: callee.clone(),
                });
            }
            StmtKind::CallIndirect { target, .. } => {
                for callee in flow.values(&f.name, &Operand::Param(target.clone())) {
                    cg.edges.insert(NativeEdge {
                        caller: f.name.clone(),
                        site: s.site,
                        callee,
                    });
                }
            }
            _ => {}
        });
    }
    cg
}

/// Functions a program may hand to the thread pool, per `submit_pool` site.
pub fn pool_task_values(program: &Program) -> BTreeMap<(String, usize), BTreeSet<String>> {
    let flow = FnFlow::compute(program);
    let mut out = BTreeMap::new();
    for f in &program.functions {
        walk(&f.body, &mut |s| {
            if let StmtKind::SubmitPool { task } = &s.kind {
                out.insert((f.name.clone(), s.site), flow.values(&f.name, task));
            }
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloneReason {
    Switch,
    Fnptr,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CloneContext {
    Case(i64),
    Function(String),
}

impl fmt::Display for CloneContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CloneContext::Case(v) => write!(f, "{v}"),
            CloneContext::Function(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CloneRecord {
    pub original: String,
    pub clone: String,
    pub reason: CloneReason,
    pub context: CloneContext,
    /// Position in the cloned call chain; 1 for a clone created directly at
    /// the site that supplies the context.
    pub depth: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneReport {
    pub clones: Vec<CloneRecord>,
    /// Call sites left context-insensitive because the context was not unique.
    pub indeterminate_sites: Vec<(String, usize)>,
}

impl CloneReport {
    pub fn extend(&mut self, other: CloneReport) {
        self.clones.extend(other.clones);
        self.indeterminate_sites.extend(other.indeterminate_sites);
    }

    /// Name of the program function `name` was ultimately cloned from.
    pub fn original_of(&self, name: &str) -> String {
        let map: BTreeMap<&str, &str> = self
            .clones
            .iter()
            .map(|c| (c.clone.as_str(), c.original.as_str()))
            .collect();
        let mut cur = name;
        while let Some(&orig) = map.get(cur) {
            cur = orig;
        }
        cur.to_string()
    }

    pub fn count(&self, reason: CloneReason, original: &str) -> usize {
        self.clones
            .iter()
            .filter(|c| c.reason == reason && c.original == original)
            .count()
    }

    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }
}

/// A fresh function name `base.context`.
pub(crate) fn clone_name(program: &Program, base: &str, context: &CloneContext) -> String {
    let mut name = format!("{base}.{context}");
    while program.function(&name).is_some() {
        name.push('\'');
    }
    name
}

/// Switch specialization, then function-pointer specialization, repeated
/// until neither clones anything. Resolving an indirect call creates direct
/// call sites that can fix a switch selector, and the reverse.
pub fn refine(program: &Program) -> (Program, CloneReport) {
    let mut prog = program.clone();
    let mut report = CloneReport::default();
    loop {
        let (p1, r1) = specialize_switch(&prog);
        let (p2, r2) = specialize_fnptr(&p1);
        let done = r1.clones.is_empty() && r2.clones.is_empty();
        report.clones.extend(r1.clones);
        report.clones.extend(r2.clones);
        let mut open = r1.indeterminate_sites;
        open.extend(r2.indeterminate_sites);
        open.sort();
        open.dedup();
        report.indeterminate_sites = open;
        prog = p2;
        if done {
            return (prog, report);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_calls_no_edges() {
        let p =
            Program::from_json_str(r#"{"functions":[{"name":"f","body":[{"op":"syscall","number":{"const":1}}]}]}"#)
                .unwrap();
        let cg = build_base_cg(&p);
        assert!(cg.edges.is_empty());
        assert_eq!(cg.nodes.len(), 1);
    }

    #[test]
    fn indirect_calls_see_every_flowing_function() {
        let p = Program::from_json_str(
            r#"{"functions":[
              {"name":"a","body":[{"op":"call","callee":"d","args":[{"fnref":"x"}]}]},
              {"name":"b","body":[{"op":"assign","dst":{"local":"t"},"src":{"fnref":"y"}},
                                  {"op":"call","callee":"d","args":[{"local":"t"}]}]},
              {"name":"d","params":[{"name":"fn","kind":"fnptr"}],"body":[{"op":"call_indirect","target":"fn","args":[]}]},
              {"name":"x","body":[]},{"name":"y","body":[]}]}"#,
        )
        .unwrap();
        let cg = build_base_cg(&p);
        let callees: BTreeSet<&str> = cg
            .edges
            .iter()
            .filter(|e| e.caller == "d")
            .map(|e| e.callee.as_str())
            .collect();
        assert_eq!(callees, BTreeSet::from(["x", "y"]));
        assert_eq!(cg.path("b", "y"), Some(vec!["b".into(), "d".into(), "y".into()]));
    }

    #[test]
    fn finds_cycles() {
        let mut cg = NativeCallGraph::default();
        for (a, b) in [("a", "b"), ("b", "c"), ("c", "a")] {
            cg.nodes.insert(a.into());
            cg.edges.insert(NativeEdge {
                caller: a.into(),
                site: 0,
                callee: b.into(),
            });
        }
        let cycle = cg.find_cycle().unwrap();
        assert_eq!(cycle.first(), cycle.last());
        assert_eq!(cycle.len(), 4);
    }
}
