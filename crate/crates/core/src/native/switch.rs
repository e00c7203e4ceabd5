//! Switch specialization: call sites that fix a switch selector to one
//! constant are redirected to a clone holding only the matching branch.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::flow::{query, CallerIndex, Source};
use super::{build_base_cg, clone_name, CloneContext, CloneReason, CloneRecord, CloneReport};
use crate::nir::{walk, Function, Operand, ParamKind, Program, Stmt, StmtKind};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwitchCandidate {
    /// The function holding the switch.
    pub function: String,
    pub caller: String,
    pub site: usize,
    pub constant: i64,
}

fn direct_callees(body: &[Stmt]) -> BTreeSet<&str> {
    let mut out = BTreeSet::new();
    walk(body, &mut |s| {
        if let StmtKind::Call { callee, .. } = &s.kind {
            out.insert(callee.as_str());
        }
    });
    out
}

/// The first switch of `f` whose branches call different functions and
/// whose selector is an incoming parameter or parameter field.
pub(crate) fn switch_pattern(f: &Function) -> Option<(usize, Source)> {
    let mut found = None;
    walk(&f.body, &mut |s| {
        if found.is_some() {
            return;
        }
        if let StmtKind::Switch {
            selector,
            cases,
            default_body,
        } = &s.kind
        {
            let sets: BTreeSet<BTreeSet<&str>> = cases
                .iter()
                .map(|c| direct_callees(&c.body))
                .chain(std::iter::once(direct_callees(default_body)))
                .collect();
            if sets.len() < 2 {
                return;
            }
            let src = query(f, s.site, selector);
            let param = match &src {
                Source::Param(p) | Source::Field(p, _) => p,
                _ => return,
            };
            if matches!(f.param(param), Some((_, p)) if p.kind == ParamKind::Value) {
                found = Some((s.site, src));
            }
        }
    });
    found
}

/// Where the selector comes from at a call site of the switch function, in
/// terms of the caller's own state.
fn source_at_call(callee: &Function, src: &Source, caller: &Function, site: usize) -> Source {
    let (p, field) = match src {
        Source::Param(p) => (p, None),
        Source::Field(p, x) => (p, Some(x)),
        _ => return Source::Unknown,
    };
    let Some((idx, _)) = callee.param(p) else {
        return Source::Unknown;
    };
    let Some(arg) = caller
        .stmt_at(site)
        .and_then(super::flow::call_args)
        .and_then(|a| a.get(idx))
    else {
        return Source::Unknown;
    };
    match (field, arg) {
        (None, a) => query(caller, site, a),
        (Some(x), Operand::Param(q)) => query(caller, site, &Operand::Field(q.clone(), x.clone())),
        _ => Source::Unknown,
    }
}

fn direct_call_sites<'a>(program: &'a Program, callee: &'a str) -> Vec<(&'a Function, usize)> {
    let mut out = Vec::new();
    for f in &program.functions {
        walk(&f.body, &mut |s| {
            if matches!(&s.kind, StmtKind::Call { callee: c, .. } if c == callee) {
                out.push((f, s.site));
            }
        });
    }
    out
}

/// Switch functions paired with each direct call site whose caller assigns
/// the selector source a constant before the call.
pub fn find_switch_candidates(program: &Program) -> Vec<SwitchCandidate> {
    let mut out = Vec::new();
    for f in &program.functions {
        let Some((_, src)) = switch_pattern(f) else { continue };
        for (caller, site) in direct_call_sites(program, &f.name) {
            if let Source::Known(Operand::Const(c)) = source_at_call(f, &src, caller, site) {
                out.push(SwitchCandidate {
                    function: f.name.clone(),
                    caller: caller.name.clone(),
                    site,
                    constant: c,
                });
            }
        }
    }
    out.sort();
    out
}

fn splice_case(body: &mut Vec<Stmt>, site: usize, value: i64) -> bool {
    for i in 0..body.len() {
        if body[i].site == site {
            let StmtKind::Switch {
                cases, default_body, ..
            } = &body[i].kind
            else {
                return false;
            };
            let chosen = cases
                .iter()
                .find(|c| c.value == value)
                .map(|c| c.body.clone())
                .unwrap_or_else(|| default_body.clone());
            body.splice(i..=i, chosen);
            return true;
        }
        if let StmtKind::Switch {
            cases, default_body, ..
        } = &mut body[i].kind
        {
            for c in cases.iter_mut() {
                if splice_case(&mut c.body, site, value) {
                    return true;
                }
            }
            if splice_case(default_body, site, value) {
                return true;
            }
        }
    }
    false
}

pub(crate) fn redirect(program: &mut Program, caller: &str, site: usize, to: &str) {
    let f = program
        .functions
        .iter_mut()
        .find(|f| f.name == caller)
        .expect("redirect inside a known function");
    crate::nir::walk_mut(&mut f.body, &mut |s| {
        if s.site == site {
            if let StmtKind::Call { callee, .. } = &mut s.kind {
                *callee = to.to_string();
            }
        }
    });
}

/// Redirect every call site with a uniquely determined selector constant to
/// a clone `<fn>.<constant>` that keeps only the matching branch.
pub fn specialize_switch(program: &Program) -> (Program, CloneReport) {
    let mut prog = program.clone();
    let mut report = CloneReport::default();
    let mut clones: BTreeMap<(String, i64), String> = BTreeMap::new();
    loop {
        let cg = build_base_cg(&prog);
        let idx = CallerIndex::new(&prog, &cg);
        let mut redirects = Vec::new();
        let mut indeterminate = Vec::new();
        for f in &prog.functions {
            let Some((switch_site, src)) = switch_pattern(f) else {
                continue;
            };
            for (caller, site) in direct_call_sites(&prog, &f.name) {
                let at_call = source_at_call(f, &src, caller, site);
                match idx.resolve(&caller.name, &at_call) {
                    Some(set) if set.len() == 1 => match set.into_iter().next() {
                        Some(Operand::Const(c)) => {
                            redirects.push((caller.name.clone(), site, f.name.clone(), switch_site, c))
                        }
                        _ => indeterminate.push((caller.name.clone(), site)),
                    },
                    _ => indeterminate.push((caller.name.clone(), site)),
                }
            }
        }
        if redirects.is_empty() {
            indeterminate.sort();
            report.indeterminate_sites = indeterminate;
            break;
        }
        redirects.sort();
        for (caller, site, original, switch_site, c) in redirects {
            let key = (original.clone(), c);
            let name = match clones.get(&key) {
                Some(n) => n.clone(),
                None => {
                    let context = CloneContext::Case(c);
                    let name = clone_name(&prog, &original, &context);
                    let mut cloned = prog.function(&original).expect("candidate exists").clone();
                    cloned.name = name.clone();
                    splice_case(&mut cloned.body, switch_site, c);
                    prog.functions.push(cloned);
                    report.clones.push(CloneRecord {
                        original: original.clone(),
                        clone: name.clone(),
                        reason: CloneReason::Switch,
                        context,
                        depth: 1,
                    });
                    clones.insert(key, name.clone());
                    name
                }
            };
            redirect(&mut prog, &caller, site, &name);
        }
    }
    (prog, report)
}
