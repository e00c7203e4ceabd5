//! Function-pointer specialization: functions whose pointer parameters end
//! up invoked are cloned per concrete function passed in, top-down along
//! the call chain, until the indirect call becomes a direct one.

use std::collections::{BTreeMap, BTreeSet};

use super::flow::{query, Source};
use super::switch::redirect;
use super::{clone_name, CloneContext, CloneReason, CloneRecord, CloneReport};
use crate::nir::{walk, walk_mut, Function, Operand, ParamKind, Program, StmtKind};

/// `(function, param)` pairs whose value is eventually invoked or submitted.
pub(crate) fn used_fnptr_params(program: &Program) -> BTreeSet<(String, String)> {
    let mut used = BTreeSet::new();
    for f in &program.functions {
        walk(&f.body, &mut |s| match &s.kind {
            StmtKind::CallIndirect { target, .. } => {
                used.insert((f.name.clone(), target.clone()));
            }
            StmtKind::SubmitPool { task } => {
                if let Source::Param(p) = query(f, s.site, task) {
                    used.insert((f.name.clone(), p));
                }
            }
            _ => {}
        });
    }
    let mut changed = true;
    while changed {
        changed = false;
        for f in &program.functions {
            let mut found = Vec::new();
            walk(&f.body, &mut |s| {
                let StmtKind::Call { callee, args } = &s.kind else {
                    return;
                };
                let Some(g) = program.function(callee) else { return };
                for (param, arg) in g.params.iter().zip(args) {
                    if param.kind == ParamKind::Fnptr && used.contains(&(g.name.clone(), param.name.clone())) {
                        if let Source::Param(p) = query(f, s.site, arg) {
                            found.push((f.name.clone(), p));
                        }
                    }
                }
            });
            for pair in found {
                changed |= used.insert(pair);
            }
        }
    }
    used
}

fn substitute(f: &mut Function, bindings: &BTreeMap<String, String>) {
    let subst = |op: &mut Operand| {
        if let Operand::Param(p) = op {
            if let Some(fun) = bindings.get(p) {
                *op = Operand::Fnref(fun.clone());
            }
        }
    };
    walk_mut(&mut f.body, &mut |s| match &mut s.kind {
        StmtKind::Assign { src, .. } => subst(src),
        StmtKind::Call { args, .. } => args.iter_mut().for_each(subst),
        StmtKind::CallIndirect { target, args } => {
            args.iter_mut().for_each(subst);
            if let Some(fun) = bindings.get(target) {
                s.kind = StmtKind::Call {
                    callee: fun.clone(),
                    args: std::mem::take(args),
                };
            }
        }
        StmtKind::Switch { selector, .. } => subst(selector),
        StmtKind::Syscall { number } => subst(number),
        StmtKind::SubmitPool { task } => subst(task),
    });
}

/// Indirect calls through `param` whose argument count does not match `fun`.
fn arity_conflict(program: &Program, f: &Function, param: &str, fun: &str) -> bool {
    let Some(target) = program.function(fun) else {
        return true;
    };
    let mut conflict = false;
    walk(&f.body, &mut |s| {
        if let StmtKind::CallIndirect { target: t, args } = &s.kind {
            conflict |= t == param && args.len() != target.params.len();
        }
    });
    conflict
}

fn fnref_name(op: &Operand) -> Option<&str> {
    match op {
        Operand::Fnref(g) => Some(g.as_str()),
        _ => None,
    }
}

/// Functions reachable from the entries and binding targets over calls and
/// function references; every function when the program names no roots.
fn live_functions(program: &Program) -> BTreeSet<&str> {
    let mut roots: Vec<&str> = program.entries.iter().map(String::as_str).collect();
    roots.extend(program.bindings.iter().map(|b| b.function.as_str()));
    if roots.is_empty() {
        return program.functions.iter().map(|f| f.name.as_str()).collect();
    }
    let mut live = BTreeSet::new();
    while let Some(name) = roots.pop() {
        let Some(f) = program.function(name) else { continue };
        if !live.insert(f.name.as_str()) {
            continue;
        }
        let mut next: Vec<&str> = Vec::new();
        walk(&f.body, &mut |s| match &s.kind {
            StmtKind::Call { callee, args } => {
                next.push(callee.as_str());
                next.extend(args.iter().filter_map(fnref_name));
            }
            StmtKind::CallIndirect { args, .. } => next.extend(args.iter().filter_map(fnref_name)),
            StmtKind::Assign { src, .. } => next.extend(fnref_name(src)),
            StmtKind::SubmitPool { task } => next.extend(fnref_name(task)),
            _ => {}
        });
        roots.extend(next);
    }
    live
}

pub fn specialize_fnptr(program: &Program) -> (Program, CloneReport) {
    let mut prog = program.clone();
    let mut report = CloneReport::default();
    let mut clones: BTreeMap<(String, Vec<(String, String)>), String> = BTreeMap::new();
    let mut depth: BTreeMap<String, usize> = BTreeMap::new();
    loop {
        let used = used_fnptr_params(&prog);
        let mut redirects = Vec::new();
        let mut unresolved = Vec::new();
        for c in &prog.functions {
            walk(&c.body, &mut |s| {
                let StmtKind::Call { callee, args } = &s.kind else {
                    return;
                };
                let Some(d) = prog.function(callee) else { return };
                let mut ctx = Vec::new();
                let mut open = false;
                for (param, arg) in d.params.iter().zip(args) {
                    if !used.contains(&(d.name.clone(), param.name.clone())) {
                        continue;
                    }
                    match query(c, s.site, arg) {
                        Source::Known(Operand::Fnref(fun)) if !arity_conflict(&prog, d, &param.name, &fun) => {
                            ctx.push((param.name.clone(), fun))
                        }
                        _ => open = true,
                    }
                }
                if !ctx.is_empty() {
                    redirects.push((c.name.clone(), s.site, d.name.clone(), ctx));
                } else if open {
                    unresolved.push((c.name.clone(), s.site));
                }
            });
        }
        if redirects.is_empty() {
            // originals whose every caller moved to a clone are dead code
            let live = live_functions(&prog);
            unresolved.retain(|(f, _)| live.contains(f.as_str()));
            unresolved.sort();
            report.indeterminate_sites = unresolved;
            break;
        }
        redirects.sort();
        for (caller, site, original, ctx) in redirects {
            let key = (original.clone(), ctx.clone());
            let name = match clones.get(&key) {
                Some(n) => n.clone(),
                None => {
                    let context =
                        CloneContext::Function(ctx.iter().map(|(_, f)| f.as_str()).collect::<Vec<_>>().join("+"));
                    let name = clone_name(&prog, &original, &context);
                    let mut cloned = prog.function(&original).expect("callee exists").clone();
                    cloned.name = name.clone();
                    substitute(&mut cloned, &ctx.iter().cloned().collect());
                    prog.functions.push(cloned);
                    let d = depth.get(&caller).copied().unwrap_or(0) + 1;
                    depth.insert(name.clone(), d);
                    report.clones.push(CloneRecord {
                        original: original.clone(),
                        clone: name.clone(),
                        reason: CloneReason::Fnptr,
                        context,
                        depth: d,
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
