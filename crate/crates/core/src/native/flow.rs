//! Backward must-dataflow over loop-free NIR bodies.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};

use super::{pool_task_values, NativeCallGraph};
use crate::nir::{walk, Function, Operand, Place, Program, Stmt, StmtKind};

/// Where the value of an operand at a program point comes from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    /// A constant or function reference.
    Known(Operand),
    /// The incoming value of a parameter.
    Param(String),
    /// The incoming value of a parameter's field.
    Field(String, String),
    Unknown,
}

/// Statements that may run before `site` in `body`, nearest first.
/// A switch containing `site` is not itself included.
fn preceding(body: &[Stmt], site: usize) -> Option<Vec<&Stmt>> {
    for (i, s) in body.iter().enumerate() {
        if s.site == site {
            return Some(body[..i].iter().rev().collect());
        }
        if let StmtKind::Switch {
            cases, default_body, ..
        } = &s.kind
        {
            let inner = cases
                .iter()
                .map(|c| &c.body[..])
                .chain(std::iter::once(&default_body[..]))
                .find_map(|b| preceding(b, site));
            if let Some(mut v) = inner {
                v.extend(body[..i].iter().rev());
                return Some(v);
            }
        }
    }
    None
}

enum Def<'a> {
    Unique(&'a Stmt, &'a Operand),
    Ambiguous,
    None,
}

fn writes(s: &Stmt, target: &dyn Fn(&Place) -> bool) -> bool {
    let mut found = false;
    walk(std::slice::from_ref(s), &mut |st| {
        if let StmtKind::Assign { dst, .. } = &st.kind {
            found |= target(dst);
        }
    });
    found
}

fn def_before<'a>(f: &'a Function, site: usize, target: &dyn Fn(&Place) -> bool) -> Def<'a> {
    let Some(prev) = preceding(&f.body, site) else {
        return Def::Ambiguous;
    };
    for s in prev {
        match &s.kind {
            StmtKind::Assign { dst, src } if target(dst) => return Def::Unique(s, src),
            StmtKind::Switch { .. } if writes(s, target) => return Def::Ambiguous,
            _ => {}
        }
    }
    Def::None
}

/// Trace `op` at statement `site` of `f` back to a constant, a function
/// reference, or an incoming parameter value.
pub fn query(f: &Function, site: usize, op: &Operand) -> Source {
    match op {
        Operand::Const(_) | Operand::Fnref(_) => Source::Known(op.clone()),
        Operand::Local(l) => match def_before(f, site, &|d| matches!(d, Place::Local(x) if x == l)) {
            Def::Unique(s, src) => query(f, s.site, src),
            _ => Source::Unknown,
        },
        Operand::Param(p) => match def_before(f, site, &|d| matches!(d, Place::Field(x, _) if x == p)) {
            Def::None => Source::Param(p.clone()),
            _ => Source::Unknown,
        },
        Operand::Field(p, x) => match def_before(f, site, &|d| matches!(d, Place::Field(q, y) if q == p && y == x)) {
            Def::Unique(s, src) => query(f, s.site, src),
            Def::None => Source::Field(p.clone(), x.clone()),
            Def::Ambiguous => Source::Unknown,
        },
    }
}

/// The operands passed at a call statement.
pub(crate) fn call_args(s: &Stmt) -> Option<&[Operand]> {
    match &s.kind {
        StmtKind::Call { args, .. } | StmtKind::CallIndirect { args, .. } => Some(args),
        _ => None,
    }
}

/// Callers of every function according to a call graph, used to push
/// parameter sources across call boundaries.
pub struct CallerIndex<'p> {
    program: &'p Program,
    callers: BTreeMap<String, BTreeSet<(String, usize)>>,
    external: BTreeSet<String>,
    memo: RefCell<Memo>,
}

/// Resolved value sets per `(function, source)`; `None` when unresolvable.
type Memo = BTreeMap<(String, Source), Option<BTreeSet<Operand>>>;

impl<'p> CallerIndex<'p> {
    /// Entries, binding targets, pool tasks and functions nobody calls
    /// receive arguments from outside the program and stay unresolved.
    pub fn new(program: &'p Program, cg: &NativeCallGraph) -> Self {
        let mut callers: BTreeMap<String, BTreeSet<(String, usize)>> = BTreeMap::new();
        for e in &cg.edges {
            callers
                .entry(e.callee.clone())
                .or_default()
                .insert((e.caller.clone(), e.site));
        }
        let mut external: BTreeSet<String> = program.entries.iter().cloned().collect();
        external.extend(program.bindings.iter().map(|b| b.function.clone()));
        for tasks in pool_task_values(program).into_values() {
            external.extend(tasks);
        }
        for f in &program.functions {
            if !callers.contains_key(&f.name) {
                external.insert(f.name.clone());
            }
        }
        CallerIndex {
            program,
            callers,
            external,
            memo: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn callers_of(&self, name: &str) -> impl Iterator<Item = &(String, usize)> {
        self.callers.get(name).into_iter().flatten()
    }

    /// Every constant or function reference `src` (observed in `function`)
    /// can take, or `None` when some value comes from outside.
    pub fn resolve(&self, function: &str, src: &Source) -> Option<BTreeSet<Operand>> {
        match src {
            Source::Known(v) => return Some(BTreeSet::from([v.clone()])),
            Source::Unknown => return None,
            Source::Param(_) | Source::Field(..) => {}
        }
        let key = (function.to_string(), src.clone());
        if let Some(hit) = self.memo.borrow().get(&key) {
            return hit.clone();
        }
        let result = self.resolve_uncached(function, src);
        self.memo.borrow_mut().insert(key, result.clone());
        result
    }

    fn resolve_uncached(&self, function: &str, src: &Source) -> Option<BTreeSet<Operand>> {
        if self.external.contains(function) {
            return None;
        }
        let f = self.program.function(function)?;
        let p = match src {
            Source::Param(p) | Source::Field(p, _) => p,
            _ => unreachable!(),
        };
        let (idx, _) = f.param(p)?;
        let mut out = BTreeSet::new();
        for (caller, site) in self.callers_of(function) {
            let cf = self.program.function(caller)?;
            let arg = cf.stmt_at(*site).and_then(call_args)?.get(idx)?;
            let at_caller = match (src, arg) {
                (Source::Param(_), a) => query(cf, *site, a),
                (Source::Field(_, x), Operand::Param(q)) => query(cf, *site, &Operand::Field(q.clone(), x.clone())),
                _ => Source::Unknown,
            };
            out.extend(self.resolve(caller, &at_caller)?);
        }
        Some(out)
    }

    /// Resolve `op` at `site` in `function` to a single value, if unique.
    pub fn unique(&self, function: &Function, site: usize, op: &Operand) -> Option<Operand> {
        let set = self.resolve(&function.name, &query(function, site, op))?;
        if set.len() == 1 {
            set.into_iter().next()
        } else {
            None
        }
    }
}
