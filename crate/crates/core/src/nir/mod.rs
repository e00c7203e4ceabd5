//! Native intermediate representation for the binding, dependency and libc
//! layers: loop-free functions with direct and indirect calls, switches,
//! syscall statements and thread-pool submissions.

mod interp;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};

pub use interp::{interpret, ExecutionLog, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Value,
    Fnptr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Const(i64),
    Param(String),
    /// `(param, field)`
    Field(String, String),
    Local(String),
    Fnref(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Place {
    Local(String),
    Field(String, String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub value: i64,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StmtKind {
    Assign {
        dst: Place,
        src: Operand,
    },
    Call {
        callee: String,
        #[serde(default)]
        args: Vec<Operand>,
    },
    CallIndirect {
        target: String,
        #[serde(default)]
        args: Vec<Operand>,
    },
    Switch {
        selector: Operand,
        cases: Vec<Case>,
        #[serde(default)]
        default_body: Vec<Stmt>,
    },
    Syscall {
        number: Operand,
    },
    SubmitPool {
        task: Operand,
    },
}

/// A statement with its pre-order index inside the enclosing function.
/// Indices are assigned when a program is loaded and survive cloning, so a
/// clone's call sites keep the indices of the original's.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stmt {
    #[serde(flatten)]
    pub kind: StmtKind,
    #[serde(skip)]
    pub site: usize,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Self {
        Stmt { kind, site: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    #[serde(default)]
    pub params: Vec<Param>,
    #[serde(default)]
    pub body: Vec<Stmt>,
}

impl Function {
    pub fn param(&self, name: &str) -> Option<(usize, &Param)> {
        self.params.iter().enumerate().find(|(_, p)| p.name == name)
    }

    /// Every statement in pre-order.
    pub fn stmts(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        walk(&self.body, &mut |s| out.push(s));
        out
    }

    pub fn stmt_at(&self, site: usize) -> Option<&Stmt> {
        self.stmts().into_iter().find(|s| s.site == site)
    }
}

pub fn walk<'a>(body: &'a [Stmt], visit: &mut dyn FnMut(&'a Stmt)) {
    for s in body {
        visit(s);
        if let StmtKind::Switch {
            cases, default_body, ..
        } = &s.kind
        {
            for c in cases {
                walk(&c.body, visit);
            }
            walk(default_body, visit);
        }
    }
}

pub fn walk_mut(body: &mut [Stmt], visit: &mut dyn FnMut(&mut Stmt)) {
    for s in body {
        visit(s);
        if let StmtKind::Switch {
            cases, default_body, ..
        } = &mut s.kind
        {
            for c in cases {
                walk_mut(&mut c.body, visit);
            }
            walk_mut(default_body, visit);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Binding {
    pub module: String,
    pub method: String,
    pub function: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub functions: Vec<Function>,
    #[serde(default)]
    pub bindings: Vec<Binding>,
    #[serde(default)]
    pub entries: Vec<String>,
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_names(&self) -> BTreeSet<&str> {
        self.functions.iter().map(|f| f.name.as_str()).collect()
    }

    /// Assign pre-order statement indices in every function.
    pub fn number_sites(&mut self) {
        for f in &mut self.functions {
            let mut next = 0;
            walk_mut(&mut f.body, &mut |s| {
                s.site = next;
                next += 1;
            });
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut program: Program = serde_json::from_str(text).map_err(|e| Error::input(format!("NIR: {e}")))?;
        program.number_sites();
        program.validate()?;
        Ok(program)
    }

    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }

    /// Check every structural invariant, including absence of recursion.
    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for f in &self.functions {
            if !names.insert(f.name.as_str()) {
                return Err(Error::input(format!("duplicate function `{}`", f.name)));
            }
        }
        for f in &self.functions {
            validate_function(self, f)?;
        }
        for b in &self.bindings {
            if self.function(&b.function).is_none() {
                return Err(Error::input(format!(
                    "binding {}.{} names unknown function `{}`",
                    b.module, b.method, b.function
                )));
            }
        }
        for e in &self.entries {
            if self.function(e).is_none() {
                return Err(Error::input(format!("entry names unknown function `{e}`")));
            }
        }
        if let Some(cycle) = crate::native::build_base_cg(self).find_cycle() {
            return Err(Error::input(format!(
                "recursion is not allowed: {}",
                cycle.join(" -> ")
            )));
        }
        Ok(())
    }
}

pub fn parse_nir(path: &Path) -> Result<Program> {
    let text = read_to_string(path)?;
    Program::from_json_str(&text).map_err(|e| match e {
        Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

struct Loc<'a> {
    function: &'a str,
    site: usize,
}

impl fmt::Display for Loc<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "function `{}`, statement {}", self.function, self.site)
    }
}

fn validate_function(program: &Program, f: &Function) -> Result<()> {
    let mut params = BTreeSet::new();
    for p in &f.params {
        if !params.insert(p.name.as_str()) {
            return Err(Error::input(format!(
                "function `{}`: duplicate parameter `{}`",
                f.name, p.name
            )));
        }
    }
    let mut locals = BTreeSet::new();
    walk(&f.body, &mut |s| {
        if let StmtKind::Assign {
            dst: Place::Local(name),
            ..
        } = &s.kind
        {
            locals.insert(name.clone());
        }
    });

    let mut result = Ok(());
    walk(&f.body, &mut |s| {
        if result.is_ok() {
            result = validate_stmt(program, f, &locals, s);
        }
    });
    result
}

fn value_param<'a>(f: &'a Function, name: &str, at: &Loc) -> Result<&'a Param> {
    match f.param(name) {
        Some((_, p)) if p.kind == ParamKind::Value => Ok(p),
        Some(_) => Err(Error::input(format!("{at}: fnptr parameter `{name}` used as a value"))),
        None => Err(Error::input(format!("{at}: unknown parameter `{name}`"))),
    }
}

fn check_operand(program: &Program, f: &Function, locals: &BTreeSet<String>, op: &Operand, at: &Loc) -> Result<()> {
    match op {
        Operand::Const(_) => Ok(()),
        Operand::Param(name) => match f.param(name) {
            Some(_) => Ok(()),
            None => Err(Error::input(format!("{at}: unknown parameter `{name}`"))),
        },
        Operand::Field(p, _) => value_param(f, p, at).map(|_| ()),
        Operand::Local(name) if locals.contains(name) => Ok(()),
        Operand::Local(name) => Err(Error::input(format!("{at}: local `{name}` is never assigned"))),
        Operand::Fnref(name) if program.function(name).is_some() => Ok(()),
        Operand::Fnref(name) => Err(Error::input(format!("{at}: fnref to unknown function `{name}`"))),
    }
}

fn is_fnptr_operand(f: &Function, op: &Operand) -> bool {
    match op {
        Operand::Fnref(_) => true,
        Operand::Param(name) => matches!(f.param(name), Some((_, p)) if p.kind == ParamKind::Fnptr),
        _ => false,
    }
}

/// Scalar positions accept anything but function values.
fn check_scalar(program: &Program, f: &Function, locals: &BTreeSet<String>, op: &Operand, at: &Loc) -> Result<()> {
    check_operand(program, f, locals, op, at)?;
    if is_fnptr_operand(f, op) {
        return Err(Error::input(format!(
            "{at}: function value used where a number is expected"
        )));
    }
    Ok(())
}

/// Function positions accept fnrefs, fnptr params and locals.
fn check_function_value(
    program: &Program,
    f: &Function,
    locals: &BTreeSet<String>,
    op: &Operand,
    at: &Loc,
) -> Result<()> {
    check_operand(program, f, locals, op, at)?;
    match op {
        Operand::Fnref(_) | Operand::Local(_) => Ok(()),
        Operand::Param(_) if is_fnptr_operand(f, op) => Ok(()),
        _ => Err(Error::input(format!("{at}: expected a function value"))),
    }
}

fn check_args(
    program: &Program,
    f: &Function,
    locals: &BTreeSet<String>,
    callee: Option<&Function>,
    args: &[Operand],
    at: &Loc,
) -> Result<()> {
    if let Some(callee) = callee {
        if callee.params.len() != args.len() {
            return Err(Error::input(format!(
                "{at}: `{}` takes {} arguments, {} given",
                callee.name,
                callee.params.len(),
                args.len()
            )));
        }
        for (param, arg) in callee.params.iter().zip(args) {
            match param.kind {
                ParamKind::Fnptr => check_function_value(program, f, locals, arg, at)?,
                ParamKind::Value => check_scalar(program, f, locals, arg, at)?,
            }
        }
    } else {
        for arg in args {
            check_operand(program, f, locals, arg, at)?;
        }
    }
    Ok(())
}

fn validate_stmt(program: &Program, f: &Function, locals: &BTreeSet<String>, s: &Stmt) -> Result<()> {
    let at = Loc {
        function: &f.name,
        site: s.site,
    };
    match &s.kind {
        StmtKind::Assign { dst, src } => {
            if let Place::Field(p, _) = dst {
                value_param(f, p, &at)?;
            }
            check_operand(program, f, locals, src, &at)
        }
        StmtKind::Call { callee, args } => {
            let target = program
                .function(callee)
                .ok_or_else(|| Error::input(format!("{at}: call to unknown function `{callee}`")))?;
            check_args(program, f, locals, Some(target), args, &at)
        }
        StmtKind::CallIndirect { target, args } => {
            match f.param(target) {
                Some((_, p)) if p.kind == ParamKind::Fnptr => {}
                _ => {
                    return Err(Error::input(format!(
                        "{at}: call_indirect target `{target}` is not a fnptr parameter"
                    )))
                }
            }
            check_args(program, f, locals, None, args, &at)
        }
        StmtKind::Switch { selector, cases, .. } => {
            check_scalar(program, f, locals, selector, &at)?;
            let mut seen = BTreeSet::new();
            for c in cases {
                if !seen.insert(c.value) {
                    return Err(Error::input(format!("{at}: duplicate case value {}", c.value)));
                }
            }
            Ok(())
        }
        StmtKind::Syscall { number } => check_scalar(program, f, locals, number, &at),
        StmtKind::SubmitPool { task } => check_function_value(program, f, locals, task, &at),
    }
}

/// Group bindings by `(module, method)`.
pub fn bindings_by_method(program: &Program) -> BTreeMap<(String, String), BTreeSet<String>> {
    let mut out: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
    for b in &program.bindings {
        out.entry((b.module.clone(), b.method.clone()))
            .or_default()
            .insert(b.function.clone());
    }
    out
}
