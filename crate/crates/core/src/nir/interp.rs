use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Operand, ParamKind, Place, Program, Stmt, StmtKind};
use crate::error::{Error, Result};

const MAX_DEPTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Int(i64),
    Fn(String),
    Record(BTreeMap<String, Value>),
    Undef,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionLog {
    /// `(caller, statement index, callee)` in execution order.
    pub call_edges: Vec<(String, usize, String)>,
    pub syscalls: Vec<i64>,
    pub pool_tasks: Vec<String>,
}

struct Frame {
    function: String,
    params: BTreeMap<String, Value>,
    locals: BTreeMap<String, Value>,
}

impl Frame {
    fn eval(&self, op: &Operand) -> Result<Value> {
        Ok(match op {
            Operand::Const(n) => Value::Int(*n),
            Operand::Param(p) => self.params.get(p).cloned().unwrap_or(Value::Undef),
            Operand::Field(p, field) => match self.params.get(p) {
                Some(Value::Record(r)) => r.get(field).cloned().unwrap_or(Value::Undef),
                Some(Value::Undef) | None => Value::Undef,
                Some(other) => {
                    return Err(Error::runtime(format!(
                        "`{}`: field `{field}` read from non-record parameter `{p}` ({other:?})",
                        self.function
                    )))
                }
            },
            Operand::Local(l) => self.locals.get(l).cloned().unwrap_or(Value::Undef),
            Operand::Fnref(f) => Value::Fn(f.clone()),
        })
    }
}

/// Execute `entry` with concrete arguments and log what happens.
pub fn interpret(program: &Program, entry: &str, args: &[Value]) -> Result<ExecutionLog> {
    let f = program
        .function(entry)
        .ok_or_else(|| Error::input(format!("unknown entry `{entry}`")))?;
    if f.params.len() != args.len() {
        return Err(Error::input(format!(
            "`{entry}` takes {} arguments, {} given",
            f.params.len(),
            args.len()
        )));
    }
    for (p, a) in f.params.iter().zip(args) {
        if p.kind == ParamKind::Fnptr {
            match a {
                Value::Fn(name) if program.function(name).is_some() => {}
                _ => {
                    return Err(Error::input(format!(
                        "`{entry}`: fnptr argument `{}` must be a known function, got {a:?}",
                        p.name
                    )))
                }
            }
        }
    }
    let mut log = ExecutionLog::default();
    call(program, entry, args.to_vec(), &mut log, 0)?;
    Ok(log)
}

fn call(program: &Program, name: &str, args: Vec<Value>, log: &mut ExecutionLog, depth: usize) -> Result<()> {
    if depth > MAX_DEPTH {
        return Err(Error::runtime(format!("call depth exceeded at `{name}`")));
    }
    let f = program
        .function(name)
        .ok_or_else(|| Error::runtime(format!("call to unknown function `{name}`")))?;
    if f.params.len() != args.len() {
        return Err(Error::runtime(format!("`{name}` called with {} arguments", args.len())));
    }
    let mut frame = Frame {
        function: name.to_string(),
        params: f.params.iter().map(|p| p.name.clone()).zip(args).collect(),
        locals: BTreeMap::new(),
    };
    exec_block(program, &f.body, &mut frame, log, depth)
}

fn exec_block(program: &Program, body: &[Stmt], frame: &mut Frame, log: &mut ExecutionLog, depth: usize) -> Result<()> {
    for s in body {
        exec(program, s, frame, log, depth)?;
    }
    Ok(())
}

fn exec(program: &Program, s: &Stmt, frame: &mut Frame, log: &mut ExecutionLog, depth: usize) -> Result<()> {
    match &s.kind {
        StmtKind::Assign { dst, src } => {
            let v = frame.eval(src)?;
            match dst {
                Place::Local(l) => {
                    frame.locals.insert(l.clone(), v);
                }
                Place::Field(p, field) => {
                    let slot = frame.params.entry(p.clone()).or_insert(Value::Undef);
                    if *slot == Value::Undef {
                        *slot = Value::Record(BTreeMap::new());
                    }
                    match slot {
                        Value::Record(r) => {
                            r.insert(field.clone(), v);
                        }
                        other => {
                            return Err(Error::runtime(format!(
                                "`{}`: field `{field}` written on non-record parameter `{p}` ({other:?})",
                                frame.function
                            )))
                        }
                    }
                }
            }
        }
        StmtKind::Call { callee, args } => {
            let vals = args.iter().map(|a| frame.eval(a)).collect::<Result<Vec<_>>>()?;
            log.call_edges.push((frame.function.clone(), s.site, callee.clone()));
            call(program, callee, vals, log, depth + 1)?;
        }
        StmtKind::CallIndirect { target, args } => {
            let callee = match frame.eval(&Operand::Param(target.clone()))? {
                Value::Fn(name) => name,
                other => {
                    return Err(Error::runtime(format!(
                        "`{}`, statement {}: fnptr `{target}` is unbound ({other:?})",
                        frame.function, s.site
                    )))
                }
            };
            let vals = args.iter().map(|a| frame.eval(a)).collect::<Result<Vec<_>>>()?;
            log.call_edges.push((frame.function.clone(), s.site, callee.clone()));
            call(program, &callee, vals, log, depth + 1)?;
        }
        StmtKind::Switch {
            selector,
            cases,
            default_body,
        } => {
            let body = match frame.eval(selector)? {
                Value::Int(v) => cases.iter().find(|c| c.value == v).map(|c| &c.body[..]),
                _ => None,
            }
            .unwrap_or(default_body);
            exec_block(program, body, frame, log, depth)?;
        }
        StmtKind::Syscall { number } => match frame.eval(number)? {
            Value::Int(n) => log.syscalls.push(n),
            other => {
                return Err(Error::runtime(format!(
                    "`{}`, statement {}: syscall number is not a constant ({other:?})",
                    frame.function, s.site
                )))
            }
        },
        StmtKind::SubmitPool { task } => match frame.eval(task)? {
            Value::Fn(name) => log.pool_tasks.push(name),
            other => {
                return Err(Error::runtime(format!(
                    "`{}`, statement {}: pool task is not a function ({other:?})",
                    frame.function, s.site
                )))
            }
        },
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_constant_syscall() {
        let p = Program::from_json_str(
            r#"{"functions":[{"name":"main","body":[{"op":"syscall","number":{"const":39}}]}]}"#,
        )
        .unwrap();
        assert_eq!(interpret(&p, "main", &[]).unwrap().syscalls, vec![39]);
    }

    #[test]
    fn field_assignment_reaches_callee_switch() {
        let p = Program::from_json_str(
            r#"{"functions":[
              {"name":"caller","params":[{"name":"req","kind":"value"}],"body":[
                {"op":"assign","dst":{"field":["req","t"]},"src":{"const":2}},
                {"op":"call","callee":"work","args":[{"param":"req"}]}]},
              {"name":"work","params":[{"name":"req","kind":"value"}],"body":[
                {"op":"switch","selector":{"field":["req","t"]},"cases":[
                  {"value":1,"body":[{"op":"syscall","number":{"const":10}}]},
                  {"value":2,"body":[{"op":"syscall","number":{"const":20}}]}],
                 "default_body":[{"op":"syscall","number":{"const":30}}]}]}]}"#,
        )
        .unwrap();
        let log = interpret(&p, "caller", &[Value::Undef]).unwrap();
        assert_eq!(log.syscalls, vec![20]);
        assert_eq!(log.call_edges, vec![("caller".into(), 1, "work".into())]);
        let rec = Value::Record(BTreeMap::from([("t".to_string(), Value::Int(7))]));
        assert_eq!(interpret(&p, "work", &[rec]).unwrap().syscalls, vec![30]);
        assert!(interpret(&p, "work", &[Value::Int(7)]).is_err());
    }

    #[test]
    fn unbound_fnptr_is_runtime_error() {
        let p = Program::from_json_str(
            r#"{"functions":[{"name":"f","params":[{"name":"cb","kind":"fnptr"}],
                "body":[{"op":"call_indirect","target":"cb","args":[]}]}]}"#,
        )
        .unwrap();
        assert!(interpret(&p, "f", &[Value::Int(1)]).unwrap_err().is_input());
        // no call site binds cb, so validation cannot see the self-call; the depth guard does
        assert!(interpret(&p, "f", &[Value::Fn("f".into())]).is_err());
    }
}
