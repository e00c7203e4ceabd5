#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use syswall::nir::{Case, Function, Operand, Param, ParamKind, Place, Program, Stmt, StmtKind, Value};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(rel: &str) -> PathBuf {
    fixtures().join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Syscall numbers the generator draws from; all present in the shipped table.
pub const NUMBERS: [i64; 8] = [0, 1, 2, 3, 21, 39, 59, 87];
const FIELDS: [&str; 2] = ["t", "n"];

/// Random loop-free program in three tiers: tops `t*` and workers `w*` take
/// `(req)`, dispatchers `d*` in between take `(req, cb)`. Calls only go to
/// higher-indexed functions and function values always name workers, which
/// come last, so the call graph is acyclic whatever flows where. Entries are
/// tops.
pub fn random_program(rng: &mut ChaCha8Rng) -> Program {
    let n_top = rng.gen_range(2..=3);
    let n_disp = rng.gen_range(1..=3);
    let n_work = rng.gen_range(2..=5);
    let names: Vec<String> = (0..n_top)
        .map(|i| format!("t{i}"))
        .chain((0..n_disp).map(|i| format!("d{i}")))
        .chain((0..n_work).map(|i| format!("w{i}")))
        .collect();
    let disp = n_top..n_top + n_disp;
    let mut functions = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let dispatcher = disp.contains(&i);
        let mut params = vec![Param {
            name: "req".into(),
            kind: ParamKind::Value,
        }];
        if dispatcher {
            params.push(Param {
                name: "cb".into(),
                kind: ParamKind::Fnptr,
            });
        }
        let ctx = Ctx {
            index: i,
            disp: disp.clone(),
            names: &names,
        };
        let len = rng.gen_range(1..=5);
        let body = (0..len).map(|_| ctx.stmt(rng, 0)).collect();
        functions.push(Function {
            name: name.clone(),
            params,
            body,
        });
    }
    let mut program = Program {
        functions,
        bindings: Vec::new(),
        entries: names[..n_top].to_vec(),
    };
    program.number_sites();
    program.validate().expect("generated program is valid");
    program
}

struct Ctx<'a> {
    index: usize,
    disp: std::ops::Range<usize>,
    names: &'a [String],
}

impl Ctx<'_> {
    fn dispatcher(&self) -> bool {
        self.disp.contains(&self.index)
    }

    fn pick(&self, rng: &mut ChaCha8Rng, candidates: Vec<usize>) -> Option<String> {
        candidates.choose(rng).map(|&i| self.names[i].clone())
    }

    fn later_plain(&self, rng: &mut ChaCha8Rng) -> Option<String> {
        let c = (self.index + 1..self.names.len())
            .filter(|i| !self.disp.contains(i))
            .collect();
        self.pick(rng, c)
    }

    fn later_dispatcher(&self, rng: &mut ChaCha8Rng) -> Option<String> {
        let c = (self.index + 1..self.disp.end)
            .filter(|i| self.disp.contains(i))
            .collect();
        self.pick(rng, c)
    }

    /// A function value: a later worker, or the incoming `cb`.
    fn fn_value(&self, rng: &mut ChaCha8Rng) -> Option<Operand> {
        if self.dispatcher() && rng.gen_bool(0.5) {
            return Some(Operand::Param("cb".into()));
        }
        let c = (self.index.max(self.disp.end - 1) + 1..self.names.len()).collect();
        self.pick(rng, c).map(Operand::Fnref)
    }

    fn stmt(&self, rng: &mut ChaCha8Rng, depth: usize) -> Stmt {
        loop {
            let kind = match rng.gen_range(0..9) {
                0 | 1 => Some(StmtKind::Assign {
                    dst: Place::Field("req".into(), FIELDS.choose(rng).unwrap().to_string()),
                    src: Operand::Const(*NUMBERS.choose(rng).unwrap()),
                }),
                2 => Some(StmtKind::Syscall {
                    number: if rng.gen_bool(0.6) {
                        Operand::Const(*NUMBERS.choose(rng).unwrap())
                    } else {
                        Operand::Field("req".into(), "n".into())
                    },
                }),
                3 => self.later_plain(rng).map(|callee| StmtKind::Call {
                    callee,
                    args: vec![Operand::Param("req".into())],
                }),
                4 | 5 => match (self.later_dispatcher(rng), self.fn_value(rng)) {
                    (Some(callee), Some(cb)) => Some(StmtKind::Call {
                        callee,
                        args: vec![Operand::Param("req".into()), cb],
                    }),
                    _ => None,
                },
                6 if self.dispatcher() => Some(StmtKind::CallIndirect {
                    target: "cb".into(),
                    args: vec![Operand::Param("req".into())],
                }),
                7 => self.fn_value(rng).map(|task| StmtKind::SubmitPool { task }),
                8 if depth < 2 => {
                    let k = rng.gen_range(1..=3);
                    let mut values: Vec<i64> = NUMBERS.choose_multiple(rng, k).copied().collect();
                    values.sort();
                    let cases = values
                        .into_iter()
                        .map(|value| Case {
                            value,
                            body: (0..rng.gen_range(0..=2)).map(|_| self.stmt(rng, depth + 1)).collect(),
                        })
                        .collect();
                    let default_body = (0..rng.gen_range(0..=1)).map(|_| self.stmt(rng, depth + 1)).collect();
                    Some(StmtKind::Switch {
                        selector: Operand::Field("req".into(), FIELDS.choose(rng).unwrap().to_string()),
                        cases,
                        default_body,
                    })
                }
                _ => None,
            };
            if let Some(kind) = kind {
                return Stmt::new(kind);
            }
        }
    }
}

/// Concrete entry argument with every field defined.
pub fn random_request(rng: &mut ChaCha8Rng) -> Value {
    Value::Record(
        FIELDS
            .iter()
            .map(|f| (f.to_string(), Value::Int(*NUMBERS.choose(rng).unwrap())))
            .collect(),
    )
}

/// Functions reachable from `entry` by an exhaustive walk of the program
/// text, following every direct call, fnref and indirect call target
/// regardless of control flow.
pub fn textual_callees(program: &Program) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for f in &program.functions {
        let set = out.entry(f.name.clone()).or_default();
        syswall::nir::walk(&f.body, &mut |s| {
            if let StmtKind::Call { callee, .. } = &s.kind {
                set.insert(callee.clone());
            }
        });
    }
    out
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
