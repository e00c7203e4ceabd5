use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::flow::{query, CallerIndex};
use super::NativeCallGraph;
use crate::error::{Error, Result};
use crate::nir::{walk, Operand, Program, StmtKind};
use crate::syscalls::SyscallTable;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyscallResolution {
    /// Syscalls reachable from each function over call edges.
    pub functions: BTreeMap<String, BTreeSet<String>>,
    /// Syscalls issued by each function's own statements.
    pub direct: BTreeMap<String, BTreeSet<String>>,
    pub unresolved_sites: Vec<(String, usize)>,
}

impl SyscallResolution {
    pub fn of(&self, function: &str) -> BTreeSet<String> {
        self.functions.get(function).cloned().unwrap_or_default()
    }

    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }
}

/// Map every function of `cg` to the syscalls it may issue. A syscall
/// number that cannot be pinned to constants is an error when `strict`;
/// otherwise its function is charged the whole table.
pub fn resolve_syscalls(
    program: &Program,
    cg: &NativeCallGraph,
    table: &SyscallTable,
    strict: bool,
) -> Result<SyscallResolution> {
    let idx = CallerIndex::new(program, cg);
    let mut res = SyscallResolution::default();
    for f in program.functions.iter().filter(|f| cg.nodes.contains(&f.name)) {
        let mut own = BTreeSet::new();
        let mut err = None;
        walk(&f.body, &mut |s| {
            let StmtKind::Syscall { number } = &s.kind else { return };
            if err.is_some() {
                return;
            }
            let values = idx
                .resolve(&f.name, &query(f, s.site, number))
                .filter(|set| !set.is_empty() && set.iter().all(|v| matches!(v, Operand::Const(_))));
            match values {
                Some(set) => {
                    for v in set {
                        let Operand::Const(n) = v else { unreachable!() };
                        match table.name_of(n) {
                            Some(name) => {
                                own.insert(name.to_string());
                            }
                            None => {
                                err = Some(Error::analysis(format!(
                                    "function `{}`, statement {}: syscall number {n} is not in the table",
                                    f.name, s.site
                                )))
                            }
                        }
                    }
                }
                None if strict => {
                    err = Some(Error::analysis(format!(
                        "function `{}`, statement {}: syscall number cannot be resolved",
                        f.name, s.site
                    )))
                }
                None => {
                    res.unresolved_sites.push((f.name.clone(), s.site));
                    own.extend(table.names());
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        res.direct.insert(f.name.clone(), own);
    }
    for name in &cg.nodes {
        let mut all = BTreeSet::new();
        for g in cg.reachable_from(name) {
            if let Some(own) = res.direct.get(&g) {
                all.extend(own.iter().cloned());
            }
        }
        res.functions.insert(name.clone(), all);
    }
    res.unresolved_sites.sort();
    Ok(res)
}
