//! Syscall table, engine-required baselines and command profiles.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, Error, Result};

pub const DEFAULT_TABLE_TSV: &str = include_str!("../data/syscalls_x86_64.tsv");
pub const DEFAULT_BASELINE_JSON: &str = include_str!("../data/engine_baseline.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyscallClass {
    Critical,
    Trivial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyscallRow {
    pub number: i64,
    pub name: String,
    pub class: SyscallClass,
    /// Alternative spellings accepted on input.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyscallTable {
    rows: Vec<SyscallRow>,
    by_number: HashMap<i64, usize>,
    by_name: HashMap<String, usize>,
}

impl SyscallTable {
    pub fn new(rows: Vec<SyscallRow>) -> Result<Self> {
        let mut by_number = HashMap::new();
        let mut by_name = HashMap::new();
        for (i, row) in rows.iter().enumerate() {
            if by_number.insert(row.number, i).is_some() {
                return Err(Error::input(format!("syscall table: duplicate number {}", row.number)));
            }
            if by_name.insert(row.name.clone(), i).is_some() {
                return Err(Error::input(format!("syscall table: duplicate name `{}`", row.name)));
            }
        }
        for (i, row) in rows.iter().enumerate() {
            for alias in &row.aliases {
                if by_name.insert(alias.clone(), i).is_some() {
                    return Err(Error::input(format!("syscall table: alias `{alias}` clashes")));
                }
            }
        }
        Ok(SyscallTable {
            rows,
            by_number,
            by_name,
        })
    }

    /// Parse `number<TAB>name<TAB>class[<TAB>alias,alias]`; `#` starts a comment line.
    pub fn from_tsv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::input(format!("syscall table line {}: {what}", i + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            if !(3..=4).contains(&cols.len()) {
                return Err(bad("expected 3 or 4 tab-separated columns"));
            }
            let number = cols[0].trim().parse().map_err(|_| bad("bad number"))?;
            let class = match cols[2].trim() {
                "critical" => SyscallClass::Critical,
                "trivial" => SyscallClass::Trivial,
                other => return Err(bad(&format!("unknown class `{other}`"))),
            };
            let aliases = cols
                .get(3)
                .map(|a| {
                    a.split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(String::from)
                        .collect()
                })
                .unwrap_or_default();
            rows.push(SyscallRow {
                number,
                name: cols[1].trim().to_string(),
                class,
                aliases,
            });
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv_str(&read_to_string(path)?).map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn default_x86_64() -> Self {
        Self::from_tsv_str(DEFAULT_TABLE_TSV).expect("shipped table is valid")
    }

    pub fn rows(&self) -> &[SyscallRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn name_of(&self, number: i64) -> Option<&str> {
        self.by_number.get(&number).map(|&i| self.rows[i].name.as_str())
    }

    pub fn row(&self, name: &str) -> Option<&SyscallRow> {
        self.by_name.get(name).map(|&i| &self.rows[i])
    }

    /// The table's spelling of `name`, resolving aliases.
    pub fn canonical(&self, name: &str) -> Option<&str> {
        self.row(name).map(|r| r.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn class_of(&self, name: &str) -> Option<SyscallClass> {
        self.row(name).map(|r| r.class)
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.rows.iter().map(|r| r.name.clone()).collect()
    }

    pub fn critical(&self) -> BTreeSet<String> {
        self.rows
            .iter()
            .filter(|r| r.class == SyscallClass::Critical)
            .map(|r| r.name.clone())
            .collect()
    }

    /// Canonicalize a list of names, failing on the first unknown one.
    pub fn canonicalize<'a>(
        &self,
        names: impl IntoIterator<Item = &'a String>,
        what: &str,
    ) -> Result<BTreeSet<String>> {
        names
            .into_iter()
            .map(|n| {
                self.canonical(n)
                    .map(str::to_string)
                    .ok_or_else(|| Error::input(format!("{what}: unknown syscall `{n}`")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineBaseline {
    pub main: BTreeSet<String>,
    pub pool: BTreeSet<String>,
}

#[derive(Deserialize)]
struct RawBaseline {
    main: Vec<String>,
    pool: Vec<String>,
}

impl EngineBaseline {
    /// Parse and canonicalize names through `table`. Duplicates after
    /// canonicalization are rejected so the set size equals the listed count.
    pub fn from_json_str(text: &str, table: &SyscallTable) -> Result<Self> {
        let raw: RawBaseline = serde_json::from_str(text).map_err(|e| Error::input(format!("engine baseline: {e}")))?;
        let main = table.canonicalize(&raw.main, "engine baseline (main)")?;
        let pool = table.canonicalize(&raw.pool, "engine baseline (pool)")?;
        if main.len() != raw.main.len() || pool.len() != raw.pool.len() {
            return Err(Error::input("engine baseline: duplicate names"));
        }
        Ok(EngineBaseline { main, pool })
    }

    pub fn load(path: &Path, table: &SyscallTable) -> Result<Self> {
        Self::from_json_str(&read_to_string(path)?, table).map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn default_for(table: &SyscallTable) -> Result<Self> {
        Self::from_json_str(DEFAULT_BASELINE_JSON, table)
    }
}

/// Syscalls recorded per command binary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommandProfile {
    pub commands: BTreeMap<String, BTreeSet<String>>,
}

impl CommandProfile {
    pub fn from_json_str(text: &str, table: &SyscallTable) -> Result<Self> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(text).map_err(|e| Error::input(format!("command profile: {e}")))?;
        let mut commands = BTreeMap::new();
        for (bin, names) in raw {
            let set = table.canonicalize(&names, &format!("command profile `{bin}`"))?;
            commands.insert(bin, set);
        }
        Ok(CommandProfile { commands })
    }

    pub fn load(path: &Path, table: &SyscallTable) -> Result<Self> {
        Self::from_json_str(&read_to_string(path)?, table).map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn get(&self, binary: &str) -> Option<&BTreeSet<String>> {
        self.commands.get(binary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_has_335_rows_and_17_critical() {
        let t = SyscallTable::default_x86_64();
        assert_eq!(t.len(), 335);
        let critical = t.critical();
        let expected: BTreeSet<String> = [
            "clone", "execveat", "execve", "munmap", "fork", "chmod", "mprotect", "setgid", "setreuid", "setuid",
            "accept4", "accept", "bind", "connect", "listen", "recvfrom", "socket",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(critical, expected);
        assert_eq!(t.name_of(59), Some("execve"));
        assert_eq!(t.canonical("fsstat"), Some("fstat"));
    }

    #[test]
    fn shipped_baseline_keeps_listed_counts() {
        let t = SyscallTable::default_x86_64();
        let b = EngineBaseline::default_for(&t).unwrap();
        assert_eq!(b.main.len(), 29);
        assert_eq!(b.pool.len(), 15);
        assert!(b.main.contains("fstat"));
    }

    #[test]
    fn rejects_duplicates_and_bad_rows() {
        assert!(SyscallTable::from_tsv_str("0\tread\ttrivial\n1\tread\ttrivial\n").is_err());
        assert!(SyscallTable::from_tsv_str("0\tread\ttrivial\n0\twrite\ttrivial\n").is_err());
        assert!(SyscallTable::from_tsv_str("0\tread\tharmless\n").is_err());
        assert!(SyscallTable::from_tsv_str("x\tread\ttrivial\n").is_err());
    }

    #[test]
    fn profile_names_must_exist() {
        let t = SyscallTable::default_x86_64();
        assert!(CommandProfile::from_json_str(r#"{"ls":["getdents64"]}"#, &t).is_ok());
        assert!(CommandProfile::from_json_str(r#"{"ls":["nosuchcall"]}"#, &t).is_err());
    }
}
