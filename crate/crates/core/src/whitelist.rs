//! Per-thread syscall whitelists with provenance.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{ComposedMapping, MethodKey};
use crate::syscalls::{CommandProfile, EngineBaseline, SyscallTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    PoolRequired,
    PoolFree,
}

/// Why a syscall is on a whitelist.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    EngineBaseline,
    Builtin(MethodKey),
    Command(String),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::EngineBaseline => f.write_str("engine-baseline"),
            Source::Builtin(m) => write!(f, "builtin({m})"),
            Source::Command(c) => write!(f, "command({c})"),
        }
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "engine-baseline" {
            return Ok(Source::EngineBaseline);
        }
        let inner = |prefix: &str| s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')'));
        if let Some(m) = inner("builtin(") {
            return Ok(Source::Builtin(m.parse()?));
        }
        if let Some(c) = inner("command(") {
            return Ok(Source::Command(c.to_string()));
        }
        Err(Error::input(format!("unknown provenance source `{s}`")))
    }
}

impl Serialize for Source {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Source {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Whitelist {
    pub main: BTreeSet<String>,
    pub pool: BTreeSet<String>,
    pub mode: PoolMode,
    pub provenance: BTreeMap<String, BTreeSet<Source>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Whitelist {
    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input(format!("whitelist: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&crate::error::read_to_string(path)?).map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Every syscall allowed on some thread.
    pub fn union(&self) -> BTreeSet<String> {
        self.main.union(&self.pool).cloned().collect()
    }
}

/// What the application needs, as found by the earlier stages.
#[derive(Debug, Clone, Default)]
pub struct WhitelistInputs {
    pub reachable: BTreeSet<MethodKey>,
    pub composed: ComposedMapping,
    pub pool_builtins: BTreeSet<MethodKey>,
    pub commands: Vec<String>,
    pub profile: CommandProfile,
}

/// The executable a command line starts: its first word, without directories.
pub fn binary_of(command: &str) -> &str {
    let first = command.split_whitespace().next().unwrap_or("");
    first.rsplit('/').next().unwrap_or(first)
}

pub fn generate_whitelist(
    inputs: &WhitelistInputs,
    baseline: &EngineBaseline,
    table: &SyscallTable,
    strict: bool,
) -> Result<Whitelist> {
    let mut main = BTreeMap::<String, BTreeSet<Source>>::new();
    let mut pool = BTreeMap::<String, BTreeSet<Source>>::new();
    let mut warnings = Vec::new();
    let add = |set: &mut BTreeMap<String, BTreeSet<Source>>, name: &str, src: &Source| {
        set.entry(name.to_string()).or_default().insert(src.clone());
    };

    for name in &baseline.main {
        add(&mut main, name, &Source::EngineBaseline);
    }
    let pooled = inputs.reachable.iter().any(|m| inputs.pool_builtins.contains(m));
    if pooled {
        for name in &baseline.pool {
            add(&mut pool, name, &Source::EngineBaseline);
        }
    }
    for method in &inputs.reachable {
        let Some(entry) = inputs.composed.get(method) else {
            if strict {
                return Err(Error::analysis(format!("reachable builtin {method} has no mapping")));
            }
            warnings.push(format!("reachable builtin {method} has no mapping"));
            continue;
        };
        let src = Source::Builtin(method.clone());
        for name in &entry.main_syscalls {
            add(&mut main, name, &src);
        }
        for name in &entry.pool_syscalls {
            add(&mut pool, name, &src);
        }
    }
    let binaries: BTreeSet<&str> = inputs
        .commands
        .iter()
        .map(|c| binary_of(c))
        .filter(|b| !b.is_empty())
        .collect();
    for binary in binaries {
        let src = Source::Command(binary.to_string());
        match inputs.profile.get(binary) {
            Some(names) => names.iter().for_each(|n| add(&mut main, n, &src)),
            None if strict => {
                return Err(Error::analysis(format!("command `{binary}` has no syscall profile")));
            }
            None => {
                warnings.push(format!(
                    "command `{binary}` has no syscall profile; allowing the full table"
                ));
                for n in table.names() {
                    add(&mut main, &n, &src);
                }
            }
        }
    }

    for name in main.keys().chain(pool.keys()) {
        if !table.contains(name) {
            return Err(Error::analysis(format!(
                "whitelisted syscall `{name}` is not in the table"
            )));
        }
    }
    let mut provenance = main.clone();
    for (name, srcs) in &pool {
        provenance.entry(name.clone()).or_default().extend(srcs.iter().cloned());
    }
    Ok(Whitelist {
        main: main.into_keys().collect(),
        pool: pool.into_keys().collect(),
        mode: if pooled {
            PoolMode::PoolRequired
        } else {
            PoolMode::PoolFree
        },
        provenance,
        warnings,
    })
}
