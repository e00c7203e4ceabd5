//! Filter policy documents and their line-oriented `.rules` form.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::whitelist::{PoolMode, Whitelist};

pub const POLICY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Kill,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadPoints {
    pub pool: String,
    pub main: String,
}

impl Default for LoadPoints {
    fn default() -> Self {
        LoadPoints {
            pool: "after_pool_init".into(),
            main: "before_app_load".into(),
        }
    }
}

/// Directory confinement hint carried along with the filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FsAdvisory {
    pub root_dir: PathBuf,
    pub read_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub version: u32,
    pub default_action: Action,
    pub main_allow: Vec<String>,
    pub pool_allow: Vec<String>,
    pub load_points: LoadPoints,
    pub mode: PoolMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs_advisory: Option<FsAdvisory>,
}

pub fn emit_policy(wl: &Whitelist, fs_advisory: Option<FsAdvisory>) -> Policy {
    let pool_allow = match wl.mode {
        PoolMode::PoolRequired => wl.pool.iter().cloned().collect(),
        PoolMode::PoolFree => Vec::new(),
    };
    Policy {
        version: POLICY_VERSION,
        default_action: Action::Kill,
        main_allow: wl.main.iter().cloned().collect(),
        pool_allow,
        load_points: LoadPoints::default(),
        mode: wl.mode,
        fs_advisory,
    }
}

impl Policy {
    pub fn main_set(&self) -> BTreeSet<&str> {
        self.main_allow.iter().map(String::as_str).collect()
    }

    pub fn pool_set(&self) -> BTreeSet<&str> {
        self.pool_allow.iter().map(String::as_str).collect()
    }

    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let p: Policy = serde_json::from_str(text).map_err(|e| Error::input(format!("policy: {e}")))?;
        p.check()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_to_string(path)?;
        let parsed = if path.extension().is_some_and(|e| e == "rules") {
            Self::from_rules(&text)
        } else {
            Self::from_json_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn check(&self) -> Result<()> {
        if self.version != POLICY_VERSION {
            return Err(Error::input(format!(
                "policy version {} is not supported",
                self.version
            )));
        }
        for (what, list) in [("main", &self.main_allow), ("pool", &self.pool_allow)] {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::input(format!("{what} allow list is not sorted and unique")));
            }
        }
        if self.mode == PoolMode::PoolFree && !self.pool_allow.is_empty() {
            return Err(Error::input("pool_free policy with a pool allow list"));
        }
        Ok(())
    }

    /// Sectioned text: a header, then one `allow <name>` line per syscall.
    /// The pool section is left out for pool-free policies.
    pub fn to_rules(&self) -> String {
        let mut out = format!(
            "version {}\ndefault kill\nmode {}\n",
            self.version,
            mode_name(self.mode)
        );
        if let Some(a) = &self.fs_advisory {
            out.push_str(&format!(
                "fs_root {}\nfs_read_only {}\n",
                a.root_dir.display(),
                a.read_only
            ));
        }
        if self.mode == PoolMode::PoolRequired {
            out.push_str(&format!("\n[pool] {}\n", self.load_points.pool));
            for n in &self.pool_allow {
                out.push_str(&format!("allow {n}\n"));
            }
        }
        out.push_str(&format!("\n[main] {}\n", self.load_points.main));
        for n in &self.main_allow {
            out.push_str(&format!("allow {n}\n"));
        }
        out
    }

    pub fn from_rules(text: &str) -> Result<Self> {
        let mut version = None;
        let mut mode = None;
        let mut root = None;
        let mut read_only = None;
        let mut load_points = LoadPoints::default();
        let mut main = BTreeSet::new();
        let mut pool = BTreeSet::new();
        let mut section: Option<bool> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::input(format!("rules line {}: cannot parse `{line}`", i + 1));
            let (word, rest) = line.split_once(' ').map(|(w, r)| (w, r.trim())).unwrap_or((line, ""));
            match word {
                "version" => version = Some(rest.parse().map_err(|_| bad())?),
                "default" if rest == "kill" => {}
                "mode" => {
                    mode = Some(match rest {
                        "pool_required" => PoolMode::PoolRequired,
                        "pool_free" => PoolMode::PoolFree,
                        _ => return Err(bad()),
                    })
                }
                "fs_root" => root = Some(PathBuf::from(rest)),
                "fs_read_only" => read_only = Some(rest.parse::<bool>().map_err(|_| bad())?),
                "[main]" => {
                    load_points.main = rest.to_string();
                    section = Some(true);
                }
                "[pool]" => {
                    load_points.pool = rest.to_string();
                    section = Some(false);
                }
                "allow" if !rest.is_empty() && !rest.contains(' ') => match section {
                    Some(true) => {
                        main.insert(rest.to_string());
                    }
                    Some(false) => {
                        pool.insert(rest.to_string());
                    }
                    None => return Err(bad()),
                },
                _ => return Err(bad()),
            }
        }
        let fs_advisory = match (root, read_only) {
            (Some(root_dir), Some(read_only)) => Some(FsAdvisory { root_dir, read_only }),
            (None, None) => None,
            _ => return Err(Error::input("rules: fs_root and fs_read_only must appear together")),
        };
        let p = Policy {
            version: version.ok_or_else(|| Error::input("rules: missing version line"))?,
            default_action: Action::Kill,
            main_allow: main.into_iter().collect(),
            pool_allow: pool.into_iter().collect(),
            load_points,
            mode: mode.ok_or_else(|| Error::input("rules: missing mode line"))?,
            fs_advisory,
        };
        p.check()?;
        Ok(p)
    }
}

fn mode_name(mode: PoolMode) -> &'static str {
    match mode {
        PoolMode::PoolRequired => "pool_required",
        PoolMode::PoolFree => "pool_free",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wl(main: &[&str], pool: &[&str], mode: PoolMode) -> Whitelist {
        Whitelist {
            main: main.iter().map(|s| s.to_string()).collect(),
            pool: pool.iter().map(|s| s.to_string()).collect(),
            mode,
            provenance: Default::default(),
            warnings: vec![],
        }
    }

    #[test]
    fn pool_free_rules_have_no_pool_section() {
        let p = emit_policy(&wl(&["read", "write"], &[], PoolMode::PoolFree), None);
        let text = p.to_rules();
        assert!(!text.contains("[pool]"));
        assert_eq!(Policy::from_rules(&text).unwrap(), p);
    }

    #[test]
    fn advisory_survives_both_forms() {
        let adv = FsAdvisory {
            root_dir: "/srv/app".into(),
            read_only: true,
        };
        let p = emit_policy(&wl(&["read"], &["futex"], PoolMode::PoolRequired), Some(adv));
        assert_eq!(Policy::from_rules(&p.to_rules()).unwrap(), p);
        assert_eq!(Policy::from_json_str(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn rejects_allow_outside_section() {
        assert!(Policy::from_rules("version 1\nmode pool_free\nallow read\n").is_err());
        assert!(Policy::from_rules("version 1\nmode pool_free\n\n[pool] x\nallow read\n").is_err());
    }
}
