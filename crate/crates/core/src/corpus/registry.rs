//! Builtin-method execution patterns: which arguments of a builtin method are
//! invoked as callbacks, and which methods produce new function values.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::error::{read_to_string, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ArgPosition {
    Index(usize),
    Last,
}

impl ArgPosition {
    /// Concrete argument index at a call site with `argc` arguments.
    pub fn resolve(self, argc: usize) -> Option<usize> {
        match self {
            ArgPosition::Index(i) if i < argc => Some(i),
            ArgPosition::Index(_) => None,
            ArgPosition::Last => argc.checked_sub(1),
        }
    }
}

impl Serialize for ArgPosition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ArgPosition::Index(i) => s.serialize_u64(*i as u64),
            ArgPosition::Last => s.serialize_str("LAST"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegistryEntry {
    pub owner: String,
    pub method: String,
    pub callback_args: Vec<ArgPosition>,
    pub creates_function: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct BuiltinRegistry {
    entries: Vec<RegistryEntry>,
}

#[derive(Deserialize)]
struct RawEntry {
    owner: String,
    method: String,
    #[serde(default)]
    callback_args: Vec<Value>,
    #[serde(default)]
    creates_function: bool,
}

pub const DEFAULT_REGISTRY_JSON: &str = include_str!("../../data/registry.json");

impl BuiltinRegistry {
    pub fn new(entries: Vec<RegistryEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (i, e) in entries.iter().enumerate() {
            if !seen.insert((e.owner.as_str(), e.method.as_str())) {
                return Err(Error::input(format!(
                    "registry entry {i}: duplicate ({}, {})",
                    e.owner, e.method
                )));
            }
        }
        Ok(BuiltinRegistry { entries })
    }

    pub fn empty() -> Self {
        BuiltinRegistry::default()
    }

    /// The registry shipped with the crate.
    pub fn default_registry() -> Self {
        Self::from_json_str(DEFAULT_REGISTRY_JSON).expect("shipped registry is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(Self::empty());
        }
        let raw: Vec<Value> = serde_json::from_str(text).map_err(|e| Error::input(format!("registry: {e}")))?;
        let mut entries = Vec::with_capacity(raw.len());
        for (i, value) in raw.into_iter().enumerate() {
            let entry: RawEntry =
                serde_json::from_value(value).map_err(|e| Error::input(format!("registry entry {i}: {e}")))?;
            let mut callback_args = Vec::with_capacity(entry.callback_args.len());
            for pos in &entry.callback_args {
                let parsed = match pos {
                    Value::String(s) if s == "LAST" => ArgPosition::Last,
                    Value::Number(n) => match n.as_u64() {
                        Some(idx) => ArgPosition::Index(idx as usize),
                        None => {
                            return Err(Error::input(format!(
                                "registry entry {i}: callback position {n} is not a non-negative index"
                            )))
                        }
                    },
                    other => {
                        return Err(Error::input(format!(
                            "registry entry {i}: unknown callback position marker {other}"
                        )))
                    }
                };
                callback_args.push(parsed);
            }
            entries.push(RegistryEntry {
                owner: entry.owner,
                method: entry.method,
                callback_args,
                creates_function: entry.creates_function,
            });
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, owner: &str, method: &str) -> Option<&RegistryEntry> {
        self.entries.iter().find(|e| e.owner == owner && e.method == method)
    }

    /// Entries a call record matches. An owner of `*` stands for an unknown
    /// receiver and matches by method name alone.
    pub fn matching<'a>(&'a self, owner: &'a str, method: &'a str) -> impl Iterator<Item = &'a RegistryEntry> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.method == method && (owner == "*" || e.owner == owner))
    }

    pub fn creates_function(&self, owner: &str, method: &str) -> bool {
        self.matching(owner, method).any(|e| e.creates_function)
    }
}

/// Load and validate a registry file.
pub fn load_registry(path: &Path) -> Result<BuiltinRegistry> {
    let text = read_to_string(path)?;
    BuiltinRegistry::from_json_str(&text).map_err(|e| match e {
        Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_last_marker_and_indices() {
        let reg = BuiltinRegistry::from_json_str(
            r#"[{"owner":"child_process","method":"exec","callback_args":["LAST"],"creates_function":false},
                {"owner":"Array","method":"map","callback_args":[0],"creates_function":false}]"#,
        )
        .unwrap();
        assert_eq!(
            reg.get("child_process", "exec").unwrap().callback_args,
            vec![ArgPosition::Last]
        );
        assert_eq!(
            reg.get("Array", "map").unwrap().callback_args,
            vec![ArgPosition::Index(0)]
        );
    }

    #[test]
    fn empty_file_is_empty_registry() {
        assert!(BuiltinRegistry::from_json_str("").unwrap().is_empty());
        assert!(BuiltinRegistry::from_json_str("  \n").unwrap().is_empty());
    }

    #[test]
    fn rejects_negative_index_with_entry_number() {
        let err = BuiltinRegistry::from_json_str(
            r#"[{"owner":"a","method":"b","callback_args":[0]},{"owner":"a","method":"c","callback_args":[-1]}]"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("entry 1"), "{err}");
    }

    #[test]
    fn rejects_unknown_marker() {
        let err =
            BuiltinRegistry::from_json_str(r#"[{"owner":"a","method":"b","callback_args":["FIRST"]}]"#).unwrap_err();
        assert!(err.to_string().contains("unknown callback position marker"), "{err}");
    }

    #[test]
    fn rejects_duplicate_pairs() {
        let err =
            BuiltinRegistry::from_json_str(r#"[{"owner":"a","method":"b"},{"owner":"a","method":"b"}]"#).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn last_resolves_against_arity() {
        assert_eq!(ArgPosition::Last.resolve(3), Some(2));
        assert_eq!(ArgPosition::Last.resolve(0), None);
        assert_eq!(ArgPosition::Index(1).resolve(1), None);
    }

    #[test]
    fn shipped_registry_loads() {
        let reg = BuiltinRegistry::from_json_str(include_str!("../../data/registry.json")).unwrap();
        assert!(reg.get("Promise", "then").is_some());
        assert!(reg.get("Function", "bind").unwrap().creates_function);
    }
}
