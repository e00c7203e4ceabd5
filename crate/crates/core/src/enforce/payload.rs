use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{simulate, Event, EventTrace, Outcome, ThreadId, DEFAULT_POOL_SIZE, MAIN_THREAD};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::whitelist::PoolMode;

/// Payload categories with the syscall each one cannot do without.
pub const CATEGORIES: [(&str, &str); 7] = [
    ("exec", "execve"),
    ("fork", "fork"),
    ("setgid", "setgid"),
    ("setuid", "setuid"),
    ("connect", "connect"),
    ("listen", "listen"),
    ("bind", "bind"),
];

pub const DEFAULT_PAYLOADS_JSON: &str = include_str!("../../data/payloads.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    pub name: String,
    pub syscalls: Vec<String>,
}

impl Payload {
    pub fn validate(&self) -> Result<()> {
        let Some((_, key)) = CATEGORIES.iter().find(|(c, _)| *c == self.name) else {
            return Err(Error::input(format!("unknown payload category `{}`", self.name)));
        };
        if !self.syscalls.iter().any(|s| s == key) {
            return Err(Error::input(format!("payload `{}` does not issue `{key}`", self.name)));
        }
        Ok(())
    }

    pub fn list_from_json_str(text: &str) -> Result<Vec<Payload>> {
        let list: Vec<Payload> = serde_json::from_str(text).map_err(|e| Error::input(format!("payloads: {e}")))?;
        list.iter().try_for_each(Payload::validate)?;
        Ok(list)
    }

    pub fn load_list(path: &Path) -> Result<Vec<Payload>> {
        Self::list_from_json_str(&crate::error::read_to_string(path)?).map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn defaults() -> Vec<Payload> {
        Self::list_from_json_str(DEFAULT_PAYLOADS_JSON).expect("shipped payloads are valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadOutcome {
    Blocked,
    Executed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadRow {
    pub payload: String,
    pub outcome: PayloadOutcome,
    /// The first syscall of the payload that was killed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killed_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadReport {
    pub injection_thread: ThreadId,
    pub rows: Vec<PayloadRow>,
}

impl PayloadReport {
    pub fn blocked(&self) -> usize {
        self.rows
            .iter()
            .filter(|r| r.outcome == PayloadOutcome::Blocked)
            .count()
    }

    pub fn to_json(&self) -> String {
        crate::error::to_stable_json(self)
    }

    /// One row per payload, `✗` when it executed and `✓` when blocked.
    pub fn table(&self) -> String {
        let mut out = String::from("payload   result\n");
        for r in &self.rows {
            let mark = match r.outcome {
                PayloadOutcome::Executed => "✗",
                PayloadOutcome::Blocked => "✓",
            };
            let _ = writeln!(out, "{:<9} {mark}", r.payload);
        }
        let _ = writeln!(
            out,
            "✗: executed, ✓: blocked ({}/{} blocked)",
            self.blocked(),
            self.rows.len()
        );
        out
    }
}

/// The trace each payload runs in: loader events for the policy's mode,
/// the injection thread spawned from the main thread if it does not exist,
/// then the payload's syscalls.
fn canonical_trace(policy: &Policy, payload: &Payload, thread: ThreadId) -> EventTrace {
    let mut events = Vec::new();
    let pool_size = match policy.mode {
        PoolMode::PoolRequired => {
            events.push(Event::PoolInit {
                size: DEFAULT_POOL_SIZE,
            });
            DEFAULT_POOL_SIZE
        }
        PoolMode::PoolFree => 0,
    };
    events.push(Event::AppStart);
    if thread != MAIN_THREAD && thread > pool_size {
        events.push(Event::ThreadCreate {
            parent: MAIN_THREAD,
            child: thread,
        });
    }
    events.extend(payload.syscalls.iter().map(|name| Event::Syscall {
        thread,
        name: name.clone(),
    }));
    EventTrace::new(events)
}

pub fn evaluate_payloads(policy: &Policy, payloads: &[Payload], injection_thread: ThreadId) -> Result<PayloadReport> {
    let mut rows = Vec::with_capacity(payloads.len());
    for p in payloads {
        let verdicts = simulate(policy, &canonical_trace(policy, p, injection_thread))?;
        let killed_at = verdicts
            .iter()
            .find(|v| v.outcome == Outcome::Killed)
            .map(|v| v.syscall.clone());
        rows.push(PayloadRow {
            payload: p.name.clone(),
            outcome: if killed_at.is_some() {
                PayloadOutcome::Blocked
            } else {
                PayloadOutcome::Executed
            },
            killed_at,
        });
    }
    Ok(PayloadReport { injection_thread, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_payloads_cover_every_category() {
        let names: Vec<String> = Payload::defaults().into_iter().map(|p| p.name).collect();
        assert_eq!(names, CATEGORIES.map(|(c, _)| c.to_string()));
    }

    #[test]
    fn category_key_syscall_required() {
        assert!(Payload::list_from_json_str(r#"[{"name":"exec","syscalls":["fork"]}]"#).is_err());
        assert!(Payload::list_from_json_str(r#"[{"name":"sniff","syscalls":["socket"]}]"#).is_err());
    }
}
