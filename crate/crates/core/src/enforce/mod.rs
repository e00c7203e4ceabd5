//! Per-thread filter installation, inheritance and enforcement over event
//! traces, and evaluation of attack payloads against a policy.

mod payload;
mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::whitelist::PoolMode;

pub use payload::{evaluate_payloads, Payload, PayloadOutcome, PayloadReport, PayloadRow, CATEGORIES};
pub use trace::{Event, EventTrace, ThreadId, MAIN_THREAD};

pub const DEFAULT_POOL_SIZE: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filter {
    pub label: &'static str,
    pub allow: BTreeSet<String>,
}

/// Filters installed on each live thread, in installation order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterState {
    pub threads: BTreeMap<ThreadId, Vec<Filter>>,
}

impl FilterState {
    /// The first installed filter that rejects `name` on `thread`.
    pub fn denying(&self, thread: ThreadId, name: &str) -> Option<usize> {
        self.threads.get(&thread)?.iter().position(|f| !f.allow.contains(name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Allowed,
    Killed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    /// Position of the syscall event in the trace.
    pub event: usize,
    pub thread: ThreadId,
    pub syscall: String,
    pub outcome: Outcome,
    /// Index, in the thread's filter list, of the filter that denied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub denied_by: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
}

/// Run `trace` under `policy`. The pool filter goes onto every pool thread
/// at `POOL_INIT`, the main filter onto thread 0 at `APP_START`; created
/// threads copy their parent's filters.
pub fn simulate(policy: &Policy, trace: &EventTrace) -> Result<Vec<Verdict>> {
    let pool_filter = Filter {
        label: "pool",
        allow: policy.pool_allow.iter().cloned().collect(),
    };
    let main_filter = Filter {
        label: "main",
        allow: policy.main_allow.iter().cloned().collect(),
    };
    let mut state = FilterState::default();
    state.threads.insert(MAIN_THREAD, Vec::new());
    let mut pool_seen = false;
    let mut app_started = false;
    let mut verdicts = Vec::new();
    for (i, event) in trace.events.iter().enumerate() {
        let bad = |why: String| Error::input(format!("event {} (`{event}`): {why}", i + 1));
        match event {
            Event::PoolInit { size } => {
                if pool_seen {
                    return Err(bad("second POOL_INIT".into()));
                }
                if app_started {
                    return Err(bad("the pool must start before the application".into()));
                }
                if policy.mode == PoolMode::PoolFree {
                    return Err(bad("policy is pool_free".into()));
                }
                pool_seen = true;
                for t in 1..=*size {
                    if state.threads.insert(t, vec![pool_filter.clone()]).is_some() {
                        return Err(bad(format!("thread {t} already exists")));
                    }
                }
            }
            Event::AppStart => {
                if app_started {
                    return Err(bad("second APP_START".into()));
                }
                if policy.mode == PoolMode::PoolRequired && !pool_seen {
                    return Err(bad("policy is pool_required but the pool was never started".into()));
                }
                app_started = true;
                state
                    .threads
                    .get_mut(&MAIN_THREAD)
                    .expect("main thread exists")
                    .push(main_filter.clone());
            }
            Event::ThreadCreate { parent, child } => {
                let Some(inherited) = state.threads.get(parent).cloned() else {
                    return Err(bad(format!("unknown parent thread {parent}")));
                };
                if state.threads.contains_key(child) {
                    return Err(bad(format!("thread {child} already exists")));
                }
                state.threads.insert(*child, inherited);
            }
            Event::Syscall { thread, name } => {
                if !state.threads.contains_key(thread) {
                    return Err(bad(format!("unknown thread {thread}")));
                }
                let denied_by = state.denying(*thread, name);
                verdicts.push(Verdict {
                    event: i,
                    thread: *thread,
                    syscall: name.clone(),
                    outcome: if denied_by.is_some() {
                        Outcome::Killed
                    } else {
                        Outcome::Allowed
                    },
                    denied_by,
                    filter: denied_by.map(|k| state.threads[thread][k].label.to_string()),
                });
            }
        }
    }
    Ok(verdicts)
}

pub fn verdicts_to_json(verdicts: &[Verdict]) -> String {
    crate::error::to_stable_json(&verdicts)
}

pub fn verdicts_table(verdicts: &[Verdict]) -> String {
    let mut out = String::from("event  thread  syscall            verdict\n");
    for v in verdicts {
        let verdict = match (v.outcome, &v.filter) {
            (Outcome::Allowed, _) => "allowed".to_string(),
            (Outcome::Killed, Some(f)) => format!("killed ({f} filter)"),
            (Outcome::Killed, None) => "killed".to_string(),
        };
        let _ = writeln!(out, "{:<6} {:<7} {:<18} {verdict}", v.event + 1, v.thread, v.syscall);
    }
    out
}
