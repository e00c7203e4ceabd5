use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub type ThreadId = u32;

pub const MAIN_THREAD: ThreadId = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// Start the pool, creating threads `1..=size`.
    PoolInit {
        size: u32,
    },
    AppStart,
    ThreadCreate {
        parent: ThreadId,
        child: ThreadId,
    },
    Syscall {
        thread: ThreadId,
        name: String,
    },
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::PoolInit { size } => write!(f, "POOL_INIT {size}"),
            Event::AppStart => f.write_str("APP_START"),
            Event::ThreadCreate { parent, child } => write!(f, "THREAD_CREATE {parent} {child}"),
            Event::Syscall { thread, name } => write!(f, "SYSCALL {thread} {name}"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTrace {
    pub events: Vec<Event>,
}

impl EventTrace {
    pub fn new(events: Vec<Event>) -> Self {
        EventTrace { events }
    }

    /// Parse the line format; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut events = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |why: &str| Error::input(format!("event trace line {}: {why}: `{line}`", i + 1));
            let num = |s: &str| s.parse::<u32>().map_err(|_| bad("expected a thread id or size"));
            let parts: Vec<&str> = line.split_whitespace().collect();
            let event = match parts.as_slice() {
                ["POOL_INIT", size] => Event::PoolInit { size: num(size)? },
                ["APP_START"] => Event::AppStart,
                ["THREAD_CREATE", p, c] => Event::ThreadCreate {
                    parent: num(p)?,
                    child: num(c)?,
                },
                ["SYSCALL", t, name] => Event::Syscall {
                    thread: num(t)?,
                    name: name.to_string(),
                },
                _ => return Err(bad("unknown event")),
            };
            events.push(event);
        }
        Ok(EventTrace { events })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&crate::error::read_to_string(path)?).map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        self.events.iter().map(|e| format!("{e}\n")).collect()
    }

    pub fn syscall_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, Event::Syscall { .. }))
            .count()
    }
}
