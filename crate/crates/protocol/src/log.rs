use std::fmt::Write;

use crate::queue::{as_seconds, Micros};

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: Micros,
    pub node: u32,
    pub event: &'static str,
    pub detail: String,
}

/// Line-delimited `time,node,event,detail` records.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    enabled: bool,
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new(enabled: bool) -> Self {
        Self { enabled, records: Vec::new() }
    }

    pub fn push(&mut self, time: Micros, node: u32, event: &'static str, detail: impl FnOnce() -> String) {
        if self.enabled {
            self.records.push(LogRecord { time, node, event, detail: detail() });
        }
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn events<'a>(&'a self, event: &'a str) -> impl Iterator<Item = &'a LogRecord> + 'a {
        self.records.iter().filter(move |r| r.event == event)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,node,event,detail\n");
        for r in &self.records {
            let _ = writeln!(out, "{:.6},{},{},{}", as_seconds(r.time), r.node, r.event, r.detail);
        }
        out
    }
}
