//! Append-only training log, one `step loss lr` record per line.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use trackgpt_core::gpt::StepLog;

use crate::error::{Error, Result};

pub fn format_record(log: &StepLog) -> String {
    format!("{} {} {}\n", log.step, log.loss, log.lr)
}

pub fn append(path: &Path, logs: &[StepLog]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let text: String = logs.iter().map(format_record).collect();
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// `(step, loss, lr)` records.
pub fn parse(text: &str) -> Result<Vec<(u64, f64, f64)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let bad = || Error::parse("training log", format!("line {}: expected `step loss lr`", n + 1));
            let mut f = l.split_whitespace();
            let step = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let loss = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let lr = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if f.next().is_some() {
                return Err(bad());
            }
            Ok((step, loss, lr))
        })
        .collect()
}
