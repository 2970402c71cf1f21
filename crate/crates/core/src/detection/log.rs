//! Structured per-query log, one JSON object per line.

use std::io::Write;
use std::net::Ipv4Addr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{Decision, Method};
use crate::error::Result;
use crate::sharing::PartyId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Milliseconds; wall clock for live runs, virtual time in simulation.
    pub timestamp: u64,
    pub addr: Ipv4Addr,
    pub m_prime: usize,
    pub method: Method,
    pub disagreement: bool,
    pub suspects: Vec<PartyId>,
    pub decision: Decision,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct DetectionLog<W: Write> {
    out: W,
}

impl<W: Write> DetectionLog<W> {
    pub fn new(out: W) -> Self {
        DetectionLog { out }
    }

    pub fn append(&mut self, rec: &LogRecord) -> Result<()> {
        let line = serde_json::to_string(rec).expect("log record serializes");
        writeln!(self.out, "{line}")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
