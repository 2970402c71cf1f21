//! Adding an address to a live filter on every server, all or nothing.

use super::FirewallState;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagedInsert {
    pub key: u32,
    /// (slot, share before the insert)
    pub previous: Vec<(usize, u64)>,
}

/// One side of a two-phase insert.
pub trait InsertParticipant {
    fn prepare(&mut self, key: u32) -> Result<()>;
    fn commit(&mut self, key: u32) -> Result<()>;
    /// Drops a prepared insert, or undoes the last committed one.
    fn abort(&mut self, key: u32) -> Result<()>;
}

impl InsertParticipant for FirewallState {
    fn prepare(&mut self, key: u32) -> Result<()> {
        if self.staged.is_some() {
            return Err(Error::Aborted("another insert is in flight".into()));
        }
        self.staged = Some(self.stage_insert(key));
        Ok(())
    }

    fn commit(&mut self, key: u32) -> Result<()> {
        match self.staged.take() {
            Some(s) if s.key == key => {
                self.apply(&s);
                self.last_commit = Some(s);
                Ok(())
            }
            other => {
                self.staged = other;
                Err(Error::Aborted(format!("no prepared insert for key {key:#010x}")))
            }
        }
    }

    fn abort(&mut self, key: u32) -> Result<()> {
        if self.staged.as_ref().is_some_and(|s| s.key == key) {
            self.staged = None;
        } else if let Some(s) = self.last_commit.take_if(|s| s.key == key) {
            self.undo(&s);
        }
        Ok(())
    }
}

/// Prepares on every participant, then commits. Any failure rolls back the
/// ones already touched and leaves every filter as it was.
pub fn insert_transaction<P: InsertParticipant>(key: u32, participants: &mut [P]) -> Result<()> {
    for i in 0..participants.len() {
        if let Err(e) = participants[i].prepare(key) {
            for p in participants[..i].iter_mut() {
                let _ = p.abort(key);
            }
            return Err(Error::Aborted(format!("participant {} refused: {e}", i + 1)));
        }
    }
    for i in 0..participants.len() {
        if let Err(e) = participants[i].commit(key) {
            for p in participants.iter_mut() {
                let _ = p.abort(key);
            }
            return Err(Error::Aborted(format!("participant {} failed to commit: {e}", i + 1)));
        }
    }
    Ok(())
}
