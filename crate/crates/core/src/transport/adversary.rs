//! Misbehaving servers for tests and simulation.

use serde::{Deserialize, Serialize};

use crate::sharing::PartyId;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "behavior", rename_all = "snake_case")]
pub enum Behavior {
    /// Stays silent towards the gateway.
    DropResponses,
    /// Adds `delta` (random nonzero when absent) to every share it returns.
    CorruptShare {
        #[serde(default)]
        delta: Option<u64>,
    },
    /// Overwrites its stored shares at these slots with random values.
    ModifyStoredBits { indices: Vec<usize> },
    /// Honest, but copies everything it sees into the transcript.
    PassiveRecord,
}

impl Behavior {
    /// Whether the behaviour can change a reconstructed value.
    pub fn is_active(&self) -> bool {
        matches!(self, Behavior::CorruptShare { .. } | Behavior::ModifyStoredBits { .. })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Permanent,
    /// Only during these query indices (0-based).
    Queries(Vec<usize>),
}

impl Schedule {
    pub fn covers(&self, query: usize) -> bool {
        match self {
            Schedule::Permanent => true,
            Schedule::Queries(q) => q.contains(&query),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub party: PartyId,
    #[serde(flatten)]
    pub behavior: Behavior,
    #[serde(default)]
    pub schedule: Schedule,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySpec {
    #[serde(default)]
    pub corrupt: Vec<Corruption>,
}

impl AdversarySpec {
    pub fn none() -> Self {
        AdversarySpec::default()
    }

    /// Behaviours of `party` in force during `query`.
    pub fn active(&self, party: PartyId, query: usize) -> impl Iterator<Item = &Behavior> {
        self.corrupt
            .iter()
            .filter(move |c| c.party == party && c.schedule.covers(query))
            .map(|c| &c.behavior)
    }

    pub fn drops(&self, party: PartyId, query: usize) -> bool {
        self.active(party, query).any(|b| *b == Behavior::DropResponses)
    }

    /// Some(delta) with None meaning random.
    pub fn corruption(&self, party: PartyId, query: usize) -> Option<Option<u64>> {
        self.active(party, query).find_map(|b| match b {
            Behavior::CorruptShare { delta } => Some(*delta),
            _ => None,
        })
    }

    pub fn records(&self, party: PartyId) -> bool {
        self.corrupt
            .iter()
            .any(|c| c.party == party && c.behavior == Behavior::PassiveRecord)
    }

    /// x: parties with an active behaviour at some point.
    pub fn malicious_count(&self) -> usize {
        let mut ids: Vec<PartyId> = self
            .corrupt
            .iter()
            .filter(|c| c.behavior.is_active())
            .map(|c| c.party)
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}
