//! Wire format, simulated network and TCP runtime.

pub mod adversary;
pub mod sim;
pub mod tcp;
pub mod wire;

pub use adversary::{AdversarySpec, Behavior, Corruption, Schedule};
pub use sim::{simulate, Counters, GatewaySpec, QueryOutcome, Scenario, SimReport, TimingPolicy};
pub use tcp::{insert_remote, query_gateway, run_gateway_service, run_server, GatewayClient, RemoteParticipant, ServerHandle, ServerOptions};
pub use wire::{decode, encode, FrameCipher, Kind, Payload, Plaintext, WireMessage};
