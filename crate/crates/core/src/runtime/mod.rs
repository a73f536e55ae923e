//! Private controllers, controller pools and the trust protocol between them.
//!
//! An agent is an actor paired with its private controller. The controller
//! holds the agent's control state and mediates everything the actor sends
//! or receives: a message is regulated once as `sent` at the sender's
//! controller and again as `arrived` at the receiver's. Controllers attach
//! the hash chain of their law to every envelope, and receivers refuse
//! envelopes whose chain does not belong to their own ensemble.

mod cert;
mod envelope;
mod journal;
mod pool;
mod scheduler;
mod system;

pub use cert::{verify_certificate, CertAuthority, Certificate};
pub use envelope::{verify_chain, ChainRejection, Envelope};
pub use journal::{ObligationAction, Record};
pub use pool::{AdoptError, Controller, Pool, PoolConfig, RuntimeError};
pub use scheduler::{Obligation, Scheduler};
pub use system::System;
