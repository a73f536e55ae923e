//! Governance-based management middleware.
//!
//! Every message exchange between agents is mediated by the private
//! controllers of both parties, each of which evaluates the agent's law on
//! the event and carries out the resulting ruling. Laws are organized into a
//! conformance hierarchy whose superiors constrain what subordinates may do,
//! which lets management capabilities (properties, operations, events) be
//! defined purely in terms of message flow.
//!
//! Module map:
//! - [`lang`]: law text, parsing, validation, hashing
//! - [`engine`]: evaluating a law, applying rulings
//! - [`hierarchy`]: law ensembles and superior-first resolution
//! - [`runtime`]: controllers, pools, certificates, envelopes, obligations
//! - [`capabilities`]: reusable law fragments and the audit trail
//! - [`transport`]: wire frames, the controller service, the manager gateway
//! - [`sim`]: the supermarket-chain scenario as a deterministic simulation

pub mod capabilities;
pub mod engine;
pub mod hierarchy;
pub mod lang;
pub mod runtime;
pub mod sim;
pub mod transport;
pub mod value;

pub use value::Value;
