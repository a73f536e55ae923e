use serde::{Deserialize, Serialize};

use crate::engine::{AgentId, MessageClass, Origin, Payload};
use crate::hierarchy::{HashChain, LawNode, LawTree};

/// A mediated message in transit between two controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Envelope {
    /// The sender triple the message was prefixed with, if any. This is what
    /// the receiving law sees as `$sender`.
    pub sender_triple: Option<AgentId>,
    /// The agent whose controller dispatched the envelope.
    pub source: AgentId,
    pub receiver: AgentId,
    pub payload: Payload,
    pub class: MessageClass,
    pub origin: Origin,
    pub hash_chain: HashChain,
    pub seq: u64,
    pub sent_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ChainRejection {
    Empty,
    /// The chain is rooted in a different ensemble.
    ForeignRoot,
    /// Same root, but the sender's law is not part of the local ensemble,
    /// e.g. because its text was altered.
    UnknownLaw,
    /// A law on the receiver's path only accepts messages from certain
    /// subtrees and the sender is outside them.
    NotAccepted,
}

impl ChainRejection {
    pub fn as_str(self) -> &'static str {
        match self {
            ChainRejection::Empty => "empty",
            ChainRejection::ForeignRoot => "foreignRoot",
            ChainRejection::UnknownLaw => "unknownLaw",
            ChainRejection::NotAccepted => "notAccepted",
        }
    }
}

/// Decides whether a message carrying `remote` may be accepted by an agent
/// operating under `local_leaf`.
///
/// The chains must share the root law's hash, and the remote chain must be
/// exactly the chain of some law in the local ensemble. Any `ACCEPT FROM`
/// directive on the local path further requires the sender's law to be one
/// of the named laws or subordinate to one of them.
pub fn verify_chain<'t>(tree: &'t LawTree, local_leaf: &str, remote: &HashChain) -> Result<&'t LawNode, ChainRejection> {
    let root = remote.root().ok_or(ChainRejection::Empty)?;
    if *root != tree.root().hash {
        return Err(ChainRejection::ForeignRoot);
    }
    let sender_law = tree.by_chain(remote).ok_or(ChainRejection::UnknownLaw)?;
    for node in tree.path(local_leaf).unwrap_or_default() {
        let allowed = &node.ast.accept_from;
        if !allowed.is_empty() && !allowed.iter().any(|a| *a == sender_law.name || tree.is_subordinate(&sender_law.name, a)) {
            return Err(ChainRejection::NotAccepted);
        }
    }
    Ok(sender_law)
}
