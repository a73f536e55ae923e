use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::lang::EventKind;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    B,
    M,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::B => "B",
            Layer::M => "M",
        }
    }

    pub fn parse(s: &str) -> Option<Layer> {
        match s {
            "B" => Some(Layer::B),
            "M" => Some(Layer::M),
            _ => None,
        }
    }
}

/// Identity of an agent: `[name, branch, layer]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgentId {
    pub name: String,
    pub branch: String,
    pub layer: Layer,
}

impl AgentId {
    pub fn new(name: impl Into<String>, branch: impl Into<String>, layer: Layer) -> Self {
        AgentId { name: name.into(), branch: branch.into(), layer }
    }

    pub fn to_value(&self) -> Value {
        Value::List(vec![Value::str(&self.name), Value::str(&self.branch), Value::str(self.layer.as_str())])
    }

    pub fn from_value(v: &Value) -> Option<AgentId> {
        match v.as_list()? {
            [Value::Str(n), Value::Str(b), Value::Str(l)] => Some(AgentId::new(n, b, Layer::parse(l)?)),
            _ => None,
        }
    }

    /// Canonical bytes signed by the certificate authority.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("agent ids always serialize")
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}/{}", self.name, self.branch, self.layer.as_str())
    }
}

impl Serialize for AgentId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        (&self.name, &self.branch, self.layer.as_str()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for AgentId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let (name, branch, layer): (String, String, String) = Deserialize::deserialize(d)?;
        let layer = Layer::parse(&layer).ok_or_else(|| D::Error::custom(format!("bad layer `{layer}`")))?;
        Ok(AgentId { name, branch, layer })
    }
}

/// Application content of a message: a kind and positional arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payload {
    pub kind: String,
    #[serde(default)]
    pub args: Vec<Value>,
}

impl Payload {
    pub fn new(kind: impl Into<String>, args: Vec<Value>) -> Self {
        Payload { kind: kind.into(), args }
    }

    pub fn bare(kind: impl Into<String>) -> Self {
        Payload { kind: kind.into(), args: Vec::new() }
    }

    pub fn arg(&self, i: usize) -> Option<&Value> {
        self.args.get(i)
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.kind)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(&a.canonical())?;
        }
        f.write_str(")")
    }
}

/// b-messages flow between base components; m-messages involve managers or
/// are generated by controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageClass {
    B,
    M,
}

impl MessageClass {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageClass::B => "b",
            MessageClass::M => "m",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Sent by the remote actor and forwarded by its controller.
    Actor,
    /// Generated by the remote controller itself (`emit`).
    Controller,
}

/// An occurrence at one agent that the law rules on.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulatedEvent {
    pub kind: EventKind,
    pub subject: AgentId,
    /// Name of the law the subject operates under.
    pub law: String,
    /// Message for sent/arrived; the obligation for obligationDue.
    pub message: Option<Payload>,
    /// Receiver of a sent message, or the transport source of an arrived one.
    pub peer: Option<AgentId>,
    /// Identity triple prefixed to an arrived message by the sender's law.
    pub sender: Option<AgentId>,
    pub class: Option<MessageClass>,
    pub origin: Option<Origin>,
    /// Certificate triple presented at adoption.
    pub cert: Option<AgentId>,
    pub now: f64,
}

impl RegulatedEvent {
    fn base(kind: EventKind, subject: &AgentId, law: &str, now: f64) -> Self {
        RegulatedEvent {
            kind,
            subject: subject.clone(),
            law: law.to_string(),
            message: None,
            peer: None,
            sender: None,
            class: None,
            origin: None,
            cert: None,
            now,
        }
    }

    pub fn adopted(subject: &AgentId, law: &str, now: f64) -> Self {
        RegulatedEvent { cert: Some(subject.clone()), ..Self::base(EventKind::Adopted, subject, law, now) }
    }

    pub fn sent(subject: &AgentId, law: &str, receiver: &AgentId, payload: Payload, now: f64) -> Self {
        RegulatedEvent {
            message: Some(payload),
            peer: Some(receiver.clone()),
            class: Some(if subject.layer == Layer::B { MessageClass::B } else { MessageClass::M }),
            origin: Some(Origin::Actor),
            ..Self::base(EventKind::Sent, subject, law, now)
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn arrived(
        subject: &AgentId,
        law: &str,
        source: &AgentId,
        sender: Option<AgentId>,
        payload: Payload,
        class: MessageClass,
        origin: Origin,
        now: f64,
    ) -> Self {
        RegulatedEvent {
            message: Some(payload),
            peer: Some(source.clone()),
            sender,
            class: Some(class),
            origin: Some(origin),
            ..Self::base(EventKind::Arrived, subject, law, now)
        }
    }

    pub fn obligation_due(subject: &AgentId, law: &str, obligation: Payload, now: f64) -> Self {
        RegulatedEvent { message: Some(obligation), ..Self::base(EventKind::ObligationDue, subject, law, now) }
    }
}

/// Read access to control state; evaluation sees state only through this.
pub trait StateView {
    fn get(&self, key: &str) -> Option<&Value>;
}

/// Per-agent state held by the controller.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlState {
    vars: BTreeMap<String, Value>,
}

impl ControlState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: Value) {
        let key = key.into();
        if value.is_null() {
            self.vars.remove(&key);
        } else {
            self.vars.insert(key, value);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.vars.iter()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// The identity triple written at adoption.
    pub fn identity(&self) -> Option<AgentId> {
        self.vars.get("self").and_then(AgentId::from_value)
    }

    pub fn num(&self, key: &str) -> f64 {
        self.vars.get(key).and_then(Value::as_num).unwrap_or(0.0)
    }
}

impl StateView for ControlState {
    fn get(&self, key: &str) -> Option<&Value> {
        self.vars.get(key)
    }
}

impl<S: StateView + ?Sized> StateView for &S {
    fn get(&self, key: &str) -> Option<&Value> {
        (**self).get(key)
    }
}

/// A view of `base` with pending updates layered on top.
pub struct Overlay<'a> {
    pub base: &'a dyn StateView,
    pub updates: BTreeMap<String, Value>,
}

impl<'a> Overlay<'a> {
    pub fn new(base: &'a dyn StateView) -> Self {
        Overlay { base, updates: BTreeMap::new() }
    }
}

impl StateView for Overlay<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        match self.updates.get(key) {
            Some(Value::Null) => None,
            Some(v) => Some(v),
            None => self.base.get(key),
        }
    }
}

/// Storage key of a keyed variable, `pending["apple"]`.
pub fn keyed_name(name: &str, key: &Value) -> String {
    format!("{name}[{}]", key.canonical())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_id_json_is_a_triple() {
        let id = AgentId::new("buyer1", "store7", Layer::B);
        assert_eq!(serde_json::to_string(&id).unwrap(), r#"["buyer1","store7","B"]"#);
        assert_eq!(AgentId::from_value(&id.to_value()), Some(id));
    }

    #[test]
    fn null_assignment_clears() {
        let mut s = ControlState::new();
        s.set("x", Value::Num(1.0));
        s.set("x", Value::Null);
        assert!(s.is_empty());
    }

    #[test]
    fn keyed_names() {
        assert_eq!(keyed_name("pending", &Value::str("apple")), r#"pending["apple"]"#);
        assert_eq!(keyed_name("subs", &Value::Num(3.0)), "subs[3]");
    }
}
