//! Managerial capabilities built from law fragments, the management
//! interface stubs that components may offer, and the audit trail.
//!
//! Communication-based capabilities (properties such as `POcount`, the
//! `remove` operation, subscribable events) are realized entirely by law
//! rules over the controller's state. Internal capabilities need the
//! component's cooperation, which it provides through a
//! [`ManagementInterface`]; the law decides who may reach it.

pub mod audit;
pub mod fragments;

use std::collections::BTreeMap;

use crate::value::Value;

/// A component's own management interface. It is optional and untrusted:
/// the controller only consults it when the law says so.
pub trait ManagementInterface: Send {
    fn examine(&mut self, capability: &str) -> Option<Value>;
    fn invoke(&mut self, operation: &str) -> Option<Value>;
}

/// A fixed-table interface, enough for simulations and tests.
#[derive(Debug, Clone, Default)]
pub struct StaticMi {
    pub properties: BTreeMap<String, Value>,
    pub invocations: Vec<String>,
}

impl StaticMi {
    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.properties.insert(name.into(), value.into());
        self
    }
}

impl ManagementInterface for StaticMi {
    fn examine(&mut self, capability: &str) -> Option<Value> {
        self.properties.get(capability).cloned()
    }

    fn invoke(&mut self, operation: &str) -> Option<Value> {
        self.invocations.push(operation.to_string());
        Some(Value::str("ok"))
    }
}
