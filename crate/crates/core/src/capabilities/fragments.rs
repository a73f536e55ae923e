//! Law fragments: rule lists that realize one managerial capability each.
//!
//! A law is assembled by concatenating fragments in order. Because the first
//! matching rule wins, a fragment placed earlier takes precedence over later
//! ones for the events it matches.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::lang::ast::RESERVED_STATE;
use crate::lang::parse_syntax;
use crate::value::Value;

/// The four manager-message forms plus the coordination requests.
pub const MANAGER_FORMS: [&str; 6] = ["examine", "invoke", "subscribe", "unsubscribe", "acquire", "release"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FragmentError {
    #[error("`{0}` is a reserved control-state name")]
    ReservedName(String),
    #[error("`{0}` is not a valid identifier")]
    InvalidName(String),
    #[error("invalid message pattern `{0}`")]
    InvalidPattern(String),
    #[error("window length must be positive, got {0}")]
    InvalidWindow(f64),
}

/// An ordered list of rules in law text form.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Fragment {
    pub rules: Vec<String>,
}

impl Fragment {
    pub fn new(rules: Vec<String>) -> Self {
        Fragment { rules }
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(r);
            out.push_str(";\n");
        }
        out
    }

    pub fn then(mut self, other: Fragment) -> Self {
        self.rules.extend(other.rules);
        self
    }
}

fn check_name(name: &str) -> Result<(), FragmentError> {
    let mut chars = name.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ok || matches!(name, "not" | "and" | "or" | "in" | "true" | "false" | "null" | "op") {
        return Err(FragmentError::InvalidName(name.to_string()));
    }
    if RESERVED_STATE.contains(&name) {
        return Err(FragmentError::ReservedName(name.to_string()));
    }
    Ok(())
}

/// Renders a list of strings as a law list literal.
pub fn str_list<S: AsRef<str>>(items: &[S]) -> String {
    Value::List(items.iter().map(|s| Value::str(s.as_ref())).collect()).canonical()
}

fn num(x: f64) -> String {
    Value::Num(x).canonical()
}

/// A counter property incremented on every forwarded message matching
/// `pattern`, examinable as `examine("<name>")`. With no extra operations
/// this is exactly:
///
/// ```text
/// UPON sent(PO(...)) DO [POcount <- POcount + 1, forward]
/// UPON arrived(examine("POcount")) DO [emit($sender, value("POcount", default(POcount, 0)))]
/// ```
pub fn property_counter(name: &str, pattern: &str) -> Result<Fragment, FragmentError> {
    property_counter_with::<&str>(name, pattern, &[])
}

/// [`property_counter`] with further operations run before the increment in
/// the counting rule.
pub fn property_counter_with<S: AsRef<str>>(name: &str, pattern: &str, extra_ops: &[S]) -> Result<Fragment, FragmentError> {
    check_name(name)?;
    if parse_syntax(&format!("UPON sent({pattern}) DO []")).is_err() {
        return Err(FragmentError::InvalidPattern(pattern.to_string()));
    }
    let mut ops: Vec<String> = extra_ops.iter().map(|s| s.as_ref().to_string()).collect();
    ops.push(format!("{name} <- {name} + 1"));
    ops.push("forward".into());
    Ok(Fragment::new(vec![
        format!("UPON sent({pattern}) DO [{}]", ops.join(", ")),
        format!(r#"UPON arrived(examine("{name}")) DO [emit($sender, value("{name}", default({name}, 0)))]"#),
    ]))
}

/// Answers `examine("inflow")` with the number of logged arrivals in the
/// half-open window `(now - window, now]`. Arrivals are logged by
/// [`inflow_record`].
pub fn inflow(window: f64) -> Result<Fragment, FragmentError> {
    if !(window.is_finite() && window > 0.0) {
        return Err(FragmentError::InvalidWindow(window));
    }
    Ok(Fragment::new(vec![format!(
        r#"UPON arrived(examine("inflow")) DO [emit($sender, value("inflow", countAfter(inflowLog, $now - {})))]"#,
        num(window)
    )]))
}

/// Operation that logs the current arrival and prunes entries that can no
/// longer fall inside the window.
pub fn inflow_record(window: f64) -> String {
    format!("inflowLog <- append(keepAfter(inflowLog, $now - {}), $now)", num(window))
}

/// Blocks all b-messages to and from a component once `invoke("remove")`
/// sets `blocked`; management traffic keeps flowing. `invoke("restore")`
/// lifts the block.
pub fn remove() -> Fragment {
    Fragment::new(vec![
        r#"UPON sent(_) IF blocked == 1 and $class == "b" DO []"#.into(),
        r#"UPON arrived(_) IF blocked == 1 and $class == "b" DO []"#.into(),
        r#"UPON arrived(invoke("remove")) DO [blocked <- 1, emit($sender, done("remove"))]"#.into(),
        r#"UPON arrived(invoke("restore")) DO [blocked <- null, emit($sender, done("restore"))]"#.into(),
        r#"UPON arrived(examine("blocked")) DO [emit($sender, value("blocked", default(blocked, 0)))]"#.into(),
    ])
}

/// Drops management traffic from outside the component's own branch.
pub fn purview() -> Fragment {
    Fragment::new(vec![
        r#"UPON arrived(_) IF $class == "m" and $sender.branch != $self.branch DO [audit("rejection", ["purview", $kind])]"#.into(),
    ])
}

/// Drops manager-message forms sent by anything but a manager.
pub fn manager_layer_only() -> Fragment {
    Fragment::new(vec![format!(
        r#"UPON arrived(_) IF $kind in {} and $sender.layer != "M" DO [audit("rejection", ["layer", $kind])]"#,
        str_list(&MANAGER_FORMS)
    )])
}

/// Subscription bookkeeping for the events a law declares. Emission is done
/// by the law's own rules through [`notify`].
pub fn subscription<S: AsRef<str>>(declared: &[S]) -> Result<Fragment, FragmentError> {
    for d in declared {
        check_name(d.as_ref())?;
    }
    Ok(Fragment::new(vec![
        format!(
            "UPON arrived(subscribe(e)) IF e in {} DO [subs[e] <- appendUnique(subs[e], $sender), emit($sender, subscribed(e))]",
            str_list(declared)
        ),
        r#"UPON arrived(subscribe(e)) DO [audit("rejection", ["undeclaredEvent", e])]"#.into(),
        "UPON arrived(unsubscribe(e)) DO [subs[e] <- remove(subs[e], $sender), emit($sender, unsubscribed(e))]".into(),
    ]))
}

/// Operation emitting `event(args)` to every subscriber of `event`.
pub fn notify(event: &str, args: &str) -> String {
    format!(r#"emit(subs["{event}"], {event}({args}))"#)
}

/// Relays examine/invoke of internal capabilities to the component's
/// management interface. Invocations of anything else that reach this
/// fragment are refused.
pub fn mi_bridge<S: AsRef<str>>(examine_caps: &[S], invoke_ops: &[S]) -> Fragment {
    Fragment::new(vec![
        format!(r#"UPON arrived(examine(p)) IF p in {} DO [queryMI("examine", p)]"#, str_list(examine_caps)),
        format!(r#"UPON arrived(invoke(o)) IF o in {} DO [queryMI("invoke", o)]"#, str_list(invoke_ops)),
        r#"UPON arrived(invoke(o)) DO [audit("rejection", ["notAllowed", o])]"#.into(),
    ])
}

/// Which manager holds which role, and which message forms each role may
/// send. Managers absent from the table get role `none`, which may send
/// nothing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoleTable {
    pub managers: BTreeMap<String, String>,
    pub roles: BTreeMap<String, Vec<String>>,
}

impl RoleTable {
    /// The standard two roles: operators may use every form, observers may
    /// only look.
    pub fn standard() -> Self {
        let mut roles = BTreeMap::new();
        roles.insert("operator".into(), MANAGER_FORMS.iter().map(|s| s.to_string()).collect());
        roles.insert("observer".into(), vec!["examine".into(), "subscribe".into(), "unsubscribe".into()]);
        RoleTable { managers: BTreeMap::new(), roles }
    }

    pub fn assign(mut self, manager: &str, role: &str) -> Self {
        self.managers.insert(manager.into(), role.into());
        self
    }

    fn pairs<'a>(it: impl Iterator<Item = (&'a String, String)>) -> String {
        let items: Vec<String> = it.map(|(k, v)| format!("[{}, {v}]", Value::str(k).canonical())).collect();
        format!("[{}]", items.join(", "))
    }

    fn managers_literal(&self) -> String {
        Self::pairs(self.managers.iter().map(|(k, v)| (k, Value::str(v).canonical())))
    }

    fn roles_literal(&self) -> String {
        Self::pairs(self.roles.iter().map(|(k, v)| (k, str_list(v))))
    }

    /// Adoption-time operation recording the manager's role.
    pub fn assign_op(&self) -> String {
        format!(r#"role <- lookup({}, $cert.name, "none")"#, self.managers_literal())
    }
}

/// Manager-side rule refusing sends outside the manager's role. The refusal
/// is the manager message's one audit record.
pub fn role_filter(table: &RoleTable) -> Fragment {
    Fragment::new(vec![format!(
        r#"UPON sent(_) IF not ($kind in lookup({}, role, [])) DO [audit("managerMsg", ["denied", "role"])]"#,
        table.roles_literal()
    )])
}

/// Both halves of a coordination lock over guarded operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoordinationLock {
    /// Rules for the managed component, which holds one token per guarded
    /// operation.
    pub component: Fragment,
    /// Rules for managers, which track the tokens granted to them.
    pub manager: Fragment,
}

/// A per-component, per-operation token. A manager acquires it from the
/// component's controller before invoking a guarded operation; a second
/// requester is refused until release, and a token held longer than `ttl`
/// is reclaimed by an obligation.
pub fn coordination_lock<S: AsRef<str>>(guarded: &[S], ttl: f64) -> Result<CoordinationLock, FragmentError> {
    if !(ttl.is_finite() && ttl > 0.0) {
        return Err(FragmentError::InvalidWindow(ttl));
    }
    let ops = str_list(guarded);
    let ttl = num(ttl);
    let component = Fragment::new(vec![
        format!(
            "UPON arrived(acquire(o)) IF o in {ops} and (token[o] == null or token[o] == $sender) DO [token[o] <- $sender, repealObligation(tokenExpire(o)), imposeObligation(tokenExpire(o), {ttl}), emit($sender, granted(o))]"
        ),
        format!("UPON arrived(acquire(o)) IF o in {ops} DO [emit($sender, refused(o, token[o]))]"),
        format!(
            "UPON arrived(release(o)) IF o in {ops} and token[o] == $sender DO [token[o] <- null, repealObligation(tokenExpire(o)), emit($sender, released(o))]"
        ),
        format!("UPON arrived(release(o)) IF o in {ops} DO [emit($sender, refused(o, token[o]))]"),
        format!(r#"UPON arrived(invoke(o)) IF o in {ops} and token[o] != $sender DO [audit("rejection", ["token", o])]"#),
        "UPON obligationDue(tokenExpire(o)) DO [emit(token[o], expired(o)), token[o] <- null]".into(),
    ]);
    let manager = Fragment::new(vec![
        format!(r#"UPON sent(invoke(o)) IF o in {ops} and not ([o, $peer] in tokens) DO [audit("managerMsg", ["denied", "token"])]"#),
        r#"UPON arrived(granted(o)) IF $origin == "controller" DO [tokens <- appendUnique(tokens, [o, $sender]), deliver]"#.into(),
        r#"UPON arrived(released(o)) IF $origin == "controller" DO [tokens <- remove(tokens, [o, $sender]), deliver]"#.into(),
        r#"UPON arrived(expired(o)) IF $origin == "controller" DO [tokens <- remove(tokens, [o, $sender]), deliver]"#.into(),
    ]);
    Ok(CoordinationLock { component, manager })
}
