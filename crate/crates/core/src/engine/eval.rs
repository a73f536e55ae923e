//! Rule dispatch and expression evaluation.

use thiserror::Error;

use super::ruling::{ControlOp, Ruling};
use super::types::{keyed_name, AgentId, Overlay, Payload, RegulatedEvent, StateView};
use crate::capabilities::audit::AuditKind;
use crate::lang::ast::{ArgPattern, BinOp, Expr, LawAst, MessageTemplate, OpTemplate, Pattern, UnOp};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("type mismatch: {0}")]
    Type(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("{0}")]
    Invalid(String),
}

fn type_err(msg: impl Into<String>) -> EvalError {
    EvalError::Type(msg.into())
}

/// Outcome of evaluating one law on one event.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ruling: Ruling,
    /// Index of the rule that decided the ruling.
    pub matched: Option<usize>,
    /// Set when evaluation failed; the ruling is then empty.
    pub error: Option<EvalError>,
}

/// Applies `law` to `(event, state)`. Pure: reads nothing but its arguments.
///
/// The first rule whose pattern and condition match decides. Operations are
/// evaluated left to right and see the state updates made by earlier
/// operations of the same ruling.
pub fn evaluate(law: &LawAst, event: &RegulatedEvent, state: &dyn StateView) -> Evaluation {
    for (idx, rule) in law.rules.iter().enumerate() {
        if rule.event != event.kind {
            continue;
        }
        let Some(bindings) = match_pattern(&rule.pattern, event) else { continue };
        let mut scope = Scope { event, bindings, state: Overlay::new(state), op: None };
        if let Some(cond) = &rule.condition {
            match scope.eval(cond).and_then(|v| truth(&v)) {
                Ok(true) => {}
                Ok(false) => continue,
                Err(e) => return Evaluation { ruling: Ruling::empty(), matched: Some(idx), error: Some(e) },
            }
        }
        return match scope.build_ops(&rule.ops) {
            Ok(ops) => Evaluation { ruling: Ruling { ops }, matched: Some(idx), error: None },
            Err(e) => Evaluation { ruling: Ruling::empty(), matched: Some(idx), error: Some(e) },
        };
    }
    Evaluation { ruling: Ruling::empty(), matched: None, error: None }
}

/// Evaluates a constraint predicate against one candidate operation.
pub fn check_constraint(constraint: &Expr, op: &ControlOp, event: &RegulatedEvent, state: &dyn StateView) -> Result<bool, EvalError> {
    let mut scope = Scope { event, bindings: Vec::new(), state: Overlay::new(state), op: Some(op) };
    let v = scope.eval(constraint)?;
    truth(&v)
}

fn truth(v: &Value) -> Result<bool, EvalError> {
    v.truthy().ok_or_else(|| type_err(format!("condition must be a bool, got {}", v.type_name())))
}

fn match_pattern(pattern: &Pattern, event: &RegulatedEvent) -> Option<Vec<(String, Value)>> {
    match pattern {
        Pattern::Any => Some(Vec::new()),
        Pattern::Message { kind, args } => {
            let msg = event.message.as_ref()?;
            if &msg.kind != kind {
                return None;
            }
            let Some(args) = args else { return Some(Vec::new()) };
            let has_rest = matches!(args.last(), Some(ArgPattern::Rest));
            let fixed = if has_rest { args.len() - 1 } else { args.len() };
            if msg.args.len() < fixed || (!has_rest && msg.args.len() != fixed) {
                return None;
            }
            let mut bindings = Vec::new();
            for (pat, val) in args.iter().zip(&msg.args) {
                match pat {
                    ArgPattern::Bind(name) => bindings.push((name.clone(), val.clone())),
                    ArgPattern::Literal(lit) if lit != val => return None,
                    _ => {}
                }
            }
            Some(bindings)
        }
    }
}

struct Scope<'a> {
    event: &'a RegulatedEvent,
    bindings: Vec<(String, Value)>,
    state: Overlay<'a>,
    op: Option<&'a ControlOp>,
}

impl Scope<'_> {
    fn read_state(&self, key: &str) -> Value {
        self.state.get(key).cloned().unwrap_or(Value::Null)
    }

    fn build_ops(&mut self, templates: &[OpTemplate]) -> Result<Vec<ControlOp>, EvalError> {
        let mut ops = Vec::with_capacity(templates.len());
        for t in templates {
            match t {
                OpTemplate::Forward => ops.push(ControlOp::Forward),
                OpTemplate::Delegate => ops.push(ControlOp::Delegate),
                OpTemplate::PrefixSender => ops.push(ControlOp::PrefixSender),
                OpTemplate::StripSender => ops.push(ControlOp::StripSender),
                OpTemplate::Deliver(m) => {
                    let payload = m.as_ref().map(|m| self.message(m)).transpose()?;
                    ops.push(ControlOp::Deliver { payload });
                }
                OpTemplate::Update { target, value } => {
                    let name = match &target.key {
                        None => target.name.clone(),
                        Some(k) => keyed_name(&target.name, &self.eval(k)?),
                    };
                    let value = self.eval(value)?;
                    self.state.updates.insert(name.clone(), value.clone());
                    ops.push(ControlOp::StateUpdate { name, value });
                }
                OpTemplate::Impose { obligation, delay } => {
                    let obligation = self.message(obligation)?;
                    let delay = self.eval(delay)?;
                    let delay = delay
                        .as_num()
                        .filter(|d| d.is_finite() && *d >= 0.0)
                        .ok_or_else(|| type_err(format!("obligation delay must be a non-negative number, got {delay}")))?;
                    ops.push(ControlOp::ImposeObligation { obligation, delay });
                }
                OpTemplate::Repeal { obligation } => {
                    ops.push(ControlOp::RepealObligation { obligation: self.message(obligation)? });
                }
                OpTemplate::Emit { target, message } => {
                    let target = self.eval(target)?;
                    let payload = self.message(message)?;
                    for t in targets(&target)? {
                        ops.push(ControlOp::Emit { target: t, payload: payload.clone() });
                    }
                }
                OpTemplate::Audit { kind, detail } => {
                    let kind_v = self.eval(kind)?;
                    let kind = kind_v
                        .as_str()
                        .and_then(AuditKind::parse)
                        .ok_or_else(|| EvalError::Invalid(format!("unknown audit kind {kind_v}")))?;
                    ops.push(ControlOp::Audit { kind, detail: self.eval(detail)? });
                }
                OpTemplate::QueryMi { form, capability } => {
                    let requester = self.event.sender.clone().ok_or_else(|| EvalError::Invalid("queryMI needs a message sender".into()))?;
                    let form = self.eval(form)?;
                    let capability = self.eval(capability)?;
                    match (form, capability) {
                        (Value::Str(form), Value::Str(capability)) => ops.push(ControlOp::QueryMi { requester, form, capability }),
                        (f, c) => return Err(type_err(format!("queryMI takes strings, got {f} and {c}"))),
                    }
                }
                OpTemplate::Other { name, .. } => return Err(EvalError::Invalid(format!("unknown control operation `{name}`"))),
            }
        }
        Ok(ops)
    }

    fn message(&mut self, m: &MessageTemplate) -> Result<Payload, EvalError> {
        let args = m.args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
        Ok(Payload { kind: m.kind.clone(), args })
    }

    fn event_field(&self, f: &str) -> Value {
        let ev = self.event;
        let id = |a: &Option<AgentId>| a.as_ref().map(AgentId::to_value).unwrap_or(Value::Null);
        match f {
            "event" => Value::str(ev.kind.as_str()),
            "kind" => ev.message.as_ref().map(|m| Value::str(&m.kind)).unwrap_or(Value::Null),
            "args" => ev.message.as_ref().map(|m| Value::List(m.args.clone())).unwrap_or(Value::Null),
            "sender" => id(&ev.sender),
            "peer" => id(&ev.peer),
            "cert" => id(&ev.cert),
            "self" => self.read_state("self"),
            "now" => Value::Num(ev.now),
            "class" => ev.class.map(|c| Value::str(c.as_str())).unwrap_or(Value::Null),
            "origin" => ev.origin.map(|o| Value::str(serde_json::to_value(o).unwrap().as_str().unwrap_or_default())).unwrap_or(Value::Null),
            "law" => Value::str(&ev.law),
            _ => Value::Null,
        }
    }

    fn op_field(&self, f: &str) -> Value {
        let Some(op) = self.op else { return Value::Null };
        let ev_msg = self.event.message.as_ref();
        match (f, op) {
            ("name", op) => Value::str(op.name()),
            ("key", ControlOp::StateUpdate { name, .. }) => Value::str(name),
            ("value", ControlOp::StateUpdate { value, .. }) => value.clone(),
            ("target", ControlOp::Emit { target, .. }) => target.to_value(),
            ("target", ControlOp::Forward) => self.event_field("peer"),
            ("target", ControlOp::QueryMi { requester, .. }) => requester.to_value(),
            ("kind", ControlOp::Emit { payload, .. }) | ("kind", ControlOp::Deliver { payload: Some(payload) }) => {
                Value::str(&payload.kind)
            }
            ("kind", ControlOp::Forward | ControlOp::Deliver { payload: None }) => {
                ev_msg.map(|m| Value::str(&m.kind)).unwrap_or(Value::Null)
            }
            ("kind", ControlOp::ImposeObligation { obligation, .. }) | ("kind", ControlOp::RepealObligation { obligation }) => {
                Value::str(&obligation.kind)
            }
            ("kind", ControlOp::Audit { kind, .. }) => Value::str(kind.as_str()),
            ("args", ControlOp::Emit { payload, .. }) | ("args", ControlOp::Deliver { payload: Some(payload) }) => {
                Value::List(payload.args.clone())
            }
            ("args", ControlOp::Forward | ControlOp::Deliver { payload: None }) => {
                ev_msg.map(|m| Value::List(m.args.clone())).unwrap_or(Value::Null)
            }
            ("delay", ControlOp::ImposeObligation { delay, .. }) => Value::Num(*delay),
            ("detail", ControlOp::Audit { detail, .. }) => detail.clone(),
            _ => Value::Null,
        }
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, EvalError> {
        Ok(match e {
            Expr::Lit(v) => v.clone(),
            Expr::Var(name) => match self.bindings.iter().rev().find(|(n, _)| n == name) {
                Some((_, v)) => v.clone(),
                None => self.read_state(name),
            },
            Expr::Keyed(name, key) => {
                let key = self.eval(key)?;
                self.read_state(&keyed_name(name, &key))
            }
            Expr::Event(f) => self.event_field(f),
            Expr::OpRef => match self.op {
                Some(op) => Value::str(op.name()),
                None => return Err(EvalError::Invalid("`op` outside a constraint".into())),
            },
            Expr::Field(base, field) => {
                if matches!(**base, Expr::OpRef) {
                    return Ok(self.op_field(field));
                }
                let v = self.eval(base)?;
                triple_field(&v, field)?
            }
            Expr::Unary(UnOp::Not, inner) => {
                let v = self.eval(inner)?;
                Value::Bool(!truth(&v)?)
            }
            Expr::Unary(UnOp::Neg, inner) => match self.eval(inner)? {
                Value::Num(n) => Value::Num(-n),
                Value::Null => Value::Num(0.0),
                other => return Err(type_err(format!("cannot negate {}", other.type_name()))),
            },
            Expr::Binary(BinOp::And, l, r) => {
                let lv = self.eval(l)?;
                if !truth(&lv)? {
                    return Ok(Value::Bool(false));
                }
                let rv = self.eval(r)?;
                Value::Bool(truth(&rv)?)
            }
            Expr::Binary(BinOp::Or, l, r) => {
                let lv = self.eval(l)?;
                if truth(&lv)? {
                    return Ok(Value::Bool(true));
                }
                let rv = self.eval(r)?;
                Value::Bool(truth(&rv)?)
            }
            Expr::Binary(op, l, r) => {
                let lv = self.eval(l)?;
                let rv = self.eval(r)?;
                binary(*op, lv, rv)?
            }
            Expr::Call(name, args) => {
                let args = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
                self.call(name, args)?
            }
            Expr::List(items) => Value::List(items.iter().map(|i| self.eval(i)).collect::<Result<_, _>>()?),
        })
    }

    fn call(&self, name: &str, args: Vec<Value>) -> Result<Value, EvalError> {
        if name == "get" {
            let [key] = args.as_slice() else { return Err(arity(name)) };
            let key = key.as_str().ok_or_else(|| type_err("get takes a variable name"))?;
            return Ok(self.read_state(key));
        }
        builtin(name, args)
    }
}

fn arity(name: &str) -> EvalError {
    EvalError::Invalid(format!("wrong number of arguments to `{name}`"))
}

fn targets(v: &Value) -> Result<Vec<AgentId>, EvalError> {
    if v.is_null() {
        return Ok(Vec::new());
    }
    if let Some(id) = AgentId::from_value(v) {
        return Ok(vec![id]);
    }
    let items = v.as_list().ok_or_else(|| type_err(format!("emit target must be an agent or a list, got {v}")))?;
    items.iter().map(|i| AgentId::from_value(i).ok_or_else(|| type_err(format!("not an agent id: {i}")))).collect()
}

fn triple_field(v: &Value, field: &str) -> Result<Value, EvalError> {
    if v.is_null() {
        return Ok(Value::Null);
    }
    let idx = match field {
        "name" => 0,
        "branch" => 1,
        "layer" => 2,
        _ => return Err(type_err(format!("unknown field `.{field}`"))),
    };
    match v.as_list() {
        Some(items) if items.len() == 3 => Ok(items[idx].clone()),
        _ => Err(type_err(format!("`.{field}` needs an agent triple, got {v}"))),
    }
}

fn num_of(v: &Value, ctx: &str) -> Result<f64, EvalError> {
    match v {
        Value::Num(n) => Ok(*n),
        Value::Null => Ok(0.0),
        other => Err(type_err(format!("{ctx} needs numbers, got {}", other.type_name()))),
    }
}

fn list_of<'v>(v: &'v Value, ctx: &str) -> Result<&'v [Value], EvalError> {
    match v {
        Value::List(items) => Ok(items),
        Value::Null => Ok(&[]),
        other => Err(type_err(format!("{ctx} needs a list, got {}", other.type_name()))),
    }
}

fn binary(op: BinOp, l: Value, r: Value) -> Result<Value, EvalError> {
    use std::cmp::Ordering;
    Ok(match op {
        BinOp::Eq => Value::Bool(l == r),
        BinOp::Ne => Value::Bool(l != r),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = match (&l, &r) {
                (Value::Str(a), Value::Str(b)) => a.cmp(b),
                _ => {
                    let a = num_of(&l, op.symbol())?;
                    let b = num_of(&r, op.symbol())?;
                    match a.partial_cmp(&b) {
                        Some(o) => o,
                        None => return Ok(Value::Bool(false)),
                    }
                }
            };
            Value::Bool(match op {
                BinOp::Lt => ord == Ordering::Less,
                BinOp::Le => ord != Ordering::Greater,
                BinOp::Gt => ord == Ordering::Greater,
                _ => ord != Ordering::Less,
            })
        }
        BinOp::In => Value::Bool(list_of(&r, "in")?.contains(&l)),
        BinOp::Add => match (l, r) {
            (Value::Str(a), Value::Str(b)) => Value::Str(a + &b),
            (Value::List(mut a), Value::List(b)) => {
                a.extend(b);
                Value::List(a)
            }
            (l, r) => Value::Num(num_of(&l, "+")? + num_of(&r, "+")?),
        },
        BinOp::Sub => Value::Num(num_of(&l, "-")? - num_of(&r, "-")?),
        BinOp::Mul => Value::Num(num_of(&l, "*")? * num_of(&r, "*")?),
        BinOp::Div | BinOp::Rem => {
            let a = num_of(&l, op.symbol())?;
            let b = num_of(&r, op.symbol())?;
            if b == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            Value::Num(if op == BinOp::Div { a / b } else { a % b })
        }
        BinOp::And | BinOp::Or => unreachable!("short-circuited by the caller"),
    })
}

/// Pure builtins (everything except `get`, which reads state).
pub(crate) fn builtin(name: &str, args: Vec<Value>) -> Result<Value, EvalError> {
    let args: &[Value] = &args;
    Ok(match (name, args) {
        ("len", [x]) => match x {
            Value::Str(s) => Value::Num(s.chars().count() as f64),
            other => Value::Num(list_of(other, "len")?.len() as f64),
        },
        ("append", [l, x]) => {
            let mut v = list_of(l, "append")?.to_vec();
            v.push(x.clone());
            Value::List(v)
        }
        ("appendUnique", [l, x]) => {
            let mut v = list_of(l, "appendUnique")?.to_vec();
            if !v.contains(x) {
                v.push(x.clone());
            }
            Value::List(v)
        }
        ("remove", [l, x]) => {
            let mut v = list_of(l, "remove")?.to_vec();
            if let Some(i) = v.iter().position(|i| i == x) {
                v.remove(i);
            }
            Value::List(v)
        }
        ("contains", [l, x]) => Value::Bool(list_of(l, "contains")?.contains(x)),
        ("head", [l]) => list_of(l, "head")?.first().cloned().unwrap_or(Value::Null),
        ("tail", [l]) => Value::List(list_of(l, "tail")?.iter().skip(1).cloned().collect()),
        ("at", [l, i]) => {
            let i = num_of(i, "at")?;
            let items = list_of(l, "at")?;
            if i < 0.0 || i.fract() != 0.0 {
                Value::Null
            } else {
                items.get(i as usize).cloned().unwrap_or(Value::Null)
            }
        }
        ("lookup", [pairs, key, default]) => list_of(pairs, "lookup")?
            .iter()
            .find_map(|p| match p.as_list() {
                Some([k, v]) if k == key => Some(v.clone()),
                _ => None,
            })
            .unwrap_or_else(|| default.clone()),
        ("if", [c, a, b]) => {
            if truth(c)? {
                a.clone()
            } else {
                b.clone()
            }
        }
        ("startsWith", [s, p]) => match (s, p) {
            (Value::Str(s), Value::Str(p)) => Value::Bool(s.starts_with(p.as_str())),
            (Value::Null, _) => Value::Bool(false),
            _ => return Err(type_err("startsWith takes strings")),
        },
        ("countAfter", [l, t]) => {
            let t = num_of(t, "countAfter")?;
            let mut n = 0.0;
            for x in list_of(l, "countAfter")? {
                if num_of(x, "countAfter")? > t {
                    n += 1.0;
                }
            }
            Value::Num(n)
        }
        ("keepAfter", [l, t]) => {
            let t = num_of(t, "keepAfter")?;
            let mut out = Vec::new();
            for x in list_of(l, "keepAfter")? {
                if num_of(x, "keepAfter")? > t {
                    out.push(x.clone());
                }
            }
            Value::List(out)
        }
        ("sum", [l]) => {
            let mut s = 0.0;
            for x in list_of(l, "sum")? {
                s += num_of(x, "sum")?;
            }
            Value::Num(s)
        }
        ("min", [a, b]) => Value::Num(num_of(a, "min")?.min(num_of(b, "min")?)),
        ("max", [a, b]) => Value::Num(num_of(a, "max")?.max(num_of(b, "max")?)),
        ("abs", [a]) => Value::Num(num_of(a, "abs")?.abs()),
        ("str", [a]) => Value::Str(a.to_string()),
        ("kindOf", [a]) => Value::str(a.type_name()),
        ("default", [a, d]) => {
            if a.is_null() {
                d.clone()
            } else {
                a.clone()
            }
        }
        (name, _) if crate::lang::validate::builtin_arity(name).is_some() => return Err(arity(name)),
        (name, _) => return Err(EvalError::UnknownFunction(name.to_string())),
    })
}
