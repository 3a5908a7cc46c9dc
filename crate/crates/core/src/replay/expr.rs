use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

/// Token colour: an identifier, a pair `(id, value)` or a list of identifiers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(untagged)]
pub enum Value {
    Id(String),
    Pair(String, Box<Value>),
    List(Vec<String>),
}

impl Value {
    pub fn id(s: impl Into<String>) -> Value {
        Value::Id(s.into())
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Id(_) => "identifier",
            Value::Pair(..) => "pair",
            Value::List(_) => "list",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Id(s) => f.write_str(s),
            Value::Pair(a, b) => write!(f, "({a},{b})"),
            Value::List(xs) => write!(f, "⟨{}⟩", xs.join(",")),
        }
    }
}

/// Arc inscription. `Fresh` is the ν operator creating a new identifier,
/// `Append(q, x)` is `q^^[x]` and `Cons(x, q)` is `x::q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArcExpr {
    Var(String),
    Fresh(String),
    Pair(String, Box<ArcExpr>),
    Append(String, String),
    Cons(String, String),
}

impl ArcExpr {
    pub fn var(name: &str) -> ArcExpr {
        ArcExpr::Var(name.to_string())
    }

    pub fn pair(name: &str, second: ArcExpr) -> ArcExpr {
        ArcExpr::Pair(name.to_string(), Box::new(second))
    }
}

pub type Binding = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ArcError {
    #[error("unbound variable {0:?}")]
    Unbound(String),
    #[error("cannot take the head of an empty list")]
    EmptyList,
    #[error("expected {expected}, found {found}")]
    TypeMismatch { expected: &'static str, found: String },
    #[error("identifier {0:?} was already created earlier")]
    FreshReused(String),
}

/// Identifiers already produced by ν; a fresh identifier must not repeat.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FreshPool {
    used: BTreeSet<String>,
    counter: u64,
}

impl FreshPool {
    /// Adopts `proposed` if still unused, otherwise fails; without a proposal
    /// a new identifier is generated.
    pub fn draw(&mut self, proposed: Option<&str>) -> Result<String, ArcError> {
        match proposed {
            Some(id) if self.used.contains(id) => Err(ArcError::FreshReused(id.to_string())),
            Some(id) => {
                self.used.insert(id.to_string());
                Ok(id.to_string())
            }
            None => loop {
                let id = format!("ν{}", self.counter);
                self.counter += 1;
                if self.used.insert(id.clone()) {
                    return Ok(id);
                }
            },
        }
    }

    pub fn is_used(&self, id: &str) -> bool {
        self.used.contains(id)
    }
}

fn lookup<'a>(binding: &'a Binding, name: &str) -> Result<&'a Value, ArcError> {
    binding.get(name).ok_or_else(|| ArcError::Unbound(name.to_string()))
}

fn ident(binding: &Binding, name: &str) -> Result<String, ArcError> {
    match lookup(binding, name)? {
        Value::Id(s) => Ok(s.clone()),
        other => Err(ArcError::TypeMismatch {
            expected: "identifier",
            found: other.kind().to_string(),
        }),
    }
}

fn list(binding: &Binding, name: &str) -> Result<Vec<String>, ArcError> {
    match lookup(binding, name)? {
        Value::List(xs) => Ok(xs.clone()),
        other => Err(ArcError::TypeMismatch {
            expected: "list",
            found: other.kind().to_string(),
        }),
    }
}

/// Evaluates an output inscription. A `Fresh` name adopts its bound value
/// (if any) as the proposed identifier and records it in the pool.
pub fn eval_arc_expr(expr: &ArcExpr, binding: &Binding, fresh: &mut FreshPool) -> Result<Value, ArcError> {
    Ok(match expr {
        ArcExpr::Var(name) => lookup(binding, name)?.clone(),
        ArcExpr::Fresh(name) => {
            let proposed = match binding.get(name) {
                Some(Value::Id(s)) => Some(s.as_str()),
                Some(other) => {
                    return Err(ArcError::TypeMismatch {
                        expected: "identifier",
                        found: other.kind().to_string(),
                    })
                }
                None => None,
            };
            Value::Id(fresh.draw(proposed)?)
        }
        ArcExpr::Pair(name, second) => {
            Value::Pair(ident(binding, name)?, Box::new(eval_arc_expr(second, binding, fresh)?))
        }
        ArcExpr::Append(q, x) => {
            let mut xs = list(binding, q)?;
            xs.push(ident(binding, x)?);
            Value::List(xs)
        }
        ArcExpr::Cons(x, q) => {
            let mut xs = vec![ident(binding, x)?];
            xs.extend(list(binding, q)?);
            Value::List(xs)
        }
    })
}

/// Why a token does not match an input inscription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mismatch {
    /// A bound variable disagrees with the token.
    Differs { name: String, bound: Value, found: Value },
    Arc(ArcError),
}

fn bind(binding: &mut Binding, name: &str, value: Value) -> Result<(), Mismatch> {
    match binding.get(name) {
        Some(bound) if *bound != value => Err(Mismatch::Differs {
            name: name.to_string(),
            bound: bound.clone(),
            found: value,
        }),
        Some(_) => Ok(()),
        None => {
            binding.insert(name.to_string(), value);
            Ok(())
        }
    }
}

/// Matches an input inscription against a token, extending `binding` with
/// the variables it fixes. `Cons(x, q)` binds the head to `x` and the rest to `q`.
pub fn match_arc_expr(expr: &ArcExpr, value: &Value, binding: &mut Binding) -> Result<(), Mismatch> {
    let mismatch = |expected: &'static str| {
        Mismatch::Arc(ArcError::TypeMismatch {
            expected,
            found: value.kind().to_string(),
        })
    };
    match (expr, value) {
        (ArcExpr::Var(name) | ArcExpr::Fresh(name), v) => bind(binding, name, v.clone()),
        (ArcExpr::Pair(name, second), Value::Pair(a, b)) => {
            bind(binding, name, Value::Id(a.clone()))?;
            match_arc_expr(second, b, binding)
        }
        (ArcExpr::Pair(..), _) => Err(mismatch("pair")),
        (ArcExpr::Cons(x, q), Value::List(xs)) => {
            let (head, rest) = xs.split_first().ok_or(Mismatch::Arc(ArcError::EmptyList))?;
            bind(binding, x, Value::Id(head.clone()))?;
            bind(binding, q, Value::List(rest.to_vec()))
        }
        (ArcExpr::Append(q, x), Value::List(xs)) => {
            let (last, init) = xs.split_last().ok_or(Mismatch::Arc(ArcError::EmptyList))?;
            bind(binding, x, Value::Id(last.clone()))?;
            bind(binding, q, Value::List(init.to_vec()))
        }
        (ArcExpr::Cons(..) | ArcExpr::Append(..), _) => Err(mismatch("list")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binding(pairs: &[(&str, Value)]) -> Binding {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn append_to_empty_queue() {
        let b = binding(&[("q", Value::List(vec![])), ("pid", Value::id("50"))]);
        let v = eval_arc_expr(&ArcExpr::Append("q".into(), "pid".into()), &b, &mut FreshPool::default()).unwrap();
        assert_eq!(v, Value::List(vec!["50".into()]));
    }

    #[test]
    fn cons_splits_head_and_rest() {
        let mut b = Binding::new();
        match_arc_expr(&ArcExpr::Cons("pid".into(), "q".into()), &Value::List(vec!["50".into()]), &mut b).unwrap();
        assert_eq!(b["pid"], Value::id("50"));
        assert_eq!(b["q"], Value::List(vec![]));
        let err = match_arc_expr(&ArcExpr::Cons("pid".into(), "q".into()), &Value::List(vec![]), &mut Binding::new());
        assert_eq!(err, Err(Mismatch::Arc(ArcError::EmptyList)));
    }

    #[test]
    fn cons_respects_bound_head() {
        let mut b = binding(&[("pid", Value::id("51"))]);
        let err = match_arc_expr(&ArcExpr::Cons("pid".into(), "q".into()), &Value::List(vec!["50".into()]), &mut b);
        assert!(matches!(err, Err(Mismatch::Differs { .. })));
    }

    #[test]
    fn var_is_identity_and_unbound_fails() {
        let b = binding(&[("rid", Value::id("m4"))]);
        let mut pool = FreshPool::default();
        assert_eq!(eval_arc_expr(&ArcExpr::var("rid"), &b, &mut pool).unwrap(), Value::id("m4"));
        assert_eq!(
            eval_arc_expr(&ArcExpr::var("pid"), &b, &mut pool),
            Err(ArcError::Unbound("pid".into()))
        );
        assert!(matches!(
            eval_arc_expr(&ArcExpr::Append("rid".into(), "rid".into()), &b, &mut pool),
            Err(ArcError::TypeMismatch { .. })
        ));
    }

    #[test]
    fn fresh_adopts_proposal_once() {
        let b = binding(&[("pid", Value::id("50"))]);
        let mut pool = FreshPool::default();
        assert_eq!(eval_arc_expr(&ArcExpr::Fresh("pid".into()), &b, &mut pool).unwrap(), Value::id("50"));
        assert_eq!(
            eval_arc_expr(&ArcExpr::Fresh("pid".into()), &b, &mut pool),
            Err(ArcError::FreshReused("50".into()))
        );
        let generated = eval_arc_expr(&ArcExpr::Fresh("x".into()), &Binding::new(), &mut pool).unwrap();
        assert_ne!(generated, Value::id("50"));
    }

    #[test]
    fn pair_round_trip() {
        let expr = ArcExpr::pair("qid", ArcExpr::Append("q".into(), "pid".into()));
        let b = binding(&[
            ("qid", Value::id("c3:m3")),
            ("q", Value::List(vec!["7".into()])),
            ("pid", Value::id("50")),
        ]);
        let v = eval_arc_expr(&expr, &b, &mut FreshPool::default()).unwrap();
        assert_eq!(v.to_string(), "(c3:m3,⟨7,50⟩)");
        let mut back = Binding::new();
        match_arc_expr(&expr, &v, &mut back).unwrap();
        assert_eq!(back, b);
    }
}
