use std::collections::HashMap;

use super::{BoolOp, Expr, Scalar};

/// Symbol bindings for concrete evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalEnv<S = f32> {
    bindings: HashMap<String, S>,
}

impl<S: Scalar> EvalEnv<S> {
    pub fn new() -> Self {
        EvalEnv { bindings: HashMap::new() }
    }

    pub fn bind(&mut self, name: impl Into<String>, v: S) -> &mut Self {
        self.bindings.insert(name.into(), v);
        self
    }

    pub fn with(mut self, name: impl Into<String>, v: S) -> Self {
        self.bind(name, v);
        self
    }

    pub fn get(&self, name: &str) -> Option<S> {
        self.bindings.get(name).copied()
    }
}

impl<S: Scalar, N: Into<String>> FromIterator<(N, S)> for EvalEnv<S> {
    fn from_iter<I: IntoIterator<Item = (N, S)>>(iter: I) -> Self {
        EvalEnv { bindings: iter.into_iter().map(|(n, v)| (n.into(), v)).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("call to `{0}` cannot be evaluated")]
    Call(String),
    #[error("value is undefined on this path")]
    Undef,
    #[error("type error: expected a {0} expression")]
    Type(&'static str),
}

/// Evaluates a numeric expression in the scalar type `S`, rounding after every
/// operation.
pub fn eval<S: Scalar>(e: &Expr, env: &EvalEnv<S>) -> Result<S, EvalError> {
    match e {
        Expr::Sym(s) => env.get(&s.name).ok_or_else(|| EvalError::Unbound(s.name.clone())),
        Expr::Num(v) => Ok(S::from_f64_lossy(*v)),
        Expr::Unary(op, a) => S::apply_unary(*op, eval(a, env)?).map_err(EvalError::Domain),
        Expr::Binary(op, a, b) => {
            let a = eval(a, env)?;
            let b = eval(b, env)?;
            S::apply_binary(*op, a, b).map_err(EvalError::Domain)
        }
        Expr::Ite(c, t, f) => {
            if eval_bool(c, env)? {
                eval(t, env)
            } else {
                eval(f, env)
            }
        }
        Expr::Piecewise(bs) => {
            for (v, c) in bs {
                if eval_bool(c, env)? {
                    return eval(v, env);
                }
            }
            Err(EvalError::Undef)
        }
        Expr::Call(name, _) => Err(EvalError::Call(name.clone())),
        Expr::Undef => Err(EvalError::Undef),
        Expr::BoolConst(_) | Expr::Cmp(..) | Expr::Bool(..) => Err(EvalError::Type("numeric")),
    }
}

pub fn eval_bool<S: Scalar>(e: &Expr, env: &EvalEnv<S>) -> Result<bool, EvalError> {
    match e {
        Expr::BoolConst(b) => Ok(*b),
        Expr::Cmp(op, a, b) => Ok(op.holds(eval(a, env)?, eval(b, env)?)),
        Expr::Bool(BoolOp::Not, cs) => Ok(!eval_bool(&cs[0], env)?),
        Expr::Bool(BoolOp::And, cs) => {
            for c in cs {
                if !eval_bool(c, env)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Expr::Bool(BoolOp::Or, cs) => {
            for c in cs {
                if eval_bool(c, env)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Expr::Bool(BoolOp::Xor, cs) => {
            let mut acc = false;
            for c in cs {
                acc ^= eval_bool(c, env)?;
            }
            Ok(acc)
        }
        Expr::Ite(c, t, f) => {
            if eval_bool(c, env)? {
                eval_bool(t, env)
            } else {
                eval_bool(f, env)
            }
        }
        Expr::Piecewise(bs) => {
            for (v, c) in bs {
                if eval_bool(c, env)? {
                    return eval_bool(v, env);
                }
            }
            Err(EvalError::Undef)
        }
        _ => Err(EvalError::Type("boolean")),
    }
}

/// Machine-faithful evaluation in 32-bit floats.
pub fn eval_concrete(e: &Expr, env: &EvalEnv<f32>) -> Result<f32, EvalError> {
    eval(e, env)
}
