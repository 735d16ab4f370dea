//! Expression trees shared by every stage of the pipeline.
//!
//! An [`Expr`] is immutable once built; children are reference counted so
//! executor states can copy register contents without deep clones.

mod eval;
mod pretty;
mod scalar;
mod sexpr;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

pub use eval::{eval, eval_bool, eval_concrete, EvalEnv, EvalError};
pub use pretty::{format_num, pretty};
pub use scalar::Scalar;
pub use sexpr::{parse, parse_shorthand, serialize, ParseError};

/// Shared pointer to an immutable subtree.
pub type P = Arc<Expr>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Input,
    Output,
    Const,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Input => "input",
            Role::Output => "output",
            Role::Const => "const",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "input" => Some(Role::Input),
            "output" => Some(Role::Output),
            "const" => Some(Role::Const),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub name: String,
    pub role: Role,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnOp {
    Neg,
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Atan,
    Exp,
    Log,
    Sqrt,
}

impl UnOp {
    pub const ALL: [UnOp; 10] = [
        UnOp::Neg,
        UnOp::Sin,
        UnOp::Cos,
        UnOp::Tan,
        UnOp::Asin,
        UnOp::Acos,
        UnOp::Atan,
        UnOp::Exp,
        UnOp::Log,
        UnOp::Sqrt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnOp::Neg => "neg",
            UnOp::Sin => "sin",
            UnOp::Cos => "cos",
            UnOp::Tan => "tan",
            UnOp::Asin => "asin",
            UnOp::Acos => "acos",
            UnOp::Atan => "atan",
            UnOp::Exp => "exp",
            UnOp::Log => "log",
            UnOp::Sqrt => "sqrt",
        }
    }

    pub fn from_name(s: &str) -> Option<UnOp> {
        UnOp::ALL.into_iter().find(|op| op.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub const ALL: [BinOp; 5] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Pow];

    pub fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
            BinOp::Pow => "pow",
        }
    }

    pub fn from_name(s: &str) -> Option<BinOp> {
        BinOp::ALL.into_iter().find(|op| op.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne];

    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn from_name(s: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|op| op.name() == s)
    }

    /// The relation with operands exchanged: `a < b` iff `b > a`.
    pub fn swapped(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
        }
    }

    pub fn holds<S: PartialOrd>(self, a: S, b: S) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BoolOp {
    And,
    Or,
    Not,
    Xor,
}

impl BoolOp {
    pub fn name(self) -> &'static str {
        match self {
            BoolOp::And => "and",
            BoolOp::Or => "or",
            BoolOp::Not => "not",
            BoolOp::Xor => "xor",
        }
    }

    pub fn from_name(s: &str) -> Option<BoolOp> {
        match s {
            "and" => Some(BoolOp::And),
            "or" => Some(BoolOp::Or),
            "not" => Some(BoolOp::Not),
            "xor" => Some(BoolOp::Xor),
            _ => None,
        }
    }
}

/// Symbolic expression tree.
///
/// `Piecewise` branches are tried in order; the last branch's condition is
/// always `BoolConst(true)` and plays the role of "otherwise".
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Sym(Symbol),
    Num(f64),
    BoolConst(bool),
    Unary(UnOp, P),
    Binary(BinOp, P, P),
    Cmp(CmpOp, P, P),
    Bool(BoolOp, Vec<P>),
    Ite(P, P, P),
    Piecewise(Vec<(P, P)>),
    Call(String, Vec<P>),
    /// Value of a location that was never written on some merged path.
    Undef,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ty {
    Num,
    Bool,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TypeError {
    #[error("expected {expected:?} operand in `{context}`")]
    Mismatch { expected: Ty, context: &'static str },
    #[error("non-finite number literal {0}")]
    NonFinite(f64),
    #[error("piecewise must have at least one branch ending in an otherwise branch")]
    BadPiecewise,
    #[error("`{0}` has wrong arity")]
    Arity(&'static str),
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn sym(name: impl Into<String>, role: Role) -> P {
        Arc::new(Expr::Sym(Symbol { name: name.into(), role }))
    }

    pub fn input(name: impl Into<String>) -> P {
        Expr::sym(name, Role::Input)
    }

    pub fn konst(name: impl Into<String>) -> P {
        Expr::sym(name, Role::Const)
    }

    pub fn num(v: f64) -> P {
        debug_assert!(v.is_finite());
        Arc::new(Expr::Num(v))
    }

    pub fn bool_const(b: bool) -> P {
        Arc::new(Expr::BoolConst(b))
    }

    pub fn unary(op: UnOp, a: P) -> P {
        Arc::new(Expr::Unary(op, a))
    }

    pub fn binary(op: BinOp, a: P, b: P) -> P {
        Arc::new(Expr::Binary(op, a, b))
    }

    pub fn add(a: P, b: P) -> P {
        Expr::binary(BinOp::Add, a, b)
    }

    pub fn sub(a: P, b: P) -> P {
        Expr::binary(BinOp::Sub, a, b)
    }

    pub fn mul(a: P, b: P) -> P {
        Expr::binary(BinOp::Mul, a, b)
    }

    pub fn div(a: P, b: P) -> P {
        Expr::binary(BinOp::Div, a, b)
    }

    pub fn neg(a: P) -> P {
        Expr::unary(UnOp::Neg, a)
    }

    pub fn cmp(op: CmpOp, a: P, b: P) -> P {
        Arc::new(Expr::Cmp(op, a, b))
    }

    pub fn and(children: Vec<P>) -> P {
        Arc::new(Expr::Bool(BoolOp::And, children))
    }

    pub fn or(children: Vec<P>) -> P {
        Arc::new(Expr::Bool(BoolOp::Or, children))
    }

    pub fn not(a: P) -> P {
        Arc::new(Expr::Bool(BoolOp::Not, vec![a]))
    }

    pub fn ite(c: P, t: P, e: P) -> P {
        Arc::new(Expr::Ite(c, t, e))
    }

    pub fn piecewise(branches: Vec<(P, P)>) -> P {
        Arc::new(Expr::Piecewise(branches))
    }

    pub fn call(name: impl Into<String>, args: Vec<P>) -> P {
        Arc::new(Expr::Call(name.into(), args))
    }

    pub fn undef() -> P {
        Arc::new(Expr::Undef)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self, Expr::BoolConst(true))
    }

    pub fn is_false(&self) -> bool {
        matches!(self, Expr::BoolConst(false))
    }

    /// Direct children in a fixed order.
    pub fn children(&self) -> Vec<&P> {
        match self {
            Expr::Sym(_) | Expr::Num(_) | Expr::BoolConst(_) | Expr::Undef => vec![],
            Expr::Unary(_, a) => vec![a],
            Expr::Binary(_, a, b) | Expr::Cmp(_, a, b) => vec![a, b],
            Expr::Bool(_, cs) | Expr::Call(_, cs) => cs.iter().collect(),
            Expr::Ite(c, t, e) => vec![c, t, e],
            Expr::Piecewise(bs) => bs.iter().flat_map(|(v, c)| [v, c]).collect(),
        }
    }

    /// Rebuilds this node with `f` applied to each child.
    pub fn map_children(&self, mut f: impl FnMut(&P) -> P) -> Expr {
        match self {
            Expr::Sym(_) | Expr::Num(_) | Expr::BoolConst(_) | Expr::Undef => self.clone(),
            Expr::Unary(op, a) => Expr::Unary(*op, f(a)),
            Expr::Binary(op, a, b) => Expr::Binary(*op, f(a), f(b)),
            Expr::Cmp(op, a, b) => Expr::Cmp(*op, f(a), f(b)),
            Expr::Bool(op, cs) => Expr::Bool(*op, cs.iter().map(&mut f).collect()),
            Expr::Call(n, cs) => Expr::Call(n.clone(), cs.iter().map(&mut f).collect()),
            Expr::Ite(c, t, e) => Expr::Ite(f(c), f(t), f(e)),
            Expr::Piecewise(bs) => Expr::Piecewise(bs.iter().map(|(v, c)| (f(v), f(c))).collect()),
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Free symbols, ordered by (name, role).
    pub fn symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        self.collect_symbols(&mut out);
        out
    }

    fn collect_symbols(&self, out: &mut BTreeSet<Symbol>) {
        if let Expr::Sym(s) = self {
            out.insert(s.clone());
        }
        for c in self.children() {
            c.collect_symbols(out);
        }
    }

    pub fn mentions(&self, name: &str) -> bool {
        match self {
            Expr::Sym(s) => s.name == name,
            _ => self.children().iter().any(|c| c.mentions(name)),
        }
    }

    pub fn contains_undef(&self) -> bool {
        matches!(self, Expr::Undef) || self.children().iter().any(|c| c.contains_undef())
    }

    pub fn typecheck(&self) -> Result<Ty, TypeError> {
        fn want(e: &Expr, ty: Ty, context: &'static str) -> Result<(), TypeError> {
            if e.typecheck()? == ty {
                Ok(())
            } else {
                Err(TypeError::Mismatch { expected: ty, context })
            }
        }
        match self {
            Expr::Sym(_) | Expr::Undef => Ok(Ty::Num),
            Expr::Num(v) => {
                if v.is_finite() {
                    Ok(Ty::Num)
                } else {
                    Err(TypeError::NonFinite(*v))
                }
            }
            Expr::BoolConst(_) => Ok(Ty::Bool),
            Expr::Unary(op, a) => {
                want(a, Ty::Num, op.name())?;
                Ok(Ty::Num)
            }
            Expr::Binary(op, a, b) => {
                want(a, Ty::Num, op.name())?;
                want(b, Ty::Num, op.name())?;
                Ok(Ty::Num)
            }
            Expr::Cmp(op, a, b) => {
                want(a, Ty::Num, op.name())?;
                want(b, Ty::Num, op.name())?;
                Ok(Ty::Bool)
            }
            Expr::Bool(op, cs) => {
                let ok = match op {
                    BoolOp::Not => cs.len() == 1,
                    _ => !cs.is_empty(),
                };
                if !ok {
                    return Err(TypeError::Arity(op.name()));
                }
                for c in cs {
                    want(c, Ty::Bool, op.name())?;
                }
                Ok(Ty::Bool)
            }
            Expr::Ite(c, t, e) => {
                want(c, Ty::Bool, "ite")?;
                let ty = t.typecheck()?;
                want(e, ty, "ite")?;
                Ok(ty)
            }
            Expr::Piecewise(bs) => {
                let Some((_, last)) = bs.last() else {
                    return Err(TypeError::BadPiecewise);
                };
                if !last.is_true() {
                    return Err(TypeError::BadPiecewise);
                }
                let ty = bs[0].0.typecheck()?;
                for (v, c) in bs {
                    want(v, ty, "piecewise")?;
                    want(c, Ty::Bool, "piecewise")?;
                }
                Ok(ty)
            }
            Expr::Call(_, args) => {
                for a in args {
                    want(a, Ty::Num, "call")?;
                }
                Ok(Ty::Num)
            }
        }
    }
}

/// Operation count used as the complexity measure on both sides of every
/// recovered/ground-truth ratio.
///
/// Leaves count 0; every unary, binary, comparison, `not`, if-then-else and
/// call counts 1; an n-ary `and`/`or`/`xor` counts n-1; a piecewise counts 1
/// per branch plus the branch contents.
pub fn count_ops(e: &Expr) -> usize {
    let own = match e {
        Expr::Sym(_) | Expr::Num(_) | Expr::BoolConst(_) | Expr::Undef => 0,
        Expr::Bool(BoolOp::Not, _) => 1,
        Expr::Bool(_, cs) => cs.len().saturating_sub(1),
        Expr::Piecewise(bs) => bs.len(),
        _ => 1,
    };
    own + e.children().iter().map(|c| count_ops(c)).sum::<usize>()
}

/// Replaces symbols by name.
pub fn substitute(e: &P, f: &dyn Fn(&Symbol) -> Option<P>) -> P {
    match &**e {
        Expr::Sym(s) => f(s).unwrap_or_else(|| e.clone()),
        Expr::Num(_) | Expr::BoolConst(_) | Expr::Undef => e.clone(),
        _ => Arc::new(e.map_children(|c| substitute(c, f))),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty(self))
    }
}
