//! Algebraic and boolean simplification.

mod algebra;
mod cond;
pub mod qm;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::expr::{count_ops, serialize, substitute, BinOp, Expr, Role, Scalar, UnOp, P};

pub use qm::{qm_minimize, Implicant};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimpError {
    #[error("{atoms} boolean variables exceed the limit of {max}")]
    TooManyAtoms { atoms: usize, max: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RewriteBudget {
    pub max_passes: usize,
    pub max_qm_vars: usize,
}

impl Default for RewriteBudget {
    fn default() -> Self {
        RewriteBudget { max_passes: 8, max_qm_vars: 16 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SimplifyOptions {
    /// Replace const symbols by their values once rewriting is done.
    pub substitute_constants: bool,
    pub constants: BTreeMap<String, f64>,
    pub budget: RewriteBudget,
}

impl SimplifyOptions {
    pub fn substituting(constants: BTreeMap<String, f64>) -> Self {
        SimplifyOptions { substitute_constants: true, constants, budget: RewriteBudget::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simplified {
    pub expr: P,
    /// Conditions left as they were because they had too many atoms.
    pub unsimplified_conditions: usize,
}

/// Minimizes every condition and turns if-then-else chains into piecewise
/// expressions.
pub fn simplify_conditional(e: &P, budget: &RewriteBudget) -> Simplified {
    let mut skipped = 0;
    let expr = cond::convert(e, budget, &mut skipped);
    Simplified { expr, unsimplified_conditions: skipped }
}

pub fn simplify(e: &P, opts: &SimplifyOptions) -> P {
    simplify_report(e, opts).expr
}

pub fn simplify_report(e: &P, opts: &SimplifyOptions) -> Simplified {
    let budget = &opts.budget;
    let mut skipped = 0;
    let mut cur = cond::convert(e, budget, &mut skipped);
    for _ in 0..2 {
        let next = algebra::simplify_algebra(&cur, budget);
        let mut s = 0;
        let next = cond::convert(&next, budget, &mut s);
        if next == cur {
            break;
        }
        cur = next;
    }
    let limit = count_ops(e) + ite_count(e);
    if count_ops(&cur) > limit {
        cur = e.clone();
    }
    if opts.substitute_constants {
        cur = orient(&substitute_constants(&cur, &opts.constants));
    }
    Simplified { expr: cur, unsimplified_conditions: skipped }
}

fn ite_count(e: &Expr) -> usize {
    usize::from(matches!(e, Expr::Ite(..))) + e.children().iter().map(|c| ite_count(c)).sum::<usize>()
}

/// Replaces const symbols that have a known value.
pub fn substitute_constants(e: &P, constants: &BTreeMap<String, f64>) -> P {
    substitute(e, &|s| match s.role {
        Role::Const => constants.get(&s.name).map(|v| Expr::num(*v)),
        _ => None,
    })
}

/// Moves numbers and constants to the right of every comparison.
pub fn orient(e: &P) -> P {
    match &**e {
        Expr::Sym(_) | Expr::Num(_) | Expr::BoolConst(_) | Expr::Undef => e.clone(),
        Expr::Cmp(op, a, b) => cond::oriented_cmp(*op, orient(a), orient(b)),
        _ => Arc::new(e.map_children(orient)),
    }
}

/// Canonical form for structural comparison: constants substituted,
/// literal-only subtrees folded in 32-bit float, sum and product chains
/// flattened and sorted, comparisons oriented.
pub fn normalize(e: &P, constants: &BTreeMap<String, f64>) -> P {
    canon(&substitute_constants(e, constants))
}

fn canon(e: &P) -> P {
    let e = match &**e {
        Expr::Sym(_) | Expr::Num(_) | Expr::BoolConst(_) | Expr::Undef => return e.clone(),
        _ => Arc::new(e.map_children(canon)),
    };
    if let Some(v) = fold_literal(&e) {
        return v;
    }
    match &*e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) | Expr::Unary(UnOp::Neg, _) => {
            let mut items = Vec::new();
            chain(&e, false, &mut items, &|e| match e {
                Expr::Binary(BinOp::Add, a, b) => Some((a.clone(), b.clone(), false)),
                Expr::Binary(BinOp::Sub, a, b) => Some((a.clone(), b.clone(), true)),
                Expr::Unary(UnOp::Neg, a) => Some((Expr::num(0.0), a.clone(), true)),
                _ => None,
            });
            rebuild_chain(items, 0.0, Expr::add, Expr::sub, |a, b| a + b, Expr::neg)
        }
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => {
            let mut items = Vec::new();
            chain(&e, false, &mut items, &|e| match e {
                Expr::Binary(BinOp::Mul, a, b) => Some((a.clone(), b.clone(), false)),
                Expr::Binary(BinOp::Div, a, b) => Some((a.clone(), b.clone(), true)),
                _ => None,
            });
            rebuild_chain(items, 1.0, Expr::mul, Expr::div, |a, b| a * b, |a| Expr::div(Expr::num(1.0), a))
        }
        Expr::Cmp(op, a, b) => cond::oriented_cmp(*op, a.clone(), b.clone()),
        _ => e,
    }
}

fn fold_literal(e: &P) -> Option<P> {
    let v = match &**e {
        Expr::Unary(op, a) => f64::apply_unary(*op, a.as_num()?).ok()?,
        Expr::Binary(op, a, b) => f64::apply_binary(*op, a.as_num()?, b.as_num()?).ok()?,
        _ => return None,
    };
    v.is_finite().then(|| Expr::num(v))
}

type Split = dyn Fn(&Expr) -> Option<(P, P, bool)>;

fn chain(e: &P, inverted: bool, out: &mut Vec<(P, bool)>, split: &Split) {
    match split(e) {
        Some((a, b, inv)) => {
            chain(&a, inverted, out, split);
            chain(&b, inverted ^ inv, out, split);
        }
        None => out.push((e.clone(), inverted)),
    }
}

fn rebuild_chain(
    items: Vec<(P, bool)>,
    unit: f64,
    join: fn(P, P) -> P,
    inverse: fn(P, P) -> P,
    combine: fn(f64, f64) -> f64,
    lone_inverse: fn(P) -> P,
) -> P {
    let additive = unit == 0.0;
    let mut lit = unit;
    let mut fwd = Vec::new();
    let mut inv = Vec::new();
    for (t, i) in items {
        match t.as_num() {
            Some(v) if additive && i => lit = combine(lit, -v),
            Some(v) if !i || additive => lit = combine(lit, v),
            _ if i => inv.push(t),
            _ => fwd.push(t),
        }
    }
    let key = |p: &P| serialize(p);
    fwd.sort_by_cached_key(key);
    inv.sort_by_cached_key(key);
    if !additive && lit == -1.0 && !fwd.is_empty() {
        let first = fwd.remove(0);
        fwd.insert(0, Expr::neg(first));
        lit = 1.0;
    }
    if lit != unit || (fwd.is_empty() && inv.is_empty()) {
        fwd.push(Expr::num(lit));
    }
    let mut acc = fwd.into_iter().reduce(join);
    for t in inv {
        acc = Some(match acc {
            Some(a) => inverse(a, t),
            None => lone_inverse(t),
        });
    }
    acc.unwrap_or_else(|| Expr::num(unit))
}

#[cfg(test)]
pub(crate) fn sx(s: &str) -> P {
    crate::expr::parse_shorthand(s).unwrap_or_else(|e| panic!("{s}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{pretty, CmpOp};

    #[test]
    fn thresh_condition_becomes_single_comparison() {
        let e = sx("(ite (not (lt x0 k0)) 1 -1)");
        let s = simplify(&e, &SimplifyOptions::substituting([("k0".to_string(), 0.0)].into()));
        assert_eq!(pretty(&s), "{ 1 if x0 >= 0; -1 otherwise }");
        let e = sx("(ite (lt x0 k0) -1 1)");
        let s = simplify(&e, &SimplifyOptions::substituting([("k0".to_string(), 0.0)].into()));
        assert_eq!(pretty(&s), "{ -1 if x0 < 0; 1 otherwise }");
    }

    #[test]
    fn zero_added_vanishes() {
        assert_eq!(simplify(&sx("(add x0 0)"), &SimplifyOptions::default()), sx("x0"));
    }

    #[test]
    fn constants_stay_symbolic_without_substitution() {
        let e = sx("(mul k1 (add x0 0))");
        assert_eq!(pretty(&simplify(&e, &SimplifyOptions::default())), "k1*x0");
    }

    #[test]
    fn normalization_sorts_and_folds() {
        let c = BTreeMap::from([("k0".to_string(), 2.0)]);
        let a = normalize(&sx("(add (add x1 k0) (add x0 3))"), &c);
        let b = normalize(&sx("(add x0 (add 5 x1))"), &c);
        assert_eq!(a, b);
        let a = normalize(&sx("(mul (mul 2 x1) (mul x0 3))"), &c);
        let b = normalize(&sx("(mul x0 (mul x1 6))"), &c);
        assert_eq!(a, b);
        let a = normalize(&sx("(gt 0 x0)"), &c);
        assert_eq!(a, Expr::cmp(CmpOp::Lt, sx("x0"), sx("0")));
    }

    #[test]
    fn too_many_atoms_is_flagged() {
        let atoms: Vec<String> = (0..9).map(|i| format!("(lt x{i} x{})", i + 10)).collect();
        let cond = sx(&format!("(and {})", atoms.join(" ")));
        let e = Expr::ite(cond.clone(), sx("x0"), sx("x1"));
        let r = simplify_conditional(&e, &RewriteBudget::default());
        assert_eq!(r.unsimplified_conditions, 1);
        assert_eq!(r.expr, Expr::piecewise(vec![(sx("x0"), cond), (sx("x1"), Expr::bool_const(true))]));
    }
}
