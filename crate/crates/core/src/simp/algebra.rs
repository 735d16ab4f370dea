//! Algebraic rewriting over sum-of-products normal forms.

use std::collections::HashMap;
use std::sync::Arc;

use super::RewriteBudget;
use crate::expr::{count_ops, serialize, BinOp, BoolOp, Expr, Scalar, UnOp, P};

/// Bottom-up rewriting repeated until nothing changes or the pass budget
/// runs out. A node's rewrite is kept only when it lowers the op count.
pub(crate) fn simplify_algebra(e: &P, budget: &RewriteBudget) -> P {
    let mut cur = e.clone();
    for _ in 0..budget.max_passes {
        let mut memo = HashMap::new();
        let next = pass(&cur, &mut memo);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn pass(e: &P, memo: &mut HashMap<*const Expr, P>) -> P {
    let key = Arc::as_ptr(e);
    if let Some(v) = memo.get(&key) {
        return v.clone();
    }
    let base = match &**e {
        Expr::Sym(_) | Expr::Num(_) | Expr::BoolConst(_) | Expr::Undef => e.clone(),
        _ => Arc::new(e.map_children(|c| pass(c, memo))),
    };
    let out = match rewrite(&base) {
        Some(r) if count_ops(&r) < count_ops(&base) => r,
        _ => base,
    };
    memo.insert(key, out.clone());
    out
}

fn rewrite(e: &P) -> Option<P> {
    if let Some(v) = fold(e) {
        return Some(v);
    }
    match &**e {
        Expr::Unary(UnOp::Exp, a) | Expr::Unary(UnOp::Log, a) => {
            let inverse = if matches!(&**e, Expr::Unary(UnOp::Exp, _)) { UnOp::Log } else { UnOp::Exp };
            match &**a {
                Expr::Unary(op, inner) if *op == inverse => Some(inner.clone()),
                _ => None,
            }
        }
        Expr::Unary(UnOp::Neg, _) | Expr::Binary(BinOp::Add | BinOp::Sub, ..) => Some(Lin::of(e).rebuild()),
        Expr::Binary(BinOp::Mul | BinOp::Div | BinOp::Pow, ..) => Some(Prod::of(e).rebuild()),
        Expr::Ite(_, t, f) if t == f => Some(t.clone()),
        _ => None,
    }
}

/// Evaluates nodes whose operands are all literals.
fn fold(e: &P) -> Option<P> {
    let num = |v: f64| v.is_finite().then(|| Expr::num(v));
    match &**e {
        Expr::Unary(op, a) => num(f64::apply_unary(*op, a.as_num()?).ok()?),
        Expr::Binary(op, a, b) => num(f64::apply_binary(*op, a.as_num()?, b.as_num()?).ok()?),
        Expr::Cmp(op, a, b) => {
            if a == b {
                return Some(Expr::bool_const(op.holds(0.0, 0.0)));
            }
            Some(Expr::bool_const(op.holds(a.as_num()?, b.as_num()?)))
        }
        Expr::Bool(BoolOp::Not, cs) => match &*cs[0] {
            Expr::BoolConst(b) => Some(Expr::bool_const(!b)),
            _ => None,
        },
        Expr::Bool(op @ (BoolOp::And | BoolOp::Or), cs) => {
            let absorbing = *op == BoolOp::Or;
            if cs.iter().any(|c| matches!(&**c, Expr::BoolConst(b) if *b == absorbing)) {
                return Some(Expr::bool_const(absorbing));
            }
            let rest: Vec<P> = cs.iter().filter(|c| !matches!(&***c, Expr::BoolConst(_))).cloned().collect();
            if rest.len() == cs.len() {
                return None;
            }
            Some(match rest.len() {
                0 => Expr::bool_const(!absorbing),
                1 => rest[0].clone(),
                _ => Arc::new(Expr::Bool(*op, rest)),
            })
        }
        Expr::Ite(c, t, f) => match &**c {
            Expr::BoolConst(true) => Some(t.clone()),
            Expr::BoolConst(false) => Some(f.clone()),
            _ => None,
        },
        _ => None,
    }
}

type Factors = Vec<(P, i32)>;
type Group = (Vec<(String, i32)>, Factors, Vec<Prod>);

/// `coef * Π base^exp`.
#[derive(Clone, Debug)]
struct Prod {
    coef: f64,
    factors: Factors,
}

impl Prod {
    fn one() -> Prod {
        Prod { coef: 1.0, factors: Vec::new() }
    }

    fn opaque(e: &P) -> Prod {
        Prod { coef: 1.0, factors: vec![(e.clone(), 1)] }
    }

    fn of(e: &P) -> Prod {
        match &**e {
            Expr::Num(v) => Prod { coef: *v, factors: Vec::new() },
            Expr::Unary(UnOp::Neg, a) => {
                let mut p = Prod::of(a);
                p.coef = -p.coef;
                p
            }
            Expr::Binary(BinOp::Mul, a, b) => {
                let mut p = Prod::of(a);
                p.times(Prod::of(b), 1);
                p
            }
            Expr::Binary(BinOp::Div, a, b) => {
                let d = Prod::of(b);
                if d.coef == 0.0 {
                    return Prod::opaque(e);
                }
                let mut p = Prod::of(a);
                p.times(d, -1);
                p
            }
            Expr::Binary(BinOp::Pow, a, b) => match b.as_num() {
                Some(n) if n.fract() == 0.0 && n.abs() <= 64.0 && n != 0.0 => {
                    let inner = Prod::of(a);
                    let mut p = Prod::one();
                    for _ in 0..n.abs() as i32 {
                        p.times(inner.clone(), n.signum() as i32);
                    }
                    p
                }
                _ => Prod::opaque(e),
            },
            _ => Prod::opaque(e),
        }
    }

    fn times(&mut self, other: Prod, sign: i32) {
        if sign > 0 {
            self.coef *= other.coef;
        } else {
            let q = self.coef / other.coef;
            if q * other.coef == self.coef {
                self.coef = q;
            } else {
                self.push(Expr::num(other.coef.abs()), -1);
                if other.coef < 0.0 {
                    self.coef = -self.coef;
                }
            }
        }
        for (b, k) in other.factors {
            self.push(b, k * sign);
        }
    }

    fn push(&mut self, base: P, exp: i32) {
        if let Expr::Unary(UnOp::Sqrt, inner) = &*base {
            if exp % 2 == 0 {
                return self.push(inner.clone(), exp / 2);
            }
        }
        match self.factors.iter().position(|(b, _)| *b == base) {
            Some(i) => {
                self.factors[i].1 += exp;
                if self.factors[i].1 == 0 {
                    self.factors.remove(i);
                } else if self.factors[i].1 % 2 == 0 {
                    if let Expr::Unary(UnOp::Sqrt, _) = &*base {
                        let (b, k) = self.factors.remove(i);
                        self.push(b, k);
                    }
                }
            }
            None if exp != 0 => self.factors.push((base, exp)),
            None => {}
        }
    }

    fn key(&self) -> Vec<(String, i32)> {
        let mut k: Vec<_> = self.factors.iter().map(|(b, e)| (serialize(b), *e)).collect();
        k.sort();
        k
    }

    /// Rebuilds `|coef| * Π` with the sign left to the caller.
    fn magnitude(&self) -> P {
        let power =
            |b: &P, k: i32| if k == 1 { b.clone() } else { Expr::binary(BinOp::Pow, b.clone(), Expr::num(k as f64)) };
        let mag = self.coef.abs();
        let mut num: Vec<P> = self.factors.iter().filter(|(_, k)| *k > 0).map(|(b, k)| power(b, *k)).collect();
        let den: Vec<P> = self.factors.iter().filter(|(_, k)| *k < 0).map(|(b, k)| power(b, -k)).collect();
        if mag != 1.0 || num.is_empty() {
            num.insert(0, Expr::num(mag));
        }
        let product = |v: Vec<P>| v.into_iter().reduce(Expr::mul).unwrap_or_else(|| Expr::num(1.0));
        let numer = product(num);
        if den.is_empty() {
            numer
        } else {
            Expr::div(numer, product(den))
        }
    }

    fn rebuild(&self) -> P {
        if self.coef == 0.0 {
            return Expr::num(0.0);
        }
        let m = self.magnitude();
        if self.coef < 0.0 {
            Expr::neg(m)
        } else {
            m
        }
    }
}

/// `Σ term + constant` with like terms collected.
#[derive(Debug, Default)]
struct Lin {
    terms: Vec<(Vec<(String, i32)>, Prod)>,
    konst: f64,
}

impl Lin {
    fn of(e: &P) -> Lin {
        let mut l = Lin::default();
        l.add(e, 1.0);
        l
    }

    fn add(&mut self, e: &P, sign: f64) {
        match &**e {
            Expr::Num(v) => self.konst += sign * v,
            Expr::Binary(BinOp::Add, a, b) => {
                self.add(a, sign);
                self.add(b, sign);
            }
            Expr::Binary(BinOp::Sub, a, b) => {
                self.add(a, sign);
                self.add(b, -sign);
            }
            Expr::Unary(UnOp::Neg, a) => self.add(a, -sign),
            _ => {
                let mut p = Prod::of(e);
                p.coef *= sign;
                if p.factors.is_empty() {
                    self.konst += p.coef;
                    return;
                }
                let k = p.key();
                match self.terms.iter_mut().find(|(tk, _)| *tk == k) {
                    Some((_, t)) => t.coef += p.coef,
                    None => self.terms.push((k, p)),
                }
            }
        }
    }

    fn rebuild(&self) -> P {
        let live: Vec<&Prod> = self.terms.iter().map(|(_, p)| p).filter(|p| p.coef != 0.0).collect();
        let plain = assemble(live.iter().map(|p| (p.magnitude(), p.coef < 0.0)).collect(), self.konst);
        let grouped = self.grouped(&live);
        match grouped {
            Some(g) if count_ops(&g) < count_ops(&plain) => g,
            _ => plain,
        }
    }

    /// Combines terms sharing a denominator into a single fraction.
    fn grouped(&self, live: &[&Prod]) -> Option<P> {
        let mut groups: Vec<Group> = Vec::new();
        let mut items: Vec<(Option<usize>, &Prod)> = Vec::new();
        for p in live {
            let den: Factors = p.factors.iter().filter(|(_, k)| *k < 0).cloned().collect();
            if den.is_empty() {
                items.push((None, p));
                continue;
            }
            let dk = Prod { coef: 1.0, factors: den.clone() }.key();
            let numer = Prod { coef: p.coef, factors: p.factors.iter().filter(|(_, k)| *k > 0).cloned().collect() };
            match groups.iter().position(|(k, _, _)| *k == dk) {
                Some(i) => groups[i].2.push(numer),
                None => {
                    groups.push((dk, den, vec![numer]));
                    items.push((Some(groups.len() - 1), p));
                }
            }
        }
        if groups.iter().all(|g| g.2.len() < 2) {
            return None;
        }
        let parts = items
            .into_iter()
            .map(|(g, p)| match g {
                Some(i) if groups[i].2.len() > 1 => {
                    let terms = groups[i].2.iter().map(|n| (n.magnitude(), n.coef < 0.0)).collect();
                    let numer = assemble(terms, 0.0);
                    let den = Prod { coef: 1.0, factors: groups[i].1.iter().map(|(b, k)| (b.clone(), -k)).collect() };
                    (Expr::div(numer, den.magnitude()), false)
                }
                _ => (p.magnitude(), p.coef < 0.0),
            })
            .collect();
        Some(assemble(parts, self.konst))
    }
}

/// Positive terms first, then negatives subtracted, constant last.
fn assemble(terms: Vec<(P, bool)>, konst: f64) -> P {
    let mut acc: Option<P> = None;
    for (t, _) in terms.iter().filter(|(_, neg)| !neg) {
        acc = Some(match acc {
            Some(a) => Expr::add(a, t.clone()),
            None => t.clone(),
        });
    }
    for (t, _) in terms.iter().filter(|(_, neg)| *neg) {
        acc = Some(match acc {
            Some(a) => Expr::sub(a, t.clone()),
            None => Expr::neg(t.clone()),
        });
    }
    match acc {
        None => Expr::num(konst),
        Some(a) if konst > 0.0 => Expr::add(a, Expr::num(konst)),
        Some(a) if konst < 0.0 => Expr::sub(a, Expr::num(-konst)),
        Some(a) => a,
    }
}
