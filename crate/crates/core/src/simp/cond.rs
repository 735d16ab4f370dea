//! Boolean condition minimization over canonical comparison atoms and
//! if-then-else to piecewise conversion.
//!
//! Every comparison `a REL b` is rewritten over a canonical pair `(l, r)`
//! (ordered by serialized form) as a set of outcomes drawn from
//! `{l < r, l == r, l > r}`. Each pair contributes two boolean variables,
//! `LT` and `EQ`; the assignment with both set is impossible and becomes a
//! don't-care for the minimizer.

use std::collections::HashMap;
use std::sync::Arc;

use super::qm::{conj, disj, minimize, Skeleton};
use super::RewriteBudget;
use crate::expr::{count_ops, serialize, CmpOp, Expr, Role, P};

const LT: u8 = 1;
const EQ: u8 = 2;
const GT: u8 = 4;
const ALL: u8 = LT | EQ | GT;

fn outcomes(op: CmpOp) -> u8 {
    match op {
        CmpOp::Lt => LT,
        CmpOp::Le => LT | EQ,
        CmpOp::Gt => GT,
        CmpOp::Ge => EQ | GT,
        CmpOp::Eq => EQ,
        CmpOp::Ne => LT | GT,
    }
}

fn mirror(set: u8) -> u8 {
    (set & EQ) | ((set & LT) << 2) | ((set & GT) >> 2)
}

fn relation(set: u8) -> Option<CmpOp> {
    match set {
        LT => Some(CmpOp::Lt),
        EQ => Some(CmpOp::Eq),
        GT => Some(CmpOp::Gt),
        s if s == LT | EQ => Some(CmpOp::Le),
        s if s == EQ | GT => Some(CmpOp::Ge),
        s if s == LT | GT => Some(CmpOp::Ne),
        _ => None,
    }
}

fn is_constant_like(e: &Expr) -> bool {
    match e {
        Expr::Num(_) => true,
        Expr::Sym(s) => s.role == Role::Const,
        _ => false,
    }
}

/// Builds `l REL r`, moving numbers and constants to the right-hand side.
pub(crate) fn oriented_cmp(op: CmpOp, l: P, r: P) -> P {
    if is_constant_like(&l) && !is_constant_like(&r) {
        Expr::cmp(op.swapped(), r, l)
    } else {
        Expr::cmp(op, l, r)
    }
}

#[derive(Default)]
struct Atoms {
    pairs: Vec<(P, P)>,
    index: HashMap<(String, String), usize>,
    /// (atom, accepted outcomes) per skeleton variable.
    leaves: Vec<(usize, u8)>,
}

impl Atoms {
    /// Skeleton leaf for a comparison; `None` for leaves that are not
    /// comparisons.
    fn leaf(&mut self, e: &P) -> Option<Skeleton> {
        let Expr::Cmp(op, a, b) = &**e else {
            return None;
        };
        if a == b {
            return Some(Skeleton::Const(op.holds(0.0, 0.0)));
        }
        if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
            return Some(Skeleton::Const(op.holds(x, y)));
        }
        let (ka, kb) = (serialize(a), serialize(b));
        let (key, pair, set) = if ka <= kb {
            ((ka, kb), (a.clone(), b.clone()), outcomes(*op))
        } else {
            ((kb, ka), (b.clone(), a.clone()), mirror(outcomes(*op)))
        };
        let atom = match self.index.get(&key) {
            Some(&i) => i,
            None => {
                self.pairs.push(pair);
                self.index.insert(key, self.pairs.len() - 1);
                self.pairs.len() - 1
            }
        };
        let var = match self.leaves.iter().position(|l| *l == (atom, set)) {
            Some(v) => v,
            None => {
                self.leaves.push((atom, set));
                self.leaves.len() - 1
            }
        };
        Some(Skeleton::Var(var))
    }

    fn skeleton(&mut self, e: &P) -> Option<Skeleton> {
        let mut ok = true;
        let sk = Skeleton::build(e, &mut |leaf| {
            self.leaf(leaf).unwrap_or_else(|| {
                ok = false;
                Skeleton::Const(false)
            })
        });
        ok.then_some(sk)
    }
}

fn outcome(m: u32, atom: usize) -> Option<u8> {
    match (m >> (2 * atom) & 1, m >> (2 * atom + 1) & 1) {
        (1, 0) => Some(LT),
        (0, 1) => Some(EQ),
        (0, 0) => Some(GT),
        _ => None,
    }
}

/// Minimizes `cond` assuming none of `earlier` holds.
///
/// Returns `None` when the condition has leaves other than comparisons or
/// more atoms than the budget allows.
pub(crate) fn minimize_condition(cond: &P, earlier: &[P], budget: &RewriteBudget) -> Option<P> {
    let mut atoms = Atoms::default();
    let sk = atoms.skeleton(cond)?;
    let own_atoms = atoms.pairs.len();
    if 2 * own_atoms > budget.max_qm_vars {
        return None;
    }
    let mut context = Vec::new();
    for e in earlier {
        let before = (atoms.pairs.len(), atoms.leaves.len());
        match atoms.skeleton(e) {
            Some(s) if 2 * atoms.pairs.len() <= budget.max_qm_vars => context.push(s),
            _ => {
                atoms.pairs.truncate(before.0);
                atoms.leaves.truncate(before.1);
                atoms.index.retain(|_, v| *v < before.0);
            }
        }
    }
    let k = atoms.pairs.len();
    let n = 2 * k;
    let mut on = Vec::new();
    let mut dc = Vec::new();
    for m in 0..1u32 << n {
        let outs: Option<Vec<u8>> = (0..k).map(|a| outcome(m, a)).collect();
        let Some(outs) = outs else {
            dc.push(m);
            continue;
        };
        let var = |v: usize| {
            let (a, set) = atoms.leaves[v];
            outs[a] & set != 0
        };
        if context.iter().any(|c| c.eval(&var)) {
            dc.push(m);
        } else if sk.eval(&var) {
            on.push(m);
        }
    }
    let cover = minimize(n, &on, &dc);
    let mut terms: Vec<Vec<u8>> = cover
        .iter()
        .map(|imp| {
            (0..k)
                .map(|a| {
                    let (lt, eq) = (imp.literal(2 * a), imp.literal(2 * a + 1));
                    let mut set = 0;
                    if lt != Some(false) && eq != Some(true) {
                        set |= LT;
                    }
                    if lt != Some(true) && eq != Some(false) {
                        set |= EQ;
                    }
                    if lt != Some(true) && eq != Some(true) {
                        set |= GT;
                    }
                    set
                })
                .collect()
        })
        .filter(|t: &Vec<u8>| t.iter().all(|s| *s != 0))
        .collect();
    merge_terms(&mut terms);
    let built: Vec<P> = terms
        .iter()
        .map(|t| {
            let lits = t
                .iter()
                .enumerate()
                .filter(|(_, s)| **s != ALL)
                .filter_map(|(a, s)| {
                    let (l, r) = &atoms.pairs[a];
                    relation(*s).map(|op| oriented_cmp(op, l.clone(), r.clone()))
                })
                .collect();
            conj(lits)
        })
        .collect();
    Some(disj(built))
}

/// Drops terms implied by others and joins terms that differ in one atom.
fn merge_terms(terms: &mut Vec<Vec<u8>>) {
    loop {
        let mut changed = false;
        'outer: for i in 0..terms.len() {
            for j in 0..terms.len() {
                if i == j {
                    continue;
                }
                let (a, b) = (&terms[i], &terms[j]);
                if a.iter().zip(b).all(|(x, y)| x & !y == 0) {
                    terms.remove(i);
                    changed = true;
                    break 'outer;
                }
                let diff: Vec<usize> = (0..a.len()).filter(|&x| a[x] != b[x]).collect();
                if diff.len() == 1 {
                    let d = diff[0];
                    let mut joined = a.clone();
                    joined[d] |= b[d];
                    let (lo, hi) = (i.min(j), i.max(j));
                    terms.remove(hi);
                    terms[lo] = joined;
                    changed = true;
                    break 'outer;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

/// Simplifies a condition, keeping the original when minimization is not
/// possible or would grow it.
fn simplify_cond(cond: &P, earlier: &[P], budget: &RewriteBudget, skipped: &mut usize) -> P {
    match minimize_condition(cond, earlier, budget) {
        Some(m) if m.is_true() || m.is_false() || count_ops(&m) <= count_ops(cond) => m,
        Some(_) => cond.clone(),
        None => {
            *skipped += 1;
            cond.clone()
        }
    }
}

/// Simplifies the conditions of an ordered branch list (last condition
/// `true`), dropping dead branches and merging neighbours with equal values.
pub(crate) fn simplify_branches(bs: Vec<(P, P)>, budget: &RewriteBudget, skipped: &mut usize) -> P {
    let mut out: Vec<(P, P)> = Vec::new();
    let mut earlier: Vec<P> = Vec::new();
    for (v, c) in bs {
        if let Some((last_v, last_c)) = out.last() {
            if *last_v == v {
                let joined = Expr::or(vec![last_c.clone(), c.clone()]);
                let prior = &earlier[..earlier.len() - 1];
                let c2 = simplify_cond(&joined, prior, budget, skipped);
                let orig = earlier.pop().map(|o| Expr::or(vec![o, c])).unwrap_or(joined);
                out.pop();
                let done = c2.is_true();
                out.push((v, c2));
                earlier.push(orig);
                if done {
                    break;
                }
                continue;
            }
        }
        let c2 = simplify_cond(&c, &earlier, budget, skipped);
        if c2.is_false() {
            continue;
        }
        let done = c2.is_true();
        out.push((v, c2));
        earlier.push(c);
        if done {
            break;
        }
    }
    match out.last_mut() {
        None => return Expr::undef(),
        Some(last) => last.1 = Expr::bool_const(true),
    }
    if out.len() == 1 {
        return out.remove(0).0;
    }
    Expr::piecewise(out)
}

/// Rewrites every if-then-else into a piecewise expression and minimizes
/// all conditions. Returns the number of conditions left unminimized.
pub(crate) fn convert(e: &P, budget: &RewriteBudget, skipped: &mut usize) -> P {
    match &**e {
        Expr::Ite(..) => {
            let mut bs = Vec::new();
            let mut cur = e.clone();
            loop {
                match &*cur {
                    Expr::Ite(c, t, f) => {
                        bs.push((convert(t, budget, skipped), convert_bool(c, budget, skipped)));
                        cur = f.clone();
                    }
                    Expr::Piecewise(inner) => {
                        for (v, c) in inner {
                            bs.push((convert(v, budget, skipped), convert_bool(c, budget, skipped)));
                        }
                        break;
                    }
                    _ => {
                        bs.push((convert(&cur, budget, skipped), Expr::bool_const(true)));
                        break;
                    }
                }
            }
            simplify_branches(bs, budget, skipped)
        }
        Expr::Piecewise(inner) => {
            let bs =
                inner.iter().map(|(v, c)| (convert(v, budget, skipped), convert_bool(c, budget, skipped))).collect();
            simplify_branches(bs, budget, skipped)
        }
        Expr::Cmp(..) | Expr::Bool(..) => {
            let c = convert_bool(e, budget, skipped);
            simplify_cond(&c, &[], budget, skipped)
        }
        Expr::Sym(_) | Expr::Num(_) | Expr::BoolConst(_) | Expr::Undef => e.clone(),
        _ => Arc::new(e.map_children(|c| convert(c, budget, skipped))),
    }
}

/// Converts numeric subterms inside a condition without minimizing it.
fn convert_bool(e: &P, budget: &RewriteBudget, skipped: &mut usize) -> P {
    match &**e {
        Expr::Bool(..) => Arc::new(e.map_children(|c| convert_bool(c, budget, skipped))),
        Expr::Cmp(..) => Arc::new(e.map_children(|c| convert(c, budget, skipped))),
        _ => convert(e, budget, skipped),
    }
}
