//! Quine–McCluskey two-level minimization with don't-cares.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use super::SimpError;
use crate::expr::{BoolOp, Expr, P};

/// A product term. Bits set in `mask` are free; the remaining bits must
/// equal `value`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Implicant {
    pub value: u32,
    pub mask: u32,
}

impl Implicant {
    pub fn covers(self, minterm: u32) -> bool {
        minterm & !self.mask == self.value
    }

    pub fn literals(self, n: usize) -> u32 {
        n as u32 - self.mask.count_ones()
    }

    /// `Some(true)` if variable `i` appears positively, `Some(false)` if
    /// negated, `None` if free.
    pub fn literal(self, i: usize) -> Option<bool> {
        if self.mask >> i & 1 == 1 {
            None
        } else {
            Some(self.value >> i & 1 == 1)
        }
    }
}

pub fn prime_implicants(n: usize, on: &[u32], dc: &[u32]) -> Vec<Implicant> {
    let mut current: BTreeSet<Implicant> = on.iter().chain(dc).map(|&m| Implicant { value: m, mask: 0 }).collect();
    let mut primes = Vec::new();
    while !current.is_empty() {
        let mut next = BTreeSet::new();
        let mut merged = BTreeSet::new();
        for &imp in &current {
            for bit in 0..n {
                let b = 1u32 << bit;
                if imp.mask & b != 0 || imp.value & b != 0 {
                    continue;
                }
                let partner = Implicant { value: imp.value | b, mask: imp.mask };
                if current.contains(&partner) {
                    next.insert(Implicant { value: imp.value, mask: imp.mask | b });
                    merged.insert(imp);
                    merged.insert(partner);
                }
            }
        }
        primes.extend(current.difference(&merged).copied());
        current = next;
    }
    primes.retain(|p| on.iter().any(|&m| p.covers(m)));
    primes.sort();
    primes
}

/// Minimal set of prime implicants covering `on`: fewest terms, then fewest
/// literals, ties broken by the order of implicant bit patterns.
pub fn minimize(n: usize, on: &[u32], dc: &[u32]) -> Vec<Implicant> {
    let on: Vec<u32> = on.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if on.is_empty() {
        return vec![];
    }
    let primes = prime_implicants(n, &on, dc);
    let covering: Vec<Vec<usize>> =
        on.iter().map(|&m| (0..primes.len()).filter(|&p| primes[p].covers(m)).collect()).collect();

    let mut chosen: BTreeSet<usize> = covering.iter().filter(|c| c.len() == 1).map(|c| c[0]).collect();
    let uncovered: Vec<usize> = (0..on.len()).filter(|&i| !chosen.iter().any(|&p| primes[p].covers(on[i]))).collect();
    if !uncovered.is_empty() {
        let mut search = CoverSearch { n, primes: &primes, covering: &covering, on: &on, best: None, nodes: 0 };
        let mut picked = Vec::new();
        search.run(&uncovered, &mut picked);
        let extra = search.best.map(|(_, _, v)| v).unwrap_or_else(|| greedy(&primes, &on, &uncovered));
        chosen.extend(extra);
    }
    let mut out: Vec<Implicant> = chosen.into_iter().map(|p| primes[p]).collect();
    out.sort();
    out
}

const SEARCH_NODE_LIMIT: usize = 20_000;

struct CoverSearch<'a> {
    n: usize,
    primes: &'a [Implicant],
    covering: &'a [Vec<usize>],
    on: &'a [u32],
    best: Option<(usize, u32, Vec<usize>)>,
    nodes: usize,
}

impl CoverSearch<'_> {
    fn cost(&self, picked: &[usize]) -> (usize, u32) {
        (picked.len(), picked.iter().map(|&p| self.primes[p].literals(self.n)).sum())
    }

    fn run(&mut self, uncovered: &[usize], picked: &mut Vec<usize>) {
        self.nodes += 1;
        if self.nodes > SEARCH_NODE_LIMIT {
            return;
        }
        if let Some((terms, _, _)) = &self.best {
            if picked.len() >= *terms && !uncovered.is_empty() {
                return;
            }
        }
        if uncovered.is_empty() {
            let (t, l) = self.cost(picked);
            let better = match &self.best {
                None => true,
                Some((bt, bl, bv)) => {
                    let mut sorted = picked.clone();
                    sorted.sort();
                    (t, l, &sorted) < (*bt, *bl, bv)
                }
            };
            if better {
                let mut sorted = picked.clone();
                sorted.sort();
                self.best = Some((t, l, sorted));
            }
            return;
        }
        let pivot = *uncovered.iter().min_by_key(|&&i| (self.covering[i].len(), i)).unwrap_or(&uncovered[0]);
        let mut options = self.covering[pivot].clone();
        options.sort_by_key(|&p| (std::cmp::Reverse(self.primes[p].mask.count_ones()), p));
        for p in options {
            let rest: Vec<usize> = uncovered.iter().copied().filter(|&i| !self.primes[p].covers(self.on[i])).collect();
            picked.push(p);
            self.run(&rest, picked);
            picked.pop();
        }
    }
}

fn greedy(primes: &[Implicant], on: &[u32], uncovered: &[usize]) -> Vec<usize> {
    let mut left: BTreeSet<usize> = uncovered.iter().copied().collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let best = (0..primes.len())
            .max_by_key(|&p| {
                let gain = left.iter().filter(|&&i| primes[p].covers(on[i])).count();
                (gain, primes[p].mask.count_ones(), std::cmp::Reverse(p))
            })
            .unwrap_or(0);
        left.retain(|&i| !primes[best].covers(on[i]));
        out.push(best);
    }
    out
}

/// Boolean leaves of `e` in first-appearance order: every maximal subtree
/// that is not a connective or a boolean constant.
pub fn boolean_atoms(e: &Expr) -> Vec<P> {
    fn walk(e: &P, out: &mut Vec<P>) {
        match &**e {
            Expr::Bool(_, cs) => cs.iter().for_each(|c| walk(c, out)),
            Expr::BoolConst(_) => {}
            _ => {
                if !out.iter().any(|a| a == e) {
                    out.push(e.clone());
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(&Arc::new(e.clone()), &mut out);
    out
}

/// Connective skeleton of a boolean expression with leaves replaced by
/// variable indices.
#[derive(Clone, Debug)]
pub(crate) enum Skeleton {
    Var(usize),
    Const(bool),
    Not(Box<Skeleton>),
    And(Vec<Skeleton>),
    Or(Vec<Skeleton>),
    Xor(Vec<Skeleton>),
}

impl Skeleton {
    pub(crate) fn build(e: &Expr, leaf: &mut dyn FnMut(&P) -> Skeleton) -> Skeleton {
        let many = |cs: &[P], leaf: &mut dyn FnMut(&P) -> Skeleton| {
            cs.iter().map(|c| Skeleton::build(c, leaf)).collect::<Vec<_>>()
        };
        match e {
            Expr::BoolConst(b) => Skeleton::Const(*b),
            Expr::Bool(BoolOp::Not, cs) => Skeleton::Not(Box::new(Skeleton::build(&cs[0], leaf))),
            Expr::Bool(BoolOp::And, cs) => Skeleton::And(many(cs, leaf)),
            Expr::Bool(BoolOp::Or, cs) => Skeleton::Or(many(cs, leaf)),
            Expr::Bool(BoolOp::Xor, cs) => Skeleton::Xor(many(cs, leaf)),
            _ => leaf(&Arc::new(e.clone())),
        }
    }

    pub(crate) fn eval(&self, var: &dyn Fn(usize) -> bool) -> bool {
        match self {
            Skeleton::Var(i) => var(*i),
            Skeleton::Const(b) => *b,
            Skeleton::Not(a) => !a.eval(var),
            Skeleton::And(cs) => cs.iter().all(|c| c.eval(var)),
            Skeleton::Or(cs) => cs.iter().any(|c| c.eval(var)),
            Skeleton::Xor(cs) => cs.iter().fold(false, |acc, c| acc ^ c.eval(var)),
        }
    }
}

/// Minimizes a boolean expression whose leaves are treated as independent
/// variables. Returns a sum of products over those leaves.
pub fn qm_minimize(f: &Expr, max_vars: usize) -> Result<P, SimpError> {
    let atoms = boolean_atoms(f);
    let n = atoms.len();
    if n > max_vars {
        return Err(SimpError::TooManyAtoms { atoms: n, max: max_vars });
    }
    let index: HashMap<String, usize> = atoms.iter().enumerate().map(|(i, a)| (crate::expr::serialize(a), i)).collect();
    let skel = Skeleton::build(f, &mut |leaf| Skeleton::Var(index[&crate::expr::serialize(leaf)]));
    let on: Vec<u32> = (0..1u32 << n).filter(|&m| skel.eval(&|i| m >> i & 1 == 1)).collect();
    let cover = minimize(n, &on, &[]);
    Ok(sum_of_products(&cover, n, |i, positive| if positive { atoms[i].clone() } else { Expr::not(atoms[i].clone()) }))
}

pub(crate) fn sum_of_products(cover: &[Implicant], n: usize, lit: impl Fn(usize, bool) -> P) -> P {
    let terms: Vec<P> = cover
        .iter()
        .map(|imp| {
            let lits: Vec<P> = (0..n).filter_map(|i| imp.literal(i).map(|pos| lit(i, pos))).collect();
            conj(lits)
        })
        .collect();
    disj(terms)
}

pub(crate) fn conj(mut lits: Vec<P>) -> P {
    match lits.len() {
        0 => Expr::bool_const(true),
        1 => lits.remove(0),
        _ => Expr::and(lits),
    }
}

pub(crate) fn disj(mut terms: Vec<P>) -> P {
    if terms.iter().any(|t| t.is_true()) {
        return Expr::bool_const(true);
    }
    match terms.len() {
        0 => Expr::bool_const(false),
        1 => terms.remove(0),
        _ => Expr::or(terms),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::CmpOp;

    fn var(i: usize) -> P {
        Expr::cmp(CmpOp::Lt, Expr::input(format!("x{i}")), Expr::num(0.0))
    }

    #[test]
    fn single_variable_is_itself() {
        assert_eq!(qm_minimize(&var(0), 16).unwrap(), var(0));
    }

    #[test]
    fn adjacent_terms_merge() {
        let (a, b) = (var(0), var(1));
        let f = Expr::or(vec![Expr::and(vec![a.clone(), b.clone()]), Expr::and(vec![a.clone(), Expr::not(b)])]);
        assert_eq!(qm_minimize(&f, 16).unwrap(), a);
    }

    #[test]
    fn dont_cares_widen_terms() {
        // on = {1}, dc = {3}: the prime x0 covers both.
        let cover = minimize(2, &[1], &[3]);
        assert_eq!(cover, vec![Implicant { value: 1, mask: 2 }]);
    }

    #[test]
    fn constants_and_limits() {
        let t = Expr::or(vec![var(0), Expr::not(var(0))]);
        assert!(qm_minimize(&t, 16).unwrap().is_true());
        let f = Expr::and(vec![var(0), Expr::not(var(0))]);
        assert!(qm_minimize(&f, 16).unwrap().is_false());
        let wide = Expr::and((0..5).map(var).collect());
        assert!(matches!(qm_minimize(&wide, 4), Err(SimpError::TooManyAtoms { atoms: 5, max: 4 })));
    }

    #[test]
    fn cyclic_core_is_minimal() {
        // f = Σm(0,1,2,5,6,7): two minimal covers of three terms each.
        let cover = minimize(3, &[0, 1, 2, 5, 6, 7], &[]);
        assert_eq!(cover.len(), 3);
        for m in 0..8 {
            assert_eq!(cover.iter().any(|i| i.covers(m)), [0, 1, 2, 5, 6, 7].contains(&m));
        }
    }
}
