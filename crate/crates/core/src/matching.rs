//! Three-level comparison of a recovered equation with its ground truth.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{eval, pretty, EvalEnv, Expr, P};
use crate::simp::{normalize, orient, simplify, SimplifyOptions};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchOptions {
    pub tol: f64,
    pub samples: usize,
    pub seed: u64,
    /// Accept numeric agreement at random points as semantic equality.
    pub numeric_fallback: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions { tol: 1e-7, samples: 64, seed: 0, numeric_fallback: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstDeviation {
    pub recovered: f64,
    pub truth: f64,
    pub abs: f64,
    pub rel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "level", rename_all = "snake_case")]
pub enum MatchVerdict {
    Structural,
    Semantic {
        /// Established by sampling rather than by the difference simplifying
        /// to zero.
        numeric: bool,
    },
    Approximate {
        deviations: Vec<ConstDeviation>,
    },
    Fail {
        divergence: String,
    },
}

impl MatchVerdict {
    /// 3 for structural down to 0 for a failure.
    pub fn strength(&self) -> u8 {
        match self {
            MatchVerdict::Structural => 3,
            MatchVerdict::Semantic { .. } => 2,
            MatchVerdict::Approximate { .. } => 1,
            MatchVerdict::Fail { .. } => 0,
        }
    }

    pub fn is_match(&self) -> bool {
        self.strength() > 0
    }

    pub fn label(&self) -> &'static str {
        match self {
            MatchVerdict::Structural => "structural",
            MatchVerdict::Semantic { numeric: false } => "semantic",
            MatchVerdict::Semantic { numeric: true } => "semantic-numeric",
            MatchVerdict::Approximate { .. } => "approximate",
            MatchVerdict::Fail { .. } => "fail",
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("found only {found} of {wanted} points where both equations evaluate")]
    InsufficientSamples { found: usize, wanted: usize },
}

pub const SAMPLE_RANGE: f64 = 4.0;

/// Compares two equations whose constants are already numbers. Symbols left
/// in either side are sampled like inputs.
pub fn match_equations(rec: &P, truth: &P, opts: &MatchOptions) -> Result<MatchVerdict, MatchError> {
    match_with_constants(rec, truth, &BTreeMap::new(), opts)
}

/// Like [`match_equations`] for a truth that keeps named constants. A number
/// in `rec` standing where `truth` has a constant with a known value is
/// compared as a number, so at best it matches approximately.
pub fn match_with_constants(
    rec: &P,
    truth: &P,
    truth_consts: &BTreeMap<String, f64>,
    opts: &MatchOptions,
) -> Result<MatchVerdict, MatchError> {
    let none = BTreeMap::new();
    let (nr, nt) = (normalize(rec, &none), normalize(truth, &none));
    if nr == nt {
        return Ok(MatchVerdict::Structural);
    }
    let diff = simplify(&Expr::sub(rec.clone(), truth.clone()), &SimplifyOptions::default());
    if diff.as_num() == Some(0.0) {
        return Ok(MatchVerdict::Semantic { numeric: false });
    }
    let sampled = if opts.numeric_fallback { agree_numerically(rec, truth, opts) } else { Ok(false) };
    if sampled == Ok(true) {
        return Ok(MatchVerdict::Semantic { numeric: true });
    }
    let mut devs = Vec::new();
    let mut divergence = String::new();
    for (a, b) in [(orient(rec), orient(truth)), (nr, nt)] {
        devs.clear();
        match approx_iso(&a, &b, truth_consts, opts.tol, &mut devs, "") {
            Ok(()) => return Ok(MatchVerdict::Approximate { deviations: devs }),
            Err(d) if divergence.is_empty() => divergence = d,
            Err(_) => {}
        }
    }
    sampled?;
    Ok(MatchVerdict::Fail { divergence })
}

fn symbols(es: &[&P]) -> BTreeSet<String> {
    es.iter().flat_map(|e| e.symbols()).map(|s| s.name).collect()
}

fn agree_numerically(rec: &P, truth: &P, opts: &MatchOptions) -> Result<bool, MatchError> {
    let names = symbols(&[rec, truth]);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut found = 0;
    for _ in 0..opts.samples * 100 {
        let env: EvalEnv<f64> =
            names.iter().map(|n| (n.as_str(), rng.gen_range(-SAMPLE_RANGE..SAMPLE_RANGE))).collect();
        let (Ok(r), Ok(t)) = (eval(rec, &env), eval(truth, &env)) else { continue };
        if (r - t).abs() > opts.tol * t.abs().max(1.0) {
            return Ok(false);
        }
        found += 1;
        if found == opts.samples {
            return Ok(true);
        }
    }
    Err(MatchError::InsufficientSamples { found, wanted: opts.samples })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    let d = (a - b).abs();
    if b.abs() <= 1.0 {
        d <= tol
    } else {
        d <= tol * b.abs()
    }
}

fn shape(e: &Expr) -> String {
    match e {
        Expr::Num(_) => "number".into(),
        Expr::Sym(s) => s.name.clone(),
        Expr::Call(n, _) => format!("call {n}"),
        _ => {
            let p = pretty(e);
            match p.char_indices().nth(40) {
                Some((i, _)) => format!("{}...", &p[..i]),
                None => p,
            }
        }
    }
}

/// Same tree up to number leaves within `tol`; the error names the first
/// diverging position.
fn approx_iso(
    a: &P,
    b: &P,
    consts: &BTreeMap<String, f64>,
    tol: f64,
    devs: &mut Vec<ConstDeviation>,
    path: &str,
) -> Result<(), String> {
    let here = || format!("at /{path}: `{}` vs `{}`", shape(a), shape(b));
    let truth_num = match &**b {
        Expr::Num(y) => Some(*y),
        Expr::Sym(s) if matches!(**a, Expr::Num(_)) => consts.get(&s.name).copied(),
        _ => None,
    };
    if let (&Expr::Num(x), Some(y)) = (&**a, truth_num) {
        if !close(x, y, tol) {
            return Err(here());
        }
        if x != y {
            let abs = (x - y).abs();
            devs.push(ConstDeviation { recovered: x, truth: y, abs, rel: abs / y.abs().max(f64::MIN_POSITIVE) });
        }
        return Ok(());
    }
    let same_node = match (&**a, &**b) {
        (Expr::Sym(x), Expr::Sym(y)) => x == y,
        (Expr::Unary(x, _), Expr::Unary(y, _)) => x == y,
        (Expr::Binary(x, ..), Expr::Binary(y, ..)) => x == y,
        (Expr::Cmp(x, ..), Expr::Cmp(y, ..)) => x == y,
        (Expr::Bool(x, _), Expr::Bool(y, _)) => x == y,
        (Expr::Call(x, _), Expr::Call(y, _)) => x == y,
        (Expr::BoolConst(x), Expr::BoolConst(y)) => x == y,
        (Expr::Ite(..), Expr::Ite(..)) | (Expr::Piecewise(_), Expr::Piecewise(_)) | (Expr::Undef, Expr::Undef) => true,
        _ => false,
    };
    let (ca, cb) = (a.children(), b.children());
    if !same_node || ca.len() != cb.len() {
        return Err(here());
    }
    for (i, (x, y)) in ca.into_iter().zip(cb).enumerate() {
        let sub = if path.is_empty() { i.to_string() } else { format!("{path}/{i}") };
        approx_iso(x, y, consts, tol, devs, &sub)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simp::sx;

    fn m(rec: &str, truth: &str) -> MatchVerdict {
        let (r, t) = (sx(rec), sx(truth));
        match_equations(&r, &t, &MatchOptions::default()).unwrap()
    }

    #[test]
    fn identical_is_structural() {
        assert_eq!(m("(add x0 (mul x1 2.5))", "(add x0 (mul x1 2.5))"), MatchVerdict::Structural);
        assert_eq!(m("(add (mul x1 2.5) x0)", "(add x0 (mul x1 2.5))"), MatchVerdict::Structural);
    }

    #[test]
    fn difference_cancels() {
        let v = m("(mul x0 (add x1 x1))", "(mul 2 (mul x0 x1))");
        assert!(matches!(v, MatchVerdict::Semantic { .. }), "{v:?}");
    }

    #[test]
    fn unrelated_fails() {
        let v = m("(add x0 x1)", "(mul x0 x1)");
        assert!(matches!(v, MatchVerdict::Fail { .. }), "{v:?}");
    }

    #[test]
    fn sampling_can_be_disabled() {
        let r = sx("(mul x0 0.3076923)");
        let t = sx("(div x0 3.25)");
        let opts = MatchOptions { numeric_fallback: false, ..Default::default() };
        assert!(matches!(match_equations(&r, &t, &opts).unwrap(), MatchVerdict::Fail { .. }));
        assert_eq!(
            match_equations(&r, &t, &MatchOptions::default()).unwrap(),
            MatchVerdict::Semantic { numeric: true }
        );
    }

    #[test]
    fn number_against_named_constant() {
        let consts = BTreeMap::from([("k0".to_string(), 3.25)]);
        let t = sx("(div x0 k0)");
        let opts = MatchOptions::default();
        let v = match_with_constants(&sx("(div x0 3.2500001)"), &t, &consts, &opts).unwrap();
        assert!(matches!(v, MatchVerdict::Approximate { .. }), "{v:?}");
        assert_eq!(match_with_constants(&sx("(div x0 k0)"), &t, &consts, &opts).unwrap(), MatchVerdict::Structural);
        let v = match_with_constants(&sx("(mul x0 0.3076923)"), &t, &consts, &opts).unwrap();
        assert!(matches!(v, MatchVerdict::Fail { .. }), "{v:?}");
    }

    #[test]
    fn nowhere_defined_is_an_error() {
        let r = sx("(log (sub 0 (mul x0 x0)))");
        let t = sx("(add x0 1)");
        assert!(matches!(
            match_equations(&r, &t, &MatchOptions::default()),
            Err(MatchError::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn narrow_domain_still_matches_approximately() {
        let r = sx("(asin (mul (exp x0) (mul 1.00000001 (sin x0))))");
        let t = sx("(asin (mul (exp x0) (mul 1.0 (sin x0))))");
        let opts = MatchOptions { samples: 100_000, ..Default::default() };
        assert!(matches!(match_equations(&r, &t, &opts), Ok(MatchVerdict::Approximate { .. })));
    }
}
