//! Random equations generated as DAGs, expanded to trees and filtered for
//! validity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{count_ops, eval, BinOp, EvalEnv, Expr, Scalar, UnOp, P};
use crate::simp::{simplify, SimplifyOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpPool {
    Arith,
    ArithTrigExp,
}

impl OpPool {
    pub const ALL: [OpPool; 2] = [OpPool::Arith, OpPool::ArithTrigExp];

    pub fn label(self) -> &'static str {
        match self {
            OpPool::Arith => "arith",
            OpPool::ArithTrigExp => "arith+trig+exp",
        }
    }
}

const ARITH: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];
const TRIG: [UnOp; 6] = [UnOp::Sin, UnOp::Cos, UnOp::Tan, UnOp::Asin, UnOp::Acos, UnOp::Atan];
const EXP: [UnOp; 3] = [UnOp::Exp, UnOp::Log, UnOp::Sqrt];

pub const NODE_COUNTS: [usize; 4] = [5, 10, 15, 20];
pub const INPUT_COUNTS: [usize; 2] = [1, 2];
/// Tree expansions above this many operations are regenerated.
pub const MAX_TREE_OPS: usize = 4000;
const CONST_PROB: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GenConfig {
    pub op_pool: OpPool,
    pub n_inputs: usize,
    pub n_nodes: usize,
    pub seed: u64,
}

impl GenConfig {
    /// Every combination of pool, inputs and node count with the given seed.
    pub fn grid(seed: u64) -> Vec<GenConfig> {
        let mut out = Vec::new();
        for op_pool in OpPool::ALL {
            for n_inputs in INPUT_COUNTS {
                for n_nodes in NODE_COUNTS {
                    out.push(GenConfig { op_pool, n_inputs, n_nodes, seed });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Op {
    Unary(UnOp),
    Binary(BinOp),
}

impl Op {
    pub fn arity(self) -> usize {
        match self {
            Op::Unary(_) => 1,
            Op::Binary(_) => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Input(usize),
    Const(f32),
    Op(Op, Vec<usize>),
}

/// Nodes in topological order; operands always precede their users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationDag {
    pub nodes: Vec<Node>,
    pub output: usize,
}

impl EquationDag {
    pub fn op_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Op(..))).count()
    }

    pub fn users(&self) -> Vec<Vec<usize>> {
        let mut users = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Op(_, args) = n {
                for a in args {
                    users[*a].push(i);
                }
            }
        }
        users
    }
}

fn pick_op(pool: OpPool, rng: &mut ChaCha8Rng) -> Op {
    let arith = Op::Binary(ARITH[rng.gen_range(0..ARITH.len())]);
    match pool {
        OpPool::Arith => arith,
        OpPool::ArithTrigExp => match rng.gen_range(0..3) {
            0 => arith,
            1 => Op::Unary(TRIG[rng.gen_range(0..TRIG.len())]),
            _ => Op::Unary(EXP[rng.gen_range(0..EXP.len())]),
        },
    }
}

fn constant(rng: &mut ChaCha8Rng) -> f32 {
    let v: f64 = rng.gen_range(0.5..10.0);
    let v = v as f32;
    if rng.gen_bool(0.5) {
        -v
    } else {
        v
    }
}

pub fn gen_dag(cfg: &GenConfig) -> EquationDag {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nodes: Vec<Node> = (0..cfg.n_inputs).map(Node::Input).collect();
    for _ in 0..cfg.n_nodes {
        let op = pick_op(cfg.op_pool, &mut rng);
        let args = (0..op.arity())
            .map(|_| {
                if rng.gen_bool(CONST_PROB) {
                    nodes.push(Node::Const(constant(&mut rng)));
                    nodes.len() - 1
                } else {
                    let candidates: Vec<usize> =
                        (0..nodes.len()).filter(|i| !matches!(nodes[*i], Node::Const(_))).collect();
                    // Later nodes are favored so shared subtrees grow.
                    let n = candidates.len();
                    candidates[rng.gen_range(0..n).max(rng.gen_range(0..n))]
                }
            })
            .collect();
        nodes.push(Node::Op(op, args));
    }
    let mut dag = EquationDag { nodes, output: 0 };
    let users = dag.users();
    let mut dangling: Vec<usize> =
        (0..dag.nodes.len()).filter(|i| users[*i].is_empty() && !matches!(dag.nodes[*i], Node::Const(_))).collect();
    while dangling.len() > 1 {
        let b = dangling.pop().unwrap_or_else(|| unreachable!());
        let a = dangling.pop().unwrap_or_else(|| unreachable!());
        let op = if rng.gen_bool(0.5) { BinOp::Add } else { BinOp::Mul };
        dag.nodes.push(Node::Op(Op::Binary(op), vec![a, b]));
        dangling.push(dag.nodes.len() - 1);
    }
    dag.output = dangling.pop().unwrap_or(0);
    dag
}

/// Tree form of the DAG; shared nodes appear once per use.
pub fn dag_to_expr(d: &EquationDag) -> P {
    build_tree(d, &|v| Expr::num(v as f64))
}

/// Tree form with every distinct constant value named `k0`, `k1`, ... in
/// node order, together with the values.
pub fn dag_to_symbolic(d: &EquationDag) -> (P, BTreeMap<String, f64>) {
    let mut names: Vec<u32> = Vec::new();
    for n in &d.nodes {
        if let Node::Const(v) = n {
            if !names.contains(&v.to_bits()) {
                names.push(v.to_bits());
            }
        }
    }
    let name = |v: f32| {
        let i = names.iter().position(|b| *b == v.to_bits()).unwrap_or_else(|| unreachable!());
        Expr::konst(format!("k{i}"))
    };
    let e = build_tree(d, &name);
    let values = names.iter().enumerate().map(|(i, b)| (format!("k{i}"), f32::from_bits(*b) as f64)).collect();
    (e, values)
}

fn build_tree(d: &EquationDag, leaf: &dyn Fn(f32) -> P) -> P {
    let mut memo: Vec<Option<P>> = vec![None; d.nodes.len()];
    for (i, n) in d.nodes.iter().enumerate() {
        let get = |j: usize| memo[j].clone().unwrap_or_else(|| unreachable!("operands precede users"));
        let e = match n {
            Node::Input(k) => Expr::input(format!("x{k}")),
            Node::Const(v) => leaf(*v),
            Node::Op(Op::Unary(op), args) => Expr::unary(*op, get(args[0])),
            Node::Op(Op::Binary(op), args) => Expr::binary(*op, get(args[0]), get(args[1])),
        };
        memo[i] = Some(e);
    }
    memo[d.output].clone().unwrap_or_else(Expr::undef)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidReason {
    Constant,
    NonFinite,
    InputEliminated,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InvalidReason::Constant => "constant",
            InvalidReason::NonFinite => "non-finite",
            InvalidReason::InputEliminated => "input-eliminated",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Validity {
    /// Carries the simplified ground truth.
    Valid(P),
    Invalid(InvalidReason),
}

/// Points tried when checking that an equation is defined somewhere.
const PROBE_POINTS: usize = 64;

pub fn validate(e: &P, n_inputs: usize) -> Validity {
    let s = simplify(e, &SimplifyOptions::default());
    if s.as_num().is_some() {
        return Validity::Invalid(InvalidReason::Constant);
    }
    if has_bad_literal(&s) || !defined_somewhere::<f64>(&s) || !defined_somewhere::<f32>(e) {
        return Validity::Invalid(InvalidReason::NonFinite);
    }
    let names: BTreeSet<String> = s.symbols().into_iter().map(|s| s.name).collect();
    if (0..n_inputs).any(|i| !names.contains(&format!("x{i}"))) {
        return Validity::Invalid(InvalidReason::InputEliminated);
    }
    Validity::Valid(s)
}

/// A symbol-free subtree that cannot be evaluated.
fn has_bad_literal(e: &P) -> bool {
    if e.symbols().is_empty() && !matches!(**e, Expr::BoolConst(_)) {
        return eval(e, &EvalEnv::<f32>::new()).is_err();
    }
    e.children().into_iter().any(has_bad_literal)
}

fn defined_somewhere<S: Scalar>(e: &P) -> bool {
    let names: Vec<String> = e.symbols().into_iter().map(|s| s.name).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut ok = 0;
    for _ in 0..PROBE_POINTS * 100 {
        let env: EvalEnv<S> = names.iter().map(|n| (n.as_str(), S::from_f64_lossy(rng.gen_range(-4.0..4.0)))).collect();
        if eval(e, &env).is_ok() {
            ok += 1;
            if ok == PROBE_POINTS {
                return true;
            }
        }
    }
    false
}

/// A generated model that passed validation.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: GenConfig,
    /// Seed that produced the accepted DAG.
    pub sub_seed: u64,
    pub dag: EquationDag,
    pub expr: P,
    pub truth: P,
    pub rejected: usize,
}

/// Draws DAGs from derived seeds until one is valid.
pub fn gen_valid(cfg: &GenConfig, max_attempts: usize) -> Option<Model> {
    for (rejected, attempt) in (0..max_attempts as u64).enumerate() {
        let sub_seed = cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(attempt);
        let dag = gen_dag(&GenConfig { seed: sub_seed, ..*cfg });
        let expr = dag_to_expr(&dag);
        if count_ops(&expr) <= MAX_TREE_OPS {
            if let Validity::Valid(truth) = validate(&expr, cfg.n_inputs) {
                return Some(Model { cfg: *cfg, sub_seed, dag, expr, truth, rejected });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simp::sx;

    fn cfg(op_pool: OpPool, n_inputs: usize, n_nodes: usize, seed: u64) -> GenConfig {
        GenConfig { op_pool, n_inputs, n_nodes, seed }
    }

    #[test]
    fn deterministic() {
        let c = cfg(OpPool::Arith, 1, 5, 42);
        assert_eq!(gen_dag(&c), gen_dag(&c));
    }

    #[test]
    fn validity_reasons() {
        assert_eq!(validate(&sx("(sub x0 x0)"), 1), Validity::Invalid(InvalidReason::Constant));
        assert_eq!(validate(&sx("(add (mul x0 0) k0)"), 1), Validity::Invalid(InvalidReason::InputEliminated));
        assert_eq!(validate(&sx("(add (log -2.0) x0)"), 1), Validity::Invalid(InvalidReason::NonFinite));
        assert!(matches!(validate(&sx("(add x0 x1)"), 2), Validity::Valid(_)));
    }

    #[test]
    fn symbolic_names_follow_values() {
        let dag = EquationDag {
            nodes: vec![
                Node::Input(0),
                Node::Const(2.5),
                Node::Op(Op::Binary(BinOp::Mul), vec![0, 1]),
                Node::Const(2.5),
                Node::Const(-1.0),
                Node::Op(Op::Binary(BinOp::Add), vec![3, 4]),
                Node::Op(Op::Binary(BinOp::Sub), vec![2, 5]),
            ],
            output: 6,
        };
        let (e, ks) = dag_to_symbolic(&dag);
        assert_eq!(e, sx("(sub (mul x0 k0) (add k0 k1))"));
        assert_eq!(ks, BTreeMap::from([("k0".into(), 2.5), ("k1".into(), -1.0)]));
    }

    #[test]
    fn shared_node_is_duplicated() {
        let dag = EquationDag {
            nodes: vec![
                Node::Input(0),
                Node::Op(Op::Unary(UnOp::Sin), vec![0]),
                Node::Op(Op::Binary(BinOp::Mul), vec![1, 1]),
            ],
            output: 2,
        };
        let e = dag_to_expr(&dag);
        assert_eq!(e, sx("(mul (sin x0) (sin x0))"));
    }
}
