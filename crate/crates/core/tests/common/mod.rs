#![allow(dead_code)]

use mathrev::eqc::{Compiled, Convention};
use mathrev::expr::{eval, serialize, BinOp, BoolOp, CmpOp, EvalEnv, Expr, Scalar, UnOp, P};
use mathrev::genet::{gen_valid, GenConfig, Model, OpPool, NODE_COUNTS};
use mathrev::isa::{interpret, MachineState};
use mathrev::symx::StorageLoc;
use proptest::prelude::*;
use rand::Rng;

pub fn leaf() -> impl Strategy<Value = P> {
    prop_oneof![
        (0..3usize).prop_map(|i| Expr::input(format!("x{i}"))),
        (0..2usize).prop_map(|i| Expr::konst(format!("k{i}"))),
        (-10.0f32..10.0).prop_map(|v| Expr::num(v as f64)),
        Just(Expr::num(0.0)),
        Just(Expr::num(1.0)),
    ]
}

/// Numeric expressions over every node kind that evaluates to a number.
pub fn arb_expr() -> impl Strategy<Value = P> {
    leaf().prop_recursive(5, 48, 3, |inner| {
        let cond = (proptest::sample::select(CmpOp::ALL.to_vec()), inner.clone(), inner.clone())
            .prop_map(|(op, a, b)| Expr::cmp(op, a, b));
        prop_oneof![
            (proptest::sample::select(UnOp::ALL.to_vec()), inner.clone()).prop_map(|(op, a)| Expr::unary(op, a)),
            (proptest::sample::select(BinOp::ALL.to_vec()), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            (cond.clone(), inner.clone(), inner.clone()).prop_map(|(c, t, e)| Expr::ite(c, t, e)),
            (cond, inner.clone(), inner)
                .prop_map(|(c, a, b)| Expr::piecewise(vec![(a, c), (b, Expr::bool_const(true))])),
        ]
    })
}

/// Boolean formulas over `x{i} < 0` atoms for `i < n`.
pub fn arb_bool(n: usize) -> impl Strategy<Value = P> {
    let atom = (0..n).prop_map(|i| Expr::cmp(CmpOp::Lt, Expr::input(format!("x{i}")), Expr::num(0.0)));
    let leaf = prop_oneof![8 => atom, 1 => any::<bool>().prop_map(Expr::bool_const)];
    leaf.prop_recursive(6, 64, 4, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::not),
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Expr::and),
            proptest::collection::vec(inner.clone(), 2..4).prop_map(Expr::or),
            proptest::collection::vec(inner, 2..3).prop_map(|cs| std::sync::Arc::new(Expr::Bool(BoolOp::Xor, cs))),
        ]
    })
}

/// Truth value of a formula whose atoms compare inputs with numbers, with
/// `x{i}` set to -1 when bit `i` of `bits` is set and to 1 otherwise.
pub fn truth(e: &Expr, bits: u32) -> bool {
    let num = |e: &Expr| match e {
        Expr::Num(v) => *v,
        Expr::Sym(s) => {
            let i: u32 = s.name[1..].parse().unwrap();
            if bits >> i & 1 == 1 {
                -1.0
            } else {
                1.0
            }
        }
        other => panic!("unexpected atom operand {}", serialize(other)),
    };
    match e {
        Expr::BoolConst(b) => *b,
        Expr::Bool(BoolOp::Not, cs) => !truth(&cs[0], bits),
        Expr::Bool(BoolOp::And, cs) => cs.iter().all(|c| truth(c, bits)),
        Expr::Bool(BoolOp::Or, cs) => cs.iter().any(|c| truth(c, bits)),
        Expr::Bool(BoolOp::Xor, cs) => cs.iter().filter(|c| truth(c, bits)).count() % 2 == 1,
        Expr::Cmp(op, a, b) => {
            let (a, b) = (num(a), num(b));
            match op {
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Gt => a > b,
                CmpOp::Ge => a >= b,
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
            }
        }
        other => panic!("not a boolean formula: {}", serialize(other)),
    }
}

pub fn model(op_pool: OpPool, n_inputs: usize, n_nodes: usize, seed: u64) -> Option<Model> {
    gen_valid(&GenConfig { op_pool, n_inputs, n_nodes, seed }, 500)
}

pub fn arb_model() -> impl Strategy<Value = Model> {
    (
        proptest::sample::select(OpPool::ALL.to_vec()),
        1..=2usize,
        proptest::sample::select(NODE_COUNTS.to_vec()),
        any::<u64>(),
    )
        .prop_filter_map("no valid model", |(p, i, n, s)| model(p, i, n, s))
}

pub fn env_of<S: Scalar>(xs: &[f32]) -> EvalEnv<S> {
    xs.iter().enumerate().map(|(i, v)| (format!("x{i}"), S::from_f64_lossy(*v as f64))).collect()
}

pub fn random_inputs(rng: &mut impl Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-4.0f32..4.0)).collect()
}

/// Runs a compiled model on concrete inputs placed per its convention.
pub fn run_compiled(c: &Compiled, conv: Convention, xs: &[f32]) -> Option<f32> {
    let mut st = MachineState::for_image(&c.image);
    if conv == Convention::StructPtr {
        st = st.with_r(0, mathrev::eqc::OBJECT_ADDR);
    }
    for (i, x) in xs.iter().enumerate() {
        st = match conv.input_loc(i) {
            StorageLoc::Reg(mathrev::symx::Register::S(r)) => st.with_s(r as usize, *x),
            StorageLoc::Stack(off) => st.with_f32(mathrev::isa::DEFAULT_SP.wrapping_add(off as u32), *x),
            StorageLoc::Global(a) => st.with_f32(a, *x),
            StorageLoc::Ptr(_, off) => st.with_f32(mathrev::eqc::OBJECT_ADDR + off as u32, *x),
            StorageLoc::Reg(_) | StorageLoc::Immediate(_) => return None,
        };
    }
    let out = interpret(&c.image, &c.function, st, 1_000_000).ok()?;
    match conv.output_loc() {
        StorageLoc::Global(a) => out.read_f32(a),
        _ => out.s[0],
    }
}

pub fn ulps(a: f32, b: f32) -> u32 {
    let key = |x: f32| {
        let i = x.to_bits() as i32;
        if i < 0 {
            i32::MIN.wrapping_sub(i)
        } else {
            i
        }
    };
    key(a).wrapping_sub(key(b)).unsigned_abs()
}

pub fn eval32(e: &Expr, xs: &[f32]) -> Option<f32> {
    eval(e, &env_of::<f32>(xs)).ok()
}
