mod common;

use std::collections::BTreeMap;

use common::*;
use mathrev::eqc::{compile, CompileOptions, ConstMode, Convention};
use mathrev::expr::{count_ops, eval, eval_concrete, parse, serialize, EvalEnv, Expr, P};
use mathrev::genet::{validate, Validity};
use mathrev::isa::Flags;
use mathrev::matching::{match_equations, MatchOptions};
use mathrev::params::{analyze_params, ParamOptions};
use mathrev::recover::{recover_function, RecoverOptions};
use mathrev::simp::{qm_minimize, simplify, SimplifyOptions};
use mathrev::symx::Hooks;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn subtrees(e: &P) -> Vec<P> {
    let mut out = vec![e.clone()];
    for c in e.children() {
        out.extend(subtrees(c));
    }
    out
}

fn ite_count(e: &P) -> usize {
    subtrees(e).iter().filter(|s| matches!(***s, Expr::Ite(..))).count()
}

fn env64(rng: &mut ChaCha8Rng) -> EvalEnv<f64> {
    use rand::Rng;
    ["x0", "x1", "x2", "k0", "k1"].into_iter().map(|n| (n, rng.gen_range(-4.0..4.0))).collect()
}

fn conventions() -> impl Strategy<Value = Convention> {
    proptest::sample::select(Convention::ALL.to_vec())
}

fn const_modes() -> impl Strategy<Value = ConstMode> {
    prop_oneof![Just(ConstMode::GlobalPool), Just(ConstMode::Immediate)]
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(e in arb_expr()) {
        prop_assert_eq!(parse(&serialize(&e)).unwrap(), e);
    }

    #[test]
    fn op_count_never_below_a_subtree(e in arb_expr()) {
        let n = count_ops(&e);
        for s in subtrees(&e) {
            prop_assert!(count_ops(&s) <= n);
        }
    }

    #[test]
    fn concrete_eval_is_deterministic(e in arb_expr(), xs in proptest::array::uniform3(-4.0f32..4.0)) {
        let env = env_of::<f32>(&xs).with("k0", 0.5).with("k1", -1.5);
        let a = eval_concrete(&e, &env).map(f32::to_bits);
        let b = eval_concrete(&e, &env).map(f32::to_bits);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn compare_never_sets_both_flags(a in any::<f32>(), b in any::<f32>()) {
        let f = Flags::compare(a, b);
        prop_assert!(!(f.lt && f.eq));
    }

    #[test]
    fn simplify_preserves_value(e in arb_expr(), seed in any::<u64>()) {
        let s = simplify(&e, &SimplifyOptions::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..16 {
            let env = env64(&mut rng);
            if let (Ok(a), Ok(b)) = (eval(&e, &env), eval(&s, &env)) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{} vs {} at {:?}", a, b, env);
            }
        }
    }

    #[test]
    fn simplify_does_not_grow(e in arb_expr()) {
        let s = simplify(&e, &SimplifyOptions::default());
        prop_assert!(count_ops(&s) <= count_ops(&e) + ite_count(&e), "{} -> {}", serialize(&e), serialize(&s));
    }

    #[test]
    fn simplify_is_idempotent(e in arb_expr()) {
        let o = SimplifyOptions::default();
        let s = simplify(&e, &o);
        prop_assert_eq!(simplify(&s, &o), s);
    }

    #[test]
    fn qm_keeps_the_truth_table((n, f) in (1..=6usize).prop_flat_map(|n| (Just(n), arb_bool(n)))) {
        let m = qm_minimize(&f, 10).unwrap();
        for bits in 0..1u32 << n {
            prop_assert_eq!(truth(&m, bits), truth(&f, bits), "{} -> {}", serialize(&f), serialize(&m));
        }
    }

    #[test]
    fn matching_is_reflexive(e in arb_expr()) {
        prop_assert_eq!(match_equations(&e, &e, &MatchOptions::default()).map(|v| v.strength()).ok(), Some(3));
    }

    #[test]
    fn looser_tolerance_never_weakens(k in -8.0f64..8.0, eps in -1e-2f64..1e-2, tols in (1e-9f64..1e-1, 1.0f64..100.0)) {
        let x = Expr::input("x0");
        let truth = Expr::add(Expr::mul(Expr::num(k), Expr::unary(mathrev::expr::UnOp::Sin, x.clone())), x.clone());
        let rec = Expr::add(Expr::mul(Expr::num(k + eps), Expr::unary(mathrev::expr::UnOp::Sin, x.clone())), x);
        let s = |tol| match_equations(&rec, &truth, &MatchOptions { tol, ..Default::default() }).unwrap().strength();
        prop_assert!(s(tols.0) <= s(tols.0 * tols.1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn generated_models_are_valid(m in arb_model()) {
        prop_assert!(matches!(validate(&m.expr, m.cfg.n_inputs), Validity::Valid(_)));
    }

    #[test]
    fn compiled_model_agrees_with_equation(m in arb_model(), conv in conventions(), mode in const_modes(), seed in any::<u64>()) {
        let c = compile(&m.expr, &CompileOptions::new(conv, mode, m.sub_seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checked = 0;
        while checked < 100 {
            let xs = random_inputs(&mut rng, m.cfg.n_inputs);
            let Some(want) = eval32(&m.expr, &xs) else { continue };
            let got = run_compiled(&c, conv, &xs).unwrap();
            prop_assert!(ulps(got, want) <= 1, "{got} vs {want} at {xs:?}");
            checked += 1;
        }
    }

    #[test]
    fn raw_tree_agrees_with_interpreter(m in arb_model(), conv in conventions(), mode in const_modes(), seed in any::<u64>()) {
        let c = compile(&m.expr, &CompileOptions::new(conv, mode, m.sub_seed)).unwrap();
        let r = recover_function(&c.image, &c.function, &Hooks::new(), &RecoverOptions::default()).unwrap();
        let out = r.equation.outputs.iter().find(|o| !o.suspected_spill).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut checked = 0;
        for _ in 0..1000 {
            if checked == 100 {
                break;
            }
            let xs = random_inputs(&mut rng, m.cfg.n_inputs);
            let Some(got) = run_compiled(&c, conv, &xs) else { continue };
            let mut env = env_of::<f32>(&xs);
            for (k, v) in &r.equation.constants {
                env.bind(k.clone(), *v);
            }
            prop_assert_eq!(eval_concrete(&out.raw, &env).map(f32::to_bits), Ok(got.to_bits()));
            checked += 1;
        }
    }

    #[test]
    fn parameters_match_compiler_placement(m in arb_model(), conv in conventions(), mode in const_modes()) {
        let c = compile(&m.expr, &CompileOptions::new(conv, mode, m.sub_seed)).unwrap();
        let opts = ParamOptions { detect_immediates: false, ..Default::default() };
        let meta = analyze_params(&c.image, &c.function, &Hooks::new(), &opts).unwrap();
        let ins: Vec<_> = meta.inputs.iter().map(|p| p.loc).collect();
        let outs: Vec<_> = meta.outputs.iter().filter(|p| !p.suspected_spill).map(|p| p.loc).collect();
        prop_assert_eq!(ins, c.meta.inputs.clone());
        prop_assert_eq!(outs, c.meta.outputs.clone());
        if mode == ConstMode::GlobalPool {
            let ks: Vec<_> = meta.constants.iter().map(|p| (p.loc, p.value)).collect();
            let want: Vec<_> = c.meta.constants.iter().map(|(l, v)| (*l, Some(*v))).collect();
            prop_assert_eq!(ks, want);
        }
        let again = analyze_params(&c.image, &c.function, &Hooks::new(), &opts).unwrap();
        prop_assert_eq!(again, meta);
    }
}

#[test]
fn hooked_and_inlined_kernel_calls_agree() {
    let img = mathrev::eqc::svm_image();
    let mut hooks = Hooks::new();
    for f in ["kernel", "thresh"] {
        let r = recover_function(&img, f, &hooks, &RecoverOptions::default()).unwrap();
        hooks.insert(f.into(), r.equation);
    }
    let hooked = recover_function(&img, "classify", &hooks, &RecoverOptions::default()).unwrap();
    let inlined = recover_function(&img, "classify", &hooks, &RecoverOptions::default().inline_hooks(true)).unwrap();
    let consts = |r: &mathrev::recover::Recovery| -> BTreeMap<String, f64> {
        r.equation.constants.iter().map(|(k, v)| (k.clone(), *v as f64)).collect()
    };
    let pick =
        |r: &mathrev::recover::Recovery| r.equation.outputs.iter().find(|o| !o.suspected_spill).unwrap().expr.clone();
    let a = mathrev::svc::inline_calls(&mathrev::simp::substitute_constants(&pick(&hooked), &consts(&hooked)), &hooks);
    let b = mathrev::simp::substitute_constants(&pick(&inlined), &consts(&inlined));
    let v = match_equations(&a, &b, &MatchOptions { tol: 1e-6, ..Default::default() }).unwrap();
    assert!(v.strength() >= 2, "{v:?}");
}
