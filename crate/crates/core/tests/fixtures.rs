use std::collections::BTreeMap;
use std::time::Instant;

use mathrev::eqc::{pid_image, svm_image, PID_OBJECT, SVM_SIGMA};
use mathrev::expr::{eval, parse_shorthand, pretty, EvalEnv, Expr, P};
use mathrev::isa::{interpret, MachineState};
use mathrev::matching::{match_equations, MatchOptions, MatchVerdict};
use mathrev::recover::{recover_function, RecoverOptions, Recovery};
use mathrev::simp::substitute_constants;
use mathrev::symx::{Hooks, Register, StorageLoc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sx(s: &str) -> P {
    parse_shorthand(s).unwrap()
}

fn recover(img: &mathrev::isa::BinaryImage, f: &str, hooks: &Hooks) -> Recovery {
    recover_function(img, f, hooks, &RecoverOptions::default()).unwrap()
}

fn output<'a>(r: &'a Recovery, name: &str) -> &'a P {
    &r.equation.outputs.iter().find(|o| o.name == name).unwrap().expr
}

fn walk<'a>(e: &'a P, out: &mut Vec<&'a P>) {
    out.push(e);
    for c in e.children() {
        walk(c, out);
    }
}

fn nodes(e: &P) -> Vec<&P> {
    let mut v = Vec::new();
    walk(e, &mut v);
    v
}

fn c_saturate(x: f32, lo: f32, hi: f32) -> f32 {
    if x > hi {
        hi
    } else if x < lo {
        lo
    } else {
        x
    }
}

const SATURATE_PIECEWISE: &str = "(piecewise (x0 (and (le x0 x2) (gt x0 x1))) (x1 (le x0 x2)) (x2 (true)))";

#[test]
fn saturate_recovers_three_branch_piecewise() {
    let t = Instant::now();
    let r = recover(&pid_image(), "saturate", &Hooks::new());
    let y0 = output(&r, "y0");
    assert_eq!(pretty(y0), "{ x0 if x0 <= x2 and x0 > x1; x1 if x0 <= x2; x2 otherwise }");
    assert_eq!(
        match_equations(y0, &sx(SATURATE_PIECEWISE), &MatchOptions::default()).unwrap(),
        MatchVerdict::Structural
    );
    assert!(t.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn saturate_image_follows_c_semantics() {
    let img = pid_image();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (x, a, b): (f32, f32, f32) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let (lo, hi) = (a.min(b), a.max(b));
        let st = MachineState::for_image(&img).with_s(0, x).with_s(1, lo).with_s(2, hi);
        let out = interpret(&img, "saturate", st, 1000).unwrap();
        assert_eq!(out.s[0], Some(c_saturate(x, lo, hi)));
    }
    let st = MachineState::for_image(&img).with_s(0, -1.0).with_s(1, 0.0).with_s(2, 1.0);
    assert_eq!(interpret(&img, "saturate", st, 1000).unwrap().s[0], Some(0.0));
}

#[test]
fn saturate_raw_tree_agrees_with_interpreter() {
    let img = pid_image();
    let r = recover(&img, "saturate", &Hooks::new());
    let raw = &r.equation.outputs[0].raw;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let xs: [f32; 3] = std::array::from_fn(|_| rng.gen_range(-5.0..5.0));
        let st = MachineState::for_image(&img).with_s(0, xs[0]).with_s(1, xs[1]).with_s(2, xs[2]);
        let want = interpret(&img, "saturate", st, 1000).unwrap().s[0].unwrap();
        let env: EvalEnv<f32> = xs.iter().enumerate().map(|(i, v)| (format!("x{i}"), *v)).collect();
        assert_eq!(eval(raw, &env).unwrap().to_bits(), want.to_bits());
    }
}

#[test]
fn pid_metadata_matches_layout() {
    let img = pid_image();
    let mut hooks = Hooks::new();
    hooks.insert("saturate".into(), recover(&img, "saturate", &Hooks::new()).equation);
    let r = recover(&img, "pid_update", &hooks);
    let meta = &r.equation.metadata;
    let ins: Vec<StorageLoc> = meta.inputs.iter().map(|p| p.loc).collect();
    let mut want: Vec<StorageLoc> = (0..3).map(StorageLoc::sreg).collect();
    want.extend((0..7).map(|i| StorageLoc::Ptr(0, 4 * i)));
    assert_eq!(ins, want);
    let names: Vec<&str> = meta.inputs.iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["x0", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9"]);
    let outs: Vec<(&str, StorageLoc)> =
        meta.outputs.iter().filter(|p| !p.suspected_spill).map(|p| (p.name.as_str(), p.loc)).collect();
    assert_eq!(
        outs,
        [("y0", StorageLoc::Reg(Register::S(0))), ("y1", StorageLoc::Ptr(0, 0xc)), ("y2", StorageLoc::Ptr(0, 0x10))]
    );
}

const PID_Y0: &str = "(call saturate (add (add (mul x3 (sub x0 x1)) (mul x4 (add (mul x2 (sub x0 x1)) x7))) \
                     (mul (div x5 x2) (sub (sub x0 x1) x6))) x8 x9)";
const PID_Y1: &str = "(sub x0 x1)";
const PID_Y2: &str = "(add (mul x2 (sub x0 x1)) x7)";

#[test]
fn pid_outputs_match_equations() {
    let img = pid_image();
    let mut hooks = Hooks::new();
    hooks.insert("saturate".into(), recover(&img, "saturate", &Hooks::new()).equation);
    let r = recover(&img, "pid_update", &hooks);
    for (name, want) in [("y0", PID_Y0), ("y1", PID_Y1), ("y2", PID_Y2)] {
        let v = match_equations(output(&r, name), &sx(want), &MatchOptions::default()).unwrap();
        assert!(v.strength() >= 2, "{name}: {v:?}");
    }
}

#[test]
fn pid_image_agrees_with_closed_form() {
    let img = pid_image();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x: [f32; 10] = std::array::from_fn(|i| match i {
            2 => rng.gen_range(0.01..1.0),
            8 => rng.gen_range(-10.0..-1.0),
            9 => rng.gen_range(1.0..10.0),
            _ => rng.gen_range(-3.0..3.0),
        });
        let mut st =
            MachineState::for_image(&img).with_r(0, PID_OBJECT).with_s(0, x[0]).with_s(1, x[1]).with_s(2, x[2]);
        for i in 0..7 {
            st = st.with_f32(PID_OBJECT + 4 * i as u32, x[3 + i]);
        }
        let out = interpret(&img, "pid_update", st, 10_000).unwrap();
        let env: EvalEnv<f32> = x.iter().enumerate().map(|(i, v)| (format!("x{i}"), *v)).collect();
        let y1 = eval(&sx(PID_Y1), &env).unwrap();
        let y2 = eval(&sx(PID_Y2), &env).unwrap();
        let arg = x[3] * y1 + x[4] * y2 + x[5] / x[2] * (y1 - x[6]);
        let y0 = c_saturate(arg, x[8], x[9]);
        assert_eq!(out.read_f32(PID_OBJECT + 0xc), Some(y1));
        assert_eq!(out.read_f32(PID_OBJECT + 0x10), Some(y2));
        let got = out.s[0].unwrap();
        assert!((got - y0).abs() <= 1e-5 * y0.abs().max(1.0), "{got} vs {y0}");
    }
}

fn svm_hooks() -> (Hooks, Recovery, Recovery) {
    let img = svm_image();
    let mut hooks = Hooks::new();
    let kernel = recover(&img, "kernel", &hooks);
    hooks.insert("kernel".into(), kernel.equation.clone());
    let thresh = recover(&img, "thresh", &hooks);
    hooks.insert("thresh".into(), thresh.equation.clone());
    (hooks, kernel, thresh)
}

const GAUSSIAN_KERNEL: &str = "(exp (div (sub (neg (pow (sub x0 x2) 2)) (pow (sub x1 x3) 2)) k0))";

#[test]
fn kernel_matches_gaussian() {
    let (_, kernel, _) = svm_hooks();
    let y0 = output(&kernel, "y0");
    let v = match_equations(y0, &sx(GAUSSIAN_KERNEL), &MatchOptions::default()).unwrap();
    assert!(v.strength() >= 2, "{v:?}");
    let meta = &kernel.equation.metadata;
    assert_eq!(meta.constants.len(), 1);
    assert_eq!(meta.constants[0].loc, StorageLoc::Global(SVM_SIGMA));
    assert_eq!(meta.constants[0].value.map(f32::to_bits), Some(25.6f32.to_bits()));
}

#[test]
fn thresh_has_single_comparison() {
    let (_, _, thresh) = svm_hooks();
    let consts: BTreeMap<String, f64> = thresh.equation.constants.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
    let y0 = substitute_constants(output(&thresh, "y0"), &consts);
    let cmps = nodes(&y0).into_iter().filter(|n| matches!(***n, Expr::Cmp(..))).count();
    assert_eq!(cmps, 1, "{}", pretty(&y0));
    let want = sx("(piecewise (-1.0 (lt x0 0)) (1.0 (true)))");
    let v = match_equations(&y0, &want, &MatchOptions::default()).unwrap();
    assert!(v.strength() >= 2, "{v:?}");
}

const CLASSIFY_SHAPE: &str = "(call thresh (add (add (add (add k13 k0) (mul (mul k10 k7) (call kernel x0 x1 k1 k2))) \
                    (mul (mul k11 k8) (call kernel x0 x1 k3 k4))) (mul (mul k12 k9) (call kernel x0 x1 k5 k6))))";

#[test]
fn classify_unrolls_into_three_kernel_calls() {
    let (hooks, _, _) = svm_hooks();
    let r = recover(&svm_image(), "classify", &hooks);
    assert_eq!(r.paths, 1);
    let live: Vec<_> = r.equation.outputs.iter().filter(|o| !o.suspected_spill).collect();
    assert_eq!(live.len(), 1);
    let y0 = &live[0].expr;
    assert!(matches!(&**y0, Expr::Call(n, _) if n == "thresh"));
    let calls: Vec<&[P]> = nodes(y0)
        .into_iter()
        .filter_map(|n| match &**n {
            Expr::Call(name, args) if name == "kernel" => Some(args.as_slice()),
            _ => None,
        })
        .collect();
    assert_eq!(calls.len(), 3);
    let mut points = Vec::new();
    for args in &calls {
        assert_eq!(args[0], sx("x0"));
        assert_eq!(args[1], sx("x1"));
        for a in &args[2..] {
            let Expr::Sym(s) = &**a else { panic!("{}", pretty(a)) };
            points.push(r.equation.constants[&s.name]);
        }
    }
    points.sort_by(f32::total_cmp);
    assert_eq!(points, [-7.2, -3.6, -2.0, 1.2, 2.3, 5.4]);
    assert_eq!(match_equations(y0, &sx(CLASSIFY_SHAPE), &MatchOptions::default()).unwrap(), MatchVerdict::Structural);
}

#[test]
fn classify_reports_spilled_registers() {
    let (hooks, _, _) = svm_hooks();
    let r = recover(&svm_image(), "classify", &hooks);
    let flagged: Vec<StorageLoc> = r.equation.outputs.iter().filter(|o| o.suspected_spill).map(|o| o.loc).collect();
    for i in 8..12 {
        assert!(flagged.contains(&StorageLoc::sreg(i)), "s{i} not flagged");
    }
    for off in [-4, -8, -12, -16] {
        assert!(flagged.contains(&StorageLoc::Stack(off)), "stack {off} not flagged");
    }
    assert_eq!(r.equation.outputs.iter().filter(|o| !o.suspected_spill).count(), 1);
}

#[test]
fn inlined_classify_agrees_with_interpreter() {
    let img = svm_image();
    let (hooks, _, _) = svm_hooks();
    let r = recover_function(&img, "classify", &hooks, &RecoverOptions::default().inline_hooks(true)).unwrap();
    let consts: BTreeMap<String, f64> = r.equation.constants.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
    let live = r.equation.outputs.iter().find(|o| !o.suspected_spill).unwrap();
    let y0 = substitute_constants(&live.expr, &consts);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let (a, b): (f32, f32) = (rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
        let mut st = MachineState::for_image(&img).with_s(0, a).with_s(1, b);
        for i in 8..12 {
            st = st.with_s(i, 0.0);
        }
        let want = interpret(&img, "classify", st, 10_000).unwrap().s[0].unwrap();
        let env: EvalEnv<f64> = [("x0", a as f64), ("x1", b as f64)].into_iter().collect();
        assert_eq!(eval(&y0, &env).unwrap() as f32, want, "at ({a}, {b})");
    }
}
