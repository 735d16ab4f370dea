use std::collections::BTreeMap;

use mathrev::eqc::svm_image;
use mathrev::expr::{parse, Expr};
use mathrev::matching::{match_equations, MatchOptions};
use mathrev::recover::{recover_function, RecoverOptions};
use mathrev::simp::substitute_constants;
use mathrev::svc::{AnalyzeOptions, Session};

#[test]
fn classify_in_dependency_order_has_three_kernel_calls() {
    let mut s = Session::new("svm", svm_image()).unwrap();
    for f in ["kernel", "thresh"] {
        s.analyze(f, AnalyzeOptions { strict: true, ..Default::default() }).unwrap();
    }
    let v = s.analyze("classify", AnalyzeOptions { strict: true, hide_spills: true, ..Default::default() }).unwrap();
    assert_eq!(v.outputs.len(), 1);
    let y0 = &v.outputs[0].pretty;
    assert!(y0.starts_with("thresh("), "{y0}");
    assert_eq!(y0.matches("kernel(x0, x1, k").count(), 3, "{y0}");
}

#[test]
fn inlined_classify_agrees_with_executor_inlining() {
    let img = svm_image();
    let mut s = Session::new("svm", img.clone()).unwrap();
    let inline = AnalyzeOptions { inline: true, hide_spills: true, ..Default::default() };
    let v = s.analyze("classify", inline).unwrap();
    let shown = parse(&v.outputs[0].serialized).unwrap();
    assert!(!v.outputs[0].pretty.contains("kernel("));

    let r = recover_function(&img, "classify", s.hooks(), &RecoverOptions::default().inline_hooks(true)).unwrap();
    let out = r.equation.outputs.iter().find(|o| !o.suspected_spill).unwrap();
    let consts: BTreeMap<String, f64> = r.equation.constants.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
    let consts_shown: BTreeMap<String, f64> = v.constants.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
    let a = substitute_constants(&shown, &consts_shown);
    let b = substitute_constants(&out.expr, &consts);
    let verdict = match_equations(&a, &b, &MatchOptions { tol: 1e-6, ..Default::default() }).unwrap();
    assert!(verdict.strength() >= 2, "{verdict:?}");
    assert!(!matches!(*a, Expr::Call(..)));
}
