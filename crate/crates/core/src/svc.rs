//! Interactive analysis sessions over one loaded image: callgraph, per-function
//! analysis with a hook registry, display renames.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::expr::{pretty, serialize, substitute, Expr, Role, Symbol, P};
use crate::isa::{intrinsic, BinaryImage, ImageError};
use crate::recover::{recover_function, RecoverOptions, Recovery, StageTimes};
use crate::simp::{simplify, SimplifyOptions};
use crate::symx::{FunctionEquation, Hooks, SymxError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallNode {
    pub name: String,
    pub intrinsic: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallGraph {
    pub nodes: Vec<CallNode>,
    /// `(caller, callee)` pairs, one per distinct callee.
    pub edges: Vec<(String, String)>,
}

impl CallGraph {
    pub fn callees<'a>(&'a self, f: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().filter(move |(a, _)| a == f).map(|(_, b)| b.as_str())
    }

    pub fn is_intrinsic(&self, f: &str) -> bool {
        self.nodes.iter().any(|n| n.name == f && n.intrinsic)
    }

    /// Defined functions with every callee before its callers.
    pub fn leaf_first(&self) -> Vec<String> {
        fn visit(g: &CallGraph, f: &str, seen: &mut BTreeSet<String>, out: &mut Vec<String>) {
            if g.is_intrinsic(f) || !seen.insert(f.to_string()) {
                return;
            }
            for c in g.callees(f) {
                visit(g, c, seen, out);
            }
            out.push(f.to_string());
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for n in &self.nodes {
            visit(self, &n.name, &mut seen, &mut out);
        }
        out
    }
}

/// Functions in image order followed by the intrinsics they call, sorted.
pub fn callgraph(img: &BinaryImage) -> Result<CallGraph, ImageError> {
    img.validate()?;
    let mut nodes: Vec<CallNode> =
        img.functions.iter().map(|f| CallNode { name: f.name.clone(), intrinsic: false }).collect();
    let mut intrinsics = BTreeSet::new();
    let mut edges = Vec::new();
    for f in &img.functions {
        let mut seen = BTreeSet::new();
        for c in f.callees() {
            if seen.insert(c) {
                edges.push((f.name.clone(), c.to_string()));
            }
            if img.function(c).is_none() && intrinsic(c).is_some() {
                intrinsics.insert(c.to_string());
            }
        }
    }
    nodes.extend(intrinsics.into_iter().map(|name| CallNode { name, intrinsic: true }));
    Ok(CallGraph { nodes, edges })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyzeOptions {
    /// Show callee equations in place of call nodes.
    pub inline: bool,
    pub substitute_constants: bool,
    /// Leave out outputs flagged as callee-saved spills.
    pub hide_spills: bool,
    /// Refuse to analyze a function with unanalyzed callees instead of
    /// analyzing them first.
    pub strict: bool,
    pub detect_immediates: bool,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            inline: false,
            substitute_constants: false,
            hide_spills: false,
            strict: false,
            detect_immediates: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SvcError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Symx(#[from] SymxError),
    #[error("no function `{0}`")]
    UnknownFunction(String),
    #[error("`{function}` calls `{callee}`, which has not been analyzed")]
    UnanalyzedCallee { function: String, callee: String },
    #[error("`{0}` is recursive")]
    RecursiveCall(String),
    #[error("`{0}` has not been analyzed")]
    NotAnalyzed(String),
    #[error("no symbol `{0}` in any analyzed equation")]
    UnknownSymbol(String),
    #[error("`{0}` is already in use")]
    NameCollision(String),
    #[error("`{0}` is not a valid name")]
    InvalidName(String),
}

impl SvcError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            SvcError::Image(_) => "bad_image",
            SvcError::Symx(_) => "analysis_failed",
            SvcError::UnknownFunction(_) => "unknown_function",
            SvcError::UnanalyzedCallee { .. } => "unanalyzed_callee",
            SvcError::RecursiveCall(_) => "recursive_call",
            SvcError::NotAnalyzed(_) => "not_analyzed",
            SvcError::UnknownSymbol(_) => "unknown_symbol",
            SvcError::NameCollision(_) => "name_collision",
            SvcError::InvalidName(_) => "invalid_name",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaRow {
    pub role: String,
    pub name: String,
    pub kind: String,
    pub location: String,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputView {
    pub name: String,
    pub location: String,
    pub suspected_spill: bool,
    pub serialized: String,
    pub pretty: String,
}

/// A rendered analysis result as shown to a user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquationView {
    pub function: String,
    pub options: AnalyzeOptions,
    pub metadata: Vec<MetaRow>,
    pub outputs: Vec<OutputView>,
    pub constants: BTreeMap<String, f32>,
    pub paths: usize,
    pub times: StageTimes,
}

struct Cached {
    recovery: Recovery,
    detect_immediates: bool,
    /// Callee hooks the analysis ran with.
    deps: BTreeMap<String, FunctionEquation>,
}

pub struct Session {
    pub id: String,
    image: BinaryImage,
    graph: CallGraph,
    hooks: Hooks,
    names: BTreeMap<String, String>,
    cache: BTreeMap<String, Cached>,
    last: BTreeMap<String, AnalyzeOptions>,
}

impl Session {
    pub fn new(id: impl Into<String>, image: BinaryImage) -> Result<Self, SvcError> {
        let graph = callgraph(&image)?;
        Ok(Session {
            id: id.into(),
            image,
            graph,
            hooks: Hooks::new(),
            names: BTreeMap::new(),
            cache: BTreeMap::new(),
            last: BTreeMap::new(),
        })
    }

    pub fn image(&self) -> &BinaryImage {
        &self.image
    }

    pub fn callgraph(&self) -> &CallGraph {
        &self.graph
    }

    pub fn hooks(&self) -> &Hooks {
        &self.hooks
    }

    pub fn renames(&self) -> &BTreeMap<String, String> {
        &self.names
    }

    pub fn is_analyzed(&self, f: &str) -> bool {
        self.hooks.contains_key(f)
    }

    /// Analyzes `f`, registers it as a hook and renders it.
    pub fn analyze(&mut self, f: &str, opts: AnalyzeOptions) -> Result<EquationView, SvcError> {
        if self.image.function(f).is_none() {
            return Err(SvcError::UnknownFunction(f.into()));
        }
        self.ensure(f, opts, &mut Vec::new())?;
        self.last.insert(f.to_string(), opts);
        self.render(f, opts)
    }

    /// The last analysis of `f`, rendered with the current names and hooks.
    pub fn result(&self, f: &str) -> Result<EquationView, SvcError> {
        if self.image.function(f).is_none() {
            return Err(SvcError::UnknownFunction(f.into()));
        }
        let opts = *self.last.get(f).ok_or_else(|| SvcError::NotAnalyzed(f.into()))?;
        self.render(f, opts)
    }

    fn fresh(&self, f: &str, detect_immediates: bool) -> bool {
        self.cache.get(f).is_some_and(|c| {
            c.detect_immediates == detect_immediates && c.deps.iter().all(|(name, eq)| self.hooks.get(name) == Some(eq))
        })
    }

    fn ensure(&mut self, f: &str, opts: AnalyzeOptions, stack: &mut Vec<String>) -> Result<(), SvcError> {
        if stack.iter().any(|s| s == f) {
            return Err(SvcError::RecursiveCall(f.into()));
        }
        let callees: Vec<String> =
            self.graph.callees(f).filter(|c| !self.graph.is_intrinsic(c)).map(String::from).collect();
        for c in &callees {
            if self.hooks.contains_key(c) {
                continue;
            }
            if opts.strict {
                return Err(SvcError::UnanalyzedCallee { function: f.into(), callee: c.clone() });
            }
            stack.push(f.to_string());
            self.ensure(c, opts, stack)?;
            stack.pop();
        }
        if self.fresh(f, opts.detect_immediates) {
            return Ok(());
        }
        let ropts = RecoverOptions::default().detect_immediates(opts.detect_immediates);
        let recovery = recover_function(&self.image, f, &self.hooks, &ropts)?;
        let deps = callees.iter().filter_map(|c| Some((c.clone(), self.hooks.get(c)?.clone()))).collect();
        self.hooks.insert(f.to_string(), recovery.equation.clone());
        self.cache.insert(f.to_string(), Cached { recovery, detect_immediates: opts.detect_immediates, deps });
        Ok(())
    }

    fn display(&self, name: &str) -> String {
        self.names.get(name).cloned().unwrap_or_else(|| name.to_string())
    }

    fn render(&self, f: &str, opts: AnalyzeOptions) -> Result<EquationView, SvcError> {
        let cached = self.cache.get(f).ok_or_else(|| SvcError::NotAnalyzed(f.into()))?;
        let eq = &cached.recovery.equation;
        let constants: BTreeMap<String, f64> = eq.constants.iter().map(|(k, v)| (k.clone(), *v as f64)).collect();
        let outputs = eq
            .outputs
            .iter()
            .filter(|o| !(opts.hide_spills && o.suspected_spill))
            .map(|o| {
                let mut e = o.expr.clone();
                if opts.inline {
                    e = simplify(&inline_calls(&e, &self.hooks), &SimplifyOptions::default());
                }
                if opts.substitute_constants {
                    e = simplify(&e, &SimplifyOptions::substituting(constants.clone()));
                }
                let e = rename(&e, &self.names);
                OutputView {
                    name: self.display(&o.name),
                    location: o.loc.to_string(),
                    suspected_spill: o.suspected_spill,
                    serialized: serialize(&e),
                    pretty: pretty(&e),
                }
            })
            .collect();
        let spills: BTreeSet<String> =
            eq.metadata.outputs.iter().filter(|p| p.suspected_spill).map(|p| p.name.clone()).collect();
        let metadata = eq
            .metadata
            .rows()
            .into_iter()
            .filter(|r| !(opts.hide_spills && r[0] == "output" && spills.contains(&r[1])))
            .map(|[role, name, kind, location, note]| MetaRow { role, name: self.display(&name), kind, location, note })
            .collect();
        Ok(EquationView {
            function: f.to_string(),
            options: opts,
            metadata,
            outputs,
            constants: eq.constants.iter().map(|(k, v)| (self.display(k), *v)).collect(),
            paths: cached.recovery.paths,
            times: cached.recovery.times,
        })
    }

    /// Every symbol of the analyzed equations, under its own name.
    fn symbols(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for eq in self.hooks.values() {
            let m = &eq.metadata;
            out.extend(m.inputs.iter().chain(&m.outputs).chain(&m.constants).map(|p| p.name.clone()));
            for o in &eq.outputs {
                out.extend(o.expr.symbols().into_iter().map(|s| s.name));
            }
        }
        out
    }

    /// Displays `symbol` as `name` in every rendered equation. Renaming a
    /// symbol to itself drops its override.
    pub fn rename(&mut self, symbol: &str, name: &str) -> Result<(), SvcError> {
        let valid = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
            && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !valid {
            return Err(SvcError::InvalidName(name.into()));
        }
        let symbols = self.symbols();
        if !symbols.contains(symbol) {
            return Err(SvcError::UnknownSymbol(symbol.into()));
        }
        if name == symbol {
            self.names.remove(symbol);
            return Ok(());
        }
        let taken = symbols.iter().any(|s| s == name && !self.names.contains_key(s))
            || self.names.iter().any(|(s, n)| n == name && s != symbol);
        if taken {
            return Err(SvcError::NameCollision(name.into()));
        }
        self.names.insert(symbol.to_string(), name.to_string());
        Ok(())
    }
}

fn rename(e: &P, names: &BTreeMap<String, String>) -> P {
    if names.is_empty() {
        return e.clone();
    }
    substitute(e, &|s| {
        names.get(&s.name).map(|n| std::sync::Arc::new(Expr::Sym(Symbol { name: n.clone(), role: s.role })))
    })
}

/// Replaces calls to hooked functions by the callee's equation with the call
/// arguments bound to its inputs and its constants as numbers.
pub fn inline_calls(e: &P, hooks: &Hooks) -> P {
    let kids = std::sync::Arc::new(e.map_children(|c| inline_calls(c, hooks)));
    let Expr::Call(name, args) = &*kids else { return kids };
    let Some((eq, out)) = callee_output(name, hooks) else { return kids };
    let bind: BTreeMap<&str, &P> = eq.metadata.inputs.iter().map(|p| p.name.as_str()).zip(args).collect();
    let body = substitute(out, &|s| match s.role {
        Role::Const => eq.constants.get(&s.name).map(|v| Expr::num(*v as f64)),
        _ => bind.get(s.name.as_str()).map(|a| (*a).clone()),
    });
    inline_calls(&body, hooks)
}

/// `f` names the first unflagged output of `f`; `f_yN` names output `yN`.
fn callee_output<'a>(name: &str, hooks: &'a Hooks) -> Option<(&'a FunctionEquation, &'a P)> {
    if let Some(eq) = hooks.get(name) {
        return eq.outputs.iter().find(|o| !o.suspected_spill).map(|o| (eq, &o.expr));
    }
    let (f, out) = name.rsplit_once('_')?;
    let eq = hooks.get(f)?;
    Some((eq, eq.output(out)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eqc::{pid_image, svm_image};
    use crate::isa::assemble;

    #[test]
    fn svm_callgraph() {
        let g = callgraph(&svm_image()).unwrap();
        let edges: Vec<(&str, &str)> = g.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        assert!(edges.contains(&("main", "classify")));
        assert!(edges.contains(&("classify", "kernel")));
        assert!(edges.contains(&("classify", "thresh")));
        assert!(edges.contains(&("kernel", "expf")));
        assert!(g.is_intrinsic("expf"));
        let order = g.leaf_first();
        let pos = |f: &str| order.iter().position(|x| x == f).unwrap();
        assert!(pos("kernel") < pos("classify") && pos("thresh") < pos("classify") && pos("classify") < pos("main"));
    }

    #[test]
    fn leaf_callgraph() {
        let img = assemble(".func f\n    RET\n").unwrap();
        let g = callgraph(&img).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn undefined_callee_is_a_load_error() {
        let img = assemble(".func f\n    CALL nowhere\n    RET\n");
        let err = img.map_err(|e| e.to_string()).and_then(|i| callgraph(&i).map_err(|e| e.to_string()));
        assert!(err.is_err());
    }

    #[test]
    fn strict_mode_reports_missing_callee() {
        let mut s = Session::new("t", svm_image()).unwrap();
        let strict = AnalyzeOptions { strict: true, ..Default::default() };
        let err = s.analyze("classify", strict).unwrap_err();
        assert_eq!(err.code(), "unanalyzed_callee");
        s.analyze("kernel", strict).unwrap();
        s.analyze("thresh", strict).unwrap();
        s.analyze("classify", strict).unwrap();
    }

    #[test]
    fn auto_analysis_visits_callees() {
        let mut s = Session::new("t", svm_image()).unwrap();
        s.analyze("classify", AnalyzeOptions::default()).unwrap();
        assert!(s.is_analyzed("kernel") && s.is_analyzed("thresh"));
    }

    #[test]
    fn hook_order_does_not_matter() {
        let classify = |order: [&str; 2]| {
            let mut s = Session::new("t", svm_image()).unwrap();
            for f in order {
                s.analyze(f, AnalyzeOptions::default()).unwrap();
            }
            s.analyze("classify", AnalyzeOptions::default()).unwrap()
        };
        assert_eq!(classify(["kernel", "thresh"]).outputs, classify(["thresh", "kernel"]).outputs);
    }

    #[test]
    fn rename_propagates_and_rejects_collisions() {
        let mut s = Session::new("t", pid_image()).unwrap();
        s.analyze("pid_update", AnalyzeOptions::default()).unwrap();
        s.rename("x0", "targ").unwrap();
        let v = s.result("pid_update").unwrap();
        assert!(v.outputs[0].pretty.contains("targ"));
        assert!(v.metadata.iter().any(|r| r.name == "targ"));
        assert_eq!(s.rename("x1", "x2").unwrap_err().code(), "name_collision");
        assert_eq!(s.rename("x1", "targ").unwrap_err().code(), "name_collision");
        assert_eq!(s.rename("zz", "a").unwrap_err().code(), "unknown_symbol");
        assert_eq!(s.rename("x1", "1a").unwrap_err().code(), "invalid_name");
        let sat = s.analyze("saturate", AnalyzeOptions::default()).unwrap();
        assert!(sat.outputs[0].pretty.contains("targ"));
    }

    #[test]
    fn substituted_kernel_shows_sigma() {
        let mut s = Session::new("t", svm_image()).unwrap();
        let v = s.analyze("kernel", AnalyzeOptions { substitute_constants: true, ..Default::default() }).unwrap();
        assert!(v.outputs[0].pretty.contains("25.6"), "{}", v.outputs[0].pretty);
    }

    #[test]
    fn leaf_without_outputs() {
        let img = assemble(".func f\n    RET\n").unwrap();
        let mut s = Session::new("t", img).unwrap();
        assert!(s.analyze("f", AnalyzeOptions::default()).unwrap().outputs.is_empty());
    }

    #[test]
    fn stale_dependents_are_recomputed() {
        let mut s = Session::new("t", svm_image()).unwrap();
        s.analyze("classify", AnalyzeOptions::default()).unwrap();
        let old = s.hooks["thresh"].clone();
        s.analyze("thresh", AnalyzeOptions { detect_immediates: false, ..Default::default() }).unwrap();
        assert_ne!(s.hooks["thresh"], old);
        assert!(!s.fresh("classify", true));
        s.analyze("classify", AnalyzeOptions::default()).unwrap();
        assert_eq!(s.cache["classify"].deps["thresh"], s.hooks["thresh"]);
    }
}
