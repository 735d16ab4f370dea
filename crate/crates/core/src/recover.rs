//! The full recovery pipeline for one function: parameter analysis, symbolic
//! execution with the discovered parameters, then simplification.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::expr::{substitute, Expr, Role, P};
use crate::isa::BinaryImage;
use crate::params::{analyze_params, ParamMetadata, ParamOptions};
use crate::simp::{simplify_report, SimplifyOptions};
use crate::symx::{execute, FunctionEquation, Hooks, RecoveredOutput, StorageLoc, SymxError};

#[derive(Clone, Debug, Default)]
pub struct RecoverOptions {
    pub params: ParamOptions,
    pub simplify: SimplifyOptions,
}

impl RecoverOptions {
    pub fn inline_hooks(mut self, on: bool) -> Self {
        self.params.exec.inline_hooks = on;
        self
    }

    pub fn detect_immediates(mut self, on: bool) -> Self {
        self.params.detect_immediates = on;
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub params: Duration,
    pub symx: Duration,
    pub simp: Duration,
}

impl StageTimes {
    pub fn total(&self) -> Duration {
        self.params + self.symx + self.simp
    }
}

#[derive(Clone, Debug)]
pub struct Recovery {
    pub equation: FunctionEquation,
    pub times: StageTimes,
    pub paths: usize,
    /// Conditions left alone because they had too many atoms.
    pub unsimplified_conditions: usize,
}

pub fn recover_function(
    img: &BinaryImage,
    func: &str,
    hooks: &Hooks,
    opts: &RecoverOptions,
) -> Result<Recovery, SymxError> {
    let t0 = Instant::now();
    let mut meta = analyze_params(img, func, hooks, &opts.params)?;
    let t1 = Instant::now();
    let run = execute(img, func, &meta, hooks, opts.params.exec)?;
    let mut raws: Vec<P> =
        meta.outputs.iter().map(|p| run.value(&p.loc).cloned().unwrap_or_else(Expr::undef)).collect();
    prune_immediates(&mut meta, &mut raws);
    let t2 = Instant::now();

    let mut skipped = 0;
    let outputs = meta
        .outputs
        .iter()
        .zip(raws)
        .map(|(p, raw)| {
            let s = simplify_report(&raw, &opts.simplify);
            skipped += s.unsimplified_conditions;
            RecoveredOutput { name: p.name.clone(), loc: p.loc, suspected_spill: p.suspected_spill, expr: s.expr, raw }
        })
        .collect();
    let t3 = Instant::now();
    let constants = meta.constant_values();
    Ok(Recovery {
        equation: FunctionEquation { name: func.to_string(), metadata: meta, outputs, constants },
        times: StageTimes { params: t1 - t0, symx: t2 - t1, simp: t3 - t2 },
        paths: run.paths,
        unsimplified_conditions: skipped,
    })
}

/// Drops immediate constants that reach no output, such as loop bounds, and
/// renumbers the remaining constants.
fn prune_immediates(meta: &mut ParamMetadata, raws: &mut [P]) {
    let used: BTreeSet<String> =
        raws.iter().flat_map(|r| r.symbols()).filter(|s| s.role == Role::Const).map(|s| s.name).collect();
    let before = meta.constants.len();
    meta.constants.retain(|p| !matches!(p.loc, StorageLoc::Immediate(_)) || used.contains(&p.name));
    if meta.constants.len() == before {
        return;
    }
    let mut rename = BTreeMap::new();
    for (i, p) in meta.constants.iter_mut().enumerate() {
        let new = format!("k{i}");
        if p.name != new {
            rename.insert(std::mem::replace(&mut p.name, new.clone()), new);
        }
    }
    if rename.is_empty() {
        return;
    }
    for r in raws.iter_mut() {
        *r = substitute(r, &|s| match s.role {
            Role::Const => rename.get(&s.name).map(|n| Expr::konst(n.clone())),
            _ => None,
        });
    }
}
