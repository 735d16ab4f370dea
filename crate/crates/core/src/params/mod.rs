//! Parameter analysis: inputs, outputs and constants of a function from the
//! trace of an unconstrained symbolic run.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::expr::{Expr, P};
use crate::isa::{BinaryImage, FReg, Instr};
use crate::symx::{execute, AccessKind, Action, ExecOptions, Hooks, Register, StorageLoc, SymxError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub loc: StorageLoc,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub suspected_spill: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f32>,
}

impl Param {
    pub fn kind(&self) -> &'static str {
        self.loc.kind()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamMetadata {
    pub inputs: Vec<Param>,
    pub outputs: Vec<Param>,
    pub constants: Vec<Param>,
}

impl ParamMetadata {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty() && self.outputs.is_empty() && self.constants.is_empty()
    }

    pub fn input(&self, name: &str) -> Option<&Param> {
        self.inputs.iter().find(|p| p.name == name)
    }

    pub fn constant_values(&self) -> BTreeMap<String, f32> {
        self.constants.iter().filter_map(|p| Some((p.name.clone(), p.value?))).collect()
    }

    /// Rows of `(role, name, kind, location, note)` in table order.
    pub fn rows(&self) -> Vec<[String; 5]> {
        let row = |role: &str, p: &Param| {
            let note = match (p.value, p.suspected_spill) {
                (Some(v), _) => crate::expr::format_num(v as f64),
                (None, true) => "spill?".to_string(),
                _ => String::new(),
            };
            [role.to_string(), p.name.clone(), p.kind().to_string(), p.loc.to_string(), note]
        };
        let ins = self.inputs.iter().map(|p| row("input", p));
        let outs = self.outputs.iter().map(|p| row("output", p));
        let ks = self.constants.iter().map(|p| row("constant", p));
        ins.chain(outs).chain(ks).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamOptions {
    /// Report `FLDI` operands of the analyzed function as constants.
    pub detect_immediates: bool,
    pub exec: ExecOptions,
}

impl Default for ParamOptions {
    fn default() -> Self {
        ParamOptions { detect_immediates: true, exec: ExecOptions::default() }
    }
}

pub fn analyze_params(
    img: &BinaryImage,
    func: &str,
    hooks: &Hooks,
    opts: &ParamOptions,
) -> Result<ParamMetadata, SymxError> {
    let run = execute(img, func, &ParamMetadata::default(), hooks, opts.exec)?;
    let mut meta = classify_trace(&run.traces, &run.written, img);
    if opts.detect_immediates {
        meta.constants.extend(immediates(img, func));
        name_params(&mut meta.constants, "k");
    }
    Ok(meta)
}

/// `FLDI` operands of `func` as unnamed immediate constants.
pub fn immediates(img: &BinaryImage, func: &str) -> Vec<Param> {
    let Some(f) = img.function(func) else { return Vec::new() };
    f.code
        .iter()
        .enumerate()
        .filter_map(|(pc, ins)| match ins {
            Instr::Fldi(_, v) => Some(Param {
                name: String::new(),
                loc: StorageLoc::Immediate(pc as u32),
                suspected_spill: false,
                value: Some(*v),
            }),
            _ => None,
        })
        .collect()
}

fn name_params(ps: &mut [Param], prefix: &str) {
    ps.sort_by_key(|p| p.loc);
    for (i, p) in ps.iter_mut().enumerate() {
        p.name = format!("{prefix}{i}");
    }
}

fn entry_symbol(r: u8) -> P {
    Expr::input(format!("in_{}", StorageLoc::sreg(r as usize).ident()))
}

fn callee_saved(loc: &StorageLoc) -> Option<u8> {
    match loc {
        StorageLoc::Reg(Register::S(i)) if FReg(*i).is_callee_saved() => Some(*i),
        _ => None,
    }
}

/// Classifies every float location seen in the per-path traces.
///
/// `finals` holds the merged value of each written location; it decides
/// which callee-saved registers are merely preserved.
pub fn classify_trace(traces: &[Vec<Action>], finals: &BTreeMap<StorageLoc, P>, img: &BinaryImage) -> ParamMetadata {
    let mut read_first = BTreeSet::new();
    let mut init_read = BTreeSet::new();
    let mut written = BTreeSet::new();
    let mut spill_slots = BTreeSet::new();
    for trace in traces {
        let mut seen = BTreeSet::new();
        for a in trace.iter().filter(|a| a.loc.is_float()) {
            let first = seen.insert(a.loc);
            match a.kind {
                AccessKind::Read if a.was_initialized => {
                    init_read.insert(a.loc);
                }
                AccessKind::Read if first => {
                    read_first.insert(a.loc);
                }
                AccessKind::Read => {}
                AccessKind::Write => {
                    written.insert(a.loc);
                    let saved = a.value.as_deref().and_then(|v| match v {
                        Expr::Sym(s) => (8..16u8).find(|r| s.name == format!("in_s{r}")),
                        _ => None,
                    });
                    if first && saved.is_some() && matches!(a.loc, StorageLoc::Stack(_)) {
                        spill_slots.insert(a.loc);
                    }
                }
            }
        }
    }
    let frame_local = |l: &StorageLoc| matches!(l, StorageLoc::Stack(o) if *o < 0);
    let scratch = |l: &StorageLoc| matches!(l, StorageLoc::Reg(Register::S(i)) if (1..8).contains(i));

    let mut outputs: Vec<Param> = written
        .iter()
        .filter(|l| !scratch(l) && (!frame_local(l) || spill_slots.contains(*l)))
        .map(|l| {
            let restored = callee_saved(l).is_some_and(|r| finals.get(l) == Some(&entry_symbol(r)));
            Param { name: String::new(), loc: *l, suspected_spill: spill_slots.contains(l) || restored, value: None }
        })
        .collect();

    let reaches = |r: u8| {
        let name = format!("in_s{r}");
        outputs.iter().any(|o| !o.suspected_spill && finals.get(&o.loc).is_some_and(|v| v.mentions(&name)))
    };
    let mut inputs: Vec<Param> = read_first
        .iter()
        .filter(|l| !frame_local(l))
        .filter(|l| callee_saved(l).is_none_or(reaches))
        .map(|l| Param { name: String::new(), loc: *l, suspected_spill: false, value: None })
        .collect();
    let mut constants: Vec<Param> = init_read
        .iter()
        .filter(|l| !written.contains(*l))
        .filter_map(|l| match l {
            StorageLoc::Global(a) => {
                Some(Param { name: String::new(), loc: *l, suspected_spill: false, value: img.global_f32(*a) })
            }
            _ => None,
        })
        .collect();
    name_params(&mut inputs, "x");
    name_params(&mut outputs, "y");
    name_params(&mut constants, "k");
    ParamMetadata { inputs, outputs, constants }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;

    fn act(kind: AccessKind, loc: StorageLoc, init: bool) -> Action {
        Action { step: 0, kind, loc, was_initialized: init, value: None }
    }

    #[test]
    fn first_read_is_input() {
        let img = BinaryImage::default();
        let t = vec![vec![act(AccessKind::Read, StorageLoc::sreg(0), false)]];
        let m = classify_trace(&t, &BTreeMap::new(), &img);
        assert_eq!(m.inputs.len(), 1);
        assert_eq!(m.inputs[0].loc, StorageLoc::sreg(0));
        assert_eq!(m.inputs[0].name, "x0");
    }

    #[test]
    fn initialized_unwritten_global_is_constant() {
        let img = assemble(".global 0x100 25.6\n.func f\nRET").unwrap();
        let t = vec![vec![act(AccessKind::Read, StorageLoc::Global(0x100), true)]];
        let m = classify_trace(&t, &BTreeMap::new(), &img);
        assert!(m.inputs.is_empty());
        assert_eq!(m.constants[0].value, Some(25.6));
    }

    #[test]
    fn empty_function() {
        let img = assemble(".func f\nRET").unwrap();
        let m = analyze_params(&img, "f", &Hooks::new(), &ParamOptions::default()).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn preserved_register_is_not_a_parameter() {
        let src = ".func f\nFSTS [sp - 4], s8\nFMOV s8, s0\nFADD s0, s8, s8\nFLDS s8, [sp - 4]\nRET";
        let img = assemble(src).unwrap();
        let m = analyze_params(&img, "f", &Hooks::new(), &ParamOptions::default()).unwrap();
        let ins: Vec<_> = m.inputs.iter().map(|p| p.loc).collect();
        assert_eq!(ins, vec![StorageLoc::sreg(0)]);
        let outs: Vec<_> = m.outputs.iter().map(|p| (p.loc, p.suspected_spill)).collect();
        assert_eq!(
            outs,
            vec![(StorageLoc::sreg(0), false), (StorageLoc::sreg(8), true), (StorageLoc::Stack(-4), true)]
        );
    }
}
