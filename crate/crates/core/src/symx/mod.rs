//! Forking symbolic execution with merge at return.

mod exec;
mod merge;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::P;
use crate::isa::{IReg, DEFAULT_SP, NUM_FREGS, NUM_IREGS};
use crate::params::{Param, ParamMetadata};

pub use exec::{execute, ExecOptions, Execution};
pub use merge::merge_states;

/// Entry value synthesized for integer register `r` when a function reads it
/// before writing. Each register owns a disjoint 16 MiB window so that
/// pointer accesses can be traced back to their base register.
pub fn pointer_base(r: IReg) -> u32 {
    PTR_BASE + r.0 as u32 * PTR_WINDOW
}

const PTR_BASE: u32 = 0x4000_0000;
const PTR_WINDOW: u32 = 0x0100_0000;
const STACK_WINDOW: i64 = 0x1_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Register {
    S(u8),
    R(u8),
}

/// Where a parameter lives. The derived order is the naming order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StorageLoc {
    Reg(Register),
    /// Offset from the stack pointer at function entry.
    Stack(i32),
    Global(u32),
    /// `FLDI` at this instruction index of the analyzed function.
    Immediate(u32),
    /// Offset from the entry value of an integer register.
    Ptr(u8, i32),
}

impl StorageLoc {
    pub fn sreg(i: usize) -> StorageLoc {
        StorageLoc::Reg(Register::S(i as u8))
    }

    /// Classifies an address relative to entry `sp` and the synthesized
    /// pointer windows.
    pub fn of_addr(addr: u32) -> StorageLoc {
        let rel = addr as i64 - DEFAULT_SP as i64;
        if rel.abs() < STACK_WINDOW {
            return StorageLoc::Stack(rel as i32);
        }
        if (PTR_BASE..PTR_BASE + PTR_WINDOW * NUM_IREGS as u32).contains(&addr) {
            let r = (addr - PTR_BASE) / PTR_WINDOW;
            return StorageLoc::Ptr(r as u8, (addr - pointer_base(IReg(r as u8))) as i32);
        }
        StorageLoc::Global(addr)
    }

    /// Address of this location given the current `sp` and integer
    /// registers; `None` for registers and immediates.
    pub fn addr(&self, sp: u32, r: &[Option<u32>; NUM_IREGS]) -> Option<u32> {
        match *self {
            StorageLoc::Stack(o) => Some(sp.wrapping_add(o as u32)),
            StorageLoc::Global(a) => Some(a),
            StorageLoc::Ptr(b, o) => {
                let base = r[b as usize].unwrap_or_else(|| pointer_base(IReg(b)));
                Some(base.wrapping_add(o as u32))
            }
            StorageLoc::Reg(_) | StorageLoc::Immediate(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StorageLoc::Reg(_) => "reg",
            StorageLoc::Stack(_) => "stack",
            StorageLoc::Global(_) => "global",
            StorageLoc::Immediate(_) => "immediate",
            StorageLoc::Ptr(..) => "pointer",
        }
    }

    pub fn is_float(&self) -> bool {
        !matches!(self, StorageLoc::Reg(Register::R(_)))
    }

    /// Identifier fragment used for symbols materialized at this location.
    pub fn ident(&self) -> String {
        let signed = |o: i32| if o < 0 { format!("m{:x}", -(o as i64)) } else { format!("{o:x}") };
        match *self {
            StorageLoc::Reg(Register::S(i)) => format!("s{i}"),
            StorageLoc::Reg(Register::R(i)) => format!("r{i}"),
            StorageLoc::Stack(o) => format!("stack_{}", signed(o)),
            StorageLoc::Global(a) => format!("g_{a:x}"),
            StorageLoc::Immediate(pc) => format!("imm_{pc}"),
            StorageLoc::Ptr(b, o) => format!("r{b}_{}", signed(o)),
        }
    }
}

impl fmt::Display for StorageLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let signed = |o: i32| if o < 0 { format!("-{:#x}", -(o as i64)) } else { format!("{o:#x}") };
        match *self {
            StorageLoc::Reg(Register::S(i)) => write!(f, "s{i}"),
            StorageLoc::Reg(Register::R(i)) => write!(f, "r{i}"),
            StorageLoc::Stack(o) => write!(f, "stack[{}]", signed(o)),
            StorageLoc::Global(a) => write!(f, "{a:#x}"),
            StorageLoc::Immediate(pc) => write!(f, "imm@{pc}"),
            StorageLoc::Ptr(b, o) => write!(f, "r{b}[{}]", signed(o)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub step: u64,
    pub kind: AccessKind,
    pub loc: StorageLoc,
    /// The location was backed by the image's data section when read.
    pub was_initialized: bool,
    /// Value stored by a write.
    pub value: Option<P>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymState {
    pub s: [Option<P>; NUM_FREGS],
    pub r: [Option<u32>; NUM_IREGS],
    pub sp: u32,
    /// `(lt, eq)` from the last `FCMP`.
    pub flags: Option<(P, P)>,
    pub mem: BTreeMap<u32, P>,
    pub path_constraints: Vec<P>,
    pub trace: Vec<Action>,
    pub step_count: u64,
    frames: Vec<(usize, u32)>,
}

impl SymState {
    pub(crate) fn entry(func: usize) -> SymState {
        SymState {
            s: Default::default(),
            r: [None; NUM_IREGS],
            sp: DEFAULT_SP,
            flags: None,
            mem: BTreeMap::new(),
            path_constraints: Vec::new(),
            trace: Vec::new(),
            step_count: 0,
            frames: vec![(func, 0)],
        }
    }

    /// Current value at a float location, if any.
    pub fn value_at(&self, loc: &StorageLoc) -> Option<&P> {
        match loc {
            StorageLoc::Reg(Register::S(i)) => self.s[*i as usize].as_ref(),
            _ => loc.addr(self.sp, &self.r).and_then(|a| self.mem.get(&a)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SymxError {
    #[error("no function `{0}`")]
    NoFunction(String),
    #[error("more than {0} execution states")]
    PathBudgetExceeded(usize),
    #[error("step budget of {0} exhausted on one path")]
    StepBudgetExceeded(u64),
    #[error("fell off the end of `{0}`")]
    FellOff(String),
    #[error("`{0}` is neither defined, hooked nor an intrinsic")]
    UnknownCallee(String),
}

/// One recovered output of a function.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveredOutput {
    pub name: String,
    pub loc: StorageLoc,
    pub suspected_spill: bool,
    /// Simplified, constants kept symbolic.
    pub expr: P,
    /// Merged expression before simplification.
    pub raw: P,
}

/// Result of analyzing a function; registered as a call hook for callers.
#[derive(Clone, Debug, PartialEq)]
pub struct FunctionEquation {
    pub name: String,
    pub metadata: ParamMetadata,
    pub outputs: Vec<RecoveredOutput>,
    pub constants: BTreeMap<String, f32>,
}

impl FunctionEquation {
    pub fn output(&self, name: &str) -> Option<&P> {
        self.outputs.iter().find(|o| o.name == name).map(|o| &o.expr)
    }

    pub fn inputs(&self) -> &[Param] {
        &self.metadata.inputs
    }
}

pub type Hooks = BTreeMap<String, FunctionEquation>;
