//! A compact 32-bit float virtual ISA: instructions, images, assembler,
//! binary container and a concrete interpreter.

mod asm;
mod encode;
mod interp;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::expr::{CmpOp, UnOp};

pub use asm::{assemble, disassemble, AsmError};
pub use encode::{decode, encode, DecodeError, FORMAT_VERSION, MAGIC};
pub use interp::{interpret, ExecError, Flags, MachineState, DEFAULT_SP};

pub const NUM_FREGS: usize = 16;
pub const NUM_IREGS: usize = 8;

/// Float register `s0`..`s15`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FReg(pub u8);

/// Integer register `r0`..`r7`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IReg(pub u8);

impl FReg {
    pub const RET: FReg = FReg(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// `s8`..`s15` survive calls.
    pub fn is_callee_saved(self) -> bool {
        self.0 >= 8
    }
}

impl IReg {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_callee_saved(self) -> bool {
        self.0 >= 4
    }
}

impl fmt::Display for FReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for IReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub const ALL: [ArithOp; 4] = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div];

    pub fn mnemonic(self) -> &'static str {
        match self {
            ArithOp::Add => "FADD",
            ArithOp::Sub => "FSUB",
            ArithOp::Mul => "FMUL",
            ArithOp::Div => "FDIV",
        }
    }

    pub fn binop(self) -> crate::expr::BinOp {
        use crate::expr::BinOp;
        match self {
            ArithOp::Add => BinOp::Add,
            ArithOp::Sub => BinOp::Sub,
            ArithOp::Mul => BinOp::Mul,
            ArithOp::Div => BinOp::Div,
        }
    }
}

/// Branch condition, read from the `{LT, EQ}` flags left by `FCMP a, b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl Cond {
    pub const ALL: [Cond; 6] = [Cond::Lt, Cond::Le, Cond::Gt, Cond::Ge, Cond::Eq, Cond::Ne];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Cond::Lt => "BLT",
            Cond::Le => "BLE",
            Cond::Gt => "BGT",
            Cond::Ge => "BGE",
            Cond::Eq => "BEQ",
            Cond::Ne => "BNE",
        }
    }

    pub fn holds(self, flags: Flags) -> bool {
        match self {
            Cond::Lt => flags.lt,
            Cond::Le => flags.lt || flags.eq,
            Cond::Gt => !flags.lt && !flags.eq,
            Cond::Ge => !flags.lt,
            Cond::Eq => flags.eq,
            Cond::Ne => !flags.eq,
        }
    }

    /// The comparison `a REL b` this condition tests after `FCMP a, b` on
    /// ordered operands.
    pub fn relation(self) -> CmpOp {
        match self {
            Cond::Lt => CmpOp::Lt,
            Cond::Le => CmpOp::Le,
            Cond::Gt => CmpOp::Gt,
            Cond::Ge => CmpOp::Ge,
            Cond::Eq => CmpOp::Eq,
            Cond::Ne => CmpOp::Ne,
        }
    }
}

/// Math-library routines callable without a definition in the image.
/// Arguments in `s0` (and `s1`), result in `s0`.
pub const INTRINSICS: [(&str, Intrinsic); 10] = [
    ("expf", Intrinsic::Unary(UnOp::Exp)),
    ("sinf", Intrinsic::Unary(UnOp::Sin)),
    ("cosf", Intrinsic::Unary(UnOp::Cos)),
    ("tanf", Intrinsic::Unary(UnOp::Tan)),
    ("asinf", Intrinsic::Unary(UnOp::Asin)),
    ("acosf", Intrinsic::Unary(UnOp::Acos)),
    ("atanf", Intrinsic::Unary(UnOp::Atan)),
    ("logf", Intrinsic::Unary(UnOp::Log)),
    ("sqrtf", Intrinsic::Unary(UnOp::Sqrt)),
    ("powf", Intrinsic::Pow),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Intrinsic {
    Unary(UnOp),
    Pow,
}

pub fn intrinsic(name: &str) -> Option<Intrinsic> {
    INTRINSICS.iter().find(|(n, _)| *n == name).map(|(_, i)| *i)
}

/// Ops allowed in `FIN1`.
pub fn fin1_op(name: &str) -> Option<UnOp> {
    UnOp::from_name(name).filter(|op| *op != UnOp::Neg)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Instr {
    Fldi(FReg, f32),
    Fldg(FReg, u32),
    Fstg(u32, FReg),
    Fldp(FReg, IReg, i32),
    Fstp(IReg, i32, FReg),
    Flds(FReg, i32),
    Fsts(i32, FReg),
    Ldi(IReg, u32),
    Addi(IReg, IReg, i32),
    Mov(IReg, IReg),
    Spadj(i32),
    Fmov(FReg, FReg),
    Arith(ArithOp, FReg, FReg, FReg),
    Fneg(FReg, FReg),
    Fin1(UnOp, FReg, FReg),
    Fpow(FReg, FReg, FReg),
    Fcmp(FReg, FReg),
    /// Unconditional branch to a function-relative instruction index.
    B(u32),
    Bcc(Cond, u32),
    Call(String),
    Ret,
}

impl Instr {
    pub fn branch_target(&self) -> Option<u32> {
        match self {
            Instr::B(t) | Instr::Bcc(_, t) => Some(*t),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Function {
    pub name: String,
    pub code: Vec<Instr>,
}

impl Function {
    pub fn callees(&self) -> impl Iterator<Item = &str> {
        self.code.iter().filter_map(|i| match i {
            Instr::Call(n) => Some(n.as_str()),
            _ => None,
        })
    }
}

/// A loadable program: functions, initialized global words and an optional
/// entry point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BinaryImage {
    pub functions: Vec<Function>,
    pub globals: BTreeMap<u32, u32>,
    pub entry: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("duplicate function `{0}`")]
    DuplicateFunction(String),
    #[error("branch target {target} outside function `{func}`")]
    BadBranch { func: String, target: u32 },
    #[error("call to undefined function `{0}`")]
    UndefinedCallee(String),
    #[error("entry point `{0}` is not a function")]
    BadEntry(String),
    #[error("register index out of range in `{0}`")]
    BadRegister(String),
}

impl BinaryImage {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn global_f32(&self, addr: u32) -> Option<f32> {
        self.globals.get(&addr).map(|w| f32::from_bits(*w))
    }

    pub fn is_initialized(&self, addr: u32) -> bool {
        self.globals.contains_key(&addr)
    }

    /// Checks the structural invariants every loaded image must satisfy.
    pub fn validate(&self) -> Result<(), ImageError> {
        let mut names = BTreeSet::new();
        for f in &self.functions {
            if !names.insert(f.name.as_str()) {
                return Err(ImageError::DuplicateFunction(f.name.clone()));
            }
        }
        for f in &self.functions {
            for ins in &f.code {
                if let Some(t) = ins.branch_target() {
                    if t as usize >= f.code.len() {
                        return Err(ImageError::BadBranch { func: f.name.clone(), target: t });
                    }
                }
                if let Instr::Call(n) = ins {
                    if !names.contains(n.as_str()) && intrinsic(n).is_none() {
                        return Err(ImageError::UndefinedCallee(n.clone()));
                    }
                }
                if !regs_in_range(ins) {
                    return Err(ImageError::BadRegister(f.name.clone()));
                }
            }
        }
        if let Some(e) = &self.entry {
            if !names.contains(e.as_str()) {
                return Err(ImageError::BadEntry(e.clone()));
            }
        }
        Ok(())
    }
}

fn regs_in_range(ins: &Instr) -> bool {
    let f = |r: &FReg| r.index() < NUM_FREGS;
    let i = |r: &IReg| r.index() < NUM_IREGS;
    match ins {
        Instr::Fldi(d, _) | Instr::Fldg(d, _) | Instr::Flds(d, _) => f(d),
        Instr::Fstg(_, s) | Instr::Fsts(_, s) => f(s),
        Instr::Fldp(d, b, _) | Instr::Fstp(b, _, d) => f(d) && i(b),
        Instr::Ldi(d, _) => i(d),
        Instr::Addi(d, s, _) | Instr::Mov(d, s) => i(d) && i(s),
        Instr::Fmov(d, a) | Instr::Fneg(d, a) | Instr::Fin1(_, d, a) | Instr::Fcmp(d, a) => f(d) && f(a),
        Instr::Arith(_, d, a, b) | Instr::Fpow(d, a, b) => f(d) && f(a) && f(b),
        Instr::Spadj(_) | Instr::B(_) | Instr::Bcc(..) | Instr::Call(_) | Instr::Ret => true,
    }
}
