use std::collections::BTreeMap;

use super::{intrinsic, BinaryImage, Instr, Intrinsic, NUM_FREGS, NUM_IREGS};
use crate::expr::{BinOp, Scalar};

/// Stack pointer at function entry unless the caller sets another.
pub const DEFAULT_SP: u32 = 0x7fff_0000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flags {
    pub lt: bool,
    pub eq: bool,
}

impl Flags {
    /// Unordered operands set neither flag.
    pub fn compare(a: f32, b: f32) -> Flags {
        Flags { lt: a < b, eq: a == b }
    }
}

/// Concrete machine state. Registers never written read as an error.
#[derive(Clone, Debug, PartialEq)]
pub struct MachineState {
    pub s: [Option<f32>; NUM_FREGS],
    pub r: [Option<u32>; NUM_IREGS],
    pub sp: u32,
    pub flags: Flags,
    pub mem: BTreeMap<u32, u32>,
    /// Function-relative index of the last executed instruction.
    pub pc: u32,
}

impl Default for MachineState {
    fn default() -> Self {
        MachineState {
            s: [None; NUM_FREGS],
            r: [None; NUM_IREGS],
            sp: DEFAULT_SP,
            flags: Flags::default(),
            mem: BTreeMap::new(),
            pc: 0,
        }
    }
}

impl MachineState {
    /// Fresh state with the image's initialized globals loaded.
    pub fn for_image(img: &BinaryImage) -> Self {
        MachineState { mem: img.globals.clone(), ..Default::default() }
    }

    pub fn with_s(mut self, i: usize, v: f32) -> Self {
        self.s[i] = Some(v);
        self
    }

    pub fn with_r(mut self, i: usize, v: u32) -> Self {
        self.r[i] = Some(v);
        self
    }

    pub fn with_f32(mut self, addr: u32, v: f32) -> Self {
        self.mem.insert(addr, v.to_bits());
        self
    }

    pub fn read_f32(&self, addr: u32) -> Option<f32> {
        self.mem.get(&addr).map(|w| f32::from_bits(*w))
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ExecError {
    #[error("no function `{0}`")]
    NoFunction(String),
    #[error("step budget of {0} exhausted")]
    StepBudgetExceeded(u64),
    #[error("read of uninitialized register {0}")]
    UninitializedRegister(String),
    #[error("read of uninitialized memory at {0:#x}")]
    UninitializedRead(u32),
    #[error("domain error in `{func}` at {pc}: {msg}")]
    Domain { func: String, pc: u32, msg: &'static str },
    #[error("fell off the end of `{0}`")]
    FellOff(String),
}

struct Frame<'a> {
    name: &'a str,
    code: &'a [Instr],
    pc: u32,
}

/// Runs `func` until its `RET` at call depth 0.
pub fn interpret(img: &BinaryImage, func: &str, init: MachineState, max_steps: u64) -> Result<MachineState, ExecError> {
    let f = img.function(func).ok_or_else(|| ExecError::NoFunction(func.into()))?;
    let mut st = init;
    let mut stack: Vec<Frame> = Vec::new();
    let mut cur = Frame { name: &f.name, code: &f.code, pc: 0 };
    let mut steps = 0u64;
    loop {
        if steps >= max_steps {
            return Err(ExecError::StepBudgetExceeded(max_steps));
        }
        steps += 1;
        let ins = cur.code.get(cur.pc as usize).ok_or_else(|| ExecError::FellOff(cur.name.into()))?;
        let here = cur.pc;
        cur.pc += 1;
        let domain = |msg| ExecError::Domain { func: cur.name.to_string(), pc: here, msg };
        match ins {
            Instr::Fldi(d, v) => st.s[d.index()] = Some(*v),
            Instr::Fldg(d, a) => st.s[d.index()] = Some(load(&st, *a)?),
            Instr::Fstg(a, s) => {
                let v = fget(&st, s.index())?;
                st.mem.insert(*a, v.to_bits());
            }
            Instr::Fldp(d, b, o) => {
                let a = iget(&st, b.index())?.wrapping_add(*o as u32);
                st.s[d.index()] = Some(load(&st, a)?);
            }
            Instr::Fstp(b, o, s) => {
                let a = iget(&st, b.index())?.wrapping_add(*o as u32);
                let v = fget(&st, s.index())?;
                st.mem.insert(a, v.to_bits());
            }
            Instr::Flds(d, o) => {
                let a = st.sp.wrapping_add(*o as u32);
                st.s[d.index()] = Some(load(&st, a)?);
            }
            Instr::Fsts(o, s) => {
                let a = st.sp.wrapping_add(*o as u32);
                let v = fget(&st, s.index())?;
                st.mem.insert(a, v.to_bits());
            }
            Instr::Ldi(d, v) => st.r[d.index()] = Some(*v),
            Instr::Addi(d, s, v) => st.r[d.index()] = Some(iget(&st, s.index())?.wrapping_add(*v as u32)),
            Instr::Mov(d, s) => st.r[d.index()] = Some(iget(&st, s.index())?),
            Instr::Spadj(v) => st.sp = st.sp.wrapping_add(*v as u32),
            Instr::Fmov(d, a) => st.s[d.index()] = Some(fget(&st, a.index())?),
            Instr::Arith(op, d, a, b) => {
                let (x, y) = (fget(&st, a.index())?, fget(&st, b.index())?);
                st.s[d.index()] = Some(f32::apply_binary(op.binop(), x, y).map_err(domain)?);
            }
            Instr::Fneg(d, a) => st.s[d.index()] = Some(-fget(&st, a.index())?),
            Instr::Fin1(op, d, a) => {
                let x = fget(&st, a.index())?;
                st.s[d.index()] = Some(f32::apply_unary(*op, x).map_err(domain)?);
            }
            Instr::Fpow(d, a, b) => {
                let (x, y) = (fget(&st, a.index())?, fget(&st, b.index())?);
                st.s[d.index()] = Some(f32::apply_binary(BinOp::Pow, x, y).map_err(domain)?);
            }
            Instr::Fcmp(a, b) => st.flags = Flags::compare(fget(&st, a.index())?, fget(&st, b.index())?),
            Instr::B(t) => cur.pc = *t,
            Instr::Bcc(c, t) => {
                if c.holds(st.flags) {
                    cur.pc = *t;
                }
            }
            Instr::Call(name) => {
                if let Some(callee) = img.function(name) {
                    let next = Frame { name: &callee.name, code: &callee.code, pc: 0 };
                    stack.push(std::mem::replace(&mut cur, next));
                } else if let Some(i) = intrinsic(name) {
                    let x = fget(&st, 0)?;
                    let v = match i {
                        Intrinsic::Unary(op) => f32::apply_unary(op, x),
                        Intrinsic::Pow => f32::apply_binary(BinOp::Pow, x, fget(&st, 1)?),
                    };
                    st.s[0] = Some(v.map_err(domain)?);
                } else {
                    return Err(ExecError::NoFunction(name.clone()));
                }
            }
            Instr::Ret => match stack.pop() {
                Some(caller) => cur = caller,
                None => {
                    st.pc = here;
                    return Ok(st);
                }
            },
        }
    }
}

fn fget(st: &MachineState, i: usize) -> Result<f32, ExecError> {
    st.s[i].ok_or_else(|| ExecError::UninitializedRegister(format!("s{i}")))
}

fn iget(st: &MachineState, i: usize) -> Result<u32, ExecError> {
    st.r[i].ok_or_else(|| ExecError::UninitializedRegister(format!("r{i}")))
}

fn load(st: &MachineState, addr: u32) -> Result<f32, ExecError> {
    st.read_f32(addr).ok_or(ExecError::UninitializedRead(addr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;

    #[test]
    fn empty_function_leaves_state() {
        let img = assemble(".func f\nRET").unwrap();
        let init = MachineState::for_image(&img).with_s(0, 2.5);
        let out = interpret(&img, "f", init.clone(), 10).unwrap();
        assert_eq!(out, init);
    }

    #[test]
    fn flags_never_both() {
        for (a, b) in [(1.0, 2.0), (2.0, 2.0), (3.0, 2.0), (f32::NAN, 1.0)] {
            let f = Flags::compare(a, b);
            assert!(!(f.lt && f.eq));
        }
        assert_eq!(Flags::compare(f32::NAN, 0.0), Flags { lt: false, eq: false });
    }

    #[test]
    fn budget_and_uninitialized_reads() {
        let img = assemble(".func spin\nL: B L\n.func rd\nFLDS s0, [sp + 4]\nRET").unwrap();
        assert_eq!(interpret(&img, "spin", MachineState::default(), 50), Err(ExecError::StepBudgetExceeded(50)));
        assert_eq!(
            interpret(&img, "rd", MachineState::default(), 50),
            Err(ExecError::UninitializedRead(DEFAULT_SP + 4))
        );
    }

    #[test]
    fn intrinsic_and_nested_call() {
        let img = assemble(".func outer\nCALL inner\nCALL expf\nRET\n.func inner\nFSUB s0, s0, s0\nRET").unwrap();
        let out = interpret(&img, "outer", MachineState::default().with_s(0, 3.0), 100).unwrap();
        assert_eq!(out.s[0], Some(1.0));
    }

    #[test]
    fn domain_error_traps() {
        let img = assemble(".func f\nFIN1 log s0, s0\nRET").unwrap();
        let err = interpret(&img, "f", MachineState::default().with_s(0, -1.0), 10).unwrap_err();
        assert!(matches!(err, ExecError::Domain { pc: 0, .. }));
    }
}
