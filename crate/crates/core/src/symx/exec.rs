use std::collections::BTreeMap;

use super::{merge_states, pointer_base, AccessKind, Action, Hooks, Register, StorageLoc, SymState, SymxError};
use crate::expr::{eval_bool, substitute, BinOp, BoolOp, CmpOp, EvalEnv, Expr, Role, P};
use crate::isa::{intrinsic, BinaryImage, Cond, FReg, IReg, Instr, Intrinsic};
use crate::params::ParamMetadata;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecOptions {
    pub max_states: usize,
    pub max_steps: u64,
    /// Substitute hooked callee equations instead of emitting call nodes.
    pub inline_hooks: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { max_states: 4096, max_steps: 100_000, inline_hooks: false }
    }
}

#[derive(Clone, Debug)]
pub struct Execution {
    pub merged: SymState,
    /// Per-path traces in fork order.
    pub traces: Vec<Vec<Action>>,
    pub paths: usize,
    /// Merged value of every float location written on some path.
    pub written: BTreeMap<StorageLoc, P>,
    /// Values of every constant symbol met during execution.
    pub constants: BTreeMap<String, f32>,
}

impl Execution {
    pub fn value(&self, loc: &StorageLoc) -> Option<&P> {
        self.written.get(loc)
    }
}

struct Machine<'a> {
    img: &'a BinaryImage,
    meta: &'a ParamMetadata,
    hooks: &'a Hooks,
    opts: ExecOptions,
    consts: BTreeMap<String, f32>,
}

enum Stop {
    Returned,
    Fork { cond: P, taken: u32, fall: u32 },
}

/// Runs `func` symbolically. Inputs and constants named in `meta` are bound
/// to their symbols; any other location read before being written yields a
/// fresh symbol named after the location.
pub fn execute(
    img: &BinaryImage,
    func: &str,
    meta: &ParamMetadata,
    hooks: &Hooks,
    opts: ExecOptions,
) -> Result<Execution, SymxError> {
    let fi = img.functions.iter().position(|f| f.name == func).ok_or_else(|| SymxError::NoFunction(func.into()))?;
    let mut m = Machine { img, meta, hooks, opts, consts: BTreeMap::new() };
    for c in &meta.constants {
        if let Some(v) = c.value {
            m.consts.insert(c.name.clone(), v);
        }
    }
    let mut work = vec![SymState::entry(fi)];
    let mut done = Vec::new();
    let mut created = 1usize;
    while let Some(mut st) = work.pop() {
        match m.run(&mut st)? {
            Stop::Returned => done.push(st),
            Stop::Fork { cond, taken, fall } => {
                created += 1;
                if created > opts.max_states {
                    return Err(SymxError::PathBudgetExceeded(opts.max_states));
                }
                let mut other = st.clone();
                other.path_constraints.push(negate(&cond));
                other.set_pc(fall);
                st.path_constraints.push(cond);
                st.set_pc(taken);
                work.push(other);
                work.push(st);
            }
        }
    }
    let traces: Vec<Vec<Action>> = done.iter().map(|s| s.trace.clone()).collect();
    let mut locs: Vec<StorageLoc> =
        traces.iter().flatten().filter(|a| a.kind == AccessKind::Write && a.loc.is_float()).map(|a| a.loc).collect();
    locs.sort();
    locs.dedup();
    let paths = done.len();
    let merged = merge_states(done);
    let written = locs.into_iter().map(|l| (l, merged.value_at(&l).cloned().unwrap_or_else(Expr::undef))).collect();
    Ok(Execution { merged, traces, paths, written, constants: m.consts })
}

fn negate(c: &P) -> P {
    match &**c {
        Expr::Bool(BoolOp::Not, cs) => cs[0].clone(),
        _ => Expr::not(c.clone()),
    }
}

fn branch_condition(cond: Cond, lt: &P, eq: &P) -> P {
    match cond {
        Cond::Lt => lt.clone(),
        Cond::Le => Expr::or(vec![lt.clone(), eq.clone()]),
        Cond::Gt => Expr::and(vec![Expr::not(lt.clone()), Expr::not(eq.clone())]),
        Cond::Ge => Expr::not(lt.clone()),
        Cond::Eq => eq.clone(),
        Cond::Ne => Expr::not(eq.clone()),
    }
}

impl SymState {
    fn set_pc(&mut self, pc: u32) {
        if let Some(f) = self.frames.last_mut() {
            f.1 = pc;
        }
    }
}

impl Machine<'_> {
    fn record(&self, st: &mut SymState, kind: AccessKind, loc: StorageLoc, init: bool, value: Option<P>) {
        st.trace.push(Action { step: st.step_count, kind, loc, was_initialized: init, value });
    }

    /// Symbol for a location read before any write.
    fn fresh(&mut self, loc: StorageLoc) -> (P, bool) {
        if let Some(p) = self.meta.inputs.iter().find(|p| p.loc == loc) {
            return (Expr::input(p.name.clone()), false);
        }
        if let Some(p) = self.meta.constants.iter().find(|p| p.loc == loc) {
            return (Expr::konst(p.name.clone()), true);
        }
        if let StorageLoc::Global(a) = loc {
            if let Some(v) = self.img.global_f32(a) {
                let name = loc.ident();
                self.consts.insert(name.clone(), v);
                return (Expr::konst(name), true);
            }
        }
        (Expr::input(format!("in_{}", loc.ident())), false)
    }

    fn read_s(&mut self, st: &mut SymState, r: FReg) -> P {
        let loc = StorageLoc::sreg(r.index());
        let (v, init) = match &st.s[r.index()] {
            Some(v) => (v.clone(), false),
            None => {
                let (v, _) = self.fresh(loc);
                st.s[r.index()] = Some(v.clone());
                (v, false)
            }
        };
        self.record(st, AccessKind::Read, loc, init, None);
        v
    }

    fn write_s(&mut self, st: &mut SymState, r: FReg, v: P) {
        self.record(st, AccessKind::Write, StorageLoc::sreg(r.index()), false, Some(v.clone()));
        st.s[r.index()] = Some(v);
    }

    fn read_r(&mut self, st: &mut SymState, r: IReg) -> u32 {
        let v = *st.r[r.index()].get_or_insert_with(|| pointer_base(r));
        self.record(st, AccessKind::Read, StorageLoc::Reg(Register::R(r.0)), false, None);
        v
    }

    fn write_r(&mut self, st: &mut SymState, r: IReg, v: u32) {
        self.record(st, AccessKind::Write, StorageLoc::Reg(Register::R(r.0)), false, None);
        st.r[r.index()] = Some(v);
    }

    fn load(&mut self, st: &mut SymState, addr: u32) -> P {
        let loc = StorageLoc::of_addr(addr);
        let (v, init) = match st.mem.get(&addr) {
            Some(v) => (v.clone(), false),
            None => {
                let (v, init) = self.fresh(loc);
                st.mem.insert(addr, v.clone());
                (v, init)
            }
        };
        self.record(st, AccessKind::Read, loc, init, None);
        v
    }

    fn store(&mut self, st: &mut SymState, addr: u32, v: P) {
        self.record(st, AccessKind::Write, StorageLoc::of_addr(addr), false, Some(v.clone()));
        st.mem.insert(addr, v);
    }

    /// Decides a condition whose only symbols are known constants.
    fn decide(&self, c: &P) -> Option<bool> {
        let mut env = EvalEnv::<f32>::new();
        for s in c.symbols() {
            if s.role != Role::Const {
                return None;
            }
            env.bind(s.name.clone(), *self.consts.get(&s.name)?);
        }
        eval_bool(c, &env).ok()
    }

    /// Steps until the state returns from its entry frame or reaches a
    /// branch on a symbolic condition.
    fn run(&mut self, st: &mut SymState) -> Result<Stop, SymxError> {
        let img = self.img;
        loop {
            if st.step_count >= self.opts.max_steps {
                return Err(SymxError::StepBudgetExceeded(self.opts.max_steps));
            }
            st.step_count += 1;
            let (fi, pc) = *st.frames.last().expect("state has a frame");
            let f = &img.functions[fi];
            let ins = f.code.get(pc as usize).ok_or_else(|| SymxError::FellOff(f.name.clone()))?;
            let top = st.frames.len() == 1;
            st.set_pc(pc + 1);
            match ins {
                Instr::Fldi(d, v) => {
                    let imm = StorageLoc::Immediate(pc);
                    let val = match self.meta.constants.iter().find(|p| top && p.loc == imm) {
                        Some(p) => Expr::konst(p.name.clone()),
                        None => Expr::num(*v as f64),
                    };
                    self.write_s(st, *d, val);
                }
                Instr::Fldg(d, a) => {
                    let v = self.load(st, *a);
                    self.write_s(st, *d, v);
                }
                Instr::Fstg(a, s) => {
                    let v = self.read_s(st, *s);
                    self.store(st, *a, v);
                }
                Instr::Fldp(d, b, o) => {
                    let a = self.read_r(st, *b).wrapping_add(*o as u32);
                    let v = self.load(st, a);
                    self.write_s(st, *d, v);
                }
                Instr::Fstp(b, o, s) => {
                    let a = self.read_r(st, *b).wrapping_add(*o as u32);
                    let v = self.read_s(st, *s);
                    self.store(st, a, v);
                }
                Instr::Flds(d, o) => {
                    let v = self.load(st, st.sp.wrapping_add(*o as u32));
                    self.write_s(st, *d, v);
                }
                Instr::Fsts(o, s) => {
                    let v = self.read_s(st, *s);
                    self.store(st, st.sp.wrapping_add(*o as u32), v);
                }
                Instr::Ldi(d, v) => self.write_r(st, *d, *v),
                Instr::Addi(d, s, v) => {
                    let x = self.read_r(st, *s);
                    self.write_r(st, *d, x.wrapping_add(*v as u32));
                }
                Instr::Mov(d, s) => {
                    let x = self.read_r(st, *s);
                    self.write_r(st, *d, x);
                }
                Instr::Spadj(v) => st.sp = st.sp.wrapping_add(*v as u32),
                Instr::Fmov(d, a) => {
                    let v = self.read_s(st, *a);
                    self.write_s(st, *d, v);
                }
                Instr::Arith(op, d, a, b) => {
                    let (x, y) = (self.read_s(st, *a), self.read_s(st, *b));
                    self.write_s(st, *d, Expr::binary(op.binop(), x, y));
                }
                Instr::Fneg(d, a) => {
                    let x = self.read_s(st, *a);
                    self.write_s(st, *d, Expr::neg(x));
                }
                Instr::Fin1(op, d, a) => {
                    let x = self.read_s(st, *a);
                    self.write_s(st, *d, Expr::unary(*op, x));
                }
                Instr::Fpow(d, a, b) => {
                    let (x, y) = (self.read_s(st, *a), self.read_s(st, *b));
                    self.write_s(st, *d, Expr::binary(BinOp::Pow, x, y));
                }
                Instr::Fcmp(a, b) => {
                    let (x, y) = (self.read_s(st, *a), self.read_s(st, *b));
                    st.flags = Some((Expr::cmp(CmpOp::Lt, x.clone(), y.clone()), Expr::cmp(CmpOp::Eq, x, y)));
                }
                Instr::B(t) => st.set_pc(*t),
                Instr::Bcc(cond, t) => {
                    let (lt, eq) =
                        st.flags.clone().unwrap_or_else(|| (Expr::bool_const(false), Expr::bool_const(false)));
                    let c = branch_condition(*cond, &lt, &eq);
                    match self.decide(&c) {
                        Some(true) => st.set_pc(*t),
                        Some(false) => {}
                        None => return Ok(Stop::Fork { cond: c, taken: *t, fall: pc + 1 }),
                    }
                }
                Instr::Call(name) => self.call(st, name)?,
                Instr::Ret => {
                    if st.frames.len() == 1 {
                        st.set_pc(pc);
                        return Ok(Stop::Returned);
                    }
                    st.frames.pop();
                }
            }
        }
    }

    fn call(&mut self, st: &mut SymState, name: &str) -> Result<(), SymxError> {
        if let Some(h) = self.hooks.get(name) {
            return self.apply_hook(st, name, h);
        }
        if let Some(fi) = self.img.functions.iter().position(|f| f.name == name) {
            st.frames.push((fi, 0));
            return Ok(());
        }
        match intrinsic(name) {
            Some(Intrinsic::Unary(op)) => {
                let x = self.read_s(st, FReg(0));
                self.write_s(st, FReg(0), Expr::unary(op, x));
            }
            Some(Intrinsic::Pow) => {
                let (x, y) = (self.read_s(st, FReg(0)), self.read_s(st, FReg(1)));
                self.write_s(st, FReg(0), Expr::binary(BinOp::Pow, x, y));
            }
            None => return Err(SymxError::UnknownCallee(name.into())),
        }
        Ok(())
    }

    fn read_loc(&mut self, st: &mut SymState, loc: StorageLoc) -> P {
        match loc {
            StorageLoc::Reg(Register::S(i)) => self.read_s(st, FReg(i)),
            _ => match loc.addr(st.sp, &st.r) {
                Some(a) => self.load(st, a),
                None => Expr::undef(),
            },
        }
    }

    fn write_loc(&mut self, st: &mut SymState, loc: StorageLoc, v: P) {
        match loc {
            StorageLoc::Reg(Register::S(i)) => self.write_s(st, FReg(i), v),
            _ => {
                if let Some(a) = loc.addr(st.sp, &st.r) {
                    self.store(st, a, v);
                }
            }
        }
    }

    fn apply_hook(&mut self, st: &mut SymState, name: &str, h: &super::FunctionEquation) -> Result<(), SymxError> {
        let args: Vec<P> = h.metadata.inputs.iter().map(|p| self.read_loc(st, p.loc)).collect();
        let bind: BTreeMap<&str, P> =
            h.metadata.inputs.iter().map(|p| p.name.as_str()).zip(args.iter().cloned()).collect();
        let mut first = true;
        for out in &h.outputs {
            if out.suspected_spill {
                continue;
            }
            let v = if self.opts.inline_hooks {
                substitute(&out.expr, &|s| match s.role {
                    Role::Const => h.constants.get(&s.name).map(|v| Expr::num(*v as f64)),
                    _ => bind.get(s.name.as_str()).cloned(),
                })
            } else if first {
                Expr::call(name, args.clone())
            } else {
                Expr::call(format!("{name}_{}", out.name), args.clone())
            };
            first = false;
            self.write_loc(st, out.loc, v);
        }
        Ok(())
    }
}
