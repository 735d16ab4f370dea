//! Lowering of straight-line equations to images under several calling
//! conventions, plus the hand-assembled fixtures.

mod fixtures;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::{BinOp, Expr, Role, Scalar, UnOp, P};
use crate::isa::{ArithOp, BinaryImage, FReg, Function, IReg, Instr};
use crate::symx::StorageLoc;

pub use fixtures::{fixtures, pid_image, pid_source, svm_image, svm_source, Fixture, PID_OBJECT, SVM_SIGMA, SVM_ZERO};

/// Name of the compiled function in every generated image.
pub const MODEL_FN: &str = "model";
pub const INPUT_BASE: u32 = 0x1_0000;
pub const OUTPUT_ADDR: u32 = 0x1_0100;
pub const POOL_BASE: u32 = 0x2_0000;
pub const OBJECT_ADDR: u32 = 0x3_0000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Convention {
    RegArgs,
    StackArgs,
    GlobalMem,
    StructPtr,
}

impl Convention {
    pub const ALL: [Convention; 4] =
        [Convention::RegArgs, Convention::StackArgs, Convention::GlobalMem, Convention::StructPtr];

    pub fn input_loc(self, i: usize) -> StorageLoc {
        let off = 4 * i as i32;
        match self {
            Convention::RegArgs => StorageLoc::sreg(i),
            Convention::StackArgs => StorageLoc::Stack(off),
            Convention::GlobalMem => StorageLoc::Global(INPUT_BASE + off as u32),
            Convention::StructPtr => StorageLoc::Ptr(0, off),
        }
    }

    pub fn output_loc(self) -> StorageLoc {
        match self {
            Convention::GlobalMem => StorageLoc::Global(OUTPUT_ADDR),
            _ => StorageLoc::sreg(0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConstMode {
    GlobalPool,
    Immediate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompileOptions {
    pub convention: Convention,
    pub const_mode: ConstMode,
    pub seed: u64,
    /// Turn division by a literal into multiplication by its reciprocal.
    pub reciprocal: bool,
    /// Evaluate literal-only subtrees at compile time in immediate mode.
    pub fold_literals: bool,
}

impl CompileOptions {
    pub fn new(convention: Convention, const_mode: ConstMode, seed: u64) -> Self {
        CompileOptions { convention, const_mode, seed, reciprocal: false, fold_literals: false }
    }
}

/// Where the compiler placed each parameter of the model function.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMeta {
    pub inputs: Vec<StorageLoc>,
    pub outputs: Vec<StorageLoc>,
    pub constants: Vec<(StorageLoc, f32)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Compiled {
    pub image: BinaryImage,
    pub function: String,
    pub meta: GroundTruthMeta,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("cannot compile {0} nodes")]
    UnsupportedExpr(&'static str),
    #[error("symbol `{0}` is not an input x<i>")]
    BadSymbol(String),
}

/// Number of inputs `x0..x{n-1}` an equation is compiled for.
pub fn input_count(e: &Expr) -> Result<usize, CompileError> {
    let mut n = 0;
    for s in e.symbols() {
        let idx = (s.role == Role::Input)
            .then(|| s.name.strip_prefix('x')?.parse::<usize>().ok())
            .flatten()
            .ok_or_else(|| CompileError::BadSymbol(s.name.clone()))?;
        n = n.max(idx + 1);
    }
    Ok(n)
}

pub fn compile(e: &P, opts: &CompileOptions) -> Result<Compiled, CompileError> {
    let n = input_count(e)?;
    let conv = opts.convention;
    let mut pool: Vec<usize> = (0..8).collect();
    match conv {
        Convention::RegArgs => pool.retain(|r| *r >= n),
        Convention::GlobalMem => pool.retain(|r| *r != 0),
        _ => {}
    }
    let e = prepare(e, opts);
    let mut g = Gen {
        conv,
        mode: opts.const_mode,
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        code: Vec::new(),
        pool,
        owner: [None; 16],
        temps: Vec::new(),
        free_slots: Vec::new(),
        next_slot: 0,
        consts: BTreeMap::new(),
        imms: Vec::new(),
    };
    let t = g.gen(&e)?;
    let r = g.ensure_reg(t, &[]);
    match conv.output_loc() {
        StorageLoc::Global(a) => g.code.push(Instr::Fstg(a, r)),
        _ if r != FReg(0) => g.code.push(Instr::Fmov(FReg(0), r)),
        _ => {}
    }
    g.code.push(Instr::Ret);

    let mut image = BinaryImage::default();
    let mut constants: Vec<(StorageLoc, f32)> = Vec::new();
    for (bits, addr) in &g.consts {
        image.globals.insert(*addr, *bits);
        constants.push((StorageLoc::Global(*addr), f32::from_bits(*bits)));
    }
    constants.extend(g.imms.iter().map(|(pc, v)| (StorageLoc::Immediate(*pc), *v)));
    constants.sort_by_key(|(l, _)| *l);
    image.functions.push(Function { name: MODEL_FN.into(), code: g.code });
    if conv == Convention::StructPtr {
        let stub = vec![Instr::Ldi(IReg(0), OBJECT_ADDR), Instr::Call(MODEL_FN.into()), Instr::Ret];
        image.functions.push(Function { name: "main".into(), code: stub });
        image.entry = Some("main".into());
    } else {
        image.entry = Some(MODEL_FN.into());
    }
    let meta = GroundTruthMeta {
        inputs: (0..n).map(|i| conv.input_loc(i)).collect(),
        outputs: vec![conv.output_loc()],
        constants,
    };
    Ok(Compiled { image, function: MODEL_FN.into(), meta })
}

/// Rejects non-arithmetic nodes and applies the optional rewrites.
fn prepare(e: &P, opts: &CompileOptions) -> P {
    let kids = Expr::map_children(e, |c| prepare(c, opts));
    let e = P::new(kids);
    match &*e {
        Expr::Binary(BinOp::Div, a, b) if opts.reciprocal => match b.as_num() {
            Some(c) if c != 0.0 => Expr::mul(a.clone(), Expr::num((1.0 / c as f32) as f64)),
            _ => e,
        },
        _ if opts.fold_literals && opts.const_mode == ConstMode::Immediate => fold_literals(e),
        _ => e,
    }
}

fn fold_literals(e: P) -> P {
    let v = match &*e {
        Expr::Unary(op, a) => a.as_num().map(|a| f32::apply_unary(*op, a as f32)),
        Expr::Binary(op, a, b) => match (a.as_num(), b.as_num()) {
            (Some(a), Some(b)) => Some(f32::apply_binary(*op, a as f32, b as f32)),
            _ => None,
        },
        _ => None,
    };
    match v {
        Some(Ok(v)) if v.is_finite() => Expr::num(v as f64),
        _ => e,
    }
}

#[derive(Clone, Copy, Debug)]
enum Loc {
    Reg(FReg),
    /// Input register borrowed read-only.
    Input(FReg),
    Slot(i32),
    Dead,
}

struct Gen {
    conv: Convention,
    mode: ConstMode,
    rng: ChaCha8Rng,
    code: Vec<Instr>,
    pool: Vec<usize>,
    owner: [Option<usize>; 16],
    temps: Vec<Loc>,
    free_slots: Vec<i32>,
    next_slot: i32,
    /// Pool constant bits to address.
    consts: BTreeMap<u32, u32>,
    imms: Vec<(u32, f32)>,
}

impl Gen {
    fn new_temp(&mut self, r: FReg) -> usize {
        self.temps.push(Loc::Reg(r));
        let t = self.temps.len() - 1;
        self.owner[r.index()] = Some(t);
        t
    }

    /// A free pool register, evicting a live temporary not in `pinned`.
    fn alloc(&mut self, pinned: &[usize]) -> FReg {
        let free: Vec<usize> = self.pool.iter().copied().filter(|r| self.owner[*r].is_none()).collect();
        if let Some(r) = free.choose(&mut self.rng) {
            return FReg(*r as u8);
        }
        let victims: Vec<usize> =
            self.pool.iter().copied().filter(|r| self.owner[*r].is_some_and(|t| !pinned.contains(&t))).collect();
        let r = *victims.choose(&mut self.rng).expect("register pool larger than pinned operands");
        let t = self.owner[r].take().unwrap_or_else(|| unreachable!());
        let slot = self.free_slots.pop().unwrap_or_else(|| {
            self.next_slot += 4;
            -self.next_slot
        });
        self.code.push(Instr::Fsts(slot, FReg(r as u8)));
        self.temps[t] = Loc::Slot(slot);
        FReg(r as u8)
    }

    fn ensure_reg(&mut self, t: usize, pinned: &[usize]) -> FReg {
        match self.temps[t] {
            Loc::Reg(r) | Loc::Input(r) => r,
            Loc::Slot(s) => {
                let r = self.alloc(pinned);
                self.code.push(Instr::Flds(r, s));
                self.free_slots.push(s);
                self.temps[t] = Loc::Reg(r);
                self.owner[r.index()] = Some(t);
                r
            }
            Loc::Dead => unreachable!("temporary used after release"),
        }
    }

    /// Frees `t` and returns its register if it owned one.
    fn release(&mut self, t: usize) -> Option<FReg> {
        let owned = match self.temps[t] {
            Loc::Reg(r) => {
                self.owner[r.index()] = None;
                Some(r)
            }
            Loc::Slot(s) => {
                self.free_slots.push(s);
                None
            }
            _ => None,
        };
        self.temps[t] = Loc::Dead;
        owned
    }

    fn load_const(&mut self, v: f32) -> usize {
        let r = self.alloc(&[]);
        match self.mode {
            ConstMode::Immediate => {
                self.imms.push((self.code.len() as u32, v));
                self.code.push(Instr::Fldi(r, v));
            }
            ConstMode::GlobalPool => {
                let next = POOL_BASE + 4 * self.consts.len() as u32;
                let addr = *self.consts.entry(v.to_bits()).or_insert(next);
                self.code.push(Instr::Fldg(r, addr));
            }
        }
        self.new_temp(r)
    }

    fn load_input(&mut self, i: usize) -> usize {
        if self.conv == Convention::RegArgs {
            self.temps.push(Loc::Input(FReg(i as u8)));
            return self.temps.len() - 1;
        }
        let r = self.alloc(&[]);
        let off = 4 * i as i32;
        self.code.push(match self.conv {
            Convention::StackArgs => Instr::Flds(r, off),
            Convention::GlobalMem => Instr::Fldg(r, INPUT_BASE + off as u32),
            _ => Instr::Fldp(r, IReg(0), off),
        });
        self.new_temp(r)
    }

    /// Destination for an op over `ops`: one of their freed registers when
    /// possible.
    fn dest(&mut self, ops: &[usize]) -> FReg {
        let mut freed: Vec<FReg> = ops.iter().filter_map(|t| self.release(*t)).collect();
        freed.dedup();
        match freed.choose(&mut self.rng) {
            Some(r) => *r,
            None => self.alloc(&[]),
        }
    }

    fn gen(&mut self, e: &P) -> Result<usize, CompileError> {
        Ok(match &**e {
            Expr::Num(v) => self.load_const(*v as f32),
            Expr::Sym(s) => {
                let i = s.name.strip_prefix('x').and_then(|d| d.parse().ok());
                self.load_input(i.ok_or_else(|| CompileError::BadSymbol(s.name.clone()))?)
            }
            Expr::Unary(op, a) => {
                let ta = self.gen(a)?;
                let ra = self.ensure_reg(ta, &[ta]);
                let d = self.dest(&[ta]);
                self.code.push(match op {
                    UnOp::Neg => Instr::Fneg(d, ra),
                    _ => Instr::Fin1(*op, d, ra),
                });
                self.new_temp(d)
            }
            Expr::Binary(op, a, b) => {
                let (ta, tb) = if self.rng.gen_bool(0.5) {
                    let ta = self.gen(a)?;
                    (ta, self.gen(b)?)
                } else {
                    let tb = self.gen(b)?;
                    (self.gen(a)?, tb)
                };
                let ra = self.ensure_reg(ta, &[ta, tb]);
                let rb = self.ensure_reg(tb, &[ta, tb]);
                let d = self.dest(&[ta, tb]);
                self.code.push(match op {
                    BinOp::Add => Instr::Arith(ArithOp::Add, d, ra, rb),
                    BinOp::Sub => Instr::Arith(ArithOp::Sub, d, ra, rb),
                    BinOp::Mul => Instr::Arith(ArithOp::Mul, d, ra, rb),
                    BinOp::Div => Instr::Arith(ArithOp::Div, d, ra, rb),
                    BinOp::Pow => Instr::Fpow(d, ra, rb),
                });
                self.new_temp(d)
            }
            Expr::BoolConst(_) | Expr::Cmp(..) | Expr::Bool(..) => {
                return Err(CompileError::UnsupportedExpr("boolean"))
            }
            Expr::Ite(..) | Expr::Piecewise(_) => return Err(CompileError::UnsupportedExpr("conditional")),
            Expr::Call(..) => return Err(CompileError::UnsupportedExpr("call")),
            Expr::Undef => return Err(CompileError::UnsupportedExpr("undefined")),
        })
    }
}
