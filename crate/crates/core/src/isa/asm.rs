//! Assembler text.
//!
//! ```text
//! # comment
//! .global 0x408fc 25.6        initialized word (float literal or 0x bits)
//! .entry main
//! .func saturate
//!     FCMP s0, s2
//!     BLE le_max
//!     FMOV s0, s2 ; RET
//! le_max:
//!     ...
//! ```
//!
//! Statements end at a newline or `;`. Labels are local to their function.
//! Memory operands: `[0x408fc]`, `[r0 + 0xc]`, `[sp - 0x8]`.

use std::collections::HashMap;
use std::fmt::Write;

use super::{fin1_op, ArithOp, BinaryImage, Cond, FReg, Function, IReg, ImageError, Instr, NUM_FREGS, NUM_IREGS};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AsmError {
    #[error("line {line}: undefined label `{label}`")]
    UndefinedLabel { line: usize, label: String },
    #[error("line {line}: duplicate function `{name}`")]
    DuplicateFunction { line: usize, name: String },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

enum Pending {
    Done(Instr),
    Branch(Option<Cond>, String, usize),
}

struct FuncBuilder {
    name: String,
    code: Vec<Pending>,
    labels: HashMap<String, u32>,
}

impl FuncBuilder {
    fn finish(self) -> Result<Function, AsmError> {
        let labels = self.labels;
        let code = self
            .code
            .into_iter()
            .map(|p| match p {
                Pending::Done(i) => Ok(i),
                Pending::Branch(cond, label, line) => {
                    let t = *labels.get(&label).ok_or(AsmError::UndefinedLabel { line, label })?;
                    Ok(match cond {
                        Some(c) => Instr::Bcc(c, t),
                        None => Instr::B(t),
                    })
                }
            })
            .collect::<Result<_, AsmError>>()?;
        Ok(Function { name: self.name, code })
    }
}

pub fn assemble(source: &str) -> Result<BinaryImage, AsmError> {
    let mut img = BinaryImage::default();
    let mut cur: Option<FuncBuilder> = None;
    for (idx, raw) in source.lines().enumerate() {
        let line = idx + 1;
        let text = raw.split('#').next().unwrap_or("");
        for stmt in text.split(';') {
            let mut stmt = stmt.trim();
            if stmt.is_empty() {
                continue;
            }
            let bad = |msg: String| AsmError::Malformed { line, msg };
            if let Some(rest) = stmt.strip_prefix('.') {
                let mut parts = rest.split_whitespace();
                match parts.next() {
                    Some("func") => {
                        let name = parts.next().ok_or_else(|| bad("`.func` needs a name".into()))?;
                        if img.function(name).is_some() || cur.as_ref().is_some_and(|f| f.name == name) {
                            return Err(AsmError::DuplicateFunction { line, name: name.into() });
                        }
                        if let Some(f) = cur.take() {
                            img.functions.push(f.finish()?);
                        }
                        cur = Some(FuncBuilder { name: name.into(), code: vec![], labels: HashMap::new() });
                    }
                    Some("global") => {
                        let (Some(a), Some(v)) = (parts.next(), parts.next()) else {
                            return Err(bad("`.global` needs an address and a value".into()));
                        };
                        let addr = parse_u32(a).ok_or_else(|| bad(format!("bad address `{a}`")))?;
                        let word = parse_word(v).ok_or_else(|| bad(format!("bad value `{v}`")))?;
                        if img.globals.insert(addr, word).is_some() {
                            return Err(bad(format!("global {addr:#x} defined twice")));
                        }
                    }
                    Some("entry") => {
                        let name = parts.next().ok_or_else(|| bad("`.entry` needs a name".into()))?;
                        img.entry = Some(name.into());
                    }
                    other => return Err(bad(format!("unknown directive `.{}`", other.unwrap_or("")))),
                }
                continue;
            }
            if let Some((label, rest)) = stmt.split_once(':') {
                let label = label.trim();
                if !is_ident(label) {
                    return Err(bad(format!("bad label `{label}`")));
                }
                let f = cur.as_mut().ok_or_else(|| bad("label outside `.func`".into()))?;
                let at = f.code.len() as u32;
                if f.labels.insert(label.into(), at).is_some() {
                    return Err(AsmError::DuplicateLabel { line, label: label.into() });
                }
                stmt = rest.trim();
                if stmt.is_empty() {
                    continue;
                }
            }
            let f = cur.as_mut().ok_or_else(|| bad("instruction outside `.func`".into()))?;
            f.code.push(parse_instr(stmt, line)?);
        }
    }
    if let Some(f) = cur.take() {
        img.functions.push(f.finish()?);
    }
    img.validate()?;
    Ok(img)
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_instr(stmt: &str, line: usize) -> Result<Pending, AsmError> {
    let bad = |msg: String| AsmError::Malformed { line, msg };
    let (mnem, rest) = stmt.split_once(char::is_whitespace).unwrap_or((stmt, ""));
    let mnem = mnem.to_ascii_uppercase();
    let ops: Vec<&str> = if rest.trim().is_empty() { vec![] } else { split_operands(rest) };
    let want = |n: usize| -> Result<(), AsmError> {
        if ops.len() == n {
            Ok(())
        } else {
            Err(bad(format!("`{mnem}` takes {n} operand(s), got {}", ops.len())))
        }
    };
    let fr = |s: &str| parse_freg(s).ok_or_else(|| bad(format!("expected float register, got `{s}`")));
    let ir = |s: &str| parse_ireg(s).ok_or_else(|| bad(format!("expected integer register, got `{s}`")));
    let imm = |s: &str| parse_i32(s).ok_or_else(|| bad(format!("bad immediate `{s}`")));
    let mem = |s: &str| parse_mem(s).ok_or_else(|| bad(format!("bad memory operand `{s}`")));

    if let Some(op) = ArithOp::ALL.into_iter().find(|o| o.mnemonic() == mnem) {
        want(3)?;
        return Ok(Pending::Done(Instr::Arith(op, fr(ops[0])?, fr(ops[1])?, fr(ops[2])?)));
    }
    if let Some(c) = Cond::ALL.into_iter().find(|c| c.mnemonic() == mnem) {
        want(1)?;
        return Ok(Pending::Branch(Some(c), ops[0].to_string(), line));
    }
    let ins = match mnem.as_str() {
        "FLDI" => {
            want(2)?;
            let v: f32 = ops[1].parse().map_err(|_| bad(format!("bad float `{}`", ops[1])))?;
            Instr::Fldi(fr(ops[0])?, v)
        }
        "FLDG" => {
            want(2)?;
            match mem(ops[1])? {
                Mem::Abs(a) => Instr::Fldg(fr(ops[0])?, a),
                _ => return Err(bad("FLDG needs an absolute address".into())),
            }
        }
        "FSTG" => {
            want(2)?;
            match mem(ops[0])? {
                Mem::Abs(a) => Instr::Fstg(a, fr(ops[1])?),
                _ => return Err(bad("FSTG needs an absolute address".into())),
            }
        }
        "FLDP" => {
            want(2)?;
            match mem(ops[1])? {
                Mem::Reg(b, off) => Instr::Fldp(fr(ops[0])?, b, off),
                _ => return Err(bad("FLDP needs [rN + off]".into())),
            }
        }
        "FSTP" => {
            want(2)?;
            match mem(ops[0])? {
                Mem::Reg(b, off) => Instr::Fstp(b, off, fr(ops[1])?),
                _ => return Err(bad("FSTP needs [rN + off]".into())),
            }
        }
        "FLDS" => {
            want(2)?;
            match mem(ops[1])? {
                Mem::Sp(off) => Instr::Flds(fr(ops[0])?, off),
                _ => return Err(bad("FLDS needs [sp + off]".into())),
            }
        }
        "FSTS" => {
            want(2)?;
            match mem(ops[0])? {
                Mem::Sp(off) => Instr::Fsts(off, fr(ops[1])?),
                _ => return Err(bad("FSTS needs [sp + off]".into())),
            }
        }
        "LDI" => {
            want(2)?;
            let v = parse_u32(ops[1])
                .or_else(|| parse_i32(ops[1]).map(|v| v as u32))
                .ok_or_else(|| bad(format!("bad immediate `{}`", ops[1])))?;
            Instr::Ldi(ir(ops[0])?, v)
        }
        "ADDI" => {
            want(3)?;
            Instr::Addi(ir(ops[0])?, ir(ops[1])?, imm(ops[2])?)
        }
        "MOV" => {
            want(2)?;
            Instr::Mov(ir(ops[0])?, ir(ops[1])?)
        }
        "SPADJ" => {
            want(1)?;
            Instr::Spadj(imm(ops[0])?)
        }
        "FMOV" => {
            want(2)?;
            Instr::Fmov(fr(ops[0])?, fr(ops[1])?)
        }
        "FNEG" => {
            want(2)?;
            Instr::Fneg(fr(ops[0])?, fr(ops[1])?)
        }
        "FIN1" => {
            let (name, regs) = ops_after_name(rest).ok_or_else(|| bad("FIN1 needs an op name".into()))?;
            let op = fin1_op(name).ok_or_else(|| bad(format!("unknown FIN1 op `{name}`")))?;
            if regs.len() != 2 {
                return Err(bad("FIN1 takes two registers".into()));
            }
            Instr::Fin1(op, fr(regs[0])?, fr(regs[1])?)
        }
        "FIN2" => {
            let (name, regs) = ops_after_name(rest).ok_or_else(|| bad("FIN2 needs an op name".into()))?;
            if name != "pow" {
                return Err(bad(format!("unknown FIN2 op `{name}`")));
            }
            if regs.len() != 3 {
                return Err(bad("FIN2 takes three registers".into()));
            }
            Instr::Fpow(fr(regs[0])?, fr(regs[1])?, fr(regs[2])?)
        }
        "FCMP" => {
            want(2)?;
            Instr::Fcmp(fr(ops[0])?, fr(ops[1])?)
        }
        "B" => {
            want(1)?;
            return Ok(Pending::Branch(None, ops[0].to_string(), line));
        }
        "CALL" => {
            want(1)?;
            if !is_ident(ops[0]) {
                return Err(bad(format!("bad function name `{}`", ops[0])));
            }
            Instr::Call(ops[0].to_string())
        }
        "RET" => {
            want(0)?;
            Instr::Ret
        }
        _ => return Err(bad(format!("unknown mnemonic `{mnem}`"))),
    };
    Ok(Pending::Done(ins))
}

fn split_operands(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).collect()
}

/// `sin s0, s1` -> ("sin", ["s0", "s1"])
fn ops_after_name(rest: &str) -> Option<(&str, Vec<&str>)> {
    let rest = rest.trim();
    let (name, regs) = rest.split_once(char::is_whitespace)?;
    Some((name, split_operands(regs)))
}

fn parse_freg(s: &str) -> Option<FReg> {
    let n: u8 = s.strip_prefix('s')?.parse().ok()?;
    ((n as usize) < NUM_FREGS).then_some(FReg(n))
}

fn parse_ireg(s: &str) -> Option<IReg> {
    let n: u8 = s.strip_prefix('r')?.parse().ok()?;
    ((n as usize) < NUM_IREGS).then_some(IReg(n))
}

fn parse_u32(s: &str) -> Option<u32> {
    match s.strip_prefix("0x") {
        Some(h) => u32::from_str_radix(h, 16).ok(),
        None => s.parse().ok(),
    }
}

fn parse_i32(s: &str) -> Option<i32> {
    match s.strip_prefix('-') {
        Some(rest) => parse_u32(rest).and_then(|v| i32::try_from(v).ok()).map(|v| -v),
        None => parse_u32(s).and_then(|v| i32::try_from(v).ok()),
    }
}

fn parse_word(s: &str) -> Option<u32> {
    if s.starts_with("0x") {
        parse_u32(s)
    } else {
        s.parse::<f32>().ok().map(f32::to_bits)
    }
}

enum Mem {
    Abs(u32),
    Reg(IReg, i32),
    Sp(i32),
}

fn parse_mem(s: &str) -> Option<Mem> {
    let inner = s.strip_prefix('[')?.strip_suffix(']')?.trim();
    let (base, off) = if let Some((b, o)) = inner.split_once('+') {
        (b.trim(), parse_i32(o.trim())?)
    } else if let Some((b, o)) = inner.split_once('-') {
        (b.trim(), -parse_i32(o.trim())?)
    } else {
        (inner, 0)
    };
    if base == "sp" {
        Some(Mem::Sp(off))
    } else if let Some(r) = parse_ireg(base) {
        Some(Mem::Reg(r, off))
    } else if inner == base {
        parse_u32(base).map(Mem::Abs)
    } else {
        None
    }
}

fn fmt_off(off: i32) -> String {
    if off < 0 {
        format!("- {:#x}", off.unsigned_abs())
    } else {
        format!("+ {off:#x}")
    }
}

fn fmt_word(w: u32) -> String {
    let v = f32::from_bits(w);
    if v.is_finite() && v.to_string().parse::<f32>().map(f32::to_bits) == Ok(w) {
        format!("{v:?}")
    } else {
        format!("{w:#x}")
    }
}

/// Canonical text form; `assemble` of the result reproduces `img`.
pub fn disassemble(img: &BinaryImage) -> String {
    let mut out = String::new();
    for (a, w) in &img.globals {
        let _ = writeln!(out, ".global {a:#x} {}", fmt_word(*w));
    }
    if let Some(e) = &img.entry {
        let _ = writeln!(out, ".entry {e}");
    }
    for f in &img.functions {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, ".func {}", f.name);
        let targets: std::collections::BTreeSet<u32> = f.code.iter().filter_map(Instr::branch_target).collect();
        for (i, ins) in f.code.iter().enumerate() {
            if targets.contains(&(i as u32)) {
                let _ = writeln!(out, "L{i}:");
            }
            let _ = writeln!(out, "    {}", render(ins));
        }
    }
    out
}

fn render(ins: &Instr) -> String {
    match ins {
        Instr::Fldi(d, v) => format!("FLDI {d}, {v:?}"),
        Instr::Fldg(d, a) => format!("FLDG {d}, [{a:#x}]"),
        Instr::Fstg(a, s) => format!("FSTG [{a:#x}], {s}"),
        Instr::Fldp(d, b, o) => format!("FLDP {d}, [{b} {}]", fmt_off(*o)),
        Instr::Fstp(b, o, s) => format!("FSTP [{b} {}], {s}", fmt_off(*o)),
        Instr::Flds(d, o) => format!("FLDS {d}, [sp {}]", fmt_off(*o)),
        Instr::Fsts(o, s) => format!("FSTS [sp {}], {s}", fmt_off(*o)),
        Instr::Ldi(d, v) => format!("LDI {d}, {v:#x}"),
        Instr::Addi(d, s, v) => format!("ADDI {d}, {s}, {v}"),
        Instr::Mov(d, s) => format!("MOV {d}, {s}"),
        Instr::Spadj(v) => format!("SPADJ {v}"),
        Instr::Fmov(d, a) => format!("FMOV {d}, {a}"),
        Instr::Arith(op, d, a, b) => format!("{} {d}, {a}, {b}", op.mnemonic()),
        Instr::Fneg(d, a) => format!("FNEG {d}, {a}"),
        Instr::Fin1(op, d, a) => format!("FIN1 {} {d}, {a}", op.name()),
        Instr::Fpow(d, a, b) => format!("FIN2 pow {d}, {a}, {b}"),
        Instr::Fcmp(a, b) => format!("FCMP {a}, {b}"),
        Instr::B(t) => format!("B L{t}"),
        Instr::Bcc(c, t) => format!("{} L{t}", c.mnemonic()),
        Instr::Call(n) => format!("CALL {n}"),
        Instr::Ret => "RET".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_instruction_function() {
        let img = assemble(".func add2\nFADD s0,s0,s1 ; RET").unwrap();
        assert_eq!(img.functions.len(), 1);
        assert_eq!(img.functions[0].code, vec![Instr::Arith(ArithOp::Add, FReg(0), FReg(0), FReg(1)), Instr::Ret]);
    }

    #[test]
    fn missing_label_is_an_error() {
        let err = assemble(".func f\n  B nowhere\n  RET").unwrap_err();
        assert_eq!(err, AsmError::UndefinedLabel { line: 2, label: "nowhere".into() });
    }

    #[test]
    fn duplicate_function_is_an_error() {
        let err = assemble(".func f\nRET\n.func f\nRET").unwrap_err();
        assert!(matches!(err, AsmError::DuplicateFunction { line: 3, .. }));
    }

    #[test]
    fn malformed_operand() {
        assert!(matches!(assemble(".func f\nFADD s0, s1\n"), Err(AsmError::Malformed { .. })));
        assert!(matches!(assemble(".func f\nFLDP s0, [sp + 4]\n"), Err(AsmError::Malformed { .. })));
        assert!(matches!(assemble(".func f\nFMOV s16, s0\n"), Err(AsmError::Malformed { .. })));
    }

    #[test]
    fn undefined_callee_rejected() {
        assert!(matches!(assemble(".func f\nCALL g\nRET"), Err(AsmError::Image(ImageError::UndefinedCallee(_)))));
        assert!(assemble(".func f\nCALL expf\nRET").is_ok());
    }

    #[test]
    fn canonical_text_round_trips() {
        let src = "\
.global 0x408fc 25.6
.global 0x40900 0x7fc00001
.entry f

.func f
    FLDP s1, [r0 + 0xc]
    FSTS [sp - 0x8], s8
    FIN1 exp s0, s1
    FIN2 pow s0, s0, s1
L4:
    FCMP s0, s1
    BLT L4
    LDI r1, 0x40000000
    ADDI r1, r1, -4
    SPADJ -16
    RET
";
        let img = assemble(src).unwrap();
        assert_eq!(disassemble(&img), src);
    }
}
