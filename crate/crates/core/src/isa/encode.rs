//! Binary image container. All integers little-endian.
//!
//! ```text
//! magic   "MQVM"
//! version u16
//! nfunc   u32, then per function: name, first instruction u32, length u32
//! ninstr  u32, then instructions: opcode u8 + operands
//! nglob   u32, then (addr u32, word u32) pairs
//! entry   u8 flag, then name if flag = 1
//! name    u16 byte length + UTF-8
//! ```

use super::{ArithOp, BinaryImage, Cond, FReg, Function, IReg, ImageError, Instr};
use crate::expr::UnOp;

pub const MAGIC: &[u8; 4] = b"MQVM";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("not an image: bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("truncated at byte {0}")]
    Truncated(usize),
    #[error("unknown opcode {op:#x} at byte {pos}")]
    Opcode { op: u8, pos: usize },
    #[error("invalid UTF-8 in name at byte {0}")]
    Utf8(usize),
    #[error("function table does not cover the instruction stream")]
    Layout,
    #[error(transparent)]
    Invalid(#[from] ImageError),
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn name(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.0.extend_from_slice(s.as_bytes());
    }
}

pub fn encode(img: &BinaryImage) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u16(FORMAT_VERSION);
    w.u32(img.functions.len() as u32);
    let mut at = 0u32;
    for f in &img.functions {
        w.name(&f.name);
        w.u32(at);
        w.u32(f.code.len() as u32);
        at += f.code.len() as u32;
    }
    w.u32(at);
    for ins in img.functions.iter().flat_map(|f| &f.code) {
        encode_instr(&mut w, ins);
    }
    w.u32(img.globals.len() as u32);
    for (a, v) in &img.globals {
        w.u32(*a);
        w.u32(*v);
    }
    match &img.entry {
        Some(e) => {
            w.u8(1);
            w.name(e);
        }
        None => w.u8(0),
    }
    w.0
}

fn unop_code(op: UnOp) -> u8 {
    UnOp::ALL.iter().position(|o| *o == op).unwrap_or(0) as u8
}

fn encode_instr(w: &mut Writer, ins: &Instr) {
    match ins {
        Instr::Fldi(d, v) => {
            w.u8(0);
            w.u8(d.0);
            w.u32(v.to_bits());
        }
        Instr::Fldg(d, a) => {
            w.u8(1);
            w.u8(d.0);
            w.u32(*a);
        }
        Instr::Fstg(a, s) => {
            w.u8(2);
            w.u32(*a);
            w.u8(s.0);
        }
        Instr::Fldp(d, b, o) => {
            w.u8(3);
            w.u8(d.0);
            w.u8(b.0);
            w.i32(*o);
        }
        Instr::Fstp(b, o, s) => {
            w.u8(4);
            w.u8(b.0);
            w.i32(*o);
            w.u8(s.0);
        }
        Instr::Flds(d, o) => {
            w.u8(5);
            w.u8(d.0);
            w.i32(*o);
        }
        Instr::Fsts(o, s) => {
            w.u8(6);
            w.i32(*o);
            w.u8(s.0);
        }
        Instr::Ldi(d, v) => {
            w.u8(7);
            w.u8(d.0);
            w.u32(*v);
        }
        Instr::Addi(d, s, v) => {
            w.u8(8);
            w.u8(d.0);
            w.u8(s.0);
            w.i32(*v);
        }
        Instr::Mov(d, s) => {
            w.u8(9);
            w.u8(d.0);
            w.u8(s.0);
        }
        Instr::Spadj(v) => {
            w.u8(10);
            w.i32(*v);
        }
        Instr::Fmov(d, a) => {
            w.u8(11);
            w.u8(d.0);
            w.u8(a.0);
        }
        Instr::Arith(op, d, a, b) => {
            w.u8(12 + ArithOp::ALL.iter().position(|o| o == op).unwrap_or(0) as u8);
            w.u8(d.0);
            w.u8(a.0);
            w.u8(b.0);
        }
        Instr::Fneg(d, a) => {
            w.u8(16);
            w.u8(d.0);
            w.u8(a.0);
        }
        Instr::Fin1(op, d, a) => {
            w.u8(17);
            w.u8(unop_code(*op));
            w.u8(d.0);
            w.u8(a.0);
        }
        Instr::Fpow(d, a, b) => {
            w.u8(18);
            w.u8(d.0);
            w.u8(a.0);
            w.u8(b.0);
        }
        Instr::Fcmp(a, b) => {
            w.u8(19);
            w.u8(a.0);
            w.u8(b.0);
        }
        Instr::B(t) => {
            w.u8(20);
            w.u32(*t);
        }
        Instr::Bcc(c, t) => {
            w.u8(21);
            w.u8(Cond::ALL.iter().position(|x| x == c).unwrap_or(0) as u8);
            w.u32(*t);
        }
        Instr::Call(n) => {
            w.u8(22);
            w.name(n);
        }
        Instr::Ret => w.u8(23),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or(DecodeError::Truncated(self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, DecodeError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap_or_default()))
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap_or_default()))
    }
    fn i32(&mut self) -> Result<i32, DecodeError> {
        Ok(self.u32()? as i32)
    }
    fn fr(&mut self) -> Result<FReg, DecodeError> {
        Ok(FReg(self.u8()?))
    }
    fn ir(&mut self) -> Result<IReg, DecodeError> {
        Ok(IReg(self.u8()?))
    }
    fn name(&mut self) -> Result<String, DecodeError> {
        let n = self.u16()? as usize;
        let at = self.pos;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::Utf8(at))
    }
}

pub fn decode(bytes: &[u8]) -> Result<BinaryImage, DecodeError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| DecodeError::BadMagic)? != MAGIC {
        return Err(DecodeError::BadMagic);
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION {
        return Err(DecodeError::Version(version));
    }
    let nfunc = r.u32()?;
    let mut table = Vec::new();
    for _ in 0..nfunc {
        let name = r.name()?;
        let start = r.u32()?;
        let len = r.u32()?;
        table.push((name, start, len));
    }
    let ninstr = r.u32()?;
    let mut stream = Vec::new();
    for _ in 0..ninstr {
        stream.push(decode_instr(&mut r)?);
    }
    let mut img = BinaryImage::default();
    let mut expect = 0u32;
    for (name, start, len) in table {
        if start != expect || (start + len) as usize > stream.len() {
            return Err(DecodeError::Layout);
        }
        let code = stream[start as usize..(start + len) as usize].to_vec();
        img.functions.push(Function { name, code });
        expect = start + len;
    }
    if expect as usize != stream.len() {
        return Err(DecodeError::Layout);
    }
    let nglob = r.u32()?;
    for _ in 0..nglob {
        let a = r.u32()?;
        let v = r.u32()?;
        img.globals.insert(a, v);
    }
    if r.u8()? == 1 {
        img.entry = Some(r.name()?);
    }
    img.validate()?;
    Ok(img)
}

fn decode_instr(r: &mut Reader) -> Result<Instr, DecodeError> {
    let pos = r.pos;
    let op = r.u8()?;
    Ok(match op {
        0 => Instr::Fldi(r.fr()?, f32::from_bits(r.u32()?)),
        1 => Instr::Fldg(r.fr()?, r.u32()?),
        2 => Instr::Fstg(r.u32()?, r.fr()?),
        3 => Instr::Fldp(r.fr()?, r.ir()?, r.i32()?),
        4 => Instr::Fstp(r.ir()?, r.i32()?, r.fr()?),
        5 => Instr::Flds(r.fr()?, r.i32()?),
        6 => Instr::Fsts(r.i32()?, r.fr()?),
        7 => Instr::Ldi(r.ir()?, r.u32()?),
        8 => Instr::Addi(r.ir()?, r.ir()?, r.i32()?),
        9 => Instr::Mov(r.ir()?, r.ir()?),
        10 => Instr::Spadj(r.i32()?),
        11 => Instr::Fmov(r.fr()?, r.fr()?),
        12..=15 => Instr::Arith(ArithOp::ALL[(op - 12) as usize], r.fr()?, r.fr()?, r.fr()?),
        16 => Instr::Fneg(r.fr()?, r.fr()?),
        17 => {
            let code = r.u8()? as usize;
            let uop = *UnOp::ALL.get(code).filter(|o| **o != UnOp::Neg).ok_or(DecodeError::Opcode { op, pos })?;
            Instr::Fin1(uop, r.fr()?, r.fr()?)
        }
        18 => Instr::Fpow(r.fr()?, r.fr()?, r.fr()?),
        19 => Instr::Fcmp(r.fr()?, r.fr()?),
        20 => Instr::B(r.u32()?),
        21 => {
            let c = *Cond::ALL.get(r.u8()? as usize).ok_or(DecodeError::Opcode { op, pos })?;
            Instr::Bcc(c, r.u32()?)
        }
        22 => Instr::Call(r.name()?),
        23 => Instr::Ret,
        _ => return Err(DecodeError::Opcode { op, pos }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::assemble;

    #[test]
    fn header_and_round_trip() {
        let img =
            assemble(".global 0x100 1.5\n.entry f\n.func f\nFLDG s0, [0x100]\nCALL g\nRET\n.func g\nRET").unwrap();
        let bytes = encode(&img);
        assert_eq!(&bytes[..4], b"MQVM");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), FORMAT_VERSION);
        assert_eq!(decode(&bytes).unwrap(), img);
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(decode(b"ELF\0"), Err(DecodeError::BadMagic));
        let img = assemble(".func f\nRET").unwrap();
        let bytes = encode(&img);
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(DecodeError::Truncated(_))));
        let mut v2 = bytes.clone();
        v2[4] = 9;
        assert_eq!(decode(&v2), Err(DecodeError::Version(9)));
    }
}
