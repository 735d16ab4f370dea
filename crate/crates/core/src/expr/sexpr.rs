//! Prefix s-expression text form.
//!
//! ```text
//! expr := (sym NAME ROLE) | (num FLOAT) | (true) | (false) | (undef)
//!       | (UNOP expr) | (BINOP expr expr) | (CMP expr expr)
//!       | (and expr+) | (or expr+) | (xor expr+) | (not expr)
//!       | (ite expr expr expr) | (piecewise (expr expr)+) | (call NAME expr*)
//! ```

use std::fmt::Write;
use std::sync::Arc;

use super::{BinOp, BoolOp, CmpOp, Expr, Role, Symbol, UnOp, P};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

pub fn serialize(e: &Expr) -> String {
    let mut out = String::new();
    write_expr(e, &mut out);
    out
}

fn write_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Sym(s) => {
            let _ = write!(out, "(sym {} {})", s.name, s.role.as_str());
        }
        Expr::Num(v) => {
            let _ = write!(out, "(num {v:?})");
        }
        Expr::BoolConst(b) => out.push_str(if *b { "(true)" } else { "(false)" }),
        Expr::Undef => out.push_str("(undef)"),
        Expr::Unary(op, a) => head(out, op.name(), [a]),
        Expr::Binary(op, a, b) => head(out, op.name(), [a, b]),
        Expr::Cmp(op, a, b) => head(out, op.name(), [a, b]),
        Expr::Bool(op, cs) => head(out, op.name(), cs),
        Expr::Ite(c, t, f) => head(out, "ite", [c, t, f]),
        Expr::Call(name, args) => {
            let _ = write!(out, "(call {name}");
            for a in args {
                out.push(' ');
                write_expr(a, out);
            }
            out.push(')');
        }
        Expr::Piecewise(bs) => {
            out.push_str("(piecewise");
            for (v, c) in bs {
                out.push_str(" (");
                write_expr(v, out);
                out.push(' ');
                write_expr(c, out);
                out.push(')');
            }
            out.push(')');
        }
    }
}

fn head<'a>(out: &mut String, name: &str, children: impl IntoIterator<Item = &'a P>) {
    out.push('(');
    out.push_str(name);
    for c in children {
        out.push(' ');
        write_expr(c, out);
    }
    out.push(')');
}

/// Parses the s-expression form with bare `xN`/`kN` symbols and bare numbers,
/// as in `(add x0 (mul k0 2.5))`.
pub fn parse_shorthand(text: &str) -> Result<P, ParseError> {
    let spaced = text.replace('(', " ( ").replace(')', " ) ");
    let mut out = String::new();
    for tok in spaced.split_whitespace() {
        let is_var = tok.len() > 1 && tok.starts_with(['x', 'k']) && tok[1..].chars().all(|c| c.is_ascii_digit());
        if is_var {
            let role = if tok.starts_with('k') { "const" } else { "input" };
            out.push_str(&format!("(sym {tok} {role}) "));
        } else if tok.parse::<f64>().is_ok() {
            out.push_str(&format!("(num {tok}) "));
        } else {
            out.push_str(tok);
            out.push(' ');
        }
    }
    parse(&out)
}

pub fn parse(text: &str) -> Result<P, ParseError> {
    let mut p = Parser { src: text, pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != text.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn atom(&mut self) -> Result<&'a str, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() || c == '(' || c == ')' {
                break;
            }
            self.pos += c.len_utf8();
        }
        if start == self.pos {
            return Err(self.err("expected an atom"));
        }
        Ok(&self.src[start..self.pos])
    }

    fn expr(&mut self) -> Result<P, ParseError> {
        self.expect('(')?;
        let head_pos = self.pos;
        let head = self.atom()?;
        let e = match head {
            "sym" => {
                let name = self.atom()?.to_string();
                self.skip_ws();
                let role_pos = self.pos;
                let role = self.atom()?;
                let role =
                    Role::parse(role).ok_or(ParseError { pos: role_pos, msg: format!("unknown role `{role}`") })?;
                Arc::new(Expr::Sym(Symbol { name, role }))
            }
            "num" => {
                self.skip_ws();
                let at = self.pos;
                let text = self.atom()?;
                let v: f64 = text.parse().map_err(|_| ParseError { pos: at, msg: format!("bad number `{text}`") })?;
                if !v.is_finite() {
                    return Err(ParseError { pos: at, msg: "non-finite number".into() });
                }
                Expr::num(v)
            }
            "true" => Expr::bool_const(true),
            "false" => Expr::bool_const(false),
            "undef" => Expr::undef(),
            "ite" => {
                let c = self.expr()?;
                let t = self.expr()?;
                let f = self.expr()?;
                Expr::ite(c, t, f)
            }
            "call" => {
                let name = self.atom()?.to_string();
                Expr::call(name, self.rest()?)
            }
            "piecewise" => {
                let mut bs = Vec::new();
                while self.peek() == Some('(') {
                    self.expect('(')?;
                    let v = self.expr()?;
                    let c = self.expr()?;
                    self.expect(')')?;
                    bs.push((v, c));
                }
                if bs.is_empty() {
                    return Err(self.err("piecewise needs at least one branch"));
                }
                Expr::piecewise(bs)
            }
            other => {
                let args = self.rest()?;
                let arity = |n: usize| -> Result<(), ParseError> {
                    if args.len() == n {
                        Ok(())
                    } else {
                        Err(ParseError { pos: head_pos, msg: format!("`{other}` takes {n} operand(s)") })
                    }
                };
                if let Some(op) = UnOp::from_name(other) {
                    arity(1)?;
                    Expr::unary(op, args[0].clone())
                } else if let Some(op) = BinOp::from_name(other) {
                    arity(2)?;
                    Expr::binary(op, args[0].clone(), args[1].clone())
                } else if let Some(op) = CmpOp::from_name(other) {
                    arity(2)?;
                    Expr::cmp(op, args[0].clone(), args[1].clone())
                } else if let Some(op) = BoolOp::from_name(other) {
                    if op == BoolOp::Not {
                        arity(1)?;
                    } else if args.is_empty() {
                        return Err(ParseError { pos: head_pos, msg: format!("`{other}` needs operands") });
                    }
                    Arc::new(Expr::Bool(op, args))
                } else {
                    return Err(ParseError { pos: head_pos, msg: format!("unknown operator `{other}`") });
                }
            }
        };
        // `call` and operator forms consume their own closing paren in `rest`.
        if matches!(head, "sym" | "num" | "true" | "false" | "undef" | "ite" | "piecewise") {
            self.expect(')')?;
        }
        Ok(e)
    }

    /// Parses expressions up to and including the closing paren.
    fn rest(&mut self) -> Result<Vec<P>, ParseError> {
        let mut out = Vec::new();
        while self.peek() == Some('(') {
            out.push(self.expr()?);
        }
        self.expect(')')?;
        Ok(out)
    }
}
