//! Human-oriented infix rendering.

use super::{BinOp, BoolOp, Expr, UnOp};

/// Renders `e` as infix text; piecewise expressions use
/// `{ v1 if c1; v2 if c2; v3 otherwise }`.
pub fn pretty(e: &Expr) -> String {
    let mut out = String::new();
    render(e, 0, &mut out);
    out
}

/// Shortest decimal form; values that are exact 32-bit floats print as such.
pub fn format_num(v: f64) -> String {
    let single = v as f32;
    if single as f64 == v {
        format!("{single}")
    } else {
        format!("{v}")
    }
}

// Precedence levels: 1 or/xor, 2 and, 3 not, 4 comparison, 5 additive,
// 6 multiplicative, 7 unary minus, 8 power, 9 atoms and calls.
fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bool(BoolOp::Or | BoolOp::Xor, _) => 1,
        Expr::Bool(BoolOp::And, _) => 2,
        Expr::Bool(BoolOp::Not, _) => 3,
        Expr::Cmp(..) => 4,
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 5,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 6,
        Expr::Unary(UnOp::Neg, _) => 7,
        Expr::Num(v) if *v < 0.0 => 7,
        Expr::Binary(BinOp::Pow, ..) => 8,
        Expr::Ite(..) => 0,
        _ => 9,
    }
}

fn render(e: &Expr, min_prec: u8, out: &mut String) {
    let p = prec(e);
    let paren = p < min_prec;
    if paren {
        out.push('(');
    }
    match e {
        Expr::Sym(s) => out.push_str(&s.name),
        Expr::Num(v) => out.push_str(&format_num(*v)),
        Expr::BoolConst(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Undef => out.push_str("undef"),
        Expr::Unary(UnOp::Neg, a) => {
            out.push('-');
            render(a, 8, out);
        }
        Expr::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            render(a, 0, out);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            let (sym, lp, rp) = match op {
                BinOp::Add => (" + ", 5, 5),
                BinOp::Sub => (" - ", 5, 6),
                BinOp::Mul => ("*", 6, 6),
                BinOp::Div => ("/", 6, 7),
                BinOp::Pow => ("^", 9, 8),
            };
            render(a, lp, out);
            out.push_str(sym);
            render(b, rp, out);
        }
        Expr::Cmp(op, a, b) => {
            render(a, 5, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            render(b, 5, out);
        }
        Expr::Bool(BoolOp::Not, cs) => {
            out.push_str("not ");
            render(&cs[0], 4, out);
        }
        Expr::Bool(op, cs) => {
            let sep = match op {
                BoolOp::And => " and ",
                BoolOp::Or => " or ",
                _ => " xor ",
            };
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                render(c, p + 1, out);
            }
        }
        Expr::Ite(c, t, f) => {
            out.push_str("if ");
            render(c, 0, out);
            out.push_str(" then ");
            render(t, 1, out);
            out.push_str(" else ");
            render(f, 1, out);
        }
        Expr::Piecewise(bs) => {
            out.push_str("{ ");
            for (i, (v, c)) in bs.iter().enumerate() {
                if i > 0 {
                    out.push_str("; ");
                }
                render(v, 1, out);
                if i + 1 == bs.len() && c.is_true() {
                    out.push_str(" otherwise");
                } else {
                    out.push_str(" if ");
                    render(c, 0, out);
                }
            }
            out.push_str(" }");
        }
        Expr::Call(name, args) => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render(a, 0, out);
            }
            out.push(')');
        }
    }
    if paren {
        out.push(')');
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{CmpOp, Expr};

    #[test]
    fn infix_precedence() {
        let x = |i: usize| Expr::input(format!("x{i}"));
        let e = Expr::mul(x(3), Expr::sub(x(0), x(1)));
        assert_eq!(pretty(&e), "x3*(x0 - x1)");
        let e = Expr::sub(x(0), Expr::sub(x(1), x(2)));
        assert_eq!(pretty(&e), "x0 - (x1 - x2)");
        let e = Expr::div(Expr::neg(x(0)), Expr::konst("k0"));
        assert_eq!(pretty(&e), "-x0/k0");
    }

    #[test]
    fn piecewise_form() {
        let x0 = Expr::input("x0");
        let e = Expr::piecewise(vec![
            (Expr::num(-1.0), Expr::cmp(CmpOp::Lt, x0, Expr::num(0.0))),
            (Expr::num(1.0), Expr::bool_const(true)),
        ]);
        assert_eq!(pretty(&e), "{ -1 if x0 < 0; 1 otherwise }");
    }

    #[test]
    fn single_precision_values_print_short() {
        assert_eq!(format_num(25.6f32 as f64), "25.6");
        assert_eq!(format_num(8.61), "8.61");
    }
}
