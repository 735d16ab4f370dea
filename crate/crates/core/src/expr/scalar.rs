use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use super::{BinOp, UnOp};

/// Floating point type an expression can be evaluated in.
///
/// `f32` reproduces the machine's arithmetic exactly (every operation rounds
/// to single precision); `f64` is used as a reference when checking that two
/// expressions are mathematically equal.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Applies a unary operator, rejecting inputs outside its real domain and
    /// results that are not finite.
    fn apply_unary(op: UnOp, a: Self) -> Result<Self, &'static str> {
        let one = Self::one();
        let v = match op {
            UnOp::Neg => -a,
            UnOp::Sin => a.sin(),
            UnOp::Cos => a.cos(),
            UnOp::Tan => a.tan(),
            UnOp::Asin | UnOp::Acos if a < -one || a > one => return Err("argument outside [-1, 1]"),
            UnOp::Asin => a.asin(),
            UnOp::Acos => a.acos(),
            UnOp::Atan => a.atan(),
            UnOp::Exp => a.exp(),
            UnOp::Log if a <= Self::zero() => return Err("log of non-positive value"),
            UnOp::Log => a.ln(),
            UnOp::Sqrt if a < Self::zero() => return Err("sqrt of negative value"),
            UnOp::Sqrt => a.sqrt(),
        };
        finite(v)
    }

    fn apply_binary(op: BinOp, a: Self, b: Self) -> Result<Self, &'static str> {
        let v = match op {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div if b == Self::zero() => return Err("division by zero"),
            BinOp::Div => a / b,
            BinOp::Pow if a < Self::zero() && b.fract() != Self::zero() => {
                return Err("negative base with non-integer exponent")
            }
            BinOp::Pow if a == Self::zero() && b < Self::zero() => return Err("zero to a negative power"),
            BinOp::Pow => a.powf(b),
        };
        finite(v)
    }
}

fn finite<S: Float>(v: S) -> Result<S, &'static str> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err("non-finite result")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
