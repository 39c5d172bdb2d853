//! Coefficient types.
//!
//! Everything symbolic in this crate is generic over [`Scalar`]. The exact
//! instance is [`Rational`] (arbitrary precision); `f64` and `f32` are
//! provided for quick numeric experiments but give no guarantees about
//! normality decisions, which depend on exact zero tests.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, One, Signed, ToPrimitive, Zero};

/// Arbitrary precision rational number.
pub type Rational = BigRational;

/// Coefficient field of a [`Series`](crate::Series).
pub trait Scalar:
    Clone + PartialEq + PartialOrd + Debug + Display + Num + Signed + FromPrimitive + Send + Sync + 'static
{
    fn from_ratio(num: i64, den: i64) -> Self;

    fn to_f64(&self) -> f64;

    /// Parses `"3/2"`, `"-4"` or `"0"`.
    fn parse_coef(s: &str) -> Option<Self>;

    /// Inverse of [`Scalar::parse_coef`].
    fn render(&self) -> String;

    /// The real `d`-th root when it is representable in `Self`.
    fn exact_root(&self, d: u32) -> Option<Self>;
}

impl Scalar for Rational {
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn parse_coef(s: &str) -> Option<Self> {
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n = BigInt::from_str(n.trim()).ok()?;
                let d = BigInt::from_str(d.trim()).ok()?;
                if d.is_zero() {
                    None
                } else {
                    Some(BigRational::new(n, d))
                }
            }
            None => BigInt::from_str(s).ok().map(BigRational::from_integer),
        }
    }

    fn render(&self) -> String {
        if self.denom().is_one() {
            self.numer().to_string()
        } else {
            format!("{}/{}", self.numer(), self.denom())
        }
    }

    fn exact_root(&self, d: u32) -> Option<Self> {
        if d == 0 {
            return None;
        }
        if d == 1 {
            return Some(self.clone());
        }
        if self.is_negative() && d.is_multiple_of(2) {
            return None;
        }
        let root_int = |v: &BigInt| -> Option<BigInt> {
            let r = if v.is_negative() { -(-v).nth_root(d) } else { v.nth_root(d) };
            (num_traits::pow(r.clone(), d as usize) == *v).then_some(r)
        };
        Some(BigRational::new(root_int(self.numer())?, root_int(self.denom())?))
    }
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_ratio(num: i64, den: i64) -> Self {
                num as $t / den as $t
            }

            fn to_f64(&self) -> f64 {
                *self as f64
            }

            fn parse_coef(s: &str) -> Option<Self> {
                let r = Rational::parse_coef(s)?;
                Some(Scalar::to_f64(&r) as $t)
            }

            fn render(&self) -> String {
                self.to_string()
            }

            fn exact_root(&self, d: u32) -> Option<Self> {
                if d == 0 || (*self < 0.0 && d % 2 == 0) {
                    return None;
                }
                Some(self.signum() * self.abs().powf(1.0 / d as $t))
            }
        }
    };
}

float_scalar!(f64);
float_scalar!(f32);

/// `n!` in the coefficient field.
pub fn factorial<C: Scalar>(n: u32) -> C {
    (1..=n).fold(C::one(), |acc, k| acc * C::from_u32(k).expect("small integer"))
}

pub(crate) fn from_usize<C: Scalar>(n: usize) -> C {
    C::from_usize(n).expect("small integer")
}
