//! Scalar abstraction shared by the kernel recurrences, with a double-double
//! type for checks whose individual terms are many orders of magnitude larger
//! than their sum.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// The arithmetic the operator recurrences need.
pub trait Real:
    Copy
    + Send
    + Sync
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(self) -> f64 {
        self
    }
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`; about 106 bits of mantissa.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub fn new(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }
}

impl Add for DoubleDouble {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl AddAssign for DoubleDouble {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Neg for DoubleDouble {
    type Output = Self;

    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;

    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;

    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;

    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * Self::new(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Self::new(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + Self::new(q3)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(std::cmp::Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl Real for DoubleDouble {
    fn from_f64(x: f64) -> Self {
        Self::new(x)
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Coefficient type for finitely supported measures: `f64` for speed,
/// [`BigRational`] when the result must be exact.
pub trait Weight: Clone + Debug + PartialEq + Send + Sync {
    fn zero() -> Self;
    fn one() -> Self;
    /// Exact for `BigRational`: every finite double is a dyadic rational.
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn is_zero(&self) -> bool;
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn times(&self, other: &Self) -> Self;
    fn magnitude(&self) -> Self;
}

impl Weight for f64 {
    fn zero() -> Self {
        0.0
    }

    fn one() -> Self {
        1.0
    }

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }

    fn plus(&self, other: &Self) -> Self {
        self + other
    }

    fn minus(&self, other: &Self) -> Self {
        self - other
    }

    fn times(&self, other: &Self) -> Self {
        self * other
    }

    fn magnitude(&self) -> Self {
        self.abs()
    }
}

impl Weight for BigRational {
    fn zero() -> Self {
        <BigRational as Zero>::zero()
    }

    fn one() -> Self {
        BigRational::from_integer(BigInt::from(1))
    }

    fn from_f64(x: f64) -> Self {
        BigRational::from_float(x).expect("finite weight")
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or_else(|| {
            // numerator and denominator too wide for a direct conversion
            let shift = self.numer().bits().max(self.denom().bits()) as i64 - 1000;
            let two = BigInt::from(2);
            let scaled = if shift > 0 {
                let p = two.pow(shift as u32);
                BigRational::new(self.numer() / &p, self.denom() / &p)
            } else {
                self.clone()
            };
            ToPrimitive::to_f64(&scaled).unwrap_or(0.0)
        })
    }

    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }

    fn plus(&self, other: &Self) -> Self {
        self + other
    }

    fn minus(&self, other: &Self) -> Self {
        self - other
    }

    fn times(&self, other: &Self) -> Self {
        self * other
    }

    fn magnitude(&self) -> Self {
        self.abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_bits_that_f64_drops() {
        let big = DoubleDouble::new(1.0e16);
        let sum = big + DoubleDouble::new(1.0) - big;
        assert_eq!(sum.to_f64(), 1.0);
        assert_eq!((1.0e16 + 1.0) - 1.0e16, 0.0);
    }

    #[test]
    fn division_round_trips() {
        let third = DoubleDouble::new(1.0) / DoubleDouble::new(3.0);
        let back = third * DoubleDouble::new(3.0) - DoubleDouble::new(1.0);
        assert!(back.to_f64().abs() < 1e-31);
    }

    #[test]
    fn product_error_term_is_exact() {
        let a = DoubleDouble::new(1.0 + f64::EPSILON);
        let sq = a * a;
        assert_eq!(sq.hi(), 1.0 + 2.0 * f64::EPSILON);
        assert_eq!(sq.lo(), f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn rational_weights_are_exact() {
        let third = <BigRational as Weight>::from_f64(0.1);
        let back = Weight::to_f64(&third);
        assert_eq!(back, 0.1);
        let tiny = <BigRational as Weight>::from_f64(2f64.powi(-1000));
        let prod = tiny.times(&tiny);
        assert_eq!(Weight::to_f64(&prod), 0.0);
        assert!(!Weight::is_zero(&prod));
    }
}
