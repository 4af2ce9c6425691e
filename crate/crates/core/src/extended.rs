//! Binary floating point with a configurable significand width.
//!
//! A value is `mantissa * 2^exponent` with a signed big-integer mantissa of at
//! most `precision` bits. Every operation rounds to nearest, ties to even.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

pub const MIN_PRECISION: u32 = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtendedReal {
    mantissa: BigInt,
    exponent: i64,
    precision: u32,
}

/// Round `mag` to at most `bits` bits; returns the new magnitude and the
/// number of bits dropped.
fn round_magnitude(mag: BigUint, bits: u32) -> (BigUint, i64) {
    let len = mag.bits();
    if len <= bits as u64 {
        return (mag, 0);
    }
    let shift = len - bits as u64;
    let mut q = &mag >> shift;
    let half = mag.bit(shift - 1);
    let sticky = mag.trailing_zeros().is_some_and(|tz| tz < shift - 1);
    if half && (sticky || q.bit(0)) {
        q += 1u32;
    }
    if q.bits() > bits as u64 {
        // carried into a new bit; the value is a power of two so this is exact
        q >>= 1u32;
        return (q, shift as i64 + 1);
    }
    (q, shift as i64)
}

/// `m * 2^e` without intermediate overflow or premature underflow.
pub fn ldexp(m: f64, e: i64) -> f64 {
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let mut x = m;
    let mut e = e.clamp(-4000, 4000) as i32;
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e)
}

/// Split a finite double into `(mantissa, exponent)` with `x = mantissa * 2^exponent`.
fn decode_f64(x: f64) -> (i64, i64) {
    let bits = x.to_bits();
    let sign = if bits >> 63 == 0 { 1 } else { -1 };
    let raw_exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    if raw_exp == 0 {
        (sign * frac, -1074)
    } else {
        (sign * (frac | (1 << 52)), raw_exp - 1075)
    }
}

impl ExtendedReal {
    pub fn zero(precision: u32) -> Self {
        ExtendedReal { mantissa: BigInt::zero(), exponent: 0, precision: precision.max(MIN_PRECISION) }
    }

    fn from_parts(mantissa: BigInt, exponent: i64, precision: u32) -> Self {
        let precision = precision.max(MIN_PRECISION);
        if mantissa.is_zero() {
            return ExtendedReal::zero(precision);
        }
        let (sign, mag) = (mantissa.sign(), mantissa.magnitude().clone());
        let (mag, dropped) = round_magnitude(mag, precision);
        ExtendedReal { mantissa: BigInt::from_biguint(sign, mag), exponent: exponent + dropped, precision }
    }

    /// Exact conversion (rounded only if the integer exceeds the width).
    pub fn from_bigint(value: &BigInt, precision: u32) -> Self {
        Self::from_parts(value.clone(), 0, precision)
    }

    pub fn from_biguint(value: &BigUint, precision: u32) -> Self {
        Self::from_parts(BigInt::from_biguint(Sign::Plus, value.clone()), 0, precision)
    }

    /// Panics on non-finite input.
    pub fn from_f64(x: f64, precision: u32) -> Self {
        assert!(x.is_finite(), "cannot represent {x}");
        let (m, e) = decode_f64(x);
        Self::from_parts(BigInt::from(m), e, precision)
    }

    /// Exact `value * x`, rounded once.
    pub fn from_product(value: &BigInt, x: f64, precision: u32) -> Self {
        assert!(x.is_finite(), "cannot represent {x}");
        let (m, e) = decode_f64(x);
        Self::from_parts(value * m, e, precision)
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn with_precision(&self, precision: u32) -> Self {
        Self::from_parts(self.mantissa.clone(), self.exponent, precision)
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa.is_zero()
    }

    pub fn signum(&self) -> i32 {
        match self.mantissa.sign() {
            Sign::Minus => -1,
            Sign::NoSign => 0,
            Sign::Plus => 1,
        }
    }

    pub fn abs(&self) -> Self {
        ExtendedReal { mantissa: self.mantissa.abs(), ..self.clone() }
    }

    pub fn neg(&self) -> Self {
        ExtendedReal { mantissa: -&self.mantissa, ..self.clone() }
    }

    /// Multiply by `2^k` exactly.
    pub fn mul_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        ExtendedReal { exponent: self.exponent + k, ..self.clone() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let precision = self.precision.max(other.precision);
        if self.is_zero() {
            return other.with_precision(precision);
        }
        if other.is_zero() {
            return self.with_precision(precision);
        }
        let (hi, lo) = if self.exponent >= other.exponent { (self, other) } else { (other, self) };
        let gap = (hi.exponent - lo.exponent) as u64;
        // beyond this gap the smaller operand only affects bits far below the rounding point
        let limit = precision as u64 + lo.mantissa.bits() + 4;
        if gap > limit {
            let nudge = lo.mantissa.signum();
            let widened: BigInt = (&hi.mantissa << (limit as usize)) + nudge;
            return Self::from_parts(widened, hi.exponent - limit as i64, precision);
        }
        let aligned: BigInt = &hi.mantissa << (gap as usize);
        Self::from_parts(aligned + &lo.mantissa, lo.exponent, precision)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        let precision = self.precision.max(other.precision);
        Self::from_parts(&self.mantissa * &other.mantissa, self.exponent + other.exponent, precision)
    }

    /// `self / other` rounded to the wider operand precision. `None` when `other` is zero.
    pub fn div(&self, other: &Self) -> Option<Self> {
        if other.is_zero() {
            return None;
        }
        let precision = self.precision.max(other.precision);
        if self.is_zero() {
            return Some(Self::zero(precision));
        }
        // quotient with two guard bits plus a sticky bit
        let shift = (precision as i64 + 2 + other.mantissa.bits() as i64 - self.mantissa.bits() as i64).max(0);
        let num = self.mantissa.magnitude() << (shift as usize);
        let den = other.mantissa.magnitude();
        let (q, r) = (&num / den, &num % den);
        let mut q = q << 1u32;
        if !r.is_zero() {
            q |= BigUint::from(1u32);
        }
        let sign = if self.signum() == other.signum() { Sign::Plus } else { Sign::Minus };
        Some(Self::from_parts(BigInt::from_biguint(sign, q), self.exponent - other.exponent - shift - 1, precision))
    }

    pub fn powi(&self, mut k: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::from_f64(1.0, self.precision);
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            base = base.mul(&base);
            k >>= 1;
        }
        acc
    }

    /// Nearest double; saturates to infinity and flushes to zero outside range.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let (mag, dropped) = round_magnitude(self.mantissa.magnitude().clone(), 53);
        let m = mag.to_f64().unwrap_or(f64::INFINITY);
        let v = ldexp(m, self.exponent + dropped);
        if self.signum() < 0 {
            -v
        } else {
            v
        }
    }

    /// `log2 |self|`, finite for every nonzero value; `-inf` for zero.
    pub fn log2_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let bits = self.mantissa.bits();
        let keep = bits.min(60);
        let top = (self.mantissa.magnitude() >> (bits - keep)).to_u64().unwrap_or(u64::MAX) as f64;
        top.log2() + (bits - keep) as f64 + self.exponent as f64
    }

    pub fn cmp_abs(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let (a, b) = (self.abs(), other.abs());
        let d = a.sub(&b);
        d.signum().cmp(&0)
    }
}

impl fmt::Display for ExtendedReal {
    /// Scientific notation with 17 significant digits, exact for any exponent.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0e0");
        }
        let sign = if self.signum() < 0 { "-" } else { "" };
        let mut d = (self.log2_abs() * std::f64::consts::LOG10_2).floor() as i64;
        let digits = loop {
            let k = 16 - d;
            let ten = |p: i64| num_traits::pow(BigUint::from(10u32), p as usize);
            let mut num = self.mantissa.magnitude().clone();
            let mut den = BigUint::from(1u32);
            if k >= 0 {
                num *= ten(k);
            } else {
                den *= ten(-k);
            }
            if self.exponent >= 0 {
                num <<= self.exponent as usize;
            } else {
                den <<= (-self.exponent) as usize;
            }
            let q = (num + (&den >> 1u32)) / den;
            let s = q.to_string();
            match s.len() {
                17 => break s,
                n if n > 17 => d += 1,
                _ => d -= 1,
            }
        };
        write!(f, "{sign}{}.{}e{d}", &digits[..1], &digits[1..])
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn integers_are_exact() {
        let big = BigInt::from(1u64 << 62) * BigInt::from(12345u32);
        let x = ExtendedReal::from_bigint(&big, 256);
        assert_eq!(x.to_f64(), (1u64 << 62) as f64 * 12345.0);
    }

    #[test]
    fn rounding_ties_to_even() {
        // 2^53 + 1 is a tie between 2^53 and 2^53 + 2
        let x = ExtendedReal::from_bigint(&BigInt::from((1u64 << 53) + 1), 64);
        assert_eq!(x.to_f64(), (1u64 << 53) as f64);
        let y = ExtendedReal::from_bigint(&BigInt::from((1u64 << 53) + 3), 64);
        assert_eq!(y.to_f64(), ((1u64 << 53) + 4) as f64);
    }

    #[test]
    fn cancellation_survives_at_high_width() {
        let p = 512;
        let big = ExtendedReal::from_f64(2f64.powi(300), p);
        let one = ExtendedReal::from_f64(1.0, p);
        let back = big.add(&one).sub(&big);
        assert_eq!(back.to_f64(), 1.0);
        // at double-like width the unit is lost
        let narrow = ExtendedReal::from_f64(2f64.powi(300), 64);
        assert_eq!(narrow.add(&ExtendedReal::from_f64(1.0, 64)).sub(&narrow).to_f64(), 0.0);
    }

    #[test]
    fn huge_and_tiny_values() {
        let four = ExtendedReal::from_f64(4.0, 128);
        let big = four.powi(1000);
        assert!(big.to_f64().is_infinite());
        assert!((big.log2_abs() - 2000.0).abs() < 1e-12);
        let tiny = ExtendedReal::from_f64(0.25, 128).powi(1000);
        assert_eq!(tiny.to_f64(), 0.0);
        assert_eq!(big.mul(&tiny).to_f64(), 1.0);
        assert_eq!(big.to_string(), "1.1481306952742545e602");
        assert_eq!(ExtendedReal::from_f64(-0.125, 64).to_string(), "-1.2500000000000000e-1");
    }

    #[test]
    fn division() {
        let a = ExtendedReal::from_f64(1.0, 256);
        let b = ExtendedReal::from_f64(3.0, 256);
        assert_eq!(a.div(&b).unwrap().to_f64(), 1.0 / 3.0);
        assert!(a.div(&ExtendedReal::zero(256)).is_none());
        assert_eq!(ExtendedReal::from_f64(-6.0, 64).div(&b).unwrap().to_f64(), -2.0);
    }

    #[test]
    fn far_apart_addition_keeps_direction() {
        let big = ExtendedReal::from_f64(1.0, 64);
        let tiny = ExtendedReal::from_f64(1e-200, 64);
        assert_eq!(big.add(&tiny).to_f64(), 1.0);
        assert_eq!(big.sub(&tiny).cmp_abs(&big), Ordering::Equal);
        let wide = ExtendedReal::from_f64(1.0, 1024);
        assert_eq!(wide.sub(&tiny).cmp_abs(&wide), Ordering::Less);
        assert_eq!(wide.add(&tiny).cmp_abs(&wide), Ordering::Greater);
    }

    proptest! {
        #[test]
        fn f64_round_trip(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
            prop_assert_eq!(ExtendedReal::from_f64(x, 64).to_f64(), x);
        }

        #[test]
        fn arithmetic_matches_double(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let (xa, xb) = (ExtendedReal::from_f64(a, 256), ExtendedReal::from_f64(b, 256));
            prop_assert_eq!(xa.add(&xb).to_f64(), a + b);
            prop_assert_eq!(xa.mul(&xb).to_f64(), a * b);
            if b != 0.0 {
                prop_assert_eq!(xa.div(&xb).unwrap().to_f64(), a / b);
            }
        }

        #[test]
        fn log2_matches(a in 1e-300f64..1e300) {
            let x = ExtendedReal::from_f64(a, 128);
            prop_assert!((x.log2_abs() - a.log2()).abs() < 1e-9);
        }
    }
}
