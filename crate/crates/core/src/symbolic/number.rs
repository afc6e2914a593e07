//! Numeric coefficients: exact rationals until a float is involved.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::SymbolicError;

/// A numeric value as it appears inside an expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Num {
    Exact(BigRational),
    Float(f64),
}

impl Num {
    pub fn zero() -> Self {
        Num::Exact(BigRational::zero())
    }

    pub fn one() -> Self {
        Num::Exact(BigRational::one())
    }

    pub fn from_int(v: i64) -> Self {
        Num::Exact(BigRational::from_integer(BigInt::from(v)))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Num::Exact(r) => r.is_zero(),
            Num::Float(f) => *f == 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Num::Exact(r) => r.is_one(),
            Num::Float(f) => *f == 1.0,
        }
    }

    pub fn is_negative(&self) -> bool {
        match self {
            Num::Exact(r) => r.is_negative(),
            Num::Float(f) => *f < 0.0,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Num::Exact(r) => ratio_to_f64(r),
            Num::Float(f) => *f,
        }
    }

    /// Integer value if this is an exact integer that fits in `i64`.
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Num::Exact(r) if r.is_integer() => r.to_integer().to_i64(),
            _ => None,
        }
    }

    pub fn add(&self, other: &Num) -> Num {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => Num::Exact(a + b),
            _ => Num::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(&self, other: &Num) -> Num {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => Num::Exact(a * b),
            _ => Num::Float(self.to_f64() * other.to_f64()),
        }
    }

    pub fn neg(&self) -> Num {
        match self {
            Num::Exact(a) => Num::Exact(-a),
            Num::Float(f) => Num::Float(-f),
        }
    }

    pub fn abs(&self) -> Num {
        match self {
            Num::Exact(a) => Num::Exact(a.abs()),
            Num::Float(f) => Num::Float(f.abs()),
        }
    }

    /// `self ** exp`; exact when both are exact and `exp` is an integer.
    /// Returns `None` when the result is not representable as a number
    /// (an exact base with a non-integer exact exponent).
    pub fn pow(&self, exp: &Num) -> Result<Option<Num>, SymbolicError> {
        match (self, exp) {
            (Num::Exact(b), Num::Exact(e)) => {
                if !e.is_integer() {
                    return Ok(None);
                }
                let e = e
                    .to_integer()
                    .to_i32()
                    .ok_or(SymbolicError::ExponentTooLarge)?;
                if b.is_zero() && e < 0 {
                    return Err(SymbolicError::ZeroDivision);
                }
                Ok(Some(Num::Exact(num_traits::Pow::pow(b, e))))
            }
            (Num::Float(b), Num::Exact(e)) if e.is_integer() => {
                let e = e
                    .to_integer()
                    .to_i32()
                    .ok_or(SymbolicError::ExponentTooLarge)?;
                Ok(Some(Num::Float(b.powi(e))))
            }
            _ => Ok(Some(Num::Float(self.to_f64().powf(exp.to_f64())))),
        }
    }

    pub fn total_cmp(&self, other: &Num) -> Ordering {
        match (self, other) {
            (Num::Exact(a), Num::Exact(b)) => a.cmp(b),
            (Num::Float(a), Num::Float(b)) => a.total_cmp(b),
            (Num::Exact(_), Num::Float(_)) => {
                self.to_f64().total_cmp(&other.to_f64()).then(Ordering::Less)
            }
            (Num::Float(_), Num::Exact(_)) => {
                self.to_f64().total_cmp(&other.to_f64()).then(Ordering::Greater)
            }
        }
    }
}

/// Correctly handles huge numerators/denominators where the naive
/// `num as f64 / den as f64` would overflow to inf/inf.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() {
            return n / d;
        }
    }
    let shift = r.numer().bits().max(r.denom().bits()) as i64 - 900;
    let (n, d) = if shift > 0 {
        (r.numer() >> shift as usize, r.denom() >> shift as usize)
    } else {
        (r.numer().clone(), r.denom().clone())
    };
    n.to_f64().unwrap_or(f64::NAN) / d.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational value of a finite float.
pub fn exact_from_f64(v: f64) -> Option<BigRational> {
    BigRational::from_float(v)
}

/// Parses a decimal literal such as `0.001`, `-2.5e-3` or `15` exactly.
pub fn parse_decimal(s: &str) -> Option<BigRational> {
    let s = s.trim();
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int_part}{frac_part}").parse().ok()?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let mut value = BigRational::from_integer(digits) * num_traits::Pow::pow(&ten, scale);
    if neg {
        value = -value;
    }
    Some(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact() {
        let v = parse_decimal("0.001").unwrap();
        assert_eq!(v, BigRational::new(1.into(), 1000.into()));
        assert_eq!(parse_decimal("-2.5e-1").unwrap(), BigRational::new((-1).into(), 4.into()));
        assert_eq!(parse_decimal("15").unwrap(), BigRational::from_integer(15.into()));
        assert!(parse_decimal("abc").is_none());
        assert!(parse_decimal(".").is_none());
    }

    #[test]
    fn huge_ratio_converts() {
        let big = num_traits::Pow::pow(BigInt::from(3), 2000u32);
        let r = BigRational::new(big.clone() * 2, big);
        assert_eq!(ratio_to_f64(&r), 2.0);
    }

    #[test]
    fn zero_to_negative_power_fails() {
        assert!(matches!(
            Num::zero().pow(&Num::from_int(-1)),
            Err(SymbolicError::ZeroDivision)
        ));
    }
}
