//! Exact rational arithmetic helpers shared by every solver.
//!
//! All payoff-relevant values in this crate are [`Rational`] (arbitrary
//! precision). Doubles are confined to iterative numeric code and converted
//! at the boundary with [`from_f64`], which is exact: every finite `f64` is a
//! dyadic rational.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use num_traits::ToPrimitive;
use std::fmt::Write as _;

/// The scalar used for exact payoffs, probabilities, and certificates.
pub type Rational = BigRational;

/// An integer as a rational.
pub fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// The fraction `n / d`. Panics if `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact conversion of a finite double into a rational.
///
/// Panics on NaN or infinity; callers validate user-facing doubles first.
pub fn from_f64(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float required for exact conversion")
}

/// Nearest-double approximation of a rational (used for reporting only).
pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // Out-of-range magnitudes saturate; values that large never occur in
        // sane game descriptions but the fallback keeps reporting total.
        if x.is_negative() {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    })
}

/// Parses "3", "-7/2", or a plain decimal such as "0.25" into an exact value.
pub fn parse(text: &str) -> Result<Rational, String> {
    let s = text.trim();
    if s.is_empty() {
        return Err("empty number".to_string());
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num
            .trim()
            .parse()
            .map_err(|_| format!("bad numerator in '{s}'"))?;
        let d: BigInt = den
            .trim()
            .parse()
            .map_err(|_| format!("bad denominator in '{s}'"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in '{s}'"));
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("bad decimal '{s}'"));
        }
        let negative = int_part.trim_start().starts_with('-');
        let int_text = if int_part.is_empty() || int_part == "-" || int_part == "+" {
            format!("{int_part}0")
        } else {
            int_part.to_string()
        };
        let whole: BigInt = int_text.parse().map_err(|_| format!("bad decimal '{s}'"))?;
        let frac: BigInt = frac_part.parse().map_err(|_| format!("bad decimal '{s}'"))?;
        let scale = BigInt::from(10u8).pow(frac_part.len() as u32);
        let frac_rat = Rational::new(frac, scale);
        let whole_rat = Rational::from_integer(whole);
        Ok(if negative {
            whole_rat - frac_rat
        } else {
            whole_rat + frac_rat
        })
    } else {
        let n: BigInt = s.parse().map_err(|_| format!("bad integer '{s}'"))?;
        Ok(Rational::from_integer(n))
    }
}

/// Renders a rational as "3" or "-7/2" (canonical reduced form).
pub fn format(x: &Rational) -> String {
    let mut out = String::new();
    if x.denom().is_one() {
        let _ = write!(out, "{}", x.numer());
    } else {
        let _ = write!(out, "{}/{}", x.numer(), x.denom());
    }
    out
}

/// Sum of a slice of rationals.
pub fn sum<'a>(xs: impl IntoIterator<Item = &'a Rational>) -> Rational {
    xs.into_iter().fold(Rational::zero(), |acc, x| acc + x)
}

/// Maximum of an iterator of rationals; `None` when empty.
pub fn max<I: IntoIterator<Item = Rational>>(xs: I) -> Option<Rational> {
    xs.into_iter().reduce(|a, b| if b > a { b } else { a })
}

/// Minimum of an iterator of rationals; `None` when empty.
pub fn min<I: IntoIterator<Item = Rational>>(xs: I) -> Option<Rational> {
    xs.into_iter().reduce(|a, b| if b < a { b } else { a })
}
