//! Exact rational helpers and the [`Density`] value type.
//!
//! Every threshold test in the lemma machinery (`d < β`, `d ≥ (1+αᵏ/2)d₀`,
//! shattered mass `≥ c|A||B|`) is decided on integers. Floats only appear
//! when the entropy functional is finally evaluated.

use std::cmp::Ordering;
use std::fmt;

use num::rational::Ratio;
use num::{One, Signed, ToPrimitive};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Exact rational used for parameters (α, β, ε, δ, ...).
pub type Rational = Ratio<i128>;

/// `⌈r·n⌉` for a nonnegative rational `r`.
pub fn ceil_mul(r: &Rational, n: usize) -> usize {
    let v = r * Rational::from_integer(n as i128);
    v.ceil().to_integer().max(0) as usize
}

/// `⌊r·n⌋` for a nonnegative rational `r`.
pub fn floor_mul(r: &Rational, n: usize) -> usize {
    let v = r * Rational::from_integer(n as i128);
    v.floor().to_integer().max(0) as usize
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn ratio(num: i128, den: i128) -> Rational {
    Rational::new(num, den)
}

/// Parses `"3/4"`, `"0.05"`, `"2"` or `"1e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, String> {
    let t = text.trim();
    if t.is_empty() {
        return Err("empty rational".into());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n: i128 = n.trim().parse().map_err(|_| format!("bad numerator in {t:?}"))?;
        let d: i128 = d.trim().parse().map_err(|_| format!("bad denominator in {t:?}"))?;
        if d == 0 {
            return Err(format!("zero denominator in {t:?}"));
        }
        return Ok(Rational::new(n, d));
    }
    let (mantissa, exp) = match t.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = t[pos + 1..].parse().map_err(|_| format!("bad exponent in {t:?}"))?;
            (&t[..pos], e)
        }
        None => (t, 0),
    };
    let negative = mantissa.starts_with('-');
    let body = mantissa.trim_start_matches(['-', '+']);
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(format!("not a number: {t:?}"));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(format!("not a number: {t:?}"));
    }
    let digits = format!("{int_part}{frac_part}");
    let num: i128 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| format!("number too long: {t:?}"))? };
    let scale = exp - frac_part.len() as i32;
    let pow = |k: u32| 10i128.checked_pow(k).ok_or_else(|| format!("exponent out of range: {t:?}"));
    let mut value = if scale >= 0 {
        Rational::from_integer(num.checked_mul(pow(scale as u32)?).ok_or("overflow")?)
    } else {
        Rational::new(num, pow((-scale) as u32)?)
    };
    if negative {
        value = -value;
    }
    Ok(value)
}

/// Exact edge density `e / pairs` as raw counts.
///
/// Counts are kept unreduced so that the serialized form still reads as
/// "edges over tuples".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Density {
    #[serde(rename = "num")]
    pub edges: u64,
    #[serde(rename = "den")]
    pub pairs: u64,
}

impl Density {
    pub fn new(edges: u64, pairs: u64) -> Self {
        debug_assert!(pairs > 0 && edges <= pairs);
        Density { edges, pairs }
    }

    pub fn value(&self) -> Rational {
        Rational::new(self.edges as i128, self.pairs as i128)
    }

    pub fn to_f64(&self) -> f64 {
        self.edges as f64 / self.pairs as f64
    }

    pub fn is_zero(&self) -> bool {
        self.edges == 0
    }

    /// `self < r`, decided by cross multiplication.
    pub fn lt(&self, r: &Rational) -> bool {
        self.cmp_rational(r) == Ordering::Less
    }

    /// `self ≥ r`.
    pub fn ge(&self, r: &Rational) -> bool {
        !self.lt(r)
    }

    pub fn cmp_rational(&self, r: &Rational) -> Ordering {
        // e/p vs a/b with b > 0 (Ratio keeps the denominator positive).
        let lhs = self.edges as i128 * r.denom();
        let rhs = r.numer() * self.pairs as i128;
        lhs.cmp(&rhs)
    }
}

impl PartialOrd for Density {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Density {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = self.edges as u128 * other.pairs as u128;
        let rhs = other.edges as u128 * self.pairs as u128;
        lhs.cmp(&rhs)
    }
}

impl fmt::Display for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.edges, self.pairs)
    }
}

/// Serde adapter writing a [`Rational`] as `"p/q"`.
pub mod serde_rational {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Vec<Rational>` as a list of `"p/q"` strings.
pub mod serde_rational_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(format_rational))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let text = Vec::<String>::deserialize(d)?;
        text.iter().map(|t| parse_rational(t).map_err(serde::de::Error::custom)).collect()
    }
}

/// Serde adapter for `Option<Rational>`.
pub mod serde_rational_opt {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_some(&format_rational(r)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        Option::<String>::deserialize(d)?.map(|t| parse_rational(&t).map_err(serde::de::Error::custom)).transpose()
    }
}

pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// `0 < r < bound`.
pub fn in_open_unit(r: &Rational, bound: &Rational) -> bool {
    r.is_positive() && r < bound
}

pub fn is_probability(r: &Rational) -> bool {
    !r.is_negative() && *r <= Rational::one()
}
