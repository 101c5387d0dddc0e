//! The theoretical constants of the removal argument, held symbolically.
//!
//! A [`TowerExpr`] is either an explicit rational or a ladder
//! `2^(2^(…^top))` with `height` twos, optionally inverted. Ladders compare
//! level by level, so values like `2^(2^65536)` never get evaluated.

use std::cmp::Ordering;
use std::fmt;

use num::bigint::BigInt;
use num::{BigRational, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::rational::{parse_rational, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstantsError {
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("cannot parse epsilon {0:?}")]
    Epsilon(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TowerExpr {
    Value(BigRational),
    /// `E_0 = top`, `E_{k+1} = 2^{E_k}`; the value is `E_height` or its reciprocal.
    Ladder {
        top: BigRational,
        height: u32,
        reciprocal: bool,
    },
}

fn big(r: &Rational) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

fn big_log2(x: &BigInt) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap_or(f64::INFINITY).log2() + shift as f64
}

/// `log₂ x` for positive `x` as f64, without overflowing.
fn rational_log2(x: &BigRational) -> f64 {
    big_log2(x.numer()) - big_log2(x.denom())
}

fn rational_f64(x: &BigRational) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    let sign = if x.is_negative() { -1.0 } else { 1.0 };
    sign * rational_log2(&x.abs()).exp2()
}

/// `(reciprocal, height, top)` with `top ≥ 1` at height zero; `None` for values ≤ 0.
fn normal_form(x: &TowerExpr) -> Option<(bool, u32, BigRational)> {
    match x {
        TowerExpr::Value(v) if !v.is_positive() => None,
        TowerExpr::Value(v) if *v >= BigRational::one() => Some((false, 0, v.clone())),
        TowerExpr::Value(v) => Some((true, 0, v.recip())),
        TowerExpr::Ladder { top, height, reciprocal } => Some((*reciprocal, *height, top.clone())),
    }
}

/// Compares `x` against the ladder `(top, height)` once `x` is only known as a float.
fn cmp_float_ladder(mut x: f64, top: &BigRational, mut height: u32) -> Ordering {
    while height > 0 {
        if x <= 0.0 {
            return Ordering::Less;
        }
        x = x.log2();
        height -= 1;
    }
    x.partial_cmp(&rational_f64(top)).unwrap_or(Ordering::Equal)
}

fn cmp_ladders(a: (&BigRational, u32), b: (&BigRational, u32)) -> Ordering {
    let common = a.1.min(b.1);
    let (ha, hb) = (a.1 - common, b.1 - common);
    match (ha, hb) {
        (0, 0) => a.0.cmp(b.0),
        (0, _) => {
            if !a.0.is_positive() {
                return Ordering::Less;
            }
            cmp_float_ladder(rational_log2(a.0), b.0, hb - 1)
        }
        _ => cmp_ladders(b, a).reverse(),
    }
}

impl TowerExpr {
    pub fn value(r: Rational) -> Self {
        TowerExpr::Value(big(&r))
    }

    pub fn integer(n: i64) -> Self {
        TowerExpr::Value(BigRational::from_integer(BigInt::from(n)))
    }

    /// `log₂` of the value when the ladder has height one: `±top`.
    pub fn log2_exact(&self) -> Option<BigRational> {
        match self {
            TowerExpr::Ladder { top, height: 1, reciprocal } => Some(if *reciprocal { -top.clone() } else { top.clone() }),
            _ => None,
        }
    }

    /// The value as f64 when it neither overflows nor underflows to zero.
    pub fn to_f64(&self) -> Option<f64> {
        let v = match self {
            TowerExpr::Value(v) => rational_f64(v),
            TowerExpr::Ladder { top, height, reciprocal } => {
                let mut x = rational_f64(top);
                for _ in 0..*height {
                    x = x.exp2();
                    if !x.is_finite() {
                        return None;
                    }
                }
                if *reciprocal {
                    1.0 / x
                } else {
                    x
                }
            }
        };
        (v.is_finite() && (v != 0.0 || self.is_zero())).then_some(v)
    }

    fn is_zero(&self) -> bool {
        matches!(self, TowerExpr::Value(v) if v.is_zero())
    }

    /// Exact for equal ladder heights; otherwise through iterated `log₂` in f64,
    /// which is only ever needed when the two sides differ by whole levels.
    pub fn compare(&self, other: &TowerExpr) -> Ordering {
        match (normal_form(self), normal_form(other)) {
            (None, None) => match (self, other) {
                (TowerExpr::Value(a), TowerExpr::Value(b)) => a.cmp(b),
                _ => unreachable!(),
            },
            (None, Some(_)) => Ordering::Less,
            (Some(_), None) => Ordering::Greater,
            (Some((ra, ha, ta)), Some((rb, hb, tb))) => match (ra, rb) {
                (false, true) => Ordering::Greater,
                (true, false) => Ordering::Less,
                (false, false) => cmp_ladders((&ta, ha), (&tb, hb)),
                (true, true) => cmp_ladders((&ta, ha), (&tb, hb)).reverse(),
            },
        }
    }
}

impl fmt::Display for TowerExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TowerExpr::Value(v) => write!(f, "{v}"),
            TowerExpr::Ladder { top, height, reciprocal } => {
                let body = format!("{}{}{}", "2^(".repeat(*height as usize), top, ")".repeat(*height as usize));
                if *reciprocal {
                    write!(f, "1/{body}")
                } else {
                    f.write_str(&body)
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TowerRepr {
    Value { value: String },
    Tower { tower: Vec<String>, reciprocal: bool },
}

impl Serialize for TowerExpr {
    /// `{"value": "p/q"}`, or `{"tower": ["2", …, "2", top], "reciprocal": b}`
    /// listing the bases bottom-up and ending in the top exponent.
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            TowerExpr::Value(v) => TowerRepr::Value { value: v.to_string() },
            TowerExpr::Ladder { top, height, reciprocal } => {
                let mut tower = vec!["2".to_string(); *height as usize];
                tower.push(top.to_string());
                TowerRepr::Tower { tower, reciprocal: *reciprocal }
            }
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TowerExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let parse = |s: &str| s.parse::<BigRational>().map_err(|e| D::Error::custom(format!("{s:?}: {e}")));
        match TowerRepr::deserialize(d)? {
            TowerRepr::Value { value } => Ok(TowerExpr::Value(parse(&value)?)),
            TowerRepr::Tower { mut tower, reciprocal } => {
                let top = tower.pop().ok_or_else(|| D::Error::custom("empty tower"))?;
                if tower.iter().any(|b| b != "2") {
                    return Err(D::Error::custom("tower bases must all be 2"));
                }
                Ok(TowerExpr::Ladder { top: parse(&top)?, height: tower.len() as u32, reciprocal })
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Epsilon and the tower height
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Epsilon {
    Rational(Rational),
    /// `ε = e^{-k}`.
    ExpNeg(Rational),
}

impl Epsilon {
    /// Accepts `p/q`, decimals, `e^-k` and `exp(-k)`.
    pub fn parse(text: &str) -> Result<Self, ConstantsError> {
        let t = text.trim();
        let exponent = t.strip_prefix("e^-").or_else(|| t.strip_prefix("exp(-").and_then(|r| r.strip_suffix(')')));
        let eps = match exponent {
            Some(k) => Epsilon::ExpNeg(parse_rational(k).map_err(|_| ConstantsError::Epsilon(text.into()))?),
            None => Epsilon::Rational(parse_rational(t).map_err(|_| ConstantsError::Epsilon(text.into()))?),
        };
        match &eps {
            Epsilon::Rational(r) if !r.is_positive() || *r >= Rational::one() => {
                Err(ConstantsError::Parameter(format!("epsilon = {r} must lie in (0, 1)")))
            }
            Epsilon::ExpNeg(k) if !k.is_positive() => Err(ConstantsError::Parameter(format!("epsilon = e^-{k} must lie in (0, 1)"))),
            _ => Ok(eps),
        }
    }

    /// `ln ε⁻¹`, exact when `ε = e^{-k}`.
    pub fn log_inverse(&self) -> (f64, Option<Rational>) {
        match self {
            Epsilon::Rational(r) => (-crate::rational::to_f64(r).ln(), None),
            Epsilon::ExpNeg(k) => (crate::rational::to_f64(k), Some(*k)),
        }
    }

    pub fn approx(&self) -> f64 {
        match self {
            Epsilon::Rational(r) => crate::rational::to_f64(r),
            Epsilon::ExpNeg(k) => (-crate::rational::to_f64(k)).exp(),
        }
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Epsilon::Rational(r) => write!(f, "{r}"),
            Epsilon::ExpNeg(k) => write!(f, "e^-{k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerHeight {
    /// `5h⁴ ln ε⁻¹` when it is rational.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
    pub approx: f64,
    pub nearest: u64,
    /// Height used for `δ`: `⌈·⌉`, or the nearest integer when a decimal `ε`
    /// lands within relative `1e-6` of one.
    pub used: u64,
}

fn tower_height(h: usize, eps: &Epsilon) -> TowerHeight {
    let h4 = (h as i128).pow(4) * 5;
    let (log_inv, exact) = eps.log_inverse();
    match exact {
        Some(k) => {
            let height = k * Rational::from_integer(h4);
            TowerHeight {
                exact: Some(crate::rational::format_rational(&height)),
                approx: crate::rational::to_f64(&height),
                nearest: height.round().to_integer() as u64,
                used: height.ceil().to_integer() as u64,
            }
        }
        None => {
            let approx = h4 as f64 * log_inv;
            let nearest = approx.round();
            let used = if (approx - nearest).abs() <= 1e-6 * approx { nearest } else { approx.ceil() };
            TowerHeight { exact: None, approx, nearest: nearest as u64, used: used as u64 }
        }
    }
}

// ---------------------------------------------------------------------------
// The constants
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalConstants {
    pub h: usize,
    pub alpha: String,
    pub epsilon: String,
    /// Packing density the step constants are evaluated at.
    pub eps0: String,
    /// `log₂ d_h = -(2/α)^{h²}`.
    pub log2_copy_density: String,
    /// `d_h = 2^{-(2/α)^{h²}}`.
    pub copy_density: TowerExpr,
    /// `t = 2^{d_h⁻¹}`.
    pub parts_bound: TowerExpr,
    /// `s = 2^{2^{(50/ε₀)^{h²}}}`.
    pub step_growth: TowerExpr,
    /// `2^{-(2/α)^{h²-h+1}}`, below every matching block fraction.
    pub block_floor: TowerExpr,
    pub tower_height: TowerHeight,
    /// `δ`: reciprocal of a tower of twos of the height above.
    pub delta: TowerExpr,
}

fn rational_pow(base: &BigRational, exp: u32) -> BigRational {
    num::pow(base.clone(), exp as usize)
}

/// Symbolic constants for pattern size `h`, removal parameter `ε` and
/// shattering density `α`. The step constant `s` is taken at `ε₀ = 20α`,
/// the packing density for which the refinement step uses this `α`.
pub fn theoretical_constants(h: usize, eps: &Epsilon, alpha: Rational) -> Result<TheoreticalConstants, ConstantsError> {
    if h < 2 {
        return Err(ConstantsError::Parameter(format!("h = {h} must be at least 2")));
    }
    if !alpha.is_positive() || alpha >= Rational::new(1, 4) {
        return Err(ConstantsError::Parameter(format!("alpha = {alpha} must lie in (0, 1/4)")));
    }
    let h2 = (h * h) as u32;
    let two_over_alpha = big(&(Rational::from_integer(2) / alpha));
    let log_inv_d = rational_pow(&two_over_alpha, h2);
    let eps0 = alpha * Rational::from_integer(20);
    let step_top = rational_pow(&big(&(Rational::from_integer(50) / eps0)), h2);
    let floor_top = rational_pow(&two_over_alpha, h2 - h as u32 + 1);
    let height = tower_height(h, eps);
    Ok(TheoreticalConstants {
        h,
        alpha: crate::rational::format_rational(&alpha),
        epsilon: eps.to_string(),
        eps0: crate::rational::format_rational(&eps0),
        log2_copy_density: (-log_inv_d.clone()).to_string(),
        copy_density: TowerExpr::Ladder { top: log_inv_d.clone(), height: 1, reciprocal: true },
        parts_bound: TowerExpr::Ladder { top: log_inv_d, height: 2, reciprocal: false },
        step_growth: TowerExpr::Ladder { top: step_top, height: 2, reciprocal: false },
        block_floor: TowerExpr::Ladder { top: floor_top, height: 1, reciprocal: true },
        delta: TowerExpr::Ladder { top: BigRational::one(), height: height.used as u32, reciprocal: true },
        tower_height: height,
    })
}

/// `2^{-(40/ε₀)^{h²}} T^{-h}`, with `log₂ T` rounded up so the result is a
/// lower bound: the copy budget under which one more refinement step applies.
pub fn step_copy_budget(eps0: Rational, h: usize, parts: u64) -> Result<TowerExpr, ConstantsError> {
    if !eps0.is_positive() || parts == 0 {
        return Err(ConstantsError::Parameter("eps0 and the part count must be positive".into()));
    }
    let top = rational_pow(&big(&(Rational::from_integer(40) / eps0)), (h * h) as u32);
    let log_parts = 64 - (parts - 1).leading_zeros() as i64;
    let top = top + BigRational::from_integer(BigInt::from(h as i64 * log_parts));
    Ok(TowerExpr::Ladder { top, height: 1, reciprocal: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn int(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    #[test]
    fn copy_density_exponent() {
        let c = theoretical_constants(2, &Epsilon::Rational(ratio(1, 10)), ratio(1, 8)).unwrap();
        assert_eq!(c.log2_copy_density, "-65536");
        assert_eq!(c.copy_density.log2_exact(), Some(int(-65536)));
        assert_eq!(c.parts_bound, TowerExpr::Ladder { top: int(65536), height: 2, reciprocal: false });
        assert!(c.parts_bound.to_f64().is_none());
    }

    #[test]
    fn tower_height_at_inverse_e() {
        let c = theoretical_constants(3, &Epsilon::parse("e^-1").unwrap(), ratio(1, 10)).unwrap();
        assert_eq!(c.tower_height.exact.as_deref(), Some("405"));
        assert_eq!((c.tower_height.nearest, c.tower_height.used), (405, 405));
        assert_eq!(c.delta, TowerExpr::Ladder { top: int(1), height: 405, reciprocal: true });

        let c = theoretical_constants(3, &Epsilon::parse("0.3678794").unwrap(), ratio(1, 10)).unwrap();
        assert_eq!((c.tower_height.nearest, c.tower_height.used), (405, 405));
        assert!((c.tower_height.approx - 405.0).abs() < 1e-3);

        let c = theoretical_constants(2, &Epsilon::parse("1/10").unwrap(), ratio(1, 10)).unwrap();
        // 80 ln 10 = 184.2...
        assert_eq!(c.tower_height.used, 185);
    }

    #[test]
    fn comparisons() {
        let small = TowerExpr::integer(1000);
        let ladder = |top: i64, height: u32, reciprocal: bool| TowerExpr::Ladder { top: int(top), height, reciprocal };
        assert_eq!(small.compare(&ladder(10, 1, false)), Ordering::Less);
        assert_eq!(small.compare(&ladder(9, 1, false)), Ordering::Greater);
        assert_eq!(ladder(4, 2, false).compare(&TowerExpr::integer(65536)), Ordering::Equal);
        assert_eq!(ladder(5, 2, false).compare(&ladder(65536, 1, false)), Ordering::Less);
        assert_eq!(ladder(3, 3, false).compare(&ladder(1, 405, false)), Ordering::Less);
        assert_eq!(ladder(1, 3, true).compare(&ladder(1, 4, true)), Ordering::Greater);
        assert_eq!(TowerExpr::value(ratio(1, 3)).compare(&ladder(1, 1, true)), Ordering::Less);
        assert_eq!(TowerExpr::value(ratio(-1, 3)).compare(&ladder(1, 9, true)), Ordering::Less);
        assert_eq!(ladder(3, 1, false).to_f64(), Some(8.0));
        assert_eq!(ladder(3, 1, true).to_f64(), Some(0.125));
    }

    #[test]
    fn delta_is_below_the_step_budget() {
        let c = theoretical_constants(3, &Epsilon::parse("e^-1").unwrap(), ratio(1, 100)).unwrap();
        let budget = step_copy_budget(ratio(1, 5), 3, 1 << 20).unwrap();
        assert_eq!(c.delta.compare(&budget), Ordering::Less);
    }

    #[test]
    fn json_forms() {
        let l = TowerExpr::Ladder { top: int(7), height: 2, reciprocal: true };
        let text = serde_json::to_string(&l).unwrap();
        assert_eq!(text, r#"{"tower":["2","2","7"],"reciprocal":true}"#);
        assert_eq!(serde_json::from_str::<TowerExpr>(&text).unwrap(), l);
        let v = TowerExpr::value(ratio(3, 4));
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"value":"3/4"}"#);
        assert_eq!(serde_json::from_str::<TowerExpr>(r#"{"value":"3/4"}"#).unwrap(), v);
    }

    #[test]
    fn rejects_bad_parameters() {
        let e = Epsilon::Rational(ratio(1, 10));
        assert!(theoretical_constants(1, &e, ratio(1, 8)).is_err());
        assert!(theoretical_constants(3, &e, ratio(1, 4)).is_err());
        assert!(Epsilon::parse("0").is_err());
        assert!(Epsilon::parse("e^-0").is_err());
        assert!(Epsilon::parse("abc").is_err());
    }
}
