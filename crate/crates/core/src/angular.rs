//! Angular-momentum algebra.
//!
//! Clebsch–Gordan coefficients are evaluated with Racah's closed-form sum in
//! exact big-rational arithmetic: the squared coefficient is a rational number
//! and only the final square root is taken in floating point. Results are
//! cached process-wide.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// An integer or half-integer, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);
    pub const ONE: HalfInt = HalfInt(2);

    pub const fn from_twice(twice: i32) -> Self {
        HalfInt(twice)
    }

    pub const fn integer(n: i32) -> Self {
        HalfInt(2 * n)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// `m = -j, -j+1, ..., j`.
    pub fn projections(self) -> impl DoubleEndedIterator<Item = HalfInt> {
        let j = self.0;
        (0..=j).map(move |k| HalfInt(-j + 2 * k))
    }

    /// Converts a float that is an exact multiple of 1/2.
    pub fn try_from_f64(x: f64) -> Option<Self> {
        let t = 2.0 * x;
        if t.is_finite() && t.fract() == 0.0 && t.abs() < f64::from(i32::MAX) {
            Some(HalfInt(t as i32))
        } else {
            None
        }
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidQuantumNumbers(format!("`{s}` is not an integer or half-integer"));
        if let Some((num, den)) = s.split_once('/') {
            let num: i32 = num.trim().parse().map_err(|_| bad())?;
            match den.trim() {
                "2" => Ok(HalfInt(num)),
                "1" => Ok(HalfInt(2 * num)),
                _ => Err(bad()),
            }
        } else {
            let x: f64 = s.parse().map_err(|_| bad())?;
            HalfInt::try_from_f64(x).ok_or_else(bad)
        }
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(x) => HalfInt::try_from_f64(x)
                .ok_or_else(|| serde::de::Error::custom(format!("{x} is not a multiple of 1/2"))),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn check_pair(j: HalfInt, m: HalfInt, what: &str) -> Result<()> {
    if j.0 < 0 {
        return Err(Error::InvalidQuantumNumbers(format!("{what}: j = {j} is negative")));
    }
    if m.0.abs() > j.0 {
        return Err(Error::InvalidQuantumNumbers(format!("{what}: |m| = |{m}| exceeds j = {j}")));
    }
    if (j.0 - m.0) % 2 != 0 {
        return Err(Error::InvalidQuantumNumbers(format!(
            "{what}: j = {j} and m = {m} differ by a half-integer"
        )));
    }
    Ok(())
}

fn factorial(n: i32) -> BigInt {
    (2..=n.max(0)).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Squared coefficient as an exact rational together with the sign of the
/// coefficient (`0` for a vanishing coefficient).
fn cg_squared_exact(tj1: i32, tm1: i32, tj2: i32, tm2: i32, tj: i32, tm: i32) -> (BigRational, i32) {
    // All arguments are doubled; every combination below is an even number.
    let h = |x: i32| x / 2;
    let a = h(tj1 + tj2 - tj);
    let b = h(tj1 - tm1);
    let c = h(tj2 + tm2);
    let d = h(tj - tj2 + tm1);
    let e = h(tj - tj1 - tm2);

    let k_min = 0.max(-d).max(-e);
    let k_max = a.min(b).min(c);
    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let den = factorial(k)
            * factorial(a - k)
            * factorial(b - k)
            * factorial(c - k)
            * factorial(d + k)
            * factorial(e + k);
        let term = BigRational::new(BigInt::one(), den);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return (BigRational::zero(), 0);
    }

    let num = BigInt::from(tj + 1)
        * factorial(h(tj + tj1 - tj2))
        * factorial(h(tj - tj1 + tj2))
        * factorial(h(tj1 + tj2 - tj))
        * factorial(h(tj + tm))
        * factorial(h(tj - tm))
        * factorial(h(tj1 - tm1))
        * factorial(h(tj1 + tm1))
        * factorial(h(tj2 - tm2))
        * factorial(h(tj2 + tm2));
    let den = factorial(h(tj1 + tj2 + tj) + 1);
    let prefactor = BigRational::new(num, den);
    let sign = if sum.is_negative() { -1 } else { 1 };
    (prefactor * &sum * &sum, sign)
}

fn rational_to_f64(r: &BigRational) -> f64 {
    // Shift large operands down so that the ratio survives conversion.
    let n = r.numer();
    let d = r.denom();
    match (n.to_f64(), d.to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => a / b,
        _ => {
            let shift = d.bits().saturating_sub(60).max(n.bits().saturating_sub(60));
            let a = (n >> shift).to_f64().unwrap_or(f64::NAN);
            let b = (d >> shift).to_f64().unwrap_or(f64::NAN);
            a / b
        }
    }
}

type CgKey = [i32; 6];

fn cache() -> &'static RwLock<HashMap<CgKey, f64>> {
    static CACHE: OnceLock<RwLock<HashMap<CgKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// `⟨j1 m1; j2 m2 | j m⟩` in the Condon–Shortley convention.
///
/// Malformed quantum numbers (`|m| > j`, mixed integer/half-integer pairs,
/// negative `j`) are rejected. Well-formed arguments that violate the
/// triangle rule or `m = m1 + m2` give zero.
pub fn clebsch_gordan(j1: HalfInt, m1: HalfInt, j2: HalfInt, m2: HalfInt, j: HalfInt, m: HalfInt) -> Result<f64> {
    check_pair(j1, m1, "first")?;
    check_pair(j2, m2, "second")?;
    check_pair(j, m, "coupled")?;

    if m1.0 + m2.0 != m.0 {
        return Ok(0.0);
    }
    if j.0 < (j1.0 - j2.0).abs() || j.0 > j1.0 + j2.0 || (j1.0 + j2.0 + j.0) % 2 != 0 {
        return Ok(0.0);
    }

    let key = [j1.0, m1.0, j2.0, m2.0, j.0, m.0];
    if let Some(&v) = cache().read().expect("cg cache poisoned").get(&key) {
        return Ok(v);
    }
    let (sq, sign) = cg_squared_exact(j1.0, m1.0, j2.0, m2.0, j.0, m.0);
    let value = f64::from(sign) * rational_to_f64(&sq).sqrt();
    cache().write().expect("cg cache poisoned").insert(key, value);
    Ok(value)
}

/// Exact squared Clebsch–Gordan coefficient as a rational number.
pub fn clebsch_gordan_squared(
    j1: HalfInt,
    m1: HalfInt,
    j2: HalfInt,
    m2: HalfInt,
    j: HalfInt,
    m: HalfInt,
) -> Result<BigRational> {
    check_pair(j1, m1, "first")?;
    check_pair(j2, m2, "second")?;
    check_pair(j, m, "coupled")?;
    if m1.0 + m2.0 != m.0 || j.0 < (j1.0 - j2.0).abs() || j.0 > j1.0 + j2.0 || (j1.0 + j2.0 + j.0) % 2 != 0 {
        return Ok(BigRational::zero());
    }
    Ok(cg_squared_exact(j1.0, m1.0, j2.0, m2.0, j.0, m.0).0)
}

/// Fractional strength `|⟨J'' M'', 1 p | J' M'⟩|²` of the dipole transition
/// from lower sublevel `(j_low, m_low)` to upper sublevel `(j_up, m_up)`
/// driven by helicity `p`. Zero unless `m_up = m_low + p`.
pub fn line_strength(j_low: HalfInt, m_low: HalfInt, p: i32, j_up: HalfInt, m_up: HalfInt) -> Result<f64> {
    if !(-1..=1).contains(&p) {
        return Err(Error::InvalidQuantumNumbers(format!("photon helicity p = {p} is not in {{-1, 0, 1}}")));
    }
    check_pair(j_low, m_low, "lower")?;
    check_pair(j_up, m_up, "upper")?;
    if m_up.0 != m_low.0 + 2 * p {
        return Ok(0.0);
    }
    let c = clebsch_gordan(j_low, m_low, HalfInt::ONE, HalfInt::integer(p), j_up, m_up)?;
    Ok(c * c)
}

#[cfg(test)]
mod oracle;
