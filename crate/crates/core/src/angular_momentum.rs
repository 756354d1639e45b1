//! Exact Wigner 3j, 6j and Clebsch-Gordan coefficients.
//!
//! All symbols are evaluated with Racah's closed-form sums over arbitrary
//! precision integers, so every result is an [`ExactRadical`]: a sign times
//! the square root of a rational in lowest terms. Phase conventions are the
//! standard Condon-Shortley/Racah ones (as tabulated by Edmonds or Sobelman).

use std::cmp::{max, min};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted value of `2j` for any argument.
pub const MAX_TWICE_J: i32 = 200;

// Racah sums never need factorials beyond the sum of all arguments plus one.
const FACTORIAL_TABLE_LEN: usize = 4 * MAX_TWICE_J as usize + 2;

fn factorials() -> &'static [BigInt] {
    static TABLE: OnceLock<Vec<BigInt>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(FACTORIAL_TABLE_LEN + 1);
        let mut acc = BigInt::one();
        table.push(acc.clone());
        for n in 1..=FACTORIAL_TABLE_LEN {
            acc *= n;
            table.push(acc.clone());
        }
        table
    })
}

fn fact(n: i32) -> &'static BigInt {
    debug_assert!(n >= 0, "factorial of negative argument {n}");
    &factorials()[n as usize]
}

/// An integer or half-integer, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct HalfInt {
    twice: i32,
}

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt { twice: 0 };
    pub const HALF: HalfInt = HalfInt { twice: 1 };
    pub const ONE: HalfInt = HalfInt { twice: 2 };

    pub const fn from_twice(twice: i32) -> Self {
        HalfInt { twice }
    }

    pub const fn int(value: i32) -> Self {
        HalfInt { twice: 2 * value }
    }

    pub const fn twice(self) -> i32 {
        self.twice
    }

    pub fn is_integer(self) -> bool {
        self.twice % 2 == 0
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.twice) / 2.0
    }

    /// `2j + 1`, the multiplicity of a level with this angular momentum.
    pub fn multiplicity(self) -> i32 {
        self.twice + 1
    }

    /// Projections `-j, -j+1, ..., j`.
    pub fn projections(self) -> impl Iterator<Item = HalfInt> {
        let j = self.twice;
        (0..=j.max(-1)).map(move |k| HalfInt::from_twice(-j + 2 * k))
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt::from_twice(self.twice + rhs.twice)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt::from_twice(self.twice - rhs.twice)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt::from_twice(-self.twice)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Parse(format!("not an integer or half-integer: {s:?}"));
        match s.split_once('/') {
            Some((num, den)) => {
                let num: i32 = num.trim().parse().map_err(|_| bad())?;
                match den.trim() {
                    "2" => Ok(HalfInt::from_twice(num)),
                    "1" => Ok(HalfInt::int(num)),
                    _ => Err(bad()),
                }
            }
            None => {
                if let Some(stripped) = s.strip_suffix(".5") {
                    let whole: i32 = stripped.parse().map_err(|_| bad())?;
                    let sign = if s.starts_with('-') { -1 } else { 1 };
                    return Ok(HalfInt::from_twice(2 * whole + sign));
                }
                let whole: i32 = s.parse().map_err(|_| bad())?;
                Ok(HalfInt::int(whole))
            }
        }
    }
}

impl From<HalfInt> for String {
    fn from(h: HalfInt) -> String {
        h.to_string()
    }
}

impl TryFrom<String> for HalfInt {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `sign * sqrt(p / q)` with exact integers.
///
/// Zero is stored canonically as sign 0 with radicand `0/1`; the radicand is
/// always non-negative and in lowest terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ExactRadical {
    sign: i8,
    radicand: BigRational,
}

impl ExactRadical {
    pub fn zero() -> Self {
        ExactRadical {
            sign: 0,
            radicand: BigRational::zero(),
        }
    }

    pub fn one() -> Self {
        ExactRadical {
            sign: 1,
            radicand: BigRational::one(),
        }
    }

    /// Builds `sign * sqrt(radicand)`. A zero radicand or zero sign gives the
    /// canonical zero.
    pub fn new(sign: i8, radicand: BigRational) -> Result<Self> {
        if radicand.is_negative() {
            return Err(Error::Domain(format!("negative radicand {radicand}")));
        }
        if sign == 0 || radicand.is_zero() {
            return Ok(Self::zero());
        }
        Ok(ExactRadical {
            sign: sign.signum(),
            radicand,
        })
    }

    /// Signed root of a signed rational: `sign(x) * sqrt(|x|)`.
    pub fn from_signed_square(x: BigRational) -> Self {
        let sign = if x.is_positive() {
            1
        } else if x.is_negative() {
            -1
        } else {
            0
        };
        Self::new(sign, x.abs()).expect("absolute value is non-negative")
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn radicand(&self) -> &BigRational {
        &self.radicand
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// The exact square of the value.
    pub fn square(&self) -> BigRational {
        self.radicand.clone()
    }

    /// `sign * value^2`, the signed square.
    pub fn signed_square(&self) -> BigRational {
        match self.sign {
            -1 => -self.radicand.clone(),
            _ => self.radicand.clone(),
        }
    }

    pub fn negate(&self) -> Self {
        ExactRadical {
            sign: -self.sign,
            radicand: self.radicand.clone(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        let r = rational_to_f64(&self.radicand);
        f64::from(self.sign) * r.sqrt()
    }
}

impl std::ops::Mul for &ExactRadical {
    type Output = ExactRadical;
    fn mul(self, rhs: &ExactRadical) -> ExactRadical {
        ExactRadical::new(self.sign * rhs.sign, &self.radicand * &rhs.radicand)
            .expect("product of non-negative radicands")
    }
}

impl fmt::Display for ExactRadical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sign == 0 {
            return write!(f, "0");
        }
        let s = if self.sign < 0 { "-" } else { "" };
        // Print perfect squares as plain rationals.
        let (n, d) = (self.radicand.numer(), self.radicand.denom());
        let (rn, rd) = (n.sqrt(), d.sqrt());
        if &rn * &rn == *n && &rd * &rd == *d {
            if rd.is_one() {
                write!(f, "{s}{rn}")
            } else {
                write!(f, "{s}{rn}/{rd}")
            }
        } else {
            write!(f, "{s}√({})", self.radicand)
        }
    }
}

pub(crate) fn rational_to_f64(r: &BigRational) -> f64 {
    // Scale to keep both parts representable before dividing.
    let n = r.numer();
    let d = r.denom();
    let bits = max(n.bits(), d.bits());
    if bits < 1000 {
        return n.to_f64().unwrap_or(f64::NAN) / d.to_f64().unwrap_or(f64::NAN);
    }
    let shift = bits - 900;
    let ns: BigInt = n >> shift;
    let ds: BigInt = d >> shift;
    ns.to_f64().unwrap_or(f64::NAN) / ds.to_f64().unwrap_or(f64::NAN)
}

fn check_range(args: &[HalfInt]) -> Result<()> {
    for a in args {
        if a.twice.abs() > MAX_TWICE_J {
            return Err(Error::Domain(format!(
                "argument {a} outside supported range |2j| <= {MAX_TWICE_J}"
            )));
        }
    }
    Ok(())
}

fn check_angular(js: &[HalfInt]) -> Result<()> {
    check_range(js)?;
    for j in js {
        if j.twice < 0 {
            return Err(Error::Domain(format!("negative angular momentum {j}")));
        }
    }
    Ok(())
}

fn check_projection(j: HalfInt, m: HalfInt) -> Result<()> {
    if (j.twice - m.twice).rem_euclid(2) != 0 {
        return Err(Error::Domain(format!(
            "projection {m} has the wrong parity for j = {j}"
        )));
    }
    Ok(())
}

/// Triangle rule: `|a - b| <= c <= a + b` with `a + b + c` integral.
pub fn triangle_ok(a: HalfInt, b: HalfInt, c: HalfInt) -> bool {
    let (a, b, c) = (a.twice, b.twice, c.twice);
    if a < 0 || b < 0 || c < 0 {
        return false;
    }
    (a + b + c) % 2 == 0 && c >= (a - b).abs() && c <= a + b
}

/// `(a+b-c)! (a-b+c)! (-a+b+c)! / (a+b+c+1)!` for a valid triad, in units of
/// twice the angular momentum.
fn triangle_coefficient(a: i32, b: i32, c: i32) -> BigRational {
    let num = fact((a + b - c) / 2) * fact((a - b + c) / 2) * fact((-a + b + c) / 2);
    BigRational::new(num, fact((a + b + c) / 2 + 1).clone())
}

fn parity_sign(k: i32) -> i32 {
    if k.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

/// Wigner 3j symbol `(j1 j2 j3; m1 m2 m3)`.
pub fn wigner_3j(j1: HalfInt, j2: HalfInt, j3: HalfInt, m1: HalfInt, m2: HalfInt, m3: HalfInt) -> Result<ExactRadical> {
    check_angular(&[j1, j2, j3])?;
    check_range(&[m1, m2, m3])?;
    check_projection(j1, m1)?;
    check_projection(j2, m2)?;
    check_projection(j3, m3)?;

    if m1.twice + m2.twice + m3.twice != 0 || !triangle_ok(j1, j2, j3) {
        return Ok(ExactRadical::zero());
    }
    if m1.twice.abs() > j1.twice || m2.twice.abs() > j2.twice || m3.twice.abs() > j3.twice {
        return Ok(ExactRadical::zero());
    }

    // Everything below is in integer units (the parity checks make each
    // combination even in twice-units).
    let (a, b, c) = (j1.twice, j2.twice, j3.twice);
    let (x, y, z) = (m1.twice, m2.twice, m3.twice);

    let t_min = max(0, max((b - c - x) / 2, (a - c + y) / 2));
    let t_max = min((a + b - c) / 2, min((a - x) / 2, (b + y) / 2));

    let mut sum = BigRational::zero();
    for t in t_min..=t_max {
        let den = fact(t)
            * fact((c - b + x) / 2 + t)
            * fact((c - a - y) / 2 + t)
            * fact((a + b - c) / 2 - t)
            * fact((a - x) / 2 - t)
            * fact((b + y) / 2 - t);
        sum += BigRational::new(BigInt::from(parity_sign(t)), den);
    }

    let radicand = triangle_coefficient(a, b, c)
        * BigRational::from_integer(
            fact((a + x) / 2)
                * fact((a - x) / 2)
                * fact((b + y) / 2)
                * fact((b - y) / 2)
                * fact((c + z) / 2)
                * fact((c - z) / 2),
        );
    Ok(radical_from_sum(parity_sign((a - b - z) / 2), sum, radicand))
}

/// `phase * sum * sqrt(radicand)` as a single radical.
fn radical_from_sum(phase: i32, sum: BigRational, radicand: BigRational) -> ExactRadical {
    let sign = phase * if sum.is_negative() { -1 } else { 1 };
    let magnitude = &sum * &sum * radicand;
    ExactRadical::new(sign as i8, magnitude).expect("squared sum times factorial ratio")
}

/// Wigner 6j symbol `{j1 j2 j3; j4 j5 j6}`.
pub fn wigner_6j(j1: HalfInt, j2: HalfInt, j3: HalfInt, j4: HalfInt, j5: HalfInt, j6: HalfInt) -> Result<ExactRadical> {
    check_angular(&[j1, j2, j3, j4, j5, j6])?;
    let triads = [(j1, j2, j3), (j1, j5, j6), (j4, j2, j6), (j4, j5, j3)];
    if !triads.iter().all(|&(a, b, c)| triangle_ok(a, b, c)) {
        return Ok(ExactRadical::zero());
    }

    let [a, b, c, d, e, f] = [j1, j2, j3, j4, j5, j6].map(HalfInt::twice);
    let alphas = [(a + b + c) / 2, (a + e + f) / 2, (d + b + f) / 2, (d + e + c) / 2];
    let betas = [(a + b + d + e) / 2, (b + c + e + f) / 2, (c + a + f + d) / 2];
    let t_min = *alphas.iter().max().expect("four triads");
    let t_max = *betas.iter().min().expect("three sums");

    let mut sum = BigRational::zero();
    for t in t_min..=t_max {
        let mut den = BigInt::one();
        for alpha in alphas {
            den *= fact(t - alpha);
        }
        for beta in betas {
            den *= fact(beta - t);
        }
        sum += BigRational::new(fact(t + 1) * parity_sign(t), den);
    }

    let radicand = triads
        .iter()
        .map(|&(x, y, z)| triangle_coefficient(x.twice, y.twice, z.twice))
        .fold(BigRational::one(), |acc, r| acc * r);
    Ok(radical_from_sum(1, sum, radicand))
}

/// Clebsch-Gordan coefficient `<j1 m1; j2 m2 | j m>`.
///
/// Evaluated from its own Racah sum rather than through [`wigner_3j`], so
/// the two routes check each other.
pub fn clebsch_gordan(
    j1: HalfInt,
    j2: HalfInt,
    j: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m: HalfInt,
) -> Result<ExactRadical> {
    check_angular(&[j1, j2, j])?;
    check_range(&[m1, m2, m])?;
    check_projection(j1, m1)?;
    check_projection(j2, m2)?;
    check_projection(j, m)?;

    if m1.twice + m2.twice != m.twice || !triangle_ok(j1, j2, j) {
        return Ok(ExactRadical::zero());
    }
    if m1.twice.abs() > j1.twice || m2.twice.abs() > j2.twice || m.twice.abs() > j.twice {
        return Ok(ExactRadical::zero());
    }

    let (a, b, c) = (j1.twice, j2.twice, j.twice);
    let (x, y, z) = (m1.twice, m2.twice, m.twice);

    // k runs over all values keeping every factorial argument non-negative.
    let k_min = max(0, max((b - c - x) / 2, (a - c + y) / 2));
    let k_max = min((a + b - c) / 2, min((a - x) / 2, (b + y) / 2));
    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let den = fact(k)
            * fact((a + b - c) / 2 - k)
            * fact((a - x) / 2 - k)
            * fact((b + y) / 2 - k)
            * fact((c - b + x) / 2 + k)
            * fact((c - a - y) / 2 + k);
        sum += BigRational::new(BigInt::from(parity_sign(k)), den);
    }

    let radicand = BigRational::from_integer(BigInt::from(c + 1))
        * triangle_coefficient(a, b, c)
        * BigRational::from_integer(
            fact((a + x) / 2)
                * fact((a - x) / 2)
                * fact((b + y) / 2)
                * fact((b - y) / 2)
                * fact((c + z) / 2)
                * fact((c - z) / 2),
        );
    Ok(radical_from_sum(1, sum, radicand))
}

/// 3j symbol obtained from a Clebsch-Gordan coefficient:
/// `(j1 j2 j3; m1 m2 m3) = (-1)^(j1-j2-m3) / sqrt(2 j3 + 1) <j1 m1; j2 m2 | j3 -m3>`.
pub fn wigner_3j_via_clebsch_gordan(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m3: HalfInt,
) -> Result<ExactRadical> {
    let cg = clebsch_gordan(j1, j2, j3, m1, m2, -m3)?;
    let phase = parity_sign((j1.twice - j2.twice - m3.twice) / 2);
    let scale = BigRational::new(BigInt::one(), BigInt::from(j3.multiplicity()));
    let scaled = ExactRadical::new(cg.sign() * phase as i8, cg.square() * scale)?;
    Ok(scaled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(s: &str) -> HalfInt {
        s.parse().unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn half_int_parsing_and_display() {
        assert_eq!(h("3/2").twice(), 3);
        assert_eq!(h("2").twice(), 4);
        assert_eq!(h("-1/2").twice(), -1);
        assert_eq!(h("1.5").twice(), 3);
        assert_eq!(h("7/2").to_string(), "7/2");
        assert_eq!(h("-3").to_string(), "-3");
        assert!("1/3".parse::<HalfInt>().is_err());
        assert!("x".parse::<HalfInt>().is_err());
    }

    #[test]
    fn triangle_examples() {
        assert!(triangle_ok(h("1"), h("1"), h("2")));
        assert!(!triangle_ok(h("1/2"), h("1/2"), h("2")));
        assert!(triangle_ok(h("4"), h("1"), h("5")));
        assert!(!triangle_ok(h("1/2"), h("1"), h("1")));
    }

    #[test]
    fn three_j_examples() {
        let v = wigner_3j(h("1"), h("1"), h("0"), h("0"), h("0"), h("0")).unwrap();
        assert_eq!(v, ExactRadical::new(-1, q(1, 3)).unwrap());
        assert_eq!(v.to_string(), "-√(1/3)");
        let v = wigner_3j(h("1"), h("1"), h("1"), h("1"), h("1"), h("-1")).unwrap();
        assert!(v.is_zero());
        let v = wigner_3j(h("1"), h("1"), h("2"), h("0"), h("0"), h("0")).unwrap();
        assert_eq!(v, ExactRadical::new(1, q(2, 15)).unwrap());
        // (4 1 4; 0 0 0) vanishes: 4 + 1 + 4 is odd.
        assert!(wigner_3j(h("4"), h("1"), h("4"), h("0"), h("0"), h("0"))
            .unwrap()
            .is_zero());
    }

    #[test]
    fn closed_form_j_j_0() {
        // (j j 0; m -m 0) = (-1)^(j-m) / sqrt(2j+1)
        for tj in 0..=12 {
            let j = HalfInt::from_twice(tj);
            for m in j.projections() {
                let v = wigner_3j(j, j, HalfInt::ZERO, m, -m, HalfInt::ZERO).unwrap();
                let sign = if ((tj - m.twice()) / 2) % 2 == 0 { 1 } else { -1 };
                assert_eq!(v, ExactRadical::new(sign, q(1, (tj + 1) as i64)).unwrap());
            }
        }
    }

    #[test]
    fn bad_parity_is_a_domain_error() {
        assert!(matches!(
            wigner_3j(h("1"), h("1"), h("1"), h("1/2"), h("-1/2"), h("0")),
            Err(Error::Domain(_))
        ));
        assert!(wigner_3j(
            HalfInt::from_twice(202),
            h("1"),
            HalfInt::from_twice(202),
            h("0"),
            h("0"),
            h("0")
        )
        .is_err());
    }

    #[test]
    fn six_j_examples() {
        let one = h("1");
        let v = wigner_6j(one, one, one, one, one, one).unwrap();
        assert_eq!(v, ExactRadical::new(1, q(1, 36)).unwrap());
        assert_eq!(v.to_string(), "1/6");
        // Broken triad (1/2, 1/2, 2).
        assert!(wigner_6j(h("1/2"), h("1/2"), h("2"), one, one, one).unwrap().is_zero());
        let v = wigner_6j(h("1/2"), h("3/2"), one, h("5"), h("4"), h("7/2")).unwrap();
        assert!(!v.is_zero());
    }

    #[test]
    fn clebsch_gordan_examples() {
        let half = h("1/2");
        let v = clebsch_gordan(half, half, h("1"), half, half, h("1")).unwrap();
        assert_eq!(v, ExactRadical::one());
        let v = clebsch_gordan(half, half, h("0"), half, -half, h("0")).unwrap();
        assert_eq!(v, ExactRadical::new(1, q(1, 2)).unwrap());
    }

    #[test]
    fn radical_zero_is_canonical() {
        let z = ExactRadical::new(1, q(0, 5)).unwrap();
        assert_eq!(z, ExactRadical::zero());
        assert_eq!(z.sign(), 0);
        assert_eq!(*z.radicand(), BigRational::zero());
        assert!(ExactRadical::new(1, q(-1, 2)).is_err());
        assert_eq!(ExactRadical::from_signed_square(q(-4, 9)).to_string(), "-2/3");
    }
}
