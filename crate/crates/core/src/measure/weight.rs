//! Mass arithmetic for the two modes: `f64` with compensated summation and
//! exact rationals.
//!
//! Convolution does not add masses one product at a time. Each input is first
//! brought to a common scale (a shared denominator in exact mode), products
//! are accumulated in the scaled domain, and each output mass is finished
//! once. In exact mode this keeps the inner loop on integers and defers the
//! single gcd per output atom to `acc_finish`.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Float,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::Float => "float",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "exact" => Ok(Mode::Exact),
            "float" => Ok(Mode::Float),
            other => Err(Error::Parse(format!("unknown arithmetic mode {other:?}"))),
        }
    }
}

pub trait Weight: Clone + fmt::Debug + PartialEq + Send + Sync + 'static {
    type Scale: Clone + Send + Sync;
    type Scaled: Send + Sync;
    type Acc: Send;

    const MODE: Mode;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(r: &BigRational) -> Self;
    fn is_zero(&self) -> bool;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn abs_diff(&self, other: &Self) -> Self;
    fn total_cmp(&self, other: &Self) -> Ordering;
    fn to_f64(&self) -> f64;

    /// Sum of many masses; compensated in float mode.
    fn sum<'a, I: IntoIterator<Item = &'a Self>>(items: I) -> Self;

    fn scale_of<'a, I: IntoIterator<Item = &'a Self>>(items: I) -> Self::Scale;
    fn scaled(&self, scale: &Self::Scale) -> Self::Scaled;
    fn acc_new() -> Self::Acc;
    fn acc_add(acc: &mut Self::Acc, a: &Self::Scaled, b: &Self::Scaled);
    fn acc_merge(acc: &mut Self::Acc, other: Self::Acc);
    fn acc_finish(acc: Self::Acc, left: &Self::Scale, right: &Self::Scale) -> Self;

    fn format(&self) -> String;
    fn parse(text: &str) -> Result<Self>;
}

/// Neumaier's compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl Weight for f64 {
    type Scale = ();
    type Scaled = f64;
    type Acc = Compensated;

    const MODE: Mode = Mode::Float;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_rational(r: &BigRational) -> Self {
        r.to_f64().unwrap_or(f64::NAN)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn abs_diff(&self, other: &Self) -> Self {
        (self - other).abs()
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        f64::total_cmp(self, other)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn sum<'a, I: IntoIterator<Item = &'a Self>>(items: I) -> Self {
        let mut acc = Compensated::default();
        for v in items {
            acc.add(*v);
        }
        acc.value()
    }
    fn scale_of<'a, I: IntoIterator<Item = &'a Self>>(_: I) -> Self::Scale {}
    fn scaled(&self, _: &()) -> f64 {
        *self
    }
    fn acc_new() -> Compensated {
        Compensated::default()
    }
    fn acc_add(acc: &mut Compensated, a: &f64, b: &f64) {
        acc.add(a * b);
    }
    fn acc_merge(acc: &mut Compensated, other: Compensated) {
        acc.add(other.sum);
        acc.add(other.carry);
    }
    fn acc_finish(acc: Compensated, _: &(), _: &()) -> f64 {
        acc.value()
    }
    fn format(&self) -> String {
        let a = self.abs();
        if a == 0.0 || (1e-5..1e16).contains(&a) {
            format!("{self}")
        } else {
            format!("{self:e}")
        }
    }
    fn parse(text: &str) -> Result<Self> {
        if let Some((n, d)) = text.split_once('/') {
            let r = BigRational::new(parse_int(n)?, parse_int(d)?);
            return Ok(Self::from_rational(&r));
        }
        text.trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad mass {text:?}")))
    }
}

fn parse_int(text: &str) -> Result<BigInt> {
    text.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad integer {text:?}")))
}

/// An exact rational mass.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact(pub BigRational);

impl Exact {
    pub fn new(num: i64, den: i64) -> Exact {
        Exact(BigRational::new(num.into(), den.into()))
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn lcm_of_denominators<'a, I: IntoIterator<Item = &'a Exact>>(items: I) -> BigInt {
    let mut l = BigInt::one();
    for w in items {
        let d = w.0.denom();
        if !(&l % d).is_zero() {
            l = l.lcm(d);
        }
    }
    l
}

impl Weight for Exact {
    type Scale = BigInt;
    type Scaled = BigInt;
    type Acc = BigInt;

    const MODE: Mode = Mode::Exact;

    fn zero() -> Self {
        Exact(BigRational::zero())
    }
    fn one() -> Self {
        Exact(BigRational::one())
    }
    fn from_rational(r: &BigRational) -> Self {
        Exact(r.clone())
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
    fn add(&self, other: &Self) -> Self {
        Exact(&self.0 + &other.0)
    }
    fn sub(&self, other: &Self) -> Self {
        Exact(&self.0 - &other.0)
    }
    fn mul(&self, other: &Self) -> Self {
        Exact(&self.0 * &other.0)
    }
    fn abs_diff(&self, other: &Self) -> Self {
        Exact((&self.0 - &other.0).abs())
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
    fn sum<'a, I: IntoIterator<Item = &'a Self>>(items: I) -> Self {
        let items: Vec<&Exact> = items.into_iter().collect();
        let scale = lcm_of_denominators(items.iter().copied());
        let total: BigInt = items.iter().map(|w| w.scaled(&scale)).sum();
        Exact(BigRational::new(total, scale))
    }
    fn scale_of<'a, I: IntoIterator<Item = &'a Self>>(items: I) -> BigInt {
        lcm_of_denominators(items)
    }
    fn scaled(&self, scale: &BigInt) -> BigInt {
        self.0.numer() * (scale / self.0.denom())
    }
    fn acc_new() -> BigInt {
        BigInt::zero()
    }
    fn acc_add(acc: &mut BigInt, a: &BigInt, b: &BigInt) {
        *acc += a * b;
    }
    fn acc_merge(acc: &mut BigInt, other: BigInt) {
        *acc += other;
    }
    fn acc_finish(acc: BigInt, left: &BigInt, right: &BigInt) -> Self {
        Exact(BigRational::new(acc, left * right))
    }
    fn format(&self) -> String {
        self.to_string()
    }
    fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        match text.split_once('/') {
            Some((n, d)) => {
                let d = parse_int(d)?;
                if d.is_zero() {
                    return Err(Error::Parse(format!("zero denominator in {text:?}")));
                }
                Ok(Exact(BigRational::new(parse_int(n)?, d)))
            }
            None => Ok(Exact(BigRational::from_integer(parse_int(text)?))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let values: Vec<f64> = std::iter::once(1.0).chain(std::iter::repeat_n(1e-16, 10_000)).collect();
        let naive: f64 = values.iter().sum();
        let comp = f64::sum(&values);
        assert_eq!(naive, 1.0);
        assert!((comp - (1.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn exact_scaled_accumulation() {
        let a = [Exact::new(1, 3), Exact::new(1, 6)];
        let b = [Exact::new(1, 4), Exact::new(3, 4)];
        let sa = Exact::scale_of(&a);
        let sb = Exact::scale_of(&b);
        let mut acc = Exact::acc_new();
        for x in &a {
            for y in &b {
                Exact::acc_add(&mut acc, &x.scaled(&sa), &y.scaled(&sb));
            }
        }
        assert_eq!(Exact::acc_finish(acc, &sa, &sb), Exact::new(1, 2));
        assert_eq!(Exact::sum(&a), Exact::new(1, 2));
    }

    #[test]
    fn mass_text_round_trip() {
        for v in [0.25, 1.0 / 3.0, 1e-20, 123456.0] {
            assert_eq!(f64::parse(&v.format()).unwrap(), v);
        }
        let e = Exact::new(-7, 12);
        assert_eq!(Exact::parse(&e.format()).unwrap(), e);
        assert_eq!(f64::parse("1/4").unwrap(), 0.25);
        assert!(Exact::parse("1/0").is_err());
    }
}
