//! Exact arithmetic for numbers of the form `p + q√d`.
//!
//! `d = 0` encodes a plain rational; otherwise `d` is a square-free
//! integer ≥ 2 and the value carries the real embedding `√d > 0`.
//! Comparisons reduce to integer sign tests (rationalize and square with
//! case analysis on signs), so there is no floating point anywhere on the
//! exact path. The [`Scalar`] wrapper adds the float backend: a
//! high-precision rational approximation for non-quadratic β, with
//! explicit comparison tolerances instead of exact boundary decisions.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

/// Which arithmetic produced a value. Every system, density and report
/// records the backend it was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Float,
}

/// Absolute comparison tolerance of the float backend, `10^-18`.
pub fn float_cmp_tolerance() -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(10u64).pow(18))
}

/// Relative tolerance for cell-boundary decisions on the float backend,
/// `10^-15`.
pub fn boundary_rel_tolerance() -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(10u64).pow(15))
}

fn is_square_free(d: u64) -> bool {
    if d < 2 {
        return true;
    }
    let mut m = d;
    let mut p: u64 = 2;
    while p.checked_mul(p).is_some_and(|pp| pp <= m) {
        if m % p == 0 {
            m /= p;
            if m % p == 0 {
                return false;
            }
        }
        p += if p == 2 { 1 } else { 2 };
    }
    true
}

/// An exact element `p + q√d` of ℚ(√d), or a plain rational when `d = 0`.
///
/// Canonical form: rationals in lowest terms with positive denominator
/// (maintained by `BigRational`), and `q = 0` forces `d = 0`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuadExt {
    p: BigRational,
    q: BigRational,
    d: u64,
}

impl QuadExt {
    /// Builds `p + q√d`, canonicalizing and validating the radicand.
    pub fn new(p: BigRational, q: BigRational, d: i64) -> Result<Self> {
        if d < 0 {
            return Err(Error::NegativeRadicand(d));
        }
        let d = d as u64;
        if !is_square_free(d) {
            return Err(Error::NonSquareFreeRadicand(d));
        }
        Ok(Self::canonical(p, q, d))
    }

    fn canonical(p: BigRational, q: BigRational, d: u64) -> Self {
        if q.is_zero() || d == 0 {
            // √0 = 0 and √1 = 1 collapse into the rational part.
            let p = if d == 1 { p + q } else { p };
            QuadExt {
                p,
                q: BigRational::zero(),
                d: 0,
            }
        } else if d == 1 {
            QuadExt {
                p: p + q,
                q: BigRational::zero(),
                d: 0,
            }
        } else {
            QuadExt { p, q, d }
        }
    }

    pub fn from_rational(p: BigRational) -> Self {
        Self::canonical(p, BigRational::zero(), 0)
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_rational(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// `√d` itself.
    pub fn sqrt_of(d: i64) -> Result<Self> {
        Self::new(BigRational::zero(), BigRational::one(), d)
    }

    /// The golden mean `(1 + √5)/2`.
    pub fn golden() -> Self {
        QuadExt {
            p: BigRational::new(BigInt::one(), BigInt::from(2)),
            q: BigRational::new(BigInt::one(), BigInt::from(2)),
            d: 5,
        }
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    pub fn rational_part(&self) -> &BigRational {
        &self.p
    }

    pub fn radical_part(&self) -> &BigRational {
        &self.q
    }

    pub fn radicand(&self) -> u64 {
        self.d
    }

    pub fn is_rational(&self) -> bool {
        self.d == 0
    }

    pub fn is_zero(&self) -> bool {
        self.p.is_zero() && self.q.is_zero()
    }

    /// Checks field compatibility and returns the common radicand.
    fn common_radicand(&self, other: &Self) -> Result<u64> {
        match (self.d, other.d) {
            (a, 0) => Ok(a),
            (0, b) => Ok(b),
            (a, b) if a == b => Ok(a),
            (a, b) => Err(Error::IncompatibleRadicands(a, b)),
        }
    }

    /// Exact sign: -1, 0 or +1.
    pub fn sign(&self) -> i32 {
        let sp = rat_sign(&self.p);
        let sq = rat_sign(&self.q);
        if sq == 0 {
            return sp;
        }
        if sp == 0 {
            return sq;
        }
        if sp == sq {
            return sp;
        }
        // Mixed signs: compare p² against q²·d, both positive.
        let p2 = &self.p * &self.p;
        let q2d = &self.q * &self.q * BigRational::from_integer(BigInt::from(self.d));
        match p2.cmp(&q2d) {
            Ordering::Greater => sp,
            Ordering::Less => sq,
            Ordering::Equal => 0,
        }
    }

    /// Exact total order consistent with the real embedding.
    pub fn try_cmp(&self, other: &Self) -> Result<Ordering> {
        let diff = self.try_sub(other)?;
        Ok(match diff.sign() {
            s if s < 0 => Ordering::Less,
            0 => Ordering::Equal,
            _ => Ordering::Greater,
        })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        let d = self.common_radicand(other)?;
        Ok(Self::canonical(&self.p + &other.p, &self.q + &other.q, d))
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        let d = self.common_radicand(other)?;
        Ok(Self::canonical(&self.p - &other.p, &self.q - &other.q, d))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        let d = self.common_radicand(other)?;
        let rad = BigRational::from_integer(BigInt::from(d));
        let p = &self.p * &other.p + &self.q * &other.q * &rad;
        let q = &self.p * &other.q + &self.q * &other.p;
        Ok(Self::canonical(p, q, d))
    }

    pub fn try_div(&self, other: &Self) -> Result<Self> {
        let d = self.common_radicand(other)?;
        if other.is_zero() {
            return Err(Error::DivisionByZero);
        }
        // Multiply by the conjugate; the norm p² − q²d vanishes only at 0
        // because d is square-free.
        let rad = BigRational::from_integer(BigInt::from(d));
        let norm = &other.p * &other.p - &other.q * &other.q * &rad;
        debug_assert!(!norm.is_zero());
        let p = (&self.p * &other.p - &self.q * &other.q * &rad) / &norm;
        let q = (&self.q * &other.p - &self.p * &other.q) / &norm;
        Ok(Self::canonical(p, q, d))
    }

    pub fn neg_value(&self) -> Self {
        QuadExt {
            p: -&self.p,
            q: -&self.q,
            d: self.d,
        }
    }

    /// Integer power, with negative exponents for nonzero values.
    pub fn pow_int(&self, k: i64) -> Result<Self> {
        if k == 0 {
            return Ok(Self::one());
        }
        let base = if k < 0 {
            Self::one().try_div(self)?
        } else {
            self.clone()
        };
        let mut e = k.unsigned_abs();
        let mut acc = Self::one();
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.try_mul(&sq)?;
            }
            sq = sq.try_mul(&sq)?;
            e >>= 1;
        }
        Ok(acc)
    }

    /// Exact floor.
    pub fn floor_int(&self) -> BigInt {
        if self.q.is_zero() {
            return self.p.floor().to_integer();
        }
        // Common denominator: x = (a + c√d)/den with den > 0.
        let den = self.p.denom().lcm(self.q.denom());
        let a = self.p.numer() * (&den / self.p.denom());
        let c = self.q.numer() * (&den / self.q.denom());
        // floor(c√d): c²d is never a perfect square for c ≠ 0.
        let m = &c * &c * BigInt::from(self.d);
        let r = m.sqrt();
        let f = if c.is_positive() { r } else { -r - 1 };
        let n0 = (a + f).div_floor(&den);
        let candidate = QuadExt::from_rational(BigRational::from_integer(&n0 + 1));
        if self.try_cmp(&candidate).expect("same field") != Ordering::Less {
            n0 + 1
        } else {
            n0
        }
    }

    /// Correctly rounded decimal string with `digits` places after the
    /// point, rounding half to even.
    pub fn to_decimal(&self, digits: usize) -> String {
        let digits = digits.max(1);
        let scale = BigInt::from(10u32).pow(digits as u32);
        let scaled = self
            .try_mul(&QuadExt::from_rational(BigRational::from_integer(
                scale.clone(),
            )))
            .expect("rational scaling");
        let n = scaled.floor_int();
        let frac = scaled
            .try_sub(&QuadExt::from_rational(BigRational::from_integer(n.clone())))
            .expect("same field");
        let half = QuadExt::from_ratio(1, 2);
        let rounded = match frac.try_cmp(&half).expect("same field") {
            Ordering::Less => n,
            Ordering::Greater => n + 1,
            Ordering::Equal => {
                if n.is_even() {
                    n
                } else {
                    n + 1
                }
            }
        };
        let negative = rounded.is_negative();
        let abs = rounded.abs();
        let (int_part, frac_part) = abs.div_rem(&scale);
        format!(
            "{}{}.{:0>width$}",
            if negative { "-" } else { "" },
            int_part,
            frac_part.to_string(),
            width = digits
        )
    }

    /// Nearest rational with denominator `10^digits`.
    pub fn to_rational_approx(&self, digits: usize) -> BigRational {
        if self.q.is_zero() {
            return self.p.clone();
        }
        let scale = BigInt::from(10u32).pow(digits as u32);
        let scaled = self
            .try_mul(&QuadExt::from_rational(BigRational::from_integer(
                scale.clone(),
            )))
            .expect("rational scaling");
        BigRational::new(scaled.floor_int(), scale)
    }

    pub fn to_f64(&self) -> f64 {
        let mut v = self.p.to_f64().unwrap_or(f64::NAN);
        if !self.q.is_zero() {
            v += self.q.to_f64().unwrap_or(f64::NAN) * (self.d as f64).sqrt();
        }
        v
    }
}

fn rat_sign(r: &BigRational) -> i32 {
    if r.is_zero() {
        0
    } else if r.is_positive() {
        1
    } else {
        -1
    }
}

impl fmt::Display for QuadExt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.q.is_zero() {
            write!(f, "{}", self.p)
        } else {
            write!(f, "{} + {}*sqrt({})", self.p, self.q, self.d)
        }
    }
}

/// The universal scalar: exact quadratic value, or the float backend
/// (a rational approximation with tolerance-based comparisons).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scalar {
    Exact(QuadExt),
    Float(BigRational),
}

impl Scalar {
    pub fn backend(&self) -> Backend {
        match self {
            Scalar::Exact(_) => Backend::Exact,
            Scalar::Float(_) => Backend::Float,
        }
    }

    pub fn zero() -> Self {
        Scalar::Exact(QuadExt::zero())
    }

    pub fn one() -> Self {
        Scalar::Exact(QuadExt::one())
    }

    pub fn from_int(n: i64) -> Self {
        Scalar::Exact(QuadExt::from_int(n))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Scalar::Exact(QuadExt::from_ratio(num, den))
    }

    pub fn from_big_rational(r: BigRational) -> Self {
        Scalar::Exact(QuadExt::from_rational(r))
    }

    pub fn golden() -> Self {
        Scalar::Exact(QuadExt::golden())
    }

    pub fn sqrt_of(d: i64) -> Result<Self> {
        Ok(Scalar::Exact(QuadExt::sqrt_of(d)?))
    }

    /// Quadratic constructor mirroring the JSON scalar schema.
    pub fn quadratic(p: BigRational, q: BigRational, d: i64) -> Result<Self> {
        Ok(Scalar::Exact(QuadExt::new(p, q, d)?))
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Scalar::Exact(x) => x.is_zero(),
            Scalar::Float(r) => r.is_zero(),
        }
    }

    pub fn sign(&self) -> i32 {
        match self {
            Scalar::Exact(x) => x.sign(),
            Scalar::Float(r) => rat_sign(r),
        }
    }

    /// Converts to the float backend, approximating exact irrationals to
    /// `digits` decimal places.
    pub fn to_float_backend(&self, digits: usize) -> Scalar {
        match self {
            Scalar::Exact(x) => {
                if x.is_rational() {
                    Scalar::Float(x.rational_part().clone())
                } else {
                    Scalar::Float(x.to_rational_approx(digits))
                }
            }
            Scalar::Float(r) => Scalar::Float(r.clone()),
        }
    }

    /// The radicand, if exact.
    pub fn radicand(&self) -> Option<u64> {
        match self {
            Scalar::Exact(x) => Some(x.radicand()),
            Scalar::Float(_) => None,
        }
    }

    pub fn try_cmp(&self, other: &Self) -> Result<Ordering> {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => a.try_cmp(b),
            (Scalar::Float(a), Scalar::Float(b)) => Ok(a.cmp(b)),
            (Scalar::Exact(a), Scalar::Float(b)) if a.is_rational() => {
                Ok(a.rational_part().cmp(b))
            }
            (Scalar::Float(a), Scalar::Exact(b)) if b.is_rational() => {
                Ok(a.cmp(b.rational_part()))
            }
            (a, b) => Err(Error::IncompatibleRadicands(
                a.radicand().unwrap_or(u64::MAX),
                b.radicand().unwrap_or(u64::MAX),
            )),
        }
    }

    /// Total order for values known to live in one field. Panics on
    /// incompatible radicands; systems enforce a single radicand at
    /// construction, so this is safe inside the pipeline.
    pub fn cmp_total(&self, other: &Self) -> Ordering {
        self.try_cmp(other).expect("scalars from one field")
    }

    pub fn lt(&self, other: &Self) -> bool {
        self.cmp_total(other) == Ordering::Less
    }

    pub fn le(&self, other: &Self) -> bool {
        self.cmp_total(other) != Ordering::Greater
    }

    pub fn gt(&self, other: &Self) -> bool {
        self.cmp_total(other) == Ordering::Greater
    }

    pub fn ge(&self, other: &Self) -> bool {
        self.cmp_total(other) != Ordering::Less
    }

    /// |x − y| ≤ tol, on whatever backend.
    pub fn within(&self, other: &Self, tol: &BigRational) -> bool {
        let diff = self - other;
        let abs = if diff.sign() < 0 { -&diff } else { diff };
        match abs {
            Scalar::Exact(x) => {
                x.try_cmp(&QuadExt::from_rational(tol.clone()))
                    .expect("rational tolerance")
                    != Ordering::Greater
            }
            Scalar::Float(r) => r <= *tol,
        }
    }

    fn binary(&self, other: &Self, op: fn(&QuadExt, &QuadExt) -> Result<QuadExt>) -> Result<Self> {
        match (self, other) {
            (Scalar::Exact(a), Scalar::Exact(b)) => Ok(Scalar::Exact(op(a, b)?)),
            (Scalar::Float(a), Scalar::Float(b)) => {
                let xa = QuadExt::from_rational(a.clone());
                let xb = QuadExt::from_rational(b.clone());
                Ok(Scalar::Float(op(&xa, &xb)?.rational_part().clone()))
            }
            (Scalar::Exact(a), Scalar::Float(b)) if a.is_rational() => {
                let xb = QuadExt::from_rational(b.clone());
                Ok(Scalar::Float(op(a, &xb)?.rational_part().clone()))
            }
            (Scalar::Float(a), Scalar::Exact(b)) if b.is_rational() => {
                let xa = QuadExt::from_rational(a.clone());
                Ok(Scalar::Float(op(&xa, b)?.rational_part().clone()))
            }
            (a, b) => Err(Error::IncompatibleRadicands(
                a.radicand().unwrap_or(u64::MAX),
                b.radicand().unwrap_or(u64::MAX),
            )),
        }
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.binary(other, QuadExt::try_add)
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.binary(other, QuadExt::try_sub)
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.binary(other, QuadExt::try_mul)
    }

    pub fn try_div(&self, other: &Self) -> Result<Self> {
        self.binary(other, QuadExt::try_div)
    }

    pub fn pow_int(&self, k: i64) -> Result<Self> {
        match self {
            Scalar::Exact(x) => Ok(Scalar::Exact(x.pow_int(k)?)),
            Scalar::Float(r) => {
                let x = QuadExt::from_rational(r.clone());
                Ok(Scalar::Float(x.pow_int(k)?.rational_part().clone()))
            }
        }
    }

    pub fn recip(&self) -> Result<Self> {
        Scalar::one().try_div(self)
    }

    pub fn floor_int(&self) -> BigInt {
        match self {
            Scalar::Exact(x) => x.floor_int(),
            Scalar::Float(r) => r.floor().to_integer(),
        }
    }

    pub fn to_decimal(&self, digits: usize) -> String {
        match self {
            Scalar::Exact(x) => x.to_decimal(digits),
            Scalar::Float(r) => QuadExt::from_rational(r.clone()).to_decimal(digits),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(x) => x.to_f64(),
            Scalar::Float(r) => r.to_f64().unwrap_or(f64::NAN),
        }
    }

    /// Compares against the golden mean `(1+√5)/2` across fields: for
    /// values outside ℚ(√5) this squares `2x − 1` and compares with 5.
    pub fn cmp_golden(&self) -> Ordering {
        if let Scalar::Exact(x) = self {
            if x.radicand() == 5 || x.is_rational() {
                return x.try_cmp(&QuadExt::golden()).expect("field of √5");
            }
        }
        let y = &(&Scalar::from_int(2) * self) - &Scalar::one();
        if y.sign() < 0 {
            return Ordering::Less;
        }
        let y2 = &y * &y;
        y2.cmp_total(&Scalar::from_int(5))
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Exact(x) => write!(f, "{x}"),
            Scalar::Float(r) => write!(f, "{r}~"),
        }
    }
}

macro_rules! scalar_binop {
    ($trait:ident, $method:ident, $try_method:ident) => {
        impl $trait<&Scalar> for &Scalar {
            type Output = Scalar;
            fn $method(self, rhs: &Scalar) -> Scalar {
                self.$try_method(rhs).expect("scalars from one field")
            }
        }
    };
}

scalar_binop!(Add, add, try_add);
scalar_binop!(Sub, sub, try_sub);
scalar_binop!(Mul, mul, try_mul);
scalar_binop!(Div, div, try_div);

impl Neg for &Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        &Scalar::zero() - self
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (p, q, d) = match self {
            Scalar::Exact(x) => (x.rational_part(), Some(x.radical_part()), x.radicand()),
            Scalar::Float(r) => (r, None, 0),
        };
        let zero = BigRational::zero();
        let q = q.unwrap_or(&zero);
        let mut st = serializer.serialize_struct("Scalar", 6)?;
        st.serialize_field("p_num", &p.numer().to_string())?;
        st.serialize_field("p_den", &p.denom().to_string())?;
        st.serialize_field("q_num", &q.numer().to_string())?;
        st.serialize_field("q_den", &q.denom().to_string())?;
        st.serialize_field("d", &d)?;
        st.serialize_field("decimal", &self.to_decimal(24))?;
        st.end()
    }
}
