//! The polynomial families behind the multinomial CNML3 normalizer, in exact
//! rational arithmetic.
//!
//! `f²_{M,a}(t) = Σ_i C(M,i) (t+i)^i (M+a−t−i)^{M−i}` and its
//! `d`-variable analogue are constant in `t`. With `a = N` and `t` the
//! observed counts, dividing by `(N+M)^M` gives the CNML3 normalizer.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::model::{compositions_count, for_each_composition};

/// Largest number of multi-indices `eval_fd` will visit.
pub const FD_TERM_CAP: u128 = 5_000_000;

fn rational(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn binomial_row(m: usize) -> Vec<BigInt> {
    let mut row = vec![BigInt::one()];
    for i in 0..m {
        let next = &row[i] * BigInt::from(m - i) / BigInt::from(i + 1);
        row.push(next);
    }
    row
}

/// `f²_{M,a}(t)` evaluated exactly.
pub fn eval_f2(m: u32, a: &BigRational, t: &BigRational) -> BigRational {
    if m == 0 {
        return BigRational::one();
    }
    let mm = rational(m as u64);
    let coeffs = binomial_row(m as usize);
    let mut total = BigRational::zero();
    for (i, c) in coeffs.into_iter().enumerate() {
        let ii = rational(i as u64);
        let left = num_traits::pow(t + &ii, i);
        let right = num_traits::pow(&mm + a - t - &ii, m as usize - i);
        total += BigRational::from_integer(c) * left * right;
    }
    total
}

/// `f^{(d+1)}_{M,a}(t_1..t_d)` evaluated exactly.
///
/// The sum runs over `i_1..i_d ≥ 0` with `Σ i_l ≤ M`; the leftover
/// `M − Σ i_l` is the exponent of the last factor.
pub fn eval_fd(d: usize, m: u32, a: &BigRational, t: &[BigRational]) -> Result<BigRational> {
    if d == 0 || t.len() != d {
        return Err(Error::Domain(format!(
            "need d ≥ 1 and {d} coordinates, got {}",
            t.len()
        )));
    }
    let terms = compositions_count(m as usize, d);
    if terms > FD_TERM_CAP {
        return Err(Error::Capacity {
            what: "polynomial terms",
            needed: terms,
            cap: FD_TERM_CAP,
        });
    }
    let mut fact = vec![BigInt::one()];
    for i in 1..=m as usize {
        let next = &fact[i - 1] * BigInt::from(i);
        fact.push(next);
    }
    let mm = rational(m as u64);
    let t_sum: BigRational = t.iter().fold(BigRational::zero(), |acc, x| acc + x);
    let mut total = BigRational::zero();
    for_each_composition(m as usize, d, |parts| {
        let mut denom = BigInt::one();
        let mut prod = BigRational::one();
        let mut used = 0usize;
        for (l, &i) in parts.iter().enumerate() {
            let i = i as usize;
            used += i;
            denom *= &fact[i];
            prod *= num_traits::pow(&t[l] + rational(i as u64), i);
        }
        let rest = m as usize - used;
        denom *= &fact[rest];
        let base = &mm + a - &t_sum - rational(used as u64);
        prod *= num_traits::pow(base, rest);
        total += BigRational::new(fact[m as usize].clone(), denom) * prod;
    });
    Ok(total)
}

/// Dense polynomial in one variable with rational coefficients, lowest
/// degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalPoly(pub Vec<BigRational>);

impl RationalPoly {
    fn constant(c: BigRational) -> Self {
        Self(vec![c])
    }

    /// `c0 + c1 t`.
    fn linear(c0: BigRational, c1: BigRational) -> Self {
        Self(vec![c0, c1])
    }

    fn trimmed(mut self) -> Self {
        while self.0.len() > 1 && self.0.last().is_some_and(Zero::is_zero) {
            self.0.pop();
        }
        if self.0.is_empty() {
            self.0.push(BigRational::zero());
        }
        self
    }

    fn mul(&self, other: &Self) -> Self {
        let mut out = vec![BigRational::zero(); self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self(out).trimmed()
    }

    fn pow(&self, e: usize) -> Self {
        let mut out = Self::constant(BigRational::one());
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    fn add_scaled(&mut self, other: &Self, c: &BigRational) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), BigRational::zero());
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b * c;
        }
    }

    /// Degree after trimming trailing zeros; the zero polynomial has degree 0.
    pub fn degree(&self) -> usize {
        self.clone().trimmed().0.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(Zero::is_zero)
    }

    /// Formal derivative.
    pub fn derivative(&self) -> Self {
        if self.0.len() <= 1 {
            return Self::constant(BigRational::zero());
        }
        Self(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * rational(k as u64))
                .collect(),
        )
        .trimmed()
    }

    /// `p(t + h)` as a polynomial in `t`.
    pub fn shifted(&self, h: &BigRational) -> Self {
        let step = Self::linear(h.clone(), BigRational::one());
        let mut out = Self::constant(BigRational::zero());
        let mut power = Self::constant(BigRational::one());
        for c in &self.0 {
            out.add_scaled(&power, c);
            power = power.mul(&step);
        }
        out.trimmed()
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.add_scaled(other, &-BigRational::one());
        out.trimmed()
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        Self(self.0.iter().map(|x| x * c).collect()).trimmed()
    }

    pub fn eval(&self, t: &BigRational) -> BigRational {
        self.0
            .iter()
            .rev()
            .fold(BigRational::zero(), |acc, c| acc * t + c)
    }
}

/// Symbolic expansion of `f²_{M,a}` in `t`.
pub fn f2_polynomial(m: u32, a: &BigRational) -> RationalPoly {
    if m == 0 {
        return RationalPoly::constant(BigRational::one());
    }
    let mm = rational(m as u64);
    let coeffs = binomial_row(m as usize);
    let mut total = RationalPoly::constant(BigRational::zero());
    for (i, c) in coeffs.into_iter().enumerate() {
        let ii = rational(i as u64);
        let left = RationalPoly::linear(ii.clone(), BigRational::one()).pow(i);
        let right = RationalPoly::linear(&mm + a - &ii, -BigRational::one()).pow(m as usize - i);
        total.add_scaled(&left.mul(&right), &BigRational::from_integer(c));
    }
    total.trimmed()
}
