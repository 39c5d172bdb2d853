//! Sparse multivariate power series truncated at a total degree.
//!
//! A [`Series`] stores finitely many nonzero coefficients keyed by
//! [`Exponent`] in graded-lexicographic order together with a truncation
//! bound. With [`Trunc::Exact`] the series is a polynomial; with
//! [`Trunc::Finite`]`(n)` every term of total degree above `n` is unknown.
//!
//! Variable indices in this module are zero based.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

use crate::scalar::{from_usize, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("dimension mismatch: {left} vs {right} variables")]
    DimensionMismatch { left: usize, right: usize },
    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("not divisible by x{var}: offending exponent {exponent}")]
    NotDivisible { var: usize, exponent: Exponent },
    #[error("not a unit: constant term vanishes")]
    NotAUnit,
    #[error("normality is undefined for the zero series")]
    ZeroSeries,
    #[error("regularity order mismatch: expected {expected}, found {found:?}")]
    RegularityMismatch { expected: u32, found: Option<u32> },
    #[error("a finite truncation order is required")]
    ExactTruncationRequired,
}

/// Multi-index of a monomial. Ordered graded-lexicographically.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Exponent(Vec<u32>);

impl Exponent {
    pub fn new(entries: Vec<u32>) -> Self {
        Exponent(entries)
    }

    pub fn zero(nvars: usize) -> Self {
        Exponent(vec![0; nvars])
    }

    pub fn unit(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        Exponent(e)
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// Componentwise `self <= other`, i.e. `X^self` divides `X^other`.
    pub fn divides(&self, other: &Exponent) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// Partial order comparison; `None` when incomparable.
    pub fn partial_cmp_divisibility(&self, other: &Exponent) -> Option<Ordering> {
        if self == other {
            Some(Ordering::Equal)
        } else if self.divides(other) {
            Some(Ordering::Less)
        } else if other.divides(self) {
            Some(Ordering::Greater)
        } else {
            None
        }
    }

    pub fn componentwise_min(&self, other: &Exponent) -> Exponent {
        Exponent(self.0.iter().zip(&other.0).map(|(a, b)| *a.min(b)).collect())
    }

    pub fn checked_sub(&self, other: &Exponent) -> Option<Exponent> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(Exponent)
    }

    pub fn with_entry(&self, var: usize, value: u32) -> Exponent {
        let mut e = self.0.clone();
        e[var] = value;
        Exponent(e)
    }

    pub fn without(&self, var: usize) -> Exponent {
        let mut e = self.0.clone();
        e.remove(var);
        Exponent(e)
    }
}

impl std::ops::Index<usize> for Exponent {
    type Output = u32;
    fn index(&self, i: usize) -> &u32 {
        &self.0[i]
    }
}

impl Add for &Exponent {
    type Output = Exponent;
    fn add(self, rhs: &Exponent) -> Exponent {
        Exponent(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Exponent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Total-degree truncation bound. `Finite(a) < Finite(b) < Exact` for `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Trunc {
    Finite(u32),
    Exact,
}

impl Trunc {
    pub fn admits(self, degree: u32) -> bool {
        match self {
            Trunc::Exact => true,
            Trunc::Finite(n) => degree <= n,
        }
    }

    pub fn is_exact(self) -> bool {
        self == Trunc::Exact
    }

    /// Lowers a finite bound by `k`; `None` when it would go negative.
    pub fn lower(self, k: u32) -> Option<Trunc> {
        match self {
            Trunc::Exact => Some(Trunc::Exact),
            Trunc::Finite(n) => n.checked_sub(k).map(Trunc::Finite),
        }
    }

    pub fn raise(self, k: u32) -> Trunc {
        match self {
            Trunc::Exact => Trunc::Exact,
            Trunc::Finite(n) => Trunc::Finite(n + k),
        }
    }
}

impl fmt::Display for Trunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trunc::Exact => write!(f, "exact"),
            Trunc::Finite(n) => write!(f, "{n}"),
        }
    }
}

/// Sparse truncated power series over the coefficient field `C`.
#[derive(Clone, PartialEq)]
pub struct Series<C> {
    nvars: usize,
    terms: BTreeMap<Exponent, C>,
    trunc: Trunc,
}

/// Witness that a series equals `X^alpha * unit` with `unit(0) != 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalCertificate<C> {
    pub alpha: Exponent,
    pub unit_constant: C,
    pub unit: Series<C>,
}

impl<C: Scalar> NormalCertificate<C> {
    /// `X^alpha * unit`.
    pub fn reconstruct(&self) -> Series<C> {
        self.unit.mul_monomial(&self.alpha)
    }
}

/// Outcome of [`Series::is_normal`].
#[derive(Clone, Debug, PartialEq)]
pub enum Normality<C> {
    Normal(NormalCertificate<C>),
    NotNormal,
    UnknownAtTruncation,
}

impl<C> Normality<C> {
    pub fn certificate(&self) -> Option<&NormalCertificate<C>> {
        match self {
            Normality::Normal(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_normal(&self) -> bool {
        matches!(self, Normality::Normal(_))
    }
}

/// `F = unit * X_v^d + sum_i coeffs[i-1] * X_v^(d-i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeierstrassSplit<C> {
    pub unit: Series<C>,
    pub coeffs: Vec<Series<C>>,
}

impl<C: Scalar> Series<C> {
    pub fn zero(nvars: usize) -> Self {
        Series { nvars, terms: BTreeMap::new(), trunc: Trunc::Exact }
    }

    pub fn zero_truncated(nvars: usize, trunc: Trunc) -> Self {
        Series { nvars, terms: BTreeMap::new(), trunc }
    }

    pub fn one(nvars: usize) -> Self {
        Self::constant(nvars, C::one())
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        Self::monomial(Exponent::zero(nvars), c)
    }

    /// The coordinate function `X_var`.
    pub fn var(nvars: usize, var: usize) -> Self {
        Self::monomial(Exponent::unit(nvars, var), C::one())
    }

    pub fn monomial(exp: Exponent, c: C) -> Self {
        let mut s = Self::zero(exp.len());
        s.add_term(exp, c);
        s
    }

    /// Builds a series from terms, summing duplicates and dropping zeros
    /// and anything above `trunc`.
    pub fn from_terms<I>(nvars: usize, trunc: Trunc, terms: I) -> Result<Self, SeriesError>
    where
        I: IntoIterator<Item = (Exponent, C)>,
    {
        let mut s = Self::zero_truncated(nvars, trunc);
        for (e, c) in terms {
            if e.len() != nvars {
                return Err(SeriesError::DimensionMismatch { left: nvars, right: e.len() });
            }
            s.add_term(e, c);
        }
        Ok(s)
    }

    /// Dense-ish constructor for tests and examples: `(exponents, coefficient)`.
    pub fn from_int_terms(nvars: usize, terms: &[(&[u32], i64)]) -> Self {
        Self::from_terms(
            nvars,
            Trunc::Exact,
            terms.iter().map(|(e, c)| (Exponent::new(e.to_vec()), C::from_ratio(*c, 1))),
        )
        .expect("consistent exponent lengths")
    }

    fn add_term(&mut self, e: Exponent, c: C) {
        if c.is_zero() || !self.trunc.admits(e.degree()) {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get().clone() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn trunc(&self) -> Trunc {
        self.trunc
    }

    pub fn is_exact(&self) -> bool {
        self.trunc.is_exact()
    }

    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Exponent, &C)> + '_ {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, e: &Exponent) -> C {
        self.terms.get(e).cloned().unwrap_or_else(C::zero)
    }

    pub fn constant_term(&self) -> C {
        self.coeff(&Exponent::zero(self.nvars))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Lowest total degree of a stored term.
    pub fn order(&self) -> Option<u32> {
        self.terms.keys().next().map(Exponent::degree)
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().next_back().map(Exponent::degree)
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.terms.keys().any(|e| e[var] > 0)
    }

    /// Drops every term above `n` and records the bound.
    pub fn truncate(&self, n: u32) -> Self {
        let trunc = self.trunc.min(Trunc::Finite(n));
        Series {
            nvars: self.nvars,
            terms: self.terms.iter().filter(|(e, _)| trunc.admits(e.degree())).map(|(e, c)| (e.clone(), c.clone())).collect(),
            trunc,
        }
    }

    /// Reinterprets the stored terms under a different bound. Marking a
    /// truncated series exact asserts that it is a polynomial.
    pub fn with_trunc(&self, trunc: Trunc) -> Self {
        let mut s = self.clone();
        s.trunc = trunc;
        s.terms.retain(|e, _| trunc.admits(e.degree()));
        s
    }

    fn check_dims(&self, other: &Self) -> Result<(), SeriesError> {
        if self.nvars == other.nvars {
            Ok(())
        } else {
            Err(SeriesError::DimensionMismatch { left: self.nvars, right: other.nvars })
        }
    }

    fn check_var(&self, var: usize) -> Result<(), SeriesError> {
        if var < self.nvars {
            Ok(())
        } else {
            Err(SeriesError::VariableOutOfRange { index: var, nvars: self.nvars })
        }
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_dims(other)?;
        let mut s = Self::zero_truncated(self.nvars, self.trunc.min(other.trunc));
        for (e, c) in self.terms.iter().chain(other.terms.iter()) {
            s.add_term(e.clone(), c.clone());
        }
        Ok(s)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, SeriesError> {
        self.checked_add(&other.neg_ref())
    }

    /// Truncated convolution product; the bound is the smaller of the two.
    pub fn checked_mul(&self, other: &Self) -> Result<Self, SeriesError> {
        self.check_dims(other)?;
        let trunc = self.trunc.min(other.trunc);
        let mut s = Self::zero_truncated(self.nvars, trunc);
        for (ea, ca) in &self.terms {
            let da = ea.degree();
            if !trunc.admits(da) {
                break;
            }
            for (eb, cb) in &other.terms {
                if !trunc.admits(da + eb.degree()) {
                    break;
                }
                s.add_term(ea + eb, ca.clone() * cb.clone());
            }
        }
        Ok(s)
    }

    fn neg_ref(&self) -> Self {
        Series {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c.clone())).collect(),
            trunc: self.trunc,
        }
    }

    pub fn scale(&self, c: &C) -> Self {
        if c.is_zero() {
            return Self::zero_truncated(self.nvars, self.trunc);
        }
        Series {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, v)| (e.clone(), v.clone() * c.clone())).collect(),
            trunc: self.trunc,
        }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(self.nvars).with_trunc(self.trunc);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Multiplication by `X^exp`; a finite bound moves up by `|exp|`.
    pub fn mul_monomial(&self, exp: &Exponent) -> Self {
        Series {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e + exp, c.clone())).collect(),
            trunc: self.trunc.raise(exp.degree()),
        }
    }

    /// `F / X_var`, defined when every stored exponent has a positive
    /// `var` entry. A finite bound drops by one.
    pub fn monomial_divide(&self, var: usize) -> Result<Self, SeriesError> {
        self.check_var(var)?;
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[var] == 0 {
                return Err(SeriesError::NotDivisible { var, exponent: e.clone() });
            }
            terms.insert(e.with_entry(var, e[var] - 1), c.clone());
        }
        let trunc = match self.trunc.lower(1) {
            Some(t) => t,
            None => Trunc::Finite(0),
        };
        let mut s = Series { nvars: self.nvars, terms, trunc };
        s.terms.retain(|e, _| trunc.admits(e.degree()));
        Ok(s)
    }

    /// Divides by `X^exp`, failing at the first non-divisible term.
    pub fn monomial_divide_by(&self, exp: &Exponent) -> Result<Self, SeriesError> {
        let mut out = self.clone();
        for (var, &k) in exp.entries().iter().enumerate() {
            for _ in 0..k {
                out = out.monomial_divide(var)?;
            }
        }
        Ok(out)
    }

    /// Exact quotient of two polynomials, or `None` when `divisor` does not
    /// divide `self`. Truncated inputs are never divisible.
    pub fn exact_div(&self, divisor: &Self) -> Option<Self> {
        if self.nvars != divisor.nvars || !self.is_exact() || !divisor.is_exact() {
            return None;
        }
        let (lead_e, lead_c) = divisor.terms.iter().next_back()?;
        let mut rem = self.clone();
        let mut quot = Self::zero(self.nvars);
        while let Some((e, c)) = rem.terms.iter().next_back() {
            let t = Self::monomial(e.checked_sub(lead_e)?, c.clone() / lead_c.clone());
            rem = &rem - &(divisor * &t);
            quot = &quot + &t;
        }
        Some(quot)
    }

    /// The first term in display order (highest degree, then highest powers
    /// of the later variables).
    pub fn leading_display_term(&self) -> Option<(&Exponent, &C)> {
        self.terms.iter().min_by(|a, b| display_order(a.0, b.0))
    }

    pub fn derivative(&self, var: usize) -> Result<Self, SeriesError> {
        self.check_var(var)?;
        let trunc = self.trunc.lower(1).unwrap_or(Trunc::Finite(0));
        let mut s = Self::zero_truncated(self.nvars, trunc);
        for (e, c) in &self.terms {
            if e[var] > 0 {
                s.add_term(e.with_entry(var, e[var] - 1), c.clone() * from_usize::<C>(e[var] as usize));
            }
        }
        Ok(s)
    }

    pub fn derivative_n(&self, var: usize, k: u32) -> Result<Self, SeriesError> {
        (0..k).try_fold(self.clone(), |acc, _| acc.derivative(var))
    }

    /// Least `d` with `X_var^d` in the support, i.e. the order of
    /// `F(0, .., X_var, .., 0)`.
    pub fn regularity_order_in(&self, var: usize) -> Option<u32> {
        self.terms
            .keys()
            .filter(|e| e.entries().iter().enumerate().all(|(k, &a)| k == var || a == 0))
            .map(|e| e[var])
            .min()
    }

    /// Regularity order in the last variable.
    pub fn regularity_order(&self) -> Option<u32> {
        if self.nvars == 0 {
            return None;
        }
        self.regularity_order_in(self.nvars - 1)
    }

    /// Decides whether the series is `X^alpha * U` with `U(0) != 0`.
    ///
    /// With a finite bound and at least two variables, any nonconstant
    /// candidate monomial could be undercut by an unseen term such as
    /// `X_k^(N+1)`, so only units are certified.
    pub fn is_normal(&self) -> Result<Normality<C>, SeriesError> {
        let mut iter = self.terms.keys();
        let first = iter.next().ok_or(SeriesError::ZeroSeries)?;
        let alpha = iter.fold(first.clone(), |acc, e| acc.componentwise_min(e));
        if !self.terms.contains_key(&alpha) {
            return Ok(Normality::NotNormal);
        }
        let decided = self.trunc.is_exact() || alpha.is_zero() || self.nvars == 1;
        if !decided {
            return Ok(Normality::UnknownAtTruncation);
        }
        let unit = self.monomial_divide_by(&alpha)?;
        let unit_constant = unit.constant_term();
        Ok(Normality::Normal(NormalCertificate { alpha, unit_constant, unit }))
    }

    /// `V` with `U * V = 1` up to total degree `n`.
    pub fn unit_inverse(&self, n: u32) -> Result<Self, SeriesError> {
        let u0 = self.constant_term();
        if u0.is_zero() {
            return Err(SeriesError::NotAUnit);
        }
        let u = self.truncate(n);
        let two = Self::constant(self.nvars, C::one() + C::one());
        let mut v = Self::constant(self.nvars, C::one() / u0).truncate(n);
        // Newton doubles the number of correct degrees per step.
        for _ in 0..=(32 - n.leading_zeros()) + 1 {
            let next = &v * &(&two - &(&u * &v));
            if next == v {
                break;
            }
            v = next;
        }
        Ok(v)
    }

    /// Splits `F = U X_var^d + sum_{i=1..d} F_i X_var^(d-i)` where the
    /// `F_i` are free of `X_var`. Requires regularity of order `d` in `X_var`.
    pub fn weierstrass_split_in(&self, var: usize, d: u32) -> Result<WeierstrassSplit<C>, SeriesError> {
        self.check_var(var)?;
        let found = self.regularity_order_in(var);
        if found != Some(d) {
            return Err(SeriesError::RegularityMismatch { expected: d, found });
        }
        let lower = |k: u32| self.trunc.lower(k).unwrap_or(Trunc::Finite(0));
        let mut unit = Self::zero_truncated(self.nvars, lower(d));
        let mut coeffs: Vec<Series<C>> = (1..=d).map(|i| Self::zero_truncated(self.nvars, lower(d - i))).collect();
        for (e, c) in &self.terms {
            let k = e[var];
            if k >= d {
                unit.add_term(e.with_entry(var, k - d), c.clone());
            } else {
                let i = (d - k) as usize;
                coeffs[i - 1].add_term(e.with_entry(var, 0), c.clone());
            }
        }
        Ok(WeierstrassSplit { unit, coeffs })
    }

    /// [`Series::weierstrass_split_in`] for the last variable, with the
    /// coefficients returned as series in the remaining variables.
    pub fn weierstrass_coeffs(&self, d: u32) -> Result<WeierstrassSplit<C>, SeriesError> {
        let last = self.last_var()?;
        let split = self.weierstrass_split_in(last, d)?;
        Ok(WeierstrassSplit {
            unit: split.unit,
            coeffs: split.coeffs.iter().map(|c| c.drop_var(last)).collect::<Result<_, _>>()?,
        })
    }

    fn last_var(&self) -> Result<usize, SeriesError> {
        self.nvars.checked_sub(1).ok_or(SeriesError::VariableOutOfRange { index: 0, nvars: 0 })
    }

    /// `Q_k(Y) = sum_{|alpha| = k} a_alpha Y^(alpha without var)` kept in the
    /// ambient variables, with the `var` slot unused.
    pub fn qk_in(&self, var: usize, k: u32) -> Result<Self, SeriesError> {
        self.check_var(var)?;
        let mut q = Self::zero(self.nvars);
        for (e, c) in self.terms.iter().filter(|(e, _)| e.degree() == k) {
            q.add_term(e.with_entry(var, 0), c.clone());
        }
        Ok(q)
    }

    /// `Q_k` for the last variable as a polynomial in the other `n - 1`.
    pub fn qk_polynomial(&self, k: u32) -> Result<Self, SeriesError> {
        let last = self.last_var()?;
        self.qk_in(last, k)?.drop_var(last)
    }

    /// Removes an unused variable.
    pub fn drop_var(&self, var: usize) -> Result<Self, SeriesError> {
        self.check_var(var)?;
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            if e[var] != 0 {
                return Err(SeriesError::NotDivisible { var, exponent: e.clone() });
            }
            terms.insert(e.without(var), c.clone());
        }
        Ok(Series { nvars: self.nvars - 1, terms, trunc: self.trunc })
    }

    /// Inserts a fresh unused variable at position `var`.
    pub fn insert_var(&self, var: usize) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut v = e.entries().to_vec();
                v.insert(var, 0);
                (Exponent(v), c.clone())
            })
            .collect();
        Series { nvars: self.nvars + 1, terms, trunc: self.trunc }
    }

    /// Replaces `X_var` by `h` (given in the same variables), Horner style.
    pub fn substitute_var(&self, var: usize, h: &Self) -> Result<Self, SeriesError> {
        self.check_var(var)?;
        self.check_dims(h)?;
        let mut by_power: BTreeMap<u32, Series<C>> = BTreeMap::new();
        for (e, c) in &self.terms {
            by_power
                .entry(e[var])
                .or_insert_with(|| Self::zero_truncated(self.nvars, Trunc::Exact))
                .add_term(e.with_entry(var, 0), c.clone());
        }
        let mut acc = Self::zero_truncated(self.nvars, self.trunc);
        let Some(&top) = by_power.keys().next_back() else {
            return Ok(acc);
        };
        for p in (0..=top).rev() {
            if p != top {
                acc = &acc * h;
            }
            if let Some(c) = by_power.get(&p) {
                acc = &acc + c;
            }
        }
        Ok(acc.with_trunc(acc.trunc.min(self.trunc)))
    }

    /// A root `b(X^)` with `b(0) = 0` of `d^(d-1) F / dX_var^(d-1)` up to
    /// total degree `n`, via Newton iteration. When the truncated root
    /// solves the equation exactly it is returned as a polynomial.
    pub fn formal_root_in(&self, var: usize, d: u32, n: u32) -> Result<Self, SeriesError> {
        let found = self.regularity_order_in(var);
        if d == 0 || found != Some(d) {
            return Err(SeriesError::RegularityMismatch { expected: d, found });
        }
        let g = self.derivative_n(var, d - 1)?;
        let gy = g.derivative(var)?;
        let mut b = Self::zero_truncated(self.nvars, Trunc::Finite(n));
        for _ in 0..=(32 - n.leading_zeros()) + 2 {
            let residual = g.substitute_var(var, &b)?.truncate(n);
            if residual.is_zero() {
                break;
            }
            let slope = gy.substitute_var(var, &b)?;
            let step = &residual * &slope.unit_inverse(n)?;
            b = (&b - &step).truncate(n);
        }
        if g.is_exact() {
            let candidate = b.with_trunc(Trunc::Exact);
            if g.substitute_var(var, &candidate)?.is_zero() {
                return Ok(candidate);
            }
        }
        Ok(b)
    }

    /// [`Series::formal_root_in`] for the last variable; the root is
    /// returned in the first `n - 1` variables.
    pub fn formal_root_in_xn(&self, d: u32, n: u32) -> Result<Self, SeriesError> {
        let last = self.last_var()?;
        self.formal_root_in(last, d, n)?.drop_var(last)
    }

    /// Evaluates the stored terms at `point`.
    pub fn eval(&self, point: &[C]) -> Result<C, SeriesError> {
        if point.len() != self.nvars {
            return Err(SeriesError::DimensionMismatch { left: self.nvars, right: point.len() });
        }
        let mut acc = C::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (x, &k) in point.iter().zip(e.entries()) {
                for _ in 0..k {
                    t = t * x.clone();
                }
            }
            acc = acc + t;
        }
        Ok(acc)
    }

    /// Converts to a lightweight `f64` polynomial for fast sampling.
    pub fn to_f64_poly(&self) -> F64Poly {
        F64Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, c)| (e.entries().to_vec(), c.to_f64())).collect(),
        }
    }

    /// Maps coefficients into another scalar type.
    pub fn map_coeffs<D: Scalar>(&self, f: impl Fn(&C) -> D) -> Series<D> {
        let mut out = Series::zero_truncated(self.nvars, self.trunc);
        for (e, c) in &self.terms {
            out.add_term(e.clone(), f(c));
        }
        out
    }

    /// Renders with the given variable names, e.g. `3y² − 2xy − 1`.
    pub fn display_with(&self, names: &[String]) -> String {
        render_terms(self, names)
    }
}

/// Sum of `|c| * r^alpha`: an upper bound for `|F|` on the polydisk of
/// polyradius `r` when `F` is a polynomial.
pub fn coefficient_sum_bound<C: Scalar>(f: &Series<C>, radius: &[C]) -> C {
    f.terms()
        .map(|(e, c)| {
            let mut t = c.abs();
            for (r, &k) in radius.iter().zip(e.entries()) {
                for _ in 0..k {
                    t = t * r.clone();
                }
            }
            t
        })
        .fold(C::zero(), |a, b| a + b)
}

/// Binomial expansion helper: `(lambda + X_var)^k`.
pub fn shifted_power<C: Scalar>(nvars: usize, var: usize, lambda: &C, k: u32) -> Series<C> {
    let mut s = Series::zero(nvars);
    let mut binom = C::one();
    for j in 0..=k {
        // coefficient of X^j: C(k, j) lambda^(k-j)
        let mut lp = C::one();
        for _ in 0..(k - j) {
            lp = lp * lambda.clone();
        }
        let mut e = Exponent::zero(nvars);
        e.0[var] = j;
        s.add_term(e, binom.clone() * lp);
        binom = binom * from_usize::<C>((k - j) as usize) / from_usize::<C>((j + 1) as usize);
    }
    s
}

/// Plain `f64` polynomial used by the numeric sampling code.
#[derive(Clone, Debug)]
pub struct F64Poly {
    pub nvars: usize,
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl F64Poly {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| e.iter().zip(x).fold(*c, |acc, (&k, &xi)| acc * xi.powi(k as i32)))
            .sum()
    }
}

fn superscript(n: u32) -> String {
    const DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];
    n.to_string().chars().map(|c| DIGITS[c.to_digit(10).unwrap() as usize]).collect()
}

pub fn default_names(nvars: usize) -> Vec<String> {
    match nvars {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (1..=nvars).map(|i| format!("x{i}")).collect(),
    }
}

/// Display order: descending total degree, then descending exponents read
/// from the last variable.
fn display_order(a: &Exponent, b: &Exponent) -> Ordering {
    b.degree().cmp(&a.degree()).then_with(|| b.entries().iter().rev().cmp(a.entries().iter().rev()))
}

fn render_terms<C: Scalar>(s: &Series<C>, names: &[String]) -> String {
    let mut keys: Vec<&Exponent> = s.terms.keys().collect();
    keys.sort_by(|a, b| display_order(a, b));
    let mut out = String::new();
    for (k, e) in keys.iter().enumerate() {
        let c = &s.terms[*e];
        let neg = c.is_negative();
        let abs = c.abs();
        if k == 0 {
            if neg {
                out.push('−');
            }
        } else {
            out.push_str(if neg { " − " } else { " + " });
        }
        let mono: String = e
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, &a)| a > 0)
            .map(|(i, &a)| if a == 1 { names[i].clone() } else { format!("{}{}", names[i], superscript(a)) })
            .collect();
        if mono.is_empty() {
            out.push_str(&abs.render());
        } else if abs.is_one() {
            out.push_str(&mono);
        } else {
            out.push_str(&format!("{}{}", abs.render(), mono));
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    if let Trunc::Finite(n) = s.trunc {
        out.push_str(&format!(" + O({})", n + 1));
    }
    out
}

impl<C: Scalar> fmt::Display for Series<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_terms(self, &default_names(self.nvars)))
    }
}

impl<C: fmt::Debug> fmt::Debug for Series<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Series")
            .field("nvars", &self.nvars)
            .field("trunc", &self.trunc)
            .field("terms", &self.terms)
            .finish()
    }
}

// Operator forms panic on mismatched dimensions; use the `checked_*`
// methods for fallible arithmetic.
impl<C: Scalar> Add for &Series<C> {
    type Output = Series<C>;
    fn add(self, rhs: &Series<C>) -> Series<C> {
        self.checked_add(rhs).expect("series dimension mismatch")
    }
}

impl<C: Scalar> Sub for &Series<C> {
    type Output = Series<C>;
    fn sub(self, rhs: &Series<C>) -> Series<C> {
        self.checked_sub(rhs).expect("series dimension mismatch")
    }
}

impl<C: Scalar> Mul for &Series<C> {
    type Output = Series<C>;
    fn mul(self, rhs: &Series<C>) -> Series<C> {
        self.checked_mul(rhs).expect("series dimension mismatch")
    }
}

impl<C: Scalar> Neg for &Series<C> {
    type Output = Series<C>;
    fn neg(self) -> Series<C> {
        self.neg_ref()
    }
}
