//! Exact treatment of the set `{y > x}` on the unit square: the critical
//! equation of the cutting function on the vertical fibers, its closed-form
//! roots, and a certificate that both roots stay away from a band around
//! `y = 0` for small `x`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::fibergeom::{build_phi, critical_set_equations, FibergeomError, ManifoldSpec};
use crate::scalar::{Rational, Scalar};
use crate::series::{Exponent, Series};

/// `a + b √2` with rational `a`, `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QSqrt2 {
    pub a: Rational,
    pub b: Rational,
}

impl QSqrt2 {
    pub fn new(a: Rational, b: Rational) -> Self {
        QSqrt2 { a, b }
    }

    pub fn rational(a: Rational) -> Self {
        QSqrt2 { a, b: Rational::zero() }
    }

    /// `b √2`.
    pub fn sqrt2_times(b: Rational) -> Self {
        QSqrt2 { a: Rational::zero(), b }
    }

    pub fn conjugate(&self) -> Self {
        QSqrt2 { a: self.a.clone(), b: -self.b.clone() }
    }

    /// `a^2 - 2 b^2`.
    pub fn norm(&self) -> Rational {
        &self.a * &self.a - Rational::from_ratio(2, 1) * &self.b * &self.b
    }

    /// Exact sign, comparing `a^2` with `2 b^2` when `a` and `b` disagree.
    pub fn signum(&self) -> Ordering {
        let sa = self.a.cmp(&Rational::zero());
        let sb = self.b.cmp(&Rational::zero());
        if sa == sb || sb == Ordering::Equal {
            return sa;
        }
        if sa == Ordering::Equal {
            return sb;
        }
        // Opposite signs: the larger magnitude wins.
        match (&self.a * &self.a).cmp(&(Rational::from_ratio(2, 1) * &self.b * &self.b)) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => Ordering::Equal,
        }
    }

    pub fn abs(&self) -> Self {
        if self.signum() == Ordering::Less {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.a.to_f64() + self.b.to_f64() * std::f64::consts::SQRT_2
    }
}

impl Add for QSqrt2 {
    type Output = QSqrt2;
    fn add(self, o: QSqrt2) -> QSqrt2 {
        QSqrt2 { a: self.a + o.a, b: self.b + o.b }
    }
}

impl Sub for QSqrt2 {
    type Output = QSqrt2;
    fn sub(self, o: QSqrt2) -> QSqrt2 {
        QSqrt2 { a: self.a - o.a, b: self.b - o.b }
    }
}

impl Mul for QSqrt2 {
    type Output = QSqrt2;
    fn mul(self, o: QSqrt2) -> QSqrt2 {
        let two = Rational::from_ratio(2, 1);
        QSqrt2 { a: &self.a * &o.a + two * &self.b * &o.b, b: &self.a * &o.b + &self.b * &o.a }
    }
}

impl Div for QSqrt2 {
    type Output = QSqrt2;
    fn div(self, o: QSqrt2) -> QSqrt2 {
        let n = o.norm();
        assert!(!n.is_zero(), "division by zero in Q(√2)");
        let p = self * o.conjugate();
        QSqrt2 { a: p.a / n.clone(), b: p.b / n }
    }
}

impl Neg for QSqrt2 {
    type Output = QSqrt2;
    fn neg(self) -> QSqrt2 {
        QSqrt2 { a: -self.a, b: -self.b }
    }
}

fn over(num: &str, den: &BigInt) -> String {
    if den.is_one() {
        num.to_string()
    } else {
        format!("{num}/{den}")
    }
}

impl fmt::Display for QSqrt2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let surd = |b: &Rational| {
            let n = b.numer().abs();
            let head = if n.is_one() { "√2".to_string() } else { format!("{n}√2") };
            over(&head, b.denom())
        };
        match (self.a.is_zero(), self.b.is_zero()) {
            (_, true) => f.write_str(&self.a.render()),
            (true, false) => {
                let sign = if self.b.is_negative() { "−" } else { "" };
                write!(f, "{sign}{}", surd(&self.b))
            }
            (false, false) => {
                let op = if self.b.is_negative() { "−" } else { "+" };
                write!(f, "{} {op} {}", self.a.render(), surd(&self.b))
            }
        }
    }
}

/// Polynomial in one variable with `Q(√2)` coefficients, lowest degree first.
fn eval_linear(coeffs: &[QSqrt2], x: &QSqrt2) -> QSqrt2 {
    coeffs.iter().rev().fold(QSqrt2::rational(Rational::zero()), |acc, c| acc * x.clone() + c.clone())
}

/// `y = c(x) ± s √D(x)` for a quadratic in `y` with constant leading
/// coefficient.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticRoots {
    /// `-b / 2a`, a polynomial in `x`.
    pub center: Series<Rational>,
    /// Rational factor in front of the radical.
    pub scale: Rational,
    /// Radicand with square content removed.
    pub radicand: Series<Rational>,
}

impl QuadraticRoots {
    /// Renders `y = x/3 ± √(x²+3)/3` style formulas.
    pub fn formula(&self) -> String {
        let compact = |s: &Series<Rational>| s.to_string().replace(' ', "");
        let center = over_poly(&self.center);
        let n = self.scale.numer();
        let head = if n.is_one() { format!("√({})", compact(&self.radicand)) } else { format!("{n}√({})", compact(&self.radicand)) };
        let radical = over(&head, self.scale.denom());
        if self.center.is_zero() {
            format!("y = ±{radical}")
        } else {
            format!("y = {center} ± {radical}")
        }
    }

    pub fn eval_f64(&self, x: f64) -> (f64, f64) {
        let c = self.center.to_f64_poly().eval(&[x, 0.0]);
        let r = self.scale.to_f64() * self.radicand.to_f64_poly().eval(&[x, 0.0]).sqrt();
        (c + r, c - r)
    }
}

/// `p/q` for a polynomial whose coefficients share the denominator `q`.
fn over_poly(s: &Series<Rational>) -> String {
    let den = s.terms().fold(BigInt::one(), |acc, (_, c)| acc.lcm(c.denom()));
    let scaled = s.scale(&Rational::from_integer(den.clone()));
    let body = scaled.to_string();
    let body = if scaled.num_terms() > 1 && !den.is_one() { format!("({body})") } else { body };
    over(&body, &den)
}

fn bigint_sqrt_factor(n: &BigInt) -> BigInt {
    // Square part of n from trial division by small primes; a factor left
    // over just stays under the radical.
    let mut n = n.abs();
    let mut s = BigInt::one();
    let mut p = BigInt::from(2);
    while &p * &p <= n && p < BigInt::from(1 << 16) {
        let p2 = &p * &p;
        while (&n % &p2).is_zero() {
            n /= &p2;
            s *= &p;
        }
        p += 1;
    }
    s
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AppendixError {
    #[error("critical equation is not a quadratic in y with constant leading coefficient: {0}")]
    NotQuadratic(String),
    #[error("expected a single critical equation, found {0}")]
    EquationCount(usize),
    #[error(transparent)]
    Fibergeom(#[from] FibergeomError),
}

/// Coefficients `(a, b(x), c(x))` of `a y^2 + b y + c` in two variables.
fn quadratic_in_y(p: &Series<Rational>) -> Result<(Rational, Series<Rational>, Series<Rational>), AppendixError> {
    let mut a = Series::zero(2);
    let mut b = Series::zero(2);
    let mut c = Series::zero(2);
    for (e, k) in p.terms() {
        let m = Series::monomial(Exponent::new(vec![e[0], 0]), k.clone());
        match e[1] {
            0 => c = &c + &m,
            1 => b = &b + &m,
            2 => a = &a + &m,
            _ => return Err(AppendixError::NotQuadratic(p.to_string())),
        }
    }
    if a.max_degree().unwrap_or(1) != 0 {
        return Err(AppendixError::NotQuadratic(p.to_string()));
    }
    Ok((a.constant_term(), b, c))
}

/// Closed-form roots of `a y^2 + b(x) y + c(x)`.
pub fn solve_quadratic(p: &Series<Rational>) -> Result<QuadraticRoots, AppendixError> {
    let (a, b, c) = quadratic_in_y(p)?;
    let two_a = Rational::from_ratio(2, 1) * &a;
    let center = b.scale(&(-Rational::one() / two_a.clone()));
    let disc = &(&b * &b) - &c.scale(&(Rational::from_ratio(4, 1) * &a));
    // Pull the largest rational square out of the content of the discriminant.
    let den = disc.terms().fold(BigInt::one(), |acc, (_, k)| acc.lcm(k.denom()));
    let int_disc = disc.scale(&Rational::from_integer(&den * &den));
    let content = int_disc.terms().fold(BigInt::zero(), |acc, (_, k)| acc.gcd(k.numer()));
    let s = bigint_sqrt_factor(&content);
    let radicand = int_disc.scale(&Rational::new(1.into(), &s * &s));
    let scale = Rational::new(s, den) / two_a.abs();
    Ok(QuadraticRoots { center, scale, radicand })
}

/// Outcome of the exact certification.
#[derive(Clone, Debug)]
pub struct AppendixReport {
    pub phi: Series<Rational>,
    pub equation: Series<Rational>,
    pub roots: QuadraticRoots,
    /// `3 (y - c)^2 - 3 s^2 D = equation` holds as a polynomial identity.
    pub identity_holds: bool,
    /// Band half-width around `y = 0` avoided by both roots.
    pub band: QSqrt2,
    /// Largest `epsilon` for which the band is avoided on `|x| < epsilon`.
    pub epsilon: QSqrt2,
    /// Every point of the critical set over `|x| < epsilon` has `|y| > band`.
    pub certified: bool,
    /// The bound fails at `x = ±epsilon`, so `epsilon` cannot be enlarged.
    pub sharp: bool,
}

impl AppendixReport {
    pub fn verdict(&self) -> String {
        format!("A ∩ Δ_{{({}, {})}} = ∅: {}", self.epsilon, self.band, self.certified)
    }

    pub fn lines(&self) -> Vec<String> {
        vec![
            "M = {(x, y) in Δ_(1,1) : y > x}, projected onto x".into(),
            format!("phi = {}", self.phi),
            format!("critical equation: {} = 0", self.equation),
            format!("roots: {}", self.roots.formula()),
            format!("factorization identity: {}", self.identity_holds),
            format!("band: |y| > {} for |x| < {} (sharp: {})", self.band, self.epsilon, self.sharp),
            self.verdict(),
        ]
    }
}

/// Runs the whole chain exactly: builds the cutting function, derives the
/// critical equation, solves it and certifies the band `|y| > √2/3`.
pub fn appendix_demo() -> Result<AppendixReport, AppendixError> {
    let one = Rational::one();
    let diag = &Series::var(2, 1) - &Series::var(2, 0);
    let m = ManifoldSpec::new(1, vec![one.clone(), one.clone()], vec![], vec![diag])?;
    let phi = build_phi(&m);
    let eqs = critical_set_equations(&m)?;
    if eqs.len() != 1 {
        return Err(AppendixError::EquationCount(eqs.len()));
    }
    let equation = eqs.into_iter().next().expect("one equation");
    let roots = solve_quadratic(&equation)?;
    let (a, b, c) = quadratic_in_y(&equation)?;

    // a ((y - center)^2 - scale^2 D) must reproduce the equation.
    let y = Series::var(2, 1);
    let shifted = &y - &roots.center;
    let rebuilt = (&(&shifted * &shifted) - &roots.radicand.scale(&(&roots.scale * &roots.scale))).scale(&a);
    let identity_holds = rebuilt == equation;

    // With a > 0 and roots of opposite signs (c(0) < 0), both roots avoid
    // [-beta, beta] exactly where p(beta) < 0 and p(-beta) < 0. Both are
    // linear in x with coefficients in Q(√2).
    let band = QSqrt2::sqrt2_times(Rational::from_ratio(1, 3));
    let coeffs_in_x = |s: &Series<Rational>| -> Result<Vec<Rational>, AppendixError> {
        if s.max_degree().unwrap_or(0) > 1 {
            return Err(AppendixError::NotQuadratic(equation.to_string()));
        }
        Ok(vec![s.constant_term(), s.coeff(&Exponent::new(vec![1, 0]))])
    };
    let bq = coeffs_in_x(&b)?;
    let cq = coeffs_in_x(&c)?;
    let at = |beta: &QSqrt2| -> Vec<QSqrt2> {
        let q = |r: &Rational| QSqrt2::rational(r.clone());
        let a2 = q(&a) * beta.clone() * beta.clone();
        vec![a2 + q(&bq[0]) * beta.clone() + q(&cq[0]), q(&bq[1]) * beta.clone() + q(&cq[1])]
    };
    let sides = [at(&band), at(&-band.clone())];
    // Each side is l0 + l1 x; its zero bounds the admissible |x|.
    let mut epsilon: Option<QSqrt2> = None;
    for side in &sides {
        if side[1].signum() != Ordering::Equal {
            let zero = (-side[0].clone() / side[1].clone()).abs();
            epsilon = Some(match epsilon {
                Some(e) if (e.clone() - zero.clone()).signum() != Ordering::Greater => e,
                _ => zero,
            });
        }
    }
    let epsilon = epsilon.ok_or_else(|| AppendixError::NotQuadratic(equation.to_string()))?;
    let neg_eps = -epsilon.clone();
    let a_positive = a.is_positive();
    let opposite = c.constant_term().is_negative();
    // A linear function is negative on (-eps, eps) iff it is <= 0 at both
    // endpoints and not zero at both.
    let negative_on = |side: &[QSqrt2]| {
        let l = eval_linear(side, &neg_eps).signum();
        let r = eval_linear(side, &epsilon).signum();
        l != Ordering::Greater && r != Ordering::Greater && !(l == Ordering::Equal && r == Ordering::Equal)
    };
    let certified = identity_holds && a_positive && opposite && sides.iter().all(|s| negative_on(s));
    let sharp = sides.iter().any(|s| {
        eval_linear(s, &epsilon).signum() == Ordering::Equal || eval_linear(s, &neg_eps).signum() == Ordering::Equal
    });
    Ok(AppendixReport { phi, equation, roots, identity_holds, band, epsilon, certified, sharp })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    #[test]
    fn field_arithmetic() {
        let s = QSqrt2::sqrt2_times(q(1, 1));
        assert_eq!(s.clone() * s.clone(), QSqrt2::rational(q(2, 1)));
        assert_eq!(QSqrt2::rational(q(1, 1)) / (s.clone() * QSqrt2::rational(q(2, 1))), QSqrt2::sqrt2_times(q(1, 4)));
        assert_eq!(QSqrt2::new(q(3, 2), q(-1, 1)).signum(), Ordering::Greater);
        assert_eq!(QSqrt2::new(q(1, 1), q(-1, 1)).signum(), Ordering::Less);
        assert_eq!(QSqrt2::new(q(0, 1), q(0, 1)).signum(), Ordering::Equal);
        assert_eq!(QSqrt2::sqrt2_times(q(1, 4)).to_string(), "√2/4");
        assert_eq!(QSqrt2::sqrt2_times(q(-2, 3)).to_string(), "−2√2/3");
        assert_eq!(QSqrt2::new(q(1, 2), q(3, 1)).to_string(), "1/2 + 3√2");
    }

    #[test]
    fn quadratic_formula() {
        let p = Series::from_int_terms(2, &[(&[0, 2], 3), (&[1, 1], -2), (&[0, 0], -1)]);
        let r = solve_quadratic(&p).unwrap();
        assert_eq!(r.formula(), "y = x/3 ± √(x²+3)/3");
        let p = Series::from_int_terms(2, &[(&[0, 2], 1), (&[0, 0], -8)]);
        assert_eq!(solve_quadratic(&p).unwrap().formula(), "y = ±2√(2)");
        let cubic = Series::from_int_terms(2, &[(&[0, 3], 1)]);
        assert!(solve_quadratic(&cubic).is_err());
    }

    #[test]
    fn demo_report() {
        let r = appendix_demo().unwrap();
        assert_eq!(r.equation.to_string(), "3y² − 2xy − 1");
        assert_eq!(r.roots.formula(), "y = x/3 ± √(x²+3)/3");
        assert!(r.identity_holds);
        assert_eq!(r.epsilon, QSqrt2::sqrt2_times(q(1, 4)));
        assert!(r.certified && r.sharp);
        assert_eq!(r.verdict(), "A ∩ Δ_{(√2/4, √2/3)} = ∅: true");
        // Numeric spot checks agree with the certificate.
        for k in -99..=99 {
            let x = r.epsilon.to_f64() * f64::from(k) / 100.0;
            let (p, m) = r.roots.eval_f64(x);
            assert!(p.abs() > r.band.to_f64() && m.abs() > r.band.to_f64());
        }
        let (_, m) = r.roots.eval_f64(r.epsilon.to_f64() * 1.01);
        assert!(m.abs() < r.band.to_f64());
    }
}
