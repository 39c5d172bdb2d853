//! Elementary transformations and their action on series and points.
//!
//! Variable indices are zero based in Rust; the JSON interchange form and
//! the compact labels use one-based indices.

use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::series::{Series, SeriesError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("blow-up requires distinct variables, got {0} twice")]
    SameVariables(usize),
    #[error("Tschirnhausen shift must vanish at the origin")]
    NonzeroShiftConstant,
    #[error("Tschirnhausen shift for x{var} must not depend on x{var}")]
    ShiftDependsOnVariable { var: usize },
    #[error("ramification degree must be at least 1")]
    ZeroRamification,
    #[error("shear on x{i} needs {expected} coefficients, got {got}")]
    ShearLength { i: usize, expected: usize, got: usize },
    #[error("variable {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("point has {got} coordinates, expected {expected}")]
    PointDimension { expected: usize, got: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

/// Blow-up parameter: a finite value or the point at infinity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Lambda<C> {
    Finite(C),
    Infinity,
}

impl<C: Scalar> fmt::Display for Lambda<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Finite(c) => f.write_str(&c.render()),
            Lambda::Infinity => f.write_str("inf"),
        }
    }
}

/// One of the four elementary maps `x = nu(x')`.
///
/// * `BlowUp { i, j, lambda }`: `x_i = x'_j (lambda + x'_i)`, other
///   coordinates fixed. The chart at infinity is stored as `BlowUp { j, i, 0 }`.
/// * `Tschirnhausen { i, h }`: `x_i = x'_i + h(x')` with `h` free of `x_i`.
/// * `Shear { i, c }`: `x_k = x'_k + c_k x'_i` for `k < i`.
/// * `Ramification { i, d, positive }`: `x_i = ±x'_i^d`.
#[derive(Clone, Debug, PartialEq)]
pub enum ElementaryTransform<C> {
    BlowUp { i: usize, j: usize, lambda: C },
    Tschirnhausen { i: usize, h: Series<C> },
    Shear { i: usize, c: Vec<C> },
    Ramification { i: usize, d: u32, positive: bool },
}

impl<C: Scalar> ElementaryTransform<C> {
    /// Blow-up chart; `Lambda::Infinity` is normalized to `BlowUp { j, i, 0 }`.
    pub fn blow_up(i: usize, j: usize, lambda: Lambda<C>) -> Result<Self, TransformError> {
        if i == j {
            return Err(TransformError::SameVariables(i));
        }
        Ok(match lambda {
            Lambda::Finite(lambda) => ElementaryTransform::BlowUp { i, j, lambda },
            Lambda::Infinity => ElementaryTransform::BlowUp { i: j, j: i, lambda: C::zero() },
        })
    }

    pub fn tschirnhausen(i: usize, h: Series<C>) -> Result<Self, TransformError> {
        if i >= h.nvars() {
            return Err(TransformError::VariableOutOfRange { index: i, nvars: h.nvars() });
        }
        if !h.constant_term().is_zero() {
            return Err(TransformError::NonzeroShiftConstant);
        }
        if h.depends_on(i) {
            return Err(TransformError::ShiftDependsOnVariable { var: i });
        }
        Ok(ElementaryTransform::Tschirnhausen { i, h })
    }

    pub fn shear(i: usize, c: Vec<C>) -> Result<Self, TransformError> {
        if c.len() != i {
            return Err(TransformError::ShearLength { i, expected: i, got: c.len() });
        }
        Ok(ElementaryTransform::Shear { i, c })
    }

    pub fn ramification(i: usize, d: u32, positive: bool) -> Result<Self, TransformError> {
        if d == 0 {
            return Err(TransformError::ZeroRamification);
        }
        Ok(ElementaryTransform::Ramification { i, d, positive })
    }

    fn max_var(&self) -> usize {
        match self {
            ElementaryTransform::BlowUp { i, j, .. } => (*i).max(*j),
            ElementaryTransform::Tschirnhausen { i, .. } => *i,
            ElementaryTransform::Shear { i, .. } => *i,
            ElementaryTransform::Ramification { i, .. } => *i,
        }
    }

    fn check_nvars(&self, nvars: usize) -> Result<(), TransformError> {
        if self.max_var() >= nvars {
            return Err(TransformError::VariableOutOfRange { index: self.max_var(), nvars });
        }
        if let ElementaryTransform::Tschirnhausen { h, .. } = self {
            if h.nvars() != nvars {
                return Err(SeriesError::DimensionMismatch { left: nvars, right: h.nvars() }.into());
            }
        }
        Ok(())
    }

    /// The variable one divides by to invert a blow-up chart.
    pub fn critical_variable(&self) -> Option<usize> {
        match self {
            ElementaryTransform::BlowUp { j, .. } => Some(*j),
            _ => None,
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self, ElementaryTransform::BlowUp { .. })
    }

    /// `F ∘ nu`, truncated at the bound of `F` (or of `h`, if smaller).
    pub fn apply(&self, f: &Series<C>) -> Result<Series<C>, TransformError> {
        let n = f.nvars();
        self.check_nvars(n)?;
        let out = match self {
            ElementaryTransform::BlowUp { i, j, lambda } => {
                let image = &Series::var(n, *j) * &(&Series::constant(n, lambda.clone()) + &Series::var(n, *i));
                f.substitute_var(*i, &image)?
            }
            ElementaryTransform::Tschirnhausen { i, h } => f.substitute_var(*i, &(&Series::var(n, *i) + h))?,
            ElementaryTransform::Shear { i, c } => {
                let xi = Series::var(n, *i);
                let mut g = f.clone();
                for (k, ck) in c.iter().enumerate() {
                    if !ck.is_zero() {
                        g = g.substitute_var(k, &(&Series::var(n, k) + &xi.scale(ck)))?;
                    }
                }
                g
            }
            ElementaryTransform::Ramification { i, d, positive } => {
                let sign = if *positive { C::one() } else { -C::one() };
                f.substitute_var(*i, &Series::var(n, *i).pow(*d).scale(&sign))?
            }
        };
        Ok(out)
    }

    /// `W * (F ∘ nu)` for a blow-up with critical variable `W`, else `F ∘ nu`.
    pub fn star_apply(&self, f: &Series<C>) -> Result<Series<C>, TransformError> {
        let g = self.apply(f)?;
        Ok(match self.critical_variable() {
            Some(w) => &g * &Series::var(f.nvars(), w),
            None => g,
        })
    }

    /// Image `nu(p)`.
    pub fn map_point(&self, p: &[C]) -> Result<Vec<C>, TransformError> {
        self.check_nvars(p.len())?;
        let mut x = p.to_vec();
        match self {
            ElementaryTransform::BlowUp { i, j, lambda } => {
                x[*i] = p[*j].clone() * (lambda.clone() + p[*i].clone());
            }
            ElementaryTransform::Tschirnhausen { i, h } => {
                x[*i] = p[*i].clone() + h.eval(p)?;
            }
            ElementaryTransform::Shear { i, c } => {
                for (k, ck) in c.iter().enumerate() {
                    x[k] = p[k].clone() + ck.clone() * p[*i].clone();
                }
            }
            ElementaryTransform::Ramification { i, d, positive } => {
                let v = num_traits::pow(p[*i].clone(), *d as usize);
                x[*i] = if *positive { v } else { -v };
            }
        }
        Ok(x)
    }

    /// All preimages of `x` under `nu` representable in `C`. Empty when
    /// `x` is on the exceptional locus of a blow-up or outside the image.
    pub fn preimages(&self, x: &[C]) -> Result<Vec<Vec<C>>, TransformError> {
        self.check_nvars(x.len())?;
        let mut p = x.to_vec();
        match self {
            ElementaryTransform::BlowUp { i, j, lambda } => {
                if x[*j].is_zero() {
                    return Ok(vec![]);
                }
                p[*i] = x[*i].clone() / x[*j].clone() - lambda.clone();
                Ok(vec![p])
            }
            ElementaryTransform::Tschirnhausen { i, h } => {
                // h is free of x_i, so it can be evaluated at x directly.
                p[*i] = x[*i].clone() - h.eval(x)?;
                Ok(vec![p])
            }
            ElementaryTransform::Shear { i, c } => {
                for (k, ck) in c.iter().enumerate() {
                    p[k] = x[k].clone() - ck.clone() * x[*i].clone();
                }
                Ok(vec![p])
            }
            ElementaryTransform::Ramification { i, d, positive } => {
                let v = if *positive { x[*i].clone() } else { -x[*i].clone() };
                let Some(root) = v.exact_root(*d) else {
                    return Ok(vec![]);
                };
                let mut out = vec![];
                if d % 2 == 0 && !root.is_zero() {
                    let mut q = p.clone();
                    q[*i] = -root.clone();
                    p[*i] = root;
                    out.push(p);
                    out.push(q);
                } else {
                    p[*i] = root;
                    out.push(p);
                }
                Ok(out)
            }
        }
    }

    pub fn map_coeffs<D: Scalar>(&self, f: impl Fn(&C) -> D + Copy) -> ElementaryTransform<D> {
        match self {
            ElementaryTransform::BlowUp { i, j, lambda } => ElementaryTransform::BlowUp { i: *i, j: *j, lambda: f(lambda) },
            ElementaryTransform::Tschirnhausen { i, h } => ElementaryTransform::Tschirnhausen { i: *i, h: h.map_coeffs(f) },
            ElementaryTransform::Shear { i, c } => ElementaryTransform::Shear { i: *i, c: c.iter().map(f).collect() },
            ElementaryTransform::Ramification { i, d, positive } => {
                ElementaryTransform::Ramification { i: *i, d: *d, positive: *positive }
            }
        }
    }
}

impl<C: Scalar> fmt::Display for ElementaryTransform<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElementaryTransform::BlowUp { i, j, lambda } => {
                write!(f, "blowup({},{};{})", i + 1, j + 1, lambda.render())
            }
            ElementaryTransform::Tschirnhausen { i, h } => write!(f, "tsch(x{}+{})", i + 1, h),
            ElementaryTransform::Shear { i, c } => {
                let cs: Vec<String> = c.iter().map(Scalar::render).collect();
                write!(f, "shear({};[{}])", i + 1, cs.join(","))
            }
            ElementaryTransform::Ramification { i, d, positive } => {
                write!(f, "ram({};{},{})", i + 1, d, if *positive { '+' } else { '-' })
            }
        }
    }
}

impl<C: Scalar> fmt::Display for TransformPath<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.steps.is_empty() {
            return f.write_str("id");
        }
        let labels: Vec<String> = self.steps.iter().map(ToString::to_string).collect();
        f.write_str(&labels.join(" ∘ "))
    }
}

/// Composition `nu_1 ∘ ... ∘ nu_k` of elementary transformations.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformPath<C> {
    pub nvars: usize,
    pub steps: Vec<ElementaryTransform<C>>,
}

impl<C: Scalar> TransformPath<C> {
    pub fn new(nvars: usize) -> Self {
        TransformPath { nvars, steps: vec![] }
    }

    pub fn from_steps(nvars: usize, steps: Vec<ElementaryTransform<C>>) -> Result<Self, TransformError> {
        for s in &steps {
            s.check_nvars(nvars)?;
        }
        Ok(TransformPath { nvars, steps })
    }

    pub fn push(&mut self, step: ElementaryTransform<C>) {
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `F ∘ nu_1 ∘ ... ∘ nu_k`.
    pub fn compose(&self, f: &Series<C>) -> Result<Series<C>, TransformError> {
        self.steps.iter().try_fold(f.clone(), |acc, s| s.apply(&acc))
    }

    /// `rho(p) = nu_1(nu_2(... nu_k(p)))`.
    pub fn evaluate_at(&self, p: &[C]) -> Result<Vec<C>, TransformError> {
        if p.len() != self.nvars {
            return Err(TransformError::PointDimension { expected: self.nvars, got: p.len() });
        }
        self.steps.iter().rev().try_fold(p.to_vec(), |acc, s| s.map_point(&acc))
    }

    /// Every representable `q` with `rho(q) = x`.
    pub fn preimages(&self, x: &[C]) -> Result<Vec<Vec<C>>, TransformError> {
        let mut current = vec![x.to_vec()];
        for s in &self.steps {
            let mut next = vec![];
            for p in &current {
                next.extend(s.preimages(p)?);
            }
            current = next;
        }
        Ok(current)
    }

    pub fn map_coeffs<D: Scalar>(&self, f: impl Fn(&C) -> D + Copy) -> TransformPath<D> {
        TransformPath { nvars: self.nvars, steps: self.steps.iter().map(|s| s.map_coeffs(f)).collect() }
    }
}

/// Free-function form of [`ElementaryTransform::apply`].
pub fn apply<C: Scalar>(nu: &ElementaryTransform<C>, f: &Series<C>) -> Result<Series<C>, TransformError> {
    nu.apply(f)
}

/// Free-function form of [`ElementaryTransform::star_apply`].
pub fn star_apply<C: Scalar>(nu: &ElementaryTransform<C>, f: &Series<C>) -> Result<Series<C>, TransformError> {
    nu.star_apply(f)
}

pub fn compose_path<C: Scalar>(path: &TransformPath<C>, f: &Series<C>) -> Result<Series<C>, TransformError> {
    path.compose(f)
}

pub fn evaluate_path_at<C: Scalar>(path: &TransformPath<C>, p: &[C]) -> Result<Vec<C>, TransformError> {
    path.evaluate_at(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    type Q = Series<Rational>;
    type T = ElementaryTransform<Rational>;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn poly(nvars: usize, terms: &[(&[u32], i64)]) -> Q {
        Q::from_int_terms(nvars, terms)
    }

    fn y2_minus_x2() -> Q {
        poly(2, &[(&[0, 2], 1), (&[2, 0], -1)])
    }

    #[test]
    fn apply_examples() {
        let tau = T::tschirnhausen(1, Q::var(2, 0)).unwrap();
        assert_eq!(tau.apply(&poly(2, &[(&[0, 1], 1), (&[1, 0], -1)])).unwrap(), Q::var(2, 1));

        let pi = T::blow_up(1, 0, Lambda::Finite(q(0, 1))).unwrap();
        assert_eq!(pi.apply(&y2_minus_x2()).unwrap(), poly(2, &[(&[2, 2], 1), (&[2, 0], -1)]));

        let ram = T::ramification(0, 2, true).unwrap();
        assert_eq!(ram.apply(&Q::var(1, 0)).unwrap(), poly(1, &[(&[2], 1)]));

        let shear = T::shear(1, vec![q(1, 1)]).unwrap();
        assert_eq!(
            shear.apply(&poly(2, &[(&[1, 1], 1)])).unwrap(),
            poly(2, &[(&[1, 1], 1), (&[0, 2], 1)])
        );
    }

    #[test]
    fn critical_variables() {
        assert_eq!(T::blow_up(1, 0, Lambda::Finite(q(5, 1))).unwrap().critical_variable(), Some(0));
        let inf = T::blow_up(1, 0, Lambda::Infinity).unwrap();
        assert_eq!(inf, T::BlowUp { i: 0, j: 1, lambda: q(0, 1) });
        assert_eq!(inf.critical_variable(), Some(1));
        assert_eq!(T::tschirnhausen(1, Q::var(2, 0)).unwrap().critical_variable(), None);
    }

    #[test]
    fn star_apply_examples() {
        let pi = T::blow_up(1, 0, Lambda::Finite(q(0, 1))).unwrap();
        assert_eq!(pi.star_apply(&y2_minus_x2()).unwrap(), poly(2, &[(&[3, 2], 1), (&[3, 0], -1)]));
        let ram = T::ramification(0, 2, true).unwrap();
        assert_eq!(ram.star_apply(&Q::var(1, 0)).unwrap(), poly(1, &[(&[2], 1)]));
    }

    #[test]
    fn compose_examples() {
        let f = poly(2, &[(&[0, 2], 1), (&[3, 0], -1)]);
        assert_eq!(TransformPath::new(2).compose(&f).unwrap(), f);

        let x = Q::var(2, 0);
        let pair = TransformPath::from_steps(
            2,
            vec![T::tschirnhausen(1, x.clone()).unwrap(), T::tschirnhausen(1, -&x).unwrap()],
        )
        .unwrap();
        assert_eq!(pair.compose(&Q::var(2, 1)).unwrap(), Q::var(2, 1));

        // Y^2 - X^3 -> Y^2 - X^6 -> X^2 Y^2 - X^6.
        let path = TransformPath::from_steps(
            2,
            vec![T::ramification(0, 2, true).unwrap(), T::blow_up(1, 0, Lambda::Finite(q(0, 1))).unwrap()],
        )
        .unwrap();
        assert_eq!(path.compose(&f).unwrap(), poly(2, &[(&[2, 2], 1), (&[6, 0], -1)]));
    }

    #[test]
    fn evaluate_examples() {
        let path =
            TransformPath::from_steps(2, vec![T::blow_up(1, 0, Lambda::Finite(q(1, 1))).unwrap()]).unwrap();
        assert_eq!(path.evaluate_at(&[q(1, 2), q(1, 4)]).unwrap(), vec![q(1, 2), q(5, 8)]);
        let p = vec![q(1, 3), q(-2, 7)];
        assert_eq!(TransformPath::new(2).evaluate_at(&p).unwrap(), p);
        let ram = TransformPath::from_steps(2, vec![T::ramification(0, 3, false).unwrap()]).unwrap();
        assert_eq!(ram.evaluate_at(&[q(2, 1), q(1, 1)]).unwrap(), vec![q(-8, 1), q(1, 1)]);
    }

    #[test]
    fn preimages_invert_points() {
        let path = TransformPath::from_steps(
            2,
            vec![T::ramification(0, 2, true).unwrap(), T::blow_up(1, 0, Lambda::Finite(q(1, 2))).unwrap()],
        )
        .unwrap();
        let x = vec![q(1, 4), q(1, 8)];
        let pre = path.preimages(&x).unwrap();
        assert_eq!(pre.len(), 2);
        for p in pre {
            assert_eq!(path.evaluate_at(&p).unwrap(), x);
        }
        assert!(path.preimages(&[q(-1, 4), q(0, 1)]).unwrap().is_empty());
    }

    #[test]
    fn constructor_checks() {
        assert_eq!(T::blow_up(1, 1, Lambda::Infinity).unwrap_err(), TransformError::SameVariables(1));
        assert_eq!(
            T::tschirnhausen(1, poly(2, &[(&[0, 0], 1), (&[1, 0], 1)])).unwrap_err(),
            TransformError::NonzeroShiftConstant
        );
        assert!(T::tschirnhausen(1, Q::var(2, 1)).is_err());
        assert_eq!(T::ramification(0, 0, true).unwrap_err(), TransformError::ZeroRamification);
        assert!(T::shear(2, vec![q(1, 1)]).is_err());
        assert!(T::ramification(3, 2, true).unwrap().apply(&Q::var(2, 0)).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(T::blow_up(1, 0, Lambda::Finite(q(3, 2))).unwrap().to_string(), "blowup(2,1;3/2)");
        assert_eq!(T::ramification(0, 2, false).unwrap().to_string(), "ram(1;2,-)");
        assert_eq!(T::tschirnhausen(1, Q::var(2, 0)).unwrap().to_string(), "tsch(x2+x)");
    }
}
