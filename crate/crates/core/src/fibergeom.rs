//! Frames of manifolds cut out by polynomial equations and strict
//! inequalities on a polydisk, and the fiber-cutting function.
//!
//! Gradients are exact (symbolic differentiation of the defining
//! polynomials); the linear algebra at a point is done in `f64`. The critical
//! set of the cutting function is produced symbolically with a
//! denominator-free orthogonalization, so its equations stay polynomial.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::series::{F64Poly, Series, SeriesError};

/// Relative singular-value threshold used for every rank decision.
pub const RANK_TOL: f64 = 1e-9;

/// Largest residual of an equation accepted at a queried point.
pub const EQ_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FibergeomError {
    #[error("point {0:?} is not on the manifold")]
    NotOnManifold(Vec<f64>),
    #[error("equation gradients have rank {rank} < {expected} at {point:?}")]
    RankDeficient { point: Vec<f64>, rank: usize, expected: usize },
    #[error("symbolic frame degenerates identically: {0}")]
    FrameDegenerate(String),
    #[error("projection rank is not constant on the samples (ranks {ranks:?}); stratify with rank_at first")]
    StratifyFirst { ranks: Vec<usize> },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid manifold: {0}")]
    Invalid(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

type Result<T> = std::result::Result<T, FibergeomError>;

/// `{z in Delta_r : f_1(z) = ... = f_m(z) = 0, g_1(z) > 0, ..., g_q(z) > 0}`
/// in `n + k` variables, projected onto the first `split_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldSpec<C> {
    pub nvars: usize,
    pub split_n: usize,
    pub polyradius: Vec<C>,
    pub eqs: Vec<Series<C>>,
    pub ineqs: Vec<Series<C>>,
}

impl<C: Scalar> ManifoldSpec<C> {
    pub fn new(split_n: usize, polyradius: Vec<C>, eqs: Vec<Series<C>>, ineqs: Vec<Series<C>>) -> Result<Self> {
        let nvars = polyradius.len();
        if split_n > nvars {
            return Err(FibergeomError::Invalid(format!("split {split_n} exceeds {nvars} variables")));
        }
        if polyradius.iter().any(|r| !r.is_positive()) {
            return Err(FibergeomError::Invalid("radii must be positive".into()));
        }
        if eqs.len() > nvars {
            return Err(FibergeomError::Invalid("more equations than variables".into()));
        }
        for s in eqs.iter().chain(&ineqs) {
            if s.nvars() != nvars {
                return Err(FibergeomError::Invalid("series and polyradius disagree on the number of variables".into()));
            }
            if !s.is_exact() {
                return Err(FibergeomError::Invalid("defining functions must be polynomials".into()));
            }
        }
        Ok(ManifoldSpec { nvars, split_n, polyradius, eqs, ineqs })
    }

    /// Dimension when the equation gradients are independent.
    pub fn dim(&self) -> usize {
        self.nvars - self.eqs.len()
    }

    pub fn fiber_nvars(&self) -> usize {
        self.nvars - self.split_n
    }

    /// The family of restrictions `{(r', z) : 0 < r'_i < r_i, z in M ∩ Delta_r'}`
    /// in `2(n + k)` variables ordered `(r', x, y)`, projected onto `(r', x)`.
    /// It always sits in a butterfly shape since `|y_i| < t'_i`.
    pub fn restriction_family(&self) -> Result<ManifoldSpec<C>> {
        let n = self.nvars;
        let total = 2 * n;
        let shift = |s: &Series<C>| (0..n).fold(s.clone(), |acc, _| acc.insert_var(0));
        let mut ineqs = vec![];
        for (i, r) in self.polyradius.iter().enumerate() {
            let rp = Series::var(total, i);
            let z = Series::var(total, n + i);
            ineqs.push(rp.clone());
            ineqs.push(&Series::constant(total, r.clone()) - &rp);
            ineqs.push(&(&rp * &rp) - &(&z * &z));
        }
        ineqs.extend(self.ineqs.iter().map(shift));
        let mut polyradius = self.polyradius.clone();
        polyradius.extend(self.polyradius.iter().cloned());
        ManifoldSpec::new(n + self.split_n, polyradius, self.eqs.iter().map(shift).collect(), ineqs)
    }
}

/// `f64` view of a manifold with precomputed gradients.
struct Numeric {
    nvars: usize,
    split: usize,
    radius: Vec<f64>,
    eqs: Vec<F64Poly>,
    grads: Vec<Vec<F64Poly>>,
    ineqs: Vec<F64Poly>,
}

impl Numeric {
    fn new<C: Scalar>(m: &ManifoldSpec<C>) -> Result<Self> {
        let grads = m
            .eqs
            .iter()
            .map(|f| (0..m.nvars).map(|v| Ok(f.derivative(v)?.to_f64_poly())).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(Numeric {
            nvars: m.nvars,
            split: m.split_n,
            radius: m.polyradius.iter().map(Scalar::to_f64).collect(),
            eqs: m.eqs.iter().map(Series::to_f64_poly).collect(),
            grads,
            ineqs: m.ineqs.iter().map(Series::to_f64_poly).collect(),
        })
    }

    fn dim(&self) -> usize {
        self.nvars - self.eqs.len()
    }

    fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.eqs.len(), self.nvars, |i, j| self.grads[i][j].eval(z))
    }

    /// Membership with equations relaxed to `|f| <= tol * (1 + |grad f|)`.
    fn contains(&self, z: &[f64], tol: f64) -> bool {
        z.iter().zip(&self.radius).all(|(x, r)| x.abs() < *r)
            && self.ineqs.iter().all(|g| g.eval(z) > 0.0)
            && self.eqs.iter().zip(&self.grads).all(|(f, grad)| {
                let norm = grad.iter().map(|d| d.eval(z).powi(2)).sum::<f64>().sqrt();
                f.eval(z).abs() <= tol * (1.0 + norm)
            })
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.nvars || !self.contains(z, EQ_TOL) {
            return Err(FibergeomError::NotOnManifold(z.to_vec()));
        }
        Ok(())
    }

    /// Gram-Schmidt on the gradients followed by the unit vectors; the unit
    /// vectors that survive span the tangent space.
    fn tangent(&self, z: &[f64]) -> Result<Vec<DVector<f64>>> {
        self.check_point(z)?;
        let jac = self.jacobian(z);
        let rank = numeric_rank(&jac, None);
        if rank < self.eqs.len() {
            return Err(FibergeomError::RankDeficient { point: z.to_vec(), rank, expected: self.eqs.len() });
        }
        let mut basis: Vec<DVector<f64>> = vec![];
        for row in jac.row_iter() {
            let w = residual(&row.transpose(), &basis);
            basis.push(w.normalize());
        }
        let mut tangent = vec![];
        for k in 0..self.nvars {
            if tangent.len() == self.dim() {
                break;
            }
            let w = residual(&DVector::from_fn(self.nvars, |i, _| f64::from(u8::from(i == k))), &basis);
            if w.norm() > 1e-6 {
                let u = w.normalize();
                basis.push(u.clone());
                tangent.push(u);
            }
        }
        Ok(tangent)
    }

    fn frame(&self, z: &[f64]) -> Result<FrameResult> {
        let tangent = self.tangent(z)?;
        let d = tangent.len();
        let n = self.split;
        let (projected, fiber) = if d == 0 {
            (vec![], vec![])
        } else {
            let t = DMatrix::from_columns(&tangent);
            // Pad to at least d rows so the SVD returns a full right basis.
            let rows = n.max(d);
            let p = DMatrix::from_fn(rows, d, |i, j| if i < n { t[(i, j)] } else { 0.0 });
            let svd = p.svd(false, true);
            let vt = svd.v_t.expect("requested");
            let mut order: Vec<usize> = (0..d).collect();
            order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
            let l = order.iter().filter(|&&i| svd.singular_values[i] > RANK_TOL).count();
            let a: Vec<DVector<f64>> = order.iter().map(|&i| &t * vt.row(i).transpose()).collect();

            let mut projected: Vec<DVector<f64>> = vec![];
            for ak in &a[..l] {
                let w = subtract_projected(ak, &projected, n);
                let norm = project(&w, n).norm();
                projected.push(w / norm);
            }
            let mut fiber: Vec<DVector<f64>> = vec![];
            for ak in &a[l..] {
                let b = subtract_projected(ak, &projected, n);
                let w = residual(&b, &fiber);
                fiber.push(w.normalize());
            }
            (projected, fiber)
        };
        Ok(FrameResult { point: z.to_vec(), rank: projected.len(), tangent_basis: tangent, projected_basis: projected, fiber_basis: fiber })
    }
}

fn residual(v: &DVector<f64>, basis: &[DVector<f64>]) -> DVector<f64> {
    let mut w = v.clone();
    for _ in 0..2 {
        for b in basis {
            let c = w.dot(b);
            w -= b * c;
        }
    }
    w
}

fn project(v: &DVector<f64>, n: usize) -> DVector<f64> {
    DVector::from_fn(v.len(), |i, _| if i < n { v[i] } else { 0.0 })
}

/// `a - sum_j <P a, P e_j> e_j`, where the projections `P e_j` are orthonormal.
fn subtract_projected(a: &DVector<f64>, basis: &[DVector<f64>], n: usize) -> DVector<f64> {
    let mut w = a.clone();
    for _ in 0..2 {
        for e in basis {
            let c = project(&w, n).dot(&project(e, n));
            w -= e * c;
        }
    }
    w
}

/// Number of singular values above `RANK_TOL` times `scale`, or times the
/// largest singular value when no scale is given.
fn numeric_rank(m: &DMatrix<f64>, scale: Option<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    let scale = scale.unwrap_or(top);
    if scale == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * scale).count()
}

/// Tangent frame at a point together with the fiber decomposition.
#[derive(Clone, Debug)]
pub struct FrameResult {
    pub point: Vec<f64>,
    /// Orthonormal basis of the tangent space.
    pub tangent_basis: Vec<DVector<f64>>,
    /// Tangent vectors whose projections onto the first `n` coordinates are
    /// orthonormal.
    pub projected_basis: Vec<DVector<f64>>,
    /// Orthonormal basis of the fiber tangent space (zero projection).
    pub fiber_basis: Vec<DVector<f64>>,
    /// Rank of the projection restricted to the tangent space.
    pub rank: usize,
}

pub fn tangent_basis<C: Scalar>(m: &ManifoldSpec<C>, z: &[f64]) -> Result<Vec<DVector<f64>>> {
    Numeric::new(m)?.tangent(z)
}

pub fn frame<C: Scalar>(m: &ManifoldSpec<C>, z: &[f64]) -> Result<FrameResult> {
    Numeric::new(m)?.frame(z)
}

/// The projection rank `l` and a basis `b_1, ..., b_{d-l}` of the fiber tangent.
pub fn fiber_basis<C: Scalar>(m: &ManifoldSpec<C>, z: &[f64]) -> Result<(usize, Vec<DVector<f64>>)> {
    let f = frame(m, z)?;
    Ok((f.rank, f.fiber_basis))
}

pub fn rank_at<C: Scalar>(m: &ManifoldSpec<C>, z: &[f64]) -> Result<usize> {
    let t = tangent_basis(m, z)?;
    if t.is_empty() {
        return Ok(0);
    }
    let t = DMatrix::from_columns(&t);
    Ok(numeric_rank(&t.rows(0, m.split_n).into_owned(), Some(1.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImmersionWitness {
    /// Strictly increasing coordinate indices (0-based).
    pub indices: Vec<usize>,
    /// Smallest singular value of the selected minor over all samples.
    pub margin: f64,
}

/// First index sequence, in lexicographic order, whose coordinate projection
/// is injective on the tangent space at every sample and whose `l`-th entry
/// lies among the first `n` coordinates (`l` the largest sampled rank).
pub fn immersion_witness<C: Scalar>(m: &ManifoldSpec<C>, samples: &[Vec<f64>]) -> Result<Option<ImmersionWitness>> {
    let num = Numeric::new(m)?;
    let d = num.dim();
    let mut tangents = vec![];
    let mut l = 0;
    for z in samples {
        let f = num.frame(z)?;
        l = l.max(f.rank);
        tangents.push(DMatrix::from_columns(&f.tangent_basis));
    }
    if d == 0 {
        return Ok(Some(ImmersionWitness { indices: vec![], margin: 1.0 }));
    }
    for idx in (0..m.nvars).combinations(d) {
        if l > 0 && idx[l - 1] >= m.split_n {
            continue;
        }
        let mut margin = f64::INFINITY;
        for t in &tangents {
            let minor = t.select_rows(&idx);
            let s = minor.svd(false, false).singular_values.min();
            margin = margin.min(s);
            if s <= RANK_TOL {
                break;
            }
        }
        if margin > RANK_TOL {
            return Ok(Some(ImmersionWitness { indices: idx, margin }));
        }
    }
    Ok(None)
}

fn box_factor<C: Scalar>(nvars: usize, var: usize, r: &C) -> Series<C> {
    let x = Series::var(nvars, var);
    &Series::constant(nvars, r.clone() * r.clone()) - &(&x * &x)
}

/// `g_1 ... g_q (r_1^2 - z_1^2) ... (r_N^2 - z_N^2)`: positive on `M`, zero on
/// its frontier.
pub fn build_phi<C: Scalar>(m: &ManifoldSpec<C>) -> Series<C> {
    let mut phi = Series::one(m.nvars);
    for g in &m.ineqs {
        phi = &phi * g;
    }
    for (i, r) in m.polyradius.iter().enumerate() {
        phi = &phi * &box_factor(m.nvars, i, r);
    }
    phi
}

type SymVec<C> = Vec<Series<C>>;

fn sym_dot<C: Scalar>(a: &[Series<C>], b: &[Series<C>], upto: usize) -> Series<C> {
    let nvars = a[0].nvars();
    a.iter().zip(b).take(upto).fold(Series::zero(nvars), |acc, (x, y)| &acc + &(x * y))
}

fn sym_is_zero<C: Scalar>(v: &[Series<C>], upto: usize) -> bool {
    v.iter().take(upto).all(Series::is_zero)
}

/// `v * prod N_j - sum_j <v, w_j> prod_{i != j} N_i * w_j`: a positive multiple
/// of the Gram-Schmidt residual of `v` against the pairwise orthogonal `w_j`
/// with squared norms `N_j`, inner products taken over the first `upto`
/// coordinates.
fn ff_residual<C: Scalar>(v: &[Series<C>], basis: &[(SymVec<C>, Series<C>)], upto: usize) -> SymVec<C> {
    let nvars = v[0].nvars();
    let one = Series::one(nvars);
    let total = basis.iter().fold(one.clone(), |acc, (_, n)| &acc * n);
    let mut w: SymVec<C> = v.iter().map(|x| x * &total).collect();
    for (j, (wj, _)) in basis.iter().enumerate() {
        let others = basis.iter().enumerate().filter(|(i, _)| *i != j).fold(one.clone(), |acc, (_, (_, n))| &acc * n);
        let c = &sym_dot(v, wj, upto) * &others;
        for (wk, bk) in w.iter_mut().zip(wj) {
            *wk = &*wk - &(&c * bk);
        }
    }
    w
}

/// Strips factors that are positive where the equation is used, then makes
/// the leading term (in display order) positive.
fn normalize_equation<C: Scalar>(mut e: Series<C>, positive: &[Series<C>]) -> Series<C> {
    for f in positive {
        if f.max_degree().unwrap_or(0) == 0 {
            continue;
        }
        while !e.is_zero() {
            match e.exact_div(f) {
                Some(q) => e = q,
                None => break,
            }
        }
    }
    match e.leading_display_term() {
        Some((_, c)) if c.is_negative() => -&e,
        _ => e,
    }
}

/// Polynomial equations whose common zero set on `M` is the locus where
/// `build_phi` restricted to the fiber through the point is critical.
pub fn critical_set_equations<C: Scalar>(m: &ManifoldSpec<C>) -> Result<Vec<Series<C>>> {
    let big_n = m.nvars;
    let d = m.dim();
    let mut positive: Vec<Series<C>> = m.polyradius.iter().enumerate().map(|(i, r)| box_factor(big_n, i, r)).collect();
    positive.extend(m.ineqs.iter().cloned());

    let mut basis: Vec<(SymVec<C>, Series<C>)> = vec![];
    for (k, f) in m.eqs.iter().enumerate() {
        let grad: SymVec<C> = (0..big_n).map(|v| f.derivative(v)).collect::<std::result::Result<_, _>>()?;
        let w = ff_residual(&grad, &basis, big_n);
        if sym_is_zero(&w, big_n) {
            return Err(FibergeomError::FrameDegenerate(format!("gradient of equation {} is dependent", k + 1)));
        }
        let n2 = sym_dot(&w, &w, big_n);
        basis.push((w, n2));
    }
    let mut tangent: Vec<SymVec<C>> = vec![];
    for k in 0..big_n {
        if tangent.len() == d {
            break;
        }
        let e: SymVec<C> =
            (0..big_n).map(|i| if i == k { Series::one(big_n) } else { Series::zero(big_n) }).collect();
        let w = ff_residual(&e, &basis, big_n);
        if !sym_is_zero(&w, big_n) {
            let n2 = sym_dot(&w, &w, big_n);
            positive.push(n2.clone());
            basis.push((w.clone(), n2));
            tangent.push(w);
        }
    }
    if tangent.len() < d {
        return Err(FibergeomError::FrameDegenerate("tangent frame has too few vectors".into()));
    }

    let n = m.split_n;
    let mut projected: Vec<(SymVec<C>, Series<C>)> = vec![];
    let mut fiber: Vec<SymVec<C>> = vec![];
    for a in &tangent {
        let w = ff_residual(a, &projected, n);
        if sym_is_zero(&w, n) {
            fiber.push(w);
        } else {
            let n2 = sym_dot(&w, &w, n);
            positive.push(n2.clone());
            projected.push((w, n2));
        }
    }
    // Later projected vectors can leave earlier fiber candidates with a
    // nonzero component along them; re-orthogonalize against all of them.
    let fiber: Vec<SymVec<C>> = fiber.iter().map(|b| ff_residual(b, &projected, n)).collect();

    let phi = build_phi(m);
    let grad_phi: SymVec<C> = (0..big_n).map(|v| phi.derivative(v)).collect::<std::result::Result<_, _>>()?;
    let mut out = vec![];
    for b in &fiber {
        let e = normalize_equation(sym_dot(&grad_phi, b, big_n), &positive);
        if !out.contains(&e) {
            out.push(e);
        }
    }
    Ok(out)
}

/// Open-box grid `k * step` with `|k * step| < r` on one axis.
fn axis(r: f64, step: f64) -> Vec<f64> {
    let m = ((r / step) - 1e-9).ceil() as i64 - 1;
    (-m..=m).map(|k| k as f64 * step).collect()
}

fn grid(radii: &[f64], step: f64) -> Vec<Vec<f64>> {
    if radii.is_empty() {
        return vec![vec![]];
    }
    radii.iter().map(|&r| axis(r, step)).multi_cartesian_product().collect()
}

/// Sampled check that every fiber meeting `Delta_r'` stays inside it: for
/// each grid point `x` of the base box of `r'`, either no fiber grid point of
/// `M` lies in `Delta_r'` or every fiber grid point of `M` does.
pub fn compatible_polydisk_check<C: Scalar>(m: &ManifoldSpec<C>, r_prime: &[f64], step: f64) -> Result<bool> {
    let num = Numeric::new(m)?;
    if r_prime.len() != m.nvars || r_prime.iter().zip(&num.radius).any(|(a, b)| *a <= 0.0 || a > b) {
        return Err(FibergeomError::Precondition("need 0 < r' <= r componentwise".into()));
    }
    let n = m.split_n;
    let fibers = grid(&num.radius[n..], step);
    let bases = grid(&r_prime[..n], step);
    Ok(bases.par_iter().all(|x| {
        let mut inside = false;
        let mut outside = false;
        for y in &fibers {
            let z: Vec<f64> = x.iter().chain(y).copied().collect();
            if !num.contains(&z, step) {
                continue;
            }
            if y.iter().zip(&r_prime[n..]).all(|(v, r)| v.abs() < *r) {
                inside = true;
            } else {
                outside = true;
            }
            if inside && outside {
                return false;
            }
        }
        true
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ButterflyReport {
    pub holds: bool,
    /// Per fiber coordinate, a base coordinate dominating it on every sample.
    pub witnesses: Vec<Option<usize>>,
    /// A sampled point where some fiber coordinate is not dominated.
    pub counterexample: Option<Vec<f64>>,
}

/// Sampled check of `|y_i| < |x_j(i)|` on `M` for a fixed `j(i)` per `i`.
pub fn butterfly_check<C: Scalar>(m: &ManifoldSpec<C>, step: f64) -> Result<ButterflyReport> {
    let num = Numeric::new(m)?;
    let n = m.split_n;
    let k = m.fiber_nvars();
    if k == 0 {
        return Ok(ButterflyReport { holds: true, witnesses: vec![], counterexample: None });
    }
    let points: Vec<Vec<f64>> = grid(&num.radius, step).into_par_iter().filter(|z| num.contains(z, step)).collect();
    let mut witnesses = vec![];
    let mut counterexample = None;
    for i in n..m.nvars {
        let w = (0..n).find(|&j| points.iter().all(|z| z[i].abs() < z[j].abs()));
        if w.is_none() && counterexample.is_none() {
            counterexample = points
                .iter()
                .filter(|z| (0..n).all(|j| z[i].abs() >= z[j].abs()))
                .min_by(|a, b| a.iter().map(|v| v.abs()).sum::<f64>().total_cmp(&b.iter().map(|v| v.abs()).sum()))
                .cloned();
        }
        witnesses.push(w);
    }
    Ok(ButterflyReport { holds: witnesses.iter().all(Option::is_some), witnesses, counterexample })
}

/// Estimated dimension of the common zero set of `eqs` near the sampled
/// points: the largest kernel dimension of the Jacobian.
pub fn dimension_sampled<C: Scalar>(eqs: &[Series<C>], nvars: usize, points: &[Vec<f64>]) -> Result<usize> {
    let grads: Vec<Vec<F64Poly>> = eqs
        .iter()
        .map(|f| (0..nvars).map(|v| Ok(f.derivative(v)?.to_f64_poly())).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(points
        .iter()
        .map(|z| {
            let jac = DMatrix::from_fn(eqs.len(), nvars, |i, j| grads[i][j].eval(z));
            nvars - numeric_rank(&jac, None)
        })
        .max()
        .unwrap_or(0))
}

/// Maximum of the cutting function along one fiber compared with the nearest
/// root of the critical equation.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberCritical {
    pub x: Vec<f64>,
    /// Grid argmax refined by golden-section search.
    pub argmax: f64,
    pub phi_max: f64,
    /// Nearest root of the critical equation on the same fiber component.
    pub root: Option<f64>,
}

impl FiberCritical {
    pub fn gap(&self) -> f64 {
        self.root.map_or(f64::INFINITY, |r| (r - self.argmax).abs())
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-13 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let mid = (a + b) / 2.0;
        if (b - a).abs() < 1e-15 {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    (a + b) / 2.0
}

/// Per connected component of the fiber over `x` (sampled on a grid of
/// `step`), the refined maximum of `phi` and the nearest root of `critical`.
/// Supports open sets with a single fiber coordinate.
pub fn fiber_critical_points<C: Scalar>(
    m: &ManifoldSpec<C>,
    critical: &Series<C>,
    x: &[f64],
    step: f64,
) -> Result<Vec<FiberCritical>> {
    if !m.eqs.is_empty() || m.fiber_nvars() != 1 {
        return Err(FibergeomError::Precondition("fiber sampling needs an open set with one fiber coordinate".into()));
    }
    let num = Numeric::new(m)?;
    let phi = build_phi(m).to_f64_poly();
    let crit = critical.to_f64_poly();
    let at = |y: f64| -> Vec<f64> { x.iter().copied().chain(std::iter::once(y)).collect() };
    let ys = axis(num.radius[m.split_n], step);
    let member: Vec<bool> = ys.iter().map(|&y| num.contains(&at(y), 0.0)).collect();
    let mut out = vec![];
    let mut k = 0;
    while k < ys.len() {
        if !member[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < ys.len() && member[k] {
            k += 1;
        }
        let run = &ys[start..k];
        let best = run.iter().copied().max_by(|a, b| phi.eval(&at(*a)).total_cmp(&phi.eval(&at(*b)))).expect("nonempty run");
        let argmax = golden_max(|y| phi.eval(&at(y)), best - step, best + step);
        let lo = run[0] - step;
        let hi = run[run.len() - 1] + step;
        let c = |y: f64| crit.eval(&at(y));
        let mut nodes = vec![lo];
        nodes.extend_from_slice(run);
        nodes.push(hi);
        let root = nodes
            .windows(2)
            .filter_map(|w| {
                let (a, b) = (w[0], w[1]);
                if c(a) == 0.0 {
                    Some(a)
                } else if (c(a) < 0.0) != (c(b) < 0.0) {
                    Some(bisect(c, a, b))
                } else {
                    None
                }
            })
            .min_by(|a, b| (a - argmax).abs().total_cmp(&(b - argmax).abs()));
        out.push(FiberCritical { x: x.to_vec(), argmax, phi_max: phi.eval(&at(argmax)), root });
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct FiberCutConfig {
    /// Grid step for sampling `M` (rank checks) and the base points.
    pub sample_step: f64,
    /// Grid step of the fiber sweeps in the compatible-polydisk search.
    pub sweep_step: f64,
    /// Grid step along fibers for the critical-point oracle.
    pub fiber_step: f64,
    /// Halvings tried per coordinate in the compatible-polydisk search.
    pub max_halvings: u32,
}

impl Default for FiberCutConfig {
    fn default() -> Self {
        FiberCutConfig { sample_step: 1.0 / 16.0, sweep_step: 1.0 / 256.0, fiber_step: 1.0 / 512.0, max_halvings: 4 }
    }
}

#[derive(Clone, Debug)]
pub struct FiberCut<C> {
    pub equations: Vec<Series<C>>,
    pub dim: usize,
    pub rank: usize,
    /// Compatible polydisk found by per-coordinate halving.
    pub compatible_radius: Vec<f64>,
    /// Sampled base points with a nonempty fiber.
    pub fibers_sampled: usize,
    /// Of those, the ones where a critical point was found.
    pub fibers_hit: usize,
    /// Sampled points of the critical set.
    pub critical_points: Vec<Vec<f64>>,
    /// Sampled dimension of the critical set, when fibers could be sampled.
    pub critical_dim: Option<usize>,
}

/// Critical set of the cutting function on the fibers of the projection,
/// a compatible polydisk, and a sampled check that the critical set has the
/// same projection and smaller dimension.
pub fn fiber_cut<C: Scalar>(m: &ManifoldSpec<C>, config: &FiberCutConfig) -> Result<FiberCut<C>> {
    let num = Numeric::new(m)?;
    let samples: Vec<Vec<f64>> =
        grid(&num.radius, config.sample_step).into_par_iter().filter(|z| num.contains(z, 0.0)).collect();
    if samples.is_empty() {
        return Err(FibergeomError::Precondition("no sampled point of M".into()));
    }
    let mut ranks = samples.par_iter().map(|z| rank_at(m, z)).collect::<Result<Vec<_>>>()?;
    ranks.sort_unstable();
    ranks.dedup();
    if ranks.len() > 1 {
        return Err(FibergeomError::StratifyFirst { ranks });
    }
    let rank = ranks[0];
    let d = m.dim();
    if rank >= d {
        return Err(FibergeomError::Precondition(format!("projection rank {rank} equals the dimension {d}")));
    }
    let equations = critical_set_equations(m)?;

    let mut radius = num.radius.clone();
    for c in 0..m.nvars {
        for _ in 0..config.max_halvings {
            let mut trial = radius.clone();
            trial[c] /= 2.0;
            if compatible_polydisk_check(m, &trial, config.sweep_step)? {
                radius = trial;
            } else {
                break;
            }
        }
    }

    let (mut fibers_sampled, mut fibers_hit, mut critical_points, mut critical_dim) = (0, 0, vec![], None);
    if m.eqs.is_empty() && m.fiber_nvars() == 1 && equations.len() == 1 {
        let bases = grid(&num.radius[..m.split_n], config.sample_step);
        let per_base = bases
            .par_iter()
            .map(|x| fiber_critical_points(m, &equations[0], x, config.fiber_step))
            .collect::<Result<Vec<_>>>()?;
        for found in per_base {
            if found.is_empty() {
                continue;
            }
            fibers_sampled += 1;
            let roots: Vec<Vec<f64>> = found
                .iter()
                .filter_map(|f| f.root.map(|y| f.x.iter().copied().chain(std::iter::once(y)).collect()))
                .collect();
            if !roots.is_empty() {
                fibers_hit += 1;
            }
            critical_points.extend(roots);
        }
        critical_dim = Some(dimension_sampled(&equations, m.nvars, &critical_points)?);
    }
    Ok(FiberCut { equations, dim: d, rank, compatible_radius: radius, fibers_sampled, fibers_hit, critical_points, critical_dim })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    type Q = Series<Rational>;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn poly(nvars: usize, terms: &[(&[u32], i64)]) -> Q {
        Q::from_int_terms(nvars, terms)
    }

    fn spec(split: usize, r: &[i64], eqs: Vec<Q>, ineqs: Vec<Q>) -> ManifoldSpec<Rational> {
        ManifoldSpec::new(split, r.iter().map(|&k| q(k, 1)).collect(), eqs, ineqs).unwrap()
    }

    fn above_diagonal() -> ManifoldSpec<Rational> {
        spec(1, &[1, 1], vec![], vec![poly(2, &[(&[0, 1], 1), (&[1, 0], -1)])])
    }

    fn upper_box() -> ManifoldSpec<Rational> {
        spec(1, &[1, 1], vec![], vec![Q::var(2, 1)])
    }

    fn sphere(split: usize) -> ManifoldSpec<Rational> {
        spec(split, &[2, 2, 2], vec![poly(3, &[(&[2, 0, 0], 1), (&[0, 2, 0], 1), (&[0, 0, 2], 1), (&[0, 0, 0], -1)])], vec![])
    }

    fn close(a: &DVector<f64>, b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn tangent_examples() {
        let circle = spec(1, &[2, 2], vec![poly(2, &[(&[2, 0], 1), (&[0, 2], 1), (&[0, 0], -1)])], vec![]);
        let t = tangent_basis(&circle, &[1.0, 0.0]).unwrap();
        assert_eq!(t.len(), 1);
        assert!(close(&t[0], &[0.0, 1.0]) || close(&t[0], &[0.0, -1.0]));

        let plane = spec(3, &[1, 1, 1], vec![Q::var(3, 2)], vec![]);
        let t = tangent_basis(&plane, &[0.25, -0.5, 0.0]).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|v| v[2].abs() < 1e-15));

        // x^2 has a vanishing gradient on its zero set.
        let flat = spec(1, &[1, 1], vec![poly(2, &[(&[2, 0], 1)])], vec![]);
        assert!(matches!(tangent_basis(&flat, &[0.0, 0.5]), Err(FibergeomError::RankDeficient { rank: 0, .. })));
        assert!(matches!(tangent_basis(&circle, &[0.5, 0.0]), Err(FibergeomError::NotOnManifold(_))));
    }

    #[test]
    fn fiber_examples() {
        let (l, b) = fiber_basis(&above_diagonal(), &[0.0, 0.5]).unwrap();
        assert_eq!(l, 1);
        assert_eq!(b.len(), 1);
        assert!(close(&b[0], &[0.0, 1.0]) || close(&b[0], &[0.0, -1.0]));

        let graph = spec(1, &[1, 1], vec![poly(2, &[(&[0, 1], 1), (&[1, 0], -1)])], vec![]);
        let (l, b) = fiber_basis(&graph, &[0.125, 0.125]).unwrap();
        assert_eq!((l, b.len()), (1, 0));

        let plane = spec(3, &[1, 1, 1], vec![Q::var(3, 2)], vec![]);
        let (l, b) = fiber_basis(&plane, &[0.1, 0.2, 0.0]).unwrap();
        assert_eq!((l, b.len()), (2, 0));
    }

    #[test]
    fn frame_invariants_on_tilted_surface() {
        // z = xy + x^2 in 3 variables, projected onto x.
        let f = poly(3, &[(&[0, 0, 1], 1), (&[1, 1, 0], -1), (&[2, 0, 0], -1)]);
        let m = spec(1, &[1, 1, 1], vec![f.clone()], vec![]);
        let grads: Vec<F64Poly> = (0..3).map(|v| f.derivative(v).unwrap().to_f64_poly()).collect();
        for (x, y) in [(0.1, 0.2), (-0.3, 0.4), (0.5, -0.25)] {
            let z = [x, y, x * y + x * x];
            let fr = frame(&m, &z).unwrap();
            assert_eq!(fr.rank, 1);
            assert_eq!(fr.fiber_basis.len(), 1);
            let g = DVector::from_iterator(3, grads.iter().map(|p| p.eval(&z)));
            for b in &fr.fiber_basis {
                assert!(b[0].abs() <= 1e-10);
                assert!(b.dot(&g).abs() <= 1e-10 * g.norm());
            }
            assert!((fr.projected_basis[0][0].abs() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn ranks() {
        assert_eq!(rank_at(&sphere(2), &[0.0, 0.0, 1.0]).unwrap(), 2);
        assert_eq!(rank_at(&sphere(2), &[1.0, 0.0, 0.0]).unwrap(), 1);
        let plane = spec(1, &[1, 1], vec![Q::var(2, 0)], vec![]);
        assert_eq!(rank_at(&plane, &[0.0, 0.3]).unwrap(), 0);
    }

    #[test]
    fn immersion_examples() {
        let parabola = spec(1, &[2, 2], vec![poly(2, &[(&[0, 1], 1), (&[2, 0], -1)])], vec![]);
        let samples: Vec<Vec<f64>> = [-0.5, 0.0, 0.75].iter().map(|&x| vec![x, x * x]).collect();
        assert_eq!(immersion_witness(&parabola, &samples).unwrap().unwrap().indices, vec![0]);

        let vertical = spec(1, &[1, 1], vec![Q::var(2, 0)], vec![]);
        let w = immersion_witness(&vertical, &[vec![0.0, 0.5], vec![0.0, -0.25]]).unwrap().unwrap();
        assert_eq!(w.indices, vec![1]);
        assert!((w.margin - 1.0).abs() < 1e-12);

        let poles = vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]];
        assert_eq!(immersion_witness(&sphere(2), &poles).unwrap().unwrap().indices, vec![0, 1]);
        let mut all = poles.clone();
        all.push(vec![1.0, 0.0, 0.0]);
        assert_eq!(immersion_witness(&sphere(2), &all).unwrap(), None);
    }

    #[test]
    fn phi_examples() {
        let phi = build_phi(&above_diagonal());
        let expected = &(&poly(2, &[(&[0, 1], 1), (&[1, 0], -1)]) * &poly(2, &[(&[0, 0], 1), (&[2, 0], -1)]))
            * &poly(2, &[(&[0, 0], 1), (&[0, 2], -1)]);
        assert_eq!(phi, expected);

        let open = spec(1, &[1, 2], vec![], vec![]);
        assert_eq!(
            build_phi(&open),
            &poly(2, &[(&[0, 0], 1), (&[2, 0], -1)]) * &poly(2, &[(&[0, 0], 4), (&[0, 2], -1)])
        );

        let quadrant = spec(1, &[1, 1], vec![], vec![Q::var(2, 0), Q::var(2, 1)]);
        let xy = poly(2, &[(&[1, 1], 1)]);
        assert_eq!(build_phi(&quadrant), &(&xy * &poly(2, &[(&[0, 0], 1), (&[2, 0], -1)])) * &poly(2, &[(&[0, 0], 1), (&[0, 2], -1)]));
    }

    #[test]
    fn critical_equations_examples() {
        let eqs = critical_set_equations(&above_diagonal()).unwrap();
        assert_eq!(eqs, vec![poly(2, &[(&[0, 2], 3), (&[1, 1], -2), (&[0, 0], -1)])]);
        assert_eq!(eqs[0].to_string(), "3y² − 2xy − 1");

        assert!(critical_set_equations(&spec(2, &[1, 1], vec![], vec![])).unwrap().is_empty());

        let eqs = critical_set_equations(&upper_box()).unwrap();
        assert_eq!(eqs, vec![poly(2, &[(&[0, 2], 3), (&[0, 0], -1)])]);
    }

    #[test]
    fn critical_equations_with_constraint() {
        // Upper hemisphere piece projected onto x: the fiber over x is an arc.
        let m = spec(1, &[2, 2, 2], sphere(1).eqs, vec![Q::var(3, 2)]);
        let eqs = critical_set_equations(&m).unwrap();
        assert_eq!(eqs.len(), 1);
        // On the arc the cutting function is critical where it is maximal;
        // check a numeric maximum along a parametrized fiber satisfies it.
        let phi = build_phi(&m).to_f64_poly();
        let e = eqs[0].to_f64_poly();
        let x: f64 = 0.3;
        let rho = (1.0 - x * x).sqrt();
        let arg = golden_max(|t| phi.eval(&[x, rho * t.cos(), rho * t.sin()]), 0.0, std::f64::consts::PI);
        let z = [x, rho * arg.cos(), rho * arg.sin()];
        assert!(e.eval(&z).abs() < 1e-6, "{}", e.eval(&z));
    }

    #[test]
    fn compatible_polydisks() {
        let m = above_diagonal();
        assert!(!compatible_polydisk_check(&m, &[0.75, 0.5], 1.0 / 256.0).unwrap());
        assert!(compatible_polydisk_check(&m, &[1.0, 1.0], 1.0 / 256.0).unwrap());
        let cone = spec(1, &[1, 1], vec![], vec![poly(2, &[(&[2, 0], 1), (&[0, 2], -1)])]);
        assert!(compatible_polydisk_check(&cone, &[0.5, 0.5], 1.0 / 256.0).unwrap());
        assert!(compatible_polydisk_check(&m, &[1.5, 1.0], 1.0 / 256.0).is_err());
    }

    #[test]
    fn butterflies() {
        let cone = spec(1, &[1, 1], vec![], vec![poly(2, &[(&[2, 0], 1), (&[0, 2], -1)])]);
        let r = butterfly_check(&cone, 1.0 / 64.0).unwrap();
        assert!(r.holds);
        assert_eq!(r.witnesses, vec![Some(0)]);

        let r = butterfly_check(&above_diagonal(), 1.0 / 64.0).unwrap();
        assert!(!r.holds);
        let c = r.counterexample.unwrap();
        assert!(c[1] > c[0] && c[1].abs() >= c[0].abs());

        let open = spec(2, &[1, 1], vec![], vec![]);
        assert!(butterfly_check(&open, 1.0 / 8.0).unwrap().holds);
    }

    #[test]
    fn restriction_family_is_a_butterfly() {
        let fam = above_diagonal().restriction_family().unwrap();
        assert_eq!((fam.nvars, fam.split_n, fam.ineqs.len()), (4, 3, 7));
        let r = butterfly_check(&fam, 1.0 / 8.0).unwrap();
        assert!(r.holds);
        assert_eq!(r.witnesses, vec![Some(1)]);
    }

    #[test]
    fn oracle_matches_roots() {
        let m = above_diagonal();
        let eqs = critical_set_equations(&m).unwrap();
        for x in [-0.75, -0.25, 0.0, 0.5, 0.875] {
            let found = fiber_critical_points(&m, &eqs[0], &[x], 1.0 / 512.0).unwrap();
            assert_eq!(found.len(), 1);
            let exact = (x + (x * x + 3.0).sqrt()) / 3.0;
            assert!(found[0].gap() <= 1e-6, "{:?}", found[0]);
            assert!((found[0].root.unwrap() - exact).abs() < 1e-12);
        }
        let eqs = critical_set_equations(&upper_box()).unwrap();
        let found = fiber_critical_points(&upper_box(), &eqs[0], &[0.3], 1.0 / 512.0).unwrap();
        assert!((found[0].root.unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn cut_examples() {
        let cfg = FiberCutConfig::default();
        let cut = fiber_cut(&above_diagonal(), &cfg).unwrap();
        assert_eq!(cut.equations[0].to_string(), "3y² − 2xy − 1");
        assert_eq!((cut.dim, cut.rank), (2, 1));
        assert!(cut.fibers_sampled > 0);
        assert_eq!(cut.fibers_hit, cut.fibers_sampled);
        assert_eq!(cut.critical_dim, Some(1));
        // Fibers of {y > x} run up to y = 1, so only x can shrink.
        assert_eq!(cut.compatible_radius, vec![1.0 / 16.0, 1.0]);

        let cut = fiber_cut(&upper_box(), &cfg).unwrap();
        assert_eq!(cut.fibers_hit, cut.fibers_sampled);
        assert!(cut.critical_points.iter().all(|p| (p[1] - 1.0 / 3f64.sqrt()).abs() < 1e-12));

        let graph = spec(1, &[1, 1], vec![poly(2, &[(&[0, 1], 1), (&[1, 0], -1)])], vec![]);
        assert!(matches!(fiber_cut(&graph, &cfg), Err(FibergeomError::Precondition(_))));

        let torn = spec(1, &[1, 1], vec![poly(2, &[(&[0, 1], 1), (&[2, 0], -1), (&[0, 0], -1)])], vec![]);
        assert!(matches!(fiber_cut(&torn, &cfg), Err(FibergeomError::Precondition(_))));
    }

    #[test]
    fn nonconstant_rank_asks_to_stratify() {
        // Axis points of the unit sphere lie on the sample grid: rank 2 at
        // the poles, 1 on the equator.
        match fiber_cut(&sphere(2), &FiberCutConfig::default()).unwrap_err() {
            FibergeomError::StratifyFirst { ranks } => assert_eq!(ranks, vec![1, 2]),
            e => panic!("unexpected {e}"),
        }
        // x = y^2 has a vertical tangent at the origin only.
        let bent = spec(1, &[1, 1], vec![poly(2, &[(&[1, 0], 1), (&[0, 2], -1)])], vec![]);
        assert!(matches!(fiber_cut(&bent, &FiberCutConfig::default()), Err(FibergeomError::StratifyFirst { .. })));
    }

    #[test]
    fn dimensions() {
        let s = sphere(2);
        assert_eq!(dimension_sampled(&s.eqs, 3, &[vec![0.0, 0.0, 1.0], vec![0.6, 0.8, 0.0]]).unwrap(), 2);
        assert_eq!(dimension_sampled(&[Q::var(2, 0), Q::var(2, 1)], 2, &[vec![0.0, 0.0]]).unwrap(), 0);
        let parabola = vec![poly(2, &[(&[0, 1], 1), (&[2, 0], -1)])];
        let pts: Vec<Vec<f64>> = [-0.5, 0.25].iter().map(|&x| vec![x, x * x]).collect();
        assert_eq!(dimension_sampled(&parabola, 2, &pts).unwrap(), 1);
        let m = spec(1, &[2, 2], parabola, vec![]);
        // dim = dim of the projection + fiber dimension 0.
        assert!(pts.iter().all(|p| rank_at(&m, p).unwrap() == 1));
    }
}
