//! Sets cut out by one equation and strict inequalities on a polydisk,
//! sub-quadrant sign analysis and chart parametrization near the origin.

use std::collections::BTreeMap;
use std::fmt;

use petgraph::unionfind::UnionFind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::monomialize::{monomialize, Children, MonomializeConfig, MonomializeError, Role, TreeNode};
use crate::scalar::Scalar;
use crate::series::{coefficient_sum_bound, NormalCertificate, Normality, Series, SeriesError};
use crate::transforms::{Lambda, TransformError, TransformPath};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HsetError {
    #[error("series {0} has no normal certificate")]
    MissingCertificate(String),
    #[error("set data is inconsistent: {0}")]
    Inconsistent(String),
    #[error("bound {bound} for series {index} is too small: |g| reaches {value} at {witness:?}")]
    BoundTooSmall { index: usize, bound: String, value: f64, witness: Vec<f64> },
    #[error(transparent)]
    Monomialize(#[from] MonomializeError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

type Result<T> = std::result::Result<T, HsetError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Neg,
    Zero,
    Pos,
}

impl Sign {
    pub fn of<C: Scalar>(x: &C) -> Sign {
        if x.is_zero() {
            Sign::Zero
        } else if x.is_positive() {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    fn flip(self) -> Sign {
        match self {
            Sign::Neg => Sign::Pos,
            Sign::Zero => Sign::Zero,
            Sign::Pos => Sign::Neg,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Neg => "-",
            Sign::Zero => "0",
            Sign::Pos => "+",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QuadrantFactor {
    Zero,
    Pos,
    Neg,
}

impl fmt::Display for QuadrantFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuadrantFactor::Zero => "0",
            QuadrantFactor::Pos => "+",
            QuadrantFactor::Neg => "-",
        })
    }
}

/// `D_1 x ... x D_n` with `D_i` one of `{0}`, `(0, r_i)`, `(-r_i, 0)`.
/// The radius of a `Zero` factor is ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct SubQuadrant<C> {
    pub factors: Vec<QuadrantFactor>,
    pub radii: Vec<C>,
}

impl<C: Scalar> SubQuadrant<C> {
    pub fn new(factors: Vec<QuadrantFactor>, radii: Vec<C>) -> Self {
        SubQuadrant { factors, radii }
    }

    pub fn unit(factors: Vec<QuadrantFactor>) -> Self {
        let radii = vec![C::one(); factors.len()];
        SubQuadrant { factors, radii }
    }

    /// All `3^n` sign patterns with unit radii.
    pub fn all(nvars: usize) -> Vec<Self> {
        let mut out = vec![vec![]];
        for _ in 0..nvars {
            out = out
                .into_iter()
                .flat_map(|v: Vec<QuadrantFactor>| {
                    [QuadrantFactor::Zero, QuadrantFactor::Pos, QuadrantFactor::Neg].into_iter().map(move |f| {
                        let mut w = v.clone();
                        w.push(f);
                        w
                    })
                })
                .collect();
        }
        out.into_iter().map(Self::unit).collect()
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn halved(&self) -> Self {
        let two = C::one() + C::one();
        SubQuadrant { factors: self.factors.clone(), radii: self.radii.iter().map(|r| r.clone() / two.clone()).collect() }
    }

    /// Uniform random point with dyadic coordinates strictly inside.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<C> {
        const DEN: i64 = 1 << 16;
        self.factors
            .iter()
            .zip(&self.radii)
            .map(|(f, r)| {
                let u = C::from_ratio(rng.gen_range(1..DEN), DEN);
                match f {
                    QuadrantFactor::Zero => C::zero(),
                    QuadrantFactor::Pos => r.clone() * u,
                    QuadrantFactor::Neg => -(r.clone() * u),
                }
            })
            .collect()
    }

    /// Membership with a tolerance for the `Zero` factors, in `f64`.
    pub fn contains_f64(&self, q: &[f64], tol: f64) -> bool {
        self.factors.iter().zip(&self.radii).zip(q).all(|((f, r), &x)| {
            let r = r.to_f64();
            match f {
                QuadrantFactor::Zero => x.abs() <= tol,
                QuadrantFactor::Pos => x > tol && x < r,
                QuadrantFactor::Neg => x < -tol && x > -r,
            }
        })
    }

    pub fn signs_string(&self) -> String {
        self.factors.iter().map(ToString::to_string).collect()
    }
}

/// `0` if the monomial vanishes on `Q`; otherwise the sign of the unit
/// constant times `(-1)^alpha_i` for every negative factor.
pub fn sign_on_quadrant<C: Scalar>(cert: &NormalCertificate<C>, q: &SubQuadrant<C>) -> Sign {
    let alpha = cert.alpha.entries();
    if alpha.iter().zip(&q.factors).any(|(&a, f)| a > 0 && *f == QuadrantFactor::Zero) {
        return Sign::Zero;
    }
    let odd_negatives = alpha.iter().zip(&q.factors).filter(|(&a, f)| **f == QuadrantFactor::Neg && a % 2 == 1).count();
    let s = Sign::of(&cert.unit_constant);
    if odd_negatives % 2 == 1 {
        s.flip()
    } else {
        s
    }
}

/// `{x in Delta_r : g_0(x) = 0, g_1(x) > 0, ..., g_q(x) > 0}`; a missing
/// equation means no equation.
#[derive(Clone, Debug, PartialEq)]
pub struct HBasicSet<C> {
    pub nvars: usize,
    pub polyradius: Vec<C>,
    pub eq: Option<Series<C>>,
    pub ineqs: Vec<Series<C>>,
}

impl<C: Scalar> HBasicSet<C> {
    pub fn new(polyradius: Vec<C>, eq: Option<Series<C>>, ineqs: Vec<Series<C>>) -> Result<Self> {
        let nvars = polyradius.len();
        if polyradius.iter().any(|r| !r.is_positive()) {
            return Err(HsetError::Inconsistent("radii must be positive".into()));
        }
        if eq.iter().chain(&ineqs).any(|s| s.nvars() != nvars) {
            return Err(HsetError::Inconsistent("series and polyradius disagree on the number of variables".into()));
        }
        Ok(HBasicSet { nvars, polyradius, eq, ineqs })
    }

    pub fn in_polydisk(&self, x: &[C]) -> bool {
        x.iter().zip(&self.polyradius).all(|(x, r)| x.abs() < *r)
    }

    /// Sign conditions only, ignoring the polydisk.
    pub fn satisfies_signs(&self, x: &[C]) -> Result<bool> {
        if let Some(g0) = &self.eq {
            if !g0.eval(x)?.is_zero() {
                return Ok(false);
            }
        }
        for g in &self.ineqs {
            if !g.eval(x)?.is_positive() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn contains(&self, x: &[C]) -> Result<bool> {
        Ok(self.in_polydisk(x) && self.satisfies_signs(x)?)
    }

    /// The defining series that take part in sign analysis, with the index
    /// used in reports (`0` is the equation).
    fn defining(&self) -> Vec<(usize, &Series<C>)> {
        let mut out = vec![];
        if let Some(g0) = &self.eq {
            if !g0.is_zero() {
                out.push((0, g0));
            }
        }
        out.extend(self.ineqs.iter().enumerate().map(|(k, g)| (k + 1, g)));
        out
    }
}

fn certificate_of<C: Scalar>(g: &Series<C>, name: &str) -> Result<NormalCertificate<C>> {
    if g.is_zero() {
        return Err(HsetError::MissingCertificate(name.into()));
    }
    match g.is_normal()? {
        Normality::Normal(c) => Ok(c),
        _ => Err(HsetError::MissingCertificate(name.into())),
    }
}

/// Sub-quadrants (unit symbolic radius) on which the equation vanishes and
/// every inequality is positive, for a set whose defining series are normal.
pub fn membership_quadrants<C: Scalar>(set: &HBasicSet<C>) -> Result<Vec<SubQuadrant<C>>> {
    let eq = match &set.eq {
        Some(g) if !g.is_zero() => Some(certificate_of(g, "g0")?),
        _ => None,
    };
    let ineqs = set
        .ineqs
        .iter()
        .enumerate()
        .map(|(k, g)| certificate_of(g, &format!("g{}", k + 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SubQuadrant::all(set.nvars)
        .into_iter()
        .filter(|q| {
            eq.as_ref().is_none_or(|c| sign_on_quadrant(c, q) == Sign::Zero)
                && ineqs.iter().all(|c| sign_on_quadrant(c, q) == Sign::Pos)
        })
        .collect())
}

/// A sub-quadrant together with an admissible path; the chart is the image
/// of the quadrant under the path, intersected with the polydisk.
#[derive(Clone, Debug, PartialEq)]
pub struct Chart<C> {
    pub quadrant: SubQuadrant<C>,
    pub path: TransformPath<C>,
}

#[derive(Clone, Debug)]
pub struct ParametrizeConfig<C> {
    pub monomialize: MonomializeConfig<C>,
    /// Half-width of the box on which coverage is sampled.
    pub coverage_radius: C,
    /// Grid step of the coverage sample.
    pub grid_step: C,
    /// Random points per radius check.
    pub samples: usize,
    pub max_halvings: u32,
    pub seed: u64,
}

impl<C: Scalar> Default for ParametrizeConfig<C> {
    fn default() -> Self {
        ParametrizeConfig {
            monomialize: MonomializeConfig::default(),
            coverage_radius: C::from_ratio(1, 8),
            grid_step: C::from_ratio(1, 512),
            samples: 100,
            max_halvings: 10,
            seed: 0,
        }
    }
}

/// An unexpanded blow-up family met by uncovered samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MissingFamily {
    /// Compact labels of the edges leading to the family node.
    pub path: Vec<String>,
    pub i: usize,
    pub j: usize,
    /// Parameters (rounded) the uncovered samples would need.
    pub lambdas: Vec<f64>,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub samples_in_set: usize,
    pub covered: usize,
    pub fraction: f64,
    pub hits_per_chart: Vec<usize>,
    pub missing_families: Vec<MissingFamily>,
}

#[derive(Clone, Debug)]
pub struct Parametrization<C> {
    pub charts: Vec<Chart<C>>,
    pub coverage: CoverageReport,
    pub tree: Option<TreeNode<C>>,
}

/// Charts of `A` near the origin read off from the leaves of the
/// monomialization tree of its defining series, plus a sampled coverage
/// estimate on the box of half-width `config.coverage_radius`.
pub fn parametrize<C: Scalar>(set: &HBasicSet<C>, config: &ParametrizeConfig<C>) -> Result<Parametrization<C>> {
    let n = set.nvars;
    let defining = set.defining();
    let empty = || Parametrization {
        charts: vec![],
        coverage: CoverageReport {
            samples_in_set: 0,
            covered: 0,
            fraction: 1.0,
            hits_per_chart: vec![],
            missing_families: vec![],
        },
        tree: None,
    };
    if set.ineqs.iter().any(Series::is_zero) {
        let mut p = empty();
        p.coverage = coverage(set, &[], None, config)?;
        return Ok(p);
    }
    let targets: Vec<Series<C>> = if defining.is_empty() {
        vec![Series::one(n)]
    } else {
        defining.iter().map(|(_, g)| (*g).clone()).collect()
    };
    let tree = monomialize(&targets, &config.monomialize)?;
    let has_eq = defining.first().is_some_and(|(k, _)| *k == 0);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut charts = vec![];
    for branch in tree.branches() {
        let path = branch.path(n);
        let leaf = branch.leaf;
        let certs = leaf.certificates().expect("branches end at leaves");
        for q in SubQuadrant::<C>::all(n) {
            let mut ok = true;
            for (t, cert) in leaf.series_state.iter().zip(certs) {
                let s = sign_on_quadrant(cert, &q);
                ok &= match t.role {
                    Role::Target(k) if !defining.is_empty() => {
                        if has_eq && k == 0 {
                            s == Sign::Zero
                        } else {
                            s == Sign::Pos
                        }
                    }
                    Role::Critical { .. } => s != Sign::Zero,
                    _ => true,
                };
                if !ok {
                    break;
                }
            }
            if !ok {
                continue;
            }
            if let Some(q) = shrink_until_sound(set, &path, q, config, &mut rng)? {
                charts.push(Chart { quadrant: q, path: path.clone() });
            }
        }
    }
    let report = coverage(set, &charts, Some(&tree), config)?;
    Ok(Parametrization { charts, coverage: report, tree: Some(tree) })
}

fn shrink_until_sound<C: Scalar, R: Rng>(
    set: &HBasicSet<C>,
    path: &TransformPath<C>,
    mut q: SubQuadrant<C>,
    config: &ParametrizeConfig<C>,
    rng: &mut R,
) -> Result<Option<SubQuadrant<C>>> {
    for _ in 0..=config.max_halvings {
        let mut sound = true;
        for _ in 0..config.samples {
            let p = q.sample(rng);
            if !set.satisfies_signs(&path.evaluate_at(&p)?)? {
                sound = false;
                break;
            }
        }
        if sound {
            return Ok(Some(q));
        }
        q = q.halved();
    }
    Ok(None)
}

/// Grid points `k * step` strictly inside the box of half-widths `radii`.
pub fn grid_points<C: Scalar>(radii: &[C], step: &C) -> Vec<Vec<i64>> {
    let counts: Vec<i64> = radii
        .iter()
        .map(|r| {
            let m = (r.clone() / step.clone()).to_f64();
            (m - 1e-9).ceil() as i64 - 1
        })
        .collect();
    let mut out = vec![vec![]];
    for &m in &counts {
        out = out
            .into_iter()
            .flat_map(|v: Vec<i64>| {
                (-m..=m).map(move |k| {
                    let mut w = v.clone();
                    w.push(k);
                    w
                })
            })
            .collect();
    }
    out
}

/// Edge labels leading to a family node and its blow-up variables.
type FamilyKey = (Vec<String>, usize, usize);

fn coverage<C: Scalar>(
    set: &HBasicSet<C>,
    charts: &[Chart<C>],
    tree: Option<&TreeNode<C>>,
    config: &ParametrizeConfig<C>,
) -> Result<CoverageReport> {
    let radii: Vec<C> = set
        .polyradius
        .iter()
        .map(|r| if *r < config.coverage_radius { r.clone() } else { config.coverage_radius.clone() })
        .collect();
    let step = config.grid_step.clone();
    let f64_paths: Vec<TransformPath<f64>> = charts.iter().map(|c| c.path.map_coeffs(|x| x.to_f64())).collect();
    let points = grid_points(&radii, &step);
    let results: Vec<Option<(Option<usize>, Vec<f64>)>> = points
        .par_iter()
        .map(|k| -> Result<Option<(Option<usize>, Vec<f64>)>> {
            let x: Vec<C> = k.iter().map(|&k| step.clone() * C::from_ratio(k, 1)).collect();
            if !set.contains(&x)? {
                return Ok(None);
            }
            let xf: Vec<f64> = x.iter().map(Scalar::to_f64).collect();
            for (c, (chart, path)) in charts.iter().zip(&f64_paths).enumerate() {
                let pre = path.preimages(&xf)?;
                if pre.iter().any(|p| chart.quadrant.contains_f64(p, 1e-9)) {
                    return Ok(Some((Some(c), xf)));
                }
            }
            Ok(Some((None, xf)))
        })
        .collect::<Result<_>>()?;
    let mut hits = vec![0; charts.len()];
    let mut in_set = 0;
    let mut covered = 0;
    let mut missing: BTreeMap<FamilyKey, (Vec<f64>, usize)> = BTreeMap::new();
    for (hit, x) in results.into_iter().flatten() {
        in_set += 1;
        match hit {
            Some(c) => {
                covered += 1;
                hits[c] += 1;
            }
            None => {
                if let Some(tree) = tree {
                    if let Some((path, i, j, lambda)) = missing_family_at(tree, &x) {
                        let entry = missing.entry((path, i, j)).or_insert((vec![], 0));
                        entry.1 += 1;
                        let rounded = (lambda * 64.0).round() / 64.0;
                        if entry.0.len() < 8 && !entry.0.contains(&rounded) {
                            entry.0.push(rounded);
                        }
                    }
                }
            }
        }
    }
    Ok(CoverageReport {
        samples_in_set: in_set,
        covered,
        fraction: if in_set == 0 { 1.0 } else { covered as f64 / in_set as f64 },
        hits_per_chart: hits,
        missing_families: missing
            .into_iter()
            .map(|((path, i, j), (lambdas, samples))| MissingFamily { path, i, j, lambdas, samples })
            .collect(),
    })
}

/// Walks the expanded tree along `x` in floating point and names the first
/// family whose needed parameter is not expanded.
fn missing_family_at<C: Scalar>(root: &TreeNode<C>, x: &[f64]) -> Option<(Vec<String>, usize, usize, f64)> {
    let mut node = root;
    let mut q = x.to_vec();
    let mut labels = vec![];
    loop {
        match &node.children {
            Children::Leaf { .. } => return None,
            Children::Expanded(children) => {
                let mut next = None;
                for c in children {
                    let e = c.edge_in.as_ref()?.map_coeffs(|v| v.to_f64());
                    if let Some(p) = e.preimages(&q).ok()?.into_iter().next() {
                        next = Some((c, p, e.to_string()));
                        break;
                    }
                }
                let (c, p, label) = next?;
                labels.push(label);
                node = c;
                q = p;
            }
            Children::Family(f) => {
                if q[f.j].abs() < 1e-12 {
                    // The chart at infinity; it is always expanded.
                    let child = f.get(&Lambda::Infinity)?;
                    let e = child.edge_in.as_ref()?.map_coeffs(|v| v.to_f64());
                    q = e.preimages(&q).ok()?.into_iter().next()?;
                    labels.push(e.to_string());
                    node = child;
                    continue;
                }
                let lambda = q[f.i] / q[f.j];
                let found = f.expanded().into_iter().find(|(l, _)| match l {
                    Lambda::Finite(c) => (c.to_f64() - lambda).abs() < 1e-12,
                    Lambda::Infinity => false,
                });
                let (_, child) = match found {
                    Some(x) => x,
                    None => return Some((labels, f.i, f.j, lambda)),
                };
                let e = child.edge_in.as_ref()?.map_coeffs(|v| v.to_f64());
                q = e.preimages(&q).ok()?.into_iter().next()?;
                labels.push(e.to_string());
                node = child;
            }
        }
    }
}

/// `A' = {(x, y) : y_i = g_i(x), y_0 = 0, y_1 > 0, ..., y_q > 0}` on
/// `Delta_r x Delta_s`. `y_0` is present exactly when the set has an equation.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedSet<C> {
    pub base_nvars: usize,
    pub polyradius: Vec<C>,
    /// `y_i - g_i(x)`, one per lifted variable, in `n + m` variables.
    pub equations: Vec<Series<C>>,
    /// Lifted variable indices constrained to zero.
    pub zero_vars: Vec<usize>,
    /// Lifted variable indices constrained to be positive.
    pub positive_vars: Vec<usize>,
}

impl<C: Scalar> LiftedSet<C> {
    pub fn nvars(&self) -> usize {
        self.polyradius.len()
    }

    pub fn contains(&self, z: &[C]) -> Result<bool> {
        if z.iter().zip(&self.polyradius).any(|(x, r)| x.abs() >= *r) {
            return Ok(false);
        }
        for e in &self.equations {
            if !e.eval(z)?.is_zero() {
                return Ok(false);
            }
        }
        Ok(self.zero_vars.iter().all(|&v| z[v].is_zero()) && self.positive_vars.iter().all(|&v| z[v].is_positive()))
    }

    /// The lift of `x` (which lies in the fiber over `x` when `x` is in the set).
    pub fn lift_point(&self, set: &HBasicSet<C>, x: &[C]) -> Result<Vec<C>> {
        let mut z = x.to_vec();
        if let Some(g0) = &set.eq {
            z.push(g0.eval(x)?);
        }
        for g in &set.ineqs {
            z.push(g.eval(x)?);
        }
        Ok(z)
    }

    /// Single-equation form: the sum of squares of the graph equations and
    /// the `y_0` coordinate, with inequalities `y_i > 0`.
    pub fn to_hbasic(&self) -> Result<HBasicSet<C>> {
        let n = self.nvars();
        let mut eq = Series::zero(n);
        for e in &self.equations {
            eq = &eq + &(e * e);
        }
        for &v in &self.zero_vars {
            eq = &eq + &Series::var(n, v).pow(2);
        }
        let ineqs = self.positive_vars.iter().map(|&v| Series::var(n, v)).collect();
        HBasicSet::new(self.polyradius.clone(), Some(eq), ineqs)
    }
}

/// Lifts `A` along the graphs of its defining series. Each bound must exceed
/// the supremum of `|g_i|` on the polydisk: it is accepted outright when it
/// dominates the coefficient-sum bound, otherwise a witness is searched for.
pub fn lift_graphs<C: Scalar>(set: &HBasicSet<C>, bounds: &[C]) -> Result<LiftedSet<C>> {
    let n = set.nvars;
    let series: Vec<&Series<C>> = set.eq.iter().chain(&set.ineqs).collect();
    if bounds.len() != series.len() {
        return Err(HsetError::Inconsistent(format!("expected {} bounds, got {}", series.len(), bounds.len())));
    }
    if bounds.iter().any(|s| !s.is_positive()) {
        return Err(HsetError::Inconsistent("bounds must be positive".into()));
    }
    for (k, (g, s)) in series.iter().zip(bounds).enumerate() {
        if coefficient_sum_bound(g, &set.polyradius) <= *s {
            continue;
        }
        if let Some((value, witness)) = sup_witness(g, &set.polyradius) {
            if value >= s.to_f64() {
                return Err(HsetError::BoundTooSmall { index: k, bound: s.render(), value, witness });
            }
        }
    }
    let m = series.len();
    let mut equations = vec![];
    for (k, g) in series.iter().enumerate() {
        let mut lifted = (*g).clone();
        for _ in 0..m {
            lifted = lifted.insert_var(lifted.nvars());
        }
        equations.push(&Series::var(n + m, n + k) - &lifted);
    }
    let has_eq = set.eq.is_some();
    let zero_vars = if has_eq { vec![n] } else { vec![] };
    let first_ineq = n + usize::from(has_eq);
    let positive_vars = (first_ineq..n + m).collect();
    let mut polyradius = set.polyradius.clone();
    polyradius.extend(bounds.iter().cloned());
    Ok(LiftedSet { base_nvars: n, polyradius, equations, zero_vars, positive_vars })
}

/// Largest sampled `|g|` on the open polydisk: a coarse grid plus points
/// approaching every corner.
fn sup_witness<C: Scalar>(g: &Series<C>, radius: &[C]) -> Option<(f64, Vec<f64>)> {
    let p = g.to_f64_poly();
    let r: Vec<f64> = radius.iter().map(Scalar::to_f64).collect();
    let n = r.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |x: Vec<f64>| {
        let v = p.eval(&x).abs();
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, x));
        }
    };
    const STEPS: i64 = 16;
    let total = (2 * STEPS + 1).pow(n as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut x = vec![0.0; n];
        for (k, xk) in x.iter_mut().enumerate() {
            let t = rem % (2 * STEPS + 1) - STEPS;
            rem /= 2 * STEPS + 1;
            *xk = r[k] * t as f64 / (STEPS as f64 + 1.0);
        }
        consider(x);
    }
    for corner in 0..(1u64 << n) {
        let x = (0..n).map(|k| if corner >> k & 1 == 1 { -r[k] } else { r[k] } * (1.0 - 1e-6)).collect();
        consider(x);
    }
    best
}

/// Connected components of the grid-sampled membership mask under face
/// adjacency.
pub fn count_components_sampled<C: Scalar>(set: &HBasicSet<C>, step: &C) -> Result<usize> {
    let points = grid_points(&set.polyradius, step);
    let mask: Vec<bool> = points
        .par_iter()
        .map(|k| {
            let x: Vec<C> = k.iter().map(|&k| step.clone() * C::from_ratio(k, 1)).collect();
            set.contains(&x)
        })
        .collect::<Result<_>>()?;
    let index: BTreeMap<&[i64], usize> =
        points.iter().enumerate().filter(|(k, _)| mask[*k]).map(|(k, p)| (p.as_slice(), k)).collect();
    let mut uf = UnionFind::<usize>::new(points.len());
    for (p, &k) in &index {
        for axis in 0..p.len() {
            let mut nb = p.to_vec();
            nb[axis] += 1;
            if let Some(&m) = index.get(nb.as_slice()) {
                uf.union(k, m);
            }
        }
    }
    let mut roots: Vec<usize> = index.values().map(|&k| uf.find(k)).collect();
    roots.sort_unstable();
    roots.dedup();
    Ok(roots.len())
}
