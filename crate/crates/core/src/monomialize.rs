//! Lazily expanded admissible trees that *-monomialize a tuple of series.
//!
//! The engine is a task-stack machine. `Monomialize { level, f }` makes `f`
//! (a series in the first `level` variables) regular in `X_level` by a shear
//! and hands over to `Reduce`. `Reduce { level, f }` runs the induction on the
//! regularity order: Tschirnhausen step, recursive monomialization of the
//! Weierstrass coefficients together with the tracked lower variables,
//! ramification, linearization of the exponent tuples and the three blow-up
//! cases. Every edge transforms the whole stack and every tracked series.
//!
//! Blow-up families are infinite; only `{0, inf}` plus the configured seeds
//! are expanded eagerly, other parameters on demand via [`TreeNode::expand_lambda`].

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::hsets::{QuadrantFactor, SubQuadrant};
use crate::scalar::Scalar;
use crate::series::{Exponent, NormalCertificate, Normality, Series, SeriesError};
use crate::transforms::{ElementaryTransform, Lambda, TransformError, TransformPath};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MonomializeError {
    #[error("no targets given")]
    EmptyTargets,
    #[error("target {0} is the zero series")]
    ZeroTarget(usize),
    #[error("targets live in different numbers of variables")]
    DimensionMismatch,
    #[error("depth bound {max_depth} exceeded; termination measures along the branch: {trace}")]
    DepthExceeded { max_depth: usize, trace: String },
    #[error("normality of {what} is undecided at truncation {trunc}; retry with a larger truncation")]
    Inconclusive { what: String, trunc: String },
    #[error("{what} is not normal at a leaf")]
    LeafNotNormal { what: String },
    #[error("no shear makes the series regular")]
    ShearSearchExhausted,
    #[error("point lies on an exceptional locus not covered by the expanded charts")]
    UncoveredPoint,
    #[error("preimage of the point is not representable exactly")]
    NonRationalPreimage,
    #[error("node is not a blow-up family")]
    NotAFamily,
    #[error("exponent tuple entry {0} is not an integer")]
    NonIntegerExponent(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

type Result<T> = std::result::Result<T, MonomializeError>;

#[derive(Clone, Debug)]
pub struct MonomializeConfig<C> {
    pub max_depth: usize,
    pub trunc: u32,
    /// Finite blow-up parameters expanded eagerly besides `0` and `inf`.
    pub lambda_seeds: Vec<C>,
}

impl<C: Scalar> Default for MonomializeConfig<C> {
    fn default() -> Self {
        MonomializeConfig { max_depth: 64, trunc: 16, lambda_seeds: vec![C::one(), -C::one()] }
    }
}

/// Why a series is carried along the tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Target(usize),
    /// Image of the original coordinate `X_var`.
    Coordinate(usize),
    /// Critical variable `X_var` of the blow-up edge at depth `depth`.
    Critical { depth: usize, var: usize },
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Target(k) => write!(f, "target {}", k + 1),
            Role::Coordinate(v) => write!(f, "coordinate x{}", v + 1),
            Role::Critical { depth, var } => write!(f, "critical x{} of edge {}", var + 1, depth),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackedSeries<C> {
    pub role: Role,
    pub series: Series<C>,
}

/// `(level, d, alpha_l / l)` recorded at each blow-up case split.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminationMeasure<C> {
    pub level: usize,
    pub d: u32,
    pub alpha_over_l: Vec<C>,
}

impl<C: Scalar> fmt::Display for TerminationMeasure<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a: Vec<String> = self.alpha_over_l.iter().map(Scalar::render).collect();
        write!(f, "(n={}, d={}, α/l=({}))", self.level, self.d, a.join(","))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilyKind {
    /// Toric step making the exponent tuples comparable.
    Linearize,
    /// Blow-up of `X_level` against `X_j`; finite charts divide by `X_j^d`.
    Case { d: u32, j: usize },
}

#[derive(Clone, Debug)]
enum Task<C> {
    Monomialize { level: usize, f: Series<C> },
    Reduce { level: usize, f: Series<C>, last: Option<(u32, C)> },
}

#[derive(Clone, Debug)]
struct Work<C> {
    nvars: usize,
    tracked: Vec<TrackedSeries<C>>,
    stack: Vec<Task<C>>,
    depth: usize,
    trace: Vec<TerminationMeasure<C>>,
    coords_pending: bool,
}

enum Step<C> {
    Continue,
    Leaf,
    Edge(ElementaryTransform<C>),
    Split(Vec<ElementaryTransform<C>>),
    Family { i: usize, j: usize, kind: FamilyKind },
}

#[derive(Clone, Debug)]
pub struct LambdaFamily<C> {
    pub i: usize,
    pub j: usize,
    pub kind: FamilyKind,
    expanded: Vec<(Lambda<C>, TreeNode<C>)>,
    base: Box<Work<C>>,
    config: MonomializeConfig<C>,
}

impl<C: Scalar> LambdaFamily<C> {
    /// Expanded children in ascending parameter order, `inf` last.
    pub fn expanded(&self) -> Vec<(&Lambda<C>, &TreeNode<C>)> {
        let mut v: Vec<_> = self.expanded.iter().map(|(l, n)| (l, n)).collect();
        v.sort_by(|a, b| lambda_cmp(a.0, b.0));
        v
    }

    pub fn get(&self, lambda: &Lambda<C>) -> Option<&TreeNode<C>> {
        self.expanded.iter().find(|(l, _)| l == lambda).map(|(_, n)| n)
    }

    /// The blow-up edge for parameter `lambda`.
    pub fn edge(&self, lambda: &Lambda<C>) -> ElementaryTransform<C> {
        ElementaryTransform::blow_up(self.i, self.j, lambda.clone()).expect("family variables differ")
    }

    fn expand(&mut self, lambda: &Lambda<C>) -> Result<&TreeNode<C>> {
        if let Some(pos) = self.expanded.iter().position(|(l, _)| l == lambda) {
            return Ok(&self.expanded[pos].1);
        }
        let node = expand_family_child(&self.base, self.i, self.j, &self.kind, lambda, &self.config)?;
        self.expanded.push((lambda.clone(), node));
        Ok(&self.expanded.last().expect("just pushed").1)
    }
}

fn lambda_cmp<C: Scalar>(a: &Lambda<C>, b: &Lambda<C>) -> std::cmp::Ordering {
    use std::cmp::Ordering;
    match (a, b) {
        (Lambda::Infinity, Lambda::Infinity) => Ordering::Equal,
        (Lambda::Infinity, _) => Ordering::Greater,
        (_, Lambda::Infinity) => Ordering::Less,
        (Lambda::Finite(x), Lambda::Finite(y)) => x.partial_cmp(y).unwrap_or(Ordering::Equal),
    }
}

#[derive(Clone, Debug)]
pub enum Children<C> {
    Leaf { certificates: Vec<NormalCertificate<C>> },
    Expanded(Vec<TreeNode<C>>),
    Family(LambdaFamily<C>),
}

#[derive(Clone, Debug)]
pub struct TreeNode<C> {
    pub edge_in: Option<ElementaryTransform<C>>,
    /// Parameter of the incoming edge when the parent is a family.
    pub lambda_in: Option<Lambda<C>>,
    pub series_state: Vec<TrackedSeries<C>>,
    pub children: Children<C>,
}

impl<C: Scalar> TreeNode<C> {
    /// A leaf built by hand, certifying every series in `series_state`.
    pub fn leaf(edge_in: Option<ElementaryTransform<C>>, series_state: Vec<TrackedSeries<C>>) -> Result<Self> {
        let certificates = certify_all(&series_state)?;
        Ok(TreeNode { edge_in, lambda_in: None, series_state, children: Children::Leaf { certificates } })
    }

    /// An inner node with explicit children, for hand-built trees.
    pub fn with_children(
        edge_in: Option<ElementaryTransform<C>>,
        series_state: Vec<TrackedSeries<C>>,
        children: Vec<TreeNode<C>>,
    ) -> Self {
        TreeNode { edge_in, lambda_in: None, series_state, children: Children::Expanded(children) }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.children, Children::Leaf { .. })
    }

    pub fn certificates(&self) -> Option<&[NormalCertificate<C>]> {
        match &self.children {
            Children::Leaf { certificates } => Some(certificates),
            _ => None,
        }
    }

    pub fn family(&self) -> Option<&LambdaFamily<C>> {
        match &self.children {
            Children::Family(f) => Some(f),
            _ => None,
        }
    }

    /// Expanded children in a fixed order.
    pub fn child_nodes(&self) -> Vec<&TreeNode<C>> {
        match &self.children {
            Children::Leaf { .. } => vec![],
            Children::Expanded(v) => v.iter().collect(),
            Children::Family(f) => f.expanded().into_iter().map(|(_, n)| n).collect(),
        }
    }

    /// Child of a blow-up family for `lambda`, computed on first use.
    pub fn expand_lambda(&mut self, lambda: &Lambda<C>) -> Result<&TreeNode<C>> {
        match &mut self.children {
            Children::Family(f) => f.expand(lambda),
            _ => Err(MonomializeError::NotAFamily),
        }
    }

    /// Every root-to-leaf branch of the expanded tree.
    pub fn branches(&self) -> Vec<Branch<'_, C>> {
        let mut out = vec![];
        let mut path = vec![];
        collect_branches(self, &mut path, &mut out);
        out
    }

    /// Number of expanded nodes.
    pub fn size(&self) -> usize {
        1 + self.child_nodes().iter().map(|c| c.size()).sum::<usize>()
    }

    pub fn nvars(&self) -> usize {
        self.series_state.first().map_or(0, |t| t.series.nvars())
    }
}

/// A root-to-leaf path of the expanded tree.
#[derive(Clone, Debug)]
pub struct Branch<'a, C> {
    pub edges: Vec<&'a ElementaryTransform<C>>,
    pub leaf: &'a TreeNode<C>,
}

impl<C: Scalar> Branch<'_, C> {
    pub fn path(&self, nvars: usize) -> TransformPath<C> {
        TransformPath { nvars, steps: self.edges.iter().map(|e| (*e).clone()).collect() }
    }
}

fn collect_branches<'a, C: Scalar>(
    node: &'a TreeNode<C>,
    path: &mut Vec<&'a ElementaryTransform<C>>,
    out: &mut Vec<Branch<'a, C>>,
) {
    if let Some(e) = &node.edge_in {
        path.push(e);
    }
    if node.is_leaf() {
        out.push(Branch { edges: path.clone(), leaf: node });
    }
    for c in node.child_nodes() {
        collect_branches(c, path, out);
    }
    if node.edge_in.is_some() {
        path.pop();
    }
}

fn certify_all<C: Scalar>(state: &[TrackedSeries<C>]) -> Result<Vec<NormalCertificate<C>>> {
    state
        .iter()
        .map(|t| match t.series.is_normal()? {
            Normality::Normal(c) => Ok(c),
            Normality::UnknownAtTruncation => {
                Err(MonomializeError::Inconclusive { what: t.role.to_string(), trunc: t.series.trunc().to_string() })
            }
            Normality::NotNormal => Err(MonomializeError::LeafNotNormal { what: t.role.to_string() }),
        })
        .collect()
}

/// Normality of a task series that is known to live in the first `level`
/// variables; the unused variables are dropped before deciding.
fn level_normality<C: Scalar>(f: &Series<C>, level: usize) -> Result<Normality<C>> {
    let mut g = f.clone();
    for v in (level..f.nvars()).rev() {
        if g.depends_on(v) {
            return Ok(f.is_normal()?);
        }
        g = g.drop_var(v)?;
    }
    Ok(match g.is_normal()? {
        Normality::Normal(c) => {
            let mut alpha = c.alpha.entries().to_vec();
            alpha.resize(f.nvars(), 0);
            let alpha = Exponent::new(alpha);
            let unit = f.monomial_divide_by(&alpha)?;
            Normality::Normal(NormalCertificate { alpha, unit_constant: c.unit_constant, unit })
        }
        other => other,
    })
}

fn free_of_from<C: Scalar>(f: &Series<C>, from: usize) -> bool {
    (from..f.nvars()).all(|v| !f.depends_on(v))
}

fn factorial_u32(d: u32) -> u32 {
    (1..=d).product()
}

/// Integer vectors of dimension `dim` with max-norm exactly `r`, in
/// lexicographic order.
fn shell(dim: usize, r: i64) -> Vec<Vec<i64>> {
    let mut out = vec![];
    let mut cur = vec![-r; dim];
    loop {
        if cur.iter().any(|c| c.abs() == r) {
            out.push(cur.clone());
        }
        let mut k = dim;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if cur[k] < r {
                cur[k] += 1;
                for c in cur.iter_mut().skip(k + 1) {
                    *c = -r;
                }
                break;
            }
        }
    }
}

const MAX_SHEAR_NORM: i64 = 64;

impl<C: Scalar> Work<C> {
    fn new(targets: &[Series<C>]) -> Result<Self> {
        let nvars = targets[0].nvars();
        let tracked: Vec<TrackedSeries<C>> =
            targets.iter().enumerate().map(|(k, s)| TrackedSeries { role: Role::Target(k), series: s.clone() }).collect();
        let product = targets.iter().skip(1).try_fold(targets[0].clone(), |acc, t| acc.checked_mul(t))?;
        Ok(Work {
            nvars,
            tracked,
            stack: vec![Task::Monomialize { level: nvars, f: product }],
            depth: 0,
            trace: vec![],
            coords_pending: true,
        })
    }

    fn add_coordinates(&mut self) {
        if !self.coords_pending {
            return;
        }
        self.coords_pending = false;
        for v in 0..self.nvars.saturating_sub(1) {
            self.tracked.push(TrackedSeries { role: Role::Coordinate(v), series: Series::var(self.nvars, v) });
        }
    }

    fn trace_string(&self) -> String {
        let parts: Vec<String> = self.trace.iter().map(ToString::to_string).collect();
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join(" > ")
        }
    }

    fn advance(&mut self, edge: &ElementaryTransform<C>, config: &MonomializeConfig<C>) -> Result<()> {
        self.depth += 1;
        if self.depth > config.max_depth {
            return Err(MonomializeError::DepthExceeded { max_depth: config.max_depth, trace: self.trace_string() });
        }
        for t in &mut self.tracked {
            t.series = edge.apply(&t.series)?;
        }
        for task in &mut self.stack {
            match task {
                Task::Monomialize { f, .. } | Task::Reduce { f, .. } => *f = edge.apply(f)?,
            }
        }
        self.add_coordinates();
        if let Some(var) = edge.critical_variable() {
            self.tracked
                .push(TrackedSeries { role: Role::Critical { depth: self.depth, var }, series: Series::var(self.nvars, var) });
        }
        Ok(())
    }

    fn root_precision(&self, f: &Series<C>, config: &MonomializeConfig<C>) -> u32 {
        match f.trunc() {
            crate::series::Trunc::Finite(n) => n.min(config.trunc),
            crate::series::Trunc::Exact => config.trunc,
        }
    }

    fn step(&mut self, config: &MonomializeConfig<C>) -> Result<Step<C>> {
        let Some(top) = self.stack.last().cloned() else {
            return Ok(Step::Leaf);
        };
        match top {
            Task::Monomialize { level, f } => self.step_monomialize(level, f),
            Task::Reduce { level, f, last } => self.step_reduce(level, f, last, config),
        }
    }

    fn step_monomialize(&mut self, level: usize, f: Series<C>) -> Result<Step<C>> {
        if f.is_zero() {
            return Err(MonomializeError::Inconclusive { what: "a product of factors".into(), trunc: f.trunc().to_string() });
        }
        if level_normality(&f, level)?.is_normal() {
            self.stack.pop();
            if self.stack.is_empty() {
                self.add_coordinates();
            }
            return Ok(Step::Continue);
        }
        let v = level - 1;
        let m = f.order().expect("nonzero series has an order");
        let q = f.qk_in(v, m)?;
        let eval_at = |c: &[i64]| -> Result<C> {
            let mut p = vec![C::zero(); self.nvars];
            for (k, ck) in c.iter().enumerate() {
                p[k] = C::from_ratio(*ck, 1);
            }
            p[v] = C::one();
            Ok(q.eval(&p)?)
        };
        let replace = Task::Reduce { level, f: f.clone(), last: None };
        *self.stack.last_mut().expect("nonempty stack") = replace;
        if !eval_at(&vec![0; v])?.is_zero() {
            if self.stack.len() == 1 {
                self.add_coordinates();
            }
            return Ok(Step::Continue);
        }
        for r in 1..=MAX_SHEAR_NORM {
            for c in shell(v, r) {
                if !eval_at(&c)?.is_zero() {
                    let coeffs = c.iter().map(|&k| C::from_ratio(k, 1)).collect();
                    return Ok(Step::Edge(ElementaryTransform::shear(v, coeffs)?));
                }
            }
        }
        Err(MonomializeError::ShearSearchExhausted)
    }

    fn step_reduce(
        &mut self,
        level: usize,
        f: Series<C>,
        last: Option<(u32, C)>,
        config: &MonomializeConfig<C>,
    ) -> Result<Step<C>> {
        if f.is_zero() {
            return Err(MonomializeError::Inconclusive { what: "a reduced series".into(), trunc: f.trunc().to_string() });
        }
        if level_normality(&f, level)?.is_normal() {
            self.stack.pop();
            return Ok(Step::Continue);
        }
        let v = level - 1;
        let Some(d) = f.regularity_order_in(v) else {
            *self.stack.last_mut().expect("nonempty stack") = Task::Monomialize { level, f };
            return Ok(Step::Continue);
        };
        if d == 0 {
            self.stack.pop();
            return Ok(Step::Continue);
        }
        let split = f.weierstrass_split_in(v, d)?;
        if !split.coeffs[0].is_zero() {
            let b = f.formal_root_in(v, d, self.root_precision(&f, config))?;
            return Ok(Step::Edge(ElementaryTransform::tschirnhausen(v, b)?));
        }

        let coeffs: Vec<(u32, Series<C>)> = split
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| (k as u32 + 1, c.clone()))
            .collect();
        if coeffs.is_empty() {
            self.stack.pop();
            return Ok(Step::Continue);
        }

        // Lower-level factors: the coefficients and every tracked series that
        // lives in the first `v` variables.
        let mut factors: Vec<Series<C>> = coeffs.iter().map(|(_, c)| c.clone()).collect();
        factors.extend(
            self.tracked
                .iter()
                .map(|t| &t.series)
                .filter(|s| free_of_from(s, v) && s.order().is_some_and(|o| o > 0))
                .cloned(),
        );
        let mut all_normal = true;
        for s in &factors {
            if !level_normality(s, v)?.is_normal() {
                all_normal = false;
                break;
            }
        }
        if !all_normal {
            let product = factors.iter().skip(1).try_fold(factors[0].clone(), |acc, t| acc.checked_mul(t))?;
            self.stack.push(Task::Monomialize { level: v, f: product });
            return Ok(Step::Continue);
        }

        let mut alphas: Vec<(u32, Vec<u32>)> = vec![];
        for (i, c) in &coeffs {
            let cert = level_normality(c, v)?;
            let cert = cert.certificate().expect("checked normal above");
            alphas.push((*i, cert.alpha.entries().to_vec()));
        }

        // Ramify the first variable whose exponents are not all divisible.
        for j in 0..v {
            if alphas.iter().any(|(i, a)| a[j] % i != 0) {
                let e = factorial_u32(d);
                return Ok(Step::Split(vec![
                    ElementaryTransform::ramification(j, e, true)?,
                    ElementaryTransform::ramification(j, e, false)?,
                ]));
            }
        }

        let tuples: Vec<Vec<i64>> =
            alphas.iter().map(|(i, a)| a.iter().map(|&x| i64::from(x / i)).collect()).collect();
        if let Some((p, q)) = first_incomparable_pivot(&tuples) {
            return Ok(Step::Family { i: p, j: q, kind: FamilyKind::Linearize });
        }

        let l = (0..tuples.len())
            .find(|&a| tuples.iter().all(|t| tuples[a].iter().zip(t).all(|(x, y)| x <= y)))
            .expect("comparable tuples have a minimum");
        let (il, alpha_l) = &alphas[l];
        let j = alpha_l.iter().position(|&x| x != 0).expect("coefficient vanishes at the origin");
        let t_l: Vec<C> = alpha_l.iter().map(|&x| C::from_ratio(i64::from(x), i64::from(*il))).collect();
        let sum = t_l.iter().fold(C::zero(), |a, b| a + b.clone());
        if let Some((d0, s0)) = &last {
            debug_assert!(d < *d0 || (d == *d0 && sum < *s0), "termination measure must decrease");
        }
        self.trace.push(TerminationMeasure { level, d, alpha_over_l: t_l });
        if let Some(Task::Reduce { last, .. }) = self.stack.last_mut() {
            *last = Some((d, sum));
        }
        Ok(Step::Family { i: v, j, kind: FamilyKind::Case { d, j } })
    }

    fn after_family_edge(&mut self, kind: &FamilyKind, lambda: &Lambda<C>) -> Result<()> {
        let FamilyKind::Case { d, j } = kind else {
            return Ok(());
        };
        match lambda {
            Lambda::Infinity => {
                self.stack.pop();
            }
            Lambda::Finite(_) => {
                if let Some(Task::Reduce { f, .. }) = self.stack.last_mut() {
                    let divisor = Exponent::unit(self.nvars, *j);
                    let mut g = f.clone();
                    for _ in 0..*d {
                        g = g.monomial_divide_by(&divisor).map_err(|_| MonomializeError::Inconclusive {
                            what: "a blow-up quotient".into(),
                            trunc: f.trunc().to_string(),
                        })?;
                    }
                    *f = g;
                }
            }
        }
        Ok(())
    }
}

/// First incomparable pair of tuples, resolved into the blow-up variables
/// `(p, q)`: `p` carries the largest difference entry and `q` the largest
/// entry of opposite sign.
fn first_incomparable_pivot(tuples: &[Vec<i64>]) -> Option<(usize, usize)> {
    for a in 0..tuples.len() {
        for b in a + 1..tuples.len() {
            let e: Vec<i64> = tuples[a].iter().zip(&tuples[b]).map(|(x, y)| x - y).collect();
            let pos = e.iter().any(|&x| x > 0);
            let neg = e.iter().any(|&x| x < 0);
            if pos && neg {
                let max = e.iter().map(|x| x.abs()).max().unwrap_or(0);
                let p = e.iter().position(|x| x.abs() == max).expect("max exists");
                let sign = e[p].signum();
                let q = (0..e.len())
                    .filter(|&k| e[k].signum() == -sign)
                    .max_by_key(|&k| (e[k].abs(), std::cmp::Reverse(k)))
                    .expect("opposite sign entry exists");
                return Some((p, q));
            }
        }
    }
    None
}

fn grow<C: Scalar>(
    mut work: Work<C>,
    edge_in: Option<ElementaryTransform<C>>,
    lambda_in: Option<Lambda<C>>,
    config: &MonomializeConfig<C>,
) -> Result<TreeNode<C>> {
    loop {
        match work.step(config)? {
            Step::Continue => continue,
            Step::Leaf => {
                let certificates = certify_all(&work.tracked)?;
                return Ok(TreeNode {
                    edge_in,
                    lambda_in,
                    series_state: work.tracked,
                    children: Children::Leaf { certificates },
                });
            }
            Step::Edge(e) => {
                let mut next = work.clone();
                next.advance(&e, config)?;
                let child = grow(next, Some(e), None, config)?;
                return Ok(TreeNode {
                    edge_in,
                    lambda_in,
                    series_state: work.tracked,
                    children: Children::Expanded(vec![child]),
                });
            }
            Step::Split(edges) => {
                let children = edges
                    .into_par_iter()
                    .map(|e| {
                        let mut next = work.clone();
                        next.advance(&e, config)?;
                        grow(next, Some(e), None, config)
                    })
                    .collect::<Result<Vec<_>>>()?;
                return Ok(TreeNode { edge_in, lambda_in, series_state: work.tracked, children: Children::Expanded(children) });
            }
            Step::Family { i, j, kind } => {
                let mut lambdas = vec![Lambda::Finite(C::zero()), Lambda::Infinity];
                for s in &config.lambda_seeds {
                    let l = Lambda::Finite(s.clone());
                    if !lambdas.contains(&l) {
                        lambdas.push(l);
                    }
                }
                let expanded = lambdas
                    .into_par_iter()
                    .map(|l| expand_family_child(&work, i, j, &kind, &l, config).map(|n| (l, n)))
                    .collect::<Result<Vec<_>>>()?;
                let tracked = work.tracked.clone();
                let family =
                    LambdaFamily { i, j, kind, expanded, base: Box::new(work), config: config.clone() };
                return Ok(TreeNode { edge_in, lambda_in, series_state: tracked, children: Children::Family(family) });
            }
        }
    }
}

fn expand_family_child<C: Scalar>(
    base: &Work<C>,
    i: usize,
    j: usize,
    kind: &FamilyKind,
    lambda: &Lambda<C>,
    config: &MonomializeConfig<C>,
) -> Result<TreeNode<C>> {
    let edge = ElementaryTransform::blow_up(i, j, lambda.clone())?;
    let mut next = base.clone();
    next.advance(&edge, config)?;
    next.after_family_edge(kind, lambda)?;
    grow(next, Some(edge), Some(lambda.clone()), config)
}

/// Builds the lazily expanded admissible tree for `targets`.
pub fn monomialize<C: Scalar>(targets: &[Series<C>], config: &MonomializeConfig<C>) -> Result<TreeNode<C>> {
    if targets.is_empty() {
        return Err(MonomializeError::EmptyTargets);
    }
    let nvars = targets[0].nvars();
    if targets.iter().any(|t| t.nvars() != nvars) || nvars == 0 {
        return Err(MonomializeError::DimensionMismatch);
    }
    if let Some(k) = targets.iter().position(Series::is_zero) {
        return Err(MonomializeError::ZeroTarget(k));
    }
    let targets: Vec<Series<C>> = targets
        .iter()
        .map(|t| if t.is_exact() { t.clone() } else { t.truncate(config.trunc) })
        .collect();
    grow(Work::new(&targets)?, None, None, config)
}

/// A violation found by [`star_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct StarViolation {
    /// Compact labels of the edges from the root to the offending leaf.
    pub path: Vec<String>,
    /// Position of the blow-up edge along the path.
    pub edge_index: usize,
    pub critical_var: usize,
}

/// Checks that below every expanded blow-up edge the image of its critical
/// variable is normal at every expanded leaf. Recomputed from the edges only.
pub fn star_check<C: Scalar>(root: &TreeNode<C>) -> Vec<StarViolation> {
    let nvars = root.nvars();
    let mut out = vec![];
    for branch in root.branches() {
        for (k, e) in branch.edges.iter().enumerate() {
            let Some(w) = e.critical_variable() else { continue };
            let below = TransformPath { nvars, steps: branch.edges[k + 1..].iter().map(|e| (*e).clone()).collect() };
            let normal = below
                .compose(&Series::var(nvars, w))
                .ok()
                .and_then(|s| s.is_normal().ok())
                .is_some_and(|n| n.is_normal());
            if !normal {
                out.push(StarViolation {
                    path: branch.edges.iter().map(ToString::to_string).collect(),
                    edge_index: k,
                    critical_var: w,
                });
            }
        }
    }
    out
}

/// Toric sequence of `lambda = 0` blow-ups after which the tuples are
/// pairwise comparable. Returns the path and the transformed tuples sorted
/// ascending.
pub fn linearize_exponents<C: Scalar>(tuples: &[Vec<C>]) -> Result<(TransformPath<C>, Vec<Vec<C>>)> {
    let dim = tuples.first().map_or(0, Vec::len);
    let mut ints: Vec<Vec<i64>> = vec![];
    for t in tuples {
        if t.len() != dim {
            return Err(MonomializeError::DimensionMismatch);
        }
        let mut row = vec![];
        for x in t {
            if !x.is_integer_valued() || x.is_negative() {
                return Err(MonomializeError::NonIntegerExponent(x.render()));
            }
            row.push(x.to_f64().round() as i64);
        }
        ints.push(row);
    }
    let mut path = TransformPath::new(dim);
    while let Some((p, q)) = first_incomparable_pivot(&ints) {
        for t in &mut ints {
            t[q] += t[p];
        }
        path.push(ElementaryTransform::blow_up(p, q, Lambda::Finite(C::zero()))?);
    }
    ints.sort_by(|a, b| {
        if a.iter().zip(b).all(|(x, y)| x <= y) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    ints.dedup();
    let out = ints.into_iter().map(|t| t.into_iter().map(|x| C::from_ratio(x, 1)).collect()).collect();
    Ok((path, out))
}

/// Integrality test used for exponent tuples.
trait IntegerValued {
    fn is_integer_valued(&self) -> bool;
}

impl<C: Scalar> IntegerValued for C {
    fn is_integer_valued(&self) -> bool {
        let r = C::from_ratio(self.to_f64().round() as i64, 1);
        r == *self
    }
}

/// Result of [`chart_at_point`].
#[derive(Clone, Debug)]
pub struct PointChart<C> {
    pub path: TransformPath<C>,
    pub preimage: Vec<C>,
    pub quadrant: SubQuadrant<C>,
    pub certificates: Vec<NormalCertificate<C>>,
}

/// Follows the branch through `p`, choosing `lambda = q_i / q_j` (or `inf`
/// when `q_j = 0`) at every blow-up family.
pub fn chart_at_point<C: Scalar>(targets: &[Series<C>], p: &[C], config: &MonomializeConfig<C>) -> Result<PointChart<C>> {
    let mut root = monomialize(targets, config)?;
    chart_in_tree(&mut root, p)
}

/// [`chart_at_point`] on an existing tree, expanding families as needed.
pub fn chart_in_tree<C: Scalar>(root: &mut TreeNode<C>, p: &[C]) -> Result<PointChart<C>> {
    let nvars = root.nvars();
    if p.len() != nvars {
        return Err(MonomializeError::DimensionMismatch);
    }
    if p.iter().all(|x| x.is_zero()) {
        return Err(MonomializeError::UncoveredPoint);
    }
    let mut path = TransformPath::new(nvars);
    let mut q = p.to_vec();
    let mut node: &mut TreeNode<C> = root;
    loop {
        match &mut node.children {
            Children::Leaf { certificates } => {
                let quadrant = SubQuadrant::around_point(&q);
                return Ok(PointChart { path, preimage: q, quadrant, certificates: certificates.clone() });
            }
            Children::Expanded(children) => {
                let mut chosen = None;
                for (k, c) in children.iter().enumerate() {
                    let e = c.edge_in.as_ref().expect("children carry edges");
                    let pre = e.preimages(&q)?;
                    if let Some(first) = pick_preimage(e, pre) {
                        chosen = Some((k, first));
                        break;
                    }
                }
                let Some((k, next)) = chosen else {
                    return Err(if children.iter().any(|c| matches!(c.edge_in, Some(ElementaryTransform::Ramification { .. }))) {
                        MonomializeError::NonRationalPreimage
                    } else {
                        MonomializeError::UncoveredPoint
                    });
                };
                path.push(children[k].edge_in.clone().expect("children carry edges"));
                q = next;
                node = &mut children[k];
            }
            Children::Family(family) => {
                let (i, j) = (family.i, family.j);
                let lambda = if !q[j].is_zero() {
                    Lambda::Finite(q[i].clone() / q[j].clone())
                } else if !q[i].is_zero() {
                    Lambda::Infinity
                } else {
                    return Err(MonomializeError::UncoveredPoint);
                };
                family.expand(&lambda)?;
                let pos = family.expanded.iter().position(|(l, _)| *l == lambda).expect("expanded above");
                let edge = family.edge(&lambda);
                let next = edge.preimages(&q)?.into_iter().next().ok_or(MonomializeError::UncoveredPoint)?;
                path.push(edge);
                q = next;
                node = &mut family.expanded[pos].1;
            }
        }
    }
}

/// For ramifications keep the preimage with the chart's sign convention:
/// the nonnegative root.
fn pick_preimage<C: Scalar>(e: &ElementaryTransform<C>, pre: Vec<Vec<C>>) -> Option<Vec<C>> {
    match e {
        ElementaryTransform::Ramification { i, .. } => {
            let mut pre = pre;
            pre.sort_by(|a, b| b[*i].partial_cmp(&a[*i]).unwrap_or(std::cmp::Ordering::Equal));
            pre.into_iter().next()
        }
        _ => pre.into_iter().next(),
    }
}

impl QuadrantFactor {
    fn of_sign<C: Scalar>(x: &C) -> QuadrantFactor {
        if x.is_zero() {
            QuadrantFactor::Zero
        } else if x.is_positive() {
            QuadrantFactor::Pos
        } else {
            QuadrantFactor::Neg
        }
    }
}

impl<C: Scalar> SubQuadrant<C> {
    /// The sub-quadrant containing `q` with radii `2|q_i|` (one where `q_i = 0`).
    pub fn around_point(q: &[C]) -> Self {
        let two = C::one() + C::one();
        SubQuadrant {
            factors: q.iter().map(QuadrantFactor::of_sign).collect(),
            radii: q.iter().map(|x| if x.is_zero() { C::one() } else { x.abs() * two.clone() }).collect(),
        }
    }
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

    fn config(seeds: &[i64]) -> MonomializeConfig<Rational> {
        MonomializeConfig { max_depth: 64, trunc: 16, lambda_seeds: seeds.iter().map(|&k| q(k, 1)).collect() }
    }

    fn y2_minus_x2() -> Q {
        poly(2, &[(&[0, 2], 1), (&[2, 0], -1)])
    }

    #[test]
    fn linear_target_needs_one_translation() {
        let tree = monomialize(&[poly(2, &[(&[0, 1], 1), (&[1, 0], -1)])], &config(&[])).unwrap();
        let branches = tree.branches();
        assert_eq!(branches.len(), 1);
        let b = &branches[0];
        assert_eq!(b.edges.len(), 1);
        assert_eq!(*b.edges[0], ElementaryTransform::Tschirnhausen { i: 1, h: Q::var(2, 0) });
        assert_eq!(b.leaf.series_state[0].series, Q::var(2, 1));
        assert_eq!(b.leaf.certificates().unwrap()[0].alpha, Exponent::new(vec![0, 1]));
    }

    #[test]
    fn cone_family_leaves() {
        let tree = monomialize(&[y2_minus_x2()], &config(&[1, -1])).unwrap();
        let family = tree.family().expect("root is a blow-up family");
        assert_eq!((family.i, family.j), (1, 0));
        let leaf = |l: Lambda<Rational>| {
            let node = family.get(&l).unwrap();
            assert!(node.is_leaf());
            (node.series_state[0].series.clone(), node.certificates().unwrap()[0].clone())
        };
        let (s, c) = leaf(Lambda::Infinity);
        assert_eq!(s, poly(2, &[(&[0, 2], 1), (&[2, 2], -1)]));
        assert_eq!(c.alpha, Exponent::new(vec![0, 2]));
        let (s, c) = leaf(Lambda::Finite(q(0, 1)));
        assert_eq!(s, poly(2, &[(&[2, 2], 1), (&[2, 0], -1)]));
        assert_eq!(c.alpha, Exponent::new(vec![2, 0]));
        for (lambda, two) in [(1, 2), (-1, -2)] {
            let (s, c) = leaf(Lambda::Finite(q(lambda, 1)));
            assert_eq!(s, poly(2, &[(&[2, 2], 1), (&[2, 1], two)]));
            assert_eq!(c.alpha, Exponent::new(vec![2, 1]));
            assert_eq!(c.unit_constant, q(two, 1));
        }
    }

    #[test]
    fn cusp_ramifies_then_reduces_exponent() {
        let tree = monomialize(&[poly(2, &[(&[0, 2], 1), (&[3, 0], -1)])], &config(&[])).unwrap();
        let Children::Expanded(ram) = &tree.children else { panic!("expected ramification children") };
        assert_eq!(ram.len(), 2);
        assert_eq!(ram[0].edge_in, Some(ElementaryTransform::Ramification { i: 0, d: 2, positive: true }));
        assert_eq!(ram[0].series_state[0].series, poly(2, &[(&[0, 2], 1), (&[6, 0], -1)]));
        let family = ram[0].family().unwrap();
        let zero = family.get(&Lambda::Finite(q(0, 1))).unwrap();
        // X^2 Y^2 - X^6 = X^2 (Y^2 - X^4): the next case split sees exponent 4.
        assert_eq!(zero.series_state[0].series, poly(2, &[(&[2, 2], 1), (&[6, 0], -1)]));
        assert!(zero.family().is_some());
        for b in tree.branches() {
            assert!(b.leaf.certificates().is_some());
        }
    }

    #[test]
    fn lazy_expansion_is_memoized() {
        let mut tree = monomialize(&[y2_minus_x2()], &config(&[])).unwrap();
        let two = Lambda::Finite(q(2, 1));
        assert!(tree.family().unwrap().get(&two).is_none());
        let first = tree.expand_lambda(&two).unwrap() as *const TreeNode<Rational>;
        let node = tree.family().unwrap().get(&two).unwrap();
        assert_eq!(node.series_state[0].series, poly(2, &[(&[2, 2], 1), (&[2, 1], 4), (&[2, 0], 3)]));
        assert_eq!(node.certificates().unwrap()[0].unit_constant, q(3, 1));
        let second = tree.expand_lambda(&two).unwrap() as *const TreeNode<Rational>;
        assert_eq!(first, second);
        let size = tree.size();
        tree.expand_lambda(&Lambda::Infinity).unwrap();
        assert_eq!(tree.size(), size);
    }

    #[test]
    fn expand_lambda_on_leaf_fails() {
        let mut tree = monomialize(&[poly(2, &[(&[1, 1], 1)])], &config(&[])).unwrap();
        assert_eq!(tree.expand_lambda(&Lambda::Infinity).unwrap_err(), MonomializeError::NotAFamily);
    }

    #[test]
    fn star_check_flags_broken_critical_variable() {
        let blow = ElementaryTransform::blow_up(1, 0, Lambda::Finite(q(0, 1))).unwrap();
        let shear = ElementaryTransform::shear(1, vec![q(1, 1)]).unwrap();
        let x = Q::var(2, 0);
        let leaf_series = vec![TrackedSeries { role: Role::Coordinate(1), series: Q::var(2, 1) }];
        let leaf = TreeNode::leaf(Some(shear), leaf_series.clone()).unwrap();
        let mid = TreeNode::with_children(Some(blow), vec![TrackedSeries { role: Role::Coordinate(0), series: x }], vec![leaf]);
        let root = TreeNode::with_children(None, leaf_series.clone(), vec![mid]);
        let v = star_check(&root);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].edge_index, 0);
        assert_eq!(v[0].critical_var, 0);

        let bare = TreeNode::leaf(None, leaf_series).unwrap();
        assert!(star_check(&bare).is_empty());
        assert!(star_check(&monomialize(&[y2_minus_x2()], &config(&[1, -1])).unwrap()).is_empty());
    }

    #[test]
    fn linearize_examples() {
        let t = |v: &[i64]| v.iter().map(|&k| q(k, 1)).collect::<Vec<_>>();
        let (path, out) = linearize_exponents(&[t(&[1, 0]), t(&[2, 0])]).unwrap();
        assert!(path.is_empty());
        assert_eq!(out, vec![t(&[1, 0]), t(&[2, 0])]);

        let (path, out) = linearize_exponents(&[t(&[1, 0]), t(&[0, 1])]).unwrap();
        assert_eq!(path.len(), 1);
        assert_eq!(out, vec![t(&[0, 1]), t(&[1, 1])]);
        // Replaying the path on X and Y gives comparable monomials.
        let x = path.compose(&Q::var(2, 0)).unwrap();
        let y = path.compose(&Q::var(2, 1)).unwrap();
        let ex = x.is_normal().unwrap().certificate().unwrap().alpha.clone();
        let ey = y.is_normal().unwrap().certificate().unwrap().alpha.clone();
        assert!(ex.partial_cmp_divisibility(&ey).is_some());

        let (path, out) = linearize_exponents(&[t(&[3, 5])]).unwrap();
        assert!(path.is_empty());
        assert_eq!(out.len(), 1);
        assert!(linearize_exponents(&[vec![q(1, 2), q(0, 1)]]).is_err());
    }

    #[test]
    fn chart_at_point_examples() {
        let chart = chart_at_point(&[y2_minus_x2()], &[q(1, 4), q(1, 8)], &config(&[])).unwrap();
        assert_eq!(chart.path.steps, vec![ElementaryTransform::BlowUp { i: 1, j: 0, lambda: q(1, 2) }]);
        assert_eq!(chart.preimage, vec![q(1, 4), q(0, 1)]);
        assert_eq!(chart.path.evaluate_at(&chart.preimage).unwrap(), vec![q(1, 4), q(1, 8)]);
        assert_eq!(chart.quadrant.factors, vec![QuadrantFactor::Pos, QuadrantFactor::Zero]);
        assert_eq!(chart.certificates[0].alpha, Exponent::new(vec![2, 0]));

        assert_eq!(
            chart_at_point(&[y2_minus_x2()], &[q(0, 1), q(0, 1)], &config(&[])).unwrap_err(),
            MonomializeError::UncoveredPoint
        );

        let chart = chart_at_point(&[Q::var(1, 0)], &[q(1, 3)], &config(&[])).unwrap();
        assert!(chart.path.is_empty());
        assert_eq!(chart.quadrant.factors, vec![QuadrantFactor::Pos]);
    }

    #[test]
    fn chart_follows_ramification_sign() {
        let cusp = poly(2, &[(&[0, 2], 1), (&[3, 0], -1)]);
        let chart = chart_at_point(std::slice::from_ref(&cusp), &[q(-1, 4), q(1, 16)], &config(&[])).unwrap();
        assert_eq!(chart.path.steps[0], ElementaryTransform::Ramification { i: 0, d: 2, positive: false });
        assert_eq!(chart.path.evaluate_at(&chart.preimage).unwrap(), vec![q(-1, 4), q(1, 16)]);
        assert_eq!(
            chart_at_point(&[cusp], &[q(1, 3), q(1, 16)], &config(&[])).unwrap_err(),
            MonomializeError::NonRationalPreimage
        );
    }

    #[test]
    fn input_validation() {
        let cfg = config(&[]);
        assert_eq!(monomialize::<Rational>(&[], &cfg).unwrap_err(), MonomializeError::EmptyTargets);
        assert_eq!(monomialize(&[Q::zero(2)], &cfg).unwrap_err(), MonomializeError::ZeroTarget(0));
        assert_eq!(monomialize(&[Q::var(2, 0), Q::var(3, 0)], &cfg).unwrap_err(), MonomializeError::DimensionMismatch);
        let unit = monomialize(&[poly(2, &[(&[0, 0], 1), (&[1, 0], 1)])], &cfg).unwrap();
        assert!(unit.is_leaf());
    }

    #[test]
    fn depth_bound_reports_trace() {
        let cfg = MonomializeConfig { max_depth: 2, trunc: 16, lambda_seeds: vec![] };
        let err = monomialize(&[poly(2, &[(&[0, 2], 1), (&[7, 0], -1)])], &cfg).unwrap_err();
        let MonomializeError::DepthExceeded { max_depth, trace } = err else { panic!("expected depth error") };
        assert_eq!(max_depth, 2);
        assert!(trace.contains("d=2"), "{trace}");
    }

    #[test]
    fn truncated_root_is_inconclusive_at_leaf() {
        // Y + X Y^2 + X: its translation root is not a polynomial.
        let f = poly(2, &[(&[0, 1], 1), (&[1, 2], 1), (&[1, 0], 1)]);
        let err = monomialize(&[f], &config(&[])).unwrap_err();
        assert!(matches!(err, MonomializeError::Inconclusive { .. }), "{err}");
    }
}
