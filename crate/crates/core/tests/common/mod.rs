//! Random generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use mono_forge::{Exponent, QSeries, QTransform, Rational, Scalar, Series, Trunc};
use proptest::prelude::*;
use rand::Rng;

pub fn q(n: i64, d: i64) -> Rational {
    Rational::from_ratio(n, d)
}

pub fn nonzero_coef<R: Rng>(rng: &mut R, bound: i64) -> Rational {
    let mut n = 0;
    while n == 0 {
        n = rng.gen_range(-bound..=bound);
    }
    if rng.gen_bool(0.2) {
        q(n, rng.gen_range(2..=5))
    } else {
        q(n, 1)
    }
}

pub fn random_exponent<R: Rng>(rng: &mut R, nvars: usize, max_deg: u32) -> Exponent {
    let total = rng.gen_range(0..=max_deg);
    let mut e = vec![0u32; nvars];
    for _ in 0..total {
        e[rng.gen_range(0..nvars)] += 1;
    }
    Exponent::new(e)
}

/// Nonzero exact polynomial with up to `max_terms` terms of total degree `<= max_deg`.
pub fn random_poly<R: Rng>(rng: &mut R, nvars: usize, max_deg: u32, max_terms: usize) -> QSeries {
    loop {
        let k = rng.gen_range(1..=max_terms);
        let terms: Vec<_> = (0..k).map(|_| (random_exponent(rng, nvars, max_deg), nonzero_coef(rng, 5))).collect();
        let f = Series::from_terms(nvars, Trunc::Exact, terms).unwrap();
        if !f.is_zero() {
            return f;
        }
    }
}

/// `X^alpha * U` with `|U - U(0)| < |U(0)| / 2` on the polydisk of radius 1/8.
pub fn random_normal_poly<R: Rng>(rng: &mut R, nvars: usize, max_alpha: u32) -> QSeries {
    let alpha = Exponent::new((0..nvars).map(|_| rng.gen_range(0..=max_alpha)).collect());
    let c0 = q(rng.gen_range(4..=8) * if rng.gen_bool(0.5) { 1 } else { -1 }, 1);
    let mut terms = vec![(Exponent::zero(nvars), c0)];
    for _ in 0..rng.gen_range(0..=4) {
        let mut e = random_exponent(rng, nvars, 3);
        if e.is_zero() {
            e = Exponent::unit(nvars, rng.gen_range(0..nvars));
        }
        terms.push((e, q(rng.gen_range(-4..=4), 1)));
    }
    Series::from_terms(nvars, Trunc::Exact, terms).unwrap().mul_monomial(&alpha)
}

/// Series regular of order `d` in the last variable, truncated at `trunc`.
pub fn random_regular<R: Rng>(rng: &mut R, nvars: usize, d: u32, trunc: u32) -> QSeries {
    let last = nvars - 1;
    let lead = Exponent::unit(nvars, last).with_entry(last, d);
    let mut terms = vec![(lead.clone(), nonzero_coef(rng, 5))];
    for _ in 0..rng.gen_range(2..=10) {
        let e = random_exponent(rng, nvars, trunc);
        let pure = e.entries()[..last].iter().all(|&a| a == 0);
        if (pure && e[last] < d) || e == lead {
            continue;
        }
        terms.push((e, nonzero_coef(rng, 5)));
    }
    Series::from_terms(nvars, Trunc::Finite(trunc), terms).unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    BlowUp,
    Tschirnhausen,
    Shear,
    Ramification,
}

pub const KINDS: [Kind; 4] = [Kind::BlowUp, Kind::Tschirnhausen, Kind::Shear, Kind::Ramification];

/// A random elementary transform of the given kind on `nvars >= 2` variables.
pub fn random_transform<R: Rng>(rng: &mut R, kind: Kind, nvars: usize) -> QTransform {
    match kind {
        Kind::BlowUp => {
            let i = rng.gen_range(0..nvars);
            let j = (i + rng.gen_range(1..nvars)) % nvars;
            let lambda = if rng.gen_bool(0.2) { q(0, 1) } else { nonzero_coef(rng, 3) };
            QTransform::BlowUp { i, j, lambda }
        }
        Kind::Tschirnhausen => {
            let i = rng.gen_range(0..nvars);
            let terms: Vec<_> = (0..rng.gen_range(1..=3))
                .map(|_| {
                    let mut e = random_exponent(rng, nvars, 3).with_entry(i, 0);
                    if e.is_zero() {
                        e = Exponent::unit(nvars, (i + 1) % nvars);
                    }
                    (e, nonzero_coef(rng, 3))
                })
                .collect();
            QTransform::tschirnhausen(i, Series::from_terms(nvars, Trunc::Exact, terms).unwrap()).unwrap()
        }
        Kind::Shear => {
            let i = rng.gen_range(1..nvars);
            QTransform::shear(i, (0..i).map(|_| q(rng.gen_range(-3..=3), 1)).collect()).unwrap()
        }
        Kind::Ramification => {
            QTransform::ramification(rng.gen_range(0..nvars), rng.gen_range(1..=3), rng.gen_bool(0.5)).unwrap()
        }
    }
}

/// The support element dividing every other one, found by a pairwise scan.
pub fn support_minimum(f: &QSeries) -> Option<Vec<u32>> {
    let support: Vec<Vec<u32>> = f.terms().map(|(e, _)| e.entries().to_vec()).collect();
    support
        .iter()
        .find(|a| support.iter().all(|b| a.iter().zip(b.iter()).all(|(x, y)| x <= y)))
        .cloned()
}

pub fn coef_strategy() -> impl Strategy<Value = Rational> {
    ((-6i64..=6).prop_filter("nonzero", |n| *n != 0), 1i64..=4).prop_map(|(n, d)| q(n, d))
}

/// Exact polynomial in `nvars` variables of total degree `<= max_deg`.
pub fn poly_strategy(nvars: usize, max_deg: u32, max_terms: usize) -> impl Strategy<Value = QSeries> {
    prop::collection::vec((prop::collection::vec(0..=max_deg, nvars), coef_strategy()), 0..=max_terms).prop_map(
        move |terms| {
            let terms = terms.into_iter().filter(|(e, _)| e.iter().sum::<u32>() <= max_deg).map(|(e, c)| (Exponent::new(e), c));
            Series::from_terms(nvars, Trunc::Exact, terms).unwrap()
        },
    )
}

pub fn point_strategy(nvars: usize) -> impl Strategy<Value = Vec<Rational>> {
    prop::collection::vec((-8i64..=8, 1i64..=8).prop_map(|(n, d)| q(n, d)), nvars)
}

pub fn nvars_and<S, F>(f: F) -> impl Strategy<Value = S::Value>
where
    S: Strategy + 'static,
    F: Fn(usize) -> S + 'static,
{
    (2usize..=3).prop_flat_map(f)
}
