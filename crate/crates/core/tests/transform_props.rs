mod common;

use common::*;
use mono_forge::transforms::{compose_path, evaluate_path_at};
use mono_forge::{QPath, QSeries, Series, Trunc};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind_strategy() -> impl Strategy<Value = Kind> {
    prop::sample::select(KINDS.to_vec())
}

fn case() -> impl Strategy<Value = (QSeries, QSeries, Kind, u64)> {
    nvars_and(|n| (poly_strategy(n, 4, 5), poly_strategy(n, 4, 5), kind_strategy(), any::<u64>()))
}

fn path(nvars: usize, len: usize, seed: u64) -> QPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (0..len).map(|k| random_transform(&mut rng, KINDS[(seed as usize + k) % 4], nvars)).collect();
    QPath::from_steps(nvars, steps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn apply_is_a_ring_homomorphism((f, g, kind, seed) in case()) {
        let nu = random_transform(&mut ChaCha8Rng::seed_from_u64(seed), kind, f.nvars());
        prop_assert_eq!(nu.apply(&(&f * &g)).unwrap(), &nu.apply(&f).unwrap() * &nu.apply(&g).unwrap());
        prop_assert_eq!(nu.apply(&(&f + &g)).unwrap(), &nu.apply(&f).unwrap() + &nu.apply(&g).unwrap());
    }

    #[test]
    fn apply_preserves_order_and_truncation((f, _, kind, seed) in case(), n in 0u32..6) {
        let nu = random_transform(&mut ChaCha8Rng::seed_from_u64(seed), kind, f.nvars());
        for (e, c) in f.terms() {
            let image = nu.apply(&Series::monomial(e.clone(), c.clone())).unwrap();
            prop_assert!(image.order().is_none_or(|o| o >= e.degree()));
        }
        let truncated = nu.apply(&f.truncate(n)).unwrap();
        prop_assert_eq!(truncated.trunc(), Trunc::Finite(n));
        prop_assert_eq!(truncated, nu.apply(&f).unwrap().truncate(n));
    }

    #[test]
    fn composition_commutes_with_evaluation(
        (f, p, seed, len) in nvars_and(|n| (poly_strategy(n, 3, 4), point_strategy(n), any::<u64>(), 1usize..=4))
    ) {
        let rho = path(f.nvars(), len, seed);
        let image = evaluate_path_at(&rho, &p).unwrap();
        prop_assert_eq!(f.eval(&image).unwrap(), compose_path(&rho, &f).unwrap().eval(&p).unwrap());
    }

    #[test]
    fn composition_keeps_nonzero_polynomials(
        (f, seed, len) in nvars_and(|n| (poly_strategy(n, 4, 5), any::<u64>(), 1usize..=4))
    ) {
        prop_assume!(!f.is_zero());
        let rho = path(f.nvars(), len, seed);
        prop_assert!(!compose_path(&rho, &f).unwrap().is_zero());
    }
}
