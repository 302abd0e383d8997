//! Property-based invariants for the estimator and path arithmetic.

use proptest::prelude::*;
use wiener_lab::{CameronMartinVector, McAccumulator, RandomSource, TimeGrid, WienerPath};

proptest! {
    // h_norm_sq is a quadratic form: scaling the density by c scales the
    // norm by c^2 (up to rounding).
    #[test]
    fn h_norm_quadratic_scaling(
        c in -10.0f64..10.0,
        density in proptest::collection::vec(-5.0f64..5.0, 1..64),
    ) {
        let grid = TimeGrid::new(density.len()).unwrap();
        let h = CameronMartinVector::new(grid.clone(), density).unwrap();
        let scaled = h.scale(c);
        let want = c * c * h.h_norm_sq();
        let got = scaled.h_norm_sq();
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    // merging estimator partials in any split is equivalent to estimating
    // over the union, within 1e-12 relative.
    #[test]
    fn estimator_merge_associative(
        xs in proptest::collection::vec(-100.0f64..100.0, 3..200),
        cut in 0.0f64..1.0,
    ) {
        let k = ((xs.len() as f64) * cut) as usize;
        let whole: McAccumulator = xs.iter().copied().collect();
        let left: McAccumulator = xs[..k].iter().copied().collect();
        let right: McAccumulator = xs[k..].iter().copied().collect();
        let merged = left.merge(&right).estimate();
        let direct = whole.estimate();
        prop_assert_eq!(merged.count, direct.count);
        prop_assert!((merged.mean - direct.mean).abs() <= 1e-12 * direct.mean.abs().max(1.0));
        prop_assert!((merged.stderr - direct.stderr).abs() <= 1e-12 * direct.stderr.max(1.0));
    }

    // coarsening preserves the terminal value and shared grid points.
    #[test]
    fn coarsen_preserves_shared_points(seed in 0u64..1000, level in 0usize..4) {
        let grid = TimeGrid::new(64).unwrap();
        let w = WienerPath::sample(&grid, RandomSource::new(seed, 0));
        let m = 8usize << level;
        let c = w.coarsen(m).unwrap();
        let block = 64 / m;
        for i in 0..=m {
            prop_assert!((c.values()[i] - w.values()[i * block]).abs() <= 1e-12);
        }
    }

    // sampling is a pure function of (seed, stream).
    #[test]
    fn sampling_is_reproducible(seed in 0u64..5000, stream in 0u64..100) {
        let grid = TimeGrid::new(16).unwrap();
        let a = WienerPath::sample(&grid, RandomSource::new(seed, stream));
        let b = WienerPath::sample(&grid, RandomSource::new(seed, stream));
        prop_assert_eq!(a, b);
    }
}
