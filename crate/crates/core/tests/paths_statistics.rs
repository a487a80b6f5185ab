use proptest::prelude::*;
use wz_core::numerics::SampleStats;
use wz_core::paths::{replica_seed, sample_wiener, TimeGrid, WienerPath};

fn unit_paths(count: usize, h: f64, master: u64) -> Vec<WienerPath> {
    let grid = TimeGrid::with_step(1.0, h).unwrap();
    (0..count).map(|i| sample_wiener(grid, 1, replica_seed(master, i as u64)).unwrap()).collect()
}

/// 99% chi-square band for the sample variance of 10⁴ standard normals is
/// roughly 1 ± 2.576·√(2/9999) ≈ [0.964, 1.036]; [0.94, 1.06] leaves margin.
#[test]
fn terminal_variance_in_chi_square_band() {
    let paths = unit_paths(10_000, 2f64.powi(-10), 1);
    let ends: Vec<f64> = paths.iter().map(|p| p.value(0, 1024)).collect();
    let mean = ends.iter().sum::<f64>() / ends.len() as f64;
    let var = ends.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (ends.len() - 1) as f64;
    assert!((0.94..=1.06).contains(&var), "variance {var}");
}

#[test]
fn covariance_is_min_of_times() {
    let paths = unit_paths(10_000, 2f64.powi(-6), 2);
    let prod: Vec<f64> = paths.iter().map(|p| p.value(0, 16) * p.value(0, 48)).collect();
    let s = SampleStats::from_samples(&prod);
    assert!((s.mean - 0.25).abs() < 4.0 * s.std_err, "{s:?}");
    // independent components
    let grid = TimeGrid::with_step(1.0, 0.125).unwrap();
    let cross: Vec<f64> = (0..10_000)
        .map(|i| {
            let p = sample_wiener(grid, 2, replica_seed(3, i)).unwrap();
            p.value(0, 8) * p.value(1, 8)
        })
        .collect();
    let s = SampleStats::from_samples(&cross);
    assert!(s.mean.abs() < 4.0 * s.std_err, "{s:?}");
}

#[test]
fn same_seed_same_path() {
    let grid = TimeGrid::with_step(1.0, 2f64.powi(-4)).unwrap();
    let a = sample_wiener(grid, 3, 42).unwrap();
    let b = sample_wiener(grid, 3, 42).unwrap();
    assert_eq!(a, b);
    assert!((0..3).all(|c| a.value(c, 0) == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shifts_compose(seed in any::<u64>(), a in 0usize..64, b in 0usize..64) {
        let h = 1.0 / 128.0;
        let p = sample_wiener(TimeGrid::with_step(1.0, h).unwrap(), 2, seed).unwrap();
        let (s, t) = (a as f64 * h, b as f64 * h);
        let twice = p.shift(s).unwrap().shift(t).unwrap();
        let once = p.shift(s + t).unwrap();
        prop_assert_eq!(twice.grid().n_steps(), once.grid().n_steps());
        for c in 0..2 {
            prop_assert_eq!(twice.component(c), once.component(c));
        }
    }

    #[test]
    fn shift_restores_path(seed in any::<u64>(), k in 0usize..=128) {
        let h = 1.0 / 128.0;
        let p = sample_wiener(TimeGrid::with_step(1.0, h).unwrap(), 1, seed).unwrap();
        let shifted = p.shift(k as f64 * h).unwrap();
        for s in 0..=(128 - k) {
            prop_assert_eq!(shifted.value(0, s) + p.value(0, k), p.value(0, k + s));
        }
    }
}
