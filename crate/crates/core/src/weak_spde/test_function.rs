use super::field::FieldState;
use super::solver::FieldTrajectory;
use crate::paths::TimeGrid;
use crate::{Error, Result};

/// Piecewise-constant-in-time test function: on `[kδ̃, (k+1)δ̃)` it equals
/// `X_δ(kδ̃) − X(kδ̃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTestFunction {
    window: f64,
    horizon: f64,
    snapshots: Vec<FieldState>,
}

impl StepTestFunction {
    /// Window length `δ̃`.
    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn snapshots(&self) -> &[FieldState] {
        &self.snapshots
    }

    /// Index `k` of the window containing `t`, i.e. `[t]⁻ = kδ̃`.
    pub fn window_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::OutOfRange { t, horizon: self.horizon });
        }
        let ratio = t / self.window;
        let nearest = ratio.round();
        // a time within rounding of a window start belongs to that window
        let k = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { ratio.floor() };
        Ok((k as usize).min(self.snapshots.len() - 1))
    }

    /// `φ(t)`.
    pub fn eval(&self, t: f64) -> Result<&FieldState> {
        Ok(&self.snapshots[self.window_index(t)?])
    }
}

/// Builds `φ_δ̃` from a coupled pair of trajectories on the same grid.
pub fn build_test_function(
    traj_delta: &FieldTrajectory,
    traj: &FieldTrajectory,
    window: f64,
) -> Result<StepTestFunction> {
    if traj_delta.seed() != traj.seed() {
        return Err(Error::ReplicaMismatch { expected: traj_delta.seed(), found: traj.seed() });
    }
    let grid: &TimeGrid = traj_delta.grid();
    if grid != traj.grid() || traj_delta.components() != traj.components() || traj_delta.space() != traj.space() {
        return Err(Error::Mismatch("test function needs both trajectories on one grid and space".into()));
    }
    if window > grid.horizon() {
        return Err(Error::invalid(format!("window {window} exceeds the horizon {}", grid.horizon())));
    }
    let stride = grid.stride_of("window", window)?;
    let count = grid.n_steps() / stride + 1;
    let snapshots = (0..count)
        .map(|k| {
            let node = k * stride;
            let diff = traj_delta.coeffs(node).iter().zip(traj.coeffs(node)).map(|(a, b)| a - b).collect();
            FieldState::new(traj.space().clone(), traj.components(), diff)
        })
        .collect::<Result<_>>()?;
    Ok(StepTestFunction { window: stride as f64 * grid.step(), horizon: grid.horizon(), snapshots })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::approximant::wong_zakai;
    use crate::coefficients::CoefficientSystem;
    use crate::paths::sample_wiener;
    use crate::weak_spde::field::{pair, project};
    use crate::weak_spde::solver::{solve_weak_approx, solve_weak_ito, WeakModel};
    use crate::weak_spde::space::GalerkinSpace;

    fn setup(h: f64, seed: u64) -> (FieldTrajectory, FieldTrajectory) {
        let s = Arc::new(GalerkinSpace::unit(4).unwrap());
        let sys = CoefficientSystem::builder(1, 1)
            .sigma(|x, o| o[0] = 0.5 * x[0].sin())
            .sigma_jacobian(|x, j| j[0] = 0.5 * x[0].cos())
            .build()
            .unwrap();
        let model = WeakModel::new(sys, s.clone()).with_bound(10.0).unwrap();
        let x0 = project(&s, 1, |_, x| 1.0 + 0.3 * x);
        let p = sample_wiener(TimeGrid::with_step(1.0, h).unwrap(), 1, seed).unwrap();
        let a = solve_weak_approx(&model, &wong_zakai(&p, 1.0 / 16.0).unwrap(), &x0).unwrap();
        let i = solve_weak_ito(&model, &p, &x0, h).unwrap();
        (a, i)
    }

    #[test]
    fn identical_trajectories_give_zero_snapshots() {
        let (a, _) = setup(1.0 / 128.0, 1);
        let phi = build_test_function(&a, &a, 0.25).unwrap();
        assert!(phi.snapshots().iter().all(|s| s.coeffs().iter().all(|c| *c == 0.0)));
    }

    #[test]
    fn snapshot_count_and_windows() {
        let (a, i) = setup(1.0 / 128.0, 2);
        for (window, count) in [(0.25, 5), (1.0 / 128.0, 129), (0.375, 3), (1.0, 2)] {
            let phi = build_test_function(&a, &i, window).unwrap();
            assert_eq!(phi.snapshots().len(), count, "window {window}");
        }
        let phi = build_test_function(&a, &i, 0.25).unwrap();
        for (t, k) in [(0.0, 0), (0.1, 0), (0.25, 1), (0.49, 1), (0.75, 3), (1.0, 4)] {
            assert_eq!(phi.window_index(t).unwrap(), k, "t = {t}");
        }
        // piecewise constant, and snapshot k is the difference at kδ̃
        assert_eq!(phi.eval(0.5).unwrap(), phi.eval(0.7).unwrap());
        let diff: Vec<f64> = a.coeffs(64).iter().zip(i.coeffs(64)).map(|(x, y)| x - y).collect();
        assert_eq!(phi.eval(0.6).unwrap().coeffs(), &diff[..]);
        assert!(phi.eval(1.5).is_err());
        assert!(build_test_function(&a, &i, 0.3).is_err());
    }

    #[test]
    fn norm_bounded_by_state_bounds() {
        let (a, i) = setup(1.0 / 256.0, 3);
        let phi = build_test_function(&a, &i, 1.0 / 8.0).unwrap();
        let bound = 2.0 * 10f64.sqrt();
        for s in phi.snapshots() {
            assert!(pair(s, s).unwrap().sqrt() <= bound);
        }
    }

    #[test]
    fn mismatched_replicas_are_rejected() {
        let (a, _) = setup(1.0 / 128.0, 4);
        let (_, other) = setup(1.0 / 128.0, 5);
        assert!(matches!(build_test_function(&a, &other, 0.25), Err(Error::ReplicaMismatch { .. })));
    }
}
