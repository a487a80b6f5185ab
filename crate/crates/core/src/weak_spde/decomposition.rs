use serde::Serialize;

use super::solver::{replay_parts, FieldTrajectory, WeakModel};
use super::test_function::StepTestFunction;
use crate::approximant::{Approximant, PolygonalPath};
use crate::finite_solver::Scheme;
use crate::numerics::{compensated_dot, CompensatedSum};
use crate::paths::WienerPath;
use crate::{Error, Result};

/// `⟨X_δ(t) − X(t), φ(t)⟩` and its split into `H₁ + H₂ + H₃ + H₄`.
///
/// `H₁..H₃` hold the noise and correction differences over `[[t]⁻, t]`,
/// `[δ̃, [t]⁻]` and `[0, min(δ̃, [t]⁻)]`; `H₄` holds the drift difference over
/// `[0, t]`. The test function is held at its value on the window of `t`
/// throughout, which is what makes the split an identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionTerms {
    pub t: f64,
    pub lhs: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
    pub residual: f64,
}

/// Decomposition at each time in `times` for one coupled replica: `traj_delta`
/// solved by [`solve_weak_approx`](super::solve_weak_approx) on `drive`, and
/// `traj` by [`solve_weak_ito`](super::solve_weak_ito) on `path` with the same step.
pub fn decomposition_residuals(
    model: &WeakModel,
    traj_delta: &FieldTrajectory,
    traj: &FieldTrajectory,
    phi: &StepTestFunction,
    drive: &PolygonalPath<'_>,
    path: &WienerPath,
    times: &[f64],
) -> Result<Vec<DecompositionTerms>> {
    let seed = path.seed();
    for found in [traj_delta.seed(), traj.seed(), drive.source().seed()] {
        if found != seed {
            return Err(Error::ReplicaMismatch { expected: seed, found });
        }
    }
    if traj_delta.scheme() != Scheme::ApproxOde || traj.scheme() != Scheme::ItoCorrected {
        return Err(Error::invalid("expects an approximate trajectory and an Itô trajectory, in that order"));
    }
    let grid = *traj.grid();
    if traj_delta.grid() != &grid {
        return Err(Error::Mismatch(
            "both trajectories must share one grid (Itô step equal to the solver step)".into(),
        ));
    }
    let window_stride = grid.stride_of("window", phi.window())?;
    let approx = replay_parts(model, traj_delta, Some(drive), path)?;
    let ito = replay_parts(model, traj, None, path)?;

    times
        .iter()
        .map(|&t| {
            let end = grid.node_of("t", t)?;
            let k = phi.window_index(t)?;
            let f = phi.snapshots()[k].coeffs();
            let start = k * window_stride;
            let first = window_stride.min(start);
            let (mut h1, mut h2, mut h3, mut h4) =
                (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
            for step in 0..end {
                let (a, b) = (&approx[step], &ito[step]);
                let mut noise = 0.0;
                let mut drift = 0.0;
                for j in 0..f.len() {
                    noise += (a.noise[j] - b.noise[j] - b.correction[j]) * f[j];
                    drift += (a.drift[j] - b.drift[j]) * f[j];
                }
                h4.add(drift);
                if step >= start {
                    h1.add(noise);
                } else if step < first {
                    h3.add(noise);
                } else {
                    h2.add(noise);
                }
            }
            let diff: Vec<f64> = traj_delta.coeffs(end).iter().zip(traj.coeffs(end)).map(|(x, y)| x - y).collect();
            let lhs = compensated_dot(&diff, f);
            let (h1, h2, h3, h4) = (h1.value(), h2.value(), h3.value(), h4.value());
            let total: CompensatedSum = [h1, h2, h3, h4].into_iter().collect();
            Ok(DecompositionTerms { t, lhs, h1, h2, h3, h4, residual: (lhs - total.value()).abs() })
        })
        .collect()
}

/// Single-time form of [`decomposition_residuals`].
pub fn decomposition_residual(
    model: &WeakModel,
    traj_delta: &FieldTrajectory,
    traj: &FieldTrajectory,
    phi: &StepTestFunction,
    drive: &PolygonalPath<'_>,
    path: &WienerPath,
    t: f64,
) -> Result<DecompositionTerms> {
    Ok(decomposition_residuals(model, traj_delta, traj, phi, drive, path, &[t])?[0])
}
