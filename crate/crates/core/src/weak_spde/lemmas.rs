use super::solver::FieldTrajectory;
use crate::approximant::{Approximant, PolygonalPath};
use crate::paths::TimeGrid;
use crate::{Error, Result};

/// Time pairs `(s, t)` at which increments are sampled, as node indices.
///
/// `within` pairs are knots `kδ̃ + aδ < kδ̃ + bδ` of the same window;
/// `across` pairs are window starts `kδ̃ < lδ̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementLayout {
    delta: f64,
    window: f64,
    n: usize,
    within: Vec<(f64, f64)>,
    across: Vec<(f64, f64)>,
}

impl IncrementLayout {
    pub fn new(horizon: f64, delta: f64, n: usize) -> Result<Self> {
        if !(delta > 0.0 && n >= 1) {
            return Err(Error::invalid(format!("bad increment layout: δ = {delta}, n = {n}")));
        }
        let window = n as f64 * delta;
        let windows = (horizon / window + 1e-9).floor() as usize;
        if windows == 0 {
            return Err(Error::invalid(format!("window {window} exceeds the horizon {horizon}")));
        }
        let mut within = Vec::new();
        for k in 0..windows {
            for a in 0..n {
                for b in a + 1..=n {
                    within.push(((k * n + a) as f64 * delta, (k * n + b) as f64 * delta));
                }
            }
        }
        let mut across = Vec::new();
        for k in 0..=windows {
            for l in k + 1..=windows {
                across.push((k as f64 * window, l as f64 * window));
            }
        }
        Ok(Self { delta, window, n, within, across })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn within(&self) -> &[(f64, f64)] {
        &self.within
    }

    pub fn across(&self) -> &[(f64, f64)] {
        &self.across
    }
}

fn squared_distance(traj: &FieldTrajectory, grid: &TimeGrid, s: f64, t: f64) -> Result<f64> {
    let (a, b) = (grid.node_of("s", s)?, grid.node_of("t", t)?);
    Ok(traj.coeffs(b).iter().zip(traj.coeffs(a)).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `‖X_δ(t) − X_δ(s)‖ / (Σ_n ∫_s^t |Ḃ^n_δ| + (t − s))`; zero when `s == t`.
pub fn pathwise_ratio(traj_delta: &FieldTrajectory, drive: &PolygonalPath<'_>, s: f64, t: f64) -> Result<f64> {
    if t < s {
        return Err(Error::invalid(format!("need s <= t, got s = {s}, t = {t}")));
    }
    let dist = squared_distance(traj_delta, traj_delta.grid(), s, t)?.sqrt();
    if dist == 0.0 {
        return Ok(0.0);
    }
    let mut variation = t - s;
    for n in 0..drive.dims() {
        variation += drive.abs_derivative_integral(n, s, t)?;
    }
    Ok(dist / variation)
}

/// Per-replica increment data for one δ.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSamples {
    /// `‖X_δ(t) − X_δ(s)‖²` for each within-window pair.
    pub within_sq: Vec<f64>,
    /// `‖X(t) − X(s)‖²` for each window-start pair.
    pub across_sq: Vec<f64>,
    /// Largest pathwise ratio over all pairs of the layout.
    pub max_pathwise_ratio: f64,
}

/// Increments of a coupled replica: `traj_delta` on `drive`, `traj` the Itô
/// solution (on any grid containing the window starts).
pub fn increment_samples(
    traj_delta: &FieldTrajectory,
    traj: &FieldTrajectory,
    drive: &PolygonalPath<'_>,
    layout: &IncrementLayout,
) -> Result<IncrementSamples> {
    if traj_delta.seed() != traj.seed() || drive.source().seed() != traj.seed() {
        return Err(Error::ReplicaMismatch { expected: traj.seed(), found: traj_delta.seed() });
    }
    let within_sq = layout
        .within
        .iter()
        .map(|&(s, t)| squared_distance(traj_delta, traj_delta.grid(), s, t))
        .collect::<Result<Vec<_>>>()?;
    let across_sq =
        layout.across.iter().map(|&(s, t)| squared_distance(traj, traj.grid(), s, t)).collect::<Result<Vec<_>>>()?;
    let mut max_pathwise_ratio = 0.0f64;
    for &(s, t) in layout.within.iter().chain(&layout.across) {
        let ratio = pathwise_ratio(traj_delta, drive, s, t)?;
        if !ratio.is_finite() {
            return Err(Error::invalid(format!("pathwise ratio not finite on [{s}, {t}]")));
        }
        max_pathwise_ratio = max_pathwise_ratio.max(ratio);
    }
    Ok(IncrementSamples { within_sq, across_sq, max_pathwise_ratio })
}
