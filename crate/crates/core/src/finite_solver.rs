//! The finite-dimensional pair: the pathwise ODE `ẋ = σ(x) Ḃ_δ + b(x)` and the
//! corrected Itô SDE `dX = σ(X) dw + [b(X) + correction(X)] dt`.

use std::io::Write;

use serde::Serialize;

use crate::approximant::PolygonalPath;
use crate::coefficients::CoefficientSystem;
use crate::paths::{TimeGrid, WienerPath};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    ApproxOde,
    ItoCorrected,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::ApproxOde => "approx-ode",
            Scheme::ItoCorrected => "ito-corrected",
        }
    }
}

/// States at every node of a time grid, row-major `(n_steps + 1) × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dims: usize,
    states: Vec<f64>,
    scheme: Scheme,
    seed: u64,
}

impl Trajectory {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Seed of the Wiener path that drove this trajectory.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self, node: usize) -> &[f64] {
        &self.states[node * self.dims..(node + 1) * self.dims]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Keeps every `stride`-th node.
    pub fn subsample(&self, stride: usize) -> Result<Trajectory> {
        let grid = self.grid.coarsen(stride)?;
        let states = (0..grid.n_nodes()).flat_map(|k| self.state(k * stride).iter().copied()).collect();
        Ok(Trajectory { grid, states, ..self.clone() })
    }

    /// CSV with columns `t,x_1,...,x_d`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dims).map(|i| format!("x_{i}")));
        out.write_record(&header)?;
        for k in 0..self.grid.n_nodes() {
            let mut rec = vec![self.grid.time(k).to_string()];
            rec.extend(self.state(k).iter().map(f64::to_string));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_initial(sys: &CoefficientSystem, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.state_dims() {
        return Err(Error::invalid(format!(
            "initial state has {} components, system has {}",
            x0.len(),
            sys.state_dims()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite initial state"));
    }
    Ok(())
}

/// `σ(x)·slope + b(x)`.
fn vector_field(sys: &CoefficientSystem, x: &[f64], slope: &[f64], sigma: &mut [f64], out: &mut [f64]) {
    let r = sys.noise_dims();
    sys.sigma_into(x, sigma);
    sys.drift_into(x, out);
    for (i, o) in out.iter_mut().enumerate() {
        let noise: f64 = (0..r).map(|n| sigma[i * r + n] * slope[n]).sum();
        *o += noise;
    }
}

/// Classical RK4 on the drive's source grid. Steps never straddle a knot, so
/// the vector field is smooth over every step.
pub fn solve_approx_ode(sys: &CoefficientSystem, drive: &PolygonalPath<'_>, x0: &[f64]) -> Result<Trajectory> {
    use crate::approximant::Approximant;
    check_initial(sys, x0)?;
    let source = drive.source();
    if source.dims() != sys.noise_dims() {
        return Err(Error::Mismatch(format!(
            "drive has {} components, system expects {}",
            source.dims(),
            sys.noise_dims()
        )));
    }
    let grid = *source.grid();
    let (d, r) = (sys.state_dims(), sys.noise_dims());
    let h = grid.step();
    let mut states = Vec::with_capacity(grid.n_nodes() * d);
    states.extend_from_slice(x0);
    let mut y = x0.to_vec();
    let mut stage = vec![0.0; d];
    let mut sigma = vec![0.0; d * r];
    let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut slope = vec![0.0; r];
    for step in 0..grid.n_steps() {
        let segment = step / drive.stride();
        for (n, s) in slope.iter_mut().enumerate() {
            *s = drive.slope(n, segment);
        }
        vector_field(sys, &y, &slope, &mut sigma, &mut k[0]);
        for (s, c) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..d {
                stage[i] = y[i] + c * h * k[s - 1][i];
            }
            vector_field(sys, &stage, &slope, &mut sigma, &mut k[s]);
        }
        for i in 0..d {
            y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { scheme: Scheme::ApproxOde.label(), t: grid.time(step + 1) });
        }
        states.extend_from_slice(&y);
    }
    Ok(Trajectory { grid, dims: d, states, scheme: Scheme::ApproxOde, seed: source.seed() })
}

/// Euler-Maruyama with step `scheme_step` and the correction folded into the
/// drift, driven by the increments of `path` over each coarse step:
/// `X_{k+1} = X_k + (σ(X_k) Δw_k + [b(X_k) + correction(X_k)] Δt)`.
pub fn solve_ito_corrected(
    sys: &CoefficientSystem,
    path: &WienerPath,
    x0: &[f64],
    scheme_step: f64,
) -> Result<Trajectory> {
    check_initial(sys, x0)?;
    if path.dims() != sys.noise_dims() {
        return Err(Error::Mismatch(format!(
            "path has {} components, system expects {}",
            path.dims(),
            sys.noise_dims()
        )));
    }
    let fine = *path.grid();
    let stride = fine.stride_of("scheme step", scheme_step)?;
    let grid = fine.coarsen(stride)?;
    let (d, r) = (sys.state_dims(), sys.noise_dims());
    let dt = grid.step();
    let mut scratch = sys.scratch();
    let mut sigma = vec![0.0; d * r];
    let mut drift = vec![0.0; d];
    let mut corr = vec![0.0; d];
    let mut dw = vec![0.0; r];
    let mut x = x0.to_vec();
    let mut states = Vec::with_capacity(grid.n_nodes() * d);
    states.extend_from_slice(x0);
    for step in 0..grid.n_steps() {
        for (n, v) in dw.iter_mut().enumerate() {
            *v = path.increment(n, step * stride, (step + 1) * stride);
        }
        sys.sigma_into(&x, &mut sigma);
        sys.drift_into(&x, &mut drift);
        sys.correction_into(&x, &mut scratch, &mut corr);
        for i in 0..d {
            let noise: f64 = (0..r).map(|n| sigma[i * r + n] * dw[n]).sum();
            x[i] += noise + (drift[i] + corr[i]) * dt;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { scheme: Scheme::ItoCorrected.label(), t: grid.time(step + 1) });
        }
        states.extend_from_slice(&x);
    }
    Ok(Trajectory { grid, dims: d, states, scheme: Scheme::ItoCorrected, seed: path.seed() })
}

/// `(max over nodes |a - b|)^p` with the Euclidean norm.
pub fn sup_error(a: &Trajectory, b: &Trajectory, p: f64) -> Result<f64> {
    if a.grid != b.grid || a.dims != b.dims {
        return Err(Error::Mismatch("trajectories live on different grids".into()));
    }
    let worst = a
        .states
        .chunks_exact(a.dims)
        .zip(b.states.chunks_exact(b.dims))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt())
        .fold(0.0f64, f64::max);
    Ok(worst.powf(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximant::{wong_zakai, Approximant};
    use crate::paths::sample_wiener;

    fn gbm(a: f64) -> CoefficientSystem {
        CoefficientSystem::builder(1, 1)
            .sigma(move |x, s| s[0] = a * x[0])
            .sigma_jacobian(move |_, j| j[0] = a)
            .build()
            .unwrap()
    }

    fn additive() -> CoefficientSystem {
        CoefficientSystem::builder(1, 1).sigma(|_, s| s[0] = 1.0).build().unwrap()
    }

    fn path(t: f64, h: f64, seed: u64) -> WienerPath {
        sample_wiener(TimeGrid::with_step(t, h).unwrap(), 1, seed).unwrap()
    }

    #[test]
    fn zero_system_keeps_initial_state() {
        let sys = CoefficientSystem::builder(2, 1).build().unwrap();
        let p = path(1.0, 1.0 / 64.0, 1);
        let b = wong_zakai(&p, 1.0 / 8.0).unwrap();
        let x0 = [0.25, -3.0];
        let a = solve_approx_ode(&sys, &b, &x0).unwrap();
        let i = solve_ito_corrected(&sys, &p, &x0, 1.0 / 16.0).unwrap();
        assert!(a.states().chunks(2).all(|s| s == x0));
        assert!(i.states().chunks(2).all(|s| s == x0));
        assert_eq!(a.state(0), &x0);
    }

    #[test]
    fn gbm_ode_matches_exponential_of_drive() {
        let p = path(1.0, 1.0 / 4096.0, 7);
        let b = wong_zakai(&p, 1.0 / 16.0).unwrap();
        let tr = solve_approx_ode(&gbm(1.0), &b, &[1.3]).unwrap();
        for node in 0..=4096 {
            let exact = 1.3 * b.value_at_node(0, node).exp();
            let got = tr.state(node)[0];
            assert!(((got - exact) / exact).abs() < 1e-8, "node {node}: {got} vs {exact}");
        }
    }

    #[test]
    fn additive_ode_tracks_drive() {
        let p = path(1.0, 1.0 / 1024.0, 8);
        let b = wong_zakai(&p, 1.0 / 32.0).unwrap();
        let tr = solve_approx_ode(&additive(), &b, &[0.5]).unwrap();
        for node in 0..=1024 {
            assert!((tr.state(node)[0] - (0.5 + b.value_at_node(0, node))).abs() <= 1e-12);
        }
    }

    #[test]
    fn additive_ito_is_exact() {
        let p = path(1.0, 1.0 / 1024.0, 9);
        let sys = additive().with_correction_limits(vec![3.0]).unwrap();
        let tr = solve_ito_corrected(&sys, &p, &[0.5], 1.0 / 256.0).unwrap();
        for k in 0..=256 {
            assert_eq!(tr.state(k)[0], 0.5 + p.value(0, 4 * k));
        }
    }

    #[test]
    fn ode_grid_refinement_is_stable() {
        let fine = path(1.0, 1.0 / 8192.0, 10);
        let coarse = fine.coarsen(2).unwrap();
        let delta = 1.0 / 16.0;
        let t_fine = solve_approx_ode(&gbm(1.0), &wong_zakai(&fine, delta).unwrap(), &[1.0]).unwrap();
        let t_coarse = solve_approx_ode(&gbm(1.0), &wong_zakai(&coarse, delta).unwrap(), &[1.0]).unwrap();
        let t_sub = t_fine.subsample(2).unwrap();
        for k in 0..=4096 {
            let (a, b) = (t_sub.state(k)[0], t_coarse.state(k)[0]);
            assert!(((a - b) / a).abs() < 1e-6);
        }
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        let sys = CoefficientSystem::builder(1, 1).drift(|x, b| b[0] = x[0] * x[0]).build().unwrap();
        let p = path(4.0, 1.0 / 64.0, 1);
        let b = wong_zakai(&p, 1.0 / 8.0).unwrap();
        // ẋ = x² from x0 = 1e3 explodes at t ≈ 1e-3, but RK4 with h = 1/64 overflows
        match solve_approx_ode(&sys, &b, &[1e3]) {
            Err(Error::BlowUp { t, .. }) => assert!(t > 0.0 && t <= 4.0),
            other => panic!("expected blow-up, got {other:?}"),
        }
        assert!(matches!(solve_ito_corrected(&sys, &p, &[1e3], 1.0 / 8.0), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn sup_error_edge_cases() {
        let p = path(1.0, 1.0 / 64.0, 11);
        let b = wong_zakai(&p, 1.0 / 8.0).unwrap();
        let a = solve_approx_ode(&gbm(1.0), &b, &[1.0]).unwrap();
        assert_eq!(sup_error(&a, &a, 2.0).unwrap(), 0.0);
        let mut shifted = a.clone();
        shifted.states.iter_mut().for_each(|v| *v += 0.75);
        assert!((sup_error(&a, &shifted, 2.0).unwrap() - 0.5625).abs() < 1e-12);
        let ito = solve_ito_corrected(&gbm(1.0), &p, &[1.0], 1.0 / 32.0).unwrap();
        assert!(sup_error(&a, &ito, 2.0).is_err());
    }

    /// Independent max loop.
    #[test]
    fn sup_error_matches_plain_loop() {
        let p = path(1.0, 1.0 / 512.0, 12);
        let b = wong_zakai(&p, 1.0 / 16.0).unwrap();
        let a = solve_approx_ode(&gbm(1.0), &b, &[1.0]).unwrap();
        let i = solve_ito_corrected(&gbm(1.0), &p, &[1.0], 1.0 / 512.0).unwrap();
        let mut m = 0.0f64;
        for k in 0..=512 {
            let e = a.state(k)[0] - i.state(k)[0];
            let norm = (e * e).sqrt();
            if norm > m {
                m = norm;
            }
        }
        assert_eq!(sup_error(&a, &i, 4.0).unwrap(), m.powf(4.0));
    }

    #[test]
    fn csv_has_time_and_components() {
        let p = path(1.0, 0.25, 1);
        let b = wong_zakai(&p, 0.5).unwrap();
        let a = solve_approx_ode(&gbm(1.0), &b, &[1.0]).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x_1\n0,1\n0.25,"));
        assert_eq!(text.lines().count(), 6);
    }
}
