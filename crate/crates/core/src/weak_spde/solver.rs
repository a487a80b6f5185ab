use std::fmt;
use std::io::Write;
use std::sync::Arc;

use super::field::{same_space, FieldState};
use super::space::GalerkinSpace;
use crate::approximant::{Approximant, PolygonalPath};
use crate::coefficients::{CoefficientSystem, Scratch};
use crate::finite_solver::Scheme;
use crate::paths::{TimeGrid, WienerPath};
use crate::{Error, Result};

/// A drift acting on the whole field rather than pointwise, already in
/// Galerkin form (for example a weak divergence term).
pub trait SpatialDrift: Send + Sync {
    fn name(&self) -> &str;

    /// Adds the projected drift of the field `coeffs` (`components × m`) to `out`.
    fn apply(&self, space: &GalerkinSpace, components: usize, coeffs: &[f64], out: &mut [f64]);

    /// Largest explicit step that keeps the scheme stable, if there is one.
    fn max_stable_step(&self, space: &GalerkinSpace) -> Option<f64>;
}

/// Nemytskii coefficients on a Galerkin space, with an optional field-level
/// drift and an optional bound on `Σ_i ‖X^i‖²`.
#[derive(Clone)]
pub struct WeakModel {
    sys: CoefficientSystem,
    space: Arc<GalerkinSpace>,
    spatial: Option<Arc<dyn SpatialDrift>>,
    bound: Option<f64>,
}

impl fmt::Debug for WeakModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeakModel")
            .field("sys", &self.sys)
            .field("basis_size", &self.space.basis_size())
            .field("spatial", &self.spatial.as_ref().map(|s| s.name().to_string()))
            .field("bound", &self.bound)
            .finish()
    }
}

impl WeakModel {
    pub fn new(sys: CoefficientSystem, space: Arc<GalerkinSpace>) -> Self {
        Self { sys, space, spatial: None, bound: None }
    }

    pub fn with_spatial_drift(mut self, drift: Arc<dyn SpatialDrift>) -> Self {
        self.spatial = Some(drift);
        self
    }

    /// Abort when `Σ_i ‖X^i‖²` exceeds `bound`.
    pub fn with_bound(mut self, bound: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid(format!("state bound must be positive, got {bound}")));
        }
        self.bound = Some(bound);
        Ok(self)
    }

    pub fn system(&self) -> &CoefficientSystem {
        &self.sys
    }

    pub fn space(&self) -> &Arc<GalerkinSpace> {
        &self.space
    }

    pub fn spatial_drift(&self) -> Option<&Arc<dyn SpatialDrift>> {
        self.spatial.as_ref()
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    fn components(&self) -> usize {
        self.sys.state_dims()
    }

    fn check_initial(&self, x0: &FieldState) -> Result<()> {
        if !same_space(x0.space(), &self.space) || x0.components() != self.components() {
            return Err(Error::Mismatch("initial field does not match the model's space or dimension".into()));
        }
        if x0.coeffs().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite initial field"));
        }
        Ok(())
    }

    fn check_step(&self, step: f64) -> Result<()> {
        if let Some(limit) = self.spatial.as_ref().and_then(|s| s.max_stable_step(&self.space)) {
            if step > limit {
                return Err(Error::StepTooLarge { step, limit });
            }
        }
        Ok(())
    }

    fn check_state(&self, scheme: Scheme, t: f64, coeffs: &[f64]) -> Result<()> {
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { scheme: scheme.label(), t });
        }
        if let Some(bound) = self.bound {
            let norm_sq: f64 = coeffs.iter().map(|c| c * c).sum();
            if norm_sq > bound {
                return Err(Error::BoundBreach { scheme: scheme.label(), t, norm_sq, bound });
            }
        }
        Ok(())
    }
}

/// Projected coefficients of one state: `P[σ^i_n]`, `P[b^i]` plus the spatial
/// drift, and optionally `P[correction^i]`.
struct Projected {
    sigma: Vec<f64>,
    drift: Vec<f64>,
    correction: Vec<f64>,
}

struct Workspace {
    nodal_state: Vec<f64>,
    nodal_sigma: Vec<f64>,
    nodal_drift: Vec<f64>,
    nodal_corr: Vec<f64>,
    x: Vec<f64>,
    sigma: Vec<f64>,
    drift: Vec<f64>,
    corr: Vec<f64>,
    scratch: Scratch,
    out: Projected,
}

impl Workspace {
    fn new(model: &WeakModel) -> Self {
        let (d, r) = (model.sys.state_dims(), model.sys.noise_dims());
        let (m, q) = (model.space.basis_size(), model.space.n_quad());
        Self {
            nodal_state: vec![0.0; d * q],
            nodal_sigma: vec![0.0; d * r * q],
            nodal_drift: vec![0.0; d * q],
            nodal_corr: vec![0.0; d * q],
            x: vec![0.0; d],
            sigma: vec![0.0; d * r],
            drift: vec![0.0; d],
            corr: vec![0.0; d],
            scratch: model.sys.scratch(),
            out: Projected { sigma: vec![0.0; d * r * m], drift: vec![0.0; d * m], correction: vec![0.0; d * m] },
        }
    }

    /// Pseudo-spectral evaluation: reconstruct at the quadrature nodes, apply
    /// the coefficients pointwise, project back.
    fn evaluate(&mut self, model: &WeakModel, coeffs: &[f64], with_correction: bool) {
        let sys = &model.sys;
        let space = &*model.space;
        let (d, r) = (sys.state_dims(), sys.noise_dims());
        let (m, q) = (space.basis_size(), space.n_quad());
        for i in 0..d {
            space.reconstruct(&coeffs[i * m..(i + 1) * m], &mut self.nodal_state[i * q..(i + 1) * q]);
        }
        for node in 0..q {
            for i in 0..d {
                self.x[i] = self.nodal_state[i * q + node];
            }
            sys.sigma_into(&self.x, &mut self.sigma);
            sys.drift_into(&self.x, &mut self.drift);
            for (slot, s) in self.sigma.iter().enumerate() {
                self.nodal_sigma[slot * q + node] = *s;
            }
            for i in 0..d {
                self.nodal_drift[i * q + node] = self.drift[i];
            }
            if with_correction {
                sys.correction_into(&self.x, &mut self.scratch, &mut self.corr);
                for i in 0..d {
                    self.nodal_corr[i * q + node] = self.corr[i];
                }
            }
        }
        for slot in 0..d * r {
            space.project_nodal(
                &self.nodal_sigma[slot * q..(slot + 1) * q],
                &mut self.out.sigma[slot * m..(slot + 1) * m],
            );
        }
        for i in 0..d {
            space.project_nodal(&self.nodal_drift[i * q..(i + 1) * q], &mut self.out.drift[i * m..(i + 1) * m]);
            if with_correction {
                space.project_nodal(&self.nodal_corr[i * q..(i + 1) * q], &mut self.out.correction[i * m..(i + 1) * m]);
            }
        }
        if let Some(spatial) = &model.spatial {
            spatial.apply(space, d, coeffs, &mut self.out.drift);
        }
    }
}

/// The pieces of one time step in coefficient space: the state moves by
/// `noise + drift` (approximate scheme) or `noise + (drift + correction)`
/// (Itô scheme).
#[derive(Debug, Clone, PartialEq)]
pub struct StepParts {
    pub noise: Vec<f64>,
    pub drift: Vec<f64>,
    pub correction: Vec<f64>,
}

impl StepParts {
    fn zeros(len: usize) -> Self {
        Self { noise: vec![0.0; len], drift: vec![0.0; len], correction: vec![0.0; len] }
    }
}

/// Reusable state for computing step parts.
pub(crate) struct Stepper<'m> {
    model: &'m WeakModel,
    ws: Workspace,
    stage: Vec<f64>,
    k_noise: [Vec<f64>; 4],
    k_drift: [Vec<f64>; 4],
    slope: Vec<f64>,
    dw: Vec<f64>,
}

impl<'m> Stepper<'m> {
    pub(crate) fn new(model: &'m WeakModel) -> Self {
        let len = model.components() * model.space.basis_size();
        let r = model.sys.noise_dims();
        let z = || [vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]];
        Self {
            model,
            ws: Workspace::new(model),
            stage: vec![0.0; len],
            k_noise: z(),
            k_drift: z(),
            slope: vec![0.0; r],
            dw: vec![0.0; r],
        }
    }

    fn noise_and_drift(&mut self, coeffs: &[f64], rates: &[f64], stage: usize) {
        let (d, r, m) = (self.model.components(), self.model.sys.noise_dims(), self.model.space.basis_size());
        self.ws.evaluate(self.model, coeffs, false);
        let noise = &mut self.k_noise[stage];
        for i in 0..d {
            for k in 0..m {
                noise[i * m + k] = (0..r).map(|n| self.ws.out.sigma[(i * r + n) * m + k] * rates[n]).sum();
            }
        }
        self.k_drift[stage].copy_from_slice(&self.ws.out.drift);
    }

    /// One RK4 step of the approximate Galerkin ODE from `coeffs` over grid
    /// step `step` of the drive's source grid.
    pub(crate) fn approx(&mut self, drive: &PolygonalPath<'_>, step: usize, coeffs: &[f64], parts: &mut StepParts) {
        let h = drive.source().grid().step();
        let segment = step / drive.stride();
        for n in 0..self.slope.len() {
            self.slope[n] = drive.slope(n, segment);
        }
        let slope = std::mem::take(&mut self.slope);
        self.noise_and_drift(coeffs, &slope, 0);
        for (s, c) in [(1, 0.5), (2, 0.5), (3, 1.0)] {
            for j in 0..coeffs.len() {
                self.stage[j] = coeffs[j] + c * h * (self.k_noise[s - 1][j] + self.k_drift[s - 1][j]);
            }
            let stage = std::mem::take(&mut self.stage);
            self.noise_and_drift(&stage, &slope, s);
            self.stage = stage;
        }
        self.slope = slope;
        let (kn, kd) = (&self.k_noise, &self.k_drift);
        for j in 0..coeffs.len() {
            parts.noise[j] = h / 6.0 * (kn[0][j] + 2.0 * kn[1][j] + 2.0 * kn[2][j] + kn[3][j]);
            parts.drift[j] = h / 6.0 * (kd[0][j] + 2.0 * kd[1][j] + 2.0 * kd[2][j] + kd[3][j]);
            parts.correction[j] = 0.0;
        }
    }

    /// One Euler-Maruyama step of the corrected Itô system over fine nodes `a..b`.
    pub(crate) fn ito(
        &mut self,
        path: &WienerPath,
        a: usize,
        b: usize,
        dt: f64,
        coeffs: &[f64],
        parts: &mut StepParts,
    ) {
        let (d, r, m) = (self.model.components(), self.model.sys.noise_dims(), self.model.space.basis_size());
        for n in 0..r {
            self.dw[n] = path.increment(n, a, b);
        }
        self.ws.evaluate(self.model, coeffs, true);
        let out = &self.ws.out;
        for i in 0..d {
            for k in 0..m {
                let j = i * m + k;
                parts.noise[j] = (0..r).map(|n| out.sigma[(i * r + n) * m + k] * self.dw[n]).sum();
                parts.drift[j] = out.drift[j] * dt;
                parts.correction[j] = out.correction[j] * dt;
            }
        }
    }
}

/// Coefficients at every node of a time grid, `(n_steps + 1) × d × m`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTrajectory {
    space: Arc<GalerkinSpace>,
    grid: TimeGrid,
    components: usize,
    states: Vec<f64>,
    scheme: Scheme,
    seed: u64,
}

impl FieldTrajectory {
    pub fn space(&self) -> &Arc<GalerkinSpace> {
        &self.space
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn width(&self) -> usize {
        self.components * self.space.basis_size()
    }

    /// Coefficients at a node, component-major.
    pub fn coeffs(&self, node: usize) -> &[f64] {
        let w = self.width();
        &self.states[node * w..(node + 1) * w]
    }

    pub fn state(&self, node: usize) -> FieldState {
        FieldState::new(self.space.clone(), self.components, self.coeffs(node).to_vec()).expect("shape is fixed")
    }

    /// Keeps every `stride`-th node.
    pub fn subsample(&self, stride: usize) -> Result<FieldTrajectory> {
        let grid = self.grid.coarsen(stride)?;
        let states = (0..grid.n_nodes()).flat_map(|k| self.coeffs(k * stride).iter().copied()).collect();
        Ok(FieldTrajectory { grid, states, ..self.clone() })
    }

    /// CSV with columns `t,component,basis_index,coeff`, one row per coefficient.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "component", "basis_index", "coeff"])?;
        let m = self.space.basis_size();
        for node in 0..self.grid.n_nodes() {
            let t = self.grid.time(node).to_string();
            for (j, c) in self.coeffs(node).iter().enumerate() {
                out.write_record([t.clone(), (j / m + 1).to_string(), (j % m).to_string(), c.to_string()])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// RK4 for `d/dt c = P[σ(X_δ)] Ḃ_δ + P[b(X_δ)]` on the drive's source grid.
pub fn solve_weak_approx(model: &WeakModel, drive: &PolygonalPath<'_>, x0: &FieldState) -> Result<FieldTrajectory> {
    model.check_initial(x0)?;
    let source = drive.source();
    if source.dims() != model.sys.noise_dims() {
        return Err(Error::Mismatch(format!(
            "drive has {} components, system expects {}",
            source.dims(),
            model.sys.noise_dims()
        )));
    }
    let grid = *source.grid();
    model.check_step(grid.step())?;
    let scheme = Scheme::ApproxOde;
    model.check_state(scheme, 0.0, x0.coeffs())?;
    let width = x0.coeffs().len();
    let mut states = Vec::with_capacity(grid.n_nodes() * width);
    states.extend_from_slice(x0.coeffs());
    let mut c = x0.coeffs().to_vec();
    let mut parts = StepParts::zeros(width);
    let mut stepper = Stepper::new(model);
    for step in 0..grid.n_steps() {
        stepper.approx(drive, step, &c, &mut parts);
        for j in 0..width {
            c[j] += parts.noise[j] + parts.drift[j];
        }
        model.check_state(scheme, grid.time(step + 1), &c)?;
        states.extend_from_slice(&c);
    }
    Ok(FieldTrajectory {
        space: model.space.clone(),
        grid,
        components: x0.components(),
        states,
        scheme,
        seed: source.seed(),
    })
}

/// Euler-Maruyama in coefficient space with the projected correction drift,
/// step `scheme_step`, driven by the increments of `path`.
pub fn solve_weak_ito(
    model: &WeakModel,
    path: &WienerPath,
    x0: &FieldState,
    scheme_step: f64,
) -> Result<FieldTrajectory> {
    model.check_initial(x0)?;
    if path.dims() != model.sys.noise_dims() {
        return Err(Error::Mismatch(format!(
            "path has {} components, system expects {}",
            path.dims(),
            model.sys.noise_dims()
        )));
    }
    let fine = *path.grid();
    let stride = fine.stride_of("scheme step", scheme_step)?;
    let grid = fine.coarsen(stride)?;
    let dt = grid.step();
    model.check_step(dt)?;
    let scheme = Scheme::ItoCorrected;
    model.check_state(scheme, 0.0, x0.coeffs())?;
    let width = x0.coeffs().len();
    let mut states = Vec::with_capacity(grid.n_nodes() * width);
    states.extend_from_slice(x0.coeffs());
    let mut c = x0.coeffs().to_vec();
    let mut parts = StepParts::zeros(width);
    let mut stepper = Stepper::new(model);
    for step in 0..grid.n_steps() {
        stepper.ito(path, step * stride, (step + 1) * stride, dt, &c, &mut parts);
        for j in 0..width {
            c[j] += parts.noise[j] + (parts.drift[j] + parts.correction[j]);
        }
        model.check_state(scheme, grid.time(step + 1), &c)?;
        states.extend_from_slice(&c);
    }
    Ok(FieldTrajectory {
        space: model.space.clone(),
        grid,
        components: x0.components(),
        states,
        scheme,
        seed: path.seed(),
    })
}

/// Step parts of every step of a stored trajectory, recomputed from its
/// states exactly as the solver computed them.
pub(crate) fn replay_parts(
    model: &WeakModel,
    traj: &FieldTrajectory,
    drive: Option<&PolygonalPath<'_>>,
    path: &WienerPath,
) -> Result<Vec<StepParts>> {
    let width = traj.width();
    let mut stepper = Stepper::new(model);
    let mut out = Vec::with_capacity(traj.grid.n_steps());
    match traj.scheme {
        Scheme::ApproxOde => {
            let drive = drive.ok_or_else(|| Error::invalid("approximate trajectory needs its drive"))?;
            if drive.source().grid() != &traj.grid {
                return Err(Error::Mismatch("drive grid differs from trajectory grid".into()));
            }
            for step in 0..traj.grid.n_steps() {
                let mut parts = StepParts::zeros(width);
                stepper.approx(drive, step, traj.coeffs(step), &mut parts);
                out.push(parts);
            }
        }
        Scheme::ItoCorrected => {
            let stride = path.grid().stride_of("trajectory step", traj.grid.step())?;
            let dt = traj.grid.step();
            for step in 0..traj.grid.n_steps() {
                let mut parts = StepParts::zeros(width);
                stepper.ito(path, step * stride, (step + 1) * stride, dt, traj.coeffs(step), &mut parts);
                out.push(parts);
            }
        }
    }
    Ok(out)
}

/// `(max over nodes of Σ_i ‖a^i − b^i‖²)^{p/2}`.
pub fn field_sup_error(a: &FieldTrajectory, b: &FieldTrajectory, p: f64) -> Result<f64> {
    if a.grid != b.grid || a.components != b.components || !same_space(&a.space, &b.space) {
        return Err(Error::Mismatch("field trajectories live on different grids or spaces".into()));
    }
    let w = a.width();
    let worst = a
        .states
        .chunks_exact(w)
        .zip(b.states.chunks_exact(w))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>())
        .fold(0.0f64, f64::max);
    Ok(worst.powf(p / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximant::wong_zakai;
    use crate::finite_solver::{solve_approx_ode, solve_ito_corrected};
    use crate::paths::sample_wiener;
    use crate::weak_spde::field::project;

    fn space(m: usize) -> Arc<GalerkinSpace> {
        Arc::new(GalerkinSpace::unit(m).unwrap())
    }

    fn gbm(a: f64) -> CoefficientSystem {
        CoefficientSystem::builder(1, 1)
            .sigma(move |x, s| s[0] = a * x[0])
            .sigma_jacobian(move |_, j| j[0] = a)
            .build()
            .unwrap()
    }

    fn path(t: f64, h: f64, seed: u64) -> WienerPath {
        sample_wiener(TimeGrid::with_step(t, h).unwrap(), 1, seed).unwrap()
    }

    #[test]
    fn zero_system_is_constant() {
        let s = space(4);
        let model = WeakModel::new(CoefficientSystem::builder(2, 1).build().unwrap(), s.clone());
        let x0 = project(&s, 2, |i, x| x * i as f64 + 0.5);
        let p = path(1.0, 1.0 / 64.0, 3);
        let a = solve_weak_approx(&model, &wong_zakai(&p, 1.0 / 8.0).unwrap(), &x0).unwrap();
        let i = solve_weak_ito(&model, &p, &x0, 1.0 / 16.0).unwrap();
        for node in 0..a.grid().n_nodes() {
            assert_eq!(a.coeffs(node), x0.coeffs());
        }
        for node in 0..i.grid().n_nodes() {
            assert_eq!(i.coeffs(node), x0.coeffs());
        }
    }

    #[test]
    fn constant_field_reduces_to_finite_solvers() {
        let s = space(6);
        let model = WeakModel::new(gbm(1.0), s.clone());
        let x0 = project(&s, 1, |_, _| 1.25);
        let p = path(1.0, 1.0 / 1024.0, 5);
        let drive = wong_zakai(&p, 1.0 / 16.0).unwrap();
        let weak = solve_weak_approx(&model, &drive, &x0).unwrap();
        let finite = solve_approx_ode(&gbm(1.0), &drive, &[1.25]).unwrap();
        let weak_ito = solve_weak_ito(&model, &p, &x0, 1.0 / 256.0).unwrap();
        let finite_ito = solve_ito_corrected(&gbm(1.0), &p, &[1.25], 1.0 / 256.0).unwrap();
        for node in 0..=1024 {
            let (a, b) = (weak.coeffs(node)[0], finite.state(node)[0]);
            assert!(((a - b) / b).abs() < 1e-8, "node {node}");
        }
        for node in 0..=256 {
            let (a, b) = (weak_ito.coeffs(node)[0], finite_ito.state(node)[0]);
            assert!(((a - b) / b).abs() < 1e-12, "node {node}");
        }
    }

    #[test]
    fn additive_noise_shifts_mean_mode_by_the_path() {
        let s = space(5);
        let sys = CoefficientSystem::builder(1, 1).sigma(|_, o| o[0] = 1.0).build().unwrap();
        let model = WeakModel::new(sys, s.clone());
        let x0 = project(&s, 1, |_, _| 0.5);
        let p = path(1.0, 1.0 / 512.0, 6);
        let tr = solve_weak_ito(&model, &p, &x0, 1.0 / 128.0).unwrap();
        for k in 0..=128 {
            assert_eq!(tr.coeffs(k)[0], 0.5 + p.value(0, 4 * k));
        }
    }

    #[test]
    fn bound_breach_aborts() {
        let s = space(4);
        let sys = CoefficientSystem::builder(1, 1).drift(|x, b| b[0] = x[0]).build().unwrap();
        let model = WeakModel::new(sys, s.clone()).with_bound(4.0).unwrap();
        let x0 = project(&s, 1, |_, _| 1.0);
        let p = path(2.0, 1.0 / 64.0, 1);
        match solve_weak_approx(&model, &wong_zakai(&p, 0.25).unwrap(), &x0) {
            Err(e @ Error::BoundBreach { .. }) => assert!(e.is_numerical()),
            other => panic!("expected bound breach, got {other:?}"),
        }
        let too_big = project(&s, 1, |_, _| 3.0);
        assert!(matches!(solve_weak_ito(&model, &p, &too_big, 0.25), Err(Error::BoundBreach { .. })));
        assert!(WeakModel::new(gbm(1.0), s).with_bound(-1.0).is_err());
    }

    struct Stiff;

    impl SpatialDrift for Stiff {
        fn name(&self) -> &str {
            "stiff"
        }

        fn apply(&self, _: &GalerkinSpace, _: usize, _: &[f64], _: &mut [f64]) {}

        fn max_stable_step(&self, space: &GalerkinSpace) -> Option<f64> {
            Some(1.0 / space.max_eigenvalue())
        }
    }

    #[test]
    fn step_guard_rejects_unstable_steps() {
        let s = space(8);
        let model = WeakModel::new(gbm(1.0), s.clone()).with_spatial_drift(Arc::new(Stiff));
        let x0 = project(&s, 1, |_, _| 1.0);
        let p = path(1.0, 1.0 / 64.0, 1);
        assert!(matches!(solve_weak_ito(&model, &p, &x0, 1.0 / 64.0), Err(Error::StepTooLarge { .. })));
        let fine = path(1.0, 1.0 / 1024.0, 1);
        assert!(solve_weak_ito(&model, &fine, &x0, 1.0 / 1024.0).is_ok());
    }

    #[test]
    fn solver_states_satisfy_parseval() {
        let s = space(8);
        let sys = CoefficientSystem::builder(1, 1)
            .sigma(|x, o| o[0] = x[0].sin())
            .sigma_jacobian(|x, j| j[0] = x[0].cos())
            .drift(|x, b| b[0] = -x[0])
            .build()
            .unwrap();
        let model = WeakModel::new(sys, s.clone());
        let x0 = project(&s, 1, |_, x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos());
        let p = path(1.0, 1.0 / 256.0, 2);
        let tr = solve_weak_approx(&model, &wong_zakai(&p, 1.0 / 16.0).unwrap(), &x0).unwrap();
        for node in (0..=256).step_by(17) {
            let f = tr.state(node);
            assert!((f.norm_sq() - f.norm_sq_by_quadrature()).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_rows_per_coefficient() {
        let s = space(2);
        let model = WeakModel::new(gbm(1.0), s.clone());
        let x0 = project(&s, 1, |_, _| 1.0);
        let p = path(1.0, 0.5, 1);
        let tr = solve_weak_ito(&model, &p, &x0, 0.5).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,component,basis_index,coeff\n0,1,0,1\n0,1,1,"));
        assert_eq!(text.lines().count(), 1 + 3 * 2);
    }

    #[test]
    fn field_sup_error_is_max_squared_distance() {
        let s = space(3);
        let model = WeakModel::new(CoefficientSystem::builder(1, 1).build().unwrap(), s.clone());
        let p = path(1.0, 0.25, 1);
        let a = solve_weak_ito(&model, &p, &project(&s, 1, |_, _| 1.0), 0.25).unwrap();
        let b = solve_weak_ito(&model, &p, &project(&s, 1, |_, _| 1.5), 0.25).unwrap();
        assert!((field_sup_error(&a, &b, 4.0).unwrap() - 0.0625).abs() < 1e-14);
        assert_eq!(field_sup_error(&a, &a, 4.0).unwrap(), 0.0);
    }
}
