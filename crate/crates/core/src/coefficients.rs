//! Coefficient fields `σ^i_n`, `b^i`, the Jacobians `∂_α σ^i_n`, and the
//! correction drift `Σ_{j,n} Σ_α c_jn σ^α_j ∂_α σ^i_n`.
//!
//! Layouts: `σ` is `d × r` row-major (`sigma[i * r + n]`), the Jacobian is
//! `d × r × d` (`jac[(i * r + n) * d + α]`), the correction tensor `r × r`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{Error, Result};

/// A vector field `x ↦ out`, pure and callable from many threads at once.
pub type FieldFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

const JACOBIAN_PROBES: usize = 100;
const JACOBIAN_PROBE_SEED: u64 = 0x005E_ED0F_CAFE;

/// Declared smoothness of a coefficient field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Smoothness {
    Continuous,
    C1Bounded,
    C2Bounded,
}

#[derive(Clone)]
pub struct CoefficientSystem {
    d: usize,
    r: usize,
    sigma: FieldFn,
    drift: FieldFn,
    sigma_jac: FieldFn,
    correction_limits: Vec<f64>,
    sigma_smoothness: Smoothness,
    drift_smoothness: Smoothness,
}

impl fmt::Debug for CoefficientSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSystem")
            .field("d", &self.d)
            .field("r", &self.r)
            .field("correction_limits", &self.correction_limits)
            .field("sigma_smoothness", &self.sigma_smoothness)
            .field("drift_smoothness", &self.drift_smoothness)
            .finish_non_exhaustive()
    }
}

/// The Wong-Zakai correction tensor `c_jn = δ_jn / 2`.
pub fn wong_zakai_tensor(r: usize) -> Vec<f64> {
    let mut c = vec![0.0; r * r];
    for j in 0..r {
        c[j * r + j] = 0.5;
    }
    c
}

pub struct CoefficientSystemBuilder {
    d: usize,
    r: usize,
    sigma: Option<FieldFn>,
    drift: Option<FieldFn>,
    sigma_jac: Option<FieldFn>,
    correction_limits: Option<Vec<f64>>,
    sigma_smoothness: Smoothness,
    drift_smoothness: Smoothness,
    probe_radius: f64,
}

impl CoefficientSystemBuilder {
    pub fn sigma(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma = Some(Arc::new(f));
        self
    }

    pub fn drift(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Arc::new(f));
        self
    }

    pub fn sigma_jacobian(mut self, f: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        self.sigma_jac = Some(Arc::new(f));
        self
    }

    /// Defaults to the Wong-Zakai tensor.
    pub fn correction_limits(mut self, c: Vec<f64>) -> Self {
        self.correction_limits = Some(c);
        self
    }

    pub fn smoothness(mut self, sigma: Smoothness, drift: Smoothness) -> Self {
        self.sigma_smoothness = sigma;
        self.drift_smoothness = drift;
        self
    }

    /// Half-width of the box in which the Jacobian cross-check probes (default 1).
    pub fn probe_radius(mut self, radius: f64) -> Self {
        self.probe_radius = radius;
        self
    }

    /// Validates shapes and smoothness, then cross-checks the analytic Jacobian
    /// against forward differences at fixed probes.
    pub fn build(self) -> Result<CoefficientSystem> {
        let (d, r) = (self.d, self.r);
        if d == 0 || r == 0 {
            return Err(Error::invalid("coefficient system needs d >= 1 and r >= 1"));
        }
        if self.sigma_smoothness < Smoothness::C2Bounded || self.drift_smoothness < Smoothness::C1Bounded {
            return Err(Error::invalid("σ must be C²_b and b must be C¹_b"));
        }
        let zero: FieldFn = Arc::new(|_: &[f64], out: &mut [f64]| out.fill(0.0));
        let correction_limits = self.correction_limits.unwrap_or_else(|| wong_zakai_tensor(r));
        if correction_limits.len() != r * r || correction_limits.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("correction tensor must hold {} finite entries", r * r)));
        }
        if !(self.probe_radius > 0.0) {
            return Err(Error::invalid("probe radius must be positive"));
        }
        let sys = CoefficientSystem {
            d,
            r,
            sigma: self.sigma.unwrap_or_else(|| zero.clone()),
            drift: self.drift.unwrap_or_else(|| zero.clone()),
            sigma_jac: self.sigma_jac.unwrap_or(zero),
            correction_limits,
            sigma_smoothness: self.sigma_smoothness,
            drift_smoothness: self.drift_smoothness,
        };
        sys.check_jacobian(JACOBIAN_PROBES, self.probe_radius, JACOBIAN_PROBE_SEED)?;
        Ok(sys)
    }
}

/// Scratch buffers for allocation-free evaluation in solver loops.
#[derive(Debug, Clone)]
pub struct Scratch {
    sigma: Vec<f64>,
    jac: Vec<f64>,
}

impl CoefficientSystem {
    pub fn builder(d: usize, r: usize) -> CoefficientSystemBuilder {
        CoefficientSystemBuilder {
            d,
            r,
            sigma: None,
            drift: None,
            sigma_jac: None,
            correction_limits: None,
            sigma_smoothness: Smoothness::C2Bounded,
            drift_smoothness: Smoothness::C1Bounded,
            probe_radius: 1.0,
        }
    }

    pub fn state_dims(&self) -> usize {
        self.d
    }

    pub fn noise_dims(&self) -> usize {
        self.r
    }

    pub fn correction_limits(&self) -> &[f64] {
        &self.correction_limits
    }

    pub fn smoothness(&self) -> (Smoothness, Smoothness) {
        (self.sigma_smoothness, self.drift_smoothness)
    }

    /// Same fields, different correction tensor.
    pub fn with_correction_limits(&self, c: Vec<f64>) -> Result<Self> {
        if c.len() != self.r * self.r {
            return Err(Error::invalid(format!("correction tensor must be {0}×{0}", self.r)));
        }
        Ok(Self { correction_limits: c, ..self.clone() })
    }

    pub fn scratch(&self) -> Scratch {
        Scratch { sigma: vec![0.0; self.d * self.r], jac: vec![0.0; self.d * self.r * self.d] }
    }

    #[inline]
    pub fn sigma_into(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma)(x, out)
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    #[inline]
    pub fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        (self.sigma_jac)(x, out)
    }

    pub fn sigma(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.r];
        self.sigma_into(x, &mut out);
        out
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        self.drift_into(x, &mut out);
        out
    }

    pub fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.r * self.d];
        self.jacobian_into(x, &mut out);
        out
    }

    /// Correction drift without input validation, for solver inner loops.
    pub fn correction_into(&self, x: &[f64], scratch: &mut Scratch, out: &mut [f64]) {
        let (d, r) = (self.d, self.r);
        self.sigma_into(x, &mut scratch.sigma);
        self.jacobian_into(x, &mut scratch.jac);
        out.fill(0.0);
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..r {
                for n in 0..r {
                    let c = self.correction_limits[j * r + n];
                    if c == 0.0 {
                        continue;
                    }
                    let jac = &scratch.jac[(i * r + n) * d..(i * r + n + 1) * d];
                    let inner: f64 = (0..d).map(|a| scratch.sigma[a * r + j] * jac[a]).sum();
                    *o += c * inner;
                }
            }
        }
    }

    /// Component `i` equals `Σ_{j,n} Σ_α c_jn σ^α_j(x) ∂_α σ^i_n(x)`.
    pub fn correction_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x)?;
        let mut out = vec![0.0; self.d];
        self.correction_into(x, &mut self.scratch(), &mut out);
        Ok(out)
    }

    /// The individual pieces `(σ^α_j ∂_α σ^i_n)(x)`, indexed `[(j * r + n) * d + i]`.
    pub fn correction_pieces(&self, x: &[f64]) -> Vec<f64> {
        let (d, r) = (self.d, self.r);
        let sigma = self.sigma(x);
        let jac = self.jacobian(x);
        let mut out = vec![0.0; r * r * d];
        for j in 0..r {
            for n in 0..r {
                for i in 0..d {
                    out[(j * r + n) * d + i] = (0..d).map(|a| sigma[a * r + j] * jac[(i * r + n) * d + a]).sum();
                }
            }
        }
        out
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::invalid(format!("expected a {}-vector, got {}", self.d, x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite state"));
        }
        Ok(())
    }

    /// First-order convergence check of forward differences against the
    /// analytic Jacobian: the error at ε = 1e-5 must be well below the error at
    /// ε = 1e-4, or both must sit at the rounding floor.
    pub fn check_jacobian(&self, probes: usize, radius: f64, seed: u64) -> Result<()> {
        let (d, r) = (self.d, self.r);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; d];
        let mut xp = vec![0.0; d];
        let mut base = vec![0.0; d * r];
        let mut bumped = vec![0.0; d * r];
        let mut jac = vec![0.0; d * r * d];
        for probe in 0..probes {
            x.iter_mut().for_each(|v| *v = rng.random_range(-radius..=radius));
            self.sigma_into(&x, &mut base);
            self.jacobian_into(&x, &mut jac);
            let scale = 1.0 + base.iter().chain(&jac).fold(0.0f64, |m, v| m.max(v.abs()));
            let mut errs = [0.0f64; 2];
            for (slot, eps) in [1e-4, 1e-5].into_iter().enumerate() {
                for a in 0..d {
                    xp.copy_from_slice(&x);
                    xp[a] += eps;
                    self.sigma_into(&xp, &mut bumped);
                    for (k, (hi, lo)) in bumped.iter().zip(&base).enumerate() {
                        let fd = (hi - lo) / eps;
                        errs[slot] = errs[slot].max((fd - jac[k * d + a]).abs());
                    }
                }
            }
            let [coarse, fine] = errs;
            if !(fine <= 0.5 * coarse + 1e-6 * scale) {
                return Err(Error::JacobianMismatch { probe, coarse, fine });
            }
        }
        Ok(())
    }
}

/// Empirical surrogates for the growth and Lipschitz constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularityReport {
    pub growth_ratio: f64,
    pub lipschitz_ratio: f64,
    pub n_probes: usize,
    pub max_probe_norm: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Probes `x` uniformly in `[-radius, radius]^d` and reports
///
/// * `growth_ratio = max_x (|σ(x)|² + |b(x)|² + |pieces(x)|²) / (1 + |x|²)`
/// * `lipschitz_ratio = max_{x≠y} (|Δσ|² + |Δb|² + |Δpieces|²) / |x - y|²`
///
/// where `pieces` are the individual correction terms `σ^α_j ∂_α σ^i_n`.
pub fn check_regularity(
    sys: &CoefficientSystem,
    probe_count: usize,
    probe_radius: f64,
    seed: u64,
) -> Result<RegularityReport> {
    if probe_count < 2 {
        return Err(Error::invalid("regularity check needs at least two probes"));
    }
    if !(probe_radius > 0.0) {
        return Err(Error::invalid("probe radius must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Vec<f64>> = (0..probe_count)
        .map(|_| (0..sys.d).map(|_| rng.random_range(-probe_radius..=probe_radius)).collect())
        .collect();
    let evals: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> =
        probes.iter().map(|x| (sys.sigma(x), sys.drift(x), sys.correction_pieces(x))).collect();

    let mut growth_ratio = 0.0f64;
    let mut max_probe_norm = 0.0f64;
    for (x, (s, b, p)) in probes.iter().zip(&evals) {
        let nx = sq_norm(x);
        max_probe_norm = max_probe_norm.max(nx.sqrt());
        growth_ratio = growth_ratio.max((sq_norm(s) + sq_norm(b) + sq_norm(p)) / (1.0 + nx));
    }
    let mut lipschitz_ratio = 0.0f64;
    for a in 0..probe_count {
        for c in a + 1..probe_count {
            let dx = sq_dist(&probes[a], &probes[c]);
            if dx == 0.0 {
                continue;
            }
            let (sa, ba, pa) = &evals[a];
            let (sc, bc, pc) = &evals[c];
            let num = sq_dist(sa, sc) + sq_dist(ba, bc) + sq_dist(pa, pc);
            lipschitz_ratio = lipschitz_ratio.max(num / dx);
        }
    }
    Ok(RegularityReport { growth_ratio, lipschitz_ratio, n_probes: probe_count, max_probe_norm })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(a: f64) -> CoefficientSystem {
        CoefficientSystem::builder(1, 1)
            .sigma(move |x, s| s[0] = a * x[0])
            .sigma_jacobian(move |_, j| j[0] = a)
            .build()
            .unwrap()
    }

    #[test]
    fn additive_noise_has_no_correction() {
        let sys = CoefficientSystem::builder(2, 3)
            .sigma(|_, s| s.iter_mut().enumerate().for_each(|(k, v)| *v = k as f64 + 1.0))
            .build()
            .unwrap();
        assert_eq!(sys.correction_field(&[0.3, -2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_noise_correction_is_half_a_squared_x() {
        let sys = linear(1.5);
        for x in [-2.0, 0.0, 0.7, 3.0] {
            let got = sys.correction_field(&[x]).unwrap()[0];
            assert!((got - 0.5 * 1.5 * 1.5 * x).abs() < 1e-15);
        }
        // finite-difference version of σσ'
        let x = 0.7;
        let eps = 1e-6;
        let fd = 1.5 * x * (1.5 * (x + eps) - 1.5 * (x - eps)) / (2.0 * eps);
        assert!((0.5 * fd - sys.correction_field(&[x]).unwrap()[0]).abs() < 1e-8);
    }

    #[test]
    fn zero_tensor_annihilates() {
        let sys = linear(2.0).with_correction_limits(vec![0.0]).unwrap();
        assert_eq!(sys.correction_field(&[1.3]).unwrap(), vec![0.0]);
    }

    #[test]
    fn rejects_non_finite_points() {
        assert!(linear(1.0).correction_field(&[f64::NAN]).is_err());
        assert!(linear(1.0).correction_field(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn wrong_jacobian_is_rejected_at_construction() {
        let r = CoefficientSystem::builder(1, 1)
            .sigma(|x, s| s[0] = x[0].sin())
            .sigma_jacobian(|x, j| j[0] = x[0].cos() + 1e-3)
            .build();
        assert!(matches!(r, Err(Error::JacobianMismatch { .. })));
    }

    #[test]
    fn insufficient_smoothness_is_rejected() {
        let r = CoefficientSystem::builder(1, 1).smoothness(Smoothness::C1Bounded, Smoothness::C1Bounded).build();
        assert!(r.is_err());
    }

    #[test]
    fn regularity_of_zero_system() {
        let sys = CoefficientSystem::builder(2, 2).build().unwrap();
        let rep = check_regularity(&sys, 50, 3.0, 1).unwrap();
        assert_eq!(rep.growth_ratio, 0.0);
        assert_eq!(rep.lipschitz_ratio, 0.0);
        assert!(rep.max_probe_norm <= 3.0 * 2f64.sqrt());
        assert!(check_regularity(&sys, 1, 1.0, 1).is_err());
    }

    /// Dense-grid maximization oracle of the Lipschitz quotient for σ(x) = x.
    #[test]
    fn lipschitz_ratio_of_identity_noise() {
        let sys = linear(1.0);
        let rep = check_regularity(&sys, 200, 1.0, 2).unwrap();
        let grid: Vec<f64> = (0..=400).map(|k| -1.0 + k as f64 / 200.0).collect();
        let mut oracle = 0.0f64;
        for &x in &grid {
            for &y in &grid {
                if x != y {
                    // σ = x, b = 0, single correction piece σσ' = x
                    let num = (x - y).powi(2) + (x - y).powi(2);
                    oracle = oracle.max(num / (x - y).powi(2));
                }
            }
        }
        assert!((rep.lipschitz_ratio - oracle).abs() <= 0.1 * oracle);
    }

    #[test]
    fn bounded_derivative_drift_respects_mean_value_bound() {
        let c = 0.8;
        let sys = CoefficientSystem::builder(1, 1).drift(move |x, b| b[0] = c * x[0].sin()).build().unwrap();
        let rep = check_regularity(&sys, 300, 4.0, 3).unwrap();
        assert!(rep.lipschitz_ratio <= c * c + 1e-12);
        assert!(rep.lipschitz_ratio > 0.5 * c * c);
    }
}
