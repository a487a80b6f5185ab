//! Named coefficient systems: geometric Brownian motion, additive noise, a
//! diagonal Nemytskii system for the weak setting, and the stochastic ion
//! transport model with its cross-diffusion drift.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::coefficients::CoefficientSystem;
use crate::weak_spde::{project, FieldState, GalerkinSpace, SpatialDrift, WeakModel};
use crate::{Error, Result};

pub const SYSTEM_NAMES: [&str; 4] = ["gbm", "additive", "diagonal-nemytskii", "ion-transport"];

const SIMPLEX_TOL: f64 = 1e-12;

/// Ion transport model with `d` species plus the solvent `x^{d+1} = 1 − Σ x^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct IonTransportSpec {
    diffusion: Vec<f64>,
    noise_scale: f64,
}

impl IonTransportSpec {
    pub fn new(diffusion: Vec<f64>, noise_scale: f64) -> Result<Self> {
        if diffusion.is_empty() {
            return Err(Error::invalid("ion transport needs at least one species"));
        }
        if let Some(d) = diffusion.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::invalid(format!("diffusion constants must be positive, got {d}")));
        }
        if !noise_scale.is_finite() {
            return Err(Error::invalid("noise scale must be finite"));
        }
        Ok(Self { diffusion, noise_scale })
    }

    pub fn species(&self) -> usize {
        self.diffusion.len()
    }

    pub fn diffusion(&self) -> &[f64] {
        &self.diffusion
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// `A(x)` without the simplex check, for states the scheme has pushed
    /// slightly outside.
    fn matrix_into(&self, x: &[f64], out: &mut [f64]) {
        // x^i + x^{d+1} = 1 − Σ_{n≠i} x^n, which keeps A exactly constant for d = 1
        let d = self.species();
        let total: f64 = x.iter().sum();
        for i in 0..d {
            for n in 0..d {
                out[i * d + n] =
                    if i == n { self.diffusion[i] * (1.0 - (total - x[i])) } else { self.diffusion[i] * x[i] };
            }
        }
    }
}

/// The diffusion matrix `A^{in}(x)`, row-major `d × d`:
/// `A^{ii} = D^i x^i + D^i x^{d+1}`, `A^{in} = D^i x^i` for `i ≠ n`.
pub fn ion_diffusion_matrix(spec: &IonTransportSpec, x: &[f64]) -> Result<Vec<f64>> {
    let d = spec.species();
    if x.len() != d {
        return Err(Error::invalid(format!("state has {} components, model has {d} species", x.len())));
    }
    let total: f64 = x.iter().sum();
    if x.iter().any(|v| !(*v >= -SIMPLEX_TOL && *v <= 1.0 + SIMPLEX_TOL)) || total > 1.0 + SIMPLEX_TOL {
        return Err(Error::invalid(format!("state {x:?} lies outside the simplex")));
    }
    let mut a = vec![0.0; d * d];
    spec.matrix_into(x, &mut a);
    Ok(a)
}

/// Weak form of `div(Σ_n A^{in}(X) ∇X^n)` with zero-flux boundary conditions,
/// `A` frozen at the quadrature nodes.
#[derive(Debug, Clone)]
pub struct IonDivergence {
    spec: IonTransportSpec,
}

impl IonDivergence {
    pub fn new(spec: IonTransportSpec) -> Self {
        Self { spec }
    }
}

impl SpatialDrift for IonDivergence {
    fn name(&self) -> &str {
        "ion-divergence"
    }

    fn apply(&self, space: &GalerkinSpace, components: usize, coeffs: &[f64], out: &mut [f64]) {
        let (m, q) = (space.basis_size(), space.n_quad());
        let d = components;
        let mut u = vec![0.0; d * q];
        let mut grad = vec![0.0; d * q];
        for i in 0..d {
            space.reconstruct(&coeffs[i * m..(i + 1) * m], &mut u[i * q..(i + 1) * q]);
            space.reconstruct_gradient(&coeffs[i * m..(i + 1) * m], &mut grad[i * q..(i + 1) * q]);
        }
        let mut flux = vec![0.0; d * q];
        let mut x = vec![0.0; d];
        let mut a = vec![0.0; d * d];
        for node in 0..q {
            for i in 0..d {
                x[i] = u[i * q + node];
            }
            self.spec.matrix_into(&x, &mut a);
            for i in 0..d {
                flux[i * q + node] = (0..d).map(|n| a[i * d + n] * grad[n * q + node]).sum();
            }
        }
        let mut projected = vec![0.0; m];
        for i in 0..d {
            space.project_divergence(&flux[i * q..(i + 1) * q], &mut projected);
            for k in 0..m {
                out[i * m + k] += projected[k];
            }
        }
    }

    /// `1 / (d · max D · λ_max)`, with `d · max D` bounding the row sums of `A`
    /// on the simplex.
    fn max_stable_step(&self, space: &GalerkinSpace) -> Option<f64> {
        let dmax = self.spec.diffusion.iter().copied().fold(0.0, f64::max);
        let lambda = space.max_eigenvalue();
        (lambda > 0.0).then(|| 1.0 / (self.spec.species() as f64 * dmax * lambda))
    }
}

type Profile = Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>;

/// A ready-to-run system: coefficients, initial data for both settings and
/// the weak-setting extras.
#[derive(Clone)]
pub struct NamedSystem {
    name: String,
    sys: CoefficientSystem,
    x0: Vec<f64>,
    profile: Profile,
    spatial: Option<Arc<dyn SpatialDrift>>,
    bound: Option<f64>,
    lipschitz_exempt: Option<&'static str>,
}

impl fmt::Debug for NamedSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NamedSystem")
            .field("name", &self.name)
            .field("sys", &self.sys)
            .field("x0", &self.x0)
            .field("bound", &self.bound)
            .field("lipschitz_exempt", &self.lipschitz_exempt)
            .finish_non_exhaustive()
    }
}

impl NamedSystem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn system(&self) -> &CoefficientSystem {
        &self.sys
    }

    /// Initial state for the finite-dimensional solvers.
    pub fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    /// Initial field for the weak solvers.
    pub fn initial_field(&self, space: &Arc<GalerkinSpace>) -> FieldState {
        let profile = self.profile.clone();
        project(space, self.sys.state_dims(), move |i, x| profile(i, x))
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn spatial_drift(&self) -> Option<&Arc<dyn SpatialDrift>> {
        self.spatial.as_ref()
    }

    /// Why the system is excused from the Lipschitz assertion, if it is.
    pub fn lipschitz_exemption(&self) -> Option<&'static str> {
        self.lipschitz_exempt
    }

    pub fn weak_model(&self, space: Arc<GalerkinSpace>) -> Result<WeakModel> {
        let mut model = WeakModel::new(self.sys.clone(), space);
        if let Some(s) = &self.spatial {
            model = model.with_spatial_drift(s.clone());
        }
        if let Some(b) = self.bound {
            model = model.with_bound(b)?;
        }
        Ok(model)
    }
}

/// Parameter lookup that rejects unknown keys and non-finite values.
struct Params<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    fn new(name: &'a str, map: &'a BTreeMap<String, f64>, allowed: &[&str]) -> Result<Self> {
        for (k, v) in map {
            let known = allowed.iter().any(|a| a == k || (a.ends_with('*') && k.starts_with(&a[..a.len() - 1])));
            if !known {
                return Err(Error::invalid(format!("unknown parameter `{k}` for system `{name}`")));
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("parameter `{k}` of `{name}` is not finite")));
            }
        }
        Ok(Self { name, map })
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.map.get(key).copied().unwrap_or(default)
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.get(key, default);
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::invalid(format!("parameter `{key}` of `{}` must be positive, got {v}", self.name)))
        }
    }
}

/// Builds a named system.
///
/// | name | parameters (defaults) |
/// |---|---|
/// | `gbm` | `a` (1), `mu` (0), `x0` (1), `amp` (0.25) |
/// | `additive` | `sigma` (1), `x0` (0), `amp` (0.25) |
/// | `diagonal-nemytskii` | `amp` (1), `kappa` (0.5), `bound` (50) |
/// | `ion-transport` | `d` (2), `D1..Dd` (1), `eps` (0.1), `bound` (2d) |
pub fn make_named_system(name: &str, params: &BTreeMap<String, f64>) -> Result<NamedSystem> {
    match name {
        "gbm" => {
            let p = Params::new(name, params, &["a", "mu", "x0", "amp"])?;
            let (a, mu, x0, amp) = (p.get("a", 1.0), p.get("mu", 0.0), p.get("x0", 1.0), p.get("amp", 0.25));
            let sys = CoefficientSystem::builder(1, 1)
                .sigma(move |x, s| s[0] = a * x[0])
                .sigma_jacobian(move |_, j| j[0] = a)
                .drift(move |x, b| b[0] = mu * x[0])
                .build()?;
            Ok(NamedSystem {
                name: name.into(),
                sys,
                x0: vec![x0],
                profile: Arc::new(move |_, x| x0 * (1.0 + amp * (std::f64::consts::PI * x).cos())),
                spatial: None,
                bound: None,
                lipschitz_exempt: None,
            })
        }
        "additive" => {
            let p = Params::new(name, params, &["sigma", "x0", "amp"])?;
            let (sigma, x0, amp) = (p.get("sigma", 1.0), p.get("x0", 0.0), p.get("amp", 0.25));
            let sys = CoefficientSystem::builder(1, 1).sigma(move |_, s| s[0] = sigma).build()?;
            Ok(NamedSystem {
                name: name.into(),
                sys,
                x0: vec![x0],
                profile: Arc::new(move |_, x| x0 + amp * (std::f64::consts::PI * x).cos()),
                spatial: None,
                bound: None,
                lipschitz_exempt: None,
            })
        }
        "diagonal-nemytskii" => {
            let p = Params::new(name, params, &["amp", "kappa", "bound"])?;
            let (amp, kappa, bound) = (p.get("amp", 1.0), p.get("kappa", 0.5), p.positive("bound", 50.0)?);
            let sys = CoefficientSystem::builder(2, 2)
                .sigma(move |x, s| {
                    s.fill(0.0);
                    s[0] = amp * x[0].sin();
                    s[3] = amp * x[1].sin();
                })
                .sigma_jacobian(move |x, j| {
                    // jac[(i * r + n) * d + α]
                    j.fill(0.0);
                    j[0] = amp * x[0].cos();
                    j[7] = amp * x[1].cos();
                })
                .drift(move |x, b| {
                    b[0] = kappa * x[0].cos();
                    b[1] = kappa * x[1].cos();
                })
                .build()?;
            Ok(NamedSystem {
                name: name.into(),
                sys,
                x0: vec![1.0, 1.0],
                profile: Arc::new(|i, x| 1.0 + 0.5 * ((i + 1) as f64 * std::f64::consts::PI * x).cos()),
                spatial: None,
                bound: Some(bound),
                lipschitz_exempt: None,
            })
        }
        "ion-transport" => {
            let p = Params::new(name, params, &["d", "D*", "eps", "bound"])?;
            let d = p.get("d", 2.0);
            if !(d >= 1.0 && d.fract() == 0.0 && d <= 16.0) {
                return Err(Error::invalid(format!(
                    "ion-transport species count must be an integer in 1..=16, got {d}"
                )));
            }
            let d = d as usize;
            if let Some(k) = params
                .keys()
                .filter(|k| k.starts_with('D'))
                .find(|k| k[1..].parse::<usize>().map_or(true, |i| i == 0 || i > d))
            {
                return Err(Error::invalid(format!("unknown parameter `{k}` for system `{name}` with d = {d}")));
            }
            let diffusion = (1..=d).map(|i| p.positive(&format!("D{i}"), 1.0)).collect::<Result<Vec<_>>>()?;
            let eps = p.get("eps", 0.1);
            let bound = p.positive("bound", 2.0 * d as f64)?;
            let spec = IonTransportSpec::new(diffusion, eps)?;
            let sys = CoefficientSystem::builder(d, d)
                .sigma(move |x, s| {
                    s.fill(0.0);
                    for i in 0..d {
                        s[i * d + i] = eps * x[i] * (1.0 - x[i]);
                    }
                })
                .sigma_jacobian(move |x, j| {
                    j.fill(0.0);
                    for i in 0..d {
                        j[(i * d + i) * d + i] = eps * (1.0 - 2.0 * x[i]);
                    }
                })
                .build()?;
            let level = 1.0 / (d as f64 + 1.0);
            Ok(NamedSystem {
                name: name.into(),
                sys,
                x0: vec![level; d],
                profile: Arc::new(move |i, x| level * (1.0 + 0.25 * ((i + 1) as f64 * std::f64::consts::PI * x).cos())),
                spatial: Some(Arc::new(IonDivergence::new(spec))),
                bound: Some(bound),
                lipschitz_exempt: Some(
                    "the cross-diffusion drift div(A(X)∇X) is a differential operator in x, \
                     not a Lipschitz map of the state; only the pointwise noise is checked",
                ),
            })
        }
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::check_regularity;

    fn none() -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn ion_matrix_one_species_is_constant() {
        let spec = IonTransportSpec::new(vec![2.5], 0.1).unwrap();
        for x in [0.0, 0.125, 0.5, 1.0] {
            assert_eq!(ion_diffusion_matrix(&spec, &[x]).unwrap(), vec![2.5]);
        }
    }

    /// Written out entry by entry, independently of the loop above.
    #[test]
    fn ion_matrix_two_species_by_hand() {
        let spec = IonTransportSpec::new(vec![1.0, 2.0], 0.1).unwrap();
        let a = ion_diffusion_matrix(&spec, &[0.3, 0.4]).unwrap();
        let solvent = 1.0 - 0.3 - 0.4;
        let oracle = [1.0 * 0.3 + 1.0 * solvent, 1.0 * 0.3, 2.0 * 0.4, 2.0 * 0.4 + 2.0 * solvent];
        for (x, y) in a.iter().zip(oracle) {
            assert!((x - y).abs() <= 1e-14);
        }
        for (x, y) in a.iter().zip([0.6, 0.3, 0.8, 1.4]) {
            assert!((x - y).abs() <= 1e-14);
        }
        assert_eq!(ion_diffusion_matrix(&spec, &[0.0, 0.0]).unwrap(), vec![1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn ion_matrix_rejects_states_off_the_simplex() {
        let spec = IonTransportSpec::new(vec![1.0, 2.0], 0.1).unwrap();
        assert!(ion_diffusion_matrix(&spec, &[0.7, 0.4]).is_err());
        assert!(ion_diffusion_matrix(&spec, &[-0.1, 0.4]).is_err());
        assert!(ion_diffusion_matrix(&spec, &[0.5]).is_err());
        assert!(ion_diffusion_matrix(&spec, &[0.5, 0.5 + 1e-13]).is_ok());
        assert!(IonTransportSpec::new(vec![1.0, 0.0], 0.1).is_err());
        assert!(IonTransportSpec::new(vec![], 0.1).is_err());
    }

    #[test]
    fn gbm_correction_at_two() {
        let s = make_named_system("gbm", &params(&[("a", 1.0)])).unwrap();
        assert_eq!(s.system().correction_field(&[2.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn additive_correction_vanishes() {
        let s = make_named_system("additive", &params(&[("sigma", 0.7)])).unwrap();
        for x in [-3.0, 0.0, 5.0] {
            assert_eq!(s.system().correction_field(&[x]).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn diagonal_nemytskii_builds_and_corrects() {
        let s = make_named_system("diagonal-nemytskii", &none()).unwrap();
        let c = s.system().correction_field(&[0.4, -1.1]).unwrap();
        assert!((c[0] - 0.5 * 0.4f64.sin() * 0.4f64.cos()).abs() < 1e-15);
        assert!((c[1] - 0.5 * (-1.1f64).sin() * (-1.1f64).cos()).abs() < 1e-15);
        assert_eq!(s.bound(), Some(50.0));
    }

    #[test]
    fn unknown_names_and_parameters() {
        assert!(matches!(make_named_system("sktm", &none()), Err(Error::UnknownSystem(_))));
        assert!(make_named_system("gbm", &params(&[("b", 1.0)])).is_err());
        assert!(make_named_system("gbm", &params(&[("a", f64::NAN)])).is_err());
        assert!(make_named_system("ion-transport", &params(&[("d", 1.5)])).is_err());
        assert!(make_named_system("ion-transport", &params(&[("D3", 1.0)])).is_err());
        assert!(make_named_system("ion-transport", &params(&[("D1", -1.0)])).is_err());
        assert!(make_named_system("ion-transport", &params(&[("d", 3.0), ("D3", 0.5)])).is_ok());
    }

    #[test]
    fn every_system_has_finite_regularity_ratios() {
        for name in SYSTEM_NAMES {
            let s = make_named_system(name, &none()).unwrap();
            let r = check_regularity(s.system(), 40, 1.0, 3).unwrap();
            assert!(r.growth_ratio.is_finite() && r.lipschitz_ratio.is_finite(), "{name}");
            assert_eq!(s.lipschitz_exemption().is_some(), name == "ion-transport");
        }
    }

    #[test]
    fn ion_divergence_conserves_mass_and_damps() {
        let s = make_named_system("ion-transport", &none()).unwrap();
        let space = Arc::new(GalerkinSpace::unit(8).unwrap());
        let x0 = s.initial_field(&space);
        let mut out = vec![0.0; 2 * 8];
        s.spatial_drift().unwrap().apply(&space, 2, x0.coeffs(), &mut out);
        // zero flux: the mean mode does not move
        assert!(out[0].abs() < 1e-14 && out[8].abs() < 1e-14);
        // diffusion lowers the L² norm
        let rate: f64 = x0.coeffs().iter().zip(&out).map(|(c, o)| c * o).sum();
        assert!(rate < 0.0);
        let step = s.spatial_drift().unwrap().max_stable_step(&space).unwrap();
        assert!((step - 1.0 / (2.0 * (7.0 * std::f64::consts::PI).powi(2))).abs() < 1e-15);
    }
}
