use std::sync::Arc;

use super::space::GalerkinSpace;
use crate::{Error, Result};

/// A `d`-component field `Σ_k coeffs[i][k] φ_k` in a Galerkin space.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    space: Arc<GalerkinSpace>,
    components: usize,
    coeffs: Vec<f64>,
}

impl FieldState {
    pub fn new(space: Arc<GalerkinSpace>, components: usize, coeffs: Vec<f64>) -> Result<Self> {
        if components == 0 || coeffs.len() != components * space.basis_size() {
            return Err(Error::Mismatch(format!(
                "{} coefficients for {components} components of size {}",
                coeffs.len(),
                space.basis_size()
            )));
        }
        Ok(Self { space, components, coeffs })
    }

    pub fn zeros(space: Arc<GalerkinSpace>, components: usize) -> Self {
        let coeffs = vec![0.0; components * space.basis_size()];
        Self { space, components, coeffs }
    }

    pub fn space(&self) -> &Arc<GalerkinSpace> {
        &self.space
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let m = self.space.basis_size();
        &self.coeffs[i * m..(i + 1) * m]
    }

    /// `Σ_i ‖X^i‖²` from the coefficients (Parseval).
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    /// `Σ_i ‖X^i‖²` by quadrature of the reconstructed field.
    pub fn norm_sq_by_quadrature(&self) -> f64 {
        let mut nodal = vec![0.0; self.space.n_quad()];
        (0..self.components)
            .map(|i| {
                self.space.reconstruct(self.component(i), &mut nodal);
                nodal.iter().zip(self.space.weights()).map(|(v, w)| w * v * v).sum::<f64>()
            })
            .sum()
    }

    /// Value of component `i` at a point of the domain.
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        self.space.eval(self.component(i), x)
    }
}

pub(crate) fn same_space(a: &GalerkinSpace, b: &GalerkinSpace) -> bool {
    std::ptr::eq(a, b) || a == b
}

/// Galerkin projection of `f(i, x)` for `i = 0..components`.
pub fn project<F>(space: &Arc<GalerkinSpace>, components: usize, f: F) -> FieldState
where
    F: Fn(usize, f64) -> f64,
{
    let m = space.basis_size();
    let mut coeffs = vec![0.0; components * m];
    let mut nodal = vec![0.0; space.n_quad()];
    for i in 0..components {
        for (v, &x) in nodal.iter_mut().zip(space.nodes()) {
            *v = f(i, x);
        }
        space.project_nodal(&nodal, &mut coeffs[i * m..(i + 1) * m]);
    }
    FieldState { space: space.clone(), components, coeffs }
}

/// `Σ_i ⟨a^i, b^i⟩_{L²}`.
pub fn pair(a: &FieldState, b: &FieldState) -> Result<f64> {
    if !same_space(&a.space, &b.space) || a.components != b.components {
        return Err(Error::Mismatch("fields live in different spaces".into()));
    }
    Ok(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(m: usize) -> Arc<GalerkinSpace> {
        Arc::new(GalerkinSpace::unit(m).unwrap())
    }

    #[test]
    fn basis_element_projects_to_unit_vector() {
        let s = space(8);
        let f = project(&s, 1, |_, x| s.basis(3, x));
        for (k, c) in f.coeffs().iter().enumerate() {
            let target = if k == 3 { 1.0 } else { 0.0 };
            assert!((c - target).abs() <= 1e-12);
        }
        let z = project(&s, 2, |_, _| 0.0);
        assert!(z.coeffs().iter().all(|c| *c == 0.0));
    }

    /// Composite Simpson rule with 10⁴ intervals as the reference inner product.
    #[test]
    fn projection_of_identity_matches_dense_quadrature() {
        let s = space(16);
        let f = project(&s, 1, |_, x| x);
        let n = 10_000;
        let h = 1.0 / n as f64;
        for k in 0..16 {
            let g = |x: f64| x * s.basis(k, x);
            let mut acc = g(0.0) + g(1.0);
            for j in 1..n {
                acc += if j % 2 == 1 { 4.0 } else { 2.0 } * g(j as f64 * h);
            }
            let oracle = acc * h / 3.0;
            assert!((f.coeffs()[k] - oracle).abs() < 1e-10, "mode {k}");
        }
        // closed form for the odd modes: √2 ((-1)^k - 1) / (kπ)²
        let k = 3.0;
        let exact = 2f64.sqrt() * (-2.0) / (k * std::f64::consts::PI).powi(2);
        assert!((f.coeffs()[3] - exact).abs() < 1e-14);
    }

    #[test]
    fn pair_properties() {
        let s = space(6);
        let a = project(&s, 2, |i, x| (i as f64 + 1.0) * x.sin() + 0.3);
        let zero = FieldState::zeros(s.clone(), 2);
        assert_eq!(pair(&a, &a).unwrap(), a.norm_sq());
        assert_eq!(pair(&a, &zero).unwrap(), 0.0);
        let other = project(&space(7), 2, |_, x| x);
        assert!(pair(&a, &other).is_err());
    }

    #[test]
    fn parseval_holds_for_reconstructed_fields() {
        let s = space(8);
        let a = project(&s, 3, |i, x| (3.0 * x + i as f64).cos() * (1.0 + x * x));
        assert!((a.norm_sq() - a.norm_sq_by_quadrature()).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn cauchy_schwarz(
            a in proptest::collection::vec(-10.0f64..10.0, 16),
            b in proptest::collection::vec(-10.0f64..10.0, 16),
        ) {
            let s = space(8);
            let fa = FieldState::new(s.clone(), 2, a).unwrap();
            let fb = FieldState::new(s, 2, b).unwrap();
            let ab = pair(&fa, &fb).unwrap();
            let bound = pair(&fa, &fa).unwrap() * pair(&fb, &fb).unwrap();
            prop_assert!(ab * ab <= bound * (1.0 + 1e-12) + 1e-300);
        }
    }
}
