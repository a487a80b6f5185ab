use crate::{Error, Result};

const GRAM_TOL: f64 = 1e-12;

/// Cosine basis of `L²(0, L)` with composite Gauss-Legendre quadrature.
///
/// Basis: `φ_0 = 1/√L`, `φ_k(x) = √(2/L) cos(kπx/L)` for `k = 1..m-1`
/// (the Neumann eigenfunctions). The quadrature splits `[0, L]` into `m` equal
/// panels with `q` Gauss nodes each. Weights are nudged so that their
/// sequential sum is exactly `L`; projecting a constant onto `φ_0` is then
/// exact for `L = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinSpace {
    length: f64,
    basis_size: usize,
    nodes_per_panel: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `m × Q`, `φ_k(x_q)`
    values: Vec<f64>,
    /// `m × Q`, `w_q φ_k(x_q)`
    weighted: Vec<f64>,
    /// `m × Q`, `φ_k'(x_q)`
    gradients: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_n`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

impl GalerkinSpace {
    /// Cosine basis of size `basis_size` on `[0, length]` with `nodes_per_panel`
    /// Gauss nodes per basis oscillation; errors if the discrete Gram matrix is
    /// not the identity to 1e-12.
    pub fn cosine(length: f64, basis_size: usize, nodes_per_panel: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) || basis_size == 0 || nodes_per_panel < 2 {
            return Err(Error::invalid(format!(
                "bad Galerkin space: L={length}, m={basis_size}, q={nodes_per_panel} (need L>0, m>=1, q>=2)"
            )));
        }
        let (ref_nodes, ref_weights) = gauss_legendre(nodes_per_panel);
        let panels = basis_size;
        let width = length / panels as f64;
        let mut nodes = Vec::with_capacity(panels * nodes_per_panel);
        let mut weights = Vec::with_capacity(panels * nodes_per_panel);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * width;
            for (x, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + 0.5 * width * x);
                weights.push(0.5 * width * w);
            }
        }
        // the last weight absorbs the rounding of the sequential sum (the
        // subtraction is exact since the head sum is within a factor 2 of L)
        let last = weights.len() - 1;
        let head: f64 = weights[..last].iter().sum();
        weights[last] = length - head;

        let q = nodes.len();
        let mut values = vec![0.0; basis_size * q];
        let mut gradients = vec![0.0; basis_size * q];
        let norm0 = 1.0 / length.sqrt();
        let norm = (2.0 / length).sqrt();
        for k in 0..basis_size {
            let freq = k as f64 * std::f64::consts::PI / length;
            for (j, &x) in nodes.iter().enumerate() {
                if k == 0 {
                    values[j] = norm0;
                } else {
                    values[k * q + j] = norm * (freq * x).cos();
                    gradients[k * q + j] = -norm * freq * (freq * x).sin();
                }
            }
        }
        let weighted = (0..basis_size * q).map(|i| weights[i % q] * values[i]).collect();
        let space = Self { length, basis_size, nodes_per_panel, nodes, weights, values, weighted, gradients };
        let defect = space.gram_defect();
        if !(defect <= GRAM_TOL) {
            return Err(Error::NotOrthonormal { defect });
        }
        Ok(space)
    }

    /// Default space on `[0, 1]` with 10 nodes per panel.
    pub fn unit(basis_size: usize) -> Result<Self> {
        Self::cosine(1.0, basis_size, 10)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn basis_size(&self) -> usize {
        self.basis_size
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.nodes_per_panel
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_quad(&self) -> usize {
        self.nodes.len()
    }

    /// `φ_k(x)` at an arbitrary point.
    pub fn basis(&self, k: usize, x: f64) -> f64 {
        if k == 0 {
            1.0 / self.length.sqrt()
        } else {
            (2.0 / self.length).sqrt() * (k as f64 * std::f64::consts::PI * x / self.length).cos()
        }
    }

    /// `Σ_k coeffs[k] φ_k(x)`.
    pub fn eval(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs.iter().enumerate().map(|(k, c)| c * self.basis(k, x)).sum()
    }

    pub fn gram_matrix(&self) -> Vec<f64> {
        let (m, q) = (self.basis_size, self.n_quad());
        let mut g = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                g[a * m + b] = (0..q).map(|j| self.weighted[a * q + j] * self.values[b * q + j]).sum();
            }
        }
        g
    }

    fn gram_defect(&self) -> f64 {
        let m = self.basis_size;
        self.gram_matrix()
            .iter()
            .enumerate()
            .map(|(i, g)| (g - if i / m == i % m { 1.0 } else { 0.0 }).abs())
            .fold(0.0, f64::max)
    }

    /// Nodal values of a field: `out[q] = Σ_k coeffs[k] φ_k(x_q)`.
    #[inline]
    pub fn reconstruct(&self, coeffs: &[f64], out: &mut [f64]) {
        let q = self.n_quad();
        out.fill(0.0);
        for (k, c) in coeffs.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(&self.values[k * q..(k + 1) * q]) {
                *o += c * v;
            }
        }
    }

    /// Nodal values of the spatial derivative of a field.
    pub fn reconstruct_gradient(&self, coeffs: &[f64], out: &mut [f64]) {
        let q = self.n_quad();
        out.fill(0.0);
        for (k, c) in coeffs.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(&self.gradients[k * q..(k + 1) * q]) {
                *o += c * v;
            }
        }
    }

    /// Quadrature projection: `out[k] = Σ_q w_q φ_k(x_q) values[q]`, summed in node order.
    #[inline]
    pub fn project_nodal(&self, values: &[f64], out: &mut [f64]) {
        let q = self.n_quad();
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.weighted[k * q..(k + 1) * q].iter().zip(values).map(|(w, v)| w * v).sum();
        }
    }

    /// `out[k] = -Σ_q w_q φ_k'(x_q) flux[q]`, the weak form of `∂_x flux`
    /// under zero-flux boundary conditions.
    pub fn project_divergence(&self, flux: &[f64], out: &mut [f64]) {
        let q = self.n_quad();
        for (k, o) in out.iter_mut().enumerate() {
            *o = -(0..q).map(|j| self.weights[j] * self.gradients[k * q + j] * flux[j]).sum::<f64>();
        }
    }

    /// Largest eigenvalue `((m-1)π/L)²` of `-∂²` on the space.
    pub fn max_eigenvalue(&self) -> f64 {
        let f = (self.basis_size - 1) as f64 * std::f64::consts::PI / self.length;
        f * f
    }
}
