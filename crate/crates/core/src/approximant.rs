//! Piecewise continuously differentiable approximations of Wiener paths.
//!
//! [`WongZakai`] is the shipped family: the polygonal interpolant of the path
//! on a mesh of spacing δ. The Monte Carlo diagnostics are written against the
//! [`ApproximantFamily`] trait so other families can be checked the same way.

use std::io::Write;

use serde::Serialize;

use crate::numerics::column_stats;
use crate::parallel::{try_map_indexed, Execution};
use crate::paths::{PathProvider, TimeGrid, WienerPath};
use crate::{Error, Result};

/// A realized approximation `B_δ(·, w)` of one Wiener path.
pub trait Approximant: Sync {
    fn source(&self) -> &WienerPath;

    fn knot_step(&self) -> f64;

    fn dims(&self) -> usize {
        self.source().dims()
    }

    fn horizon(&self) -> f64 {
        self.source().grid().horizon()
    }

    /// `B^n_δ(t)`.
    fn value(&self, n: usize, t: f64) -> Result<f64>;

    /// `Ḃ^n_δ(t)`; right-hand derivative at breakpoints, left-hand at the horizon.
    fn derivative(&self, n: usize, t: f64) -> Result<f64>;

    /// `B^n_δ` at node `node` of the source grid.
    fn value_at_node(&self, n: usize, node: usize) -> f64;

    /// `∫_a^b |Ḃ^n_δ(s)| ds`.
    fn abs_derivative_integral(&self, n: usize, a: f64, b: f64) -> Result<f64>;

    /// `∫_0^t Ḃ^j_δ(s) [B^n_δ(t) - B^n_δ(s)] ds`, the pathwise integrand of the
    /// correction coefficient `c_jn(t, δ)`.
    fn correction_integral(&self, j: usize, n: usize, t: f64) -> Result<f64>;
}

/// Constructs approximants from a path and a mesh spacing.
pub trait ApproximantFamily: Sync {
    type Output<'a>: Approximant
    where
        Self: 'a;

    fn name(&self) -> &'static str;

    fn build<'a>(&self, path: &'a WienerPath, delta: f64) -> Result<Self::Output<'a>>;
}

/// The Wong-Zakai polygonal approximation.
#[derive(Debug, Clone, Copy, Default)]
pub struct WongZakai;

impl ApproximantFamily for WongZakai {
    type Output<'a> = PolygonalPath<'a>;

    fn name(&self) -> &'static str {
        "wong-zakai"
    }

    fn build<'a>(&self, path: &'a WienerPath, delta: f64) -> Result<PolygonalPath<'a>> {
        wong_zakai(path, delta)
    }
}

/// Linear interpolant of a Wiener path on the knots `kδ`.
#[derive(Debug, Clone)]
pub struct PolygonalPath<'a> {
    source: &'a WienerPath,
    knot_step: f64,
    stride: usize,
    segments: usize,
    /// `dims × (segments + 1)`
    knots: Vec<f64>,
    /// `dims × segments`, `knots[k+1] - knots[k]`
    increments: Vec<f64>,
}

/// Builds the polygonal approximant; δ must be a grid multiple that divides T.
pub fn wong_zakai(path: &WienerPath, delta: f64) -> Result<PolygonalPath<'_>> {
    let grid = path.grid();
    if delta > grid.horizon() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("knot step {delta} exceeds the horizon {}", grid.horizon())));
    }
    let stride = grid.stride_of("knot step", delta)?;
    if !grid.n_steps().is_multiple_of(stride) {
        return Err(Error::Misaligned { what: "knot step", value: delta, step: grid.horizon() });
    }
    let segments = grid.n_steps() / stride;
    let dims = path.dims();
    let mut knots = Vec::with_capacity(dims * (segments + 1));
    let mut increments = Vec::with_capacity(dims * segments);
    for c in 0..dims {
        let row = path.component(c);
        knots.extend((0..=segments).map(|k| row[k * stride]));
        increments.extend((0..segments).map(|k| row[(k + 1) * stride] - row[k * stride]));
    }
    Ok(PolygonalPath { source: path, knot_step: delta, stride, segments, knots, increments })
}

impl<'a> PolygonalPath<'a> {
    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Fine grid steps per segment.
    pub fn stride(&self) -> usize {
        self.stride
    }

    #[inline]
    pub fn knot(&self, n: usize, k: usize) -> f64 {
        self.knots[n * (self.segments + 1) + k]
    }

    /// Brownian increment over segment `k`.
    #[inline]
    pub fn increment(&self, n: usize, k: usize) -> f64 {
        self.increments[n * self.segments + k]
    }

    /// Constant derivative on the open segment `k`.
    #[inline]
    pub fn slope(&self, n: usize, k: usize) -> f64 {
        self.increment(n, k) / self.knot_step
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let horizon = self.horizon();
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::OutOfRange { t, horizon });
        }
        Ok(())
    }

    fn segment_of(&self, t: f64) -> usize {
        ((t / self.knot_step).floor() as usize).min(self.segments - 1)
    }

    fn check_component(&self, n: usize) -> Result<()> {
        if n >= self.dims() {
            return Err(Error::invalid(format!("component {n} out of range (r = {})", self.dims())));
        }
        Ok(())
    }
}

impl Approximant for PolygonalPath<'_> {
    fn source(&self) -> &WienerPath {
        self.source
    }

    fn knot_step(&self) -> f64 {
        self.knot_step
    }

    fn value(&self, n: usize, t: f64) -> Result<f64> {
        self.check_component(n)?;
        self.check_time(t)?;
        let k = self.segment_of(t);
        let local = t - k as f64 * self.knot_step;
        if local == 0.0 {
            return Ok(self.knot(n, k));
        }
        if local == self.knot_step {
            return Ok(self.knot(n, k + 1));
        }
        Ok(self.knot(n, k) + (local / self.knot_step) * self.increment(n, k))
    }

    fn derivative(&self, n: usize, t: f64) -> Result<f64> {
        self.check_component(n)?;
        self.check_time(t)?;
        Ok(self.slope(n, self.segment_of(t)))
    }

    fn value_at_node(&self, n: usize, node: usize) -> f64 {
        let (k, r) = (node / self.stride, node % self.stride);
        if r == 0 {
            self.knot(n, k)
        } else {
            self.knot(n, k) + (r as f64 / self.stride as f64) * self.increment(n, k)
        }
    }

    fn abs_derivative_integral(&self, n: usize, a: f64, b: f64) -> Result<f64> {
        self.check_component(n)?;
        self.check_time(a)?;
        self.check_time(b)?;
        if b <= a {
            return Ok(0.0);
        }
        let delta = self.knot_step;
        let mut total = 0.0;
        for k in self.segment_of(a)..=self.segment_of(b) {
            let lo = a.max(k as f64 * delta);
            let hi = b.min((k + 1) as f64 * delta);
            if hi <= lo {
                continue;
            }
            let inc = self.increment(n, k).abs();
            // full segments contribute the increment itself, without rescaling
            total += if hi - lo == delta { inc } else { inc * ((hi - lo) / delta) };
        }
        Ok(total)
    }

    fn correction_integral(&self, j: usize, n: usize, t: f64) -> Result<f64> {
        self.check_component(j)?;
        self.check_component(n)?;
        self.check_time(t)?;
        if t == 0.0 {
            return Ok(0.0);
        }
        let delta = self.knot_step;
        let end = self.value(n, t)?;
        let mut total = 0.0;
        // On segment k, s ↦ Ḃ^j (B^n(t) - B^n(s)) is linear, so the integral over
        // [t_k, t_k + L] is a_j L (B^n(t) - B^n(t_k)) - a_j a_n L² / 2.
        for k in 0..self.segments {
            let start = k as f64 * delta;
            if start >= t {
                break;
            }
            let (dj, dn) = (self.increment(j, k), self.increment(n, k));
            let head = end - self.knot(n, k);
            if start + delta <= t {
                total += dj * head - 0.5 * dj * dn;
            } else {
                let frac = (t - start) / delta;
                total += dj * frac * head - 0.5 * dj * dn * frac * frac;
            }
        }
        Ok(total)
    }
}

/// One row of a diagnostic table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub delta: f64,
    pub statistic: String,
    pub estimate: f64,
    pub std_err: f64,
    pub n_paths: usize,
}

/// Per-δ Monte Carlo statistics; serializes to CSV with columns
/// `delta,statistic,estimate,std_err,n_paths`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DiagnosticTable {
    pub rows: Vec<DiagnosticRow>,
}

impl DiagnosticTable {
    pub fn push(&mut self, delta: f64, statistic: impl Into<String>, estimate: f64, std_err: f64, n_paths: usize) {
        self.rows.push(DiagnosticRow { delta, statistic: statistic.into(), estimate, std_err, n_paths });
    }

    pub fn get(&self, delta: f64, statistic: &str) -> Option<&DiagnosticRow> {
        self.rows.iter().find(|r| r.delta == delta && r.statistic == statistic)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// How the Monte Carlo diagnostics draw their paths.
#[derive(Debug, Clone, Copy)]
pub struct Sampling {
    pub grid: TimeGrid,
    pub dims: usize,
    pub paths: usize,
    pub exec: Execution,
}

impl Sampling {
    fn run<F>(&self, provider: &dyn PathProvider, min_paths: usize, f: F) -> Result<Vec<Vec<f64>>>
    where
        F: Fn(&WienerPath) -> Result<Vec<f64>> + Sync + Send,
    {
        if self.paths < min_paths {
            return Err(Error::invalid(format!("need at least {min_paths} paths, got {}", self.paths)));
        }
        try_map_indexed(self.exec, self.paths, |i| {
            let path = provider.path(self.grid, self.dims, i)?;
            f(&path)
        })
    }
}

/// Empirical moment axioms per δ and component: `E[B_δ(0)]`,
/// `E|B_δ(0)|⁶ / δ³` and `E[(∫_0^δ |Ḃ_δ|)⁶] / δ³`.
pub fn check_moment_axioms<F: ApproximantFamily>(
    family: &F,
    sampling: &Sampling,
    provider: &dyn PathProvider,
    deltas: &[f64],
) -> Result<DiagnosticTable> {
    let dims = sampling.dims;
    let rows = sampling.run(provider, 1000, |path| {
        let mut out = Vec::with_capacity(deltas.len() * dims * 3);
        for &delta in deltas {
            let b = family.build(path, delta)?;
            let cube = delta * delta * delta;
            for n in 0..dims {
                let b0 = b.value(n, 0.0)?;
                let var = b.abs_derivative_integral(n, 0.0, delta)?;
                out.push(b0);
                out.push(b0.abs().powi(6) / cube);
                out.push(var.powi(6) / cube);
            }
        }
        Ok(out)
    })?;
    let stats = column_stats(&rows);
    let mut table = DiagnosticTable::default();
    let names = ["mean_b0", "b0_sixth_ratio", "abs_deriv_sixth_ratio"];
    let mut col = 0;
    for &delta in deltas {
        for n in 0..dims {
            for name in names {
                let s = stats[col];
                table.push(delta, format!("{name}_{}", n + 1), s.mean, s.std_err, s.n);
                col += 1;
            }
        }
    }
    Ok(table)
}

/// `E[max over grid nodes |w - B_δ|²]` per δ.
pub fn check_sup_convergence<F: ApproximantFamily>(
    family: &F,
    sampling: &Sampling,
    provider: &dyn PathProvider,
    deltas: &[f64],
) -> Result<DiagnosticTable> {
    let nodes = sampling.grid.n_nodes();
    let rows = sampling.run(provider, 1000, |path| {
        deltas
            .iter()
            .map(|&delta| {
                let b = family.build(path, delta)?;
                let mut worst = 0.0f64;
                for node in 0..nodes {
                    let sq: f64 = (0..path.dims())
                        .map(|n| {
                            let e = path.value(n, node) - b.value_at_node(n, node);
                            e * e
                        })
                        .sum();
                    worst = worst.max(sq);
                }
                Ok(worst)
            })
            .collect()
    })?;
    let mut table = DiagnosticTable::default();
    for (&delta, s) in deltas.iter().zip(column_stats(&rows)) {
        table.push(delta, "sup_sq_error", s.mean, s.std_err, s.n);
    }
    Ok(table)
}

/// Monte Carlo estimate of the correction matrix `c_jn(t, δ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionEstimate {
    /// row-major `r × r`
    pub matrix: Vec<f64>,
    pub std_err: Vec<f64>,
    pub dims: usize,
    pub at_time: f64,
    pub at_delta: f64,
    pub n_paths: usize,
}

impl CorrectionEstimate {
    pub fn entry(&self, j: usize, n: usize) -> f64 {
        self.matrix[j * self.dims + n]
    }

    pub fn entry_std_err(&self, j: usize, n: usize) -> f64 {
        self.std_err[j * self.dims + n]
    }

    pub fn to_table(&self) -> DiagnosticTable {
        let mut table = DiagnosticTable::default();
        for j in 0..self.dims {
            for n in 0..self.dims {
                table.push(
                    self.at_delta,
                    format!("c_{}_{}", j + 1, n + 1),
                    self.entry(j, n),
                    self.entry_std_err(j, n),
                    self.n_paths,
                );
            }
        }
        table
    }
}

/// `k(δ) = ⌈δ^(-exponent)⌉`, the number of knot steps at which `c_jn(kδ, δ)` is
/// evaluated. Exact powers are not rounded up by floating-point noise.
pub fn knots_for_limit(delta: f64, exponent: f64) -> usize {
    let x = delta.powf(-exponent);
    let k = x.round();
    if (x - k).abs() <= 1e-9 * k {
        k as usize
    } else {
        x.ceil() as usize
    }
}

/// Estimates `c_jn(t, δ) = E[∫_0^t Ḃ^j (B^n(t) - B^n(s)) ds] / t` with exact
/// per-segment quadrature of the pathwise integral.
pub fn estimate_cjn<F: ApproximantFamily>(
    family: &F,
    sampling: &Sampling,
    provider: &dyn PathProvider,
    t: f64,
    delta: f64,
) -> Result<CorrectionEstimate> {
    if t < delta {
        return Err(Error::invalid(format!("t = {t} must cover at least one segment of length {delta}")));
    }
    sampling.grid.node_of("t", t)?;
    sampling.grid.stride_of("t", t)?;
    let dims = sampling.dims;
    let rows = sampling.run(provider, 2, |path| {
        let b = family.build(path, delta)?;
        let mut out = Vec::with_capacity(dims * dims);
        for j in 0..dims {
            for n in 0..dims {
                out.push(b.correction_integral(j, n, t)? / t);
            }
        }
        Ok(out)
    })?;
    let stats = column_stats(&rows);
    Ok(CorrectionEstimate {
        matrix: stats.iter().map(|s| s.mean).collect(),
        std_err: stats.iter().map(|s| s.std_err).collect(),
        dims,
        at_time: t,
        at_delta: delta,
        n_paths: sampling.paths,
    })
}
