//! Monte Carlo convergence experiments over a grid of knot spacings δ.
//!
//! Every replica samples one Wiener path on the fine grid; the approximate
//! solution at every δ and the corrected Itô reference (step `δ_ref`) are all
//! driven by that path. Per-replica results are collected in replica order
//! and reduced sequentially, so reports do not depend on the thread count.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::approximant::{wong_zakai, DiagnosticTable};
use crate::finite_solver::{solve_approx_ode, solve_ito_corrected, sup_error};
use crate::numerics::{column_stats, SampleStats};
use crate::parallel::{try_map_indexed, Execution};
use crate::paths::{PathProvider, SeededPaths, TimeGrid};
use crate::systems::{make_named_system, NamedSystem};
use crate::weak_spde::{
    build_test_function, decomposition_residuals, field_sup_error, increment_samples, solve_weak_approx,
    solve_weak_ito, DecompositionTerms, GalerkinSpace, IncrementLayout, Schedule, WeakModel,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Finite,
    Weak,
}

/// Free parameters of a convergence experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub system: String,
    pub params: BTreeMap<String, f64>,
    /// Horizon `T`.
    pub horizon: f64,
    /// Fine grid step `h` of the sampled paths.
    pub step: f64,
    /// Knot spacings, descending by halving.
    pub deltas: Vec<f64>,
    /// Exponent `α` of `n(δ) = ⌈δ^(-α)⌉`.
    pub n_exponent: f64,
    /// Fixed `n(δ)` instead of the power law.
    pub n_fixed: Option<usize>,
    pub replicas: usize,
    pub seed: u64,
    /// Galerkin basis size `m`.
    pub basis_size: usize,
    /// Gauss nodes per panel.
    pub nodes_per_panel: usize,
    /// Error exponent `p`.
    pub p: u32,
    /// `δ_ref = min δ / ref_divisor`.
    pub ref_divisor: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Finite,
            system: "gbm".into(),
            params: BTreeMap::new(),
            horizon: 1.0,
            step: 2f64.powi(-13),
            deltas: (4..=9).map(|e| 2f64.powi(-e)).collect(),
            n_exponent: 0.2,
            n_fixed: None,
            replicas: 1000,
            seed: 0,
            basis_size: 8,
            nodes_per_panel: 10,
            p: 2,
            ref_divisor: 16,
        }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::with_step(self.horizon, self.step)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        match self.n_fixed {
            Some(n) => Schedule::fixed(n),
            None => Schedule::new(self.n_exponent),
        }
    }

    pub fn delta_ref(&self) -> f64 {
        self.deltas.iter().copied().fold(f64::INFINITY, f64::min) / self.ref_divisor as f64
    }

    pub fn named_system(&self) -> Result<NamedSystem> {
        make_named_system(&self.system, &self.params)
    }

    pub fn space(&self) -> Result<Arc<GalerkinSpace>> {
        Ok(Arc::new(GalerkinSpace::cosine(1.0, self.basis_size, self.nodes_per_panel)?))
    }

    /// Checks the invariants and returns `n(δ)⁴δ` per δ.
    pub fn validate(&self) -> Result<Vec<f64>> {
        if !(self.horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        let grid = self.grid()?;
        if self.replicas < 2 {
            return Err(Error::invalid(format!("need at least 2 replicas, got {}", self.replicas)));
        }
        if self.p != 2 && self.p != 4 {
            return Err(Error::invalid(format!("error exponent p must be 2 or 4, got {}", self.p)));
        }
        if self.ref_divisor == 0 {
            return Err(Error::invalid("ref_divisor must be at least 1"));
        }
        if self.deltas.is_empty() {
            return Err(Error::invalid("empty δ grid"));
        }
        for w in self.deltas.windows(2) {
            if ((w[0] / w[1]) - 2.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("δ grid must descend by halving ({} then {})", w[0], w[1])));
            }
        }
        for &d in &self.deltas {
            if d > self.horizon {
                return Err(Error::invalid(format!("δ = {d} exceeds the horizon")));
            }
            grid.stride_of("δ", d)?;
            TimeGrid::with_step(self.horizon, d)?;
        }
        grid.stride_of("δ_ref", self.delta_ref())?;
        TimeGrid::with_step(self.horizon, self.delta_ref())?;
        self.schedule()?.validate(&self.deltas)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub n_delta: usize,
    pub error_mean: f64,
    pub error_stderr: f64,
    #[serde(rename = "M")]
    pub replicas: usize,
}

/// Least-squares slope of `ln error` against `ln δ`, with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub mode: Mode,
    pub system: String,
    pub p: u32,
    pub rows: Vec<ConvergenceRow>,
    /// `None` when fewer than three rows have a positive error.
    pub slope: Option<SlopeFit>,
    pub delta_ref: f64,
    /// `n(δ)⁴δ` per row.
    pub n4_delta: Vec<f64>,
    pub master_seed: u64,
    pub runtime_secs: f64,
}

impl ConvergenceReport {
    /// CSV with columns `delta,n_delta,error_mean,error_stderr,M`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn row(&self, delta: f64) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.delta == delta)
    }
}

pub fn fit_slope(rows: &[ConvergenceRow]) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter(|r| r.error_mean > 0.0).map(|r| (r.delta.ln(), r.error_mean.ln())).collect();
    let n = pts.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("slope needs 3 rows with positive error, have {n}")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("slope needs at least two distinct δ".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let std_err = (ssr / (nf - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("positive degrees of freedom").inverse_cdf(0.975);
    Ok(SlopeFit { slope, std_err, ci_low: slope - t * std_err, ci_high: slope + t * std_err, n_rows: n })
}

/// [`run_convergence_with`] on the default execution mode and seeded paths.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    run_convergence_with(cfg, Execution::default(), &SeededPaths { master_seed: cfg.seed })
}

pub fn run_convergence_with(
    cfg: &ExperimentConfig,
    exec: Execution,
    provider: &dyn PathProvider,
) -> Result<ConvergenceReport> {
    let started = Instant::now();
    let n4_delta = cfg.validate()?;
    let schedule = cfg.schedule()?;
    let named = cfg.named_system()?;
    let grid = cfg.grid()?;
    let r = named.system().noise_dims();
    let delta_ref = cfg.delta_ref();
    let ref_stride = grid.stride_of("δ_ref", delta_ref)?;
    let p = cfg.p as f64;

    let per_replica: Vec<Vec<f64>> = match cfg.mode {
        Mode::Finite => {
            let sys = named.system();
            let x0 = named.initial_state();
            try_map_indexed(exec, cfg.replicas, |i| {
                let path = provider.path(grid, r, i)?;
                let reference =
                    solve_ito_corrected(sys, &path, x0, delta_ref).map_err(|e| e.in_replica(i, delta_ref))?;
                cfg.deltas
                    .iter()
                    .map(|&delta| {
                        {
                            let drive = wong_zakai(&path, delta)?;
                            let approx = solve_approx_ode(sys, &drive, x0)?.subsample(ref_stride)?;
                            sup_error(&approx, &reference, p)
                        }
                        .map_err(|e: Error| e.in_replica(i, delta))
                    })
                    .collect()
            })?
        }
        Mode::Weak => {
            let space = cfg.space()?;
            let model = named.weak_model(space.clone())?;
            let x0 = named.initial_field(&space);
            try_map_indexed(exec, cfg.replicas, |i| {
                let path = provider.path(grid, r, i)?;
                let reference =
                    solve_weak_ito(&model, &path, &x0, delta_ref).map_err(|e| e.in_replica(i, delta_ref))?;
                cfg.deltas
                    .iter()
                    .map(|&delta| {
                        {
                            let drive = wong_zakai(&path, delta)?;
                            let approx = solve_weak_approx(&model, &drive, &x0)?.subsample(ref_stride)?;
                            field_sup_error(&approx, &reference, p)
                        }
                        .map_err(|e: Error| e.in_replica(i, delta))
                    })
                    .collect()
            })?
        }
    };

    let rows: Vec<ConvergenceRow> = column_stats(&per_replica)
        .into_iter()
        .zip(&cfg.deltas)
        .map(|(s, &delta)| ConvergenceRow {
            delta,
            n_delta: schedule.n(delta),
            error_mean: s.mean,
            error_stderr: s.std_err,
            replicas: s.n,
        })
        .collect();
    let slope = fit_slope(&rows).ok();
    Ok(ConvergenceReport {
        mode: cfg.mode,
        system: cfg.system.clone(),
        p: cfg.p,
        rows,
        slope,
        delta_ref,
        n4_delta,
        master_seed: cfg.seed,
        runtime_secs: started.elapsed().as_secs_f64(),
    })
}

/// One decomposition evaluation of one replica.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub replica: usize,
    pub seed: u64,
    pub delta: f64,
    pub n_delta: usize,
    #[serde(flatten)]
    pub terms: DecompositionTerms,
}

/// `count` grid-aligned times spread over `(0, T]`.
pub fn spread_times(grid: &TimeGrid, count: usize) -> Vec<f64> {
    let n = grid.n_steps();
    (1..=count).map(|j| grid.time(((j * n) as f64 / count as f64).round() as usize)).collect()
}

/// Decomposition identity for the first δ of the configuration at
/// `times_per_replica` times in each replica. The Itô solution uses the fine
/// step, so both solutions share every increment.
pub fn run_decomposition(
    cfg: &ExperimentConfig,
    exec: Execution,
    provider: &dyn PathProvider,
    times_per_replica: usize,
) -> Result<Vec<DecompositionRow>> {
    if cfg.mode != Mode::Weak {
        return Err(Error::invalid("the decomposition diagnostic runs in weak mode"));
    }
    cfg.validate()?;
    let delta = cfg.deltas[0];
    let n = cfg.schedule()?.n(delta);
    let named = cfg.named_system()?;
    let space = cfg.space()?;
    let model = named.weak_model(space.clone())?;
    let x0 = named.initial_field(&space);
    let grid = cfg.grid()?;
    let r = named.system().noise_dims();
    let window = n as f64 * delta;
    if window > cfg.horizon {
        return Err(Error::invalid(format!("window n(δ)δ = {window} exceeds the horizon")));
    }
    let times = spread_times(&grid, times_per_replica);
    let per_replica = try_map_indexed(exec, cfg.replicas, |i| {
        let run = || -> Result<Vec<DecompositionRow>> {
            let path = provider.path(grid, r, i)?;
            let drive = wong_zakai(&path, delta)?;
            let approx = solve_weak_approx(&model, &drive, &x0)?;
            let ito = solve_weak_ito(&model, &path, &x0, grid.step())?;
            let phi = build_test_function(&approx, &ito, window)?;
            let terms = decomposition_residuals(&model, &approx, &ito, &phi, &drive, &path, &times)?;
            Ok(terms
                .into_iter()
                .map(|terms| DecompositionRow { replica: i, seed: path.seed(), delta, n_delta: n, terms })
                .collect())
        };
        run().map_err(|e| e.in_replica(i, delta))
    })?;
    Ok(per_replica.into_iter().flatten().collect())
}

pub fn write_decomposition_csv<W: Write>(rows: &[DecompositionRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["replica", "seed", "delta", "n_delta", "t", "lhs", "h1", "h2", "h3", "h4", "residual"])?;
    for r in rows {
        let t = &r.terms;
        out.write_record([
            r.replica.to_string(),
            r.seed.to_string(),
            r.delta.to_string(),
            r.n_delta.to_string(),
            t.t.to_string(),
            t.lhs.to_string(),
            t.h1.to_string(),
            t.h2.to_string(),
            t.h3.to_string(),
            t.h4.to_string(),
            t.residual.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Statistic names of [`run_increment_lemmas`].
pub const PATHWISE_RATIO: &str = "pathwise_max_ratio";
pub const ITO_INCREMENT_RATIO: &str = "ito_increment_max_ratio";
pub const WITHIN_WINDOW_RATIO: &str = "within_window_max_ratio";

fn max_ratio(stats: &[SampleStats], scale: impl Fn(usize) -> f64) -> (f64, f64) {
    stats.iter().enumerate().map(|(k, s)| (s.mean / scale(k), s.std_err / scale(k))).fold((0.0, 0.0), |best, cur| {
        if cur.0 > best.0 {
            cur
        } else {
            best
        }
    })
}

/// Increment-bound ratios per δ:
///
/// * `pathwise_max_ratio`: max over replicas and pairs of
///   `‖X_δ(t) − X_δ(s)‖ / (Σ_n ∫_s^t |Ḃ^n_δ| + (t − s))`;
/// * `ito_increment_max_ratio`: max over window-start pairs of
///   `E‖X(t) − X(s)‖² / ((t − s)(t − s + 1))`;
/// * `within_window_max_ratio`: max over within-window knot pairs of
///   `E‖X_δ(t) − X_δ(s)‖² / (n(δ)² δ)`.
pub fn run_increment_lemmas(
    cfg: &ExperimentConfig,
    exec: Execution,
    provider: &dyn PathProvider,
) -> Result<DiagnosticTable> {
    if cfg.mode != Mode::Weak {
        return Err(Error::invalid("the increment lemmas run in weak mode"));
    }
    if cfg.replicas < 100 {
        return Err(Error::invalid(format!("increment lemmas need at least 100 replicas, got {}", cfg.replicas)));
    }
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let named = cfg.named_system()?;
    let space = cfg.space()?;
    let model: WeakModel = named.weak_model(space.clone())?;
    let x0 = named.initial_field(&space);
    let grid = cfg.grid()?;
    let r = named.system().noise_dims();
    let delta_ref = cfg.delta_ref();
    let layouts =
        cfg.deltas.iter().map(|&d| IncrementLayout::new(cfg.horizon, d, schedule.n(d))).collect::<Result<Vec<_>>>()?;

    let per_replica = try_map_indexed(exec, cfg.replicas, |i| {
        let path = provider.path(grid, r, i)?;
        let ito = solve_weak_ito(&model, &path, &x0, delta_ref).map_err(|e| e.in_replica(i, delta_ref))?;
        layouts
            .iter()
            .map(|layout| {
                let run = || {
                    let drive = wong_zakai(&path, layout.delta())?;
                    let approx = solve_weak_approx(&model, &drive, &x0)?;
                    increment_samples(&approx, &ito, &drive, layout)
                };
                run().map_err(|e| e.in_replica(i, layout.delta()))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut table = DiagnosticTable::default();
    for (k, layout) in layouts.iter().enumerate() {
        let m = cfg.replicas;
        let pathwise = per_replica.iter().map(|rep| rep[k].max_pathwise_ratio).fold(0.0, f64::max);
        table.push(layout.delta(), PATHWISE_RATIO, pathwise, 0.0, m);

        let across: Vec<Vec<f64>> = per_replica.iter().map(|rep| rep[k].across_sq.clone()).collect();
        let (est, se) = max_ratio(&column_stats(&across), |j| {
            let (s, t) = layout.across()[j];
            (t - s) * (t - s + 1.0)
        });
        table.push(layout.delta(), ITO_INCREMENT_RATIO, est, se, m);

        let within: Vec<Vec<f64>> = per_replica.iter().map(|rep| rep[k].within_sq.clone()).collect();
        let scale = (layout.n() * layout.n()) as f64 * layout.delta();
        let (est, se) = max_ratio(&column_stats(&within), |_| scale);
        table.push(layout.delta(), WITHIN_WINDOW_RATIO, est, se, m);
    }
    Ok(table)
}
