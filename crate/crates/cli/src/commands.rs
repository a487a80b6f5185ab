use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use wz_core::approximant::{
    check_moment_axioms, check_sup_convergence, estimate_cjn, knots_for_limit, DiagnosticTable, Sampling, WongZakai,
};
use wz_core::harness::{
    run_convergence_with, run_decomposition, run_increment_lemmas, write_decomposition_csv, ExperimentConfig, Mode,
};
use wz_core::parallel::Execution;
use wz_core::paths::{CachedPaths, PathProvider, SeededPaths, TimeGrid};

use crate::config::{load_table, parse, take, ApproxConfig};
use crate::manifest::RunManifest;
use crate::Command;

pub fn run(
    cmd: Command,
    config: &Option<PathBuf>,
    seed: u64,
    threads: Option<usize>,
    cache: Option<&Path>,
    manifest: &mut RunManifest,
) -> Result<()> {
    let table = load_table(config.as_deref(), cmd)?;
    let provider: Box<dyn PathProvider> = match cache {
        Some(dir) => Box::new(CachedPaths::new(seed, dir).context("cannot use the path cache")?),
        None => Box::new(SeededPaths { master_seed: seed }),
    };
    with_threads(threads, || dispatch(cmd, table, seed, provider.as_ref(), manifest))
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(0) => bail!("--threads must be at least 1"),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == Some(0) {
        bail!("--threads must be at least 1");
    }
    f()
}

fn dispatch(
    cmd: Command,
    mut table: toml::Table,
    seed: u64,
    provider: &dyn PathProvider,
    manifest: &mut RunManifest,
) -> Result<()> {
    let exec = Execution::default();
    match cmd {
        Command::Moments | Command::Cjn | Command::Sup => {
            let cfg: ApproxConfig = parse(table)?;
            let out = approximant_table(cmd, &cfg, exec, provider)?;
            manifest.output(&format!("{}.csv", cmd.name()), |w| Ok(out.write_csv(w)?))
        }
        Command::ConvergeSde | Command::ConvergeSpde => {
            let mode = if cmd == Command::ConvergeSde { Mode::Finite } else { Mode::Weak };
            let name = if mode == Mode::Finite { "finite" } else { "weak" };
            table.entry("mode").or_insert_with(|| name.into());
            let mut cfg: ExperimentConfig = parse(table)?;
            cfg.seed = seed;
            if cfg.mode != mode {
                bail!("{} runs in {name} mode; drop `mode` from the config", cmd.name());
            }
            let report = run_convergence_with(&cfg, exec, provider)?;
            manifest.output("convergence.csv", |w| Ok(report.write_csv(w)?))?;
            manifest.output("summary.json", |w| Ok(serde_json::to_writer_pretty(w, &report)?))
        }
        Command::Decompose => {
            let times: usize = take(&mut table, "times_per_replica")?.unwrap_or(10);
            let mut cfg: ExperimentConfig = parse(with_weak_mode(table))?;
            cfg.seed = seed;
            let rows = run_decomposition(&cfg, exec, provider, times)?;
            manifest.output("decomposition.csv", |w| Ok(write_decomposition_csv(&rows, w)?))
        }
        Command::Lemmas => {
            let mut cfg: ExperimentConfig = parse(with_weak_mode(table))?;
            cfg.seed = seed;
            let out = run_increment_lemmas(&cfg, exec, provider)?;
            manifest.output("lemmas.csv", |w| Ok(out.write_csv(w)?))
        }
    }
}

fn with_weak_mode(mut table: toml::Table) -> toml::Table {
    table.entry("mode").or_insert_with(|| "weak".into());
    table
}

fn approximant_table(
    cmd: Command,
    cfg: &ApproxConfig,
    exec: Execution,
    provider: &dyn PathProvider,
) -> Result<DiagnosticTable> {
    if cfg.deltas.is_empty() {
        bail!("empty δ grid");
    }
    let sampling = |grid: TimeGrid| Sampling { grid, dims: cfg.dims, paths: cfg.paths, exec };
    Ok(match cmd {
        Command::Moments => {
            // only [0, δ] is used, so the grid stops at the largest δ
            let top = cfg.deltas.iter().copied().fold(0.0, f64::max);
            check_moment_axioms(&WongZakai, &sampling(TimeGrid::with_step(top, cfg.step)?), provider, &cfg.deltas)?
        }
        Command::Sup => {
            let grid = TimeGrid::with_step(cfg.horizon, cfg.step)?;
            check_sup_convergence(&WongZakai, &sampling(grid), provider, &cfg.deltas)?
        }
        Command::Cjn => {
            let mut table = DiagnosticTable::default();
            for &delta in &cfg.deltas {
                let k = knots_for_limit(delta, cfg.k_exponent);
                let t = k as f64 * delta;
                let grid = TimeGrid::with_step(t, cfg.step)?;
                grid.stride_of("δ", delta)?;
                let est = estimate_cjn(&WongZakai, &sampling(grid), provider, t, delta)?;
                table.push(delta, "k", k as f64, 0.0, cfg.paths);
                table.rows.extend(est.to_table().rows);
            }
            table
        }
        _ => unreachable!("not an approximant diagnostic"),
    })
}
