//! Wiener sample paths on a uniform grid.
//!
//! Paths store node values, not increments. Every increment is rounded to a
//! dyadic lattice of spacing [`PATH_QUANTUM`] before it is accumulated, so node
//! values are exact multiples of the quantum. As long as path values stay below
//! 2^21 in magnitude, sums and differences of node values are computed without
//! rounding: the shift operator, knot interpolation and telescoping sums of
//! increments are all bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Spacing of the lattice onto which Brownian increments are rounded (2^-32).
pub const PATH_QUANTUM: f64 = 1.0 / 4_294_967_296.0;

/// Relative tolerance used when checking that a time lies on the grid.
const ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    step: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Grid with `n_steps` equal steps over `[0, horizon]`.
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || n_steps == 0 {
            return Err(Error::invalid(format!(
                "grid needs a positive horizon and at least one step (got T={horizon}, n={n_steps})"
            )));
        }
        Ok(Self { horizon, step: horizon / n_steps as f64, n_steps })
    }

    /// Grid with the given step; the step must divide the horizon.
    pub fn with_step(horizon: f64, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) || !(horizon.is_finite() && horizon >= 0.0) {
            return Err(Error::invalid(format!("bad grid: T={horizon}, h={step}")));
        }
        let n = (horizon / step).round();
        if (n * step - horizon).abs() > 2.0 * f64::EPSILON * horizon.max(step) {
            return Err(Error::Misaligned { what: "horizon", value: horizon, step });
        }
        Ok(Self { horizon, step, n_steps: n as usize })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn time(&self, node: usize) -> f64 {
        node as f64 * self.step
    }

    /// Number of grid steps in `dt`; errors unless `dt` is a positive multiple of the step.
    pub fn stride_of(&self, what: &'static str, dt: f64) -> Result<usize> {
        let k = (dt / self.step).round();
        if !(k >= 1.0) || (k * self.step - dt).abs() > ALIGN_TOL * self.step {
            return Err(Error::Misaligned { what, value: dt, step: self.step });
        }
        Ok(k as usize)
    }

    /// Node index of a grid-aligned time in `[0, T]`.
    pub fn node_of(&self, what: &'static str, t: f64) -> Result<usize> {
        if !(t >= 0.0) || t > self.horizon * (1.0 + ALIGN_TOL) {
            return Err(Error::OutOfRange { t, horizon: self.horizon });
        }
        if t == 0.0 {
            return Ok(0);
        }
        let k = self.stride_of(what, t)?;
        if k > self.n_steps {
            return Err(Error::OutOfRange { t, horizon: self.horizon });
        }
        Ok(k)
    }

    /// Coarser grid with `stride` fine steps per coarse step.
    pub fn coarsen(&self, stride: usize) -> Result<Self> {
        if stride == 0 || !self.n_steps.is_multiple_of(stride) {
            return Err(Error::Misaligned {
                what: "coarse step",
                value: stride as f64 * self.step,
                step: self.horizon,
            });
        }
        Ok(Self { horizon: self.horizon, step: self.step * stride as f64, n_steps: self.n_steps / stride })
    }
}

/// Derives the seed of replica `index` from a master seed (SplitMix64 finalizer).
pub fn replica_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn quantize(x: f64) -> f64 {
    (x / PATH_QUANTUM).round() * PATH_QUANTUM
}

/// An `r`-dimensional Brownian sample with `w(0) = 0`, stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    grid: TimeGrid,
    dims: usize,
    values: Vec<f64>,
    seed: u64,
}

/// Samples a Wiener path. Increments are standard normals (ChaCha8 stream seeded
/// by `seed`, Ziggurat sampling) scaled by `sqrt(h)`, drawn time-major.
pub fn sample_wiener(grid: TimeGrid, dims: usize, seed: u64) -> Result<WienerPath> {
    if dims == 0 {
        return Err(Error::invalid("Wiener path needs at least one component"));
    }
    if grid.n_steps == 0 {
        return Err(Error::invalid("cannot sample on a degenerate grid"));
    }
    let n = grid.n_steps;
    let scale = grid.step.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; dims * (n + 1)];
    for k in 0..n {
        for c in 0..dims {
            let z: f64 = StandardNormal.sample(&mut rng);
            let row = c * (n + 1);
            values[row + k + 1] = values[row + k] + quantize(z * scale);
        }
    }
    Ok(WienerPath { grid, dims, values, seed })
}

impl WienerPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Node values of component `c`.
    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.values[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn value(&self, c: usize, node: usize) -> f64 {
        self.values[c * self.grid.n_nodes() + node]
    }

    /// `w(b) - w(a)` for component `c`, nodes `a <= b`.
    #[inline]
    pub fn increment(&self, c: usize, a: usize, b: usize) -> f64 {
        self.value(c, b) - self.value(c, a)
    }

    /// The shift operator: node `s` of the result holds `w(t + s) - w(t)`.
    pub fn shift(&self, t: f64) -> Result<WienerPath> {
        let j = self.grid.node_of("shift time", t)?;
        let n = self.grid.n_nodes();
        let len = n - j;
        let mut values = Vec::with_capacity(self.dims * len);
        for c in 0..self.dims {
            let row = &self.values[c * n..(c + 1) * n];
            let base = row[j];
            values.extend(row[j..].iter().map(|v| v - base));
        }
        let steps = self.grid.n_steps - j;
        let grid = TimeGrid { horizon: steps as f64 * self.grid.step, step: self.grid.step, n_steps: steps };
        Ok(WienerPath { grid, dims: self.dims, values, seed: self.seed })
    }

    /// The same path observed on every `stride`-th node.
    pub fn coarsen(&self, stride: usize) -> Result<WienerPath> {
        let grid = self.grid.coarsen(stride)?;
        let values = (0..self.dims).flat_map(|c| self.component(c).iter().step_by(stride).copied()).collect();
        Ok(WienerPath { grid, dims: self.dims, values, seed: self.seed })
    }

    /// Little-endian dump: header `{r: u64, n_steps: u64, h: f64, seed: u64}`
    /// followed by the node values, component-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.dims as u64).to_le_bytes())?;
        w.write_all(&(self.grid.n_steps as u64).to_le_bytes())?;
        w.write_all(&self.grid.step.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<WienerPath> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let dims = u64::from_le_bytes(next(&mut r)?) as usize;
        let n_steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let step = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        if dims == 0 || n_steps == 0 || !(step > 0.0) {
            return Err(Error::invalid("corrupt path dump header"));
        }
        let count = dims.checked_mul(n_steps + 1).ok_or_else(|| Error::invalid("corrupt path dump header"))?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_le_bytes(next(&mut r)?));
        }
        let grid = TimeGrid { horizon: n_steps as f64 * step, step, n_steps };
        Ok(WienerPath { grid, dims, values, seed })
    }
}

/// Supplies the Wiener path of each Monte Carlo replica.
pub trait PathProvider: Sync {
    fn path(&self, grid: TimeGrid, dims: usize, replica: usize) -> Result<WienerPath>;
}

/// Samples replica paths from seeds derived from one master seed.
#[derive(Debug, Clone, Copy)]
pub struct SeededPaths {
    pub master_seed: u64,
}

impl PathProvider for SeededPaths {
    fn path(&self, grid: TimeGrid, dims: usize, replica: usize) -> Result<WienerPath> {
        sample_wiener(grid, dims, replica_seed(self.master_seed, replica as u64))
    }
}

/// Seeded paths backed by a directory of binary dumps. A dump is reused only if
/// its header matches the requested grid, dimension and seed; otherwise the
/// path is sampled and the dump rewritten.
#[derive(Debug, Clone)]
pub struct CachedPaths {
    pub master_seed: u64,
    pub dir: PathBuf,
}

impl CachedPaths {
    pub fn new(master_seed: u64, dir: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self { master_seed, dir: dir.as_ref().to_path_buf() })
    }

    fn file_for(&self, seed: u64) -> PathBuf {
        self.dir.join(format!("path_{seed:016x}.bin"))
    }
}

impl PathProvider for CachedPaths {
    fn path(&self, grid: TimeGrid, dims: usize, replica: usize) -> Result<WienerPath> {
        let seed = replica_seed(self.master_seed, replica as u64);
        let file = self.file_for(seed);
        if let Ok(f) = File::open(&file) {
            if let Ok(p) = WienerPath::read_binary(BufReader::new(f)) {
                if p.dims == dims && p.grid.n_steps == grid.n_steps && p.grid.step == grid.step && p.seed == seed {
                    return Ok(WienerPath { grid, ..p });
                }
            }
        }
        let p = sample_wiener(grid, dims, seed)?;
        p.write_binary(BufWriter::new(File::create(&file)?))?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t: f64, h: f64) -> TimeGrid {
        TimeGrid::with_step(t, h).unwrap()
    }

    #[test]
    fn starts_at_zero() {
        for seed in [0, 1, 42, u64::MAX] {
            let p = sample_wiener(grid(1.0, 1.0 / 64.0), 3, seed).unwrap();
            for c in 0..3 {
                assert_eq!(p.value(c, 0), 0.0);
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let g = grid(1.0, 1.0 / 16.0);
        let a = sample_wiener(g, 2, 42).unwrap();
        let b = sample_wiener(g, 2, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_wiener(g, 2, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(sample_wiener(grid(1.0, 0.5), 0, 1).is_err());
        let empty = TimeGrid::with_step(0.0, 0.5).unwrap();
        assert!(sample_wiener(empty, 1, 1).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
        assert!(TimeGrid::with_step(1.0, 0.3).is_err());
    }

    #[test]
    fn grid_alignment() {
        let g = grid(1.0, 1.0 / 1024.0);
        assert_eq!(g.n_steps(), 1024);
        assert_eq!(g.stride_of("d", 1.0 / 16.0).unwrap(), 64);
        assert!(g.stride_of("d", 1.5 / 1024.0).is_err());
        assert_eq!(g.node_of("t", 1.0).unwrap(), 1024);
        assert!(g.node_of("t", 1.5).is_err());
        assert_eq!(g.coarsen(64).unwrap().n_steps(), 16);
        assert!(g.coarsen(3).is_err());
    }

    #[test]
    fn shift_by_zero_is_identity() {
        let p = sample_wiener(grid(1.0, 1.0 / 64.0), 2, 5).unwrap();
        assert_eq!(p.shift(0.0).unwrap(), p);
    }

    #[test]
    fn shift_to_horizon_is_single_zero_node() {
        let p = sample_wiener(grid(1.0, 1.0 / 64.0), 2, 5).unwrap();
        let s = p.shift(1.0).unwrap();
        assert_eq!(s.grid().n_nodes(), 1);
        assert_eq!(s.grid().horizon(), 0.0);
        assert_eq!((s.value(0, 0), s.value(1, 0)), (0.0, 0.0));
    }

    #[test]
    fn shift_restores_original_exactly() {
        let h = 1.0 / 256.0;
        let p = sample_wiener(grid(1.0, h), 2, 9).unwrap();
        for k in [1usize, 17, 100, 255] {
            let t = k as f64 * h;
            let s = p.shift(t).unwrap();
            assert_eq!(s.grid().n_steps(), 256 - k);
            for c in 0..2 {
                for node in 0..s.grid().n_nodes() {
                    assert_eq!(s.value(c, node) + p.value(c, k), p.value(c, k + node));
                }
            }
        }
    }

    #[test]
    fn shift_rejects_off_grid_times() {
        let p = sample_wiener(grid(1.0, 1.0 / 64.0), 1, 5).unwrap();
        assert!(matches!(p.shift(0.5 / 64.0), Err(Error::Misaligned { .. })));
        assert!(p.shift(1.5).is_err());
    }

    #[test]
    fn values_lie_on_the_quantum_lattice() {
        let p = sample_wiener(grid(1.0, 1.0 / 128.0), 1, 3).unwrap();
        for v in p.component(0) {
            assert_eq!((v / PATH_QUANTUM).fract(), 0.0);
        }
    }

    #[test]
    fn binary_dump_round_trips() {
        let p = sample_wiener(grid(0.5, 1.0 / 64.0), 3, 77).unwrap();
        let mut buf = Vec::new();
        p.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 8 * 3 * 33);
        assert_eq!(&buf[0..8], &3u64.to_le_bytes());
        assert_eq!(&buf[8..16], &32u64.to_le_bytes());
        let q = WienerPath::read_binary(&buf[..]).unwrap();
        assert_eq!(p, q);
        assert!(WienerPath::read_binary(&buf[..40]).is_err());
    }

    #[test]
    fn replica_seeds_are_distinct() {
        let mut seeds: Vec<u64> = (0..10_000).map(|i| replica_seed(7, i)).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 10_000);
    }
}
