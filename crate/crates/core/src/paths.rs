//! Time grids, Brownian path sampling and Cameron-Martin arithmetic.
//!
//! Paths are stored as increments; the prefix of a path at step `i` is
//! `increments[0..i]`. Cumulative values are derived. All time integrals
//! use the left-endpoint (Ito) convention.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

/// Uniform grid on [0,1] with `n` steps of width `dt = 1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    n: usize,
    dt: f64,
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("grid step count must be positive"));
        }
        let dt = 1.0 / n as f64;
        let times = (0..=n).map(|i| i as f64 * dt).collect();
        Ok(Self { n, dt, times })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Grid index of time `t`, if `t` lies on the grid (within 1e-9 absolute).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = (t * self.n as f64).round() as i64;
        if i < 0 || i > self.n as i64 {
            return None;
        }
        let i = i as usize;
        if (self.times[i] - t).abs() <= 1e-9 {
            Some(i)
        } else {
            None
        }
    }
}

/// Deterministic RNG source identified by a master seed and a stream index.
///
/// Identical `(seed, stream)` pairs yield identical increment sequences
/// regardless of execution order or thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomSource {
    pub seed: u64,
    pub stream: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    /// Derive a child source for a sub-computation, keyed by `label`.
    pub fn derive(&self, label: u64) -> Self {
        // splitmix-style mix so that child streams never collide with
        // plain consecutive stream indices
        let mut z = self
            .stream
            .wrapping_add(label.wrapping_mul(0x9E3779B97F4A7C15))
            .wrapping_add(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
        Self {
            seed: self.seed,
            stream: z,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Discretized Brownian path: i.i.d. Normal(0, dt) increments and their
/// cumulative sums.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    grid: TimeGrid,
    increments: Vec<f64>,
    values: Vec<f64>,
}

impl WienerPath {
    pub fn from_increments(grid: TimeGrid, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.n() {
            return Err(invalid(format!(
                "expected {} increments, got {}",
                grid.n(),
                increments.len()
            )));
        }
        let mut values = Vec::with_capacity(grid.n() + 1);
        values.push(0.0);
        let mut acc = 0.0;
        for &dw in &increments {
            acc += dw;
            values.push(acc);
        }
        Ok(Self {
            grid,
            increments,
            values,
        })
    }

    /// Sample a Brownian path from `source`.
    pub fn sample(grid: &TimeGrid, source: RandomSource) -> Self {
        let mut rng = source.rng();
        let sd = grid.dt().sqrt();
        let increments = (0..grid.n())
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * sd
            })
            .collect();
        Self::from_increments(grid.clone(), increments).expect("length matches grid")
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Path values W(t_i), i = 0..=n.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Terminal value W(1).
    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Coarsen to a grid with `m` steps (a divisor of `n`) by summing
    /// increments blockwise.
    pub fn coarsen(&self, m: usize) -> Result<Self> {
        let n = self.grid.n();
        if m == 0 || n % m != 0 {
            return Err(invalid(format!("{m} does not divide the fine step count {n}")));
        }
        let block = n / m;
        let coarse = TimeGrid::new(m)?;
        let increments = (0..m)
            .map(|k| self.increments[k * block..(k + 1) * block].iter().sum())
            .collect();
        Self::from_increments(coarse, increments)
    }
}

/// Cameron-Martin vector stored by its Lebesgue density, constant on each
/// grid cell [t_i, t_{i+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct CameronMartinVector {
    grid: TimeGrid,
    density: Vec<f64>,
}

impl CameronMartinVector {
    pub fn new(grid: TimeGrid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.n() {
            return Err(invalid(format!(
                "expected {} density values, got {}",
                grid.n(),
                density.len()
            )));
        }
        Ok(Self { grid, density })
    }

    pub fn zero(grid: TimeGrid) -> Self {
        let n = grid.n();
        Self {
            grid,
            density: vec![0.0; n],
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// |h|_H^2 = sum of density^2 * dt.
    pub fn h_norm_sq(&self) -> f64 {
        let dt = self.grid.dt();
        self.density.iter().map(|d| d * d * dt).sum()
    }

    /// Left-endpoint cumulative integral: h(t_i) = sum_{j<i} density[j]*dt.
    pub fn cumulative_integral(&self) -> Vec<f64> {
        let dt = self.grid.dt();
        let mut out = Vec::with_capacity(self.grid.n() + 1);
        out.push(0.0);
        let mut acc = 0.0;
        for &d in &self.density {
            acc += d * dt;
            out.push(acc);
        }
        out
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            density: self.density.iter().map(|d| c * d).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            density: self
                .density
                .iter()
                .zip(&other.density)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// |h - k|_H.
    pub fn h_distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.h_norm_sq().sqrt())
    }
}

pub fn check_same_grid(a: &TimeGrid, b: &TimeGrid) -> Result<()> {
    if a.n() != b.n() {
        return Err(crate::error::LabError::GridMismatch {
            left: a.n(),
            right: b.n(),
        });
    }
    Ok(())
}
