//! Test signals: the classical 1D benchmark functions, piecewise constant
//! constructions (battlements, staircases) and seeded Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::grid::{LatticeShape, Signal};
use crate::stats::sample_sd;

/// Jump positions and heights of the blocks function.
const BLOCKS_POS: [f64; 11] = [0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81];
const BLOCKS_HGT: [f64; 11] = [4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2];
const BUMPS_HGT: [f64; 11] = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
const BUMPS_WTH: [f64; 11] = [
    0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestFunction {
    Blocks,
    Bumps,
    Heavisine,
    Doppler,
    Zero,
}

impl TestFunction {
    pub const ALL: [TestFunction; 5] = [
        TestFunction::Blocks,
        TestFunction::Bumps,
        TestFunction::Heavisine,
        TestFunction::Doppler,
        TestFunction::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Blocks => "blocks",
            TestFunction::Bumps => "bumps",
            TestFunction::Heavisine => "heavisine",
            TestFunction::Doppler => "doppler",
            TestFunction::Zero => "zero",
        }
    }

    /// Unscaled value at `t ∈ (0, 1]`.
    fn eval(self, t: f64) -> f64 {
        match self {
            TestFunction::Blocks => BLOCKS_POS
                .iter()
                .zip(BLOCKS_HGT)
                .map(|(&p, h)| if t >= p { h } else { 0.0 })
                .sum(),
            TestFunction::Bumps => BUMPS_HGT
                .iter()
                .zip(BUMPS_WTH)
                .zip(BLOCKS_POS)
                .map(|((&h, w), p)| h * (1.0 + ((t - p) / w).abs()).powi(-4))
                .sum(),
            TestFunction::Heavisine => {
                4.0 * (4.0 * PI * t).sin() - sgn(t - 0.3) - sgn(0.72 - t)
            }
            TestFunction::Doppler => {
                (t * (1.0 - t)).sqrt() * (2.0 * PI * 1.05 / (t + 0.05)).sin()
            }
            TestFunction::Zero => 0.0,
        }
    }
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "blocks" => Ok(TestFunction::Blocks),
            "bumps" => Ok(TestFunction::Bumps),
            "heavisine" => Ok(TestFunction::Heavisine),
            "doppler" => Ok(TestFunction::Doppler),
            "zero" => Ok(TestFunction::Zero),
            other => Err(invalid(format!("unknown test function '{other}'"))),
        }
    }
}

fn sample_raw(func: TestFunction, n: usize) -> Vec<f64> {
    (1..=n).map(|i| func.eval(i as f64 / n as f64)).collect()
}

/// Samples `func` at `t_i = i/N`, `i = 1..N`, rescaled so the clean signal has
/// sample standard deviation `snr`. The zero function ignores `snr`.
pub fn gen_test_function(func: TestFunction, n: usize, snr: f64) -> Result<Signal> {
    if n < 8 {
        return Err(invalid(format!("test functions need N >= 8, got {n}")));
    }
    let mut values = sample_raw(func, n);
    if func != TestFunction::Zero {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(invalid(format!("snr must be positive, got {snr}")));
        }
        let scale = snr / sample_sd(&values);
        values.iter_mut().for_each(|v| *v *= scale);
    }
    Signal::from_vec(values)
}

/// The blocks function as a piecewise constant spec, scaled so that its
/// smallest jump equals `min_jump`.
pub fn blocks_with_min_jump(n: usize, min_jump: f64) -> Result<PiecewiseConstantSpec> {
    if n < 8 {
        return Err(invalid(format!("test functions need N >= 8, got {n}")));
    }
    let raw = PiecewiseConstantSpec::from_values(&sample_raw(TestFunction::Blocks, n))?;
    let smallest = raw
        .levels
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(f64::INFINITY, f64::min);
    let scale = min_jump / smallest;
    let levels = raw.levels.iter().map(|h| h * scale).collect();
    PiecewiseConstantSpec::new(levels, raw.lengths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PiecewiseKind {
    /// Levels `0, h, 0, h, …`: every pair of neighbouring jumps has opposite signs.
    Battlements,
    /// Levels `0, h, 2h, …`: every jump goes up.
    Staircase,
}

impl FromStr for PiecewiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "battlements" | "battlement" => Ok(PiecewiseKind::Battlements),
            "staircase" | "staircases" => Ok(PiecewiseKind::Staircase),
            other => Err(invalid(format!("unknown piecewise kind '{other}'"))),
        }
    }
}

impl fmt::Display for PiecewiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PiecewiseKind::Battlements => "battlements",
            PiecewiseKind::Staircase => "staircase",
        })
    }
}

/// A 1D piecewise constant vector: level `levels[l]` repeated `lengths[l]` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstantSpec {
    levels: Vec<f64>,
    lengths: Vec<usize>,
}

impl PiecewiseConstantSpec {
    pub fn new(levels: Vec<f64>, lengths: Vec<usize>) -> Result<Self> {
        if levels.is_empty() || levels.len() != lengths.len() {
            return Err(invalid("levels and lengths must be non-empty and of equal length"));
        }
        if lengths.contains(&0) {
            return Err(invalid("segment lengths must be positive"));
        }
        if levels.iter().any(|h| !h.is_finite()) {
            return Err(invalid("levels must be finite"));
        }
        if levels.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("consecutive levels must differ"));
        }
        Ok(Self { levels, lengths })
    }

    /// Splits a vector into maximal runs of equal values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let mut levels = Vec::new();
        let mut lengths: Vec<usize> = Vec::new();
        for &v in values {
            match levels.last() {
                Some(&last) if last == v => *lengths.last_mut().unwrap() += 1,
                _ => {
                    levels.push(v);
                    lengths.push(1);
                }
            }
        }
        Self::new(levels, lengths)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    /// Number of pieces `L`.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Total length `N`.
    pub fn len(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Longest segment.
    pub fn max_length(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    /// Cumulative lengths `N•1 .. N•(L-1)`, i.e. the 0-based index where each
    /// new segment starts.
    pub fn jump_locations(&self) -> Vec<usize> {
        self.lengths[..self.lengths.len() - 1]
            .iter()
            .scan(0, |acc, &n| {
                *acc += n;
                Some(*acc)
            })
            .collect()
    }

    /// Jump signs `s_1 .. s_(L-1)`, each `±1`.
    pub fn jump_signs(&self) -> Vec<i8> {
        self.levels
            .windows(2)
            .map(|w| if w[1] > w[0] { 1 } else { -1 })
            .collect()
    }

    /// Whether neighbouring jumps always have opposite signs.
    pub fn alternates(&self) -> bool {
        self.jump_signs().windows(2).all(|s| s[1] == -s[0])
    }

    pub fn realize(&self) -> Signal {
        let values: Vec<f64> = self
            .levels
            .iter()
            .zip(&self.lengths)
            .flat_map(|(&h, &n)| std::iter::repeat_n(h, n))
            .collect();
        let shape = LatticeShape::line(values.len()).expect("non-empty spec");
        Signal::new(shape, values).expect("finite levels")
    }
}

/// Builds a battlement or staircase with `l` pieces of jump height `h`.
/// When `N` is not a multiple of `L` the leftmost segments get one extra sample.
pub fn gen_piecewise(kind: PiecewiseKind, n: usize, l: usize, h: f64) -> Result<PiecewiseConstantSpec> {
    if l < 2 {
        return Err(invalid(format!("need at least two pieces, got {l}")));
    }
    if l > n {
        return Err(invalid(format!("cannot split {n} samples into {l} pieces")));
    }
    if !(h.is_finite() && h != 0.0) {
        return Err(invalid(format!("jump height must be finite and non-zero, got {h}")));
    }
    let base = n / l;
    let extra = n % l;
    let lengths = (0..l).map(|i| base + usize::from(i < extra)).collect();
    let levels = (0..l)
        .map(|i| match kind {
            PiecewiseKind::Battlements => {
                if i % 2 == 0 {
                    0.0
                } else {
                    h
                }
            }
            PiecewiseKind::Staircase => i as f64 * h,
        })
        .collect();
    PiecewiseConstantSpec::new(levels, lengths)
}

/// Gaussian noise level and the seed of its stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self { sigma, seed }
    }
}

/// `y = f + ε` with `ε` i.i.d. `N(0, σ²)` drawn from the seeded stream.
pub fn add_noise(f: &Signal, noise: NoiseSpec) -> Result<Signal> {
    if !(noise.sigma >= 0.0 && noise.sigma.is_finite()) {
        return Err(invalid(format!("sigma must be finite and >= 0, got {}", noise.sigma)));
    }
    if noise.sigma == 0.0 {
        return Ok(f.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let values = f
        .values()
        .iter()
        .map(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            v + noise.sigma * e
        })
        .collect();
    f.with_values(values)
}

/// Standard normal draws on a lattice.
pub fn white_noise(shape: &LatticeShape, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..shape.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Signal::new(shape.clone(), values).expect("finite normal draws")
}
