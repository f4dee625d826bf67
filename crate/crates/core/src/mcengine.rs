//! Monte Carlo experiment over the `(γ, p)` noise plane.
//!
//! Every grid cell owns a ChaCha8 stream seeded by [`derive_cell_seed`], so a
//! surface depends only on its [`GridSpec`] and configuration, never on the
//! order or thread on which cells run.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{bell_state, BellState};
use crate::channels::{apply_pair_noise, NoiseConfig, NoiseParams};
use crate::dejmps::{circuit_round, phi_plus_fidelity, sample_outcome, ProtocolConfig};
use crate::error::{check_unit_interval, Error, Result};
use crate::qmat::DensityMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub steps_gamma: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub steps_p: usize,
    pub trials: u64,
    pub base_seed: u64,
}

impl GridSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        gamma_min: f64,
        gamma_max: f64,
        steps_gamma: usize,
        p_min: f64,
        p_max: f64,
        steps_p: usize,
        trials: u64,
        base_seed: u64,
    ) -> Result<Self> {
        let grid = Self {
            gamma_min,
            gamma_max,
            steps_gamma,
            p_min,
            p_max,
            steps_p,
            trials,
            base_seed,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_interval("gamma_min", self.gamma_min)?;
        check_unit_interval("gamma_max", self.gamma_max)?;
        check_unit_interval("p_min", self.p_min)?;
        check_unit_interval("p_max", self.p_max)?;
        if self.gamma_min > self.gamma_max {
            return Err(Error::Config(format!(
                "gamma range {}:{} has min > max",
                self.gamma_min, self.gamma_max
            )));
        }
        if self.p_min > self.p_max {
            return Err(Error::Config(format!("p range {}:{} has min > max", self.p_min, self.p_max)));
        }
        if self.steps_gamma < 2 || self.steps_p < 2 {
            return Err(Error::Config("each axis needs at least 2 steps".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(())
    }

    pub fn gamma_at(&self, i: usize) -> f64 {
        axis_value(self.gamma_min, self.gamma_max, self.steps_gamma, i)
    }

    pub fn p_at(&self, j: usize) -> f64 {
        axis_value(self.p_min, self.p_max, self.steps_p, j)
    }

    pub fn n_cells(&self) -> usize {
        self.steps_gamma * self.steps_p
    }

    pub fn gamma_step(&self) -> f64 {
        (self.gamma_max - self.gamma_min) / (self.steps_gamma - 1) as f64
    }

    pub fn p_step(&self) -> f64 {
        (self.p_max - self.p_min) / (self.steps_p - 1) as f64
    }
}

impl Default for GridSpec {
    /// 21×21 over `[0, 0.2]²`, 10⁴ trials per cell, seed 0.
    fn default() -> Self {
        Self {
            gamma_min: 0.0,
            gamma_max: 0.2,
            steps_gamma: 21,
            p_min: 0.0,
            p_max: 0.2,
            steps_p: 21,
            trials: 10_000,
            base_seed: 0,
        }
    }
}

fn axis_value(min: f64, max: f64, steps: usize, k: usize) -> f64 {
    if k + 1 == steps {
        // land exactly on the upper bound
        max
    } else {
        min + k as f64 * (max - min) / (steps - 1) as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimulationMode {
    /// Probabilities straight from the density-matrix circuit.
    Exact,
    /// One exact circuit per cell, then Bernoulli sampling of success.
    McFast,
    /// Every trial samples its own circuit round.
    #[default]
    McFull,
}

impl fmt::Display for SimulationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            SimulationMode::Exact => "exact",
            SimulationMode::McFast => "mc-fast",
            SimulationMode::McFull => "mc-full",
        })
    }
}

impl FromStr for SimulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "mc-fast" => Ok(Self::McFast),
            "mc-full" => Ok(Self::McFull),
            other => Err(Error::Parse(format!("unknown mode `{other}`"))),
        }
    }
}

/// Per-cell statistics.
///
/// `f_purify`, `delta_f` and `stderr_f` are `None` when no trial succeeded
/// (or, for `stderr_f`, fewer than two did). Exact mode reports
/// `successes = trials = 0` because nothing is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub gamma: f64,
    pub p: f64,
    pub f_noisy: f64,
    pub f_purify: Option<f64>,
    pub y_purify: f64,
    pub delta_f: Option<f64>,
    pub delta_y: f64,
    pub stderr_f: Option<f64>,
    pub stderr_y: f64,
    pub successes: u64,
    pub trials: u64,
}

impl CellStats {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        params: NoiseParams,
        f_noisy: f64,
        f_purify: Option<f64>,
        y_purify: f64,
        stderr_f: Option<f64>,
        stderr_y: f64,
        successes: u64,
        trials: u64,
    ) -> Self {
        Self {
            gamma: params.gamma,
            p: params.p,
            f_noisy,
            f_purify,
            y_purify,
            delta_f: f_purify.map(|f| f - f_noisy),
            delta_y: y_purify - 1.0,
            stderr_f,
            stderr_y,
            successes,
            trials,
        }
    }
}

/// A scalar field of a sweep surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    FNoisy,
    FPurify,
    YPurify,
    DeltaF,
    DeltaY,
}

impl Field {
    pub const ALL: [Field; 5] = [Field::FNoisy, Field::FPurify, Field::YPurify, Field::DeltaF, Field::DeltaY];

    pub fn value(self, cell: &CellStats) -> Option<f64> {
        match self {
            Field::FNoisy => Some(cell.f_noisy),
            Field::FPurify => cell.f_purify,
            Field::YPurify => Some(cell.y_purify),
            Field::DeltaF => cell.delta_f,
            Field::DeltaY => Some(cell.delta_y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Field::FNoisy => "f_noisy",
            Field::FPurify => "f_purify",
            Field::YPurify => "y_purify",
            Field::DeltaF => "delta_f",
            Field::DeltaY => "delta_y",
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown field `{s}`")))
    }
}

/// Cell statistics in row-major order: `cells[i * steps_p + j]` is `(γ_i, p_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSurface {
    pub grid: GridSpec,
    pub cells: Vec<CellStats>,
}

impl SweepSurface {
    pub fn cell(&self, i: usize, j: usize) -> &CellStats {
        &self.cells[i * self.grid.steps_p + j]
    }

    /// Field values as a `steps_gamma × steps_p` table.
    pub fn field_grid(&self, field: Field) -> Vec<Vec<Option<f64>>> {
        (0..self.grid.steps_gamma)
            .map(|i| (0..self.grid.steps_p).map(|j| field.value(self.cell(i, j))).collect())
            .collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for cell `(i, j)`: the splitmix64 finalizer of `base ⊕ (i << 32 | j)`.
///
/// The finalizer is a bijection on `u64`, so seeds are distinct for all
/// `i, j < 2³²` under one base seed.
pub fn derive_cell_seed(base_seed: u64, i: usize, j: usize) -> u64 {
    let index = ((i as u64) << 32) | (j as u64 & 0xFFFF_FFFF);
    splitmix64(base_seed ^ index)
}

/// Mean and sample standard error accumulator (Welford).
#[derive(Default)]
struct Running {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn mean(&self) -> Option<f64> {
        (self.n > 0).then_some(self.mean)
    }

    fn stderr(&self) -> Option<f64> {
        (self.n > 1).then(|| (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt())
    }
}

fn binomial_stderr(successes: u64, trials: u64) -> f64 {
    let y = successes as f64 / trials as f64;
    (y * (1.0 - y) / trials as f64).sqrt()
}

fn noisy_pair(params: NoiseParams, noise: NoiseConfig) -> Result<DensityMatrix> {
    apply_pair_noise(&bell_state(BellState::PhiPlus).projector(), params, noise)
}

/// Exact success probability of `rounds` consecutive rounds and the final survivor.
pub fn exact_rounds(pair: &DensityMatrix, cfg: &ProtocolConfig) -> Result<(f64, Option<DensityMatrix>)> {
    let mut state = pair.clone();
    let mut success = 1.0;
    for _ in 0..cfg.rounds {
        let out = circuit_round(&state, &state, cfg)?;
        success *= out.success_probability;
        match out.post_state {
            Some(next) => state = next,
            None => return Ok((0.0, None)),
        }
    }
    Ok((success, Some(state)))
}

/// Runs one grid cell.
pub fn run_cell(
    params: NoiseParams,
    noise: NoiseConfig,
    cfg: &ProtocolConfig,
    mode: SimulationMode,
    trials: u64,
    seed: u64,
) -> Result<CellStats> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let params = NoiseParams::new(params.gamma, params.p)?;
    let pair = noisy_pair(params, noise)?;
    let f_noisy = phi_plus_fidelity(&pair);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    match mode {
        SimulationMode::Exact => {
            let (y, state) = exact_rounds(&pair, cfg)?;
            let f = state.as_ref().map(phi_plus_fidelity);
            Ok(CellStats::assemble(params, f_noisy, f, y, f.map(|_| 0.0), 0.0, 0, 0))
        }
        SimulationMode::McFast => {
            let (y, state) = exact_rounds(&pair, cfg)?;
            let successes = (0..trials).filter(|_| rng.random::<f64>() < y).count() as u64;
            let f = if successes > 0 { state.as_ref().map(phi_plus_fidelity) } else { None };
            let y_hat = successes as f64 / trials as f64;
            Ok(CellStats::assemble(
                params,
                f_noisy,
                f,
                y_hat,
                f.map(|_| 0.0),
                binomial_stderr(successes, trials),
                successes,
                trials,
            ))
        }
        SimulationMode::McFull => {
            let mut fidelity = Running::default();
            for _ in 0..trials {
                // each trial starts from freshly generated noisy pairs
                let mut state = noisy_pair(params, noise)?;
                let mut survived = true;
                for _ in 0..cfg.rounds {
                    let circuit = circuit_round(&state, &state, cfg)?;
                    let sampled = sample_outcome(&mut rng, circuit, cfg);
                    match sampled.post_state {
                        Some(next) if sampled.success => state = next,
                        _ => {
                            survived = false;
                            break;
                        }
                    }
                }
                if survived {
                    fidelity.push(phi_plus_fidelity(&state));
                }
            }
            let successes = fidelity.n;
            Ok(CellStats::assemble(
                params,
                f_noisy,
                fidelity.mean(),
                successes as f64 / trials as f64,
                fidelity.stderr(),
                binomial_stderr(successes, trials),
                successes,
                trials,
            ))
        }
    }
}

/// Evaluates every grid cell on the current rayon pool.
pub fn sweep(grid: &GridSpec, noise: NoiseConfig, cfg: &ProtocolConfig, mode: SimulationMode) -> Result<SweepSurface> {
    grid.validate()?;
    let cells = (0..grid.n_cells())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / grid.steps_p, idx % grid.steps_p);
            let seed = derive_cell_seed(grid.base_seed, i, j);
            NoiseParams::new(grid.gamma_at(i), grid.p_at(j))
                .and_then(|params| run_cell(params, noise, cfg, mode, grid.trials, seed))
                .map_err(|e| Error::Cell {
                    i,
                    j,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepSurface { grid: *grid, cells })
}

/// [`sweep`] on a dedicated pool of `threads` workers.
pub fn sweep_with_threads(
    grid: &GridSpec,
    noise: NoiseConfig,
    cfg: &ProtocolConfig,
    mode: SimulationMode,
    threads: usize,
) -> Result<SweepSurface> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| sweep(grid, noise, cfg, mode))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Extremum {
    pub value: f64,
    pub gamma: f64,
    pub p: f64,
    pub i: usize,
    pub j: usize,
}

/// Adjacent grid nodes on opposite sides of a level.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LevelCrossing {
    pub from: (usize, usize),
    pub to: (usize, usize),
    /// Linearly interpolated crossing point.
    pub gamma: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub field: Field,
    pub level: f64,
    pub crossings: Vec<LevelCrossing>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub max_delta_f: Option<Extremum>,
    pub min_delta_f: Option<Extremum>,
    pub max_delta_y: Option<Extremum>,
    pub min_delta_y: Option<Extremum>,
    pub levels: Vec<LevelReport>,
}

fn extremum(surface: &SweepSurface, field: Field, better: impl Fn(f64, f64) -> bool) -> Option<Extremum> {
    let mut best: Option<Extremum> = None;
    for i in 0..surface.grid.steps_gamma {
        for j in 0..surface.grid.steps_p {
            let cell = surface.cell(i, j);
            if let Some(v) = field.value(cell) {
                if best.is_none_or(|b| better(v, b.value)) {
                    best = Some(Extremum {
                        value: v,
                        gamma: cell.gamma,
                        p: cell.p,
                        i,
                        j,
                    });
                }
            }
        }
    }
    best
}

fn level_crossings(surface: &SweepSurface, field: Field, level: f64) -> Vec<LevelCrossing> {
    let g = &surface.grid;
    let mut out = Vec::new();
    let mut check = |a: (usize, usize), b: (usize, usize)| {
        let (ca, cb) = (surface.cell(a.0, a.1), surface.cell(b.0, b.1));
        if let (Some(va), Some(vb)) = (field.value(ca), field.value(cb)) {
            if (va > level) != (vb > level) {
                let t = (level - va) / (vb - va);
                out.push(LevelCrossing {
                    from: a,
                    to: b,
                    gamma: ca.gamma + t * (cb.gamma - ca.gamma),
                    p: ca.p + t * (cb.p - ca.p),
                });
            }
        }
    };
    for i in 0..g.steps_gamma {
        for j in 0..g.steps_p - 1 {
            check((i, j), (i, j + 1));
        }
    }
    for j in 0..g.steps_p {
        for i in 0..g.steps_gamma - 1 {
            check((i, j), (i + 1, j));
        }
    }
    out
}

/// Extrema of ΔF and ΔY plus the grid edges straddling each requested level.
pub fn summarize(surface: &SweepSurface, levels: &[(Field, f64)]) -> Summary {
    Summary {
        max_delta_f: extremum(surface, Field::DeltaF, |v, b| v > b),
        min_delta_f: extremum(surface, Field::DeltaF, |v, b| v < b),
        max_delta_y: extremum(surface, Field::DeltaY, |v, b| v > b),
        min_delta_y: extremum(surface, Field::DeltaY, |v, b| v < b),
        levels: levels
            .iter()
            .map(|&(field, level)| LevelReport {
                field,
                level,
                crossings: level_crossings(surface, field, level),
            })
            .collect(),
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |f: &mut fmt::Formatter<'_>, name: &str, e: &Option<Extremum>| match e {
            Some(e) => writeln!(f, "{name:<12} {:+.6} at (gamma, p) = ({:.4}, {:.4})", e.value, e.gamma, e.p),
            None => writeln!(f, "{name:<12} undefined"),
        };
        show(f, "max delta_f", &self.max_delta_f)?;
        show(f, "min delta_f", &self.min_delta_f)?;
        show(f, "max delta_y", &self.max_delta_y)?;
        show(f, "min delta_y", &self.min_delta_y)?;
        for lvl in &self.levels {
            writeln!(f, "{} = {}: {} crossing edges", lvl.field, lvl.level, lvl.crossings.len())?;
            for c in &lvl.crossings {
                writeln!(f, "  ({:.4}, {:.4})", c.gamma, c.p)?;
            }
        }
        Ok(())
    }
}
