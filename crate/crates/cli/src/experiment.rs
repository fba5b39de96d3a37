//! Budget-constrained parameter sweeps.
//!
//! Every grid point fixes `(m, M, N, n)` and a per-iteration budget `B` that
//! must equal `m M N |A| + m n |A|` exactly. Points derived from a nominal
//! budget and critic ratio use the largest rollout sets that fit, so their
//! realized `B` can sit below the nominal one.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ampi_core::ampi::{run_cbmpi, GenerativeModel, StartDistribution, TabularModel};
use ampi_core::approx::{ExhaustivePolicySpace, LinearScoreSpace, OneHot, Policy, RbfGrid, SharedFeatures};
use ampi_core::env::{
    evaluate_steps_to_go, make_garnet, EvalStart, GarnetSpec, MountainCar, MountainCarState, MAX_EPISODE_STEPS,
};
use ampi_core::mdp::{optimal_value, policy_value};
use ampi_core::rng::{mix, stream};
use ampi_core::{AmpiConfig, Variant};
use rand::Rng;
use rayon::prelude::*;

use crate::config::Config;
use crate::format::fmt_float;
use crate::CliError;

pub const RAW_HEADER: &str = "grid,variant,m,M,N,n,p,B,run,performance";
pub const AGGREGATE_HEADER: &str = "grid,variant,m,M,N,n,p,B,runs,mean,stderr";

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    /// Performance is the mean steps-to-go over evaluation episodes.
    MountainCar {
        noise: f64,
        gamma: f64,
        rbf: (usize, usize),
        /// Bandwidths per axis; `None` uses half the centre spacing.
        sigma: Option<(f64, f64)>,
        bias: bool,
        eval_start: EvalStart,
        eval_episodes: usize,
    },
    /// Tabular run with one-hot features and an exhaustive policy space.
    /// Performance is the uniform average of `v_* - v_pi`.
    Garnet(GarnetSpec),
}

impl Environment {
    pub fn id(&self) -> &'static str {
        match self {
            Environment::MountainCar { .. } => "mountain-car",
            Environment::Garnet(_) => "garnet",
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Environment::MountainCar { .. } => 3,
            Environment::Garnet(spec) => spec.n_actions,
        }
    }

    pub fn from_config(config: &Config) -> Result<Self, CliError> {
        let id = config
            .raw("experiment", "environment")
            .or_else(|| config.raw("mdp", "environment"))
            .unwrap_or("mountain-car");
        match id {
            "mountain-car" => {
                let rbf = config.raw("mdp", "rbf").unwrap_or("2x2");
                let rbf = parse_shape(rbf)?;
                let sigma = match config.list::<f64>("mdp", "rbf_sigma")? {
                    None => None,
                    Some(s) if s.len() == 2 => Some((s[0], s[1])),
                    Some(_) => return Err(CliError::Config("[mdp] rbf_sigma needs two values".into())),
                };
                Ok(Environment::MountainCar {
                    noise: config.get_or("mdp", "noise", 1.0)?,
                    gamma: config.get_or("mdp", "gamma", 0.99)?,
                    rbf,
                    sigma,
                    bias: config.get_or("mdp", "rbf_bias", true)?,
                    eval_start: config.get_or("experiment", "eval_start", EvalStart::Uniform)?,
                    eval_episodes: config.get_or("experiment", "eval_episodes", 20)?,
                })
            }
            "garnet" => Ok(Environment::Garnet(GarnetSpec {
                n_states: config.get_or("mdp", "states", 10)?,
                n_actions: config.get_or("mdp", "actions", 3)?,
                branching: config.get_or("mdp", "branching", 2)?,
                reward_sparsity: config.get_or("mdp", "reward_sparsity", 0.0)?,
                gamma: config.get_or("mdp", "gamma", 0.9)?,
                seed: config.get_or("mdp", "seed", 0)?,
            })),
            other => Err(CliError::Config(format!(
                "unknown environment `{other}` (expected mountain-car or garnet)"
            ))),
        }
    }
}

fn parse_shape(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Config(format!("RBF grid `{text}` is not of the form RxC"));
    let (r, c) = text.split_once('x').ok_or_else(bad)?;
    let r: usize = r.trim().parse().map_err(|_| bad())?;
    let c: usize = c.trim().parse().map_err(|_| bad())?;
    if r == 0 || c == 0 {
        return Err(bad());
    }
    Ok((r, c))
}

/// One cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub m: usize,
    /// `M`.
    pub samples: usize,
    /// `N`.
    pub greedy_states: usize,
    /// `n`.
    pub eval_states: usize,
    /// Per-iteration budget `B`.
    pub budget: u64,
    /// Critic ratio; for derived points the nominal value the point was built from.
    pub p: f64,
}

impl GridPoint {
    /// Largest rollout sets fitting a nominal budget:
    /// `N = floor(B (1 - p) / (m M |A|))`, `n = floor(B p / (m |A|))`.
    /// Returns `None` when either step would get no states.
    pub fn from_budget(budget: u64, p: f64, m: usize, samples: usize, n_actions: usize) -> Option<Self> {
        let a = n_actions as f64;
        let big_n = (budget as f64 * (1.0 - p) / (m as f64 * samples as f64 * a) + 1e-9).floor() as usize;
        let n = (budget as f64 * p / (m as f64 * a) + 1e-9).floor() as usize;
        if big_n == 0 || (p > 0.0 && n == 0) {
            return None;
        }
        let point = GridPoint {
            m,
            samples,
            greedy_states: big_n,
            eval_states: n,
            budget: 0,
            p,
        };
        Some(GridPoint {
            budget: point.used(n_actions),
            ..point
        })
    }

    /// `m M N |A| + m n |A|`.
    pub fn used(&self, n_actions: usize) -> u64 {
        let (m, a) = (self.m as u64, n_actions as u64);
        m * self.samples as u64 * self.greedy_states as u64 * a + m * self.eval_states as u64 * a
    }

    pub fn variant(&self) -> Variant {
        if self.eval_states == 0 {
            Variant::Dpi
        } else {
            Variant::Cbmpi
        }
    }

    pub fn validate(&self, n_actions: usize) -> Result<(), String> {
        if self.m == 0 || self.samples == 0 || self.greedy_states == 0 {
            return Err("m, M and N must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.p) {
            return Err(format!("critic ratio {} outside [0, 1)", self.p));
        }
        if (self.p == 0.0) != (self.eval_states == 0) {
            return Err("n must be 0 exactly when p = 0".into());
        }
        let used = self.used(n_actions);
        if used != self.budget {
            return Err(format!(
                "budget identity violated: m M N |A| + m n |A| = {used}, but B = {}",
                self.budget
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub environment: Environment,
    pub grid: Vec<GridPoint>,
    pub runs: usize,
    pub k_max: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    /// Grid from `[experiment]`: either explicit `points = m:M:N:n:B; ...`
    /// (with `p` implied by the counts) or the product of `budget`, `p`, `m`
    /// and `M` lists.
    pub fn from_config(config: &Config) -> Result<Self, CliError> {
        let environment = Environment::from_config(config)?;
        let a = environment.n_actions();
        let grid = match config.raw("experiment", "points") {
            Some(points) => points
                .split(';')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(|p| parse_point(p, a))
                .collect::<Result<Vec<_>, _>>()?,
            None => {
                let budget: u64 = config.get_or("experiment", "budget", 200)?;
                let ps = config.list::<f64>("experiment", "p")?.unwrap_or_else(|| vec![0.0]);
                let ms = config.list::<usize>("experiment", "m")?.unwrap_or_else(|| vec![1]);
                let big_ms = config.list::<usize>("experiment", "M")?.unwrap_or_else(|| vec![1]);
                let mut grid = Vec::new();
                for &p in &ps {
                    if !(0.0..1.0).contains(&p) {
                        return Err(CliError::Validation(format!("critic ratio {p} outside [0, 1)")));
                    }
                    for &m in &ms {
                        for &big_m in &big_ms {
                            if m == 0 || big_m == 0 {
                                return Err(CliError::Validation("m and M must be at least 1".into()));
                            }
                            grid.extend(GridPoint::from_budget(budget, p, m, big_m, a));
                        }
                    }
                }
                grid
            }
        };
        let spec = ExperimentSpec {
            environment,
            grid,
            runs: config.get_or("experiment", "runs", 50)?,
            k_max: config.get_or("experiment", "k_max", 20)?,
            seed: config.get_or("experiment", "seed", 0)?,
            out_dir: config.get::<PathBuf>("experiment", "out")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.grid.is_empty() {
            return Err(CliError::Validation("experiment grid is empty".into()));
        }
        if self.runs == 0 || self.k_max == 0 {
            return Err(CliError::Validation("runs and k_max must be at least 1".into()));
        }
        if let Environment::MountainCar { eval_episodes: 0, .. } = self.environment {
            return Err(CliError::Validation("eval_episodes must be at least 1".into()));
        }
        let a = self.environment.n_actions();
        for (g, point) in self.grid.iter().enumerate() {
            point.validate(a).map_err(|msg| {
                CliError::Validation(format!(
                    "grid cell {g} (m={}, M={}, N={}, n={}, B={}): {msg}",
                    point.m, point.samples, point.greedy_states, point.eval_states, point.budget
                ))
            })?;
        }
        Ok(())
    }

    pub fn cell_seed(&self, grid: usize, run: usize) -> u64 {
        mix(&[self.seed, grid as u64, run as u64])
    }
}

fn parse_point(text: &str, n_actions: usize) -> Result<GridPoint, CliError> {
    let fields: Vec<&str> = text.split(':').map(str::trim).collect();
    let parsed: Vec<u64> = fields
        .iter()
        .map(|f| f.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("grid point `{text}` is not m:M:N:n:B")))?;
    let [m, big_m, big_n, n, b] = parsed[..] else {
        return Err(CliError::Config(format!("grid point `{text}` is not m:M:N:n:B")));
    };
    let critic = m * n * n_actions as u64;
    Ok(GridPoint {
        m: m as usize,
        samples: big_m as usize,
        greedy_states: big_n as usize,
        eval_states: n as usize,
        budget: b,
        p: if b == 0 { 0.0 } else { critic as f64 / b as f64 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub grid: usize,
    pub run: usize,
    pub performance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub grid: usize,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(runs)`; zero for a single run.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub grid: Vec<GridPoint>,
    /// Ordered by `(grid, run)`.
    pub rows: Vec<RawRow>,
    pub aggregate: Vec<Aggregate>,
}

impl ResultTable {
    pub fn new(grid: Vec<GridPoint>, rows: Vec<RawRow>) -> Self {
        let aggregate = aggregate(grid.len(), &rows);
        Self { grid, rows, aggregate }
    }

    pub fn raw_csv(&self) -> String {
        let mut out = format!("{RAW_HEADER}\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{}",
                point_columns(row.grid, &self.grid[row.grid]),
                row.run,
                fmt_float(row.performance)
            );
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = format!("{AGGREGATE_HEADER}\n");
        for a in &self.aggregate {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                point_columns(a.grid, &self.grid[a.grid]),
                a.runs,
                fmt_float(a.mean),
                fmt_float(a.stderr)
            );
        }
        out
    }

    /// Aggregate of the best (lowest-mean) cell satisfying `filter`.
    pub fn best(&self, filter: impl Fn(&GridPoint) -> bool) -> Option<&Aggregate> {
        self.aggregate
            .iter()
            .filter(|a| a.runs > 0 && filter(&self.grid[a.grid]))
            .min_by(|x, y| x.mean.total_cmp(&y.mean))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (name, body) in [("raw.csv", self.raw_csv()), ("aggregate.csv", self.aggregate_csv())] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

fn point_columns(g: usize, p: &GridPoint) -> String {
    format!(
        "{g},{},{},{},{},{},{},{}",
        p.variant(),
        p.m,
        p.samples,
        p.greedy_states,
        p.eval_states,
        fmt_float(p.p),
        p.budget
    )
}

/// Mean and standard error per grid index, recomputed from raw rows.
pub fn aggregate(n_grid: usize, rows: &[RawRow]) -> Vec<Aggregate> {
    (0..n_grid)
        .map(|g| {
            let xs: Vec<f64> = rows.iter().filter(|r| r.grid == g).map(|r| r.performance).collect();
            let runs = xs.len();
            let mean = if runs == 0 {
                f64::NAN
            } else {
                xs.iter().sum::<f64>() / runs as f64
            };
            let stderr = if runs < 2 {
                0.0
            } else {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
                (var / runs as f64).sqrt()
            };
            Aggregate {
                grid: g,
                runs,
                mean,
                stderr,
            }
        })
        .collect()
}

/// Final performance of one seeded run at one grid point (lower is better).
pub fn run_cell(spec: &ExperimentSpec, point: &GridPoint, seed: u64) -> Result<f64, CliError> {
    let config = AmpiConfig {
        variant: point.variant(),
        m: point.m,
        samples: point.samples,
        greedy_states: point.greedy_states,
        eval_states: point.eval_states,
        k_max: spec.k_max,
        seed,
        initial_action: 0,
    };
    match &spec.environment {
        Environment::MountainCar {
            noise,
            gamma,
            rbf,
            sigma,
            bias,
            eval_start,
            eval_episodes,
        } => {
            let model = MountainCar {
                noise: *noise,
                gamma: *gamma,
            };
            let grid = mountain_car_features(*rbf, *sigma, *bias)?;
            let features: SharedFeatures<MountainCarState> = Arc::new(grid);
            let space = LinearScoreSpace::new(features.clone(), model.n_actions());
            let outcome = run_cbmpi(&model, features, &space, &config)?;
            let policy = outcome.policy;
            Ok(evaluate_steps_to_go(
                &model,
                |s: &MountainCarState| policy.action(s),
                *eval_start,
                *eval_episodes,
                mix(&[seed, 0x7065_7266]),
            ))
        }
        Environment::Garnet(garnet) => {
            let mdp = make_garnet(garnet)?;
            let (_, v_star) = optimal_value(&mdp)?;
            let n = mdp.n_states();
            let space = ExhaustivePolicySpace::new(n, mdp.n_actions());
            let model = TabularModel::new(mdp.clone(), StartDistribution::Weights(vec![1.0 / n as f64; n]))?;
            let outcome = run_cbmpi(&model, Arc::new(OneHot { n }), &space, &config)?;
            let v_pi = policy_value(&mdp, &outcome.policy)?;
            let gap: f64 = v_star.as_slice().iter().zip(v_pi.as_slice()).map(|(a, b)| a - b).sum();
            Ok(gap / n as f64)
        }
    }
}

pub fn mountain_car_features(rbf: (usize, usize), sigma: Option<(f64, f64)>, bias: bool) -> Result<RbfGrid, CliError> {
    let sigma = sigma.map(|(a, b)| [a, b]);
    Ok(RbfGrid::new(
        &[-1.2, -0.07],
        &[0.6, 0.07],
        &[rbf.0, rbf.1],
        sigma.as_ref().map(|s| &s[..]),
        bias,
    )?)
}

/// Runs the grid x runs matrix on a pool of `workers` threads. Results do not
/// depend on `workers`.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<ResultTable, CliError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let cells: Vec<(usize, usize)> = (0..spec.grid.len())
        .flat_map(|g| (0..spec.runs).map(move |r| (g, r)))
        .collect();
    let rows = pool.install(|| {
        cells
            .par_iter()
            .map(|&(g, r)| {
                run_cell(spec, &spec.grid[g], spec.cell_seed(g, r)).map(|performance| RawRow {
                    grid: g,
                    run: r,
                    performance,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let table = ResultTable::new(spec.grid.clone(), rows);
    if let Some(dir) = &spec.out_dir {
        table.write(dir)?;
    }
    Ok(table)
}

/// Mean steps-to-go of the uniformly random policy.
pub fn random_policy_steps(model: &MountainCar, start: EvalStart, episodes: usize, seed: u64) -> f64 {
    let total: usize = (0..episodes)
        .map(|e| {
            let mut rng = stream(&[seed, 0x7261_6e64, e as u64]);
            let mut state = match start {
                EvalStart::Uniform => model.sample_start(0, &mut rng),
                EvalStart::Rest => MountainCarState::rest(),
            };
            for t in 1..=MAX_EPISODE_STEPS {
                let a = rng.random_range(0..model.n_actions());
                let (_, next, done) = model.step(&state, a, &mut rng);
                if done {
                    return t;
                }
                state = next;
            }
            MAX_EPISODE_STEPS
        })
        .sum();
    total as f64 / episodes.max(1) as f64
}
