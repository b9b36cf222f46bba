//! Parameter grids, per-run result rows and per-cell aggregation.

use std::io::Write;
use std::time::Instant;

use okl_core::data::{permute, Dataset};
use okl_core::diagnostics::{audited_run, metrics, InvariantReport, Metrics};
use okl_core::learners::{run, Algorithm, CtMode, LearnerConfig};
use okl_core::KernelSpec;
use rayon::prelude::*;
use serde::Serialize;

use crate::BenchError;

/// Column order of every result file.
pub const CSV_HEADER: [&str; 18] = [
    "dataset", "algo", "B", "sigma", "epsilon", "U", "lambda", "eta", "ct_mode", "seed", "T",
    "mistakes", "amr", "m_prime", "n_t", "removals", "zeta_max", "elapsed_ms",
];

/// The margin grid searched in hindsight.
pub const DEFAULT_EPSILONS: [f64; 5] = [0.5, 0.6, 0.7, 0.8, 0.9];

/// Values shared by every run of a grid. `radius` and `rate` left as
/// `None` follow the default rules: `U = sqrt(B)/2` and
/// `lambda = U / (2 sqrt(B))` for the halving learners, `U = inf` and
/// `lambda = 1` for AVP.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub sigma: f64,
    pub radius: Option<f64>,
    pub rate: Option<f64>,
    pub eta: f64,
    pub ct: CtMode,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            radius: None,
            rate: None,
            eta: 0.0005,
            ct: CtMode::NormRatio,
        }
    }
}

/// Builds and validates the configuration of one run.
pub fn build_config(
    algo: Algorithm,
    budget: Option<usize>,
    epsilon: Option<f64>,
    seed: u64,
    p: &Params,
) -> Result<LearnerConfig, BenchError> {
    let cfgerr = |m: String| BenchError::Config(m);
    let kernel = KernelSpec::gaussian(p.sigma).map_err(|e| cfgerr(format!("--sigma: {e}")))?;
    let need_b = || {
        budget.ok_or_else(|| cfgerr(format!("--B is required for {algo}")))
    };
    let eps = epsilon.unwrap_or(0.5);
    let cfg = match algo {
        Algorithm::Perceptron => LearnerConfig::perceptron(kernel),
        Algorithm::Avp => LearnerConfig::avp(
            kernel,
            p.radius.unwrap_or(f64::INFINITY),
            p.rate.unwrap_or(1.0),
            eps,
        ),
        Algorithm::AvpAdaptive => {
            let u = p
                .radius
                .ok_or_else(|| cfgerr("--U is required for avp-adaptive".into()))?;
            LearnerConfig::avp_adaptive(kernel, u, eps)
        }
        Algorithm::Ahpatron | Algorithm::AhpatronNoProj => {
            let b = need_b()?;
            let sb = (b as f64).sqrt();
            let u = p.radius.unwrap_or(sb / 2.0);
            LearnerConfig {
                algorithm: algo,
                kernel,
                budget: Some(b),
                radius: u,
                rate: p.rate.unwrap_or(u / (2.0 * sb)),
                epsilon: eps,
                eta: p.eta,
                ct: p.ct,
                seed,
            }
        }
        Algorithm::BudgetOldest | Algorithm::BudgetRandom => {
            LearnerConfig::budget_baseline(kernel, algo, need_b()?, seed)
        }
    }
    .with_seed(seed);
    cfg.validate().map_err(|e| {
        let flag = match &e {
            okl_core::Error::InvalidConfig(m) if m.contains("budget") || m.contains(" B") => "--B",
            okl_core::Error::InvalidConfig(m) if m.contains("epsilon") => "--epsilon",
            okl_core::Error::InvalidConfig(m) if m.contains("lambda") => "--lambda",
            okl_core::Error::InvalidConfig(m) if m.contains("eta") => "--eta",
            okl_core::Error::InvalidConfig(m) if m.contains("c_t") => "--ct",
            okl_core::Error::InvalidConfig(m) if m.contains("U ") => "--U",
            _ => "config",
        };
        cfgerr(format!("{flag}: {e}"))
    })?;
    Ok(cfg)
}

/// One CSV/JSON row. Per-run rows carry the numeric seed; aggregate rows
/// carry `seed = "mean"` and the means over seeds at the selected epsilon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub dataset: String,
    pub algo: String,
    #[serde(rename = "B")]
    pub budget: Option<usize>,
    pub sigma: f64,
    pub epsilon: Option<f64>,
    #[serde(rename = "U")]
    pub radius: f64,
    pub lambda: Option<f64>,
    pub eta: Option<f64>,
    pub ct_mode: Option<String>,
    pub seed: String,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub mistakes: Option<f64>,
    pub amr: Option<f64>,
    pub m_prime: Option<f64>,
    pub n_t: Option<f64>,
    pub removals: Option<f64>,
    pub zeta_max: Option<f64>,
    pub elapsed_ms: Option<f64>,
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

impl ResultRow {
    fn new(dataset: &str, cfg: &LearnerConfig, seed: String, rounds: usize) -> Self {
        let algo = cfg.algorithm;
        Self {
            dataset: dataset.to_string(),
            algo: algo.name().to_string(),
            budget: cfg.budget,
            sigma: match cfg.kernel {
                KernelSpec::Gaussian { sigma } => sigma,
                _ => f64::NAN,
            },
            epsilon: algo.is_aggressive().then_some(cfg.epsilon),
            radius: cfg.radius,
            lambda: matches!(algo, Algorithm::Avp | Algorithm::Ahpatron | Algorithm::AhpatronNoProj)
                .then_some(cfg.rate),
            eta: (algo == Algorithm::Ahpatron).then_some(cfg.eta),
            ct_mode: algo.is_halving().then(|| cfg.ct.to_string()),
            seed,
            rounds,
            mistakes: None,
            amr: None,
            m_prime: None,
            n_t: None,
            removals: None,
            zeta_max: None,
            elapsed_ms: None,
        }
    }

    fn fill(&mut self, m: &Metrics, elapsed_ms: f64) {
        self.mistakes = Some(m.mistakes as f64);
        self.amr = Some(m.amr);
        self.m_prime = Some(m.m_prime as f64);
        self.n_t = Some(m.n_t as f64);
        self.removals = Some(m.removals as f64);
        self.zeta_max = m.zeta_max;
        self.elapsed_ms = Some(elapsed_ms);
    }

    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.dataset.clone(),
            self.algo.clone(),
            opt(self.budget, |b| b.to_string()),
            fmt_num(self.sigma),
            opt(self.epsilon, fmt_num),
            fmt_num(self.radius),
            opt(self.lambda, fmt_num),
            opt(self.eta, fmt_num),
            self.ct_mode.clone().unwrap_or_default(),
            self.seed.clone(),
            self.rounds.to_string(),
            opt(self.mistakes, fmt_num),
            opt(self.amr, fmt_num),
            opt(self.m_prime, fmt_num),
            opt(self.n_t, fmt_num),
            opt(self.removals, fmt_num),
            opt(self.zeta_max, fmt_num),
            opt(self.elapsed_ms, |v| format!("{v:.3}")),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(BenchError::Config(format!("--format: expected csv or json, got '{s}'"))),
        }
    }
}

pub fn write_rows<W: Write>(rows: &[ResultRow], format: Format, w: W) -> Result<(), BenchError> {
    let io = |e: String| BenchError::Run(format!("writing results: {e}"));
    match format {
        Format::Csv => {
            let mut wr = csv::Writer::from_writer(w);
            wr.write_record(CSV_HEADER).map_err(|e| io(e.to_string()))?;
            for r in rows {
                wr.write_record(r.csv_record()).map_err(|e| io(e.to_string()))?;
            }
            wr.flush().map_err(|e| io(e.to_string()))
        }
        Format::Json => {
            let mut w = w;
            serde_json::to_writer_pretty(&mut w, rows).map_err(|e| io(e.to_string()))?;
            writeln!(w).map_err(|e| io(e.to_string()))
        }
    }
}

/// One run of the grid.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub dataset: usize,
    pub config: LearnerConfig,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub spec: RunSpec,
    pub row: ResultRow,
    pub metrics: Option<Metrics>,
    pub invariants: Option<InvariantReport>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub algorithms: Vec<Algorithm>,
    pub budgets: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    pub params: Params,
}

impl Grid {
    /// Expands the Cartesian product in deterministic order:
    /// dataset, algorithm, B, epsilon, seed. Unbudgeted algorithms ignore
    /// the B list and non-aggressive ones the epsilon list. Every
    /// configuration is validated before anything runs.
    pub fn expand(&self, datasets: usize) -> Result<Vec<RunSpec>, BenchError> {
        if self.algorithms.is_empty() {
            return Err(BenchError::Config("--algo: empty algorithm list".into()));
        }
        if self.seeds.is_empty() {
            return Err(BenchError::Config("--seeds: empty seed list".into()));
        }
        let mut out = Vec::new();
        for d in 0..datasets {
            for &algo in &self.algorithms {
                let budgets: Vec<Option<usize>> = if algo.is_budgeted() {
                    if self.budgets.is_empty() {
                        return Err(BenchError::Config(format!("--B is required for {algo}")));
                    }
                    self.budgets.iter().map(|&b| Some(b)).collect()
                } else {
                    vec![None]
                };
                let eps: Vec<Option<f64>> = if algo.is_aggressive() {
                    if self.epsilons.is_empty() {
                        return Err(BenchError::Config("--epsilon: empty grid".into()));
                    }
                    self.epsilons.iter().map(|&e| Some(e)).collect()
                } else {
                    vec![None]
                };
                for &b in &budgets {
                    for &e in &eps {
                        for &seed in &self.seeds {
                            out.push(RunSpec {
                                dataset: d,
                                config: build_config(algo, b, e, seed, &self.params)?,
                            });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Check invariants on every round (norm cache every this many rounds).
    pub audit_every: Option<usize>,
    /// Re-run and compare traces.
    pub check_determinism: bool,
}

/// Runs one configuration on the permutation of `ds` given by its seed.
pub fn run_one(ds: &Dataset, spec: RunSpec, opts: RunOptions) -> RunResult {
    let cfg = &spec.config;
    let stream = permute(ds, cfg.seed);
    let mut row = ResultRow::new(&ds.name, cfg, cfg.seed.to_string(), stream.len());
    let start = Instant::now();
    let outcome = match opts.audit_every {
        Some(k) => audited_run(cfg, &stream.examples, k).map(|(t, r)| (t, Some(r))),
        None => run(cfg, &stream.examples).map(|t| (t, None)),
    };
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((trace, mut invariants)) => {
            let m = metrics(&trace);
            row.fill(&m, elapsed_ms);
            if opts.check_determinism {
                match run(cfg, &stream.examples) {
                    Ok(again)
                        if again.outcomes == trace.outcomes
                            && again.final_hypothesis.alphas() == trace.final_hypothesis.alphas() => {}
                    _ => {
                        let r = invariants.get_or_insert_with(InvariantReport::default);
                        r.violations.push("re-run with the same seed diverged".into());
                    }
                }
            }
            RunResult {
                spec,
                row,
                metrics: Some(m),
                invariants,
                error: None,
            }
        }
        Err(e) => RunResult {
            spec,
            row,
            metrics: None,
            invariants: None,
            error: Some(e.to_string()),
        },
    }
}

/// Runs every spec on a pool of `jobs` threads; results come back in spec
/// order regardless of completion order.
pub fn run_grid(
    datasets: &[Dataset],
    specs: Vec<RunSpec>,
    jobs: usize,
    opts: RunOptions,
) -> Result<Vec<RunResult>, BenchError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| BenchError::Config(format!("--jobs: {e}")))?;
    Ok(pool.install(|| {
        specs
            .into_par_iter()
            .map(|s| run_one(&datasets[s.dataset], s, opts))
            .collect()
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonStats {
    pub epsilon: Option<f64>,
    pub runs: usize,
    pub amr_mean: f64,
    pub amr_sd: f64,
}

/// Mean and spread over seeds for one (dataset, algorithm, B) cell, at the
/// epsilon with the smallest mean AMR.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub dataset: String,
    pub algo: String,
    #[serde(rename = "B")]
    pub budget: Option<usize>,
    pub best_epsilon: Option<f64>,
    pub runs: usize,
    pub failed: usize,
    pub amr_mean: f64,
    pub amr_sd: f64,
    pub n_t_mean: f64,
    pub elapsed_ms_mean: f64,
    pub per_epsilon: Vec<EpsilonStats>,
    #[serde(skip)]
    pub row: ResultRow,
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_of(rows: &[&ResultRow], f: impl Fn(&ResultRow) -> Option<f64>) -> Option<f64> {
    let v: Vec<f64> = rows.iter().filter_map(|r| f(r)).collect();
    (!v.is_empty()).then(|| mean_sd(&v).0)
}

/// Groups results by (dataset, algorithm, B) in first-appearance order and
/// selects the best epsilon of each cell in hindsight (ties go to the
/// smaller epsilon).
pub fn summarize(results: &[RunResult]) -> Vec<CellSummary> {
    type Key = (String, String, Option<usize>);
    let mut keys: Vec<Key> = Vec::new();
    for r in results {
        let k = (r.row.dataset.clone(), r.row.algo.clone(), r.row.budget);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(dataset, algo, budget)| {
            let cell: Vec<&RunResult> = results
                .iter()
                .filter(|r| r.row.dataset == dataset && r.row.algo == algo && r.row.budget == budget)
                .collect();
            let mut eps: Vec<Option<f64>> = Vec::new();
            for r in &cell {
                if !eps.contains(&r.row.epsilon) {
                    eps.push(r.row.epsilon);
                }
            }
            let per_epsilon: Vec<EpsilonStats> = eps
                .iter()
                .map(|&e| {
                    let amrs: Vec<f64> = cell
                        .iter()
                        .filter(|r| r.row.epsilon == e)
                        .filter_map(|r| r.row.amr)
                        .collect();
                    let (m, s) = mean_sd(&amrs);
                    EpsilonStats {
                        epsilon: e,
                        runs: amrs.len(),
                        amr_mean: m,
                        amr_sd: s,
                    }
                })
                .collect();
            let best = per_epsilon
                .iter()
                .filter(|s| s.runs > 0)
                .min_by(|a, b| {
                    a.amr_mean
                        .total_cmp(&b.amr_mean)
                        .then(a.epsilon.unwrap_or(0.0).total_cmp(&b.epsilon.unwrap_or(0.0)))
                })
                .cloned();
            let best_eps = best.as_ref().map(|b| b.epsilon).unwrap_or(eps[0]);
            let chosen: Vec<&RunResult> =
                cell.iter().copied().filter(|r| r.row.epsilon == best_eps).collect();
            let ok_rows: Vec<&ResultRow> =
                chosen.iter().filter(|r| r.error.is_none()).map(|r| &r.row).collect();
            let mut row = ResultRow {
                seed: "mean".into(),
                ..chosen[0].row.clone()
            };
            row.mistakes = mean_of(&ok_rows, |r| r.mistakes);
            row.amr = mean_of(&ok_rows, |r| r.amr);
            row.m_prime = mean_of(&ok_rows, |r| r.m_prime);
            row.n_t = mean_of(&ok_rows, |r| r.n_t);
            row.removals = mean_of(&ok_rows, |r| r.removals);
            row.zeta_max = mean_of(&ok_rows, |r| r.zeta_max);
            row.elapsed_ms = mean_of(&ok_rows, |r| r.elapsed_ms);
            CellSummary {
                dataset,
                algo,
                budget,
                best_epsilon: best_eps,
                runs: ok_rows.len(),
                failed: cell.iter().filter(|r| r.error.is_some()).count(),
                amr_mean: best.as_ref().map_or(f64::NAN, |b| b.amr_mean),
                amr_sd: best.as_ref().map_or(f64::NAN, |b| b.amr_sd),
                n_t_mean: row.n_t.unwrap_or(f64::NAN),
                elapsed_ms_mean: row.elapsed_ms.unwrap_or(f64::NAN),
                per_epsilon,
                row,
            }
        })
        .collect()
}

/// Per-run rows followed by one aggregate row per cell.
pub fn all_rows(results: &[RunResult], cells: &[CellSummary]) -> Vec<ResultRow> {
    results
        .iter()
        .map(|r| r.row.clone())
        .chain(cells.iter().map(|c| c.row.clone()))
        .collect()
}
