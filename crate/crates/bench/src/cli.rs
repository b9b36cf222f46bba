use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use okl_core::data::{permute, write_libsvm, Dataset};
use okl_core::diagnostics::{hinge_loss_of, kernel_alignment, max_self_kernel, mean_embedding};
use okl_core::learners::{Algorithm, CtMode};
use okl_core::KernelSpec;
use serde::Serialize;

use crate::grid::{
    all_rows, run_grid, summarize, write_rows, CellSummary, Format, Grid, Params, RunOptions,
    DEFAULT_EPSILONS,
};
use crate::source::{DataSource, SynthKind, SynthSpec};
use crate::suite::{parse_suite, run_suite, SuiteParams, SuiteResult};
use crate::BenchError;

#[derive(Parser, Debug)]
#[command(name = "okl-bench", version, about = "Budgeted online kernel learning harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// One algorithm on one dataset, one row per seed.
    Run(RunArgs),
    /// Cartesian sweep with per-cell mean, spread and best epsilon.
    Bench(RunArgs),
    /// Check mistake bounds under the settings each bound requires.
    CheckBounds(BoundArgs),
    /// Kernel alignment against the hinge loss of the mean embedding.
    Alignment(AlignArgs),
    /// Write a synthetic dataset in LIBSVM format.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Algorithm, or a comma-separated list for `bench`.
    #[arg(long, default_value = "ahpatron")]
    pub algo: String,
    /// Dataset path, name under data/, or synth:<kind>:k=v,...; repeat for `bench`.
    #[arg(long, required = true)]
    pub data: Vec<String>,
    /// Budget, or a comma-separated list for `bench`.
    #[arg(long = "B")]
    pub budget: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Margin slack; `bench` accepts a list and defaults to 0.5,...,0.9.
    #[arg(long)]
    pub epsilon: Option<String>,
    /// Radius U (default sqrt(B)/2 for halving learners, inf for AVP).
    #[arg(long = "U")]
    pub radius: Option<f64>,
    /// Rate lambda (default U/(2 sqrt(B)) for halving learners, 1 for AVP).
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0.0005)]
    pub eta: f64,
    /// fixed:<c> or norm-ratio.
    #[arg(long, default_value = "norm-ratio")]
    pub ct: String,
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// A count N (seeds 1..=N) or a comma-separated list.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value = "csv")]
    pub format: String,
    /// Check budget, norm and cache invariants on every round.
    #[arg(long)]
    pub audit: bool,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    /// `all` or a comma-separated list of bounds.
    #[arg(long, default_value = "all")]
    pub suite: String,
    /// Restrict to runs of one algorithm.
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long, default_value = "synth:noisy:T=1000,d=5,margin=0.5,flip=0.1,seed=0")]
    pub data: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long = "B", default_value_t = 64)]
    pub budget: usize,
    #[arg(long = "U", default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.8)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0005)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.25)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    #[arg(long)]
    pub data: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Use only the first T examples (after the optional permutation).
    #[arg(long = "T")]
    pub rounds: Option<usize>,
    /// Largest T accepted.
    #[arg(long, default_value_t = 20000)]
    pub cap: usize,
    /// Permute with this seed first.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// separable or noisy.
    #[arg(long, default_value = "separable")]
    pub kind: String,
    #[arg(long = "T", default_value_t = 1000)]
    pub rounds: usize,
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub margin: f64,
    #[arg(long, default_value_t = 0.1)]
    pub flip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rescale instances into the unit ball.
    #[arg(long)]
    pub unit_ball: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("okl-bench: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cmd: Command) -> Result<(), BenchError> {
    match cmd {
        Command::Run(a) => cmd_run(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::CheckBounds(a) => cmd_check_bounds(&a),
        Command::Alignment(a) => cmd_alignment(&a),
        Command::Gen(a) => cmd_gen(&a),
    }
}

fn list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, BenchError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| BenchError::Config(format!("{flag}: cannot parse '{p}'")))
        })
        .collect()
}

fn parse_seeds(seed: Option<u64>, seeds: Option<&str>) -> Result<Vec<u64>, BenchError> {
    match (seed, seeds) {
        (Some(s), _) => Ok(vec![s]),
        (None, Some(s)) if !s.contains(',') => {
            let n: u64 = s
                .trim()
                .parse()
                .map_err(|_| BenchError::Config(format!("--seeds: cannot parse '{s}'")))?;
            if n == 0 {
                return Err(BenchError::Config("--seeds: need at least one seed".into()));
            }
            Ok((1..=n).collect())
        }
        (None, Some(s)) => list("--seeds", s),
        (None, None) => Ok(vec![1]),
    }
}

fn parse_algos(s: &str) -> Result<Vec<Algorithm>, BenchError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.parse().map_err(|e| BenchError::Config(format!("--algo: {e}"))))
        .collect()
}

fn parse_ct(s: &str) -> Result<CtMode, BenchError> {
    s.parse().map_err(|e| BenchError::Config(format!("--ct: {e}")))
}

struct Prepared {
    grid: Grid,
    datasets: Vec<Dataset>,
    format: Format,
}

fn prepare(a: &RunArgs, single: bool) -> Result<Prepared, BenchError> {
    let format: Format = a.format.parse()?;
    let algorithms = parse_algos(&a.algo)?;
    let budgets: Vec<usize> = a.budget.as_deref().map(|b| list("--B", b)).transpose()?.unwrap_or_default();
    let epsilons: Vec<f64> = match &a.epsilon {
        Some(e) => list("--epsilon", e)?,
        None if single => vec![0.5],
        None => DEFAULT_EPSILONS.to_vec(),
    };
    let data: Vec<&str> = a.data.iter().map(String::as_str).collect();
    if single && (algorithms.len() != 1 || budgets.len() > 1 || epsilons.len() > 1 || data.len() > 1) {
        return Err(BenchError::Config(
            "run takes a single --algo, --data, --B and --epsilon; use bench for grids".into(),
        ));
    }
    if a.jobs == 0 {
        return Err(BenchError::Config("--jobs must be at least 1".into()));
    }
    let grid = Grid {
        algorithms,
        budgets,
        epsilons,
        seeds: parse_seeds(a.seed, a.seeds.as_deref())?,
        params: Params {
            sigma: a.sigma,
            radius: a.radius,
            rate: a.lambda,
            eta: a.eta,
            ct: parse_ct(&a.ct)?,
        },
    };
    // Validate the whole grid before touching any data.
    grid.expand(data.len())?;
    let sources = data
        .iter()
        .map(|d| DataSource::parse(d))
        .collect::<Result<Vec<_>, _>>()?;
    let datasets = sources.iter().map(DataSource::load).collect::<Result<Vec<_>, _>>()?;
    Ok(Prepared { grid, datasets, format })
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, BenchError> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| BenchError::Config(format!("--out {}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn run_prepared(p: &Prepared, jobs: usize, audit: bool) -> Result<Vec<crate::grid::RunResult>, BenchError> {
    let specs = p.grid.expand(p.datasets.len())?;
    let opts = RunOptions {
        audit_every: audit.then_some(50),
        check_determinism: false,
    };
    let results = run_grid(&p.datasets, specs, jobs, opts)?;
    for r in &results {
        if let Some(e) = &r.error {
            eprintln!("run {} {} seed {} failed: {e}", r.row.dataset, r.row.algo, r.row.seed);
        }
        if let Some(inv) = &r.invariants {
            for v in &inv.violations {
                eprintln!("invariant {} {} seed {}: {v}", r.row.dataset, r.row.algo, r.row.seed);
            }
        }
    }
    Ok(results)
}

fn failures(results: &[crate::grid::RunResult]) -> usize {
    results
        .iter()
        .filter(|r| r.error.is_some() || r.invariants.as_ref().is_some_and(|i| !i.ok()))
        .count()
}

fn fmt_pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn cmd_run(a: &RunArgs) -> Result<(), BenchError> {
    let p = prepare(a, true)?;
    let results = run_prepared(&p, a.jobs, a.audit)?;
    for r in &results {
        if let Some(m) = &r.metrics {
            eprintln!(
                "{} {} seed {}: T={} mistakes={} AMR={}% |M'|={} |N|={} removals={}",
                r.row.dataset,
                r.row.algo,
                r.row.seed,
                m.rounds,
                m.mistakes,
                fmt_pct(m.amr),
                m.m_prime,
                m.n_t,
                m.removals
            );
        }
    }
    if results.len() > 1 {
        for c in summarize(&results) {
            eprintln!(
                "{} {}: AMR {} +- {} % over {} seeds",
                c.dataset,
                c.algo,
                fmt_pct(c.amr_mean),
                fmt_pct(c.amr_sd),
                c.runs
            );
        }
    }
    let rows: Vec<_> = results.iter().map(|r| r.row.clone()).collect();
    write_rows(&rows, p.format, open_out(a.out.as_deref())?)?;
    match failures(&results) {
        0 => Ok(()),
        n => Err(BenchError::Run(format!("{n} run(s) failed"))),
    }
}

fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.json"))
}

fn print_summary(cells: &[CellSummary]) {
    for c in cells {
        let eps = c.best_epsilon.map(|e| format!(" eps={e}")).unwrap_or_default();
        let b = c.budget.map(|b| format!(" B={b}")).unwrap_or_default();
        eprintln!(
            "{} {}{b}{eps}: AMR {} +- {} % ({} runs, {} failed) |N| {:.1} {:.1} ms",
            c.dataset,
            c.algo,
            fmt_pct(c.amr_mean),
            fmt_pct(c.amr_sd),
            c.runs,
            c.failed,
            c.n_t_mean,
            c.elapsed_ms_mean
        );
    }
}

fn cmd_bench(a: &RunArgs) -> Result<(), BenchError> {
    let p = prepare(a, false)?;
    let results = run_prepared(&p, a.jobs, a.audit)?;
    let cells = summarize(&results);
    print_summary(&cells);
    write_rows(&all_rows(&results, &cells), p.format, open_out(a.out.as_deref())?)?;
    if let Some(out) = &a.out {
        let path = summary_path(out);
        let f = File::create(&path).map_err(|e| BenchError::Run(format!("{}: {e}", path.display())))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &cells)
            .map_err(|e| BenchError::Run(format!("{}: {e}", path.display())))?;
    }
    match failures(&results) {
        0 => Ok(()),
        n => Err(BenchError::Run(format!("{n} run(s) failed"))),
    }
}

fn write_suite<W: Write>(res: &SuiteResult, format: Format, w: W) -> Result<(), BenchError> {
    let io = |e: String| BenchError::Run(format!("writing bound reports: {e}"));
    match format {
        Format::Json => {
            let mut w = w;
            serde_json::to_writer_pretty(&mut w, res).map_err(|e| io(e.to_string()))?;
            writeln!(w).map_err(|e| io(e.to_string()))
        }
        Format::Csv => {
            let mut wr = csv::Writer::from_writer(w);
            wr.write_record(["dataset", "bound", "algo", "status", "lhs", "rhs", "detail"])
                .map_err(|e| io(e.to_string()))?;
            for e in &res.entries {
                let (lhs, rhs) = e
                    .report()
                    .map(|r| (r.lhs.to_string(), r.rhs.to_string()))
                    .unwrap_or_default();
                wr.write_record([
                    e.dataset.as_str(),
                    e.bound.name(),
                    e.algo.as_str(),
                    e.status_name(),
                    lhs.as_str(),
                    rhs.as_str(),
                    e.detail().as_str(),
                ])
                .map_err(|e| io(e.to_string()))?;
            }
            wr.flush().map_err(|e| io(e.to_string()))
        }
    }
}

fn cmd_check_bounds(a: &BoundArgs) -> Result<(), BenchError> {
    let format: Format = a.format.parse()?;
    let bounds = parse_suite(&a.suite)?;
    let only = a
        .algo
        .as_deref()
        .map(|s| s.parse::<Algorithm>().map_err(|e| BenchError::Config(format!("--algo: {e}"))))
        .transpose()?;
    let params = SuiteParams {
        sigma: a.sigma,
        budget: a.budget,
        radius: a.radius,
        epsilon: a.epsilon,
        eta: a.eta,
        gamma: a.gamma,
        seed: a.seed,
        ..Default::default()
    };
    let source = DataSource::parse(&a.data)?;
    let ds = source.load()?;
    let res = run_suite(&ds.name, &ds.examples, &bounds, only, &params)?;
    for e in &res.entries {
        let sides = e
            .report()
            .map(|r| format!(" lhs={} rhs={}", r.lhs, r.rhs))
            .unwrap_or_default();
        eprintln!("{:<18} {:<28} {}{sides}", e.bound.name(), e.algo, e.status_name());
    }
    for r in &res.runs {
        for v in &r.invariants.violations {
            eprintln!("invariant {} [{}]: {v}", r.algo, r.ct_mode);
        }
        if !r.deterministic {
            eprintln!("invariant {} [{}]: re-run diverged", r.algo, r.ct_mode);
        }
    }
    write_suite(&res, format, open_out(a.out.as_deref())?)?;
    let violated = res.violations();
    let failed = res
        .entries
        .iter()
        .filter(|e| e.status_name() == "failed")
        .count()
        + res.invariant_failures();
    if violated > 0 {
        Err(BenchError::BoundViolation(format!("{violated} bound(s) violated")))
    } else if failed > 0 {
        Err(BenchError::Run(format!("{failed} run(s) failed")))
    } else {
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct AlignmentReport {
    dataset: String,
    #[serde(rename = "T")]
    rounds: usize,
    sigma: f64,
    alignment: f64,
    hinge_of_mean_embedding: f64,
    difference: f64,
    tolerance: f64,
    holds: bool,
}

fn cmd_alignment(a: &AlignArgs) -> Result<(), BenchError> {
    let format: Format = a.format.parse()?;
    let kernel = KernelSpec::gaussian(a.sigma).map_err(|e| BenchError::Config(format!("--sigma: {e}")))?;
    let ds = DataSource::parse(&a.data)?.load()?;
    let ds = match a.seed {
        Some(s) => permute(&ds, s),
        None => ds,
    };
    let t = a.rounds.unwrap_or(ds.len()).min(ds.len());
    if t == 0 {
        return Err(BenchError::Config("--T must be positive".into()));
    }
    if t > a.cap {
        return Err(BenchError::Config(format!(
            "T = {t} exceeds the cap {} (pass --T or raise --cap)",
            a.cap
        )));
    }
    let stream = &ds.examples[..t];
    let run = |e: okl_core::Error| BenchError::Run(e.to_string());
    let alignment = kernel_alignment(stream, &kernel).map_err(run)?;
    let fbar = mean_embedding(stream, &kernel).map_err(run)?;
    let loss = hinge_loss_of(&fbar, stream);
    let tolerance = 1e-9 * t as f64;
    // The identity needs k(x, x) = 1 on every instance.
    let normalized = max_self_kernel(stream, &kernel) == 1.0;
    let rep = AlignmentReport {
        dataset: ds.name.clone(),
        rounds: t,
        sigma: a.sigma,
        alignment,
        hinge_of_mean_embedding: loss,
        difference: alignment - loss,
        tolerance,
        holds: (alignment - loss).abs() <= tolerance,
    };
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&rep).expect("plain struct")),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.serialize(&rep)
                .and_then(|_| w.flush().map_err(Into::into))
                .map_err(|e| BenchError::Run(format!("writing report: {e}")))?;
        }
    }
    if normalized && !rep.holds {
        return Err(BenchError::BoundViolation(format!(
            "|A_T - L_T(fbar)| = {} > {tolerance}",
            rep.difference.abs()
        )));
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<(), BenchError> {
    let kind = match a.kind.as_str() {
        "separable" | "sep" => SynthKind::Separable,
        "noisy" => SynthKind::Noisy,
        other => return Err(BenchError::Config(format!("--kind: unknown kind '{other}'"))),
    };
    let spec = SynthSpec {
        kind,
        t: a.rounds,
        dim: a.dim,
        margin: a.margin,
        flip: a.flip,
        seed: a.seed,
        unit_ball: a.unit_ball,
    };
    let s = spec.generate()?;
    let w = open_out(a.out.as_deref())?;
    write_libsvm(&s.dataset, w).map_err(|e| BenchError::Run(e.to_string()))?;
    eprintln!(
        "wrote {} examples ({} flipped), comparator |w|^2 = {}",
        s.dataset.len(),
        s.flipped.len(),
        s.comparator_sq_norm()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_forms() {
        assert_eq!(parse_seeds(None, Some("3")).unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds(None, Some("4,9")).unwrap(), vec![4, 9]);
        assert_eq!(parse_seeds(Some(7), None).unwrap(), vec![7]);
        assert_eq!(parse_seeds(None, None).unwrap(), vec![1]);
        assert!(parse_seeds(None, Some("0")).is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main(["okl-bench", "run"]), 1);
        assert_eq!(main(["okl-bench", "frobnicate"]), 1);
        assert_eq!(main(["okl-bench", "--help"]), 0);
    }
}
