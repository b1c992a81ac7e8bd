use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ncadmm::{PolicyKind, UpdateOrder};
use ncadmm_cli::config::parse_tau_grid;
use ncadmm_cli::export::{export_outputs, write_records};
use ncadmm_cli::records::{self, BenchRecord};
use ncadmm_cli::{
    run_cell, run_sweep, run_table, CellConfig, HarnessError, OrderChoice, ProblemKind, ProblemSpec,
    SweepConfig, TableConfig,
};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "ncadmm", version, about = "ADMM penalty sweeps and policy comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy × τ₀ × order cell and report iteration counts.
    Sweep(SweepArgs),
    /// Compare vanilla, residual balance and spectral at one τ₀.
    Table(TableArgs),
    /// Run one solve and export its report and recovered output.
    Solve(SolveArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// l0_regression, l0_denoise, phase_retrieval or eigenvector.
    #[arg(long, value_parser = parse_with::<ProblemKind>)]
    problem: Option<ProblemKind>,
    /// Generator name (synthetic, synthetic1d, synthetic2d, synthetic_full) or a file path.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// ℓ0 weight.
    #[arg(long)]
    rho: Option<f64>,
    /// Relative stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for records and outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Args)]
struct Output {
    /// What to print on stdout.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Leave the wall_ms column out of CSV on stdout.
    #[arg(long)]
    omit_wall_ms: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated policies.
    #[arg(long, value_delimiter = ',', value_parser = parse_with::<PolicyKind>)]
    policy: Vec<PolicyKind>,
    /// `0.1,1,10` or `log:LO:HI:COUNT`.
    #[arg(long)]
    tau_grid: Option<String>,
    /// both, smooth_first or nonsmooth_first.
    #[arg(long, value_parser = parse_with::<OrderChoice>)]
    order: Option<OrderChoice>,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long, value_parser = parse_with::<OrderChoice>)]
    order: Option<OrderChoice>,
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_parser = parse_with::<PolicyKind>)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    tau0: Option<f64>,
    /// smooth_first or nonsmooth_first.
    #[arg(long, value_parser = parse_with::<UpdateOrder>)]
    order: Option<UpdateOrder>,
    /// Record per-iteration residuals and penalties.
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    output: Output,
}

fn parse_with<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| e.to_string())
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Validation(format!("{}: {e}", path.display())))
}

impl ProblemArgs {
    /// Replaces the problem list when `--problem` is given; other problem
    /// flags apply to every listed problem.
    fn apply(&self, problems: &mut Vec<ProblemSpec>) -> Result<(), HarnessError> {
        if let Some(kind) = self.problem {
            *problems = vec![ProblemSpec::new(kind)];
        } else if self.dataset.is_some() && problems.len() != 1 {
            return Err(HarnessError::Validation("--dataset needs --problem".into()));
        }
        for p in problems.iter_mut() {
            self.apply_one(p);
        }
        Ok(())
    }

    fn apply_one(&self, p: &mut ProblemSpec) {
        if let Some(d) = &self.dataset {
            p.dataset = Some(d.clone());
        }
        if let Some(s) = self.seed {
            p.seed = s;
        }
        if let Some(r) = self.rho {
            p.rho = Some(r);
        }
    }
}

fn print_records(recs: &[BenchRecord], out: &Output, text: &str) -> Result<(), HarnessError> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let io = |e: std::io::Error| HarnessError::Io(e.to_string());
    match out.format {
        Format::Text => lock.write_all(text.as_bytes()).map_err(io),
        Format::Csv => records::write_csv(&mut lock, recs, !out.omit_wall_ms),
        Format::Json => writeln!(lock, "{}", records::to_json(recs)).map_err(io),
    }
}

fn sweep(a: SweepArgs) -> Result<(), HarnessError> {
    let mut cfg = match &a.problem.config {
        Some(path) => load_config(path)?,
        None => SweepConfig::new(Vec::new()),
    };
    a.problem.apply(&mut cfg.problems)?;
    if !a.policy.is_empty() {
        cfg.policies = a.policy.clone();
    }
    if let Some(g) = &a.tau_grid {
        cfg.tau_grid = parse_tau_grid(g)?;
    }
    if let Some(o) = a.order {
        cfg.order = o;
    }
    if let Some(t) = a.problem.tol {
        cfg.eps_tol = t;
    }
    if let Some(m) = a.problem.max_iter {
        cfg.max_iter = Some(m);
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &a.problem.out {
        cfg.out = Some(o.clone());
    }
    let recs = run_sweep(&cfg)?;
    let text = records::sweep_text(&recs);
    if let Some(dir) = &cfg.out {
        write_records(dir, &recs, &text)?;
    }
    print_records(&recs, &a.output, &text)
}

fn table(a: TableArgs) -> Result<(), HarnessError> {
    let mut cfg: TableConfig = match &a.problem.config {
        Some(path) => load_config(path)?,
        None => TableConfig::default(),
    };
    a.problem.apply(&mut cfg.problems)?;
    if let Some(t) = a.tau0 {
        cfg.tau0 = t;
    }
    if let Some(o) = a.order {
        cfg.order = o;
    }
    if let Some(t) = a.problem.tol {
        cfg.eps_tol = t;
    }
    if let Some(m) = a.problem.max_iter {
        cfg.max_iter = Some(m);
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &a.problem.out {
        cfg.out = Some(o.clone());
    }
    let recs = run_table(&cfg)?;
    let text = records::table_text(&recs);
    if let Some(dir) = &cfg.out {
        write_records(dir, &recs, &text)?;
    }
    print_records(&recs, &a.output, &text)
}

fn solve(a: SolveArgs) -> Result<(), HarnessError> {
    let mut cfg: CellConfig = match (&a.problem.config, a.problem.problem) {
        (Some(path), _) => load_config(path)?,
        (None, Some(kind)) => CellConfig::new(ProblemSpec::new(kind)),
        (None, None) => return Err(HarnessError::Validation("solve needs --problem or --config".into())),
    };
    if let Some(kind) = a.problem.problem {
        if kind != cfg.problem.kind {
            cfg.problem = ProblemSpec::new(kind);
        }
    }
    a.problem.apply_one(&mut cfg.problem);
    if let Some(p) = a.policy {
        cfg.policy = p;
    }
    if let Some(t) = a.tau0 {
        cfg.tau0 = t;
    }
    if let Some(o) = a.order {
        cfg.order = o;
    }
    if let Some(t) = a.problem.tol {
        cfg.eps_tol = t;
    }
    if let Some(m) = a.problem.max_iter {
        cfg.max_iter = Some(m);
    }
    cfg.trace |= a.trace;
    if let Some(o) = &a.problem.out {
        cfg.out = Some(o.clone());
    }
    let (problem, outcome) = run_cell(&cfg)?;
    if let Some(dir) = &cfg.out {
        let text = records::sweep_text(std::slice::from_ref(&outcome.record));
        write_records(dir, std::slice::from_ref(&outcome.record), &text)?;
        export_outputs(dir, &problem, &outcome)?;
    }
    let recs = [outcome.record];
    print_records(&recs, &a.output, &records::sweep_text(&recs))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Table(a) => table(a),
        Command::Solve(a) => solve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
