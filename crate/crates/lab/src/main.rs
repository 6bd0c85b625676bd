use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmimo_lab::config::{ExperimentFile, Overrides};
use mmimo_lab::experiments::{
    read_csv_file, run_dof_contour, run_rate_vs_n, write_csv_file, RateVsNRow,
    DOF_CONTOUR_COLUMNS, RATE_VS_N_COLUMNS,
};
use mmimo_lab::validation::run_validation;
use mmimo_lab::{parallel, LabError};

/// Multicell massive MIMO experiments.
#[derive(Parser)]
#[command(name = "mmimo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ergodic rate versus antenna count: Monte Carlo, deterministic
    /// equivalent and closed form for MF and MMSE detection.
    RateVsN(Common),
    /// DoF per user needed to reach a fraction of the rate ceiling.
    DofContour(Common),
    /// Run the invariant checks; exits with 1 if any fails.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (validation prints to stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads for Monte Carlo trials.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentFile, LabError> {
        let mut file = match &self.config {
            Some(path) => ExperimentFile::load(path)?,
            None => ExperimentFile::default(),
        };
        Overrides {
            seed: self.seed,
            trials: self.trials,
        }
        .apply(&mut file);
        parallel::configure_threads(self.threads)?;
        Ok(file)
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn echo_config<T: serde::Serialize>(out: &Path, table: &str, value: &T) -> Result<PathBuf, LabError> {
    let mut doc = toml::Table::new();
    doc.insert(
        table.to_string(),
        toml::Value::try_from(value).map_err(|e| LabError::config(e.to_string()))?,
    );
    let path = out.with_extension("config.toml");
    let text = toml::to_string(&doc).map_err(|e| LabError::config(e.to_string()))?;
    std::fs::write(&path, text).map_err(|source| LabError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn rate_vs_n(args: &Common) -> Result<ExitCode, LabError> {
    let file = args.load()?;
    let cfg = &file.rate_vs_n;
    cfg.validate()?;
    let out = args.out_or("rate_vs_n.csv");
    let echo = echo_config(&out, "rate-vs-n", cfg)?;
    if cfg.trials == 0 {
        write_csv_file::<RateVsNRow>(&out, &RATE_VS_N_COLUMNS, &[])?;
        print!("{}", std::fs::read_to_string(&echo).unwrap_or_default());
        return Ok(ExitCode::SUCCESS);
    }
    let previous: Vec<RateVsNRow> = read_csv_file(&out, &RATE_VS_N_COLUMNS)?;
    let rows = run_rate_vs_n(cfg, &previous, |row, reused| {
        let tag = if reused { "kept" } else { "done" };
        eprintln!("{tag}: N={} P={} ({}) {}", row.antennas, row.dof, row.dof_rule, row.status);
    })?;
    write_csv_file(&out, &RATE_VS_N_COLUMNS, &rows)?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn dof_contour(args: &Common) -> Result<ExitCode, LabError> {
    let file = args.load()?;
    let out = args.out_or("dof_contour.csv");
    let rows = run_dof_contour(&file.dof_contour)?;
    echo_config(&out, "dof-contour", &file.dof_contour)?;
    write_csv_file(&out, &DOF_CONTOUR_COLUMNS, &rows)?;
    eprintln!("wrote {} rows to {}", rows.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn validate(args: &Common) -> Result<ExitCode, LabError> {
    let file = args.load()?;
    let report = run_validation(&file.validate)?;
    let csv_error = |path: PathBuf| move |source| LabError::Csv { path, source };
    match &args.out {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|source| LabError::Io {
                path: path.clone(),
                source,
            })?;
            report.write_csv(f).map_err(csv_error(path.clone()))?;
        }
        None => report
            .write_csv(std::io::stdout().lock())
            .map_err(csv_error(PathBuf::from("<stdout>")))?,
    }
    let failed: Vec<&str> = report
        .outcomes
        .iter()
        .filter(|o| !o.passed())
        .map(|o| o.check.as_str())
        .collect();
    let mut err = std::io::stderr().lock();
    if failed.is_empty() {
        let _ = writeln!(err, "all {} checks passed", report.outcomes.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let _ = writeln!(err, "failed: {}", failed.join(", "));
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RateVsN(args) => rate_vs_n(args),
        Command::DofContour(args) => dof_contour(args),
        Command::Validate(args) => validate(args),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code())
    })
}
