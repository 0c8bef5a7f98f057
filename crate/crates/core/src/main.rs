use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spdelab::error::{LabError, Result};
use spdelab::estimators::Report;
use spdelab::mc::{configure_workers, WORKERS_ENV};
use spdelab::scenario::{split_assignment, CheckName, Scenario};

/// Monte Carlo laboratory for semilinear SPDEs with Wiener and Poisson noise.
#[derive(Parser, Debug)]
#[command(name = "spdelab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the checks of one scenario.
    Run(Common),
    /// Run a scenario once per value of a numeric field (same seed every time).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Dotted path of the swept field, e.g. `run.n_steps`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed (TOML integers are signed, hence the range).
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<u64>,
    /// Override a config field: `--set run.n_steps=200` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Extra check to run in addition to `checks.enabled` (repeatable).
    #[arg(long = "check", value_name = "NAME")]
    check: Vec<String>,
    /// Worker threads (defaults to all cores).
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for s in &self.set {
            let (k, v) = split_assignment(s)?;
            out.push((k.to_string(), v.to_string()));
        }
        if let Some(seed) = self.seed {
            out.push(("run.seed".into(), seed.to_string()));
        }
        if let Some(n) = self.paths {
            out.push(("run.n_paths".into(), n.to_string()));
        }
        Ok(out)
    }

    fn checks(&self) -> Result<Vec<CheckName>> {
        self.check.iter().map(|c| c.parse()).collect()
    }

    fn read_config(&self) -> Result<String> {
        fs::read_to_string(&self.config)
            .map_err(|e| LabError::config("--config", format!("{}: {e}", self.config.display())))
    }
}

fn timestamp_line() -> String {
    format!("# generated {} by spdelab {}\n", chrono::Utc::now().to_rfc3339(), env!("CARGO_PKG_VERSION"))
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))
}

fn summarize(reports: &[Report]) -> bool {
    for r in reports {
        eprintln!("{:<18} {}", r.name(), if r.passed() { "pass" } else { "FAIL" });
    }
    reports.iter().all(Report::passed)
}

fn run(common: &Common) -> Result<bool> {
    let mut scenario = Scenario::parse(&common.read_config()?, &common.overrides()?)?;
    scenario.enable(&common.checks()?);
    let loaded = scenario.load()?;
    let reports = loaded.run_all()?;

    fs::create_dir_all(&common.out)?;
    let dumps = loaded.path_dumps()?;
    if !dumps.is_empty() {
        let dir = common.out.join("paths");
        fs::create_dir_all(&dir)?;
        for (name, body) in dumps {
            write(&dir.join(name), &body)?;
        }
    }
    let passed = summarize(&reports);
    let bundle = json!({
        "fingerprint": loaded.fingerprint(),
        "scenario": loaded.scenario,
        "passed": passed,
        "reports": reports,
    });
    write(&common.out.join("reports.json"), &serde_json::to_string_pretty(&bundle).expect("json"))?;
    let mut csv = timestamp_line();
    csv.push_str(Report::CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write(&common.out.join("reports.csv"), &csv)?;
    Ok(passed)
}

fn sweep(common: &Common, axis: &str, values: &[String]) -> Result<bool> {
    let text = common.read_config()?;
    let base = common.overrides()?;
    let extra = common.checks()?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut passed = true;
    for raw in values {
        let value: f64 = raw
            .trim()
            .parse()
            .map_err(|_| LabError::config(axis, format!("sweep value `{raw}` is not numeric")))?;
        let mut overrides = base.clone();
        overrides.push((axis.to_string(), raw.trim().to_string()));
        let mut scenario = Scenario::parse(&text, &overrides)?;
        scenario.enable(&extra);
        let loaded = scenario.load()?;
        let reports = loaded.run_all()?;
        eprintln!("{axis} = {raw}");
        passed &= summarize(&reports);
        for r in &reports {
            rows.push(format!("{value},{}", r.csv_row()));
        }
        runs.push(json!({ "value": value, "fingerprint": loaded.fingerprint(), "reports": reports }));
    }
    fs::create_dir_all(&common.out)?;
    let mut csv = timestamp_line();
    csv.push_str(&format!("{axis},{}\n", Report::CSV_HEADER));
    for row in rows {
        csv.push_str(&row);
        csv.push('\n');
    }
    write(&common.out.join("sweep.csv"), &csv)?;
    let bundle = json!({ "axis": axis, "passed": passed, "runs": runs });
    write(&common.out.join("sweep.json"), &serde_json::to_string_pretty(&bundle).expect("json"))?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run(c) | Command::Sweep { common: c, .. } => c,
    };
    if let Err(e) = configure_workers(common.workers) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let outcome = match &cli.command {
        Command::Run(c) => run(c),
        Command::Sweep { common, axis, values } => sweep(common, axis, values),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
