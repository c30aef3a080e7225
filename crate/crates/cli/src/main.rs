use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use memqa_core::corpus::{format_babi, generate_task, TaskFamily, TaskSpec};
use memqa_core::harness::{
    emit_table, gradient_suite, load_tasks, read_checkpoint_file, train_experiment, write_checkpoint_file,
    CurvePoint, EvalReport, ExperimentConfig, TrainedExperiment,
};

const GRADIENT_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "memqa", version, about = "Synthetic question answering with memory-augmented networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated stories in the tab-separated story format.
    Generate {
        #[arg(long)]
        family: TaskFamily,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the configured model on every task and save a checkpoint.
    /// The learning curve goes to `<out>.curve.csv`.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on the test split and write a report CSV.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Combine report CSVs into one table, one column per file (named by
    /// the file stem). Text goes to `--out`, CSV to `<out>.csv`.
    Table {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::parse(&text).with_context(|| format!("in {}", path.display()))
}

fn run(command: Command) -> Result<bool> {
    let start = Instant::now();
    match command {
        Command::Generate { family, n, seed, out } => {
            let stories = generate_task(&TaskSpec::default_for(family, seed), n)?;
            write(&out, &format_babi(&stories, true))?;
        }
        Command::Train { config, out } => {
            let cfg = read_config(&config)?;
            let data = load_tasks(&cfg)?;
            let trained = train_experiment(&cfg, &data)?;
            write_checkpoint_file(&out, &trained.records())?;
            write(&with_suffix(&out, ".curve.csv"), &CurvePoint::to_csv(&trained.curve))?;
        }
        Command::Eval { config, ckpt, report } => {
            let cfg = read_config(&config)?;
            let data = load_tasks(&cfg)?;
            let records = read_checkpoint_file(&ckpt)?;
            let trained = TrainedExperiment::from_records(&cfg, &data, &records)?;
            let result = trained.evaluate(&data)?;
            write(&report, &result.to_csv())?;
            print!("{}", result.to_csv());
        }
        Command::Table { reports, out } => {
            let mut columns = Vec::with_capacity(reports.len());
            for path in &reports {
                let name = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .with_context(|| format!("no file name in {}", path.display()))?
                    .to_string();
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let report = EvalReport::from_csv(&text, &name).with_context(|| format!("in {}", path.display()))?;
                columns.push((name, report));
            }
            let table = emit_table(&columns)?;
            write(&out, &table.text)?;
            write(&with_suffix(&out, ".csv"), &table.csv)?;
            print!("{}", table.text);
        }
        Command::Gradcheck { trials, seed } => {
            if trials == 0 {
                bail!("--trials must be positive");
            }
            let results = gradient_suite(trials, seed)?;
            let mut ok = true;
            for r in &results {
                let passed = r.passed(GRADIENT_TOLERANCE);
                ok &= passed;
                println!(
                    "{:<24} {:>4} trials  max rel err {:.2e}  {}",
                    r.name,
                    r.trials,
                    r.max_rel_error,
                    if passed { "ok" } else { "FAIL" }
                );
            }
            eprintln!("wall time {:.1}s", start.elapsed().as_secs_f64());
            return Ok(ok);
        }
    }
    eprintln!("wall time {:.1}s", start.elapsed().as_secs_f64());
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
