//! `mousse` command line: run experiments, sweep learning rates, summarize
//! records, and exercise the built-in oracle checks.
//!
//! Exit codes: 0 success, 1 config error, 2 divergence or numeric failure,
//! 3 i/o error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mousse::harness::{
    excessive_loss, grid_search, run_experiment, steps_to_threshold, GridOutcome, RunConfig,
    RunRecord,
};
use mousse::Error;

#[derive(Parser)]
#[command(name = "mousse", version, about = "Matrix-optimizer benchmark harness")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute one run from a config file and write its record.
    Run {
        config: PathBuf,
        /// Output directory for records.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Execute the learning-rate grid declared by `lr_grid` in the config.
    Grid {
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for independent grid points.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Summarize JSON records: final losses, excessive loss, steps to a
    /// threshold (defaulting to the first record's final eval loss).
    Report {
        records: Vec<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Io(_) => 3,
                Error::Numeric(_) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn dispatch() -> mousse::Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run {
            config,
            out,
            seed,
            format,
        } => cmd_run(&config, &out, seed, format),
        Cmd::Grid {
            config,
            out,
            seed,
            threads,
            format,
        } => cmd_grid(&config, &out, seed, threads, format),
        Cmd::Report { records, threshold } => cmd_report(&records, threshold),
        Cmd::Selftest => selftest::run(),
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> mousse::Result<RunConfig> {
    let cfg = RunConfig::from_file(path)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn write_record(record: &RunRecord, out: &Path, stem: &str, format: Format) -> mousse::Result<()> {
    std::fs::create_dir_all(out)?;
    if matches!(format, Format::Csv | Format::Both) {
        record.write_csv(&out.join(format!("{stem}.csv")))?;
    }
    if matches!(format, Format::Json | Format::Both) {
        record.write_json(&out.join(format!("{stem}.json")))?;
    }
    Ok(())
}

fn cmd_run(config: &Path, out: &Path, seed: Option<u64>, format: Format) -> mousse::Result<ExitCode> {
    let cfg = load_config(config, seed)?;
    let record = run_experiment(&cfg)?;
    write_record(&record, out, &stem_of(config), format)?;
    println!(
        "{} on {} ({}): final_eval_loss={:e} steps={} wall={:.1?} mean_step={:.1?}{}",
        record.meta.optimizer,
        record.meta.problem,
        record.meta.schedule,
        record.summary.final_eval_loss,
        record.summary.steps_completed,
        record.timing.wall,
        record.timing.mean_step,
        if record.summary.diverged { " DIVERGED" } else { "" },
    );
    Ok(if record.summary.diverged {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_grid(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    threads: usize,
    format: Format,
) -> mousse::Result<ExitCode> {
    let cfg = load_config(config, seed)?;
    let outcome: GridOutcome = grid_search(&cfg, threads)?;
    let stem = stem_of(config);
    for point in &outcome.runs {
        write_record(
            &point.record,
            out,
            &format!("{stem}_lr{:e}", point.lr),
            format,
        )?;
        println!(
            "lr={:e}: final_eval_loss={:e} steps={}{}",
            point.lr,
            point.record.summary.final_eval_loss,
            point.record.summary.steps_completed,
            if point.record.summary.diverged {
                " DIVERGED"
            } else {
                ""
            },
        );
    }
    match outcome.best_record() {
        Some(best) => {
            println!(
                "best: lr={:e} final_eval_loss={:e}",
                best.lr, best.record.summary.final_eval_loss
            );
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!("best: none (all runs diverged)");
            Ok(ExitCode::from(2))
        }
    }
}

fn cmd_report(records: &[PathBuf], threshold: Option<f64>) -> mousse::Result<ExitCode> {
    if records.is_empty() {
        return Err(Error::Config("report needs at least one record".into()));
    }
    let loaded: Vec<RunRecord> = records
        .iter()
        .map(|p| RunRecord::from_json_file(p))
        .collect::<mousse::Result<_>>()?;
    // The comparison baseline is the first record unless a threshold is given.
    let threshold = threshold.unwrap_or(loaded[0].summary.final_eval_loss);
    println!("threshold: {threshold:e}");
    println!("optimizer  schedule  final_eval_loss  steps_to_threshold  excessive_loss");
    for record in &loaded {
        let st = steps_to_threshold(record, threshold)
            .map(|s| s.to_string())
            .unwrap_or_else(|| "-".into());
        let dl = match excessive_loss(record) {
            Ok(dl) => {
                let anomaly = if dl < -1e-6 { " (anomaly: negative)" } else { "" };
                format!("{dl:e}{anomaly}")
            }
            Err(_) => "-".into(),
        };
        println!(
            "{:<10} {:<9} {:<16e} {:<19} {}{}",
            record.meta.optimizer,
            record.meta.schedule,
            record.summary.final_eval_loss,
            st,
            dl,
            if record.summary.diverged { "  DIVERGED" } else { "" },
        );
    }
    Ok(ExitCode::SUCCESS)
}

mod selftest {
    use super::*;
    use mousse::linalg::{rand_matrix, RandKind};
    use mousse::spectral::{msign_exact, msign_ns};
    use mousse::testbed::{finite_diff_grad, MlpSpec};
    use mousse::{KronQuadratic, Matrix, MlpProblem, NsConfig, ScheduleSpec};

    fn check(name: &str, ok: bool, failures: &mut u32) {
        println!("selftest: {name} ... {}", if ok { "ok" } else { "FAIL" });
        if !ok {
            *failures += 1;
        }
    }

    pub fn run() -> mousse::Result<ExitCode> {
        let mut failures = 0u32;

        // Matrix sign against the exact polar oracle.
        let mut worst: f64 = 0.0;
        for seed in 0..10u64 {
            let g: Matrix = rand_matrix(12, 9, seed, RandKind::Conditioned { kappa: 50.0 })?;
            let ns = msign_ns(&g, &NsConfig::convergent())?;
            let exact = msign_exact(&g)?;
            worst = worst.max((&ns - &exact).frobenius_norm());
        }
        check("msign newton-schulz vs exact oracle", worst < 1e-3, &mut failures);

        // Analytic gradients against central finite differences.
        let quad = KronQuadratic::conditioned(6, 5, 100.0, 0.0, 3)?;
        let w: Matrix = rand_matrix(6, 5, 4, RandKind::Gaussian)?;
        let (_, grad) = quad.eval(&w, 0)?;
        let fd = finite_diff_grad(|m| quad.eval_noiseless(m).unwrap().0, &w, 1e-5);
        let rel = grad.max_abs_diff(&fd) / fd.max_abs();
        check("kron quadratic gradient vs finite differences", rel < 1e-6, &mut failures);

        let mlp = MlpProblem::teacher_student(MlpSpec::default(), 5)?;
        let params = mlp.initial_params();
        let (_, grads) = mlp.eval(&params, 0)?;
        let fd = finite_diff_grad(
            |m| {
                let ps = vec![m.clone(), params[1].clone()];
                mlp.eval(&ps, 0).unwrap().0
            },
            &params[0],
            1e-5,
        );
        let rel = grads[0].max_abs_diff(&fd) / fd.max_abs().max(1e-9);
        check("mlp gradient vs finite differences", rel < 1e-4, &mut failures);

        // Schedule anchors.
        let cosine = ScheduleSpec::cosine(10_000, 0.1, 3e-2, 0.0)?;
        let wsd = ScheduleSpec::wsd(10_000, 0.1, 0.1, 1e-2, 0.0)?;
        check(
            "schedule anchors (peak at warmup end, zero at final, flat plateau)",
            cosine.lr_at(1_000)? == 3e-2
                && cosine.lr_at(10_000)? == 0.0
                && wsd.lr_at(5_000)? == 1e-2,
            &mut failures,
        );

        // Tiny deterministic run.
        let cfg = RunConfig::from_str(
            "problem = kron\nrows = 8\ncols = 8\noptimizer = mousse\ntotal_steps = 40\npeak_lr = 0.1\nlog_every = 5\n",
        )?;
        let a = run_experiment(&cfg)?;
        let b = run_experiment(&cfg)?;
        check("run determinism (byte-identical csv)", a.to_csv() == b.to_csv(), &mut failures);

        if failures == 0 {
            println!("selftest: all checks passed");
            Ok(ExitCode::SUCCESS)
        } else {
            println!("selftest: {failures} check(s) failed");
            Ok(ExitCode::from(2))
        }
    }
}
