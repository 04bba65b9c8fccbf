mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use shortcut_core::experiments::sweep::teacher_notes;
use shortcut_core::experiments::trajectory::{fixed_start, write_trajectory_files};
use shortcut_core::experiments::{
    certify_gradients, success_rate_sweep, teacher_for_k, teacher_for_k_generic, CertifyConfig,
    SweepConfig, TrajectoryVariant, Variant,
};
use shortcut_core::verification::{negative_control_k, parse_monitors, Monitor};
use shortcut_core::{
    check_dissipativity, monitor_trajectory, run, sample_init, Error, RegionSpec, Result,
    RunConfig, StepSchedule, Thresholds,
};

use config::FileConfig;

#[derive(Parser)]
#[command(
    name = "shortcut",
    version,
    about = "Shortcut teacher-student experiments"
)]
struct Cli {
    /// TOML manifest with one table per subcommand; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel trials and sampling.
    #[arg(long, global = true, env = "SHORTCUT_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trajectory; writes CSV and SVG when --out is given.
    Run(RunArgs),
    /// Success rates over patch counts and variants.
    Sweep(SweepArgs),
    /// Dissipativity inequality on sampled region points.
    Verify(VerifyArgs),
    /// Closed-form gradients against finite differences and Monte Carlo.
    CheckGrad(CheckGradArgs),
    /// Print the experiment teacher for k.
    ShowTeacher(ShowTeacherArgs),
}

#[derive(Args)]
struct RunArgs {
    /// ssw, constant or analysis.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// fixed (k = 25 only) or random.
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stage-one constant for the analysis schedule.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    stride: Option<u64>,
    #[arg(long)]
    trap_check_every: Option<u64>,
    /// Comma-separated monitor ids; any violation exits with 2.
    #[arg(long)]
    monitors: Option<String>,
    /// Output stem for <stem>.csv and <stem>.svg.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the JSON summary here as well as to stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated patch counts.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated: resnet_ssw, resnet_constant, cnn_baseline.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    #[arg(long)]
    max_iters: Option<u64>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    cnn_eta: Option<f64>,
    #[arg(long)]
    trap_check_every: Option<u64>,
    /// Admit untabulated k.
    #[arg(long)]
    generic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Wall-time metadata; kept out of the report so it stays reproducible.
    #[arg(long)]
    timing_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// A, K or AmMdelta.
    #[arg(long)]
    region: Option<String>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    big_m: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Experiment teacher with this many patches.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Sample K without its output-weight condition; succeeds only if the
    /// checker finds violations.
    #[arg(long)]
    negative_control: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckGradArgs {
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long)]
    fd_step: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ShowTeacherArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    generic: bool,
}

/// Pass: exit 0. Fail: exit 2.
type Verdict = bool;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<Verdict> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Run(a) => cmd_run(a, file.run),
        Command::Sweep(a) => cmd_sweep(a, file.sweep),
        Command::Verify(a) => cmd_verify(a, file.verify),
        Command::CheckGrad(a) => cmd_check_grad(a, file.check_grad),
        Command::ShowTeacher(a) => cmd_show_teacher(a, file.show_teacher),
    }
}

fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    // A closed pipe (e.g. `| head`) is not an error for a report printer.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    if let Some(path) = path {
        write_text(path, &text)?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, format!("{text}\n")).map_err(|e| Error::io(path, e))
}

fn cmd_run(a: RunArgs, f: config::RunSection) -> Result<Verdict> {
    let variant = a.variant.or(f.variant).unwrap_or_else(|| "ssw".into());
    let k = a.k.or(f.k).unwrap_or(25);
    let p = a.p.or(f.p).unwrap_or(8);
    let init = a.init.or(f.init).unwrap_or_else(|| "fixed".into());
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let mut config = RunConfig::new(
        a.max_iters.or(f.max_iters).unwrap_or(1_000_000),
        a.stride.or(f.stride).unwrap_or(10),
    );
    config.trap_check_every = a.trap_check_every.or(f.trap_check_every);
    let monitors = match (a.monitors, f.monitors) {
        (Some(s), _) => parse_monitors(&s)?,
        (None, Some(v)) => v.iter().map(|s| Monitor::parse(s)).collect::<Result<_>>()?,
        (None, None) => Vec::new(),
    };

    let (teacher, start) = match init.as_str() {
        "fixed" => {
            if k != 25 || p != 8 {
                return Err(Error::Config(
                    "fixed init exists only for k = 25, p = 8".into(),
                ));
            }
            fixed_start()?
        }
        "random" => {
            let t = teacher_for_k_generic(k, p)?;
            let s = sample_init(&t, seed);
            (t, s)
        }
        other => return Err(Error::Config(format!("unknown init '{other}'"))),
    };
    let schedule = match variant.as_str() {
        "analysis" => StepSchedule::analysis_rates(&teacher, a.c.or(f.c).unwrap_or(1.0), None),
        v => TrajectoryVariant::parse(v)?.schedule(k),
    };
    let traj = run(&start, &teacher, &schedule, &config)?;
    if let Some(stem) = a.out.or(f.out) {
        let title = format!("k = {k}, {variant} schedule: {}", traj.outcome.label());
        write_trajectory_files(&traj, &stem, &title)?;
    }
    let report = (!monitors.is_empty()).then(|| monitor_trajectory(&traj, &teacher, &monitors));
    let clean = report.as_ref().is_none_or(|r| r.is_clean());
    emit(
        &json!({
            "k": k,
            "p": p,
            "schedule": schedule,
            "outcome": traj.outcome,
            "failure": traj.failure,
            "final": traj.records.last(),
            "monitors": report,
            "notes": teacher_notes(&teacher),
        }),
        a.json.or(f.json).as_deref(),
    )?;
    Ok(clean)
}

fn cmd_sweep(a: SweepArgs, f: config::SweepSection) -> Result<Verdict> {
    let d = SweepConfig::default();
    let variants = match a.variants.or(f.variants) {
        Some(v) => v.iter().map(|s| Variant::parse(s)).collect::<Result<_>>()?,
        None => d.variants.clone(),
    };
    let td = Thresholds::default();
    let config = SweepConfig {
        k_values: a.k.or(f.k).unwrap_or(d.k_values),
        n_trials: a.trials.or(f.trials).unwrap_or(d.n_trials),
        base_seed: a.seed.or(f.seed).unwrap_or(d.base_seed),
        variants,
        thresholds: Thresholds {
            global: f.global_tol.unwrap_or(td.global),
            phi_gap: f.phi_gap.unwrap_or(td.phi_gap),
            w_gap: f.w_gap.unwrap_or(td.w_gap),
            a_rel: f.a_rel.unwrap_or(td.a_rel),
        },
        max_iters: a.max_iters.or(f.max_iters).unwrap_or(d.max_iters),
        p: a.p.or(f.p).unwrap_or(d.p),
        cnn_eta: a.cnn_eta.or(f.cnn_eta).unwrap_or(d.cnn_eta),
        trap_check_every: a
            .trap_check_every
            .or(f.trap_check_every)
            .or(d.trap_check_every),
        allow_generic: a.generic || f.generic.unwrap_or(false),
    };
    let (report, timing) = success_rate_sweep(&config)?;
    emit(&report, a.out.or(f.out).as_deref())?;
    if let Some(path) = a.timing_out.or(f.timing_out) {
        let text =
            serde_json::to_string_pretty(&timing).map_err(|e| Error::Config(e.to_string()))?;
        write_text(&path, &text)?;
    }
    Ok(true)
}

fn parse_region(
    name: &str,
    m: Option<f64>,
    big_m: Option<f64>,
    delta: Option<f64>,
    teacher_m: (f64, f64),
) -> Result<RegionSpec> {
    let region = match name {
        "A" => RegionSpec::A,
        "K" => RegionSpec::K {
            m: m.ok_or_else(|| Error::Config("region K needs --m".into()))?,
        },
        "AmMdelta" => RegionSpec::AmMdelta {
            m: m.unwrap_or(teacher_m.0),
            big_m: big_m.unwrap_or(teacher_m.1),
            delta: delta.unwrap_or(0.01),
        },
        other => {
            return Err(Error::Config(format!(
                "unknown region '{other}' (A, K, AmMdelta)"
            )))
        }
    };
    region.validate()?;
    Ok(region)
}

fn cmd_verify(a: VerifyArgs, f: config::VerifySection) -> Result<Verdict> {
    let k = a.k.or(f.k).unwrap_or(25);
    let p = a.p.or(f.p).unwrap_or(8);
    let teacher = teacher_for_k_generic(k, p)?;
    let name = a.region.or(f.region).unwrap_or_else(|| "A".into());
    let region = parse_region(
        &name,
        a.m.or(f.m),
        a.big_m.or(f.big_m),
        a.delta.or(f.delta),
        (teacher.m(), teacher.big_m()),
    )?;
    let points = a.points.or(f.points).unwrap_or(10_000);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = a.out.or(f.out);
    if a.negative_control || f.negative_control.unwrap_or(false) {
        let RegionSpec::K { m } = region else {
            return Err(Error::Config("negative control applies to region K".into()));
        };
        let report = negative_control_k(m, &teacher, points, seed)?;
        emit(&report, out.as_deref())?;
        return Ok(report.violation_count > 0);
    }
    let report = check_dissipativity(&region, &teacher, points, seed)?;
    emit(&report, out.as_deref())?;
    Ok(report.passed())
}

fn cmd_check_grad(a: CheckGradArgs, f: config::CheckGradSection) -> Result<Verdict> {
    let d = CertifyConfig::default();
    let config = CertifyConfig {
        n_states: a.states.or(f.states).unwrap_or(d.n_states),
        n_samples: a.samples.or(f.samples).unwrap_or(d.n_samples),
        seed: a.seed.or(f.seed).unwrap_or(d.seed),
        fd_step: a.fd_step.or(f.fd_step).unwrap_or(d.fd_step),
        ..d
    };
    let report = certify_gradients(&config)?;
    emit(
        &json!({ "config": config, "report": report }),
        a.out.or(f.out).as_deref(),
    )?;
    Ok(report.passed())
}

fn cmd_show_teacher(a: ShowTeacherArgs, f: config::ShowTeacherSection) -> Result<Verdict> {
    let k = a.k.or(f.k).unwrap_or(25);
    let p = a.p.or(f.p).unwrap_or(8);
    let teacher = if a.generic || f.generic.unwrap_or(false) {
        teacher_for_k_generic(k, p)?
    } else {
        teacher_for_k(k, p)?
    };
    emit(
        &json!({ "teacher": teacher, "notes": teacher_notes(&teacher) }),
        None,
    )?;
    Ok(true)
}
