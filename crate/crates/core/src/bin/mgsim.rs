//! `mgsim`: run, sweep and validate microgrid scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use microgrid_svc::control::ControllerKind;
use microgrid_svc::sim::trace::{DgSample, TraceRecord};
use microgrid_svc::sim::{self, ControlMode, RunOutput, Scenario, ScenarioFile};
use microgrid_svc::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_BLOWUP: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "mgsim", version, about = "Islanded microgrid secondary-control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write its trace.
    Run(RunArgs),
    /// Run a scenario at several noise levels, with and without the observer.
    Sweep(SweepArgs),
    /// Load and validate a scenario, printing its summary.
    Validate {
        /// Scenario file, or `builtin:reference`, `builtin:tradeoff`, `builtin:chain<N>`.
        #[arg(long)]
        config: String,
        /// Also print the fully expanded scenario document.
        #[arg(long)]
        dump: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ftsm,
    Baseline,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Voltage,
    Tradeoff,
}

#[derive(clap::Args)]
struct Overrides {
    /// Scenario file, or `builtin:reference`, `builtin:tradeoff`, `builtin:chain<N>`.
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    observer: Option<OnOff>,
    #[arg(long, value_enum)]
    controller: Option<Kind>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Plant step (s); must divide the control period.
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated time (s).
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(clap::Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: Overrides,
    /// Trace CSV.
    #[arg(long)]
    out: PathBuf,
    /// Metrics summary; defaults to the trace path with a `.metrics.toml` suffix.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Directory for column subsets of the trace (voltages, observer,
    /// sharing, surfaces).
    #[arg(long)]
    slices: Option<PathBuf>,
    /// Exit with status 3 when the steady-state properties are not met.
    #[arg(long)]
    check: bool,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: Overrides,
    /// Comma-separated noise variances (V^2).
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,1")]
    variances: Vec<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn load(config: &str) -> Result<ScenarioFile, Error> {
    match config.strip_prefix("builtin:") {
        Some("reference") => Ok(ScenarioFile::reference()),
        Some("tradeoff") => Ok(ScenarioFile::tradeoff()),
        Some(other) => match other.strip_prefix("chain").and_then(|n| n.parse::<usize>().ok()) {
            Some(n) if n >= 2 => Ok(ScenarioFile::chain(n)),
            _ => Err(microgrid_svc::ConfigError::new("--config", format!("unknown built-in scenario `{other}`")).into()),
        },
        None => ScenarioFile::load(config),
    }
}

fn build(o: &Overrides) -> Result<Scenario, Error> {
    let mut f = load(&o.config)?;
    if let Some(seed) = o.seed {
        f.simulation.seed = seed;
    }
    if let Some(dt) = o.dt {
        f.simulation.dt_plant = dt;
    }
    if let Some(d) = o.duration {
        f.simulation.duration = d;
        f.events.retain(|e| e.time <= d);
    }
    if let Some(obs) = o.observer {
        f.observer.enabled = matches!(obs, OnOff::On);
    }
    if let Some(k) = o.controller {
        f.controller.kind = match k {
            Kind::Ftsm => ControllerKind::Ftsm,
            Kind::Baseline => ControllerKind::Baseline,
        };
    }
    if let Some(m) = o.mode {
        f.controller.mode = match m {
            Mode::Voltage => ControlMode::Voltage,
            Mode::Tradeoff => ControlMode::Tradeoff,
        };
    }
    f.build()
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn summary(out: &RunOutput) -> String {
    #[derive(serde::Serialize)]
    struct Summary<'a> {
        #[serde(skip_serializing_if = "Option::is_none")]
        blowup: Option<String>,
        plant_steps: usize,
        saturated_instants: usize,
        covariance_resets: usize,
        max_covariance_asymmetry: f64,
        max_kcl_residual: f64,
        final_power_residual: f64,
        metrics: &'a sim::Metrics,
    }
    let d = &out.diagnostics;
    let s = Summary {
        blowup: out.blowup.as_ref().map(|e| e.to_string()),
        plant_steps: d.plant_steps,
        saturated_instants: d.saturated_instants,
        covariance_resets: d.covariance_resets.len(),
        max_covariance_asymmetry: d.max_covariance_asymmetry,
        max_kcl_residual: d.max_kcl_residual,
        final_power_residual: d.final_power_residual,
        metrics: &out.metrics,
    };
    toml::to_string_pretty(&s).expect("summary serializes")
}

fn print_windows(out: &RunOutput) {
    for w in out.metrics.available() {
        let settling = w.settling.map_or("not settled".to_string(), |t| format!("{t:.4} s"));
        println!(
            "[{:6.3}, {:6.3}] {:<28} settling {:<12} max |mean err| {:.3} V  max std {:.3} V  sharing {:.2}%",
            w.start,
            w.end,
            w.label,
            settling,
            w.max_mean_error(),
            w.max_std(),
            100.0 * w.dispersion_rel
        );
    }
}

fn export_slices(out: &RunOutput, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let t = &out.trace;
    type Col = (&'static str, fn(&DgSample) -> f64);
    let voltages: [Col; 3] = [("v_od", |d| d.v_od), ("v_oq", |d| d.v_oq), ("V_n", |d| d.v_n)];
    let observer: [Col; 5] = [
        ("xhat1", |d| d.x_hat[0]),
        ("xhat2", |d| d.x_hat[1]),
        ("vdot_true", |d| d.vdot_true),
        ("xhat3", |d| d.x_hat[2]),
        ("xi_true", |d| d.xi_true),
    ];
    let sharing: [Col; 2] = [("P", |d| d.p), ("Q", |d| d.q)];
    let surfaces: [Col; 3] = [("s", |d| d.s), ("e1", |d| d.e1), ("e2", |d| d.e2)];
    let lyapunov: [(&str, fn(&TraceRecord) -> f64); 1] = [("lyapunov", |r| r.lyapunov)];
    t.export_slice(dir.join("voltages.csv"), &voltages, &[])?;
    t.export_slice(dir.join("observer.csv"), &observer, &[])?;
    t.export_slice(dir.join("sharing.csv"), &sharing, &[])?;
    t.export_slice(dir.join("surfaces.csv"), &surfaces, &lyapunov)?;
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<u8, Error> {
    let sc = build(&a.scenario)?;
    let out = sim::run(&sc)?;
    out.trace.export_csv(&a.out)?;
    let metrics_path = a.metrics.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".metrics.toml");
        p.into()
    });
    write(&metrics_path, &summary(&out))?;
    if let Some(dir) = &a.slices {
        export_slices(&out, dir)?;
    }
    print_windows(&out);
    if let Some(e) = &out.blowup {
        eprintln!("error: {e}");
        return Ok(EXIT_BLOWUP);
    }
    if a.check {
        let violations = sim::check_properties(&out.metrics, &sc, 0.5, 0.02);
        for v in &violations {
            eprintln!("check: {v}");
        }
        if !violations.is_empty() {
            return Ok(EXIT_CHECK);
        }
        println!("check: all properties hold");
    }
    Ok(0)
}

fn cmd_sweep(a: &SweepArgs) -> Result<u8, Error> {
    let sc = build(&a.scenario)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let points = sim::run_noise_sweep(&sc, &a.variances)?;
    let mut code = 0;
    for p in &points {
        for (tag, out) in [("observer", &p.with_observer), ("raw", &p.without_observer)] {
            let stem = format!("var{}_{tag}", p.variance);
            out.trace.export_csv(a.out_dir.join(format!("{stem}.csv")))?;
            write(&a.out_dir.join(format!("{stem}.metrics.toml")), &summary(out))?;
            let worst_std = out.metrics.available().map(|w| w.max_std()).fold(0.0, f64::max);
            let worst_mean = out.metrics.available().map(|w| w.max_mean_error()).fold(0.0, f64::max);
            println!("variance {:<6} {tag:<8} max |mean err| {worst_mean:.3} V  max std {worst_std:.3} V", p.variance);
            if let Some(e) = &out.blowup {
                eprintln!("error ({stem}): {e}");
                code = EXIT_BLOWUP;
            }
        }
    }
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate { config, dump } => load(config).and_then(|f| {
            let sc = f.build()?;
            sim::assemble_system(&sc)?;
            print!("{sc}");
            if *dump {
                print!("{}", f.to_toml());
            }
            Ok(0)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) => EXIT_BLOWUP,
                _ => EXIT_CONFIG,
            })
        }
    }
}
