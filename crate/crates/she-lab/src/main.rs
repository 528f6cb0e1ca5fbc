//! Command-line front end: kernel tables, noise statistics, experiment runs,
//! re-analysis of stored runs, regime classification, comparison bounds and
//! parameter sweeps.
//!
//! Exit codes: 0 on completion, 2 on configuration errors, 3 when a run
//! completes but its local-existence probe certifies no horizon (the report is
//! still written, flagged `incomplete`).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use she_lab::config::{load_config, load_preset, ExperimentPreset, LadderSpec, PRESET_NAMES};
use she_lab::error::SheError;
use she_lab::experiment::{run_experiment, sweep, sweep_csv, SweepBudget};
use she_lab::kernel::KernelSpec;
use she_lab::moments::{inf_over_grid, lyapunov_estimate, MomentSeries};
use she_lab::noise::{integrate_noncompensated, preset_power, preset_uniform, sample_points};
use she_lab::odes::{
    compensated_bound_ode, compensated_seed, noncompensated_blowup_time,
    noncompensated_closed_form, regime_classify, ComparisonParams, InitialClass, NoiseKind,
    SigmaClass,
};

#[derive(Parser)]
#[command(name = "she-lab", about = "Stochastic heat equation simulation and bounds laboratory")]
struct Cli {
    /// Master seed for all stochastic subcommands.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Directory for reports and CSV tables.
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Suggested worker-thread count (0 = library default).
    #[arg(long, global = true, default_value_t = 0)]
    threads_hint: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate the stable kernel with its two-sided estimate.
    Kernel(KernelArgs),
    /// Sample the Poisson point measure and report count/integral statistics.
    Noise(NoiseArgs),
    /// Run an experiment preset or config file over its refinement ladder.
    Simulate(SimulateArgs),
    /// Re-analyze the moment tables of a stored run directory.
    Analyze(AnalyzeArgs),
    /// Print the regime and citation tag for a parameter corner.
    Classify(ClassifyArgs),
    /// Tabulate a comparison bound F(t) / Y(t) and its blow-up time.
    Bounds(BoundsArgs),
    /// Regime map over a grid of (alpha, exponent, lambda).
    Sweep(SweepArgs),
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Comma-separated times.
    #[arg(long, value_delimiter = ',', default_value = "0.1,1.0")]
    t: Vec<f64>,
    /// Comma-separated positions (radii).
    #[arg(long, value_delimiter = ',', default_value = "0.0,1.0,4.0")]
    x: Vec<f64>,
    /// Also verify the self-similar scaling law on the requested grid.
    #[arg(long)]
    check_scaling: bool,
    /// Calibrate the sandwich constants before tabulating (otherwise c = 1).
    #[arg(long)]
    calibrate_bounds: bool,
}

#[derive(Args)]
struct NoiseArgs {
    #[arg(long, value_enum, default_value_t = NuPreset::Uniform)]
    nu_preset: NuPreset,
    #[arg(long, default_value_t = 1e-3)]
    eps_min: f64,
    /// Time window [0, window].
    #[arg(long, default_value_t = 1.0)]
    window: f64,
    /// Spatial box [-box, box].
    #[arg(long = "box", default_value_t = 1.0)]
    space_box: f64,
    #[arg(long, default_value_t = 100)]
    replicas: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum NuPreset {
    Uniform,
    Power,
}

#[derive(Args)]
struct SimulateArgs {
    /// Structured-text config file with [kernel], [noise], [sigma], [grid], [time] sections.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Override the replica count on every ladder rung.
    #[arg(long)]
    replicas: Option<usize>,
    /// Copy the finest rung's moment table to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run directory produced by `simulate` (report.json + rung CSVs).
    #[arg(long)]
    runs: PathBuf,
    /// Moment order label for the re-fit (informational; tables store orders 1 and 2).
    #[arg(long, default_value_t = 2)]
    p: u32,
    /// Fraction of the record used for the growth re-fit, from the end.
    #[arg(long, default_value_t = 0.5)]
    fit_window: f64,
    /// Print the per-rung ladder summary as well.
    #[arg(long)]
    ladder: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Growth exponent of sigma (beta or gamma; 1 = Lipschitz).
    #[arg(long, default_value_t = 2.0)]
    exponent: f64,
    #[arg(long, value_enum, default_value_t = NoiseKindArg::Noncompensated)]
    noise: NoiseKindArg,
    #[arg(long, value_enum, default_value_t = InitialArg::BoundedBelow)]
    u0: InitialArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseKindArg {
    Compensated,
    Noncompensated,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialArg {
    BoundedBelow,
    PositiveMeasure,
    Zero,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_enum, default_value_t = NoiseKindArg::Noncompensated)]
    noise: NoiseKindArg,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    exponent: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    l_sigma: f64,
    /// Lower bound of the initial data (non-compensated) / forcing constant.
    #[arg(long, default_value_t = 1.0)]
    c1: f64,
    /// Kernel lower-bound constant; pass the calibrated value for honest bounds.
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 50)]
    rows: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "1.5,2.0")]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1.0,1.5,2.0")]
    exponents: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.025,1.0")]
    lambdas: Vec<f64>,
    #[arg(long, default_value_t = 24)]
    replicas: usize,
    #[arg(long, default_value_t = 0.3)]
    horizon: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads_hint > 0 {
        // Best effort: a second invocation in-process would fail, which is fine.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads_hint)
            .build_global();
    }
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                SheError::Config(_) | SheError::InvalidArgument(_) | SheError::Domain(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, SheError> {
    match &cli.cmd {
        Cmd::Kernel(a) => cmd_kernel(a),
        Cmd::Noise(a) => cmd_noise(a, cli.seed),
        Cmd::Simulate(a) => cmd_simulate(a, cli.seed, &cli.out_dir),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Classify(a) => cmd_classify(a),
        Cmd::Bounds(a) => cmd_bounds(a),
        Cmd::Sweep(a) => cmd_sweep(a, cli.seed, &cli.out_dir),
    }
}

fn cmd_kernel(a: &KernelArgs) -> Result<ExitCode, SheError> {
    let spec = KernelSpec::new(a.alpha, a.dim)?;
    let consts = if a.calibrate_bounds {
        let c = spec.calibrate_bounds((1e-2, 1e2), 1e2, 24, 24)?;
        eprintln!("calibrated: c_lower={:.6e} c_upper={:.6e}", c.c_lower, c.c_upper);
        c
    } else {
        she_lab::kernel::KernelBoundConstants::unit()
    };
    if a.check_scaling {
        let mut worst: f64 = 0.0;
        for &t in &a.t {
            for &r in &a.x {
                // p(t, x) = t^{-d/alpha} p(1, t^{-1/alpha} x)
                let lhs = spec.density_radial(t, r)?;
                let rhs = t.powf(-(a.dim as f64) / a.alpha)
                    * spec.density_radial(1.0, r * t.powf(-1.0 / a.alpha))?;
                let denom = lhs.abs().max(1e-300);
                worst = worst.max((lhs - rhs).abs() / denom);
            }
        }
        eprintln!("scaling law: worst relative deviation {worst:.3e}");
    }
    println!("t,x,p,lower,upper");
    for &t in &a.t {
        for &r in &a.x {
            let p = spec.density_radial(t, r)?;
            let (lo, hi) = spec.estimate_bounds(&consts, t, r)?;
            println!("{t},{r},{p:e},{lo:e},{hi:e}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_noise(a: &NoiseArgs, seed: u64) -> Result<ExitCode, SheError> {
    let spec = match a.nu_preset {
        NuPreset::Uniform => preset_uniform(),
        NuPreset::Power => preset_power(a.eps_min)?,
    };
    let shells = 0..spec.shell_count();
    println!("replica,count,sum_h,sum_h2");
    let mut counts = Vec::with_capacity(a.replicas);
    for rep in 0..a.replicas {
        let pts = sample_points(
            &spec,
            (0.0, a.window),
            (-a.space_box, a.space_box),
            shells.clone(),
            seed,
            &[rep as u64],
        )?;
        let sum_h = integrate_noncompensated(|_, _, h| h, &pts);
        let sum_h2 = integrate_noncompensated(|_, _, h| h * h, &pts);
        println!("{rep},{},{sum_h},{sum_h2}", pts.len());
        counts.push(pts.len() as f64);
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let expected = spec.shells_mass(shells) * a.window * 2.0 * a.space_box;
    eprintln!("mean count {mean:.3} (expected {expected:.3}) over {n} replicas");
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, out_dir: &Path) -> Result<ExitCode, SheError> {
    let mut preset = match (&a.preset, &a.config) {
        (Some(name), _) => load_preset(name)?,
        (None, Some(path)) => preset_from_config(path)?,
        (None, None) => {
            return Err(SheError::Config(format!(
                "pass --preset {{{}}} or --config <file>",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    if let Some(r) = a.replicas {
        for rung in &mut preset.ladder.rungs {
            rung.replicas = r;
        }
        preset.config.replicas = r;
    }
    let report = run_experiment(&preset, seed, out_dir)?;
    if let Some(out) = &a.out {
        let finest = she_lab::experiment::moments_csv_path(out_dir, preset.ladder.rungs.len() - 1);
        std::fs::copy(&finest, out)?;
    }
    println!(
        "{} regime={} verdict={:?} hash={} wall={:.1}s",
        report.preset,
        report.regime,
        report.blowup.verdict,
        &report.config_hash[..12],
        report.wall_clock_secs
    );
    if report.incomplete {
        eprintln!("no certified horizon; report written with incomplete = true");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

/// Wrap a bare config file in a single-preset harness: a standard ladder
/// anchored at the config's own resolution, classified on the fly.
fn preset_from_config(path: &Path) -> Result<ExperimentPreset, SheError> {
    let config = load_config(path)?;
    let ladder = LadderSpec::standard(config.time.dt, config.grid.nodes, config.replicas);
    let mut preset = ExperimentPreset {
        name: format!("config:{}", path.display()),
        config,
        ladder,
        expected_regime: she_lab::odes::Regime::OutOfFramework,
        citation: "user configuration".into(),
        probe: None,
    };
    let (alpha, d, e, n, u, s) = preset.classification_inputs();
    let (regime, _) = regime_classify(alpha, d, e, n, u, s);
    preset.expected_regime = regime;
    Ok(preset)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<ExitCode, SheError> {
    let report_path = a.runs.join("report.json");
    let text = std::fs::read_to_string(&report_path)?;
    let report: she_lab::experiment::RunReport = serde_json::from_str(&text)
        .map_err(|e| SheError::Config(format!("{}: {e}", report_path.display())))?;
    println!("{}", serde_json::to_string_pretty(&report.blowup).expect("report serializes"));
    if a.ladder {
        for r in &report.rungs {
            eprintln!(
                "rung dt={} dx={} replicas={} diverged={:.3} median_t={:?}",
                r.dt, r.dx, r.replicas, r.diverged_fraction, r.median_divergence_time
            );
        }
    }
    // Growth re-fit from the stored finest-rung table.
    let finest = report.rungs.len().saturating_sub(1);
    let series = read_moments_csv(
        &she_lab::experiment::moments_csv_path(&a.runs, finest),
        a.p,
    )?;
    let inf = inf_over_grid(&series);
    let keep = ((series.times.len() as f64 * a.fit_window).ceil() as usize)
        .clamp(4.min(series.times.len()), series.times.len());
    let start = series.times.len() - keep;
    match lyapunov_estimate(&series.times[start..], &inf[start..]) {
        Ok(fit) => eprintln!(
            "re-fit (order {}, window {:.2}): rate {:.4}, residual {:.4}",
            a.p, a.fit_window, fit.rate, fit.residual
        ),
        Err(e) => eprintln!("re-fit skipped: {e}"),
    }
    Ok(ExitCode::SUCCESS)
}

/// Rebuild a `MomentSeries` from a rung CSV; `order` picks the mean (1) or
/// second-moment (2) column.
fn read_moments_csv(path: &Path, order: u32) -> Result<MomentSeries, SheError> {
    let text = std::fs::read_to_string(path)?;
    let mut times: Vec<f64> = Vec::new();
    let mut xs: Vec<f64> = Vec::new();
    let mut rows: Vec<(f64, f64, f64, f64, f64, f64)> = Vec::new();
    for line in text.lines().skip(1) {
        let f: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| SheError::Config(format!("{}: {e}", path.display())))?;
        if f.len() != 6 {
            return Err(SheError::Config(format!("{}: expected 6 columns", path.display())));
        }
        if times.last() != Some(&f[0]) {
            times.push(f[0]);
        }
        if times.len() == 1 {
            xs.push(f[1]);
        }
        rows.push((f[0], f[1], f[2], f[3], f[4], f[5]));
    }
    let (nt, nx) = (times.len(), xs.len());
    if rows.len() != nt * nx {
        return Err(SheError::Config(format!("{}: ragged table", path.display())));
    }
    let mut field_mean = vec![vec![0.0; nx]; nt];
    let mut moment = vec![vec![0.0; nx]; nt];
    let mut stderr = vec![vec![0.0; nx]; nt];
    let mut diverged_fraction = vec![0.0; nt];
    for (k, r) in rows.iter().enumerate() {
        let (ti, xi) = (k / nx, k % nx);
        field_mean[ti][xi] = r.2;
        moment[ti][xi] = if order == 1 { r.2.abs() } else { r.3 };
        stderr[ti][xi] = r.4;
        diverged_fraction[ti] = r.5;
    }
    let surviving = vec![0; nt];
    Ok(MomentSeries {
        order,
        times,
        xs,
        field_mean,
        moment,
        stderr,
        diverged_fraction,
        surviving,
    })
}

fn cmd_classify(a: &ClassifyArgs) -> Result<ExitCode, SheError> {
    let noise = match a.noise {
        NoiseKindArg::Compensated => NoiseKind::Compensated,
        NoiseKindArg::Noncompensated => NoiseKind::NonCompensated,
    };
    let u0 = match a.u0 {
        InitialArg::BoundedBelow => InitialClass::BoundedBelow,
        InitialArg::PositiveMeasure => InitialClass::PositiveMeasure,
        InitialArg::Zero => InitialClass::Zero,
    };
    let sigma = if a.exponent > 1.0 {
        SigmaClass::Superlinear
    } else {
        SigmaClass::Lipschitz
    };
    let (regime, citation) = regime_classify(a.alpha, a.dim, a.exponent, noise, u0, sigma);
    println!("{regime}\t{citation}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_bounds(a: &BoundsArgs) -> Result<ExitCode, SheError> {
    let mut params = ComparisonParams::unit(a.alpha, a.exponent);
    params.kappa = a.kappa;
    params.lambda = a.lambda;
    params.l_sigma = a.l_sigma;
    params.c1 = a.c1;
    params.c2 = a.c2;
    params.delta = a.horizon / a.rows as f64;
    let ts: Vec<f64> = (0..=a.rows)
        .map(|k| a.horizon * k as f64 / a.rows as f64)
        .collect();
    println!("t,bound");
    match a.noise {
        NoiseKindArg::Noncompensated => {
            let t_star = noncompensated_blowup_time(&params)?;
            for &t in &ts {
                match noncompensated_closed_form(&params, t)? {
                    Some(v) => println!("{t},{v}"),
                    None => println!("{t},inf"),
                }
            }
            eprintln!("blow-up time t* = {t_star}");
        }
        NoiseKindArg::Compensated => {
            let y0 = compensated_seed(&params);
            let sol = compensated_bound_ode(&params, y0, a.horizon, &ts)?;
            for (t, v) in &sol.values {
                println!("{t},{v}");
            }
            match sol.blow_up {
                Some(tb) => eprintln!("blow-up time t* = {tb}"),
                None => eprintln!("no blow-up before t = {}", a.horizon),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: &SweepArgs, seed: u64, out_dir: &Path) -> Result<ExitCode, SheError> {
    let budget = SweepBudget {
        replicas: a.replicas,
        horizon: a.horizon,
        ..SweepBudget::default()
    };
    let rows = sweep(&a.alphas, &a.exponents, &a.lambdas, budget, seed);
    let csv = sweep_csv(&rows);
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("regime_map.csv");
    std::fs::write(&path, &csv)?;
    print!("{csv}");
    eprintln!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}
