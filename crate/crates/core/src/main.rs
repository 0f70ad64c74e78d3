use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use vifi::evaluation::{
    alpha_grid, emit_report, kest_from_sweep, run_positioning_sweep, run_prediction_analysis, ByK, Dataset,
    GainPolicy, PlacementKind, ReportFormat, SweepConfig, ALPHA_STEP, DV_GRID, RHO_GRID,
};
use vifi::fitting::{FitResult, FitStrategy, StrategyKind};
use vifi::floorplan::Floorplan;
use vifi::io::{load_json, save_json, to_json_bytes, write_atomic};
use vifi::measurements::MeasurementSet;
use vifi::positioning::{k_est_counts, locate, PositionEstimate, WknnConfig, DEFAULT_ALPHA, DEFAULT_ORDER};
use vifi::propagation::{AccessPoint, ModelKind, ParamsFile};
use vifi::radiomap::{build_real_fingerprints, Placement, Radiomap};
use vifi::rng::{child_seed, streams};
use vifi::simulator::{grid_rp_positions, make_world, simulate_campaign, ScenarioPreset, Template};
use vifi::Error;

#[derive(Parser)]
#[command(name = "vifi", version, about = "Radio-map virtualization for WiFi fingerprinting")]
struct Cli {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory receiving output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic testbed and a measurement campaign.
    Simulate(SimulateArgs),
    /// Calibrate the propagation model on measured RPs.
    Fit(FitArgs),
    /// Combine real RPs with model-predicted virtual RPs.
    BuildRadiomap(BuildArgs),
    /// Estimate positions of target fingerprints.
    Locate(LocateArgs),
    /// Run the prediction, positioning, gain and k_est sweeps.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// spinv_like, twist_like or custom:<world.json>
    #[arg(long, default_value = "spinv_like")]
    template: Template,
    /// controlled or crowdsourcing
    #[arg(long, default_value = "controlled")]
    preset: ScenarioPreset,
    /// RP density in RP/m²; defaults to the template's full grid.
    #[arg(long)]
    dr: Option<f64>,
    /// Disable scan noise, device bias and model mismatch.
    #[arg(long)]
    noiseless: bool,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    floorplan: PathBuf,
    #[arg(long)]
    aps: PathBuf,
    #[arg(long)]
    measurements: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Env,
    PerAp,
    NoFit,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Mwmf,
    Os,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Mwmf => ModelKind::Mwmf,
            ModelArg::Os => ModelKind::OneSlope,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Grid,
    Random,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, value_enum, default_value = "env")]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "mwmf")]
    model: ModelArg,
    /// Parameter file used by the no-fit strategy.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Fraction of the measured RPs used for fitting.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    fit: PathBuf,
    /// Fraction of the measured RPs kept in the radio map.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Virtual RP density in RP/m².
    #[arg(long, default_value_t = 1.0)]
    dv: f64,
    #[arg(long, value_enum, default_value = "grid")]
    placement: PlacementArg,
}

#[derive(Args)]
struct LocateArgs {
    #[arg(long)]
    radiomap: PathBuf,
    /// Measurement CSV; every site in it is located.
    #[arg(long)]
    target: PathBuf,
    #[arg(long, conflicts_with = "alpha")]
    k: Option<usize>,
    /// Pick k as ⌈α·N⌉ (default when --k is absent).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    testpoints: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = RHO_GRID)]
    rho_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DV_GRID)]
    dv_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = 1..=10)]
    k_grid: Vec<usize>,
    /// min:max[:step]
    #[arg(long, default_value = "0.01:0.25")]
    alpha_range: String,
    #[arg(long, value_enum, default_value = "env")]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "mwmf")]
    model: ModelArg,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "grid")]
    placement: PlacementArg,
    #[arg(long, default_value_t = DEFAULT_ORDER)]
    order: f64,
    /// Compute gains at this fixed k instead of each cell's k_opt.
    #[arg(long)]
    gain_k: Option<usize>,
}

/// Fatal CLI failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } | Error::Parse { .. } => 2,
            Error::DegenerateFit { .. } | Error::InsufficientData { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(&cli, a),
        Command::Fit(a) => fit(&cli, a),
        Command::BuildRadiomap(a) => build_radiomap(&cli, a),
        Command::Locate(a) => run_locate(a),
        Command::Evaluate(a) => evaluate(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> CliResult<()> {
    let mut world = make_world(&a.template, cli.seed)?;
    if a.noiseless {
        world = world.noiseless();
    }
    let rps = match a.dr {
        Some(dr) => grid_rp_positions(&world.plan, dr, world.device_z())?,
        None => world.rp_grid(),
    };
    let campaign = simulate_campaign(&world, &rps, &world.test_point_positions(), &a.preset, cli.seed)?;
    let dir = &cli.out_dir;
    save_json(&dir.join("world.json"), &world)?;
    save_json(&dir.join("floorplan.json"), &world.plan)?;
    save_json(&dir.join("aps.json"), &world.aps)?;
    write_atomic(&dir.join("measurements.csv"), &campaign.rp_measurements.to_csv_bytes())?;
    write_atomic(&dir.join("testpoints.csv"), &campaign.tp_measurements.to_csv_bytes())?;
    info!(
        "{}: {} RPs, {} TPs written to {}",
        world.name,
        rps.len(),
        campaign.test_points.len(),
        dir.display()
    );
    Ok(())
}

fn load_dataset(inputs: &Inputs, testpoints: Option<&Path>) -> CliResult<Dataset> {
    let plan: Floorplan = load_json(&inputs.floorplan)?;
    let aps: Vec<AccessPoint> = load_json(&inputs.aps)?;
    let bad = |path: &Path, e: Error| usage(format!("{}: {e}", path.display()));
    vifi::propagation::validate_aps(&aps).map_err(|e| bad(&inputs.aps, e))?;
    let meas = MeasurementSet::load(&inputs.measurements)?;
    let real = build_real_fingerprints(&meas, &aps).map_err(|e| bad(&inputs.measurements, e))?;
    let tps = match testpoints {
        Some(path) => {
            let tp_meas = MeasurementSet::load(path)?;
            build_real_fingerprints(&tp_meas, &aps)
                .map_err(|e| bad(path, e))?
                .into_iter()
                .map(|rp| vifi::positioning::TestPoint {
                    position: rp.position,
                    fingerprint: rp.fingerprint,
                })
                .collect()
        }
        None => Vec::new(),
    };
    for rp in &real {
        if !plan.contains(&rp.position) {
            return Err(usage(format!(
                "{}: RP at {} lies outside the floorplan",
                inputs.measurements.display(),
                rp.position
            )));
        }
    }
    Ok(Dataset::new(plan, aps, real, tps))
}

fn strategy(s: StrategyArg, model: ModelKind, params: Option<&Path>) -> CliResult<FitStrategy> {
    Ok(match s {
        StrategyArg::Env => FitStrategy::EnvironmentFitting,
        StrategyArg::PerAp => FitStrategy::SpecificApFitting,
        StrategyArg::NoFit => {
            let path = params.ok_or_else(|| usage("--strategy no-fit needs --params"))?;
            let file: ParamsFile = load_json(path)?;
            if file.model != model {
                return Err(usage(format!(
                    "{}: parameters are for model {}, not {model}",
                    path.display(),
                    file.model
                )));
            }
            file.params.validate().map_err(|e| usage(format!("{}: {e}", path.display())))?;
            FitStrategy::NoFit(file.params)
        }
    })
}

fn fit(cli: &Cli, a: &FitArgs) -> CliResult<()> {
    let data = load_dataset(&a.inputs, None)?;
    let model = a.model.into();
    let strategy = strategy(a.strategy, model, a.params.as_deref())?;
    let idx = data.selection(a.rho)?;
    let result = data.fit(&idx, &strategy, model)?;
    info!("fitted {} samples, residual rms {:.3} dB", result.m_used, result.residual_rms);
    save_json(&cli.out_dir.join("fit.json"), &result)?;
    Ok(())
}

fn placement(p: PlacementArg, seed: u64) -> (Placement, PlacementKind) {
    match p {
        PlacementArg::Grid => (Placement::Grid, PlacementKind::Grid),
        PlacementArg::Random => (
            Placement::Random {
                seed: child_seed(seed, streams::PLACEMENT, 0),
            },
            PlacementKind::Random,
        ),
    }
}

fn build_radiomap(cli: &Cli, a: &BuildArgs) -> CliResult<()> {
    let data = load_dataset(&a.inputs, None)?;
    let fit: FitResult = load_json(&a.fit)?;
    for ap in &data.aps {
        fit.params_for(&ap.id)
            .map_err(|e| usage(format!("{}: {e}", a.fit.display())))?;
    }
    let idx = data.selection(a.rho)?;
    let map = data.radiomap(&idx, a.dv, Some(&fit), placement(a.placement, cli.seed).0)?;
    info!("radio map with {} real and {} virtual RPs", map.n_real(), map.n_virtual());
    save_json(&cli.out_dir.join("radiomap.json"), &map)?;
    Ok(())
}

#[derive(Serialize)]
struct Located {
    id: String,
    k: usize,
    #[serde(flatten)]
    estimate: PositionEstimate,
}

fn run_locate(a: &LocateArgs) -> CliResult<()> {
    let map = Radiomap::load(&a.radiomap)?;
    let k = match (a.k, a.alpha) {
        (Some(k), _) => k,
        (None, alpha) => k_est_counts(map.n_real(), map.n_virtual(), alpha.unwrap_or(DEFAULT_ALPHA))?.min(map.len()),
    };
    let cfg = WknnConfig::new(k).with_order(a.order);
    let meas = MeasurementSet::load(&a.target)?;
    let sites = meas.averaged();
    let targets = build_real_fingerprints(&meas, &map.aps).map_err(|e| usage(format!("{}: {e}", a.target.display())))?;
    let located = sites
        .iter()
        .zip(&targets)
        .map(|(site, t)| {
            Ok(Located {
                id: site.id.clone(),
                k,
                estimate: locate(&map, &t.fingerprint, &cfg)?,
            })
        })
        .collect::<vifi::Result<Vec<_>>>()?;
    let bytes = if located.len() == 1 {
        to_json_bytes(&located[0])
    } else {
        to_json_bytes(&located)
    };
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(())
}

fn parse_alpha_range(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("--alpha-range {s:?}: {e}")))?;
    let (min, max, step) = match parts[..] {
        [min, max] => (min, max, ALPHA_STEP),
        [min, max, step] => (min, max, step),
        _ => return Err(usage(format!("--alpha-range {s:?}: expected min:max[:step]"))),
    };
    Ok(alpha_grid(min, max, step)?)
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> CliResult<()> {
    let alphas = parse_alpha_range(&a.alpha_range)?;
    let data = load_dataset(&a.inputs, Some(&a.testpoints))?;
    let model: ModelKind = a.model.into();
    let chosen = strategy(a.strategy, model, a.params.as_deref())?;
    let dir = &cli.out_dir;

    let mut strategies = vec![FitStrategy::EnvironmentFitting, FitStrategy::SpecificApFitting];
    if let FitStrategy::NoFit(_) = chosen {
        strategies.push(chosen.clone());
    }
    let prediction = run_prediction_analysis(&data, &a.rho_grid, &strategies, &[ModelKind::Mwmf, ModelKind::OneSlope])?;

    let cfg = SweepConfig {
        rho_grid: a.rho_grid.clone(),
        dv_grid: a.dv_grid.clone(),
        k_grid: a.k_grid.clone(),
        strategy: chosen,
        model,
        placement: placement(a.placement, cli.seed).1,
        order: a.order,
        gain_policy: a.gain_k.map_or(GainPolicy::KOpt, GainPolicy::FixedK),
        seed: cli.seed,
    };
    let sweep = run_positioning_sweep(&data, &cfg)?;
    let kest = kest_from_sweep(&sweep.positioning, &alphas)?;

    emit_report(&prediction, &dir.join("prediction.csv"), ReportFormat::Csv)?;
    emit_report(&prediction, &dir.join("prediction.json"), ReportFormat::Json)?;
    emit_report(&sweep.positioning, &dir.join("positioning.csv"), ReportFormat::Csv)?;
    emit_report(&sweep.positioning, &dir.join("positioning.json"), ReportFormat::Json)?;
    write_atomic(&dir.join("positioning_by_k.csv"), &vifi::evaluation::csv_bytes(&ByK(&sweep.positioning)))?;
    emit_report(&sweep.gain, &dir.join("gain.csv"), ReportFormat::Csv)?;
    emit_report(&sweep.gain, &dir.join("gain.json"), ReportFormat::Json)?;
    emit_report(&kest, &dir.join("kest.csv"), ReportFormat::Csv)?;
    emit_report(&kest, &dir.join("kest.json"), ReportFormat::Json)?;

    let failed_pred = prediction.cells.iter().filter(|c| c.error.is_some()).count();
    let failed_pos = sweep.positioning.cells.iter().filter(|c| c.error.is_some()).count();
    for c in prediction.cells.iter().filter(|c| c.error.is_some()) {
        warn!("prediction rho={} {} {}: {}", c.rho, c.strategy, c.model, c.error.as_deref().unwrap_or(""));
    }
    for c in sweep.positioning.cells.iter().filter(|c| c.error.is_some()) {
        warn!("positioning rho={} dv={}: {}", c.rho, c.d_virtual, c.error.as_deref().unwrap_or(""));
    }

    for c in prediction.cells.iter().filter(|c| c.strategy == StrategyKind::Environment || c.strategy == StrategyKind::NoFit) {
        if let Some(d) = c.mean_delta {
            println!("mean_delta_db rho={} strategy={} model={} {d:.4}", c.rho, c.strategy, c.model);
        }
    }
    for c in &sweep.positioning.cells {
        if let (Some(k), Some(e)) = (c.k_opt, c.mean_error_k_opt()) {
            println!("mean_error_m d_real={:.4} d_virtual={:.4} k_opt={k} {e:.4}", c.d_real, c.d_virtual);
        }
    }
    for g in &sweep.gain.entries {
        println!("gain d_real={:.4} d_virtual={:.4} {:.4}", g.d_real, g.d_virtual, g.gain);
    }
    for c in &kest.cells {
        if let Some(b) = c.beta_at(DEFAULT_ALPHA) {
            println!("beta_m alpha={DEFAULT_ALPHA} d_real={:.4} d_virtual={:.4} {b:.4}", c.d_real, c.d_virtual);
        }
    }

    if failed_pred == prediction.cells.len() && failed_pos == sweep.positioning.cells.len() {
        return Err(Failure {
            code: 1,
            message: "every evaluation cell failed".into(),
        });
    }
    Ok(())
}
