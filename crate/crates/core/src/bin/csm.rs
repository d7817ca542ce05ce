use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use csm::harness::sweep::{format_sweep_table, write_sweep_csv};
use csm::harness::train::default_out_dir;
use csm::harness::{
    evaluate, load_dataset, preset, preset_names, sweep, Checkpoint, DatasetKind, RunConfig, SweepParam,
    Trainer,
};
use csm::learning::AlgorithmKind;
use csm::linear::{run_linear_demo, LinearDemoConfig};
use csm::verify::{format_reports, run_battery, write_reports_csv, BatteryConfig};
use csm::{CsmError, Result};

#[derive(Parser)]
#[command(name = "csm", version, about = "Train and check contrastive similarity matching networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write metrics.csv, checkpoint.bin and summary.txt.
    Train(TrainArgs),
    /// Evaluate a checkpoint on its dataset.
    Eval(EvalArgs),
    /// Repeat training over values of β or γ.
    Sweep(SweepArgs),
    /// Run the numerical oracle battery.
    Verify(VerifyArgs),
    /// Train the linear supervised similarity matching network on z = A x.
    LinearDemo(LinearArgs),
    /// List the named presets and the results they are expected to reach.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with RunConfig keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset (see `csm presets`).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    algorithm: Option<AlgorithmKind>,
    #[arg(long)]
    dataset: Option<DatasetKind>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subset_train: Option<usize>,
    #[arg(long)]
    subset_val: Option<usize>,
    /// Grid layers as `nps:stride:radius,...`.
    #[arg(long)]
    structured: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override any config key, e.g. `--set free_persistent_iterations=40`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    /// Preset, then config file, then `--set`, then the dedicated flags.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.preset {
            Some(name) => preset(name)?.config,
            None => RunConfig::default(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)?;
            let mut table: toml::Table = toml::from_str(&text).map_err(|e| CsmError::Config(e.to_string()))?;
            if let (Some(name), None) = (&self.preset, table.get("preset")) {
                table.insert("preset".into(), toml::Value::String(name.clone()));
            }
            cfg = RunConfig::from_toml_str(&table.to_string())?;
        }
        for kv in &self.overrides {
            cfg.set(kv)?;
        }
        if let Some(a) = self.algorithm {
            cfg.algorithm = a;
        }
        if let Some(d) = self.dataset {
            cfg.dataset = d;
        }
        if let Some(d) = &self.data_dir {
            cfg.data_dir = Some(d.clone());
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.subset_train.is_some() {
            cfg.subset_train = self.subset_train;
        }
        if self.subset_val.is_some() {
            cfg.subset_val = self.subset_val;
        }
        if let Some(s) = &self.structured {
            cfg.structured = Some(s.clone());
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Continue from a checkpoint; `--epochs` sets the new total.
    #[arg(long, conflicts_with_all = ["config", "preset"])]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Evaluate the training split instead of the validation split.
    #[arg(long)]
    train_split: bool,
    /// Relaxation budget; defaults to the run's evaluation budget.
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    trials: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write every report to this CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LinearArgs {
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Decay horizon τ of `eta · τ / (τ + t)`; 0 keeps η constant.
    #[arg(long, default_value_t = 2000.0)]
    eta_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    input_noise: f64,
    /// Directory for curve.csv and pairs.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut trainer;
    let ds;
    if let Some(path) = &args.resume {
        let mut ck = Checkpoint::load(path)?;
        if let Some(e) = args.run.epochs {
            ck.config.epochs = e;
        }
        if let Some(d) = &args.run.data_dir {
            ck.config.data_dir = Some(d.clone());
        }
        if let Some(o) = &args.run.out {
            ck.config.out_dir = Some(o.clone());
        }
        ds = load_dataset(&ck.config)?;
        info!("resuming {} at epoch {}", path.display(), ck.epoch);
        trainer = Trainer::resume(ck, &ds)?;
    } else {
        let mut cfg = args.run.resolve()?;
        if cfg.out_dir.is_none() {
            cfg.out_dir = Some(default_out_dir(&cfg));
        }
        ds = load_dataset(&cfg)?;
        info!(
            "{}: {} train / {} validation, input dimension {}",
            ds.name,
            ds.train.len(),
            ds.validation.len(),
            ds.dim()
        );
        trainer = Trainer::new(cfg, &ds)?;
    }
    info!("layers {:?}, algorithm {}", trainer.topology.sizes(), trainer.config.algorithm);
    trainer.run(&ds)?;
    if let Some(dir) = &trainer.config.out_dir {
        println!("{}", fs::read_to_string(dir.join("summary.txt"))?.trim_end());
        println!("outputs in {}", dir.display());
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut ck = Checkpoint::load(&args.checkpoint)?;
    if let Some(d) = args.data_dir {
        ck.config.data_dir = Some(d);
    }
    let ds = load_dataset(&ck.config)?;
    let topo = ck.config.topology(ds.dim())?;
    ck.check_topology(&topo)?;
    let mut phase = ck.config.eval_phase();
    if let Some(m) = args.max_iterations {
        phase.max_iterations = m;
    }
    let (split, records) = if args.train_split {
        ("train", &ds.train)
    } else {
        ("validation", &ds.validation)
    };
    let report = evaluate(&ck.params, &topo, &ds, records, &phase, ck.config.sparsity_threshold)?;
    println!("epoch {} {split} error {:.2}% over {} samples", ck.epoch, report.error_pct, records.len());
    println!("non-converged {}, mean iterations {:.1}", report.nonconverged, report.mean_iterations);
    let fractions: Vec<String> = report.sparsity.iter().map(|f| format!("{f:.4}")).collect();
    println!("fraction active per layer (0 = input): {}", fractions.join(" "));
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut template = args.run.resolve()?;
    let out = template
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("sweep-{}", args.param)));
    template.out_dir = Some(out.clone());
    fs::create_dir_all(&out)?;
    let ds = load_dataset(&template)?;
    let rows = sweep(&template, &ds, args.param, &args.values, args.trials)?;
    write_sweep_csv(BufWriter::new(File::create(out.join("sweep.csv"))?), &rows)?;
    let table = format_sweep_table(args.param, &rows);
    fs::write(out.join("sweep.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<bool> {
    let cfg = BatteryConfig {
        seed: args.seed,
        ..BatteryConfig::default()
    };
    let reports = run_battery(&cfg)?;
    print!("{}", format_reports(&reports));
    if let Some(path) = args.out {
        write_reports_csv(BufWriter::new(File::create(path)?), &reports)?;
    }
    let failed = reports.iter().filter(|r| !r.pass && !r.inconclusive).count();
    let inconclusive = reports.iter().filter(|r| r.inconclusive).count();
    println!("{} checks, {failed} failed, {inconclusive} inconclusive", reports.len());
    Ok(failed == 0)
}

fn cmd_linear(args: LinearArgs) -> Result<()> {
    let cfg = LinearDemoConfig {
        steps: args.steps,
        seed: args.seed,
        eta: args.eta,
        eta_decay: (args.eta_decay > 0.0).then_some(args.eta_decay),
        input_noise: args.input_noise,
        ..LinearDemoConfig::default()
    };
    let report = run_linear_demo(&cfg)?;
    println!(
        "test MSE {:.3e} -> {:.3e} ({:.0}x), prediction correlation {:.5}",
        report.initial_mse(),
        report.final_mse(),
        report.initial_mse() / report.final_mse(),
        report.correlation()
    );
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir)?;
        report.write_curve_csv(BufWriter::new(File::create(dir.join("curve.csv"))?))?;
        report.write_pairs_csv(BufWriter::new(File::create(dir.join("pairs.csv"))?))?;
    }
    Ok(())
}

fn cmd_presets() -> Result<()> {
    for name in preset_names() {
        let p = preset(name)?;
        let c = &p.config;
        let layers = match &c.structured {
            Some(s) => format!("grid {s}"),
            None => format!("hidden {:?}", c.hidden),
        };
        let expected = p.expected.map_or_else(|| "-".to_string(), |e| e.to_string());
        println!("{name:<26} {:<10} {:<8} {layers:<22} {expected}", c.algorithm.name(), c.dataset.name());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::LinearDemo(a) => cmd_linear(a).map(|_| true),
        Command::Presets => cmd_presets().map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
