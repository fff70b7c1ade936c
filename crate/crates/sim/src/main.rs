use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use zonowalk::data::{load_trajectories, make_windows, NamedDataset, TrainingSample, WindowConfig};
use zonowalk::nets::train::{esn_examples, evaluate_esn, evaluate_ppn, ppn_examples};
use zonowalk_sim::export::{trial_stem, write_metrics_csv, write_snapshots, write_steps_csv, write_timing_csv};
use zonowalk_sim::recipe::{load_or_train, synthetic_datasets, train_on};
use zonowalk_sim::{run_batch, selftest, Models, SimConfig};

#[derive(Parser)]
#[command(name = "zonowalk", version, about = "Zonotope footstep planning for a walking robot in crowds")]
struct Cli {
    /// Configuration file (TOML); missing keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataSource {
    /// Directory of trajectory files (`frame ped x y` per line), one dataset per file.
    #[arg(conflicts_with = "synthetic", required_unless_present = "synthetic")]
    dataset_dir: Option<PathBuf>,
    /// Use seeded synthetic crowds instead of a dataset directory.
    #[arg(long)]
    synthetic: bool,
    /// Dataset held out for evaluation (default: the last one by name).
    #[arg(long)]
    holdout: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the pedestrian and ego networks.
    Train {
        #[command(flatten)]
        source: DataSource,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint to write.
        #[arg(long, default_value = "zonowalk.ckpt")]
        out: PathBuf,
        /// Per-epoch loss and held-out metrics CSV.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Print ADE, FDE and containment of a checkpoint on the held-out dataset.
    Eval {
        #[arg(long, default_value = "zonowalk.ckpt")]
        ckpt: PathBuf,
        #[command(flatten)]
        source: DataSource,
        /// Seed of the synthetic scenes.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run closed-loop navigation trials.
    Simulate {
        #[arg(long, default_value_t = 5)]
        peds: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Models to plan with; trained with the synthetic recipe if missing.
        #[arg(long, default_value = "zonowalk.ckpt")]
        ckpt: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Write an SVG snapshot every this many steps (0 disables snapshots).
        #[arg(long, default_value_t = 10)]
        snapshot_every: usize,
    },
    /// Run the acceptance checks (exit 2 if any threshold fails).
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_dir(dir: &Path) -> anyhow::Result<Vec<NamedDataset>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        let records = load_trajectories(&f).with_context(|| format!("loading {}", f.display()))?;
        let name = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        out.push(NamedDataset {
            name,
            samples: make_windows(&records, &WindowConfig::default()),
        });
    }
    if out.len() < 2 {
        bail!("{} needs at least two dataset files", dir.display());
    }
    Ok(out)
}

fn datasets(source: &DataSource, cfg: &SimConfig, seed: u64) -> anyhow::Result<(Vec<NamedDataset>, String)> {
    let sets = match &source.dataset_dir {
        Some(dir) => load_dir(dir)?,
        None => synthetic_datasets(&cfg.data, seed),
    };
    let holdout = match &source.holdout {
        Some(h) => h.clone(),
        None => sets.last().map(|d| d.name.clone()).context("no datasets")?,
    };
    Ok((sets, holdout))
}

fn held_out(sets: &[NamedDataset], name: &str) -> anyhow::Result<Vec<TrainingSample>> {
    Ok(zonowalk::data::leave_one_out_split(sets, name)?.1)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut cfg = match &cli.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    match cli.command {
        Command::Train {
            source,
            epochs,
            seed,
            out,
            metrics,
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            cfg.train.seed = seed;
            let (sets, holdout) = datasets(&source, &cfg, seed)?;
            let (models, report) = train_on(&sets, &holdout, &cfg.train)?;
            models.save(&out)?;
            if let Some(m) = metrics {
                zonowalk::nets::train::write_metrics_csv(BufWriter::new(File::create(&m)?), &report.records)?;
            }
            println!("held out: {holdout}");
            for (name, before, after) in [
                ("PPN", report.ppn_before, report.ppn_after),
                ("ESN", report.esn_before, report.esn_after),
            ] {
                println!(
                    "{name}: ADE {:.3} -> {:.3} m, FDE {:.3} -> {:.3} m, containment {:.3} -> {:.3} (n = {})",
                    before.ade, after.ade, before.fde, after.fde, before.containment, after.containment, after.n
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Eval { ckpt, source, seed } => {
            let models = Models::load(&ckpt)?;
            let (sets, holdout) = datasets(&source, &cfg, seed)?;
            let test = held_out(&sets, &holdout)?;
            let ppn = evaluate_ppn(&models.ppn, &ppn_examples(&test))?;
            let esn = evaluate_esn(&models.esn, &esn_examples(&models.ppn, &test)?)?;
            println!("dataset,network,n,ade,fde,containment");
            for (name, e) in [("PPN", ppn), ("ESN", esn)] {
                println!("{holdout},{name},{},{:.4},{:.4},{:.4}", e.n, e.ade, e.fde, e.containment);
            }
        }
        Command::Simulate {
            peds,
            trials,
            steps,
            seed,
            ckpt,
            out,
            snapshot_every,
        } => {
            if let Some(s) = steps {
                cfg.scenario.steps = s;
            }
            cfg.mpc.validate()?;
            let models = load_or_train(&ckpt, &cfg.data, &cfg.train)?;
            std::fs::create_dir_all(&out)?;
            let results = run_batch(&models, &cfg, peds, trials, seed);
            let metrics: Vec<_> = results.iter().map(|r| r.0.clone()).collect();
            let tag = format!("seed{seed}_peds{peds}");
            let metrics_path = out.join(format!("metrics_{tag}.csv"));
            write_metrics_csv(BufWriter::new(File::create(&metrics_path)?), &metrics)?;
            write_timing_csv(BufWriter::new(File::create(out.join(format!("timing_{tag}.csv")))?), &metrics)?;
            for (m, log) in &results {
                let stem = trial_stem(m.seed, m.n_peds);
                write_steps_csv(BufWriter::new(File::create(out.join(format!("{stem}_steps.csv")))?), log)?;
                if snapshot_every > 0 {
                    write_snapshots(&out.join("svg"), log, cfg.scenario.sensory_radius, snapshot_every)?;
                }
            }
            let ok = metrics.iter().filter(|m| m.success).count();
            println!("{ok}/{trials} trials reached the goal; metrics in {}", metrics_path.display());
        }
        Command::Selftest { seed } => {
            let checks = selftest::run_all(&cfg, seed, |c| println!("{c}"));
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
