use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dgcan::checkpoint::Checkpoint;
use dgcan::dataset::{generate_dataset, read_color, read_depth, read_grasps, write_grasps, write_json, GraspRecord};
use dgcan::evaluate::{evaluate_split, report_grid};
use dgcan::plot::plot_outputs;
use dgcan::train::{train, RunOutput};
use dgcan::{Dataset, Error, Result, RunConfig};
use dgcan_core::harness::{infer, DepthMode};
use dgcan_core::scene::Split;

#[derive(Parser)]
#[command(name = "dgcan", version, about = "Synthetic RGB-D grasp detection: data, training, evaluation")]
struct Cli {
    /// JSON configuration; omitted sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset. `--scenes` sets the training split size.
    Gen {
        #[arg(long)]
        scenes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the training split.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "regress")]
        depth_mode: DepthMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on one test split.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: Split,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Detect grasps on a `COLOR.png,DEPTH.png` pair.
    Infer {
        #[arg(long)]
        image: String,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw predictions for a dataset scene.
    Plot {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        scene: String,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen { scenes, seed, out } => {
            let mut plan = cfg.dataset;
            if let Some(n) = scenes {
                plan.train = n;
            }
            let manifest = generate_dataset(&out, &plan, seed, &cfg.synth)?;
            println!("wrote {} scenes to {}", manifest.scenes.len(), out.display());
        }
        Command::Train { data, depth_mode, out } => {
            let dataset = Dataset::open(&data)?;
            let samples = dataset
                .load_split(Split::Train)?
                .iter()
                .map(|s| s.train_sample())
                .collect::<Result<Vec<_>>>()?;
            let output = RunOutput { dir: out, checkpoint_every: cfg.checkpoint_every };
            let every = (cfg.train.iterations / 20).max(1);
            let summary = train(&samples, cfg.model, cfg.train, depth_mode, &output, |i, l| {
                if (i + 1) % every == 0 {
                    println!("iteration {:>6}  loss {:.4}", i + 1, l.total);
                }
            })?;
            println!("saved {} ({} batches skipped)", summary.checkpoint.display(), summary.skipped);
        }
        Command::Eval { data, split, ckpt, report } => {
            let dataset = Dataset::open(&data)?;
            let checkpoint = Checkpoint::load(&ckpt)?;
            let result = evaluate_split(&dataset, split, &checkpoint, &cfg.inference, &cfg.eval)?;
            write_json(&report, &result)?;
            print!("{}", report_grid(&[result]));
        }
        Command::Infer { image, ckpt, out } => {
            let (color_path, depth_path) = image
                .split_once(',')
                .ok_or_else(|| Error::Dataset("--image expects COLOR.png,DEPTH.png".into()))?;
            let checkpoint = Checkpoint::load(&ckpt)?;
            let color = read_color(Path::new(color_path))?;
            let depth = read_depth(Path::new(depth_path))?;
            let grasps = infer(&checkpoint.params, &checkpoint.model, &color, &depth, &cfg.inference, checkpoint.depth_mode)?;
            std::fs::create_dir_all(&out).map_err(|source| Error::Io { path: out.clone(), source })?;
            let records: Vec<GraspRecord> = grasps.iter().map(|g| GraspRecord::from_grasp(g, None)).collect();
            let pred = out.join("predictions.jsonl");
            write_grasps(&pred, &records)?;
            plot_outputs(&color, &depth, &grasps, &out)?;
            println!("{} grasps written to {}", grasps.len(), pred.display());
        }
        Command::Plot { data, scene, pred, out } => {
            let dataset = Dataset::open(&data)?;
            let stored = dataset.load(dataset.entry(&scene)?)?;
            let grasps: Vec<_> = read_grasps(&pred)?.iter().map(GraspRecord::grasp).collect();
            for f in plot_outputs(&stored.color, &stored.depth, &grasps, &out)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
