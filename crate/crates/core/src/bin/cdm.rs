use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cdm::data::{generate_dataset, read_dataset, split, write_dataset, DatasetItem, RunConfig};
use cdm::diffusion::checkpoint;
use cdm::geometry::io::write_ply;
use cdm::gradcheck::{run_gradcheck, GradcheckConfig};
use cdm::pipeline::{self, TRAIN_LOG_HEADER};
use cdm::{Error, Result};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "cdm", version, about = "Conditional point-cloud diffusion with multi-view depth priors")]
struct Cli {
    /// `key = value` run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override, `key=value`; repeatable.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset into the output directory.
    GenData,
    /// Train on the train split of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to resume from.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Sample reconstructions of the test split.
    Sample {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Score test-split samples against ground truth.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write the prior-view depth renders of one item.
    RenderPriors {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        item: String,
    },
    /// Print the visible fraction of every item.
    VisibleStats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        instances: usize,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut run = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        run.seed = seed;
    }
    let run = run.with_overrides(&cli.overrides)?;
    run.validate()?;
    Ok(run)
}

fn test_split(run: &RunConfig, data: &Path) -> Result<Vec<DatasetItem>> {
    Ok(split(&read_dataset(data)?, run.train_fraction, run.seed)?.1)
}

fn run(cli: &Cli) -> Result<()> {
    let run = load_config(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::GenData => {
            let items = generate_dataset(&run)?;
            write_dataset(out, &items)?;
            fs::write(out.join("config.txt"), run.to_text())?;
            println!("wrote {} items to {}", items.len(), out.display());
        }
        Command::Train { data, init } => {
            let (train_items, _) = split(&read_dataset(data)?, run.train_fraction, run.seed)?;
            let init = match init {
                Some(p) => Some(checkpoint::load(p)?.1),
                None => None,
            };
            fs::create_dir_all(out)?;
            let mut log = fs::File::create(out.join("train_log.csv"))?;
            writeln!(log, "{TRAIN_LOG_HEADER}")?;
            let params = pipeline::with_thread_pool(|| {
                pipeline::train(&run, &train_items, init, &mut |row| {
                    writeln!(log, "{}", row.csv())?;
                    println!("{}", row.csv());
                    Ok(())
                })
            })??;
            checkpoint::save(&out.join("model.ckpt"), &run.schedule()?, &params)?;
            println!("wrote {}", out.join("model.ckpt").display());
        }
        Command::Sample { data, checkpoint: ckpt } => {
            let (sched, params) = checkpoint::load(ckpt)?;
            let items = test_split(&run, data)?;
            fs::create_dir_all(out)?;
            for (i, item) in items.iter().enumerate() {
                for s in 0..run.sample_seeds as u64 {
                    let cloud = pipeline::with_thread_pool(|| {
                        pipeline::sample_item(&sched, &params, item, &run, pipeline::sample_seed(i, s))
                    })??;
                    let path = out.join(format!("{}_s{s}.ply", item.id));
                    write_ply(&path, &cloud)?;
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::Eval { data, checkpoint: ckpt } => {
            let (sched, params) = checkpoint::load(ckpt)?;
            let items = test_split(&run, data)?;
            let rows = pipeline::with_thread_pool(|| {
                pipeline::evaluate(&sched, &params, &items, &run, run.sample_seeds)
            })??;
            fs::create_dir_all(out)?;
            fs::write(out.join("metrics.csv"), pipeline::eval_csv(&rows))?;
            let summary = pipeline::eval_summary(&rows);
            fs::write(out.join("summary.txt"), format!("{summary}\n"))?;
            println!("{summary}");
        }
        Command::RenderPriors { data, item } => {
            let items = read_dataset(data)?;
            let item = items
                .iter()
                .find(|i| &i.id == item)
                .ok_or_else(|| Error::InvalidArgument(format!("no item '{item}' in {}", data.display())))?;
            let renders = pipeline::render_priors(item, &run)?;
            pipeline::write_priors(out, &renders)?;
            println!("wrote {} views to {}", renders.len(), out.display());
        }
        Command::VisibleStats { data } => {
            println!("id,visible_fraction");
            for (id, f) in pipeline::visible_stats(&read_dataset(data)?, &run)? {
                println!("{id},{f}");
            }
        }
        Command::Gradcheck { instances } => {
            let gc = GradcheckConfig {
                instances: *instances,
                seed: run.seed,
                ..GradcheckConfig::default()
            };
            let r = run_gradcheck(&gc)?;
            println!(
                "max_rel_error={:e} loss={:e} render={:e} checked={} skipped={}",
                r.max_rel(),
                r.loss_max_rel,
                r.render_max_rel,
                r.checked,
                r.skipped
            );
            if !(r.max_rel() < GRADCHECK_TOLERANCE) {
                return Err(Error::Numerical(format!(
                    "gradcheck error {:e} exceeds {GRADCHECK_TOLERANCE:e}",
                    r.max_rel()
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
