//! `erupoint`: batch entry point for pool generation, sample synthesis,
//! grounding, evaluation and the toy fusion trainer.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use erupoint::body::{build_pool, write_pool_file, AgentLookup, PoolFile};
use erupoint::dataset::{compose_scene, describe_stats, read_jsonl, read_samples, write_jsonl, write_samples, Lexicons};
use erupoint::eval::evaluate;
use erupoint::fusion::{self, ModelParams, Optimizer, TrainOptions};
use erupoint::geom::ply;
use erupoint::ground::{ground_samples, Mode, PredictionRecord};
use erupoint::scene::{load_scenes, Scene};
use erupoint::seed::derive_seed;
use erupoint::synth::{fixture_scenes, synthesize};
use erupoint::{selftest, Config, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "erupoint", version, about = "Embodied-reference grounding toolkit")]
struct Cli {
    /// TOML file of config overrides (key = value).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 picks the core count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the posed agent pool.
    Pool {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write procedurally generated fixture scenes.
    Scenes {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Place pointing agents around every object and write samples.
    Synth {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Optional JSON summary of placement counts and rejections.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Merge one sample's agent into its scene cloud and write PLY.
    Compose {
        #[arg(long)]
        sample: String,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Geometric grounding baseline.
    Ground {
        #[arg(long, value_parser = ["gesture", "lang", "full"])]
        mode: String,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Directory of lexicon files; the built-in lists otherwise.
        #[arg(long)]
        lexicons: Option<PathBuf>,
        #[arg(long)]
        w_g: Option<f64>,
        #[arg(long)]
        w_l: Option<f64>,
    },
    /// Acc@0.25 / Acc@0.5 over unique, multiple and overall subsets.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Description statistics over a samples file.
    Stats {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        lexicons: Option<PathBuf>,
        /// Write JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the fusion network on generated micro-scenes.
    TrainToy {
        /// Number of training micro-samples.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Number of held-out micro-samples.
        #[arg(long, default_value_t = 100)]
        val: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        ckpt: PathBuf,
        /// Accuracy trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Pool file; a pool is generated in memory otherwise.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, value_parser = ["sgd", "adam"])]
        optimizer: Option<String>,
    },
    /// Run the built-in invariant suites.
    Selftest {
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Config::from_toml_str(&text)
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn scene_map(dir: &Path) -> Result<BTreeMap<String, Scene>> {
    Ok(load_scenes(dir)?.into_iter().map(|s| (s.scene_id.clone(), s)).collect())
}

fn lexicons(dir: Option<&Path>) -> Result<Lexicons> {
    dir.map_or_else(|| Ok(Lexicons::default()), Lexicons::load)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let seed_or = |s: Option<u64>, cfg: &Config| s.unwrap_or(cfg.seed);

    match cli.command {
        Command::Pool { out, seed } => {
            let pool = build_pool(seed_or(seed, &cfg), &cfg)?;
            log::info!("posing and writing {} agents", pool.len());
            write_pool_file(&pool, &out)?;
            log::info!("wrote {}", out.display());
        }
        Command::Scenes { out, count, seed } => {
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for s in fixture_scenes(count, seed_or(seed, &cfg))? {
                s.save(&out)?;
            }
            log::info!("wrote {count} scenes to {}", out.display());
        }
        Command::Synth {
            scenes,
            pool,
            out,
            seed,
            report,
        } => {
            let scenes = load_scenes(&scenes)?;
            let pool = PoolFile::open(&pool)?;
            let (samples, summary) = synthesize(&scenes, &pool, seed_or(seed, &cfg), &cfg)?;
            log::info!(
                "{} samples from {} objects ({} infeasible)",
                samples.len(),
                summary.objects,
                summary.infeasible_objects
            );
            write_samples(&out, &samples)?;
            if let Some(path) = report {
                write_json(&path, &summary)?;
            }
        }
        Command::Compose {
            sample,
            samples,
            scenes,
            pool,
            out,
        } => {
            let samples = read_samples(&samples)?;
            let s = samples
                .iter()
                .find(|s| s.sample_id == sample)
                .ok_or_else(|| Error::Lookup(format!("sample {sample} not found")))?;
            let scenes = scene_map(&scenes)?;
            let scene = scenes
                .get(&s.scene_id)
                .ok_or_else(|| Error::Lookup(format!("scene {} not found", s.scene_id)))?;
            let pool = PoolFile::open(&pool)?;
            let composed = compose_scene(scene, s, &pool)?;
            ply::write_file(&out, &composed.cloud)?;
        }
        Command::Ground {
            mode,
            samples,
            scenes,
            pool,
            out,
            lexicons: lex_dir,
            w_g,
            w_l,
        } => {
            let mode = Mode::parse(&mode)?;
            cfg.w_gesture = w_g.unwrap_or(cfg.w_gesture);
            cfg.w_language = w_l.unwrap_or(cfg.w_language);
            cfg.validate()?;
            let samples = read_samples(&samples)?;
            let scenes = scene_map(&scenes)?;
            let pool = PoolFile::open(&pool)?;
            let lex = lexicons(lex_dir.as_deref())?;
            let preds = ground_samples(mode, &samples, &scenes, &pool, &lex, cfg.w_gesture, cfg.w_language)?;
            write_jsonl(&out, &preds, "prediction")?;
        }
        Command::Eval {
            preds,
            samples,
            scenes,
            out,
        } => {
            let preds: Vec<PredictionRecord> = read_jsonl(&preds)?;
            let samples = read_samples(&samples)?;
            let scenes = scene_map(&scenes)?;
            let report = evaluate(&preds, &samples, &scenes)?;
            log::info!(
                "overall Acc@0.25 {:.4}, Acc@0.5 {:.4}",
                report.overall.acc_025,
                report.overall.acc_05
            );
            write_json(&out, &report)?;
        }
        Command::Stats {
            samples,
            lexicons: lex_dir,
            out,
        } => {
            let samples = read_samples(&samples)?;
            let stats = describe_stats(&samples, &lexicons(lex_dir.as_deref())?);
            match out {
                Some(path) => write_json(&path, &stats)?,
                None => {
                    let text = serde_json::to_string_pretty(&stats).map_err(|e| Error::invalid(e.to_string()))?;
                    println!("{text}");
                }
            }
        }
        Command::TrainToy {
            samples,
            val,
            steps,
            seed,
            ckpt,
            trace,
            pool,
            lr,
            batch,
            optimizer,
        } => {
            let seed = seed_or(seed, &cfg);
            let defaults = TrainOptions::default();
            let opts = TrainOptions {
                steps,
                learning_rate: lr.unwrap_or(defaults.learning_rate),
                batch_size: batch.unwrap_or(defaults.batch_size),
                optimizer: optimizer.as_deref().map_or(Ok(defaults.optimizer), Optimizer::parse)?,
                seed,
                eval_every: defaults.eval_every,
            };
            let (train, held_out) = match pool {
                Some(p) => {
                    let pool = PoolFile::open(&p)?;
                    micro_splits(&pool, samples, val, seed, &cfg)?
                }
                None => micro_splits(&build_pool(cfg.seed, &cfg)?, samples, val, seed, &cfg)?,
            };
            let lang = fusion::lang_only_accuracy(&held_out, &Lexicons::default())?;
            let train: Vec<_> = train.into_iter().map(|e| e.input).collect();
            let held_out: Vec<_> = held_out.into_iter().map(|e| e.input).collect();
            let init = ModelParams::init(&cfg.fusion, seed)?;
            let outcome = fusion::train_toy(&train, &held_out, &init, &opts)?;
            outcome.params.save(&ckpt)?;
            let last = outcome.trace.last().expect("trace has the initial point");
            log::info!(
                "val Acc@0.25 {:.3} -> {:.3} (lexical baseline {lang:.3})",
                outcome.trace[0].val_acc_025,
                last.val_acc_025
            );
            if let Some(path) = trace {
                let doc = serde_json::json!({
                    "options": opts,
                    "lang_only_val_acc_025": lang,
                    "trace": outcome.trace,
                });
                write_json(&path, &doc)?;
            }
        }
        Command::Selftest { seed, out } => {
            let seed = seed_or(seed, &cfg);
            let pool = build_pool(seed, &cfg)?;
            let report = selftest::run(&pool, seed, &cfg);
            print!("{report}");
            std::io::stdout().flush().map_err(|e| Error::io("<stdout>", e))?;
            if let Some(path) = out {
                write_json(&path, &report)?;
            }
            if !report.passed() {
                return Err(Error::Validation(format!("{} self-test checks failed", report.failures())));
            }
        }
    }
    Ok(())
}

fn micro_splits(
    pool: &(impl AgentLookup + ?Sized),
    train: usize,
    val: usize,
    seed: u64,
    cfg: &Config,
) -> Result<(Vec<fusion::MicroExample>, Vec<fusion::MicroExample>)> {
    Ok((
        fusion::micro_dataset(train, derive_seed(seed, 1), pool, cfg)?,
        fusion::micro_dataset(val, derive_seed(seed, 2), pool, cfg)?,
    ))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
