//! Command-line front end: training runs, greedy evaluation, alignment
//! statistics, intrinsic-reward curve dumps, rule extraction from
//! trajectory logs, and config validation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use coopq_core::config::TrainConfig;
use coopq_core::env::trace::read_trace;
use coopq_core::error::Result;
use coopq_core::knowledge::{extract_rules, parse_rules, Dataset, TreeConfig, Vocabulary};
use coopq_core::metrics::write_curves;
use coopq_core::trainer::Trainer;

/// Output root for runs; relative output directories land under it.
const OUT_ROOT_VAR: &str = "COOPQ_OUT_ROOT";

#[derive(Parser)]
#[command(name = "coopq", version, about = "Cooperative Q-learning with rule-guided intrinsic rewards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Path to the run config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the mixer: vdn or qmix.
    #[arg(long)]
    mixer: Option<String>,
    /// Apply an ablation: no_knowledge, no_intrinsic, or random_knowledge.
    #[arg(long)]
    ablate: Option<String>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additional `key=value` overrides (dotted keys reach sections).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write metrics, checkpoint, and config snapshot.
    Train(ConfigArgs),
    /// Evaluate a checkpoint with greedy actions.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 32)]
        episodes: usize,
        /// Also dump one trace record per (agent, step) as JSON lines.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Behavior-alignment statistics against the configured rule file.
    Align {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
    },
    /// Replay one greedy test episode and write per-agent intrinsic
    /// rewards as CSV.
    Curves {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Destination CSV file.
        #[arg(long, default_value = "curves.csv")]
        csv: PathBuf,
        /// Episode seed for the replay.
        #[arg(long, default_value_t = 0)]
        episode_seed: u64,
    },
    /// Fit a decision tree to a trajectory dump and write a rule file.
    ExtractRules {
        /// Trajectory dump (JSON lines) produced by `eval --dump`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_depth: usize,
        #[arg(long, default_value_t = 20)]
        min_leaf: usize,
        #[arg(long, default_value_t = 0.6)]
        min_purity: f64,
        #[arg(long, default_value_t = 50)]
        min_support: u64,
    },
    /// Parse and validate a config file, reporting the first problem.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut sets: Vec<(String, String)> = Vec::new();
    if let Some(seed) = args.seed {
        sets.push(("seed".into(), seed.to_string()));
    }
    if let Some(mixer) = &args.mixer {
        sets.push(("mixer".into(), mixer.clone()));
    }
    if let Some(ablate) = &args.ablate {
        match ablate.as_str() {
            "no_knowledge" | "no_intrinsic" | "random_knowledge" => {
                sets.push((format!("ablation.{ablate}"), "true".into()));
            }
            other => {
                return Err(coopq_core::Error::Config(format!(
                    "unknown ablation '{other}' (expected no_knowledge, no_intrinsic, or random_knowledge)"
                )))
            }
        }
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            coopq_core::Error::Config(format!("override '{kv}' is not of the form key=value"))
        })?;
        sets.push((k.to_string(), v.to_string()));
    }
    let mut cfg = TrainConfig::load_with_overrides(&args.config, &sets)?;
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(dir) = cfg.out_dir.take() {
        cfg.out_dir = Some(resolve_out_dir(dir));
    }
    Ok(cfg)
}

fn resolve_out_dir(dir: PathBuf) -> PathBuf {
    if dir.is_absolute() {
        return dir;
    }
    match std::env::var_os(OUT_ROOT_VAR) {
        Some(root) => Path::new(&root).join(dir),
        None => dir,
    }
}

fn cmd_train(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let out_dir = cfg.out_dir.clone();
    let mut trainer = Trainer::new(cfg)?;
    let outcome = trainer.train()?;
    println!(
        "trained {} env steps, {} updates; final eval: mean return {:.4}, win rate {:.3}, mean episode length {:.2}",
        outcome.env_steps,
        outcome.updates,
        outcome.final_eval.mean_return,
        outcome.final_eval.win_rate,
        outcome.final_eval.mean_ep_len,
    );
    if let Some(dir) = out_dir {
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn cmd_eval(
    args: &ConfigArgs,
    checkpoint: &Path,
    episodes: usize,
    dump: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(args)?;
    let mut trainer = Trainer::new(cfg)?;
    trainer.load_checkpoint(checkpoint)?;
    let stats = trainer.evaluate(episodes, u64::MAX)?;
    println!(
        "eval over {episodes} greedy episodes: mean return {:.4}, win rate {:.3}, mean episode length {:.2}",
        stats.mean_return, stats.win_rate, stats.mean_ep_len
    );
    if let Some(c) = stats.consistency {
        println!("rule consistency {:.3}", c);
    }
    if let Some(path) = dump {
        trainer.dump_trajectories(episodes, path)?;
        println!("trajectories dumped to {}", path.display());
    }
    Ok(())
}

fn cmd_align(args: &ConfigArgs, checkpoint: &Path, episodes: usize) -> Result<()> {
    let cfg = load_config(args)?;
    let rules_path = cfg.rules.clone().ok_or_else(|| {
        coopq_core::Error::Config("align needs a rule file in the config".into())
    })?;
    let mut trainer = Trainer::new(cfg)?;
    trainer.load_checkpoint(checkpoint)?;
    let vocab = Vocabulary {
        features: trainer.env().feature_names().to_vec(),
        actions: trainer.env().action_names().to_vec(),
    };
    let text = std::fs::read_to_string(&rules_path)?;
    let rules = parse_rules(&text, &vocab)?;
    let stats = trainer.alignment_stats(&rules, episodes)?;
    println!(
        "alignment over {} episodes: avg steps {:.2}, rule-firing steps {}",
        stats.episodes, stats.avg_steps, stats.rule_firing_steps
    );
    match stats.consistency {
        Some(c) => println!("consistency {:.4}", c),
        None => println!("consistency undefined (no rule fired)"),
    }
    Ok(())
}

fn cmd_curves(args: &ConfigArgs, checkpoint: &Path, out: &Path, episode_seed: u64) -> Result<()> {
    let cfg = load_config(args)?;
    let mut trainer = Trainer::new(cfg)?;
    trainer.load_checkpoint(checkpoint)?;
    let rows = trainer.intrinsic_curve(episode_seed)?;
    write_curves(out, &rows)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn cmd_extract(
    data: &Path,
    out: &Path,
    tree: TreeConfig,
) -> Result<()> {
    let records = read_trace(data)?;
    let dataset = Dataset::from_trace(&records)?;
    let rules = extract_rules(&dataset, &tree)?;
    let total = dataset.rows.len() as f64;
    let covered: u64 = rules.rules().iter().map(|r| r.support).sum();
    for rule in rules.rules() {
        let purity = rule
            .preference
            .iter()
            .map(|&(_, w)| w)
            .fold(0.0_f64, f64::max);
        println!(
            "rule {}: support {}, purity {:.3}",
            rule.name, rule.support, purity
        );
    }
    println!("coverage {:.2}", covered as f64 / total);
    if rules.is_empty() {
        eprintln!("warning: no leaf met min_support/min_purity; rule file is empty");
    }
    std::fs::write(out, rules.render(&dataset.vocabulary()))?;
    println!("wrote {} rules to {}", rules.len(), out.display());
    Ok(())
}

fn cmd_validate(config: &Path) -> Result<()> {
    let cfg = TrainConfig::load(config)?;
    if let Some(rules_path) = &cfg.rules {
        let env = coopq_core::env::build(&cfg.env)?;
        let vocab = Vocabulary {
            features: env.feature_names().to_vec(),
            actions: env.action_names().to_vec(),
        };
        let text = std::fs::read_to_string(rules_path).map_err(|e| {
            coopq_core::Error::Config(format!(
                "cannot read rule file {}: {e}",
                rules_path.display()
            ))
        })?;
        let rules = parse_rules(&text, &vocab)?;
        println!("ok: config valid, {} rules parsed", rules.len());
    } else {
        println!("ok: config valid, no rule file");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval { config, checkpoint, episodes, dump } => {
            cmd_eval(config, checkpoint, *episodes, dump.as_deref())
        }
        Command::Align { config, checkpoint, episodes } => {
            cmd_align(config, checkpoint, *episodes)
        }
        Command::Curves { config, checkpoint, csv, episode_seed } => {
            cmd_curves(config, checkpoint, csv, *episode_seed)
        }
        Command::ExtractRules { data, out, max_depth, min_leaf, min_purity, min_support } => {
            cmd_extract(
                data,
                out,
                TreeConfig {
                    max_depth: *max_depth,
                    min_leaf: *min_leaf,
                    min_purity: *min_purity,
                    min_support: *min_support,
                },
            )
        }
        Command::ValidateConfig { config } => cmd_validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
