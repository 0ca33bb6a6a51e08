use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coverage_baselines::PlannerKind;
use coverage_cli::summary::SummaryRow;
use coverage_cli::{compute_metrics, load_map, render_trajectory, run_episode, write_summary, ActorPolicy, CliError, MapArg, Policy};
use coverage_core::mapgen::{generate_random_map, random_start_pose, MapTask};
use coverage_core::mapio::{load_world, save_world};
use coverage_core::rng::{stream, Subsystem};
use coverage_core::{EnvConfig, EpisodeLog, ProfileKind, RewardParams, TaskProfile};
use coverage_sac::{final_checkpoint, train, TrainConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Mow,
    ExploreOmni,
    ExploreDir,
}

impl From<ProfileArg> for ProfileKind {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Mow => ProfileKind::Mow,
            ProfileArg::ExploreOmni => ProfileKind::ExploreOmni,
            ProfileArg::ExploreDir => ProfileKind::ExploreDir,
        }
    }
}

/// Coverage path planning workbench: maps, training, evaluation and plots.
#[derive(Debug, Parser)]
#[command(name = "coverage", version)]
struct Cli {
    /// Training configuration JSON; also sets the environment for eval and baseline.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(0..=3))]
    noise_level: Option<u8>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate seeded random maps as graymaps with JSON sidecars.
    GenMaps {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: u64,
    },
    /// Train a soft actor-critic agent.
    Train {
        /// Output directory for metrics.csv, config.json and checkpoints/.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured number of environment steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate a policy on a list of maps and write a summary CSV.
    Eval {
        #[command(flatten)]
        policy: PolicyArgs,
        /// Maps: graymap paths, empty:<side> or random:<seed>.
        #[arg(long, num_args = 1.., required = true)]
        maps: Vec<String>,
        /// Output directory for per-map logs and summary.csv.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        episode: EpisodeArgs,
        /// Report times in minutes instead of seconds.
        #[arg(long)]
        minutes: bool,
    },
    /// Run one classical planner on one map.
    Baseline {
        #[arg(long)]
        planner: PlannerKind,
        /// Graymap path, empty:<side> or random:<seed>.
        #[arg(long)]
        map: String,
        /// Episode log CSV to write.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        episode: EpisodeArgs,
    },
    /// Draw an episode log over its map as a PPM image.
    Render {
        #[arg(long)]
        log: PathBuf,
        /// Graymap path, empty:<side> or random:<seed>.
        #[arg(long)]
        map: String,
        #[arg(long)]
        out: PathBuf,
        /// Pixels per grid cell.
        #[arg(long, default_value_t = 2)]
        scale: usize,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct PolicyArgs {
    /// Trained checkpoint file.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Classical planner: bsa, tsp-offline, tsp-online or frontier.
    #[arg(long)]
    planner: Option<PlannerKind>,
    /// Uniform random actions.
    #[arg(long)]
    random: bool,
}

#[derive(Debug, Args)]
struct EpisodeArgs {
    /// Step limit for each episode.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Coverage fraction that ends an episode.
    #[arg(long, default_value_t = 0.99)]
    goal: f64,
}

fn load_config(cli: &Cli) -> Result<Option<TrainConfig>, CliError> {
    match &cli.config {
        Some(path) if !path.is_file() => Err(CliError::Usage(format!("config file {} does not exist", path.display()))),
        Some(path) => Ok(Some(TrainConfig::load(path)?)),
        None => Ok(None),
    }
}

/// Environment for evaluation: command-line flags over the config file over
/// the checkpoint's training config over profile defaults.
fn env_config(cli: &Cli, stored: Option<&TrainConfig>, episode: &EpisodeArgs) -> Result<EnvConfig, CliError> {
    let file = load_config(cli)?;
    let mut env = match file.as_ref().or(stored) {
        Some(t) => t.env_config(episode.goal),
        None => EnvConfig::for_profile(ProfileKind::Mow),
    };
    if let Some(p) = cli.profile {
        let kind = ProfileKind::from(p);
        if kind != env.profile.kind {
            env.profile = TaskProfile::for_kind(kind);
            env.rewards = RewardParams::for_profile(kind);
        }
    }
    if let Some(n) = cli.noise_level {
        env.noise_level = n;
    }
    env.goal_coverage = episode.goal;
    Ok(env)
}

fn write_log(path: &Path, log: &EpisodeLog) -> Result<(), CliError> {
    log.write_csv(fs::File::create(path)?)?;
    Ok(())
}

fn gen_maps(cli: &Cli, out: &Path, count: u64) -> Result<(), CliError> {
    let profile = cli.profile.map(ProfileKind::from).unwrap_or(ProfileKind::Mow);
    let radius = TaskProfile::for_kind(profile).agent_radius;
    let first = cli.seed.unwrap_or(0);
    fs::create_dir_all(out)?;
    for seed in first..first + count {
        let map = generate_random_map(seed, MapTask::from(profile));
        let start = random_start_pose(&map.world, radius, &mut stream(seed, Subsystem::Episode));
        let path = out.join(format!("map_{seed:05}.pgm"));
        save_world(&path, &map.world, Some(profile.name()), &[start])?;
        println!("{} side {:.2} m", path.display(), map.side);
    }
    Ok(())
}

fn train_cmd(cli: &Cli, out: &Path, steps: Option<usize>) -> Result<(), CliError> {
    let mut config = load_config(cli)?.unwrap_or_default();
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(p) = cli.profile {
        config.profile = p.into();
    }
    if let Some(n) = cli.noise_level {
        config.noise_level = n;
    }
    if let Some(s) = steps {
        config.total_steps = s;
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(&config)?)?;
    let ckpt = out.join("checkpoints");
    let episodes = train(config, &out.join("metrics.csv"), &ckpt)?;
    println!("{} episodes, final checkpoint {}", episodes.len(), final_checkpoint(&ckpt).display());
    Ok(())
}

fn eval(cli: &Cli, policy: &PolicyArgs, maps: &[String], out: &Path, episode: &EpisodeArgs, minutes: bool) -> Result<(), CliError> {
    let (policy, stored) = match (&policy.checkpoint, policy.planner) {
        (Some(path), _) => {
            if !path.is_file() {
                return Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())));
            }
            let actor = ActorPolicy::load(path)?;
            let stored = actor.train.clone();
            (Policy::Actor(Box::new(actor)), stored)
        }
        (None, Some(kind)) => (Policy::Baseline(kind), None),
        (None, None) => (Policy::Random, None),
    };
    let env = env_config(cli, stored.as_ref(), episode)?;
    let seed = cli.seed.unwrap_or(0);
    let args = maps.iter().map(|m| m.parse::<MapArg>()).collect::<Result<Vec<_>, _>>()?;
    let instances = args.iter().map(|a| load_map(a, env.profile.kind, seed)).collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for map in &instances {
        let log = run_episode(&policy, map, &env, seed, episode.max_steps)?;
        write_log(&out.join(format!("{}.csv", map.id)), &log)?;
        let m = compute_metrics(&log);
        log::info!("{}: coverage {:.3} after {} steps", map.id, m.final_coverage, log.records.len() - 1);
        rows.push(SummaryRow::new(&map.id, &policy.name(), &m));
    }
    let summary = out.join("summary.csv");
    write_summary(fs::File::create(&summary)?, &rows, minutes)?;
    print!("{}", fs::read_to_string(&summary)?);
    Ok(())
}

fn baseline(cli: &Cli, planner: PlannerKind, map: &str, out: Option<&Path>, episode: &EpisodeArgs) -> Result<(), CliError> {
    let env = env_config(cli, None, episode)?;
    let seed = cli.seed.unwrap_or(0);
    let map = load_map(&map.parse()?, env.profile.kind, seed)?;
    let log = run_episode(&Policy::Baseline(planner), &map, &env, seed, episode.max_steps)?;
    if let Some(path) = out {
        write_log(path, &log)?;
    }
    println!("{}", serde_json::to_string_pretty(&compute_metrics(&log))?);
    Ok(())
}

fn render(cli: &Cli, log: &Path, map: &str, out: &Path, scale: usize) -> Result<(), CliError> {
    if !log.is_file() {
        return Err(CliError::Usage(format!("log file {} does not exist", log.display())));
    }
    let log = EpisodeLog::read_csv(fs::File::open(log)?)?;
    let kind = cli.profile.map(ProfileKind::from).or_else(|| ProfileKind::parse(&log.header.profile)).unwrap_or(ProfileKind::Mow);
    let world = match map.parse::<MapArg>()? {
        MapArg::File(path) if !path.is_file() => return Err(CliError::Usage(format!("map file {} does not exist", path.display()))),
        MapArg::File(path) => load_world(&path)?.0,
        other => load_map(&other, kind, 0)?.world.as_ref().clone(),
    };
    let img = render_trajectory(&log, &world, &TaskProfile::for_kind(kind), scale);
    fs::write(out, img.to_ppm())?;
    println!("{} ({}x{})", out.display(), img.width, img.height);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenMaps { out, count } => gen_maps(cli, out, *count),
        Command::Train { out, steps } => train_cmd(cli, out, *steps),
        Command::Eval { policy, maps, out, episode, minutes } => eval(cli, policy, maps, out, episode, *minutes),
        Command::Baseline { planner, map, out, episode } => baseline(cli, *planner, map, out.as_deref(), episode),
        Command::Render { log, map, out, scale } => render(cli, log, map, out, *scale),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
