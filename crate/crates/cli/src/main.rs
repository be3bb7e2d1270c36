use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use semfuse::aggregation::{StrategyConfig, StrategyKind};
use semfuse::bench::{generate_scenes, simulate_calibration_set, train_stubborn, TRAINING_SEED_OFFSET};
use semfuse::calibration::{apply_temperature, fit_temperature, reliability_diagram, Temperature};
use semfuse::config::{replay_episode, scene_file_name, write_params_file, RunConfig};
use semfuse::hyperopt::{trial_table, tune_strategy, TuningSet};
use semfuse::logit_file::read_logit_file;
use semfuse::map::export_map_with_mask;
use semfuse::metrics::{aggregate_all, metrics_text, read_results_jsonl};
use semfuse::policy::PolicyKind;
use semfuse::report::{ablation_table, ablations, check_totals, comparison_table};
use semfuse::Error;

const SEED_ENV: &str = "SEMFUSE_SEED";

#[derive(Parser)]
#[command(name = "semfuse", version, about = "Semantic map aggregation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scene files.
    GenScenes(GenScenesArgs),
    /// Fit a temperature and print the reliability report.
    Calibrate(CalibrateArgs),
    /// Run the strategy x policy benchmark described by a config file.
    Run(RunArgs),
    /// Random-search the parameters of one strategy.
    Hyperopt(HyperoptArgs),
    /// Summarize one or two result files.
    Report(ReportArgs),
    /// Re-run one episode of a finished run and export its map images.
    ExportMap(ExportMapArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenScenesArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    count: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Labeled logit file; a labeled stream is simulated when omitted.
    #[arg(long)]
    logits: Option<PathBuf>,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    bins: u64,
    /// Size of the simulated stream.
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    /// Overconfidence factor of the simulated stream.
    #[arg(long)]
    overconfidence: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for the report files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct HyperoptArgs {
    #[arg(long)]
    strategy: StrategyKind,
    /// Tune the calibrated variant.
    #[arg(long)]
    calibration: bool,
    /// Tune the variant with the uncertainty found decision.
    #[arg(long)]
    uncertainty: bool,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    budget: u64,
    /// Training episodes per trial.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the best-params file and the trial log.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct ReportArgs {
    /// One or two results files (results.jsonl).
    #[arg(required = true, num_args = 1..=2)]
    results: Vec<PathBuf>,
}

#[derive(Args)]
struct ExportMapArgs {
    /// Output directory of a finished run.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    episode: u64,
    /// Strategy label as shown in the metrics table.
    #[arg(long)]
    strategy: String,
    #[arg(long)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::GenScenes(a) => gen_scenes(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Run(a) => run(a),
        Command::Hyperopt(a) => hyperopt(a),
        Command::Report(a) => report(a),
        Command::ExportMap(a) => export_map(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

/// Flag, then config, then the environment, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("{SEED_ENV} is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig, Failure> {
    match &arg.config {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| Failure::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn gen_scenes(a: GenScenesArgs) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let seed = resolve_seed(a.seed, cfg.seed)?;
    let scenes = generate_scenes(&cfg.scenes.generate, a.count as usize, seed)?;
    create_dir(&a.out)?;
    for (i, s) in scenes.iter().enumerate() {
        s.save(&a.out.join(scene_file_name(i)))?;
    }
    println!("wrote {} scenes to {}", scenes.len(), a.out.display());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> CmdResult {
    let mut cfg = load_config(&a.config)?;
    let seed = resolve_seed(a.seed, cfg.seed)?;
    if let Some(k) = a.overconfidence {
        cfg.noise.overconfidence = k;
        cfg.validate()?;
    }
    let data = match &a.logits {
        Some(p) => read_logit_file(p)?,
        None => {
            let train = generate_scenes(&cfg.scenes.generate, 8, seed.wrapping_add(TRAINING_SEED_OFFSET))?;
            simulate_calibration_set(&train, &cfg.settings(1.0), a.samples as usize, seed)?
        }
    };
    let t = fit_temperature(&data)?;
    let bins = a.bins as usize;
    let (p0, y0) = apply_temperature(&data, Temperature::IDENTITY);
    let before = reliability_diagram(&p0, &y0, bins)?;
    let (p1, y1) = apply_temperature(&data, t);
    let after = reliability_diagram(&p1, &y1, bins)?;
    let text = format!(
        "temperature {:.6}\nsamples {}\n\n# before scaling\n{}\n# after scaling\n{}",
        t.value(),
        data.len(),
        before.to_table(),
        after.to_table()
    );
    print!("{text}");
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write(&dir.join("calibration.txt"), &text)?;
        write(&dir.join("temperature.toml"), &format!("[temperature]\nvalue = {}\n", t.value()))?;
    }
    Ok(())
}

fn run(a: RunArgs) -> CmdResult {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(n) = a.episodes {
        cfg.episodes = n;
    }
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let seed = resolve_seed(a.seed, cfg.seed)?;
    let out = cfg.execute(seed)?;
    for id in &out.invalid {
        eprintln!("warning: episode {id} skipped, target unreachable from its start pose");
    }
    create_dir(&cfg.output_dir)?;
    out.write(&cfg.output_dir, &out.manifest(seed, &cfg.policies))?;
    let mut resolved = cfg.clone();
    resolved.seed = Some(seed);
    write(&cfg.output_dir.join("config.resolved.toml"), &resolved.to_toml()?)?;
    print!("{}", metrics_text(&out.rows));
    Ok(())
}

fn hyperopt(a: HyperoptArgs) -> CmdResult {
    let cfg = load_config(&a.config)?;
    let seed = resolve_seed(a.seed, cfg.seed)?;
    let temperature = cfg.resolve_temperature(seed)?;
    let settings = cfg.settings(temperature);
    let strategy = StrategyConfig::new(a.strategy, a.calibration, a.uncertainty);
    strategy.validate()?;
    let classifier = if a.strategy == StrategyKind::Stubborn {
        Some(Arc::new(train_stubborn(&cfg.scenes.generate, &settings, false, cfg.stubborn.episodes, seed)?))
    } else {
        None
    };
    let set = TuningSet::new(&cfg.scenes.generate, &settings, a.episodes as usize, seed)?;
    let (best, result) = tune_strategy(&strategy, &set, &settings, classifier, a.budget as usize, seed)?;
    create_dir(&a.out)?;
    let label = strategy.label();
    write_params_file(&a.out.join(format!("{label}.params.toml")), &best.params)?;
    let table = trial_table(&result);
    write(&a.out.join(format!("{label}.trials.txt")), &table)?;
    print!("{table}");
    println!("best trial {} objective {:.3}", result.best_trial, result.best_objective);
    Ok(())
}

fn report(a: ReportArgs) -> CmdResult {
    let mut tables = Vec::new();
    for p in &a.results {
        let results = read_results_jsonl(p)?;
        if results.is_empty() {
            return Err(Failure::Runtime(format!("{} holds no results", p.display())));
        }
        let rows = aggregate_all(&results)?;
        check_totals(&rows)?;
        tables.push(rows);
    }
    print!("{}", metrics_text(&tables[0]));
    if let Some(b) = tables.get(1) {
        println!();
        print!("{}", comparison_table(&tables[0], b));
    }
    let abl = ablations(&tables[0]);
    if !abl.is_empty() {
        println!();
        print!("{}", ablation_table(&abl));
    }
    Ok(())
}

fn export_map(a: ExportMapArgs) -> CmdResult {
    let replay = replay_episode(&a.run, a.episode, &a.strategy, a.policy)?;
    let paths = export_map_with_mask(
        &replay.trace.map,
        replay.spec.target_class,
        &replay.trace.target_mask,
        &a.out,
    )?;
    let r = &replay.result;
    println!(
        "episode {} scene {} target {} outcome {:?} steps {}",
        r.episode_id,
        r.scene_id,
        r.target_class,
        r.outcome(),
        r.steps_used
    );
    for p in [&paths.classes, &paths.uncertainty, &paths.target, &paths.legend] {
        println!("{}", p.display());
    }
    Ok(())
}
