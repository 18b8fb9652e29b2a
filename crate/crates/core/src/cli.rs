use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use proact::agents::{AgentKind, PolicyParams};
use proact::config::Config;
use proact::env::telepathy::{build_default_kb, EntityKb};
use proact::env::turtle::{load_pack, JudgeMode};
use proact::env::{EnvKind, EnvSuite};
use proact::grpo::{train, write_curve_csv, Checkpoint, GrpoConfig, TrainConfig};
use proact::metrics::{write_frontier_csv, EvalReport};
use proact::protocol::{ServerContext, TrajectoryLog};
use proact::runner::{rollout, task_suite, verify_log, RolloutSpec};
use proact::server::{serve_stdio, Server};
use proact::shaping::ShapingConfig;
use proact::{mdp, Error, Result};

const USAGE_ERROR: i32 = 1;
const RUNTIME_ERROR: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "proact", version, about = "Proactive-agent gyms, GRPO training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded task suite as JSONL (one {"task_id"} per line).
    GenTasks(GenTasksArgs),
    /// Play episodes with an agent and write trajectories as JSONL.
    Rollout(RolloutArgs),
    /// Train the template policy with behavior-regularized GRPO.
    Train(TrainArgs),
    /// Summarize a trajectory log into a metrics report and Pareto frontier.
    Eval(EvalArgs),
    /// Serve the line-delimited JSON protocol over TCP or stdio.
    Serve(ServeArgs),
    /// Re-run a trajectory log and check it reproduces byte for byte.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// key=value configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum expression depth of generated Function-Gym contexts (1-3).
    #[arg(long, global = true)]
    function_depth: Option<usize>,
    /// Telepathy knowledge base file ({entities:[{name, attributes}]}).
    #[arg(long, global = true)]
    kb: Option<PathBuf>,
    /// Seed of the built-in Telepathy knowledge base.
    #[arg(long, global = true)]
    kb_seed: Option<u64>,
    /// Turtle story pack file.
    #[arg(long, global = true)]
    stories: Option<PathBuf>,
    /// Turtle judge: strict or leaky.
    #[arg(long, global = true)]
    judge: Option<String>,
    #[arg(long, global = true)]
    lambda_ans: Option<f64>,
    #[arg(long, global = true)]
    lambda_think: Option<f64>,
}

#[derive(Args, Debug)]
struct GenTasksArgs {
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct RolloutArgs {
    #[arg(long)]
    env: Option<String>,
    /// naive | behavioral | trainable | exploiter
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    budget: Option<usize>,
    /// Task suite from gen-tasks; overrides --env/--episodes.
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Policy checkpoint for the trainable agent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Episodes per epoch.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    clip_eps: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Leave groups whose returns are all equal out of the update (true/false).
    #[arg(long)]
    skip_degenerate: Option<bool>,
    /// Lower bound on the group return std used for normalization.
    #[arg(long)]
    std_floor: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    /// Checkpoint output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training curve CSV path.
    #[arg(long)]
    curve: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 5)]
    k_max: usize,
    /// Report JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pareto frontier CSV path.
    #[arg(long)]
    frontier: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7878")]
    bind: String,
    /// Speak the protocol on stdin/stdout instead of TCP.
    #[arg(long)]
    stdio: bool,
    /// Trajectory log (JSONL, appended).
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    common: Common,
}

const CONFIG_KEYS: &[&str] = &[
    "env", "agent", "seed", "episodes", "epochs", "budget", "lambda_ans", "lambda_think", "gamma", "group_size",
    "clip_eps", "learning_rate", "skip_degenerate", "std_floor", "function_depth", "kb", "kb_seed", "stories", "judge", "out",
];

/// Flags merged over an optional config file.
struct Settings {
    config: Config,
}

impl Settings {
    fn load(common: &Common) -> Result<Self> {
        let config = match &common.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let unknown = config.unknown_keys(CONFIG_KEYS);
        if !unknown.is_empty() {
            return Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))));
        }
        Ok(Self { config })
    }

    fn pick<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.config.get(key)?.unwrap_or(default),
        })
    }

    fn pick_opt<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.config.get(key)?,
        })
    }

    fn env(&self, flag: &Option<String>) -> Result<EnvKind> {
        let name = self.pick(flag.clone(), "env", "function".to_string())?;
        name.parse().map_err(Error::Config)
    }

    fn shaping(&self, common: &Common) -> Result<ShapingConfig> {
        let la = self.pick(common.lambda_ans, "lambda_ans", proact::shaping::DEFAULT_LAMBDA_ANS)?;
        let lt = self.pick(common.lambda_think, "lambda_think", proact::shaping::DEFAULT_LAMBDA_THINK)?;
        ShapingConfig::new(la, lt).map_err(Error::Config)
    }

    fn suite(&self, common: &Common) -> Result<EnvSuite> {
        let depth = self.pick(common.function_depth, "function_depth", proact::env::function::DEFAULT_MAX_DEPTH)?;
        if !(1..=3).contains(&depth) {
            return Err(Error::Config(format!("function_depth must be 1..=3, got {depth}")));
        }
        let judge: JudgeMode = self.pick(common.judge.clone(), "judge", "strict".to_string())?.parse().map_err(Error::Config)?;
        let kb = match self.pick_opt(common.kb.as_ref().map(|p| p.display().to_string()), "kb")? {
            Some(path) => EntityKb::load(Path::new(&path)).map_err(|e| Error::Config(format!("{path}: {e}")))?,
            None => build_default_kb(self.pick(common.kb_seed, "kb_seed", 0)?),
        };
        let mut suite = EnvSuite { function_depth: depth, kb: Arc::new(kb), judge, ..EnvSuite::default() };
        if let Some(path) = self.pick_opt(common.stories.as_ref().map(|p| p.display().to_string()), "stories")? {
            let stories = load_pack(Path::new(&path)).map_err(|e| Error::Config(format!("{path}: {e}")))?;
            if stories.is_empty() {
                return Err(Error::Config(format!("{path}: no stories")));
            }
            suite = suite.with_stories(stories);
        }
        Ok(suite)
    }

    fn echo(&self, extra: &[(&str, String)]) -> BTreeMap<String, String> {
        let mut out = self.config.entries().clone();
        for (k, v) in extra {
            out.insert(k.to_string(), v.clone());
        }
        out
    }
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

fn write_config_sidecar(out: &Path, echo: &BTreeMap<String, String>) -> Result<()> {
    let mut f = BufWriter::new(File::create(format!("{}.config", out.display()))?);
    for (k, v) in echo {
        writeln!(f, "{k}={v}")?;
    }
    f.flush()?;
    Ok(())
}

fn read_tasks(path: &Path) -> Result<Vec<String>> {
    #[derive(serde::Deserialize)]
    struct Task {
        task_id: String,
    }
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str::<Task>(&line)?.task_id);
        }
    }
    Ok(out)
}

fn gen_tasks(a: GenTasksArgs) -> Result<()> {
    let s = Settings::load(&a.common)?;
    let env = s.env(&a.env)?;
    let seed = s.pick(a.seed, "seed", 0)?;
    let n = s.pick(a.episodes, "episodes", 100)?;
    let mut out = writer(a.out.as_deref())?;
    for task in task_suite(env, seed, n) {
        writeln!(out, "{}", serde_json::json!({ "task_id": task }))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_rollout(a: RolloutArgs) -> Result<()> {
    let s = Settings::load(&a.common)?;
    let suite = s.suite(&a.common)?;
    let shaping = s.shaping(&a.common)?;
    let agent: AgentKind = s.pick(a.agent.clone(), "agent", "behavioral".to_string())?.parse().map_err(Error::Config)?;
    if agent == AgentKind::Replay {
        return Err(Error::Config("use the replay subcommand to play back a log".into()));
    }
    let seed = s.pick(a.seed, "seed", 0)?;
    let budget = s.pick_opt(a.budget, "budget")?;
    let tasks = match &a.tasks {
        Some(path) => read_tasks(path)?,
        None => task_suite(s.env(&a.env)?, seed, s.pick(a.episodes, "episodes", 10)?),
    };
    let policy = match &a.checkpoint {
        Some(path) => Some(Arc::new(Checkpoint::load(path)?.policy()?)),
        None if agent == AgentKind::Trainable => Some(Arc::new(PolicyParams::default())),
        None => None,
    };
    let spec = RolloutSpec { agent, seed, shaping, budget, policy };
    let trajs = rollout(&suite, &tasks, &spec)?;
    let mut out = writer(a.out.as_deref())?;
    mdp::write_jsonl(&mut out, &trajs)?;
    out.flush()?;
    if let Some(path) = &a.out {
        let echo = s.echo(&[
            ("agent", agent.to_string()),
            ("seed", seed.to_string()),
            ("lambda_ans", shaping.lambda_ans.to_string()),
            ("lambda_think", shaping.lambda_think.to_string()),
            ("function_depth", suite.function_depth.to_string()),
            ("judge", format!("{:?}", suite.judge).to_lowercase()),
        ]);
        write_config_sidecar(path, &echo)?;
    }
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let s = Settings::load(&a.common)?;
    let suite = s.suite(&a.common)?;
    let defaults = GrpoConfig::training();
    let grpo = GrpoConfig {
        gamma: s.pick(a.gamma, "gamma", defaults.gamma)?,
        clip_eps: s.pick(a.clip_eps, "clip_eps", defaults.clip_eps)?,
        group_size: s.pick(a.group_size, "group_size", defaults.group_size)?,
        learning_rate: s.pick(a.learning_rate, "learning_rate", defaults.learning_rate)?,
        skip_degenerate: s.pick(a.skip_degenerate, "skip_degenerate", defaults.skip_degenerate)?,
        std_floor: s.pick(a.std_floor, "std_floor", defaults.std_floor)?,
    };
    let cfg = TrainConfig {
        env: s.env(&a.env)?,
        grpo,
        shaping: s.shaping(&a.common)?,
        epochs: s.pick(a.epochs, "epochs", 30)?,
        episodes_per_epoch: s.pick(a.episodes, "episodes", 128)?,
        seed: s.pick(a.seed, "seed", 0)?,
        budget: s.pick_opt(a.budget, "budget")?,
    };
    let out = match a.out.clone() {
        Some(p) => Some(p),
        None => s.config.get_str("out").map(PathBuf::from),
    };
    let (policy, curve) = train(PolicyParams::default(), &suite, &cfg, out.as_deref())?;
    let mut echo = s.echo(&[]);
    echo.extend(cfg.echo());
    echo.insert("function_depth".into(), suite.function_depth.to_string());
    match &out {
        Some(path) => Checkpoint::new(&policy, echo.clone()).save(path)?,
        None => println!("{}", serde_json::to_string_pretty(&Checkpoint::new(&policy, echo.clone()))?),
    }
    if let Some(path) = &a.curve {
        let mut w = BufWriter::new(File::create(path)?);
        write_curve_csv(&mut w, &curve, &echo)?;
        w.flush()?;
    }
    for r in &curve {
        eprintln!("epoch {:>3}  score {:.3}  ur {:.3}  explore {:.3}  loss {:+.4}", r.epoch, r.score, r.ur, r.exploration_ratio, r.loss);
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let s = Settings::load(&a.common)?;
    if a.k_max == 0 {
        return Err(Error::Config("--k-max must be at least 1".into()));
    }
    let trajs = mdp::read_jsonl(BufReader::new(File::open(&a.input)?))?;
    let mut report = EvalReport::compute(&trajs, a.k_max)?;
    report.config = s.echo(&[("in", a.input.display().to_string()), ("k_max", a.k_max.to_string())]);
    let mut out = writer(a.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    out.flush()?;
    if let Some(path) = &a.frontier {
        let mut w = BufWriter::new(File::create(path)?);
        write_frontier_csv(&mut w, &report.frontier())?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> Result<()> {
    let s = Settings::load(&a.common)?;
    let log = a.log.as_deref().map(TrajectoryLog::open).transpose()?;
    let ctx = ServerContext::new(s.suite(&a.common)?, s.shaping(&a.common)?, log);
    if a.stdio {
        serve_stdio(ctx)?;
    } else {
        let server = Server::bind(&a.bind, ctx)?;
        eprintln!("listening on {}", server.local_addr()?);
        server.run()?;
    }
    Ok(())
}

fn cmd_replay(a: ReplayArgs) -> Result<()> {
    let s = Settings::load(&a.common)?;
    let lines: Vec<String> = BufReader::new(File::open(&a.input)?).lines().collect::<std::io::Result<_>>()?;
    let n = verify_log(&s.suite(&a.common)?, &lines, &s.shaping(&a.common)?)?;
    println!("replayed {n} trajectories: identical");
    Ok(())
}

pub fn run<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { USAGE_ERROR } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenTasks(a) => gen_tasks(a),
        Command::Rollout(a) => cmd_rollout(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => 0,
        Err(Error::Config(msg)) => {
            eprintln!("error: {msg}");
            USAGE_ERROR
        }
        Err(e) => {
            eprintln!("error: {e}");
            RUNTIME_ERROR
        }
    }
}
