use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ampi_core::ampi::{run_ampi_q, run_ampi_v, run_cbmpi, GenerativeModel, IterationTrace, TabularModel};
use ampi_core::analysis::{audit_run, AuditOptions, BoundVariant, Run};
use ampi_core::approx::{ExhaustivePolicySpace, LinearScoreSpace, OneHot, Policy, SharedFeatures, StackedActions};
use ampi_core::env::{evaluate_steps_to_go, make_garnet, make_prop1_mdp, MountainCar, MountainCarState};
use ampi_core::mdp::{check_noncontraction, exact_mpi, parse_mdp, EvalSteps, MpiOptions, TabularMdp, ValueFunction};
use ampi_core::{AmpiConfig, Variant};
use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::experiment::{mountain_car_features, run_experiment, Environment, ExperimentSpec};
use crate::format::fmt_sig6;
use crate::plot::{emit_plot_data, parse_aggregate_csv, Axis};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "ampi",
    about = "Approximate modified policy iteration toolkit",
    arg_required_else_help = true
)]
struct Cli {
    /// Configuration file with [mdp], [algo] and [experiment] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override any configuration key: `section.key=value`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a tabular MDP with exact modified policy iteration.
    SolveExact(SolveArgs),
    /// One run of a sampled algorithm; writes the per-iteration trace.
    Run(RunArgs),
    /// Audit the error-propagation bounds on a recorded tabular run.
    CheckBounds(CheckArgs),
    /// Expansion ratio of one MPI update on the two-state switching MDP.
    Counterexample(CounterArgs),
    /// Parameter sweep; writes raw.csv and aggregate.csv under --out, else
    /// prints the aggregate.
    Experiment(ExperimentArgs),
    /// Pivot an aggregate CSV into plot series.
    EmitPlot(PlotArgs),
}

#[derive(Debug, Args)]
struct MdpArgs {
    /// MDP in the plain-text format.
    #[arg(long)]
    mdp: Option<PathBuf>,
    /// `prop1`, `garnet` or `mountain-car`.
    #[arg(long = "env")]
    environment: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    mdp: MdpArgs,
    /// Evaluation steps per iteration, or `inf`.
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    mdp: MdpArgs,
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "M")]
    big_m: Option<usize>,
    #[arg(long = "N")]
    big_n: Option<usize>,
    #[arg(long = "n")]
    n: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[command(flatten)]
    mdp: MdpArgs,
    /// Iterates CSV (`k,state,value,action`) as written by `run`.
    #[arg(long)]
    iterates: PathBuf,
    #[arg(long)]
    m: Option<usize>,
    /// `ampi` (also `ampi-v`, `ampi-q`) or `cbmpi` (also `dpi`).
    #[arg(long)]
    variant: Option<String>,
    /// Comma-separated norm exponents; `inf` for the sup norm.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
    /// Slack below `-tol` counts as a violation.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Debug, Args)]
struct CounterArgs {
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Comma-separated perturbation sizes.
    #[arg(long, default_value = "0.1")]
    eps: String,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long = "env")]
    environment: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Aggregate CSV written by `experiment`.
    #[arg(long)]
    input: PathBuf,
    /// `m` or `p`.
    #[arg(long, default_value = "m")]
    axis: String,
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for item in &cli.set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set `{item}` is not SECTION.KEY=VALUE")))?;
        let (section, key) = key.split_once('.').unwrap_or(("", key));
        config.set(section.trim(), key.trim(), value.trim());
    }
    if let Some(seed) = cli.seed {
        config.set("algo", "seed", seed.to_string());
        config.set("experiment", "seed", seed.to_string());
    }
    if let Some(out) = &cli.out {
        config.set("experiment", "out", out.display().to_string());
    }
    let workers = match cli.workers {
        Some(w) => w,
        None => config.get_or("experiment", "workers", 1)?,
    };
    let out = cli.out.as_deref();
    match cli.command {
        Command::SolveExact(args) => solve_exact(config, args, out),
        Command::Run(args) => run(config, args, out),
        Command::CheckBounds(args) => check_bounds(config, args, out),
        Command::Counterexample(args) => counterexample(args),
        Command::Experiment(args) => experiment(config, args, workers),
        Command::EmitPlot(args) => emit_plot(args, out),
    }
}

fn apply_mdp_args(config: &mut Config, args: &MdpArgs) {
    if let Some(path) = &args.mdp {
        config.set("mdp", "file", path.display().to_string());
    }
    if let Some(env) = &args.environment {
        config.set("mdp", "environment", env.clone());
        config.set("experiment", "environment", env.clone());
    }
    if let Some(gamma) = args.gamma {
        config.set("mdp", "gamma", gamma.to_string());
    }
}

/// The tabular MDP named by `[mdp]`: a `file`, or the `prop1` / `garnet`
/// generators.
fn load_tabular(config: &Config) -> Result<TabularMdp, CliError> {
    if let Some(path) = config.raw("mdp", "file") {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
        return Ok(parse_mdp(&text)?);
    }
    match config.raw("mdp", "environment").unwrap_or("prop1") {
        "prop1" => Ok(make_prop1_mdp(config.get_or("mdp", "gamma", 0.9)?)?),
        "garnet" => match Environment::from_config(config)? {
            Environment::Garnet(spec) => Ok(make_garnet(&spec)?),
            _ => unreachable!("garnet environment parses to a garnet spec"),
        },
        other => Err(CliError::Validation(format!(
            "`{other}` is not a tabular MDP (use --mdp, prop1 or garnet)"
        ))),
    }
}

fn tuple(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| fmt_sig6(*x)).collect();
    format!("({})", parts.join(", "))
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn print(text: &str) -> Result<(), CliError> {
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn solve_exact(mut config: Config, args: SolveArgs, out: Option<&Path>) -> Result<(), CliError> {
    apply_mdp_args(&mut config, &args.mdp);
    if let Some(m) = &args.m {
        config.set("algo", "m", m.clone());
    }
    let mdp = load_tabular(&config)?;
    let m_text = config.raw("algo", "m").unwrap_or("inf").to_string();
    let steps = EvalSteps::parse(&m_text)
        .ok_or_else(|| CliError::Validation(format!("m must be a positive integer or `inf`, got `{m_text}`")))?;
    let opts = MpiOptions {
        tol: args.tol.unwrap_or(config.get_or("algo", "tol", 1e-10)?),
        k_max: config.get_or("algo", "k_max", 100_000)?,
    };
    let outcome = exact_mpi(&mdp, &ValueFunction::zeros(mdp.n_states()), steps, opts)?;
    let values = outcome.value.as_slice();
    let actions: Vec<String> = outcome.policy.as_slice().iter().map(usize::to_string).collect();
    print(&format!(
        "v_* = {}\npi_* = ({})\niterations = {}\nconverged = {}\n",
        tuple(values),
        actions.join(", "),
        outcome.trace.len(),
        outcome.converged
    ))?;
    if let Some(dir) = out {
        let mut csv = String::from("state,value,action\n");
        for (s, v) in values.iter().enumerate() {
            csv.push_str(&format!("{s},{v},{}\n", outcome.policy.action(s)));
        }
        write_file(dir, "solution.csv", &csv)?;
    }
    Ok(())
}

fn ampi_config(config: &Config, n_actions: usize) -> Result<AmpiConfig, CliError> {
    let variant: Variant = config.get_or("algo", "variant", Variant::Cbmpi)?;
    let defaults = AmpiConfig::default();
    let c = AmpiConfig {
        variant,
        m: config.get_or("algo", "m", defaults.m)?,
        samples: config.get_or("algo", "M", defaults.samples)?,
        greedy_states: config.get_or("algo", "N", defaults.greedy_states)?,
        eval_states: config.get_or(
            "algo",
            "n",
            if variant == Variant::Cbmpi {
                defaults.eval_states
            } else {
                0
            },
        )?,
        k_max: config.get_or("algo", "k_max", defaults.k_max)?,
        seed: config.get_or("algo", "seed", defaults.seed)?,
        initial_action: config.get_or("algo", "initial_action", defaults.initial_action)?,
    };
    c.validate(n_actions)?;
    Ok(c)
}

fn run(mut config: Config, args: RunArgs, out: Option<&Path>) -> Result<(), CliError> {
    apply_mdp_args(&mut config, &args.mdp);
    for (key, value) in [
        ("variant", args.variant.clone()),
        ("m", args.m.map(|x| x.to_string())),
        ("M", args.big_m.map(|x| x.to_string())),
        ("N", args.big_n.map(|x| x.to_string())),
        ("n", args.n.map(|x| x.to_string())),
        ("k_max", args.k_max.map(|x| x.to_string())),
    ] {
        if let Some(v) = value {
            config.set("algo", key, v);
        }
    }
    let (trace, summary) =
        if config.raw("mdp", "environment") == Some("mountain-car") && config.raw("mdp", "file").is_none() {
            run_mountain_car(&config)?
        } else {
            let mdp = load_tabular(&config)?;
            run_tabular(&config, mdp)?
        };
    print(&trace.to_csv())?;
    print(&summary)?;
    if let Some(dir) = out {
        write_file(dir, "trace.csv", &trace.to_csv())?;
        if let Some(iterates) = trace.iterates_csv() {
            write_file(dir, "iterates.csv", &iterates)?;
        }
    }
    Ok(())
}

fn run_tabular(config: &Config, mdp: TabularMdp) -> Result<(IterationTrace, String), CliError> {
    let n = mdp.n_states();
    let n_actions = mdp.n_actions();
    let c = ampi_config(config, n_actions)?;
    let model = TabularModel::uniform(mdp);
    let features: SharedFeatures<usize> = Arc::new(OneHot { n });
    let trace = match c.variant {
        Variant::AmpiV => run_ampi_v(&model, features, &c)?.trace,
        Variant::AmpiQ => run_ampi_q(&model, Arc::new(StackedActions::new(features, n_actions)), &c)?.trace,
        Variant::Cbmpi | Variant::Dpi => {
            run_cbmpi(&model, features, &ExhaustivePolicySpace::new(n, n_actions), &c)?.trace
        }
    };
    let loss = trace.records.last().and_then(|r| r.loss);
    let summary = format!("final_loss = {}\n", loss.map(fmt_sig6).unwrap_or_default());
    Ok((trace, summary))
}

fn run_mountain_car(config: &Config) -> Result<(IterationTrace, String), CliError> {
    let Environment::MountainCar {
        noise,
        gamma,
        rbf,
        sigma,
        bias,
        eval_start,
        eval_episodes,
    } = Environment::from_config(config)?
    else {
        unreachable!("mountain-car environment parses to a mountain-car spec");
    };
    let model = MountainCar { noise, gamma };
    let c = ampi_config(config, model.n_actions())?;
    let features: SharedFeatures<MountainCarState> = Arc::new(mountain_car_features(rbf, sigma, bias)?);
    let episodes_seed = ampi_core::rng::mix(&[c.seed, 0x7065_7266]);
    let (trace, steps) = match c.variant {
        Variant::AmpiV => {
            let outcome = run_ampi_v(&model, features, &c)?;
            let policy = ampi_core::ampi::SampledGreedyPolicy {
                model: &model,
                value: outcome.value,
                samples: c.samples,
                seed: c.seed,
                k: c.k_max + 1,
            };
            let steps = evaluate_steps_to_go(
                &model,
                |s: &MountainCarState| policy.action(s),
                eval_start,
                eval_episodes,
                episodes_seed,
            );
            (outcome.trace, steps)
        }
        Variant::AmpiQ => {
            let outcome = run_ampi_q(&model, Arc::new(StackedActions::new(features, 3)), &c)?;
            let policy = outcome.policy;
            let steps = evaluate_steps_to_go(
                &model,
                |s: &MountainCarState| policy.action(s),
                eval_start,
                eval_episodes,
                episodes_seed,
            );
            (outcome.trace, steps)
        }
        Variant::Cbmpi | Variant::Dpi => {
            let space = LinearScoreSpace::new(features.clone(), model.n_actions());
            let outcome = run_cbmpi(&model, features, &space, &c)?;
            let policy = outcome.policy;
            let steps = evaluate_steps_to_go(
                &model,
                |s: &MountainCarState| policy.action(s),
                eval_start,
                eval_episodes,
                episodes_seed,
            );
            (outcome.trace, steps)
        }
    };
    Ok((trace, format!("steps_to_go = {}\n", fmt_sig6(steps))))
}

fn parse_exponent(text: &str) -> Result<f64, CliError> {
    match text.trim() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        t => t
            .parse()
            .map_err(|_| CliError::Validation(format!("bad norm exponent `{t}`"))),
    }
}

fn check_bounds(mut config: Config, args: CheckArgs, out: Option<&Path>) -> Result<(), CliError> {
    apply_mdp_args(&mut config, &args.mdp);
    let mdp = load_tabular(&config)?;
    let text = std::fs::read_to_string(&args.iterates)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.iterates.display())))?;
    let run = Run::from_csv(&text, mdp.n_states(), mdp.n_actions())?;
    let m = match args.m {
        Some(m) => m,
        None => config.get_or("algo", "m", 1)?,
    };
    let variant_text = args
        .variant
        .clone()
        .or_else(|| config.raw("algo", "variant").map(str::to_string))
        .unwrap_or_else(|| "ampi".into());
    let variant = match variant_text.as_str() {
        "ampi" | "ampi-v" | "ampi-q" => BoundVariant::Ampi,
        "cbmpi" | "dpi" => BoundVariant::Cbmpi,
        other => return Err(CliError::Validation(format!("unknown bound variant `{other}`"))),
    };
    let mut opts = AuditOptions::default();
    if let Some(ps) = &args.p {
        opts.ps = ps.split(',').map(parse_exponent).collect::<Result<_, _>>()?;
    }
    if let Some(q) = &args.q {
        opts.q = parse_exponent(q)?;
    }
    let report = audit_run(&mdp, &run, m, variant, &opts)?;
    let csv = report.to_csv();
    match out {
        Some(dir) => write_file(dir, "bounds.csv", &csv)?,
        None => print(&csv)?,
    }
    let violations = report.violations(args.tol).len();
    if violations > 0 {
        return Err(CliError::BoundViolation(violations, report.min_slack()));
    }
    eprintln!(
        "all {} checks hold; smallest slack {:e}",
        report.rows.len(),
        report.min_slack()
    );
    Ok(())
}

fn counterexample(args: CounterArgs) -> Result<(), CliError> {
    let eps: Vec<f64> = args
        .eps
        .split(',')
        .map(|e| {
            e.trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("bad epsilon `{e}`")))
        })
        .collect::<Result<_, _>>()?;
    let rows = check_noncontraction(args.gamma, args.m, &eps)?;
    let mut text = String::new();
    for row in rows {
        text.push_str(&format!(
            "eps = {}  pi = ({})  pi' = ({})  ratio = {:.6}\n",
            row.epsilon,
            action_names(row.policy.as_slice()),
            action_names(row.policy_prime.as_slice()),
            row.ratio
        ));
    }
    print(&text)
}

fn action_names(actions: &[usize]) -> String {
    actions
        .iter()
        .map(|a| match *a {
            ampi_core::env::STAY => "stay",
            ampi_core::env::CHANGE => "change",
            _ => "?",
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn experiment(mut config: Config, args: ExperimentArgs, workers: usize) -> Result<(), CliError> {
    for (key, value) in [
        ("environment", args.environment.clone()),
        ("runs", args.runs.map(|x| x.to_string())),
        ("budget", args.budget.map(|x| x.to_string())),
        ("k_max", args.k_max.map(|x| x.to_string())),
    ] {
        if let Some(v) = value {
            config.set("experiment", key, v);
        }
    }
    let spec = ExperimentSpec::from_config(&config)?;
    let table = run_experiment(&spec, workers)?;
    match &spec.out_dir {
        Some(_) => Ok(()),
        None => print(&table.aggregate_csv()),
    }
}

fn emit_plot(args: PlotArgs, out: Option<&Path>) -> Result<(), CliError> {
    let axis: Axis = args.axis.parse()?;
    let text =
        std::fs::read_to_string(&args.input).map_err(|e| CliError::Io(format!("{}: {e}", args.input.display())))?;
    let table = parse_aggregate_csv(&text)?;
    let csv = emit_plot_data(&table, axis)?;
    match out {
        Some(dir) => write_file(dir, &format!("plot_{}.csv", args.axis), &csv),
        None => print(&csv),
    }
}
