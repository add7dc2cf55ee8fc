use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mixtraffic::checkpoint::{write_curve, Checkpoint};
use mixtraffic::experiments::train_agent;
use mixtraffic::output::{output_root, to_json, write_atomic, write_run, TraceDumps};
use mixtraffic::scenario::{parse_grid, LoadedPolicy, NetworkSpec, PolicySource, Scenario};
use mixtraffic::sweep::{aggregate, parse_rates, read_runs, runs_csv, sort_rows, sweep};
use mixtraffic_core::agent::controller;
use mixtraffic_core::sim::Simulation;

/// Mixed-autonomy intersection control and coverage-aware routing on
/// small synthetic road networks.
#[derive(Parser)]
#[command(name = "mixtraffic", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario with one seed and write metrics.json.
    Run(RunArgs),
    /// Run every (rv rate, seed) cell and write runs.csv and aggregate.csv.
    Sweep(SweepArgs),
    /// Train a linear Q policy and write a checkpoint plus learning curve.
    Train(TrainArgs),
    /// Re-aggregate one or more runs.csv files.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Heuristic,
    Random,
    AlwaysGo,
    Train,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML). Flags override its values.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Grid network RxC, e.g. 3x3.
    #[arg(long)]
    grid: Option<String>,
    /// Grid block length in metres [default: 150].
    #[arg(long)]
    edge_length: Option<f64>,
    /// Total demand in veh/s spread over all entry/exit pairs [default: 0.1 per entry].
    #[arg(long)]
    demand: Option<f64>,
    /// RV penetration rate in [0, 1] [default: 0.6].
    #[arg(long)]
    rv_rate: Option<f64>,
    /// Simulated seconds [default: 1000].
    #[arg(long)]
    horizon: Option<f64>,
    /// Measurement window start in seconds [default: 500].
    #[arg(long)]
    window_start: Option<f64>,
    /// Measurement window end in seconds [default: 1000].
    #[arg(long)]
    window_end: Option<f64>,
    /// Step length in seconds [default: 1].
    #[arg(long)]
    dt: Option<f64>,
    /// Coverage-aware routing [default: on].
    #[arg(long, value_enum)]
    routing: Option<Toggle>,
    /// Stop/Go policy [default: heuristic].
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// Policy checkpoint to run instead of --policy.
    #[arg(long, conflicts_with = "policy")]
    checkpoint: Option<PathBuf>,
    /// Output directory [default: $MIXTRAFFIC_OUTPUT, else ./out].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args)]
#[command(next_help_heading = "Model parameters")]
struct Knobs {
    /// Learning rate [default: 5e-4].
    #[arg(long)]
    lr: Option<f64>,
    /// Discount factor γ [default: 0.99].
    #[arg(long)]
    gamma: Option<f64>,
    /// Queue parity weight λ_parity [default: 0.2].
    #[arg(long)]
    lambda_parity: Option<f64>,
    /// Threat penalty weight λ_threat [default: 0.5].
    #[arg(long)]
    lambda_threat: Option<f64>,
    /// Conflict penalty p_c [default: -1].
    #[arg(long, allow_hyphen_values = true)]
    conflict_penalty: Option<f64>,
    /// Cells counted in the conflict pressure, C0 [default: 3].
    #[arg(long)]
    c0: Option<usize>,
    /// Per-cell weight w_c [default: 1].
    #[arg(long)]
    cell_weight: Option<f64>,
    /// Threat normaliser Z [default: 5].
    #[arg(long)]
    z_norm: Option<f64>,
    /// Reroute activation probability ρ [default: 0.15].
    #[arg(long)]
    rho: Option<f64>,
    /// Maximum detour ratio δ [default: 1.2].
    #[arg(long)]
    delta: Option<f64>,
    /// Incentive strength α [default: 1.0].
    #[arg(long)]
    alpha: Option<f64>,
    /// Commitment distance in metres [default: 50].
    #[arg(long)]
    commitment_distance: Option<f64>,
    /// Reroute cooldown in steps [default: 60].
    #[arg(long)]
    cooldown: Option<usize>,
    /// Target RV coverage [default: rv_rate - 0.05].
    #[arg(long)]
    p_target: Option<f64>,
    /// Steps between coordinator updates [default: 60].
    #[arg(long)]
    update_interval: Option<usize>,
    /// Coverage history length k [default: 5].
    #[arg(long)]
    history: Option<usize>,
    /// Trend prediction horizon h in steps [default: 60].
    #[arg(long)]
    prediction_horizon: Option<f64>,
    /// Control zone radius in metres [default: 30].
    #[arg(long)]
    zone_radius: Option<f64>,
    /// Heuristic threat threshold [default: 0.2].
    #[arg(long)]
    theta_go: Option<f64>,
    /// Heuristic patience as a fraction of the 60 s wait cap [default: 1.0].
    #[arg(long)]
    patience: Option<f64>,
    /// Training episodes [default: 200].
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Run seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write trajectories.csv (time, id, class, edge, position, speed, accel).
    #[arg(long)]
    trajectories: bool,
    /// Write control_log.csv.
    #[arg(long)]
    control_log: bool,
    /// Write routing_log.csv.
    #[arg(long)]
    routing_log: bool,
    /// Write rewards.csv.
    #[arg(long)]
    rewards: bool,
    /// Write cost_maps.csv.
    #[arg(long)]
    cost_maps: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// RV rates as start:end:step or a comma list.
    #[arg(long, default_value = "0.4:0.9:0.1")]
    rv_rates: String,
    /// Seeds 0..N per rate [default: 10].
    #[arg(long)]
    seeds: Option<usize>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Training seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ReportArgs {
    /// runs.csv files written by `sweep`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Also write aggregate.csv into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ScenarioArgs {
    fn resolve(&self) -> anyhow::Result<Scenario> {
        let mut s = match &self.scenario {
            Some(p) => Scenario::load(p)?,
            None => Scenario::default(),
        };
        if let Some(g) = &self.grid {
            let (rows, cols) = parse_grid(g)?;
            s.network = match s.network {
                NetworkSpec::Grid { edge_length, speed_limit, .. } => NetworkSpec::Grid { rows, cols, edge_length, speed_limit },
                NetworkSpec::Explicit { .. } => NetworkSpec::grid(rows, cols),
            };
        }
        if let Some(l) = self.edge_length {
            match &mut s.network {
                NetworkSpec::Grid { edge_length, .. } => *edge_length = l,
                NetworkSpec::Explicit { .. } => bail!("--edge-length only applies to grid networks"),
            }
        }
        if let Some(d) = self.demand {
            s.demand.uniform_rate = Some(d);
        }
        set(&mut s.rv_rate, self.rv_rate);
        set(&mut s.horizon, self.horizon);
        set(&mut s.window[0], self.window_start);
        set(&mut s.window[1], self.window_end);
        set(&mut s.dt, self.dt);
        if let Some(r) = self.routing {
            s.routing = matches!(r, Toggle::On);
        }
        if let Some(p) = self.policy {
            s.policy = match p {
                PolicyArg::Heuristic => PolicySource::Heuristic,
                PolicyArg::Random => PolicySource::Random,
                PolicyArg::AlwaysGo => PolicySource::AlwaysGo,
                PolicyArg::Train => PolicySource::Train,
            };
        }
        if let Some(c) = &self.checkpoint {
            s.policy = PolicySource::Checkpoint(c.clone());
        }
        let k = &self.knobs;
        let p = &mut s.params;
        set(&mut p.lr, k.lr);
        set(&mut p.gamma, k.gamma);
        set(&mut p.lambda_parity, k.lambda_parity);
        set(&mut p.lambda_threat, k.lambda_threat);
        set(&mut p.conflict_penalty, k.conflict_penalty);
        set(&mut p.c0, k.c0);
        set(&mut p.cell_weight, k.cell_weight);
        set(&mut p.z_norm, k.z_norm);
        set(&mut p.rho, k.rho);
        set(&mut p.delta, k.delta);
        set(&mut p.alpha, k.alpha);
        set(&mut p.commitment_distance, k.commitment_distance);
        set(&mut p.cooldown, k.cooldown);
        if k.p_target.is_some() {
            p.p_target = k.p_target;
        }
        set(&mut p.update_interval, k.update_interval);
        set(&mut p.history, k.history);
        set(&mut p.prediction_horizon, k.prediction_horizon);
        set(&mut p.zone_radius, k.zone_radius);
        set(&mut p.theta_go, k.theta_go);
        set(&mut p.patience, k.patience);
        set(&mut p.iterations, k.iterations);
        s.validate()?;
        Ok(s)
    }

    fn out_dir(&self) -> PathBuf {
        output_root(self.out.as_deref())
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn load_policy(s: &Scenario, seed: u64, out: &Path) -> anyhow::Result<LoadedPolicy> {
    Ok(match &s.policy {
        PolicySource::Heuristic => LoadedPolicy::Heuristic(s.params.heuristic()),
        PolicySource::Random => LoadedPolicy::Random,
        PolicySource::AlwaysGo => LoadedPolicy::AlwaysGo,
        PolicySource::Checkpoint(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.c0 != s.params.c0 {
                bail!("checkpoint was trained with c0 = {}, scenario uses {}", ck.c0, s.params.c0);
            }
            LoadedPolicy::Learned(ck.policy())
        }
        PolicySource::Train => {
            let (q, curve) = train_agent(s, seed)?;
            Checkpoint::new(&q, s.params.train_config(seed), s).save(&out.join("checkpoint.json"))?;
            write_curve(&out.join("learning_curve.csv"), &curve)?;
            LoadedPolicy::Learned(q)
        }
    })
}

fn cmd_run(a: &RunArgs) -> anyhow::Result<()> {
    let s = a.scenario.resolve()?;
    let out = a.scenario.out_dir();
    let policy = load_policy(&s, a.seed, &out)?;
    let (net, mut cfg) = s.build()?;
    let dumps = TraceDumps {
        trajectories: a.trajectories,
        control: a.control_log,
        routing: a.routing_log,
        rewards: a.rewards,
        cost_maps: a.cost_maps,
    };
    cfg.record_trajectories = dumps.trajectories;
    cfg.record_rewards = dumps.rewards;
    let (report, trace) = Simulation::new(net, cfg, a.seed)?.run(&mut controller(&policy, false))?;
    write_run(&out, &report, &trace, dumps, s.dt)?;
    write_atomic(&out.join("scenario.toml"), s.to_toml()?.as_bytes())?;
    println!("wrote {}", out.join("metrics.json").display());
    print!("{}", to_json(&report)?);
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> anyhow::Result<()> {
    let mut s = a.scenario.resolve()?;
    set(&mut s.seeds, a.seeds);
    if s.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let out = a.scenario.out_dir();
    if matches!(s.policy, PolicySource::Train) {
        bail!("sweeps need a fixed policy: train first, then pass --checkpoint");
    }
    let rates = parse_rates(&a.rv_rates)?;
    let policy = load_policy(&s, 0, &out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build()?;
    let rows = pool.install(|| sweep(&s, &policy, policy.name(), &rates, &s.seed_list(), Some(&out.join("cells"))))?;
    write_atomic(&out.join("runs.csv"), runs_csv(&rows)?.as_bytes())?;
    let agg = aggregate(&rows).to_csv()?;
    write_atomic(&out.join("aggregate.csv"), agg.as_bytes())?;
    write_atomic(&out.join("scenario.toml"), s.to_toml()?.as_bytes())?;
    let failed = rows.iter().filter(|r| !r.is_ok()).count();
    println!("{} runs ({} failed); wrote {}", rows.len(), failed, out.join("aggregate.csv").display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let s = a.scenario.resolve()?;
    let out = a.scenario.out_dir();
    let (q, curve) = train_agent(&s, a.seed)?;
    let ck = Checkpoint::new(&q, s.params.train_config(a.seed), &s);
    ck.save(&out.join("checkpoint.json"))?;
    write_curve(&out.join("learning_curve.csv"), &curve)?;
    if let Some(last) = curve.last() {
        println!("iteration {} epsilon {:.3} mean return {:.4}", last.iteration, last.epsilon, last.mean_return);
    }
    println!("wrote {} and {}", out.join("checkpoint.json").display(), out.join("learning_curve.csv").display());
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> anyhow::Result<()> {
    let mut rows = Vec::new();
    for p in &a.runs {
        rows.extend(read_runs(p).with_context(|| format!("loading {}", p.display()))?);
    }
    sort_rows(&mut rows);
    let agg = aggregate(&rows).to_csv()?;
    if let Some(out) = &a.out {
        write_atomic(&out.join("aggregate.csv"), agg.as_bytes())?;
    }
    print!("{agg}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
