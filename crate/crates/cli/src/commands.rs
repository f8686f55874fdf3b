use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use nanoscope_core::campaign::{outcomes_csv, read_campaign_batch, run_batch, simulate_grid, PolicyDecision, PolicyGate, DEFAULT_INTEREST_GRID};
use nanoscope_core::estimator::{
    build_matrix, quantile_vector, report_from_matrices, subgroup_reports, BootstrapSettings, Grouping,
    DEFAULT_MIN_GROUP_USERS, DEFAULT_RESAMPLES,
};
use nanoscope_core::exec::Execution;
use nanoscope_core::index::{build_index, CensorPolicy};
use nanoscope_core::population::{generate_population, ingest, load_population, save_population, summary_stats, GeneratorConfig, Population};
use nanoscope_core::risk::{risk_list, whatif_uniqueness, AudienceTable, ProfileSession, RiskEntry, RiskThresholds};
use nanoscope_core::selection::{SelectionKind, SelectionStrategy};
use nanoscope_core::{InterestId, UserId};
use nanoscope_server::{AppState, ServerConfig, Source};

use crate::Failure;

#[derive(Parser)]
#[command(name = "nanoscope", version, about = "Interest-based re-identification analytics")]
pub struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

impl Cli {
    pub fn log_level(&self) -> &'static str {
        match (self.quiet, self.verbose) {
            (true, _) => "error",
            (false, 0) => "info",
            (false, 1) => "debug",
            (false, _) => "trace",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population.
    Generate(GenerateArgs),
    /// Import a population from a users file and a catalog file.
    Ingest(IngestArgs),
    /// Print summary statistics of a population.
    Stats(StatsArgs),
    /// Estimate how many interests make a user unique.
    Fit(FitArgs),
    /// Uniqueness reports per demographic group.
    Subgroups(SubgroupArgs),
    /// Simulate nanotargeting campaigns.
    Simulate(SimulateArgs),
    /// Risk list and what-if uniqueness for one user.
    Risk(RiskArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generator configuration (TOML). Without it the calibrated profile is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Users for the calibrated profile.
    #[arg(long, default_value_t = 100_000, conflicts_with = "config")]
    users: usize,
    /// Seed for the calibrated profile.
    #[arg(long, default_value_t = 1, conflicts_with = "config")]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Line-delimited JSON, one user per line.
    #[arg(long)]
    users: PathBuf,
    /// CSV with `interest_id,name` columns.
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    population: PathBuf,
    /// Also write `stats.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    population: PathBuf,
    /// `lp`, `random`, or both separated by a comma.
    #[arg(long, default_value = "lp,random")]
    strategy: String,
    /// Seed of the random strategy and of the bootstrap.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Smallest audience size the platform reports.
    #[arg(long, default_value_t = 1)]
    floor: u64,
    /// Quantiles Q, i.e. 100 times the uniqueness probabilities P.
    #[arg(long, default_value = "50,80,90,95", value_delimiter = ',')]
    quantiles: Vec<f64>,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    bootstrap: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    estimate: EstimateArgs,
}

#[derive(Args)]
struct SubgroupArgs {
    /// `gender`, `age` or `country`.
    #[arg(long)]
    group: String,
    #[arg(long, default_value_t = DEFAULT_MIN_GROUP_USERS)]
    min_users: usize,
    #[command(flatten)]
    estimate: EstimateArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    population: PathBuf,
    #[arg(long, default_value = "random")]
    strategy: String,
    /// Seed for target sampling and the random strategy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Interest counts to try.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_INTEREST_GRID)]
    interests: Vec<usize>,
    /// Targets per interest count.
    #[arg(long, default_value_t = 1000)]
    targets: usize,
    /// Reach floor shown to the advertiser.
    #[arg(long, default_value_t = 1)]
    floor: u64,
    /// Reject campaigns with more interests than this.
    #[arg(long)]
    gate_max_interests: Option<usize>,
    /// Reject campaigns whose true audience is below this.
    #[arg(long)]
    gate_min_audience: Option<u64>,
    /// Run the campaigns listed in this JSONL file instead of a grid.
    #[arg(long, conflicts_with_all = ["interests", "targets"])]
    batch: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RiskArgs {
    #[arg(long, required_unless_present = "audience_table", conflicts_with = "audience_table")]
    population: Option<PathBuf>,
    /// CSV of `interest_id,audience_size[,name]` listing the user's interests.
    #[arg(long)]
    audience_table: Option<PathBuf>,
    #[arg(long)]
    user: UserId,
    /// Interests to remove before reporting.
    #[arg(long, value_delimiter = ',')]
    remove: Vec<InterestId>,
    /// Ordering for the what-if view.
    #[arg(long, default_value = "lp")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    floor: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, required_unless_present = "audience_table", conflicts_with = "audience_table")]
    population: Option<PathBuf>,
    #[arg(long, requires = "user")]
    audience_table: Option<PathBuf>,
    /// The user an audience table belongs to.
    #[arg(long)]
    user: Option<UserId>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Allowed browser origin (repeatable). Default: any localhost origin.
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
    /// Static files served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Seed of the random strategy.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bootstrap resamples behind `/api/report`.
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    report_resamples: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Ingest(a) => {
            let population = ingest(&a.users, &a.catalog)?;
            info!("ingested {} users, {} interests", population.len(), population.catalog().len());
            save_population(&population, &a.out)?;
            Ok(())
        }
        Command::Stats(a) => stats(a),
        Command::Fit(a) => fit(a.estimate),
        Command::Subgroups(a) => subgroups(a),
        Command::Simulate(a) => simulate(a),
        Command::Risk(a) => risk(a),
        Command::Serve(a) => serve(a),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("outputs serialise");
    s.push('\n');
    s
}

fn load(dir: &Path) -> Result<Population> {
    let population = load_population(dir)?;
    info!("loaded {} users, {} interests from {}", population.len(), population.catalog().len(), dir.display());
    Ok(population)
}

fn strategies(raw: &str, seed: u64) -> Result<Vec<SelectionStrategy>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let kind: SelectionKind = part.trim().parse()?;
        if out.iter().any(|s: &SelectionStrategy| s.kind == kind) {
            return Err(Failure::Usage(format!("strategy {} listed twice", kind.label())).into());
        }
        out.push(SelectionStrategy::new(kind, seed));
    }
    Ok(out)
}

fn probabilities(quantiles: &[f64]) -> Result<Vec<f64>> {
    quantiles
        .iter()
        .map(|&q| {
            if q > 0.0 && q < 100.0 {
                Ok(q / 100.0)
            } else {
                Err(Failure::Usage(format!("quantile {q} outside (0, 100)")).into())
            }
        })
        .collect()
}

fn generate(a: GenerateArgs) -> Result<()> {
    let config = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            GeneratorConfig::from_toml_str(&text)?
        }
        None => GeneratorConfig::calibrated(a.users, a.seed),
    };
    let population = generate_population(&config)?;
    info!("generated {} users over {} interests", population.len(), population.catalog().len());
    save_population(&population, &a.out)?;
    write(&a.out, "generator.toml", &config.to_toml_string())
}

fn stats(a: StatsArgs) -> Result<()> {
    let population = load(&a.population)?;
    let report = json(&summary_stats(&population)?);
    print!("{report}");
    if let Some(out) = &a.out {
        write(out, "stats.json", &report)?;
    }
    Ok(())
}

struct Estimation {
    population: Population,
    index: nanoscope_core::index::InvertedIndex,
    strategies: Vec<SelectionStrategy>,
    p_list: Vec<f64>,
    policy: CensorPolicy,
    settings: BootstrapSettings,
}

fn prepare(a: &EstimateArgs) -> Result<Estimation> {
    let strategies = strategies(&a.strategy, a.seed)?;
    let p_list = probabilities(&a.quantiles)?;
    let policy = CensorPolicy::new(a.floor)?;
    let population = load(&a.population)?;
    let index = build_index(&population)?;
    Ok(Estimation {
        population,
        index,
        strategies,
        p_list,
        policy,
        settings: BootstrapSettings {
            n_resamples: a.bootstrap,
            seed: a.seed,
        },
    })
}

fn fit(a: EstimateArgs) -> Result<()> {
    let e = prepare(&a)?;
    let mut matrices = Vec::new();
    for strategy in &e.strategies {
        let matrix = build_matrix(&e.population, &e.index, strategy, e.policy, None)?;
        for &q in &a.quantiles {
            let vector = quantile_vector(&matrix, q).map_err(nanoscope_core::Error::from)?;
            write(&a.out, &format!("quantiles_{}_q{q}.csv", strategy.kind.label()), &vector.to_csv())?;
        }
        matrices.push(matrix);
    }
    let report = report_from_matrices(&matrices, &e.p_list, &e.settings, Execution::default())?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write(&a.out, "report.json", &json(&report))?;
    write(&a.out, "report.csv", &report.to_csv())
}

fn subgroups(a: SubgroupArgs) -> Result<()> {
    let grouping: Grouping = a.group.parse()?;
    let e = prepare(&a.estimate)?;
    let reports = subgroup_reports(
        &e.population,
        &e.index,
        grouping,
        a.min_users,
        &e.strategies,
        &e.p_list,
        e.policy,
        &e.settings,
    )?;
    for s in &reports.skipped {
        info!("skipped {}: {}", s.label, s.reason);
    }
    write(&a.estimate.out, "subgroups.json", &json(&reports))?;
    write(&a.estimate.out, "subgroups.csv", &reports.to_csv())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let kind: SelectionKind = a.strategy.parse()?;
    let strategy = SelectionStrategy::new(kind, a.seed);
    let policy = CensorPolicy::new(a.floor)?;
    let gate = PolicyGate {
        max_interests: a.gate_max_interests,
        min_active_audience: a.gate_min_audience,
    };
    let population = load(&a.population)?;
    let index = build_index(&population)?;
    let campaigns = match &a.batch {
        Some(path) => {
            let specs = read_campaign_batch(path, policy)?;
            run_batch(&index, &population, &specs, &gate)?
        }
        None => {
            let sim = simulate_grid(&index, &population, &strategy, &a.interests, a.targets, a.seed, &gate, policy)?;
            let mut csv = String::from("n_interests,targets,accepted,successes,success_rate\n");
            for r in &sim.rows {
                info!("N={}: success rate {:.3}", r.n_interests, r.success_rate);
                csv.push_str(&format!("{},{},{},{},{}\n", r.n_interests, r.targets, r.accepted, r.successes, r.success_rate));
            }
            write(&a.out, "success_rates.csv", &csv)?;
            write(&a.out, "success_rates.json", &json(&sim.rows))?;
            sim.campaigns
        }
    };
    write(&a.out, "campaigns.csv", &outcomes_csv(campaigns.iter().filter_map(|c| c.outcome.as_ref())))?;
    let mut rejected = String::from("target,n_interests,reason\n");
    for c in &campaigns {
        if let PolicyDecision::Rejected(r) = &c.decision {
            rejected.push_str(&format!("{},{},\"{r}\"\n", c.spec.target, c.spec.n_interests));
        }
    }
    write(&a.out, "rejected.csv", &rejected)
}

fn risk_csv(entries: &[RiskEntry]) -> String {
    let mut out = String::from("interest_id,name,audience,level,status\n");
    for e in entries {
        let name = if e.name.contains([',', '"']) { format!("\"{}\"", e.name.replace('"', "\"\"")) } else { e.name.clone() };
        let status = serde_json::to_value(e.status).expect("status serialises");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.interest_id,
            name,
            e.audience,
            e.level,
            status.as_str().unwrap_or_default()
        ));
    }
    out
}

fn risk(a: RiskArgs) -> Result<()> {
    let thresholds = RiskThresholds::default();
    let kind: SelectionKind = a.strategy.parse()?;
    let policy = CensorPolicy::new(a.floor)?;
    match (&a.population, &a.audience_table) {
        (Some(dir), _) => {
            let population = load(dir)?;
            let mut session = ProfileSession::for_user(&population, a.user)?;
            for &i in &a.remove {
                session.remove(i)?;
            }
            let list = risk_list(&session, &population, &thresholds)?;
            write(&a.out, "risks.json", &json(&list))?;
            write(&a.out, "risks.csv", &risk_csv(&list))?;
            let index = build_index(&population)?;
            let report = whatif_uniqueness(&session, &index, &population, &SelectionStrategy::new(kind, a.seed), policy)?;
            write(&a.out, "whatif.json", &json(&report))
        }
        (None, Some(path)) => {
            let table = AudienceTable::load(path)?;
            let mut session = ProfileSession::new(a.user, table.interests());
            for &i in &a.remove {
                session.remove(i)?;
            }
            let list = risk_list(&session, &table, &thresholds)?;
            write(&a.out, "risks.json", &json(&list))?;
            write(&a.out, "risks.csv", &risk_csv(&list))
        }
        (None, None) => Err(Failure::Usage("pass --population or --audience-table".into()).into()),
    }
}

fn serve(a: ServeArgs) -> Result<()> {
    let source = match (&a.population, &a.audience_table, a.user) {
        (Some(dir), _, _) => Source::population(load(dir)?)?,
        (None, Some(path), Some(user_id)) => Source::Table {
            user_id,
            table: std::sync::Arc::new(AudienceTable::load(path)?),
        },
        _ => return Err(Failure::Usage("pass --population, or --audience-table with --user".into()).into()),
    };
    let config = ServerConfig {
        cors_origins: a.cors_origins,
        static_dir: a.static_dir,
        strategy_seed: a.seed,
        bootstrap: BootstrapSettings {
            n_resamples: a.report_resamples,
            seed: a.seed,
        },
        ..ServerConfig::default()
    };
    let state = AppState::new(source, config);
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(nanoscope_server::serve(state, a.listen))?;
    Ok(())
}
