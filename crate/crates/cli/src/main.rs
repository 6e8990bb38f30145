//! `netsub`: scenario runs, equilibrium solves, targeting allocations,
//! impact decompositions, welfare reports, coverage rasters, and
//! transaction-trace analytics from one binary.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use netsub_core::equilibrium::{
    read_profile_csv, solve_equilibrium, write_profile_csv, AdoptionProfile, Environment, EtaMode,
    LinkValueCache, SolveOptions,
};
use netsub_core::model::AgentId;
use netsub_core::policy::{
    allocate, apply_program, decompose_impact, standard_rule_set, write_impact_csv,
    DecomposeOptions, SubsidyProgram,
};
use netsub_core::scenario::{
    generate_network, month_bounds, run_scenario_with_modes, simulate_cdr, ScenarioConfig,
};
use netsub_core::traces::{
    account_usage_profiles, build_handset_lineages, detect_activations, detect_middlemen,
    edge_statistics, identify_subsidy_recipients, read_handsets_csv, read_records_csv,
    read_towers_csv, write_handsets_csv, write_records_csv, write_towers_csv, AccountId, ModelId,
    StatsConfig, TraceCalendar, YearMonth,
};
use netsub_core::welfare::{
    build_report, write_report_csv, EquilibriumCase, ReportInputs, TaxConfig,
};
use netsub_core::coverage::{
    coverage_for_month, read_ascii_grid, write_coverage_ascii, LosConfig, Tower,
};

#[derive(Parser)]
#[command(name = "netsub", about = "Network adoption subsidy simulator and trace analytics")]
struct Cli {
    /// Worker thread cap (defaults to the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EtaModeArg {
    Lower,
    Upper,
    Both,
}

impl EtaModeArg {
    fn modes(self) -> Vec<EtaMode> {
        match self {
            EtaModeArg::Lower => vec![EtaMode::Lower],
            EtaModeArg::Upper => vec![EtaMode::ComparableUpper],
            EtaModeArg::Both => vec![EtaMode::Lower, EtaMode::ComparableUpper],
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario configuration JSON; defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                ScenarioConfig::from_json(&text)?
            }
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: generate, solve, evaluate rules, report, trace.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Which taste bound(s) to evaluate.
        #[arg(long, value_enum, default_value = "both")]
        eta_mode: EtaModeArg,
    },
    /// Generate the synthetic environment and tower table only.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an equilibrium for a serialized environment.
    Solve {
        /// environment.json from `generate` or `run`.
        #[arg(long)]
        env: PathBuf,
        /// Starting profile: "never", "first-month", or a profile CSV path.
        #[arg(long, default_value = "first-month")]
        init: String,
        /// Output profile CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Select recipients under a targeting rule.
    Allocate {
        #[arg(long)]
        env: PathBuf,
        /// Baseline profile CSV (defines eligibility).
        #[arg(long)]
        baseline: PathBuf,
        /// Rule name as in the rule table (e.g. priority_degree_high).
        #[arg(long)]
        rule: String,
        #[arg(long)]
        budget: usize,
        /// Program month.
        #[arg(long)]
        month: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output recipients CSV (one agent id per line).
        #[arg(long)]
        out: PathBuf,
    },
    /// Decompose a program's impact against its removal.
    Impact {
        #[arg(long)]
        env: PathBuf,
        /// Recipients CSV (one agent id per line).
        #[arg(long)]
        recipients: PathBuf,
        #[arg(long, default_value_t = 18.94)]
        discount: f64,
        #[arg(long)]
        month: u32,
        #[arg(long, default_value_t = 28.0)]
        full_price: f64,
        /// Output impact CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Welfare report from four solved profiles.
    Report {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        with_lower: PathBuf,
        #[arg(long)]
        with_upper: PathBuf,
        #[arg(long)]
        without_lower: PathBuf,
        #[arg(long)]
        without_upper: PathBuf,
        #[arg(long)]
        recipients: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Table-2/3-style statistics and forensics over a record stream.
    TraceStats {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        towers: PathBuf,
        /// Handset-model registry CSV enabling recipient identification.
        #[arg(long)]
        handsets: Option<PathBuf>,
        /// Subsidized model id.
        #[arg(long)]
        model: Option<u32>,
        /// Identification window, e.g. 2008-01:2008-04.
        #[arg(long)]
        window: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Line-of-sight coverage raster for the towers active in a month.
    Coverage {
        /// Elevation raster (ASCII grid).
        #[arg(long)]
        grid: PathBuf,
        /// Towers CSV (id,lat,lon,rural,height_m,active_month).
        #[arg(long)]
        towers: PathBuf,
        #[arg(long, default_value_t = 1)]
        month: u32,
        /// Output coverage raster path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a transaction stream for a solved profile.
    SimulateCdr {
        #[command(flatten)]
        config: ConfigArgs,
        /// Profile CSV; omitted means the observed profile is re-solved.
        #[arg(long)]
        profile: Option<PathBuf>,
        /// Output directory (records.csv, handsets.csv, towers.csv).
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("thread pool not yet initialized");
    }
    if let Err(err) = dispatch(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn load_env(path: &Path) -> Result<Environment> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Environment::from_json(BufReader::new(file))?)
}

fn load_profile(path: &Path, n: usize) -> Result<AdoptionProfile> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_profile_csv(BufReader::new(file), n)?)
}

fn load_recipients(path: &Path) -> Result<BTreeSet<AgentId>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeSet::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && *l != "agent") {
        out.insert(AgentId(line.parse::<u32>().with_context(|| format!("bad agent id `{line}`"))?));
    }
    Ok(out)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out, eta_mode } => {
            let cfg = config.load()?;
            match run_scenario_with_modes(&cfg, &out, &eta_mode.modes()) {
                Ok(summary) => {
                    println!(
                        "run complete: {} rule rows, {} files, converged={}",
                        summary.rule_rows,
                        summary.manifest.files.len(),
                        summary.all_converged
                    );
                    Ok(())
                }
                Err(err) => {
                    // Structured failure report; partial outputs stay put.
                    let report = serde_json::json!({
                        "status": "failed",
                        "error": err.to_string(),
                        "partial_outputs": true,
                    });
                    let _ = fs::create_dir_all(&out);
                    let _ = fs::write(
                        out.join("error_report.json"),
                        serde_json::to_string_pretty(&report)?,
                    );
                    Err(err.into())
                }
            }
        }
        Command::Generate { config, out } => {
            let cfg = config.load()?;
            let data = generate_network(&cfg, cfg.seed)?;
            fs::create_dir_all(&out)?;
            let mut env_json = Vec::new();
            data.env.to_json(&mut env_json)?;
            fs::write(out.join("environment.json"), env_json)?;
            let mut towers = Vec::new();
            write_towers_csv(&mut towers, &data.towers)?;
            fs::write(out.join("towers.csv"), towers)?;
            let recipients: Vec<String> =
                data.planted_recipients.iter().map(|a| a.to_string()).collect();
            fs::write(out.join("recipients.csv"), format!("agent\n{}\n", recipients.join("\n")))?;
            println!(
                "generated {} agents, {} links, {} towers",
                data.env.n_agents(),
                data.env.graph.links.len(),
                data.towers.towers.len()
            );
            Ok(())
        }
        Command::Solve { env, init, out } => {
            let env = load_env(&env)?;
            let cache = LinkValueCache::build(&env)?;
            let initial = match init.as_str() {
                "never" => AdoptionProfile::all_never(env.n_agents()),
                "first-month" => AdoptionProfile::all_at(env.n_agents(), 1),
                path => load_profile(Path::new(path), env.n_agents())?,
            };
            let solved = solve_equilibrium(&initial, &env, &cache, &SolveOptions::default())?;
            let mut csv = Vec::new();
            write_profile_csv(&mut csv, &solved.profile)?;
            fs::write(&out, csv)?;
            println!(
                "solved in {} rounds (converged={}), {} adopters",
                solved.rounds,
                solved.converged,
                solved.profile.adopter_count()
            );
            Ok(())
        }
        Command::Allocate { env, baseline, rule, budget, month, seed, out } => {
            let env = load_env(&env)?;
            let cache = LinkValueCache::build(&env)?;
            let baseline = load_profile(&baseline, env.n_agents())?;
            let Some(rule) = standard_rule_set(budget).into_iter().find(|r| r.name() == rule)
            else {
                let names: Vec<String> =
                    standard_rule_set(budget).iter().map(|r| r.name()).collect();
                bail!("unknown rule `{rule}`; expected one of {names:?}");
            };
            let outcome =
                allocate(&rule, &env, &cache, &baseline, &BTreeSet::new(), month, seed)?;
            let ids: Vec<String> = outcome.recipients.iter().map(|a| a.to_string()).collect();
            fs::write(&out, format!("agent\n{}\n", ids.join("\n")))?;
            println!("allocated {} recipients (shortfall {})", outcome.recipients.len(), outcome.shortfall);
            Ok(())
        }
        Command::Impact { env, recipients, discount, month, full_price, out } => {
            let env = load_env(&env)?;
            let cache = LinkValueCache::build(&env)?;
            let recipients = load_recipients(&recipients)?;
            let program = SubsidyProgram {
                recipients,
                discount,
                month,
                full_price,
                repayment: 0.0,
                payments_made: 0,
            };
            let env_with = apply_program(&env, &program)?;
            let mut init = AdoptionProfile::all_at(env.n_agents(), 1);
            init.enforce_initial(&env_with);
            let baseline = solve_equilibrium(&init, &env_with, &cache, &SolveOptions::default())?;
            let table = decompose_impact(
                &env,
                &cache,
                &program,
                &baseline.profile,
                &DecomposeOptions::default(),
            )?;
            let mut csv = Vec::new();
            write_impact_csv(&mut csv, &table)?;
            fs::write(&out, csv)?;
            println!(
                "impact written (baseline converged={}, removal converged={})",
                baseline.converged, table.total_converged
            );
            Ok(())
        }
        Command::Report { env, with_lower, with_upper, without_lower, without_upper, recipients, out } => {
            let env = load_env(&env)?;
            let cache = LinkValueCache::build(&env)?;
            let n = env.n_agents();
            let wl = load_profile(&with_lower, n)?;
            let wu = load_profile(&with_upper, n)?;
            let ol = load_profile(&without_lower, n)?;
            let ou = load_profile(&without_upper, n)?;
            let recipients: HashSet<AgentId> = load_recipients(&recipients)?.into_iter().collect();
            let report = build_report(
                &ReportInputs {
                    with_lower: EquilibriumCase { env: &env, profile: &wl },
                    with_upper: EquilibriumCase { env: &env, profile: &wu },
                    without_lower: EquilibriumCase { env: &env, profile: &ol },
                    without_upper: EquilibriumCase { env: &env, profile: &ou },
                },
                &cache,
                &recipients,
                &TaxConfig::default(),
                0,
            )?;
            let mut csv = Vec::new();
            write_report_csv(&mut csv, &report)?;
            fs::write(&out, csv)?;
            println!("report written to {}", out.display());
            Ok(())
        }
        Command::TraceStats { records, towers, handsets, model, window, out } => {
            let records = read_records_csv(BufReader::new(File::open(&records)?))?;
            let towers = read_towers_csv(BufReader::new(File::open(&towers)?))?;
            fs::create_dir_all(&out)?;
            let cal = TraceCalendar::default();
            let cfg = StatsConfig::default();
            let mut recipients: Option<BTreeSet<AccountId>> = None;
            if let (Some(handsets), Some(model), Some(window)) = (&handsets, model, &window) {
                let registry = read_handsets_csv(BufReader::new(File::open(handsets)?))?;
                let (start, end) = window
                    .split_once(':')
                    .context("window must look like 2008-01:2008-04")?;
                let window = (start.parse::<YearMonth>()?, end.parse::<YearMonth>()?);
                let found = identify_subsidy_recipients(
                    &records,
                    &registry,
                    ModelId(model),
                    window,
                    &cal,
                );
                let lineages =
                    build_handset_lineages(&records, Some(&registry), Some(ModelId(model)));
                let subsidized = lineages
                    .by_handset
                    .values()
                    .filter(|l| l.subsidized)
                    .map(|l| l.handset)
                    .collect();
                let middlemen = detect_middlemen(&lineages, &subsidized, 20, 2);
                let ids: Vec<String> = found.iter().map(|a| a.to_string()).collect();
                fs::write(out.join("recipients.csv"), format!("account\n{}\n", ids.join("\n")))?;
                fs::write(
                    out.join("middlemen.json"),
                    serde_json::to_string_pretty(&middlemen)?,
                )?;
                recipients = Some(found);
            }
            let all = edge_statistics(&records, &towers, |_| true, |_| true, &cfg);
            let stats = match &recipients {
                Some(set) => {
                    let rec = edge_statistics(&records, &towers, |a| set.contains(&a), |_| true, &cfg);
                    let within = edge_statistics(
                        &records,
                        &towers,
                        |a| set.contains(&a),
                        |a| set.contains(&a),
                        &cfg,
                    );
                    serde_json::json!({ "all": all, "recipients": rec, "within_recipients": within })
                }
                None => serde_json::json!({ "all": all }),
            };
            fs::write(out.join("edge_stats.json"), serde_json::to_string_pretty(&stats)?)?;
            let threshold = records
                .iter()
                .map(|r| cal.year_month(r.t))
                .min()
                .unwrap_or(YearMonth::new(2008, 1));
            let profiles =
                account_usage_profiles(&records, &towers, threshold, recipients.as_ref(), &cfg);
            let mut profile_csv = String::from(
                "account,mode_tower,rural,adoption_month,calls_per_month,duration_min_per_month,degree,clustering,fraction_to_late_adopters,subsidy_recipient\n",
            );
            for p in profiles.values() {
                profile_csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    p.account,
                    p.mode_tower.map(|t| t.to_string()).unwrap_or_default(),
                    p.rural,
                    p.adoption_month,
                    p.calls_per_month,
                    p.duration_min_per_month,
                    p.degree,
                    p.clustering,
                    p.fraction_duration_to_late_adopters,
                    p.subsidy_recipient
                ));
            }
            fs::write(out.join("account_profiles.csv"), profile_csv)?;
            let activations = detect_activations(&records);
            println!(
                "{} records, {} accounts, {} handsets activated",
                records.len(),
                profiles.len(),
                activations.len()
            );
            Ok(())
        }
        Command::Coverage { grid, towers, month, out } => {
            let grid = read_ascii_grid(&fs::read_to_string(&grid)?)?;
            let table = read_towers_csv(BufReader::new(File::open(&towers)?))?;
            let mut tower_list: Vec<Tower> = table
                .towers
                .iter()
                .map(|(id, info)| Tower {
                    id: id.0,
                    position: info.position,
                    antenna_height_m: info.antenna_height_m,
                    active_month: info.active_month,
                })
                .collect();
            tower_list.sort_by_key(|t| t.id);
            let raster = coverage_for_month(&grid, &tower_list, month, &LosConfig::default())?;
            fs::write(&out, write_coverage_ascii(&raster, grid.origin))?;
            println!(
                "coverage month {month}: {}/{} cells covered",
                raster.covered_count(),
                raster.covered.len()
            );
            Ok(())
        }
        Command::SimulateCdr { config, profile, out } => {
            let cfg = config.load()?;
            let data = generate_network(&cfg, cfg.seed)?;
            let profile = match profile {
                Some(path) => load_profile(&path, data.env.n_agents())?,
                None => {
                    let cache = LinkValueCache::build(&data.env)?;
                    let env_with = apply_program(&data.env, &data.program)?;
                    let mut init = AdoptionProfile::all_at(data.env.n_agents(), 1);
                    init.enforce_initial(&env_with);
                    let mut opts = SolveOptions::default();
                    for r in &data.planted_recipients {
                        init.dates[r.index()] = Some(data.program.month);
                        opts.held_fixed.insert(*r);
                    }
                    solve_equilibrium(&init, &env_with, &cache, &opts)?.profile
                }
            };
            let cdr = simulate_cdr(&profile, &data, &cfg, cfg.seed ^ 0x7ace)?;
            fs::create_dir_all(&out)?;
            let mut records = Vec::new();
            write_records_csv(&mut records, &cdr.records)?;
            fs::write(out.join("records.csv"), records)?;
            let mut handsets = Vec::new();
            write_handsets_csv(&mut handsets, &cdr.registry)?;
            fs::write(out.join("handsets.csv"), handsets)?;
            let mut towers = Vec::new();
            write_towers_csv(&mut towers, &data.towers)?;
            fs::write(out.join("towers.csv"), towers)?;
            let (first, _) = month_bounds(&cfg, 1);
            println!(
                "{} records from {} (epoch {first}), truth: {} recipients, {} middlemen",
                cdr.records.len(),
                cfg.population,
                cdr.truth.recipients.len(),
                cdr.truth.middlemen.len()
            );
            Ok(())
        }
    }
}
