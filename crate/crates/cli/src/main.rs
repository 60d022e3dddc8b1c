use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use evhost_core::io::{self, Archetype, ReportFormat, SynthProfileSpec};
use evhost_core::scenario::{build_commute_pmf, SamplingContext};
use evhost_core::{
    aggregate, run_campaign, solve, CampaignSpec, CoordinationParams, EvSpec, JointCommutePmf,
    Scenario, SocDistributions, SolveStatus, TouTariff, Transformer,
};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "evhost", version, about = "EV charging coordination and transformer hosting capacity")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed (campaigns) or profile seed (synthetic profiles).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Wall-clock limit for each coordination solve.
    #[arg(long, global = true)]
    time_limit_secs: Option<f64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for campaigns (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario JSON; writes schedule.csv and result.json.
    Coordinate { scenario: PathBuf },
    /// Run a hosting-capacity campaign over a feeder and write the reports.
    EvaluateFeeder(EvaluateArgs),
    /// Build a joint departure/return PMF from a trip CSV.
    BuildPmf {
        trips: PathBuf,
        #[arg(long, default_value = "trips")]
        tag: String,
    },
    /// Generate synthetic AMI-style daily profiles for one transformer.
    SynthProfiles(SynthArgs),
    /// Rebuild the summary reports from a records CSV.
    Report {
        records: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Both)]
        format: FormatArg,
    },
}

#[derive(Args)]
struct EvaluateArgs {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ami: Option<PathBuf>,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    trips: Option<PathBuf>,
    #[arg(long)]
    pmf: Option<PathBuf>,
    #[arg(long)]
    tariff: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    months: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    powers_kw: Option<Vec<f64>>,
    #[arg(long)]
    n_scenarios: Option<usize>,
    /// Prove the cheapest schedule for every supported fleet (slower).
    #[arg(long)]
    minimize_cost: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// july_like or march_like; inferred from each date's month if omitted.
    #[arg(long)]
    archetype: Option<String>,
    #[arg(long)]
    capacity_kw: f64,
    #[arg(long)]
    customers: u32,
    #[arg(long, default_value = "T01")]
    id: String,
    /// First day to generate.
    #[arg(long)]
    start: NaiveDate,
    #[arg(long, default_value_t = 1)]
    days: u32,
    /// Metadata CSV; defaults to metadata.csv next to the AMI file.
    #[arg(long)]
    metadata: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
    Both,
}

impl FormatArg {
    fn formats(self) -> Vec<ReportFormat> {
        match self {
            FormatArg::Csv => vec![ReportFormat::Csv],
            FormatArg::Markdown => vec![ReportFormat::Markdown],
            FormatArg::Both => vec![ReportFormat::Csv, ReportFormat::Markdown],
        }
    }
}

/// Everything `evaluate-feeder` needs. Fields may come from a config file,
/// flags, or both; flags win. Relative paths in a file are relative to it.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    ami: Option<PathBuf>,
    metadata: Option<PathBuf>,
    trips: Option<PathBuf>,
    pmf: Option<PathBuf>,
    tariff: Option<PathBuf>,
    months: Option<Vec<u32>>,
    powers_kw: Option<Vec<f64>>,
    n_scenarios: Option<usize>,
    master_seed: Option<u64>,
    time_limit_secs: Option<f64>,
    output_dir: Option<PathBuf>,
    threads: Option<usize>,
    minimize_cost: Option<bool>,
}

impl RunConfig {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.ami,
            &mut cfg.metadata,
            &mut cfg.trips,
            &mut cfg.pmf,
            &mut cfg.tariff,
            &mut cfg.output_dir,
        ] {
            if let Some(rel) = p.as_mut() {
                if rel.is_relative() {
                    *rel = base.join(&*rel);
                }
            }
        }
        Ok(cfg)
    }

    fn overlay(&mut self, cli: &Cli, args: &EvaluateArgs) {
        macro_rules! take {
            ($field:ident, $value:expr) => {
                if let Some(v) = $value.clone() {
                    self.$field = Some(v);
                }
            };
        }
        take!(ami, args.ami);
        take!(metadata, args.metadata);
        take!(trips, args.trips);
        take!(pmf, args.pmf);
        take!(tariff, args.tariff);
        take!(months, args.months);
        take!(powers_kw, args.powers_kw);
        take!(n_scenarios, args.n_scenarios);
        take!(master_seed, cli.seed);
        take!(time_limit_secs, cli.time_limit_secs);
        take!(output_dir, cli.out);
        take!(threads, cli.threads);
        if args.minimize_cost {
            self.minimize_cost = Some(true);
        }
    }

    fn validate(&self) -> Result<()> {
        if self.ami.is_none() || self.metadata.is_none() {
            bail!("config needs both `ami` and `metadata`");
        }
        if self.trips.is_some() == self.pmf.is_some() {
            bail!("config needs exactly one of `trips` and `pmf`");
        }
        if self.n_scenarios.unwrap_or(0) < 1 {
            bail!("n_scenarios must be at least 1");
        }
        match &self.months {
            Some(m) if !m.is_empty() && m.iter().all(|m| (1..=12).contains(m)) => {}
            _ => bail!("months must be a non-empty list within 1..=12"),
        }
        match &self.powers_kw {
            Some(p) if !p.is_empty() && p.iter().all(|p| *p > 0.0) => {}
            _ => bail!("powers_kw must be a non-empty list of positive values"),
        }
        if self.output_dir.is_none() {
            bail!("no output directory (set `output_dir` or pass --out)");
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Coordinate { scenario } => coordinate(cli, scenario),
        Command::EvaluateFeeder(args) => evaluate_feeder(cli, args),
        Command::BuildPmf { trips, tag } => build_pmf(cli, trips, tag),
        Command::SynthProfiles(args) => synth_profiles(cli, args),
        Command::Report { records, format } => report(cli, records, *format),
    }
}

fn out_path(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().context("--out is required for this command")
}

fn coordinate(cli: &Cli, path: &Path) -> Result<u8> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut scenario = Scenario::from_json(&text)?;
    if let Some(t) = cli.time_limit_secs {
        scenario.params.time_limit_secs = t;
    }
    let out = out_path(cli)?;
    std::fs::create_dir_all(out)?;
    let result = solve(&scenario)?;
    std::fs::write(out.join("result.json"), serde_json::to_string_pretty(&result)? + "\n")?;

    if let Some(sched) = &result.schedule {
        let mut csv = String::from("slot,base_kw,charging_kw,total_kw");
        for n in 0..sched.num_evs() {
            let _ = write!(csv, ",ev_{n}");
        }
        csv.push('\n');
        for t in 0..scenario.grid.num_slots {
            let base = scenario.profile.kw[t];
            let ev = sched.aggregate_kw[t];
            let _ = write!(csv, "{t},{base},{ev},{}", base + ev);
            for row in &sched.kappa {
                let _ = write!(csv, ",{}", u8::from(row[t]));
            }
            csv.push('\n');
        }
        std::fs::write(out.join("schedule.csv"), csv)?;
    }

    let cost = result
        .cost_cents()
        .map_or_else(|| "-".to_string(), |c| format!("{c:.4} cents"));
    println!("{:?}: {} ({cost})", result.status, result.proof_note);
    Ok(match result.status {
        SolveStatus::Feasible => 0,
        SolveStatus::Infeasible => 2,
        SolveStatus::Unresolved => 3,
    })
}

fn evaluate_feeder(cli: &Cli, args: &EvaluateArgs) -> Result<u8> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.overlay(cli, args);
    cfg.validate()?;

    let feeder: Vec<Transformer> = io::load_ami_csv(cfg.ami.as_ref().unwrap(), cfg.metadata.as_ref().unwrap())?;
    let pmf: JointCommutePmf = match (&cfg.trips, &cfg.pmf) {
        (Some(trips), _) => build_commute_pmf(&io::load_trips_csv(trips)?, "trips")?.0,
        (_, Some(pmf)) => io::load_pmf_json(pmf)?,
        _ => unreachable!("validated"),
    };
    let tariff = match &cfg.tariff {
        Some(p) => io::load_tariff_json(p)?,
        None => TouTariff::srp_default(),
    };
    let mut params = CoordinationParams::default();
    if let Some(t) = cfg.time_limit_secs {
        params.time_limit_secs = t;
    }
    let (dists, ev) = (SocDistributions::default(), EvSpec::default());
    let ctx = SamplingContext {
        pmf: &pmf,
        dists: &dists,
        ev: &ev,
        params: &params,
        tariff: &tariff,
    };
    let spec = CampaignSpec {
        months: cfg.months.clone().unwrap(),
        powers_kw: cfg.powers_kw.clone().unwrap(),
        n_scenarios: cfg.n_scenarios.unwrap(),
        master_seed: cfg.master_seed.unwrap_or(0),
        threads: cfg.threads,
        minimize_cost: cfg.minimize_cost.unwrap_or(false),
    };

    let records = run_campaign(&feeder, &spec, &ctx)?;
    let out = cfg.output_dir.as_ref().unwrap();
    io::write_records_csv(&records, &out.join("records.csv"))?;
    let aggs = aggregate(&records);
    for fmt in FormatArg::Both.formats() {
        io::write_monthly_reports(&aggs, fmt, out)?;
    }
    for a in &aggs {
        println!(
            "{} month {:>2} {:>5} kW: desired {:6.2}%  less {:6.2}%  infeasible {:6.2}%  unresolved {:6.2}%",
            a.transformer_id,
            a.month,
            a.charger_power_kw,
            a.pct_desired,
            a.pct_less,
            a.pct_infeasible,
            a.pct_unresolved
        );
    }
    Ok(0)
}

fn build_pmf(cli: &Cli, trips: &Path, tag: &str) -> Result<u8> {
    let (pmf, summary) = build_commute_pmf(&io::load_trips_csv(trips)?, tag)?;
    io::write_pmf_json(&pmf, out_path(cli)?)?;
    println!(
        "{} trips accepted, {} dropped",
        summary.accepted,
        summary.rejected.len()
    );
    Ok(0)
}

fn synth_profiles(cli: &Cli, args: &SynthArgs) -> Result<u8> {
    let fixed = args.archetype.as_deref().map(Archetype::parse).transpose()?;
    let mut profiles = Vec::with_capacity(args.days as usize);
    let mut day = args.start;
    for _ in 0..args.days {
        let month = chrono::Datelike::month(&day);
        profiles.push(io::synth_profile(&SynthProfileSpec {
            archetype: fixed.unwrap_or(Archetype::for_month(month)),
            capacity_kw: args.capacity_kw,
            customer_count: args.customers,
            seed: cli.seed.unwrap_or(0),
            transformer_id: args.id.clone(),
            date: day,
        })?);
        day = day.succ_opt().context("date out of range")?;
    }
    let tr = Transformer {
        id: args.id.clone(),
        capacity_kw: args.capacity_kw,
        customer_count: args.customers,
        profiles,
    };
    let ami = out_path(cli)?;
    let metadata = match &args.metadata {
        Some(p) => p.clone(),
        None => ami.with_file_name("metadata.csv"),
    };
    io::write_ami_csv(&[tr], ami, &metadata)?;
    Ok(0)
}

fn report(cli: &Cli, records: &Path, format: FormatArg) -> Result<u8> {
    let recs = io::read_records_csv(records)?;
    if recs.is_empty() {
        bail!("{} has no records", records.display());
    }
    let aggs = aggregate(&recs);
    let out = out_path(cli)?;
    for fmt in format.formats() {
        for p in io::write_monthly_reports(&aggs, fmt, out)? {
            println!("{}", p.display());
        }
    }
    Ok(0)
}
