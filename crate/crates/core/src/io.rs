//! File formats, synthetic load profiles and report tables.
//!
//! AMI readings are average kW over each 15-minute slot. CSV headers:
//!
//! * AMI: `transformer_id,date,p00,...,p95`
//! * metadata: `transformer_id,capacity_kw,customer_count`
//! * trips: `depart_hour,return_hour,weight`
//! * records: one [`EvaluationRecord`] per row
//!
//! The PMF and the tariff are JSON documents (serde form of
//! [`JointCommutePmf`] and [`TouTariff`]).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rand::Rng;
use rand_distr::Uniform;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hostcap::{AggregateStats, EvalStatus, EvaluationRecord};
use crate::model::{LoadProfile, TimeGrid, TouTariff, Transformer, TARIFF_SLOTS};
use crate::scenario::{JointCommutePmf, TripRecord};
use crate::seeding::SeedKey;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<fs::File>, expected: &[String]) -> Result<()> {
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != expected {
        return Err(parse_err(
            path,
            1,
            format!("header must be {}", expected.join(",")),
        ));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("bad {name} {raw:?}")))
}

pub fn ami_header() -> Vec<String> {
    let mut h = vec!["transformer_id".to_string(), "date".to_string()];
    h.extend((0..TARIFF_SLOTS).map(|t| format!("p{t:02}")));
    h
}

const METADATA_HEADER: [&str; 3] = ["transformer_id", "capacity_kw", "customer_count"];

/// Reads profiles from `ami_path` and ratings from `metadata_path`.
/// Transformers come back sorted by id with profiles sorted by date.
pub fn load_ami_csv(ami_path: &Path, metadata_path: &Path) -> Result<Vec<Transformer>> {
    let meta = load_metadata_csv(metadata_path)?;
    let mut rdr = reader(ami_path)?;
    check_header(ami_path, &mut rdr, &ami_header())?;
    let grid = TimeGrid::default();
    let mut profiles: BTreeMap<String, BTreeMap<NaiveDate, Vec<f64>>> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 2 + TARIFF_SLOTS {
            return Err(parse_err(
                ami_path,
                line,
                format!("expected {} readings, found {}", TARIFF_SLOTS, row.len().saturating_sub(2)),
            ));
        }
        let id = row[0].to_string();
        let date: NaiveDate = field(ami_path, line, "date", &row[1])?;
        let mut kw = Vec::with_capacity(TARIFF_SLOTS);
        for t in 0..TARIFF_SLOTS {
            let v: f64 = field(ami_path, line, &format!("p{t:02}"), &row[2 + t])?;
            if !v.is_finite() {
                return Err(parse_err(ami_path, line, format!("p{t:02} is not finite")));
            }
            kw.push(v);
        }
        if profiles.entry(id.clone()).or_default().insert(date, kw).is_some() {
            return Err(parse_err(ami_path, line, format!("duplicate row for {id} on {date}")));
        }
    }

    let mut out = Vec::with_capacity(profiles.len());
    for (id, days) in profiles {
        let (capacity_kw, customer_count) = *meta.get(&id).ok_or_else(|| {
            Error::invalid(format!(
                "{}: transformer {id} has no metadata row",
                metadata_path.display()
            ))
        })?;
        let tr = Transformer {
            profiles: days
                .into_iter()
                .map(|(date, kw)| LoadProfile {
                    transformer_id: id.clone(),
                    date,
                    kw,
                })
                .collect(),
            id,
            capacity_kw,
            customer_count,
        };
        tr.validate(&grid)?;
        out.push(tr);
    }
    Ok(out)
}

fn load_metadata_csv(path: &Path) -> Result<HashMap<String, (f64, u32)>> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = METADATA_HEADER.iter().map(|s| s.to_string()).collect();
    check_header(path, &mut rdr, &header)?;
    let mut meta = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(parse_err(path, line, "expected 3 fields"));
        }
        let capacity: f64 = field(path, line, "capacity_kw", &row[1])?;
        let customers: u32 = field(path, line, "customer_count", &row[2])?;
        if meta.insert(row[0].to_string(), (capacity, customers)).is_some() {
            return Err(parse_err(path, line, format!("duplicate transformer {}", &row[0])));
        }
    }
    Ok(meta)
}

/// Writes the AMI and metadata files for `feeder`.
pub fn write_ami_csv(feeder: &[Transformer], ami_path: &Path, metadata_path: &Path) -> Result<()> {
    let mut ami = ami_header().join(",");
    ami.push('\n');
    let mut meta = METADATA_HEADER.join(",");
    meta.push('\n');
    for tr in feeder {
        let _ = writeln!(meta, "{},{},{}", tr.id, tr.capacity_kw, tr.customer_count);
        for p in &tr.profiles {
            let _ = write!(ami, "{},{}", tr.id, p.date);
            for v in &p.kw {
                let _ = write!(ami, ",{v}");
            }
            ami.push('\n');
        }
    }
    write_text(ami_path, &ami)?;
    write_text(metadata_path, &meta)
}

pub fn load_trips_csv(path: &Path) -> Result<Vec<TripRecord>> {
    let mut rdr = reader(path)?;
    let header = ["depart_hour", "return_hour", "weight"].map(String::from);
    check_header(path, &mut rdr, &header)?;
    let mut trips = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(parse_err(path, line, "expected 3 fields"));
        }
        trips.push(TripRecord {
            depart_hour: field(path, line, "depart_hour", &row[0])?,
            return_hour: field(path, line, "return_hour", &row[1])?,
            weight: field(path, line, "weight", &row[2])?,
        });
    }
    Ok(trips)
}

pub fn write_trips_csv(trips: &[TripRecord], path: &Path) -> Result<()> {
    let mut out = String::from("depart_hour,return_hour,weight\n");
    for t in trips {
        let _ = writeln!(out, "{},{},{}", t.depart_hour, t.return_hour, t.weight);
    }
    write_text(path, &out)
}

pub fn load_pmf_json(path: &Path) -> Result<JointCommutePmf> {
    let pmf: JointCommutePmf = serde_json::from_str(&read_text(path)?)?;
    pmf.validate()?;
    Ok(pmf)
}

pub fn write_pmf_json(pmf: &JointCommutePmf, path: &Path) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(pmf)? + "\n"))
}

pub fn load_tariff_json(path: &Path) -> Result<TouTariff> {
    let tariff: TouTariff = serde_json::from_str(&read_text(path)?)?;
    tariff.validate()?;
    Ok(tariff)
}

pub fn write_tariff_json(tariff: &TouTariff, path: &Path) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(tariff)? + "\n"))
}

// ---------------------------------------------------------------------------
// Synthetic profiles

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    /// Hot-season day: smooth curve peaking in the early evening.
    JulyLike,
    /// Mild day with rooftop solar: low curve, midday dip that can reverse.
    MarchLike,
}

impl Archetype {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "july_like" => Ok(Archetype::JulyLike),
            "march_like" => Ok(Archetype::MarchLike),
            other => Err(Error::invalid(format!("unknown archetype {other:?}"))),
        }
    }

    /// Cooling months (June to September) look like July, the rest like March.
    pub fn for_month(month: u32) -> Self {
        if (6..=9).contains(&month) {
            Archetype::JulyLike
        } else {
            Archetype::MarchLike
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthProfileSpec {
    pub archetype: Archetype,
    pub capacity_kw: f64,
    pub customer_count: u32,
    pub seed: u64,
    pub transformer_id: String,
    pub date: NaiveDate,
}

/// Distance between slots on the 96-slot circle.
fn circular(t: f64, centre: f64) -> f64 {
    let d = (t - centre).abs() % TARIFF_SLOTS as f64;
    d.min(TARIFF_SLOTS as f64 - d)
}

fn bump(t: f64, centre: f64, width: f64) -> f64 {
    let d = circular(t, centre) / width;
    (-d * d).exp()
}

/// One synthetic day of average-kW readings.
///
/// `july_like` peaks at 70-95 % of the rating between 5 and 9 PM and never
/// goes negative. `march_like` peaks at no more than 45 % of the rating, with
/// a midday solar dip that often reverses the flow.
pub fn synth_profile(spec: &SynthProfileSpec) -> Result<LoadProfile> {
    if !(spec.capacity_kw > 0.0) || !spec.capacity_kw.is_finite() {
        return Err(Error::invalid("capacity must be positive"));
    }
    let mut rng = SeedKey::new("synth-profile")
        .u64(spec.seed)
        .str(&spec.transformer_id)
        .str(&spec.date.to_string())
        .rng();
    // Fewer households, spikier aggregate.
    let wiggle = (0.06 / (spec.customer_count.max(1) as f64).sqrt()).min(0.02);
    let noise = Uniform::new_inclusive(-wiggle, wiggle);
    let slots = TARIFF_SLOTS;

    let (peak, shape): (f64, Vec<f64>) = match spec.archetype {
        Archetype::JulyLike => {
            let peak = spec.capacity_kw * rng.gen_range(0.7..=0.95);
            let centre = rng.gen_range(74.0..=78.0);
            let width = rng.gen_range(12.0..=18.0);
            let base = rng.gen_range(0.35..=0.5);
            let shape = (0..slots)
                .map(|t| (base + (1.0 - base) * bump(t as f64, centre, width)) * (1.0 + rng.sample(noise)))
                .collect();
            (peak, shape)
        }
        Archetype::MarchLike => {
            let peak = spec.capacity_kw * rng.gen_range(0.3..=0.45);
            let evening = rng.gen_range(74.0..=80.0);
            let morning = rng.gen_range(26.0..=32.0);
            let solar = rng.gen_range(0.2..=0.8);
            let base = 0.35;
            let shape = (0..slots)
                .map(|t| {
                    let t = t as f64;
                    let v = base + 0.4 * bump(t, morning, 6.0) + 0.65 * bump(t, evening, 10.0)
                        - solar * bump(t, 50.0, 11.0);
                    v + base * rng.sample(noise)
                })
                .collect();
            (peak, shape)
        }
    };
    let top = shape.iter().cloned().fold(f64::MIN, f64::max);
    Ok(LoadProfile {
        transformer_id: spec.transformer_id.clone(),
        date: spec.date,
        kw: shape.iter().map(|v| peak * v / top).collect(),
    })
}

/// A transformer of a synthetic feeder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTransformer {
    pub id: String,
    pub capacity_kw: f64,
    pub customer_count: u32,
}

/// Every day of `months` in `year` for each transformer, archetype chosen by
/// month.
pub fn synth_feeder(
    transformers: &[SynthTransformer],
    year: i32,
    months: &[u32],
    seed: u64,
) -> Result<Vec<Transformer>> {
    let mut out = Vec::with_capacity(transformers.len());
    for tr in transformers {
        let mut profiles = Vec::new();
        for &month in months.iter().collect::<BTreeSet<_>>() {
            let mut day = NaiveDate::from_ymd_opt(year, month, 1)
                .ok_or_else(|| Error::invalid(format!("bad month {month}")))?;
            while chrono::Datelike::month(&day) == month {
                profiles.push(synth_profile(&SynthProfileSpec {
                    archetype: Archetype::for_month(month),
                    capacity_kw: tr.capacity_kw,
                    customer_count: tr.customer_count,
                    seed,
                    transformer_id: tr.id.clone(),
                    date: day,
                })?);
                day = day.succ_opt().expect("in range");
            }
        }
        let t = Transformer {
            id: tr.id.clone(),
            capacity_kw: tr.capacity_kw,
            customer_count: tr.customer_count,
            profiles,
        };
        t.validate(&TimeGrid::default())?;
        out.push(t);
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Records and reports

const RECORD_HEADER: [&str; 11] = [
    "transformer_id",
    "customer_count",
    "month",
    "date",
    "charger_power_kw",
    "scenario_index",
    "desired_ev",
    "supported_ev",
    "status",
    "scenario_seed",
    "cost_cents",
];

pub fn write_records_csv(records: &[EvaluationRecord], path: &Path) -> Result<()> {
    let mut out = RECORD_HEADER.join(",");
    out.push('\n');
    for r in records {
        let cost = r.cost_cents.map(|c| c.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.transformer_id,
            r.customer_count,
            r.month,
            r.date,
            r.charger_power_kw,
            r.scenario_index,
            r.desired_ev,
            r.supported_ev,
            r.status.label(),
            r.scenario_seed,
            cost
        );
    }
    write_text(path, &out)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<EvaluationRecord>> {
    let mut rdr = reader(path)?;
    let header: Vec<String> = RECORD_HEADER.iter().map(|s| s.to_string()).collect();
    check_header(path, &mut rdr, &header)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != RECORD_HEADER.len() {
            return Err(parse_err(path, line, format!("expected {} fields", RECORD_HEADER.len())));
        }
        out.push(EvaluationRecord {
            transformer_id: row[0].to_string(),
            customer_count: field(path, line, "customer_count", &row[1])?,
            month: field(path, line, "month", &row[2])?,
            date: field(path, line, "date", &row[3])?,
            charger_power_kw: field(path, line, "charger_power_kw", &row[4])?,
            scenario_index: field(path, line, "scenario_index", &row[5])?,
            desired_ev: field(path, line, "desired_ev", &row[6])?,
            supported_ev: field(path, line, "supported_ev", &row[7])?,
            status: EvalStatus::parse(&row[8]).map_err(|e| parse_err(path, line, e.to_string()))?,
            scenario_seed: field(path, line, "scenario_seed", &row[9])?,
            cost_cents: match &row[10] {
                "" => None,
                raw => Some(field(path, line, "cost_cents", raw)?),
            },
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "md",
        }
    }
}

const REPORT_COLUMNS: [&str; 4] = [
    "Infeasibility (%)",
    "Less #EV (%)",
    "Desired #EV (%)",
    "Unresolved (%)",
];

fn power_label(kw: f64) -> String {
    format!("{kw} kW")
}

/// Header and rows of the comparison table for one month: one row per
/// transformer, four percentage columns per charging power.
pub fn report_table(aggregates: &[AggregateStats]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let months: BTreeSet<u32> = aggregates.iter().map(|a| a.month).collect();
    if months.len() != 1 {
        return Err(Error::invalid(format!(
            "a report covers exactly one month, got {}",
            months.len()
        )));
    }
    let mut powers: Vec<f64> = aggregates.iter().map(|a| a.charger_power_kw).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();

    let mut header = vec!["Trans Code".to_string(), "# Cust".to_string(), "# EV".to_string()];
    for &p in &powers {
        for c in REPORT_COLUMNS {
            header.push(format!("{c} {}", power_label(p)));
        }
    }

    let mut by_id: BTreeMap<&str, Vec<&AggregateStats>> = BTreeMap::new();
    for a in aggregates {
        by_id.entry(&a.transformer_id).or_default().push(a);
    }
    let mut rows = Vec::with_capacity(by_id.len());
    for (id, group) in by_id {
        let first = group[0];
        let mut row = vec![
            id.to_string(),
            first.customer_count.to_string(),
            first.desired_ev.to_string(),
        ];
        for &p in &powers {
            match group.iter().find(|a| a.charger_power_kw == p) {
                Some(a) => row.extend(
                    [a.pct_infeasible, a.pct_less, a.pct_desired, a.pct_unresolved]
                        .iter()
                        .map(|v| format!("{v:.2}")),
                ),
                None => row.extend(std::iter::repeat(String::new()).take(4)),
            }
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Renders the table; markdown adds a labelled view with unresolved
/// scenarios left out of the denominators.
pub fn render_report(aggregates: &[AggregateStats], format: ReportFormat) -> Result<String> {
    let (header, rows) = report_table(aggregates)?;
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            let quote = |s: &str| {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.to_string()
                }
            };
            for line in std::iter::once(&header).chain(&rows) {
                let cells: Vec<String> = line.iter().map(|c| quote(c)).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            let md_row = |cells: &[String]| format!("| {} |\n", cells.join(" | "));
            let month = aggregates[0].month;
            let _ = writeln!(out, "## Month {month}\n");
            out.push_str(&md_row(&header));
            let rule: Vec<String> = header
                .iter()
                .enumerate()
                .map(|(i, _)| if i == 0 { "---".into() } else { "---:".into() })
                .collect();
            out.push_str(&md_row(&rule));
            for row in &rows {
                out.push_str(&md_row(row));
            }

            if aggregates.iter().any(|a| a.pct_unresolved > 0.0) {
                let _ = writeln!(out, "\n### Renormalized over resolved scenarios (optional view)\n");
                let head = ["Trans Code", "Power", "Infeasibility (%)", "Less #EV (%)", "Desired #EV (%)"]
                    .map(String::from);
                out.push_str(&md_row(&head));
                out.push_str(&md_row(&["---", "---:", "---:", "---:", "---:"].map(String::from)));
                for a in aggregates {
                    let cells = match a.renormalized() {
                        Some((i, l, d)) => [format!("{i:.2}"), format!("{l:.2}"), format!("{d:.2}")],
                        None => ["n/a".into(), "n/a".into(), "n/a".into()],
                    };
                    let mut row = vec![a.transformer_id.clone(), power_label(a.charger_power_kw)];
                    row.extend(cells);
                    out.push_str(&md_row(&row));
                }
            }
        }
    }
    Ok(out)
}

pub fn write_report(aggregates: &[AggregateStats], format: ReportFormat, path: &Path) -> Result<()> {
    if aggregates.is_empty() {
        return Err(Error::invalid("nothing to report"));
    }
    write_text(path, &render_report(aggregates, format)?)
}

/// Writes one report per month into `dir`, named `report_month_MM.<ext>`.
pub fn write_monthly_reports(
    aggregates: &[AggregateStats],
    format: ReportFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let months: BTreeSet<u32> = aggregates.iter().map(|a| a.month).collect();
    let mut written = Vec::new();
    for month in months {
        let subset: Vec<AggregateStats> = aggregates.iter().filter(|a| a.month == month).cloned().collect();
        let path = dir.join(format!("report_month_{month:02}.{}", format.extension()));
        write_report(&subset, format, &path)?;
        written.push(path);
    }
    Ok(written)
}
