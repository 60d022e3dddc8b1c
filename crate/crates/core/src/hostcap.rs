//! Hosting capacity: how many EVs a transformer can serve on a given day,
//! Monte Carlo campaigns over a feeder, and the summary tables.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordinator::{solve_for, Goal, SolveStatus};
use crate::error::{Error, Result};
use crate::model::{ChargerSpec, Transformer};
use crate::scenario::{make_scenario, SamplingContext};
use crate::seeding::SeedKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EvalStatus {
    Infeasible,
    LessThanDesired,
    Desired,
    Unresolved,
}

impl EvalStatus {
    pub fn label(self) -> &'static str {
        match self {
            EvalStatus::Infeasible => "Infeasible",
            EvalStatus::LessThanDesired => "LessThanDesired",
            EvalStatus::Desired => "Desired",
            EvalStatus::Unresolved => "Unresolved",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "Infeasible" => Ok(EvalStatus::Infeasible),
            "LessThanDesired" => Ok(EvalStatus::LessThanDesired),
            "Desired" => Ok(EvalStatus::Desired),
            "Unresolved" => Ok(EvalStatus::Unresolved),
            other => Err(Error::invalid(format!("unknown evaluation status {other:?}"))),
        }
    }
}

/// Outcome of one transformer-day evaluation.
///
/// For `Unresolved` records `supported_ev` is the largest count that was
/// shown feasible below the undecided one (0 if none).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub transformer_id: String,
    pub customer_count: u32,
    pub month: u32,
    pub date: NaiveDate,
    pub charger_power_kw: f64,
    pub scenario_index: usize,
    pub desired_ev: u32,
    pub supported_ev: u32,
    pub status: EvalStatus,
    pub scenario_seed: u64,
    /// Optimal cost of the supported fleet; only filled in when the campaign
    /// minimizes cost and the optimum was proved.
    pub cost_cents: Option<f64>,
}

fn classify(supported: u32, desired: u32) -> EvalStatus {
    if supported == 0 {
        EvalStatus::Infeasible
    } else if supported == desired {
        EvalStatus::Desired
    } else {
        EvalStatus::LessThanDesired
    }
}

/// Decrement-until-feasible search for one transformer-day.
///
/// `desired_ev` sessions are sampled once; the first `n` of them are solved
/// for `n = desired_ev, desired_ev - 1, ..., 1` and the first feasible `n`
/// is reported. A solve that times out with a schedule in hand still shows
/// its `n` is feasible; one that times out without a schedule leaves the
/// record `Unresolved`. With [`Goal::AnySchedule`] each solve only has to
/// settle feasibility, which is all the count depends on.
pub fn max_supported_evs(
    transformer: &Transformer,
    date: NaiveDate,
    charger: ChargerSpec,
    ctx: &SamplingContext<'_>,
    seed: u64,
    goal: Goal,
) -> Result<EvaluationRecord> {
    let profile = transformer.profile_for(date)?;
    let desired = transformer.desired_ev_count();
    let mut record = EvaluationRecord {
        transformer_id: transformer.id.clone(),
        customer_count: transformer.customer_count,
        month: profile.month(),
        date,
        charger_power_kw: charger.power_kw,
        scenario_index: 0,
        desired_ev: desired,
        supported_ev: 0,
        status: EvalStatus::Infeasible,
        scenario_seed: seed,
        cost_cents: None,
    };
    if desired == 0 {
        record.status = EvalStatus::Desired;
        return Ok(record);
    }

    let full = make_scenario(transformer, date, charger, desired as usize, ctx, seed)?;
    let mut undecided = false;
    for n in (1..=desired).rev() {
        let result = solve_for(&full.truncated(n as usize), goal)?;
        match result.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Feasible => {
                record.supported_ev = n;
                if goal == Goal::MinCost {
                    record.cost_cents = result.cost_cents();
                }
            }
            SolveStatus::Unresolved if result.has_schedule() => record.supported_ev = n,
            SolveStatus::Unresolved => {
                undecided = true;
                continue;
            }
        }
        break;
    }
    record.status = if undecided {
        EvalStatus::Unresolved
    } else {
        classify(record.supported_ev, desired)
    };
    Ok(record)
}

/// What to run over a feeder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub months: Vec<u32>,
    pub powers_kw: Vec<f64>,
    pub n_scenarios: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses all cores. Results do not depend on it.
    pub threads: Option<usize>,
    /// Prove the cost optimum of every supported fleet (slower); otherwise
    /// solves stop at the first valid schedule.
    #[serde(default)]
    pub minimize_cost: bool,
}

/// Seed of one campaign cell.
pub fn scenario_seed(master_seed: u64, transformer_id: &str, month: u32, power_kw: f64, index: usize) -> u64 {
    SeedKey::new("scenario")
        .u64(master_seed)
        .str(transformer_id)
        .u64(month as u64)
        .f64(power_kw)
        .u64(index as u64)
        .finish()
}

struct WorkItem<'a> {
    transformer: &'a Transformer,
    date: NaiveDate,
    power_kw: f64,
    index: usize,
    seed: u64,
}

/// Evaluates every (transformer, month, power, scenario index) cell.
///
/// Scenario `i` of a month uses that month's `i mod days`-th profile date.
/// Records come back sorted by (transformer id, month, power, index) no
/// matter how the work was scheduled.
pub fn run_campaign(
    feeder: &[Transformer],
    spec: &CampaignSpec,
    ctx: &SamplingContext<'_>,
) -> Result<Vec<EvaluationRecord>> {
    if spec.powers_kw.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::config("charger powers must be positive"));
    }
    if spec.months.iter().any(|m| !(1..=12).contains(m)) {
        return Err(Error::config("months must be in 1..=12"));
    }
    let mut transformers: Vec<&Transformer> = feeder.iter().collect();
    transformers.sort_by(|a, b| a.id.cmp(&b.id));
    let mut months = spec.months.clone();
    months.sort_unstable();
    months.dedup();
    let mut powers = spec.powers_kw.clone();
    powers.sort_by(f64::total_cmp);
    powers.dedup();

    let mut items = Vec::new();
    for tr in &transformers {
        for &month in &months {
            let dates = tr.dates_in_month(month);
            if dates.is_empty() && spec.n_scenarios > 0 {
                return Err(Error::config(format!(
                    "transformer {} has no profile in month {month}",
                    tr.id
                )));
            }
            for &power in &powers {
                for index in 0..spec.n_scenarios {
                    items.push(WorkItem {
                        transformer: tr,
                        date: dates[index % dates.len()],
                        power_kw: power,
                        index,
                        seed: scenario_seed(spec.master_seed, &tr.id, month, power, index),
                    });
                }
            }
        }
    }

    let goal = if spec.minimize_cost { Goal::MinCost } else { Goal::AnySchedule };
    let evaluate = |item: &WorkItem<'_>| -> Result<EvaluationRecord> {
        let mut record = max_supported_evs(
            item.transformer,
            item.date,
            ChargerSpec::new(item.power_kw)?,
            ctx,
            item.seed,
            goal,
        )?;
        record.scenario_index = item.index;
        Ok(record)
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = spec.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(evaluate).collect())
}

/// One row of the summary tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub transformer_id: String,
    pub customer_count: u32,
    pub desired_ev: u32,
    pub charger_power_kw: f64,
    pub month: u32,
    pub n_scenarios: usize,
    pub pct_infeasible: f64,
    pub pct_less: f64,
    pub pct_desired: f64,
    pub pct_unresolved: f64,
    pub confidence_rate: f64,
}

impl AggregateStats {
    /// (infeasible, less, desired) over the resolved scenarios only.
    pub fn renormalized(&self) -> Option<(f64, f64, f64)> {
        let resolved = 100.0 - self.pct_unresolved;
        (resolved > 0.0).then(|| {
            let k = 100.0 / resolved;
            (self.pct_infeasible * k, self.pct_less * k, self.pct_desired * k)
        })
    }

    /// Groups whose confidence rate falls below `threshold_pct`.
    pub fn needs_attention(&self, threshold_pct: f64) -> bool {
        self.confidence_rate < threshold_pct
    }
}

/// Percentages per (transformer, month, power) group. Rows are sorted by
/// transformer id, then month, then power.
pub fn aggregate(records: &[EvaluationRecord]) -> Vec<AggregateStats> {
    #[derive(Default)]
    struct Tally {
        customer_count: u32,
        desired_ev: u32,
        counts: [usize; 4],
    }
    let mut groups: BTreeMap<(String, u32, u64), Tally> = BTreeMap::new();
    for r in records {
        // Positive floats order like their bit patterns.
        let key = (r.transformer_id.clone(), r.month, r.charger_power_kw.to_bits());
        let tally = groups.entry(key).or_default();
        tally.customer_count = r.customer_count;
        tally.desired_ev = r.desired_ev;
        tally.counts[r.status as usize] += 1;
    }
    groups
        .into_iter()
        .map(|((id, month, power), t)| {
            let n: usize = t.counts.iter().sum();
            let pct = |s: EvalStatus| 100.0 * t.counts[s as usize] as f64 / n as f64;
            AggregateStats {
                transformer_id: id,
                customer_count: t.customer_count,
                desired_ev: t.desired_ev,
                charger_power_kw: f64::from_bits(power),
                month,
                n_scenarios: n,
                pct_infeasible: pct(EvalStatus::Infeasible),
                pct_less: pct(EvalStatus::LessThanDesired),
                pct_desired: pct(EvalStatus::Desired),
                pct_unresolved: pct(EvalStatus::Unresolved),
                confidence_rate: pct(EvalStatus::Desired),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, status: EvalStatus) -> EvaluationRecord {
        EvaluationRecord {
            transformer_id: id.into(),
            customer_count: 10,
            month: 7,
            date: NaiveDate::from_ymd_opt(2023, 7, 1).unwrap(),
            charger_power_kw: 7.2,
            scenario_index: 0,
            desired_ev: 5,
            supported_ev: match status {
                EvalStatus::Desired => 5,
                EvalStatus::LessThanDesired => 3,
                _ => 0,
            },
            status,
            scenario_seed: 0,
            cost_cents: None,
        }
    }

    #[test]
    fn tally_of_ten() {
        use EvalStatus::*;
        let statuses = [
            Desired,
            Desired,
            LessThanDesired,
            Infeasible,
            Desired,
            Unresolved,
            Desired,
            LessThanDesired,
            Desired,
            Desired,
        ];
        let records: Vec<_> = statuses.iter().map(|&s| record("A", s)).collect();
        let agg = aggregate(&records);
        assert_eq!(agg.len(), 1);
        let a = &agg[0];
        assert_eq!(a.n_scenarios, 10);
        assert_eq!(
            (a.pct_infeasible, a.pct_less, a.pct_desired, a.pct_unresolved),
            (10.0, 20.0, 60.0, 10.0)
        );
        assert_eq!(a.confidence_rate, 60.0);
        let (i, l, d) = a.renormalized().unwrap();
        assert!((i + l + d - 100.0).abs() < 1e-9);
        assert!((d - 600.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn groups_sorted_by_transformer() {
        let mut records = vec![record("B", EvalStatus::Desired), record("A", EvalStatus::Infeasible)];
        records[0].charger_power_kw = 11.5;
        let agg = aggregate(&records);
        assert_eq!(agg[0].transformer_id, "A");
        assert_eq!(agg[0].pct_infeasible, 100.0);
        assert_eq!(agg[1].charger_power_kw, 11.5);
    }

    #[test]
    fn seeds_differ_per_coordinate() {
        let a = scenario_seed(1, "T", 7, 7.2, 0);
        assert_ne!(a, scenario_seed(1, "T", 7, 7.2, 1));
        assert_ne!(a, scenario_seed(1, "T", 7, 11.5, 0));
        assert_ne!(a, scenario_seed(1, "T", 3, 7.2, 0));
        assert_ne!(a, scenario_seed(2, "T", 7, 7.2, 0));
        assert_eq!(a, scenario_seed(1, "T", 7, 7.2, 0));
    }
}
