//! Commuter availability and state-of-charge sampling, and assembly of
//! complete single-day coordination instances.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ChargerSpec, CoordinationParams, EvSpec, LoadProfile, TimeGrid, TouTariff, Transformer,
};
use crate::seeding::SeedKey;

pub const HOURS: usize = 24;

/// One observed trip: when the vehicle left home and when it came back.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub depart_hour: i64,
    pub return_hour: i64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedTrip {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PmfBuildSummary {
    pub accepted: usize,
    pub rejected: Vec<RejectedTrip>,
}

/// Joint probability of (departure hour, return hour) for a single daily trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointCommutePmf {
    pub tag: String,
    /// `hour_bins[depart][return]`, 24 x 24.
    pub hour_bins: Vec<Vec<f64>>,
}

impl JointCommutePmf {
    /// All mass on one (depart, return) cell.
    pub fn single(depart_hour: usize, return_hour: usize) -> Result<Self> {
        Self::from_cells(&[(depart_hour, return_hour, 1.0)], "single")
    }

    /// Normalizes weighted cells into a PMF.
    pub fn from_cells(cells: &[(usize, usize, f64)], tag: &str) -> Result<Self> {
        let mut bins = vec![vec![0.0; HOURS]; HOURS];
        for &(d, r, w) in cells {
            if d >= HOURS || r >= HOURS || r <= d || !(w > 0.0) {
                return Err(Error::invalid(format!("bad PMF cell ({d}, {r}, {w})")));
            }
            bins[d][r] += w;
        }
        let total: f64 = bins.iter().flatten().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("PMF has no mass"));
        }
        for v in bins.iter_mut().flatten() {
            *v /= total;
        }
        let pmf = JointCommutePmf {
            tag: tag.to_string(),
            hour_bins: bins,
        };
        pmf.validate()?;
        Ok(pmf)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hour_bins.len() != HOURS || self.hour_bins.iter().any(|r| r.len() != HOURS) {
            return Err(Error::invalid("commute PMF must be a 24 x 24 matrix"));
        }
        let mut total = 0.0;
        for (d, row) in self.hour_bins.iter().enumerate() {
            for (r, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid(format!("PMF cell ({d}, {r}) is {p}")));
                }
                if r <= d && p != 0.0 {
                    return Err(Error::invalid(format!(
                        "PMF cell ({d}, {r}) returns before it departs"
                    )));
                }
                total += p;
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("PMF sums to {total}")));
        }
        Ok(())
    }

    pub fn departure_marginal(&self) -> Vec<f64> {
        self.hour_bins.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn return_marginal(&self) -> Vec<f64> {
        (0..HOURS)
            .map(|r| self.hour_bins.iter().map(|row| row[r]).sum())
            .collect()
    }
}

/// Builds the joint PMF from weighted trip records. Trips that do not fit a
/// single day (return at or before departure, hours out of range) or carry a
/// non-positive weight are dropped and listed in the summary.
pub fn build_commute_pmf(
    trips: &[TripRecord],
    tag: &str,
) -> Result<(JointCommutePmf, PmfBuildSummary)> {
    if trips.is_empty() {
        return Err(Error::invalid("no trip records"));
    }
    let mut summary = PmfBuildSummary::default();
    let mut cells = Vec::with_capacity(trips.len());
    for (index, trip) in trips.iter().enumerate() {
        let reason = if !(0..HOURS as i64).contains(&trip.depart_hour)
            || !(0..HOURS as i64).contains(&trip.return_hour)
        {
            Some("hour outside 0-23")
        } else if trip.return_hour <= trip.depart_hour {
            Some("return not after departure")
        } else if !(trip.weight > 0.0) || !trip.weight.is_finite() {
            Some("non-positive weight")
        } else {
            None
        };
        match reason {
            Some(reason) => summary.rejected.push(RejectedTrip {
                index,
                reason: reason.to_string(),
            }),
            None => {
                summary.accepted += 1;
                cells.push((
                    trip.depart_hour as usize,
                    trip.return_hour as usize,
                    trip.weight,
                ));
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::invalid(format!(
            "all {} trip records were rejected",
            trips.len()
        )));
    }
    Ok((JointCommutePmf::from_cells(&cells, tag)?, summary))
}

/// Away interval on a grid: the vehicle is gone for slots `depart..return`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AwayInterval {
    pub depart_slot: usize,
    pub return_slot: usize,
}

impl AwayInterval {
    pub fn slots(&self) -> Vec<usize> {
        (self.depart_slot..self.return_slot).collect()
    }
}

/// Draws one (depart, return) cell by inverse transform over the row-major
/// flattened PMF and maps hours to 15-minute slots.
pub fn sample_away_interval<R: Rng + ?Sized>(pmf: &JointCommutePmf, rng: &mut R) -> AwayInterval {
    sample_away_interval_on(pmf, &TimeGrid::default(), rng)
}

pub fn sample_away_interval_on<R: Rng + ?Sized>(
    pmf: &JointCommutePmf,
    grid: &TimeGrid,
    rng: &mut R,
) -> AwayInterval {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    let mut chosen = None;
    'outer: for (d, row) in pmf.hour_bins.iter().enumerate() {
        for (r, &p) in row.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            acc += p;
            last = Some((d, r));
            if u < acc {
                chosen = Some((d, r));
                break 'outer;
            }
        }
    }
    // Rounding can leave the cumulative sum a hair under 1.
    let (d, r) = chosen.or(last).expect("validated PMF has mass");
    let per_hour = grid.num_slots as f64 / HOURS as f64;
    AwayInterval {
        depart_slot: (d as f64 * per_hour).round() as usize,
        return_slot: (r as f64 * per_hour).round() as usize,
    }
}

/// Initial and final state-of-charge laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocDistributions {
    pub initial_low: f64,
    pub initial_high: f64,
    pub final_floor: f64,
    pub final_cap: f64,
    pub chi_df: f64,
    pub chi_scale: f64,
}

impl Default for SocDistributions {
    fn default() -> Self {
        SocDistributions {
            initial_low: 0.20,
            initial_high: 0.30,
            final_floor: 0.80,
            final_cap: 1.00,
            chi_df: 2.0,
            chi_scale: 0.2 / 6.0,
        }
    }
}

impl SocDistributions {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 <= self.initial_low
            && self.initial_low <= self.initial_high
            && self.initial_high < self.final_floor
            && self.final_floor < self.final_cap
            && self.final_cap <= 1.0;
        if !ok {
            return Err(Error::config(format!("inconsistent SOC bounds: {self:?}")));
        }
        if !(self.chi_df >= 1.0) || !(self.chi_scale > 0.0) {
            return Err(Error::config("chi-squared df must be >= 1 and scale > 0"));
        }
        Ok(())
    }
}

pub fn sample_initial_soc<R: Rng + ?Sized>(dist: &SocDistributions, rng: &mut R) -> f64 {
    if dist.initial_low == dist.initial_high {
        // Still consume a draw so streams stay aligned across configurations.
        let _: f64 = rng.gen();
        return dist.initial_low;
    }
    rng.gen_range(dist.initial_low..=dist.initial_high)
}

/// Shifted, scaled chi-squared draw truncated at `final_cap`.
pub fn sample_final_soc<R: Rng + ?Sized>(dist: &SocDistributions, rng: &mut R) -> f64 {
    let chi = ChiSquared::new(dist.chi_df).expect("validated degrees of freedom");
    let x: f64 = chi.sample(rng);
    (dist.final_floor + dist.chi_scale * x).min(dist.final_cap)
}

/// One vehicle's charging requirement for the day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    pub ev_index: usize,
    pub initial_soc: f64,
    pub final_soc: f64,
    pub battery_kwh: f64,
    /// Slots in which the vehicle is away and cannot charge, ascending.
    pub unavailable_slots: Vec<usize>,
    pub energy_demand_kwh: f64,
}

impl EvSession {
    pub fn new(
        ev_index: usize,
        initial_soc: f64,
        final_soc: f64,
        battery_kwh: f64,
        unavailable_slots: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&initial_soc)
            || !(0.0..=1.0).contains(&final_soc)
            || initial_soc > final_soc
        {
            return Err(Error::invalid(format!(
                "EV {ev_index}: SOC {initial_soc} -> {final_soc} is not a charge"
            )));
        }
        if !(battery_kwh > 0.0) {
            return Err(Error::invalid(format!("EV {ev_index}: battery must be positive")));
        }
        let slots: BTreeSet<usize> = unavailable_slots.into_iter().collect();
        Ok(EvSession {
            ev_index,
            initial_soc,
            final_soc,
            battery_kwh,
            unavailable_slots: slots.into_iter().collect(),
            energy_demand_kwh: (final_soc - initial_soc) * battery_kwh,
        })
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if self.initial_soc > self.final_soc || self.initial_soc < 0.0 || self.final_soc > 1.0 {
            return Err(Error::invalid(format!("EV {}: bad SOC pair", self.ev_index)));
        }
        let expected = (self.final_soc - self.initial_soc) * self.battery_kwh;
        if (expected - self.energy_demand_kwh).abs() > 1e-9 * expected.max(1.0) {
            return Err(Error::invalid(format!(
                "EV {}: demand {} does not match SOC window ({expected})",
                self.ev_index, self.energy_demand_kwh
            )));
        }
        if let Some(&bad) = self.unavailable_slots.iter().find(|&&t| t >= grid.num_slots) {
            return Err(Error::invalid(format!(
                "EV {}: unavailable slot {bad} outside the grid",
                self.ev_index
            )));
        }
        if self.unavailable_slots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "EV {}: unavailable slots must be strictly ascending",
                self.ev_index
            )));
        }
        Ok(())
    }

    pub fn availability_mask(&self, num_slots: usize) -> Vec<bool> {
        let mut mask = vec![true; num_slots];
        for &t in &self.unavailable_slots {
            mask[t] = false;
        }
        mask
    }
}

/// A complete, solvable coordination instance for one transformer-day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub grid: TimeGrid,
    pub profile: LoadProfile,
    pub capacity_kw: f64,
    pub charger: ChargerSpec,
    pub sessions: Vec<EvSession>,
    pub params: CoordinationParams,
    pub tariff: TouTariff,
    pub month: u32,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.profile.validate(&self.grid)?;
        self.params.validate(&self.grid)?;
        self.tariff.validate()?;
        ChargerSpec::new(self.charger.power_kw)?;
        if !(self.capacity_kw > 0.0) || !self.capacity_kw.is_finite() {
            return Err(Error::invalid("capacity must be positive"));
        }
        if !(1..=12).contains(&self.month) {
            return Err(Error::invalid(format!("month {} out of range", self.month)));
        }
        for session in &self.sessions {
            session.validate(&self.grid)?;
        }
        Ok(())
    }

    pub fn num_evs(&self) -> usize {
        self.sessions.len()
    }

    pub fn prices(&self) -> Result<Vec<f64>> {
        self.tariff.price_series(self.month, &self.grid)
    }

    /// Energy delivered by one charging slot (kWh).
    pub fn slot_energy_kwh(&self) -> f64 {
        self.charger.power_kw * self.grid.slot_hours
    }

    /// The same instance restricted to its first `n` sessions.
    pub fn truncated(&self, n: usize) -> Scenario {
        let mut out = self.clone();
        out.sessions.truncate(n);
        out
    }

    pub fn without_session(&self, position: usize) -> Scenario {
        let mut out = self.clone();
        out.sessions.remove(position);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Everything needed to sample sessions, other than the transformer-day.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingContext<'a> {
    pub pmf: &'a JointCommutePmf,
    pub dists: &'a SocDistributions,
    pub ev: &'a EvSpec,
    pub params: &'a CoordinationParams,
    pub tariff: &'a TouTariff,
}

/// Samples one EV session from its own substream.
pub fn sample_session<R: Rng + ?Sized>(
    ev_index: usize,
    pmf: &JointCommutePmf,
    dists: &SocDistributions,
    ev: &EvSpec,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<EvSession> {
    let away = sample_away_interval_on(pmf, grid, rng);
    let initial = sample_initial_soc(dists, rng);
    let final_soc = sample_final_soc(dists, rng);
    EvSession::new(ev_index, initial, final_soc, ev.battery_kwh, away.slots())
}

/// Seed of the substream used for one EV of one transformer-day.
pub fn session_seed(seed: u64, transformer_id: &str, date: NaiveDate, ev_index: usize) -> u64 {
    SeedKey::new("ev-session")
        .u64(seed)
        .str(transformer_id)
        .str(&date.to_string())
        .u64(ev_index as u64)
        .finish()
}

/// Assembles a scenario with `n_evs` independently sampled sessions on the
/// transformer's profile for `date`.
pub fn make_scenario(
    transformer: &Transformer,
    date: NaiveDate,
    charger: ChargerSpec,
    n_evs: usize,
    ctx: &SamplingContext<'_>,
    seed: u64,
) -> Result<Scenario> {
    if n_evs == 0 {
        return Err(Error::invalid("a scenario needs at least one EV"));
    }
    ctx.pmf.validate()?;
    ctx.dists.validate()?;
    ctx.ev.validate()?;
    let profile = transformer.profile_for(date)?.clone();
    let grid = TimeGrid::with_slots(profile.kw.len())?;
    let sessions = (0..n_evs)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(session_seed(seed, &transformer.id, date, i));
            sample_session(i, ctx.pmf, ctx.dists, ctx.ev, &grid, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let scenario = Scenario {
        grid,
        month: profile.month(),
        profile,
        capacity_kw: transformer.capacity_kw,
        charger,
        sessions,
        params: *ctx.params,
        tariff: ctx.tariff.clone(),
        seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trip(d: i64, r: i64, w: f64) -> TripRecord {
        TripRecord {
            depart_hour: d,
            return_hour: r,
            weight: w,
        }
    }

    #[test]
    fn pmf_from_single_trip() {
        let (pmf, summary) = build_commute_pmf(&[trip(8, 16, 1.0)], "t").unwrap();
        assert_eq!(pmf.hour_bins[8][16], 1.0);
        assert_eq!(summary.accepted, 1);
        assert!(summary.rejected.is_empty());
    }

    #[test]
    fn pmf_weight_arithmetic() {
        let (pmf, _) =
            build_commute_pmf(&[trip(8, 16, 1.0), trip(8, 16, 1.0), trip(9, 17, 2.0)], "t")
                .unwrap();
        assert!((pmf.hour_bins[8][16] - 0.5).abs() < 1e-15);
        assert!((pmf.hour_bins[9][17] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pmf_rejections_are_reported() {
        assert!(build_commute_pmf(&[], "t").is_err());
        let (pmf, summary) = build_commute_pmf(
            &[trip(22, 6, 1.0), trip(8, 8, 1.0), trip(7, 17, 3.0), trip(7, 30, 1.0)],
            "t",
        )
        .unwrap();
        assert_eq!(summary.accepted, 1);
        let idx: Vec<usize> = summary.rejected.iter().map(|r| r.index).collect();
        assert_eq!(idx, vec![0, 1, 3]);
        assert_eq!(pmf.hour_bins[7][17], 1.0);
        assert!(build_commute_pmf(&[trip(22, 6, 1.0)], "t").is_err());
    }

    #[test]
    fn single_cell_pmf_is_deterministic() {
        let pmf = JointCommutePmf::single(8, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let away = sample_away_interval(&pmf, &mut rng);
            assert_eq!((away.depart_slot, away.return_slot), (32, 64));
        }
        let a = sample_away_interval(&pmf, &mut rng).slots();
        assert_eq!(a, (32..64).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_draws() {
        let (pmf, _) =
            build_commute_pmf(&[trip(7, 17, 1.0), trip(6, 15, 2.0), trip(9, 20, 1.0)], "t")
                .unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_away_interval(&pmf, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn degenerate_soc_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dist = SocDistributions {
            initial_low: 0.25,
            initial_high: 0.25,
            chi_scale: 1e-300,
            ..Default::default()
        };
        dist.validate().unwrap();
        for _ in 0..100 {
            assert_eq!(sample_initial_soc(&dist, &mut rng), 0.25);
            assert_eq!(sample_final_soc(&dist, &mut rng), 0.80);
        }
    }

    #[test]
    fn session_demand_follows_soc() {
        let s = EvSession::new(0, 0.25, 0.85, 100.0, [40, 32, 33]).unwrap();
        assert!((s.energy_demand_kwh - 60.0).abs() < 1e-12);
        assert_eq!(s.unavailable_slots, vec![32, 33, 40]);
        assert!(EvSession::new(0, 0.9, 0.8, 100.0, []).is_err());
        let zero = EvSession::new(0, 0.5, 0.5, 100.0, []).unwrap();
        assert_eq!(zero.energy_demand_kwh, 0.0);
    }

    #[test]
    fn pmf_validation_catches_bad_matrices() {
        let mut pmf = JointCommutePmf::single(8, 16).unwrap();
        pmf.hour_bins[10][10] = 0.1;
        pmf.hour_bins[8][16] = 0.9;
        assert!(pmf.validate().is_err());
        let mut pmf = JointCommutePmf::single(8, 16).unwrap();
        pmf.hour_bins[8][16] = 0.9;
        assert!(pmf.validate().is_err());
    }
}
