//! Shared domain types: the daily time grid, the time-of-use tariff, transformer
//! load data and the charger/vehicle/coordination parameters.
//!
//! Everything here is a plain value. Construction goes through `validate`
//! (or a validating constructor) so downstream code can rely on the
//! invariants without re-checking them.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slots in the tariff's reference day (15-minute resolution).
pub const TARIFF_SLOTS: usize = 96;

const HOURS_PER_DAY: f64 = 24.0;

/// A uniform partition of one day into `num_slots` intervals.
///
/// Slot `t` covers `[t * slot_hours, (t + 1) * slot_hours)` hours after midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub num_slots: usize,
    pub slot_hours: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid {
            num_slots: 96,
            slot_hours: 0.25,
        }
    }
}

impl TimeGrid {
    /// A grid of `num_slots` equal slots covering 24 hours.
    pub fn with_slots(num_slots: usize) -> Result<Self> {
        if num_slots == 0 {
            return Err(Error::config("time grid needs at least one slot"));
        }
        let grid = TimeGrid {
            num_slots,
            slot_hours: HOURS_PER_DAY / num_slots as f64,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_slots < 8 {
            return Err(Error::config(format!(
                "time grid needs at least 8 slots, got {}",
                self.num_slots
            )));
        }
        if !(self.slot_hours > 0.0) {
            return Err(Error::config("slot duration must be positive"));
        }
        let span = self.num_slots as f64 * self.slot_hours;
        if (span - HOURS_PER_DAY).abs() > 1e-9 {
            return Err(Error::config(format!(
                "time grid spans {span} hours instead of 24"
            )));
        }
        Ok(())
    }

    /// Index of the 15-minute tariff slot in which grid slot `slot` starts.
    pub fn tariff_slot(&self, slot: usize) -> usize {
        let quarter_hours = slot as f64 * self.slot_hours * 4.0;
        ((quarter_hours + 1e-9).floor() as usize).min(TARIFF_SLOTS - 1)
    }
}

/// One contiguous price band; `end_slot` is exclusive and may wrap past midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceBand {
    pub start_slot: usize,
    pub end_slot: usize,
    /// Energy price in cents per kWh.
    pub price: f64,
}

impl PriceBand {
    fn width(&self) -> usize {
        if self.end_slot > self.start_slot {
            self.end_slot - self.start_slot
        } else {
            TARIFF_SLOTS - self.start_slot + self.end_slot
        }
    }

    fn contains(&self, slot: usize) -> bool {
        if self.end_slot > self.start_slot {
            (self.start_slot..self.end_slot).contains(&slot)
        } else {
            slot >= self.start_slot || slot < self.end_slot
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Season {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub months: Vec<u32>,
    pub bands: Vec<PriceBand>,
}

/// Seasonal time-of-use price plan over the 96-slot reference day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TouTariff {
    pub seasons: Vec<Season>,
}

impl TouTariff {
    /// The residential TOU plan used throughout the case study.
    ///
    /// Winter (Nov-Apr): 11.45 c 5-9 AM and 5-9 PM, 8.85 c otherwise.
    /// Summer (May, Jun, Sep, Oct): 22.70 c 2-8 PM, 9.03 c otherwise.
    /// Summer peak (Jul, Aug): 25.85 c 2-8 PM, 9.06 c otherwise.
    pub fn srp_default() -> Self {
        let band = |start_slot, end_slot, price| PriceBand {
            start_slot,
            end_slot,
            price,
        };
        TouTariff {
            seasons: vec![
                Season {
                    name: Some("winter".into()),
                    months: vec![11, 12, 1, 2, 3, 4],
                    bands: vec![
                        band(20, 36, 11.45),
                        band(36, 68, 8.85),
                        band(68, 84, 11.45),
                        band(84, 20, 8.85),
                    ],
                },
                Season {
                    name: Some("summer".into()),
                    months: vec![5, 6, 9, 10],
                    bands: vec![band(56, 80, 22.70), band(80, 56, 9.03)],
                },
                Season {
                    name: Some("summer_peak".into()),
                    months: vec![7, 8],
                    bands: vec![band(56, 80, 25.85), band(80, 56, 9.06)],
                },
            ],
        }
    }

    /// A tariff with a single season whose price changes every slot.
    /// Handy for randomized tests; `prices` must have 96 entries.
    pub fn from_slot_prices(prices: &[f64]) -> Result<Self> {
        if prices.len() != TARIFF_SLOTS {
            return Err(Error::config(format!(
                "expected {TARIFF_SLOTS} slot prices, got {}",
                prices.len()
            )));
        }
        let tariff = TouTariff {
            seasons: vec![Season {
                name: None,
                months: (1..=12).collect(),
                bands: prices
                    .iter()
                    .enumerate()
                    .map(|(slot, &price)| PriceBand {
                        start_slot: slot,
                        end_slot: slot + 1,
                        price,
                    })
                    .collect(),
            }],
        };
        tariff.validate()?;
        Ok(tariff)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for season in &self.seasons {
            for &month in &season.months {
                if !(1..=12).contains(&month) {
                    return Err(Error::config(format!("month {month} out of range")));
                }
                if !seen.insert(month) {
                    return Err(Error::config(format!(
                        "month {month} belongs to more than one season"
                    )));
                }
            }
            let mut covered = [false; TARIFF_SLOTS];
            for band in &season.bands {
                if band.start_slot >= TARIFF_SLOTS
                    || band.end_slot > TARIFF_SLOTS
                    || band.start_slot == band.end_slot
                {
                    return Err(Error::config(format!(
                        "bad band [{}, {})",
                        band.start_slot, band.end_slot
                    )));
                }
                if !(band.price > 0.0) || !band.price.is_finite() {
                    return Err(Error::config(format!("non-positive price {}", band.price)));
                }
                for (slot, flag) in covered.iter_mut().enumerate() {
                    if band.contains(slot) {
                        if *flag {
                            return Err(Error::config(format!("slot {slot} priced twice")));
                        }
                        *flag = true;
                    }
                }
            }
            if let Some(gap) = covered.iter().position(|c| !c) {
                return Err(Error::config(format!("slot {gap} has no price")));
            }
            debug_assert_eq!(
                season.bands.iter().map(PriceBand::width).sum::<usize>(),
                TARIFF_SLOTS
            );
        }
        if let Some(missing) = (1..=12).find(|m| !seen.contains(m)) {
            return Err(Error::config(format!("month {missing} has no season")));
        }
        Ok(())
    }

    /// Price (cents/kWh) for a month and a 15-minute slot of the day.
    pub fn price_at(&self, month: u32, slot: usize) -> Result<f64> {
        if slot >= TARIFF_SLOTS {
            return Err(Error::invalid(format!("slot {slot} outside the day")));
        }
        let season = self
            .seasons
            .iter()
            .find(|s| s.months.contains(&month))
            .ok_or_else(|| Error::config(format!("month {month} is not covered by any season")))?;
        season
            .bands
            .iter()
            .find(|b| b.contains(slot))
            .map(|b| b.price)
            .ok_or_else(|| Error::config(format!("slot {slot} has no price in month {month}")))
    }

    /// Per-slot prices for `month` on an arbitrary grid (each grid slot takes
    /// the price in force when it starts).
    pub fn price_series(&self, month: u32, grid: &TimeGrid) -> Result<Vec<f64>> {
        (0..grid.num_slots)
            .map(|t| self.price_at(month, grid.tariff_slot(t)))
            .collect()
    }

    /// Multiply every price by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for band in out.seasons.iter_mut().flat_map(|s| s.bands.iter_mut()) {
            band.price *= factor;
        }
        out
    }
}

/// Average power per slot (kW) drawn through one transformer on one day.
/// Negative values are reverse flow from behind-the-meter generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadProfile {
    pub transformer_id: String,
    pub date: NaiveDate,
    pub kw: Vec<f64>,
}

impl LoadProfile {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if self.kw.len() != grid.num_slots {
            return Err(Error::invalid(format!(
                "profile {} {} has {} values, expected {}",
                self.transformer_id,
                self.date,
                self.kw.len(),
                grid.num_slots
            )));
        }
        if let Some(t) = self.kw.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "profile {} {} has a non-finite value at slot {t}",
                self.transformer_id, self.date
            )));
        }
        Ok(())
    }

    /// Remaining capacity per slot, `capacity_kw - load[t]`. Negative where the
    /// base load alone already exceeds the rating.
    pub fn headroom(&self, capacity_kw: f64) -> Vec<f64> {
        self.kw.iter().map(|load| capacity_kw - load).collect()
    }

    pub fn month(&self) -> u32 {
        chrono::Datelike::month(&self.date)
    }
}

/// Free function form of [`LoadProfile::headroom`].
pub fn headroom(profile: &LoadProfile, capacity_kw: f64) -> Vec<f64> {
    profile.headroom(capacity_kw)
}

/// A distribution transformer with its rating and historical daily profiles.
///
/// Ratings are given in kVA and compared directly against kW (unity power factor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transformer {
    pub id: String,
    pub capacity_kw: f64,
    pub customer_count: u32,
    pub profiles: Vec<LoadProfile>,
}

impl Transformer {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if !(self.capacity_kw > 0.0) || !self.capacity_kw.is_finite() {
            return Err(Error::invalid(format!(
                "transformer {} has non-positive capacity",
                self.id
            )));
        }
        if self.customer_count == 0 {
            return Err(Error::invalid(format!(
                "transformer {} serves no customers",
                self.id
            )));
        }
        for profile in &self.profiles {
            if profile.transformer_id != self.id {
                return Err(Error::invalid(format!(
                    "profile for {} attached to transformer {}",
                    profile.transformer_id, self.id
                )));
            }
            profile.validate(grid)?;
        }
        Ok(())
    }

    pub fn profile_for(&self, date: NaiveDate) -> Result<&LoadProfile> {
        self.profiles
            .iter()
            .find(|p| p.date == date)
            .ok_or_else(|| Error::MissingProfile {
                transformer_id: self.id.clone(),
                date,
            })
    }

    /// Dates with a profile in `month`, ascending.
    pub fn dates_in_month(&self, month: u32) -> Vec<NaiveDate> {
        let mut dates: Vec<NaiveDate> = self
            .profiles
            .iter()
            .filter(|p| p.month() == month)
            .map(|p| p.date)
            .collect();
        dates.sort();
        dates.dedup();
        dates
    }

    pub fn desired_ev_count(&self) -> u32 {
        desired_ev_count(self.customer_count)
    }
}

/// One EV per two households, rounded up.
pub fn desired_ev_count(customer_count: u32) -> u32 {
    customer_count.div_ceil(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargerSpec {
    pub power_kw: f64,
}

impl ChargerSpec {
    pub const LEVEL2_SLOW_KW: f64 = 3.6;
    pub const LEVEL2_FAST_KW: f64 = 7.2;
    pub const WALL_CONNECTOR_KW: f64 = 11.5;

    pub fn new(power_kw: f64) -> Result<Self> {
        if !(power_kw > 0.0) || !power_kw.is_finite() {
            return Err(Error::config(format!(
                "charger power must be positive, got {power_kw}"
            )));
        }
        Ok(ChargerSpec { power_kw })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvSpec {
    pub battery_kwh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency_mi_per_kwh: Option<f64>,
}

impl Default for EvSpec {
    /// Long-range sedan, the worst case for per-vehicle energy demand.
    fn default() -> Self {
        EvSpec {
            battery_kwh: 100.0,
            efficiency_mi_per_kwh: Some(3.6),
        }
    }
}

impl EvSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.battery_kwh > 0.0) || !self.battery_kwh.is_finite() {
            return Err(Error::config("battery capacity must be positive"));
        }
        Ok(())
    }
}

/// Knobs of the coordination model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoordinationParams {
    /// Minimum length of every charging run, in slots.
    pub tau_min: usize,
    /// Maximum number of turn-on events per EV per day.
    pub max_switches: usize,
    pub alpha: f64,
    pub beta: f64,
    pub mip_gap: f64,
    pub time_limit_secs: f64,
}

impl Default for CoordinationParams {
    fn default() -> Self {
        CoordinationParams {
            tau_min: 4,
            max_switches: 4,
            alpha: 2.0,
            beta: 1.0,
            mip_gap: 1e-6,
            time_limit_secs: 60.0,
        }
    }
}

impl CoordinationParams {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if self.tau_min < 1 || self.tau_min >= grid.num_slots {
            return Err(Error::config(format!(
                "tau_min must lie in [1, {}), got {}",
                grid.num_slots, self.tau_min
            )));
        }
        if self.max_switches < 1 {
            return Err(Error::config("max_switches must be at least 1"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::config(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.alpha >= 1.0 + self.beta) {
            return Err(Error::config(format!(
                "alpha must be at least 1 + beta, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if !(self.mip_gap >= 0.0) {
            return Err(Error::config("mip_gap must be non-negative"));
        }
        if !(self.time_limit_secs > 0.0) {
            return Err(Error::config("time limit must be positive"));
        }
        Ok(())
    }

    pub fn time_limit(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.time_limit_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slot(hour: usize, minute: usize) -> usize {
        hour * 4 + minute / 15
    }

    #[test]
    fn default_tariff_is_valid_and_total() {
        let tariff = TouTariff::srp_default();
        tariff.validate().unwrap();
        for season in &tariff.seasons {
            let width: usize = season.bands.iter().map(PriceBand::width).sum();
            assert_eq!(width, TARIFF_SLOTS);
        }
        for month in 1..=12 {
            for s in 0..TARIFF_SLOTS {
                assert!(tariff.price_at(month, s).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn price_examples() {
        let tariff = TouTariff::srp_default();
        assert_eq!(tariff.price_at(7, 60).unwrap(), 25.85);
        assert_eq!(tariff.price_at(3, 40).unwrap(), 8.85);
        assert_eq!(tariff.price_at(12, 24).unwrap(), 11.45);
        // Band edges are half-open.
        assert_eq!(tariff.price_at(7, slot(14, 0)).unwrap(), 25.85);
        assert_eq!(tariff.price_at(7, slot(13, 45)).unwrap(), 9.06);
        assert_eq!(tariff.price_at(7, slot(20, 0)).unwrap(), 9.06);
        assert_eq!(tariff.price_at(7, slot(19, 45)).unwrap(), 25.85);
    }

    #[test]
    fn uncovered_month_is_a_config_error() {
        let mut tariff = TouTariff::srp_default();
        tariff.seasons[2].months = vec![7];
        assert!(tariff.validate().is_err());
        assert!(matches!(tariff.price_at(8, 0), Err(Error::Config(_))));
    }

    #[test]
    fn overlapping_bands_rejected() {
        let mut tariff = TouTariff::srp_default();
        tariff.seasons[1].bands[0].end_slot = 81;
        assert!(tariff.validate().is_err());
        let mut tariff = TouTariff::srp_default();
        tariff.seasons[1].bands[0].end_slot = 79;
        assert!(tariff.validate().is_err());
    }

    #[test]
    fn coarse_grid_prices_follow_slot_start() {
        let tariff = TouTariff::srp_default();
        let grid = TimeGrid::with_slots(24).unwrap();
        let prices = tariff.price_series(7, &grid).unwrap();
        assert_eq!(prices[13], 9.06);
        assert_eq!(prices[14], 25.85);
        assert_eq!(prices[19], 25.85);
        assert_eq!(prices[20], 9.06);
    }

    #[test]
    fn desired_counts() {
        assert_eq!(desired_ev_count(6), 3);
        assert_eq!(desired_ev_count(7), 4);
        assert_eq!(desired_ev_count(1), 1);
        for n in 1..200 {
            let d = desired_ev_count(n);
            assert!(d == n / 2 || d == (n + 1) / 2);
        }
    }

    #[test]
    fn headroom_examples() {
        let date = NaiveDate::from_ymd_opt(2023, 7, 1).unwrap();
        let mut profile = LoadProfile {
            transformer_id: "T".into(),
            date,
            kw: vec![30.0; 96],
        };
        assert!(profile.headroom(50.0).iter().all(|&h| h == 20.0));
        profile.kw[40] = 55.0;
        profile.kw[30] = -3.0;
        let h = headroom(&profile, 50.0);
        assert_eq!(h[40], -5.0);
        assert_eq!(h[30], 53.0);
        for (t, v) in h.iter().enumerate() {
            assert_eq!(v + profile.kw[t], 50.0);
        }
    }

    #[test]
    fn grid_and_params_validation() {
        assert!(TimeGrid::default().validate().is_ok());
        assert!(TimeGrid::with_slots(24).is_ok());
        assert!(TimeGrid::with_slots(4).is_err());
        assert!(TimeGrid {
            num_slots: 96,
            slot_hours: 0.5
        }
        .validate()
        .is_err());
        let grid = TimeGrid::default();
        assert!(CoordinationParams::default().validate(&grid).is_ok());
        let bad = CoordinationParams {
            alpha: 1.5,
            ..Default::default()
        };
        assert!(bad.validate(&grid).is_err());
        let bad = CoordinationParams {
            tau_min: 96,
            ..Default::default()
        };
        assert!(bad.validate(&grid).is_err());
    }
}
