#![allow(dead_code)]

use chrono::NaiveDate;
use evhost_core::model::{ChargerSpec, CoordinationParams, LoadProfile, TimeGrid, TouTariff};
use evhost_core::scenario::{EvSession, Scenario};
use rand::Rng;

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn profile(kw: Vec<f64>, month: u32) -> LoadProfile {
    LoadProfile {
        transformer_id: "T".into(),
        date: date(2023, month, 15),
        kw,
    }
}

/// Scenario on the default 96-slot grid with the default tariff.
pub fn scenario(
    kw: Vec<f64>,
    capacity_kw: f64,
    power_kw: f64,
    sessions: Vec<EvSession>,
    month: u32,
) -> Scenario {
    let grid = TimeGrid::with_slots(kw.len()).unwrap();
    Scenario {
        grid,
        profile: profile(kw, month),
        capacity_kw,
        charger: ChargerSpec::new(power_kw).unwrap(),
        sessions,
        params: CoordinationParams::default(),
        tariff: TouTariff::srp_default(),
        month,
        seed: 0,
    }
}

/// Session with SOCs chosen so the demand is exactly `kwh` on a 100 kWh pack.
pub fn session(index: usize, kwh: f64, away: std::ops::Range<usize>) -> EvSession {
    EvSession::new(index, 0.0, kwh / 100.0, 100.0, away).unwrap()
}

const PRICE_LEVELS: [f64; 4] = [8.85, 9.06, 11.45, 25.85];

/// Up to two EVs on a 24-slot day with `tau_min = 2`, two turn-ons and a
/// random per-slot tariff drawn from a few levels (so ties are common).
pub fn random_tiny<R: Rng>(rng: &mut R) -> Scenario {
    let slots = 24;
    let grid = TimeGrid::with_slots(slots).unwrap();
    let n_evs = rng.gen_range(1..=2);
    let power = [3.6, 7.2, 11.5][rng.gen_range(0..3)];
    let capacity = rng.gen_range(10.0..40.0);
    let level = rng.gen_range(0.2..0.8) * capacity;
    let kw: Vec<f64> = (0..slots)
        .map(|t| {
            let evening = if (16..22).contains(&t) { rng.gen_range(0.0..0.5) } else { 0.0 };
            level * (1.0 + evening) + rng.gen_range(-3.0..3.0)
        })
        .collect();
    let mut prices = Vec::with_capacity(96);
    for _ in 0..slots {
        let p = PRICE_LEVELS[rng.gen_range(0..PRICE_LEVELS.len())];
        prices.extend([p; 4]);
    }
    let sessions = (0..n_evs)
        .map(|i| {
            let depart = rng.gen_range(4..14);
            let back = rng.gen_range(depart + 1..23);
            let initial = rng.gen_range(0.1..0.5);
            let target = rng.gen_range(initial..1.0);
            let battery = rng.gen_range(10.0..60.0);
            EvSession::new(i, initial, target, battery, depart..back).unwrap()
        })
        .collect();
    Scenario {
        grid,
        profile: LoadProfile {
            transformer_id: "tiny".into(),
            date: date(2023, 7, 1),
            kw,
        },
        capacity_kw: capacity,
        charger: ChargerSpec::new(power).unwrap(),
        sessions,
        params: CoordinationParams {
            tau_min: 2,
            max_switches: 2,
            ..Default::default()
        },
        tariff: TouTariff::from_slot_prices(&prices).unwrap(),
        month: 7,
        seed: 0,
    }
}

/// A smooth day with an evening peak plus noise.
pub fn random_day<R: Rng>(rng: &mut R, capacity: f64) -> Vec<f64> {
    let peak_slot = rng.gen_range(64.0..84.0);
    let width = rng.gen_range(10.0..22.0);
    let base = rng.gen_range(0.15..0.55) * capacity;
    let peak = rng.gen_range(0.6..1.0) * capacity;
    (0..96)
        .map(|t| {
            let d: f64 = (t as f64 - peak_slot) / width;
            let v = base + (peak - base) * (-d * d).exp();
            (v + rng.gen_range(-0.03..0.03) * capacity).max(-0.1 * capacity)
        })
        .collect()
}

/// Full-size instance: 1-`max_evs` EVs, 96 slots, default parameters.
pub fn random_full<R: Rng>(rng: &mut R, max_evs: usize) -> Scenario {
    let capacity = [25.0, 50.0, 75.0, 100.0][rng.gen_range(0..4)];
    let kw = random_day(rng, capacity);
    let n_evs = rng.gen_range(1..=max_evs);
    let power = if rng.gen_bool(0.5) { 7.2 } else { 11.5 };
    let month = [1, 3, 5, 7, 8, 10][rng.gen_range(0..6)];
    let sessions = (0..n_evs)
        .map(|i| {
            let depart = rng.gen_range(5..10) * 4;
            let back = rng.gen_range(13..21) * 4;
            let initial = rng.gen_range(0.2..0.3);
            let target = rng.gen_range(0.8..1.0);
            EvSession::new(i, initial, target, 100.0, depart..back).unwrap()
        })
        .collect();
    let mut s = scenario(kw, capacity, power, sessions, month);
    s.params.time_limit_secs = 120.0;
    s
}
