use chrono::NaiveDate;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use evhost_core::scenario::{make_scenario, SamplingContext};
use evhost_core::*;

fn july() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 7, 18).unwrap()
}

/// 50 kW transformer with an evening peak near 40 kW.
fn transformer(customers: u32) -> Transformer {
    let kw = (0..96)
        .map(|t| {
            let x = (t as f64 - 76.0) / 12.0;
            18.0 + 22.0 * (-x * x).exp()
        })
        .collect();
    Transformer {
        id: "B".into(),
        capacity_kw: 50.0,
        customer_count: customers,
        profiles: vec![LoadProfile {
            transformer_id: "B".into(),
            date: july(),
            kw,
        }],
    }
}

struct Inputs {
    pmf: JointCommutePmf,
    dists: SocDistributions,
    ev: EvSpec,
    params: CoordinationParams,
    tariff: TouTariff,
}

impl Inputs {
    fn new() -> Self {
        Inputs {
            pmf: JointCommutePmf::from_cells(&[(7, 17, 0.5), (8, 18, 0.3), (9, 16, 0.2)], "bench").unwrap(),
            dists: SocDistributions::default(),
            ev: EvSpec::default(),
            params: CoordinationParams::default(),
            tariff: TouTariff::srp_default(),
        }
    }

    fn ctx(&self) -> SamplingContext<'_> {
        SamplingContext {
            pmf: &self.pmf,
            dists: &self.dists,
            ev: &self.ev,
            params: &self.params,
            tariff: &self.tariff,
        }
    }
}

fn bench_solve(c: &mut Criterion) {
    let inputs = Inputs::new();
    let tr = transformer(12);
    let charger = ChargerSpec::new(7.2).unwrap();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    for n in [2usize, 4, 6] {
        let s = make_scenario(&tr, july(), charger, n, &inputs.ctx(), 3).unwrap();
        group.bench_with_input(BenchmarkId::new("min_cost", n), &s, |b, s| {
            b.iter(|| solve(black_box(s)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("any_schedule", n), &s, |b, s| {
            b.iter(|| solve_for(black_box(s), Goal::AnySchedule).unwrap())
        });
    }
    group.finish();
}

fn bench_verify(c: &mut Criterion) {
    let inputs = Inputs::new();
    let tr = transformer(12);
    let s = make_scenario(&tr, july(), ChargerSpec::new(7.2).unwrap(), 4, &inputs.ctx(), 3).unwrap();
    let sched = solve(&s).unwrap().schedule.unwrap();
    c.bench_function("verify_schedule/4", |b| b.iter(|| verify_schedule(black_box(&s), black_box(&sched))));
}

fn bench_hosting(c: &mut Criterion) {
    let inputs = Inputs::new();
    let tr = transformer(12);
    let mut group = c.benchmark_group("max_supported_evs");
    group.sample_size(10);
    for kw in [7.2, 11.5] {
        let charger = ChargerSpec::new(kw).unwrap();
        group.bench_function(BenchmarkId::from_parameter(kw), |b| {
            b.iter(|| max_supported_evs(&tr, july(), charger, &inputs.ctx(), 5, Goal::AnySchedule).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_solve, bench_verify, bench_hosting);
criterion_main!(benches);
