use chrono::NaiveDate;
use evhost_core::io::*;
use evhost_core::scenario::{build_commute_pmf, TripRecord};
use evhost_core::{Error, TouTariff};

fn day(m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, m, d).unwrap()
}

fn spec(archetype: Archetype, seed: u64) -> SynthProfileSpec {
    SynthProfileSpec {
        archetype,
        capacity_kw: 50.0,
        customer_count: 10,
        seed,
        transformer_id: "T".into(),
        date: day(7, 1),
    }
}

fn feeder() -> Vec<evhost_core::Transformer> {
    let specs = [
        SynthTransformer {
            id: "A".into(),
            capacity_kw: 25.0,
            customer_count: 4,
        },
        SynthTransformer {
            id: "B".into(),
            capacity_kw: 50.0,
            customer_count: 9,
        },
    ];
    synth_feeder(&specs, 2023, &[7], 3).unwrap()
}

#[test]
fn ami_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let (ami, meta) = (dir.path().join("ami.csv"), dir.path().join("meta.csv"));
    let feeder = feeder();
    assert_eq!(feeder.len(), 2);
    assert!(feeder.iter().all(|t| t.profiles.len() == 31));
    write_ami_csv(&feeder, &ami, &meta).unwrap();
    assert_eq!(load_ami_csv(&ami, &meta).unwrap(), feeder);
}

#[test]
fn short_row_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let (ami, meta) = (dir.path().join("ami.csv"), dir.path().join("meta.csv"));
    write_ami_csv(&feeder(), &ami, &meta).unwrap();
    let text = std::fs::read_to_string(&ami).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let cut = lines[3].rfind(',').unwrap();
    lines[3].truncate(cut);
    std::fs::write(&ami, lines.join("\n") + "\n").unwrap();
    match load_ami_csv(&ami, &meta) {
        Err(Error::Parse { line, message, .. }) => {
            assert_eq!(line, 4);
            assert!(message.contains("95"), "{message}");
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn duplicate_day_and_missing_metadata_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (ami, meta) = (dir.path().join("ami.csv"), dir.path().join("meta.csv"));
    write_ami_csv(&feeder(), &ami, &meta).unwrap();
    let text = std::fs::read_to_string(&ami).unwrap();
    let second = text.lines().nth(1).unwrap();
    std::fs::write(&ami, format!("{text}{second}\n")).unwrap();
    assert!(matches!(load_ami_csv(&ami, &meta), Err(Error::Parse { .. })));

    write_ami_csv(&feeder(), &ami, &meta).unwrap();
    std::fs::write(&meta, "transformer_id,capacity_kw,customer_count\nA,25,4\n").unwrap();
    assert!(matches!(load_ami_csv(&ami, &meta), Err(Error::Invalid(_))));
}

#[test]
fn wrong_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (ami, meta) = (dir.path().join("ami.csv"), dir.path().join("meta.csv"));
    write_ami_csv(&feeder(), &ami, &meta).unwrap();
    std::fs::write(&meta, "id,capacity,customers\nA,25,4\nB,50,9\n").unwrap();
    assert!(matches!(load_ami_csv(&ami, &meta), Err(Error::Parse { line: 1, .. })));
}

#[test]
fn july_like_peaks_in_the_evening_below_rating() {
    for seed in 0..1000 {
        let p = synth_profile(&spec(Archetype::JulyLike, seed)).unwrap();
        let (argmax, max) = p
            .kw
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (t, &v)| if v > b.1 { (t, v) } else { b });
        assert!((35.0..=47.5).contains(&max), "seed {seed}: peak {max}");
        assert!((68..=84).contains(&argmax), "seed {seed}: argmax {argmax}");
        assert!(p.kw.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn march_like_stays_low_and_sometimes_backfeeds() {
    let mut negative = 0;
    for seed in 0..1000 {
        let p = synth_profile(&spec(Archetype::MarchLike, seed)).unwrap();
        assert!(p.kw.iter().all(|&v| v <= 25.0), "seed {seed}");
        let min = p.kw.iter().cloned().fold(f64::MAX, f64::min);
        if min < 0.0 {
            negative += 1;
            let at = p.kw.iter().position(|&v| v == min).unwrap();
            assert!((36..=64).contains(&at), "seed {seed}: trough at {at}");
        }
    }
    assert!(negative > 100, "only {negative} days backfeed");
}

#[test]
fn synthetic_profiles_are_seeded() {
    let a = synth_profile(&spec(Archetype::JulyLike, 9)).unwrap();
    assert_eq!(a, synth_profile(&spec(Archetype::JulyLike, 9)).unwrap());
    assert_ne!(a, synth_profile(&spec(Archetype::JulyLike, 10)).unwrap());
}

#[test]
fn tariff_and_pmf_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tariff.json");
    let tariff = TouTariff::srp_default();
    write_tariff_json(&tariff, &path).unwrap();
    assert_eq!(load_tariff_json(&path).unwrap(), tariff);

    let trips = vec![
        TripRecord {
            depart_hour: 7,
            return_hour: 17,
            weight: 2.0,
        },
        TripRecord {
            depart_hour: 8,
            return_hour: 16,
            weight: 1.5,
        },
    ];
    let tpath = dir.path().join("trips.csv");
    write_trips_csv(&trips, &tpath).unwrap();
    assert_eq!(load_trips_csv(&tpath).unwrap(), trips);
    let (pmf, _) = build_commute_pmf(&trips, "demo").unwrap();
    let ppath = dir.path().join("pmf.json");
    write_pmf_json(&pmf, &ppath).unwrap();
    assert_eq!(load_pmf_json(&ppath).unwrap(), pmf);
}

#[test]
fn bundled_files_load() {
    let data = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    assert_eq!(
        load_tariff_json(&data.join("tariff_srp.json")).unwrap(),
        TouTariff::srp_default()
    );
    let trips = load_trips_csv(&data.join("trips_synthetic.csv")).unwrap();
    let (pmf, summary) = build_commute_pmf(&trips, "bundled").unwrap();
    assert!(summary.accepted > 100);
    let total: f64 = pmf.hour_bins.iter().flatten().sum();
    assert!((total - 1.0).abs() < 1e-12);

    // Marginals against a direct tally of the file.
    let accepted: Vec<_> = trips.iter().filter(|t| t.return_hour > t.depart_hour).collect();
    let w: f64 = accepted.iter().map(|t| t.weight).sum();
    for h in 0..24 {
        let dep: f64 = accepted.iter().filter(|t| t.depart_hour == h as i64).map(|t| t.weight).sum();
        let ret: f64 = accepted.iter().filter(|t| t.return_hour == h as i64).map(|t| t.weight).sum();
        assert!((pmf.departure_marginal()[h] - dep / w).abs() < 1e-12);
        assert!((pmf.return_marginal()[h] - ret / w).abs() < 1e-12);
    }

    let demo = data.join("demo");
    let feeder = load_ami_csv(&demo.join("ami.csv"), &demo.join("metadata.csv")).unwrap();
    assert_eq!(feeder.len(), 6);
    for t in &feeder {
        assert_eq!(t.dates_in_month(3).len(), 31);
        assert_eq!(t.dates_in_month(7).len(), 31);
    }
}
