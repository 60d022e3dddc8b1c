use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::NaiveDate;
use evhost_core::io::{load_ami_csv, read_records_csv};
use evhost_core::*;

fn evhost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evhost")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// 50 kW, evening base 35 kW: two 7.2 kW EVs fit only by sharing the night.
fn two_ev_scenario(base_evening: f64) -> Scenario {
    let kw: Vec<f64> = (0..96).map(|t| if t >= 64 { base_evening } else { 20.0 }).collect();
    let sessions = (0..2)
        .map(|i| EvSession::new(i, 0.25, 0.8, 100.0, 32..64).unwrap())
        .collect();
    Scenario {
        grid: TimeGrid::default(),
        profile: LoadProfile {
            transformer_id: "T".into(),
            date: NaiveDate::from_ymd_opt(2023, 7, 18).unwrap(),
            kw,
        },
        capacity_kw: 50.0,
        charger: ChargerSpec::new(7.2).unwrap(),
        sessions,
        params: CoordinationParams::default(),
        tariff: TouTariff::srp_default(),
        month: 7,
        seed: 0,
    }
}

#[test]
fn coordinate_writes_a_schedule_under_the_rating() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, two_ev_scenario(35.0).to_json().unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = evhost(&["coordinate", s(&path), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = std::fs::read_to_string(out.join("schedule.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "slot,base_kw,charging_kw,total_kw,ev_0,ev_1");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 96);
    let mut on = [0usize; 2];
    for r in &rows {
        assert!(r[3] <= 50.0 + 1e-9, "slot {}: {}", r[0], r[3]);
        let n = r[4] + r[5];
        assert!((r[2] - 7.2 * n).abs() < 1e-9);
        if (32..64).contains(&(r[0] as usize)) {
            assert_eq!(n, 0.0);
        }
        on[0] += r[4] as usize;
        on[1] += r[5] as usize;
    }
    // 55 kWh at 1.8 kWh per slot.
    assert!(on.iter().all(|&k| k >= 31));

    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["status"], "feasible");
}

#[test]
fn coordinate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let over = dir.path().join("over.json");
    let mut sc = two_ev_scenario(35.0);
    sc.profile.kw[80] = 51.0;
    std::fs::write(&over, sc.to_json().unwrap()).unwrap();
    let o = evhost(&["coordinate", s(&over), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("schedule.csv").exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"grid\": ").unwrap();
    let o = evhost(&["coordinate", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let o = evhost(&["coordinate", s(&dir.path().join("missing.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn build_pmf_sums_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pmf.json");
    let trips = data_dir().join("trips_synthetic.csv");
    let o = evhost(&["build-pmf", s(&trips), "--tag", "t", "--out", s(&out)]);
    assert!(o.status.success());
    let pmf = evhost_core::io::load_pmf_json(&out).unwrap();
    let total: f64 = pmf.hour_bins.iter().flatten().sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(String::from_utf8_lossy(&o.stdout).contains("trips accepted"));
}

#[test]
fn synth_profiles_are_seeded_and_backfeed_in_march() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: u64, name: &str| {
        let ami = dir.path().join(name);
        let o = evhost(&[
            "synth-profiles",
            "--archetype",
            "march_like",
            "--capacity-kw",
            "50",
            "--customers",
            "10",
            "--start",
            "2023-03-01",
            "--days",
            "31",
            "--seed",
            &seed.to_string(),
            "--out",
            s(&ami),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        ami
    };
    let a = run(5, "a.csv");
    let b = run(5, "b.csv");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let feeder = load_ami_csv(&a, &dir.path().join("metadata.csv")).unwrap();
    assert_eq!(feeder[0].profiles.len(), 31);
    assert_eq!(feeder[0].customer_count, 10);
    let negative = feeder[0]
        .profiles
        .iter()
        .filter(|p| p.kw.iter().any(|&v| v < 0.0))
        .count();
    assert!(negative > 0);
    let c = run(6, "c.csv");
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn evaluate_feeder_reports_both_powers() {
    let dir = tempfile::tempdir().unwrap();
    let config = data_dir().join("demo/feeder.toml");
    let out = dir.path().join("report");
    let o = evhost(&[
        "evaluate-feeder",
        "--config",
        s(&config),
        "--months",
        "7",
        "--n-scenarios",
        "2",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = std::fs::read_to_string(out.join("report_month_07.csv")).unwrap();
    let header = header.lines().next().unwrap();
    for p in ["7.2", "11.5"] {
        assert!(header.contains(&format!("Desired #EV (%) {p} kW")), "{header}");
    }
    assert!(!out.join("report_month_03.csv").exists());
    let recs = read_records_csv(&out.join("records.csv")).unwrap();
    assert_eq!(recs.len(), 6 * 2 * 2);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 12);
}

#[test]
fn evaluate_feeder_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "ami = \"a.csv\"\nbogus = 1\n").unwrap();
    let o = evhost(&["evaluate-feeder", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));

    let demo = data_dir().join("demo");
    let o = evhost(&[
        "evaluate-feeder",
        "--ami",
        s(&demo.join("ami.csv")),
        "--metadata",
        s(&demo.join("metadata.csv")),
        "--months",
        "13",
        "--powers-kw",
        "7.2",
        "--n-scenarios",
        "1",
        "--trips",
        s(&data_dir().join("trips_synthetic.csv")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("months"));
}

/// Reports rebuilt from a frozen records file match the stored tables, and
/// the percentages match a direct tally of the records.
#[test]
fn report_matches_golden_tables() {
    let dir = tempfile::tempdir().unwrap();
    let golden = golden_dir();
    let records = golden.join("records.csv");
    let o = evhost(&["report", s(&records), "--out", s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["report_month_07.csv", "report_month_07.md"] {
        let got = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let want = std::fs::read_to_string(golden.join(name)).unwrap();
        assert_eq!(got, want, "{name}");
    }

    let recs = read_records_csv(&records).unwrap();
    let table = std::fs::read_to_string(golden.join("report_month_07.csv")).unwrap();
    let mut lines = table.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        for power in [7.2, 11.5] {
            let cell: Vec<_> = recs
                .iter()
                .filter(|r| r.transformer_id == cells[0] && r.charger_power_kw == power)
                .collect();
            let desired = cell.iter().filter(|r| r.status == EvalStatus::Desired).count();
            let pct = 100.0 * desired as f64 / cell.len() as f64;
            let col = header
                .iter()
                .position(|h| *h == format!("Desired #EV (%) {power} kW"))
                .unwrap();
            let stored: f64 = cells[col].parse().unwrap();
            assert!((stored - pct).abs() < 0.005 + 1e-9, "{} {power}: {stored} vs {pct}", cells[0]);
        }
    }
}
