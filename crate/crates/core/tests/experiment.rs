//! Experiment harness: reproducible files and recomputable aggregates.

use std::collections::BTreeMap;
use std::path::Path;

use mcbeam::experiment::{
    compare_schemes, run_experiment, write_comparison, write_experiment, Algorithm, ExperimentSpec,
    OutputPaths, Scenario, SeedRange, SummaryRecord, COORDINATED, NULLING, ORTHOGONAL,
};

fn spec(algorithm: Algorithm) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(
        Scenario {
            num_bs: 2,
            num_groups: 2,
            num_users: 4,
            num_antennas: 4,
        },
        vec![0.0, 5.0],
        SeedRange { count: 4, base: 21 },
    );
    spec.algorithm = algorithm;
    spec.trace = true;
    spec
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn paths(dir: &Path) -> OutputPaths {
    OutputPaths {
        dir: dir.to_path_buf(),
        backhaul: Some(dir.join("backhaul.jsonl")),
    }
}

#[test]
fn reruns_are_byte_identical() {
    for algorithm in [Algorithm::Centralized, Algorithm::Distributed] {
        let spec = spec(algorithm);
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_experiment(&run_experiment(&spec).unwrap(), &paths(a.path())).unwrap();
        write_experiment(&run_experiment(&spec).unwrap(), &paths(b.path())).unwrap();
        let (fa, fb) = (read_dir_bytes(a.path()), read_dir_bytes(b.path()));
        assert!(fa.contains_key("per_seed.csv") && fa.contains_key("summary.csv"));
        assert_eq!(fa, fb);
    }
    let spec = spec(Algorithm::Centralized);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_comparison(&compare_schemes(&spec).unwrap(), &paths(a.path())).unwrap();
    write_comparison(&compare_schemes(&spec).unwrap(), &paths(b.path())).unwrap();
    assert_eq!(read_dir_bytes(a.path()), read_dir_bytes(b.path()));
}

#[test]
fn summary_is_recomputable_from_per_seed_rows() {
    let spec = spec(Algorithm::Distributed);
    let dir = tempfile::tempdir().unwrap();
    write_experiment(&run_experiment(&spec).unwrap(), &paths(dir.path())).unwrap();

    let mut rows: BTreeMap<(String, u64), Vec<(f64, bool)>> = BTreeMap::new();
    let mut reader = csv::Reader::from_path(dir.path().join("per_seed.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    assert_eq!(
        headers.iter().collect::<Vec<_>>(),
        [
            "seed",
            "scheme",
            "gamma_db",
            "sum_power_linear",
            "sum_power_db",
            "rounds",
            "all_rank_one",
            "backhaul_scalars"
        ]
    );
    for rec in reader.records() {
        let rec = rec.unwrap();
        let power: f64 = rec[3].parse().unwrap();
        let db: f64 = rec[4].parse().unwrap();
        assert!((db - 10.0 * power.log10()).abs() < 1e-12);
        rows.entry((rec[1].to_string(), rec[2].parse::<f64>().unwrap().to_bits()))
            .or_default()
            .push((power, rec[6].parse().unwrap()));
    }
    let mut reader = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let mut seen = 0;
    for rec in reader.deserialize::<SummaryRecord>() {
        let s = rec.unwrap();
        let group = &rows[&(s.scheme.clone(), s.gamma_db.to_bits())];
        let mean = group.iter().map(|r| r.0).sum::<f64>() / group.len() as f64;
        let rank_one = group.iter().filter(|r| r.1).count() as f64 / group.len() as f64;
        assert_eq!(s.seeds_ok, group.len());
        assert!((s.mean_sum_power_linear - mean).abs() <= 1e-12 * mean);
        assert!((s.rank_one_fraction - rank_one).abs() < 1e-12);
        seen += 1;
    }
    assert_eq!(seen, 2);
}

#[test]
fn trace_means_end_at_the_converged_mean() {
    let spec = spec(Algorithm::Distributed);
    let out = run_experiment(&spec).unwrap();
    for &g in &spec.gamma_db {
        let means = out.trace_means(g);
        let records = out.records_for("distributed", g);
        let rounds = records.iter().map(|r| r.rounds).max().unwrap();
        assert_eq!(means.len(), rounds);
        let last_relaxed: f64 = out
            .traces
            .iter()
            .find(|t| t.gamma_db == g)
            .unwrap()
            .rows
            .chunk_by(|a, b| a.seed == b.seed)
            .map(|rows| rows.last().unwrap().sum_power_linear)
            .sum::<f64>()
            / records.len() as f64;
        assert!(
            (means.last().unwrap().mean_sum_power_linear - last_relaxed).abs()
                <= 1e-12 * last_relaxed
        );
    }
}

#[test]
fn single_cell_comparison_collapses() {
    let mut spec = spec(Algorithm::Centralized);
    spec.scenario = Scenario {
        num_bs: 1,
        num_groups: 2,
        num_users: 4,
        num_antennas: 4,
    };
    let out = compare_schemes(&spec).unwrap();
    for &g in &spec.gamma_db {
        let c = out.mean(COORDINATED, g).unwrap().mean_sum_power_linear;
        for scheme in [NULLING, ORTHOGONAL] {
            let v = out.mean(scheme, g).unwrap().mean_sum_power_linear;
            assert!((v - c).abs() <= 1e-6 * c, "{scheme} at {g} dB");
        }
    }
}

#[test]
fn invalid_specs_are_rejected_before_running() {
    let mut bad = spec(Algorithm::Centralized);
    bad.scenario.num_users = 5;
    assert_eq!(run_experiment(&bad).unwrap_err().kind(), "invalid_config");
    assert!(ExperimentSpec::from_json(r#"{"scenario": {"B": 2, "G": 2, "U": 4, "A": 4}, "seeds": {"count": 1, "base": 0}, "extra": 1}"#).is_err());
}
