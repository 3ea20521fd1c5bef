//! Orthogonal access and interference nulling against the coordinated optimum.

use mcbeam::baselines::{interference_nulling, orthogonal_access};
use mcbeam::centralized::{solve_centralized, CentralizedOptions};
use mcbeam::distributed::DistributedOptions;
use mcbeam::model::{generate_channels, worst_sinr_violation, ChannelSet, SystemConfig};
use mcbeam::C64;
use nalgebra::DVector;

#[test]
fn single_cell_schemes_coincide() {
    let cfg = SystemConfig::symmetric(1, 2, 6, 4, 5.0).unwrap();
    for seed in 0..4 {
        let ch = generate_channels(&cfg, seed);
        let coord = solve_centralized(&ch, &cfg, &CentralizedOptions::default()).unwrap();
        let orth = orthogonal_access(&ch, &cfg, &CentralizedOptions::default()).unwrap();
        let null = interference_nulling(&ch, &cfg, &DistributedOptions::default()).unwrap();
        assert!(orth.feasible);
        assert_eq!(orth.sum_power, coord.achieved_power, "seed {seed}");
        assert!((null.sum_power - coord.achieved_power).abs() <= 1e-6 * coord.achieved_power);
        assert_eq!(orth.backhaul_scalars, 0);
    }
}

#[test]
fn zero_cross_channels_make_nulling_free() {
    let cfg = SystemConfig::symmetric(2, 2, 4, 3, 0.0).unwrap();
    let mut ch = generate_channels(&cfg, 12);
    for u in 0..4 {
        let other = 1 - cfg.serving_bs(u);
        ch.set(other, u, DVector::zeros(3));
    }
    let coord = solve_centralized(&ch, &cfg, &CentralizedOptions::default()).unwrap();
    let null = interference_nulling(&ch, &cfg, &DistributedOptions::default()).unwrap();
    assert!((null.sum_power - coord.lower_bound).abs() <= 1e-6 * coord.lower_bound);
}

#[test]
fn single_antenna_cannot_null() {
    let cfg = SystemConfig::symmetric(2, 2, 2, 1, 0.0).unwrap();
    let h = |re: f64, im: f64| DVector::from_vec(vec![C64::new(re, im)]);
    let ch = ChannelSet::from_links(vec![
        vec![h(1.0, 0.0), h(0.3, 0.2)],
        vec![h(0.5, -0.1), h(0.8, 0.4)],
    ])
    .unwrap();
    assert!(interference_nulling(&ch, &cfg, &DistributedOptions::default()).is_err());
    // Coordinated beamforming is still feasible at 0 dB.
    assert!(solve_centralized(&ch, &cfg, &CentralizedOptions::default()).is_ok());
}

#[test]
fn orthogonal_slots_meet_boosted_targets() {
    let cfg = SystemConfig::symmetric(2, 4, 8, 8, 0.0).unwrap();
    let ch = generate_channels(&cfg, 3);
    let orth = orthogonal_access(&ch, &cfg, &CentralizedOptions::default()).unwrap();
    assert!(orth.feasible);
    assert!((orth.sum_power * 2.0 - orth.slot_sum_power).abs() <= 1e-12 * orth.slot_sum_power);
    // Within its own slot each cell sees no interference and needs SINR 3.
    for b in 0..2 {
        let (mut cell, groups, users) = cfg.restrict_to_bs(b);
        cell.sinr_target = vec![3.0; users.len()];
        let beams = mcbeam::model::BeamformerSet {
            w: groups.iter().map(|&g| orth.beams.w[g].clone()).collect(),
        };
        assert!(worst_sinr_violation(&ch.restrict(b, &users), &beams, &cell) <= 1e-6);
    }
}

#[test]
fn coordination_beats_both_baselines_at_high_target() {
    let cfg = SystemConfig::symmetric(2, 4, 8, 8, 10.0).unwrap();
    for seed in 0..3 {
        let ch = generate_channels(&cfg, seed);
        let coord = solve_centralized(&ch, &cfg, &CentralizedOptions::default()).unwrap();
        let orth = orthogonal_access(&ch, &cfg, &CentralizedOptions::default()).unwrap();
        let null = interference_nulling(&ch, &cfg, &DistributedOptions::default()).unwrap();
        assert!(coord.achieved_power <= null.sum_power * (1.0 + 1e-6));
        assert!(coord.achieved_power <= orth.sum_power);
        assert!(worst_sinr_violation(&ch, &null.beams, &cfg) <= 1e-6);
    }
}
