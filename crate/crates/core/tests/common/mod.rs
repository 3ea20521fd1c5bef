#![allow(dead_code)]

use mcbeam::model::{ChannelSet, SystemConfig};
use mcbeam::C64;
use nalgebra::DVector;

/// Deterministic closed-form channels used by the reference optima:
/// `h[b][u][a] = r e^{iφ}`, `r = 0.5 + ((b + 2u + 3a) mod 5)/4`,
/// `φ = 0.7b + 1.3u + 2.1a + 0.3bua`.
pub fn formula_channels(num_bs: usize, num_users: usize, num_antennas: usize) -> ChannelSet {
    let links = (0..num_bs)
        .map(|b| {
            (0..num_users)
                .map(|u| {
                    DVector::from_fn(num_antennas, |a, _| {
                        let r = 0.5 + ((b + 2 * u + 3 * a) % 5) as f64 / 4.0;
                        let phi = 0.7 * b as f64
                            + 1.3 * u as f64
                            + 2.1 * a as f64
                            + 0.3 * (b * u * a) as f64;
                        C64::from_polar(r, phi)
                    })
                })
                .collect()
        })
        .collect();
    ChannelSet::from_links(links).unwrap()
}

/// Config with linear target `gamma` for every user.
pub fn linear_config(
    num_bs: usize,
    num_groups: usize,
    num_users: usize,
    num_antennas: usize,
    gamma: f64,
) -> SystemConfig {
    let mut cfg =
        SystemConfig::symmetric(num_bs, num_groups, num_users, num_antennas, 0.0).unwrap();
    cfg.sinr_target = vec![gamma; num_users];
    cfg
}

/// Relaxed optima of the formula-channel instances `(B, G, U, A, γ)`,
/// computed with two independent conic solvers (Clarabel and SCS, agreeing
/// to 1e-8 relative).
pub const REFERENCE_OPTIMA: [(usize, usize, usize, usize, f64, f64); 4] = [
    (2, 2, 4, 3, 1.0, 3.320_246_48),
    (2, 2, 4, 3, 3.162_277_660_168_379_5, 23.820_261_34),
    (2, 4, 8, 4, 1.0, 10.866_739_0),
    (3, 3, 6, 4, 2.0, 22.827_895_55),
];

use conic::{solve_sdp, SolverOptions};
use mcbeam::distributed::{
    build_subproblem, extract_sensitivities, subgradient, InterferenceAllocation,
};

/// One subgradient entry, keyed by `(bs, user)`.
pub type Subgradient = ((usize, usize), f64);

/// `Σ_b f*_b(θ)` and the reported subgradient at `θ`.
pub fn value_and_subgradient(
    channels: &ChannelSet,
    config: &SystemConfig,
    theta: &InterferenceAllocation,
    solver: &SolverOptions,
) -> (f64, Vec<Subgradient>) {
    let mut total = 0.0;
    let mut bundles = Vec::new();
    for b in 0..config.num_bs {
        let sub = build_subproblem(&channels.local(b), theta, config);
        let sol = solve_sdp(&sub.problem, solver);
        assert!(sol.is_optimal(), "subproblem {b}: {:?}", sol.status);
        total += sol.objective;
        bundles.push(extract_sensitivities(&sol, &sub, config).unwrap());
    }
    (total, subgradient(theta, &bundles))
}

/// Worst mismatch between central differences (step `1e-4·θ`) of `Σ_b f*_b`
/// and the reported subgradient, relative to `max(|fd|, |s|)` with a floor
/// of `floor`.
pub fn subgradient_mismatch(channels: &ChannelSet, config: &SystemConfig, floor: f64) -> f64 {
    let solver = SolverOptions::with_tolerance(1e-10);
    let theta = InterferenceAllocation::noise_scaled(config);
    let (_, s) = value_and_subgradient(channels, config, &theta, &solver);
    let mut worst: f64 = 0.0;
    for ((b, u), sv) in s {
        let h = 1e-4 * theta.get(b, u);
        let at = |d: f64| {
            let mut t = theta.clone();
            t.set(b, u, theta.get(b, u) + d);
            value_and_subgradient(channels, config, &t, &solver).0
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        worst = worst.max((fd - sv).abs() / fd.abs().max(sv.abs()).max(floor));
    }
    worst
}
