//! Gaussian randomization: sampling law, nesting in the candidate count,
//! determinism and the rank-one fixed point.

use conic::SolverOptions;
use mcbeam::centralized::{principal_component, solve_relaxation};
use mcbeam::model::{
    generate_channels, worst_sinr_violation, BeamformerSet, CovarianceSet, SystemConfig,
};
use mcbeam::randomization::{
    candidate_rng, covariance_factor, draw_from_factor, empirical_covariance_error,
    power_opt_centralized, randomize_centralized, RandomizationOptions,
};
use mcbeam::C64;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn multicast_relaxation(seed: u64) -> (SystemConfig, mcbeam::model::ChannelSet, CovarianceSet) {
    let cfg = SystemConfig::symmetric(2, 4, 24, 8, 0.0).unwrap();
    let ch = generate_channels(&cfg, seed);
    let sol = solve_relaxation(&ch, &cfg, &SolverOptions::default()).unwrap();
    (cfg, ch, CovarianceSet { w: sol.blocks })
}

#[test]
fn draws_reproduce_the_covariance() {
    // Rank-2 complex target with a nontrivial off-diagonal.
    let a = DVector::from_vec(vec![
        C64::new(1.0, 0.5),
        C64::new(-0.3, 0.2),
        C64::new(0.7, 0.0),
    ]);
    let b = DVector::from_vec(vec![
        C64::new(0.0, 1.0),
        C64::new(0.4, -0.6),
        C64::new(-0.2, 0.1),
    ]);
    let target: DMatrix<C64> = &a * a.adjoint() + &b * b.adjoint() * C64::new(0.5, 0.0);
    let f = covariance_factor(&target);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws: Vec<_> = (0..100_000)
        .map(|_| draw_from_factor(&f, &mut rng))
        .collect();
    let err = empirical_covariance_error(&draws, &target);
    assert!(err <= 0.05, "relative covariance error {err}");
}

#[test]
fn factor_clips_solver_noise() {
    let mut w = DMatrix::<C64>::zeros(2, 2);
    w[(0, 0)] = C64::new(4.0, 0.0);
    w[(1, 1)] = C64::new(-1e-12, 0.0);
    let f = covariance_factor(&w);
    let back = &f * f.adjoint();
    assert!((back[(0, 0)].re - 4.0).abs() < 1e-12);
    assert!(back[(1, 1)].re.abs() < 1e-20);
}

#[test]
fn more_candidates_never_hurt() {
    let mut checked = 0;
    for seed in 0..6 {
        let (cfg, ch, cov) = multicast_relaxation(seed);
        let run = |n: usize| {
            let opts = RandomizationOptions {
                num_candidates: n,
                seed: 77,
                ..Default::default()
            };
            randomize_centralized(&cov, &ch, &cfg, &opts, &SolverOptions::default())
        };
        let (Ok(small), Ok(large)) = (run(10), run(100)) else {
            continue;
        };
        assert!(large.power <= small.power, "seed {seed}");
        assert!(large.power >= cov.sum_power() * (1.0 - 1e-8));
        assert!(worst_sinr_violation(&ch, &large.beams, &cfg) <= 1e-6);
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn same_seed_same_candidate() {
    let (cfg, ch, cov) = multicast_relaxation(1);
    let opts = RandomizationOptions {
        num_candidates: 30,
        seed: 5,
        ..Default::default()
    };
    let a = randomize_centralized(&cov, &ch, &cfg, &opts, &SolverOptions::default());
    let b = randomize_centralized(&cov, &ch, &cfg, &opts, &SolverOptions::default());
    match (a, b) {
        (Ok(a), Ok(b)) => {
            assert_eq!(a.index, b.index);
            assert_eq!(a.beams, b.beams);
        }
        (Err(a), Err(b)) => assert_eq!(a, b),
        _ => panic!("nondeterministic outcome"),
    }
}

#[test]
fn candidate_streams_are_per_group() {
    let mut a = candidate_rng(9, 3, 1, 4);
    let mut b = candidate_rng(9, 3, 1, 4);
    let mut c = candidate_rng(9, 3, 2, 4);
    let f = DMatrix::<C64>::identity(3, 3);
    let (x, y, z) = (
        draw_from_factor(&f, &mut a),
        draw_from_factor(&f, &mut b),
        draw_from_factor(&f, &mut c),
    );
    assert_eq!(x, y);
    assert_ne!(x, z);
}

#[test]
fn tight_relaxation_is_a_fixed_point_of_rescaling() {
    let cfg = SystemConfig::symmetric(2, 4, 8, 8, 0.0).unwrap();
    let mut checked = 0;
    for seed in 0..5 {
        let ch = generate_channels(&cfg, seed);
        let sol = solve_relaxation(&ch, &cfg, &SolverOptions::default()).unwrap();
        let Ok(w) = sol
            .blocks
            .iter()
            .map(principal_component)
            .collect::<Result<Vec<_>, _>>()
        else {
            continue;
        };
        let beams = BeamformerSet { w };
        let out = power_opt_centralized(
            &beams,
            &ch,
            &cfg,
            1e-6,
            &SolverOptions::with_tolerance(1e-10),
        );
        assert!(out.feasible);
        for p in &out.powers {
            assert!((p - 1.0).abs() <= 1e-5, "seed {seed}: {:?}", out.powers);
        }
        checked += 1;
    }
    assert!(checked >= 4);
}
