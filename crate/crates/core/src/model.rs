//! Network topology, Rayleigh channel generation and SINR/power evaluation.
//!
//! Powers and noise are dimensionless: channels have unit-variance entries
//! and the default noise variance is one.

use conic::linalg::{hermitian_eigenvalues, trace_re};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{BeamError, Result};
use crate::C64;

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Ownership maps and per-user QoS parameters of a multi-cell multigroup
/// network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_bs: usize,
    pub num_antennas: usize,
    /// Serving BS of each group.
    pub group_owner: Vec<usize>,
    /// Group of each user.
    pub user_group: Vec<usize>,
    /// Linear SINR target per user.
    pub sinr_target: Vec<f64>,
    pub noise_var: Vec<f64>,
}

impl SystemConfig {
    /// `G` groups split evenly over `B` BSs (contiguous blocks) and `U/G`
    /// users per group, all with target `gamma_db` and unit noise.
    pub fn symmetric(
        num_bs: usize,
        num_groups: usize,
        num_users: usize,
        num_antennas: usize,
        gamma_db: f64,
    ) -> Result<Self> {
        if num_bs == 0 || num_groups == 0 || num_users == 0 || num_antennas == 0 {
            return Err(BeamError::InvalidConfig(
                "B, G, U, A must be positive".into(),
            ));
        }
        if !num_groups.is_multiple_of(num_bs) {
            return Err(BeamError::InvalidConfig(format!(
                "G={num_groups} not divisible by B={num_bs}"
            )));
        }
        if !num_users.is_multiple_of(num_groups) {
            return Err(BeamError::InvalidConfig(format!(
                "U={num_users} not divisible by G={num_groups}"
            )));
        }
        let groups_per_bs = num_groups / num_bs;
        let users_per_group = num_users / num_groups;
        let cfg = Self {
            num_bs,
            num_antennas,
            group_owner: (0..num_groups).map(|g| g / groups_per_bs).collect(),
            user_group: (0..num_users).map(|u| u / users_per_group).collect(),
            sinr_target: vec![db_to_linear(gamma_db); num_users],
            noise_var: vec![1.0; num_users],
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn num_groups(&self) -> usize {
        self.group_owner.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_group.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BeamError::InvalidConfig(m));
        if self.num_bs == 0
            || self.num_antennas == 0
            || self.num_groups() == 0
            || self.num_users() == 0
        {
            return bad("B, G, U, A must be positive".into());
        }
        if let Some(g) = self.group_owner.iter().position(|&b| b >= self.num_bs) {
            return bad(format!("group {g} owned by nonexistent BS"));
        }
        if let Some(u) = self.user_group.iter().position(|&g| g >= self.num_groups()) {
            return bad(format!("user {u} assigned to nonexistent group"));
        }
        if self.sinr_target.len() != self.num_users() || self.noise_var.len() != self.num_users() {
            return bad("per-user target/noise vectors must have length U".into());
        }
        if self
            .sinr_target
            .iter()
            .any(|g| !(g.is_finite() && *g > 0.0))
        {
            return bad("SINR targets must be positive".into());
        }
        if self.noise_var.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return bad("noise variances must be positive".into());
        }
        Ok(())
    }

    pub fn serving_bs(&self, user: usize) -> usize {
        self.group_owner[self.user_group[user]]
    }

    pub fn groups_of_bs(&self, bs: usize) -> Vec<usize> {
        (0..self.num_groups())
            .filter(|&g| self.group_owner[g] == bs)
            .collect()
    }

    pub fn users_of_group(&self, group: usize) -> Vec<usize> {
        (0..self.num_users())
            .filter(|&u| self.user_group[u] == group)
            .collect()
    }

    pub fn users_of_bs(&self, bs: usize) -> Vec<usize> {
        (0..self.num_users())
            .filter(|&u| self.serving_bs(u) == bs)
            .collect()
    }

    pub fn out_of_cell_users(&self, bs: usize) -> Vec<usize> {
        (0..self.num_users())
            .filter(|&u| self.serving_bs(u) != bs)
            .collect()
    }

    /// Single-cell view of BS `bs`: its groups and users renumbered from
    /// zero. Returns the config plus the original group and user ids.
    pub fn restrict_to_bs(&self, bs: usize) -> (SystemConfig, Vec<usize>, Vec<usize>) {
        let groups = self.groups_of_bs(bs);
        let users = self.users_of_bs(bs);
        let cfg = SystemConfig {
            num_bs: 1,
            num_antennas: self.num_antennas,
            group_owner: vec![0; groups.len()],
            user_group: users
                .iter()
                .map(|&u| {
                    groups
                        .iter()
                        .position(|&g| g == self.user_group[u])
                        .unwrap()
                })
                .collect(),
            sinr_target: users.iter().map(|&u| self.sinr_target[u]).collect(),
            noise_var: users.iter().map(|&u| self.noise_var[u]).collect(),
        };
        (cfg, groups, users)
    }
}

/// Channel vectors `h[b][u]` for every BS–user pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    num_bs: usize,
    num_users: usize,
    h: Vec<DVector<C64>>,
}

impl ChannelSet {
    /// `links[b][u]`; every vector must have the same length.
    pub fn from_links(links: Vec<Vec<DVector<C64>>>) -> Result<Self> {
        let num_bs = links.len();
        let num_users = links.first().map_or(0, |r| r.len());
        let dim = links.first().and_then(|r| r.first()).map_or(0, |h| h.len());
        if links.iter().any(|r| r.len() != num_users)
            || links.iter().flatten().any(|h| h.len() != dim)
        {
            return Err(BeamError::InvalidConfig("ragged channel set".into()));
        }
        if links
            .iter()
            .flatten()
            .flat_map(|h| h.iter())
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(BeamError::InvalidConfig("non-finite channel entry".into()));
        }
        Ok(Self {
            num_bs,
            num_users,
            h: links.into_iter().flatten().collect(),
        })
    }

    pub fn num_bs(&self) -> usize {
        self.num_bs
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn get(&self, bs: usize, user: usize) -> &DVector<C64> {
        &self.h[bs * self.num_users + user]
    }

    pub fn set(&mut self, bs: usize, user: usize, h: DVector<C64>) {
        self.h[bs * self.num_users + user] = h;
    }

    /// `H = h hᴴ`.
    pub fn gram(&self, bs: usize, user: usize) -> DMatrix<C64> {
        let h = self.get(bs, user);
        h * h.adjoint()
    }

    /// The rows `h[bs][·]` known to BS `bs`.
    pub fn local(&self, bs: usize) -> LocalCsi {
        LocalCsi {
            bs,
            h: (0..self.num_users)
                .map(|u| self.get(bs, u).clone())
                .collect(),
        }
    }

    /// Channels from BS `bs` to the listed users, as a single-BS set.
    pub fn restrict(&self, bs: usize, users: &[usize]) -> ChannelSet {
        ChannelSet {
            num_bs: 1,
            num_users: users.len(),
            h: users.iter().map(|&u| self.get(bs, u).clone()).collect(),
        }
    }

    pub fn check_against(&self, config: &SystemConfig) -> Result<()> {
        if self.num_bs != config.num_bs
            || self.num_users != config.num_users()
            || self.h.iter().any(|h| h.len() != config.num_antennas)
        {
            return Err(BeamError::InvalidConfig(
                "channel set does not match configuration".into(),
            ));
        }
        Ok(())
    }
}

/// Local channel state at one BS: `h[bs][u]` for all users `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCsi {
    pub bs: usize,
    pub h: Vec<DVector<C64>>,
}

impl LocalCsi {
    pub fn gram(&self, user: usize) -> DMatrix<C64> {
        &self.h[user] * self.h[user].adjoint()
    }

    /// `|h[bs][u]ᴴ w|²`.
    pub fn gain(&self, user: usize, w: &DVector<C64>) -> f64 {
        self.h[user].dotc(w).norm_sqr()
    }
}

/// Draws i.i.d. CN(0, 1) channel entries. Each BS–user link owns its own
/// ChaCha stream (`b·U + u`) under the given seed.
pub fn generate_channels(config: &SystemConfig, seed: u64) -> ChannelSet {
    let users = config.num_users();
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = Vec::with_capacity(config.num_bs * users);
    for b in 0..config.num_bs {
        for u in 0..users {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((b * users + u) as u64);
            h.push(DVector::from_fn(config.num_antennas, |_, _| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re * scale, im * scale)
            }));
        }
    }
    ChannelSet {
        num_bs: config.num_bs,
        num_users: users,
        h,
    }
}

/// One beamformer per group.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub w: Vec<DVector<C64>>,
}

impl BeamformerSet {
    pub fn zeros(num_groups: usize, dim: usize) -> Self {
        Self {
            w: vec![DVector::zeros(dim); num_groups],
        }
    }

    pub fn sum_power(&self) -> f64 {
        self.w.iter().map(|w| w.norm_squared()).sum()
    }

    /// `W_g = w_g w_gᴴ`.
    pub fn outer_products(&self) -> CovarianceSet {
        CovarianceSet {
            w: self.w.iter().map(|w| w * w.adjoint()).collect(),
        }
    }
}

/// One transmit covariance per group.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub w: Vec<DMatrix<C64>>,
}

impl CovarianceSet {
    pub fn sum_power(&self) -> f64 {
        self.w.iter().map(trace_re).sum()
    }

    /// Hermitian to 1e-9 relative and `λ_min ≥ -1e-7 λ_max` for every block.
    pub fn is_valid(&self) -> bool {
        self.w.iter().all(|m| {
            let scale = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
            let skew = (m - m.adjoint())
                .iter()
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            if skew > 1e-9 * scale.max(f64::MIN_POSITIVE) {
                return false;
            }
            let ev = hermitian_eigenvalues(m);
            let (lo, hi) = (ev[0], *ev.last().unwrap());
            lo >= -1e-7 * hi.max(0.0)
        })
    }
}

/// `|h_{b,u}ᴴ w_g|²` over the sum of noise and every other group's received
/// power at user `u`.
pub fn evaluate_sinr(
    channels: &ChannelSet,
    beams: &BeamformerSet,
    config: &SystemConfig,
    user: usize,
) -> f64 {
    let own = config.user_group[user];
    let mut signal = 0.0;
    let mut interference = 0.0;
    for (g, w) in beams.w.iter().enumerate() {
        let p = channels.get(config.group_owner[g], user).dotc(w).norm_sqr();
        if g == own {
            signal = p;
        } else {
            interference += p;
        }
    }
    signal / (config.noise_var[user] + interference)
}

/// Largest relative shortfall `max_u (γ_u - SINR_u) / γ_u`, clipped at zero.
pub fn worst_sinr_violation(
    channels: &ChannelSet,
    beams: &BeamformerSet,
    config: &SystemConfig,
) -> f64 {
    (0..config.num_users())
        .map(|u| {
            let gamma = config.sinr_target[u];
            ((gamma - evaluate_sinr(channels, beams, config, u)) / gamma).max(0.0)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn db_conversions() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!((db_to_linear(10.0) - 10.0).abs() < 1e-12);
        assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
        assert!((linear_to_db(100.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_layout() {
        let cfg = SystemConfig::symmetric(2, 4, 8, 8, 0.0).unwrap();
        assert_eq!(cfg.group_owner, vec![0, 0, 1, 1]);
        assert_eq!(cfg.user_group, vec![0, 0, 1, 1, 2, 2, 3, 3]);
        assert_eq!(cfg.users_of_bs(1), vec![4, 5, 6, 7]);
        assert_eq!(cfg.out_of_cell_users(0), vec![4, 5, 6, 7]);
        assert!(SystemConfig::symmetric(2, 3, 6, 4, 0.0).is_err());
        assert!(SystemConfig::symmetric(2, 4, 6, 4, 0.0).is_err());
    }

    #[test]
    fn validate_rejects_bad_targets() {
        let mut cfg = SystemConfig::symmetric(1, 1, 1, 2, 0.0).unwrap();
        cfg.noise_var[0] = 0.0;
        assert!(cfg.validate().is_err());
        cfg.noise_var[0] = 1.0;
        cfg.sinr_target[0] = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sinr_single_group() {
        let mut cfg = SystemConfig::symmetric(1, 1, 1, 2, 0.0).unwrap();
        cfg.noise_var[0] = 2.0;
        let ch =
            ChannelSet::from_links(vec![vec![DVector::from_vec(vec![c(1.0), c(0.0)])]]).unwrap();
        let beams = BeamformerSet {
            w: vec![DVector::from_vec(vec![c(2.0), c(0.0)])],
        };
        assert!((evaluate_sinr(&ch, &beams, &cfg, 0) - 2.0).abs() < 1e-15);
        let zero = BeamformerSet::zeros(1, 2);
        assert_eq!(evaluate_sinr(&ch, &zero, &cfg, 0), 0.0);
    }

    #[test]
    fn orthogonal_cross_channel_removes_interference() {
        let cfg = SystemConfig::symmetric(2, 2, 2, 2, 0.0).unwrap();
        let e1 = DVector::from_vec(vec![c(1.0), c(0.0)]);
        let e2 = DVector::from_vec(vec![c(0.0), c(1.0)]);
        // BS1 beams along e2; the cross channel BS1 -> user 0 is e1.
        let ch = ChannelSet::from_links(vec![
            vec![e1.clone(), e1.clone()],
            vec![e1.clone(), e1.clone()],
        ])
        .unwrap();
        let beams = BeamformerSet {
            w: vec![e1.clone() * c(1.5), e2],
        };
        let single = 1.5f64.powi(2) / 1.0;
        assert!((evaluate_sinr(&ch, &beams, &cfg, 0) - single).abs() < 1e-15);
    }

    #[test]
    fn sum_power_arithmetic() {
        let beams = BeamformerSet {
            w: vec![
                DVector::from_vec(vec![c(1.0), c(1.0)]),
                DVector::from_vec(vec![c(0.0), c(2.0)]),
            ],
        };
        assert_eq!(beams.sum_power(), 6.0);
        assert!((beams.outer_products().sum_power() - 6.0).abs() < 1e-12);
        assert_eq!(BeamformerSet::zeros(3, 4).sum_power(), 0.0);
    }

    #[test]
    fn channels_are_deterministic_and_seed_dependent() {
        let cfg = SystemConfig::symmetric(2, 2, 4, 3, 0.0).unwrap();
        let a = generate_channels(&cfg, 7);
        assert_eq!(a, generate_channels(&cfg, 7));
        assert_ne!(a, generate_channels(&cfg, 8));
        a.check_against(&cfg).unwrap();
    }

    #[test]
    fn restriction_renumbers() {
        let cfg = SystemConfig::symmetric(2, 4, 8, 4, 3.0).unwrap();
        let (sub, groups, users) = cfg.restrict_to_bs(1);
        assert_eq!(groups, vec![2, 3]);
        assert_eq!(users, vec![4, 5, 6, 7]);
        assert_eq!(sub.user_group, vec![0, 0, 1, 1]);
        assert_eq!(sub.num_bs, 1);
        sub.validate().unwrap();
    }
}
