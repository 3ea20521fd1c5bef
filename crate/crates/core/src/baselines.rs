//! Conventional comparison schemes: single-cell beamforming with orthogonal
//! access, and coordinated beamforming with inter-cell interference nulling.

use serde::{Deserialize, Serialize};

use crate::centralized::{solve_centralized, CentralizedOptions};
use crate::distributed::{run_distributed, DistributedOptions, InterferencePolicy};
use crate::error::Result;
use crate::model::{BeamformerSet, ChannelSet, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineScheme {
    OrthogonalAccess,
    InterferenceNulling,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub bs: usize,
    /// Power while the cell is active, or the failure message.
    pub power: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct BaselineResult {
    pub scheme: BaselineScheme,
    /// Time-averaged sum power (orthogonal access) or plain sum power.
    pub sum_power: f64,
    /// Sum of per-slot powers without time averaging.
    pub slot_sum_power: f64,
    pub per_cell: Vec<CellOutcome>,
    pub feasible: bool,
    pub all_rank_one: bool,
    /// Real scalars exchanged over the backhaul.
    pub backhaul_scalars: usize,
    /// Beamformers by global group id (each active in its own slot for
    /// orthogonal access).
    pub beams: BeamformerSet,
}

/// Per-slot SINR target preserving the rate `log(1+γ)` when a user is
/// served in only one of `B` slots: `(1+γ)^B - 1`.
pub fn boosted_target(gamma: f64, num_bs: usize) -> f64 {
    if num_bs == 1 {
        return gamma;
    }
    (1.0 + gamma).powi(num_bs as i32) - 1.0
}

/// Each BS serves its own users alone in its own slot with boosted targets.
/// Reported power is averaged over the `B` slots.
pub fn orthogonal_access(
    channels: &ChannelSet,
    config: &SystemConfig,
    opts: &CentralizedOptions,
) -> Result<BaselineResult> {
    config.validate()?;
    channels.check_against(config)?;
    let b_count = config.num_bs;
    let mut beams = BeamformerSet::zeros(config.num_groups(), config.num_antennas);
    let mut per_cell = Vec::with_capacity(b_count);
    let mut all_rank_one = true;
    for b in 0..b_count {
        let (mut cell, groups, users) = config.restrict_to_bs(b);
        for t in cell.sinr_target.iter_mut() {
            *t = boosted_target(*t, b_count);
        }
        let local = channels.restrict(b, &users);
        let outcome = solve_centralized(&local, &cell, opts);
        per_cell.push(CellOutcome {
            bs: b,
            power: match &outcome {
                Ok(r) => Ok(r.achieved_power),
                Err(e) => Err(e.to_string()),
            },
        });
        if let Ok(r) = outcome {
            all_rank_one &= r.all_rank_one;
            for (k, g) in groups.into_iter().enumerate() {
                beams.w[g] = r.beams.w[k].clone();
            }
        }
    }
    let feasible = per_cell.iter().all(|c| c.power.is_ok());
    let slot_sum_power = if feasible {
        per_cell.iter().map(|c| *c.power.as_ref().unwrap()).sum()
    } else {
        f64::NAN
    };
    Ok(BaselineResult {
        scheme: BaselineScheme::OrthogonalAccess,
        sum_power: slot_sum_power / b_count as f64,
        slot_sum_power,
        per_cell,
        feasible,
        all_rank_one,
        backhaul_scalars: 0,
        beams,
    })
}

/// Coordinated beamforming with zero inter-cell interference.
pub fn interference_nulling(
    channels: &ChannelSet,
    config: &SystemConfig,
    opts: &DistributedOptions,
) -> Result<BaselineResult> {
    let opts = DistributedOptions {
        policy: InterferencePolicy::Nulling,
        ..*opts
    };
    let r = run_distributed(channels, config, &opts)?;
    let per_cell = (0..config.num_bs)
        .map(|b| CellOutcome {
            bs: b,
            power: Ok(config
                .groups_of_bs(b)
                .iter()
                .map(|&g| r.beams.w[g].norm_squared())
                .sum()),
        })
        .collect();
    Ok(BaselineResult {
        scheme: BaselineScheme::InterferenceNulling,
        sum_power: r.achieved_power,
        slot_sum_power: r.achieved_power,
        per_cell,
        feasible: true,
        all_rank_one: r.all_rank_one,
        backhaul_scalars: r.backhaul.total(),
        beams: r.beams,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boosted_targets() {
        assert!((boosted_target(1.0, 2) - 3.0).abs() < 1e-15);
        assert!((boosted_target(1.0, 4) - 15.0).abs() < 1e-15);
        assert_eq!(boosted_target(7.0, 1), 7.0);
    }
}
