//! Active-set maintenance and communication accounting.
//!
//! After each round's scores arrive, the denoiser decides who looks
//! inactive (denoised score exactly zero); the schedule then prunes at most
//! `max_prunes_per_round` of them — worst raw score first — while honoring
//! a warm-up period and never dropping below the participation floor
//! implied by the target pruning ratio. Pruned clients stay pruned.

use crate::error::{Error, Result};
use crate::gsm::{denoise_scores, GsmConfig, ScoreVector};
use crate::ClientId;

/// The clients still training, plus a log of who was pruned when.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    active: Vec<ClientId>,
    pruned: Vec<(ClientId, usize)>,
}

impl ActiveSet {
    /// All clients `0..total` active, nobody pruned.
    pub fn new(total: usize) -> Self {
        ActiveSet {
            active: (0..total).map(ClientId).collect(),
            pruned: Vec::new(),
        }
    }

    /// Active clients in ascending id order.
    pub fn active(&self) -> &[ClientId] {
        &self.active
    }

    /// Pruning log in chronological order.
    pub fn pruned(&self) -> &[(ClientId, usize)] {
        &self.pruned
    }

    pub fn total_clients(&self) -> usize {
        self.active.len() + self.pruned.len()
    }

    pub fn is_active(&self, id: ClientId) -> bool {
        self.active.binary_search(&id).is_ok()
    }
}

/// When and how hard pruning may act.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSchedule {
    pub warmup_rounds: usize,
    /// Target fraction of clients to remove by the end of training.
    pub target_ratio: f64,
    pub max_prunes_per_round: usize,
    /// Lower bound on the active count: max(1, N − round(λ·N)).
    pub floor: usize,
}

impl PruneSchedule {
    pub fn new(
        total_clients: usize,
        target_ratio: f64,
        warmup_rounds: usize,
        max_prunes_per_round: usize,
    ) -> Result<Self> {
        if total_clients == 0 {
            return Err(Error::InvalidConfig("no clients to schedule".into()));
        }
        if !(0.0..1.0).contains(&target_ratio) {
            return Err(Error::InvalidConfig(
                "target_ratio must lie in [0, 1)".into(),
            ));
        }
        if max_prunes_per_round == 0 {
            return Err(Error::InvalidConfig(
                "max_prunes_per_round must be at least 1".into(),
            ));
        }
        let removable = (target_ratio * total_clients as f64).round() as usize;
        let floor = total_clients.saturating_sub(removable).max(1);
        Ok(PruneSchedule {
            warmup_rounds,
            target_ratio,
            max_prunes_per_round,
            floor,
        })
    }
}

/// Cumulative upload counts against the everyone-participates baseline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommLedger {
    pub uploads: u64,
    pub full_baseline: u64,
    pub relative_cost: f64,
}

/// Applies one round of the pruning rule and returns the new active set.
///
/// During warm-up, or once the active count sits at the floor, the set
/// passes through unchanged (and the denoiser is not consulted).
/// Otherwise the round's scores are denoised and the zero-scored clients
/// become candidates, pruned in ascending raw-score order (ties by id)
/// up to the per-round cap and the floor.
pub fn update_active_set(
    current: &ActiveSet,
    scores: &ScoreVector,
    round: usize,
    schedule: &PruneSchedule,
    gsm_cfg: &GsmConfig,
) -> Result<ActiveSet> {
    let mut covered: Vec<ClientId> = scores.client_ids().to_vec();
    covered.sort_unstable();
    if covered != current.active {
        return Err(Error::ScoreCoverageMismatch);
    }

    if round < schedule.warmup_rounds || current.active.len() <= schedule.floor {
        return Ok(current.clone());
    }

    let (clean, _) = denoise_scores(scores, gsm_cfg)?;
    let mut zeroed: Vec<(f64, ClientId)> = scores
        .client_ids()
        .iter()
        .zip(scores.values())
        .zip(clean.values())
        .filter(|(_, &denoised)| denoised == 0.0)
        .map(|((&id, &raw), _)| (raw, id))
        .collect();
    if zeroed.is_empty() {
        return Ok(current.clone());
    }
    zeroed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let budget = zeroed
        .len()
        .min(schedule.max_prunes_per_round)
        .min(current.active.len() - schedule.floor);
    let mut next = current.clone();
    for &(_, id) in zeroed.iter().take(budget) {
        next.active.retain(|&c| c != id);
        next.pruned.push((id, round));
    }
    Ok(next)
}

/// Adds one completed round to the ledger.
pub fn record_round(
    ledger: &CommLedger,
    participants: usize,
    total_clients: usize,
) -> Result<CommLedger> {
    if participants == 0 {
        return Err(Error::NoParticipants);
    }
    if participants > total_clients {
        return Err(Error::TooManyParticipants {
            participants,
            total: total_clients,
        });
    }
    let uploads = ledger.uploads + participants as u64;
    let full_baseline = ledger.full_baseline + total_clients as u64;
    Ok(CommLedger {
        uploads,
        full_baseline,
        relative_cost: uploads as f64 / full_baseline as f64,
    })
}
