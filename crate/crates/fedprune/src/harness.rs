//! Experiment orchestration: the server loop (broadcast, parallel local
//! training, aggregation, score denoising, pruning, evaluation) and
//! delimited metrics output.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{DataSource, ExperimentConfig, PartitionScheme};
use crate::contribution::{ContributionScore, ParamVector};
use crate::data::{
    generate_blobs, load_delimited, partition_iid, partition_noniid_shards, split_holdout, Dataset,
    Partition,
};
use crate::error::{Error, Result};
use crate::federation::{aggregate, client_update, compute_weights, evaluate, ClientState};
use crate::gsm::{denoise_scores, ScoreVector};
use crate::pruning::{record_round, update_active_set, ActiveSet, CommLedger};
use crate::seeding::{derive_seed, domain};
use crate::ClientId;

/// One client's scores in one round, plus whether it survived the round's
/// pruning step.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientScoreRecord {
    pub client_id: ClientId,
    pub raw: f64,
    pub denoised: f64,
    pub active_after: bool,
}

/// Everything recorded about one completed round. `active_count` is the
/// number of clients that participated in the round, so
/// `active_count(t+1) = active_count(t) - |pruned_this_round(t)|`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub accuracy: f64,
    pub mean_loss: f64,
    pub active_count: usize,
    pub pruned_this_round: Vec<ClientId>,
    pub relative_comm_cost: f64,
    pub scores: Vec<ClientScoreRecord>,
}

/// Materializes the dataset named by the config (generated blobs or a
/// delimited file checked against the model dimensions) and partitions it
/// across clients.
pub fn build_partition(cfg: &ExperimentConfig) -> Result<(Dataset, Partition)> {
    let dataset = match cfg.data_source {
        DataSource::Blobs => generate_blobs(
            cfg.num_classes,
            cfg.samples_per_class,
            cfg.input_dim,
            cfg.blob_spread,
            derive_seed(cfg.seed, &[domain::DATA]),
        ),
        DataSource::File => {
            let path = cfg.data_file.as_ref().ok_or_else(|| {
                Error::InvalidConfig("data_source = file requires data_file".into())
            })?;
            let mut dataset = load_delimited(path)?;
            let dim = dataset.samples[0].features.len();
            if dim != cfg.input_dim {
                return Err(Error::InvalidConfig(format!(
                    "data file has {dim} features, model expects {}",
                    cfg.input_dim
                )));
            }
            if dataset.num_classes > cfg.num_classes {
                return Err(Error::InvalidConfig(format!(
                    "data file has labels up to {}, model has {} classes",
                    dataset.num_classes - 1,
                    cfg.num_classes
                )));
            }
            dataset.num_classes = cfg.num_classes;
            dataset
        }
    };
    let seed = derive_seed(cfg.seed, &[domain::PARTITION]);
    let partition = match cfg.partition {
        PartitionScheme::Iid => partition_iid(&dataset, cfg.num_clients, seed)?,
        PartitionScheme::NoniidShards => {
            if cfg.num_clients != crate::data::SHARD_TOTAL_CLIENTS {
                return Err(Error::InvalidConfig(
                    "noniid_shards requires exactly 20 clients".into(),
                ));
            }
            partition_noniid_shards(&dataset, seed)?
        }
    };
    Ok((dataset, partition))
}

/// Runs the full experiment: T rounds of broadcast, parallel client
/// updates over the active set, size-weighted aggregation, score
/// denoising, pruning, ledger accounting, and evaluation on the pooled
/// holdout (which keeps pruned clients' holdout samples). Deterministic
/// for a fixed config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RoundMetrics>> {
    cfg.validate()?;
    let (dataset, partition) = build_partition(cfg)?;
    let model = cfg.model_spec();
    let train_cfg = cfg.train_config();
    let gsm_cfg = cfg.gsm_config();
    let schedule = cfg.prune_schedule()?;

    let init = model.init_params(derive_seed(cfg.seed, &[domain::INIT]));
    let mut clients: BTreeMap<ClientId, ClientState> = BTreeMap::new();
    let mut test_pool: Vec<crate::models::Sample> = Vec::new();
    for (&id, indices) in partition.assignments() {
        let (train_idx, test_idx) = split_holdout(indices);
        let samples = train_idx
            .iter()
            .map(|&i| dataset.samples[i].clone())
            .collect();
        test_pool.extend(test_idx.iter().map(|&i| dataset.samples[i].clone()));
        clients.insert(id, ClientState::new(id, samples, init.clone()));
    }
    if test_pool.is_empty() {
        return Err(Error::EmptyTestSet);
    }

    let mut global = init;
    let mut active = ActiveSet::new(cfg.num_clients);
    let mut ledger = CommLedger::default();
    let mut series = Vec::with_capacity(cfg.rounds);

    for round in 0..cfg.rounds {
        let participants: Vec<ClientId> = active.active().to_vec();
        let results: Vec<(ClientId, Result<(ParamVector, ContributionScore)>)> = participants
            .par_iter()
            .map(|&id| {
                let seed =
                    derive_seed(cfg.seed, &[domain::CLIENT_ROUND, round as u64, id.0 as u64]);
                let out = client_update(&clients[&id], &global, &model, &train_cfg, round, seed);
                (id, out)
            })
            .collect();

        let mut updates: BTreeMap<ClientId, ParamVector> = BTreeMap::new();
        let mut raw_ids = Vec::with_capacity(results.len());
        let mut raw_values = Vec::with_capacity(results.len());
        for (id, result) in results {
            let (params, score) = result.map_err(|e| e.in_round(round))?;
            raw_ids.push(id);
            raw_values.push(score.score);
            updates.insert(id, params.clone());
            let state = clients.get_mut(&id).expect("participant exists");
            state.local_params = params;
            state.last_score = Some(score);
        }

        let refs: Vec<&ClientState> = participants.iter().map(|id| &clients[id]).collect();
        let weights = compute_weights(&refs).map_err(|e| e.in_round(round))?;
        global = aggregate(&updates, &weights).map_err(|e| e.in_round(round))?;

        let raw =
            ScoreVector::new(raw_ids.clone(), raw_values.clone()).map_err(|e| e.in_round(round))?;
        let (clean, _) = denoise_scores(&raw, &gsm_cfg).map_err(|e| e.in_round(round))?;
        let next = update_active_set(&active, &raw, round, &schedule, &gsm_cfg)
            .map_err(|e| e.in_round(round))?;
        let pruned_this_round: Vec<ClientId> = next
            .pruned()
            .iter()
            .filter(|&&(_, r)| r == round)
            .map(|&(id, _)| id)
            .collect();
        ledger = record_round(&ledger, participants.len(), cfg.num_clients)
            .map_err(|e| e.in_round(round))?;
        let (accuracy, mean_loss) =
            evaluate(&model, &global, &test_pool).map_err(|e| e.in_round(round))?;

        let scores = raw_ids
            .iter()
            .zip(&raw_values)
            .zip(clean.values())
            .map(|((&client_id, &raw), &denoised)| ClientScoreRecord {
                client_id,
                raw,
                denoised,
                active_after: next.is_active(client_id),
            })
            .collect();
        series.push(RoundMetrics {
            round,
            accuracy,
            mean_loss,
            active_count: participants.len(),
            pruned_this_round,
            relative_comm_cost: ledger.relative_cost,
            scores,
        });
        active = next;
    }
    Ok(series)
}

/// Six-significant-digit rendering used for every float in the metrics
/// tables, so re-emission is byte-identical.
pub fn format_float(x: f64) -> String {
    format!("{x:.5e}")
}

/// Writes `rounds.csv` (one row per round) and `scores.csv` (one row per
/// participating client per round) under `dir`, creating it if needed.
pub fn emit_metrics(series: &[RoundMetrics], dir: &Path) -> Result<()> {
    if series.is_empty() {
        return Err(Error::EmptyMetricsSeries);
    }
    std::fs::create_dir_all(dir)?;
    let mut rounds =
        String::from("round,accuracy,mean_loss,active_count,relative_comm_cost,pruned_ids\n");
    let mut scores = String::from("round,client_id,raw_score,denoised_score,active\n");
    for m in series {
        let pruned: Vec<String> = m
            .pruned_this_round
            .iter()
            .map(|id| id.0.to_string())
            .collect();
        rounds.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.round,
            format_float(m.accuracy),
            format_float(m.mean_loss),
            m.active_count,
            format_float(m.relative_comm_cost),
            pruned.join(";"),
        ));
        for rec in &m.scores {
            scores.push_str(&format!(
                "{},{},{},{},{}\n",
                m.round,
                rec.client_id.0,
                format_float(rec.raw),
                format_float(rec.denoised),
                u8::from(rec.active_after),
            ));
        }
    }
    std::fs::write(dir.join("rounds.csv"), rounds)?;
    std::fs::write(dir.join("scores.csv"), scores)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsm::SigmaEstimation;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            num_clients: 4,
            partition: PartitionScheme::Iid,
            rounds: 6,
            samples_per_class: 20,
            local_epochs: 1,
            warmup_rounds: 0,
            target_ratio: 0.0,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn no_pruning_keeps_everyone_and_unit_cost() {
        let series = run_experiment(&tiny_config()).unwrap();
        assert_eq!(series.len(), 6);
        for (t, m) in series.iter().enumerate() {
            assert_eq!(m.round, t);
            assert_eq!(m.active_count, 4);
            assert!(m.pruned_this_round.is_empty());
            assert_eq!(m.relative_comm_cost, 1.0);
            assert_eq!(m.scores.len(), 4);
        }
    }

    #[test]
    fn warmup_covering_run_matches_pruning_disabled() {
        let mut covered = tiny_config();
        covered.target_ratio = 0.5;
        covered.warmup_rounds = covered.rounds;
        let baseline = tiny_config();
        assert_eq!(
            run_experiment(&covered).unwrap(),
            run_experiment(&baseline).unwrap()
        );
    }

    #[test]
    fn forced_pruning_conserves_counts() {
        let mut cfg = tiny_config();
        cfg.num_clients = 6;
        cfg.rounds = 8;
        cfg.warmup_rounds = 2;
        cfg.target_ratio = 0.5;
        // An absurdly large fixed noise variance drives every denoised
        // score to zero, forcing one prune per round until the floor.
        cfg.gsm_sigma_estimation = SigmaEstimation::Fixed;
        cfg.gsm_sigma_w_sq = 1e12;
        let series = run_experiment(&cfg).unwrap();
        for pair in series.windows(2) {
            assert_eq!(
                pair[1].active_count,
                pair[0].active_count - pair[0].pruned_this_round.len()
            );
        }
        let floor = 6 - 3;
        let last = series.last().unwrap();
        assert_eq!(last.active_count - last.pruned_this_round.len(), floor);
        assert_eq!(series[0].pruned_this_round.len(), 0); // warm-up
        assert_eq!(series[2].pruned_this_round.len(), 1);
        // A pruned client never shows up in a later round's score table.
        let pruned_at_2 = series[2].pruned_this_round[0];
        assert!(series[3..]
            .iter()
            .all(|m| m.scores.iter().all(|r| r.client_id != pruned_at_2)));
    }

    #[test]
    fn emit_writes_expected_shape_and_is_stable() {
        let mut cfg = tiny_config();
        cfg.rounds = 3;
        let series = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_metrics(&series, dir.path()).unwrap();
        let rounds = std::fs::read_to_string(dir.path().join("rounds.csv")).unwrap();
        assert_eq!(rounds.lines().count(), 4);
        assert!(rounds.ends_with('\n'));
        assert!(rounds
            .starts_with("round,accuracy,mean_loss,active_count,relative_comm_cost,pruned_ids\n"));
        let scores = std::fs::read_to_string(dir.path().join("scores.csv")).unwrap();
        let expected: usize = series.iter().map(|m| m.active_count).sum();
        assert_eq!(scores.lines().count(), expected + 1);

        emit_metrics(&series, dir.path()).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join("rounds.csv")).unwrap(),
            rounds
        );
        assert_eq!(
            std::fs::read_to_string(dir.path().join("scores.csv")).unwrap(),
            scores
        );
    }

    #[test]
    fn emit_rejects_empty_series_and_unwritable_path() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_metrics(&[], dir.path()),
            Err(Error::EmptyMetricsSeries)
        ));
        let mut cfg = tiny_config();
        cfg.rounds = 1;
        let series = run_experiment(&cfg).unwrap();
        let file = dir.path().join("plain_file");
        std::fs::write(&file, "x").unwrap();
        assert!(matches!(
            emit_metrics(&series, &file.join("nested")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn file_datasets_are_checked_against_the_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(
            &path,
            "0.0,1.0,0\n1.0,0.0,1\n0.5,0.5,1\n2.0,0.1,0\n1.5,0.5,0\n",
        )
        .unwrap();
        let mut cfg = tiny_config();
        cfg.data_source = DataSource::File;
        cfg.data_file = Some(path.clone());
        cfg.input_dim = 2;
        cfg.num_classes = 2;
        let (dataset, partition) = build_partition(&cfg).unwrap();
        assert_eq!(dataset.len(), 5);
        assert_eq!(partition.num_clients(), 4);

        cfg.input_dim = 3;
        assert!(matches!(
            build_partition(&cfg),
            Err(Error::InvalidConfig(_))
        ));
        cfg.input_dim = 2;
        cfg.num_classes = 1;
        assert!(matches!(
            build_partition(&cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = tiny_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
    }
}
