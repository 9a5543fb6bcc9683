//! Synthetic dataset generation and client partitioning.
//!
//! Two partition schemes: IID (shuffle, equal split) and a label-skewed
//! scheme that gives half the clients IID data and deals single-label
//! shards to the other half.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::models::Sample;
use crate::seeding::seeded_rng;
use crate::ClientId;

/// Fraction of each client's samples held out for evaluation, as a
/// denominator: one fifth.
pub const HOLDOUT_DENOM: usize = 5;

/// The shard partition's fixed shape: 20 clients, the first 10 IID.
pub const SHARD_TOTAL_CLIENTS: usize = 20;
pub const SHARD_IID_CLIENTS: usize = 10;
pub const SHARD_COUNT: usize = 20;
pub const SHARDS_PER_CLIENT: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Assignment of sample indices to clients. `dropped` holds indices that
/// could not be placed (only the shard scheme ever drops any).
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    assignments: BTreeMap<ClientId, Vec<usize>>,
    dropped: Vec<usize>,
}

impl Partition {
    pub fn assignments(&self) -> &BTreeMap<ClientId, Vec<usize>> {
        &self.assignments
    }

    pub fn client_indices(&self, id: ClientId) -> Option<&[usize]> {
        self.assignments.get(&id).map(Vec::as_slice)
    }

    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn dropped(&self) -> &[usize] {
        &self.dropped
    }
}

/// Gaussian clusters with one distinct axis-aligned mean per class,
/// `samples_per_class` points each, ordered class-major. Class c's mean
/// sits on axis c mod input_dim at magnitude 3·(1 + c div input_dim),
/// alternating sign per wrap so means never collide.
pub fn generate_blobs(
    num_classes: usize,
    samples_per_class: usize,
    input_dim: usize,
    spread: f64,
    seed: u64,
) -> Dataset {
    assert!(num_classes >= 1 && samples_per_class >= 1 && input_dim >= 1);
    assert!(spread >= 0.0 && spread.is_finite());
    let mut rng = seeded_rng(seed);
    let mut samples = Vec::with_capacity(num_classes * samples_per_class);
    for class in 0..num_classes {
        let axis = class % input_dim;
        let wrap = class / input_dim;
        let sign = if wrap.is_multiple_of(2) { 1.0 } else { -1.0 };
        let magnitude = 3.0 * (wrap + 1) as f64;
        for _ in 0..samples_per_class {
            let mut features = vec![0.0; input_dim];
            for f in features.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *f = spread * z;
            }
            features[axis] += sign * magnitude;
            samples.push(Sample {
                features,
                label: class,
            });
        }
    }
    Dataset {
        samples,
        num_classes,
    }
}

/// Shuffles all indices and splits them evenly; when the count does not
/// divide, the first `len mod num_clients` clients receive one extra.
pub fn partition_iid(dataset: &Dataset, num_clients: usize, seed: u64) -> Result<Partition> {
    if num_clients == 0 {
        return Err(Error::InvalidConfig(
            "num_clients must be at least 1".into(),
        ));
    }
    if num_clients > dataset.len() {
        return Err(Error::InvalidConfig(format!(
            "more clients ({num_clients}) than samples ({})",
            dataset.len()
        )));
    }
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut seeded_rng(seed));

    let base = dataset.len() / num_clients;
    let extra = dataset.len() % num_clients;
    let mut assignments = BTreeMap::new();
    let mut cursor = 0;
    for k in 0..num_clients {
        let take = base + usize::from(k < extra);
        assignments.insert(ClientId(k), indices[cursor..cursor + take].to_vec());
        cursor += take;
    }
    Ok(Partition {
        assignments,
        dropped: Vec::new(),
    })
}

/// Label-skewed partition over exactly 20 clients.
///
/// Within each label, 80% of the samples (rounded down) go into a shared
/// pool that is split evenly over clients 0–9. The per-label remainders are
/// cut into whole single-label shards of size `total_remainder / 20`; the 20
/// shards are shuffled and dealt two apiece to clients 10–19. Per-label
/// leftovers smaller than a shard (and any shards beyond the 20th) are
/// reported as dropped rather than mixed into a shard of another label.
pub fn partition_noniid_shards(dataset: &Dataset, seed: u64) -> Result<Partition> {
    if dataset.len() < 2 * SHARD_COUNT {
        return Err(Error::InfeasibleShards(format!(
            "need at least {} samples, got {}",
            2 * SHARD_COUNT,
            dataset.len()
        )));
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        by_label.entry(s.label).or_default().push(i);
    }

    let mut rng = seeded_rng(seed);
    let mut iid_pool = Vec::new();
    let mut remainders: Vec<Vec<usize>> = Vec::new();
    for indices in by_label.values() {
        let mut indices = indices.clone();
        indices.shuffle(&mut rng);
        let take = indices.len() * 4 / 5;
        iid_pool.extend_from_slice(&indices[..take]);
        remainders.push(indices[take..].to_vec());
    }

    let remainder_total: usize = remainders.iter().map(Vec::len).sum();
    let shard_size = remainder_total / SHARD_COUNT;
    if shard_size == 0 {
        return Err(Error::InfeasibleShards(format!(
            "remainder of {remainder_total} samples cannot fill {SHARD_COUNT} shards"
        )));
    }

    let mut shards: Vec<Vec<usize>> = Vec::new();
    let mut dropped = Vec::new();
    for label_remainder in &remainders {
        let whole = label_remainder.len() / shard_size;
        for k in 0..whole {
            shards.push(label_remainder[k * shard_size..(k + 1) * shard_size].to_vec());
        }
        dropped.extend_from_slice(&label_remainder[whole * shard_size..]);
    }
    if shards.len() < SHARD_COUNT {
        return Err(Error::InfeasibleShards(format!(
            "only {} whole single-label shards of size {shard_size}; labels too imbalanced",
            shards.len()
        )));
    }
    for surplus in shards.drain(SHARD_COUNT..) {
        dropped.extend(surplus);
    }
    shards.shuffle(&mut rng);

    if iid_pool.len() < SHARD_IID_CLIENTS {
        return Err(Error::InfeasibleShards(format!(
            "IID pool of {} cannot cover {SHARD_IID_CLIENTS} clients",
            iid_pool.len()
        )));
    }
    iid_pool.shuffle(&mut rng);

    let mut assignments = BTreeMap::new();
    let base = iid_pool.len() / SHARD_IID_CLIENTS;
    let extra = iid_pool.len() % SHARD_IID_CLIENTS;
    let mut cursor = 0;
    for k in 0..SHARD_IID_CLIENTS {
        let take = base + usize::from(k < extra);
        assignments.insert(ClientId(k), iid_pool[cursor..cursor + take].to_vec());
        cursor += take;
    }
    for (k, pair) in shards.chunks(SHARDS_PER_CLIENT).enumerate() {
        let mut own = Vec::with_capacity(pair.iter().map(Vec::len).sum());
        for shard in pair {
            own.extend_from_slice(shard);
        }
        assignments.insert(ClientId(SHARD_IID_CLIENTS + k), own);
    }
    Ok(Partition {
        assignments,
        dropped,
    })
}

/// Splits one client's assignment into training and held-out evaluation
/// indices: the last fifth (rounded down) is held out.
pub fn split_holdout(indices: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let test_len = indices.len() / HOLDOUT_DENOM;
    let cut = indices.len() - test_len;
    (indices[..cut].to_vec(), indices[cut..].to_vec())
}

/// Loads a dataset from a delimited text file: one sample per line,
/// comma-separated features followed by an integer label. Blank lines are
/// skipped; `num_classes` is the largest label plus one.
pub fn load_delimited(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::DataFormat(format!("cannot read {}: {e}", path.display())))?;
    let mut samples = Vec::new();
    let mut num_classes = 0;
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(Error::DataFormat(format!(
                "line {}: need at least one feature and a label",
                lineno + 1
            )));
        }
        let (label_field, feature_fields) = fields.split_last().expect("len >= 2");
        let mut features = Vec::with_capacity(feature_fields.len());
        for f in feature_fields {
            let v: f64 = f.parse().map_err(|_| {
                Error::DataFormat(format!("line {}: bad feature {f:?}", lineno + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::DataFormat(format!(
                    "line {}: non-finite feature",
                    lineno + 1
                )));
            }
            features.push(v);
        }
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(Error::DataFormat(format!(
                    "line {}: {} features, expected {d}",
                    lineno + 1,
                    features.len()
                )));
            }
            _ => {}
        }
        let label: usize = label_field.parse().map_err(|_| {
            Error::DataFormat(format!("line {}: bad label {label_field:?}", lineno + 1))
        })?;
        num_classes = num_classes.max(label + 1);
        samples.push(Sample { features, label });
    }
    if samples.is_empty() {
        return Err(Error::DataFormat("no samples in file".into()));
    }
    Ok(Dataset {
        samples,
        num_classes,
    })
}
