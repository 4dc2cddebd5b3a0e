//! Two-snapshot train/test construction.
//!
//! Training positives are the earlier snapshot restricted to the most frequent
//! types. Test positives are the facts added in the later snapshot; test
//! negatives follow the closed-world assumption against the later snapshot:
//! every unobserved selected type of an entity that gained a fact, plus a
//! seeded fraction of unobserved pairs for entities that neither gained a
//! fact nor contributed a training positive.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KbcError, Result};
use crate::kb::{diff_snapshots, EntityId, Id, Kb, KbSnapshot, TypeId};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub num_types: usize,
    pub extra_negative_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_types: 70,
            extra_negative_fraction: 0.1,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_types == 0 {
            return Err(KbcError::Usage("num_types must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.extra_negative_fraction) {
            return Err(KbcError::Usage(format!(
                "extra_negative_fraction {} outside [0, 1]",
                self.extra_negative_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabeledExample {
    pub entity: EntityId,
    pub type_id: TypeId,
    pub label: bool,
}

/// The `k` most frequent types of `train`, by descending count then ascending id.
pub fn select_top_types(train: &KbSnapshot, k: usize) -> Result<Vec<TypeId>> {
    if k == 0 {
        return Err(KbcError::Domain("k must be at least 1".into()));
    }
    let mut counts: Vec<(TypeId, usize)> = train.type_counts().into_iter().collect();
    if k > counts.len() {
        return Err(KbcError::Domain(format!(
            "requested {k} types but only {} have observed facts",
            counts.len()
        )));
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(counts.into_iter().take(k).map(|(t, _)| t).collect())
}

/// Facts of `train` whose type is among `types`, sorted by `(entity, type)`.
pub fn build_training_positives(train: &KbSnapshot, types: &[TypeId]) -> Vec<(EntityId, TypeId)> {
    let selected: HashSet<TypeId> = types.iter().copied().collect();
    train
        .facts()
        .iter()
        .copied()
        .filter(|(_, t)| selected.contains(t))
        .collect()
}

/// Builds the labeled test set, sorted by `(entity, type)`.
pub fn build_test_set(
    train: &KbSnapshot,
    test: &KbSnapshot,
    types: &[TypeId],
    cfg: &DatasetConfig,
) -> Result<Vec<LabeledExample>> {
    cfg.validate()?;
    let selected: HashSet<TypeId> = types.iter().copied().collect();
    let positives: Vec<(EntityId, TypeId)> = diff_snapshots(train, test)?
        .into_iter()
        .filter(|(_, t)| selected.contains(t))
        .collect();
    let positive_entities: HashSet<EntityId> = positives.iter().map(|&(e, _)| e).collect();

    let mut out: Vec<LabeledExample> = positives
        .iter()
        .map(|&(entity, type_id)| LabeledExample {
            entity,
            type_id,
            label: true,
        })
        .collect();

    // rule (a): complete negatives for entities with a new fact
    let mut ordered_positive_entities: Vec<EntityId> = positive_entities.iter().copied().collect();
    ordered_positive_entities.sort_unstable();
    for &e in &ordered_positive_entities {
        for &t in types {
            if !test.contains(e, t) {
                out.push(LabeledExample {
                    entity: e,
                    type_id: t,
                    label: false,
                });
            }
        }
    }

    // rule (b): sampled negatives for entities untouched by train and test
    if cfg.extra_negative_fraction > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut universe: Vec<EntityId> = train
            .facts()
            .iter()
            .chain(test.facts())
            .map(|&(e, _)| e)
            .collect();
        universe.sort_unstable();
        universe.dedup();
        for e in universe {
            if positive_entities.contains(&e) || train.types_of(e).iter().any(|t| selected.contains(t)) {
                continue;
            }
            for &t in types {
                if test.contains(e, t) {
                    continue;
                }
                if rng.random::<f64>() < cfg.extra_negative_fraction {
                    out.push(LabeledExample {
                        entity: e,
                        type_id: t,
                        label: false,
                    });
                }
            }
        }
    }

    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    /// Distinct entities across training positives and test examples.
    pub num_entities: usize,
    pub num_positive_train: usize,
    pub num_positive_test: usize,
    pub num_negative_test: usize,
    /// `None` (JSON `null`) when there are no test positives.
    pub neg_pos_ratio: Option<f64>,
    pub max_positive_train_per_type: Option<usize>,
    pub min_positive_train_per_type: Option<usize>,
}

pub fn dataset_stats(train_pos: &[(EntityId, TypeId)], test_examples: &[LabeledExample]) -> DatasetStats {
    let mut entities: HashSet<EntityId> = train_pos.iter().map(|&(e, _)| e).collect();
    entities.extend(test_examples.iter().map(|x| x.entity));
    let mut per_type: BTreeMap<TypeId, usize> = BTreeMap::new();
    for &(_, t) in train_pos {
        *per_type.entry(t).or_default() += 1;
    }
    let num_positive_test = test_examples.iter().filter(|x| x.label).count();
    let num_negative_test = test_examples.len() - num_positive_test;
    DatasetStats {
        num_entities: entities.len(),
        num_positive_train: train_pos.len(),
        num_positive_test,
        num_negative_test,
        neg_pos_ratio: (num_positive_test > 0).then(|| num_negative_test as f64 / num_positive_test as f64),
        max_positive_train_per_type: per_type.values().copied().max(),
        min_positive_train_per_type: per_type.values().copied().min(),
    }
}

pub fn write_test_set(mut w: impl Write, kb: &Kb, examples: &[LabeledExample]) -> std::io::Result<()> {
    for x in examples {
        writeln!(
            w,
            "{}\t{}\t{}",
            kb.entities.symbol(x.entity),
            kb.types.symbol(x.type_id),
            u8::from(x.label)
        )?;
    }
    Ok(())
}

/// Parses `entity<TAB>type<TAB>{0|1}` rows as symbols.
pub fn read_test_set(reader: impl BufRead, source_name: &str) -> Result<Vec<(String, String, bool)>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KbcError::io(source_name, e))?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let label = match f.as_slice() {
            [_, _, "1"] => true,
            [_, _, "0"] => false,
            _ => return Err(KbcError::parse(source_name, n + 1, "expected `entity<TAB>type<TAB>{0|1}`")),
        };
        out.push((f[0].to_string(), f[1].to_string(), label));
    }
    Ok(out)
}

/// Interns a type list file (one symbol per line, in rank order).
pub fn read_type_list(reader: impl BufRead, source_name: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| KbcError::io(source_name, e))?;
        let line = line.trim_end();
        if !line.is_empty() && !line.starts_with('#') {
            out.push(line.to_string());
        }
    }
    Ok(out)
}

pub fn entity_ids_of(examples: &[LabeledExample]) -> Vec<EntityId> {
    let mut ids: Vec<EntityId> = examples.iter().map(|x| x.entity).collect();
    ids.sort_unstable_by_key(|e| e.index());
    ids.dedup();
    ids
}
