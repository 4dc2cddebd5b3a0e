//! Negative entity / negative type sampling for ranking constraints.
//!
//! For a training fact `(e, t)` the negative entity set draws entities `e' != e`
//! with `(e', t)` unobserved, and the negative type set draws types `t' != t`
//! with `(e, t')` unobserved. Eligibility is judged against the training
//! snapshot only. `n = 0` gives the NE objective, `m = 0` the NT objective,
//! and both positive the global objective.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KbcError, Result};
use crate::kb::{EntityId, Id, KbSnapshot, TypeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeConfig {
    /// Negative entities per positive.
    pub m: usize,
    /// Negative types per positive.
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    NegativeEntity,
    NegativeType,
    Global,
}

impl NegativeConfig {
    pub fn new(m: usize, n: usize, seed: u64) -> Result<Self> {
        let cfg = NegativeConfig { m, n, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m + self.n == 0 {
            return Err(KbcError::Usage("at least one of m (negative entities) and n (negative types) must be positive".into()));
        }
        Ok(())
    }

    pub fn objective(&self) -> ObjectiveKind {
        match (self.m, self.n) {
            (_, 0) => ObjectiveKind::NegativeEntity,
            (0, _) => ObjectiveKind::NegativeType,
            _ => ObjectiveKind::Global,
        }
    }
}

/// Uniform sample without replacement of at most `m` entities from
/// `0..num_entities` that are not `e` and do not have `t` in `train`.
/// Returned ascending.
pub fn sample_negative_entities<R: Rng + ?Sized>(
    e: EntityId,
    t: TypeId,
    train: &KbSnapshot,
    num_entities: usize,
    m: usize,
    rng: &mut R,
) -> Vec<EntityId> {
    if m == 0 || num_entities == 0 {
        return Vec::new();
    }
    let holders = train.entities_of(t);
    let in_range_holders = holders.partition_point(|h| h.index() < num_entities);
    let e_is_holder = holders.binary_search(&e).is_ok();
    let excluded = in_range_holders + usize::from(!e_is_holder && e.index() < num_entities);
    let eligible = num_entities - excluded;
    let is_eligible = |x: EntityId| x != e && holders.binary_search(&x).is_err();

    let mut picked: Vec<EntityId> = if eligible == 0 {
        Vec::new()
    } else if m >= eligible {
        (0..num_entities).map(EntityId::from_index).filter(|&x| is_eligible(x)).collect()
    } else if eligible * 2 >= num_entities {
        // dense eligibility: rejection sampling terminates quickly
        let mut chosen = HashSet::with_capacity(m);
        let mut order = Vec::with_capacity(m);
        while order.len() < m {
            let x = EntityId::from_index(rng.random_range(0..num_entities));
            if is_eligible(x) && chosen.insert(x) {
                order.push(x);
            }
        }
        order
    } else {
        let pool: Vec<EntityId> = (0..num_entities).map(EntityId::from_index).filter(|&x| is_eligible(x)).collect();
        index::sample(rng, pool.len(), m).into_iter().map(|i| pool[i]).collect()
    };
    picked.sort_unstable();
    picked
}

/// Uniform sample without replacement of at most `n` types from `candidates`
/// that are not `t` and not observed for `e` in `train`. Returned ascending.
pub fn sample_negative_types<R: Rng + ?Sized>(
    e: EntityId,
    t: TypeId,
    train: &KbSnapshot,
    candidates: &[TypeId],
    n: usize,
    rng: &mut R,
) -> Vec<TypeId> {
    if n == 0 {
        return Vec::new();
    }
    let pool: Vec<TypeId> = candidates
        .iter()
        .copied()
        .filter(|&x| x != t && !train.contains(e, x))
        .collect();
    let mut picked: Vec<TypeId> = if n >= pool.len() {
        pool
    } else {
        index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect()
    };
    picked.sort_unstable();
    picked
}

/// Negatives drawn for one training fact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledNegatives {
    pub entity: EntityId,
    pub type_id: TypeId,
    pub negative_entities: Vec<EntityId>,
    pub negative_types: Vec<TypeId>,
}

const TYPE_STREAM: u64 = 0x7479_7065_5f73_7472;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives an independent generator from a seed and a list of stream keys.
pub(crate) fn substream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    for &k in keys {
        h = splitmix64(h ^ k);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Draws negatives for training facts. Each `(epoch, e, t)` has its own
/// substream, so results do not depend on visitation order.
#[derive(Debug, Clone)]
pub struct NegativeSampler<'a> {
    train: &'a KbSnapshot,
    num_entities: usize,
    candidate_types: Vec<TypeId>,
    cfg: NegativeConfig,
}

impl<'a> NegativeSampler<'a> {
    pub fn new(train: &'a KbSnapshot, num_entities: usize, candidate_types: Vec<TypeId>, cfg: NegativeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(NegativeSampler {
            train,
            num_entities,
            candidate_types,
            cfg,
        })
    }

    pub fn config(&self) -> NegativeConfig {
        self.cfg
    }

    pub fn train(&self) -> &KbSnapshot {
        self.train
    }

    pub fn draw(&self, e: EntityId, t: TypeId, epoch: u64) -> SampledNegatives {
        let keys = [epoch, e.0 as u64, t.0 as u64];
        let mut rng = substream(self.cfg.seed, &keys);
        let negative_entities = sample_negative_entities(e, t, self.train, self.num_entities, self.cfg.m, &mut rng);
        // separate stream so that entity draws do not shift type draws when m changes
        let mut rng_t = substream(self.cfg.seed ^ TYPE_STREAM, &keys);
        let negative_types = sample_negative_types(e, t, self.train, &self.candidate_types, self.cfg.n, &mut rng_t);
        SampledNegatives {
            entity: e,
            type_id: t,
            negative_entities,
            negative_types,
        }
    }

    /// One fixed draw per positive (epoch 0), for batch solvers and audits.
    pub fn freeze(&self, positives: &[(EntityId, TypeId)]) -> Vec<SampledNegatives> {
        positives.iter().map(|&(e, t)| self.draw(e, t, 0)).collect()
    }
}
