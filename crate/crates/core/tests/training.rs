//! Convergence of both online trainers on separable data larger than the
//! acceptance toys, with a generous epoch budget.

use kbc::embedding::{EmbeddingConfig, EmbeddingModel, EmbeddingTrainer};
use kbc::features::FeatureMatrix;
use kbc::linear::LinearAdagradTrainer;
use kbc::model::TrainConfig;
use kbc::sampler::{NegativeConfig, NegativeSampler};
use kbc::{EntityId, Kb, KbSnapshot, TypeId, VocabMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Toy {
    kb: Kb,
    train: KbSnapshot,
    features: FeatureMatrix,
    num_types: usize,
}

/// Every entity owns one coordinate; a shared noise coordinate and a few
/// type-correlated ones are mixed in, which slows training down but keeps
/// the problem separable.
fn noisy_separable(entities: usize, types: usize, seed: u64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kb = Kb::new();
    for e in 0..entities {
        kb.entities.intern(&format!("e{e}"));
    }
    for t in 0..types {
        kb.types.intern(&format!("t{t}"));
    }
    let dim = entities + types + 1;
    let mut facts = Vec::new();
    let mut rows = Vec::new();
    for e in 0..entities {
        let mut row = vec![0.0; dim];
        row[e] = rng.random_range(0.5..2.0);
        row[entities + types] = rng.random_range(-1.0..1.0);
        let mut any = false;
        for t in 0..types {
            if rng.random_bool(0.4) || (t == types - 1 && !any) {
                any = true;
                facts.push((format!("e{e}"), format!("t{t}")));
            }
            // weak hint that sometimes points the wrong way
            row[entities + t] = rng.random_range(-0.3..0.6);
        }
        rows.push(row);
    }
    let train = kb.load_snapshot("train", facts, VocabMode::Reject).unwrap();
    Toy {
        kb,
        train,
        features: FeatureMatrix::from_dense(&rows).unwrap(),
        num_types: types,
    }
}

fn violations(toy: &Toy, s: impl Fn(EntityId, TypeId) -> f64) -> usize {
    let mut v = 0;
    for &(e, t) in toy.train.facts() {
        for e2 in toy.kb.entities.ids().filter(|&e2| e2 != e && !toy.train.contains(e2, t)) {
            v += usize::from(s(e, t) - s(e2, t) < 1.0);
        }
        for t2 in toy.kb.types.ids().filter(|&t2| t2 != t && !toy.train.contains(e, t2)) {
            v += usize::from(s(e, t) - s(e, t2) < 1.0);
        }
    }
    v
}

const BUDGET: u64 = 200;

#[test]
fn adagrad_separates_forty_noisy_entities() {
    for seed in 0..5u64 {
        let toy = noisy_separable(40, 4, 100 + seed);
        let neg = NegativeConfig::new(1, 1, seed).unwrap();
        let cfg = TrainConfig::adagrad(neg);
        let sampler = NegativeSampler::new(&toy.train, toy.features.num_rows(), toy.kb.types.ids().collect(), neg).unwrap();
        let mut trainer = LinearAdagradTrainer::new(toy.train.facts(), &toy.features, &sampler, toy.num_types, &cfg).unwrap();
        let mut left = usize::MAX;
        for epoch in 0..BUDGET {
            trainer.run_epoch(epoch).unwrap();
            let model = trainer.model();
            left = violations(&toy, |e, t| model.score_unchecked(toy.features.row(e), t));
            if left == 0 {
                break;
            }
        }
        assert_eq!(left, 0, "seed {seed}");
    }
}

#[test]
fn embedding_separates_toy_with_enough_dimensions() {
    for seed in 0..5u64 {
        let toy = noisy_separable(8, 3, 200 + seed);
        let neg = NegativeConfig::new(1, 1, seed).unwrap();
        let cfg = TrainConfig::adagrad(neg);
        let emb = EmbeddingConfig {
            dim: toy.num_types,
            freeze_type_projection: false,
        };
        let sampler = NegativeSampler::new(&toy.train, toy.features.num_rows(), toy.kb.types.ids().collect(), neg).unwrap();
        let init = EmbeddingModel::random(toy.features.space().clone(), toy.num_types, emb.dim, seed).unwrap();
        let mut trainer = EmbeddingTrainer::new(toy.train.facts(), &toy.features, None, &sampler, init, &cfg, &emb).unwrap();
        let mut left = usize::MAX;
        for epoch in 0..BUDGET {
            trainer.run_epoch(epoch).unwrap();
            let model = trainer.model();
            left = violations(&toy, |e, t| model.score_one_hot_unchecked(toy.features.row(e), t));
            if left == 0 {
                break;
            }
        }
        assert_eq!(left, 0, "seed {seed}");
    }
}
