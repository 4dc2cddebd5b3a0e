//! In-memory glue from raw snapshots and texts to evaluated predictions.
//!
//! Selected types are interned first, so their ids are `0..K` and line up
//! with the rows of a trained model.

use rayon::prelude::*;

use crate::dataset::{
    build_test_set, build_training_positives, dataset_stats, select_top_types, DatasetConfig, DatasetStats, LabeledExample,
};
use crate::embedding::{train_embedding, EmbeddingConfig};
use crate::error::{KbcError, Result};
use crate::eval::Prediction;
use crate::features::{build_entity_features, FeatureMatrix, FeatureSources, FeaturizerConfig};
use crate::kb::{EntityId, Kb, KbSnapshot, TypeId, Vocab, VocabMode};
use crate::linear::{train_linear_adagrad, train_linear_dcd};
use crate::model::{Algorithm, AnyModel, TrainConfig};
use crate::sampler::NegativeSampler;

#[derive(Debug)]
pub struct PreparedData {
    pub kb: Kb,
    pub train: KbSnapshot,
    pub test: KbSnapshot,
    /// Selected types, always `0..K`.
    pub types: Vec<TypeId>,
    pub train_positives: Vec<(EntityId, TypeId)>,
    pub test_set: Vec<LabeledExample>,
    pub stats: DatasetStats,
}

impl PreparedData {
    pub fn type_symbols(&self) -> Vec<String> {
        self.types.iter().map(|&t| self.kb.types.symbol(t).to_string()).collect()
    }
}

/// Picks the top types, re-interns them as `0..K` and builds both example sets.
pub fn prepare_dataset<S: AsRef<str>>(train_facts: &[(S, S)], test_facts: &[(S, S)], cfg: &DatasetConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let pairs = |facts: &'_ [(S, S)]| facts.iter().map(|(e, t)| (e.as_ref().to_owned(), t.as_ref().to_owned())).collect::<Vec<_>>();
    let (train_facts, test_facts) = (pairs(train_facts), pairs(test_facts));

    let mut probe = Kb::new();
    let probe_train = probe.load_snapshot("train", train_facts.iter().cloned(), VocabMode::Extend)?;
    let selected = select_top_types(&probe_train, cfg.num_types)?;
    let symbols: Vec<&str> = selected.iter().map(|&t| probe.types.symbol(t)).collect();

    let mut kb = Kb::with_vocabs(Vocab::new(), Vocab::from_symbols(&symbols));
    let train = kb.load_snapshot("train", train_facts, VocabMode::Extend)?;
    let test = kb.load_snapshot("test", test_facts, VocabMode::Extend)?;
    let types: Vec<TypeId> = (0..symbols.len()).map(|i| TypeId(i as u32)).collect();
    let train_positives = build_training_positives(&train, &types);
    let test_set = build_test_set(&train, &test, &types, cfg)?;
    let stats = dataset_stats(&train_positives, &test_set);
    Ok(PreparedData {
        kb,
        train,
        test,
        types,
        train_positives,
        test_set,
        stats,
    })
}

/// Builds Φ for every entity known to the dataset or mentioned in a text.
pub fn featurize<S: AsRef<str>>(
    data: &mut PreparedData,
    description: &[(S, S)],
    wikipedia: &[(S, S)],
    cfg: &FeaturizerConfig,
) -> Result<FeatureMatrix> {
    let mut intern = |docs: &[(S, S)]| -> Vec<(EntityId, String)> {
        docs.iter().map(|(e, text)| (data.kb.entities.intern(e.as_ref()), text.as_ref().to_owned())).collect()
    };
    let description = intern(description);
    let wikipedia = intern(wikipedia);
    let sources = FeatureSources {
        train: &data.train,
        types: &data.types,
        description: &description,
        wikipedia: &wikipedia,
    };
    build_entity_features(data.kb.entities.len(), &sources, cfg)
}

/// Trains any of the three algorithms on the prepared positives.
pub fn train_model(
    algorithm: Algorithm,
    data: &PreparedData,
    features: &FeatureMatrix,
    cfg: &TrainConfig,
    emb: &EmbeddingConfig,
) -> Result<AnyModel> {
    cfg.validate_for(algorithm)?;
    let sampler = NegativeSampler::new(&data.train, features.num_rows(), data.types.clone(), cfg.negatives)?;
    let k = data.types.len();
    Ok(match algorithm {
        Algorithm::LinearAdagrad => AnyModel::Linear(train_linear_adagrad(&data.train_positives, features, &sampler, k, cfg)?),
        Algorithm::LinearDcd => AnyModel::Linear(train_linear_dcd(&data.train_positives, features, &sampler, k, cfg)?.0),
        Algorithm::Embedding => AnyModel::Embedding(train_embedding(&data.train_positives, features, &sampler, k, cfg, emb)?),
    })
}

/// Scores labeled pairs. A non-finite score is a numerical failure.
pub fn predict(model: &AnyModel, features: &FeatureMatrix, pairs: &[LabeledExample]) -> Result<Vec<Prediction>> {
    let score = model.scorer(features)?;
    if let Some(p) = pairs.iter().find(|p| p.type_id.0 as usize >= model.num_types()) {
        return Err(KbcError::Domain(format!("{} is outside the model's {} types", p.type_id, model.num_types())));
    }
    pairs
        .par_iter()
        .map(|p| {
            let s = score(p.entity, p.type_id);
            if !s.is_finite() {
                return Err(KbcError::Numerical {
                    step: 0,
                    detail: format!("non-finite score for ({}, {})", p.entity, p.type_id),
                });
            }
            Ok(Prediction {
                entity: p.entity,
                type_id: p.type_id,
                score: s,
                label: p.label,
            })
        })
        .collect()
}
