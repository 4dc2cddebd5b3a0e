//! The bilinear embedding model next to the linear model on one corpus.
//!
//! cargo run --release --example embedding_model

use kbc::dataset::DatasetConfig;
use kbc::embedding::EmbeddingConfig;
use kbc::eval::{evaluate, GakNorm, Metric};
use kbc::features::FeaturizerConfig;
use kbc::model::{Algorithm, TrainConfig};
use kbc::pipeline::{featurize, predict, prepare_dataset, train_model};
use kbc::sampler::NegativeConfig;
use kbc::synth::{generate, SynthConfig};

fn main() -> kbc::Result<()> {
    let corpus = generate(&SynthConfig {
        entities: 4000,
        types: 30,
        clusters: 60,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let mut data = prepare_dataset(
        &corpus.train_facts,
        &corpus.test_facts,
        &DatasetConfig {
            num_types: 30,
            ..DatasetConfig::default()
        },
    )?;
    let features = featurize(&mut data, &corpus.description, &corpus.wikipedia, &FeaturizerConfig::default())?;
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::adagrad(NegativeConfig::new(1, 1, 5)?)
    };
    for (algo, dim) in [(Algorithm::LinearAdagrad, 0), (Algorithm::Embedding, 10), (Algorithm::Embedding, 50)] {
        let emb = EmbeddingConfig {
            dim: dim.max(1),
            ..EmbeddingConfig::default()
        };
        let model = train_model(algo, &data, &features, &cfg, &emb)?;
        let r = evaluate(&predict(&model, &features, &data.test_set)?, &[Metric::Map, Metric::Gap], GakNorm::Window)?;
        let name = if dim == 0 { algo.to_string() } else { format!("{algo} d={dim}") };
        println!("{name:<16} MAP {:.4}  GAP {:.4}", r.map.unwrap_or(0.0), r.gap.unwrap_or(0.0));
    }
    Ok(())
}
