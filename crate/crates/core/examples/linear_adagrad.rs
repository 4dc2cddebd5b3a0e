//! Online Adagrad on the ranking hinge loss, epoch by epoch.
//!
//! cargo run --release --example linear_adagrad

use kbc::dataset::DatasetConfig;
use kbc::features::FeaturizerConfig;
use kbc::linear::LinearAdagradTrainer;
use kbc::model::TrainConfig;
use kbc::pipeline::{featurize, prepare_dataset};
use kbc::sampler::{NegativeConfig, NegativeSampler};
use kbc::synth::{generate, SynthConfig};

fn main() -> kbc::Result<()> {
    let corpus = generate(&SynthConfig {
        entities: 3000,
        seed: 11,
        ..SynthConfig::default()
    })?;
    let mut data = prepare_dataset(
        &corpus.train_facts,
        &corpus.test_facts,
        &DatasetConfig {
            num_types: 20,
            ..DatasetConfig::default()
        },
    )?;
    let features = featurize(&mut data, &corpus.description, &corpus.wikipedia, &FeaturizerConfig::default())?;
    let neg = NegativeConfig::new(1, 1, 11)?;
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::adagrad(neg)
    };
    let sampler = NegativeSampler::new(&data.train, features.num_rows(), data.types.clone(), neg)?;
    let mut trainer = LinearAdagradTrainer::new(&data.train_positives, &features, &sampler, data.types.len(), &cfg)?;
    let pairs = 2 * data.train_positives.len();
    for epoch in 0..cfg.epochs as u64 {
        let v = trainer.run_epoch(epoch)?;
        println!("epoch {epoch}: {v} of {pairs} pairs violated the margin");
    }
    let model = trainer.into_model();
    let norms: Vec<String> = data
        .types
        .iter()
        .take(5)
        .map(|&t| format!("{:.2}", model.weights(t).iter().map(|w| w * w).sum::<f64>().sqrt()))
        .collect();
    println!("|w_t| of the five largest types: {}", norms.join(" "));
    Ok(())
}
