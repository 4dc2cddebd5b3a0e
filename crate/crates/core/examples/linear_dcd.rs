//! Dual coordinate descent on the squared hinge with frozen negatives.
//! The dual objective rises monotonically and meets the primal at the optimum.
//!
//! cargo run --release --example linear_dcd

use kbc::dataset::DatasetConfig;
use kbc::features::FeaturizerConfig;
use kbc::linear::{objective_value, train_linear_dcd_frozen};
use kbc::model::TrainConfig;
use kbc::pipeline::{featurize, prepare_dataset};
use kbc::sampler::{NegativeConfig, NegativeSampler};
use kbc::synth::{generate, SynthConfig};

fn main() -> kbc::Result<()> {
    let corpus = generate(&SynthConfig {
        entities: 800,
        types: 10,
        clusters: 20,
        seed: 2,
        ..SynthConfig::default()
    })?;
    let mut data = prepare_dataset(
        &corpus.train_facts,
        &corpus.test_facts,
        &DatasetConfig {
            num_types: 10,
            ..DatasetConfig::default()
        },
    )?;
    let features = featurize(&mut data, &corpus.description, &corpus.wikipedia, &FeaturizerConfig::default())?;
    let neg = NegativeConfig::new(1, 1, 2)?;
    let cfg = TrainConfig::dcd(neg, 1.0);
    let negatives = NegativeSampler::new(&data.train, features.num_rows(), data.types.clone(), neg)?.freeze(&data.train_positives);
    let (model, trace) = train_linear_dcd_frozen(&negatives, &features, data.types.len(), &cfg)?;
    for (i, d) in trace.dual_objective.iter().enumerate().filter(|(i, _)| i % 5 == 0 || *i + 1 == trace.sweeps) {
        println!("sweep {:>3}: dual {d:.6}", i + 1);
    }
    let primal = objective_value(&model, &features, &negatives, cfg.objective());
    println!(
        "{} constraints ({} skipped), converged {}, primal {primal:.6}",
        trace.num_constraints, trace.skipped, trace.converged
    );
    Ok(())
}
