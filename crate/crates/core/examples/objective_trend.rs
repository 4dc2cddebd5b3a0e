//! Compares the NE, NT and Global negative-sampling objectives on synthetic
//! corpora with the same total number of negatives per positive.
//!
//! cargo run --release --example objective_trend -- [entities] [seeds]

use kbc::dataset::DatasetConfig;
use kbc::embedding::EmbeddingConfig;
use kbc::eval::{evaluate, GakNorm, Metric};
use kbc::features::FeaturizerConfig;
use kbc::model::{Algorithm, TrainConfig};
use kbc::pipeline::{featurize, predict, prepare_dataset, train_model};
use kbc::sampler::NegativeConfig;
use kbc::synth::{generate, SynthConfig};

fn main() -> kbc::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let entities = args.first().copied().unwrap_or(10_000);
    let seeds = args.get(1).copied().unwrap_or(5) as u64;
    let objectives = [("NE (m=2)", 2, 0), ("NT (n=2)", 0, 2), ("Global (m=1, n=1)", 1, 1)];
    let mut sums = [[0.0f64; 2]; 3];

    for seed in 0..seeds {
        let corpus = generate(&SynthConfig {
            entities,
            types: 50,
            clusters: 100,
            missing_rate: 0.2,
            seed,
            ..SynthConfig::default()
        })?;
        let mut data = prepare_dataset(
            &corpus.train_facts,
            &corpus.test_facts,
            &DatasetConfig {
                num_types: 50,
                seed,
                ..DatasetConfig::default()
            },
        )?;
        let features = featurize(&mut data, &corpus.description, &corpus.wikipedia, &FeaturizerConfig::default())?;
        for (i, &(name, m, n)) in objectives.iter().enumerate() {
            let cfg = TrainConfig::adagrad(NegativeConfig::new(m, n, seed)?);
            let model = train_model(Algorithm::LinearAdagrad, &data, &features, &cfg, &EmbeddingConfig::default())?;
            let preds = predict(&model, &features, &data.test_set)?;
            let r = evaluate(&preds, &[Metric::Map, Metric::Gap], GakNorm::Window)?;
            let (map, gap) = (r.map.unwrap_or(0.0), r.gap.unwrap_or(0.0));
            println!("seed {seed}  {name:<18} MAP {map:.4}  GAP {gap:.4}");
            sums[i][0] += map;
            sums[i][1] += gap;
        }
    }
    println!();
    for (i, (name, _, _)) in objectives.iter().enumerate() {
        println!("mean {name:<18} MAP {:.4}  GAP {:.4}", sums[i][0] / seeds as f64, sums[i][1] / seeds as f64);
    }
    Ok(())
}
