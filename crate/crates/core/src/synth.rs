//! Latent-cluster synthetic corpus with a held-out snapshot.
//!
//! Every entity belongs to one cluster. A cluster carries a core type set
//! drawn with Zipf-skewed type popularity, and each member keeps each core
//! type independently. Description and wikipedia texts mix tokens tied to
//! the entity's true types, tokens tied to its cluster, and background
//! words. The later snapshot holds every fact; the earlier one hides each
//! fact with probability `missing_rate`.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KbcError, Result};
use crate::features::write_text_corpus;
use crate::io_util::create;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub entities: usize,
    pub types: usize,
    pub clusters: usize,
    pub missing_rate: f64,
    pub seed: u64,
    /// Probability a member keeps each core type of its cluster.
    pub keep_rate: f64,
    /// Zipf exponent of type popularity across clusters.
    pub type_skew: f64,
    pub description_tokens: usize,
    pub wikipedia_tokens: usize,
    /// Fraction of entities with no wikipedia text.
    pub wikipedia_missing: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            entities: 1000,
            types: 20,
            clusters: 40,
            missing_rate: 0.2,
            seed: 0,
            keep_rate: 0.7,
            type_skew: 1.0,
            description_tokens: 12,
            wikipedia_tokens: 40,
            wikipedia_missing: 0.3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.entities == 0 || self.types == 0 || self.clusters == 0 {
            return Err(KbcError::Usage("entities, types and clusters must all be at least 1".into()));
        }
        for (name, r) in [
            ("missing rate", self.missing_rate),
            ("keep rate", self.keep_rate),
            ("wikipedia missing rate", self.wikipedia_missing),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(KbcError::Usage(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        if !self.type_skew.is_finite() || self.type_skew < 0.0 {
            return Err(KbcError::Usage("type skew must be a finite non-negative number".into()));
        }
        Ok(())
    }
}

const CLUSTER_WORDS: usize = 12;
const TYPE_WORDS: usize = 6;
const BACKGROUND_WORDS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    /// Earlier snapshot.
    pub train_facts: Vec<(String, String)>,
    /// Later snapshot, a superset of the earlier one.
    pub test_facts: Vec<(String, String)>,
    pub description: Vec<(String, String)>,
    pub wikipedia: Vec<(String, String)>,
    /// Cluster index of each entity, in entity order.
    pub clusters: Vec<usize>,
}

pub fn entity_symbol(i: usize) -> String {
    format!("/synth/e{i:06}")
}

pub fn type_symbol(t: usize) -> String {
    format!("/synth/type{t:03}")
}

fn cluster_word(c: usize, k: usize) -> String {
    format!("c{c}w{k}")
}

fn type_word(t: usize, k: usize) -> String {
    format!("t{t}w{k}")
}

fn background_word(k: usize) -> String {
    format!("bg{k}")
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let popularity: Vec<f64> = (0..cfg.types).map(|t| 1.0 / ((t + 1) as f64).powf(cfg.type_skew)).collect();
    let type_pick = WeightedIndex::new(&popularity).expect("positive weights");
    let cluster_types: Vec<Vec<usize>> = (0..cfg.clusters)
        .map(|c| {
            // seed each cluster with one type so every type occurs somewhere
            let mut set = vec![c % cfg.types];
            let extra = rng.random_range(1..=3usize).min(cfg.types - 1);
            while set.len() < extra + 1 {
                let t = type_pick.sample(&mut rng);
                if !set.contains(&t) {
                    set.push(t);
                }
            }
            set.sort_unstable();
            set
        })
        .collect();

    let background: Vec<f64> = (0..BACKGROUND_WORDS).map(|k| 1.0 / (k + 1) as f64).collect();
    let background_pick = WeightedIndex::new(&background).expect("positive weights");

    let mut corpus = SynthCorpus {
        train_facts: Vec::new(),
        test_facts: Vec::new(),
        description: Vec::with_capacity(cfg.entities),
        wikipedia: Vec::new(),
        clusters: Vec::with_capacity(cfg.entities),
    };
    for i in 0..cfg.entities {
        let c = rng.random_range(0..cfg.clusters);
        let core = &cluster_types[c];
        let mut types: Vec<usize> = core.iter().copied().filter(|_| rng.random::<f64>() < cfg.keep_rate).collect();
        if types.is_empty() {
            types.push(*core.choose(&mut rng).expect("non-empty core"));
        }
        let e = entity_symbol(i);
        for &t in &types {
            corpus.test_facts.push((e.clone(), type_symbol(t)));
            if rng.random::<f64>() >= cfg.missing_rate {
                corpus.train_facts.push((e.clone(), type_symbol(t)));
            }
        }

        let text = |n: usize, signal: f64, rng: &mut ChaCha8Rng| -> String {
            let words: Vec<String> = (0..n)
                .map(|_| {
                    let u = rng.random::<f64>();
                    if u < signal / 2.0 {
                        let t = *types.choose(rng).expect("non-empty types");
                        type_word(t, rng.random_range(0..TYPE_WORDS))
                    } else if u < signal {
                        cluster_word(c, rng.random_range(0..CLUSTER_WORDS))
                    } else {
                        background_word(background_pick.sample(rng))
                    }
                })
                .collect();
            words.join(" ")
        };
        let description = text(cfg.description_tokens, 0.5, &mut rng);
        let wikipedia = (rng.random::<f64>() >= cfg.wikipedia_missing).then(|| text(cfg.wikipedia_tokens, 0.25, &mut rng));
        corpus.description.push((e.clone(), description));
        if let Some(w) = wikipedia {
            corpus.wikipedia.push((e, w));
        }
        corpus.clusters.push(c);
    }
    Ok(corpus)
}

/// Paths written by [`write_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFiles {
    pub train: PathBuf,
    pub test: PathBuf,
    pub description: PathBuf,
    pub wikipedia: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        SynthFiles {
            train: dir.join("train_snapshot.tsv"),
            test: dir.join("test_snapshot.tsv"),
            description: dir.join("description.tsv"),
            wikipedia: dir.join("wikipedia.tsv"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.train, &self.test, &self.description, &self.wikipedia]
    }
}

fn write_facts_raw(path: &Path, facts: &[(String, String)]) -> Result<()> {
    let mut w = create(path)?;
    for (e, t) in facts {
        writeln!(w, "{e}\t{t}").map_err(|err| KbcError::io(path, err))?;
    }
    w.flush().map_err(|err| KbcError::io(path, err))
}

fn write_docs(path: &Path, docs: &[(String, String)]) -> Result<()> {
    let mut w = create(path)?;
    write_text_corpus(&mut w, docs.iter().map(|(e, d)| (e.as_str(), d.as_str()))).map_err(|err| KbcError::io(path, err))?;
    w.flush().map_err(|err| KbcError::io(path, err))
}

pub fn write_corpus(corpus: &SynthCorpus, dir: &Path) -> Result<SynthFiles> {
    let files = SynthFiles::in_dir(dir);
    write_facts_raw(&files.train, &corpus.train_facts)?;
    write_facts_raw(&files.test, &corpus.test_facts)?;
    write_docs(&files.description, &corpus.description)?;
    write_docs(&files.wikipedia, &corpus.wikipedia)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn cfg(missing_rate: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            entities: 500,
            types: 10,
            clusters: 20,
            missing_rate,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn no_missing_means_equal_snapshots() {
        let c = generate(&cfg(0.0, 1)).unwrap();
        assert_eq!(c.train_facts, c.test_facts);
    }

    #[test]
    fn all_missing_empties_train() {
        let c = generate(&cfg(1.0, 1)).unwrap();
        assert!(c.train_facts.is_empty());
        assert!(!c.test_facts.is_empty());
    }

    #[test]
    fn train_is_subset_and_seeded() {
        let a = generate(&cfg(0.3, 9)).unwrap();
        let test: HashSet<_> = a.test_facts.iter().collect();
        assert!(a.train_facts.iter().all(|f| test.contains(f)));
        assert_eq!(a, generate(&cfg(0.3, 9)).unwrap());
        assert_ne!(a, generate(&cfg(0.3, 10)).unwrap());
    }

    #[test]
    fn every_type_used_with_enough_clusters() {
        let c = generate(&cfg(0.0, 4)).unwrap();
        let types: HashSet<_> = c.test_facts.iter().map(|(_, t)| t.clone()).collect();
        assert_eq!(types.len(), 10);
    }

    #[test]
    fn hidden_fraction_is_binomial() {
        let mut hidden = 0usize;
        let mut total = 0usize;
        for seed in 0..5 {
            let c = generate(&SynthConfig {
                entities: 10_000,
                types: 50,
                clusters: 100,
                missing_rate: 0.2,
                seed,
                ..SynthConfig::default()
            })
            .unwrap();
            hidden += c.test_facts.len() - c.train_facts.len();
            total += c.test_facts.len();
        }
        let rate = hidden as f64 / total as f64;
        assert!((rate - 0.2).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn invalid_rates_are_usage_errors() {
        assert!(matches!(generate(&cfg(1.5, 0)), Err(KbcError::Usage(_))));
        assert!(matches!(generate(&cfg(-0.1, 0)), Err(KbcError::Usage(_))));
        let zero = SynthConfig {
            clusters: 0,
            ..SynthConfig::default()
        };
        assert!(generate(&zero).is_err());
    }
}
