//! Training configuration, the shared ranking objective, and model files.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adagrad::AdagradParams;
use crate::embedding::EmbeddingModel;
use crate::error::{KbcError, Result};
use crate::features::{parse_num, FeatureMatrix, FeatureSpace};
use crate::kb::{EntityId, TypeId, Vocab};
use crate::linear::LinearModel;
use crate::sampler::{NegativeConfig, SampledNegatives};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "linear.adagrad")]
    LinearAdagrad,
    #[serde(rename = "linear.dcd")]
    LinearDcd,
    #[serde(rename = "embedding")]
    Embedding,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::LinearAdagrad => "linear.adagrad",
            Algorithm::LinearDcd => "linear.dcd",
            Algorithm::Embedding => "embedding",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = KbcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear.adagrad" => Ok(Algorithm::LinearAdagrad),
            "linear.dcd" => Ok(Algorithm::LinearDcd),
            "embedding" => Ok(Algorithm::Embedding),
            _ => Err(KbcError::Usage(format!(
                "unknown algorithm `{s}` (expected linear.adagrad, linear.dcd or embedding)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hinge power k: 1 for the Adagrad trainers, 2 for DCD.
    pub loss_power: u32,
    /// Loss weight C (DCD only).
    pub c: f64,
    pub learning_rate: f64,
    pub adagrad_epsilon: f64,
    pub epochs: usize,
    pub negatives: NegativeConfig,
    /// Draw fresh negatives every epoch instead of once per positive.
    pub resample_negatives: bool,
    pub dcd_tolerance: f64,
    pub dcd_max_sweeps: usize,
    /// Seeds visitation order and random initialization.
    pub seed: u64,
}

impl TrainConfig {
    pub fn adagrad(negatives: NegativeConfig) -> Self {
        TrainConfig {
            loss_power: 1,
            c: 1.0,
            learning_rate: 0.1,
            adagrad_epsilon: 1e-8,
            epochs: 5,
            negatives,
            resample_negatives: true,
            dcd_tolerance: 1e-6,
            dcd_max_sweeps: 200,
            seed: negatives.seed,
        }
    }

    pub fn dcd(negatives: NegativeConfig, c: f64) -> Self {
        TrainConfig {
            loss_power: 2,
            c,
            resample_negatives: false,
            ..TrainConfig::adagrad(negatives)
        }
    }

    pub fn adagrad_params(&self) -> AdagradParams {
        AdagradParams {
            learning_rate: self.learning_rate,
            epsilon: self.adagrad_epsilon,
        }
    }

    pub fn validate_for(&self, algo: Algorithm) -> Result<()> {
        self.negatives.validate()?;
        match algo {
            Algorithm::LinearAdagrad | Algorithm::Embedding => {
                if self.loss_power != 1 {
                    return Err(KbcError::Usage(format!("{algo} uses the k = 1 hinge loss")));
                }
                if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || self.learning_rate.is_infinite() {
                    return Err(KbcError::Usage("learning rate must be positive".into()));
                }
                if self.adagrad_epsilon.is_nan() || self.adagrad_epsilon < 0.0 {
                    return Err(KbcError::Usage("adagrad epsilon must be non-negative".into()));
                }
            }
            Algorithm::LinearDcd => {
                if self.loss_power != 2 {
                    return Err(KbcError::Usage("linear.dcd uses the k = 2 hinge loss".into()));
                }
                if self.c.is_nan() || self.c <= 0.0 || self.c.is_infinite() {
                    return Err(KbcError::Usage("C must be positive".into()));
                }
                if self.dcd_tolerance.is_nan() || self.dcd_tolerance <= 0.0 || self.dcd_max_sweeps == 0 {
                    return Err(KbcError::Usage("DCD tolerance and sweep limit must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// The objective this configuration optimizes: `k = 1` means no
    /// regularizer and unit loss weight; `k = 2` means `½Σ‖w_t‖²` plus `C`.
    pub fn objective(&self) -> ObjectiveSpec {
        match self.loss_power {
            1 => ObjectiveSpec {
                loss_power: 1,
                c: 1.0,
                regularized: false,
            },
            k => ObjectiveSpec {
                loss_power: k,
                c: self.c,
                regularized: true,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSpec {
    pub loss_power: u32,
    pub c: f64,
    pub regularized: bool,
}

#[inline]
pub(crate) fn hinge(x: f64, power: u32) -> f64 {
    let h = x.max(0.0);
    if power == 1 {
        h
    } else {
        h.powi(power as i32)
    }
}

/// `C·Σ[s(e',t) − s(e,t) + 1]₊^k + C·Σ[s(e,t') − s(e,t) + 1]₊^k` over frozen negatives.
pub fn ranking_loss(score: impl Fn(EntityId, TypeId) -> f64, negatives: &[SampledNegatives], spec: ObjectiveSpec) -> f64 {
    let mut total = 0.0;
    for draw in negatives {
        let pos = score(draw.entity, draw.type_id);
        for &e2 in &draw.negative_entities {
            total += hinge(score(e2, draw.type_id) - pos + 1.0, spec.loss_power);
        }
        for &t2 in &draw.negative_types {
            total += hinge(score(draw.entity, t2) - pos + 1.0, spec.loss_power);
        }
    }
    spec.c * total
}

/// A trained model of either family.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Linear(LinearModel),
    Embedding(EmbeddingModel),
}

/// Header metadata shared by both model file formats.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHeader {
    pub algorithm: Algorithm,
    pub space: FeatureSpace,
    pub types: Vec<String>,
    pub config: TrainConfig,
    pub embedding_dim: Option<usize>,
}

impl AnyModel {
    pub fn feature_space(&self) -> &FeatureSpace {
        match self {
            AnyModel::Linear(m) => m.space(),
            AnyModel::Embedding(m) => m.space(),
        }
    }

    pub fn num_types(&self) -> usize {
        match self {
            AnyModel::Linear(m) => m.num_types(),
            AnyModel::Embedding(m) => m.type_dim(),
        }
    }

    /// Scores all `(entity, type)` pairs; one-hot type features are assumed
    /// for the embedding model.
    pub fn scorer<'a>(&'a self, features: &'a FeatureMatrix) -> Result<Box<dyn Fn(EntityId, TypeId) -> f64 + Sync + 'a>> {
        if features.space() != self.feature_space() {
            return Err(KbcError::Domain("feature space of the features does not match the model".into()));
        }
        Ok(match self {
            AnyModel::Linear(m) => Box::new(move |e, t| m.score_unchecked(features.row(e), t)),
            AnyModel::Embedding(m) => Box::new(move |e, t| m.score_one_hot_unchecked(features.row(e), t)),
        })
    }

    pub fn write(&self, mut w: impl Write, header: &ModelHeader) -> std::io::Result<()> {
        writeln!(w, "#kbc-model v1")?;
        writeln!(w, "algorithm\t{}", header.algorithm)?;
        writeln!(w, "feature_dim\t{}", header.space.total_dim())?;
        writeln!(w, "num_types\t{}", header.types.len())?;
        if let Some(d) = header.embedding_dim {
            writeln!(w, "embedding_dim\t{d}")?;
        }
        for b in header.space.blocks() {
            writeln!(w, "block\t{}\t{}\t{}", b.kind, b.offset, b.width)?;
        }
        writeln!(w, "config\t{}", serde_json::to_string(&header.config).expect("config serializes"))?;
        for t in &header.types {
            writeln!(w, "type\t{t}")?;
        }
        match self {
            AnyModel::Linear(m) => m.write_rows(&mut w, &header.types),
            AnyModel::Embedding(m) => m.write_matrices(&mut w),
        }
    }

    pub fn read(reader: impl BufRead, source_name: &str) -> Result<(AnyModel, ModelHeader)> {
        let mut lines = reader.lines().enumerate();
        let mut algorithm = None;
        let mut feature_dim = None;
        let mut num_types = None;
        let mut embedding_dim = None;
        let mut widths = Vec::new();
        let mut config = None;
        let mut types = Vec::new();
        let mut body = Vec::new();
        for (n, line) in lines.by_ref() {
            let line = line.map_err(|e| KbcError::io(source_name, e))?;
            let lineno = n + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once('\t').unwrap_or((line.as_str(), ""));
            match key {
                "algorithm" => algorithm = Some(rest.parse::<Algorithm>().map_err(|e| KbcError::parse(source_name, lineno, e.to_string()))?),
                "feature_dim" => feature_dim = Some(parse_num::<usize>(rest, source_name, lineno)?),
                "num_types" => num_types = Some(parse_num::<usize>(rest, source_name, lineno)?),
                "embedding_dim" => embedding_dim = Some(parse_num::<usize>(rest, source_name, lineno)?),
                "block" => {
                    let f: Vec<&str> = rest.split('\t').collect();
                    if f.len() != 3 {
                        return Err(KbcError::parse(source_name, lineno, "bad block line"));
                    }
                    let kind = f[0].parse().map_err(|_| KbcError::parse(source_name, lineno, "bad block kind"))?;
                    widths.push((kind, parse_num::<usize>(f[2], source_name, lineno)?));
                }
                "config" => config = Some(serde_json::from_str::<TrainConfig>(rest).map_err(|e| KbcError::parse(source_name, lineno, e.to_string()))?),
                "type" => types.push(rest.to_string()),
                _ => {
                    body.push((lineno, line));
                    break;
                }
            }
        }
        for (n, line) in lines {
            body.push((n + 1, line.map_err(|e| KbcError::io(source_name, e))?));
        }
        let missing = |what: &str| KbcError::parse(source_name, 0, format!("model header lacks `{what}`"));
        let algorithm = algorithm.ok_or_else(|| missing("algorithm"))?;
        let feature_dim = feature_dim.ok_or_else(|| missing("feature_dim"))?;
        let num_types = num_types.ok_or_else(|| missing("num_types"))?;
        let config = config.ok_or_else(|| missing("config"))?;
        let space = FeatureSpace::new(&widths)?;
        if space.total_dim() != feature_dim || types.len() != num_types {
            return Err(KbcError::parse(source_name, 0, "inconsistent model header"));
        }
        let model = match algorithm {
            Algorithm::LinearAdagrad | Algorithm::LinearDcd => {
                let vocab = Vocab::<TypeId>::from_symbols(&types);
                AnyModel::Linear(LinearModel::read_rows(space.clone(), &vocab, &body, source_name)?)
            }
            Algorithm::Embedding => {
                let d = embedding_dim.ok_or_else(|| missing("embedding_dim"))?;
                AnyModel::Embedding(EmbeddingModel::read_matrices(space.clone(), num_types, d, &body, source_name)?)
            }
        };
        Ok((
            model,
            ModelHeader {
                algorithm,
                space,
                types,
                config,
                embedding_dim,
            },
        ))
    }
}
