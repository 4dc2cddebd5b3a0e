//! Bilinear embedding model `s(e, t) = Ψ(t)ᵀ V Uᵀ Φ(e)`.
//!
//! `U` (d_e × d) projects entity features and `V` (d_t × d) projects type
//! features into a shared d-dimensional space. Both are stored row-major,
//! so column `i` of `U` is the strided slice `u[j * d + i]`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adagrad;
use crate::error::{KbcError, Result};
use crate::features::{one_hot_type_features, parse_num, FeatureMatrix, FeatureSpace};
use crate::io_util::fmt_g9;
use crate::kb::{EntityId, Id, TypeId};
use crate::model::{Algorithm, TrainConfig};
use crate::sampler::{substream, NegativeSampler};
use crate::sparse::SparseVector;

const INIT_STREAM: u64 = 0x494e_4954;
const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Keep `V` at its initial value during training.
    pub freeze_type_projection: bool,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 50,
            freeze_type_projection: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    space: FeatureSpace,
    type_dim: usize,
    dim: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl EmbeddingModel {
    /// Entries i.i.d. uniform in `[-1/√d, 1/√d]`.
    pub fn random(space: FeatureSpace, type_dim: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(KbcError::Usage("embedding dimension must be at least 1".into()));
        }
        let bound = 1.0 / (dim as f64).sqrt();
        let mut rng = substream(seed, &[INIT_STREAM]);
        let d_e = space.total_dim();
        let u = (0..d_e * dim).map(|_| rng.random_range(-bound..=bound)).collect();
        let v = (0..type_dim * dim).map(|_| rng.random_range(-bound..=bound)).collect();
        Ok(EmbeddingModel {
            space,
            type_dim,
            dim,
            u,
            v,
        })
    }

    /// Builds a model from row-major `U` (d_e × d) and `V` (d_t × d).
    pub fn from_parts(space: FeatureSpace, type_dim: usize, dim: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if dim == 0 || u.len() != space.total_dim() * dim || v.len() != type_dim * dim {
            return Err(KbcError::Domain("projection matrix shapes do not match (d_e, d_t, d)".into()));
        }
        if u.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(KbcError::Domain("non-finite projection entry".into()));
        }
        Ok(EmbeddingModel {
            space,
            type_dim,
            dim,
            u,
            v,
        })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn feature_dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn type_dim(&self) -> usize {
        self.type_dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    pub fn v_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// `UᵀΦ`.
    pub fn project_entity(&self, phi: &SparseVector) -> Vec<f64> {
        project(&self.u, self.dim, phi)
    }

    /// `VᵀΨ`.
    pub fn project_type(&self, psi: &SparseVector) -> Vec<f64> {
        project(&self.v, self.dim, psi)
    }

    pub fn score(&self, phi: &SparseVector, psi: &SparseVector) -> Result<f64> {
        if phi.dim() != self.feature_dim() || psi.dim() != self.type_dim {
            return Err(KbcError::Domain(format!(
                "dimensions ({}, {}) do not match the model's ({}, {})",
                phi.dim(),
                psi.dim(),
                self.feature_dim(),
                self.type_dim
            )));
        }
        Ok(self.score_unchecked(phi, psi))
    }

    pub fn score_unchecked(&self, phi: &SparseVector, psi: &SparseVector) -> f64 {
        dot(&self.project_entity(phi), &self.project_type(psi))
    }

    /// Score with one-hot `Ψ(t)`: `row_t(V) · UᵀΦ`.
    pub fn score_one_hot_unchecked(&self, phi: &SparseVector, t: TypeId) -> f64 {
        dot(&self.project_entity(phi), self.type_row(t))
    }

    pub fn type_row(&self, t: TypeId) -> &[f64] {
        &self.v[t.index() * self.dim..(t.index() + 1) * self.dim]
    }

    /// Gradient of `yᵀ V Uᵀ x` with respect to `U` and `V`.
    ///
    /// With `μ = Vᵀy` and `η = Uᵀx` the derivative is `x_j μ_i` for `U[j, i]`
    /// and `y_k η_i` for `V[k, i]`; only rows in the support of `x` and `y`
    /// are returned.
    pub fn bilinear_gradient(&self, x: &SparseVector, y: &SparseVector) -> BilinearGradient {
        let mu = self.project_type(y);
        let eta = self.project_entity(x);
        BilinearGradient {
            u_rows: x.iter().map(|(j, xj)| (j, mu.iter().map(|m| xj * m).collect())).collect(),
            v_rows: y.iter().map(|(k, yk)| (k, eta.iter().map(|h| yk * h).collect())).collect(),
        }
    }

    pub(crate) fn write_matrices(&self, w: &mut impl Write) -> std::io::Result<()> {
        for (name, data) in [("U", &self.u), ("V", &self.v)] {
            writeln!(w, "{name}")?;
            for row in data.chunks(self.dim) {
                let line: Vec<String> = row.iter().map(|&x| fmt_g9(x)).collect();
                writeln!(w, "{}", line.join(" "))?;
            }
        }
        Ok(())
    }

    pub(crate) fn read_matrices(space: FeatureSpace, type_dim: usize, dim: usize, body: &[(usize, String)], source_name: &str) -> Result<Self> {
        let d_e = space.total_dim();
        let mut u = Vec::with_capacity(d_e * dim);
        let mut v = Vec::with_capacity(type_dim * dim);
        let mut target: Option<&mut Vec<f64>> = None;
        for (lineno, line) in body {
            match line.as_str() {
                "U" => target = Some(&mut u),
                "V" => target = Some(&mut v),
                _ => {
                    let dest = target
                        .as_deref_mut()
                        .ok_or_else(|| KbcError::parse(source_name, *lineno, "matrix row before `U`/`V` marker"))?;
                    let before = dest.len();
                    for tok in line.split_ascii_whitespace() {
                        dest.push(parse_num::<f64>(tok, source_name, *lineno)?);
                    }
                    if dest.len() - before != dim {
                        return Err(KbcError::parse(source_name, *lineno, format!("expected {dim} values")));
                    }
                }
            }
        }
        EmbeddingModel::from_parts(space, type_dim, dim, u, v)
    }
}

fn project(m: &[f64], dim: usize, x: &SparseVector) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (j, xj) in x.iter() {
        let row = &m[j * dim..(j + 1) * dim];
        for (o, r) in out.iter_mut().zip(row) {
            *o += xj * r;
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sparse-row gradient of a bilinear form with respect to `U` and `V`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearGradient {
    /// `(feature row j, ∂/∂U[j, ·])`.
    pub u_rows: Vec<(usize, Vec<f64>)>,
    /// `(type-feature row k, ∂/∂V[k, ·])`.
    pub v_rows: Vec<(usize, Vec<f64>)>,
}

/// The negative side of a ranking pair for a positive `(e, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Negative {
    Entity(EntityId),
    Type(TypeId),
}

impl EmbeddingModel {
    /// Direction of the update for a violated pair: the gradient of the
    /// hinge argument `s(neg) − s(e, t) + 1`, computed at the current point.
    ///
    /// A negative entity gives `x = Φ(e') − Φ(e)`, `y = Ψ(t)`; a negative type
    /// gives `x = Φ(e)`, `y = Ψ(t') − Ψ(t)`.
    pub fn pair_gradient(
        &self,
        features: &FeatureMatrix,
        type_features: &[SparseVector],
        e: EntityId,
        t: TypeId,
        negative: Negative,
    ) -> BilinearGradient {
        let phi_e = features.row(e);
        match negative {
            Negative::Entity(e2) => self.bilinear_gradient(&features.row(e2).sub(phi_e), &type_features[t.index()]),
            Negative::Type(t2) => self.bilinear_gradient(phi_e, &type_features[t2.index()].sub(&type_features[t.index()])),
        }
    }

    pub fn pair_score(&self, features: &FeatureMatrix, type_features: &[SparseVector], e: EntityId, t: TypeId) -> f64 {
        self.score_unchecked(features.row(e), &type_features[t.index()])
    }
}

/// Online Adagrad trainer for the embedding model.
pub struct EmbeddingTrainer<'a> {
    features: &'a FeatureMatrix,
    type_features: Vec<SparseVector>,
    sampler: &'a NegativeSampler<'a>,
    cfg: TrainConfig,
    freeze_v: bool,
    model: EmbeddingModel,
    accum_u: Vec<f64>,
    accum_v: Vec<f64>,
    order: Vec<(EntityId, TypeId)>,
    step: u64,
}

impl<'a> EmbeddingTrainer<'a> {
    /// Continues training from `init`; type features default to one-hot.
    pub fn new(
        positives: &[(EntityId, TypeId)],
        features: &'a FeatureMatrix,
        type_features: Option<Vec<SparseVector>>,
        sampler: &'a NegativeSampler<'a>,
        init: EmbeddingModel,
        cfg: &TrainConfig,
        emb: &EmbeddingConfig,
    ) -> Result<Self> {
        cfg.validate_for(Algorithm::Embedding)?;
        if features.space() != init.space() {
            return Err(KbcError::Domain("feature space differs from the model's".into()));
        }
        let type_features = type_features.unwrap_or_else(|| one_hot_type_features(init.type_dim));
        if type_features.iter().any(|psi| psi.dim() != init.type_dim) {
            return Err(KbcError::Domain("type feature dimension differs from the model's".into()));
        }
        if let Some(&(_, t)) = positives.iter().find(|(_, t)| t.index() >= type_features.len()) {
            return Err(KbcError::Domain(format!("positive with {t} beyond the type feature table")));
        }
        Ok(EmbeddingTrainer {
            features,
            type_features,
            sampler,
            cfg: *cfg,
            freeze_v: emb.freeze_type_projection,
            accum_u: vec![0.0; init.u.len()],
            accum_v: vec![0.0; init.v.len()],
            model: init,
            order: positives.to_vec(),
            step: 0,
        })
    }

    pub fn model(&self) -> &EmbeddingModel {
        &self.model
    }

    pub fn type_features(&self) -> &[SparseVector] {
        &self.type_features
    }

    fn score(&self, e: EntityId, t: TypeId) -> f64 {
        self.model.pair_score(self.features, &self.type_features, e, t)
    }

    fn apply(&mut self, g: &BilinearGradient) -> Result<()> {
        let p = self.cfg.adagrad_params();
        let d = self.model.dim;
        let mut ok = true;
        for (j, row) in &g.u_rows {
            for (i, &gi) in row.iter().enumerate() {
                ok &= adagrad::step(&mut self.model.u[j * d + i], &mut self.accum_u[j * d + i], gi, p);
            }
        }
        if !self.freeze_v {
            for (k, row) in &g.v_rows {
                for (i, &gi) in row.iter().enumerate() {
                    ok &= adagrad::step(&mut self.model.v[k * d + i], &mut self.accum_v[k * d + i], gi, p);
                }
            }
        }
        if ok {
            Ok(())
        } else {
            Err(KbcError::Numerical {
                step: self.step,
                detail: "non-finite projection entry after an Adagrad update".into(),
            })
        }
    }

    /// Checks one ranking pair and, if violated, applies the Adagrad update.
    pub fn visit_pair(&mut self, e: EntityId, t: TypeId, negative: Negative) -> Result<bool> {
        let neg_score = match negative {
            Negative::Entity(e2) => self.score(e2, t),
            Negative::Type(t2) => self.score(e, t2),
        };
        if self.score(e, t) - neg_score - 1.0 < 0.0 {
            let g = self.model.pair_gradient(self.features, &self.type_features, e, t, negative);
            self.apply(&g)?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn run_epoch(&mut self, epoch: u64) -> Result<usize> {
        let mut rng = substream(self.cfg.seed, &[SHUFFLE_STREAM, epoch]);
        self.order.shuffle(&mut rng);
        let draw_epoch = if self.cfg.resample_negatives { epoch } else { 0 };
        let mut violations = 0;
        for k in 0..self.order.len() {
            let (e, t) = self.order[k];
            self.step += 1;
            let draw = self.sampler.draw(e, t, draw_epoch);
            for &e2 in &draw.negative_entities {
                violations += usize::from(self.visit_pair(e, t, Negative::Entity(e2))?);
            }
            for &t2 in &draw.negative_types {
                violations += usize::from(self.visit_pair(e, t, Negative::Type(t2))?);
            }
        }
        Ok(violations)
    }

    pub fn into_model(self) -> EmbeddingModel {
        self.model
    }
}

/// Trains the embedding model from a random start with one-hot type features.
pub fn train_embedding(
    positives: &[(EntityId, TypeId)],
    features: &FeatureMatrix,
    sampler: &NegativeSampler<'_>,
    num_types: usize,
    cfg: &TrainConfig,
    emb: &EmbeddingConfig,
) -> Result<EmbeddingModel> {
    let init = EmbeddingModel::random(features.space().clone(), num_types, emb.dim, cfg.seed)?;
    train_embedding_from(init, positives, features, None, sampler, cfg, emb)
}

/// Trains starting from a given model, optionally with custom type features.
pub fn train_embedding_from(
    init: EmbeddingModel,
    positives: &[(EntityId, TypeId)],
    features: &FeatureMatrix,
    type_features: Option<Vec<SparseVector>>,
    sampler: &NegativeSampler<'_>,
    cfg: &TrainConfig,
    emb: &EmbeddingConfig,
) -> Result<EmbeddingModel> {
    let mut trainer = EmbeddingTrainer::new(positives, features, type_features, sampler, init, cfg, emb)?;
    for epoch in 0..cfg.epochs as u64 {
        trainer.run_epoch(epoch)?;
    }
    Ok(trainer.into_model())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::BlockKind;

    fn space(d: usize) -> FeatureSpace {
        FeatureSpace::new(&[(BlockKind::Description, d)]).unwrap()
    }

    #[test]
    fn zero_projection_scores_zero() {
        let m = EmbeddingModel::from_parts(space(2), 2, 3, vec![0.0; 6], vec![1.0; 6]).unwrap();
        let phi = SparseVector::new(2, vec![(0, 1.0), (1, 1.0)]).unwrap();
        let psi = SparseVector::one_hot(2, 1).unwrap();
        assert_eq!(m.score(&phi, &psi).unwrap(), 0.0);
        let m = EmbeddingModel::from_parts(space(2), 2, 3, vec![1.0; 6], vec![0.0; 6]).unwrap();
        assert_eq!(m.score(&phi, &psi).unwrap(), 0.0);
    }

    #[test]
    fn scalar_bilinear_hand_value() {
        // d = 1: UᵀΦ = 2, ΨᵀV = 3
        let m = EmbeddingModel::from_parts(space(1), 1, 1, vec![2.0], vec![3.0]).unwrap();
        let phi = SparseVector::one_hot(1, 0).unwrap();
        let psi = SparseVector::one_hot(1, 0).unwrap();
        assert_eq!(m.score(&phi, &psi).unwrap(), 6.0);
        assert!(m.score(&SparseVector::zeros(2), &psi).is_err());
    }

    #[test]
    fn identity_v_reduces_to_linear() {
        // d_e = 3, d = d_t = 2, V = I
        let u = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let m = EmbeddingModel::from_parts(space(3), 2, 2, u.clone(), vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let phi = SparseVector::new(3, vec![(0, 0.5), (2, -1.0)]).unwrap();
        for t in 0..2 {
            let column: Vec<f64> = (0..3).map(|j| u[j * 2 + t]).collect();
            assert_eq!(m.score_one_hot_unchecked(&phi, TypeId(t as u32)), phi.dot_dense(&column));
        }
    }

    #[test]
    fn random_init_is_bounded_and_seeded() {
        let a = EmbeddingModel::random(space(10), 4, 16, 3).unwrap();
        let b = EmbeddingModel::random(space(10), 4, 16, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.u().iter().chain(a.v()).all(|x| x.abs() <= 0.25));
        assert!(EmbeddingModel::random(space(10), 4, 0, 3).is_err());
    }
}
