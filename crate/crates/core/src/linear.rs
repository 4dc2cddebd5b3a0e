//! Per-type linear scoring `s(e, t) = w_tᵀΦ(e)` and its two trainers: online
//! Adagrad on the k = 1 hinge, and batch dual coordinate descent on the
//! L2-regularized k = 2 hinge.

use std::io::Write;

use rand::seq::SliceRandom;

use crate::adagrad::AdagradBuffer;
use crate::error::{KbcError, Result};
use crate::features::{parse_sparse_row, write_sparse_row, FeatureMatrix, FeatureSpace};
use crate::kb::{EntityId, Id, TypeId, Vocab};
use crate::model::{ranking_loss, Algorithm, ObjectiveSpec, TrainConfig};
use crate::sampler::{substream, NegativeSampler, SampledNegatives};
use crate::sparse::SparseVector;

const SHUFFLE_STREAM: u64 = 0x5348_5546;
const DCD_STREAM: u64 = 0x4443_4400;

/// One dense weight vector per type.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    space: FeatureSpace,
    weights: Vec<Vec<f64>>,
}

impl LinearModel {
    pub fn zeros(space: FeatureSpace, num_types: usize) -> Self {
        let d = space.total_dim();
        LinearModel {
            space,
            weights: vec![vec![0.0; d]; num_types],
        }
    }

    pub fn from_weights(space: FeatureSpace, weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.iter().any(|w| w.len() != space.total_dim()) {
            return Err(KbcError::Domain("weight vector length differs from feature dimension".into()));
        }
        Ok(LinearModel { space, weights })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn feature_dim(&self) -> usize {
        self.space.total_dim()
    }

    pub fn num_types(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, t: TypeId) -> &[f64] {
        &self.weights[t.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|w| w.is_finite())
    }

    /// `½ Σ_t w_tᵀw_t`.
    pub fn half_squared_norm(&self) -> f64 {
        0.5 * self.weights.iter().flatten().map(|w| w * w).sum::<f64>()
    }

    pub fn score(&self, phi: &SparseVector, t: TypeId) -> Result<f64> {
        if phi.dim() != self.feature_dim() {
            return Err(KbcError::Domain(format!(
                "feature vector of dimension {} for a model of dimension {}",
                phi.dim(),
                self.feature_dim()
            )));
        }
        if t.index() >= self.num_types() {
            return Err(KbcError::Domain(format!("{t} out of range for {} types", self.num_types())));
        }
        Ok(self.score_unchecked(phi, t))
    }

    #[inline]
    pub fn score_unchecked(&self, phi: &SparseVector, t: TypeId) -> f64 {
        phi.dot_dense(&self.weights[t.index()])
    }

    pub(crate) fn write_rows(&self, w: &mut impl Write, types: &[String]) -> std::io::Result<()> {
        for (t, weights) in self.weights.iter().enumerate() {
            let row = SparseVector::new(
                weights.len(),
                weights.iter().enumerate().map(|(i, &x)| (i as u32, x)).collect(),
            )
            .expect("finite weights");
            write!(w, "{}\t", types[t])?;
            write_sparse_row(w, &row)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub(crate) fn read_rows(space: FeatureSpace, types: &Vocab<TypeId>, body: &[(usize, String)], source_name: &str) -> Result<Self> {
        let mut model = LinearModel::zeros(space, types.len());
        let d = model.feature_dim();
        for (lineno, line) in body {
            let (sym, rest) = line
                .split_once('\t')
                .ok_or_else(|| KbcError::parse(source_name, *lineno, "expected `type<TAB>row`"))?;
            let t = types
                .get(sym)
                .ok_or_else(|| KbcError::parse(source_name, *lineno, format!("row for undeclared type `{sym}`")))?;
            model.weights[t.index()] = parse_sparse_row(rest, d, source_name, *lineno)?.to_dense();
        }
        Ok(model)
    }
}

/// Reg(θ) plus the weighted ranking loss over frozen negatives.
pub fn objective_value(model: &LinearModel, features: &FeatureMatrix, negatives: &[SampledNegatives], spec: ObjectiveSpec) -> f64 {
    let reg = if spec.regularized { model.half_squared_norm() } else { 0.0 };
    reg + ranking_loss(|e, t| model.score_unchecked(features.row(e), t), negatives, spec)
}

fn check_inputs(features: &FeatureMatrix, positives: &[(EntityId, TypeId)], num_types: usize) -> Result<()> {
    if let Some(&(_, t)) = positives.iter().find(|(_, t)| t.index() >= num_types) {
        return Err(KbcError::Domain(format!("positive with {t} but the model has {num_types} types")));
    }
    if let Some(&(e, _)) = positives.iter().find(|(e, _)| e.index() >= features.num_rows()) {
        return Err(KbcError::Domain(format!("positive for {e} which has no feature row")));
    }
    Ok(())
}

/// Online Adagrad trainer; exposes per-epoch state for inspection.
pub struct LinearAdagradTrainer<'a> {
    features: &'a FeatureMatrix,
    sampler: &'a NegativeSampler<'a>,
    cfg: TrainConfig,
    buffers: Vec<AdagradBuffer>,
    order: Vec<(EntityId, TypeId)>,
    step: u64,
}

impl<'a> LinearAdagradTrainer<'a> {
    pub fn new(
        positives: &[(EntityId, TypeId)],
        features: &'a FeatureMatrix,
        sampler: &'a NegativeSampler<'a>,
        num_types: usize,
        cfg: &TrainConfig,
    ) -> Result<Self> {
        cfg.validate_for(Algorithm::LinearAdagrad)?;
        check_inputs(features, positives, num_types)?;
        let d = features.dim();
        Ok(LinearAdagradTrainer {
            features,
            sampler,
            cfg: *cfg,
            buffers: (0..num_types).map(|_| AdagradBuffer::new(vec![0.0; d])).collect(),
            order: positives.to_vec(),
            step: 0,
        })
    }

    /// Squared-gradient accumulators of `w_t`.
    pub fn accumulators(&self, t: TypeId) -> &[f64] {
        &self.buffers[t.index()].accum
    }

    fn score(&self, e: EntityId, t: TypeId) -> f64 {
        self.features.row(e).dot_dense(&self.buffers[t.index()].values)
    }

    fn update(&mut self, t: TypeId, g: &SparseVector, sign: f64) -> Result<()> {
        let p = self.cfg.adagrad_params();
        let ok = self.buffers[t.index()].step_sparse(0, g.iter().map(|(i, x)| (i, sign * x)), p);
        if ok {
            Ok(())
        } else {
            Err(KbcError::Numerical {
                step: self.step,
                detail: format!("non-finite weight for {t} after an Adagrad update"),
            })
        }
    }

    /// Runs one pass over the shuffled positives; returns the number of
    /// violated constraints encountered (each triggers an update).
    pub fn run_epoch(&mut self, epoch: u64) -> Result<usize> {
        let mut rng = substream(self.cfg.seed, &[SHUFFLE_STREAM, epoch]);
        self.order.shuffle(&mut rng);
        let draw_epoch = if self.cfg.resample_negatives { epoch } else { 0 };
        let mut violations = 0;
        for k in 0..self.order.len() {
            let (e, t) = self.order[k];
            self.step += 1;
            let draw = self.sampler.draw(e, t, draw_epoch);
            let phi_e = self.features.row(e);
            for &e2 in &draw.negative_entities {
                if self.score(e, t) - self.score(e2, t) - 1.0 < 0.0 {
                    violations += 1;
                    let g = self.features.row(e2).sub(phi_e);
                    self.update(t, &g, 1.0)?;
                }
            }
            for &t2 in &draw.negative_types {
                if self.score(e, t) - self.score(e, t2) - 1.0 < 0.0 {
                    violations += 1;
                    self.update(t, phi_e, -1.0)?;
                    self.update(t2, phi_e, 1.0)?;
                }
            }
        }
        Ok(violations)
    }

    pub fn model(&self) -> LinearModel {
        LinearModel {
            space: self.features.space().clone(),
            weights: self.buffers.iter().map(|b| b.values.clone()).collect(),
        }
    }

    pub fn into_model(self) -> LinearModel {
        LinearModel {
            space: self.features.space().clone(),
            weights: self.buffers.into_iter().map(|b| b.values).collect(),
        }
    }
}

/// Trains per-type weights with online Adagrad on the k = 1 hinge, no regularizer.
pub fn train_linear_adagrad(
    positives: &[(EntityId, TypeId)],
    features: &FeatureMatrix,
    sampler: &NegativeSampler<'_>,
    num_types: usize,
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    let mut trainer = LinearAdagradTrainer::new(positives, features, sampler, num_types, cfg)?;
    for epoch in 0..cfg.epochs as u64 {
        trainer.run_epoch(epoch)?;
    }
    Ok(trainer.into_model())
}

/// A ranking constraint `θᵀx_i ≥ 1` in the stacked per-type parameter space.
#[derive(Debug, Clone)]
enum Constraint {
    /// `x = Φ(e) − Φ(e')` in block `t`.
    Entity { t: TypeId, x: SparseVector },
    /// `x = Φ(e)` in block `t` and `−Φ(e)` in block `t'`.
    Type { t: TypeId, t2: TypeId, phi: SparseVector },
}

impl Constraint {
    fn squared_norm(&self) -> f64 {
        match self {
            Constraint::Entity { x, .. } => x.squared_norm(),
            Constraint::Type { phi, .. } => 2.0 * phi.squared_norm(),
        }
    }

    fn margin(&self, w: &[Vec<f64>]) -> f64 {
        match self {
            Constraint::Entity { t, x } => x.dot_dense(&w[t.index()]),
            Constraint::Type { t, t2, phi } => phi.dot_dense(&w[t.index()]) - phi.dot_dense(&w[t2.index()]),
        }
    }

    fn add_to(&self, w: &mut [Vec<f64>], delta: f64) {
        let axpy = |w: &mut Vec<f64>, v: &SparseVector, a: f64| {
            for (i, x) in v.iter() {
                w[i] += a * x;
            }
        };
        match self {
            Constraint::Entity { t, x } => axpy(&mut w[t.index()], x, delta),
            Constraint::Type { t, t2, phi } => {
                axpy(&mut w[t.index()], phi, delta);
                axpy(&mut w[t2.index()], phi, -delta);
            }
        }
    }
}

/// Diagnostics of a dual coordinate descent run.
#[derive(Debug, Clone, PartialEq)]
pub struct DcdTrace {
    /// Dual objective after each sweep (maximized).
    pub dual_objective: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
    pub num_constraints: usize,
    /// Constraints with a zero difference feature, left out of the problem.
    pub skipped: usize,
}

/// Solves `min ½Σ‖w_t‖² + C·Σ[1 − θᵀx_i]₊²` in the dual over frozen negatives.
pub fn train_linear_dcd_frozen(
    negatives: &[SampledNegatives],
    features: &FeatureMatrix,
    num_types: usize,
    cfg: &TrainConfig,
) -> Result<(LinearModel, DcdTrace)> {
    cfg.validate_for(Algorithm::LinearDcd)?;
    let mut constraints = Vec::new();
    let mut skipped = 0;
    for draw in negatives {
        if draw.type_id.index() >= num_types {
            return Err(KbcError::Domain(format!("{} out of range for {num_types} types", draw.type_id)));
        }
        let phi = features.row(draw.entity);
        for &e2 in &draw.negative_entities {
            let x = phi.sub(features.row(e2));
            if x.is_zero() {
                skipped += 1;
            } else {
                constraints.push(Constraint::Entity { t: draw.type_id, x });
            }
        }
        for &t2 in &draw.negative_types {
            if phi.is_zero() {
                skipped += 1;
            } else {
                constraints.push(Constraint::Type {
                    t: draw.type_id,
                    t2,
                    phi: phi.clone(),
                });
            }
        }
    }

    let d = features.dim();
    let mut w = vec![vec![0.0; d]; num_types];
    let mut alpha = vec![0.0; constraints.len()];
    let diag = 1.0 / (2.0 * cfg.c);
    let qii: Vec<f64> = constraints.iter().map(|c| c.squared_norm() + diag).collect();
    let mut perm: Vec<usize> = (0..constraints.len()).collect();
    let mut trace = DcdTrace {
        dual_objective: Vec::new(),
        sweeps: 0,
        converged: false,
        num_constraints: constraints.len(),
        skipped,
    };

    for sweep in 0..cfg.dcd_max_sweeps {
        let mut rng = substream(cfg.seed, &[DCD_STREAM, sweep as u64]);
        perm.shuffle(&mut rng);
        let mut max_change: f64 = 0.0;
        for &i in &perm {
            let grad = constraints[i].margin(&w) - 1.0 + alpha[i] * diag;
            let new_alpha = (alpha[i] - grad / qii[i]).max(0.0);
            let delta = new_alpha - alpha[i];
            if delta != 0.0 {
                constraints[i].add_to(&mut w, delta);
                alpha[i] = new_alpha;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.sweeps = sweep + 1;
        let norm2: f64 = w.iter().flatten().map(|x| x * x).sum();
        if !norm2.is_finite() {
            return Err(KbcError::Numerical {
                step: sweep as u64,
                detail: "non-finite weights in dual coordinate descent".into(),
            });
        }
        let dual = alpha.iter().sum::<f64>() - 0.5 * norm2 - alpha.iter().map(|a| a * a).sum::<f64>() * diag / 2.0;
        trace.dual_objective.push(dual);
        if max_change < cfg.dcd_tolerance {
            trace.converged = true;
            break;
        }
    }

    let model = LinearModel {
        space: features.space().clone(),
        weights: w,
    };
    Ok((model, trace))
}

/// Draws one fixed set of negatives per positive and solves the batch problem.
pub fn train_linear_dcd(
    positives: &[(EntityId, TypeId)],
    features: &FeatureMatrix,
    sampler: &NegativeSampler<'_>,
    num_types: usize,
    cfg: &TrainConfig,
) -> Result<(LinearModel, DcdTrace)> {
    check_inputs(features, positives, num_types)?;
    let negatives = sampler.freeze(positives);
    train_linear_dcd_frozen(&negatives, features, num_types, cfg)
}
