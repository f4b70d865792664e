//! Deterministic weighted binary classifiers. Interventions in this crate
//! only touch per-tuple weights, so any learner that honors weights works;
//! these two are self-contained and bitwise reproducible.
//!
//! The logistic learner minimizes weight-normalized cross-entropy with L2 on
//! the coefficients (not the intercept) by fixed-step full-batch gradient
//! descent from zero. The stump ensemble runs adaptive boosting rounds of
//! weighted-error-minimizing depth-1 stumps, seeded with the user weights.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    #[default]
    Logistic,
    StumpEnsemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub kind: LearnerKind,
    /// L2 penalty on the logistic coefficients.
    pub l2: f64,
    pub max_iters: usize,
    pub step: f64,
    /// Stop when the gradient norm falls below this.
    pub tol: f64,
    /// Boosting rounds (stump ensemble only).
    pub rounds: usize,
    /// Reserved for stochastic learners; both current learners are
    /// deterministic and ignore it.
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            kind: LearnerKind::Logistic,
            l2: 1e-3,
            max_iters: 2000,
            step: 0.5,
            tol: 1e-7,
            rounds: 50,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if self.max_iters == 0 || self.rounds == 0 {
            return Err(Error::Config("max_iters and rounds must be positive".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("step must be > 0, got {}", self.step)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// A single axis-aligned threshold vote. With polarity +1 the stump votes
/// for class 1 when `x[feature] >= threshold`; polarity -1 reverses it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub polarity: i8,
    pub vote: f64,
}

impl Stump {
    #[inline]
    fn signed(&self, x: &[f64]) -> f64 {
        let fires = x[self.feature] >= self.threshold;
        let s = if fires { 1.0 } else { -1.0 };
        s * f64::from(self.polarity)
    }
}

/// An immutable fitted model; prediction is a pure function of the
/// parameters and features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Logistic { weights: Vec<f64>, intercept: f64 },
    StumpEnsemble { feature_count: usize, stumps: Vec<Stump> },
}

impl TrainedModel {
    pub fn feature_count(&self) -> usize {
        match self {
            TrainedModel::Logistic { weights, .. } => weights.len(),
            TrainedModel::StumpEnsemble { feature_count, .. } => *feature_count,
        }
    }

    /// Predict one tuple; the decision score ties toward class 1.
    pub fn predict_one(&self, features: &[f64]) -> Result<u8> {
        if features.len() != self.feature_count() {
            return Err(Error::Shape {
                expected: self.feature_count(),
                got: features.len(),
            });
        }
        let score = match self {
            TrainedModel::Logistic { weights, intercept } => {
                weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + intercept
            }
            TrainedModel::StumpEnsemble { stumps, .. } => {
                stumps.iter().map(|s| s.vote * s.signed(features)).sum()
            }
        };
        Ok(u8::from(score >= 0.0))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Predict a batch of feature rows.
pub fn predict(model: &TrainedModel, rows: &[&[f64]]) -> Result<Vec<u8>> {
    rows.iter().map(|r| model.predict_one(r)).collect()
}

/// Predict dataset rows selected by `idx` using the encoded feature matrix.
pub fn predict_dataset(model: &TrainedModel, d: &Dataset, idx: &[usize]) -> Result<Vec<u8>> {
    idx.iter().map(|&i| model.predict_one(d.encoded_row(i))).collect()
}

fn validate_training_inputs(d: &Dataset, idx: &[usize], weights: &[f64]) -> Result<f64> {
    if idx.len() < 2 {
        return Err(Error::InsufficientData {
            context: "training",
            min: 2,
            got: idx.len(),
        });
    }
    if weights.len() != idx.len() {
        return Err(Error::InvalidWeight(format!(
            "{} weights for {} tuples",
            weights.len(),
            idx.len()
        )));
    }
    let mut sum = 0.0;
    for &w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidWeight(format!("weight {w} is not a finite non-negative number")));
        }
        sum += w;
    }
    if sum <= 0.0 {
        return Err(Error::InvalidWeight("weights sum to zero".into()));
    }
    let first = d.label(idx[0]);
    if idx.iter().all(|&i| d.label(i) == first) {
        return Err(Error::DegenerateLabels);
    }
    Ok(sum)
}

/// Weighted cross-entropy loss and its gradient for the logistic learner.
/// `theta` excludes the intercept `b`. Exposed so the analytic gradient can
/// be checked against finite differences.
pub fn logistic_loss_grad(
    rows: &[&[f64]],
    labels: &[u8],
    weights: &[f64],
    l2: f64,
    theta: &[f64],
    b: f64,
) -> (f64, Vec<f64>, f64) {
    let p_dim = theta.len();
    let w_sum: f64 = weights.iter().sum();
    let mut loss = 0.0;
    let mut grad = vec![0.0f64; p_dim];
    let mut grad_b = 0.0;
    for ((row, &y), &w) in rows.iter().zip(labels).zip(weights) {
        if w == 0.0 {
            continue;
        }
        let z: f64 = theta.iter().zip(*row).map(|(t, x)| t * x).sum::<f64>() + b;
        // log(1 + e^-z) computed stably on both tails
        let (log1p_ez, p) = if z >= 0.0 {
            ((-z).exp().ln_1p(), 1.0 / (1.0 + (-z).exp()))
        } else {
            (z.exp().ln_1p() - z, z.exp() / (1.0 + z.exp()))
        };
        let yf = f64::from(y);
        loss += w * (log1p_ez + (1.0 - yf) * z);
        let r = w * (p - yf);
        for (gj, xj) in grad.iter_mut().zip(*row) {
            *gj += r * xj;
        }
        grad_b += r;
    }
    loss /= w_sum;
    let mut reg = 0.0;
    for (gj, tj) in grad.iter_mut().zip(theta) {
        *gj = *gj / w_sum + 2.0 * l2 * tj;
        reg += tj * tj;
    }
    (loss + l2 * reg, grad, grad_b / w_sum)
}

fn train_logistic(
    rows: &[&[f64]],
    labels: &[u8],
    weights: &[f64],
    cfg: &LearnerConfig,
) -> TrainedModel {
    let p = rows[0].len();
    let mut theta = vec![0.0f64; p];
    let mut b = 0.0f64;
    for _ in 0..cfg.max_iters {
        let (_, grad, grad_b) = logistic_loss_grad(rows, labels, weights, cfg.l2, &theta, b);
        let norm = (grad.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
        if norm < cfg.tol {
            break;
        }
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= cfg.step * g;
        }
        b -= cfg.step * grad_b;
    }
    TrainedModel::Logistic {
        weights: theta,
        intercept: b,
    }
}

/// Find the stump minimizing the weighted error under distribution `dist`.
/// Ties break toward the lowest feature, lowest threshold, positive polarity.
/// Zero-weight tuples neither count toward errors nor define thresholds, so
/// they behave exactly as if deleted.
fn best_stump(rows: &[&[f64]], labels_pm: &[f64], dist: &[f64], p: usize) -> (Stump, f64) {
    let active: Vec<usize> = (0..rows.len()).filter(|&i| dist[i] > 0.0).collect();
    let n = active.len();
    let total_pos: f64 = active
        .iter()
        .filter(|&&i| labels_pm[i] > 0.0)
        .map(|&i| dist[i])
        .sum();
    let mut best = (
        Stump {
            feature: 0,
            threshold: f64::NEG_INFINITY,
            polarity: 1,
            vote: 0.0,
        },
        f64::INFINITY,
    );
    let mut order = active;
    for f in 0..p {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
        // error of "predict +1 iff x >= t" starts (t = -inf) at the weight of negatives
        let mut err_plus = 1.0 - total_pos;
        let mut consider = |err_plus: f64, threshold: f64, best: &mut (Stump, f64)| {
            for (polarity, err) in [(1i8, err_plus), (-1, 1.0 - err_plus)] {
                if err < best.1 - 1e-15 {
                    *best = (
                        Stump {
                            feature: f,
                            threshold,
                            polarity,
                            vote: 0.0,
                        },
                        err,
                    );
                }
            }
        };
        consider(err_plus, f64::NEG_INFINITY, &mut best);
        let mut k = 0;
        while k < n {
            let v = rows[order[k]][f];
            // move every tuple with value v to the "below threshold" side
            while k < n && rows[order[k]][f] == v {
                let i = order[k];
                err_plus += dist[i] * labels_pm[i]; // +w if positive now misses, -w if negative now correct
                k += 1;
            }
            let threshold = if k < n {
                (v + rows[order[k]][f]) / 2.0
            } else {
                f64::INFINITY
            };
            consider(err_plus, threshold, &mut best);
        }
    }
    best
}

fn train_stumps(
    rows: &[&[f64]],
    labels: &[u8],
    weights: &[f64],
    cfg: &LearnerConfig,
) -> TrainedModel {
    let n = rows.len();
    let p = rows[0].len();
    let labels_pm: Vec<f64> = labels.iter().map(|&y| if y == 1 { 1.0 } else { -1.0 }).collect();
    let w_sum: f64 = weights.iter().sum();
    let mut dist: Vec<f64> = weights.iter().map(|w| w / w_sum).collect();
    let mut stumps = Vec::with_capacity(cfg.rounds);
    for _ in 0..cfg.rounds {
        let (mut stump, err) = best_stump(rows, &labels_pm, &dist, p);
        if err >= 0.5 {
            break; // no stump beats chance under the current distribution
        }
        let bounded = err.clamp(1e-12, 1.0 - 1e-12);
        let vote = 0.5 * ((1.0 - bounded) / bounded).ln();
        stump.vote = vote;
        let mut z = 0.0;
        for i in 0..n {
            dist[i] *= (-vote * labels_pm[i] * stump.signed(rows[i])).exp();
            z += dist[i];
        }
        for w in &mut dist {
            *w /= z;
        }
        stumps.push(stump);
        if err <= 1e-12 {
            break; // perfect stump; further rounds cannot change the vote
        }
    }
    TrainedModel::StumpEnsemble {
        feature_count: p,
        stumps,
    }
}

/// Train on the rows selected by `idx`, weighted by `weights` (aligned with
/// `idx`). Deterministic: identical inputs give identical parameters.
pub fn train(
    d: &Dataset,
    idx: &[usize],
    weights: &[f64],
    cfg: &LearnerConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    validate_training_inputs(d, idx, weights)?;
    let rows: Vec<&[f64]> = idx.iter().map(|&i| d.encoded_row(i)).collect();
    let labels: Vec<u8> = idx.iter().map(|&i| d.label(i)).collect();
    Ok(match cfg.kind {
        LearnerKind::Logistic => train_logistic(&rows, &labels, weights, cfg),
        LearnerKind::StumpEnsemble => train_stumps(&rows, &labels, weights, cfg),
    })
}
