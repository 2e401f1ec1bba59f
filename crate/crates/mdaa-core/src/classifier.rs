//! Analytic classifiers.
//!
//! A classifier is a linear head whose weights are the closed-form solution
//! of a class-weighted ridge regression. All accumulated knowledge lives in
//! the memory bank `{P, Q}`: `P` is the ridge-regularized Gram matrix of
//! every expanded feature seen (source samples weighted per class, target
//! samples at weight 1) and `Q` the matching feature-label cross-correlation.
//! Weights are `W = P⁻¹Q`, realized as a Cholesky solve, never an explicit
//! inverse. Because `P` and `Q` are plain sums, streaming updates commute
//! and the recursive weights match the one-shot solve over everything seen,
//! independent of batching and order.

use crate::error::{Error, Result};
use crate::linalg::{
    self, spd_factorize, spd_solve, weighted_cross_update, weighted_rank_k_update, Matrix,
    SpdFactor,
};
use crate::wire;
use crate::Branch;

const BANK_MAGIC: &[u8; 4] = b"MDAB";
const BANK_VERSION: u16 = 1;

/// Per-class source weights correcting class imbalance: each class
/// contributes the same total mass, and the per-sample weights average to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    per_class: Vec<f64>,
    counts: Vec<usize>,
    total_samples: usize,
}

impl ClassWeights {
    pub fn per_class(&self) -> &[f64] {
        &self.per_class
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.per_class.len()
    }

    pub fn total_samples(&self) -> usize {
        self.total_samples
    }

    pub fn weight_for(&self, class: usize) -> f64 {
        self.per_class[class]
    }
}

/// Weight each class by `N / (C · N_c)`. Errors if any class in
/// `[0, num_classes)` has no samples; the weight would divide by zero.
pub fn compute_class_weights(labels: &[usize], num_classes: usize) -> Result<ClassWeights> {
    let mut counts = vec![0usize; num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::LengthMismatch {
                context: "label out of class range",
                expected: num_classes,
                found: i,
            });
        }
        counts[l] += 1;
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    let n = labels.len() as f64;
    let c = num_classes as f64;
    let per_class = counts.iter().map(|&nc| n / (c * nc as f64)).collect();
    Ok(ClassWeights {
        per_class,
        counts,
        total_samples: labels.len(),
    })
}

/// Densify class indices into one-hot rows.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        m[(i, l)] = 1.0;
    }
    m
}

/// The pair `{P, Q}` plus the ridge strength that seeded `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    p: Matrix,
    q: Matrix,
    gamma: f64,
}

impl MemoryBank {
    /// Assemble a bank from explicit matrices. `p` must be square with one
    /// row per feature dimension; `q` pairs it with one column per class.
    pub fn new(p: Matrix, q: Matrix, gamma: f64) -> Result<MemoryBank> {
        if p.rows() != p.cols() || q.rows() != p.rows() {
            return Err(Error::dim("memory bank", (p.rows(), p.rows()), q.shape()));
        }
        Ok(MemoryBank { p, q, gamma })
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn feature_dim(&self) -> usize {
        self.p.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.q.cols()
    }

    /// Serialize to the `MDAB` blob (little-endian, bit-exact round trip).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = wire::Writer::new();
        w.magic(BANK_MAGIC);
        w.u16(BANK_VERSION);
        w.u32(self.feature_dim() as u32);
        w.u32(self.num_classes() as u32);
        w.f64(self.gamma);
        w.f64_slice(self.p.as_slice());
        w.f64_slice(self.q.as_slice());
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<MemoryBank> {
        let mut r = wire::Reader::new(bytes, "memory bank");
        let bank = Self::read(&mut r)?;
        r.finish()?;
        Ok(bank)
    }

    pub(crate) fn write(&self, w: &mut wire::Writer) {
        w.magic(BANK_MAGIC);
        w.u16(BANK_VERSION);
        w.u32(self.feature_dim() as u32);
        w.u32(self.num_classes() as u32);
        w.f64(self.gamma);
        w.f64_slice(self.p.as_slice());
        w.f64_slice(self.q.as_slice());
    }

    pub(crate) fn read(r: &mut wire::Reader) -> Result<MemoryBank> {
        r.magic(BANK_MAGIC)?;
        r.expect_version(BANK_VERSION)?;
        let phi = r.u32()? as usize;
        let c = r.u32()? as usize;
        let gamma = r.f64()?;
        let p = Matrix::from_vec(phi, phi, r.f64_vec(phi * phi)?);
        let q = Matrix::from_vec(phi, c, r.f64_vec(phi * c)?);
        Ok(MemoryBank { p, q, gamma })
    }
}

/// How the classifier realizes `P⁻¹Q` after bank updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateStrategy {
    /// Reference behavior: drop the factor on update, refactorize `P` from
    /// scratch when weights are next needed. Weights are a pure function of
    /// the bank bits, so identical banks always yield identical weights.
    Refactor,
    /// Maintain the Cholesky factor with O(φ²) rank-one sweeps per accepted
    /// sample and refresh it periodically. Much faster for tiny batches;
    /// weights may differ from the reference at the last-ulp level.
    IncrementalFactor,
}

impl Default for UpdateStrategy {
    fn default() -> Self {
        UpdateStrategy::Refactor
    }
}

/// Rank-one updates between full refactorizations under
/// [`UpdateStrategy::IncrementalFactor`]; bounds factor drift.
const FACTOR_REFRESH_INTERVAL: usize = 4096;

#[derive(Debug, Clone)]
pub struct AnalyticClassifier {
    bank: MemoryBank,
    id: Branch,
    weights: Option<Matrix>,
    factor: Option<SpdFactor>,
    strategy: UpdateStrategy,
    updates_since_factor: usize,
}

/// Build a classifier from a weighted source batch: `P = Σ ω·xᵀx + γI`,
/// `Q = Σ ω·xᵀy`, `W = P⁻¹Q`. Per-sample weights come from each one-hot
/// row's class. The source data itself is not retained.
pub fn init_source(
    id: Branch,
    features: &Matrix,
    labels_one_hot: &Matrix,
    weights: &ClassWeights,
    gamma: f64,
) -> Result<AnalyticClassifier> {
    // Negative ridge is rejected outright; zero is allowed to flow through so
    // the resulting singular system surfaces as NotPositiveDefinite.
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "gamma must be non-negative and finite, got {gamma}"
        )));
    }
    if features.rows() != labels_one_hot.rows() {
        return Err(Error::dim(
            "init_source",
            (features.rows(), labels_one_hot.cols()),
            labels_one_hot.shape(),
        ));
    }
    if labels_one_hot.cols() != weights.num_classes() {
        return Err(Error::LengthMismatch {
            context: "class weights vs label columns",
            expected: labels_one_hot.cols(),
            found: weights.num_classes(),
        });
    }
    let phi = features.cols();
    let sample_weights: Vec<f64> = (0..features.rows())
        .map(|k| {
            labels_one_hot
                .row(k)
                .iter()
                .zip(weights.per_class())
                .map(|(y, w)| y * w)
                .sum()
        })
        .collect();

    let p = weighted_rank_k_update(&Matrix::scaled_identity(phi, gamma), features, &sample_weights)?;
    let q = weighted_cross_update(
        &Matrix::zeros(phi, labels_one_hot.cols()),
        features,
        labels_one_hot,
        &sample_weights,
    )?;
    let mut ac = AnalyticClassifier {
        bank: MemoryBank { p, q, gamma },
        id,
        weights: None,
        factor: None,
        strategy: UpdateStrategy::Refactor,
        updates_since_factor: 0,
    };
    // Surface a bad gamma immediately rather than at first prediction.
    ac.resolve_weights()?;
    Ok(ac)
}

impl AnalyticClassifier {
    /// Rebuild a classifier around a restored bank. Weights are recomputed
    /// from `{P, Q}` on first use.
    pub fn from_bank(id: Branch, bank: MemoryBank) -> AnalyticClassifier {
        AnalyticClassifier {
            bank,
            id,
            weights: None,
            factor: None,
            strategy: UpdateStrategy::Refactor,
            updates_since_factor: 0,
        }
    }

    pub fn id(&self) -> Branch {
        self.id
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn strategy(&self) -> UpdateStrategy {
        self.strategy
    }

    pub fn set_strategy(&mut self, strategy: UpdateStrategy) {
        self.strategy = strategy;
    }

    pub fn is_dirty(&self) -> bool {
        self.weights.is_none()
    }

    /// Fold a target batch into the bank: `P += XᵀX`, `Q += XᵀȲ`. Target
    /// samples carry weight 1; the gate upstream stands in for class
    /// balancing. Weights go stale until next read. Empty batches are
    /// no-ops.
    pub fn adapt(&mut self, features: &Matrix, pseudo_labels: &Matrix) -> Result<()> {
        if features.rows() != pseudo_labels.rows()
            || pseudo_labels.cols() != self.bank.num_classes()
        {
            return Err(Error::dim(
                "adapt",
                (features.rows(), self.bank.num_classes()),
                pseudo_labels.shape(),
            ));
        }
        if features.cols() != self.bank.feature_dim() {
            return Err(Error::dim(
                "adapt",
                (features.rows(), self.bank.feature_dim()),
                features.shape(),
            ));
        }
        if features.rows() == 0 {
            return Ok(());
        }
        self.bank.p = linalg::rank_k_update(&self.bank.p, features)?;
        self.bank.q = linalg::cross_update(&self.bank.q, features, pseudo_labels)?;
        self.weights = None;
        match self.strategy {
            UpdateStrategy::Refactor => self.factor = None,
            UpdateStrategy::IncrementalFactor => {
                if self.updates_since_factor + features.rows() > FACTOR_REFRESH_INTERVAL {
                    self.factor = None;
                    self.updates_since_factor = 0;
                } else if let Some(factor) = self.factor.as_mut() {
                    for i in 0..features.rows() {
                        factor.rank_one_update(features.row(i));
                    }
                    self.updates_since_factor += features.rows();
                }
            }
        }
        Ok(())
    }

    fn resolve_weights(&mut self) -> Result<()> {
        if self.weights.is_some() {
            return Ok(());
        }
        if self.factor.is_none() {
            self.factor = Some(spd_factorize(&self.bank.p)?);
            self.updates_since_factor = 0;
        }
        let factor = self.factor.as_ref().unwrap();
        self.weights = Some(spd_solve(factor, &self.bank.q)?);
        Ok(())
    }

    /// The current closed-form weights, recomputing them if stale.
    pub fn weights(&mut self) -> Result<&Matrix> {
        self.resolve_weights()?;
        Ok(self.weights.as_ref().unwrap())
    }

    /// `X·W` for a batch of expanded rows.
    pub fn predict_logits(&mut self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.bank.feature_dim() {
            return Err(Error::dim(
                "predict_logits",
                (features.rows(), self.bank.feature_dim()),
                features.shape(),
            ));
        }
        self.resolve_weights()?;
        features.matmul(self.weights.as_ref().unwrap())
    }

    /// Row-wise softmax of the logits.
    pub fn predict_probs(&mut self, features: &Matrix) -> Result<Matrix> {
        let mut logits = self.predict_logits(features)?;
        for i in 0..logits.rows() {
            softmax_row(logits.row_mut(i));
        }
        Ok(logits)
    }
}

/// In-place numerically shifted softmax.
pub fn softmax_row(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}
