//! Neighbor-derived label distributions and interpolation with the base model.

use serde::{Deserialize, Serialize};

use crate::corpus_io::SentenceRecord;
use crate::datastore::{knn_search, Datastore, Neighbor};
use crate::error::{Error, Result};
use crate::tagset::{MainLabelIndex, SubLabelIndex, Tagset};

/// Sigmoid outputs strictly above this value switch a subtype tag on.
pub const SUB_THRESHOLD: f64 = 0.5;

/// Probability vector over the main BIO label space.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidConfig("empty label distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidConfig(
                "label distribution has a negative or non-finite entry".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!(
                "label distribution sums to {sum}"
            )));
        }
        Ok(LabelDistribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, label: MainLabelIndex) -> f64 {
        self.probs[label.index()]
    }

    /// Highest-probability label; exact ties go to the lower index.
    pub fn argmax(&self) -> MainLabelIndex {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        MainLabelIndex(best as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub lambda: f64,
    pub tau: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 512,
            lambda: 0.5,
            tau: 1.0,
        }
    }
}

impl KnnConfig {
    pub fn new(k: usize, lambda: f64, tau: f64) -> Result<Self> {
        let cfg = KnnConfig { k, lambda, tau };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be a positive integer".into()));
        }
        check_lambda(self.lambda)?;
        check_tau(self.tau)
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    Ok(())
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "tau must be a positive finite number, got {tau}"
        )));
    }
    Ok(())
}

/// `P(v) ∝ Σ_{n: label(n)=v} exp(sim(n)/τ)` over the full label space.
///
/// Labels that no neighbor carries keep probability exactly 0.
pub fn knn_distribution(
    nbrs: &[Neighbor],
    tau: f64,
    label_space: usize,
) -> Result<LabelDistribution> {
    if nbrs.is_empty() {
        return Err(Error::EmptyNeighbors);
    }
    check_tau(tau)?;
    let shift = nbrs
        .iter()
        .map(|n| n.sim / tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs = vec![0.0; label_space];
    let mut total = 0.0;
    for n in nbrs {
        let slot = probs
            .get_mut(n.label.index())
            .ok_or(Error::LabelOutOfRange {
                space: "main",
                index: n.label.index(),
                size: label_space,
            })?;
        let w = (n.sim / tau - shift).exp();
        *slot += w;
        total += w;
    }
    for p in &mut probs {
        *p /= total;
    }
    Ok(LabelDistribution { probs })
}

/// `λ·p_main + (1−λ)·p_knn`, elementwise.
pub fn interpolate(
    p_main: &LabelDistribution,
    p_knn: &LabelDistribution,
    lambda: f64,
) -> Result<LabelDistribution> {
    if p_main.len() != p_knn.len() {
        return Err(Error::DimensionMismatch {
            expected: p_main.len(),
            found: p_knn.len(),
            context: "interpolated distributions".into(),
        });
    }
    check_lambda(lambda)?;
    let probs = p_main
        .probs
        .iter()
        .zip(&p_knn.probs)
        .map(|(&m, &k)| lambda * m + (1.0 - lambda) * k)
        .collect();
    Ok(LabelDistribution { probs })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenPrediction {
    pub main: MainLabelIndex,
    pub subs: Vec<SubLabelIndex>,
}

/// Subtype tags whose sigmoid output exceeds [`SUB_THRESHOLD`].
pub fn threshold_subs(row: &[f64]) -> Vec<SubLabelIndex> {
    row.iter()
        .enumerate()
        .filter(|(_, &p)| p > SUB_THRESHOLD)
        .map(|(i, _)| SubLabelIndex(i as u32))
        .collect()
}

pub(crate) fn record_subs(rec: &SentenceRecord, ts: &Tagset) -> Result<Vec<Vec<SubLabelIndex>>> {
    match &rec.p_sub {
        None => Ok(vec![Vec::new(); rec.len()]),
        Some(rows) => rows
            .iter()
            .enumerate()
            .map(|(t, row)| {
                if row.len() != ts.sub_label_count() {
                    return Err(Error::DimensionMismatch {
                        expected: ts.sub_label_count(),
                        found: row.len(),
                        context: format!("record `{}` `p_sub` token {t}", rec.id),
                    });
                }
                Ok(threshold_subs(row))
            })
            .collect(),
    }
}

pub(crate) fn main_rows(rec: &SentenceRecord, ts: &Tagset) -> Result<Vec<LabelDistribution>> {
    rec.require_p_main()?
        .iter()
        .enumerate()
        .map(|(t, row)| {
            if row.len() != ts.main_label_count() {
                return Err(Error::DimensionMismatch {
                    expected: ts.main_label_count(),
                    found: row.len(),
                    context: format!("record `{}` `p_main` token {t}", rec.id),
                });
            }
            LabelDistribution::new(row.clone())
        })
        .collect()
}

/// Decision for one token given its base row and retrieved neighbors.
pub fn decide(
    p_main: &LabelDistribution,
    nbrs: &[Neighbor],
    lambda: f64,
    tau: f64,
) -> Result<MainLabelIndex> {
    let p_knn = knn_distribution(nbrs, tau, p_main.len())?;
    Ok(interpolate(p_main, &p_knn, lambda)?.argmax())
}

/// Retrieval-augmented per-token decisions for one sentence.
///
/// The main label is the argmax of the interpolated distribution; subtype
/// rows pass through the sigmoid threshold untouched.
pub fn predict_tokens(
    rec: &SentenceRecord,
    ds: &Datastore,
    cfg: &KnnConfig,
    ts: &Tagset,
) -> Result<Vec<TokenPrediction>> {
    cfg.validate()?;
    ds.check_tagset(ts)?;
    let emb = rec.require_emb()?;
    let rows = main_rows(rec, ts)?;
    let subs = record_subs(rec, ts)?;
    emb.iter()
        .zip(&rows)
        .zip(subs)
        .map(|((e, p_main), subs)| {
            let nbrs = knn_search(ds, e, cfg.k)?;
            Ok(TokenPrediction {
                main: decide(p_main, nbrs.items(), cfg.lambda, cfg.tau)?,
                subs,
            })
        })
        .collect()
}

/// Base-model-only decisions: argmax of each `p_main` row.
pub fn predict_baseline(rec: &SentenceRecord, ts: &Tagset) -> Result<Vec<TokenPrediction>> {
    let rows = main_rows(rec, ts)?;
    let subs = record_subs(rec, ts)?;
    Ok(rows
        .iter()
        .zip(subs)
        .map(|(p, subs)| TokenPrediction {
            main: p.argmax(),
            subs,
        })
        .collect())
}
