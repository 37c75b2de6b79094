//! Grid search over neighbor count and interpolation factor.
//!
//! Neighbors are retrieved once per token at the largest `k` of the grid;
//! smaller `k` reuse the ranked prefix, which is exactly what an independent
//! search at that `k` returns.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::corpus_io::{Corpus, SentenceRecord};
use crate::datastore::{knn_search, Datastore};
use crate::decode::{decode_entities, decode_predictions, gold_entities, SentenceEntities};
use crate::error::{Error, Result};
use crate::eval::{micro_prf, EvalReport};
use crate::knn_inference::{
    check_lambda, check_tau, interpolate, knn_distribution, main_rows, predict_baseline,
    predict_tokens, record_subs, KnnConfig, LabelDistribution,
};
use crate::tagset::{MainLabelIndex, SubLabelIndex, Tagset};

pub const CSV_HEADER: &str = "k,lambda,precision,recall,f1";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub ks: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub tau: f64,
}

impl Default for SweepGrid {
    /// `k ∈ {2^3, …, 2^9}`, `λ ∈ {0.0, 0.1, …, 1.0}`, `τ = 1`.
    fn default() -> Self {
        SweepGrid {
            ks: (3..=9).map(|p| 1usize << p).collect(),
            lambdas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            tau: 1.0,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.lambdas.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep grid lists must be nonempty".into(),
            ));
        }
        if self.ks.contains(&0) {
            return Err(Error::InvalidConfig("k values must be positive".into()));
        }
        for &l in &self.lambdas {
            check_lambda(l)?;
        }
        check_tau(self.tau)?;
        let mut ks = self.ks.clone();
        ks.sort_unstable();
        ks.dedup();
        let mut ls = self.lambdas.clone();
        ls.sort_by(f64::total_cmp);
        ls.dedup();
        if ks.len() != self.ks.len() || ls.len() != self.lambdas.len() {
            return Err(Error::InvalidConfig(
                "sweep grid values must be distinct".into(),
            ));
        }
        Ok(())
    }

    pub fn k_max(&self) -> usize {
        self.ks.iter().copied().max().unwrap_or(0)
    }
}

/// Parses a comma-separated list such as `8,16,32`.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse()
                .map_err(|_| Error::InvalidConfig(format!("cannot parse `{x}` in list `{s}`")))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub lambda: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SweepRow {
    fn from_report(k: usize, lambda: f64, r: &EvalReport) -> Self {
        SweepRow {
            k,
            lambda,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
        }
    }

    fn beats(&self, other: &SweepRow) -> bool {
        self.f1 > other.f1
            || (self.f1 == other.f1
                && (self.k < other.k || (self.k == other.k && self.lambda > other.lambda)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Sorted by `(k, λ)`.
    pub rows: Vec<SweepRow>,
    pub best: SweepRow,
}

impl SweepResult {
    fn from_rows(mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|a, b| a.k.cmp(&b.k).then(a.lambda.total_cmp(&b.lambda)));
        let mut best = rows[0];
        for r in &rows[1..] {
            if r.beats(&best) {
                best = *r;
            }
        }
        SweepResult { rows, best }
    }

    pub fn row(&self, k: usize, lambda: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.k == k && r.lambda == lambda)
    }

    /// Sensitivity table with the best row on a trailing comment line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6}",
                r.k, r.lambda, r.precision, r.recall, r.f1
            )
            .unwrap();
        }
        let b = &self.best;
        writeln!(
            out,
            "# best: k={},lambda={},precision={:.6},recall={:.6},f1={:.6}",
            b.k, b.lambda, b.precision, b.recall, b.f1
        )
        .unwrap();
        out
    }
}

/// Per-sentence inputs shared by every grid cell.
struct Prepared {
    id: String,
    base: Vec<LabelDistribution>,
    subs: Vec<Vec<SubLabelIndex>>,
    /// `knn[i][t]`: neighbor distribution at `ks[i]` for token `t`.
    knn: Vec<Vec<LabelDistribution>>,
}

fn prepare(
    rec: &SentenceRecord,
    ds: &Datastore,
    ks: &[usize],
    tau: f64,
    ts: &Tagset,
) -> Result<Prepared> {
    let emb = rec.require_emb()?;
    let base = main_rows(rec, ts)?;
    let subs = record_subs(rec, ts)?;
    let k_max = ks.iter().copied().max().unwrap_or(1);
    let mut knn = vec![Vec::with_capacity(rec.len()); ks.len()];
    for e in emb {
        let nbrs = knn_search(ds, e, k_max)?;
        for (slot, &k) in knn.iter_mut().zip(ks) {
            slot.push(knn_distribution(
                nbrs.prefix(k),
                tau,
                ts.main_label_count(),
            )?);
        }
    }
    Ok(Prepared {
        id: rec.id.clone(),
        base,
        subs,
        knn,
    })
}

fn decode_cell(p: &Prepared, ki: usize, lambda: f64, ts: &Tagset) -> Result<SentenceEntities> {
    let main: Vec<MainLabelIndex> = p
        .base
        .iter()
        .zip(&p.knn[ki])
        .map(|(b, k)| interpolate(b, k, lambda).map(|d| d.argmax()))
        .collect::<Result<_>>()?;
    Ok(SentenceEntities {
        id: p.id.clone(),
        entities: decode_entities(&main, &p.subs, ts)?,
    })
}

pub fn corpus_gold(dev: &Corpus, ts: &Tagset) -> Result<Vec<SentenceEntities>> {
    dev.records.iter().map(|r| gold_entities(r, ts)).collect()
}

/// Evaluates every `(k, λ)` cell of the grid on a labeled dev corpus.
pub fn run_sweep(
    dev: &Corpus,
    ds: &Datastore,
    grid: &SweepGrid,
    ts: &Tagset,
) -> Result<SweepResult> {
    grid.validate()?;
    ds.check_tagset(ts)?;
    if ds.is_empty() {
        return Err(Error::EmptyDatastore);
    }
    let gold = corpus_gold(dev, ts)?;
    let prepared: Vec<Prepared> = dev
        .records
        .par_iter()
        .map(|r| prepare(r, ds, &grid.ks, grid.tau, ts))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, f64)> = (0..grid.ks.len())
        .flat_map(|ki| grid.lambdas.iter().map(move |&l| (ki, l)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(ki, lambda)| {
            let pred: Vec<SentenceEntities> = prepared
                .iter()
                .map(|p| decode_cell(p, ki, lambda, ts))
                .collect::<Result<_>>()?;
            let report = micro_prf(&gold, &pred, ts)?;
            Ok(SweepRow::from_report(grid.ks[ki], lambda, &report))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::from_rows(rows))
}

/// Predicted entities for every record under one configuration.
pub fn predict_corpus(
    corpus: &Corpus,
    ds: &Datastore,
    cfg: &KnnConfig,
    ts: &Tagset,
) -> Result<Vec<SentenceEntities>> {
    corpus
        .records
        .par_iter()
        .map(|rec| {
            let preds = predict_tokens(rec, ds, cfg, ts)?;
            Ok(SentenceEntities {
                id: rec.id.clone(),
                entities: decode_predictions(&preds, ts)?,
            })
        })
        .collect()
}

pub fn predict_corpus_baseline(corpus: &Corpus, ts: &Tagset) -> Result<Vec<SentenceEntities>> {
    corpus
        .records
        .iter()
        .map(|rec| {
            Ok(SentenceEntities {
                id: rec.id.clone(),
                entities: decode_predictions(&predict_baseline(rec, ts)?, ts)?,
            })
        })
        .collect()
}

/// One grid cell evaluated with its own retrieval at exactly `cfg.k`.
pub fn evaluate_config(
    dev: &Corpus,
    ds: &Datastore,
    cfg: &KnnConfig,
    ts: &Tagset,
) -> Result<EvalReport> {
    let gold = corpus_gold(dev, ts)?;
    micro_prf(&gold, &predict_corpus(dev, ds, cfg, ts)?, ts)
}

pub fn evaluate_baseline(dev: &Corpus, ts: &Tagset) -> Result<EvalReport> {
    let gold = corpus_gold(dev, ts)?;
    micro_prf(&gold, &predict_corpus_baseline(dev, ts)?, ts)
}
