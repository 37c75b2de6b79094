//! Token-level `(unit vector, main label)` store with exact top-k cosine search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::corpus_io::Corpus;
use crate::error::{Error, Result};
use crate::tagset::{MainLabelIndex, Tagset};

/// Where a datastore entry came from. Not persisted in the binary format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSource {
    pub record_id: String,
    pub position: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BuildOptions {
    /// Skip tokens whose gold label is `O`.
    pub exclude_outside: bool,
}

#[derive(Debug, Clone)]
pub struct Datastore {
    dim: usize,
    label_count: usize,
    tagset_hash: [u8; 32],
    /// Row-major `len × dim`, each row unit-norm.
    vectors: Vec<f32>,
    labels: Vec<MainLabelIndex>,
    sources: Option<Vec<TokenSource>>,
}

/// Normalizes in f64 and rounds once to f32.
fn normalize(v: &[f32]) -> Option<Vec<f32>> {
    let norm = l2_norm(v);
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| (x as f64 / norm) as f32).collect())
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

impl Datastore {
    pub(crate) fn from_parts(
        dim: usize,
        label_count: usize,
        tagset_hash: [u8; 32],
        vectors: Vec<f32>,
        labels: Vec<MainLabelIndex>,
        sources: Option<Vec<TokenSource>>,
    ) -> Result<Self> {
        debug_assert_eq!(vectors.len(), dim * labels.len());
        Ok(Datastore {
            dim,
            label_count,
            tagset_hash,
            vectors,
            labels,
            sources,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Size of the main label space the store was built against.
    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn tagset_hash(&self) -> &[u8; 32] {
        &self.tagset_hash
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> MainLabelIndex {
        self.labels[i]
    }

    pub fn labels(&self) -> &[MainLabelIndex] {
        &self.labels
    }

    pub fn source(&self, i: usize) -> Option<&TokenSource> {
        self.sources.as_ref().map(|s| &s[i])
    }

    /// Entry count per main label index.
    pub fn label_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_count];
        for l in &self.labels {
            counts[l.index()] += 1;
        }
        counts
    }

    pub fn check_tagset(&self, ts: &Tagset) -> Result<()> {
        if &self.tagset_hash != ts.hash() {
            return Err(Error::TagsetHashMismatch {
                expected: ts.hash_hex(),
                found: hex::encode(self.tagset_hash),
            });
        }
        Ok(())
    }
}

/// Builds the store from every token of a training corpus, in corpus order.
pub fn build_datastore(train: &Corpus, ts: &Tagset) -> Result<Datastore> {
    build_datastore_with(train, ts, &BuildOptions::default())
}

pub fn build_datastore_with(train: &Corpus, ts: &Tagset, opts: &BuildOptions) -> Result<Datastore> {
    if train.tagset_hash != ts.hash_hex() {
        return Err(Error::TagsetHashMismatch {
            expected: ts.hash_hex(),
            found: train.tagset_hash.clone(),
        });
    }
    let dim = train.dim;
    let mut vectors = Vec::with_capacity(train.token_count() * dim);
    let mut labels = Vec::with_capacity(train.token_count());
    let mut sources = Vec::with_capacity(train.token_count());
    for rec in &train.records {
        let emb = rec.require_emb()?;
        let gold = rec.gold_main_indices(ts)?;
        for (pos, (row, label)) in emb.iter().zip(gold).enumerate() {
            if opts.exclude_outside && label.is_outside() {
                continue;
            }
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                    context: format!("record `{}` token {pos}", rec.id),
                });
            }
            let unit = normalize(row)
                .ok_or_else(|| Error::ZeroVector(format!("record `{}` token {pos}", rec.id)))?;
            vectors.extend_from_slice(&unit);
            labels.push(label);
            sources.push(TokenSource {
                record_id: rec.id.clone(),
                position: pos,
            });
        }
    }
    Datastore::from_parts(
        dim,
        ts.main_label_count(),
        *ts.hash(),
        vectors,
        labels,
        Some(sources),
    )
}

/// Cosine similarity, accumulated in f64.
pub fn cosine_sim(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
            context: "cosine similarity operands".into(),
        });
    }
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("cosine similarity operand".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    Ok(dot / (na * nb))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub sim: f64,
    pub label: MainLabelIndex,
}

impl Neighbor {
    /// Total order: higher similarity first, then lower entry index.
    pub fn rank_cmp(&self, other: &Self) -> Ordering {
        other
            .sim
            .total_cmp(&self.sim)
            .then(self.index.cmp(&other.index))
    }
}

/// Heap adapter: the worst-ranked candidate compares greatest.
struct Candidate(Neighbor);

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.rank_cmp(&other.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    items: Vec<Neighbor>,
}

impl NeighborList {
    pub fn items(&self) -> &[Neighbor] {
        &self.items
    }

    pub fn effective_k(&self) -> usize {
        self.items.len()
    }

    /// The best `j` neighbors; equal to a fresh search with `k = j`.
    pub fn prefix(&self, j: usize) -> &[Neighbor] {
        &self.items[..j.min(self.items.len())]
    }

    pub fn into_items(self) -> Vec<Neighbor> {
        self.items
    }
}

/// Normalizes a query vector into f64, rejecting zero vectors.
pub fn unit_query(ds: &Datastore, query: &[f32]) -> Result<Vec<f64>> {
    if query.len() != ds.dim {
        return Err(Error::DimensionMismatch {
            expected: ds.dim,
            found: query.len(),
            context: "query vector".into(),
        });
    }
    let norm = l2_norm(query);
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector("query".into()));
    }
    Ok(query.iter().map(|&x| x as f64 / norm).collect())
}

/// Similarity of a stored entry to an already normalized query.
#[inline]
pub fn entry_score(ds: &Datastore, i: usize, unit_query: &[f64]) -> f64 {
    ds.vector(i)
        .iter()
        .zip(unit_query)
        .map(|(&x, &q)| x as f64 * q)
        .sum()
}

/// Exact top-`min(k, len)` neighbors by brute-force scan with a bounded heap.
pub fn knn_search(ds: &Datastore, query: &[f32], k: usize) -> Result<NeighborList> {
    if ds.is_empty() {
        return Err(Error::EmptyDatastore);
    }
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let q = unit_query(ds, query)?;
    let k = k.min(ds.len());

    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
    for i in 0..ds.len() {
        let cand = Neighbor {
            index: i,
            sim: entry_score(ds, i, &q),
            label: ds.labels[i],
        };
        if heap.len() < k {
            heap.push(Candidate(cand));
        } else if let Some(worst) = heap.peek() {
            if cand.rank_cmp(&worst.0) == Ordering::Less {
                heap.pop();
                heap.push(Candidate(cand));
            }
        }
    }
    let items = heap.into_sorted_vec().into_iter().map(|c| c.0).collect();
    Ok(NeighborList { items })
}
