//! Seeded synthetic corpora for tests, benchmarks and demos.
//!
//! Two generators:
//!
//! * [`clustered_corpus`]: each main label owns a Gaussian cluster in
//!   embedding space and the base-model rows are deliberately noisy, so a
//!   datastore over a sibling corpus can repair base-model mistakes.
//! * [`outside_heavy_corpora`]: a store with a handful of entries per entity
//!   label and hundreds of `O` entries that rank directly behind them, so
//!   growing `k` floods the neighbor list with `O`.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus_io::{Corpus, SentenceRecord};
use crate::error::{Error, Result};
use crate::tagset::{MainLabelIndex, SubLabelIndex, Tagset};

#[derive(Debug, Clone)]
pub struct ClusterSpec {
    pub dim: usize,
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub max_entity_len: usize,
    /// Chance that a position opens an entity.
    pub entity_rate: f64,
    /// Per-coordinate standard deviation around a label center.
    pub sigma: f64,
    /// Mass on the base model's preferred label.
    pub peak: f64,
    /// Fraction of tokens whose preferred label is wrong.
    pub confusion_rate: f64,
    /// Seed for the label centers, shared by train and dev corpora.
    pub center_seed: u64,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            dim: 16,
            sentences: 50,
            min_len: 4,
            max_len: 10,
            max_entity_len: 3,
            entity_rate: 0.3,
            sigma: 0.05,
            peak: 0.55,
            confusion_rate: 0.3,
            center_seed: 0x5eed,
        }
    }
}

fn gaussian(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite standard deviation")
}

fn unit_centers(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = gaussian(1.0);
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| n.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// BIO label sequence with random entity spans.
fn random_labels(ts: &Tagset, spec: &ClusterSpec, rng: &mut ChaCha8Rng) -> Vec<MainLabelIndex> {
    let len = rng.random_range(spec.min_len..=spec.max_len);
    let mut labels = Vec::with_capacity(len);
    while labels.len() < len {
        if rng.random_bool(spec.entity_rate) {
            let ty = rng.random_range(0..ts.main_types().len());
            let span = rng
                .random_range(1..=spec.max_entity_len)
                .min(len - labels.len());
            labels.push(ts.main_begin(ty));
            for _ in 1..span {
                labels.push(ts.main_inside(ty));
            }
        } else {
            labels.push(MainLabelIndex::OUTSIDE);
        }
    }
    labels
}

fn peaked_row(label_count: usize, peak_at: usize, peak: f64) -> Vec<f64> {
    let rest = (1.0 - peak) / (label_count - 1) as f64;
    (0..label_count)
        .map(|i| if i == peak_at { peak } else { rest })
        .collect()
}

/// Label-clustered corpus with noisy base-model rows.
///
/// Every token's `p_main` row puts `spec.peak` on one label and spreads the
/// rest uniformly. For a `spec.confusion_rate` fraction of tokens the peak
/// sits on a wrong label. Entities carry one random subtype half the time,
/// mirrored in `p_sub` at 0.9 against a 0.05 background.
pub fn clustered_corpus(ts: &Tagset, spec: &ClusterSpec, seed: u64) -> Result<Corpus> {
    if spec.dim == 0 || spec.min_len == 0 || spec.min_len > spec.max_len || spec.max_entity_len == 0
    {
        return Err(Error::InvalidConfig("degenerate cluster spec".into()));
    }
    let label_count = ts.main_label_count();
    let centers = unit_centers(label_count, spec.dim, spec.center_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = gaussian(spec.sigma);
    let sub_count = ts.sub_types().len();

    let mut records = Vec::with_capacity(spec.sentences);
    for s in 0..spec.sentences {
        let labels = random_labels(ts, spec, &mut rng);
        let mut gold_sub = vec![Vec::new(); labels.len()];
        let mut p_sub = vec![vec![0.05; ts.sub_label_count()]; labels.len()];
        let mut t = 0;
        while t < labels.len() {
            if labels[t].is_outside() {
                t += 1;
                continue;
            }
            let mut end = t + 1;
            while end < labels.len() && !labels[end].is_outside() && !labels[end].is_begin() {
                end += 1;
            }
            if sub_count > 0 && rng.random_bool(0.5) {
                let sub = rng.random_range(0..sub_count);
                for (i, pos) in (t..end).enumerate() {
                    let idx = 2 * sub + usize::from(i > 0);
                    gold_sub[pos].push(ts.sub_tag_of(SubLabelIndex(idx as u32))?);
                    p_sub[pos][idx] = 0.9;
                }
            }
            t = end;
        }

        let mut emb = Vec::with_capacity(labels.len());
        let mut p_main = Vec::with_capacity(labels.len());
        for &label in &labels {
            let c = &centers[label.index()];
            emb.push(
                c.iter()
                    .map(|x| (x + noise.sample(&mut rng)) as f32)
                    .collect(),
            );
            let peak_at = if rng.random_bool(spec.confusion_rate) {
                let others: Vec<usize> = (0..label_count).filter(|&i| i != label.index()).collect();
                *others.choose(&mut rng).unwrap()
            } else {
                label.index()
            };
            p_main.push(peaked_row(label_count, peak_at, spec.peak));
        }

        records.push(SentenceRecord {
            id: format!("s{seed}-{s}"),
            tokens: (0..labels.len()).map(|i| format!("w{i}")).collect(),
            gold_main: Some(
                labels
                    .iter()
                    .map(|&l| ts.main_tag_of(l))
                    .collect::<Result<_>>()?,
            ),
            gold_sub: Some(gold_sub),
            emb: Some(emb),
            p_main: Some(p_main),
            p_sub: Some(p_sub),
        });
    }
    Corpus::from_records(ts, spec.dim, records)
}

#[derive(Debug, Clone)]
pub struct OutsideHeavySpec {
    /// Stored entries per entity label; these occupy the top ranks.
    pub per_label: usize,
    /// Stored `O` entries; these rank directly behind the entity entries.
    pub outside_entries: usize,
    /// Extra dimensions beyond one axis per entity label.
    pub free_dims: usize,
    pub sigma: f64,
    pub dev_sentences: usize,
}

impl Default for OutsideHeavySpec {
    fn default() -> Self {
        OutsideHeavySpec {
            per_label: 6,
            outside_entries: 600,
            free_dims: 12,
            sigma: 0.02,
            dev_sentences: 20,
        }
    }
}

/// Train and dev corpora for the `O`-flooding scenario.
///
/// Entity label `j` owns axis `j`. `O` vectors put weight 1.5 on every entity
/// axis plus unit Gaussian noise in the free dimensions, giving cosine ≈ 0.33
/// to any entity axis, above the ≈ 0 of other-class entries. A dev entity
/// token therefore sees its own class first, then only `O`.
pub fn outside_heavy_corpora(
    ts: &Tagset,
    spec: &OutsideHeavySpec,
    seed: u64,
) -> Result<(Corpus, Corpus)> {
    let axes = ts.main_label_count() - 1;
    let dim = axes + spec.free_dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let small = gaussian(spec.sigma);
    let unit = gaussian(1.0);

    let entity_vec = |label: usize, rng: &mut ChaCha8Rng| -> Vec<f32> {
        (0..dim)
            .map(|d| (f64::from(u8::from(d + 1 == label)) + small.sample(rng)) as f32)
            .collect()
    };
    let outside_vec = |rng: &mut ChaCha8Rng| -> Vec<f32> {
        (0..dim)
            .map(|d| {
                if d < axes {
                    1.5
                } else {
                    unit.sample(rng) as f32
                }
            })
            .collect()
    };

    let mut train = Vec::new();
    for label in 1..=axes {
        let tag = ts.main_tag_of(MainLabelIndex(label as u32))?;
        train.push(SentenceRecord {
            id: format!("ent-{label}"),
            tokens: vec!["w".into(); spec.per_label],
            gold_main: Some(vec![tag; spec.per_label]),
            gold_sub: None,
            emb: Some(
                (0..spec.per_label)
                    .map(|_| entity_vec(label, &mut rng))
                    .collect(),
            ),
            p_main: None,
            p_sub: None,
        });
    }
    let mut remaining = spec.outside_entries;
    let mut chunk = 0;
    while remaining > 0 {
        let n = remaining.min(10);
        train.push(SentenceRecord {
            id: format!("out-{chunk}"),
            tokens: vec!["w".into(); n],
            gold_main: Some(vec!["O".into(); n]),
            gold_sub: None,
            emb: Some((0..n).map(|_| outside_vec(&mut rng)).collect()),
            p_main: None,
            p_sub: None,
        });
        remaining -= n;
        chunk += 1;
    }

    let label_count = ts.main_label_count();
    let mut dev = Vec::new();
    for s in 0..spec.dev_sentences {
        let mut labels = Vec::new();
        for ty in 0..ts.main_types().len() {
            labels.push(ts.main_begin(ty));
            if (s + ty) % 2 == 0 {
                labels.push(ts.main_inside(ty));
            }
            labels.push(MainLabelIndex::OUTSIDE);
        }
        dev.push(SentenceRecord {
            id: format!("dev-{s}"),
            tokens: (0..labels.len()).map(|i| format!("w{i}")).collect(),
            gold_main: Some(
                labels
                    .iter()
                    .map(|&l| ts.main_tag_of(l))
                    .collect::<Result<_>>()?,
            ),
            gold_sub: None,
            emb: Some(
                labels
                    .iter()
                    .map(|l| {
                        if l.is_outside() {
                            outside_vec(&mut rng)
                        } else {
                            entity_vec(l.index(), &mut rng)
                        }
                    })
                    .collect(),
            ),
            p_main: Some(
                labels
                    .iter()
                    .map(|l| peaked_row(label_count, l.index(), 0.9))
                    .collect(),
            ),
            p_sub: None,
        });
    }
    Ok((
        Corpus::from_records(ts, dim, train)?,
        Corpus::from_records(ts, dim, dev)?,
    ))
}
