//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use knnseq::corpus_io::{decode_datastore, encode_datastore};
use knnseq::datastore::{entry_score, unit_query};
use knnseq::decode::{decode_entities, decode_predictions, EntityTuple, SentenceEntities};
use knnseq::sweep::{evaluate_config, run_sweep};
use knnseq::synthetic::{clustered_corpus, outside_heavy_corpora, ClusterSpec, OutsideHeavySpec};
use knnseq::{
    build_datastore, cosine_sim, interpolate, knn_distribution, knn_search, micro_prf,
    predict_baseline, predict_tokens, Corpus, Datastore, KnnConfig, LabelDistribution,
    MainLabelIndex, Neighbor, SentenceRecord, SweepGrid, Tagset,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn tagset() -> Tagset {
    Tagset::parse("tagset-v1\nversion: acceptance\nmain:\nPERS\nORG\nGPE\nsub:\nGOV\nCOM\nTOWN\n")
        .unwrap()
}

fn store_from_vectors(
    ts: &Tagset,
    dim: usize,
    vectors: Vec<Vec<f32>>,
    labels: Vec<String>,
) -> Datastore {
    let rec = SentenceRecord {
        id: "store".into(),
        tokens: vec!["w".into(); vectors.len()],
        gold_main: Some(labels),
        gold_sub: None,
        emb: Some(vectors),
        p_main: None,
        p_sub: None,
    };
    let corpus = Corpus::from_records(ts, dim, vec![rec]).unwrap();
    build_datastore(&corpus, ts).unwrap()
}

/// Full scan, full sort, truncate.
fn oracle_ranking(ds: &Datastore, query: &[f32]) -> Vec<(usize, f64)> {
    let q = unit_query(ds, query).unwrap();
    let mut all: Vec<(usize, f64)> = (0..ds.len()).map(|i| (i, entry_score(ds, i, &q))).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all
}

fn knn_oracle_equivalence() -> Outcome {
    let ts = tagset();
    let tags: Vec<String> = (0..ts.main_label_count())
        .map(|i| ts.main_tag_of(MainLabelIndex(i as u32)).unwrap())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0usize;
    let mut max_size = 0usize;
    for store_no in 0..200 {
        let dim = *[4usize, 16, 64].choose(&mut rng).unwrap();
        let n = rng.random_range(1..=10_000);
        max_size = max_size.max(n);
        let mut vectors: Vec<Vec<f32>> = Vec::with_capacity(n);
        for _ in 0..n {
            // duplicates and coarse values force exact similarity ties
            if !vectors.is_empty() && rng.random_bool(0.1) {
                let j = rng.random_range(0..vectors.len());
                vectors.push(vectors[j].clone());
            } else if dim == 4 && rng.random_bool(0.5) {
                let mut v: Vec<f32> = (0..dim)
                    .map(|_| rng.random_range(-2i8..=2) as f32)
                    .collect();
                if v.iter().all(|&x| x == 0.0) {
                    v[0] = 1.0;
                }
                vectors.push(v);
            } else {
                vectors.push((0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect());
            }
        }
        let labels = (0..n)
            .map(|_| tags.choose(&mut rng).unwrap().clone())
            .collect();
        let ds = store_from_vectors(&ts, dim, vectors.clone(), labels);

        for q_no in 0..10 {
            let query: Vec<f32> = if q_no % 3 == 0 {
                vectors[rng.random_range(0..n)].clone()
            } else {
                (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()
            };
            let oracle = oracle_ranking(&ds, &query);
            for k in [1usize, 8, 512] {
                let got = knn_search(&ds, &query, k).map_err(|e| e.to_string())?;
                let expect = &oracle[..k.min(n)];
                ensure!(
                    got.effective_k() == expect.len(),
                    "store {store_no} query {q_no} k={k}: effective_k {} vs {}",
                    got.effective_k(),
                    expect.len()
                );
                for (a, b) in got.items().iter().zip(expect) {
                    ensure!(
                        a.index == b.0 && a.sim.to_bits() == b.1.to_bits(),
                        "store {store_no} query {q_no} k={k}: ({}, {}) vs ({}, {})",
                        a.index,
                        a.sim,
                        b.0,
                        b.1
                    );
                    ensure!(a.label == ds.label(a.index), "label mismatch");
                    ensure!(
                        a.sim.abs() <= 1.0 + 1e-6,
                        "similarity {} out of bounds",
                        a.sim
                    );
                }
                checked += 1;
            }
            // stored scores agree with cosine on the raw vectors
            let top = &oracle[0];
            let raw = cosine_sim(&vectors[top.0], &query).map_err(|e| e.to_string())?;
            ensure!(
                (raw - top.1).abs() < 1e-6,
                "stored score {} vs cosine {}",
                top.1,
                raw
            );
        }
    }
    Ok(format!(
        "{checked} searches over 200 stores (largest {max_size})"
    ))
}

fn three_neighbor_hand_value() -> Outcome {
    let nb = |index, sim, label| Neighbor {
        index,
        sim,
        label: MainLabelIndex(label),
    };
    let p = knn_distribution(&[nb(0, 1.0, 1), nb(1, 1.0, 3), nb(2, 0.0, 1)], 1.0, 7)
        .map_err(|e| e.to_string())?;
    let (a, b) = (p.probs()[1], p.probs()[3]);
    ensure!((a - 0.57769).abs() < 1e-5, "P(A) = {a}");
    ensure!((b - 0.42231).abs() < 1e-5, "P(B) = {b}");
    Ok(format!("P = ({a:.5}, {b:.5})"))
}

fn knn_only_entities(
    rec: &SentenceRecord,
    ds: &Datastore,
    k: usize,
    ts: &Tagset,
) -> Vec<EntityTuple> {
    let labels: Vec<MainLabelIndex> = rec
        .emb
        .as_ref()
        .unwrap()
        .iter()
        .map(|e| {
            let n = knn_search(ds, e, k).unwrap();
            knn_distribution(n.items(), 1.0, ts.main_label_count())
                .unwrap()
                .argmax()
        })
        .collect();
    let subs = predict_baseline(rec, ts)
        .unwrap()
        .into_iter()
        .map(|p| p.subs)
        .collect::<Vec<_>>();
    decode_entities(&labels, &subs, ts).unwrap()
}

fn boundary_collapse() -> Outcome {
    let ts = tagset();
    let spec = ClusterSpec {
        sentences: 50,
        min_len: 10,
        max_len: 10,
        ..ClusterSpec::default()
    };
    let train = clustered_corpus(
        &ts,
        &ClusterSpec {
            sentences: 80,
            ..spec.clone()
        },
        11,
    )
    .map_err(|e| e.to_string())?;
    let test = clustered_corpus(&ts, &spec, 12).map_err(|e| e.to_string())?;
    ensure!(
        test.token_count() == 500,
        "fixture has {} tokens",
        test.token_count()
    );
    let ds = build_datastore(&train, &ts).map_err(|e| e.to_string())?;

    let mut differing_paths = 0;
    for &k in &SweepGrid::default().ks {
        for rec in &test.records {
            let base = decode_predictions(&predict_baseline(rec, &ts).unwrap(), &ts).unwrap();
            let at_one = KnnConfig::new(k, 1.0, 1.0).unwrap();
            let got =
                decode_predictions(&predict_tokens(rec, &ds, &at_one, &ts).unwrap(), &ts).unwrap();
            ensure!(
                got == base,
                "λ=1, k={k}, record {}: differs from baseline",
                rec.id
            );

            let knn_only = knn_only_entities(rec, &ds, k, &ts);
            let at_zero = KnnConfig::new(k, 0.0, 1.0).unwrap();
            let got =
                decode_predictions(&predict_tokens(rec, &ds, &at_zero, &ts).unwrap(), &ts).unwrap();
            ensure!(
                got == knn_only,
                "λ=0, k={k}, record {}: differs from KNN-only",
                rec.id
            );
            differing_paths += usize::from(base != knn_only);
        }
    }
    Ok(format!(
        "500 tokens × 7 k values; baseline and KNN-only decodes differ on {differing_paths} sentence-k pairs"
    ))
}

fn normalization_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let label_space = 43;
    let mut worst = 0.0f64;
    for draw in 0..10_000 {
        let n = rng.random_range(1..=64);
        let used: Vec<u32> = (0..rng.random_range(1..=6))
            .map(|_| rng.random_range(0..label_space as u32))
            .collect();
        let nbrs: Vec<Neighbor> = (0..n)
            .map(|i| Neighbor {
                index: i,
                sim: rng.random_range(-1.0..=1.0),
                label: MainLabelIndex(*used.choose(&mut rng).unwrap()),
            })
            .collect();
        let tau = rng.random_range(0.01..=10.0);
        let lambda = rng.random_range(0.0..=1.0);
        let p_knn = knn_distribution(&nbrs, tau, label_space).map_err(|e| e.to_string())?;
        let raw: Vec<f64> = (0..label_space)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let total: f64 = raw.iter().sum();
        let p_main = LabelDistribution::new(raw.iter().map(|x| x / total).collect())
            .map_err(|e| e.to_string())?;
        let fin = interpolate(&p_main, &p_knn, lambda).map_err(|e| e.to_string())?;
        for (name, d) in [("P_kNN", &p_knn), ("P_final", &fin)] {
            let dev = (d.probs().iter().sum::<f64>() - 1.0).abs();
            worst = worst.max(dev);
            ensure!(dev <= 1e-6, "draw {draw}: {name} sums off by {dev}");
        }
        for v in 0..label_space as u32 {
            if !nbrs.iter().any(|nb| nb.label.0 == v) {
                ensure!(
                    p_knn.probs()[v as usize] == 0.0,
                    "draw {draw}: absent label {v} has mass {}",
                    p_knn.probs()[v as usize]
                );
            }
        }
    }
    Ok(format!("10000 draws, max |Σp − 1| = {worst:.2e}"))
}

fn knn_corrects_baseline() -> Outcome {
    let ts = tagset();
    let spec = ClusterSpec {
        sentences: 200,
        ..ClusterSpec::default()
    };
    let train = clustered_corpus(&ts, &spec, 21).map_err(|e| e.to_string())?;
    let dev = clustered_corpus(
        &ts,
        &ClusterSpec {
            sentences: 100,
            ..spec
        },
        22,
    )
    .map_err(|e| e.to_string())?;
    let ds = build_datastore(&train, &ts).map_err(|e| e.to_string())?;
    let res = run_sweep(&dev, &ds, &SweepGrid::default(), &ts).map_err(|e| e.to_string())?;
    let baseline = res.row(8, 1.0).unwrap().f1;
    let best_mixed = res
        .rows
        .iter()
        .filter(|r| r.lambda < 1.0)
        .fold(None::<&knnseq::SweepRow>, |acc, r| match acc {
            Some(b) if b.f1 >= r.f1 => Some(b),
            _ => Some(r),
        })
        .unwrap();
    ensure!(
        res.best.lambda < 1.0,
        "sweep best sits at λ=1 ({:?})",
        res.best
    );
    ensure!(
        best_mixed.f1 > baseline,
        "best λ<1 F1 {} does not exceed λ=1 F1 {}",
        best_mixed.f1,
        baseline
    );
    Ok(format!(
        "λ=1 F1 {:.4} → best F1 {:.4} at k={}, λ={}",
        baseline, res.best.f1, res.best.k, res.best.lambda
    ))
}

fn outside_dominance() -> Outcome {
    let ts = tagset();
    let spec = OutsideHeavySpec::default();
    let r = spec.per_label;
    let (train, dev) = outside_heavy_corpora(&ts, &spec, 5).map_err(|e| e.to_string())?;
    let ds = build_datastore(&train, &ts).map_err(|e| e.to_string())?;
    let o = MainLabelIndex::OUTSIDE;

    let mut queries = 0;
    for rec in &dev.records {
        let gold = rec.gold_main_indices(&ts).unwrap();
        for (e, g) in rec.emb.as_ref().unwrap().iter().zip(gold) {
            if g.is_outside() {
                continue;
            }
            let nbrs = knn_search(&ds, e, 512).unwrap();
            // fixture precondition: own class in the top r, only O behind it
            for (rank, n) in nbrs.items().iter().enumerate() {
                let expect = if rank < r { g } else { o };
                ensure!(
                    n.label == expect,
                    "rank {rank} has label {} (expected {expect})",
                    n.label
                );
            }
            let mut prev = -1.0;
            for k in r..=512 {
                let p = knn_distribution(nbrs.prefix(k), 1.0, ts.main_label_count())
                    .unwrap()
                    .get(o);
                ensure!(p >= prev, "P_kNN[O] fell from {prev} to {p} at k={k}");
                prev = p;
            }
            queries += 1;
        }
    }

    let f1_at = |k| {
        evaluate_config(&dev, &ds, &KnnConfig::new(k, 0.0, 1.0).unwrap(), &ts)
            .unwrap()
            .f1
    };
    let (small, large) = (f1_at(8), f1_at(512));
    ensure!(
        large < small,
        "λ=0 F1 did not degrade: k=8 {small}, k=512 {large}"
    );
    Ok(format!(
        "{queries} entity queries monotone for k ∈ [{r}, 512]; λ=0 F1 {small:.4} (k=8) → {large:.4} (k=512)"
    ))
}

fn sweep_structure() -> Outcome {
    let ts = tagset();
    let spec = ClusterSpec {
        sentences: 60,
        ..ClusterSpec::default()
    };
    let train = clustered_corpus(&ts, &spec, 31).map_err(|e| e.to_string())?;
    let dev = clustered_corpus(
        &ts,
        &ClusterSpec {
            sentences: 30,
            ..spec
        },
        32,
    )
    .map_err(|e| e.to_string())?;
    let ds = build_datastore(&train, &ts).map_err(|e| e.to_string())?;
    let grid = SweepGrid::default();
    let res = run_sweep(&dev, &ds, &grid, &ts).map_err(|e| e.to_string())?;
    ensure!(res.rows.len() == 77, "{} rows", res.rows.len());
    ensure!(res.to_csv().lines().count() == 79, "csv line count");

    let first = res.row(grid.ks[0], 1.0).unwrap();
    for &k in &grid.ks {
        let r = res.row(k, 1.0).unwrap();
        ensure!(
            (r.precision, r.recall, r.f1) == (first.precision, first.recall, first.f1),
            "λ=1 row differs at k={k}"
        );
    }
    for row in &res.rows {
        let cfg = KnnConfig::new(row.k, row.lambda, grid.tau).unwrap();
        let ind = evaluate_config(&dev, &ds, &cfg, &ts).map_err(|e| e.to_string())?;
        ensure!(
            ind.precision.to_bits() == row.precision.to_bits()
                && ind.recall.to_bits() == row.recall.to_bits()
                && ind.f1.to_bits() == row.f1.to_bits(),
            "cell (k={}, λ={}) differs from independent retrieval",
            row.k,
            row.lambda
        );
    }
    ensure!(
        res.to_csv() == run_sweep(&dev, &ds, &grid, &ts).unwrap().to_csv(),
        "non-deterministic table"
    );
    Ok("77 rows, λ=1 column constant, all cells equal per-k retrieval".into())
}

fn metric_fixtures_and_round_trip() -> Outcome {
    let ts = tagset();
    let ent = |s, e, main: &str| EntityTuple {
        s,
        e,
        main: main.into(),
        subs: Default::default(),
    };
    let sent = |entities| SentenceEntities {
        id: "x".into(),
        entities,
    };
    let gold = vec![sent(vec![ent(0, 1, "ORG"), ent(3, 3, "GPE")])];

    let r = micro_prf(&gold, &gold, &ts).map_err(|e| e.to_string())?;
    ensure!(
        (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0),
        "perfect: {r:?}"
    );
    let half = vec![sent(vec![ent(0, 1, "ORG"), ent(4, 5, "PERS")])];
    let r = micro_prf(&gold, &half, &ts).map_err(|e| e.to_string())?;
    ensure!((r.tp, r.fp, r.fn_) == (1, 1, 1), "half counters: {r:?}");
    ensure!(
        (r.precision, r.recall, r.f1) == (0.5, 0.5, 0.5),
        "half: {r:?}"
    );
    let r = micro_prf(&gold, &[sent(vec![])], &ts).map_err(|e| e.to_string())?;
    ensure!(
        (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0),
        "empty: {r:?}"
    );

    let train = clustered_corpus(
        &ts,
        &ClusterSpec {
            sentences: 5,
            ..ClusterSpec::default()
        },
        41,
    )
    .map_err(|e| e.to_string())?;
    let ds = build_datastore(&train, &ts).map_err(|e| e.to_string())?;
    let bytes = encode_datastore(&ds).map_err(|e| e.to_string())?;
    let back = decode_datastore(&bytes, &ts).map_err(|e| e.to_string())?;
    ensure!(
        encode_datastore(&back).unwrap() == bytes,
        "re-encoded datastore differs"
    );
    ensure!(
        encode_datastore(&ds).unwrap() == bytes,
        "encoding is not deterministic"
    );

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("store.knnd");
    knnseq::write_datastore(&ds, &path).map_err(|e| e.to_string())?;
    ensure!(
        std::fs::read(&path).unwrap() == bytes,
        "file bytes differ from encoding"
    );
    let from_file = knnseq::read_datastore(&path, &ts).map_err(|e| e.to_string())?;
    ensure!(
        from_file.labels() == ds.labels(),
        "labels differ after file round trip"
    );
    Ok(format!(
        "3 metric fixtures exact; {}-entry datastore byte-identical ({} bytes)",
        ds.len(),
        bytes.len()
    ))
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "knn-oracle-equivalence",
            budget: Some(Duration::from_secs(60)),
            run: knn_oracle_equivalence,
        },
        Criterion {
            name: "neighbor-distribution-hand-value",
            budget: None,
            run: three_neighbor_hand_value,
        },
        Criterion {
            name: "boundary-collapse",
            budget: None,
            run: boundary_collapse,
        },
        Criterion {
            name: "normalization-suite",
            budget: None,
            run: normalization_suite,
        },
        Criterion {
            name: "knn-corrects-baseline",
            budget: Some(Duration::from_secs(120)),
            run: knn_corrects_baseline,
        },
        Criterion {
            name: "outside-dominance",
            budget: None,
            run: outside_dominance,
        },
        Criterion {
            name: "sweep-structure",
            budget: None,
            run: sweep_structure,
        },
        Criterion {
            name: "metric-fixtures-and-datastore-round-trip",
            budget: None,
            run: metric_fixtures_and_round_trip,
        },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome =
            catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {:<42} {:>9.2?}  {detail}", c.name, elapsed),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<42} {:>9.2?}  {why}", c.name, elapsed);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
