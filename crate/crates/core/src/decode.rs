//! BIO label sequences to entity tuples, and the prediction file format.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus_io::{write_atomic, SentenceRecord};
use crate::error::{Error, Result};
use crate::knn_inference::TokenPrediction;
use crate::tagset::{MainLabelIndex, SubLabelIndex, Tagset};

/// A flat entity: inclusive token span, main type, and subtype set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityTuple {
    pub s: usize,
    pub e: usize,
    pub main: String,
    #[serde(default)]
    pub subs: BTreeSet<String>,
}

struct Open {
    start: usize,
    type_pos: usize,
    subs: BTreeSet<String>,
}

/// Decodes maximal BIO runs into entities.
///
/// `B-X` opens an entity, `I-X` continues an open `X` entity, and anything
/// else closes it. A stray `I-X` (after `O` or after a different type) opens
/// a new `X` entity. Subtypes are the union of subtype types active anywhere
/// in the span, with their own B/I segmentation ignored.
pub fn decode_entities(
    main_labels: &[MainLabelIndex],
    sub_tags: &[Vec<SubLabelIndex>],
    ts: &Tagset,
) -> Result<Vec<EntityTuple>> {
    if sub_tags.len() != main_labels.len() {
        return Err(Error::DimensionMismatch {
            expected: main_labels.len(),
            found: sub_tags.len(),
            context: "subtype rows for decoded sentence".into(),
        });
    }
    let mut out = Vec::new();
    let mut open: Option<Open> = None;
    let close = |open: Open, end: usize, out: &mut Vec<EntityTuple>| {
        out.push(EntityTuple {
            s: open.start,
            e: end,
            main: ts.main_types()[open.type_pos].clone(),
            subs: open.subs,
        });
    };

    for (t, (&label, subs)) in main_labels.iter().zip(sub_tags).enumerate() {
        let type_pos = ts.main_type_of(label)?.and(label.type_position());
        let continues = matches!(
            (&open, type_pos),
            (Some(o), Some(p)) if !label.is_begin() && o.type_pos == p
        );
        if !continues {
            if let Some(o) = open.take() {
                close(o, t - 1, &mut out);
            }
            if let Some(p) = type_pos {
                open = Some(Open {
                    start: t,
                    type_pos: p,
                    subs: BTreeSet::new(),
                });
            }
        }
        if let Some(o) = open.as_mut() {
            for &sub in subs {
                o.subs.insert(ts.sub_type_of(sub)?.to_string());
            }
        }
    }
    if let Some(o) = open.take() {
        close(o, main_labels.len() - 1, &mut out);
    }
    Ok(out)
}

pub fn decode_predictions(preds: &[TokenPrediction], ts: &Tagset) -> Result<Vec<EntityTuple>> {
    let main: Vec<MainLabelIndex> = preds.iter().map(|p| p.main).collect();
    let subs: Vec<Vec<SubLabelIndex>> = preds.iter().map(|p| p.subs.clone()).collect();
    decode_entities(&main, &subs, ts)
}

/// Gold entities for one record, from `gold_main` and optional `gold_sub`.
pub fn gold_entities(rec: &SentenceRecord, ts: &Tagset) -> Result<SentenceEntities> {
    let main = rec.gold_main_indices(ts)?;
    let subs = rec.gold_sub_indices(ts)?;
    Ok(SentenceEntities {
        id: rec.id.clone(),
        entities: decode_entities(&main, &subs, ts)?,
    })
}

/// Re-encodes entities as BIO main labels and `B-`/`I-` subtype tags.
pub fn encode_entities(
    entities: &[EntityTuple],
    len: usize,
    ts: &Tagset,
) -> Result<(Vec<MainLabelIndex>, Vec<Vec<SubLabelIndex>>)> {
    let mut main = vec![MainLabelIndex::OUTSIDE; len];
    let mut subs = vec![Vec::new(); len];
    for ent in entities {
        check_entity(ent, Some(len), ts)?;
        let pos = ts.main_type_position(&ent.main).unwrap();
        main[ent.s] = ts.main_begin(pos);
        for slot in &mut main[ent.s + 1..=ent.e] {
            *slot = ts.main_inside(pos);
        }
        for sub in &ent.subs {
            let sp = ts.sub_type_position(sub).unwrap() as u32;
            subs[ent.s].push(SubLabelIndex(2 * sp));
            for row in &mut subs[ent.s + 1..=ent.e] {
                row.push(SubLabelIndex(2 * sp + 1));
            }
        }
    }
    Ok((main, subs))
}

/// Checks span bounds (when the sentence length is known) and tag membership.
pub fn check_entity(ent: &EntityTuple, len: Option<usize>, ts: &Tagset) -> Result<()> {
    if ent.s > ent.e || len.is_some_and(|m| ent.e >= m) {
        return Err(Error::InvalidConfig(format!(
            "entity span ({}, {}) out of bounds for sentence of length {}",
            ent.s,
            ent.e,
            len.map_or("?".to_string(), |m| m.to_string())
        )));
    }
    if ts.main_type_position(&ent.main).is_none() {
        return Err(Error::UnknownTag {
            space: "main",
            tag: ent.main.clone(),
        });
    }
    for sub in &ent.subs {
        if ts.sub_type_position(sub).is_none() {
            return Err(Error::UnknownTag {
                space: "sub",
                tag: sub.clone(),
            });
        }
    }
    Ok(())
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceEntities {
    pub id: String,
    pub entities: Vec<EntityTuple>,
}

pub fn encode_predictions(preds: &[SentenceEntities]) -> Vec<u8> {
    let mut out = Vec::new();
    for p in preds {
        serde_json::to_writer(&mut out, p).expect("prediction records serialize");
        out.push(b'\n');
    }
    out
}

pub fn write_predictions(preds: &[SentenceEntities], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_predictions(preds))
}

pub fn read_predictions_from(reader: impl BufRead, ts: &Tagset) -> Result<Vec<SentenceEntities>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<predictions>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentenceEntities = serde_json::from_str(&line).map_err(|e| Error::Syntax {
            line: i + 1,
            msg: e.to_string(),
        })?;
        for ent in &rec.entities {
            check_entity(ent, None, ts).map_err(|e| Error::Record {
                line: i + 1,
                id: rec.id.clone(),
                msg: e.to_string(),
            })?;
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_predictions(path: impl AsRef<Path>, ts: &Tagset) -> Result<Vec<SentenceEntities>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions_from(std::io::BufReader::new(file), ts)
}
