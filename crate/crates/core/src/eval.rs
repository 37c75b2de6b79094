//! Entity-level micro precision / recall / F1.
//!
//! Every entity contributes one `(s, e, main)` scoring instance plus one
//! `(s, e, sub)` instance per subtype. Main and subtype instances are matched
//! independently: a wrong main type does not forfeit a correct subtype.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::decode::{check_entity, SentenceEntities};
use crate::error::{Error, Result};
use crate::tagset::Tagset;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    /// `(precision, recall, f1)`; an empty side scores 1 only when both are empty.
    pub fn scores(&self) -> (f64, f64, f64) {
        let pred = self.tp + self.fp;
        let gold = self.tp + self.fn_;
        if pred == 0 && gold == 0 {
            return (1.0, 1.0, 1.0);
        }
        let ratio = |n: u64, d: u64| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        let p = ratio(self.tp, pred);
        let r = ratio(self.tp, gold);
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        (p, r, f1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl From<Counts> for TypeReport {
    fn from(c: Counts) -> Self {
        let (precision, recall, f1) = c.scores();
        TypeReport {
            precision,
            recall,
            f1,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub per_type: BTreeMap<String, TypeReport>,
}

impl EvalReport {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Kind {
    Main,
    Sub,
}

type Instance<'a> = (usize, usize, Kind, &'a str);

fn instances<'a>(ents: &'a SentenceEntities, ts: &Tagset) -> Result<HashMap<Instance<'a>, u64>> {
    let mut out = HashMap::new();
    for ent in &ents.entities {
        check_entity(ent, None, ts)?;
        *out.entry((ent.s, ent.e, Kind::Main, ent.main.as_str()))
            .or_default() += 1;
        for sub in &ent.subs {
            *out.entry((ent.s, ent.e, Kind::Sub, sub.as_str()))
                .or_default() += 1;
        }
    }
    Ok(out)
}

/// Scores predictions against gold; both sides must cover the same sentence ids.
pub fn micro_prf(
    gold: &[SentenceEntities],
    pred: &[SentenceEntities],
    ts: &Tagset,
) -> Result<EvalReport> {
    let mut pred_by_id: HashMap<&str, &SentenceEntities> = HashMap::with_capacity(pred.len());
    for p in pred {
        if pred_by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::IdMismatch(format!("`{}` predicted twice", p.id)));
        }
    }
    let mut seen = std::collections::HashSet::with_capacity(gold.len());
    let mut per_type: BTreeMap<String, Counts> = BTreeMap::new();
    for g in gold {
        if !seen.insert(g.id.as_str()) {
            return Err(Error::IdMismatch(format!(
                "`{}` appears twice in gold",
                g.id
            )));
        }
        let p = pred_by_id
            .get(g.id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("no prediction for `{}`", g.id)))?;
        let gi = instances(g, ts)?;
        let pi = instances(p, ts)?;
        for (inst, &n) in &gi {
            let m = pi.get(inst).copied().unwrap_or(0);
            let c = per_type.entry(inst.3.to_string()).or_default();
            c.tp += n.min(m);
            c.fn_ += n.saturating_sub(m);
        }
        for (inst, &m) in &pi {
            let n = gi.get(inst).copied().unwrap_or(0);
            per_type.entry(inst.3.to_string()).or_default().fp += m.saturating_sub(n);
        }
    }
    if let Some(extra) = pred.iter().find(|p| !seen.contains(p.id.as_str())) {
        return Err(Error::IdMismatch(format!(
            "`{}` has no gold record",
            extra.id
        )));
    }

    let mut total = Counts::default();
    for c in per_type.values() {
        total.add(*c);
    }
    let (precision, recall, f1) = total.scores();
    Ok(EvalReport {
        precision,
        recall,
        f1,
        tp: total.tp,
        fp: total.fp,
        fn_: total.fn_,
        per_type: per_type.into_iter().map(|(k, v)| (k, v.into())).collect(),
    })
}
