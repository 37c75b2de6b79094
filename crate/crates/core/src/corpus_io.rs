//! Interchange corpus reader/writer and the binary datastore format.
//!
//! Corpus files are line-delimited JSON: a header object followed by one
//! sentence record per line. Datastore files are little-endian binary:
//!
//! ```text
//! b"KNND" | u32 version=1 | u32 dim | u32 main-label-count | u64 count
//!         | [u8; 32] tagset hash | count × (dim × f32, u32 label)
//! ```

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::datastore::Datastore;
use crate::error::{Error, Result};
use crate::tagset::{MainLabelIndex, SubLabelIndex, Tagset};

pub const CORPUS_FORMAT: &str = "knnseq-corpus";
pub const CORPUS_VERSION: u64 = 1;
pub const DATASTORE_MAGIC: [u8; 4] = *b"KNND";
pub const DATASTORE_VERSION: u32 = 1;
const DATASTORE_HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8 + 32;

/// Tolerance on `p_main` row sums before exact re-normalization.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SentenceRecord {
    pub id: String,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_main: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_sub: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emb: Option<Vec<Vec<f32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_main: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_sub: Option<Vec<Vec<f64>>>,
}

impl SentenceRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    fn missing(&self, field: &'static str) -> Error {
        Error::MissingField {
            id: self.id.clone(),
            field,
        }
    }

    pub fn require_emb(&self) -> Result<&[Vec<f32>]> {
        self.emb.as_deref().ok_or_else(|| self.missing("emb"))
    }

    pub fn require_p_main(&self) -> Result<&[Vec<f64>]> {
        self.p_main.as_deref().ok_or_else(|| self.missing("p_main"))
    }

    pub fn gold_main_indices(&self, ts: &Tagset) -> Result<Vec<MainLabelIndex>> {
        self.gold_main
            .as_ref()
            .ok_or_else(|| self.missing("gold_main"))?
            .iter()
            .map(|t| ts.main_index_of(t))
            .collect()
    }

    /// Gold subtype tags per token; an absent `gold_sub` means no subtypes.
    pub fn gold_sub_indices(&self, ts: &Tagset) -> Result<Vec<Vec<SubLabelIndex>>> {
        match &self.gold_sub {
            None => Ok(vec![Vec::new(); self.len()]),
            Some(rows) => rows
                .iter()
                .map(|tags| tags.iter().map(|t| ts.sub_index_of(t)).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dim: usize,
    pub tagset_hash: String,
    pub records: Vec<SentenceRecord>,
}

impl Corpus {
    /// Validates in-memory records as if they had been read from a file.
    pub fn from_records(ts: &Tagset, dim: usize, records: Vec<SentenceRecord>) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut out = Vec::with_capacity(records.len());
        for (i, mut rec) in records.into_iter().enumerate() {
            validate_record(&mut rec, ts, dim, i + 2)?;
            if !ids.insert(rec.id.clone()) {
                return Err(Error::DuplicateId(rec.id));
            }
            out.push(rec);
        }
        Ok(Corpus {
            dim,
            tagset_hash: ts.hash_hex(),
            records: out,
        })
    }

    pub fn token_count(&self) -> usize {
        self.records.iter().map(SentenceRecord::len).sum()
    }

    fn header_line(&self) -> String {
        serde_json::json!({
            "format": CORPUS_FORMAT,
            "version": CORPUS_VERSION,
            "dim": self.dim,
            "tagset_hash": self.tagset_hash,
        })
        .to_string()
    }
}

fn check_header(value: &Value, ts: &Tagset) -> Result<usize> {
    let err = |field, msg: String| Error::Header {
        line: 1,
        field,
        msg,
    };
    let obj = value
        .as_object()
        .ok_or_else(|| err("format", "header is not a JSON object".into()))?;
    match obj.get("format").and_then(Value::as_str) {
        Some(CORPUS_FORMAT) => {}
        other => {
            return Err(err(
                "format",
                format!("expected \"{CORPUS_FORMAT}\", found {other:?}"),
            ))
        }
    }
    match obj.get("version").and_then(Value::as_u64) {
        Some(CORPUS_VERSION) => {}
        other => {
            return Err(err(
                "version",
                format!("expected {CORPUS_VERSION}, found {other:?}"),
            ))
        }
    }
    let dim = obj
        .get("dim")
        .and_then(Value::as_u64)
        .ok_or_else(|| err("dim", "missing or not a nonnegative integer".into()))?
        as usize;
    let hash = obj
        .get("tagset_hash")
        .and_then(Value::as_str)
        .ok_or_else(|| err("tagset_hash", "missing or not a string".into()))?;
    if hash != ts.hash_hex() {
        return Err(err(
            "tagset_hash",
            format!(
                "corpus built under {hash}, current tagset is {}",
                ts.hash_hex()
            ),
        ));
    }
    Ok(dim)
}

fn row_error(rec: &SentenceRecord, line: usize, msg: String) -> Error {
    Error::Record {
        line,
        id: rec.id.clone(),
        msg,
    }
}

fn check_len<T>(rec: &SentenceRecord, line: usize, field: &str, rows: &[T]) -> Result<()> {
    if rows.len() != rec.len() {
        return Err(row_error(
            rec,
            line,
            format!("`{field}` has {} rows for {} tokens", rows.len(), rec.len()),
        ));
    }
    Ok(())
}

fn check_width(
    rec: &SentenceRecord,
    line: usize,
    field: &str,
    token: usize,
    expected: usize,
    found: usize,
) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            expected,
            found,
            context: format!("line {line}, record `{}`, `{field}` token {token}", rec.id),
        });
    }
    Ok(())
}

/// Enforces every record invariant and re-normalizes `p_main` rows.
pub fn validate_record(
    rec: &mut SentenceRecord,
    ts: &Tagset,
    dim: usize,
    line: usize,
) -> Result<()> {
    if rec.tokens.is_empty() {
        return Err(row_error(rec, line, "record has no tokens".into()));
    }
    if let Some(gold) = &rec.gold_main {
        check_len(rec, line, "gold_main", gold)?;
        for tag in gold {
            ts.main_index_of(tag)
                .map_err(|e| row_error(rec, line, e.to_string()))?;
        }
    }
    if let Some(gold) = &rec.gold_sub {
        check_len(rec, line, "gold_sub", gold)?;
        for tag in gold.iter().flatten() {
            ts.sub_index_of(tag)
                .map_err(|e| row_error(rec, line, e.to_string()))?;
        }
    }
    if let Some(emb) = &rec.emb {
        check_len(rec, line, "emb", emb)?;
        if dim == 0 {
            return Err(row_error(
                rec,
                line,
                "`emb` present but header dim is 0".into(),
            ));
        }
        for (t, row) in emb.iter().enumerate() {
            check_width(rec, line, "emb", t, dim, row.len())?;
            if row.iter().any(|x| !x.is_finite()) {
                return Err(row_error(
                    rec,
                    line,
                    format!("`emb` token {t} is not finite"),
                ));
            }
        }
    }
    if let Some(p_sub) = &rec.p_sub {
        check_len(rec, line, "p_sub", p_sub)?;
        for (t, row) in p_sub.iter().enumerate() {
            check_width(rec, line, "p_sub", t, ts.sub_label_count(), row.len())?;
            if row.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(row_error(
                    rec,
                    line,
                    format!("`p_sub` token {t} has an entry outside [0, 1]"),
                ));
            }
        }
    }
    let id = rec.id.clone();
    if let Some(p_main) = &mut rec.p_main {
        if p_main.len() != rec.tokens.len() {
            return Err(Error::Record {
                line,
                id,
                msg: format!(
                    "`p_main` has {} rows for {} tokens",
                    p_main.len(),
                    rec.tokens.len()
                ),
            });
        }
        for (t, row) in p_main.iter_mut().enumerate() {
            if row.len() != ts.main_label_count() {
                return Err(Error::DimensionMismatch {
                    expected: ts.main_label_count(),
                    found: row.len(),
                    context: format!("line {line}, record `{id}`, `p_main` token {t}"),
                });
            }
            if row.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::Record {
                    line,
                    id,
                    msg: format!("`p_main` token {t} has a negative or non-finite entry"),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NotNormalized { id, token: t, sum });
            }
            row.iter_mut().for_each(|x| *x /= sum);
        }
    }
    Ok(())
}

/// Reads and fully validates a corpus file in a single streaming pass.
pub fn read_corpus(path: impl AsRef<Path>, ts: &Tagset) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus_from(BufReader::new(file), ts).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_corpus_from(reader: impl BufRead, ts: &Tagset) -> Result<Corpus> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let header = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io("<corpus>", e))?,
        None => {
            return Err(Error::Header {
                line: 1,
                field: "format",
                msg: "empty file".into(),
            })
        }
    };
    let header: Value = serde_json::from_str(&header).map_err(|e| Error::Header {
        line: 1,
        field: "format",
        msg: format!("header is not valid JSON: {e}"),
    })?;
    let dim = check_header(&header, ts)?;

    let mut ids = HashSet::new();
    let mut records = Vec::new();
    for (line_no, line) in lines {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: SentenceRecord = serde_json::from_str(&line).map_err(|e| Error::Syntax {
            line: line_no,
            msg: e.to_string(),
        })?;
        validate_record(&mut rec, ts, dim, line_no)?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        records.push(rec);
    }
    Ok(Corpus {
        dim,
        tagset_hash: ts.hash_hex(),
        records,
    })
}

pub fn encode_corpus(corpus: &Corpus) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(corpus.header_line().as_bytes());
    out.push(b'\n');
    for rec in &corpus.records {
        serde_json::to_writer(&mut out, rec).map_err(|e| Error::Syntax {
            line: 0,
            msg: e.to_string(),
        })?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_corpus(corpus)?)
}

/// Writes via a sibling temp file and rename so readers never observe a
/// partially written artifact.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn encode_datastore(ds: &Datastore) -> Result<Vec<u8>> {
    if ds.is_empty() {
        return Err(Error::EmptyDatastore);
    }
    let dim = ds.dim();
    let mut out = Vec::with_capacity(DATASTORE_HEADER_LEN + ds.len() * (4 * dim + 4));
    out.extend_from_slice(&DATASTORE_MAGIC);
    out.extend_from_slice(&DATASTORE_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(ds.label_count() as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    out.extend_from_slice(ds.tagset_hash());
    for i in 0..ds.len() {
        for x in ds.vector(i) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out.extend_from_slice(&ds.label(i).0.to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "need {n} bytes for {what} at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Decodes a datastore image, rejecting it unless it was built under `ts`.
pub fn decode_datastore(bytes: &[u8], ts: &Tagset) -> Result<Datastore> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
    if magic != DATASTORE_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = cur.u32("version")?;
    if version != DATASTORE_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let dim = cur.u32("dim")? as usize;
    let label_count = cur.u32("label count")? as usize;
    let count = cur.u64("count")?;
    let hash: [u8; 32] = cur.take(32, "tagset hash")?.try_into().unwrap();
    if &hash != ts.hash() {
        return Err(Error::TagsetHashMismatch {
            expected: ts.hash_hex(),
            found: hex::encode(hash),
        });
    }
    if label_count != ts.main_label_count() {
        return Err(Error::DimensionMismatch {
            expected: ts.main_label_count(),
            found: label_count,
            context: "datastore main-label count".into(),
        });
    }
    if dim == 0 || count == 0 {
        return Err(Error::EmptyDatastore);
    }
    let record_len = 4 * dim + 4;
    let expected_len = (count as usize)
        .checked_mul(record_len)
        .and_then(|n| n.checked_add(DATASTORE_HEADER_LEN));
    match expected_len {
        Some(n) if n == bytes.len() => {}
        Some(n) if n > bytes.len() => {
            return Err(Error::Truncated(format!(
                "header declares {count} records ({n} bytes), file has {}",
                bytes.len()
            )))
        }
        _ => {
            return Err(Error::Truncated(format!(
                "file length {} does not match {count} records of dim {dim}",
                bytes.len()
            )))
        }
    }

    let count = count as usize;
    let mut vectors = Vec::with_capacity(count * dim);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        for chunk in cur.take(4 * dim, "vector")?.chunks_exact(4) {
            vectors.push(f32::from_le_bytes(chunk.try_into().unwrap()));
        }
        let label = cur.u32("label")?;
        if label as usize >= label_count {
            return Err(Error::LabelOutOfRange {
                space: "main",
                index: label as usize,
                size: label_count,
            });
        }
        labels.push(MainLabelIndex(label));
    }
    Datastore::from_parts(dim, label_count, hash, vectors, labels, None)
}

pub fn write_datastore(ds: &Datastore, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &encode_datastore(ds)?)
}

pub fn read_datastore(path: impl AsRef<Path>, ts: &Tagset) -> Result<Datastore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_datastore(&bytes, ts)
}
