//! Label taxonomy and BIO index mapping.
//!
//! The main label space is `O` followed by `B-`/`I-` pairs in type order:
//!
//! ```text
//! 0 => O, 1 => B-<t0>, 2 => I-<t0>, 3 => B-<t1>, 4 => I-<t1>, ...
//! ```
//!
//! The subtype space has no `O`; absence of a subtype is an all-below-threshold
//! sigmoid row. Index `2j` is `B-<s_j>` and `2j + 1` is `I-<s_j>`.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TAGSET_HEADER: &str = "tagset-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MainLabelIndex(pub u32);

impl MainLabelIndex {
    pub const OUTSIDE: MainLabelIndex = MainLabelIndex(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_outside(self) -> bool {
        self.0 == 0
    }

    pub fn is_begin(self) -> bool {
        self.0 % 2 == 1
    }

    /// Position of the entity type in `main_types`, `None` for `O`.
    pub fn type_position(self) -> Option<usize> {
        (self.0 != 0).then(|| (self.index() - 1) / 2)
    }
}

impl fmt::Display for MainLabelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubLabelIndex(pub u32);

impl SubLabelIndex {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_begin(self) -> bool {
        self.0.is_multiple_of(2)
    }

    pub fn type_position(self) -> usize {
        self.index() / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Prefix {
    Begin,
    Inside,
}

fn split_bio(tag: &str) -> Option<(Prefix, &str)> {
    if let Some(rest) = tag.strip_prefix("B-") {
        Some((Prefix::Begin, rest))
    } else {
        tag.strip_prefix("I-").map(|rest| (Prefix::Inside, rest))
    }
}

/// Immutable label taxonomy with index lookups for both BIO spaces.
#[derive(Debug, Clone)]
pub struct Tagset {
    version: String,
    main_types: Vec<String>,
    sub_types: Vec<String>,
    main_lookup: HashMap<String, usize>,
    sub_lookup: HashMap<String, usize>,
    hash: [u8; 32],
}

impl PartialEq for Tagset {
    fn eq(&self, other: &Self) -> bool {
        self.hash == other.hash
    }
}

impl Eq for Tagset {}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() || name.chars().any(char::is_whitespace) || split_bio(name).is_some() {
        return Err(Error::InvalidTypeName(name.to_string()));
    }
    Ok(())
}

fn build_lookup(space: &'static str, names: &[String]) -> Result<HashMap<String, usize>> {
    let mut lookup = HashMap::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        check_name(name)?;
        if lookup.insert(name.clone(), i).is_some() {
            return Err(Error::DuplicateType {
                space,
                name: name.clone(),
            });
        }
    }
    Ok(lookup)
}

impl Tagset {
    pub fn new(
        version: impl Into<String>,
        main_types: Vec<String>,
        sub_types: Vec<String>,
    ) -> Result<Self> {
        let version = version.into();
        if version.chars().any(char::is_whitespace) {
            return Err(Error::TagsetParse {
                line: 0,
                msg: format!("version `{version}` contains whitespace"),
            });
        }
        if main_types.is_empty() {
            return Err(Error::EmptyTypeList("main"));
        }
        let main_lookup = build_lookup("main", &main_types)?;
        let sub_lookup = build_lookup("sub", &sub_types)?;
        let hash = canonical_hash(&version, &main_types, &sub_types);
        Ok(Tagset {
            version,
            main_types,
            sub_types,
            main_lookup,
            sub_lookup,
            hash,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the `tagset-v1` text format.
    ///
    /// ```text
    /// tagset-v1
    /// version: wojoodfine-2024
    /// main:
    /// PERS
    /// ORG
    /// sub:
    /// GOV
    /// ```
    ///
    /// The `version:` line is optional. Blank lines and `#` comment lines are
    /// ignored everywhere after the header.
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            Preamble,
            Main,
            Sub,
        }

        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, TAGSET_HEADER)) => {}
            Some((line, other)) => {
                return Err(Error::TagsetParse {
                    line,
                    msg: format!("expected header `{TAGSET_HEADER}`, found `{other}`"),
                })
            }
            None => {
                return Err(Error::TagsetParse {
                    line: 1,
                    msg: "empty file".into(),
                })
            }
        }

        let mut version = String::new();
        let mut main = Vec::new();
        let mut sub = Vec::new();
        let mut section = Section::Preamble;
        let mut seen_sub = false;
        for (line, content) in lines {
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            match content {
                "main:" if section == Section::Preamble => section = Section::Main,
                "sub:" if section == Section::Main => {
                    section = Section::Sub;
                    seen_sub = true;
                }
                "main:" | "sub:" => {
                    return Err(Error::TagsetParse {
                        line,
                        msg: format!("unexpected section marker `{content}`"),
                    })
                }
                _ => match section {
                    Section::Preamble => match content.strip_prefix("version:") {
                        Some(v) if version.is_empty() => version = v.trim().to_string(),
                        _ => {
                            return Err(Error::TagsetParse {
                                line,
                                msg: format!("unexpected line `{content}` before `main:`"),
                            })
                        }
                    },
                    Section::Main => main.push(content.to_string()),
                    Section::Sub => sub.push(content.to_string()),
                },
            }
        }
        if section == Section::Preamble {
            return Err(Error::TagsetParse {
                line: text.lines().count(),
                msg: "missing `main:` section".into(),
            });
        }
        if !seen_sub {
            return Err(Error::TagsetParse {
                line: text.lines().count(),
                msg: "missing `sub:` section".into(),
            });
        }
        Tagset::new(version, main, sub)
    }

    /// Canonical text form; parsing it yields an equal tagset.
    pub fn to_text(&self) -> String {
        let mut out = String::from(TAGSET_HEADER);
        out.push('\n');
        if !self.version.is_empty() {
            out.push_str(&format!("version: {}\n", self.version));
        }
        out.push_str("main:\n");
        for t in &self.main_types {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str("sub:\n");
        for t in &self.sub_types {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn main_types(&self) -> &[String] {
        &self.main_types
    }

    pub fn sub_types(&self) -> &[String] {
        &self.sub_types
    }

    /// `2·|main_types| + 1`.
    pub fn main_label_count(&self) -> usize {
        2 * self.main_types.len() + 1
    }

    /// `2·|sub_types|`.
    pub fn sub_label_count(&self) -> usize {
        2 * self.sub_types.len()
    }

    pub fn hash(&self) -> &[u8; 32] {
        &self.hash
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash)
    }

    pub fn main_index_of(&self, tag: &str) -> Result<MainLabelIndex> {
        if tag == "O" {
            return Ok(MainLabelIndex::OUTSIDE);
        }
        let (prefix, name) = split_bio(tag).ok_or_else(|| Error::MalformedTag(tag.into()))?;
        let pos = *self
            .main_lookup
            .get(name)
            .ok_or_else(|| Error::UnknownTag {
                space: "main",
                tag: tag.into(),
            })?;
        let base = 2 * pos as u32 + 1;
        Ok(MainLabelIndex(match prefix {
            Prefix::Begin => base,
            Prefix::Inside => base + 1,
        }))
    }

    pub fn main_tag_of(&self, idx: MainLabelIndex) -> Result<String> {
        self.check_main(idx)?;
        Ok(match idx.type_position() {
            None => "O".to_string(),
            Some(pos) => {
                let prefix = if idx.is_begin() { "B" } else { "I" };
                format!("{prefix}-{}", self.main_types[pos])
            }
        })
    }

    /// Entity type name for a main label, `None` for `O`.
    pub fn main_type_of(&self, idx: MainLabelIndex) -> Result<Option<&str>> {
        self.check_main(idx)?;
        Ok(idx.type_position().map(|p| self.main_types[p].as_str()))
    }

    pub fn main_begin(&self, type_position: usize) -> MainLabelIndex {
        MainLabelIndex(2 * type_position as u32 + 1)
    }

    pub fn main_inside(&self, type_position: usize) -> MainLabelIndex {
        MainLabelIndex(2 * type_position as u32 + 2)
    }

    pub fn main_type_position(&self, name: &str) -> Option<usize> {
        self.main_lookup.get(name).copied()
    }

    pub fn sub_type_position(&self, name: &str) -> Option<usize> {
        self.sub_lookup.get(name).copied()
    }

    pub fn sub_index_of(&self, tag: &str) -> Result<SubLabelIndex> {
        let (prefix, name) = split_bio(tag).ok_or_else(|| Error::MalformedTag(tag.into()))?;
        let pos = *self.sub_lookup.get(name).ok_or_else(|| Error::UnknownTag {
            space: "sub",
            tag: tag.into(),
        })?;
        let base = 2 * pos as u32;
        Ok(SubLabelIndex(match prefix {
            Prefix::Begin => base,
            Prefix::Inside => base + 1,
        }))
    }

    pub fn sub_tag_of(&self, idx: SubLabelIndex) -> Result<String> {
        self.check_sub(idx)?;
        let prefix = if idx.is_begin() { "B" } else { "I" };
        Ok(format!("{prefix}-{}", self.sub_types[idx.type_position()]))
    }

    pub fn sub_type_of(&self, idx: SubLabelIndex) -> Result<&str> {
        self.check_sub(idx)?;
        Ok(&self.sub_types[idx.type_position()])
    }

    fn check_main(&self, idx: MainLabelIndex) -> Result<()> {
        if idx.index() >= self.main_label_count() {
            return Err(Error::LabelOutOfRange {
                space: "main",
                index: idx.index(),
                size: self.main_label_count(),
            });
        }
        Ok(())
    }

    fn check_sub(&self, idx: SubLabelIndex) -> Result<()> {
        if idx.index() >= self.sub_label_count() {
            return Err(Error::LabelOutOfRange {
                space: "sub",
                index: idx.index(),
                size: self.sub_label_count(),
            });
        }
        Ok(())
    }
}

fn canonical_hash(version: &str, main: &[String], sub: &[String]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(TAGSET_HEADER.as_bytes());
    h.update(b"\0version\0");
    h.update(version.as_bytes());
    h.update(b"\0main\0");
    for t in main {
        h.update(t.as_bytes());
        h.update(b"\0");
    }
    h.update(b"\0sub\0");
    for t in sub {
        h.update(t.as_bytes());
        h.update(b"\0");
    }
    h.finalize().into()
}
