//! Bibliographic records and the field-aware inverted index built over them.
//!
//! Records arrive as line-delimited JSON. Every metadata field maps to one
//! [`FieldKind`]; title and abstract are tokenized free text, every other
//! field is matched as a whole normalized value (taxonomy strings).
//!
//! Documents are stored sorted by `doc_id` and addressed internally by their
//! position in that order, so postings sorted by ordinal are also sorted by
//! `doc_id`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use unicode_segmentation::UnicodeSegmentation;

/// Shortest free-text token kept by the tokenizer, in characters.
pub const MIN_TOKEN_CHARS: usize = 2;

/// Accepted publication years.
pub const YEAR_RANGE: std::ops::RangeInclusive<i32> = 1400..=2100;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus: {0}")]
    Io(#[from] std::io::Error),
    #[error("duplicate doc_id {doc_id:?} on lines {first_line} and {second_line}")]
    DuplicateId {
        doc_id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("unknown doc_id {0:?}")]
    UnknownDocument(String),
}

/// A record rejected during ingest. Ingest continues past these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Title,
    Abstract,
    Author,
    Keyword,
    KeywordFree,
    Category,
    Journal,
}

impl FieldKind {
    pub const ALL: [FieldKind; 7] = [
        FieldKind::Title,
        FieldKind::Abstract,
        FieldKind::Author,
        FieldKind::Keyword,
        FieldKind::KeywordFree,
        FieldKind::Category,
        FieldKind::Journal,
    ];

    /// Title and abstract are tokenized; all other fields match whole values.
    pub fn is_free_text(self) -> bool {
        matches!(self, FieldKind::Title | FieldKind::Abstract)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FieldKind::Title => "title",
            FieldKind::Abstract => "abstract",
            FieldKind::Author => "author",
            FieldKind::Keyword => "keyword",
            FieldKind::KeywordFree => "keyword_free",
            FieldKind::Category => "category",
            FieldKind::Journal => "journal",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lowercase, NFC, whitespace collapsed. Used for all exact-value fields.
pub fn normalize_value(raw: &str) -> String {
    let lowered: String = raw.to_lowercase().nfc().collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Lowercased Unicode word tokens of at least [`MIN_TOKEN_CHARS`] characters.
pub fn tokenize(raw: &str) -> Vec<String> {
    let lowered: String = raw.to_lowercase().nfc().collect();
    lowered
        .unicode_words()
        .filter(|w| w.chars().count() >= MIN_TOKEN_CHARS)
        .map(str::to_owned)
        .collect()
}

/// Normalizes `raw` the way `kind` is indexed: a single value (or nothing,
/// for blank input) for exact-value kinds, a token list for free text.
pub fn normalize_term(raw: &str, kind: FieldKind) -> Vec<String> {
    if kind.is_free_text() {
        tokenize(raw)
    } else {
        let value = normalize_value(raw);
        if value.is_empty() {
            Vec::new()
        } else {
            vec![value]
        }
    }
}

/// One bibliographic record, the unit of browsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub title: String,
    #[serde(default)]
    pub abstracts: BTreeMap<String, String>,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub keywords_free: Vec<String>,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl DocumentRecord {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>) -> Self {
        DocumentRecord {
            doc_id: doc_id.into(),
            title: title.into(),
            abstracts: BTreeMap::new(),
            authors: Vec::new(),
            keywords: Vec::new(),
            keywords_free: Vec::new(),
            categories: Vec::new(),
            journal: None,
            year: None,
            language: None,
        }
    }

    /// Raw values this record holds for an exact-value field.
    pub fn values(&self, kind: FieldKind) -> Vec<&str> {
        match kind {
            FieldKind::Title => vec![self.title.as_str()],
            FieldKind::Abstract => self.abstracts.values().map(String::as_str).collect(),
            FieldKind::Author => self.authors.iter().map(String::as_str).collect(),
            FieldKind::Keyword => self.keywords.iter().map(String::as_str).collect(),
            FieldKind::KeywordFree => self.keywords_free.iter().map(String::as_str).collect(),
            FieldKind::Category => self.categories.iter().map(String::as_str).collect(),
            FieldKind::Journal => self.journal.iter().map(String::as_str).collect(),
        }
    }

    /// Trims display strings, drops blanks and removes list entries that
    /// collide after normalization (first spelling wins).
    pub fn normalized(mut self) -> Self {
        fn clean_list(list: &mut Vec<String>) {
            let mut seen = HashSet::new();
            list.retain_mut(|v| {
                *v = v.split_whitespace().collect::<Vec<_>>().join(" ");
                !v.is_empty() && seen.insert(normalize_value(v))
            });
        }
        self.doc_id = self.doc_id.trim().to_owned();
        self.title = self.title.trim().to_owned();
        self.abstracts.retain(|_, text| !text.trim().is_empty());
        clean_list(&mut self.authors);
        clean_list(&mut self.keywords);
        clean_list(&mut self.keywords_free);
        clean_list(&mut self.categories);
        self.journal = self
            .journal
            .map(|j| j.split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|j| !j.is_empty());
        self.language = self.language.map(|l| normalize_value(&l)).filter(|l| !l.is_empty());
        self
    }

    fn field_term_counts(&self, kind: FieldKind) -> Vec<(String, u32)> {
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for raw in self.values(kind) {
            for term in normalize_term(raw, kind) {
                *counts.entry(term).or_default() += 1;
            }
        }
        if !kind.is_free_text() {
            // list entries are deduplicated, but be exact about 0/1 anyway
            counts.values_mut().for_each(|c| *c = 1);
        }
        counts.into_iter().collect()
    }
}

/// Wire form of a corpus line. `id` is optional here so a missing id can be
/// reported against its line instead of failing the whole parse.
#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    #[serde(default)]
    title: String,
    #[serde(default)]
    abstracts: BTreeMap<String, String>,
    #[serde(default)]
    authors: Vec<String>,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default)]
    keywords_free: Vec<String>,
    #[serde(default)]
    categories: Vec<String>,
    journal: Option<String>,
    year: Option<i32>,
    language: Option<String>,
}

/// Position of a document in `doc_id` order.
pub type DocOrd = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: DocOrd,
    pub tf: u32,
}

/// Immutable field-aware inverted index with the stored documents.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    docs: Vec<DocumentRecord>,
    ords: HashMap<String, DocOrd>,
    postings: [HashMap<String, Vec<Posting>>; 7],
    // per document, per field slot: (term, tf) sorted by term
    forward: Vec<[Vec<(String, u32)>; 7]>,
}

pub struct Ingested {
    pub index: CorpusIndex,
    pub diagnostics: Vec<LineDiagnostic>,
}

/// Parses a line-delimited corpus. Blank lines are skipped, malformed lines
/// and records without an id are reported and skipped, a duplicate id
/// aborts.
pub fn ingest_corpus<R: BufRead>(source: R) -> Result<Ingested, CorpusError> {
    let mut records = Vec::new();
    let mut first_seen: HashMap<String, usize> = HashMap::new();
    let mut diagnostics = Vec::new();

    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(raw) => raw,
            Err(e) => {
                diagnostics.push(LineDiagnostic {
                    line: line_no,
                    message: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        let Some(id) = raw.id.filter(|id| !id.trim().is_empty()) else {
            diagnostics.push(LineDiagnostic {
                line: line_no,
                message: "record has no id".into(),
            });
            continue;
        };
        if let Some(year) = raw.year {
            if !YEAR_RANGE.contains(&year) {
                diagnostics.push(LineDiagnostic {
                    line: line_no,
                    message: format!("year {year} outside {YEAR_RANGE:?}"),
                });
                continue;
            }
        }
        let record = DocumentRecord {
            doc_id: id,
            title: raw.title,
            abstracts: raw.abstracts,
            authors: raw.authors,
            keywords: raw.keywords,
            keywords_free: raw.keywords_free,
            categories: raw.categories,
            journal: raw.journal,
            year: raw.year,
            language: raw.language,
        }
        .normalized();
        if let Some(&first_line) = first_seen.get(&record.doc_id) {
            return Err(CorpusError::DuplicateId {
                doc_id: record.doc_id,
                first_line,
                second_line: line_no,
            });
        }
        first_seen.insert(record.doc_id.clone(), line_no);
        records.push(record);
    }

    let index = CorpusIndex::build(records);
    Ok(Ingested { index, diagnostics })
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Ingested, CorpusError> {
    let file = File::open(path)?;
    ingest_corpus(BufReader::new(file))
}

impl CorpusIndex {
    /// Builds an index from records that already have unique ids.
    pub fn from_records(records: Vec<DocumentRecord>) -> Result<Self, CorpusError> {
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            if let Some(&first) = seen.get(r.doc_id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    doc_id: r.doc_id.clone(),
                    first_line: first + 1,
                    second_line: i + 1,
                });
            }
            seen.insert(&r.doc_id, i);
        }
        Ok(Self::build(records.into_iter().map(DocumentRecord::normalized).collect()))
    }

    fn build(mut docs: Vec<DocumentRecord>) -> Self {
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let mut postings: [HashMap<String, Vec<Posting>>; 7] = Default::default();
        let mut forward = Vec::with_capacity(docs.len());
        let mut ords = HashMap::with_capacity(docs.len());

        for (ord, doc) in docs.iter().enumerate() {
            let ord = ord as DocOrd;
            ords.insert(doc.doc_id.clone(), ord);
            let fields: [Vec<(String, u32)>; 7] =
                FieldKind::ALL.map(|kind| doc.field_term_counts(kind));
            for kind in FieldKind::ALL {
                for (term, tf) in &fields[kind.slot()] {
                    postings[kind.slot()]
                        .entry(term.clone())
                        .or_default()
                        .push(Posting { doc: ord, tf: *tf });
                }
            }
            forward.push(fields);
        }

        CorpusIndex {
            docs,
            ords,
            postings,
            forward,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[DocumentRecord] {
        &self.docs
    }

    pub fn document(&self, doc_id: &str) -> Option<&DocumentRecord> {
        self.ordinal(doc_id).map(|ord| &self.docs[ord as usize])
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<DocOrd> {
        self.ords.get(doc_id).copied()
    }

    pub fn doc(&self, ord: DocOrd) -> &DocumentRecord {
        &self.docs[ord as usize]
    }

    /// Postings for a normalized term, sorted by ordinal.
    pub fn postings(&self, field: FieldKind, term: &str) -> &[Posting] {
        self.postings[field.slot()]
            .get(term)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn df(&self, field: FieldKind, term: &str) -> usize {
        self.postings(field, term).len()
    }

    /// `1 + ln(N / (1 + df))`; strictly positive for any df ≤ N.
    pub fn idf(&self, field: FieldKind, term: &str) -> f64 {
        idf(self.doc_count(), self.df(field, term))
    }

    pub fn tf(&self, field: FieldKind, term: &str, ord: DocOrd) -> u32 {
        let list = self.postings(field, term);
        list.binary_search_by_key(&ord, |p| p.doc)
            .map(|i| list[i].tf)
            .unwrap_or(0)
    }

    /// `tf × idf` of a normalized term in one field of one document.
    pub fn tf_idf(&self, term: &str, field: FieldKind, doc_id: &str) -> Result<f64, CorpusError> {
        let ord = self
            .ordinal(doc_id)
            .ok_or_else(|| CorpusError::UnknownDocument(doc_id.to_owned()))?;
        Ok(self.tf_idf_ord(term, field, ord))
    }

    pub fn tf_idf_ord(&self, term: &str, field: FieldKind, ord: DocOrd) -> f64 {
        match self.tf(field, term, ord) {
            0 => 0.0,
            tf => tf as f64 * self.idf(field, term),
        }
    }

    /// The normalized terms of one field of a document, with frequencies.
    pub fn field_terms(&self, ord: DocOrd, field: FieldKind) -> &[(String, u32)] {
        &self.forward[ord as usize][field.slot()]
    }

    pub fn term_count(&self, field: FieldKind) -> usize {
        self.postings[field.slot()].len()
    }

    /// Distinct terms of a field in lexicographic order.
    pub fn terms(&self, field: FieldKind) -> Vec<&str> {
        let mut terms: Vec<&str> = self.postings[field.slot()].keys().map(String::as_str).collect();
        terms.sort_unstable();
        terms
    }
}

pub fn idf(doc_count: usize, df: usize) -> f64 {
    1.0 + (doc_count as f64 / (1 + df) as f64).ln()
}
