//! The three stratagem rankers.
//!
//! All three share the same candidate set: every document matching at least
//! one clause of the expanded filter query. They differ only in what is added
//! to the filter score:
//!
//! | arm | total score |
//! |-----|-------------|
//! | A   | filter |
//! | B   | filter + similarity to the seed document |
//! | C   | filter + session-context boosts |
//!
//! Scores are accumulated clause by clause in query order, so an
//! independent per-document rescoring that follows the same order produces
//! bit-identical totals.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_term, normalize_value, tokenize, CorpusIndex, DocOrd, FieldKind};
use crate::session::{ExperimentArm, SessionContext};

#[derive(Debug, thiserror::Error)]
pub enum RankingError {
    #[error("stratagem value is empty")]
    EmptyValue,
    #[error("seed document {0:?} is not in the index")]
    UnknownSeed(String),
    #[error("unknown stratagem kind {0:?}")]
    UnknownKind(String),
    #[error("cannot read thesaurus: {0}")]
    Io(#[from] std::io::Error),
}

/// The browsing moves available from a seed document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratagemKind {
    Keyword,
    Author,
    Category,
    Journal,
}

impl StratagemKind {
    pub const ALL: [StratagemKind; 4] = [
        StratagemKind::Keyword,
        StratagemKind::Author,
        StratagemKind::Category,
        StratagemKind::Journal,
    ];

    /// The document field holding values of this kind.
    pub fn field(self) -> FieldKind {
        match self {
            StratagemKind::Keyword => FieldKind::Keyword,
            StratagemKind::Author => FieldKind::Author,
            StratagemKind::Category => FieldKind::Category,
            StratagemKind::Journal => FieldKind::Journal,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StratagemKind::Keyword => "keyword",
            StratagemKind::Author => "author",
            StratagemKind::Category => "category",
            StratagemKind::Journal => "journal",
        }
    }
}

impl fmt::Display for StratagemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StratagemKind {
    type Err = RankingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StratagemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| RankingError::UnknownKind(s.to_owned()))
    }
}

/// A stratagem browse: "documents sharing this value with the seed".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratagemQuery {
    pub kind: StratagemKind,
    pub value: String,
    pub seed_doc_id: String,
}

impl StratagemQuery {
    pub fn new(
        kind: StratagemKind,
        value: impl Into<String>,
        seed_doc_id: impl Into<String>,
    ) -> Result<Self, RankingError> {
        let value = value.into();
        if normalize_value(&value).is_empty() {
            return Err(RankingError::EmptyValue);
        }
        Ok(StratagemQuery {
            kind,
            value,
            seed_doc_id: seed_doc_id.into(),
        })
    }
}

/// Synonyms and translations keyed by normalized term.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Thesaurus {
    entries: HashMap<String, BTreeSet<String>>,
}

impl Thesaurus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds expansions for `term`. The term itself is never stored as its
    /// own expansion.
    pub fn insert<I, S>(&mut self, term: &str, expansions: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let key = normalize_value(term);
        if key.is_empty() {
            return;
        }
        let entry = self.entries.entry(key.clone()).or_default();
        for e in expansions {
            let e = normalize_value(e.as_ref());
            if !e.is_empty() && e != key {
                entry.insert(e);
            }
        }
    }

    /// Reads the tab-separated format: term, then one expansion per column.
    /// Blank lines and lines starting with `#` are ignored.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, RankingError> {
        let mut th = Thesaurus::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            if let Some(term) = cols.next() {
                th.insert(term, cols);
            }
        }
        Ok(th)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, RankingError> {
        let file = std::fs::File::open(path)?;
        Self::from_tsv(std::io::BufReader::new(file))
    }

    /// Expansions of an already normalized term, in lexicographic order.
    pub fn expansions(&self, term: &str) -> impl Iterator<Item = &str> {
        self.entries
            .get(term)
            .into_iter()
            .flat_map(|set| set.iter().map(String::as_str))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBoost {
    pub field: FieldKind,
    pub boost: f64,
}

/// How one stratagem kind expands into boosted field clauses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldExpansion {
    pub kind: StratagemKind,
    pub primary: FieldBoost,
    #[serde(default)]
    pub related: Vec<FieldBoost>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextBases {
    pub title: f64,
    pub keyword: f64,
    pub category: f64,
}

impl Default for ContextBases {
    fn default() -> Self {
        ContextBases {
            title: 1700.0,
            keyword: 1200.0,
            category: 800.0,
        }
    }
}

/// More-like-this term selection parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimilarityParams {
    pub min_df: usize,
    pub max_terms: usize,
    pub min_token_chars: usize,
    /// Clause boost of every similarity term; its weight is `boost × idf`.
    pub boost: f64,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        SimilarityParams {
            min_df: 2,
            max_terms: 25,
            min_token_chars: 2,
            boost: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankingConfig {
    pub expansions: Vec<FieldExpansion>,
    pub context: ContextBases,
    pub similarity: SimilarityParams,
}

impl Default for RankingConfig {
    fn default() -> Self {
        let plain = |kind: StratagemKind| FieldExpansion {
            kind,
            primary: FieldBoost {
                field: kind.field(),
                boost: 400.0,
            },
            related: Vec::new(),
        };
        RankingConfig {
            expansions: vec![
                FieldExpansion {
                    kind: StratagemKind::Keyword,
                    primary: FieldBoost {
                        field: FieldKind::Keyword,
                        boost: 400.0,
                    },
                    related: vec![FieldBoost {
                        field: FieldKind::KeywordFree,
                        boost: 250.0,
                    }],
                },
                plain(StratagemKind::Author),
                plain(StratagemKind::Category),
                plain(StratagemKind::Journal),
            ],
            context: ContextBases::default(),
            similarity: SimilarityParams::default(),
        }
    }
}

impl RankingConfig {
    /// Every boost base multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut cfg = self.clone();
        for e in &mut cfg.expansions {
            e.primary.boost *= factor;
            for r in &mut e.related {
                r.boost *= factor;
            }
        }
        cfg.context.title *= factor;
        cfg.context.keyword *= factor;
        cfg.context.category *= factor;
        cfg.similarity.boost *= factor;
        cfg
    }

    fn expansion(&self, kind: StratagemKind) -> FieldExpansion {
        self.expansions
            .iter()
            .find(|e| e.kind == kind)
            .cloned()
            .unwrap_or(FieldExpansion {
                kind,
                primary: FieldBoost {
                    field: kind.field(),
                    boost: 400.0,
                },
                related: Vec::new(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub field: FieldKind,
    pub term: String,
    pub boost: f64,
}

impl Clause {
    /// Contribution of this clause to a document holding the term `tf` times.
    /// Free text scores `boost × tf × idf`, exact values `boost × idf`.
    fn score(&self, tf: u32, idf: f64) -> f64 {
        if tf == 0 {
            0.0
        } else if self.field.is_free_text() {
            self.boost * (tf as f64 * idf)
        } else {
            self.boost * idf
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedQuery {
    pub clauses: Vec<Clause>,
    pub query: StratagemQuery,
}

/// Expands the stratagem value with thesaurus entries and spreads it over the
/// configured primary and related fields.
pub fn expand_filter(q: &StratagemQuery, th: &Thesaurus, cfg: &RankingConfig) -> ExpandedQuery {
    let value = normalize_value(&q.value);
    let mut values = vec![value.clone()];
    values.extend(th.expansions(&value).map(str::to_owned));

    let expansion = cfg.expansion(q.kind);
    let mut clauses: Vec<Clause> = Vec::new();
    for fb in std::iter::once(&expansion.primary).chain(&expansion.related) {
        for v in &values {
            for term in normalize_term(v, fb.field) {
                if !clauses.iter().any(|c| c.field == fb.field && c.term == term) {
                    clauses.push(Clause {
                        field: fb.field,
                        term,
                        boost: fb.boost,
                    });
                }
            }
        }
    }
    ExpandedQuery {
        clauses,
        query: q.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
    pub filter: f64,
    pub similarity: f64,
    pub context: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub entries: Vec<RankedEntry>,
    pub query: StratagemQuery,
    pub arm: ExperimentArm,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.doc_id.as_str()).collect()
    }
}

/// Score descending, ties by ascending ordinal (= ascending doc_id).
pub(crate) fn by_score_then_ord(a: (DocOrd, f64), b: (DocOrd, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Filter clause contributions of every candidate, keyed by ordinal.
fn filter_scores(eq: &ExpandedQuery, index: &CorpusIndex) -> BTreeMap<DocOrd, Scored> {
    let mut scores: BTreeMap<DocOrd, Scored> = BTreeMap::new();
    for clause in &eq.clauses {
        let idf = index.idf(clause.field, &clause.term);
        for p in index.postings(clause.field, &clause.term) {
            scores
                .entry(p.doc)
                .or_insert_with(|| Scored::new(p.doc))
                .filter
                .push(clause.score(p.tf, idf));
        }
    }
    scores
}

/// Per-document clause contributions, kept apart so that sums come out
/// bit-identical whenever two documents collect the same contributions.
struct Scored {
    ord: DocOrd,
    filter: Vec<f64>,
    similarity: Vec<f64>,
    context: Vec<f64>,
}

fn ordered_sum<'a>(parts: impl Iterator<Item = &'a f64>) -> f64 {
    let mut parts: Vec<f64> = parts.copied().collect();
    parts.sort_by(f64::total_cmp);
    parts.into_iter().sum()
}

impl Scored {
    fn new(ord: DocOrd) -> Self {
        Self {
            ord,
            filter: Vec::new(),
            similarity: Vec::new(),
            context: Vec::new(),
        }
    }

    fn total(&self) -> f64 {
        ordered_sum(self.filter.iter().chain(&self.similarity).chain(&self.context))
    }
}

fn finish(
    mut scored: Vec<Scored>,
    query: &StratagemQuery,
    arm: ExperimentArm,
    index: &CorpusIndex,
) -> RankedList {
    let seed = index.ordinal(&query.seed_doc_id);
    scored.retain(|s| Some(s.ord) != seed);
    let mut totals: Vec<(f64, Scored)> = scored.into_iter().map(|s| (s.total(), s)).collect();
    totals.sort_by(|a, b| by_score_then_ord((a.1.ord, a.0), (b.1.ord, b.0)));
    RankedList {
        entries: totals
            .into_iter()
            .map(|(score, s)| RankedEntry {
                doc_id: index.doc(s.ord).doc_id.clone(),
                score,
                filter: ordered_sum(s.filter.iter()),
                similarity: ordered_sum(s.similarity.iter()),
                context: ordered_sum(s.context.iter()),
            })
            .collect(),
        query: query.clone(),
        arm,
    }
}

/// Baseline: boosted Boolean filter.
pub fn rank_default(eq: &ExpandedQuery, index: &CorpusIndex) -> RankedList {
    let scored = filter_scores(eq, index).into_values().collect();
    finish(scored, &eq.query, ExperimentArm::Baseline, index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTerm {
    pub field: FieldKind,
    pub term: String,
    pub weight: f64,
}

/// Fields of the seed document that similarity terms are drawn from.
pub const SIMILARITY_FIELDS: [FieldKind; 4] = [
    FieldKind::Author,
    FieldKind::Keyword,
    FieldKind::Journal,
    FieldKind::Abstract,
];

/// Picks the seed's most distinctive terms: `tf × idf` over the similarity
/// fields, dropping terms rarer than `min_df` or shorter than
/// `min_token_chars`. Weight of a kept term is its idf times `params.boost`.
pub fn select_similarity_terms(
    seed_doc_id: &str,
    index: &CorpusIndex,
    params: &SimilarityParams,
) -> Result<Vec<SimilarityTerm>, RankingError> {
    let seed = index
        .ordinal(seed_doc_id)
        .ok_or_else(|| RankingError::UnknownSeed(seed_doc_id.to_owned()))?;

    let mut candidates: Vec<(f64, usize, &str, f64)> = Vec::new();
    for (field_rank, field) in SIMILARITY_FIELDS.into_iter().enumerate() {
        for (term, tf) in index.field_terms(seed, field) {
            if term.chars().count() < params.min_token_chars || index.df(field, term) < params.min_df {
                continue;
            }
            let idf = index.idf(field, term);
            candidates.push((*tf as f64 * idf, field_rank, term, idf));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(b.2)));
    candidates.truncate(params.max_terms);

    Ok(candidates
        .into_iter()
        .map(|(_, field_rank, term, idf)| SimilarityTerm {
            field: SIMILARITY_FIELDS[field_rank],
            term: term.to_owned(),
            weight: params.boost * idf,
        })
        .collect())
}

/// Similarity re-ranking: filter score plus `Σ weight × tf_idf` over the
/// selected seed terms each candidate contains.
pub fn rank_similar(
    eq: &ExpandedQuery,
    index: &CorpusIndex,
    params: &SimilarityParams,
) -> Result<RankedList, RankingError> {
    let terms = select_similarity_terms(&eq.query.seed_doc_id, index, params)?;
    let mut scored = filter_scores(eq, index);

    for t in &terms {
        let idf = index.idf(t.field, &t.term);
        for p in index.postings(t.field, &t.term) {
            if let Some(s) = scored.get_mut(&p.doc) {
                s.similarity.push(t.weight * (p.tf as f64 * idf));
            }
        }
    }
    Ok(finish(
        scored.into_values().collect(),
        &eq.query,
        ExperimentArm::Similarity,
        index,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TitleClause {
    pub query: String,
    pub tokens: Vec<String>,
    pub boost: f64,
}

/// Session-context boost clauses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextBoosts {
    pub titles: Vec<TitleClause>,
    pub keywords: Vec<Clause>,
    pub categories: Vec<Clause>,
}

impl ContextBoosts {
    pub fn is_empty(&self) -> bool {
        self.titles.is_empty() && self.keywords.is_empty() && self.categories.is_empty()
    }
}

/// One title clause per session query at the title base, keyword and
/// category clauses at their base times the context rank.
pub fn build_context_boosts(ctx: &SessionContext, bases: &ContextBases) -> ContextBoosts {
    let exact = |field: FieldKind, base: f64, terms: &[crate::session::RankedTerm]| {
        terms
            .iter()
            .filter_map(|t| {
                let term = normalize_value(&t.term);
                (!term.is_empty()).then_some(Clause {
                    field,
                    term,
                    boost: base * t.rank,
                })
            })
            .collect()
    };
    ContextBoosts {
        titles: ctx
            .queries
            .iter()
            .map(|q| TitleClause {
                query: q.clone(),
                tokens: tokenize(q),
                boost: bases.title,
            })
            .collect(),
        keywords: exact(FieldKind::Keyword, bases.keyword, &ctx.keywords),
        categories: exact(FieldKind::Category, bases.category, &ctx.categories),
    }
}

/// Session-context re-ranking: filter score plus the boost clauses.
pub fn rank_contextual(
    eq: &ExpandedQuery,
    boosts: &ContextBoosts,
    index: &CorpusIndex,
) -> RankedList {
    let mut scored = filter_scores(eq, index);

    for title in &boosts.titles {
        for token in &title.tokens {
            let idf = index.idf(FieldKind::Title, token);
            for p in index.postings(FieldKind::Title, token) {
                if let Some(s) = scored.get_mut(&p.doc) {
                    s.context.push(title.boost * (p.tf as f64 * idf));
                }
            }
        }
    }
    for clause in boosts.keywords.iter().chain(&boosts.categories) {
        let idf = index.idf(clause.field, &clause.term);
        for p in index.postings(clause.field, &clause.term) {
            if let Some(s) = scored.get_mut(&p.doc) {
                s.context.push(clause.score(p.tf, idf));
            }
        }
    }
    finish(
        scored.into_values().collect(),
        &eq.query,
        ExperimentArm::SessionContext,
        index,
    )
}
