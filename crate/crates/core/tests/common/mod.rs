//! Fixtures and brute-force reference implementations shared by the
//! integration tests and the acceptance target.
//!
//! The references rescore every document from its raw record and rescan the
//! whole log for every quantity; they share nothing with the library beyond
//! the text normalization helpers.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cbrowse::corpus::{normalize_value, tokenize, DocumentRecord, FieldKind};
use cbrowse::corpus::CorpusIndex;
use cbrowse::ranking::{
    build_context_boosts, expand_filter, rank_contextual, rank_default, rank_similar, RankedList, RankingConfig,
    StratagemKind, StratagemQuery, Thesaurus,
};
use cbrowse::session::{EventPayload, ExperimentArm, RankedTerm, ResultOrigin, SessionContext, SessionEvent};
use rand::seq::IndexedRandom;
use rand::Rng;

pub const TITLE_BASE: f64 = 1700.0;
pub const KEYWORD_BASE: f64 = 1200.0;
pub const CATEGORY_BASE: f64 = 800.0;
pub const PRIMARY_BOOST: f64 = 400.0;
pub const RELATED_BOOST: f64 = 250.0;

fn pool(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn pick_set<R: Rng>(rng: &mut R, from: &[String], lo: usize, hi: usize) -> Vec<String> {
    let n = rng.random_range(lo..=hi);
    let mut out: Vec<String> = Vec::new();
    for _ in 0..n {
        let v = from.choose(rng).unwrap().clone();
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// A corpus with small vocabularies so that overlaps and score ties are common.
pub fn random_records<R: Rng>(rng: &mut R, n: usize) -> Vec<DocumentRecord> {
    let words = pool("w", 30);
    let keywords: Vec<String> = pool("Topic ", 15);
    let free: Vec<String> = (0..10).map(|i| format!("Topic {}", i * 2)).chain(pool("loose", 4)).collect();
    let authors = pool("Author ", 25);
    let categories = pool("Class ", 8);
    let journals = pool("Journal ", 6);
    (0..n)
        .map(|i| {
            let title_len = rng.random_range(1..=6);
            let title: Vec<&str> = (0..title_len).map(|_| words.choose(rng).unwrap().as_str()).collect();
            let mut d = DocumentRecord::new(format!("d{i:05}"), title.join(" "));
            for lang in ["en", "de"] {
                if rng.random_bool(0.6) {
                    let len = rng.random_range(3..=12);
                    let text: Vec<&str> = (0..len).map(|_| words.choose(rng).unwrap().as_str()).collect();
                    d.abstracts.insert(lang.into(), text.join(" "));
                }
            }
            d.authors = pick_set(rng, &authors, 0, 3);
            d.keywords = pick_set(rng, &keywords, 0, 4);
            d.keywords_free = pick_set(rng, &free, 0, 2);
            d.categories = pick_set(rng, &categories, 0, 2);
            d.journal = rng.random_bool(0.8).then(|| journals.choose(rng).unwrap().clone());
            d.year = Some(rng.random_range(1990..=2020));
            d
        })
        .collect()
}

/// Term to expansions, applied one way.
pub fn random_thesaurus<R: Rng>(rng: &mut R) -> Vec<(String, Vec<String>)> {
    (0..6)
        .map(|_| {
            let t = format!("Topic {}", rng.random_range(0..15));
            let e = (0..rng.random_range(1..=2))
                .map(|_| format!("Topic {}", rng.random_range(0..15)))
                .collect();
            (t, e)
        })
        .collect()
}

pub fn build_thesaurus(entries: &[(String, Vec<String>)]) -> Thesaurus {
    let mut th = Thesaurus::new();
    for (t, e) in entries {
        th.insert(t, e);
    }
    th
}

pub fn has_browsable_value(records: &[DocumentRecord]) -> bool {
    records
        .iter()
        .any(|d| StratagemKind::ALL.iter().any(|k| !d.values(k.field()).is_empty()))
}

/// A stratagem launched from a random document's own metadata.
pub fn random_query<R: Rng>(rng: &mut R, records: &[DocumentRecord]) -> StratagemQuery {
    assert!(has_browsable_value(records), "no document carries a browsable value");
    loop {
        let seed = records.choose(rng).unwrap();
        let kind = *StratagemKind::ALL.choose(rng).unwrap();
        if let Some(v) = seed.values(kind.field()).choose(rng) {
            return StratagemQuery::new(kind, *v, seed.doc_id.clone()).unwrap();
        }
    }
}

pub fn random_context<R: Rng>(rng: &mut R) -> SessionContext {
    let ranked = |rng: &mut R, prefix: &str, n: usize| -> Vec<RankedTerm> {
        let k = rng.random_range(0..=3);
        let mut terms: Vec<RankedTerm> = Vec::new();
        for i in 0..k {
            let term = format!("{prefix}{}", rng.random_range(0..n));
            if terms.iter().any(|t| t.term == term) {
                continue;
            }
            let rank = if i == 0 { 1.0 } else { rng.random_range(1..=6) as f64 / 6.0 };
            terms.push(RankedTerm { term, rank });
        }
        terms
    };
    let queries = (0..rng.random_range(0..=2))
        .map(|_| {
            (0..rng.random_range(1..=3))
                .map(|_| format!("w{}", rng.random_range(0..35)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    SessionContext {
        queries,
        keywords: ranked(rng, "Topic ", 15),
        categories: ranked(rng, "Class ", 8),
        history_size: 0,
        cold_start: false,
    }
}

/// Exhaustive rescoring over raw records.
pub struct RankingOracle<'a> {
    docs: Vec<&'a DocumentRecord>,
    terms: Vec<BTreeMap<(FieldKind, String), u32>>,
    idf_memo: std::cell::RefCell<std::collections::HashMap<(FieldKind, String), f64>>,
    thesaurus: &'a [(String, Vec<String>)],
    /// Multiplier on every boost base.
    pub scale: f64,
}

impl<'a> RankingOracle<'a> {
    pub fn new(records: &'a [DocumentRecord], thesaurus: &'a [(String, Vec<String>)]) -> Self {
        let mut docs: Vec<&DocumentRecord> = records.iter().collect();
        docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        let terms = docs
            .iter()
            .map(|d| {
                FieldKind::ALL
                    .iter()
                    .flat_map(|f| Self::terms(d, *f).into_iter().map(move |(t, c)| ((*f, t), c)))
                    .collect()
            })
            .collect();
        RankingOracle {
            docs,
            terms,
            idf_memo: Default::default(),
            thesaurus,
            scale: 1.0,
        }
    }

    fn terms(doc: &DocumentRecord, field: FieldKind) -> BTreeMap<String, u32> {
        let mut out = BTreeMap::new();
        let raw: Vec<&str> = match field {
            FieldKind::Title => vec![doc.title.as_str()],
            FieldKind::Abstract => doc.abstracts.values().map(|s| s.as_str()).collect(),
            FieldKind::Author => doc.authors.iter().map(|s| s.as_str()).collect(),
            FieldKind::Keyword => doc.keywords.iter().map(|s| s.as_str()).collect(),
            FieldKind::KeywordFree => doc.keywords_free.iter().map(|s| s.as_str()).collect(),
            FieldKind::Category => doc.categories.iter().map(|s| s.as_str()).collect(),
            FieldKind::Journal => doc.journal.iter().map(|s| s.as_str()).collect(),
        };
        for v in raw {
            if matches!(field, FieldKind::Title | FieldKind::Abstract) {
                for t in tokenize(v) {
                    *out.entry(t).or_insert(0) += 1;
                }
            } else {
                let t = normalize_value(v);
                if !t.is_empty() {
                    out.insert(t, 1);
                }
            }
        }
        out
    }

    fn tf(&self, doc: usize, field: FieldKind, term: &str) -> u32 {
        self.terms[doc].get(&(field, term.to_owned())).copied().unwrap_or(0)
    }

    fn df(&self, field: FieldKind, term: &str) -> usize {
        (0..self.docs.len()).filter(|&d| self.tf(d, field, term) > 0).count()
    }

    fn idf(&self, field: FieldKind, term: &str) -> f64 {
        let key = (field, term.to_owned());
        if let Some(v) = self.idf_memo.borrow().get(&key) {
            return *v;
        }
        let v = 1.0 + (self.docs.len() as f64 / (1.0 + self.df(field, term) as f64)).ln();
        self.idf_memo.borrow_mut().insert(key, v);
        v
    }

    fn clauses(&self, q: &StratagemQuery) -> Vec<(FieldKind, String, f64)> {
        let value = normalize_value(&q.value);
        let mut values = vec![value.clone()];
        let mut extra: BTreeSet<String> = BTreeSet::new();
        for (t, es) in self.thesaurus {
            if normalize_value(t) == value {
                for e in es {
                    let e = normalize_value(e);
                    if e != value {
                        extra.insert(e);
                    }
                }
            }
        }
        values.extend(extra);
        let fields: Vec<(FieldKind, f64)> = match q.kind {
            StratagemKind::Keyword => vec![
                (FieldKind::Keyword, PRIMARY_BOOST),
                (FieldKind::KeywordFree, RELATED_BOOST),
            ],
            StratagemKind::Author => vec![(FieldKind::Author, PRIMARY_BOOST)],
            StratagemKind::Category => vec![(FieldKind::Category, PRIMARY_BOOST)],
            StratagemKind::Journal => vec![(FieldKind::Journal, PRIMARY_BOOST)],
        };
        let mut out: Vec<(FieldKind, String, f64)> = Vec::new();
        for (field, boost) in fields {
            for v in &values {
                if !out.iter().any(|(f, t, _)| *f == field && t == v) {
                    out.push((field, v.clone(), boost * self.scale));
                }
            }
        }
        out
    }

    pub fn similarity_terms(&self, seed: &DocumentRecord) -> Vec<(FieldKind, String, f64)> {
        let fields = [FieldKind::Author, FieldKind::Keyword, FieldKind::Journal, FieldKind::Abstract];
        let mut cands: Vec<(f64, usize, String, f64)> = Vec::new();
        for (fi, field) in fields.iter().enumerate() {
            for (term, tf) in Self::terms(seed, *field) {
                if term.chars().count() < 2 || self.df(*field, &term) < 2 {
                    continue;
                }
                let idf = self.idf(*field, &term);
                cands.push((tf as f64 * idf, fi, term, idf));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(25);
        cands.into_iter().map(|(_, fi, t, idf)| (fields[fi], t, self.scale * idf)).collect()
    }

    /// Ranked `(doc_id, score)` for `arm`; `ctx` is used by the context arm.
    pub fn rank(&self, arm: ExperimentArm, q: &StratagemQuery, ctx: &SessionContext) -> Vec<(String, f64)> {
        let clauses = self.clauses(q);
        let sim_terms = match arm {
            ExperimentArm::Similarity => {
                let seed = self.docs.iter().find(|d| d.doc_id == q.seed_doc_id).unwrap();
                self.similarity_terms(seed)
            }
            _ => Vec::new(),
        };
        let mut out = Vec::new();
        for (d, doc) in self.docs.iter().enumerate() {
            if doc.doc_id == q.seed_doc_id {
                continue;
            }
            let mut matched = false;
            let mut filter = 0.0;
            for (field, term, boost) in &clauses {
                if self.tf(d, *field, term) > 0 {
                    matched = true;
                    filter += boost * self.idf(*field, term);
                }
            }
            if !matched {
                continue;
            }
            let mut similarity = 0.0;
            for (field, term, weight) in &sim_terms {
                let tf = self.tf(d, *field, term);
                if tf > 0 {
                    similarity += weight * (tf as f64 * self.idf(*field, term));
                }
            }
            let mut context = 0.0;
            if arm == ExperimentArm::SessionContext {
                for query in &ctx.queries {
                    let mut sum = 0.0;
                    let mut any = false;
                    for token in tokenize(query) {
                        let tf = self.tf(d, FieldKind::Title, &token);
                        if tf > 0 {
                            any = true;
                            sum += tf as f64 * self.idf(FieldKind::Title, &token);
                        }
                    }
                    if any {
                        context += TITLE_BASE * self.scale * sum;
                    }
                }
                for (field, base, terms) in [
                    (FieldKind::Keyword, KEYWORD_BASE, &ctx.keywords),
                    (FieldKind::Category, CATEGORY_BASE, &ctx.categories),
                ] {
                    for t in terms {
                        let term = normalize_value(&t.term);
                        if self.tf(d, field, &term) > 0 {
                            context += base * self.scale * t.rank * self.idf(field, &term);
                        }
                    }
                }
            }
            out.push((doc.doc_id.clone(), filter + similarity + context));
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }
}

/// Reference values for one arm, recomputed by rescanning the log.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct ArmReference {
    pub sessions: usize,
    pub runs: usize,
    pub clicked_runs: usize,
    pub mfr_sample: Vec<f64>,
    pub mfr_large_sample: Vec<f64>,
    pub dwell_included: Vec<f64>,
    pub dwell_excluded: usize,
    pub local: u64,
    pub global: u64,
    pub excluded_sessions: usize,
}

fn is_browse(e: &SessionEvent) -> bool {
    matches!(e.payload, EventPayload::BrowseStratagem { .. })
}

fn closes_run(e: &SessionEvent) -> bool {
    matches!(
        e.payload,
        EventPayload::Query { .. }
            | EventPayload::ViewResults {
                origin: ResultOrigin::Search,
                ..
            }
    )
}

/// Brute-force metrics over an arbitrarily ordered log.
pub fn reference_metrics(events: &[SessionEvent], max_rank: usize, large: usize) -> BTreeMap<ExperimentArm, ArmReference> {
    let mut out: BTreeMap<ExperimentArm, ArmReference> =
        ExperimentArm::ALL.iter().map(|a| (*a, ArmReference::default())).collect();
    let ids: BTreeSet<&str> = events.iter().map(|e| e.session_id.as_str()).collect();
    for id in ids {
        // file order within the session, then a stable sort by time
        let mut s: Vec<&SessionEvent> = events.iter().filter(|e| e.session_id == id).collect();
        s.sort_by_key(|e| e.timestamp);
        let arm = s[0].arm;
        let r = out.get_mut(&arm).unwrap();
        r.sessions += 1;

        for i in 0..s.len() {
            if !is_browse(s[i]) {
                continue;
            }
            r.runs += 1;
            let mut size = None;
            let mut first = None;
            for e in &s[i + 1..] {
                if is_browse(e) || closes_run(e) {
                    break;
                }
                match &e.payload {
                    EventPayload::ViewResults { total_hits, .. } if size.is_none() => size = Some(*total_hits),
                    EventPayload::ClickResult { rank, .. }
                        if first.is_none() && size.is_some_and(|s| *rank <= s) =>
                    {
                        first = Some(*rank)
                    }
                    _ => {}
                }
            }
            if let Some(rank) = first {
                r.clicked_runs += 1;
                if rank <= max_rank {
                    r.mfr_sample.push(rank as f64);
                    if size.unwrap_or(0) >= large {
                        r.mfr_large_sample.push(rank as f64);
                    }
                }
            }
        }

        if let Some(b) = s.iter().position(|e| is_browse(e)) {
            let last = s.iter().map(|e| e.timestamp).max().unwrap();
            let secs = (last - s[b].timestamp) as f64 / 1000.0;
            if secs > 1200.0 {
                r.dwell_excluded += 1;
            } else {
                r.dwell_included.push(secs);
            }
        }

        let signals: Vec<usize> = (0..s.len())
            .filter(|&j| matches!(s[j].payload, EventPayload::Signal { .. }))
            .collect();
        if signals.len() > 10 {
            r.excluded_sessions += 1;
            continue;
        }
        for j in signals {
            let EventPayload::Signal { doc_id, .. } = &s[j].payload else { unreachable!() };
            let Some(b) = (0..j).rev().find(|&k| is_browse(s[k])) else { continue };
            r.global += 1;
            let shown = s[b..j].iter().any(|e| match &e.payload {
                EventPayload::ViewResults {
                    origin: ResultOrigin::Stratagem,
                    doc_ids,
                    ..
                } => doc_ids.contains(doc_id),
                _ => false,
            });
            if shown {
                r.local += 1;
            }
        }
    }
    out
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        _ => false,
    }
}

/// Exact two-sided p-value of U by enumerating every split of the pooled
/// sample: the share of splits whose U is at least as far from the mean.
pub fn exact_mann_whitney(a: &[f64], b: &[f64]) -> (f64, f64) {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let na = a.len();
    let u_of = |mask: u32| -> f64 {
        let mut u = 0.0;
        for i in 0..n {
            if mask & (1 << i) == 0 {
                continue;
            }
            for j in 0..n {
                if mask & (1 << j) != 0 {
                    continue;
                }
                if pooled[i] > pooled[j] {
                    u += 1.0;
                } else if pooled[i] == pooled[j] {
                    u += 0.5;
                }
            }
        }
        u
    };
    let observed = u_of((1u32 << na) - 1);
    let centre = (na * (n - na)) as f64 / 2.0;
    let mut total = 0u64;
    let mut extreme = 0u64;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != na {
            continue;
        }
        total += 1;
        if (u_of(mask) - centre).abs() >= (observed - centre).abs() - 1e-12 {
            extreme += 1;
        }
    }
    (observed, extreme as f64 / total as f64)
}

/// Interleaves the sessions of a log at random while keeping each session's
/// own event order.
pub fn interleave<R: Rng>(rng: &mut R, events: &[SessionEvent]) -> Vec<SessionEvent> {
    let mut queues: BTreeMap<&str, std::collections::VecDeque<&SessionEvent>> = BTreeMap::new();
    for e in events {
        queues.entry(e.session_id.as_str()).or_default().push_back(e);
    }
    let mut keys: Vec<&str> = queues.keys().copied().collect();
    let mut out = Vec::with_capacity(events.len());
    while !keys.is_empty() {
        let k = rng.random_range(0..keys.len());
        let q = queues.get_mut(keys[k]).unwrap();
        out.push(q.pop_front().unwrap().clone());
        if q.is_empty() {
            keys.swap_remove(k);
        }
    }
    out
}

/// The library's ranking for `arm`, with the context given explicitly.
pub fn library_rank(
    index: &CorpusIndex,
    th: &Thesaurus,
    cfg: &RankingConfig,
    arm: ExperimentArm,
    q: &StratagemQuery,
    ctx: &SessionContext,
) -> RankedList {
    let eq = expand_filter(q, th, cfg);
    match arm {
        ExperimentArm::Baseline => rank_default(&eq, index),
        ExperimentArm::Similarity => rank_similar(&eq, index, &cfg.similarity).unwrap(),
        ExperimentArm::SessionContext => rank_contextual(&eq, &build_context_boosts(ctx, &cfg.context), index),
    }
}

/// Compares a library list with an oracle list: same ids in the same order,
/// scores equal up to `1e-9` relative.
pub fn same_ranking(lib: &RankedList, oracle: &[(String, f64)]) -> Result<(), String> {
    let ids: Vec<&str> = lib.entries.iter().map(|e| e.doc_id.as_str()).collect();
    let want: Vec<&str> = oracle.iter().map(|(id, _)| id.as_str()).collect();
    if ids != want {
        return Err(format!("order differs:\n lib    {ids:?}\n oracle {want:?}"));
    }
    for (e, (_, s)) in lib.entries.iter().zip(oracle) {
        if (e.score - s).abs() > 1e-9 * s.abs().max(1.0) {
            return Err(format!("score of {} differs: {} vs {}", e.doc_id, e.score, s));
        }
    }
    Ok(())
}
