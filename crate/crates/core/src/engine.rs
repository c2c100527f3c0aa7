//! The browse loop behind the HTTP service and the simulator: search, open a
//! document, browse a stratagem, record feedback. Every call logs its
//! events to the [`EventStore`].

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_value, tokenize, CorpusIndex, DocOrd, DocumentRecord, FieldKind};
use crate::ranking::{
    build_context_boosts, by_score_then_ord, expand_filter, rank_contextual, rank_default, rank_similar,
    RankedList, RankingConfig, RankingError, StratagemKind, StratagemQuery, Thesaurus,
};
use crate::session::{
    assign_arm, build_session_context, current_segment, Ack, EventPayload, EventStore, ExperimentArm,
    ResultOrigin, SessionError, SessionEvent,
};

pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 200;
const SNIPPET_CHARS: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("page must be >= 1 and page size in 1..={MAX_PAGE_SIZE}")]
    InvalidPage,
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

fn default_page() -> usize {
    1
}

fn default_page_size() -> usize {
    DEFAULT_PAGE_SIZE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    #[serde(default = "default_page")]
    pub page: usize,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
}

impl Default for Page {
    fn default() -> Self {
        Page {
            page: 1,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

impl Page {
    pub fn new(page: usize, page_size: usize) -> Self {
        Page { page, page_size }
    }

    fn validate(&self) -> Result<(), EngineError> {
        if self.page == 0 || self.page_size == 0 || self.page_size > MAX_PAGE_SIZE {
            return Err(EngineError::InvalidPage);
        }
        Ok(())
    }

    fn offset(&self) -> usize {
        (self.page - 1) * self.page_size
    }
}

/// Facet-style filters applied after ranking; they never reorder results.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostFilter {
    #[serde(default)]
    pub year_from: Option<i32>,
    #[serde(default)]
    pub year_to: Option<i32>,
    #[serde(default)]
    pub language: Option<String>,
}

impl PostFilter {
    pub fn accepts(&self, doc: &DocumentRecord) -> bool {
        let year_ok = match (self.year_from, self.year_to) {
            (None, None) => true,
            (from, to) => doc.year.is_some_and(|y| {
                from.is_none_or(|f| y >= f) && to.is_none_or(|t| y <= t)
            }),
        };
        let lang_ok = self
            .language
            .as_deref()
            .map(normalize_value)
            .filter(|l| !l.is_empty())
            .is_none_or(|l| doc.language.as_deref() == Some(l.as_str()));
        year_ok && lang_ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowseRequest {
    pub session_id: String,
    pub kind: StratagemKind,
    pub value: String,
    pub seed_doc_id: String,
    #[serde(flatten)]
    pub page: Page,
    #[serde(flatten)]
    pub filters: PostFilter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocSummary {
    pub id: String,
    pub title: String,
    pub authors: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub journal: Option<String>,
    pub snippet: String,
}

impl DocSummary {
    fn of(doc: &DocumentRecord) -> Self {
        let snippet = doc
            .abstracts
            .values()
            .next()
            .map(|a| a.chars().take(SNIPPET_CHARS).collect())
            .unwrap_or_default();
        DocSummary {
            id: doc.doc_id.clone(),
            title: doc.title.clone(),
            authors: doc.authors.clone(),
            year: doc.year,
            journal: doc.journal.clone(),
            snippet,
        }
    }
}

/// One result page. The experiment arm is deliberately not part of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrowseResponse {
    pub results: Vec<DocSummary>,
    pub total_hits: usize,
    pub page: usize,
    pub page_size: usize,
}

impl BrowseResponse {
    pub fn offset(&self) -> usize {
        (self.page - 1) * self.page_size
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratagemLink {
    pub kind: StratagemKind,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocDetail {
    pub document: DocumentRecord,
    pub stratagems: Vec<StratagemLink>,
}

/// Every clickable stratagem of a document, in kind order.
pub fn stratagem_links(doc: &DocumentRecord) -> Vec<StratagemLink> {
    StratagemKind::ALL
        .into_iter()
        .flat_map(|kind| {
            doc.values(kind.field()).into_iter().map(move |v| StratagemLink {
                kind,
                value: v.to_owned(),
            })
        })
        .collect()
}

/// An event posted by a client. The server fills in the arm and, when
/// absent, the timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientEvent {
    #[serde(default)]
    pub event_id: Option<String>,
    pub session_id: String,
    #[serde(default)]
    pub timestamp: Option<u64>,
    #[serde(default)]
    pub arm: Option<ExperimentArm>,
    #[serde(flatten)]
    pub payload: EventPayload,
}

pub struct Engine {
    index: Arc<CorpusIndex>,
    thesaurus: Thesaurus,
    ranking: RankingConfig,
    store: EventStore,
    arm_seed: u64,
    arm_force: Option<ExperimentArm>,
}

impl Engine {
    pub fn new(index: Arc<CorpusIndex>, thesaurus: Thesaurus, ranking: RankingConfig, store: EventStore) -> Self {
        Engine {
            index,
            thesaurus,
            ranking,
            store,
            arm_seed: 0,
            arm_force: None,
        }
    }

    pub fn with_arm_seed(mut self, seed: u64) -> Self {
        self.arm_seed = seed;
        self
    }

    /// Every new session gets `arm` instead of a random one.
    pub fn with_arm_force(mut self, arm: Option<ExperimentArm>) -> Self {
        self.arm_force = arm;
        self
    }

    pub fn index(&self) -> &CorpusIndex {
        &self.index
    }

    pub fn store(&self) -> &EventStore {
        &self.store
    }

    pub fn ranking_config(&self) -> &RankingConfig {
        &self.ranking
    }

    /// The session's arm; unknown sessions are created with a fresh one.
    pub fn session_arm(&self, session_id: &str) -> ExperimentArm {
        let fresh = self
            .arm_force
            .unwrap_or_else(|| assign_arm(session_id, self.arm_seed));
        self.store.ensure_session(session_id, fresh)
    }

    fn log(&self, session_id: &str, arm: ExperimentArm, ts: u64, payload: EventPayload) -> Result<Ack, EngineError> {
        Ok(self
            .store
            .record_event(SessionEvent::new(session_id, ts, arm, payload))?)
    }

    /// Free-text TF-IDF over title and abstract.
    pub fn search_ranked(&self, q: &str) -> Vec<(DocOrd, f64)> {
        let mut scores: BTreeMap<DocOrd, f64> = BTreeMap::new();
        for token in tokenize(q) {
            for field in [FieldKind::Title, FieldKind::Abstract] {
                let idf = self.index.idf(field, &token);
                for p in self.index.postings(field, &token) {
                    *scores.entry(p.doc).or_insert(0.0) += p.tf as f64 * idf;
                }
            }
        }
        let mut ranked: Vec<(DocOrd, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| by_score_then_ord(*a, *b));
        ranked
    }

    fn paginate<'a>(
        &'a self,
        ranked: impl Iterator<Item = &'a DocumentRecord>,
        page: Page,
        filters: &PostFilter,
    ) -> (Vec<&'a DocumentRecord>, usize) {
        let filtered: Vec<&DocumentRecord> = ranked.filter(|d| filters.accepts(d)).collect();
        let total = filtered.len();
        let shown = filtered
            .into_iter()
            .skip(page.offset())
            .take(page.page_size)
            .collect();
        (shown, total)
    }

    fn respond(
        &self,
        session_id: &str,
        arm: ExperimentArm,
        ts: u64,
        origin: ResultOrigin,
        shown: Vec<&DocumentRecord>,
        total_hits: usize,
        page: Page,
    ) -> Result<BrowseResponse, EngineError> {
        self.log(
            session_id,
            arm,
            ts,
            EventPayload::ViewResults {
                origin,
                doc_ids: shown.iter().map(|d| d.doc_id.clone()).collect(),
                offset: page.offset(),
                total_hits,
            },
        )?;
        Ok(BrowseResponse {
            results: shown.into_iter().map(DocSummary::of).collect(),
            total_hits,
            page: page.page,
            page_size: page.page_size,
        })
    }

    /// Logs `query` and `view_results`.
    pub fn search(
        &self,
        session_id: &str,
        q: &str,
        page: Page,
        filters: &PostFilter,
        ts: u64,
    ) -> Result<BrowseResponse, EngineError> {
        if q.trim().is_empty() {
            return Err(EngineError::EmptyQuery);
        }
        page.validate()?;
        let arm = self.session_arm(session_id);
        self.log(session_id, arm, ts, EventPayload::Query { text: q.to_owned() })?;
        let ranked = self.search_ranked(q);
        let (shown, total) = self.paginate(ranked.iter().map(|(ord, _)| self.index.doc(*ord)), page, filters);
        self.respond(session_id, arm, ts, ResultOrigin::Search, shown, total, page)
    }

    /// Logs `view_doc`.
    pub fn view_doc(&self, session_id: &str, doc_id: &str, ts: u64) -> Result<DocDetail, EngineError> {
        let doc = self
            .index
            .document(doc_id)
            .ok_or_else(|| EngineError::UnknownDocument(doc_id.to_owned()))?;
        let arm = self.session_arm(session_id);
        self.log(
            session_id,
            arm,
            ts,
            EventPayload::ViewDoc {
                doc_id: doc_id.to_owned(),
            },
        )?;
        Ok(DocDetail {
            document: doc.clone(),
            stratagems: stratagem_links(doc),
        })
    }

    /// Ranks a stratagem for `arm`. For the session-context arm the context
    /// is rebuilt from the session's current events.
    pub fn rank(
        &self,
        arm: ExperimentArm,
        query: &StratagemQuery,
        session_id: &str,
    ) -> Result<RankedList, EngineError> {
        let eq = expand_filter(query, &self.thesaurus, &self.ranking);
        Ok(match arm {
            ExperimentArm::Baseline => rank_default(&eq, &self.index),
            ExperimentArm::Similarity => rank_similar(&eq, &self.index, &self.ranking.similarity)?,
            ExperimentArm::SessionContext => {
                let events = self.store.events(session_id);
                let ctx = build_session_context(
                    current_segment(&events),
                    &self.index,
                    Some(&query.seed_doc_id),
                );
                let boosts = build_context_boosts(&ctx, &self.ranking.context);
                rank_contextual(&eq, &boosts, &self.index)
            }
        })
    }

    /// Dispatches on the session's arm. Logs `browse_stratagem` and
    /// `view_results`.
    pub fn browse(&self, req: &BrowseRequest, ts: u64) -> Result<BrowseResponse, EngineError> {
        req.page.validate()?;
        let query = StratagemQuery::new(req.kind, req.value.clone(), req.seed_doc_id.clone())?;
        let arm = self.session_arm(&req.session_id);
        let ranked = self.rank(arm, &query, &req.session_id)?;
        self.log(
            &req.session_id,
            arm,
            ts,
            EventPayload::BrowseStratagem { stratagem: query },
        )?;
        let docs = ranked
            .entries
            .iter()
            .filter_map(|e| self.index.document(&e.doc_id));
        let (shown, total) = self.paginate(docs, req.page, &req.filters);
        self.respond(
            &req.session_id,
            arm,
            ts,
            ResultOrigin::Stratagem,
            shown,
            total,
            req.page,
        )
    }

    /// Stores a client event under the session's arm.
    pub fn record(&self, event: ClientEvent, now: u64) -> Result<Ack, EngineError> {
        let arm = self.session_arm(&event.session_id);
        let claimed = event.arm.unwrap_or(arm);
        Ok(self.store.record_event(SessionEvent {
            event_id: event.event_id,
            session_id: event.session_id,
            timestamp: event.timestamp.unwrap_or(now),
            arm: claimed,
            payload: event.payload,
        })?)
    }
}
