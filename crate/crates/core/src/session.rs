//! Session events, experiment arms and the session context.
//!
//! Every interaction is a [`SessionEvent`]. The same JSON-lines schema is
//! written by the live service and by the simulator, and is the only input
//! of the metrics module.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{normalize_value, CorpusIndex, DocumentRecord, LineDiagnostic};
use crate::ranking::StratagemQuery;

/// Inactivity gap after which a session's earlier events no longer feed the
/// session context.
pub const SESSION_TIMEOUT_MS: u64 = 60 * 60 * 1000;

/// Maximum number of keywords and of categories kept in a context.
pub const CONTEXT_TOP_N: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session {session_id:?} is in arm {stored}, event claims {claimed}")]
    ArmMismatch {
        session_id: String,
        stored: ExperimentArm,
        claimed: ExperimentArm,
    },
    #[error("invalid event: {0}")]
    Invalid(String),
    #[error("unknown experiment arm {0:?}")]
    UnknownArm(String),
    #[error("transaction log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExperimentArm {
    #[serde(rename = "A_baseline")]
    Baseline,
    #[serde(rename = "B_similarity")]
    Similarity,
    #[serde(rename = "C_session_context")]
    SessionContext,
}

impl ExperimentArm {
    pub const ALL: [ExperimentArm; 3] = [
        ExperimentArm::Baseline,
        ExperimentArm::Similarity,
        ExperimentArm::SessionContext,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentArm::Baseline => "A_baseline",
            ExperimentArm::Similarity => "B_similarity",
            ExperimentArm::SessionContext => "C_session_context",
        }
    }

    pub fn letter(self) -> char {
        match self {
            ExperimentArm::Baseline => 'A',
            ExperimentArm::Similarity => 'B',
            ExperimentArm::SessionContext => 'C',
        }
    }
}

impl fmt::Display for ExperimentArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentArm {
    type Err = SessionError;

    /// Accepts the full name or just its letter.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentArm::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s) || s.eq_ignore_ascii_case(&a.letter().to_string()))
            .ok_or_else(|| SessionError::UnknownArm(s.to_owned()))
    }
}

/// Implicit relevance signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    AddToFavourites,
    GotoGoogleScholar,
    GotoGoogleBooks,
    GotoFulltext,
    GotoLocalAvailability,
    ExportRecord,
}

impl SignalKind {
    pub const ALL: [SignalKind; 6] = [
        SignalKind::AddToFavourites,
        SignalKind::GotoGoogleScholar,
        SignalKind::GotoGoogleBooks,
        SignalKind::GotoFulltext,
        SignalKind::GotoLocalAvailability,
        SignalKind::ExportRecord,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultOrigin {
    Search,
    Stratagem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event_type", rename_all = "snake_case")]
pub enum EventPayload {
    Query {
        text: String,
    },
    /// A page of results was shown. `offset` is the absolute rank of the
    /// first entry minus one, `total_hits` the size of the whole result set.
    ViewResults {
        origin: ResultOrigin,
        doc_ids: Vec<String>,
        offset: usize,
        total_hits: usize,
    },
    ViewDoc {
        doc_id: String,
    },
    BrowseStratagem {
        #[serde(flatten)]
        stratagem: StratagemQuery,
    },
    ClickResult {
        doc_id: String,
        rank: usize,
        result_set_size: usize,
    },
    Signal {
        signal: SignalKind,
        doc_id: String,
    },
}

impl EventPayload {
    pub fn event_type(&self) -> &'static str {
        match self {
            EventPayload::Query { .. } => "query",
            EventPayload::ViewResults { .. } => "view_results",
            EventPayload::ViewDoc { .. } => "view_doc",
            EventPayload::BrowseStratagem { .. } => "browse_stratagem",
            EventPayload::ClickResult { .. } => "click_result",
            EventPayload::Signal { .. } => "signal",
        }
    }
}

/// One line of the transaction log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
    pub session_id: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub arm: ExperimentArm,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl SessionEvent {
    pub fn new(
        session_id: impl Into<String>,
        timestamp: u64,
        arm: ExperimentArm,
        payload: EventPayload,
    ) -> Self {
        SessionEvent {
            event_id: None,
            session_id: session_id.into(),
            timestamp,
            arm,
            payload,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.session_id.trim().is_empty() {
            return Err(SessionError::Invalid("empty session_id".into()));
        }
        if let EventPayload::ClickResult {
            rank,
            result_set_size,
            ..
        } = &self.payload
        {
            if *rank == 0 || rank > result_set_size {
                return Err(SessionError::Invalid(format!(
                    "click rank {rank} outside 1..={result_set_size}"
                )));
            }
        }
        Ok(())
    }
}

/// Sticky, uniform arm assignment: a stable hash of `(seed, session_id)`.
pub fn assign_arm(session_id: &str, seed: u64) -> ExperimentArm {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(session_id.as_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    ExperimentArm::ALL[(u64::from_le_bytes(head) % 3) as usize]
}

/// Number of events strictly before `at`.
pub fn history_size(events: &[SessionEvent], at: u64) -> usize {
    events.iter().filter(|e| e.timestamp < at).count()
}

/// Events after the last inactivity gap longer than [`SESSION_TIMEOUT_MS`].
pub fn current_segment(events: &[SessionEvent]) -> &[SessionEvent] {
    let start = events
        .windows(2)
        .rposition(|w| w[1].timestamp.saturating_sub(w[0].timestamp) > SESSION_TIMEOUT_MS)
        .map_or(0, |i| i + 1);
    &events[start..]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTerm {
    pub term: String,
    pub rank: f64,
}

/// The short-term user model: queries plus top keywords and categories with
/// max-normalized ranks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionContext {
    pub queries: Vec<String>,
    pub keywords: Vec<RankedTerm>,
    pub categories: Vec<RankedTerm>,
    pub history_size: usize,
    /// Set when the counted lists were replaced by the seed's own metadata.
    #[serde(default)]
    pub cold_start: bool,
}

impl SessionContext {
    pub fn is_empty(&self) -> bool {
        self.queries.is_empty() && self.keywords.is_empty() && self.categories.is_empty()
    }
}

/// Keyword (controlled and free) and category occurrence counts over viewed
/// documents and delivered result lists.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContextCounts {
    pub keywords: BTreeMap<String, u32>,
    pub categories: BTreeMap<String, u32>,
}

impl ContextCounts {
    pub fn max_count(&self) -> u32 {
        self.keywords
            .values()
            .chain(self.categories.values())
            .copied()
            .max()
            .unwrap_or(0)
    }

    fn add(&mut self, doc: &DocumentRecord) {
        for kw in doc_keywords(doc) {
            *self.keywords.entry(kw).or_default() += 1;
        }
        for cat in doc_categories(doc) {
            *self.categories.entry(cat).or_default() += 1;
        }
    }
}

fn doc_keywords(doc: &DocumentRecord) -> BTreeSet<String> {
    doc.keywords
        .iter()
        .chain(&doc.keywords_free)
        .map(|k| normalize_value(k))
        .filter(|k| !k.is_empty())
        .collect()
}

fn doc_categories(doc: &DocumentRecord) -> BTreeSet<String> {
    doc.categories
        .iter()
        .map(|c| normalize_value(c))
        .filter(|c| !c.is_empty())
        .collect()
}

pub fn context_counts(events: &[SessionEvent], index: &CorpusIndex) -> ContextCounts {
    let mut counts = ContextCounts::default();
    for e in events {
        match &e.payload {
            EventPayload::ViewDoc { doc_id } => {
                if let Some(doc) = index.document(doc_id) {
                    counts.add(doc);
                }
            }
            EventPayload::ViewResults { doc_ids, .. } => {
                for doc in doc_ids.iter().filter_map(|id| index.document(id)) {
                    counts.add(doc);
                }
            }
            _ => {}
        }
    }
    counts
}

/// Sorts by count descending then term ascending, truncates to `cap` and
/// divides by the largest count.
pub fn rank_counts(counts: &BTreeMap<String, u32>, cap: Option<usize>) -> Vec<RankedTerm> {
    let mut sorted: Vec<(&String, u32)> = counts.iter().map(|(t, c)| (t, *c)).collect();
    sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    if let Some(cap) = cap {
        sorted.truncate(cap);
    }
    let max = sorted.first().map_or(1, |s| s.1).max(1) as f64;
    sorted
        .into_iter()
        .map(|(term, c)| RankedTerm {
            term: term.clone(),
            rank: c as f64 / max,
        })
        .collect()
}

/// Builds the session context from one session's events.
///
/// When no term occurs more than once the counts carry no preference, so the
/// seed document's own keywords and categories (rank 1) are used instead.
pub fn build_session_context(
    events: &[SessionEvent],
    index: &CorpusIndex,
    seed_doc_id: Option<&str>,
) -> SessionContext {
    let counts = context_counts(events, index);
    let queries = events
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::Query { text } => Some(text.clone()),
            _ => None,
        })
        .collect();
    let mut ctx = SessionContext {
        queries,
        keywords: rank_counts(&counts.keywords, Some(CONTEXT_TOP_N)),
        categories: rank_counts(&counts.categories, Some(CONTEXT_TOP_N)),
        history_size: events.len(),
        cold_start: false,
    };

    if counts.max_count() == 1 {
        if let Some(seed) = seed_doc_id.and_then(|id| index.document(id)) {
            let at_rank_one = |terms: BTreeSet<String>| {
                terms
                    .into_iter()
                    .take(CONTEXT_TOP_N)
                    .map(|term| RankedTerm { term, rank: 1.0 })
                    .collect()
            };
            ctx.keywords = at_rank_one(doc_keywords(seed));
            ctx.categories = at_rank_one(doc_categories(seed));
            ctx.cold_start = true;
        }
    }
    ctx
}

/// Outcome of [`EventStore::record_event`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ack {
    /// False when the event id had already been stored.
    pub stored: bool,
    /// The event's timestamp is earlier than the session's previous event.
    pub out_of_order: bool,
}

#[derive(Debug)]
struct SessionLog {
    arm: ExperimentArm,
    events: Vec<SessionEvent>,
    event_ids: HashSet<String>,
    out_of_order: usize,
}

/// Append-only JSON-lines writer for events.
pub struct TransactionLog {
    out: Mutex<Box<dyn Write + Send>>,
}

impl TransactionLog {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::from_writer(BufWriter::new(file)))
    }

    pub fn from_writer(w: impl Write + Send + 'static) -> Self {
        TransactionLog {
            out: Mutex::new(Box::new(w)),
        }
    }

    pub fn append(&self, event: &SessionEvent) -> std::io::Result<()> {
        let line = serde_json::to_string(event).map_err(std::io::Error::other)?;
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(out, "{line}")?;
        out.flush()
    }
}

/// Writes events as JSON lines.
pub fn write_log<W: Write>(mut out: W, events: &[SessionEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a transaction log; malformed lines are skipped with a diagnostic.
pub fn read_log<R: BufRead>(reader: R) -> std::io::Result<(Vec<SessionEvent>, Vec<LineDiagnostic>)> {
    let mut events = Vec::new();
    let mut diagnostics = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SessionEvent>(&line) {
            Ok(e) => match e.validate() {
                Ok(()) => events.push(e),
                Err(err) => diagnostics.push(LineDiagnostic {
                    line: i + 1,
                    message: err.to_string(),
                }),
            },
            Err(err) => diagnostics.push(LineDiagnostic {
                line: i + 1,
                message: format!("malformed event: {err}"),
            }),
        }
    }
    Ok((events, diagnostics))
}

pub fn read_log_file(path: impl AsRef<Path>) -> std::io::Result<(Vec<SessionEvent>, Vec<LineDiagnostic>)> {
    read_log(std::io::BufReader::new(File::open(path)?))
}

/// In-memory per-session event logs, optionally mirrored to a durable
/// [`TransactionLog`]. Writes to one session are serialized; distinct
/// sessions proceed in parallel.
#[derive(Default)]
pub struct EventStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionLog>>>>,
    log: Option<TransactionLog>,
}

impl EventStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_log(log: TransactionLog) -> Self {
        EventStore {
            sessions: RwLock::default(),
            log: Some(log),
        }
    }

    fn session(&self, session_id: &str) -> Option<Arc<Mutex<SessionLog>>> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(session_id)
            .cloned()
    }

    /// Returns the session's arm, creating the session with `arm` if new.
    pub fn ensure_session(&self, session_id: &str, arm: ExperimentArm) -> ExperimentArm {
        if let Some(s) = self.session(session_id) {
            return s.lock().unwrap_or_else(|e| e.into_inner()).arm;
        }
        let mut map = self.sessions.write().unwrap_or_else(|e| e.into_inner());
        let s = map.entry(session_id.to_owned()).or_insert_with(|| {
            Arc::new(Mutex::new(SessionLog {
                arm,
                events: Vec::new(),
                event_ids: HashSet::new(),
                out_of_order: 0,
            }))
        });
        let arm = s.lock().unwrap_or_else(|e| e.into_inner()).arm;
        arm
    }

    pub fn arm(&self, session_id: &str) -> Option<ExperimentArm> {
        self.session(session_id)
            .map(|s| s.lock().unwrap_or_else(|e| e.into_inner()).arm)
    }

    /// Appends an event to its session and to the transaction log.
    pub fn record_event(&self, event: SessionEvent) -> Result<Ack, SessionError> {
        event.validate()?;
        let arm = self.ensure_session(&event.session_id, event.arm);
        if arm != event.arm {
            return Err(SessionError::ArmMismatch {
                session_id: event.session_id,
                stored: arm,
                claimed: event.arm,
            });
        }
        let session = self.session(&event.session_id).expect("session just ensured");
        let mut s = session.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(id) = &event.event_id {
            if !s.event_ids.insert(id.clone()) {
                return Ok(Ack {
                    stored: false,
                    out_of_order: false,
                });
            }
        }
        let out_of_order = s.events.last().is_some_and(|last| event.timestamp < last.timestamp);
        if out_of_order {
            s.out_of_order += 1;
        }
        // session lock held: per-session order in the log matches memory
        if let Some(log) = &self.log {
            log.append(&event)?;
        }
        s.events.push(event);
        Ok(Ack {
            stored: true,
            out_of_order,
        })
    }

    pub fn events(&self, session_id: &str) -> Vec<SessionEvent> {
        self.session(session_id)
            .map(|s| s.lock().unwrap_or_else(|e| e.into_inner()).events.clone())
            .unwrap_or_default()
    }

    pub fn out_of_order_count(&self, session_id: &str) -> usize {
        self.session(session_id)
            .map_or(0, |s| s.lock().unwrap_or_else(|e| e.into_inner()).out_of_order)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    /// Every stored event, sorted by session id then timestamp.
    pub fn all_events(&self) -> Vec<SessionEvent> {
        let map = self.sessions.read().unwrap_or_else(|e| e.into_inner());
        let mut ids: Vec<&String> = map.keys().collect();
        ids.sort();
        let mut out = Vec::new();
        for id in ids {
            let mut events = map[id].lock().unwrap_or_else(|e| e.into_inner()).events.clone();
            events.sort_by_key(|e| e.timestamp);
            out.extend(events);
        }
        out
    }
}
