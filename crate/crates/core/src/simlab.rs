//! Desk-scale living lab: a planted-topic synthetic corpus and simulated
//! users that drive the [`Engine`] exactly like the web client would.
//!
//! Ground-truth topics live in a sidecar file and are only ever consulted by
//! [`ClickModel`], which plays the user. The rankers never see them.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_corpus, tokenize, CorpusError, CorpusIndex, DocumentRecord};
use crate::engine::{BrowseRequest, BrowseResponse, ClientEvent, Engine, EngineError, Page, PostFilter};
use crate::metrics::{evaluate, EvaluationOptions, MetricReport};
use crate::ranking::{RankingConfig, StratagemKind, Thesaurus};
use crate::session::{EventPayload, EventStore, ExperimentArm, SessionEvent, SignalKind};

/// 2017-09-12T00:00:00Z, in milliseconds.
const BASE_TIMESTAMP: u64 = 1_505_174_400_000;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("cannot parse config: {0}")]
    Toml(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticCorpusSpec {
    pub topics: usize,
    pub docs_per_topic: usize,
    /// Topic-specific title words.
    pub title_vocab: usize,
    /// Topic-specific abstract words.
    pub abstract_vocab: usize,
    /// Words shared by all topics.
    pub shared_vocab: usize,
    pub keywords_per_topic: usize,
    pub shared_keywords: usize,
    /// Probability that a keyword slot draws from the shared pool.
    pub keyword_overlap: f64,
    pub categories_per_topic: usize,
    pub shared_categories: usize,
    pub category_overlap: f64,
    pub authors_per_topic: usize,
    pub journals: usize,
    /// Probability that a document appears in one of its topic's journals.
    pub journal_affinity: f64,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            topics: 5,
            docs_per_topic: 200,
            title_vocab: 30,
            abstract_vocab: 60,
            shared_vocab: 80,
            keywords_per_topic: 10,
            shared_keywords: 6,
            keyword_overlap: 0.4,
            categories_per_topic: 3,
            shared_categories: 3,
            category_overlap: 0.4,
            authors_per_topic: 40,
            journals: 10,
            journal_affinity: 0.6,
            seed: 7,
        }
    }
}

impl SyntheticCorpusSpec {
    fn validate(&self) -> Result<(), SimError> {
        let counts = [
            ("topics", self.topics),
            ("docs_per_topic", self.docs_per_topic),
            ("title_vocab", self.title_vocab),
            ("abstract_vocab", self.abstract_vocab),
            ("shared_vocab", self.shared_vocab),
            ("keywords_per_topic", self.keywords_per_topic),
            ("shared_keywords", self.shared_keywords),
            ("categories_per_topic", self.categories_per_topic),
            ("shared_categories", self.shared_categories),
            ("authors_per_topic", self.authors_per_topic),
            ("journals", self.journals),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(SimError::InvalidSpec(format!("{name} must be at least 1")));
        }
        for (name, p) in [
            ("keyword_overlap", self.keyword_overlap),
            ("category_overlap", self.category_overlap),
            ("journal_affinity", self.journal_affinity),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::InvalidSpec(format!("{name} must be in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Ground-truth topic of every synthetic document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TopicLabels {
    topics: BTreeMap<String, usize>,
}

impl TopicLabels {
    pub fn topic(&self, doc_id: &str) -> Option<usize> {
        self.topics.get(doc_id).copied()
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn topic_count(&self) -> usize {
        self.topics.values().collect::<BTreeSet<_>>().len()
    }

    /// Tab-separated `doc_id<TAB>topic`, sorted by doc id.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, topic) in &self.topics {
            writeln!(out, "{id}\t{topic}")?;
        }
        out.flush()
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, SimError> {
        let mut topics = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, topic) = line
                .split_once('\t')
                .and_then(|(id, t)| Some((id.to_owned(), t.trim().parse::<usize>().ok()?)))
                .ok_or_else(|| SimError::InvalidConfig(format!("labels line {}: expected id<TAB>topic", i + 1)))?;
            topics.insert(id, topic);
        }
        Ok(TopicLabels { topics })
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Sorted by doc id.
    pub records: Vec<DocumentRecord>,
    pub labels: TopicLabels,
}

impl SyntheticCorpus {
    pub fn write_corpus<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    /// Writes `corpus.jsonl` and its `labels.tsv` sidecar into `dir`.
    pub fn write_files(&self, corpus: &Path, labels: &Path) -> std::io::Result<()> {
        self.write_corpus(BufWriter::new(File::create(corpus)?))?;
        self.labels.write(BufWriter::new(File::create(labels)?))
    }
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "pe", "da", "gu", "ber", "tan", "lis", "mor", "fen",
    "dra", "qui", "sol", "har", "ven", "tor", "bel", "ost",
];

struct WordMaker {
    used: BTreeSet<String>,
}

impl WordMaker {
    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        loop {
            let n = rng.random_range(2..=4);
            let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("nonempty")).collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

struct TopicPools {
    title: Vec<String>,
    abstract_: Vec<String>,
    keywords: Vec<String>,
    categories: Vec<String>,
    authors: Vec<String>,
    journals: Vec<usize>,
}

/// Generates a corpus where every document belongs to one planted topic.
/// Deterministic under `spec.seed`.
pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<SyntheticCorpus, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut words = WordMaker { used: BTreeSet::new() };

    let shared_vocab = words.words(spec.shared_vocab, &mut rng);
    let shared_keywords: Vec<String> = words
        .words(spec.shared_keywords, &mut rng)
        .iter()
        .map(|w| capitalize(w))
        .collect();
    let shared_categories: Vec<String> = words
        .words(spec.shared_categories, &mut rng)
        .iter()
        .map(|w| format!("{} Studies", capitalize(w)))
        .collect();
    let journals: Vec<String> = words
        .words(spec.journals, &mut rng)
        .iter()
        .map(|w| format!("Journal of {}", capitalize(w)))
        .collect();

    let pools: Vec<TopicPools> = (0..spec.topics)
        .map(|t| TopicPools {
            title: words.words(spec.title_vocab, &mut rng),
            abstract_: words.words(spec.abstract_vocab, &mut rng),
            keywords: words
                .words(spec.keywords_per_topic, &mut rng)
                .iter()
                .map(|w| capitalize(w))
                .collect(),
            categories: words
                .words(spec.categories_per_topic, &mut rng)
                .iter()
                .map(|w| format!("{} Research", capitalize(w)))
                .collect(),
            authors: (0..spec.authors_per_topic)
                .map(|_| {
                    let last = capitalize(&words.word(&mut rng));
                    let first = (b'A' + rng.random_range(0..26u8)) as char;
                    format!("{last}, {first}.")
                })
                .collect(),
            journals: vec![t % spec.journals, (t + spec.topics) % spec.journals],
        })
        .collect();

    let total = spec.topics * spec.docs_per_topic;
    let mut ids: Vec<usize> = (0..total).collect();
    ids.shuffle(&mut rng);

    let mut records = Vec::with_capacity(total);
    let mut labels = BTreeMap::new();
    for (k, id) in ids.into_iter().enumerate() {
        let topic = k / spec.docs_per_topic;
        let pool = &pools[topic];
        let doc_id = format!("doc-{id:06}");
        let mix = |rng: &mut ChaCha8Rng, own: &[String], p_own: f64, n: usize| -> Vec<String> {
            (0..n)
                .map(|_| {
                    if rng.random_bool(p_own) {
                        own.choose(rng).expect("nonempty").clone()
                    } else {
                        shared_vocab.choose(rng).expect("nonempty").clone()
                    }
                })
                .collect()
        };

        let title_len = rng.random_range(4..=7);
        let title = capitalize(&mix(&mut rng, &pool.title, 0.7, title_len).join(" "));
        let mut abstracts = BTreeMap::new();
        let abstract_len = rng.random_range(25..=40);
        abstracts.insert("en".to_owned(), mix(&mut rng, &pool.abstract_, 0.6, abstract_len).join(" "));
        if rng.random_bool(0.3) {
            let len = rng.random_range(15..=30);
            abstracts.insert("de".to_owned(), mix(&mut rng, &pool.abstract_, 0.6, len).join(" "));
        }

        let draw = |rng: &mut ChaCha8Rng, own: &[String], shared: &[String], p_shared: f64, n: usize| {
            let mut out: Vec<String> = Vec::new();
            for _ in 0..n {
                let v = if rng.random_bool(p_shared) {
                    shared.choose(rng)
                } else {
                    own.choose(rng)
                }
                .expect("nonempty")
                .clone();
                if !out.contains(&v) {
                    out.push(v);
                }
            }
            out
        };
        let n_kw = rng.random_range(2..=4);
        let keywords = draw(&mut rng, &pool.keywords, &shared_keywords, spec.keyword_overlap, n_kw);
        let n_free = rng.random_range(0..=2);
        let keywords_free: Vec<String> = (0..n_free)
            .map(|_| pool.title.choose(&mut rng).expect("nonempty").clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n_cat = rng.random_range(1..=2);
        let categories = draw(&mut rng, &pool.categories, &shared_categories, spec.category_overlap, n_cat);
        let n_auth = rng.random_range(1..=3);
        let authors = draw(&mut rng, &pool.authors, &pool.authors, 0.0, n_auth);
        let journal = if rng.random_bool(spec.journal_affinity) {
            journals[*pool.journals.choose(&mut rng).expect("nonempty")].clone()
        } else {
            journals.choose(&mut rng).expect("nonempty").clone()
        };

        records.push(DocumentRecord {
            doc_id: doc_id.clone(),
            title,
            abstracts,
            authors,
            keywords,
            keywords_free,
            categories,
            journal: Some(journal),
            year: Some(rng.random_range(1980..=2020)),
            language: Some(if rng.random_bool(0.7) { "en" } else { "de" }.to_owned()),
        });
        labels.insert(doc_id, topic);
    }
    records.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    Ok(SyntheticCorpus {
        records,
        labels: TopicLabels { topics: labels },
    })
}

fn default_propensity() -> BTreeMap<StratagemKind, f64> {
    BTreeMap::from([
        (StratagemKind::Keyword, 0.5),
        (StratagemKind::Author, 0.15),
        (StratagemKind::Category, 0.25),
        (StratagemKind::Journal, 0.1),
    ])
}

fn default_signals() -> BTreeMap<SignalKind, f64> {
    SignalKind::ALL.iter().map(|k| (*k, 0.04)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimUserProfile {
    /// Relative frequency of this profile in a mix.
    pub weight: f64,
    /// Fixed topic of interest; drawn uniformly per session when absent.
    pub target_topic: Option<usize>,
    pub query_budget: usize,
    pub view_budget: usize,
    /// Probability of arriving directly on a document page.
    pub direct_entry: f64,
    /// Per-kind probability of browsing that stratagem from an open
    /// document. Their sum (capped at 1) is the chance of browsing at all.
    pub stratagem_propensity: BTreeMap<StratagemKind, f64>,
    pub p_rel: f64,
    pub patience: usize,
    pub signal_probability: BTreeMap<SignalKind, f64>,
    pub think_secs_min: u64,
    pub think_secs_max: u64,
    /// Probability of a long pause (10 to 30 minutes) before a browse.
    pub long_pause: f64,
}

impl Default for SimUserProfile {
    fn default() -> Self {
        SimUserProfile {
            weight: 1.0,
            target_topic: None,
            query_budget: 2,
            view_budget: 4,
            direct_entry: 0.25,
            stratagem_propensity: default_propensity(),
            p_rel: 0.9,
            patience: 20,
            signal_probability: default_signals(),
            think_secs_min: 3,
            think_secs_max: 60,
            long_pause: 0.03,
        }
    }
}

impl SimUserProfile {
    fn validate(&self) -> Result<(), SimError> {
        let probs = self
            .stratagem_propensity
            .values()
            .chain(self.signal_probability.values())
            .chain([&self.p_rel, &self.direct_entry, &self.long_pause]);
        for p in probs {
            if !(0.0..=1.0).contains(p) {
                return Err(SimError::InvalidConfig(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.patience == 0 {
            return Err(SimError::InvalidConfig("patience must be at least 1".into()));
        }
        if self.weight < 0.0 || self.think_secs_min > self.think_secs_max {
            return Err(SimError::InvalidConfig("bad weight or think time range".into()));
        }
        Ok(())
    }
}

/// The simulated user's judgement. The only holder of ground truth.
pub struct ClickModel<'a> {
    labels: &'a TopicLabels,
    by_topic: HashMap<usize, Vec<&'a str>>,
    pub p_rel: f64,
    pub patience: usize,
}

impl<'a> ClickModel<'a> {
    pub fn new(labels: &'a TopicLabels, p_rel: f64, patience: usize) -> Self {
        let mut by_topic: HashMap<usize, Vec<&str>> = HashMap::new();
        for (id, t) in &labels.topics {
            by_topic.entry(*t).or_default().push(id);
        }
        ClickModel {
            labels,
            by_topic,
            p_rel,
            patience,
        }
    }

    pub fn is_relevant(&self, doc_id: &str, target: usize) -> bool {
        self.labels.topic(doc_id) == Some(target)
    }

    /// Scans `results` in order, starting at absolute rank `offset + 1`,
    /// until `patience` ranks have been looked at. Returns the absolute rank
    /// and id of the clicked document.
    pub fn scan<R: Rng>(
        &self,
        results: &[String],
        offset: usize,
        target: usize,
        rng: &mut R,
    ) -> Option<(usize, String)> {
        for (i, id) in results.iter().enumerate() {
            let rank = offset + i + 1;
            if rank > self.patience {
                return None;
            }
            if self.is_relevant(id, target) && rng.random_bool(self.p_rel) {
                return Some((rank, id.clone()));
            }
        }
        None
    }

    /// A document of the target topic, as if reached from a web search engine.
    pub fn landing_document<R: Rng>(&self, target: usize, rng: &mut R) -> Option<String> {
        self.by_topic
            .get(&target)
            .and_then(|docs| docs.choose(rng))
            .map(|d| d.to_string())
    }

    /// Two words the user associates with the topic, taken from the title
    /// of one of its documents.
    pub fn query_text<R: Rng>(&self, target: usize, index: &CorpusIndex, rng: &mut R) -> Option<String> {
        let doc = index.document(&self.landing_document(target, rng)?)?;
        let mut tokens = tokenize(&doc.title);
        tokens.sort();
        tokens.dedup();
        tokens.shuffle(rng);
        tokens.truncate(2);
        (!tokens.is_empty()).then(|| tokens.join(" "))
    }
}

struct Clock {
    now: u64,
    min_ms: u64,
    max_ms: u64,
}

impl Clock {
    fn tick(&mut self, rng: &mut ChaCha8Rng) -> u64 {
        self.now += rng.random_range(self.min_ms..=self.max_ms).max(1);
        self.now
    }
}

/// Runs one session of the browse loop: queries or a direct landing, result
/// scanning, document views, stratagem browses and signals.
pub fn simulate_session(
    profile: &SimUserProfile,
    engine: &Engine,
    clicks: &ClickModel<'_>,
    session_id: &str,
    target: usize,
    start: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(), SimError> {
    let mut clock = Clock {
        now: start,
        min_ms: profile.think_secs_min * 1000,
        max_ms: profile.think_secs_max * 1000,
    };
    let index = engine.index();
    let mut current: Option<String> = None;
    let mut views = 0;

    let open = |doc_id: &str, rank: usize, resp: &BrowseResponse, clock: &mut Clock, rng: &mut ChaCha8Rng| -> Result<(), SimError> {
        engine.record(
            ClientEvent {
                event_id: None,
                session_id: session_id.to_owned(),
                timestamp: Some(clock.tick(rng)),
                arm: None,
                payload: EventPayload::ClickResult {
                    doc_id: doc_id.to_owned(),
                    rank,
                    result_set_size: resp.total_hits,
                },
            },
            clock.now,
        )?;
        engine.view_doc(session_id, doc_id, clock.tick(rng))?;
        if clicks.is_relevant(doc_id, target) {
            for (kind, p) in &profile.signal_probability {
                if rng.random_bool(*p) {
                    engine.record(
                        ClientEvent {
                            event_id: None,
                            session_id: session_id.to_owned(),
                            timestamp: Some(clock.tick(rng)),
                            arm: None,
                            payload: EventPayload::Signal {
                                signal: *kind,
                                doc_id: doc_id.to_owned(),
                            },
                        },
                        clock.now,
                    )?;
                }
            }
        }
        Ok(())
    };

    if rng.random_bool(profile.direct_entry) {
        if let Some(doc) = clicks.landing_document(target, rng) {
            engine.view_doc(session_id, &doc, clock.tick(rng))?;
            current = Some(doc);
            views += 1;
        }
    } else if profile.query_budget > 0 {
        let n_queries = rng.random_range(1..=profile.query_budget);
        for _ in 0..n_queries {
            if views >= profile.view_budget {
                break;
            }
            let Some(q) = clicks.query_text(target, index, rng) else {
                break;
            };
            let resp = engine.search(session_id, &q, Page::default(), &PostFilter::default(), clock.tick(rng))?;
            let ids: Vec<String> = resp.results.iter().map(|r| r.id.clone()).collect();
            if let Some((rank, doc)) = clicks.scan(&ids, resp.offset(), target, rng) {
                open(&doc, rank, &resp, &mut clock, rng)?;
                current = Some(doc);
                views += 1;
            }
        }
    }

    let browse_p: f64 = profile.stratagem_propensity.values().sum::<f64>().min(1.0);
    while views < profile.view_budget {
        let Some(seed_id) = current.clone() else { break };
        if browse_p <= 0.0 || !rng.random_bool(browse_p) {
            break;
        }
        let Some(seed) = index.document(&seed_id) else { break };
        let available: Vec<(StratagemKind, f64)> = profile
            .stratagem_propensity
            .iter()
            .filter(|(k, p)| **p > 0.0 && !seed.values(k.field()).is_empty())
            .map(|(k, p)| (*k, *p))
            .collect();
        let Ok((kind, _)) = available.choose_weighted(rng, |(_, p)| *p) else {
            break;
        };
        let value = seed
            .values(kind.field())
            .choose(rng)
            .map(|v| v.to_string())
            .expect("kind has values");

        if rng.random_bool(profile.long_pause) {
            clock.now += rng.random_range(600_000..=1_800_000);
        }
        let mut req = BrowseRequest {
            session_id: session_id.to_owned(),
            kind: *kind,
            value,
            seed_doc_id: seed_id.clone(),
            page: Page::default(),
            filters: PostFilter::default(),
        };
        let mut resp = engine.browse(&req, clock.tick(rng))?;
        let clicked = loop {
            let ids: Vec<String> = resp.results.iter().map(|r| r.id.clone()).collect();
            if let Some(hit) = clicks.scan(&ids, resp.offset(), target, rng) {
                break Some(hit);
            }
            let seen = resp.offset() + ids.len();
            if ids.is_empty() || seen >= resp.total_hits || seen >= clicks.patience {
                break None;
            }
            req.page.page += 1;
            resp = engine.browse(&req, clock.tick(rng))?;
        };
        match clicked {
            Some((rank, doc)) => {
                open(&doc, rank, &resp, &mut clock, rng)?;
                current = Some(doc);
                views += 1;
            }
            None => break,
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub sessions: usize,
    pub seed: u64,
    /// Existing corpus file; when absent a synthetic corpus is generated.
    pub corpus_path: Option<PathBuf>,
    /// Topic sidecar for `corpus_path`.
    pub labels_path: Option<PathBuf>,
    pub thesaurus_path: Option<PathBuf>,
    /// Put every session in one arm.
    pub arm_force: Option<ExperimentArm>,
    pub corpus: SyntheticCorpusSpec,
    pub profiles: Vec<SimUserProfile>,
    pub ranking: RankingConfig,
    pub evaluation: EvaluationOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            sessions: 3000,
            seed: 42,
            corpus_path: None,
            labels_path: None,
            thesaurus_path: None,
            arm_force: None,
            corpus: SyntheticCorpusSpec::default(),
            profiles: vec![SimUserProfile::default()],
            ranking: RankingConfig::default(),
            evaluation: EvaluationOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

pub struct ExperimentOutput {
    /// Sorted by session id, then timestamp.
    pub events: Vec<SessionEvent>,
    pub report: MetricReport,
}

fn session_seed(seed: u64, i: usize) -> u64 {
    // splitmix64 finalizer over (seed, session index)
    let mut z = seed ^ (i as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn session_id(i: usize) -> String {
    format!("sim-{i:06}")
}

/// Builds the corpus, simulates `sessions` users in parallel, and evaluates
/// the resulting log.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput, SimError> {
    if config.profiles.is_empty() {
        return Err(SimError::InvalidConfig("at least one profile is required".into()));
    }
    for p in &config.profiles {
        p.validate()?;
    }
    let (index, labels) = match &config.corpus_path {
        Some(path) => {
            let labels_path = config
                .labels_path
                .as_ref()
                .ok_or_else(|| SimError::InvalidConfig("corpus_path needs labels_path".into()))?;
            let index = load_corpus(path)?.index;
            let labels = TopicLabels::read(BufReader::new(File::open(labels_path)?))?;
            (index, labels)
        }
        None => {
            let corpus = generate_corpus(&config.corpus)?;
            (CorpusIndex::from_records(corpus.records)?, corpus.labels)
        }
    };
    let thesaurus = match &config.thesaurus_path {
        Some(p) => Thesaurus::load(p).map_err(|e| SimError::InvalidConfig(e.to_string()))?,
        None => Thesaurus::new(),
    };
    let topics: Vec<usize> = labels.topics.values().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if topics.is_empty() {
        return Err(SimError::InvalidConfig("no labelled documents".into()));
    }

    let engine = Engine::new(Arc::new(index), thesaurus, config.ranking.clone(), EventStore::new())
        .with_arm_seed(config.seed)
        .with_arm_force(config.arm_force);

    (0..config.sessions).into_par_iter().try_for_each(|i| {
        let mut rng = ChaCha8Rng::seed_from_u64(session_seed(config.seed, i));
        let profile = config
            .profiles
            .choose_weighted(&mut rng, |p| p.weight)
            .map_err(|e| SimError::InvalidConfig(format!("profile weights: {e}")))?;
        let target = profile
            .target_topic
            .unwrap_or_else(|| *topics.choose(&mut rng).expect("nonempty"));
        let clicks = ClickModel::new(&labels, profile.p_rel, profile.patience);
        let start = BASE_TIMESTAMP + i as u64 * 1000;
        simulate_session(profile, &engine, &clicks, &session_id(i), target, start, &mut rng)
    })?;

    let events = engine.store().all_events();
    let report = evaluate(&events, &config.evaluation);
    Ok(ExperimentOutput { events, report })
}
