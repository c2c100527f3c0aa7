//! Evaluation over transaction logs.
//!
//! A *stratagem run* is a `browse_stratagem` event, the result list shown
//! for it and the clicks made on that list. Mean first relevant (MFR) is
//! the mean rank of the first click per run; lower is better.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::corpus::LineDiagnostic;
use crate::ranking::StratagemKind;
use crate::session::{history_size, read_log, EventPayload, ExperimentArm, ResultOrigin, SessionEvent};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("sample {0} is empty")]
    EmptySample(&'static str),
    #[error("number of comparisons must be at least 1")]
    NoComparisons,
}

/// Clicks deeper than this are treated as outliers (third result page).
pub const DEFAULT_MAX_RANK: usize = 40;
/// Result-set size for the MFR≥20 variant (one full first page).
pub const LARGE_RESULT_SET: usize = 20;
/// Sessions whose dwell time exceeds this are left out of the mean.
pub const DWELL_CAP_SECS: f64 = 20.0 * 60.0;
/// Sessions with more signals than this are left out of usefulness.
pub const SIGNAL_CAP: usize = 10;
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratagemRunRecord {
    pub session_id: String,
    pub arm: ExperimentArm,
    pub kind: StratagemKind,
    pub seed_doc_id: String,
    pub result_set_size: usize,
    pub shown_doc_ids: Vec<String>,
    pub first_clicked_rank: Option<usize>,
    pub clicked_ranks: Vec<usize>,
    pub history_size: usize,
    pub browse_timestamp: u64,
}

/// Groups events by session and orders each session by timestamp (stable,
/// so file order breaks ties).
pub fn group_sessions(events: &[SessionEvent]) -> BTreeMap<&str, Vec<&SessionEvent>> {
    let mut sessions: BTreeMap<&str, Vec<&SessionEvent>> = BTreeMap::new();
    for e in events {
        sessions.entry(e.session_id.as_str()).or_default().push(e);
    }
    for list in sessions.values_mut() {
        list.sort_by_key(|e| e.timestamp);
    }
    sessions
}

fn session_runs(events: &[&SessionEvent]) -> Vec<StratagemRunRecord> {
    let mut runs = Vec::new();
    let mut open: Option<(StratagemRunRecord, bool)> = None;
    let owned: Vec<SessionEvent> = events.iter().map(|e| (*e).clone()).collect();

    for e in events {
        match &e.payload {
            EventPayload::BrowseStratagem { stratagem } => {
                if let Some((run, _)) = open.take() {
                    runs.push(run);
                }
                let run = StratagemRunRecord {
                    session_id: e.session_id.clone(),
                    arm: e.arm,
                    kind: stratagem.kind,
                    seed_doc_id: stratagem.seed_doc_id.clone(),
                    result_set_size: 0,
                    shown_doc_ids: Vec::new(),
                    first_clicked_rank: None,
                    clicked_ranks: Vec::new(),
                    history_size: history_size(&owned, e.timestamp),
                    browse_timestamp: e.timestamp,
                };
                open = Some((run, false));
            }
            EventPayload::ViewResults {
                origin: ResultOrigin::Stratagem,
                doc_ids,
                offset,
                total_hits,
            } => {
                if let Some((run, has_results)) = open.as_mut() {
                    if !*has_results {
                        run.result_set_size = *total_hits;
                        *has_results = true;
                    }
                    if *offset > 0 || run.shown_doc_ids.is_empty() {
                        run.shown_doc_ids.extend(doc_ids.iter().cloned());
                    }
                }
            }
            EventPayload::ViewResults {
                origin: ResultOrigin::Search,
                ..
            }
            | EventPayload::Query { .. } => {
                if let Some((run, _)) = open.take() {
                    runs.push(run);
                }
            }
            EventPayload::ClickResult { rank, .. } => {
                // a rank beyond the delivered list cannot belong to this run
                if let Some((run, true)) = open.as_mut().filter(|(run, _)| *rank <= run.result_set_size) {
                    run.first_clicked_rank.get_or_insert(*rank);
                    run.clicked_ranks.push(*rank);
                }
            }
            EventPayload::ViewDoc { .. } | EventPayload::Signal { .. } => {}
        }
    }
    if let Some((run, _)) = open {
        runs.push(run);
    }
    runs
}

/// Pairs every browse with the result list shown for it and the clicks on
/// that list. Clicks after a new query or search result list, and clicks
/// ranked beyond the list's size, are not attributed to the run.
pub fn reconstruct_runs(events: &[SessionEvent]) -> Vec<StratagemRunRecord> {
    group_sessions(events)
        .values()
        .flat_map(|s| session_runs(s))
        .collect()
}

pub fn reconstruct_runs_from_reader<R: BufRead>(
    reader: R,
) -> std::io::Result<(Vec<StratagemRunRecord>, Vec<LineDiagnostic>)> {
    let (events, diagnostics) = read_log(reader)?;
    Ok((reconstruct_runs(&events), diagnostics))
}

/// Mean, sample standard deviation and size of a sample. Mean is undefined
/// for an empty sample, SD for fewer than two values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfrStat {
    pub mfr: Option<f64>,
    pub sd: Option<f64>,
    pub n: usize,
}

impl MfrStat {
    pub fn from_sample(sample: &[f64]) -> Self {
        let n = sample.len();
        if n == 0 {
            return MfrStat {
                mfr: None,
                sd: None,
                n,
            };
        }
        let mean = sample.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| {
            let ss: f64 = sample.iter().map(|x| (x - mean) * (x - mean)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        MfrStat {
            mfr: Some(mean),
            sd,
            n,
        }
    }
}

/// First-click ranks of the runs that count towards MFR.
pub fn first_click_sample<'a, I>(runs: I, min_result_size: usize, max_rank: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a StratagemRunRecord>,
{
    runs.into_iter()
        .filter(|r| r.result_set_size >= min_result_size)
        .filter_map(|r| r.first_clicked_rank)
        .filter(|&rank| rank <= max_rank)
        .map(|rank| rank as f64)
        .collect()
}

pub fn mean_first_relevant<'a, I>(runs: I, min_result_size: usize, max_rank: usize) -> MfrStat
where
    I: IntoIterator<Item = &'a StratagemRunRecord>,
{
    MfrStat::from_sample(&first_click_sample(runs, min_result_size, max_rank))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsefulnessScope {
    /// Signals on documents of the result list of the preceding run.
    Local,
    /// All signals after the session's first run.
    Global,
}

/// Signal counts of one session, or `None` when it has more than `cap`
/// signals in total.
pub fn session_usefulness(events: &[&SessionEvent], scope: UsefulnessScope, cap: usize) -> Option<u64> {
    let total_signals = events
        .iter()
        .filter(|e| matches!(e.payload, EventPayload::Signal { .. }))
        .count();
    if total_signals > cap {
        return None;
    }
    let mut count = 0;
    let mut seen_browse = false;
    // documents shown for the most recent run
    let mut last_run: Option<HashSet<&str>> = None;
    for e in events {
        match &e.payload {
            EventPayload::BrowseStratagem { .. } => {
                seen_browse = true;
                last_run = Some(HashSet::new());
            }
            EventPayload::ViewResults {
                origin: ResultOrigin::Stratagem,
                doc_ids,
                ..
            } => {
                if let Some(run) = last_run.as_mut() {
                    run.extend(doc_ids.iter().map(String::as_str));
                }
            }
            EventPayload::Signal { doc_id, .. } => match scope {
                UsefulnessScope::Global if seen_browse => count += 1,
                UsefulnessScope::Local
                    if last_run.as_ref().is_some_and(|run| run.contains(doc_id.as_str())) =>
                {
                    count += 1
                }
                _ => {}
            },
            _ => {}
        }
    }
    Some(count)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsefulnessCount {
    pub signals: u64,
    pub excluded_sessions: usize,
}

/// Per-arm usefulness.
pub fn usefulness(
    events: &[SessionEvent],
    scope: UsefulnessScope,
    cap: usize,
) -> BTreeMap<ExperimentArm, UsefulnessCount> {
    let mut out: BTreeMap<ExperimentArm, UsefulnessCount> =
        ExperimentArm::ALL.iter().map(|a| (*a, UsefulnessCount::default())).collect();
    for session in group_sessions(events).values() {
        let arm = session[0].arm;
        let entry = out.entry(arm).or_default();
        match session_usefulness(session, scope, cap) {
            Some(n) => entry.signals += n,
            None => entry.excluded_sessions += 1,
        }
    }
    out
}

/// Seconds from the first browse to the session's last event.
pub fn dwell_time(events: &[&SessionEvent]) -> Option<f64> {
    let first = events
        .iter()
        .find(|e| matches!(e.payload, EventPayload::BrowseStratagem { .. }))?
        .timestamp;
    let last = events.iter().map(|e| e.timestamp).max()?;
    Some(last.saturating_sub(first) as f64 / 1000.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellSummary {
    pub mean_secs: Option<f64>,
    pub included: usize,
    pub excluded: usize,
}

pub fn summarize_dwell(dwell: impl IntoIterator<Item = f64>, cap_secs: f64) -> DwellSummary {
    let mut sum = 0.0;
    let mut included = 0;
    let mut excluded = 0;
    for d in dwell {
        if d > cap_secs {
            excluded += 1;
        } else {
            sum += d;
            included += 1;
        }
    }
    DwellSummary {
        mean_secs: (included > 0).then(|| sum / included as f64),
        included,
        excluded,
    }
}

/// History-size bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryBin {
    /// Fewer than two prior interactions.
    Residual,
    H2To5,
    H6To10,
    H11Plus,
}

impl HistoryBin {
    pub const ALL: [HistoryBin; 4] = [
        HistoryBin::Residual,
        HistoryBin::H2To5,
        HistoryBin::H6To10,
        HistoryBin::H11Plus,
    ];

    pub fn of(history: usize) -> Self {
        match history {
            0..=1 => HistoryBin::Residual,
            2..=5 => HistoryBin::H2To5,
            6..=10 => HistoryBin::H6To10,
            _ => HistoryBin::H11Plus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            HistoryBin::Residual => "H<2",
            HistoryBin::H2To5 => "H in [2,5]",
            HistoryBin::H6To10 => "H in [6,10]",
            HistoryBin::H11Plus => "H in [11,inf)",
        }
    }
}

pub fn segment_by_history<'a, I>(runs: I, max_rank: usize) -> BTreeMap<HistoryBin, MfrStat>
where
    I: IntoIterator<Item = &'a StratagemRunRecord>,
{
    let mut bins: BTreeMap<HistoryBin, Vec<&StratagemRunRecord>> =
        HistoryBin::ALL.iter().map(|b| (*b, Vec::new())).collect();
    for r in runs {
        bins.entry(HistoryBin::of(r.history_size)).or_default().push(r);
    }
    bins.into_iter()
        .map(|(bin, runs)| (bin, mean_first_relevant(runs, 1, max_rank)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first sample: pairs where it is larger, ties counting half.
    pub u: f64,
    pub z: f64,
    /// Two-sided, normal approximation with tie and continuity correction.
    pub p: f64,
    /// Effect size `|z| / sqrt(n_a + n_b)`.
    pub r: f64,
}

/// Midranks (1-based) of the pooled sample and the tie term `Σ(t³ − t)`.
fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        let t = (end - start) as f64;
        ties += t * t * t - t;
        start = end;
    }
    (ranks, ties)
}

pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney, MetricsError> {
    if a.is_empty() {
        return Err(MetricsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(MetricsError::EmptySample("b"));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let n = na + nb;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..a.len()].iter().sum();
    let u = rank_sum_a - na * (na + 1.0) / 2.0;

    let mean = na * nb / 2.0;
    let variance = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let (z, p) = if variance <= 0.0 {
        (0.0, 1.0)
    } else {
        let diff = u - mean;
        let z = diff.signum() * (diff.abs() - 0.5).max(0.0) / variance.sqrt();
        (z, erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
    };
    Ok(MannWhitney {
        u,
        z,
        p,
        r: z.abs() / n.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bonferroni {
    pub threshold: f64,
    pub significant: Vec<bool>,
}

/// Significance at `0.05 / m`.
pub fn bonferroni(p_values: &[f64], m: usize) -> Result<Bonferroni, MetricsError> {
    if m == 0 {
        return Err(MetricsError::NoComparisons);
    }
    let threshold = SIGNIFICANCE_LEVEL / m as f64;
    Ok(Bonferroni {
        threshold,
        significant: p_values.iter().map(|&p| p < threshold).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationOptions {
    pub max_rank: usize,
    pub large_result_set: usize,
    pub dwell_cap_secs: f64,
    pub signal_cap: usize,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            max_rank: DEFAULT_MAX_RANK,
            large_result_set: LARGE_RESULT_SET,
            dwell_cap_secs: DWELL_CAP_SECS,
            signal_cap: SIGNAL_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMetrics {
    pub sessions: usize,
    pub stratagem_sessions: usize,
    pub stratagem_runs: usize,
    /// Runs with at least one click.
    pub clicked_runs: usize,
    pub click_through_rate: Option<f64>,
    /// Documents opened from stratagem result lists.
    pub stratagem_doc_views: usize,
    pub mfr: MfrStat,
    pub mfr_large: MfrStat,
    /// Mean event count of sessions that used a stratagem.
    pub mean_interactions: Option<f64>,
    pub dwell: DwellSummary,
    pub history: BTreeMap<HistoryBin, MfrStat>,
    pub local_usefulness: u64,
    pub global_usefulness: u64,
    pub usefulness_excluded_sessions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub metric: String,
    pub a: ExperimentArm,
    pub b: ExperimentArm,
    pub n_a: usize,
    pub n_b: usize,
    /// Absent when either sample is empty.
    pub test: Option<MannWhitney>,
    pub significant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub note: String,
    pub sessions: usize,
    pub events: usize,
    pub options: EvaluationOptions,
    pub arms: BTreeMap<ExperimentArm, ArmMetrics>,
    pub bonferroni_threshold: f64,
    pub comparisons: Vec<PairwiseTest>,
}

const ARM_PAIRS: [(ExperimentArm, ExperimentArm); 3] = [
    (ExperimentArm::Baseline, ExperimentArm::Similarity),
    (ExperimentArm::Baseline, ExperimentArm::SessionContext),
    (ExperimentArm::Similarity, ExperimentArm::SessionContext),
];

pub fn evaluate(events: &[SessionEvent], opts: &EvaluationOptions) -> MetricReport {
    let sessions = group_sessions(events);
    let runs: Vec<StratagemRunRecord> = sessions.values().flat_map(|s| session_runs(s)).collect();
    let local = usefulness(events, UsefulnessScope::Local, opts.signal_cap);
    let global = usefulness(events, UsefulnessScope::Global, opts.signal_cap);

    let mut arms = BTreeMap::new();
    for arm in ExperimentArm::ALL {
        let arm_sessions: Vec<&Vec<&SessionEvent>> =
            sessions.values().filter(|s| s[0].arm == arm).collect();
        let with_browse: Vec<&&Vec<&SessionEvent>> = arm_sessions
            .iter()
            .filter(|s| s.iter().any(|e| matches!(e.payload, EventPayload::BrowseStratagem { .. })))
            .collect();
        let arm_runs: Vec<&StratagemRunRecord> = runs.iter().filter(|r| r.arm == arm).collect();
        let clicked_runs = arm_runs.iter().filter(|r| r.first_clicked_rank.is_some()).count();
        let interactions: usize = with_browse.iter().map(|s| s.len()).sum();

        arms.insert(
            arm,
            ArmMetrics {
                sessions: arm_sessions.len(),
                stratagem_sessions: with_browse.len(),
                stratagem_runs: arm_runs.len(),
                clicked_runs,
                click_through_rate: (!arm_runs.is_empty())
                    .then(|| clicked_runs as f64 / arm_runs.len() as f64),
                stratagem_doc_views: arm_runs.iter().map(|r| r.clicked_ranks.len()).sum(),
                mfr: mean_first_relevant(arm_runs.iter().copied(), 1, opts.max_rank),
                mfr_large: mean_first_relevant(
                    arm_runs.iter().copied(),
                    opts.large_result_set,
                    opts.max_rank,
                ),
                mean_interactions: (!with_browse.is_empty())
                    .then(|| interactions as f64 / with_browse.len() as f64),
                dwell: summarize_dwell(
                    with_browse.iter().filter_map(|s| dwell_time(s)),
                    opts.dwell_cap_secs,
                ),
                history: segment_by_history(arm_runs.iter().copied(), opts.max_rank),
                local_usefulness: local[&arm].signals,
                global_usefulness: global[&arm].signals,
                usefulness_excluded_sessions: local[&arm].excluded_sessions,
            },
        );
    }

    let threshold = SIGNIFICANCE_LEVEL / ARM_PAIRS.len() as f64;
    let mut comparisons = Vec::new();
    for (metric, min_size) in [("mfr", 1), ("mfr_large", opts.large_result_set)] {
        for (a, b) in ARM_PAIRS {
            let sample = |arm| first_click_sample(runs.iter().filter(|r| r.arm == arm), min_size, opts.max_rank);
            let (sa, sb) = (sample(a), sample(b));
            let test = mann_whitney_u(&sa, &sb).ok();
            comparisons.push(PairwiseTest {
                metric: metric.to_owned(),
                a,
                b,
                n_a: sa.len(),
                n_b: sb.len(),
                significant: test.map(|t| t.p < threshold),
                test,
            });
        }
    }

    MetricReport {
        note: "N counts stratagem runs with a first click (one per run), not sessions".into(),
        sessions: sessions.len(),
        events: events.len(),
        options: *opts,
        arms,
        bonferroni_threshold: threshold,
        comparisons,
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.digits$}"))
}

impl MetricReport {
    /// Plain-text tables.
    pub fn render_text(&self, history_bins: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "sessions: {}  events: {}", self.sessions, self.events);
        let _ = writeln!(out, "note: {}\n", self.note);

        let _ = writeln!(
            out,
            "{:<20} {:>9} {:>9} {:>9} {:>11} {:>9}",
            "approach", "sessions", "runs", "clicked", "doc views", "CTR"
        );
        for (arm, m) in &self.arms {
            let _ = writeln!(
                out,
                "{:<20} {:>9} {:>9} {:>9} {:>11} {:>9}",
                arm.as_str(),
                m.sessions,
                m.stratagem_runs,
                m.clicked_runs,
                m.stratagem_doc_views,
                fmt_opt(m.click_through_rate, 3)
            );
        }

        let _ = writeln!(
            out,
            "\n{:<20} {:>8} {:>8} {:>7} {:>8} {:>8} {:>7}",
            "approach",
            "MFR",
            "SD",
            "N",
            format!("MFR>={}", self.options.large_result_set),
            "SD",
            "N"
        );
        for (arm, m) in &self.arms {
            let _ = writeln!(
                out,
                "{:<20} {:>8} {:>8} {:>7} {:>8} {:>8} {:>7}",
                arm.as_str(),
                fmt_opt(m.mfr.mfr, 2),
                fmt_opt(m.mfr.sd, 2),
                m.mfr.n,
                fmt_opt(m.mfr_large.mfr, 2),
                fmt_opt(m.mfr_large.sd, 2),
                m.mfr_large.n
            );
        }

        let _ = writeln!(
            out,
            "\n{:<20} {:>14} {:>16} {:>9} {:>12} {:>12}",
            "approach", "interactions", "dwell mean (s)", "excluded", "local use", "global use"
        );
        for (arm, m) in &self.arms {
            let _ = writeln!(
                out,
                "{:<20} {:>14} {:>16} {:>9} {:>12} {:>12}",
                arm.as_str(),
                fmt_opt(m.mean_interactions, 2),
                fmt_opt(m.dwell.mean_secs, 1),
                m.dwell.excluded,
                m.local_usefulness,
                m.global_usefulness
            );
        }

        if history_bins {
            let _ = write!(out, "\n{:<20}", "approach");
            for bin in HistoryBin::ALL {
                let _ = write!(out, " {:>18}", format!("MFR {}", bin.label()));
            }
            let _ = writeln!(out);
            for (arm, m) in &self.arms {
                let _ = write!(out, "{:<20}", arm.as_str());
                for bin in HistoryBin::ALL {
                    let s = m.history[&bin];
                    let _ = write!(out, " {:>18}", format!("{} (N={})", fmt_opt(s.mfr, 2), s.n));
                }
                let _ = writeln!(out);
            }
        }

        let _ = writeln!(
            out,
            "\nMann-Whitney U, Bonferroni p* = {:.4}",
            self.bonferroni_threshold
        );
        for c in &self.comparisons {
            let line = match c.test {
                Some(t) => format!(
                    "U={:.1} z={:.3} p={:.4} r={:.3} {}",
                    t.u,
                    t.z,
                    t.p,
                    t.r,
                    if c.significant == Some(true) { "significant" } else { "n.s." }
                ),
                None => "n/a".to_owned(),
            };
            let _ = writeln!(
                out,
                "{:<10} {} vs {}  ({} / {})  {}",
                c.metric,
                c.a.letter(),
                c.b.letter(),
                c.n_a,
                c.n_b,
                line
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::StratagemQuery;
    use crate::session::SignalKind;

    fn run(first: Option<usize>, size: usize, history: usize) -> StratagemRunRecord {
        StratagemRunRecord {
            session_id: "s".into(),
            arm: ExperimentArm::Baseline,
            kind: StratagemKind::Keyword,
            seed_doc_id: "d".into(),
            result_set_size: size,
            shown_doc_ids: Vec::new(),
            first_clicked_rank: first,
            clicked_ranks: first.into_iter().collect(),
            history_size: history,
            browse_timestamp: 0,
        }
    }

    struct Log(Vec<SessionEvent>, u64);

    impl Log {
        fn push(&mut self, session: &str, payload: EventPayload) -> &mut Self {
            self.1 += 1000;
            self.0
                .push(SessionEvent::new(session, self.1, ExperimentArm::Baseline, payload));
            self
        }
        fn browse(&mut self, s: &str) -> &mut Self {
            self.push(
                s,
                EventPayload::BrowseStratagem {
                    stratagem: StratagemQuery::new(StratagemKind::Keyword, "sport", "seed").unwrap(),
                },
            )
        }
        fn results(&mut self, s: &str, docs: &[&str]) -> &mut Self {
            self.push(
                s,
                EventPayload::ViewResults {
                    origin: ResultOrigin::Stratagem,
                    doc_ids: docs.iter().map(|d| d.to_string()).collect(),
                    offset: 0,
                    total_hits: docs.len(),
                },
            )
        }
        fn click(&mut self, s: &str, rank: usize) -> &mut Self {
            self.push(
                s,
                EventPayload::ClickResult {
                    doc_id: format!("d{rank}"),
                    rank,
                    result_set_size: 50,
                },
            )
        }
        fn signal(&mut self, s: &str, doc: &str) -> &mut Self {
            self.push(
                s,
                EventPayload::Signal {
                    signal: SignalKind::AddToFavourites,
                    doc_id: doc.into(),
                },
            )
        }
    }

    #[test]
    fn pairs_browse_results_and_click() {
        let mut log = Log(Vec::new(), 0);
        log.browse("s").results("s", &["a", "b", "c"]).click("s", 3).click("s", 1);
        log.browse("s").results("s", &["x"]);
        let runs = reconstruct_runs(&log.0);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].first_clicked_rank, Some(3));
        assert_eq!(runs[0].clicked_ranks, vec![3, 1]);
        assert_eq!(runs[0].result_set_size, 3);
        assert_eq!(runs[0].history_size, 0);
        assert_eq!(runs[1].first_clicked_rank, None);
        assert_eq!(runs[1].history_size, 4);
    }

    #[test]
    fn search_closes_run() {
        let mut log = Log(Vec::new(), 0);
        log.browse("s").results("s", &["a"]);
        log.push("s", EventPayload::Query { text: "q".into() });
        log.click("s", 1);
        let runs = reconstruct_runs(&log.0);
        assert_eq!(runs[0].first_clicked_rank, None);
    }

    #[test]
    fn mfr_basic_and_exclusions() {
        let runs = [run(Some(1), 50, 0), run(Some(5), 50, 0), run(Some(9), 50, 0)];
        let s = mean_first_relevant(&runs, 1, 40);
        assert_eq!((s.mfr, s.n), (Some(5.0), 3));
        assert_eq!(s.sd, Some(4.0));

        let runs = [run(Some(2), 50, 0), run(Some(45), 50, 0), run(None, 50, 0)];
        let s = mean_first_relevant(&runs, 1, 40);
        assert_eq!((s.mfr, s.n), (Some(2.0), 1));
        assert_eq!(s.sd, None);

        let runs = [run(Some(3), 19, 0), run(Some(7), 20, 0)];
        assert_eq!(mean_first_relevant(&runs, 20, 40).mfr, Some(7.0));
        let empty = mean_first_relevant(&runs[..0], 1, 40);
        assert_eq!((empty.mfr, empty.n), (None, 0));
    }

    #[test]
    fn history_bins() {
        assert_eq!(HistoryBin::of(0), HistoryBin::Residual);
        assert_eq!(HistoryBin::of(4), HistoryBin::H2To5);
        assert_eq!(HistoryBin::of(10), HistoryBin::H6To10);
        assert_eq!(HistoryBin::of(11), HistoryBin::H11Plus);
        assert_eq!(HistoryBin::of(12), HistoryBin::H11Plus);
        let runs = [run(Some(2), 50, 4), run(Some(4), 50, 5), run(Some(8), 50, 11)];
        let bins = segment_by_history(&runs, 40);
        assert_eq!(bins[&HistoryBin::H2To5].mfr, Some(3.0));
        assert_eq!(bins[&HistoryBin::H11Plus].n, 1);
        assert_eq!(bins[&HistoryBin::H6To10].n, 0);
    }

    #[test]
    fn usefulness_boundaries() {
        let mut log = Log(Vec::new(), 0);
        log.signal("s", "a"); // before any browse
        log.browse("s").results("s", &["a", "b"]).signal("s", "b").signal("s", "z");
        let sessions = group_sessions(&log.0);
        let s = &sessions["s"];
        assert_eq!(session_usefulness(s, UsefulnessScope::Global, 10), Some(2));
        assert_eq!(session_usefulness(s, UsefulnessScope::Local, 10), Some(1));
        assert_eq!(session_usefulness(s, UsefulnessScope::Local, 2), None);

        let mut plain = Log(Vec::new(), 0);
        plain.push("t", EventPayload::Query { text: "q".into() }).signal("t", "a");
        let sessions = group_sessions(&plain.0);
        assert_eq!(session_usefulness(&sessions["t"], UsefulnessScope::Global, 10), Some(0));
        assert_eq!(session_usefulness(&sessions["t"], UsefulnessScope::Local, 10), Some(0));
    }

    #[test]
    fn dwell_rules() {
        let mut log = Log(Vec::new(), 0);
        log.browse("s");
        let sessions = group_sessions(&log.0);
        assert_eq!(dwell_time(&sessions["s"]), Some(0.0));

        let ev = |ts: u64, p: EventPayload| SessionEvent::new("s", ts, ExperimentArm::Baseline, p);
        let events = [
            ev(0, EventPayload::Query { text: "q".into() }),
            ev(
                1_000,
                EventPayload::BrowseStratagem {
                    stratagem: StratagemQuery::new(StratagemKind::Author, "x", "d").unwrap(),
                },
            ),
            ev(126_000, EventPayload::ViewDoc { doc_id: "d".into() }),
        ];
        let refs: Vec<&SessionEvent> = events.iter().collect();
        assert_eq!(dwell_time(&refs), Some(125.0));
        assert_eq!(dwell_time(&refs[..1]), None);

        let summary = summarize_dwell([125.0, 25.0 * 60.0], DWELL_CAP_SECS);
        assert_eq!(summary.mean_secs, Some(125.0));
        assert_eq!((summary.included, summary.excluded), (1, 1));
    }

    #[test]
    fn mann_whitney_known_values() {
        let t = mann_whitney_u(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.u, 4.5);
        assert!((t.p - 1.0).abs() < 1e-12);
        let t = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(t.u, 0.0);
        assert!((t.p - 1.0 / 3.0).abs() < 0.15, "p = {}", t.p);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn mann_whitney_all_tied() {
        let t = mann_whitney_u(&[2.0, 2.0], &[2.0]).unwrap();
        assert_eq!((t.z, t.p), (0.0, 1.0));
    }

    #[test]
    fn bonferroni_threshold() {
        let b = bonferroni(&[0.01, 0.02], 3).unwrap();
        assert_eq!(b.significant, vec![true, false]);
        assert!((b.threshold - 0.05 / 3.0).abs() < 1e-15);
        assert_eq!(bonferroni(&[], 1).unwrap().threshold, 0.05);
        assert!(bonferroni(&[0.1], 0).is_err());
    }

    #[test]
    fn empty_log_report_is_undefined_not_panic() {
        let report = evaluate(&[], &EvaluationOptions::default());
        assert_eq!(report.arms.len(), 3);
        assert!(report.arms.values().all(|m| m.mfr.mfr.is_none()));
        let text = report.render_text(true);
        assert!(text.contains("n/a"));
        let json = serde_json::to_string(&report).unwrap();
        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
