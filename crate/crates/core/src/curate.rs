//! Turning raw stream logs into listening sequences and model windows.
//!
//! Stage order: min-listen filter, time window, top-show cut, first-listen
//! dedup, optional topic split, windowing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ids::{ShowId, TopicId, UserId};
use crate::synthcat::{Catalog, StreamEvent, UserProfile, SECONDS_PER_WEEK};

pub const DEFAULT_THRESHOLD_SECONDS: u32 = 30;
pub const DEFAULT_COVERAGE: f64 = 0.90;

/// Keeps events played for at least `threshold_seconds`.
pub fn filter_min_listen(events: &[StreamEvent], threshold_seconds: u32) -> Vec<StreamEvent> {
    events
        .iter()
        .filter(|e| e.seconds_played >= threshold_seconds)
        .copied()
        .collect()
}

/// Keeps events in the closed interval `[horizon_end - weeks * 1w, horizon_end]`.
pub fn window_by_time(events: &[StreamEvent], weeks: u32, horizon_end: i64) -> Vec<StreamEvent> {
    let lower = horizon_end - weeks as i64 * SECONDS_PER_WEEK;
    events
        .iter()
        .filter(|e| (lower..=horizon_end).contains(&e.timestamp))
        .copied()
        .collect()
}

/// Smallest set of most-streamed shows whose share of all streams reaches
/// `coverage`. Ties in stream count go to the lower show id.
pub fn top_show_cut(events: &[StreamEvent], coverage: f64) -> Result<BTreeSet<ShowId>> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::config(format!("coverage must lie in (0, 1], got {coverage}")));
    }
    if events.is_empty() {
        return Err(Error::EmptyInput("top-show cut needs at least one stream".into()));
    }
    let mut counts: BTreeMap<ShowId, u64> = BTreeMap::new();
    for e in events {
        *counts.entry(e.show).or_default() += 1;
    }
    let mut ordered: Vec<(ShowId, u64)> = counts.into_iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    // Stop at the first prefix with cumulative / total >= coverage.
    let total = events.len() as u64;
    let mut kept = BTreeSet::new();
    let mut cumulative = 0u64;
    for (show, count) in ordered {
        kept.insert(show);
        cumulative += count;
        if cumulative as f64 >= coverage * total as f64 {
            break;
        }
    }
    Ok(kept)
}

pub fn restrict_to_shows(events: &[StreamEvent], shows: &BTreeSet<ShowId>) -> Vec<StreamEvent> {
    events.iter().filter(|e| shows.contains(&e.show)).copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgeBracket {
    Under20,
    Twenties,
    Thirties,
    Forties,
    Fifties,
    SixtyPlus,
}

impl AgeBracket {
    pub const ALL: [AgeBracket; 6] = [
        AgeBracket::Under20,
        AgeBracket::Twenties,
        AgeBracket::Thirties,
        AgeBracket::Forties,
        AgeBracket::Fifties,
        AgeBracket::SixtyPlus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AgeBracket::Under20 => "under 20",
            AgeBracket::Twenties => "20-29",
            AgeBracket::Thirties => "30-39",
            AgeBracket::Forties => "40-49",
            AgeBracket::Fifties => "50-59",
            AgeBracket::SixtyPlus => "60+",
        }
    }
}

impl fmt::Display for AgeBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AgeBracket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgeBracket::ALL
            .into_iter()
            .find(|b| b.label() == s)
            .ok_or_else(|| Error::config(format!("unknown age bracket {s:?}")))
    }
}

impl Serialize for AgeBracket {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for AgeBracket {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn bin_by_age(age: u32) -> AgeBracket {
    match age {
        0..=19 => AgeBracket::Under20,
        20..=29 => AgeBracket::Twenties,
        30..=39 => AgeBracket::Thirties,
        40..=49 => AgeBracket::Forties,
        50..=59 => AgeBracket::Fifties,
        _ => AgeBracket::SixtyPlus,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListeningSequence {
    pub user: UserId,
    pub topic: Option<TopicId>,
    pub bracket: Option<AgeBracket>,
    pub shows: Vec<ShowId>,
}

impl ListeningSequence {
    pub fn new(user: UserId, shows: Vec<ShowId>) -> Self {
        ListeningSequence { user, topic: None, bracket: None, shows }
    }
}

/// One sequence per user listing shows in order of their first stream.
/// Users come out in ascending id order.
pub fn first_listen_sequence(events: &[StreamEvent]) -> Vec<ListeningSequence> {
    let mut by_user: BTreeMap<UserId, Vec<&StreamEvent>> = BTreeMap::new();
    for e in events {
        by_user.entry(e.user).or_default().push(e);
    }
    by_user
        .into_iter()
        .map(|(user, mut evs)| {
            evs.sort_by_key(|e| e.timestamp);
            let mut seen = BTreeSet::new();
            let shows = evs
                .into_iter()
                .filter(|e| seen.insert(e.show))
                .map(|e| e.show)
                .collect();
            ListeningSequence::new(user, shows)
        })
        .collect()
}

/// Splits a sequence into per-topic subsequences, keeping original order.
/// Shows with several topics join every matching subsequence; subsequences
/// shorter than two shows are dropped.
pub fn topic_split(sequence: &ListeningSequence, catalog: &Catalog) -> Result<Vec<ListeningSequence>> {
    let mut per_topic: BTreeMap<TopicId, Vec<ShowId>> = BTreeMap::new();
    for &show in &sequence.shows {
        let info = catalog
            .show(show)
            .ok_or_else(|| Error::data(format!("show {show} is not in the catalog")))?;
        for &topic in &info.topics {
            per_topic.entry(topic).or_default().push(show);
        }
    }
    Ok(per_topic
        .into_iter()
        .filter(|(_, shows)| shows.len() >= 2)
        .map(|(topic, shows)| ListeningSequence {
            user: sequence.user,
            topic: Some(topic),
            bracket: sequence.bracket,
            shows,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// Every sliding window of each sequence.
    Training,
    /// Only the window ending at each sequence's final show.
    Evaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub user: UserId,
    pub topic: Option<TopicId>,
    pub bracket: Option<AgeBracket>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingWindow {
    pub inputs: Vec<ShowId>,
    pub target: ShowId,
    pub provenance: Provenance,
}

pub fn make_training_windows(sequences: &[ListeningSequence], k: usize, mode: WindowMode) -> Result<Vec<TrainingWindow>> {
    if k == 0 {
        return Err(Error::config("window length k must be >= 1"));
    }
    let mut windows = Vec::new();
    for seq in sequences {
        let len = seq.shows.len();
        if len < k + 1 {
            continue;
        }
        let provenance = Provenance { user: seq.user, topic: seq.topic, bracket: seq.bracket };
        let ends = match mode {
            WindowMode::Training => k..len,
            WindowMode::Evaluation => len - 1..len,
        };
        for end in ends {
            windows.push(TrainingWindow {
                inputs: seq.shows[end - k..end].to_vec(),
                target: seq.shows[end],
                provenance,
            });
        }
    }
    Ok(windows)
}

/// Drops windows that mention a show outside `vocabulary`, returning the
/// survivors and the number dropped.
pub fn drop_out_of_vocabulary(
    windows: Vec<TrainingWindow>,
    vocabulary: &BTreeSet<ShowId>,
) -> (Vec<TrainingWindow>, usize) {
    let before = windows.len();
    let kept: Vec<TrainingWindow> = windows
        .into_iter()
        .filter(|w| vocabulary.contains(&w.target) && w.inputs.iter().all(|s| vocabulary.contains(s)))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    None,
    Topic,
}

impl FromStr for Constraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "unconstrained" => Ok(Constraint::None),
            "topic" => Ok(Constraint::Topic),
            other => Err(Error::config(format!("unknown constraint mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    pub threshold_seconds: u32,
    pub coverage: f64,
    /// Weeks of data before `horizon_end` to keep; `None` keeps the whole log.
    pub weeks: Option<u32>,
    /// Restricts the output to users in one bracket; `None` keeps everyone.
    pub age_bracket: Option<AgeBracket>,
    pub constraint: Constraint,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            threshold_seconds: DEFAULT_THRESHOLD_SECONDS,
            coverage: DEFAULT_COVERAGE,
            weeks: None,
            age_bracket: None,
            constraint: Constraint::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curated {
    /// Candidate vocabulary: the shows retained by the coverage cut.
    pub top_shows: BTreeSet<ShowId>,
    pub sequences: Vec<ListeningSequence>,
}

/// Runs the full curation pipeline. `horizon_end` anchors the time window.
pub fn curate(
    events: &[StreamEvent],
    catalog: &Catalog,
    users: &[UserProfile],
    config: &CurationConfig,
    horizon_end: i64,
) -> Result<Curated> {
    let listened = filter_min_listen(events, config.threshold_seconds);
    let windowed = match config.weeks {
        Some(weeks) if weeks == 0 => return Err(Error::config("curation weeks must be >= 1")),
        Some(weeks) => window_by_time(&listened, weeks, horizon_end),
        None => listened,
    };
    let top_shows = top_show_cut(&windowed, config.coverage)?;
    let kept = restrict_to_shows(&windowed, &top_shows);

    let ages: HashMap<UserId, u32> = users.iter().map(|u| (u.id, u.age)).collect();
    let mut sequences = Vec::new();
    for mut seq in first_listen_sequence(&kept) {
        let age = *ages
            .get(&seq.user)
            .ok_or_else(|| Error::data(format!("stream references unknown user {}", seq.user)))?;
        let bracket = bin_by_age(age);
        if config.age_bracket.is_some_and(|b| b != bracket) {
            continue;
        }
        seq.bracket = Some(bracket);
        match config.constraint {
            Constraint::None => sequences.push(seq),
            Constraint::Topic => sequences.extend(topic_split(&seq, catalog)?),
        }
    }
    Ok(Curated { top_shows, sequences })
}

pub fn write_sequences_jsonl<W: Write>(sequences: &[ListeningSequence], mut out: W) -> Result<()> {
    for seq in sequences {
        serde_json::to_writer(&mut out, seq)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_sequences_jsonl<R: BufRead>(input: R) -> Result<Vec<ListeningSequence>> {
    let mut sequences = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("sequence file line {}: {e}", n + 1)))?;
        sequences.push(seq);
    }
    Ok(sequences)
}
