//! Synthetic catalog, knowledge graph, user population and stream log.
//!
//! The generator plants the structure the rest of the pipeline is meant to
//! detect: shows cluster into topics, shows in the same topic share knowledge
//! graph entities, listeners walk a first-order Markov chain that mostly stays
//! inside the topic neighbourhood of the current show (and prefers shows that
//! share entities with it), and some topics skew towards younger or older
//! listeners.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Beta, Dirichlet, Distribution, Exp, Poisson, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{EntityId, NodeId, RelationId, ShowId, TopicId, UserId};
use crate::seeds::{sub_rng, Rng};

pub const SECONDS_PER_WEEK: i64 = 604_800;

pub const MENTIONS: RelationId = RelationId(0);
pub const RELATED: RelationId = RelationId(1);
pub const NUM_RELATIONS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Show {
    pub id: ShowId,
    pub title: String,
    /// Sorted, non-empty.
    pub topics: Vec<TopicId>,
    /// Sorted, distinct.
    pub entities: Vec<EntityId>,
    pub popularity: f64,
}

impl Show {
    pub fn has_topic(&self, topic: TopicId) -> bool {
        self.topics.binary_search(&topic).is_ok()
    }

    pub fn shares_topic(&self, other: &Show) -> bool {
        self.topics.iter().any(|&t| other.has_topic(t))
    }

    pub fn shared_entities(&self, other: &Show) -> usize {
        sorted_intersection_len(&self.entities, &other.entities)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topic {
    pub id: TopicId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: String,
    pub home_topic: TopicId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KgTriple {
    pub head: NodeId,
    pub relation: RelationId,
    pub tail: NodeId,
}

/// Triples over a dense node and relation id space.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    pub num_nodes: usize,
    pub num_relations: usize,
    pub triples: Vec<KgTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub shows: Vec<Show>,
    pub topics: Vec<Topic>,
    pub entities: Vec<Entity>,
    pub triples: Vec<KgTriple>,
}

impl Catalog {
    pub fn num_shows(&self) -> usize {
        self.shows.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.shows.len() + self.entities.len()
    }

    pub fn show(&self, id: ShowId) -> Option<&Show> {
        self.shows.get(id.index())
    }

    pub fn show_node(&self, id: ShowId) -> NodeId {
        NodeId(id.0)
    }

    pub fn entity_node(&self, id: EntityId) -> NodeId {
        NodeId::from(self.shows.len() + id.index())
    }

    pub fn knowledge_graph(&self) -> KnowledgeGraph {
        KnowledgeGraph {
            num_nodes: self.num_nodes(),
            num_relations: NUM_RELATIONS,
            triples: self.triples.clone(),
        }
    }

    pub fn shows_with_topic(&self, topic: TopicId) -> impl Iterator<Item = &Show> {
        self.shows.iter().filter(move |s| s.has_topic(topic))
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn read_json<R: std::io::Read>(input: R) -> Result<Self> {
        let catalog: Catalog = serde_json::from_reader(input)?;
        catalog.validate()?;
        Ok(catalog)
    }

    /// Checks the structural invariants of a catalog read from disk.
    pub fn validate(&self) -> Result<()> {
        for (i, show) in self.shows.iter().enumerate() {
            if show.id.index() != i {
                return Err(Error::data(format!("show ids not dense at position {i}")));
            }
            if show.topics.is_empty() {
                return Err(Error::data(format!("show {} has no topic", show.id)));
            }
            if !(show.popularity > 0.0) {
                return Err(Error::data(format!("show {} has popularity <= 0", show.id)));
            }
            if let Some(t) = show.topics.iter().find(|t| t.index() >= self.topics.len()) {
                return Err(Error::data(format!("show {} has unknown topic {t}", show.id)));
            }
            if let Some(e) = show.entities.iter().find(|e| e.index() >= self.entities.len()) {
                return Err(Error::data(format!("show {} has unknown entity {e}", show.id)));
            }
        }
        let nodes = self.num_nodes();
        for t in &self.triples {
            if t.head.index() >= nodes || t.tail.index() >= nodes {
                return Err(Error::data(format!("triple {t:?} references an unknown node")));
            }
            if t.relation.index() >= NUM_RELATIONS {
                return Err(Error::data(format!("triple {t:?} has an unknown relation")));
            }
            if t.head == t.tail {
                return Err(Error::data(format!("triple {t:?} is a self loop")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogConfig {
    pub num_shows: usize,
    pub num_topics: usize,
    pub num_entities: usize,
    /// Probability that a show carries a second topic.
    pub multi_topic_prob: f64,
    pub entities_per_show: usize,
    /// Probability that an entity link is drawn from the show's own topic pool.
    pub entity_topic_affinity: f64,
    pub related_per_entity: usize,
    /// Popularity of the show at popularity rank r is `1 / r^zipf_exponent`.
    pub zipf_exponent: f64,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        CatalogConfig {
            num_shows: 500,
            num_topics: 20,
            num_entities: 300,
            multi_topic_prob: 0.3,
            entities_per_show: 4,
            entity_topic_affinity: 0.85,
            related_per_entity: 2,
            zipf_exponent: 1.0,
        }
    }
}

impl CatalogConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_shows == 0 || self.num_topics == 0 {
            return Err(Error::config("catalog needs at least one show and one topic"));
        }
        if self.num_shows < self.num_topics {
            return Err(Error::config(format!(
                "num_shows ({}) must be >= num_topics ({})",
                self.num_shows, self.num_topics
            )));
        }
        if self.num_entities == 0 {
            return Err(Error::config("num_entities must be >= 1"));
        }
        if self.entities_per_show == 0 {
            return Err(Error::config("entities_per_show must be >= 1"));
        }
        check_probability("multi_topic_prob", self.multi_topic_prob)?;
        check_probability("entity_topic_affinity", self.entity_topic_affinity)?;
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::config("zipf_exponent must be finite and >= 0"));
        }
        Ok(())
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [0, 1], got {p}")))
    }
}

const ADJECTIVES: &[&str] = &[
    "Curious", "Daily", "Midnight", "Honest", "Hidden", "Weekly", "Loud", "Quiet", "Modern",
    "Lost", "Bright", "Slow",
];
const NOUNS: &[&str] = &[
    "Hour", "Story", "Signal", "Table", "Report", "Files", "Club", "Notebook", "Line", "Room",
    "Radio", "Show",
];

pub fn generate_catalog(config: &CatalogConfig, seed: u64) -> Result<Catalog> {
    config.validate()?;
    let mut rng = sub_rng(seed, "catalog", 0);
    let num_topics = config.num_topics;

    let topics: Vec<Topic> = (0..num_topics)
        .map(|t| Topic {
            id: TopicId::from(t),
            name: format!("topic-{t}"),
        })
        .collect();

    // Every topic gets at least floor(num_shows / num_topics) primary members.
    let mut primary: Vec<usize> = (0..config.num_shows).map(|i| i % num_topics).collect();
    primary.shuffle(&mut rng);

    let mut ranks: Vec<usize> = (0..config.num_shows).collect();
    ranks.shuffle(&mut rng);

    let entities: Vec<Entity> = (0..config.num_entities)
        .map(|e| Entity {
            id: EntityId::from(e),
            name: format!("entity-{e}"),
            home_topic: TopicId::from(e % num_topics),
        })
        .collect();
    let mut pools: Vec<Vec<EntityId>> = vec![Vec::new(); num_topics];
    for e in &entities {
        pools[e.home_topic.index()].push(e.id);
    }

    let per_show = config.entities_per_show.min(config.num_entities);
    let mut shows = Vec::with_capacity(config.num_shows);
    for (i, &topic) in primary.iter().enumerate() {
        let mut topic_set = BTreeSet::from([TopicId::from(topic)]);
        if num_topics > 1 && rng.gen_bool(config.multi_topic_prob) {
            let mut other = rng.gen_range(0..num_topics - 1);
            if other >= topic {
                other += 1;
            }
            topic_set.insert(TopicId::from(other));
        }
        let show_topics: Vec<TopicId> = topic_set.into_iter().collect();

        let mut linked = BTreeSet::new();
        let mut attempts = 0;
        while linked.len() < per_show && attempts < 64 * per_show {
            attempts += 1;
            let t = show_topics[rng.gen_range(0..show_topics.len())];
            let pool = &pools[t.index()];
            let entity = if !pool.is_empty() && rng.gen_bool(config.entity_topic_affinity) {
                pool[rng.gen_range(0..pool.len())]
            } else {
                EntityId::from(rng.gen_range(0..config.num_entities))
            };
            linked.insert(entity);
        }

        let adjective = ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())];
        let noun = NOUNS[rng.gen_range(0..NOUNS.len())];
        shows.push(Show {
            id: ShowId::from(i),
            title: format!("The {adjective} {noun} #{i}"),
            topics: show_topics,
            entities: linked.into_iter().collect(),
            popularity: 1.0 / ((ranks[i] + 1) as f64).powf(config.zipf_exponent),
        });
    }

    let mut triples = BTreeSet::new();
    for show in &shows {
        for &e in &show.entities {
            triples.insert(KgTriple {
                head: NodeId(show.id.0),
                relation: MENTIONS,
                tail: NodeId::from(config.num_shows + e.index()),
            });
        }
    }
    if config.num_entities > 1 {
        for entity in &entities {
            let pool = &pools[entity.home_topic.index()];
            for _ in 0..config.related_per_entity {
                let other = if pool.len() > 1 && rng.gen_bool(config.entity_topic_affinity) {
                    pool[rng.gen_range(0..pool.len())]
                } else {
                    EntityId::from(rng.gen_range(0..config.num_entities))
                };
                if other != entity.id {
                    triples.insert(KgTriple {
                        head: NodeId::from(config.num_shows + entity.id.index()),
                        relation: RELATED,
                        tail: NodeId::from(config.num_shows + other.index()),
                    });
                }
            }
        }
    }

    Ok(Catalog {
        shows,
        topics,
        entities,
        triples: triples.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: UserId,
    pub age: u32,
    pub topic_affinity: Vec<f64>,
}

impl UserProfile {
    /// The topic holding the largest affinity share (ties to the lower id).
    pub fn home_topic(&self) -> TopicId {
        let mut best = 0;
        for (t, &w) in self.topic_affinity.iter().enumerate() {
            if w > self.topic_affinity[best] {
                best = t;
            }
        }
        TopicId::from(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeSkew {
    pub topic: u32,
    /// Years added to the age of users whose home topic is `topic`.
    pub offset: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    /// Affinity mass reserved for the user's home topic; must exceed 0.5 so the
    /// home topic is the unique arg-max.
    pub home_topic_share: f64,
    /// Dirichlet concentration of the remaining affinity mass.
    pub affinity_concentration: f64,
    /// Base ages are `min_age + round(Beta(2, 3) * age_span)` before any skew.
    pub min_age: u32,
    pub age_span: u32,
    pub age_skew: Vec<AgeSkew>,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            home_topic_share: 0.55,
            affinity_concentration: 0.3,
            min_age: 18,
            age_span: 60,
            age_skew: vec![
                AgeSkew { topic: 0, offset: -5 },
                AgeSkew { topic: 1, offset: 12 },
            ],
        }
    }
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.home_topic_share > 0.5 && self.home_topic_share <= 1.0) {
            return Err(Error::config("home_topic_share must lie in (0.5, 1]"));
        }
        if !(self.affinity_concentration > 0.0) {
            return Err(Error::config("affinity_concentration must be > 0"));
        }
        for skew in &self.age_skew {
            if (self.min_age as i64) + (skew.offset as i64) < 13 {
                return Err(Error::config(format!(
                    "age skew {} on topic {} would produce users younger than 13",
                    skew.offset, skew.topic
                )));
            }
        }
        Ok(())
    }

    fn offset_for(&self, topic: TopicId) -> i32 {
        self.age_skew
            .iter()
            .filter(|s| s.topic == topic.0)
            .map(|s| s.offset)
            .sum()
    }
}

pub fn generate_users(
    catalog: &Catalog,
    config: &PopulationConfig,
    num_users: usize,
    seed: u64,
) -> Result<Vec<UserProfile>> {
    config.validate()?;
    let num_topics = catalog.topics.len();
    if num_topics == 0 {
        return Err(Error::config("catalog has no topics"));
    }
    let beta = Beta::new(2.0, 3.0).expect("valid beta parameters");
    let dirichlet = if num_topics >= 2 {
        Some(
            Dirichlet::new_with_size(config.affinity_concentration, num_topics)
                .map_err(|e| Error::config(format!("dirichlet: {e}")))?,
        )
    } else {
        None
    };

    let users = (0..num_users)
        .map(|u| {
            let mut rng = sub_rng(seed, "users", u as u64);
            let home = rng.gen_range(0..num_topics);
            let mut affinity = match &dirichlet {
                Some(d) => d
                    .sample(&mut rng)
                    .into_iter()
                    .map(|w| w * (1.0 - config.home_topic_share))
                    .collect(),
                None => vec![0.0],
            };
            affinity[home] += config.home_topic_share;
            let total: f64 = affinity.iter().sum();
            affinity.iter_mut().for_each(|w| *w /= total);

            let base = config.min_age as f64 + (beta.sample(&mut rng) * config.age_span as f64).round();
            let age = base as i64 + config.offset_for(TopicId::from(home)) as i64;
            UserProfile {
                id: UserId::from(u),
                age: age.max(13) as u32,
                topic_affinity: affinity,
            }
        })
        .collect();
    Ok(users)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamEvent {
    pub user: UserId,
    pub show: ShowId,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(rename = "secs")]
    pub seconds_played: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub horizon_weeks: u32,
    /// Unix timestamp of the end of the generated log.
    pub horizon_end: i64,
    /// Mean number of events per user per week.
    pub events_per_week: f64,
    /// Probability that the next show shares a topic with the current one.
    pub locality: f64,
    /// Fraction of events that are accidental plays or repeats.
    pub noise: f64,
    /// Within-topic transitions are weighted by `popularity * exp(sharpness * shared_entities)`.
    pub transition_sharpness: f64,
    /// Mean seconds played on a qualifying listen, above the 30 s floor.
    pub mean_listen_seconds: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            horizon_weeks: 6,
            horizon_end: 1_591_056_000, // 2020-06-02T00:00:00Z
            events_per_week: 3.0,
            locality: 0.9,
            noise: 0.1,
            transition_sharpness: 1.5,
            mean_listen_seconds: 900.0,
        }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon_weeks == 0 {
            return Err(Error::config("horizon_weeks must be >= 1"));
        }
        if !(self.events_per_week > 0.0 && self.events_per_week.is_finite()) {
            return Err(Error::config("events_per_week must be positive"));
        }
        check_probability("locality", self.locality)?;
        check_probability("noise", self.noise)?;
        if !self.transition_sharpness.is_finite() {
            return Err(Error::config("transition_sharpness must be finite"));
        }
        Ok(())
    }

    pub fn horizon_start(&self) -> i64 {
        self.horizon_end - self.horizon_weeks as i64 * SECONDS_PER_WEEK
    }
}

/// Precomputed transition structure shared by every user walk.
struct TransitionModel<'a> {
    catalog: &'a Catalog,
    /// For each show: (neighbour, weight) over shows sharing at least one topic.
    local: Vec<Vec<(usize, f64)>>,
    by_topic: Vec<Vec<usize>>,
}

impl<'a> TransitionModel<'a> {
    fn new(catalog: &'a Catalog, sharpness: f64) -> Self {
        let n = catalog.num_shows();
        let mut by_topic = vec![Vec::new(); catalog.topics.len()];
        for show in &catalog.shows {
            for t in &show.topics {
                by_topic[t.index()].push(show.id.index());
            }
        }
        let local = (0..n)
            .map(|i| {
                let from = &catalog.shows[i];
                catalog
                    .shows
                    .iter()
                    .filter(|to| to.id != from.id && from.shares_topic(to))
                    .map(|to| {
                        let shared = from.shared_entities(to) as f64;
                        (to.id.index(), to.popularity * (sharpness * shared).exp())
                    })
                    .collect()
            })
            .collect();
        TransitionModel { catalog, local, by_topic }
    }

    fn start(&self, user: &UserProfile, rng: &mut Rng) -> Option<usize> {
        let topic = sample_index(&user.topic_affinity, rng)?;
        let members = &self.by_topic[topic];
        let weights: Vec<f64> = members.iter().map(|&s| self.catalog.shows[s].popularity).collect();
        sample_index(&weights, rng).map(|i| members[i])
    }

    fn stay(&self, current: usize, visited: &[bool], rng: &mut Rng) -> Option<usize> {
        let candidates: Vec<(usize, f64)> = self.local[current]
            .iter()
            .copied()
            .filter(|&(s, _)| !visited[s])
            .collect();
        let weights: Vec<f64> = candidates.iter().map(|c| c.1).collect();
        sample_index(&weights, rng).map(|i| candidates[i].0)
    }

    fn jump(&self, current: usize, user: &UserProfile, visited: &[bool], rng: &mut Rng) -> Option<usize> {
        let from = &self.catalog.shows[current];
        let eligible = |s: usize| !visited[s] && !from.shares_topic(&self.catalog.shows[s]);
        let topic_weights: Vec<f64> = user
            .topic_affinity
            .iter()
            .enumerate()
            .map(|(t, &w)| {
                if from.has_topic(TopicId::from(t)) || !self.by_topic[t].iter().any(|&s| eligible(s)) {
                    0.0
                } else {
                    w
                }
            })
            .collect();
        let topic = sample_index(&topic_weights, rng)?;
        let members: Vec<usize> = self.by_topic[topic].iter().copied().filter(|&s| eligible(s)).collect();
        let weights: Vec<f64> = members.iter().map(|&s| self.catalog.shows[s].popularity).collect();
        sample_index(&weights, rng).map(|i| members[i])
    }

    fn step(&self, current: usize, user: &UserProfile, visited: &[bool], locality: f64, rng: &mut Rng) -> Option<usize> {
        if rng.gen_bool(locality) {
            self.stay(current, visited, rng).or_else(|| self.jump(current, user, visited, rng))
        } else {
            self.jump(current, user, visited, rng).or_else(|| self.stay(current, visited, rng))
        }
    }
}

fn sample_index(weights: &[f64], rng: &mut Rng) -> Option<usize> {
    WeightedIndex::new(weights).ok().map(|d| d.sample(rng))
}

/// Generates the raw stream log, sorted by user then timestamp.
///
/// Each user's stream depends only on `(catalog, user, config, seed)`, so the
/// per-user generation may be sharded without changing the output.
pub fn generate_streams(
    catalog: &Catalog,
    users: &[UserProfile],
    config: &StreamConfig,
    seed: u64,
) -> Result<Vec<StreamEvent>> {
    config.validate()?;
    if catalog.shows.is_empty() {
        return Err(Error::config("cannot generate streams from an empty catalog"));
    }
    if users.is_empty() {
        return Err(Error::config("cannot generate streams for zero users"));
    }
    let model = TransitionModel::new(catalog, config.transition_sharpness);
    let mut events = Vec::new();
    for user in users {
        if user.topic_affinity.len() != catalog.topics.len() {
            return Err(Error::data(format!(
                "user {} has {} affinities for {} topics",
                user.id,
                user.topic_affinity.len(),
                catalog.topics.len()
            )));
        }
        user_stream(&model, user, config, seed, &mut events);
    }
    Ok(events)
}

fn user_stream(
    model: &TransitionModel<'_>,
    user: &UserProfile,
    config: &StreamConfig,
    seed: u64,
    out: &mut Vec<StreamEvent>,
) {
    let mut rng = sub_rng(seed, "streams", user.id.0 as u64);
    let span = config.horizon_weeks as i64 * SECONDS_PER_WEEK;
    let mean = config.events_per_week * config.horizon_weeks as f64;
    let count = (Poisson::new(mean).expect("positive mean").sample(&mut rng) as i64).clamp(1, span / 2);
    let slot = span / count;
    let start = config.horizon_start();
    let listen = Exp::new(1.0 / config.mean_listen_seconds.max(1.0)).expect("positive rate");
    let popularity: Vec<f64> = model.catalog.shows.iter().map(|s| s.popularity).collect();

    let mut visited = vec![false; model.catalog.num_shows()];
    let mut walk: Vec<usize> = Vec::new();
    for i in 0..count {
        let timestamp = start + i * slot + rng.gen_range(0..slot);
        let long_play = |rng: &mut Rng| 30 + listen.sample(rng).min(4.0 * 3600.0) as u32;

        let (show, seconds) = if rng.gen_bool(config.noise) {
            if walk.is_empty() || rng.gen_bool(0.5) {
                let show = sample_index(&popularity, &mut rng).expect("positive popularity");
                (show, rng.gen_range(0..30))
            } else {
                (walk[rng.gen_range(0..walk.len())], long_play(&mut rng))
            }
        } else {
            let next = match walk.last() {
                None => model.start(user, &mut rng),
                Some(&current) => model.step(current, user, &visited, config.locality, &mut rng),
            };
            match next {
                Some(show) => {
                    visited[show] = true;
                    walk.push(show);
                    (show, long_play(&mut rng))
                }
                // Catalog exhausted for this user: re-listen instead.
                None => match walk.last() {
                    Some(_) => (walk[rng.gen_range(0..walk.len())], long_play(&mut rng)),
                    None => continue,
                },
            }
        };
        out.push(StreamEvent {
            user: user.id,
            show: ShowId::from(show),
            timestamp,
            seconds_played: seconds,
        });
    }
}

pub fn write_events_jsonl<W: Write>(events: &[StreamEvent], mut out: W) -> Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events_jsonl<R: BufRead>(input: R) -> Result<Vec<StreamEvent>> {
    let mut events = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("stream log line {}: {e}", n + 1)))?;
        events.push(event);
    }
    Ok(events)
}

/// Catalog plus the user population, as written by the `gen` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    #[serde(flatten)]
    pub catalog: Catalog,
    pub users: Vec<UserProfile>,
}

fn sorted_intersection_len<T: Ord>(a: &[T], b: &[T]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}
