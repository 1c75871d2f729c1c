//! Dialogue segmentation, reference chains and dataset splits.
//!
//! A round's dialogue is cut at labelling actions: the utterances since
//! the last boundary form a segment whose targets are the images labelled
//! at its end. Deviations from that base rule:
//!
//! * a label with no utterances since the last boundary adds its image to
//!   the previous segment of the round (or is dropped if there is none);
//! * after one player labels an image, a single utterance by the other
//!   player followed by their own `common` label of the same image does not
//!   form a segment of its own: the label joins the previous segment and
//!   the utterance starts the next one;
//! * utterances after the last label of a round are discarded.
//!
//! Only the labelling page is segmented; feedback-screen chat is ignored.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{EventKind, TurnEvent};
use crate::gameset::GameSetFile;
use crate::logstore::GameLog;
use crate::model::{Decision, ImageId, Player};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub speaker: Player,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAction {
    pub seq: u64,
    pub player: Player,
    pub image_id: ImageId,
    pub decision: Decision,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub utterances: Vec<Utterance>,
    pub target_ids: BTreeSet<ImageId>,
    pub labels: Vec<LabelAction>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentDiagnostics {
    /// Labels with no segment to attach to.
    pub dropped_labels: usize,
    /// Utterances left unlabelled at the end of a round.
    pub discarded_utterances: usize,
    pub discarded_buffers: usize,
    /// Times the trailing-utterance rule fired.
    pub trailing_utterance_rule: usize,
}

impl std::ops::AddAssign for SegmentDiagnostics {
    fn add_assign(&mut self, o: Self) {
        self.dropped_labels += o.dropped_labels;
        self.discarded_utterances += o.discarded_utterances;
        self.discarded_buffers += o.discarded_buffers;
        self.trailing_utterance_rule += o.trailing_utterance_rule;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundSegmentation {
    pub segments: Vec<Segment>,
    pub diagnostics: SegmentDiagnostics,
}

enum Turn {
    Message(Utterance),
    Label(LabelAction),
}

fn turns(events: &[TurnEvent]) -> Vec<Turn> {
    events
        .iter()
        .filter_map(|e| {
            let player = e.actor.player()?;
            match &e.kind {
                EventKind::Message { text } => Some(Turn::Message(Utterance {
                    seq: e.seq,
                    timestamp_ms: e.timestamp_ms,
                    speaker: player,
                    text: text.clone(),
                })),
                EventKind::Label { image_id, decision } => Some(Turn::Label(LabelAction {
                    seq: e.seq,
                    player,
                    image_id: *image_id,
                    decision: *decision,
                })),
                _ => None,
            }
        })
        .collect()
}

/// Segments the labelling-page events of one round.
pub fn segment_round(events: &[TurnEvent]) -> RoundSegmentation {
    let turns = turns(events);
    let mut out = RoundSegmentation::default();
    let mut open: Vec<Utterance> = Vec::new();
    for (k, turn) in turns.iter().enumerate() {
        match turn {
            Turn::Message(u) => open.push(u.clone()),
            Turn::Label(label) => {
                let trailing = label.decision == Decision::Common
                    && open.len() == 1
                    && open[0].speaker == label.player
                    && k >= 2
                    && matches!(&turns[k - 1], Turn::Message(_))
                    && matches!(&turns[k - 2], Turn::Label(prev)
                        if prev.player != label.player && prev.image_id == label.image_id)
                    && out
                        .segments
                        .last()
                        .is_some_and(|s| s.target_ids.contains(&label.image_id));
                if trailing {
                    let last = out.segments.last_mut().expect("checked above");
                    last.labels.push(label.clone());
                    out.diagnostics.trailing_utterance_rule += 1;
                } else if !open.is_empty() {
                    out.segments.push(Segment {
                        utterances: std::mem::take(&mut open),
                        target_ids: BTreeSet::from([label.image_id]),
                        labels: vec![label.clone()],
                    });
                } else if let Some(last) = out.segments.last_mut() {
                    last.target_ids.insert(label.image_id);
                    last.labels.push(label.clone());
                } else {
                    out.diagnostics.dropped_labels += 1;
                }
            }
        }
    }
    if !open.is_empty() {
        out.diagnostics.discarded_utterances += open.len();
        out.diagnostics.discarded_buffers += 1;
    }
    out
}

/// A segment placed in its game and round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    /// `<game_id>/r<round>/s<k>`, k counting from 0 within the round.
    pub segment_id: String,
    pub game_id: String,
    pub set_id: u32,
    pub round_index: u8,
    /// Position of the segment within its round.
    pub position: usize,
    pub utterances: Vec<Utterance>,
    pub target_ids: BTreeSet<ImageId>,
    pub labels: Vec<LabelAction>,
    /// Union of both displays of the round.
    pub candidates: Vec<ImageId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceChain {
    /// `<game_id>/img<image>`.
    pub chain_id: String,
    pub game_id: String,
    pub set_id: u32,
    pub target_image_id: ImageId,
    /// Identifies the image across games; chains sharing it share a split.
    pub image_key: String,
    pub category_pair: Option<String>,
    /// Segment ids in order of occurrence.
    pub segments: Vec<String>,
}

impl ReferenceChain {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Segments every round of a game in play order.
pub fn segment_game(log: &GameLog) -> (Vec<SegmentRecord>, SegmentDiagnostics) {
    let mut records = Vec::new();
    let mut diag = SegmentDiagnostics::default();
    for round in &log.rounds {
        let seg = segment_round(&round.events);
        diag += seg.diagnostics;
        let candidates: Vec<ImageId> = round
            .display_a
            .iter()
            .chain(&round.display_b)
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for (k, s) in seg.segments.into_iter().enumerate() {
            records.push(SegmentRecord {
                segment_id: format!("{}/r{}/s{}", log.game_id, round.round_index, k),
                game_id: log.game_id.clone(),
                set_id: log.set_id,
                round_index: round.round_index,
                position: k,
                utterances: s.utterances,
                target_ids: s.target_ids,
                labels: s.labels,
                candidates: candidates.clone(),
            });
        }
    }
    (records, diag)
}

/// Where an image came from and what category pair it belongs to.
#[derive(Debug, Clone, Default)]
pub struct ImageCatalog {
    by_set: BTreeMap<(u32, ImageId), (String, String)>,
    by_game: BTreeMap<(String, ImageId), String>,
}

impl ImageCatalog {
    pub fn from_gamesets(file: &GameSetFile) -> Self {
        let mut c = ImageCatalog::default();
        for set in &file.sets {
            for img in &set.images {
                c.by_set.insert(
                    (set.set_id, img.image_id),
                    (img.source_id.clone(), img.category_pair.to_string()),
                );
            }
        }
        c
    }

    /// Registers image paths recorded in imported logs.
    pub fn add_log_sources(&mut self, logs: &[GameLog]) {
        for log in logs {
            for (&id, path) in &log.image_sources {
                self.by_game.insert((log.game_id.clone(), id), path.clone());
            }
        }
    }

    /// Image key and category for an image of a game. Paths of imported
    /// images are expected to start with a `<cat>_<cat>/` directory.
    pub fn describe(&self, game_id: &str, set_id: u32, image: ImageId) -> (String, Option<String>) {
        if let Some(path) = self.by_game.get(&(game_id.to_owned(), image)) {
            let category = path
                .rsplit_once('/')
                .map(|(dir, _)| dir.rsplit('/').next().unwrap_or(dir).to_owned());
            return (path.clone(), category);
        }
        match self.by_set.get(&(set_id, image)) {
            Some((source, category)) => (source.clone(), Some(category.clone())),
            None => (format!("set{set_id:02}/img{image:02}"), None),
        }
    }
}

/// One chain per (game, image) with at least one segment, ordered by game
/// id then image id. Input order does not matter.
pub fn build_chains(segments: &[SegmentRecord], catalog: &ImageCatalog) -> Vec<ReferenceChain> {
    let mut ordered: Vec<&SegmentRecord> = segments.iter().collect();
    ordered.sort_by(|a, b| {
        (&a.game_id, a.round_index, a.position).cmp(&(&b.game_id, b.round_index, b.position))
    });
    let mut chains: BTreeMap<(String, ImageId), ReferenceChain> = BTreeMap::new();
    for s in ordered {
        for &image in &s.target_ids {
            chains
                .entry((s.game_id.clone(), image))
                .or_insert_with(|| {
                    let (image_key, category_pair) = catalog.describe(&s.game_id, s.set_id, image);
                    ReferenceChain {
                        chain_id: format!("{}/img{}", s.game_id, image),
                        game_id: s.game_id.clone(),
                        set_id: s.set_id,
                        target_image_id: image,
                        image_key,
                        category_pair,
                        segments: Vec::new(),
                    }
                })
                .segments
                .push(s.segment_id.clone());
        }
    }
    chains.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetCountShares {
    pub one: f64,
    pub two: f64,
    pub three_or_more: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStatistics {
    pub segments: usize,
    pub chains: usize,
    pub utterances: usize,
    pub segments_by_target_count: BTreeMap<usize, usize>,
    pub target_shares: TargetCountShares,
    pub chain_length_histogram: BTreeMap<usize, usize>,
    /// Share of chains with 3 to 6 segments.
    pub chains_3_to_6: f64,
    pub mean_candidates: f64,
}

fn share(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

pub fn chain_statistics(chains: &[ReferenceChain], segments: &[SegmentRecord]) -> ChainStatistics {
    let mut by_count = BTreeMap::new();
    for s in segments {
        *by_count.entry(s.target_ids.len()).or_insert(0) += 1;
    }
    let mut hist = BTreeMap::new();
    for c in chains {
        *hist.entry(c.len()).or_insert(0) += 1;
    }
    let n = segments.len();
    let count = |k: usize| by_count.get(&k).copied().unwrap_or(0);
    let mid: usize = hist.range(3..=6).map(|(_, v)| v).sum();
    ChainStatistics {
        segments: n,
        chains: chains.len(),
        utterances: segments.iter().map(|s| s.utterances.len()).sum(),
        target_shares: TargetCountShares {
            one: share(count(1), n),
            two: share(count(2), n),
            three_or_more: share(by_count.range(3..).map(|(_, v)| v).sum(), n),
        },
        segments_by_target_count: by_count,
        chain_length_histogram: hist,
        chains_3_to_6: share(mid, chains.len()),
        mean_candidates: if n == 0 {
            0.0
        } else {
            segments.iter().map(|s| s.candidates.len()).sum::<usize>() as f64 / n as f64
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.70, val: 0.15, test: 0.15 }
    }
}

impl SplitFractions {
    fn get(&self, s: Split) -> f64 {
        match s {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChainError {
    #[error("split fractions sum to {0}, expected 1")]
    FractionMismatch(f64),
    #[error("chain {0} has no category pair")]
    MissingCategory(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub chains: usize,
    pub segments: usize,
    pub targets: usize,
    pub non_targets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub version: u32,
    pub seed: u64,
    pub fractions: SplitFractions,
    /// chain id -> split
    pub assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn split_of(&self, chain_id: &str) -> Option<Split> {
        self.assignment.get(chain_id).copied()
    }

    /// Table-style counts per split. A segment counts once in every split
    /// holding one of its chains; non-targets are its other candidates.
    pub fn counts(&self, chains: &[ReferenceChain], segments: &[SegmentRecord]) -> BTreeMap<Split, SplitCounts> {
        let by_id: BTreeMap<&str, &SegmentRecord> = segments.iter().map(|s| (s.segment_id.as_str(), s)).collect();
        let mut seen: BTreeMap<Split, BTreeSet<&str>> = BTreeMap::new();
        let mut out: BTreeMap<Split, SplitCounts> = Split::ALL.iter().map(|&s| (s, SplitCounts::default())).collect();
        for c in chains {
            let Some(split) = self.split_of(&c.chain_id) else { continue };
            out.get_mut(&split).unwrap().chains += 1;
            seen.entry(split).or_default().extend(c.segments.iter().map(String::as_str));
        }
        for (split, ids) in seen {
            let counts = out.get_mut(&split).unwrap();
            for id in ids {
                if let Some(s) = by_id.get(id) {
                    counts.segments += 1;
                    counts.targets += s.target_ids.len();
                    counts.non_targets += s.candidates.len() - s.target_ids.len().min(s.candidates.len());
                }
            }
        }
        out
    }
}

/// Assigns whole image groups to splits, stratum by stratum (category
/// pair). Within a stratum, groups are visited largest first (seeded
/// shuffle breaks ties) and each goes to the split furthest below its
/// target chain count.
pub fn split_chains(chains: &[ReferenceChain], fractions: SplitFractions, seed: u64) -> Result<SplitAssignment, ChainError> {
    let total = fractions.train + fractions.val + fractions.test;
    if (total - 1.0).abs() > 1e-9 || [fractions.train, fractions.val, fractions.test].iter().any(|f| *f < 0.0) {
        return Err(ChainError::FractionMismatch(total));
    }
    let mut strata: BTreeMap<&str, BTreeMap<&str, Vec<&ReferenceChain>>> = BTreeMap::new();
    for c in chains {
        let cat = c
            .category_pair
            .as_deref()
            .ok_or_else(|| ChainError::MissingCategory(c.chain_id.clone()))?;
        strata.entry(cat).or_default().entry(&c.image_key).or_default().push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    for groups in strata.values() {
        let mut groups: Vec<&Vec<&ReferenceChain>> = groups.values().collect();
        groups.shuffle(&mut rng);
        groups.sort_by_key(|g| std::cmp::Reverse(g.len()));
        let n: usize = groups.iter().map(|g| g.len()).sum();
        let mut have = [0usize; 3];
        for g in groups {
            let (k, _) = Split::ALL
                .iter()
                .enumerate()
                .map(|(k, &s)| (k, fractions.get(s) * n as f64 - have[k] as f64))
                .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
            have[k] += g.len();
            for c in g {
                assignment.insert(c.chain_id.clone(), Split::ALL[k]);
            }
        }
    }
    Ok(SplitAssignment { version: 1, seed, fractions, assignment })
}

/// `chains.json`: every segment and chain plus segmentation diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainsFile {
    pub version: u32,
    pub games: usize,
    pub diagnostics: SegmentDiagnostics,
    pub segments: Vec<SegmentRecord>,
    pub chains: Vec<ReferenceChain>,
}

/// Segments all games and builds their chains.
pub fn extract(logs: &[GameLog], catalog: &ImageCatalog) -> ChainsFile {
    let mut segments = Vec::new();
    let mut diagnostics = SegmentDiagnostics::default();
    for log in logs {
        let (mut s, d) = segment_game(log);
        segments.append(&mut s);
        diagnostics += d;
    }
    segments.sort_by(|a, b| (&a.game_id, a.round_index, a.position).cmp(&(&b.game_id, b.round_index, b.position)));
    let chains = build_chains(&segments, catalog);
    ChainsFile { version: 1, games: logs.len(), diagnostics, segments, chains }
}
