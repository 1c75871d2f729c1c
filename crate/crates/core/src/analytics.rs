//! Corpus measurements over game logs: round efficiency, lexical content,
//! description drift and word-class shift.
//!
//! Only completed games enter the aggregates. Every function is pure and
//! independent of the order of the input logs.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::EventKind;
use crate::logstore::{GameLog, RoundLog};
use crate::model::ROUNDS;
use crate::text::{tokenize, Stopwords};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("word-vector file has no vectors")]
    EmptyVectorFile,
    #[error("word-vector line {line}: {message}")]
    BadVectorLine { line: usize, message: String },
    #[error("tag file line {line}: {message}")]
    BadTagLine { line: usize, message: String },
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn completed_sorted(logs: &[GameLog]) -> Vec<&GameLog> {
    let mut v: Vec<&GameLog> = logs.iter().filter(|l| l.completed).collect();
    v.sort_by(|a, b| a.game_id.cmp(&b.game_id));
    v
}

fn round_messages(round: &RoundLog) -> impl Iterator<Item = &str> {
    round.events.iter().filter_map(|e| match &e.kind {
        EventKind::Message { text } => Some(text.as_str()),
        _ => None,
    })
}

fn round_tokens(round: &RoundLog) -> Vec<String> {
    round_messages(round).flat_map(tokenize).collect()
}

/// Rounds of a log keyed by play position 1..=5.
fn by_position(log: &GameLog) -> BTreeMap<u8, &RoundLog> {
    log.rounds.iter().map(|r| (r.round_index, r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round_index: u8,
    pub games: usize,
    pub mean_duration_s: f64,
    pub mean_messages: f64,
    /// Tokens per message, pooled over all messages of the round.
    pub mean_message_tokens: f64,
    pub mean_correct: f64,
    /// Mean over games of correct labels per minute of the round.
    pub mean_points_per_minute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStatsReport {
    /// Completed games measured; 0 means the round list is empty.
    pub games: usize,
    pub rounds: Vec<RoundStats>,
    pub duration_decreasing: bool,
}

pub fn round_stats(logs: &[GameLog]) -> RoundStatsReport {
    let games = completed_sorted(logs);
    let mut rounds = Vec::new();
    if !games.is_empty() {
        for k in 1..=ROUNDS as u8 {
            let rs: Vec<&RoundLog> = games.iter().filter_map(|g| by_position(g).get(&k).copied()).collect();
            let durations: Vec<f64> = rs.iter().map(|r| r.duration_ms().unwrap_or(0) as f64 / 1000.0).collect();
            let msgs: Vec<usize> = rs.iter().map(|r| round_messages(r).count()).collect();
            let tokens: usize = rs.iter().map(|r| round_tokens(r).len()).sum();
            let n_msgs: usize = msgs.iter().sum();
            rounds.push(RoundStats {
                round_index: k,
                games: rs.len(),
                mean_duration_s: mean(durations.iter().copied()).unwrap_or(0.0),
                mean_messages: mean(msgs.iter().map(|&m| m as f64)).unwrap_or(0.0),
                mean_message_tokens: if n_msgs == 0 { 0.0 } else { tokens as f64 / n_msgs as f64 },
                mean_correct: mean(rs.iter().map(|r| r.correct() as f64)).unwrap_or(0.0),
                mean_points_per_minute: mean(
                    rs.iter()
                        .zip(&durations)
                        .filter(|(_, &d)| d > 0.0)
                        .map(|(r, &d)| r.correct() as f64 / (d / 60.0)),
                )
                .unwrap_or(0.0),
            });
        }
    }
    let duration_decreasing = rounds.windows(2).all(|w| w[1].mean_duration_s <= w[0].mean_duration_s);
    RoundStatsReport { games: games.len(), rounds, duration_decreasing }
}

/// Sample Pearson correlation; `None` for fewer than two points or zero
/// variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len().min(ys.len());
    if n < 2 {
        return None;
    }
    let mx = xs[..n].iter().sum::<f64>() / n as f64;
    let my = ys[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (xs[i] - mx, ys[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Distribution {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Distribution> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Distribution {
            n: v.len(),
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRatios {
    pub game_id: String,
    /// Per round; `None` when the round has no tokens.
    pub ratios: Vec<Option<f64>>,
    pub pearson_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentRatioReport {
    pub per_round_mean: Vec<Option<f64>>,
    pub games: Vec<GameRatios>,
    pub mean_r: Option<f64>,
    pub r_distribution: Option<Distribution>,
}

pub fn content_ratio(tokens: &[String], stopwords: &Stopwords) -> Option<f64> {
    if tokens.is_empty() {
        return None;
    }
    Some(stopwords.content(tokens).count() as f64 / tokens.len() as f64)
}

pub fn content_token_ratio(logs: &[GameLog], stopwords: &Stopwords) -> ContentRatioReport {
    let games: Vec<GameRatios> = completed_sorted(logs)
        .into_iter()
        .map(|log| {
            let rounds = by_position(log);
            let ratios: Vec<Option<f64>> = (1..=ROUNDS as u8)
                .map(|k| rounds.get(&k).and_then(|r| content_ratio(&round_tokens(r), stopwords)))
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = ratios
                .iter()
                .enumerate()
                .filter_map(|(i, r)| r.map(|r| ((i + 1) as f64, r)))
                .unzip();
            GameRatios { game_id: log.game_id.clone(), pearson_r: pearson(&xs, &ys), ratios }
        })
        .collect();
    let per_round_mean = (0..ROUNDS).map(|i| mean(games.iter().filter_map(|g| g.ratios[i]))).collect();
    let rs: Vec<f64> = games.iter().filter_map(|g| g.pearson_r).collect();
    ContentRatioReport {
        per_round_mean,
        mean_r: mean(rs.iter().copied()),
        r_distribution: Distribution::of(&rs),
        games,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyReport {
    /// Mean over games of novel content-token occurrences per round.
    pub per_round_mean_counts: Vec<f64>,
    /// Mean over games of novel / content tokens, where defined.
    pub per_round_mean_ratio: Vec<Option<f64>>,
    pub counts_decreasing: bool,
    /// Per game (sorted by id): novel counts per round.
    pub games: Vec<(String, Vec<usize>)>,
}

/// Occurrences of content tokens whose type did not occur in an earlier
/// round of the same game.
pub fn novel_counts(log: &GameLog, stopwords: &Stopwords) -> (Vec<usize>, Vec<usize>) {
    let rounds = by_position(log);
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut novel = Vec::new();
    let mut content = Vec::new();
    for k in 1..=ROUNDS as u8 {
        let tokens = rounds.get(&k).map(|r| round_tokens(r)).unwrap_or_default();
        let c: Vec<&String> = stopwords.content(&tokens).collect();
        novel.push(c.iter().filter(|t| !seen.contains(t.as_str())).count());
        content.push(c.len());
        seen.extend(c.into_iter().cloned());
    }
    (novel, content)
}

pub fn novel_content_tokens(logs: &[GameLog], stopwords: &Stopwords) -> NoveltyReport {
    let per_game: Vec<(String, Vec<usize>, Vec<usize>)> = completed_sorted(logs)
        .into_iter()
        .map(|l| {
            let (n, c) = novel_counts(l, stopwords);
            (l.game_id.clone(), n, c)
        })
        .collect();
    let per_round_mean_counts: Vec<f64> = (0..ROUNDS)
        .map(|i| mean(per_game.iter().map(|g| g.1[i] as f64)).unwrap_or(0.0))
        .collect();
    let per_round_mean_ratio = (0..ROUNDS)
        .map(|i| mean(per_game.iter().filter(|g| g.2[i] > 0).map(|g| g.1[i] as f64 / g.2[i] as f64)))
        .collect();
    NoveltyReport {
        counts_decreasing: per_round_mean_counts.windows(2).all(|w| w[1] <= w[0]),
        per_round_mean_counts,
        per_round_mean_ratio,
        games: per_game.into_iter().map(|(g, n, _)| (g, n)).collect(),
    }
}

/// Word vectors from a text file, one `token v1 ... vd` per line.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl WordVectors {
    pub fn parse(text: &str) -> Result<Self, AnalyticsError> {
        let mut vectors = HashMap::new();
        let mut dim = 0;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            if i == 0 && line.split_whitespace().count() == 2 && line.split_whitespace().all(|f| f.parse::<u64>().is_ok()) {
                // word2vec-style "count dim" header
                continue;
            }
            let Some(token) = parts.next() else { continue };
            let v: Vec<f64> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e: std::num::ParseFloatError| AnalyticsError::BadVectorLine { line: i + 1, message: e.to_string() })?;
            if v.is_empty() {
                return Err(AnalyticsError::BadVectorLine { line: i + 1, message: "no components".into() });
            }
            if dim == 0 {
                dim = v.len();
            } else if v.len() != dim {
                return Err(AnalyticsError::BadVectorLine {
                    line: i + 1,
                    message: format!("{} components, expected {dim}", v.len()),
                });
            }
            vectors.insert(token.to_lowercase(), v);
        }
        if vectors.is_empty() {
            return Err(AnalyticsError::EmptyVectorFile);
        }
        Ok(WordVectors { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mean of the vectors of known tokens; `None` if none are known.
    pub fn embed(&self, text: &str) -> Option<Vec<f64>> {
        let known: Vec<&Vec<f64>> = tokenize(text).iter().filter_map(|t| self.vectors.get(t)).collect();
        mean_vector(&known)
    }
}

fn mean_vector(vs: &[&Vec<f64>]) -> Option<Vec<f64>> {
    let first = vs.first()?;
    let mut out = vec![0.0; first.len()];
    for v in vs {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= vs.len() as f64);
    Some(out)
}

/// 1 - cosine similarity, clamped to [0, 2]; zero vectors are at distance 1.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// One annotated image: its captions and the first and last description
/// of it in a game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDescription {
    pub image: String,
    pub captions: Vec<String>,
    pub first: String,
    pub last: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextTriple {
    pub captions: f64,
    pub first: f64,
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionComparison {
    pub items: usize,
    /// Items skipped because some text had no known tokens.
    pub excluded: usize,
    pub mean_tokens: TextTriple,
    pub mean_content_tokens: TextTriple,
    pub first_to_captions: f64,
    pub last_to_captions: f64,
    pub first_to_last: f64,
}

pub fn description_comparison(
    items: &[AnnotatedDescription],
    vectors: &WordVectors,
    stopwords: &Stopwords,
) -> DescriptionComparison {
    let count = |s: &str| {
        let t = tokenize(s);
        (t.len() as f64, stopwords.content(&t).count() as f64)
    };
    let mut tokens = (Vec::new(), Vec::new(), Vec::new());
    let mut content = (Vec::new(), Vec::new(), Vec::new());
    let mut d = (Vec::new(), Vec::new(), Vec::new());
    let mut excluded = 0;
    for item in items {
        for c in &item.captions {
            let (t, k) = count(c);
            tokens.0.push(t);
            content.0.push(k);
        }
        let (t, k) = count(&item.first);
        tokens.1.push(t);
        content.1.push(k);
        let (t, k) = count(&item.last);
        tokens.2.push(t);
        content.2.push(k);

        let caps: Option<Vec<Vec<f64>>> = item.captions.iter().map(|c| vectors.embed(c)).collect();
        let reference = caps.as_ref().and_then(|c| mean_vector(&c.iter().collect::<Vec<_>>()));
        match (reference, vectors.embed(&item.first), vectors.embed(&item.last)) {
            (Some(r), Some(f), Some(l)) => {
                d.0.push(cosine_distance(&f, &r));
                d.1.push(cosine_distance(&l, &r));
                d.2.push(cosine_distance(&f, &l));
            }
            _ => excluded += 1,
        }
    }
    let m = |v: &Vec<f64>| mean(v.iter().copied()).unwrap_or(0.0);
    DescriptionComparison {
        items: items.len(),
        excluded,
        mean_tokens: TextTriple { captions: m(&tokens.0), first: m(&tokens.1), last: m(&tokens.2) },
        mean_content_tokens: TextTriple { captions: m(&content.0), first: m(&content.1), last: m(&content.2) },
        first_to_captions: m(&d.0),
        last_to_captions: m(&d.1),
        first_to_last: m(&d.2),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WordClass {
    Noun,
    Adjective,
    Adverb,
    Verb,
    Other,
}

impl WordClass {
    pub const MAIN: [WordClass; 4] = [WordClass::Noun, WordClass::Adjective, WordClass::Adverb, WordClass::Verb];

    /// Maps Penn Treebank or Universal tags; anything else is `Other`.
    pub fn from_tag(tag: Option<&str>) -> WordClass {
        let Some(tag) = tag else { return WordClass::Other };
        match tag {
            "NOUN" | "PROPN" => WordClass::Noun,
            "ADJ" => WordClass::Adjective,
            "ADV" => WordClass::Adverb,
            "VERB" => WordClass::Verb,
            t if t.starts_with("NN") => WordClass::Noun,
            t if t.starts_with("JJ") => WordClass::Adjective,
            t if t.starts_with("RB") => WordClass::Adverb,
            t if t.starts_with("VB") => WordClass::Verb,
            _ => WordClass::Other,
        }
    }
}

/// One tagged utterance; a line of the JSONL tag file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedUtterance {
    pub game_id: String,
    pub round_index: u8,
    pub tokens: Vec<(String, Option<String>)>,
}

pub fn read_tags(text: &str) -> Result<Vec<TaggedUtterance>, AnalyticsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| AnalyticsError::BadTagLine { line: i + 1, message: e.to_string() }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosShift {
    /// Share of content tokens per class in the first and last round.
    pub first_round: BTreeMap<WordClass, f64>,
    pub last_round: BTreeMap<WordClass, f64>,
    /// (last - first) / first; absent when the class has no first-round share.
    pub relative_change: BTreeMap<WordClass, f64>,
}

/// Relative change of word-class shares among content tokens between
/// round 1 and round 5.
pub fn pos_shift(tagged: &[TaggedUtterance], stopwords: &Stopwords) -> PosShift {
    let shares = |round: u8| {
        let mut counts: BTreeMap<WordClass, usize> = BTreeMap::new();
        let mut total = 0;
        for u in tagged.iter().filter(|u| u.round_index == round) {
            for (tok, tag) in &u.tokens {
                if stopwords.contains(&tok.to_lowercase()) {
                    continue;
                }
                *counts.entry(WordClass::from_tag(tag.as_deref())).or_insert(0) += 1;
                total += 1;
            }
        }
        WordClass::MAIN
            .iter()
            .chain([&WordClass::Other])
            .map(|&c| (c, if total == 0 { 0.0 } else { counts.get(&c).copied().unwrap_or(0) as f64 / total as f64 }))
            .collect::<BTreeMap<_, _>>()
    };
    let first = shares(1);
    let last = shares(ROUNDS as u8);
    let relative_change = first
        .iter()
        .filter(|(_, &s)| s > 0.0)
        .map(|(&c, &s)| (c, (last[&c] - s) / s))
        .collect();
    PosShift { first_round: first, last_round: last, relative_change }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub version: u32,
    pub games: usize,
    pub completed_games: usize,
    pub rounds: RoundStatsReport,
    pub content_ratio: ContentRatioReport,
    pub novelty: NoveltyReport,
    pub descriptions: Option<DescriptionComparison>,
    pub pos_shift: Option<PosShift>,
}

pub fn stats_report(
    logs: &[GameLog],
    stopwords: &Stopwords,
    descriptions: Option<(&[AnnotatedDescription], &WordVectors)>,
    tags: Option<&[TaggedUtterance]>,
) -> StatsReport {
    StatsReport {
        version: 1,
        games: logs.len(),
        completed_games: logs.iter().filter(|l| l.completed).count(),
        rounds: round_stats(logs),
        content_ratio: content_token_ratio(logs, stopwords),
        novelty: novel_content_tokens(logs, stopwords),
        descriptions: descriptions.map(|(d, v)| description_comparison(d, v, stopwords)),
        pos_shift: tags.map(|t| pos_shift(t, stopwords)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::TurnEvent;
    use crate::model::{Player, Variant};
    use crate::logstore::QuestionnaireScores;

    /// Five rounds; round k lasts `durations[k]` seconds and holds `texts[k]`.
    pub(crate) fn fixture(id: &str, durations: [u64; 5], texts: [&[&str]; 5], correct: [usize; 5]) -> GameLog {
        let mut seq = 0;
        let mut t = 0;
        let rounds = (0..5)
            .map(|k| {
                let start = t;
                t += durations[k] * 1000;
                let events = texts[k]
                    .iter()
                    .map(|s| {
                        seq += 1;
                        TurnEvent::new(seq, start + seq, Player::A, EventKind::Message { text: s.to_string() })
                    })
                    .collect();
                RoundLog {
                    round_index: k as u8 + 1,
                    schema_round: k as u8 + 1,
                    display_a: vec![],
                    display_b: vec![],
                    highlights_a: vec![],
                    highlights_b: vec![],
                    start_ms: Some(start),
                    end_ms: Some(t),
                    events,
                    feedback_events: vec![],
                    correctness: (0..6)
                        .map(|i| crate::game::LabelOutcome {
                            player: Player::A,
                            image_id: i as u8 + 1,
                            decision: crate::model::Decision::Common,
                            correct: i < correct[k],
                        })
                        .collect(),
                }
            })
            .collect();
        GameLog {
            game_id: id.into(),
            set_id: 1,
            variant: Variant::One,
            participants: ["P1".into(), "P2".into()],
            seed: 0,
            started_ms: 0,
            warmup: None,
            rounds,
            closing_events: vec![],
            questionnaire: QuestionnaireScores::default(),
            duration_ms: Some(t),
            completed: true,
            score: correct.iter().sum::<usize>() as u32,
            image_sources: BTreeMap::new(),
        }
    }

    #[test]
    fn round_stats_by_hand() {
        let g = fixture(
            "g",
            [180, 120, 120, 90, 60],
            [&["the red bike", "no"], &["bike"], &["bike", "ok", "yes"], &["x"], &["y"]],
            [6, 5, 6, 6, 3],
        );
        let r = round_stats(std::slice::from_ref(&g));
        assert_eq!(r.games, 1);
        let r1 = &r.rounds[0];
        assert_eq!(r1.mean_duration_s, 180.0);
        assert_eq!(r1.mean_messages, 2.0);
        assert_eq!(r1.mean_message_tokens, 2.0);
        assert_eq!(r1.mean_correct, 6.0);
        assert_eq!(r1.mean_points_per_minute, 2.0);
        assert_eq!(r.rounds[4].mean_points_per_minute, 3.0);
        assert!(r.duration_decreasing);
    }

    #[test]
    fn empty_corpus() {
        let r = round_stats(&[]);
        assert_eq!(r.games, 0);
        assert!(r.rounds.is_empty());
        let c = content_token_ratio(&[], &Stopwords::english());
        assert_eq!(c.mean_r, None);
    }

    #[test]
    fn content_ratio_counts() {
        let sw = Stopwords::from_words(["the"]);
        assert_eq!(content_ratio(&tokenize("the strange bike"), &sw), Some(2.0 / 3.0));
        assert_eq!(content_ratio(&tokenize("the the"), &sw), Some(0.0));
        assert_eq!(content_ratio(&[], &sw), None);
    }

    #[test]
    fn pearson_oracle() {
        assert!((pearson(&[1., 2., 3.], &[2., 4., 6.]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1., 2., 3.], &[3., 2., 1.]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1., 2.], &[5., 5.]), None);
        // Hand-computed: x=1..5, y=[.2,.5,.3,.6,.7] -> r = 0.83874213...
        let r = pearson(&[1., 2., 3., 4., 5.], &[0.2, 0.5, 0.3, 0.6, 0.7]).unwrap();
        assert!((r - 0.838_742_136_8).abs() < 1e-9, "{r}");
    }

    #[test]
    fn novelty_of_repeated_token() {
        let sw = Stopwords::english();
        let g = fixture("g", [1; 5], [&["bear"], &["bear"], &["bear"], &["bear"], &["bear"]], [0; 5]);
        assert_eq!(novel_counts(&g, &sw).0, vec![1, 0, 0, 0, 0]);
        let h = fixture("h", [1; 5], [&["cat dog"], &["fish"], &["cat"], &["cow"], &["x"]], [0; 5]);
        let rep = novel_content_tokens(&[h.clone(), g.clone()], &sw);
        assert_eq!(rep.per_round_mean_counts, vec![1.5, 0.5, 0.0, 0.5, 0.5]);
        assert_eq!(rep, novel_content_tokens(&[g, h], &sw));
    }

    #[test]
    fn vector_distances() {
        let v = WordVectors::parse("bike 1 0\ncar 0 1\n").unwrap();
        assert_eq!(cosine_distance(&v.embed("bike").unwrap(), &v.embed("car").unwrap()), 1.0);
        assert!(matches!(WordVectors::parse("\n"), Err(AnalyticsError::EmptyVectorFile)));
        assert!(matches!(WordVectors::parse("a 1 2\nb 1\n"), Err(AnalyticsError::BadVectorLine { line: 2, .. })));
        let with_header = WordVectors::parse("2 2\nbike 1 0\ncar 0 1\n").unwrap();
        assert_eq!((with_header.dim(), with_header.embed("2")), (2, None));
        let items = [
            AnnotatedDescription { image: "i".into(), captions: vec!["red bike".into()], first: "red bike".into(), last: "bike".into() },
            AnnotatedDescription { image: "j".into(), captions: vec!["zzz".into()], first: "bike".into(), last: "bike".into() },
        ];
        let v = WordVectors::parse("red 1 1\nbike 1 0\n").unwrap();
        let d = description_comparison(&items, &v, &Stopwords::english());
        assert_eq!(d.excluded, 1);
        assert!(d.first_to_captions.abs() < 1e-12);
        assert!(d.last_to_captions > 0.0 && d.last_to_captions <= 2.0);
        assert_eq!(d.mean_tokens.first, 1.5);
    }

    #[test]
    fn pos_shift_definition() {
        let sw = Stopwords::from_words(["the"]);
        let utt = |round, toks: &[(&str, &str)]| TaggedUtterance {
            game_id: "g".into(),
            round_index: round,
            tokens: toks.iter().map(|(t, g)| (t.to_string(), Some(g.to_string()))).collect(),
        };
        let same = [utt(1, &[("bike", "NN"), ("red", "JJ")]), utt(5, &[("car", "NOUN"), ("blue", "ADJ")])];
        assert!(pos_shift(&same, &sw).relative_change.values().all(|&c| c == 0.0));
        let doubled = [
            utt(1, &[("bike", "NN"), ("red", "JJ"), ("go", "VB"), ("fast", "RB")]),
            utt(5, &[("bike", "NN"), ("car", "NNS"), ("go", "VB"), ("the", "DT"), ("quick", "JJ")]),
        ];
        let s = pos_shift(&doubled, &sw);
        assert_eq!(s.relative_change[&WordClass::Noun], 1.0);
        assert_eq!(s.relative_change[&WordClass::Adverb], -1.0);
        assert_eq!(s.relative_change[&WordClass::Adjective], 0.0);
        assert_eq!(WordClass::from_tag(None), WordClass::Other);
    }
}
