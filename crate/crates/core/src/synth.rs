//! Scripted synthetic games with known segmentation.
//!
//! Each round's dialogue is generated as a sequence of blocks: a few
//! utterances followed by the labels of one to three target images. The
//! block structure is the ground truth a segmenter should recover. With
//! `trailing_rate > 0` some blocks end in the pattern where one player
//! labels, the other writes a single line and then confirms the same image
//! as common; that line belongs to the next block.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{EventKind, TurnEvent};
use crate::logstore::GameLog;
use crate::model::{Decision, GameSpec, ImageId, Player, RoundSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptConfig {
    pub seed: u64,
    /// Probability that an eligible block uses the trailing-utterance pattern.
    pub trailing_rate: f64,
    /// Add unlabelled chat after the last label of a round.
    pub trailing_chat: bool,
    /// Add chat on feedback screens.
    pub feedback_chat: bool,
    /// Finish with the questionnaire. Otherwise the game stops early.
    pub complete: bool,
}

impl Default for ScriptConfig {
    fn default() -> Self {
        ScriptConfig {
            seed: 0,
            trailing_rate: 0.2,
            trailing_chat: true,
            feedback_chat: true,
            complete: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthSegment {
    pub utterance_seqs: Vec<u64>,
    pub targets: BTreeSet<ImageId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedGame {
    pub spec: GameSpec,
    pub started_ms: u64,
    pub events: Vec<TurnEvent>,
    /// Expected segments per scored round.
    pub truth: Vec<Vec<TruthSegment>>,
}

impl ScriptedGame {
    pub fn log(&self, participants: [&str; 2]) -> GameLog {
        GameLog::from_events(&self.spec, participants.map(str::to_owned), self.started_ms, &self.events)
            .expect("scripted events are legal")
    }
}

const COLOURS: [&str; 8] = ["red", "blue", "white", "green", "yellow", "black", "brown", "orange"];
const THINGS: [&str; 10] = ["bus", "dog", "cake", "bench", "kite", "table", "bike", "tree", "car", "board"];
const FILLERS: [&str; 8] = [
    "i have",
    "do you have",
    "there is",
    "mine has",
    "the one with",
    "same here",
    "and also",
    "next one",
];

struct Script {
    rng: ChaCha8Rng,
    seq: u64,
    now: u64,
    events: Vec<TurnEvent>,
}

impl Script {
    fn push(&mut self, actor: Player, kind: EventKind) -> u64 {
        self.seq += 1;
        self.now += self.rng.random_range(1_500..9_000);
        self.events.push(TurnEvent::new(self.seq, self.now, actor, kind));
        self.seq
    }

    fn say(&mut self, who: Player, image: ImageId) -> u64 {
        let filler = FILLERS[self.rng.random_range(0..FILLERS.len())];
        let colour = COLOURS[(image as usize + self.rng.random_range(0..2)) % COLOURS.len()];
        let thing = THINGS[image as usize % THINGS.len()];
        let text = format!("{filler} the {colour} {thing}");
        self.push(who, EventKind::Message { text })
    }

    fn label(&mut self, who: Player, image: ImageId, decision: Decision) {
        self.push(who, EventKind::Label { image_id: image, decision });
    }

    fn speaker(&mut self) -> Player {
        if self.rng.random_bool(0.5) {
            Player::A
        } else {
            Player::B
        }
    }

    fn group_size(&mut self, left: usize) -> usize {
        let x: f64 = self.rng.random();
        let n = if x < 0.7 {
            1
        } else if x < 0.95 {
            2
        } else {
            3
        };
        n.min(left)
    }

    /// Plays the labelling part of one page and returns its segments.
    fn page(&mut self, spec: &RoundSpec, trailing_rate: f64, trailing_chat: bool) -> Vec<TruthSegment> {
        let mut images: Vec<ImageId> =
            spec.highlights_a.iter().chain(&spec.highlights_b).copied().collect::<BTreeSet<_>>().into_iter().collect();
        images.shuffle(&mut self.rng);
        let max_utts = 4 - (spec.round_index.saturating_sub(1) as usize / 2).min(2);
        let owners = |img: ImageId| -> Vec<Player> {
            Player::BOTH.into_iter().filter(|&p| spec.highlights(p).contains(&img)).collect()
        };

        let mut truth = Vec::new();
        let mut carried: Vec<u64> = Vec::new();
        let mut rest = &images[..];
        while !rest.is_empty() {
            let n = self.group_size(rest.len());
            let (group, tail) = rest.split_at(n);
            rest = tail;
            let mut utts = std::mem::take(&mut carried);
            let wanted = self.rng.random_range(1..=max_utts);
            while utts.len() < wanted {
                let who = self.speaker();
                utts.push(self.say(who, group[0]));
            }
            let trailing = n == 1
                && spec.is_common(group[0])
                && owners(group[0]).len() == 2
                && self.rng.random_bool(trailing_rate);
            for &img in group {
                let mut who = owners(img);
                who.shuffle(&mut self.rng);
                if trailing {
                    let (first, second) = (who[0], who[1]);
                    self.label(first, img, Decision::Common);
                    carried.push(self.say(second, img));
                    self.label(second, img, Decision::Common);
                } else {
                    for p in who {
                        self.label(p, img, spec.truth(img));
                    }
                }
            }
            truth.push(TruthSegment { utterance_seqs: utts, targets: group.iter().copied().collect() });
        }
        if trailing_chat && self.rng.random_bool(0.5) {
            let who = self.speaker();
            self.say(who, images.first().copied().unwrap_or(1));
        }
        truth
    }

    fn close_page(&mut self, feedback_chat: bool) {
        let mut order = Player::BOTH;
        order.shuffle(&mut self.rng);
        for p in order {
            self.push(p, EventKind::Submit);
        }
        if feedback_chat && self.rng.random_bool(0.3) {
            let who = self.speaker();
            self.push(who, EventKind::Message { text: "nice one".into() });
        }
        order.shuffle(&mut self.rng);
        for p in order {
            self.push(p, EventKind::FeedbackAck);
        }
    }
}

/// Plays `spec` from start to finish with a scripted, always-legal dialogue.
pub fn scripted_game(spec: &GameSpec, config: &ScriptConfig) -> ScriptedGame {
    let started_ms = 1_600_000_000_000 + config.seed % 1_000_000 * 1_000;
    let mut s = Script {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        seq: 0,
        now: started_ms,
        events: Vec::new(),
    };
    if let Some(w) = &spec.warmup {
        s.page(w, 0.0, false);
        s.close_page(false);
    }
    let mut truth = Vec::new();
    for r in &spec.rounds {
        truth.push(s.page(r, config.trailing_rate, config.trailing_chat));
        s.close_page(config.feedback_chat);
    }
    if config.complete {
        for p in Player::BOTH {
            let answers = [0; 3].map(|_| s.rng.random_range(1..=5));
            s.push(p, EventKind::Questionnaire { answers });
        }
    } else {
        s.events.truncate(s.events.len() / 2);
    }
    ScriptedGame { spec: spec.clone(), started_ms, events: s.events, truth }
}
