//! The live game as a pure, event-sourced state machine.
//!
//! A [`GameState`] only ever changes through [`GameState::apply_event`] (or
//! its in-place twin [`GameState::step`]). Rejected events leave the state
//! untouched, so replaying an accepted event log from the initial state
//! reproduces the final state exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Actor, Decision, GameSpec, ImageId, Player, RoundSpec, MAX_MESSAGE_CHARS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnEvent {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub actor: Actor,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl TurnEvent {
    pub fn new(seq: u64, timestamp_ms: u64, actor: impl Into<Actor>, kind: EventKind) -> Self {
        TurnEvent {
            seq,
            timestamp_ms,
            actor: actor.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Message { text: String },
    Label { image_id: ImageId, decision: Decision },
    Submit,
    FeedbackAck,
    /// Likert answers (1..=5) to the three closing statements.
    Questionnaire { answers: [u8; 3] },
    Disconnect,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Message { .. } => "message",
            EventKind::Label { .. } => "label",
            EventKind::Submit => "submit",
            EventKind::FeedbackAck => "feedback_ack",
            EventKind::Questionnaire { .. } => "questionnaire",
            EventKind::Disconnect => "disconnect",
        }
    }
}

/// `Feedback(0)` is the feedback screen after the warm-up page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", content = "round", rename_all = "snake_case")]
pub enum Phase {
    Warmup,
    Round(u8),
    Feedback(u8),
    Questionnaire,
    Done,
    Aborted,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Aborted)
    }

    /// Page the phase belongs to (0 = warm-up), if any.
    pub fn page(self) -> Option<u8> {
        match self {
            Phase::Warmup => Some(0),
            Phase::Round(k) | Phase::Feedback(k) => Some(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("illegal transition in {phase:?}: {reason}")]
    IllegalTransition { phase: Phase, reason: String },
    #[error("message has {0} characters, limit is {MAX_MESSAGE_CHARS}")]
    MessageTooLong(usize),
    #[error("expected event seq {expected}, got {got}")]
    OutOfSequence { expected: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOutcome {
    pub player: Player,
    pub image_id: ImageId,
    pub decision: Decision,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatLine {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub actor: Player,
    pub text: String,
    pub phase: Phase,
}

/// Progress on one page (a scored round or the warm-up).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageState {
    pub round_index: u8,
    pub labels: [BTreeMap<ImageId, Decision>; 2],
    pub submitted: [bool; 2],
    pub start_ms: Option<u64>,
    pub end_ms: Option<u64>,
    pub outcomes: Vec<LabelOutcome>,
}

impl PageState {
    fn new(round_index: u8) -> Self {
        PageState {
            round_index,
            labels: [BTreeMap::new(), BTreeMap::new()],
            submitted: [false; 2],
            start_ms: None,
            end_ms: None,
            outcomes: Vec::new(),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.end_ms.is_some()
    }

    pub fn decisions(&self) -> usize {
        self.labels.iter().map(BTreeMap::len).sum()
    }

    pub fn correct(&self) -> usize {
        self.outcomes.iter().filter(|o| o.correct).count()
    }
}

/// What an accepted event did, for callers that emit side effects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transition {
    Message,
    Labelled,
    Submitted(Player),
    /// Both participants submitted; feedback for the page is available.
    PageClosed { round: u8, outcomes: Vec<LabelOutcome> },
    Acknowledged(Player),
    PageOpened { round: u8 },
    QuestionnaireOpened,
    Answered(Player),
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub spec: GameSpec,
    pub phase: Phase,
    pub last_seq: u64,
    pub warmup: Option<PageState>,
    pub rounds: Vec<PageState>,
    pub transcript: Vec<ChatLine>,
    pub acks: [bool; 2],
    pub questionnaire: [Option<[u8; 3]>; 2],
    pub started_ms: u64,
    pub ended_ms: Option<u64>,
}

fn illegal(phase: Phase, reason: impl Into<String>) -> GameError {
    GameError::IllegalTransition {
        phase,
        reason: reason.into(),
    }
}

impl GameState {
    pub fn new(spec: GameSpec, started_ms: u64) -> Self {
        let mut warmup = spec.warmup.as_ref().map(|_| PageState::new(0));
        let mut rounds: Vec<PageState> =
            spec.rounds.iter().map(|r| PageState::new(r.round_index)).collect();
        let phase = if let Some(w) = warmup.as_mut() {
            w.start_ms = Some(started_ms);
            Phase::Warmup
        } else {
            if let Some(r) = rounds.first_mut() {
                r.start_ms = Some(started_ms);
            }
            Phase::Round(1)
        };
        GameState {
            spec,
            phase,
            last_seq: 0,
            warmup,
            rounds,
            transcript: Vec::new(),
            acks: [false; 2],
            questionnaire: [None, None],
            started_ms,
            ended_ms: None,
        }
    }

    /// Rebuilds a state from its initial conditions and an event log.
    pub fn replay<'a>(
        spec: GameSpec,
        started_ms: u64,
        events: impl IntoIterator<Item = &'a TurnEvent>,
    ) -> Result<Self, GameError> {
        let mut state = GameState::new(spec, started_ms);
        for e in events {
            state.step(e)?;
        }
        Ok(state)
    }

    /// Pure transition: returns the successor state or an error.
    pub fn apply_event(&self, event: &TurnEvent) -> Result<GameState, GameError> {
        let mut next = self.clone();
        next.step(event)?;
        Ok(next)
    }

    pub fn page_spec(&self, page: u8) -> Option<&RoundSpec> {
        if page == 0 {
            self.spec.warmup.as_ref()
        } else {
            self.spec.rounds.get(page as usize - 1)
        }
    }

    pub fn page(&self, page: u8) -> Option<&PageState> {
        if page == 0 {
            self.warmup.as_ref()
        } else {
            self.rounds.get(page as usize - 1)
        }
    }

    fn page_mut(&mut self, page: u8) -> &mut PageState {
        if page == 0 {
            self.warmup.as_mut().expect("warm-up page exists in warm-up phases")
        } else {
            &mut self.rounds[page as usize - 1]
        }
    }

    /// Number of label decisions over the scored rounds.
    pub fn decisions(&self) -> usize {
        self.rounds.iter().map(PageState::decisions).sum()
    }

    /// Correct decisions over closed scored rounds; the warm-up is not scored.
    pub fn score(&self) -> u32 {
        self.rounds.iter().map(|r| r.correct() as u32).sum()
    }

    pub fn duration_ms(&self) -> Option<u64> {
        self.ended_ms.map(|e| e.saturating_sub(self.started_ms))
    }

    /// Validates then applies `event` in place. On error nothing changes.
    pub fn step(&mut self, event: &TurnEvent) -> Result<Transition, GameError> {
        let expected = self.last_seq + 1;
        if event.seq != expected {
            return Err(GameError::OutOfSequence {
                expected,
                got: event.seq,
            });
        }
        let phase = self.phase;
        if phase.is_terminal() {
            return Err(illegal(phase, "game is over"));
        }
        if let EventKind::Disconnect = event.kind {
            self.last_seq = event.seq;
            self.phase = Phase::Aborted;
            self.ended_ms = Some(event.timestamp_ms);
            return Ok(Transition::Aborted);
        }
        let Some(player) = event.actor.player() else {
            return Err(illegal(phase, "system may only signal disconnects"));
        };
        let transition = match &event.kind {
            EventKind::Message { text } => self.on_message(player, text, event)?,
            EventKind::Label { image_id, decision } => self.on_label(player, *image_id, *decision)?,
            EventKind::Submit => self.on_submit(player, event.timestamp_ms)?,
            EventKind::FeedbackAck => self.on_ack(player, event.timestamp_ms)?,
            EventKind::Questionnaire { answers } => {
                self.on_questionnaire(player, *answers, event.timestamp_ms)?
            }
            EventKind::Disconnect => unreachable!(),
        };
        self.last_seq = event.seq;
        Ok(transition)
    }

    fn on_message(
        &mut self,
        player: Player,
        text: &str,
        event: &TurnEvent,
    ) -> Result<Transition, GameError> {
        let len = text.chars().count();
        if len > MAX_MESSAGE_CHARS {
            return Err(GameError::MessageTooLong(len));
        }
        if text.trim().is_empty() {
            return Err(illegal(self.phase, "empty message"));
        }
        if self.phase.page().is_none() {
            return Err(illegal(self.phase, "chat is closed"));
        }
        self.transcript.push(ChatLine {
            seq: event.seq,
            timestamp_ms: event.timestamp_ms,
            actor: player,
            text: text.to_owned(),
            phase: self.phase,
        });
        Ok(Transition::Message)
    }

    fn labelling_page(&self) -> Result<u8, GameError> {
        match self.phase {
            Phase::Warmup => Ok(0),
            Phase::Round(k) => Ok(k),
            other => Err(illegal(other, "not in a labelling phase")),
        }
    }

    fn on_label(
        &mut self,
        player: Player,
        image: ImageId,
        decision: Decision,
    ) -> Result<Transition, GameError> {
        let phase = self.phase;
        let page = self.labelling_page()?;
        let spec = self.page_spec(page).expect("page spec exists");
        if !spec.highlights(player).contains(&image) {
            return Err(illegal(phase, format!("image {image} is not highlighted for {player}")));
        }
        let state = self.page(page).expect("page exists");
        if state.submitted[player.index()] {
            return Err(illegal(phase, "labels are final after submit"));
        }
        if state.labels[player.index()].contains_key(&image) {
            return Err(illegal(phase, format!("image {image} already labelled by {player}")));
        }
        self.page_mut(page).labels[player.index()].insert(image, decision);
        Ok(Transition::Labelled)
    }

    fn on_submit(&mut self, player: Player, ts: u64) -> Result<Transition, GameError> {
        let phase = self.phase;
        let page = self.labelling_page()?;
        let spec = self.page_spec(page).expect("page spec exists").clone();
        let state = self.page(page).expect("page exists");
        if state.submitted[player.index()] {
            return Err(illegal(phase, format!("{player} already submitted")));
        }
        let labelled = state.labels[player.index()].len();
        let needed = spec.highlights(player).len();
        if labelled < needed {
            return Err(illegal(phase, format!("{player} labelled {labelled} of {needed} images")));
        }
        let state = self.page_mut(page);
        state.submitted[player.index()] = true;
        if !state.submitted.iter().all(|&s| s) {
            return Ok(Transition::Submitted(player));
        }
        let spec = &spec;
        let outcomes: Vec<LabelOutcome> = Player::BOTH
            .iter()
            .flat_map(|&p| {
                state.labels[p.index()].iter().map(move |(&image_id, &decision)| LabelOutcome {
                    player: p,
                    image_id,
                    decision,
                    correct: decision == spec.truth(image_id),
                })
            })
            .collect();
        state.outcomes = outcomes.clone();
        state.end_ms = Some(ts);
        self.phase = Phase::Feedback(page);
        self.acks = [false; 2];
        Ok(Transition::PageClosed {
            round: page,
            outcomes,
        })
    }

    fn on_ack(&mut self, player: Player, ts: u64) -> Result<Transition, GameError> {
        let Phase::Feedback(page) = self.phase else {
            return Err(illegal(self.phase, "no feedback screen to acknowledge"));
        };
        if self.acks[player.index()] {
            return Err(illegal(self.phase, format!("{player} already acknowledged")));
        }
        self.acks[player.index()] = true;
        if !self.acks.iter().all(|&a| a) {
            return Ok(Transition::Acknowledged(player));
        }
        let next = page + 1;
        if (next as usize) <= self.rounds.len() {
            self.phase = Phase::Round(next);
            self.page_mut(next).start_ms = Some(ts);
            Ok(Transition::PageOpened { round: next })
        } else {
            self.phase = Phase::Questionnaire;
            Ok(Transition::QuestionnaireOpened)
        }
    }

    fn on_questionnaire(
        &mut self,
        player: Player,
        answers: [u8; 3],
        ts: u64,
    ) -> Result<Transition, GameError> {
        if self.phase != Phase::Questionnaire {
            return Err(illegal(self.phase, "questionnaire is not open"));
        }
        if answers.iter().any(|a| !(1..=5).contains(a)) {
            return Err(illegal(self.phase, "answers must be on a 1-5 scale"));
        }
        if self.questionnaire[player.index()].is_some() {
            return Err(illegal(self.phase, format!("{player} already answered")));
        }
        self.questionnaire[player.index()] = Some(answers);
        if self.questionnaire.iter().all(Option::is_some) {
            self.phase = Phase::Done;
            self.ended_ms = Some(ts);
            Ok(Transition::Completed)
        } else {
            Ok(Transition::Answered(player))
        }
    }
}

/// Points for a finished game: one per correct label decision.
pub fn score_game(state: &GameState) -> u32 {
    state.score()
}
