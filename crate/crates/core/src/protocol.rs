//! Wire protocol between participants' browsers and the game server.
//!
//! Frames are single-line JSON objects tagged by `type`. Every frame the
//! server emits for a game carries that game's outbound `seq`; both clients
//! observe their frames in one total order. [`Session`] is the pure part of
//! a live game: it turns raw client frames into logged events and outbound
//! frames, leaving I/O to the caller.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::game::{EventKind, GameError, GameState, LabelOutcome, Transition, TurnEvent};
use crate::model::{Actor, Decision, GameSpec, ImageId, Player};
use crate::payment::{compute_payment, Usd};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Join { worker_id: String },
    Chat { text: String },
    Label { image_id: ImageId, decision: Decision },
    Submit,
    /// Leaves the feedback screen.
    NextRound,
    Questionnaire { q1: u8, q2: u8, q3: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageView {
    pub image_id: ImageId,
    pub uri: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackResult {
    pub image_id: ImageId,
    pub decision: Decision,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Queued,
    Paired {
        game_id: String,
        role: Player,
        token: String,
        warmup: bool,
    },
    /// `round` 0 is the warm-up page.
    RoundStart {
        round: u8,
        images: Vec<ImageView>,
        highlights: Vec<ImageId>,
    },
    Chat { from: Player, text: String },
    LabelAck { image_id: ImageId, decision: Decision },
    Submitted { player: Player },
    /// The recipient's own labels on the page just closed.
    Feedback { round: u8, results: Vec<FeedbackResult> },
    Questionnaire,
    GameEnd {
        completed: bool,
        score: u32,
        payment_cents: u64,
        payment: String,
    },
    PartnerDisconnected,
    Error { code: String, message: String },
}

impl ServerFrame {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        ServerFrame::Error {
            code: code.to_owned(),
            message: message.into(),
        }
    }
}

/// A server frame with its per-game sequence number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outbound {
    pub seq: u64,
    #[serde(flatten)]
    pub frame: ServerFrame,
}

impl Outbound {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frames always serialise")
    }
}

/// Result of routing one input.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Routed {
    /// The accepted event, to be made durable before `outbound` is sent.
    pub event: Option<TurnEvent>,
    pub outbound: Vec<(Player, Outbound)>,
    pub finished: bool,
}

/// Error codes sent in `error` frames.
pub mod codes {
    pub const BAD_FRAME: &str = "bad_frame";
    pub const UNEXPECTED_FRAME: &str = "unexpected_frame";
    pub const ILLEGAL: &str = "illegal_transition";
    pub const MESSAGE_TOO_LONG: &str = "message_too_long";
    pub const NOT_ELIGIBLE: &str = "not_eligible";
    pub const NOT_IN_GAME: &str = "not_in_game";
    pub const GAME_OVER: &str = "game_over";
}

pub struct Session {
    state: GameState,
    uris: BTreeMap<ImageId, String>,
    /// Game number (1-based) this game is for each participant.
    game_index: [u32; 2],
    out_seq: u64,
}

impl Session {
    pub fn new(spec: GameSpec, uris: BTreeMap<ImageId, String>, game_index: [u32; 2], started_ms: u64) -> Self {
        Session {
            state: GameState::new(spec, started_ms),
            uris,
            game_index,
            out_seq: 0,
        }
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    fn stamp(&mut self, frame: ServerFrame) -> Outbound {
        self.out_seq += 1;
        Outbound { seq: self.out_seq, frame }
    }

    fn both(&mut self, out: &mut Vec<(Player, Outbound)>, frame: ServerFrame) {
        let o = self.stamp(frame);
        out.push((Player::A, o.clone()));
        out.push((Player::B, o));
    }

    fn page_frames(&mut self, page: u8, out: &mut Vec<(Player, Outbound)>) {
        let Some(spec) = self.state.page_spec(page).cloned() else { return };
        for p in Player::BOTH {
            let images = spec
                .display(p)
                .iter()
                .map(|&image_id| ImageView {
                    image_id,
                    uri: self.uris.get(&image_id).cloned().unwrap_or_else(|| format!("/images/{image_id}.jpg")),
                })
                .collect();
            let frame = ServerFrame::RoundStart {
                round: page,
                images,
                highlights: spec.highlights(p).to_vec(),
            };
            let o = self.stamp(frame);
            out.push((p, o));
        }
    }

    /// `paired` for each player followed by their first page.
    pub fn open(&mut self, tokens: [String; 2]) -> Vec<(Player, Outbound)> {
        let mut out = Vec::new();
        let warmup = self.state.spec.warmup.is_some();
        for (p, token) in Player::BOTH.into_iter().zip(tokens) {
            let frame = ServerFrame::Paired {
                game_id: self.state.spec.game_id.clone(),
                role: p,
                token,
                warmup,
            };
            let o = self.stamp(frame);
            out.push((p, o));
        }
        out.extend(self.start());
        out
    }

    /// Frames sent when the game starts: the first page for each player.
    pub fn start(&mut self) -> Vec<(Player, Outbound)> {
        let mut out = Vec::new();
        let page = self.state.phase.page().unwrap_or(1);
        self.page_frames(page, &mut out);
        out
    }

    fn end_frames(&mut self, completed: bool, out: &mut Vec<(Player, Outbound)>) {
        let minutes = self.state.duration_ms().unwrap_or(0) as f64 / 60_000.0;
        let score = self.state.score();
        for p in Player::BOTH {
            let pay = compute_payment(minutes, self.game_index[p.index()].clamp(1, crate::payment::MAX_GAMES), completed)
                .unwrap_or_default();
            let frame = ServerFrame::GameEnd {
                completed,
                score,
                payment_cents: pay.cents,
                payment: pay.to_string(),
            };
            let o = self.stamp(frame);
            out.push((p, o));
        }
    }

    pub fn payment(&self, p: Player) -> Usd {
        let minutes = self.state.duration_ms().unwrap_or(0) as f64 / 60_000.0;
        compute_payment(minutes, self.game_index[p.index()].clamp(1, crate::payment::MAX_GAMES), self.state.phase == crate::game::Phase::Done)
            .unwrap_or_default()
    }

    fn reject(&mut self, to: Player, code: &str, message: String) -> Routed {
        let o = self.stamp(ServerFrame::error(code, message));
        Routed { event: None, outbound: vec![(to, o)], finished: false }
    }

    /// Decodes and applies one text frame from `from`. Malformed or illegal
    /// frames leave the game unchanged and answer the sender with `error`.
    pub fn route(&mut self, from: Player, raw: &str, now_ms: u64) -> Routed {
        let frame: ClientFrame = match serde_json::from_str(raw) {
            Ok(f) => f,
            Err(e) => return self.reject(from, codes::BAD_FRAME, e.to_string()),
        };
        let kind = match frame {
            ClientFrame::Join { .. } => {
                return self.reject(from, codes::UNEXPECTED_FRAME, "already in a game".into())
            }
            ClientFrame::Chat { text } => EventKind::Message { text },
            ClientFrame::Label { image_id, decision } => EventKind::Label { image_id, decision },
            ClientFrame::Submit => EventKind::Submit,
            ClientFrame::NextRound => EventKind::FeedbackAck,
            ClientFrame::Questionnaire { q1, q2, q3 } => EventKind::Questionnaire { answers: [q1, q2, q3] },
        };
        self.apply(TurnEvent::new(self.state.last_seq + 1, now_ms, from, kind))
    }

    /// The connection of `who` dropped; the game is aborted.
    pub fn disconnect(&mut self, who: Player, now_ms: u64) -> Routed {
        if self.state.phase.is_terminal() {
            return Routed::default();
        }
        let mut routed = self.apply(TurnEvent::new(self.state.last_seq + 1, now_ms, Actor::System, EventKind::Disconnect));
        let o = self.stamp(ServerFrame::PartnerDisconnected);
        routed.outbound.insert(0, (who.other(), o));
        routed
    }

    fn apply(&mut self, event: TurnEvent) -> Routed {
        let sender = event.actor.player().unwrap_or(Player::A);
        let transition = match self.state.step(&event) {
            Ok(t) => t,
            Err(GameError::MessageTooLong(n)) => {
                return self.reject(sender, codes::MESSAGE_TOO_LONG, GameError::MessageTooLong(n).to_string())
            }
            Err(e) => {
                let code = if self.state.phase.is_terminal() { codes::GAME_OVER } else { codes::ILLEGAL };
                return self.reject(sender, code, e.to_string());
            }
        };
        let mut out = Vec::new();
        let mut finished = false;
        match transition {
            Transition::Message => {
                if let EventKind::Message { text } = &event.kind {
                    self.both(&mut out, ServerFrame::Chat { from: sender, text: text.clone() });
                }
            }
            Transition::Labelled => {
                if let EventKind::Label { image_id, decision } = event.kind {
                    let o = self.stamp(ServerFrame::LabelAck { image_id, decision });
                    out.push((sender, o));
                }
            }
            Transition::Submitted(p) => self.both(&mut out, ServerFrame::Submitted { player: p }),
            Transition::PageClosed { round, outcomes } => {
                self.both(&mut out, ServerFrame::Submitted { player: sender });
                for p in Player::BOTH {
                    let results = own_results(&outcomes, p);
                    let o = self.stamp(ServerFrame::Feedback { round, results });
                    out.push((p, o));
                }
            }
            Transition::Acknowledged(_) | Transition::Answered(_) => {}
            Transition::PageOpened { round } => self.page_frames(round, &mut out),
            Transition::QuestionnaireOpened => self.both(&mut out, ServerFrame::Questionnaire),
            Transition::Completed => {
                self.end_frames(true, &mut out);
                finished = true;
            }
            Transition::Aborted => {
                self.end_frames(false, &mut out);
                finished = true;
            }
        }
        Routed { event: Some(event), outbound: out, finished }
    }
}

fn own_results(outcomes: &[LabelOutcome], p: Player) -> Vec<FeedbackResult> {
    outcomes
        .iter()
        .filter(|o| o.player == p)
        .map(|o| FeedbackResult {
            image_id: o.image_id,
            decision: o.decision,
            correct: o.correct,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use crate::schema::GameSchema;

    fn session() -> Session {
        let spec = GameSchema::canonical().game_spec("s", 1, Variant::One);
        Session::new(spec, BTreeMap::new(), [1, 2], 0)
    }

    fn frames(r: &Routed, p: Player) -> Vec<&ServerFrame> {
        r.outbound.iter().filter(|(q, _)| *q == p).map(|(_, o)| &o.frame).collect()
    }

    #[test]
    fn chat_is_relayed_identically() {
        let mut s = session();
        s.start();
        let r = s.route(Player::A, r#"{"type":"chat","text":"hi there"}"#, 5);
        assert_eq!(r.outbound.len(), 2);
        assert_eq!(r.outbound[0].1, r.outbound[1].1);
        assert_eq!(r.outbound[0].1.to_json(), r#"{"seq":3,"type":"chat","from":"A","text":"hi there"}"#);
        assert!(matches!(r.event, Some(TurnEvent { seq: 1, .. })));
    }

    #[test]
    fn malformed_frame_changes_nothing() {
        let mut s = session();
        let before = s.state().clone();
        for raw in ["{", r#"{"type":"dance"}"#, r#"{"type":"label","image_id":"x","decision":"common"}"#] {
            let r = s.route(Player::B, raw, 1);
            assert!(r.event.is_none());
            assert!(matches!(frames(&r, Player::B)[..], [ServerFrame::Error { code, .. }] if code == codes::BAD_FRAME));
            assert!(frames(&r, Player::A).is_empty());
        }
        assert_eq!(s.state(), &before);
    }

    #[test]
    fn illegal_and_too_long() {
        let mut s = session();
        let r = s.route(Player::A, r#"{"type":"submit"}"#, 1);
        assert!(matches!(frames(&r, Player::A)[..], [ServerFrame::Error { code, .. }] if code == codes::ILLEGAL));
        let long = format!(r#"{{"type":"chat","text":"{}"}}"#, "x".repeat(101));
        let r = s.route(Player::A, &long, 1);
        assert!(matches!(frames(&r, Player::A)[..], [ServerFrame::Error { code, .. }] if code == codes::MESSAGE_TOO_LONG));
        assert_eq!(s.state().last_seq, 0);
    }

    #[test]
    fn round_close_sends_feedback_and_next_page() {
        let mut s = session();
        let start = s.start();
        assert_eq!(start.len(), 2);
        let spec = s.state().spec.rounds[0].clone();
        for p in Player::BOTH {
            for &img in spec.highlights(p) {
                let raw = format!(r#"{{"type":"label","image_id":{img},"decision":"common"}}"#);
                let r = s.route(p, &raw, 10);
                assert!(matches!(frames(&r, p)[..], [ServerFrame::LabelAck { .. }]));
            }
        }
        s.route(Player::A, r#"{"type":"submit"}"#, 20);
        let r = s.route(Player::B, r#"{"type":"submit"}"#, 30);
        for p in Player::BOTH {
            let fs = frames(&r, p);
            let ServerFrame::Feedback { round: 1, results } = fs[1] else { panic!("{fs:?}") };
            assert_eq!(results.len(), 3);
            for res in results {
                assert_eq!(res.correct, spec.is_common(res.image_id));
            }
        }
        s.route(Player::A, r#"{"type":"next_round"}"#, 40);
        let r = s.route(Player::B, r#"{"type":"next_round"}"#, 41);
        assert!(matches!(frames(&r, Player::A)[..], [ServerFrame::RoundStart { round: 2, .. }]));
        // Outbound seq strictly increases.
        assert!(r.outbound.windows(2).all(|w| w[0].1.seq < w[1].1.seq));
    }

    #[test]
    fn disconnect_aborts_unpaid() {
        let mut s = session();
        s.start();
        let r = s.disconnect(Player::B, 60_000);
        assert!(r.finished);
        assert!(matches!(frames(&r, Player::A)[..], [ServerFrame::PartnerDisconnected, ServerFrame::GameEnd { completed: false, payment_cents: 0, .. }]));
        assert_eq!(r.event.unwrap().kind, EventKind::Disconnect);
        assert!(s.disconnect(Player::A, 61_000).outbound.is_empty());
    }

    #[test]
    fn client_frame_shapes() {
        let f: ClientFrame = serde_json::from_str(r#"{"type":"questionnaire","q1":5,"q2":4,"q3":3}"#).unwrap();
        assert_eq!(f, ClientFrame::Questionnaire { q1: 5, q2: 4, q3: 3 });
        let o = Outbound { seq: 9, frame: ServerFrame::GameEnd { completed: true, score: 28, payment_cents: 195, payment: "1.95 USD".into() } };
        assert_eq!(o.to_json(), r#"{"seq":9,"type":"game_end","completed":true,"score":28,"payment_cents":195,"payment":"1.95 USD"}"#);
    }
}
