//! Core of the PhotoBook reference-game platform: the fixed display
//! schema, the game state machine, matchmaking, payment, persistence and
//! the corpus tools built on top of the logs.

pub mod model;
pub mod schema;
pub mod synth;
pub mod game;
pub mod payment;
pub mod gameset;
pub mod matchmaking;
pub mod text;
pub mod logstore;
pub mod chains;
pub mod analytics;
pub mod protocol;

pub use game::{EventKind, GameError, GameState, LabelOutcome, Phase, Transition, TurnEvent};
pub use gameset::{GameSetFile, GameSetPair};
pub use logstore::{GameLog, LogError, LogStore, RoundLog};
pub use matchmaking::{MatchConfig, MatchResult, Matchmaker, ParticipantProfile};
pub use model::{
    Actor, CategoryPair, Decision, GameRef, GameSpec, ImageId, ImageRecord, ImageSet, Player, RoundSpec,
    Variant,
};
pub use payment::{compute_payment, PaymentError, Usd};
pub use schema::{GameSchema, ValidationReport, Violation};
