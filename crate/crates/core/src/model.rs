//! Shared domain types: images, sets, rounds and game specifications.

use std::collections::BTreeSet;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Index of an image inside its 12-image set (1..=12). Warm-up images use
/// ids from [`WARMUP_IMAGE_BASE`] upwards.
pub type ImageId = u8;

/// Number of images in a set.
pub const SET_SIZE: usize = 12;
/// Number of labelling rounds in a game.
pub const ROUNDS: usize = 5;
/// Images on a participant's page.
pub const DISPLAY_SIZE: usize = 6;
/// Highlighted targets per participant and round.
pub const HIGHLIGHTS: usize = 3;
/// Times every image is shown across a game (over both players).
pub const DISPLAYS_PER_IMAGE: usize = 5;
/// Maximum chat message length, in characters.
pub const MAX_MESSAGE_CHARS: usize = 100;
/// First image id of the warm-up pool.
pub const WARMUP_IMAGE_BASE: ImageId = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Player {
    A,
    B,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::A, Player::B];

    pub fn other(self) -> Player {
        match self {
            Player::A => Player::B,
            Player::B => Player::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Player::A => 0,
            Player::B => 1,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Player::A => f.write_str("A"),
            Player::B => f.write_str("B"),
        }
    }
}

/// Author of an event: one of the two participants or the server itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Actor {
    A,
    B,
    #[serde(rename = "system")]
    System,
}

impl Actor {
    pub fn player(self) -> Option<Player> {
        match self {
            Actor::A => Some(Player::A),
            Actor::B => Some(Player::B),
            Actor::System => None,
        }
    }
}

impl From<Player> for Actor {
    fn from(p: Player) -> Self {
        match p {
            Player::A => Actor::A,
            Player::B => Actor::B,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Common,
    Different,
}

/// Which of the two highlight assignments over one image set a game uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Variant {
    One,
    Two,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::One, Variant::Two];

    pub fn other(self) -> Variant {
        match self {
            Variant::One => Variant::Two,
            Variant::Two => Variant::One,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Variant::One => 1,
            Variant::Two => 2,
        }
    }
}

impl From<Variant> for u8 {
    fn from(v: Variant) -> u8 {
        v.number()
    }
}

impl TryFrom<u8> for Variant {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Variant::One),
            2 => Ok(Variant::Two),
            other => Err(format!("variant must be 1 or 2, got {other}")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Unordered pair of object categories, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryPair(String, String);

impl CategoryPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            CategoryPair(a, b)
        } else {
            CategoryPair(b, a)
        }
    }

    pub fn first(&self) -> &str {
        &self.0
    }

    pub fn second(&self) -> &str {
        &self.1
    }
}

impl fmt::Display for CategoryPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.0, self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: ImageId,
    pub source_id: String,
    pub category_pair: CategoryPair,
    pub display_uri: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSet {
    pub set_id: u32,
    pub images: Vec<ImageRecord>,
}

impl ImageSet {
    pub fn category_pair(&self) -> Option<&CategoryPair> {
        self.images.first().map(|i| &i.category_pair)
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == id)
    }
}

/// One page of the photo book: what each participant sees and which of
/// those images they have to label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSpec {
    /// Position in play order (1..=5, 0 for the warm-up round).
    pub round_index: u8,
    /// Row of the display schema this round was taken from.
    pub schema_round: u8,
    pub display_a: Vec<ImageId>,
    pub display_b: Vec<ImageId>,
    pub highlights_a: Vec<ImageId>,
    pub highlights_b: Vec<ImageId>,
}

impl RoundSpec {
    pub fn display(&self, p: Player) -> &[ImageId] {
        match p {
            Player::A => &self.display_a,
            Player::B => &self.display_b,
        }
    }

    pub fn highlights(&self, p: Player) -> &[ImageId] {
        match p {
            Player::A => &self.highlights_a,
            Player::B => &self.highlights_b,
        }
    }

    /// An image is common when both participants see it on this page.
    pub fn is_common(&self, image: ImageId) -> bool {
        self.display_a.contains(&image) && self.display_b.contains(&image)
    }

    /// Union of both participants' displays.
    pub fn candidate_union(&self) -> BTreeSet<ImageId> {
        self.display_a.iter().chain(&self.display_b).copied().collect()
    }

    /// The correct label for `image` on this page.
    pub fn truth(&self, image: ImageId) -> Decision {
        if self.is_common(image) {
            Decision::Common
        } else {
            Decision::Different
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSpec {
    pub game_id: String,
    pub set_id: u32,
    pub variant: Variant,
    pub rounds: Vec<RoundSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<RoundSpec>,
    /// Seed used to shuffle round and grid order; 0 for canonical order.
    #[serde(default)]
    pub seed: u64,
}

impl GameSpec {
    pub fn game_ref(&self) -> GameRef {
        GameRef {
            set_id: self.set_id,
            variant: self.variant,
        }
    }

    /// Total number of label decisions in the scored rounds.
    pub fn decision_count(&self) -> usize {
        self.rounds
            .iter()
            .map(|r| r.highlights_a.len() + r.highlights_b.len())
            .sum()
    }

    /// Returns a copy with round order and each grid's image order permuted.
    /// Highlights are sorted so they do not leak the grid permutation.
    pub fn shuffled(&self, seed: u64) -> GameSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rounds = self.rounds.clone();
        rounds.shuffle(&mut rng);
        for (i, r) in rounds.iter_mut().enumerate() {
            r.round_index = (i + 1) as u8;
            r.display_a.shuffle(&mut rng);
            r.display_b.shuffle(&mut rng);
            r.highlights_a.sort_unstable();
            r.highlights_b.sort_unstable();
        }
        GameSpec {
            rounds,
            seed,
            ..self.clone()
        }
    }

    pub fn with_warmup(mut self) -> GameSpec {
        self.warmup = Some(standard_warmup());
        self
    }
}

/// The warm-up page: three images per participant, two of them highlighted.
pub fn standard_warmup() -> RoundSpec {
    let w = WARMUP_IMAGE_BASE;
    RoundSpec {
        round_index: 0,
        schema_round: 0,
        display_a: vec![w, w + 1, w + 2],
        display_b: vec![w, w + 1, w + 3],
        highlights_a: vec![w, w + 2],
        highlights_b: vec![w, w + 3],
    }
}

/// A game in the catalogue, independent of any shuffling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GameRef {
    pub set_id: u32,
    pub variant: Variant,
}

impl GameRef {
    pub fn new(set_id: u32, variant: Variant) -> Self {
        GameRef { set_id, variant }
    }

    pub fn sibling(self) -> GameRef {
        GameRef {
            variant: self.variant.other(),
            ..self
        }
    }
}

impl fmt::Display for GameRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "set{:02}-v{}", self.set_id, self.variant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn category_pair_is_unordered() {
        assert_eq!(CategoryPair::new("person", "cat"), CategoryPair::new("cat", "person"));
        assert_eq!(CategoryPair::new("person", "cat").to_string(), "cat_person");
    }

    #[test]
    fn variant_serializes_as_number() {
        assert_eq!(serde_json::to_string(&Variant::Two).unwrap(), "2");
        assert!(serde_json::from_str::<Variant>("3").is_err());
    }

    #[test]
    fn warmup_has_two_highlights_each() {
        let w = standard_warmup();
        for p in Player::BOTH {
            assert_eq!(w.display(p).len(), 3);
            assert_eq!(w.highlights(p).len(), 2);
            assert!(w.highlights(p).iter().all(|h| w.display(p).contains(h)));
        }
    }
}
