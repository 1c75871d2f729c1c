//! The fixed display and highlight schema shared by every image set, and
//! the structural checks every game specification must pass.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::Ratio;
use serde::Serialize;

use crate::model::{
    GameSpec, ImageId, Player, RoundSpec, Variant, DISPLAYS_PER_IMAGE, DISPLAY_SIZE, HIGHLIGHTS,
    ROUNDS, SET_SIZE,
};

/// Display rows as `[round][player]`.
type DisplayTable = [[[ImageId; DISPLAY_SIZE]; 2]; ROUNDS];

const DISPLAYS: DisplayTable = [
    [[1, 2, 3, 4, 5, 6], [1, 2, 3, 4, 7, 8]],
    [[1, 3, 6, 7, 9, 10], [2, 3, 6, 7, 9, 11]],
    [[4, 5, 7, 10, 11, 12], [2, 4, 6, 8, 9, 10]],
    [[1, 2, 5, 8, 11, 12], [1, 4, 5, 8, 10, 12]],
    [[5, 6, 8, 9, 11, 12], [3, 7, 9, 10, 11, 12]],
];

/// Round 3 / B as it appears in the published assignment table, where it
/// duplicates the round 2 / B row.
const PRINTED_ROUND3_B: [ImageId; DISPLAY_SIZE] = [2, 3, 6, 7, 9, 11];

/// Highlight cells per image (rows 1..=12), columns r1A r1B r2A r2B ... r5B.
/// A value `v` in {1, 2} means variant `v` highlights the image in that slot.
const HIGHLIGHT_CELLS: [[u8; 2 * ROUNDS]; SET_SIZE] = [
    [1, 1, 1, 0, 0, 0, 1, 1, 0, 0],
    [2, 2, 0, 2, 0, 2, 2, 0, 0, 0],
    [1, 1, 1, 1, 0, 0, 0, 0, 0, 1],
    [2, 2, 0, 0, 2, 1, 0, 2, 0, 0],
    [1, 0, 0, 0, 1, 0, 1, 1, 1, 0],
    [2, 0, 2, 2, 0, 2, 0, 0, 2, 0],
    [0, 1, 1, 1, 1, 0, 0, 0, 0, 1],
    [0, 2, 0, 0, 0, 1, 2, 1, 1, 0],
    [0, 0, 2, 2, 0, 1, 0, 0, 2, 2],
    [0, 0, 2, 0, 2, 2, 0, 2, 0, 2],
    [0, 0, 0, 1, 1, 0, 1, 0, 1, 1],
    [0, 0, 0, 0, 2, 0, 2, 2, 2, 2],
];

/// Display assignment plus highlight assignment for both variants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameSchema {
    displays: [[Vec<ImageId>; 2]; ROUNDS],
    cells: [[u8; 2 * ROUNDS]; SET_SIZE],
}

impl GameSchema {
    /// Schema with the round 3 / B row reconstructed from the highlight
    /// occupancy, so every image is shown exactly five times.
    pub fn canonical() -> Self {
        GameSchema {
            displays: DISPLAYS.map(|r| r.map(|d| d.to_vec())),
            cells: HIGHLIGHT_CELLS,
        }
    }

    /// Schema exactly as published, duplicate round 3 / B row included.
    pub fn as_printed() -> Self {
        let mut s = Self::canonical();
        s.displays[2][1] = PRINTED_ROUND3_B.to_vec();
        s
    }

    pub fn display(&self, round: usize, player: Player) -> &[ImageId] {
        &self.displays[round - 1][player.index()]
    }

    /// Variant highlighting `image` for `player` in `round`, if any.
    pub fn highlight_cell(&self, image: ImageId, round: usize, player: Player) -> Option<Variant> {
        let v = self.cells[image as usize - 1][2 * (round - 1) + player.index()];
        Variant::try_from(v).ok()
    }

    pub fn highlights(&self, round: usize, player: Player, variant: Variant) -> Vec<ImageId> {
        (1..=SET_SIZE as ImageId)
            .filter(|&i| self.highlight_cell(i, round, player) == Some(variant))
            .collect()
    }

    /// Rounds of one variant in canonical order.
    pub fn rounds(&self, variant: Variant) -> Vec<RoundSpec> {
        (1..=ROUNDS)
            .map(|r| RoundSpec {
                round_index: r as u8,
                schema_round: r as u8,
                display_a: self.display(r, Player::A).to_vec(),
                display_b: self.display(r, Player::B).to_vec(),
                highlights_a: self.highlights(r, Player::A, variant),
                highlights_b: self.highlights(r, Player::B, variant),
            })
            .collect()
    }

    pub fn game_spec(&self, game_id: impl Into<String>, set_id: u32, variant: Variant) -> GameSpec {
        GameSpec {
            game_id: game_id.into(),
            set_id,
            variant,
            rounds: self.rounds(variant),
            warmup: None,
            seed: 0,
        }
    }

    /// Number of distinct rounds in which `image` is highlighted for anyone,
    /// over both variants.
    pub fn highlighted_rounds(&self, image: ImageId) -> usize {
        (1..=ROUNDS)
            .filter(|&r| {
                Player::BOTH
                    .iter()
                    .any(|&p| self.highlight_cell(image, r, p).is_some())
            })
            .count()
    }

    /// Mean of [`highlighted_rounds`](Self::highlighted_rounds) over the set.
    pub fn mean_highlighted_rounds(&self) -> Ratio<u32> {
        let total: usize = (1..=SET_SIZE as ImageId)
            .map(|i| self.highlighted_rounds(i))
            .sum();
        Ratio::new(total as u32, SET_SIZE as u32)
    }

    /// Highlight slots per variant for one image.
    pub fn highlight_slots(&self, image: ImageId) -> BTreeMap<Variant, usize> {
        let mut out = BTreeMap::new();
        for &v in &self.cells[image as usize - 1] {
            if let Ok(variant) = Variant::try_from(v) {
                *out.entry(variant).or_insert(0) += 1;
            }
        }
        out
    }

    /// Size of the union of both displays per round.
    pub fn candidate_union_sizes(&self) -> Vec<usize> {
        self.rounds(Variant::One)
            .iter()
            .map(|r| r.candidate_union().len())
            .collect()
    }

    /// Checks both variants and the cross-variant highlight totals.
    pub fn validate(&self) -> ValidationReport {
        let v1 = self.game_spec("schema-v1", 0, Variant::One);
        let v2 = self.game_spec("schema-v2", 0, Variant::Two);
        let mut report = validate_game_spec(&v1);
        for violation in validate_game_spec(&v2).violations {
            if !report.violations.contains(&violation) {
                report.violations.push(violation);
            }
        }
        report.violations.extend(validate_pair(&v1, &v2).violations);
        report
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    RoundCount { count: usize },
    DisplaySize { round: u8, player: Player, count: usize },
    DuplicateInDisplay { round: u8, player: Player, image: ImageId },
    UnknownImage { round: u8, player: Player, image: ImageId },
    DisplayCount { image: ImageId, count: usize },
    HighlightCount { round: u8, player: Player, count: usize, expected: usize },
    HighlightNotDisplayed { round: u8, player: Player, image: ImageId },
    DisplaysDiffer { round: u8 },
    HighlightTotal { image: ImageId, count: usize },
    DoubleHighlight { round: u8, player: Player, image: ImageId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            RoundCount { count } => write!(f, "game has {count} rounds, expected {ROUNDS}"),
            DisplaySize { round, player, count } => {
                write!(f, "round {round} player {player} shows {count} images, expected {DISPLAY_SIZE}")
            }
            DuplicateInDisplay { round, player, image } => {
                write!(f, "round {round} player {player} shows image {image} twice")
            }
            UnknownImage { round, player, image } => {
                write!(f, "round {round} player {player} references unknown image {image}")
            }
            DisplayCount { image, count } => write!(f, "image {image} displayed {count} times"),
            HighlightCount { round, player, count, expected } => {
                write!(f, "round {round} player {player} has {count} highlights, expected {expected}")
            }
            HighlightNotDisplayed { round, player, image } => {
                write!(f, "round {round} player {player} highlights image {image} which is not displayed")
            }
            DisplaysDiffer { round } => write!(f, "round {round} displays differ between variants"),
            HighlightTotal { image, count } => {
                write!(f, "image {image} highlighted in {count} slots across both variants, expected {DISPLAYS_PER_IMAGE}")
            }
            DoubleHighlight { round, player, image } => {
                write!(f, "round {round} player {player} image {image} highlighted in both variants")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn messages(&self) -> Vec<String> {
        self.violations.iter().map(|v| v.to_string()).collect()
    }
}

fn check_round(
    round: &RoundSpec,
    display_size: usize,
    highlight_count: usize,
    valid_image: impl Fn(ImageId) -> bool,
    out: &mut Vec<Violation>,
) {
    let idx = round.round_index;
    for p in Player::BOTH {
        let display = round.display(p);
        if display.len() != display_size {
            out.push(Violation::DisplaySize { round: idx, player: p, count: display.len() });
        }
        let mut seen = BTreeSet::new();
        for &img in display {
            if !valid_image(img) {
                out.push(Violation::UnknownImage { round: idx, player: p, image: img });
            }
            if !seen.insert(img) {
                out.push(Violation::DuplicateInDisplay { round: idx, player: p, image: img });
            }
        }
        let highlights = round.highlights(p);
        let distinct: BTreeSet<_> = highlights.iter().collect();
        if distinct.len() != highlight_count || highlights.len() != highlight_count {
            out.push(Violation::HighlightCount {
                round: idx,
                player: p,
                count: distinct.len(),
                expected: highlight_count,
            });
        }
        for &h in &distinct {
            if !display.contains(h) {
                out.push(Violation::HighlightNotDisplayed { round: idx, player: p, image: *h });
            }
        }
    }
}

/// Structural check of a single game. Violations are collected, not thrown.
pub fn validate_game_spec(spec: &GameSpec) -> ValidationReport {
    let mut out = Vec::new();
    if spec.rounds.len() != ROUNDS {
        out.push(Violation::RoundCount { count: spec.rounds.len() });
    }
    let in_set = |i: ImageId| (1..=SET_SIZE as ImageId).contains(&i);
    for round in &spec.rounds {
        check_round(round, DISPLAY_SIZE, HIGHLIGHTS, in_set, &mut out);
    }
    let mut counts = [0usize; SET_SIZE];
    for round in &spec.rounds {
        for p in Player::BOTH {
            for &img in round.display(p) {
                if in_set(img) {
                    counts[img as usize - 1] += 1;
                }
            }
        }
    }
    for (i, &count) in counts.iter().enumerate() {
        if count != DISPLAYS_PER_IMAGE {
            out.push(Violation::DisplayCount { image: i as ImageId + 1, count });
        }
    }
    if let Some(w) = &spec.warmup {
        check_round(w, 3, 2, |_| true, &mut out);
    }
    ValidationReport { violations: out }
}

/// Cross-variant checks for the two games derived from one image set:
/// identical displays, disjoint highlights, five highlight slots per image.
pub fn validate_pair(first: &GameSpec, second: &GameSpec) -> ValidationReport {
    let mut out = Vec::new();
    let by_schema = |s: &GameSpec| {
        s.rounds
            .iter()
            .map(|r| (r.schema_round, r.clone()))
            .collect::<BTreeMap<_, _>>()
    };
    let (a, b) = (by_schema(first), by_schema(second));
    let mut totals = [0usize; SET_SIZE];
    for (schema_round, ra) in &a {
        let Some(rb) = b.get(schema_round) else {
            out.push(Violation::DisplaysDiffer { round: *schema_round });
            continue;
        };
        for p in Player::BOTH {
            let da: BTreeSet<_> = ra.display(p).iter().collect();
            let db: BTreeSet<_> = rb.display(p).iter().collect();
            if da != db && !out.contains(&Violation::DisplaysDiffer { round: *schema_round }) {
                out.push(Violation::DisplaysDiffer { round: *schema_round });
            }
            for &h in ra.highlights(p) {
                if rb.highlights(p).contains(&h) {
                    out.push(Violation::DoubleHighlight { round: *schema_round, player: p, image: h });
                }
            }
            for &h in ra.highlights(p).iter().chain(rb.highlights(p)) {
                if (1..=SET_SIZE as ImageId).contains(&h) {
                    totals[h as usize - 1] += 1;
                }
            }
        }
    }
    for (i, &count) in totals.iter().enumerate() {
        if count != DISPLAYS_PER_IMAGE {
            out.push(Violation::HighlightTotal { image: i as ImageId + 1, count });
        }
    }
    ValidationReport { violations: out }
}
