//! Image-set construction from COCO-style annotations and derivation of the
//! two game variants per set.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CategoryPair, GameSpec, ImageRecord, ImageSet, Variant, SET_SIZE};
use crate::schema::GameSchema;

/// Two largest objects must jointly cover at least this many pixels.
pub const MIN_MAIN_OBJECT_AREA: f64 = 30_000.0;
/// A group needs this many images before it can become a set.
pub const MIN_GROUP_SIZE: usize = 20;
pub const DEFAULT_SET_COUNT: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub category: String,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub source_id: String,
    pub width: u32,
    pub height: u32,
    pub color: bool,
    /// Watermarked or otherwise marked images are not usable.
    #[serde(default)]
    pub marked: bool,
    pub objects: Vec<ObjectAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Landscape,
    Portrait,
}

impl AnnotationRecord {
    pub fn orientation(&self) -> Orientation {
        if self.width > self.height {
            Orientation::Landscape
        } else {
            Orientation::Portrait
        }
    }

    /// The two largest objects: larger area first, then category name.
    pub fn main_objects(&self) -> Option<(&ObjectAnnotation, &ObjectAnnotation)> {
        let mut objs: Vec<&ObjectAnnotation> = self.objects.iter().collect();
        objs.sort_by(|a, b| {
            b.area
                .total_cmp(&a.area)
                .then_with(|| a.category.cmp(&b.category))
        });
        match objs.as_slice() {
            [a, b, ..] => Some((a, b)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub portrait: usize,
    pub grayscale: usize,
    pub marked: usize,
    pub too_few_objects: usize,
    pub small_objects: usize,
    pub bad_area: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ImageGroups {
    pub groups: BTreeMap<CategoryPair, Vec<AnnotationRecord>>,
    pub excluded: ExclusionCounts,
}

/// Filters usable images and groups them by the categories of their two
/// largest objects.
pub fn group_similar_images(records: &[AnnotationRecord]) -> ImageGroups {
    let mut out = ImageGroups::default();
    for r in records {
        let ex = &mut out.excluded;
        if r.objects.iter().any(|o| !o.area.is_finite() || o.area <= 0.0) {
            ex.bad_area += 1;
            continue;
        }
        if r.orientation() != Orientation::Landscape {
            ex.portrait += 1;
            continue;
        }
        if !r.color {
            ex.grayscale += 1;
            continue;
        }
        if r.marked {
            ex.marked += 1;
            continue;
        }
        let Some((a, b)) = r.main_objects() else {
            ex.too_few_objects += 1;
            continue;
        };
        if a.area + b.area < MIN_MAIN_OBJECT_AREA {
            ex.small_objects += 1;
            continue;
        }
        out.groups
            .entry(CategoryPair::new(a.category.clone(), b.category.clone()))
            .or_default()
            .push(r.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameSetError {
    #[error("only {qualifying} groups have at least {min_size} images, {requested} requested")]
    InsufficientGroups {
        qualifying: usize,
        requested: usize,
        min_size: usize,
    },
    #[error("annotation line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Picks the `count` largest qualifying groups (ties by category pair) and
/// samples 12 images from each. Group choice does not depend on the seed.
pub fn build_image_sets(
    groups: &ImageGroups,
    seed: u64,
    count: usize,
) -> Result<Vec<ImageSet>, GameSetError> {
    let mut qualifying: Vec<(&CategoryPair, &Vec<AnnotationRecord>)> = groups
        .groups
        .iter()
        .filter(|(_, v)| v.len() >= MIN_GROUP_SIZE)
        .collect();
    if qualifying.len() < count {
        return Err(GameSetError::InsufficientGroups {
            qualifying: qualifying.len(),
            requested: count,
            min_size: MIN_GROUP_SIZE,
        });
    }
    qualifying.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(b.0)));
    qualifying.truncate(count);
    // Restore category order so set ids are stable across group sizes.
    qualifying.sort_by(|a, b| a.0.cmp(b.0));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sets = qualifying
        .into_iter()
        .enumerate()
        .map(|(i, (pair, members))| {
            let picks = sample(&mut rng, members.len(), SET_SIZE);
            let images = picks
                .iter()
                .enumerate()
                .map(|(k, idx)| {
                    let rec = &members[idx];
                    ImageRecord {
                        image_id: k as u8 + 1,
                        source_id: rec.source_id.clone(),
                        category_pair: pair.clone(),
                        display_uri: format!("/images/{}.jpg", rec.source_id),
                    }
                })
                .collect();
            ImageSet {
                set_id: i as u32 + 1,
                images,
            }
        })
        .collect();
    Ok(sets)
}

/// One image set together with its two games.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSetPair {
    pub set_id: u32,
    pub images: Vec<ImageRecord>,
    pub variant_1: GameSpec,
    pub variant_2: GameSpec,
}

impl GameSetPair {
    pub fn variant(&self, v: Variant) -> &GameSpec {
        match v {
            Variant::One => &self.variant_1,
            Variant::Two => &self.variant_2,
        }
    }
}

pub fn game_id(set_id: u32, variant: Variant) -> String {
    crate::model::GameRef::new(set_id, variant).to_string()
}

/// Applies the fixed display and highlight schema to an indexed set.
pub fn derive_variants(image_set: &ImageSet) -> GameSetPair {
    let schema = GameSchema::canonical();
    let spec = |v| schema.game_spec(game_id(image_set.set_id, v), image_set.set_id, v);
    GameSetPair {
        set_id: image_set.set_id,
        images: image_set.images.clone(),
        variant_1: spec(Variant::One),
        variant_2: spec(Variant::Two),
    }
}

/// On-disk catalogue written by the `gameset` command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSetFile {
    pub version: u32,
    pub seed: u64,
    pub sets: Vec<GameSetPair>,
}

impl GameSetFile {
    pub fn new(seed: u64, sets: Vec<GameSetPair>) -> Self {
        GameSetFile { version: 1, seed, sets }
    }

    pub fn set(&self, set_id: u32) -> Option<&GameSetPair> {
        self.sets.iter().find(|s| s.set_id == set_id)
    }
}

/// Reads one JSON annotation object per line; blank lines are skipped.
pub fn read_annotations(reader: impl BufRead) -> Result<Vec<AnnotationRecord>, GameSetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GameSetError::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| GameSetError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}
