//! Append-only persistence of game events and corpus import/export.
//!
//! Layout under the store root:
//!
//! ```text
//! journal/<game_id>.jsonl   header line, then one TurnEvent per line
//! logs/<game_id>.json       canonical GameLog, written on close
//! index.json                closed games
//! private/pseudonyms.json   worker id -> pseudonym (never exported)
//! ```
//!
//! Every append is flushed to disk before it is acknowledged. On open, any
//! journal without an index entry is recovered as an open game; a torn
//! final line is discarded.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::game::{EventKind, GameError, GameState, LabelOutcome, Phase, TurnEvent};
use crate::model::{Actor, Decision, GameSpec, ImageId, RoundSpec, Variant};
use crate::text::tokenize;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("unknown or closed game {0}")]
    UnknownGame(String),
    #[error("game {0} already exists")]
    DuplicateGame(String),
    #[error("sequence gap in {game_id}: expected {expected}, got {got}")]
    SequenceGap { game_id: String, expected: u64, got: u64 },
    #[error("game {game_id} does not replay: {source}")]
    Replay { game_id: String, source: GameError },
    #[error("corrupt store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LogError> = std::result::Result<T, E>;

/// Serialises with object keys sorted at every level.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    fn sort(v: Value) -> Value {
        match v {
            Value::Object(map) => {
                let mut entries: Vec<(String, Value)> = map.into_iter().collect();
                entries.sort_by(|a, b| a.0.cmp(&b.0));
                Value::Object(entries.into_iter().map(|(k, v)| (k, sort(v))).collect())
            }
            Value::Array(items) => Value::Array(items.into_iter().map(sort).collect()),
            other => other,
        }
    }
    Ok(serde_json::to_string(&sort(serde_json::to_value(value)?))?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round_index: u8,
    pub schema_round: u8,
    pub display_a: Vec<ImageId>,
    pub display_b: Vec<ImageId>,
    pub highlights_a: Vec<ImageId>,
    pub highlights_b: Vec<ImageId>,
    pub start_ms: Option<u64>,
    pub end_ms: Option<u64>,
    /// Events while the page was open for labelling.
    pub events: Vec<TurnEvent>,
    /// Events on the page's feedback screen.
    pub feedback_events: Vec<TurnEvent>,
    pub correctness: Vec<LabelOutcome>,
}

impl RoundLog {
    fn from_spec(spec: &RoundSpec) -> Self {
        RoundLog {
            round_index: spec.round_index,
            schema_round: spec.schema_round,
            display_a: spec.display_a.clone(),
            display_b: spec.display_b.clone(),
            highlights_a: spec.highlights_a.clone(),
            highlights_b: spec.highlights_b.clone(),
            start_ms: None,
            end_ms: None,
            events: Vec::new(),
            feedback_events: Vec::new(),
            correctness: Vec::new(),
        }
    }

    pub fn spec(&self) -> RoundSpec {
        RoundSpec {
            round_index: self.round_index,
            schema_round: self.schema_round,
            display_a: self.display_a.clone(),
            display_b: self.display_b.clone(),
            highlights_a: self.highlights_a.clone(),
            highlights_b: self.highlights_b.clone(),
        }
    }

    pub fn duration_ms(&self) -> Option<u64> {
        Some(self.end_ms?.saturating_sub(self.start_ms?))
    }

    pub fn messages(&self) -> impl Iterator<Item = (&TurnEvent, &str)> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Message { text } => Some((e, text.as_str())),
            _ => None,
        })
    }

    pub fn correct(&self) -> usize {
        self.correctness.iter().filter(|c| c.correct).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireScores {
    pub a: Option<[u8; 3]>,
    pub b: Option<[u8; 3]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameLog {
    pub game_id: String,
    pub set_id: u32,
    pub variant: Variant,
    /// Pseudonyms of participants A and B.
    pub participants: [String; 2],
    pub seed: u64,
    pub started_ms: u64,
    pub warmup: Option<RoundLog>,
    /// Rounds that were opened, in play order.
    pub rounds: Vec<RoundLog>,
    /// Questionnaire answers and anything after the last page.
    pub closing_events: Vec<TurnEvent>,
    pub questionnaire: QuestionnaireScores,
    pub duration_ms: Option<u64>,
    pub completed: bool,
    pub score: u32,
    /// Source path per image, for imported corpora that identify images
    /// by path rather than by set position.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub image_sources: BTreeMap<ImageId, String>,
}

impl GameLog {
    /// Replays `events` and files each under the page it happened on.
    pub fn from_events(
        spec: &GameSpec,
        participants: [String; 2],
        started_ms: u64,
        events: &[TurnEvent],
    ) -> Result<GameLog, GameError> {
        let mut state = GameState::new(spec.clone(), started_ms);
        let mut warmup = spec.warmup.as_ref().map(RoundLog::from_spec);
        let mut rounds: Vec<RoundLog> = spec.rounds.iter().map(RoundLog::from_spec).collect();
        let mut closing = Vec::new();
        for e in events {
            let phase = state.phase;
            state.step(e)?;
            let page = match phase {
                Phase::Warmup | Phase::Feedback(0) => warmup.as_mut(),
                Phase::Round(k) | Phase::Feedback(k) => rounds.get_mut(k as usize - 1),
                _ => None,
            };
            match (page, phase) {
                (Some(p), Phase::Feedback(_)) => p.feedback_events.push(e.clone()),
                (Some(p), _) => p.events.push(e.clone()),
                (None, _) => closing.push(e.clone()),
            }
        }
        let fill = |log: &mut RoundLog, page: &crate::game::PageState| {
            log.start_ms = page.start_ms;
            log.end_ms = page.end_ms;
            log.correctness = page.outcomes.clone();
        };
        if let (Some(w), Some(p)) = (warmup.as_mut(), state.warmup.as_ref()) {
            fill(w, p);
        }
        for (log, page) in rounds.iter_mut().zip(&state.rounds) {
            fill(log, page);
        }
        rounds.retain(|r| r.start_ms.is_some());
        Ok(GameLog {
            game_id: spec.game_id.clone(),
            set_id: spec.set_id,
            variant: spec.variant,
            participants,
            seed: spec.seed,
            started_ms,
            warmup,
            rounds,
            closing_events: closing,
            questionnaire: QuestionnaireScores {
                a: state.questionnaire[0],
                b: state.questionnaire[1],
            },
            duration_ms: state.duration_ms(),
            completed: state.phase == Phase::Done,
            score: state.score(),
            image_sources: BTreeMap::new(),
        })
    }

    /// The game specification as far as it was played.
    pub fn spec(&self) -> GameSpec {
        GameSpec {
            game_id: self.game_id.clone(),
            set_id: self.set_id,
            variant: self.variant,
            rounds: self.rounds.iter().map(RoundLog::spec).collect(),
            warmup: self.warmup.as_ref().map(RoundLog::spec),
            seed: self.seed,
        }
    }

    /// All events in sequence order.
    pub fn events(&self) -> Vec<&TurnEvent> {
        let mut all: Vec<&TurnEvent> = self
            .warmup
            .iter()
            .chain(&self.rounds)
            .flat_map(|r| r.events.iter().chain(&r.feedback_events))
            .chain(&self.closing_events)
            .collect();
        all.sort_by_key(|e| e.seq);
        all
    }

    pub fn decisions(&self) -> usize {
        self.rounds.iter().map(|r| r.correctness.len()).sum()
    }

    pub fn utterances(&self) -> usize {
        self.events()
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Message { .. }))
            .count()
    }

    pub fn actions(&self) -> usize {
        self.events()
            .iter()
            .filter(|e| !matches!(e.kind, EventKind::Message { .. }) && e.actor != Actor::System)
            .count()
    }
}

/// Replays a log and checks its recorded outcome against the replay.
pub fn verify_log(log: &GameLog) -> Result<()> {
    let events: Vec<TurnEvent> = log.events().into_iter().cloned().collect();
    let rebuilt = GameLog::from_events(&log.spec(), log.participants.clone(), log.started_ms, &events)
        .map_err(|source| LogError::Replay {
            game_id: log.game_id.clone(),
            source,
        })?;
    let mut rebuilt = rebuilt;
    rebuilt.image_sources = log.image_sources.clone();
    if &rebuilt != log {
        return Err(LogError::Corrupt {
            path: PathBuf::from(format!("{}.json", log.game_id)),
            message: "recorded outcome differs from replay".into(),
        });
    }
    Ok(())
}

/// Stable, injective mapping of worker ids to opaque pseudonyms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pseudonyms {
    map: BTreeMap<String, String>,
}

impl Pseudonyms {
    pub fn get_or_assign(&mut self, worker_id: &str) -> String {
        let next = self.map.len() + 1;
        self.map
            .entry(worker_id.to_owned())
            .or_insert_with(|| format!("P{next:05}"))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct JournalHeader {
    spec: GameSpec,
    participants: [String; 2],
    started_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub set_id: u32,
    pub variant: Variant,
    pub completed: bool,
    pub events: usize,
    pub file: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Index {
    pub games: BTreeMap<String, IndexEntry>,
}

struct OpenGame {
    header: JournalHeader,
    file: File,
    last_seq: u64,
}

/// One writer per game; closed games are immutable and may be read
/// concurrently by other processes.
pub struct LogStore {
    root: PathBuf,
    open: HashMap<String, OpenGame>,
    index: Index,
    pseudonyms: Pseudonyms,
}

fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

impl LogStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        for dir in ["journal", "logs", "private"] {
            fs::create_dir_all(root.join(dir))?;
        }
        let index_path = root.join("index.json");
        let index: Index = if index_path.exists() {
            serde_json::from_str(&fs::read_to_string(&index_path)?)?
        } else {
            Index::default()
        };
        let pseudo_path = root.join("private/pseudonyms.json");
        let pseudonyms = if pseudo_path.exists() {
            serde_json::from_str(&fs::read_to_string(&pseudo_path)?)?
        } else {
            Pseudonyms::default()
        };
        let mut store = LogStore {
            root,
            open: HashMap::new(),
            index,
            pseudonyms,
        };
        store.recover()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    fn journal_path(&self, game_id: &str) -> PathBuf {
        self.root.join("journal").join(format!("{game_id}.jsonl"))
    }

    fn log_path(&self, game_id: &str) -> PathBuf {
        self.root.join("logs").join(format!("{game_id}.json"))
    }

    fn recover(&mut self) -> Result<()> {
        let mut paths: Vec<PathBuf> = fs::read_dir(self.root.join("journal"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let game_id = path.file_stem().unwrap().to_string_lossy().into_owned();
            if self.index.games.contains_key(&game_id) {
                continue;
            }
            let (header, events, good_len) = read_journal(&path)?;
            let file = OpenOptions::new().write(true).open(&path)?;
            file.set_len(good_len)?;
            drop(file);
            let file = OpenOptions::new().append(true).open(&path)?;
            let last_seq = events.last().map_or(0, |e| e.seq);
            self.open.insert(game_id, OpenGame { header, file, last_seq });
        }
        Ok(())
    }

    /// Ids of games that are open for appends.
    pub fn open_games(&self) -> BTreeSet<String> {
        self.open.keys().cloned().collect()
    }

    /// Starts a journal for a new game. Worker ids are replaced by
    /// pseudonyms before anything is written.
    pub fn create_game(&mut self, spec: &GameSpec, workers: [&str; 2], started_ms: u64) -> Result<[String; 2]> {
        let id = &spec.game_id;
        if self.open.contains_key(id) || self.index.games.contains_key(id) || self.journal_path(id).exists() {
            return Err(LogError::DuplicateGame(id.clone()));
        }
        let participants = workers.map(|w| self.pseudonyms.get_or_assign(w));
        write_atomic(
            &self.root.join("private/pseudonyms.json"),
            &serde_json::to_string(&self.pseudonyms)?,
        )?;
        let header = JournalHeader {
            spec: spec.clone(),
            participants: participants.clone(),
            started_ms,
        };
        let mut file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(self.journal_path(id))?;
        writeln!(file, "{}", serde_json::to_string(&header)?)?;
        file.sync_data()?;
        self.open.insert(id.clone(), OpenGame { header, file, last_seq: 0 });
        Ok(participants)
    }

    /// Durably appends one event; returns once it is on disk.
    pub fn append_event(&mut self, game_id: &str, event: &TurnEvent) -> Result<()> {
        let game = self
            .open
            .get_mut(game_id)
            .ok_or_else(|| LogError::UnknownGame(game_id.to_owned()))?;
        if event.seq != game.last_seq + 1 {
            return Err(LogError::SequenceGap {
                game_id: game_id.to_owned(),
                expected: game.last_seq + 1,
                got: event.seq,
            });
        }
        let line = serde_json::to_string(event)?;
        game.file.write_all(line.as_bytes())?;
        game.file.write_all(b"\n")?;
        game.file.sync_data()?;
        game.last_seq = event.seq;
        Ok(())
    }

    /// Events of a game (open or closed) as recorded in its journal.
    pub fn read_events(&self, game_id: &str) -> Result<Vec<TurnEvent>> {
        let path = self.journal_path(game_id);
        if !path.exists() {
            return Err(LogError::UnknownGame(game_id.to_owned()));
        }
        Ok(read_journal(&path)?.1)
    }

    /// Seals a game: builds its GameLog, writes the export and indexes it.
    pub fn close_game(&mut self, game_id: &str) -> Result<GameLog> {
        let game = self
            .open
            .get(game_id)
            .ok_or_else(|| LogError::UnknownGame(game_id.to_owned()))?;
        let events = read_journal(&self.journal_path(game_id))?.1;
        let h = &game.header;
        let log = GameLog::from_events(&h.spec, h.participants.clone(), h.started_ms, &events)
            .map_err(|source| LogError::Replay {
                game_id: game_id.to_owned(),
                source,
            })?;
        let file = format!("logs/{game_id}.json");
        write_atomic(&self.log_path(game_id), &canonical_json(&log)?)?;
        self.index.games.insert(
            game_id.to_owned(),
            IndexEntry {
                set_id: log.set_id,
                variant: log.variant,
                completed: log.completed,
                events: events.len(),
                file,
            },
        );
        write_atomic(&self.root.join("index.json"), &canonical_json(&self.index)?)?;
        self.open.remove(game_id);
        Ok(log)
    }

    /// Canonical JSON document of a closed game.
    pub fn export_game(&self, game_id: &str) -> Result<String> {
        if !self.index.games.contains_key(game_id) {
            return Err(LogError::UnknownGame(game_id.to_owned()));
        }
        let log: GameLog = serde_json::from_str(&fs::read_to_string(self.log_path(game_id))?)?;
        canonical_json(&log)
    }

    pub fn load_game(&self, game_id: &str) -> Result<GameLog> {
        Ok(serde_json::from_str(&self.export_game(game_id)?)?)
    }
}

/// Reads a journal; returns header, events and the byte length of the
/// well-formed prefix.
fn read_journal(path: &Path) -> Result<(JournalHeader, Vec<TurnEvent>, u64)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut good = 0u64;
    let mut header = None;
    let mut events = Vec::new();
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 || !line.ends_with('\n') {
            break;
        }
        let body = line.trim_end();
        if header.is_none() {
            header = Some(serde_json::from_str::<JournalHeader>(body).map_err(|e| LogError::Corrupt {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?);
        } else {
            match serde_json::from_str::<TurnEvent>(body) {
                Ok(e) => events.push(e),
                Err(_) => break,
            }
        }
        good += n as u64;
    }
    let header = header.ok_or_else(|| LogError::Corrupt {
        path: path.to_path_buf(),
        message: "missing header".into(),
    })?;
    Ok((header, events, good))
}

// ---------------------------------------------------------------------------
// Corpus import
// ---------------------------------------------------------------------------

/// Field names of the released corpus format. Every key can be overridden
/// from a JSON config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldMap {
    pub game_id: String,
    pub participants: String,
    pub image_set: String,
    pub rounds: String,
    pub round_index: String,
    pub messages: String,
    pub text: String,
    pub speaker: String,
    pub timestamp: String,
    pub message_type: String,
    pub text_type: String,
    pub selection_type: String,
    pub images: String,
    pub highlighted: String,
    pub common_marker: String,
    pub different_marker: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        let s = |v: &str| v.to_owned();
        FieldMap {
            game_id: s("game_id"),
            participants: s("agent_ids"),
            image_set: s("image_set"),
            rounds: s("rounds"),
            round_index: s("round_nr"),
            messages: s("messages"),
            text: s("message"),
            speaker: s("speaker"),
            timestamp: s("timestamp"),
            message_type: s("message_type"),
            text_type: s("text"),
            selection_type: s("selection"),
            images: s("images"),
            highlighted: s("highlighted"),
            common_marker: s("<com>"),
            different_marker: s("<dif>"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestampUnit {
    Milliseconds,
    Seconds,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportFailure {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub files: usize,
    pub games: usize,
    pub completed_games: usize,
    pub utterances: usize,
    pub actions: usize,
    pub vocabulary_size: usize,
    /// Unit detected for released-corpus timestamps, if any were read.
    pub timestamp_unit: Option<TimestampUnit>,
    pub failures: Vec<ImportFailure>,
}

/// Imports every `*.json` file in `path` (or in `path/logs`). Files in our
/// export format are read directly; anything else goes through the
/// released-corpus adapter. Failures are collected, never fatal.
pub fn import_corpus(path: impl AsRef<Path>, fields: &FieldMap) -> (Vec<GameLog>, ImportReport) {
    let mut report = ImportReport::default();
    let mut logs = Vec::new();
    let root = path.as_ref();
    let dir = if root.join("logs").is_dir() { root.join("logs") } else { root.to_path_buf() };
    let mut files: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "index.json"))
            .collect(),
        Err(e) => {
            report.failures.push(ImportFailure { file: dir.display().to_string(), error: e.to_string() });
            Vec::new()
        }
    };
    files.sort();
    let mut units = BTreeSet::new();
    for file in files {
        report.files += 1;
        let parsed = fs::read_to_string(&file)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str::<Value>(&s).map_err(|e| e.to_string()))
            .and_then(|v| parse_document(v, fields, &mut units));
        match parsed {
            Ok(mut games) => logs.append(&mut games),
            Err(error) => report.failures.push(ImportFailure { file: file.display().to_string(), error }),
        }
    }
    let mut vocab = BTreeSet::new();
    for log in &logs {
        report.games += 1;
        report.completed_games += usize::from(log.completed);
        report.utterances += log.utterances();
        report.actions += log.actions();
        for e in log.events() {
            if let EventKind::Message { text } = &e.kind {
                vocab.extend(tokenize(text));
            }
        }
    }
    report.vocabulary_size = vocab.len();
    report.timestamp_unit = match (units.contains(&TimestampUnit::Seconds), units.is_empty()) {
        (_, true) => None,
        (true, _) => Some(TimestampUnit::Seconds),
        _ => Some(TimestampUnit::Milliseconds),
    };
    (logs, report)
}

fn parse_document(v: Value, fields: &FieldMap, units: &mut BTreeSet<TimestampUnit>) -> Result<Vec<GameLog>, String> {
    match v {
        Value::Array(items) => items.into_iter().map(|g| parse_game(g, fields, units)).collect(),
        other => Ok(vec![parse_game(other, fields, units)?]),
    }
}

fn parse_game(v: Value, fields: &FieldMap, units: &mut BTreeSet<TimestampUnit>) -> Result<GameLog, String> {
    let own_format = v
        .get("rounds")
        .and_then(|r| r.as_array())
        .is_some_and(|r| r.first().is_none_or(|r| r.get("display_a").is_some()))
        && v.get("participants").is_some();
    if own_format {
        return serde_json::from_value(v).map_err(|e| e.to_string());
    }
    adapt_released(&v, fields, units)
}

fn as_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Maps one released-corpus game onto a GameLog. Images are re-indexed
/// 1..=n by sorted path; highlights absent from the source stay empty.
fn adapt_released(v: &Value, f: &FieldMap, units: &mut BTreeSet<TimestampUnit>) -> Result<GameLog, String> {
    let game_id = v.get(&f.game_id).and_then(as_string).ok_or("missing game id")?;
    let rounds_v = v.get(&f.rounds).and_then(Value::as_array).ok_or("missing rounds")?;
    let participants: [String; 2] = match v.get(&f.participants).and_then(Value::as_array) {
        Some(ids) if ids.len() == 2 => [as_string(&ids[0]).unwrap_or_default(), as_string(&ids[1]).unwrap_or_default()],
        _ => ["A".into(), "B".into()],
    };
    let set_id = v
        .get(&f.image_set)
        .and_then(|s| s.as_u64().or_else(|| s.as_str().and_then(|s| s.trim_start_matches(|c: char| !c.is_ascii_digit()).parse().ok())))
        .unwrap_or(0) as u32;

    let player_list = |r: &Value, key: &str, p: &str| -> Vec<String> {
        r.get(key)
            .and_then(|o| o.get(p))
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(as_string).collect())
            .unwrap_or_default()
    };
    let mut names = BTreeSet::new();
    for r in rounds_v {
        for p in ["A", "B"] {
            names.extend(player_list(r, &f.images, p));
        }
    }
    let ids: BTreeMap<String, ImageId> = names.into_iter().enumerate().map(|(i, n)| (n, (i + 1) as ImageId)).collect();
    let lookup = |names: Vec<String>| -> Vec<ImageId> { names.iter().filter_map(|n| ids.get(n).copied()).collect() };

    let mut seq = 0u64;
    let mut rounds = Vec::new();
    let mut all_ts = Vec::new();
    for (k, r) in rounds_v.iter().enumerate() {
        let round_index = r.get(&f.round_index).and_then(Value::as_u64).unwrap_or(k as u64 + 1) as u8;
        let mut log = RoundLog {
            round_index,
            schema_round: round_index,
            display_a: lookup(player_list(r, &f.images, "A")),
            display_b: lookup(player_list(r, &f.images, "B")),
            highlights_a: lookup(player_list(r, &f.highlighted, "A")),
            highlights_b: lookup(player_list(r, &f.highlighted, "B")),
            start_ms: None,
            end_ms: None,
            events: Vec::new(),
            feedback_events: Vec::new(),
            correctness: Vec::new(),
        };
        let spec = log.spec();
        for m in r.get(&f.messages).and_then(Value::as_array).into_iter().flatten() {
            let actor = match m.get(&f.speaker).and_then(Value::as_str) {
                Some("A") => Actor::A,
                Some("B") => Actor::B,
                _ => Actor::System,
            };
            let ts = m.get(&f.timestamp).and_then(Value::as_f64).unwrap_or(0.0);
            all_ts.push(ts);
            let text = m.get(&f.text).and_then(as_string).unwrap_or_default();
            let kind = match m.get(&f.message_type).and_then(Value::as_str) {
                Some(t) if t == f.selection_type => {
                    let decision = if text.contains(&f.common_marker) {
                        Some(Decision::Common)
                    } else if text.contains(&f.different_marker) {
                        Some(Decision::Different)
                    } else {
                        None
                    };
                    let image = text.split_whitespace().last().and_then(|n| ids.get(n).copied());
                    match (decision, image) {
                        (Some(decision), Some(image_id)) => EventKind::Label { image_id, decision },
                        _ => EventKind::Submit,
                    }
                }
                Some(t) if t != f.text_type => EventKind::Submit,
                _ => EventKind::Message { text },
            };
            seq += 1;
            if let (EventKind::Label { image_id, decision }, Some(player)) = (&kind, actor.player()) {
                log.correctness.push(LabelOutcome {
                    player,
                    image_id: *image_id,
                    decision: *decision,
                    correct: *decision == spec.truth(*image_id),
                });
            }
            log.events.push(TurnEvent { seq, timestamp_ms: ts as u64, actor, kind });
        }
        rounds.push(log);
    }
    // Epoch seconds stay below 1e11 until the year 5138.
    let max_ts = all_ts.iter().copied().fold(0.0, f64::max);
    let unit = if max_ts > 0.0 && max_ts < 1e11 { TimestampUnit::Seconds } else { TimestampUnit::Milliseconds };
    if max_ts > 0.0 {
        units.insert(unit);
    }
    if unit == TimestampUnit::Seconds {
        let factor = 1000.0;
        for (r, raw) in rounds.iter_mut().zip(rounds_v) {
            let stamps: Vec<f64> = raw
                .get(&f.messages)
                .and_then(Value::as_array)
                .into_iter()
                .flatten()
                .map(|m| m.get(&f.timestamp).and_then(Value::as_f64).unwrap_or(0.0))
                .collect();
            for (e, ts) in r.events.iter_mut().zip(stamps) {
                e.timestamp_ms = (ts * factor).round() as u64;
            }
        }
    }
    for r in &mut rounds {
        r.start_ms = r.events.first().map(|e| e.timestamp_ms);
        r.end_ms = r.events.last().map(|e| e.timestamp_ms);
    }
    let completed = rounds.len() == crate::model::ROUNDS;
    let started_ms = rounds.first().and_then(|r| r.start_ms).unwrap_or(0);
    let ended = rounds.last().and_then(|r| r.end_ms);
    let score = rounds.iter().map(|r| r.correct() as u32).sum();
    Ok(GameLog {
        game_id,
        set_id,
        variant: Variant::One,
        participants,
        seed: 0,
        started_ms,
        warmup: None,
        rounds,
        closing_events: Vec::new(),
        questionnaire: QuestionnaireScores::default(),
        duration_ms: ended.map(|e| e.saturating_sub(started_ms)),
        completed,
        score,
        image_sources: ids.into_iter().map(|(name, id)| (id, name)).collect(),
    })
}

/// Renders `<dir>/logs/*.json` plus `index.json` for a set of logs.
pub fn write_corpus(dir: impl AsRef<Path>, logs: &[GameLog]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("logs"))?;
    let mut index = Index::default();
    for log in logs {
        let file = format!("logs/{}.json", log.game_id);
        write_atomic(&dir.join(&file), &canonical_json(log)?)?;
        index.games.insert(
            log.game_id.clone(),
            IndexEntry {
                set_id: log.set_id,
                variant: log.variant,
                completed: log.completed,
                events: log.events().len(),
                file,
            },
        );
    }
    write_atomic(&dir.join("index.json"), &canonical_json(&index)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Player;
    use crate::schema::GameSchema;

    fn spec(id: &str) -> GameSpec {
        let mut s = GameSchema::canonical().game_spec(id, 4, Variant::Two);
        s.game_id = id.into();
        s
    }

    fn msg(seq: u64, actor: Player, text: &str) -> TurnEvent {
        TurnEvent::new(seq, seq * 100, actor, EventKind::Message { text: text.into() })
    }

    /// A complete, all-correct game.
    pub(crate) fn full_game(spec: &GameSpec) -> Vec<TurnEvent> {
        let mut events = Vec::new();
        let mut seq = 0;
        let mut push = |actor: Player, kind: EventKind, events: &mut Vec<TurnEvent>| {
            seq += 1;
            events.push(TurnEvent::new(seq, seq * 1000, actor, kind));
        };
        for r in &spec.rounds {
            for p in Player::BOTH {
                push(p, EventKind::Message { text: format!("round {} from {p}", r.round_index) }, &mut events);
                for &img in r.highlights(p) {
                    push(p, EventKind::Label { image_id: img, decision: r.truth(img) }, &mut events);
                }
                push(p, EventKind::Submit, &mut events);
            }
            push(Player::A, EventKind::Message { text: "nice".into() }, &mut events);
            for p in Player::BOTH {
                push(p, EventKind::FeedbackAck, &mut events);
            }
        }
        for p in Player::BOTH {
            push(p, EventKind::Questionnaire { answers: [4, 4, 5] }, &mut events);
        }
        events
    }

    #[test]
    fn durable_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = LogStore::open(dir.path()).unwrap();
        store.create_game(&spec("g1"), ["worker-1", "worker-2"], 0).unwrap();
        for k in 1..=4 {
            store.append_event("g1", &msg(k, Player::A, "hello")).unwrap();
        }
        drop(store);
        let store = LogStore::open(dir.path()).unwrap();
        let events = store.read_events("g1").unwrap();
        assert_eq!(events.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert!(store.open_games().contains("g1"));
    }

    #[test]
    fn torn_tail_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = LogStore::open(dir.path()).unwrap();
        store.create_game(&spec("g1"), ["a", "b"], 0).unwrap();
        store.append_event("g1", &msg(1, Player::A, "hi")).unwrap();
        drop(store);
        let path = dir.path().join("journal/g1.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(br#"{"seq":2,"timest"#).unwrap();
        drop(f);
        let mut store = LogStore::open(dir.path()).unwrap();
        assert_eq!(store.read_events("g1").unwrap().len(), 1);
        store.append_event("g1", &msg(2, Player::B, "hey")).unwrap();
        assert_eq!(store.read_events("g1").unwrap().len(), 2);
    }

    #[test]
    fn sequence_and_unknown_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = LogStore::open(dir.path()).unwrap();
        store.create_game(&spec("g1"), ["a", "b"], 0).unwrap();
        store.append_event("g1", &msg(1, Player::A, "hi")).unwrap();
        assert!(matches!(
            store.append_event("g1", &msg(1, Player::A, "hi")),
            Err(LogError::SequenceGap { expected: 2, got: 1, .. })
        ));
        store.close_game("g1").unwrap();
        assert!(matches!(store.append_event("g1", &msg(2, Player::A, "x")), Err(LogError::UnknownGame(_))));
        assert!(matches!(store.export_game("nope"), Err(LogError::UnknownGame(_))));
        assert!(matches!(store.create_game(&spec("g1"), ["a", "b"], 0), Err(LogError::DuplicateGame(_))));
    }

    #[test]
    fn export_of_completed_game() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = LogStore::open(dir.path()).unwrap();
        let s = spec("g2").shuffled(11);
        let pseudo = store.create_game(&s, ["w-a", "w-b"], 0).unwrap();
        assert_eq!(pseudo, ["P00001".to_string(), "P00002".to_string()]);
        for e in full_game(&s) {
            store.append_event("g2", &e).unwrap();
        }
        let log = store.close_game("g2").unwrap();
        assert!(log.completed);
        assert_eq!(log.rounds.len(), 5);
        assert_eq!(log.decisions(), 30);
        assert_eq!(log.score, 30);
        assert!(log.rounds.iter().all(|r| r.feedback_events.len() == 3));
        let a = store.export_game("g2").unwrap();
        let b = store.export_game("g2").unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("w-a"));
        let back: GameLog = serde_json::from_str(&a).unwrap();
        assert_eq!(back, log);
        verify_log(&back).unwrap();
        // Reopened store treats indexed games as closed.
        let store = LogStore::open(dir.path()).unwrap();
        assert!(store.open_games().is_empty());
        assert_eq!(store.load_game("g2").unwrap(), log);
    }

    #[test]
    fn aborted_game_has_partial_rounds() {
        let s = spec("g3");
        let mut events: Vec<TurnEvent> = full_game(&s).into_iter().take(14).collect();
        events.push(TurnEvent::new(15, 99_000, Actor::System, EventKind::Disconnect));
        let log = GameLog::from_events(&s, ["x".into(), "y".into()], 0, &events).unwrap();
        assert!(!log.completed);
        assert_eq!(log.rounds.len(), 2);
        assert_eq!(log.duration_ms, Some(99_000));
        verify_log(&log).unwrap();
    }

    #[test]
    fn tampered_log_fails_verification() {
        let s = spec("g4");
        let mut log = GameLog::from_events(&s, ["x".into(), "y".into()], 0, &full_game(&s)).unwrap();
        log.rounds[0].correctness[0].correct = false;
        assert!(verify_log(&log).is_err());
    }

    #[test]
    fn import_empty_and_own_format() {
        let dir = tempfile::tempdir().unwrap();
        let (logs, report) = import_corpus(dir.path(), &FieldMap::default());
        assert!(logs.is_empty());
        assert_eq!(report, ImportReport { files: 0, ..Default::default() });

        let s = spec("g5");
        let log = GameLog::from_events(&s, ["x".into(), "y".into()], 0, &full_game(&s)).unwrap();
        write_corpus(dir.path(), std::slice::from_ref(&log)).unwrap();
        fs::write(dir.path().join("logs/broken.json"), "{").unwrap();
        let (logs, report) = import_corpus(dir.path(), &FieldMap::default());
        assert_eq!(logs, vec![log.clone()]);
        assert_eq!(report.games, 1);
        assert_eq!(report.utterances, log.utterances());
        // 30 labels + 10 submits + 10 acks + 2 questionnaires
        assert_eq!(report.actions, 52);
        assert_eq!(report.failures.len(), 1);
    }

    #[test]
    fn adapts_released_layout() {
        let dir = tempfile::tempdir().unwrap();
        let game = serde_json::json!({
            "game_id": 17,
            "image_set": "set 3",
            "agent_ids": ["x1", "x2"],
            "rounds": [{
                "round_nr": 1,
                "images": {"A": ["p/1.jpg", "p/2.jpg"], "B": ["p/1.jpg", "p/3.jpg"]},
                "highlighted": {"A": ["p/1.jpg"], "B": ["p/3.jpg"]},
                "messages": [
                    {"speaker": "B", "message": "I don't have the surf boards", "timestamp": 1530000000, "message_type": "text"},
                    {"speaker": "A", "message": "me neither", "timestamp": 1530000004, "message_type": "text"},
                    {"speaker": "B", "message": "<selection> <dif> p/3.jpg", "timestamp": 1530000005, "message_type": "selection"}
                ]
            }]
        });
        fs::write(dir.path().join("17.json"), game.to_string()).unwrap();
        let (logs, report) = import_corpus(dir.path(), &FieldMap::default());
        assert_eq!(report.games, 1);
        assert_eq!(report.utterances, 2);
        assert_eq!(report.actions, 1);
        assert_eq!(report.timestamp_unit, Some(TimestampUnit::Seconds));
        // i do n't have the surf boards me neither
        assert_eq!(report.vocabulary_size, 9);
        let r = &logs[0].rounds[0];
        assert_eq!(logs[0].set_id, 3);
        assert_eq!(r.duration_ms(), Some(5000));
        assert_eq!(r.correctness, vec![LabelOutcome { player: Player::B, image_id: 3, decision: Decision::Different, correct: true }]);
    }
}
