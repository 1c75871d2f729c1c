//! Pairing of queued participants under the collection constraints:
//! at most five games per worker, no worker plays the same game twice and
//! no two workers play together twice.
//!
//! Among legal pairings the matchmaker prefers to send a returning worker
//! to the other variant of the image set they just played, with a new
//! partner. A returning worker holds out for that game for
//! [`MatchConfig::patience_ms`]; after that any legal game is accepted.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::model::GameRef;
use crate::payment::MAX_GAMES;

pub type WorkerId = String;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub worker_id: WorkerId,
    pub games_completed: u32,
    /// Games assigned so far, whether or not they were completed.
    pub played_games: BTreeSet<GameRef>,
    pub past_partners: BTreeSet<WorkerId>,
    pub past_set_ids: BTreeSet<u32>,
    pub last_game: Option<GameRef>,
}

impl ParticipantProfile {
    pub fn new(worker_id: impl Into<WorkerId>) -> Self {
        ParticipantProfile {
            worker_id: worker_id.into(),
            ..Default::default()
        }
    }

    /// The sibling variant of the last game, when still playable.
    pub fn preferred_game(&self, max_games: u32) -> Option<GameRef> {
        let g = self.last_game?.sibling();
        (self.games_completed < max_games && !self.played_games.contains(&g)).then_some(g)
    }

    fn record_assignment(&mut self, game: GameRef, partner: &str) {
        self.played_games.insert(game);
        self.past_partners.insert(partner.to_owned());
        self.past_set_ids.insert(game.set_id);
        self.last_game = Some(game);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub max_games: u32,
    pub patience_ms: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            max_games: MAX_GAMES,
            patience_ms: 120_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub worker_a: WorkerId,
    pub worker_b: WorkerId,
    pub game: GameRef,
    /// A warm-up page is attached when either worker is new to the task.
    pub warmup: bool,
}

/// Per-member bookkeeping of whether the sibling-variant preference could
/// have been honoured at match time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceOutcome {
    /// The worker had a playable sibling game and some queued worker could
    /// legally have joined them on it.
    pub opportunity: bool,
    pub honoured: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Queued {
    worker_id: WorkerId,
    enqueued_ms: u64,
}

/// True iff the proposed match satisfies all three constraints given the
/// profiles as they were before the match. Unknown workers count as new.
pub fn enforce_constraints(
    profiles: &HashMap<WorkerId, ParticipantProfile>,
    proposed: &MatchResult,
    max_games: u32,
) -> bool {
    if proposed.worker_a == proposed.worker_b {
        return false;
    }
    let fresh_a = ParticipantProfile::new(proposed.worker_a.clone());
    let fresh_b = ParticipantProfile::new(proposed.worker_b.clone());
    let a = profiles.get(&proposed.worker_a).unwrap_or(&fresh_a);
    let b = profiles.get(&proposed.worker_b).unwrap_or(&fresh_b);
    legal(a, b, proposed.game, max_games)
}

fn legal(a: &ParticipantProfile, b: &ParticipantProfile, game: GameRef, max_games: u32) -> bool {
    a.games_completed < max_games
        && b.games_completed < max_games
        && !a.played_games.contains(&game)
        && !b.played_games.contains(&game)
        && !a.past_partners.contains(&b.worker_id)
        && !b.past_partners.contains(&a.worker_id)
}

#[derive(Debug, Clone)]
pub struct Matchmaker {
    config: MatchConfig,
    catalog: Vec<GameRef>,
    profiles: HashMap<WorkerId, ParticipantProfile>,
    queue: VecDeque<Queued>,
    play_counts: BTreeMap<GameRef, u64>,
}

impl Matchmaker {
    pub fn new(catalog: impl IntoIterator<Item = GameRef>, config: MatchConfig) -> Self {
        let mut catalog: Vec<GameRef> = catalog.into_iter().collect();
        catalog.sort();
        catalog.dedup();
        let play_counts = catalog.iter().map(|&g| (g, 0)).collect();
        Matchmaker {
            config,
            catalog,
            profiles: HashMap::new(),
            queue: VecDeque::new(),
            play_counts,
        }
    }

    pub fn config(&self) -> MatchConfig {
        self.config
    }

    pub fn profiles(&self) -> &HashMap<WorkerId, ParticipantProfile> {
        &self.profiles
    }

    pub fn profile(&self, worker: &str) -> Option<&ParticipantProfile> {
        self.profiles.get(worker)
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_queued(&self, worker: &str) -> bool {
        self.queue.iter().any(|q| q.worker_id == worker)
    }

    /// Adds a worker to the back of the queue. Returns false for workers
    /// that reached the game cap or are already waiting.
    pub fn join(&mut self, worker: &str, now_ms: u64) -> bool {
        if self.is_queued(worker) {
            return false;
        }
        let profile = self
            .profiles
            .entry(worker.to_owned())
            .or_insert_with(|| ParticipantProfile::new(worker));
        if profile.games_completed >= self.config.max_games {
            return false;
        }
        self.queue.push_back(Queued {
            worker_id: worker.to_owned(),
            enqueued_ms: now_ms,
        });
        true
    }

    pub fn leave(&mut self, worker: &str) -> bool {
        let before = self.queue.len();
        self.queue.retain(|q| q.worker_id != worker);
        before != self.queue.len()
    }

    /// Marks a worker's game as completed (counts towards the cap).
    pub fn record_completion(&mut self, worker: &str) {
        if let Some(p) = self.profiles.get_mut(worker) {
            p.games_completed += 1;
        }
    }

    pub fn match_pair(&mut self, now_ms: u64) -> Option<MatchResult> {
        self.match_pair_with_outcomes(now_ms).map(|(m, _)| m)
    }

    /// Like [`match_pair`](Self::match_pair), also reporting for both
    /// members whether their preference could be and was honoured.
    pub fn match_pair_with_outcomes(
        &mut self,
        now_ms: u64,
    ) -> Option<(MatchResult, [PreferenceOutcome; 2])> {
        let max = self.config.max_games;
        let members: Vec<(&Queued, &ParticipantProfile)> = self
            .queue
            .iter()
            .map(|q| (q, &self.profiles[&q.worker_id]))
            .collect();
        let prefs: Vec<Option<GameRef>> = members.iter().map(|(_, p)| p.preferred_game(max)).collect();
        let waiting: Vec<bool> = members
            .iter()
            .zip(&prefs)
            .map(|((q, _), pref)| {
                pref.is_some() && now_ms.saturating_sub(q.enqueued_ms) < self.config.patience_ms
            })
            .collect();

        // (satisfied members, i, j, game); larger satisfaction wins, FIFO breaks ties.
        let mut best: Option<(usize, usize, usize, GameRef)> = None;
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (a, b) = (members[i].1, members[j].1);
                let mut options: Vec<GameRef> = [prefs[i], prefs[j]].into_iter().flatten().collect();
                options.dedup();
                if let Some(g) = self.least_played(a, b) {
                    options.push(g);
                }
                for g in options {
                    if !legal(a, b, g, max) {
                        continue;
                    }
                    let ok_i = prefs[i] == Some(g) || !waiting[i];
                    let ok_j = prefs[j] == Some(g) || !waiting[j];
                    if !(ok_i && ok_j) {
                        continue;
                    }
                    let satisfied =
                        usize::from(prefs[i] == Some(g)) + usize::from(prefs[j] == Some(g));
                    if best.is_none_or(|(s, ..)| satisfied > s) {
                        best = Some((satisfied, i, j, g));
                    }
                }
            }
        }
        let (_, i, j, game) = best?;

        let outcome = |k: usize| {
            let Some(pref) = prefs[k] else {
                return PreferenceOutcome::default();
            };
            let me = members[k].1;
            let opportunity = members
                .iter()
                .enumerate()
                .any(|(o, (_, other))| o != k && legal(me, other, pref, max));
            PreferenceOutcome {
                opportunity,
                honoured: pref == game,
            }
        };
        let outcomes = [outcome(i), outcome(j)];
        let (a, b) = (members[i].0.worker_id.clone(), members[j].0.worker_id.clone());
        let warmup = members[i].1.games_completed == 0 || members[j].1.games_completed == 0;

        self.queue.retain(|q| q.worker_id != a && q.worker_id != b);
        self.profiles.get_mut(&a).unwrap().record_assignment(game, &b);
        self.profiles.get_mut(&b).unwrap().record_assignment(game, &a);
        *self.play_counts.entry(game).or_insert(0) += 1;
        Some((
            MatchResult {
                worker_a: a,
                worker_b: b,
                game,
                warmup,
            },
            outcomes,
        ))
    }

    fn least_played(&self, a: &ParticipantProfile, b: &ParticipantProfile) -> Option<GameRef> {
        self.catalog
            .iter()
            .filter(|&&g| legal(a, b, g, self.config.max_games))
            .min_by_key(|g| (self.play_counts[g], **g))
            .copied()
    }
}

pub mod simulation {
    //! Randomised arrival/departure model used to exercise the matchmaker.

    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone, Copy)]
    pub struct SimConfig {
        pub workers: usize,
        pub sets: u32,
        pub seed: u64,
        /// Arrivals are spread uniformly over this window.
        pub arrival_window_ms: u64,
        pub tick_ms: u64,
        /// Probability a game is abandoned by a disconnect.
        pub disconnect_rate: f64,
        /// Probability a queued worker gives up on any given tick.
        pub queue_quit_rate: f64,
    }

    impl Default for SimConfig {
        fn default() -> Self {
            SimConfig {
                workers: 1000,
                sets: 30,
                seed: 7,
                arrival_window_ms: 8 * 3_600_000,
                tick_ms: 5_000,
                disconnect_rate: 0.05,
                queue_quit_rate: 0.001,
            }
        }
    }

    #[derive(Debug, Clone, PartialEq, Eq)]
    pub enum LogEntry {
        Matched {
            at_ms: u64,
            result: MatchResult,
            outcomes: [PreferenceOutcome; 2],
        },
        /// Game `match_index` ended; completed games count towards the cap.
        Finished { at_ms: u64, match_index: usize, completed: bool },
    }

    #[derive(Debug, Clone, Default)]
    pub struct SimReport {
        pub log: Vec<LogEntry>,
        pub matches: usize,
        pub completed_games: usize,
    }

    impl SimReport {
        /// Replays the log from empty profiles and counts matches that
        /// break a constraint.
        pub fn violations(&self, max_games: u32) -> usize {
            let mut profiles: HashMap<WorkerId, ParticipantProfile> = HashMap::new();
            let mut matches: Vec<&MatchResult> = Vec::new();
            let mut bad = 0;
            for entry in &self.log {
                match entry {
                    LogEntry::Matched { result, .. } => {
                        if !enforce_constraints(&profiles, result, max_games) {
                            bad += 1;
                        }
                        let (a, b) = (&result.worker_a, &result.worker_b);
                        profiles
                            .entry(a.clone())
                            .or_insert_with(|| ParticipantProfile::new(a.clone()))
                            .record_assignment(result.game, b);
                        profiles
                            .entry(b.clone())
                            .or_insert_with(|| ParticipantProfile::new(b.clone()))
                            .record_assignment(result.game, a);
                        matches.push(result);
                    }
                    LogEntry::Finished { match_index, completed, .. } => {
                        if *completed {
                            let m = matches[*match_index];
                            for w in [&m.worker_a, &m.worker_b] {
                                profiles.get_mut(w).unwrap().games_completed += 1;
                            }
                        }
                    }
                }
            }
            bad
        }

        /// (honoured, opportunities) over returning workers.
        pub fn preference_rate(&self) -> (usize, usize) {
            let mut honoured = 0;
            let mut chances = 0;
            for entry in &self.log {
                if let LogEntry::Matched { outcomes, .. } = entry {
                    for o in outcomes.iter().filter(|o| o.opportunity) {
                        chances += 1;
                        honoured += usize::from(o.honoured);
                    }
                }
            }
            (honoured, chances)
        }
    }

    struct Running {
        match_index: usize,
        ends_ms: u64,
        aborted: bool,
        players: [usize; 2],
    }

    pub fn run(config: SimConfig, match_config: MatchConfig) -> SimReport {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let catalog = (1..=config.sets)
            .flat_map(|s| crate::model::Variant::BOTH.map(|v| GameRef::new(s, v)));
        let mut mm = Matchmaker::new(catalog, match_config);

        // Desired number of games, roughly matching the observed mix of
        // one-off, occasional and maximal participants.
        let mut wanted: Vec<u32> = (0..config.workers)
            .map(|_| {
                let u: f64 = rng.random();
                if u < 0.31 {
                    1
                } else if u < 0.61 {
                    rng.random_range(2..=4)
                } else {
                    5
                }
            })
            .collect();
        let mut next_join: Vec<Option<u64>> = (0..config.workers)
            .map(|_| Some(rng.random_range(0..config.arrival_window_ms)))
            .collect();
        let names: Vec<String> = (0..config.workers).map(|i| format!("w{i:04}")).collect();
        let index: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

        let mut report = SimReport::default();
        let mut running: Vec<Running> = Vec::new();
        let mut now = 0u64;
        loop {
            let idle = next_join.iter().all(Option::is_none);
            let overtime = now > config.arrival_window_ms + 12 * 3_600_000;
            if (idle && running.is_empty() && mm.queue_len() == 0) || overtime {
                break;
            }
            // Finished games.
            let (done, still): (Vec<_>, Vec<_>) = running.into_iter().partition(|r| r.ends_ms <= now);
            running = still;
            for r in done {
                report.log.push(LogEntry::Finished {
                    at_ms: now,
                    match_index: r.match_index,
                    completed: !r.aborted,
                });
                for &w in &r.players {
                    if !r.aborted {
                        mm.record_completion(&names[w]);
                        report.completed_games += 1;
                        wanted[w] = wanted[w].saturating_sub(1);
                    }
                    if wanted[w] > 0 {
                        next_join[w] = Some(now + rng.random_range(0..60_000));
                    }
                }
            }
            // Arrivals and returns.
            for w in 0..config.workers {
                if next_join[w].is_some_and(|t| t <= now) {
                    next_join[w] = None;
                    mm.join(&names[w], now);
                }
            }
            // Impatient workers leave the queue for good.
            let queued: Vec<usize> = (0..config.workers).filter(|&w| mm.is_queued(&names[w])).collect();
            for w in queued {
                if rng.random_bool(config.queue_quit_rate) {
                    mm.leave(&names[w]);
                }
            }
            while let Some((result, outcomes)) = mm.match_pair_with_outcomes(now) {
                let players = [index[result.worker_a.as_str()], index[result.worker_b.as_str()]];
                let aborted = rng.random_bool(config.disconnect_rate);
                let minutes = if aborted { rng.random_range(1..8) } else { rng.random_range(6..=25) };
                running.push(Running {
                    match_index: report.matches,
                    ends_ms: now + minutes * 60_000,
                    aborted,
                    players,
                });
                report.matches += 1;
                report.log.push(LogEntry::Matched { at_ms: now, result, outcomes });
            }
            now += config.tick_ms;
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn catalog() -> Vec<GameRef> {
        (1..=10).flat_map(|s| Variant::BOTH.map(|v| GameRef::new(s, v))).collect()
    }

    #[test]
    fn fresh_workers_get_warmup() {
        let mut mm = Matchmaker::new(catalog(), MatchConfig::default());
        mm.join("x", 0);
        assert!(mm.match_pair(0).is_none());
        mm.join("y", 0);
        let m = mm.match_pair(0).unwrap();
        assert!(m.warmup);
        assert_eq!(mm.queue_len(), 0);
    }

    #[test]
    fn returning_worker_gets_sibling_variant() {
        let mut mm = Matchmaker::new(catalog(), MatchConfig::default());
        // X played set 7 variant 1 with Y.
        let seven = GameRef::new(7, Variant::One);
        for (w, p) in [("x", "y"), ("y", "x")] {
            mm.join(w, 0);
            let profile = mm.profiles.get_mut(w).unwrap();
            profile.record_assignment(seven, p);
            profile.games_completed = 1;
        }
        mm.leave("y");
        mm.join("z", 0);
        let m = mm.match_pair(0).unwrap();
        assert_eq!(m.game, GameRef::new(7, Variant::Two));
        assert_eq!((m.worker_a.as_str(), m.worker_b.as_str()), ("x", "z"));
        assert!(m.warmup);
    }

    #[test]
    fn past_partners_stay_queued() {
        let mut mm = Matchmaker::new(catalog(), MatchConfig { patience_ms: 0, ..Default::default() });
        mm.join("x", 0);
        mm.join("y", 0);
        let first = mm.match_pair(0).unwrap();
        mm.record_completion("x");
        mm.record_completion("y");
        mm.join("x", 1);
        mm.join("y", 1);
        assert!(mm.match_pair(10_000_000).is_none());
        assert_eq!(mm.queue_len(), 2);
        assert!(!enforce_constraints(mm.profiles(), &MatchResult { game: first.game.sibling(), ..first }, 5));
    }

    #[test]
    fn constraint_checks() {
        let mut profiles = HashMap::new();
        let mut capped = ParticipantProfile::new("c");
        capped.games_completed = 5;
        profiles.insert("c".to_string(), capped);
        let g = GameRef::new(1, Variant::One);
        let m = |a: &str, b: &str| MatchResult { worker_a: a.into(), worker_b: b.into(), game: g, warmup: false };
        assert!(!enforce_constraints(&profiles, &m("c", "d"), 5));
        assert!(enforce_constraints(&profiles, &m("e", "d"), 5));
        assert!(!enforce_constraints(&profiles, &m("d", "d"), 5));
        let mut x = ParticipantProfile::new("x");
        x.record_assignment(GameRef::new(2, Variant::One), "y");
        profiles.insert("x".into(), x);
        assert!(!enforce_constraints(&profiles, &m("y", "x"), 5));
        let mut replay = m("e", "x");
        replay.game = GameRef::new(2, Variant::One);
        assert!(!enforce_constraints(&profiles, &replay, 5));
    }

    #[test]
    fn capped_worker_cannot_join() {
        let mut mm = Matchmaker::new(catalog(), MatchConfig::default());
        mm.join("x", 0);
        mm.leave("x");
        for _ in 0..5 {
            mm.record_completion("x");
        }
        assert!(!mm.join("x", 0));
    }

    #[test]
    fn waiting_worker_accepts_any_game_after_patience() {
        let mut mm = Matchmaker::new(catalog(), MatchConfig::default());
        let one = GameRef::new(1, Variant::One);
        mm.join("x", 0);
        mm.profiles.get_mut("x").unwrap().record_assignment(one, "old");
        mm.profiles.get_mut("x").unwrap().games_completed = 1;
        mm.join("z", 0);
        // z already played the sibling, so x's preference is unavailable.
        mm.profiles.get_mut("z").unwrap().record_assignment(one.sibling(), "other");
        mm.profiles.get_mut("z").unwrap().games_completed = 1;
        // z also wants set 1 variant 1, which x has played.
        assert!(mm.match_pair(1_000).is_none());
        let m = mm.match_pair(120_000).unwrap();
        assert_ne!(m.game.set_id, 1);
        assert!(!m.warmup);
    }

    #[test]
    fn least_played_game_is_chosen() {
        let mut mm = Matchmaker::new(catalog(), MatchConfig::default());
        for i in 0..6 {
            mm.join(&format!("w{i}"), 0);
        }
        let games: Vec<GameRef> = std::iter::from_fn(|| mm.match_pair(0).map(|m| m.game)).collect();
        assert_eq!(games, vec![GameRef::new(1, Variant::One), GameRef::new(1, Variant::Two), GameRef::new(2, Variant::One)]);
    }
}
