//! Acceptance criteria. Each test prints one PASS/FAIL (or SKIP) line.
//!
//! Corpus-level checks need a downloaded copy of the released corpus; set
//! `PB_CORPUS_DIR` to its directory to run them.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::{Duration, Instant};

use num_rational::Ratio;
use photobook::chains::{chain_statistics, extract, segment_game, ImageCatalog};
use photobook::game::{EventKind, GameState, Phase, TurnEvent};
use photobook::logstore::{import_corpus, FieldMap};
use photobook::matchmaking::simulation::{self, LogEntry, SimConfig};
use photobook::schema::{validate_game_spec, Violation};
use photobook::synth::{scripted_game, ScriptConfig};
use photobook::text::Stopwords;
use photobook::{
    analytics, compute_payment, Actor, Decision, GameRef, GameSchema, MatchConfig, Player, Variant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(name: &str, ok: bool, detail: impl std::fmt::Display) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

#[test]
fn schema_validation() {
    let t = Instant::now();
    let canonical = GameSchema::canonical();
    let whole = canonical.validate();
    let per_game: Vec<_> = Variant::BOTH
        .iter()
        .map(|&v| validate_game_spec(&canonical.game_spec("g", 1, v)))
        .collect();
    let printed = GameSchema::as_printed().validate();
    let slot = |image| {
        printed
            .violations
            .iter()
            .any(|v| matches!(v, Violation::DisplayCount { image: i, .. } if *i == image))
    };
    let elapsed = t.elapsed();
    let ok = whole.is_empty()
        && per_game.iter().all(|r| r.is_empty())
        && slot(3)
        && slot(10)
        && within(elapsed, Duration::from_secs(1));
    verdict(
        "schema_validation",
        ok,
        format!(
            "canonical violations {}, printed violations {:?}, {elapsed:?}",
            whole.violations.len(),
            printed.messages()
        ),
    );
}

#[test]
fn highlight_statistics() {
    let mean = GameSchema::canonical().mean_highlighted_rounds();
    let want = Ratio::new(41u32, 12);
    verdict(
        "highlight_statistics",
        mean == want,
        format!("mean highlighted rounds {mean} ({:.4}), expected {want}", *mean.numer() as f64 / *mean.denom() as f64),
    );
}

/// Random event over a game: mostly plausible moves, some nonsense.
fn random_event(rng: &mut ChaCha8Rng, state: &GameState, seq: u64, now: u64) -> TurnEvent {
    let player = if rng.random_bool(0.5) { Player::A } else { Player::B };
    let seq = if rng.random_bool(0.01) { seq + rng.random_range(1..3) } else { seq };
    let page = state.phase.page();
    let kind = match rng.random_range(0..100) {
        0..=44 => {
            let highlights = page.and_then(|p| state.page_spec(p)).map(|s| s.highlights(player).to_vec());
            let image_id = match highlights {
                Some(h) if rng.random_bool(0.9) => h[rng.random_range(0..h.len())],
                _ => rng.random_range(1..=13),
            };
            let decision = if rng.random_bool(0.5) { Decision::Common } else { Decision::Different };
            EventKind::Label { image_id, decision }
        }
        45..=54 => EventKind::Message { text: if rng.random_bool(0.95) { "hi".into() } else { String::new() } },
        55..=74 => EventKind::Submit,
        75..=89 => EventKind::FeedbackAck,
        90..=98 => EventKind::Questionnaire { answers: [0; 3].map(|_| rng.random_range(0..=6)) },
        _ => {
            return TurnEvent::new(seq, now, Actor::System, EventKind::Disconnect);
        }
    };
    TurnEvent::new(seq, now, player, kind)
}

#[test]
fn state_machine_properties() {
    const SEQUENCES: usize = 10_000;
    let t = Instant::now();
    let base = GameSchema::canonical();
    let mut rng = ChaCha8Rng::seed_from_u64(2019);
    let (mut completed, mut broken) = (0usize, Vec::new());
    for n in 0..SEQUENCES {
        let variant = Variant::BOTH[n % 2];
        let mut spec = base.game_spec(format!("g{n}"), 1, variant).shuffled(n as u64);
        if n % 3 == 0 {
            spec = spec.with_warmup();
        }
        // Half the sequences follow a legal script with random events mixed
        // in, so that many games reach the end.
        let script = if n % 2 == 0 {
            scripted_game(&spec, &ScriptConfig { seed: n as u64, ..Default::default() }).events
        } else {
            Vec::new()
        };
        let mut cursor = script.iter().peekable();
        let mut state = GameState::new(spec.clone(), 0);
        let mut accepted = Vec::new();
        let len = if script.is_empty() { rng.random_range(20..600) } else { script.len() * 2 };
        for i in 0..len {
            let seq = state.last_seq + 1;
            let now = i as u64 * 1000;
            let e = match cursor.peek() {
                Some(&next) if rng.random_bool(0.9) => {
                    cursor.next();
                    TurnEvent { seq, timestamp_ms: now, ..next.clone() }
                }
                _ => random_event(&mut rng, &state, seq, now),
            };
            let before = state.clone();
            match state.step(&e) {
                Ok(_) => {
                    // Submit barrier: a page closes only with both submissions
                    // and every highlighted image labelled by its owner.
                    if let (Some(p), Phase::Feedback(k)) = (before.phase.page(), state.phase) {
                        let page = state.page(k).unwrap();
                        let pspec = state.page_spec(k).unwrap();
                        let labelled = Player::BOTH
                            .iter()
                            .all(|&pl| page.labels[pl.index()].len() == pspec.highlights(pl).len());
                        if p != k || !page.submitted.iter().all(|&s| s) || !labelled {
                            broken.push(format!("seq {n}: page {k} closed early"));
                        }
                    }
                    if let (Phase::Round(_) | Phase::Warmup, EventKind::Label { .. }) = (before.phase, &e.kind) {
                        let p = before.phase.page().unwrap();
                        let who = e.actor.player().unwrap();
                        if before.page(p).unwrap().submitted[who.index()] {
                            broken.push(format!("seq {n}: label after submit"));
                        }
                    }
                    accepted.push(e);
                }
                Err(_) => {
                    if state != before {
                        broken.push(format!("seq {n}: rejected event mutated state"));
                    }
                }
            }
            if state.phase.is_terminal() {
                break;
            }
        }
        if state.phase == Phase::Done {
            completed += 1;
            if state.decisions() != 30 {
                broken.push(format!("seq {n}: completed with {} decisions", state.decisions()));
            }
        }
        let replayed = GameState::replay(spec, 0, &accepted).expect("accepted events replay");
        let (a, b) = (serde_json::to_string(&state).unwrap(), serde_json::to_string(&replayed).unwrap());
        if a != b {
            broken.push(format!("seq {n}: replay differs"));
        }
    }
    let elapsed = t.elapsed();
    let ok = broken.is_empty() && completed > 0 && within(elapsed, Duration::from_secs(60));
    verdict(
        "state_machine_properties",
        ok,
        format!("{SEQUENCES} sequences, {completed} completed, {} violations {:?}, {elapsed:?}", broken.len(), broken.first()),
    );
}

#[derive(Default)]
struct Seen {
    completed: u32,
    games: HashSet<GameRef>,
    partners: HashSet<String>,
    last: Option<GameRef>,
}

#[test]
fn matchmaking_simulation() {
    let t = Instant::now();
    let config = MatchConfig::default();
    let report = simulation::run(SimConfig { workers: 1000, seed: 11, ..Default::default() }, config);

    // Independent replay of the log against the three constraints.
    let mut seen: HashMap<String, Seen> = HashMap::new();
    let mut matches = Vec::new();
    let (mut violations, mut honoured, mut chances, mut mislabelled) = (0, 0, 0, 0);
    for entry in &report.log {
        match entry {
            LogEntry::Matched { result, outcomes, .. } => {
                let pair = [&result.worker_a, &result.worker_b];
                for (k, w) in pair.iter().enumerate() {
                    let other = pair[1 - k];
                    let s = seen.entry(w.to_string()).or_default();
                    if s.completed >= config.max_games || s.games.contains(&result.game) || s.partners.contains(other.as_str()) {
                        violations += 1;
                    }
                    let sibling = s.last.is_some_and(|g| g.sibling() == result.game);
                    if outcomes[k].honoured != sibling {
                        mislabelled += 1;
                    }
                    if outcomes[k].opportunity {
                        chances += 1;
                        honoured += usize::from(sibling);
                    }
                }
                if result.worker_a == result.worker_b {
                    violations += 1;
                }
                for (k, w) in pair.iter().enumerate() {
                    let s = seen.get_mut(w.as_str()).unwrap();
                    s.games.insert(result.game);
                    s.partners.insert(pair[1 - k].to_string());
                    s.last = Some(result.game);
                }
                matches.push(result.clone());
            }
            LogEntry::Finished { match_index, completed, .. } => {
                if *completed {
                    let m = &matches[*match_index];
                    for w in [&m.worker_a, &m.worker_b] {
                        seen.get_mut(w.as_str()).unwrap().completed += 1;
                    }
                }
            }
        }
    }
    let rate = if chances == 0 { 0.0 } else { honoured as f64 / chances as f64 };
    let elapsed = t.elapsed();
    let ok = violations == 0
        && mislabelled == 0
        && report.violations(config.max_games) == 0
        && chances > 0
        && rate >= 0.90
        && within(elapsed, Duration::from_secs(60));
    verdict(
        "matchmaking_simulation",
        ok,
        format!(
            "{} matches, {violations} violations, preference honoured {honoured}/{chances} ({:.1}%), {elapsed:?}",
            matches.len(),
            rate * 100.0
        ),
    );
}

#[test]
fn payment_table() {
    let cases = [((9.0, 1), 175), ((12.0, 1), 195), ((30.0, 3), 350)];
    let got: Vec<u64> = cases.iter().map(|&((m, i), _)| compute_payment(m, i, true).unwrap().cents).collect();
    let want: Vec<u64> = cases.iter().map(|c| c.1).collect();
    verdict("payment_table", got == want, format!("cents {got:?}, expected {want:?}"));
}

#[test]
fn segmentation_oracle() {
    const DIALOGUES: u64 = 1000;
    let base = GameSchema::canonical();
    let games: Vec<_> = (0..DIALOGUES)
        .map(|n| {
            let spec = base.game_spec(format!("g{n}"), 1, Variant::BOTH[n as usize % 2]).shuffled(n);
            let config = ScriptConfig { seed: n, trailing_rate: 0.3, ..Default::default() };
            let g = scripted_game(&spec, &config);
            (g.log(["a", "b"]), g.truth)
        })
        .collect();
    let t = Instant::now();
    let (mut exact, mut segments, mut trailing) = (0, 0, 0);
    let mut first_miss = None;
    for (log, truth) in &games {
        let (records, diag) = segment_game(log);
        trailing += diag.trailing_utterance_rule;
        let got: Vec<Vec<(Vec<u64>, BTreeSet<u8>)>> = (1..=5u8)
            .map(|r| {
                records
                    .iter()
                    .filter(|s| s.round_index == r)
                    .map(|s| (s.utterances.iter().map(|u| u.seq).collect(), s.target_ids.clone()))
                    .collect()
            })
            .collect();
        let want: Vec<Vec<(Vec<u64>, BTreeSet<u8>)>> = truth
            .iter()
            .map(|round| round.iter().map(|s| (s.utterance_seqs.clone(), s.targets.clone())).collect())
            .collect();
        segments += want.iter().map(Vec::len).sum::<usize>();
        if got == want {
            exact += 1;
        } else if first_miss.is_none() {
            first_miss = Some(log.game_id.clone());
        }
    }
    let elapsed = t.elapsed();
    let ok = exact == games.len() && trailing > 0 && within(elapsed, Duration::from_secs(10));
    verdict(
        "segmentation_oracle",
        ok,
        format!(
            "{exact}/{} dialogues exact ({segments} segments, {trailing} trailing-rule cases), first miss {first_miss:?}, {elapsed:?}",
            games.len()
        ),
    );
}

#[test]
fn corpus_statistics() {
    let Some(dir) = std::env::var_os("PB_CORPUS_DIR") else {
        println!("SKIP corpus_statistics: PB_CORPUS_DIR not set");
        return;
    };
    let (logs, report) = import_corpus(&dir, &FieldMap::default());
    let mut checks: Vec<(String, bool)> = Vec::new();
    let mut check = |name: &str, ok: bool| checks.push((name.to_owned(), ok));
    check(&format!("games {}", report.games), report.games == 2_506);
    check(&format!("utterances {}", report.utterances), report.utterances == 164_615);
    check(&format!("actions {}", report.actions), report.actions == 130_322);

    let mut catalog = ImageCatalog::default();
    catalog.add_log_sources(&logs);
    let chains = extract(&logs, &catalog);
    let stats = chain_statistics(&chains.chains, &chains.segments);
    let near = |x: f64, want: f64, tol: f64| (x - want).abs() <= tol;
    check(&format!("single-target share {:.3}", stats.target_shares.one), near(stats.target_shares.one, 0.72, 0.03));
    check(&format!("two-target share {:.3}", stats.target_shares.two), near(stats.target_shares.two, 0.25, 0.03));
    check(&format!("chains with 3-6 segments {:.3}", stats.chains_3_to_6), near(stats.chains_3_to_6, 0.75, 0.03));
    check(
        &format!("chains {}", stats.chains),
        near(stats.chains as f64, 18_321.0, 0.05 * 18_321.0),
    );

    let rounds = analytics::round_stats(&logs);
    let d = |k: usize| rounds.rounds.get(k).map_or(f64::NAN, |r| r.mean_duration_s);
    check(&format!("round 1 duration {:.1} s", d(0)), near(d(0), 180.0, 20.0));
    check(&format!("round 5 / round 1 duration {:.2}", d(4) / d(0)), near(d(4) / d(0), 0.5, 0.1));
    let ratios = analytics::content_token_ratio(&logs, &Stopwords::english());
    let r = ratios.mean_r.unwrap_or(f64::NAN);
    check(&format!("mean per-game r {r:.3}"), near(r, 0.34, 0.05));

    let ok = checks.iter().all(|c| c.1);
    let detail: Vec<String> = checks.iter().map(|(n, ok)| format!("{n} [{}]", if *ok { "ok" } else { "off" })).collect();
    verdict("corpus_statistics", ok, detail.join(", "));
}

#[test]
fn candidate_union_sizes() {
    let sizes = GameSchema::canonical().candidate_union_sizes();
    let want = vec![8, 8, 10, 8, 8];
    let mean = sizes.iter().sum::<usize>() as f64 / sizes.len() as f64;
    verdict(
        "candidate_union_sizes",
        sizes == want,
        format!("union sizes {sizes:?} (mean {mean}), expected {want:?}"),
    );
}
