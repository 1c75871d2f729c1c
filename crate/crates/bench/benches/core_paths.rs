use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use photobook::chains::{extract, segment_game, ImageCatalog};
use photobook::game::GameState;
use photobook::logstore::canonical_json;
use photobook::matchmaking::simulation::{self, SimConfig};
use photobook::MatchConfig;
use photobook_bench::{logs, scripted_games};

fn replay(c: &mut Criterion) {
    let games = scripted_games(1);
    let g = &games[0];
    c.bench_function("replay_full_game", |b| {
        b.iter(|| GameState::replay(g.spec.clone(), g.started_ms, &g.events).unwrap())
    });
    let state = GameState::replay(g.spec.clone(), g.started_ms, &g.events).unwrap();
    c.bench_function("canonical_json_state", |b| b.iter(|| canonical_json(&state).unwrap()));
}

fn segmentation(c: &mut Criterion) {
    let logs = logs(&scripted_games(100));
    c.bench_function("segment_100_games", |b| {
        b.iter(|| logs.iter().map(|l| segment_game(l).0.len()).sum::<usize>())
    });
    let catalog = ImageCatalog::default();
    c.bench_function("extract_chains_100_games", |b| b.iter(|| extract(&logs, &catalog)));
}

fn matchmaking(c: &mut Criterion) {
    let mut group = c.benchmark_group("matchmaking");
    group.sample_size(10);
    group.bench_function("simulate_1000_workers", |b| {
        b.iter_batched(
            || SimConfig { workers: 1000, seed: 3, ..Default::default() },
            |cfg| simulation::run(cfg, MatchConfig::default()),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

criterion_group!(benches, replay, segmentation, matchmaking);
criterion_main!(benches);
