//! Benchmark fixtures.

use photobook::synth::{scripted_game, ScriptConfig, ScriptedGame};
use photobook::{GameLog, GameSchema, Variant};

/// `n` scripted games over the canonical schema, alternating variants.
pub fn scripted_games(n: u64) -> Vec<ScriptedGame> {
    let schema = GameSchema::canonical();
    (0..n)
        .map(|k| {
            let variant = Variant::BOTH[k as usize % 2];
            let spec = schema
                .game_spec(format!("set01-v{}-{k:06}", variant.number()), 1, variant)
                .shuffled(k)
                .with_warmup();
            scripted_game(&spec, &ScriptConfig { seed: k, ..Default::default() })
        })
        .collect()
}

pub fn logs(games: &[ScriptedGame]) -> Vec<GameLog> {
    games.iter().map(|g| g.log(["P00001", "P00002"])).collect()
}
