//! Participant compensation. Amounts are computed in whole cents.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BASE_CENTS: u64 = 175;
const CENTS_PER_MINUTE: f64 = 10.0;
const BONUS_FREE_MINUTES: f64 = 10.0;
const BONUS_CAP_MINUTES: f64 = 25.0;
const REPEAT_BONUS_CENTS: u64 = 25;
/// Highest game index a worker can reach.
pub const MAX_GAMES: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Usd {
    pub cents: u64,
}

impl Usd {
    pub fn from_cents(cents: u64) -> Self {
        Usd { cents }
    }

    pub fn as_f64(self) -> f64 {
        self.cents as f64 / 100.0
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02} USD", self.cents / 100, self.cents % 100)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PaymentError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Pay for one game: base amount, a per-minute bonus between 10 and 25
/// minutes, and a repeat bonus from the second game on. Incomplete games
/// are not paid.
pub fn compute_payment(
    duration_minutes: f64,
    completed_game_index: u32,
    completed: bool,
) -> Result<Usd, PaymentError> {
    if !duration_minutes.is_finite() || duration_minutes < 0.0 {
        return Err(PaymentError::InvalidInput(format!(
            "duration must be a non-negative number of minutes, got {duration_minutes}"
        )));
    }
    if !(1..=MAX_GAMES).contains(&completed_game_index) {
        return Err(PaymentError::InvalidInput(format!(
            "game index must be in 1..={MAX_GAMES}, got {completed_game_index}"
        )));
    }
    if !completed {
        return Ok(Usd::default());
    }
    let bonus_minutes = (duration_minutes.min(BONUS_CAP_MINUTES) - BONUS_FREE_MINUTES).max(0.0);
    let time_bonus = (bonus_minutes * CENTS_PER_MINUTE).round() as u64;
    let repeat = if completed_game_index >= 2 { REPEAT_BONUS_CENTS } else { 0 };
    Ok(Usd::from_cents(BASE_CENTS + time_bonus + repeat))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payment_table() {
        assert_eq!(compute_payment(9.0, 1, true).unwrap().cents, 175);
        assert_eq!(compute_payment(12.0, 1, true).unwrap().cents, 195);
        assert_eq!(compute_payment(30.0, 3, true).unwrap().cents, 350);
    }

    #[test]
    fn bonus_is_capped_and_incomplete_is_free() {
        assert_eq!(compute_payment(25.0, 1, true).unwrap().cents, 325);
        assert_eq!(compute_payment(90.0, 1, true).unwrap().cents, 325);
        assert_eq!(compute_payment(10.0, 5, true).unwrap().cents, 200);
        assert_eq!(compute_payment(20.0, 2, false).unwrap().cents, 0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compute_payment(-1.0, 1, true).is_err());
        assert!(compute_payment(f64::NAN, 1, true).is_err());
        assert!(compute_payment(5.0, 0, true).is_err());
        assert!(compute_payment(5.0, 6, true).is_err());
    }

    #[test]
    fn display() {
        assert_eq!(Usd::from_cents(195).to_string(), "1.95 USD");
    }
}
