//! The seam between players and the authoritative game.

use thiserror::Error;

use crate::rules::{GameState, Move, MoveOutcome, RuleError};

/// The authoritative game as a player sees it.
pub trait Engine {
    fn state(&self) -> &GameState;
    fn submit(&mut self, mv: &Move) -> Result<MoveOutcome, RuleError>;
}

impl Engine for GameState {
    fn state(&self) -> &GameState {
        self
    }

    fn submit(&mut self, mv: &Move) -> Result<MoveOutcome, RuleError> {
        self.apply(mv)
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("engine rejected {mv}: {source}")]
    Rejected {
        mv: Move,
        #[source]
        source: RuleError,
    },
    #[error("agent is not the current player")]
    NotMyTurn,
    #[error("{0}")]
    Other(String),
}

/// Something that plays whole turns.
pub trait Agent: Send {
    fn name(&self) -> String;

    /// Plays moves until the turn passes or the game ends.
    fn play_turn(&mut self, engine: &mut dyn Engine) -> Result<(), AgentError>;
}

/// Submits `mv`, mapping a rejection to [`AgentError::Rejected`].
pub fn submit(engine: &mut dyn Engine, mv: &Move) -> Result<MoveOutcome, AgentError> {
    engine
        .submit(mv)
        .map_err(|source| AgentError::Rejected { mv: mv.clone(), source })
}
