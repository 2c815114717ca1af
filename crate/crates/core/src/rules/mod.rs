//! Rules engine for classic-map Risk with a static 5-5-5 card sequence.
//!
//! [`GameState`] is a value: [`GameState::apply_move`] returns a fresh state
//! and never mutates the receiver. Turns run through four phases (cards,
//! placing, attacking, fortifying); attacks are resolved to a terminal state
//! either with real dice or with an imposed outcome.

mod cards;
mod dice;
mod log;
mod map;
mod state;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cards::{cash_value, cashable_sets, is_valid_set, Card, Hand, CASH_VALUE, FORCED_CASH_HAND};
pub use dice::{DiceRound, DiceSource, GameRng, ScriptedDice};
pub use log::{LogEntry, LogError, MatchLog, RulesSpec};
pub use map::{Continent, ContinentId, MapDef, MapError, Territory, TerritoryId, MAP_FORMAT_VERSION, MAX_CONTINENTS};
pub use state::{new_game, AttackResult, GameState, MoveOutcome, PendingOccupy, Phase, Position};

/// Number of player slots in every position and feature vector.
pub const MAX_PLAYERS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub u8);

impl PlayerId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// Game parameters shared by every state of a match.
#[derive(Clone, Debug, PartialEq)]
pub struct Rules {
    pub map: MapDef,
    /// Minimum territory income per turn (before continent bonuses).
    pub income_floor: u32,
    pub initial_armies: u32,
    /// Matches stop after this many player turns.
    pub turn_cap: u32,
}

impl Rules {
    pub const DEFAULT_INCOME_FLOOR: u32 = 3;
    pub const DEFAULT_INITIAL_ARMIES: u32 = 20;
    pub const DEFAULT_TURN_CAP: u32 = 400;

    pub fn new(map: MapDef) -> Rules {
        Rules {
            map,
            income_floor: Self::DEFAULT_INCOME_FLOOR,
            initial_armies: Self::DEFAULT_INITIAL_ARMIES,
            turn_cap: Self::DEFAULT_TURN_CAP,
        }
    }

    pub fn classic() -> Rules {
        Rules::new(MapDef::classic())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Cash([Card; 3]),
    Place {
        territory: TerritoryId,
        count: u32,
    },
    Attack {
        from: TerritoryId,
        to: TerritoryId,
    },
    Occupy {
        count: u32,
    },
    Fortify {
        from: TerritoryId,
        to: TerritoryId,
        count: u32,
    },
    EndAttacks,
    EndTurn,
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Cash(set) => write!(f, "cash {:?}", set),
            Move::Place { territory, count } => write!(f, "place {count} on {territory}"),
            Move::Attack { from, to } => write!(f, "attack {from} -> {to}"),
            Move::Occupy { count } => write!(f, "occupy with {count}"),
            Move::Fortify { from, to, count } => write!(f, "fortify {count} from {from} to {to}"),
            Move::EndAttacks => write!(f, "end attacks"),
            Move::EndTurn => write!(f, "end turn"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("game is over")]
    GameOver,
    #[error("{mv} is not allowed in the {phase:?} phase")]
    WrongPhase { mv: &'static str, phase: Phase },
    #[error("an occupation move is owed before anything else")]
    OccupyPending,
    #[error("territory {0} does not exist")]
    NoSuchTerritory(TerritoryId),
    #[error("territory {0} is not owned by the current player")]
    NotOwner(TerritoryId),
    #[error("territory {0} is already owned by the current player")]
    OwnTerritory(TerritoryId),
    #[error("territories {0} and {1} are not adjacent")]
    NotAdjacent(TerritoryId, TerritoryId),
    #[error("not enough armies: need {need}, have {have}")]
    InsufficientArmies { need: u32, have: u32 },
    #[error("only {movable} unlocked armies can leave territory {territory}")]
    LockedUnits { territory: TerritoryId, movable: u32 },
    #[error("hand does not hold a valid set {0:?}")]
    InvalidCash([Card; 3]),
    #[error("hand holds {0} cards and must be cashed first")]
    MustCash(u32),
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("occupation count {count} outside {min}..={max}")]
    OccupyOutOfRange { count: u32, min: u32, max: u32 },
    #[error("imposed outcome ({attackers}, {defenders}) is not a terminal state of a {start_a} v {start_d} battle")]
    NotTerminal {
        attackers: u32,
        defenders: u32,
        start_a: u32,
        start_d: u32,
    },
    #[error("invalid setup: {0}")]
    Setup(String),
    #[error("player {0} is not alive")]
    DeadPlayer(PlayerId),
}
