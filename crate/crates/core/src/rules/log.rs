//! Append-only match log: enough to rebuild every state of a match.
//!
//! Stored as JSON lines. The first line is a header (format version, seed,
//! roster and rules including the full map text); every following line is one
//! [`LogEntry`].

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cards::Card;
use super::dice::DiceRound;
use super::state::{new_game, GameState, MoveOutcome};
use super::{MapDef, MapError, Move, PlayerId, RuleError, Rules};

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed log line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("log format version {0} is not supported")]
    Version(u32),
    #[error("empty log")]
    Empty,
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("entry {index}: {source}")]
    Rule {
        index: usize,
        #[source]
        source: RuleError,
    },
    #[error("entry {index}: replay diverged from the recorded outcome")]
    Diverged { index: usize },
    #[error("setup: {0}")]
    Setup(RuleError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RulesSpec {
    pub map: String,
    pub income_floor: u32,
    pub initial_armies: u32,
    pub turn_cap: u32,
}

impl RulesSpec {
    pub fn from_rules(rules: &Rules) -> RulesSpec {
        RulesSpec {
            map: rules.map.to_text(),
            income_floor: rules.income_floor,
            initial_armies: rules.initial_armies,
            turn_cap: rules.turn_cap,
        }
    }

    pub fn to_rules(&self) -> Result<Rules, MapError> {
        Ok(Rules {
            map: MapDef::parse(&self.map)?,
            income_floor: self.income_floor,
            initial_armies: self.initial_armies,
            turn_cap: self.turn_cap,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Player-turn index at the time of the move.
    pub turn: u32,
    pub player: PlayerId,
    pub mv: Move,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dice: Vec<DiceRound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub card: Option<Card>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    seed: u64,
    players: usize,
    roster: Vec<String>,
    rules: RulesSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchLog {
    pub seed: u64,
    pub players: usize,
    pub roster: Vec<String>,
    pub rules: RulesSpec,
    pub entries: Vec<LogEntry>,
}

impl MatchLog {
    pub fn new(rules: &Rules, players: usize, seed: u64, roster: Vec<String>) -> MatchLog {
        MatchLog {
            seed,
            players,
            roster,
            rules: RulesSpec::from_rules(rules),
            entries: Vec::new(),
        }
    }

    /// Appends `mv`, applied to `before`, with its outcome.
    pub fn record(&mut self, before: &GameState, mv: &Move, outcome: &MoveOutcome) {
        self.entries.push(LogEntry {
            turn: before.turn(),
            player: before.current_player(),
            mv: mv.clone(),
            dice: outcome.attack.as_ref().map(|a| a.rounds.clone()).unwrap_or_default(),
            card: outcome.card_drawn,
        });
    }

    pub fn initial_state(&self) -> Result<GameState, LogError> {
        let rules = Arc::new(self.rules.to_rules()?);
        let armies = rules.initial_armies;
        new_game(rules, self.players, armies, self.seed).map_err(LogError::Setup)
    }

    /// Re-applies every entry, checking recorded dice and cards, and calls
    /// `visit(index, state_before, entry)` before each move.
    pub fn replay_with(&self, mut visit: impl FnMut(usize, &GameState, &LogEntry)) -> Result<GameState, LogError> {
        let mut state = self.initial_state()?;
        for (index, entry) in self.entries.iter().enumerate() {
            visit(index, &state, entry);
            if state.current_player() != entry.player || state.turn() != entry.turn {
                return Err(LogError::Diverged { index });
            }
            let outcome = state
                .apply(&entry.mv)
                .map_err(|source| LogError::Rule { index, source })?;
            let dice = outcome.attack.map(|a| a.rounds).unwrap_or_default();
            if dice != entry.dice || outcome.card_drawn != entry.card {
                return Err(LogError::Diverged { index });
            }
        }
        Ok(state)
    }

    pub fn replay(&self) -> Result<GameState, LogError> {
        self.replay_with(|_, _, _| {})
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), LogError> {
        let header = Header {
            format: "riskgcn-match-log".into(),
            version: LOG_FORMAT_VERSION,
            seed: self.seed,
            players: self.players,
            roster: self.roster.clone(),
            rules: self.rules.clone(),
        };
        serde_json::to_writer(&mut w, &header).map_err(|e| LogError::Json { line: 1, source: e })?;
        writeln!(w)?;
        for (i, e) in self.entries.iter().enumerate() {
            serde_json::to_writer(&mut w, e).map_err(|e| LogError::Json { line: i + 2, source: e })?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<MatchLog, LogError> {
        let mut lines = r.lines();
        let first = lines.next().ok_or(LogError::Empty)??;
        let header: Header = serde_json::from_str(&first).map_err(|e| LogError::Json { line: 1, source: e })?;
        if header.version != LOG_FORMAT_VERSION {
            return Err(LogError::Version(header.version));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| LogError::Json { line: i + 2, source: e })?);
        }
        Ok(MatchLog {
            seed: header.seed,
            players: header.players,
            roster: header.roster,
            rules: header.rules,
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::Phase;

    /// Plays a short scripted game: everyone piles on one territory and
    /// attacks the first legal target once per turn.
    fn scripted_log(turns: u32) -> (MatchLog, GameState) {
        let rules = Rules::classic();
        let mut log = MatchLog::new(&rules, 6, 42, vec!["x".into(); 6]);
        let mut state = log.initial_state().unwrap();
        while state.turn() < turns && !state.is_over() {
            let mv = match state.phase() {
                Phase::Cards => match crate::rules::cashable_sets(state.hand(state.current_player())).first() {
                    Some(&set) => Move::Cash(set),
                    None => unreachable!(),
                },
                Phase::Placing => {
                    let t = state.frontier(state.current_player())[0];
                    Move::Place {
                        territory: t,
                        count: state.pending_income(),
                    }
                }
                Phase::Attacking => match state.pending_occupy() {
                    Some(p) => Move::Occupy { count: p.max },
                    None => match state.legal_attacks().first() {
                        Some(&(from, to)) if state.position().armies_on(from) > 3 => Move::Attack { from, to },
                        _ => Move::EndTurn,
                    },
                },
                Phase::Fortifying => Move::EndTurn,
                Phase::GameOver => break,
            };
            let before = state.clone();
            let out = state.apply(&mv).unwrap();
            log.record(&before, &mv, &out);
        }
        (log, state)
    }

    #[test]
    fn replay_is_bit_exact() {
        let (log, end) = scripted_log(60);
        assert!(log.entries.iter().any(|e| !e.dice.is_empty()));
        let replayed = log.replay().unwrap();
        assert_eq!(replayed.position(), end.position());
        assert_eq!(replayed.turn(), end.turn());
    }

    #[test]
    fn text_round_trip_and_tamper_detection() {
        let (log, _) = scripted_log(30);
        let mut buf = Vec::new();
        log.write_to(&mut buf).unwrap();
        let back = MatchLog::read_from(&buf[..]).unwrap();
        assert_eq!(back, log);

        let mut tampered = back.clone();
        let idx = tampered.entries.iter().position(|e| !e.dice.is_empty()).unwrap();
        let face = &mut tampered.entries[idx].dice[0].attacker[0];
        *face = if *face == 6 { 1 } else { *face + 1 };
        assert!(matches!(tampered.replay(), Err(LogError::Diverged { .. })));
    }
}
