//! Matches, datasets and tournaments.

mod bots;
mod tournament;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, Engine};
use crate::rules::{new_game, GameState, MatchLog, Move, MoveOutcome, PlayerId, Position, RuleError, Rules};
use crate::td::{Dataset, Episode};

pub use bots::{baseline_bots, largest_region, Aggressor, BotKind, Clusterer, Policy, RandomBot, Scripted, Turtle};
pub use tournament::{
    seat_order, tournament, wilson_interval, AgentFactory, AgentStats, RosterEntry, TournamentConfig, TournamentReport,
};

/// The authoritative game plus its log, as handed to agents.
pub struct Recorder {
    state: GameState,
    log: MatchLog,
    turn_ends: Vec<Position>,
}

impl Recorder {
    pub fn new(state: GameState, log: MatchLog) -> Recorder {
        Recorder {
            state,
            log,
            turn_ends: Vec::new(),
        }
    }
}

impl Engine for Recorder {
    fn state(&self) -> &GameState {
        &self.state
    }

    fn submit(&mut self, mv: &Move) -> Result<MoveOutcome, RuleError> {
        let before = (*mv == Move::EndTurn).then(|| self.state.position().clone());
        let prev = self.state.clone();
        let outcome = self.state.apply(mv)?;
        self.log.record(&prev, mv, &outcome);
        if let Some(pos) = before {
            self.turn_ends.push(pos);
        } else if self.state.is_over() {
            self.turn_ends.push(self.state.position().clone());
        }
        Ok(outcome)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub seed: u64,
    pub roster: Vec<String>,
    /// Position at the end of every player turn, in order.
    pub turn_ends: Vec<Position>,
    /// Seats from first to last place.
    pub placements: Vec<PlayerId>,
    pub winner: Option<PlayerId>,
    pub turns: u32,
    pub truncated: bool,
    /// Set when an agent failed; the match stops there.
    pub aborted: Option<String>,
}

impl MatchRecord {
    /// Place (0 = first) of each seat.
    pub fn rank_of(&self, seat: PlayerId) -> usize {
        self.placements
            .iter()
            .position(|&p| p == seat)
            .expect("placements cover every seat")
    }

    pub fn episode(&self) -> Episode {
        Episode::from_states(self.turn_ends.clone(), self.truncated || self.aborted.is_some())
    }
}

/// Ranks seats: survivors first (by territories, then armies, then seat),
/// then the eliminated in reverse elimination order.
pub fn placements(state: &GameState) -> Vec<PlayerId> {
    let pos = state.position();
    let mut alive: Vec<PlayerId> = (0..pos.players)
        .map(PlayerId)
        .filter(|p| pos.alive[p.index()])
        .collect();
    alive.sort_by_key(|&p| {
        (
            std::cmp::Reverse(pos.territory_count(p)),
            std::cmp::Reverse(pos.armies_of(p)),
            p,
        )
    });
    let mut out = alive;
    out.extend(state.eliminations().iter().rev().map(|&(p, _)| p));
    out
}

/// Plays one match with real dice. `agents[i]` sits in seat `i`.
pub fn run_match(
    rules: Arc<Rules>,
    agents: &mut [Box<dyn Agent>],
    seed: u64,
) -> Result<(MatchRecord, MatchLog), RuleError> {
    let roster: Vec<String> = agents.iter().map(|a| a.name()).collect();
    let state = new_game(rules.clone(), agents.len(), rules.initial_armies, seed)?;
    let log = MatchLog::new(&rules, agents.len(), seed, roster.clone());
    let mut rec = Recorder::new(state, log);
    let mut aborted = None;
    while !rec.state.is_over() {
        let seat = rec.state.current_player();
        let turn = rec.state.turn();
        match agents[seat.index()].play_turn(&mut rec) {
            Ok(()) if rec.state.is_over() || rec.state.turn() != turn => {}
            Ok(()) => {
                aborted = Some(format!(
                    "seat {} ({}) returned without ending its turn",
                    seat.0,
                    roster[seat.index()]
                ));
                break;
            }
            Err(e) => {
                aborted = Some(format!("seat {} ({}): {}", seat.0, roster[seat.index()], e));
                break;
            }
        }
    }
    let record = MatchRecord {
        seed,
        roster,
        placements: placements(&rec.state),
        winner: rec.state.winner(),
        turns: rec.state.turn(),
        truncated: rec.state.truncated(),
        turn_ends: rec.turn_ends,
        aborted,
    };
    Ok((record, rec.log))
}

/// Round-robin seating of baseline bots: match `m` seats bot
/// `(seat + m) % bots.len()` in each seat. Matches decided within the first
/// turn leave a single state and no TD signal; they are dropped.
pub fn generate_dataset(
    rules: Arc<Rules>,
    bots: &[BotKind],
    players: usize,
    n_matches: usize,
    seed: u64,
) -> Result<Dataset, RuleError> {
    use rayon::prelude::*;
    assert!(!bots.is_empty(), "need at least one bot");
    let episodes: Result<Vec<Episode>, RuleError> = (0..n_matches)
        .into_par_iter()
        .map(|m| {
            let mseed = tournament::mix(seed, m as u64);
            let mut agents: Vec<Box<dyn Agent>> = (0..players)
                .map(|s| bots[(s + m) % bots.len()].build(tournament::mix(mseed, s as u64 + 1)))
                .collect();
            run_match(rules.clone(), &mut agents, mseed).map(|(r, _)| r.episode())
        })
        .collect();
    let episodes = episodes?.into_iter().filter(|e| e.len() >= 2).collect();
    Ok(Dataset::new(&rules, episodes))
}
