//! Scripted baseline opponents.
//!
//! Deliberately simple, each with one recognisable habit. Every bot owns a
//! seeded RNG, so a bot's moves are a function of (seed, observed states).

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{submit, Agent, AgentError, Engine};
use crate::rules::{cashable_sets, GameState, Move, Phase, PlayerId, TerritoryId};

/// Safety valve against a policy that never ends its turn.
const MAX_MOVES_PER_TURN: usize = 5_000;

/// One decision at a time; the driver loops until the turn passes.
pub trait Policy: Send {
    fn next_move(&mut self, state: &GameState) -> Move;
}

/// Turns a [`Policy`] into an [`Agent`].
pub struct Scripted<P> {
    name: String,
    policy: P,
}

impl<P: Policy> Scripted<P> {
    pub fn new(name: impl Into<String>, policy: P) -> Self {
        Scripted {
            name: name.into(),
            policy,
        }
    }
}

impl<P: Policy> Agent for Scripted<P> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn play_turn(&mut self, engine: &mut dyn Engine) -> Result<(), AgentError> {
        let me = engine.state().current_player();
        for _ in 0..MAX_MOVES_PER_TURN {
            let state = engine.state();
            if state.is_over() || state.current_player() != me {
                return Ok(());
            }
            let mv = self.policy.next_move(state);
            submit(engine, &mv)?;
        }
        Err(AgentError::Other(format!(
            "{} exceeded {MAX_MOVES_PER_TURN} moves in one turn",
            self.name
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BotKind {
    Random,
    Aggressor,
    Clusterer,
    Turtle,
}

impl BotKind {
    pub const ALL: [BotKind; 4] = [BotKind::Random, BotKind::Aggressor, BotKind::Clusterer, BotKind::Turtle];

    pub fn name(self) -> &'static str {
        match self {
            BotKind::Random => "random",
            BotKind::Aggressor => "aggressor",
            BotKind::Clusterer => "clusterer",
            BotKind::Turtle => "turtle",
        }
    }

    pub fn parse(s: &str) -> Option<BotKind> {
        BotKind::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn build(self, seed: u64) -> Box<dyn Agent> {
        let rng = ChaCha8Rng::seed_from_u64(seed);
        match self {
            BotKind::Random => Box::new(Scripted::new("random", RandomBot { rng })),
            BotKind::Aggressor => Box::new(Scripted::new("aggressor", Aggressor { rng })),
            BotKind::Clusterer => Box::new(Scripted::new("clusterer", Clusterer { rng })),
            BotKind::Turtle => Box::new(Scripted::new("turtle", Turtle { rng, fortified: false })),
        }
    }
}

/// The four baseline bots, seeded from `seed`.
pub fn baseline_bots(seed: u64) -> Vec<Box<dyn Agent>> {
    BotKind::ALL
        .iter()
        .enumerate()
        .map(|(i, k)| k.build(seed.wrapping_add(i as u64)))
        .collect()
}

fn force(state: &GameState, from: TerritoryId) -> u32 {
    state.position().armies_on(from) - 1
}

fn forced_or_free_cash(state: &GameState) -> Option<Move> {
    let hand = state.hand(state.current_player());
    cashable_sets(hand).first().map(|&s| Move::Cash(s))
}

/// Cash whenever possible, then place everything via `place`.
fn cards_then_place(state: &GameState, place: impl FnOnce() -> Move) -> Move {
    if state.phase() == Phase::Cards {
        if let Some(mv) = forced_or_free_cash(state) {
            return mv;
        }
    }
    place()
}

fn occupy_max(state: &GameState) -> Option<Move> {
    state.pending_occupy().map(|p| Move::Occupy { count: p.max })
}

fn pick_max_by<T: Copy, K: PartialOrd>(items: &[T], key: impl Fn(T) -> K) -> Option<T> {
    let mut best: Option<(T, K)> = None;
    for &it in items {
        let k = key(it);
        if best.as_ref().is_none_or(|(_, bk)| k > *bk) {
            best = Some((it, k));
        }
    }
    best.map(|(t, _)| t)
}

/// Uniform choices; attacks and fortifies with probability 1/2 per decision.
pub struct RandomBot {
    rng: ChaCha8Rng,
}

impl Policy for RandomBot {
    fn next_move(&mut self, state: &GameState) -> Move {
        let me = state.current_player();
        match state.phase() {
            Phase::Cards => {
                let sets = cashable_sets(state.hand(me));
                let must = state.hand(me).must_cash() || state.pending_income() == 0;
                if !sets.is_empty() && (must || self.rng.random_bool(0.5)) {
                    return Move::Cash(*sets.choose(&mut self.rng).expect("non-empty"));
                }
                self.place(state)
            }
            Phase::Placing => self.place(state),
            Phase::Attacking => {
                if let Some(p) = state.pending_occupy() {
                    return Move::Occupy {
                        count: self.rng.random_range(p.min..=p.max),
                    };
                }
                let attacks = state.legal_attacks();
                if !attacks.is_empty() && self.rng.random_bool(0.5) {
                    let &(from, to) = attacks.choose(&mut self.rng).expect("non-empty");
                    return Move::Attack { from, to };
                }
                Move::EndAttacks
            }
            Phase::Fortifying => {
                let pairs = state.legal_fortify_pairs();
                if !pairs.is_empty() && self.rng.random_bool(0.5) {
                    let &(from, to) = pairs.choose(&mut self.rng).expect("non-empty");
                    let count = self.rng.random_range(1..=state.movable(from));
                    return Move::Fortify { from, to, count };
                }
                Move::EndTurn
            }
            Phase::GameOver => Move::EndTurn,
        }
    }
}

impl RandomBot {
    fn place(&mut self, state: &GameState) -> Move {
        let owned: Vec<_> = state.position().territories_of(state.current_player()).collect();
        let territory = *owned.choose(&mut self.rng).expect("current player owns territory");
        let count = self.rng.random_range(1..=state.pending_income());
        Move::Place { territory, count }
    }
}

/// Stacks the strongest border territory and attacks while force exceeds
/// the defenders.
pub struct Aggressor {
    rng: ChaCha8Rng,
}

impl Policy for Aggressor {
    fn next_move(&mut self, state: &GameState) -> Move {
        let me = state.current_player();
        let pos = state.position();
        match state.phase() {
            Phase::Cards | Phase::Placing => cards_then_place(state, || {
                let front = state.frontier(me);
                let territory = pick_max_by(&front, |t| pos.armies_on(t)).expect("a live player has a frontier");
                Move::Place {
                    territory,
                    count: state.pending_income(),
                }
            }),
            Phase::Attacking => {
                if let Some(mv) = occupy_max(state) {
                    return mv;
                }
                let attacks: Vec<_> = state
                    .legal_attacks()
                    .into_iter()
                    .filter(|&(f, t)| force(state, f) > pos.armies_on(t))
                    .collect();
                // Random tie-break among the best margins keeps games varied.
                let best = attacks
                    .iter()
                    .map(|&(f, t)| force(state, f) as i64 - pos.armies_on(t) as i64)
                    .max();
                match best {
                    Some(m) => {
                        let top: Vec<_> = attacks
                            .into_iter()
                            .filter(|&(f, t)| force(state, f) as i64 - pos.armies_on(t) as i64 == m)
                            .collect();
                        let &(from, to) = top.choose(&mut self.rng).expect("non-empty");
                        Move::Attack { from, to }
                    }
                    None => Move::EndAttacks,
                }
            }
            Phase::Fortifying => fortify_interior_to_front(state).unwrap_or(Move::EndTurn),
            Phase::GameOver => Move::EndTurn,
        }
    }
}

/// Moves the largest interior stack next door towards the enemy, once.
fn fortify_interior_to_front(state: &GameState) -> Option<Move> {
    let me = state.current_player();
    let front = state.frontier(me);
    if state.fortify_locks().iter().any(|&l| l > 0) {
        return None;
    }
    let pairs: Vec<_> = state
        .legal_fortify_pairs()
        .into_iter()
        .filter(|(f, t)| !front.contains(f) && front.contains(t))
        .collect();
    let (from, to) = pick_max_by(&pairs, |(f, _)| state.movable(f))?;
    Some(Move::Fortify {
        from,
        to,
        count: state.movable(from),
    })
}

/// Owned territories in the largest connected owned region; ties go to the
/// region containing the lowest territory id.
pub fn largest_region(state: &GameState, p: PlayerId) -> Vec<TerritoryId> {
    let pos = state.position();
    let map = &state.rules().map;
    let mut seen = vec![false; map.territory_count()];
    let mut best: Vec<TerritoryId> = Vec::new();
    for start in pos.territories_of(p) {
        if seen[start.index()] {
            continue;
        }
        seen[start.index()] = true;
        let mut region = vec![start];
        let mut i = 0;
        while i < region.len() {
            for &n in map.neighbours(region[i]) {
                if !seen[n.index()] && pos.owner_of(n) == p {
                    seen[n.index()] = true;
                    region.push(n);
                }
            }
            i += 1;
        }
        if region.len() > best.len() {
            best = region;
        }
    }
    best.sort();
    best
}

/// Grows its largest region, preferring targets in nearly-owned continents.
pub struct Clusterer {
    rng: ChaCha8Rng,
}

impl Clusterer {
    /// Fraction of the target's continent already owned by `p`.
    fn continent_share(state: &GameState, p: PlayerId, t: TerritoryId) -> f64 {
        let map = &state.rules().map;
        let c = &map.continents()[map.continent_of(t).index()];
        let owned = c.members.iter().filter(|&&m| state.position().owner_of(m) == p).count();
        owned as f64 / c.members.len() as f64
    }

    fn targets(state: &GameState, region: &[TerritoryId]) -> Vec<(TerritoryId, TerritoryId)> {
        let me = state.current_player();
        let pos = state.position();
        let mut out = Vec::new();
        for &f in region {
            for &t in state.rules().map.neighbours(f) {
                if pos.owner_of(t) != me {
                    out.push((f, t));
                }
            }
        }
        out
    }

    fn rank(state: &GameState, (f, t): (TerritoryId, TerritoryId)) -> (f64, i64) {
        let pos = state.position();
        (
            Self::continent_share(state, state.current_player(), t),
            pos.armies_on(f) as i64 - pos.armies_on(t) as i64,
        )
    }
}

impl Policy for Clusterer {
    fn next_move(&mut self, state: &GameState) -> Move {
        let me = state.current_player();
        let pos = state.position();
        match state.phase() {
            Phase::Cards | Phase::Placing => cards_then_place(state, || {
                let region = largest_region(state, me);
                let targets = Self::targets(state, &region);
                let territory = match pick_max_by(&targets, |e| Self::rank(state, e)) {
                    Some((f, _)) => f,
                    None => *state.frontier(me).first().expect("a live player has a frontier"),
                };
                Move::Place {
                    territory,
                    count: state.pending_income(),
                }
            }),
            Phase::Attacking => {
                if let Some(mv) = occupy_max(state) {
                    return mv;
                }
                let region = largest_region(state, me);
                let attacks: Vec<_> = Self::targets(state, &region)
                    .into_iter()
                    .filter(|&(f, t)| pos.armies_on(f) >= 2 && force(state, f) > pos.armies_on(t))
                    .collect();
                match pick_max_by(&attacks, |e| Self::rank(state, e)) {
                    Some((from, to)) => {
                        // Rare coin flip stops runaway chains from a thinned edge.
                        if force(state, from) <= pos.armies_on(to) + 1 && self.rng.random_bool(0.5) {
                            return Move::EndAttacks;
                        }
                        Move::Attack { from, to }
                    }
                    None => Move::EndAttacks,
                }
            }
            Phase::Fortifying => fortify_interior_to_front(state).unwrap_or(Move::EndTurn),
            Phase::GameOver => Move::EndTurn,
        }
    }
}

/// Reinforces its weakest continent-border front, attacks only at 2:1.
pub struct Turtle {
    rng: ChaCha8Rng,
    fortified: bool,
}

impl Policy for Turtle {
    fn next_move(&mut self, state: &GameState) -> Move {
        let me = state.current_player();
        let pos = state.position();
        let map = &state.rules().map;
        match state.phase() {
            Phase::Cards | Phase::Placing => {
                self.fortified = false;
                cards_then_place(state, || {
                    let front = state.frontier(me);
                    let borders: Vec<_> = front.iter().copied().filter(|&t| map.is_continent_border(t)).collect();
                    let pool = if borders.is_empty() { &front } else { &borders };
                    let weakest = pool
                        .iter()
                        .map(|&t| pos.armies_on(t))
                        .min()
                        .expect("non-empty frontier");
                    let ties: Vec<_> = pool.iter().copied().filter(|&t| pos.armies_on(t) == weakest).collect();
                    let territory = *ties.choose(&mut self.rng).expect("non-empty");
                    Move::Place {
                        territory,
                        count: state.pending_income().min(3),
                    }
                })
            }
            Phase::Attacking => {
                if let Some(p) = state.pending_occupy() {
                    return Move::Occupy { count: p.min };
                }
                let attacks: Vec<_> = state
                    .legal_attacks()
                    .into_iter()
                    .filter(|&(f, t)| force(state, f) >= 2 * pos.armies_on(t))
                    .collect();
                match pick_max_by(&attacks, |(f, t)| force(state, f) as f64 / pos.armies_on(t) as f64) {
                    Some((from, to)) => Move::Attack { from, to },
                    None => Move::EndAttacks,
                }
            }
            Phase::Fortifying => {
                if self.fortified {
                    return Move::EndTurn;
                }
                self.fortified = true;
                fortify_interior_to_front(state).unwrap_or(Move::EndTurn)
            }
            Phase::GameOver => Move::EndTurn,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{new_game, Rules};
    use std::sync::Arc;

    type MoveFn = Box<dyn FnMut(&GameState) -> Move>;

    fn drive(kind: BotKind, seed: u64, turns: usize, check: impl Fn(&GameState, &Move)) {
        let mut game = new_game(Arc::new(Rules::classic()), 6, 20, seed).unwrap();
        let mut policies: Vec<MoveFn> = (0..6)
            .map(|i| {
                let rng = ChaCha8Rng::seed_from_u64(seed + i);
                let f: MoveFn = match kind {
                    BotKind::Random => {
                        let mut b = RandomBot { rng };
                        Box::new(move |s| b.next_move(s))
                    }
                    BotKind::Aggressor => {
                        let mut b = Aggressor { rng };
                        Box::new(move |s| b.next_move(s))
                    }
                    BotKind::Clusterer => {
                        let mut b = Clusterer { rng };
                        Box::new(move |s| b.next_move(s))
                    }
                    BotKind::Turtle => {
                        let mut b = Turtle { rng, fortified: false };
                        Box::new(move |s| b.next_move(s))
                    }
                };
                f
            })
            .collect();
        let mut done = 0;
        while !game.is_over() && done < turns {
            let p = game.current_player().index();
            let mv = policies[p](&game);
            check(&game, &mv);
            game.apply(&mv)
                .unwrap_or_else(|e| panic!("{kind:?} produced illegal {mv}: {e}"));
            if mv == Move::EndTurn {
                done += 1;
            }
        }
    }

    #[test]
    fn all_bots_play_legal_moves() {
        for kind in BotKind::ALL {
            for seed in 0..3 {
                drive(kind, seed, 120, |_, _| {});
            }
        }
    }

    #[test]
    fn aggressor_needs_superior_force() {
        drive(BotKind::Aggressor, 9, 200, |s, mv| {
            if let Move::Attack { from, to } = *mv {
                assert!(s.position().armies_on(from) - 1 > s.position().armies_on(to));
            }
        });
    }

    #[test]
    fn turtle_attacks_at_two_to_one() {
        drive(BotKind::Turtle, 4, 200, |s, mv| {
            if let Move::Attack { from, to } = *mv {
                assert!(s.position().armies_on(from) > 2 * s.position().armies_on(to));
            }
        });
    }

    #[test]
    fn names_round_trip() {
        for k in BotKind::ALL {
            assert_eq!(BotKind::parse(k.name()), Some(k));
        }
        assert_eq!(BotKind::parse("nope"), None);
        assert_eq!(baseline_bots(0).len(), 4);
    }
}
