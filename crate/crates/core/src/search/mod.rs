//! Turn search.
//!
//! The agent models its own turn deterministically: every attack is assumed
//! to end in the terminal state picked by the `risky` quantile. A
//! breadth-first search over pruned moves finds the best-scoring turn
//! end-state; the agent then plays up to and including the first attack,
//! lets the real dice decide, and searches again.

mod moves;

use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{submit, Agent, AgentError, Engine};
use crate::battle::TableCache;
use crate::network::Network;
use crate::rules::{cashable_sets, GameState, Move, Phase, PlayerId, Position, Rules};

pub use moves::{
    fortify_counts, gen_attack_moves, gen_occupy_splits, gen_place_moves, interpolate, placement_groups, PlannedAttack,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("army share {share:.3} is below the endgame threshold {threshold}")]
    BelowThreshold { share: f64, threshold: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub risky: f64,
    pub tp: u32,
    pub gp: u32,
    pub ga: u32,
    pub gf: u32,
    /// Wall-clock limit per search, in seconds.
    pub search_time: Option<f64>,
    /// Limit on generated nodes per search.
    pub node_budget: Option<usize>,
    pub endgame_threshold: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            risky: 0.3,
            tp: 2,
            gp: 3,
            ga: 3,
            gf: 10,
            search_time: Some(10.0),
            node_budget: None,
            endgame_threshold: 0.95,
        }
    }
}

impl SearchConfig {
    /// Node-budget mode with no clock: reproducible.
    pub fn with_nodes(nodes: usize) -> SearchConfig {
        SearchConfig {
            search_time: None,
            node_budget: Some(nodes),
            ..SearchConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::Config(m.into()));
        if !(0.0..=1.0).contains(&self.risky) {
            return bad("risky must lie in [0, 1]");
        }
        if self.tp < 2 {
            return bad("tp must be at least 2");
        }
        if self.ga < 3 {
            return bad("ga must be at least 3");
        }
        if self.gp == 0 || self.gf == 0 {
            return bad("gp and gf must be positive");
        }
        if self.search_time.is_some_and(|t| t.is_nan() || t <= 0.0) {
            return bad("search_time must be positive");
        }
        Ok(())
    }
}

/// Scores positions from one player's point of view.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, rules: &Rules, positions: &[&Position], player: PlayerId) -> Vec<f64>;
}

impl Evaluator for Network {
    fn evaluate(&self, rules: &Rules, positions: &[&Position], player: PlayerId) -> Vec<f64> {
        let mut out = Vec::with_capacity(positions.len());
        for chunk in positions.chunks(256) {
            let feats: Vec<_> = chunk.iter().map(|p| self.features(rules, p)).collect();
            let j = self.forward_batch(&feats).expect("features match the network");
            out.extend(j.column(player.index()).iter().copied());
        }
        out
    }
}

impl<F> Evaluator for F
where
    F: Fn(&Rules, &Position, PlayerId) -> f64 + Send + Sync,
{
    fn evaluate(&self, rules: &Rules, positions: &[&Position], player: PlayerId) -> Vec<f64> {
        positions.iter().map(|p| self(rules, p, player)).collect()
    }
}

pub fn army_share(pos: &Position, p: PlayerId) -> f64 {
    pos.armies_of(p) as f64 / pos.total_armies().max(1) as f64
}

pub fn endgame_active(pos: &Position, p: PlayerId, threshold: f64) -> bool {
    army_share(pos, p) >= threshold
}

/// Territories owned plus one.
pub fn endgame_eval(pos: &Position, p: PlayerId, threshold: f64) -> Result<f64, SearchError> {
    let share = army_share(pos, p);
    if share < threshold {
        return Err(SearchError::BelowThreshold { share, threshold });
    }
    Ok(pos.territory_count(p) as f64 + 1.0)
}

/// Scores positions for `me`, switching to the endgame count when the
/// switch is on.
struct Scorer<'a> {
    eval: &'a dyn Evaluator,
    rules: &'a Rules,
    me: PlayerId,
    endgame: bool,
}

impl Scorer<'_> {
    fn score(&self, positions: &[&Position]) -> Vec<f64> {
        if self.endgame {
            positions
                .iter()
                .map(|p| p.territory_count(self.me) as f64 + 1.0)
                .collect()
        } else {
            self.eval.evaluate(self.rules, positions, self.me)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    /// Moves from the root to the chosen end-state, ending with `EndAttacks`
    /// unless the game ends first.
    pub chain: Vec<Move>,
    pub score: f64,
    /// Position the model predicts at the end of the chain.
    pub predicted: Position,
    pub nodes: usize,
    pub evaluated: usize,
    pub depth: usize,
    pub endgame: bool,
}

struct Node {
    state: GameState,
    parent: Option<usize>,
    edge: Vec<Move>,
    chain_len: usize,
}

fn is_end_state(s: &GameState) -> bool {
    match s.phase() {
        Phase::Attacking => s.pending_occupy().is_none(),
        Phase::Fortifying | Phase::GameOver => true,
        Phase::Cards | Phase::Placing => false,
    }
}

fn node_key(s: &GameState) -> u64 {
    let mut h = DefaultHasher::new();
    s.position().hash(&mut h);
    s.phase().hash(&mut h);
    s.pending_income().hash(&mut h);
    s.pending_occupy().hash(&mut h);
    s.conquered_this_turn().hash(&mut h);
    h.finish()
}

fn apply_all(state: &GameState, moves: &[Move]) -> Option<GameState> {
    let mut s = state.clone();
    for mv in moves {
        s.apply(mv).ok()?;
    }
    Some(s)
}

/// Children of a node as `(edge moves, resulting state)`, in generation order.
pub fn expand(state: &GameState, cache: &TableCache, cfg: &SearchConfig) -> Vec<(Vec<Move>, GameState)> {
    let mut out = Vec::new();
    match state.phase() {
        Phase::GameOver | Phase::Fortifying => {}
        Phase::Cards => {
            let hand = state.hand(state.current_player());
            let sets = cashable_sets(hand);
            if hand.must_cash() {
                if let Some(&set) = sets.first() {
                    let mv = vec![Move::Cash(set)];
                    out.extend(apply_all(state, &mv).map(|s| (mv, s)));
                }
            } else {
                for set in sets {
                    let mv = vec![Move::Cash(set)];
                    out.extend(apply_all(state, &mv).map(|s| (mv, s)));
                }
                for bundle in gen_place_moves(state, cfg) {
                    out.extend(apply_all(state, &bundle).map(|s| (bundle, s)));
                }
            }
        }
        Phase::Placing => {
            for bundle in gen_place_moves(state, cfg) {
                out.extend(apply_all(state, &bundle).map(|s| (bundle, s)));
            }
        }
        Phase::Attacking => {
            if let Some(p) = state.pending_occupy() {
                for count in gen_occupy_splits(p.max, cfg.ga).into_iter().filter(|&c| c >= p.min) {
                    let mv = vec![Move::Occupy { count }];
                    out.extend(apply_all(state, &mv).map(|s| (mv, s)));
                }
                return out;
            }
            for atk in gen_attack_moves(state, cache, cfg.risky) {
                if atk.attacker_survivors == 0 {
                    continue;
                }
                let mut after = state.clone();
                if after
                    .impose_attack(atk.from, atk.to, atk.attacker_survivors, atk.defender_survivors)
                    .is_err()
                {
                    continue;
                }
                let attack = Move::Attack {
                    from: atk.from,
                    to: atk.to,
                };
                match after.pending_occupy() {
                    Some(p) => {
                        for count in gen_occupy_splits(p.max, cfg.ga).into_iter().filter(|&c| c >= p.min) {
                            let occ = Move::Occupy { count };
                            let mut s = after.clone();
                            if s.apply(&occ).is_ok() {
                                out.push((vec![attack.clone(), occ], s));
                            }
                        }
                    }
                    None => out.push((vec![attack], after)),
                }
            }
        }
    }
    out
}

/// Breadth-first search over the agent's own turn.
pub fn bfs_search(root: &GameState, eval: &dyn Evaluator, cache: &TableCache, cfg: &SearchConfig) -> SearchResult {
    let start = Instant::now();
    let deadline = cfg.search_time.map(|t| start + Duration::from_secs_f64(t));
    let me = root.current_player();
    let endgame = endgame_active(root.position(), me, cfg.endgame_threshold);
    let rules = Arc::clone(root.rules());
    let scorer = Scorer {
        eval,
        rules: &rules,
        me,
        endgame,
    };

    let mut nodes = vec![Node {
        state: root.clone(),
        parent: None,
        edge: Vec::new(),
        chain_len: 0,
    }];
    let mut seen = HashSet::from([node_key(root)]);
    let mut best: Option<(f64, usize)> = None;
    let mut evaluated = 0usize;
    let mut depth = 0usize;

    let over_budget =
        |n: usize| cfg.node_budget.is_some_and(|b| n >= b) || deadline.is_some_and(|d| Instant::now() >= d);
    let consider = |best: &mut Option<(f64, usize)>, nodes: &[Node], idx: usize, score: f64| {
        let better = match *best {
            None => true,
            Some((s, b)) => score > s || (score == s && nodes[idx].chain_len < nodes[b].chain_len),
        };
        if better {
            *best = Some((score, idx));
        }
    };

    if is_end_state(root) {
        let s = scorer.score(&[root.position()])[0];
        evaluated += 1;
        consider(&mut best, &nodes, 0, s);
    }

    let mut level = vec![0usize];
    'outer: while !level.is_empty() {
        let mut next = Vec::new();
        for &idx in &level {
            if best.is_some() && over_budget(nodes.len()) {
                break;
            }
            for (edge, state) in expand(&nodes[idx].state, cache, cfg) {
                if !seen.insert(node_key(&state)) {
                    continue;
                }
                let chain_len = nodes[idx].chain_len + edge.len();
                nodes.push(Node {
                    state,
                    parent: Some(idx),
                    edge,
                    chain_len,
                });
                next.push(nodes.len() - 1);
            }
        }
        if next.is_empty() {
            break;
        }
        depth += 1;
        let ends: Vec<usize> = next
            .iter()
            .copied()
            .filter(|&i| is_end_state(&nodes[i].state))
            .collect();
        for chunk in ends.chunks(128) {
            if best.is_some() && deadline.is_some_and(|d| Instant::now() >= d) {
                break 'outer;
            }
            let positions: Vec<&Position> = chunk.iter().map(|&i| nodes[i].state.position()).collect();
            let scores = scorer.score(&positions);
            evaluated += chunk.len();
            for (&i, s) in chunk.iter().zip(scores) {
                consider(&mut best, &nodes, i, s);
            }
        }
        if best.is_some() && over_budget(nodes.len()) {
            break;
        }
        level = next;
    }

    let (score, idx) = best.unwrap_or((f64::NEG_INFINITY, 0));
    let mut chain = Vec::new();
    let mut cur = Some(idx);
    while let Some(i) = cur {
        chain.splice(0..0, nodes[i].edge.iter().cloned());
        cur = nodes[i].parent;
    }
    let end = &nodes[idx].state;
    if end.phase() == Phase::Attacking && end.pending_occupy().is_none() {
        chain.push(Move::EndAttacks);
    }
    SearchResult {
        chain,
        score,
        predicted: end.position().clone(),
        nodes: nodes.len(),
        evaluated,
        depth,
        endgame,
    }
}

/// Repeatedly applies the best-scoring fortification until none beats
/// standing still. Counts per source follow [`fortify_counts`].
pub fn greedy_fortify(state: &GameState, eval: &dyn Evaluator, cfg: &SearchConfig) -> Vec<Move> {
    if state.phase() != Phase::Fortifying {
        return Vec::new();
    }
    let me = state.current_player();
    let rules = Arc::clone(state.rules());
    let scorer = Scorer {
        eval,
        rules: &rules,
        me,
        endgame: endgame_active(state.position(), me, cfg.endgame_threshold),
    };
    let mut cur = state.clone();
    let mut chosen = Vec::new();
    let mut baseline = scorer.score(&[cur.position()])[0];
    for _ in 0..cur.rules().map.territory_count() * 4 {
        let mut cands: Vec<(Move, GameState)> = Vec::new();
        for (from, to) in cur.legal_fortify_pairs() {
            for count in fortify_counts(cur.movable(from), cfg.gf) {
                let mv = Move::Fortify { from, to, count };
                if let Ok(s) = cur.apply_move(&mv) {
                    cands.push((mv, s));
                }
            }
        }
        if cands.is_empty() {
            break;
        }
        let positions: Vec<&Position> = cands.iter().map(|(_, s)| s.position()).collect();
        let scores = scorer.score(&positions);
        let (bi, bs) = scores.iter().enumerate().fold(
            (usize::MAX, baseline),
            |(bi, bs), (i, &s)| if s > bs { (i, s) } else { (bi, bs) },
        );
        if bi == usize::MAX {
            break;
        }
        let (mv, s) = cands.swap_remove(bi);
        chosen.push(mv);
        cur = s;
        baseline = bs;
    }
    chosen
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentStats {
    pub turns: usize,
    pub searches: usize,
    pub nodes: usize,
    pub evaluated: usize,
    pub max_depth: usize,
}

/// The search-based player.
pub struct SearchAgent {
    name: String,
    eval: Arc<dyn Evaluator>,
    cache: Arc<TableCache>,
    pub config: SearchConfig,
    pub stats: AgentStats,
}

impl SearchAgent {
    pub fn new(
        name: impl Into<String>,
        eval: Arc<dyn Evaluator>,
        cache: Arc<TableCache>,
        config: SearchConfig,
    ) -> Result<SearchAgent, SearchError> {
        config.validate()?;
        Ok(SearchAgent {
            name: name.into(),
            eval,
            cache,
            config,
            stats: AgentStats::default(),
        })
    }

    pub fn search(&mut self, state: &GameState) -> SearchResult {
        let r = bfs_search(state, self.eval.as_ref(), &self.cache, &self.config);
        self.stats.searches += 1;
        self.stats.nodes += r.nodes;
        self.stats.evaluated += r.evaluated;
        self.stats.max_depth = self.stats.max_depth.max(r.depth);
        r
    }
}

impl Agent for SearchAgent {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn play_turn(&mut self, engine: &mut dyn Engine) -> Result<(), AgentError> {
        let me = engine.state().current_player();
        self.stats.turns += 1;
        loop {
            let state = engine.state().clone();
            if state.is_over() || state.current_player() != me {
                return Ok(());
            }
            if state.phase() == Phase::Fortifying {
                for mv in greedy_fortify(&state, self.eval.as_ref(), &self.config) {
                    submit(engine, &mv)?;
                }
                submit(engine, &Move::EndTurn)?;
                return Ok(());
            }
            let result = self.search(&state);
            if result.chain.is_empty() {
                return Err(AgentError::Other(format!(
                    "search found no move in phase {:?}",
                    state.phase()
                )));
            }
            for mv in &result.chain {
                submit(engine, mv)?;
                if matches!(mv, Move::Attack { .. }) || engine.state().is_over() {
                    break;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{new_game, MapDef, TerritoryId};

    fn armies_eval(_: &Rules, pos: &Position, p: PlayerId) -> f64 {
        pos.territory_count(p) as f64 * 10.0 + army_share(pos, p)
    }

    #[test]
    fn endgame_formula() {
        let rules = Arc::new(Rules::classic());
        let mut pos = new_game(rules, 6, 20, 1).unwrap().position().clone();
        for t in 0..41 {
            pos.owner[t] = PlayerId(0);
            pos.armies[t] = 10;
        }
        pos.owner[41] = PlayerId(1);
        pos.armies[41] = 1;
        assert_eq!(endgame_eval(&pos, PlayerId(0), 0.95).unwrap(), 42.0);
        pos.armies[41] = 30;
        assert!(army_share(&pos, PlayerId(0)) < 0.95);
        assert!(endgame_eval(&pos, PlayerId(0), 0.95).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::default().validate().is_ok());
        let bad = SearchConfig {
            tp: 1,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SearchConfig {
            ga: 2,
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    /// Player 0 on territory 0 with a big stack next to a lone defender.
    fn advantage() -> GameState {
        let map = MapDef::new(
            "adv",
            vec![("c".into(), 0)],
            (0..3).map(|i| (format!("t{i}"), 0)).collect(),
            &[(0, 1), (1, 2)],
        )
        .unwrap();
        let pos = Position {
            players: 2,
            current: PlayerId(0),
            owner: vec![PlayerId(0), PlayerId(1), PlayerId(1)],
            armies: vec![8, 1, 5],
            hands: Default::default(),
            alive: [true, true, false, false, false, false],
        };
        GameState::from_position(Arc::new(Rules::new(map)), pos, 0).unwrap()
    }

    #[test]
    fn search_takes_undefended_territory() {
        let s = advantage();
        let cache = TableCache::new(20, 20);
        let r = bfs_search(&s, &armies_eval, &cache, &SearchConfig::with_nodes(10_000));
        assert!(r
            .chain
            .iter()
            .any(|m| matches!(m, Move::Attack { to: TerritoryId(1), .. })));
        // Wiping out player 1 ends the game, so no EndAttacks is appended.
        assert_eq!(r.predicted.winner(), Some(PlayerId(0)));
        assert!(matches!(r.chain.last(), Some(Move::Attack { .. })));
        // The chain replays on the engine when attacks are imposed as modelled.
        let mut e = s.clone();
        let mut i = 0;
        while i < r.chain.len() {
            match r.chain[i] {
                Move::Attack { from, to } => {
                    let f = e.position().armies_on(from) - 1;
                    let d = e.position().armies_on(to);
                    let (a, dd) = cache.select(f, d, 0.3).unwrap();
                    e.impose_attack(from, to, a, dd).unwrap();
                }
                ref mv => {
                    e.apply(mv).unwrap();
                }
            }
            i += 1;
        }
        assert_eq!(e.position(), &r.predicted);
    }

    #[test]
    fn tiny_budget_passes_through() {
        let s = advantage();
        let cache = TableCache::new(20, 20);
        let r = bfs_search(&s, &armies_eval, &cache, &SearchConfig::with_nodes(1));
        assert!(r.chain.iter().all(|m| !matches!(m, Move::Attack { .. })));
        assert!(matches!(r.chain[0], Move::Place { .. }));
        assert_eq!(r.chain.last(), Some(&Move::EndAttacks));
    }

    #[test]
    fn node_budget_is_deterministic() {
        let rules = Arc::new(Rules::classic());
        let s = new_game(rules.clone(), 6, 20, 7).unwrap();
        let net = Network::init(&rules.map, 3);
        let cache = TableCache::default();
        let cfg = SearchConfig::with_nodes(400);
        let a = bfs_search(&s, &net, &cache, &cfg);
        let b = bfs_search(&s, &net, &cache, &cfg);
        assert_eq!(a, b);
        assert!(a.nodes >= 400 || a.depth > 0);
    }

    #[test]
    fn fortify_moves_toward_front() {
        // 0 (rear, 11 armies) - 1 (front, 1 army) - 2 (enemy)
        let map = MapDef::new(
            "f",
            vec![("c".into(), 0)],
            (0..3).map(|i| (format!("t{i}"), 0)).collect(),
            &[(0, 1), (1, 2)],
        )
        .unwrap();
        let pos = Position {
            players: 2,
            current: PlayerId(0),
            owner: vec![PlayerId(0), PlayerId(0), PlayerId(1)],
            armies: vec![11, 1, 3],
            hands: Default::default(),
            alive: [true, true, false, false, false, false],
        };
        let mut s = GameState::from_position(Arc::new(Rules::new(map)), pos, 0).unwrap();
        s.apply(&Move::Place {
            territory: TerritoryId(1),
            count: 3,
        })
        .unwrap();
        s.apply(&Move::EndAttacks).unwrap();
        let front = |_: &Rules, pos: &Position, _: PlayerId| pos.armies_on(TerritoryId(1)) as f64;
        let moves = greedy_fortify(&s, &front, &SearchConfig::default());
        assert_eq!(
            moves,
            vec![Move::Fortify {
                from: TerritoryId(0),
                to: TerritoryId(1),
                count: 10
            }]
        );
        let flat = |_: &Rules, _: &Position, _: PlayerId| 0.0;
        assert!(greedy_fortify(&s, &flat, &SearchConfig::default()).is_empty());
    }

    #[test]
    fn agent_plays_turns_on_engine() {
        let rules = Arc::new(Rules::classic());
        let mut game = new_game(rules.clone(), 6, 20, 11).unwrap();
        let net: Arc<dyn Evaluator> = Arc::new(Network::init(&rules.map, 5));
        let mut agent =
            SearchAgent::new("s", net, Arc::new(TableCache::default()), SearchConfig::with_nodes(300)).unwrap();
        for _ in 0..6 {
            let me = game.current_player();
            agent.play_turn(&mut game).unwrap();
            assert!(game.is_over() || game.current_player() != me);
        }
        assert!(agent.stats.searches >= 6);
    }
}
