//! Pruned move generators.

use std::collections::HashSet;

use crate::battle::TableCache;
use crate::rules::{GameState, Move, Phase, TerritoryId};

use super::SearchConfig;

/// `n` values spread evenly over `[lo, hi]`, rounded half up, deduplicated
/// in order. Integer arithmetic, so `.5` cases are exact.
pub fn interpolate(lo: u32, hi: u32, n: u32) -> Vec<u32> {
    if hi <= lo || n <= 1 {
        return vec![hi.max(lo)];
    }
    let span = (hi - lo) as u64;
    let den = 2 * (n as u64 - 1);
    let mut out: Vec<u32> = Vec::with_capacity(n as usize);
    for i in 0..n as u64 {
        let v = lo + ((2 * span * i + (n as u64 - 1)) / den) as u32;
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    out
}

/// Occupation counts after a conquest with `survivors` attackers left.
pub fn gen_occupy_splits(survivors: u32, ga: u32) -> Vec<u32> {
    interpolate(survivors.min(3), survivors, ga)
}

/// Fortification counts for a source with `movable` free armies.
pub fn fortify_counts(movable: u32, gf: u32) -> Vec<u32> {
    if movable == 0 {
        return Vec::new();
    }
    interpolate(1, movable, gf)
}

/// Splits `income` into groups of `gp`, the remainder joining the last group.
pub fn placement_groups(income: u32, gp: u32) -> Vec<u32> {
    let gp = gp.max(1);
    if income == 0 {
        return Vec::new();
    }
    let g = income / gp;
    if g == 0 {
        return vec![income];
    }
    let mut groups = vec![gp; g as usize];
    *groups.last_mut().expect("g >= 1") += income % gp;
    groups
}

fn compositions(n: u32, k: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if k == 1 {
        cur.push(n);
        out.push(cur.clone());
        cur.pop();
        return;
    }
    for first in 0..=n {
        cur.push(first);
        compositions(n - first, k - 1, cur, out);
        cur.pop();
    }
}

fn subsets(items: &[TerritoryId], max: usize) -> Vec<Vec<TerritoryId>> {
    fn rec(
        items: &[TerritoryId],
        start: usize,
        size: usize,
        cur: &mut Vec<TerritoryId>,
        out: &mut Vec<Vec<TerritoryId>>,
    ) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, i + 1, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for size in 1..=max.min(items.len()) {
        rec(items, 0, size, &mut Vec::new(), &mut out);
    }
    out
}

/// Placement bundles for the pending income: whole groups over at most `tp`
/// enemy-bordering territories (any owned territory when none borders an
/// enemy). Each bundle is a list of `Place` moves in territory order.
pub fn gen_place_moves(state: &GameState, cfg: &SearchConfig) -> Vec<Vec<Move>> {
    if !matches!(state.phase(), Phase::Placing | Phase::Cards) || state.pending_income() == 0 {
        return Vec::new();
    }
    let me = state.current_player();
    let mut targets = state.frontier(me);
    if targets.is_empty() {
        targets = state.position().territories_of(me).collect();
    }
    let groups = placement_groups(state.pending_income(), cfg.gp);
    let (last, standard) = groups.split_last().expect("income > 0");
    let n_std = standard.len() as u32;
    let gp = cfg.gp.max(1);

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for set in subsets(&targets, cfg.tp as usize) {
        let k = set.len();
        let mut comps = Vec::new();
        compositions(n_std, k, &mut Vec::new(), &mut comps);
        for comp in &comps {
            for slot in 0..k {
                let alloc: Vec<(TerritoryId, u32)> = set
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| (t, comp[i] * gp + if i == slot { *last } else { 0 }))
                    .collect();
                if alloc.iter().any(|&(_, c)| c == 0) || !seen.insert(alloc.clone()) {
                    continue;
                }
                out.push(
                    alloc
                        .into_iter()
                        .map(|(territory, count)| Move::Place { territory, count })
                        .collect(),
                );
            }
        }
    }
    out
}

/// An attack with the terminal state the model assumes for it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlannedAttack {
    pub from: TerritoryId,
    pub to: TerritoryId,
    pub attacker_survivors: u32,
    pub defender_survivors: u32,
}

/// Legal attacks whose committed force is at least the defender count.
pub fn gen_attack_moves(state: &GameState, cache: &TableCache, risky: f64) -> Vec<PlannedAttack> {
    let pos = state.position();
    state
        .legal_attacks()
        .into_iter()
        .filter_map(|(from, to)| {
            let force = pos.armies_on(from) - 1;
            let def = pos.armies_on(to);
            if force < def {
                return None;
            }
            let (a, d) = cache.select(force, def, risky).ok()?;
            Some(PlannedAttack {
                from,
                to,
                attacker_survivors: a,
                defender_survivors: d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{MapDef, PlayerId, Position, Rules};
    use std::sync::Arc;

    #[test]
    fn occupy_splits() {
        assert_eq!(gen_occupy_splits(10, 3), vec![3, 7, 10]);
        assert_eq!(gen_occupy_splits(3, 3), vec![3]);
        assert_eq!(gen_occupy_splits(4, 3), vec![3, 4]);
        assert_eq!(gen_occupy_splits(1, 3), vec![1]);
        assert_eq!(gen_occupy_splits(2, 3), vec![2]);
    }

    #[test]
    fn groups() {
        assert_eq!(placement_groups(7, 3), vec![3, 4]);
        assert_eq!(placement_groups(6, 3), vec![3, 3]);
        assert_eq!(placement_groups(2, 3), vec![2]);
        assert_eq!(fortify_counts(25, 10), vec![1, 4, 6, 9, 12, 14, 17, 20, 22, 25]);
        assert_eq!(fortify_counts(3, 10), vec![1, 2, 3]);
    }

    /// Player 0 owns 0 and 1, both facing player 1's territory 2; 3 is rear.
    fn placing_state(income_floor: u32, frontier_both: bool) -> GameState {
        let map = MapDef::new(
            "p",
            vec![("c".into(), 0), ("d".into(), 0)],
            vec![("a".into(), 0), ("b".into(), 0), ("x".into(), 1), ("r".into(), 0)],
            &if frontier_both {
                vec![(0, 2), (1, 2), (0, 3), (1, 3)]
            } else {
                vec![(0, 2), (0, 1), (1, 3)]
            },
        )
        .unwrap();
        let mut rules = Rules::new(map);
        rules.income_floor = income_floor;
        let pos = Position {
            players: 2,
            current: PlayerId(0),
            owner: vec![PlayerId(0), PlayerId(0), PlayerId(1), PlayerId(0)],
            armies: vec![2, 2, 2, 2],
            hands: Default::default(),
            alive: [true, true, false, false, false, false],
        };
        GameState::from_position(Arc::new(rules), pos, 0).unwrap()
    }

    fn allocs(bundles: &[Vec<Move>]) -> Vec<Vec<(u16, u32)>> {
        bundles
            .iter()
            .map(|b| {
                b.iter()
                    .map(|m| match m {
                        Move::Place { territory, count } => (territory.0, *count),
                        _ => unreachable!(),
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_border_territory_gets_everything() {
        let s = placing_state(6, false);
        let b = gen_place_moves(&s, &SearchConfig::default());
        assert_eq!(allocs(&b), vec![vec![(0, 6)]]);
    }

    #[test]
    fn two_border_territories() {
        let s = placing_state(6, true);
        let b = gen_place_moves(&s, &SearchConfig::default());
        let mut got = allocs(&b);
        got.sort();
        assert_eq!(got, vec![vec![(0, 3), (1, 3)], vec![(0, 6)], vec![(1, 6)]]);
        for bundle in &b {
            let mut st = s.clone();
            for mv in bundle {
                st.apply(mv).unwrap();
            }
            assert_eq!(st.phase(), Phase::Attacking);
        }
    }

    #[test]
    fn attack_filter() {
        let s = placing_state(3, false);
        let mut st = s.clone();
        st.apply(&Move::Place {
            territory: TerritoryId(0),
            count: 3,
        })
        .unwrap();
        let cache = TableCache::new(10, 10);
        // force 4 vs 2 defenders
        let atk = gen_attack_moves(&st, &cache, 0.3);
        assert_eq!(atk.len(), 1);
        assert_eq!((atk[0].from, atk[0].to), (TerritoryId(0), TerritoryId(2)));
    }
}
