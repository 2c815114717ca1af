//! Network inputs for a turn end-state.
//!
//! Global layout ([`GLOBAL_DIM`] = 72):
//!
//! | offset | width | content |
//! |---|---|---|
//! | 0 | 6 | current player one-hot |
//! | 6 | 6 x 5 | per player: army fraction, income fraction, territory fraction, card count, defence |
//! | 36 | 6 x 6 | per continent, per player: share of the continent's armies |
//!
//! Board rows ([`BOARD_DIM`] = 14): owner one-hot (6), army fraction (1),
//! continent one-hot (6), inter-continent border flag (1).

use std::collections::VecDeque;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{PlayerId, Position, Rules, TerritoryId, MAX_CONTINENTS, MAX_PLAYERS};

pub const PER_PLAYER: usize = 5;
pub const PLAYER_BLOCK: usize = MAX_PLAYERS;
pub const CONTINENT_BLOCK: usize = PLAYER_BLOCK + MAX_PLAYERS * PER_PLAYER;
pub const GLOBAL_DIM: usize = CONTINENT_BLOCK + MAX_CONTINENTS * MAX_PLAYERS;

pub const BOARD_OWNER: usize = 0;
pub const BOARD_ARMY: usize = MAX_PLAYERS;
pub const BOARD_CONTINENT: usize = BOARD_ARMY + 1;
pub const BOARD_BORDER: usize = BOARD_CONTINENT + MAX_CONTINENTS;
pub const BOARD_DIM: usize = BOARD_BORDER + 1;

pub const DEFAULT_DEFENCE_CAP: f64 = 0.2;
pub const DEFAULT_CARD_CAP: u32 = 8;
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("player {0} is not alive")]
    DeadPlayer(PlayerId),
    #[error("cannot fit a normalizer on an empty dataset")]
    EmptyDataset,
    #[error("feature shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub defence_cap: f64,
    pub card_cap: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            defence_cap: DEFAULT_DEFENCE_CAP,
            card_cap: DEFAULT_CARD_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub global: Array1<f64>,
    /// One row per territory.
    pub board: Array2<f64>,
}

pub fn extract(rules: &Rules, pos: &Position, cfg: &FeatureConfig) -> FeatureSet {
    FeatureSet {
        global: extract_global(rules, pos, cfg),
        board: extract_board(rules, pos),
    }
}

pub fn extract_global(rules: &Rules, pos: &Position, cfg: &FeatureConfig) -> Array1<f64> {
    let map = &rules.map;
    let mut g = Array1::zeros(GLOBAL_DIM);
    g[pos.current.index()] = 1.0;

    let total_armies = pos.total_armies().max(1) as f64;
    let n_terr = map.territory_count() as f64;
    let alive = |p: usize| p < pos.players as usize && pos.alive[p];
    let incomes: Vec<u32> = (0..MAX_PLAYERS)
        .map(|p| {
            if alive(p) {
                pos.income_unchecked(rules, PlayerId(p as u8))
            } else {
                0
            }
        })
        .collect();
    let income_sum = incomes.iter().sum::<u32>().max(1) as f64;

    for p in (0..MAX_PLAYERS).filter(|&p| alive(p)) {
        let id = PlayerId(p as u8);
        let base = PLAYER_BLOCK + p * PER_PLAYER;
        g[base] = pos.armies_of(id) as f64 / total_armies;
        g[base + 1] = incomes[p] as f64 / income_sum;
        g[base + 2] = pos.territory_count(id) as f64 / n_terr;
        g[base + 3] = pos.hands[p].len().min(cfg.card_cap) as f64;
        g[base + 4] = defence_value(rules, pos, id, cfg.defence_cap).unwrap_or(0.0);
    }

    for c in map.continents() {
        let mut by_player = [0u32; MAX_PLAYERS];
        for &t in &c.members {
            by_player[pos.owner_of(t).index()] += pos.armies_on(t);
        }
        let sum: u32 = by_player.iter().sum();
        if sum == 0 {
            continue;
        }
        let base = CONTINENT_BLOCK + c.id.index() * MAX_PLAYERS;
        for (p, &a) in by_player.iter().enumerate() {
            g[base + p] = a as f64 / sum as f64;
        }
    }
    g
}

pub fn extract_board(rules: &Rules, pos: &Position) -> Array2<f64> {
    let map = &rules.map;
    let total = pos.total_armies().max(1) as f64;
    let mut b = Array2::zeros((map.territory_count(), BOARD_DIM));
    for t in map.territory_ids() {
        let mut row = b.row_mut(t.index());
        row[BOARD_OWNER + pos.owner_of(t).index()] = 1.0;
        row[BOARD_ARMY] = pos.armies_on(t) as f64 / total;
        row[BOARD_CONTINENT + map.continent_of(t).index()] = 1.0;
        if map.is_continent_border(t) {
            row[BOARD_BORDER] = 1.0;
        }
    }
    b
}

/// Garrison list behind the defence feature, ascending.
///
/// For every border territory of every continent the player owns, the owned
/// region reachable from it inside the continent is searched, and its
/// weakest territory touching an enemy is recorded (ties to the lowest id).
/// A continent with several border territories therefore contributes
/// several entries.
pub fn defence_list(rules: &Rules, pos: &Position, p: PlayerId) -> Vec<u32> {
    let map = &rules.map;
    let mut list = Vec::new();
    for c in map.continents() {
        if !pos.owns_continent(rules, p, c.id) {
            continue;
        }
        for &start in c.members.iter().filter(|&&t| map.is_continent_border(t)) {
            let mut seen = vec![false; map.territory_count()];
            let mut queue = VecDeque::from([start]);
            seen[start.index()] = true;
            let mut weakest: Option<TerritoryId> = None;
            while let Some(t) = queue.pop_front() {
                let exposed = map.neighbours(t).iter().any(|&n| pos.owner_of(n) != p);
                if exposed {
                    let better = match weakest {
                        None => true,
                        Some(w) => (pos.armies_on(t), t) < (pos.armies_on(w), w),
                    };
                    if better {
                        weakest = Some(t);
                    }
                }
                for &n in map.neighbours(t) {
                    if !seen[n.index()] && map.continent_of(n) == c.id && pos.owner_of(n) == p {
                        seen[n.index()] = true;
                        queue.push_back(n);
                    }
                }
            }
            if let Some(w) = weakest {
                list.push(pos.armies_on(w));
            }
        }
    }
    list.sort_unstable();
    list
}

/// Weighted mean of [`defence_list`] (weights `n, n-1, .., 1`, largest on the
/// smallest garrison) over total board armies, capped at `cap`.
pub fn defence_value(rules: &Rules, pos: &Position, p: PlayerId, cap: f64) -> Result<f64, FeatureError> {
    if !pos.alive.get(p.index()).copied().unwrap_or(false) {
        return Err(FeatureError::DeadPlayer(p));
    }
    let list = defence_list(rules, pos, p);
    if list.is_empty() {
        return Ok(0.0);
    }
    let n = list.len();
    let (num, den) = list.iter().enumerate().fold((0.0, 0.0), |(num, den), (i, &a)| {
        let w = (n - i) as f64;
        (num + w * a as f64, den + w)
    });
    let total = pos.total_armies().max(1) as f64;
    Ok((num / den / total).min(cap))
}

fn global_one_hot(i: usize) -> bool {
    i < PLAYER_BLOCK
}

fn board_one_hot(i: usize) -> bool {
    i < BOARD_ARMY || (BOARD_CONTINENT..BOARD_BORDER).contains(&i)
}

/// Column-wise standardisation fitted on training features. One-hot columns
/// carry mean 0 and std 1 so they pass through unchanged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub global_mean: Vec<f64>,
    pub global_std: Vec<f64>,
    pub board_mean: Vec<f64>,
    pub board_std: Vec<f64>,
}

impl Normalizer {
    pub fn identity() -> Normalizer {
        Normalizer {
            global_mean: vec![0.0; GLOBAL_DIM],
            global_std: vec![1.0; GLOBAL_DIM],
            board_mean: vec![0.0; BOARD_DIM],
            board_std: vec![1.0; BOARD_DIM],
        }
    }

    /// Board statistics are pooled over every territory row.
    pub fn fit<'a>(data: impl IntoIterator<Item = &'a FeatureSet>) -> Result<Normalizer, FeatureError> {
        let mut g = Moments::new(GLOBAL_DIM);
        let mut b = Moments::new(BOARD_DIM);
        for fs in data {
            check_shape(fs)?;
            g.push(fs.global.view());
            for row in fs.board.axis_iter(Axis(0)) {
                b.push(row);
            }
        }
        if g.n == 0 {
            return Err(FeatureError::EmptyDataset);
        }
        let (global_mean, global_std) = g.finish(global_one_hot);
        let (board_mean, board_std) = b.finish(board_one_hot);
        Ok(Normalizer {
            global_mean,
            global_std,
            board_mean,
            board_std,
        })
    }

    pub fn apply(&self, fs: &FeatureSet) -> FeatureSet {
        let mut out = fs.clone();
        self.apply_in_place(&mut out);
        out
    }

    pub fn apply_in_place(&self, fs: &mut FeatureSet) {
        for (i, x) in fs.global.iter_mut().enumerate() {
            *x = (*x - self.global_mean[i]) / self.global_std[i];
        }
        for mut row in fs.board.axis_iter_mut(Axis(0)) {
            for (i, x) in row.iter_mut().enumerate() {
                *x = (*x - self.board_mean[i]) / self.board_std[i];
            }
        }
    }
}

fn check_shape(fs: &FeatureSet) -> Result<(), FeatureError> {
    if fs.global.len() != GLOBAL_DIM || fs.board.ncols() != BOARD_DIM {
        return Err(FeatureError::Shape {
            expected: format!("global {GLOBAL_DIM}, board _ x {BOARD_DIM}"),
            got: format!("global {}, board {:?}", fs.global.len(), fs.board.shape()),
        });
    }
    Ok(())
}

struct Moments {
    n: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Moments {
        Moments {
            n: 0,
            sum: vec![0.0; dim],
            sq: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: ArrayView1<f64>) {
        self.n += 1;
        for (i, &v) in x.iter().enumerate() {
            self.sum[i] += v;
            self.sq[i] += v * v;
        }
    }

    fn finish(&self, one_hot: fn(usize) -> bool) -> (Vec<f64>, Vec<f64>) {
        let n = self.n.max(1) as f64;
        (0..self.sum.len())
            .map(|i| {
                if one_hot(i) {
                    return (0.0, 1.0);
                }
                let mean = self.sum[i] / n;
                let var = (self.sq[i] / n - mean * mean).max(0.0);
                (mean, var.sqrt().max(STD_FLOOR))
            })
            .unzip()
    }
}

/// Stacks board matrices of several positions for batched evaluation.
pub fn stack_boards(sets: &[FeatureSet]) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = sets.iter().map(|f| f.board.view()).collect();
    ndarray::concatenate(Axis(0), &views).unwrap_or_else(|_| Array2::zeros((0, BOARD_DIM)))
}

/// Player block `[army, income, territory, cards, defence]` of a global vector.
pub fn player_block(global: &Array1<f64>, p: PlayerId) -> ArrayView1<'_, f64> {
    let base = PLAYER_BLOCK + p.index() * PER_PLAYER;
    global.slice(s![base..base + PER_PLAYER])
}
