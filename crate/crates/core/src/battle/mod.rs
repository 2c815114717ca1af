//! Exact battle model.
//!
//! A battle commits every army but one from the attacking territory and runs
//! until one side is exhausted. [`build_terminal_table`] returns the
//! distribution over those terminal states, ordered from best for the
//! defender to best for the attacker, and [`select_terminal`] picks the
//! quantile the search assumes will happen.
//!
//! Tables are generic over [`Probability`]: `f64` for play, [`BigRational`]
//! for exact checks.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Debug;
use std::ops::{Add, Mul};
use std::sync::{Arc, RwLock};

use num_bigint::BigInt;
pub use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BattleError {
    #[error("dice counts ({0}, {1}) out of range: attacker 1..=3, defender 1..=2")]
    DiceOutOfRange(u32, u32),
    #[error("battle needs at least one army per side, got ({0}, {1})")]
    EmptyForce(u32, u32),
    #[error("terminal table is empty")]
    EmptyTable,
    #[error("risky must lie in [0, 1], got {0}")]
    RiskyOutOfRange(f64),
}

/// Numeric type a table is computed in.
pub trait Probability:
    Clone + Debug + PartialEq + Zero + One + Add<Output = Self> + Mul<Output = Self> + Send + Sync
{
    fn ratio(num: u64, den: u64) -> Self;
    fn to_f64(&self) -> f64;
}

impl Probability for f64 {
    fn ratio(num: u64, den: u64) -> f64 {
        num as f64 / den as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Probability for BigRational {
    fn ratio(num: u64, den: u64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// One loss pair of a single round, with its exact probability `count / total`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct DiceOutcome {
    pub attacker_losses: u32,
    pub defender_losses: u32,
    pub count: u64,
    pub total: u64,
}

impl DiceOutcome {
    pub fn probability<P: Probability>(&self) -> P {
        P::ratio(self.count, self.total)
    }

    pub fn exact(&self) -> BigRational {
        self.probability()
    }
}

/// Loss distribution of one round by full enumeration of the
/// `6^(attacker_dice + defender_dice)` equiprobable rolls. Outcomes are
/// ordered by attacker losses descending.
pub fn dice_distribution(attacker_dice: u32, defender_dice: u32) -> Result<Vec<DiceOutcome>, BattleError> {
    if !(1..=3).contains(&attacker_dice) || !(1..=2).contains(&defender_dice) {
        return Err(BattleError::DiceOutOfRange(attacker_dice, defender_dice));
    }
    let n = attacker_dice + defender_dice;
    let total = 6u64.pow(n);
    let pairs = attacker_dice.min(defender_dice);
    let mut counts = vec![0u64; pairs as usize + 1];
    let mut faces = vec![0u8; n as usize];
    for code in 0..total {
        let mut c = code;
        for f in faces.iter_mut() {
            *f = (c % 6) as u8 + 1;
            c /= 6;
        }
        let (att, def) = faces.split_at_mut(attacker_dice as usize);
        att.sort_unstable_by(|x, y| y.cmp(x));
        def.sort_unstable_by(|x, y| y.cmp(x));
        let att_lost = att.iter().zip(def.iter()).filter(|(a, d)| a <= d).count();
        counts[att_lost] += 1;
    }
    Ok((0..=pairs)
        .rev()
        .map(|att_lost| DiceOutcome {
            attacker_losses: att_lost,
            defender_losses: pairs - att_lost,
            count: counts[att_lost as usize],
            total,
        })
        .collect())
}

/// Per-round distributions for every dice pairing, indexed `[a-1][d-1]`.
fn round_table() -> &'static [[Vec<DiceOutcome>; 2]; 3] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[[Vec<DiceOutcome>; 2]; 3]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let f = |a, d| dice_distribution(a, d).expect("in range");
        [[f(1, 1), f(1, 2)], [f(2, 1), f(2, 2)], [f(3, 1), f(3, 2)]]
    })
}

/// Outcomes of one round fought by `a` attackers against `d` defenders.
pub fn round_outcomes(a: u32, d: u32) -> &'static [DiceOutcome] {
    &round_table()[a.clamp(1, 3) as usize - 1][d.clamp(1, 2) as usize - 1]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TerminalEntry<P = f64> {
    pub attackers: u32,
    pub defenders: u32,
    pub p: P,
}

impl<P> TerminalEntry<P> {
    pub fn conquered(&self) -> bool {
        self.defenders == 0
    }
}

/// Terminal states of an `A` vs `D` battle, best for the defender first:
/// `(0, D) .. (0, 1)` then `(1, 0) .. (A, 0)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TerminalTable<P = f64> {
    pub attackers: u32,
    pub defenders: u32,
    pub entries: Vec<TerminalEntry<P>>,
}

impl<P: Probability> TerminalTable<P> {
    pub fn total(&self) -> P {
        self.entries.iter().fold(P::zero(), |acc, e| acc + e.p.clone())
    }

    pub fn conquest_probability(&self) -> P {
        self.entries
            .iter()
            .filter(|e| e.conquered())
            .fold(P::zero(), |acc, e| acc + e.p.clone())
    }

    pub fn to_f64(&self) -> TerminalTable<f64> {
        TerminalTable {
            attackers: self.attackers,
            defenders: self.defenders,
            entries: self
                .entries
                .iter()
                .map(|e| TerminalEntry {
                    attackers: e.attackers,
                    defenders: e.defenders,
                    p: e.p.to_f64(),
                })
                .collect(),
        }
    }

    /// Position of the terminal `(a, d)` in the table order.
    pub fn index_of(&self, a: u32, d: u32) -> Option<usize> {
        match (a, d) {
            (0, d) if (1..=self.defenders).contains(&d) => Some((self.defenders - d) as usize),
            (a, 0) if (1..=self.attackers).contains(&a) => Some((self.defenders + a - 1) as usize),
            _ => None,
        }
    }
}

/// Expands the battle tree one level at a time. Non-terminal children of the
/// current level with equal `(a, d)` are merged; terminal children are
/// accumulated into the result list.
pub fn build_terminal_table<P: Probability>(attackers: u32, defenders: u32) -> Result<TerminalTable<P>, BattleError> {
    if attackers == 0 || defenders == 0 {
        return Err(BattleError::EmptyForce(attackers, defenders));
    }
    let mut entries: Vec<TerminalEntry<P>> = (0..defenders)
        .map(|i| (0, defenders - i))
        .chain((1..=attackers).map(|a| (a, 0)))
        .map(|(a, d)| TerminalEntry {
            attackers: a,
            defenders: d,
            p: P::zero(),
        })
        .collect();
    let table_index = |a: u32, d: u32| {
        if a == 0 {
            (defenders - d) as usize
        } else {
            (defenders + a - 1) as usize
        }
    };

    let mut leaves: BTreeMap<(u32, u32), P> = BTreeMap::new();
    leaves.insert((attackers, defenders), P::one());
    while !leaves.is_empty() {
        let mut next: BTreeMap<(u32, u32), P> = BTreeMap::new();
        for ((a, d), p) in leaves {
            for o in round_outcomes(a, d) {
                let child = (a - o.attacker_losses, d - o.defender_losses);
                let cp = p.clone() * o.probability::<P>();
                if child.0 == 0 || child.1 == 0 {
                    let e = &mut entries[table_index(child.0, child.1)];
                    e.p = e.p.clone() + cp;
                } else {
                    let slot = next.entry(child).or_insert_with(P::zero);
                    *slot = slot.clone() + cp;
                }
            }
        }
        leaves = next;
    }
    Ok(TerminalTable {
        attackers,
        defenders,
        entries,
    })
}

/// Index of the terminal state the model assumes: the smallest `k` whose
/// prefix sum reaches `risky`. Falls back to the last entry with positive
/// probability when rounding keeps the running sum below `risky`.
pub fn select_index<P: Probability>(table: &TerminalTable<P>, risky: f64) -> Result<usize, BattleError> {
    if !(0.0..=1.0).contains(&risky) {
        return Err(BattleError::RiskyOutOfRange(risky));
    }
    if table.entries.is_empty() {
        return Err(BattleError::EmptyTable);
    }
    let mut prefix = 0.0;
    let mut last_positive = 0;
    for (k, e) in table.entries.iter().enumerate() {
        let p = e.p.to_f64();
        prefix += p;
        if p > 0.0 {
            last_positive = k;
        }
        if prefix >= risky {
            return Ok(k);
        }
    }
    Ok(last_positive)
}

pub fn select_terminal<P: Probability>(table: &TerminalTable<P>, risky: f64) -> Result<&TerminalEntry<P>, BattleError> {
    select_index(table, risky).map(|k| &table.entries[k])
}

pub const DEFAULT_CACHE_CAP: u32 = 50;

/// Shared memo of `f64` tables. Pairs within the cap can be built up front
/// with [`TableCache::warm`]; anything else is built on first use.
#[derive(Debug)]
pub struct TableCache {
    cap_attackers: u32,
    cap_defenders: u32,
    tables: RwLock<HashMap<(u32, u32), Arc<TerminalTable>>>,
}

impl Default for TableCache {
    fn default() -> Self {
        TableCache::new(DEFAULT_CACHE_CAP, DEFAULT_CACHE_CAP)
    }
}

impl TableCache {
    pub fn new(cap_attackers: u32, cap_defenders: u32) -> TableCache {
        TableCache {
            cap_attackers: cap_attackers.max(1),
            cap_defenders: cap_defenders.max(1),
            tables: RwLock::new(HashMap::new()),
        }
    }

    pub fn caps(&self) -> (u32, u32) {
        (self.cap_attackers, self.cap_defenders)
    }

    /// Builds every table inside the cap.
    pub fn warm(&self) {
        let missing: Vec<(u32, u32)> = {
            let tables = self.tables.read().expect("cache lock");
            (1..=self.cap_attackers)
                .flat_map(|a| (1..=self.cap_defenders).map(move |d| (a, d)))
                .filter(|k| !tables.contains_key(k))
                .collect()
        };
        let built: Vec<_> = missing
            .into_par_iter()
            .map(|(a, d)| ((a, d), Arc::new(build_terminal_table(a, d).expect("non-empty"))))
            .collect();
        let mut tables = self.tables.write().expect("cache lock");
        for (k, t) in built {
            tables.entry(k).or_insert(t);
        }
    }

    pub fn len(&self) -> usize {
        self.tables.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, attackers: u32, defenders: u32) -> Result<Arc<TerminalTable>, BattleError> {
        if let Some(t) = self.tables.read().expect("cache lock").get(&(attackers, defenders)) {
            return Ok(Arc::clone(t));
        }
        let built = Arc::new(build_terminal_table(attackers, defenders)?);
        let mut tables = self.tables.write().expect("cache lock");
        Ok(Arc::clone(tables.entry((attackers, defenders)).or_insert(built)))
    }

    /// Terminal `(attacker_survivors, defender_survivors)` at the given risk.
    pub fn select(&self, attackers: u32, defenders: u32, risky: f64) -> Result<(u32, u32), BattleError> {
        let t = self.get(attackers, defenders)?;
        let e = select_terminal(&t, risky)?;
        Ok((e.attackers, e.defenders))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    /// Full tree, no merging, recursion per dice outcome.
    fn unmerged(a: u32, d: u32, p: BigRational, out: &mut HashMap<(u32, u32), BigRational>) {
        if a == 0 || d == 0 {
            let slot = out.entry((a, d)).or_insert_with(BigRational::zero);
            *slot = slot.clone() + p;
            return;
        }
        for o in round_outcomes(a, d) {
            unmerged(a - o.attacker_losses, d - o.defender_losses, p.clone() * o.exact(), out);
        }
    }

    #[test]
    fn dice_spot_values() {
        let one = dice_distribution(1, 1).unwrap();
        assert_eq!((one[0].attacker_losses, one[0].count, one[0].total), (1, 21, 36));
        assert_eq!((one[1].defender_losses, one[1].count), (1, 15));
        let tt = dice_distribution(3, 2).unwrap();
        let counts: Vec<_> = tt.iter().map(|o| (o.attacker_losses, o.count)).collect();
        assert_eq!(counts, vec![(2, 2275), (1, 2611), (0, 2890)]);
        let to = dice_distribution(3, 1).unwrap();
        assert_eq!(to.iter().map(|o| o.count).collect::<Vec<_>>(), vec![441, 855]);
        assert!(dice_distribution(4, 1).is_err());
        assert!(dice_distribution(1, 0).is_err());
    }

    #[test]
    fn one_v_one_table() {
        let t = build_terminal_table::<BigRational>(1, 1).unwrap();
        assert_eq!(t.entries[0].p, q(21, 36));
        assert_eq!(t.entries[1].p, q(15, 36));
        assert_eq!(select_terminal(&t, 0.5).unwrap().defenders, 1);
        assert_eq!(select_terminal(&t, 0.7).unwrap().attackers, 1);
        assert_eq!(select_index(&t, 0.0).unwrap(), 0);
    }

    #[test]
    fn merged_equals_unmerged_small() {
        for a in 1..=4 {
            for d in 1..=4 {
                let t = build_terminal_table::<BigRational>(a, d).unwrap();
                let mut oracle = HashMap::new();
                unmerged(a, d, BigRational::one(), &mut oracle);
                for e in &t.entries {
                    let want = oracle
                        .get(&(e.attackers, e.defenders))
                        .cloned()
                        .unwrap_or_else(BigRational::zero);
                    assert_eq!(e.p, want, "({a},{d}) entry {:?}", (e.attackers, e.defenders));
                }
                assert_eq!(t.total(), BigRational::one());
            }
        }
    }

    #[test]
    fn ordering_matches_layout() {
        let t = build_terminal_table::<f64>(3, 2).unwrap();
        let keys: Vec<_> = t.entries.iter().map(|e| (e.attackers, e.defenders)).collect();
        assert_eq!(keys, vec![(0, 2), (0, 1), (1, 0), (2, 0), (3, 0)]);
        for (k, &(a, d)) in keys.iter().enumerate() {
            assert_eq!(t.index_of(a, d), Some(k));
        }
        assert_eq!(t.index_of(1, 1), None);
    }

    #[test]
    fn cache_is_transparent_beyond_cap() {
        let cache = TableCache::new(4, 4);
        cache.warm();
        assert_eq!(cache.len(), 16);
        assert_eq!(*cache.get(3, 2).unwrap(), build_terminal_table(3, 2).unwrap());
        let far = cache.get(31, 2).unwrap();
        assert!((far.total() - 1.0).abs() < 1e-12);
        assert!(Arc::ptr_eq(&far, &cache.get(31, 2).unwrap()));
        assert_eq!(cache.len(), 17);
    }

    #[test]
    fn conquest_dominance() {
        let cache = TableCache::new(12, 12);
        for a in 1..=12 {
            for d in 1..=12 {
                let p = cache.get(a, d).unwrap().conquest_probability();
                if a < 12 {
                    assert!(cache.get(a + 1, d).unwrap().conquest_probability() >= p - 1e-12);
                }
                if d < 12 {
                    assert!(cache.get(a, d + 1).unwrap().conquest_probability() <= p + 1e-12);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn table_sums_to_one(a in 1u32..40, d in 1u32..40) {
            let t = build_terminal_table::<f64>(a, d).unwrap();
            prop_assert!((t.total() - 1.0).abs() < 1e-12);
            prop_assert!(t.entries.iter().all(|e| (e.attackers == 0) != (e.defenders == 0)));
        }

        #[test]
        fn selection_monotone_in_risky(a in 1u32..20, d in 1u32..20, r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
            let t = build_terminal_table::<f64>(a, d).unwrap();
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(select_index(&t, lo).unwrap() <= select_index(&t, hi).unwrap());
        }
    }
}
