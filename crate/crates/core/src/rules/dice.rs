use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Anything that can roll a fair six-sided die.
pub trait DiceSource {
    /// Returns a value in `1..=6`.
    fn roll_die(&mut self) -> u8;
}

/// Seeded stream owned by a match. Dice and card draws both consume it, so
/// a seed plus a move list reproduces a match exactly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameRng(ChaCha8Rng);

impl GameRng {
    pub fn seed_from_u64(seed: u64) -> GameRng {
        GameRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn below(&mut self, n: u32) -> u32 {
        self.0.random_range(0..n)
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}

impl DiceSource for GameRng {
    fn roll_die(&mut self) -> u8 {
        self.0.random_range(1..=6)
    }
}

impl RngCore for GameRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }
}

/// Replays a fixed list of die faces; panics when exhausted.
#[derive(Clone, Debug, Default)]
pub struct ScriptedDice(VecDeque<u8>);

impl ScriptedDice {
    pub fn new(faces: impl IntoIterator<Item = u8>) -> ScriptedDice {
        ScriptedDice(faces.into_iter().collect())
    }

    pub fn remaining(&self) -> usize {
        self.0.len()
    }
}

impl DiceSource for ScriptedDice {
    fn roll_die(&mut self) -> u8 {
        let face = self.0.pop_front().expect("scripted dice exhausted");
        assert!((1..=6).contains(&face), "die face {face} out of range");
        face
    }
}

/// One round of a battle: faces as rolled (unsorted).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiceRound {
    pub attacker: Vec<u8>,
    pub defender: Vec<u8>,
}

impl DiceRound {
    /// Losses `(attacker, defender)` after comparing sorted faces pairwise.
    /// Ties go to the defender.
    pub fn losses(&self) -> (u32, u32) {
        let mut a = self.attacker.clone();
        let mut d = self.defender.clone();
        a.sort_unstable_by(|x, y| y.cmp(x));
        d.sort_unstable_by(|x, y| y.cmp(x));
        let mut lost = (0, 0);
        for (x, y) in a.iter().zip(&d) {
            if x > y {
                lost.1 += 1;
            } else {
                lost.0 += 1;
            }
        }
        lost
    }
}

/// Rolls one round for `attackers` vs `defenders` remaining units.
pub(crate) fn roll_round(attackers: u32, defenders: u32, dice: &mut dyn DiceSource) -> DiceRound {
    let na = attackers.min(3) as usize;
    let nd = defenders.min(2) as usize;
    let attacker = (0..na).map(|_| dice.roll_die()).collect();
    let defender = (0..nd).map(|_| dice.roll_die()).collect();
    DiceRound { attacker, defender }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_favour_defender() {
        let r = DiceRound {
            attacker: vec![6, 3],
            defender: vec![6, 2],
        };
        assert_eq!(r.losses(), (1, 1));
        let r = DiceRound {
            attacker: vec![4],
            defender: vec![4],
        };
        assert_eq!(r.losses(), (1, 0));
    }

    #[test]
    fn sorted_comparison() {
        let r = DiceRound {
            attacker: vec![1, 5, 6],
            defender: vec![4, 5],
        };
        // 6 v 5, 5 v 4
        assert_eq!(r.losses(), (0, 2));
    }

    #[test]
    fn game_rng_is_deterministic() {
        let mut a = GameRng::seed_from_u64(9);
        let mut b = GameRng::seed_from_u64(9);
        let xs: Vec<u8> = (0..50).map(|_| a.roll_die()).collect();
        let ys: Vec<u8> = (0..50).map(|_| b.roll_die()).collect();
        assert_eq!(xs, ys);
        assert!(xs.iter().all(|x| (1..=6).contains(x)));
    }
}
