use serde::{Deserialize, Serialize};

/// Armies granted by every cash-in (static 5-5-5 sequence).
pub const CASH_VALUE: u32 = 5;

/// A hand this size or larger must be cashed before placing.
pub const FORCED_CASH_HAND: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Card {
    Infantry,
    Cavalry,
    Artillery,
    Wild,
}

impl Card {
    pub const ALL: [Card; 4] = [Card::Infantry, Card::Cavalry, Card::Artillery, Card::Wild];

    fn slot(self) -> usize {
        self as usize
    }

    /// Maps a uniform draw in `0..44` onto the classic deck: 14 of each
    /// troop type and 2 wilds.
    pub fn from_deck_draw(x: u32) -> Card {
        match x {
            0..=1 => Card::Wild,
            _ => Card::ALL[((x - 2) / 14) as usize],
        }
    }
}

/// Card armies for any cash, independent of how many sets were cashed before.
pub fn cash_value() -> u32 {
    CASH_VALUE
}

/// Multiset of cards, stored as counts per card type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hand {
    counts: [u8; 4],
}

impl Hand {
    pub fn new() -> Hand {
        Hand::default()
    }

    pub fn from_cards(cards: &[Card]) -> Hand {
        let mut h = Hand::new();
        for &c in cards {
            h.add(c);
        }
        h
    }

    pub fn len(&self) -> u32 {
        self.counts.iter().map(|&c| c as u32).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, card: Card) -> u8 {
        self.counts[card.slot()]
    }

    pub fn add(&mut self, card: Card) {
        self.counts[card.slot()] += 1;
    }

    pub fn merge(&mut self, other: &Hand) {
        for i in 0..4 {
            self.counts[i] += other.counts[i];
        }
    }

    pub fn contains(&self, set: &[Card; 3]) -> bool {
        let need = Hand::from_cards(set);
        (0..4).all(|i| self.counts[i] >= need.counts[i])
    }

    /// Removes `set` if present. Returns false (and leaves the hand untouched)
    /// otherwise.
    pub fn remove(&mut self, set: &[Card; 3]) -> bool {
        if !self.contains(set) {
            return false;
        }
        for &c in set {
            self.counts[c.slot()] -= 1;
        }
        true
    }

    pub fn must_cash(&self) -> bool {
        self.len() >= FORCED_CASH_HAND
    }

    pub fn cards(&self) -> Vec<Card> {
        Card::ALL
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c, self.count(c) as usize))
            .collect()
    }
}

/// Three of one type or one of each type; wilds stand in for anything.
pub fn is_valid_set(set: &[Card; 3]) -> bool {
    let mut kinds: Vec<Card> = set.iter().copied().filter(|&c| c != Card::Wild).collect();
    kinds.sort();
    kinds.dedup();
    let non_wild = set.iter().filter(|&&c| c != Card::Wild).count();
    kinds.len() <= 1 || kinds.len() == non_wild
}

/// All distinct cashable triples in `hand`, each sorted, in ascending order.
pub fn cashable_sets(hand: &Hand) -> Vec<[Card; 3]> {
    let mut out = Vec::new();
    for a in 0..4 {
        for b in a..4 {
            for c in b..4 {
                let set = [Card::ALL[a], Card::ALL[b], Card::ALL[c]];
                if hand.contains(&set) && is_valid_set(&set) {
                    out.push(set);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Card::*;

    #[test]
    fn three_of_a_kind() {
        let sets = cashable_sets(&Hand::from_cards(&[Infantry, Infantry, Infantry]));
        assert_eq!(sets, vec![[Infantry, Infantry, Infantry]]);
    }

    #[test]
    fn one_of_each() {
        let sets = cashable_sets(&Hand::from_cards(&[Infantry, Cavalry, Artillery]));
        assert_eq!(sets, vec![[Infantry, Cavalry, Artillery]]);
    }

    #[test]
    fn wild_substitutes() {
        let sets = cashable_sets(&Hand::from_cards(&[Infantry, Infantry, Wild]));
        assert!(!sets.is_empty());
        assert!(sets.contains(&[Infantry, Infantry, Wild]));
        assert!(is_valid_set(&[Infantry, Cavalry, Wild]));
        assert!(is_valid_set(&[Wild, Wild, Artillery]));
    }

    #[test]
    fn mixed_pair_is_not_a_set() {
        assert!(!is_valid_set(&[Infantry, Infantry, Cavalry]));
        assert!(cashable_sets(&Hand::from_cards(&[Infantry, Infantry, Cavalry])).is_empty());
        assert!(cashable_sets(&Hand::new()).is_empty());
    }

    #[test]
    fn five_cards_always_cashable() {
        // Pigeonhole over three troop types plus wilds.
        for a in 0..4 {
            for b in a..4 {
                for c in b..4 {
                    for d in c..4 {
                        for e in d..4 {
                            let hand = Hand::from_cards(&[
                                Card::ALL[a],
                                Card::ALL[b],
                                Card::ALL[c],
                                Card::ALL[d],
                                Card::ALL[e],
                            ]);
                            assert!(hand.must_cash());
                            assert!(!cashable_sets(&hand).is_empty(), "{hand:?}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn cash_value_is_static() {
        for _ in 0..10 {
            assert_eq!(cash_value(), 5);
        }
    }

    #[test]
    fn deck_draw_frequencies() {
        let mut counts = [0; 4];
        for x in 0..44 {
            counts[Card::from_deck_draw(x) as usize] += 1;
        }
        assert_eq!(counts, [14, 14, 14, 2]);
    }
}
