use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::cards::{cashable_sets, is_valid_set, Card, Hand, CASH_VALUE};
use super::dice::{roll_round, DiceRound, DiceSource, GameRng};
use super::map::{ContinentId, TerritoryId};
use super::{Move, PlayerId, RuleError, Rules, MAX_PLAYERS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Cards,
    Placing,
    Attacking,
    Fortifying,
    GameOver,
}

/// Ownership, armies and hands: everything the evaluation network sees.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Position {
    pub players: u8,
    pub current: PlayerId,
    pub owner: Vec<PlayerId>,
    pub armies: Vec<u32>,
    pub hands: [Hand; MAX_PLAYERS],
    pub alive: [bool; MAX_PLAYERS],
}

impl Position {
    pub fn total_armies(&self) -> u32 {
        self.armies.iter().sum()
    }

    pub fn armies_of(&self, p: PlayerId) -> u32 {
        self.owner
            .iter()
            .zip(&self.armies)
            .filter(|(o, _)| **o == p)
            .map(|(_, a)| *a)
            .sum()
    }

    pub fn territory_count(&self, p: PlayerId) -> u32 {
        self.owner.iter().filter(|&&o| o == p).count() as u32
    }

    pub fn territories_of(&self, p: PlayerId) -> impl Iterator<Item = TerritoryId> + '_ {
        self.owner
            .iter()
            .enumerate()
            .filter(move |(_, &o)| o == p)
            .map(|(i, _)| TerritoryId(i as u16))
    }

    pub fn owner_of(&self, t: TerritoryId) -> PlayerId {
        self.owner[t.index()]
    }

    pub fn armies_on(&self, t: TerritoryId) -> u32 {
        self.armies[t.index()]
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn owns_continent(&self, rules: &Rules, p: PlayerId, c: ContinentId) -> bool {
        rules.map.continents()[c.index()]
            .members
            .iter()
            .all(|&t| self.owner[t.index()] == p)
    }

    /// Territory income plus continent bonuses; card armies are separate.
    pub fn income(&self, rules: &Rules, p: PlayerId) -> Result<u32, RuleError> {
        if !self.alive[p.index()] {
            return Err(RuleError::DeadPlayer(p));
        }
        Ok(self.income_unchecked(rules, p))
    }

    pub(crate) fn income_unchecked(&self, rules: &Rules, p: PlayerId) -> u32 {
        let base = (self.territory_count(p) / 3).max(rules.income_floor);
        let bonus: u32 = rules
            .map
            .continents()
            .iter()
            .filter(|c| self.owns_continent(rules, p, c.id))
            .map(|c| c.bonus)
            .sum();
        base + bonus
    }

    /// Player owning every territory, if any.
    pub fn winner(&self) -> Option<PlayerId> {
        let first = *self.owner.first()?;
        self.owner.iter().all(|&o| o == first).then_some(first)
    }
}

/// Armies owed to a freshly conquered territory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PendingOccupy {
    pub from: TerritoryId,
    pub to: TerritoryId,
    pub min: u32,
    pub max: u32,
}

/// Terminal state of one attack. Survivor counts refer to the committed
/// force (the attacking territory's armies minus its garrison of one).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackResult {
    pub attacker_survivors: u32,
    pub defender_survivors: u32,
    pub conquered: bool,
    pub eliminated_player: Option<PlayerId>,
    /// Dice as rolled; empty for imposed outcomes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<DiceRound>,
}

impl AttackResult {
    pub fn terminal(attacker_survivors: u32, defender_survivors: u32) -> AttackResult {
        AttackResult {
            attacker_survivors,
            defender_survivors,
            conquered: defender_survivors == 0,
            eliminated_player: None,
            rounds: Vec::new(),
        }
    }
}

/// Side effects of an applied move that a match log needs for replay.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MoveOutcome {
    pub attack: Option<AttackResult>,
    pub card_drawn: Option<Card>,
}

#[derive(Clone, Debug)]
pub struct GameState {
    rules: Arc<Rules>,
    pos: Position,
    phase: Phase,
    pending_income: u32,
    fortify_locks: Vec<u32>,
    conquered_this_turn: bool,
    pending_occupy: Option<PendingOccupy>,
    turn: u32,
    eliminations: Vec<(PlayerId, u32)>,
    truncated: bool,
    rng: GameRng,
}

/// Deals a random start: territories round-robin from a seeded shuffle,
/// then each player's remaining armies uniformly over its own territories.
pub fn new_game(rules: Arc<Rules>, players: usize, armies_per_player: u32, seed: u64) -> Result<GameState, RuleError> {
    if !(2..=MAX_PLAYERS).contains(&players) {
        return Err(RuleError::Setup(format!("{players} players (need 2..=6)")));
    }
    let n = rules.map.territory_count();
    if (armies_per_player as usize) * players < n {
        return Err(RuleError::Setup(format!(
            "{players} x {armies_per_player} armies cannot cover {n} territories"
        )));
    }
    let mut rng = GameRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng.inner());
    let mut owner = vec![PlayerId(0); n];
    let mut armies = vec![1u32; n];
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); players];
    for (i, &t) in order.iter().enumerate() {
        owner[t] = PlayerId((i % players) as u8);
        owned[i % players].push(t);
    }
    for list in &owned {
        let extra = armies_per_player - list.len() as u32;
        for _ in 0..extra {
            let t = list[rng.below(list.len() as u32) as usize];
            armies[t] += 1;
        }
    }
    let mut alive = [false; MAX_PLAYERS];
    alive[..players].fill(true);
    let pos = Position {
        players: players as u8,
        current: PlayerId(0),
        owner,
        armies,
        hands: [Hand::new(); MAX_PLAYERS],
        alive,
    };
    Ok(GameState::start(rules, pos, rng))
}

impl GameState {
    /// Starts `pos.current`'s turn on an arbitrary position. Players with no
    /// territories are marked dead.
    pub fn from_position(rules: Arc<Rules>, mut pos: Position, seed: u64) -> Result<GameState, RuleError> {
        let n = rules.map.territory_count();
        if pos.owner.len() != n || pos.armies.len() != n {
            return Err(RuleError::Setup("position does not match map size".into()));
        }
        if pos.armies.contains(&0) {
            return Err(RuleError::Setup("every territory needs at least one army".into()));
        }
        if pos.owner.iter().any(|o| o.index() >= pos.players as usize) {
            return Err(RuleError::Setup("territory owned by a non-existent player".into()));
        }
        for p in 0..MAX_PLAYERS {
            pos.alive[p] = pos.owner.iter().any(|o| o.index() == p);
        }
        if !pos.alive[pos.current.index()] {
            return Err(RuleError::DeadPlayer(pos.current));
        }
        let mut state = GameState::start(rules, pos, GameRng::seed_from_u64(seed));
        if state.pos.winner().is_some() {
            state.phase = Phase::GameOver;
        }
        Ok(state)
    }

    fn start(rules: Arc<Rules>, pos: Position, rng: GameRng) -> GameState {
        let n = rules.map.territory_count();
        let mut state = GameState {
            rules,
            pos,
            phase: Phase::Cards,
            pending_income: 0,
            fortify_locks: vec![0; n],
            conquered_this_turn: false,
            pending_occupy: None,
            turn: 0,
            eliminations: Vec::new(),
            truncated: false,
            rng,
        };
        state.begin_turn();
        state
    }

    pub fn rules(&self) -> &Arc<Rules> {
        &self.rules
    }

    pub fn position(&self) -> &Position {
        &self.pos
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn current_player(&self) -> PlayerId {
        self.pos.current
    }

    pub fn pending_income(&self) -> u32 {
        self.pending_income
    }

    pub fn pending_occupy(&self) -> Option<PendingOccupy> {
        self.pending_occupy
    }

    pub fn fortify_locks(&self) -> &[u32] {
        &self.fortify_locks
    }

    pub fn conquered_this_turn(&self) -> bool {
        self.conquered_this_turn
    }

    /// Player turns completed so far.
    pub fn turn(&self) -> u32 {
        self.turn
    }

    /// Eliminated players with the turn index of their elimination, in order.
    pub fn eliminations(&self) -> &[(PlayerId, u32)] {
        &self.eliminations
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn is_over(&self) -> bool {
        self.phase == Phase::GameOver
    }

    pub fn winner(&self) -> Option<PlayerId> {
        self.pos.winner()
    }

    pub fn hand(&self, p: PlayerId) -> &Hand {
        &self.pos.hands[p.index()]
    }

    pub fn income(&self, p: PlayerId) -> Result<u32, RuleError> {
        self.pos.income(&self.rules, p)
    }

    /// Armies on the board plus armies waiting to be placed.
    pub fn army_supply(&self) -> u64 {
        self.pos.total_armies() as u64 + self.pending_income as u64
    }

    /// Armies that may still leave `t` by fortification this turn.
    pub fn movable(&self, t: TerritoryId) -> u32 {
        let a = self.pos.armies[t.index()];
        a.saturating_sub(self.fortify_locks[t.index()] + 1)
    }

    pub fn apply_move(&self, mv: &Move) -> Result<GameState, RuleError> {
        let mut next = self.clone();
        next.apply(mv)?;
        Ok(next)
    }

    /// In-place variant of [`GameState::apply_move`]. The state is untouched
    /// when an error is returned. Attacks roll with the match's own stream.
    pub fn apply(&mut self, mv: &Move) -> Result<MoveOutcome, RuleError> {
        self.check(mv)?;
        let mut outcome = MoveOutcome::default();
        match *mv {
            Move::Cash(set) => {
                self.pos.hands[self.pos.current.index()].remove(&set);
                self.pending_income += CASH_VALUE;
                self.settle_cards();
            }
            Move::Place { territory, count } => {
                self.pos.armies[territory.index()] += count;
                self.pending_income -= count;
                self.phase = if self.pending_income == 0 {
                    Phase::Attacking
                } else {
                    Phase::Placing
                };
            }
            Move::Attack { from, to } => {
                let mut rng = self.rng.clone();
                let res = self.battle_with_dice(from, to, &mut rng);
                self.rng = rng;
                outcome.attack = Some(res);
            }
            Move::Occupy { count } => self.occupy(count),
            Move::Fortify { from, to, count } => {
                self.pos.armies[from.index()] -= count;
                self.pos.armies[to.index()] += count;
                self.fortify_locks[to.index()] += count;
            }
            Move::EndAttacks => self.phase = Phase::Fortifying,
            Move::EndTurn => outcome.card_drawn = self.end_turn(),
        }
        Ok(outcome)
    }

    /// Legality check without side effects.
    pub fn check(&self, mv: &Move) -> Result<(), RuleError> {
        if self.phase == Phase::GameOver {
            return Err(RuleError::GameOver);
        }
        if let Some(p) = self.pending_occupy {
            return match *mv {
                Move::Occupy { count } if count >= p.min && count <= p.max => Ok(()),
                Move::Occupy { count } => Err(RuleError::OccupyOutOfRange {
                    count,
                    min: p.min,
                    max: p.max,
                }),
                _ => Err(RuleError::OccupyPending),
            };
        }
        let me = self.pos.current;
        let hand = &self.pos.hands[me.index()];
        let wrong = |name| RuleError::WrongPhase {
            mv: name,
            phase: self.phase,
        };
        match *mv {
            Move::Cash(set) => {
                if self.phase != Phase::Cards {
                    return Err(wrong("cash"));
                }
                if !is_valid_set(&set) || !hand.contains(&set) {
                    return Err(RuleError::InvalidCash(set));
                }
            }
            Move::Place { territory, count } => {
                match self.phase {
                    Phase::Placing => {}
                    Phase::Cards if hand.must_cash() => return Err(RuleError::MustCash(hand.len())),
                    Phase::Cards => {}
                    _ => return Err(wrong("place")),
                }
                self.own(territory)?;
                if count == 0 {
                    return Err(RuleError::ZeroCount);
                }
                if count > self.pending_income {
                    return Err(RuleError::InsufficientArmies {
                        need: count,
                        have: self.pending_income,
                    });
                }
            }
            Move::Attack { from, to } => {
                if self.phase != Phase::Attacking {
                    return Err(wrong("attack"));
                }
                self.attack_legal(from, to)?;
            }
            Move::Occupy { .. } => return Err(wrong("occupy")),
            Move::Fortify { from, to, count } => {
                if self.phase != Phase::Fortifying {
                    return Err(wrong("fortify"));
                }
                self.own(from)?;
                self.own(to)?;
                if !self.rules.map.adjacent(from, to) {
                    return Err(RuleError::NotAdjacent(from, to));
                }
                if count == 0 {
                    return Err(RuleError::ZeroCount);
                }
                let movable = self.movable(from);
                if count > movable {
                    let unlocked = self.pos.armies[from.index()] - self.fortify_locks[from.index()];
                    if unlocked < self.pos.armies[from.index()] {
                        return Err(RuleError::LockedUnits {
                            territory: from,
                            movable,
                        });
                    }
                    return Err(RuleError::InsufficientArmies {
                        need: count + 1,
                        have: self.pos.armies[from.index()],
                    });
                }
            }
            Move::EndAttacks => {
                if self.phase != Phase::Attacking {
                    return Err(wrong("end attacks"));
                }
            }
            Move::EndTurn => {
                if !matches!(self.phase, Phase::Attacking | Phase::Fortifying) {
                    return Err(wrong("end turn"));
                }
            }
        }
        Ok(())
    }

    fn own(&self, t: TerritoryId) -> Result<(), RuleError> {
        if t.index() >= self.pos.owner.len() {
            return Err(RuleError::NoSuchTerritory(t));
        }
        if self.pos.owner[t.index()] != self.pos.current {
            return Err(RuleError::NotOwner(t));
        }
        Ok(())
    }

    fn attack_legal(&self, from: TerritoryId, to: TerritoryId) -> Result<(), RuleError> {
        self.own(from)?;
        if to.index() >= self.pos.owner.len() {
            return Err(RuleError::NoSuchTerritory(to));
        }
        if self.pos.owner[to.index()] == self.pos.current {
            return Err(RuleError::OwnTerritory(to));
        }
        if !self.rules.map.adjacent(from, to) {
            return Err(RuleError::NotAdjacent(from, to));
        }
        let have = self.pos.armies[from.index()];
        if have < 2 {
            return Err(RuleError::InsufficientArmies { need: 2, have });
        }
        Ok(())
    }

    fn check_attack(&self, from: TerritoryId, to: TerritoryId) -> Result<(), RuleError> {
        self.check(&Move::Attack { from, to })
    }

    /// Resolves an attack with real dice until one side is exhausted.
    pub fn resolve_attack_dice(
        &self,
        from: TerritoryId,
        to: TerritoryId,
        dice: &mut dyn DiceSource,
    ) -> Result<(GameState, AttackResult), RuleError> {
        self.check_attack(from, to)?;
        let mut next = self.clone();
        let res = next.battle_with_dice(from, to, dice);
        Ok((next, res))
    }

    /// Applies a chosen terminal state directly, without dice.
    pub fn resolve_attack_imposed(
        &self,
        from: TerritoryId,
        to: TerritoryId,
        terminal: &AttackResult,
    ) -> Result<GameState, RuleError> {
        let mut next = self.clone();
        next.impose_attack(from, to, terminal.attacker_survivors, terminal.defender_survivors)?;
        Ok(next)
    }

    /// In-place imposed attack used by the search model.
    pub fn impose_attack(
        &mut self,
        from: TerritoryId,
        to: TerritoryId,
        attacker_survivors: u32,
        defender_survivors: u32,
    ) -> Result<AttackResult, RuleError> {
        self.check_attack(from, to)?;
        let a = self.pos.armies[from.index()] - 1;
        let d = self.pos.armies[to.index()];
        let terminal = (attacker_survivors == 0) != (defender_survivors == 0);
        if !terminal || attacker_survivors > a || defender_survivors > d {
            return Err(RuleError::NotTerminal {
                attackers: attacker_survivors,
                defenders: defender_survivors,
                start_a: a,
                start_d: d,
            });
        }
        Ok(self.finish_battle(from, to, attacker_survivors, defender_survivors, Vec::new()))
    }

    fn battle_with_dice(&mut self, from: TerritoryId, to: TerritoryId, dice: &mut dyn DiceSource) -> AttackResult {
        let mut a = self.pos.armies[from.index()] - 1;
        let mut d = self.pos.armies[to.index()];
        let mut rounds = Vec::new();
        while a > 0 && d > 0 {
            let round = roll_round(a, d, dice);
            let (la, ld) = round.losses();
            a -= la;
            d -= ld;
            rounds.push(round);
        }
        self.finish_battle(from, to, a, d, rounds)
    }

    fn finish_battle(
        &mut self,
        from: TerritoryId,
        to: TerritoryId,
        a: u32,
        d: u32,
        rounds: Vec<DiceRound>,
    ) -> AttackResult {
        let me = self.pos.current;
        let defender = self.pos.owner[to.index()];
        self.pos.armies[from.index()] = 1 + a;
        let mut result = AttackResult {
            attacker_survivors: a,
            defender_survivors: d,
            conquered: d == 0,
            eliminated_player: None,
            rounds,
        };
        if d > 0 {
            self.pos.armies[to.index()] = d;
            return result;
        }
        self.pos.owner[to.index()] = me;
        self.pos.armies[to.index()] = 0;
        self.conquered_this_turn = true;
        if !self.pos.owner.contains(&defender) {
            self.pos.alive[defender.index()] = false;
            self.eliminations.push((defender, self.turn));
            let taken = std::mem::take(&mut self.pos.hands[defender.index()]);
            self.pos.hands[me.index()].merge(&taken);
            result.eliminated_player = Some(defender);
        }
        if self.pos.alive_count() == 1 {
            // Last opponent gone: the game ends here, all survivors move in.
            self.pos.armies[from.index()] = 1;
            self.pos.armies[to.index()] = a;
            self.phase = Phase::GameOver;
        } else {
            self.pending_occupy = Some(PendingOccupy {
                from,
                to,
                min: a.min(3),
                max: a,
            });
        }
        result
    }

    fn occupy(&mut self, count: u32) {
        let p = self.pending_occupy.take().expect("checked");
        self.pos.armies[p.from.index()] -= count;
        self.pos.armies[p.to.index()] += count;
        if self.pos.hands[self.pos.current.index()].must_cash() {
            self.phase = Phase::Cards;
        }
    }

    fn end_turn(&mut self) -> Option<Card> {
        let me = self.pos.current;
        let mut drawn = None;
        self.fortify_locks.iter_mut().for_each(|l| *l = 0);
        if self.conquered_this_turn {
            let card = Card::from_deck_draw(self.rng.below(44));
            self.pos.hands[me.index()].add(card);
            drawn = Some(card);
        }
        self.turn += 1;
        if self.turn >= self.rules.turn_cap {
            self.truncated = true;
            self.phase = Phase::GameOver;
            return drawn;
        }
        let players = self.pos.players as usize;
        let mut next = me.index();
        loop {
            next = (next + 1) % players;
            if self.pos.alive[next] {
                break;
            }
        }
        self.pos.current = PlayerId(next as u8);
        self.begin_turn();
        drawn
    }

    fn begin_turn(&mut self) {
        self.fortify_locks.iter_mut().for_each(|l| *l = 0);
        self.conquered_this_turn = false;
        self.pending_occupy = None;
        self.pending_income = self.pos.income_unchecked(&self.rules, self.pos.current);
        self.phase = Phase::Cards;
        self.settle_cards();
    }

    /// Leaves the cards stage when there is nothing left to decide there.
    fn settle_cards(&mut self) {
        if self.phase != Phase::Cards {
            return;
        }
        let hand = &self.pos.hands[self.pos.current.index()];
        if hand.must_cash() {
            return;
        }
        if self.pending_income == 0 {
            // Only reachable with a zero income floor: an optional cash
            // cannot be followed by a placement, so the stage is skipped.
            self.phase = Phase::Attacking;
        } else if cashable_sets(hand).is_empty() {
            self.phase = Phase::Placing;
        }
    }

    /// All attacks the current player could legally launch now.
    pub fn legal_attacks(&self) -> Vec<(TerritoryId, TerritoryId)> {
        if self.phase != Phase::Attacking || self.pending_occupy.is_some() {
            return Vec::new();
        }
        let me = self.pos.current;
        let map = &self.rules.map;
        let mut out = Vec::new();
        for from in self.pos.territories_of(me) {
            if self.pos.armies[from.index()] < 2 {
                continue;
            }
            for &to in map.neighbours(from) {
                if self.pos.owner[to.index()] != me {
                    out.push((from, to));
                }
            }
        }
        out
    }

    /// Adjacent owned pairs with at least one movable army at the source.
    pub fn legal_fortify_pairs(&self) -> Vec<(TerritoryId, TerritoryId)> {
        if self.phase != Phase::Fortifying {
            return Vec::new();
        }
        let me = self.pos.current;
        let mut out = Vec::new();
        for from in self.pos.territories_of(me) {
            if self.movable(from) == 0 {
                continue;
            }
            for &to in self.rules.map.neighbours(from) {
                if self.pos.owner[to.index()] == me {
                    out.push((from, to));
                }
            }
        }
        out
    }

    /// Owned territories adjacent to at least one enemy territory.
    pub fn frontier(&self, p: PlayerId) -> Vec<TerritoryId> {
        self.pos
            .territories_of(p)
            .filter(|&t| {
                self.rules
                    .map
                    .neighbours(t)
                    .iter()
                    .any(|n| self.pos.owner[n.index()] != p)
            })
            .collect()
    }
}
