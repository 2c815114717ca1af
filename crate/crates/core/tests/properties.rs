//! Randomized invariants across modules.

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riskgcn::arena::seat_order;
use riskgcn::battle::TableCache;
use riskgcn::features::{defence_value, extract, player_block, FeatureConfig, BOARD_DIM, GLOBAL_DIM};
use riskgcn::rules::{
    cashable_sets, new_game, GameState, MatchLog, Move, Phase, PlayerId, Position, Rules, TerritoryId, MAX_PLAYERS,
};
use riskgcn::search::{bfs_search, gen_attack_moves, gen_place_moves, SearchConfig};

fn classic() -> Arc<Rules> {
    Arc::new(Rules::classic())
}

/// A legal move chosen uniformly among a few simple options.
fn random_legal(s: &GameState, rng: &mut ChaCha8Rng) -> Move {
    let me = s.current_player();
    let owned: Vec<TerritoryId> = s.position().territories_of(me).collect();
    let place = |rng: &mut ChaCha8Rng| Move::Place {
        territory: owned[rng.random_range(0..owned.len())],
        count: rng.random_range(1..=s.pending_income()),
    };
    match s.phase() {
        Phase::Cards => {
            let sets = cashable_sets(s.hand(me));
            if s.hand(me).must_cash() || (!sets.is_empty() && rng.random_bool(0.5)) {
                Move::Cash(sets[0])
            } else {
                place(rng)
            }
        }
        Phase::Placing => place(rng),
        Phase::Attacking => match s.pending_occupy() {
            Some(p) => Move::Occupy {
                count: rng.random_range(p.min..=p.max),
            },
            None => {
                let atk = s.legal_attacks();
                if atk.is_empty() || rng.random_bool(0.3) {
                    Move::EndAttacks
                } else {
                    let (from, to) = atk[rng.random_range(0..atk.len())];
                    Move::Attack { from, to }
                }
            }
        },
        Phase::Fortifying => {
            let pairs = s.legal_fortify_pairs();
            if pairs.is_empty() || rng.random_bool(0.5) {
                Move::EndTurn
            } else {
                let (from, to) = pairs[rng.random_range(0..pairs.len())];
                Move::Fortify {
                    from,
                    to,
                    count: rng.random_range(1..=s.movable(from)),
                }
            }
        }
        Phase::GameOver => unreachable!(),
    }
}

/// Random classic position where every listed seat owns something.
fn random_position(rng: &mut ChaCha8Rng, players: u8) -> Position {
    loop {
        let owner: Vec<PlayerId> = (0..42).map(|_| PlayerId(rng.random_range(0..players))).collect();
        let armies: Vec<u32> = (0..42).map(|_| rng.random_range(1..=15)).collect();
        let mut alive = [false; MAX_PLAYERS];
        alive[..players as usize].fill(true);
        let pos = Position {
            players,
            current: PlayerId(rng.random_range(0..players)),
            owner,
            armies,
            hands: Default::default(),
            alive,
        };
        if (0..players).all(|p| pos.territory_count(PlayerId(p)) > 0) {
            return pos;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn engine_walk_keeps_invariants(seed in any::<u64>(), players in 2usize..=6) {
        let rules = Arc::new(Rules { initial_armies: 30, ..Rules::classic() });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = new_game(rules.clone(), players, rules.initial_armies, seed).unwrap();
        let mut log = MatchLog::new(&rules, players, seed, vec!["walk".into(); players]);
        for _ in 0..600 {
            if s.is_over() {
                break;
            }
            let before = s.clone();
            let mv = random_legal(&s, &mut rng);
            let out = s.apply(&mv).unwrap();
            log.record(&before, &mv, &out);
            let pos = s.position();
            let mut expected = before.position().total_armies();
            if let Move::Place { count, .. } = &mv {
                expected += count;
            }
            if let (&Move::Attack { from, to }, Some(r)) = (&mv, &out.attack) {
                let lost = before.position().armies_on(from) - 1 - r.attacker_survivors
                    + before.position().armies_on(to) - r.defender_survivors;
                expected -= lost;
            }
            prop_assert_eq!(pos.total_armies(), expected, "{}", mv);
            prop_assert_eq!(pos.owner.len(), 42);
            for t in 0..42 {
                prop_assert!(pos.alive[pos.owner[t].index()]);
                prop_assert!(s.fortify_locks()[t] <= pos.armies[t]);
            }
            if s.phase() != Phase::Fortifying {
                prop_assert!(s.fortify_locks().iter().all(|&l| l == 0));
            }
        }
        let replayed = log.replay().unwrap();
        prop_assert_eq!(replayed.position(), s.position());
        prop_assert_eq!(replayed.turn(), s.turn());
    }

    #[test]
    fn feature_invariants(seed in any::<u64>(), players in 2u8..=6) {
        let rules = classic();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = random_position(&mut rng, players);
        let cfg = FeatureConfig::default();
        let fs = extract(&rules, &pos, &cfg);
        prop_assert_eq!(fs.global.len(), GLOBAL_DIM);
        prop_assert_eq!(fs.board.dim(), (42, BOARD_DIM));
        let (mut army, mut terr) = (0.0, 0.0);
        for p in 0..players {
            let block = player_block(&fs.global, PlayerId(p));
            army += block[0];
            terr += block[2];
            prop_assert!((0.0..=cfg.defence_cap).contains(&block[4]));
        }
        prop_assert!((army - 1.0).abs() < 1e-12);
        prop_assert!((terr - 1.0).abs() < 1e-12);

        let mut doubled = pos.clone();
        doubled.armies.iter_mut().for_each(|a| *a *= 2);
        for p in 0..players {
            let id = PlayerId(p);
            let a = defence_value(&rules, &pos, id, cfg.defence_cap).unwrap();
            let b = defence_value(&rules, &doubled, id, cfg.defence_cap).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_is_fair_over_full_cycles(roster in 1usize..=6, players in 2usize..=6, cycles in 1usize..=3) {
        let mut seats = vec![vec![0usize; players]; roster];
        for m in 0..players * cycles {
            for (seat, entry) in seat_order(roster, players, m).into_iter().enumerate() {
                seats[entry][seat] += 1;
            }
        }
        // Every entry sees every seat equally often.
        for row in &seats {
            prop_assert!(row.iter().all(|&c| c == row[0]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Generated moves are legal, and the chosen chain replayed on the engine
    /// with the modelled battle outcomes lands on the predicted position.
    #[test]
    fn search_moves_are_sound(seed in any::<u64>(), players in 2u8..=6) {
        let rules = classic();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let root = GameState::from_position(rules.clone(), random_position(&mut rng, players), seed).unwrap();
        prop_assume!(!root.is_over());
        let cfg = SearchConfig::with_nodes(300);
        let cache = TableCache::default();

        for bundle in gen_place_moves(&root, &cfg) {
            let mut s = root.clone();
            for m in &bundle {
                prop_assert!(s.apply(m).is_ok(), "{}", m);
            }
        }

        let me = root.current_player();
        let eval = |_: &Rules, p: &Position, who: PlayerId| p.armies_of(who) as f64 + p.territory_count(who) as f64;
        let r = bfs_search(&root, &eval, &cache, &cfg);
        let mut s = root.clone();
        for m in &r.chain {
            if s.phase() == Phase::Attacking && s.pending_occupy().is_none() {
                let planned = gen_attack_moves(&s, &cache, cfg.risky);
                let legal = planned.iter().all(|a| s.check(&Move::Attack { from: a.from, to: a.to }).is_ok());
                prop_assert!(legal);
            }
            match *m {
                Move::Attack { from, to } => {
                    let force = s.position().armies_on(from) - 1;
                    let (a, d) = cache.select(force, s.position().armies_on(to), cfg.risky).unwrap();
                    prop_assert!(a >= 1, "chain contains a modelled wipe-out");
                    s.impose_attack(from, to, a, d).unwrap();
                }
                Move::EndAttacks => break,
                _ => {
                    s.apply(m).unwrap();
                }
            }
        }
        prop_assert_eq!(s.position(), &r.predicted);
        prop_assert_eq!(r.predicted.current, me);
    }
}
