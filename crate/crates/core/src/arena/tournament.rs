//! Seat-rotated tournaments with placement statistics.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_match, MatchRecord};
use crate::agent::Agent;
use crate::rules::{PlayerId, RuleError, Rules};

/// Builds a fresh agent for one seat of one match from a seed.
pub type AgentFactory = Arc<dyn Fn(u64) -> Box<dyn Agent> + Send + Sync>;

#[derive(Clone)]
pub struct RosterEntry {
    pub name: String,
    pub factory: AgentFactory,
}

impl RosterEntry {
    pub fn new(name: impl Into<String>, factory: impl Fn(u64) -> Box<dyn Agent> + Send + Sync + 'static) -> Self {
        RosterEntry {
            name: name.into(),
            factory: Arc::new(factory),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TournamentConfig {
    pub matches: usize,
    pub seed: u64,
    pub players: usize,
    /// Normal quantile for the win-rate interval (1.96 for 95%).
    pub z: f64,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        TournamentConfig {
            matches: 100,
            seed: 1,
            players: 6,
            z: 1.959_963_984_540_054,
        }
    }
}

/// SplitMix64 finaliser over `(a, b)`; decorrelates per-match seeds.
pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Roster index per seat in match `m`. The roster is cycled to fill the
/// seats, then rotated by `m`, so every `players` consecutive matches put
/// each cycled entry in each seat once.
pub fn seat_order(roster_len: usize, players: usize, m: usize) -> Vec<usize> {
    (0..players).map(|s| ((s + m) % players) % roster_len).collect()
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentStats {
    pub name: String,
    /// Seat-games played (one per occupied seat per counted match).
    pub n: u64,
    pub rank_counts: Vec<u64>,
    pub rank_probs: Vec<f64>,
    /// Probability of finishing in the top `k + 1`.
    pub cumulative: Vec<f64>,
    pub win_rate: f64,
    pub win_ci: (f64, f64),
    /// p(1st) / (p(1st) + p(2nd)); `None` when both are zero.
    pub conditional_first: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TournamentReport {
    pub config: TournamentConfig,
    pub agents: Vec<AgentStats>,
    pub counted: usize,
    pub truncated: usize,
    pub aborted: Vec<String>,
    pub mean_turns: f64,
}

impl TournamentReport {
    /// Tab-separated table, one row per agent.
    pub fn to_table(&self) -> String {
        let mut s = String::from("agent\tn");
        for r in 1..=self.config.players {
            let _ = write!(s, "\tp{r}");
        }
        s.push_str("\twin\twin_lo\twin_hi\tp1/(p1+p2)\n");
        for a in &self.agents {
            let _ = write!(s, "{}\t{}", a.name, a.n);
            for p in &a.rank_probs {
                let _ = write!(s, "\t{p:.4}");
            }
            let cond = a.conditional_first.map_or("-".into(), |c| format!("{c:.4}"));
            let _ = writeln!(s, "\t{:.4}\t{:.4}\t{:.4}\t{cond}", a.win_rate, a.win_ci.0, a.win_ci.1);
        }
        let _ = writeln!(
            s,
            "# matches {} counted {} truncated {} aborted {} mean_turns {:.1}",
            self.config.matches,
            self.counted,
            self.truncated,
            self.aborted.len(),
            self.mean_turns
        );
        s
    }
}

/// Runs `cfg.matches` matches in parallel. A roster shorter than
/// `cfg.players` is cycled to fill the seats; entries sharing a name share
/// one statistics row. Results depend only on
/// (roster, config), not on the worker count. Aborted matches are listed
/// and excluded from the statistics.
pub fn tournament(
    rules: Arc<Rules>,
    roster: &[RosterEntry],
    cfg: &TournamentConfig,
) -> Result<(TournamentReport, Vec<MatchRecord>), RuleError> {
    assert!(
        !roster.is_empty() && roster.len() <= cfg.players,
        "roster must have 1..=players entries"
    );
    let records: Result<Vec<MatchRecord>, RuleError> = (0..cfg.matches)
        .into_par_iter()
        .map(|m| {
            let seed = mix(cfg.seed, m as u64);
            let seats = seat_order(roster.len(), cfg.players, m);
            let mut agents: Vec<Box<dyn Agent>> = seats
                .iter()
                .enumerate()
                .map(|(s, &r)| (roster[r].factory)(mix(seed, s as u64 + 1)))
                .collect();
            run_match(rules.clone(), &mut agents, seed).map(|(rec, _)| rec)
        })
        .collect();
    let records = records?;

    let players = cfg.players;
    // Rows pool every roster entry sharing a name, in first-seen order.
    let mut names: Vec<&str> = Vec::new();
    let row: Vec<usize> = roster
        .iter()
        .map(|e| match names.iter().position(|n| *n == e.name) {
            Some(i) => i,
            None => {
                names.push(&e.name);
                names.len() - 1
            }
        })
        .collect();
    let mut counts = vec![vec![0u64; players]; names.len()];
    let (mut counted, mut truncated, mut turns) = (0usize, 0usize, 0u64);
    let mut aborted = Vec::new();
    for (m, rec) in records.iter().enumerate() {
        if let Some(why) = &rec.aborted {
            aborted.push(format!("match {m}: {why}"));
            continue;
        }
        counted += 1;
        truncated += usize::from(rec.truncated);
        turns += u64::from(rec.turns);
        for (seat, &r) in seat_order(roster.len(), players, m).iter().enumerate() {
            counts[row[r]][rec.rank_of(PlayerId(seat as u8))] += 1;
        }
    }

    let agents = names
        .iter()
        .zip(counts)
        .map(|(name, rank_counts)| {
            let n: u64 = rank_counts.iter().sum();
            let nf = n.max(1) as f64;
            let rank_probs: Vec<f64> = rank_counts.iter().map(|&c| c as f64 / nf).collect();
            let cumulative = rank_probs
                .iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            let (p1, p2) = (rank_probs[0], rank_probs.get(1).copied().unwrap_or(0.0));
            AgentStats {
                name: name.to_string(),
                n,
                win_rate: rank_probs[0],
                win_ci: wilson_interval(rank_counts[0], n, cfg.z),
                conditional_first: (p1 + p2 > 0.0).then(|| p1 / (p1 + p2)),
                rank_counts,
                rank_probs,
                cumulative,
            }
        })
        .collect();

    let report = TournamentReport {
        config: cfg.clone(),
        agents,
        counted,
        truncated,
        aborted,
        mean_turns: turns as f64 / counted.max(1) as f64,
    };
    Ok((report, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::BotKind;

    #[test]
    fn rotation_is_fair() {
        for roster_len in 1..=6 {
            let mut seen = vec![vec![0; 6]; roster_len];
            for m in 0..6 {
                for (s, r) in seat_order(roster_len, 6, m).into_iter().enumerate() {
                    seen[r][s] += 1;
                }
            }
            // Each roster agent holds each seat equally often over a cycle.
            for row in &seen {
                assert!(row.iter().all(|&c| c == row[0]), "{roster_len}: {seen:?}");
            }
        }
    }

    #[test]
    fn wilson_known_value() {
        // 10/20 at z = 1.96: centre 0.5, half-width 0.2058...
        let (lo, hi) = wilson_interval(10, 20, 1.96);
        assert!(
            (lo - 0.299_28).abs() < 1e-4 && (hi - 0.700_72).abs() < 1e-4,
            "{lo} {hi}"
        );
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
    }

    #[test]
    fn small_tournament_is_a_partition_and_deterministic() {
        let rules = Arc::new(Rules::classic());
        let roster: Vec<RosterEntry> = [BotKind::Aggressor, BotKind::Random, BotKind::Turtle]
            .into_iter()
            .map(|k| RosterEntry::new(k.name(), move |s| k.build(s)))
            .collect();
        let cfg = TournamentConfig {
            matches: 6,
            seed: 2,
            ..TournamentConfig::default()
        };
        let (a, _) = tournament(rules.clone(), &roster, &cfg).unwrap();
        let (b, _) = tournament(rules, &roster, &cfg).unwrap();
        assert_eq!(a, b);
        for s in &a.agents {
            let total: f64 = s.rank_probs.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert_eq!(s.n, 2 * a.counted as u64);
            assert!((s.cumulative[5] - 1.0).abs() < 1e-12);
        }
        assert!(a.to_table().starts_with("agent\tn\tp1"));
    }

    #[test]
    fn duplicate_names_share_a_row() {
        let rules = Arc::new(Rules::classic());
        let mut roster = vec![RosterEntry::new("aggressor", |s| BotKind::Aggressor.build(s))];
        roster.extend((0..5).map(|_| RosterEntry::new("random", |s| BotKind::Random.build(s))));
        let cfg = TournamentConfig {
            matches: 6,
            seed: 9,
            ..TournamentConfig::default()
        };
        let (r, _) = tournament(rules, &roster, &cfg).unwrap();
        assert_eq!(r.agents.len(), 2);
        assert_eq!(r.agents[0].n, r.counted as u64);
        assert_eq!(r.agents[1].n, 5 * r.counted as u64);
    }
}
