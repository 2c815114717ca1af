//! Terminal player: prompts per phase, numbered options, legality feedback.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use riskgcn::agent::{Agent, AgentError, Engine};
use riskgcn::rules::{cashable_sets, GameState, Move, Phase, TerritoryId};

pub fn render_board(state: &GameState) -> String {
    let map = &state.rules().map;
    let pos = state.position();
    let mut s = String::new();
    for c in map.continents() {
        let _ = writeln!(s, "{} (+{})", c.name, c.bonus);
        for &t in &c.members {
            let _ = writeln!(
                s,
                "  {:>3} {:<24} P{} {:>4}",
                t.0,
                map.territory(t).name,
                pos.owner_of(t).0,
                pos.armies_on(t)
            );
        }
    }
    let _ = write!(s, "players:");
    for p in 0..pos.players {
        let id = riskgcn::rules::PlayerId(p);
        if pos.alive[p as usize] {
            let _ = write!(
                s,
                " P{p}[{} terr, {} armies, {} cards]",
                pos.territory_count(id),
                pos.armies_of(id),
                pos.hands[p as usize].len()
            );
        }
    }
    s.push('\n');
    s
}

pub struct HumanAgent<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead + Send, W: Write + Send> HumanAgent<R, W> {
    pub fn new(input: R, output: W) -> Self {
        HumanAgent { input, output }
    }

    fn say(&mut self, text: &str) -> Result<(), AgentError> {
        self.output
            .write_all(text.as_bytes())
            .and_then(|_| self.output.flush())
            .map_err(|e| AgentError::Other(e.to_string()))
    }

    fn ask(&mut self, prompt: &str) -> Result<String, AgentError> {
        self.say(prompt)?;
        self.say("> ")?;
        let mut line = String::new();
        let n = self
            .input
            .read_line(&mut line)
            .map_err(|e| AgentError::Other(e.to_string()))?;
        if n == 0 {
            return Err(AgentError::Other("input closed".into()));
        }
        Ok(line.trim().to_string())
    }

    fn numbers(line: &str) -> Option<Vec<u32>> {
        line.split_whitespace().map(|w| w.parse().ok()).collect()
    }

    /// `None` means the input did not parse; the caller re-prompts.
    fn choose(&mut self, state: &GameState) -> Result<Option<Move>, AgentError> {
        let me = state.current_player();
        let pos = state.position();
        let map = &state.rules().map;
        let mv = match state.phase() {
            Phase::Cards => {
                let sets = cashable_sets(state.hand(me));
                let mut prompt = String::from("cards:\n");
                if !state.hand(me).must_cash() {
                    prompt.push_str("  0: keep cards and place\n");
                }
                for (i, set) in sets.iter().enumerate() {
                    let _ = writeln!(prompt, "  {}: cash {:?}", i + 1, set);
                }
                match Self::numbers(&self.ask(&prompt)?).as_deref() {
                    Some([0]) => return self.place(state).map(Some),
                    Some([i]) if (*i as usize) <= sets.len() => Move::Cash(sets[*i as usize - 1]),
                    _ => return Ok(None),
                }
            }
            Phase::Placing => return self.place(state).map(Some),
            Phase::Attacking => {
                if let Some(p) = state.pending_occupy() {
                    let line = self.ask(&format!("occupy {} with how many? [{}..{}]\n", p.to, p.min, p.max))?;
                    match Self::numbers(&line).as_deref() {
                        Some([count]) => Move::Occupy { count: *count },
                        _ => return Ok(None),
                    }
                } else {
                    let attacks = state.legal_attacks();
                    let mut prompt = String::from("attacks:\n  0: end attacks\n");
                    for (i, (f, t)) in attacks.iter().enumerate() {
                        let _ = writeln!(
                            prompt,
                            "  {}: {} ({}) -> {} ({}, P{})",
                            i + 1,
                            map.territory(*f).name,
                            pos.armies_on(*f),
                            map.territory(*t).name,
                            pos.armies_on(*t),
                            pos.owner_of(*t).0
                        );
                    }
                    match Self::numbers(&self.ask(&prompt)?).as_deref() {
                        Some([0]) => Move::EndAttacks,
                        Some([i]) if (*i as usize) <= attacks.len() => {
                            let (from, to) = attacks[*i as usize - 1];
                            Move::Attack { from, to }
                        }
                        _ => return Ok(None),
                    }
                }
            }
            Phase::Fortifying => {
                let pairs = state.legal_fortify_pairs();
                let mut prompt = String::from("fortify: `from to count`, or 0 to end the turn\n");
                for (f, t) in pairs {
                    let _ = writeln!(prompt, "  {} -> {} (up to {})", f.0, t.0, state.movable(f));
                }
                match Self::numbers(&self.ask(&prompt)?).as_deref() {
                    Some([0]) | Some([]) => Move::EndTurn,
                    Some([f, t, c]) => Move::Fortify {
                        from: TerritoryId(*f as u16),
                        to: TerritoryId(*t as u16),
                        count: *c,
                    },
                    _ => return Ok(None),
                }
            }
            Phase::GameOver => return Ok(None),
        };
        Ok(Some(mv))
    }

    fn place(&mut self, state: &GameState) -> Result<Move, AgentError> {
        loop {
            let line = self.ask(&format!("place {} armies: `territory count`\n", state.pending_income()))?;
            if let Some([t, c]) = Self::numbers(&line).as_deref() {
                return Ok(Move::Place {
                    territory: TerritoryId(*t as u16),
                    count: *c,
                });
            }
            self.say("expected two numbers\n")?;
        }
    }
}

impl<R: BufRead + Send, W: Write + Send> Agent for HumanAgent<R, W> {
    fn name(&self) -> String {
        "human".into()
    }

    fn play_turn(&mut self, engine: &mut dyn Engine) -> Result<(), AgentError> {
        let me = engine.state().current_player();
        let board = render_board(engine.state());
        self.say(&format!(
            "\n=== turn {} (you are P{}) ===\n{board}",
            engine.state().turn(),
            me.0
        ))?;
        loop {
            let state = engine.state().clone();
            if state.is_over() || state.current_player() != me {
                return Ok(());
            }
            match self.choose(&state)? {
                None => self.say("could not read that, try again\n")?,
                Some(mv) => match engine.submit(&mv) {
                    Ok(out) => {
                        if let Some(a) = out.attack {
                            let verdict = if a.conquered { "conquered" } else { "repelled" };
                            self.say(&format!(
                                "{mv}: {verdict}, {} attackers and {} defenders left\n",
                                a.attacker_survivors, a.defender_survivors
                            ))?;
                        }
                    }
                    Err(e) => self.say(&format!("illegal: {e}\n"))?,
                },
            }
        }
    }
}
