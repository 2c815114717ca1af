mod human;

use std::fs;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use riskgcn::agent::Agent;
use riskgcn::arena::{generate_dataset, run_match, tournament, BotKind, RosterEntry, TournamentConfig};
use riskgcn::battle::{build_terminal_table, select_index, TableCache};
use riskgcn::config::Config;
use riskgcn::features;
use riskgcn::network::Network;
use riskgcn::rules::{new_game, MatchLog, PlayerId, Rules, MAX_PLAYERS};
use riskgcn::search::{Evaluator, SearchAgent, SearchConfig};
use riskgcn::td::{self, read_dataset, write_dataset, Prepared, UpdateMode};

use human::{render_board, HumanAgent};

#[derive(Parser)]
#[command(
    name = "riskgcn",
    version,
    about = "Risk agent toolkit: data, training, search and tournaments"
)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    /// One JSON record per line.
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Play baseline-bot matches and write their turn end-states as a dataset.
    GenData(GenDataArgs),
    /// Fit a network to a dataset with TD(lambda).
    Train(TrainArgs),
    /// Seat-rotated matches with placement statistics.
    Tournament(TournamentArgs),
    /// Terminal-state distribution of one attack.
    BattleTable(BattleArgs),
    /// Feature vectors of a position.
    Features(FeaturesArgs),
    /// Interactive match in the terminal.
    Play(PlayArgs),
    /// Re-run a match log and verify it.
    Replay(ReplayArgs),
    /// Check a model and search settings, then play demo matches.
    Agent(AgentArgs),
    /// Print the effective configuration as TOML.
    ShowConfig(RulesArgs),
}

#[derive(Args, Clone, Default)]
struct RulesArgs {
    /// Map file (defaults to the classic map).
    #[arg(long)]
    map: Option<String>,
    #[arg(long)]
    turn_cap: Option<u32>,
    /// Starting armies per player; must cover the map.
    #[arg(long)]
    initial_armies: Option<u32>,
}

#[derive(Args, Clone, Default)]
struct SearchArgs {
    #[arg(long)]
    risky: Option<f64>,
    #[arg(long)]
    tp: Option<u32>,
    #[arg(long)]
    gp: Option<u32>,
    #[arg(long)]
    ga: Option<u32>,
    #[arg(long)]
    gf: Option<u32>,
    /// Seconds per search.
    #[arg(long)]
    search_time: Option<f64>,
    /// Nodes per search. Without --search-time this also disables the clock.
    #[arg(long)]
    node_budget: Option<usize>,
    #[arg(long)]
    endgame_threshold: Option<f64>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(short = 'n', long)]
    matches: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    players: Option<usize>,
    /// Comma-separated bot names seated round-robin.
    #[arg(long, value_delimiter = ',')]
    bots: Option<Vec<String>>,
    #[command(flatten)]
    rules: RulesArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Episode,
    Epoch,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Continue from this model instead of a fresh network.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Seed for a fresh network.
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
struct TournamentArgs {
    /// Comma-separated roster: random, aggressor, clusterer, turtle, agent.
    #[arg(long, value_delimiter = ',', required = true)]
    agents: Vec<String>,
    #[arg(short = 'n', long)]
    matches: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    players: Option<usize>,
    /// Model for `agent` seats.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Write the statistics as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one match record per line here.
    #[arg(long)]
    records: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    rules: RulesArgs,
}

#[derive(Args)]
struct BattleArgs {
    /// Committed attackers.
    attackers: u32,
    defenders: u32,
    #[arg(long)]
    risky: Option<f64>,
    /// Exact rational probabilities.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct FeaturesArgs {
    /// Take the state before this entry of a match log instead of a fresh deal.
    #[arg(long, requires = "entry")]
    log: Option<PathBuf>,
    #[arg(long)]
    entry: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    players: usize,
    #[command(flatten)]
    rules: RulesArgs,
}

#[derive(Args)]
struct PlayArgs {
    /// Comma-separated seats; `human` seats read moves from the terminal.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "human,random,aggressor,clusterer,turtle,random"
    )]
    agents: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Save the match log here.
    #[arg(long)]
    log_out: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    rules: RulesArgs,
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
    /// Print every move.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct AgentArgs {
    #[arg(long)]
    model: PathBuf,
    /// Demo matches to play; 0 only validates.
    #[arg(short = 'n', long, default_value_t = 1)]
    matches: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "random,aggressor,clusterer,turtle,random"
    )]
    opponents: Vec<String>,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    rules: RulesArgs,
}

struct Out {
    format: Format,
    stdout: io::Stdout,
}

impl Out {
    fn emit(&mut self, human: &str, record: Value) -> Result<()> {
        let mut lock = self.stdout.lock();
        match self.format {
            Format::Human => write!(lock, "{human}")?,
            Format::Json => writeln!(lock, "{record}")?,
        }
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    Ok(match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    })
}

fn apply_rules(cfg: &mut Config, r: &RulesArgs) {
    if let Some(m) = &r.map {
        cfg.rules.map = Some(m.clone());
    }
    if let Some(c) = r.turn_cap {
        cfg.rules.turn_cap = c;
    }
    if let Some(a) = r.initial_armies {
        cfg.rules.initial_armies = a;
    }
}

fn apply_search(cfg: &mut SearchConfig, s: &SearchArgs) {
    macro_rules! set {
        ($($f:ident),*) => {$(if let Some(v) = s.$f { cfg.$f = v; })*};
    }
    set!(risky, tp, gp, ga, gf, endgame_threshold);
    if let Some(n) = s.node_budget {
        cfg.node_budget = Some(n);
        cfg.search_time = None;
    }
    if let Some(t) = s.search_time {
        cfg.search_time = Some(t);
    }
}

fn load_model(path: &Path, rules: &Rules) -> Result<Arc<Network>> {
    if !path.exists() {
        bail!("model file {} does not exist", path.display());
    }
    let net = Network::load_for(path, &rules.map).with_context(|| format!("loading model {}", path.display()))?;
    Ok(Arc::new(net))
}

/// Roster entry for a named agent. `agent` needs a model.
fn roster_entry(
    name: &str,
    model: Option<&Arc<Network>>,
    search: &SearchConfig,
    cache: &Arc<TableCache>,
) -> Result<RosterEntry> {
    if let Some(kind) = BotKind::parse(name) {
        return Ok(RosterEntry::new(name, move |seed| kind.build(seed)));
    }
    if name == "agent" {
        let net: Arc<dyn Evaluator> = model.ok_or_else(|| anyhow!("`agent` seats need --model"))?.clone();
        let cache = cache.clone();
        let cfg = search.clone();
        cfg.validate()?;
        return Ok(RosterEntry::new(name, move |_| {
            Box::new(SearchAgent::new("agent", net.clone(), cache.clone(), cfg.clone()).expect("validated"))
        }));
    }
    bail!("unknown agent `{name}` (expected random, aggressor, clusterer, turtle or agent)")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    let mut out = Out {
        format: cli.format,
        stdout: io::stdout(),
    };
    match cli.cmd {
        Cmd::GenData(a) => gen_data(&mut cfg, a, &mut out),
        Cmd::Train(a) => train(&mut cfg, a, &mut out),
        Cmd::Tournament(a) => run_tournament(&mut cfg, a, &mut out),
        Cmd::BattleTable(a) => battle_table(&mut cfg, a, &mut out),
        Cmd::Features(a) => show_features(&mut cfg, a, &mut out),
        Cmd::Play(a) => play(&mut cfg, a, &mut out),
        Cmd::Replay(a) => replay(a, &mut out),
        Cmd::Agent(a) => agent(&mut cfg, a, &mut out),
        Cmd::ShowConfig(r) => {
            apply_rules(&mut cfg, &r);
            cfg.validate()?;
            let text = cfg.to_toml();
            out.emit(&text, json!({ "config": text }))
        }
    }
}

fn gen_data(cfg: &mut Config, a: GenDataArgs, out: &mut Out) -> Result<()> {
    apply_rules(cfg, &a.rules);
    if let Some(n) = a.matches {
        cfg.data.matches = n;
    }
    if let Some(s) = a.seed {
        cfg.data.seed = s;
    }
    if let Some(p) = a.players {
        cfg.data.players = p;
    }
    if let Some(b) = a.bots {
        cfg.data.bots = b;
    }
    cfg.validate()?;
    if cfg.data.matches == 0 {
        bail!("need at least one match");
    }
    if a.out.exists() {
        bail!("{} already exists; datasets are write-once", a.out.display());
    }
    let rules = Arc::new(cfg.rules.build()?);
    let bots: Vec<BotKind> = cfg
        .data
        .bots
        .iter()
        .map(|b| BotKind::parse(b).expect("validated"))
        .collect();
    let data = generate_dataset(rules, &bots, cfg.data.players, cfg.data.matches, cfg.data.seed)?;
    write_dataset(&a.out, &data)?;
    let truncated = data.episodes.iter().filter(|e| e.truncated).count();
    let states = data.turn_states();
    out.emit(
        &format!(
            "wrote {} episodes, {states} turn end-states ({truncated} truncated) to {}\n",
            data.episodes.len(),
            a.out.display()
        ),
        json!({"record": "dataset", "episodes": data.episodes.len(), "states": states, "truncated": truncated, "path": a.out}),
    )
}

fn train(cfg: &mut Config, a: TrainArgs, out: &mut Out) -> Result<()> {
    let t = &mut cfg.train;
    if let Some(e) = a.epochs {
        t.epochs = e;
    }
    if let Some(l) = a.lambda {
        t.lambda = l;
    }
    if let Some(al) = a.alpha {
        t.alpha = al;
    }
    if let Some(m) = a.mode {
        t.mode = match m {
            ModeArg::Episode => UpdateMode::Episode,
            ModeArg::Epoch => UpdateMode::Epoch,
        };
    }
    cfg.validate()?;
    let data = read_dataset(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let rules = data.rules.to_rules()?;
    let mut net = match &a.init {
        Some(p) => Network::load_for(p, &rules.map)?,
        None => {
            let mut n = Network::init_with(&rules.map, cfg.network.arch(&rules.map), a.init_seed)?;
            n.feature_config = cfg.features;
            td::fit_normalizer(&mut n, &rules, &data.episodes)?;
            n
        }
    };
    let prepared: Vec<Prepared> = data.episodes.iter().map(|e| Prepared::new(&net, &rules, e)).collect();
    let report = td::train(&mut net, &prepared, &cfg.train)?;
    net.save(&a.out)?;
    out.emit(
        &format!("untrained mean |d| {:.6}\n", report.initial_mean_abs_td),
        json!({"record": "initial", "mean_abs_td": report.initial_mean_abs_td}),
    )?;
    for e in &report.epochs {
        out.emit(
            &format!("epoch {} mean |d| {:.6}\n", e.epoch + 1, e.mean_abs_td),
            json!({"record": "epoch", "stats": e}),
        )?;
    }
    out.emit(
        &format!("saved {}\n", a.out.display()),
        json!({"record": "model", "path": a.out}),
    )
}

fn run_tournament(cfg: &mut Config, a: TournamentArgs, out: &mut Out) -> Result<()> {
    apply_rules(cfg, &a.rules);
    apply_search(&mut cfg.search, &a.search);
    if let Some(n) = a.matches {
        cfg.tournament.matches = n;
    }
    if let Some(s) = a.seed {
        cfg.tournament.seed = s;
    }
    if let Some(p) = a.players {
        cfg.tournament.players = p;
    }
    cfg.validate()?;
    if a.agents.len() > cfg.tournament.players {
        bail!("{} agents for {} seats", a.agents.len(), cfg.tournament.players);
    }
    let rules = Arc::new(cfg.rules.build()?);
    let model = a.model.as_deref().map(|p| load_model(p, &rules)).transpose()?;
    let cache = Arc::new(TableCache::default());
    let roster = a
        .agents
        .iter()
        .map(|n| roster_entry(n, model.as_ref(), &cfg.search, &cache))
        .collect::<Result<Vec<_>>>()?;
    let (report, records) = tournament(rules, &roster, &cfg.tournament)?;
    if let Some(p) = &a.out {
        fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    if let Some(p) = &a.records {
        let mut w = BufWriter::new(fs::File::create(p)?);
        for r in &records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
    }
    match out.format {
        Format::Human => out.emit(&report.to_table(), Value::Null),
        Format::Json => {
            for s in &report.agents {
                out.emit("", json!({"record": "agent", "stats": s}))?;
            }
            out.emit(
                "",
                json!({"record": "summary", "counted": report.counted, "truncated": report.truncated,
                       "aborted": report.aborted, "mean_turns": report.mean_turns, "config": report.config}),
            )
        }
    }
}

fn battle_table(cfg: &mut Config, a: BattleArgs, out: &mut Out) -> Result<()> {
    let risky = a.risky.unwrap_or(cfg.search.risky);
    let table = build_terminal_table::<f64>(a.attackers, a.defenders)?;
    let pick = select_index(&table, risky)?;
    let exact = a
        .exact
        .then(|| build_terminal_table::<riskgcn::battle::BigRational>(a.attackers, a.defenders))
        .transpose()?;
    let mut text = format!("attack {} vs {} (risky {risky})\n", a.attackers, a.defenders);
    let mut cum = 0.0;
    for (i, e) in table.entries.iter().enumerate() {
        cum += e.p;
        let exact_p = exact.as_ref().map(|t| t.entries[i].p.to_string());
        let mark = if i == pick { "  <= selected" } else { "" };
        text.push_str(&format!(
            "{i:>3}  a={:<3} d={:<3} p={:.6} cum={:.6}{}{mark}\n",
            e.attackers,
            e.defenders,
            e.p,
            cum,
            exact_p.as_deref().map(|s| format!(" ({s})")).unwrap_or_default()
        ));
        if out.format == Format::Json {
            out.emit(
                "",
                json!({"record": "entry", "index": i, "attackers": e.attackers, "defenders": e.defenders,
                       "p": e.p, "cumulative": cum, "exact": exact_p, "selected": i == pick}),
            )?;
        }
    }
    text.push_str(&format!("conquest probability {:.6}\n", table.conquest_probability()));
    out.emit(
        &text,
        json!({"record": "selection", "index": pick, "conquest_probability": table.conquest_probability()}),
    )
}

fn show_features(cfg: &mut Config, a: FeaturesArgs, out: &mut Out) -> Result<()> {
    let (rules, pos) = match &a.log {
        Some(p) => {
            let log = MatchLog::read_from(BufReader::new(fs::File::open(p)?))?;
            let entry = a.entry.expect("clap requires --entry");
            if entry > log.entries.len() {
                bail!("log has {} entries", log.entries.len());
            }
            let mut trimmed = log.clone();
            trimmed.entries.truncate(entry);
            let state = trimmed.replay()?;
            (log.rules.to_rules()?, state.position().clone())
        }
        None => {
            apply_rules(cfg, &a.rules);
            let rules = cfg.rules.build()?;
            let pos = new_game(Arc::new(rules.clone()), a.players, rules.initial_armies, a.seed)?
                .position()
                .clone();
            (rules, pos)
        }
    };
    let fs_ = features::extract(&rules, &pos, &cfg.features);
    let global: Vec<f64> = fs_.global.to_vec();
    let board: Vec<Vec<f64>> = fs_.board.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut text = format!(
        "global ({}):\n  current: {:.0?}\n",
        global.len(),
        &global[..features::PLAYER_BLOCK]
    );
    for p in 0..MAX_PLAYERS {
        let block = features::player_block(&fs_.global, PlayerId(p as u8));
        text.push_str(&format!(
            "  P{p} army/income/territory/cards/defence: {:.4?}\n",
            block.to_vec()
        ));
    }
    for (c, chunk) in global[features::CONTINENT_BLOCK..].chunks(MAX_PLAYERS).enumerate() {
        text.push_str(&format!("  continent {c} army shares: {chunk:.3?}\n"));
    }
    text.push_str(&format!("board ({} x {}):\n", board.len(), features::BOARD_DIM));
    for (t, row) in board.iter().enumerate() {
        text.push_str(&format!("  {t:>3}: {row:.2?}\n"));
    }
    out.emit(&text, json!({"record": "features", "global": global, "board": board}))
}

fn build_seats(
    names: &[String],
    model: Option<&Arc<Network>>,
    search: &SearchConfig,
    cache: &Arc<TableCache>,
    seed: u64,
) -> Result<Vec<Box<dyn Agent>>> {
    names
        .iter()
        .enumerate()
        .map(|(i, n)| -> Result<Box<dyn Agent>> {
            if n == "human" {
                return Ok(Box::new(HumanAgent::new(BufReader::new(io::stdin()), io::stdout())));
            }
            let entry = roster_entry(n, model, search, cache)?;
            Ok((entry.factory)(seed.wrapping_add(1 + i as u64)))
        })
        .collect()
}

fn play(cfg: &mut Config, a: PlayArgs, out: &mut Out) -> Result<()> {
    apply_rules(cfg, &a.rules);
    apply_search(&mut cfg.search, &a.search);
    cfg.validate()?;
    if !(2..=6).contains(&a.agents.len()) {
        bail!("need 2 to 6 seats, got {}", a.agents.len());
    }
    let rules = Arc::new(cfg.rules.build()?);
    let model = a.model.as_deref().map(|p| load_model(p, &rules)).transpose()?;
    let cache = Arc::new(TableCache::default());
    let mut seats = build_seats(&a.agents, model.as_ref(), &cfg.search, &cache, a.seed)?;
    let (record, log) = run_match(rules.clone(), &mut seats, a.seed)?;
    if let Some(p) = &a.log_out {
        log.write_to(BufWriter::new(fs::File::create(p)?))?;
    }
    let final_state = log.replay()?;
    let places: Vec<String> = record
        .placements
        .iter()
        .map(|p| format!("P{} {}", p.0, record.roster[p.index()]))
        .collect();
    let mut text = render_board(&final_state);
    text.push_str(&format!(
        "turns {}{}\n",
        record.turns,
        if record.truncated { " (cap)" } else { "" }
    ));
    if let Some(why) = &record.aborted {
        text.push_str(&format!("aborted: {why}\n"));
    }
    text.push_str(&format!("placements: {}\n", places.join(", ")));
    out.emit(
        &text,
        json!({"record": "match", "turns": record.turns, "truncated": record.truncated, "winner": record.winner,
               "placements": record.placements, "roster": record.roster, "aborted": record.aborted}),
    )?;
    if let Some(why) = record.aborted {
        bail!("match aborted: {why}");
    }
    Ok(())
}

fn replay(a: ReplayArgs, out: &mut Out) -> Result<()> {
    let log = MatchLog::read_from(BufReader::new(
        fs::File::open(&a.log).with_context(|| format!("opening {}", a.log.display()))?,
    ))?;
    let verbose = a.verbose;
    let mut lines = Vec::new();
    let end = log.replay_with(|i, s, e| {
        if verbose {
            lines.push((i, s.turn(), e.player, e.mv.to_string()));
        }
    })?;
    for (i, turn, p, mv) in lines {
        out.emit(
            &format!("{i:>6} t{turn:<4} P{} {mv}\n", p.0),
            json!({"record": "move", "index": i, "turn": turn, "player": p, "move": mv}),
        )?;
    }
    let winner = end.winner();
    out.emit(
        &format!(
            "replayed {} moves: turn {}, {}\n",
            log.entries.len(),
            end.turn(),
            match winner {
                Some(PlayerId(w)) => format!("winner P{w} ({})", log.roster[w as usize]),
                None if end.truncated() => "truncated at the turn cap".into(),
                None => "unfinished".into(),
            }
        ),
        json!({"record": "replay", "moves": log.entries.len(), "turn": end.turn(), "winner": winner,
               "truncated": end.truncated(), "verified": true}),
    )
}

fn agent(cfg: &mut Config, a: AgentArgs, out: &mut Out) -> Result<()> {
    apply_rules(cfg, &a.rules);
    apply_search(&mut cfg.search, &a.search);
    cfg.validate()?;
    let rules = Arc::new(cfg.rules.build()?);
    let model = load_model(&a.model, &rules)?;
    out.emit(
        &format!("agent ready: model {}\n{}", a.model.display(), toml_search(&cfg.search)),
        json!({"record": "agent", "model": a.model, "search": cfg.search}),
    )?;
    if a.matches == 0 {
        return Ok(());
    }
    let cache = Arc::new(TableCache::default());
    let mut names = vec!["agent".to_string()];
    names.extend(a.opponents.iter().cloned());
    let roster = names
        .iter()
        .map(|n| roster_entry(n, Some(&model), &cfg.search, &cache))
        .collect::<Result<Vec<_>>>()?;
    let tcfg = TournamentConfig {
        matches: a.matches,
        seed: a.seed,
        players: names.len().max(2),
        ..cfg.tournament.clone()
    };
    let (report, _) = tournament(rules, &roster, &tcfg)?;
    out.emit(&report.to_table(), json!({"record": "demo", "report": report}))
}

fn toml_search(s: &SearchConfig) -> String {
    let c = Config {
        search: s.clone(),
        ..Config::default()
    };
    let text = c.to_toml();
    let start = text.find("[search]").unwrap_or(0);
    let rest = &text[start..];
    let end = rest[1..].find("\n[").map(|i| i + 2).unwrap_or(rest.len());
    rest[..end].to_string()
}
