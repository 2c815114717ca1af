//! Board graph: territories, continents and adjacency.
//!
//! Maps are stored in a small line-oriented text format:
//!
//! ```text
//! riskmap 1
//! name classic
//! continent <id> <bonus> <name>
//! territory <id> <continent-id> <name>
//! adjacent <id> <id>
//! ```
//!
//! Blank lines and `#` comments are ignored. Ids must be dense and start at 0.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Highest map-format version this loader understands.
pub const MAP_FORMAT_VERSION: u32 = 1;

/// Upper bound on continents. Feature vectors reserve one slot per continent.
pub const MAX_CONTINENTS: usize = 6;

const CLASSIC_MAP: &str = include_str!("../../data/classic.map");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TerritoryId(pub u16);

impl TerritoryId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TerritoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContinentId(pub u8);

impl ContinentId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Territory {
    pub id: TerritoryId,
    pub name: String,
    pub continent: ContinentId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Continent {
    pub id: ContinentId,
    pub name: String,
    pub bonus: u32,
    pub members: Vec<TerritoryId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MapError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported map format version {0}")]
    Version(u32),
    #[error("missing `riskmap <version>` header")]
    MissingHeader,
    #[error("ids for {kind} must be dense starting at 0, found {found}")]
    SparseIds { kind: &'static str, found: usize },
    #[error("territory {0} references unknown continent {1}")]
    UnknownContinent(usize, usize),
    #[error("adjacency {0}-{1} references an unknown territory")]
    UnknownTerritory(usize, usize),
    #[error("territory {0} is adjacent to itself")]
    SelfLoop(usize),
    #[error("continent {0} has no territories")]
    EmptyContinent(usize),
    #[error("map has {0} continents, at most {MAX_CONTINENTS} are supported")]
    TooManyContinents(usize),
    #[error("map has no territories")]
    Empty,
}

/// Immutable board definition. Adjacency is symmetric and irreflexive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapDef {
    name: String,
    territories: Vec<Territory>,
    continents: Vec<Continent>,
    neighbours: Vec<Vec<TerritoryId>>,
    border: Vec<bool>,
}

impl MapDef {
    /// The bundled classic world map.
    pub fn classic() -> MapDef {
        MapDef::parse(CLASSIC_MAP).expect("bundled classic map is valid")
    }

    /// Builds and validates a map from raw parts. Edges may be listed in
    /// either direction; duplicates are collapsed.
    pub fn new(
        name: impl Into<String>,
        continents: Vec<(String, u32)>,
        territories: Vec<(String, usize)>,
        edges: &[(usize, usize)],
    ) -> Result<MapDef, MapError> {
        if territories.is_empty() {
            return Err(MapError::Empty);
        }
        if continents.len() > MAX_CONTINENTS {
            return Err(MapError::TooManyContinents(continents.len()));
        }
        let mut conts: Vec<Continent> = continents
            .into_iter()
            .enumerate()
            .map(|(i, (name, bonus))| Continent {
                id: ContinentId(i as u8),
                name,
                bonus,
                members: Vec::new(),
            })
            .collect();
        let mut terrs = Vec::with_capacity(territories.len());
        for (i, (name, c)) in territories.into_iter().enumerate() {
            let cont = conts.get_mut(c).ok_or(MapError::UnknownContinent(i, c))?;
            cont.members.push(TerritoryId(i as u16));
            terrs.push(Territory {
                id: TerritoryId(i as u16),
                name,
                continent: ContinentId(c as u8),
            });
        }
        if let Some(c) = conts.iter().find(|c| c.members.is_empty()) {
            return Err(MapError::EmptyContinent(c.id.index()));
        }
        let n = terrs.len();
        let mut neighbours = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(MapError::UnknownTerritory(a, b));
            }
            if a == b {
                return Err(MapError::SelfLoop(a));
            }
            neighbours[a].push(TerritoryId(b as u16));
            neighbours[b].push(TerritoryId(a as u16));
        }
        for list in &mut neighbours {
            list.sort_unstable();
            list.dedup();
        }
        let border = (0..n)
            .map(|i| {
                neighbours[i]
                    .iter()
                    .any(|j| terrs[j.index()].continent != terrs[i].continent)
            })
            .collect();
        Ok(MapDef {
            name: name.into(),
            territories: terrs,
            continents: conts,
            neighbours,
            border,
        })
    }

    pub fn parse(text: &str) -> Result<MapDef, MapError> {
        let mut version = None;
        let mut name = String::from("unnamed");
        let mut continents: Vec<(usize, String, u32)> = Vec::new();
        let mut territories: Vec<(usize, String, usize)> = Vec::new();
        let mut edges = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let line_no = lineno + 1;
            let err = |msg: &str| MapError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            let mut parts = line.splitn(2, char::is_whitespace);
            let keyword = parts.next().unwrap_or("");
            let rest = parts.next().unwrap_or("").trim();
            let int = |s: Option<&str>, what: &str| -> Result<usize, MapError> {
                s.ok_or_else(|| err(&format!("missing {what}")))?
                    .parse::<usize>()
                    .map_err(|_| err(&format!("invalid {what}")))
            };
            if version.is_none() && keyword != "riskmap" {
                return Err(MapError::MissingHeader);
            }
            match keyword {
                "riskmap" => {
                    let v = int(Some(rest), "version")? as u32;
                    if v == 0 || v > MAP_FORMAT_VERSION {
                        return Err(MapError::Version(v));
                    }
                    version = Some(v);
                }
                "name" => name = rest.to_string(),
                "continent" => {
                    let mut f = rest.splitn(3, char::is_whitespace);
                    let id = int(f.next(), "continent id")?;
                    let bonus = int(f.next(), "continent bonus")? as u32;
                    let cname = f.next().unwrap_or("").trim().to_string();
                    continents.push((id, cname, bonus));
                }
                "territory" => {
                    let mut f = rest.splitn(3, char::is_whitespace);
                    let id = int(f.next(), "territory id")?;
                    let cont = int(f.next(), "continent id")?;
                    let tname = f.next().unwrap_or("").trim().to_string();
                    territories.push((id, tname, cont));
                }
                "adjacent" => {
                    let mut f = rest.split_whitespace();
                    let a = int(f.next(), "territory id")?;
                    let b = int(f.next(), "territory id")?;
                    if f.next().is_some() {
                        return Err(err("trailing tokens"));
                    }
                    edges.push((a, b));
                }
                other => return Err(err(&format!("unknown keyword `{other}`"))),
            }
        }
        if version.is_none() {
            return Err(MapError::MissingHeader);
        }
        continents.sort_by_key(|c| c.0);
        territories.sort_by_key(|t| t.0);
        for (i, c) in continents.iter().enumerate() {
            if c.0 != i {
                return Err(MapError::SparseIds {
                    kind: "continents",
                    found: c.0,
                });
            }
        }
        for (i, t) in territories.iter().enumerate() {
            if t.0 != i {
                return Err(MapError::SparseIds {
                    kind: "territories",
                    found: t.0,
                });
            }
        }
        MapDef::new(
            name,
            continents.into_iter().map(|(_, n, b)| (n, b)).collect(),
            territories.into_iter().map(|(_, n, c)| (n, c)).collect(),
            &edges,
        )
    }

    /// Serializes back to the text format accepted by [`MapDef::parse`].
    pub fn to_text(&self) -> String {
        let mut out = format!("riskmap {MAP_FORMAT_VERSION}\nname {}\n", self.name);
        for c in &self.continents {
            out.push_str(&format!("continent {} {} {}\n", c.id.0, c.bonus, c.name));
        }
        for t in &self.territories {
            out.push_str(&format!("territory {} {} {}\n", t.id.0, t.continent.0, t.name));
        }
        for (a, list) in self.neighbours.iter().enumerate() {
            for b in list.iter().filter(|b| b.index() > a) {
                out.push_str(&format!("adjacent {} {}\n", a, b.0));
            }
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn territory_count(&self) -> usize {
        self.territories.len()
    }

    pub fn territories(&self) -> &[Territory] {
        &self.territories
    }

    pub fn territory(&self, t: TerritoryId) -> &Territory {
        &self.territories[t.index()]
    }

    pub fn continents(&self) -> &[Continent] {
        &self.continents
    }

    pub fn continent_of(&self, t: TerritoryId) -> ContinentId {
        self.territories[t.index()].continent
    }

    pub fn neighbours(&self, t: TerritoryId) -> &[TerritoryId] {
        &self.neighbours[t.index()]
    }

    pub fn adjacent(&self, a: TerritoryId, b: TerritoryId) -> bool {
        self.neighbours[a.index()].binary_search(&b).is_ok()
    }

    /// True iff `t` touches a territory of another continent.
    pub fn is_continent_border(&self, t: TerritoryId) -> bool {
        self.border[t.index()]
    }

    pub fn territory_ids(&self) -> impl Iterator<Item = TerritoryId> + '_ {
        (0..self.territories.len()).map(|i| TerritoryId(i as u16))
    }

    /// Undirected edge list with `a < b`.
    pub fn edges(&self) -> Vec<(TerritoryId, TerritoryId)> {
        let mut out = Vec::new();
        for (a, list) in self.neighbours.iter().enumerate() {
            for &b in list.iter().filter(|b| b.index() > a) {
                out.push((TerritoryId(a as u16), b));
            }
        }
        out
    }

    /// Stable 64-bit fingerprint of the graph structure (FNV-1a).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(self.territories.len() as u64);
        for t in &self.territories {
            eat(t.continent.0 as u64);
        }
        for (a, b) in self.edges() {
            eat(a.0 as u64);
            eat(b.0 as u64);
        }
        h
    }
}
