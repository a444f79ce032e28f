//! Reader for the subset of the MATPOWER case format used here: `baseMVA`,
//! `bus`, `branch` and `gen`. Every other `mpc.*` assignment (cost tables,
//! cell arrays of names, version strings) is skipped.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub kind: BusType,
    /// Active and reactive demand, per unit.
    pub pd: f64,
    pub qd: f64,
    /// Shunt conductance and susceptance at 1 p.u. voltage, per unit.
    pub gs: f64,
    pub bs: f64,
    pub vm: f64,
    /// Radians.
    pub va: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    /// Off-nominal turns ratio on the from side (1.0 for lines).
    pub tap: f64,
    /// Phase shift, radians.
    pub shift: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gen {
    pub bus: u32,
    pub pg: f64,
    pub qg: f64,
    pub vset: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub in_service: bool,
}

/// A validated transmission network in per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseNetwork {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gens: Vec<Gen>,
}

impl CaseNetwork {
    /// Map from bus id to its position in `buses`.
    pub fn bus_index(&self) -> HashMap<u32, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusType::Slack)
    }

    /// Number of distinct neighbours of every bus over in-service branches.
    pub fn degrees(&self) -> Vec<usize> {
        let index = self.bus_index();
        let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); self.buses.len()];
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (f, t) = (index[&br.from], index[&br.to]);
            if f != t {
                adj[f].insert(t);
                adj[t].insert(f);
            }
        }
        adj.iter().map(HashSet::len).collect()
    }

    /// Scheduled complex injection `Σ gen − load` per bus, per unit.
    pub fn scheduled_injection(&self) -> Vec<(f64, f64)> {
        let index = self.bus_index();
        let mut s: Vec<(f64, f64)> = self.buses.iter().map(|b| (-b.pd, -b.qd)).collect();
        for g in self.gens.iter().filter(|g| g.in_service) {
            let k = index[&g.bus];
            s[k].0 += g.pg;
            s[k].1 += g.qg;
        }
        s
    }

    /// `true` when every bus is reachable from the first one.
    pub fn is_connected(&self) -> bool {
        if self.buses.is_empty() {
            return true;
        }
        let index = self.bus_index();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.buses.len()];
        for br in self.branches.iter().filter(|b| b.in_service) {
            let (Some(&f), Some(&t)) = (index.get(&br.from), index.get(&br.to)) else {
                continue;
            };
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut seen = vec![false; self.buses.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(k) = stack.pop() {
            for &j in &adj[k] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Checks every network invariant and names the offending entity.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCase(m));
        if !(self.base_mva > 0.0) {
            return bad(format!("baseMVA must be positive, got {}", self.base_mva));
        }
        if self.buses.is_empty() {
            return bad("case has no buses".into());
        }
        let mut ids = HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return bad(format!("duplicate bus id {}", b.id));
            }
        }
        let slacks: Vec<u32> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusType::Slack)
            .map(|b| b.id)
            .collect();
        match slacks.len() {
            0 => return bad("no slack (type 3) bus".into()),
            1 => {}
            _ => return bad(format!("multiple slack buses: {slacks:?}")),
        }
        for br in &self.branches {
            for end in [br.from, br.to] {
                if !ids.contains(&end) {
                    return bad(format!(
                        "branch {}-{} references unknown bus {end}",
                        br.from, br.to
                    ));
                }
            }
            if br.in_service && br.r == 0.0 && br.x == 0.0 {
                return Err(Error::ZeroImpedance {
                    from: br.from,
                    to: br.to,
                });
            }
        }
        for g in &self.gens {
            if !ids.contains(&g.bus) {
                return bad(format!("generator references unknown bus {}", g.bus));
            }
        }
        if self.buses.len() > 1 {
            let degrees = self.degrees();
            if let Some(k) = degrees.iter().position(|&d| d == 0) {
                return bad(format!("bus {} is isolated", self.buses[k].id));
            }
            if !self.is_connected() {
                return bad("network is not connected".into());
            }
        }
        Ok(())
    }
}

/// Parses a MATPOWER case file into a validated [`CaseNetwork`]. Powers are
/// divided by `baseMVA`, angles converted to radians, and out-of-service
/// branches dropped.
pub fn parse_matpower(text: &str) -> Result<CaseNetwork> {
    let tables = scan(text)?;
    let base_mva = tables
        .base_mva
        .ok_or_else(|| Error::InvalidCase("missing mpc.baseMVA".into()))?;
    let bus_rows = tables
        .matrices
        .get("bus")
        .ok_or_else(|| Error::InvalidCase("missing mpc.bus".into()))?;
    let branch_rows = tables
        .matrices
        .get("branch")
        .ok_or_else(|| Error::InvalidCase("missing mpc.branch".into()))?;
    let empty = Vec::new();
    let gen_rows = tables.matrices.get("gen").unwrap_or(&empty);

    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in bus_rows {
        row.require(13, "bus")?;
        let v = &row.values;
        let kind = match v[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            4 => {
                return Err(Error::Syntax {
                    line: row.line,
                    msg: format!("bus {} is marked isolated (type 4)", v[0]),
                })
            }
            other => {
                return Err(Error::Syntax {
                    line: row.line,
                    msg: format!("unknown bus type {other}"),
                })
            }
        };
        buses.push(Bus {
            id: row.id(0)?,
            kind,
            pd: v[2] / base_mva,
            qd: v[3] / base_mva,
            gs: v[4] / base_mva,
            bs: v[5] / base_mva,
            vm: v[7],
            va: v[8].to_radians(),
        });
    }

    let mut gens = Vec::with_capacity(gen_rows.len());
    for row in gen_rows {
        row.require(10, "gen")?;
        let v = &row.values;
        gens.push(Gen {
            bus: row.id(0)?,
            pg: v[1] / base_mva,
            qg: v[2] / base_mva,
            qmax: v[3] / base_mva,
            qmin: v[4] / base_mva,
            vset: v[5],
            in_service: v[7] > 0.0,
        });
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in branch_rows {
        row.require(13, "branch")?;
        let v = &row.values;
        if v[10] <= 0.0 {
            continue;
        }
        branches.push(Branch {
            from: row.id(0)?,
            to: row.id(1)?,
            r: v[2],
            x: v[3],
            b: v[4],
            tap: if v[8] == 0.0 { 1.0 } else { v[8] },
            shift: v[9].to_radians(),
            in_service: true,
        });
    }

    let net = CaseNetwork {
        base_mva,
        buses,
        branches,
        gens,
    };
    net.validate()?;
    Ok(net)
}

struct Row {
    line: usize,
    values: Vec<f64>,
}

impl Row {
    fn require(&self, cols: usize, table: &str) -> Result<()> {
        if self.values.len() < cols {
            return Err(Error::Syntax {
                line: self.line,
                msg: format!(
                    "{table} row has {} columns, at least {cols} required",
                    self.values.len()
                ),
            });
        }
        Ok(())
    }

    fn id(&self, col: usize) -> Result<u32> {
        let v = self.values[col];
        if v.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&v) {
            return Err(Error::Syntax {
                line: self.line,
                msg: format!("invalid bus number {v}"),
            });
        }
        Ok(v as u32)
    }
}

#[derive(Default)]
struct Tables {
    base_mva: Option<f64>,
    matrices: HashMap<String, Vec<Row>>,
}

enum State {
    Top,
    Matrix {
        name: String,
        rows: Vec<Row>,
        current: Vec<f64>,
        start: usize,
    },
    Cell,
}

fn scan(text: &str) -> Result<Tables> {
    let mut tables = Tables::default();
    let mut state = State::Top;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = strip_comment(raw);
        let mut rest = line.trim();
        loop {
            match &mut state {
                State::Top => {
                    if rest.is_empty() || rest.starts_with("function") {
                        break;
                    }
                    let Some(assign) = rest.strip_prefix("mpc.") else {
                        return Err(Error::Syntax {
                            line: line_no,
                            msg: format!("unexpected statement `{rest}`"),
                        });
                    };
                    let Some((name, value)) = assign.split_once('=') else {
                        return Err(Error::Syntax {
                            line: line_no,
                            msg: "expected `=`".into(),
                        });
                    };
                    let name = name.trim().to_string();
                    let value = value.trim();
                    if let Some(body) = value.strip_prefix('[') {
                        state = State::Matrix {
                            name,
                            rows: Vec::new(),
                            current: Vec::new(),
                            start: line_no,
                        };
                        rest = body;
                        continue;
                    }
                    if let Some(body) = value.strip_prefix('{') {
                        state = State::Cell;
                        rest = body;
                        continue;
                    }
                    if name == "baseMVA" {
                        let num = value.trim_end_matches(';').trim();
                        let v = parse_number(num).ok_or_else(|| Error::Syntax {
                            line: line_no,
                            msg: format!("invalid baseMVA `{num}`"),
                        })?;
                        tables.base_mva = Some(v);
                    }
                    break;
                }
                State::Cell => match find_unquoted(rest, '}') {
                    Some(pos) => {
                        state = State::Top;
                        rest = rest[pos + 1..].trim_start_matches(';').trim();
                        continue;
                    }
                    None => break,
                },
                State::Matrix {
                    name,
                    rows,
                    current,
                    start,
                } => {
                    let (body, closed) = match rest.find(']') {
                        Some(pos) => (&rest[..pos], Some(pos)),
                        None => (rest, None),
                    };
                    for chunk in body.split_inclusive(';') {
                        let ends_row = chunk.ends_with(';');
                        for tok in chunk
                            .trim_end_matches(';')
                            .split(|c: char| c.is_whitespace() || c == ',')
                            .filter(|t| !t.is_empty())
                        {
                            let v = parse_number(tok).ok_or_else(|| Error::Syntax {
                                line: line_no,
                                msg: format!("invalid number `{tok}` in mpc.{name}"),
                            })?;
                            if current.is_empty() {
                                *start = line_no;
                            }
                            current.push(v);
                        }
                        if ends_row && !current.is_empty() {
                            rows.push(Row {
                                line: *start,
                                values: std::mem::take(current),
                            });
                        }
                    }
                    match closed {
                        Some(pos) => {
                            if !current.is_empty() {
                                rows.push(Row {
                                    line: *start,
                                    values: std::mem::take(current),
                                });
                            }
                            let name = std::mem::take(name);
                            let rows = std::mem::take(rows);
                            tables.matrices.insert(name, rows);
                            state = State::Top;
                            rest = rest[pos + 1..].trim_start_matches(';').trim();
                            continue;
                        }
                        None => {
                            // a newline also terminates a row
                            if !current.is_empty() {
                                rows.push(Row {
                                    line: *start,
                                    values: std::mem::take(current),
                                });
                            }
                            break;
                        }
                    }
                }
            }
        }
    }
    match state {
        State::Top => Ok(tables),
        State::Matrix { name, start, .. } => Err(Error::Syntax {
            line: start,
            msg: format!("unterminated matrix mpc.{name}"),
        }),
        State::Cell => Err(Error::Syntax {
            line: text.lines().count(),
            msg: "unterminated cell array".into(),
        }),
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' | '"' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn find_unquoted(s: &str, needle: char) -> Option<usize> {
    let mut in_quote = false;
    for (i, c) in s.char_indices() {
        match c {
            '\'' | '"' => in_quote = !in_quote,
            c if c == needle && !in_quote => return Some(i),
            _ => {}
        }
    }
    None
}

fn parse_number(tok: &str) -> Option<f64> {
    match tok {
        "Inf" | "inf" | "+Inf" => Some(f64::INFINITY),
        "-Inf" | "-inf" => Some(f64::NEG_INFINITY),
        _ => tok.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}
