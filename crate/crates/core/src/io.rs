//! Readers and writers for the on-disk formats.
//!
//! Text formats use `#`-prefixed `key: value` headers followed by payload
//! lines. Configurations are space-separated tokens, one per site: `0`/`1`
//! for single-class words; class digits (letters from class ten) with `.`
//! for holes in multiclass words. Point collections are `location time`
//! lines, bonds written as half-integers, with an optional trailing `L`/`R`
//! direction. Trajectories are JSON-lines (a meta record, one record per
//! event, a final record). Manifests are sorted `key=value` lines with no
//! timestamps, so reruns are byte-identical.

use crate::dual::DualPoint;
use crate::dynamics::{DynamicsKind, Event, Location, Mark, PointProcess, Trajectory};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, MulticlassConfig, OrderedStack, Topology};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

pub fn topology_to_string(t: Topology) -> String {
    match t {
        Topology::Ring { sites } => format!("ring {sites}"),
        Topology::Segment { window, buffer } => format!("segment {window} {buffer}"),
    }
}

pub fn topology_from_string(s: &str) -> Result<Topology> {
    let words: Vec<&str> = s.split_whitespace().collect();
    let bad = || parse_err(0, format!("cannot read topology from {s:?}"));
    match words.as_slice() {
        ["ring", n] => Ok(Topology::ring(n.parse().map_err(|_| bad())?)),
        ["segment", w, b] => Ok(Topology::segment(
            w.parse().map_err(|_| bad())?,
            b.parse().map_err(|_| bad())?,
        )),
        _ => Err(bad()),
    }
}

type HeaderAndPayload<'a> = (BTreeMap<String, String>, Vec<(usize, &'a str)>);

/// Split a header block (`# key: value` lines) from the payload lines.
fn split_header(text: &str) -> Result<HeaderAndPayload<'_>> {
    let mut headers = BTreeMap::new();
    let mut payload = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            let (key, value) = rest
                .split_once(':')
                .ok_or_else(|| parse_err(i + 1, "header line is not `# key: value`"))?;
            headers.insert(key.trim().to_string(), value.trim().to_string());
        } else {
            payload.push((i + 1, line));
        }
    }
    Ok((headers, payload))
}

fn require<'a>(
    headers: &'a BTreeMap<String, String>,
    key: &str,
) -> Result<&'a str> {
    headers
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| parse_err(0, format!("missing header `{key}`")))
}

fn expect_format(headers: &BTreeMap<String, String>, want: &str) -> Result<()> {
    let got = require(headers, "format")?;
    if got != want {
        return Err(parse_err(0, format!("format is `{got}`, expected `{want}`")));
    }
    Ok(())
}

fn class_token(c: u32, holes: u32) -> String {
    if c == holes {
        ".".into()
    } else if c <= 9 {
        c.to_string()
    } else {
        char::from(b'a' + (c - 10) as u8).to_string()
    }
}

fn parse_class_token(tok: &str, holes: u32, line: usize) -> Result<u32> {
    if tok == "." {
        return Ok(holes);
    }
    let c = match tok.chars().next() {
        Some(d @ '1'..='9') if tok.len() == 1 => d as u32 - '0' as u32,
        Some(a @ 'a'..='z') if tok.len() == 1 => a as u32 - 'a' as u32 + 10,
        _ => return Err(parse_err(line, format!("bad class token {tok:?}"))),
    };
    Ok(c)
}

pub fn write_configuration(cfg: &Configuration) -> String {
    let mut out = String::new();
    writeln!(out, "# format: configuration").unwrap();
    writeln!(out, "# topology: {}", topology_to_string(cfg.topology())).unwrap();
    let toks: Vec<String> = cfg.bits().iter().map(|b| b.to_string()).collect();
    writeln!(out, "{}", toks.join(" ")).unwrap();
    out
}

pub fn parse_configuration(text: &str) -> Result<Configuration> {
    let (headers, payload) = split_header(text)?;
    expect_format(&headers, "configuration")?;
    let topology = topology_from_string(require(&headers, "topology")?)?;
    let (line_no, line) = payload
        .first()
        .ok_or_else(|| parse_err(0, "no payload line"))?;
    let bits: Result<Vec<u8>> = line
        .split_whitespace()
        .map(|tok| match tok {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            other => Err(parse_err(*line_no, format!("bad site token {other:?}"))),
        })
        .collect();
    Configuration::from_bits(topology, bits?)
}

pub fn write_multiclass(cfg: &MulticlassConfig) -> String {
    let mut out = String::new();
    writeln!(out, "# format: multiclass").unwrap();
    writeln!(out, "# topology: {}", topology_to_string(cfg.topology())).unwrap();
    writeln!(out, "# classes: {}", cfg.classes()).unwrap();
    let holes = cfg.classes() as u32 + 1;
    let toks: Vec<String> = cfg.word().iter().map(|&c| class_token(c, holes)).collect();
    writeln!(out, "{}", toks.join(" ")).unwrap();
    out
}

pub fn parse_multiclass(text: &str) -> Result<MulticlassConfig> {
    let (headers, payload) = split_header(text)?;
    expect_format(&headers, "multiclass")?;
    let topology = topology_from_string(require(&headers, "topology")?)?;
    let classes: usize = require(&headers, "classes")?
        .parse()
        .map_err(|_| parse_err(0, "bad classes header"))?;
    let (line_no, line) = payload
        .first()
        .ok_or_else(|| parse_err(0, "no payload line"))?;
    let holes = classes as u32 + 1;
    let word: Result<Vec<u32>> = line
        .split_whitespace()
        .map(|tok| parse_class_token(tok, holes, *line_no))
        .collect();
    MulticlassConfig::new(topology, classes, word?)
}

pub fn write_stack(stack: &OrderedStack) -> String {
    let mut out = String::new();
    writeln!(out, "# format: stack").unwrap();
    writeln!(out, "# topology: {}", topology_to_string(stack.topology())).unwrap();
    writeln!(out, "# lines: {}", stack.classes()).unwrap();
    for line in stack.lines() {
        let toks: Vec<String> = line.bits().iter().map(|b| b.to_string()).collect();
        writeln!(out, "{}", toks.join(" ")).unwrap();
    }
    out
}

pub fn parse_stack(text: &str) -> Result<OrderedStack> {
    let (headers, payload) = split_header(text)?;
    expect_format(&headers, "stack")?;
    let topology = topology_from_string(require(&headers, "topology")?)?;
    OrderedStack::new(parse_line_payload(topology, &payload)?)
}

/// Like a stack file but without the sitewise-domination requirement: the
/// multi-line process preserves a product law, not any pathwise ordering, so
/// its states need a format of their own.
pub fn write_lines(lines: &[Configuration]) -> String {
    let mut out = String::new();
    writeln!(out, "# format: lines").unwrap();
    if let Some(first) = lines.first() {
        writeln!(out, "# topology: {}", topology_to_string(first.topology())).unwrap();
    }
    writeln!(out, "# lines: {}", lines.len()).unwrap();
    for line in lines {
        let toks: Vec<String> = line.bits().iter().map(|b| b.to_string()).collect();
        writeln!(out, "{}", toks.join(" ")).unwrap();
    }
    out
}

pub fn parse_lines(text: &str) -> Result<Vec<Configuration>> {
    let (headers, payload) = split_header(text)?;
    expect_format(&headers, "lines")?;
    let topology = topology_from_string(require(&headers, "topology")?)?;
    parse_line_payload(topology, &payload)
}

fn parse_line_payload(topology: Topology, payload: &[(usize, &str)]) -> Result<Vec<Configuration>> {
    let mut lines = Vec::new();
    for &(line_no, line) in payload {
        let bits: Result<Vec<u8>> = line
            .split_whitespace()
            .map(|tok| match tok {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(parse_err(line_no, format!("bad site token {other:?}"))),
            })
            .collect();
        lines.push(Configuration::from_bits(topology, bits?)?);
    }
    Ok(lines)
}

fn location_to_string(loc: Location) -> String {
    match loc {
        Location::Site(x) => x.to_string(),
        Location::Bond(b) => format!("{b}.5"),
    }
}

fn location_from_string(tok: &str, line: usize) -> Result<Location> {
    if let Some(head) = tok.strip_suffix(".5") {
        let b: i64 = head
            .parse()
            .map_err(|_| parse_err(line, format!("bad bond {tok:?}")))?;
        Ok(Location::Bond(b))
    } else {
        let x: i64 = tok
            .parse()
            .map_err(|_| parse_err(line, format!("bad site {tok:?}")))?;
        Ok(Location::Site(x))
    }
}

pub fn write_points(points: &PointProcess, kind: DynamicsKind) -> String {
    let mut out = String::new();
    writeln!(out, "# format: points").unwrap();
    writeln!(out, "# topology: {}", topology_to_string(points.topology())).unwrap();
    writeln!(out, "# kind: {}", kind.name()).unwrap();
    writeln!(out, "# horizon: {}", points.horizon()).unwrap();
    for m in points.marks() {
        match m.dir_left {
            Some(left) => writeln!(
                out,
                "{} {} {}",
                location_to_string(m.location),
                m.time,
                if left { "L" } else { "R" }
            )
            .unwrap(),
            None => writeln!(out, "{} {}", location_to_string(m.location), m.time).unwrap(),
        }
    }
    out
}

/// Parse a points file; the kind header comes back as its plain name.
pub fn parse_points(text: &str) -> Result<(PointProcess, String)> {
    let (headers, payload) = split_header(text)?;
    expect_format(&headers, "points")?;
    let topology = topology_from_string(require(&headers, "topology")?)?;
    let kind = require(&headers, "kind")?.to_string();
    let horizon: f64 = require(&headers, "horizon")?
        .parse()
        .map_err(|_| parse_err(0, "bad horizon header"))?;
    let mut marks = Vec::new();
    for (line_no, line) in payload {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 && toks.len() != 3 {
            return Err(parse_err(line_no, "expected `location time [L|R]`"));
        }
        let location = location_from_string(toks[0], line_no)?;
        let time: f64 = toks[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad time {:?}", toks[1])))?;
        let dir_left = match toks.get(2) {
            None => None,
            Some(&"L") => Some(true),
            Some(&"R") => Some(false),
            Some(other) => {
                return Err(parse_err(line_no, format!("bad direction {other:?}")))
            }
        };
        marks.push(Mark {
            location,
            time,
            dir_left,
        });
    }
    Ok((PointProcess::new(topology, horizon, marks)?, kind))
}

/// Dual points in the same shape as a points file; a dual that fell off the
/// segment edge is written as `-`.
pub fn write_dual_points(duals: &[DualPoint], topology: Topology, horizon: f64) -> String {
    let mut out = String::new();
    writeln!(out, "# format: dual-points").unwrap();
    writeln!(out, "# topology: {}", topology_to_string(topology)).unwrap();
    writeln!(out, "# horizon: {}", horizon).unwrap();
    for d in duals {
        match d.location {
            Some(loc) => writeln!(out, "{} {}", location_to_string(loc), d.time).unwrap(),
            None => writeln!(out, "- {}", d.time).unwrap(),
        }
    }
    out
}

pub fn parse_dual_points(text: &str) -> Result<(Vec<DualPoint>, Topology, f64)> {
    let (headers, payload) = split_header(text)?;
    expect_format(&headers, "dual-points")?;
    let topology = topology_from_string(require(&headers, "topology")?)?;
    let horizon: f64 = require(&headers, "horizon")?
        .parse()
        .map_err(|_| parse_err(0, "bad horizon header"))?;
    let mut duals = Vec::new();
    for (line_no, line) in payload {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(line_no, "expected `location time`"));
        }
        let location = if toks[0] == "-" {
            None
        } else {
            Some(location_from_string(toks[0], line_no)?)
        };
        let time: f64 = toks[1]
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad time {:?}", toks[1])))?;
        duals.push(DualPoint { time, location });
    }
    Ok((duals, topology, horizon))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum TrajectoryRecord {
    Meta {
        kind: DynamicsKind,
        topology: Topology,
        horizon: f64,
        classes: usize,
        initial: Vec<u32>,
    },
    Event {
        time: f64,
        location: Location,
        line_jumps: Vec<Option<(i64, i64)>>,
        class_swap: Option<(u32, u32)>,
    },
    Final {
        word: Vec<u32>,
    },
}

/// Trajectory as JSON-lines: meta, one line per event, final.
pub fn write_trajectory_jsonl(traj: &Trajectory, horizon: f64) -> String {
    let mut out = String::new();
    let meta = TrajectoryRecord::Meta {
        kind: traj.kind,
        topology: traj.topology(),
        horizon,
        classes: traj.initial.classes(),
        initial: traj.initial.word().to_vec(),
    };
    writeln!(out, "{}", serde_json::to_string(&meta).unwrap()).unwrap();
    for ev in &traj.events {
        let rec = TrajectoryRecord::Event {
            time: ev.time,
            location: ev.location,
            line_jumps: ev.line_jumps.clone(),
            class_swap: ev.class_swap,
        };
        writeln!(out, "{}", serde_json::to_string(&rec).unwrap()).unwrap();
    }
    let fin = TrajectoryRecord::Final {
        word: traj.final_state.word().to_vec(),
    };
    writeln!(out, "{}", serde_json::to_string(&fin).unwrap()).unwrap();
    out
}

/// Parse a JSON-lines trajectory; the recorded final word is cross-checked
/// against the replayed events.
pub fn parse_trajectory_jsonl(text: &str) -> Result<(Trajectory, f64)> {
    let mut meta = None;
    let mut events = Vec::new();
    let mut final_word = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrajectoryRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        match rec {
            TrajectoryRecord::Meta {
                kind,
                topology,
                horizon,
                classes,
                initial,
            } => meta = Some((kind, topology, horizon, classes, initial)),
            TrajectoryRecord::Event {
                time,
                location,
                line_jumps,
                class_swap,
            } => events.push(Event {
                time,
                location,
                line_jumps,
                class_swap,
            }),
            TrajectoryRecord::Final { word } => final_word = Some(word),
        }
    }
    let (kind, topology, horizon, classes, initial) =
        meta.ok_or_else(|| parse_err(0, "missing meta record"))?;
    let initial = MulticlassConfig::new(topology, classes, initial)?;
    let final_word = final_word.ok_or_else(|| parse_err(0, "missing final record"))?;
    let final_state = MulticlassConfig::new(topology, classes, final_word)?;
    let traj = Trajectory {
        kind,
        initial,
        events,
        final_state,
    };
    check_replay(&traj)?;
    Ok((traj, horizon))
}

/// Replay the recorded moves with full validation, so that a corrupted file
/// yields a parse error instead of a panic.
fn check_replay(traj: &Trajectory) -> Result<()> {
    let topology = traj.topology();
    let mut lines = crate::lattice::r_inverse(&traj.initial).into_lines();
    for (i, ev) in traj.events.iter().enumerate() {
        if ev.line_jumps.len() != lines.len() {
            return Err(parse_err(0, format!("event {} has wrong line count", i + 1)));
        }
        for (k, jump) in ev.line_jumps.iter().enumerate() {
            if let Some((from, to)) = *jump {
                let valid = topology.contains_site(from)
                    && topology.contains_site(to)
                    && lines[k].get(from) == 1
                    && lines[k].get(to) == 0;
                if !valid {
                    return Err(parse_err(
                        0,
                        format!("event {} records an impossible move", i + 1),
                    ));
                }
                lines[k].set(from, 0);
                lines[k].set(to, 1);
            }
        }
    }
    let stack = OrderedStack::new(lines)
        .map_err(|e| parse_err(0, format!("replayed lines are not ordered: {e}")))?;
    if crate::lattice::r_map(&stack) != traj.final_state {
        return Err(parse_err(0, "final record disagrees with replayed events"));
    }
    Ok(())
}

/// Statistics table as CSV with a header row.
pub fn write_stats_csv(names: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    writeln!(out, "{}", names.join(",")).unwrap();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    out
}

/// Space-time diagram data with three index blocks (gnuplot `index 0..2`):
/// marks, dual points, and particle positions at the initial and final times.
pub fn write_plot_data(
    points: &PointProcess,
    duals: &[DualPoint],
    initial: &Configuration,
    final_state: &Configuration,
) -> String {
    let mut out = String::new();
    writeln!(out, "# marks (plot with points, e.g. pt '*')").unwrap();
    for m in points.marks() {
        writeln!(out, "{} {}", plot_coord(m.location), m.time).unwrap();
    }
    writeln!(out, "\n").unwrap();
    writeln!(out, "# dual points (pt 'o')").unwrap();
    for d in duals {
        if let Some(loc) = d.location {
            writeln!(out, "{} {}", plot_coord(loc), d.time).unwrap();
        }
    }
    writeln!(out, "\n").unwrap();
    writeln!(out, "# particle positions at times 0 and horizon (pt 'p')").unwrap();
    for x in initial.topology().all_sites() {
        if initial.get(x) == 1 {
            writeln!(out, "{x} 0").unwrap();
        }
    }
    for x in final_state.topology().all_sites() {
        if final_state.get(x) == 1 {
            writeln!(out, "{x} {}", points.horizon()).unwrap();
        }
    }
    out
}

fn plot_coord(loc: Location) -> String {
    match loc {
        Location::Site(x) => x.to_string(),
        Location::Bond(b) => format!("{}", b as f64 + 0.5),
    }
}

/// Sorted `key=value` manifest. Deliberately carries no timestamps so a rerun
/// with the same inputs is byte-identical.
pub fn write_manifest(entries: &[(String, String)]) -> String {
    let map: BTreeMap<&str, &str> = entries
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    let mut out = String::new();
    for (k, v) in map {
        writeln!(out, "{k}={v}").unwrap();
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| parse_err(i + 1, "expected `key=value`"))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}
