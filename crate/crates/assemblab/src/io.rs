//! Text and CSV formats: meshes, partitions, matrix dumps, traces, ledgers,
//! phase timings and benchmark reports.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use assemblab_core::assembly::relative_difference;
use assemblab_core::mesh::ElementKind;
use assemblab_core::partition::RankPartition;
use assemblab_core::sparse::{CsrMatrix, LocalNumbering, Rhs};
use assemblab_core::Mesh;

use crate::assembly::{RankSetup, Schedule};
use crate::dlb::{LedgerEvent, PhaseRecord};
use crate::error::{Error, Result};
use crate::pool::TraceEvent;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("bad {what} '{tok}'")))
}

/// `nnode nelem`, one `x y z` line per node, one `KIND n0 n1 ...` line per
/// element. Floats use the shortest representation that reads back exactly.
pub fn write_mesh(mut w: impl Write, mesh: &Mesh) -> Result<()> {
    writeln!(w, "{} {}", mesh.nnode(), mesh.nelem())?;
    for p in mesh.coords() {
        writeln!(w, "{} {} {}", p[0], p[1], p[2])?;
    }
    for (kind, nodes) in mesh.elements() {
        write!(w, "{}", kind.tag())?;
        for n in nodes {
            write!(w, " {n}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_mesh(r: impl BufRead) -> Result<Mesh> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(parse_err(0, format!("unexpected end of file, expected {what}"))),
        }
    };
    let (ln, header) = next("header")?;
    let mut tok = header.split_whitespace();
    let nnode: usize = field(tok.next(), ln, "node count")?;
    let nelem: usize = field(tok.next(), ln, "element count")?;
    let mut coords = Vec::with_capacity(nnode);
    for _ in 0..nnode {
        let (ln, l) = next("coordinates")?;
        let mut tok = l.split_whitespace();
        let p = [field(tok.next(), ln, "x")?, field(tok.next(), ln, "y")?, field(tok.next(), ln, "z")?];
        if tok.next().is_some() {
            return Err(parse_err(ln, "trailing data after coordinates"));
        }
        coords.push(p);
    }
    let mut elements = Vec::with_capacity(nelem);
    for _ in 0..nelem {
        let (ln, l) = next("element")?;
        let mut tok = l.split_whitespace();
        let tag = tok.next().ok_or_else(|| parse_err(ln, "empty element line"))?;
        let kind = ElementKind::from_tag(tag).ok_or_else(|| parse_err(ln, format!("unknown element kind '{tag}'")))?;
        let nodes = tok.map(|t| t.parse::<usize>().map_err(|_| parse_err(ln, format!("bad node '{t}'")))).collect::<Result<Vec<_>>>()?;
        elements.push((kind, nodes));
    }
    Ok(Mesh::new(coords, elements)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub element_id: usize,
    pub rank: usize,
    pub chunk: usize,
    pub color: Option<usize>,
}

/// One row per element, ordered by rank then rank position.
pub fn partition_rows(partition: &RankPartition, setups: &[RankSetup]) -> Vec<PartitionRow> {
    let mut rows = Vec::new();
    for (rank, setup) in setups.iter().enumerate() {
        let colors: BTreeMap<usize, usize> = match &setup.schedule {
            Schedule::Coloring(c) => c.assignments().iter().copied().collect(),
            _ => BTreeMap::new(),
        };
        for (pos, &e) in partition.rank_elements(rank).iter().enumerate() {
            rows.push(PartitionRow {
                element_id: e,
                rank,
                chunk: setup.chunking.chunk_of_position(pos),
                color: colors.get(&e).copied(),
            });
        }
    }
    rows
}

pub fn write_csv<T: Serialize>(w: impl Write, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(r: impl std::io::Read) -> Result<Vec<T>> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    rd.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_trace(w: impl Write, events: &[TraceEvent]) -> Result<()> {
    write_csv(w, events)
}

pub fn write_ledger(w: impl Write, events: &[LedgerEvent]) -> Result<()> {
    write_csv(w, events)
}

pub fn write_phases(w: impl Write, records: &[PhaseRecord]) -> Result<()> {
    write_csv(w, records)
}

/// Coordinate dump: `row col value` in global node ids, sorted by row then
/// column.
pub fn write_coo(mut w: impl Write, matrix: &CsrMatrix, numbering: &LocalNumbering) -> Result<()> {
    // Local numbering is ascending in global ids, so local order is global order.
    for i in 0..matrix.nrows() {
        let (cols, vals) = matrix.row(i);
        for (&j, v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {}", numbering.global(i), numbering.global(j), v)?;
        }
    }
    Ok(())
}

/// Right-hand side dump: `row value` in global node ids.
pub fn write_rhs(mut w: impl Write, rhs: &Rhs, numbering: &LocalNumbering) -> Result<()> {
    for (i, v) in rhs.values().iter().enumerate() {
        writeln!(w, "{} {}", numbering.global(i), v)?;
    }
    Ok(())
}

pub type CooEntry = (usize, usize, f64);

pub fn read_coo(r: impl BufRead) -> Result<Vec<CooEntry>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        out.push((field(tok.next(), ln, "row")?, field(tok.next(), ln, "column")?, field(tok.next(), ln, "value")?));
        if tok.next().is_some() {
            return Err(parse_err(ln, "trailing data"));
        }
    }
    Ok(out)
}

/// Worst entry of a dump comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence {
    pub pass: bool,
    pub max_rel: f64,
    pub worst: Option<(usize, usize)>,
}

/// Entrywise relative comparison of two coordinate dumps.
pub fn compare_coo(reference: &[CooEntry], candidate: &[CooEntry], tol: f64, floor: f64) -> Result<Equivalence> {
    if reference.len() != candidate.len() {
        return Err(Error::Structural(format!("{} entries vs {}", reference.len(), candidate.len())));
    }
    let mut eq = Equivalence { pass: true, max_rel: 0.0, worst: None };
    for (a, b) in reference.iter().zip(candidate) {
        if (a.0, a.1) != (b.0, b.1) {
            return Err(Error::Structural(format!("entry ({}, {}) vs ({}, {})", a.0, a.1, b.0, b.1)));
        }
        let d = relative_difference(a.2, b.2, floor);
        if d > eq.max_rel || d.is_nan() {
            eq.max_rel = d;
            eq.worst = Some((a.0, a.1));
        }
    }
    eq.pass = eq.max_rel <= tol;
    Ok(eq)
}

pub fn check_equivalence(reference: &Path, candidate: &Path, tol: f64) -> Result<Equivalence> {
    let open = |p: &Path| -> Result<Vec<CooEntry>> { read_coo(std::io::BufReader::new(std::fs::File::open(p)?)) };
    compare_coo(&open(reference)?, &open(candidate)?, tol, assemblab_core::assembly::COMPARE_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mesh: String,
    pub nelem: usize,
    pub strategy: String,
    pub dlb: String,
    pub nodes: usize,
    pub ranks_per_node: usize,
    pub lanes_per_rank: usize,
    pub chunk: usize,
    pub phase: String,
    pub median_s: f64,
    pub lb_measured: f64,
    pub lb_w: f64,
    pub lb_nw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub seed: u64,
    pub rows: Vec<ReportRow>,
}

impl Report {
    /// CSV with the seed in a leading comment line.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "# seed={}", self.seed)?;
        write_csv(w, &self.rows)
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut r = r;
        let mut first = String::new();
        r.read_line(&mut first)?;
        let seed = first
            .trim()
            .strip_prefix("# seed=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(1, "missing '# seed=' header"))?;
        Ok(Report { seed, rows: read_csv(r)? })
    }

    pub fn write_json(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}
