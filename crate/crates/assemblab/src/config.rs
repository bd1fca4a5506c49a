//! Benchmark run specification: flat `key = value` lines, `#` comments,
//! repeated keys form lists.
//!
//! ```text
//! nx = 20
//! ny = 20
//! nz = 12
//! layers = 2
//! strategy = coloring
//! strategy = multidep
//! chunk = 10
//! chunk = 200
//! node = 2x4      # ranks per node x lanes per rank
//! dlb = off
//! dlb = on
//! steps = 10
//! seed = 42
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use assemblab_core::partition::KindWeights;

use crate::assembly::Strategy;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightModel {
    /// Gauss points per element kind.
    Gauss,
    Uniform,
}

impl WeightModel {
    pub fn kind_weights(self) -> KindWeights {
        match self {
            WeightModel::Gauss => KindWeights::gauss_points(),
            WeightModel::Uniform => KindWeights::uniform(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub layers: usize,
    pub strategies: Vec<Strategy>,
    pub chunks: Vec<usize>,
    /// `(ranks_per_node, lanes_per_rank)`.
    pub node_configs: Vec<(usize, usize)>,
    pub nodes: usize,
    pub dlb: Vec<bool>,
    pub steps: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Kernel repeat factor.
    pub repeat: u32,
    pub source: f64,
    pub weights: WeightModel,
}

pub const DEFAULT_CHUNK: usize = 200;
pub const MIN_STEPS: usize = 10;

impl BenchConfig {
    pub fn mesh_label(&self) -> String {
        format!("{}x{}x{}/{}", self.nx, self.ny, self.nz, self.layers)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        // key -> [(line, value)]
        let mut entries: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, message: format!("expected 'key = value', got '{content}'") })?;
            let (key, value) = (key.trim().to_ascii_lowercase(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(Error::Parse { line, message: "empty key or value".into() });
            }
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::Parse { line, message: format!("unknown key '{key}'") });
            }
            entries.entry(key).or_default().push((line, value.to_string()));
        }
        let mut cfg = Entries(entries);
        let nx = cfg.scalar("nx", None)?;
        let ny = cfg.scalar("ny", None)?;
        let nz = cfg.scalar("nz", None)?;
        let config = BenchConfig {
            nx,
            ny,
            nz,
            layers: cfg.scalar("layers", Some(1))?,
            strategies: cfg.list("strategy", None, |s| s.parse())?,
            chunks: cfg.list("chunk", Some(vec![DEFAULT_CHUNK]), parse_positive)?,
            node_configs: cfg.list("node", Some(vec![(1, 1)]), parse_node)?,
            nodes: cfg.scalar("nodes", Some(1))?,
            dlb: cfg.list("dlb", Some(vec![false]), parse_switch)?,
            steps: cfg.scalar("steps", Some(MIN_STEPS))?,
            warmup: cfg.scalar("warmup", Some(2))?,
            seed: cfg.scalar("seed", Some(0))?,
            repeat: cfg.scalar("repeat", Some(1))?,
            source: cfg.scalar("source", Some(1.0))?,
            weights: cfg.scalar_with("weights", Some(WeightModel::Gauss), |s| match s {
                "gauss" => Ok(WeightModel::Gauss),
                "uniform" => Ok(WeightModel::Uniform),
                _ => Err(Error::InvalidArgument(format!("weights must be gauss or uniform, got '{s}'"))),
            })?,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 || self.layers >= self.nz {
            return Err(Error::Config("mesh needs nx, ny, nz >= 1 and layers < nz".into()));
        }
        if self.nodes == 0 || self.repeat == 0 {
            return Err(Error::Config("nodes and repeat must be at least 1".into()));
        }
        if self.steps < MIN_STEPS {
            return Err(Error::Config(format!("steps must be at least {MIN_STEPS}")));
        }
        Ok(())
    }
}

const KEYS: &[&str] = &[
    "nx", "ny", "nz", "layers", "strategy", "chunk", "node", "nodes", "dlb", "steps", "warmup", "seed", "repeat",
    "source", "weights",
];

fn parse_positive(s: &str) -> Result<usize> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(Error::InvalidArgument(format!("expected a positive integer, got '{s}'"))),
    }
}

fn parse_node(s: &str) -> Result<(usize, usize)> {
    let (r, l) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::InvalidArgument(format!("node must look like RxL, got '{s}'")))?;
    Ok((parse_positive(r.trim())?, parse_positive(l.trim())?))
}

fn parse_switch(s: &str) -> Result<bool> {
    match s {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("expected on/off, got '{s}'"))),
    }
}

struct Entries(BTreeMap<String, Vec<(usize, String)>>);

impl Entries {
    fn scalar_with<T>(&mut self, key: &str, default: Option<T>, parse: impl Fn(&str) -> Result<T>) -> Result<T> {
        match self.0.remove(key) {
            None => default.ok_or_else(|| Error::Config(format!("missing required key '{key}'"))),
            Some(v) if v.len() > 1 => Err(Error::Parse { line: v[1].0, message: format!("'{key}' given more than once") }),
            Some(v) => {
                let (line, value) = &v[0];
                parse(value).map_err(|e| Error::Parse { line: *line, message: format!("{key}: {e}") })
            }
        }
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str, default: Option<T>) -> Result<T> {
        self.scalar_with(key, default, |s| s.parse().map_err(|_| Error::InvalidArgument(format!("cannot parse '{s}'"))))
    }

    fn list<T>(&mut self, key: &str, default: Option<Vec<T>>, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
        match self.0.remove(key) {
            None => default.ok_or_else(|| Error::Config(format!("missing required key '{key}'"))),
            Some(v) => v
                .iter()
                .map(|(line, value)| parse(value).map_err(|e| Error::Parse { line: *line, message: format!("{key}: {e}") }))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_defaults() {
        let cfg = BenchConfig::parse(
            "# sweep\nnx = 4\nny=4\nnz = 5\nstrategy = Coloring\nstrategy = multidep  # tasks\nchunk = 10\nchunk = 2000\nnode = 2x4\ndlb = on\n",
        )
        .unwrap();
        assert_eq!((cfg.nx, cfg.ny, cfg.nz, cfg.layers), (4, 4, 5, 1));
        assert_eq!(cfg.strategies, vec![Strategy::Coloring, Strategy::Multidep]);
        assert_eq!(cfg.chunks, vec![10, 2000]);
        assert_eq!(cfg.node_configs, vec![(2, 4)]);
        assert_eq!(cfg.dlb, vec![true]);
        assert_eq!((cfg.steps, cfg.warmup, cfg.seed, cfg.repeat), (10, 2, 0, 1));
        assert_eq!(cfg.weights, WeightModel::Gauss);
    }

    #[test]
    fn default_chunk_is_200() {
        let cfg = BenchConfig::parse("nx=2\nny=2\nnz=3\nstrategy=sequential\n").unwrap();
        assert_eq!(cfg.chunks, vec![200]);
    }

    #[test]
    fn errors_report_the_line() {
        let line_of = |text: &str| match BenchConfig::parse(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line_of("nx=2\nny=2\nnz=3\nstrategy=sequential\nbogus line\n"), 5);
        assert_eq!(line_of("nx=2\n\nny=2\nnz=3\nstrategy=teleport\n"), 5);
        assert_eq!(line_of("nx=2\nnx=3\nny=2\nnz=3\nstrategy=atomic\n"), 2);
        assert_eq!(line_of("nx=2\nny=2\nnz=3\nstrategy=atomic\nnode=4\n"), 5);
        assert_eq!(line_of("nx=2\nny=2\nnz=3\ncolour=red\n"), 4);
        assert_eq!(line_of("nx=2\nny=2\nnz=3\nstrategy=atomic\nchunk=0\n"), 5);
    }

    #[test]
    fn semantic_errors() {
        assert!(matches!(BenchConfig::parse("nx=2\nny=2\nnz=3\n"), Err(Error::Config(_))));
        assert!(matches!(BenchConfig::parse("nx=2\nny=2\nnz=3\nlayers=3\nstrategy=atomic\n"), Err(Error::Config(_))));
        assert!(matches!(BenchConfig::parse("nx=2\nny=2\nnz=3\nsteps=3\nstrategy=atomic\n"), Err(Error::Config(_))));
    }
}
