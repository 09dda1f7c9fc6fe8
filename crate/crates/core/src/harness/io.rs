//! Binary snapshot (`SNP1`) and checkpoint (`CKP1`) files, CSV tables and
//! atomic file replacement.
//!
//! Both binary formats are: 4-byte magic, little-endian `u32` header length,
//! UTF-8 JSON header, then little-endian `f64` payload.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Architecture, Model, Normalizer};
use crate::pde::{Grid, PdeProblem, SnapshotSet, Trajectory};
use crate::pretrain::{AdamState, Checkpoint, LogEntry, TrainConfig, TrainStatus};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"SNP1";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CKP1";
const LAYOUT: &str = "t,field,row-major-x";

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn encode(magic: &[u8; 4], header: &impl Serialize, payload: impl Iterator<Item = f64>) -> Result<Vec<u8>> {
    let h = serde_json::to_vec(header)?;
    let len = u32::try_from(h.len()).map_err(|_| Error::invalid("header too large"))?;
    let mut out = Vec::with_capacity(8 + h.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&h);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn decode<'a>(path: &Path, magic: &[u8; 4], bytes: &'a [u8]) -> Result<(&'a [u8], Vec<f64>)> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(bad("missing magic"));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("four bytes")) as usize;
    let body = bytes.get(8..8 + len).ok_or_else(|| bad("truncated header"))?;
    let payload = &bytes[8 + len..];
    if payload.len() % 8 != 0 {
        return Err(bad("payload is not a whole number of f64 values"));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    Ok((body, values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub problem: PdeProblem,
    pub mu: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub x_shape: Vec<usize>,
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub fields: usize,
    pub dtype: String,
    pub layout: String,
}

pub fn snapshot_bytes(problem: PdeProblem, grid: &Grid, traj: &Trajectory) -> Result<Vec<u8>> {
    if traj.n_points != grid.len() {
        return Err(Error::dims("trajectory does not live on the grid"));
    }
    let header = SnapshotHeader {
        problem,
        mu: traj.mu.clone(),
        t_grid: traj.times.clone(),
        x_shape: grid.n.clone(),
        x_lo: grid.lo.clone(),
        x_hi: grid.hi.clone(),
        fields: traj.n_fields,
        dtype: "f64".into(),
        layout: LAYOUT.into(),
    };
    encode(SNAPSHOT_MAGIC, &header, traj.fields.iter().copied())
}

pub fn write_snapshot(path: &Path, problem: PdeProblem, grid: &Grid, traj: &Trajectory) -> Result<()> {
    write_atomic(path, &snapshot_bytes(problem, grid, traj)?)
}

pub fn read_snapshot(path: &Path) -> Result<(SnapshotHeader, Grid, Trajectory)> {
    let bytes = fs::read(path)?;
    let (h, values) = decode(path, SNAPSHOT_MAGIC, &bytes)?;
    let header: SnapshotHeader = serde_json::from_slice(h)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if header.dtype != "f64" || header.layout != LAYOUT {
        return Err(bad(format!("unsupported dtype/layout {}/{}", header.dtype, header.layout)));
    }
    let n: usize = header.x_shape.iter().product();
    let expected = header.t_grid.len() * header.fields * n;
    if values.len() != expected {
        return Err(bad(format!("payload has {} values, header declares {expected}", values.len())));
    }
    let grid = Grid::new(header.x_shape.clone(), header.x_lo.clone(), header.x_hi.clone())?;
    let traj = Trajectory::new(header.mu.clone(), header.t_grid.clone(), header.fields, n, values)?;
    Ok((header, grid, traj))
}

/// Reads every file of `paths` into one set; all must share problem and grid.
pub fn read_snapshot_set(paths: &[PathBuf]) -> Result<SnapshotSet> {
    let mut problem = None;
    let mut grid = None;
    let mut trajs = Vec::with_capacity(paths.len());
    for p in paths {
        let (h, g, t) = read_snapshot(p)?;
        if problem.is_some_and(|q| q != h.problem) || grid.as_ref().is_some_and(|q| *q != g) {
            return Err(Error::dims(format!("{} does not match the other snapshots", p.display())));
        }
        problem = Some(h.problem);
        grid = Some(g);
        trajs.push(t);
    }
    let problem = problem.ok_or_else(|| Error::invalid("no snapshot files"))?;
    SnapshotSet::new(problem, grid.expect("set with problem"), trajs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub architecture: Architecture,
    pub normalizer: Normalizer,
    /// Canonical parameter order; the payload holds these blocks, followed
    /// by the Adam first and second moments of the same length.
    pub params: Vec<ParamShape>,
    pub train_mus: Vec<Vec<f64>>,
    pub train_config: TrainConfig,
    pub status: TrainStatus,
    pub adam_step: u64,
    pub history: Vec<LogEntry>,
}

pub fn checkpoint_bytes(c: &Checkpoint) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        architecture: c.model.arch.clone(),
        normalizer: c.model.normalizer.clone(),
        params: c
            .model
            .params
            .entries()
            .iter()
            .map(|e| ParamShape {
                name: e.name.clone(),
                rows: e.rows,
                cols: e.cols,
            })
            .collect(),
        train_mus: c.train_mus.clone(),
        train_config: c.config.clone(),
        status: c.status.clone(),
        adam_step: c.adam.step,
        history: c.history.clone(),
    };
    let p = c.model.params.data();
    encode(
        CHECKPOINT_MAGIC,
        &header,
        p.iter().chain(&c.adam.m).chain(&c.adam.v).copied(),
    )
}

pub fn write_checkpoint(path: &Path, c: &Checkpoint) -> Result<()> {
    write_atomic(path, &checkpoint_bytes(c)?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let (h, values) = decode(path, CHECKPOINT_MAGIC, &bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(h)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let n: usize = header.params.iter().map(|p| p.rows * p.cols).sum();
    if values.len() != 3 * n {
        return Err(bad(format!("payload has {} values, expected {}", values.len(), 3 * n)));
    }
    let model = Model::from_parts(header.architecture, &values[..n], header.normalizer)?;
    let layout: Vec<ParamShape> = model
        .params
        .entries()
        .iter()
        .map(|e| ParamShape {
            name: e.name.clone(),
            rows: e.rows,
            cols: e.cols,
        })
        .collect();
    if layout != header.params {
        return Err(bad("parameter layout differs from the architecture".into()));
    }
    Ok(Checkpoint {
        model,
        config: header.train_config,
        train_mus: header.train_mus,
        history: header.history,
        adam: AdamState {
            m: values[n..2 * n].to_vec(),
            v: values[2 * n..].to_vec(),
            step: header.adam_step,
        },
        status: header.status,
    })
}

/// Comma-separated table with a header row; numbers use Rust's shortest
/// round-trip formatting.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| v.to_string()).collect());
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }

    /// Column `name` parsed as numbers.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        self.rows.iter().map(|r| r[j].parse().ok()).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::invalid("empty csv"))?
            .split(',')
            .map(str::to_string)
            .collect::<Vec<_>>();
        let rows = lines
            .map(|l| l.split(',').map(str::to_string).collect::<Vec<_>>())
            .collect::<Vec<_>>();
        if rows.iter().any(|r| r.len() != header.len()) {
            return Err(Error::invalid("ragged csv"));
        }
        Ok(Csv { header, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}
