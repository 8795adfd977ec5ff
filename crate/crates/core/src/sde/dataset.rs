use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DriftSpec;
use crate::error::{Error, Result};
use crate::rng;

/// Law of the initial state `Y_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialLaw {
    /// `N(0, I)`, shifted to `F·1 + N(0, I)` for Lorenz-96.
    #[default]
    Default,
    Point { value: Vec<f64> },
    Normal { mean: Vec<f64>, std: f64 },
}

impl InitialLaw {
    fn sample(&self, spec: &DriftSpec, rng: &mut rng::StreamRng, out: &mut [f64]) -> Result<()> {
        let d = out.len();
        match self {
            InitialLaw::Default => {
                rng::fill_normal(rng, out);
                if spec.family == super::DriftFamily::Mu5 {
                    out.iter_mut().for_each(|v| *v += spec.forcing);
                }
            }
            InitialLaw::Point { value } => {
                match value.len() {
                    1 => out.iter_mut().for_each(|v| *v = value[0]),
                    n if n == d => out.copy_from_slice(value),
                    n => return Err(Error::invalid(format!("initial point has {n} entries for dimension {d}"))),
                }
            }
            InitialLaw::Normal { mean, std } => {
                rng::fill_normal(rng, out);
                for (k, v) in out.iter_mut().enumerate() {
                    let m = match mean.len() {
                        0 => 0.0,
                        1 => mean[0],
                        n if n == d => mean[k],
                        n => return Err(Error::invalid(format!("initial mean has {n} entries for dimension {d}"))),
                    };
                    *v = m + std * *v;
                }
            }
        }
        Ok(())
    }
}

/// `I` trajectories of `J + 1` states each on a uniform grid of step `Δ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub paths: usize,
    pub steps: usize,
    pub dim: usize,
    pub delta: f64,
    pub sigma: f64,
    pub seed: u64,
    /// Row-major `paths × (steps + 1) × dim`.
    pub states: Vec<f64>,
}

impl TrajectoryDataset {
    pub fn new(paths: usize, steps: usize, dim: usize, delta: f64, sigma: f64, seed: u64, states: Vec<f64>) -> Result<Self> {
        if states.len() != paths * (steps + 1) * dim {
            return Err(Error::shape(format!(
                "{} states for {paths}×{}×{dim}",
                states.len(),
                steps + 1
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::invalid("Δ must be positive"));
        }
        Ok(TrajectoryDataset {
            paths,
            steps,
            dim,
            delta,
            sigma,
            seed,
            states,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.delta
    }

    pub fn path(&self, i: usize) -> &[f64] {
        let n = (self.steps + 1) * self.dim;
        &self.states[i * n..(i + 1) * n]
    }

    pub fn state(&self, i: usize, j: usize) -> &[f64] {
        let off = (i * (self.steps + 1) + j) * self.dim;
        &self.states[off..off + self.dim]
    }

    /// The first `count` trajectories.
    pub fn take_paths(&self, count: usize) -> TrajectoryDataset {
        let count = count.min(self.paths);
        let n = (self.steps + 1) * self.dim;
        TrajectoryDataset {
            paths: count,
            states: self.states[..count * n].to_vec(),
            ..self.clone()
        }
    }

    /// The first `steps + 1` states of every trajectory.
    pub fn truncate_steps(&self, steps: usize) -> TrajectoryDataset {
        let steps = steps.min(self.steps);
        let mut states = Vec::with_capacity(self.paths * (steps + 1) * self.dim);
        for i in 0..self.paths {
            states.extend_from_slice(&self.path(i)[..(steps + 1) * self.dim]);
        }
        TrajectoryDataset {
            steps,
            states,
            ..self.clone()
        }
    }

    /// All states except the final one of each path (the left endpoints).
    pub fn left_states(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.paths * self.steps * self.dim);
        for i in 0..self.paths {
            out.extend_from_slice(&self.path(i)[..self.steps * self.dim]);
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        for v in [self.paths, self.steps, self.dim] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        w.write_all(&self.delta.to_le_bytes())?;
        w.write_all(&self.sigma.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.states.len() * 8);
        for v in &self.states {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| Error::Format("not a dataset file".into()))?;
        if &magic != MAGIC {
            return Err(Error::Format("not a dataset file".into()));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version).map_err(truncated)?;
        if version[0] != VERSION {
            return Err(Error::Format("unsupported version".into()));
        }
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b8).map_err(truncated)?;
            Ok(b8)
        };
        let paths = u64::from_le_bytes(next(&mut r)?) as usize;
        let steps = u64::from_le_bytes(next(&mut r)?) as usize;
        let dim = u64::from_le_bytes(next(&mut r)?) as usize;
        let delta = f64::from_le_bytes(next(&mut r)?);
        let sigma = f64::from_le_bytes(next(&mut r)?);
        let seed = u64::from_le_bytes(next(&mut r)?);
        let n = paths
            .checked_mul(steps.saturating_add(1))
            .and_then(|v| v.checked_mul(dim))
            .filter(|&n| n <= 1 << 32)
            .ok_or_else(|| Error::Format("corrupt dataset header".into()))?;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != n * 8 {
            return Err(Error::Format(format!(
                "truncated dataset payload: expected {} bytes, found {}",
                n * 8,
                raw.len()
            )));
        }
        let states = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        TrajectoryDataset::new(paths, steps, dim, delta, sigma, seed, states)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// One row per `(i, j)`: `i,j,t,y1,…,yD`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("i,j,t");
        for k in 1..=self.dim {
            header.push_str(&format!(",y{k}"));
        }
        writeln!(w, "{header}")?;
        for i in 0..self.paths {
            for j in 0..=self.steps {
                let mut line = format!("{i},{j},{}", j as f64 * self.delta);
                for v in self.state(i, j) {
                    line.push_str(&format!(",{v}"));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}

const MAGIC: &[u8; 5] = b"SDDS1";
const VERSION: u8 = 1;

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated dataset header".into())
    } else {
        Error::Io(e)
    }
}

/// Simulation parameters.
#[derive(Clone, Debug)]
pub struct SimConfig {
    pub paths: usize,
    pub steps: usize,
    pub delta: f64,
    pub sigma: f64,
    pub initial: InitialLaw,
    pub seed: u64,
}

/// Euler–Maruyama simulation, one random stream per trajectory.
pub fn simulate(spec: &DriftSpec, cfg: &SimConfig) -> Result<TrajectoryDataset> {
    spec.validate()?;
    if !(cfg.delta > 0.0) || !cfg.delta.is_finite() {
        return Err(Error::invalid("Δ must be positive"));
    }
    if cfg.paths == 0 || cfg.steps == 0 {
        return Err(Error::invalid("need at least one path and one step"));
    }
    if !(cfg.sigma >= 0.0) {
        return Err(Error::invalid("σ must be non-negative"));
    }
    let d = spec.dim;
    let len = (cfg.steps + 1) * d;
    let sd = cfg.sigma * cfg.delta.sqrt();
    let paths: Vec<Result<Vec<f64>>> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(cfg.seed, i as u64);
            let mut path = vec![0.0; len];
            cfg.initial.sample(spec, &mut rng, &mut path[..d])?;
            let mut mu = vec![0.0; d];
            let mut xi = vec![0.0; d];
            for j in 0..cfg.steps {
                let (head, tail) = path.split_at_mut((j + 1) * d);
                let cur = &head[j * d..];
                spec.eval_into(cur, &mut mu)?;
                rng::fill_normal(&mut rng, &mut xi);
                let next = &mut tail[..d];
                for k in 0..d {
                    next[k] = cur[k] + mu[k] * cfg.delta + sd * xi[k];
                }
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "trajectory {i} blew up at step {}",
                        j + 1
                    )));
                }
            }
            Ok(path)
        })
        .collect();
    let mut states = Vec::with_capacity(cfg.paths * len);
    for p in paths {
        states.extend(p?);
    }
    TrajectoryDataset::new(cfg.paths, cfg.steps, d, cfg.delta, cfg.sigma, cfg.seed, states)
}

/// Pooled `(Y_{t_j}, Z_{t_j})` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct IncrementPairs {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub len: usize,
    pub dim: usize,
    pub delta: f64,
}

impl IncrementPairs {
    pub fn new(y: Vec<f64>, z: Vec<f64>, dim: usize, delta: f64) -> Result<Self> {
        if dim == 0 || y.len() != z.len() || !y.len().is_multiple_of(dim) {
            return Err(Error::shape("increment rows do not line up"));
        }
        Ok(IncrementPairs {
            len: y.len() / dim,
            y,
            z,
            dim,
            delta,
        })
    }

    pub fn y_row(&self, n: usize) -> &[f64] {
        &self.y[n * self.dim..(n + 1) * self.dim]
    }

    pub fn z_row(&self, n: usize) -> &[f64] {
        &self.z[n * self.dim..(n + 1) * self.dim]
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

pub fn make_increments(ds: &TrajectoryDataset) -> IncrementPairs {
    let d = ds.dim;
    let n = ds.paths * ds.steps;
    let mut y = Vec::with_capacity(n * d);
    let mut z = Vec::with_capacity(n * d);
    for i in 0..ds.paths {
        for j in 0..ds.steps {
            let a = ds.state(i, j);
            let b = ds.state(i, j + 1);
            y.extend_from_slice(a);
            z.extend(b.iter().zip(a).map(|(p, q)| p - q));
        }
    }
    IncrementPairs {
        y,
        z,
        len: n,
        dim: d,
        delta: ds.delta,
    }
}
