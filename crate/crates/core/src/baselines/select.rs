use std::io::Write;

use crate::error::{Error, Result};
use crate::estimators::DriftEstimator;
use crate::sde::DriftSpec;

/// Hyperparameter values and the criterion each one scored.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionTrace {
    pub param: String,
    pub criterion: String,
    pub rows: Vec<(String, f64)>,
}

impl SelectionTrace {
    pub fn new(param: &str, criterion: &str) -> Self {
        SelectionTrace {
            param: param.into(),
            criterion: criterion.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, value: impl ToString, score: f64) {
        self.rows.push((value.to_string(), score));
    }

    /// Index of the smallest finite score; the first one wins ties.
    pub fn argmin(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, (_, s)) in self.rows.iter().enumerate() {
            if s.is_finite() && best.is_none_or(|b| *s < self.rows[b].1) {
                best = Some(i);
            }
        }
        best
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{},{}", self.param, self.criterion)?;
        for (v, s) in &self.rows {
            writeln!(w, "{v},{s:.10e}")?;
        }
        Ok(())
    }
}

/// Mean over rows of `‖μ̃(y) − μ(y)‖²` at the given states.
pub fn oracle_error(est: &dyn DriftEstimator, states: &[f64], drift: &DriftSpec, seed: u64) -> Result<f64> {
    let d = est.dim();
    if d != drift.dim || states.is_empty() || !states.len().is_multiple_of(d) {
        return Err(Error::shape("validation states do not match the estimator dimension"));
    }
    let est = est.estimate_rows(states, seed)?;
    let truth = drift.eval_rows(states)?;
    let rows = states.len() / d;
    Ok(est.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / rows as f64)
}

/// Fit every candidate and keep the one with the smallest oracle error.
/// Candidates whose fit fails are recorded with an infinite score.
pub fn oracle_grid_search<P, E, F>(
    candidates: &[P],
    label: impl Fn(&P) -> String,
    mut fit: F,
    states: &[f64],
    drift: &DriftSpec,
    seed: u64,
) -> Result<(usize, E, SelectionTrace)>
where
    E: DriftEstimator,
    F: FnMut(&P) -> Result<E>,
{
    if candidates.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    let mut trace = SelectionTrace::new("param", "e1");
    let mut best: Option<(usize, E, f64)> = None;
    for (i, p) in candidates.iter().enumerate() {
        let score = match fit(p) {
            Ok(est) => {
                let s = oracle_error(&est, states, drift, seed)?;
                if s.is_finite() && best.as_ref().is_none_or(|b| s < b.2) {
                    best = Some((i, est, s));
                }
                s
            }
            Err(_) => f64::INFINITY,
        };
        trace.push(label(p), score);
    }
    let (i, est, _) = best.ok_or_else(|| Error::Numerical("no candidate produced a finite error".into()))?;
    Ok((i, est, trace))
}
