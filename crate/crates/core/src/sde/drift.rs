use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftFamily {
    /// `−sin(2y)·log(1 + 5|y|)`
    Mu1,
    /// `−y + sin(25y)`
    Mu2,
    /// `−y³ + y`
    Mu3,
    /// Bistable potential with neighbour coupling of strength `c`.
    Mu4,
    /// Lorenz-96 with forcing `F`.
    Mu5,
    /// Same formula as `Mu2`, kept as its own tag for the τ-sweep experiments.
    MuSin25,
    /// Separable bistable potential (`Mu4` without coupling).
    MuBipot,
    /// Ornstein–Uhlenbeck `−θy`.
    Ou,
    Zero,
}

impl DriftFamily {
    pub fn name(self) -> &'static str {
        match self {
            DriftFamily::Mu1 => "mu1",
            DriftFamily::Mu2 => "mu2",
            DriftFamily::Mu3 => "mu3",
            DriftFamily::Mu4 => "mu4",
            DriftFamily::Mu5 => "mu5",
            DriftFamily::MuSin25 => "mu_sin25",
            DriftFamily::MuBipot => "mu_bipot",
            DriftFamily::Ou => "ou",
            DriftFamily::Zero => "zero",
        }
    }
}

/// A drift family together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub family: DriftFamily,
    #[serde(default = "one")]
    pub dim: usize,
    /// Quartic coefficients `a_d > 0`; a single value is broadcast. Defaults to 0.25.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<f64>,
    /// Quadratic coefficients `b_d < 0`; a single value is broadcast. Defaults to −0.5.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "default_forcing")]
    pub forcing: f64,
    #[serde(default = "one_f")]
    pub theta: f64,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

fn default_forcing() -> f64 {
    8.0
}

const DEFAULT_A: f64 = 0.25;
const DEFAULT_B: f64 = -0.5;

impl DriftSpec {
    fn base(family: DriftFamily, dim: usize) -> Self {
        DriftSpec {
            family,
            dim,
            a: Vec::new(),
            b: Vec::new(),
            c: 0.0,
            forcing: default_forcing(),
            theta: 1.0,
        }
    }

    pub fn mu1() -> Self {
        Self::base(DriftFamily::Mu1, 1)
    }

    pub fn mu2() -> Self {
        Self::base(DriftFamily::Mu2, 1)
    }

    pub fn mu3() -> Self {
        Self::base(DriftFamily::Mu3, 1)
    }

    pub fn mu_sin25() -> Self {
        Self::base(DriftFamily::MuSin25, 1)
    }

    pub fn mu4(dim: usize, c: f64) -> Self {
        DriftSpec {
            c,
            ..Self::base(DriftFamily::Mu4, dim)
        }
    }

    pub fn mu_bipot(dim: usize) -> Self {
        Self::base(DriftFamily::MuBipot, dim)
    }

    pub fn mu5(dim: usize, forcing: f64) -> Self {
        DriftSpec {
            forcing,
            ..Self::base(DriftFamily::Mu5, dim)
        }
    }

    pub fn ou(dim: usize, theta: f64) -> Self {
        DriftSpec {
            theta,
            ..Self::base(DriftFamily::Ou, dim)
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self::base(DriftFamily::Zero, dim)
    }

    pub fn with_wells(mut self, a: Vec<f64>, b: Vec<f64>) -> Self {
        self.a = a;
        self.b = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        use DriftFamily::*;
        let d = self.dim;
        match self.family {
            Mu1 | Mu2 | Mu3 | MuSin25 if d != 1 => {
                return Err(Error::invalid(format!("{} requires dim = 1, got {d}", self.family.name())))
            }
            Mu4 if d < 3 => return Err(Error::invalid(format!("mu4 requires dim >= 3, got {d}"))),
            Mu5 if d < 4 => return Err(Error::invalid(format!("mu5 requires dim >= 4, got {d}"))),
            _ if d == 0 => return Err(Error::invalid("drift dimension must be positive")),
            _ => {}
        }
        if matches!(self.family, Mu4 | MuBipot) {
            for (name, v, n) in [("a", &self.a, d), ("b", &self.b, d)] {
                if !(v.is_empty() || v.len() == 1 || v.len() == n) {
                    return Err(Error::invalid(format!(
                        "{name} has {} entries, expected 1 or {n}",
                        v.len()
                    )));
                }
            }
            for k in 0..d {
                let (a, b) = (self.a_at(k), self.b_at(k));
                if !(a > 0.0) || !(b < 0.0) {
                    return Err(Error::invalid(format!(
                        "well coefficients need a > 0 and b < 0, got a = {a}, b = {b} at {k}"
                    )));
                }
            }
            if !(self.c >= 0.0) {
                return Err(Error::invalid("coupling c must be non-negative"));
            }
        }
        if self.family == Mu5 && !(self.forcing > 0.0) {
            return Err(Error::invalid("forcing F must be positive"));
        }
        if !self.forcing.is_finite() || !self.theta.is_finite() || !self.c.is_finite() {
            return Err(Error::invalid("drift parameters must be finite"));
        }
        Ok(())
    }

    fn a_at(&self, k: usize) -> f64 {
        match self.a.len() {
            0 => DEFAULT_A,
            1 => self.a[0],
            _ => self.a[k],
        }
    }

    fn b_at(&self, k: usize) -> f64 {
        match self.b.len() {
            0 => DEFAULT_B,
            1 => self.b[0],
            _ => self.b[k],
        }
    }

    /// Positive well location `y*_d = sqrt(−b_d / (2 a_d))`.
    pub fn well(&self, k: usize) -> f64 {
        (-self.b_at(k) / (2.0 * self.a_at(k))).sqrt()
    }

    /// Evaluate the drift at `y` into `out`.
    pub fn eval_into(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        if y.len() != d || out.len() != d {
            return Err(Error::shape(format!(
                "drift of dimension {d} evaluated at a {}-vector",
                y.len()
            )));
        }
        use DriftFamily::*;
        match self.family {
            Mu1 => out[0] = -(2.0 * y[0]).sin() * (1.0 + 5.0 * y[0].abs()).ln(),
            Mu2 | MuSin25 => out[0] = -y[0] + (25.0 * y[0]).sin(),
            Mu3 => out[0] = -y[0].powi(3) + y[0],
            Mu4 | MuBipot => {
                for k in 0..d {
                    out[k] = -4.0 * self.a_at(k) * y[k].powi(3) - 2.0 * self.b_at(k) * y[k];
                }
                if self.family == Mu4 && self.c > 0.0 {
                    let psi: Vec<f64> = (0..d).map(|k| self.psi(k, y[k])).collect();
                    for k in 0..d {
                        let mut nb = 0.0;
                        if k > 0 {
                            nb += psi[k - 1];
                        }
                        if k + 1 < d {
                            nb += psi[k + 1];
                        }
                        out[k] -= 0.5 * self.c * self.psi_prime(k, y[k], psi[k]) * nb;
                    }
                }
            }
            Mu5 => {
                for k in 0..d {
                    let p1 = y[(k + 1) % d];
                    let m1 = y[(k + d - 1) % d];
                    let m2 = y[(k + d - 2) % d];
                    out[k] = (p1 - m2) * m1 - y[k] + self.forcing;
                }
            }
            Ou => {
                for k in 0..d {
                    out[k] = -self.theta * y[k];
                }
            }
            Zero => out.iter_mut().for_each(|v| *v = 0.0),
        }
        Ok(())
    }

    pub fn eval(&self, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(y, &mut out)?;
        Ok(out)
    }

    /// Evaluate at each `dim`-sized row of `ys`.
    pub fn eval_rows(&self, ys: &[f64]) -> Result<Vec<f64>> {
        if self.dim == 0 || !ys.len().is_multiple_of(self.dim) {
            return Err(Error::shape("rows do not match the drift dimension"));
        }
        let mut out = vec![0.0; ys.len()];
        for (y, o) in ys.chunks(self.dim).zip(out.chunks_mut(self.dim)) {
            self.eval_into(y, o)?;
        }
        Ok(out)
    }

    fn psi(&self, k: usize, v: f64) -> f64 {
        let ys = self.well(k);
        let s2 = self.c * ys * ys;
        (-(v * v - ys * ys).powi(2) / (2.0 * s2)).exp()
    }

    fn psi_prime(&self, k: usize, v: f64, psi: f64) -> f64 {
        let ys = self.well(k);
        let s2 = self.c * ys * ys;
        -2.0 * v * (v * v - ys * ys) / s2 * psi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(DriftSpec::mu3().eval(&[1.0]).unwrap(), vec![0.0]);
        let v = DriftSpec::mu1().eval(&[1.0]).unwrap()[0];
        let oracle = -(2f64).sin() * 6f64.ln();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - (-1.629_242_274_859_62)).abs() < 1e-12);
    }

    #[test]
    fn lorenz_fixed_point() {
        for (d, f) in [(4, 8.0), (7, 0.5), (20, 3.0)] {
            let spec = DriftSpec::mu5(d, f);
            let out = spec.eval(&vec![f; d]).unwrap();
            assert!(out.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn wells_are_equilibria() {
        let spec = DriftSpec::mu4(5, 0.0).with_wells(vec![0.3, 0.5, 1.0, 0.25, 2.0], vec![-0.5, -1.0, -0.2, -0.5, -3.0]);
        spec.validate().unwrap();
        let y: Vec<f64> = (0..5).map(|k| if k % 2 == 0 { spec.well(k) } else { -spec.well(k) }).collect();
        assert!(spec.eval(&y).unwrap().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn coupling_derivative_matches_fd() {
        let spec = DriftSpec::mu4(3, 2.0);
        let (v, h) = (0.7, 1e-6);
        let fd = (spec.psi(1, v + h) - spec.psi(1, v - h)) / (2.0 * h);
        let an = spec.psi_prime(1, v, spec.psi(1, v));
        assert!((fd - an).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(DriftSpec { dim: 2, ..DriftSpec::mu1() }.validate().is_err());
        assert!(DriftSpec::mu4(2, 0.0).validate().is_err());
        assert!(DriftSpec::mu5(3, 8.0).validate().is_err());
        assert!(DriftSpec::mu4(3, 0.0).with_wells(vec![-1.0], vec![-1.0]).validate().is_err());
        assert!(DriftSpec::mu4(3, 0.0).eval(&[0.0, 1.0]).is_err());
    }
}
