//! Model parameters, ordered configurations, the duality function and the
//! Poisson-averaged initial generating function.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::Estimate;

/// Asymmetry of the point interaction: a collision pushes the left particle
/// with weight `p` and the right particle with weight `q = 1 - p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    p: f64,
    q: f64,
}

impl ModelParams {
    /// Builds parameters from the left-push weight `p`; `q = 1 - p`.
    pub fn from_p(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(Error::InvalidInput(format!("p = {p} must lie in [0, 1]")));
        }
        Ok(Self { p, q: 1.0 - p })
    }

    /// Builds parameters from the ratio `tau = p / q` (any `tau >= 0`).
    pub fn from_tau(tau: f64) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!(
                "tau = {tau} must be finite and nonnegative"
            )));
        }
        Self::from_p(tau / (1.0 + tau))
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `p / q`; infinite when `q = 0`.
    pub fn tau(&self) -> f64 {
        if self.q > 0.0 {
            self.p / self.q
        } else {
            f64::INFINITY
        }
    }

    /// Drift asymmetry `q - p`.
    pub fn gamma(&self) -> f64 {
        self.q - self.p
    }

    /// Parameters of the dual process, which swaps the push weights.
    pub fn swapped(&self) -> Self {
        Self {
            p: self.q,
            q: self.p,
        }
    }

    /// Analytic formulas need `0 < tau < 1`.
    pub fn require_analytic(&self) -> Result<f64> {
        let tau = self.tau();
        if tau > 0.0 && tau < 1.0 {
            Ok(tau)
        } else {
            Err(Error::Domain(format!("tau = {tau} outside (0, 1)")))
        }
    }
}

/// Orientation of a Weyl chamber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chamber {
    /// `positions[0] <= positions[1] <= ...`
    Increasing,
    /// `positions[0] >= positions[1] >= ...`
    Decreasing,
}

/// An ordered particle configuration tagged with its chamber.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    positions: Vec<f64>,
    chamber: Chamber,
}

impl Config {
    /// Sorts `positions` into the requested chamber.
    pub fn new(mut positions: Vec<f64>, chamber: Chamber) -> Result<Self> {
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        match chamber {
            Chamber::Increasing => positions.sort_by(f64::total_cmp),
            Chamber::Decreasing => positions.sort_by(|a, b| b.total_cmp(a)),
        }
        Ok(Self { positions, chamber })
    }

    pub fn increasing(positions: Vec<f64>) -> Result<Self> {
        Self::new(positions, Chamber::Increasing)
    }

    pub fn decreasing(positions: Vec<f64>) -> Result<Self> {
        Self::new(positions, Chamber::Decreasing)
    }

    /// Wraps coordinates that are already ordered; rejects unordered input.
    pub fn from_ordered(positions: Vec<f64>, chamber: Chamber) -> Result<Self> {
        let ordered = positions.windows(2).all(|w| match chamber {
            Chamber::Increasing => w[0] <= w[1],
            Chamber::Decreasing => w[0] >= w[1],
        });
        if !ordered || positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{positions:?} is not in the {chamber:?} chamber"
            )));
        }
        Ok(Self { positions, chamber })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn chamber(&self) -> Chamber {
        self.chamber
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    /// Point reflection `x -> -x`, which flips the chamber orientation.
    pub fn mirrored(&self) -> Self {
        let chamber = match self.chamber {
            Chamber::Increasing => Chamber::Decreasing,
            Chamber::Decreasing => Chamber::Increasing,
        };
        Self {
            positions: self.positions.iter().map(|v| -v).collect(),
            chamber,
        }
    }

    pub(crate) fn expect(&self, chamber: Chamber, what: &str) -> Result<()> {
        if self.chamber == chamber {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "{what} must be tagged {chamber:?}, got {:?}",
                self.chamber
            )))
        }
    }
}

/// Step function with the convention `theta(0) = 0`.
pub fn theta(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Number of particles of `y` located in `(-inf, u]`.
pub fn count_left(u: f64, y: &Config) -> usize {
    match y.chamber {
        Chamber::Increasing => y.positions.partition_point(|&v| v <= u),
        Chamber::Decreasing => y.positions.len() - y.positions.partition_point(|&v| v > u),
    }
}

/// Number of particles of an increasing slice strictly left of `u`.
pub(crate) fn count_strictly_left(u: f64, sorted: &[f64]) -> usize {
    sorted.partition_point(|&v| v < u)
}

/// Exponent of the duality function: the number of pairs with `x_j > y_i`.
pub fn duality_exponent(x: &Config, y: &Config) -> Result<usize> {
    x.expect(Chamber::Decreasing, "x")?;
    y.expect(Chamber::Increasing, "y")?;
    Ok(x.positions
        .iter()
        .map(|&xj| count_strictly_left(xj, &y.positions))
        .sum())
}

/// Duality function `prod_{j,i} tau^{theta(x_j - y_i)}`.
pub fn duality_h(x: &Config, y: &Config, params: &ModelParams) -> Result<f64> {
    let tau = params.require_analytic()?;
    Ok(tau.powi(duality_exponent(x, y)? as i32))
}

/// Monte Carlo estimate of both sides of a duality identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityCheck {
    /// Average of `H(x(t), y0)` over dual runs.
    pub lhs: Estimate,
    /// Average of `H(x0, y(t))` over primal runs.
    pub rhs: Estimate,
    pub combined_stderr: f64,
}

impl DualityCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.lhs.mean - self.rhs.mean).abs()
    }
}

/// Poisson(1) half-line average of the duality function,
/// `exp(-(1 - tau) * sum_{j <= l} tau^{j-1} x_j)` where `x_1 .. x_l` are the
/// strictly positive coordinates.
pub fn f_n_initial(x: &Config, params: &ModelParams) -> Result<f64> {
    x.expect(Chamber::Decreasing, "x")?;
    let tau = params.require_analytic()?;
    Ok(f_n_initial_unchecked(&x.positions, tau))
}

/// Same as [`f_n_initial`] for a slice already known to be decreasing.
pub(crate) fn f_n_initial_unchecked(x: &[f64], tau: f64) -> f64 {
    let mut weight = 1.0;
    let mut exponent = 0.0;
    for &xj in x.iter().take_while(|&&v| v > 0.0) {
        exponent += weight * xj;
        weight *= tau;
    }
    (-(1.0 - tau) * exponent).exp()
}
