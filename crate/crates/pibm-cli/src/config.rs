//! Experiment configuration: one JSON document per run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub id: String,
    pub seed: u64,
    pub paths: usize,
    #[serde(default)]
    pub dt: Option<f64>,
    /// Overrides the default tolerance of the experiment's checks.
    #[serde(default)]
    pub tol: Option<f64>,
    pub out: PathBuf,
    pub operation: Operation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Operation {
    Simulate {
        tau: f64,
        positions: Vec<f64>,
        t: f64,
        scheme: SchemeChoice,
        #[serde(default)]
        epsilon: Option<f64>,
    },
    Asep {
        tau: f64,
        x: Vec<f64>,
        y: Vec<f64>,
        t: f64,
        epsilon: f64,
    },
    DualityCheck {
        tau: f64,
        x: Vec<f64>,
        y: Vec<f64>,
        t: f64,
    },
    Genfun {
        tau: f64,
        x: Vec<f64>,
        t: f64,
        mc: bool,
    },
    Transition {
        n: usize,
        t: f64,
        tau: f64,
        check: TransitionCheck,
    },
    Fredholm {
        kernel: KernelChoice,
        tau: f64,
        u: f64,
        /// Time in the rescaled clock.
        t: f64,
        zeta: Vec<f64>,
        a: f64,
        grid: Grid,
        dist: TwDist,
    },
    Scaling {
        tau: f64,
        a: f64,
        /// Time in the rescaled clock.
        t: f64,
        particles: usize,
    },
    Constants {
        tau: f64,
        profile: ProfileChoice,
        slope: f64,
        t: f64,
    },
}

impl Operation {
    pub fn name(&self) -> &'static str {
        match self {
            Operation::Simulate { .. } => "simulate",
            Operation::Asep { .. } => "asep",
            Operation::DualityCheck { .. } => "duality-check",
            Operation::Genfun { .. } => "genfun",
            Operation::Transition { .. } => "transition",
            Operation::Fredholm { .. } => "fredholm",
            Operation::Scaling { .. } => "scaling",
            Operation::Constants { .. } => "constants",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeChoice {
    Oblique,
    Dual,
    Potential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionCheck {
    All,
    Permanent,
    Determinant,
    Normalization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelChoice {
    /// Moment kernel on the line.
    K,
    /// Mellin-Barnes kernel.
    KZeta,
    /// Both representations, checked against each other.
    Both,
    /// Cubic kernel on rays, checked against F_GUE.
    Kr,
    /// Tracy-Widom distribution function.
    Tw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TwDist {
    Gue,
    Goe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProfileChoice {
    PointInteraction,
    GaussianChain,
    Constant { value: f64 },
}

impl std::str::FromStr for ProfileChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "point-interaction" | "point" => Ok(ProfileChoice::PointInteraction),
            "gaussian-chain" | "gaussian" => Ok(ProfileChoice::GaussianChain),
            other => match other.strip_prefix("constant:") {
                Some(v) => v
                    .parse()
                    .map(|value| ProfileChoice::Constant { value })
                    .map_err(|e| format!("{e}")),
                None => Err(format!("unknown profile {other:?}")),
            },
        }
    }
}

/// Evenly spaced grid `lo, lo + step, ..., <= hi`, written `lo:hi:step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, step] = parts.as_slice() else {
            return Err(format!("grid {s:?} must look like lo:hi:step"));
        };
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
        let grid = Grid {
            lo: parse(lo)?,
            hi: parse(hi)?,
            step: parse(step)?,
        };
        if !(grid.step > 0.0)
            || !(grid.hi >= grid.lo)
            || !grid.lo.is_finite()
            || !grid.hi.is_finite()
        {
            return Err(format!("grid {s:?} needs lo <= hi and step > 0"));
        }
        if grid.points().len() > 100_000 {
            return Err(format!("grid {s:?} has too many points"));
        }
        Ok(grid)
    }
}
