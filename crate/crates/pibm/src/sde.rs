//! Monte Carlo simulation of Brownian motions with oblique point
//! interactions, their dual, and the smooth short-range potential
//! approximation.
//!
//! All schemes consume the same noise layout: path `i` reads stream `i` of
//! the master seed, and every macro step draws `substeps` standard normals per
//! coordinate in coordinate order. Two simulations with the same seed, the
//! same fine step `dt / substeps` and the same number of coordinates
//! therefore see the same Brownian path, which is what makes the potential
//! approximation comparable path by path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{duality_h, Chamber, Config, DualityCheck, ModelParams};
use crate::rng::{map_paths, PathRng};
use crate::stats::Estimate;

/// Reference short-range potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialForm {
    /// `V(u) = (1 - |u|)^3 / |u|` on `[-1, 1]`, zero outside (divergence exponent 1).
    CubicOverLinear,
}

impl PotentialForm {
    /// Divergence exponent `delta` with `|u|^delta V(u) -> const > 0`.
    pub fn divergence_exponent(&self) -> f64 {
        match self {
            PotentialForm::CubicOverLinear => 1.0,
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            PotentialForm::CubicOverLinear if a < 1.0 => (1.0 - a).powi(3) / a,
            _ => 0.0,
        }
    }

    /// `V'(u)`.
    pub fn derivative(&self, u: f64) -> f64 {
        let a = u.abs();
        match self {
            PotentialForm::CubicOverLinear if a < 1.0 => {
                let one_minus = 1.0 - a;
                -one_minus * one_minus * (1.0 + 2.0 * a) / (a * a) * u.signum()
            }
            _ => 0.0,
        }
    }
}

/// Scaled potential `V_eps(u) = V(u / eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub epsilon: f64,
    pub form: PotentialForm,
}

impl PotentialSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "epsilon = {epsilon} must be positive"
            )));
        }
        Ok(Self {
            epsilon,
            form: PotentialForm::CubicOverLinear,
        })
    }

    /// `V_eps'(u) = V'(u / eps) / eps`.
    pub fn force(&self, u: f64) -> f64 {
        self.form.derivative(u / self.epsilon) / self.epsilon
    }

    /// Largest admissible step, `eps^2 / 10`.
    pub fn max_dt(&self) -> f64 {
        self.epsilon * self.epsilon / 10.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scheme {
    /// Euler step followed by the p/q-weighted pairwise projection.
    ObliqueProjection,
    /// Euler-Maruyama for the smooth potential interaction.
    Potential(PotentialSpec),
}

/// Everything that determines a batch of paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub params: ModelParams,
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub scheme: Scheme,
    /// Normals summed into one increment; `dt / substeps` is the noise grid.
    pub substeps: usize,
}

impl SimSpec {
    /// Oblique-projection batch with the default step `1e-4 * t_end`.
    pub fn oblique(params: ModelParams, t_end: f64, n_paths: usize, seed: u64) -> Self {
        let dt = if t_end > 0.0 { 1e-4 * t_end } else { 1.0 };
        Self {
            params,
            dt,
            t_end,
            n_paths,
            seed,
            scheme: Scheme::ObliqueProjection,
            substeps: 1,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!(
                "dt = {} must be positive",
                self.dt
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::InvalidInput(format!(
                "t_end = {} must be nonnegative",
                self.t_end
            )));
        }
        if self.n_paths == 0 || self.substeps == 0 {
            return Err(Error::InvalidInput(
                "n_paths and substeps must be at least 1".into(),
            ));
        }
        if let Scheme::Potential(pot) = self.scheme {
            if self.dt > pot.max_dt() {
                return Err(Error::StepSize(format!(
                    "dt = {} exceeds eps^2/10 = {} for eps = {}",
                    self.dt,
                    pot.max_dt(),
                    pot.epsilon
                )));
            }
        }
        Ok(())
    }

    /// Number of macro steps; the last one is shortened to land on `t_end`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    fn step_length(&self, k: usize) -> f64 {
        let n = self.steps();
        let last = self.t_end - self.dt * (n - 1) as f64;
        if k + 1 == n && (last - self.dt).abs() > 1e-9 * self.dt {
            last
        } else {
            self.dt
        }
    }
}

/// Resolves adjacent overlaps in an increasing configuration: a violated
/// pair `y[j] > y[j+1]` with overlap `d` moves to `y[j] - p d`,
/// `y[j+1] + q d`. Sweeps alternate direction until no overlap exceeds the
/// rounding level of the state; the remaining residue is clamped away.
///
/// Three or more particles in contact converge geometrically, so the sweep
/// count is bounded by `SWEEP_FACTOR * m^2` rather than by `m^2`.
pub fn project(y: &mut [f64], p: f64, q: f64) -> Result<()> {
    const SWEEP_FACTOR: usize = 64;
    let m = y.len();
    if m < 2 {
        return Ok(());
    }
    let scale = y.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let tol = 8.0 * f64::EPSILON * scale;
    let cap = SWEEP_FACTOR * m * m;
    let mut forward = true;
    // Pairs outside the window touched by the previous sweep cannot have
    // become violated, so each sweep only revisits that window.
    let (mut lo, mut hi) = (0usize, m - 2);
    for _ in 0..cap {
        let mut largest = 0.0f64;
        let (mut touched_lo, mut touched_hi) = (usize::MAX, 0usize);
        let mut resolve = |j: usize, y: &mut [f64]| {
            let overlap = y[j] - y[j + 1];
            if overlap > 0.0 {
                y[j] -= p * overlap;
                y[j + 1] += q * overlap;
                largest = largest.max(overlap);
                touched_lo = touched_lo.min(j);
                touched_hi = touched_hi.max(j);
            }
        };
        if forward {
            (lo..=hi).for_each(|j| resolve(j, y));
        } else {
            (lo..=hi).rev().for_each(|j| resolve(j, y));
        }
        if largest <= tol {
            for j in 0..m - 1 {
                if y[j] > y[j + 1] {
                    y[j + 1] = y[j];
                }
            }
            return Ok(());
        }
        lo = touched_lo.saturating_sub(1);
        hi = (touched_hi + 1).min(m - 2);
        forward = !forward;
    }
    Err(Error::Diverged(format!(
        "projection did not settle after {cap} sweeps"
    )))
}

#[inline]
fn fill_increments(inc: &mut [f64], rng: &mut PathRng, substeps: usize, sd: f64) {
    if substeps == 1 {
        for v in inc.iter_mut() {
            *v = sd * rng.normal();
        }
    } else {
        inc.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..substeps {
            for v in inc.iter_mut() {
                *v += rng.normal();
            }
        }
        inc.iter_mut().for_each(|v| *v *= sd);
    }
}

/// Advances one oblique-projection path in place.
fn run_oblique(
    y: &mut [f64],
    spec: &SimSpec,
    rng: &mut PathRng,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let (p, q) = (spec.params.p(), spec.params.q());
    let mut inc = vec![0.0; y.len()];
    let steps = spec.steps();
    for k in 0..steps {
        let h = spec.step_length(k);
        fill_increments(
            &mut inc,
            rng,
            spec.substeps,
            (h / spec.substeps as f64).sqrt(),
        );
        for (v, d) in y.iter_mut().zip(&inc) {
            *v += d;
        }
        project(y, p, q)?;
        debug_assert!(y.windows(2).all(|w| w[0] <= w[1]));
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged("non-finite coordinate".into()));
        }
        observe(k + 1, y);
    }
    Ok(())
}

/// Advances one potential-interaction path in place.
fn run_potential(
    y: &mut [f64],
    spec: &SimSpec,
    pot: &PotentialSpec,
    rng: &mut PathRng,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let (p, q) = (spec.params.p(), spec.params.q());
    let mut inc = vec![0.0; y.len()];
    for k in 0..spec.steps() {
        let h = spec.step_length(k);
        fill_increments(
            &mut inc,
            rng,
            spec.substeps,
            (h / spec.substeps as f64).sqrt(),
        );
        potential_step(y, h, &inc, pot, p, q, rng, 0)
            .map_err(|e| annotate(e, k + 1, spec.dt, pot))?;
        observe(k + 1, y);
    }
    Ok(())
}

/// Step halvings allowed inside one step of the potential scheme.
const MAX_HALVINGS: usize = 24;

/// One Euler step of length `h` with Brownian increment `inc`. A step that
/// would shrink some gap to less than half its width is split in two, the
/// midpoint of the Brownian path being drawn from its bridge law, so the
/// path driving the step is unchanged.
#[allow(clippy::too_many_arguments)]
fn potential_step(
    x: &mut [f64],
    h: f64,
    inc: &[f64],
    pot: &PotentialSpec,
    p: f64,
    q: f64,
    rng: &mut PathRng,
    depth: usize,
) -> Result<()> {
    let m = x.len();
    let forces: Vec<f64> = (0..m.saturating_sub(1))
        .map(|j| pot.force(x[j + 1] - x[j]))
        .collect();
    let trial: Vec<f64> = (0..m)
        .map(|j| {
            let mut drift = 0.0;
            if j + 1 < m {
                drift += p * forces[j];
            }
            if j > 0 {
                drift -= q * forces[j - 1];
            }
            x[j] + drift * h + inc[j]
        })
        .collect();
    let gaps_kept =
        (0..m.saturating_sub(1)).all(|j| trial[j + 1] - trial[j] >= 0.5 * (x[j + 1] - x[j]));
    if gaps_kept && trial.iter().all(|v| v.is_finite()) {
        x.copy_from_slice(&trial);
        return Ok(());
    }
    if depth == MAX_HALVINGS {
        let j = (0..m - 1)
            .find(|&j| trial[j + 1] - trial[j] < 0.5 * (x[j + 1] - x[j]))
            .unwrap_or(0);
        return Err(Error::StepSize(format!(
            "gap {j} would shrink from {} to {} after {depth} halvings",
            x[j + 1] - x[j],
            trial[j + 1] - trial[j]
        )));
    }
    let spread = (0.25 * h).sqrt();
    let first: Vec<f64> = inc
        .iter()
        .map(|d| 0.5 * d + spread * rng.normal())
        .collect();
    let second: Vec<f64> = inc.iter().zip(&first).map(|(d, a)| d - a).collect();
    potential_step(x, 0.5 * h, &first, pot, p, q, rng, depth + 1)?;
    potential_step(x, 0.5 * h, &second, pot, p, q, rng, depth + 1)
}

fn annotate(e: Error, step: usize, dt: f64, pot: &PotentialSpec) -> Error {
    match e {
        Error::StepSize(msg) => Error::StepSize(format!(
            "{msg} at step {step}; reduce dt = {dt} (eps = {})",
            pot.epsilon
        )),
        other => other,
    }
}

/// Advances a single path in place under `spec.scheme`.
pub(crate) fn evolve(y: &mut [f64], spec: &SimSpec, rng: &mut PathRng) -> Result<()> {
    run_path(y, spec, rng, |_, _| {})
}

fn run_path(
    y: &mut [f64],
    spec: &SimSpec,
    rng: &mut PathRng,
    observe: impl FnMut(usize, &[f64]),
) -> Result<()> {
    match spec.scheme {
        Scheme::ObliqueProjection => run_oblique(y, spec, rng, observe),
        Scheme::Potential(pot) => run_potential(y, spec, &pot, rng, observe),
    }
}

fn collect<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

/// Terminal configurations of the oblique-projection scheme started at `y0`.
pub fn simulate_oblique(spec: &SimSpec, y0: &Config) -> Result<Vec<Config>> {
    y0.expect(Chamber::Increasing, "y0")?;
    let spec = SimSpec {
        scheme: Scheme::ObliqueProjection,
        ..*spec
    };
    spec.validate()?;
    collect(map_paths(spec.n_paths, spec.seed, |_, rng| {
        let mut y = y0.positions().to_vec();
        run_oblique(&mut y, &spec, rng, |_, _| {})?;
        Ok(Config::from_ordered(y, Chamber::Increasing).expect("projection keeps order"))
    }))
}

/// Terminal configurations of the dual process started at `x0`.
///
/// In the dual the right particle of a colliding pair is pushed right with
/// weight `p` and the left one is pushed left with weight `q`. The mirror
/// image `-x` therefore follows the primal dynamics with the same weights,
/// which is how it is simulated.
pub fn simulate_dual(spec: &SimSpec, x0: &Config) -> Result<Vec<Config>> {
    x0.expect(Chamber::Decreasing, "x0")?;
    let mirrored = x0.mirrored();
    Ok(simulate_oblique(spec, &mirrored)?
        .into_iter()
        .map(|c| c.mirrored())
        .collect())
}

/// Estimates `E_x H(x(t), y0)` by evolving the dual from `x0` and
/// `E_y H(x0, y(t))` by evolving the primal from `y0`. Dual runs use streams
/// `0..n_paths` of `spec.seed` and primal runs streams `n_paths..2 n_paths`.
pub fn duality_check(spec: &SimSpec, x0: &Config, y0: &Config) -> Result<DualityCheck> {
    x0.expect(Chamber::Decreasing, "x0")?;
    y0.expect(Chamber::Increasing, "y0")?;
    spec.params.require_analytic()?;
    if spec.n_paths < 2 {
        return Err(Error::InvalidInput("need at least two paths".into()));
    }
    let spec = SimSpec {
        scheme: Scheme::ObliqueProjection,
        ..*spec
    };
    spec.validate()?;
    let n = spec.n_paths;
    let mirrored = x0.mirrored();
    let values = collect(map_paths(2 * n, spec.seed, |i, rng| -> Result<f64> {
        if i < n {
            let mut z = mirrored.positions().to_vec();
            run_oblique(&mut z, &spec, rng, |_, _| {})?;
            let x = Config::from_ordered(z, Chamber::Increasing)?.mirrored();
            duality_h(&x, y0, &spec.params)
        } else {
            let mut y = y0.positions().to_vec();
            run_oblique(&mut y, &spec, rng, |_, _| {})?;
            duality_h(
                x0,
                &Config::from_ordered(y, Chamber::Increasing)?,
                &spec.params,
            )
        }
    }))?;
    let lhs = Estimate::from_samples(&values[..n]);
    let rhs = Estimate::from_samples(&values[n..]);
    Ok(DualityCheck {
        lhs,
        rhs,
        combined_stderr: lhs.combined_stderr(&rhs),
    })
}

/// Terminal configurations of the potential scheme started at `y0`.
pub fn simulate_potential(spec: &SimSpec, y0: &Config) -> Result<Vec<Config>> {
    y0.expect(Chamber::Increasing, "y0")?;
    let Scheme::Potential(pot) = spec.scheme else {
        return Err(Error::InvalidInput(
            "simulate_potential needs a potential scheme".into(),
        ));
    };
    spec.validate()?;
    if y0.positions().windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "potential scheme needs strictly ordered initial data".into(),
        ));
    }
    collect(map_paths(spec.n_paths, spec.seed, |_, rng| {
        let mut y = y0.positions().to_vec();
        run_potential(&mut y, spec, &pot, rng, |_, _| {})?;
        Ok(Config::from_ordered(y, Chamber::Increasing).expect("positive gaps keep order"))
    }))
}

/// One recorded sample of a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub path_id: usize,
    pub step: usize,
    pub time: f64,
    pub positions: Vec<f64>,
}

/// Full paths (every `stride`-th step plus the start) for either scheme.
pub fn simulate_recorded(spec: &SimSpec, y0: &Config, stride: usize) -> Result<Vec<PathPoint>> {
    y0.expect(Chamber::Increasing, "y0")?;
    spec.validate()?;
    let stride = stride.max(1);
    let per_path = collect(map_paths(spec.n_paths, spec.seed, |i, rng| {
        let mut y = y0.positions().to_vec();
        let mut out = vec![PathPoint {
            path_id: i,
            step: 0,
            time: 0.0,
            positions: y.clone(),
        }];
        let total = spec.steps();
        run_path(&mut y, spec, rng, |k, state| {
            if k % stride == 0 || k == total {
                let time = if k == total {
                    spec.t_end
                } else {
                    k as f64 * spec.dt
                };
                out.push(PathPoint {
                    path_id: i,
                    step: k,
                    time,
                    positions: state.to_vec(),
                });
            }
        })?;
        Ok(out)
    }))?;
    Ok(per_path.into_iter().flatten().collect())
}

/// Terminal states of the oblique scheme and of the potential scheme for
/// several ranges, all driven by one Brownian path per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSample {
    pub oblique: Vec<f64>,
    pub potential: Vec<Vec<f64>>,
}

/// Runs the oblique scheme on the fine grid `dt_fine` and each potential
/// scheme on the coarser grid `dt_fine * strides[k]`, sharing the noise.
pub fn simulate_coupled(
    params: ModelParams,
    y0: &Config,
    t_end: f64,
    dt_fine: f64,
    potentials: &[(PotentialSpec, usize)],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<CoupledSample>> {
    y0.expect(Chamber::Increasing, "y0")?;
    let fine = SimSpec::oblique(params, t_end, n_paths, seed).with_dt(dt_fine);
    fine.validate()?;
    let steps = fine.steps();
    if (steps as f64 * dt_fine - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Error::InvalidInput(
            "t_end must be a multiple of dt_fine for coupled runs".into(),
        ));
    }
    for (pot, stride) in potentials {
        let spec = SimSpec {
            scheme: Scheme::Potential(*pot),
            dt: dt_fine * *stride as f64,
            ..fine
        };
        spec.validate()?;
        if steps % stride != 0 {
            return Err(Error::InvalidInput(format!(
                "stride {stride} does not divide {steps} steps"
            )));
        }
    }
    let (p, q) = (params.p(), params.q());
    let m = y0.len();
    collect(map_paths(n_paths, seed, |_, rng| {
        let mut y = y0.positions().to_vec();
        let mut xs: Vec<Vec<f64>> = potentials.iter().map(|_| y.clone()).collect();
        let mut pending: Vec<Vec<f64>> = potentials.iter().map(|_| vec![0.0; m]).collect();
        let mut inc = vec![0.0; m];
        let sd = dt_fine.sqrt();
        for k in 0..steps {
            for v in inc.iter_mut() {
                *v = sd * rng.normal();
            }
            for (v, d) in y.iter_mut().zip(&inc) {
                *v += d;
            }
            project(&mut y, p, q)?;
            for (idx, (pot, stride)) in potentials.iter().enumerate() {
                for (acc, d) in pending[idx].iter_mut().zip(&inc) {
                    *acc += d;
                }
                if (k + 1) % stride == 0 {
                    let h = dt_fine * *stride as f64;
                    potential_step(&mut xs[idx], h, &pending[idx], pot, p, q, rng, 0)
                        .map_err(|e| annotate(e, k + 1, h, pot))?;
                    pending[idx].iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
        Ok(CoupledSample {
            oblique: y,
            potential: xs,
        })
    }))
}
