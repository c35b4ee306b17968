//! Large-time behaviour: hydrodynamic profiles of the half-line Poisson
//! system, the saddle point of the cubic expansion, rescaling of height
//! fluctuations, and the non-universal KPZ constants for a given pressure.
//!
//! Times are passed as a [`Clock`]. The hydrodynamic formulas are simplest
//! in the rescaled clock `t = gamma T`, where `T` is wall-clock time.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fredholm::tw_gue_cdf;
use crate::model::{count_strictly_left, ModelParams};
use crate::rng::map_streams;
use crate::sde::{evolve, SimSpec};

/// A time in either clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Clock {
    Wall(f64),
    Rescaled(f64),
}

impl Clock {
    /// Time in the rescaled clock `gamma T`.
    pub fn rescaled(&self, gamma: f64) -> f64 {
        match *self {
            Clock::Wall(t) => gamma * t,
            Clock::Rescaled(t) => t,
        }
    }

    /// Wall-clock time `T`.
    pub fn wall(&self, gamma: f64) -> f64 {
        match *self {
            Clock::Wall(t) => t,
            Clock::Rescaled(t) => t / gamma,
        }
    }
}

fn rescaled_positive(clock: Clock, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("gamma = {gamma} must be positive")));
    }
    let t = clock.rescaled(gamma);
    if t > 0.0 && t.is_finite() {
        Ok(t)
    } else {
        Err(Error::Domain(format!("time {t} must be positive")))
    }
}

/// Macroscopic position of the particle with label `u`:
/// `2 sqrt(u t)` for `u <= t` and `u + t` beyond, `t` in the rescaled clock.
pub fn lln_profile(u: f64, clock: Clock, gamma: f64) -> Result<f64> {
    let t = rescaled_positive(clock, gamma)?;
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("label u = {u} must be nonnegative")));
    }
    Ok(if u <= t { 2.0 * (u * t).sqrt() } else { u + t })
}

/// Macroscopic number of particles left of `x`, the inverse of
/// [`lln_profile`]: `x^2 / (4t)` for `0 <= x <= 2t` and `x - t` beyond.
pub fn lln_height(x: f64, clock: Clock, gamma: f64) -> Result<f64> {
    let t = rescaled_positive(clock, gamma)?;
    Ok(if x <= 0.0 {
        0.0
    } else if x <= 2.0 * t {
        x * x / (4.0 * t)
    } else {
        x - t
    })
}

/// `N(a t)` at rescaled time `t`: `a^2 t / 4` for `a <= 2`, `(a - 1) t` beyond.
pub fn lln_counts(a: f64, clock: Clock, gamma: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a = {a} must be positive")));
    }
    let t = rescaled_positive(clock, gamma)?;
    lln_height(a * t, Clock::Rescaled(t), 1.0)
}

/// Saddle point data of `G(z) = -z^2/2 - a z - (a^2/4) log z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaddleData {
    pub a: f64,
    pub z_c: f64,
    pub g_at_zc: C64,
    /// `G''(z_c)`, which vanishes.
    pub g2_at_zc: f64,
    pub g3_at_zc: f64,
}

/// `G(z)` with the principal logarithm.
pub fn saddle_g(z: C64, a: f64) -> C64 {
    -0.5 * z * z - a * z - 0.25 * a * a * z.ln()
}

/// `G'(z) = -(z + a/2)^2 / z`.
pub fn saddle_g_prime(z: C64, a: f64) -> C64 {
    let s = z + 0.5 * a;
    -s * s / z
}

pub fn saddle_data(a: f64) -> Result<SaddleData> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("a = {a} must be positive")));
    }
    let z_c = -0.5 * a;
    Ok(SaddleData {
        a,
        z_c,
        g_at_zc: saddle_g(C64::new(z_c, 0.0), a),
        g2_at_zc: -1.0 + a * a / (4.0 * z_c * z_c),
        g3_at_zc: -2.0 / z_c,
    })
}

/// `r_i = -(a/2)^{-2/3} t^{-1/3} (N_i - a^2 t / 4)` with `t` rescaled, so
/// that `P(r <= s)` approaches `F_GUE(s)`.
pub fn rescale_fluctuations(samples: &[usize], a: f64, t: f64) -> Result<Vec<f64>> {
    if !(a > 0.0 && t > 0.0) {
        return Err(Error::DegenerateScale(format!(
            "a = {a} and t = {t} must be positive"
        )));
    }
    let scale = (0.5 * a).powf(-2.0 / 3.0) * t.powf(-1.0 / 3.0);
    let centre = 0.25 * a * a * t;
    Ok(samples
        .iter()
        .map(|&n| -scale * (n as f64 - centre))
        .collect())
}

/// Kolmogorov distance between the rescaled sample and `F_GUE`, taken over
/// all real arguments.
pub fn ks_against_gue(standardized: &[f64]) -> Result<f64> {
    let mut sorted = standardized.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let f = tw_gue_cdf(x)?;
        let mut j = i;
        while j < sorted.len() && sorted[j] == x {
            j += 1;
        }
        worst = worst
            .max((f - i as f64 / n).abs())
            .max((j as f64 / n - f).abs());
        i = j;
    }
    Ok(worst)
}

/// Largest gap between `P(N >= k)` and `F_GUE(r_k)` over the integers `k`
/// carrying empirical mass, where `r_k` is the rescaled value of `k`. This
/// compares the two laws where the integer-valued height can resolve them.
pub fn lattice_ks_against_gue(samples: &[usize], a: f64, t: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let top = *samples.iter().max().unwrap_or(&0);
    let mut counts = vec![0usize; top + 2];
    for &n in samples {
        counts[n] += 1;
    }
    let total = samples.len() as f64;
    let mut at_least = total;
    let mut worst = 0.0f64;
    for (k, &c) in counts.iter().enumerate().take(top + 1) {
        if c > 0 {
            let r = rescale_fluctuations(&[k], a, t)?[0];
            worst = worst.max((at_least / total - tw_gue_cdf(r)?).abs());
        }
        at_least -= c as f64;
    }
    Ok(worst)
}

/// Pressure of the stationary gap distribution as a function of the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MacroProfile {
    /// `P(l) = 1 / l`.
    PointInteraction,
    /// `P(l) = l`.
    GaussianChain,
    /// `P(l) = c`.
    Constant(f64),
}

impl MacroProfile {
    pub fn pressure(&self, l: f64) -> f64 {
        match *self {
            MacroProfile::PointInteraction => 1.0 / l,
            MacroProfile::GaussianChain => l,
            MacroProfile::Constant(c) => c,
        }
    }

    pub fn pressure_prime(&self, l: f64) -> f64 {
        match *self {
            MacroProfile::PointInteraction => -1.0 / (l * l),
            MacroProfile::GaussianChain => 1.0,
            MacroProfile::Constant(_) => 0.0,
        }
    }

    pub fn pressure_second(&self, l: f64) -> f64 {
        match *self {
            MacroProfile::PointInteraction => 2.0 / (l * l * l),
            MacroProfile::GaussianChain | MacroProfile::Constant(_) => 0.0,
        }
    }
}

/// Non-universal constants `A = -P'(l0)` and `lambda = gamma P''(l0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpzConstants {
    pub slope: f64,
    pub a_coef: f64,
    pub lambda: f64,
}

impl KpzConstants {
    /// `(|lambda| A^2 t / 2)^{1/3}` for wedge and stationary data.
    pub fn scale_wedge(&self, t: f64) -> f64 {
        (0.5 * self.lambda.abs() * self.a_coef * self.a_coef * t).cbrt()
    }

    /// `(|lambda| A^2 t)^{1/3}` for flat data.
    pub fn scale_flat(&self, t: f64) -> f64 {
        (self.lambda.abs() * self.a_coef * self.a_coef * t).cbrt()
    }

    /// Direction of the fluctuation: `-sgn(phi'')` in the wedge statement.
    pub fn orientation(curvature: f64) -> f64 {
        -curvature.signum()
    }

    /// Label rate `-gamma P'(l)` and velocity `(P(l) - l P'(l)) gamma` of the
    /// characteristic along which stationary data fluctuate on the `t^{1/3}` scale.
    pub fn stationary_reference(&self, gamma: f64, profile: &MacroProfile) -> (f64, f64) {
        let l = self.slope;
        (
            gamma * self.a_coef,
            gamma * (profile.pressure(l) + l * self.a_coef),
        )
    }
}

pub fn kpz_constants_wedge(
    slope: f64,
    params: &ModelParams,
    profile: &MacroProfile,
) -> Result<KpzConstants> {
    kpz_constants(slope, params.gamma(), profile)
}

/// The constants for an explicit `gamma`.
pub fn kpz_constants(slope: f64, gamma: f64, profile: &MacroProfile) -> Result<KpzConstants> {
    if !(slope > 0.0) || !slope.is_finite() {
        return Err(Error::Domain(format!("slope {slope} must be positive")));
    }
    let a_coef = -profile.pressure_prime(slope);
    let lambda = gamma * profile.pressure_second(slope);
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::DegenerateScale(format!(
            "lambda = {lambda} at slope {slope}"
        )));
    }
    if !(a_coef > 0.0) {
        return Err(Error::DegenerateScale(format!(
            "A = {a_coef} must be positive at slope {slope}"
        )));
    }
    Ok(KpzConstants {
        slope,
        a_coef,
        lambda,
    })
}

/// Which envelope of the affine family `l y + gamma P(l)` is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Envelope {
    Sup,
    Inf,
}

/// `sup` or `inf` over `l in [l_minus, l_plus]` of `l y + gamma P(l)`: a
/// grid scan locates the best cell, golden-section search refines it, and
/// the endpoints are always compared.
pub fn kpz_profile_wedge(
    y: f64,
    l_minus: f64,
    l_plus: f64,
    gamma: f64,
    profile: &MacroProfile,
    envelope: Envelope,
) -> Result<f64> {
    if !(l_minus < l_plus) {
        return Err(Error::InvalidInput(format!(
            "need l_minus < l_plus, got [{l_minus}, {l_plus}]"
        )));
    }
    let sign = match envelope {
        Envelope::Sup => 1.0,
        Envelope::Inf => -1.0,
    };
    let objective = |l: f64| sign * (l * y + gamma * profile.pressure(l));
    const CELLS: usize = 256;
    let h = (l_plus - l_minus) / CELLS as f64;
    let (best_cell, _) = (0..=CELLS)
        .map(|k| (k, objective(l_minus + k as f64 * h)))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, v)| if v > acc.1 { (k, v) } else { acc },
        );
    let lo = l_minus + best_cell.saturating_sub(1) as f64 * h;
    let hi = (l_minus + (best_cell + 1) as f64 * h).min(l_plus);
    let refined = golden_max(&objective, lo, hi);
    let best = refined.max(objective(l_minus)).max(objective(l_plus));
    Ok(sign * best)
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(0.5 * (a + b)))
}

/// Settings of the finite-time fluctuation experiment: `particles` points
/// with unit exponential gaps from the origin evolve under the oblique
/// scheme until rescaled time `t`, and the height is read at `u = a t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingExperiment {
    pub params: ModelParams,
    pub a: f64,
    pub t: f64,
    pub particles: usize,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Outcome of [`run_scaling`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub heights: Vec<usize>,
    pub lln: f64,
    pub mean_height: f64,
    /// Fraction of runs with `|N - a^2 t/4| <= 5 t^{1/3}`.
    pub within_window: f64,
    pub standardized: Vec<f64>,
    pub ks: f64,
    pub lattice_ks: f64,
}

/// Heights `N(a t)` at rescaled time `t` for independent runs.
pub fn sample_scaling_heights(exp: &ScalingExperiment) -> Result<Vec<usize>> {
    let gamma = exp.params.gamma();
    let wall = Clock::Rescaled(exp.t).wall(gamma);
    rescaled_positive(Clock::Rescaled(exp.t), gamma)?;
    if exp.particles == 0 || exp.n_paths == 0 {
        return Err(Error::InvalidInput("need particles and paths".into()));
    }
    let spec = SimSpec::oblique(exp.params, wall, exp.n_paths, exp.seed).with_dt(exp.dt);
    spec.validate()?;
    let u = exp.a * exp.t;
    map_streams(0, exp.n_paths, exp.seed, |_, rng| -> Result<usize> {
        let mut y = Vec::with_capacity(exp.particles);
        let mut x = 0.0;
        for _ in 0..exp.particles {
            x += rng.exp1();
            y.push(x);
        }
        evolve(&mut y, &spec, rng)?;
        Ok(count_strictly_left(u, &y))
    })
    .into_iter()
    .collect()
}

pub fn run_scaling(exp: &ScalingExperiment) -> Result<ScalingReport> {
    let heights = sample_scaling_heights(exp)?;
    let lln = lln_counts(exp.a, Clock::Rescaled(exp.t), exp.params.gamma())?;
    let window = 5.0 * exp.t.cbrt();
    let n = heights.len() as f64;
    let mean_height = heights.iter().sum::<usize>() as f64 / n;
    let within_window = heights
        .iter()
        .filter(|&&h| (h as f64 - lln).abs() <= window)
        .count() as f64
        / n;
    let standardized = rescale_fluctuations(&heights, exp.a, exp.t)?;
    let ks = ks_against_gue(&standardized)?;
    let lattice_ks = lattice_ks_against_gue(&heights, exp.a, exp.t)?;
    Ok(ScalingReport {
        heights,
        lln,
        mean_height,
        within_window,
        standardized,
        ks,
        lattice_ks,
    })
}
