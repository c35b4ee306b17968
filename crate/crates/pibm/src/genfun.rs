//! Generating function of the half-line Poisson system: the nested contour
//! formula, its single-point moments, and two Monte Carlo estimators that
//! reach the same quantity from the dual and from the primal side.
//!
//! The formula is stated on vertical lines `Re z_j = a_j`. Those lines sit
//! very close to the poles at `0` and at `tau z_A`, and at small times the
//! integrand only decays like `|z|^-2` along them. The evaluation therefore
//! bends every line into a wedge through the same abscissa: to the left when
//! `x_j > 0`, where `e^{x_j z}` decays in the left half plane, and to the
//! right otherwise. Left-bending slopes decrease with the index and
//! right-bending slopes increase, so `tau C_A` stays left of `C_B` for every
//! `A < B` at every height and no pole is crossed during the deformation.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{count_strictly_left, f_n_initial_unchecked, Chamber, Config, ModelParams};
use crate::quad::{graded_panels, Contour, Evaluation};
use crate::rng::{map_streams, PathRng};
use crate::sde::{evolve, simulate_dual, SimSpec};
use crate::stats::Estimate;

/// Largest number of dual points handled by the tensor quadrature.
pub const MAX_POINTS: usize = 4;

const NODES_PER_PANEL: usize = 20;
const SLOPE_MIN: f64 = 0.2;
const SLOPE_MAX: f64 = 0.85;

/// Abscissas of the integration lines, one per dual point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedContours {
    abscissas: Vec<f64>,
    /// Target absolute accuracy of the quadrature.
    pub tol: f64,
}

impl NestedContours {
    /// Checks `-(1 - tau) < a_1`, `a_n < 0` and `tau a_j < a_{j+1}`.
    pub fn new(abscissas: Vec<f64>, params: &ModelParams) -> Result<Self> {
        let tau = params.require_analytic()?;
        let bad = |msg: String| Err(Error::Contour(msg));
        if abscissas.is_empty() {
            return bad("at least one contour is required".into());
        }
        if !(abscissas[0] > -(1.0 - tau)) {
            return bad(format!(
                "a_1 = {} must exceed -(1 - tau) = {}",
                abscissas[0],
                -(1.0 - tau)
            ));
        }
        if !(abscissas[abscissas.len() - 1] < 0.0) {
            return bad("the last abscissa must be negative".into());
        }
        if let Some(j) =
            (0..abscissas.len() - 1).find(|&j| !(tau * abscissas[j] < abscissas[j + 1]))
        {
            return bad(format!(
                "nesting fails between contours {} and {}",
                j + 1,
                j + 2
            ));
        }
        Ok(Self {
            abscissas,
            tol: 1e-10,
        })
    }

    /// `a_j = -(1 - tau) (tau / 2)^j`, which is nested for every `n`.
    pub fn default_for(n: usize, params: &ModelParams) -> Result<Self> {
        let tau = params.require_analytic()?;
        let s = 0.5 * tau;
        Self::new(
            (1..=n).map(|j| -(1.0 - tau) * s.powi(j as i32)).collect(),
            params,
        )
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn abscissas(&self) -> &[f64] {
        &self.abscissas
    }

    pub fn len(&self) -> usize {
        self.abscissas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissas.is_empty()
    }
}

/// One bent contour `z(phi) = apex + bend * slope * |phi| + i phi`.
#[derive(Debug, Clone, Copy)]
struct Wedge {
    apex: f64,
    bend: f64,
    slope: f64,
}

impl Wedge {
    fn at(&self, phi: f64) -> C64 {
        C64::new(self.apex + self.bend * self.slope * phi.abs(), phi)
    }

    fn velocity(&self, phi: f64) -> C64 {
        C64::new(self.bend * self.slope * phi.signum(), 1.0)
    }
}

fn slopes(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..count)
            .map(|k| SLOPE_MAX - (SLOPE_MAX - SLOPE_MIN) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

fn wedges(x: &[f64], abscissas: &[f64]) -> (Vec<Wedge>, f64) {
    let left = x.iter().take_while(|&&v| v > 0.0).count();
    let mut out = Vec::with_capacity(x.len());
    let down = slopes(left);
    let mut up = slopes(x.len() - left);
    up.reverse();
    for (j, &a) in abscissas.iter().enumerate() {
        if j < left {
            out.push(Wedge {
                apex: a,
                bend: -1.0,
                slope: down[j],
            });
        } else {
            out.push(Wedge {
                apex: a,
                bend: 1.0,
                slope: up[j - left],
            });
        }
    }
    let gap = |v: &[f64]| {
        v.windows(2)
            .map(|w| (w[0] - w[1]).abs())
            .fold(1.0f64, f64::min)
    };
    (out, gap(&down).min(gap(&up)))
}

/// `(1/z) (tau - 1) / (z + 1 - tau) e^{x z + t z^2 / 2}`.
fn single_factor(z: C64, x: f64, t: f64, tau: f64) -> C64 {
    (tau - 1.0) / (z * (z + (1.0 - tau))) * (z * x + z * z * (0.5 * t)).exp()
}

fn log_magnitude(z: C64, x: f64, t: f64, tau: f64) -> f64 {
    (z * x + z * z * (0.5 * t)).re + (1.0 - tau).ln()
        - z.norm().ln()
        - (z + (1.0 - tau)).norm().ln()
}

/// Height beyond which the single factor (times the height) is negligible.
fn truncation(w: &Wedge, x: f64, t: f64, tau: f64, tol: f64) -> f64 {
    let target = tol.ln() - 4.0;
    let small = |phi: f64| log_magnitude(w.at(phi), x, t, tau) + phi.ln() <= target;
    let mut hi = 1.0;
    while !small(hi) || !small(2.0 * hi) {
        hi *= 2.0;
        if hi > 1e13 {
            return hi;
        }
    }
    let mut lo = hi / 2.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if small(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn build_contour(
    w: &Wedge,
    x: f64,
    t: f64,
    tau: f64,
    nearest: f64,
    ratio: f64,
    tol: f64,
) -> Contour {
    let end = truncation(w, x, t, tau, tol);
    let norm_dz = (1.0 + w.slope * w.slope).sqrt();
    let max_len = |phi: f64| {
        let omega = (C64::new(x, 0.0) + w.at(phi) * t).norm() * norm_dz;
        if omega > 0.0 {
            12.0 / omega
        } else {
            f64::INFINITY
        }
    };
    let (half_nodes, half_weights) =
        graded_panels(0.25 * nearest, end, ratio, max_len, NODES_PER_PANEL);
    let mut params = Vec::with_capacity(2 * half_nodes.len());
    let mut weights = Vec::with_capacity(2 * half_nodes.len());
    for (p, v) in half_nodes.iter().zip(&half_weights).rev() {
        params.push(-p);
        weights.push(*v);
    }
    params.extend_from_slice(&half_nodes);
    weights.extend_from_slice(&half_weights);
    Contour::from_parametrization(&params, &weights, |s| w.at(s), |s| w.velocity(s))
}

/// `F_n(x, t) = E prod_j tau^{N(x_j, t)}` for the half-line Poisson start,
/// by quadrature of the nested contour formula.
pub fn f_n_contour(
    x: &Config,
    t: f64,
    params: &ModelParams,
    contours: &NestedContours,
) -> Result<Evaluation> {
    x.expect(Chamber::Decreasing, "x")?;
    let tau = params.require_analytic()?;
    let xs = x.positions();
    let n = xs.len();
    if n == 0 {
        return Ok(Evaluation {
            value: 1.0,
            imag_residual: 0.0,
            nodes_per_axis: 0,
        });
    }
    if n > MAX_POINTS {
        return Err(Error::Capacity(format!(
            "{n} points exceed the limit of {MAX_POINTS}"
        )));
    }
    if contours.len() != n {
        return Err(Error::Contour(format!(
            "{} contours for {n} points",
            contours.len()
        )));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t = {t} must be nonnegative")));
    }
    let a = contours.abscissas();
    let (shape, slope_gap) = wedges(xs, a);
    let ratio = (1.0 + 2.0 * slope_gap).min(2.0);
    let inner_tol = contours.tol * 1e-3;
    let rules: Vec<Contour> = (0..n)
        .map(|j| {
            let mut nearest = a[j].abs().min(a[j] + 1.0 - tau);
            for k in 0..n {
                if k < j {
                    nearest = nearest.min((a[j] - tau * a[k]).abs());
                } else if k > j {
                    nearest = nearest.min((a[j] - a[k] / tau).abs());
                }
            }
            build_contour(&shape[j], xs[j], t, tau, nearest, ratio, inner_tol)
        })
        .collect();
    let sizes: Vec<usize> = rules.iter().map(Contour::len).collect();
    let work: f64 = sizes.iter().map(|&k| k as f64).product();
    if work > 2e10 {
        return Err(Error::Capacity(format!(
            "tensor grid of {sizes:?} nodes is too large"
        )));
    }
    let single: Vec<Vec<C64>> = (0..n)
        .map(|j| {
            rules[j]
                .nodes
                .iter()
                .zip(&rules[j].weights)
                .map(|(z, w)| w * single_factor(*z, xs[j], t, tau))
                .collect()
        })
        .collect();
    // cross[A][B][i * K_B + k] = (z_B - z_A) / (z_B - tau z_A) at nodes i, k.
    let mut cross: Vec<Vec<Vec<C64>>> = vec![vec![Vec::new(); n]; n];
    for (ai, row) in cross.iter_mut().enumerate() {
        for (bi, slot) in row.iter_mut().enumerate().skip(ai + 1) {
            let mut m = Vec::with_capacity(sizes[ai] * sizes[bi]);
            for za in &rules[ai].nodes {
                for zb in &rules[bi].nodes {
                    m.push((zb - za) / (zb - tau * za));
                }
            }
            *slot = m;
        }
    }
    let sum = contract(&single, &cross, &sizes);
    let prefactor = tau.powi((n * (n - 1) / 2) as i32);
    let value = prefactor * sum;
    let eval = Evaluation {
        value: value.re,
        imag_residual: value.im.abs(),
        nodes_per_axis: sizes.iter().copied().max().unwrap_or(0),
    };
    if !value.re.is_finite() || eval.imag_residual > 10.0 * contours.tol {
        return Err(Error::Accuracy(format!(
            "imaginary residual {} for value {}",
            eval.imag_residual, eval.value
        )));
    }
    Ok(eval)
}

/// `sum over node tuples of prod_j single[j][i_j] prod_{A<B} cross[A][B][i_A, i_B]`,
/// carrying the cross products into later axes as column vectors.
fn contract(single: &[Vec<C64>], cross: &[Vec<Vec<C64>>], sizes: &[usize]) -> C64 {
    let n = sizes.len();
    if n == 1 {
        return single[0].iter().sum();
    }
    fn descend(
        level: usize,
        cols: &mut Vec<Vec<C64>>,
        single: &[Vec<C64>],
        cross: &[Vec<Vec<C64>>],
        sizes: &[usize],
    ) -> C64 {
        let n = sizes.len();
        if level + 1 == n {
            return single[level]
                .iter()
                .zip(&cols[level])
                .map(|(s, c)| s * c)
                .sum();
        }
        let mut total = C64::new(0.0, 0.0);
        let saved: Vec<Vec<C64>> = cols[level + 1..].to_vec();
        for i in 0..sizes[level] {
            for b in level + 1..n {
                let row = &cross[level][b][i * sizes[b]..(i + 1) * sizes[b]];
                for (c, (s, r)) in cols[b].iter_mut().zip(saved[b - level - 1].iter().zip(row)) {
                    *c = s * r;
                }
            }
            let inner = descend(level + 1, cols, single, cross, sizes);
            total += single[level][i] * cols[level][i] * inner;
        }
        total
    }
    (0..sizes[0])
        .into_par_iter()
        .map(|i| {
            let mut cols: Vec<Vec<C64>> = vec![Vec::new(); n];
            for b in 1..n {
                cols[b] = cross[0][b][i * sizes[b]..(i + 1) * sizes[b]].to_vec();
            }
            single[0][i] * descend(1, &mut cols, single, cross, sizes)
        })
        .sum()
}

/// `E tau^{n N(u, t)}`, the generating function on the diagonal `x_j = u`.
pub fn moment_tau_n(
    u: f64,
    t: f64,
    n: usize,
    params: &ModelParams,
    contours: &NestedContours,
) -> Result<Evaluation> {
    if n == 0 {
        return Ok(Evaluation {
            value: 1.0,
            imag_residual: 0.0,
            nodes_per_axis: 0,
        });
    }
    f_n_contour(&Config::decreasing(vec![u; n])?, t, params, contours)
}

/// Monte Carlo controls for [`mc_generating_moment`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub n_paths: usize,
    pub seed: u64,
    pub dt: f64,
    /// Length of the Poisson window; `None` picks `max x + 6 sqrt(t) + 4`.
    pub poisson_length: Option<f64>,
}

impl McOptions {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            dt: 1e-3,
            poisson_length: None,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
}

/// The two Monte Carlo estimates of `F_n(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratingMoment {
    /// Average of the initial generating function at the evolved dual points.
    pub dual: Estimate,
    /// Average of `prod_j tau^{N(x_j; y(t))}` over Poisson starts.
    pub poisson: Estimate,
    pub combined_stderr: f64,
    pub poisson_length: f64,
}

/// Estimates `F_n(x, t)` by evolving the dual points and, independently, by
/// evolving Poisson(1) particles on `[0, L]`. Dual runs use streams
/// `0..n_paths` and Poisson runs streams `n_paths..2 n_paths`.
pub fn mc_generating_moment(
    x: &Config,
    t: f64,
    params: &ModelParams,
    opts: &McOptions,
) -> Result<GeneratingMoment> {
    x.expect(Chamber::Decreasing, "x")?;
    let tau = params.require_analytic()?;
    if opts.n_paths < 2 {
        return Err(Error::InvalidInput("need at least two paths".into()));
    }
    let xs = x.positions().to_vec();
    let top = xs.first().copied().unwrap_or(0.0).max(0.0);
    let length = opts.poisson_length.unwrap_or(top + 6.0 * t.sqrt() + 4.0);
    if !(length > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Poisson window {length} must be positive"
        )));
    }
    let spec = SimSpec::oblique(*params, t, opts.n_paths, opts.seed).with_dt(if t > 0.0 {
        opts.dt
    } else {
        1.0
    });
    spec.validate()?;

    let dual_values: Vec<f64> = simulate_dual(&spec, x)?
        .iter()
        .map(|c| f_n_initial_unchecked(c.positions(), tau))
        .collect();
    let poisson_values = map_streams(
        opts.n_paths,
        opts.n_paths,
        opts.seed,
        |_, rng| -> Result<f64> {
            let y = poisson_run(length, &spec, rng)?;
            let exponent: usize = xs.iter().map(|&u| count_strictly_left(u, &y)).sum();
            Ok(tau.powi(exponent as i32))
        },
    )
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let dual = Estimate::from_samples(&dual_values);
    let poisson = Estimate::from_samples(&poisson_values);
    Ok(GeneratingMoment {
        dual,
        poisson,
        combined_stderr: dual.combined_stderr(&poisson),
        poisson_length: length,
    })
}

fn poisson_run(length: f64, spec: &SimSpec, rng: &mut PathRng) -> Result<Vec<f64>> {
    let count = rng.poisson(length);
    let mut y: Vec<f64> = (0..count).map(|_| length * rng.uniform()).collect();
    y.sort_by(f64::total_cmp);
    evolve(&mut y, spec, rng)?;
    Ok(y)
}

/// Samples of `N(u, t)`, the number of particles strictly left of `u` at
/// time `t` for Poisson(1) particles started on `[0, L]`. Path `k` uses
/// stream `k`.
pub fn sample_heights(
    u: f64,
    t: f64,
    params: &ModelParams,
    opts: &McOptions,
) -> Result<Vec<usize>> {
    params.require_analytic()?;
    if opts.n_paths == 0 {
        return Err(Error::InvalidInput("need at least one path".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t = {t} must be positive")));
    }
    let length = opts
        .poisson_length
        .unwrap_or(u.max(0.0) + 6.0 * t.sqrt() + 4.0);
    if !(length > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Poisson window {length} must be positive"
        )));
    }
    let spec = SimSpec::oblique(*params, t, opts.n_paths, opts.seed).with_dt(opts.dt);
    spec.validate()?;
    map_streams(0, opts.n_paths, opts.seed, |_, rng| -> Result<usize> {
        let y = poisson_run(length, &spec, rng)?;
        Ok(count_strictly_left(u, &y))
    })
    .into_iter()
    .collect()
}
