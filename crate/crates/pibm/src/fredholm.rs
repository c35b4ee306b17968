//! Fredholm determinants by Nyström discretization, the kernels behind the
//! q-Laplace transform `E e_tau(zeta tau^{N(u, T)})` of the height function,
//! the cubic limit kernel, and the Tracy-Widom distribution functions.
//!
//! Two representations of the q-Laplace transform are implemented:
//!
//! * the moment kernel on `Z_{>0} x C_0`, built from `f(z; u, T)` in the
//!   variable `z`. Its value does not depend on the second index, so the
//!   determinant is reduced to `L^2(C_0)` with the index summed out;
//! * the Mellin-Barnes kernel `K_zeta`, built from the rescaled `g(w, t)` in
//!   the variable `w = z / (1 - tau)` with an integral over an `s`-contour
//!   `C_w` that depends on the row point.
//!
//! Both take the wall-clock time `T` through [`QLaplace`]; the rescaled
//! clock `t = gamma T` is derived from it. Contour weights include the
//! `1/(2 pi i)` prefactor, and all determinants are reported with the
//! change produced by one doubling of the node count.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genfun::{sample_heights, McOptions};
use crate::model::ModelParams;
use crate::quad::{gauss_legendre, gauss_legendre_on, graded_panels, Contour};
use crate::specfun::{airy_pair, e_tau, gamma_product, q_pochhammer_inf};
use crate::stats::Estimate;

/// Gauss-Legendre nodes per panel on the `s`-contour.
const PANEL_NODES: usize = 16;
/// Scale of the half-line map used for the Airy-type kernels.
const AIRY_MAP_SCALE: f64 = 4.0;

/// A determinant together with the change under one node doubling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetEstimate {
    pub value: C64,
    pub error: f64,
    pub nodes: usize,
}

impl DetEstimate {
    /// Imaginary part relative to `max(1, |value|)`.
    pub fn imag_residual(&self) -> f64 {
        self.value.im.abs() / self.value.norm().max(1.0)
    }
}

/// Stopping rule for node doubling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Refinement {
    pub tol: f64,
    pub max_doublings: usize,
}

impl Default for Refinement {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_doublings: 3,
        }
    }
}

type RowFn<'a> = dyn Fn(C64, &[C64], &mut [C64]) -> Result<()> + Sync + 'a;

/// A kernel on a contour product. Evaluation is by rows so that work which
/// only depends on the row point can be shared across the columns.
pub struct KernelEval<'a> {
    pub name: &'static str,
    /// Parameter echo, for reports.
    pub params: Vec<(&'static str, f64)>,
    row: Box<RowFn<'a>>,
}

impl<'a> KernelEval<'a> {
    pub fn pointwise<F>(name: &'static str, params: Vec<(&'static str, f64)>, f: F) -> Self
    where
        F: Fn(C64, C64) -> C64 + Sync + 'a,
    {
        let row = move |x: C64, ys: &[C64], out: &mut [C64]| {
            for (o, y) in out.iter_mut().zip(ys) {
                *o = f(x, *y);
            }
            Ok(())
        };
        Self {
            name,
            params,
            row: Box::new(row),
        }
    }

    pub fn by_rows<F>(name: &'static str, params: Vec<(&'static str, f64)>, f: F) -> Self
    where
        F: Fn(C64, &[C64], &mut [C64]) -> Result<()> + Sync + 'a,
    {
        Self {
            name,
            params,
            row: Box::new(f),
        }
    }

    pub fn eval(&self, x: C64, y: C64) -> Result<C64> {
        let mut out = [C64::new(0.0, 0.0)];
        (self.row)(x, &[y], &mut out)?;
        Ok(out[0])
    }

    /// Kernel values at all node pairs, row-major.
    pub fn matrix(&self, nodes: &[C64]) -> Result<Vec<C64>> {
        let n = nodes.len();
        let mut m = vec![C64::new(0.0, 0.0); n * n];
        m.par_chunks_mut(n.max(1))
            .zip(nodes.par_iter())
            .try_for_each(|(row, x)| (self.row)(*x, nodes, row))?;
        if let Some(bad) = m
            .iter()
            .position(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::Accuracy(format!(
                "{} is not finite at node pair {:?}",
                self.name,
                (bad / n, bad % n)
            )));
        }
        Ok(m)
    }
}

/// `det(I + W^{1/2} K W^{1/2})` for a matrix of kernel values and weights.
fn det_weighted(mut m: Vec<C64>, weights: &[C64]) -> C64 {
    let n = weights.len();
    let roots: Vec<C64> = weights.iter().map(|w| w.sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            let v = &mut m[i * n + j];
            *v *= roots[i] * roots[j];
            if i == j {
                *v += 1.0;
            }
        }
    }
    crate::linalg::det_complex(n, &m)
}

/// Nyström approximation of `det(1 + K)` on one discretized contour.
pub fn nystrom_det(kernel: &KernelEval, rule: &Contour) -> Result<C64> {
    Ok(det_weighted(kernel.matrix(&rule.nodes)?, &rule.weights))
}

/// `det(1 + K)` with node doubling: `rule(level)` must double the
/// resolution from one level to the next. The reported error is the change
/// produced by the last doubling.
pub fn fredholm_det<R>(kernel: &KernelEval, rule: R, refine: &Refinement) -> Result<DetEstimate>
where
    R: Fn(usize) -> Contour,
{
    let mut coarse = rule(0);
    let mut previous = nystrom_det(kernel, &coarse)?;
    let mut change = f64::INFINITY;
    for level in 1..=refine.max_doublings.max(1) {
        let fine = rule(level);
        let value = nystrom_det(kernel, &fine)?;
        change = (value - previous).norm();
        if change <= refine.tol {
            return Ok(DetEstimate {
                value,
                error: change,
                nodes: fine.len(),
            });
        }
        previous = value;
        coarse = fine;
    }
    Err(Error::Accuracy(format!(
        "{}: determinant changed by {change:e} at {} nodes (tolerance {:e})",
        kernel.name,
        coarse.len(),
        refine.tol
    )))
}

/// Nyström approximation of `det(1 + K)` on `{1..=n_max} x contour` for a
/// kernel depending on both indices.
pub fn fredholm_det_indexed<F>(kernel: F, n_max: usize, rule: &Contour) -> Result<C64>
where
    F: Fn(usize, C64, usize, C64) -> C64 + Sync,
{
    let m = rule.len();
    let size = n_max * m;
    let mut entries = vec![C64::new(0.0, 0.0); size * size];
    entries
        .par_chunks_mut(size.max(1))
        .enumerate()
        .for_each(|(row, out)| {
            let (n1, i) = (row / m + 1, row % m);
            for (col, o) in out.iter_mut().enumerate() {
                let (n2, j) = (col / m + 1, col % m);
                *o = kernel(n1, rule.nodes[i], n2, rule.nodes[j]);
            }
        });
    if entries
        .iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite())
    {
        return Err(Error::Accuracy(
            "indexed kernel is not finite on the grid".into(),
        ));
    }
    let weights: Vec<C64> = (0..n_max)
        .flat_map(|_| rule.weights.iter().copied())
        .collect();
    Ok(det_weighted(entries, &weights))
}

/// Parameters of the q-Laplace transform `E e_tau(zeta tau^{N(u, T)})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLaplace {
    pub zeta: C64,
    pub u: f64,
    /// Wall-clock time `T` of the particle system.
    pub wall_time: f64,
    pub params: ModelParams,
}

impl QLaplace {
    pub fn new(zeta: C64, u: f64, wall_time: f64, params: ModelParams) -> Result<Self> {
        params.require_analytic()?;
        if !(wall_time > 0.0) || !wall_time.is_finite() {
            return Err(Error::Domain(format!(
                "wall time {wall_time} must be positive"
            )));
        }
        if !u.is_finite() || !zeta.re.is_finite() || !zeta.im.is_finite() {
            return Err(Error::InvalidInput("u and zeta must be finite".into()));
        }
        Ok(Self {
            zeta,
            u,
            wall_time,
            params,
        })
    }

    /// Same transform specified through the rescaled clock `t = gamma T`.
    pub fn from_rescaled_time(
        zeta: C64,
        u: f64,
        rescaled_time: f64,
        params: ModelParams,
    ) -> Result<Self> {
        let gamma = params.gamma();
        if !(gamma > 0.0) {
            return Err(Error::Domain("the rescaled clock needs q > p".into()));
        }
        Self::new(zeta, u, rescaled_time / gamma, params)
    }

    pub fn tau(&self) -> f64 {
        self.params.tau()
    }

    /// `t = gamma T`, the time argument of the rescaled `g`.
    pub fn rescaled_time(&self) -> f64 {
        self.wall_time * self.params.gamma()
    }

    fn echo(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("zeta_re", self.zeta.re),
            ("zeta_im", self.zeta.im),
            ("u", self.u),
            ("wall_time", self.wall_time),
            ("tau", self.tau()),
        ]
    }
}

/// `f(z; u, T) = (1 - tau) / (z + 1 - tau) e^{u z + T z^2 / 2}`.
pub fn kernel_f(z: C64, u: f64, wall_time: f64, tau: f64) -> Result<C64> {
    let shifted = z + (1.0 - tau);
    if shifted.norm() <= 1e-14 * (1.0 - tau) {
        return Err(Error::Pole(format!("f has a pole at z = {}", -(1.0 - tau))));
    }
    Ok((1.0 - tau) / shifted * (z * u + z * z * (0.5 * wall_time)).exp())
}

/// `g(z, T)` with `f(z) = g(z) / g(tau z)`:
/// `exp(u z / (1 - tau) + gamma T z^2 / (2 (1 - tau)^2)) / (-z / (1 - tau); tau)_inf`.
pub fn kernel_g(z: C64, u: f64, wall_time: f64, params: &ModelParams) -> Result<C64> {
    let tau = params.require_analytic()?;
    let w = z / (1.0 - tau);
    rescaled_g(w, u, params.gamma() * wall_time, tau)
}

/// `g~(w, t) = e^{u w + t w^2 / 2} / (-w; tau)_inf` in the rescaled clock.
pub fn rescaled_g(w: C64, u: f64, rescaled_time: f64, tau: f64) -> Result<C64> {
    let den = q_pochhammer_inf(-w, tau)?;
    if den.norm() == 0.0 {
        return Err(Error::Pole(format!("g has a pole at w = {w}")));
    }
    Ok((w * u + w * w * (0.5 * rescaled_time)).exp() / den)
}

/// Moment kernel `zeta^{n1} prod_{k < n1} f(tau^k w1) / (tau^{n1} w1 - w2)`.
/// It does not depend on `n2`.
pub fn kernel_k(n1: usize, w1: C64, n2: usize, w2: C64, setup: &QLaplace) -> Result<C64> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidInput("kernel indices start at 1".into()));
    }
    let tau = setup.tau();
    let mut prod = C64::new(1.0, 0.0);
    let mut point = w1;
    for _ in 0..n1 {
        prod *= setup.zeta * kernel_f(point, setup.u, setup.wall_time, tau)?;
        point *= tau;
    }
    let den = point - w2;
    if den.norm() == 0.0 {
        return Err(Error::Pole("moment kernel denominator vanishes".into()));
    }
    Ok(prod / den)
}

/// `a_n = zeta^n prod_{k < n} f(tau^k z)` for `n = 1..`, truncated once the
/// terms are negligible against the largest one.
fn moment_coefficients(z: C64, setup: &QLaplace) -> Result<Vec<C64>> {
    let tau = setup.tau();
    let mut out = Vec::new();
    let mut term = C64::new(1.0, 0.0);
    let mut point = z;
    let mut peak = 0.0f64;
    let cut = 1e-18 * (1.0 - setup.zeta.norm());
    for _ in 0..100_000 {
        term *= setup.zeta * kernel_f(point, setup.u, setup.wall_time, tau)?;
        point *= tau;
        out.push(term);
        let size = term.norm();
        peak = peak.max(size);
        let settled = point.norm() <= 0.5 * (1.0 - tau);
        if size == 0.0 || (settled && size <= cut * peak) {
            return Ok(out);
        }
    }
    Err(Error::Accuracy(
        "index truncation of the moment kernel did not converge".into(),
    ))
}

/// The moment kernel with the index summed out:
/// `sum_n zeta^n prod_{k < n} f(tau^k z) / (tau^n z - z')`.
pub fn moment_kernel(setup: &QLaplace) -> Result<KernelEval<'static>> {
    if setup.zeta.norm() >= 1.0 {
        return Err(Error::Domain(format!(
            "|zeta| = {} must be below 1 for the moment kernel",
            setup.zeta.norm()
        )));
    }
    let s = *setup;
    let tau = s.tau();
    Ok(KernelEval::by_rows(
        "moment kernel",
        s.echo(),
        move |z, cols, out| {
            let coeffs = moment_coefficients(z, &s)?;
            let shifted: Vec<C64> = (1..=coeffs.len()).map(|n| z * tau.powi(n as i32)).collect();
            for (o, zp) in out.iter_mut().zip(cols) {
                *o = coeffs.iter().zip(&shifted).map(|(a, p)| a / (p - zp)).sum();
            }
            Ok(())
        },
    ))
}

/// Upward line `{-delta + i phi}` with a trapezoid rule on
/// `|phi| <= phi_max`. Level `k` refines the spacing by `2^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourC0 {
    pub delta: f64,
    pub phi_max: f64,
    /// Node count at level 0 (odd).
    pub n_nodes: usize,
}

impl ContourC0 {
    pub fn new(delta: f64, phi_max: f64, n_nodes: usize, tau: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0 - tau) {
            return Err(Error::Contour(format!(
                "delta = {delta} must lie in (0, {})",
                1.0 - tau
            )));
        }
        if !(phi_max > 0.0) || n_nodes < 3 {
            return Err(Error::Contour(
                "need phi_max > 0 and at least three nodes".into(),
            ));
        }
        Ok(Self {
            delta,
            phi_max,
            n_nodes: n_nodes | 1,
        })
    }

    /// Default line for the moment kernel: `delta` balances the pole of `f`
    /// at `-(1 - tau)` against the poles at `tau^n z`.
    pub fn for_moment_kernel(setup: &QLaplace, tol: f64) -> Result<Self> {
        let tau = setup.tau();
        let delta = (1.0 - tau) / (2.0 - tau);
        let strip = (1.0 - tau) * delta;
        let t = setup.wall_time;
        Self::from_decay(
            delta,
            strip,
            t,
            setup.u.abs() * delta + 0.5 * t * delta * delta,
            tol,
            tau,
        )
    }

    /// Default line for the Mellin-Barnes kernel in the variable `w`.
    pub fn for_mellin_barnes(setup: &QLaplace, tol: f64) -> Result<Self> {
        let tau = setup.tau();
        let delta = 0.8 * (1.0 - tau);
        let strip = (delta * (1.0 - tau)).min(1.0 - delta);
        let t = setup.rescaled_time() * (1.0 - tau * tau);
        Self::from_decay(
            delta,
            strip,
            t,
            setup.u.abs() * delta + 0.5 * t * delta * delta,
            tol,
            tau,
        )
    }

    fn from_decay(
        delta: f64,
        strip: f64,
        rate: f64,
        offset: f64,
        tol: f64,
        tau: f64,
    ) -> Result<Self> {
        let digits = (1.0 / tol).ln();
        let phi_max = (2.0 * (digits + 5.0 + offset) / rate).sqrt();
        let spacing = 2.0 * PI * strip / (digits + 3.0);
        let n_nodes = 2 * (phi_max / spacing).ceil() as usize + 1;
        Self::new(delta, phi_max, n_nodes, tau)
    }

    pub fn point(&self, phi: f64) -> C64 {
        C64::new(-self.delta, phi)
    }

    /// Trapezoid rule at refinement `level`; weights are `h / (2 pi)`.
    pub fn rule(&self, level: usize) -> Contour {
        let count = (self.n_nodes - 1) * (1 << level) + 1;
        let h = 2.0 * self.phi_max / (count - 1) as f64;
        let nodes = (0..count)
            .map(|k| self.point(-self.phi_max + k as f64 * h))
            .collect();
        Contour {
            nodes,
            weights: vec![C64::new(h / (2.0 * PI), 0.0); count],
        }
    }
}

/// `det(1 + K)` for the moment kernel on `Z_{>0} x C_0` with `f(z; u, T)`.
pub fn det_moment_kernel(
    setup: &QLaplace,
    c0: &ContourC0,
    refine: &Refinement,
) -> Result<DetEstimate> {
    let kernel = moment_kernel(setup)?;
    fredholm_det(&kernel, |level| c0.rule(level), refine)
}

/// The `s`-contour for one row point `w = -delta + i phi`: the lines
/// `Re s = R` for `|Im s| >= d`, joined through `1/2 +- i d`. `R` is a
/// half-integer with `tau^R |w| <= delta / 2`, and `d` is small enough that
/// `tau^s w` stays at distance `separation` from the line `Re = -delta`.
#[derive(Debug, Clone)]
pub struct ContourCw {
    pub anchor: C64,
    pub d: f64,
    pub right: f64,
    pub separation: f64,
    rule: Contour,
}

impl ContourCw {
    pub fn build(anchor: C64, delta: f64, setup: &QLaplace) -> Result<Self> {
        let tau = setup.tau();
        let ln_inv = -tau.ln();
        let target = -setup.zeta;
        if target.norm() == 0.0 {
            return Err(Error::Domain(
                "zeta = 0 has no Mellin-Barnes representation".into(),
            ));
        }
        let theta = target.arg();
        if PI - theta.abs() < 0.05 {
            return Err(Error::Domain(format!(
                "zeta = {} is too close to the positive real axis",
                setup.zeta
            )));
        }
        let radius = anchor.norm();
        let r_min = (2.0 * radius / delta).ln() / ln_inv;
        let right = if r_min <= 0.5 {
            0.5
        } else {
            (r_min - 0.5).ceil() + 0.5
        };
        let root = tau.sqrt();
        let separation = 0.5 * delta * (1.0 - root);
        let d = (delta * (1.0 - root) / (2.0 * root * radius * ln_inv)).min(0.5);
        let r_max = d + (40.0 + (2.0 * PI / separation).ln().max(0.0)) / (PI - theta.abs());
        let vertical_panel = (1.0 / ln_inv).min(1.0);

        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut push = |s: C64, w: C64| {
            nodes.push(s);
            weights.push(w);
        };
        let i = C64::i();
        if right == 0.5 {
            for (r, v) in uniform_panels(-r_max, r_max, vertical_panel) {
                push(C64::new(0.5, r), i * v);
            }
        } else {
            for (r, v) in uniform_panels(d, r_max, vertical_panel) {
                push(C64::new(right, r), i * v);
                push(C64::new(right, -r), i * v);
            }
            let (sx, sw) = gauss_legendre_on(PANEL_NODES, -d, d);
            for (y, v) in sx.iter().zip(&sw) {
                push(C64::new(0.5, *y), i * v);
            }
            // Horizontal pieces, graded towards each integer they pass.
            let max_len = |x: f64| (2.0 * separation / (ln_inv * tau.powf(x) * radius)).min(0.5);
            let mut integer = 1.0;
            while integer < right {
                for side in [-1.0, 1.0] {
                    let (rho, v) = graded_panels(
                        d.min(0.5),
                        0.5,
                        2.0,
                        |r| max_len(integer + side * r),
                        PANEL_NODES,
                    );
                    for (r, v) in rho.iter().zip(&v) {
                        let x = integer + side * r;
                        push(C64::new(x, d), C64::new(*v, 0.0));
                        push(C64::new(x, -d), C64::new(-*v, 0.0));
                    }
                }
                integer += 1.0;
            }
        }
        let scale = C64::new(0.0, -1.0 / (2.0 * PI));
        let weights = weights.into_iter().map(|w| w * scale).collect();
        Ok(Self {
            anchor,
            d,
            right,
            separation,
            rule: Contour { nodes, weights },
        })
    }

    pub fn nodes(&self) -> &[C64] {
        &self.rule.nodes
    }

    pub fn len(&self) -> usize {
        self.rule.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rule.is_empty()
    }

    /// Smallest distance between `tau^s w` over the contour nodes and `points`.
    pub fn distance_to(&self, points: &[C64], tau: f64) -> f64 {
        let ln_tau = tau.ln();
        let mut best = f64::INFINITY;
        for s in &self.rule.nodes {
            let z = (s * ln_tau).exp() * self.anchor;
            for p in points {
                best = best.min((z - p).norm());
            }
        }
        best
    }
}

/// Gauss-Legendre panels of length at most `max_len` covering `[lo, hi]`.
fn uniform_panels(lo: f64, hi: f64, max_len: f64) -> Vec<(f64, f64)> {
    let count = ((hi - lo) / max_len).ceil().max(1.0) as usize;
    let len = (hi - lo) / count as f64;
    (0..count)
        .flat_map(|p| {
            let (x, w) =
                gauss_legendre_on(PANEL_NODES, lo + p as f64 * len, lo + (p + 1) as f64 * len);
            x.into_iter().zip(w)
        })
        .collect()
}

/// Row data for `K_zeta(w, .)`: the points `tau^s w` and the weighted
/// factors `Gamma(-s) Gamma(1 + s) (-zeta)^s g~(w) / g~(tau^s w)`.
fn mellin_barnes_row(cw: &ContourCw, setup: &QLaplace) -> Result<(Vec<C64>, Vec<C64>)> {
    let tau = setup.tau();
    let ln_tau = tau.ln();
    let log_target = (-setup.zeta).ln();
    let w = cw.anchor;
    let t = setup.rescaled_time();
    let base = q_pochhammer_inf(-w, tau)?;
    let mut points = Vec::with_capacity(cw.len());
    let mut factors = Vec::with_capacity(cw.len());
    for (s, weight) in cw.rule.nodes.iter().zip(&cw.rule.weights) {
        let shift = (s * ln_tau).exp();
        let z = shift * w;
        let ratio = (w * setup.u * (1.0 - shift) + w * w * (0.5 * t) * (1.0 - shift * shift)).exp()
            * q_pochhammer_inf(-z, tau)?
            / base;
        factors.push(weight * gamma_product(*s)? * (s * log_target).exp() * ratio);
        points.push(z);
    }
    Ok((points, factors))
}

/// `K_zeta(w, w')` by quadrature over `C_w`, which must be built for `w`.
pub fn kernel_k_zeta(w: C64, w_prime: C64, setup: &QLaplace, cw: &ContourCw) -> Result<C64> {
    if (cw.anchor - w).norm() > 1e-14 * (1.0 + w.norm()) {
        return Err(Error::Contour(format!(
            "contour built for {} used at w = {w}",
            cw.anchor
        )));
    }
    let (points, factors) = mellin_barnes_row(cw, setup)?;
    Ok(points
        .iter()
        .zip(&factors)
        .map(|(z, c)| c / (z - w_prime))
        .sum())
}

/// The Mellin-Barnes kernel on the line `Re w = -delta`. Every row builds
/// its own `C_w` and checks that `tau^s w` keeps its separation from all
/// column points.
pub fn mellin_barnes_kernel(setup: &QLaplace, delta: f64) -> Result<KernelEval<'static>> {
    let tau = setup.tau();
    if !(delta > 0.0 && delta < 1.0 - tau) {
        return Err(Error::Contour(format!(
            "delta = {delta} must lie in (0, {})",
            1.0 - tau
        )));
    }
    let s = *setup;
    let mut echo = s.echo();
    echo.push(("delta", delta));
    Ok(KernelEval::by_rows(
        "Mellin-Barnes kernel",
        echo,
        move |w, cols, out| {
            let cw = ContourCw::build(w, delta, &s)?;
            let (points, factors) = mellin_barnes_row(&cw, &s)?;
            for (o, wp) in out.iter_mut().zip(cols) {
                let mut acc = C64::new(0.0, 0.0);
                let mut nearest = f64::INFINITY;
                for (z, c) in points.iter().zip(&factors) {
                    let gap = z - wp;
                    nearest = nearest.min(gap.norm());
                    acc += c / gap;
                }
                if nearest < cw.separation * (1.0 - 1e-9) {
                    return Err(Error::Contour(format!(
                        "tau^s w comes within {nearest:e} of {wp} (required {:e})",
                        cw.separation
                    )));
                }
                *o = acc;
            }
            Ok(())
        },
    ))
}

/// `det(1 + K_zeta)` on the line `Re w = -c0.delta` in the variable `w`.
pub fn det_mellin_barnes(
    setup: &QLaplace,
    c0: &ContourC0,
    refine: &Refinement,
) -> Result<DetEstimate> {
    let kernel = mellin_barnes_kernel(setup, c0.delta)?;
    fredholm_det(&kernel, |level| c0.rule(level), refine)
}

/// Monte Carlo estimates of `E e_tau(zeta tau^{N(u, T)})` for several real
/// `zeta < 1`, all from the same height samples.
pub fn mc_q_laplace(
    zetas: &[f64],
    u: f64,
    wall_time: f64,
    params: &ModelParams,
    opts: &McOptions,
) -> Result<Vec<Estimate>> {
    let tau = params.require_analytic()?;
    if let Some(z) = zetas.iter().find(|z| !(**z < 1.0)) {
        return Err(Error::Domain(format!("zeta = {z} must be below 1")));
    }
    let heights = sample_heights(u, wall_time, params, opts)?;
    zetas
        .iter()
        .map(|&zeta| {
            let values = heights
                .iter()
                .map(|&n| e_tau(C64::new(zeta * tau.powi(n as i32), 0.0), tau).map(|v| v.re))
                .collect::<Result<Vec<f64>>>()?;
            Ok(Estimate::from_samples(&values))
        })
        .collect()
}

/// `sum_k zeta^k m_k / (tau; tau)_k` for given moments `m_k = E tau^{k N}`,
/// `k = 0, 1, ...`.
pub fn q_binomial_series(zeta: C64, moments: &[f64], tau: f64) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    let mut power = C64::new(1.0, 0.0);
    let mut pochhammer = 1.0;
    for (k, m) in moments.iter().enumerate() {
        if k > 0 {
            power *= zeta;
            pochhammer *= 1.0 - tau.powi(k as i32);
        }
        total += power * *m / pochhammer;
    }
    total
}

/// Contours of the cubic kernel: `w` runs on two rays from `1` at angles
/// `+-pi/3`, `z` on two rays from `0` at angles `+-2 pi/3`, both traversed
/// with increasing imaginary part. Reversing the `z` rays flips the sign of
/// the kernel, which turns `det(1 + K_r)` into `det(1 - K_r)`. Each ray is
/// cut at `radius` and carries `nodes_per_ray` Gauss-Legendre nodes at
/// level 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayContours {
    pub radius: f64,
    pub nodes_per_ray: usize,
}

impl Default for RayContours {
    fn default() -> Self {
        Self {
            radius: 7.0,
            nodes_per_ray: 40,
        }
    }
}

impl RayContours {
    fn pair(origin: C64, angle: f64, upward: bool, radius: f64, count: usize) -> Contour {
        debug_assert!(angle > 0.0 && angle < PI);
        let (rho, v) = gauss_legendre_on(count, 0.0, radius);
        let scale = C64::new(0.0, -1.0 / (2.0 * PI));
        let mut nodes = Vec::with_capacity(2 * count);
        let mut weights = Vec::with_capacity(2 * count);
        // The ray pointing up is traversed outwards when `upward`, the one
        // pointing down inwards; the reverse otherwise.
        for sign in [1.0, -1.0] {
            let dir = C64::from_polar(1.0, sign * angle);
            let outward = (sign > 0.0) == upward;
            for (r, v) in rho.iter().zip(&v) {
                nodes.push(origin + dir * *r);
                weights.push(scale * dir * *v * if outward { 1.0 } else { -1.0 });
            }
        }
        Contour { nodes, weights }
    }

    pub fn w_rule(&self, level: usize) -> Contour {
        Self::pair(
            C64::new(1.0, 0.0),
            PI / 3.0,
            true,
            self.radius,
            self.nodes_per_ray << level,
        )
    }

    pub fn z_rule(&self, level: usize) -> Contour {
        Self::pair(
            C64::new(0.0, 0.0),
            2.0 * PI / 3.0,
            true,
            self.radius,
            self.nodes_per_ray << level,
        )
    }
}

/// `(a/2)^{-2/3} r`, the argument at which the cubic kernel meets the
/// Airy kernel.
pub fn airy_argument(a: f64, r: f64) -> f64 {
    (0.5 * a).powf(-2.0 / 3.0) * r
}

fn check_slope(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("a = {a} must be positive")))
    }
}

/// The cubic kernel with its `z`-integral on `rays.z_rule(level)`.
pub fn cubic_kernel(
    a: f64,
    r: f64,
    rays: &RayContours,
    level: usize,
) -> Result<KernelEval<'static>> {
    check_slope(a)?;
    let sigma = airy_argument(a, r);
    let z_rule = rays.z_rule(level);
    let z_factor: Vec<C64> = z_rule
        .nodes
        .iter()
        .zip(&z_rule.weights)
        .map(|(z, v)| v * (-z * z * z / 3.0 + z * sigma).exp())
        .collect();
    Ok(KernelEval::by_rows(
        "cubic kernel",
        vec![("a", a), ("r", r)],
        move |w, cols, out| {
            let lead = (w * w * w / 3.0 - w * sigma).exp();
            let row: Vec<C64> = z_rule
                .nodes
                .iter()
                .zip(&z_factor)
                .map(|(z, c)| c / (w - z))
                .collect();
            for (o, wp) in out.iter_mut().zip(cols) {
                *o = lead
                    * z_rule
                        .nodes
                        .iter()
                        .zip(&row)
                        .map(|(z, c)| c / (z - wp))
                        .sum::<C64>();
            }
            Ok(())
        },
    ))
}

/// `K_r(w, w')` evaluated with the default ray contours.
pub fn kernel_kr(w: C64, w_prime: C64, a: f64, r: f64) -> Result<C64> {
    cubic_kernel(a, r, &RayContours::default(), 1)?.eval(w, w_prime)
}

/// `det(1 + K_r)` on the `w` rays; both rays are refined together.
pub fn det_cubic_kernel(
    a: f64,
    r: f64,
    rays: &RayContours,
    refine: &Refinement,
) -> Result<DetEstimate> {
    let mut previous: Option<C64> = None;
    for level in 0..=refine.max_doublings.max(1) {
        let kernel = cubic_kernel(a, r, rays, level)?;
        let rule = rays.w_rule(level);
        let value = nystrom_det(&kernel, &rule)?;
        if let Some(prev) = previous {
            let change = (value - prev).norm();
            if change <= refine.tol {
                return Ok(DetEstimate {
                    value,
                    error: change,
                    nodes: rule.len(),
                });
            }
        }
        previous = Some(value);
    }
    Err(Error::Accuracy(format!(
        "cubic kernel determinant did not settle at r = {r}"
    )))
}

/// Airy kernel `(Ai(x) Ai'(y) - Ai'(x) Ai(y)) / (x - y)`.
pub fn airy_kernel(x: f64, y: f64) -> f64 {
    let (ax, dx) = airy_pair(x);
    if x == y {
        return dx * dx - x * ax * ax;
    }
    let (ay, dy) = airy_pair(y);
    (ax * dy - dx * ay) / (x - y)
}

/// Gauss-Legendre rule on `[s, inf)` through `x = s + L (1 + xi) / (1 - xi)`.
pub fn half_line_rule(s: f64, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let (xi, v) = gauss_legendre(nodes);
    let l = AIRY_MAP_SCALE;
    xi.iter()
        .zip(&v)
        .map(|(x, v)| {
            (
                s + l * (1.0 + x) / (1.0 - x),
                v * 2.0 * l / ((1.0 - x) * (1.0 - x)),
            )
        })
        .unzip()
}

/// `det(1 - K)` on `L^2(s, inf)` for a real symmetric kernel.
fn half_line_det<K: Fn(f64, f64) -> f64>(s: f64, nodes: usize, kernel: K) -> f64 {
    let (x, w) = half_line_rule(s, nodes);
    let n = x.len();
    let roots: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            m[i * n + j] = delta - roots[i] * kernel(x[i], x[j]) * roots[j];
        }
    }
    crate::linalg::det_real(n, &m)
}

fn refined_half_line<K: Fn(f64, f64) -> f64 + Copy>(s: f64, kernel: K, name: &str) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::InvalidInput(format!("argument {s} must be finite")));
    }
    let mut nodes = 24;
    let mut previous = half_line_det(s, nodes, kernel);
    for _ in 0..4 {
        nodes *= 2;
        let value = half_line_det(s, nodes, kernel);
        if (value - previous).abs() <= 1e-12 {
            return Ok(value.clamp(0.0, 1.0));
        }
        previous = value;
    }
    Err(Error::Accuracy(format!("{name} at {s} did not settle")))
}

/// `F_GUE(s) = det(1 - A)` on `L^2(s, inf)` with the Airy kernel.
pub fn tw_gue_cdf(s: f64) -> Result<f64> {
    if s > 16.0 {
        return Ok(1.0);
    }
    refined_half_line(s, airy_kernel, "F_GUE")
}

/// `det(1 - P_s B P_s)` with `B(x, y) = Ai(x + y)`.
pub fn tw_goe_cdf(s: f64) -> Result<f64> {
    if s > 16.0 {
        return Ok(1.0);
    }
    refined_half_line(s, |x, y| airy_pair(x + y).0, "F_GOE")
}

/// `tw_gue_cdf` at a fixed node count, without refinement.
pub fn tw_gue_cdf_with_nodes(s: f64, nodes: usize) -> f64 {
    half_line_det(s, nodes, airy_kernel)
}

/// Mean of a distribution supported in `[lo, hi]` up to negligible tails,
/// as `int_0^hi (1 - F) - int_lo^0 F`.
fn mean_of<F: Fn(f64) -> Result<f64>>(cdf: F, lo: f64, hi: f64) -> Result<f64> {
    let mut total = 0.0;
    for (a, b, upper) in [(lo, 0.0, false), (0.0, hi, true)] {
        let panels = ((b - a) / 0.5).ceil() as usize;
        let len = (b - a) / panels as f64;
        for p in 0..panels {
            let (x, w) = gauss_legendre_on(12, a + p as f64 * len, a + (p + 1) as f64 * len);
            for (x, w) in x.iter().zip(&w) {
                let f = cdf(*x)?;
                total += w * if upper { 1.0 - f } else { -f };
            }
        }
    }
    Ok(total)
}

/// Mean of the GUE Tracy-Widom distribution.
pub fn tw_gue_mean() -> Result<f64> {
    mean_of(tw_gue_cdf, -9.0, 7.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfun::{moment_tau_n, NestedContours};

    fn half() -> ModelParams {
        ModelParams::from_tau(0.5).unwrap()
    }

    fn setup(zeta: f64, u: f64, wall_time: f64) -> QLaplace {
        QLaplace::new(C64::new(zeta, 0.0), u, wall_time, half()).unwrap()
    }

    #[test]
    fn zero_kernel_has_unit_determinant() {
        let kernel = KernelEval::pointwise("zero", vec![], |_, _| C64::new(0.0, 0.0));
        let c0 = ContourC0::new(0.2, 4.0, 41, 0.5).unwrap();
        let d = fredholm_det(&kernel, |l| c0.rule(l), &Refinement::default()).unwrap();
        assert_eq!(d.value, C64::new(1.0, 0.0));
    }

    #[test]
    fn rank_one_kernel_matches_closed_form() {
        // phi(x) psi(y) with phi = e^{x^2}, psi = e^{x^2 / 2 + x} on Re x = -0.2;
        // det = 1 + (2 pi i)^{-1} int e^{3 x^2 / 2 + x} dx.
        let phi = |x: C64| (x * x).exp();
        let psi = |x: C64| (x * x * 0.5 + x).exp();
        let kernel = KernelEval::pointwise("rank one", vec![], move |x, y| phi(x) * psi(y));
        let c0 = ContourC0::new(0.2, 8.0, 81, 0.5).unwrap();
        let d = fredholm_det(
            &kernel,
            |l| c0.rule(l),
            &Refinement {
                tol: 1e-12,
                max_doublings: 4,
            },
        )
        .unwrap();
        let a = 1.5;
        let want = 1.0 + gaussian_line_integral(a, 1.0);
        assert!(
            (d.value.re - want).abs() < 1e-10 * want.abs(),
            "{} vs {want}",
            d.value
        );
        assert!(d.value.im.abs() < 1e-12);
    }

    /// `(2 pi i)^{-1} int_{Re x = c} e^{a x^2 + b x} dx = e^{-b^2 / (4 a)} / sqrt(4 pi a)`
    /// for `a > 0`, independent of `c`.
    fn gaussian_line_integral(a: f64, b: f64) -> f64 {
        (-b * b / (4.0 * a)).exp() / (4.0 * PI * a).sqrt()
    }

    #[test]
    fn f_and_g_are_consistent() {
        let p = half();
        let (u, t) = (0.7, 1.3);
        assert!((kernel_f(C64::new(0.0, 0.0), u, t, 0.5).unwrap() - 1.0).norm() < 1e-15);
        let z = C64::new(-0.2, 0.9);
        let plain = kernel_f(z, 0.0, 0.0, 0.5).unwrap();
        assert!((plain - 0.5 / (z + 0.5)).norm() < 1e-15);
        assert!(matches!(
            kernel_f(C64::new(-0.5, 0.0), u, t, 0.5),
            Err(Error::Pole(_))
        ));
        let mut prod = C64::new(1.0, 0.0);
        for k in 0..3 {
            prod *= kernel_f(z * 0.5f64.powi(k), u, t, 0.5).unwrap();
        }
        let ratio = kernel_g(z, u, t, &p).unwrap() / kernel_g(z * 0.125, u, t, &p).unwrap();
        assert!(
            (prod - ratio).norm() < 1e-13 * prod.norm(),
            "{prod} vs {ratio}"
        );
    }

    #[test]
    fn moment_kernel_denominator_stays_away_from_zero() {
        let s = setup(-0.1, 1.0, 1.0);
        let c0 = ContourC0::for_moment_kernel(&s, 1e-8).unwrap();
        let nodes = c0.rule(0).nodes;
        let bound = (1.0 - s.tau()) * c0.delta;
        for n in 1..=12 {
            let scale = s.tau().powi(n);
            for w1 in &nodes {
                for w2 in &nodes {
                    assert!((w1 * scale - w2).norm() >= bound * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn zero_zeta_gives_zero_kernel() {
        let s = setup(0.0, 1.0, 1.0);
        let k = moment_kernel(&s).unwrap();
        assert_eq!(
            k.eval(C64::new(-0.2, 0.3), C64::new(-0.2, -1.0)).unwrap(),
            C64::new(0.0, 0.0)
        );
        let c0 = ContourC0::for_moment_kernel(&s, 1e-8).unwrap();
        let d = det_moment_kernel(&s, &c0, &Refinement::default()).unwrap();
        assert_eq!(d.value, C64::new(1.0, 0.0));
    }

    #[test]
    fn index_reduction_matches_product_domain() {
        let s = setup(-0.3, 0.5, 1.0);
        let c0 = ContourC0::new(1.0 / 3.0, 5.0, 61, 0.5).unwrap();
        let rule = c0.rule(0);
        let n_max = 40;
        let full = fredholm_det_indexed(
            |n1, w1, n2, w2| kernel_k(n1, w1, n2, w2, &s).unwrap(),
            n_max,
            &rule,
        )
        .unwrap();
        let reduced = nystrom_det(&moment_kernel(&s).unwrap(), &rule).unwrap();
        assert!((full - reduced).norm() < 1e-12, "{full} vs {reduced}");
    }

    /// The determinant expands as `sum_k zeta^k E tau^{k N} / (tau; tau)_k`;
    /// at small `zeta` three moments from the contour formula suffice.
    #[test]
    fn small_zeta_expansion_matches_moments() {
        let p = half();
        let (u, t) = (1.0, 1.0);
        let moments: Vec<f64> = (0..=3)
            .map(|k| {
                if k == 0 {
                    1.0
                } else {
                    let c = NestedContours::default_for(k, &p).unwrap().with_tol(1e-11);
                    moment_tau_n(u, t, k, &p, &c).unwrap().value
                }
            })
            .collect();
        for zeta in [-0.01, 0.01] {
            let s = setup(zeta, u, t);
            let c0 = ContourC0::for_moment_kernel(&s, 1e-11).unwrap();
            let d = det_moment_kernel(
                &s,
                &c0,
                &Refinement {
                    tol: 1e-10,
                    max_doublings: 3,
                },
            )
            .unwrap();
            let want = q_binomial_series(C64::new(zeta, 0.0), &moments, 0.5);
            assert!(
                (d.value - want).norm() < 5e-8,
                "zeta = {zeta}: {} vs {want}",
                d.value
            );
        }
    }

    #[test]
    fn mellin_barnes_kernel_equals_residue_sum() {
        let s = setup(-0.2, 1.0, 3.0);
        let tau = s.tau();
        let delta = 0.4;
        let moment = moment_kernel(&s).unwrap();
        for (phi, phi_p) in [
            (0.0, 0.0),
            (0.7, -1.3),
            (-2.5, 0.4),
            (4.0, 3.8),
            (-6.0, 2.0),
        ] {
            let w = C64::new(-delta, phi);
            let wp = C64::new(-delta, phi_p);
            let cw = ContourCw::build(w, delta, &s).unwrap();
            let got = kernel_k_zeta(w, wp, &s, &cw).unwrap();
            let want = moment.eval(w * (1.0 - tau), wp * (1.0 - tau)).unwrap() * (1.0 - tau);
            let scale = want.norm().max(1e-300);
            assert!(
                (got - want).norm() <= 1e-9 * scale + 1e-14,
                "phi = {phi}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn cw_keeps_its_separation() {
        let s = setup(-0.1, 1.0, 3.0);
        let c0 = ContourC0::for_mellin_barnes(&s, 1e-8).unwrap();
        let nodes = c0.rule(0).nodes;
        for phi in [0.0, 0.5, 2.0, 5.0, -8.0] {
            let cw = ContourCw::build(c0.point(phi), c0.delta, &s).unwrap();
            assert!(cw.right >= 0.5 && cw.d > 0.0);
            assert!(cw.distance_to(&nodes, s.tau()) >= cw.separation * (1.0 - 1e-9));
            let symmetric = cw
                .nodes()
                .iter()
                .all(|n| cw.nodes().iter().any(|m| (m - n.conj()).norm() < 1e-14));
            assert!(symmetric);
        }
    }

    #[test]
    fn mellin_barnes_decays_like_a_gaussian() {
        let s = QLaplace::from_rescaled_time(C64::new(-0.1, 0.0), 1.0, 1.0, half()).unwrap();
        let delta = 0.4;
        let wp = C64::new(-delta, 0.0);
        let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..=12 {
            let phi = 0.5 * k as f64;
            let w = C64::new(-delta, phi);
            let cw = ContourCw::build(w, delta, &s).unwrap();
            let v = kernel_k_zeta(w, wp, &s, &cw).unwrap().norm().ln();
            let x = phi * phi;
            sx += x;
            sy += v;
            sxx += x * x;
            sxy += x * v;
            n += 1.0;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(slope <= -(1.0 - s.tau()) / 4.0, "slope {slope}");
    }

    #[test]
    fn both_representations_agree_and_lie_in_unit_interval() {
        let s = QLaplace::from_rescaled_time(C64::new(-0.1, 0.0), 1.0, 1.0, half()).unwrap();
        let refine = Refinement {
            tol: 1e-8,
            max_doublings: 3,
        };
        let a = det_moment_kernel(
            &s,
            &ContourC0::for_moment_kernel(&s, 1e-9).unwrap(),
            &refine,
        )
        .unwrap();
        let b = det_mellin_barnes(
            &s,
            &ContourC0::for_mellin_barnes(&s, 1e-9).unwrap(),
            &refine,
        )
        .unwrap();
        assert!(
            (a.value - b.value).norm() < 1e-6,
            "{} vs {}",
            a.value,
            b.value
        );
        assert!(a.value.re > 0.0 && a.value.re <= 1.0);
        assert!(a.imag_residual() < 1e-8 && b.imag_residual() < 1e-8);
    }

    #[test]
    fn cubic_kernel_is_schwarz_symmetric() {
        let k = cubic_kernel(1.0, 0.5, &RayContours::default(), 0).unwrap();
        let rule = RayContours::default().w_rule(0);
        for (i, j) in [(0, 3), (5, 60), (17, 41)] {
            let (w, wp) = (rule.nodes[i], rule.nodes[j]);
            let direct = k.eval(w.conj(), wp.conj()).unwrap();
            let mirrored = k.eval(w, wp).unwrap().conj();
            assert!((direct - mirrored).norm() < 1e-12 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn cubic_kernel_reproduces_gue() {
        for r in [-1.0, 0.0, 1.0] {
            let d =
                det_cubic_kernel(1.0, r, &RayContours::default(), &Refinement::default()).unwrap();
            let want = tw_gue_cdf(airy_argument(1.0, r)).unwrap();
            assert!(
                (d.value.re - want).abs() < 1e-8,
                "r = {r}: {} vs {want}",
                d.value
            );
            assert!(d.imag_residual() < 1e-8);
        }
        let far =
            det_cubic_kernel(1.0, 6.0, &RayContours::default(), &Refinement::default()).unwrap();
        assert!((far.value.re - 1.0).abs() < 1e-3);
    }

    #[test]
    fn tracy_widom_values() {
        let a = tw_gue_cdf(-3.0).unwrap();
        let b = tw_gue_cdf(0.0).unwrap();
        let c = tw_gue_cdf(2.0).unwrap();
        assert!(0.0 < a && a < b && b < c && c < 1.0);
        // Published value F_2(-2) = 0.41322...
        assert!((tw_gue_cdf(-2.0).unwrap() - 0.413224).abs() < 1e-5);
        for s in [-3.0, -1.0, 0.5] {
            let coarse = tw_gue_cdf_with_nodes(s, 80);
            let fine = tw_gue_cdf_with_nodes(s, 160);
            assert!((coarse - fine).abs() <= 1e-8);
        }
        let mean = tw_gue_mean().unwrap();
        assert!((mean + 1.7711).abs() < 1e-3, "mean {mean}");
    }

    #[test]
    fn goe_values_and_comparison() {
        let mut last = 0.0;
        for k in 0..=12 {
            let s = -4.0 + 0.5 * k as f64;
            let goe = tw_goe_cdf(s).unwrap();
            let gue = tw_gue_cdf(s).unwrap();
            assert!(goe > 0.0 && goe < 1.0 && goe >= last);
            // With the kernel Ai(x + y) on [s, inf) the GOE variable is
            // wider on the left, so its distribution function sits below.
            assert!(goe < gue, "s = {s}: {goe} vs {gue}");
            last = goe;
        }
        // The standard GOE Tracy-Widom mean is -1.20653; this normalization halves it.
        let mean = mean_of(tw_goe_cdf, -6.0, 6.0).unwrap();
        assert!((mean + 0.603267).abs() < 1e-4, "mean {mean}");
        let (x, y) = (0.3, 1.1);
        assert_eq!(airy_pair(x + y).0, airy_pair(y + x).0);
    }
}
