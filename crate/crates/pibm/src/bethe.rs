//! Bethe-ansatz transition density of the point-interacting system, its
//! permanent and determinant reductions, and distribution functions of
//! single particles, all by trapezoid quadrature on vertical lines.
//!
//! Every contour integral carries the `1/(2 pi i)` prefactor, so a vertical
//! line contributes the positive weight `h / (2 pi)` per node.
//!
//! The N-fold integrals are evaluated on tensor grids. The cost is roughly
//! `K^N * N!` complex multiply-adds with `K` nodes per axis:
//!
//! | N | K = 100 | K = 200 |
//! |---|---------|---------|
//! | 2 | 2e4     | 8e4     |
//! | 3 | 6e6     | 5e7     |
//! | 4 | 2.4e9   | 3.8e10  |
//!
//! Requests above [`WORK_BUDGET`] are refused with a capacity error, and
//! `N > 5` is always refused.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{det_real, permanent, permutations};
use crate::model::{Chamber, Config, ModelParams};
pub use crate::quad::Evaluation;
use crate::quad::{gauss_legendre_on, VerticalLine};

/// Largest number of particles handled by the tensor quadrature.
pub const MAX_PARTICLES: usize = 5;

/// Upper bound on `K^N * N!` for a single evaluation.
pub const WORK_BUDGET: f64 = 4e9;

/// A permutation of `0..n` with its inversion set cached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    images: Vec<usize>,
    inversions: Vec<(usize, usize)>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            images: (0..n).collect(),
            inversions: Vec::new(),
        }
    }

    /// Builds `sigma` from `images[i] = sigma(i)`.
    pub fn from_images(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &v in &images {
            if v >= n || std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidInput(format!(
                    "{images:?} is not a permutation"
                )));
            }
        }
        let mut inversions = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if images[i] > images[j] {
                    inversions.push((images[i], images[j]));
                }
            }
        }
        Ok(Self { images, inversions })
    }

    /// All permutations of `0..n`, identity first.
    pub fn all(n: usize) -> Vec<Self> {
        permutations(n)
            .into_iter()
            .map(|p| Self::from_images(p).expect("valid permutation"))
            .collect()
    }

    pub fn images(&self) -> &[usize] {
        &self.images
    }

    /// Pairs `(sigma(i), sigma(j))` with `i < j` and `sigma(i) > sigma(j)`.
    pub fn inversions(&self) -> &[(usize, usize)] {
        &self.inversions
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn sign(&self) -> f64 {
        if self.inversions.len() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &v) in self.images.iter().enumerate() {
            inv[v] = i;
        }
        Self::from_images(inv).expect("inverse of a permutation")
    }
}

/// Two-body scattering factor `-(tau za - zb) / (tau zb - za)`.
///
/// At `tau = 1` the factor is identically `1`, including the removable
/// point `za = zb`; `tau = inf` gives the limit `-za / zb`.
pub fn scattering(za: C64, zb: C64, tau: f64) -> Result<C64> {
    if tau == 1.0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let (num, den) = if tau.is_infinite() {
        (za, zb)
    } else {
        (tau * za - zb, tau * zb - za)
    };
    if den.norm() <= 1e-300 || den.norm() <= 1e-15 * (za.norm() + zb.norm()) {
        return Err(Error::Pole(format!(
            "scattering factor has a pole at za = {za}, zb = {zb}"
        )));
    }
    Ok(-num / den)
}

/// Product of scattering factors over the inversions of `sigma`.
pub fn amplitude(sigma: &Permutation, z: &[C64], tau: f64) -> Result<C64> {
    if z.len() != sigma.len() {
        return Err(Error::InvalidInput(
            "amplitude needs one wave number per particle".into(),
        ));
    }
    sigma
        .inversions()
        .iter()
        .try_fold(C64::new(1.0, 0.0), |acc, &(a, b)| {
            Ok(acc * scattering(z[a], z[b], tau)?)
        })
}

/// Quadrature controls shared by all evaluations in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetheQuadrature {
    /// Real part of the integration line; its sign must match `tau < 1` or
    /// `tau > 1`.
    pub abscissa: f64,
    pub tol: f64,
}

impl Default for BetheQuadrature {
    fn default() -> Self {
        Self {
            abscissa: 1.0,
            tol: 1e-12,
        }
    }
}

impl BetheQuadrature {
    pub fn with_abscissa(abscissa: f64) -> Self {
        Self {
            abscissa,
            ..Self::default()
        }
    }

    fn log_tol(&self) -> f64 {
        (1.0 / self.tol).ln()
    }

    /// Line for an integrand whose exponents have real spread `spread` and
    /// whose nearest pole lies at horizontal distance `pole_distance`.
    pub fn line(&self, t: f64, spread: f64, pole_distance: f64) -> VerticalLine {
        let a = self.abscissa.abs();
        let ln = self.log_tol();
        let mut spacing = 0.5f64.min(PI / (spread + 1.0));
        spacing = spacing.min(2.0 * PI / (spread + a * t + (2.0 * t * ln).sqrt() + 1.0));
        if pole_distance.is_finite() {
            spacing = spacing.min(2.0 * PI * pole_distance / (ln + 3.0));
        }
        let phi_max = (2.0 * ln / t).sqrt() + a;
        VerticalLine {
            abscissa: self.abscissa,
            phi_max,
            spacing,
        }
    }
}

fn check_abscissa(tau: f64, a: f64) -> Result<()> {
    let ok = if tau < 1.0 {
        a > 0.0
    } else if tau > 1.0 {
        a < 0.0
    } else {
        a != 0.0
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "abscissa {a} is not admissible for tau = {tau}"
        )))
    }
}

/// Horizontal distance from the line to the nearest pole of the
/// scattering factors, or infinity when there is none.
fn scattering_pole_distance(tau: f64, a: f64) -> f64 {
    let a = a.abs();
    if tau == 1.0 {
        f64::INFINITY
    } else if tau < 1.0 {
        a * (1.0 - tau)
    } else if tau.is_infinite() {
        a
    } else {
        a * (1.0 - 1.0 / tau)
    }
}

fn check_sizes(n: usize, k: usize, perms: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one particle".into()));
    }
    if n > MAX_PARTICLES {
        return Err(Error::Capacity(format!(
            "{n} particles exceed the limit of {MAX_PARTICLES}"
        )));
    }
    let work = (k as f64).powi(n as i32) * perms as f64;
    if work > WORK_BUDGET {
        return Err(Error::Capacity(format!(
            "{k}^{n} nodes times {perms} terms exceeds the work budget"
        )));
    }
    Ok(())
}

fn finish(sum: C64, tol: f64, scale: f64, k: usize) -> Result<Evaluation> {
    let eval = Evaluation {
        value: sum.re,
        imag_residual: sum.im.abs(),
        nodes_per_axis: k,
    };
    if !sum.re.is_finite() || eval.imag_residual > 10.0 * tol * scale.max(1.0) {
        return Err(Error::Accuracy(format!(
            "quadrature imaginary residual {} exceeds tolerance (value {})",
            eval.imag_residual, eval.value
        )));
    }
    Ok(eval)
}

/// Sums `prod_level factor(level, node, term, chosen) * leaf(term, chosen)`
/// over all node tuples and `terms` parallel product chains.
fn tensor_sum<F, L>(k: usize, n: usize, terms: usize, factor: F, leaf: L) -> C64
where
    F: Fn(usize, usize, usize, &[usize]) -> C64 + Sync,
    L: Fn(usize, &[usize]) -> C64 + Sync,
{
    (0..k)
        .into_par_iter()
        .map(|first| {
            let mut chosen = vec![0usize; n];
            let mut partial = vec![C64::new(0.0, 0.0); (n + 1) * terms];
            for s in 0..terms {
                partial[s] = C64::new(1.0, 0.0);
            }
            let mut cursor = vec![0usize; n];
            cursor[0] = first;
            let mut total = C64::new(0.0, 0.0);
            let mut level = 0usize;
            loop {
                // Descend with the current cursor at this level.
                chosen[level] = cursor[level];
                for s in 0..terms {
                    let prev = partial[level * terms + s];
                    partial[(level + 1) * terms + s] =
                        prev * factor(level, chosen[level], s, &chosen[..level]);
                }
                if level + 1 == n {
                    for s in 0..terms {
                        total += partial[n * terms + s] * leaf(s, &chosen);
                    }
                    // Advance the deepest level that still has nodes left.
                    loop {
                        if level == 0 {
                            return total;
                        }
                        cursor[level] += 1;
                        if cursor[level] < k {
                            break;
                        }
                        cursor[level] = 0;
                        level -= 1;
                    }
                } else {
                    level += 1;
                    cursor[level] = 0;
                }
            }
        })
        .sum()
}

fn validate_pair(y: &Config, x: Option<&Config>, t: f64) -> Result<()> {
    y.expect(Chamber::Increasing, "y")?;
    if let Some(x) = x {
        x.expect(Chamber::Increasing, "x")?;
        if x.len() != y.len() {
            return Err(Error::InvalidInput("x and y must have equal length".into()));
        }
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("t = {t} must be positive")));
    }
    Ok(())
}

fn spread_of(xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .flat_map(|a| ys.iter().map(move |b| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// Transition density `Q_y(x, t)` from the Bethe ansatz.
pub fn transition_density(
    y: &Config,
    x: &Config,
    t: f64,
    params: &ModelParams,
    quad: &BetheQuadrature,
) -> Result<Evaluation> {
    validate_pair(y, Some(x), t)?;
    let tau = params.tau();
    check_abscissa(tau, quad.abscissa)?;
    let (xs, ys) = (x.positions(), y.positions());
    let n = ys.len();
    let line = quad.line(
        t,
        spread_of(xs, ys),
        scattering_pole_distance(tau, quad.abscissa),
    );
    let contour = line.contour();
    let k = contour.len();
    let perms = Permutation::all(n);
    check_sizes(n, k, perms.len())?;

    let zs = &contour.nodes;
    let w = contour.weights[0].re;
    // plane[(particle * n + position) * k + node] = w e^{z (x_pos - y_particle) + z^2 t / 2}
    let mut plane = vec![C64::new(0.0, 0.0); n * n * k];
    let mut scale = 0.0;
    for p in 0..n {
        for i in 0..n {
            for (m, z) in zs.iter().enumerate() {
                let v = w * (z * (xs[i] - ys[p]) + z * z * (0.5 * t)).exp();
                plane[(p * n + i) * k + m] = v;
            }
        }
    }
    let mut smat = vec![C64::new(1.0, 0.0); k * k];
    if tau != 1.0 {
        for (m, za) in zs.iter().enumerate() {
            for (l, zb) in zs.iter().enumerate() {
                smat[m * k + l] = scattering(*za, *zb, tau)?;
            }
        }
    }
    let inverse: Vec<Vec<usize>> = perms
        .iter()
        .map(|s| s.inverse().images().to_vec())
        .collect();
    // For each permutation and level, the partners beta < alpha = level.
    let partners: Vec<Vec<Vec<usize>>> = perms
        .iter()
        .map(|s| {
            let mut by_level = vec![Vec::new(); n];
            for &(a, b) in s.inversions() {
                by_level[a].push(b);
            }
            by_level
        })
        .collect();
    for v in &plane {
        scale += v.norm();
    }
    let sum = tensor_sum(
        k,
        n,
        perms.len(),
        |level, node, s, chosen| {
            let mut f = plane[(level * n + inverse[s][level]) * k + node];
            for &b in &partners[s][level] {
                f *= smat[node * k + chosen[b]];
            }
            f
        },
        |_, _| C64::new(1.0, 0.0),
    );
    finish(sum, quad.tol, scale / (n * n) as f64, k)
}

/// Gaussian heat kernel `(2 pi t)^{-1/2} exp(-u^2 / 2t)`.
pub fn heat_kernel(u: f64, t: f64) -> f64 {
    (-u * u / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

/// Symmetric interaction: permanent of `p_t(x_i - y_j)`.
pub fn transition_permanent(y: &Config, x: &Config, t: f64) -> Result<f64> {
    validate_pair(y, Some(x), t)?;
    let n = y.len();
    let (xs, ys) = (x.positions(), y.positions());
    let m: Vec<f64> = (0..n * n)
        .map(|e| heat_kernel(xs[e / n] - ys[e % n], t))
        .collect();
    Ok(permanent(n, &m))
}

/// `F_m(u) = (2 pi i)^{-1} int z^m e^{z u + z^2 t / 2} dz` on a vertical line.
pub fn contour_moment(m: i32, u: f64, t: f64, quad: &BetheQuadrature) -> Result<Evaluation> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t = {t} must be positive")));
    }
    if m < 0 && quad.abscissa <= 0.0 {
        return Err(Error::Domain(
            "negative powers need a positive abscissa".into(),
        ));
    }
    let line = quad.line(t, u.abs() + m.unsigned_abs() as f64, quad.abscissa.abs());
    let contour = line.contour();
    let mut scale = 0.0;
    let sum = contour.integrate(|z| {
        let v = z.powi(m) * (z * u + z * z * (0.5 * t)).exp();
        scale += v.norm();
        v
    });
    finish(sum, quad.tol, scale * contour.weights[0].re, contour.len())
}

/// Maximally asymmetric interaction (`q = 1`): `det F_{i-j}(x_i - y_j)`.
pub fn transition_determinant(
    y: &Config,
    x: &Config,
    t: f64,
    quad: &BetheQuadrature,
) -> Result<f64> {
    validate_pair(y, Some(x), t)?;
    check_abscissa(0.0, quad.abscissa)?;
    let n = y.len();
    let (xs, ys) = (x.positions(), y.positions());
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = contour_moment(i as i32 - j as i32, xs[i] - ys[j], t, quad)?.value;
        }
    }
    Ok(det_real(n, &m))
}

fn cross_matrix(zs: &[C64], tau: f64) -> Vec<C64> {
    let k = zs.len();
    let mut c = vec![C64::new(0.0, 0.0); k * k];
    for (i, zi) in zs.iter().enumerate() {
        for (j, zj) in zs.iter().enumerate() {
            c[i * k + j] = (zj - zi) / (zj - tau * zi);
        }
    }
    c
}

/// Distribution function of the rightmost particle from the symmetrized
/// contour formula with the cross factor `(z_j - z_i) / (z_j - tau z_i)`.
pub fn cdf_last(
    u: f64,
    y: &Config,
    t: f64,
    params: &ModelParams,
    quad: &BetheQuadrature,
) -> Result<Evaluation> {
    validate_pair(y, None, t)?;
    let tau =
        params
            .require_analytic()
            .or_else(|e| if params.tau() == 0.0 { Ok(0.0) } else { Err(e) })?;
    check_abscissa(tau, quad.abscissa)?;
    let ys = y.positions();
    let n = ys.len();
    let pole = scattering_pole_distance(tau, quad.abscissa).min(quad.abscissa);
    let line = quad.line(t, spread_of(&[u], ys), pole);
    let contour = line.contour();
    let k = contour.len();
    check_sizes(n, k, 1)?;
    let zs = &contour.nodes;
    let w = contour.weights[0].re;
    let mut single = vec![C64::new(0.0, 0.0); n * k];
    for j in 0..n {
        for (m, z) in zs.iter().enumerate() {
            single[j * k + m] = w * (z * (u - ys[j]) + z * z * (0.5 * t)).exp() / z;
        }
    }
    let scale = single.iter().map(|v| v.norm()).sum::<f64>() / n as f64;
    let cross = cross_matrix(zs, tau);
    let sum = tensor_sum(
        k,
        n,
        1,
        |level, node, _, chosen| {
            let mut f = single[level * k + node];
            for &c in chosen {
                f *= cross[c * k + node];
            }
            f
        },
        |_, _| C64::new(1.0, 0.0),
    );
    finish(sum, quad.tol, scale, k)
}

/// `int` of `prod_j e^{c_j x_j}` over the ordered region with
/// `x_k <= u` and `x_{n-1} <= top`, for rates with positive real parts.
fn ordered_exponential_integral(c: &[C64], k: usize, u: f64, top: f64) -> C64 {
    let mut rate = C64::new(0.0, 0.0);
    let mut coef = C64::new(1.0, 0.0);
    for cj in &c[..=k] {
        rate += cj;
        coef /= rate;
    }
    if k + 1 == c.len() {
        return coef * (rate * u).exp();
    }
    // Below u the function is coef e^{rate s}; above u it is sum b e^{lambda s}.
    let mut high: Vec<(C64, C64)> = vec![(coef * (rate * u).exp(), C64::new(0.0, 0.0))];
    for cj in &c[k + 1..] {
        let mut constant = coef * ((rate + cj) * u).exp() / (rate + cj);
        let mut next = Vec::with_capacity(high.len() + 1);
        for &(b, lambda) in &high {
            let l = lambda + cj;
            next.push((b / l, l));
            constant -= b * (l * u).exp() / l;
        }
        next.push((constant, C64::new(0.0, 0.0)));
        coef /= rate + cj;
        rate += cj;
        high = next;
    }
    high.iter().map(|&(b, l)| b * (l * top).exp()).sum()
}

/// `P(x_k(t) <= u)` for the particle with zero-based index `k`, by
/// integrating the Bethe integrand over the ordered region analytically at
/// every quadrature node.
pub fn marginal_cdf(
    k: usize,
    u: f64,
    y: &Config,
    t: f64,
    params: &ModelParams,
    quad: &BetheQuadrature,
) -> Result<Evaluation> {
    validate_pair(y, None, t)?;
    let tau = params.tau();
    if tau > 1.0 {
        return Err(Error::Domain(
            "marginal distribution functions need tau <= 1".into(),
        ));
    }
    check_abscissa(tau.min(0.5), quad.abscissa)?;
    let ys = y.positions();
    let n = ys.len();
    if k >= n {
        return Err(Error::InvalidInput(format!(
            "particle index {k} out of range"
        )));
    }
    let top = u.max(ys[n - 1]) + 12.0 * t.sqrt() + 1.0;
    let pole = scattering_pole_distance(tau, quad.abscissa).min(quad.abscissa);
    let line = quad.line(t, spread_of(&[u, top], ys), pole);
    let contour = line.contour();
    let kn = contour.len();
    let perms = Permutation::all(n);
    check_sizes(n, kn, perms.len())?;
    let zs = &contour.nodes;
    let w = contour.weights[0].re;
    let base: Vec<C64> = (0..n)
        .flat_map(|j| {
            zs.iter()
                .map(move |z| w * (-z * ys[j] + z * z * (0.5 * t)).exp())
        })
        .collect();
    let mut smat = vec![C64::new(1.0, 0.0); kn * kn];
    if tau != 1.0 {
        for (m, za) in zs.iter().enumerate() {
            for (l, zb) in zs.iter().enumerate() {
                smat[m * kn + l] = scattering(*za, *zb, tau)?;
            }
        }
    }
    let partners: Vec<Vec<Vec<usize>>> = perms
        .iter()
        .map(|s| {
            let mut by_level = vec![Vec::new(); n];
            for &(a, b) in s.inversions() {
                by_level[a].push(b);
            }
            by_level
        })
        .collect();
    let sum = tensor_sum(
        kn,
        n,
        perms.len(),
        |level, node, s, chosen| {
            let mut f = base[level * kn + node];
            for &b in &partners[s][level] {
                f *= smat[node * kn + chosen[b]];
            }
            f
        },
        |s, chosen| {
            let rates: Vec<C64> = perms[s].images().iter().map(|&p| zs[chosen[p]]).collect();
            ordered_exponential_integral(&rates, k, u, top)
        },
    );
    finish(sum, quad.tol.max(1e-10), 1.0, kn)
}

/// Integral of `Q_y(., t)` over the ordered region, in gap coordinates on a
/// box of half-width `8 sqrt(t)` around the initial data, with `order`
/// Gauss-Legendre nodes per axis.
pub fn normalization(
    y: &Config,
    t: f64,
    params: &ModelParams,
    quad: &BetheQuadrature,
    order: usize,
) -> Result<f64> {
    validate_pair(y, None, t)?;
    let ys = y.positions();
    let n = ys.len();
    let half = 8.0 * t.sqrt();
    let (lo, hi) = (ys[0] - half, ys[n - 1] + half);
    let (base_nodes, base_weights) = gauss_legendre_on(order, lo, hi);
    let (gap_nodes, gap_weights) = gauss_legendre_on(order, 0.0, hi - lo);
    let total = order.pow(n as u32);
    let mut sum = 0.0;
    for idx in 0..total {
        let mut rest = idx;
        let mut x = Vec::with_capacity(n);
        let mut weight = 1.0;
        let i0 = rest % order;
        rest /= order;
        x.push(base_nodes[i0]);
        weight *= base_weights[i0];
        for _ in 1..n {
            let i = rest % order;
            rest /= order;
            let last = *x.last().expect("nonempty");
            x.push(last + gap_nodes[i]);
            weight *= gap_weights[i];
        }
        if x[n - 1] > hi {
            continue;
        }
        let cfg = Config::from_ordered(x, Chamber::Increasing)?;
        sum += weight * transition_density(y, &cfg, t, params, quad)?.value;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::normal_cdf;

    fn cfg(v: &[f64]) -> Config {
        Config::increasing(v.to_vec()).unwrap()
    }

    fn tau(v: f64) -> ModelParams {
        ModelParams::from_tau(v).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn scattering_examples() {
        let z = C64::new(0.3, -1.2);
        assert!((scattering(z, z, 0.4).unwrap() + 1.0).norm() < 1e-15);
        assert_eq!(
            scattering(z, C64::new(2.0, 5.0), 1.0).unwrap(),
            C64::new(1.0, 0.0)
        );
        // (1 + i, 2), tau = 1/2: -(0.5 + 0.5i - 2) / (1 - 1 - i) = -(-1.5 + 0.5i) / (-i)
        // = (-1.5 + 0.5i) / i = 0.5 + 1.5i.
        let s = scattering(C64::new(1.0, 1.0), C64::new(2.0, 0.0), 0.5).unwrap();
        assert!((s - C64::new(0.5, 1.5)).norm() < 1e-15);
        assert!(matches!(
            scattering(C64::new(1.0, 0.0), C64::new(2.0, 0.0), 0.5),
            Err(Error::Pole(_))
        ));
        let s = scattering(C64::new(1.0, 1.0), C64::new(2.0, 0.0), f64::INFINITY).unwrap();
        assert!((s + C64::new(0.5, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn permutation_inversions() {
        let rev = Permutation::from_images(vec![2, 1, 0]).unwrap();
        assert_eq!(rev.inversions().len(), 3);
        assert_eq!(rev.inversions(), &[(2, 1), (2, 0), (1, 0)]);
        assert_eq!(rev.sign(), -1.0);
        assert!(Permutation::from_images(vec![0, 0]).is_err());
        let s = Permutation::from_images(vec![1, 2, 0]).unwrap();
        assert_eq!(s.inverse().images(), &[2, 0, 1]);
        assert_eq!(Permutation::all(4).len(), 24);
    }

    #[test]
    fn amplitude_examples() {
        let z = [C64::new(1.0, 0.3), C64::new(1.0, -2.0), C64::new(1.0, 0.7)];
        let t = 0.5;
        assert_eq!(
            amplitude(&Permutation::identity(3), &z, t).unwrap(),
            C64::new(1.0, 0.0)
        );
        let swap = Permutation::from_images(vec![1, 0]).unwrap();
        let direct = -(t * z[1] - z[0]) / (t * z[0] - z[1]);
        assert!((amplitude(&swap, &z[..2], t).unwrap() - direct).norm() < 1e-15);
        let rev = Permutation::from_images(vec![2, 1, 0]).unwrap();
        let want = scattering(z[2], z[1], t).unwrap()
            * scattering(z[2], z[0], t).unwrap()
            * scattering(z[1], z[0], t).unwrap();
        assert!((amplitude(&rev, &z, t).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn amplitude_matches_signed_product_form() {
        // A_sigma = sgn(sigma) prod_{i<j} (q z_sigma(j) - p z_sigma(i)) / (q z_j - p z_i)
        let (p, q) = (0.3, 0.7);
        let z = [C64::new(1.0, 0.4), C64::new(1.0, -1.1), C64::new(1.0, 2.5)];
        for s in Permutation::all(3) {
            let im = s.images();
            let mut prod = C64::new(s.sign(), 0.0);
            for i in 0..3 {
                for j in i + 1..3 {
                    prod *= (q * z[im[j]] - p * z[im[i]]) / (q * z[j] - p * z[i]);
                }
            }
            assert!(
                (amplitude(&s, &z, p / q).unwrap() - prod).norm() < 1e-13,
                "{im:?}"
            );
        }
    }

    #[test]
    fn single_particle_is_heat_kernel() {
        for (x, y, t) in [(0.3, -0.2, 0.5), (2.0, 0.0, 1.0), (-1.0, 1.5, 2.0)] {
            let q = transition_density(
                &cfg(&[y]),
                &cfg(&[x]),
                t,
                &tau(0.5),
                &BetheQuadrature::default(),
            )
            .unwrap();
            assert!(rel(q.value, heat_kernel(x - y, t)) < 1e-10, "{x} {y} {t}");
        }
    }

    #[test]
    fn symmetric_case_reduces_to_permanent() {
        let y = cfg(&[0.0, 0.4]);
        for x in [[0.1, 0.2], [-0.5, 1.0], [0.4, 0.4]] {
            let q = transition_density(&y, &cfg(&x), 0.7, &tau(1.0), &BetheQuadrature::default())
                .unwrap();
            let perm = transition_permanent(&y, &cfg(&x), 0.7).unwrap();
            assert!(rel(q.value, perm) < 1e-8);
        }
        let same = transition_permanent(&cfg(&[0.0, 1.0]), &cfg(&[0.0, 1.0]), 1.0).unwrap();
        let p0 = heat_kernel(0.0, 1.0);
        let p1 = heat_kernel(1.0, 1.0);
        assert!(rel(same, p0 * p0 + p1 * p1) < 1e-14);
    }

    #[test]
    fn contour_moments_match_gaussian_derivatives() {
        let quad = BetheQuadrature::default();
        let t = 0.8;
        for u in [-1.3, 0.0, 0.7, 2.1] {
            let p = heat_kernel(u, t);
            assert!(rel(contour_moment(0, u, t, &quad).unwrap().value, p) < 1e-10);
            assert!((contour_moment(1, u, t, &quad).unwrap().value + u / t * p).abs() < 1e-10);
            let second = (u * u / (t * t) - 1.0 / t) * p;
            assert!((contour_moment(2, u, t, &quad).unwrap().value - second).abs() < 1e-10);
            let cdf = normal_cdf(u / t.sqrt());
            assert!((contour_moment(-1, u, t, &quad).unwrap().value - cdf).abs() < 1e-10);
        }
    }

    #[test]
    fn asymmetric_limit_reduces_to_determinant() {
        let y = cfg(&[0.0, 1.0]);
        let x = cfg(&[0.2, 1.3]);
        let quad = BetheQuadrature::default();
        let q = transition_density(&y, &x, 0.5, &ModelParams::from_p(0.0).unwrap(), &quad).unwrap();
        let d = transition_determinant(&y, &x, 0.5, &quad).unwrap();
        assert!(rel(q.value, d) < 1e-8, "{} vs {d}", q.value);
        let one = transition_determinant(&cfg(&[0.1]), &cfg(&[0.9]), 0.5, &quad).unwrap();
        assert!(rel(one, heat_kernel(0.8, 0.5)) < 1e-10);
    }

    #[test]
    fn density_is_positive_and_independent_of_abscissa() {
        let y = cfg(&[0.0, 0.3]);
        let par = tau(0.5);
        for x in [[-0.4, -0.1], [0.0, 0.0], [0.2, 0.9], [0.8, 1.4]] {
            let x = cfg(&x);
            let base = transition_density(&y, &x, 0.5, &par, &BetheQuadrature::default())
                .unwrap()
                .value;
            assert!(base > 0.0);
            for a in [0.4, 1.7] {
                let other =
                    transition_density(&y, &x, 0.5, &par, &BetheQuadrature::with_abscissa(a))
                        .unwrap()
                        .value;
                assert!(rel(other, base) < 1e-8, "a = {a}: {other} vs {base}");
            }
        }
    }

    #[test]
    fn normalized_and_last_particle_cdf() {
        let par = tau(0.5);
        let y = cfg(&[0.0, 0.3]);
        let quad = BetheQuadrature {
            tol: 1e-10,
            ..Default::default()
        };
        let mass = normalization(&y, 0.5, &par, &quad, 24).unwrap();
        assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
        let g = cdf_last(0.3 + 8.0 * 0.5f64.sqrt(), &y, 0.5, &par, &quad)
            .unwrap()
            .value;
        assert!(g <= 1.0 + 1e-9 && g >= 1.0 - 1e-3);
        let g1 = cdf_last(0.4, &cfg(&[-0.1]), 0.5, &par, &BetheQuadrature::default())
            .unwrap()
            .value;
        assert!(rel(g1, normal_cdf(0.5 / 0.5f64.sqrt())) < 1e-9);
    }

    #[test]
    fn last_particle_formulas_agree() {
        // Symmetrized closed form versus the permutation sum integrated over x.
        let quad = BetheQuadrature::default();
        for (ys, tv) in [(vec![0.0, 0.5], 0.5), (vec![-0.2, 0.0, 0.6], 0.3)] {
            let y = cfg(&ys);
            for u in [-0.5, 0.3, 1.2] {
                let a = cdf_last(u, &y, 0.7, &tau(tv), &quad).unwrap().value;
                let b = marginal_cdf(ys.len() - 1, u, &y, 0.7, &tau(tv), &quad)
                    .unwrap()
                    .value;
                assert!((a - b).abs() < 1e-8, "u = {u}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn symmetric_marginals_are_order_statistics() {
        let y = [0.0, 0.5];
        let t: f64 = 0.6;
        let quad = BetheQuadrature::default();
        for u in [-0.7, 0.2, 0.9] {
            let f = |c: f64| normal_cdf((u - c) / t.sqrt());
            let lo = marginal_cdf(0, u, &cfg(&y), t, &tau(1.0), &quad)
                .unwrap()
                .value;
            let hi = marginal_cdf(1, u, &cfg(&y), t, &tau(1.0), &quad)
                .unwrap()
                .value;
            assert!((lo - (1.0 - (1.0 - f(y[0])) * (1.0 - f(y[1])))).abs() < 1e-9);
            assert!((hi - f(y[0]) * f(y[1])).abs() < 1e-9);
        }
        // q = 1: the first particle is a free Brownian motion.
        let free = marginal_cdf(
            0,
            0.3,
            &cfg(&y),
            t,
            &ModelParams::from_p(0.0).unwrap(),
            &quad,
        )
        .unwrap()
        .value;
        assert!((free - normal_cdf(0.3 / t.sqrt())).abs() < 1e-9);
    }

    #[test]
    fn boundary_condition_holds_at_coincident_start() {
        // (tau d/dy1 - d/dy2) Q = 0 at y1 = y2, by one-sided differences
        // taken from the interior.
        let par = tau(0.5);
        let quad = BetheQuadrature::default();
        let x = cfg(&[0.1, 0.6]);
        let h = 1e-4;
        let q = |a: f64, b: f64| {
            transition_density(&cfg(&[a, b]), &x, 0.5, &par, &quad)
                .unwrap()
                .value
        };
        let base = q(0.2, 0.2);
        let d1 = (-3.0 * base + 4.0 * q(0.2 - h, 0.2) - q(0.2 - 2.0 * h, 0.2)) / (-2.0 * h);
        let d2 = (-3.0 * base + 4.0 * q(0.2, 0.2 + h) - q(0.2, 0.2 + 2.0 * h)) / (2.0 * h);
        let residual = (0.5 * d1 - d2).abs();
        assert!(
            residual <= 1e-4 * (d1 * d1 + d2 * d2).sqrt(),
            "{residual} vs {d1}, {d2}"
        );
    }

    #[test]
    fn backward_heat_equation() {
        let par = tau(0.4);
        let quad = BetheQuadrature::default();
        let x = cfg(&[0.0, 0.7]);
        let (y1, y2, t) = (-0.1, 0.5, 0.6);
        let q = |a: f64, b: f64, s: f64| {
            transition_density(&cfg(&[a, b]), &x, s, &par, &quad)
                .unwrap()
                .value
        };
        let h = 1e-3;
        let dt = (q(y1, y2, t + h) - q(y1, y2, t - h)) / (2.0 * h);
        let c = q(y1, y2, t);
        let lap = (q(y1 + h, y2, t) + q(y1 - h, y2, t) + q(y1, y2 + h, t) + q(y1, y2 - h, t)
            - 4.0 * c)
            / (h * h);
        assert!(
            (dt - 0.5 * lap).abs() <= 1e-3 * dt.abs().max(0.5 * lap.abs()),
            "{dt} vs {}",
            0.5 * lap
        );
    }

    #[test]
    fn chapman_kolmogorov_single_particle() {
        let par = tau(0.5);
        let quad = BetheQuadrature::default();
        let (y, x, t, s) = (0.0, 0.4, 0.3, 0.2);
        let (nodes, weights) = gauss_legendre_on(80, -4.0, 4.0);
        let conv: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(z, w)| {
                let a = transition_density(&cfg(&[y]), &cfg(&[*z]), t, &par, &quad)
                    .unwrap()
                    .value;
                let b = transition_density(&cfg(&[*z]), &cfg(&[x]), s, &par, &quad)
                    .unwrap()
                    .value;
                w * a * b
            })
            .sum();
        let direct = transition_density(&cfg(&[y]), &cfg(&[x]), t + s, &par, &quad)
            .unwrap()
            .value;
        assert!(rel(conv, direct) < 1e-3);
    }

    #[test]
    fn guards() {
        let y = cfg(&[0.0, 1.0]);
        let x = cfg(&[0.0, 1.0]);
        let quad = BetheQuadrature::default();
        assert!(matches!(
            transition_density(&y, &x, 0.0, &tau(0.5), &quad),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            transition_density(
                &y,
                &x,
                1.0,
                &tau(0.5),
                &BetheQuadrature::with_abscissa(-1.0)
            ),
            Err(Error::Domain(_))
        ));
        let six = cfg(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(matches!(
            transition_density(&six, &six, 1.0, &tau(0.5), &quad),
            Err(Error::Capacity(_))
        ));
    }
}
