//! Special functions: q-Pochhammer symbol, q-exponential, complex Gamma,
//! the Gamma reflection product and the Airy function.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Default truncation tolerance for infinite q-products.
pub const QPROD_TOL: f64 = 1e-17;

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "q-products need 0 < tau < 1, got {tau}"
        )))
    }
}

/// `(a; tau)_inf = prod_{k >= 0} (1 - a tau^k)`, truncated once the tail bound
/// `|a| tau^K / (1 - tau)` falls below `tol`.
pub fn q_pochhammer_inf_tol(a: C64, tau: f64, tol: f64) -> Result<C64> {
    check_tau(tau)?;
    let bound_scale = a.norm() / (1.0 - tau);
    let mut term = a;
    let mut prod = C64::new(1.0, 0.0);
    let mut tail = bound_scale;
    while tail >= tol {
        prod *= C64::new(1.0, 0.0) - term;
        term *= tau;
        tail *= tau;
    }
    Ok(prod)
}

/// `(a; tau)_inf` at the default tolerance.
pub fn q_pochhammer_inf(a: C64, tau: f64) -> Result<C64> {
    q_pochhammer_inf_tol(a, tau, QPROD_TOL)
}

/// q-exponential `e_tau(z) = 1 / (z; tau)_inf`.
pub fn e_tau(z: C64, tau: f64) -> Result<C64> {
    check_tau(tau)?;
    // Poles sit at z = tau^{-k}; detect them before dividing.
    if z.im.abs() < 1e-300 && z.re >= 1.0 {
        let k = (z.re.ln() / -tau.ln()).round();
        if (z.re * tau.powf(k) - 1.0).abs() < 1e-13 {
            return Err(Error::Pole(format!("e_tau has a pole at z = {}", z.re)));
        }
    }
    let p = q_pochhammer_inf(z, tau)?;
    if p.norm() == 0.0 {
        return Err(Error::Pole(format!("e_tau has a pole at z = {z}")));
    }
    Ok(p.inv())
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Principal branch of `ln Gamma(z)` for `Re z >= 1/2` (Lanczos, g = 7).
fn ln_gamma_right(z: C64) -> C64 {
    let z = z - 1.0;
    let mut series = C64::new(LANCZOS[0], 0.0);
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        series += *c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + series.ln()
}

/// Complex Gamma function; reflection is used for `Re z < 1/2`.
pub fn gamma(z: C64) -> Result<C64> {
    if z.im == 0.0 && z.re <= 0.0 && z.re.fract() == 0.0 {
        return Err(Error::Pole(format!("Gamma has a pole at {}", z.re)));
    }
    if z.re < 0.5 {
        let s = (PI * z).sin();
        Ok(PI / (s * ln_gamma_right(1.0 - z).exp()))
    } else {
        Ok(ln_gamma_right(z).exp())
    }
}

/// `Gamma(-s) Gamma(1 + s) = -pi / sin(pi s)`, evaluated without overflow
/// for large `|Im s|`.
pub fn gamma_product(s: C64) -> Result<C64> {
    if s.im == 0.0 && s.re.fract() == 0.0 {
        return Err(Error::Pole(format!(
            "Gamma(-s)Gamma(1+s) has a pole at s = {}",
            s.re
        )));
    }
    if s.im < 0.0 {
        return gamma_product(s.conj()).map(|v| v.conj());
    }
    // With w = exp(2 pi i s), |w| <= 1: -pi/sin(pi s) = -2 pi i e^{i pi s} / (w - 1).
    let half = (C64::i() * PI * s).exp();
    let w = half * half;
    Ok(-2.0 * PI * C64::i() * half / (w - 1.0))
}

/// Airy function `Ai(x)`.
pub fn airy(x: f64) -> f64 {
    airy_pair(x).0
}

/// `(Ai(x), Ai'(x))`.
pub fn airy_pair(x: f64) -> (f64, f64) {
    if x > 2.0 {
        airy_saddle(x)
    } else if x >= -4.0 {
        airy_series(x)
    } else {
        airy_taylor_march(x)
    }
}

/// Maclaurin series `Ai = c1 f - c2 g`.
fn airy_series(x: f64) -> (f64, f64) {
    let c1 = 0.355_028_053_887_817_24;
    let c2 = 0.258_819_403_792_806_8;
    let x3 = x * x * x;
    // f = sum f_k, f_k = f_{k-1} x^3 / ((3k-1)(3k)); g analogous with (3k)(3k+1).
    let (mut f, mut fp, mut g, mut gp) = (1.0, 0.0, x, 1.0);
    let (mut tf, mut tg) = (1.0, x);
    let mut k = 1.0;
    loop {
        tf *= x3 / ((3.0 * k - 1.0) * (3.0 * k));
        tg *= x3 / ((3.0 * k) * (3.0 * k + 1.0));
        f += tf;
        g += tg;
        // Derivative terms: d/dx x^m = m x^{m-1}.
        if x != 0.0 {
            fp += tf * 3.0 * k / x;
            gp += tg * (3.0 * k + 1.0) / x;
        }
        if tf.abs() < 1e-18 * f.abs().max(1.0) && tg.abs() < 1e-18 * g.abs().max(1.0) && k > 3.0 {
            break;
        }
        k += 1.0;
    }
    (c1 * f - c2 * g, c1 * fp - c2 * gp)
}

/// Steepest-descent representation for positive `x`:
/// `Ai(x) = e^{-zeta}/(2 pi) int exp(-sqrt(x) u^2 + i u^3/3) du`,
/// `zeta = 2 x^{3/2} / 3`, summed by the trapezoid rule.
fn airy_saddle(x: f64) -> (f64, f64) {
    let rx = x.sqrt();
    let zeta = 2.0 / 3.0 * x * rx;
    let h = 0.04;
    let u_max = (42.0 / rx).sqrt();
    let n = (u_max / h).ceil() as usize;
    let (mut s0, mut s1) = (0.5, -0.5 * rx);
    for k in 1..=n {
        let u = k as f64 * h;
        let gauss = (-rx * u * u).exp();
        let (sn, cs) = (u * u * u / 3.0).sin_cos();
        s0 += gauss * cs;
        s1 += gauss * (-rx * cs - u * sn);
    }
    let scale = 2.0 * h * (-zeta).exp() / (2.0 * PI);
    (scale * s0, scale * s1)
}

/// Integrates `y'' = x y` leftwards from `x = -4` with local Taylor series.
fn airy_taylor_march(x: f64) -> (f64, f64) {
    let start = -4.0;
    let (mut y, mut yp) = airy_series(start);
    let steps = ((start - x) / 0.25).ceil() as usize;
    let h = (x - start) / steps as f64;
    let mut x0 = start;
    for _ in 0..steps {
        let (ny, nyp) = taylor_step(x0, y, yp, h);
        y = ny;
        yp = nyp;
        x0 += h;
    }
    (y, yp)
}

/// One Taylor step of `y'' = x y` from `x0` to `x0 + h`.
fn taylor_step(x0: f64, y: f64, yp: f64, h: f64) -> (f64, f64) {
    // a_{k+2} (k+2)(k+1) = x0 a_k + a_{k-1}
    let mut a = [0.0f64; 48];
    a[0] = y;
    a[1] = yp;
    a[2] = x0 * y / 2.0;
    for k in 1..46 {
        a[k + 2] = (x0 * a[k] + a[k - 1]) / ((k + 2) as f64 * (k + 1) as f64);
    }
    let (mut v, mut d) = (0.0, 0.0);
    for k in (0..48).rev() {
        v = v * h + a[k];
    }
    for k in (1..48).rev() {
        d = d * h + k as f64 * a[k];
    }
    (v, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn q_pochhammer_trivial_values() {
        assert_eq!(q_pochhammer_inf(c(0.0, 0.0), 0.3).unwrap(), c(1.0, 0.0));
        assert_eq!(q_pochhammer_inf(c(1.0, 0.0), 0.3).unwrap(), c(0.0, 0.0));
        assert!(q_pochhammer_inf(c(0.5, 0.0), 1.0).is_err());
        assert!(q_pochhammer_inf(c(0.5, 0.0), 0.0).is_err());
    }

    #[test]
    fn q_pochhammer_half_half_two_orders() {
        let direct = q_pochhammer_inf(c(0.5, 0.0), 0.5).unwrap().re;
        // Oracle: sum of logarithms, summed smallest-first.
        let mut logs: Vec<f64> = (0..200).map(|k| (1.0 - 0.5f64.powi(k + 1)).ln()).collect();
        logs.reverse();
        let oracle = logs.iter().sum::<f64>().exp();
        assert!((direct - oracle).abs() < 1e-14, "{direct} vs {oracle}");
        assert!((direct - 0.288_788_095_086_602_4).abs() < 1e-14);
    }

    #[test]
    fn e_tau_values() {
        assert_eq!(e_tau(c(0.0, 0.0), 0.4).unwrap(), c(1.0, 0.0));
        let v = e_tau(c(0.3, 0.0), 1e-3).unwrap().re;
        assert!((v * (1.0 - 0.3) - 1.0).abs() < 1e-2);
        assert!(matches!(e_tau(c(4.0, 0.0), 0.5), Err(Error::Pole(_))));
        assert!(matches!(e_tau(c(1.0, 0.0), 0.5), Err(Error::Pole(_))));
    }

    #[test]
    fn gamma_known_values() {
        assert!((gamma(c(5.0, 0.0)).unwrap().re - 24.0).abs() < 1e-12);
        assert!((gamma(c(0.5, 0.0)).unwrap().re - PI.sqrt()).abs() < 1e-14);
        assert!((gamma(c(-0.5, 0.0)).unwrap().re + 2.0 * PI.sqrt()).abs() < 1e-13);
        // |Gamma(i y)|^2 = pi / (y sinh(pi y)).
        let y = 1.3;
        let g = gamma(c(0.0, y)).unwrap();
        assert!((g.norm_sqr() - PI / (y * (PI * y).sinh())).abs() < 1e-13);
        assert!(gamma(c(-2.0, 0.0)).is_err());
    }

    #[test]
    fn gamma_product_examples() {
        assert!((gamma_product(c(0.5, 0.0)).unwrap() - c(-PI, 0.0)).norm() < 1e-14);
        let s = c(0.5, 1.0);
        let direct = gamma(-s).unwrap() * gamma(1.0 + s).unwrap();
        assert!((gamma_product(s).unwrap() - direct).norm() < 1e-10 * direct.norm());
        let r =
            gamma_product(c(0.3, 6.0)).unwrap().norm() / gamma_product(c(0.3, 5.0)).unwrap().norm();
        assert!((r / (-PI).exp() - 1.0).abs() < 0.01);
        assert!(gamma_product(c(3.0, 0.0)).is_err());
        // No overflow far up the imaginary axis.
        assert!(gamma_product(c(0.5, 300.0)).unwrap().norm() < 1e-300);
    }

    #[test]
    fn airy_at_zero() {
        let want = 3f64.powf(-2.0 / 3.0) / libm::tgamma(2.0 / 3.0);
        assert!((airy(0.0) - want).abs() < 1e-15);
    }

    #[test]
    fn airy_ode_by_finite_differences() {
        for &x in &[-2.0, 0.0, 2.0, 2.5, -5.0, 6.0] {
            let h = 1e-3;
            let d2 = (airy(x + h) - 2.0 * airy(x) + airy(x - h)) / (h * h);
            assert!((d2 - x * airy(x)).abs() < 1e-6, "x = {x}");
        }
    }

    /// Independent oracle: `Ai(x) = (1/pi) int_0^inf cos(t^3/3 + x t) dt`,
    /// computed on the rotated ray `t = r e^{i pi/6}` where the integrand of
    /// `exp(i(t^3/3 + x t))` decays like `exp(-r^3/3)`.
    fn airy_ray_quadrature(x: f64) -> f64 {
        let dir = C64::from_polar(1.0, PI / 6.0);
        let n = 20_000;
        let r_max = 8.0;
        let h = r_max / n as f64;
        let f = |r: f64| {
            let t = dir * r;
            (C64::i() * (t * t * t / 3.0 + x * t)).exp() * dir
        };
        // Simpson rule.
        let mut acc = f(0.0) + f(r_max);
        for k in 1..n {
            acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        // Ai(x) = Re(int_0^inf exp(i(...)) dt) / pi on the deformed path.
        (acc * h / 3.0).re / PI
    }

    #[test]
    fn airy_matches_independent_quadrature() {
        for &x in &[1.0, -1.5, 3.0, -6.5, -9.7, 7.5] {
            let want = airy_ray_quadrature(x);
            assert!(
                (airy(x) - want).abs() < 1e-12,
                "Ai({x}) = {} vs {want}",
                airy(x)
            );
        }
    }

    #[test]
    fn airy_branches_agree_at_switch_points() {
        for &(x, a, b) in &[
            (2.0, airy_series(2.0), airy_saddle(2.0)),
            (4.0, airy_series(4.0), airy_saddle(4.0)),
        ] {
            assert!((a.0 - b.0).abs() < 1e-13, "Ai at {x}");
            assert!((a.1 - b.1).abs() < 1e-13, "Ai' at {x}");
        }
        let (a, b) = (airy_series(-4.0), airy_taylor_march(-4.0 - 1e-9));
        assert!((a.0 - b.0).abs() < 1e-8);
    }

    #[test]
    fn airy_qualitative_shape() {
        let mut last = airy(1.0);
        for k in 1..=90 {
            let v = airy(1.0 + k as f64 * 0.1);
            assert!(v < last && v > 0.0);
            last = v;
        }
        // The first six zeros of Ai lie in [-10, -1]; the seventh is near -10.04.
        let grid: Vec<f64> = (0..=9000).map(|k| -10.0 + k as f64 * 1e-3).collect();
        let changes = grid
            .windows(2)
            .filter(|w| airy(w[0]).signum() != airy(w[1]).signum())
            .count();
        assert_eq!(changes, 6);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn functional_equation(re in -2.0f64..2.0, im in -2.0f64..2.0, tau in 0.05f64..0.95) {
                let a = c(re, im);
                let lhs = q_pochhammer_inf(a, tau).unwrap();
                let rhs = (1.0 - a) * q_pochhammer_inf(a * tau, tau).unwrap();
                prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + lhs.norm()));
            }

            #[test]
            fn e_tau_inverts_product(re in -3.0f64..0.9, im in -2.0f64..2.0, tau in 0.05f64..0.95) {
                let z = c(re, im);
                let prod = e_tau(z, tau).unwrap() * q_pochhammer_inf(z, tau).unwrap();
                prop_assert!((prod - 1.0).norm() < 1e-12);
            }

            #[test]
            fn gamma_product_schwarz(re in -3.0f64..3.0, im in 0.01f64..8.0) {
                let s = c(re, im);
                let a = gamma_product(s).unwrap();
                let b = gamma_product(s.conj()).unwrap();
                prop_assert!((a - b.conj()).norm() <= 1e-14 * a.norm());
            }

            #[test]
            fn gamma_reflection(re in -3.0f64..3.0, im in 0.05f64..4.0) {
                let z = c(re, im);
                let lhs = gamma(z).unwrap() * gamma(1.0 - z).unwrap();
                let rhs = PI / (PI * z).sin();
                prop_assert!((lhs - rhs).norm() < 1e-12 * rhs.norm());
            }
        }
    }
}
