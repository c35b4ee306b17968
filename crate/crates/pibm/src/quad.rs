//! Quadrature rules: Gauss-Legendre, trapezoid rules on vertical lines,
//! graded panels, and discretized complex contours.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|t| mid + half * t).collect(),
        w.iter().map(|v| v * half).collect(),
    )
}

/// Composite Gauss-Legendre rule on `[0, end]` with panels that double in
/// length from `first` onwards; each panel carries `per_panel` nodes.
pub fn graded_half_line(first: f64, end: f64, per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(per_panel);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut lo = 0.0;
    let mut len = first.min(end);
    while lo < end {
        let hi = (lo + len).min(end);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (t, v) in x.iter().zip(&w) {
            nodes.push(mid + half * t);
            weights.push(v * half);
        }
        lo = hi;
        len = lo;
    }
    (nodes, weights)
}

/// Composite Gauss-Legendre rule on `[0, end]` whose panel lengths start at
/// `first`, grow by at most `ratio` per panel and never exceed `max_len(s)`
/// at the panel start `s`.
pub fn graded_panels<M: Fn(f64) -> f64>(
    first: f64,
    end: f64,
    ratio: f64,
    max_len: M,
    per_panel: usize,
) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(per_panel);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut lo = 0.0;
    let mut len = first.min(end);
    while lo < end {
        len = len.min(max_len(lo)).max(1e-300);
        let hi = (lo + len).min(end);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (t, v) in x.iter().zip(&w) {
            nodes.push(mid + half * t);
            weights.push(v * half);
        }
        lo = hi;
        len *= ratio;
    }
    (nodes, weights)
}

/// A quadrature value with its imaginary residual and grid size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub imag_residual: f64,
    pub nodes_per_axis: usize,
}

/// A discretized contour: `sum_k weights[k] f(nodes[k])` approximates
/// `(2 pi i)^{-1} int f(z) dz` along the contour's orientation.
#[derive(Debug, Clone)]
pub struct Contour {
    pub nodes: Vec<C64>,
    pub weights: Vec<C64>,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to `f`.
    pub fn integrate<F: FnMut(C64) -> C64>(&self, mut f: F) -> C64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(*z))
            .sum()
    }

    /// Builds a contour from a parametrization `z(s)` with derivative `dz(s)`
    /// and a real rule `(s_k, v_k)`.
    pub fn from_parametrization<Z, D>(params: &[f64], param_weights: &[f64], z: Z, dz: D) -> Self
    where
        Z: Fn(f64) -> C64,
        D: Fn(f64) -> C64,
    {
        let scale = C64::new(0.0, -1.0 / (2.0 * PI));
        let nodes = params.iter().map(|&s| z(s)).collect();
        let weights = params
            .iter()
            .zip(param_weights)
            .map(|(&s, &v)| dz(s) * v * scale)
            .collect();
        Self { nodes, weights }
    }
}

/// Upward vertical line `Re z = a`, trapezoid rule with spacing `h` on
/// `|Im z| <= phi_max`. The `1/(2 pi i)` prefactor is folded into the weights,
/// which are then the positive reals `h / (2 pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalLine {
    pub abscissa: f64,
    pub phi_max: f64,
    pub spacing: f64,
}

impl VerticalLine {
    pub fn node_count(&self) -> usize {
        2 * (self.phi_max / self.spacing).ceil() as usize + 1
    }

    pub fn contour(&self) -> Contour {
        let half = (self.phi_max / self.spacing).ceil() as i64;
        let w = self.spacing / (2.0 * PI);
        let nodes = (-half..=half)
            .map(|k| C64::new(self.abscissa, k as f64 * self.spacing))
            .collect();
        Contour {
            nodes,
            weights: vec![C64::new(w, 0.0); (2 * half + 1) as usize],
        }
    }
}
