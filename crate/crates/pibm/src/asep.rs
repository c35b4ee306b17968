//! Continuous-time asymmetric simple exclusion on Z, diffusive rescaling into
//! the moving frame, and the lattice duality check.
//!
//! A state stores its own jump rates: right with rate `p`, left with rate
//! `q`. Dual particles use the swapped rates, so the moving frame of any
//! state travels with velocity `right - left` and the same rescaling routine
//! serves both processes.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{duality_h, Chamber, Config, DualityCheck, ModelParams};
use crate::rng::{map_paths, PathRng};
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsepState {
    sites: Vec<i64>,
    /// `p` is the right jump rate, `q` the left jump rate.
    pub params: ModelParams,
    pub time: f64,
}

impl AsepState {
    /// State at time 0; `sites` must be strictly increasing.
    pub fn new(sites: Vec<i64>, params: ModelParams) -> Result<Self> {
        if sites.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "ASEP sites must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            sites,
            params,
            time: 0.0,
        })
    }

    pub fn sites(&self) -> &[i64] {
        &self.sites
    }

    /// Frame displacement `trunc((right - left) * time)`.
    pub fn frame_shift(&self) -> i64 {
        ((self.params.p() - self.params.q()) * self.time).trunc() as i64
    }
}

/// Runs the exclusion dynamics for an additional time `t_end`.
///
/// Attempts arrive at total rate `m (p + q)`; each picks a particle uniformly
/// and a direction with probabilities `p`, `q`, and is rejected if the
/// target site is occupied. Only the terminal state is needed, so the number
/// of attempts is drawn at once from its Poisson law.
pub fn simulate_asep(initial: &AsepState, t_end: f64, rng: &mut PathRng) -> Result<AsepState> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "t_end = {t_end} must be nonnegative"
        )));
    }
    let mut state = initial.clone();
    let m = state.sites.len();
    if m == 0 || t_end == 0.0 {
        state.time += t_end;
        return Ok(state);
    }
    let p = state.params.p();
    let attempts = rng.poisson(m as f64 * t_end);
    let sites = &mut state.sites;
    for _ in 0..attempts {
        let j = ((rng.uniform() * m as f64) as usize).min(m - 1);
        if rng.uniform() < p {
            if j + 1 == m || sites[j + 1] > sites[j] + 1 {
                sites[j] += 1;
            }
        } else if j == 0 || sites[j - 1] < sites[j] - 1 {
            sites[j] -= 1;
        }
    }
    state.time += t_end;
    Ok(state)
}

/// Rescaled positions `eps * (w_j - shift)` in increasing order, where the
/// shift is the integer part of the frame displacement at `state.time`.
pub fn rescale_diffusive(state: &AsepState, epsilon: f64) -> Result<Config> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    let shift = state.frame_shift();
    let positions = state
        .sites
        .iter()
        .map(|&w| epsilon * (w - shift) as f64)
        .collect();
    Config::from_ordered(positions, Chamber::Increasing)
}

fn lattice_sites(config: &Config, epsilon: f64) -> Result<Vec<i64>> {
    let mut sites = Vec::with_capacity(config.len());
    for &v in config.positions() {
        let k = (v / epsilon).round();
        if (v / epsilon - k).abs() > 1e-9 * (1.0 + k.abs()) {
            return Err(Error::InvalidInput(format!(
                "{v} is not on the lattice of spacing {epsilon}"
            )));
        }
        sites.push(k as i64);
    }
    if sites.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput(
            "lattice configuration violates exclusion".into(),
        ));
    }
    Ok(sites)
}

/// Estimates both sides of the lattice duality at macroscopic time `t`.
///
/// `x0` (decreasing) and `y0` (increasing) must lie on `epsilon Z`. Dual
/// particles jump right with rate `q` and left with rate `p`; each side is
/// read in its own moving frame. Dual runs use streams `0..n` and primal runs
/// streams `n..2n` of `seed`.
pub fn asep_duality_check(
    x0: &Config,
    y0: &Config,
    params: &ModelParams,
    t: f64,
    epsilon: f64,
    n_samples: usize,
    seed: u64,
) -> Result<DualityCheck> {
    x0.expect(Chamber::Decreasing, "x0")?;
    y0.expect(Chamber::Increasing, "y0")?;
    params.require_analytic()?;
    if !(epsilon > 0.0) || !(t >= 0.0) || n_samples < 2 {
        return Err(Error::InvalidInput(
            "need epsilon > 0, t >= 0 and at least two samples".into(),
        ));
    }
    let micro_time = t / (epsilon * epsilon);
    let mut dual_sites = lattice_sites(x0, epsilon)?;
    dual_sites.reverse();
    let dual = AsepState::new(dual_sites, params.swapped())?;
    let primal = AsepState::new(lattice_sites(y0, epsilon)?, *params)?;

    let runs = map_paths(2 * n_samples, seed, |i, rng| -> Result<f64> {
        if i < n_samples {
            let end = simulate_asep(&dual, micro_time, rng)?;
            let x = rescale_diffusive(&end, epsilon)?;
            let mut xs = x.into_positions();
            xs.reverse();
            duality_h(&Config::from_ordered(xs, Chamber::Decreasing)?, y0, params)
        } else {
            let end = simulate_asep(&primal, micro_time, rng)?;
            duality_h(x0, &rescale_diffusive(&end, epsilon)?, params)
        }
    });
    let values = runs.into_iter().collect::<Result<Vec<f64>>>()?;
    let lhs = Estimate::from_samples(&values[..n_samples]);
    let rhs = Estimate::from_samples(&values[n_samples..]);
    Ok(DualityCheck {
        lhs,
        rhs,
        combined_stderr: lhs.combined_stderr(&rhs),
    })
}

/// Applies the exclusion generator with the state's rates to `f` at `sites`.
pub fn generator_action(sites: &[i64], params: &ModelParams, f: impl Fn(&[i64]) -> f64) -> f64 {
    let occupied: HashSet<i64> = sites.iter().copied().collect();
    let base = f(sites);
    let mut total = 0.0;
    let mut moved = sites.to_vec();
    for j in 0..sites.len() {
        for (step, rate) in [(1i64, params.p()), (-1i64, params.q())] {
            let target = sites[j] + step;
            if !occupied.contains(&target) {
                moved[j] = target;
                total += rate * (f(&moved) - base);
                moved[j] = sites[j];
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::duality_exponent;
    use crate::rng::seed_stream;
    use crate::stats::{ks_two_sample, Estimate};

    fn params(tau: f64) -> ModelParams {
        ModelParams::from_tau(tau).unwrap()
    }

    #[test]
    fn single_particle_drift() {
        let par = ModelParams::from_p(0.7).unwrap();
        let start = AsepState::new(vec![0], par).unwrap();
        let t = 3.0;
        let disp: Vec<f64> = map_paths(100_000, 1, |_, rng| {
            simulate_asep(&start, t, rng).unwrap().sites()[0] as f64
        });
        let e = Estimate::from_samples(&disp);
        assert!((e.mean - (0.7 - 0.3) * t).abs() < 4.0 * e.stderr);
        assert!((e.variance - t).abs() < 0.05 * t);
    }

    #[test]
    fn totally_asymmetric_moves_one_way() {
        let par = ModelParams::from_p(0.0).unwrap();
        let mut state = AsepState::new(vec![0, 3, 4, 9], par).unwrap();
        let mut rng = seed_stream(5, 0);
        for _ in 0..200 {
            let next = simulate_asep(&state, 0.05, &mut rng).unwrap();
            assert!(next.sites().iter().zip(state.sites()).all(|(a, b)| a <= b));
            assert!(next.sites().windows(2).all(|w| w[0] < w[1]));
            state = next;
        }
    }

    #[test]
    fn exclusion_holds_for_adjacent_pair() {
        let par = ModelParams::from_p(1.0).unwrap();
        let mut state = AsepState::new(vec![0, 1], par).unwrap();
        let mut rng = seed_stream(6, 0);
        for _ in 0..1000 {
            state = simulate_asep(&state, 0.01, &mut rng).unwrap();
            assert!(state.sites()[0] < state.sites()[1]);
        }
        assert!(AsepState::new(vec![2, 2], par).is_err());
    }

    #[test]
    fn rescaling_at_time_zero_and_symmetric_frame() {
        let state = AsepState::new(vec![-3, 4], params(0.5)).unwrap();
        assert_eq!(
            rescale_diffusive(&state, 0.1).unwrap().positions(),
            &[-0.30000000000000004, 0.4]
        );
        let sym = AsepState {
            time: 123.4,
            ..AsepState::new(vec![1], ModelParams::from_p(0.5).unwrap()).unwrap()
        };
        assert_eq!(sym.frame_shift(), 0);
        let drifting = AsepState {
            time: 10.0,
            ..state
        };
        assert_eq!(drifting.frame_shift(), -3);
    }

    #[test]
    fn chained_runs_match_single_run() {
        let start = AsepState::new(vec![0, 2, 3], params(0.5)).unwrap();
        let one: Vec<f64> = map_paths(10_000, 10, |_, rng| {
            simulate_asep(&start, 4.0, rng).unwrap().sites()[1] as f64
        });
        let two: Vec<f64> = map_paths(10_000, 11, |_, rng| {
            let mid = simulate_asep(&start, 2.0, rng).unwrap();
            simulate_asep(&mid, 2.0, rng).unwrap().sites()[1] as f64
        });
        let (mut a, mut b) = (one, two);
        // Integer-valued samples: compare CDFs through the two-sample distance.
        assert!(ks_two_sample(&mut a, &mut b) < 0.03);
    }

    #[test]
    fn duality_is_exact_at_time_zero() {
        let x0 = Config::decreasing(vec![2.0, 0.0]).unwrap();
        let y0 = Config::increasing(vec![-1.0, 1.0]).unwrap();
        let check = asep_duality_check(&x0, &y0, &params(0.5), 0.0, 1.0, 10, 0).unwrap();
        let h = duality_h(&x0, &y0, &params(0.5)).unwrap();
        assert!((check.lhs.mean - h).abs() < 1e-15);
        assert!((check.rhs.mean - h).abs() < 1e-15);
        assert!(check.lhs.variance < 1e-30);
    }

    #[test]
    fn duality_translation_invariance() {
        let x = Config::decreasing(vec![3.0, 0.5, -1.0]).unwrap();
        let y = Config::increasing(vec![-2.0, 0.5, 1.0, 4.0]).unwrap();
        let shift = |c: &Config, s: f64| {
            Config::new(c.positions().iter().map(|v| v + s).collect(), c.chamber()).unwrap()
        };
        for s in [-3.0, 0.25, 7.0] {
            assert_eq!(
                duality_exponent(&x, &y).unwrap(),
                duality_exponent(&shift(&x, s), &shift(&y, s)).unwrap()
            );
        }
    }

    #[test]
    fn generator_intertwines_duality_function() {
        // Exact oracle for lattice duality: L_primal H(x, .)(y) = L_dual H(., y)(x).
        let par = params(0.4);
        let tau = par.tau();
        let h = |x: &[i64], y: &[i64]| {
            let count: usize = x
                .iter()
                .map(|&a| y.iter().filter(|&&b| b < a).count())
                .sum();
            tau.powi(count as i32)
        };
        let sets = |n: usize| -> Vec<Vec<i64>> {
            let mut out = Vec::new();
            let range: Vec<i64> = (-3..=3).collect();
            let mut stack = vec![(Vec::new(), 0usize)];
            while let Some((cur, start)) = stack.pop() {
                if cur.len() == n {
                    out.push(cur);
                    continue;
                }
                for k in start..range.len() {
                    let mut next = cur.clone();
                    next.push(range[k]);
                    stack.push((next, k + 1));
                }
            }
            out
        };
        for n in 1..=2 {
            for m in 1..=3 {
                for x in sets(n) {
                    for y in sets(m) {
                        let lhs = generator_action(&y, &par, |yy| h(&x, yy));
                        let rhs = generator_action(&x, &par.swapped(), |xx| h(xx, &y));
                        assert!(
                            (lhs - rhs).abs() < 1e-12,
                            "x = {x:?}, y = {y:?}: {lhs} vs {rhs}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn lattice_duality_monte_carlo() {
        let x0 = Config::decreasing(vec![1.0]).unwrap();
        let y0 = Config::increasing(vec![0.0]).unwrap();
        let check = asep_duality_check(&x0, &y0, &params(0.5), 1.0, 1.0, 100_000, 3).unwrap();
        assert!(
            check.discrepancy() <= 3.0 * check.combined_stderr,
            "{check:?}"
        );
    }

    #[test]
    fn rejects_off_lattice_data() {
        let x0 = Config::decreasing(vec![0.15]).unwrap();
        let y0 = Config::increasing(vec![0.0]).unwrap();
        assert!(asep_duality_check(&x0, &y0, &params(0.5), 1.0, 0.1, 10, 0).is_err());
    }
}
