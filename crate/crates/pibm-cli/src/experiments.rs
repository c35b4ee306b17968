//! One runner per operation. Each returns its tables, checks and summary.

use num_complex::Complex64 as C64;
use pibm::asep::asep_duality_check;
use pibm::asymptotics::{self, Clock, MacroProfile, ScalingExperiment};
use pibm::bethe::{
    cdf_last, normalization, transition_density, transition_determinant, transition_permanent,
    BetheQuadrature,
};
use pibm::error::{Error, Result};
use pibm::fredholm::{
    airy_argument, det_cubic_kernel, det_mellin_barnes, det_moment_kernel, mc_q_laplace,
    tw_goe_cdf, tw_gue_cdf, ContourC0, QLaplace, RayContours, Refinement,
};
use pibm::genfun::{f_n_contour, mc_generating_moment, McOptions, NestedContours};
use pibm::model::{Config, DualityCheck, ModelParams};
use pibm::rng::seed_stream;
use pibm::sde::{
    duality_check, simulate_dual, simulate_oblique, simulate_potential, PotentialSpec, Scheme,
    SimSpec,
};

use crate::config::{
    ExperimentConfig, KernelChoice, Operation, ProfileChoice, SchemeChoice, TransitionCheck, TwDist,
};
use crate::output::{Cell, Check, Outcome, Table};

/// Monte Carlo agreement threshold in combined standard errors.
const MC_SIGMAS: f64 = 3.0;

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.paths == 0 {
        return Err(Error::InvalidInput("--paths must be positive".into()));
    }
    match &cfg.operation {
        Operation::Simulate {
            tau,
            positions,
            t,
            scheme,
            epsilon,
        } => simulate(cfg, *tau, positions, *t, *scheme, *epsilon),
        Operation::Asep {
            tau,
            x,
            y,
            t,
            epsilon,
        } => {
            let params = ModelParams::from_tau(*tau)?;
            let check = asep_duality_check(
                &Config::decreasing(x.clone())?,
                &Config::increasing(y.clone())?,
                &params,
                *t,
                *epsilon,
                cfg.paths,
                cfg.seed,
            )?;
            Ok(duality_outcome(cfg, check))
        }
        Operation::DualityCheck { tau, x, y, t } => {
            let spec = sim_spec(cfg, ModelParams::from_tau(*tau)?, *t);
            let check = duality_check(
                &spec,
                &Config::decreasing(x.clone())?,
                &Config::increasing(y.clone())?,
            )?;
            Ok(duality_outcome(cfg, check))
        }
        Operation::Genfun { tau, x, t, mc } => genfun(cfg, *tau, x, *t, *mc),
        Operation::Transition { n, t, tau, check } => transition(cfg, *n, *t, *tau, *check),
        Operation::Fredholm {
            kernel,
            tau,
            u,
            t,
            zeta,
            a,
            grid,
            dist,
        } => match kernel {
            KernelChoice::Tw => tracy_widom(&grid.points(), *dist),
            KernelChoice::Kr => cubic(cfg, *a, &grid.points()),
            _ => q_laplace(cfg, *kernel, *tau, *u, *t, zeta),
        },
        Operation::Scaling {
            tau,
            a,
            t,
            particles,
        } => scaling(cfg, *tau, *a, *t, *particles),
        Operation::Constants {
            tau,
            profile,
            slope,
            t,
        } => constants(*tau, *profile, *slope, *t),
    }
}

fn sim_spec(cfg: &ExperimentConfig, params: ModelParams, t: f64) -> SimSpec {
    let spec = SimSpec::oblique(params, t, cfg.paths, cfg.seed);
    match cfg.dt {
        Some(dt) => spec.with_dt(dt),
        None => spec,
    }
}

fn simulate(
    cfg: &ExperimentConfig,
    tau: f64,
    positions: &[f64],
    t: f64,
    scheme: SchemeChoice,
    epsilon: Option<f64>,
) -> Result<Outcome> {
    let params = ModelParams::from_tau(tau)?;
    let spec = sim_spec(cfg, params, t);
    let ends = match scheme {
        SchemeChoice::Oblique => simulate_oblique(&spec, &Config::increasing(positions.to_vec())?)?,
        SchemeChoice::Dual => simulate_dual(&spec, &Config::decreasing(positions.to_vec())?)?,
        SchemeChoice::Potential => {
            let eps = epsilon.ok_or_else(|| {
                Error::InvalidInput("the potential scheme needs --epsilon".into())
            })?;
            let spec = spec.with_scheme(Scheme::Potential(PotentialSpec::new(eps)?));
            simulate_potential(&spec, &Config::increasing(positions.to_vec())?)?
        }
    };
    let mut table = Table::new("positions.csv", &["path", "index", "position"]);
    for (path, c) in ends.iter().enumerate() {
        for (i, &x) in c.positions().iter().enumerate() {
            table.push(vec![path.into(), i.into(), x.into()]);
        }
    }
    let mut out = Outcome::default();
    for i in 0..positions.len() {
        let mean = ends.iter().map(|c| c.positions()[i]).sum::<f64>() / ends.len() as f64;
        out.note(&format!("mean_position_{i}"), mean);
    }
    out.tables.push(table);
    Ok(out)
}

fn duality_outcome(cfg: &ExperimentConfig, check: DualityCheck) -> Outcome {
    let mut out = Outcome::default();
    let ratio = check.lhs.z_score(&check.rhs);
    out.checks.push(Check::at_most(
        "|lhs - rhs| / combined stderr",
        ratio,
        cfg.tol.unwrap_or(MC_SIGMAS),
    ));
    let mut table = Table::new("duality.csv", &["side", "mean", "stderr", "samples"]);
    for (side, e) in [("lhs", check.lhs), ("rhs", check.rhs)] {
        table.push(vec![
            side.into(),
            e.mean.into(),
            e.stderr.into(),
            e.n.into(),
        ]);
    }
    out.note("lhs", check.lhs.mean);
    out.note("rhs", check.rhs.mean);
    out.note("combined_stderr", check.combined_stderr);
    out.tables.push(table);
    out
}

fn genfun(cfg: &ExperimentConfig, tau: f64, x: &[f64], t: f64, mc: bool) -> Result<Outcome> {
    let params = ModelParams::from_tau(tau)?;
    let x = Config::decreasing(x.to_vec())?;
    let mut contours = NestedContours::default_for(x.len(), &params)?;
    if let Some(tol) = cfg.tol {
        contours = contours.with_tol(tol);
    }
    let exact = f_n_contour(&x, t, &params, &contours)?;
    let mut out = Outcome::default();
    let mut table = Table::new("genfun.csv", &["estimator", "value", "stderr"]);
    table.push(vec!["contour".into(), exact.value.into(), 0.0.into()]);
    out.note("contour", exact.value);
    out.note("imag_residual", exact.imag_residual);
    if mc {
        let mut opts = McOptions::new(cfg.paths, cfg.seed);
        if let Some(dt) = cfg.dt {
            opts = opts.with_dt(dt);
        }
        let m = mc_generating_moment(&x, t, &params, &opts)?;
        for (name, e) in [("dual", m.dual), ("poisson", m.poisson)] {
            table.push(vec![name.into(), e.mean.into(), e.stderr.into()]);
            out.checks.push(Check::at_most(
                format!("|contour - {name}| / stderr"),
                sigmas(e.mean - exact.value, e.stderr),
                MC_SIGMAS,
            ));
        }
    }
    out.tables.push(table);
    Ok(out)
}

/// `|diff| / stderr`, with an exact zero difference counting as agreement.
fn sigmas(diff: f64, stderr: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff.abs() / stderr
    }
}

fn random_config(n: usize, seed: u64, index: u64) -> Result<Config> {
    let mut rng = seed_stream(seed, index);
    let mut xs: Vec<f64> = (0..n).map(|_| 2.0 * rng.uniform() - 1.0).collect();
    xs.sort_by(f64::total_cmp);
    Config::increasing(xs)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn transition(
    cfg: &ExperimentConfig,
    n: usize,
    t: f64,
    tau: f64,
    which: TransitionCheck,
) -> Result<Outcome> {
    if n == 0 {
        return Err(Error::InvalidInput("--n must be positive".into()));
    }
    let quad = BetheQuadrature::default();
    let tol = cfg.tol.unwrap_or(1e-8);
    let mut out = Outcome::default();
    let mut table = Table::new("transition.csv", &["check", "case", "bethe", "reference"]);
    let cases = 3u64;
    let wants = |c: TransitionCheck| which == TransitionCheck::All || which == c;
    if wants(TransitionCheck::Permanent) {
        let mut worst = 0.0f64;
        for k in 0..cases {
            let (y, x) = (
                random_config(n, cfg.seed, 2 * k)?,
                random_config(n, cfg.seed, 2 * k + 1)?,
            );
            let q = transition_density(&y, &x, t, &ModelParams::from_tau(1.0)?, &quad)?.value;
            let r = transition_permanent(&y, &x, t)?;
            worst = worst.max(relative(q, r));
            table.push(vec![
                "permanent".into(),
                (k as usize).into(),
                q.into(),
                r.into(),
            ]);
        }
        out.checks
            .push(Check::at_most("permanent relative error", worst, tol));
    }
    if wants(TransitionCheck::Determinant) {
        let mut worst = 0.0f64;
        for k in 0..cases {
            let (y, x) = (
                random_config(n, cfg.seed, 100 + 2 * k)?,
                random_config(n, cfg.seed, 101 + 2 * k)?,
            );
            let q = transition_density(&y, &x, t, &ModelParams::from_p(0.0)?, &quad)?.value;
            let r = transition_determinant(&y, &x, t, &quad)?;
            worst = worst.max(relative(q, r));
            table.push(vec![
                "determinant".into(),
                (k as usize).into(),
                q.into(),
                r.into(),
            ]);
        }
        out.checks
            .push(Check::at_most("determinant relative error", worst, tol));
    }
    if wants(TransitionCheck::Normalization) {
        let params = ModelParams::from_tau(tau)?;
        let y = random_config(n, cfg.seed, 200)?;
        let top = y.positions()[n - 1];
        let far = cdf_last(top + 8.0 * t.sqrt(), &y, t, &params, &quad)?.value;
        table.push(vec![
            "cdf-last-far".into(),
            0usize.into(),
            far.into(),
            1.0.into(),
        ]);
        out.checks
            .push(Check::at_most("|g(u_large) - 1|", (far - 1.0).abs(), 1e-3));
        let mut previous = f64::NEG_INFINITY;
        let mut drop = 0.0f64;
        for k in 0..=24 {
            let u = y.positions()[0] - 4.0 * t.sqrt()
                + k as f64 * (top - y.positions()[0] + 8.0 * t.sqrt()) / 24.0;
            let g = cdf_last(u, &y, t, &params, &quad)?.value;
            drop = drop.max(previous - g);
            previous = g;
            table.push(vec!["cdf-last-grid".into(), k.into(), g.into(), u.into()]);
        }
        out.checks.push(Check::at_most(
            "largest decrease of g on the grid",
            drop.max(0.0),
            1e-9,
        ));
        if n <= 2 {
            let mass = normalization(&y, t, &params, &BetheQuadrature { tol: 1e-10, ..quad }, 24)?;
            table.push(vec!["mass".into(), 0usize.into(), mass.into(), 1.0.into()]);
            out.checks
                .push(Check::at_most("|total mass - 1|", (mass - 1.0).abs(), 1e-3));
        }
    }
    out.tables.push(table);
    Ok(out)
}

fn q_laplace(
    cfg: &ExperimentConfig,
    kernel: KernelChoice,
    tau: f64,
    u: f64,
    t: f64,
    zetas: &[f64],
) -> Result<Outcome> {
    let params = ModelParams::from_tau(tau)?;
    let tol = cfg.tol.unwrap_or(1e-9);
    let refine = Refinement {
        tol,
        max_doublings: 3,
    };
    let mut out = Outcome::default();
    let mut table = Table::new(
        "fredholm.csv",
        &[
            "zeta",
            "representation",
            "det_re",
            "det_im",
            "error",
            "nodes",
        ],
    );
    let mut worst_gap = 0.0f64;
    let mut values = Vec::new();
    for &z in zetas {
        let setup = QLaplace::from_rescaled_time(C64::new(z, 0.0), u, t, params)?;
        let mut reps = Vec::new();
        if matches!(kernel, KernelChoice::K | KernelChoice::Both) {
            reps.push((
                "moment",
                det_moment_kernel(&setup, &ContourC0::for_moment_kernel(&setup, tol)?, &refine)?,
            ));
        }
        if matches!(kernel, KernelChoice::KZeta | KernelChoice::Both) {
            reps.push((
                "mellin-barnes",
                det_mellin_barnes(&setup, &ContourC0::for_mellin_barnes(&setup, tol)?, &refine)?,
            ));
        }
        for (name, d) in &reps {
            table.push(vec![
                z.into(),
                (*name).into(),
                d.value.re.into(),
                d.value.im.into(),
                d.error.into(),
                d.nodes.into(),
            ]);
        }
        if let [(_, a), (_, b)] = reps.as_slice() {
            worst_gap = worst_gap.max((a.value - b.value).norm());
        }
        values.push(reps[0].1.value.re);
    }
    if kernel == KernelChoice::Both {
        out.checks.push(Check::at_most(
            "max |det(1+K) - det(1+K_zeta)|",
            worst_gap,
            1e-4,
        ));
    }
    if cfg.paths >= 2 && cfg.dt.is_some() {
        let wall = Clock::Rescaled(t).wall(params.gamma());
        let opts = McOptions::new(cfg.paths, cfg.seed).with_dt(cfg.dt.unwrap_or(1e-3));
        let estimates = mc_q_laplace(zetas, u, wall, &params, &opts)?;
        let mut mc = Table::new("q_laplace_mc.csv", &["zeta", "mean", "stderr"]);
        for ((z, e), det) in zetas.iter().zip(&estimates).zip(&values) {
            mc.push(vec![(*z).into(), e.mean.into(), e.stderr.into()]);
            out.checks.push(Check::at_most(
                format!("zeta = {z}: |det - mc| / stderr"),
                sigmas(det - e.mean, e.stderr),
                MC_SIGMAS,
            ));
        }
        out.tables.push(mc);
    }
    out.tables.push(table);
    Ok(out)
}

fn cubic(cfg: &ExperimentConfig, a: f64, grid: &[f64]) -> Result<Outcome> {
    let refine = Refinement {
        tol: cfg.tol.unwrap_or(1e-9),
        max_doublings: 3,
    };
    let mut out = Outcome::default();
    let mut table = Table::new("cubic.csv", &["r", "det_re", "det_im", "f_gue"]);
    let mut worst = 0.0f64;
    for &r in grid {
        let d = det_cubic_kernel(a, r, &RayContours::default(), &refine)?;
        let reference = tw_gue_cdf(airy_argument(a, r))?;
        worst = worst.max((d.value - reference).norm());
        table.push(vec![
            r.into(),
            d.value.re.into(),
            d.value.im.into(),
            reference.into(),
        ]);
    }
    out.checks
        .push(Check::at_most("max |det(1+K_r) - F_GUE|", worst, 1e-4));
    out.tables.push(table);
    Ok(out)
}

fn tracy_widom(grid: &[f64], dist: TwDist) -> Result<Outcome> {
    let cdf = match dist {
        TwDist::Gue => tw_gue_cdf,
        TwDist::Goe => tw_goe_cdf,
    };
    let mut table = Table::new("tracy_widom.csv", &["s", "cdf"]);
    let mut drop = 0.0f64;
    let mut previous = f64::NEG_INFINITY;
    for &s in grid {
        let f = cdf(s)?;
        drop = drop.max(previous - f);
        previous = f;
        table.push(vec![s.into(), f.into()]);
    }
    let mut out = Outcome::default();
    out.checks.push(Check::at_most(
        "largest decrease of the distribution function",
        drop.max(0.0),
        1e-12,
    ));
    if dist == TwDist::Gue {
        out.note("mean", pibm::fredholm::tw_gue_mean()?);
    }
    out.tables.push(table);
    Ok(out)
}

fn scaling(cfg: &ExperimentConfig, tau: f64, a: f64, t: f64, particles: usize) -> Result<Outcome> {
    let exp = ScalingExperiment {
        params: ModelParams::from_tau(tau)?,
        a,
        t,
        particles,
        dt: cfg.dt.unwrap_or(0.01),
        n_paths: cfg.paths,
        seed: cfg.seed,
    };
    let rep = asymptotics::run_scaling(&exp)?;
    let mut out = Outcome::default();
    out.checks.push(Check::at_least(
        "fraction within 5 t^(1/3) of the hydrodynamic count",
        rep.within_window,
        0.95,
    ));
    out.checks.push(Check::at_most(
        "lattice KS distance to F_GUE",
        rep.lattice_ks,
        cfg.tol.unwrap_or(0.08),
    ));
    out.note("hydrodynamic_count", rep.lln);
    out.note("mean_count", rep.mean_height);
    out.note("ks_continuous", rep.ks);
    let mut table = Table::new("scaling.csv", &["replica", "count", "standardized"]);
    for (i, (&h, &r)) in rep.heights.iter().zip(&rep.standardized).enumerate() {
        table.push(vec![i.into(), h.into(), r.into()]);
    }
    out.tables.push(table);
    Ok(out)
}

fn constants(tau: f64, profile: ProfileChoice, slope: f64, t: f64) -> Result<Outcome> {
    let params = ModelParams::from_tau(tau)?;
    let profile = match profile {
        ProfileChoice::PointInteraction => MacroProfile::PointInteraction,
        ProfileChoice::GaussianChain => MacroProfile::GaussianChain,
        ProfileChoice::Constant { value } => MacroProfile::Constant(value),
    };
    let k = asymptotics::kpz_constants_wedge(slope, &params, &profile)?;
    let mut out = Outcome::default();
    let mut table = Table::new("constants.csv", &["quantity", "value"]);
    let (rate, velocity) = k.stationary_reference(params.gamma(), &profile);
    let rows: [(&str, f64); 6] = [
        ("A", k.a_coef),
        ("lambda", k.lambda),
        ("wedge_scale", k.scale_wedge(t)),
        ("flat_scale", k.scale_flat(t)),
        ("stationary_label_rate", rate),
        ("stationary_velocity", velocity),
    ];
    for (name, v) in rows {
        table.push(vec![Cell::from(name), v.into()]);
        out.note(name, v);
    }
    out.tables.push(table);
    Ok(out)
}
