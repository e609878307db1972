//! Acceptance criteria. Runs with its own harness and prints one line per
//! criterion; exits non-zero if any criterion fails.
//!
//! Criterion 12 needs the full three-party inequality data. Point
//! `BELLFRAC_FULL_INEQ_DIR` at a directory of `*.ineq` files (or an orbit
//! cache) to run its conditional part.

use std::f64::consts::{FRAC_PI_4, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use bellfrac_core::bell::{bundled, default_bundled_set, load_inequality_dir, load_orbit_cache, InequalitySet};
use bellfrac_core::entanglement::{
    conc_closed_w2, concurrence2, gme_closed_w3_paper, gme_concurrence_xstate, xstate_decompose,
};
use bellfrac_core::expdata::{poisson_draw, poisson_resample, pv_cc, synthetic_dataset, Statistic};
use bellfrac_core::fits::{
    analytic_2q_points, beta3_branch_values, concurrence_from_pv, estimate_theta_v0, refit, synthetic_theta_v0_curve,
    ConcurrenceFamily, BASIS_2Q, BASIS_3Q,
};
use bellfrac_core::nlfrac::{
    estimate_pv, pv_from_distribution, pv_werner2_closed, pv_werner2_quadrature, sample_chsh_reduced,
    violation_distribution,
};
use bellfrac_core::qstate::{gghz, werner_like};
use bellfrac_core::rng::{substream, Purpose};
use bellfrac_core::{expand_relabelings, DensityMatrix};

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

const SEED: u64 = 20_240_613;
const ANCHOR: f64 = 2.0 * (PI - 3.0);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    check(t < limit, format!("took {t:.2?}, limit {limit:.0?}"))
}

fn chsh_set() -> InequalitySet {
    default_bundled_set(2).unwrap()
}

fn full_correlation_set() -> InequalitySet {
    expand_relabelings(&[bundled("mermin").unwrap(), bundled("svetlichny").unwrap()]).unwrap()
}

fn rho3_reference() -> DensityMatrix {
    werner_like(FRAC_PI_4, 0.986, 3).unwrap()
}

fn analytic_anchor() -> Outcome {
    let start = Instant::now();
    let q1 = ok(pv_werner2_quadrature(1.0))?;
    check((q1 - ANCHOR).abs() <= 1e-9, format!("quadrature(1) = {q1}"))?;
    let mut worst: f64 = 0.0;
    for v in [0.72, 0.75, 0.80, 0.85, 0.90, 0.95, 1.0] {
        worst = worst.max((ok(pv_werner2_closed(v))? - ok(pv_werner2_quadrature(v))?).abs());
    }
    check(worst <= 1e-8, format!("closed form vs quadrature differ by {worst:e}"))?;
    within_time(start, Duration::from_secs(1))?;
    Ok(format!("quadrature(1) = {q1:.10}, closed vs quadrature max diff {worst:.1e}"))
}

fn monte_carlo_vs_analytic() -> Outcome {
    let start = Instant::now();
    let set = chsh_set();
    let m = 1_000_000;
    let mut worst_z: f64 = 0.0;
    for v in [0.75, 0.9, 1.0] {
        let est = ok(estimate_pv(&werner_like(FRAC_PI_4, v, 2).unwrap(), &set, m, SEED, 0))?;
        let exact = ok(pv_werner2_quadrature(v))?;
        let sigma = (exact * (1.0 - exact) / m as f64).sqrt();
        let z = (est.p_v - exact).abs() / sigma;
        check(z <= 3.5, format!("v = {v}: {} vs {exact} ({z:.2}σ)", est.p_v))?;
        worst_z = worst_z.max(z);
    }
    let below = ok(estimate_pv(&werner_like(FRAC_PI_4, 0.70, 2).unwrap(), &set, m, SEED, 0))?;
    check(below.p_v == 0.0, format!("v = 0.70 gives {}", below.p_v))?;
    within_time(start, Duration::from_secs(120))?;
    Ok(format!("largest deviation {worst_z:.2}σ, v = 0.70 exactly 0, {:.1?}", start.elapsed()))
}

fn reduced_cube() -> Outcome {
    let est = ok(sample_chsh_reduced(1.0, 1_000_000, SEED, 0))?;
    let z = (est.p_v - ANCHOR).abs() / est.std_err;
    check(z <= 3.5, format!("{} vs {ANCHOR} ({z:.2}σ)", est.p_v))?;
    Ok(format!("p_v = {:.5} ({z:.2}σ from 2(π−3))", est.p_v))
}

fn concurrence_closed_forms() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 1..=9 {
        let theta = k as f64 * PI / 36.0;
        for j in 0..7 {
            let v = 0.4 + 0.1 * j as f64;
            let c = ok(concurrence2(&werner_like(theta, v, 2).unwrap()))?;
            worst = worst.max((c - ok(conc_closed_w2(theta, v))?).abs());
        }
    }
    check(worst <= 1e-12, format!("grid deviation {worst:e}"))?;
    for j in 1..=20 {
        let v = j as f64 / 20.0;
        let line = ((3.0 * v - 1.0) / 2.0).max(0.0);
        let closed = ok(conc_closed_w2(FRAC_PI_4, v))?;
        check(closed == line, format!("Werner line at v = {v}: {closed} vs {line}"))?;
        let c = ok(concurrence2(&werner_like(FRAC_PI_4, v, 2).unwrap()))?;
        check((c - line).abs() <= 1e-12, format!("Wootters on the Werner line at v = {v}: {c}"))?;
    }
    Ok(format!("9×7 grid max deviation {worst:.1e}; Werner line (3v−1)/2 reproduced"))
}

fn xstate_gme() -> Outcome {
    let gme = |v: f64| -> Result<f64, String> {
        Ok(gme_concurrence_xstate(&ok(xstate_decompose(&ok(werner_like(FRAC_PI_4, v, 3))?))?))
    };
    let at = gme(3.0 / 7.0)?;
    check(at.abs() <= 1e-12, format!("C(3/7) = {at:e}"))?;
    check(gme(3.0 / 7.0 - 1e-9)? == 0.0, "nonzero just below 3/7")?;
    check(gme(3.0 / 7.0 + 1e-9)? > 0.0, "zero just above 3/7")?;
    let mut worst: f64 = 0.0;
    for j in 0..=40 {
        let v = 3.0 / 7.0 + (1.0 - 3.0 / 7.0) * j as f64 / 40.0;
        worst = worst.max((gme(v)? - (7.0 * v - 3.0) / 4.0).abs());
    }
    check(worst <= 1e-12, format!("(7v−3)/4 deviation {worst:e}"))?;
    let printed = |v: f64| gme_closed_w3_paper(FRAC_PI_4, v).unwrap();
    check(printed(0.4).abs() <= 1e-12, format!("printed form at 2/5: {:e}", printed(0.4)))?;
    check(printed(0.4 - 1e-9) == 0.0 && printed(0.4 + 1e-9) > 0.0, "printed form does not cross at 2/5")?;
    Ok(format!("X-state crossing at 3/7 (slope 7/4); printed form crosses at 2/5; max deviation {worst:.1e}"))
}

fn scaling_identity() -> Outcome {
    let start = Instant::now();
    let set = full_correlation_set();
    check(set.members().iter().all(|m| m.is_full_correlation()), "set is not full-correlation")?;
    let m = 10_000;
    let mut checked = 0;
    for deg in [35.0f64, 45.0] {
        let theta = deg.to_radians();
        let samples = ok(violation_distribution(&gghz(theta, 3).unwrap().projector(), &set, m, SEED, 0, "gghz"))?;
        for v in [0.8, 0.9, 1.0] {
            let rescaled = ok(pv_from_distribution(&samples, v))?;
            let direct = ok(estimate_pv(&werner_like(theta, v, 3).unwrap(), &set, m, SEED, 0))?;
            check(
                rescaled.to_bits() == direct.p_v.to_bits(),
                format!("θ = {deg}°, v = {v}: {rescaled} vs {}", direct.p_v),
            )?;
            checked += 1;
        }
    }
    within_time(start, Duration::from_secs(300))?;
    Ok(format!("{checked} (θ, v) pairs bit-identical over {} orbit members, {:.1?}", set.len(), start.elapsed()))
}

fn fit_composition() -> Outcome {
    let pvs: Vec<f64> = (0..=230).map(|k| 0.5 + 0.05 * k as f64).collect();
    let mut report = Vec::new();
    for (deg, c0, c0_tol, c1, c1_tol) in [(45.0f64, 0.512, 0.002, 0.186, 0.002), (35.0, 0.542, 0.001, 0.155, 0.01)] {
        let theta = deg.to_radians();
        let points: Vec<(f64, f64)> = pvs
            .iter()
            .map(|&p| concurrence_from_pv(theta, p, ConcurrenceFamily::Werner3Paper).map(|c| (p, c)))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let (curve, _) = ok(refit(&points, &BASIS_3Q, "composition"))?;
        let (a, b) = (curve.coefficients[0], curve.coefficients[1]);
        check((a - c0).abs() <= c0_tol, format!("{deg}°: constant {a} vs {c0} ± {c0_tol}"))?;
        check((b - c1).abs() <= c1_tol, format!("{deg}°: p^(1/6) coefficient {b} vs {c1} ± {c1_tol}"))?;
        report.push(format!("{deg}°: ({a:.4}, {b:.4})"));
    }
    Ok(report.join(", "))
}

fn beta3_continuity() -> Outcome {
    let mut report = Vec::new();
    for (k, (left, right)) in beta3_branch_values().into_iter().enumerate() {
        let gap = (left - right).abs();
        check(gap <= 2e-3, format!("break {k}: {left} vs {right}"))?;
        report.push(format!("{gap:.2e}"));
    }
    Ok(format!("branch mismatches {}", report.join(", ")))
}

fn refit_quality() -> Outcome {
    let points = ok(analytic_2q_points(0.72, 1.0, 400))?;
    let (_, rms) = ok(refit(&points, &BASIS_2Q, "analytic-2q"))?;
    check(rms <= 5e-3, format!("rms {rms}"))?;
    Ok(format!("rms {rms:.2e} in v"))
}

fn pipeline_closure() -> Outcome {
    let rho = rho3_reference();
    let set = full_correlation_set();
    let n = 2000;
    let exact = ok(synthetic_dataset(&rho, n, SEED, 4000.0, "rho3"))?;
    let cc = ok(pv_cc(&exact, &set, 0.015))?;
    let mc = ok(estimate_pv(&rho, &set, n, SEED, 0))?;
    check(cc.estimate == mc, format!("pv_cc {:?} vs estimate_pv {:?}", cc.estimate, mc))?;

    let noisy = poisson_draw(&exact, &mut substream(SEED, Purpose::Synthetic, 1));
    let noisy_pv = ok(pv_cc(&noisy, &set, 0.015))?.estimate.p_v;
    check((noisy_pv - cc.estimate.p_v).abs() <= 0.015, format!("noisy {noisy_pv} vs noiseless {}", cc.estimate.p_v))?;
    let (_, std) = ok(poisson_resample(&noisy, Statistic::PvCc, Some(&set), 200, SEED, 0))?;
    let p = cc.estimate.p_v;
    let binomial = (p * (1.0 - p) / n as f64).sqrt();
    let ratio = std / binomial;
    check(
        (ratio - 1.0).abs() <= 0.2,
        format!(
            "exact closure holds and noisy p_v {noisy_pv:.4} is within 1.5 pp of {p:.4}, but Poisson resampling std \
             {std:.5} is {ratio:.2}× the binomial {binomial:.5}: count noise only moves blocks near the threshold"
        ),
    )?;
    Ok(format!("bit-identical p_v = {p:.4}; noisy {noisy_pv:.4}; resample std {std:.5} vs binomial {binomial:.5}"))
}

fn parameter_recovery() -> Outcome {
    let pvs: Vec<f64> = (0..60).map(|k| 0.5 + 0.2 * k as f64).collect();
    let mut worst = (0.0f64, 0.0f64);
    for (deg, v0) in [(20.0f64, 0.9), (30.0, 0.95), (38.0, 0.985), (45.0, 1.0)] {
        let curve = ok(synthetic_theta_v0_curve(deg.to_radians(), v0, &pvs))?;
        let est = ok(estimate_theta_v0(&curve))?;
        let (dt, dv) = ((est.theta.to_degrees() - deg).abs(), (est.v0 - v0).abs());
        check(
            dt <= 0.3 && dv <= 0.003,
            format!("({deg}°, {v0}) recovered as ({:.3}°, {:.4})", est.theta.to_degrees(), est.v0),
        )?;
        worst = (worst.0.max(dt), worst.1.max(dv));
    }
    Ok(format!("worst errors {:.1e}° and {:.1e}", worst.0, worst.1))
}

fn load_set(dir: &Path) -> Result<InequalitySet, String> {
    if dir.join("manifest.json").is_file() {
        ok(load_orbit_cache(dir))
    } else {
        ok(expand_relabelings(&ok(load_inequality_dir(dir))?))
    }
}

fn full_data_values() -> Outcome {
    const FULL_PV: f64 = 0.0883;
    let rho = rho3_reference();
    if let Some(dir) = std::env::var_os("BELLFRAC_FULL_INEQ_DIR") {
        let set = load_set(Path::new(&dir))?;
        check(set.n_parties() == 3, "full inequality data is not three-party")?;
        let est = ok(estimate_pv(&rho, &set, 1_000_000, SEED, 0))?;
        check((est.p_v - FULL_PV).abs() <= 0.005, format!("p_v = {} vs 0.0883 ± 0.005", est.p_v))?;
        return Ok(format!("full data ({} members): p_v = {:.4}", set.len(), est.p_v));
    }
    // Mermin is not a facet of the genuine three-party polytope, so only the
    // Svetlichny orbit is a subset of the full data.
    let m = 200_000;
    let set = default_bundled_set(3).unwrap();
    let est = ok(estimate_pv(&rho, &set, m, SEED, 0))?;
    check(est.set_tag.ends_with(";lower-bound"), format!("set tag {}", est.set_tag))?;
    check(est.p_v <= FULL_PV, format!("bundled p_v {} exceeds the full-set value", est.p_v))?;
    let mut last = 0.0;
    for v in [0.8, 0.9, 0.95, 0.986, 1.0] {
        let p = ok(estimate_pv(&werner_like(FRAC_PI_4, v, 3).unwrap(), &set, m, SEED, 0))?.p_v;
        check(p >= last, format!("p_v drops to {p} at v = {v}"))?;
        last = p;
    }
    Ok(format!("BELLFRAC_FULL_INEQ_DIR unset; Svetlichny lower bound {:.4} ≤ 0.0883, monotone in v", est.p_v))
}

fn determinism() -> Outcome {
    let rho2 = werner_like(FRAC_PI_4, 0.9, 2).unwrap();
    let rho3 = rho3_reference();
    let (chsh, three) = (chsh_set(), full_correlation_set());
    let data = synthetic_dataset(&rho3, 300, SEED, 4000.0, "rho3").unwrap();
    let noisy = poisson_draw(&data, &mut substream(SEED, Purpose::Synthetic, 1));
    let run = |w: usize| -> Result<String, String> {
        let a = ok(estimate_pv(&rho2, &chsh, 200_000, SEED, w))?;
        let b = ok(sample_chsh_reduced(0.9, 200_000, SEED, w))?;
        let c = ok(violation_distribution(&rho3, &three, 20_000, SEED, w, "rho3"))?;
        let d = ok(poisson_resample(&noisy, Statistic::PvCc, Some(&three), 20, SEED, w))?;
        let e = ok(poisson_resample(&noisy, Statistic::TotalCounts, None, 20, SEED, w))?;
        Ok(format!(
            "{a:?}{b:?}{}{:?}{:?}{:?}",
            c.to_csv(),
            d.0.to_bits(),
            d.1.to_bits(),
            (e.0.to_bits(), e.1.to_bits())
        ))
    };
    let reference = run(1)?;
    for w in [4, 8] {
        check(run(w)? == reference, format!("{w} workers differ from 1"))?;
    }
    Ok("estimate_pv, reduced sampler, distributions and resampling identical for 1, 4, 8 workers".into())
}

fn main() {
    let criteria: [(&str, Criterion); 13] = [
        ("analytic anchor", analytic_anchor),
        ("Monte Carlo vs analytic", monte_carlo_vs_analytic),
        ("reduced-cube sampler", reduced_cube),
        ("concurrence closed forms", concurrence_closed_forms),
        ("X-state GME", xstate_gme),
        ("distribution scaling identity", scaling_identity),
        ("fit composition", fit_composition),
        ("β₃ continuity", beta3_continuity),
        ("refit quality", refit_quality),
        ("experiment pipeline closure", pipeline_closure),
        ("parameter recovery", parameter_recovery),
        ("three-qubit values", full_data_values),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion {:>2}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str()) || id.ends_with(x.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("{id} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
