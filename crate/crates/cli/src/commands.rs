use std::path::Path;

use anyhow::{anyhow, Context, Result};
use bellfrac_core::bell::{bundled, default_bundled_set, load_inequality_dir, load_orbit_cache};
use bellfrac_core::entanglement::{
    conc_closed_w2, concurrence2, gme_closed_w3_paper, gme_closed_w3_xstate, gme_concurrence_xstate, xstate_decompose,
};
use bellfrac_core::expdata::{load_cc, mix_counts, poisson_draw, poisson_resample, pv_cc, save_cc, synthetic_dataset};
use bellfrac_core::fits::{self, ConcurrenceFamily, BASIS_2Q, BASIS_3Q};
use bellfrac_core::nlfrac::{
    estimate_pv, pv_from_distribution, pv_threshold_sensitivity, violation_distribution, with_workers,
};
use bellfrac_core::qstate::{self, basis_state};
use bellfrac_core::rng::{substream, Purpose};
use bellfrac_core::ViolationSamples;
use bellfrac_core::{expand_relabelings, CCDataset, DensityMatrix, Error, FitCurve, InequalitySet, PureState};
use serde_json::json;

use crate::manifest::Run;
use crate::*;

fn param_err(msg: impl Into<String>) -> anyhow::Error {
    Error::Parameter(msg.into()).into()
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json value serializes");
    s.push('\n');
    s
}

/// Density matrix JSON, or a pure state given by amplitudes.
fn load_state(run: &mut Run, path: &Path) -> Result<DensityMatrix> {
    let text = run.read(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(Error::from).with_context(|| format!("parsing {}", path.display()))?;
    let rho = if value.get("amplitudes").is_some() {
        PureState::from_json(&text).map(|p| p.projector())
    } else {
        DensityMatrix::from_json(&text)
    };
    rho.with_context(|| format!("loading state {}", path.display()))
}

fn load_cc_tracked(run: &mut Run, path: &Path) -> Result<CCDataset> {
    run.read(path)?;
    load_cc(path).with_context(|| format!("loading counts {}", path.display()))
}

fn load_set(run: &mut Run, args: &IneqArgs, n_parties: usize) -> Result<InequalitySet> {
    let (set, source) = if !args.bundled.is_empty() {
        let list = args.bundled.iter().map(|name| bundled(name)).collect::<bellfrac_core::Result<Vec<_>>>()?;
        (expand_relabelings(&list)?, format!("bundled:{}", args.bundled.join(",")))
    } else if let Some(dir) = &args.ineq_dir {
        let set = if dir.join("manifest.json").is_file() {
            load_orbit_cache(dir)?
        } else {
            expand_relabelings(&load_inequality_dir(dir)?)?
        };
        (set, dir.display().to_string())
    } else {
        (default_bundled_set(n_parties)?, "bundled:default".to_string())
    };
    if set.n_parties() != n_parties {
        return Err(param_err(format!(
            "inequalities are for {} parties but the data has {n_parties}",
            set.n_parties()
        )));
    }
    run.manifest.inequality_source = Some(source);
    run.manifest.inequality_set_hash = Some(set.dedup_hash());
    Ok(set)
}

fn record_run(run: &mut Run, args: &RunArgs) {
    run.manifest.seed = Some(args.seed);
    run.manifest.workers = Some(args.workers);
    run.manifest.samples = Some(args.samples);
}

/// `lo, lo+step, …, hi` with the endpoints hit exactly.
fn grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(param_err(format!("empty range [{lo}, {hi}] with step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|k| if k == n && (lo + n as f64 * step - hi).abs() < 1e-9 { hi } else { round12(lo + k as f64 * step) })
        .collect())
}

fn round12(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

/// Two numeric columns after a header line.
fn read_pairs(text: &str, path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse = |s: &str| s.parse::<f64>().ok().filter(|x| x.is_finite());
        match (fields.len(), fields.first().and_then(|s| parse(s)), fields.get(1).and_then(|s| parse(s))) {
            (2, Some(a), Some(b)) => out.push((a, b)),
            _ => {
                return Err(
                    Error::Load { row: i + 1, message: format!("{}: expected two numbers", path.display()) }.into()
                )
            }
        }
    }
    Ok(out)
}

pub fn run(cli: Cli) -> Result<()> {
    let name = match &cli.command {
        Command::State(_) => "state make",
        Command::Pv(_) => "pv",
        Command::Sweep(_) => "sweep",
        Command::Dist(_) => "dist",
        Command::Rescale(_) => "rescale",
        Command::Conc(_) => "conc",
        Command::Fit(FitCommand::Eval(_)) => "fit eval",
        Command::Fit(FitCommand::Refit(_)) => "fit refit",
        Command::Fit(FitCommand::EstimateThetaV0(_)) => "fit estimate-theta-v0",
        Command::Exp(ExpCommand::Synth(_)) => "exp synth",
        Command::Exp(ExpCommand::Mix(_)) => "exp mix",
        Command::Exp(ExpCommand::Pv(_)) => "exp pv",
        Command::Exp(ExpCommand::Resample(_)) => "exp resample",
    };
    let mut run = Run::new(name, cli.manifest);
    match cli.command {
        Command::State(StateCommand::Make(a)) => state_make(&mut run, a)?,
        Command::Pv(a) => pv(&mut run, a)?,
        Command::Sweep(a) => sweep(&mut run, a)?,
        Command::Dist(a) => dist(&mut run, a)?,
        Command::Rescale(a) => rescale(&mut run, a)?,
        Command::Conc(a) => conc(&mut run, a)?,
        Command::Fit(FitCommand::Eval(a)) => fit_eval(&mut run, a)?,
        Command::Fit(FitCommand::Refit(a)) => fit_refit(&mut run, a)?,
        Command::Fit(FitCommand::EstimateThetaV0(a)) => estimate(&mut run, a)?,
        Command::Exp(ExpCommand::Synth(a)) => exp_synth(&mut run, a)?,
        Command::Exp(ExpCommand::Mix(a)) => exp_mix(&mut run, a)?,
        Command::Exp(ExpCommand::Pv(a)) => exp_pv(&mut run, a)?,
        Command::Exp(ExpCommand::Resample(a)) => exp_resample(&mut run, a)?,
    }
    run.finish()
}

fn state_make(run: &mut Run, a: StateMakeArgs) -> Result<()> {
    let theta = a.theta_deg.to_radians();
    let need = |x: Option<f64>, flag: &str| x.ok_or_else(|| param_err(format!("family {:?} needs --{flag}", a.family)));
    let rho = match a.family {
        Family::Werner => qstate::werner_like(theta, need(a.v, "v")?, a.n)?,
        Family::Gghz => qstate::gghz(theta, a.n)?.projector(),
        Family::Gsms2 => qstate::gsms2(need(a.x, "x")?, need(a.y, "y")?)?,
        Family::Gsms3 => qstate::gsms3(need(a.x, "x")?, need(a.y, "y")?)?,
        Family::Mems => qstate::mems(need(a.gamma, "gamma")?)?,
        Family::Phn => qstate::phn(need(a.x, "x")?, a.n)?,
        Family::Basis => {
            basis_state(a.bits.as_deref().ok_or_else(|| param_err("family basis needs --bits"))?)?.projector()
        }
    };
    run.emit(a.out.as_deref(), &rho.to_json())
}

fn pv(run: &mut Run, a: PvArgs) -> Result<()> {
    record_run(run, &a.run);
    let rho = load_state(run, &a.state)?;
    let set = load_set(run, &a.ineq, rho.n_qubits())?;
    let est = estimate_pv(&rho, &set, a.run.samples, a.run.seed, a.run.workers)?;
    run.emit(a.out.as_deref(), &est.to_json())
}

fn sweep(run: &mut Run, a: SweepArgs) -> Result<()> {
    record_run(run, &a.run);
    let theta = a.theta_deg.to_radians();
    let vs = grid(a.v_min, a.v_max, a.step)?;
    let set = load_set(run, &a.ineq, a.n)?;
    let mut out = String::from("v,p_v,std_err,concurrence\n");
    for v in vs {
        let rho = qstate::werner_like(theta, v, a.n)?;
        let est = estimate_pv(&rho, &set, a.run.samples, a.run.seed, a.run.workers)?;
        let c = match (a.n, a.gme_form) {
            (2, _) => conc_closed_w2(theta, v)?,
            (_, GmeForm::Xstate) => gme_closed_w3_xstate(theta, v)?,
            (_, GmeForm::Paper) => gme_closed_w3_paper(theta, v)?,
        };
        out.push_str(&format!("{v},{},{},{c}\n", est.p_v, est.std_err));
    }
    run.emit(a.out.as_deref(), &out)
}

fn dist(run: &mut Run, a: DistArgs) -> Result<()> {
    record_run(run, &a.run);
    let rho = load_state(run, &a.state)?;
    let set = load_set(run, &a.ineq, rho.n_qubits())?;
    let samples = violation_distribution(&rho, &set, a.run.samples, a.run.seed, a.run.workers, stem(&a.state))?;
    samples.save(&a.out)?;
    run.wrote(&a.out)?;
    run.wrote(&ViolationSamples::sidecar_path(&a.out))
}

fn rescale(run: &mut Run, a: RescaleArgs) -> Result<()> {
    run.read(&a.input)?;
    let samples = ViolationSamples::load(&a.input)?;
    run.manifest.seed = Some(samples.seed);
    let vs = match (a.v.is_empty(), a.v_min, a.v_max) {
        (false, None, None) => a.v.clone(),
        (true, Some(lo), Some(hi)) => grid(lo, hi, a.step)?,
        _ => return Err(param_err("give either --v or both --v-min and --v-max")),
    };
    let mut out = String::from(if a.margin.is_some() { "v,p_v,p_v_low,p_v_high\n" } else { "v,p_v\n" });
    for v in vs {
        let p = pv_from_distribution(&samples, v)?;
        match a.margin {
            Some(eps) => {
                let (lo, hi) = pv_threshold_sensitivity(&samples, v, eps)?;
                out.push_str(&format!("{v},{p},{lo},{hi}\n"));
            }
            None => out.push_str(&format!("{v},{p}\n")),
        }
    }
    run.emit(a.out.as_deref(), &out)
}

fn conc(run: &mut Run, a: ConcArgs) -> Result<()> {
    let rho = load_state(run, &a.state)?;
    let (method, c) = match a.method {
        ConcMethod::Wootters => ("wootters", concurrence2(&rho)?),
        ConcMethod::GmeXstate => {
            if rho.n_qubits() != 3 {
                return Err(param_err("gme-xstate needs a three-qubit state"));
            }
            ("gme-xstate", gme_concurrence_xstate(&xstate_decompose(&rho)?))
        }
    };
    run.emit(a.out.as_deref(), &pretty(&json!({ "method": method, "concurrence": c })))
}

fn fit_eval(run: &mut Run, a: FitEvalArgs) -> Result<()> {
    let theta = a.theta_deg.to_radians();
    let stored = match &a.curve_file {
        Some(path) => Some(FitCurve::from_json(&run.read(path)?)?),
        None => None,
    };
    let mut out = String::from("pv,value\n");
    for &p in &a.pv {
        if !(p.is_finite() && p >= 0.0) {
            return Err(param_err(format!("p_v must be a non-negative percentage, got {p}")));
        }
        let y = match (&stored, a.curve) {
            (Some(curve), _) => curve.eval(p),
            (None, Some(name)) => match name {
                CurveName::CLower2q => fits::c_lower_2q(p)?,
                CurveName::CMems => fits::c_mems_fit(p)?,
                CurveName::CPhn3 => fits::c_phn3_fit(p)?,
                CurveName::CGmePure3 => fits::c_gme_pure3_fit(p)?,
                CurveName::CGme45 => fits::c_gme_45_fit(p)?,
                CurveName::CGme35 => fits::c_gme_35_fit(p)?,
                CurveName::V2q => fits::v_from_pv_2q(theta, p)?,
                CurveName::V3q => fits::v_from_pv_3q(theta, p)?,
                CurveName::ConcWerner2 => fits::concurrence_from_pv(theta, p, ConcurrenceFamily::Werner2)?,
                CurveName::ConcWerner3Paper => fits::concurrence_from_pv(theta, p, ConcurrenceFamily::Werner3Paper)?,
                CurveName::ConcWerner3Xstate => fits::concurrence_from_pv(theta, p, ConcurrenceFamily::Werner3XState)?,
            },
            (None, None) => return Err(anyhow!("no curve selected")),
        };
        out.push_str(&format!("{p},{y}\n"));
    }
    run.emit(a.out.as_deref(), &out)
}

fn parse_basis(text: &str) -> Result<Vec<f64>> {
    match text {
        "2q" => Ok(BASIS_2Q.to_vec()),
        "3q" => Ok(BASIS_3Q.to_vec()),
        list => list
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| param_err(format!("invalid exponent `{s}`"))))
            .collect(),
    }
}

fn fit_refit(run: &mut Run, a: FitRefitArgs) -> Result<()> {
    let basis = parse_basis(&a.basis)?;
    let (points, tag) = match &a.points {
        Some(path) => (read_pairs(&run.read(path)?, path)?, stem(path)),
        None => (fits::analytic_2q_points(a.v_min, a.v_max, a.n_points)?, "analytic-2q".to_string()),
    };
    let (curve, rms) = fits::refit(&points, &basis, &tag)?;
    run.manifest.results = json!({ "rms": rms, "points": points.len() });
    eprintln!("rms residual {rms:e} over {} points", points.len());
    run.emit(a.out.as_deref(), &curve.to_json())
}

fn estimate(run: &mut Run, a: EstimateArgs) -> Result<()> {
    let points = read_pairs(&run.read(&a.curve)?, &a.curve)?;
    let est = fits::estimate_theta_v0(&points)?;
    let value = json!({
        "theta": est.theta,
        "theta_deg": est.theta.to_degrees(),
        "v0": est.v0,
        "residual": est.residual,
    });
    run.emit(a.out.as_deref(), &pretty(&value))
}

fn save_tracked(run: &mut Run, d: &CCDataset, out: &Path) -> Result<()> {
    save_cc(d, out)?;
    run.wrote(out)?;
    run.wrote(&CCDataset::sidecar_path(out))
}

fn exp_synth(run: &mut Run, a: ExpSynthArgs) -> Result<()> {
    run.manifest.seed = Some(a.seed);
    run.manifest.samples = Some(a.blocks);
    let rho = load_state(run, &a.state)?;
    let tag = a.tag.clone().unwrap_or_else(|| stem(&a.state));
    let mut d = synthetic_dataset(&rho, a.blocks, a.seed, a.total, tag)?;
    if let Some(ps) = a.poisson_seed {
        d = poisson_draw(&d, &mut substream(ps, Purpose::Synthetic, 0));
    }
    save_tracked(run, &d, &a.out)
}

fn exp_mix(run: &mut Run, a: ExpMixArgs) -> Result<()> {
    let state = load_cc_tracked(run, &a.state)?;
    let basis = a.basis.iter().map(|p| load_cc_tracked(run, p)).collect::<Result<Vec<_>>>()?;
    let mixed = mix_counts(&state, &basis, a.vc)?;
    save_tracked(run, &mixed, &a.out)
}

fn exp_pv(run: &mut Run, a: ExpPvArgs) -> Result<()> {
    run.manifest.workers = Some(a.workers);
    let d = load_cc_tracked(run, &a.data)?;
    let set = load_set(run, &a.ineq, bellfrac_core::expdata::PARTIES)?;
    let est = with_workers(a.workers, || pv_cc(&d, &set, a.margin))??;
    let mut text = serde_json::to_string_pretty(&est)?;
    text.push('\n');
    run.emit(a.out.as_deref(), &text)
}

fn exp_resample(run: &mut Run, a: ExpResampleArgs) -> Result<()> {
    run.manifest.seed = Some(a.seed);
    run.manifest.workers = Some(a.workers);
    let statistic: bellfrac_core::expdata::Statistic = a.statistic.parse()?;
    let d = load_cc_tracked(run, &a.data)?;
    let set = match statistic {
        bellfrac_core::expdata::Statistic::PvCc => Some(load_set(run, &a.ineq, bellfrac_core::expdata::PARTIES)?),
        _ => None,
    };
    let (mean, std) = poisson_resample(&d, statistic, set.as_ref(), a.trials, a.seed, a.workers)?;
    let value = json!({
        "statistic": a.statistic,
        "trials": a.trials,
        "seed": a.seed,
        "mean": mean,
        "std": std,
    });
    run.emit(a.out.as_deref(), &pretty(&value))
}
