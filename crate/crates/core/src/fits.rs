//! Empirical relations between the nonlocal fraction, visibility, angle and
//! (GME) concurrence, plus least-squares regeneration of such relations on
//! fixed fractional-power bases.
//!
//! Every fit takes `p_V` in percent. θ-dependent coefficients take θ in
//! radians.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::entanglement::{conc_closed_w2, gme_closed_w3_paper, gme_closed_w3_xstate};
use crate::error::{param, Error, Result};
use crate::nlfrac::pv_werner2_closed;

const DEG: f64 = std::f64::consts::PI / 180.0;
/// Default `p_V` domain of the fits, in percent.
pub const DEFAULT_DOMAIN: (f64, f64) = (0.5, 30.0);
/// Exponents of the two-qubit visibility fit.
pub const BASIS_2Q: [f64; 4] = [0.0, 0.25, 0.5, 1.0];
/// Exponents of the three-qubit visibility and GME fits.
pub const BASIS_3Q: [f64; 4] = [0.0, 1.0 / 6.0, 0.5, 1.0];

/// `Σ_k c_k · p^{e_k}` over a fixed set of exponents, with `p` in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitCurve {
    pub basis: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub domain: (f64, f64),
    pub units: String,
    pub provenance: String,
}

impl FitCurve {
    pub fn new(
        basis: Vec<f64>,
        coefficients: Vec<f64>,
        domain: (f64, f64),
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if basis.is_empty() || basis.len() != coefficients.len() {
            return param("basis and coefficients must be non-empty and of equal length");
        }
        if basis.windows(2).any(|w| w[0] >= w[1]) || basis[0] < 0.0 {
            return param("basis exponents must be non-negative and strictly increasing");
        }
        if !(domain.0 >= 0.0 && domain.0 < domain.1) {
            return param(format!("empty domain [{}, {}]", domain.0, domain.1));
        }
        Ok(Self { basis, coefficients, domain, units: "percent".into(), provenance: provenance.into() })
    }

    pub fn eval(&self, pv_percent: f64) -> f64 {
        self.basis.iter().zip(&self.coefficients).map(|(&e, &c)| c * basis_term(pv_percent, e)).sum()
    }

    pub fn in_domain(&self, pv_percent: f64) -> bool {
        (self.domain.0..=self.domain.1).contains(&pv_percent)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("curve serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FitCurve = serde_json::from_str(text)?;
        let mut curve = Self::new(raw.basis, raw.coefficients, raw.domain, raw.provenance)?;
        curve.units = raw.units;
        if curve.units != "percent" {
            return param(format!("unsupported units `{}`", curve.units));
        }
        Ok(curve)
    }
}

fn basis_term(p: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        p.powf(e)
    }
}

fn check_theta_open(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta <= FRAC_PI_4 + 1e-15) {
        return param(format!("theta {theta} outside (0, π/4]"));
    }
    Ok(())
}

fn check_theta_closed(theta: f64) -> Result<()> {
    if !(0.0..=FRAC_PI_4 + 1e-15).contains(&theta) {
        return param(format!("theta {theta} outside [0, π/4]"));
    }
    Ok(())
}

fn check_pv(pv: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&pv) {
        return param(format!("p_V {pv}% outside [0, 100]"));
    }
    Ok(())
}

/// `√(sin²2θ + 1)`, the largest CHSH value of `gghz(θ, 2)`.
pub fn beta2(theta: f64) -> Result<f64> {
    check_theta_open(theta)?;
    Ok(((2.0 * theta).sin().powi(2) + 1.0).sqrt())
}

pub fn v2cr(theta: f64) -> Result<f64> {
    Ok(1.0 / beta2(theta)?)
}

fn beta3_polynomial(t: f64) -> f64 {
    1.0 + 0.0622 * t + 1.697 * t * t - 3.391 * t.powi(3) + 1.442 * t.powi(4)
}

fn beta3_middle(t: f64) -> f64 {
    (1.0 + 2.0 * (1.0 + (2.0 * t).sin().powi(2)).sqrt()) / 3.0
}

fn beta3_upper(t: f64) -> f64 {
    (2.0 * (2.0 * t).sin().powi(2)).sqrt()
}

/// Break points of [`beta3`], in radians.
pub const BETA3_BREAKS: [f64; 2] = [14.94 * DEG, 29.5 * DEG];

/// Largest genuinely tripartite Bell value of `gghz(θ, 3)`, piecewise.
pub fn beta3(theta: f64) -> Result<f64> {
    check_theta_closed(theta)?;
    Ok(if theta < BETA3_BREAKS[0] {
        beta3_polynomial(theta)
    } else if theta < BETA3_BREAKS[1] {
        beta3_middle(theta)
    } else {
        beta3_upper(theta)
    })
}

/// Values of the two branches meeting at each break point.
pub fn beta3_branch_values() -> [(f64, f64); 2] {
    let [a, b] = BETA3_BREAKS;
    [(beta3_polynomial(a), beta3_middle(a)), (beta3_middle(b), beta3_upper(b))]
}

pub fn v3cr(theta: f64) -> Result<f64> {
    Ok(1.0 / beta3(theta)?)
}

/// Coefficients `(f1, f2, f3)` of the published two-qubit visibility fit.
pub fn paper_f(theta: f64) -> Result<(f64, f64, f64)> {
    check_theta_open(theta)?;
    let t = theta;
    let f1 = (0.19674 - 1.3982 * t + 4.712274 * t * t - 6.7193 * t.powi(3) + 3.3384 * t.powi(4)) / 10f64.sqrt();
    let f2 = 0.11886 - 0.011544 / t - 0.363104 * t + 0.460436 * t * t - 0.204953 * t.powi(3);
    let f3 = (0.03848 - 0.011 / t - 0.02531 * t - 0.018331 * t * t + 0.017373 * t.powi(3)) * 1e-2;
    Ok((f1, f2, f3))
}

/// Coefficients `(g1, g2, g3)` of the published three-qubit visibility fit.
pub fn paper_g(theta: f64) -> Result<(f64, f64, f64)> {
    check_theta_open(theta)?;
    let t = theta;
    let g1 = f64::max(
        -0.061297 + 0.55512 * t - 0.42815 * t * t,
        -18.58393 + 57.9917 * t.sqrt() - 50.2727 * t + 11.209 * t * t,
    ) / 10f64.cbrt();
    let g2 = f64::min(0.0, 0.76306 - 4.13852 * t + 8.28077 * t * t - 7.2943 * t.powi(3) + 2.38884 * t.powi(4));
    let g3 = f64::max(
        0.0001151 - 0.0004063 * t + 0.0004321 * t * t,
        -0.015237 + 0.084803 * t - 0.17408 * t * t + 0.15723 * t.powi(3) - 0.052804 * t.powi(4),
    );
    Ok((g1, g2, g3))
}

/// Published two-qubit visibility fit at angle θ as a curve in `p_V`.
pub fn paper_curve_2q(theta: f64) -> Result<FitCurve> {
    let (f1, f2, f3) = paper_f(theta)?;
    FitCurve::new(BASIS_2Q.to_vec(), vec![v2cr(theta)?, f1, f2, f3], DEFAULT_DOMAIN, "paper")
}

/// Published three-qubit visibility fit at angle θ as a curve in `p_V`.
pub fn paper_curve_3q(theta: f64) -> Result<FitCurve> {
    let (g1, g2, g3) = paper_g(theta)?;
    FitCurve::new(BASIS_3Q.to_vec(), vec![v3cr(theta)?, g1, g2, g3], DEFAULT_DOMAIN, "paper")
}

pub fn v_from_pv_2q(theta: f64, pv_percent: f64) -> Result<f64> {
    check_pv(pv_percent)?;
    Ok(paper_curve_2q(theta)?.eval(pv_percent))
}

pub fn v_from_pv_3q(theta: f64, pv_percent: f64) -> Result<f64> {
    check_pv(pv_percent)?;
    Ok(paper_curve_3q(theta)?.eval(pv_percent))
}

fn check_pv_nonneg(pv: f64) -> Result<()> {
    if !(pv >= 0.0 && pv.is_finite()) {
        return param(format!("p_V {pv}% must be non-negative"));
    }
    Ok(())
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Concurrence of `gghz(θ0, 2)` as a function of its nonlocal fraction.
pub fn c_lower_2q(pv_percent: f64) -> Result<f64> {
    check_pv_nonneg(pv_percent)?;
    let p = pv_percent;
    Ok(clamp_unit(0.6784 / 10f64.sqrt() * p.powf(0.25) - 1.59e-2 * p.sqrt() + 1e-4 * p))
}

/// Concurrence of the maximally entangled mixed state family.
pub fn c_mems_fit(pv_percent: f64) -> Result<f64> {
    check_pv_nonneg(pv_percent)?;
    let p = pv_percent;
    Ok(clamp_unit(FRAC_1_SQRT_2 + 0.1125 / 10f64.sqrt() * p.powf(0.25) - 9.0e-4 * p.sqrt() + 2.83e-5 * p))
}

/// GME concurrence of the phase-damped three-qubit GHZ state.
pub fn c_phn3_fit(pv_percent: f64) -> Result<f64> {
    check_pv_nonneg(pv_percent)?;
    let p = pv_percent;
    Ok(clamp_unit(0.4012 * p.powf(1.0 / 6.0) - 0.0118 * p.sqrt() + 9.0e-5 * p))
}

/// GME concurrence of pure `gghz(θ, 3)`; a lower bound over three-qubit states.
pub fn c_gme_pure3_fit(pv_percent: f64) -> Result<f64> {
    check_pv_nonneg(pv_percent)?;
    let p = pv_percent;
    Ok(clamp_unit((0.068 * p + 0.06 * p.sqrt()).sqrt()))
}

/// GME concurrence of the three-qubit Werner state at θ = 45°.
pub fn c_gme_45_fit(pv_percent: f64) -> Result<f64> {
    check_pv_nonneg(pv_percent)?;
    let p = pv_percent;
    Ok(clamp_unit(0.512 + 0.186 * p.powf(1.0 / 6.0) - 7.1e-3 * p.sqrt() + 1.12e-4 * p))
}

/// GME concurrence of the three-qubit Werner-like state at θ = 35°.
pub fn c_gme_35_fit(pv_percent: f64) -> Result<f64> {
    check_pv_nonneg(pv_percent)?;
    let p = pv_percent;
    Ok(clamp_unit(0.542 + 0.155 * p.powf(1.0 / 6.0) - 8.2e-3 * p.sqrt() + 1.52e-4 * p))
}

/// Which visibility fit and which closed-form concurrence to compose.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConcurrenceFamily {
    /// Two-qubit visibility fit into the Werner-like concurrence.
    Werner2,
    /// Three-qubit visibility fit into the published GME expression.
    Werner3Paper,
    /// Three-qubit visibility fit into the X-state GME expression.
    Werner3XState,
}

impl std::str::FromStr for ConcurrenceFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "werner2" => Ok(Self::Werner2),
            "werner3-paper" | "werner3_paper" => Ok(Self::Werner3Paper),
            "werner3-xstate" | "werner3_xstate" => Ok(Self::Werner3XState),
            other => param(format!("unknown concurrence family `{other}`")),
        }
    }
}

/// Concurrence implied by a nonlocal fraction through a visibility fit.
pub fn concurrence_from_pv(theta: f64, pv_percent: f64, family: ConcurrenceFamily) -> Result<f64> {
    match family {
        ConcurrenceFamily::Werner2 => conc_closed_w2(theta, v_from_pv_2q(theta, pv_percent)?),
        ConcurrenceFamily::Werner3Paper => gme_closed_w3_paper(theta, v_from_pv_3q(theta, pv_percent)?),
        ConcurrenceFamily::Werner3XState => gme_closed_w3_xstate(theta, v_from_pv_3q(theta, pv_percent)?),
    }
}

/// Least-squares fit of `(pv, y)` pairs on the given exponents. Returns the
/// curve and the RMS residual.
pub fn refit(points: &[(f64, f64)], basis: &[f64], provenance: &str) -> Result<(FitCurve, f64)> {
    if points.iter().any(|&(p, y)| !(p >= 0.0 && p.is_finite() && y.is_finite())) {
        return Err(Error::Fit("points must be finite with non-negative p_V".into()));
    }
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < basis.len() {
        return Err(Error::Fit(format!(
            "{} distinct p_V values cannot determine {} coefficients",
            distinct.len(),
            basis.len()
        )));
    }
    let a = DMatrix::from_fn(points.len(), basis.len(), |i, j| basis_term(points[i].0, basis[j]));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let svd = a.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_min > 1e-12 * s_max) {
        return Err(Error::Fit(format!("design matrix is rank deficient (condition {:e})", s_max / s_min)));
    }
    let coef = svd.solve(&y, 0.0).map_err(|e| Error::Fit(e.to_string()))?;
    let resid = &a * &coef - &y;
    let rms = (resid.norm_squared() / points.len() as f64).sqrt();
    let domain = (distinct[0], *distinct.last().expect("non-empty"));
    let domain = if domain.0 < domain.1 { domain } else { DEFAULT_DOMAIN };
    let curve = FitCurve::new(basis.to_vec(), coef.iter().copied().collect(), domain, format!("refit:{provenance}"))?;
    Ok((curve, rms))
}

/// `(p_V in percent, v)` pairs of the two-qubit Werner closed form on an
/// even grid of `n` visibilities in `[v_lo, v_hi]`.
pub fn analytic_2q_points(v_lo: f64, v_hi: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    if n < 2 || !(v_lo < v_hi) {
        return param("need at least two points on a non-empty visibility range");
    }
    (0..n)
        .map(|k| {
            let v = v_lo + (v_hi - v_lo) * k as f64 / (n - 1) as f64;
            Ok((100.0 * pv_werner2_closed(v)?, v))
        })
        .collect()
}

/// Result of [`estimate_theta_v0`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaV0 {
    pub theta: f64,
    pub v0: f64,
    /// RMS residual in visibility.
    pub residual: f64,
}

const V0_RANGE: (f64, f64) = (0.8, 1.0);

// Precomputed `(v, [1, p^{1/6}, p^{1/2}, p])` rows.
fn model_rms(rows: &[(f64, [f64; 4])], theta: f64, v0: f64) -> f64 {
    let Ok(fit) = paper_curve_3q(theta) else {
        return f64::INFINITY;
    };
    let c = &fit.coefficients;
    let sum: f64 =
        rows.iter().map(|(v, t)| (v - (c[0] * t[0] + c[1] * t[1] + c[2] * t[2] + c[3] * t[3]) / v0).powi(2)).sum();
    (sum / rows.len() as f64).sqrt()
}

/// Fits angle and reference visibility to a `(v, p_V in percent)` curve
/// through the published three-qubit visibility fit scaled by `1/v0`.
///
/// A grid over θ ∈ (0, π/4] and v0 ∈ [0.8, 1] is refined by a compass search.
pub fn estimate_theta_v0(curve: &[(f64, f64)]) -> Result<ThetaV0> {
    if curve.len() < 3 {
        return Err(Error::Estimation(format!("need at least 3 points, got {}", curve.len())));
    }
    if curve.iter().any(|&(v, pv)| !(v.is_finite() && pv.is_finite() && pv >= 0.0)) {
        return Err(Error::Estimation("curve has non-finite or negative entries".into()));
    }
    let first = curve[0].1;
    if curve.iter().all(|&(_, pv)| pv == first) {
        return Err(Error::Estimation("all p_V values are equal".into()));
    }
    let rows: Vec<(f64, [f64; 4])> = curve.iter().map(|&(v, pv)| (v, BASIS_3Q.map(|e| basis_term(pv, e)))).collect();
    let curve = &rows;
    let theta_max = FRAC_PI_4;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 1..=180 {
        let theta = theta_max * i as f64 / 180.0;
        for j in 0..=40 {
            let v0 = V0_RANGE.0 + (V0_RANGE.1 - V0_RANGE.0) * j as f64 / 40.0;
            let r = model_rms(curve, theta, v0);
            if r < best.0 {
                best = (r, theta, v0);
            }
        }
    }
    let (mut r, mut theta, mut v0) = best;
    let mut step = (theta_max / 180.0, (V0_RANGE.1 - V0_RANGE.0) / 40.0);
    while step.0 > 1e-12 || step.1 > 1e-12 {
        let mut moved = false;
        for (dt, dv) in [(step.0, 0.0), (-step.0, 0.0), (0.0, step.1), (0.0, -step.1)] {
            let t = (theta + dt).clamp(1e-9, theta_max);
            let v = (v0 + dv).clamp(V0_RANGE.0, V0_RANGE.1);
            let cand = model_rms(curve, t, v);
            if cand < r {
                (r, theta, v0) = (cand, t, v);
                moved = true;
                break;
            }
        }
        if !moved {
            step = (step.0 / 2.0, step.1 / 2.0);
        }
    }
    if !r.is_finite() {
        return Err(Error::Estimation("no admissible parameters".into()));
    }
    Ok(ThetaV0 { theta, v0, residual: r })
}

/// Noiseless `(v, p_V)` curve implied by the published three-qubit fit for
/// `(θ, v0)`, over the given `p_V` values.
pub fn synthetic_theta_v0_curve(theta: f64, v0: f64, pvs: &[f64]) -> Result<Vec<(f64, f64)>> {
    let fit = paper_curve_3q(theta)?;
    Ok(pvs.iter().map(|&pv| (fit.eval(pv) / v0, pv)).collect())
}
