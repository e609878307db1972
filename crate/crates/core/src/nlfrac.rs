//! Nonlocal fraction: Monte Carlo over uniformly sampled local measurement
//! directions, the two-qubit Werner closed form with its quadrature oracle,
//! and threshold rescaling of violation-strength samples.

use std::f64::consts::SQRT_2;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{CorrelationTensor, InequalitySet, MeasurementSettings};
use crate::error::{param, Error, Result};
use crate::qstate::DensityMatrix;
use crate::rng::{substream, Purpose};
use crate::util::fmt_sig17;

const QUADRATURE_TOL: f64 = 1e-10;

/// Result of a nonlocal-fraction estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvEstimate {
    pub p_v: f64,
    pub std_err: f64,
    pub m: u64,
    pub violations: u64,
    pub set_tag: String,
}

impl PvEstimate {
    /// Binomial estimate `violations / m` with error `√(p(1−p)/m)`.
    pub fn from_counts(violations: u64, m: u64, set_tag: impl Into<String>) -> Self {
        let p = violations as f64 / m as f64;
        Self { p_v: p, std_err: (p * (1.0 - p) / m as f64).sqrt(), m, violations, set_tag: set_tag.into() }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("estimate serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Provenance tag for estimates from `set`. Sets that do not cover every
/// known inequality class are marked as giving a lower bound.
pub fn set_provenance(set: &InequalitySet) -> String {
    if set.is_complete() {
        set.tag().to_string()
    } else {
        format!("{};lower-bound", set.tag())
    }
}

/// Measurement settings of sample `index` under `seed`.
pub fn sample_settings(seed: u64, index: u64, n_parties: usize) -> MeasurementSettings {
    let mut rng = substream(seed, Purpose::MeasurementSettings, index);
    MeasurementSettings::sample(n_parties, &mut rng)
}

/// Runs `f` on a pool of `workers` threads; zero means the rayon default.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn check_run(rho: &DensityMatrix, set: &InequalitySet, m: u64) -> Result<()> {
    if m == 0 {
        return param("sample count must be at least 1");
    }
    if set.is_empty() {
        return param("inequality set is empty");
    }
    if rho.n_qubits() != set.n_parties() {
        return param(format!("{}-qubit state against a {}-party inequality set", rho.n_qubits(), set.n_parties()));
    }
    Ok(())
}

fn violation_values(rho: &DensityMatrix, set: &InequalitySet, m: u64, seed: u64) -> Vec<f64> {
    let tensor = CorrelationTensor::from_state(rho);
    let n = rho.n_qubits();
    (0..m)
        .into_par_iter()
        .map_init(
            || vec![0.0; 1 << (2 * n)],
            |probs, i| {
                tensor.behavior_into(&sample_settings(seed, i, n), probs);
                set.max_value_of(probs)
            },
        )
        .collect()
}

/// Fraction of `m` sampled settings whose behavior violates some member of
/// `set`. The sample set depends only on `(seed, m)`, not on `workers`.
pub fn estimate_pv(rho: &DensityMatrix, set: &InequalitySet, m: u64, seed: u64, workers: usize) -> Result<PvEstimate> {
    check_run(rho, set, m)?;
    let tensor = CorrelationTensor::from_state(rho);
    let n = rho.n_qubits();
    let violations = with_workers(workers, || {
        (0..m)
            .into_par_iter()
            .map_init(
                || vec![0.0; 1 << (2 * n)],
                |probs, i| {
                    tensor.behavior_into(&sample_settings(seed, i, n), probs);
                    u64::from(set.max_value_of(probs) > 1.0)
                },
            )
            .sum::<u64>()
    })?;
    Ok(PvEstimate::from_counts(violations, m, set_provenance(set)))
}

fn check_v(v: f64) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return param(format!("visibility {v} outside (0, 1]"));
    }
    Ok(())
}

/// Closed-form nonlocal fraction of the two-qubit Werner state:
/// `2[(1+v²)·arctan(√(2v²−1)/(1−v²)) − 3√(2v²−1)]/v²`, zero for `v ≤ 1/√2`.
pub fn pv_werner2_closed(v: f64) -> Result<f64> {
    check_v(v)?;
    let s2 = 2.0 * v * v - 1.0;
    if s2 <= 0.0 {
        return Ok(0.0);
    }
    let s = s2.sqrt();
    // atan2 keeps the branch in [0, π/2] and handles v = 1; the clamp absorbs
    // cancellation just above 1/√2
    Ok((2.0 * ((1.0 + v * v) * s.atan2(1.0 - v * v) - 3.0 * s) / (v * v)).max(0.0))
}

/// The closed form with `(1−v²)` on the arctangent, as originally printed.
/// It is negative near `v = 1` and is kept for comparison only.
pub fn pv_werner2_closed_as_printed(v: f64) -> Result<f64> {
    check_v(v)?;
    let s2 = 2.0 * v * v - 1.0;
    if s2 <= 0.0 {
        return Ok(0.0);
    }
    let s = s2.sqrt();
    Ok(2.0 * ((1.0 - v * v) * s.atan2(1.0 - v * v) - 3.0 * s) / (v * v))
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Numerical integral of the violating volume of the reduced CHSH cube,
/// times four for the relabelings. Integrates in `t` with `x = sin t`.
pub fn pv_werner2_quadrature(v: f64) -> Result<f64> {
    check_v(v)?;
    let s2 = 2.0 * v * v - 1.0;
    if s2 <= 0.0 {
        return Ok(0.0);
    }
    let x_max = (s2 / v.powi(4)).sqrt().min(1.0);
    let t_max = x_max.asin();
    let integrand = |t: f64| {
        let x = t.sin();
        let gap = SQRT_2 - v * ((1.0 - x).max(0.0).sqrt() + (1.0 + x).sqrt());
        4.0 * gap * gap / (8.0 * v * v)
    };
    Ok(adaptive_simpson(integrand, -t_max, t_max, QUADRATURE_TOL))
}

/// Samples `(α, β, x)` uniformly in `[−1, 1]³` and counts points with
/// `|α√(1+x) + β√(1−x)| > √2/v`.
///
/// The reported `p_v` is four times the violating volume fraction and
/// `std_err` is scaled by the same factor.
pub fn sample_chsh_reduced(v: f64, m: u64, seed: u64, workers: usize) -> Result<PvEstimate> {
    check_v(v)?;
    if m == 0 {
        return param("sample count must be at least 1");
    }
    let threshold = SQRT_2 / v;
    let violations = with_workers(workers, || {
        (0..m)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, Purpose::ReducedCube, i);
                let alpha: f64 = rng.random_range(-1.0..=1.0);
                let beta: f64 = rng.random_range(-1.0..=1.0);
                let x: f64 = rng.random_range(-1.0..=1.0);
                let value = alpha * (1.0 + x).sqrt() + beta * (1.0 - x).sqrt();
                u64::from(value.abs() > threshold)
            })
            .sum::<u64>()
    })?;
    let f = violations as f64 / m as f64;
    Ok(PvEstimate {
        p_v: 4.0 * f,
        std_err: 4.0 * (f * (1.0 - f) / m as f64).sqrt(),
        m,
        violations,
        set_tag: "chsh-reduced".into(),
    })
}

/// Maximal normalized Bell values for a run of sampled settings.
#[derive(Clone, Debug, PartialEq)]
pub struct ViolationSamples {
    pub values: Vec<f64>,
    pub state_tag: String,
    pub seed: u64,
    pub set_tag: String,
}

#[derive(Serialize, Deserialize)]
struct SamplesSidecar {
    state_tag: String,
    seed: u64,
    m: u64,
    set_tag: String,
}

impl ViolationSamples {
    pub fn m(&self) -> u64 {
        self.values.len() as u64
    }

    /// Sidecar location for a samples CSV: the same path with a `.json`
    /// extension.
    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("i_max\n");
        for v in &self.values {
            s.push_str(&fmt_sig17(*v));
            s.push('\n');
        }
        s
    }

    pub fn sidecar_json(&self) -> String {
        let side = SamplesSidecar {
            state_tag: self.state_tag.clone(),
            seed: self.seed,
            m: self.m(),
            set_tag: self.set_tag.clone(),
        };
        let mut s = serde_json::to_string_pretty(&side).expect("sidecar serializes");
        s.push('\n');
        s
    }

    /// Writes the CSV and its JSON sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        fs::write(Self::sidecar_path(path), self.sidecar_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingData(path.to_path_buf()));
        }
        let side_path = Self::sidecar_path(path);
        if !side_path.is_file() {
            return Err(Error::MissingData(side_path));
        }
        let side: SamplesSidecar = serde_json::from_str(&fs::read_to_string(&side_path)?)?;
        let mut reader = csv::Reader::from_path(path)?;
        if reader.headers()?.iter().collect::<Vec<_>>() != ["i_max"] {
            return Err(Error::Load { row: 1, message: "expected header `i_max`".into() });
        }
        let mut values = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let value: f64 = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Load { row, message: "invalid value".into() })?;
            if !value.is_finite() {
                return Err(Error::Load { row, message: "value is not finite".into() });
            }
            values.push(value);
        }
        if values.len() as u64 != side.m {
            return Err(Error::Load {
                row: values.len() + 1,
                message: format!("sidecar declares {} samples, file has {}", side.m, values.len()),
            });
        }
        Ok(Self { values, state_tag: side.state_tag, seed: side.seed, set_tag: side.set_tag })
    }
}

/// Maximal normalized Bell value for each of `m` sampled settings, in
/// sample order.
pub fn violation_distribution(
    rho: &DensityMatrix,
    set: &InequalitySet,
    m: u64,
    seed: u64,
    workers: usize,
    state_tag: impl Into<String>,
) -> Result<ViolationSamples> {
    check_run(rho, set, m)?;
    let values = with_workers(workers, || violation_values(rho, set, m, seed))?;
    Ok(ViolationSamples { values, state_tag: state_tag.into(), seed, set_tag: set_provenance(set) })
}

fn fraction_above(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&x| x > threshold).count() as f64 / values.len() as f64
}

/// Fraction of samples strictly above `1/v`: the nonlocal fraction of the
/// reference state mixed with white noise at visibility `v`.
pub fn pv_from_distribution(samples: &ViolationSamples, v: f64) -> Result<f64> {
    check_v(v)?;
    Ok(fraction_above(&samples.values, 1.0 / v))
}

/// Fractions above `1/v + epsilon` and `1/v − epsilon`.
pub fn pv_threshold_sensitivity(samples: &ViolationSamples, v: f64, epsilon: f64) -> Result<(f64, f64)> {
    check_v(v)?;
    if !(epsilon >= 0.0) {
        return param(format!("threshold margin {epsilon} must be non-negative"));
    }
    let t = 1.0 / v;
    Ok((fraction_above(&samples.values, t + epsilon), fraction_above(&samples.values, t - epsilon)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::default_bundled_set;
    use crate::qstate::{gghz, werner_like};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

    fn samples(values: &[f64]) -> ViolationSamples {
        ViolationSamples { values: values.to_vec(), state_tag: "t".into(), seed: 0, set_tag: "s".into() }
    }

    #[test]
    fn closed_form_anchors() {
        assert_eq!(pv_werner2_closed(FRAC_1_SQRT_2).unwrap(), 0.0);
        assert!((pv_werner2_closed(1.0).unwrap() - 2.0 * (PI - 3.0)).abs() < 1e-15);
        assert!((pv_werner2_closed(0.9).unwrap() - 0.1293283).abs() < 1e-7);
        assert!(pv_werner2_closed(0.0).is_err());
        assert!(pv_werner2_closed(1.01).is_err());
        assert!((pv_werner2_closed_as_printed(1.0).unwrap() + 6.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_is_increasing_and_continuous() {
        let mut prev = 0.0;
        for k in 1..=300 {
            let v = FRAC_1_SQRT_2 + k as f64 * (1.0 - FRAC_1_SQRT_2) / 300.0;
            let p = pv_werner2_closed(v).unwrap();
            assert!(p > prev);
            prev = p;
        }
        assert!(pv_werner2_closed(FRAC_1_SQRT_2 + 1e-12).unwrap() < 1e-12);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        assert!((pv_werner2_quadrature(1.0).unwrap() - 2.0 * (PI - 3.0)).abs() < 1e-9);
        assert_eq!(pv_werner2_quadrature(0.7).unwrap(), 0.0);
        for v in [0.72, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0] {
            let q = pv_werner2_quadrature(v).unwrap();
            assert!((q - pv_werner2_closed(v).unwrap()).abs() < 1e-8, "v = {v}");
        }
    }

    #[test]
    fn simpson_integrates_polynomials_and_sine() {
        assert!((adaptive_simpson(|x| x * x, 0.0, 3.0, 1e-12) - 9.0).abs() < 1e-12);
        assert!((adaptive_simpson(f64::sin, 0.0, PI, 1e-12) - 2.0).abs() < 1e-11);
    }

    #[test]
    fn below_critical_visibility_nothing_violates() {
        let set = default_bundled_set(2).unwrap();
        let rho = werner_like(FRAC_PI_4, 0.70, 2).unwrap();
        let est = estimate_pv(&rho, &set, 20_000, 3, 2).unwrap();
        assert_eq!(est.violations, 0);
        assert_eq!(est.p_v, 0.0);
        assert_eq!(sample_chsh_reduced(0.7, 20_000, 3, 2).unwrap().violations, 0);
    }

    #[test]
    fn estimate_is_worker_independent() {
        let set = default_bundled_set(2).unwrap();
        let rho = werner_like(FRAC_PI_4, 0.9, 2).unwrap();
        let a = estimate_pv(&rho, &set, 5_000, 11, 1).unwrap();
        let b = estimate_pv(&rho, &set, 5_000, 11, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.set_tag, "chsh");
        assert_eq!(a.p_v, a.violations as f64 / 5_000.0);
    }

    #[test]
    fn distribution_recovers_estimate() {
        let set = default_bundled_set(2).unwrap();
        let rho = gghz(FRAC_PI_4, 2).unwrap().projector();
        let d = violation_distribution(&rho, &set, 4_000, 5, 2, "phi+").unwrap();
        let e = estimate_pv(&rho, &set, 4_000, 5, 1).unwrap();
        assert_eq!(pv_from_distribution(&d, 1.0).unwrap(), e.p_v);
        let max = d.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max <= SQRT_2 + 1e-12 && max > 1.3);
        let wn = violation_distribution(&DensityMatrix::maximally_mixed(2), &set, 500, 5, 1, "wn").unwrap();
        assert!(wn.values.iter().all(|&x| x <= 1.0));
    }

    #[test]
    fn threshold_arithmetic() {
        let s = samples(&[1.2, 0.9, 1.05, 0.7]);
        assert_eq!(pv_from_distribution(&s, 1.0).unwrap(), 0.5);
        assert_eq!(pv_from_distribution(&s, 0.9).unwrap(), 0.25);
        assert_eq!(pv_from_distribution(&s, 0.8).unwrap(), 0.0);
        assert_eq!(pv_threshold_sensitivity(&s, 0.9, 0.0).unwrap(), (0.25, 0.25));
        let t = samples(&[1.01, 0.99]);
        assert_eq!(pv_threshold_sensitivity(&t, 1.0, 0.015).unwrap(), (0.0, 1.0));
        assert!(pv_threshold_sensitivity(&t, 1.0, -0.1).is_err());
    }

    #[test]
    fn samples_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let s = ViolationSamples {
            values: vec![0.1, 1.0 / 3.0, 1.25],
            state_tag: "x".into(),
            seed: 9,
            set_tag: "y".into(),
        };
        s.save(&path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("i_max\n"));
        assert_eq!(ViolationSamples::load(&path).unwrap(), s);
        std::fs::remove_file(ViolationSamples::sidecar_path(&path)).unwrap();
        assert!(matches!(ViolationSamples::load(&path), Err(Error::MissingData(_))));
    }

    #[test]
    fn estimate_json_round_trip() {
        let e = PvEstimate::from_counts(3, 7, "chsh");
        let text = e.to_json();
        for key in ["p_v", "std_err", "m", "violations", "set_tag"] {
            assert!(text.contains(&format!("\"{key}\"")));
        }
        assert_eq!(PvEstimate::from_json(&text).unwrap(), e);
    }

    #[test]
    fn invalid_runs_are_rejected() {
        let set = default_bundled_set(2).unwrap();
        let rho = werner_like(FRAC_PI_4, 0.9, 2).unwrap();
        assert!(estimate_pv(&rho, &set, 0, 1, 1).is_err());
        assert!(estimate_pv(&werner_like(FRAC_PI_4, 0.9, 3).unwrap(), &set, 10, 1, 1).is_err());
    }
}
