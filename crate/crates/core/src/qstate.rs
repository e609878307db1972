//! Pure states, density matrices, and the state families used throughout the
//! crate.
//!
//! Qubit ordering: qubit 0 is the leftmost ket label and the most significant
//! bit of a basis index, so `|01⟩` is basis vector 1 and `|100⟩` is basis
//! vector 4. The X-state pairing in [`crate::entanglement`] relies on this.
//!
//! Angles are radians everywhere in this module.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use nalgebra::{DMatrix, DVector, Matrix2, Vector3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{param, Error, Result};
use crate::util::fmt_sig17;

pub type C64 = Complex64;

const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
/// Smallest admissible eigenvalue of a density matrix.
pub const PSD_TOL: f64 = 1e-10;
const EIGEN_NOISE: f64 = 1e-13;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn check_n_qubits(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        param(format!("n_qubits must be 2 or 3, got {n}"))
    }
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= FRAC_PI_4 + 1e-15 {
        Ok(())
    } else {
        param(format!("theta must lie in (0, pi/4], got {theta}"))
    }
}

pub(crate) fn check_visibility(v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        param(format!("visibility must lie in (0, 1], got {v}"))
    }
}

/// Normalized state vector of two or three qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: DVector<C64>,
}

impl PureState {
    pub fn new(n_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        check_n_qubits(n_qubits)?;
        let dim = 1usize << n_qubits;
        if amplitudes.len() != dim {
            return param(format!("expected {dim} amplitudes, got {}", amplitudes.len()));
        }
        let amplitudes = DVector::from_vec(amplitudes);
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return param(format!("state norm {norm} differs from 1"));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> DensityMatrix {
        let entries = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix { n_qubits: self.n_qubits, entries }
    }

    pub fn to_json(&self) -> String {
        json_pairs("amplitudes", self.n_qubits, self.amplitudes.iter())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            n_qubits: usize,
            amplitudes: Vec<[f64; 2]>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let amps = raw.amplitudes.iter().map(|&[re, im]| C64::new(re, im)).collect();
        Self::new(raw.n_qubits, amps)
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix on two or three qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates `entries` as a state.
    ///
    /// Eigenvalues in `[-PSD_TOL, 0)` are clamped to zero and the matrix is
    /// rebuilt from its spectrum; anything more negative is rejected.
    pub fn new(n_qubits: usize, entries: DMatrix<C64>) -> Result<Self> {
        Self::with_tolerances(n_qubits, entries, HERMITIAN_TOL, TRACE_TOL)
    }

    /// Same as [`DensityMatrix::new`] with explicit Hermiticity and trace
    /// tolerances, for matrices read from rounded text.
    pub fn with_tolerances(n_qubits: usize, entries: DMatrix<C64>, hermitian_tol: f64, trace_tol: f64) -> Result<Self> {
        if !(1..=3).contains(&n_qubits) {
            return param(format!("n_qubits must be 1..=3, got {n_qubits}"));
        }
        let dim = 1usize << n_qubits;
        if entries.nrows() != dim || entries.ncols() != dim {
            return param(format!("expected a {dim}x{dim} matrix, got {}x{}", entries.nrows(), entries.ncols()));
        }
        let asym = (&entries - entries.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > hermitian_tol {
            return param(format!("matrix is not Hermitian (max |rho - rho^dag| = {asym:e})"));
        }
        let trace = entries.trace();
        if (trace.re - 1.0).abs() > trace_tol || trace.im.abs() > trace_tol {
            return param(format!("trace {trace} differs from 1"));
        }
        // symmetrize exactly so downstream eigen-solvers see a Hermitian input
        let entries = (&entries + entries.adjoint()).scale(0.5);
        let eig = entries.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return param(format!("matrix is not positive semidefinite (min eigenvalue {min:e})"));
        }
        // eigen-solver noise on exact zeros sits around 1e-16; leave it alone
        let entries = if min < -EIGEN_NOISE {
            let clamped = eig.eigenvalues.map(|l| c(l.max(0.0)));
            let q = &eig.eigenvectors;
            let rebuilt = q * DMatrix::from_diagonal(&clamped) * q.adjoint();
            let tr = rebuilt.trace().re;
            rebuilt.unscale(tr)
        } else {
            entries
        };
        Ok(Self { n_qubits, entries })
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self { n_qubits, entries: DMatrix::identity(dim, dim).unscale(dim as f64) }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.entries[(row, col)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `w·self + (1−w)·other`
    pub fn mix(&self, other: &DensityMatrix, w: f64) -> Result<DensityMatrix> {
        if self.n_qubits != other.n_qubits {
            return param("cannot mix states of different sizes");
        }
        if !(0.0..=1.0).contains(&w) {
            return param(format!("mixing weight {w} outside [0, 1]"));
        }
        Ok(Self { n_qubits: self.n_qubits, entries: self.entries.scale(w) + other.entries.scale(1.0 - w) })
    }

    pub fn to_json(&self) -> String {
        json_pairs("entries", self.n_qubits, self.entries.transpose().iter())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            n_qubits: usize,
            entries: Vec<[f64; 2]>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let dim = 1usize << raw.n_qubits.min(8);
        if raw.entries.len() != dim * dim {
            return param(format!("expected {} entries, got {}", dim * dim, raw.entries.len()));
        }
        let m = DMatrix::from_row_iterator(dim, dim, raw.entries.iter().map(|&[re, im]| C64::new(re, im)));
        Self::with_tolerances(raw.n_qubits, m, 1e-9, 1e-9)
    }
}

fn json_pairs<'a>(key: &str, n: usize, values: impl Iterator<Item = &'a C64>) -> String {
    let body: Vec<String> = values.map(|z| format!("[{}, {}]", fmt_sig17(z.re), fmt_sig17(z.im))).collect();
    format!("{{\"n_qubits\": {n}, \"{key}\": [{}]}}\n", body.join(", "))
}

/// Single-qubit unitary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalUnitary(Matrix2<C64>);

impl LocalUnitary {
    pub fn new(u: Matrix2<C64>) -> Result<Self> {
        let dev = (u.adjoint() * u - Matrix2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > 1e-12 {
            return param(format!("matrix is not unitary (max |U^dag U - 1| = {dev:e})"));
        }
        Ok(Self(u))
    }

    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    pub fn pauli_x() -> Self {
        Self(Matrix2::new(c(0.0), c(1.0), c(1.0), c(0.0)))
    }

    pub fn matrix(&self) -> &Matrix2<C64> {
        &self.0
    }
}

/// `cos θ |0…0⟩ + sin θ |1…1⟩`
pub fn gghz(theta: f64, n_qubits: usize) -> Result<PureState> {
    check_theta(theta)?;
    check_n_qubits(n_qubits)?;
    Ok(ghz_like(n_qubits, theta.cos(), theta.sin()))
}

fn ghz_like(n_qubits: usize, a: f64, b: f64) -> PureState {
    let dim = 1usize << n_qubits;
    let mut amps = DVector::zeros(dim);
    amps[0] = c(a);
    amps[dim - 1] = c(b);
    PureState { n_qubits, amplitudes: amps }
}

/// `|±45°⟩ = (|0…0⟩ ± |1…1⟩)/√2`
fn ghz_pm(n_qubits: usize, sign: f64) -> DensityMatrix {
    ghz_like(n_qubits, FRAC_1_SQRT_2, sign * FRAC_1_SQRT_2).projector()
}

/// `v |θ⟩⟨θ| + (1−v)/2ⁿ · 1`
pub fn werner_like(theta: f64, v: f64, n_qubits: usize) -> Result<DensityMatrix> {
    check_visibility(v)?;
    let pure = gghz(theta, n_qubits)?.projector();
    pure.mix(&DensityMatrix::maximally_mixed(n_qubits), v)
}

pub(crate) fn check_gsms2(x: f64, y: f64) -> Result<()> {
    let s2 = 2f64.sqrt();
    if y.abs() > 1.0 / (2.0 * s2) + 1e-15 || x.abs() > (1.0 + 2.0 * s2 * y) / 4.0 + 1e-15 {
        return param(format!("(x, y) = ({x}, {y}) outside the admissible GSMS2 region"));
    }
    Ok(())
}

pub(crate) fn check_gsms3(x: f64, y: f64) -> Result<()> {
    let s3 = 3f64.sqrt();
    if y < -1.0 / (4.0 * s3) - 1e-15 || y > s3 / 4.0 + 1e-15 || x.abs() > (1.0 + 4.0 * s3 * y) / 8.0 + 1e-15 {
        return param(format!("(x, y) = ({x}, {y}) outside the admissible GSMS3 region"));
    }
    Ok(())
}

/// Two-qubit GHZ-symmetric state.
pub fn gsms2(x: f64, y: f64) -> Result<DensityMatrix> {
    check_gsms2(x, y)?;
    let s2 = 2f64.sqrt();
    let plus = ghz_pm(2, 1.0).entries.scale(s2 * y + x);
    let minus = ghz_pm(2, -1.0).entries.scale(s2 * y - x);
    let noise = DMatrix::identity(4, 4).scale((1.0 - 2.0 * s2 * y) / 4.0);
    DensityMatrix::new(2, plus + minus + noise)
}

/// Three-qubit GHZ-symmetric state.
pub fn gsms3(x: f64, y: f64) -> Result<DensityMatrix> {
    check_gsms3(x, y)?;
    let s3 = 3f64.sqrt();
    let w = 2.0 * s3 / 3.0 * y;
    let plus = ghz_pm(3, 1.0).entries.scale(w + x);
    let minus = ghz_pm(3, -1.0).entries.scale(w - x);
    let noise = DMatrix::identity(8, 8).scale((3.0 - 4.0 * s3 * y) / 24.0);
    DensityMatrix::new(3, plus + minus + noise)
}

/// `γ |Φ+⟩⟨Φ+| + (1−γ) |01⟩⟨01|`, for `2/3 ≤ γ ≤ 1`.
pub fn mems(gamma: f64) -> Result<DensityMatrix> {
    if !(2.0 / 3.0 - 1e-15..=1.0).contains(&gamma) {
        return param(format!("gamma must lie in [2/3, 1], got {gamma}"));
    }
    let mut m = ghz_pm(2, 1.0).entries.scale(gamma);
    m[(1, 1)] += c(1.0 - gamma);
    DensityMatrix::new(2, m)
}

/// GHZ state under local phase damping:
/// `(1/2+x) |+GHZ⟩⟨+GHZ| + (1/2−x) |−GHZ⟩⟨−GHZ|`.
pub fn phn(x: f64, n_qubits: usize) -> Result<DensityMatrix> {
    check_n_qubits(n_qubits)?;
    if x.abs() > 0.5 {
        return param(format!("|x| must not exceed 1/2, got {x}"));
    }
    let m = ghz_pm(n_qubits, 1.0).entries.scale(0.5 + x) + ghz_pm(n_qubits, -1.0).entries.scale(0.5 - x);
    DensityMatrix::new(n_qubits, m)
}

/// Computational basis state from a bit string such as `"010"`.
pub fn basis_state(bits: &str) -> Result<PureState> {
    let n = bits.len();
    check_n_qubits(n)?;
    let index = bits.chars().try_fold(0usize, |acc, ch| match ch {
        '0' => Ok(acc << 1),
        '1' => Ok((acc << 1) | 1),
        _ => Err(Error::Parameter(format!("invalid bit '{ch}' in {bits:?}"))),
    })?;
    let mut amps = DVector::zeros(1 << n);
    amps[index] = c(1.0);
    Ok(PureState { n_qubits: n, amplitudes: amps })
}

fn kron_all(us: &[LocalUnitary]) -> DMatrix<C64> {
    us.iter().fold(DMatrix::from_element(1, 1, c(1.0)), |acc, u| {
        let m = DMatrix::from_column_slice(2, 2, u.0.as_slice());
        acc.kronecker(&m)
    })
}

/// `(U₁⊗…⊗U_N) ρ (U₁⊗…⊗U_N)†`, one unitary per qubit in qubit order.
pub fn apply_local_unitaries(rho: &DensityMatrix, us: &[LocalUnitary]) -> Result<DensityMatrix> {
    if us.len() != rho.n_qubits {
        return param(format!("expected {} unitaries, got {}", rho.n_qubits, us.len()));
    }
    for u in us {
        LocalUnitary::new(u.0)?;
    }
    let u = kron_all(us);
    let out = &u * &rho.entries * u.adjoint();
    Ok(DensityMatrix { n_qubits: rho.n_qubits, entries: (&out + out.adjoint()).scale(0.5) })
}

/// Reduced state on the qubits listed in `keep` (kept in ascending order).
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_qubits;
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.is_empty() || keep.len() >= n || keep.iter().any(|&q| q >= n) {
        return param(format!("invalid subset {keep:?} of {n} qubits"));
    }
    let traced: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
    let bit = |q: usize| 1usize << (n - 1 - q);
    let compose = |kept_idx: usize, traced_idx: usize| -> usize {
        let mut full = 0;
        for (k, &q) in keep.iter().enumerate() {
            if kept_idx & (1 << (keep.len() - 1 - k)) != 0 {
                full |= bit(q);
            }
        }
        for (k, &q) in traced.iter().enumerate() {
            if traced_idx & (1 << (traced.len() - 1 - k)) != 0 {
                full |= bit(q);
            }
        }
        full
    };
    let dk = 1usize << keep.len();
    let dt = 1usize << traced.len();
    let mut out = DMatrix::zeros(dk, dk);
    for i in 0..dk {
        for j in 0..dk {
            out[(i, j)] = (0..dt).map(|t| rho.entries[(compose(i, t), compose(j, t))]).sum();
        }
    }
    Ok(DensityMatrix { n_qubits: keep.len(), entries: out })
}

/// `Tr ρ²`
pub fn purity(rho: &DensityMatrix) -> f64 {
    rho.entries.iter().map(|z| z.norm_sqr()).sum()
}

/// `⟨ψ|ρ|ψ⟩`
pub fn fidelity_pure(rho: &DensityMatrix, psi: &PureState) -> Result<f64> {
    if rho.n_qubits != psi.n_qubits {
        return param("state sizes differ");
    }
    let a = &psi.amplitudes;
    Ok((a.adjoint() * &rho.entries * a)[(0, 0)].re)
}

/// Inverts `P = (1 + 7v²)/8` for a three-qubit white-noise mixture.
pub fn visibility_from_purity(p: f64) -> Result<f64> {
    if !(1.0 / 8.0..=1.0).contains(&p) {
        return param(format!("purity {p} outside [1/8, 1]"));
    }
    Ok(((8.0 * p - 1.0) / 7.0).sqrt())
}

/// Uniform point on the unit sphere from three normalized standard normals.
pub fn random_bloch_vector<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v: Vector3<f64> =
            Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Haar-distributed element of U(2): Gram–Schmidt on a complex Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R) -> LocalUnitary {
    let mut gauss = || C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let (a0, a1, b0, b1) = (gauss(), gauss(), gauss(), gauss());
    let na = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
    let (e0, e1) = (a0 / na, a1 / na);
    let proj = e0.conj() * b0 + e1.conj() * b1;
    let (f0, f1) = (b0 - proj * e0, b1 - proj * e1);
    let nf = (f0.norm_sqr() + f1.norm_sqr()).sqrt();
    LocalUnitary(Matrix2::new(e0, f0 / nf, e1, f1 / nf))
}
