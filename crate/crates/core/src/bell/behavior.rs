use nalgebra::Vector3;
use rand::Rng;

use crate::error::{param, Result};
use crate::qstate::{random_bloch_vector, DensityMatrix, C64};

/// Two projective qubit measurements per party, as unit Bloch vectors.
///
/// `directions[i][s]` is the direction of party `i` for setting `s`. The
/// projector for outcome `r` is `(1 + (−1)^r u·σ)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSettings {
    directions: Vec<[Vector3<f64>; 2]>,
}

impl MeasurementSettings {
    pub fn new(directions: Vec<[Vector3<f64>; 2]>) -> Result<Self> {
        if directions.is_empty() {
            return param("at least one party is required");
        }
        for (i, pair) in directions.iter().enumerate() {
            for (s, u) in pair.iter().enumerate() {
                if (u.norm() - 1.0).abs() > 1e-12 {
                    return param(format!("direction of party {i}, setting {s} has norm {}", u.norm()));
                }
            }
        }
        Ok(Self { directions })
    }

    /// Draws `2 n_parties` independent uniform directions, party-major.
    pub fn sample<R: Rng + ?Sized>(n_parties: usize, rng: &mut R) -> Self {
        let directions = (0..n_parties).map(|_| [random_bloch_vector(rng), random_bloch_vector(rng)]).collect();
        Self { directions }
    }

    pub fn n_parties(&self) -> usize {
        self.directions.len()
    }

    pub fn direction(&self, party: usize, setting: usize) -> &Vector3<f64> {
        &self.directions[party][setting]
    }

    pub fn directions(&self) -> &[[Vector3<f64>; 2]] {
        &self.directions
    }
}

/// Joint conditional probabilities `P(r|S)` of an N-party, two-input,
/// two-output experiment.
///
/// Stored flat at index `(S << N) | r`, where the setting and outcome bit
/// strings put party 0 in the most significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Behavior {
    n_parties: usize,
    probs: Vec<f64>,
}

impl Behavior {
    pub fn new(n_parties: usize, probs: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&n_parties) {
            return param(format!("unsupported party count {n_parties}"));
        }
        if probs.len() != 1 << (2 * n_parties) {
            return param(format!("expected {} probabilities, got {}", 1 << (2 * n_parties), probs.len()));
        }
        Ok(Self { n_parties, probs })
    }

    /// Every outcome equally likely for every setting.
    pub fn white_noise(n_parties: usize) -> Self {
        let len = 1 << (2 * n_parties);
        Self { n_parties, probs: vec![1.0 / (1 << n_parties) as f64; len] }
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, settings: usize, outcomes: usize) -> f64 {
        self.probs[(settings << self.n_parties) | outcomes]
    }

    /// `Σ_r (−1)^{|r|} P(r|S)`
    pub fn correlator(&self, settings: usize) -> f64 {
        let n = self.n_parties;
        (0..1usize << n).map(|r| if r.count_ones() % 2 == 0 { 1.0 } else { -1.0 } * self.prob(settings, r)).sum()
    }

    /// `λ·self + (1−λ)·other`
    pub fn mix(&self, other: &Behavior, lambda: f64) -> Result<Behavior> {
        if self.n_parties != other.n_parties {
            return param("behaviors have different party counts");
        }
        let probs = self.probs.iter().zip(&other.probs).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        Ok(Behavior { n_parties: self.n_parties, probs })
    }

    /// Largest deviation of `Σ_r P(r|S)` from one, and the most negative entry.
    pub fn normalization_error(&self) -> f64 {
        let n = self.n_parties;
        let sums = (0..1usize << n).map(|s| ((0..1usize << n).map(|r| self.prob(s, r)).sum::<f64>() - 1.0).abs());
        let neg = self.probs.iter().map(|p| (-p).max(0.0));
        sums.chain(neg).fold(0.0, f64::max)
    }

    /// Largest dependence of any subset marginal on the other parties' settings.
    pub fn signaling_error(&self) -> f64 {
        let n = self.n_parties;
        let full = (1usize << n) - 1;
        let mut worst: f64 = 0.0;
        // marginal on `subset`: sum over outcomes of the complementary parties
        for subset in 1..full {
            let rest = full & !subset;
            for s in 0..1usize << n {
                for r_sub in 0..1usize << n {
                    if r_sub & rest != 0 {
                        continue;
                    }
                    let marginal = |s: usize| -> f64 {
                        (0..1usize << n).filter(|r| r & subset == r_sub).map(|r| self.prob(s, r)).sum()
                    };
                    let here = marginal(s);
                    // flip any setting outside the subset
                    for flip in 1..=rest {
                        if flip & rest != flip {
                            continue;
                        }
                        worst = worst.max((marginal(s ^ flip) - here).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Pauli expansion `T_μ = Tr(ρ σ_{μ₁} ⊗ … ⊗ σ_{μ_N})` with `σ₀ = 1`.
///
/// `μ` is packed base 4 with party 0 most significant. Computing it once per
/// state makes each Monte Carlo behavior a small tensor contraction.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationTensor {
    n_parties: usize,
    t: Vec<f64>,
}

impl CorrelationTensor {
    pub fn from_state(rho: &DensityMatrix) -> Self {
        let n = rho.n_qubits();
        let dim = rho.dim();
        let mut t = vec![0.0; 1 << (2 * n)];
        for (mu, slot) in t.iter_mut().enumerate() {
            let paulis: Vec<usize> = (0..n).map(|i| (mu >> (2 * (n - 1 - i))) & 3).collect();
            // Pauli strings are monomial: column j has its one entry in row j ^ flip
            let mut flip = 0usize;
            for (i, &p) in paulis.iter().enumerate() {
                if p == 1 || p == 2 {
                    flip |= 1 << (n - 1 - i);
                }
            }
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..dim {
                let mut phase = C64::new(1.0, 0.0);
                for (i, &p) in paulis.iter().enumerate() {
                    let bit = (j >> (n - 1 - i)) & 1;
                    phase *= match (p, bit) {
                        (2, 0) => C64::new(0.0, 1.0),
                        (2, _) => C64::new(0.0, -1.0),
                        (3, 1) => C64::new(-1.0, 0.0),
                        _ => C64::new(1.0, 0.0),
                    };
                }
                // Tr(ρ P) = Σ_j ρ[j, k] P[k, j] with k = j ^ flip
                acc += rho.get(j, j ^ flip) * phase;
            }
            *slot = acc.re;
        }
        Self { n_parties: n, t }
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn get(&self, mu: &[usize]) -> f64 {
        let idx = mu.iter().fold(0, |acc, &m| (acc << 2) | m);
        self.t[idx]
    }

    pub fn values(&self) -> &[f64] {
        &self.t
    }

    /// Writes the behavior for `settings` into `out` (length `4^N`).
    pub fn behavior_into(&self, settings: &MeasurementSettings, out: &mut [f64]) {
        let n = self.n_parties;
        let d = 1usize << n;
        let norm = 1.0 / d as f64;
        let mut by_support = [0.0f64; 8];
        for s in 0..d {
            by_support[..d].iter_mut().for_each(|x| *x = 0.0);
            let dirs: [&Vector3<f64>; 3] = std::array::from_fn(|i| {
                if i < n {
                    settings.direction(i, (s >> (n - 1 - i)) & 1)
                } else {
                    settings.direction(0, 0)
                }
            });
            for (mu, &t) in self.t.iter().enumerate() {
                if t == 0.0 {
                    continue;
                }
                let mut value = t;
                let mut support = 0usize;
                for (i, dir) in dirs.iter().enumerate().take(n) {
                    let m = (mu >> (2 * (n - 1 - i))) & 3;
                    if m != 0 {
                        value *= dir[m - 1];
                        support |= 1 << (n - 1 - i);
                    }
                }
                by_support[support] += value;
            }
            for r in 0..d {
                let p: f64 =
                    (0..d).map(|a| if (a & r).count_ones() % 2 == 0 { by_support[a] } else { -by_support[a] }).sum();
                out[(s << n) | r] = p * norm;
            }
        }
    }

    pub fn behavior(&self, settings: &MeasurementSettings) -> Result<Behavior> {
        if settings.n_parties() != self.n_parties {
            return param(format!(
                "settings for {} parties applied to a {}-qubit state",
                settings.n_parties(),
                self.n_parties
            ));
        }
        let mut probs = vec![0.0; 1 << (2 * self.n_parties)];
        self.behavior_into(settings, &mut probs);
        Ok(Behavior { n_parties: self.n_parties, probs })
    }
}

/// `P(r|S) = Tr(M_{r₁|S₁} ⊗ … ⊗ M_{r_N|S_N} ρ)` for projective qubit
/// measurements along the given directions.
pub fn behavior_from_state(rho: &DensityMatrix, settings: &MeasurementSettings) -> Result<Behavior> {
    CorrelationTensor::from_state(rho).behavior(settings)
}
