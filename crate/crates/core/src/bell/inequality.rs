use std::collections::{HashSet, VecDeque};

use sha2::{Digest, Sha256};

use super::behavior::Behavior;
use crate::error::{param, Result};

const KEY_QUANTUM: f64 = 1e-9;

/// Linear Bell functional `Σ µ_r^S P(r|S) ≤ C`.
///
/// Coefficients are indexed like [`Behavior`]: `(S << N) | r`.
#[derive(Clone, Debug, PartialEq)]
pub struct BellInequality {
    n_parties: usize,
    coefficients: Vec<f64>,
    lhv_bound: f64,
    name: String,
}

impl BellInequality {
    pub fn new(n_parties: usize, coefficients: Vec<f64>, lhv_bound: f64, name: impl Into<String>) -> Result<Self> {
        if !(2..=3).contains(&n_parties) {
            return param(format!("unsupported party count {n_parties}"));
        }
        if coefficients.len() != 1 << (2 * n_parties) {
            return param(format!("expected {} coefficients, got {}", 1 << (2 * n_parties), coefficients.len()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return param("coefficients must be finite");
        }
        if coefficients.iter().all(|&c| c == 0.0) {
            return param("inequality has no nonzero coefficient");
        }
        if !(lhv_bound.is_finite() && lhv_bound > 0.0) {
            return param(format!("local bound must be positive, got {lhv_bound}"));
        }
        Ok(Self { n_parties, coefficients, lhv_bound, name: name.into() })
    }

    /// Builds a full-correlation inequality `Σ_S c_S E(S) ≤ bound`.
    ///
    /// `signs[S]` multiplies the N-party correlator for setting string `S`.
    pub fn from_correlators(n_parties: usize, signs: &[f64], lhv_bound: f64, name: impl Into<String>) -> Result<Self> {
        let d = 1usize << n_parties;
        if signs.len() != d {
            return param(format!("expected {d} correlator weights, got {}", signs.len()));
        }
        let mut coefficients = vec![0.0; d * d];
        for (s, &c) in signs.iter().enumerate() {
            for r in 0..d {
                coefficients[(s << n_parties) | r] = if r.count_ones() % 2 == 0 { c } else { -c };
            }
        }
        Self::new(n_parties, coefficients, lhv_bound, name)
    }

    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, settings: usize, outcomes: usize) -> f64 {
        self.coefficients[(settings << self.n_parties) | outcomes]
    }

    pub fn lhv_bound(&self) -> f64 {
        self.lhv_bound
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Same functional rescaled to local bound 1.
    pub fn normalized(&self) -> BellInequality {
        let coefficients = self.coefficients.iter().map(|c| c / self.lhv_bound).collect();
        BellInequality { n_parties: self.n_parties, coefficients, lhv_bound: 1.0, name: self.name.clone() }
    }

    /// True when only the N-party correlators carry weight.
    pub fn is_full_correlation(&self) -> bool {
        let n = self.n_parties;
        (0..1usize << n).all(|s| {
            let c = self.coefficient(s, 0);
            (0..1usize << n).all(|r| {
                let expected = if r.count_ones() % 2 == 0 { c } else { -c };
                self.coefficient(s, r) == expected
            })
        })
    }

    /// Normalized value on the white-noise behavior.
    pub fn white_noise_value(&self) -> f64 {
        let total: f64 = self.coefficients.iter().sum();
        total / (1usize << self.n_parties) as f64 / self.lhv_bound
    }

    /// Applies a relabeling to the functional, so that
    /// `evaluate(g·I, g·P) = evaluate(I, P)`.
    pub fn relabeled(&self, g: &Relabeling) -> Result<BellInequality> {
        let coefficients = g.apply_table(self.n_parties, &self.coefficients)?;
        Ok(BellInequality {
            n_parties: self.n_parties,
            coefficients,
            lhv_bound: self.lhv_bound,
            name: self.name.clone(),
        })
    }

    /// Quantized coefficients at unit bound, in table order.
    pub fn dedup_key(&self) -> Vec<i64> {
        self.coefficients.iter().map(|c| (c / self.lhv_bound / KEY_QUANTUM).round() as i64).collect()
    }

    /// Hex SHA-256 of the dedup key.
    pub fn dedup_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n_parties as u64).to_le_bytes());
        for k in self.dedup_key() {
            h.update(k.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Normalized value `Σ µ·P / C`. Violation iff the result exceeds one.
pub fn evaluate(ineq: &BellInequality, b: &Behavior) -> Result<f64> {
    if ineq.n_parties() != b.n_parties() {
        return param(format!("{}-party inequality applied to a {}-party behavior", ineq.n_parties(), b.n_parties()));
    }
    let dot: f64 = ineq.coefficients.iter().zip(b.probs()).map(|(c, p)| c * p).sum();
    Ok(dot / ineq.lhv_bound)
}

/// Element of the relabeling group: a party permutation, then per-party input
/// swaps, then per-party-per-input output flips.
///
/// Acting on a table `T`, the new party `i` is the old party `perm[i]`, and
/// `(g·T)(S, r) = T(S', r')` with `S'_{perm[i]} = S_i ⊕ swap_i` and
/// `r'_{perm[i]} = r_i ⊕ flip_i[S'_{perm[i]}]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Relabeling {
    pub perm: Vec<usize>,
    pub input_swap: Vec<bool>,
    pub output_flip: Vec<[bool; 2]>,
}

impl Relabeling {
    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect(), input_swap: vec![false; n], output_flip: vec![[false; 2]; n] }
    }

    pub fn swap_parties(n: usize, a: usize, b: usize) -> Self {
        let mut g = Self::identity(n);
        g.perm.swap(a, b);
        g
    }

    pub fn swap_inputs(n: usize, party: usize) -> Self {
        let mut g = Self::identity(n);
        g.input_swap[party] = true;
        g
    }

    pub fn flip_output(n: usize, party: usize, input: usize) -> Self {
        let mut g = Self::identity(n);
        g.output_flip[party][input] = true;
        g
    }

    /// Adjacent party transpositions, input swaps and output flips.
    pub fn generators(n: usize) -> Vec<Relabeling> {
        let mut gens = Vec::new();
        for a in 0..n.saturating_sub(1) {
            gens.push(Self::swap_parties(n, a, a + 1));
        }
        for p in 0..n {
            gens.push(Self::swap_inputs(n, p));
        }
        for p in 0..n {
            for x in 0..2 {
                gens.push(Self::flip_output(n, p, x));
            }
        }
        gens
    }

    fn n(&self) -> usize {
        self.perm.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.input_swap.len() != n || self.output_flip.len() != n {
            return param("relabeling components have inconsistent lengths");
        }
        let mut seen = vec![false; n];
        for &p in &self.perm {
            if p >= n || seen[p] {
                return param("relabeling party map is not a permutation");
            }
            seen[p] = true;
        }
        Ok(())
    }

    /// Source index in the old table for each index of the new table.
    fn source_index(&self, s: usize, r: usize) -> usize {
        let n = self.n();
        let bit = |x: usize, i: usize| (x >> (n - 1 - i)) & 1;
        let mut s_old = 0usize;
        let mut r_old = 0usize;
        for i in 0..n {
            let old = self.perm[i];
            let so = bit(s, i) ^ usize::from(self.input_swap[i]);
            let ro = bit(r, i) ^ usize::from(self.output_flip[i][so]);
            s_old |= so << (n - 1 - old);
            r_old |= ro << (n - 1 - old);
        }
        (s_old << n) | r_old
    }

    /// Relabels a behavior-shaped table.
    pub fn apply_table(&self, n_parties: usize, table: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        if self.n() != n_parties || table.len() != 1 << (2 * n_parties) {
            return param("relabeling does not match the table shape");
        }
        let d = 1usize << n_parties;
        let mut out = vec![0.0; table.len()];
        for s in 0..d {
            for r in 0..d {
                out[(s << n_parties) | r] = table[self.source_index(s, r)];
            }
        }
        Ok(out)
    }

    pub fn apply_behavior(&self, b: &Behavior) -> Result<Behavior> {
        Behavior::new(b.n_parties(), self.apply_table(b.n_parties(), b.probs())?)
    }
}

/// Number of relabeling-inequivalent tight inequality classes for the
/// two-input, two-output scenario, used to decide whether a set is complete.
pub fn known_class_count(n_parties: usize) -> Option<usize> {
    match n_parties {
        2 => Some(1),
        3 => Some(185),
        _ => None,
    }
}

/// Source inequalities together with their deduplicated relabeling orbit,
/// every member normalized to local bound 1.
#[derive(Clone, Debug)]
pub struct InequalitySet {
    n_parties: usize,
    sources: Vec<BellInequality>,
    members: Vec<BellInequality>,
    source_classes: usize,
    tag: String,
    matrix: Vec<f64>,
}

impl InequalitySet {
    pub fn n_parties(&self) -> usize {
        self.n_parties
    }

    pub fn sources(&self) -> &[BellInequality] {
        &self.sources
    }

    pub fn members(&self) -> &[BellInequality] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Number of sources that were not already in an earlier source's orbit.
    pub fn source_classes(&self) -> usize {
        self.source_classes
    }

    /// Provenance tag: source names joined with `+`.
    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Whether the set covers every known class. Otherwise any nonlocal
    /// fraction computed from it is only a lower bound.
    pub fn is_complete(&self) -> bool {
        known_class_count(self.n_parties).is_some_and(|k| self.source_classes >= k)
    }

    /// SHA-256 over the member dedup keys in order.
    pub fn dedup_hash(&self) -> String {
        let mut h = Sha256::new();
        for m in &self.members {
            h.update(m.dedup_hash().as_bytes());
        }
        hex(&h.finalize())
    }

    /// Largest normalized value over the members for a raw probability table.
    pub fn max_value_of(&self, probs: &[f64]) -> f64 {
        let len = probs.len();
        self.matrix
            .chunks_exact(len)
            .map(|row| row.iter().zip(probs).map(|(c, p)| c * p).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Builds a set whose members are taken as given (already closed).
    pub(crate) fn from_members(
        n_parties: usize,
        sources: Vec<BellInequality>,
        members: Vec<BellInequality>,
        source_classes: usize,
        tag: String,
    ) -> Self {
        let matrix = members.iter().flat_map(|m| m.coefficients.iter().copied()).collect();
        Self { n_parties, sources, members, source_classes, tag, matrix }
    }
}

/// Closes the given inequalities under all relabelings and removes duplicates.
pub fn expand_relabelings(ineqs: &[BellInequality]) -> Result<InequalitySet> {
    let Some(first) = ineqs.first() else {
        return param("no inequalities to expand");
    };
    let n = first.n_parties();
    if ineqs.iter().any(|i| i.n_parties() != n) {
        return param("inequalities have different party counts");
    }
    let gens = Relabeling::generators(n);
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut members = Vec::new();
    let mut source_classes = 0;
    for src in ineqs {
        let start = src.normalized();
        if !seen.insert(start.dedup_key()) {
            continue;
        }
        source_classes += 1;
        let mut queue = VecDeque::from([start]);
        while let Some(cur) = queue.pop_front() {
            for g in &gens {
                let next = cur.relabeled(g)?;
                if seen.insert(next.dedup_key()) {
                    queue.push_back(next);
                }
            }
            members.push(cur);
        }
    }
    let tag = ineqs.iter().map(|i| i.name()).collect::<Vec<_>>().join("+");
    Ok(InequalitySet::from_members(n, ineqs.to_vec(), members, source_classes, tag))
}

/// Maximum normalized value over the expanded set.
pub fn max_violation(b: &Behavior, set: &InequalitySet) -> Result<f64> {
    if set.is_empty() {
        return param("inequality set is empty");
    }
    if b.n_parties() != set.n_parties() {
        return param(format!("{}-party behavior against a {}-party inequality set", b.n_parties(), set.n_parties()));
    }
    Ok(set.max_value_of(b.probs()))
}
