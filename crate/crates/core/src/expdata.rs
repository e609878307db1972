//! Coincidence-count data for three-qubit experiments.
//!
//! A record holds the eight outcome counts of one local projection setting.
//! Eight records whose directions span two per party form a block, and a
//! block yields one full [`Behavior`].

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::Poisson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{Behavior, CorrelationTensor, InequalitySet};
use crate::error::{param, Error, Result};
use crate::nlfrac::{sample_settings, set_provenance, with_workers, PvEstimate};
use crate::qstate::DensityMatrix;
use crate::rng::{substream, Purpose};
use crate::util::{fmt_count, fmt_sig17};

/// Parties per record.
pub const PARTIES: usize = 3;
const OUTCOMES: usize = 1 << PARTIES;
const UNIT_TOL: f64 = 1e-6;
/// Directions closer than this are treated as the same setting.
pub const MATCH_TOL: f64 = 1e-6;
/// Default Bell-value margin for [`pv_cc`] intervals.
pub const DEFAULT_MARGIN: f64 = 0.015;
/// CSV header of coincidence-count files.
pub const CC_HEADER: &str = "setting_id,u1x,u1y,u1z,u2x,u2y,u2z,u3x,u3y,u3z,r1,r2,r3,counts,duration_s";

/// One local projection: a Bloch direction per qubit. Outcome bit 0 is the
/// projector along the direction, bit 1 the orthogonal one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorSetting {
    pub setting_id: u64,
    pub directions: [Vector3<f64>; PARTIES],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CCRecord {
    pub setting: ProjectorSetting,
    /// Indexed by outcome bits with qubit 1 most significant.
    pub counts: [f64; OUTCOMES],
    pub duration_s: f64,
}

impl CCRecord {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// `Σ_r (−1)^{|r|} counts_r / total`
    pub fn correlator(&self) -> Option<f64> {
        let total = self.total();
        if total <= 0.0 {
            return None;
        }
        let signed: f64 =
            self.counts.iter().enumerate().map(|(r, c)| if r.count_ones() % 2 == 0 { *c } else { -c }).sum();
        Some(signed / total)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CCDataset {
    pub records: Vec<CCRecord>,
    /// Factor the counts have already been divided by; 1 for raw counts.
    pub normalization: f64,
    pub tag: String,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    tag: String,
    normalization: f64,
}

fn load_err<T>(row: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Load { row, message: message.into() })
}

impl CCDataset {
    pub fn new(records: Vec<CCRecord>, normalization: f64, tag: impl Into<String>) -> Result<Self> {
        if records.is_empty() {
            return param("dataset has no records");
        }
        let mut ids = std::collections::HashSet::new();
        for r in &records {
            if !ids.insert(r.setting.setting_id) {
                return param(format!("duplicate setting_id {}", r.setting.setting_id));
            }
            if r.counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return param(format!("setting {} has a negative or non-finite count", r.setting.setting_id));
            }
        }
        if !(normalization.is_finite() && normalization > 0.0) {
            return param(format!("normalization must be positive, got {normalization}"));
        }
        Ok(Self { records, normalization, tag: tag.into() })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_counts(&self) -> f64 {
        self.records.iter().map(CCRecord::total).sum()
    }

    /// Mean three-party correlator over records with counts.
    pub fn mean_correlator(&self) -> f64 {
        let vals: Vec<f64> = self.records.iter().filter_map(CCRecord::correlator).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// Counts divided by the total over all settings. Datasets whose
    /// normalization is already applied are returned unchanged.
    pub fn normalized(&self) -> Result<CCDataset> {
        if self.normalization != 1.0 {
            return Ok(self.clone());
        }
        let total = self.total_counts();
        if total <= 0.0 {
            return param(format!("dataset `{}` has no counts to normalize", self.tag));
        }
        let records =
            self.records.iter().map(|r| CCRecord { counts: r.counts.map(|c| c / total), ..r.clone() }).collect();
        Ok(CCDataset { records, normalization: total, tag: self.tag.clone() })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CC_HEADER);
        out.push('\n');
        for rec in &self.records {
            let dirs: Vec<String> = rec
                .setting
                .directions
                .iter()
                .flat_map(|d| d.iter().map(|x| fmt_sig17(*x)).collect::<Vec<_>>())
                .collect();
            for (r, c) in rec.counts.iter().enumerate() {
                let bits = [(r >> 2) & 1, (r >> 1) & 1, r & 1];
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    rec.setting.setting_id,
                    dirs.join(","),
                    bits[0],
                    bits[1],
                    bits[2],
                    fmt_count(*c),
                    fmt_count(rec.duration_s)
                ));
            }
        }
        out
    }

    pub fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    pub fn sidecar_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&Sidecar { tag: self.tag.clone(), normalization: self.normalization })
            .expect("sidecar serializes");
        s.push('\n');
        s
    }

    /// Parses CSV text; rows sharing a `setting_id` form one record and
    /// outcomes without a row count zero.
    pub fn from_csv(text: &str, normalization: f64, tag: impl Into<String>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if header.join(",") != CC_HEADER {
            return load_err(1, format!("expected header `{CC_HEADER}`"));
        }
        let mut records: Vec<CCRecord> = Vec::new();
        let mut index: HashMap<u64, usize> = HashMap::new();
        let mut seen: HashMap<(u64, usize), usize> = HashMap::new();
        for (i, row) in reader.records().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Load { row: line, message: e.to_string() })?;
            if row.len() != 15 {
                return load_err(line, format!("expected 15 fields, got {}", row.len()));
            }
            let num = |k: usize| -> Result<f64> {
                match row[k].trim().parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => load_err(line, format!("invalid number `{}` in column {}", &row[k], k + 1)),
                }
            };
            let id: u64 = match row[0].trim().parse() {
                Ok(id) => id,
                Err(_) => return load_err(line, format!("invalid setting_id `{}`", &row[0])),
            };
            let mut dirs = [Vector3::zeros(); PARTIES];
            for (p, d) in dirs.iter_mut().enumerate() {
                *d = Vector3::new(num(1 + 3 * p)?, num(2 + 3 * p)?, num(3 + 3 * p)?);
                if (d.norm() - 1.0).abs() > UNIT_TOL {
                    return load_err(line, format!("direction {} has norm {}", p + 1, d.norm()));
                }
            }
            let mut r = 0usize;
            for k in 10..13 {
                match row[k].trim() {
                    "0" => r <<= 1,
                    "1" => r = (r << 1) | 1,
                    other => return load_err(line, format!("outcome bit must be 0 or 1, got `{other}`")),
                }
            }
            let count = num(13)?;
            if count < 0.0 {
                return load_err(line, format!("negative count {count}"));
            }
            let duration = num(14)?;
            if duration <= 0.0 {
                return load_err(line, format!("duration must be positive, got {duration}"));
            }
            if let Some(prev) = seen.insert((id, r), line) {
                return load_err(line, format!("duplicate outcome for setting {id} (first at row {prev})"));
            }
            match index.get(&id) {
                Some(&k) => {
                    let rec = &mut records[k];
                    if rec.setting.directions != dirs || rec.duration_s != duration {
                        return load_err(line, format!("setting {id} changes direction or duration between rows"));
                    }
                    rec.counts[r] = count;
                }
                None => {
                    let mut counts = [0.0; OUTCOMES];
                    counts[r] = count;
                    index.insert(id, records.len());
                    records.push(CCRecord {
                        setting: ProjectorSetting { setting_id: id, directions: dirs },
                        counts,
                        duration_s: duration,
                    });
                }
            }
        }
        if records.is_empty() {
            return load_err(1, "no data rows");
        }
        CCDataset::new(records, normalization, tag)
    }
}

/// Reads a coincidence-count CSV and its optional JSON sidecar. Without a
/// sidecar the tag is the file stem and the counts are taken as raw.
pub fn load_cc(path: &Path) -> Result<CCDataset> {
    if !path.is_file() {
        return Err(Error::MissingData(path.to_path_buf()));
    }
    let side_path = CCDataset::sidecar_path(path);
    let (tag, normalization) = if side_path.is_file() {
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(&side_path)?)?;
        (side.tag, side.normalization)
    } else {
        (path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(), 1.0)
    };
    CCDataset::from_csv(&fs::read_to_string(path)?, normalization, tag)
}

/// Writes the CSV and its JSON sidecar.
pub fn save_cc(dataset: &CCDataset, path: &Path) -> Result<()> {
    fs::write(path, dataset.to_csv())?;
    fs::write(CCDataset::sidecar_path(path), dataset.sidecar_json())?;
    Ok(())
}

/// `P(r|S) = counts_r / total` for the eight records of a block, ordered by
/// setting string `S`.
pub fn behavior_from_counts(block: &[&CCRecord]) -> Result<Behavior> {
    if block.len() != OUTCOMES {
        return Err(Error::IncompleteBlock(format!("block has {} of {OUTCOMES} settings", block.len())));
    }
    let mut probs = Vec::with_capacity(OUTCOMES * OUTCOMES);
    for rec in block {
        let total = rec.total();
        if total <= 0.0 {
            return Err(Error::IncompleteBlock(format!("setting {} has no counts", rec.setting.setting_id)));
        }
        probs.extend(rec.counts.iter().map(|c| c / total));
    }
    Behavior::new(PARTIES, probs)
}

// Quantized-cell lookup of directions within MATCH_TOL.
struct DirectionIndex {
    cells: HashMap<[i64; 3], Vec<usize>>,
    reps: Vec<Vector3<f64>>,
}

impl DirectionIndex {
    fn new() -> Self {
        Self { cells: HashMap::new(), reps: Vec::new() }
    }

    fn cell(u: &Vector3<f64>) -> [i64; 3] {
        [0, 1, 2].map(|k| (u[k] / MATCH_TOL).floor() as i64)
    }

    fn id(&mut self, u: &Vector3<f64>) -> usize {
        let c = Self::cell(u);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if let Some(&k) = list.iter().find(|&&k| (self.reps[k] - u).norm() <= MATCH_TOL) {
                            return k;
                        }
                    }
                }
            }
        }
        let k = self.reps.len();
        self.reps.push(*u);
        self.cells.entry(c).or_default().push(k);
        k
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Record indices of complete blocks, ordered by setting string, plus the
/// number of record groups that do not form a complete block.
///
/// Records are linked when they share a direction for some party. A linked
/// group is a block when it has exactly two directions per party and one
/// record for each of the eight combinations. The record with the smallest
/// `setting_id` defines setting 0 for every party.
pub fn group_blocks(dataset: &CCDataset) -> (Vec<[usize; OUTCOMES]>, usize) {
    let n = dataset.records.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut dir_ids = vec![[0usize; PARTIES]; n];
    let mut owner: Vec<HashMap<usize, usize>> = vec![HashMap::new(); PARTIES];
    for p in 0..PARTIES {
        let mut index = DirectionIndex::new();
        for (i, rec) in dataset.records.iter().enumerate() {
            let id = index.id(&rec.setting.directions[p]);
            dir_ids[i][p] = id;
            match owner[p].get(&id) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
                None => {
                    owner[p].insert(id, i);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut blocks = Vec::new();
    let mut incomplete = 0;
    for members in groups.into_values() {
        match order_block(dataset, &members, &dir_ids) {
            Some(block) => blocks.push(block),
            None => incomplete += 1,
        }
    }
    blocks.sort_by_key(|b| dataset.records[b[0]].setting.setting_id);
    (blocks, incomplete)
}

fn order_block(dataset: &CCDataset, members: &[usize], dir_ids: &[[usize; PARTIES]]) -> Option<[usize; OUTCOMES]> {
    if members.len() != OUTCOMES {
        return None;
    }
    let first = *members.iter().min_by_key(|&&i| dataset.records[i].setting.setting_id)?;
    let mut slots = [usize::MAX; OUTCOMES];
    let mut other = [None; PARTIES];
    for &i in members {
        let mut s = 0usize;
        for p in 0..PARTIES {
            let bit = if dir_ids[i][p] == dir_ids[first][p] {
                0
            } else {
                match other[p] {
                    None => {
                        other[p] = Some(dir_ids[i][p]);
                        1
                    }
                    Some(d) if d == dir_ids[i][p] => 1,
                    Some(_) => return None,
                }
            };
            s = (s << 1) | bit;
        }
        if slots[s] != usize::MAX {
            return None;
        }
        slots[s] = i;
    }
    Some(slots)
}

/// Mixes a state's counts with the eight computational-basis datasets:
/// `v_c·CC(ρ) + Σ (1−v_c)/8·CC(basis)`, after normalizing each dataset by
/// its total counts.
pub fn mix_counts(state: &CCDataset, basis: &[CCDataset], v_c: f64) -> Result<CCDataset> {
    if !(0.0..=1.0).contains(&v_c) {
        return param(format!("mixing probability {v_c} outside [0, 1]"));
    }
    if basis.len() != OUTCOMES {
        return param(format!("expected {OUTCOMES} basis datasets, got {}", basis.len()));
    }
    for b in basis {
        if b.records.len() != state.records.len() {
            return Err(Error::Alignment(format!("`{}` and `{}` differ in length", b.tag, state.tag)));
        }
        for (x, y) in b.records.iter().zip(&state.records) {
            if x.setting.setting_id != y.setting.setting_id
                || x.setting.directions.iter().zip(&y.setting.directions).any(|(a, c)| (a - c).norm() > MATCH_TOL)
            {
                return Err(Error::Alignment(format!(
                    "`{}` setting {} does not match `{}`",
                    b.tag, x.setting.setting_id, state.tag
                )));
            }
        }
    }
    let state_n = state.normalized()?;
    let basis_n: Vec<CCDataset> = basis.iter().map(CCDataset::normalized).collect::<Result<_>>()?;
    let w = (1.0 - v_c) / OUTCOMES as f64;
    let records = state_n
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let mut counts = rec.counts.map(|c| v_c * c);
            for b in &basis_n {
                for (c, bc) in counts.iter_mut().zip(&b.records[i].counts) {
                    *c += w * bc;
                }
            }
            CCRecord { counts, ..rec.clone() }
        })
        .collect();
    Ok(CCDataset { records, normalization: state_n.normalization, tag: state_n.tag })
}

/// Nonlocal fraction over complete blocks, with the interval obtained by
/// moving the violation threshold by `±margin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PvCcEstimate {
    #[serde(flatten)]
    pub estimate: PvEstimate,
    pub margin: f64,
    pub p_v_low: f64,
    pub p_v_high: f64,
    pub incomplete_blocks: u64,
}

/// Largest normalized Bell value of each complete block.
pub fn block_violations(dataset: &CCDataset, set: &InequalitySet) -> Result<(Vec<f64>, usize)> {
    if set.n_parties() != PARTIES {
        return param(format!("coincidence data needs a {PARTIES}-party inequality set"));
    }
    if set.is_empty() {
        return param("inequality set is empty");
    }
    let (blocks, mut incomplete) = group_blocks(dataset);
    let values: Vec<Option<f64>> = blocks
        .par_iter()
        .map(|b| {
            let recs: Vec<&CCRecord> = b.iter().map(|&i| &dataset.records[i]).collect();
            behavior_from_counts(&recs).ok().map(|beh| set.max_value_of(beh.probs()))
        })
        .collect();
    incomplete += values.iter().filter(|v| v.is_none()).count();
    Ok((values.into_iter().flatten().collect(), incomplete))
}

pub fn pv_cc(dataset: &CCDataset, set: &InequalitySet, margin: f64) -> Result<PvCcEstimate> {
    if !(margin >= 0.0) {
        return param(format!("margin {margin} must be non-negative"));
    }
    let (values, incomplete) = block_violations(dataset, set)?;
    if values.is_empty() {
        return Err(Error::IncompleteBlock(format!("`{}` has no complete block", dataset.tag)));
    }
    let n = values.len() as u64;
    let count = |t: f64| values.iter().filter(|&&x| x > t).count() as u64;
    Ok(PvCcEstimate {
        estimate: PvEstimate::from_counts(count(1.0), n, set_provenance(set)),
        margin,
        p_v_low: count(1.0 + margin) as f64 / n as f64,
        p_v_high: count(1.0 - margin) as f64 / n as f64,
        incomplete_blocks: incomplete as u64,
    })
}

/// Quantity recomputed on each Poisson-resampled dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Statistic {
    TotalCounts,
    MeanCorrelator,
    PvCc,
}

impl std::str::FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "total-counts" => Ok(Self::TotalCounts),
            "correlator" => Ok(Self::MeanCorrelator),
            "pv-cc" => Ok(Self::PvCc),
            other => param(format!("unknown statistic `{other}` (have total-counts, correlator, pv-cc)")),
        }
    }
}

/// Copy of `dataset` with every count replaced by a Poisson draw of that mean.
pub fn poisson_draw<R: Rng + ?Sized>(dataset: &CCDataset, rng: &mut R) -> CCDataset {
    let records = dataset
        .records
        .iter()
        .map(|rec| {
            let counts =
                rec.counts.map(|c| if c > 0.0 { rng.sample(Poisson::new(c).expect("positive mean")) } else { 0.0 });
            CCRecord { counts, ..rec.clone() }
        })
        .collect();
    CCDataset { records, normalization: dataset.normalization, tag: dataset.tag.clone() }
}

/// Mean and sample standard deviation of `statistic` over `trials`
/// Poisson redraws of the counts. Trial `t` uses its own substream, so the
/// result depends only on `seed`.
pub fn poisson_resample(
    dataset: &CCDataset,
    statistic: Statistic,
    set: Option<&InequalitySet>,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<(f64, f64)> {
    if trials < 2 {
        return param("at least two resampling trials are required");
    }
    if dataset.normalization != 1.0 {
        return param("Poisson resampling needs raw counts, not a normalized dataset");
    }
    let set = match (statistic, set) {
        (Statistic::PvCc, None) => return param("the pv-cc statistic needs an inequality set"),
        (_, s) => s,
    };
    let values: Vec<f64> = with_workers(workers, || {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = substream(seed, Purpose::PoissonTrial, t);
                let d = poisson_draw(dataset, &mut rng);
                match statistic {
                    Statistic::TotalCounts => Ok(d.total_counts()),
                    Statistic::MeanCorrelator => Ok(d.mean_correlator()),
                    Statistic::PvCc => pv_cc(&d, set.expect("checked"), 0.0).map(|e| e.estimate.p_v),
                }
            })
            .collect::<Result<Vec<f64>>>()
    })??;
    let mean = values.iter().sum::<f64>() / trials as f64;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok((mean, var.sqrt()))
}

/// Synthetic dataset of `n_blocks` blocks with the settings that
/// [`crate::nlfrac::estimate_pv`] draws for samples `0..n_blocks` under
/// `seed`. Counts are `total_per_setting · P(r|S)` without noise.
pub fn synthetic_dataset(
    rho: &DensityMatrix,
    n_blocks: u64,
    seed: u64,
    total_per_setting: f64,
    tag: impl Into<String>,
) -> Result<CCDataset> {
    if rho.n_qubits() != PARTIES {
        return param(format!("synthetic coincidence data needs a {PARTIES}-qubit state"));
    }
    if n_blocks == 0 || !(total_per_setting > 0.0) {
        return param("need at least one block and a positive count scale");
    }
    let tensor = CorrelationTensor::from_state(rho);
    let mut records = Vec::with_capacity(n_blocks as usize * OUTCOMES);
    let mut probs = vec![0.0; OUTCOMES * OUTCOMES];
    for b in 0..n_blocks {
        let m = sample_settings(seed, b, PARTIES);
        tensor.behavior_into(&m, &mut probs);
        for s in 0..OUTCOMES {
            let directions = std::array::from_fn(|p| *m.direction(p, (s >> (PARTIES - 1 - p)) & 1));
            let mut counts = [0.0; OUTCOMES];
            for (r, c) in counts.iter_mut().enumerate() {
                *c = (total_per_setting * probs[s * OUTCOMES + r]).max(0.0);
            }
            records.push(CCRecord {
                setting: ProjectorSetting { setting_id: b * OUTCOMES as u64 + s as u64, directions },
                counts,
                duration_s: 20.0,
            });
        }
    }
    CCDataset::new(records, 1.0, tag)
}
