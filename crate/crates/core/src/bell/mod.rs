//! Bell functionals, behaviors and relabeling orbits for N ≤ 3 parties with
//! two inputs and two outputs each.

mod behavior;
mod inequality;
mod text;


use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

pub use behavior::{behavior_from_state, Behavior, CorrelationTensor, MeasurementSettings};
pub use inequality::{
    evaluate, expand_relabelings, known_class_count, max_violation, BellInequality, InequalitySet, Relabeling,
};
pub use text::{parse_inequality, serialize_inequality};

use crate::error::{param, Error, Result};
use crate::qstate::DensityMatrix;

/// `R_ij = Tr[ρ (σ_i ⊗ σ_j)]` for a two-qubit state.
pub fn correlation_matrix(rho: &DensityMatrix) -> Result<Matrix3<f64>> {
    if rho.n_qubits() != 2 {
        return param(format!("correlation matrix needs 2 qubits, got {}", rho.n_qubits()));
    }
    let t = CorrelationTensor::from_state(rho);
    Ok(Matrix3::from_fn(|i, j| t.get(&[i + 1, j + 1])))
}

/// `|a0·R(b0+b1) + a1·R(b0−b1)| / 2`, the CHSH value at local bound 1.
pub fn chsh_horodecki(
    r: &Matrix3<f64>,
    a0: &Vector3<f64>,
    a1: &Vector3<f64>,
    b0: &Vector3<f64>,
    b1: &Vector3<f64>,
) -> f64 {
    (a0.dot(&(r * (b0 + b1))) + a1.dot(&(r * (b0 - b1)))).abs() / 2.0
}

/// `√(s₁² + s₂²)` from the two largest singular values of `R`: the largest
/// normalized CHSH value any settings can reach.
pub fn chsh_horodecki_max(r: &Matrix3<f64>) -> f64 {
    let mut s: Vec<f64> = r.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    (s[0] * s[0] + s[1] * s[1]).sqrt()
}

const CHSH_TEXT: &str = include_str!("../../data/inequalities/chsh.ineq");
const SVETLICHNY_TEXT: &str = include_str!("../../data/inequalities/svetlichny.ineq");
const MERMIN_TEXT: &str = include_str!("../../data/inequalities/mermin.ineq");

/// Names of the inequalities shipped with the crate.
pub const BUNDLED: [&str; 3] = ["chsh", "svetlichny", "mermin"];

/// Canonical text of a bundled inequality.
pub fn bundled_text(name: &str) -> Result<&'static str> {
    match name {
        "chsh" => Ok(CHSH_TEXT),
        "svetlichny" => Ok(SVETLICHNY_TEXT),
        "mermin" => Ok(MERMIN_TEXT),
        other => param(format!("no bundled inequality named `{other}` (have {})", BUNDLED.join(", "))),
    }
}

pub fn bundled(name: &str) -> Result<BellInequality> {
    parse_inequality(bundled_text(name)?)
}

/// Default bundled set for `n` parties: CHSH for two, Svetlichny for three.
///
/// Svetlichny is violated only by genuinely three-party nonlocal behaviors.
/// Mermin is not in the default three-party set: its local bound is below
/// the value reachable with two-party entanglement alone.
pub fn default_bundled_set(n_parties: usize) -> Result<InequalitySet> {
    match n_parties {
        2 => expand_relabelings(&[bundled("chsh")?]),
        3 => expand_relabelings(&[bundled("svetlichny")?]),
        n => param(format!("no bundled set for {n} parties")),
    }
}

/// Reads every `*.ineq` file in `dir`, sorted by file name.
///
/// Inequalities without a `# name` line are named after their file stem.
pub fn load_inequality_dir(dir: &Path) -> Result<Vec<BellInequality>> {
    if !dir.is_dir() {
        return Err(Error::MissingData(dir.to_path_buf()));
    }
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ineq"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::MissingData(dir.to_path_buf()));
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in &paths {
        let text = fs::read_to_string(p)?;
        let ineq = parse_inequality(&text).map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse { line, message: format!("{}: {message}", p.display()) },
            other => other,
        })?;
        let ineq = if ineq.name() == "unnamed" {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            ineq.with_name(stem)
        } else {
            ineq
        };
        out.push(ineq);
    }
    if out.iter().any(|i| i.n_parties() != out[0].n_parties()) {
        return param(format!("{} mixes inequalities with different party counts", dir.display()));
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    file: String,
    hash: String,
}

#[derive(Serialize, Deserialize)]
struct CacheManifest {
    tag: String,
    n_parties: usize,
    source_classes: usize,
    sources: Vec<CacheEntry>,
    members: Vec<CacheEntry>,
    set_hash: String,
}

const CACHE_MANIFEST: &str = "manifest.json";

/// Writes the expanded orbit as one file per member plus a manifest of
/// dedup hashes.
pub fn write_orbit_cache(set: &InequalitySet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let write_all = |prefix: &str, list: &[BellInequality]| -> Result<Vec<CacheEntry>> {
        list.iter()
            .enumerate()
            .map(|(i, ineq)| {
                let file = format!("{prefix}_{i:05}.ineq");
                fs::write(dir.join(&file), serialize_inequality(ineq))?;
                Ok(CacheEntry { file, hash: ineq.dedup_hash() })
            })
            .collect()
    };
    let manifest = CacheManifest {
        tag: set.tag().to_string(),
        n_parties: set.n_parties(),
        source_classes: set.source_classes(),
        sources: write_all("source", set.sources())?,
        members: write_all("member", set.members())?,
        set_hash: set.dedup_hash(),
    };
    fs::write(dir.join(CACHE_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Loads an orbit cache and checks every hash in its manifest.
pub fn load_orbit_cache(dir: &Path) -> Result<InequalitySet> {
    let manifest_path = dir.join(CACHE_MANIFEST);
    if !manifest_path.is_file() {
        return Err(Error::MissingData(manifest_path));
    }
    let manifest: CacheManifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let read_all = |entries: &[CacheEntry]| -> Result<Vec<BellInequality>> {
        entries
            .iter()
            .map(|e| {
                let path = dir.join(&e.file);
                if !path.is_file() {
                    return Err(Error::MissingData(path));
                }
                let ineq = parse_inequality(&fs::read_to_string(&path)?)?;
                if ineq.dedup_hash() != e.hash {
                    return param(format!("{} does not match its cached hash", path.display()));
                }
                Ok(ineq)
            })
            .collect()
    };
    let sources = read_all(&manifest.sources)?;
    let members = read_all(&manifest.members)?;
    if members.iter().chain(&sources).any(|m| m.n_parties() != manifest.n_parties) {
        return param("cached inequalities disagree with the manifest party count");
    }
    let set = InequalitySet::from_members(manifest.n_parties, sources, members, manifest.source_classes, manifest.tag);
    if set.dedup_hash() != manifest.set_hash {
        return param("cached orbit does not match its set hash");
    }
    Ok(set)
}
