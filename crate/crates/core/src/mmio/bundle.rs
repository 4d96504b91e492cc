//! Partition bundles: the on-disk hand-off between preprocessing and solving.
//!
//! Layout of a bundle directory:
//!
//! ```text
//! manifest.toml
//! rank-0000/matrix.mtx   local matrix
//! rank-0000/rhs.vec      local right-hand side
//! rank-0000/meta.json    ownership, dependency or interface data
//! ...
//! ```
//!
//! The manifest records the strategy, rank count, global order, format
//! version and a SHA-256 digest of every rank file.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, read_matrix_market_from, read_vector_from, write_matrix_market_to, write_vector_to, MmioError, Result};
use crate::partition::{BandRowPartition, DependencyLists, InterfaceDescriptor, Substructure};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    BandrowNaive,
    BandrowSparsity,
    Substructuring,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::BandrowNaive => "bandrow-naive",
            Strategy::BandrowSparsity => "bandrow-sparsity",
            Strategy::Substructuring => "substructuring",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    /// Accepts the bundle names and the command-line aliases `bandrow` and `bandrow-op`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bandrow-naive" | "bandrow" => Ok(Strategy::BandrowNaive),
            "bandrow-sparsity" | "bandrow-op" => Ok(Strategy::BandrowSparsity),
            "substructuring" => Ok(Strategy::Substructuring),
            other => Err(format!("unknown strategy `{other}`")),
        }
    }
}

/// Payload of one rank.
#[derive(Debug, Clone, PartialEq)]
pub enum RankData {
    BandRow {
        part: BandRowPartition,
        dependencies: Option<DependencyLists>,
    },
    Substructure(Substructure),
}

impl RankData {
    pub fn rank(&self) -> usize {
        match self {
            RankData::BandRow { part, .. } => part.rank,
            RankData::Substructure(s) => s.rank,
        }
    }

    fn parts(&self) -> (&crate::sparse::CsrMatrix, &[f64]) {
        match self {
            RankData::BandRow { part, .. } => (&part.local_matrix, &part.local_rhs),
            RankData::Substructure(s) => (&s.local_matrix, &s.local_rhs),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionBundle {
    pub strategy: Strategy,
    pub global_n: usize,
    pub ranks: Vec<RankData>,
}

impl PartitionBundle {
    pub fn band_row(parts: Vec<BandRowPartition>, dependencies: Option<Vec<DependencyLists>>) -> Self {
        let global_n = parts.first().map_or(0, BandRowPartition::global_n);
        let strategy = if dependencies.is_some() {
            Strategy::BandrowSparsity
        } else {
            Strategy::BandrowNaive
        };
        let mut deps = dependencies.map(Vec::into_iter);
        let ranks = parts
            .into_iter()
            .map(|part| RankData::BandRow {
                part,
                dependencies: deps.as_mut().and_then(Iterator::next),
            })
            .collect();
        PartitionBundle {
            strategy,
            global_n,
            ranks,
        }
    }

    pub fn substructuring(subs: Vec<Substructure>) -> Self {
        PartitionBundle {
            strategy: Strategy::Substructuring,
            global_n: subs.first().map_or(0, |s| s.global_n),
            ranks: subs.into_iter().map(RankData::Substructure).collect(),
        }
    }

    pub fn n_ranks(&self) -> usize {
        self.ranks.len()
    }

    pub fn band_rows(&self) -> Option<Vec<&BandRowPartition>> {
        self.ranks
            .iter()
            .map(|r| match r {
                RankData::BandRow { part, .. } => Some(part),
                RankData::Substructure(_) => None,
            })
            .collect()
    }

    pub fn dependencies(&self) -> Option<Vec<&DependencyLists>> {
        self.ranks
            .iter()
            .map(|r| match r {
                RankData::BandRow { dependencies, .. } => dependencies.as_ref(),
                RankData::Substructure(_) => None,
            })
            .collect()
    }

    pub fn substructures(&self) -> Option<Vec<&Substructure>> {
        self.ranks
            .iter()
            .map(|r| match r {
                RankData::Substructure(s) => Some(s),
                RankData::BandRow { .. } => None,
            })
            .collect()
    }

    /// Checks rank numbering, strategy/payload agreement and that owned
    /// indices partition `0..global_n`.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MmioError::InvalidBundle(m));
        if self.ranks.is_empty() {
            return bad("bundle has no ranks".into());
        }
        let mut owner = vec![usize::MAX; self.global_n];
        let mut claim = |g: usize, rank: usize| -> Result<()> {
            match owner.get_mut(g) {
                None => Err(MmioError::InvalidBundle(format!("rank {rank} owns index {g} >= {}", self.global_n))),
                Some(o) if *o != usize::MAX => Err(MmioError::InvalidBundle(format!(
                    "index {g} owned by ranks {} and {rank}",
                    *o
                ))),
                Some(o) => {
                    *o = rank;
                    Ok(())
                }
            }
        };
        for (k, r) in self.ranks.iter().enumerate() {
            if r.rank() != k {
                return bad(format!("payload {k} carries rank {}", r.rank()));
            }
            let (m, rhs) = r.parts();
            if m.n_rows() != rhs.len() {
                return bad(format!("rank {k}: matrix has {} rows, rhs {}", m.n_rows(), rhs.len()));
            }
            match (r, self.strategy) {
                (RankData::BandRow { part, dependencies }, Strategy::BandrowNaive | Strategy::BandrowSparsity) => {
                    if (self.strategy == Strategy::BandrowSparsity) != dependencies.is_some() {
                        return bad(format!("rank {k}: dependency lists do not match strategy"));
                    }
                    if m.n_cols() != self.global_n || part.n_local() != m.n_rows() {
                        return bad(format!("rank {k}: band shape does not match its range"));
                    }
                    for g in part.range() {
                        claim(g, k)?;
                    }
                }
                (RankData::Substructure(s), Strategy::Substructuring) => {
                    if s.local_to_global.len() != s.n_local()
                        || m.n_rows() != s.n_local()
                        || s.interface_owner.len() != s.interface_count
                    {
                        return bad(format!("rank {k}: inconsistent substructure sizes"));
                    }
                    for l in (0..s.n_local()).filter(|&l| s.owns(l)) {
                        claim(s.local_to_global[l], k)?;
                    }
                }
                _ => return bad(format!("rank {k}: payload does not match strategy {}", self.strategy)),
            }
        }
        if let Some(g) = owner.iter().position(|&o| o == usize::MAX) {
            return bad(format!("index {g} has no owner"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    strategy: Strategy,
    n_ranks: usize,
    global_n: usize,
    ranks: Vec<RankEntry>,
}

#[derive(Serialize, Deserialize)]
struct RankEntry {
    dir: String,
    matrix_sha256: String,
    rhs_sha256: String,
    meta_sha256: String,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RankMeta {
    BandRow {
        rank: usize,
        row_begin: usize,
        row_end: usize,
        dependencies: Option<DependencyLists>,
    },
    Substructure {
        rank: usize,
        global_n: usize,
        local_to_global: Vec<usize>,
        interior_count: usize,
        interface_count: usize,
        interfaces: Vec<InterfaceDescriptor>,
        interface_owner: Vec<usize>,
    },
}

fn rank_dir(k: usize) -> String {
    format!("rank-{k:04}")
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    fs::write(path, bytes).map_err(io_err(path))?;
    Ok(digest(bytes))
}

fn read_checked(path: &Path, expected: &str) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if digest(&bytes) != expected {
        return Err(MmioError::ChecksumMismatch(path.to_path_buf()));
    }
    Ok(bytes)
}

fn json_err(e: serde_json::Error) -> MmioError {
    MmioError::InvalidBundle(e.to_string())
}

pub fn write_partition_bundle(bundle: &PartitionBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    bundle.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(bundle.n_ranks());
    for (k, r) in bundle.ranks.iter().enumerate() {
        let sub = dir.join(rank_dir(k));
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        let (m, rhs) = r.parts();
        let mut buf = Vec::new();
        write_matrix_market_to(m, &mut buf).map_err(io_err(&sub))?;
        let matrix_sha256 = write_file(&sub.join("matrix.mtx"), &buf)?;
        buf.clear();
        write_vector_to(rhs, &mut buf).map_err(io_err(&sub))?;
        let rhs_sha256 = write_file(&sub.join("rhs.vec"), &buf)?;

        let meta = match r {
            RankData::BandRow { part, dependencies } => RankMeta::BandRow {
                rank: part.rank,
                row_begin: part.row_begin,
                row_end: part.row_end,
                dependencies: dependencies.clone(),
            },
            RankData::Substructure(s) => RankMeta::Substructure {
                rank: s.rank,
                global_n: s.global_n,
                local_to_global: s.local_to_global.clone(),
                interior_count: s.interior_count,
                interface_count: s.interface_count,
                interfaces: s.interfaces.clone(),
                interface_owner: s.interface_owner.clone(),
            },
        };
        let meta = serde_json::to_vec_pretty(&meta).map_err(json_err)?;
        let meta_sha256 = write_file(&sub.join("meta.json"), &meta)?;
        entries.push(RankEntry {
            dir: rank_dir(k),
            matrix_sha256,
            rhs_sha256,
            meta_sha256,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        strategy: bundle.strategy,
        n_ranks: bundle.n_ranks(),
        global_n: bundle.global_n,
        ranks: entries,
    };
    let text = toml::to_string(&manifest).map_err(|e| MmioError::InvalidBundle(e.to_string()))?;
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(io_err(&path))
}

pub fn read_partition_bundle(dir: impl AsRef<Path>) -> Result<PartitionBundle> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.toml");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| MmioError::InvalidBundle(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(MmioError::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if manifest.ranks.len() != manifest.n_ranks {
        return Err(MmioError::RankCountMismatch {
            declared: manifest.n_ranks,
            found: manifest.ranks.len(),
        });
    }
    let on_disk = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("rank-") && e.path().is_dir())
        .count();
    if on_disk != manifest.n_ranks {
        return Err(MmioError::RankCountMismatch {
            declared: manifest.n_ranks,
            found: on_disk,
        });
    }

    let mut ranks = Vec::with_capacity(manifest.n_ranks);
    for entry in &manifest.ranks {
        let sub = dir.join(&entry.dir);
        let matrix = read_matrix_market_from(read_checked(&sub.join("matrix.mtx"), &entry.matrix_sha256)?.as_slice())?;
        let rhs = read_vector_from(read_checked(&sub.join("rhs.vec"), &entry.rhs_sha256)?.as_slice())?;
        let meta: RankMeta =
            serde_json::from_slice(&read_checked(&sub.join("meta.json"), &entry.meta_sha256)?).map_err(json_err)?;
        ranks.push(match meta {
            RankMeta::BandRow {
                rank,
                row_begin,
                row_end,
                dependencies,
            } => RankData::BandRow {
                part: BandRowPartition {
                    rank,
                    row_begin,
                    row_end,
                    local_matrix: matrix,
                    local_rhs: rhs,
                },
                dependencies,
            },
            RankMeta::Substructure {
                rank,
                global_n,
                local_to_global,
                interior_count,
                interface_count,
                interfaces,
                interface_owner,
            } => RankData::Substructure(Substructure {
                rank,
                global_n,
                local_matrix: matrix,
                local_rhs: rhs,
                local_to_global,
                interior_count,
                interface_count,
                interfaces,
                interface_owner,
            }),
        });
    }
    let bundle = PartitionBundle {
        strategy: manifest.strategy,
        global_n: manifest.global_n,
        ranks,
    };
    bundle.validate()?;
    Ok(bundle)
}
