//! Proximity graph representation, beam search, and structural diagnostics.

mod search;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{DistanceCounter, Neighbor, VectorSet};
use crate::error::{invalid, Error, Result};
use crate::params::{BuildParams, IndexKind};

pub use search::{
    kanns, mkanns, DistanceCache, PoolEntry, Query, SearchScratch, VisitedSet,
};
pub(crate) use search::{search_layer, Cached, Direct};

const MAGIC: &[u8; 4] = b"PGIX";
const FORMAT_VERSION: u32 = 1;

/// A directed proximity graph, optionally layered.
///
/// `layers[j][u]` is the out-neighbour list of `u` on layer `j`; a node takes
/// part in layers `0..=level(u)`. Flat graphs have a single layer and every
/// level is 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ProximityGraph {
    params: BuildParams,
    dim: usize,
    levels: Vec<u8>,
    layers: Vec<Vec<Vec<u32>>>,
    entry_point: u32,
}

/// JSON sidecar written next to a serialized graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub kind: IndexKind,
    pub n: usize,
    pub dim: usize,
    pub max_layer: usize,
    pub entry_point: u32,
    pub params: serde_json::Value,
    pub seed: u64,
    pub avg_degree: f64,
}

impl ProximityGraph {
    pub fn new(
        params: BuildParams,
        dim: usize,
        levels: Vec<u8>,
        layers: Vec<Vec<Vec<u32>>>,
        entry_point: u32,
    ) -> Result<Self> {
        let g = Self {
            params,
            dim,
            levels,
            layers,
            entry_point,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn flat(params: BuildParams, dim: usize, adj: Vec<Vec<u32>>, entry_point: u32) -> Result<Self> {
        let n = adj.len();
        Self::new(params, dim, vec![0; n], vec![adj], entry_point)
    }

    pub fn kind(&self) -> IndexKind {
        self.params.kind()
    }

    pub fn params(&self) -> &BuildParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn max_layer(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn entry_point(&self) -> u32 {
        self.entry_point
    }

    pub fn level(&self, u: u32) -> usize {
        self.levels[u as usize] as usize
    }

    pub fn layer(&self, j: usize) -> &[Vec<u32>] {
        &self.layers[j]
    }

    pub fn neighbors(&self, j: usize, u: u32) -> &[u32] {
        &self.layers[j][u as usize]
    }

    pub(crate) fn base_layer_mut(&mut self) -> &mut Vec<Vec<u32>> {
        &mut self.layers[0]
    }

    /// Mean out-degree per layer.
    pub fn avg_degree(&self, j: usize) -> f64 {
        let members = self.levels.iter().filter(|&&l| l as usize >= j).count();
        if members == 0 {
            return 0.0;
        }
        let edges: usize = self.layers[j].iter().map(Vec::len).sum();
        edges as f64 / members as f64
    }

    /// Number of nodes whose top layer is exactly `j`, for each `j`.
    pub fn layer_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.layers.len()];
        for &l in &self.levels {
            h[l as usize] += 1;
        }
        h
    }

    /// Checks structural invariants: valid ids, no self-loops, no duplicate
    /// neighbours, layered membership and entry-point placement.
    pub fn validate(&self) -> Result<()> {
        let n = self.levels.len();
        if n == 0 {
            return Err(Error::Empty("graph has no nodes"));
        }
        if self.layers.is_empty() {
            return invalid("graph has no layers");
        }
        if self.entry_point as usize >= n {
            return invalid(format!("entry point {} out of range", self.entry_point));
        }
        let top = self.layers.len() - 1;
        if self.levels[self.entry_point as usize] as usize != top {
            return invalid("entry point must be present on the top layer");
        }
        for (j, layer) in self.layers.iter().enumerate() {
            if layer.len() != n {
                return invalid(format!("layer {j} has {} lists, expected {n}", layer.len()));
            }
            for (u, list) in layer.iter().enumerate() {
                if (self.levels[u] as usize) < j && !list.is_empty() {
                    return invalid(format!("node {u} has edges above its level on layer {j}"));
                }
                for (i, &v) in list.iter().enumerate() {
                    if v as usize >= n {
                        return invalid(format!("edge {u}->{v} points outside the graph"));
                    }
                    if v as usize == u {
                        return invalid(format!("self-loop on {u} at layer {j}"));
                    }
                    if (self.levels[v as usize] as usize) < j {
                        return invalid(format!("edge {u}->{v} on layer {j} reaches a lower node"));
                    }
                    if list[..i].contains(&v) {
                        return invalid(format!("duplicate neighbour {v} of {u} on layer {j}"));
                    }
                }
            }
        }
        if self.levels.iter().any(|&l| l as usize > top) {
            return invalid("node level above the top layer");
        }
        Ok(())
    }

    /// Full query: greedy descent with a beam of one through the upper
    /// layers, then a beam of `ef` on the base layer.
    pub fn search(
        &self,
        data: &VectorSet,
        q: &[f32],
        k: usize,
        ef: usize,
        scratch: &mut SearchScratch,
        counter: &DistanceCounter,
    ) -> Result<Vec<Neighbor>> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        let mut ep = self.entry_point;
        for j in (1..self.layers.len()).rev() {
            ep = kanns(&self.layers[j], data, Query::external(q), 1, ep, 1, scratch, counter)?[0].id;
        }
        kanns(&self.layers[0], data, Query::external(q), k, ep, ef, scratch, counter)
    }

    /// Canonical little-endian binary encoding.
    ///
    /// Layout: `"PGIX"`, version `u32`, kind `u8`, n `u64`, dim `u32`,
    /// max_layer `u32`, entry `u32`, param count `u32`, params `f64`s,
    /// per-node levels `u8`, then per layer `n + 1` `u64` CSR offsets
    /// followed by the `u32` neighbour array.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let values = self.params.to_values();
        let mut out = Vec::with_capacity(64 + n * 9);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind().code());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.max_layer() as u32).to_le_bytes());
        out.extend_from_slice(&self.entry_point.to_le_bytes());
        out.extend_from_slice(&(values.len() as u32).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.levels);
        for layer in &self.layers {
            let mut off = 0u64;
            out.extend_from_slice(&off.to_le_bytes());
            for list in layer {
                off += list.len() as u64;
                out.extend_from_slice(&off.to_le_bytes());
            }
            for list in layer {
                for &v in list {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Parse {
                offset: 0,
                reason: "bad magic".into(),
            });
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse {
                offset: 4,
                reason: format!("unsupported format version {version}"),
            });
        }
        let code = r.take(1)?[0];
        let kind = IndexKind::from_code(code).ok_or_else(|| Error::Parse {
            offset: 8,
            reason: format!("unknown index kind code {code}"),
        })?;
        let n = r.u64()? as usize;
        let dim = r.u32()? as usize;
        let max_layer = r.u32()? as usize;
        let entry = r.u32()?;
        let count = r.u32()? as usize;
        let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let params = BuildParams::from_values(kind, &values)?;
        let levels = r.take(n)?.to_vec();
        let mut layers = Vec::with_capacity(max_layer + 1);
        for _ in 0..=max_layer {
            let offsets = (0..=n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            let total = *offsets.last().expect("n + 1 offsets") as usize;
            let flat = (0..total).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            let mut layer = Vec::with_capacity(n);
            for w in offsets.windows(2) {
                let (a, b) = (w[0] as usize, w[1] as usize);
                if a > b || b > total {
                    return Err(Error::Parse {
                        offset: r.pos as u64,
                        reason: "non-monotone CSR offsets".into(),
                    });
                }
                layer.push(flat[a..b].to_vec());
            }
            layers.push(layer);
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                offset: r.pos as u64,
                reason: "trailing bytes".into(),
            });
        }
        Self::new(params, dim, levels, layers, entry)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn meta(&self, seed: u64) -> GraphMeta {
        GraphMeta {
            kind: self.kind(),
            n: self.len(),
            dim: self.dim,
            max_layer: self.max_layer(),
            entry_point: self.entry_point,
            params: self.params.to_json_inner(),
            seed,
            avg_degree: self.avg_degree(0),
        }
    }

    /// Writes the binary graph and a `<path>.json` metadata sidecar.
    pub fn save_with_meta(&self, path: &Path, seed: u64) -> Result<()> {
        self.save(path)?;
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        fs::write(side, serde_json::to_vec_pretty(&self.meta(seed))?)?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos.saturating_add(len))
            .ok_or_else(|| Error::Parse {
                offset: self.pos as u64,
                reason: format!("truncated: need {len} bytes"),
            })?;
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Neighbour-list overlap of `g2` with respect to `g1` on one layer:
/// the mean over nodes of `|N1(u) ∩ N2(u)| / |N1(u)|`. A node with an empty
/// list in `g1` scores 1 if its `g2` list is empty too, else 0.
pub fn nlo(g1: &ProximityGraph, g2: &ProximityGraph, layer: usize) -> Result<f64> {
    if g1.len() != g2.len() {
        return invalid(format!("node counts differ: {} vs {}", g1.len(), g2.len()));
    }
    if layer > g1.max_layer() || layer > g2.max_layer() {
        return invalid(format!("layer {layer} missing from one of the graphs"));
    }
    let (a, b) = (g1.layer(layer), g2.layer(layer));
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(la, lb)| {
            if la.is_empty() {
                return if lb.is_empty() { 1.0 } else { 0.0 };
            }
            let shared = la.iter().filter(|v| lb.contains(v)).count();
            shared as f64 / la.len() as f64
        })
        .sum();
    Ok(total / g1.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{HnswParams, VamanaParams};

    fn vamana() -> BuildParams {
        BuildParams::Vamana(VamanaParams::new(10, 2, 1.0))
    }

    #[test]
    fn rejects_bad_structure() {
        assert!(ProximityGraph::flat(vamana(), 2, vec![vec![0], vec![]], 0).is_err());
        assert!(ProximityGraph::flat(vamana(), 2, vec![vec![1, 1], vec![]], 0).is_err());
        assert!(ProximityGraph::flat(vamana(), 2, vec![vec![5], vec![]], 0).is_err());
        assert!(ProximityGraph::flat(vamana(), 2, vec![vec![1], vec![0]], 0).is_ok());
        // entry point must live on the top layer
        let p = BuildParams::Hnsw(HnswParams::new(2, 4));
        let layers = vec![vec![vec![1], vec![0]], vec![vec![], vec![]]];
        assert!(ProximityGraph::new(p, 2, vec![0, 1], layers.clone(), 0).is_err());
        assert!(ProximityGraph::new(p, 2, vec![0, 1], layers, 1).is_ok());
    }

    #[test]
    fn binary_round_trip() {
        let p = BuildParams::Hnsw(HnswParams::new(2, 4));
        let layers = vec![
            vec![vec![1, 2], vec![0], vec![1]],
            vec![vec![], vec![2], vec![1]],
        ];
        let g = ProximityGraph::new(p, 3, vec![0, 1, 1], layers, 2).unwrap();
        let bytes = g.to_bytes();
        assert_eq!(ProximityGraph::from_bytes(&bytes).unwrap(), g);
        assert!(ProximityGraph::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(ProximityGraph::from_bytes(&extra).is_err());
        assert_eq!(g.layer_histogram(), vec![1, 2]);
        assert_eq!(g.avg_degree(1), 1.0);
    }

    #[test]
    fn nlo_cases() {
        let a = ProximityGraph::flat(vamana(), 1, vec![vec![1, 2], vec![0], vec![]], 0).unwrap();
        assert_eq!(nlo(&a, &a, 0).unwrap(), 1.0);
        let b = ProximityGraph::flat(vamana(), 1, vec![vec![1], vec![2], vec![0]], 0).unwrap();
        // node0: 1/2, node1: 0, node2: empty vs non-empty -> 0
        assert!((nlo(&a, &b, 0).unwrap() - 0.5 / 3.0).abs() < 1e-12);
        let c = ProximityGraph::flat(vamana(), 1, vec![vec![2], vec![2], vec![0]], 0).unwrap();
        let d = ProximityGraph::flat(vamana(), 1, vec![vec![1], vec![0], vec![1]], 0).unwrap();
        assert_eq!(nlo(&c, &d, 0).unwrap(), 0.0);
        let small = ProximityGraph::flat(vamana(), 1, vec![vec![1], vec![0]], 0).unwrap();
        assert!(nlo(&a, &small, 0).is_err());
    }
}
