//! Construction parameters for each index kind.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Hnsw,
    Vamana,
    Nsg,
}

impl IndexKind {
    pub fn code(self) -> u8 {
        match self {
            IndexKind::Hnsw => 1,
            IndexKind::Vamana => 2,
            IndexKind::Nsg => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(IndexKind::Hnsw),
            2 => Some(IndexKind::Vamana),
            3 => Some(IndexKind::Nsg),
            _ => None,
        }
    }
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndexKind::Hnsw => "hnsw",
            IndexKind::Vamana => "vamana",
            IndexKind::Nsg => "nsg",
        })
    }
}

impl std::str::FromStr for IndexKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hnsw" => Ok(IndexKind::Hnsw),
            "vamana" => Ok(IndexKind::Vamana),
            "nsg" => Ok(IndexKind::Nsg),
            other => invalid(format!("unknown index kind {other:?}")),
        }
    }
}

fn yes() -> bool {
    true
}

/// HNSW: out-degree limit `M` and construction beam width `efc`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HnswParams {
    #[serde(rename = "M")]
    pub m: usize,
    pub efc: usize,
    /// Cap the base layer at `2M` instead of `M`.
    #[serde(default = "yes")]
    pub double_base_degree: bool,
}

impl HnswParams {
    pub fn new(m: usize, efc: usize) -> Self {
        Self {
            m,
            efc,
            double_base_degree: true,
        }
    }

    pub fn degree_cap(&self, layer: usize) -> usize {
        if layer == 0 && self.double_base_degree {
            2 * self.m
        } else {
            self.m
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return invalid(format!("HNSW M must be >= 2, got {}", self.m));
        }
        if self.efc < self.m {
            return invalid(format!("HNSW efc ({}) must be >= M ({})", self.efc, self.m));
        }
        Ok(())
    }
}

/// Vamana: beam width `L` (also the candidate count, R = L), out-degree
/// limit `M` and pruning slack `alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VamanaParams {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub alpha: f64,
}

impl VamanaParams {
    pub fn new(l: usize, m: usize, alpha: f64) -> Self {
        Self { l, m, alpha }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 || self.m == 0 {
            return invalid("Vamana L and M must be positive");
        }
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return invalid(format!("Vamana alpha must be >= 1, got {}", self.alpha));
        }
        Ok(())
    }
}

/// NSG: initial KNNG degree `K`, beam width `L`, out-degree limit `M`.
/// Pruning slack is fixed at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NsgParams {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
}

impl NsgParams {
    pub fn new(k: usize, l: usize, m: usize) -> Self {
        Self { k, l, m }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 || self.m == 0 {
            return invalid("NSG K, L and M must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BuildParams {
    Hnsw(HnswParams),
    Vamana(VamanaParams),
    Nsg(NsgParams),
}

impl BuildParams {
    pub fn kind(&self) -> IndexKind {
        match self {
            BuildParams::Hnsw(_) => IndexKind::Hnsw,
            BuildParams::Vamana(_) => IndexKind::Vamana,
            BuildParams::Nsg(_) => IndexKind::Nsg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BuildParams::Hnsw(p) => p.validate(),
            BuildParams::Vamana(p) => p.validate(),
            BuildParams::Nsg(p) => p.validate(),
        }
    }

    /// Numeric encoding used by the binary graph header.
    pub fn to_values(&self) -> Vec<f64> {
        match *self {
            BuildParams::Hnsw(p) => vec![
                p.m as f64,
                p.efc as f64,
                if p.double_base_degree { 1.0 } else { 0.0 },
            ],
            BuildParams::Vamana(p) => vec![p.l as f64, p.m as f64, p.alpha],
            BuildParams::Nsg(p) => vec![p.k as f64, p.l as f64, p.m as f64],
        }
    }

    pub fn from_values(kind: IndexKind, v: &[f64]) -> Result<Self> {
        let need = 3;
        if v.len() != need {
            return invalid(format!("{kind} header needs {need} params, found {}", v.len()));
        }
        let u = |x: f64| -> Result<usize> {
            if x >= 0.0 && x.fract() == 0.0 {
                Ok(x as usize)
            } else {
                invalid(format!("expected a non-negative integer parameter, got {x}"))
            }
        };
        Ok(match kind {
            IndexKind::Hnsw => BuildParams::Hnsw(HnswParams {
                m: u(v[0])?,
                efc: u(v[1])?,
                double_base_degree: v[2] != 0.0,
            }),
            IndexKind::Vamana => BuildParams::Vamana(VamanaParams::new(u(v[0])?, u(v[1])?, v[2])),
            IndexKind::Nsg => BuildParams::Nsg(NsgParams::new(u(v[0])?, u(v[1])?, u(v[2])?)),
        })
    }

    /// Parses the bare parameter object for a known kind, e.g.
    /// `{"M": 16, "efc": 200}` for HNSW.
    pub fn from_json_for(kind: IndexKind, value: serde_json::Value) -> Result<Self> {
        Ok(match kind {
            IndexKind::Hnsw => BuildParams::Hnsw(serde_json::from_value(value)?),
            IndexKind::Vamana => BuildParams::Vamana(serde_json::from_value(value)?),
            IndexKind::Nsg => BuildParams::Nsg(serde_json::from_value(value)?),
        })
    }

    /// The bare parameter object without the kind tag.
    pub fn to_json_inner(&self) -> serde_json::Value {
        match self {
            BuildParams::Hnsw(p) => serde_json::to_value(p),
            BuildParams::Vamana(p) => serde_json::to_value(p),
            BuildParams::Nsg(p) => serde_json::to_value(p),
        }
        .expect("params serialize")
    }
}
