use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::params::{BuildParams, HnswParams, IndexKind, NsgParams, VamanaParams};

/// One tunable parameter on the grid `lo, lo + step, ..., hi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDim {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl ParamDim {
    pub fn new(name: &str, lo: f64, hi: f64, step: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
            step,
        }
    }

    /// Number of grid values.
    pub fn levels(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    fn value_at(&self, idx: usize) -> f64 {
        let v = self.lo + idx as f64 * self.step;
        // keep decimal grids such as 1.05 free of representation noise
        let digits = (-self.step.log10()).ceil().clamp(0.0, 12.0) as i32 + 1;
        let scale = 10f64.powi(digits);
        (v * scale).round() / scale
    }

    /// Nearest grid value to a point of `[0, 1]`.
    fn snap(&self, x: f64) -> f64 {
        let levels = self.levels();
        let idx = (x.clamp(0.0, 1.0) * (self.hi - self.lo) / self.step).round() as usize;
        self.value_at(idx.min(levels - 1))
    }

    fn scale(&self, v: f64) -> f64 {
        if self.hi > self.lo {
            ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// A parameter setting: grid values plus their `[0, 1]` scaled positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub values: Vec<f64>,
    pub scaled: Vec<f64>,
}

/// Box-shaped search space over grid-valued parameters. When `kind` is set,
/// the dimensions map onto that index kind's construction parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub kind: Option<IndexKind>,
    pub dims: Vec<ParamDim>,
}

impl ParamSpace {
    pub fn new(kind: Option<IndexKind>, dims: Vec<ParamDim>) -> Result<Self> {
        let s = Self { kind, dims };
        s.validate()?;
        Ok(s)
    }

    /// Default ranges for desk-scale tuning.
    pub fn default_for(kind: IndexKind) -> Self {
        let dims = match kind {
            IndexKind::Hnsw => vec![ParamDim::new("M", 4.0, 48.0, 1.0), ParamDim::new("efc", 16.0, 400.0, 1.0)],
            IndexKind::Vamana => vec![
                ParamDim::new("L", 20.0, 200.0, 1.0),
                ParamDim::new("M", 8.0, 64.0, 1.0),
                ParamDim::new("alpha", 1.0, 1.5, 0.05),
            ],
            IndexKind::Nsg => vec![
                ParamDim::new("K", 10.0, 50.0, 1.0),
                ParamDim::new("L", 20.0, 200.0, 1.0),
                ParamDim::new("M", 8.0, 64.0, 1.0),
            ],
        };
        Self { kind: Some(kind), dims }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return invalid("parameter space has no dimensions");
        }
        for d in &self.dims {
            if !(d.lo.is_finite() && d.hi.is_finite() && d.step > 0.0 && d.hi >= d.lo) {
                return invalid(format!("bad range for {}: [{}, {}] step {}", d.name, d.lo, d.hi, d.step));
            }
        }
        if let Some(kind) = self.kind {
            let want: &[&str] = match kind {
                IndexKind::Hnsw => &["M", "efc"],
                IndexKind::Vamana => &["L", "M", "alpha"],
                IndexKind::Nsg => &["K", "L", "M"],
            };
            let names: Vec<&str> = self.dims.iter().map(|d| d.name.as_str()).collect();
            if names != want {
                return invalid(format!("{kind} space needs dimensions {want:?}, got {names:?}"));
            }
            let lowest = self.decode(&vec![0.0; self.dims.len()]);
            self.build_params(&lowest)?.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// Snaps a `[0, 1]^p` point to the grid. HNSW `efc` is raised to at
    /// least `M`.
    pub fn decode(&self, x: &[f64]) -> ParamPoint {
        assert_eq!(x.len(), self.dims.len(), "point dimension");
        let mut values: Vec<f64> = self.dims.iter().zip(x).map(|(d, &xi)| d.snap(xi)).collect();
        if self.kind == Some(IndexKind::Hnsw) && values[1] < values[0] {
            values[1] = values[0];
        }
        self.point(values)
    }

    fn point(&self, values: Vec<f64>) -> ParamPoint {
        let scaled = self.dims.iter().zip(&values).map(|(d, &v)| d.scale(v)).collect();
        ParamPoint { values, scaled }
    }

    /// The grid point holding `params`' values (kinded spaces only).
    pub fn encode(&self, params: &BuildParams) -> Result<ParamPoint> {
        if self.kind != Some(params.kind()) {
            return invalid(format!("space does not describe {} parameters", params.kind()));
        }
        let values = match *params {
            BuildParams::Hnsw(p) => vec![p.m as f64, p.efc as f64],
            BuildParams::Vamana(p) => vec![p.l as f64, p.m as f64, p.alpha],
            BuildParams::Nsg(p) => vec![p.k as f64, p.l as f64, p.m as f64],
        };
        Ok(self.point(values))
    }

    pub fn build_params(&self, p: &ParamPoint) -> Result<BuildParams> {
        let v = &p.values;
        let u = |x: f64| x.round() as usize;
        Ok(match self.kind {
            Some(IndexKind::Hnsw) => BuildParams::Hnsw(HnswParams::new(u(v[0]), u(v[1]))),
            Some(IndexKind::Vamana) => BuildParams::Vamana(VamanaParams::new(u(v[0]), u(v[1]), v[2])),
            Some(IndexKind::Nsg) => BuildParams::Nsg(NsgParams::new(u(v[0]), u(v[1]), u(v[2]))),
            None => return invalid("space is not tied to an index kind"),
        })
    }

    /// Parameters as a JSON object keyed by dimension name.
    pub fn describe(&self, p: &ParamPoint) -> serde_json::Value {
        match self.build_params(p) {
            Ok(bp) => bp.to_json_inner(),
            Err(_) => self
                .dims
                .iter()
                .zip(&p.values)
                .map(|(d, &v)| (d.name.clone(), serde_json::json!(v)))
                .collect::<serde_json::Map<_, _>>()
                .into(),
        }
    }

    /// Uniform draw over grid values, each dimension independently.
    pub fn random_point<R: Rng>(&self, rng: &mut R) -> ParamPoint {
        let values = self
            .dims
            .iter()
            .map(|d| d.value_at(rng.random_range(0..d.levels())))
            .collect::<Vec<_>>();
        let mut p = self.point(values);
        if self.kind == Some(IndexKind::Hnsw) && p.values[1] < p.values[0] {
            p.values[1] = p.values[0];
            p = self.point(p.values);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decode_snaps_to_grid() {
        let s = ParamSpace::default_for(IndexKind::Vamana);
        let p = s.decode(&[0.0, 1.0, 0.31]);
        assert_eq!(p.values, vec![20.0, 64.0, 1.15]);
        assert_eq!(s.build_params(&p).unwrap(), BuildParams::Vamana(VamanaParams::new(20, 64, 1.15)));
        let round_trip = s.encode(&s.build_params(&p).unwrap()).unwrap();
        assert_eq!(round_trip, p);
        assert_eq!(s.dims[2].levels(), 11);
    }

    #[test]
    fn hnsw_efc_never_below_m() {
        let s = ParamSpace::new(
            Some(IndexKind::Hnsw),
            vec![ParamDim::new("M", 4.0, 48.0, 1.0), ParamDim::new("efc", 4.0, 100.0, 1.0)],
        )
        .unwrap();
        let p = s.decode(&[1.0, 0.0]);
        assert_eq!(p.values, vec![48.0, 48.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = s.random_point(&mut rng);
            assert!(p.values[1] >= p.values[0]);
        }
    }

    #[test]
    fn rejects_mismatched_dimensions() {
        assert!(ParamSpace::new(Some(IndexKind::Nsg), vec![ParamDim::new("K", 1.0, 2.0, 1.0)]).is_err());
        assert!(ParamSpace::new(None, vec![ParamDim::new("x", 1.0, 0.0, 1.0)]).is_err());
        assert!(ParamSpace::new(None, vec![]).is_err());
        let s = ParamSpace::new(None, vec![ParamDim::new("x", 0.0, 1.0, 0.1)]).unwrap();
        assert_eq!(s.describe(&s.decode(&[0.5]))["x"], 0.5);
    }

    #[test]
    fn random_grid_frequencies_are_uniform() {
        let s = ParamSpace::new(None, vec![ParamDim::new("x", 1.0, 10.0, 1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            counts[s.random_point(&mut rng).values[0] as usize - 1] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.1).abs() < 0.01, "{counts:?}");
        }
    }
}
