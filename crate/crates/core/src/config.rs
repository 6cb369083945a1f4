//! Run configuration: a TOML document with a strict schema (unknown keys
//! are errors) and a stable content hash carried into every output artifact
//! so stores, extractions, and verdicts can refuse to mix.

use crate::error::{Result, VpError};
use crate::integrator::SolverConfig;
use crate::phase::{ExpansionOrderPolicy, InitialDataSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedingConfig {
    /// Gauss-Legendre nodes per spatial axis
    pub nx: usize,
    /// Gauss-Legendre nodes per velocity axis
    pub nv: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnapshotConfig {
    /// first snapshot time
    pub t_first: f64,
    /// snapshots per doubling of t
    pub per_octave: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractionConfig {
    /// half-extent of the velocity grid for averages and tables
    pub v_extent: f64,
    /// cells per velocity axis
    pub v_cells: usize,
    /// earliest time at which modification maps are inverted
    pub invert_t_min: f64,
    /// invertibility window |x - t v| <= frac * t
    pub invert_domain_frac: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_initial_data")]
    pub initial_data: InitialDataSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub expansion: ExpansionOrderPolicy,
    #[serde(default)]
    pub seeding: SeedingConfig,
    #[serde(default)]
    pub snapshots: SnapshotConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_initial_data() -> InitialDataSpec {
    InitialDataSpec::gaussian(0.05)
}

impl Default for SeedingConfig {
    fn default() -> Self {
        SeedingConfig { nx: 6, nv: 16 }
    }
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        SnapshotConfig {
            t_first: 2.0,
            per_octave: 4,
        }
    }
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        // cells must stay coarser than the seeding lattice's velocity-node
        // spacing (0.5 for nv = 16 over [-4, 4]) or deposits degenerate
        ExtractionConfig {
            v_extent: 3.0,
            v_cells: 10,
            invert_t_min: 10.0,
            invert_domain_frac: 0.5,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            initial_data: default_initial_data(),
            solver: SolverConfig::default(),
            expansion: ExpansionOrderPolicy::default(),
            seeding: SeedingConfig::default(),
            snapshots: SnapshotConfig::default(),
            extraction: ExtractionConfig::default(),
            deterministic: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)
            .map_err(|e| VpError::InvalidArgument(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| VpError::InvalidArgument(format!("config serialize error: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.initial_data.amplitude < 0.0 {
            return Err(VpError::InvalidArgument("amplitude must be >= 0".into()));
        }
        if self.seeding.nx < 2 || self.seeding.nv < 2 {
            return Err(VpError::InvalidArgument(
                "seeding needs at least 2 nodes per axis".into(),
            ));
        }
        if self.snapshots.t_first <= 1.0 || self.snapshots.per_octave == 0 {
            return Err(VpError::InvalidArgument(
                "snapshots need t_first > 1 and per_octave >= 1".into(),
            ));
        }
        if self.extraction.v_cells < 4 || self.extraction.v_extent <= 0.0 {
            return Err(VpError::InvalidArgument(
                "extraction grid needs v_cells >= 4 and positive extent".into(),
            ));
        }
        if !(0.0 < self.extraction.invert_domain_frac
            && self.extraction.invert_domain_frac <= 1.0)
        {
            return Err(VpError::InvalidArgument(
                "invert_domain_frac must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Content hash, stable under key reordering: sha256 of the
    /// canonical (recursively key-sorted) JSON rendering.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut canon = String::new();
        canonical_json(&value, &mut canon);
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn canonical_json(v: &serde_json::Value, out: &mut String) {
    match v {
        serde_json::Value::Object(map) => {
            out.push('{');
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{k:?}:"));
                canonical_json(&map[*k], out);
            }
            out.push('}');
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                canonical_json(item, out);
            }
            out.push(']');
        }
        serde_json::Value::Number(n) => {
            // force a canonical float rendering
            if let Some(f) = n.as_f64() {
                out.push_str(&format!("{f:?}"));
            } else {
                out.push_str(&n.to_string());
            }
        }
        other => out.push_str(&other.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let s = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&s).unwrap();
        assert_eq!(cfg.hash(), back.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cfg = RunConfig::default();
        let mut s = cfg.to_toml_string().unwrap();
        s.push_str("\nnot_a_field = 3\n");
        assert!(RunConfig::from_toml_str(&s).is_err());
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.solver.t_end = 2048.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn validation_catches_bad_fields() {
        let mut cfg = RunConfig::default();
        cfg.solver.mu = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.extraction.invert_domain_frac = 1.5;
        assert!(cfg.validate().is_err());
    }
}
