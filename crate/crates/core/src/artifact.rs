//! Schema-versioned JSON persistence of a fitted pipeline.
//!
//! An artifact stores the standardizer, the predictor, the engine state, the
//! aggregation mode (with the scarcity index when used), the sorted PIT
//! values and calibrated level, an optional flag rule, provenance, and 16
//! probe rows with their scores. Loading re-scores the probes and refuses
//! the file unless every output matches bit for bit.

use crate::config::RunConfig;
use crate::dataset::TabularData;
use crate::error::{LocusError, Result};
use crate::flagging::FlagRule;
use crate::pipeline::FittedPipeline;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u64 = 1;
pub const N_PROBES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// Raw feature row.
    pub x: Vec<f64>,
    pub u_alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    /// Effective configuration after flag overrides.
    pub config: RunConfig,
    pub split_hash: String,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag_updated_at: Option<String>,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub schema_version: u64,
    pub pipeline: FittedPipeline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag_rule: Option<FlagRule>,
    pub provenance: Provenance,
    pub probes: Vec<Probe>,
}

impl Artifact {
    /// Builds an artifact, scoring the first 16 rows of `probe_source` (raw
    /// features) as probes.
    pub fn new(pipeline: FittedPipeline, provenance: Provenance, probe_source: &TabularData) -> Result<Self> {
        let probes = (0..probe_source.n_rows().min(N_PROBES))
            .map(|i| {
                let x = probe_source.row(i);
                Ok(Probe {
                    u_alpha: pipeline.score_raw(&x)?,
                    gamma: pipeline.gamma_raw(&x),
                    x,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            pipeline,
            flag_rule: None,
            provenance,
            probes,
        })
    }

    /// Recomputes probe outputs after the scoring state changed (e.g. a
    /// tuned alpha).
    pub fn refresh_probes(&mut self) -> Result<()> {
        for p in &mut self.probes {
            p.u_alpha = self.pipeline.score_raw(&p.x)?;
            p.gamma = self.pipeline.gamma_raw(&p.x);
        }
        Ok(())
    }

    /// Re-scores the stored probes; `Ok` only on bit-exact agreement.
    pub fn verify_probes(&self) -> Result<()> {
        for (i, p) in self.probes.iter().enumerate() {
            let u = self.pipeline.score_raw(&p.x)?;
            if u.to_bits() != p.u_alpha.to_bits() {
                return Err(LocusError::invalid(format!(
                    "probe {i}: stored U = {} but the loaded state gives {u}",
                    p.u_alpha
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema_version").and_then(serde_json::Value::as_u64);
        if found != Some(SCHEMA_VERSION) {
            return Err(LocusError::SchemaVersion {
                found: found.map_or_else(|| "missing".to_string(), |v| v.to_string()),
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|source| LocusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Reads, checks the schema version, and verifies the probes.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| LocusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let artifact = Self::from_json(&text)?;
        artifact.verify_probes()?;
        Ok(artifact)
    }

    /// JSON with the timestamp fields blanked, for determinism checks.
    pub fn to_json_without_timestamps(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.provenance.created_at.clear();
        copy.provenance.flag_updated_at = None;
        copy.to_json()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DataSource;
    use crate::exec::Exec;
    use crate::loss_engine::EngineSpec;
    use crate::pipeline;

    fn artifact() -> Artifact {
        let cfg = RunConfig {
            data: DataSource::Synthetic {
                preset: Default::default(),
                n: 500,
            },
            engine: EngineSpec::BootstrapGaussianEnsemble {
                members: 5,
                k_local: None,
            },
            ..Default::default()
        };
        let (data, run) = pipeline::run(&cfg, 2, Exec::Sequential).unwrap();
        let probes = data.select(&run.splits.indices.test);
        let prov = Provenance {
            seed: 2,
            config_hash: cfg.hash(),
            config: cfg,
            split_hash: run.split_hash.clone(),
            created_at: "2026-01-01T00:00:00Z".into(),
            flag_updated_at: None,
            tool_version: "test".into(),
        };
        Artifact::new(run.fitted, prov, &probes).unwrap()
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let a = artifact();
        assert_eq!(a.probes.len(), N_PROBES);
        let b = Artifact::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, b);
        b.verify_probes().unwrap();
    }

    #[test]
    fn unknown_schema_is_refused() {
        let a = artifact();
        let mut v: serde_json::Value = serde_json::from_str(&a.to_json().unwrap()).unwrap();
        v["schema_version"] = 2.into();
        let e = Artifact::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(e, LocusError::SchemaVersion { .. }), "{e}");
    }

    #[test]
    fn tampered_probe_is_detected() {
        let mut a = artifact();
        a.probes[3].u_alpha = f64::from_bits(a.probes[3].u_alpha.to_bits() + 1);
        assert!(a.verify_probes().is_err());
    }
}
