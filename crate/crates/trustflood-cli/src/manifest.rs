//! Run manifests: one JSON file naming every fixture a run needs, plus
//! parameter overrides and output locations.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use trustflood::ontology::Hierarchy;
use trustflood::protocol::TNorm;
use trustflood::simnet::{DelayModel, GraphDoc, ScenarioDoc, WorldAssets, WorldParams};

/// Axis lists for the sweep command; the grid is their cartesian product.
#[derive(Debug, Clone, Deserialize)]
pub struct SweepGrid {
    pub tau: Vec<f64>,
    pub hops: Vec<u32>,
    pub sigma: Vec<f64>,
    pub tnorm: Vec<TNorm>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub taxonomy: String,
    pub meronomy: String,
    pub graph: String,
    pub scenario: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub seed: u64,
    /// Virtual-clock start; a rerun over persisted ledgers should start
    /// after the previous run's timestamps so recorded history is visible.
    #[serde(default)]
    pub clock_start: u64,
    #[serde(default)]
    pub delay: DelayModel,
    #[serde(default)]
    pub params: WorldParams,
    /// Directory of persisted ledgers to load before the run.
    #[serde(default)]
    pub ledger_dir: Option<String>,
    #[serde(default)]
    pub sweep: Option<SweepGrid>,
    /// Force every scripted request's tau.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Force every scripted request's hop limit.
    #[serde(default)]
    pub hops: Option<u32>,
}

fn default_out_dir() -> String {
    "out".to_string()
}

/// A manifest plus the directory its relative paths resolve against.
#[derive(Debug)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
}

/// Environment variable naming the default fixture directory.
pub const FIXTURES_ENV: &str = "TRUSTFLOOD_FIXTURES";

impl LoadedManifest {
    /// Reads a manifest. Relative fixture paths resolve against, in order:
    /// the `--fixtures` flag, the `TRUSTFLOOD_FIXTURES` environment variable,
    /// or the manifest's own directory.
    pub fn load(path: &Path, fixtures_flag: Option<&Path>) -> Result<LoadedManifest> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        let base_dir = match fixtures_flag {
            Some(dir) => dir.to_path_buf(),
            None => match std::env::var_os(FIXTURES_ENV) {
                Some(dir) => PathBuf::from(dir),
                None => path
                    .parent()
                    .unwrap_or_else(|| Path::new("."))
                    .to_path_buf(),
            },
        };
        Ok(LoadedManifest { manifest, base_dir })
    }

    pub fn resolve(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn read(&self, name: &str) -> Result<String> {
        let path = self.resolve(name);
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))
    }

    pub fn load_taxonomy(&self) -> Result<Hierarchy> {
        let h = Hierarchy::parse(&self.read(&self.manifest.taxonomy)?)
            .with_context(|| format!("taxonomy {}", self.manifest.taxonomy))?;
        if h.kind() != trustflood::ontology::HierarchyKind::Taxonomy {
            bail!(
                "{} does not declare kind \"taxonomy\"",
                self.manifest.taxonomy
            );
        }
        Ok(h)
    }

    pub fn load_meronomy(&self) -> Result<Hierarchy> {
        let h = Hierarchy::parse(&self.read(&self.manifest.meronomy)?)
            .with_context(|| format!("meronomy {}", self.manifest.meronomy))?;
        if h.kind() != trustflood::ontology::HierarchyKind::Meronomy {
            bail!(
                "{} does not declare kind \"meronomy\"",
                self.manifest.meronomy
            );
        }
        Ok(h)
    }

    pub fn load_graph(&self) -> Result<GraphDoc> {
        GraphDoc::parse(&self.read(&self.manifest.graph)?)
            .with_context(|| format!("graph {}", self.manifest.graph))
    }

    pub fn load_scenario(&self) -> Result<ScenarioDoc> {
        ScenarioDoc::parse(&self.read(&self.manifest.scenario)?)
            .with_context(|| format!("scenario {}", self.manifest.scenario))
    }

    pub fn load_assets(&self) -> Result<WorldAssets> {
        Ok(WorldAssets {
            taxonomy: self.load_taxonomy()?,
            meronomy: self.load_meronomy()?,
            graph: self.load_graph()?,
            params: self.manifest.params.clone(),
        })
    }

    /// The cartesian sweep grid, deduplicated; reports how many duplicate
    /// points were dropped.
    pub fn sweep_grid(&self) -> Result<(Vec<trustflood::simnet::SweepPoint>, usize)> {
        let Some(grid) = &self.manifest.sweep else {
            bail!("manifest has no \"sweep\" section");
        };
        if grid.tau.is_empty()
            || grid.hops.is_empty()
            || grid.sigma.is_empty()
            || grid.tnorm.is_empty()
        {
            bail!("every sweep axis needs at least one value");
        }
        let mut points = Vec::new();
        let mut dropped = 0;
        for &tau in &grid.tau {
            for &hops in &grid.hops {
                for &sigma in &grid.sigma {
                    for &tnorm in &grid.tnorm {
                        let point = trustflood::simnet::SweepPoint {
                            tau,
                            hops,
                            sigma,
                            tnorm,
                        };
                        if points.contains(&point) {
                            dropped += 1;
                        } else {
                            points.push(point);
                        }
                    }
                }
            }
        }
        Ok((points, dropped))
    }
}
