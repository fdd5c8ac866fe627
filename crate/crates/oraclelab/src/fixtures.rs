//! Bundled fixtures: relations, commit functions, Σ-protocol specs, PKE
//! tables, adversary circuits and experiment configs, one JSON file each
//! under `<fixture dir>/<kind>/<name>.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use oraclelab_core::circuit::Circuit;
use oraclelab_core::fo::PkeSpec;
use oraclelab_core::relation::{CommitFunction, Relation};
use oraclelab_core::sigma::SigmaSpec;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// The fixture directory shipped with the crate.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommitBuiltin {
    Identity,
    Constant,
    ToyEncryption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fixture {
    Relation {
        n: u32,
        #[serde(rename = "M")]
        m: u64,
        pairs: Vec<(u64, u64)>,
    },
    CommitFunction {
        n: u32,
        #[serde(rename = "M")]
        m: u64,
        #[serde(default)]
        builtin: Option<CommitBuiltin>,
        #[serde(default)]
        codomain: Option<u64>,
        #[serde(default)]
        table: Option<Vec<u64>>,
        #[serde(default)]
        seed: u64,
    },
    SigmaSpec {
        spec: SigmaSpec,
    },
    Pke {
        spec: PkeSpec,
    },
    Circuit {
        circuit: Circuit,
        /// Relation fixture searched for by grover-type runs.
        #[serde(default)]
        target: Option<String>,
    },
    Config {
        config: ExperimentConfig,
    },
}

impl Fixture {
    pub fn kind(&self) -> &'static str {
        match self {
            Fixture::Relation { .. } => "relation",
            Fixture::CommitFunction { .. } => "commit-function",
            Fixture::SigmaSpec { .. } => "sigma-spec",
            Fixture::Pke { .. } => "pke",
            Fixture::Circuit { .. } => "circuit",
            Fixture::Config { .. } => "config",
        }
    }

    /// The library module a fixture belongs to, for `--module` filtering.
    pub fn module(&self) -> &'static str {
        match self {
            Fixture::Relation { .. } | Fixture::CommitFunction { .. } | Fixture::Circuit { .. } => {
                "bound-lab"
            }
            Fixture::SigmaSpec { .. } => "sigma-extract",
            Fixture::Pke { .. } => "fo-kem",
            Fixture::Config { .. } => "cli-runner",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Entry {
    /// `<kind>/<name>`.
    pub id: String,
    pub path: PathBuf,
    pub fixture: Fixture,
}

/// All fixtures below `dir`, sorted by id. A missing or empty directory
/// yields an empty store.
#[derive(Clone, Debug, Default)]
pub struct Store {
    entries: BTreeMap<String, Entry>,
}

impl Store {
    pub fn load(dir: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        if !dir.exists() {
            return Ok(Self { entries });
        }
        for kind_dir in sorted_children(dir)? {
            if !kind_dir.is_dir() {
                continue;
            }
            for file in sorted_children(&kind_dir)? {
                if file.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let text = std::fs::read_to_string(&file)
                    .with_context(|| format!("reading {}", file.display()))?;
                let fixture: Fixture = serde_json::from_str(&text)
                    .with_context(|| format!("parsing fixture {}", file.display()))?;
                let kind = kind_dir
                    .file_name()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default();
                if kind != fixture.kind() {
                    bail!(
                        "{} is a {} fixture stored under {kind}/",
                        file.display(),
                        fixture.kind()
                    );
                }
                let stem = file
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default();
                let id = format!("{kind}/{stem}");
                entries.insert(
                    id.clone(),
                    Entry {
                        id,
                        path: file,
                        fixture,
                    },
                );
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> impl Iterator<Item = &Entry> {
        self.entries.values()
    }

    pub fn get(&self, id: &str) -> Result<&Entry> {
        self.entries
            .get(id)
            .ok_or_else(|| anyhow!("fixture `{id}` not found"))
    }

    pub fn relation(&self, id: &str) -> Result<Relation> {
        match &self.get(id)?.fixture {
            Fixture::Relation { n, m, pairs } => {
                Ok(Relation::from_pairs(*n, *m, pairs.iter().copied())?)
            }
            other => bail!("fixture `{id}` is a {}, not a relation", other.kind()),
        }
    }

    pub fn commit_function(&self, id: &str) -> Result<CommitFunction> {
        match &self.get(id)?.fixture {
            Fixture::CommitFunction {
                n,
                m,
                builtin,
                codomain,
                table,
                seed,
            } => {
                let name = id.rsplit('/').next().unwrap_or(id).to_string();
                match (builtin, table) {
                    (Some(CommitBuiltin::Identity), None) => Ok(CommitFunction::identity(*n, *m)?),
                    (Some(CommitBuiltin::Constant), None) => Ok(CommitFunction::constant(*n, *m)?),
                    (Some(CommitBuiltin::ToyEncryption), None) => {
                        Ok(CommitFunction::toy_encryption(*n, *m, *seed)?)
                    }
                    (None, Some(t)) => {
                        let codomain =
                            codomain.ok_or_else(|| anyhow!("fixture `{id}` needs a codomain"))?;
                        Ok(CommitFunction::from_table(
                            name,
                            *n,
                            *m,
                            codomain,
                            t.clone(),
                        )?)
                    }
                    _ => bail!("fixture `{id}` needs exactly one of `builtin` and `table`"),
                }
            }
            other => bail!(
                "fixture `{id}` is a {}, not a commit function",
                other.kind()
            ),
        }
    }

    pub fn sigma_spec(&self, id: &str) -> Result<SigmaSpec> {
        match &self.get(id)?.fixture {
            Fixture::SigmaSpec { spec } => {
                spec.validate()?;
                Ok(spec.clone())
            }
            other => bail!("fixture `{id}` is a {}, not a sigma spec", other.kind()),
        }
    }

    pub fn pke(&self, id: &str) -> Result<PkeSpec> {
        match &self.get(id)?.fixture {
            Fixture::Pke { spec } => {
                spec.validate()?;
                Ok(spec.clone())
            }
            other => bail!("fixture `{id}` is a {}, not a PKE", other.kind()),
        }
    }

    pub fn circuit(&self, id: &str) -> Result<(Circuit, Option<String>)> {
        match &self.get(id)?.fixture {
            Fixture::Circuit { circuit, target } => Ok((circuit.clone(), target.clone())),
            other => bail!("fixture `{id}` is a {}, not a circuit", other.kind()),
        }
    }

    /// Checks that every fixture a config names exists.
    pub fn check_references(&self, config: &ExperimentConfig) -> Result<()> {
        for id in &config.fixtures {
            self.get(id)?;
        }
        Ok(())
    }
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixtures_load_and_resolve() {
        let store = Store::load(&bundled_dir()).unwrap();
        assert!(store.entries().count() >= 10);
        for e in store.entries() {
            match &e.fixture {
                Fixture::Relation { .. } => drop(store.relation(&e.id).unwrap()),
                Fixture::CommitFunction { .. } => drop(store.commit_function(&e.id).unwrap()),
                Fixture::SigmaSpec { .. } => drop(store.sigma_spec(&e.id).unwrap()),
                Fixture::Pke { .. } => drop(store.pke(&e.id).unwrap()),
                Fixture::Circuit { circuit, .. } => drop(circuit.compile().unwrap()),
                Fixture::Config { config } => config.validate().unwrap(),
            }
        }
    }

    #[test]
    fn missing_directory_is_empty() {
        let store = Store::load(Path::new("/nonexistent/oraclelab-fixtures")).unwrap();
        assert_eq!(store.entries().count(), 0);
        assert!(store.get("relation/x").is_err());
    }
}
