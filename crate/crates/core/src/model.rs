//! JSON model files.
//!
//! ```json
//! {
//!   "group": {"kind": "Zd", "d": 1},
//!   "alphabet": 2,
//!   "relations": {"e1": [[true, true], [true, false]]},
//!   "vertex_log_weights": [0.0, 0.0],
//!   "edge_log_weights": {"e1": [[0.0, 0.0], [0.0, 0.0]]},
//!   "sofic": {"builder": "torus", "params": {"sizes": [8, 16]}, "seed": 0}
//! }
//! ```
//!
//! Generators are named `e1, e2, …` on ℤ^d and `a, b, …` on free groups.
//! Missing relations allow every pair; missing edge weights are zero.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cayley::GroupSpec;
use crate::error::{Error, Result};
use crate::shift::{ConstraintStructure, Potential};
use crate::sofic::Builder;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoficBlock {
    pub builder: String,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub group: GroupSpec,
    pub alphabet: usize,
    #[serde(default)]
    pub relations: BTreeMap<String, Vec<Vec<bool>>>,
    pub vertex_log_weights: Vec<f64>,
    #[serde(default)]
    pub edge_log_weights: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sofic: Option<SoficBlock>,
}

/// A validated model.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: GroupSpec,
    pub structure: ConstraintStructure,
    pub potential: Potential,
    pub sofic: Option<SoficBlock>,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

fn per_generator<T: Clone>(
    spec: &GroupSpec,
    what: &str,
    map: &BTreeMap<String, Vec<Vec<T>>>,
    default: Vec<Vec<T>>,
) -> Result<Vec<Vec<Vec<T>>>> {
    for k in map.keys() {
        if spec.parse_generator(k).is_none() {
            return Err(schema(format!("{what}: unknown generator {k:?}")));
        }
    }
    Ok((0..spec.rank())
        .map(|g| map.get(&spec.generator_name(g)).cloned().unwrap_or_else(|| default.clone()))
        .collect())
}

impl ModelFile {
    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<Model> {
        let spec = self.group;
        spec.validate().map_err(|e| schema(e.to_string()))?;
        let a = self.alphabet;
        if self.vertex_log_weights.len() != a {
            return Err(schema(format!("vertex_log_weights has {} entries, alphabet is {a}", self.vertex_log_weights.len())));
        }
        let relations = per_generator(&spec, "relations", &self.relations, vec![vec![true; a]; a])?;
        let edges = per_generator(&spec, "edge_log_weights", &self.edge_log_weights, vec![vec![0.0; a]; a])?;
        let structure = ConstraintStructure::new(a, relations).map_err(|e| schema(e.to_string()))?;
        let potential = Potential::new(self.vertex_log_weights.clone(), edges).map_err(|e| schema(e.to_string()))?;
        if let Some(b) = &self.sofic {
            b.builder(&spec)?;
        }
        Ok(Model { spec, structure, potential, sofic: self.sofic.clone() })
    }
}

impl SoficBlock {
    fn param_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.params.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(|x| Some(x as usize))
                .ok_or_else(|| schema(format!("sofic.params.{key} must be a nonnegative integer"))),
        }
    }

    /// The builder for `spec`; dimension and rank default to the group's.
    pub fn builder(&self, spec: &GroupSpec) -> Result<Builder> {
        let b = match (self.builder.as_str(), spec) {
            ("torus", GroupSpec::FreeAbelian { d }) => Builder::Torus { d: self.param_usize("d")?.unwrap_or(*d) },
            ("folner" | "folner_box", GroupSpec::FreeAbelian { d }) => {
                Builder::Folner { d: self.param_usize("d")?.unwrap_or(*d) }
            }
            ("random_perm", GroupSpec::Free { k }) => {
                Builder::RandomPerm { k: self.param_usize("k")?.unwrap_or(*k), seed: self.seed.unwrap_or(0) }
            }
            (name, _) => return Err(schema(format!("builder {name:?} does not fit group {spec:?}"))),
        };
        if b.spec() != *spec {
            return Err(schema("sofic builder parameters disagree with the group"));
        }
        Ok(b)
    }

    /// `params.sizes`, if given.
    pub fn sizes(&self) -> Result<Option<Vec<usize>>> {
        match self.params.get("sizes") {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| schema(format!("sofic.params.sizes: {e}"))),
        }
    }
}

impl Model {
    pub fn load(path: &Path) -> Result<Self> {
        ModelFile::load(path)?.validate()
    }

    pub fn parse(s: &str) -> Result<Self> {
        ModelFile::parse(s)?.validate()
    }

    /// Hardcore model on `spec` with activity `λ`.
    pub fn hardcore(spec: GroupSpec, lambda: f64) -> Self {
        let rank = spec.rank();
        Model {
            spec,
            structure: ConstraintStructure::hardcore(rank),
            potential: Potential::hardcore(lambda, rank),
            sofic: None,
        }
    }

    pub fn to_file(&self) -> ModelFile {
        let names = (0..self.spec.rank()).map(|g| self.spec.generator_name(g));
        ModelFile {
            group: self.spec,
            alphabet: self.structure.alphabet(),
            relations: names.clone().enumerate().map(|(g, n)| (n, self.structure.relation_matrix(g))).collect(),
            vertex_log_weights: self.potential.vertex.clone(),
            edge_log_weights: names.enumerate().map(|(g, n)| (n, self.potential.edge_matrix(g))).collect(),
            sofic: self.sofic.clone(),
        }
    }

    pub fn with_activity(mut self, lambda: f64) -> Result<Self> {
        self.potential = self.potential.with_activity(lambda)?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HARDCORE: &str = r#"{
        "group": {"kind": "Zd", "d": 1},
        "alphabet": 2,
        "relations": {"e1": [[true, true], [true, false]]},
        "vertex_log_weights": [0.0, 0.6931471805599453],
        "sofic": {"builder": "torus", "params": {"sizes": [8, 16]}, "seed": 3}
    }"#;

    #[test]
    fn parses_hardcore() {
        let m = Model::parse(HARDCORE).unwrap();
        assert_eq!(m.structure, ConstraintStructure::hardcore(1));
        assert!((m.potential.vertex[1] - 2f64.ln()).abs() < 1e-15);
        let s = m.sofic.as_ref().unwrap();
        assert_eq!(s.builder(&m.spec).unwrap(), Builder::Torus { d: 1 });
        assert_eq!(s.sizes().unwrap(), Some(vec![8, 16]));
        let back = Model::parse(&serde_json::to_string(&m.to_file()).unwrap()).unwrap();
        assert_eq!(back.structure, m.structure);
        assert_eq!(back.potential, m.potential);
    }

    #[test]
    fn schema_errors() {
        let bad = [
            r#"{"group": {"kind": "Zd", "d": 1}, "alphabet": 2, "vertex_log_weights": [0.0]}"#,
            r#"{"group": {"kind": "Zd", "d": 1}, "alphabet": 2, "vertex_log_weights": [0, 0], "relations": {"a": [[true]]}}"#,
            r#"{"group": {"kind": "Zq", "d": 1}, "alphabet": 2, "vertex_log_weights": [0, 0]}"#,
            r#"{"group": {"kind": "Free", "k": 2}, "alphabet": 2, "vertex_log_weights": [0, 0], "sofic": {"builder": "torus"}}"#,
            r#"{"group": {"kind": "Zd", "d": 1}, "alphabet": 2, "vertex_log_weights": [0, 0], "extra": 1}"#,
            "not json",
        ];
        for b in bad {
            assert!(matches!(Model::parse(b), Err(Error::Schema(_))), "{b}");
        }
    }

    #[test]
    fn free_group_defaults() {
        let m = Model::parse(
            r#"{"group": {"kind": "Free", "k": 2}, "alphabet": 3, "vertex_log_weights": [0, 0, 0],
                "sofic": {"builder": "random_perm", "seed": 9}}"#,
        )
        .unwrap();
        assert_eq!(m.structure, ConstraintStructure::full_shift(3, 2));
        assert_eq!(m.sofic.unwrap().builder(&m.spec).unwrap(), Builder::RandomPerm { k: 2, seed: 9 });
    }
}
