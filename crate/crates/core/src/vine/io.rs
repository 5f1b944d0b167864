use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::RVineModel;
use super::structure::{Edge, RVineStructure};
use crate::copulas::{AssetRole, BivariateCopula, CopulaFamily};
use crate::error::{Error, Result};

/// One pair-copula of the model file. Tree numbers and variable indices are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub tree: usize,
    pub conditioned: [usize; 2],
    pub conditioning: Vec<usize>,
    pub family: String,
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

/// On-disk form of an [`RVineModel`] (see `docs/model.schema.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VineModelFile {
    pub dimension: usize,
    pub labels: Vec<String>,
    pub roles: Vec<String>,
    pub edges: Vec<EdgeRecord>,
}

impl From<&RVineModel> for VineModelFile {
    fn from(m: &RVineModel) -> Self {
        let edges = m
            .structure()
            .edges()
            .map(|(t, k, e)| {
                let c = m.copula(t, k);
                EdgeRecord {
                    tree: t + 1,
                    conditioned: [e.conditioned[0] + 1, e.conditioned[1] + 1],
                    conditioning: e.conditioning.iter().map(|v| v + 1).collect(),
                    family: c.family().name().to_string(),
                    theta: c.theta(),
                    nu: c.nu(),
                }
            })
            .collect();
        Self {
            dimension: m.dim(),
            labels: m.labels.clone(),
            roles: m.roles.iter().map(|r| r.to_string()).collect(),
            edges,
        }
    }
}

impl VineModelFile {
    pub fn into_model(self) -> Result<RVineModel> {
        let d = self.dimension;
        if d < 2 {
            return Err(Error::Structure(format!("dimension {d} is below 2")));
        }
        let mut trees: Vec<Vec<Edge>> = vec![Vec::new(); d - 1];
        let mut copulas: Vec<Vec<BivariateCopula>> = vec![Vec::new(); d - 1];
        let zero_based = |v: usize| {
            v.checked_sub(1)
                .filter(|&x| x < d)
                .ok_or_else(|| Error::Structure(format!("variable index {v} outside 1..={d}")))
        };
        for r in self.edges {
            if r.tree == 0 || r.tree >= d {
                return Err(Error::Structure(format!("tree number {} outside 1..{d}", r.tree)));
            }
            let mut cond = r.conditioning.iter().map(|&v| zero_based(v)).collect::<Result<Vec<_>>>()?;
            cond.sort_unstable();
            let edge = Edge::new(zero_based(r.conditioned[0])?, zero_based(r.conditioned[1])?, cond);
            let family: CopulaFamily = r.family.parse()?;
            trees[r.tree - 1].push(edge);
            copulas[r.tree - 1].push(BivariateCopula::new(family, r.theta, r.nu)?);
        }
        let structure = RVineStructure::new(d, trees)?;
        let roles = self.roles.iter().map(|s| s.parse()).collect::<Result<Vec<AssetRole>>>()?;
        RVineModel::new(structure, copulas)?.with_labels(self.labels, roles)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl RVineModel {
    pub fn to_json(&self) -> Result<String> {
        VineModelFile::from(self).to_json()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        VineModelFile::from_json(s)?.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let s = RVineStructure::c_vine(&[2, 0, 1]).unwrap();
        let cops = vec![
            vec![BivariateCopula::student_t(0.4, 6.0).unwrap(), BivariateCopula::gauss(-0.2).unwrap()],
            vec![BivariateCopula::gumbel(CopulaFamily::Gumbel90, 1.7).unwrap()],
        ];
        let m = RVineModel::new(s, cops)
            .unwrap()
            .with_labels(vec!["a".into(), "b".into(), "c".into()], vec![AssetRole::Eq, AssetRole::Vol, AssetRole::Cmd])
            .unwrap();
        let back = RVineModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_indices() {
        let f = VineModelFile {
            dimension: 2,
            labels: vec!["a".into(), "b".into()],
            roles: vec!["Eq".into(), "Eq".into()],
            edges: vec![EdgeRecord {
                tree: 1,
                conditioned: [1, 3],
                conditioning: vec![],
                family: "Gauss".into(),
                theta: 0.1,
                nu: None,
            }],
        };
        assert!(f.into_model().is_err());
    }
}
