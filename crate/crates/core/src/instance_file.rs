//! Instance files: a TOML document holding the model, the contexts, their
//! weights and (optionally) pre-stage set distributions.
//!
//! ```toml
//! format = "maskrl-instance/1"
//! weights = [0.5, 0.5]
//!
//! [model]
//! num_states = 3
//! num_actions = 2
//! horizon = 4
//! default_sink = 2          # optional: target of rows with no listed mass
//!
//! [[model.transition]]      # omit `h` to apply to every layer
//! h = 1
//! s = 0
//! a = 1
//! next = 1
//! p = 0.5
//!
//! [[model.reward]]          # unlisted rewards are 0
//! s = 0
//! a = 1
//! r = 1.0
//!
//! [[contexts]]
//! id = "M1"
//! initial = [{ s = 0, p = 1.0 }]
//! admissible = [{ s = 0, actions = [1] }]   # unlisted (h, s): every action
//!
//! [[set_distributions]]     # optional, pre-stage disclosure only
//! s = 0
//! sets = [[0], [0, 1]]
//! weights = [0.5, 0.5]
//! ```
//!
//! Layers are 1-based in the file; states and actions are 0-based. A
//! transition row with no listed mass at all is an error unless
//! `default_sink` is declared, in which case it moves to the sink with
//! probability 1. Listed rows are taken as written, so a row whose entries
//! do not sum to 1 is reported by validation rather than patched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionContext, ContextDistribution, Dims, MdpModel};
use crate::prestage::{ActionSet, SetDistributions};

pub const FORMAT_TAG: &str = "maskrl-instance/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format: String,
    pub model: ModelSection,
    pub contexts: Vec<ContextSection>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub set_distributions: Vec<SetSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_sink: Option<usize>,
    #[serde(default, rename = "transition", skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<TransitionEntry>,
    #[serde(default, rename = "reward", skip_serializing_if = "Vec::is_empty")]
    pub rewards: Vec<RewardEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    pub s: usize,
    pub a: usize,
    pub next: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    pub s: usize,
    pub a: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSection {
    pub id: String,
    pub initial: Vec<InitialEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub admissible: Vec<AdmissibleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialEntry {
    pub s: usize,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibleEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    pub s: usize,
    pub actions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    pub s: usize,
    pub sets: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

/// Everything an instance file describes.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub model: MdpModel,
    pub dist: ContextDistribution,
    pub set_distributions: Option<SetDistributions>,
}

fn layers(h: Option<usize>, horizon: usize, what: &str) -> Result<std::ops::Range<usize>> {
    match h {
        None => Ok(0..horizon),
        Some(h) if (1..=horizon).contains(&h) => Ok(h - 1..h),
        Some(h) => Err(Error::Format(format!("{what}: layer h={h} outside 1..={horizon}"))),
    }
}

fn check_index(i: usize, n: usize, what: &str) -> Result<()> {
    if i < n {
        Ok(())
    } else {
        Err(Error::Format(format!("{what} index {i} out of range (< {n})")))
    }
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: InstanceFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if file.format != FORMAT_TAG {
            return Err(Error::Format(format!(
                "unknown format tag {:?}, expected {FORMAT_TAG:?}",
                file.format
            )));
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Builds dense tables. Probability defects (bad row sums, negative
    /// mass) are left for validation to report; structural problems
    /// (indices out of range, uncovered rows without a sink) are errors.
    pub fn build(&self) -> Result<Instance> {
        let m = &self.model;
        let dims = Dims::new(m.num_states, m.num_actions, m.horizon);
        if dims.states == 0 || dims.actions == 0 || dims.horizon == 0 {
            return Err(Error::Format(
                "num_states, num_actions, horizon must be positive".into(),
            ));
        }
        if let Some(sink) = m.default_sink {
            check_index(sink, dims.states, "default_sink state")?;
        }
        let mut p = vec![0.0; dims.num_hsa() * dims.states];
        let mut listed = vec![false; dims.num_hsa()];
        for e in &m.transitions {
            check_index(e.s, dims.states, "transition state")?;
            check_index(e.a, dims.actions, "transition action")?;
            check_index(e.next, dims.states, "transition next state")?;
            for h in layers(e.h, dims.horizon, "transition")? {
                p[dims.row(h, e.s, e.a) + e.next] += e.p;
                listed[dims.hsa(h, e.s, e.a)] = true;
            }
        }
        for (h, s, a) in dims.triples() {
            // listed rows stand as written so validation sees their defects
            if listed[dims.hsa(h, s, a)] {
                continue;
            }
            match m.default_sink {
                Some(sink) => p[dims.row(h, s, a) + sink] = 1.0,
                None => {
                    return Err(Error::Format(format!(
                        "no transition listed for (h={}, s={s}, a={a}) and no default_sink",
                        h + 1
                    )));
                }
            }
        }
        let mut r = vec![0.0; dims.num_hsa()];
        for e in &m.rewards {
            check_index(e.s, dims.states, "reward state")?;
            check_index(e.a, dims.actions, "reward action")?;
            for h in layers(e.h, dims.horizon, "reward")? {
                r[dims.hsa(h, e.s, e.a)] = e.r;
            }
        }
        let model = MdpModel::new(dims, p, r)?;

        if self.contexts.is_empty() {
            return Err(Error::Format("no contexts".into()));
        }
        if self.weights.len() != self.contexts.len() {
            return Err(Error::Format(format!(
                "{} contexts but {} weights",
                self.contexts.len(),
                self.weights.len()
            )));
        }
        let mut contexts = Vec::with_capacity(self.contexts.len());
        for c in &self.contexts {
            let mut mu = vec![0.0; dims.states];
            for e in &c.initial {
                check_index(e.s, dims.states, "initial state")?;
                mu[e.s] += e.p;
            }
            let mut mask = vec![true; dims.num_hsa()];
            for e in &c.admissible {
                check_index(e.s, dims.states, "admissible state")?;
                for &a in &e.actions {
                    check_index(a, dims.actions, "admissible action")?;
                }
                for h in layers(e.h, dims.horizon, "admissible")? {
                    let off = dims.hsa(h, e.s, 0);
                    let row = &mut mask[off..off + dims.actions];
                    row.fill(false);
                    for &a in &e.actions {
                        row[a] = true;
                    }
                }
            }
            contexts.push(ActionContext::new(c.id.clone(), dims, mu, mask)?);
        }
        let dist = ContextDistribution::new(contexts, self.weights.clone())?;

        let set_distributions = if self.set_distributions.is_empty() {
            None
        } else {
            let mut per_hs: Vec<Option<Vec<(ActionSet, f64)>>> = vec![None; dims.num_hs()];
            for e in &self.set_distributions {
                check_index(e.s, dims.states, "set distribution state")?;
                if e.sets.len() != e.weights.len() {
                    return Err(Error::Format(format!(
                        "set distribution at s={} lists {} sets and {} weights",
                        e.s,
                        e.sets.len(),
                        e.weights.len()
                    )));
                }
                let support = e
                    .sets
                    .iter()
                    .zip(&e.weights)
                    .map(|(set, &w)| Ok((ActionSet::new(set.clone(), dims.actions)?, w)))
                    .collect::<Result<Vec<_>>>()?;
                for h in layers(e.h, dims.horizon, "set distribution")? {
                    per_hs[dims.hs(h, e.s)] = Some(support.clone());
                }
            }
            let per_hs = per_hs
                .into_iter()
                .enumerate()
                .map(|(i, x)| {
                    x.ok_or_else(|| {
                        Error::Format(format!(
                            "no set distribution for (h={}, s={})",
                            i / dims.states + 1,
                            i % dims.states
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(SetDistributions::new(dims, per_hs)?)
        };
        Ok(Instance {
            model,
            dist,
            set_distributions,
        })
    }

    /// Sparse encoding of an instance. Layers are collapsed when every layer
    /// is identical; rows that are a point mass on `default_sink` are
    /// omitted. Decoding the result reproduces the tables bit for bit.
    pub fn from_instance(inst: &Instance, default_sink: Option<usize>) -> Result<Self> {
        let model = &inst.model;
        let dims = model.dims();
        if let Some(sink) = default_sink {
            check_index(sink, dims.states, "default_sink state")?;
        }
        let layer_len_p = dims.states * dims.actions * dims.states;
        let homogeneous = (1..dims.horizon).all(|h| {
            model.transitions()[h * layer_len_p..(h + 1) * layer_len_p] == model.transitions()[..layer_len_p]
                && model.rewards()[dims.hsa(h, 0, 0)..dims.hsa(h + 1, 0, 0)] == model.rewards()[..dims.hsa(1, 0, 0)]
        });
        let hs_layers: Vec<(Option<usize>, usize)> = if homogeneous {
            vec![(None, 0)]
        } else {
            (0..dims.horizon).map(|h| (Some(h + 1), h)).collect()
        };
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for &(label, h) in &hs_layers {
            for s in 0..dims.states {
                for a in 0..dims.actions {
                    let row = model.transition(h, s, a);
                    let sink_only =
                        default_sink.is_some_and(|k| row[k] == 1.0 && row.iter().filter(|&&x| x != 0.0).count() == 1);
                    if !sink_only {
                        for (next, &pr) in row.iter().enumerate() {
                            if pr != 0.0 {
                                transitions.push(TransitionEntry {
                                    h: label,
                                    s,
                                    a,
                                    next,
                                    p: pr,
                                });
                            }
                        }
                    }
                    let r = model.reward(h, s, a);
                    if r != 0.0 {
                        rewards.push(RewardEntry { h: label, s, a, r });
                    }
                }
            }
        }

        let mut contexts = Vec::new();
        for ctx in inst.dist.contexts() {
            let initial = ctx
                .initial_dist()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(s, &p)| InitialEntry { s, p })
                .collect();
            let mask_homogeneous =
                (1..dims.horizon).all(|h| (0..dims.states).all(|s| ctx.mask(h, s) == ctx.mask(0, s)));
            let mut admissible = Vec::new();
            let mask_layers: Vec<(Option<usize>, usize)> = if mask_homogeneous {
                vec![(None, 0)]
            } else {
                (0..dims.horizon).map(|h| (Some(h + 1), h)).collect()
            };
            for &(label, h) in &mask_layers {
                for s in 0..dims.states {
                    if ctx.mask(h, s).iter().all(|&x| x) {
                        continue;
                    }
                    admissible.push(AdmissibleEntry {
                        h: label,
                        s,
                        actions: ctx.admissible_actions(h, s),
                    });
                }
            }
            contexts.push(ContextSection {
                id: ctx.id().to_string(),
                initial,
                admissible,
            });
        }

        let mut set_distributions = Vec::new();
        if let Some(sets) = &inst.set_distributions {
            for h in 0..dims.horizon {
                for s in 0..dims.states {
                    let support = sets.support(h, s);
                    set_distributions.push(SetSection {
                        h: Some(h + 1),
                        s,
                        sets: support.iter().map(|(x, _)| x.actions().to_vec()).collect(),
                        weights: support.iter().map(|(_, w)| *w).collect(),
                    });
                }
            }
        }

        Ok(InstanceFile {
            format: FORMAT_TAG.to_string(),
            model: ModelSection {
                num_states: dims.states,
                num_actions: dims.actions,
                horizon: dims.horizon,
                default_sink,
                transitions,
                rewards,
            },
            contexts,
            weights: inst.dist.weights().to_vec(),
            set_distributions,
        })
    }
}

pub fn load_instance(path: &std::path::Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)?;
    InstanceFile::parse(&text)?.build()
}

pub fn export_instance(inst: &Instance, default_sink: Option<usize>) -> Result<String> {
    InstanceFile::from_instance(inst, default_sink)?.to_toml()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{appendix_e_instance, SINK};
    use crate::model::validate_distribution;

    const SMALL: &str = r#"
format = "maskrl-instance/1"
weights = [1.0]

[model]
num_states = 2
num_actions = 2
horizon = 2
default_sink = 1

[[model.transition]]
s = 0
a = 0
next = 0
p = 0.25

[[model.transition]]
s = 0
a = 0
next = 1
p = 0.75

[[model.reward]]
h = 2
s = 0
a = 1
r = 0.5

[[contexts]]
id = "only"
initial = [{ s = 0, p = 1.0 }]
admissible = [{ h = 1, s = 0, actions = [1] }]
"#;

    #[test]
    fn small_file_decodes() {
        let inst = InstanceFile::parse(SMALL).unwrap().build().unwrap();
        let m = &inst.model;
        assert_eq!(m.transition(0, 0, 0), &[0.25, 0.75]);
        assert_eq!(m.transition(1, 1, 1), &[0.0, 1.0]);
        assert_eq!(m.reward(1, 0, 1), 0.5);
        assert_eq!(m.reward(0, 0, 1), 0.0);
        let ctx = &inst.dist.contexts()[0];
        assert_eq!(ctx.admissible_actions(0, 0), vec![1]);
        assert_eq!(ctx.admissible_actions(1, 0), vec![0, 1]);
        assert!(validate_distribution(m, &inst.dist).is_valid());
    }

    #[test]
    fn short_row_is_not_padded_by_the_sink() {
        let text = SMALL.replace("p = 0.75", "p = 0.5");
        let inst = InstanceFile::parse(&text).unwrap().build().unwrap();
        assert_eq!(inst.model.transition(0, 0, 0), &[0.25, 0.5]);
        assert!(!validate_distribution(&inst.model, &inst.dist).is_valid());
    }

    #[test]
    fn missing_weights_rejected() {
        let text = SMALL.replace("weights = [1.0]\n", "");
        assert!(matches!(InstanceFile::parse(&text), Err(Error::Format(_))));
    }

    #[test]
    fn uncovered_row_without_sink_rejected() {
        let text = SMALL.replace("default_sink = 1\n", "");
        assert!(matches!(
            InstanceFile::parse(&text).unwrap().build(),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn short_row_without_sink_fails_validation() {
        let text = SMALL
            .replace("default_sink = 1\n", "")
            .replace("p = 0.75", "p = 0.5")
            .replace(
                "[[model.reward]]",
                "[[model.transition]]\ns = 0\na = 1\nnext = 0\np = 1.0\n\n[[model.transition]]\ns = 1\na = 0\nnext = 1\np = 1.0\n\n[[model.transition]]\ns = 1\na = 1\nnext = 1\np = 1.0\n\n[[model.reward]]",
            );
        let inst = InstanceFile::parse(&text).unwrap().build().unwrap();
        let report = validate_distribution(&inst.model, &inst.dist);
        assert_eq!(report.defects.len(), 2, "{:?}", report.defects);
    }

    #[test]
    fn bad_format_tag_and_index() {
        assert!(InstanceFile::parse(&SMALL.replace("maskrl-instance/1", "other")).is_err());
        let bad = SMALL.replace("next = 0", "next = 5");
        assert!(InstanceFile::parse(&bad).unwrap().build().is_err());
    }

    #[test]
    fn bench_export_round_trips() {
        let (model, dist) = appendix_e_instance(0.5).unwrap();
        let inst = Instance {
            model,
            dist,
            set_distributions: None,
        };
        let text = export_instance(&inst, Some(SINK)).unwrap();
        let back = InstanceFile::parse(&text).unwrap().build().unwrap();
        assert_eq!(back, inst);
    }
}
