//! Re-referencing montages.
//!
//! A montage file is TOML with a `name` and either a list of bipolar
//! `pairs` (each `"ANODE,CATHODE"`, optional parallel `labels`) or
//! `common_average = true`.

use std::path::Path;

use ndarray::{Array2, Axis};
use serde::Deserialize;

use super::Recording;
use crate::error::{Error, Result};

const TCP_TOML: &str = include_str!("../../montages/tcp.toml");

#[derive(Debug, Clone, PartialEq)]
pub struct BipolarPair {
    pub anode: String,
    pub cathode: String,
    /// Output channel name; `ANODE-CATHODE` when absent.
    pub label: Option<String>,
}

impl BipolarPair {
    pub fn output_name(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}-{}", self.anode, self.cathode))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MontageKind {
    Pairs(Vec<BipolarPair>),
    CommonAverage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MontageSpec {
    pub name: String,
    pub kind: MontageKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MontageFile {
    name: String,
    #[serde(default)]
    pairs: Option<Vec<String>>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    #[serde(default)]
    common_average: Option<bool>,
}

impl MontageSpec {
    pub fn common_average() -> Self {
        Self {
            name: "common_average".into(),
            kind: MontageKind::CommonAverage,
        }
    }

    /// The 22-channel ACNS TCP bipolar montage over `EEG <X>-REF` electrodes.
    pub fn tcp() -> Self {
        Self::parse(TCP_TOML).expect("bundled TCP montage is valid")
    }

    pub fn pairs(name: &str, pairs: &[(&str, &str)]) -> Self {
        Self {
            name: name.into(),
            kind: MontageKind::Pairs(
                pairs
                    .iter()
                    .map(|(a, c)| BipolarPair {
                        anode: (*a).into(),
                        cathode: (*c).into(),
                        label: None,
                    })
                    .collect(),
            ),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: MontageFile =
            toml::from_str(text).map_err(|e| Error::Montage(format!("montage file: {e}")))?;
        match (file.pairs, file.common_average) {
            (None, Some(true)) => {
                if file.labels.is_some() {
                    return Err(Error::Montage("labels given for a common-average montage".into()));
                }
                Ok(Self {
                    name: file.name,
                    kind: MontageKind::CommonAverage,
                })
            }
            (Some(pairs), None | Some(false)) => {
                if let Some(labels) = &file.labels {
                    if labels.len() != pairs.len() {
                        return Err(Error::Montage(format!(
                            "{} labels for {} pairs",
                            labels.len(),
                            pairs.len()
                        )));
                    }
                }
                let mut out = Vec::with_capacity(pairs.len());
                for (i, p) in pairs.iter().enumerate() {
                    let (anode, cathode) = p.split_once(',').ok_or_else(|| {
                        Error::Montage(format!("pair {p:?} is not of the form ANODE,CATHODE"))
                    })?;
                    out.push(BipolarPair {
                        anode: anode.trim().into(),
                        cathode: cathode.trim().into(),
                        label: file.labels.as_ref().map(|l| l[i].clone()),
                    });
                }
                if out.is_empty() {
                    return Err(Error::Montage("montage has no pairs".into()));
                }
                Ok(Self {
                    name: file.name,
                    kind: MontageKind::Pairs(out),
                })
            }
            _ => Err(Error::Montage(
                "montage needs exactly one of `pairs` or `common_average = true`".into(),
            )),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

pub fn apply_montage(r: &Recording, m: &MontageSpec) -> Result<Recording> {
    let x = r.samples();
    match &m.kind {
        MontageKind::CommonAverage => {
            let mean = x.mean_axis(Axis(0)).expect("recording has channels");
            let out = x - &mean.insert_axis(Axis(0));
            Recording::new(out, r.fs(), r.channel_names().to_vec())
        }
        MontageKind::Pairs(pairs) => {
            let resolve = |name: &str| {
                r.channel_index(name).ok_or_else(|| {
                    Error::Montage(format!("montage {:?}: no channel named {name:?}", m.name))
                })
            };
            let mut out = Array2::zeros((pairs.len(), r.n_samples()));
            let mut names = Vec::with_capacity(pairs.len());
            for (i, pair) in pairs.iter().enumerate() {
                let a = resolve(&pair.anode)?;
                let c = resolve(&pair.cathode)?;
                let diff = &x.row(a) - &x.row(c);
                out.row_mut(i).assign(&diff);
                names.push(pair.output_name());
            }
            Recording::new(out, r.fs(), names)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};

    fn electrode_recording() -> Recording {
        let names: Vec<String> = [
            "FP1", "F7", "T3", "T5", "O1", "FP2", "F8", "T4", "T6", "O2", "A1", "A2", "C3", "CZ",
            "C4", "F3", "P3", "F4", "P4",
        ]
        .iter()
        .map(|n| format!("EEG {n}-REF"))
        .collect();
        let d = names.len();
        let data = Array2::from_shape_fn((d, 5), |(l, t)| (l * 10 + t) as f64 * 0.5);
        Recording::new(data, 250.0, names).unwrap()
    }

    #[test]
    fn tcp_first_channel_is_fp1_minus_f7() {
        let r = electrode_recording();
        let out = apply_montage(&r, &MontageSpec::tcp()).unwrap();
        assert_eq!(out.n_channels(), 22);
        assert_eq!(out.channel_names()[0], "FP1-F7");
        let fp1 = r.samples().row(r.channel_index("EEG FP1-REF").unwrap()).to_owned();
        let f7 = r.samples().row(r.channel_index("EEG F7-REF").unwrap()).to_owned();
        assert_eq!(out.samples().row(0), fp1 - f7);
        assert_eq!(out.channel_names()[21], "P4-O2");
    }

    #[test]
    fn default_pair_name() {
        let r = Recording::new(array![[3.0, 4.0], [1.0, 1.0]], 100.0, vec!["A".into(), "B".into()])
            .unwrap();
        let out = apply_montage(&r, &MontageSpec::pairs("ab", &[("A", "B")])).unwrap();
        assert_eq!(out.channel_names(), ["A-B"]);
        assert_eq!(out.samples().row(0), Array1::from(vec![2.0, 3.0]));
    }

    #[test]
    fn unresolvable_name() {
        let r = electrode_recording();
        let m = MontageSpec::pairs("bad", &[("EEG FP1-REF", "EEG XX-REF")]);
        assert!(matches!(apply_montage(&r, &m), Err(Error::Montage(_))));
    }

    #[test]
    fn common_average_two_channels() {
        let r = Recording::new(
            array![[1.0, 1.0, 1.0], [3.0, 3.0, 3.0]],
            100.0,
            vec!["A".into(), "B".into()],
        )
        .unwrap();
        let out = apply_montage(&r, &MontageSpec::common_average()).unwrap();
        assert_eq!(out.samples(), &array![[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]]);
    }

    #[test]
    fn common_average_single_channel_is_zero() {
        let r = Recording::new(array![[1.5, -2.0, 7.0]], 100.0, vec!["A".into()]).unwrap();
        let out = apply_montage(&r, &MontageSpec::common_average()).unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parse_files() {
        let ca = MontageSpec::parse("name = \"avg\"\ncommon_average = true\n").unwrap();
        assert_eq!(ca.kind, MontageKind::CommonAverage);
        let p = MontageSpec::parse("name = \"x\"\npairs = [\"A,B\", \"B , C\"]\n").unwrap();
        match p.kind {
            MontageKind::Pairs(ps) => {
                assert_eq!(ps[1].anode, "B");
                assert_eq!(ps[1].cathode, "C");
            }
            _ => panic!("expected pairs"),
        }
        assert!(MontageSpec::parse("name = \"x\"\n").is_err());
        assert!(MontageSpec::parse("name = \"x\"\npairs = [\"AB\"]\n").is_err());
        assert!(MontageSpec::parse("name = \"x\"\nbogus = 1\ncommon_average = true\n").is_err());
    }
}
