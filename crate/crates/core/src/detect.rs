//! Sliding-window spike detection on continuous recordings.
//!
//! Windows of `T + p` samples are split into segment and context, scored,
//! filtered by probability and by the channel-importance gate, and
//! near-duplicates are merged by 1-D DBSCAN over window centers.

use std::io::{BufRead, Write};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{channel_importance, predict_batch, NdlParams};
use crate::signal::{split_window, standardize_segment, Recording};

/// Gate multiplier on the mean channel importance.
pub const GATE_FACTOR: f64 = 1.5;
pub const ANNOTATION_HEADER: &str =
    "# ndl annotations v1: center_sample, center_seconds, prob, top_channels[name, importance]";
/// Windows scored per inference call during a scan.
const SCAN_BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub center: usize,
    pub prob: f64,
    /// Per-channel `1ᵀα`; sums to `p`.
    pub importance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelScore {
    pub name: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub center_sample: usize,
    pub center_seconds: f64,
    pub prob: f64,
    pub top_channels: Vec<ChannelScore>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    /// Probability threshold `C`; candidates need `prob > C`.
    pub threshold: f64,
    pub stride: usize,
    /// DBSCAN radius in samples; `None` means `(T + p) / 2`.
    pub eps: Option<usize>,
    pub min_pts: usize,
    /// Standardize every window before scoring, as the simulator does.
    pub standardize: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            stride: 1,
            eps: None,
            min_pts: 1,
            standardize: true,
        }
    }
}

impl DetectConfig {
    fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Parameter(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.stride == 0 {
            return Err(Error::Parameter("stride must be at least 1".into()));
        }
        if self.min_pts == 0 {
            return Err(Error::Parameter("min_pts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Scores every window start `0, stride, 2·stride, …` and keeps centers
/// with `prob > threshold`, in ascending order.
pub fn scan(r: &Recording, params: &NdlParams, config: &DetectConfig) -> Result<Vec<Candidate>> {
    config.validate()?;
    let (t, p) = (params.t(), params.p());
    let width = t + p;
    if r.n_samples() < width {
        return Ok(Vec::new());
    }
    let starts: Vec<usize> = (0..=r.n_samples() - width).step_by(config.stride).collect();
    let mut out = Vec::new();
    for block in starts.chunks(SCAN_BLOCK) {
        let windows = block
            .iter()
            .map(|&start| {
                let view = r.samples().slice(s![.., start..start + width]);
                if config.standardize {
                    split_window(standardize_segment(view).view(), t, p)
                } else {
                    split_window(view, t, p)
                }
            })
            .collect::<Result<Vec<(Array2<f64>, Array2<f64>)>>>()?;
        let pairs: Vec<_> = windows.iter().map(|(x, z)| (x.view(), z.view())).collect();
        for (pred, &start) in predict_batch(params, &pairs)?.into_iter().zip(block) {
            if pred.prob > config.threshold {
                out.push(Candidate {
                    center: start + width / 2,
                    prob: pred.prob,
                    importance: channel_importance(&pred.alpha).to_vec(),
                });
            }
        }
    }
    Ok(out)
}

/// Channels whose importance exceeds `1.5 · p / d`, by index.
pub fn gate(importance: &[f64], p: usize) -> Vec<usize> {
    let cut = GATE_FACTOR * p as f64 / importance.len() as f64;
    (0..importance.len()).filter(|&l| importance[l] > cut).collect()
}

/// DBSCAN on 1-D points with neighbourhood `|a − b| ≤ eps`. Returns a
/// cluster id per point, `None` for noise. Cluster ids follow the order
/// in which clusters are first reached scanning the input.
pub fn dbscan(points: &[usize], eps: usize, min_pts: usize) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by_key(|&i| points[i]);
    let sorted: Vec<usize> = order.iter().map(|&i| points[i]).collect();
    // neighbours of sorted[k] are the contiguous range lo..hi
    let range = |k: usize| {
        let lo = sorted.partition_point(|&v| v + eps < sorted[k]);
        let hi = sorted.partition_point(|&v| v <= sorted[k].saturating_add(eps));
        lo..hi
    };
    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut next = 0;
    for start in 0..sorted.len() {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let nb = range(start);
        if nb.len() < min_pts {
            continue;
        }
        let id = next;
        next += 1;
        label[start] = Some(id);
        let mut queue: Vec<usize> = nb.collect();
        while let Some(k) = queue.pop() {
            if label[k].is_none() {
                label[k] = Some(id);
            }
            if visited[k] {
                continue;
            }
            visited[k] = true;
            let nb = range(k);
            if nb.len() >= min_pts {
                queue.extend(nb.filter(|&j| !visited[j] || label[j].is_none()));
            }
        }
    }
    let mut out = vec![None; points.len()];
    for (k, &i) in order.iter().enumerate() {
        out[i] = label[k];
    }
    out
}

/// Keeps the highest-probability candidate of every DBSCAN cluster,
/// earliest center on ties. Noise points are dropped. Output is sorted
/// by center.
pub fn dedup(candidates: &[Candidate], eps: usize, min_pts: usize) -> Vec<Candidate> {
    let centers: Vec<usize> = candidates.iter().map(|c| c.center).collect();
    let labels = dbscan(&centers, eps, min_pts);
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut best: Vec<Option<usize>> = vec![None; n_clusters];
    for (i, l) in labels.iter().enumerate() {
        let Some(l) = *l else { continue };
        let replace = match best[l] {
            None => true,
            Some(j) => {
                let (a, b) = (&candidates[i], &candidates[j]);
                a.prob > b.prob || (a.prob == b.prob && a.center < b.center)
            }
        };
        if replace {
            best[l] = Some(i);
        }
    }
    let mut out: Vec<Candidate> = best.into_iter().flatten().map(|i| candidates[i].clone()).collect();
    out.sort_by_key(|c| c.center);
    out
}

fn to_annotation(c: &Candidate, passing: &[usize], r: &Recording) -> Annotation {
    let mut top: Vec<ChannelScore> = passing
        .iter()
        .map(|&l| ChannelScore {
            name: r.channel_names()[l].clone(),
            importance: c.importance[l],
        })
        .collect();
    top.sort_by(|a, b| b.importance.total_cmp(&a.importance));
    Annotation {
        center_sample: c.center,
        center_seconds: c.center as f64 / r.fs(),
        prob: c.prob,
        top_channels: top,
    }
}

/// Scan, gate, then dedup.
pub fn annotate_recording(r: &Recording, params: &NdlParams, config: &DetectConfig) -> Result<Vec<Annotation>> {
    let p = params.p();
    let eps = config.eps.unwrap_or((params.t() + p) / 2);
    let gated: Vec<Candidate> = scan(r, params, config)?
        .into_iter()
        .filter(|c| !gate(&c.importance, p).is_empty())
        .collect();
    Ok(dedup(&gated, eps, config.min_pts)
        .iter()
        .map(|c| to_annotation(c, &gate(&c.importance, p), r))
        .collect())
}

pub fn write_annotations(annotations: &[Annotation], w: &mut impl Write) -> Result<()> {
    writeln!(w, "{ANNOTATION_HEADER}")?;
    for a in annotations {
        let line = serde_json::to_string(a).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Parses one JSONL record and checks its invariants.
pub fn parse_annotation(line: &str) -> Result<Annotation> {
    let a: Annotation =
        serde_json::from_str(line).map_err(|e| Error::Format(format!("annotation record: {e}")))?;
    if !(a.prob > 0.0 && a.prob < 1.0) {
        return Err(Error::Validation(format!("annotation prob {} outside (0, 1)", a.prob)));
    }
    if !(a.center_seconds.is_finite() && a.center_seconds >= 0.0) {
        return Err(Error::Validation("annotation center_seconds must be a non-negative number".into()));
    }
    if a.top_channels.is_empty() {
        return Err(Error::Validation("annotation has no top channels".into()));
    }
    if a.top_channels.windows(2).any(|w| w[0].importance < w[1].importance) {
        return Err(Error::Validation("top channels are not sorted by importance".into()));
    }
    Ok(a)
}

/// Reads an annotation file, skipping `#` comment lines. Centers must be
/// strictly increasing.
pub fn read_annotations(reader: impl BufRead) -> Result<Vec<Annotation>> {
    let mut out: Vec<Annotation> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let a = parse_annotation(trimmed).map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        if out.last().is_some_and(|prev| prev.center_sample >= a.center_sample) {
            return Err(Error::Validation(format!("line {}: centers not strictly increasing", i + 1)));
        }
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(center: usize, prob: f64) -> Candidate {
        Candidate {
            center,
            prob,
            importance: vec![1.0],
        }
    }

    #[test]
    fn gate_examples() {
        assert_eq!(gate(&[0.4, 0.2, 0.2, 0.2], 1), vec![0]);
        assert!(gate(&[0.25; 4], 1).is_empty());
        assert_eq!(gate(&[1.6, 0.4], 2), vec![0]);
    }

    #[test]
    fn dedup_two_clusters() {
        let c = [cand(100, 0.7), cand(105, 0.9), cand(110, 0.8), cand(400, 0.95)];
        let out = dedup(&c, 20, 1);
        assert_eq!(
            out.iter().map(|c| (c.center, c.prob)).collect::<Vec<_>>(),
            vec![(105, 0.9), (400, 0.95)]
        );
    }

    #[test]
    fn dedup_single_and_chain() {
        assert_eq!(dedup(&[cand(7, 0.6)], 5, 1), vec![cand(7, 0.6)]);
        let chain = [cand(0, 0.6), cand(10, 0.6), cand(20, 0.6), cand(30, 0.6)];
        assert_eq!(dedup(&chain, 10, 1), vec![cand(0, 0.6)]);
        assert_eq!(dedup(&chain, 9, 1).len(), 4);
    }

    #[test]
    fn dbscan_noise_and_borders() {
        // 0,1,2 dense; 10 is noise with min_pts 2
        let labels = dbscan(&[10, 0, 1, 2], 1, 2);
        assert_eq!(labels, vec![None, Some(0), Some(0), Some(0)]);
        assert!(dedup(&[cand(10, 0.9)], 1, 2).is_empty());
    }

    #[test]
    fn annotation_jsonl_roundtrip() {
        let a = Annotation {
            center_sample: 500,
            center_seconds: 2.0,
            prob: 0.93,
            top_channels: vec![
                ChannelScore { name: "FP1-F7".into(), importance: 9.5 },
                ChannelScore { name: "F7-T3".into(), importance: 6.0 },
            ],
        };
        let mut buf = Vec::new();
        write_annotations(std::slice::from_ref(&a), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with('#'));
        assert_eq!(read_annotations(&buf[..]).unwrap(), vec![a]);
    }

    #[test]
    fn schema_violations() {
        assert!(parse_annotation(r#"{"center_sample":1,"center_seconds":0.1,"prob":0.5,"top_channels":[]}"#).is_err());
        assert!(parse_annotation(r#"{"center_sample":1,"center_seconds":0.1,"prob":1.5,"top_channels":[{"name":"a","importance":1.0}]}"#).is_err());
        assert!(parse_annotation(r#"{"center_sample":1,"center_seconds":0.1,"prob":0.5,"extra":1,"top_channels":[{"name":"a","importance":1.0}]}"#).is_err());
        assert!(parse_annotation(r#"{"center_sample":1,"center_seconds":0.1,"prob":0.5,"top_channels":[{"name":"a","importance":1.0},{"name":"b","importance":2.0}]}"#).is_err());
        assert!(parse_annotation(r#"{"center_sample":1,"center_seconds":0.1,"prob":0.5,"top_channels":[{"name":"a","importance":1.0}]}"#).is_ok());
    }

    #[test]
    fn config_errors() {
        let h = crate::model::Hyper::new(4, 2);
        let params = NdlParams::zeros(h).unwrap();
        let r = Recording::with_default_names(Array2::zeros((2, 20)), 10.0).unwrap();
        for bad in [
            DetectConfig { threshold: 1.0, ..DetectConfig::default() },
            DetectConfig { threshold: 0.0, ..DetectConfig::default() },
            DetectConfig { stride: 0, ..DetectConfig::default() },
        ] {
            assert!(matches!(scan(&r, &params, &bad), Err(Error::Parameter(_))));
        }
    }
}
