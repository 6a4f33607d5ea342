//! Evaluation protocols: temporal consistency of pooling, affinity
//! effectiveness against distance, predictive validity against camera count,
//! and ground-truth accuracy.

pub mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use report::{write_summary_json, Accumulator, MetricReport, ReportMetadata, SeriesPoint};

use crate::affinity::{pair_affinity, AffinityGraph, TransformSeries};
use crate::error::{Error, Result};
use crate::geometry::Rig;
use crate::inference::{infer, EnergyParams, Labeling};
use crate::label::Label;
use crate::reconstruct::Trajectory;
use crate::scene::Scene;
use crate::seed::stream_rng;
use crate::semantic::{argmax_label, build_semantic_maps, for_each_pooled_where, ConfidenceSource, PoolMethod, PoolParams};

/// Normalized-correlation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    /// Plain cosine similarity.
    #[default]
    Cosine,
    /// Cosine after subtracting each vector's mean (Pearson).
    Pearson,
}

impl FromStr for Correlation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Correlation::Cosine),
            "pearson" => Ok(Correlation::Pearson),
            other => Err(Error::invalid("correlation", format!("unknown variant {other:?} (cosine, pearson)"))),
        }
    }
}

impl fmt::Display for Correlation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Correlation::Cosine => "cosine",
            Correlation::Pearson => "pearson",
        })
    }
}

/// Normalized correlation of two vectors, or `None` when either has zero
/// norm (after centering, for Pearson).
pub fn normalized_correlation(a: &[f64], b: &[f64], kind: Correlation) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "vectors differ in length");
    let (ma, mb) = match kind {
        Correlation::Cosine => (0.0, 0.0),
        Correlation::Pearson => {
            let n = a.len() as f64;
            (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n)
        }
    };
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x - ma, y - mb);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa <= 0.0 || bb <= 0.0 {
        return None;
    }
    Some((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// Ground-truth label of every trajectory (the label of its source point).
pub fn truth_labels(trajectories: &[Trajectory], scene: &Scene) -> Vec<Label> {
    trajectories.iter().map(|t| scene.label_of(t.source as usize)).collect()
}

/// Ground-truth body of every trajectory.
pub fn truth_bodies(trajectories: &[Trajectory], scene: &Scene) -> Vec<usize> {
    trajectories.iter().map(|t| scene.body_of(t.source as usize)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalParams {
    /// Lags in frames.
    pub lags: Vec<u32>,
    pub correlation: Correlation,
}

impl Default for TemporalParams {
    fn default() -> Self {
        TemporalParams {
            lags: (1..=7).map(|s| s * 30).collect(),
            correlation: Correlation::Cosine,
        }
    }
}

/// For each pooling method and lag, the normalized correlation between a
/// trajectory's pooled vector at its emergence frame and at the lag.
/// Conditions are lags in seconds. Trajectories that do not survive a lag,
/// or lack a pooled vector at either end, are left out of that lag.
pub fn temporal_consistency(
    trajectories: &[Trajectory],
    source: &dyn ConfidenceSource,
    rig: &Rig,
    pool: &PoolParams,
    methods: &[PoolMethod],
    params: &TemporalParams,
) -> MetricReport {
    let mut report = MetricReport::new("temporal-consistency", "lag_s");
    let mut lags = params.lags.clone();
    lags.sort_unstable();
    lags.dedup();
    for &method in methods {
        let mut first: Vec<Option<Vec<f64>>> = vec![None; trajectories.len()];
        let mut acc: BTreeMap<u32, Accumulator> = lags.iter().map(|&l| (l, Accumulator::default())).collect();
        let wanted = |i: usize, t: u32| {
            let lag = t - trajectories[i].emerge;
            lag == 0 || lags.binary_search(&lag).is_ok()
        };
        for_each_pooled_where(trajectories, source, rig, method, pool, None, None, wanted, |i, t, v| {
            let lag = t - trajectories[i].emerge;
            if lag == 0 {
                first[i] = Some(v.to_vec());
            } else if let (Some(a), Some(acc)) = (&first[i], acc.get_mut(&lag)) {
                if let Some(nc) = normalized_correlation(a, v, params.correlation) {
                    acc.push(nc);
                }
            }
        });
        for (lag, a) in &acc {
            report.push(f64::from(*lag) / rig.frame_rate(), method.name(), a);
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectivenessParams {
    /// Bin edges in meters; bin `k` is `[edges[k], edges[k+1])`.
    pub edges: Vec<f64>,
    pub pairs_per_bin: usize,
    /// Affinity above which a pair is claimed to be the same object.
    pub claim_threshold: f64,
    pub overlap_min: u32,
    pub seed: u64,
}

impl Default for EffectivenessParams {
    fn default() -> Self {
        EffectivenessParams {
            edges: (0..=10).map(|k| f64::from(k) * 0.1).collect(),
            pairs_per_bin: 200,
            claim_threshold: 0.5,
            overlap_min: 2,
            seed: 0,
        }
    }
}

/// A sampled trajectory pair with its mean and max distance over the shared
/// lifetime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledPair {
    pub i: usize,
    pub j: usize,
    pub bin: usize,
    pub mean_distance: f64,
    pub max_distance: f64,
}

/// Seeded pair sample binned by mean inter-trajectory distance, up to
/// `pairs_per_bin` per bin.
pub fn sample_pairs(trajectories: &[Trajectory], params: &EffectivenessParams) -> Vec<SampledPair> {
    let bins = params.edges.len().saturating_sub(1);
    let n = trajectories.len();
    let mut out = Vec::new();
    if bins == 0 || n < 2 {
        return out;
    }
    let mut fill = vec![0usize; bins];
    let mut rng = stream_rng(params.seed, "affinity-pairs", 0);
    let attempts = params.pairs_per_bin * bins * 400;
    let mut seen = std::collections::HashSet::new();
    for _ in 0..attempts {
        if fill.iter().all(|&f| f >= params.pairs_per_bin) {
            break;
        }
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i == j || !seen.insert((i.min(j), i.max(j))) {
            continue;
        }
        let (a, b) = (&trajectories[i], &trajectories[j]);
        let s = a.overlap(b);
        if s.end - s.start < params.overlap_min {
            continue;
        }
        let mut total = 0.0;
        let mut worst: f64 = 0.0;
        for t in s.clone() {
            let d = (a.point(t).expect("alive") - b.point(t).expect("alive")).norm();
            total += d;
            worst = worst.max(d);
        }
        let mean = total / f64::from(s.end - s.start);
        let Some(bin) = params.edges.windows(2).position(|w| mean >= w[0] && mean < w[1]) else {
            continue;
        };
        if fill[bin] < params.pairs_per_bin {
            fill[bin] += 1;
            out.push(SampledPair {
                i: i.min(j),
                j: i.max(j),
                bin,
                mean_distance: mean,
                max_distance: worst,
            });
        }
    }
    out
}

/// Per distance bin, the rate at which each method's same-object claim
/// disagrees with ground-truth body identity. `rigid_affinity` claims a pair
/// when its affinity exceeds the threshold; `eps_neighbors` claims it when
/// the pair's max distance stays below the bin's upper edge. Conditions are
/// bin centers in meters; empty bins report zero samples.
pub fn affinity_effectiveness(
    trajectories: &[Trajectory],
    transforms: &[TransformSeries],
    bodies: &[usize],
    tau: f64,
    params: &EffectivenessParams,
) -> MetricReport {
    let pairs = sample_pairs(trajectories, params);
    let bins = params.edges.len().saturating_sub(1);
    let mut rigid = vec![Accumulator::default(); bins];
    let mut baseline = vec![Accumulator::default(); bins];
    for p in &pairs {
        let same = bodies[p.i] == bodies[p.j];
        let claim = pair_affinity(trajectories, transforms, p.i, p.j, tau) > params.claim_threshold;
        rigid[p.bin].push(f64::from(u8::from(claim != same)));
        let claim = p.max_distance < params.edges[p.bin + 1];
        baseline[p.bin].push(f64::from(u8::from(claim != same)));
    }
    let mut report = MetricReport::new("affinity-effectiveness", "distance_m");
    for k in 0..bins {
        let center = (params.edges[k] + params.edges[k + 1]) / 2.0;
        report.push(center, "rigid_affinity", &rigid[k]);
        report.push(center, "eps_neighbors", &baseline[k]);
    }
    report
}

/// Image-space proxy for claim quality: for each pair, whether the argmax
/// labels at the two trajectories' projections disagree, in the lowest-id
/// camera that sees both (visibility above `eps_v`) at their first shared
/// frame. `None` when no camera sees both.
pub fn projection_disagreement(
    trajectories: &[Trajectory],
    pairs: &[(usize, usize)],
    source: &dyn ConfidenceSource,
    rig: &Rig,
    eps_v: f64,
) -> Vec<Option<bool>> {
    let mut by_frame: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let s = trajectories[i].overlap(&trajectories[j]);
        if s.start < s.end {
            by_frame.entry(s.start).or_default().push(k);
        }
    }
    let mut out = vec![None; pairs.len()];
    let classes = source.classes();
    let (mut a, mut b) = (vec![0.0; classes], vec![0.0; classes]);
    for (t, ks) in by_frame {
        let fields = source.frame(t);
        for k in ks {
            let (i, j) = pairs[k];
            let (ti, tj) = (&trajectories[i], &trajectories[j]);
            let seen = |tr: &Trajectory, c: u16| tr.visibility_at(t).iter().any(|&(cc, v)| cc == c && f64::from(v) > eps_v);
            let Some(camera) = ti
                .visibility_at(t)
                .iter()
                .filter(|&&(c, v)| f64::from(v) > eps_v && seen(tj, c))
                .map(|&(c, _)| usize::from(c))
                .min()
            else {
                continue;
            };
            let cam = rig.camera(camera);
            let (Ok(pi), Ok(pj)) = (cam.project(ti.point(t).expect("alive")), cam.project(tj.point(t).expect("alive"))) else {
                continue;
            };
            fields.query_into(camera, &pi, &mut a);
            fields.query_into(camera, &pj, &mut b);
            out[k] = Some(argmax_label(&a) != argmax_label(&b));
        }
    }
    out
}

/// Adds the projection proxy to an effectiveness report: the mean
/// projected-label disagreement over each method's claimed pairs per bin.
pub fn add_projection_proxy(
    report: &mut MetricReport,
    trajectories: &[Trajectory],
    transforms: &[TransformSeries],
    tau: f64,
    params: &EffectivenessParams,
    source: &dyn ConfidenceSource,
    rig: &Rig,
    eps_v: f64,
) {
    let pairs = sample_pairs(trajectories, params);
    let ids: Vec<(usize, usize)> = pairs.iter().map(|p| (p.i, p.j)).collect();
    let e = projection_disagreement(trajectories, &ids, source, rig, eps_v);
    let bins = params.edges.len().saturating_sub(1);
    let mut rigid = vec![Accumulator::default(); bins];
    let mut baseline = vec![Accumulator::default(); bins];
    for (p, e) in pairs.iter().zip(e) {
        let Some(e) = e else { continue };
        let e = f64::from(u8::from(e));
        if pair_affinity(trajectories, transforms, p.i, p.j, tau) > params.claim_threshold {
            rigid[p.bin].push(e);
        }
        if p.max_distance < params.edges[p.bin + 1] {
            baseline[p.bin].push(e);
        }
    }
    for k in 0..bins {
        let center = (params.edges[k] + params.edges[k + 1]) / 2.0;
        report.push(center, "rigid_affinity_projection", &rigid[k]);
        report.push(center, "eps_neighbors_projection", &baseline[k]);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveParams {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PredictiveParams {
    fn default() -> Self {
        PredictiveParams {
            sizes: vec![1, 5, 10, 20, 40],
            trials: 1,
            seed: 0,
        }
    }
}

/// A seeded held-out camera and a disjoint subset of `size` cameras. For a
/// given `(seed, trial)` the held-out camera is the same at every size and
/// the subsets are nested, so sizes are compared on common random numbers.
pub fn camera_split(cameras: usize, size: usize, seed: u64, trial: usize) -> Result<(usize, Vec<bool>)> {
    if size == 0 || size >= cameras {
        return Err(Error::invalid("sizes", format!("subset size {size} must be in 1..{cameras}")));
    }
    let mut rng = stream_rng(seed, "camera-split", trial as u64);
    let mut order: Vec<usize> = (0..cameras).collect();
    order.shuffle(&mut rng);
    let held_out = order[0];
    let mut mask = vec![false; cameras];
    for &c in &order[1..=size] {
        mask[c] = true;
    }
    Ok((held_out, mask))
}

/// Argmax label of the held-out camera's confidence at each visible
/// trajectory-frame: `(trajectory index, label)` pairs.
pub fn held_out_labels(
    trajectories: &[Trajectory],
    source: &dyn ConfidenceSource,
    rig: &Rig,
    camera: usize,
    eps_v: f64,
) -> Vec<(usize, Label)> {
    let start = trajectories.iter().map(|t| t.emerge).min().unwrap_or(0);
    let end = trajectories.iter().map(|t| t.frames().end).max().unwrap_or(0);
    let cam = rig.camera(camera);
    let mut buf = vec![0.0; source.classes()];
    let mut out = Vec::new();
    for t in start..end {
        let visible: Vec<usize> = (0..trajectories.len())
            .filter(|&i| {
                trajectories[i].alive(t)
                    && trajectories[i]
                        .visibility_at(t)
                        .iter()
                        .any(|&(c, v)| usize::from(c) == camera && f64::from(v) > eps_v)
            })
            .collect();
        if visible.is_empty() {
            continue;
        }
        let fields = source.frame(t);
        for i in visible {
            let Ok(pixel) = cam.project(trajectories[i].point(t).expect("alive")) else { continue };
            if !cam.in_bounds(&pixel) {
                continue;
            }
            fields.query_into(camera, &pixel, &mut buf);
            out.push((i, argmax_label(&buf)));
        }
    }
    out
}

/// Agreement of a labeling with held-out labels, over trajectory-frames.
pub fn agreement(labeling: &Labeling, held_out: &[(usize, Label)]) -> Option<f64> {
    if held_out.is_empty() {
        return None;
    }
    let hits = held_out.iter().filter(|&&(i, l)| labeling.get(i) == l).count();
    Some(hits as f64 / held_out.len() as f64)
}

/// For each subset size and trial, builds semantic maps from the subset's
/// cameras only, infers labels over the fixed affinity graph, and scores
/// agreement with the held-out camera's recognition at each visible
/// trajectory-frame. Conditions are subset sizes.
#[allow(clippy::too_many_arguments)]
pub fn predictive_validity(
    trajectories: &[Trajectory],
    source: &dyn ConfidenceSource,
    rig: &Rig,
    graph: &AffinityGraph,
    pool: &PoolParams,
    energy: &EnergyParams,
    methods: &[PoolMethod],
    params: &PredictiveParams,
) -> Result<MetricReport> {
    let mut report = MetricReport::new("predictive-validity", "cameras");
    let mut acc: BTreeMap<(usize, usize), Accumulator> = BTreeMap::new();
    for &size in &params.sizes {
        for trial in 0..params.trials {
            let (held, mask) = camera_split(rig.len(), size, params.seed, trial)?;
            let truth = held_out_labels(trajectories, source, rig, held, pool.eps_v);
            for (m, &method) in methods.iter().enumerate() {
                let maps = build_semantic_maps(trajectories, source, rig, method, pool, Some(&mask));
                let labels = infer(trajectories, &maps, graph, energy)?.labeling;
                if let Some(a) = agreement(&labels, &truth) {
                    acc.entry((m, size)).or_default().push(a);
                }
            }
        }
    }
    for (m, method) in methods.iter().enumerate() {
        for &size in &params.sizes {
            let a = acc.get(&(m, size)).copied().unwrap_or_default();
            report.push(size as f64, method.name(), &a);
        }
    }
    Ok(report)
}

/// Overall and per-class accuracy with a confusion matrix
/// (`confusion[truth][predicted]`, zero-based class slots).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub overall: f64,
    pub per_class: Vec<Option<f64>>,
    pub confusion: Vec<Vec<usize>>,
    pub samples: usize,
}

pub fn ground_truth_accuracy(predicted: &[Label], truth: &[Label], classes: usize) -> Result<Accuracy> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(
            "labeling",
            format!("{} predictions for {} ground-truth labels", predicted.len(), truth.len()),
        ));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (p, t) in predicted.iter().zip(truth) {
        if p.index() >= classes || t.index() >= classes {
            return Err(Error::invalid("labeling", format!("label outside 1..={classes}")));
        }
        confusion[t.index()][p.index()] += 1;
    }
    let hits: usize = (0..classes).map(|k| confusion[k][k]).sum();
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[k] as f64 / total as f64)
        })
        .collect();
    Ok(Accuracy {
        overall: if truth.is_empty() { 0.0 } else { hits as f64 / truth.len() as f64 },
        per_class,
        confusion,
        samples: truth.len(),
    })
}

/// Accuracy of the argmax-only and inferred labelings as a report:
/// condition 0 is overall accuracy, condition `k` is class `k`.
pub fn accuracy_report(argmax: &Accuracy, inferred: &Accuracy) -> MetricReport {
    let mut report = MetricReport::new("ground-truth-accuracy", "class");
    for (name, acc) in [("argmax", argmax), ("inferred", inferred)] {
        let overall: Accumulator = [acc.overall].into_iter().collect();
        let mut a = overall;
        if acc.samples == 0 {
            a = Accumulator::default();
        }
        report.series.push(SeriesPoint {
            condition: 0.0,
            method: name.into(),
            mean: a.mean(),
            std: 0.0,
            n: acc.samples,
        });
        for (k, row) in acc.confusion.iter().enumerate() {
            let total: usize = row.iter().sum();
            report.series.push(SeriesPoint {
                condition: (k + 1) as f64,
                method: name.into(),
                mean: acc.per_class[k].unwrap_or(0.0),
                std: 0.0,
                n: total,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{estimate_transforms, AffinityParams, RigidTransform};
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_correlation_is_one() {
        let v = [0.1, 0.7, 0.2];
        assert!((normalized_correlation(&v, &v, Correlation::Cosine).unwrap() - 1.0).abs() < 1e-15);
        assert!((normalized_correlation(&v, &v, Correlation::Pearson).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(normalized_correlation(&[0.0, 0.0], &[1.0, 0.0], Correlation::Cosine), None);
        assert_eq!("pearson".parse::<Correlation>().unwrap(), Correlation::Pearson);
        assert!("spearman".parse::<Correlation>().is_err());
    }

    #[test]
    fn orthogonal_vectors_have_zero_cosine() {
        assert_eq!(normalized_correlation(&[1.0, 0.0], &[0.0, 2.0], Correlation::Cosine), Some(0.0));
    }

    proptest! {
        #[test]
        fn correlation_is_scale_invariant(
            a in proptest::collection::vec(0.0f64..1.0, 4),
            b in proptest::collection::vec(0.0f64..1.0, 4),
            s in 0.01f64..100.0,
            kind in prop_oneof![Just(Correlation::Cosine), Just(Correlation::Pearson)],
        ) {
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            match (normalized_correlation(&a, &b, kind), normalized_correlation(&scaled, &b, kind)) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (x, y) => prop_assert_eq!(x.is_none(), y.is_none()),
            }
        }
    }

    #[test]
    fn perfect_labeling_has_identity_confusion() {
        let labels: Vec<Label> = (0..8).map(|k| Label::from_index(k % 4)).collect();
        let acc = ground_truth_accuracy(&labels, &labels, 4).unwrap();
        assert_eq!(acc.overall, 1.0);
        for k in 0..4 {
            for m in 0..4 {
                assert_eq!(acc.confusion[k][m], if k == m { 2 } else { 0 });
            }
        }
    }

    #[test]
    fn shuffled_labels_sit_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let truth: Vec<Label> = (0..n).map(|_| Label::from_index(rng.random_range(0..4))).collect();
        let guess: Vec<Label> = (0..n).map(|_| Label::from_index(rng.random_range(0..4))).collect();
        let acc = ground_truth_accuracy(&guess, &truth, 4).unwrap();
        // binomial 99.9% interval around 1/4
        let half = 3.3 * (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((acc.overall - 0.25).abs() < half, "{}", acc.overall);
    }

    fn moving(points: &[Vector3<f64>], m: &RigidTransform, frames: u32, first: u32) -> Vec<Trajectory> {
        points
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let mut t = Trajectory::new(first + k as u32, first + k as u32, 0);
                let mut x = *p;
                for _ in 0..frames {
                    t.push(x, vec![], 0.0);
                    x = m.apply(&x);
                }
                t
            })
            .collect()
    }

    #[test]
    fn same_body_pairs_never_mismatch_and_cross_body_claims_always_do() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cloud = |rng: &mut ChaCha8Rng, c: f64| -> Vec<Vector3<f64>> {
            (0..80)
                .map(|_| Vector3::new(c + rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
                .collect()
        };
        let ma = RigidTransform {
            rotation: crate::affinity::random_rotation(&mut rng, 0.05),
            translation: Vector3::new(0.01, 0.0, 0.0),
        };
        let mb = RigidTransform {
            rotation: crate::affinity::random_rotation(&mut rng, 0.05),
            translation: Vector3::new(0.0, 0.02, 0.0),
        };
        let mut trajs = moving(&cloud(&mut rng, 0.0), &ma, 5, 0);
        trajs.extend(moving(&cloud(&mut rng, 0.5), &mb, 5, 80));
        let bodies: Vec<usize> = (0..160).map(|i| i / 80).collect();
        // sparse cloud: widen the transform neighborhood
        let ap = AffinityParams {
            eps: 0.25,
            ..AffinityParams::default()
        };
        let transforms = estimate_transforms(&trajs, &ap);
        let params = EffectivenessParams {
            pairs_per_bin: 50,
            ..EffectivenessParams::default()
        };
        let pairs = sample_pairs(&trajs, &params);
        assert!(!pairs.is_empty());
        for p in &pairs {
            let w = pair_affinity(&trajs, &transforms, p.i, p.j, ap.tau);
            if bodies[p.i] == bodies[p.j] {
                assert!(w > 0.5);
            } else {
                assert!(w < 0.5);
            }
        }
        let report = affinity_effectiveness(&trajs, &transforms, &bodies, ap.tau, &params);
        for row in report.method("rigid_affinity") {
            assert_eq!(row.mean, 0.0, "bin {}", row.condition);
        }
        assert_eq!(report.series.len(), 20);
    }

    #[test]
    fn camera_splits_are_disjoint_and_seeded() {
        let (held, mask) = camera_split(69, 20, 4, 0).unwrap();
        assert!(!mask[held]);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 20);
        assert_eq!(camera_split(69, 20, 4, 0).unwrap(), (held, mask.clone()));
        let (held5, mask5) = camera_split(69, 5, 4, 0).unwrap();
        assert_eq!(held5, held);
        assert!(mask5.iter().zip(&mask).all(|(&small, &large)| !small || large), "subsets nest");
        assert!(camera_split(69, 69, 4, 0).is_err());
    }

    #[test]
    fn accuracy_report_lists_overall_then_classes() {
        let l = vec![Label::new(1), Label::new(2)];
        let a = ground_truth_accuracy(&l, &l, 2).unwrap();
        let r = accuracy_report(&a, &a);
        assert_eq!(r.point("inferred", 0.0).unwrap().mean, 1.0);
        assert_eq!(r.series.len(), 6);
    }
}
