//! Joint trajectory labeling by α-expansion.
//!
//! The energy of a labeling `U` is
//! `sum_i phi(l_i, U(i)) + lambda * sum_{(i,j)} A(i,j) [U(i) != U(j)]`,
//! where `l_i` is the argmax of trajectory `i`'s semantic map and
//! `phi(l_i, u)` is `0` when `u = l_i` and the map's confidence in `l_i`
//! otherwise. Every undirected edge is counted once. Each expansion move is
//! an exact binary min-cut over "keep the current label" versus "switch to
//! α".

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityGraph;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::maxflow::FlowNetwork;
use crate::reconstruct::Trajectory;
use crate::semantic::{argmax_label, SemanticMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyParams {
    /// Smoothness weight.
    pub lambda: f64,
    /// Cap on full cycles over the label set.
    pub max_sweeps: usize,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            lambda: 1.0,
            max_sweeps: 10,
        }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("energy.lambda", "must be finite and non-negative"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::invalid("energy.max_sweeps", "must be at least 1"));
        }
        Ok(())
    }
}

/// One label per trajectory, in trajectory order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Labeling(pub Vec<Label>);

impl Labeling {
    /// The argmax label of every semantic map (ties to the lowest label).
    pub fn argmax(maps: &[SemanticMap]) -> Self {
        Labeling(maps.iter().map(|m| argmax_label(&m.values)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Label {
        self.0[i]
    }
}

/// Unary data terms derived from the semantic maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTerms {
    pub classes: usize,
    /// Argmax label `l_i` of each map.
    pub preferred: Vec<Label>,
    /// Cost of leaving `l_i`: the map's confidence in `l_i`.
    pub penalty: Vec<f64>,
}

impl DataTerms {
    pub fn new(maps: &[SemanticMap]) -> Result<Self> {
        let classes = maps.first().map_or(0, |m| m.values.len());
        let mut preferred = Vec::with_capacity(maps.len());
        let mut penalty = Vec::with_capacity(maps.len());
        for (i, m) in maps.iter().enumerate() {
            if m.values.len() != classes || classes == 0 {
                return Err(Error::invalid(
                    "semantic_maps",
                    format!("map {i} has {} classes, expected {classes}", m.values.len()),
                ));
            }
            let l = argmax_label(&m.values);
            let p = m.values[l.index()];
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::invalid("semantic_maps", format!("map {i} has invalid entries")));
            }
            preferred.push(l);
            penalty.push(p);
        }
        Ok(DataTerms {
            classes,
            preferred,
            penalty,
        })
    }

    pub fn cost(&self, i: usize, label: Label) -> f64 {
        if label == self.preferred[i] { 0.0 } else { self.penalty[i] }
    }
}

/// Energy of `labeling`, summing nodes then edges in index order.
pub fn energy(labeling: &Labeling, data: &DataTerms, graph: &AffinityGraph, params: &EnergyParams) -> f64 {
    let unary: f64 = (0..labeling.len()).map(|i| data.cost(i, labeling.get(i))).sum();
    let pairwise: f64 = graph
        .edges()
        .filter(|&(i, j, _)| labeling.get(i) != labeling.get(j))
        .map(|(_, _, w)| w)
        .sum();
    unary + params.lambda * pairwise
}

/// Energy convenience wrapper over semantic maps.
pub fn labeling_energy(labeling: &Labeling, maps: &[SemanticMap], graph: &AffinityGraph, params: &EnergyParams) -> Result<f64> {
    check_aligned(labeling.len(), maps.len(), graph)?;
    Ok(energy(labeling, &DataTerms::new(maps)?, graph, params))
}

fn check_aligned(labels: usize, maps: usize, graph: &AffinityGraph) -> Result<()> {
    if labels != maps || maps != graph.nodes() {
        return Err(Error::invalid(
            "graph",
            format!("{labels} labels, {maps} semantic maps and {} graph nodes disagree", graph.nodes()),
        ));
    }
    Ok(())
}

/// Best α-expansion of `current`: each node either keeps its label or
/// switches to `alpha`, chosen by an exact min-cut.
pub fn expansion_move(
    current: &Labeling,
    alpha: Label,
    data: &DataTerms,
    graph: &AffinityGraph,
    params: &EnergyParams,
) -> Labeling {
    let n = current.len();
    let (s, t) = (n, n + 1);
    let mut net = FlowNetwork::with_capacity(n + 2, graph.edge_count() + 2 * n);
    // Linear coefficient of x_i (1 = switch to alpha).
    let mut linear: Vec<f64> = (0..n)
        .map(|i| data.cost(i, alpha) - data.cost(i, current.get(i)))
        .collect();
    for (i, j, w) in graph.edges() {
        let (li, lj) = (current.get(i), current.get(j));
        let w = params.lambda * w;
        if w == 0.0 || (li == alpha && lj == alpha) {
            continue;
        }
        let e00 = if li != lj { w } else { 0.0 };
        let e01 = if li != alpha { w } else { 0.0 };
        let e10 = if lj != alpha { w } else { 0.0 };
        // E = e00 + (e10 - e00) x_i + (0 - e10) x_j + (e01 + e10 - e00) (1 - x_i) x_j
        linear[i] += e10 - e00;
        linear[j] -= e10;
        let c = e01 + e10 - e00;
        if c > 0.0 {
            net.add_edge(i, j, c, 0.0);
        }
    }
    for (i, &a) in linear.iter().enumerate() {
        if current.get(i) == alpha {
            continue;
        }
        // Source side keeps the label; the s->i arc is cut when i switches.
        if a > 0.0 {
            net.add_edge(s, i, a, 0.0);
        } else if a < 0.0 {
            net.add_edge(i, t, -a, 0.0);
        }
    }
    let flow = net.solve(s, t);
    let keep = flow.source_side();
    Labeling(
        (0..n)
            .map(|i| if keep[i] { current.get(i) } else { alpha })
            .collect(),
    )
}

/// One row of the energy trace: the energy after trying label `alpha` in
/// sweep `sweep` (sweep 0, alpha 0 is the initial energy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub sweep: usize,
    pub alpha: u16,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub labeling: Labeling,
    pub energy: f64,
    pub trace: Vec<TraceEntry>,
    pub sweeps: usize,
}

/// Iterated α-expansion from `init` (argmax labels when `None`). Moves are
/// accepted only on strict energy decrease; stops after a sweep without
/// improvement or after `max_sweeps`.
pub fn alpha_expansion(
    maps: &[SemanticMap],
    graph: &AffinityGraph,
    params: &EnergyParams,
    init: Option<&Labeling>,
) -> Result<Expansion> {
    params.validate()?;
    let data = DataTerms::new(maps)?;
    let mut labeling = match init {
        Some(l) => l.clone(),
        None => Labeling(data.preferred.clone()),
    };
    check_aligned(labeling.len(), maps.len(), graph)?;
    if let Some(bad) = labeling.0.iter().find(|l| l.index() >= data.classes.max(1)) {
        return Err(Error::invalid("init", format!("label {bad} outside 1..={}", data.classes)));
    }
    let mut current = energy(&labeling, &data, graph, params);
    let mut trace = vec![TraceEntry {
        sweep: 0,
        alpha: 0,
        energy: current,
    }];
    let mut sweeps = 0;
    if labeling.is_empty() {
        return Ok(Expansion {
            labeling,
            energy: current,
            trace,
            sweeps,
        });
    }
    while sweeps < params.max_sweeps {
        sweeps += 1;
        let mut improved = false;
        for k in 0..data.classes {
            let alpha = Label::from_index(k);
            let candidate = expansion_move(&labeling, alpha, &data, graph, params);
            if candidate != labeling {
                let e = energy(&candidate, &data, graph, params);
                if e < current {
                    labeling = candidate;
                    current = e;
                    improved = true;
                }
            }
            trace.push(TraceEntry {
                sweep: sweeps,
                alpha: alpha.get(),
                energy: current,
            });
        }
        if !improved {
            break;
        }
    }
    Ok(Expansion {
        labeling,
        energy: current,
        trace,
        sweeps,
    })
}

/// Per-trajectory audit row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRow {
    pub trajectory_id: u32,
    pub argmax: Label,
    pub label: Label,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub labeling: Labeling,
    pub rows: Vec<InferenceRow>,
    pub initial_energy: f64,
    pub energy: f64,
    pub trace: Vec<TraceEntry>,
}

impl Inference {
    pub fn changed(&self) -> usize {
        self.rows.iter().filter(|r| r.changed).count()
    }
}

/// Runs α-expansion from the argmax labels and reports which trajectories
/// changed.
pub fn infer(
    trajectories: &[Trajectory],
    maps: &[SemanticMap],
    graph: &AffinityGraph,
    params: &EnergyParams,
) -> Result<Inference> {
    if trajectories.len() != maps.len() {
        return Err(Error::invalid(
            "semantic_maps",
            format!("{} trajectories but {} semantic maps", trajectories.len(), maps.len()),
        ));
    }
    if trajectories.is_empty() {
        return Ok(Inference {
            labeling: Labeling(Vec::new()),
            rows: Vec::new(),
            initial_energy: 0.0,
            energy: 0.0,
            trace: vec![TraceEntry {
                sweep: 0,
                alpha: 0,
                energy: 0.0,
            }],
        });
    }
    let result = alpha_expansion(maps, graph, params, None)?;
    let rows = trajectories
        .iter()
        .zip(maps)
        .zip(&result.labeling.0)
        .map(|((t, m), &label)| {
            let argmax = argmax_label(&m.values);
            InferenceRow {
                trajectory_id: t.id,
                argmax,
                label,
                changed: argmax != label,
            }
        })
        .collect();
    Ok(Inference {
        initial_energy: result.trace[0].energy,
        energy: result.energy,
        labeling: result.labeling,
        rows,
        trace: result.trace,
    })
}

/// Labeling CSV: `trajectory_id,l_i,final_label,changed,l1..lN`.
pub fn write_labeling_csv(path: &Path, inference: &Inference, maps: &[SemanticMap]) -> Result<()> {
    let classes = maps.first().map_or(0, |m| m.values.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut header = vec!["trajectory_id".to_string(), "l_i".into(), "final_label".into(), "changed".into()];
    header.extend((1..=classes).map(|k| format!("l{k}")));
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for (row, m) in inference.rows.iter().zip(maps) {
        let mut rec = vec![
            row.trajectory_id.to_string(),
            row.argmax.to_string(),
            row.label.to_string(),
            u8::from(row.changed).to_string(),
        ];
        rec.extend(m.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `(trajectory_id, l_i, final_label)` rows from a labeling CSV.
pub fn read_labeling_csv(path: &Path) -> Result<Vec<(u32, Label, Label)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let field = |k: usize| -> Result<u32> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format(path, format!("bad column {k} in labeling row")))
        };
        let label = |k: usize| -> Result<Label> {
            let v = field(k)?;
            u16::try_from(v)
                .ok()
                .filter(|&v| v >= 1)
                .map(Label::new)
                .ok_or_else(|| Error::format(path, format!("label {v} is not a class")))
        };
        out.push((field(0)?, label(1)?, label(2)?));
    }
    Ok(out)
}

/// Energy trace CSV: `sweep,alpha,energy`.
pub fn write_trace_csv(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for e in trace {
        w.serialize(e).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::AffinityParams;
    use proptest::prelude::*;

    fn map(values: &[f64]) -> SemanticMap {
        SemanticMap {
            values: values.to_vec(),
            pooled_frames: 1,
        }
    }

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> AffinityGraph {
        AffinityGraph::from_edges(n, edges, AffinityParams::default()).unwrap()
    }

    /// Minimum energy over all labelings.
    fn brute_force(data: &DataTerms, g: &AffinityGraph, p: &EnergyParams) -> f64 {
        let n = data.preferred.len();
        let mut best = f64::INFINITY;
        let mut digits = vec![0usize; n];
        loop {
            let l = Labeling(digits.iter().map(|&k| Label::from_index(k)).collect());
            best = best.min(energy(&l, data, g, p));
            let mut k = 0;
            while k < n {
                digits[k] += 1;
                if digits[k] < data.classes {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
            if k == n {
                return best;
            }
        }
    }

    #[test]
    fn ground_state_has_zero_energy() {
        let maps = vec![map(&[0.9, 0.1]), map(&[0.8, 0.2]), map(&[0.7, 0.3])];
        let g = graph(3, &[(0, 1, 0.9), (1, 2, 0.95)]);
        let e = labeling_energy(&Labeling::argmax(&maps), &maps, &g, &EnergyParams::default()).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn flipped_trajectory_energy_is_hand_summed() {
        let maps = vec![map(&[0.7, 0.3]), map(&[0.9, 0.1]), map(&[0.9, 0.1])];
        let g = graph(3, &[(0, 1, 0.9), (0, 2, 0.9)]);
        let flipped = Labeling(vec![Label::new(2), Label::new(1), Label::new(1)]);
        let e = labeling_energy(&flipped, &maps, &g, &EnergyParams::default()).unwrap();
        assert!((e - 2.5).abs() < 1e-6, "{e}");
    }

    #[test]
    fn zero_lambda_returns_argmax() {
        let maps = vec![map(&[0.2, 0.5, 0.3]), map(&[0.6, 0.2, 0.2]), map(&[0.1, 0.1, 0.8])];
        let g = graph(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]);
        let p = EnergyParams {
            lambda: 0.0,
            ..EnergyParams::default()
        };
        let out = alpha_expansion(&maps, &g, &p, None).unwrap();
        assert_eq!(out.labeling, Labeling::argmax(&maps));
        assert_eq!(out.energy, 0.0);
    }

    #[test]
    fn no_edges_reduce_to_unaries() {
        let maps = vec![map(&[0.2, 0.8]), map(&[0.6, 0.4])];
        let init = Labeling(vec![Label::new(1), Label::new(2)]);
        let out = alpha_expansion(&maps, &graph(2, &[]), &EnergyParams::default(), Some(&init)).unwrap();
        assert_eq!(out.labeling, Labeling::argmax(&maps));
    }

    #[test]
    fn flipped_minority_is_corrected() {
        // two bodies of 6, strong inner edges; one flipped map per body
        let mut maps = Vec::new();
        let mut edges = Vec::new();
        for body in 0..2 {
            for k in 0..6 {
                let i = body * 6 + k;
                let truth = body;
                let shown = if k == 0 { 1 - truth } else { truth };
                let mut v = [0.2, 0.2];
                v[shown] = 0.8;
                maps.push(map(&v));
                for m in 0..k {
                    edges.push((body * 6 + m, i, 0.95));
                }
            }
        }
        let g = graph(12, &edges);
        let out = alpha_expansion(&maps, &g, &EnergyParams::default(), None).unwrap();
        for i in 0..12 {
            assert_eq!(out.labeling.get(i), Label::from_index(i / 6), "node {i}");
        }
        let data = DataTerms::new(&maps).unwrap();
        assert!((out.energy - brute_force(&data, &g, &EnergyParams::default())).abs() < 1e-9);
    }

    #[test]
    fn empty_inputs_give_empty_labeling() {
        let g = graph(0, &[]);
        let out = infer(&[], &[], &g, &EnergyParams::default()).unwrap();
        assert!(out.labeling.is_empty());
    }

    #[test]
    fn invalid_lambda_is_rejected() {
        let p = EnergyParams {
            lambda: -1.0,
            ..EnergyParams::default()
        };
        assert!(p.validate().unwrap_err().to_string().contains("energy.lambda"));
    }

    fn instance() -> impl Strategy<Value = (Vec<SemanticMap>, AffinityGraph, f64)> {
        (1usize..=8, 2usize..=4, 0.0f64..3.0).prop_flat_map(|(n, classes, lambda)| {
            let maps = proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, classes), n);
            let edges = proptest::collection::vec((0..n, 0..n, 0.0f64..1.0), 0..(2 * n));
            (maps, edges, Just(n), Just(lambda))
        })
        .prop_map(|(raw, edges, n, lambda)| {
            let maps = raw.into_iter().map(|v| map(&v)).collect();
            let edges: Vec<_> = edges.into_iter().filter(|e| e.0 != e.1).collect();
            (maps, graph(n, &edges), lambda)
        })
    }

    proptest! {
        #[test]
        fn single_move_is_the_best_expansion((maps, g, lambda) in instance()) {
            let p = EnergyParams { lambda, ..EnergyParams::default() };
            let data = DataTerms::new(&maps).unwrap();
            let current = Labeling::argmax(&maps);
            let n = current.len();
            for k in 0..data.classes {
                let alpha = Label::from_index(k);
                let moved = energy(&expansion_move(&current, alpha, &data, &g, &p), &data, &g, &p);
                let mut best = f64::INFINITY;
                for mask in 0u32..(1 << n) {
                    let l = Labeling((0..n).map(|i| if mask & (1 << i) != 0 { alpha } else { current.get(i) }).collect());
                    best = best.min(energy(&l, &data, &g, &p));
                }
                prop_assert!(moved <= best + 1e-9, "move {moved} vs best expansion {best}");
            }
        }

        #[test]
        fn trace_never_increases_and_bound_holds((maps, g, lambda) in instance()) {
            let p = EnergyParams { lambda, ..EnergyParams::default() };
            let out = alpha_expansion(&maps, &g, &p, None).unwrap();
            for w in out.trace.windows(2) {
                prop_assert!(w[1].energy <= w[0].energy);
            }
            let data = DataTerms::new(&maps).unwrap();
            let optimum = brute_force(&data, &g, &p);
            prop_assert!(out.energy <= 2.0 * optimum + 1e-9);
            prop_assert!(out.energy <= out.trace[0].energy);
        }
    }
}
