//! Dinic max-flow / min-cut on real-valued capacities.
//!
//! Arcs live in compressed adjacency arrays; every arc is paired with its
//! reverse so residual updates are O(1). Capacities at or below a relative
//! tolerance count as saturated, which keeps floating-point round-off from
//! creating endless sub-epsilon augmenting paths.

use std::collections::VecDeque;

/// Builder collecting arcs before the solver lays them out.
#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    nodes: usize,
    edges: Vec<(u32, u32, f64, f64)>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            nodes,
            edges: Vec::new(),
        }
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        FlowNetwork {
            nodes,
            edges: Vec::with_capacity(edges),
        }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    /// Adds an arc `u -> v` with capacity `forward` and the opposite arc with
    /// capacity `backward`.
    ///
    /// # Panics
    /// On out-of-range nodes or negative / non-finite capacities.
    pub fn add_edge(&mut self, u: usize, v: usize, forward: f64, backward: f64) {
        assert!(u < self.nodes && v < self.nodes, "node out of range");
        assert!(
            forward >= 0.0 && backward >= 0.0 && forward.is_finite() && backward.is_finite(),
            "capacities must be finite and non-negative"
        );
        if u != v && (forward > 0.0 || backward > 0.0) {
            self.edges.push((u as u32, v as u32, forward, backward));
        }
    }

    /// Solves max-flow from `s` to `t`.
    pub fn solve(self, s: usize, t: usize) -> MaxFlow {
        MaxFlow::run(self, s, t)
    }
}

/// A solved flow problem: the flow value, the residual network and the
/// source side of a minimum cut.
#[derive(Debug, Clone)]
pub struct MaxFlow {
    offsets: Vec<usize>,
    head: Vec<u32>,
    pair: Vec<u32>,
    residual: Vec<f64>,
    capacity: Vec<f64>,
    tolerance: f64,
    source: usize,
    sink: usize,
    value: f64,
}

impl MaxFlow {
    fn run(network: FlowNetwork, s: usize, t: usize) -> Self {
        assert!(s < network.nodes && t < network.nodes && s != t, "bad terminals");
        let n = network.nodes;
        let mut degree = vec![0usize; n + 1];
        for &(u, v, _, _) in &network.edges {
            degree[u as usize + 1] += 1;
            degree[v as usize + 1] += 1;
        }
        for k in 0..n {
            degree[k + 1] += degree[k];
        }
        let offsets = degree;
        let arcs = offsets[n];
        let mut next = offsets.clone();
        let mut head = vec![0u32; arcs];
        let mut pair = vec![0u32; arcs];
        let mut capacity = vec![0.0; arcs];
        let mut largest: f64 = 0.0;
        for &(u, v, f, b) in &network.edges {
            let a = next[u as usize];
            next[u as usize] += 1;
            let r = next[v as usize];
            next[v as usize] += 1;
            head[a] = v;
            head[r] = u;
            pair[a] = r as u32;
            pair[r] = a as u32;
            capacity[a] = f;
            capacity[r] = b;
            largest = largest.max(f).max(b);
        }
        drop(network);
        let mut flow = MaxFlow {
            offsets,
            head,
            pair,
            residual: capacity.clone(),
            capacity,
            tolerance: largest * 1e-12,
            source: s,
            sink: t,
            value: 0.0,
        };
        flow.dinic();
        #[cfg(debug_assertions)]
        if let Err(e) = flow.audit() {
            panic!("max-flow audit failed: {e}");
        }
        flow
    }

    fn open(&self, arc: usize) -> bool {
        self.residual[arc] > self.tolerance
    }

    fn levels(&self, level: &mut [u32]) -> bool {
        level.fill(u32::MAX);
        level[self.source] = 0;
        let mut queue = VecDeque::from([self.source]);
        while let Some(u) = queue.pop_front() {
            for a in self.offsets[u]..self.offsets[u + 1] {
                let v = self.head[a] as usize;
                if level[v] == u32::MAX && self.open(a) {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level[self.sink] != u32::MAX
    }

    fn dinic(&mut self) {
        let n = self.offsets.len() - 1;
        let mut level = vec![u32::MAX; n];
        let mut current = vec![0usize; n];
        let mut path: Vec<usize> = Vec::new();
        while self.levels(&mut level) {
            current.copy_from_slice(&self.offsets[..n]);
            // Iterative blocking-flow search along the level graph.
            let mut u = self.source;
            loop {
                if u == self.sink {
                    let push = path.iter().map(|&a| self.residual[a]).fold(f64::INFINITY, f64::min);
                    for &a in &path {
                        self.residual[a] -= push;
                        self.residual[self.pair[a] as usize] += push;
                    }
                    self.value += push;
                    // retreat to the tail of the first saturated arc
                    let cut = path.iter().position(|&a| !self.open(a)).unwrap_or(0);
                    path.truncate(cut);
                    u = match path.last() {
                        Some(&a) => self.head[a] as usize,
                        None => self.source,
                    };
                    continue;
                }
                let mut advanced = false;
                while current[u] < self.offsets[u + 1] {
                    let a = current[u];
                    let v = self.head[a] as usize;
                    if self.open(a) && level[v] == level[u] + 1 {
                        path.push(a);
                        u = v;
                        advanced = true;
                        break;
                    }
                    current[u] += 1;
                }
                if advanced {
                    continue;
                }
                // dead end: prune u from this phase and retreat
                level[u] = u32::MAX;
                match path.pop() {
                    Some(a) => {
                        u = self.head[self.pair[a] as usize] as usize;
                        current[u] += 1;
                    }
                    None => break,
                }
            }
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Nodes reachable from the source in the residual network (the source
    /// side of a minimum cut).
    pub fn source_side(&self) -> Vec<bool> {
        let n = self.offsets.len() - 1;
        let mut seen = vec![false; n];
        seen[self.source] = true;
        let mut stack = vec![self.source];
        while let Some(u) = stack.pop() {
            for a in self.offsets[u]..self.offsets[u + 1] {
                let v = self.head[a] as usize;
                if !seen[v] && self.open(a) {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }

    /// Total capacity of arcs leaving the source side.
    pub fn cut_capacity(&self) -> f64 {
        let side = self.source_side();
        let mut total = 0.0;
        for u in (0..side.len()).filter(|&u| side[u]) {
            for a in self.offsets[u]..self.offsets[u + 1] {
                if !side[self.head[a] as usize] {
                    total += self.capacity[a];
                }
            }
        }
        total
    }

    /// Checks capacity bounds, flow conservation and max-flow = min-cut.
    pub fn audit(&self) -> Result<(), String> {
        let n = self.offsets.len() - 1;
        let scale = self.tolerance.max(f64::MIN_POSITIVE) * 1e3 * (self.head.len().max(1) as f64);
        let mut excess = vec![0.0; n];
        for u in 0..n {
            for a in self.offsets[u]..self.offsets[u + 1] {
                let r = self.pair[a] as usize;
                if self.residual[a] < -scale {
                    return Err(format!("negative residual on arc {a}"));
                }
                if (self.residual[a] + self.residual[r] - self.capacity[a] - self.capacity[r]).abs() > scale {
                    return Err(format!("arc pair {a}/{r} lost capacity"));
                }
                if a > r {
                    continue;
                }
                // net flow along a (its pair carries the negation)
                let flow = self.capacity[a] - self.residual[a];
                excess[self.head[a] as usize] += flow;
                excess[u] -= flow;
            }
        }
        for (u, e) in excess.iter().enumerate() {
            if u == self.source || u == self.sink {
                continue;
            }
            if e.abs() > scale {
                return Err(format!("node {u} violates conservation by {e}"));
            }
        }
        let out = -excess[self.source];
        let into = excess[self.sink];
        let cut = self.cut_capacity();
        let tol = scale.max(1e-9 * cut.abs().max(1.0));
        if (out - self.value).abs() > tol || (into - self.value).abs() > tol {
            return Err(format!("flow value {} but source sends {out} and sink takes {into}", self.value));
        }
        if (cut - self.value).abs() > tol {
            return Err(format!("flow value {} differs from cut capacity {cut}", self.value));
        }
        Ok(())
    }
}
