//! Affinity graph files.
//!
//! Binary layout: little-endian triplets `(i u32, j u32, w f32)`, one per
//! undirected edge with `i < j`, where `i` and `j` are trajectory ids. A JSON
//! sidecar header records the format version, node and edge counts and the
//! parameters that built the graph. A CSV emitter with columns `i,j,w` exists
//! for inspection.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AffinityGraph, AffinityParams};
use crate::error::{Error, Result};
use crate::reconstruct::Trajectory;
use crate::scene::io::sidecar_path;

pub const GRAPH_FORMAT_VERSION: u32 = 1;
pub const EDGE_RECORD_BYTES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphHeader {
    pub format_version: u32,
    pub byte_order: String,
    pub nodes: usize,
    pub edges: usize,
    pub params: AffinityParams,
}

fn ids_u32(trajectories: &[Trajectory], graph: &AffinityGraph, path: &Path) -> Result<()> {
    if trajectories.len() != graph.nodes() {
        return Err(Error::format(
            path,
            format!("graph has {} nodes but {} trajectories were given", graph.nodes(), trajectories.len()),
        ));
    }
    Ok(())
}

pub fn write_graph(path: &Path, graph: &AffinityGraph, trajectories: &[Trajectory]) -> Result<GraphHeader> {
    ids_u32(trajectories, graph, path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut record = [0u8; EDGE_RECORD_BYTES];
    for (i, j, weight) in graph.edges() {
        record[0..4].copy_from_slice(&trajectories[i].id.to_le_bytes());
        record[4..8].copy_from_slice(&trajectories[j].id.to_le_bytes());
        record[8..12].copy_from_slice(&(weight as f32).to_le_bytes());
        w.write_all(&record).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let header = GraphHeader {
        format_version: GRAPH_FORMAT_VERSION,
        byte_order: "little".into(),
        nodes: graph.nodes(),
        edges: graph.edge_count(),
        params: graph.params,
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&header).map_err(|e| Error::json(&side, e))?;
    std::fs::write(&side, text).map_err(|e| Error::io(&side, e))?;
    Ok(header)
}

pub fn read_graph_header(path: &Path) -> Result<GraphHeader> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: GraphHeader = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
    if header.format_version != GRAPH_FORMAT_VERSION || header.byte_order != "little" {
        return Err(Error::format(&side, "unsupported graph header"));
    }
    Ok(header)
}

/// Reads a graph whose node order is the order of `trajectories`.
pub fn read_graph(path: &Path, trajectories: &[Trajectory]) -> Result<AffinityGraph> {
    let header = read_graph_header(path)?;
    if header.nodes != trajectories.len() {
        return Err(Error::format(
            path,
            format!("graph has {} nodes but {} trajectories were given", header.nodes, trajectories.len()),
        ));
    }
    let index: HashMap<u32, usize> = trajectories.iter().enumerate().map(|(k, t)| (t.id, k)).collect();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if len != (header.edges * EDGE_RECORD_BYTES) as u64 {
        return Err(Error::format(path, format!("file holds {len} bytes, header promises {} edges", header.edges)));
    }
    let mut input = BufReader::new(file);
    let mut edges = Vec::with_capacity(header.edges);
    let mut record = [0u8; EDGE_RECORD_BYTES];
    for _ in 0..header.edges {
        input.read_exact(&mut record).map_err(|e| Error::io(path, e))?;
        let a = u32::from_le_bytes(record[0..4].try_into().expect("4 bytes"));
        let b = u32::from_le_bytes(record[4..8].try_into().expect("4 bytes"));
        let w = f32::from_le_bytes(record[8..12].try_into().expect("4 bytes"));
        let (Some(&i), Some(&j)) = (index.get(&a), index.get(&b)) else {
            return Err(Error::format(path, format!("edge ({a}, {b}) names an unknown trajectory")));
        };
        if !(w > 0.0 && w <= 1.0) {
            return Err(Error::format(path, format!("edge ({a}, {b}) has weight {w}")));
        }
        edges.push((i, j, f64::from(w)));
    }
    AffinityGraph::from_edges(trajectories.len(), &edges, header.params)
}

/// Inspection CSV with columns `i,j,w` (trajectory ids).
pub fn write_graph_csv(path: &Path, graph: &AffinityGraph, trajectories: &[Trajectory]) -> Result<()> {
    ids_u32(trajectories, graph, path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["i", "j", "w"]).map_err(|e| Error::csv(path, e))?;
    for (i, j, weight) in graph.edges() {
        w.write_record([
            trajectories[i].id.to_string(),
            trajectories[j].id.to_string(),
            (weight as f32).to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
