//! Consensus histogram over a dataset: CSV bins plus a static SVG.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use geonav_core::consensus::{render_svg, CenterPolicy};
use geonav_core::{aggregate_consensus, ConsensusConfig, PolarHistogram};
use serde::{Deserialize, Serialize};

use crate::dataset::load_dataset;
use crate::output::{read_csv, write_atomic, write_csv, write_json};
use crate::CliError;

pub const NODES_CSV: &str = "consensus_nodes.csv";
pub const EDGES_CSV: &str = "consensus_edges.csv";
pub const META_JSON: &str = "consensus.json";
pub const SVG_FILE: &str = "consensus.svg";
pub const SVG_SIZE: u32 = 640;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeBinRow {
    pub radial_bin: usize,
    pub angular_bin: usize,
    pub count: u64,
}

/// One undirected bin pair, `from_bin <= to_bin` in flat indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBinRow {
    pub from_bin: usize,
    pub to_bin: usize,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMeta {
    pub graphs: usize,
    pub radial_bins: usize,
    pub angular_bins: usize,
    pub r_max: f64,
    pub center: CenterPolicy,
}

pub fn node_rows(h: &PolarHistogram) -> Vec<NodeBinRow> {
    h.node_counts
        .iter()
        .enumerate()
        .flat_map(|(r, row)| {
            row.iter().enumerate().map(move |(a, &count)| NodeBinRow { radial_bin: r, angular_bin: a, count })
        })
        .collect()
}

pub fn edge_rows(h: &PolarHistogram) -> Vec<EdgeBinRow> {
    h.edge_counts
        .iter()
        .filter(|((a, b), _)| a <= b)
        .map(|(&(from_bin, to_bin), &count)| EdgeBinRow { from_bin, to_bin, count })
        .collect()
}

/// Rebuilds a histogram from the files written by [`cmd_consensus`].
pub fn read_histogram(dir: &Path) -> anyhow::Result<PolarHistogram> {
    let meta: HistogramMeta = serde_json::from_slice(&std::fs::read(dir.join(META_JSON))?)?;
    let nodes: Vec<NodeBinRow> = read_csv(&std::fs::read(dir.join(NODES_CSV))?).context(NODES_CSV)?;
    let edges: Vec<EdgeBinRow> = read_csv(&std::fs::read(dir.join(EDGES_CSV))?).context(EDGES_CSV)?;
    let mut node_counts = vec![vec![0; meta.angular_bins]; meta.radial_bins];
    for n in nodes {
        *node_counts
            .get_mut(n.radial_bin)
            .and_then(|row| row.get_mut(n.angular_bin))
            .ok_or_else(|| anyhow::anyhow!("bin ({}, {}) out of range", n.radial_bin, n.angular_bin))? = n.count;
    }
    let mut edge_counts = BTreeMap::new();
    for e in edges {
        edge_counts.insert((e.from_bin, e.to_bin), e.count);
        if e.from_bin != e.to_bin {
            edge_counts.insert((e.to_bin, e.from_bin), e.count);
        }
    }
    Ok(PolarHistogram {
        radial_bins: meta.radial_bins,
        angular_bins: meta.angular_bins,
        node_counts,
        edge_counts,
        r_max: meta.r_max,
        graphs: meta.graphs,
    })
}

/// Aggregates every graph of a validated dataset and writes bins, metadata and SVG into `out`.
pub fn cmd_consensus(
    dataset_dir: &Path,
    out: &Path,
    min_depth: usize,
    cfg: &ConsensusConfig,
) -> Result<PolarHistogram, CliError> {
    let dataset = load_dataset(dataset_dir, min_depth)?;
    let h = aggregate_consensus(&dataset.nav_graphs(), cfg).context("aggregating consensus histogram")?;
    let meta = HistogramMeta {
        graphs: h.graphs,
        radial_bins: h.radial_bins,
        angular_bins: h.angular_bins,
        r_max: h.r_max,
        center: cfg.center,
    };
    write_csv(&out.join(NODES_CSV), &node_rows(&h))?;
    write_csv(&out.join(EDGES_CSV), &edge_rows(&h))?;
    write_json(&out.join(META_JSON), &meta)?;
    write_atomic(&out.join(SVG_FILE), render_svg(&h, SVG_SIZE).as_bytes())?;
    Ok(h)
}
