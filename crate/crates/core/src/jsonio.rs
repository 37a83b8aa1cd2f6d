//! JSON interchange for bimodules, ground truth, traces, and reports.
//!
//! All output files are written through a canonical serializer: object keys
//! sorted, floats in a fixed 17-significant-digit scientific format. Equal
//! in-memory values therefore produce byte-identical files.

use std::collections::HashSet;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corr::{Edge, EdgeList, FeatureSet, View};
use crate::data::TwoViewDataset;
use crate::error::{Error, Result};
use crate::net::NetStats;
use crate::search::{Bimodule, SearchTrace};
use crate::simgen::{BridgeRecord, GroundTruth, PlantedBimodule};

/// Formats a finite float with 17 significant digits.
fn format_float(x: f64) -> String {
    format!("{:.16e}", x)
}

fn escape_into(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&format_float(n.as_f64().expect("numeric value")));
            }
        }
        Value::String(s) => escape_into(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                escape_into(out, key);
                out.push(':');
                write_value(out, &map[*key]);
            }
            out.push('}');
        }
    }
}

/// Serializes any value through the canonical writer.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::InvalidParam {
        msg: format!("serialization failed: {e}"),
    })?;
    let mut out = String::new();
    write_value(&mut out, &v);
    out.push('\n');
    Ok(out)
}

/// Writes a value to a file in canonical JSON.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_canonical_json(value)?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Reads any JSON file into a deserializable value.
pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Malformed {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub s: usize,
    pub t: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetRecord {
    pub tau_star: f64,
    pub tree_multiplicity: f64,
    pub essential_edges: Vec<EdgeRecord>,
}

/// On-disk form of a bimodule; indices are authoritative, identifiers are
/// informational.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BimoduleRecord {
    pub id: usize,
    pub s_indices: Vec<usize>,
    pub t_indices: Vec<usize>,
    #[serde(default)]
    pub s_ids: Vec<String>,
    #[serde(default)]
    pub t_ids: Vec<String>,
    pub pvalue: Option<f64>,
    pub geometric_size: f64,
    pub net: Option<NetRecord>,
}

impl BimoduleRecord {
    pub fn from_bimodule(id: usize, bm: &Bimodule, dataset: Option<&TwoViewDataset>) -> Self {
        let (s_ids, t_ids) = match dataset {
            Some(ds) => (
                bm.a.indices().iter().map(|&i| ds.s_ids[i].clone()).collect(),
                bm.b.indices().iter().map(|&i| ds.t_ids[i].clone()).collect(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        Self {
            id,
            s_indices: bm.a.indices().to_vec(),
            t_indices: bm.b.indices().to_vec(),
            s_ids,
            t_ids,
            pvalue: bm.pvalue_ab,
            geometric_size: bm.geometric_size(),
            net: bm.net.as_ref().map(|net| NetRecord {
                tau_star: net.tau_star,
                tree_multiplicity: net.tree_multiplicity,
                essential_edges: net
                    .essential_edges
                    .edges
                    .iter()
                    .map(|e| EdgeRecord {
                        s: e.s,
                        t: e.t,
                        weight: e.weight,
                    })
                    .collect(),
            }),
        }
    }

    pub fn into_bimodule(self) -> Bimodule {
        let mut bm = Bimodule::new(
            FeatureSet::new(View::TypeOne, self.s_indices),
            FeatureSet::new(View::TypeTwo, self.t_indices),
        );
        bm.pvalue_ab = self.pvalue;
        bm.net = self.net.map(|net| NetStats {
            tau_star: net.tau_star,
            tree_multiplicity: net.tree_multiplicity,
            essential_edges: EdgeList {
                edges: net
                    .essential_edges
                    .into_iter()
                    .map(|e| Edge {
                        s: e.s,
                        t: e.t,
                        weight: e.weight,
                    })
                    .collect(),
            },
        });
        bm
    }
}

/// Writes a bimodule collection with ids taken from positions.
pub fn write_bimodules(
    path: &Path,
    bimodules: &[Bimodule],
    dataset: Option<&TwoViewDataset>,
) -> Result<()> {
    let records: Vec<BimoduleRecord> = bimodules
        .iter()
        .enumerate()
        .map(|(i, bm)| BimoduleRecord::from_bimodule(i, bm, dataset))
        .collect();
    write_json_file(path, &records)
}

pub fn read_bimodules(path: &Path) -> Result<Vec<Bimodule>> {
    let records: Vec<BimoduleRecord> = read_json_file(path)?;
    Ok(records.into_iter().map(BimoduleRecord::into_bimodule).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedRecord {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub rho: f64,
    pub eta: f64,
    pub sigma: f64,
    pub d: usize,
    pub regressor_edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BridgeJsonRecord {
    pub t: usize,
    pub s1: usize,
    pub s2: usize,
    pub sigma: f64,
    pub corr: f64,
}

/// On-disk ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthRecord {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub planted: Vec<PlantedRecord>,
    pub bridges: Vec<BridgeJsonRecord>,
    /// Omitted (with the flag set) when the edge list exceeds the cap given
    /// at write time.
    pub population_edges: Option<Vec<(usize, usize)>>,
    pub population_edges_elided: bool,
}

impl TruthRecord {
    pub fn from_truth(truth: &GroundTruth, edge_cap: Option<usize>) -> Self {
        let elide = edge_cap.is_some_and(|cap| truth.population_edges.len() > cap);
        Self {
            p: truth.p,
            q: truth.q,
            n: truth.n,
            planted: truth
                .planted
                .iter()
                .map(|pb| PlantedRecord {
                    a: pb.a.indices().to_vec(),
                    b: pb.b.indices().to_vec(),
                    rho: pb.rho,
                    eta: pb.eta,
                    sigma: pb.sigma,
                    d: pb.d,
                    regressor_edges: pb.regressor_edges.clone(),
                })
                .collect(),
            bridges: truth
                .bridges
                .iter()
                .map(|br| BridgeJsonRecord {
                    t: br.t,
                    s1: br.s1,
                    s2: br.s2,
                    sigma: br.sigma,
                    corr: br.corr,
                })
                .collect(),
            population_edges: if elide {
                None
            } else {
                Some(truth.population_edges.clone())
            },
            population_edges_elided: elide,
        }
    }

    pub fn into_truth(self) -> GroundTruth {
        GroundTruth {
            p: self.p,
            q: self.q,
            n: self.n,
            planted: self
                .planted
                .into_iter()
                .map(|pr| PlantedBimodule {
                    a: FeatureSet::new(View::TypeOne, pr.a),
                    b: FeatureSet::new(View::TypeTwo, pr.b),
                    rho: pr.rho,
                    eta: pr.eta,
                    sigma: pr.sigma,
                    d: pr.d,
                    regressor_edges: pr.regressor_edges,
                })
                .collect(),
            bridges: self
                .bridges
                .into_iter()
                .map(|br| BridgeRecord {
                    t: br.t,
                    s1: br.s1,
                    s2: br.s2,
                    sigma: br.sigma,
                    corr: br.corr,
                })
                .collect(),
            population_edges: self.population_edges.unwrap_or_default(),
        }
    }

    /// Truth edges for edge-error scoring, reconstructed from the planted
    /// blocks and bridges (works even when population edges were elided).
    pub fn truth_edges(&self) -> HashSet<(usize, usize)> {
        let mut edges = HashSet::new();
        for pr in &self.planted {
            for &s in &pr.a {
                for &t in &pr.b {
                    edges.insert((s, t));
                }
            }
        }
        for br in &self.bridges {
            edges.insert((br.s1, br.t));
            edges.insert((br.s2, br.t));
        }
        edges
    }
}

/// On-disk form of one search trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seed_view: String,
    pub seed_index: usize,
    pub iterates: Vec<(usize, usize)>,
    pub termination: String,
    pub iterations: usize,
    pub seed_contained: bool,
}

impl TraceRecord {
    pub fn from_trace(trace: &SearchTrace) -> Self {
        Self {
            seed_view: match trace.seed_view {
                View::TypeOne => "type_one".into(),
                View::TypeTwo => "type_two".into(),
            },
            seed_index: trace.seed_index,
            iterates: trace.iterates.clone(),
            termination: trace.termination.as_str().into(),
            iterations: trace.iterations,
            seed_contained: trace.seed_contained,
        }
    }
}

/// Machine-readable run summary written as a sidecar next to each output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub n: Option<usize>,
    pub n_eff: Option<usize>,
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub elapsed_seconds: f64,
    pub outputs: Vec<String>,
}
