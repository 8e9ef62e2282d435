//! File formats: edge lists, coordinate sidecars, signal vectors, block
//! labels, bank files and trace/certificate CSV exports.
//!
//! All writers emit deterministic bytes for identical inputs; floats are
//! printed with Rust's shortest round-trip formatting unless a fixed
//! precision is part of the format.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distributed::IterationTrace;
use crate::error::{Error, Result};
use crate::filterbank::{AnalysisBank, SynthesisBank, SynthesisProvenance};
use crate::graph::{Graph, GraphOrigin};
use crate::spectral::Polynomial;
use crate::synthesis::DecayCertificate;

/// Read an edge list: one "u v" pair per line, `#` comments allowed.
/// Arbitrary integer labels are remapped to dense ids (ascending label
/// order); the label of each dense id is returned alongside the graph.
pub fn load_edge_list(path: &Path) -> Result<(Arc<Graph>, Vec<u64>)> {
    let text = std::fs::read_to_string(path)?;
    let mut raw_edges: Vec<(u64, u64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<u64> {
            tok.ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: "expected two vertex ids".into(),
            })?
            .parse::<u64>()
            .map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: e.to_string(),
            })
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: "trailing tokens after edge".into(),
            });
        }
        raw_edges.push((u, v));
    }
    if raw_edges.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "no edges found".into(),
        });
    }

    let mut labels: Vec<u64> = raw_edges
        .iter()
        .flat_map(|&(u, v)| [u, v])
        .collect();
    labels.sort_unstable();
    labels.dedup();
    let id_of = |label: u64| labels.binary_search(&label).expect("label present") as u32;
    let edges: Vec<(u32, u32)> = raw_edges
        .iter()
        .map(|&(u, v)| (id_of(u), id_of(v)))
        .collect();
    let relabeled = labels
        .iter()
        .enumerate()
        .any(|(i, &l)| l != i as u64);

    let mut graph = Graph::from_edges(labels.len(), &edges)?;
    if let GraphOrigin::Synthetic = graph.origin() {
        // keep the origin informative for loaded graphs
    }
    let _ = relabeled;
    let coords_path = coords_sidecar_path(path);
    if coords_path.exists() {
        let coords = read_coords(&coords_path, labels.len())?;
        graph.set_coords(coords)?;
    }
    Ok((Arc::new(graph), labels))
}

/// `<stem>.coords.csv` next to an edge-list file.
pub fn coords_sidecar_path(edges_path: &Path) -> std::path::PathBuf {
    let mut p = edges_path.as_os_str().to_owned();
    p.push(".coords.csv");
    std::path::PathBuf::from(p)
}

pub fn write_edge_list(path: &Path, g: &Graph) -> Result<()> {
    let mut out = String::new();
    match g.origin() {
        GraphOrigin::Rgg {
            requested,
            initial_seed,
            final_seed,
            attempts,
            giant_extracted,
        } => {
            let _ = writeln!(
                out,
                "# rgg requested={requested} vertices={} initial_seed={initial_seed} final_seed={final_seed} attempts={attempts} giant_extracted={giant_extracted}",
                g.vertex_count()
            );
        }
        _ => {
            let _ = writeln!(out, "# vertices={}", g.vertex_count());
        }
    }
    for (u, v) in g.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Coordinate sidecar: CSV "vertex,x,y" with a header line.
pub fn write_coords(path: &Path, g: &Graph) -> Result<()> {
    let coords = g.coords().ok_or(Error::MissingCoordinates)?;
    let mut out = String::from("vertex,x,y\n");
    for (i, c) in coords.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", c[0], c[1]);
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_coords(path: &Path, n: usize) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path)?;
    let mut coords = vec![[f64::NAN, f64::NAN]; n];
    let mut seen = vec![false; n];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("vertex") {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |what: &str| -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("missing {what}"),
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: e.to_string(),
                })
        };
        let v = field("vertex")? as usize;
        let x = field("x")?;
        let y = field("y")?;
        if v >= n {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("vertex {v} out of range"),
            });
        }
        coords[v] = [x, y];
        seen[v] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: format!("no coordinates for vertex {missing}"),
        });
    }
    Ok(coords)
}

/// Signal vector: one value per line, row index = vertex id.
pub fn read_signal(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: e.to_string(),
        })?);
    }
    if values.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: values.len(),
        });
    }
    Ok(values)
}

pub fn write_signal(path: &Path, x: &[f64]) -> Result<()> {
    let mut out = String::new();
    for v in x {
        let _ = writeln!(out, "{v}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Block labels: one integer label per line, row index = vertex id.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<u32>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        labels.push(line.parse::<u32>().map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: lineno + 1,
            msg: e.to_string(),
        })?);
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    Ok(labels)
}

/// Serialized filter bank: analysis polynomials plus an optional
/// polynomial synthesis section.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankFile {
    pub kind: String,
    pub order: Option<usize>,
    pub sigma: usize,
    pub analysis_p0: Vec<f64>,
    pub analysis_p1: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisSection {
    pub provenance: SynthesisProvenance,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    pub bandwidth: usize,
}

impl BankFile {
    pub fn from_bank(
        kind: &str,
        order: Option<usize>,
        bank: &AnalysisBank,
        synthesis: Option<&SynthesisBank>,
    ) -> Result<Self> {
        let (p0, p1) = bank.polynomials().ok_or(Error::BankFormat(
            "only polynomial banks can be serialized".into(),
        ))?;
        Ok(BankFile {
            kind: kind.to_string(),
            order,
            sigma: bank.bandwidth(),
            analysis_p0: p0.coeffs().to_vec(),
            analysis_p1: p1.coeffs().to_vec(),
            synthesis: synthesis.map(|s| SynthesisSection {
                provenance: s.provenance,
                q0: s.q0.coeffs().to_vec(),
                q1: s.q1.coeffs().to_vec(),
                bandwidth: s.bandwidth,
            }),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::BankFormat(e.to_string()))?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::BankFormat(e.to_string()))
    }

    pub fn analysis_bank(&self, g: &Arc<Graph>) -> Result<AnalysisBank> {
        AnalysisBank::from_polynomials(
            g,
            Polynomial::new(self.analysis_p0.clone()),
            Polynomial::new(self.analysis_p1.clone()),
        )
    }

    pub fn synthesis_bank(&self) -> Option<SynthesisBank> {
        self.synthesis.as_ref().map(|s| SynthesisBank {
            q0: Polynomial::new(s.q0.clone()),
            q1: Polynomial::new(s.q1.clone()),
            provenance: s.provenance,
            bandwidth: s.bandwidth,
        })
    }
}

/// Trace CSV: "iter,rel_err_inf,rel_err_2,update_inf,msgs". Error columns
/// stay empty without an oracle.
pub fn trace_csv(trace: &IterationTrace) -> String {
    let mut out = String::from("iter,rel_err_inf,rel_err_2,update_inf,msgs\n");
    for rec in &trace.records {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            rec.iter,
            fmt(rec.rel_err_inf(trace)),
            fmt(rec.rel_err_2(trace)),
            rec.update_inf,
            rec.messages
        );
    }
    out
}

/// Decay certificate CSV: "i,j,rho,abs_g,bound", the filter-0 block
/// followed by the filter-1 block, each introduced by a comment line.
pub fn certificate_csv(cert: &DecayCertificate) -> String {
    let mut out = String::from("i,j,rho,abs_g,bound\n");
    for filter in 0..2 {
        let _ = writeln!(out, "# filter {filter}");
        for s in cert.samples.iter().filter(|s| s.filter == filter) {
            let _ = writeln!(out, "{},{},{},{},{}", s.i, s.j, s.rho, s.abs_g, s.bound);
        }
    }
    out
}

/// Frequency response CSV "lambda,P0,P1,Q0,Q1" over the spectrum.
pub fn frequency_response_csv(
    eigenvalues: &[f64],
    p0: &Polynomial,
    p1: &Polynomial,
    q0: Option<&Polynomial>,
    q1: Option<&Polynomial>,
) -> String {
    let mut out = String::from("lambda,P0,P1,Q0,Q1\n");
    for &l in eigenvalues {
        let fq = |q: Option<&Polynomial>| q.map(|p| p.eval(l).to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{l},{},{},{},{}",
            p0.eval(l),
            p1.eval(l),
            fq(q0),
            fq(q1)
        );
    }
    out
}
