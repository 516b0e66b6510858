//! LMP panel ingestion and preparation of the working congestion matrix.
//!
//! Price panels arrive either from the simulator or from market CSV
//! exports. The pipeline normalizes them into a dense [`LmpPanel`],
//! strips the constant loss-reference term from the congestion component,
//! drops intervals without congestion, and optionally compresses the node
//! dimension with a PCA projection that preserves inner products.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg;
use crate::market::ScenarioSet;
use crate::network::NetworkCase;

/// Columns whose congestion component never exceeds this magnitude in
/// $/MWh count as congestion-free. Price feeds publish four decimals.
pub const CONGESTION_FILTER_TOL: f64 = 1e-4;

/// Default fraction of squared Frobenius norm the PCA projection may
/// discard.
pub const PCA_ENERGY_TOL: f64 = 1e-8;

/// Timestamp assigned to interval 0 of simulated panels; intervals step
/// hourly from here.
pub const SCENARIO_EPOCH: &str = "2024-01-01T00:00:00Z";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("failed to read panel: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("column {0:?} named in the schema is missing from the header")]
    MissingColumn(String),
    #[error("could not parse {field} value {value:?} at line {line}")]
    BadField {
        field: &'static str,
        value: String,
        line: usize,
    },
    #[error("conflicting duplicate cell for node {node} at {timestamp}")]
    ConflictingDuplicate { node: String, timestamp: String },
    #[error("missing cell for node {node} at {timestamp} (policy: reject)")]
    MissingCell { node: String, timestamp: String },
    #[error("reference node {0} not present in the panel")]
    UnknownRefNode(String),
    #[error("no congestion observed: every interval is below the filter tolerance")]
    NoCongestion,
    #[error("{0}")]
    Shape(String),
}

/// Column-name map for panel CSV files. `congestion` is required;
/// `loss` and `energy` are read only when named here.
#[derive(Clone, Debug)]
pub struct CsvSchema {
    pub node: String,
    pub timestamp: String,
    pub congestion: String,
    pub loss: Option<String>,
    pub energy: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            node: "node".into(),
            timestamp: "timestamp".into(),
            congestion: "mcc".into(),
            loss: None,
            energy: None,
        }
    }
}

impl CsvSchema {
    /// Default schema widened by whichever optional component columns the
    /// header actually carries.
    pub fn detect(headers: &[String]) -> CsvSchema {
        let mut schema = CsvSchema::default();
        if headers.iter().any(|h| h == "mlc") {
            schema.loss = Some("mlc".into());
        }
        if headers.iter().any(|h| h == "mec") {
            schema.energy = Some("mec".into());
        }
        schema
    }
}

/// What to do with absent (node, timestamp) cells during ingestion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MissingPolicy {
    #[default]
    Reject,
    /// Fill forward from the node's previous interval; the first interval
    /// must be present.
    ForwardFill,
}

/// Dense LMP component panel: one row per node, one column per interval.
#[derive(Clone, Debug)]
pub struct LmpPanel {
    pub node_ids: Vec<String>,
    /// Interval timestamps, ascending.
    pub timestamps: Vec<String>,
    pub energy: DMatrix<f64>,
    pub congestion: DMatrix<f64>,
    pub loss: DMatrix<f64>,
    /// Nodes removed by [`dedupe_nodes`], mapped to their representative.
    pub merged: BTreeMap<String, String>,
}

/// Working congestion matrix: retained columns of the congestion
/// component, optionally PCA-compressed to coordinate space.
#[derive(Clone, Debug)]
pub struct CongestionMatrix {
    /// Coordinates: nodes x intervals before PCA, rank x intervals after.
    pub x: DMatrix<f64>,
    /// Node labels of the original row space.
    pub node_ids: Vec<String>,
    /// Original interval position of each retained column.
    pub interval_index: Vec<usize>,
    /// Timestamp of each retained column.
    pub timestamps: Vec<String>,
    /// Interval positions dropped as congestion-free.
    pub dropped: Vec<usize>,
    /// Orthonormal-row projection from node space to coordinate space,
    /// present once PCA has been applied.
    pub projection: Option<DMatrix<f64>>,
    pub retained_rank: Option<usize>,
}

impl CongestionMatrix {
    /// Maps a coordinate-space vector back to node space (identity before
    /// PCA).
    pub fn to_node_space(&self, v: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        match &self.projection {
            Some(p) => p.transpose() * v,
            None => v.clone(),
        }
    }
}

/// Node ordering used for panel rows: numeric ids sort numerically,
/// everything else lexicographically after them.
pub fn node_order(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

fn parse_instant(text: &str) -> Option<i64> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Timestamp of a simulated interval: [`SCENARIO_EPOCH`] plus one hour
/// per interval index.
pub fn interval_timestamp(interval: usize) -> String {
    let epoch = DateTime::parse_from_rfc3339(SCENARIO_EPOCH)
        .expect("epoch constant parses")
        .with_timezone(&Utc);
    (epoch + chrono::Duration::hours(interval as i64))
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Reads a panel CSV into a dense [`LmpPanel`]. Rows end up sorted by
/// node id, columns by timestamp. Duplicate cells with identical values
/// collapse silently; conflicting duplicates and (by default) missing
/// cells are errors.
pub fn ingest_lmp_csv(
    path: &Path,
    schema: &CsvSchema,
    policy: MissingPolicy,
) -> Result<LmpPanel, PipelineError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| PipelineError::Csv(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| PipelineError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| -> Result<usize, PipelineError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::MissingColumn(name.to_string()))
    };
    let c_node = col(&schema.node)?;
    let c_ts = col(&schema.timestamp)?;
    let c_mcc = col(&schema.congestion)?;
    let c_mlc = schema.loss.as_deref().map(col).transpose()?;
    let c_mec = schema.energy.as_deref().map(col).transpose()?;

    // Cell store keyed by (node, instant): (mcc, mlc, mec, timestamp text).
    let mut cells: BTreeMap<(String, i64), (f64, f64, f64, String)> = BTreeMap::new();
    let mut ts_text: BTreeMap<i64, String> = BTreeMap::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| PipelineError::Csv(e.to_string()))?;
        let line = line + 2;
        let node = record.get(c_node).unwrap_or("").trim().to_string();
        let ts_raw = record.get(c_ts).unwrap_or("").trim().to_string();
        let instant = parse_instant(&ts_raw).ok_or_else(|| PipelineError::BadField {
            field: "timestamp",
            value: ts_raw.clone(),
            line,
        })?;
        let parse_num = |idx: usize, field: &'static str| -> Result<f64, PipelineError> {
            let raw = record.get(idx).unwrap_or("").trim();
            raw.parse::<f64>().map_err(|_| PipelineError::BadField {
                field,
                value: raw.to_string(),
                line,
            })
        };
        let mcc = parse_num(c_mcc, "congestion")?;
        let mlc = c_mlc.map(|i| parse_num(i, "loss")).transpose()?.unwrap_or(0.0);
        let mec = c_mec.map(|i| parse_num(i, "energy")).transpose()?.unwrap_or(0.0);
        ts_text.entry(instant).or_insert(ts_raw.clone());
        match cells.entry((node.clone(), instant)) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert((mcc, mlc, mec, ts_raw));
            }
            std::collections::btree_map::Entry::Occupied(e) => {
                let (pm, pl, pe, _) = *e.get();
                if pm != mcc || pl != mlc || pe != mec {
                    return Err(PipelineError::ConflictingDuplicate {
                        node,
                        timestamp: ts_raw,
                    });
                }
            }
        }
    }

    let mut node_ids: Vec<String> = cells
        .keys()
        .map(|(n, _)| n.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    node_ids.sort_by(|a, b| node_order(a, b));
    let instants: Vec<i64> = ts_text.keys().copied().collect();
    let timestamps: Vec<String> = instants.iter().map(|i| ts_text[i].clone()).collect();
    let (n, m) = (node_ids.len(), instants.len());
    if n == 0 || m == 0 {
        return Err(PipelineError::Shape("panel is empty".into()));
    }

    let mut energy = DMatrix::zeros(n, m);
    let mut congestion = DMatrix::zeros(n, m);
    let mut loss = DMatrix::zeros(n, m);
    for (i, node) in node_ids.iter().enumerate() {
        let mut last: Option<(f64, f64, f64)> = None;
        for (j, instant) in instants.iter().enumerate() {
            let cell = cells.get(&(node.clone(), *instant)).map(|&(a, b, c, _)| (a, b, c));
            let (mcc, mlc, mec) = match (cell, policy, last) {
                (Some(v), _, _) => v,
                (None, MissingPolicy::ForwardFill, Some(prev)) => prev,
                (None, _, _) => {
                    return Err(PipelineError::MissingCell {
                        node: node.clone(),
                        timestamp: timestamps[j].clone(),
                    })
                }
            };
            congestion[(i, j)] = mcc;
            loss[(i, j)] = mlc;
            energy[(i, j)] = mec;
            last = Some((mcc, mlc, mec));
        }
    }
    Ok(LmpPanel {
        node_ids,
        timestamps,
        energy,
        congestion,
        loss,
        merged: BTreeMap::new(),
    })
}

/// Builds a panel directly from simulated market intervals, bypassing
/// CSV. Rows follow the same node ordering as ingestion.
pub fn panel_from_scenarios(case: &NetworkCase, set: &ScenarioSet) -> LmpPanel {
    let mut order: Vec<usize> = (0..case.buses.len()).collect();
    let ids: Vec<String> = case.buses.iter().map(|b| b.id.to_string()).collect();
    order.sort_by(|&a, &b| node_order(&ids[a], &ids[b]));
    let node_ids: Vec<String> = order.iter().map(|&i| ids[i].clone()).collect();

    let m = set.records.len();
    let n = node_ids.len();
    let mut energy = DMatrix::zeros(n, m);
    let mut congestion = DMatrix::zeros(n, m);
    let mut loss = DMatrix::zeros(n, m);
    let mut timestamps = Vec::with_capacity(m);
    for (j, rec) in set.records.iter().enumerate() {
        timestamps.push(interval_timestamp(rec.interval));
        for (row, &bus_pos) in order.iter().enumerate() {
            energy[(row, j)] = rec.components.energy[bus_pos];
            congestion[(row, j)] = rec.components.congestion[bus_pos];
            loss[(row, j)] = rec.components.loss[bus_pos];
        }
    }
    LmpPanel {
        node_ids,
        timestamps,
        energy,
        congestion,
        loss,
        merged: BTreeMap::new(),
    }
}

/// Merges nodes whose three component series agree elementwise within
/// `tol`. The representative is the first node in panel order; merged
/// names are recorded in the panel's alias map.
pub fn dedupe_nodes(panel: &LmpPanel, tol: f64) -> LmpPanel {
    let n = panel.node_ids.len();
    let mut keep: Vec<usize> = Vec::new();
    let mut merged = panel.merged.clone();
    'rows: for i in 0..n {
        for &r in &keep {
            let close = |m: &DMatrix<f64>| {
                (0..m.ncols()).all(|j| (m[(i, j)] - m[(r, j)]).abs() <= tol)
            };
            if close(&panel.congestion) && close(&panel.loss) && close(&panel.energy) {
                merged.insert(panel.node_ids[i].clone(), panel.node_ids[r].clone());
                continue 'rows;
            }
        }
        keep.push(i);
    }
    let select = |m: &DMatrix<f64>| m.select_rows(keep.iter());
    LmpPanel {
        node_ids: keep.iter().map(|&i| panel.node_ids[i].clone()).collect(),
        timestamps: panel.timestamps.clone(),
        energy: select(&panel.energy),
        congestion: select(&panel.congestion),
        loss: select(&panel.loss),
        merged,
    }
}

/// Subtracts the reference node's congestion row from every row,
/// removing the constant loss-reference shift that lossy pricing adds to
/// all nodes. Idempotent; the reference row becomes zero.
pub fn eliminate_loss_term(panel: &LmpPanel, ref_node: &str) -> Result<LmpPanel, PipelineError> {
    let r = panel
        .node_ids
        .iter()
        .position(|n| n == ref_node)
        .ok_or_else(|| PipelineError::UnknownRefNode(ref_node.to_string()))?;
    let mut congestion = panel.congestion.clone();
    let ref_row = panel.congestion.row(r).into_owned();
    for i in 0..congestion.nrows() {
        for j in 0..congestion.ncols() {
            congestion[(i, j)] -= ref_row[j];
        }
    }
    Ok(LmpPanel {
        congestion,
        ..panel.clone()
    })
}

/// Keeps only intervals whose congestion component has infinity norm
/// above `tol`. Fails when nothing survives.
pub fn filter_congested(panel: &LmpPanel, tol: f64) -> Result<CongestionMatrix, PipelineError> {
    let m = panel.congestion.ncols();
    let mut retained = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..m {
        let norm = panel.congestion.column(j).amax();
        if norm > tol {
            retained.push(j);
        } else {
            dropped.push(j);
        }
    }
    if retained.is_empty() {
        return Err(PipelineError::NoCongestion);
    }
    let x = panel.congestion.select_columns(retained.iter());
    Ok(CongestionMatrix {
        x,
        node_ids: panel.node_ids.clone(),
        interval_index: retained.clone(),
        timestamps: retained.iter().map(|&j| panel.timestamps[j].clone()).collect(),
        dropped,
        projection: None,
        retained_rank: None,
    })
}

/// Compresses the row space to the smallest set of principal directions
/// capturing at least `1 - energy_tol` of the squared Frobenius norm.
/// Coordinates replace the matrix; the projection is kept for mapping
/// results back to node space.
pub fn pca_reduce(cm: &CongestionMatrix, energy_tol: f64) -> CongestionMatrix {
    let svd = linalg::sorted_svd(&cm.x);
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let mut k = 0;
    let mut captured = 0.0;
    while k < svd.singular_values.len() && captured < (1.0 - energy_tol) * total {
        captured += svd.singular_values[k] * svd.singular_values[k];
        k += 1;
    }
    let k = k.max(1);
    let u_k_t = svd.u.columns(0, k).transpose();
    let x = &u_k_t * &cm.x;
    let projection = match &cm.projection {
        Some(p) => &u_k_t * p,
        None => u_k_t.clone(),
    };
    CongestionMatrix {
        x,
        node_ids: cm.node_ids.clone(),
        interval_index: cm.interval_index.clone(),
        timestamps: cm.timestamps.clone(),
        dropped: cm.dropped.clone(),
        projection: Some(projection),
        retained_rank: Some(k),
    }
}

/// Persists the working matrix as CSV: header row carries the retained
/// interval positions, each body row one coordinate across intervals.
pub fn write_matrix_csv(cm: &CongestionMatrix, path: &Path) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| PipelineError::Csv(e.to_string()))?;
    let mut header = vec!["row".to_string()];
    header.extend(cm.interval_index.iter().map(|i| i.to_string()));
    w.write_record(&header).map_err(|e| PipelineError::Csv(e.to_string()))?;
    for i in 0..cm.x.nrows() {
        let mut rec = vec![i.to_string()];
        rec.extend((0..cm.x.ncols()).map(|j| format!("{:.12e}", cm.x[(i, j)])));
        w.write_record(&rec).map_err(|e| PipelineError::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{generate_scenarios, DispatchMode};
    use crate::network::{build_ptdf, Bus, Generator, Line, LossModel, OfferBlock};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::io::Write as _;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_builds_sorted_dense_panel() {
        let f = write_csv(
            "node,timestamp,mcc\n\
             10,2024-01-01T01:00:00Z,1.5\n\
             2,2024-01-01T00:00:00Z,0.5\n\
             2,2024-01-01T01:00:00Z,0.7\n\
             10,2024-01-01T00:00:00Z,-0.25\n\
             2,2024-01-01T02:00:00Z,0.9\n\
             10,2024-01-01T02:00:00Z,1.1\n",
        );
        let panel =
            ingest_lmp_csv(f.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap();
        // Numeric node ids sort numerically: 2 before 10.
        assert_eq!(panel.node_ids, vec!["2", "10"]);
        assert_eq!(panel.timestamps.len(), 3);
        assert_eq!(panel.congestion.nrows(), 2);
        assert_eq!(panel.congestion[(0, 0)], 0.5);
        assert_eq!(panel.congestion[(1, 1)], 1.5);
    }

    #[test]
    fn identical_duplicates_collapse_but_conflicts_error() {
        let f = write_csv(
            "node,timestamp,mcc\n\
             a,2024-01-01T00:00:00Z,1.0\n\
             a,2024-01-01T00:00:00Z,1.0\n\
             b,2024-01-01T00:00:00Z,2.0\n",
        );
        let panel =
            ingest_lmp_csv(f.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap();
        assert_eq!(panel.node_ids.len(), 2);

        let g = write_csv(
            "node,timestamp,mcc\n\
             a,2024-01-01T00:00:00Z,1.0\n\
             a,2024-01-01T00:00:00Z,1.5\n",
        );
        assert!(matches!(
            ingest_lmp_csv(g.path(), &CsvSchema::default(), MissingPolicy::Reject),
            Err(PipelineError::ConflictingDuplicate { .. })
        ));
    }

    #[test]
    fn missing_cells_reject_or_forward_fill() {
        let f = write_csv(
            "node,timestamp,mcc\n\
             a,2024-01-01T00:00:00Z,1.0\n\
             a,2024-01-01T01:00:00Z,2.0\n\
             b,2024-01-01T00:00:00Z,5.0\n",
        );
        assert!(matches!(
            ingest_lmp_csv(f.path(), &CsvSchema::default(), MissingPolicy::Reject),
            Err(PipelineError::MissingCell { .. })
        ));
        let panel =
            ingest_lmp_csv(f.path(), &CsvSchema::default(), MissingPolicy::ForwardFill).unwrap();
        assert_eq!(panel.congestion[(1, 1)], 5.0);
    }

    #[test]
    fn market_style_export_round_trips() {
        // Export layout with extra columns and custom names.
        let f = write_csv(
            "Settlement Location,GMTIntervalEnd,LMP,MLC,MCC,MEC\n\
             NODE_A,2024-06-01T00:05:00Z,25.1,0.4,3.2,21.5\n\
             NODE_B,2024-06-01T00:05:00Z,22.0,0.1,0.4,21.5\n\
             NODE_A,2024-06-01T00:10:00Z,26.0,0.5,4.0,21.5\n\
             NODE_B,2024-06-01T00:10:00Z,21.9,0.3,0.1,21.5\n",
        );
        let schema = CsvSchema {
            node: "Settlement Location".into(),
            timestamp: "GMTIntervalEnd".into(),
            congestion: "MCC".into(),
            loss: Some("MLC".into()),
            energy: Some("MEC".into()),
        };
        let panel = ingest_lmp_csv(f.path(), &schema, MissingPolicy::Reject).unwrap();
        assert_eq!(panel.node_ids, vec!["NODE_A", "NODE_B"]);
        assert_eq!(panel.congestion[(0, 1)], 4.0);
        assert_eq!(panel.loss[(1, 1)], 0.3);
        assert_eq!(panel.energy[(0, 0)], 21.5);

        let missing = CsvSchema {
            loss: Some("NO_SUCH".into()),
            ..schema
        };
        assert!(matches!(
            ingest_lmp_csv(f.path(), &missing, MissingPolicy::Reject),
            Err(PipelineError::MissingColumn(_))
        ));
    }

    fn two_node_panel(congestion: DMatrix<f64>) -> LmpPanel {
        let (n, m) = (congestion.nrows(), congestion.ncols());
        LmpPanel {
            node_ids: (0..n).map(|i| i.to_string()).collect(),
            timestamps: (0..m).map(interval_timestamp).collect(),
            energy: DMatrix::zeros(n, m),
            congestion,
            loss: DMatrix::zeros(n, m),
            merged: BTreeMap::new(),
        }
    }

    #[test]
    fn dedupe_merges_identical_nodes_only() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.002]);
        let panel = two_node_panel(x);
        let merged = dedupe_nodes(&panel, 1e-3);
        assert_eq!(merged.node_ids, vec!["0", "2"]);
        assert_eq!(merged.merged.get("1").map(String::as_str), Some("0"));

        // A node differing at one interval by twice the tolerance stays.
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0 + 2e-3]);
        let kept = dedupe_nodes(&two_node_panel(y), 1e-3);
        assert_eq!(kept.node_ids.len(), 2);
    }

    #[test]
    fn loss_term_elimination_removes_constant_shifts() {
        // Columns of the form v - c*1 for varying c map to v - v_ref*1.
        let v = [3.0, -1.0, 2.0];
        let mut x = DMatrix::zeros(3, 4);
        for (j, c) in [0.0, 1.0, -2.5, 10.0].iter().enumerate() {
            for i in 0..3 {
                x[(i, j)] = v[i] - c;
            }
        }
        let panel = two_node_panel(x);
        let out = eliminate_loss_term(&panel, "0").unwrap();
        for j in 0..4 {
            for i in 0..3 {
                assert_relative_eq!(out.congestion[(i, j)], v[i] - v[0], epsilon = 1e-12);
            }
            assert_eq!(out.congestion[(0, j)], 0.0);
        }
        // A second application changes nothing.
        let twice = eliminate_loss_term(&out, "0").unwrap();
        assert_eq!(twice.congestion, out.congestion);

        assert!(matches!(
            eliminate_loss_term(&panel, "missing"),
            Err(PipelineError::UnknownRefNode(_))
        ));
    }

    #[test]
    fn lossy_same_status_columns_become_proportional() {
        let case = NetworkCase {
            name: "triangle".into(),
            ref_bus: 1,
            buses: vec![
                Bus { id: 1, load: 0.0 },
                Bus { id: 2, load: 0.0 },
                Bus { id: 3, load: 90.0 },
            ],
            lines: vec![
                Line { id: 1, from: 1, to: 2, reactance: 0.1, capacity: None },
                Line { id: 2, from: 2, to: 3, reactance: 0.1, capacity: None },
                Line { id: 3, from: 1, to: 3, reactance: 0.1, capacity: Some(40.0) },
            ],
            generators: vec![
                Generator {
                    id: 1,
                    bus: 1,
                    pmin: 0.0,
                    pmax: 100.0,
                    blocks: vec![OfferBlock { quantity: 100.0, price: 10.0 }],
                },
                Generator {
                    id: 2,
                    bus: 2,
                    pmin: 0.0,
                    pmax: 100.0,
                    blocks: vec![OfferBlock { quantity: 100.0, price: 20.0 }],
                },
            ],
            loss: LossModel {
                l0: 1.0,
                lf: vec![0.0, 0.03, 0.06],
                d: vec![0.2, 0.3, 0.5],
            },
        };
        case.validate().unwrap();
        let ptdf = build_ptdf(&case).unwrap();
        let set = generate_scenarios(&case, &ptdf, DispatchMode::Lossy, 60, 0.03, 11).unwrap();
        let panel = panel_from_scenarios(&case, &set);
        let flat = eliminate_loss_term(&panel, &panel.node_ids[0]).unwrap();

        // Columns whose interval had exactly the one congested line must
        // be scalar multiples of each other after elimination.
        let congested: Vec<usize> = set
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.true_status == vec![false, false, true])
            .map(|(j, _)| j)
            .collect();
        assert!(congested.len() > 10);
        let base = flat.congestion.column(congested[0]).into_owned();
        let base_norm = base.norm();
        for &j in &congested[1..] {
            let col = flat.congestion.column(j).into_owned();
            let scale = col.dot(&base) / (base_norm * base_norm);
            let spread = (&col - &base * scale).amax();
            assert!(spread < 1e-6, "ratio spread {spread} too large");
        }
    }

    #[test]
    fn filter_drops_quiet_intervals() {
        let mut x = DMatrix::zeros(2, 100);
        for j in 0..90 {
            x[(0, j)] = 1.0 + j as f64;
        }
        // Ten trailing columns stay at zero.
        let cm = filter_congested(&two_node_panel(x), CONGESTION_FILTER_TOL).unwrap();
        assert_eq!(cm.x.ncols(), 90);
        assert_eq!(cm.dropped.len(), 10);
        assert_eq!(cm.interval_index[0], 0);

        let zero = two_node_panel(DMatrix::zeros(2, 5));
        assert!(matches!(
            filter_congested(&zero, CONGESTION_FILTER_TOL),
            Err(PipelineError::NoCongestion)
        ));
    }

    #[test]
    fn pca_finds_planted_rank() {
        use rand::Rng;
        let mut rng = crate::seed::stream_rng(5, "pca-test");
        // Thirty rows spanned by four independent directions.
        let b = DMatrix::from_fn(30, 4, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(4, 576, |_, _| rng.gen_range(-2.0..2.0));
        let x = &b * &c;
        let cm = CongestionMatrix {
            x: x.clone(),
            node_ids: (0..30).map(|i| i.to_string()).collect(),
            interval_index: (0..576).collect(),
            timestamps: (0..576).map(interval_timestamp).collect(),
            dropped: vec![],
            projection: None,
            retained_rank: None,
        };
        let reduced = pca_reduce(&cm, PCA_ENERGY_TOL);
        assert_eq!(reduced.retained_rank, Some(4));
        assert_eq!(reduced.x.nrows(), 4);
        // Projection rows orthonormal; reconstruction exact.
        let p = reduced.projection.as_ref().unwrap();
        let gram = p * p.transpose();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(gram[(i, j)], want, epsilon = 1e-10);
            }
        }
        let recon = p.transpose() * &reduced.x;
        assert!((&recon - &x).amax() < 1e-9);

        // Rank-2 data under 1e-8 additive noise resolves to 2 at a
        // looser energy tolerance.
        let b2 = b.columns(0, 2).into_owned();
        let c2 = c.rows(0, 2).into_owned();
        let mut noisy = &b2 * &c2;
        for v in noisy.iter_mut() {
            *v += rng.gen_range(-1e-8..1e-8);
        }
        let cm2 = CongestionMatrix {
            x: noisy,
            ..cm.clone()
        };
        let red2 = pca_reduce(&cm2, 1e-6);
        assert_eq!(red2.retained_rank, Some(2));
    }

    #[test]
    fn matrix_csv_round_trip_is_stable() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.5, 0.25, 1e-7, -4.0]);
        let cm = CongestionMatrix {
            x,
            node_ids: vec!["a".into(), "b".into()],
            interval_index: vec![0, 2, 5],
            timestamps: (0..3).map(interval_timestamp).collect(),
            dropped: vec![1, 3, 4],
            projection: None,
            retained_rank: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_matrix_csv(&cm, &path).unwrap();
        let first = std::fs::read(&path).unwrap();
        write_matrix_csv(&cm, &path).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second);
        let text = String::from_utf8(first).unwrap();
        assert!(text.starts_with("row,0,2,5\n"));
    }

    proptest! {
        #[test]
        fn elimination_is_idempotent(values in proptest::collection::vec(-50.0f64..50.0, 12)) {
            let x = DMatrix::from_row_slice(3, 4, &values);
            let panel = two_node_panel(x);
            let once = eliminate_loss_term(&panel, "1").unwrap();
            let twice = eliminate_loss_term(&once, "1").unwrap();
            prop_assert_eq!(once.congestion, twice.congestion);
        }

        #[test]
        fn pca_preserves_inner_products(seed in 0u64..500) {
            use rand::Rng;
            let mut rng = crate::seed::stream_rng(seed, "pca-prop");
            let b = DMatrix::from_fn(8, 3, |_, _| rng.gen_range(-1.0..1.0));
            let c = DMatrix::from_fn(3, 10, |_, _| rng.gen_range(-1.0..1.0));
            let x = &b * &c;
            let cm = CongestionMatrix {
                x: x.clone(),
                node_ids: (0..8).map(|i| i.to_string()).collect(),
                interval_index: (0..10).collect(),
                timestamps: (0..10).map(interval_timestamp).collect(),
                dropped: vec![],
                projection: None,
                retained_rank: None,
            };
            let red = pca_reduce(&cm, PCA_ENERGY_TOL);
            let g_full = x.transpose() * &x;
            let g_red = red.x.transpose() * &red.x;
            prop_assert!((&g_full - &g_red).amax() < 1e-8 * (1.0 + g_full.amax()));
        }

        #[test]
        fn filter_is_insensitive_to_input_row_order(perm_seed in 0u64..100) {
            use rand::seq::SliceRandom;
            let rows = [
                "1,2024-01-01T00:00:00Z,0.0",
                "1,2024-01-01T01:00:00Z,3.0",
                "1,2024-01-01T02:00:00Z,0.0",
                "2,2024-01-01T00:00:00Z,0.0",
                "2,2024-01-01T01:00:00Z,-1.0",
                "2,2024-01-01T02:00:00Z,0.0",
            ];
            let mut shuffled: Vec<&str> = rows.to_vec();
            let mut rng = crate::seed::stream_rng(perm_seed, "perm");
            shuffled.shuffle(&mut rng);
            let base = write_csv(&format!("node,timestamp,mcc\n{}\n", rows.join("\n")));
            let moved = write_csv(&format!("node,timestamp,mcc\n{}\n", shuffled.join("\n")));
            let pa = ingest_lmp_csv(base.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap();
            let pb = ingest_lmp_csv(moved.path(), &CsvSchema::default(), MissingPolicy::Reject).unwrap();
            let fa = filter_congested(&pa, CONGESTION_FILTER_TOL).unwrap();
            let fb = filter_congested(&pb, CONGESTION_FILTER_TOL).unwrap();
            prop_assert_eq!(fa.x, fb.x);
            prop_assert_eq!(fa.interval_index, fb.interval_index);
        }
    }
}
