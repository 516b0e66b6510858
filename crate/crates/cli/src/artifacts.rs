//! Readers and writers for the files a run leaves behind.
//!
//! Everything here is deterministic: fixed column orders, fixed float
//! formatting (`{:e}` with explicit precision), no timestamps or host
//! details. Running the same command twice must produce byte-identical
//! files.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context};
use congid::identify::FrequencyEntry;
use congid::{BasisSet, NetworkCase, RoundLog, RoundSnapshot, ScenarioSet};
use nalgebra::DMatrix;

pub const LMP_CSV: &str = "lmp.csv";
pub const TRUTH_CSV: &str = "truth.csv";
pub const MATRIX_CSV: &str = "matrix.csv";
pub const BASIS_CSV: &str = "basis.csv";
pub const CODES_CSV: &str = "codes.csv";
pub const ROUNDS_LOG: &str = "rounds.log";
pub const TREE_TXT: &str = "tree.txt";
pub const REPORT_TXT: &str = "report.txt";
pub const FREQUENCY_CSV: &str = "frequency.csv";
pub const BLOCKS_CSV: &str = "blocks.csv";

pub fn affinity_csv_name(round: usize) -> String {
    format!("affinity_round{round}.csv")
}

/// Full-precision float formatting; `f64` survives the round trip.
fn full(v: f64) -> String {
    format!("{v:.17e}")
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes the simulated panel in the long ingestion schema, one row per
/// (interval, node), all three price components present.
pub fn write_lmp_csv(path: &Path, case: &NetworkCase, set: &ScenarioSet) -> anyhow::Result<()> {
    let ids: Vec<String> = case.buses.iter().map(|b| b.id.to_string()).collect();
    let mut order: Vec<usize> = (0..case.buses.len()).collect();
    order.sort_by(|&a, &b| congid::pipeline::node_order(&ids[a], &ids[b]));

    let mut text = String::from("node,timestamp,mcc,mlc,mec\n");
    for rec in &set.records {
        let stamp = congid::pipeline::interval_timestamp(rec.interval);
        for &bus in &order {
            let _ = writeln!(
                text,
                "{},{stamp},{},{},{}",
                ids[bus],
                full(rec.components.congestion[bus]),
                full(rec.components.loss[bus]),
                full(rec.components.energy[bus]),
            );
        }
    }
    write_file(path, &text)
}

/// Writes per-interval, per-line ground truth: the line multiplier and
/// whether it marks the line congested.
pub fn write_truth_csv(path: &Path, case: &NetworkCase, set: &ScenarioSet) -> anyhow::Result<()> {
    let mut text = String::from("interval,line_id,mu,congested\n");
    for rec in &set.records {
        for (j, line) in case.lines.iter().enumerate() {
            let _ = writeln!(
                text,
                "{},{},{},{}",
                rec.interval,
                line.id,
                full(rec.solution.mu[j]),
                u8::from(rec.true_status[j]),
            );
        }
    }
    write_file(path, &text)
}

/// Ground truth as read back from [`TRUTH_CSV`].
#[derive(Clone, Debug)]
pub struct TruthTable {
    /// Interval labels, ascending; gaps mark skipped intervals.
    pub intervals: Vec<usize>,
    /// All line ids in the file, ascending.
    pub line_ids: Vec<u32>,
    /// Lines x intervals.
    pub mu: DMatrix<f64>,
    /// Lines x intervals.
    pub congested: DMatrix<u8>,
}

pub fn read_truth_csv(path: &Path) -> anyhow::Result<TruthTable> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut cells: Vec<(usize, u32, f64, u8)> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let field = |j: usize, name: &str| -> anyhow::Result<&str> {
            row.get(j)
                .ok_or_else(|| anyhow::anyhow!("truth row {}: missing {name}", i + 2))
        };
        cells.push((
            field(0, "interval")?.parse().context("interval")?,
            field(1, "line_id")?.parse().context("line_id")?,
            field(2, "mu")?.parse().context("mu")?,
            field(3, "congested")?.parse().context("congested")?,
        ));
    }
    let mut intervals: Vec<usize> = cells.iter().map(|c| c.0).collect();
    intervals.sort_unstable();
    intervals.dedup();
    let mut line_ids: Vec<u32> = cells.iter().map(|c| c.1).collect();
    line_ids.sort_unstable();
    line_ids.dedup();

    let mut mu = DMatrix::zeros(line_ids.len(), intervals.len());
    let mut congested = DMatrix::zeros(line_ids.len(), intervals.len());
    let mut seen = vec![false; line_ids.len() * intervals.len()];
    for (interval, line, m, c) in cells {
        let row = line_ids.binary_search(&line).expect("id from the same list");
        let col = intervals.binary_search(&interval).expect("interval from the same list");
        mu[(row, col)] = m;
        congested[(row, col)] = c;
        seen[row * intervals.len() + col] = true;
    }
    if let Some(gap) = seen.iter().position(|s| !s) {
        bail!(
            "truth file is not a full grid: no row for line {} at interval {}",
            line_ids[gap / intervals.len()],
            intervals[gap % intervals.len()],
        );
    }
    Ok(TruthTable {
        intervals,
        line_ids,
        mu,
        congested,
    })
}

/// Writes the assembled basis in node space, one row per node.
pub fn write_basis_csv(path: &Path, node_ids: &[String], basis: &BasisSet) -> anyhow::Result<()> {
    let mut header = String::from("node");
    for i in 0..basis.vectors.len() {
        let _ = write!(header, ",basis{i}");
    }
    let mut text = header + "\n";
    for (row, node) in node_ids.iter().enumerate() {
        let _ = write!(text, "{node}");
        for v in &basis.vectors {
            let image = v
                .node_space
                .as_ref()
                .expect("assembled vectors carry node-space images");
            let _ = write!(text, ",{}", full(image[row]));
        }
        text.push('\n');
    }
    write_file(path, &text)
}

/// Writes one code row per interval, labeled columns, zero rows for
/// intervals the filter dropped.
pub fn write_codes_csv(
    path: &Path,
    labels: &[String],
    timestamps: &[String],
    codes: &DMatrix<u8>,
) -> anyhow::Result<()> {
    assert_eq!(codes.nrows(), labels.len());
    assert_eq!(codes.ncols(), timestamps.len());
    let mut text = String::from("interval,timestamp");
    for label in labels {
        let _ = write!(text, ",{label}");
    }
    text.push('\n');
    for (t, stamp) in timestamps.iter().enumerate() {
        let _ = write!(text, "{t},{stamp}");
        for i in 0..codes.nrows() {
            let _ = write!(text, ",{}", codes[(i, t)]);
        }
        text.push('\n');
    }
    write_file(path, &text)
}

/// Codes as read back from [`CODES_CSV`].
#[derive(Clone, Debug)]
pub struct CodesTable {
    pub labels: Vec<String>,
    pub timestamps: Vec<String>,
    /// Labels x intervals.
    pub codes: DMatrix<u8>,
}

pub fn read_codes_csv(path: &Path) -> anyhow::Result<CodesTable> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "interval" || &headers[1] != "timestamp" {
        bail!("codes file must start with interval,timestamp columns");
    }
    let labels: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut timestamps = Vec::new();
    let mut bits: Vec<u8> = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if row.len() != labels.len() + 2 {
            bail!("codes row {}: expected {} fields, got {}", i + 2, labels.len() + 2, row.len());
        }
        timestamps.push(row[1].to_string());
        for cell in row.iter().skip(2) {
            bits.push(cell.parse().with_context(|| format!("codes row {}", i + 2))?);
        }
    }
    let m = timestamps.len();
    let codes = DMatrix::from_fn(labels.len(), m, |i, t| bits[t * labels.len() + i]);
    Ok(CodesTable {
        labels,
        timestamps,
        codes,
    })
}

pub fn write_rounds_log(path: &Path, rounds: &[RoundLog]) -> anyhow::Result<()> {
    let mut text = String::new();
    for round in rounds {
        let _ = writeln!(text, "{round}");
    }
    write_file(path, &text)
}

pub fn write_frequency_csv(path: &Path, entries: &[FrequencyEntry]) -> anyhow::Result<()> {
    let mut text = String::from("code,count,share\n");
    for entry in entries {
        let code: String = entry.code.iter().map(|b| char::from(b'0' + b)).collect();
        let _ = writeln!(text, "{code},{},{:.10}", entry.count, entry.share);
    }
    write_file(path, &text)
}

/// Writes the interval-by-interval status grid: one row per code row,
/// one column per interval.
pub fn write_blocks_csv(path: &Path, table: &CodesTable) -> anyhow::Result<()> {
    let mut text = String::from("row");
    for t in 0..table.codes.ncols() {
        let _ = write!(text, ",{t}");
    }
    text.push('\n');
    for (i, label) in table.labels.iter().enumerate() {
        let _ = write!(text, "{label}");
        for t in 0..table.codes.ncols() {
            let _ = write!(text, ",{}", table.codes[(i, t)]);
        }
        text.push('\n');
    }
    write_file(path, &text)
}

/// Writes one round's raw affinity grid; rows and columns are labeled by
/// the original interval position of each working column.
pub fn write_affinity_csv(path: &Path, snap: &RoundSnapshot) -> anyhow::Result<()> {
    let mut text = String::from("col");
    for id in &snap.column_index {
        let _ = write!(text, ",{id}");
    }
    text.push('\n');
    for (i, id) in snap.column_index.iter().enumerate() {
        let _ = write!(text, "{id}");
        for j in 0..snap.affinity.ncols() {
            let _ = write!(text, ",{:.12e}", snap.affinity[(i, j)]);
        }
        text.push('\n');
    }
    write_file(path, &text)
}
