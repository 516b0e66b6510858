//! The four commands: simulate, identify, evaluate, report.
//!
//! Commands do the work and return summaries; printing is the binary's
//! job. All file artifacts are deterministic for a fixed config and
//! seed; wall-clock timings only ever go to the summary, never to disk.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use congid::identify::{self, IdentificationReport, StatusCodeSeq};
use congid::pipeline::{self, CongestionMatrix, CsvSchema, LmpPanel, MissingPolicy, PipelineError};
use congid::top_down::{self, SearchTree, TopDownParams};
use congid::{
    bottom_up, linalg, BasisSet, BottomUpOutcome, BottomUpParams, NetworkCase, ScenarioError,
};
use nalgebra::DMatrix;

use crate::artifacts::{self, CodesTable, TruthTable};
use crate::config::{Mode, RunConfig};
use crate::CliError;

/// Nodes whose component series differ by less than this merge into one.
/// Duplicates come from electrically identical buses, so the gap to real
/// distinct prices is many orders of magnitude.
const DEDUPE_TOL: f64 = 1e-9;

pub struct SimulateSummary {
    pub requested: usize,
    pub feasible: usize,
    pub skipped: Vec<usize>,
    pub ever_congested: Vec<u32>,
}

pub fn cmd_simulate(config: &RunConfig) -> Result<SimulateSummary, CliError> {
    config.validate()?;
    let case_path = config.input("case")?;
    let case = NetworkCase::load(case_path)
        .with_context(|| format!("loading case {}", case_path.display()))?;
    let ptdf = congid::build_ptdf(&case).context("building shift factors")?;
    let set = congid::generate_scenarios(
        &case,
        &ptdf,
        config.mode.dispatch(),
        config.intervals,
        config.noise,
        config.seed,
    )
    .map_err(|e| match e {
        ScenarioError::TooManyInfeasible { .. } => CliError::Infeasible(e.to_string()),
        other => CliError::Other(anyhow::Error::new(other)),
    })?;

    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    artifacts::write_lmp_csv(&config.artifact(artifacts::LMP_CSV), &case, &set)?;
    artifacts::write_truth_csv(&config.artifact(artifacts::TRUTH_CSV), &case, &set)?;

    let mut ever_congested = Vec::new();
    for (j, line) in case.lines.iter().enumerate() {
        if set.records.iter().any(|r| r.true_status[j]) {
            ever_congested.push(line.id);
        }
    }
    Ok(SimulateSummary {
        requested: config.intervals,
        feasible: set.records.len(),
        skipped: set.skipped.clone(),
        ever_congested,
    })
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::NoCongestion => CliError::NoCongestion,
        other => CliError::Other(anyhow::Error::new(other)),
    }
}

struct Prepared {
    panel: LmpPanel,
    xhat: CongestionMatrix,
    nodes_ingested: usize,
    ingest_seconds: f64,
    preprocess_seconds: f64,
}

/// Shared front of identify and report: ingest, merge duplicate nodes,
/// correct lossy prices, filter, and compress.
fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    let lmp_path = config.input("lmp")?;
    let start = Instant::now();
    let schema = detect_schema(lmp_path)?;
    let raw = pipeline::ingest_lmp_csv(lmp_path, &schema, MissingPolicy::Reject)
        .map_err(pipeline_error)?;
    let ingest_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let nodes_ingested = raw.node_ids.len();
    let corrected = match config.mode {
        Mode::Lossless => raw,
        Mode::Lossy => {
            let ref_node = config
                .ref_node
                .as_ref()
                .ok_or_else(|| anyhow!("--ref-node is required in lossy mode"))?;
            pipeline::eliminate_loss_term(&raw, ref_node).map_err(pipeline_error)?
        }
    };
    let panel = pipeline::dedupe_nodes(&corrected, DEDUPE_TOL);
    let cm = pipeline::filter_congested(&panel, pipeline::CONGESTION_FILTER_TOL)
        .map_err(pipeline_error)?;
    let xhat = pipeline::pca_reduce(&cm, config.energy_tol);
    let preprocess_seconds = start.elapsed().as_secs_f64();

    Ok(Prepared {
        panel,
        xhat,
        nodes_ingested,
        ingest_seconds,
        preprocess_seconds,
    })
}

fn detect_schema(path: &Path) -> anyhow::Result<CsvSchema> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers: Vec<String> = reader
        .headers()
        .with_context(|| format!("reading {}", path.display()))?
        .iter()
        .map(str::to_string)
        .collect();
    Ok(CsvSchema::detect(&headers))
}

fn bottom_up_params(config: &RunConfig) -> BottomUpParams {
    BottomUpParams {
        eps: config.eps_cutoff,
        rank_tol: config.rank_tol,
        zero_tol_rel: config.zero_tol,
        seed: config.seed,
        ..BottomUpParams::default()
    }
}

pub struct IdentifySummary {
    pub nodes_ingested: usize,
    pub nodes_kept: usize,
    pub intervals: usize,
    pub retained: usize,
    pub pca_rank: usize,
    pub rounds: usize,
    pub bottom_vectors: usize,
    pub top_vectors: usize,
    pub top_down_ran: bool,
    pub basis_rank: usize,
    /// Labels of coefficient rows dropped at encoding.
    pub dropped_rows: Vec<String>,
    /// Retained intervals that still coded to all-zero.
    pub zero_columns: usize,
    pub stage_seconds: Vec<(&'static str, f64)>,
    pub written: Vec<String>,
}

pub fn cmd_identify(config: &RunConfig) -> Result<IdentifySummary, CliError> {
    config.validate()?;
    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    let prepared = prepare(config)?;
    let xhat = &prepared.xhat;
    let mut written = Vec::new();

    let start = Instant::now();
    let bottom = bottom_up::bottom_up_search(xhat, &bottom_up_params(config))
        .map_err(|e| anyhow::Error::new(e).context("bottom-up search"))?;
    let bottom_seconds = start.elapsed().as_secs_f64();

    // Diagnostics go to disk before assembly so a rank-deficit exit still
    // leaves the trail behind.
    let matrix_path = config.artifact(artifacts::MATRIX_CSV);
    pipeline::write_matrix_csv(xhat, &matrix_path).map_err(pipeline_error)?;
    written.push(artifacts::MATRIX_CSV.into());
    artifacts::write_rounds_log(&config.artifact(artifacts::ROUNDS_LOG), &bottom.rounds)?;
    written.push(artifacts::ROUNDS_LOG.into());

    let start = Instant::now();
    let mut top_set = BasisSet::default();
    let mut tree: Option<SearchTree> = None;
    if let Some(residual) = &bottom.residual {
        let params = TopDownParams {
            p: config.p,
            n_trials: config.n_trials,
            seed: config.seed,
            ..TopDownParams::default()
        };
        let found = top_down::top_down_search(&residual.x, &params)
            .map_err(|e| anyhow::Error::new(e).context("top-down search"))?;
        top_set = top_down::extract_basis(&found);
        for v in &mut top_set.vectors {
            v.coords = linalg::sign_normalize(&bottom.frame * &v.coords);
        }
        std::fs::write(config.artifact(artifacts::TREE_TXT), found.render())
            .context("writing tree")?;
        written.push(artifacts::TREE_TXT.into());
        tree = Some(found);
    }
    let top_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let basis = identify::assemble_basis(&bottom.basis, &top_set, xhat)
        .map_err(|e| rank_deficit_error(e, &bottom, tree.as_ref()))?;
    let chi = identify::recover_chi(&basis.matrix(), &xhat.x);
    let seq = identify::encode_status(&chi, config.eps_encode);
    let encode_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let labels: Vec<String> = seq.row_labels.iter().map(ToString::to_string).collect();
    let codes = spread_codes(&seq, xhat, prepared.panel.timestamps.len());
    artifacts::write_codes_csv(
        &config.artifact(artifacts::CODES_CSV),
        &labels,
        &prepared.panel.timestamps,
        &codes,
    )?;
    written.push(artifacts::CODES_CSV.into());
    artifacts::write_basis_csv(
        &config.artifact(artifacts::BASIS_CSV),
        &prepared.panel.node_ids,
        &basis,
    )?;
    written.push(artifacts::BASIS_CSV.into());
    let write_seconds = start.elapsed().as_secs_f64();

    Ok(IdentifySummary {
        nodes_ingested: prepared.nodes_ingested,
        nodes_kept: prepared.panel.node_ids.len(),
        intervals: prepared.panel.timestamps.len(),
        retained: xhat.x.ncols(),
        pca_rank: xhat.retained_rank.unwrap_or(xhat.x.nrows()),
        rounds: bottom.rounds.len(),
        bottom_vectors: bottom.basis.len(),
        top_vectors: top_set.len(),
        top_down_ran: bottom.residual.is_some(),
        basis_rank: basis.len(),
        dropped_rows: seq.dropped_rows.iter().map(|r| format!("row {r}")).collect(),
        zero_columns: seq.zero_columns.len(),
        stage_seconds: vec![
            ("ingest", prepared.ingest_seconds),
            ("preprocess", prepared.preprocess_seconds),
            ("bottom-up", bottom_seconds),
            ("top-down", top_seconds),
            ("encode", encode_seconds),
            ("write", write_seconds),
        ],
        written,
    })
}

/// Expands codes over retained intervals to codes over every interval;
/// filtered intervals keep the all-zero code.
fn spread_codes(seq: &StatusCodeSeq, xhat: &CongestionMatrix, intervals: usize) -> DMatrix<u8> {
    let k = seq.codes.nrows();
    let mut codes = DMatrix::zeros(k, intervals);
    for (kept, &col) in xhat.interval_index.iter().enumerate() {
        for i in 0..k {
            codes[(i, col)] = seq.codes[(i, kept)];
        }
    }
    codes
}

fn rank_deficit_error(
    e: identify::IdentifyError,
    bottom: &BottomUpOutcome,
    tree: Option<&SearchTree>,
) -> CliError {
    match e {
        identify::IdentifyError::RankDeficit { .. } => {
            let residual = match &bottom.residual {
                Some(r) => format!("{} columns in {} dims", r.x.ncols(), r.x.nrows()),
                None => "empty".into(),
            };
            let leaves = match tree {
                Some(t) => format!("{} leaves", t.leaves().count()),
                None => "not engaged".into(),
            };
            CliError::RankDeficit(format!(
                "{e}; bottom-up rounds: {}, residual: {residual}, top-down: {leaves}",
                bottom.rounds.len(),
            ))
        }
        other => CliError::Other(anyhow::Error::new(other)),
    }
}

pub struct EvaluateSummary {
    pub report: IdentificationReport,
    /// Recovered row labels, matched truth label (or "-") and rate,
    /// one line per scored row pair.
    pub pairs: Vec<(String, String, f64)>,
    pub total_bits: usize,
    pub wrong_bits: usize,
    pub written: Vec<String>,
}

pub fn cmd_evaluate(config: &RunConfig) -> Result<EvaluateSummary, CliError> {
    config.validate()?;
    let truth_path = config.input("truth")?;
    let codes_path = config.artifact(artifacts::CODES_CSV);
    if !codes_path.exists() {
        return Err(anyhow!(
            "missing {}: run identify into the same --out first",
            codes_path.display()
        )
        .into());
    }
    let codes = artifacts::read_codes_csv(&codes_path)?;
    let truth = artifacts::read_truth_csv(truth_path)?;
    align_intervals(&codes, &truth)?;

    let (line_labels, truth_codes) = truth_status_codes(&truth);
    let matches = identify::match_rows_by_codes(&codes.codes, &truth_codes)
        .map_err(|e| anyhow::Error::new(e))?;
    let report = identify::miscode(&codes.codes, &truth_codes, &matches)
        .map_err(|e| anyhow::Error::new(e))?;

    let k = codes.codes.nrows().max(truth_codes.nrows());
    let total_bits = k * codes.codes.ncols();
    let wrong_bits = (report.total_miscode * total_bits as f64).round() as usize;

    let mut pairs = Vec::new();
    for row in &report.per_row {
        let left = match row.basis_row {
            Some(i) => codes.labels[i].clone(),
            None => "-".into(),
        };
        let right = match row.target {
            Some(t) => line_labels[t].clone(),
            None => "-".into(),
        };
        pairs.push((left, right, row.rate));
    }

    std::fs::create_dir_all(&config.out)
        .with_context(|| format!("creating {}", config.out.display()))?;
    let text = render_report(&report, &pairs, total_bits, wrong_bits);
    std::fs::write(config.artifact(artifacts::REPORT_TXT), text).context("writing report")?;
    artifacts::write_frequency_csv(&config.artifact(artifacts::FREQUENCY_CSV), &report.frequency)?;

    Ok(EvaluateSummary {
        report,
        pairs,
        total_bits,
        wrong_bits,
        written: vec![artifacts::REPORT_TXT.into(), artifacts::FREQUENCY_CSV.into()],
    })
}

/// Requires the code table and truth table to cover the same intervals,
/// listing the unmatched timestamps otherwise.
fn align_intervals(codes: &CodesTable, truth: &TruthTable) -> Result<(), CliError> {
    let truth_stamps: Vec<String> = truth
        .intervals
        .iter()
        .map(|&i| pipeline::interval_timestamp(i))
        .collect();
    if codes.timestamps == truth_stamps {
        return Ok(());
    }
    let mut unmatched: Vec<&str> = Vec::new();
    for stamp in &codes.timestamps {
        if !truth_stamps.contains(stamp) {
            unmatched.push(stamp);
        }
    }
    for stamp in &truth_stamps {
        if !codes.timestamps.contains(stamp) {
            unmatched.push(stamp);
        }
    }
    if unmatched.is_empty() {
        // Same sets, different order; the writers sort both, so this
        // points at a hand-edited file.
        return Err(anyhow!("codes and truth list the same intervals in different orders").into());
    }
    Err(anyhow!(
        "codes and truth cover different intervals; unmatched timestamps: {}",
        unmatched.join(", ")
    )
    .into())
}

/// True status codes of every line that was ever congested, with labels.
fn truth_status_codes(truth: &TruthTable) -> (Vec<String>, DMatrix<u8>) {
    let ever: Vec<usize> = (0..truth.line_ids.len())
        .filter(|&row| (0..truth.congested.ncols()).any(|t| truth.congested[(row, t)] != 0))
        .collect();
    let labels = ever.iter().map(|&row| format!("line{}", truth.line_ids[row])).collect();
    let codes = truth.congested.select_rows(ever.iter());
    (labels, codes)
}

fn render_report(
    report: &IdentificationReport,
    pairs: &[(String, String, f64)],
    total_bits: usize,
    wrong_bits: usize,
) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "total miscode: {:.5}% ({wrong_bits} of {total_bits} bits)",
        report.total_miscode * 100.0
    );
    let _ = writeln!(text, "\nrow        target     miscode");
    for (left, right, rate) in pairs {
        let _ = writeln!(text, "{left:<10} {right:<10} {:.5}%", rate * 100.0);
    }
    let ambiguous: Vec<String> = report
        .matches
        .iter()
        .filter(|m| m.ambiguous)
        .map(|m| format!("row {}", m.basis_row))
        .collect();
    if !ambiguous.is_empty() {
        let _ = writeln!(text, "\nambiguous matches: {}", ambiguous.join(", "));
    }
    let _ = writeln!(text, "\nstatus frequency (recovered codes):");
    let _ = writeln!(text, "code{:<12} count  share", "");
    for entry in &report.frequency {
        let code: String = entry.code.iter().map(|b| char::from(b'0' + b)).collect();
        let _ = writeln!(text, "{code:<16} {:<6} {:.4}%", entry.count, entry.share * 100.0);
    }
    text
}

pub struct ReportSummary {
    pub blocks_rows: usize,
    pub blocks_intervals: usize,
    pub affinity_rounds: usize,
    pub written: Vec<String>,
}

pub fn cmd_report(config: &RunConfig) -> Result<ReportSummary, CliError> {
    config.validate()?;
    let codes_path = config.artifact(artifacts::CODES_CSV);
    let matrix_path = config.artifact(artifacts::MATRIX_CSV);
    for required in [&codes_path, &matrix_path] {
        if !required.exists() {
            return Err(anyhow!(
                "missing {}: run identify into the same --out first",
                required.display()
            )
            .into());
        }
    }
    let codes = artifacts::read_codes_csv(&codes_path)?;
    let mut written = Vec::new();
    artifacts::write_blocks_csv(&config.artifact(artifacts::BLOCKS_CSV), &codes)?;
    written.push(artifacts::BLOCKS_CSV.into());

    // The affinity grids are recomputed instead of stored: the search is
    // deterministic for a fixed config, and identify should not pay the
    // snapshot memory for a report nobody may ask for.
    let prepared = prepare(config)?;
    let params = BottomUpParams {
        keep_affinity: true,
        ..bottom_up_params(config)
    };
    let outcome = bottom_up::bottom_up_search(&prepared.xhat, &params)
        .map_err(|e| anyhow::Error::new(e).context("bottom-up search"))?;
    for snap in &outcome.snapshots {
        let name = artifacts::affinity_csv_name(snap.round);
        artifacts::write_affinity_csv(&config.artifact(&name), snap)?;
        written.push(name);
    }

    Ok(ReportSummary {
        blocks_rows: codes.labels.len(),
        blocks_intervals: codes.timestamps.len(),
        affinity_rounds: outcome.snapshots.len(),
        written,
    })
}
