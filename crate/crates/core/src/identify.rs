//! Identification stage: assemble the recovered directions into a basis
//! matrix, recover per-interval coefficients by pseudoinverse, encode
//! boolean congestion statuses, and score them against ground truth.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::basis::{BasisSet, BasisVector};
use crate::linalg;
use crate::pipeline::CongestionMatrix;

/// Default relative encoding threshold: an entry is active when it
/// exceeds this fraction of its row's typical active magnitude.
pub const ENCODE_EPS_REL: f64 = 1e-3;

/// Entries below this fraction of the matrix's largest magnitude are
/// rounding residue, not activity, when locating each row's typical
/// magnitude.
const ZERO_FLOOR_REL: f64 = 1e-12;

/// Two basis vectors closer than this in absolute cosine count as one.
const DEDUP_COS_TOL: f64 = 1e-6;

/// Relative singular-value threshold for the rank comparison.
const RANK_TOL: f64 = 1e-8;

fn plural(n: usize) -> &'static str {
    if n == 1 { "" } else { "s" }
}

#[derive(Debug, Error)]
pub enum IdentifyError {
    #[error(
        "identification incomplete: {missing} basis vector{} missing (basis rank {basis_rank}, data rank {data_rank})",
        plural(*.missing)
    )]
    RankDeficit {
        missing: usize,
        basis_rank: usize,
        data_rank: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Label a status-code row carries: the recovered basis vector it came
/// from, or the network line it was matched to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowLabel {
    Basis(usize),
    Line(u32),
}

impl std::fmt::Display for RowLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RowLabel::Basis(i) => write!(f, "basis{i}"),
            RowLabel::Line(id) => write!(f, "line{id}"),
        }
    }
}

/// Boolean congestion statuses: one row per surviving basis vector, one
/// column per interval.
#[derive(Clone, Debug)]
pub struct StatusCodeSeq {
    pub codes: DMatrix<u8>,
    pub row_labels: Vec<RowLabel>,
    /// Coefficient-matrix row behind each code row.
    pub kept_rows: Vec<usize>,
    /// Coefficient rows with no entry above the rounding floor; they
    /// explain nothing and are dropped (callers should warn).
    pub dropped_rows: Vec<usize>,
    /// Intervals whose code column is all zero; congested intervals
    /// should never produce one (callers should warn).
    pub zero_columns: Vec<usize>,
    /// Per kept row, the magnitude an entry had to exceed.
    pub thresholds: Vec<f64>,
}

/// One recovered row matched to a reference target (line or truth row).
#[derive(Clone, Debug)]
pub struct RowMatch {
    pub basis_row: usize,
    /// Index into the reference's columns or rows; `None` when the
    /// reference ran out of targets.
    pub target: Option<usize>,
    /// Absolute cosine for direction matching, one minus the normalized
    /// Hamming distance for code matching; zero for unmatched rows.
    pub score: f64,
    /// True when another candidate scored exactly the same and the tie
    /// broke by index.
    pub ambiguous: bool,
}

/// Miscode rate of one aligned row pair, or of an unmatched row.
#[derive(Clone, Debug)]
pub struct RowMiscode {
    /// `None` for a truth row no recovered row was matched to.
    pub basis_row: Option<usize>,
    /// `None` for a recovered row without a matched truth row.
    pub target: Option<usize>,
    pub rate: f64,
}

/// One distinct status column and how often it occurs.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyEntry {
    pub code: Vec<u8>,
    pub count: usize,
    pub share: f64,
}

/// Evaluation summary: miscode rates, status frequencies, the matching
/// that aligned the rows, and stage timings filled in by the caller.
#[derive(Clone, Debug)]
pub struct IdentificationReport {
    pub total_miscode: f64,
    pub per_row: Vec<RowMiscode>,
    pub frequency: Vec<FrequencyEntry>,
    pub matches: Vec<RowMatch>,
    pub stage_seconds: Vec<(String, f64)>,
}

/// Merges the two searches' vectors into one basis over `x`'s frame,
/// dropping duplicates, and verifies the basis reaches the data's rank.
/// Both inputs must already be expressed in `x`'s coordinate frame; each
/// kept vector also gets its node-space image via the stored projection.
pub fn assemble_basis(
    bottom: &BasisSet,
    top: &BasisSet,
    x: &CongestionMatrix,
) -> Result<BasisSet, IdentifyError> {
    let dim = x.x.nrows();
    let mut set = BasisSet::default();
    for v in bottom.vectors.iter().chain(top.vectors.iter()) {
        if v.coords.len() != dim {
            return Err(IdentifyError::Shape(format!(
                "basis vector has {} coordinates, data frame has {dim}",
                v.coords.len()
            )));
        }
        let duplicate = set
            .vectors
            .iter()
            .any(|w| linalg::abs_cosine(&v.coords, &w.coords) > 1.0 - DEDUP_COS_TOL);
        if duplicate {
            continue;
        }
        set.vectors.push(BasisVector {
            coords: v.coords.clone(),
            provenance: v.provenance,
            node_space: Some(x.to_node_space(&v.coords)),
        });
    }

    let data_rank = if x.x.ncols() == 0 || dim == 0 {
        0
    } else {
        let svd = linalg::sorted_svd(&x.x);
        linalg::numerical_rank(&svd.singular_values, RANK_TOL)
    };
    let basis_rank = if set.is_empty() {
        0
    } else {
        let svd = linalg::sorted_svd(&set.matrix());
        linalg::numerical_rank(&svd.singular_values, RANK_TOL)
    };
    if basis_rank < data_rank {
        return Err(IdentifyError::RankDeficit {
            missing: data_rank - basis_rank,
            basis_rank,
            data_rank,
        });
    }
    Ok(set)
}

/// Coefficients of the data columns over the basis: the pseudoinverse of
/// `basis` applied to `x`. Exact reconstruction for columns in the span.
pub fn recover_chi(basis: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::pinv_solve(basis, x, 1e-12)
}

/// Thresholds coefficient magnitudes into boolean statuses.
///
/// Each row's threshold is `eps_rel` times the median of its magnitudes,
/// ignoring entries at rounding scale; a recovered direction's scale is
/// arbitrary, so only relative size is meaningful. Rows with nothing
/// above the rounding floor are dropped.
pub fn encode_status(chi: &DMatrix<f64>, eps_rel: f64) -> StatusCodeSeq {
    let (k, m) = chi.shape();
    let floor = if k == 0 || m == 0 { 0.0 } else { ZERO_FLOOR_REL * chi.amax() };
    let mut kept_rows = Vec::new();
    let mut dropped_rows = Vec::new();
    let mut thresholds = Vec::new();
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for j in 0..k {
        let mags: Vec<f64> = (0..m)
            .map(|t| chi[(j, t)].abs())
            .filter(|&v| v > floor)
            .collect();
        if mags.is_empty() {
            dropped_rows.push(j);
            continue;
        }
        let threshold = eps_rel * linalg::median(&mags);
        rows.push((0..m).map(|t| u8::from(chi[(j, t)].abs() > threshold)).collect());
        kept_rows.push(j);
        thresholds.push(threshold);
    }
    let codes = DMatrix::from_fn(rows.len(), m, |i, t| rows[i][t]);
    let zero_columns = (0..m)
        .filter(|&t| codes.column(t).iter().all(|&v| v == 0))
        .collect();
    StatusCodeSeq {
        codes,
        row_labels: kept_rows.iter().map(|&j| RowLabel::Basis(j)).collect(),
        kept_rows,
        dropped_rows,
        zero_columns,
        thresholds,
    }
}

/// Greedy one-to-one assignment over a similarity matrix: repeatedly
/// take the best remaining (row, target) pair. Exact score ties break
/// toward the lower target index, then the lower row, and are flagged.
fn greedy_match(scores: &DMatrix<f64>) -> Vec<RowMatch> {
    let (rows, targets) = scores.shape();
    let mut row_free = vec![true; rows];
    let mut target_free = vec![true; targets];
    let mut out: Vec<RowMatch> = (0..rows)
        .map(|i| RowMatch {
            basis_row: i,
            target: None,
            score: 0.0,
            ambiguous: false,
        })
        .collect();
    for _ in 0..rows.min(targets) {
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..rows {
            if !row_free[i] {
                continue;
            }
            for l in 0..targets {
                if target_free[l] && scores[(i, l)] > best_score {
                    best_score = scores[(i, l)];
                }
            }
        }
        // Lowest target wins the tie-break, then lowest row.
        let mut chosen = None;
        'pick: for l in 0..targets {
            if !target_free[l] {
                continue;
            }
            for i in 0..rows {
                if row_free[i] && scores[(i, l)] == best_score {
                    chosen = Some((i, l));
                    break 'pick;
                }
            }
        }
        let Some((i, l)) = chosen else { break };
        // Only a tied pair competing for the same row or target makes
        // the pick ambiguous; equal scores elsewhere are independent.
        let mut ambiguous = false;
        for i2 in 0..rows {
            if row_free[i2] && i2 != i && scores[(i2, l)] == best_score {
                ambiguous = true;
            }
        }
        for l2 in 0..targets {
            if target_free[l2] && l2 != l && scores[(i, l2)] == best_score {
                ambiguous = true;
            }
        }
        row_free[i] = false;
        target_free[l] = false;
        out[i] = RowMatch {
            basis_row: i,
            target: Some(l),
            score: best_score,
            ambiguous,
        };
    }
    out
}

/// Matches recovered directions to network lines by absolute cosine in
/// node space. `recovered` holds one column per recovered code row;
/// `line_directions` one column per candidate line, ordered by line id
/// so tie-breaks prefer the lower id.
pub fn match_rows_by_direction(
    recovered: &DMatrix<f64>,
    line_directions: &DMatrix<f64>,
) -> Vec<RowMatch> {
    assert_eq!(
        recovered.nrows(),
        line_directions.nrows(),
        "direction vectors live in different spaces"
    );
    let scores = DMatrix::from_fn(recovered.ncols(), line_directions.ncols(), |i, l| {
        linalg::abs_cosine(
            &recovered.column(i).into_owned(),
            &line_directions.column(l).into_owned(),
        )
    });
    greedy_match(&scores)
}

/// Matches recovered code rows to truth code rows by minimal Hamming
/// distance; the recorded score is one minus the normalized distance.
pub fn match_rows_by_codes(
    recovered: &DMatrix<u8>,
    truth: &DMatrix<u8>,
) -> Result<Vec<RowMatch>, IdentifyError> {
    if recovered.ncols() != truth.ncols() {
        return Err(IdentifyError::Shape(format!(
            "recovered codes cover {} intervals, truth covers {}",
            recovered.ncols(),
            truth.ncols()
        )));
    }
    let m = recovered.ncols();
    if m == 0 {
        return Err(IdentifyError::Shape("no intervals to match on".into()));
    }
    let scores = DMatrix::from_fn(recovered.nrows(), truth.nrows(), |i, l| {
        let wrong = (0..m)
            .filter(|&t| recovered[(i, t)] != truth[(l, t)])
            .count();
        1.0 - wrong as f64 / m as f64
    });
    Ok(greedy_match(&scores))
}

/// Scores recovered statuses against the truth under the given row
/// alignment. The total rate is the disagreement count over `k * M`
/// positions with `k = max(recovered rows, truth rows)`; rows on either
/// side that found no partner count as entirely wrong.
pub fn miscode(
    recovered: &DMatrix<u8>,
    truth: &DMatrix<u8>,
    matches: &[RowMatch],
) -> Result<IdentificationReport, IdentifyError> {
    if recovered.ncols() != truth.ncols() {
        return Err(IdentifyError::Shape(format!(
            "recovered codes cover {} intervals, truth covers {}",
            recovered.ncols(),
            truth.ncols()
        )));
    }
    let m = recovered.ncols();
    if m == 0 {
        return Err(IdentifyError::Shape("no intervals to score".into()));
    }
    if matches.len() != recovered.nrows() {
        return Err(IdentifyError::Shape(format!(
            "{} matches for {} recovered rows",
            matches.len(),
            recovered.nrows()
        )));
    }
    let k = recovered.nrows().max(truth.nrows());
    let mut truth_matched = vec![false; truth.nrows()];
    let mut wrong_total = 0usize;
    let mut per_row = Vec::new();
    for mm in matches {
        let i = mm.basis_row;
        match mm.target {
            Some(l) => {
                if l >= truth.nrows() || truth_matched[l] {
                    return Err(IdentifyError::Shape(format!(
                        "match targets truth row {l} twice or out of range"
                    )));
                }
                truth_matched[l] = true;
                let wrong = (0..m)
                    .filter(|&t| recovered[(i, t)] != truth[(l, t)])
                    .count();
                wrong_total += wrong;
                per_row.push(RowMiscode {
                    basis_row: Some(i),
                    target: Some(l),
                    rate: wrong as f64 / m as f64,
                });
            }
            None => {
                wrong_total += m;
                per_row.push(RowMiscode {
                    basis_row: Some(i),
                    target: None,
                    rate: 1.0,
                });
            }
        }
    }
    for (l, matched) in truth_matched.iter().enumerate() {
        if !matched {
            wrong_total += m;
            per_row.push(RowMiscode {
                basis_row: None,
                target: Some(l),
                rate: 1.0,
            });
        }
    }
    Ok(IdentificationReport {
        total_miscode: wrong_total as f64 / (k * m) as f64,
        per_row,
        frequency: status_frequency(recovered),
        matches: matches.to_vec(),
        stage_seconds: Vec::new(),
    })
}

/// Distinct status columns with counts and shares, most frequent first;
/// equal counts order lexicographically.
pub fn status_frequency(codes: &DMatrix<u8>) -> Vec<FrequencyEntry> {
    let m = codes.ncols();
    if m == 0 {
        return Vec::new();
    }
    let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    for t in 0..m {
        *counts.entry(codes.column(t).iter().copied().collect()).or_insert(0) += 1;
    }
    let mut entries: Vec<FrequencyEntry> = counts
        .into_iter()
        .map(|(code, count)| FrequencyEntry {
            code,
            count,
            share: count as f64 / m as f64,
        })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.code.cmp(&b.code)));
    entries
}

/// Boolean codes from a magnitude matrix: 1 where the absolute value
/// exceeds `tol`. Used to turn simulated shadow prices into truth codes.
pub fn codes_from_magnitudes(values: &DMatrix<f64>, tol: f64) -> DMatrix<u8> {
    values.map(|v| u8::from(v.abs() > tol))
}
