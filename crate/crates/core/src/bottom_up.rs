//! Bottom-up subspace search: find one-dimensional clusters by cosine
//! affinity and spectral clustering, harvest their directions as basis
//! vectors, project the data onto the orthogonal complement, and repeat.
//!
//! Each round works in a coordinate frame of shrinking dimension. The
//! search keeps a frame matrix mapping current coordinates back to the
//! frame of the input matrix, so harvested vectors are always reported in
//! the caller's coordinates.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::basis::{BasisSet, BasisVector, Provenance};
use crate::linalg;
use crate::pipeline::CongestionMatrix;
use crate::seed;

/// Denominator floor for the relative eigengap, guarding the exact-zero
/// eigenvalues a disconnected graph produces.
const EIGENGAP_DENOM_FLOOR: f64 = 1e-12;

/// Iteration cap for one Lloyd refinement inside k-means.
const KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Error)]
pub enum BottomUpError {
    #[error("column {0} has zero norm; congestion filtering should have removed it")]
    ZeroColumn(usize),
}

/// Pairwise absolute-cosine similarity of data columns, optionally pushed
/// through the cutoff kernel into a boolean graph.
#[derive(Clone, Debug)]
pub struct AffinityMatrix {
    /// Symmetric with unit diagonal; entries in [0, 1]. After the cutoff
    /// kernel every entry is exactly 0 or 1.
    pub a: DMatrix<f64>,
    /// True once the cutoff kernel has been applied.
    pub binary: bool,
}

/// Output of one spectral clustering pass.
#[derive(Clone, Debug)]
pub struct ClusterResult {
    pub k: usize,
    /// Cluster index in `0..k` per column.
    pub labels: Vec<usize>,
    /// Relative eigengap table: `(i, (gamma_{i+1} - gamma_i) / gamma_i)`
    /// for candidate counts `i >= 2`, empty when the component shortcut
    /// or a tiny input decided `k` directly.
    pub eigengaps: Vec<(usize, f64)>,
}

/// Per-round record of what the search saw and did.
#[derive(Clone, Debug)]
pub struct RoundLog {
    pub round: usize,
    pub k: usize,
    pub eigengaps: Vec<(usize, f64)>,
    pub cluster_sizes: Vec<usize>,
    pub cluster_ranks: Vec<usize>,
    pub harvested: usize,
    /// Columns fully explained by the harvested vectors and removed.
    pub explained_columns: usize,
    pub residual_columns: usize,
    pub residual_dim: usize,
}

impl fmt::Display for RoundLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "round {}: K={} sizes={:?} ranks={:?} harvested={} explained={} residual={} columns in {} dims",
            self.round,
            self.k,
            self.cluster_sizes,
            self.cluster_ranks,
            self.harvested,
            self.explained_columns,
            self.residual_columns,
            self.residual_dim,
        )?;
        if !self.eigengaps.is_empty() {
            write!(f, "  eigengaps:")?;
            for (i, xi) in self.eigengaps.iter().take(10) {
                write!(f, " {i}:{xi:.4e}")?;
            }
            if self.eigengaps.len() > 10 {
                write!(f, " ... ({} more)", self.eigengaps.len() - 10)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BottomUpParams {
    /// Cutoff kernel width: affinities above `1 - eps` become edges.
    pub eps: f64,
    /// A cluster counts as one-dimensional when its second singular value
    /// is below `rank_tol` times its first.
    pub rank_tol: f64,
    /// Columns whose post-projection norm falls below `zero_tol_rel`
    /// times the median input column norm are treated as explained.
    pub zero_tol_rel: f64,
    pub max_rounds: usize,
    /// Smallest cluster allowed to contribute a basis vector.
    pub min_cluster: usize,
    /// k-means restarts per clustering pass.
    pub restarts: usize,
    pub seed: u64,
    /// Retain each round's raw affinity matrix in the outcome. Off by
    /// default; a snapshot costs O(columns^2) memory per round.
    pub keep_affinity: bool,
}

impl Default for BottomUpParams {
    fn default() -> Self {
        BottomUpParams {
            eps: 0.005,
            rank_tol: 1e-6,
            zero_tol_rel: 1e-6,
            max_rounds: 16,
            min_cluster: 2,
            restarts: 10,
            seed: 0,
            keep_affinity: false,
        }
    }
}

/// Raw affinity of one round's working matrix, kept for inspection when
/// [`BottomUpParams::keep_affinity`] is set.
#[derive(Clone, Debug)]
pub struct RoundSnapshot {
    pub round: usize,
    /// Original interval position of each working column this round.
    pub column_index: Vec<usize>,
    /// Absolute-cosine affinities before the cutoff kernel.
    pub affinity: DMatrix<f64>,
}

/// Result of the full search.
#[derive(Clone, Debug)]
pub struct BottomUpOutcome {
    /// Harvested directions, in the coordinate frame of the input matrix.
    pub basis: BasisSet,
    /// Unexplained columns re-expressed in a reduced frame, or `None`
    /// when everything was explained.
    pub residual: Option<CongestionMatrix>,
    /// Maps residual coordinates back to the input frame; square identity
    /// when no projection happened.
    pub frame: DMatrix<f64>,
    pub rounds: Vec<RoundLog>,
    /// Per-round affinity matrices; empty unless requested.
    pub snapshots: Vec<RoundSnapshot>,
}

/// Absolute-cosine affinity of the columns of `x`.
pub fn affinity(x: &DMatrix<f64>) -> Result<AffinityMatrix, BottomUpError> {
    let m = x.ncols();
    let mut unit = x.clone();
    for j in 0..m {
        let norm = unit.column(j).norm();
        if norm <= f64::MIN_POSITIVE {
            return Err(BottomUpError::ZeroColumn(j));
        }
        unit.column_mut(j).scale_mut(1.0 / norm);
    }
    let mut a = unit.transpose() * &unit;
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] = a[(i, j)].abs().clamp(0.0, 1.0);
        }
        a[(i, i)] = 1.0;
    }
    Ok(AffinityMatrix { a, binary: false })
}

/// Elementwise cutoff kernel: entries above `1 - eps` become 1, the rest
/// 0. The diagonal survives by construction.
pub fn cutoff(aff: &AffinityMatrix, eps: f64) -> AffinityMatrix {
    assert!(eps > 0.0 && eps < 1.0, "cutoff width must be in (0, 1)");
    let a = aff.a.map(|v| if v > 1.0 - eps { 1.0 } else { 0.0 });
    AffinityMatrix { a, binary: true }
}

/// Connected components of a binary affinity graph, labeled in order of
/// first appearance. Returns per-column labels and the component count.
fn components(a: &DMatrix<f64>) -> (Vec<usize>, usize) {
    let m = a.nrows();
    let mut labels = vec![usize::MAX; m];
    let mut count = 0;
    for start in 0..m {
        if labels[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        labels[start] = count;
        while let Some(v) = stack.pop() {
            for w in 0..m {
                if a[(v, w)] > 0.0 && labels[w] == usize::MAX {
                    labels[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    (labels, count)
}

/// True when every component of the binary graph is a complete clique,
/// so the component labeling is already an exact clustering.
fn components_are_exact(a: &DMatrix<f64>, labels: &[usize]) -> bool {
    let m = a.nrows();
    for i in 0..m {
        for j in i + 1..m {
            if labels[i] == labels[j] && a[(i, j)] == 0.0 {
                return false;
            }
        }
    }
    true
}

/// Spectral clustering of a cutoff affinity graph.
///
/// When the graph's connected components are exact cliques they are the
/// answer and the spectral machinery is skipped. Otherwise the cluster
/// count maximizes the relative eigengap of the normalized Laplacian
/// spectrum over candidate counts `i >= 2`, and labels come from k-means
/// (farthest-point seeding, best of `restarts` runs) on the spectral
/// embedding.
pub fn spectral_cluster<R: Rng>(
    aff: &AffinityMatrix,
    restarts: usize,
    rng: &mut R,
) -> ClusterResult {
    assert!(aff.binary, "spectral clustering expects a cutoff graph");
    let m = aff.a.nrows();
    let (comp_labels, comp_count) = components(&aff.a);
    if components_are_exact(&aff.a, &comp_labels) || m < 3 {
        return ClusterResult {
            k: comp_count,
            labels: comp_labels,
            eigengaps: Vec::new(),
        };
    }

    // Normalized Laplacian; degrees are >= 1 thanks to the diagonal.
    let degrees: Vec<f64> = (0..m).map(|i| aff.a.row(i).sum()).collect();
    let mut lap = DMatrix::from_fn(m, m, |i, j| {
        -aff.a[(i, j)] / (degrees[i] * degrees[j]).sqrt()
    });
    for i in 0..m {
        lap[(i, i)] += 1.0;
    }
    let eig = linalg::sorted_symmetric_eigen(&lap);

    // Relative eigengap over 1-based candidate counts i >= 2.
    let mut eigengaps = Vec::new();
    let mut best = (comp_count.max(2), f64::NEG_INFINITY);
    for i in 2..m {
        let gamma_i = eig.values[i - 1].max(EIGENGAP_DENOM_FLOOR);
        let xi = (eig.values[i] - eig.values[i - 1]) / gamma_i;
        eigengaps.push((i, xi));
        if xi > best.1 {
            best = (i, xi);
        }
    }
    let k = best.0;

    // Spectral embedding: rows of the first k eigenvectors, renormalized.
    let mut points = eig.vectors.columns(0, k).into_owned();
    for mut row in points.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row.scale_mut(1.0 / norm);
        }
    }

    let mut best_labels = Vec::new();
    let mut best_inertia = f64::INFINITY;
    for _ in 0..restarts.max(1) {
        let (labels, inertia) = kmeans(&points, k, rng);
        if inertia < best_inertia - 1e-12 {
            best_inertia = inertia;
            best_labels = labels;
        }
    }
    ClusterResult {
        k,
        labels: best_labels,
        eigengaps,
    }
}

/// One k-means run over the rows of `points` with farthest-point
/// initialization. Returns labels and inertia.
fn kmeans<R: Rng>(points: &DMatrix<f64>, k: usize, rng: &mut R) -> (Vec<usize>, f64) {
    let m = points.nrows();
    let dim = points.ncols();
    let row = |i: usize| points.row(i).transpose();

    // Farthest-point seeding from a random first center.
    let mut center_idx = vec![rng.gen_range(0..m)];
    while center_idx.len() < k {
        let mut far = (0, f64::NEG_INFINITY);
        for i in 0..m {
            let d = center_idx
                .iter()
                .map(|&c| (row(i) - row(c)).norm_squared())
                .fold(f64::INFINITY, f64::min);
            if d > far.1 {
                far = (i, d);
            }
        }
        center_idx.push(far.0);
    }
    let mut centers: Vec<DVector<f64>> = center_idx.iter().map(|&i| row(i)).collect();

    let mut labels = vec![0usize; m];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for i in 0..m {
            let mut best = (0usize, f64::INFINITY);
            for (c, center) in centers.iter().enumerate() {
                let d = (row(i) - center).norm_squared();
                if d < best.1 - 1e-15 {
                    best = (c, d);
                }
            }
            if labels[i] != best.0 {
                labels[i] = best.0;
                changed = true;
            }
        }
        // Rebuild centers; an emptied cluster seizes the worst-fit point.
        let mut counts = vec![0usize; k];
        let mut sums = vec![DVector::zeros(dim); k];
        for i in 0..m {
            counts[labels[i]] += 1;
            sums[labels[i]] += row(i);
        }
        for c in 0..k {
            if counts[c] == 0 {
                let mut worst = (0, f64::NEG_INFINITY);
                for i in 0..m {
                    let d = (row(i) - &centers[labels[i]]).norm_squared();
                    if d > worst.1 {
                        worst = (i, d);
                    }
                }
                counts[labels[worst.0]] -= 1;
                sums[labels[worst.0]] -= row(worst.0);
                labels[worst.0] = c;
                counts[c] = 1;
                sums[c] = row(worst.0);
                changed = true;
            }
        }
        for c in 0..k {
            centers[c] = &sums[c] / counts[c] as f64;
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..m).map(|i| (row(i) - &centers[labels[i]]).norm_squared()).sum();
    (labels, inertia)
}

/// What one round harvested.
#[derive(Clone, Debug)]
pub struct HarvestResult {
    /// Unit, sign-normalized dominant directions of the rank-1 clusters.
    pub vectors: Vec<DVector<f64>>,
    /// Numerical rank per cluster (singular values above `rank_tol`
    /// relative to the largest).
    pub cluster_ranks: Vec<usize>,
    /// Columns of clusters that were not harvested.
    pub residual_cols: Vec<usize>,
}

/// Harvests the dominant direction of every cluster that is numerically
/// rank-1 and at least `min_cluster` columns strong.
pub fn harvest_rank1(
    x: &DMatrix<f64>,
    clusters: &ClusterResult,
    rank_tol: f64,
    min_cluster: usize,
) -> HarvestResult {
    let mut vectors = Vec::new();
    let mut cluster_ranks = vec![0; clusters.k];
    let mut residual_cols = Vec::new();
    for c in 0..clusters.k {
        let cols: Vec<usize> = (0..x.ncols()).filter(|&j| clusters.labels[j] == c).collect();
        if cols.is_empty() {
            continue;
        }
        let sub = x.select_columns(cols.iter());
        let svd = linalg::sorted_svd(&sub);
        let rank = linalg::numerical_rank(&svd.singular_values, rank_tol);
        cluster_ranks[c] = rank;
        if rank == 1 && cols.len() >= min_cluster {
            vectors.push(linalg::sign_normalize(svd.u.column(0).into_owned()));
        } else {
            residual_cols.extend(cols);
        }
    }
    residual_cols.sort_unstable();
    HarvestResult {
        vectors,
        cluster_ranks,
        residual_cols,
    }
}

/// Projects the data onto the orthogonal complement of the harvested
/// directions, drops columns that became (numerically) zero, and
/// re-expresses the survivors in a frame of reduced dimension.
///
/// Returns the reduced matrix and the complement frame `Q`, whose columns
/// map reduced coordinates back to the input frame.
pub fn project_complement(
    cm: &CongestionMatrix,
    harvested: &[DVector<f64>],
    zero_tol: f64,
) -> (CongestionMatrix, DMatrix<f64>) {
    assert!(!harvested.is_empty(), "projection needs at least one direction");
    let dim = cm.x.nrows();
    let b = DMatrix::from_fn(dim, harvested.len(), |i, j| harvested[j][i]);
    let q_b = linalg::column_span_basis(&b, 1e-12);
    let projected = &cm.x - &q_b * (q_b.transpose() * &cm.x);

    let mut keep = Vec::new();
    for j in 0..projected.ncols() {
        if projected.column(j).norm() > zero_tol {
            keep.push(j);
        }
    }
    let q_c = linalg::complement_basis(&q_b);
    let x = q_c.transpose() * projected.select_columns(keep.iter());
    let projection = match &cm.projection {
        Some(p) => Some(q_c.transpose() * p),
        None => Some(q_c.transpose().into_owned()),
    };
    let reduced = CongestionMatrix {
        x,
        node_ids: cm.node_ids.clone(),
        interval_index: keep.iter().map(|&j| cm.interval_index[j]).collect(),
        timestamps: keep.iter().map(|&j| cm.timestamps[j].clone()).collect(),
        dropped: cm.dropped.clone(),
        projection,
        retained_rank: cm.retained_rank,
    };
    (reduced, q_c)
}

/// Runs the full bottom-up search.
///
/// Rounds continue until a round harvests nothing (the data left is not
/// explainable by one-dimensional clusters, including the K=1 case), the
/// residual empties, or `max_rounds` is hit. Harvested vectors are
/// returned in the frame of the input matrix.
pub fn bottom_up_search(
    x0: &CongestionMatrix,
    params: &BottomUpParams,
) -> Result<BottomUpOutcome, BottomUpError> {
    let k0 = x0.x.nrows();
    let col_norms: Vec<f64> = (0..x0.x.ncols()).map(|j| x0.x.column(j).norm()).collect();
    let zero_tol = params.zero_tol_rel * linalg::median(&col_norms);

    let mut working = x0.clone();
    let mut frame = DMatrix::identity(k0, k0);
    let mut basis = BasisSet::default();
    let mut rounds = Vec::new();
    let mut snapshots = Vec::new();

    for round in 1..=params.max_rounds {
        if working.x.ncols() == 0 || working.x.nrows() == 0 {
            return Ok(BottomUpOutcome {
                basis,
                residual: None,
                frame,
                rounds,
                snapshots,
            });
        }
        let aff = affinity(&working.x)?;
        if params.keep_affinity {
            snapshots.push(RoundSnapshot {
                round,
                column_index: working.interval_index.clone(),
                affinity: aff.a.clone(),
            });
        }
        let cut = cutoff(&aff, params.eps);
        let mut rng = seed::indexed_rng(params.seed, seed::stream::KMEANS, round as u64);
        let clusters = spectral_cluster(&cut, params.restarts, &mut rng);
        let harvest = harvest_rank1(&working.x, &clusters, params.rank_tol, params.min_cluster);
        let cluster_sizes: Vec<usize> = (0..clusters.k)
            .map(|c| clusters.labels.iter().filter(|&&l| l == c).count())
            .collect();

        if harvest.vectors.is_empty() {
            // Nothing harvested leaves the matrix unchanged; a further
            // round would repeat this one exactly.
            rounds.push(RoundLog {
                round,
                k: clusters.k,
                eigengaps: clusters.eigengaps,
                cluster_sizes,
                cluster_ranks: harvest.cluster_ranks,
                harvested: 0,
                explained_columns: 0,
                residual_columns: working.x.ncols(),
                residual_dim: working.x.nrows(),
            });
            return Ok(BottomUpOutcome {
                basis,
                residual: Some(working),
                frame,
                rounds,
                snapshots,
            });
        }

        for v in &harvest.vectors {
            basis.vectors.push(BasisVector {
                coords: linalg::sign_normalize(&frame * v),
                provenance: Provenance::BottomUpRound(round),
                node_space: None,
            });
        }
        let before_cols = working.x.ncols();
        let (reduced, q_c) = project_complement(&working, &harvest.vectors, zero_tol);
        frame = &frame * &q_c;
        rounds.push(RoundLog {
            round,
            k: clusters.k,
            eigengaps: clusters.eigengaps,
            cluster_sizes,
            cluster_ranks: harvest.cluster_ranks,
            harvested: harvest.vectors.len(),
            explained_columns: before_cols - reduced.x.ncols(),
            residual_columns: reduced.x.ncols(),
            residual_dim: reduced.x.nrows(),
        });
        working = reduced;
    }

    let residual = if working.x.ncols() == 0 || working.x.nrows() == 0 {
        None
    } else {
        Some(working)
    };
    Ok(BottomUpOutcome {
        basis,
        residual,
        frame,
        rounds,
        snapshots,
    })
}
