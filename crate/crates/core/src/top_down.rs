//! Top-down subspace search: recursively split the data with fitted
//! hyperplanes. Columns on the hyperplane drop into a child of one lower
//! dimension, the rest keep the ambient dimension, and splitting stops
//! when no hyperplane holds enough columns. Leaves then contribute basis
//! directions in order of increasing rank.
//!
//! Hyperplane normals come from an alternating L1 minimization seeded at
//! the least singular vector, with randomized column sampling as the
//! fallback when that descent lands somewhere unsupported.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::basis::{BasisSet, BasisVector, Provenance};
use crate::linalg;
use crate::lp::{self, LpError};
use crate::seed;

/// Redraw budget when a sampled column subset is rank-deficient.
const SAMPLE_REDRAW_LIMIT: usize = 100;

/// Residual failure probability the default trial count is sized for.
const SAMPLE_FAILURE_PROB: f64 = 1e-3;

/// Hard ceiling on sampling trials per node.
const SAMPLE_TRIAL_CAP: usize = 1_000_000;

/// Relative singular-value threshold for leaf and contribution ranks.
const RANK_TOL: f64 = 1e-6;

/// Two directions closer than this in absolute cosine count as one.
const DEDUP_COS_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TopDownError {
    #[error("hyperplane fit failed: {0}")]
    Fit(#[from] LpError),
}

#[derive(Clone, Debug)]
pub struct TopDownParams {
    /// Minimum inlier fraction: a hyperplane must hold strictly more
    /// than `p * M` of a node's `M` columns to split it.
    pub p: f64,
    /// A column is on the hyperplane when its normal component is at
    /// most `inlier_tol` times its norm.
    pub inlier_tol: f64,
    /// L1 descent stops when consecutive normals differ by less.
    pub conv_tol: f64,
    /// L1 descent iteration cap.
    pub max_iter: usize,
    /// Maximum tree depth; `None` means twice the root dimension.
    pub depth_limit: Option<usize>,
    /// Sampling trials per node; `None` sizes the count so a hyperplane
    /// at fraction `p` is missed with probability below 1e-3.
    pub n_trials: Option<usize>,
    pub seed: u64,
}

impl Default for TopDownParams {
    fn default() -> Self {
        TopDownParams {
            p: 0.05,
            inlier_tol: 1e-6,
            conv_tol: 1e-9,
            max_iter: 50,
            depth_limit: None,
            n_trials: None,
            seed: 0,
        }
    }
}

/// A fitted hyperplane accepted for a split.
#[derive(Clone, Debug)]
pub struct HyperplaneFit {
    /// Unit normal in the node's coordinates; the first entry of largest
    /// magnitude is positive.
    pub normal: DVector<f64>,
    /// Node-local indices of the columns on the hyperplane.
    pub inliers: Vec<usize>,
    /// L1 residual of the normal over the node's columns.
    pub objective: f64,
    /// L1 descent solves performed (zero when sampling produced the fit).
    pub iterations: usize,
    pub method: FitMethod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitMethod {
    L1Descent,
    RandomSample { trial: usize },
}

/// Why a node stopped splitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LeafReason {
    /// No more columns than dimensions, so any fit would be vacuous.
    TooFewColumns,
    DepthLimit,
    /// Neither descent nor sampling found a supported hyperplane.
    Exhausted,
}

#[derive(Clone, Debug)]
pub enum NodeOutcome {
    Split {
        fit: HyperplaneFit,
        inlier_child: usize,
        outlier_child: usize,
    },
    Leaf {
        /// Numerical rank of the node's columns.
        rank: usize,
        reason: LeafReason,
    },
}

#[derive(Clone, Debug)]
pub struct SearchNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Ambient dimension of this node's coordinates.
    pub dim: usize,
    /// Column positions into the matrix the search started from.
    pub columns: Vec<usize>,
    /// Node coordinates, `dim` x `columns.len()`.
    pub coords: DMatrix<f64>,
    /// Maps node coordinates back to the root frame, `root_dim` x `dim`.
    pub frame: DMatrix<f64>,
    pub outcome: NodeOutcome,
}

#[derive(Clone, Debug)]
pub struct SearchTree {
    /// Nodes in discovery order; index equals `SearchNode::id`.
    pub nodes: Vec<SearchNode>,
    pub root_dim: usize,
}

impl SearchTree {
    pub fn leaves(&self) -> impl Iterator<Item = &SearchNode> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.outcome, NodeOutcome::Leaf { .. }))
    }

    /// Text rendering of the tree, one line per node, children indented
    /// under their parent with the on-hyperplane child first.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if !self.nodes.is_empty() {
            self.render_node(0, &mut out);
        }
        out
    }

    fn render_node(&self, id: usize, out: &mut String) {
        let node = &self.nodes[id];
        let indent = "  ".repeat(node.depth);
        match &node.outcome {
            NodeOutcome::Split {
                fit,
                inlier_child,
                outlier_child,
            } => {
                let method = match fit.method {
                    FitMethod::L1Descent => "l1 descent".to_string(),
                    FitMethod::RandomSample { trial } => format!("sampling trial {trial}"),
                };
                writeln!(
                    out,
                    "{indent}node {} [{} cols, dim {}]: split by {method}, {} inliers, residual {:.3e}",
                    node.id,
                    node.columns.len(),
                    node.dim,
                    fit.inliers.len(),
                    fit.objective,
                )
                .expect("string write");
                self.render_node(*inlier_child, out);
                self.render_node(*outlier_child, out);
            }
            NodeOutcome::Leaf { rank, reason } => {
                let why = match reason {
                    LeafReason::TooFewColumns => "too few columns",
                    LeafReason::DepthLimit => "depth limit",
                    LeafReason::Exhausted => "no supported hyperplane",
                };
                writeln!(
                    out,
                    "{indent}node {} [{} cols, dim {}]: leaf rank {rank} ({why})",
                    node.id,
                    node.columns.len(),
                    node.dim,
                )
                .expect("string write");
            }
        }
    }
}

/// Fits a hyperplane normal by alternating L1 minimization.
///
/// Starting from the least left singular vector, each step minimizes the
/// L1 residual over the affine slice touching the previous normal, then
/// renormalizes. The objective never increases, and iteration stops when
/// consecutive normals agree to `conv_tol` or after `max_iter` solves.
pub fn l1_hyperplane_normal(
    x: &DMatrix<f64>,
    conv_tol: f64,
    max_iter: usize,
) -> Result<NormalFit, TopDownError> {
    let dim = x.nrows();
    assert!(dim >= 2, "fitting needs at least two dimensions");
    assert!(
        x.ncols() >= dim,
        "fitting needs at least as many columns as dimensions"
    );
    let svd = linalg::sorted_svd(x);
    let mut n_hat = svd.u.column(dim - 1).into_owned();
    let mut objective = (x.transpose() * &n_hat).abs().sum();
    let mut iterations = 0;
    for _ in 0..max_iter {
        let sol = lp::lad::min_l1_on_affine(x, &n_hat)?;
        // The previous normal is feasible and |m| >= 1 on the slice, so
        // the normalized objective cannot increase.
        let norm = sol.m.norm();
        let next = sol.m / norm;
        let next_obj = sol.objective / norm;
        debug_assert!(
            next_obj <= objective + 1e-10 * objective.max(1.0),
            "L1 objective increased: {objective} -> {next_obj}"
        );
        let step = (&next - &n_hat).norm();
        n_hat = next;
        objective = next_obj;
        iterations += 1;
        if step < conv_tol {
            break;
        }
    }
    Ok(NormalFit {
        normal: linalg::sign_normalize(n_hat),
        objective,
        iterations,
    })
}

/// Output of the L1 descent, before any support check.
#[derive(Clone, Debug)]
pub struct NormalFit {
    pub normal: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Counts the columns lying on the hyperplane through the origin with
/// the given normal, and says whether they exceed the fraction `p` of
/// all columns strictly. Exactly `p * M` inliers is a failure.
pub fn check_hyperplane(
    x: &DMatrix<f64>,
    normal: &DVector<f64>,
    inlier_tol: f64,
    p: f64,
) -> (bool, Vec<usize>) {
    let mut inliers = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j);
        if col.dot(normal).abs() <= inlier_tol * col.norm() {
            inliers.push(j);
        }
    }
    let pass = (inliers.len() as f64) > p * (x.ncols() as f64);
    (pass, inliers)
}

/// Draws `dim - 1` distinct columns and returns the unit normal of their
/// span, redrawing when the subset is rank-deficient. `None` after the
/// redraw budget means the generator kept hitting degenerate subsets.
pub fn sample_candidate_normal<R: Rng>(x: &DMatrix<f64>, rng: &mut R) -> Option<DVector<f64>> {
    let dim = x.nrows();
    let m = x.ncols();
    if m < dim - 1 || dim < 2 {
        return None;
    }
    for _ in 0..SAMPLE_REDRAW_LIMIT {
        let picks = rand::seq::index::sample(rng, m, dim - 1).into_vec();
        let sub = x.select_columns(picks.iter());
        let span = linalg::column_span_basis(&sub, 1e-12);
        if span.ncols() == dim - 1 {
            let comp = linalg::complement_basis(&span);
            return Some(comp.column(0).into_owned());
        }
    }
    None
}

/// Trial count that misses a hyperplane holding fraction `p` of the
/// columns with probability at most `SAMPLE_FAILURE_PROB`.
fn default_trials(p: f64, dim: usize) -> usize {
    let hit = p.powi(dim as i32 - 1);
    if hit >= 1.0 {
        return 1;
    }
    if hit <= 0.0 {
        return SAMPLE_TRIAL_CAP;
    }
    let n = (SAMPLE_FAILURE_PROB.ln() / (1.0 - hit).ln()).ceil();
    (n as usize).clamp(1, SAMPLE_TRIAL_CAP)
}

/// Randomized fallback fit: repeatedly spans a hyperplane on sampled
/// columns and returns the first one that is actually supported, meaning
/// it passes the fraction check and holds more columns than the ambient
/// dimension. Each trial draws from its own seeded stream, so results do
/// not depend on how other nodes consumed randomness.
pub fn random_sample_normal(
    x: &DMatrix<f64>,
    node_id: usize,
    params: &TopDownParams,
) -> Option<(HyperplaneFit, usize)> {
    let dim = x.nrows();
    let trials = params.n_trials.unwrap_or_else(|| default_trials(params.p, dim));
    for trial in 0..trials {
        let stream_index = ((node_id as u64) << 32) | trial as u64;
        let mut rng = seed::indexed_rng(params.seed, seed::stream::RANDOM_SAMPLE, stream_index);
        let Some(normal) = sample_candidate_normal(x, &mut rng) else {
            continue;
        };
        let (pass, inliers) = check_hyperplane(x, &normal, params.inlier_tol, params.p);
        if pass && inliers.len() > dim {
            let objective = (x.transpose() * &normal).abs().sum();
            let fit = HyperplaneFit {
                normal: linalg::sign_normalize(normal),
                inliers,
                objective,
                iterations: 0,
                method: FitMethod::RandomSample { trial },
            };
            return Some((fit, trial));
        }
    }
    None
}

/// Recursive hyperplane splitting over the columns of `x`.
///
/// A node splits when a fitted hyperplane passes the fraction check and
/// holds more columns than the node's dimension; the L1 descent normal
/// goes through one vertex of the residual polytope, which puts `dim - 1`
/// columns on it exactly, so without that extra support requirement
/// every thin node would split vacuously.
pub fn top_down_search(
    x: &DMatrix<f64>,
    params: &TopDownParams,
) -> Result<SearchTree, TopDownError> {
    let root_dim = x.nrows();
    let depth_limit = params.depth_limit.unwrap_or(2 * root_dim);
    let mut nodes = vec![SearchNode {
        id: 0,
        parent: None,
        depth: 0,
        dim: root_dim,
        columns: (0..x.ncols()).collect(),
        coords: x.clone(),
        frame: DMatrix::identity(root_dim, root_dim),
        // Placeholder until the node is processed.
        outcome: NodeOutcome::Leaf {
            rank: 0,
            reason: LeafReason::Exhausted,
        },
    }];

    let mut next = 0;
    while next < nodes.len() {
        let id = next;
        next += 1;
        let dim = nodes[id].dim;
        let m = nodes[id].columns.len();

        if m <= dim || dim < 2 {
            nodes[id].outcome = NodeOutcome::Leaf {
                rank: coords_rank(&nodes[id].coords),
                reason: LeafReason::TooFewColumns,
            };
            continue;
        }
        if nodes[id].depth >= depth_limit {
            nodes[id].outcome = NodeOutcome::Leaf {
                rank: coords_rank(&nodes[id].coords),
                reason: LeafReason::DepthLimit,
            };
            continue;
        }

        let descent = l1_hyperplane_normal(&nodes[id].coords, params.conv_tol, params.max_iter)?;
        let (pass, inliers) =
            check_hyperplane(&nodes[id].coords, &descent.normal, params.inlier_tol, params.p);
        let fit = if pass && inliers.len() > dim {
            Some(HyperplaneFit {
                normal: descent.normal,
                inliers,
                objective: descent.objective,
                iterations: descent.iterations,
                method: FitMethod::L1Descent,
            })
        } else {
            random_sample_normal(&nodes[id].coords, id, params).map(|(fit, _)| fit)
        };

        let Some(fit) = fit else {
            nodes[id].outcome = NodeOutcome::Leaf {
                rank: coords_rank(&nodes[id].coords),
                reason: LeafReason::Exhausted,
            };
            continue;
        };

        // On-hyperplane columns re-express in the hyperplane's frame and
        // lose a dimension; the rest keep the node's coordinates.
        let normal_mat = DMatrix::from_column_slice(dim, 1, fit.normal.as_slice());
        let hyper_frame = linalg::complement_basis(&normal_mat);
        let in_set: Vec<usize> = fit.inliers.clone();
        let out_set: Vec<usize> = (0..m).filter(|j| !in_set.contains(j)).collect();

        let in_cols: Vec<usize> = in_set.iter().map(|&j| nodes[id].columns[j]).collect();
        let out_cols: Vec<usize> = out_set.iter().map(|&j| nodes[id].columns[j]).collect();
        let in_coords = hyper_frame.transpose() * nodes[id].coords.select_columns(in_set.iter());
        let out_coords = nodes[id].coords.select_columns(out_set.iter());
        let in_frame = &nodes[id].frame * &hyper_frame;
        let out_frame = nodes[id].frame.clone();
        let depth = nodes[id].depth;

        let inlier_child = nodes.len();
        nodes.push(SearchNode {
            id: inlier_child,
            parent: Some(id),
            depth: depth + 1,
            dim: dim - 1,
            columns: in_cols,
            coords: in_coords,
            frame: in_frame,
            outcome: NodeOutcome::Leaf {
                rank: 0,
                reason: LeafReason::Exhausted,
            },
        });
        let outlier_child = nodes.len();
        nodes.push(SearchNode {
            id: outlier_child,
            parent: Some(id),
            depth: depth + 1,
            dim,
            columns: out_cols,
            coords: out_coords,
            frame: out_frame,
            outcome: NodeOutcome::Leaf {
                rank: 0,
                reason: LeafReason::Exhausted,
            },
        });
        nodes[id].outcome = NodeOutcome::Split {
            fit,
            inlier_child,
            outlier_child,
        };
    }

    Ok(SearchTree { nodes, root_dim })
}

fn coords_rank(coords: &DMatrix<f64>) -> usize {
    if coords.ncols() == 0 || coords.nrows() == 0 {
        return 0;
    }
    let svd = linalg::sorted_svd(coords);
    linalg::numerical_rank(&svd.singular_values, RANK_TOL)
}

/// Extracts basis directions from the tree's leaves.
///
/// Leaves are visited by increasing rank, then decreasing size, then
/// discovery order. Each leaf's columns map to the root frame, project
/// off the span collected so far, and contribute as many left singular
/// directions as the projection has rank, so early low-rank leaves pin
/// down shared directions and later leaves add only what is new.
pub fn extract_basis(tree: &SearchTree) -> BasisSet {
    let mut leaves: Vec<&SearchNode> = tree
        .leaves()
        .filter(|n| !n.columns.is_empty())
        .collect();
    leaves.sort_by(|a, b| {
        let rank = |n: &SearchNode| match n.outcome {
            NodeOutcome::Leaf { rank, .. } => rank,
            NodeOutcome::Split { .. } => unreachable!("leaves() returned a split node"),
        };
        rank(a)
            .cmp(&rank(b))
            .then(b.columns.len().cmp(&a.columns.len()))
            .then(a.id.cmp(&b.id))
    });

    let mut basis = BasisSet::default();
    let mut collected: Vec<DVector<f64>> = Vec::new();
    for leaf in leaves {
        let cols_root = &leaf.frame * &leaf.coords;
        let pre = linalg::sorted_svd(&cols_root);
        let scale = pre.singular_values[0];
        if scale <= f64::MIN_POSITIVE {
            continue;
        }
        let residual = if collected.is_empty() {
            cols_root
        } else {
            let span = DMatrix::from_fn(tree.root_dim, collected.len(), |i, j| collected[j][i]);
            let q = linalg::column_span_basis(&span, 1e-12);
            &cols_root - &q * (q.transpose() * &cols_root)
        };
        let svd = linalg::sorted_svd(&residual);
        // Rank against the pre-projection scale: a leaf fully inside the
        // collected span must contribute nothing, not its noise floor.
        let rank = svd
            .singular_values
            .iter()
            .take_while(|&&s| s > RANK_TOL * scale)
            .count();
        for r in 0..rank {
            let v = linalg::sign_normalize(svd.u.column(r).into_owned());
            let duplicate = collected
                .iter()
                .any(|w| linalg::abs_cosine(&v, w) > 1.0 - DEDUP_COS_TOL);
            if duplicate {
                continue;
            }
            collected.push(v.clone());
            basis.vectors.push(BasisVector {
                coords: v,
                provenance: Provenance::TopDownLeaf(leaf.id),
                node_space: None,
            });
        }
    }
    basis
}
