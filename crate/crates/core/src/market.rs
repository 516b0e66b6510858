//! DC optimal power flow with exact dual prices, LMP decomposition, and
//! noisy scenario generation.
//!
//! The dispatch problem minimizes total offer cost subject to system
//! balance, flow limits on capacity-rated lines, and generator limits.
//! Offer blocks expand to one variable each, tied to the generator output
//! by a linking equality. The lossy variant adds a free loss variable,
//! a linearized loss equation, and withdraws losses according to the
//! case's distribution vector.
//!
//! Duals follow the shadow-price convention of [`crate::lp`]: each dual is
//! the derivative of cost with respect to its constraint's right-hand
//! side. A line's signed multiplier is the sum of its two flow-limit
//! duals, negative when the forward limit binds.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::lp::{self, LpBuilder, LpError, Sense};
use crate::network::{NetworkCase, PtdfMatrix};
use crate::seed;

/// A line counts as congested when its signed multiplier exceeds this
/// magnitude in $/MWh.
pub const TRUE_STATUS_TOL: f64 = 1e-6;

/// Coefficients smaller than this are dropped from constraint rows.
const COEFF_DROP_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DispatchMode {
    Lossless,
    Lossy,
}

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("dispatch infeasible (residual {residual:.3e}) at: {}", rows.join(", "))]
    Infeasible { rows: Vec<String>, residual: f64 },
    #[error("dispatch solve failed: {0}")]
    Solver(LpError),
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{feasible} of {total} scenarios feasible; need at least half")]
    TooManyInfeasible { feasible: usize, total: usize },
    #[error(transparent)]
    Dispatch(DispatchError),
}

/// Optimal dispatch with its dual prices.
#[derive(Clone, Debug)]
pub struct DispatchSolution {
    /// Output per generator, MW, in case table order.
    pub p_g: Vec<f64>,
    /// Accepted quantity per offer block, MW, nested per generator.
    pub block_output: Vec<Vec<f64>>,
    /// Total offer cost, $/h.
    pub objective: f64,
    /// Balance dual: marginal cost of demand at the reference, $/MWh.
    pub lambda: f64,
    /// Loss-equation dual, $/MWh; only present in lossy mode.
    pub sigma: Option<f64>,
    /// Signed line multiplier per line, $/MWh: the sum of the forward and
    /// reverse limit duals, negative when the forward limit binds. Zero
    /// for lines without a capacity rating.
    pub mu: Vec<f64>,
    /// Multiplier of each generator's lower output limit, nonnegative.
    pub gamma_min: Vec<f64>,
    /// Multiplier of each generator's upper output limit, nonnegative.
    pub gamma_max: Vec<f64>,
    /// Line flows, MW, in case table order.
    pub flows: Vec<f64>,
    /// System losses, MW; zero in lossless mode.
    pub loss: f64,
    /// True when the optimal basis is degenerate, so dual prices may not
    /// be unique.
    pub degenerate: bool,
}

/// Locational marginal prices split into their defining parts.
#[derive(Clone, Debug)]
pub struct LmpComponents {
    /// Full price per bus, $/MWh.
    pub pi: DVector<f64>,
    /// Energy part: a constant vector.
    pub energy: DVector<f64>,
    /// Congestion part, zero when no line limit binds.
    pub congestion: DVector<f64>,
    /// Loss part, zero in lossless mode.
    pub loss: DVector<f64>,
}

pub fn solve_dcopf_lossless(
    case: &NetworkCase,
    ptdf: &PtdfMatrix,
) -> Result<DispatchSolution, DispatchError> {
    solve_dcopf(case, ptdf, DispatchMode::Lossless)
}

pub fn solve_dcopf_lossy(
    case: &NetworkCase,
    ptdf: &PtdfMatrix,
) -> Result<DispatchSolution, DispatchError> {
    solve_dcopf(case, ptdf, DispatchMode::Lossy)
}

pub fn solve_dcopf(
    case: &NetworkCase,
    ptdf: &PtdfMatrix,
    mode: DispatchMode,
) -> Result<DispatchSolution, DispatchError> {
    let n_b = case.buses.len();
    let n_l = case.lines.len();
    if ptdf.matrix.nrows() != n_l || ptdf.matrix.ncols() != n_b {
        return Err(DispatchError::Shape(format!(
            "shift-factor matrix is {}x{}, case has {} lines and {} buses",
            ptdf.matrix.nrows(),
            ptdf.matrix.ncols(),
            n_l,
            n_b
        )));
    }
    let idx = case.bus_index();
    let loads: Vec<f64> = case.buses.iter().map(|b| b.load).collect();
    let lossy = mode == DispatchMode::Lossy;
    let lf = case.loss_factors();
    let d = case.loss_distribution();

    let mut b = LpBuilder::new();
    let mut row_labels: Vec<String> = Vec::new();

    // Variables: P_g per generator, then its blocks; finally the loss.
    let mut var_pg = Vec::with_capacity(case.generators.len());
    let mut var_blocks = Vec::with_capacity(case.generators.len());
    for gen in &case.generators {
        var_pg.push(b.add_var(0.0, gen.pmin, gen.pmax));
        let vars: Vec<usize> = gen
            .blocks
            .iter()
            .map(|blk| b.add_var(blk.price, 0.0, blk.quantity))
            .collect();
        var_blocks.push(vars);
    }
    let var_loss = lossy.then(|| b.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY));

    // Balance: sum of outputs (minus losses) covers total demand.
    let total_load: f64 = loads.iter().sum();
    let mut balance: Vec<(usize, f64)> = var_pg.iter().map(|&v| (v, 1.0)).collect();
    if let Some(vl) = var_loss {
        balance.push((vl, -1.0));
    }
    let r_balance = b.add_row(Sense::Eq, total_load, &balance);
    row_labels.push("system balance".into());

    // Loss equation: l - LF . (P_G - P_D) = l0.
    let r_loss = if lossy {
        let mut terms = vec![(var_loss.unwrap(), 1.0)];
        for (g, gen) in case.generators.iter().enumerate() {
            let c = lf[idx[&gen.bus]];
            if c.abs() > COEFF_DROP_TOL {
                terms.push((var_pg[g], -c));
            }
        }
        let rhs = case.loss.l0 - loads.iter().zip(&lf).map(|(pd, f)| pd * f).sum::<f64>();
        let r = b.add_row(Sense::Eq, rhs, &terms);
        row_labels.push("loss equation".into());
        Some(r)
    } else {
        None
    };

    // Link each generator to its blocks.
    for (g, gen) in case.generators.iter().enumerate() {
        let mut terms = vec![(var_pg[g], 1.0)];
        for &v in &var_blocks[g] {
            terms.push((v, -1.0));
        }
        b.add_row(Sense::Eq, 0.0, &terms);
        row_labels.push(format!("generator {} block link", gen.id));
    }

    // Flow limits for rated lines: T_j . (P_G - P_D - l d) within +-cap.
    let mut line_rows: Vec<Option<(usize, usize)>> = vec![None; n_l];
    for (j, line) in case.lines.iter().enumerate() {
        let Some(cap) = line.capacity else { continue };
        let mut terms: Vec<(usize, f64)> = Vec::new();
        for (g, gen) in case.generators.iter().enumerate() {
            let c = ptdf.matrix[(j, idx[&gen.bus])];
            if c.abs() > COEFF_DROP_TOL {
                terms.push((var_pg[g], c));
            }
        }
        let t_dot_d: f64 = (0..n_b).map(|n| ptdf.matrix[(j, n)] * d[n]).sum();
        if let Some(vl) = var_loss {
            if t_dot_d.abs() > COEFF_DROP_TOL {
                terms.push((vl, -t_dot_d));
            }
        }
        let t_dot_load: f64 = (0..n_b).map(|n| ptdf.matrix[(j, n)] * loads[n]).sum();
        let up = b.add_row(Sense::Le, cap + t_dot_load, &terms);
        row_labels.push(format!("line {} forward limit", line.id));
        let lo = b.add_row(Sense::Ge, -cap + t_dot_load, &terms);
        row_labels.push(format!("line {} reverse limit", line.id));
        line_rows[j] = Some((up, lo));
    }

    let sol = match lp::solve(&b.build()) {
        Ok(sol) => sol,
        Err(LpError::Infeasible { rows, residual }) => {
            return Err(DispatchError::Infeasible {
                rows: rows
                    .into_iter()
                    .map(|r| row_labels.get(r).cloned().unwrap_or_else(|| format!("row {r}")))
                    .collect(),
                residual,
            })
        }
        Err(e) => return Err(DispatchError::Solver(e)),
    };

    let p_g: Vec<f64> = var_pg.iter().map(|&v| sol.x[v]).collect();
    let block_output: Vec<Vec<f64>> = var_blocks
        .iter()
        .map(|vars| vars.iter().map(|&v| sol.x[v]).collect())
        .collect();
    let loss = var_loss.map(|v| sol.x[v]).unwrap_or(0.0);

    // Net injection per bus, then flows through the shift factors.
    let mut injection = vec![0.0; n_b];
    for (g, gen) in case.generators.iter().enumerate() {
        injection[idx[&gen.bus]] += p_g[g];
    }
    for n in 0..n_b {
        injection[n] -= loads[n] + d[n] * loss * if lossy { 1.0 } else { 0.0 };
    }
    let inj = DVector::from_row_slice(&injection);
    let flows_v = &ptdf.matrix * inj;

    let mu: Vec<f64> = line_rows
        .iter()
        .map(|rows| rows.map_or(0.0, |(up, lo)| sol.row_duals[up] + sol.row_duals[lo]))
        .collect();
    let gamma_min: Vec<f64> = var_pg.iter().map(|&v| sol.reduced_costs[v].max(0.0)).collect();
    let gamma_max: Vec<f64> = var_pg.iter().map(|&v| (-sol.reduced_costs[v]).max(0.0)).collect();

    Ok(DispatchSolution {
        p_g,
        block_output,
        objective: sol.objective,
        lambda: sol.row_duals[r_balance],
        sigma: r_loss.map(|r| sol.row_duals[r]),
        mu,
        gamma_min,
        gamma_max,
        flows: flows_v.iter().copied().collect(),
        loss,
        degenerate: sol.degenerate,
    })
}

/// Splits bus prices into energy, congestion, and loss parts.
///
/// Lossless: the energy part is the balance dual everywhere and the
/// congestion part is the shift-factor combination of line multipliers.
/// Lossy: the energy part is the loss-equation dual, the congestion part
/// is recentered by the loss-distribution weighting, and the loss part
/// scales the loss factors.
pub fn decompose_lmp(
    solution: &DispatchSolution,
    ptdf: &PtdfMatrix,
    case: &NetworkCase,
    mode: DispatchMode,
) -> Result<LmpComponents, DispatchError> {
    let n_b = case.buses.len();
    if solution.mu.len() != ptdf.matrix.nrows() || ptdf.matrix.ncols() != n_b {
        return Err(DispatchError::Shape(
            "solution and shift-factor shapes do not match the case".into(),
        ));
    }
    let mu = DVector::from_row_slice(&solution.mu);
    let t_mu = ptdf.matrix.transpose() * &mu;
    let ones = DVector::from_element(n_b, 1.0);
    let (energy, congestion, loss) = match mode {
        DispatchMode::Lossless => (
            &ones * solution.lambda,
            t_mu,
            DVector::zeros(n_b),
        ),
        DispatchMode::Lossy => {
            let sigma = solution.sigma.ok_or_else(|| {
                DispatchError::Shape("lossy decomposition needs a loss dual".into())
            })?;
            let d = DVector::from_row_slice(&case.loss_distribution());
            let lf = DVector::from_row_slice(&case.loss_factors());
            let d_t_mu = d.dot(&t_mu);
            (&ones * sigma, &t_mu - &ones * d_t_mu, -lf * sigma)
        }
    };
    let pi = &energy + &congestion + &loss;
    Ok(LmpComponents {
        pi,
        energy,
        congestion,
        loss,
    })
}

/// One simulated market interval with its ground truth.
#[derive(Clone, Debug)]
pub struct ScenarioRecord {
    /// Interval index in the generated sequence (gaps mark skips).
    pub interval: usize,
    /// The perturbed case this interval cleared against.
    pub case: NetworkCase,
    pub solution: DispatchSolution,
    pub components: LmpComponents,
    /// Per line: whether its multiplier exceeds [`TRUE_STATUS_TOL`].
    pub true_status: Vec<bool>,
}

#[derive(Clone, Debug)]
pub struct ScenarioSet {
    pub records: Vec<ScenarioRecord>,
    /// Interval indices dropped as infeasible.
    pub skipped: Vec<usize>,
}

/// Clears `m` market intervals under independent multiplicative Gaussian
/// noise on every load and every block-offer price.
///
/// Each interval draws from its own seeded stream, so output is
/// reproducible for a given seed regardless of how many intervals run.
/// Within an interval the draw order is: bus loads in table order, then
/// block prices in generator and block order. Infeasible intervals are
/// skipped and recorded; more than half infeasible is an error.
pub fn generate_scenarios(
    case: &NetworkCase,
    ptdf: &PtdfMatrix,
    mode: DispatchMode,
    m: usize,
    noise_rel_std: f64,
    seed: u64,
) -> Result<ScenarioSet, ScenarioError> {
    let mut records = Vec::with_capacity(m);
    let mut skipped = Vec::new();
    for interval in 0..m {
        let mut rng = seed::indexed_rng(seed, seed::stream::SCENARIO, interval as u64);
        let mut perturbed = case.clone();
        for bus in &mut perturbed.buses {
            let z: f64 = rng.sample(StandardNormal);
            bus.load *= 1.0 + noise_rel_std * z;
        }
        for gen in &mut perturbed.generators {
            for block in &mut gen.blocks {
                let z: f64 = rng.sample(StandardNormal);
                block.price *= 1.0 + noise_rel_std * z;
            }
        }
        let solution = match solve_dcopf(&perturbed, ptdf, mode) {
            Ok(s) => s,
            Err(DispatchError::Infeasible { .. }) => {
                skipped.push(interval);
                continue;
            }
            Err(e) => return Err(ScenarioError::Dispatch(e)),
        };
        let components = decompose_lmp(&solution, ptdf, &perturbed, mode)
            .map_err(ScenarioError::Dispatch)?;
        let true_status = solution.mu.iter().map(|m| m.abs() > TRUE_STATUS_TOL).collect();
        records.push(ScenarioRecord {
            interval,
            case: perturbed,
            solution,
            components,
            true_status,
        });
    }
    if records.len() * 2 < m {
        return Err(ScenarioError::TooManyInfeasible {
            feasible: records.len(),
            total: m,
        });
    }
    Ok(ScenarioSet { records, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_ptdf, Bus, Generator, Line, LossModel, OfferBlock};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn triangle(load3: f64, cap13: Option<f64>) -> NetworkCase {
        NetworkCase {
            name: "triangle".into(),
            ref_bus: 1,
            buses: vec![
                Bus { id: 1, load: 0.0 },
                Bus { id: 2, load: 0.0 },
                Bus { id: 3, load: load3 },
            ],
            lines: vec![
                Line { id: 1, from: 1, to: 2, reactance: 0.1, capacity: None },
                Line { id: 2, from: 2, to: 3, reactance: 0.1, capacity: None },
                Line { id: 3, from: 1, to: 3, reactance: 0.1, capacity: cap13 },
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
            loss: LossModel::default(),
        }
    }

    #[test]
    fn uncongested_prices_are_flat() {
        let case = triangle(90.0, None);
        let ptdf = build_ptdf(&case).unwrap();
        let sol = solve_dcopf_lossless(&case, &ptdf).unwrap();
        assert!(sol.mu.iter().all(|&m| m == 0.0));
        assert_relative_eq!(sol.lambda, 10.0, epsilon = 1e-9);
        let comp = decompose_lmp(&sol, &ptdf, &case, DispatchMode::Lossless).unwrap();
        for n in 0..3 {
            assert_relative_eq!(comp.pi[n], 10.0, epsilon = 1e-9);
            assert_relative_eq!(comp.congestion[n], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn marginal_block_sets_the_price() {
        let mut case = triangle(90.0, None);
        case.generators.truncate(1);
        case.generators[0].blocks = vec![
            OfferBlock { quantity: 50.0, price: 8.0 },
            OfferBlock { quantity: 50.0, price: 14.0 },
        ];
        let ptdf = build_ptdf(&case).unwrap();
        let sol = solve_dcopf_lossless(&case, &ptdf).unwrap();
        assert_relative_eq!(sol.lambda, 14.0, epsilon = 1e-9);
        assert_relative_eq!(sol.block_output[0][0], 50.0, epsilon = 1e-9);
        assert_relative_eq!(sol.block_output[0][1], 40.0, epsilon = 1e-9);
    }

    /// Hand-derived optimum for the congested triangle: load 90 at bus 3,
    /// the direct line capped at 40. The cap forces the expensive unit to
    /// 60 MW, giving lambda 10, mu -30 on the capped line, and prices
    /// (10, 20, 30).
    #[test]
    fn congested_triangle_matches_hand_solution() {
        let case = triangle(90.0, Some(40.0));
        let ptdf = build_ptdf(&case).unwrap();
        let sol = solve_dcopf_lossless(&case, &ptdf).unwrap();
        assert_relative_eq!(sol.p_g[0], 30.0, epsilon = 1e-8);
        assert_relative_eq!(sol.p_g[1], 60.0, epsilon = 1e-8);
        assert_relative_eq!(sol.objective, 1500.0, epsilon = 1e-7);
        assert_relative_eq!(sol.lambda, 10.0, epsilon = 1e-8);
        assert_relative_eq!(sol.mu[2], -30.0, epsilon = 1e-8);
        assert_relative_eq!(sol.flows[2], 40.0, epsilon = 1e-8);
        let comp = decompose_lmp(&sol, &ptdf, &case, DispatchMode::Lossless).unwrap();
        for (n, want) in [(0, 10.0), (1, 20.0), (2, 30.0)] {
            assert_relative_eq!(comp.pi[n], want, epsilon = 1e-8);
        }
        // Congestion part is the capped line's shift-factor row scaled by mu.
        for n in 0..3 {
            assert_relative_eq!(
                comp.congestion[n],
                ptdf.matrix[(2, n)] * sol.mu[2],
                epsilon = 1e-10
            );
        }
    }

    /// Exhaustive vertex oracle: minimize c'x over Ax = b, x >= 0 by
    /// trying every basis, then read duals off the optimal basis. Written
    /// directly from dense matrices, independent of the production solver.
    fn enumerate_vertices(
        a: &DMatrix<f64>,
        b: &DVector<f64>,
        c: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>, f64) {
        let (m, n) = (a.nrows(), a.ncols());
        let mut best: Option<(f64, DVector<f64>, DVector<f64>)> = None;
        let mut cols = (0..m).collect::<Vec<usize>>();
        loop {
            let basis = DMatrix::from_fn(m, m, |i, j| a[(i, cols[j])]);
            if let Some(inv) = basis.clone().try_inverse() {
                let xb = &inv * b;
                if xb.iter().all(|&v| v >= -1e-9) {
                    let obj: f64 = (0..m).map(|j| c[cols[j]] * xb[j]).sum();
                    if best.as_ref().map_or(true, |(o, _, _)| obj < o - 1e-12) {
                        let cb = DVector::from_iterator(m, cols.iter().map(|&j| c[j]));
                        let y = inv.transpose() * cb;
                        let mut x = DVector::zeros(n);
                        for j in 0..m {
                            x[cols[j]] = xb[j];
                        }
                        best = Some((obj, x, y));
                    }
                }
            }
            // Next m-combination of 0..n in lexicographic order.
            let mut i = m;
            loop {
                if i == 0 {
                    let (obj, x, y) = best.expect("some basis is feasible");
                    return (x, y, obj);
                }
                i -= 1;
                if cols[i] != i + n - m {
                    cols[i] += 1;
                    for k in i + 1..m {
                        cols[k] = cols[k - 1] + 1;
                    }
                    break;
                }
            }
        }
    }

    /// The congested triangle as a dense standard-form LP, constructed by
    /// hand: variables (p1, p2, b1, b2, s_up, s_lo, u1, u2, v1, v2) where
    /// s are the flow-limit slacks and u, v the upper-bound slacks.
    #[test]
    fn congested_triangle_duals_match_vertex_enumeration() {
        let t_row: [f64; 3] = [0.0, -1.0 / 3.0, -2.0 / 3.0];
        let cap = 40.0;
        let load3 = 90.0;
        let t_load = t_row[2] * load3;
        let rows = 9;
        let cols = 10;
        let mut a = DMatrix::zeros(rows, cols);
        let mut b = DVector::zeros(rows);
        // Balance: p1 + p2 = 90.
        a[(0, 0)] = 1.0;
        a[(0, 1)] = 1.0;
        b[0] = load3;
        // Links: p1 - b1 = 0, p2 - b2 = 0.
        a[(1, 0)] = 1.0;
        a[(1, 2)] = -1.0;
        a[(2, 1)] = 1.0;
        a[(2, 3)] = -1.0;
        // Forward limit: t1 p1 + t2 p2 + s_up = cap + t·load.
        a[(3, 0)] = t_row[0];
        a[(3, 1)] = t_row[1];
        a[(3, 4)] = 1.0;
        b[3] = cap + t_load;
        // Reverse limit: t1 p1 + t2 p2 - s_lo = -cap + t·load.
        a[(4, 0)] = t_row[0];
        a[(4, 1)] = t_row[1];
        a[(4, 5)] = -1.0;
        b[4] = -cap + t_load;
        // Upper bounds on p1, p2, b1, b2.
        for (r, v) in [(5, 0), (6, 1), (7, 2), (8, 3)] {
            a[(r, v)] = 1.0;
            a[(r, v + 6)] = 1.0;
            b[r] = 100.0;
        }
        let mut c = DVector::zeros(cols);
        c[2] = 10.0;
        c[3] = 20.0;

        let (x, y, obj) = enumerate_vertices(&a, &b, &c);
        assert_relative_eq!(obj, 1500.0, epsilon = 1e-7);
        assert_relative_eq!(x[0], 30.0, epsilon = 1e-8);
        assert_relative_eq!(x[1], 60.0, epsilon = 1e-8);

        let case = triangle(load3, Some(cap));
        let ptdf = build_ptdf(&case).unwrap();
        let sol = solve_dcopf_lossless(&case, &ptdf).unwrap();
        assert_relative_eq!(sol.lambda, y[0], epsilon = 1e-8);
        // Oracle line duals: y[3] forward (<= row), y[4] reverse.
        assert_relative_eq!(sol.mu[2], y[3] + y[4], epsilon = 1e-8);
        assert_relative_eq!(sol.objective, obj, epsilon = 1e-7);
    }

    #[test]
    fn lossy_with_zero_losses_matches_lossless() {
        let mut case = triangle(90.0, None);
        case.loss = LossModel { l0: 0.0, lf: vec![0.0; 3], d: vec![] };
        let ptdf = build_ptdf(&case).unwrap();
        let lossless = solve_dcopf_lossless(&case, &ptdf).unwrap();
        let lossy = solve_dcopf_lossy(&case, &ptdf).unwrap();
        assert_relative_eq!(lossy.objective, lossless.objective, epsilon = 1e-8);
        assert_relative_eq!(lossy.lambda, lossless.lambda, epsilon = 1e-8);
        assert_relative_eq!(lossy.sigma.unwrap(), lossless.lambda, epsilon = 1e-8);
        assert_relative_eq!(lossy.loss, 0.0, epsilon = 1e-10);
        for j in 0..3 {
            assert_relative_eq!(lossy.mu[j], lossless.mu[j], epsilon = 1e-8);
        }
    }

    #[test]
    fn lossy_duals_match_vertex_enumeration() {
        // Same congested triangle plus a linear loss model. Variables:
        // (p1, p2, b1, b2, lp, lm, s_up, s_lo, u1, u2, v1, v2) with the
        // free loss split as lp - lm.
        let lf = [0.0, 0.03, 0.06];
        let l0 = 1.0;
        let d = [1.0 / 3.0; 3];
        let t_row: [f64; 3] = [0.0, -1.0 / 3.0, -2.0 / 3.0];
        let cap = 40.0;
        let load3 = 90.0;
        let t_load = t_row[2] * load3;
        let t_dot_d: f64 = t_row.iter().map(|t| t / 3.0).sum();

        let rows = 10;
        let cols = 12;
        let mut a = DMatrix::zeros(rows, cols);
        let mut b = DVector::zeros(rows);
        // Balance: p1 + p2 - (lp - lm) = load.
        a[(0, 0)] = 1.0;
        a[(0, 1)] = 1.0;
        a[(0, 4)] = -1.0;
        a[(0, 5)] = 1.0;
        b[0] = load3;
        // Loss: (lp - lm) - lf1 p1 - lf2 p2 = l0 - lf . load.
        a[(1, 4)] = 1.0;
        a[(1, 5)] = -1.0;
        a[(1, 0)] = -lf[0];
        a[(1, 1)] = -lf[1];
        b[1] = l0 - lf[2] * load3;
        // Links.
        a[(2, 0)] = 1.0;
        a[(2, 2)] = -1.0;
        a[(3, 1)] = 1.0;
        a[(3, 3)] = -1.0;
        // Flow limits with the loss withdrawal term.
        a[(4, 0)] = t_row[0];
        a[(4, 1)] = t_row[1];
        a[(4, 4)] = -t_dot_d;
        a[(4, 5)] = t_dot_d;
        a[(4, 6)] = 1.0;
        b[4] = cap + t_load;
        a[(5, 0)] = t_row[0];
        a[(5, 1)] = t_row[1];
        a[(5, 4)] = -t_dot_d;
        a[(5, 5)] = t_dot_d;
        a[(5, 7)] = -1.0;
        b[5] = -cap + t_load;
        // Upper bounds on p1, p2, b1, b2.
        for (r, v) in [(6, 0), (7, 1), (8, 2), (9, 3)] {
            a[(r, v)] = 1.0;
            a[(r, v + 8)] = 1.0;
            b[r] = 100.0;
        }
        let mut c = DVector::zeros(cols);
        c[2] = 10.0;
        c[3] = 20.0;

        let (x, y, obj) = enumerate_vertices(&a, &b, &c);

        let mut case = triangle(load3, Some(cap));
        case.loss = LossModel { l0, lf: lf.to_vec(), d: d.to_vec() };
        let ptdf = build_ptdf(&case).unwrap();
        let sol = solve_dcopf_lossy(&case, &ptdf).unwrap();
        assert_relative_eq!(sol.objective, obj, epsilon = 1e-7);
        assert_relative_eq!(sol.p_g[0], x[0], epsilon = 1e-7);
        assert_relative_eq!(sol.p_g[1], x[1], epsilon = 1e-7);
        assert_relative_eq!(sol.loss, x[4] - x[5], epsilon = 1e-8);
        assert_relative_eq!(sol.lambda, y[0], epsilon = 1e-8);
        assert_relative_eq!(sol.sigma.unwrap(), y[1], epsilon = 1e-8);
        assert_relative_eq!(sol.mu[2], y[4] + y[5], epsilon = 1e-8);
    }

    #[test]
    fn lossy_decomposition_sums_to_price() {
        let mut case = triangle(90.0, Some(40.0));
        case.loss = LossModel {
            l0: 1.0,
            lf: vec![0.0, 0.03, 0.06],
            d: vec![0.2, 0.3, 0.5],
        };
        let ptdf = build_ptdf(&case).unwrap();
        let sol = solve_dcopf_lossy(&case, &ptdf).unwrap();
        let comp = decompose_lmp(&sol, &ptdf, &case, DispatchMode::Lossy).unwrap();
        for n in 0..3 {
            let sum = comp.energy[n] + comp.congestion[n] + comp.loss[n];
            assert_relative_eq!(comp.pi[n], sum, epsilon = 1e-12);
        }
        // Energy part is flat at sigma; loss part scales the loss factors.
        let sigma = sol.sigma.unwrap();
        for n in 0..3 {
            assert_relative_eq!(comp.energy[n], sigma, epsilon = 1e-12);
            assert_relative_eq!(comp.loss[n], -sigma * case.loss.lf[n], epsilon = 1e-12);
        }
        // Direct check of the full price against its definition.
        let lf = case.loss_factors();
        let d = case.loss_distribution();
        let t_mu = ptdf.matrix.transpose() * DVector::from_row_slice(&sol.mu);
        let d_t_mu: f64 = (0..3).map(|n| d[n] * t_mu[n]).sum();
        for n in 0..3 {
            let want = sigma * (1.0 - lf[n]) + t_mu[n] - d_t_mu;
            assert_relative_eq!(comp.pi[n], want, epsilon = 1e-10);
        }
    }

    #[test]
    fn complementary_slackness_and_balance_hold() {
        let case = triangle(90.0, Some(40.0));
        let ptdf = build_ptdf(&case).unwrap();
        let set = generate_scenarios(&case, &ptdf, DispatchMode::Lossless, 50, 0.03, 7).unwrap();
        assert!(set.records.len() >= 25);
        for rec in &set.records {
            let sol = &rec.solution;
            let gen_total: f64 = sol.p_g.iter().sum();
            let load_total: f64 = rec.case.buses.iter().map(|b| b.load).sum();
            assert!((gen_total - load_total - sol.loss).abs() < 1e-6);
            for (j, line) in rec.case.lines.iter().enumerate() {
                if sol.mu[j].abs() > 0.0 {
                    let cap = line.capacity.expect("only rated lines carry multipliers");
                    assert!(
                        (sol.flows[j].abs() - cap).abs() < 1e-6,
                        "line {} has multiplier {} but flow {} under cap {}",
                        line.id,
                        sol.mu[j],
                        sol.flows[j],
                        cap
                    );
                }
            }
        }
    }

    #[test]
    fn scenarios_are_deterministic_and_noise_free_at_zero() {
        let case = triangle(90.0, Some(40.0));
        let ptdf = build_ptdf(&case).unwrap();
        let a = generate_scenarios(&case, &ptdf, DispatchMode::Lossless, 8, 0.03, 42).unwrap();
        let b = generate_scenarios(&case, &ptdf, DispatchMode::Lossless, 8, 0.03, 42).unwrap();
        assert_eq!(a.records.len(), b.records.len());
        for (ra, rb) in a.records.iter().zip(&b.records) {
            assert_eq!(ra.solution.p_g, rb.solution.p_g);
            assert_eq!(ra.solution.mu, rb.solution.mu);
            assert_eq!(ra.components.pi.as_slice(), rb.components.pi.as_slice());
        }

        let quiet = generate_scenarios(&case, &ptdf, DispatchMode::Lossless, 5, 0.0, 1).unwrap();
        for rec in &quiet.records {
            assert_eq!(rec.solution.p_g, quiet.records[0].solution.p_g);
            assert_eq!(rec.components.pi.as_slice(), quiet.records[0].components.pi.as_slice());
        }
    }

    #[test]
    fn congestion_columns_span_the_congested_shift_factors() {
        // Stacked congestion parts have rank equal to the number of
        // distinct ever-congested lines when their factor columns are
        // independent.
        let case = triangle(90.0, Some(40.0));
        let ptdf = build_ptdf(&case).unwrap();
        let set = generate_scenarios(&case, &ptdf, DispatchMode::Lossless, 40, 0.03, 3).unwrap();
        let congested: Vec<_> = set
            .records
            .iter()
            .filter(|r| r.true_status.iter().any(|&s| s))
            .collect();
        assert!(congested.len() > 5);
        let x = DMatrix::from_columns(
            &congested.iter().map(|r| r.components.congestion.clone()).collect::<Vec<_>>(),
        );
        let svd = crate::linalg::sorted_svd(&x);
        assert_eq!(crate::linalg::numerical_rank(&svd.singular_values, 1e-9), 1);
    }

    #[test]
    fn infeasible_dispatch_names_the_binding_rows() {
        let mut case = triangle(500.0, Some(40.0));
        case.generators[0].pmax = 100.0;
        case.generators[1].pmax = 100.0;
        let ptdf = build_ptdf(&case).unwrap();
        match solve_dcopf_lossless(&case, &ptdf) {
            Err(DispatchError::Infeasible { rows, .. }) => {
                assert!(!rows.is_empty());
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn decomposition_identity_under_random_loads(
            load2 in 0.0f64..60.0,
            load3 in 0.0f64..60.0,
            lossy in proptest::bool::ANY,
        ) {
            let mut case = triangle(load3, Some(40.0));
            case.buses[1].load = load2;
            case.loss = LossModel {
                l0: 0.5,
                lf: vec![0.0, 0.02, 0.05],
                d: vec![0.3, 0.3, 0.4],
            };
            let ptdf = build_ptdf(&case).unwrap();
            let mode = if lossy { DispatchMode::Lossy } else { DispatchMode::Lossless };
            if let Ok(sol) = solve_dcopf(&case, &ptdf, mode) {
                let comp = decompose_lmp(&sol, &ptdf, &case, mode).unwrap();
                for n in 0..3 {
                    let sum = comp.energy[n] + comp.congestion[n] + comp.loss[n];
                    prop_assert!((comp.pi[n] - sum).abs() < 1e-6);
                }
            }
        }
    }
}
