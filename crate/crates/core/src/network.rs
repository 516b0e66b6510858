//! Grid case model, case-file parsing, and shift-factor construction.
//!
//! A [`NetworkCase`] describes buses with loads, lines with reactances and
//! optional capacities, and generators with stepwise offer blocks. Cases
//! load from a TOML schema (see `cases/` for examples) or from the common
//! matrix-style layout with `bus`/`branch`/`gen`/`gencost` tables.
//!
//! [`build_ptdf`] produces the DC power transfer distribution factor
//! matrix: `flow = T * injection` for any balanced injection vector, with
//! the reference-bus column identically zero.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("failed to read case file: {0}")]
    Io(#[from] std::io::Error),
    #[error("case parse error: {0}")]
    Parse(String),
    #[error("invalid case: {0}")]
    Validation(String),
}

#[derive(Debug, Error)]
pub enum PtdfError {
    #[error("network splits into {count} islands: {islands:?}")]
    Disconnected {
        count: usize,
        islands: Vec<Vec<u32>>,
    },
    #[error("susceptance matrix is singular after removing the reference bus")]
    Singular,
}

/// One offer block: `quantity` MW available at `price` per MWh.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfferBlock {
    pub quantity: f64,
    pub price: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    /// Fixed active-power load in MW.
    #[serde(default)]
    pub load: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Line {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    /// Series reactance in per unit; must be positive.
    pub reactance: f64,
    /// Thermal limit in MW; `None` leaves the line unconstrained.
    #[serde(default)]
    pub capacity: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Generator {
    pub id: u32,
    pub bus: u32,
    #[serde(default)]
    pub pmin: f64,
    pub pmax: f64,
    /// Offer blocks with non-decreasing prices; quantities stack from zero.
    pub blocks: Vec<OfferBlock>,
}

/// Linearized loss model: system losses `l = l0 + lf . (injection)` are
/// withdrawn according to the distribution vector `d` (per bus, sums to 1).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LossModel {
    #[serde(default)]
    pub l0: f64,
    /// Per-bus loss factors, in bus order; empty means all zeros.
    #[serde(default)]
    pub lf: Vec<f64>,
    /// Per-bus loss distribution, in bus order; empty means uniform.
    #[serde(default)]
    pub d: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkCase {
    pub name: String,
    pub ref_bus: u32,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub loss: LossModel,
}

impl NetworkCase {
    /// Loads a case file, auto-detecting the format: TOML first, falling
    /// back to the matrix-style table layout.
    pub fn load(path: &Path) -> Result<Self, CaseError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_any(&text)
    }

    /// Parses case text in either supported format.
    pub fn from_str_any(text: &str) -> Result<Self, CaseError> {
        match Self::from_toml_str(text) {
            Ok(case) => Ok(case),
            Err(toml_err) => {
                if text.contains(".bus") || text.contains("function") {
                    Self::from_matrix_str(text)
                } else {
                    Err(toml_err)
                }
            }
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CaseError> {
        let case: NetworkCase =
            toml::from_str(text).map_err(|e| CaseError::Parse(e.to_string()))?;
        case.validate()?;
        Ok(case)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("case serializes")
    }

    /// Parses the common matrix-style case layout: numeric `bus`, `branch`,
    /// `gen`, and optional `gencost` tables (`name.bus = [ rows ];`). The
    /// reference bus is the bus with type 3, or the first bus otherwise.
    pub fn from_matrix_str(text: &str) -> Result<Self, CaseError> {
        let tables = parse_matrix_tables(text)?;
        let bus_rows = tables
            .get("bus")
            .ok_or_else(|| CaseError::Parse("missing bus table".into()))?;
        let branch_rows = tables
            .get("branch")
            .ok_or_else(|| CaseError::Parse("missing branch table".into()))?;
        let gen_rows = tables
            .get("gen")
            .ok_or_else(|| CaseError::Parse("missing gen table".into()))?;
        let cost_rows = tables.get("gencost");

        let mut buses = Vec::new();
        let mut ref_bus = None;
        for row in bus_rows {
            if row.len() < 3 {
                return Err(CaseError::Parse("bus row needs id, type, Pd".into()));
            }
            let id = row[0] as u32;
            buses.push(Bus { id, load: row[2] });
            if row[1] as i64 == 3 && ref_bus.is_none() {
                ref_bus = Some(id);
            }
        }
        let ref_bus =
            ref_bus.unwrap_or_else(|| buses.first().map(|b| b.id).unwrap_or_default());

        let mut lines = Vec::new();
        for (i, row) in branch_rows.iter().enumerate() {
            if row.len() < 6 {
                return Err(CaseError::Parse(
                    "branch row needs from, to, r, x, b, rateA".into(),
                ));
            }
            let capacity = if row[5] > 0.0 { Some(row[5]) } else { None };
            lines.push(Line {
                id: (i + 1) as u32,
                from: row[0] as u32,
                to: row[1] as u32,
                reactance: row[3],
                capacity,
            });
        }

        let mut generators = Vec::new();
        for (i, row) in gen_rows.iter().enumerate() {
            if row.len() < 10 {
                return Err(CaseError::Parse("gen row needs at least 10 columns".into()));
            }
            let (pmax, pmin) = (row[8], row[9]);
            let blocks = match cost_rows {
                Some(costs) => {
                    let row = costs.get(i).ok_or_else(|| {
                        CaseError::Parse("gencost table shorter than gen table".into())
                    })?;
                    blocks_from_cost_row(row, pmax)?
                }
                // No cost data: single block at unit price.
                None => vec![OfferBlock {
                    quantity: pmax,
                    price: 1.0,
                }],
            };
            generators.push(Generator {
                id: (i + 1) as u32,
                bus: row[0] as u32,
                pmin,
                pmax,
                blocks,
            });
        }

        let case = NetworkCase {
            name: "converted".into(),
            ref_bus,
            buses,
            lines,
            generators,
            loss: LossModel::default(),
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        if self.buses.is_empty() {
            return Err(CaseError::Validation("case has no buses".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for bus in &self.buses {
            if !seen.insert(bus.id) {
                return Err(CaseError::Validation(format!("duplicate bus id {}", bus.id)));
            }
            if !bus.load.is_finite() {
                return Err(CaseError::Validation(format!(
                    "bus {} load is not finite",
                    bus.id
                )));
            }
        }
        if !seen.contains(&self.ref_bus) {
            return Err(CaseError::Validation(format!(
                "reference bus {} is not in the bus table",
                self.ref_bus
            )));
        }
        let mut line_ids = std::collections::BTreeSet::new();
        for line in &self.lines {
            if !line_ids.insert(line.id) {
                return Err(CaseError::Validation(format!("duplicate line id {}", line.id)));
            }
            if !(line.reactance > 0.0) {
                return Err(CaseError::Validation(format!(
                    "line {} must have positive reactance",
                    line.id
                )));
            }
            for end in [line.from, line.to] {
                if !seen.contains(&end) {
                    return Err(CaseError::Validation(format!(
                        "line {} references unknown bus {}",
                        line.id, end
                    )));
                }
            }
            if line.from == line.to {
                return Err(CaseError::Validation(format!(
                    "line {} connects bus {} to itself",
                    line.id, line.from
                )));
            }
            if let Some(cap) = line.capacity {
                if !(cap > 0.0) {
                    return Err(CaseError::Validation(format!(
                        "line {} capacity must be positive",
                        line.id
                    )));
                }
            }
        }
        let mut gen_ids = std::collections::BTreeSet::new();
        for gen in &self.generators {
            if !gen_ids.insert(gen.id) {
                return Err(CaseError::Validation(format!(
                    "duplicate generator id {}",
                    gen.id
                )));
            }
            if !seen.contains(&gen.bus) {
                return Err(CaseError::Validation(format!(
                    "generator {} references unknown bus {}",
                    gen.id, gen.bus
                )));
            }
            if gen.pmin > gen.pmax {
                return Err(CaseError::Validation(format!(
                    "generator {} has pmin > pmax",
                    gen.id
                )));
            }
            if gen.blocks.is_empty() {
                return Err(CaseError::Validation(format!(
                    "generator {} has no offer blocks",
                    gen.id
                )));
            }
            let mut prev = f64::NEG_INFINITY;
            for block in &gen.blocks {
                if !(block.quantity > 0.0) || !block.price.is_finite() {
                    return Err(CaseError::Validation(format!(
                        "generator {} has a malformed offer block",
                        gen.id
                    )));
                }
                if block.price < prev {
                    return Err(CaseError::Validation(format!(
                        "generator {} offer prices must be non-decreasing",
                        gen.id
                    )));
                }
                prev = block.price;
            }
        }
        if !self.loss.lf.is_empty() && self.loss.lf.len() != self.buses.len() {
            return Err(CaseError::Validation(
                "loss factor vector length must match the bus count".into(),
            ));
        }
        if !self.loss.d.is_empty() {
            if self.loss.d.len() != self.buses.len() {
                return Err(CaseError::Validation(
                    "loss distribution length must match the bus count".into(),
                ));
            }
            let sum: f64 = self.loss.d.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(CaseError::Validation(
                    "loss distribution must sum to one".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn total_load(&self) -> f64 {
        self.buses.iter().map(|b| b.load).sum()
    }

    /// Dense index of each bus id, in bus-table order.
    pub fn bus_index(&self) -> BTreeMap<u32, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    /// Per-bus loss factors as a dense vector (zeros when unset).
    pub fn loss_factors(&self) -> Vec<f64> {
        if self.loss.lf.is_empty() {
            vec![0.0; self.buses.len()]
        } else {
            self.loss.lf.clone()
        }
    }

    /// Per-bus loss distribution as a dense vector (uniform when unset).
    pub fn loss_distribution(&self) -> Vec<f64> {
        if self.loss.d.is_empty() {
            vec![1.0 / self.buses.len() as f64; self.buses.len()]
        } else {
            self.loss.d.clone()
        }
    }
}

fn blocks_from_cost_row(row: &[f64], pmax: f64) -> Result<Vec<OfferBlock>, CaseError> {
    if row.len() < 4 {
        return Err(CaseError::Parse("gencost row too short".into()));
    }
    let model = row[0] as i64;
    let n = row[3] as usize;
    let coeffs = &row[4..];
    match model {
        // Piecewise linear: points (x1,y1),...,(xn,yn); slopes become blocks.
        1 => {
            if coeffs.len() < 2 * n || n < 2 {
                return Err(CaseError::Parse("piecewise cost row malformed".into()));
            }
            let mut blocks = Vec::with_capacity(n - 1);
            for i in 0..n - 1 {
                let (x0, y0) = (coeffs[2 * i], coeffs[2 * i + 1]);
                let (x1, y1) = (coeffs[2 * i + 2], coeffs[2 * i + 3]);
                let q = x1 - x0;
                if q <= 0.0 {
                    return Err(CaseError::Parse(
                        "piecewise cost breakpoints must increase".into(),
                    ));
                }
                blocks.push(OfferBlock {
                    quantity: q,
                    price: (y1 - y0) / q,
                });
            }
            Ok(blocks)
        }
        // Polynomial: only linear cost converts exactly to one block.
        2 => {
            if coeffs.len() < n {
                return Err(CaseError::Parse("polynomial cost row malformed".into()));
            }
            let poly = &coeffs[..n];
            // Coefficients are ordered from the highest degree down.
            let nonlinear = poly[..n.saturating_sub(2)].iter().any(|&c| c != 0.0);
            if nonlinear {
                return Err(CaseError::Parse(
                    "nonlinear polynomial costs cannot be converted to offer blocks".into(),
                ));
            }
            let price = if n >= 2 { poly[n - 2] } else { 0.0 };
            Ok(vec![OfferBlock {
                quantity: pmax.max(1e-9),
                price,
            }])
        }
        other => Err(CaseError::Parse(format!("unknown cost model {other}"))),
    }
}

/// Extracts named numeric tables from matrix-style case text. Accepts
/// `prefix.name = [ rows ];` blocks with `%` comments, rows separated by
/// semicolons or newlines.
fn parse_matrix_tables(text: &str) -> Result<BTreeMap<String, Vec<Vec<f64>>>, CaseError> {
    let mut tables = BTreeMap::new();
    let cleaned: String = text
        .lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let bytes = cleaned.as_bytes();
    let mut pos = 0;
    while let Some(eq) = cleaned[pos..].find("=") {
        let eq = pos + eq;
        let open = match cleaned[eq..].find('[') {
            Some(o) => eq + o,
            None => break,
        };
        // Only treat this as a table if nothing but whitespace separates = and [.
        if !cleaned[eq + 1..open].trim().is_empty() {
            pos = eq + 1;
            continue;
        }
        let name_end = cleaned[..eq].trim_end();
        let name = name_end
            .rsplit(|c: char| c.is_whitespace() || c == ';')
            .next()
            .unwrap_or("")
            .rsplit('.')
            .next()
            .unwrap_or("")
            .to_string();
        let close = match cleaned[open..].find(']') {
            Some(c) => open + c,
            None => return Err(CaseError::Parse(format!("unterminated table {name}"))),
        };
        let body = &cleaned[open + 1..close];
        let mut rows = Vec::new();
        for raw_row in body.split([';', '\n']) {
            let fields: Result<Vec<f64>, _> = raw_row
                .split([' ', '\t', ','])
                .filter(|f| !f.trim().is_empty())
                .map(|f| f.trim().parse::<f64>())
                .collect();
            let fields =
                fields.map_err(|e| CaseError::Parse(format!("bad number in {name}: {e}")))?;
            if !fields.is_empty() {
                rows.push(fields);
            }
        }
        if !name.is_empty() && !rows.is_empty() {
            tables.insert(name, rows);
        }
        pos = close + 1;
        if pos >= bytes.len() {
            break;
        }
    }
    if tables.is_empty() {
        return Err(CaseError::Parse("no numeric tables found".into()));
    }
    Ok(tables)
}

/// Power transfer distribution factors for a case: `matrix` is
/// `num_lines x num_buses` in case table order, reference column zero.
#[derive(Clone, Debug)]
pub struct PtdfMatrix {
    pub matrix: DMatrix<f64>,
    pub ref_bus: u32,
    pub line_ids: Vec<u32>,
    pub bus_ids: Vec<u32>,
}

impl PtdfMatrix {
    /// Shift factors of one line across all buses, in dense bus order.
    pub fn line_row(&self, line_idx: usize) -> nalgebra::RowDVector<f64> {
        self.matrix.row(line_idx).into_owned()
    }
}

/// Builds the DC shift-factor matrix. Fails with the bus groups of each
/// island when the network is not connected.
pub fn build_ptdf(case: &NetworkCase) -> Result<PtdfMatrix, PtdfError> {
    let n = case.buses.len();
    let idx = case.bus_index();
    let ref_idx = idx[&case.ref_bus];

    // Connectivity check first so failure reports island membership.
    let islands = connected_components(case, &idx);
    if islands.len() > 1 {
        return Err(PtdfError::Disconnected {
            count: islands.len(),
            islands,
        });
    }

    // Nodal susceptance matrix with the reference bus removed.
    let keep: Vec<usize> = (0..n).filter(|&i| i != ref_idx).collect();
    let pos_of: BTreeMap<usize, usize> = keep.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    let mut b_red = DMatrix::zeros(n - 1, n - 1);
    for line in &case.lines {
        let b = 1.0 / line.reactance;
        let f = idx[&line.from];
        let t = idx[&line.to];
        for (a, bb, sign) in [(f, f, 1.0), (t, t, 1.0), (f, t, -1.0), (t, f, -1.0)] {
            if let (Some(&pa), Some(&pb)) = (pos_of.get(&a), pos_of.get(&bb)) {
                b_red[(pa, pb)] += sign * b;
            }
        }
    }
    let lu = b_red.lu();

    // Solve B_red Z = Bf_red^T column-block, then T = Z^T with a zero
    // column reinserted at the reference bus.
    let n_l = case.lines.len();
    let mut bf_t = DMatrix::zeros(n - 1, n_l);
    for (j, line) in case.lines.iter().enumerate() {
        let b = 1.0 / line.reactance;
        let f = idx[&line.from];
        let t = idx[&line.to];
        if let Some(&pf) = pos_of.get(&f) {
            bf_t[(pf, j)] = b;
        }
        if let Some(&pt) = pos_of.get(&t) {
            bf_t[(pt, j)] = -b;
        }
    }
    let z = lu.solve(&bf_t).ok_or(PtdfError::Singular)?;

    let mut matrix = DMatrix::zeros(n_l, n);
    for j in 0..n_l {
        for (p, &i) in keep.iter().enumerate() {
            matrix[(j, i)] = z[(p, j)];
        }
    }
    Ok(PtdfMatrix {
        matrix,
        ref_bus: case.ref_bus,
        line_ids: case.lines.iter().map(|l| l.id).collect(),
        bus_ids: case.buses.iter().map(|b| b.id).collect(),
    })
}

fn connected_components(case: &NetworkCase, idx: &BTreeMap<u32, usize>) -> Vec<Vec<u32>> {
    let n = case.buses.len();
    let mut adj = vec![Vec::new(); n];
    for line in &case.lines {
        let f = idx[&line.from];
        let t = idx[&line.to];
        adj[f].push(t);
        adj[t].push(f);
    }
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        comp[start] = count;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = count;
                    stack.push(w);
                }
            }
        }
        count += 1;
    }
    let mut islands = vec![Vec::new(); count];
    for (i, bus) in case.buses.iter().enumerate() {
        islands[comp[i]].push(bus.id);
    }
    islands
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    pub(crate) fn triangle_case() -> NetworkCase {
        NetworkCase {
            name: "triangle".into(),
            ref_bus: 1,
            buses: vec![
                Bus { id: 1, load: 0.0 },
                Bus { id: 2, load: 50.0 },
                Bus { id: 3, load: 50.0 },
            ],
            lines: vec![
                Line { id: 1, from: 1, to: 2, reactance: 0.1, capacity: None },
                Line { id: 2, from: 2, to: 3, reactance: 0.1, capacity: None },
                Line { id: 3, from: 1, to: 3, reactance: 0.1, capacity: None },
            ],
            generators: vec![Generator {
                id: 1,
                bus: 1,
                pmin: 0.0,
                pmax: 200.0,
                blocks: vec![OfferBlock { quantity: 200.0, price: 10.0 }],
            }],
            loss: LossModel::default(),
        }
    }

    /// Independent DC power-flow: solve B_red theta = P_red, flows from
    /// angle differences. Used as the oracle for the PTDF construction.
    pub(crate) fn dc_flow_oracle(case: &NetworkCase, injection: &[f64]) -> Vec<f64> {
        let idx = case.bus_index();
        let n = case.buses.len();
        let ref_idx = idx[&case.ref_bus];
        let keep: Vec<usize> = (0..n).filter(|&i| i != ref_idx).collect();
        let mut b_red = DMatrix::zeros(n - 1, n - 1);
        let pos_of: BTreeMap<usize, usize> =
            keep.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        for line in &case.lines {
            let b = 1.0 / line.reactance;
            let f = idx[&line.from];
            let t = idx[&line.to];
            for (a, bb, sign) in [(f, f, 1.0), (t, t, 1.0), (f, t, -1.0), (t, f, -1.0)] {
                if let (Some(&pa), Some(&pb)) = (pos_of.get(&a), pos_of.get(&bb)) {
                    b_red[(pa, pb)] += sign * b;
                }
            }
        }
        let p_red = DVector::from_iterator(n - 1, keep.iter().map(|&i| injection[i]));
        let theta_red = b_red.lu().solve(&p_red).expect("connected network");
        let mut theta = vec![0.0; n];
        for (p, &i) in keep.iter().enumerate() {
            theta[i] = theta_red[p];
        }
        case.lines
            .iter()
            .map(|l| (theta[idx[&l.from]] - theta[idx[&l.to]]) / l.reactance)
            .collect()
    }

    #[test]
    fn triangle_splits_two_thirds_one_third() {
        // Inject 1 MW at bus 3, withdraw at the reference: 2/3 takes the
        // direct path 3->1, 1/3 takes 3->2->1. Signs follow each line's
        // from->to orientation.
        let case = triangle_case();
        let t = build_ptdf(&case).unwrap();
        assert_relative_eq!(t.matrix[(2, 2)], -2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(t.matrix[(0, 2)], -1.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(t.matrix[(1, 2)], -1.0 / 3.0, epsilon = 1e-12);
        // Reference column is identically zero.
        for j in 0..3 {
            assert_eq!(t.matrix[(j, 0)], 0.0);
        }
    }

    #[test]
    fn ptdf_matches_dc_oracle_on_triangle() {
        let case = triangle_case();
        let t = build_ptdf(&case).unwrap();
        let injection = [30.0, -10.0, -20.0];
        let oracle = dc_flow_oracle(&case, &injection);
        let inj = DVector::from_row_slice(&injection);
        let flows = &t.matrix * inj;
        for j in 0..3 {
            assert_relative_eq!(flows[j], oracle[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn disconnected_network_reports_islands() {
        let mut case = triangle_case();
        case.buses.push(Bus { id: 9, load: 0.0 });
        case.buses.push(Bus { id: 10, load: 0.0 });
        case.lines.push(Line {
            id: 4,
            from: 9,
            to: 10,
            reactance: 0.2,
            capacity: None,
        });
        match build_ptdf(&case) {
            Err(PtdfError::Disconnected { count, islands }) => {
                assert_eq!(count, 2);
                assert!(islands.contains(&vec![1, 2, 3]));
                assert!(islands.contains(&vec![9, 10]));
            }
            other => panic!("expected disconnected error, got {other:?}"),
        }
    }

    #[test]
    fn toml_roundtrip_preserves_case() {
        let case = triangle_case();
        let text = case.to_toml_string();
        let parsed = NetworkCase::from_toml_str(&text).unwrap();
        assert_eq!(parsed.buses.len(), 3);
        assert_eq!(parsed.lines[1].from, 2);
        assert_eq!(parsed.generators[0].blocks[0].price, 10.0);
    }

    #[test]
    fn validation_rejects_bad_cases() {
        let mut dup = triangle_case();
        dup.buses[2].id = 1;
        assert!(matches!(dup.validate(), Err(CaseError::Validation(_))));

        let mut decreasing = triangle_case();
        decreasing.generators[0].blocks = vec![
            OfferBlock { quantity: 10.0, price: 20.0 },
            OfferBlock { quantity: 10.0, price: 15.0 },
        ];
        assert!(matches!(decreasing.validate(), Err(CaseError::Validation(_))));

        let mut bad_x = triangle_case();
        bad_x.lines[0].reactance = 0.0;
        assert!(matches!(bad_x.validate(), Err(CaseError::Validation(_))));
    }

    #[test]
    fn matrix_layout_converts() {
        let text = r#"
function mpc = case3
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0.0  0 0 0 1 1 0 230 1 1.1 0.9;
    2 1 50.0 0 0 0 1 1 0 230 1 1.1 0.9;
    3 1 50.0 0 0 0 1 1 0 230 1 1.1 0.9;
];
mpc.branch = [
    1 2 0.0 0.1 0.0 40  0 0 0 0 1 -360 360;
    2 3 0.0 0.1 0.0 0   0 0 0 0 1 -360 360;
    1 3 0.0 0.1 0.0 0   0 0 0 0 1 -360 360;
];
mpc.gen = [
    1 0 0 0 0 1 100 1 200 0;
    3 0 0 0 0 1 100 1 100 0;
];
mpc.gencost = [
    2 0 0 2 12.5 0;
    1 0 0 3 0 0 50 600 100 1500;
];
"#;
        let case = NetworkCase::from_matrix_str(text).unwrap();
        assert_eq!(case.ref_bus, 1);
        assert_eq!(case.buses.len(), 3);
        assert_eq!(case.lines[0].capacity, Some(40.0));
        assert_eq!(case.lines[1].capacity, None);
        // Polynomial linear cost becomes one block at the marginal price.
        assert_relative_eq!(case.generators[0].blocks[0].price, 12.5);
        // Piecewise points (0,0) (50,600) (100,1500) become two blocks.
        let b = &case.generators[1].blocks;
        assert_eq!(b.len(), 2);
        assert_relative_eq!(b[0].quantity, 50.0);
        assert_relative_eq!(b[0].price, 12.0);
        assert_relative_eq!(b[1].price, 18.0);
    }

    #[test]
    fn quadratic_costs_are_rejected() {
        let text = r#"
mpc.bus = [ 1 3 0 0 0 0 1 1 0 230 1 1.1 0.9; 2 1 10 0 0 0 1 1 0 230 1 1.1 0.9; ];
mpc.branch = [ 1 2 0.0 0.1 0.0 0 0 0 0 0 1 -360 360; ];
mpc.gen = [ 1 0 0 0 0 1 100 1 50 0; ];
mpc.gencost = [ 2 0 0 3 0.1 10 0; ];
"#;
        assert!(matches!(
            NetworkCase::from_matrix_str(text),
            Err(CaseError::Parse(_))
        ));
    }
}
