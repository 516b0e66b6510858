//! Shared fixtures for the stage benchmarks: bundled cases, their shift
//! factors, and a simulated thirty-bus panel.

use std::path::{Path, PathBuf};

use congid::{build_ptdf, generate_scenarios, DispatchMode, NetworkCase, PtdfMatrix, ScenarioSet};

/// Path of a bundled case file.
pub fn case_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../cases").join(name)
}

/// Loads a bundled case together with its shift factors.
pub fn load_case(name: &str) -> (NetworkCase, PtdfMatrix) {
    let case = NetworkCase::load(&case_path(name)).expect("bundled case loads");
    let ptdf = build_ptdf(&case).expect("bundled case is connected");
    (case, ptdf)
}

/// Simulates `m` intervals of the thirty-bus case under 3% load noise,
/// the standard input for the identification-stage benchmarks.
pub fn thirty_bus_scenarios(m: usize) -> (NetworkCase, PtdfMatrix, ScenarioSet) {
    let (case, ptdf) = load_case("mesh30.toml");
    let set = generate_scenarios(&case, &ptdf, DispatchMode::Lossless, m, 0.03, 12)
        .expect("simulation stays feasible");
    (case, ptdf, set)
}
