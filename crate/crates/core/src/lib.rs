//! Identification of transmission congestion patterns from locational
//! marginal price (LMP) panels.

pub mod basis;
pub mod bottom_up;
pub mod identify;
pub mod linalg;
pub mod lp;
pub mod market;
pub mod network;
pub mod pipeline;
pub mod seed;
pub mod top_down;

pub use basis::{BasisSet, BasisVector, Provenance};
pub use bottom_up::{
    AffinityMatrix, BottomUpError, BottomUpOutcome, BottomUpParams, ClusterResult, RoundLog,
    RoundSnapshot, affinity, bottom_up_search, cutoff, harvest_rank1, project_complement,
    spectral_cluster,
};
pub use market::{
    DispatchError, DispatchMode, DispatchSolution, LmpComponents, ScenarioError, ScenarioRecord,
    ScenarioSet, decompose_lmp, generate_scenarios, solve_dcopf, solve_dcopf_lossless,
    solve_dcopf_lossy,
};
pub use network::{
    Bus, CaseError, Generator, Line, LossModel, NetworkCase, OfferBlock, PtdfError, PtdfMatrix,
    build_ptdf,
};
pub use identify::{
    ENCODE_EPS_REL, FrequencyEntry, IdentificationReport, IdentifyError, RowLabel, RowMatch,
    RowMiscode, StatusCodeSeq, assemble_basis, codes_from_magnitudes, encode_status,
    match_rows_by_codes, match_rows_by_direction, miscode, recover_chi, status_frequency,
};
pub use top_down::{
    FitMethod, HyperplaneFit, LeafReason, NodeOutcome, NormalFit, SearchNode, SearchTree,
    TopDownError, TopDownParams, check_hyperplane, extract_basis, l1_hyperplane_normal,
    random_sample_normal, sample_candidate_normal, top_down_search,
};
pub use pipeline::{
    CongestionMatrix, CsvSchema, LmpPanel, MissingPolicy, PipelineError, dedupe_nodes,
    eliminate_loss_term, filter_congested, ingest_lmp_csv, panel_from_scenarios, pca_reduce,
};
