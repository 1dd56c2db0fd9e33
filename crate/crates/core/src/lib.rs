//! Allocation engine for guaranteed display campaigns sharing inventory with
//! a spot market.
//!
//! The crate models forecast supply and booked campaigns as a bipartite
//! graph, then offers a family of allocation plans: pure revenue or click
//! maximization, representative delivery, weighted blends, and staged
//! programs that trade representativeness against revenue and click floors.
//! Everything downstream of the graph is deterministic for a fixed seed and
//! thread-independent, so runs can be diffed byte for byte.

pub mod error;
pub mod feasibility;
pub mod files;
pub mod generator;
pub mod goal;
pub mod graph;
pub mod metrics;
pub mod netflow;
pub mod qp;
pub mod sampling;

pub use error::{Error, Result};
pub use feasibility::{CertifyOutcome, TrimOutcome, TrimReport, certify_feasible, make_feasible};
pub use files::{
    AllocationFile, AxisEcho, DirBuilder, DualsFile, Instance, Manifest, ResultFile,
    allocation_from_file, allocation_to_file, digest_file, duals_to_file, point_dir_name,
    read_instance, read_json, result_from_run, sha256_hex, write_instance, write_json_atomic,
    write_text_atomic,
};
pub use generator::{AttributeSpec, GeneratorConfig, LogisticSign, generate_instance};
pub use goal::{
    FloorRecord, Knob, KnobConfig, RunResult, SingleObjective, SolveMode, StageOrder, StageTrace,
    SweepPoint, SweepSpec, extract_frontier, run, run_baseline, run_single, run_three_step,
    run_two_step_a, run_two_step_b, run_two_step_c, sweep,
};
pub use graph::{
    Allocation, AllocationGraph, AttrMap, AttrValue, Campaign, Clause, DateRange, Edge, EdgeSpec,
    PenaltySpec, PenaltyTier, SupplyNode, TargetingPredicate, ValidationReport,
    evaluate_eligibility, validate_allocation,
};
pub use metrics::{
    Axis, FrontierPoint, FrontierSummary, MetricsRow, Objectives, compute_metrics,
    compute_objectives, emit_frontier, neumaier_sum, normalize, pareto_indices, parse_frontier,
};
pub use netflow::{
    FlowArc, FlowOutcome, FlowProblem, FlowSolution, NetworkSimplex, SideConstraint,
    solve_min_cost_flow, solve_with_side_constraints,
};
pub use qp::{
    DualSolution, KktReport, QpFloor, QpOptions, QpSolve, QpStageSpec, SolveStats,
    kkt_residuals, primal_from_duals, recover_gamma, representativeness, solve_f1_with_floors,
    solve_stage, solve_weighted,
};
pub use sampling::sample_reweight;
