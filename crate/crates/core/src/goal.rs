//! Staged goal programs over a trimmed allocation graph: baseline routing,
//! single objectives, the three two-step variants, the three-step sequence,
//! and knob sweeps that trace efficient frontiers.
//!
//! Every pipeline starts from `make_feasible`, so stage floors are fractions
//! of optima the instance can actually attain and later stages stay feasible
//! by construction. Linear stages run on the flow solver; quadratic stages
//! (anything involving representativeness) run on the dual-ascent solver.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasibility::{TrimReport, make_feasible};
use crate::graph::{Allocation, AllocationGraph};
use crate::metrics::{Axis, MetricsRow, Objectives, compute_objectives, pareto_indices};
use crate::netflow::{FlowArc, FlowProblem, SideConstraint, solve_with_side_constraints};
use crate::qp::{DualSolution, QpFloor, QpOptions, QpSolve, QpStageSpec, recover_gamma, solve_stage};

const BINDING_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMode {
    Baseline,
    Single,
    TwoStepA,
    TwoStepB,
    TwoStepC,
    ThreeStep,
}

impl SolveMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveMode::Baseline => "baseline",
            SolveMode::Single => "single",
            SolveMode::TwoStepA => "two-step-a",
            SolveMode::TwoStepB => "two-step-b",
            SolveMode::TwoStepC => "two-step-c",
            SolveMode::ThreeStep => "three-step",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingleObjective {
    Ngd,
    Click,
    NgdPlusClick,
    Gd,
    Weighted,
}

impl SingleObjective {
    pub fn as_str(&self) -> &'static str {
        match self {
            SingleObjective::Ngd => "ngd",
            SingleObjective::Click => "click",
            SingleObjective::NgdPlusClick => "ngd-plus-click",
            SingleObjective::Gd => "gd",
            SingleObjective::Weighted => "weighted",
        }
    }
}

/// Which monetary objective leads the three-step sequence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageOrder {
    #[default]
    RevenueFirst,
    ClickFirst,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KnobConfig {
    pub mode: SolveMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<SingleObjective>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default)]
    pub stage_order: StageOrder,
}

impl KnobConfig {
    pub fn new(mode: SolveMode) -> Self {
        KnobConfig {
            mode,
            objective: None,
            gamma: None,
            xi: None,
            psi: None,
            omega: None,
            eta: None,
            stage_order: StageOrder::default(),
        }
    }

    fn need(&self, value: Option<f64>, knob: &'static str) -> Result<f64> {
        value.ok_or(Error::MissingKnob { mode: self.mode.as_str(), knob })
    }

    fn fraction(&self, value: Option<f64>, knob: &'static str) -> Result<f64> {
        let v = self.need(value, knob)?;
        if v > 0.0 && v <= 1.0 {
            Ok(v)
        } else {
            Err(Error::KnobOutOfRange { knob, value: v, range: "(0, 1]" })
        }
    }

    fn positive(&self, value: Option<f64>, knob: &'static str) -> Result<f64> {
        let v = self.need(value, knob)?;
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(Error::KnobOutOfRange { knob, value: v, range: "(0, inf)" })
        }
    }

    fn nonnegative(&self, value: Option<f64>, knob: &'static str) -> Result<f64> {
        let v = self.need(value, knob)?;
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(Error::KnobOutOfRange { knob, value: v, range: "[0, inf)" })
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SolveMode::Baseline => Ok(()),
            SolveMode::Single => {
                let objective = self.objective.ok_or(Error::MissingKnob {
                    mode: self.mode.as_str(),
                    knob: "objective",
                })?;
                match objective {
                    SingleObjective::Ngd | SingleObjective::Click | SingleObjective::Gd => Ok(()),
                    SingleObjective::NgdPlusClick => self.nonnegative(self.xi, "xi").map(|_| ()),
                    SingleObjective::Weighted => {
                        self.positive(self.gamma, "gamma")?;
                        self.nonnegative(self.xi, "xi").map(|_| ())
                    }
                }
            }
            SolveMode::TwoStepA => {
                self.nonnegative(self.xi, "xi")?;
                self.fraction(self.psi, "psi").map(|_| ())
            }
            SolveMode::TwoStepB => {
                self.positive(self.gamma, "gamma")?;
                self.fraction(self.omega, "omega").map(|_| ())
            }
            SolveMode::TwoStepC => {
                self.positive(self.gamma, "gamma")?;
                self.nonnegative(self.xi, "xi")?;
                self.fraction(self.eta, "eta").map(|_| ())
            }
            SolveMode::ThreeStep => {
                self.fraction(self.eta, "eta")?;
                self.fraction(self.omega, "omega").map(|_| ())
            }
        }
    }
}

/// One imposed floor: which optimum it derives from, the fraction applied,
/// and what the final solve attained.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FloorRecord {
    pub label: String,
    pub source_optimum: f64,
    pub fraction: f64,
    pub floor: f64,
    pub attained: f64,
    pub multiplier: f64,
    pub binding: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageTrace {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_star_star: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub floors: Vec<FloorRecord>,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub allocation: Allocation,
    pub duals: DualSolution,
    pub objectives: Objectives,
    /// The final stage's own objective value, for cross-checking against
    /// recomputed metrics. Baseline routing has none.
    pub solver_objective: Option<f64>,
    pub trace: StageTrace,
    pub trim: TrimReport,
    pub recovered_gamma: Option<f64>,
}

/// Trim once, then run the configured pipeline on the trimmed graph.
pub fn run(graph: &AllocationGraph, knobs: &KnobConfig, tol: f64) -> Result<RunResult> {
    knobs.validate()?;
    let trimmed = make_feasible(graph)?;
    run_trimmed(&trimmed.graph, &trimmed.report, &trimmed.witness, knobs, tol)
}

fn run_trimmed(
    graph: &AllocationGraph,
    trim: &TrimReport,
    witness: &Allocation,
    knobs: &KnobConfig,
    tol: f64,
) -> Result<RunResult> {
    match knobs.mode {
        SolveMode::Baseline => Ok(baseline_result(graph, trim, witness)),
        SolveMode::Single => {
            let objective = knobs.objective.expect("validated");
            match objective {
                SingleObjective::Ngd => {
                    let (allocation, duals, value) = lp_stage(graph, LinearStage::ngd(graph), &[])?;
                    let trace = StageTrace { r_star: Some(value), ..StageTrace::default() };
                    Ok(assemble(graph, trim, allocation, duals, Some(value), trace, None))
                }
                SingleObjective::Click => {
                    let (allocation, duals, value) =
                        lp_stage(graph, LinearStage::click(graph), &[])?;
                    let trace = StageTrace { p_star: Some(value), ..StageTrace::default() };
                    Ok(assemble(graph, trim, allocation, duals, Some(value), trace, None))
                }
                SingleObjective::NgdPlusClick => {
                    let xi = knobs.xi.expect("validated");
                    let (allocation, duals, value) =
                        lp_stage(graph, LinearStage::monetary(graph, xi), &[])?;
                    let trace = StageTrace { m_star: Some(value), ..StageTrace::default() };
                    Ok(assemble(graph, trim, allocation, duals, Some(value), trace, None))
                }
                SingleObjective::Gd => {
                    let solve =
                        solve_stage(graph, &QpStageSpec::representativeness_only(), &qp_options(tol))?;
                    let objective = solve.objective;
                    Ok(assemble(
                        graph,
                        trim,
                        solve.allocation,
                        solve.duals,
                        Some(objective),
                        StageTrace::default(),
                        None,
                    ))
                }
                SingleObjective::Weighted => {
                    let gamma = knobs.gamma.expect("validated");
                    let xi = knobs.xi.expect("validated");
                    let solve =
                        solve_stage(graph, &QpStageSpec::weighted(gamma, xi), &qp_options(tol))?;
                    let objective = solve.objective;
                    Ok(assemble(
                        graph,
                        trim,
                        solve.allocation,
                        solve.duals,
                        Some(objective),
                        StageTrace::default(),
                        None,
                    ))
                }
            }
        }
        SolveMode::TwoStepA => {
            let xi = knobs.xi.expect("validated");
            let m_star = stage_optimum(graph, LinearStage::monetary(graph, xi))?;
            finish_two_step_a(graph, trim, xi, knobs.psi.expect("validated"), m_star, tol)
        }
        SolveMode::TwoStepB => {
            let p_star = stage_optimum(graph, LinearStage::click(graph))?;
            finish_two_step_b(
                graph,
                trim,
                knobs.gamma.expect("validated"),
                knobs.omega.expect("validated"),
                p_star,
                tol,
            )
        }
        SolveMode::TwoStepC => {
            let r_star = stage_optimum(graph, LinearStage::ngd(graph))?;
            finish_two_step_c(
                graph,
                trim,
                knobs.gamma.expect("validated"),
                knobs.xi.expect("validated"),
                knobs.eta.expect("validated"),
                r_star,
                tol,
            )
        }
        SolveMode::ThreeStep => {
            let eta = knobs.eta.expect("validated");
            let omega = knobs.omega.expect("validated");
            let (first, second) = three_step_optima(graph, eta, omega, knobs.stage_order)?;
            finish_three_step(graph, trim, eta, omega, knobs.stage_order, first, second, tol)
        }
    }
}

pub fn run_baseline(graph: &AllocationGraph) -> Result<RunResult> {
    run(graph, &KnobConfig::new(SolveMode::Baseline), 1e-8)
}

pub fn run_single(
    graph: &AllocationGraph,
    objective: SingleObjective,
    gamma: Option<f64>,
    xi: Option<f64>,
    tol: f64,
) -> Result<RunResult> {
    let mut knobs = KnobConfig::new(SolveMode::Single);
    knobs.objective = Some(objective);
    knobs.gamma = gamma;
    knobs.xi = xi;
    run(graph, &knobs, tol)
}

pub fn run_two_step_a(graph: &AllocationGraph, xi: f64, psi: f64, tol: f64) -> Result<RunResult> {
    let mut knobs = KnobConfig::new(SolveMode::TwoStepA);
    knobs.xi = Some(xi);
    knobs.psi = Some(psi);
    run(graph, &knobs, tol)
}

pub fn run_two_step_b(graph: &AllocationGraph, gamma: f64, omega: f64, tol: f64) -> Result<RunResult> {
    let mut knobs = KnobConfig::new(SolveMode::TwoStepB);
    knobs.gamma = Some(gamma);
    knobs.omega = Some(omega);
    run(graph, &knobs, tol)
}

pub fn run_two_step_c(
    graph: &AllocationGraph,
    gamma: f64,
    xi: f64,
    eta: f64,
    tol: f64,
) -> Result<RunResult> {
    let mut knobs = KnobConfig::new(SolveMode::TwoStepC);
    knobs.gamma = Some(gamma);
    knobs.xi = Some(xi);
    knobs.eta = Some(eta);
    run(graph, &knobs, tol)
}

pub fn run_three_step(
    graph: &AllocationGraph,
    eta: f64,
    omega: f64,
    order: StageOrder,
    tol: f64,
) -> Result<RunResult> {
    let mut knobs = KnobConfig::new(SolveMode::ThreeStep);
    knobs.eta = Some(eta);
    knobs.omega = Some(omega);
    knobs.stage_order = order;
    run(graph, &knobs, tol)
}

fn qp_options(tol: f64) -> QpOptions {
    QpOptions { tol: tol.min(1e-8), ..QpOptions::default() }
}

fn baseline_result(graph: &AllocationGraph, trim: &TrimReport, witness: &Allocation) -> RunResult {
    let duals = DualSolution {
        alpha: vec![0.0; graph.campaign_count()],
        beta: vec![0.0; graph.supply_count()],
        lambda: vec![0.0; graph.edges.len()],
        mu: vec![0.0; graph.supply_count()],
        rho: Vec::new(),
    };
    assemble(graph, trim, witness.clone(), duals, None, StageTrace::default(), None)
}

fn assemble(
    graph: &AllocationGraph,
    trim: &TrimReport,
    allocation: Allocation,
    duals: DualSolution,
    solver_objective: Option<f64>,
    trace: StageTrace,
    recovered_gamma: Option<f64>,
) -> RunResult {
    let objectives = compute_objectives(graph, &allocation);
    RunResult {
        allocation,
        duals,
        objectives,
        solver_objective,
        trace,
        trim: trim.clone(),
        recovered_gamma,
    }
}

/// Linear objective t·y + q·z over the allocation polytope.
struct LinearStage {
    t: Vec<f64>,
    q: Vec<f64>,
}

impl LinearStage {
    fn ngd(graph: &AllocationGraph) -> Self {
        LinearStage {
            t: vec![0.0; graph.edges.len()],
            q: graph.supplies.iter().map(|s| s.price).collect(),
        }
    }

    fn click(graph: &AllocationGraph) -> Self {
        LinearStage {
            t: graph.edges.iter().map(|e| e.value).collect(),
            q: vec![0.0; graph.supply_count()],
        }
    }

    fn monetary(graph: &AllocationGraph, xi: f64) -> Self {
        LinearStage {
            t: graph.edges.iter().map(|e| xi * e.value).collect(),
            q: graph.supplies.iter().map(|s| s.price).collect(),
        }
    }
}

/// Maximizes a linear stage via min-cost flow. Node order: supplies,
/// campaigns, sink; arc order: graph edges, then one spot arc per supply.
/// Side-constraint coefficients index this arc order.
fn lp_stage(
    graph: &AllocationGraph,
    stage: LinearStage,
    floors: &[SideConstraint],
) -> Result<(Allocation, DualSolution, f64)> {
    let n = graph.supply_count();
    let m = graph.campaign_count();
    let sink = n + m;
    let mut supply = vec![0.0; n + m + 1];
    for (i, node) in graph.supplies.iter().enumerate() {
        supply[i] = node.weight;
    }
    for (j, campaign) in graph.campaigns.iter().enumerate() {
        supply[n + j] = -campaign.demand;
    }
    supply[sink] = -(graph.total_supply() - graph.total_demand());

    let mut arcs = Vec::with_capacity(graph.edges.len() + n);
    for edge in &graph.edges {
        arcs.push(FlowArc {
            from: edge.supply,
            to: n + edge.campaign,
            cost: -stage.t[arcs.len()],
            capacity: f64::INFINITY,
        });
    }
    for i in 0..n {
        arcs.push(FlowArc { from: i, to: sink, cost: -stage.q[i], capacity: f64::INFINITY });
    }

    let problem = FlowProblem { node_count: n + m + 1, supply, arcs };
    let solution = solve_with_side_constraints(&problem, floors)?.optimal()?;

    let e_count = graph.edges.len();
    let y = solution.flow[..e_count].to_vec();
    let z = solution.flow[e_count..e_count + n].to_vec();

    // Shift the linear terms by the floor multipliers so reduced costs land
    // in the same dual convention as the quadratic stages.
    let mut t_shift = stage.t.clone();
    let mut q_shift = stage.q.clone();
    for (f, constraint) in floors.iter().enumerate() {
        let rho = solution.multipliers[f];
        for &(arc, coeff) in &constraint.coeffs {
            if arc < e_count {
                t_shift[arc] += rho * coeff;
            } else {
                q_shift[arc - e_count] += rho * coeff;
            }
        }
    }

    let pi = &solution.potentials;
    let alpha: Vec<f64> = (0..m).map(|j| pi[sink] - pi[n + j]).collect();
    let beta: Vec<f64> = (0..n).map(|i| pi[sink] - pi[i]).collect();
    let lambda: Vec<f64> = graph
        .edges
        .iter()
        .enumerate()
        .map(|(e, edge)| (beta[edge.supply] - alpha[edge.campaign] - t_shift[e]).max(0.0))
        .collect();
    let mu: Vec<f64> = (0..n).map(|i| (beta[i] - q_shift[i]).max(0.0)).collect();

    let value = -solution.objective;
    let duals = DualSolution { alpha, beta, lambda, mu, rho: solution.multipliers.clone() };
    Ok((Allocation { y, z }, duals, value))
}

fn stage_optimum(graph: &AllocationGraph, stage: LinearStage) -> Result<f64> {
    lp_stage(graph, stage, &[]).map(|(_, _, value)| value)
}

/// Spot-revenue floor expressed over the flow solver's arc order.
fn revenue_side_constraint(graph: &AllocationGraph, bound: f64) -> SideConstraint {
    let e_count = graph.edges.len();
    SideConstraint {
        label: "spot revenue".into(),
        coeffs: graph
            .supplies
            .iter()
            .enumerate()
            .filter(|(_, s)| s.price != 0.0)
            .map(|(i, s)| (e_count + i, s.price))
            .collect(),
        bound,
    }
}

fn click_side_constraint(graph: &AllocationGraph, bound: f64) -> SideConstraint {
    SideConstraint {
        label: "click value".into(),
        coeffs: graph
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.value != 0.0)
            .map(|(e, edge)| (e, edge.value))
            .collect(),
        bound,
    }
}

fn revenue_floor(graph: &AllocationGraph, bound: f64) -> QpFloor {
    QpFloor {
        label: "spot revenue".into(),
        y_coeffs: vec![0.0; graph.edges.len()],
        z_coeffs: graph.supplies.iter().map(|s| s.price).collect(),
        bound,
    }
}

fn click_floor(graph: &AllocationGraph, bound: f64) -> QpFloor {
    QpFloor {
        label: "click value".into(),
        y_coeffs: graph.edges.iter().map(|e| e.value).collect(),
        z_coeffs: vec![0.0; graph.supply_count()],
        bound,
    }
}

fn monetary_floor(graph: &AllocationGraph, xi: f64, bound: f64) -> QpFloor {
    QpFloor {
        label: "monetary value".into(),
        y_coeffs: graph.edges.iter().map(|e| xi * e.value).collect(),
        z_coeffs: graph.supplies.iter().map(|s| s.price).collect(),
        bound,
    }
}

fn floor_records(specs: &[(String, f64, f64, f64)], solve: &QpSolve) -> Vec<FloorRecord> {
    specs
        .iter()
        .enumerate()
        .map(|(f, (label, optimum, fraction, floor))| FloorRecord {
            label: label.clone(),
            source_optimum: *optimum,
            fraction: *fraction,
            floor: *floor,
            attained: solve.floor_values[f],
            multiplier: solve.duals.rho[f],
            binding: solve.duals.rho[f] > BINDING_TOL,
        })
        .collect()
}

fn finish_two_step_a(
    graph: &AllocationGraph,
    trim: &TrimReport,
    xi: f64,
    psi: f64,
    m_star: f64,
    tol: f64,
) -> Result<RunResult> {
    let bound = psi * m_star;
    let spec = QpStageSpec::representativeness_only().with_floor(monetary_floor(graph, xi, bound));
    let solve = solve_stage(graph, &spec, &qp_options(tol))?;
    let trace = StageTrace {
        m_star: Some(m_star),
        floors: floor_records(
            &[("monetary value".into(), m_star, psi, bound)],
            &solve,
        ),
        ..StageTrace::default()
    };
    let gamma = recover_gamma(solve.duals.rho[0]);
    let objective = solve.objective;
    Ok(assemble(graph, trim, solve.allocation, solve.duals, Some(objective), trace, gamma))
}

fn finish_two_step_b(
    graph: &AllocationGraph,
    trim: &TrimReport,
    gamma: f64,
    omega: f64,
    p_star: f64,
    tol: f64,
) -> Result<RunResult> {
    let bound = omega * p_star;
    let spec = QpStageSpec {
        gamma,
        xi: 0.0,
        include_f2: false,
        include_f3: true,
        floors: vec![click_floor(graph, bound)],
    };
    let solve = solve_stage(graph, &spec, &qp_options(tol))?;
    let trace = StageTrace {
        p_star: Some(p_star),
        floors: floor_records(&[("click value".into(), p_star, omega, bound)], &solve),
        ..StageTrace::default()
    };
    let objective = solve.objective;
    Ok(assemble(graph, trim, solve.allocation, solve.duals, Some(objective), trace, None))
}

fn finish_two_step_c(
    graph: &AllocationGraph,
    trim: &TrimReport,
    gamma: f64,
    xi: f64,
    eta: f64,
    r_star: f64,
    tol: f64,
) -> Result<RunResult> {
    let bound = eta * r_star;
    let spec = QpStageSpec {
        gamma,
        xi,
        include_f2: true,
        include_f3: false,
        floors: vec![revenue_floor(graph, bound)],
    };
    let solve = solve_stage(graph, &spec, &qp_options(tol))?;
    let trace = StageTrace {
        r_star: Some(r_star),
        floors: floor_records(&[("spot revenue".into(), r_star, eta, bound)], &solve),
        ..StageTrace::default()
    };
    let objective = solve.objective;
    Ok(assemble(graph, trim, solve.allocation, solve.duals, Some(objective), trace, None))
}

/// Stage-1 and stage-2 optima for the chosen order: (R*, P**) by default,
/// (P*, R**) reversed.
fn three_step_optima(
    graph: &AllocationGraph,
    eta: f64,
    omega: f64,
    order: StageOrder,
) -> Result<(f64, f64)> {
    match order {
        StageOrder::RevenueFirst => {
            let r_star = stage_optimum(graph, LinearStage::ngd(graph))?;
            let (_, _, p_star_star) = lp_stage(
                graph,
                LinearStage::click(graph),
                &[revenue_side_constraint(graph, eta * r_star)],
            )?;
            Ok((r_star, p_star_star))
        }
        StageOrder::ClickFirst => {
            let p_star = stage_optimum(graph, LinearStage::click(graph))?;
            let (_, _, r_star_star) = lp_stage(
                graph,
                LinearStage::ngd(graph),
                &[click_side_constraint(graph, omega * p_star)],
            )?;
            Ok((p_star, r_star_star))
        }
    }
}

fn finish_three_step(
    graph: &AllocationGraph,
    trim: &TrimReport,
    eta: f64,
    omega: f64,
    order: StageOrder,
    first: f64,
    second: f64,
    tol: f64,
) -> Result<RunResult> {
    let (revenue_bound, click_bound, trace_base, records);
    match order {
        StageOrder::RevenueFirst => {
            revenue_bound = eta * first;
            click_bound = omega * second;
            trace_base = StageTrace {
                r_star: Some(first),
                p_star_star: Some(second),
                ..StageTrace::default()
            };
            records = vec![
                ("spot revenue".to_string(), first, eta, revenue_bound),
                ("click value".to_string(), second, omega, click_bound),
            ];
        }
        StageOrder::ClickFirst => {
            click_bound = omega * first;
            revenue_bound = eta * second;
            trace_base = StageTrace {
                p_star: Some(first),
                r_star: Some(second),
                ..StageTrace::default()
            };
            records = vec![
                ("click value".to_string(), first, omega, click_bound),
                ("spot revenue".to_string(), second, eta, revenue_bound),
            ];
        }
    }
    let floors = match order {
        StageOrder::RevenueFirst => vec![
            revenue_floor(graph, revenue_bound),
            click_floor(graph, click_bound),
        ],
        StageOrder::ClickFirst => vec![
            click_floor(graph, click_bound),
            revenue_floor(graph, revenue_bound),
        ],
    };
    let spec = QpStageSpec { floors, ..QpStageSpec::representativeness_only() };
    let solve = solve_stage(graph, &spec, &qp_options(tol))?;
    let trace = StageTrace { floors: floor_records(&records, &solve), ..trace_base };
    let objective = solve.objective;
    Ok(assemble(graph, trim, solve.allocation, solve.duals, Some(objective), trace, None))
}

/// A sweepable knob.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knob {
    Gamma,
    Xi,
    Psi,
    Omega,
    Eta,
}

impl Knob {
    pub fn name(&self) -> &'static str {
        match self {
            Knob::Gamma => "gamma",
            Knob::Xi => "xi",
            Knob::Psi => "psi",
            Knob::Omega => "omega",
            Knob::Eta => "eta",
        }
    }

    fn apply(&self, config: &mut KnobConfig, value: f64) {
        match self {
            Knob::Gamma => config.gamma = Some(value),
            Knob::Xi => config.xi = Some(value),
            Knob::Psi => config.psi = Some(value),
            Knob::Omega => config.omega = Some(value),
            Knob::Eta => config.eta = Some(value),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub base: KnobConfig,
    /// One or two axes; the first is the primary (outer) knob.
    pub axes: Vec<(Knob, Vec<f64>)>,
}

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub knobs: Vec<(String, f64)>,
    pub result: RunResult,
}

/// Runs the grid. The instance is trimmed once and every stage-1 optimum is
/// computed once per distinct knob value it depends on, so grid points only
/// pay for their final stage. Results come back in grid order (primary axis
/// outermost) regardless of parallelism.
pub fn sweep(
    graph: &AllocationGraph,
    spec: &SweepSpec,
    tol: f64,
    parallel: bool,
) -> Result<Vec<SweepPoint>> {
    if spec.axes.is_empty() || spec.axes.len() > 2 {
        return Err(Error::InvalidInstance(format!(
            "sweep needs one or two axes, got {}",
            spec.axes.len()
        )));
    }
    for (knob, values) in &spec.axes {
        if values.is_empty() {
            return Err(Error::InvalidInstance(format!("empty grid for {}", knob.name())));
        }
    }

    let mut configs = Vec::new();
    let mut knob_values = Vec::new();
    match spec.axes.len() {
        1 => {
            let (knob, values) = &spec.axes[0];
            for &v in values {
                let mut config = spec.base.clone();
                knob.apply(&mut config, v);
                config.validate()?;
                knob_values.push(vec![(knob.name().to_string(), v)]);
                configs.push(config);
            }
        }
        _ => {
            let (primary, primary_values) = &spec.axes[0];
            let (secondary, secondary_values) = &spec.axes[1];
            for &a in primary_values {
                for &b in secondary_values {
                    let mut config = spec.base.clone();
                    primary.apply(&mut config, a);
                    secondary.apply(&mut config, b);
                    config.validate()?;
                    knob_values.push(vec![
                        (primary.name().to_string(), a),
                        (secondary.name().to_string(), b),
                    ]);
                    configs.push(config);
                }
            }
        }
    }

    let trimmed = make_feasible(graph)?;
    let stage1 = Stage1Cache::prepare(&trimmed.graph, &configs)?;

    let solve_point = |idx: usize| -> Result<SweepPoint> {
        let config = &configs[idx];
        let result = stage1.finish(&trimmed, config, tol)?;
        Ok(SweepPoint { knobs: knob_values[idx].clone(), result })
    };

    if parallel {
        (0..configs.len())
            .into_par_iter()
            .map(solve_point)
            .collect::<Result<Vec<_>>>()
    } else {
        (0..configs.len()).map(solve_point).collect()
    }
}

/// Knob-independent (or keyed by the one knob they depend on) stage-1
/// optima shared across a sweep.
struct Stage1Cache {
    /// M* keyed by ξ bits (two-step-a).
    monetary: Vec<(u64, f64)>,
    /// P* (two-step-b, reversed three-step).
    click: Option<f64>,
    /// R* (two-step-c, default three-step).
    revenue: Option<f64>,
    /// P** keyed by η bits (default three-step).
    click_under_revenue: Vec<(u64, f64)>,
    /// R** keyed by ω bits (reversed three-step).
    revenue_under_click: Vec<(u64, f64)>,
}

fn lookup(table: &[(u64, f64)], key: f64) -> f64 {
    let bits = key.to_bits();
    table
        .iter()
        .find(|(k, _)| *k == bits)
        .map(|(_, v)| *v)
        .expect("stage-1 cache covers every grid value")
}

impl Stage1Cache {
    fn prepare(graph: &AllocationGraph, configs: &[KnobConfig]) -> Result<Self> {
        let mut cache = Stage1Cache {
            monetary: Vec::new(),
            click: None,
            revenue: None,
            click_under_revenue: Vec::new(),
            revenue_under_click: Vec::new(),
        };
        for config in configs {
            match config.mode {
                SolveMode::TwoStepA => {
                    let xi = config.xi.expect("validated");
                    if !cache.monetary.iter().any(|(k, _)| *k == xi.to_bits()) {
                        let value = stage_optimum(graph, LinearStage::monetary(graph, xi))?;
                        cache.monetary.push((xi.to_bits(), value));
                    }
                }
                SolveMode::TwoStepB => {
                    if cache.click.is_none() {
                        cache.click = Some(stage_optimum(graph, LinearStage::click(graph))?);
                    }
                }
                SolveMode::TwoStepC => {
                    if cache.revenue.is_none() {
                        cache.revenue = Some(stage_optimum(graph, LinearStage::ngd(graph))?);
                    }
                }
                SolveMode::ThreeStep => match config.stage_order {
                    StageOrder::RevenueFirst => {
                        if cache.revenue.is_none() {
                            cache.revenue = Some(stage_optimum(graph, LinearStage::ngd(graph))?);
                        }
                        let eta = config.eta.expect("validated");
                        if !cache.click_under_revenue.iter().any(|(k, _)| *k == eta.to_bits()) {
                            let r_star = cache.revenue.expect("just filled");
                            let (_, _, value) = lp_stage(
                                graph,
                                LinearStage::click(graph),
                                &[revenue_side_constraint(graph, eta * r_star)],
                            )?;
                            cache.click_under_revenue.push((eta.to_bits(), value));
                        }
                    }
                    StageOrder::ClickFirst => {
                        if cache.click.is_none() {
                            cache.click = Some(stage_optimum(graph, LinearStage::click(graph))?);
                        }
                        let omega = config.omega.expect("validated");
                        if !cache.revenue_under_click.iter().any(|(k, _)| *k == omega.to_bits()) {
                            let p_star = cache.click.expect("just filled");
                            let (_, _, value) = lp_stage(
                                graph,
                                LinearStage::ngd(graph),
                                &[click_side_constraint(graph, omega * p_star)],
                            )?;
                            cache.revenue_under_click.push((omega.to_bits(), value));
                        }
                    }
                },
                SolveMode::Baseline | SolveMode::Single => {}
            }
        }
        Ok(cache)
    }

    fn finish(
        &self,
        trimmed: &crate::feasibility::TrimOutcome,
        config: &KnobConfig,
        tol: f64,
    ) -> Result<RunResult> {
        let graph = &trimmed.graph;
        let trim = &trimmed.report;
        match config.mode {
            SolveMode::TwoStepA => {
                let xi = config.xi.expect("validated");
                let m_star = lookup(&self.monetary, xi);
                finish_two_step_a(graph, trim, xi, config.psi.expect("validated"), m_star, tol)
            }
            SolveMode::TwoStepB => finish_two_step_b(
                graph,
                trim,
                config.gamma.expect("validated"),
                config.omega.expect("validated"),
                self.click.expect("prepared"),
                tol,
            ),
            SolveMode::TwoStepC => finish_two_step_c(
                graph,
                trim,
                config.gamma.expect("validated"),
                config.xi.expect("validated"),
                config.eta.expect("validated"),
                self.revenue.expect("prepared"),
                tol,
            ),
            SolveMode::ThreeStep => {
                let eta = config.eta.expect("validated");
                let omega = config.omega.expect("validated");
                let (first, second) = match config.stage_order {
                    StageOrder::RevenueFirst => (
                        self.revenue.expect("prepared"),
                        lookup(&self.click_under_revenue, eta),
                    ),
                    StageOrder::ClickFirst => (
                        self.click.expect("prepared"),
                        lookup(&self.revenue_under_click, omega),
                    ),
                };
                finish_three_step(graph, trim, eta, omega, config.stage_order, first, second, tol)
            }
            SolveMode::Baseline | SolveMode::Single => {
                run_trimmed(graph, trim, &trimmed.witness, config, tol)
            }
        }
    }
}

/// Indices of the Pareto non-dominated results on the given axes, ordered
/// by the first axis (ties keep input order).
pub fn extract_frontier(results: &[RunResult], axes: &[Axis]) -> Vec<usize> {
    let rows: Vec<MetricsRow> =
        results.iter().map(|r| MetricsRow::raw("", &r.objectives)).collect();
    let mut keep = pareto_indices(&rows, axes);
    if let Some(first) = axes.first() {
        keep.sort_by(|&a, &b| {
            first
                .value(&rows[a])
                .total_cmp(&first.value(&rows[b]))
                .then(a.cmp(&b))
        });
    }
    keep
}
