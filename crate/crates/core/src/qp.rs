//! Strictly concave quadratic stages: the weighted blend of
//! representativeness, click value and spot revenue, and the
//! representativeness-maximizing stages run under monetary floors.
//!
//! The objective is separable per edge, so the solver works entirely in the
//! dual: given demand duals α and supply duals β, the optimal primal is the
//! closed-form clipped map
//!
//! ```text
//! y_ij = max(0, θ_ij (1 + (t_ij + α_j − β_i) / (γ V_j)))
//! ```
//!
//! and each α_j (or β_i) has an exact piecewise-linear coordinate root that
//! restores its constraint, found by sorting breakpoints. Cyclic exact
//! coordinate ascent converges on the dual; floors enter as Lagrangian
//! multipliers ρ found by bracketed bisection on the floor surplus, which is
//! monotone in ρ because the primal optimum is unique. Two floors alternate
//! coordinate searches until both complementary-slackness conditions hold.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Allocation, AllocationGraph};

/// Linear floor `y_coeffs·y + z_coeffs·z ≥ bound` over an allocation.
#[derive(Clone, Debug)]
pub struct QpFloor {
    pub label: String,
    pub y_coeffs: Vec<f64>,
    pub z_coeffs: Vec<f64>,
    pub bound: f64,
}

impl QpFloor {
    pub fn value(&self, allocation: &Allocation) -> f64 {
        let y: f64 = self
            .y_coeffs
            .iter()
            .zip(&allocation.y)
            .map(|(u, y)| u * y)
            .sum();
        let z: f64 = self
            .z_coeffs
            .iter()
            .zip(&allocation.z)
            .map(|(v, z)| v * z)
            .sum();
        y + z
    }
}

/// One quadratic stage: maximize γF1 (+ ξF2 if included) (+ F3 if included)
/// subject to flow constraints and at most two floors.
#[derive(Clone, Debug)]
pub struct QpStageSpec {
    pub gamma: f64,
    pub xi: f64,
    pub include_f2: bool,
    pub include_f3: bool,
    pub floors: Vec<QpFloor>,
}

impl QpStageSpec {
    /// γF1 + ξF2 + F3, the single weighted objective.
    pub fn weighted(gamma: f64, xi: f64) -> Self {
        QpStageSpec { gamma, xi, include_f2: true, include_f3: true, floors: Vec::new() }
    }

    /// Pure representativeness.
    pub fn representativeness_only() -> Self {
        QpStageSpec { gamma: 1.0, xi: 0.0, include_f2: false, include_f3: false, floors: Vec::new() }
    }

    pub fn with_floor(mut self, floor: QpFloor) -> Self {
        self.floors.push(floor);
        self
    }
}

/// Dual variables in the equality-constraint convention: α per campaign,
/// β per supply, λ per edge, μ per supply, ρ per floor.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SolveStats {
    /// Full coordinate sweeps over all duals.
    pub iterations: usize,
    /// Inner solves spent locating floor multipliers.
    pub floor_evaluations: usize,
    pub kkt_residual: f64,
    #[serde(skip)]
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug)]
pub struct QpSolve {
    pub allocation: Allocation,
    pub duals: DualSolution,
    pub stats: SolveStats,
    /// Stage objective γF1 + included linear terms, from the final primal.
    pub objective: f64,
    /// Attained value of each floor functional.
    pub floor_values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct QpOptions {
    /// Relative primal-residual target per constraint.
    pub tol: f64,
    /// Sweeps needed grow roughly linearly with a floor's multiplier, and a
    /// floor pinned at its stage optimum can push the multiplier past 1e4,
    /// so the budget is sized for that case rather than the typical run.
    pub max_sweeps: usize,
    /// Visit campaigns and supplies in reverse order (uniqueness checks).
    pub sweep_reversed: bool,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions { tol: 1e-9, max_sweeps: 500_000, sweep_reversed: false }
    }
}

/// Residuals of the full KKT system at a candidate primal/dual pair.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KktReport {
    pub stationarity_y: f64,
    pub stationarity_z: f64,
    pub complementary_slackness: f64,
    pub demand_residual: f64,
    pub supply_residual: f64,
    pub negativity: f64,
    pub floor_violation: f64,
}

impl KktReport {
    fn merged(&self) -> f64 {
        self.stationarity_y
            .max(self.stationarity_z)
            .max(self.complementary_slackness)
            .max(self.demand_residual)
            .max(self.supply_residual)
            .max(self.negativity)
            .max(self.floor_violation)
    }
}

/// γ = 1/ρ when the floor binds; an inactive floor has no finite equivalent.
pub fn recover_gamma(rho: f64) -> Option<f64> {
    if rho > 1e-12 { Some(1.0 / rho) } else { None }
}

pub fn solve_weighted(
    graph: &AllocationGraph,
    gamma: f64,
    xi: f64,
    options: &QpOptions,
) -> Result<QpSolve> {
    solve_stage(graph, &QpStageSpec::weighted(gamma, xi), options)
}

pub fn solve_f1_with_floors(
    graph: &AllocationGraph,
    floors: Vec<QpFloor>,
    options: &QpOptions,
) -> Result<QpSolve> {
    let mut spec = QpStageSpec::representativeness_only();
    spec.floors = floors;
    solve_stage(graph, &spec, options)
}

pub fn solve_stage(
    graph: &AllocationGraph,
    spec: &QpStageSpec,
    options: &QpOptions,
) -> Result<QpSolve> {
    let started = Instant::now();
    if !(spec.gamma.is_finite() && spec.gamma > 0.0) {
        return Err(Error::KnobOutOfRange {
            knob: "gamma",
            value: spec.gamma,
            range: "(0, inf) — linear-only objectives belong to the flow solver",
        });
    }
    if spec.floors.len() > 2 {
        return Err(Error::InvalidInstance(format!(
            "{} floors attached; at most two are supported",
            spec.floors.len()
        )));
    }
    for floor in &spec.floors {
        if floor.y_coeffs.len() != graph.edges.len()
            || floor.z_coeffs.len() != graph.supply_count()
        {
            return Err(Error::InvalidInstance(format!(
                "floor `{}` has wrong coefficient dimensions",
                floor.label
            )));
        }
        if !floor.bound.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "floor `{}` bound is not finite",
                floor.label
            )));
        }
    }

    let mut engine = Engine::new(graph, spec, options)?;
    let mut stats = SolveStats::default();

    match spec.floors.len() {
        0 => {
            engine.refresh_costs();
            stats.iterations += engine.converge()?;
        }
        1 => {
            search_floor(&mut engine, 0, &mut stats)?;
        }
        2 => {
            let ftol: Vec<f64> = (0..2).map(|f| engine.floor_tol(f)).collect();
            let mut settled = false;
            for _ in 0..60 {
                search_floor(&mut engine, 0, &mut stats)?;
                search_floor(&mut engine, 1, &mut stats)?;
                let ok = (0..2).all(|f| {
                    let s = engine.surplus(f);
                    s >= -ftol[f] && (engine.rho[f] <= 1e-12 || s.abs() <= ftol[f])
                });
                if ok {
                    settled = true;
                    break;
                }
            }
            if !settled {
                return Err(Error::JointlyInfeasibleFloors(
                    spec.floors[0].label.clone(),
                    spec.floors[1].label.clone(),
                ));
            }
        }
        _ => unreachable!(),
    }

    let solve = engine.extract(&mut stats);
    stats.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(QpSolve { stats, ..solve })
}

/// Coordinate search on one floor multiplier: leave it at zero when the
/// floor is already met, otherwise bracket and bisect on the surplus, which
/// is continuous and non-decreasing in ρ.
fn search_floor(engine: &mut Engine, f: usize, stats: &mut SolveStats) -> Result<()> {
    let ftol = engine.floor_tol(f);
    engine.rho[f] = 0.0;
    engine.refresh_costs();
    stats.iterations += engine.converge()?;
    stats.floor_evaluations += 1;
    if engine.surplus(f) >= -ftol {
        return Ok(());
    }

    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        engine.rho[f] = hi;
        engine.refresh_costs();
        stats.iterations += engine.converge()?;
        stats.floor_evaluations += 1;
        let s = engine.surplus(f);
        if s >= 0.0 {
            break;
        }
        if hi >= 1e12 {
            if s >= -ftol {
                return Ok(());
            }
            return Err(Error::InfeasibleFloor(format!(
                "{} (requires {:.6}, short by {:.3e} at multiplier cap)",
                engine.floors[f].label,
                engine.floors[f].bound,
                -s
            )));
        }
        lo = hi;
        hi *= 8.0;
    }

    for _ in 0..200 {
        if engine.surplus(f).abs() <= ftol || hi - lo <= 1e-13 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        engine.rho[f] = mid;
        engine.refresh_costs();
        stats.iterations += engine.converge()?;
        stats.floor_evaluations += 1;
        if engine.surplus(f) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Land on the feasible side of the interval.
    if engine.surplus(f) < -ftol {
        engine.rho[f] = hi;
        engine.refresh_costs();
        stats.iterations += engine.converge()?;
        stats.floor_evaluations += 1;
    }
    Ok(())
}

struct Engine<'g> {
    graph: &'g AllocationGraph,
    gamma: f64,
    floors: &'g [QpFloor],
    /// Objective coefficient on y before floor terms (ξw or 0).
    base_t: Vec<f64>,
    /// Objective coefficient on z before floor terms (r or 0).
    base_q: Vec<f64>,
    rho: Vec<f64>,
    /// t̃_e − q̃_i(e): net linear reward for moving a unit from spot to edge e.
    cost: Vec<f64>,
    /// q̃_i: linear reward of spot for supply i, including floor terms.
    q_tilde: Vec<f64>,
    /// A_e = θ_e / (γ V_j): inverse curvature per edge.
    a_coef: Vec<f64>,
    alpha: Vec<f64>,
    /// Reduced supply duals β̂ ≥ 0; reported β = β̂ + q̃.
    beta: Vec<f64>,
    /// Active edges (θ > 0) grouped per campaign / per supply.
    camp_edges: Vec<Vec<usize>>,
    supply_edges: Vec<Vec<usize>>,
    y: Vec<f64>,
    scratch: Vec<(f64, f64)>,
    tol: f64,
    max_sweeps: usize,
    reversed: bool,
}

impl<'g> Engine<'g> {
    fn new(graph: &'g AllocationGraph, spec: &'g QpStageSpec, options: &QpOptions) -> Result<Self> {
        let n = graph.supply_count();
        let m = graph.campaign_count();
        let e = graph.edges.len();

        let mut camp_edges = vec![Vec::new(); m];
        let mut supply_edges = vec![Vec::new(); n];
        let mut a_coef = vec![0.0; e];
        for (idx, edge) in graph.edges.iter().enumerate() {
            if edge.target > 0.0 {
                camp_edges[edge.campaign].push(idx);
                supply_edges[edge.supply].push(idx);
                a_coef[idx] = edge.target / (spec.gamma * graph.campaigns[edge.campaign].priority);
            }
        }
        for (j, campaign) in graph.campaigns.iter().enumerate() {
            if campaign.demand > 0.0 && camp_edges[j].is_empty() {
                return Err(Error::InvalidInstance(format!(
                    "campaign `{}` has demand {} but no eligible supply weight; trim first",
                    campaign.id, campaign.demand
                )));
            }
        }

        let base_t: Vec<f64> = graph
            .edges
            .iter()
            .map(|edge| if spec.include_f2 { spec.xi * edge.value } else { 0.0 })
            .collect();
        let base_q: Vec<f64> = graph
            .supplies
            .iter()
            .map(|s| if spec.include_f3 { s.price } else { 0.0 })
            .collect();

        let max_degree = camp_edges
            .iter()
            .map(Vec::len)
            .chain(supply_edges.iter().map(Vec::len))
            .max()
            .unwrap_or(0);

        Ok(Engine {
            graph,
            gamma: spec.gamma,
            floors: &spec.floors,
            base_t,
            base_q,
            rho: vec![0.0; spec.floors.len()],
            cost: vec![0.0; e],
            q_tilde: vec![0.0; n],
            a_coef,
            alpha: vec![0.0; m],
            beta: vec![0.0; n],
            camp_edges,
            supply_edges,
            y: vec![0.0; e],
            scratch: Vec::with_capacity(max_degree),
            tol: options.tol,
            max_sweeps: options.max_sweeps,
            reversed: options.sweep_reversed,
        })
    }

    /// Rebuilds the multiplier-inflated linear terms after ρ moves.
    fn refresh_costs(&mut self) {
        for (i, q) in self.q_tilde.iter_mut().enumerate() {
            *q = self.base_q[i];
            for (f, floor) in self.floors.iter().enumerate() {
                *q += self.rho[f] * floor.z_coeffs[i];
            }
        }
        for (e, c) in self.cost.iter_mut().enumerate() {
            let mut t = self.base_t[e];
            for (f, floor) in self.floors.iter().enumerate() {
                t += self.rho[f] * floor.y_coeffs[e];
            }
            *c = t - self.q_tilde[self.graph.edges[e].supply];
        }
    }

    fn floor_tol(&self, f: usize) -> f64 {
        1e-7 * (1.0 + self.floors[f].bound.abs())
    }

    #[inline]
    fn gv(&self, e: usize) -> f64 {
        self.gamma * self.graph.campaigns[self.graph.edges[e].campaign].priority
    }

    /// y from the clipped stationarity map at the current duals.
    fn primal(&self, e: usize) -> f64 {
        let edge = &self.graph.edges[e];
        let gv = self.gv(e);
        let shift = self.cost[e] + self.alpha[edge.campaign] - self.beta[edge.supply];
        (edge.target * (1.0 + shift / gv)).max(0.0)
    }

    fn refresh_primal(&mut self) {
        for e in 0..self.y.len() {
            self.y[e] = if self.a_coef[e] > 0.0 { self.primal(e) } else { 0.0 };
        }
    }

    /// Exact root of Σ_e y_e(α) = d_j; y is increasing and piecewise linear
    /// in α, with one breakpoint per edge.
    fn update_alpha(&mut self, j: usize) -> f64 {
        let demand = self.graph.campaigns[j].demand;
        let edges = &self.camp_edges[j];
        if edges.is_empty() {
            let old = self.alpha[j];
            self.alpha[j] = 0.0;
            return (old - self.alpha[j]).abs();
        }
        self.scratch.clear();
        for &e in edges {
            let gv = self.gv(e);
            let breakpoint = self.beta[self.graph.edges[e].supply] - self.cost[e] - gv;
            self.scratch.push((breakpoint, self.a_coef[e]));
        }
        let old = self.alpha[j];
        if demand <= 0.0 {
            // Any α at or below the first breakpoint zeroes the campaign.
            let min_b = self.scratch.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            self.alpha[j] = min_b - 1.0;
            return (old - self.alpha[j]).abs();
        }
        self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut slope = 0.0;
        let mut offset = 0.0;
        let k = self.scratch.len();
        let mut root = f64::NAN;
        for t in 0..k {
            let (b, a) = self.scratch[t];
            slope += a;
            offset += a * b;
            let upper = if t + 1 < k { self.scratch[t + 1].0 } else { f64::INFINITY };
            let candidate = (demand + offset) / slope;
            if candidate <= upper {
                root = candidate;
                break;
            }
        }
        self.alpha[j] = root;
        (old - root).abs()
    }

    /// Exact root of Σ_e y_e(β) = s_i on β ≥ 0, or β = 0 when supply is
    /// slack; y is decreasing in β.
    fn update_beta(&mut self, i: usize) -> f64 {
        let capacity = self.graph.supplies[i].weight;
        let edges = &self.supply_edges[i];
        let old = self.beta[i];
        if edges.is_empty() {
            self.beta[i] = 0.0;
            return (old - self.beta[i]).abs();
        }
        self.scratch.clear();
        let mut demand_at_zero = 0.0;
        for &e in edges {
            let gv = self.gv(e);
            let breakpoint = self.cost[e] + self.alpha[self.graph.edges[e].campaign] + gv;
            self.scratch.push((breakpoint, self.a_coef[e]));
            if breakpoint > 0.0 {
                demand_at_zero += self.a_coef[e] * breakpoint;
            }
        }
        if demand_at_zero <= capacity {
            self.beta[i] = 0.0;
            return (old - self.beta[i]).abs();
        }
        if capacity <= 0.0 {
            let max_b = self.scratch.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            self.beta[i] = max_b.max(0.0);
            return (old - self.beta[i]).abs();
        }
        self.scratch.sort_unstable_by(|a, b| b.0.total_cmp(&a.0));
        let mut slope = 0.0;
        let mut offset = 0.0;
        let k = self.scratch.len();
        let mut root = 0.0;
        for t in 0..k {
            let (b, a) = self.scratch[t];
            slope += a;
            offset += a * b;
            let lower = if t + 1 < k { self.scratch[t + 1].0 } else { f64::NEG_INFINITY };
            let candidate = (offset - capacity) / slope;
            if candidate >= lower {
                root = candidate;
                break;
            }
        }
        self.beta[i] = root.max(0.0);
        (old - self.beta[i]).abs()
    }

    /// Sweeps every dual once; returns the largest relative coordinate move.
    fn sweep(&mut self) -> f64 {
        let m = self.graph.campaign_count();
        let n = self.graph.supply_count();
        let mut moved = 0.0f64;
        if self.reversed {
            for j in (0..m).rev() {
                let d = self.update_alpha(j);
                moved = moved.max(d / (1.0 + self.alpha[j].abs()));
            }
            for i in (0..n).rev() {
                let d = self.update_beta(i);
                moved = moved.max(d / (1.0 + self.beta[i].abs()));
            }
        } else {
            for j in 0..m {
                let d = self.update_alpha(j);
                moved = moved.max(d / (1.0 + self.alpha[j].abs()));
            }
            for i in 0..n {
                let d = self.update_beta(i);
                moved = moved.max(d / (1.0 + self.beta[i].abs()));
            }
        }
        moved
    }

    /// Max relative violation of the demand equalities and supply caps at
    /// the current primal.
    fn primal_residuals(&mut self) -> f64 {
        self.refresh_primal();
        let mut worst = 0.0f64;
        for (j, campaign) in self.graph.campaigns.iter().enumerate() {
            let total: f64 = self.camp_edges[j].iter().map(|&e| self.y[e]).sum();
            worst = worst.max((total - campaign.demand).abs() / (1.0 + campaign.demand));
        }
        for (i, node) in self.graph.supplies.iter().enumerate() {
            let total: f64 = self.supply_edges[i].iter().map(|&e| self.y[e]).sum();
            worst = worst.max((total - node.weight).max(0.0) / (1.0 + node.weight));
        }
        worst
    }

    fn converge(&mut self) -> Result<usize> {
        for sweeps in 1..=self.max_sweeps {
            let moved = self.sweep();
            if moved <= self.tol {
                let residual = self.primal_residuals();
                if residual <= self.tol {
                    return Ok(sweeps);
                }
            }
            if sweeps == self.max_sweeps {
                let residual = self.primal_residuals();
                return Err(Error::NonConvergence {
                    context: "quadratic stage dual ascent",
                    iterations: sweeps,
                    residual,
                });
            }
        }
        unreachable!()
    }

    fn surplus(&mut self, f: usize) -> f64 {
        self.refresh_primal();
        let floor = &self.floors[f];
        let mut value = 0.0;
        for e in 0..self.y.len() {
            value += floor.y_coeffs[e] * self.y[e];
        }
        for (i, node) in self.graph.supplies.iter().enumerate() {
            let used: f64 = self.supply_edges[i].iter().map(|&e| self.y[e]).sum();
            value += floor.z_coeffs[i] * (node.weight - used).max(0.0);
        }
        value - floor.bound
    }

    fn extract(&mut self, stats: &mut SolveStats) -> QpSolve {
        self.refresh_primal();
        let n = self.graph.supply_count();
        let e_count = self.y.len();

        let mut z = vec![0.0; n];
        for (i, node) in self.graph.supplies.iter().enumerate() {
            let used: f64 = self.supply_edges[i].iter().map(|&e| self.y[e]).sum();
            z[i] = (node.weight - used).max(0.0);
        }

        let mut beta_report = vec![0.0; n];
        let mut mu = vec![0.0; n];
        for i in 0..n {
            beta_report[i] = self.beta[i] + self.q_tilde[i];
            mu[i] = self.beta[i];
        }

        let mut lambda = vec![0.0; e_count];
        for e in 0..e_count {
            if self.a_coef[e] <= 0.0 || self.y[e] > 0.0 {
                continue;
            }
            let edge = &self.graph.edges[e];
            let gv = self.gv(e);
            // Stationarity gradient at y = 0; its negative part is λ.
            let grad = gv + self.cost[e] + self.alpha[edge.campaign] - self.beta[edge.supply];
            lambda[e] = (-grad).max(0.0);
        }

        let allocation = Allocation { y: self.y.clone(), z };
        let floor_values: Vec<f64> =
            self.floors.iter().map(|floor| floor.value(&allocation)).collect();

        let duals = DualSolution {
            alpha: self.alpha.clone(),
            beta: beta_report,
            lambda,
            mu,
            rho: self.rho.clone(),
        };

        let mut objective = self.gamma * representativeness(self.graph, &allocation);
        for e in 0..e_count {
            objective += self.base_t[e] * allocation.y[e];
        }
        for i in 0..n {
            objective += self.base_q[i] * allocation.z[i];
        }

        let report = stage_kkt(
            self.graph,
            self.gamma,
            &self.base_t,
            &self.base_q,
            self.floors,
            &allocation,
            &duals,
        );
        stats.kkt_residual = report.merged();

        QpSolve {
            allocation,
            duals,
            stats: stats.clone(),
            objective,
            floor_values,
        }
    }
}

/// F1: weighted squared deviation from the proportional targets, always ≤ 0.
/// Edges with zero target carry no term.
pub fn representativeness(graph: &AllocationGraph, allocation: &Allocation) -> f64 {
    let mut total = 0.0;
    for (e, edge) in graph.edges.iter().enumerate() {
        if edge.target > 0.0 {
            let v = graph.campaigns[edge.campaign].priority;
            let d = allocation.y[e] - edge.target;
            total -= v / (2.0 * edge.target) * d * d;
        }
    }
    total
}

/// The closed-form stationarity map for the weighted objective γF1 + ξF2 +
/// F3, given equality-convention duals.
pub fn primal_from_duals(
    graph: &AllocationGraph,
    gamma: f64,
    xi: f64,
    alpha: &[f64],
    beta: &[f64],
) -> Vec<f64> {
    graph
        .edges
        .iter()
        .map(|edge| {
            if edge.target <= 0.0 {
                return 0.0;
            }
            let gv = gamma * graph.campaigns[edge.campaign].priority;
            let shift = xi * edge.value + alpha[edge.campaign] - beta[edge.supply];
            (edge.target * (1.0 + shift / gv)).max(0.0)
        })
        .collect()
}

/// KKT residuals for the weighted objective (floors enter via `duals.rho`
/// when present, with coefficient conventions matching `solve_weighted`).
pub fn kkt_residuals(
    graph: &AllocationGraph,
    allocation: &Allocation,
    duals: &DualSolution,
    gamma: f64,
    xi: f64,
) -> KktReport {
    let base_t: Vec<f64> = graph.edges.iter().map(|e| xi * e.value).collect();
    let base_q: Vec<f64> = graph.supplies.iter().map(|s| s.price).collect();
    stage_kkt(graph, gamma, &base_t, &base_q, &[], allocation, duals)
}

fn stage_kkt(
    graph: &AllocationGraph,
    gamma: f64,
    base_t: &[f64],
    base_q: &[f64],
    floors: &[QpFloor],
    allocation: &Allocation,
    duals: &DualSolution,
) -> KktReport {
    let mut report = KktReport::default();
    for (e, edge) in graph.edges.iter().enumerate() {
        if edge.target <= 0.0 {
            continue;
        }
        let v = graph.campaigns[edge.campaign].priority;
        let mut t = base_t[e];
        for (f, floor) in floors.iter().enumerate() {
            t += duals.rho[f] * floor.y_coeffs[e];
        }
        let y = allocation.y[e];
        let grad = -gamma * v / edge.target * (y - edge.target) + t + duals.alpha[edge.campaign]
            - duals.beta[edge.supply]
            + duals.lambda[e];
        report.stationarity_y = report.stationarity_y.max(grad.abs());
        report.complementary_slackness =
            report.complementary_slackness.max((duals.lambda[e] * y).abs());
        report.negativity = report.negativity.max((-y).max(0.0));
    }
    for i in 0..graph.supply_count() {
        let mut q = base_q[i];
        for (f, floor) in floors.iter().enumerate() {
            q += duals.rho[f] * floor.z_coeffs[i];
        }
        let z = allocation.z[i];
        let grad = q - duals.beta[i] + duals.mu[i];
        report.stationarity_z = report.stationarity_z.max(grad.abs());
        report.complementary_slackness =
            report.complementary_slackness.max((duals.mu[i] * z).abs());
        report.negativity = report.negativity.max((-z).max(0.0));
    }
    for (j, campaign) in graph.campaigns.iter().enumerate() {
        let mut total = 0.0;
        for (e, edge) in graph.edges.iter().enumerate() {
            if edge.campaign == j {
                total += allocation.y[e];
            }
        }
        report.demand_residual = report
            .demand_residual
            .max((total - campaign.demand).abs() / (1.0 + campaign.demand));
    }
    let mut used = vec![0.0; graph.supply_count()];
    for (e, edge) in graph.edges.iter().enumerate() {
        used[edge.supply] += allocation.y[e];
    }
    for (i, node) in graph.supplies.iter().enumerate() {
        let residual = (used[i] + allocation.z[i] - node.weight).abs() / (1.0 + node.weight);
        report.supply_residual = report.supply_residual.max(residual);
    }
    for (f, floor) in floors.iter().enumerate() {
        let value = floor.value(allocation);
        report.floor_violation = report
            .floor_violation
            .max((floor.bound - value).max(0.0) / (1.0 + floor.bound.abs()));
        report.complementary_slackness = report
            .complementary_slackness
            .max((duals.rho[f] * (value - floor.bound)).abs() / (1.0 + floor.bound.abs()));
    }
    report
}
