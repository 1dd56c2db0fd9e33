//! Minimum-cost network flow via the primal network simplex, plus a
//! Lagrangian layer for up to two linear side constraints.
//!
//! The simplex keeps an explicit spanning-tree basis rooted at an artificial
//! node, prices non-tree arcs in blocks, and re-hangs subtrees on each pivot.
//! Costs, capacities and balances are all `f64`; determinism comes from a
//! fixed arc order, a fixed pricing cursor, and an apex-first tie-break among
//! minimum-ratio arcs.
//!
//! Side constraints (`a·x ≥ bound`) are handled by maximizing the Lagrangian
//! dual over the constraint multipliers with cutting planes: every dual
//! evaluation is a plain simplex solve with shifted costs, the small master
//! problem is solved exactly by candidate enumeration, and the final primal
//! is recomposed as a convex combination of the optimal basic flows active at
//! the optimal multiplier, so the returned flow meets the constraints exactly
//! rather than merely in a Lagrangian sense.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub cost: f64,
    /// Upper bound on flow; `f64::INFINITY` for uncapacitated arcs.
    pub capacity: f64,
}

/// A balanced min-cost flow instance: `supply[v]` > 0 injects flow at `v`,
/// < 0 demands it, and the totals must cancel (callers add an explicit slack
/// sink so that they do).
#[derive(Clone, Debug)]
pub struct FlowProblem {
    pub node_count: usize,
    pub supply: Vec<f64>,
    pub arcs: Vec<FlowArc>,
}

/// Linear floor `Σ coeffs·flow ≥ bound` attached to a flow problem.
#[derive(Clone, Debug)]
pub struct SideConstraint {
    pub label: String,
    /// Sparse (arc index, coefficient) pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
}

impl SideConstraint {
    pub fn evaluate(&self, flow: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(e, a)| a * flow[e]).sum()
    }
}

#[derive(Clone, Debug)]
pub struct FlowSolution {
    pub flow: Vec<f64>,
    /// Node potentials of the final basis; reduced costs are taken against
    /// the multiplier-shifted costs when side constraints are present.
    pub potentials: Vec<f64>,
    /// Objective under the original costs.
    pub objective: f64,
    /// One multiplier per side constraint (empty for plain solves).
    pub multipliers: Vec<f64>,
    pub pivots: usize,
    /// |primal − dual| certificate gap.
    pub dual_gap: f64,
}

/// A node whose balance cannot be routed; `node` indexes the problem's nodes.
#[derive(Clone, Debug)]
pub struct FlowInfeasibility {
    pub node: usize,
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub enum FlowOutcome {
    Optimal(FlowSolution),
    Infeasible(FlowInfeasibility),
}

impl FlowOutcome {
    pub fn optimal(self) -> Result<FlowSolution> {
        match self {
            FlowOutcome::Optimal(s) => Ok(s),
            FlowOutcome::Infeasible(i) => Err(Error::InfeasibleFlow(format!(
                "node {} left with residual {:.6e}",
                i.node, i.residual
            ))),
        }
    }
}

const ENTER_EPS_REL: f64 = 1e-10;
const MULTIPLIER_CAP: f64 = 1e12;

#[derive(Clone, Copy, PartialEq, Eq)]
enum ArcState {
    Tree,
    Lower,
    Upper,
}

/// Persistent simplex state so that side-constraint dual search can re-solve
/// with shifted costs from the previous basis instead of from scratch.
pub struct NetworkSimplex {
    n: usize,
    m: usize,
    from: Vec<usize>,
    to: Vec<usize>,
    cost: Vec<f64>,
    cap: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<ArcState>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    depth: Vec<u32>,
    children: Vec<Vec<usize>>,
    pot: Vec<f64>,
    art_cost: f64,
    enter_eps: f64,
    feas_tol: f64,
    block: usize,
    cursor: usize,
    pivots: usize,
}

impl NetworkSimplex {
    pub fn new(problem: &FlowProblem) -> Result<Self> {
        let n = problem.node_count;
        let m = problem.arcs.len();
        if problem.supply.len() != n {
            return Err(Error::InvalidInstance(format!(
                "flow problem has {n} nodes but {} balances",
                problem.supply.len()
            )));
        }
        let mut abs_total = 0.0;
        let mut net = 0.0;
        for &b in &problem.supply {
            if !b.is_finite() {
                return Err(Error::InvalidInstance("non-finite node balance".into()));
            }
            abs_total += b.abs();
            net += b;
        }
        if net.abs() > 1e-7 * (1.0 + abs_total) {
            return Err(Error::InvalidInstance(format!(
                "flow problem is unbalanced by {net:.6e}; add a slack sink"
            )));
        }
        let mut max_cost = 0.0f64;
        for (e, arc) in problem.arcs.iter().enumerate() {
            if arc.from >= n || arc.to >= n || arc.from == arc.to {
                return Err(Error::InvalidInstance(format!("arc {e} endpoints invalid")));
            }
            if !arc.cost.is_finite() {
                return Err(Error::InvalidInstance(format!("arc {e} has non-finite cost")));
            }
            if arc.capacity.is_nan() || arc.capacity <= 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "arc {e} capacity {} must be positive",
                    arc.capacity
                )));
            }
            max_cost = max_cost.max(arc.cost.abs());
        }

        let root = n;
        let total = m + n;
        let art_cost = (1.0 + max_cost) * (n as f64 + 2.0);
        let mut simplex = NetworkSimplex {
            n,
            m,
            from: Vec::with_capacity(total),
            to: Vec::with_capacity(total),
            cost: Vec::with_capacity(total),
            cap: Vec::with_capacity(total),
            flow: vec![0.0; total],
            state: vec![ArcState::Lower; total],
            parent: vec![usize::MAX; n + 1],
            pred: vec![usize::MAX; n + 1],
            depth: vec![0; n + 1],
            children: vec![Vec::new(); n + 1],
            pot: vec![0.0; n + 1],
            art_cost,
            enter_eps: ENTER_EPS_REL * (1.0 + max_cost),
            feas_tol: 1e-9 * (1.0 + abs_total / 2.0),
            block: (((total as f64).sqrt().ceil()) as usize).max(8),
            cursor: 0,
            pivots: 0,
        };
        for arc in &problem.arcs {
            simplex.from.push(arc.from);
            simplex.to.push(arc.to);
            simplex.cost.push(arc.cost);
            simplex.cap.push(arc.capacity);
        }
        for (v, &b) in problem.supply.iter().enumerate() {
            // Artificial arc between v and the root, oriented along v's
            // initial imbalance so the starting flow is nonnegative.
            if b >= 0.0 {
                simplex.from.push(v);
                simplex.to.push(root);
            } else {
                simplex.from.push(root);
                simplex.to.push(v);
            }
            simplex.cost.push(art_cost);
            simplex.cap.push(f64::INFINITY);
            let e = m + v;
            simplex.flow[e] = b.abs();
            simplex.state[e] = ArcState::Tree;
            simplex.parent[v] = root;
            simplex.pred[v] = e;
            simplex.depth[v] = 1;
            simplex.children[root].push(v);
            simplex.pot[v] = if b >= 0.0 { art_cost } else { -art_cost };
        }
        simplex.parent[root] = usize::MAX;
        simplex.depth[root] = 0;
        Ok(simplex)
    }

    /// Replaces the costs of the original arcs, keeping the current basis.
    pub fn set_costs(&mut self, costs: &[f64]) {
        assert_eq!(costs.len(), self.m);
        let mut max_cost = 0.0f64;
        for (e, &c) in costs.iter().enumerate() {
            self.cost[e] = c;
            max_cost = max_cost.max(c.abs());
        }
        // Track the current cost scale in both directions: once a large-cost
        // probe has passed, a stale oversized penalty would leave its rounding
        // error baked into every potential the basis reports afterwards.
        let needed = (1.0 + max_cost) * (self.n as f64 + 2.0);
        if needed != self.art_cost {
            self.art_cost = needed;
            for e in self.m..self.m + self.n {
                self.cost[e] = needed;
            }
        }
        self.enter_eps = ENTER_EPS_REL * (1.0 + max_cost);
        self.recompute_potentials();
    }

    fn recompute_potentials(&mut self) {
        let root = self.n;
        self.pot[root] = 0.0;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            for c in 0..self.children[v].len() {
                let child = self.children[v][c];
                let a = self.pred[child];
                self.pot[child] = if self.to[a] == child {
                    self.pot[v] - self.cost[a]
                } else {
                    self.pot[v] + self.cost[a]
                };
                stack.push(child);
            }
        }
    }

    #[inline]
    fn reduced_cost(&self, e: usize) -> f64 {
        self.cost[e] - self.pot[self.from[e]] + self.pot[self.to[e]]
    }

    fn find_entering(&mut self) -> Option<usize> {
        let total = self.m + self.n;
        let mut scanned = 0;
        let mut best: Option<(f64, usize)> = None;
        while scanned < total {
            let block_end = (scanned + self.block).min(total);
            while scanned < block_end {
                let e = self.cursor;
                self.cursor += 1;
                if self.cursor == total {
                    self.cursor = 0;
                }
                scanned += 1;
                let violation = match self.state[e] {
                    ArcState::Lower => -self.reduced_cost(e),
                    ArcState::Upper => self.reduced_cost(e),
                    ArcState::Tree => continue,
                };
                if violation > self.enter_eps
                    && best.map_or(true, |(b, _)| violation > b)
                {
                    best = Some((violation, e));
                }
            }
            if let Some((_, e)) = best {
                return Some(e);
            }
        }
        None
    }

    fn pivot(&mut self, entering: usize) -> Result<()> {
        let increase = self.state[entering] == ArcState::Lower;
        // Push direction: tail -> head around the cycle.
        let (tail, head) = if increase {
            (self.from[entering], self.to[entering])
        } else {
            (self.to[entering], self.from[entering])
        };

        // Collect tree arcs from both endpoints up to the apex. `increases`
        // says whether the cycle push raises the arc's flow; `node` is the
        // arc's child-side endpoint.
        let mut up_tail: Vec<(usize, bool, usize)> = Vec::new();
        let mut up_head: Vec<(usize, bool, usize)> = Vec::new();
        let (mut a, mut b) = (tail, head);
        while self.depth[a] > self.depth[b] {
            let arc = self.pred[a];
            up_tail.push((arc, self.from[arc] == self.parent[a], a));
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            let arc = self.pred[b];
            up_head.push((arc, self.from[arc] == b, b));
            b = self.parent[b];
        }
        while a != b {
            let arc_a = self.pred[a];
            up_tail.push((arc_a, self.from[arc_a] == self.parent[a], a));
            a = self.parent[a];
            let arc_b = self.pred[b];
            up_head.push((arc_b, self.from[arc_b] == b, b));
            b = self.parent[b];
        }

        // Cycle in traversal order starting at the apex: down the tail side,
        // across the entering arc, back up the head side. The first
        // minimum-ratio arc in this order leaves the basis.
        let mut cycle: Vec<(usize, bool, usize)> =
            Vec::with_capacity(up_tail.len() + up_head.len() + 1);
        cycle.extend(up_tail.iter().rev().copied());
        cycle.push((entering, increase, usize::MAX));
        cycle.extend(up_head.iter().copied());

        let mut delta = f64::INFINITY;
        let mut leaving = usize::MAX;
        let mut leaving_slot = usize::MAX;
        for (slot, &(arc, inc, _)) in cycle.iter().enumerate() {
            let room = if inc {
                self.cap[arc] - self.flow[arc]
            } else {
                self.flow[arc]
            };
            if room < delta {
                delta = room;
                leaving = arc;
                leaving_slot = slot;
            }
        }
        if !delta.is_finite() {
            return Err(Error::InvalidInstance(
                "flow problem is unbounded along an uncapacitated cycle".into(),
            ));
        }

        if delta > 0.0 {
            for &(arc, inc, _) in &cycle {
                self.flow[arc] += if inc { delta } else { -delta };
            }
        }

        if leaving == entering {
            self.flow[entering] = if increase { self.cap[entering] } else { 0.0 };
            self.state[entering] =
                if increase { ArcState::Upper } else { ArcState::Lower };
            self.pivots += 1;
            return Ok(());
        }

        let (_, leaving_inc, leaving_node) = cycle[leaving_slot];
        // Snap the leaving arc exactly onto its bound to stop drift.
        if leaving_inc {
            self.flow[leaving] = self.cap[leaving];
            self.state[leaving] = ArcState::Upper;
        } else {
            self.flow[leaving] = 0.0;
            self.state[leaving] = ArcState::Lower;
        }

        // Cut the subtree under `leaving_node`, re-root it at the entering
        // arc's endpoint inside it, and hang it back on the other endpoint.
        let rc = self.reduced_cost(entering);
        let sub_root = if self.in_subtree(self.from[entering], leaving_node) {
            self.from[entering]
        } else {
            debug_assert!(self.in_subtree(self.to[entering], leaving_node));
            self.to[entering]
        };
        let outside = if sub_root == self.from[entering] {
            self.to[entering]
        } else {
            self.from[entering]
        };
        let delta_pot = if sub_root == self.to[entering] { -rc } else { rc };

        self.remove_child(self.parent[leaving_node], leaving_node);

        // Reverse the chain sub_root .. leaving_node.
        let mut chain = vec![(sub_root, self.pred[sub_root])];
        let mut walk = sub_root;
        while walk != leaving_node {
            walk = self.parent[walk];
            chain.push((walk, self.pred[walk]));
        }
        for t in 1..chain.len() {
            let (hi, _) = chain[t];
            let (lo, lo_pred) = chain[t - 1];
            self.remove_child(hi, lo);
            self.parent[hi] = lo;
            self.pred[hi] = lo_pred;
            self.children[lo].push(hi);
        }
        self.parent[sub_root] = outside;
        self.pred[sub_root] = entering;
        self.children[outside].push(sub_root);
        self.state[entering] = ArcState::Tree;

        // Shift potentials and refresh depths across the re-hung subtree.
        let mut stack = vec![sub_root];
        while let Some(v) = stack.pop() {
            self.pot[v] += delta_pot;
            self.depth[v] = self.depth[self.parent[v]] + 1;
            for c in 0..self.children[v].len() {
                stack.push(self.children[v][c]);
            }
        }
        self.pivots += 1;
        Ok(())
    }

    fn in_subtree(&self, node: usize, root: usize) -> bool {
        let mut v = node;
        loop {
            if v == root {
                return true;
            }
            if v == self.n || self.parent[v] == usize::MAX {
                return false;
            }
            v = self.parent[v];
        }
    }

    fn remove_child(&mut self, parent: usize, child: usize) {
        let list = &mut self.children[parent];
        if let Some(pos) = list.iter().position(|&c| c == child) {
            list.swap_remove(pos);
        }
    }

    /// Pivots to optimality from the current basis.
    pub fn solve(&mut self) -> Result<FlowOutcome> {
        let cap = 1000 + 40 * (self.m + self.n);
        let mut steps = 0;
        while let Some(entering) = self.find_entering() {
            self.pivot(entering)?;
            steps += 1;
            if steps > cap {
                return Err(Error::NonConvergence {
                    context: "network simplex",
                    iterations: steps,
                    residual: f64::NAN,
                });
            }
        }
        for v in 0..self.n {
            let e = self.m + v;
            if self.flow[e] > self.feas_tol {
                return Ok(FlowOutcome::Infeasible(FlowInfeasibility {
                    node: v,
                    residual: self.flow[e],
                }));
            }
        }
        Ok(FlowOutcome::Optimal(self.extract()))
    }

    fn extract(&self) -> FlowSolution {
        let flow: Vec<f64> = self.flow[..self.m].to_vec();
        let potentials: Vec<f64> = self.pot[..self.n].to_vec();
        let objective: f64 = (0..self.m).map(|e| self.cost[e] * flow[e]).sum();
        // Dual certificate: potential differences absorbed by actual flow
        // plus reduced-cost rents of saturated arcs must recover the
        // objective exactly; the residue is the reported gap.
        let mut dual = 0.0;
        for e in 0..self.m {
            if self.state[e] == ArcState::Upper {
                dual += self.reduced_cost(e) * self.cap[e];
            }
        }
        let mut balance_term = 0.0;
        for e in 0..self.m {
            balance_term += self.flow[e] * (self.pot[self.from[e]] - self.pot[self.to[e]]);
        }
        let dual_gap = (objective - (balance_term + dual)).abs();
        FlowSolution {
            flow,
            potentials,
            objective,
            multipliers: Vec::new(),
            pivots: self.pivots,
            dual_gap,
        }
    }

    pub fn base_costs(&self) -> &[f64] {
        &self.cost[..self.m]
    }
}

/// Solves a plain min-cost flow problem.
pub fn solve_min_cost_flow(problem: &FlowProblem) -> Result<FlowOutcome> {
    NetworkSimplex::new(problem)?.solve()
}

struct Cut {
    value: f64,
    slope: Vec<f64>,
    flow: Vec<f64>,
}

fn line_at(cut: &Cut, rho: &[f64]) -> f64 {
    cut.value + cut.slope.iter().zip(rho).map(|(g, r)| g * r).sum::<f64>()
}

/// Solves min cost·x over the flow polytope subject to `constraints`
/// (each `a·x ≥ bound`, at most two).
pub fn solve_with_side_constraints(
    problem: &FlowProblem,
    constraints: &[SideConstraint],
) -> Result<FlowOutcome> {
    if constraints.is_empty() {
        return solve_min_cost_flow(problem);
    }
    if constraints.len() > 2 {
        return Err(Error::InvalidInstance(format!(
            "{} side constraints attached; at most two are supported",
            constraints.len()
        )));
    }
    for c in constraints {
        for &(e, _) in &c.coeffs {
            if e >= problem.arcs.len() {
                return Err(Error::InvalidInstance(format!(
                    "side constraint {} references arc {e}",
                    c.label
                )));
            }
        }
    }

    let nu = constraints.len();
    let base: Vec<f64> = problem.arcs.iter().map(|a| a.cost).collect();
    let mut simplex = NetworkSimplex::new(problem)?;

    let mut cuts: Vec<Cut> = Vec::new();
    let evaluate = |simplex: &mut NetworkSimplex,
                        cuts: &mut Vec<Cut>,
                        rho: &[f64]|
     -> Result<std::result::Result<(f64, usize), FlowInfeasibility>> {
        let mut shifted = base.clone();
        for (f, c) in constraints.iter().enumerate() {
            for &(e, a) in &c.coeffs {
                shifted[e] -= rho[f] * a;
            }
        }
        simplex.set_costs(&shifted);
        let solution = match simplex.solve()? {
            FlowOutcome::Optimal(s) => s,
            FlowOutcome::Infeasible(i) => return Ok(Err(i)),
        };
        let value: f64 = base
            .iter()
            .zip(&solution.flow)
            .map(|(c, x)| c * x)
            .sum();
        let slope: Vec<f64> = constraints
            .iter()
            .map(|c| c.bound - c.evaluate(&solution.flow))
            .collect();
        let dual_value = value + slope.iter().zip(rho).map(|(g, r)| g * r).sum::<f64>();
        cuts.push(Cut {
            value,
            slope,
            flow: solution.flow,
        });
        Ok(Ok((dual_value, cuts.len() - 1)))
    };

    // The unconstrained optimum decides feasibility of the flow itself and
    // often already satisfies the floors.
    let zero = vec![0.0; nu];
    let first = match evaluate(&mut simplex, &mut cuts, &zero)? {
        Ok(v) => v,
        Err(inf) => return Ok(FlowOutcome::Infeasible(inf)),
    };
    let floor_tol: Vec<f64> = constraints
        .iter()
        .map(|c| 1e-9 * (1.0 + c.bound.abs()))
        .collect();
    if cuts[0]
        .slope
        .iter()
        .zip(&floor_tol)
        .all(|(g, t)| *g <= *t)
    {
        let mut solution = simplex.extract();
        solution.multipliers = zero;
        return Ok(FlowOutcome::Optimal(solution));
    }
    let mut best_dual = first.0;

    let mut cap = 1.0f64;
    let mut gap_tol = 1e-10;
    let mut retries = 0;
    for _ in 0..400 {
        let (rho_hat, model) = solve_master(&cuts, nu, cap);
        if rho_hat.iter().any(|r| *r > cap * (1.0 - 1e-9)) && cap < MULTIPLIER_CAP {
            cap *= 8.0;
            continue;
        }
        let (dual_value, _) = match evaluate(&mut simplex, &mut cuts, &rho_hat)? {
            Ok(v) => v,
            Err(inf) => return Ok(FlowOutcome::Infeasible(inf)),
        };
        best_dual = best_dual.max(dual_value);
        if model - dual_value <= gap_tol * (1.0 + model.abs()) {
            match recompose(&cuts, constraints, &rho_hat, model, &base) {
                Some(mut solution) => {
                    solution.potentials = simplex.pot[..simplex.n].to_vec();
                    solution.pivots = simplex.pivots;
                    return Ok(FlowOutcome::Optimal(solution));
                }
                None if retries < 3 => {
                    retries += 1;
                    gap_tol *= 1e-2;
                }
                None => break,
            }
        }
        if cuts.len() > 48 {
            prune_cuts(&mut cuts, &rho_hat);
        }
    }

    // The dual ran away or recomposition failed: certify which floor is out
    // of reach before giving up.
    for (f, c) in constraints.iter().enumerate() {
        let reachable = max_functional(&mut simplex, &base, c)?;
        if reachable < c.bound - 1e-7 * (1.0 + c.bound.abs()) {
            return Err(Error::InfeasibleFloor(format!(
                "{} (requires {:.6}, best achievable {:.6})",
                c.label, c.bound, reachable
            )));
        }
        if nu == 2 {
            let other = &constraints[1 - f];
            let mut sub = problem.clone();
            for arc in &mut sub.arcs {
                arc.cost = 0.0;
            }
            for &(e, a) in &c.coeffs {
                sub.arcs[e].cost = -a;
            }
            let constrained = solve_with_side_constraints(&sub, &[other.clone()])?;
            if let FlowOutcome::Optimal(s) = constrained {
                let reach = c.evaluate(&s.flow);
                if reach < c.bound - 1e-7 * (1.0 + c.bound.abs()) {
                    return Err(Error::JointlyInfeasibleFloors(
                        c.label.clone(),
                        other.label.clone(),
                    ));
                }
            }
        }
    }
    Err(Error::NonConvergence {
        context: "side-constraint dual search",
        iterations: cuts.len(),
        residual: best_dual,
    })
}

fn max_functional(
    simplex: &mut NetworkSimplex,
    base: &[f64],
    constraint: &SideConstraint,
) -> Result<f64> {
    let mut costs = vec![0.0; base.len()];
    for &(e, a) in &constraint.coeffs {
        costs[e] = -a;
    }
    simplex.set_costs(&costs);
    let solution = simplex.solve()?.optimal()?;
    Ok(constraint.evaluate(&solution.flow))
}

/// Maximizes φ(ρ) = min_k (v_k + g_k·ρ) over [0, cap]^ν exactly, by
/// enumerating every candidate vertex of the piecewise-linear model. Ties
/// resolve to the lexicographically smallest ρ so multipliers stay minimal
/// when the dual has a flat top.
fn solve_master(cuts: &[Cut], nu: usize, cap: f64) -> (Vec<f64>, f64) {
    let phi = |rho: &[f64]| -> f64 {
        cuts.iter()
            .map(|c| line_at(c, rho))
            .fold(f64::INFINITY, f64::min)
    };
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    match nu {
        1 => {
            candidates.push(vec![0.0]);
            candidates.push(vec![cap]);
            for k in 0..cuts.len() {
                for l in k + 1..cuts.len() {
                    let dg = cuts[k].slope[0] - cuts[l].slope[0];
                    if dg.abs() < 1e-300 {
                        continue;
                    }
                    let r = (cuts[l].value - cuts[k].value) / dg;
                    if (0.0..=cap).contains(&r) {
                        candidates.push(vec![r]);
                    }
                }
            }
        }
        2 => {
            for &r0 in &[0.0, cap] {
                for &r1 in &[0.0, cap] {
                    candidates.push(vec![r0, r1]);
                }
            }
            for k in 0..cuts.len() {
                for l in k + 1..cuts.len() {
                    // Pairwise intersections along each box edge.
                    for fixed in 0..2usize {
                        let free = 1 - fixed;
                        for &fv in &[0.0, cap] {
                            let vk = cuts[k].value + cuts[k].slope[fixed] * fv;
                            let vl = cuts[l].value + cuts[l].slope[fixed] * fv;
                            let dg = cuts[k].slope[free] - cuts[l].slope[free];
                            if dg.abs() < 1e-300 {
                                continue;
                            }
                            let r = (vl - vk) / dg;
                            if (0.0..=cap).contains(&r) {
                                let mut point = vec![0.0; 2];
                                point[fixed] = fv;
                                point[free] = r;
                                candidates.push(point);
                            }
                        }
                    }
                    // Triple intersections in the interior.
                    for m_ in l + 1..cuts.len() {
                        let a11 = cuts[k].slope[0] - cuts[l].slope[0];
                        let a12 = cuts[k].slope[1] - cuts[l].slope[1];
                        let a21 = cuts[k].slope[0] - cuts[m_].slope[0];
                        let a22 = cuts[k].slope[1] - cuts[m_].slope[1];
                        let det = a11 * a22 - a12 * a21;
                        if det.abs() < 1e-300 {
                            continue;
                        }
                        let b1 = cuts[l].value - cuts[k].value;
                        let b2 = cuts[m_].value - cuts[k].value;
                        let r0 = (b1 * a22 - a12 * b2) / det;
                        let r1 = (a11 * b2 - b1 * a21) / det;
                        if (0.0..=cap).contains(&r0) && (0.0..=cap).contains(&r1) {
                            candidates.push(vec![r0, r1]);
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    let mut best_rho = vec![0.0; nu];
    let mut best_val = phi(&best_rho);
    for cand in candidates {
        let val = phi(&cand);
        let tol = 1e-12 * (1.0 + best_val.abs());
        if val > best_val + tol
            || ((val - best_val).abs() <= tol && lex_less(&cand, &best_rho))
        {
            best_val = val;
            best_rho = cand;
        }
    }
    (best_rho, best_val)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn prune_cuts(cuts: &mut Vec<Cut>, rho: &[f64]) {
    // Keep the cuts closest to the model surface at the incumbent, plus the
    // most recent one; stale cuts get regenerated if they matter again.
    let newest = cuts.len() - 1;
    let mut order: Vec<usize> = (0..cuts.len()).collect();
    let keys: Vec<f64> = cuts.iter().map(|c| line_at(c, rho)).collect();
    order.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap().then(a.cmp(&b)));
    let keep: std::collections::HashSet<usize> =
        order.into_iter().take(32).chain([newest]).collect();
    let mut idx = 0;
    cuts.retain(|_| {
        let k = keep.contains(&idx);
        idx += 1;
        k
    });
}

/// Rebuilds a primal flow at the optimal multipliers as a convex combination
/// of active basic flows, choosing weights that meet binding floors exactly.
fn recompose(
    cuts: &[Cut],
    constraints: &[SideConstraint],
    rho: &[f64],
    model: f64,
    base: &[f64],
) -> Option<FlowSolution> {
    let nu = constraints.len();
    let active_tol = 1e-7 * (1.0 + model.abs());
    let active: Vec<usize> = (0..cuts.len())
        .filter(|&k| line_at(&cuts[k], rho) <= model + active_tol)
        .collect();
    if active.is_empty() {
        return None;
    }
    let natural_binding: Vec<bool> = (0..nu).map(|f| rho[f] > 1e-9).collect();

    // Try the natural binding pattern first, then its relaxations. A dual
    // optimum at zero leaves a primally-active floor invisible here, and the
    // mixture that satisfies it may only exist once the floor is pinned to
    // equality, so the remaining patterns follow as a last resort.
    let mut patterns = vec![natural_binding.clone()];
    for mask in 0..(1u32 << nu) {
        let pattern: Vec<bool> = (0..nu)
            .map(|f| natural_binding[f] && (mask >> f) & 1 == 0)
            .collect();
        if !patterns.contains(&pattern) {
            patterns.push(pattern);
        }
    }
    for mask in 0..(1u32 << nu) {
        let pattern: Vec<bool> = (0..nu).map(|f| (mask >> f) & 1 == 1).collect();
        if !patterns.contains(&pattern) {
            patterns.push(pattern);
        }
    }
    let slack_tol: Vec<f64> = constraints
        .iter()
        .map(|c| 1e-7 * (1.0 + c.bound.abs()))
        .collect();

    for pattern in patterns {
        let eqs: Vec<usize> = (0..nu).filter(|&f| pattern[f]).collect();
        let size = eqs.len() + 1;
        if let Some(weights) = search_support(&active, cuts, &eqs, size, &slack_tol) {
            // Validate the mixture.
            let mut ok = true;
            let mut mix_slope = vec![0.0; nu];
            for &(k, w) in &weights {
                for f in 0..nu {
                    mix_slope[f] += w * cuts[k].slope[f];
                }
            }
            for f in 0..nu {
                let surplus = -mix_slope[f];
                let tol = 1e-7 * (1.0 + constraints[f].bound.abs());
                if surplus < -tol {
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            let m = cuts[0].flow.len();
            let mut flow = vec![0.0; m];
            for &(k, w) in &weights {
                for e in 0..m {
                    flow[e] += w * cuts[k].flow[e];
                }
            }
            let objective: f64 = base.iter().zip(&flow).map(|(c, x)| c * x).sum();
            for c in constraints {
                let tol = 1e-6 * (1.0 + c.bound.abs());
                if c.evaluate(&flow) < c.bound - tol {
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            return Some(FlowSolution {
                flow,
                potentials: Vec::new(),
                objective,
                multipliers: rho.to_vec(),
                pivots: 0,
                dual_gap: (objective - model).abs(),
            });
        }
    }
    None
}

/// Finds support weights (≤ `size` active cuts) with Σw = 1 and
/// Σ w·slope_f = 0 for each binding floor `f` in `eqs`, skipping any
/// combination whose mixture lands on the infeasible side of some floor.
fn search_support(
    active: &[usize],
    cuts: &[Cut],
    eqs: &[usize],
    size: usize,
    slack_tol: &[f64],
) -> Option<Vec<(usize, f64)>> {
    let combos = subsets_up_to(active, size);
    for combo in combos {
        let k = combo.len();
        // Rows: Σw = 1, then one per binding floor.
        let rows = 1 + eqs.len();
        if k > rows {
            continue;
        }
        let mut a = vec![vec![0.0; k]; rows];
        let mut b = vec![0.0; rows];
        for (col, &cut) in combo.iter().enumerate() {
            a[0][col] = 1.0;
            for (r, &f) in eqs.iter().enumerate() {
                a[r + 1][col] = cuts[cut].slope[f];
            }
        }
        b[0] = 1.0;
        if let Some(w) = solve_least_squares_exact(&a, &b) {
            if w.iter().all(|&x| x >= -1e-9) {
                let weights: Vec<(usize, f64)> = combo
                    .iter()
                    .zip(&w)
                    .map(|(&c, &x)| (c, x.max(0.0)))
                    .collect();
                let total: f64 = weights.iter().map(|(_, w)| w).sum();
                let on_floor = slack_tol.iter().enumerate().all(|(f, &tol)| {
                    let s: f64 = weights.iter().map(|&(c, w)| w * cuts[c].slope[f]).sum();
                    s <= tol
                });
                if (total - 1.0).abs() < 1e-7 && on_floor {
                    return Some(weights);
                }
            }
        }
    }
    None
}

fn subsets_up_to(items: &[usize], max_size: usize) -> Vec<Vec<usize>> {
    fn extend(items: &[usize], start: usize, current: &mut Vec<usize>, size: usize, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..items.len() {
            current.push(items[i]);
            extend(items, i + 1, current, size, out);
            current.pop();
        }
    }
    let mut out = Vec::new();
    for size in 1..=max_size.min(items.len()) {
        extend(items, 0, &mut Vec::new(), size, &mut out);
    }
    out
}

/// Solves a small (≤3×3) linear system exactly enough for weight recovery;
/// returns `None` when the system is singular or inconsistent.
fn solve_least_squares_exact(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let rows = a.len();
    let cols = a[0].len();
    if rows != cols {
        // Underdetermined supports are skipped; only square systems are
        // solved so the weight choice stays deterministic.
        if cols == 1 {
            // Single unknown: must satisfy every row.
            let w = b[0] / a[0][0];
            for r in 0..rows {
                if (a[r][0] * w - b[r]).abs() > 1e-7 * (1.0 + b[r].abs()) {
                    return None;
                }
            }
            return Some(vec![w]);
        }
        return None;
    }
    let mut m: Vec<Vec<f64>> = a.iter().cloned().collect();
    let mut rhs = b.to_vec();
    for col in 0..cols {
        let pivot = (col..rows)
            .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in 0..rows {
            if r == col {
                continue;
            }
            let factor = m[r][col] / m[col][col];
            for c in col..cols {
                m[r][c] -= factor * m[col][c];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    Some((0..cols).map(|c| rhs[c] / m[c][c]).collect())
}
