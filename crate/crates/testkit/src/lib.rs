//! Shared test oracles: a dense two-phase simplex (independent of the crate's
//! network solver), a brute-force trim enumerator, and random instance
//! builders. Everything here favors obviously-correct over fast.

use adalloc::graph::{
    AllocationGraph, AttrMap, Campaign, EdgeSpec, PenaltySpec, PenaltyTier, SupplyNode,
    TargetingPredicate,
};
use adalloc::netflow::{FlowProblem, SideConstraint};
use rand::rngs::StdRng;
use rand::Rng;

const EPS: f64 = 1e-9;

/// Minimizes c·x subject to Ax = b, x ≥ 0 with a dense two-phase tableau
/// simplex under Bland's rule. Returns None when infeasible or unbounded.
pub fn solve_dense_lp(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = c.len();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(a.len());
    let mut rhs: Vec<f64> = Vec::with_capacity(a.len());
    for (row, &bv) in a.iter().zip(b) {
        assert_eq!(row.len(), n);
        if bv < 0.0 {
            rows.push(row.iter().map(|v| -v).collect());
            rhs.push(-bv);
        } else {
            rows.push(row.clone());
            rhs.push(bv);
        }
    }
    let m = rows.len();

    // Tableau columns: n originals, m artificials, then the rhs.
    let width = n + m + 1;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, row) in rows.iter().enumerate() {
        let mut full = vec![0.0; width];
        full[..n].copy_from_slice(row);
        full[n + i] = 1.0;
        full[width - 1] = rhs[i];
        t.push(full);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase 1 reduced costs for min Σ artificials.
    let mut cost = vec![0.0; width];
    for j in 0..m {
        cost[n + j] = 1.0;
    }
    for row in &t {
        for j in 0..width {
            cost[j] -= row[j];
        }
    }
    pivot_to_optimum(&mut t, &mut cost, &mut basis, n + m)?;
    if -cost[width - 1] > 1e-7 {
        return None;
    }

    // Drive leftover artificials out of the basis; a row with no original
    // coefficient left is redundant and dropped.
    let mut row = 0;
    while row < t.len() {
        if basis[row] >= n {
            match (0..n).find(|&j| t[row][j].abs() > EPS) {
                Some(j) => {
                    pivot(&mut t, &mut cost, row, j);
                    basis[row] = j;
                }
                None => {
                    t.remove(row);
                    basis.remove(row);
                    continue;
                }
            }
        }
        row += 1;
    }

    // Phase 2 on the original objective, artificial columns frozen.
    let mut cost2 = vec![0.0; width];
    cost2[..n].copy_from_slice(c);
    for (i, &bj) in basis.iter().enumerate() {
        let cb = cost2[bj];
        if cb != 0.0 {
            for j in 0..width {
                cost2[j] -= cb * t[i][j];
            }
        }
    }
    pivot_to_optimum(&mut t, &mut cost2, &mut basis, n)?;

    let mut x = vec![0.0; n];
    for (i, &bj) in basis.iter().enumerate() {
        if bj < n {
            x[bj] = t[i][width - 1];
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    Some((x, objective))
}

/// Bland's rule loop; `eligible` bounds the entering-column search so phase 2
/// never re-admits artificials. None signals unboundedness.
fn pivot_to_optimum(
    t: &mut Vec<Vec<f64>>,
    cost: &mut Vec<f64>,
    basis: &mut Vec<usize>,
    eligible: usize,
) -> Option<()> {
    let width = cost.len();
    loop {
        let Some(enter) = (0..eligible).find(|&j| cost[j] < -EPS) else {
            return Some(());
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for (i, row) in t.iter().enumerate() {
            if row[enter] > EPS {
                let ratio = row[width - 1] / row[enter];
                let better = ratio < best - EPS
                    || (ratio < best + EPS && leave.is_some_and(|l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let leave = leave?;
        pivot(t, cost, leave, enter);
        basis[leave] = enter;
    }
}

fn pivot(t: &mut [Vec<f64>], cost: &mut [f64], row: usize, col: usize) {
    let width = cost.len();
    let div = t[row][col];
    for v in t[row].iter_mut() {
        *v /= div;
    }
    for i in 0..t.len() {
        if i != row && t[i][col].abs() > 0.0 {
            let factor = t[i][col];
            for j in 0..width {
                t[i][j] -= factor * t[row][j];
            }
        }
    }
    let factor = cost[col];
    if factor.abs() > 0.0 {
        for j in 0..width {
            cost[j] -= factor * t[row][j];
        }
    }
}

/// Min cost of a flow problem with optional floors, as a dense LP. Variables
/// are arc flows plus one surplus per floor and one slack per finite
/// capacity. Returns None when infeasible.
pub fn lp_flow_objective(
    problem: &FlowProblem,
    constraints: &[SideConstraint],
) -> Option<(Vec<f64>, f64)> {
    let arcs = problem.arcs.len();
    let capped: Vec<usize> = (0..arcs)
        .filter(|&e| problem.arcs[e].capacity.is_finite())
        .collect();
    let n = arcs + constraints.len() + capped.len();

    let mut a: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    for v in 0..problem.node_count {
        let mut row = vec![0.0; n];
        for (e, arc) in problem.arcs.iter().enumerate() {
            if arc.from == v {
                row[e] += 1.0;
            }
            if arc.to == v {
                row[e] -= 1.0;
            }
        }
        a.push(row);
        b.push(problem.supply[v]);
    }
    for (k, floor) in constraints.iter().enumerate() {
        let mut row = vec![0.0; n];
        for &(e, coeff) in &floor.coeffs {
            row[e] = coeff;
        }
        row[arcs + k] = -1.0;
        a.push(row);
        b.push(floor.bound);
    }
    for (k, &e) in capped.iter().enumerate() {
        let mut row = vec![0.0; n];
        row[e] = 1.0;
        row[arcs + constraints.len() + k] = 1.0;
        a.push(row);
        b.push(problem.arcs[e].capacity);
    }

    let mut c = vec![0.0; n];
    for (e, arc) in problem.arcs.iter().enumerate() {
        c[e] = arc.cost;
    }
    let (x, objective) = solve_dense_lp(&c, &a, &b)?;
    Some((x[..arcs].to_vec(), objective))
}

/// Minimum total under-delivery penalty over every integer shortfall vector,
/// with feasibility of the trimmed demands checked by Hall's condition over
/// campaign subsets. Exponential and proud of it.
pub fn oracle_min_trim_penalty(graph: &AllocationGraph) -> f64 {
    let m = graph.campaign_count();
    let demands: Vec<usize> = graph.campaigns.iter().map(|c| c.demand as usize).collect();
    for (j, c) in graph.campaigns.iter().enumerate() {
        assert_eq!(c.demand, demands[j] as f64, "oracle needs integer demands");
    }

    let mut neighborhood_supply = vec![0.0; 1 << m];
    for mask in 0usize..(1 << m) {
        let mut total = 0.0;
        for (i, s) in graph.supplies.iter().enumerate() {
            let touches = graph.by_supply[i]
                .iter()
                .any(|&e| mask & (1 << graph.edges[e].campaign) != 0);
            if touches {
                total += s.weight;
            }
        }
        neighborhood_supply[mask] = total;
    }

    let feasible = |trimmed: &[usize]| -> bool {
        for mask in 1usize..(1 << m) {
            let demand: usize = (0..m)
                .filter(|&j| mask & (1 << j) != 0)
                .map(|j| trimmed[j])
                .sum();
            if demand as f64 > neighborhood_supply[mask] + 1e-9 {
                return false;
            }
        }
        true
    };

    let mut best = f64::INFINITY;
    let mut shortfall = vec![0usize; m];
    loop {
        let trimmed: Vec<usize> = demands.iter().zip(&shortfall).map(|(&d, &u)| d - u).collect();
        if feasible(&trimmed) {
            let penalty: f64 = graph
                .campaigns
                .iter()
                .zip(&shortfall)
                .map(|(c, &u)| c.penalty.cost(u as f64))
                .sum();
            best = best.min(penalty);
        }
        // Odometer over the shortfall grid.
        let mut j = 0;
        loop {
            if j == m {
                return best;
            }
            if shortfall[j] < demands[j] {
                shortfall[j] += 1;
                break;
            }
            shortfall[j] = 0;
            j += 1;
        }
    }
}

pub fn supply(id: &str, weight: f64, price: f64) -> SupplyNode {
    SupplyNode {
        id: id.into(),
        weight,
        price,
        attributes: AttrMap::new(),
    }
}

pub fn campaign(id: &str, demand: f64, click_value: f64) -> Campaign {
    Campaign {
        id: id.into(),
        demand,
        priority: 1.0,
        click_value,
        conversion_value: 0.0,
        penalty: PenaltySpec::unbounded(10.0),
        targeting: TargetingPredicate::default(),
    }
}

/// Random bipartite instance. `integral` restricts weights, demands, prices
/// and penalties to small integers for the trim oracle.
pub fn random_graph(
    rng: &mut StdRng,
    max_supplies: usize,
    max_campaigns: usize,
    integral: bool,
) -> AllocationGraph {
    loop {
        let n = rng.gen_range(1..=max_supplies);
        let m = rng.gen_range(1..=max_campaigns);
        let mut supplies = Vec::with_capacity(n);
        for i in 0..n {
            let weight = if integral {
                rng.gen_range(1..=9) as f64
            } else {
                rng.gen_range(0.5..10.0)
            };
            let price = if integral {
                rng.gen_range(0..=4) as f64
            } else {
                rng.gen_range(0.0..2.0)
            };
            supplies.push(supply(&format!("s{i}"), weight, price));
        }
        let mut campaigns = Vec::with_capacity(m);
        for j in 0..m {
            let demand = if integral {
                rng.gen_range(0..=6) as f64
            } else {
                rng.gen_range(0.1..8.0)
            };
            let click_value = if integral {
                rng.gen_range(0..=10) as f64
            } else {
                rng.gen_range(0.0..10.0)
            };
            let base_cost = rng.gen_range(1..=5) as f64;
            let penalty = if rng.gen_bool(0.5) {
                PenaltySpec::unbounded(base_cost)
            } else {
                PenaltySpec {
                    tiers: vec![
                        PenaltyTier {
                            capacity: Some(rng.gen_range(1..=4) as f64),
                            unit_cost: base_cost,
                        },
                        PenaltyTier {
                            capacity: None,
                            unit_cost: base_cost + rng.gen_range(1..=4) as f64,
                        },
                    ],
                }
            };
            campaigns.push(Campaign {
                id: format!("c{j}"),
                demand,
                priority: rng.gen_range(1..=3) as f64,
                click_value,
                conversion_value: 0.0,
                penalty,
                targeting: TargetingPredicate::default(),
            });
        }
        let mut edges = Vec::new();
        for j in 0..m {
            for i in 0..n {
                if rng.gen_bool(0.6) {
                    let click_prob = if integral {
                        rng.gen_range(0..=10) as f64 / 10.0
                    } else {
                        rng.gen_range(0.0..1.0)
                    };
                    edges.push(EdgeSpec {
                        supply: format!("s{i}"),
                        campaign: format!("c{j}"),
                        click_prob,
                        conv_prob: 0.0,
                    });
                }
            }
        }
        if edges.is_empty() {
            continue;
        }
        return AllocationGraph::build(supplies, campaigns, Some(edges)).unwrap();
    }
}

/// Random balanced min-cost flow problem; roughly a quarter of the arcs get
/// finite capacities. Arcs point from lower to higher node index, so no
/// directed cycle exists and negative costs cannot make the problem
/// unbounded (the product's networks are layered the same way).
pub fn random_flow_problem(rng: &mut StdRng) -> FlowProblem {
    let nodes = rng.gen_range(3..=6);
    let arc_count = rng.gen_range(nodes..=3 * nodes);
    let mut arcs = Vec::with_capacity(arc_count);
    for _ in 0..arc_count {
        let a = rng.gen_range(0..nodes - 1);
        let b = rng.gen_range(a + 1..nodes);
        arcs.push(adalloc::netflow::FlowArc {
            from: a,
            to: b,
            cost: rng.gen_range(-5..=5) as f64,
            capacity: if rng.gen_bool(0.25) {
                rng.gen_range(1..=8) as f64
            } else {
                f64::INFINITY
            },
        });
    }
    // Arcs only run forward, so demand at node v must be covered by supply
    // among 0..v; nonnegative prefix sums keep most draws routable while
    // sparse arcs and tight capacities still produce infeasible instances.
    let mut supply: Vec<f64> = Vec::with_capacity(nodes);
    let mut prefix = 0i64;
    for _ in 0..nodes - 1 {
        let draw = rng.gen_range(-4i64..=4).max(-prefix);
        prefix += draw;
        supply.push(draw as f64);
    }
    supply.push(-prefix as f64);
    FlowProblem {
        node_count: nodes,
        supply,
        arcs,
    }
}
