//! Demand trimming for overbooked instances.
//!
//! Each campaign gets a virtual supply line priced by its penalty tiers; a
//! min-cost flow then decides how much of every demand is worth buying out
//! instead of serving. Real supply is free, so the flow touches penalty arcs
//! only when eligibility or volume genuinely runs out, and the tier prices
//! make the trade-off between shorting different campaigns explicit.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{Allocation, AllocationGraph};
use crate::netflow::{FlowArc, FlowOutcome, FlowProblem, solve_min_cost_flow};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CampaignTrim {
    pub campaign: String,
    pub demand: f64,
    /// Unserved demand u_j.
    pub shortfall: f64,
    pub trimmed_demand: f64,
    pub penalty: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrimReport {
    pub campaigns: Vec<CampaignTrim>,
    pub total_shortfall: f64,
    pub total_penalty: f64,
    pub trimmed: bool,
}

impl TrimReport {
    pub fn trimmed_demands(&self) -> Vec<f64> {
        self.campaigns.iter().map(|c| c.trimmed_demand).collect()
    }
}

/// Trim plus everything downstream solvers need: the graph with reduced
/// demands (targets recomputed) and a feasible allocation proving them.
#[derive(Clone, Debug)]
pub struct TrimOutcome {
    pub report: TrimReport,
    pub graph: AllocationGraph,
    pub witness: Allocation,
}

pub enum CertifyOutcome {
    Feasible(Allocation),
    Infeasible { campaign: String, residual: f64 },
}

/// Node layout shared by the trim and certification flows.
struct Layout {
    n: usize,
    m: usize,
    sink: usize,
    dummy: usize,
}

impl Layout {
    fn of(graph: &AllocationGraph, with_dummy: bool) -> Layout {
        let n = graph.supply_count();
        let m = graph.campaign_count();
        Layout {
            n,
            m,
            sink: n + m,
            dummy: if with_dummy { n + m + 1 } else { usize::MAX },
        }
    }
}

/// Finds the cheapest under-delivery profile and returns the instance with
/// demands reduced accordingly.
pub fn make_feasible(graph: &AllocationGraph) -> Result<TrimOutcome> {
    let layout = Layout::of(graph, true);
    let total_supply = graph.total_supply();
    let total_demand = graph.total_demand();

    let mut arcs = Vec::with_capacity(graph.edges.len() + layout.n + 4 * layout.m + 1);
    for edge in &graph.edges {
        arcs.push(FlowArc {
            from: edge.supply,
            to: layout.n + edge.campaign,
            cost: 0.0,
            capacity: f64::INFINITY,
        });
    }
    for i in 0..layout.n {
        arcs.push(FlowArc { from: i, to: layout.sink, cost: 0.0, capacity: f64::INFINITY });
    }
    // Penalty tiers as priced arcs from the dummy source; the first arc
    // index per campaign is recorded to read the shortfall back out.
    let mut tier_arcs: Vec<usize> = Vec::with_capacity(layout.m);
    for (j, campaign) in graph.campaigns.iter().enumerate() {
        tier_arcs.push(arcs.len());
        for tier in &campaign.penalty.tiers {
            arcs.push(FlowArc {
                from: layout.dummy,
                to: layout.n + j,
                cost: tier.unit_cost,
                capacity: tier.capacity.unwrap_or(f64::INFINITY),
            });
        }
    }
    // Unused dummy volume drains to the sink for free.
    arcs.push(FlowArc { from: layout.dummy, to: layout.sink, cost: 0.0, capacity: f64::INFINITY });

    let mut supply = vec![0.0; layout.dummy + 1];
    for (i, node) in graph.supplies.iter().enumerate() {
        supply[i] = node.weight;
    }
    for (j, campaign) in graph.campaigns.iter().enumerate() {
        supply[layout.n + j] = -campaign.demand;
    }
    supply[layout.dummy] = total_demand;
    supply[layout.sink] = -total_supply;

    let problem = FlowProblem { node_count: layout.dummy + 1, supply, arcs };
    let solution = solve_min_cost_flow(&problem)?.optimal()?;

    let mut campaigns = Vec::with_capacity(layout.m);
    let mut total_shortfall = 0.0;
    let mut total_penalty = 0.0;
    for (j, campaign) in graph.campaigns.iter().enumerate() {
        let start = tier_arcs[j];
        let mut shortfall = 0.0;
        let mut penalty = 0.0;
        for (t, tier) in campaign.penalty.tiers.iter().enumerate() {
            let used = solution.flow[start + t];
            shortfall += used;
            penalty += used * tier.unit_cost;
        }
        let snap = 1e-9 * (1.0 + campaign.demand);
        if shortfall <= snap {
            shortfall = 0.0;
            penalty = 0.0;
        } else if shortfall >= campaign.demand - snap {
            shortfall = campaign.demand;
            penalty = campaign.penalty.cost(shortfall);
        }
        total_shortfall += shortfall;
        total_penalty += penalty;
        campaigns.push(CampaignTrim {
            campaign: campaign.id.clone(),
            demand: campaign.demand,
            shortfall,
            trimmed_demand: campaign.demand - shortfall,
            penalty,
        });
    }

    let report = TrimReport {
        total_shortfall,
        total_penalty,
        trimmed: campaigns.iter().any(|c| c.shortfall > 0.0),
        campaigns,
    };
    let trimmed_graph = graph.with_demands(&report.trimmed_demands());

    // The solve already routed the trimmed demands through real supply; keep
    // that flow as the witness.
    let e = graph.edges.len();
    let y = solution.flow[..e].to_vec();
    let z = (0..layout.n).map(|i| solution.flow[e + i]).collect();
    let witness = Allocation { y, z };

    Ok(TrimOutcome { report, graph: trimmed_graph, witness })
}

/// Routes the trimmed demands without any dummy supply, proving the report
/// honest (or naming the campaign that still cannot be served).
pub fn certify_feasible(graph: &AllocationGraph, report: &TrimReport) -> Result<CertifyOutcome> {
    let demands = report.trimmed_demands();
    let trimmed = graph.with_demands(&demands);
    route_demands(&trimmed)
}

/// Zero-cost routing of the graph's own demands; `Feasible` carries the flow.
pub fn route_demands(graph: &AllocationGraph) -> Result<CertifyOutcome> {
    let layout = Layout::of(graph, false);
    let mut arcs = Vec::with_capacity(graph.edges.len() + layout.n);
    for edge in &graph.edges {
        arcs.push(FlowArc {
            from: edge.supply,
            to: layout.n + edge.campaign,
            cost: 0.0,
            capacity: f64::INFINITY,
        });
    }
    for i in 0..layout.n {
        arcs.push(FlowArc { from: i, to: layout.sink, cost: 0.0, capacity: f64::INFINITY });
    }
    let mut supply = vec![0.0; layout.sink + 1];
    for (i, node) in graph.supplies.iter().enumerate() {
        supply[i] = node.weight;
    }
    for (j, campaign) in graph.campaigns.iter().enumerate() {
        supply[layout.n + j] = -campaign.demand;
    }
    // When demand exceeds supply this balance goes positive and the problem
    // is infeasible; campaigns precede the sink in node order, so the report
    // below still names a campaign.
    supply[layout.sink] = -(graph.total_supply() - graph.total_demand());

    let problem = FlowProblem { node_count: layout.sink + 1, supply, arcs };
    match solve_min_cost_flow(&problem)? {
        FlowOutcome::Optimal(solution) => {
            let e = graph.edges.len();
            let y = solution.flow[..e].to_vec();
            let z = (0..layout.n).map(|i| solution.flow[e + i]).collect();
            Ok(CertifyOutcome::Feasible(Allocation { y, z }))
        }
        FlowOutcome::Infeasible(inf) => {
            let campaign = if inf.node >= layout.n && inf.node < layout.sink {
                graph.campaigns[inf.node - layout.n].id.clone()
            } else {
                format!("node {}", inf.node)
            };
            Ok(CertifyOutcome::Infeasible { campaign, residual: inf.residual })
        }
    }
}
