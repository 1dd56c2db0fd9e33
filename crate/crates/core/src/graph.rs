//! Bipartite allocation graph: forecast user visits on one side, guaranteed
//! campaigns on the other, an edge wherever a visit matches a campaign's
//! targeting predicate.
//!
//! Construction derives the two quantities every solver downstream relies on:
//!
//! * `target` (θ_ij = s_i · d_j / S_j): the share of campaign j a perfectly
//!   representative allocation would place on visit i, where S_j is the total
//!   eligible supply weight of j;
//! * `value` (w_ij = Wc_j · pc_ij + Wa_j · pa_ij): the expected click plus
//!   conversion value of serving one unit of visit i to campaign j.

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A visit attribute value. Dates travel as text and are parsed only when a
/// predicate's date interval inspects them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Text(String),
}

impl AttrValue {
    pub fn as_date(&self) -> Option<NaiveDate> {
        match self {
            AttrValue::Text(s) => NaiveDate::parse_from_str(s, "%Y-%m-%d").ok(),
            AttrValue::Number(_) => None,
        }
    }
}

impl From<&str> for AttrValue {
    fn from(s: &str) -> Self {
        AttrValue::Text(s.to_owned())
    }
}

impl From<f64> for AttrValue {
    fn from(v: f64) -> Self {
        AttrValue::Number(v)
    }
}

pub type AttrMap = BTreeMap<String, AttrValue>;

/// One conjunct of a targeting predicate: the attribute must either take one
/// of finitely many values or fall inside a closed numeric interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Clause {
    AnyOf(Vec<AttrValue>),
    Range { min: f64, max: f64 },
}

impl Clause {
    fn matches(&self, value: &AttrValue) -> bool {
        match self {
            Clause::AnyOf(allowed) => allowed.iter().any(|a| a == value),
            Clause::Range { min, max } => match value {
                AttrValue::Number(v) => *min <= *v && *v <= *max,
                AttrValue::Text(_) => false,
            },
        }
    }
}

/// Closed date interval applied to one (text, ISO-8601) attribute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DateRange {
    pub attribute: String,
    pub start: String,
    pub end: String,
}

impl DateRange {
    pub fn parsed(&self) -> Option<(NaiveDate, NaiveDate)> {
        let start = NaiveDate::parse_from_str(&self.start, "%Y-%m-%d").ok()?;
        let end = NaiveDate::parse_from_str(&self.end, "%Y-%m-%d").ok()?;
        Some((start, end))
    }
}

/// Conjunction of per-attribute clauses plus an optional date interval.
/// A visit missing a referenced attribute fails the predicate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TargetingPredicate {
    #[serde(default)]
    pub clauses: BTreeMap<String, Clause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date_range: Option<DateRange>,
}

/// True iff `attributes` satisfies every clause of `predicate`.
pub fn evaluate_eligibility(predicate: &TargetingPredicate, attributes: &AttrMap) -> bool {
    for (attr, clause) in &predicate.clauses {
        match attributes.get(attr) {
            Some(value) if clause.matches(value) => {}
            _ => return false,
        }
    }
    if let Some(range) = &predicate.date_range {
        let Some((start, end)) = range.parsed() else {
            return false;
        };
        match attributes.get(&range.attribute).and_then(AttrValue::as_date) {
            Some(d) if start <= d && d <= end => {}
            _ => return false,
        }
    }
    true
}

/// A forecast slice of user visits: `weight` impressions sharing one
/// attribute profile, each worth `price` on the spot market.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupplyNode {
    pub id: String,
    pub weight: f64,
    pub price: f64,
    #[serde(default)]
    pub attributes: AttrMap,
}

/// One step of a piecewise-linear under-delivery penalty. `capacity: None`
/// marks the unbounded final step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PenaltyTier {
    pub capacity: Option<f64>,
    pub unit_cost: f64,
}

/// Convex piecewise-linear penalty for under-delivering a campaign: tiers are
/// consumed in order, so strictly increasing unit costs keep it convex and
/// penalty(0) = 0 always holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub tiers: Vec<PenaltyTier>,
}

impl PenaltySpec {
    pub fn unbounded(unit_cost: f64) -> Self {
        PenaltySpec {
            tiers: vec![PenaltyTier {
                capacity: None,
                unit_cost,
            }],
        }
    }

    /// Total capacity across tiers; `None` means unlimited.
    pub fn coverage(&self) -> Option<f64> {
        let mut total = 0.0;
        for tier in &self.tiers {
            match tier.capacity {
                Some(c) => total += c,
                None => return None,
            }
        }
        Some(total)
    }

    /// Penalty for under-delivering `shortfall` units.
    pub fn cost(&self, shortfall: f64) -> f64 {
        let mut remaining = shortfall.max(0.0);
        let mut total = 0.0;
        for tier in &self.tiers {
            if remaining <= 0.0 {
                break;
            }
            let used = match tier.capacity {
                Some(c) => remaining.min(c),
                None => remaining,
            };
            total += used * tier.unit_cost;
            remaining -= used;
        }
        total
    }

    fn validate(&self, campaign: &str, demand: f64) -> Result<()> {
        let mut prev_cost = f64::NEG_INFINITY;
        for (t, tier) in self.tiers.iter().enumerate() {
            if !tier.unit_cost.is_finite() || tier.unit_cost <= 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "campaign `{campaign}`: penalty tier {t} has invalid unit cost {}",
                    tier.unit_cost
                )));
            }
            if tier.unit_cost <= prev_cost {
                return Err(Error::InvalidInstance(format!(
                    "campaign `{campaign}`: penalty tier unit costs must be strictly increasing"
                )));
            }
            prev_cost = tier.unit_cost;
            match tier.capacity {
                Some(c) if !(c.is_finite() && c > 0.0) => {
                    return Err(Error::InvalidInstance(format!(
                        "campaign `{campaign}`: penalty tier {t} has invalid capacity {c}"
                    )));
                }
                None if t + 1 != self.tiers.len() => {
                    return Err(Error::InvalidInstance(format!(
                        "campaign `{campaign}`: only the last penalty tier may be unbounded"
                    )));
                }
                _ => {}
            }
        }
        if let Some(total) = self.coverage() {
            if total + 1e-9 < demand {
                return Err(Error::InvalidInstance(format!(
                    "campaign `{campaign}`: penalty tiers cover {total} units but demand is {demand}; \
                     tiers must cover the full demand"
                )));
            }
        }
        Ok(())
    }
}

/// A guaranteed campaign: `demand` impressions to deliver, a priority weight
/// for representativeness, per-click / per-conversion values, the penalty for
/// under-delivery, and the audience predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Campaign {
    pub id: String,
    pub demand: f64,
    #[serde(default = "default_priority")]
    pub priority: f64,
    #[serde(default)]
    pub click_value: f64,
    #[serde(default)]
    pub conversion_value: f64,
    pub penalty: PenaltySpec,
    #[serde(default)]
    pub targeting: TargetingPredicate,
}

fn default_priority() -> f64 {
    1.0
}

/// Eligible (visit, campaign) pair with its click/conversion probabilities
/// and the derived value and representativeness target.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub supply: usize,
    pub campaign: usize,
    pub click_prob: f64,
    pub conv_prob: f64,
    /// w_ij = Wc_j · pc_ij + Wa_j · pa_ij
    pub value: f64,
    /// θ_ij = s_i · d_j / S_j (0 when the campaign has no eligible weight)
    pub target: f64,
}

/// Explicit edge as it appears in an instance file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EdgeSpec {
    pub supply: String,
    pub campaign: String,
    #[serde(default)]
    pub click_prob: f64,
    #[serde(default)]
    pub conv_prob: f64,
}

/// The problem instance every solver consumes. Edges keep input order, so an
/// identically ordered input yields an identically ordered graph.
#[derive(Clone, Debug)]
pub struct AllocationGraph {
    pub supplies: Vec<SupplyNode>,
    pub campaigns: Vec<Campaign>,
    pub edges: Vec<Edge>,
    /// Edge indices by campaign (B_j), ascending.
    pub by_campaign: Vec<Vec<usize>>,
    /// Edge indices by supply, ascending.
    pub by_supply: Vec<Vec<usize>>,
    /// S_j: total eligible supply weight per campaign.
    pub eligible_supply: Vec<f64>,
    supply_index: HashMap<String, usize>,
    campaign_index: HashMap<String, usize>,
}

/// w_ij for one edge.
pub fn compute_edge_value(campaign: &Campaign, click_prob: f64, conv_prob: f64) -> f64 {
    campaign.click_value * click_prob + campaign.conversion_value * conv_prob
}

/// θ for every eligible visit of one campaign with eligible weight `total`.
pub fn compute_targets(weights: &[f64], demand: f64, total: f64) -> Vec<f64> {
    weights
        .iter()
        .map(|s| if total > 0.0 { s * demand / total } else { 0.0 })
        .collect()
}

impl AllocationGraph {
    /// Builds the graph. With `edges: None` the edge set is derived from the
    /// targeting predicates and probabilities default to zero; an explicit
    /// edge list is taken as-is (ids must resolve, duplicates are rejected).
    pub fn build(
        supplies: Vec<SupplyNode>,
        campaigns: Vec<Campaign>,
        edges: Option<Vec<EdgeSpec>>,
    ) -> Result<Self> {
        let mut supply_index = HashMap::with_capacity(supplies.len());
        for (i, s) in supplies.iter().enumerate() {
            if !s.weight.is_finite() || s.weight < 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "supply `{}`: invalid weight {}",
                    s.id, s.weight
                )));
            }
            if !s.price.is_finite() || s.price < 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "supply `{}`: invalid price {}",
                    s.id, s.price
                )));
            }
            if supply_index.insert(s.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "supply",
                    id: s.id.clone(),
                });
            }
        }
        let mut campaign_index = HashMap::with_capacity(campaigns.len());
        for (j, c) in campaigns.iter().enumerate() {
            if !c.demand.is_finite() || c.demand < 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "campaign `{}`: invalid demand {}",
                    c.id, c.demand
                )));
            }
            if !c.priority.is_finite() || c.priority <= 0.0 {
                return Err(Error::InvalidInstance(format!(
                    "campaign `{}`: priority must be positive, got {}",
                    c.id, c.priority
                )));
            }
            c.penalty.validate(&c.id, c.demand)?;
            if campaign_index.insert(c.id.clone(), j).is_some() {
                return Err(Error::DuplicateId {
                    kind: "campaign",
                    id: c.id.clone(),
                });
            }
        }

        let mut raw: Vec<(usize, usize, f64, f64)> = Vec::new();
        match edges {
            Some(specs) => {
                let mut seen = HashMap::new();
                for spec in specs {
                    let &i = supply_index.get(&spec.supply).ok_or_else(|| Error::UnknownId {
                        kind: "supply",
                        id: spec.supply.clone(),
                    })?;
                    let &j = campaign_index
                        .get(&spec.campaign)
                        .ok_or_else(|| Error::UnknownId {
                            kind: "campaign",
                            id: spec.campaign.clone(),
                        })?;
                    if seen.insert((i, j), ()).is_some() {
                        return Err(Error::InvalidInstance(format!(
                            "duplicate edge ({}, {})",
                            spec.supply, spec.campaign
                        )));
                    }
                    for (name, p) in [("click_prob", spec.click_prob), ("conv_prob", spec.conv_prob)] {
                        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                            return Err(Error::InvalidInstance(format!(
                                "edge ({}, {}): {name} = {p} outside [0, 1]",
                                spec.supply, spec.campaign
                            )));
                        }
                    }
                    raw.push((i, j, spec.click_prob, spec.conv_prob));
                }
            }
            None => {
                for (j, c) in campaigns.iter().enumerate() {
                    for (i, s) in supplies.iter().enumerate() {
                        if evaluate_eligibility(&c.targeting, &s.attributes) {
                            raw.push((i, j, 0.0, 0.0));
                        }
                    }
                }
            }
        }

        let mut graph = AllocationGraph {
            by_campaign: vec![Vec::new(); campaigns.len()],
            by_supply: vec![Vec::new(); supplies.len()],
            eligible_supply: vec![0.0; campaigns.len()],
            edges: Vec::with_capacity(raw.len()),
            supplies,
            campaigns,
            supply_index,
            campaign_index,
        };
        for (e, (i, j, click_prob, conv_prob)) in raw.into_iter().enumerate() {
            graph.eligible_supply[j] += graph.supplies[i].weight;
            graph.by_campaign[j].push(e);
            graph.by_supply[i].push(e);
            graph.edges.push(Edge {
                supply: i,
                campaign: j,
                click_prob,
                conv_prob,
                value: compute_edge_value(&graph.campaigns[j], click_prob, conv_prob),
                target: 0.0,
            });
        }
        graph.recompute_targets();
        Ok(graph)
    }

    fn recompute_targets(&mut self) {
        for edge in &mut self.edges {
            let total = self.eligible_supply[edge.campaign];
            edge.target = if total > 0.0 {
                self.supplies[edge.supply].weight * self.campaigns[edge.campaign].demand / total
            } else {
                0.0
            };
        }
    }

    /// Same graph with demands replaced (e.g. after a feasibility trim);
    /// representativeness targets are recomputed for the new demands.
    pub fn with_demands(&self, demands: &[f64]) -> Self {
        assert_eq!(demands.len(), self.campaigns.len());
        let mut graph = self.clone();
        for (c, &d) in graph.campaigns.iter_mut().zip(demands) {
            c.demand = d;
        }
        graph.recompute_targets();
        graph
    }

    pub fn supply_count(&self) -> usize {
        self.supplies.len()
    }

    pub fn campaign_count(&self) -> usize {
        self.campaigns.len()
    }

    pub fn supply_idx(&self, id: &str) -> Option<usize> {
        self.supply_index.get(id).copied()
    }

    pub fn campaign_idx(&self, id: &str) -> Option<usize> {
        self.campaign_index.get(id).copied()
    }

    pub fn total_supply(&self) -> f64 {
        self.supplies.iter().map(|s| s.weight).sum()
    }

    pub fn total_demand(&self) -> f64 {
        self.campaigns.iter().map(|c| c.demand).sum()
    }

    pub fn demands(&self) -> Vec<f64> {
        self.campaigns.iter().map(|c| c.demand).collect()
    }
}

/// A primal solution: `y[e]` units of edge `e`'s supply serving its campaign,
/// `z[i]` units of supply `i` released to the spot market.
#[derive(Clone, Debug, PartialEq)]
pub struct Allocation {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

impl Allocation {
    pub fn zeros(graph: &AllocationGraph) -> Self {
        Allocation {
            y: vec![0.0; graph.edges.len()],
            z: graph.supplies.iter().map(|s| s.weight).collect(),
        }
    }
}

/// Numeric verdict on an allocation; structural mismatches (wrong vector
/// lengths, unknown ids in a file) are errors before a report exists.
#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub max_supply_residual: f64,
    pub max_demand_residual: f64,
    pub min_component: f64,
    pub residual_scale: f64,
}

impl ValidationReport {
    pub fn ok(&self, tol: f64) -> bool {
        let bound = tol * self.residual_scale;
        self.max_supply_residual <= bound
            && self.max_demand_residual <= bound
            && self.min_component >= -bound
    }
}

/// Checks supply conservation (Σ_j y_ij + z_i = s_i), demand satisfaction
/// (Σ_i y_ij = d_j) and nonnegativity.
pub fn validate_allocation(graph: &AllocationGraph, allocation: &Allocation) -> Result<ValidationReport> {
    if allocation.y.len() != graph.edges.len() || allocation.z.len() != graph.supplies.len() {
        return Err(Error::InvalidInstance(format!(
            "allocation shape ({} edges, {} supplies) does not match graph ({}, {})",
            allocation.y.len(),
            allocation.z.len(),
            graph.edges.len(),
            graph.supplies.len()
        )));
    }
    let mut max_supply = 0.0f64;
    for (i, s) in graph.supplies.iter().enumerate() {
        let served: f64 = graph.by_supply[i].iter().map(|&e| allocation.y[e]).sum();
        max_supply = max_supply.max((served + allocation.z[i] - s.weight).abs());
    }
    let mut max_demand = 0.0f64;
    for (j, c) in graph.campaigns.iter().enumerate() {
        let served: f64 = graph.by_campaign[j].iter().map(|&e| allocation.y[e]).sum();
        max_demand = max_demand.max((served - c.demand).abs());
    }
    let min_component = allocation
        .y
        .iter()
        .chain(allocation.z.iter())
        .fold(f64::INFINITY, |m, &v| m.min(v));
    let scale = graph
        .supplies
        .iter()
        .map(|s| s.weight)
        .fold(1.0f64, |m, w| m.max(w))
        .max(graph.campaigns.iter().map(|c| c.demand).fold(0.0, f64::max));
    Ok(ValidationReport {
        max_supply_residual: max_supply,
        max_demand_residual: max_demand,
        min_component: if min_component.is_finite() { min_component } else { 0.0 },
        residual_scale: scale,
    })
}
