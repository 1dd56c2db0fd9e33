//! Synthetic instance generation: lognormal spot prices, attribute profiles
//! drawn from a configurable schema, conjunctive targeting predicates, and a
//! logistic click model over `attribute=value` features.
//!
//! All randomness flows from one seed. Supplies draw from the master stream;
//! each campaign draws from a stream hashed from (seed, campaign id), so
//! adding a campaign never disturbs the others. The draw order is part of
//! the format: reordering draws changes every instance.

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::files::Instance;
use crate::graph::{
    AttrMap, AttrValue, Campaign, Clause, EdgeSpec, PenaltySpec, SupplyNode, TargetingPredicate,
    evaluate_eligibility,
};
use crate::sampling::stream_seed;

/// Attempts to draw a predicate with nonempty eligible supply before the
/// campaign is kept as-is and flagged in the instance metadata.
const PREDICATE_RETRIES: usize = 8;
const CAMPAIGN_CLICK_VALUE: f64 = 10.0;
const UNDERDELIVERY_COST: f64 = 10.0;
const CLICK_OFFSET_SIGMA: f64 = 0.5;
const WEIGHT_RANGE: (f64, f64) = (10.0, 100.0);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub values: Vec<String>,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, values: &[&str]) -> Self {
        AttributeSpec {
            name: name.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        }
    }
}

/// Sign convention inside the logistic exponent. `Conventional` is
/// 1/(1+exp(−score)), increasing in the score; `AsPrinted` keeps the positive
/// exponent, so heavier features mean fewer clicks. The choice travels with
/// the instance via the config echo in its metadata.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogisticSign {
    #[default]
    Conventional,
    AsPrinted,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub num_supply: usize,
    pub num_campaigns: usize,
    pub attribute_schema: Vec<AttributeSpec>,
    /// Spot prices are exp(N(logMean, logSigma)) clamped to [priceMin, priceMax].
    pub price_log_mean: f64,
    pub price_log_sigma: f64,
    pub price_min: f64,
    pub price_max: f64,
    /// Logistic weights keyed "attribute=value", plus the "bias" intercept.
    pub click_weights: BTreeMap<String, f64>,
    /// Campaign j demands demandScale · S_j / numCampaigns, where S_j is its
    /// eligible supply weight.
    pub demand_scale: f64,
    /// Probability that a predicate constrains any given attribute. A
    /// constrained attribute keeps a uniform proper subset of its values, so
    /// each constraint passes about half the supply.
    pub targeting_density: f64,
    pub logistic_sign: LogisticSign,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_supply: 1000,
            num_campaigns: 100,
            attribute_schema: vec![
                AttributeSpec::new("gender", &["male", "female"]),
                AttributeSpec::new("age", &["18-24", "25-34", "35-44", "45-54", "55+"]),
                AttributeSpec::new("location", &["california", "oregon", "texas", "newyork"]),
            ],
            price_log_mean: -0.7,
            price_log_sigma: 0.6,
            price_min: 0.046,
            price_max: 4.350,
            // Bias puts the base rate near 7.6%; the feature weights make
            // click probability vary across supply within each campaign, so
            // click value is a real objective rather than a constant.
            click_weights: BTreeMap::from([
                ("bias".to_string(), -2.5),
                ("gender=female".to_string(), 0.25),
                ("age=18-24".to_string(), 0.5),
                ("age=25-34".to_string(), 0.2),
                ("age=55+".to_string(), -0.4),
                ("location=california".to_string(), 0.15),
            ]),
            demand_scale: 1.0,
            targeting_density: 0.8,
            logistic_sign: LogisticSign::default(),
            seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_supply == 0 {
            return Err(Error::InvalidInstance("numSupply must be at least 1".into()));
        }
        if self.num_campaigns == 0 {
            return Err(Error::InvalidInstance("numCampaigns must be at least 1".into()));
        }
        let mut names = BTreeSet::new();
        for spec in &self.attribute_schema {
            if spec.name.is_empty() {
                return Err(Error::InvalidInstance("attribute with empty name".into()));
            }
            if spec.values.is_empty() {
                return Err(Error::InvalidInstance(format!(
                    "attribute `{}` has no values",
                    spec.name
                )));
            }
            if !names.insert(&spec.name) {
                return Err(Error::InvalidInstance(format!(
                    "duplicate attribute `{}`",
                    spec.name
                )));
            }
        }
        if !self.price_log_mean.is_finite() {
            return Err(Error::InvalidInstance(format!(
                "priceLogMean = {} is not finite",
                self.price_log_mean
            )));
        }
        if !self.price_log_sigma.is_finite() || self.price_log_sigma < 0.0 {
            return Err(Error::InvalidInstance(format!(
                "priceLogSigma = {} must be finite and nonnegative",
                self.price_log_sigma
            )));
        }
        if !(self.price_min.is_finite() && self.price_max.is_finite())
            || self.price_min < 0.0
            || self.price_min > self.price_max
        {
            return Err(Error::InvalidInstance(format!(
                "price range [{}, {}] is invalid",
                self.price_min, self.price_max
            )));
        }
        for (key, w) in &self.click_weights {
            if !w.is_finite() {
                return Err(Error::InvalidInstance(format!(
                    "click weight `{key}` = {w} is not finite"
                )));
            }
        }
        if !self.demand_scale.is_finite() || self.demand_scale <= 0.0 {
            return Err(Error::InvalidInstance(format!(
                "demandScale = {} must be positive",
                self.demand_scale
            )));
        }
        if !(self.targeting_density > 0.0 && self.targeting_density <= 1.0) {
            return Err(Error::KnobOutOfRange {
                knob: "targetingDensity",
                value: self.targeting_density,
                range: "(0, 1]",
            });
        }
        Ok(())
    }
}

pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance> {
    config.validate()?;
    let price_dist = LogNormal::new(config.price_log_mean, config.price_log_sigma)
        .map_err(|e| Error::InvalidInstance(format!("price distribution: {e}")))?;
    let offset_dist = Normal::new(0.0, CLICK_OFFSET_SIGMA).expect("constant sigma");

    let mut master = StdRng::seed_from_u64(config.seed);
    let mut supplies = Vec::with_capacity(config.num_supply);
    for i in 0..config.num_supply {
        let mut attributes = AttrMap::new();
        for spec in &config.attribute_schema {
            let pick = master.gen_range(0..spec.values.len());
            attributes.insert(spec.name.clone(), AttrValue::Text(spec.values[pick].clone()));
        }
        let weight = master.gen_range(WEIGHT_RANGE.0..WEIGHT_RANGE.1);
        let price = price_dist
            .sample(&mut master)
            .clamp(config.price_min, config.price_max);
        supplies.push(SupplyNode {
            id: format!("u{:06}", i + 1),
            weight,
            price,
            attributes,
        });
    }

    let mut campaigns = Vec::with_capacity(config.num_campaigns);
    let mut offsets = Vec::with_capacity(config.num_campaigns);
    let mut starved = Vec::new();
    for j in 0..config.num_campaigns {
        let id = format!("c{:04}", j + 1);
        let mut stream = StdRng::seed_from_u64(stream_seed(config.seed, &id));
        let offset = offset_dist.sample(&mut stream);
        let mut targeting = TargetingPredicate::default();
        let mut eligible = 0.0;
        for _ in 0..=PREDICATE_RETRIES {
            targeting = draw_predicate(&mut stream, config);
            eligible = supplies
                .iter()
                .filter(|s| evaluate_eligibility(&targeting, &s.attributes))
                .map(|s| s.weight)
                .sum();
            if eligible > 0.0 {
                break;
            }
        }
        if eligible == 0.0 {
            starved.push(id.clone());
        }
        campaigns.push(Campaign {
            id,
            demand: config.demand_scale * eligible / config.num_campaigns as f64,
            priority: 1.0,
            click_value: CAMPAIGN_CLICK_VALUE,
            conversion_value: 0.0,
            penalty: PenaltySpec::unbounded(UNDERDELIVERY_COST),
            targeting,
        });
        offsets.push(offset);
    }

    let bias = config.click_weights.get("bias").copied().unwrap_or(0.0);
    let mut edges = Vec::new();
    for (campaign, &offset) in campaigns.iter().zip(&offsets) {
        for supply in &supplies {
            if !evaluate_eligibility(&campaign.targeting, &supply.attributes) {
                continue;
            }
            let mut score = bias + offset;
            for (name, value) in &supply.attributes {
                if let AttrValue::Text(text) = value {
                    if let Some(w) = config.click_weights.get(&format!("{name}={text}")) {
                        score += w;
                    }
                }
            }
            let click_prob = match config.logistic_sign {
                LogisticSign::Conventional => 1.0 / (1.0 + (-score).exp()),
                LogisticSign::AsPrinted => 1.0 / (1.0 + score.exp()),
            };
            edges.push(EdgeSpec {
                supply: supply.id.clone(),
                campaign: campaign.id.clone(),
                click_prob,
                conv_prob: 0.0,
            });
        }
    }

    let mut metadata = serde_json::Map::new();
    metadata.insert(
        "generator".into(),
        serde_json::to_value(config).map_err(|e| Error::InvalidInstance(e.to_string()))?,
    );
    if !starved.is_empty() {
        metadata.insert(
            "zeroEligibleCampaigns".into(),
            serde_json::to_value(&starved).map_err(|e| Error::InvalidInstance(e.to_string()))?,
        );
    }
    Ok(Instance {
        metadata: Some(metadata.into()),
        supplies,
        campaigns,
        edges: Some(edges),
    })
}

/// Constrains each multi-valued attribute with probability `targetingDensity`
/// to a uniformly sized proper subset of its alphabet, ascending.
fn draw_predicate(stream: &mut StdRng, config: &GeneratorConfig) -> TargetingPredicate {
    let mut clauses = BTreeMap::new();
    for spec in &config.attribute_schema {
        if spec.values.len() < 2 || !stream.gen_bool(config.targeting_density) {
            continue;
        }
        let size = stream.gen_range(1..spec.values.len());
        let mut picks = rand::seq::index::sample(stream, spec.values.len(), size).into_vec();
        picks.sort_unstable();
        let allowed = picks
            .into_iter()
            .map(|k| AttrValue::Text(spec.values[k].clone()))
            .collect();
        clauses.insert(spec.name.clone(), Clause::AnyOf(allowed));
    }
    TargetingPredicate { clauses, date_range: None }
}
