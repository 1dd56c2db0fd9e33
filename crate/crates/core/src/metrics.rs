//! Objective accounting and report shaping: F1/F2/F3 recomputed from an
//! allocation, baseline-normalized table rows, and frontier point files.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Allocation, AllocationGraph};

/// Kahan-Babuska compensated sum; exact enough that metric totals do not
/// drift with edge count.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// All reportable objective totals for one allocation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Objectives {
    /// F1: priority-weighted squared deviation from targets, ≤ 0.
    pub representativeness: f64,
    /// F2: click and conversion value of delivered guaranteed impressions.
    pub click_value: f64,
    /// Expected click count, with campaign dollar weights stripped.
    pub clicks_only: f64,
    /// F3: spot revenue of unallocated supply.
    pub spot_revenue: f64,
}

pub fn compute_objectives(graph: &AllocationGraph, allocation: &Allocation) -> Objectives {
    let f1 = neumaier_sum(graph.edges.iter().enumerate().map(|(e, edge)| {
        if edge.target > 0.0 {
            let v = graph.campaigns[edge.campaign].priority;
            let d = allocation.y[e] - edge.target;
            -v / (2.0 * edge.target) * d * d
        } else {
            0.0
        }
    }));
    let f2 = neumaier_sum(
        graph.edges.iter().enumerate().map(|(e, edge)| edge.value * allocation.y[e]),
    );
    let clicks = neumaier_sum(
        graph.edges.iter().enumerate().map(|(e, edge)| edge.click_prob * allocation.y[e]),
    );
    let f3 = neumaier_sum(
        graph.supplies.iter().zip(&allocation.z).map(|(s, z)| s.price * z),
    );
    Objectives {
        representativeness: f1,
        click_value: f2,
        clicks_only: clicks,
        spot_revenue: f3,
    }
}

/// (F1, F2, F3).
pub fn compute_metrics(graph: &AllocationGraph, allocation: &Allocation) -> (f64, f64, f64) {
    let o = compute_objectives(graph, allocation);
    (o.representativeness, o.click_value, o.spot_revenue)
}

/// One table row: raw objective totals plus their baseline-normalized
/// counterparts. Monetary columns divide by the baseline value; gd divides
/// by |baseline gd| so the baseline row reads (1, 1, 1, -1). Columns whose
/// baseline is zero stay raw and are listed in `rawColumns`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsRow {
    pub label: String,
    pub ngd: f64,
    pub click: f64,
    pub ngd_plus_click: f64,
    pub gd: f64,
    pub normalized_ngd: f64,
    pub normalized_click: f64,
    pub normalized_ngd_plus_click: f64,
    pub normalized_gd: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub raw_columns: Vec<String>,
}

impl MetricsRow {
    /// A row with raw totals only; `normalize` fills the rest.
    pub fn raw(label: impl Into<String>, objectives: &Objectives) -> Self {
        MetricsRow {
            label: label.into(),
            ngd: objectives.spot_revenue,
            click: objectives.click_value,
            ngd_plus_click: objectives.spot_revenue + objectives.click_value,
            gd: objectives.representativeness,
            normalized_ngd: f64::NAN,
            normalized_click: f64::NAN,
            normalized_ngd_plus_click: f64::NAN,
            normalized_gd: f64::NAN,
            raw_columns: Vec::new(),
        }
    }
}

pub fn normalize(rows: &[MetricsRow], baseline: &MetricsRow) -> Vec<MetricsRow> {
    let scale = |value: f64, base: f64, raw: &mut Vec<String>, name: &str| {
        if base != 0.0 {
            value / base
        } else {
            raw.push(name.to_string());
            value
        }
    };
    rows.iter()
        .map(|row| {
            let mut out = row.clone();
            let mut raw = Vec::new();
            out.normalized_ngd = scale(row.ngd, baseline.ngd, &mut raw, "ngd");
            out.normalized_click = scale(row.click, baseline.click, &mut raw, "click");
            out.normalized_ngd_plus_click =
                scale(row.ngd_plus_click, baseline.ngd_plus_click, &mut raw, "ngdPlusClick");
            out.normalized_gd = scale(row.gd, baseline.gd.abs(), &mut raw, "gd");
            out.raw_columns = raw;
            out
        })
        .collect()
}

/// Which objective columns span the dominance comparison. All are oriented
/// as maximizations; gd is negative, so larger (closer to zero) wins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Axis {
    Ngd,
    Click,
    NgdPlusClick,
    Gd,
}

impl Axis {
    pub fn value(&self, row: &MetricsRow) -> f64 {
        match self {
            Axis::Ngd => row.ngd,
            Axis::Click => row.click,
            Axis::NgdPlusClick => row.ngd_plus_click,
            Axis::Gd => row.gd,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Axis::Ngd => "ngd",
            Axis::Click => "click",
            Axis::NgdPlusClick => "ngdPlusClick",
            Axis::Gd => "gd",
        }
    }
}

/// Indices of rows not dominated on the given axes, in input order.
pub fn pareto_indices(rows: &[MetricsRow], axes: &[Axis]) -> Vec<usize> {
    let dominates = |a: &MetricsRow, b: &MetricsRow| {
        let mut strict = false;
        for axis in axes {
            let (va, vb) = (axis.value(a), axis.value(b));
            if va < vb {
                return false;
            }
            if va > vb {
                strict = true;
            }
        }
        strict
    };
    (0..rows.len())
        .filter(|&i| !rows.iter().enumerate().any(|(j, other)| j != i && dominates(other, &rows[i])))
        .collect()
}

/// One sweep result destined for the point file: ordered knob values plus
/// the normalized metrics row.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontierPoint {
    pub knobs: Vec<(String, f64)>,
    pub row: MetricsRow,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FrontierSummary {
    pub points: usize,
    pub dominated: usize,
    pub frontier_size: usize,
    pub axes: Vec<String>,
}

const METRIC_COLUMNS: [&str; 8] = [
    "ngd",
    "click",
    "ngd_click",
    "gd",
    "normalized_ngd",
    "normalized_click",
    "normalized_ngd_click",
    "normalized_gd",
];

/// Renders the comma-delimited point file and its dominance summary. Rows
/// sort by the first knob (then the rest); two-knob sweeps also carry a
/// `contour` column indexing groups of equal primary-knob value.
pub fn emit_frontier(points: &[FrontierPoint], axes: &[Axis]) -> Result<(String, FrontierSummary)> {
    if points.is_empty() {
        return Err(Error::InvalidInstance("no points to emit".into()));
    }
    let knob_names: Vec<&str> = points[0].knobs.iter().map(|(n, _)| n.as_str()).collect();
    for p in points {
        let names: Vec<&str> = p.knobs.iter().map(|(n, _)| n.as_str()).collect();
        if names != knob_names {
            return Err(Error::InvalidInstance(format!(
                "inconsistent knob columns: {:?} vs {:?}",
                knob_names, names
            )));
        }
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = &points[a].knobs;
        let kb = &points[b].knobs;
        for ((_, va), (_, vb)) in ka.iter().zip(kb.iter()) {
            match va.total_cmp(vb) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        a.cmp(&b)
    });

    let contoured = knob_names.len() == 2;
    let mut contour_of = vec![0usize; points.len()];
    if contoured {
        let mut primary: Vec<f64> = points.iter().map(|p| p.knobs[0].1).collect();
        primary.sort_by(f64::total_cmp);
        primary.dedup();
        for (i, p) in points.iter().enumerate() {
            contour_of[i] = primary
                .binary_search_by(|v| v.total_cmp(&p.knobs[0].1))
                .expect("primary knob value present");
        }
    }

    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = knob_names.iter().map(|s| s.to_string()).collect();
    if contoured {
        header.push("contour".into());
    }
    header.extend(METRIC_COLUMNS.iter().map(|s| s.to_string()));
    writer
        .write_record(&header)
        .map_err(|e| Error::InvalidInstance(format!("point file: {e}")))?;
    for &i in &order {
        let p = &points[i];
        let mut record: Vec<String> = p.knobs.iter().map(|(_, v)| format!("{v}")).collect();
        if contoured {
            record.push(contour_of[i].to_string());
        }
        let r = &p.row;
        for v in [
            r.ngd,
            r.click,
            r.ngd_plus_click,
            r.gd,
            r.normalized_ngd,
            r.normalized_click,
            r.normalized_ngd_plus_click,
            r.normalized_gd,
        ] {
            record.push(format!("{v}"));
        }
        writer
            .write_record(&record)
            .map_err(|e| Error::InvalidInstance(format!("point file: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::InvalidInstance(format!("point file: {e}")))?;
    let text = String::from_utf8(bytes).expect("csv output is utf-8");

    let rows: Vec<MetricsRow> = points.iter().map(|p| p.row.clone()).collect();
    let frontier = pareto_indices(&rows, axes);
    let summary = FrontierSummary {
        points: points.len(),
        dominated: points.len() - frontier.len(),
        frontier_size: frontier.len(),
        axes: axes.iter().map(|a| a.name().to_string()).collect(),
    };
    Ok((text, summary))
}

/// Reads a point file back; numeric fields parse exactly because the writer
/// uses shortest round-trip formatting.
pub fn parse_frontier(text: &str) -> Result<Vec<FrontierPoint>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::InvalidInstance(format!("point file: {e}")))?
        .iter()
        .map(|s| s.to_string())
        .collect();
    let metric_start = header
        .iter()
        .position(|h| h == METRIC_COLUMNS[0])
        .ok_or_else(|| Error::InvalidInstance("point file lacks metric columns".into()))?;
    if header[metric_start..] != METRIC_COLUMNS {
        return Err(Error::InvalidInstance("unexpected point file columns".into()));
    }
    let has_contour = metric_start > 0 && header[metric_start - 1] == "contour";
    let knob_end = if has_contour { metric_start - 1 } else { metric_start };

    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::InvalidInstance(format!("point file: {e}")))?;
        let field = |idx: usize| -> Result<f64> {
            record[idx]
                .parse::<f64>()
                .map_err(|e| Error::InvalidInstance(format!("point file field {idx}: {e}")))
        };
        let knobs = (0..knob_end)
            .map(|k| Ok((header[k].clone(), field(k)?)))
            .collect::<Result<Vec<_>>>()?;
        let m = metric_start;
        let row = MetricsRow {
            label: String::new(),
            ngd: field(m)?,
            click: field(m + 1)?,
            ngd_plus_click: field(m + 2)?,
            gd: field(m + 3)?,
            normalized_ngd: field(m + 4)?,
            normalized_click: field(m + 5)?,
            normalized_ngd_plus_click: field(m + 6)?,
            normalized_gd: field(m + 7)?,
            raw_columns: Vec::new(),
        };
        points.push(FrontierPoint { knobs, row });
    }
    Ok(points)
}
