//! Disk formats: problem instances, allocations, duals, and the result
//! directories the command-line tools produce.
//!
//! Writes are atomic (temp file or temp directory, then rename), maps are
//! ordered, and nothing time-dependent is recorded, so rerunning with the
//! same inputs reproduces every file byte for byte.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::feasibility::TrimReport;
use crate::goal::{KnobConfig, RunResult, StageTrace};
use crate::graph::{Allocation, AllocationGraph, Campaign, EdgeSpec, SupplyNode};
use crate::metrics::{MetricsRow, Objectives};
use crate::qp::DualSolution;

/// An allocation problem as it appears on disk. `edges: None` means the
/// edge set is derived from the targeting predicates on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Instance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
    pub supplies: Vec<SupplyNode>,
    pub campaigns: Vec<Campaign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeSpec>>,
}

impl Instance {
    pub fn to_graph(&self) -> Result<AllocationGraph> {
        AllocationGraph::build(
            self.supplies.clone(),
            self.campaigns.clone(),
            self.edges.clone(),
        )
    }
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    read_json(path)
}

pub fn write_instance(path: impl AsRef<Path>, instance: &Instance) -> Result<()> {
    write_json_atomic(path, instance)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::format(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e))
}

/// Serializes `value` as pretty JSON with a trailing newline and moves it
/// into place via a temp file, so `path` is never left half-written.
pub fn write_json_atomic<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = to_json_string(value, &path.display().to_string())?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Same temp-then-rename discipline for plain text (point files, tables).
pub fn write_text_atomic(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn to_json_string<T: Serialize>(value: &T, context: &str) -> Result<String> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(context, e))?;
    text.push('\n');
    Ok(text)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Digest of a file's exact bytes, in `sha256:<hex>` form.
pub fn digest_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::format(path.display().to_string(), e))?;
    Ok(format!("sha256:{}", sha256_hex(&bytes)))
}

/// One delivered (visit, campaign) volume. Only positive volumes are written.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ServedEntry {
    pub supply: String,
    pub campaign: String,
    pub y: f64,
}

/// Spot-market remainder of one visit; present for every supply node.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpotEntry {
    pub supply: String,
    pub z: f64,
}

/// Sparse allocation as written to disk.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AllocationFile {
    pub served: Vec<ServedEntry>,
    pub spot: Vec<SpotEntry>,
}

pub fn allocation_to_file(graph: &AllocationGraph, allocation: &Allocation) -> AllocationFile {
    let served = graph
        .edges
        .iter()
        .zip(&allocation.y)
        .filter(|&(_, &y)| y > 0.0)
        .map(|(edge, &y)| ServedEntry {
            supply: graph.supplies[edge.supply].id.clone(),
            campaign: graph.campaigns[edge.campaign].id.clone(),
            y,
        })
        .collect();
    let spot = graph
        .supplies
        .iter()
        .zip(&allocation.z)
        .map(|(s, &z)| SpotEntry { supply: s.id.clone(), z })
        .collect();
    AllocationFile { served, spot }
}

/// Rebuilds a dense allocation from its file form. Ids must resolve, every
/// referenced edge must exist in the graph, entries must be unique and
/// nonnegative. Supplies without a spot entry get z = 0; conservation is the
/// validator's business, not the parser's.
pub fn allocation_from_file(graph: &AllocationGraph, file: &AllocationFile) -> Result<Allocation> {
    let mut edge_index = HashMap::with_capacity(graph.edges.len());
    for (e, edge) in graph.edges.iter().enumerate() {
        edge_index.insert((edge.supply, edge.campaign), e);
    }
    let mut allocation = Allocation {
        y: vec![0.0; graph.edges.len()],
        z: vec![0.0; graph.supply_count()],
    };
    let mut seen_edges = HashSet::new();
    for entry in &file.served {
        let i = graph.supply_idx(&entry.supply).ok_or_else(|| Error::UnknownId {
            kind: "supply",
            id: entry.supply.clone(),
        })?;
        let j = graph.campaign_idx(&entry.campaign).ok_or_else(|| Error::UnknownId {
            kind: "campaign",
            id: entry.campaign.clone(),
        })?;
        let &e = edge_index.get(&(i, j)).ok_or_else(|| {
            Error::InvalidInstance(format!(
                "allocation entry ({}, {}) has no matching edge in the instance",
                entry.supply, entry.campaign
            ))
        })?;
        if !seen_edges.insert(e) {
            return Err(Error::InvalidInstance(format!(
                "duplicate allocation entry ({}, {})",
                entry.supply, entry.campaign
            )));
        }
        if !entry.y.is_finite() || entry.y < 0.0 {
            return Err(Error::InvalidInstance(format!(
                "allocation entry ({}, {}): invalid volume {}",
                entry.supply, entry.campaign, entry.y
            )));
        }
        allocation.y[e] = entry.y;
    }
    let mut seen_supplies = HashSet::new();
    for entry in &file.spot {
        let i = graph.supply_idx(&entry.supply).ok_or_else(|| Error::UnknownId {
            kind: "supply",
            id: entry.supply.clone(),
        })?;
        if !seen_supplies.insert(i) {
            return Err(Error::InvalidInstance(format!(
                "duplicate spot entry for `{}`",
                entry.supply
            )));
        }
        if !entry.z.is_finite() || entry.z < 0.0 {
            return Err(Error::InvalidInstance(format!(
                "spot entry `{}`: invalid volume {}",
                entry.supply, entry.z
            )));
        }
        allocation.z[i] = entry.z;
    }
    Ok(allocation)
}

/// λ for one eligible pair; zero entries are omitted from the file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeDual {
    pub supply: String,
    pub campaign: String,
    pub value: f64,
}

/// Multiplier of one stage floor, labeled by which functional it bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FloorDual {
    pub label: String,
    pub value: f64,
}

/// Dual prices keyed by id: α by campaign, β and μ by supply, λ by edge.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DualsFile {
    pub alpha: BTreeMap<String, f64>,
    pub beta: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<EdgeDual>,
    pub mu: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rho: Vec<FloorDual>,
}

pub fn duals_to_file(
    graph: &AllocationGraph,
    duals: &DualSolution,
    trace: &StageTrace,
) -> DualsFile {
    let alpha = graph
        .campaigns
        .iter()
        .zip(&duals.alpha)
        .map(|(c, &a)| (c.id.clone(), a))
        .collect();
    let beta = graph
        .supplies
        .iter()
        .zip(&duals.beta)
        .map(|(s, &b)| (s.id.clone(), b))
        .collect();
    let mu = graph
        .supplies
        .iter()
        .zip(&duals.mu)
        .map(|(s, &m)| (s.id.clone(), m))
        .collect();
    let lambda = graph
        .edges
        .iter()
        .zip(&duals.lambda)
        .filter(|&(_, &l)| l > 0.0)
        .map(|(edge, &l)| EdgeDual {
            supply: graph.supplies[edge.supply].id.clone(),
            campaign: graph.campaigns[edge.campaign].id.clone(),
            value: l,
        })
        .collect();
    let rho = duals
        .rho
        .iter()
        .enumerate()
        .map(|(f, &r)| FloorDual {
            label: trace
                .floors
                .get(f)
                .map(|record| record.label.clone())
                .unwrap_or_else(|| format!("floor{f}")),
            value: r,
        })
        .collect();
    DualsFile { alpha, beta, lambda, mu, rho }
}

/// Grid of one sweep axis as echoed in the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AxisEcho {
    pub knob: String,
    pub values: Vec<f64>,
}

/// `manifest.json`: what produced a result directory. Deliberately free of
/// timestamps and host details.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub command: String,
    pub instance: String,
    pub instance_digest: String,
    pub knobs: KnobConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<AxisEcho>>,
    pub seed: u64,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub version: String,
}

/// `result.json`: everything recorded about one solved configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ResultFile {
    pub knobs: KnobConfig,
    pub feasibility: TrimReport,
    pub objectives: Objectives,
    pub metrics: MetricsRow,
    pub trace: StageTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovered_gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_objective: Option<f64>,
}

pub fn result_from_run(knobs: &KnobConfig, run: &RunResult, metrics: MetricsRow) -> ResultFile {
    ResultFile {
        knobs: knobs.clone(),
        feasibility: run.trim.clone(),
        objectives: run.objectives,
        metrics,
        trace: run.trace.clone(),
        recovered_gamma: run.recovered_gamma,
        solver_objective: run.solver_objective,
    }
}

/// Subdirectory name for sweep point `index`.
pub fn point_dir_name(index: usize) -> String {
    format!("p{index:04}")
}

/// Assembles a result directory in a temp sibling and renames it into place;
/// an error at any step leaves no trace at `target`, and an existing target
/// is never touched.
pub struct DirBuilder {
    files: Vec<(PathBuf, String)>,
}

impl DirBuilder {
    pub fn new() -> Self {
        DirBuilder { files: Vec::new() }
    }

    pub fn add_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<&mut Self> {
        let rel = rel.as_ref();
        let text = to_json_string(value, &rel.display().to_string())?;
        self.files.push((rel.to_path_buf(), text));
        Ok(self)
    }

    pub fn add_text(&mut self, rel: impl AsRef<Path>, text: String) -> &mut Self {
        self.files.push((rel.as_ref().to_path_buf(), text));
        self
    }

    pub fn write(self, target: impl AsRef<Path>) -> Result<()> {
        let target = target.as_ref();
        if target.exists() {
            return Err(Error::format(
                target.display().to_string(),
                "output directory already exists",
            ));
        }
        let name = target
            .file_name()
            .ok_or_else(|| Error::format(target.display().to_string(), "not a directory name"))?;
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let tmp = parent.join(format!(
            ".{}.tmp{}",
            name.to_string_lossy(),
            std::process::id()
        ));
        let _ = fs::remove_dir_all(&tmp);
        let build = || -> Result<()> {
            fs::create_dir(&tmp)?;
            for (rel, text) in &self.files {
                let dest = tmp.join(rel);
                if let Some(dir) = dest.parent() {
                    fs::create_dir_all(dir)?;
                }
                fs::write(&dest, text)?;
            }
            fs::rename(&tmp, target)?;
            Ok(())
        };
        let outcome = build();
        if outcome.is_err() {
            let _ = fs::remove_dir_all(&tmp);
        }
        outcome
    }
}

impl Default for DirBuilder {
    fn default() -> Self {
        DirBuilder::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goal::FloorRecord;
    use crate::graph::{AttrMap, PenaltySpec, TargetingPredicate};
    use serde_json::json;

    fn sample_instance() -> Instance {
        Instance {
            metadata: Some(json!({ "note": "fixture" })),
            supplies: vec![
                SupplyNode { id: "s1".into(), weight: 5.0, price: 0.25, attributes: AttrMap::new() },
                SupplyNode { id: "s2".into(), weight: 3.0, price: 0.75, attributes: AttrMap::new() },
            ],
            campaigns: vec![Campaign {
                id: "c1".into(),
                demand: 4.0,
                priority: 1.0,
                click_value: 10.0,
                conversion_value: 0.0,
                penalty: PenaltySpec::unbounded(2.0),
                targeting: TargetingPredicate::default(),
            }],
            edges: Some(vec![
                EdgeSpec { supply: "s1".into(), campaign: "c1".into(), click_prob: 0.1, conv_prob: 0.0 },
                EdgeSpec { supply: "s2".into(), campaign: "c1".into(), click_prob: 0.2, conv_prob: 0.0 },
            ]),
        }
    }

    #[test]
    fn instance_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("instance.json");
        let instance = sample_instance();
        write_instance(&path, &instance).unwrap();

        let text = fs::read_to_string(&path).unwrap();
        assert!(text.ends_with('\n'));

        let back = read_instance(&path).unwrap();
        assert_eq!(
            serde_json::to_value(&back).unwrap(),
            serde_json::to_value(&instance).unwrap()
        );
        assert_eq!(back.to_graph().unwrap().edges.len(), 2);
    }

    #[test]
    fn instance_rejects_unknown_top_level_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, r#"{ "suplies": [], "campaigns": [] }"#).unwrap();
        let err = read_instance(&path).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("bad.json"), "{message}");
        assert!(message.contains("suplies"), "{message}");
    }

    #[test]
    fn digest_matches_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f");
        fs::write(&path, "abc").unwrap();
        assert_eq!(
            digest_file(&path).unwrap(),
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn allocation_file_keeps_positive_served_only() {
        let graph = sample_instance().to_graph().unwrap();
        let allocation = Allocation { y: vec![2.0, 0.0], z: vec![3.0, 3.0] };
        let file = allocation_to_file(&graph, &allocation);
        assert_eq!(file.served.len(), 1);
        assert_eq!(file.served[0].supply, "s1");
        assert_eq!(file.spot.len(), 2);

        let back = allocation_from_file(&graph, &file).unwrap();
        assert_eq!(back, allocation);
    }

    #[test]
    fn allocation_file_rejects_bad_entries() {
        let graph = sample_instance().to_graph().unwrap();
        let base = allocation_to_file(&graph, &Allocation { y: vec![2.0, 2.0], z: vec![3.0, 1.0] });

        let mut unknown = base.clone();
        unknown.served[0].campaign = "nope".into();
        assert!(matches!(
            allocation_from_file(&graph, &unknown),
            Err(Error::UnknownId { kind: "campaign", .. })
        ));

        let mut negative = base.clone();
        negative.served[0].y = -1.0;
        assert!(allocation_from_file(&graph, &negative).is_err());

        let mut duplicate = base.clone();
        let extra = duplicate.served[0].clone();
        duplicate.served.push(extra);
        assert!(allocation_from_file(&graph, &duplicate).is_err());

        let mut dup_spot = base;
        let extra = dup_spot.spot[0].clone();
        dup_spot.spot.push(extra);
        assert!(allocation_from_file(&graph, &dup_spot).is_err());
    }

    #[test]
    fn allocation_entry_without_edge_is_rejected() {
        let mut instance = sample_instance();
        instance.edges.as_mut().unwrap().pop();
        let graph = instance.to_graph().unwrap();
        let file = AllocationFile {
            served: vec![ServedEntry { supply: "s2".into(), campaign: "c1".into(), y: 1.0 }],
            spot: vec![],
        };
        let err = allocation_from_file(&graph, &file).unwrap_err();
        assert!(err.to_string().contains("no matching edge"), "{err}");
    }

    #[test]
    fn duals_file_keys_by_id() {
        let graph = sample_instance().to_graph().unwrap();
        let duals = DualSolution {
            alpha: vec![1.5],
            beta: vec![0.25, 0.75],
            lambda: vec![0.0, 0.5],
            mu: vec![0.0, 0.25],
            rho: vec![2.0],
        };
        let trace = StageTrace {
            floors: vec![FloorRecord {
                label: "revenue".into(),
                source_optimum: 4.0,
                fraction: 0.75,
                floor: 3.0,
                attained: 3.0,
                multiplier: 2.0,
                binding: true,
            }],
            ..StageTrace::default()
        };
        let file = duals_to_file(&graph, &duals, &trace);
        assert_eq!(file.alpha["c1"], 1.5);
        assert_eq!(file.beta["s2"], 0.75);
        assert_eq!(file.lambda.len(), 1);
        assert_eq!(file.lambda[0].campaign, "c1");
        assert_eq!(file.lambda[0].value, 0.5);
        assert_eq!(file.rho[0].label, "revenue");
        assert_eq!(file.rho[0].value, 2.0);
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("value.json");
        write_json_atomic(&path, &json!({ "v": 1 })).unwrap();
        write_json_atomic(&path, &json!({ "v": 2 })).unwrap();
        let back: serde_json::Value = read_json(&path).unwrap();
        assert_eq!(back["v"], 2);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn dir_builder_writes_nested_files_once() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("out").join("run1");

        let mut builder = DirBuilder::new();
        builder.add_json("manifest.json", &json!({ "command": "solve" })).unwrap();
        builder
            .add_json(Path::new("points").join("p0000").join("result.json"), &json!({ "ok": true }))
            .unwrap();
        builder.add_text("frontier.csv", "a,b\n1,2\n".into());
        builder.write(&target).unwrap();

        assert!(target.join("manifest.json").is_file());
        assert!(target.join("points/p0000/result.json").is_file());
        assert_eq!(fs::read_to_string(target.join("frontier.csv")).unwrap(), "a,b\n1,2\n");
        assert_eq!(fs::read_dir(dir.path().join("out")).unwrap().count(), 1);

        let mut second = DirBuilder::new();
        second.add_text("other.txt", "x".into());
        let err = second.write(&target).unwrap_err();
        assert!(err.to_string().contains("already exists"), "{err}");
        assert!(target.join("manifest.json").is_file());
        assert!(!target.join("other.txt").exists());
    }

    #[test]
    fn point_dir_names_are_zero_padded() {
        assert_eq!(point_dir_name(0), "p0000");
        assert_eq!(point_dir_name(42), "p0042");
        assert_eq!(point_dir_name(12345), "p12345");
    }
}
