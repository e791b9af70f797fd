// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_stealth, clock_net, fits_budget, insert_ht, sample_spec, HtGenError, HtTemplateSpec, StealthReport};
use crate::netlist::{write_graph_json, CellLibrary, Netlist};
use crate::{derive_seed, seeded_rng};

pub const MANIFEST_VERSION: u32 = 1;

const SPEC_STREAM: u64 = 0;
const INSERT_STREAM: u64 = 1;
const STEALTH_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedSample {
    pub host: String,
    pub index: usize,
    pub seed: u64,
    pub netlist: Netlist,
    pub spec: HtTemplateSpec,
    pub trigger_cell: String,
    pub stealth: StealthReport,
}

impl GeneratedSample {
    /// `<host>_<k>`, also the netlist's name.
    pub fn name(&self) -> String {
        format!("{}_{}", self.host, self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub file: String,
    pub host: String,
    pub index: usize,
    pub seed: u64,
    pub spec: HtTemplateSpec,
    pub trigger_cell: String,
    pub nodes: usize,
    pub trojan_nodes: usize,
    pub host_nodes: usize,
    pub stealth_vectors: usize,
    pub stealth_exhaustive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub samples_per_host: usize,
    pub hosts: Vec<String>,
    pub total_nodes: usize,
    pub total_trojan_nodes: usize,
    pub samples: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(source: &str) -> Result<Manifest, HtGenError> {
        let de = &mut serde_json::Deserializer::from_str(source);
        let m: Manifest = serde_path_to_error::deserialize(de).map_err(|e| HtGenError::Io(format!("manifest {}: {}", e.path(), e.inner())))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(HtGenError::Io(format!("unsupported manifest format_version {}", m.format_version)));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub samples: Vec<GeneratedSample>,
    pub manifest: Manifest,
}

/// Builds one sample. With `spec` absent a spec is drawn from the sample's
/// seed; every random draw uses a stream derived from that seed.
fn build(host: &Netlist, index: usize, seed: u64, spec: Option<&HtTemplateSpec>, lib: &CellLibrary) -> Result<GeneratedSample, HtGenError> {
    let spec = match spec {
        Some(s) => s.clone(),
        None => sample_spec(host.len(), clock_net(host, lib).is_some(), &mut seeded_rng(derive_seed(seed, SPEC_STREAM)))?,
    };
    let mut ins = insert_ht(host, &spec, lib, &mut seeded_rng(derive_seed(seed, INSERT_STREAM)))?;
    let name = format!("{}_{}", host.name, index);
    let stealth = check_stealth(host, &ins.netlist, &ins.trigger_cell, lib, &mut seeded_rng(derive_seed(seed, STEALTH_STREAM)))?;
    if !stealth.is_stealthy() {
        return Err(HtGenError::Io(format!("{name}: dormant Trojan changes {:?}", stealth.mismatches)));
    }
    if !fits_budget(host.len(), ins.netlist.trojan_count()) {
        return Err(HtGenError::HostTooSmall(format!("{name}: Trojan exceeds 5% of nodes")));
    }
    ins.netlist.name = name;
    Ok(GeneratedSample { host: host.name.clone(), index, seed, netlist: ins.netlist, spec, trigger_cell: ins.trigger_cell, stealth })
}

fn assemble(samples: Vec<GeneratedSample>, hosts: &[Netlist], seed: u64, per_host: usize) -> Dataset {
    let entries: Vec<ManifestEntry> = samples
        .iter()
        .map(|s| ManifestEntry {
            file: format!("samples/{}.json", s.name()),
            host: s.host.clone(),
            index: s.index,
            seed: s.seed,
            spec: s.spec.clone(),
            trigger_cell: s.trigger_cell.clone(),
            nodes: s.netlist.len(),
            trojan_nodes: s.netlist.trojan_count(),
            host_nodes: s.netlist.len() - s.netlist.trojan_count(),
            stealth_vectors: s.stealth.vectors,
            stealth_exhaustive: s.stealth.exhaustive,
        })
        .collect();
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        seed,
        samples_per_host: per_host,
        hosts: hosts.iter().map(|h| h.name.clone()).collect(),
        total_nodes: entries.iter().map(|e| e.nodes).sum(),
        total_trojan_nodes: entries.iter().map(|e| e.trojan_nodes).sum(),
        samples: entries,
    };
    Dataset { samples, manifest }
}

fn run<T: Send, F: Fn(usize) -> Result<T, HtGenError> + Sync + Send>(n: usize, jobs: usize, f: F) -> Result<Vec<T>, HtGenError> {
    let out: Vec<Result<T, HtGenError>> = if jobs <= 1 {
        (0..n).map(f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| HtGenError::Io(e.to_string()))?;
        pool.install(|| (0..n).into_par_iter().map(f).collect())
    };
    out.into_iter().collect()
}

fn check_hosts(hosts: &[Netlist]) -> Result<(), HtGenError> {
    if hosts.is_empty() {
        return Err(HtGenError::Io("at least one host netlist is required".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for h in hosts {
        if !seen.insert(h.name.as_str()) {
            return Err(HtGenError::Io(format!("host name {} is not unique", h.name)));
        }
    }
    Ok(())
}

/// Generates `per_host` infested samples per host. Sample `k` of host `h`
/// uses seed `derive_seed(seed, h << 32 | k)`, so output is independent of
/// `jobs`. Every sample passes the dormant-equivalence and 5% checks.
pub fn gen_dataset(hosts: &[Netlist], per_host: usize, seed: u64, lib: &CellLibrary, jobs: usize) -> Result<Dataset, HtGenError> {
    check_hosts(hosts)?;
    let samples = run(hosts.len() * per_host, jobs, |i| {
        let (h, k) = (i / per_host, i % per_host);
        build(&hosts[h], k, derive_seed(seed, (h as u64) << 32 | k as u64), None, lib)
    })?;
    Ok(assemble(samples, hosts, seed, per_host))
}

/// Rebuilds a dataset from a manifest's recorded specs and seeds.
pub fn regenerate(manifest: &Manifest, hosts: &[Netlist], lib: &CellLibrary, jobs: usize) -> Result<Dataset, HtGenError> {
    check_hosts(hosts)?;
    let by_name: HashMap<&str, &Netlist> = hosts.iter().map(|h| (h.name.as_str(), h)).collect();
    let ordered: Vec<&Netlist> = manifest
        .hosts
        .iter()
        .map(|n| by_name.get(n.as_str()).copied().ok_or_else(|| HtGenError::Io(format!("manifest host {n} not supplied"))))
        .collect::<Result<_, _>>()?;
    let samples = run(manifest.samples.len(), jobs, |i| {
        let e = &manifest.samples[i];
        let host = by_name.get(e.host.as_str()).ok_or_else(|| HtGenError::Io(format!("manifest host {} not supplied", e.host)))?;
        build(host, e.index, e.seed, Some(&e.spec), lib)
    })?;
    let hosts: Vec<Netlist> = ordered.into_iter().cloned().collect();
    Ok(assemble(samples, &hosts, manifest.seed, manifest.samples_per_host))
}

/// Writes `samples/<host>_<k>.json` (canonical graph JSON) and
/// `manifest.json` under `dir`.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<(), HtGenError> {
    let io = |e: std::io::Error| HtGenError::Io(e.to_string());
    fs::create_dir_all(dir.join("samples")).map_err(io)?;
    for (s, e) in dataset.samples.iter().zip(&dataset.manifest.samples) {
        fs::write(dir.join(&e.file), write_graph_json(&s.netlist)).map_err(io)?;
    }
    fs::write(dir.join("manifest.json"), dataset.manifest.to_json()).map_err(io)
}
