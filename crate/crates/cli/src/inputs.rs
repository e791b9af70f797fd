// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nhtd::features::{featurize, Featurized};
use nhtd::netlist::{label_nodes, parse_graph_json, parse_verilog, LabelSpec};
use nhtd::{CellLibrary, FeatureMode, Netlist};

use crate::args::LabelArgs;
use crate::Failure;

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn library(path: Option<&Path>) -> Result<CellLibrary> {
    match path {
        Some(p) => CellLibrary::from_json(&read(p)?).with_context(|| format!("cell library {}", p.display())),
        None => Ok(CellLibrary::default()),
    }
}

/// Explicit labeling requested on the command line, if any.
pub fn label_spec(args: &LabelArgs) -> Result<Option<LabelSpec>, Failure> {
    if let Some(re) = &args.label_regex {
        return LabelSpec::pattern(re).map(Some).map_err(|e| Failure::Usage(e.to_string()));
    }
    if let Some(list) = &args.label_list {
        return Ok(Some(LabelSpec::from_list(&read(list)?)));
    }
    Ok(None)
}

fn is_verilog(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("v" | "sv" | "vg"))
}

fn is_netlist_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    let json = name.ends_with(".json") && !name.ends_with("manifest.json");
    path.is_file() && (json || is_verilog(path))
}

/// Files as given; a directory contributes its netlist files and those of
/// its `samples/` subdirectory, sorted by path.
pub fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = Vec::new();
            for dir in [p.clone(), p.join("samples")] {
                if !dir.is_dir() {
                    continue;
                }
                for entry in fs::read_dir(&dir).with_context(|| format!("listing {}", dir.display()))? {
                    let path = entry?.path();
                    if is_netlist_file(&path) {
                        found.push(path);
                    }
                }
            }
            found.sort();
            if found.is_empty() {
                bail!("{} contains no netlist files", p.display());
            }
            out.extend(found);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            bail!("{} does not exist", p.display());
        }
    }
    Ok(out)
}

/// Parses a Verilog (`.v`) or graph-JSON netlist. Verilog is labeled with
/// the default pattern unless `labels` is given; JSON keeps its labels
/// unless `labels` is given.
pub fn netlist(path: &Path, lib: &CellLibrary, labels: Option<&LabelSpec>) -> Result<Netlist> {
    let text = read(path)?;
    let parsed = if is_verilog(path) {
        parse_verilog(&text, lib).with_context(|| format!("parsing {}", path.display()))?
    } else {
        parse_graph_json(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    let spec = match labels {
        Some(s) => Some(s.clone()),
        None if is_verilog(path) => Some(LabelSpec::default()),
        None => None,
    };
    let n = match spec {
        Some(s) => label_nodes(parsed, &s).with_context(|| format!("labeling {}", path.display()))?,
        None => parsed,
    };
    n.validate_with(lib).with_context(|| format!("checking {}", path.display()))?;
    Ok(n)
}

pub struct Loaded {
    pub path: PathBuf,
    pub netlist: Netlist,
    pub featurized: Featurized,
}

pub fn load_all(paths: &[PathBuf], lib: &CellLibrary, labels: Option<&LabelSpec>, mode: FeatureMode) -> Result<Vec<Loaded>> {
    expand(paths)?
        .into_iter()
        .map(|path| {
            let netlist = netlist(&path, lib, labels)?;
            let featurized = featurize(&netlist, lib, mode).with_context(|| format!("featurizing {}", path.display()))?;
            Ok(Loaded { path, netlist, featurized })
        })
        .collect()
}

/// Display name of a netlist: its module name, or the file stem.
pub fn display_name(l: &Loaded) -> String {
    if l.netlist.name.is_empty() {
        l.path.file_stem().and_then(|s| s.to_str()).unwrap_or("netlist").to_string()
    } else {
        l.netlist.name.clone()
    }
}
