// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use regex::Regex;

use super::{Label, Netlist, NetlistError};

/// Default pattern: any instance whose name contains "trojan", any case.
pub const DEFAULT_PATTERN: &str = "(?i)trojan";

/// Which instances are Trojan.
#[derive(Debug, Clone)]
pub enum LabelSpec {
    /// Unanchored regex over instance ids. Port pseudo-cells never match.
    Pattern(Regex),
    /// Explicit Trojan instance ids.
    Instances(Vec<String>),
}

impl Default for LabelSpec {
    fn default() -> Self {
        LabelSpec::Pattern(Regex::new(DEFAULT_PATTERN).expect("default pattern compiles"))
    }
}

impl LabelSpec {
    pub fn pattern(re: &str) -> Result<Self, NetlistError> {
        Regex::new(re)
            .map(LabelSpec::Pattern)
            .map_err(|e| NetlistError::Pattern(e.to_string()))
    }

    /// Parses a list file: one instance id per line; blank lines and text
    /// after `#` are ignored.
    pub fn from_list(text: &str) -> Self {
        let ids = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        LabelSpec::Instances(ids)
    }
}

/// Replaces every label: cells selected by `spec` become Trojan, all others
/// Normal.
pub fn label_nodes(mut netlist: Netlist, spec: &LabelSpec) -> Result<Netlist, NetlistError> {
    let ports: HashSet<String> = netlist.port_ids().into_iter().map(str::to_string).collect();
    match spec {
        LabelSpec::Pattern(re) => {
            for cell in &mut netlist.cells {
                cell.label = if !ports.contains(&cell.id) && re.is_match(&cell.id) {
                    Label::Trojan
                } else {
                    Label::Normal
                };
            }
        }
        LabelSpec::Instances(ids) => {
            let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
            for id in ids {
                if ports.contains(id) {
                    return Err(NetlistError::PortLabel(id.clone()));
                }
                if netlist.index_of(id).is_none() {
                    return Err(NetlistError::UnknownInstance(id.clone()));
                }
            }
            for cell in &mut netlist.cells {
                cell.label = if wanted.contains(cell.id.as_str()) { Label::Trojan } else { Label::Normal };
            }
        }
    }
    Ok(netlist)
}
