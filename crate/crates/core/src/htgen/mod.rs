// SPDX-License-Identifier: Apache-2.0

//! Synthetic hardware-Trojan insertion at gate level.
//!
//! A Trojan is a trigger (rarely-active condition) plus a payload (effect).
//! Triggers: a balanced tree of two-input gates over `k` tap wires, or a
//! `k`-bit counter whose carry-out fires after `2^k` tap events. Payloads: a
//! denial-of-service mask spliced into a victim wire, an information leak
//! XORed onto a primary-output wire, or an enabled inverter ring. Every
//! inserted instance id starts with [`PREFIX`] and is labelled Trojan.
//!
//! Generated netlists use the default library's cell names.

mod dataset;
mod host;
mod stealth;

use std::collections::{HashMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{constant_net, BehaviorKind, Cell, CellLibrary, Label, Netlist, NetlistError};
use crate::Rng;

pub use dataset::{gen_dataset, regenerate, write_dataset, Dataset, GeneratedSample, Manifest, ManifestEntry};
pub use host::{random_host, HostSpec};
pub use stealth::{check_stealth, StealthReport, EXHAUSTIVE_LIMIT, RANDOM_VECTORS};

/// Id prefix of every inserted instance.
pub const PREFIX: &str = "trojan_";

pub const TRIGGER_WIDTH: std::ops::RangeInclusive<usize> = 4..=16;
pub const COUNTER_BITS: std::ops::RangeInclusive<usize> = 4..=12;
pub const RING_LENGTH: std::ops::RangeInclusive<usize> = 5..=15;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HtGenError {
    #[error("parameter {name} = {value} outside {range}")]
    ParamOutOfRange { name: &'static str, value: usize, range: String },
    #[error("host too small: {0}")]
    HostTooSmall(String),
    #[error("host has no clock net for a sequential trigger")]
    NoClock,
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("dataset: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Combinational,
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    DenialOfService,
    InformationLeakage,
    PowerConsuming,
}

/// How a denial-of-service payload forces its victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosMask {
    /// `w' = w | trigger`.
    Or,
    /// `w' = w & !trigger`.
    And,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HtTemplateSpec {
    pub trigger: TriggerKind,
    pub payload: PayloadKind,
    /// Tap count of a combinational trigger.
    pub trigger_width: usize,
    /// Width of a sequential trigger's counter.
    pub counter_bits: usize,
    /// Inverters in a power-consuming ring.
    pub ring_length: usize,
    pub dos_mask: DosMask,
}

fn check_range(name: &'static str, value: usize, range: &std::ops::RangeInclusive<usize>) -> Result<(), HtGenError> {
    if range.contains(&value) {
        Ok(())
    } else {
        Err(HtGenError::ParamOutOfRange { name, value, range: format!("{}..={}", range.start(), range.end()) })
    }
}

impl HtTemplateSpec {
    pub fn validate(&self) -> Result<(), HtGenError> {
        check_range("trigger_width", self.trigger_width, &TRIGGER_WIDTH)?;
        check_range("counter_bits", self.counter_bits, &COUNTER_BITS)?;
        check_range("ring_length", self.ring_length, &RING_LENGTH)
    }

    pub fn trigger_nodes(&self) -> usize {
        match self.trigger {
            TriggerKind::Combinational => self.trigger_width - 1,
            TriggerKind::Sequential => 3 * self.counter_bits,
        }
    }

    pub fn payload_nodes(&self) -> usize {
        match (self.payload, self.dos_mask) {
            (PayloadKind::DenialOfService, DosMask::Or) => 1,
            (PayloadKind::DenialOfService, DosMask::And) => 2,
            (PayloadKind::InformationLeakage, _) => 2,
            (PayloadKind::PowerConsuming, _) => self.ring_length + 1,
        }
    }

    /// Number of Trojan nodes this spec inserts.
    pub fn node_count(&self) -> usize {
        self.trigger_nodes() + self.payload_nodes()
    }
}

/// True when `trojan` nodes stay under 5% of `host + trojan` nodes.
pub fn fits_budget(host_nodes: usize, trojan: usize) -> bool {
    20 * trojan < host_nodes + trojan
}

/// Draws a random spec whose Trojan stays under 5% of the infested node
/// count. Kinds are drawn uniformly among those that fit; sizes uniformly
/// among the fitting values.
pub fn sample_spec(host_nodes: usize, has_clock: bool, rng: &mut Rng) -> Result<HtTemplateSpec, HtGenError> {
    let triggers: &[TriggerKind] =
        if has_clock { &[TriggerKind::Combinational, TriggerKind::Sequential] } else { &[TriggerKind::Combinational] };
    let payloads = [PayloadKind::DenialOfService, PayloadKind::InformationLeakage, PayloadKind::PowerConsuming];
    let minimal = |t: TriggerKind, p: PayloadKind| HtTemplateSpec {
        trigger: t,
        payload: p,
        trigger_width: *TRIGGER_WIDTH.start(),
        counter_bits: *COUNTER_BITS.start(),
        ring_length: *RING_LENGTH.start(),
        dos_mask: DosMask::Or,
    };
    let combos: Vec<(TriggerKind, PayloadKind)> = triggers
        .iter()
        .flat_map(|&t| payloads.iter().map(move |&p| (t, p)))
        .filter(|&(t, p)| fits_budget(host_nodes, minimal(t, p).node_count()))
        .collect();
    let &(trigger, payload) = combos
        .choose(rng)
        .ok_or_else(|| HtGenError::HostTooSmall(format!("{host_nodes} nodes cannot hide any template under 5%")))?;
    let mut spec = minimal(trigger, payload);
    spec.dos_mask = if rng.random_bool(0.5) { DosMask::Or } else { DosMask::And };
    if !fits_budget(host_nodes, spec.node_count()) {
        spec.dos_mask = DosMask::Or;
    }
    let pick = |range: std::ops::RangeInclusive<usize>, size: &dyn Fn(usize) -> HtTemplateSpec, rng: &mut Rng| {
        let ok: Vec<usize> = range.filter(|&v| fits_budget(host_nodes, size(v).node_count())).collect();
        *ok.choose(rng).expect("the minimal value fits")
    };
    let base = spec.clone();
    match trigger {
        TriggerKind::Combinational => {
            spec.trigger_width = pick(TRIGGER_WIDTH, &|v| HtTemplateSpec { trigger_width: v, ..base.clone() }, rng);
        }
        TriggerKind::Sequential => {
            spec.counter_bits = pick(COUNTER_BITS, &|v| HtTemplateSpec { counter_bits: v, ..base.clone() }, rng);
        }
    }
    if payload == PayloadKind::PowerConsuming {
        let base = spec.clone();
        spec.ring_length = pick(RING_LENGTH, &|v| HtTemplateSpec { ring_length: v, ..base.clone() }, rng);
    }
    Ok(spec)
}

/// Inserted cells plus the net (and driving instance) they export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubCircuit {
    pub cells: Vec<Cell>,
    pub output_net: String,
    pub output_cell: String,
}

fn gate(id: String, ty: &str, inputs: &[&str]) -> Cell {
    let net = format!("{id}_y");
    Cell {
        id,
        cell_type: ty.to_string(),
        inputs: inputs.iter().map(|s| Some(s.to_string())).collect(),
        outputs: vec![Some(net)],
        label: Label::Trojan,
    }
}

fn out_net(c: &Cell) -> String {
    c.outputs[0].clone().expect("generated cells drive a net")
}

/// Builds a trigger over `taps`. Combinational: `k - 1` two-input gates in a
/// balanced tree, AND everywhere except randomly chosen NORs on gates fed by
/// two taps, so the output is 1 with probability `2^-k` for independent
/// uniform taps. Sequential: a `k`-bit ripple counter (`d_i = q_i ^ c_i`,
/// `c_{i+1} = q_i & c_i`, `c_0` = the single tap) clocked by `clock`, whose
/// final carry is the trigger.
pub fn gen_trigger(
    kind: TriggerKind,
    width: usize,
    taps: &[String],
    clock: Option<&str>,
    rng: &mut Rng,
) -> Result<SubCircuit, HtGenError> {
    let mut cells = Vec::new();
    match kind {
        TriggerKind::Combinational => {
            check_range("trigger_width", width, &TRIGGER_WIDTH)?;
            if taps.len() != width {
                return Err(HtGenError::HostTooSmall(format!("need {width} tap wires, got {}", taps.len())));
            }
            // (net, is_tap)
            let mut level: Vec<(String, bool)> = taps.iter().map(|t| (t.clone(), true)).collect();
            let mut next_id = 0;
            while level.len() > 1 {
                let mut next = Vec::with_capacity(level.len().div_ceil(2));
                for pair in level.chunks(2) {
                    if let [(a, a_tap), (b, b_tap)] = pair {
                        let ty = if *a_tap && *b_tap && rng.random_bool(0.5) { "NOR2" } else { "AND2" };
                        let c = gate(format!("{PREFIX}trig_g{next_id}"), ty, &[a, b]);
                        next_id += 1;
                        next.push((out_net(&c), false));
                        cells.push(c);
                    } else {
                        next.push(pair[0].clone());
                    }
                }
                level = next;
            }
        }
        TriggerKind::Sequential => {
            check_range("counter_bits", width, &COUNTER_BITS)?;
            let clock = clock.ok_or(HtGenError::NoClock)?;
            let [tap] = taps else {
                return Err(HtGenError::HostTooSmall("sequential trigger takes exactly one tap".into()));
            };
            let mut carry = tap.clone();
            for i in 0..width {
                let q = format!("{PREFIX}cnt_q{i}_y");
                let xor = gate(format!("{PREFIX}cnt_x{i}"), "XOR2", &[&q, &carry]);
                let dff = Cell {
                    id: format!("{PREFIX}cnt_q{i}"),
                    cell_type: "DFF".into(),
                    inputs: vec![Some(out_net(&xor)), Some(clock.to_string())],
                    outputs: vec![Some(q.clone())],
                    label: Label::Trojan,
                };
                let and = gate(format!("{PREFIX}cnt_c{i}"), "AND2", &[&q, &carry]);
                carry = out_net(&and);
                cells.extend([dff, xor, and]);
            }
        }
    }
    let last = cells.last().expect("trigger has at least one gate");
    Ok(SubCircuit { output_net: out_net(last), output_cell: last.id.clone(), cells })
}

/// Payload cells for `kind`. `victim` is the wire whose sinks will be moved
/// to `output_net` (unused for the ring); `secret` feeds the leak.
pub fn gen_payload(
    spec: &HtTemplateSpec,
    trigger: &str,
    victim: Option<&str>,
    secret: Option<&str>,
) -> Result<SubCircuit, HtGenError> {
    let need = |x: Option<&str>, what: &str| x.map(str::to_string).ok_or_else(|| HtGenError::HostTooSmall(format!("no {what} wire")));
    let cells = match spec.payload {
        PayloadKind::DenialOfService => {
            let w = need(victim, "victim")?;
            match spec.dos_mask {
                DosMask::Or => vec![gate(format!("{PREFIX}dos_or"), "OR2", &[&w, trigger])],
                DosMask::And => {
                    let inv = gate(format!("{PREFIX}dos_inv"), "INV", &[trigger]);
                    let and = gate(format!("{PREFIX}dos_and"), "AND2", &[&w, &out_net(&inv)]);
                    vec![inv, and]
                }
            }
        }
        PayloadKind::InformationLeakage => {
            let w = need(victim, "victim")?;
            let s = need(secret, "secret")?;
            let and = gate(format!("{PREFIX}leak_and"), "AND2", &[&s, trigger]);
            let xor = gate(format!("{PREFIX}leak_xor"), "XOR2", &[&w, &out_net(&and)]);
            vec![and, xor]
        }
        PayloadKind::PowerConsuming => {
            let l = spec.ring_length;
            check_range("ring_length", l, &RING_LENGTH)?;
            // The loop inverts an odd number of times in total.
            let enable_ty = if l % 2 == 1 { "AND2" } else { "NAND2" };
            let last = format!("{PREFIX}ring_i{}_y", l - 1);
            let enable = gate(format!("{PREFIX}ring_en"), enable_ty, &[trigger, &last]);
            let mut cells = vec![enable];
            for i in 0..l {
                let prev = out_net(cells.last().expect("ring starts at the enable gate"));
                cells.push(gate(format!("{PREFIX}ring_i{i}"), "INV", &[&prev]));
            }
            cells
        }
    };
    let last = cells.last().expect("payload has at least one gate");
    Ok(SubCircuit { output_net: out_net(last), output_cell: last.id.clone(), cells })
}

/// An infested netlist with the bookkeeping needed to audit it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Insertion {
    pub netlist: Netlist,
    pub spec: HtTemplateSpec,
    /// Instance whose output is the trigger signal.
    pub trigger_cell: String,
    pub trojan_ids: Vec<String>,
}

struct HostView<'a> {
    drivers: HashMap<&'a str, usize>,
    /// Nets read by at least one cell.
    sinks: HashMap<&'a str, Vec<usize>>,
    kinds: Vec<BehaviorKind>,
}

impl<'a> HostView<'a> {
    fn new(host: &'a Netlist, lib: &CellLibrary) -> Result<Self, HtGenError> {
        let kinds = host
            .cells
            .iter()
            .map(|c| lib.lookup(&c.cell_type).map(|d| d.kind))
            .collect::<Result<Vec<_>, _>>()?;
        let mut sinks: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, c) in host.cells.iter().enumerate() {
            for net in c.inputs.iter().flatten() {
                sinks.entry(net.as_str()).or_default().push(i);
            }
        }
        Ok(HostView { drivers: host.drivers()?, sinks, kinds })
    }

    /// Nets reachable from `net` through combinational cells, `net` included.
    fn fanout_cone(&self, host: &'a Netlist, net: &'a str) -> HashSet<&'a str> {
        let mut seen = HashSet::from([net]);
        let mut stack = vec![net];
        while let Some(n) = stack.pop() {
            for &s in self.sinks.get(n).map(Vec::as_slice).unwrap_or(&[]) {
                if self.kinds[s].is_sequential() {
                    continue;
                }
                for out in host.cells[s].outputs.iter().flatten() {
                    if seen.insert(out.as_str()) {
                        stack.push(out.as_str());
                    }
                }
            }
        }
        seen
    }
}

/// Finds the host's clock: the net on the second pin of the first storage
/// cell, else a primary input named like a clock.
pub fn clock_net(host: &Netlist, lib: &CellLibrary) -> Option<String> {
    for c in &host.cells {
        if lib.get(&c.cell_type).is_some_and(|d| d.kind.is_sequential()) {
            if let Some(Some(net)) = c.inputs.get(1) {
                return Some(net.clone());
            }
        }
    }
    host.primary_inputs
        .iter()
        .find(|p| matches!(p.to_ascii_lowercase().as_str(), "clk" | "clock" | "ck"))
        .cloned()
}

/// Inserts one Trojan into `host`.
///
/// The victim wire is chosen first; taps and the leak's secret are then drawn
/// from internal wires outside the victim's combinational fan-out, so the
/// splice never closes a combinational loop. Tap wires never feed a primary
/// output directly. Inserted cells go before the trailing primary-output
/// pseudo-cells.
pub fn insert_ht(host: &Netlist, spec: &HtTemplateSpec, lib: &CellLibrary, rng: &mut Rng) -> Result<Insertion, HtGenError> {
    spec.validate()?;
    if let Some(c) = host.cells.iter().find(|c| c.id.starts_with(PREFIX)) {
        return Err(HtGenError::Netlist(NetlistError::DuplicateId(c.id.clone())));
    }
    if !fits_budget(host.len(), spec.node_count()) {
        return Err(HtGenError::HostTooSmall(format!(
            "{} Trojan nodes exceed 5% of {} total",
            spec.node_count(),
            host.len() + spec.node_count()
        )));
    }
    let view = HostView::new(host, lib)?;
    let po_ids: HashSet<&str> = host.primary_outputs.iter().map(String::as_str).collect();
    let po_nets: HashSet<&str> = host
        .cells
        .iter()
        .filter(|c| po_ids.contains(c.id.as_str()))
        .flat_map(|c| c.inputs.iter().flatten().map(String::as_str))
        .collect();
    // Internal nets: driven by a host cell that is not a port, sorted for
    // reproducible draws.
    let mut internal: Vec<&str> = view
        .drivers
        .iter()
        .filter(|(net, &d)| !view.kinds[d].is_port() && constant_net(net).is_none())
        .map(|(net, _)| *net)
        .collect();
    internal.sort_unstable();

    let victim: Option<&str> = match spec.payload {
        PayloadKind::PowerConsuming => None,
        PayloadKind::DenialOfService => {
            let c: Vec<&str> = internal.iter().copied().filter(|n| view.sinks.contains_key(n)).collect();
            Some(*c.choose(rng).ok_or_else(|| HtGenError::HostTooSmall("no victim wire".into()))?)
        }
        PayloadKind::InformationLeakage => {
            let c: Vec<&str> = internal.iter().copied().filter(|n| po_nets.contains(n)).collect();
            Some(*c.choose(rng).ok_or_else(|| HtGenError::HostTooSmall("no gate drives a primary output".into()))?)
        }
    };
    let cone = victim.map(|v| view.fanout_cone(host, v)).unwrap_or_default();
    let mut tap_pool: Vec<&str> =
        internal.iter().copied().filter(|n| !po_nets.contains(n) && !cone.contains(n)).collect();
    let tap_count = match spec.trigger {
        TriggerKind::Combinational => spec.trigger_width,
        TriggerKind::Sequential => 1,
    };
    if tap_pool.len() < tap_count {
        return Err(HtGenError::HostTooSmall(format!("need {tap_count} tap wires, host offers {}", tap_pool.len())));
    }
    tap_pool.shuffle(rng);
    let taps: Vec<String> = tap_pool[..tap_count].iter().map(|s| s.to_string()).collect();
    let clock = match spec.trigger {
        TriggerKind::Sequential => Some(clock_net(host, lib).ok_or(HtGenError::NoClock)?),
        TriggerKind::Combinational => None,
    };
    let width = match spec.trigger {
        TriggerKind::Combinational => spec.trigger_width,
        TriggerKind::Sequential => spec.counter_bits,
    };
    let trigger = gen_trigger(spec.trigger, width, &taps, clock.as_deref(), rng)?;

    let secret = match spec.payload {
        PayloadKind::InformationLeakage => {
            let c: Vec<&str> = internal.iter().copied().filter(|n| !cone.contains(n)).collect();
            Some(*c.choose(rng).ok_or_else(|| HtGenError::HostTooSmall("no secret wire".into()))?)
        }
        _ => None,
    };
    let payload = gen_payload(spec, &trigger.output_net, victim, secret)?;

    let mut cells = host.cells.clone();
    if let Some(w) = victim {
        for &s in view.sinks.get(w).map(Vec::as_slice).unwrap_or(&[]) {
            for pin in cells[s].inputs.iter_mut().flatten() {
                if pin == w {
                    *pin = payload.output_net.clone();
                }
            }
        }
    }
    let trailing_pos = cells.iter().rev().take_while(|c| po_ids.contains(c.id.as_str())).count();
    let at = cells.len() - trailing_pos;
    let trojans: Vec<Cell> = trigger.cells.iter().chain(&payload.cells).cloned().collect();
    let trojan_ids = trojans.iter().map(|c| c.id.clone()).collect();
    cells.splice(at..at, trojans);
    let netlist = Netlist {
        name: host.name.clone(),
        cells,
        primary_inputs: host.primary_inputs.clone(),
        primary_outputs: host.primary_outputs.clone(),
    };
    netlist.validate_with(lib)?;
    Ok(Insertion { netlist, spec: spec.clone(), trigger_cell: trigger.output_cell, trojan_ids })
}
