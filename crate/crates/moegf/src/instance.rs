//! Domain types for the coupled networks, pipe constants and unit conversion.
//!
//! [`SiInstance`] mirrors the on-disk description in SI units. [`Instance`]
//! is the validated, per-unit form consumed by every other module.
//!
//! Per-unit bases: power 100 MVA, gas flow 100 m^3/s, pressure 1 MPa,
//! linepack `flow base x 3600 s`, cost 1e5 $. Angles are in radians.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math::{cos, powf, sin};

/// Physical constants of the gas.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GasConstants {
    /// Specific gas constant, J/(kg K).
    pub r: f64,
    /// Density at standard conditions, kg/m^3.
    pub rho: f64,
    /// Temperature, K.
    pub temperature: f64,
    /// Specific gravity.
    pub gravity: f64,
    /// Higher heating value, MJ/m^3.
    pub hhv: f64,
}

impl Default for GasConstants {
    fn default() -> Self {
        GasConstants { r: 478.42, rho: 0.735, temperature: 288.15, gravity: 0.6, hhv: 38.07 }
    }
}

/// Base units used for nondimensionalization.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bases {
    pub power_mva: f64,
    pub flow_m3s: f64,
    pub pressure_pa: f64,
    /// Cost base in $ for the LP objective.
    pub cost: f64,
}

impl Default for Bases {
    fn default() -> Self {
        Bases { power_mva: 100.0, flow_m3s: 100.0, pressure_pa: 1e6, cost: 1e5 }
    }
}

impl Bases {
    /// Linepack base in m^3.
    pub fn linepack_m3(&self) -> f64 {
        self.flow_m3s * 3600.0
    }
}

// ---------------------------------------------------------------- SI form

/// Horizon description.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiHorizon {
    pub periods: usize,
    pub dt_hours: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiBus {
    pub id: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub shunt_conductance_pu: f64,
    pub demand_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiBranch {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Series admittance `[re, im]` in pu.
    pub admittance_pu: [f64; 2],
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub tap_ratio: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub tap_shift_deg: f64,
    pub limit_mw: f64,
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
}

#[cfg(feature = "serde")]
fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum GeneratorKind {
    Gpg,
    NonGpg,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiGenerator {
    pub id: String,
    pub bus: String,
    pub kind: GeneratorKind,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    pub ramp_down_mw_per_h: f64,
    pub ramp_up_mw_per_h: f64,
    /// $/MWh^2
    pub c2: f64,
    /// $/MWh
    pub c1: f64,
    /// $/h
    pub c0: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub efficiency: Option<f64>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub gas_node: Option<String>,
    pub initial_mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiNode {
    pub id: String,
    pub pressure_min_pa: f64,
    pub pressure_max_pa: f64,
    pub demand_m3s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiPipe {
    pub id: String,
    pub from: String,
    pub to: String,
    pub diameter_m: f64,
    pub length_m: f64,
    pub flow_max_m3s: f64,
    pub initial_linepack_m3: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiNonPipe {
    pub id: String,
    pub from: String,
    pub to: String,
    pub flow_max_m3s: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    /// Fraction of boosted flow consumed by a compressor.
    #[cfg_attr(feature = "serde", serde(default))]
    pub consumption: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiSupply {
    pub id: String,
    pub node: String,
    pub flow_min_m3s: f64,
    pub flow_max_m3s: f64,
    /// $/m^3
    pub cost_per_m3: f64,
}

/// Instance description in SI units.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiInstance {
    pub name: String,
    pub schema_version: u32,
    pub horizon: SiHorizon,
    pub buses: Vec<SiBus>,
    pub branches: Vec<SiBranch>,
    pub generators: Vec<SiGenerator>,
    pub nodes: Vec<SiNode>,
    pub pipes: Vec<SiPipe>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub compressors: Vec<SiNonPipe>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub regulators: Vec<SiNonPipe>,
    pub supplies: Vec<SiSupply>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub constants: Option<GasConstants>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub final_linepack_min_m3: Option<f64>,
}

/// Supported on-disk schema version.
pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------- errors

/// Instance validation errors. Each names the offending element.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InstanceError {
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error("{kind} '{id}' references unknown {target_kind} '{target}'")]
    DanglingReference { kind: &'static str, id: String, target_kind: &'static str, target: String },
    #[error("duplicate {kind} id '{id}'")]
    DuplicateId { kind: &'static str, id: String },
    #[error("node '{0}': positive pressure lower bound required")]
    PositivePressure(String),
    #[error("compressor '{0}': compressor ratio bound violated (need ratio_min >= 1 and ratio_max > 1)")]
    CompressorRatio(String),
    #[error("regulator '{0}': regulator ratio bound violated (need 0 < ratio_min < 1 and ratio_max <= 1)")]
    RegulatorRatio(String),
    #[error("pipe '{0}': diameter and length must be positive")]
    PipeGeometry(String),
    #[error("{kind} '{id}': {message}")]
    Invariant { kind: &'static str, id: String, message: String },
}

fn invariant(kind: &'static str, id: &str, message: &str) -> InstanceError {
    InstanceError::Invariant { kind, id: id.to_string(), message: message.to_string() }
}

// ---------------------------------------------------------------- pipe constants

/// Derived constants of one pipeline, in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipeConstants {
    /// Weymouth friction factor.
    pub friction: f64,
    /// Compressibility factor.
    pub z: f64,
    /// Flow coefficient, m^6 s^-2 Pa^-2.
    pub phi: f64,
    /// Linepack coefficient, m^3/Pa.
    pub psi: f64,
}

/// Weymouth friction factor `4 (20.621 D^(1/6))^-2`.
pub fn weymouth_friction(d: f64) -> f64 {
    let a = 20.621 * powf(d, 1.0 / 6.0);
    4.0 / (a * a)
}

/// Compressibility factor from the mean pressures (Pa) of the end nodes.
pub fn compressibility(pm: f64, pn: f64, c: &GasConstants) -> f64 {
    let avg = if pm + pn > 0.0 { pm + pn - pm * pn / (pm + pn) } else { 0.0 };
    let num = 49.9511 * powf(10.0, 1.785 * c.gravity) * avg;
    let den = 3.0 * powf(1.8 * c.temperature, 3.825) / 2.0;
    1.0 / (1.0 + num / den)
}

/// Friction, compressibility, flow and linepack coefficients of a pipe.
///
/// `from_bounds` and `to_bounds` are the pressure bounds (Pa) of the end nodes.
pub fn compute_pipe_constants(
    diameter: f64,
    length: f64,
    from_bounds: (f64, f64),
    to_bounds: (f64, f64),
    c: &GasConstants,
) -> Result<PipeConstants, InstanceError> {
    if !(diameter > 0.0 && length > 0.0) {
        return Err(InstanceError::PipeGeometry(format!("D={diameter}, L={length}")));
    }
    if from_bounds.0 <= 0.0 || to_bounds.0 <= 0.0 {
        return Err(InstanceError::PositivePressure("pipe end".to_string()));
    }
    let pm = 0.5 * (from_bounds.0 + from_bounds.1);
    let pn = 0.5 * (to_bounds.0 + to_bounds.1);
    let friction = weymouth_friction(diameter);
    let z = compressibility(pm, pn, c);
    let d2 = diameter * diameter;
    let phi = PI * PI * d2 * d2 * diameter / (16.0 * c.rho * c.rho * z * c.r * c.temperature * length * friction);
    let psi = PI * d2 * length / (4.0 * c.rho * z * c.r * c.temperature);
    Ok(PipeConstants { friction, z, phi, psi })
}

/// `(2/3)(x + y - xy/(x+y))`.
pub fn average_pressure(x: f64, y: f64) -> f64 {
    2.0 / 3.0 * (x + y - x * y / (x + y))
}

// ---------------------------------------------------------------- per-unit form

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    /// Constant withdrawal, pu.
    pub g_sh: f64,
    /// Demand per period, pu.
    pub demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub y: [f64; 2],
    pub tap_ratio: f64,
    /// Tap shift in radians.
    pub tap_shift: f64,
    pub g_ij: f64,
    pub b_ij: f64,
    pub g_ji: f64,
    pub b_ji: f64,
    /// Flow limit, pu.
    pub limit: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

/// Line coefficients `(g_ij, b_ij, g_ji, b_ji)` from admittance and complex tap.
pub fn line_coefficients(y: [f64; 2], tap_ratio: f64, tap_shift: f64) -> (f64, f64, f64, f64) {
    // Y* / T and Y* / T*, with T = tau e^{j shift}.
    let (yr, yi) = (y[0], -y[1]);
    let (tr, ti) = (tap_ratio * cos(tap_shift), tap_ratio * sin(tap_shift));
    let den = tr * tr + ti * ti;
    let div = |ar: f64, ai: f64, br: f64, bi: f64| ((ar * br + ai * bi) / den, (ai * br - ar * bi) / den);
    let (g_ij, b_ij) = div(yr, yi, tr, ti);
    let (g_ji, b_ji) = div(yr, yi, tr, -ti);
    (g_ij, b_ij, g_ji, b_ji)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub id: String,
    pub bus: usize,
    /// Gas node and efficiency for gas-powered units.
    pub gpg: Option<(usize, f64)>,
    pub p_min: f64,
    pub p_max: f64,
    /// pu per hour.
    pub ramp_down: f64,
    pub ramp_up: f64,
    /// Cost coefficients in SI ($/MWh^2, $/MWh, $/h).
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub initial: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    pub p_min: f64,
    pub p_max: f64,
    pub demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pipe {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub diameter: f64,
    pub length: f64,
    pub flow_max: f64,
    pub initial_linepack: f64,
    pub constants: PipeConstants,
    /// Per-unit flow coefficient.
    pub phi: f64,
    /// Per-unit linepack coefficient.
    pub psi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonPipeKind {
    Compressor,
    Regulator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonPipe {
    pub id: String,
    pub kind: NonPipeKind,
    pub from: usize,
    pub to: usize,
    pub flow_max: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub consumption: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Supply {
    pub id: String,
    pub node: usize,
    pub flow_min: f64,
    pub flow_max: f64,
    pub cost_per_m3: f64,
}

/// Validated per-unit instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub bases: Bases,
    pub constants: GasConstants,
    pub periods: usize,
    /// Period length in hours.
    pub dt: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
    pub nodes: Vec<Node>,
    pub pipes: Vec<Pipe>,
    /// Compressors first, then regulators.
    pub nonpipes: Vec<NonPipe>,
    pub supplies: Vec<Supply>,
    /// Optional lower bound on total end-of-horizon linepack, pu.
    pub final_linepack_min: Option<f64>,
}

fn index_of(
    ids: &[&str],
    target: &str,
    kind: &'static str,
    id: &str,
    target_kind: &'static str,
) -> Result<usize, InstanceError> {
    ids.iter().position(|s| *s == target).ok_or_else(|| InstanceError::DanglingReference {
        kind,
        id: id.to_string(),
        target_kind,
        target: target.to_string(),
    })
}

fn check_unique(ids: &[&str], kind: &'static str) -> Result<(), InstanceError> {
    for (i, a) in ids.iter().enumerate() {
        if ids[..i].contains(a) {
            return Err(InstanceError::DuplicateId { kind, id: a.to_string() });
        }
    }
    Ok(())
}

fn check_series(v: &[f64], h: usize, kind: &'static str, id: &str) -> Result<(), InstanceError> {
    if v.len() != h {
        return Err(invariant(kind, id, &format!("series has {} entries, expected {h}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invariant(kind, id, "non-finite series entry"));
    }
    Ok(())
}

impl Instance {
    /// Validates an SI description and converts it to per-unit.
    pub fn from_si(si: &SiInstance) -> Result<Instance, InstanceError> {
        Self::from_si_with_bases(si, Bases::default())
    }

    /// As [`Instance::from_si`] with explicit bases.
    pub fn from_si_with_bases(si: &SiInstance, bases: Bases) -> Result<Instance, InstanceError> {
        if si.schema_version != SCHEMA_VERSION {
            return Err(InstanceError::SchemaVersion(si.schema_version));
        }
        let h = si.horizon.periods;
        if h < 1 {
            return Err(invariant("horizon", "periods", "at least one period required"));
        }
        let dt = si.horizon.dt_hours;
        if !(dt > 0.0) {
            return Err(invariant("horizon", "dt_hours", "period length must be positive"));
        }
        let constants = si.constants.unwrap_or_default();
        let sb = bases.power_mva;
        let fb = bases.flow_m3s;
        let pb = bases.pressure_pa;
        let lb = bases.linepack_m3();

        let bus_ids: Vec<&str> = si.buses.iter().map(|b| b.id.as_str()).collect();
        let node_ids: Vec<&str> = si.nodes.iter().map(|n| n.id.as_str()).collect();
        check_unique(&bus_ids, "bus")?;
        check_unique(&node_ids, "node")?;
        check_unique(&si.branches.iter().map(|b| b.id.as_str()).collect::<Vec<_>>(), "branch")?;
        check_unique(&si.generators.iter().map(|b| b.id.as_str()).collect::<Vec<_>>(), "generator")?;
        check_unique(&si.pipes.iter().map(|b| b.id.as_str()).collect::<Vec<_>>(), "pipe")?;
        let np_ids: Vec<&str> = si.compressors.iter().chain(&si.regulators).map(|b| b.id.as_str()).collect();
        check_unique(&np_ids, "non-pipe element")?;
        check_unique(&si.supplies.iter().map(|b| b.id.as_str()).collect::<Vec<_>>(), "supply")?;

        let mut buses = Vec::with_capacity(si.buses.len());
        for b in &si.buses {
            check_series(&b.demand_mw, h, "bus", &b.id)?;
            buses.push(Bus {
                id: b.id.clone(),
                g_sh: b.shunt_conductance_pu,
                demand: b.demand_mw.iter().map(|d| d / sb).collect(),
            });
        }

        let mut branches = Vec::with_capacity(si.branches.len());
        for br in &si.branches {
            let from = index_of(&bus_ids, &br.from, "branch", &br.id, "bus")?;
            let to = index_of(&bus_ids, &br.to, "branch", &br.id, "bus")?;
            if from == to {
                return Err(invariant("branch", &br.id, "branch connects a bus to itself"));
            }
            let theta_min = br.angle_min_deg.to_radians_nostd();
            let theta_max = br.angle_max_deg.to_radians_nostd();
            if !(theta_min < theta_max) {
                return Err(invariant("branch", &br.id, "angle lower bound must be below upper bound"));
            }
            if !(br.limit_mw > 0.0) {
                return Err(invariant("branch", &br.id, "flow limit must be positive"));
            }
            if !(br.tap_ratio > 0.0) {
                return Err(invariant("branch", &br.id, "tap ratio must be positive"));
            }
            let shift = br.tap_shift_deg.to_radians_nostd();
            let (g_ij, b_ij, g_ji, b_ji) = line_coefficients(br.admittance_pu, br.tap_ratio, shift);
            branches.push(Branch {
                id: br.id.clone(),
                from,
                to,
                y: br.admittance_pu,
                tap_ratio: br.tap_ratio,
                tap_shift: shift,
                g_ij,
                b_ij,
                g_ji,
                b_ji,
                limit: br.limit_mw / sb,
                theta_min,
                theta_max,
            });
        }

        let mut nodes = Vec::with_capacity(si.nodes.len());
        for n in &si.nodes {
            if !(n.pressure_min_pa > 0.0) {
                return Err(InstanceError::PositivePressure(n.id.clone()));
            }
            if !(n.pressure_min_pa < n.pressure_max_pa) {
                return Err(invariant("node", &n.id, "pressure lower bound must be below upper bound"));
            }
            check_series(&n.demand_m3s, h, "node", &n.id)?;
            nodes.push(Node {
                id: n.id.clone(),
                p_min: n.pressure_min_pa / pb,
                p_max: n.pressure_max_pa / pb,
                demand: n.demand_m3s.iter().map(|d| d / fb).collect(),
            });
        }

        let mut generators = Vec::with_capacity(si.generators.len());
        for g in &si.generators {
            let bus = index_of(&bus_ids, &g.bus, "generator", &g.id, "bus")?;
            if !(g.p_min_mw <= g.p_max_mw) {
                return Err(invariant("generator", &g.id, "p_min must not exceed p_max"));
            }
            if g.c2 < 0.0 {
                return Err(invariant("generator", &g.id, "c2 must be non-negative"));
            }
            if g.ramp_down_mw_per_h < 0.0 || g.ramp_up_mw_per_h < 0.0 {
                return Err(invariant("generator", &g.id, "ramp rates must be non-negative"));
            }
            let gpg = match g.kind {
                GeneratorKind::Gpg => {
                    let eta = g.efficiency.ok_or_else(|| invariant("generator", &g.id, "gas-powered unit needs an efficiency"))?;
                    if !(eta > 0.0 && eta <= 1.0) {
                        return Err(invariant("generator", &g.id, "efficiency must lie in (0, 1]"));
                    }
                    let node_id = g
                        .gas_node
                        .as_deref()
                        .ok_or_else(|| invariant("generator", &g.id, "gas-powered unit must map to one gas node"))?;
                    let node = index_of(&node_ids, node_id, "generator", &g.id, "node")?;
                    Some((node, eta))
                }
                GeneratorKind::NonGpg => {
                    if g.gas_node.is_some() {
                        return Err(invariant("generator", &g.id, "non-gas unit must not map to a gas node"));
                    }
                    None
                }
            };
            generators.push(Generator {
                id: g.id.clone(),
                bus,
                gpg,
                p_min: g.p_min_mw / sb,
                p_max: g.p_max_mw / sb,
                ramp_down: g.ramp_down_mw_per_h / sb,
                ramp_up: g.ramp_up_mw_per_h / sb,
                c2: g.c2,
                c1: g.c1,
                c0: g.c0,
                initial: g.initial_mw / sb,
            });
        }

        let mut pipes = Vec::with_capacity(si.pipes.len());
        for p in &si.pipes {
            let from = index_of(&node_ids, &p.from, "pipe", &p.id, "node")?;
            let to = index_of(&node_ids, &p.to, "pipe", &p.id, "node")?;
            if from == to {
                return Err(invariant("pipe", &p.id, "pipe connects a node to itself"));
            }
            if !(p.diameter_m > 0.0 && p.length_m > 0.0) {
                return Err(InstanceError::PipeGeometry(p.id.clone()));
            }
            if !(p.flow_max_m3s > 0.0) {
                return Err(invariant("pipe", &p.id, "flow bound must be positive"));
            }
            let fn_ = &si.nodes[from];
            let tn = &si.nodes[to];
            let pc = compute_pipe_constants(
                p.diameter_m,
                p.length_m,
                (fn_.pressure_min_pa, fn_.pressure_max_pa),
                (tn.pressure_min_pa, tn.pressure_max_pa),
                &constants,
            )?;
            let psi = pc.psi * pb / lb;
            let lo = psi * average_pressure(nodes[from].p_min, nodes[to].p_min);
            let hi = psi * average_pressure(nodes[from].p_max, nodes[to].p_max);
            let l0 = p.initial_linepack_m3 / lb;
            if !(l0 >= lo * (1.0 - 1e-12) && l0 <= hi * (1.0 + 1e-12)) {
                return Err(invariant(
                    "pipe",
                    &p.id,
                    &format!(
                        "initial linepack {} m3 outside [{}, {}] implied by pressure bounds",
                        p.initial_linepack_m3,
                        lo * lb,
                        hi * lb
                    ),
                ));
            }
            pipes.push(Pipe {
                id: p.id.clone(),
                from,
                to,
                diameter: p.diameter_m,
                length: p.length_m,
                flow_max: p.flow_max_m3s / fb,
                initial_linepack: l0,
                constants: pc,
                phi: pc.phi * pb * pb / (fb * fb),
                psi,
            });
        }

        let mut nonpipes = Vec::new();
        for (list, kind) in [(&si.compressors, NonPipeKind::Compressor), (&si.regulators, NonPipeKind::Regulator)] {
            for c in list.iter() {
                let label = if kind == NonPipeKind::Compressor { "compressor" } else { "regulator" };
                let from = index_of(&node_ids, &c.from, label, &c.id, "node")?;
                let to = index_of(&node_ids, &c.to, label, &c.id, "node")?;
                if from == to {
                    return Err(invariant(label, &c.id, "element connects a node to itself"));
                }
                match kind {
                    NonPipeKind::Compressor => {
                        if !(c.ratio_min >= 1.0 && c.ratio_max > 1.0 && c.ratio_min <= c.ratio_max) {
                            return Err(InstanceError::CompressorRatio(c.id.clone()));
                        }
                        if !(0.0..1.0).contains(&c.consumption) {
                            return Err(invariant(label, &c.id, "consumption fraction must lie in [0, 1)"));
                        }
                    }
                    NonPipeKind::Regulator => {
                        if !(c.ratio_min > 0.0 && c.ratio_min < 1.0 && c.ratio_max <= 1.0 && c.ratio_min <= c.ratio_max) {
                            return Err(InstanceError::RegulatorRatio(c.id.clone()));
                        }
                    }
                }
                if !(c.flow_max_m3s > 0.0) {
                    return Err(invariant(label, &c.id, "flow bound must be positive"));
                }
                nonpipes.push(NonPipe {
                    id: c.id.clone(),
                    kind,
                    from,
                    to,
                    flow_max: c.flow_max_m3s / fb,
                    ratio_min: c.ratio_min,
                    ratio_max: c.ratio_max,
                    consumption: if kind == NonPipeKind::Compressor { c.consumption } else { 0.0 },
                });
            }
        }

        let mut supplies = Vec::with_capacity(si.supplies.len());
        for s in &si.supplies {
            let node = index_of(&node_ids, &s.node, "supply", &s.id, "node")?;
            if !(s.flow_min_m3s <= s.flow_max_m3s) {
                return Err(invariant("supply", &s.id, "flow_min must not exceed flow_max"));
            }
            supplies.push(Supply {
                id: s.id.clone(),
                node,
                flow_min: s.flow_min_m3s / fb,
                flow_max: s.flow_max_m3s / fb,
                cost_per_m3: s.cost_per_m3,
            });
        }

        Ok(Instance {
            name: si.name.clone(),
            bases,
            constants,
            periods: h,
            dt,
            buses,
            branches,
            generators,
            nodes,
            pipes,
            nonpipes,
            supplies,
            final_linepack_min: si.final_linepack_min_m3.map(|v| v / lb),
        })
    }

    /// Converts back to the SI description.
    pub fn to_si(&self) -> SiInstance {
        let b = self.bases;
        let (sb, fb, pb, lb) = (b.power_mva, b.flow_m3s, b.pressure_pa, b.linepack_m3());
        let np = |c: &NonPipe| SiNonPipe {
            id: c.id.clone(),
            from: self.nodes[c.from].id.clone(),
            to: self.nodes[c.to].id.clone(),
            flow_max_m3s: c.flow_max * fb,
            ratio_min: c.ratio_min,
            ratio_max: c.ratio_max,
            consumption: c.consumption,
        };
        SiInstance {
            name: self.name.clone(),
            schema_version: SCHEMA_VERSION,
            horizon: SiHorizon { periods: self.periods, dt_hours: self.dt },
            buses: self
                .buses
                .iter()
                .map(|x| SiBus {
                    id: x.id.clone(),
                    shunt_conductance_pu: x.g_sh,
                    demand_mw: x.demand.iter().map(|d| d * sb).collect(),
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|x| SiBranch {
                    id: x.id.clone(),
                    from: self.buses[x.from].id.clone(),
                    to: self.buses[x.to].id.clone(),
                    admittance_pu: x.y,
                    tap_ratio: x.tap_ratio,
                    tap_shift_deg: x.tap_shift.to_degrees_nostd(),
                    limit_mw: x.limit * sb,
                    angle_min_deg: x.theta_min.to_degrees_nostd(),
                    angle_max_deg: x.theta_max.to_degrees_nostd(),
                })
                .collect(),
            generators: self
                .generators
                .iter()
                .map(|g| SiGenerator {
                    id: g.id.clone(),
                    bus: self.buses[g.bus].id.clone(),
                    kind: if g.gpg.is_some() { GeneratorKind::Gpg } else { GeneratorKind::NonGpg },
                    p_min_mw: g.p_min * sb,
                    p_max_mw: g.p_max * sb,
                    ramp_down_mw_per_h: g.ramp_down * sb,
                    ramp_up_mw_per_h: g.ramp_up * sb,
                    c2: g.c2,
                    c1: g.c1,
                    c0: g.c0,
                    efficiency: g.gpg.map(|(_, e)| e),
                    gas_node: g.gpg.map(|(n, _)| self.nodes[n].id.clone()),
                    initial_mw: g.initial * sb,
                })
                .collect(),
            nodes: self
                .nodes
                .iter()
                .map(|n| SiNode {
                    id: n.id.clone(),
                    pressure_min_pa: n.p_min * pb,
                    pressure_max_pa: n.p_max * pb,
                    demand_m3s: n.demand.iter().map(|d| d * fb).collect(),
                })
                .collect(),
            pipes: self
                .pipes
                .iter()
                .map(|p| SiPipe {
                    id: p.id.clone(),
                    from: self.nodes[p.from].id.clone(),
                    to: self.nodes[p.to].id.clone(),
                    diameter_m: p.diameter,
                    length_m: p.length,
                    flow_max_m3s: p.flow_max * fb,
                    initial_linepack_m3: p.initial_linepack * lb,
                })
                .collect(),
            compressors: self.nonpipes.iter().filter(|c| c.kind == NonPipeKind::Compressor).map(np).collect(),
            regulators: self.nonpipes.iter().filter(|c| c.kind == NonPipeKind::Regulator).map(np).collect(),
            supplies: self
                .supplies
                .iter()
                .map(|s| SiSupply {
                    id: s.id.clone(),
                    node: self.nodes[s.node].id.clone(),
                    flow_min_m3s: s.flow_min * fb,
                    flow_max_m3s: s.flow_max * fb,
                    cost_per_m3: s.cost_per_m3,
                })
                .collect(),
            constants: Some(self.constants),
            final_linepack_min_m3: self.final_linepack_min.map(|v| v * lb),
        }
    }

    /// Higher heating value in per-unit power per per-unit flow.
    pub fn hhv_pu(&self) -> f64 {
        self.constants.hhv * self.bases.flow_m3s / self.bases.power_mva
    }

    /// Period length in seconds.
    pub fn dtau(&self) -> f64 {
        3600.0 * self.dt
    }

    /// Generation cost in $ of unit `g` producing `p` pu for one period.
    pub fn generator_cost(&self, g: usize, p: f64) -> f64 {
        let gen = &self.generators[g];
        let e = p * self.bases.power_mva * self.dt;
        gen.c2 * e * e + gen.c1 * e + gen.c0 * self.dt
    }

    /// Supply cost in $ of `flow` pu from supply `s` for one period.
    pub fn supply_cost(&self, s: usize, flow: f64) -> f64 {
        self.supplies[s].cost_per_m3 * flow * self.bases.flow_m3s * self.dtau()
    }

    /// Number of compressors (they precede regulators in `nonpipes`).
    pub fn num_compressors(&self) -> usize {
        self.nonpipes.iter().filter(|c| c.kind == NonPipeKind::Compressor).count()
    }

    /// Bounds of the average pressure of pipe `k`.
    pub fn avg_pressure_bounds(&self, k: usize) -> (f64, f64) {
        let p = &self.pipes[k];
        let (a, b) = (&self.nodes[p.from], &self.nodes[p.to]);
        (average_pressure(a.p_min, b.p_min), average_pressure(a.p_max, b.p_max))
    }
}

trait AngleExt {
    fn to_radians_nostd(self) -> f64;
    fn to_degrees_nostd(self) -> f64;
}

impl AngleExt for f64 {
    fn to_radians_nostd(self) -> f64 {
        self * (PI / 180.0)
    }
    fn to_degrees_nostd(self) -> f64 {
        self * (180.0 / PI)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn friction_half_metre() {
        assert!((weymouth_friction(0.5) - 0.011852).abs() < 5e-7);
    }

    #[test]
    fn compressibility_is_one_at_zero_pressure() {
        assert_eq!(compressibility(0.0, 0.0, &GasConstants::default()), 1.0);
    }

    #[test]
    fn untapped_line_coefficients() {
        let (g_ij, b_ij, g_ji, b_ji) = line_coefficients([1.0, -10.0], 1.0, 0.0);
        assert!((g_ij - 1.0).abs() < 1e-15 && (b_ij - 10.0).abs() < 1e-15);
        assert!((g_ji - 1.0).abs() < 1e-15 && (b_ji - 10.0).abs() < 1e-15);
    }
}
