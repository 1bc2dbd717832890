//! The coupled dispatch problem in general form: variables, linear rows,
//! nonlinear residuals with exact gradients, and the integrality set.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::envelopes::{pwl_tangent_points, Halfspace, Side};
use crate::instance::{average_pressure, Instance, NonPipeKind};
use crate::lp::{LinearRow, LpProblem, RowTag, Sense};
use crate::math::abs;

/// Variable families, in storage order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarFamily {
    /// Generator output.
    Pg,
    /// Branch flow at the from-bus.
    Pij,
    /// Branch flow at the to-bus.
    Pji,
    /// Bus angle.
    Theta,
    /// Branch angle difference.
    ThetaBr,
    /// Nodal pressure.
    Pressure,
    /// Average pipe pressure.
    AvgPressure,
    /// Average pipe flow.
    PipeFlow,
    /// Pipe linepack.
    Linepack,
    /// Pipe inflow.
    FlowIn,
    /// Pipe outflow.
    FlowOut,
    /// Non-pipe direction binary.
    Z,
    /// Gas drawn by a gas-powered unit.
    GpgFlow,
    /// Gas supply injection.
    Supply,
    /// Non-pipe element flow.
    NonPipeFlow,
    /// Compressor gas consumption.
    CompConsumed,
    /// Compressor boosted flow component.
    CompPlus,
    /// Compressor reverse flow component.
    CompMinus,
}

const FAMILIES: [VarFamily; 18] = [
    VarFamily::Pg,
    VarFamily::Pij,
    VarFamily::Pji,
    VarFamily::Theta,
    VarFamily::ThetaBr,
    VarFamily::Pressure,
    VarFamily::AvgPressure,
    VarFamily::PipeFlow,
    VarFamily::Linepack,
    VarFamily::FlowIn,
    VarFamily::FlowOut,
    VarFamily::Z,
    VarFamily::GpgFlow,
    VarFamily::Supply,
    VarFamily::NonPipeFlow,
    VarFamily::CompConsumed,
    VarFamily::CompPlus,
    VarFamily::CompMinus,
];

impl VarFamily {
    /// All families in storage order.
    pub fn all() -> &'static [VarFamily] {
        &FAMILIES
    }

    /// Short symbol used in names and dumps.
    pub fn symbol(self) -> &'static str {
        match self {
            VarFamily::Pg => "pg",
            VarFamily::Pij => "pij",
            VarFamily::Pji => "pji",
            VarFamily::Theta => "theta",
            VarFamily::ThetaBr => "thetaij",
            VarFamily::Pressure => "pr",
            VarFamily::AvgPressure => "pavg",
            VarFamily::PipeFlow => "phi",
            VarFamily::Linepack => "lp",
            VarFamily::FlowIn => "phiin",
            VarFamily::FlowOut => "phiout",
            VarFamily::Z => "z",
            VarFamily::GpgFlow => "phig",
            VarFamily::Supply => "phis",
            VarFamily::NonPipeFlow => "phie",
            VarFamily::CompConsumed => "phic",
            VarFamily::CompPlus => "phiplus",
            VarFamily::CompMinus => "phiminus",
        }
    }
}

/// Dense index over all decision variables of all periods.
///
/// Family-major layout: `offset[family] + t * count[family] + element`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSpace {
    pub periods: usize,
    counts: [usize; 18],
    offsets: [usize; 18],
    total: usize,
}

impl VariableSpace {
    fn new(inst: &Instance) -> Self {
        let gpgs = inst.generators.iter().filter(|g| g.gpg.is_some()).count();
        let nc = inst.num_compressors();
        let counts = [
            inst.generators.len(),
            inst.branches.len(),
            inst.branches.len(),
            inst.buses.len(),
            inst.branches.len(),
            inst.nodes.len(),
            inst.pipes.len(),
            inst.pipes.len(),
            inst.pipes.len(),
            inst.pipes.len(),
            inst.pipes.len(),
            inst.nonpipes.len(),
            gpgs,
            inst.supplies.len(),
            inst.nonpipes.len(),
            nc,
            nc,
            nc,
        ];
        let mut offsets = [0usize; 18];
        let mut acc = 0;
        for (o, c) in offsets.iter_mut().zip(counts) {
            *o = acc;
            acc += c * inst.periods;
        }
        VariableSpace { periods: inst.periods, counts, offsets, total: acc }
    }

    /// Number of variables.
    pub fn len(&self) -> usize {
        self.total
    }

    /// True when there are no variables.
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Elements per period in a family.
    pub fn count(&self, f: VarFamily) -> usize {
        self.counts[f as usize]
    }

    /// Index of `(family, element, period)`.
    #[inline]
    pub fn index(&self, f: VarFamily, element: usize, t: usize) -> usize {
        debug_assert!(element < self.counts[f as usize] && t < self.periods);
        self.offsets[f as usize] + t * self.counts[f as usize] + element
    }

    /// Inverse of [`VariableSpace::index`].
    pub fn locate(&self, j: usize) -> Option<(VarFamily, usize, usize)> {
        (0..FAMILIES.len()).find_map(|f| {
            let (o, c) = (self.offsets[f], self.counts[f]);
            (j >= o && j < o + c * self.periods).then(|| (FAMILIES[f], (j - o) % c, (j - o) / c))
        })
    }

    /// Human-readable name such as `pg[3,0]`.
    pub fn name(&self, j: usize) -> String {
        match self.locate(j) {
            Some((f, e, t)) => format!("{}[{},{}]", f.symbol(), e, t),
            None => format!("aux[{j}]"),
        }
    }
}

/// Nonlinear residual families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ResidualKind {
    /// `0.5 g theta^2 + b theta - p_ij`.
    ElectricFrom,
    /// `0.5 g theta^2 - b theta - p_ji`.
    ElectricTo,
    /// `phi|phi| - Phi (pm^2 - pn^2)`.
    GasMotion,
    /// `(2/3)(pm + pn - pm pn / (pm + pn)) - pavg`.
    GasAvgPressure,
}

impl ResidualKind {
    /// True for the two electric kinds.
    pub fn is_electric(self) -> bool {
        matches!(self, ResidualKind::ElectricFrom | ResidualKind::ElectricTo)
    }
}

/// Residual evaluated outside its domain.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kind:?} residual of element {element} at period {period}: {message}; project the point into the variable bounds first")]
pub struct DomainError {
    pub kind: ResidualKind,
    pub element: usize,
    pub period: usize,
    pub message: &'static str,
}

/// One nonlinear equality `h(x) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub kind: ResidualKind,
    /// Branch or pipe index.
    pub element: usize,
    pub period: usize,
    /// Electric: `[theta_ij, p, _]`. Motion: `[phi, pm, pn]`. Average pressure: `[pm, pn, pavg]`.
    pub vars: [usize; 3],
    /// Electric: `[g, signed b]`. Motion: `[Phi, 0]`. Average pressure: unused.
    pub coef: [f64; 2],
}

impl Residual {
    fn domain(&self, x: &[f64], message: &'static str) -> DomainError {
        let _ = x;
        DomainError { kind: self.kind, element: self.element, period: self.period, message }
    }

    fn arity(&self) -> usize {
        if self.kind.is_electric() {
            2
        } else {
            3
        }
    }

    fn check(&self, x: &[f64]) -> Result<(), DomainError> {
        for &j in &self.vars[..self.arity()] {
            if !x[j].is_finite() {
                return Err(self.domain(x, "non-finite variable value"));
            }
        }
        if self.kind == ResidualKind::GasAvgPressure && !(x[self.vars[0]] + x[self.vars[1]] > 0.0) {
            return Err(self.domain(x, "pressure sum must be positive"));
        }
        Ok(())
    }

    /// `h(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, DomainError> {
        self.check(x)?;
        let v = self.vars;
        Ok(match self.kind {
            ResidualKind::ElectricFrom | ResidualKind::ElectricTo => {
                let th = x[v[0]];
                0.5 * self.coef[0] * th * th + self.coef[1] * th - x[v[1]]
            }
            ResidualKind::GasMotion => {
                let (f, pm, pn) = (x[v[0]], x[v[1]], x[v[2]]);
                f * abs(f) - self.coef[0] * (pm * pm - pn * pn)
            }
            ResidualKind::GasAvgPressure => average_pressure(x[v[0]], x[v[1]]) - x[v[2]],
        })
    }

    /// Sparse gradient `(index, d h / d x_index)`.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<(usize, f64)>, DomainError> {
        self.check(x)?;
        let v = self.vars;
        Ok(match self.kind {
            ResidualKind::ElectricFrom | ResidualKind::ElectricTo => {
                alloc::vec![(v[0], self.coef[0] * x[v[0]] + self.coef[1]), (v[1], -1.0)]
            }
            ResidualKind::GasMotion => {
                let (f, pm, pn) = (x[v[0]], x[v[1]], x[v[2]]);
                alloc::vec![(v[0], 2.0 * abs(f)), (v[1], -2.0 * self.coef[0] * pm), (v[2], 2.0 * self.coef[0] * pn)]
            }
            ResidualKind::GasAvgPressure => {
                let (pm, pn) = (x[v[0]], x[v[1]]);
                let s = pm + pn;
                let c = 2.0 / 3.0;
                alloc::vec![(v[0], c * (1.0 - pn * pn / (s * s))), (v[1], c * (1.0 - pm * pm / (s * s))), (v[2], -1.0)]
            }
        })
    }

    /// Value and gradient together.
    pub fn eval_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<(usize, f64)>), DomainError> {
        Ok((self.eval(x)?, self.gradient(x)?))
    }

    /// First-order model `grad . x = grad . x_k - h(x_k)` as `(coeffs, rhs)`.
    pub fn tangent(&self, xk: &[f64]) -> Result<(Vec<(usize, f64)>, f64), DomainError> {
        let (h, g) = self.eval_with_gradient(xk)?;
        let rhs = g.iter().map(|&(j, c)| c * xk[j]).sum::<f64>() - h;
        Ok((g, rhs))
    }
}

/// Evaluates a residual, returning `(value, gradient)`.
pub fn eval_residual(r: &Residual, x: &[f64]) -> Result<(f64, Vec<(usize, f64)>), DomainError> {
    r.eval_with_gradient(x)
}

/// The full problem in general form.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemModel {
    pub instance: Instance,
    pub vars: VariableSpace,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// All linear rows.
    pub rows: Vec<LinearRow>,
    /// Linear objective coefficients in cost-base units.
    pub linear_cost: Vec<f64>,
    /// Constant objective term in cost-base units.
    pub cost_offset: f64,
    /// Quadratic objective terms `a x_j^2` in cost-base units.
    pub quadratic: Vec<(usize, f64)>,
    /// Electric residuals first, then gas residuals.
    pub residuals: Vec<Residual>,
    pub num_electric: usize,
    /// Indices of the binary variables.
    pub binaries: Vec<usize>,
    /// Generator index of each gas-powered unit, in `GpgFlow` order.
    pub gpgs: Vec<usize>,
}

/// Base LP with a piecewise-linear objective epigraph.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlLp {
    pub lp: LpProblem,
    /// Number of model variables (prefix of the LP variables).
    pub model_vars: usize,
    /// Epigraph variables, one per generator pair per period.
    pub delta_vars: Vec<usize>,
}

fn row(coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64, tag: RowTag) -> LinearRow {
    LinearRow::new(coeffs, sense, rhs, tag)
}

/// Row `graph (side) slopes . inputs + intercept` for an envelope halfspace.
pub fn halfspace_row(h: &Halfspace, inputs: [Option<usize>; 2], graph: usize, tag: RowTag) -> LinearRow {
    let mut c = alloc::vec![(graph, 1.0)];
    for (k, inp) in inputs.iter().enumerate() {
        if let Some(j) = *inp {
            c.push((j, -h.slopes[k]));
        }
    }
    let sense = match h.side {
        Side::Above => Sense::Ge,
        Side::Below => Sense::Le,
    };
    row(c, sense, h.intercept, tag)
}

/// Builds the problem from a validated instance.
pub fn build_moegf(inst: &Instance) -> ProblemModel {
    use VarFamily as F;
    let vs = VariableSpace::new(inst);
    let n = vs.len();
    let h = inst.periods;
    let mut lower = alloc::vec![0.0; n];
    let mut upper = alloc::vec![0.0; n];
    let mut rows = Vec::new();
    let cb = inst.bases.cost;
    let mut linear_cost = alloc::vec![0.0; n];
    let mut cost_offset = 0.0;
    let mut quadratic = Vec::new();
    let mut residuals = Vec::new();
    let gpgs: Vec<usize> = (0..inst.generators.len()).filter(|&g| inst.generators[g].gpg.is_some()).collect();
    let hhv = inst.hhv_pu();
    let angle_box: f64 = inst.branches.iter().map(|b| abs(b.theta_min).max(abs(b.theta_max))).sum();
    let sb = inst.bases.power_mva;

    let mut set = |j: usize, lo: f64, hi: f64| {
        lower[j] = lo;
        upper[j] = hi;
    };
    for t in 0..h {
        for (g, gen) in inst.generators.iter().enumerate() {
            set(vs.index(F::Pg, g, t), gen.p_min, gen.p_max);
        }
        for (l, br) in inst.branches.iter().enumerate() {
            set(vs.index(F::Pij, l, t), -br.limit, br.limit);
            set(vs.index(F::Pji, l, t), -br.limit, br.limit);
            set(vs.index(F::ThetaBr, l, t), br.theta_min, br.theta_max);
        }
        for i in 0..inst.buses.len() {
            set(vs.index(F::Theta, i, t), -angle_box, angle_box);
        }
        for (m, node) in inst.nodes.iter().enumerate() {
            set(vs.index(F::Pressure, m, t), node.p_min, node.p_max);
        }
        for (k, p) in inst.pipes.iter().enumerate() {
            let (lo, hi) = inst.avg_pressure_bounds(k);
            set(vs.index(F::AvgPressure, k, t), lo, hi);
            set(vs.index(F::Linepack, k, t), p.psi * lo, p.psi * hi);
            for f in [F::PipeFlow, F::FlowIn, F::FlowOut] {
                set(vs.index(f, k, t), -p.flow_max, p.flow_max);
            }
        }
        for (e, np) in inst.nonpipes.iter().enumerate() {
            set(vs.index(F::Z, e, t), 0.0, 1.0);
            set(vs.index(F::NonPipeFlow, e, t), -np.flow_max, np.flow_max);
            if np.kind == NonPipeKind::Compressor {
                set(vs.index(F::CompConsumed, e, t), 0.0, np.consumption * np.flow_max);
                set(vs.index(F::CompPlus, e, t), 0.0, np.flow_max);
                set(vs.index(F::CompMinus, e, t), -np.flow_max, 0.0);
            }
        }
        for (q, &g) in gpgs.iter().enumerate() {
            let gen = &inst.generators[g];
            let eta = gen.gpg.map(|x| x.1).unwrap_or(1.0);
            set(vs.index(F::GpgFlow, q, t), gen.p_min / (hhv * eta), gen.p_max / (hhv * eta));
        }
        for (s, sup) in inst.supplies.iter().enumerate() {
            set(vs.index(F::Supply, s, t), sup.flow_min, sup.flow_max);
        }
    }

    // Objective.
    for t in 0..h {
        for (g, gen) in inst.generators.iter().enumerate() {
            let j = vs.index(F::Pg, g, t);
            let e = sb * inst.dt;
            linear_cost[j] += gen.c1 * e / cb;
            cost_offset += gen.c0 * inst.dt / cb;
            if gen.c2 > 0.0 {
                quadratic.push((j, gen.c2 * e * e / cb));
            }
        }
        for (s, sup) in inst.supplies.iter().enumerate() {
            let j = vs.index(F::Supply, s, t);
            linear_cost[j] += sup.cost_per_m3 * inst.bases.flow_m3s * inst.dtau() / cb;
        }
    }

    for t in 0..h {
        // Ramp limits.
        for (g, gen) in inst.generators.iter().enumerate() {
            let j = vs.index(F::Pg, g, t);
            let (coeffs, base) = if t == 0 {
                (alloc::vec![(j, 1.0)], gen.initial)
            } else {
                (alloc::vec![(j, 1.0), (vs.index(F::Pg, g, t - 1), -1.0)], 0.0)
            };
            rows.push(row(coeffs.clone(), Sense::Le, base + gen.ramp_up * inst.dt, RowTag::Ramp));
            rows.push(row(coeffs, Sense::Ge, base - gen.ramp_down * inst.dt, RowTag::Ramp));
        }
        // Angle differences.
        for (l, br) in inst.branches.iter().enumerate() {
            rows.push(row(
                alloc::vec![
                    (vs.index(F::ThetaBr, l, t), 1.0),
                    (vs.index(F::Theta, br.from, t), -1.0),
                    (vs.index(F::Theta, br.to, t), 1.0)
                ],
                Sense::Eq,
                0.0,
                RowTag::AngleDiff,
            ));
        }
        // Bus balance.
        for (i, bus) in inst.buses.iter().enumerate() {
            let mut c = Vec::new();
            for (g, gen) in inst.generators.iter().enumerate() {
                if gen.bus == i {
                    c.push((vs.index(F::Pg, g, t), 1.0));
                }
            }
            for (l, br) in inst.branches.iter().enumerate() {
                if br.from == i {
                    c.push((vs.index(F::Pij, l, t), -1.0));
                }
                if br.to == i {
                    c.push((vs.index(F::Pji, l, t), -1.0));
                }
            }
            rows.push(row(c, Sense::Eq, bus.demand[t] + bus.g_sh, RowTag::Kcl));
        }
        // Gas-powered units.
        for (q, &g) in gpgs.iter().enumerate() {
            let eta = inst.generators[g].gpg.map(|x| x.1).unwrap_or(1.0);
            rows.push(row(
                alloc::vec![(vs.index(F::Pg, g, t), 1.0), (vs.index(F::GpgFlow, q, t), -hhv * eta)],
                Sense::Eq,
                0.0,
                RowTag::GpgCoupling,
            ));
        }
        // Nodal balance.
        for (m, node) in inst.nodes.iter().enumerate() {
            let mut c = Vec::new();
            for (s, sup) in inst.supplies.iter().enumerate() {
                if sup.node == m {
                    c.push((vs.index(F::Supply, s, t), 1.0));
                }
            }
            for (k, p) in inst.pipes.iter().enumerate() {
                if p.from == m {
                    c.push((vs.index(F::FlowIn, k, t), -1.0));
                }
                if p.to == m {
                    c.push((vs.index(F::FlowOut, k, t), 1.0));
                }
            }
            for (e, np) in inst.nonpipes.iter().enumerate() {
                if np.from == m {
                    c.push((vs.index(F::NonPipeFlow, e, t), -1.0));
                }
                if np.to == m {
                    c.push((vs.index(F::NonPipeFlow, e, t), 1.0));
                }
            }
            for (q, &g) in gpgs.iter().enumerate() {
                if inst.generators[g].gpg.map(|x| x.0) == Some(m) {
                    c.push((vs.index(F::GpgFlow, q, t), -1.0));
                }
            }
            rows.push(row(c, Sense::Eq, node.demand[t], RowTag::GasNodal));
        }
        // Pipes.
        for (k, p) in inst.pipes.iter().enumerate() {
            let phi = vs.index(F::PipeFlow, k, t);
            let fin = vs.index(F::FlowIn, k, t);
            let fout = vs.index(F::FlowOut, k, t);
            let lp = vs.index(F::Linepack, k, t);
            rows.push(row(alloc::vec![(phi, 1.0), (fin, -0.5), (fout, -0.5)], Sense::Eq, 0.0, RowTag::AvgFlow));
            rows.push(row(
                alloc::vec![(lp, 1.0), (vs.index(F::AvgPressure, k, t), -p.psi)],
                Sense::Eq,
                0.0,
                RowTag::Linepack,
            ));
            let mut c = alloc::vec![(lp, 1.0), (fin, -inst.dt), (fout, inst.dt)];
            let rhs = if t == 0 {
                p.initial_linepack
            } else {
                c.push((vs.index(F::Linepack, k, t - 1), -1.0));
                0.0
            };
            rows.push(row(c, Sense::Eq, rhs, RowTag::Continuity));
        }
        // Non-pipe elements.
        for (e, np) in inst.nonpipes.iter().enumerate() {
            let z = vs.index(F::Z, e, t);
            let f = vs.index(F::NonPipeFlow, e, t);
            let pm = vs.index(F::Pressure, np.from, t);
            let pn = vs.index(F::Pressure, np.to, t);
            let (nm, nn) = (&inst.nodes[np.from], &inst.nodes[np.to]);
            let fmax = np.flow_max;
            if np.kind == NonPipeKind::Compressor {
                let fp = vs.index(F::CompPlus, e, t);
                let fm = vs.index(F::CompMinus, e, t);
                let fc = vs.index(F::CompConsumed, e, t);
                rows.push(row(alloc::vec![(f, 1.0), (fp, -1.0), (fm, -1.0)], Sense::Eq, 0.0, RowTag::CompSplit));
                rows.push(row(alloc::vec![(fc, 1.0), (fp, -np.consumption)], Sense::Eq, 0.0, RowTag::CompTrap));
                rows.push(row(alloc::vec![(fp, 1.0), (z, -fmax)], Sense::Le, 0.0, RowTag::CompPlus));
                rows.push(row(alloc::vec![(fm, 1.0), (z, -fmax)], Sense::Ge, -fmax, RowTag::CompMinus));
            }
            rows.push(row(alloc::vec![(f, 1.0), (z, -fmax)], Sense::Le, 0.0, RowTag::NonPipeFlow));
            rows.push(row(alloc::vec![(f, 1.0), (z, -fmax)], Sense::Ge, -fmax, RowTag::NonPipeFlow));
            // (pn_max - pm_min gmax)(z - 1) + pn <= pm gmax
            let a = nn.p_max - nm.p_min * np.ratio_max;
            rows.push(row(alloc::vec![(z, a), (pn, 1.0), (pm, -np.ratio_max)], Sense::Le, a, RowTag::BoostUpper));
            // (pm_max gmin - pn_min)(z - 1) + pm gmin <= pn
            let b = nm.p_max * np.ratio_min - nn.p_min;
            rows.push(row(alloc::vec![(z, b), (pm, np.ratio_min), (pn, -1.0)], Sense::Le, b, RowTag::BoostLower));
            rows.push(row(
                alloc::vec![(pn, 1.0), (pm, -1.0), (z, -(nn.p_max - nm.p_min))],
                Sense::Le,
                0.0,
                RowTag::NoBoostUpper,
            ));
            rows.push(row(
                alloc::vec![(pm, 1.0), (pn, -1.0), (z, -(nm.p_max - nn.p_min))],
                Sense::Le,
                0.0,
                RowTag::NoBoostLower,
            ));
        }
    }
    if let Some(lmin) = inst.final_linepack_min {
        let c = (0..inst.pipes.len()).map(|k| (vs.index(F::Linepack, k, h - 1), 1.0)).collect();
        rows.push(row(c, Sense::Ge, lmin, RowTag::FinalLinepack));
    }

    // Residuals: electric first, then gas.
    for t in 0..h {
        for (l, br) in inst.branches.iter().enumerate() {
            let th = vs.index(F::ThetaBr, l, t);
            residuals.push(Residual {
                kind: ResidualKind::ElectricFrom,
                element: l,
                period: t,
                vars: [th, vs.index(F::Pij, l, t), usize::MAX],
                coef: [br.g_ij, br.b_ij],
            });
            residuals.push(Residual {
                kind: ResidualKind::ElectricTo,
                element: l,
                period: t,
                vars: [th, vs.index(F::Pji, l, t), usize::MAX],
                coef: [br.g_ji, -br.b_ji],
            });
        }
    }
    let num_electric = residuals.len();
    for t in 0..h {
        for (k, p) in inst.pipes.iter().enumerate() {
            let pm = vs.index(F::Pressure, p.from, t);
            let pn = vs.index(F::Pressure, p.to, t);
            residuals.push(Residual {
                kind: ResidualKind::GasMotion,
                element: k,
                period: t,
                vars: [vs.index(F::PipeFlow, k, t), pm, pn],
                coef: [p.phi, 0.0],
            });
            residuals.push(Residual {
                kind: ResidualKind::GasAvgPressure,
                element: k,
                period: t,
                vars: [pm, pn, vs.index(F::AvgPressure, k, t)],
                coef: [0.0, 0.0],
            });
        }
    }
    let binaries = (0..h).flat_map(|t| (0..inst.nonpipes.len()).map(move |e| (t, e))).map(|(t, e)| vs.index(F::Z, e, t)).collect();

    ProblemModel {
        instance: inst.clone(),
        vars: vs,
        lower,
        upper,
        rows,
        linear_cost,
        cost_offset,
        quadratic,
        residuals,
        num_electric,
        binaries,
        gpgs,
    }
}

impl ProblemModel {
    /// Number of model variables.
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// Shorthand for `vars.index`.
    #[inline]
    pub fn idx(&self, f: VarFamily, element: usize, t: usize) -> usize {
        self.vars.index(f, element, t)
    }

    /// Exact objective in $.
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.scaled_objective(x) * self.instance.bases.cost
    }

    /// Exact objective in cost-base units.
    pub fn scaled_objective(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.linear_cost.iter().zip(x).map(|(c, v)| c * v).sum();
        let quad: f64 = self.quadratic.iter().map(|&(j, a)| a * x[j] * x[j]).sum();
        self.cost_offset + lin + quad
    }

    /// Residual values, in residual order. Domain violations give `NaN`.
    pub fn residual_values(&self, x: &[f64]) -> Vec<f64> {
        self.residuals.iter().map(|r| r.eval(x).unwrap_or(f64::NAN)).collect()
    }

    /// Largest bound or linear-row violation.
    pub fn linear_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds = (0..self.num_vars())
            .map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Clamps `x` into the variable bounds.
    pub fn project(&self, x: &mut [f64]) {
        for j in 0..self.num_vars() {
            x[j] = x[j].clamp(self.lower[j], self.upper[j]);
        }
    }

    /// Number of rows per constraint family.
    pub fn census(&self) -> BTreeMap<RowTag, usize> {
        let mut m = BTreeMap::new();
        for r in &self.rows {
            *m.entry(r.tag).or_insert(0) += 1;
        }
        m
    }

    /// LP over the model variables with the piecewise-linear cost epigraph.
    ///
    /// Generators are paired in index order; each pair gets one epigraph
    /// variable per period bounding the sum of the pair's tangent models.
    pub fn base_lp(&self, segments: usize) -> PwlLp {
        let segments = segments.max(1);
        let mut lp = LpProblem {
            objective: self.linear_cost.clone(),
            offset: self.cost_offset,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            rows: self.rows.clone(),
        };
        let inst = &self.instance;
        let e = inst.bases.power_mva * inst.dt;
        let mut delta_vars = Vec::new();
        let ng = inst.generators.len();
        for t in 0..inst.periods {
            for pair in (0..ng).collect::<Vec<_>>().chunks(2) {
                let d = lp.add_var(0.0, f64::INFINITY, 1.0);
                delta_vars.push(d);
                let mut c = alloc::vec![(d, 1.0)];
                let mut rhs = 0.0;
                for &g in pair {
                    let gen = &inst.generators[g];
                    let a = gen.c2 * e * e / inst.bases.cost;
                    if a <= 0.0 {
                        continue;
                    }
                    let p = self.idx(VarFamily::Pg, g, t);
                    let pts = pwl_tangent_points(gen.p_min, gen.p_max, segments);
                    let width = (gen.p_max - gen.p_min) / segments as f64;
                    // p = p_min + sum w_i; the tangent maximum equals
                    // a p_min^2 - a width^2 / 4 + sum 2 a m_i w_i.
                    let mut link = alloc::vec![(p, 1.0)];
                    for &m in &pts {
                        let w = lp.add_var(0.0, width, 0.0);
                        link.push((w, -1.0));
                        c.push((w, -2.0 * a * m));
                    }
                    lp.add_row(row(link, Sense::Eq, gen.p_min, RowTag::CostPwl));
                    rhs += a * gen.p_min * gen.p_min - a * width * width / 4.0;
                }
                lp.add_row(row(c, Sense::Ge, rhs, RowTag::CostPwl));
            }
        }
        PwlLp { lp, model_vars: self.num_vars(), delta_vars }
    }

    /// Variable name for dumps; auxiliary variables get `aux[j]`.
    pub fn var_name(&self, j: usize) -> String {
        self.vars.name(j)
    }
}

/// Tangent rows of every residual at `xk`, stamped with iteration `k`.
///
/// Electric rows carry a slack with coefficient 1 at index
/// `slack_base + i` for electric residual `i`.
pub fn linearize_at(model: &ProblemModel, xk: &[f64], k: usize, slack_base: usize) -> Result<Vec<LinearRow>, DomainError> {
    let mut out = Vec::with_capacity(model.residuals.len());
    for (i, r) in model.residuals.iter().enumerate() {
        let (mut c, rhs) = r.tangent(xk)?;
        let tag = if i < model.num_electric {
            c.push((slack_base + i, 1.0));
            RowTag::TangentElectric
        } else {
            RowTag::TangentGas
        };
        out.push(row(c, Sense::Eq, rhs, tag).stamped(k));
    }
    Ok(out)
}

/// Writes an LP in a CPLEX-style text format.
///
/// Grammar: `Minimize` objective, `Subject To` rows named `c<i>_<tag>`,
/// `Bounds` with one `lo <= name <= hi` line per variable, optional
/// `Binaries`, then `End`. Infinite bounds are written as `-inf`/`+inf`.
pub fn to_lp_text(lp: &LpProblem, name: &dyn Fn(usize) -> String, binaries: &[usize]) -> String {
    let mut s = String::new();
    let term = |s: &mut String, c: f64, j: usize| {
        let _ = write!(s, " {} {:e} {}", if c < 0.0 { '-' } else { '+' }, abs(c), name(j));
    };
    s.push_str("Minimize\n obj:");
    for (j, &c) in lp.objective.iter().enumerate() {
        if c != 0.0 {
            term(&mut s, c, j);
        }
    }
    if lp.offset != 0.0 {
        let _ = write!(s, " {} {:e}", if lp.offset < 0.0 { '-' } else { '+' }, abs(lp.offset));
    }
    s.push_str("\nSubject To\n");
    for (i, r) in lp.rows.iter().enumerate() {
        let _ = write!(s, " c{i}_{:?}:", r.tag);
        for &(j, c) in &r.coeffs {
            term(&mut s, c, j);
        }
        let op = match r.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        let _ = writeln!(s, " {op} {:e}", r.rhs);
    }
    s.push_str("Bounds\n");
    let fmt = |v: f64| -> String {
        if v == f64::INFINITY {
            "+inf".into()
        } else if v == f64::NEG_INFINITY {
            "-inf".into()
        } else {
            format!("{v:e}")
        }
    };
    for j in 0..lp.num_vars() {
        let _ = writeln!(s, " {} <= {} <= {}", fmt(lp.lower[j]), name(j), fmt(lp.upper[j]));
    }
    if !binaries.is_empty() {
        s.push_str("Binaries\n");
        for &j in binaries {
            let _ = writeln!(s, " {}", name(j));
        }
    }
    s.push_str("End\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn motion(phi: f64) -> Residual {
        Residual { kind: ResidualKind::GasMotion, element: 0, period: 0, vars: [0, 1, 2], coef: [phi, 0.0] }
    }

    #[test]
    fn motion_example() {
        let r = motion(2.0);
        let x = [0.3, 1.2, 1.0];
        assert!((r.eval(&x).unwrap() + 0.79).abs() < 1e-14);
    }

    #[test]
    fn motion_zero_flow_gradient() {
        let r = motion(2.0);
        let g = r.gradient(&[0.0, 1.1, 1.1]).unwrap();
        assert_eq!(g[0].1, 0.0);
        assert_eq!(r.eval(&[0.0, 1.1, 1.1]).unwrap(), 0.0);
    }

    #[test]
    fn electric_at_origin() {
        let r = Residual { kind: ResidualKind::ElectricFrom, element: 0, period: 0, vars: [0, 1, usize::MAX], coef: [0.3, 7.0] };
        let x = [0.0, 0.4];
        assert_eq!(r.eval(&x).unwrap(), -0.4);
        assert_eq!(r.gradient(&x).unwrap()[0].1, 7.0);
        let (c, rhs) = r.tangent(&x).unwrap();
        assert_eq!(c, alloc::vec![(0, 7.0), (1, -1.0)]);
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn avg_pressure_domain() {
        let r = Residual { kind: ResidualKind::GasAvgPressure, element: 0, period: 0, vars: [0, 1, 2], coef: [0.0; 2] };
        assert!(r.eval(&[0.0, 0.0, 1.0]).is_err());
    }
}
