//! Polyhedral envelopes of the nonconvex terms and the PWL cost epigraph.
//!
//! Every envelope is a list of halfspaces bounding a graph variable by an
//! affine function of one or two input variables:
//!
//! | family          | inputs   | graph variable          |
//! |-----------------|----------|-------------------------|
//! | `Square`        | `x`      | `v = x^2`               |
//! | `SignedSquare`  | `x`      | `u = x abs(x)`          |
//! | `AvgPressure`   | `x, y`   | `w = -xy/(x+y)`         |
//! | `CostEpigraph`  | `p`      | `d = (sqrt(c2) dt p)^2` |

use alloc::vec::Vec;

use crate::math::{abs, sqrt};

/// Errors raised by envelope constructors.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("lower bound {lo} must be below upper bound {hi}")]
    EmptyInterval { lo: f64, hi: f64 },
    #[error("at least {min} points required, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("signed-square bounds must straddle zero, got [{lo}, {hi}]")]
    NotStraddlingZero { lo: f64, hi: f64 },
    #[error("average-pressure bounds must be strictly positive")]
    NonPositiveBounds,
    #[error("quadratic cost coefficient must be non-negative, got {0}")]
    NegativeQuadratic(f64),
    #[error("non-finite envelope parameter")]
    NonFinite,
}

/// Construction family of an envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EnvelopeFamily {
    Square,
    SignedSquare,
    AvgPressure,
    CostEpigraph,
}

/// Which side of the affine function the graph variable lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// graph variable >= affine
    Above,
    /// graph variable <= affine
    Below,
}

/// `graph (side) slopes . inputs + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Halfspace {
    pub slopes: [f64; 2],
    pub intercept: f64,
    pub side: Side,
}

impl Halfspace {
    fn above(slopes: [f64; 2], intercept: f64) -> Self {
        Halfspace { slopes, intercept, side: Side::Above }
    }

    fn below(slopes: [f64; 2], intercept: f64) -> Self {
        Halfspace { slopes, intercept, side: Side::Below }
    }

    /// Affine value at the inputs.
    pub fn affine(&self, inputs: [f64; 2]) -> f64 {
        self.slopes[0] * inputs[0] + self.slopes[1] * inputs[1] + self.intercept
    }

    /// Amount by which `(inputs, graph)` violates the halfspace (0 if satisfied).
    pub fn violation(&self, inputs: [f64; 2], graph: f64) -> f64 {
        let a = self.affine(inputs);
        match self.side {
            Side::Above => (a - graph).max(0.0),
            Side::Below => (graph - a).max(0.0),
        }
    }

    /// Signed gap `graph - affine` (Above) or `affine - graph` (Below); zero means tight.
    pub fn slack(&self, inputs: [f64; 2], graph: f64) -> f64 {
        let a = self.affine(inputs);
        match self.side {
            Side::Above => graph - a,
            Side::Below => a - graph,
        }
    }
}

/// A finite set of halfspaces outer-approximating one nonconvex graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub family: EnvelopeFamily,
    pub halfspaces: Vec<Halfspace>,
    /// Tangent points or named breakpoints used by the construction.
    pub breakpoints: Vec<f64>,
    /// `[x_lo, x_hi, y_lo, y_hi]`; the `y` entries are zero for univariate families.
    pub bounds: [f64; 4],
}

impl Envelope {
    /// Largest violation of any halfspace at the given point.
    pub fn max_violation(&self, inputs: [f64; 2], graph: f64) -> f64 {
        self.halfspaces.iter().map(|h| h.violation(inputs, graph)).fold(0.0, f64::max)
    }

    /// Interval of graph values admitted at the given inputs.
    pub fn graph_range(&self, inputs: [f64; 2]) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for h in &self.halfspaces {
            let a = h.affine(inputs);
            match h.side {
                Side::Above => lo = lo.max(a),
                Side::Below => hi = hi.min(a),
            }
        }
        (lo, hi)
    }

    /// True function value of the enveloped graph.
    pub fn graph_value(&self, inputs: [f64; 2]) -> f64 {
        match self.family {
            EnvelopeFamily::Square => inputs[0] * inputs[0],
            EnvelopeFamily::SignedSquare => inputs[0] * abs(inputs[0]),
            EnvelopeFamily::AvgPressure => avg_pressure_term(inputs[0], inputs[1]),
            EnvelopeFamily::CostEpigraph => {
                let s = self.breakpoints.first().copied().unwrap_or(0.0);
                s * inputs[0] * inputs[0]
            }
        }
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<(), EnvelopeError> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(EnvelopeError::NonFinite);
    }
    if lo >= hi {
        return Err(EnvelopeError::EmptyInterval { lo, hi });
    }
    Ok(())
}

/// Tangent of `x^2` at `h`: `v >= 2 h x - h^2`.
fn square_tangent(h: f64) -> Halfspace {
    Halfspace::above([2.0 * h, 0.0], -h * h)
}

/// Envelope of `v = x^2` on `[lo, hi]`: `l` uniformly spaced tangents
/// (endpoints included) and the secant over the interval.
pub fn envelope_square(lo: f64, hi: f64, l: usize) -> Result<Envelope, EnvelopeError> {
    check_interval(lo, hi)?;
    if l < 2 {
        return Err(EnvelopeError::TooFewPoints { min: 2, got: l });
    }
    let mut halfspaces = Vec::with_capacity(l + 1);
    let mut breakpoints = Vec::with_capacity(l);
    for i in 0..l {
        let h = lo + (hi - lo) * (i as f64) / ((l - 1) as f64);
        breakpoints.push(h);
        halfspaces.push(square_tangent(h));
    }
    halfspaces.push(Halfspace::below([hi + lo, 0.0], -hi * lo));
    Ok(Envelope { family: EnvelopeFamily::Square, halfspaces, breakpoints, bounds: [lo, hi, 0.0, 0.0] })
}

/// Envelope of `u = x abs(x)` on `[lo, hi]` with `lo < 0 < hi` (six halfspaces).
///
/// Breakpoints are stored as `[alpha, beta, gamma, delta]`.
pub fn envelope_signed_square(lo: f64, hi: f64) -> Result<Envelope, EnvelopeError> {
    check_interval(lo, hi)?;
    if !(lo < 0.0 && hi > 0.0) {
        return Err(EnvelopeError::NotStraddlingZero { lo, hi });
    }
    let r2 = sqrt(2.0);
    let alpha = lo * (1.0 - r2);
    let beta = hi * (1.0 - r2);
    let mut halfspaces = Vec::with_capacity(6);

    // Lower side: tangent to the convex branch through (lo, -lo^2).
    let gamma;
    if alpha <= hi {
        // Tangents at alpha and hi meet at (alpha + hi) / 2.
        gamma = 0.5 * (alpha + hi);
        halfspaces.push(square_tangent(alpha));
        halfspaces.push(square_tangent(hi));
        halfspaces.push(square_tangent(gamma));
    } else {
        // The convex branch is too short: the lower hull is the chord.
        gamma = hi;
        let slope = (hi * hi + lo * lo) / (hi - lo);
        let chord = Halfspace::above([slope, 0.0], -lo * lo - slope * lo);
        halfspaces.push(chord);
        halfspaces.push(chord);
        halfspaces.push(chord);
    }

    // Upper side by odd symmetry.
    let delta;
    if beta >= lo {
        delta = 0.5 * (beta + lo);
        for t in [beta, lo, delta] {
            // u <= -(2 t x - t^2)
            halfspaces.push(Halfspace::below([-2.0 * t, 0.0], t * t));
        }
    } else {
        delta = lo;
        let slope = (hi * hi + lo * lo) / (hi - lo);
        let chord = Halfspace::below([slope, 0.0], hi * hi - slope * hi);
        halfspaces.push(chord);
        halfspaces.push(chord);
        halfspaces.push(chord);
    }

    Ok(Envelope {
        family: EnvelopeFamily::SignedSquare,
        halfspaces,
        breakpoints: alloc::vec![alpha, beta, gamma, delta],
        bounds: [lo, hi, 0.0, 0.0],
    })
}

/// `-xy / (x + y)`.
pub fn avg_pressure_term(x: f64, y: f64) -> f64 {
    -x * y / (x + y)
}

/// Gradient of `-xy / (x + y)`.
pub fn avg_pressure_term_grad(x: f64, y: f64) -> [f64; 2] {
    let s = x + y;
    let s2 = s * s;
    [-y * y / s2, -x * x / s2]
}

/// Hessian of `-xy / (x + y)`.
pub fn avg_pressure_term_hessian(x: f64, y: f64) -> [[f64; 2]; 2] {
    let s3 = (x + y) * (x + y) * (x + y);
    [[2.0 * y * y / s3, -2.0 * x * y / s3], [-2.0 * x * y / s3, 2.0 * x * x / s3]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Envelope of `w = -xy/(x+y)` on a positive box: four corner tangent planes
/// below and two corner planes above.
pub fn envelope_avg_pressure(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Result<Envelope, EnvelopeError> {
    check_interval(x_lo, x_hi)?;
    check_interval(y_lo, y_hi)?;
    if x_lo <= 0.0 || y_lo <= 0.0 {
        return Err(EnvelopeError::NonPositiveBounds);
    }
    let f = avg_pressure_term;
    let mut halfspaces = Vec::with_capacity(6);
    for (cx, cy) in [(x_hi, y_hi), (x_lo, y_lo), (x_hi, y_lo), (x_lo, y_hi)] {
        let g = avg_pressure_term_grad(cx, cy);
        halfspaces.push(Halfspace::above(g, f(cx, cy) - g[0] * cx - g[1] * cy));
    }
    let p1 = [x_lo, y_lo, f(x_lo, y_lo)];
    let p2 = [x_hi, y_lo, f(x_hi, y_lo)];
    let p3 = [x_lo, y_hi, f(x_lo, y_hi)];
    let p4 = [x_hi, y_hi, f(x_hi, y_hi)];
    let a = cross(sub3(p2, p1), sub3(p3, p1));
    let b = cross(sub3(p2, p4), sub3(p3, p4));
    for (n, anchor) in [(a, p1), (b, p4)] {
        let sx = -n[0] / n[2];
        let sy = -n[1] / n[2];
        halfspaces.push(Halfspace::below([sx, sy], anchor[2] - sx * anchor[0] - sy * anchor[1]));
    }
    Ok(Envelope {
        family: EnvelopeFamily::AvgPressure,
        halfspaces,
        breakpoints: Vec::new(),
        bounds: [x_lo, x_hi, y_lo, y_hi],
    })
}

/// Tangent points of the PWL cost epigraph: midpoints of `segments` equal cells.
pub fn pwl_tangent_points(p_lo: f64, p_hi: f64, segments: usize) -> Vec<f64> {
    let w = (p_hi - p_lo) / segments as f64;
    (0..segments).map(|i| p_lo + (i as f64 + 0.5) * w).collect()
}

/// Tangent-line epigraph of `(sqrt(c2) dt p)^2` on `[p_lo, p_hi]`.
///
/// Breakpoints hold `[c2 dt^2, c1, c0, dt]` followed by the tangent points.
/// The linear and constant cost terms do not produce halfspaces.
#[allow(clippy::too_many_arguments)]
pub fn pwl_cost_epigraph(
    c2: f64,
    c1: f64,
    c0: f64,
    dt: f64,
    p_lo: f64,
    p_hi: f64,
    segments: usize,
) -> Result<Envelope, EnvelopeError> {
    if c2 < 0.0 {
        return Err(EnvelopeError::NegativeQuadratic(c2));
    }
    if segments < 1 {
        return Err(EnvelopeError::TooFewPoints { min: 1, got: segments });
    }
    if p_lo > p_hi || !p_lo.is_finite() || !p_hi.is_finite() || !dt.is_finite() {
        return Err(EnvelopeError::EmptyInterval { lo: p_lo, hi: p_hi });
    }
    let scale = c2 * dt * dt;
    let mut breakpoints = alloc::vec![scale, c1, c0, dt];
    let mut halfspaces = alloc::vec![Halfspace::above([0.0, 0.0], 0.0)];
    if scale > 0.0 {
        for h in pwl_tangent_points(p_lo, p_hi, segments) {
            breakpoints.push(h);
            halfspaces.push(Halfspace::above([2.0 * scale * h, 0.0], -scale * h * h));
        }
    }
    Ok(Envelope { family: EnvelopeFamily::CostEpigraph, halfspaces, breakpoints, bounds: [p_lo, p_hi, 0.0, 0.0] })
}

/// Worst-case gap between the quadratic and its tangent epigraph.
pub fn pwl_max_error(c2: f64, dt: f64, p_lo: f64, p_hi: f64, segments: usize) -> f64 {
    let w = sqrt(c2) * dt * (p_hi - p_lo) / segments as f64;
    w * w / 4.0
}
