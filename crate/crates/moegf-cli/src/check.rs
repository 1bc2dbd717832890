//! Sampled finite-difference check of the residual gradients.

use std::collections::BTreeMap;

use moegf::ProblemModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Relative tolerance of the check.
pub const GRADIENT_TOL: f64 = 1e-6;

/// Worst agreement for one residual kind.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KindCheck {
    pub points: usize,
    pub max_rel_error: f64,
}

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    pub kinds: BTreeMap<String, KindCheck>,
    pub passed: bool,
}

fn sample(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let (lo, hi) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo, hi),
        (true, false) => (lo, lo + 1.0),
        (false, true) => (hi - 1.0, hi),
        (false, false) => (-1.0, 1.0),
    };
    if hi <= lo {
        return lo;
    }
    let u: f64 = rng.gen_range(0.05..0.95);
    lo + u * (hi - lo)
}

/// Compares analytic residual gradients with central differences at
/// `samples` random interior points of the variable box.
pub fn gradient_check(model: &ProblemModel, seed: u64, samples: usize) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.num_vars();
    let mut kinds: BTreeMap<String, KindCheck> = BTreeMap::new();
    let mut x = vec![0.0; n];
    for _ in 0..samples {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = sample(&mut rng, model.lower[j], model.upper[j]);
        }
        for r in &model.residuals {
            let Ok(grad) = r.gradient(&x) else { continue };
            let mut worst: f64 = 0.0;
            for (j, g) in grad {
                let h = 1e-6 * x[j].abs().max(1.0);
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                let (Ok(fp), Ok(fm)) = (r.eval(&xp), r.eval(&xm)) else { continue };
                let fd = (fp - fm) / (2.0 * h);
                worst = worst.max((g - fd).abs() / g.abs().max(1.0));
            }
            let e = kinds.entry(format!("{:?}", r.kind)).or_insert(KindCheck { points: 0, max_rel_error: 0.0 });
            e.points += 1;
            e.max_rel_error = e.max_rel_error.max(worst);
        }
    }
    let passed = kinds.values().all(|k| k.max_rel_error <= GRADIENT_TOL);
    GradientCheck { seed, samples, tolerance: GRADIENT_TOL, kinds, passed }
}
