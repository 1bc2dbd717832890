use moegf::lp::{add_abs_penalty, bnb_solve, lp_solve, LinearRow, LpProblem, LpStatus, RowTag, Sense};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Bounded LP with `x = 0` feasible.
fn random_lp(seed: u64, n: usize, m: usize) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LpProblem::new();
    for _ in 0..n {
        p.add_var(0.0, rng.gen_range(1.0..10.0), rng.gen_range(-5.0..5.0));
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, rng.gen_range(-3.0..3.0)));
            }
        }
        let (sense, rhs) = if rng.gen_bool(0.5) { (Sense::Le, rng.gen_range(0.0..10.0)) } else { (Sense::Ge, -rng.gen_range(0.0..10.0)) };
        p.add_row(LinearRow::new(coeffs, sense, rhs, RowTag::Custom));
    }
    p
}

/// `b . y + sum_j d_j x_j` at the bound selected by the sign of the reduced cost.
fn dual_objective(p: &LpProblem, y: &[f64]) -> f64 {
    let mut d = p.objective.clone();
    for (r, yi) in p.rows.iter().zip(y) {
        for &(j, a) in &r.coeffs {
            d[j] -= a * yi;
        }
    }
    let rows: f64 = p.rows.iter().zip(y).map(|(r, yi)| r.rhs * yi).sum();
    let bounds: f64 = d.iter().enumerate().map(|(j, &dj)| if dj >= 0.0 { dj * p.lower[j] } else { dj * p.upper[j] }).sum();
    p.offset + rows + bounds
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn strong_duality_and_feasibility(seed in any::<u64>(), n in 1usize..12, m in 0usize..12) {
        let p = random_lp(seed, n, m);
        let s = lp_solve(&p);
        prop_assert_eq!(s.status, LpStatus::Optimal);
        prop_assert!(p.max_violation(&s.x) <= 1e-9);
        let dual = dual_objective(&p, &s.duals);
        prop_assert!((dual - s.objective).abs() <= 1e-8 * s.objective.abs().max(1.0), "primal {} dual {}", s.objective, dual);
    }

    #[test]
    fn solves_are_deterministic(seed in any::<u64>(), n in 1usize..10, m in 0usize..10) {
        let p = random_lp(seed, n, m);
        let (a, b) = (lp_solve(&p), lp_solve(&p.clone()));
        prop_assert_eq!(a.iterations, b.iterations);
        prop_assert!(a.x.iter().zip(&b.x).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    #[test]
    fn abs_split_is_exact(seed in any::<u64>(), n in 1usize..6, center in 0.0f64..1.0, w in 0.0f64..10.0) {
        let mut p = random_lp(seed, n, 3);
        let c = center * p.upper[0];
        let (sp, sm) = add_abs_penalty(&mut p, 0, c, w).unwrap();
        let s = lp_solve(&p);
        prop_assert_eq!(s.status, LpStatus::Optimal);
        prop_assert!(s.x[sp].min(s.x[sm]) <= 1e-9 || w == 0.0);
    }

    #[test]
    fn child_bounds_do_not_decrease(seed in any::<u64>(), nb in 1usize..7, m in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = random_lp(seed, 2, m);
        let bins: Vec<usize> = (0..nb).map(|_| p.add_var(0.0, 1.0, rng.gen_range(-4.0..1.0))).collect();
        for _ in 0..m {
            let mut coeffs: Vec<(usize, f64)> = bins.iter().map(|&j| (j, rng.gen_range(0.0..3.0))).collect();
            coeffs.push((0, rng.gen_range(-1.0..1.0)));
            p.add_row(LinearRow::new(coeffs, Sense::Le, rng.gen_range(0.5..4.0), RowTag::Custom));
        }
        let s = bnb_solve(&p, &bins);
        for &(parent, child) in &s.bound_pairs {
            prop_assert!(child >= parent - 1e-9, "{} < {}", child, parent);
        }
        if s.solution.status == LpStatus::Optimal {
            prop_assert!(bins.iter().all(|&j| (s.solution.x[j] - s.solution.x[j].round()).abs() <= 1e-6));
        }
    }
}
