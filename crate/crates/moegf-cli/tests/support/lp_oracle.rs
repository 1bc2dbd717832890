//! Exhaustive vertex enumeration for small bounded LPs and MILPs.

#![allow(clippy::needless_range_loop)]

use moegf::{LinearRow, LpProblem, RowTag, Sense};
use rand::Rng;

/// Dense LP with a finite box: min c.x, rows a.x (sense) b, lo <= x <= hi.
#[derive(Debug, Clone)]
pub struct DenseLp {
    pub c: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Sense, f64)>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl DenseLp {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn to_problem(&self) -> LpProblem {
        let mut p = LpProblem::new();
        for j in 0..self.n() {
            p.add_var(self.lo[j], self.hi[j], self.c[j]);
        }
        for (a, s, b) in &self.rows {
            let coeffs = a.iter().enumerate().map(|(j, &v)| (j, v)).collect();
            p.add_row(LinearRow::new(coeffs, *s, *b, RowTag::Custom));
        }
        p
    }

    fn feasible(&self, x: &[f64], tol: f64) -> bool {
        for j in 0..self.n() {
            if x[j] < self.lo[j] - tol || x[j] > self.hi[j] + tol {
                return false;
            }
        }
        self.rows.iter().all(|(a, s, b)| {
            let v: f64 = a.iter().zip(x).map(|(p, q)| p * q).sum();
            let t = tol * (1.0 + b.abs());
            match s {
                Sense::Le => v <= b + t,
                Sense::Ge => v >= b - t,
                Sense::Eq => (v - b).abs() <= t,
            }
        })
    }

    /// Optimal value by enumerating every basic solution, `None` if infeasible.
    pub fn enumerate(&self) -> Option<f64> {
        let n = self.n();
        let m = self.rows.len();
        let mut best: Option<f64> = None;
        let mut x = vec![0.0; n];
        for k in 0..=n.min(m) {
            for rset in subsets(m, k) {
                for fset in subsets(n, k) {
                    let fixed: Vec<usize> = (0..n).filter(|j| !fset.contains(j)).collect();
                    let a: Vec<Vec<f64>> = rset.iter().map(|&i| fset.iter().map(|&j| self.rows[i].0[j]).collect()).collect();
                    let Some(lu) = Lu::new(a) else { continue };
                    for pattern in 0u32..(1u32 << fixed.len()) {
                        for (t, &j) in fixed.iter().enumerate() {
                            x[j] = if pattern >> t & 1 == 1 { self.hi[j] } else { self.lo[j] };
                        }
                        let rhs: Vec<f64> = rset
                            .iter()
                            .map(|&i| self.rows[i].2 - fixed.iter().map(|&j| self.rows[i].0[j] * x[j]).sum::<f64>())
                            .collect();
                        let sol = lu.solve(&rhs);
                        for (t, &j) in fset.iter().enumerate() {
                            x[j] = sol[t];
                        }
                        if self.feasible(&x, 1e-9) {
                            let v: f64 = self.c.iter().zip(&x).map(|(p, q)| p * q).sum();
                            best = Some(best.map_or(v, |b: f64| b.min(v)));
                        }
                    }
                }
            }
        }
        best
    }
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for t in i + 1..k {
                    cur[t] = cur[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Gaussian elimination with partial pivoting.
struct Lu {
    a: Vec<Vec<f64>>,
    perm: Vec<usize>,
}

impl Lu {
    fn new(mut a: Vec<Vec<f64>>) -> Option<Lu> {
        let k = a.len();
        let mut perm: Vec<usize> = (0..k).collect();
        for c in 0..k {
            let p = (c..k).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
            if a[p][c].abs() < 1e-10 {
                return None;
            }
            a.swap(c, p);
            perm.swap(c, p);
            for r in c + 1..k {
                let f = a[r][c] / a[c][c];
                a[r][c] = f;
                for t in c + 1..k {
                    a[r][t] -= f * a[c][t];
                }
            }
        }
        Some(Lu { a, perm })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let k = self.a.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for r in 0..k {
            for t in 0..r {
                y[r] -= self.a[r][t] * y[t];
            }
        }
        for r in (0..k).rev() {
            for t in r + 1..k {
                y[r] -= self.a[r][t] * y[t];
            }
            y[r] /= self.a[r][r];
        }
        y
    }
}

fn sense<R: Rng>(rng: &mut R) -> Sense {
    match rng.gen_range(0..5) {
        0 => Sense::Eq,
        1 | 2 => Sense::Le,
        _ => Sense::Ge,
    }
}

/// Random bounded LP, usually feasible.
pub fn random_lp<R: Rng>(rng: &mut R, n: usize, m: usize) -> DenseLp {
    random_lp_binary(rng, n, m, 0)
}

/// Random bounded LP whose first `nb` variables lie in [0, 1]; rows are
/// built around a point that is integral in those variables.
fn random_lp_binary<R: Rng>(rng: &mut R, n: usize, m: usize, nb: usize) -> DenseLp {
    let mut lo: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..=0) as f64).collect();
    let mut hi: Vec<f64> = lo.iter().map(|l| l + rng.gen_range(1..=8) as f64).collect();
    for j in 0..nb {
        lo[j] = 0.0;
        hi[j] = 1.0;
    }
    let x0: Vec<f64> =
        (0..n).map(|j| if j < nb { rng.gen_range(0..=1) as f64 } else { rng.gen_range(lo[j]..=hi[j]) }).collect();
    let mut rows = Vec::new();
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-5..=5) as f64 }).collect();
        let v: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
        let s = sense(rng);
        let slack = if rng.gen_bool(0.1) { -2.0 } else { rng.gen_range(0.0..3.0) };
        let b = match s {
            Sense::Eq => v,
            Sense::Le => v + slack,
            Sense::Ge => v - slack,
        };
        rows.push((a, s, b));
    }
    let c = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    DenseLp { c, rows, lo, hi }
}

/// MILP oracle: enumerates binaries, solves each continuous LP by vertex enumeration.
pub fn enumerate_milp(lp: &DenseLp, binaries: &[usize]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for pattern in 0u32..(1u32 << binaries.len()) {
        let mut fixed = lp.clone();
        for (t, &j) in binaries.iter().enumerate() {
            let v = (pattern >> t & 1) as f64;
            fixed.lo[j] = v;
            fixed.hi[j] = v;
        }
        if let Some(v) = fixed.enumerate() {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// Random MILP whose first `nb` variables are binary.
pub fn random_milp<R: Rng>(rng: &mut R, nb: usize, nc: usize, m: usize) -> (DenseLp, Vec<usize>) {
    (random_lp_binary(rng, nb + nc, m, nb), (0..nb).collect())
}
