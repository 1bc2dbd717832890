//! Bounded primal and dual revised simplex.
//!
//! Basic unit columns (slacks and artificials) are handled implicitly. Only
//! the block `M = A[R, K]` is inverted, where `K` are the structural basic
//! columns and `R` the rows not covered by a basic unit column.

use alloc::vec;
use alloc::vec::Vec;

use super::{LpProblem, LpSolution, LpStatus, Sense};
use crate::math::abs;

/// Simplex settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Iteration cap; `None` means `50 * (rows + cols)`.
    pub max_iters: Option<usize>,
    /// Primal feasibility and reduced-cost tolerance.
    pub tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub stall_threshold: usize,
    /// Pivots between refactorizations of the basis inverse.
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_iters: None, tol: 1e-9, stall_threshold: 40, refactor_every: 100 }
    }
}

/// Solves an LP with default settings.
pub fn lp_solve(problem: &LpProblem) -> LpSolution {
    lp_solve_with(problem, &SimplexOptions::default())
}

/// Solves an LP with explicit settings.
pub fn lp_solve_with(problem: &LpProblem, opts: &SimplexOptions) -> LpSolution {
    lp_solve_with_bounds(problem, &problem.lower, &problem.upper, opts)
}

/// Solves an LP with variable bounds overriding those stored in `problem`.
pub fn lp_solve_with_bounds(problem: &LpProblem, lower: &[f64], upper: &[f64], opts: &SimplexOptions) -> LpSolution {
    lp_solve_warm(problem, lower, upper, opts, None).0
}

/// Basis of a solved LP, used to warm-start the same rows under new bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    basis: Vec<usize>,
    status: Vec<Status>,
    art: Vec<(usize, f64)>,
}

/// Solves under new bounds, starting from `warm` when given. The problem
/// may have rows appended after those of the snapshot. Returns the optimal
/// basis for later warm starts.
pub fn lp_solve_warm(
    problem: &LpProblem,
    lower: &[f64],
    upper: &[f64],
    opts: &SimplexOptions,
    warm: Option<&WarmStart>,
) -> (LpSolution, Option<WarmStart>) {
    let n = problem.num_vars();
    let m = problem.rows.len();
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        let sol = LpSolution {
            status: LpStatus::Infeasible,
            x: vec![0.0; n],
            objective: f64::INFINITY,
            duals: vec![0.0; m],
            iterations: 0,
        };
        return (sol, None);
    }
    if let Some(w) = warm.filter(|w| w.basis.len() <= m && w.status.len() == n + w.basis.len() + w.art.len()) {
        let mut s = Simplex::new(problem, lower, upper, opts);
        s.install(w);
        let mut status = s.dual_optimize();
        if status == LpStatus::Optimal {
            status = s.optimize();
        }
        if matches!(status, LpStatus::Optimal | LpStatus::Infeasible) {
            let snap = (status == LpStatus::Optimal).then(|| s.snapshot());
            return (s.finish(problem, status), snap);
        }
    }
    let mut s = Simplex::new(problem, lower, upper, opts);
    let sol = s.run(problem);
    let snap = (sol.status == LpStatus::Optimal).then(|| s.snapshot());
    (sol, snap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic variable held at zero.
    Zero,
}

const NONE: usize = usize::MAX;

struct Simplex {
    m: usize,
    n: usize,
    /// Structural columns, sparse, row-scaled.
    cols: Vec<Vec<(usize, f64)>>,
    /// Artificial columns as `(row, sign)`.
    art: Vec<(usize, f64)>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    row_scale: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    x: Vec<f64>,
    /// `N = M^-1` column-major with stride `m`: `nt[q * m + c] = N[c][q]`.
    nt: Vec<f64>,
    /// Basis position of structural index `c`.
    kpos: Vec<usize>,
    /// Structural index of a basis position, or `NONE`.
    kof: Vec<usize>,
    /// Row of uncovered index `q`.
    rrow: Vec<usize>,
    /// Uncovered index of a row, or `NONE`.
    rof: Vec<usize>,
    /// Basis position of the unit column covering a row, or `NONE`.
    cover: Vec<usize>,
    y: Vec<f64>,
    tol: f64,
    stall_threshold: usize,
    refactor_every: usize,
    max_iters: usize,
    iters: usize,
    since_refactor: usize,
}

impl Simplex {
    fn new(p: &LpProblem, lower: &[f64], upper: &[f64], opts: &SimplexOptions) -> Self {
        let m = p.rows.len();
        let n = p.num_vars();
        let mut row_scale = vec![1.0; m];
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut b = vec![0.0; m];
        let mut lb = Vec::with_capacity(n + m);
        let mut ub = Vec::with_capacity(n + m);
        lb.extend_from_slice(lower);
        ub.extend_from_slice(upper);
        for (i, r) in p.rows.iter().enumerate() {
            let mx = r.coeffs.iter().map(|e| abs(e.1)).fold(0.0, f64::max);
            let sc = if mx > 0.0 { 1.0 / mx } else { 1.0 };
            row_scale[i] = sc;
            for &(j, v) in &r.coeffs {
                cols[j].push((i, v * sc));
            }
            b[i] = r.rhs * sc;
        }
        for r in &p.rows {
            let (l, u) = match r.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lb.push(l);
            ub.push(u);
        }
        let mut cost = p.objective.clone();
        cost.resize(n + m, 0.0);
        let max_iters = opts.max_iters.unwrap_or(50 * (m + n).max(1));
        Simplex {
            m,
            n,
            cols,
            art: Vec::new(),
            lb,
            ub,
            cost,
            b,
            row_scale,
            basis: vec![0; m],
            status: vec![Status::Lower; n + m],
            x: vec![0.0; n + m],
            nt: Vec::new(),
            kpos: Vec::new(),
            kof: vec![NONE; m],
            rrow: Vec::new(),
            rof: vec![NONE; m],
            cover: vec![NONE; m],
            y: vec![0.0; m],
            tol: opts.tol,
            stall_threshold: opts.stall_threshold,
            refactor_every: opts.refactor_every.max(1),
            max_iters,
            iters: 0,
            since_refactor: 0,
        }
    }

    fn ncols(&self) -> usize {
        self.n + self.m + self.art.len()
    }

    /// Calls `f(row, value)` for each nonzero of column `j`.
    #[inline]
    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, v) in &self.cols[j] {
                f(i, v);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            let (i, s) = self.art[j - self.n - self.m];
            f(i, s);
        }
    }

    /// Unit column description `(row, sign)` for slacks and artificials.
    fn unit_col(&self, j: usize) -> Option<(usize, f64)> {
        if j < self.n {
            None
        } else if j < self.n + self.m {
            Some((j - self.n, 1.0))
        } else {
            Some(self.art[j - self.n - self.m])
        }
    }

    fn nonbasic_value(lb: f64, ub: f64) -> (f64, Status) {
        if lb.is_finite() {
            (lb, Status::Lower)
        } else if ub.is_finite() {
            (ub, Status::Upper)
        } else {
            (0.0, Status::Zero)
        }
    }

    /// Crash basis of slacks, with artificials for rows whose slack would be out of bounds.
    fn initial_basis(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut r = self.b.clone();
        for j in 0..n {
            let (v, st) = Self::nonbasic_value(self.lb[j], self.ub[j]);
            self.x[j] = v;
            self.status[j] = st;
            if v != 0.0 {
                for &(i, a) in &self.cols[j] {
                    r[i] -= a * v;
                }
            }
        }
        for i in 0..m {
            let s = n + i;
            let (l, u) = (self.lb[s], self.ub[s]);
            if r[i] >= l - self.tol && r[i] <= u + self.tol {
                self.basis[i] = s;
                self.status[s] = Status::Basic;
                self.x[s] = r[i];
            } else {
                let clamp = r[i].max(l).min(u);
                self.x[s] = clamp;
                self.status[s] = if clamp == l { Status::Lower } else { Status::Upper };
                let d = r[i] - clamp;
                let sign = if d > 0.0 { 1.0 } else { -1.0 };
                self.art.push((i, sign));
                let j = self.ncols() - 1;
                self.lb.push(0.0);
                self.ub.push(f64::INFINITY);
                self.cost.push(0.0);
                self.status.push(Status::Basic);
                self.x.push(abs(d));
                self.basis[i] = j;
            }
        }
    }

    /// Recomputes the basis inverse from scratch. Dependent structural
    /// columns are swapped for unit columns of uncovered rows.
    fn refactor(&mut self) {
        let m = self.m;
        loop {
            match self.try_refactor() {
                Ok(()) => break,
                Err(pos) => {
                    // Replace basis position `pos` by a unit column of an uncovered row.
                    let mut covered = vec![false; m];
                    for &j in &self.basis {
                        if let Some((i, _)) = self.unit_col(j) {
                            covered[i] = true;
                        }
                    }
                    let row = (0..m).find(|&i| !covered[i]).expect("singular basis with all rows covered");
                    let old = self.basis[pos];
                    let (l, u) = (self.lb[old], self.ub[old]);
                    let v = self.x[old];
                    let (nv, st) = if l.is_finite() && (!u.is_finite() || abs(v - l) <= abs(v - u)) {
                        (l, Status::Lower)
                    } else if u.is_finite() {
                        (u, Status::Upper)
                    } else {
                        (0.0, Status::Zero)
                    };
                    self.x[old] = nv;
                    self.status[old] = st;
                    let s = self.n + row;
                    self.basis[pos] = s;
                    self.status[s] = Status::Basic;
                    // Slack bounds may be violated; phase logic tolerates this via recompute.
                }
            }
        }
        self.recompute_primal();
        self.recompute_duals();
        self.since_refactor = 0;
    }

    fn try_refactor(&mut self) -> Result<(), usize> {
        let m = self.m;
        let mut cover_pos = vec![usize::MAX; m];
        let mut struct_pos = Vec::new();
        for (p, &j) in self.basis.iter().enumerate() {
            match self.unit_col(j) {
                Some((i, _)) => {
                    if cover_pos[i] != usize::MAX {
                        return Err(p);
                    }
                    cover_pos[i] = p;
                }
                None => struct_pos.push(p),
            }
        }
        let rows_r: Vec<usize> = (0..m).filter(|&i| cover_pos[i] == usize::MAX).collect();
        let k = struct_pos.len();
        debug_assert_eq!(k, rows_r.len());
        let mut rpos = vec![usize::MAX; m];
        for (q, &i) in rows_r.iter().enumerate() {
            rpos[i] = q;
        }
        // Dense M = A[R, K] augmented with identity, Gauss-Jordan.
        let w = 2 * k;
        let mut a = vec![0.0; k * w];
        for (c, &p) in struct_pos.iter().enumerate() {
            let j = self.basis[p];
            for &(i, v) in &self.cols[j] {
                let q = rpos[i];
                if q != usize::MAX {
                    a[q * w + c] = v;
                }
            }
        }
        for q in 0..k {
            a[q * w + k + q] = 1.0;
        }
        let mut col_of_row = vec![0usize; k];
        for c in 0..k {
            let mut best = c;
            let mut bv = abs(a[c * w + c]);
            for q in c + 1..k {
                let v = abs(a[q * w + c]);
                if v > bv {
                    bv = v;
                    best = q;
                }
            }
            if bv < 1e-11 {
                return Err(struct_pos[c]);
            }
            if best != c {
                for t in 0..w {
                    a.swap(c * w + t, best * w + t);
                }
            }
            let piv = a[c * w + c];
            let inv = 1.0 / piv;
            for t in 0..w {
                a[c * w + t] *= inv;
            }
            for q in 0..k {
                if q != c {
                    let f = a[q * w + c];
                    if f != 0.0 {
                        for t in c..w {
                            a[q * w + t] -= f * a[c * w + t];
                        }
                    }
                }
            }
            col_of_row[c] = c;
        }
        if self.nt.len() < m * m {
            self.nt = vec![0.0; m * m];
        }
        for (c, _) in struct_pos.iter().enumerate() {
            for q in 0..k {
                self.nt[q * m + c] = a[c * w + k + q];
            }
        }
        let _ = col_of_row;
        self.kof.iter_mut().for_each(|v| *v = NONE);
        self.rof.iter_mut().for_each(|v| *v = NONE);
        for (c, &p) in struct_pos.iter().enumerate() {
            self.kof[p] = c;
        }
        for (q, &i) in rows_r.iter().enumerate() {
            self.rof[i] = q;
        }
        self.kpos = struct_pos;
        self.rrow = rows_r;
        self.cover = cover_pos;
        Ok(())
    }

    fn k(&self) -> usize {
        self.kpos.len()
    }

    /// Solves `B v = a` for sparse `a` given as `(row, value)`; `v` is indexed by basis position.
    fn solve(&self, a: &[(usize, f64)]) -> Vec<f64> {
        let m = self.m;
        let k = self.k();
        let mut xk = vec![0.0; k];
        for &(i, v) in a {
            let q = self.rof[i];
            if q != NONE && v != 0.0 {
                let col = &self.nt[q * m..q * m + k];
                for (xc, n) in xk.iter_mut().zip(col) {
                    *xc += n * v;
                }
            }
        }
        let mut t = vec![0.0; m];
        for &(i, v) in a {
            if self.cover[i] != NONE {
                t[i] += v;
            }
        }
        for (c, &xc) in xk.iter().enumerate() {
            if xc != 0.0 {
                for &(i, v) in &self.cols[self.basis[self.kpos[c]]] {
                    if self.cover[i] != NONE {
                        t[i] -= v * xc;
                    }
                }
            }
        }
        let mut out = vec![0.0; m];
        for (c, &p) in self.kpos.iter().enumerate() {
            out[p] = xk[c];
        }
        for i in 0..m {
            let p = self.cover[i];
            if p != NONE {
                let (_, sg) = self.unit_col(self.basis[p]).unwrap();
                out[p] = sg * t[i];
            }
        }
        out
    }

    /// Solves `y^T B = w^T` with `w` indexed by basis position; `y` is indexed by row.
    fn solve_t(&self, w: &[f64]) -> Vec<f64> {
        let m = self.m;
        let k = self.k();
        let mut y = vec![0.0; m];
        for i in 0..m {
            let p = self.cover[i];
            if p != NONE {
                let (_, sg) = self.unit_col(self.basis[p]).unwrap();
                y[i] = sg * w[p];
            }
        }
        let mut g = vec![0.0; k];
        for (c, gc) in g.iter_mut().enumerate() {
            let p = self.kpos[c];
            let mut v = w[p];
            for &(i, a) in &self.cols[self.basis[p]] {
                if self.cover[i] != NONE {
                    v -= a * y[i];
                }
            }
            *gc = v;
        }
        let yr = self.row_times_n(&g);
        for (q, v) in yr.into_iter().enumerate() {
            y[self.rrow[q]] = v;
        }
        y
    }

    /// Row `r` of `B^-1`, indexed by row.
    fn inverse_row(&self, r: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.m];
        w[r] = 1.0;
        self.solve_t(&w)
    }

    /// `d^T A[i, K]` entries: row `i` of the structural basic block.
    fn basic_row(&self, i: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.k()];
        for (c, &p) in self.kpos.iter().enumerate() {
            for &(r, v) in &self.cols[self.basis[p]] {
                if r == i {
                    d[c] = v;
                }
            }
        }
        d
    }

    /// `d^T N` as a vector over uncovered indices.
    fn row_times_n(&self, d: &[f64]) -> Vec<f64> {
        let m = self.m;
        let k = self.k();
        let nz: Vec<(usize, f64)> = d.iter().copied().enumerate().filter(|e| e.1 != 0.0).collect();
        if nz.len() * 4 < k {
            return (0..k).map(|q| nz.iter().map(|&(c, dv)| self.nt[q * m + c] * dv).sum()).collect();
        }
        (0..k).map(|q| self.nt[q * m..q * m + k].iter().zip(d).map(|(n, dv)| n * dv).sum()).collect()
    }

    fn recompute_primal(&mut self) {
        let m = self.m;
        let mut r = self.b.clone();
        for j in 0..self.ncols() {
            if self.status[j] != Status::Basic {
                let v = self.x[j];
                if v != 0.0 {
                    let mut acc = Vec::new();
                    self.for_col(j, |i, a| acc.push((i, a)));
                    for (i, a) in acc {
                        r[i] -= a * v;
                    }
                }
            }
        }
        let rhs: Vec<(usize, f64)> = r.into_iter().enumerate().collect();
        let xb = self.solve(&rhs);
        for p in 0..m {
            self.x[self.basis[p]] = xb[p];
        }
    }

    fn update_duals(&mut self, rho: &[f64], f: f64) {
        for (yi, r) in self.y.iter_mut().zip(rho) {
            *yi += f * r;
        }
    }

    fn recompute_duals(&mut self) {
        let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        self.y = self.solve_t(&cb);
    }

    #[inline]
    fn reduced_cost(&self, j: usize) -> f64 {
        let mut d = self.cost[j];
        self.for_col(j, |i, a| d -= self.y[i] * a);
        d
    }

    /// Entering candidate with its reduced cost.
    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let tol = self.tol;
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncols() {
            let st = self.status[j];
            if st == Status::Basic || self.lb[j] == self.ub[j] {
                continue;
            }
            let d = self.reduced_cost(j);
            let eligible = match st {
                Status::Lower => d < -tol,
                Status::Upper => d > tol,
                Status::Zero => abs(d) > tol,
                Status::Basic => false,
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if abs(d) > best_score {
                best_score = abs(d);
                best = Some((j, d));
            }
        }
        best
    }

    /// Updates duals and the basis inverse after column `alpha` enters at position `r`.
    /// Replaces the basic variable at position `r` by `q`, whose column is `alpha = B^-1 a_q`.
    /// Must run before `basis` and `status` are changed. Returns false if a
    /// refactorization is needed instead.
    fn pivot_update(&mut self, r: usize, q: usize, alpha: &[f64]) -> bool {
        let m = self.m;
        let k = self.k();
        let out = self.basis[r];
        if let Some((i_new, _)) = self.unit_col(q) {
            let same = matches!(self.unit_col(out), Some((i, _)) if i == i_new);
            if !same && self.rof[i_new] == NONE {
                return false;
            }
        }
        match (self.unit_col(out), self.unit_col(q)) {
            (None, None) => {
                // Column c of M replaced.
                let c = self.kof[r];
                let xk: Vec<f64> = self.kpos.iter().map(|&p| alpha[p]).collect();
                let ac = xk[c];
                for qq in 0..k {
                    let col = &mut self.nt[qq * m..qq * m + k];
                    let piv = col[c] / ac;
                    if piv != 0.0 {
                        for (v, &a) in col.iter_mut().zip(&xk) {
                            *v -= a * piv;
                        }
                    }
                    col[c] = piv;
                }
            }
            (Some((i_old, _)), Some((i_new, _))) => {
                if i_old != i_new {
                    // Row i_new of M replaced by row i_old.
                    let qn = self.rof[i_new];
                    let a_old = self.basic_row(i_old);
                    let a_new = self.basic_row(i_new);
                    let d: Vec<f64> = a_old.iter().zip(&a_new).map(|(x, y)| x - y).collect();
                    let dn = self.row_times_n(&d);
                    let ncol: Vec<f64> = self.nt[qn * m..qn * m + k].to_vec();
                    let den = 1.0 + dn[qn];
                    for qq in 0..k {
                        let f = dn[qq] / den;
                        if f != 0.0 {
                            let col = &mut self.nt[qq * m..qq * m + k];
                            for (v, &nc) in col.iter_mut().zip(&ncol) {
                                *v -= nc * f;
                            }
                        }
                    }
                    self.rrow[qn] = i_old;
                    self.rof[i_old] = qn;
                    self.rof[i_new] = NONE;
                    self.cover[i_old] = NONE;
                }
                self.cover[i_new] = r;
            }
            (None, Some((i_new, _))) => {
                // Row i_new and column c of M removed.
                let c = self.kof[r];
                let qn = self.rof[i_new];
                let piv = self.nt[qn * m + c];
                let ncol: Vec<f64> = self.nt[qn * m..qn * m + k].to_vec();
                for qq in 0..k {
                    if qq == qn {
                        continue;
                    }
                    let f = self.nt[qq * m + c] / piv;
                    if f != 0.0 {
                        let col = &mut self.nt[qq * m..qq * m + k];
                        for (v, &nc) in col.iter_mut().zip(&ncol) {
                            *v -= nc * f;
                        }
                    }
                }
                let last = k - 1;
                if qn != last {
                    self.nt.copy_within(last * m..last * m + k, qn * m);
                    let row = self.rrow[last];
                    self.rrow[qn] = row;
                    self.rof[row] = qn;
                }
                if c != last {
                    for qq in 0..last {
                        self.nt[qq * m + c] = self.nt[qq * m + last];
                    }
                    let pos = self.kpos[last];
                    self.kpos[c] = pos;
                    self.kof[pos] = c;
                }
                self.kpos.pop();
                self.rrow.pop();
                self.rof[i_new] = NONE;
                self.kof[r] = NONE;
                self.cover[i_new] = r;
            }
            (Some((i_old, _)), None) => {
                // Row i_old and column q added to M.
                let nb: Vec<f64> = self.kpos.iter().map(|&p| alpha[p]).collect();
                let d = self.basic_row(i_old);
                let dn = self.row_times_n(&d);
                let mut e = 0.0;
                self.for_col(q, |i, v| {
                    if i == i_old {
                        e += v;
                    }
                });
                let sigma = e - d.iter().zip(&nb).map(|(a, b)| a * b).sum::<f64>();
                for qq in 0..k {
                    let f = dn[qq] / sigma;
                    let col = &mut self.nt[qq * m..qq * m + k + 1];
                    if f != 0.0 {
                        for (v, &b) in col[..k].iter_mut().zip(&nb) {
                            *v += b * f;
                        }
                    }
                    col[k] = -f;
                }
                let col = &mut self.nt[k * m..k * m + k + 1];
                for (v, &b) in col[..k].iter_mut().zip(&nb) {
                    *v = -b / sigma;
                }
                col[k] = 1.0 / sigma;
                self.kpos.push(r);
                self.kof[r] = k;
                self.rrow.push(i_old);
                self.rof[i_old] = k;
                self.cover[i_old] = NONE;
            }
        }
        true
    }

    fn dual_optimize(&mut self) -> LpStatus {
        let saved = self.cost.clone();
        let status = self.dual_loop();
        if self.cost != saved {
            self.cost = saved;
            self.recompute_duals();
        }
        status
    }

    /// Shifts nonbasic costs away from dual degeneracy; dual feasibility is kept.
    fn perturb_costs(&mut self) {
        for j in 0..self.ncols() {
            let delta = 1e-7 * (1.0 + abs(self.cost[j])) * (1.0 + ((j * 7919) % 1009) as f64 / 1009.0);
            match self.status[j] {
                Status::Lower if self.lb[j] != self.ub[j] => self.cost[j] += delta,
                Status::Upper if self.lb[j] != self.ub[j] => self.cost[j] -= delta,
                _ => {}
            }
        }
        self.recompute_duals();
    }

    fn dual_loop(&mut self) -> LpStatus {
        let m = self.m;
        let tol = self.tol;
        let cap = self.iters + 4 * (m + self.n);
        let mut perturbed = false;
        let mut stall = 0usize;
        let mut last_obj = f64::NEG_INFINITY;
        loop {
            if self.iters >= self.max_iters.min(cap) {
                return LpStatus::IterationLimit;
            }
            if !perturbed {
                let obj: f64 = (0..self.n).map(|j| self.cost[j] * self.x[j]).sum();
                if obj > last_obj + 1e-12 * (1.0 + abs(obj)) {
                    last_obj = obj;
                    stall = 0;
                } else {
                    stall += 1;
                    if stall >= self.stall_threshold {
                        self.perturb_costs();
                        perturbed = true;
                    }
                }
            }
            if self.since_refactor >= self.refactor_every {
                self.refactor();
            }
            // Leaving row: largest bound violation.
            let mut leave = None;
            let mut worst = tol;
            for p in 0..m {
                let j = self.basis[p];
                let v = if self.x[j] < self.lb[j] - tol {
                    self.lb[j] - self.x[j]
                } else if self.x[j] > self.ub[j] + tol {
                    self.x[j] - self.ub[j]
                } else {
                    0.0
                };
                if v > worst {
                    worst = v;
                    leave = Some(p);
                }
            }
            let Some(r) = leave else {
                return LpStatus::Optimal;
            };
            let jr = self.basis[r];
            let to_lower = self.x[jr] < self.lb[jr];
            let target = if to_lower { self.lb[jr] } else { self.ub[jr] };
            let rho = self.inverse_row(r);
            // Ratio test over nonbasic columns; Harris two-pass.
            let piv_tol = 1e-9;
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            let mut bound = f64::INFINITY;
            for j in 0..self.ncols() {
                let st = self.status[j];
                if st == Status::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let mut a = 0.0;
                self.for_col(j, |i, v| a += rho[i] * v);
                if abs(a) <= piv_tol {
                    continue;
                }
                // x_jr moves by -a per unit increase of x_j.
                let up_ok = match st {
                    Status::Lower => true,
                    Status::Upper => false,
                    _ => (to_lower && a < 0.0) || (!to_lower && a > 0.0),
                };
                let down_ok = match st {
                    Status::Upper => true,
                    Status::Lower => false,
                    _ => !up_ok,
                };
                let helps = if to_lower { (up_ok && a < 0.0) || (down_ok && a > 0.0) } else { (up_ok && a > 0.0) || (down_ok && a < 0.0) };
                if !helps {
                    continue;
                }
                let d = self.reduced_cost(j);
                let dd = match st {
                    Status::Lower => d.max(0.0),
                    Status::Upper => (-d).max(0.0),
                    _ => abs(d),
                };
                bound = bound.min((dd + tol) / abs(a));
                cands.push((j, a, dd / abs(a)));
            }
            if cands.is_empty() {
                return LpStatus::Infeasible;
            }
            let mut q = usize::MAX;
            let mut best = 0.0;
            for &(j, a, ratio) in &cands {
                if ratio <= bound && abs(a) > best {
                    best = abs(a);
                    q = j;
                }
            }
            let alpha = self.ftran(q);
            let ar = alpha[r];
            if abs(ar) <= piv_tol {
                self.refactor();
                continue;
            }
            let dx = (self.x[jr] - target) / ar;
            for p in 0..m {
                let j = self.basis[p];
                self.x[j] -= alpha[p] * dx;
            }
            self.x[q] += dx;
            self.x[jr] = target;
            let dq = self.reduced_cost(q);
            let ok = self.pivot_update(r, q, &alpha);
            self.status[jr] = if to_lower { Status::Lower } else { Status::Upper };
            self.basis[r] = q;
            self.status[q] = Status::Basic;
            if ok {
                self.update_duals(&rho, dq / ar);
            } else {
                self.refactor();
            }
            self.iters += 1;
            self.since_refactor += 1;
        }
    }

    fn snapshot(&self) -> WarmStart {
        WarmStart { basis: self.basis.clone(), status: self.status.clone(), art: self.art.clone() }
    }

    /// Installs a previous basis and moves nonbasic variables to their bounds.
    /// Rows appended since the snapshot enter with their slacks basic.
    fn install(&mut self, w: &WarmStart) {
        let (n, m) = (self.n, self.m);
        let m_old = w.basis.len();
        let shift = m - m_old;
        let remap = |j: usize| if j >= n + m_old { j + shift } else { j };
        for &(i, sign) in &w.art {
            self.art.push((i, sign));
            self.lb.push(0.0);
            self.ub.push(0.0);
            self.cost.push(0.0);
            self.x.push(0.0);
            self.status.push(Status::Lower);
        }
        for (p, &j) in w.basis.iter().enumerate() {
            self.basis[p] = remap(j);
        }
        for i in m_old..m {
            self.basis[i] = n + i;
            self.status[n + i] = Status::Basic;
        }
        for (j, &st) in w.status.iter().enumerate() {
            self.status[remap(j)] = st;
        }
        for j in 0..self.ncols() {
            let st = self.status[j];
            if st == Status::Basic {
                continue;
            }
            let (l, u) = (self.lb[j], self.ub[j]);
            let (v, s) = match st {
                Status::Lower if l.is_finite() => (l, Status::Lower),
                Status::Upper if u.is_finite() => (u, Status::Upper),
                _ => Self::nonbasic_value(l, u),
            };
            self.x[j] = v;
            self.status[j] = s;
        }
        self.refactor();
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let mut col = Vec::new();
        self.for_col(j, |i, a| col.push((i, a)));
        self.solve(&col)
    }

    /// One simplex pass on the current cost vector. Returns the final status.
    fn optimize(&mut self) -> LpStatus {
        let m = self.m;
        let mut bland = false;
        let mut stall = 0usize;
        let mut checked_after_refactor = false;
        loop {
            if self.iters >= self.max_iters {
                return LpStatus::IterationLimit;
            }
            if self.since_refactor >= self.refactor_every {
                self.refactor();
            }
            let Some((q, dq)) = self.price(bland) else {
                if self.since_refactor > 0 && !checked_after_refactor {
                    self.refactor();
                    checked_after_refactor = true;
                    continue;
                }
                return LpStatus::Optimal;
            };
            checked_after_refactor = false;
            let dir = match self.status[q] {
                Status::Lower => 1.0,
                Status::Upper => -1.0,
                _ => {
                    if dq < 0.0 {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            let alpha = self.ftran(q);
            let piv_tol = 1e-9;
            let ftol = self.tol;
            // Harris pass 1.
            let mut theta_max = f64::INFINITY;
            for p in 0..m {
                let a = alpha[p];
                if abs(a) <= piv_tol {
                    continue;
                }
                let j = self.basis[p];
                let rate = -dir * a;
                let lim = if rate < 0.0 {
                    if self.lb[j].is_finite() {
                        (self.x[j] - self.lb[j] + ftol) / -rate
                    } else {
                        f64::INFINITY
                    }
                } else if self.ub[j].is_finite() {
                    (self.ub[j] - self.x[j] + ftol) / rate
                } else {
                    f64::INFINITY
                };
                if lim < theta_max {
                    theta_max = lim;
                }
            }
            // Pass 2: largest pivot among candidates within theta_max.
            let mut leave: Option<usize> = None;
            let mut leave_ratio = 0.0;
            let mut best_piv = 0.0;
            if theta_max.is_finite() {
                for p in 0..m {
                    let a = alpha[p];
                    if abs(a) <= piv_tol {
                        continue;
                    }
                    let j = self.basis[p];
                    let rate = -dir * a;
                    let ratio = if rate < 0.0 {
                        if self.lb[j].is_finite() {
                            (self.x[j] - self.lb[j]) / -rate
                        } else {
                            continue;
                        }
                    } else if self.ub[j].is_finite() {
                        (self.ub[j] - self.x[j]) / rate
                    } else {
                        continue;
                    };
                    if ratio <= theta_max {
                        let better = if bland {
                            match leave {
                                None => true,
                                Some(lp) => {
                                    ratio < leave_ratio - 1e-12
                                        || (ratio <= leave_ratio + 1e-12 && self.basis[p] < self.basis[lp])
                                }
                            }
                        } else {
                            abs(a) > best_piv
                        };
                        if better {
                            best_piv = abs(a);
                            leave = Some(p);
                            leave_ratio = ratio;
                        }
                    }
                }
            }
            let range = self.ub[q] - self.lb[q];
            let step_leave = leave.map(|_| leave_ratio.max(0.0)).unwrap_or(f64::INFINITY);
            self.iters += 1;
            if range.is_finite() && range <= step_leave {
                // Bound flip.
                for p in 0..m {
                    let j = self.basis[p];
                    self.x[j] -= dir * range * alpha[p];
                }
                if dir > 0.0 {
                    self.x[q] = self.ub[q];
                    self.status[q] = Status::Upper;
                } else {
                    self.x[q] = self.lb[q];
                    self.status[q] = Status::Lower;
                }
                if range > 1e-12 {
                    stall = 0;
                    bland = false;
                }
                continue;
            }
            let Some(r) = leave else {
                return LpStatus::Unbounded;
            };
            let theta = step_leave;
            for p in 0..m {
                let j = self.basis[p];
                self.x[j] -= dir * theta * alpha[p];
            }
            self.x[q] += dir * theta;
            let out = self.basis[r];
            let rho = self.inverse_row(r);
            let ok = self.pivot_update(r, q, &alpha);
            let rate = -dir * alpha[r];
            if rate < 0.0 {
                self.x[out] = self.lb[out];
                self.status[out] = Status::Lower;
            } else {
                self.x[out] = self.ub[out];
                self.status[out] = Status::Upper;
            }
            self.basis[r] = q;
            self.status[q] = Status::Basic;
            if ok {
                self.update_duals(&rho, dq / alpha[r]);
            } else {
                self.refactor();
            }
            self.since_refactor += 1;
            if theta <= 1e-12 {
                stall += 1;
                if stall >= self.stall_threshold {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
        }
    }

    fn run(&mut self, p: &LpProblem) -> LpSolution {
        let n = self.n;
        self.initial_basis();
        self.refactor();
        let orig_cost = self.cost.clone();
        let mut status = LpStatus::Optimal;
        if !self.art.is_empty() {
            for c in self.cost.iter_mut() {
                *c = 0.0;
            }
            for k in 0..self.art.len() {
                self.cost[n + self.m + k] = 1.0;
            }
            self.recompute_duals();
            status = self.optimize();
            let infeas: f64 = (0..self.art.len()).map(|k| self.x[n + self.m + k].max(0.0)).sum();
            let scale = 1.0 + self.b.iter().map(|v| abs(*v)).fold(0.0, f64::max);
            if status == LpStatus::Optimal && infeas > 1e-7 * scale {
                status = LpStatus::Infeasible;
            }
            for k in 0..self.art.len() {
                let j = n + self.m + k;
                self.ub[j] = 0.0;
                if self.status[j] != Status::Basic {
                    self.x[j] = 0.0;
                    self.status[j] = Status::Lower;
                }
            }
            self.cost = orig_cost;
            self.cost.resize(self.ncols(), 0.0);
            if status == LpStatus::Optimal {
                self.refactor();
            }
        }
        if status == LpStatus::Optimal {
            status = self.optimize();
        }
        self.finish(p, status)
    }

    fn finish(&self, p: &LpProblem, status: LpStatus) -> LpSolution {
        let n = self.n;
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = match status {
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => p.objective_value(&x),
        };
        let duals: Vec<f64> = self.y.iter().zip(&self.row_scale).map(|(y, s)| y * s).collect();
        LpSolution { status, x, objective, duals, iterations: self.iters }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{add_abs_penalty, LinearRow, RowTag};

    fn row(c: Vec<(usize, f64)>, s: Sense, b: f64) -> LinearRow {
        LinearRow::new(c, s, b, RowTag::Custom)
    }

    #[test]
    fn unit_simplex() {
        let mut p = LpProblem::new();
        let x = p.add_var(0.0, 1.0, -1.0);
        let y = p.add_var(0.0, 1.0, -1.0);
        p.add_row(row(vec![(x, 1.0), (y, 1.0)], Sense::Le, 1.0));
        let s = lp_solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_rows() {
        let mut p = LpProblem::new();
        let x = p.add_var(-10.0, 10.0, 0.0);
        p.add_row(row(vec![(x, 1.0)], Sense::Le, 0.0));
        p.add_row(row(vec![(x, 1.0)], Sense::Ge, 1.0));
        assert_eq!(lp_solve(&p).status, LpStatus::Infeasible);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y s.t. x + y = 3, x - y >= -1, 0 <= x <= 2, 0 <= y <= 5
        let mut p = LpProblem::new();
        let x = p.add_var(0.0, 2.0, 1.0);
        let y = p.add_var(0.0, 5.0, 2.0);
        p.add_row(row(vec![(x, 1.0), (y, 1.0)], Sense::Eq, 3.0));
        p.add_row(row(vec![(x, 1.0), (y, -1.0)], Sense::Ge, -1.0));
        let s = lp_solve(&p);
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
        assert!((s.objective - 4.0).abs() < 1e-12);
    }

    #[test]
    fn abs_penalty_exact() {
        let mut p = LpProblem::new();
        let x = p.add_var(0.0, 1.0, 0.0);
        add_abs_penalty(&mut p, x, 0.3, 1.0).unwrap();
        let s = lp_solve(&p);
        assert!((s.x[x] - 0.3).abs() < 1e-12);
        assert!(s.objective.abs() < 1e-12);
    }

    #[test]
    fn zero_weight_abs_leaves_objective() {
        let mut p = LpProblem::new();
        let x = p.add_var(0.0, 1.0, -1.0);
        add_abs_penalty(&mut p, x, 0.3, 0.0).unwrap();
        let s = lp_solve(&p);
        assert!((s.objective + 1.0).abs() < 1e-12);
    }
}
