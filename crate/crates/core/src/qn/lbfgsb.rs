//! Limited-memory pieces of L-BFGS-B: the compact representation
//! `B = θI − W M Wᵀ` with `W = [Y, θS]`, the generalized Cauchy point along
//! the projected steepest-descent path, and the direct primal subspace
//! minimization over the variables left free at the Cauchy point.

use std::collections::VecDeque;

use crate::numerics::{dot, Mat};

#[derive(Debug, Clone)]
pub(crate) struct CompactMemory {
    capacity: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    theta: f64,
    /// Inverse of the `2k×2k` middle matrix `[[−D, Lᵀ], [L, θSᵀS]]`.
    middle: Mat,
}

impl CompactMemory {
    pub(crate) fn new(capacity: usize) -> Self {
        Self {
            capacity,
            s: VecDeque::with_capacity(capacity),
            y: VecDeque::with_capacity(capacity),
            theta: 1.0,
            middle: Mat::zeros(0, 0),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.s.len()
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub(crate) fn theta(&self) -> f64 {
        self.theta
    }

    pub(crate) fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.s.iter().zip(&self.y).map(|(s, y)| (s.as_slice(), y.as_slice()))
    }

    pub(crate) fn reset(&mut self) {
        self.s.clear();
        self.y.clear();
        self.theta = 1.0;
        self.middle = Mat::zeros(0, 0);
    }

    /// Stores a curvature pair; the caller has already checked `sᵀy > 0`.
    /// Returns `false` (and clears the memory) if the middle matrix became
    /// singular.
    pub(crate) fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        if self.s.len() == self.capacity {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.theta = dot(&y, &y) / dot(&s, &y);
        self.s.push_back(s);
        self.y.push_back(y);
        self.rebuild_middle()
    }

    fn rebuild_middle(&mut self) -> bool {
        let k = self.len();
        let mut kk = Mat::zeros(2 * k, 2 * k);
        for i in 0..k {
            for j in 0..k {
                let sy = dot(&self.s[i], &self.y[j]);
                if i == j {
                    kk[(i, i)] = -sy;
                } else if i > j {
                    // L block (lower-left) and its transpose (upper-right).
                    kk[(k + i, j)] = sy;
                    kk[(j, k + i)] = sy;
                }
                kk[(k + i, k + j)] = self.theta * dot(&self.s[i], &self.s[j]);
            }
        }
        match kk.inverse() {
            Ok(m) if m.is_finite() => {
                self.middle = m;
                true
            }
            _ => {
                self.reset();
                false
            }
        }
    }

    /// Row `i` of `W = [Y, θS]`.
    fn w_row(&self, i: usize) -> Vec<f64> {
        let k = self.len();
        let mut w = Vec::with_capacity(2 * k);
        w.extend(self.y.iter().map(|y| y[i]));
        w.extend(self.s.iter().map(|s| self.theta * s[i]));
        w
    }

    /// `Wᵀ v`
    fn wt_times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len());
        out.extend(self.y.iter().map(|y| dot(y, v)));
        out.extend(self.s.iter().map(|s| self.theta * dot(s, v)));
        out
    }

    fn m_times(&self, v: &[f64]) -> Vec<f64> {
        self.middle.matvec(v)
    }

    /// Applies the implicit inverse Hessian (two-loop recursion with initial
    /// scaling `1/θ`) to `v`.
    pub(crate) fn apply_inverse(&self, v: &[f64]) -> Vec<f64> {
        let k = self.len();
        let mut q = v.to_vec();
        let mut alpha = vec![0.0; k];
        let rho: Vec<f64> = self.pairs().map(|(s, y)| 1.0 / dot(y, s)).collect();
        for i in (0..k).rev() {
            alpha[i] = rho[i] * dot(&self.s[i], &q);
            let a = alpha[i];
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= a * yj;
            }
        }
        let gamma = 1.0 / self.theta;
        for qj in q.iter_mut() {
            *qj *= gamma;
        }
        for i in 0..k {
            let beta = rho[i] * dot(&self.y[i], &q);
            let c = alpha[i] - beta;
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += c * sj;
            }
        }
        q
    }

    pub(crate) fn inverse_hessian(&self, n: usize) -> Mat {
        let mut h = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            let col = self.apply_inverse(&e);
            e[j] = 0.0;
            for i in 0..n {
                h[(i, j)] = col[i];
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Free,
    /// At a bound with the gradient pushing outward, or `l == u`.
    Fixed,
    /// Reached its bound along the Cauchy path.
    Hit,
}

#[derive(Debug, Clone)]
pub(crate) struct CauchyPoint {
    pub xcp: Vec<f64>,
    /// `Wᵀ(xcp − x)`
    pub c: Vec<f64>,
    pub free: Vec<bool>,
}

/// Generalized Cauchy point: first local minimizer of the quadratic model
/// along the projected steepest-descent path `P(x − t·g)`.
pub(crate) fn cauchy_point(
    x: &[f64],
    g: &[f64],
    lower: &[f64],
    upper: &[f64],
    mem: &CompactMemory,
) -> CauchyPoint {
    let n = x.len();
    let k2 = 2 * mem.len();
    let theta = mem.theta();
    let mut xcp = x.to_vec();
    let mut state = vec![VarState::Free; n];
    let mut d = vec![0.0; n];
    let mut breaks: Vec<(f64, usize)> = Vec::new();
    let mut nfree_unbounded = 0usize;

    for i in 0..n {
        let neggi = -g[i];
        if lower[i] == upper[i] {
            state[i] = VarState::Fixed;
        } else if x[i] <= lower[i] && neggi <= 0.0 {
            state[i] = VarState::Fixed;
        } else if x[i] >= upper[i] && neggi >= 0.0 {
            state[i] = VarState::Fixed;
        }
        if state[i] != VarState::Free || neggi == 0.0 {
            continue;
        }
        d[i] = neggi;
        if neggi < 0.0 && lower[i].is_finite() {
            breaks.push(((x[i] - lower[i]) / -neggi, i));
        } else if neggi > 0.0 && upper[i].is_finite() {
            breaks.push(((upper[i] - x[i]) / neggi, i));
        } else {
            nfree_unbounded += 1;
        }
    }

    let free_of = |state: &[VarState]| state.iter().map(|s| *s == VarState::Free).collect();

    let dd = dot(&d, &d);
    if dd == 0.0 {
        return CauchyPoint {
            xcp,
            c: vec![0.0; k2],
            free: free_of(&state),
        };
    }

    let mut p = mem.wt_times(&d);
    let mut c = vec![0.0; k2];
    let mut f1 = -dd;
    let mut f2 = -theta * f1;
    if k2 > 0 {
        let mp = mem.m_times(&p);
        f2 -= dot(&p, &mp);
    }
    let f2_org = f2;
    let mut dtm = -f1 / f2;
    let mut tsum = 0.0;
    let nbreak = breaks.len();
    let all_bounded = nfree_unbounded == 0;
    breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut tj = 0.0;
    let mut done_early = false;
    for (idx, &(t_b, b)) in breaks.iter().enumerate() {
        let tj0 = tj;
        tj = t_b;
        let dt = tj - tj0;
        if dtm < dt {
            break;
        }
        // Fix variable b at its bound.
        tsum += dt;
        let nleft = nbreak - idx - 1;
        let dibp = d[b];
        d[b] = 0.0;
        let zibp = if dibp > 0.0 {
            xcp[b] = upper[b];
            upper[b] - x[b]
        } else {
            xcp[b] = lower[b];
            lower[b] - x[b]
        };
        state[b] = VarState::Hit;

        if nleft == 0 && nbreak == n {
            // Every variable reached its bound.
            dtm = dt;
            for (ci, pi) in c.iter_mut().zip(&p) {
                *ci += dtm * pi;
            }
            done_early = true;
            break;
        }

        let dibp2 = dibp * dibp;
        f1 = f1 + dt * f2 + dibp2 - theta * dibp * zibp;
        f2 -= theta * dibp2;
        if k2 > 0 {
            for (ci, pi) in c.iter_mut().zip(&p) {
                *ci += dt * pi;
            }
            let wbp = mem.w_row(b);
            let v = mem.m_times(&wbp);
            let wmc = dot(&c, &v);
            let wmp = dot(&p, &v);
            let wmw = dot(&wbp, &v);
            for (pi, wi) in p.iter_mut().zip(&wbp) {
                *pi -= dibp * wi;
            }
            f1 += dibp * wmc;
            f2 += 2.0 * dibp * wmp - dibp2 * wmw;
        }
        f2 = f2.max(f64::EPSILON * f2_org);
        if nleft > 0 {
            dtm = -f1 / f2;
        } else if all_bounded {
            dtm = 0.0;
        } else {
            dtm = -f1 / f2;
        }
    }

    if !done_early {
        if dtm <= 0.0 {
            dtm = 0.0;
        }
        tsum += dtm;
        for i in 0..n {
            if d[i] != 0.0 {
                xcp[i] = x[i] + tsum * d[i];
            }
        }
        for (ci, pi) in c.iter_mut().zip(&p) {
            *ci += dtm * pi;
        }
    }

    // Keep the Cauchy point inside the box despite rounding.
    for i in 0..n {
        xcp[i] = xcp[i].max(lower[i]).min(upper[i]);
    }

    CauchyPoint {
        xcp,
        c,
        free: free_of(&state),
    }
}

/// Direct primal subspace minimization. Returns the point `x̄` whose
/// difference from `x` is the L-BFGS-B search direction.
pub(crate) fn subspace_minimum(
    x: &[f64],
    g: &[f64],
    lower: &[f64],
    upper: &[f64],
    cp: &CauchyPoint,
    mem: &CompactMemory,
) -> Vec<f64> {
    let n = x.len();
    let free: Vec<usize> = (0..n).filter(|&i| cp.free[i]).collect();
    if free.is_empty() || mem.is_empty() {
        return cp.xcp.clone();
    }
    let theta = mem.theta();
    let k2 = 2 * mem.len();

    // Reduced gradient r̂ = Zᵀ(g + θ(xcp − x) − W M c).
    let mc = mem.m_times(&cp.c);
    let rows: Vec<Vec<f64>> = free.iter().map(|&i| mem.w_row(i)).collect();
    let r: Vec<f64> = free
        .iter()
        .zip(&rows)
        .map(|(&i, w)| g[i] + theta * (cp.xcp[i] - x[i]) - dot(w, &mc))
        .collect();

    // v = M Aᵀ r̂ with A = Zᵀ W.
    let mut atr = vec![0.0; k2];
    for (w, ri) in rows.iter().zip(&r) {
        for (a, wj) in atr.iter_mut().zip(w) {
            *a += wj * ri;
        }
    }
    let v = mem.m_times(&atr);

    // N = I − (1/θ) M AᵀA
    let mut ata = Mat::zeros(k2, k2);
    for w in &rows {
        for a in 0..k2 {
            if w[a] == 0.0 {
                continue;
            }
            for b in 0..k2 {
                ata[(a, b)] += w[a] * w[b];
            }
        }
    }
    let mut nmat = mem.middle.matmul(&ata).scaled(-1.0 / theta);
    for a in 0..k2 {
        nmat[(a, a)] += 1.0;
    }
    let du: Vec<f64> = match nmat.solve(&v) {
        Ok(vp) => rows
            .iter()
            .zip(&r)
            .map(|(w, ri)| -ri / theta - dot(w, &vp) / (theta * theta))
            .collect(),
        Err(_) => r.iter().map(|ri| -ri / theta).collect(),
    };

    // Try the projected Newton point first.
    let mut xbar = cp.xcp.clone();
    let mut hit_bound = false;
    for (&i, &dk) in free.iter().zip(&du) {
        let v = (cp.xcp[i] + dk).max(lower[i]).min(upper[i]);
        if v == lower[i] || v == upper[i] {
            hit_bound = true;
        }
        xbar[i] = v;
    }
    if !hit_bound {
        return xbar;
    }
    let dd_p: f64 = (0..n).map(|i| (xbar[i] - x[i]) * g[i]).sum();
    if dd_p <= 0.0 {
        return xbar;
    }

    // Projection gave an ascent direction: truncate the step at the first
    // bound instead.
    let mut xbar = cp.xcp.clone();
    let mut du = du;
    let mut alpha: f64 = 1.0;
    let mut ibd = None;
    for (pos, (&i, &dk)) in free.iter().zip(&du).enumerate() {
        let mut temp1 = alpha;
        if dk < 0.0 && lower[i].is_finite() {
            let temp2 = lower[i] - cp.xcp[i];
            if temp2 >= 0.0 {
                temp1 = 0.0;
            } else if dk * alpha < temp2 {
                temp1 = temp2 / dk;
            }
        } else if dk > 0.0 && upper[i].is_finite() {
            let temp2 = upper[i] - cp.xcp[i];
            if temp2 <= 0.0 {
                temp1 = 0.0;
            } else if dk * alpha > temp2 {
                temp1 = temp2 / dk;
            }
        }
        if temp1 < alpha {
            alpha = temp1;
            ibd = Some(pos);
        }
    }
    if alpha < 1.0 {
        if let Some(pos) = ibd {
            let i = free[pos];
            if du[pos] > 0.0 {
                xbar[i] = upper[i];
            } else if du[pos] < 0.0 {
                xbar[i] = lower[i];
            }
            du[pos] = 0.0;
        }
    }
    for (&i, &dk) in free.iter().zip(&du) {
        xbar[i] += alpha * dk;
    }
    for i in 0..n {
        xbar[i] = xbar[i].max(lower[i]).min(upper[i]);
    }
    xbar
}
