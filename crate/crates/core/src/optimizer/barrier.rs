//! Log-barrier interior-point method with equality-constrained Newton steps.
//!
//! Phase I finds a strictly feasible point by minimizing a shared slack `s`
//! with every non-structural row relaxed to `g_k/σ_k ≤ s`. Phase II follows
//! the central path of `τ·(-profit/scale) - Σ ln(-g_k)`.

use nalgebra::{DMatrix, DVector};

use super::problem::{ConstraintTag, ProblemInstance};

/// Stop phase I once every relaxed row has at least this scaled slack.
const PHASE1_MARGIN: f64 = 1e-3;
/// Newton decrement below which a centering step is complete.
const CENTER_TOL: f64 = 1e-9;
const ARMIJO: f64 = 0.01;
const ROUNDOFF: f64 = 1e-12;
const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub tolerance: f64,
    pub initial_weight: f64,
    pub reduction: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct Phase2Outcome {
    pub x: Vec<f64>,
    pub converged: bool,
    /// Bound on the suboptimality of the normalized objective.
    pub gap: f64,
    pub decrement: f64,
}

#[derive(Debug, Clone)]
pub(crate) enum Phase1Outcome {
    Feasible(Vec<f64>),
    Infeasible { x: Vec<f64>, worst: Option<ConstraintTag>, violation: f64 },
    Stalled(Vec<f64>),
}

/// Iteration budget shared across phases and starts.
pub(crate) struct Budget {
    pub used: usize,
    pub cap: usize,
}

impl Budget {
    fn take(&mut self) -> bool {
        if self.used >= self.cap {
            return false;
        }
        self.used += 1;
        true
    }
}

struct Barrier<'a> {
    p: &'a ProblemInstance,
    phase1: bool,
    /// Free-variable position of each full index.
    pos: Vec<Option<usize>>,
    dim: usize,
    eq_a: DMatrix<f64>,
    eq_b: DVector<f64>,
}

struct Eval {
    value: f64,
    objective: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

impl<'a> Barrier<'a> {
    fn new(p: &'a ProblemInstance, phase1: bool) -> Self {
        let mut pos = vec![None; p.n_vars()];
        for (n, &k) in p.free_indices().iter().enumerate() {
            pos[k] = Some(n);
        }
        let nf = p.n_free();
        let dim = nf + usize::from(phase1);
        let ne = p.equalities.len();
        let mut eq_a = DMatrix::zeros(ne, dim);
        let mut eq_b = DVector::zeros(ne);
        for (r, row) in p.equalities.iter().enumerate() {
            let mut rhs = row.rhs;
            for &(k, c) in &row.coefs {
                match pos[k] {
                    Some(n) => eq_a[(r, n)] += c,
                    None => rhs -= c * p.fixed[k].unwrap_or(0.0),
                }
            }
            eq_b[r] = rhs;
        }
        Barrier { p, phase1, pos, dim, eq_a, eq_b }
    }

    fn n_barrier_terms(&self) -> usize {
        self.p.inequalities.len() + self.p.n_sla() + usize::from(self.phase1)
    }

    fn split(&self, z: &DVector<f64>) -> (Vec<f64>, f64) {
        let nf = self.p.n_free();
        let x = self.p.expand(&z.as_slice()[..nf]);
        let s = if self.phase1 { z[nf] } else { 0.0 };
        (x, s)
    }

    /// Value of the barrier function; `None` outside the strict domain.
    /// Derivatives are filled only when `derivs` is set.
    fn eval(&self, z: &DVector<f64>, tau: f64, derivs: bool) -> Option<Eval> {
        let p = self.p;
        let (x, s) = self.split(z);
        let nf = p.n_free();
        let mut grad = DVector::zeros(if derivs { self.dim } else { 0 });
        let mut hess = DMatrix::zeros(if derivs { self.dim } else { 0 }, if derivs { self.dim } else { 0 });
        let mut barrier = 0.0;

        // linear rows first so φ is only evaluated where λ ≤ μ
        for row in &p.inequalities {
            let relaxed = self.phase1 && !row.hard;
            let sigma = if relaxed { row.scale() } else { 1.0 };
            let g = row.residual(&x) / sigma - if relaxed { s } else { 0.0 };
            if !(g < 0.0) {
                return None;
            }
            barrier -= (-g).ln();
            if derivs {
                let mut a: Vec<(usize, f64)> =
                    row.coefs.iter().filter_map(|&(k, c)| self.pos[k].map(|n| (n, c / sigma))).collect();
                if relaxed {
                    a.push((nf, -1.0));
                }
                add_outer(&mut grad, &mut hess, &a, g);
            }
        }
        if self.phase1 {
            // s ≥ -1 keeps phase I bounded
            let g = -1.0 - s;
            if !(g < 0.0) {
                return None;
            }
            barrier -= (-g).ln();
            if derivs {
                add_outer(&mut grad, &mut hess, &[(nf, -1.0)], g);
            }
        }

        let mut objective = if self.phase1 { s } else { 0.0 };
        let scale = p.scale();
        for q in &p.queues {
            let e = p.phi(q, &x);
            let (il, im) = (self.pos[q.lam], self.pos[q.mu]);
            if !self.phase1 {
                objective += (-q.revenue_coef * x[q.lam] + q.base_coef * x[q.mu] + q.loss_coef * e.phi) / scale;
                if derivs {
                    let gl = (-q.revenue_coef + q.loss_coef * e.grad[0]) / scale;
                    let gm = (q.base_coef + q.loss_coef * e.grad[1]) / scale;
                    let h = p.neg_profit_hessian(q, &e);
                    add_block(&mut grad, &mut hess, [il, im], [tau * gl, tau * gm], h, tau / scale);
                }
            }
            if let Some(th) = q.threshold {
                let sigma = th.max(1e-12);
                let g = (e.phi - th) / sigma - if self.phase1 { s } else { 0.0 };
                if !(g < 0.0) {
                    return None;
                }
                barrier -= (-g).ln();
                if derivs {
                    let w = 1.0 / (-g);
                    let dg = [e.grad[0] / sigma, e.grad[1] / sigma];
                    let mut a: Vec<(usize, f64)> = Vec::with_capacity(3);
                    if let Some(n) = il {
                        a.push((n, dg[0]));
                    }
                    if let Some(n) = im {
                        a.push((n, dg[1]));
                    }
                    if self.phase1 {
                        a.push((nf, -1.0));
                    }
                    add_outer(&mut grad, &mut hess, &a, g);
                    let hp = super::curve::psd_2x2(e.hess);
                    add_block(&mut grad, &mut hess, [il, im], [0.0, 0.0], hp, w / sigma);
                }
            }
        }
        if self.phase1 && derivs {
            grad[nf] += tau;
        }
        Some(Eval { value: tau * objective + barrier, objective, grad, hess })
    }

    /// Newton centering at fixed `tau`. Returns the final decrement and
    /// whether it met the tolerance.
    fn center(
        &self,
        z: &mut DVector<f64>,
        tau: f64,
        budget: &mut Budget,
        stop: &dyn Fn(&DVector<f64>) -> bool,
    ) -> (f64, bool, Option<f64>) {
        let ne = self.eq_a.nrows();
        let n = self.dim;
        let mut decrement = f64::INFINITY;
        let mut objective = None;
        loop {
            let Some(e) = self.eval(z, tau, true) else {
                return (decrement, false, objective);
            };
            objective = Some(e.objective);
            let mut h = e.hess;
            let reg = 1e-12 * (0..n).map(|k| h[(k, k)].abs()).fold(0.0, f64::max).max(1e-300);
            for k in 0..n {
                h[(k, k)] += reg;
            }
            let mut kkt = DMatrix::zeros(n + ne, n + ne);
            kkt.view_mut((0, 0), (n, n)).copy_from(&h);
            kkt.view_mut((n, 0), (ne, n)).copy_from(&self.eq_a);
            kkt.view_mut((0, n), (n, ne)).copy_from(&self.eq_a.transpose());
            let mut rhs = DVector::zeros(n + ne);
            rhs.rows_mut(0, n).copy_from(&(-&e.grad));
            rhs.rows_mut(n, ne).copy_from(&(&self.eq_b - &self.eq_a * &*z));
            let Some(sol) = kkt.full_piv_lu().solve(&rhs) else {
                return (decrement, false, objective);
            };
            let dz = sol.rows(0, n).into_owned();
            let slope = e.grad.dot(&dz);
            decrement = (dz.dot(&(&h * &dz))).max(0.0);
            // below roundoff of the barrier value no step can be verified
            let floor = CENTER_TOL.max(ROUNDOFF * e.value.abs());
            if decrement / 2.0 <= floor {
                return (decrement, true, objective);
            }
            if !budget.take() {
                return (decrement, false, objective);
            }
            let mut step = 1.0;
            let accepted = loop {
                let trial = &*z + step * &dz;
                if let Some(v) = self.eval(&trial, tau, false) {
                    // a step that leaves the value unchanged passes Armijo by
                    // rounding once `step·slope` is below one ulp
                    if (v.value - e.value).abs() <= 4.0 * f64::EPSILON * e.value.abs() && step < 1.0 {
                        break false;
                    }
                    if v.value <= e.value + ARMIJO * step * slope.min(0.0) {
                        *z = trial;
                        break true;
                    }
                }
                step *= 0.5;
                if step < MIN_STEP {
                    break false;
                }
            };
            if !accepted {
                // no progress possible at this precision
                return (decrement, decrement / 2.0 <= 1e3 * floor, objective);
            }
            if stop(z) {
                return (decrement, true, objective);
            }
        }
    }
}

fn add_outer(grad: &mut DVector<f64>, hess: &mut DMatrix<f64>, a: &[(usize, f64)], g: f64) {
    let w = 1.0 / (-g);
    for &(i, ai) in a {
        grad[i] += ai * w;
        for &(j, aj) in a {
            hess[(i, j)] += ai * aj * w * w;
        }
    }
}

fn add_block(
    grad: &mut DVector<f64>,
    hess: &mut DMatrix<f64>,
    idx: [Option<usize>; 2],
    g: [f64; 2],
    h: [[f64; 2]; 2],
    weight: f64,
) {
    for a in 0..2 {
        let Some(i) = idx[a] else { continue };
        grad[i] += g[a];
        for b in 0..2 {
            if let Some(j) = idx[b] {
                hess[(i, j)] += weight * h[a][b];
            }
        }
    }
}

/// Phase I from `x0`, which must satisfy the structural rows strictly and
/// the equalities.
pub(crate) fn phase1(p: &ProblemInstance, x0: &[f64], budget: &mut Budget) -> Phase1Outcome {
    let (worst0, _) = relaxed_worst(p, x0);
    if worst0 < -PHASE1_MARGIN {
        return Phase1Outcome::Feasible(x0.to_vec());
    }
    let b = Barrier::new(p, true);
    let nf = p.n_free();
    let mut z = DVector::zeros(nf + 1);
    z.rows_mut(0, nf).copy_from(&DVector::from_vec(p.restrict(x0)));
    z[nf] = worst0 + 1.0;
    let m = b.n_barrier_terms() as f64;
    let stop = |z: &DVector<f64>| z[nf] < -PHASE1_MARGIN;
    let mut tau = 1.0;
    loop {
        let (_, converged, _) = b.center(&mut z, tau, budget, &stop);
        let s = z[nf];
        let x = p.expand(&z.as_slice()[..nf]);
        if s < -PHASE1_MARGIN {
            return Phase1Outcome::Feasible(x);
        }
        let lower = s - m / tau;
        if converged && lower > 0.0 {
            let (violation, worst) = relaxed_worst(p, &x);
            return Phase1Outcome::Infeasible { x, worst, violation };
        }
        if m / tau < 1e-10 {
            if s < 0.0 {
                return Phase1Outcome::Feasible(x);
            }
            let (violation, worst) = relaxed_worst(p, &x);
            return Phase1Outcome::Infeasible { x, worst, violation };
        }
        if budget.used >= budget.cap {
            return Phase1Outcome::Stalled(x);
        }
        tau *= 10.0;
    }
}

/// Largest relaxed-row violation at `x`, scaled as in phase I.
fn relaxed_worst(p: &ProblemInstance, x: &[f64]) -> (f64, Option<ConstraintTag>) {
    let mut worst = (f64::NEG_INFINITY, None);
    for row in p.inequalities.iter().filter(|r| !r.hard) {
        let v = row.residual(x) / row.scale();
        if v > worst.0 {
            worst = (v, Some(row.tag));
        }
    }
    for q in &p.queues {
        if let Some(th) = q.threshold {
            let v = (p.phi(q, x).phi - th) / th.max(1e-12);
            if v > worst.0 {
                worst = (v, Some(ConstraintTag::Sla { dc: q.dc, class: q.class, kind: q.kind }));
            }
        }
    }
    worst
}

/// Phase II from a strictly feasible `x0`.
pub(crate) fn phase2(p: &ProblemInstance, x0: &[f64], settings: &Settings, budget: &mut Budget) -> Phase2Outcome {
    let b = Barrier::new(p, false);
    let mut z = DVector::from_vec(p.restrict(x0));
    let m = b.n_barrier_terms() as f64;
    let mut tau = 1.0 / settings.initial_weight;
    let never = |_: &DVector<f64>| false;
    loop {
        let (decrement, centered, objective) = b.center(&mut z, tau, budget, &never);
        // m/τ bounds the gap on the central path; an off-centre point adds
        // about half the Newton decrement, in barrier units
        let gap = if centered { m / tau } else { (m + 0.5 * decrement) / tau };
        let target = settings.tolerance * objective.map_or(1.0, |f| f.abs().max(1.0));
        if gap <= target || budget.used >= budget.cap {
            let x = p.expand(z.as_slice());
            return Phase2Outcome { x, converged: gap <= target, gap, decrement };
        }
        tau /= settings.reduction;
    }
}
