//! Entropic optimal transport between discrete distributions of scalars.
//!
//! The solver works on dual potentials in the log domain:
//!
//! ```text
//! f_i = -eps * log sum_j b_j exp((g_j - C_ij) / eps)
//! g_j = -eps * log sum_i a_i exp((f_i - C_ij) / eps)
//! gamma_ij = a_i b_j exp((f_i + g_j - C_ij) / eps)
//! ```
//!
//! with the entropy measured relative to the product of the two weight
//! vectors. Small `eps` is reached through a geometric schedule that starts at
//! the largest cost and warm-starts each stage from the previous potentials.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Absolute,
    #[default]
    Squared,
}

impl CostKind {
    #[inline]
    pub fn cost(self, p: f64, q: f64) -> f64 {
        match self {
            CostKind::Absolute => (p - q).abs(),
            CostKind::Squared => (p - q) * (p - q),
        }
    }

    /// Partial derivative of the cost with respect to its first argument.
    /// The derivative with respect to the second argument is its negation.
    #[inline]
    pub fn d_first(self, p: f64, q: f64) -> f64 {
        match self {
            CostKind::Absolute => {
                let d = p - q;
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            CostKind::Squared => 2.0 * (p - q),
        }
    }
}

/// Weighted finite support of scalar values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Distribution("empty support".into()));
        }
        if support.len() != weights.len() {
            return Err(Error::Distribution(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        if support.iter().any(|v| !v.is_finite()) {
            return Err(Error::Distribution("non-finite support point".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Distribution("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Distribution(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { support, weights })
    }

    /// Equal weight on every point.
    pub fn uniform(support: Vec<f64>) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Same weights, different support points.
    pub fn with_support(&self, support: Vec<f64>) -> Result<Self> {
        Self::new(support, self.weights.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub entries: Array2<f64>,
    pub kind: CostKind,
}

impl CostMatrix {
    pub fn mean(&self) -> f64 {
        self.entries.mean().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

pub fn build_cost(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    kind: CostKind,
) -> CostMatrix {
    let (p, q) = (a.support(), b.support());
    CostMatrix {
        entries: Array2::from_shape_fn((p.len(), q.len()), |(i, j)| kind.cost(p[i], q[j])),
        kind,
    }
}

/// How the configured epsilon is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonScale {
    /// `epsilon` is used as given.
    Absolute,
    /// `epsilon` multiplies the mean of the cross cost matrix.
    #[default]
    MeanCost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SinkhornConfig {
    pub epsilon: f64,
    pub epsilon_scale: EpsilonScale,
    pub max_iters: usize,
    /// Stop once the largest marginal violation falls below this.
    pub tolerance: f64,
    pub cost_kind: CostKind,
    pub debias: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            epsilon_scale: EpsilonScale::MeanCost,
            max_iters: 1000,
            tolerance: 1e-6,
            cost_kind: CostKind::Squared,
            debias: false,
        }
    }
}

impl SinkhornConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("sinkhorn.epsilon", "must be positive"));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::config("sinkhorn.tolerance", "must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("sinkhorn.max_iters", "must be positive"));
        }
        Ok(())
    }

    /// Absolute epsilon for a given cross cost matrix. An all-zero cost
    /// leaves the product plan optimal for every epsilon, so the relative
    /// factor is used as-is there.
    pub fn resolve_epsilon(&self, cost: &CostMatrix) -> f64 {
        match self.epsilon_scale {
            EpsilonScale::Absolute => self.epsilon,
            EpsilonScale::MeanCost => {
                let m = cost.mean();
                if m > 0.0 {
                    self.epsilon * m
                } else {
                    self.epsilon
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub coupling: Array2<f64>,
    pub dual_u: Vec<f64>,
    pub dual_v: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Absolute epsilon the plan was solved at.
    pub epsilon: f64,
}

impl TransportPlan {
    /// Largest absolute deviation of row or column sums from the weights.
    pub fn marginal_violation(&self, a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> f64 {
        let rows = self
            .coupling
            .rows()
            .into_iter()
            .zip(a.weights())
            .map(|(r, w)| (r.sum() - w).abs());
        let cols = self
            .coupling
            .columns()
            .into_iter()
            .zip(b.weights())
            .map(|(c, w)| (c.sum() - w).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// `log sum_j exp(h_j + k_j)`, stabilized by the maximum term.
#[inline]
fn logsumexp_sum(h: &[f64], k: &[f64]) -> f64 {
    let m = h.iter().zip(k).map(|(x, y)| x + y).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + h.iter().zip(k).map(|(x, y)| (x + y - m).exp()).sum::<f64>().ln()
}

/// `-C / eps` in both layouts, so row and column updates read contiguous memory.
struct ScaledKernel {
    eps: f64,
    rows: Array2<f64>,
    cols: Array2<f64>,
}

impl ScaledKernel {
    fn new(cost: &Array2<f64>, eps: f64) -> Self {
        let rows = cost.mapv(|c| -c / eps);
        let cols = rows.t().as_standard_layout().into_owned();
        Self { eps, rows, cols }
    }

    /// `out_i = -eps * log sum_j exp(log_w_j + pot_j / eps - C_ij / eps)`.
    fn softmin(&self, by_rows: bool, log_w: &[f64], pot: &[f64], out: &mut [f64]) {
        let e = self.eps;
        let h: Vec<f64> = log_w.iter().zip(pot).map(|(l, p)| l + p / e).collect();
        let k = if by_rows { &self.rows } else { &self.cols };
        for (o, row) in out.iter_mut().zip(k.rows()) {
            *o = -e * logsumexp_sum(&h, row.as_slice().expect("standard layout"));
        }
    }
}

struct Potentials {
    f: Vec<f64>,
    g: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Log-domain Sinkhorn on a precomputed cost.
fn solve_potentials(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    cost: &Array2<f64>,
    eps: f64,
    max_iters: usize,
    tolerance: f64,
) -> Result<Potentials> {
    let (n, m) = cost.dim();
    let log_a: Vec<f64> = a.weights().iter().map(|w| w.ln()).collect();
    let log_b: Vec<f64> = b.weights().iter().map(|w| w.ln()).collect();
    let f_update = |k: &ScaledKernel, g: &[f64], out: &mut [f64]| k.softmin(true, &log_b, g, out);
    let g_update = |k: &ScaledKernel, f: &[f64], out: &mut [f64]| k.softmin(false, &log_a, f, out);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut f_new = vec![0.0; n];

    // Row sums follow from comparing the current f to its next update;
    // columns are exact right after a g update.
    let row_violation = |f: &[f64], f_new: &[f64], e: f64| {
        f.iter()
            .zip(f_new)
            .zip(a.weights())
            .map(|((fo, fnw), w)| (w * (((fo - fnw) / e).exp() - 1.0)).abs())
            .fold(0.0, f64::max)
    };
    let non_finite = |v: &[f64]| v.iter().any(|x| !x.is_finite());

    let mut iterations = 0;
    let mut stage_eps = cost.iter().copied().fold(0.0, f64::max);
    let stage_tol = tolerance.max(1e-4);
    while stage_eps > 2.0 * eps && iterations < max_iters {
        let k = ScaledKernel::new(cost, stage_eps);
        for _ in 0..100 {
            if iterations >= max_iters {
                break;
            }
            f_update(&k, &g, &mut f_new);
            let done = row_violation(&f, &f_new, stage_eps) < stage_tol;
            std::mem::swap(&mut f, &mut f_new);
            g_update(&k, &f, &mut g);
            iterations += 1;
            if done {
                break;
            }
        }
        stage_eps *= 0.5;
    }

    let k = ScaledKernel::new(cost, eps);
    let mut converged = false;
    loop {
        f_update(&k, &g, &mut f_new);
        if non_finite(&f_new) {
            return Err(Error::SinkhornNonFinite { epsilon: eps });
        }
        if iterations > 0 && row_violation(&f, &f_new, eps) < tolerance {
            converged = true;
            break;
        }
        if iterations >= max_iters {
            break;
        }
        std::mem::swap(&mut f, &mut f_new);
        g_update(&k, &f, &mut g);
        if non_finite(&g) {
            return Err(Error::SinkhornNonFinite { epsilon: eps });
        }
        iterations += 1;
    }
    Ok(Potentials {
        f,
        g,
        iterations,
        converged,
    })
}

/// Symmetric Sinkhorn for transporting a distribution onto itself:
/// `f <- (f + T(f)) / 2` with `T(f)_i = -eps * log sum_j a_j exp((f_j - C_ij) / eps)`.
/// The resulting plan is exactly symmetric, which the debiasing terms rely on.
fn solve_symmetric(
    a: &EmpiricalDistribution,
    cost: &Array2<f64>,
    eps: f64,
    max_iters: usize,
    tolerance: f64,
) -> Result<Potentials> {
    let n = cost.nrows();
    let log_a: Vec<f64> = a.weights().iter().map(|w| w.ln()).collect();
    let transform = |k: &ScaledKernel, f: &[f64], out: &mut [f64]| k.softmin(true, &log_a, f, out);
    let violation = |f: &[f64], tf: &[f64], e: f64| {
        f.iter()
            .zip(tf)
            .zip(a.weights())
            .map(|((fo, t), w)| (w * (((fo - t) / e).exp() - 1.0)).abs())
            .fold(0.0, f64::max)
    };
    let mut f = vec![0.0; n];
    let mut tf = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    let mut stage_eps = cost.iter().copied().fold(0.0, f64::max);
    let stage_tol = tolerance.max(1e-4);
    while stage_eps > 2.0 * eps && iterations < max_iters {
        let k = ScaledKernel::new(cost, stage_eps);
        for _ in 0..100 {
            transform(&k, &f, &mut tf);
            iterations += 1;
            let done = violation(&f, &tf, stage_eps) < stage_tol;
            f.iter_mut().zip(&tf).for_each(|(x, t)| *x = 0.5 * (*x + t));
            if done || iterations >= max_iters {
                break;
            }
        }
        stage_eps *= 0.5;
    }
    let k = ScaledKernel::new(cost, eps);
    loop {
        transform(&k, &f, &mut tf);
        if tf.iter().any(|v| !v.is_finite()) {
            return Err(Error::SinkhornNonFinite { epsilon: eps });
        }
        if violation(&f, &tf, eps) < tolerance {
            converged = true;
            break;
        }
        if iterations >= max_iters {
            break;
        }
        f.iter_mut().zip(&tf).for_each(|(x, t)| *x = 0.5 * (*x + t));
        iterations += 1;
    }
    Ok(Potentials {
        g: f.clone(),
        f,
        iterations,
        converged,
    })
}

fn coupling_from(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    cost: &Array2<f64>,
    pot: &Potentials,
    eps: f64,
) -> Array2<f64> {
    let (wa, wb) = (a.weights(), b.weights());
    Array2::from_shape_fn(cost.dim(), |(i, j)| {
        wa[i] * wb[j] * ((pot.f[i] + pot.g[j] - cost[[i, j]]) / eps).exp()
    })
}

fn solve_plan(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    cost: &CostMatrix,
    eps: f64,
    cfg: &SinkhornConfig,
) -> Result<(TransportPlan, f64)> {
    let pot = solve_potentials(a, b, &cost.entries, eps, cfg.max_iters, cfg.tolerance)?;
    finish_plan(a, b, cost, eps, pot)
}

fn solve_self_plan(
    a: &EmpiricalDistribution,
    cost: &CostMatrix,
    eps: f64,
    cfg: &SinkhornConfig,
) -> Result<(TransportPlan, f64)> {
    let pot = solve_symmetric(a, &cost.entries, eps, cfg.max_iters, cfg.tolerance)?;
    finish_plan(a, a, cost, eps, pot)
}

fn finish_plan(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    cost: &CostMatrix,
    eps: f64,
    pot: Potentials,
) -> Result<(TransportPlan, f64)> {
    let coupling = coupling_from(a, b, &cost.entries, &pot, eps);
    // Dual objective; equals <gamma, C> + eps * KL(gamma | a x b) at the optimum.
    let value = dot(a.weights(), &pot.f) + dot(b.weights(), &pot.g);
    if !value.is_finite() || coupling.iter().any(|v| !v.is_finite()) {
        return Err(Error::SinkhornNonFinite { epsilon: eps });
    }
    Ok((
        TransportPlan {
            coupling,
            dual_u: pot.f,
            dual_v: pot.g,
            iterations_used: pot.iterations,
            converged: pot.converged,
            epsilon: eps,
        },
        value,
    ))
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn sinkhorn_plan(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    cfg.validate()?;
    let cost = build_cost(a, b, cfg.cost_kind);
    let eps = cfg.resolve_epsilon(&cost);
    Ok(solve_plan(a, b, &cost, eps, cfg)?.0)
}

/// Value and support gradients of the Sinkhorn distance from one set of solves.
#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornEval {
    pub value: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
    pub converged: bool,
}

/// Envelope-rule gradients of a solved problem with respect to both supports.
fn plan_gradients(
    plan: &TransportPlan,
    p: &[f64],
    q: &[f64],
    kind: CostKind,
) -> (Vec<f64>, Vec<f64>) {
    let mut gp = vec![0.0; p.len()];
    let mut gq = vec![0.0; q.len()];
    for (i, row) in plan.coupling.rows().into_iter().enumerate() {
        for (j, &gamma) in row.iter().enumerate() {
            let d = gamma * kind.d_first(p[i], q[j]);
            gp[i] += d;
            gq[j] -= d;
        }
    }
    (gp, gq)
}

pub fn sinkhorn_eval(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    cfg: &SinkhornConfig,
) -> Result<SinkhornEval> {
    cfg.validate()?;
    let kind = cfg.cost_kind;
    let cost = build_cost(a, b, kind);
    let eps = cfg.resolve_epsilon(&cost);
    // a distribution against itself is a symmetric problem
    let (plan, value) = if a == b {
        solve_self_plan(a, &cost, eps, cfg)?
    } else {
        solve_plan(a, b, &cost, eps, cfg)?
    };
    let (mut grad_a, mut grad_b) = plan_gradients(&plan, a.support(), b.support(), kind);
    if !cfg.debias {
        return Ok(SinkhornEval {
            value,
            grad_a,
            grad_b,
            converged: plan.converged,
        });
    }

    let mut converged = plan.converged;
    let mut self_term = |d: &EmpiricalDistribution, grad: &mut [f64]| -> Result<f64> {
        let c = build_cost(d, d, kind);
        let (plan, v) = solve_self_plan(d, &c, eps, cfg)?;
        converged &= plan.converged;
        // d appears as both source and target; the symmetric plan makes the
        // two halves equal, so the 1/2 cancels.
        let (g1, g2) = plan_gradients(&plan, d.support(), d.support(), kind);
        for (k, g) in grad.iter_mut().enumerate() {
            *g -= 0.5 * (g1[k] + g2[k]);
        }
        Ok(v)
    };
    let waa = self_term(a, &mut grad_a)?;
    let wbb = self_term(b, &mut grad_b)?;
    Ok(SinkhornEval {
        value: (value - 0.5 * waa - 0.5 * wbb).max(0.0),
        grad_a,
        grad_b,
        converged,
    })
}

/// Entropic transport cost, or the debiased divergence when `cfg.debias`
/// (clamped at zero).
pub fn sinkhorn_distance(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    Ok(sinkhorn_eval(a, b, cfg)?.value)
}

/// Gradients of [`sinkhorn_distance`] with respect to the support points of
/// `a` and `b`, holding the optimal plans fixed.
pub fn sinkhorn_grad_support(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    cfg: &SinkhornConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let e = sinkhorn_eval(a, b, cfg)?;
    Ok((e.grad_a, e.grad_b))
}

/// Exact transport cost between scalar distributions via the quantile
/// coupling: sort both supports and match cumulative mass slab by slab.
pub fn exact_wasserstein_1d(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    kind: CostKind,
) -> f64 {
    let sorted = |d: &EmpiricalDistribution| {
        let mut v: Vec<(f64, f64)> = d
            .support()
            .iter()
            .copied()
            .zip(d.weights().iter().copied())
            .collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0));
        v
    };
    let (sa, sb) = (sorted(a), sorted(b));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (sa[0].1, sb[0].1);
    let mut total = 0.0;
    while i < sa.len() && j < sb.len() {
        let mass = ra.min(rb);
        total += mass * kind.cost(sa[i].0, sb[j].0);
        ra -= mass;
        rb -= mass;
        if ra <= 1e-15 {
            i += 1;
            if let Some(&(_, w)) = sa.get(i) {
                ra = w;
            }
        }
        if rb <= 1e-15 {
            j += 1;
            if let Some(&(_, w)) = sb.get(j) {
                rb = w;
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(v: &[f64]) -> EmpiricalDistribution {
        EmpiricalDistribution::uniform(v.to_vec()).unwrap()
    }

    #[test]
    fn distribution_validation() {
        assert!(EmpiricalDistribution::new(vec![], vec![]).is_err());
        assert!(EmpiricalDistribution::new(vec![0.0], vec![0.5]).is_err());
        assert!(EmpiricalDistribution::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
        assert!(EmpiricalDistribution::new(vec![0.0, 1.0], vec![0.25, 0.75]).is_ok());
        assert!(EmpiricalDistribution::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn cost_by_hand() {
        let c = build_cost(&uni(&[0.0]), &uni(&[0.0]), CostKind::Squared);
        assert_eq!(c.entries, ndarray::arr2(&[[0.0]]));
        let c = build_cost(&uni(&[0.0, 1.0]), &uni(&[2.0]), CostKind::Absolute);
        assert_eq!(c.entries, ndarray::arr2(&[[2.0], [1.0]]));
        let a = uni(&[0.3, -0.2, 0.9]);
        let b = uni(&[0.1, 0.5]);
        let ab = build_cost(&a, &b, CostKind::Squared);
        let ba = build_cost(&b, &a, CostKind::Squared);
        assert_eq!(ab.entries.t(), ba.entries);
    }

    #[test]
    fn single_point_plan() {
        for eps in [1e-3, 0.1, 10.0] {
            let cfg = SinkhornConfig {
                epsilon: eps,
                epsilon_scale: EpsilonScale::Absolute,
                ..Default::default()
            };
            let plan = sinkhorn_plan(&uni(&[0.4]), &uni(&[0.4]), &cfg).unwrap();
            assert!((plan.coupling[[0, 0]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_point_plan_is_near_identity() {
        let cfg = SinkhornConfig {
            epsilon: 1e-3,
            ..Default::default()
        };
        let plan = sinkhorn_plan(&uni(&[0.0, 1.0]), &uni(&[0.0, 1.0]), &cfg).unwrap();
        assert!(plan.converged);
        let expected = ndarray::arr2(&[[0.5, 0.0], [0.0, 0.5]]);
        for (x, y) in plan.coupling.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-3, "{:?}", plan.coupling);
        }
    }

    #[test]
    fn dual_value_matches_primal_formula() {
        let a = uni(&[0.1, 0.7, -0.4, 0.2]);
        let b = EmpiricalDistribution::new(vec![0.0, 0.5, 0.9], vec![0.2, 0.3, 0.5]).unwrap();
        let cfg = SinkhornConfig {
            tolerance: 1e-12,
            max_iters: 100_000,
            ..Default::default()
        };
        let plan = sinkhorn_plan(&a, &b, &cfg).unwrap();
        let cost = build_cost(&a, &b, cfg.cost_kind);
        let mut primal = 0.0;
        for ((i, j), &g) in plan.coupling.indexed_iter() {
            let ratio = g / (a.weights()[i] * b.weights()[j]);
            primal += g * cost.entries[[i, j]] + plan.epsilon * g * ratio.ln();
        }
        let value = sinkhorn_distance(&a, &b, &cfg).unwrap();
        assert!((primal - value).abs() < 1e-9, "{primal} vs {value}");
    }

    #[test]
    fn debiased_examples() {
        let cfg = SinkhornConfig {
            debias: true,
            cost_kind: CostKind::Absolute,
            ..Default::default()
        };
        let a = uni(&[0.1, 0.5, -0.3]);
        assert!(sinkhorn_distance(&a, &a, &cfg).unwrap() < 1e-9);
        let d = sinkhorn_distance(&uni(&[0.0]), &uni(&[1.0]), &cfg).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "{d}");
        let cfg = SinkhornConfig {
            epsilon: 1e-3,
            ..cfg
        };
        let d = sinkhorn_distance(&uni(&[0.0, 2.0]), &uni(&[1.0, 3.0]), &cfg).unwrap();
        assert!((d - 1.0).abs() < 1e-2, "{d}");
    }

    #[test]
    fn exact_examples() {
        let a = uni(&[0.3, -0.1]);
        assert_eq!(exact_wasserstein_1d(&a, &a, CostKind::Absolute), 0.0);
        let w = exact_wasserstein_1d(&uni(&[0.0, 2.0]), &uni(&[1.0, 3.0]), CostKind::Absolute);
        assert!((w - 1.0).abs() < 1e-15);
        let a = EmpiricalDistribution::new(vec![0.0, 1.0], vec![0.75, 0.25]).unwrap();
        let b = EmpiricalDistribution::new(vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        assert!((exact_wasserstein_1d(&a, &b, CostKind::Absolute) - 0.5).abs() < 1e-15);
        // unequal sizes: 1/3-mass slabs against 1/2-mass slabs
        let w = exact_wasserstein_1d(&uni(&[0.0, 1.0, 2.0]), &uni(&[0.0, 2.0]), CostKind::Absolute);
        assert!((w - 1.0 / 3.0).abs() < 1e-15, "{w}");
    }

    #[test]
    fn point_mass_gradients() {
        let cfg = SinkhornConfig::default();
        let (gp, gq) = sinkhorn_grad_support(&uni(&[0.0]), &uni(&[1.0]), &cfg).unwrap();
        assert!((gp[0] + 2.0).abs() < 1e-6);
        assert!((gq[0] - 2.0).abs() < 1e-6);
        let cfg = SinkhornConfig {
            debias: true,
            ..cfg
        };
        let a = uni(&[0.2, -0.5, 0.7]);
        let (gp, gq) = sinkhorn_grad_support(&a, &a, &cfg).unwrap();
        assert!(gp.iter().chain(&gq).all(|g| g.abs() < 1e-6), "{gp:?} {gq:?}");
    }

    #[test]
    fn tiny_epsilon_reports_nonfinite_or_converges() {
        let cfg = SinkhornConfig {
            epsilon: 1e-300,
            epsilon_scale: EpsilonScale::Absolute,
            ..Default::default()
        };
        match sinkhorn_plan(&uni(&[0.0, 1.0]), &uni(&[0.5, 2.0]), &cfg) {
            Err(Error::SinkhornNonFinite { epsilon }) => assert_eq!(epsilon, 1e-300),
            Err(e) => panic!("unexpected {e}"),
            Ok(p) => assert!(p.coupling.iter().all(|v| v.is_finite())),
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SinkhornConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(sinkhorn_plan(&uni(&[0.0]), &uni(&[0.0]), &cfg).is_err());
    }
}
