//! Limited-memory BFGS with optional box bounds.
//!
//! Without bounds this is the textbook two-loop recursion with a
//! strong-Wolfe line search. With bounds, variables sitting on a bound with
//! the gradient pushing outward are frozen, the quasi-Newton direction is
//! computed on the remaining free variables, and the line search is capped
//! at the first bound the direction hits.

use std::collections::VecDeque;

use log::debug;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    /// Number of stored correction pairs.
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when `‖projected gradient‖_∞ ≤ gtol · ‖projected gradient at x₀‖_∞`.
    pub gtol: f64,
    /// Optional stop on relative cost reduction
    /// `(f_k − f_{k+1}) / max(|f_k|, |f_{k+1}|, 1) ≤ ftol`.
    pub ftol: Option<f64>,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Objective evaluations allowed per line search.
    pub max_line_search: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 100,
            gtol: 1e-8,
            ftol: None,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

impl LbfgsOptions {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::param("memory", "must be at least 1"));
        }
        if !(self.gtol >= 0.0) {
            return Err(Error::param("gtol", "must be non-negative"));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::param("c1/c2", "need 0 < c1 < c2 < 1"));
        }
        if self.max_line_search == 0 {
            return Err(Error::param("max_line_search", "must be at least 1"));
        }
        Ok(())
    }
}

/// Componentwise box; use infinities for one-sided bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] <= upper[i])) {
            return Err(Error::param(
                "bounds",
                format!(
                    "lower[{i}] = {} exceeds upper[{i}] = {}",
                    lower[i], upper[i]
                ),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(n: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; n], vec![upper; n])
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    CostTolerance,
    MaxIterations,
    LineSearchFailed,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GradientTolerance => "gradient_tolerance",
            Self::CostTolerance => "cost_tolerance",
            Self::MaxIterations => "max_iterations",
            Self::LineSearchFailed => "line_search_failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    /// ∞-norm of the projected gradient.
    pub grad_norm: f64,
    /// Euclidean norm of the accepted step (0 for the initial point).
    pub step_norm: f64,
    /// Objective evaluations so far.
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationTrace {
    /// Initial point first, then one record per accepted iteration.
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub reason: StopReason,
    /// Indices that finish on a bound with the gradient pointing outward.
    pub active_bounds: Vec<usize>,
}

impl OptimizationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.cost)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `objective` from `x0`. The objective returns the cost and its
/// gradient; errors raised while probing line-search trial points count as
/// infinite cost, while an error at `x0` is returned.
pub fn lbfgs_minimize<F>(
    objective: F,
    x0: Vec<f64>,
    bounds: Option<&Bounds>,
    options: &LbfgsOptions,
) -> Result<(Vec<f64>, OptimizationTrace)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    lbfgs_minimize_observed(objective, x0, bounds, options, |_, _| {})
}

/// As [`lbfgs_minimize`], calling `observer` with each accepted iterate
/// (including the initial point as iteration 0).
pub fn lbfgs_minimize_observed<F, O>(
    mut objective: F,
    x0: Vec<f64>,
    bounds: Option<&Bounds>,
    options: &LbfgsOptions,
    mut observer: O,
) -> Result<(Vec<f64>, OptimizationTrace)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    O: FnMut(&IterationRecord, &[f64]),
{
    options.validate()?;
    let n = x0.len();
    if let Some(b) = bounds {
        if b.lower.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: b.lower.len(),
            });
        }
    }
    let mut x = x0;
    if let Some(b) = bounds {
        b.project(&mut x);
    }
    let (mut f, mut g) = objective(&x)?;
    let mut evaluations = 1;
    check_finite(0, f, &g)?;
    let mut pg = projected_gradient(&x, &g, bounds);
    let pg0 = inf_norm(&pg);
    let mut records = vec![IterationRecord {
        iter: 0,
        cost: f,
        grad_norm: pg0,
        step_norm: 0.0,
        evaluations,
    }];
    observer(&records[0], &x);
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(options.memory);

    let reason = loop {
        let iter = records.len() - 1;
        let pg_norm = inf_norm(&pg);
        if pg_norm <= options.gtol * pg0 {
            break StopReason::GradientTolerance;
        }
        if iter >= options.max_iter {
            break StopReason::MaxIterations;
        }
        let free = free_mask(&x, &g, bounds);
        let mut d = two_loop(&g, &free, &memory);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            debug!("iteration {iter}: not a descent direction, resetting memory");
            memory.clear();
            d = pg.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                break StopReason::GradientTolerance;
            }
        }
        let max_step = bounds.map_or(f64::INFINITY, |b| max_feasible_step(&x, &d, b));
        let initial = if memory.is_empty() {
            (1.0 / dot(&d, &d).sqrt()).min(1.0)
        } else {
            1.0
        }
        .min(max_step);
        let search = line_search(
            &mut objective,
            &x,
            f,
            slope,
            &d,
            initial,
            max_step,
            options,
            &mut evaluations,
            iter + 1,
        )?;
        let Some(LineSearchPoint {
            x: mut x_new,
            f: f_new,
            g: g_new,
            ..
        }) = search
        else {
            break StopReason::LineSearchFailed;
        };
        if let Some(b) = bounds {
            b.project(&mut x_new);
        }
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if memory.len() == options.memory {
                memory.pop_front();
            }
            memory.push_back((s.clone(), y, 1.0 / sy));
        }
        let f_old = f;
        x = x_new;
        f = f_new;
        g = g_new;
        pg = projected_gradient(&x, &g, bounds);
        let record = IterationRecord {
            iter: iter + 1,
            cost: f,
            grad_norm: inf_norm(&pg),
            step_norm: dot(&s, &s).sqrt(),
            evaluations,
        };
        observer(&record, &x);
        records.push(record);
        if let Some(ftol) = options.ftol {
            if (f_old - f) / f_old.abs().max(f.abs()).max(1.0) <= ftol {
                break StopReason::CostTolerance;
            }
        }
    };
    let active_bounds = bounds.map_or_else(Vec::new, |b| {
        (0..n)
            .filter(|&i| (x[i] <= b.lower[i] && g[i] > 0.0) || (x[i] >= b.upper[i] && g[i] < 0.0))
            .collect()
    });
    Ok((
        x,
        OptimizationTrace {
            records,
            converged: matches!(
                reason,
                StopReason::GradientTolerance | StopReason::CostTolerance
            ),
            reason,
            active_bounds,
        },
    ))
}

fn check_finite(iteration: usize, f: f64, g: &[f64]) -> Result<()> {
    if f.is_nan() || g.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFiniteObjective { iteration, cost: f });
    }
    Ok(())
}

/// `P(x − g) − x`, the projected-gradient step.
fn projected_gradient(x: &[f64], g: &[f64], bounds: Option<&Bounds>) -> Vec<f64> {
    match bounds {
        None => g.to_vec(),
        Some(b) => (0..x.len())
            .map(|i| x[i] - (x[i] - g[i]).clamp(b.lower[i], b.upper[i]))
            .collect(),
    }
}

fn free_mask(x: &[f64], g: &[f64], bounds: Option<&Bounds>) -> Vec<bool> {
    match bounds {
        None => vec![true; x.len()],
        Some(b) => (0..x.len())
            .map(|i| !((x[i] <= b.lower[i] && g[i] > 0.0) || (x[i] >= b.upper[i] && g[i] < 0.0)))
            .collect(),
    }
}

/// `−H g` restricted to the free variables.
fn two_loop(g: &[f64], free: &[bool], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let masked_dot = |a: &[f64], b: &[f64]| -> f64 {
        (0..a.len()).filter(|&i| free[i]).map(|i| a[i] * b[i]).sum()
    };
    let mut q: Vec<f64> = g
        .iter()
        .zip(free)
        .map(|(v, &f)| if f { *v } else { 0.0 })
        .collect();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, _) in memory.iter().rev() {
        let sy = masked_dot(s, y);
        if sy <= 0.0 {
            alphas.push(0.0);
            continue;
        }
        let a = masked_dot(s, &q) / sy;
        for i in 0..q.len() {
            if free[i] {
                q[i] -= a * y[i];
            }
        }
        alphas.push(a);
    }
    let gamma = memory
        .back()
        .map(|(s, y, _)| {
            let yy = masked_dot(y, y);
            let sy = masked_dot(s, y);
            if yy > 0.0 && sy > 0.0 {
                sy / yy
            } else {
                1.0
            }
        })
        .unwrap_or(1.0);
    q.iter_mut().for_each(|v| *v *= gamma);
    for ((s, y, _), a) in memory.iter().zip(alphas.iter().rev()) {
        let sy = masked_dot(s, y);
        if sy <= 0.0 {
            continue;
        }
        let b = masked_dot(y, &q) / sy;
        for i in 0..q.len() {
            if free[i] {
                q[i] += (a - b) * s[i];
            }
        }
    }
    q.iter().map(|v| -v).collect()
}

fn max_feasible_step(x: &[f64], d: &[f64], b: &Bounds) -> f64 {
    let mut step = f64::INFINITY;
    for i in 0..x.len() {
        if d[i] < 0.0 && b.lower[i].is_finite() {
            step = step.min(((b.lower[i] - x[i]) / d[i]).max(0.0));
        } else if d[i] > 0.0 && b.upper[i].is_finite() {
            step = step.min(((b.upper[i] - x[i]) / d[i]).max(0.0));
        }
    }
    step
}

struct LineSearchPoint {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

/// Strong-Wolfe search on `[0, max_step]` (bracketing followed by zoom).
/// Returns `None` when no acceptable step is found.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    initial: f64,
    max_step: f64,
    options: &LbfgsOptions,
    evaluations: &mut usize,
    iteration: usize,
) -> Result<Option<LineSearchPoint>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(max_step > 0.0) {
        return Ok(None);
    }
    let mut budget = options.max_line_search;
    let mut eval = |alpha: f64| -> Result<LineSearchPoint> {
        let xt: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + alpha * b).collect();
        *evaluations += 1;
        match objective(&xt) {
            Ok((f, g)) => {
                check_finite(iteration, f, &g)?;
                let slope = dot(&g, d);
                Ok(LineSearchPoint {
                    alpha,
                    x: xt,
                    f,
                    g,
                    slope,
                })
            }
            Err(err) => {
                debug!("trial step {alpha:e} failed: {err}");
                Ok(LineSearchPoint {
                    alpha,
                    x: xt,
                    f: f64::INFINITY,
                    g: Vec::new(),
                    slope: f64::NAN,
                })
            }
        }
    };
    let armijo = |p: &LineSearchPoint| p.f <= f0 + options.c1 * p.alpha * slope0;
    let curvature = |p: &LineSearchPoint| p.slope.abs() <= -options.c2 * slope0;

    let mut prev = LineSearchPoint {
        alpha: 0.0,
        x: x.to_vec(),
        f: f0,
        g: Vec::new(),
        slope: slope0,
    };
    let mut alpha = initial;
    let mut first = true;
    let (mut lo, mut hi) = loop {
        if budget == 0 {
            return Ok(None);
        }
        budget -= 1;
        let cur = eval(alpha)?;
        if !armijo(&cur) || (!first && cur.f >= prev.f) {
            break (prev, cur);
        }
        if curvature(&cur) {
            return Ok(Some(cur));
        }
        if cur.slope >= 0.0 {
            break (cur, prev);
        }
        if alpha >= max_step {
            // blocked by a bound while still descending
            return Ok(Some(cur));
        }
        first = false;
        alpha = (2.0 * alpha).min(max_step);
        prev = cur;
    };
    // zoom: lo satisfies Armijo with the lowest cost seen, hi brackets
    loop {
        if budget == 0 {
            return Ok(best_armijo(lo, f0));
        }
        budget -= 1;
        let width = hi.alpha - lo.alpha;
        if width.abs() <= 1e-16 * lo.alpha.abs().max(1e-16) {
            return Ok(best_armijo(lo, f0));
        }
        let trial = interpolate(&lo, &hi).clamp(
            lo.alpha.min(hi.alpha) + 0.1 * width.abs(),
            lo.alpha.max(hi.alpha) - 0.1 * width.abs(),
        );
        let cur = eval(trial)?;
        if !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
        } else {
            if curvature(&cur) {
                return Ok(Some(cur));
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
}

fn best_armijo(lo: LineSearchPoint, f0: f64) -> Option<LineSearchPoint> {
    (lo.alpha > 0.0 && lo.f < f0).then_some(lo)
}

/// Minimizer of the cubic through both end points, or the midpoint when the
/// data do not support it.
fn interpolate(a: &LineSearchPoint, b: &LineSearchPoint) -> f64 {
    let mid = 0.5 * (a.alpha + b.alpha);
    if !(a.f.is_finite() && b.f.is_finite() && a.slope.is_finite() && b.slope.is_finite()) {
        return mid;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    if t.is_finite() {
        t
    } else {
        mid
    }
}
