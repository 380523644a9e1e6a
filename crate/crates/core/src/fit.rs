//! Maximum likelihood and bias-reduced fitting, plus Wald intervals and the
//! likelihood-ratio and score tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bias::{firth_adjustment, ingredients};
use crate::error::{Error, Result};
use crate::likelihood::{information, information_matrix, invert_spd, score, BoundModel, Dataset, ModelSpec};
use crate::links::std_normal_quantile;

/// Shrinkage of the responses toward 1/2 before linking them for start values.
const START_SHRINK: f64 = 1e-4;
const WOLFE_C1: f64 = 1e-4;
const WOLFE_C2: f64 = 0.9;
const LINE_SEARCH_STEPS: usize = 30;
/// The polish only finishes a nearly converged BFGS run.
const POLISH_ITERATIONS: usize = 30;
const STALL_STEPS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Start {
    Heuristic,
    User(Vec<f64>),
}

/// Stopping rule for the score (or modified score) `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    /// `max |u_r| < tolerance`.
    #[default]
    ScoreNorm,
    /// `sqrt(u' K^{-1} u) < tolerance`: the remaining Newton step measured in
    /// standard errors. Unlike the sup norm it does not grow with the
    /// precision, whose large values put a rounding floor under `|u|`.
    Decrement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub grad_tolerance: f64,
    pub max_iterations: usize,
    pub start: Start,
    pub convergence: Convergence,
    /// Retry a failed heuristic-start fit of a nonlinear model from other
    /// starting values.
    pub retry_starts: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            grad_tolerance: 1e-8,
            max_iterations: 500,
            start: Start::Heuristic,
            convergence: Convergence::ScoreNorm,
            retry_starts: true,
        }
    }
}

impl FitOptions {
    pub fn with_start(&self, start: Vec<f64>) -> FitOptions {
        FitOptions {
            start: Start::User(start),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub param_names: Vec<String>,
    pub k: usize,
    pub zeta_hat: DVector<f64>,
    pub loglik: f64,
    pub info: DMatrix<f64>,
    pub info_inverse: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Sup norm of the score (or modified score for bias-reduced fits).
    pub grad_norm: f64,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn beta(&self) -> &[f64] {
        &self.zeta_hat.as_slice()[..self.k]
    }

    pub fn theta(&self) -> &[f64] {
        &self.zeta_hat.as_slice()[self.k..]
    }

    /// Square roots of the diagonal of the inverse information.
    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.zeta_hat.len())
            .map(|i| self.info_inverse[(i, i)].sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

impl TestResult {
    fn chi_square(statistic: f64, df: usize) -> Result<TestResult> {
        if statistic < -1e-10 {
            return Err(Error::Domain(format!("test statistic {statistic} is negative")));
        }
        let statistic = statistic.max(0.0);
        let p_value = if df == 0 || statistic == 0.0 {
            1.0
        } else {
            ChiSquared::new(df as f64)
                .map_err(|e| Error::Domain(e.to_string()))?
                .sf(statistic)
        };
        Ok(TestResult {
            statistic,
            df,
            p_value,
        })
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn quad_form(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let v = DVector::from_column_slice(v);
    v.dot(&(m * &v))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Damped Gauss-Newton least squares of `target` on a formula's values.
fn gauss_newton(
    formula: &crate::formula::Formula,
    rows: &[Vec<f64>],
    target: &[f64],
    start: Vec<f64>,
    iterations: usize,
) -> Vec<f64> {
    let p = formula.n_params();
    let mut buf = formula.buffer();
    let eval = |buf: &mut crate::formula::EvalBuffer, theta: &[f64], want: bool| -> Option<(f64, DMatrix<f64>, DVector<f64>)> {
        let n = rows.len();
        let mut jac = DMatrix::zeros(if want { n } else { 0 }, p);
        let mut resid = DVector::zeros(n);
        let order = if want {
            crate::formula::DerivOrder::First
        } else {
            crate::formula::DerivOrder::Value
        };
        for (i, row) in rows.iter().enumerate() {
            let v = formula.eval_into(buf, theta, row, order).ok()?;
            resid[i] = target[i] - v;
            if want {
                for (r, g) in buf.grad().iter().enumerate() {
                    jac[(i, r)] = *g;
                }
            }
        }
        let sse = resid.norm_squared();
        sse.is_finite().then_some((sse, jac, resid))
    };
    let mut theta = start;
    let Some((mut sse, mut jac, mut resid)) = eval(&mut buf, &theta, true) else {
        return theta;
    };
    for _ in 0..iterations {
        let svd = jac.clone().svd(true, true);
        let Ok(step) = svd.solve(&resid, 1e-10 * svd.singular_values.max()) else {
            break;
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            if let Some((s, _, _)) = eval(&mut buf, &trial, false) {
                if s < sse {
                    let done = sse - s <= 1e-12 * (1.0 + sse);
                    theta = trial;
                    improved = !done;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
        match eval(&mut buf, &theta, true) {
            Some(next) => (sse, jac, resid) = next,
            None => break,
        }
    }
    theta
}

fn covariate_rows(formula: &crate::formula::Formula, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    let cols: Vec<&[f64]> = formula
        .covariates()
        .iter()
        .map(|c| data.column(c).ok_or_else(|| Error::InvalidData(format!("unknown column '{c}'"))))
        .collect::<Result<_>>()?;
    Ok((0..data.n()).map(|i| cols.iter().map(|c| c[i]).collect()).collect())
}

/// Parameters that enter a formula nonlinearly, judged from its Hessian at `theta`.
fn curved_params(formula: &crate::formula::Formula, rows: &[Vec<f64>], theta: &[f64]) -> Vec<bool> {
    let p = formula.n_params();
    let mut curved = vec![false; p];
    if formula.is_linear() {
        return curved;
    }
    for row in rows {
        if let Ok(d) = formula.eval_with_derivs(theta, row) {
            for r in 0..p {
                if d.hess.row(r).iter().any(|h| *h != 0.0) {
                    curved[r] = true;
                }
            }
        }
    }
    curved
}

/// Deterministic start: least squares of the linked, shrunken responses for
/// the mean; a moment-based precision for the precision intercept.
pub fn heuristic_start(spec: &ModelSpec, data: &Dataset) -> Result<Vec<f64>> {
    heuristic_start_from(spec, data, 1.0)
}

/// Values tried for the nonlinear parameters when the default start fails.
const RETRY_CURVED_STARTS: [f64; 4] = [2.0, 0.5, 3.0, -1.0];

/// As [`heuristic_start`], with the least-squares searches for nonlinear
/// parameters started at `curved_init`.
fn heuristic_start_from(spec: &ModelSpec, data: &Dataset, curved_init: f64) -> Result<Vec<f64>> {
    let n = data.n();
    let mean_rows = covariate_rows(&spec.mean, data)?;
    let prec_rows = covariate_rows(&spec.precision, data)?;
    let target: Vec<f64> = data
        .y()
        .iter()
        .map(|y| spec.mean_link.link((1.0 - START_SHRINK) * y + 0.5 * START_SHRINK))
        .collect::<Result<_>>()?;

    let ones = vec![1.0; spec.k()];
    let curved = curved_params(&spec.mean, &mean_rows, &ones);
    let beta0: Vec<f64> = curved.iter().map(|&c| if c { curved_init } else { 0.0 }).collect();
    let beta = gauss_newton(&spec.mean, &mean_rows, &target, beta0, 50);

    let mut mu = Vec::with_capacity(n);
    for row in &mean_rows {
        let eta = spec.mean.eval_value(&beta, row)?;
        mu.push(spec.mean_link.inverse(eta).unwrap_or(0.5));
    }
    let dof = if n > spec.k() { (n - spec.k()) as f64 } else { n as f64 };
    let sigma2 = data.y().iter().zip(&mu).map(|(y, m)| (y - m).powi(2)).sum::<f64>() / dof;
    let spread = mu.iter().map(|m| m * (1.0 - m)).sum::<f64>() / n as f64;
    let mut phi0 = spread / sigma2 - 1.0;
    if !(phi0.is_finite() && phi0 > 1.0) {
        phi0 = 1.0;
    }
    let level = spec.precision_link.link(phi0)?;

    let h = spec.h();
    let ones = vec![1.0; h];
    let curved = curved_params(&spec.precision, &prec_rows, &ones);
    let mut theta: Vec<f64> = curved.iter().map(|&c| if c { curved_init } else { 0.0 }).collect();
    let mut intercept = None;
    'search: for r in 0..h {
        for row in &prec_rows {
            match spec.precision.eval_with_derivs(&theta, row) {
                Ok(d) if d.grad[r] == 1.0 && d.hess.row(r).iter().all(|v| *v == 0.0) => {}
                _ => continue 'search,
            }
        }
        intercept = Some(r);
        break;
    }
    match intercept {
        Some(r) => {
            let mut shift = 0.0;
            for row in &prec_rows {
                shift += spec.precision.eval_value(&theta, row)?;
            }
            theta[r] += level - shift / n as f64;
        }
        None => {
            let target = vec![level; n];
            theta = gauss_newton(&spec.precision, &prec_rows, &target, theta, 50);
        }
    }
    Ok(beta.into_iter().chain(theta).collect())
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let tol = sv.max() * 1e-10 * m.nrows().max(m.ncols()) as f64;
    sv.iter().filter(|s| **s > tol).count()
}

struct Objective<'a, 'm> {
    model: &'a mut BoundModel<'m>,
}

impl Objective<'_, '_> {
    /// Negative log-likelihood and its gradient.
    fn eval(&mut self, zeta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (ll, mut u) = self.model.loglik_and_score(zeta, true)?;
        u.iter_mut().for_each(|x| *x = -*x);
        Ok((-ll, u))
    }
}

struct LinePoint {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

/// Strong Wolfe line search. Evaluation failures (leaving the link domains)
/// are treated as insufficient decrease, which shrinks the step.
fn line_search(obj: &mut Objective, x: &[f64], d: &[f64], f0: f64, slope0: f64, alpha0: f64) -> Option<LinePoint> {
    let mut eval = |alpha: f64| -> Option<LinePoint> {
        let trial: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
        let (f, g) = obj.eval(&trial).ok()?;
        f.is_finite().then(|| LinePoint {
            alpha,
            f,
            slope: dot(&g, d),
            g,
        })
    };
    let armijo = |p: &LinePoint| p.f <= f0 + WOLFE_C1 * p.alpha * slope0;
    let curvature = |p: &LinePoint| p.slope.abs() <= -WOLFE_C2 * slope0;

    let mut lo: Option<LinePoint> = None;
    // Bracketing bound, with its objective value when it was finite.
    let mut hi: (f64, Option<f64>);
    let mut alpha = alpha0;
    let mut step = 0;
    loop {
        step += 1;
        match eval(alpha) {
            None => {
                hi = (alpha, None);
                break;
            }
            Some(p) => {
                let lo_f = lo.as_ref().map_or(f0, |l| l.f);
                if !armijo(&p) || (lo.is_some() && p.f >= lo_f) {
                    hi = (p.alpha, Some(p.f));
                    break;
                }
                if curvature(&p) {
                    return Some(p);
                }
                if p.slope >= 0.0 {
                    hi = match &lo {
                        Some(l) => (l.alpha, Some(l.f)),
                        None => (0.0, Some(f0)),
                    };
                    lo = Some(p);
                    break;
                }
                alpha = 2.0 * p.alpha;
                lo = Some(p);
            }
        }
        if step >= LINE_SEARCH_STEPS {
            return lo;
        }
    }
    // Zoom between the best acceptable point and the bracketing bound, using
    // the safeguarded minimizer of the quadratic through the low end's value
    // and slope and the high end's value.
    for _ in 0..LINE_SEARCH_STEPS {
        let (lo_alpha, lo_f, lo_slope) = lo.as_ref().map_or((0.0, f0, slope0), |l| (l.alpha, l.f, l.slope));
        let width = hi.0 - lo_alpha;
        if width.abs() <= 1e-14 * lo_alpha.abs().max(hi.0.abs()) {
            break;
        }
        let mut trial = lo_alpha + 0.5 * width;
        if let Some(hi_f) = hi.1 {
            let curv = hi_f - lo_f - lo_slope * width;
            if curv > 0.0 {
                let t = -lo_slope * width * width / (2.0 * curv);
                let (a, b) = (0.1 * width, 0.9 * width);
                trial = lo_alpha + t.clamp(a.min(b), a.max(b));
            }
        }
        match eval(trial) {
            None => hi = (trial, None),
            Some(p) => {
                if !armijo(&p) || p.f >= lo_f {
                    hi = (p.alpha, Some(p.f));
                } else {
                    if curvature(&p) {
                        return Some(p);
                    }
                    if p.slope * (hi.0 - p.alpha) >= 0.0 {
                        hi = (lo_alpha, Some(lo_f));
                    }
                    lo = Some(p);
                }
            }
        }
    }
    lo
}

/// Inverse information at `zeta`, used to scale quasi-Newton steps.
fn scoring_metric(model: &mut BoundModel, zeta: &[f64]) -> Option<DMatrix<f64>> {
    let ctx = model.context(zeta).ok()?;
    let (inv, _) = invert_spd(&information_matrix(&ctx)).ok()?;
    Some(inv)
}

fn check_sizes(spec: &ModelSpec, data: &Dataset) -> Result<()> {
    if spec.n_params() >= data.n() {
        return Err(Error::InvalidModel(format!(
            "{} parameters need more than {} observations",
            spec.n_params(),
            data.n()
        )));
    }
    Ok(())
}

fn start_point(spec: &ModelSpec, data: &Dataset, opts: &FitOptions) -> Result<Vec<f64>> {
    match &opts.start {
        Start::Heuristic => heuristic_start(spec, data),
        Start::User(v) if v.len() == spec.n_params() => Ok(v.clone()),
        Start::User(v) => Err(Error::InvalidModel(format!(
            "start vector has {} values, model has {} parameters",
            v.len(),
            spec.n_params()
        ))),
    }
}

fn finish(spec: &ModelSpec, data: &Dataset, zeta: Vec<f64>, iterations: usize, grad_norm: f64, warnings: Vec<String>) -> Result<FitResult> {
    let mut model = BoundModel::new(spec, data)?;
    let ctx = model.context(&zeta)?;
    let info = information(&ctx)?;
    let loglik = model.loglik(&zeta)?;
    Ok(FitResult {
        param_names: spec.param_names(),
        k: spec.k(),
        zeta_hat: DVector::from_vec(zeta),
        loglik,
        info: info.k,
        info_inverse: info.inverse,
        converged: true,
        iterations,
        grad_norm,
        warnings,
    })
}

/// Maximum likelihood fit by BFGS with a strong Wolfe line search, the
/// inverse Hessian approximation seeded with the inverse expected information.
pub fn fit_mle(spec: &ModelSpec, data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    if !(opts.grad_tolerance > 0.0) {
        return Err(Error::InvalidModel("gradient tolerance must be positive".into()));
    }
    check_sizes(spec, data)?;
    let first = fit_from(spec, data, opts, start_point(spec, data, opts)?);
    let retry = opts.retry_starts
        && matches!(opts.start, Start::Heuristic)
        && !(spec.mean.is_linear() && spec.precision.is_linear())
        && matches!(
            first,
            Err(Error::NonConvergence { .. } | Error::SingularInformation { .. } | Error::DomainWandering(_) | Error::LinkDomain { .. } | Error::Domain(_))
        );
    if !retry {
        return first;
    }
    // A curved predictor can send the search from the default start toward a
    // degenerate limit (an exponent collapsing to zero, say) while an
    // interior maximum exists elsewhere.
    let mut best: Option<FitResult> = None;
    for init in RETRY_CURVED_STARTS {
        let Ok(x) = heuristic_start_from(spec, data, init) else {
            continue;
        };
        if let Ok(fit) = fit_from(spec, data, opts, x) {
            if best.as_ref().is_none_or(|b| fit.loglik > b.loglik) {
                best = Some(fit);
            }
        }
    }
    best.map_or(first, Ok)
}

fn fit_from(spec: &ModelSpec, data: &Dataset, opts: &FitOptions, start: Vec<f64>) -> Result<FitResult> {
    let mut x = start;
    let mut model = BoundModel::new(spec, data)?;
    let mut warnings = Vec::new();
    let p = x.len();

    match model.context(&x) {
        Ok(ctx) => {
            if rank(&ctx.xt) < spec.k() {
                warnings.push("mean derivative matrix is rank deficient at the start".to_string());
            }
            if rank(&ctx.zt) < spec.h() {
                warnings.push("precision derivative matrix is rank deficient at the start".to_string());
            }
        }
        Err(e) => return Err(Error::DomainWandering(format!("start point is invalid: {e}"))),
    }

    let mut obj = Objective {
        model: &mut model,
    };
    let (mut f, mut g) = obj.eval(&x)?;
    let identity = || DMatrix::<f64>::identity(p, p);
    let mut hinv = scoring_metric(obj.model, &x).unwrap_or_else(identity);
    let mut fresh = true;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        match opts.convergence {
            Convergence::ScoreNorm if sup_norm(&g) < opts.grad_tolerance => {
                drop(obj);
                return finish(spec, data, x, iterations, sup_norm(&g), warnings);
            }
            // The exact decrement is checked by the polish below.
            Convergence::Decrement if quad_form(&hinv, &g) < opts.grad_tolerance.powi(2) => break,
            _ => {}
        }
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut d: Vec<f64> = (-(&hinv * &gv)).iter().copied().collect();
        let mut slope = dot(&g, &d);
        // Predicted decrease at the rounding level of the objective: the
        // line search can no longer see progress, so hand over to the polish.
        if slope < 0.0 && -0.5 * slope < 1e-12 * (1.0 + f.abs()) {
            break;
        }
        if !(slope < 0.0) {
            hinv = scoring_metric(obj.model, &x).unwrap_or_else(identity);
            d = (-(&hinv * &gv)).iter().copied().collect();
            slope = dot(&g, &d);
            fresh = true;
            if !(slope < 0.0) {
                d = g.iter().map(|v| -v).collect();
                slope = dot(&g, &d);
            }
        }
        let Some(pt) = line_search(&mut obj, &x, &d, f, slope, 1.0) else {
            if fresh {
                break;
            }
            hinv = scoring_metric(obj.model, &x).unwrap_or_else(identity);
            fresh = true;
            continue;
        };
        let s: Vec<f64> = d.iter().map(|di| pt.alpha * di).collect();
        let yv: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        x = x.iter().zip(&s).map(|(xi, si)| xi + si).collect();
        f = pt.f;
        g = pt.g;
        fresh = false;
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&yv, &yv).sqrt() {
            let sv = DVector::from_vec(s);
            let yv = DVector::from_vec(yv);
            let rho = 1.0 / sy;
            let hy = &hinv * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (H y s' + s y' H) + (rho^2 y'Hy + rho) s s'
            hinv -= (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
            hinv += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
        }
    }
    drop(obj);
    // Near the optimum the objective's change drops below rounding and the
    // line search stalls; finish by driving the score itself to zero.
    let remaining = opts.max_iterations.saturating_sub(iterations).clamp(1, POLISH_ITERATIONS);
    let root = solve_root(&mut |z: &[f64]| plain_score(&mut model, z), x, opts, remaining)?;
    let iterations = iterations + root.iterations;
    if root.converged {
        return finish(spec, data, root.zeta, iterations, root.grad_norm, warnings);
    }
    Err(Error::NonConvergence {
        iterations,
        grad_norm: root.grad_norm,
    })
}

type ScoreFn<'s> = dyn FnMut(&[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> + 's;

/// Plain score with the inverse information.
fn plain_score(model: &mut BoundModel, zeta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let ctx = model.context(zeta)?;
    let info = information(&ctx)?;
    Ok((score(&ctx), info.inverse))
}

/// Modified score `U + P^T(omega1 + omega2)` at `zeta`, with the inverse information.
fn modified_score(model: &mut BoundModel, zeta: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let ctx = model.context(zeta)?;
    let info = information(&ctx)?;
    let ing = ingredients(&ctx, &info.inverse)?;
    Ok((score(&ctx) + firth_adjustment(&ctx, &ing), info.inverse))
}

struct Root {
    zeta: Vec<f64>,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
}

/// Solves `u(zeta) = 0` by scoring steps `K^{-1} u`, halving on the
/// information-weighted norm `u' K^{-1} u`; switches to finite-difference
/// Newton steps when scoring contracts slowly.
fn solve_root(eval: &mut ScoreFn, start: Vec<f64>, opts: &FitOptions, max_iterations: usize) -> Result<Root> {
    let tol = opts.grad_tolerance;
    let done = |u: &DVector<f64>, m: f64| match opts.convergence {
        Convergence::ScoreNorm => sup_norm(u.as_slice()) < tol,
        Convergence::Decrement => m < tol * tol,
    };
    let mut x = DVector::from_vec(start);
    let (mut u, mut kinv) = eval(x.as_slice())?;
    let mut m = u.dot(&(&kinv * &u));
    let mut slow = 0;
    let mut iterations = 0;
    while iterations < max_iterations {
        if done(&u, m) {
            break;
        }
        iterations += 1;
        let newton = slow >= 3;
        let step = if newton {
            let jac = fd_jacobian(eval, &x)?;
            match jac.lu().solve(&u) {
                Some(s) => -s,
                None => &kinv * &u,
            }
        } else {
            &kinv * &u
        };
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let trial = &x + &step * scale;
            if let Ok((u2, kinv2)) = eval(trial.as_slice()) {
                let m2 = u2.dot(&(&kinv2 * &u2));
                if m2.is_finite() && m2 < m {
                    slow = if m2 > 0.25 * m { slow + 1 } else { 0 };
                    (x, u, kinv, m) = (trial, u2, kinv2, m2);
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            if newton {
                break;
            }
            slow = 3;
        }
        // Sustained slow contraction even with Newton steps: the root is
        // at infinity or the problem is numerically degenerate.
        if slow >= STALL_STEPS {
            break;
        }
    }
    Ok(Root {
        zeta: x.iter().copied().collect(),
        iterations,
        grad_norm: sup_norm(u.as_slice()),
        converged: done(&u, m),
    })
}

/// Central-difference Jacobian of a score function.
fn fd_jacobian(eval: &mut ScoreFn, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let p = x.len();
    let mut jac = DMatrix::zeros(p, p);
    for c in 0..p {
        let h = 1e-6 * x[c].abs().max(1e-2);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[c] += h;
        xm[c] -= h;
        let (up, _) = eval(xp.as_slice())?;
        let (um, _) = eval(xm.as_slice())?;
        jac.set_column(c, &((up - um) / (2.0 * h)));
    }
    Ok(jac)
}

/// Bias-reduced fit: root of the modified score, started from the MLE.
pub fn fit_firth(spec: &ModelSpec, data: &Dataset, opts: &FitOptions) -> Result<FitResult> {
    let mle = fit_mle(spec, data, opts)?;
    fit_firth_from(spec, data, opts, &mle)
}

/// As [`fit_firth`], starting from an existing maximum likelihood fit.
pub fn fit_firth_from(spec: &ModelSpec, data: &Dataset, opts: &FitOptions, mle: &FitResult) -> Result<FitResult> {
    let mut model = BoundModel::new(spec, data)?;
    let root = solve_root(
        &mut |z: &[f64]| modified_score(&mut model, z),
        mle.zeta_hat.iter().copied().collect(),
        opts,
        opts.max_iterations,
    )?;
    if root.converged {
        return finish(spec, data, root.zeta, root.iterations, root.grad_norm, mle.warnings.clone());
    }
    Err(Error::NonConvergence {
        iterations: root.iterations,
        grad_norm: root.grad_norm,
    })
}


/// Symmetric normal-theory intervals `estimate -/+ z * se` at the given coverage.
pub fn wald_ci(fit: &FitResult, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level >= 0.0 && level < 1.0) {
        return Err(Error::InvalidModel(format!("coverage {level} is outside [0, 1)")));
    }
    let z = if level == 0.0 {
        0.0
    } else {
        std_normal_quantile(0.5 + 0.5 * level)
    };
    Ok(fit
        .zeta_hat
        .iter()
        .zip(fit.std_errors())
        .map(|(est, se)| (est - z * se, est + z * se))
        .collect())
}

fn validate_restriction(full: &ModelSpec, fixed: &[(String, f64)]) -> Result<()> {
    let names = full.param_names();
    if fixed.is_empty() {
        return Err(Error::NotNested("the null model restricts no parameters".into()));
    }
    for (i, (name, value)) in fixed.iter().enumerate() {
        if !names.contains(name) {
            return Err(Error::NotNested(format!("'{name}' is not a parameter of the full model")));
        }
        if fixed[..i].iter().any(|(other, _)| other == name) {
            return Err(Error::NotNested(format!("'{name}' is restricted twice")));
        }
        if !value.is_finite() {
            return Err(Error::NotNested(format!("'{name}' is fixed at a non-finite value")));
        }
    }
    if fixed.len() >= names.len() {
        return Err(Error::NotNested("every parameter is restricted".into()));
    }
    Ok(())
}

/// Null-model estimate expressed in the full parameterization.
pub fn embed_null(full: &ModelSpec, fixed: &[(String, f64)], null_zeta: &[f64]) -> Vec<f64> {
    let mut free = null_zeta.iter();
    full.param_names()
        .iter()
        .map(|name| match fixed.iter().find(|(n, _)| n == name) {
            Some((_, v)) => *v,
            None => *free.next().expect("null model has one value per free parameter"),
        })
        .collect()
}

/// A fitted null model nested in a full model.
#[derive(Debug, Clone)]
pub struct NullFit {
    pub spec: ModelSpec,
    pub fit: FitResult,
    /// Null estimate in the full parameterization.
    pub embedded: Vec<f64>,
}

pub fn fit_null(full: &ModelSpec, fixed: &[(String, f64)], data: &Dataset, opts: &FitOptions) -> Result<NullFit> {
    validate_restriction(full, fixed)?;
    let spec = full.restrict(fixed)?;
    let fit = fit_mle(&spec, data, opts)?;
    let embedded = embed_null(full, fixed, fit.zeta_hat.as_slice());
    Ok(NullFit { spec, fit, embedded })
}

/// Likelihood-ratio test of the restriction against the full model.
pub fn lrt(full: &ModelSpec, fixed: &[(String, f64)], data: &Dataset, opts: &FitOptions) -> Result<TestResult> {
    let full_fit = fit_mle(full, data, opts)?;
    lrt_with(full, fixed, data, opts, &full_fit)
}

/// As [`lrt`], reusing a full-model fit.
pub fn lrt_with(full: &ModelSpec, fixed: &[(String, f64)], data: &Dataset, opts: &FitOptions, full_fit: &FitResult) -> Result<TestResult> {
    let null = fit_null(full, fixed, data, opts)?;
    TestResult::chi_square(2.0 * (full_fit.loglik - null.fit.loglik), fixed.len())
}

/// Score test `U' K^{-1} U` at the null estimate, with the expected
/// information of the full model.
pub fn score_test(full: &ModelSpec, fixed: &[(String, f64)], data: &Dataset, opts: &FitOptions) -> Result<TestResult> {
    let null = fit_null(full, fixed, data, opts)?;
    let mut model = BoundModel::new(full, data)?;
    let ctx = model.context(&null.embedded)?;
    let u = score(&ctx);
    let info = information(&ctx)?;
    TestResult::chi_square(u.dot(&(&info.inverse * &u)), fixed.len())
}
