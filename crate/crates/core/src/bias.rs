//! Second-order (order 1/n) bias of the maximum likelihood estimator.
//!
//! The bias is the coefficient vector of a weighted least-squares regression
//! of `xi = W^{-1} omega` on the columns of the block design `P = diag(Xt, Zt)`
//! with weight `W`. Vectors of length `2n` stack the mean block over the
//! precision block.
//!
//! [`brute_force_bias`] evaluates the same quantity from the raw triple sums of
//! joint cumulants and is kept as an oracle for small models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::likelihood::{weights, EvalContext, Information};

/// Largest parameter count accepted by the brute-force oracle.
pub const BRUTE_FORCE_MAX_PARAMS: usize = 6;

/// Per-observation pieces of the bias formula.
#[derive(Debug, Clone)]
pub struct BiasIngredients {
    pub m1: DVector<f64>,
    pub m2: DVector<f64>,
    pub m3: DVector<f64>,
    pub m4: DVector<f64>,
    pub m5: DVector<f64>,
    pub m6: DVector<f64>,
    pub n1: DVector<f64>,
    pub n2: DVector<f64>,
    pub n3: DVector<f64>,
    /// Trace of each mean-predictor Hessian against the mean block of K^{-1}.
    pub f: DVector<f64>,
    /// Trace of each precision-predictor Hessian against the precision block of K^{-1}.
    pub g: DVector<f64>,
    pub p_bb: DVector<f64>,
    pub p_bt: DVector<f64>,
    pub p_tt: DVector<f64>,
    pub omega1: DVector<f64>,
    pub omega2: DVector<f64>,
    pub xi1: DVector<f64>,
    pub xi2: DVector<f64>,
}

/// A bias vector for the full parameter, mean parameters first.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasVector {
    pub b_zeta: DVector<f64>,
    pub k: usize,
}

impl BiasVector {
    pub fn zeros(k: usize, h: usize) -> Self {
        BiasVector {
            b_zeta: DVector::zeros(k + h),
            k,
        }
    }

    pub fn b_beta(&self) -> &[f64] {
        &self.b_zeta.as_slice()[..self.k]
    }

    pub fn b_theta(&self) -> &[f64] {
        &self.b_zeta.as_slice()[self.k..]
    }
}

/// Bias split into the part driven by `xi1` and the part driven by `xi2`,
/// which vanishes when both predictors are linear.
#[derive(Debug, Clone)]
pub struct CoxSnellParts {
    pub total: BiasVector,
    pub linear_part: BiasVector,
    pub nonlinear_part: BiasVector,
    pub ingredients: BiasIngredients,
}

fn quad(row: &[f64], m: &DMatrix<f64>, col: &[f64]) -> f64 {
    let mut s = 0.0;
    for (r, x) in row.iter().enumerate() {
        for (c, z) in col.iter().enumerate() {
            s += x * m[(r, c)] * z;
        }
    }
    s
}

fn trace_prod(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            s += a[(r, c)] * b[(c, r)];
        }
    }
    s
}

/// Assemble M1..M6, N1..N3, F, G, the P diagonals, omega and xi.
pub fn ingredients(ctx: &EvalContext, info_inv: &DMatrix<f64>) -> Result<BiasIngredients> {
    let (n, k, h) = (ctx.n, ctx.k, ctx.h);
    if info_inv.nrows() != k + h || info_inv.ncols() != k + h {
        return Err(Error::InvalidModel("inverse information has the wrong shape".into()));
    }
    let kbb = info_inv.view((0, 0), (k, k)).into_owned();
    let kbt = info_inv.view((0, k), (k, h)).into_owned();
    let ktt = info_inv.view((k, k), (h, h)).into_owned();
    let z = || DVector::<f64>::zeros(n);
    let mut ing = BiasIngredients {
        m1: z(),
        m2: z(),
        m3: z(),
        m4: z(),
        m5: z(),
        m6: z(),
        n1: z(),
        n2: z(),
        n3: z(),
        f: z(),
        g: z(),
        p_bb: z(),
        p_bt: z(),
        p_tt: z(),
        omega1: DVector::zeros(2 * n),
        omega2: DVector::zeros(2 * n),
        xi1: DVector::zeros(2 * n),
        xi2: DVector::zeros(2 * n),
    };
    let w = weights(ctx);
    for i in 0..n {
        let xrow: Vec<f64> = ctx.xt.row(i).iter().copied().collect();
        let zrow: Vec<f64> = ctx.zt.row(i).iter().copied().collect();
        ing.p_bb[i] = quad(&xrow, &kbb, &xrow);
        ing.p_bt[i] = quad(&xrow, &kbt, &zrow);
        ing.p_tt[i] = quad(&zrow, &ktt, &zrow);
        if !ctx.mean_linear {
            ing.f[i] = trace_prod(&ctx.xt_i[i], &kbb);
        }
        if !ctx.precision_linear {
            ing.g[i] = trace_prod(&ctx.zt_i[i], &ktt);
        }

        let (mu, phi) = (ctx.mu[i], ctx.phi[i]);
        let (a, b, c, d, e) = (ctx.a[i], ctx.b[i], ctx.c[i], ctx.d[i], ctx.e[i]);
        let (t1, t2, s1, s2) = (ctx.t1[i], ctx.t2[i], ctx.s1[i], ctx.s2[i]);
        let (tq, hq) = (ctx.trigamma_q[i], ctx.tetragamma_q[i]);
        let r = tq - mu * a;
        let phi2 = phi * phi;

        ing.m1[i] = 0.5 * phi2 * (phi * c * t1 * t1 * t1 - a * t1 * s1);
        ing.m2[i] = 0.5 * phi2 * (mu * c - hq) * t1 * t1 * t2 + 0.5 * phi * r * s1 * t2;
        ing.m3[i] = -0.5 * phi * ((2.0 * a + phi * hq - phi * mu * c) * t1 * t1 * t2 + r * s1 * t2);
        ing.m4[i] = 0.5 * ((d * phi + 2.0 * r) * t1 * t2 * t2 - phi * r * t1 * s2);
        ing.m5[i] = 0.5 * phi * (d * t1 * t2 * t2 + r * t1 * s2);
        ing.m6[i] = 0.5 * (e * t2 * t2 * t2 - b * t2 * s2);
        ing.n1[i] = 0.5 * phi2 * a * t1 * t1;
        ing.n2[i] = 0.5 * phi * r * t1 * t2;
        ing.n3[i] = 0.5 * b * t2 * t2;

        let (pbb, pbt, ptt) = (ing.p_bb[i], ing.p_bt[i], ing.p_tt[i]);
        ing.omega1[i] = ing.m1[i] * pbb + (ing.m2[i] + ing.m3[i]) * pbt + ing.m5[i] * ptt;
        ing.omega1[n + i] = ing.m2[i] * pbb + (ing.m4[i] + ing.m5[i]) * pbt + ing.m6[i] * ptt;
        ing.omega2[i] = ing.n2[i] * ing.g[i] - ing.n1[i] * ing.f[i];
        ing.omega2[n + i] = ing.n2[i] * ing.f[i] - ing.n3[i] * ing.g[i];

        let det = w.bb[i] * w.tt[i] - w.bt[i] * w.bt[i];
        if !(det > 0.0 && w.bb[i] > 0.0) {
            return Err(Error::SingularInformation { condition: f64::INFINITY });
        }
        let solve = |top: f64, bot: f64| ((w.tt[i] * top - w.bt[i] * bot) / det, (w.bb[i] * bot - w.bt[i] * top) / det);
        let (x1, y1) = solve(ing.omega1[i], ing.omega1[n + i]);
        let (x2, y2) = solve(ing.omega2[i], ing.omega2[n + i]);
        ing.xi1[i] = x1;
        ing.xi1[n + i] = y1;
        ing.xi2[i] = x2;
        ing.xi2[n + i] = y2;
    }
    Ok(ing)
}

/// Solves the weighted least-squares problem `min |W^{1/2}(P b - xi)|` for
/// several right-hand sides `omega = W xi` through a QR factorization of
/// `W^{1/2} P`, where `W^{1/2}` is the per-observation 2x2 Cholesky factor.
struct WeightedSolver {
    qr_q: DMatrix<f64>,
    qr_r: DMatrix<f64>,
    l11: Vec<f64>,
    l21: Vec<f64>,
    l22: Vec<f64>,
}

impl WeightedSolver {
    fn new(ctx: &EvalContext) -> Result<Self> {
        let (n, k, h) = (ctx.n, ctx.k, ctx.h);
        let w = weights(ctx);
        let mut l11 = vec![0.0; n];
        let mut l21 = vec![0.0; n];
        let mut l22 = vec![0.0; n];
        let mut a = DMatrix::zeros(2 * n, k + h);
        for i in 0..n {
            l11[i] = w.bb[i].sqrt();
            l21[i] = w.bt[i] / l11[i];
            let rest = w.tt[i] - l21[i] * l21[i];
            if !(rest > 0.0 && l11[i] > 0.0) {
                return Err(Error::SingularInformation { condition: f64::INFINITY });
            }
            l22[i] = rest.sqrt();
            for r in 0..k {
                a[(2 * i, r)] = l11[i] * ctx.xt[(i, r)];
            }
            for r in 0..h {
                a[(2 * i, k + r)] = l21[i] * ctx.zt[(i, r)];
                a[(2 * i + 1, k + r)] = l22[i] * ctx.zt[(i, r)];
            }
        }
        // Column equilibration only feeds the condition estimate.
        let mut scaled = a.clone();
        for mut col in scaled.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        let diag = scaled.qr().r().diagonal().map(f64::abs);
        let condition = if diag.min() > 0.0 {
            (diag.max() / diag.min()).powi(2)
        } else {
            f64::INFINITY
        };
        if !(condition <= crate::likelihood::MAX_CONDITION) {
            return Err(Error::SingularInformation { condition });
        }
        let qr = a.qr();
        Ok(WeightedSolver {
            qr_q: qr.q(),
            qr_r: qr.r(),
            l11,
            l21,
            l22,
        })
    }

    fn solve(&self, omega: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.l11.len();
        let mut rhs = DVector::zeros(2 * n);
        for i in 0..n {
            let r1 = omega[i] / self.l11[i];
            rhs[2 * i] = r1;
            rhs[2 * i + 1] = (omega[n + i] - self.l21[i] * r1) / self.l22[i];
        }
        let qtr = self.qr_q.tr_mul(&rhs);
        self.qr_r
            .solve_upper_triangular(&qtr)
            .ok_or(Error::SingularInformation { condition: f64::INFINITY })
    }
}

/// Bias with its two components and the ingredients it was built from.
pub fn cox_snell_parts(ctx: &EvalContext, info: &Information) -> Result<CoxSnellParts> {
    let ing = ingredients(ctx, &info.inverse)?;
    let solver = WeightedSolver::new(ctx)?;
    let b1 = solver.solve(&ing.omega1)?;
    let b2 = if ctx.mean_linear && ctx.precision_linear {
        DVector::zeros(ctx.n_params())
    } else {
        solver.solve(&ing.omega2)?
    };
    let k = ctx.k;
    Ok(CoxSnellParts {
        total: BiasVector { b_zeta: &b1 + &b2, k },
        linear_part: BiasVector { b_zeta: b1, k },
        nonlinear_part: BiasVector { b_zeta: b2, k },
        ingredients: ing,
    })
}

/// Second-order bias of the MLE at the context's parameter value.
pub fn cox_snell_bias(ctx: &EvalContext, info: &Information) -> Result<BiasVector> {
    cox_snell_parts(ctx, info).map(|p| p.total)
}

/// `P^T (omega1 + omega2)`, the additive adjustment of the modified score.
pub fn firth_adjustment(ctx: &EvalContext, ing: &BiasIngredients) -> DVector<f64> {
    let n = ctx.n;
    let omega = &ing.omega1 + &ing.omega2;
    let mut adj = DVector::zeros(ctx.n_params());
    adj.rows_mut(0, ctx.k).copy_from(&ctx.xt.tr_mul(&omega.rows(0, n)));
    adj.rows_mut(ctx.k, ctx.h).copy_from(&ctx.zt.tr_mul(&omega.rows(n, n)));
    adj
}

/// Modified score `U + K B`.
pub fn firth_modified_score(score: &DVector<f64>, info: &DMatrix<f64>, bias: &BiasVector) -> DVector<f64> {
    score + info * &bias.b_zeta
}

/// Joint cumulants of log-likelihood derivatives and derivatives of the
/// second-order cumulants, summed over observations. Parameter indices run
/// over the full vector; indices below `k` are mean parameters.
pub struct Cumulants<'a> {
    ctx: &'a EvalContext,
}

impl<'a> Cumulants<'a> {
    pub fn new(ctx: &'a EvalContext) -> Self {
        Cumulants { ctx }
    }

    fn is_mean(&self, r: usize) -> bool {
        r < self.ctx.k
    }

    fn d1(&self, i: usize, r: usize) -> f64 {
        if self.is_mean(r) {
            self.ctx.xt[(i, r)]
        } else {
            self.ctx.zt[(i, r - self.ctx.k)]
        }
    }

    fn d2(&self, i: usize, r: usize, s: usize) -> f64 {
        let k = self.ctx.k;
        match (self.is_mean(r), self.is_mean(s)) {
            (true, true) => self.ctx.xt_i[i][(r, s)],
            (false, false) => self.ctx.zt_i[i][(r - k, s - k)],
            _ => 0.0,
        }
    }

    /// Second-order cumulant kappa_{rs}.
    pub fn second(&self, r: usize, s: usize) -> f64 {
        let c = self.ctx;
        let (mr, ms) = (self.is_mean(r), self.is_mean(s));
        (0..c.n)
            .map(|i| {
                let (phi, mu, a, b) = (c.phi[i], c.mu[i], c.a[i], c.b[i]);
                let (t1, t2) = (c.t1[i], c.t2[i]);
                let prod = self.d1(i, r) * self.d1(i, s);
                match (mr, ms) {
                    (true, true) => -phi * phi * a * t1 * t1 * prod,
                    (false, false) => -b * t2 * t2 * prod,
                    _ => -phi * (mu * a - c.trigamma_q[i]) * t1 * t2 * prod,
                }
            })
            .sum()
    }

    /// Third-order cumulant kappa_{rsu}, symmetric in its indices.
    pub fn third(&self, r: usize, s: usize, u: usize) -> f64 {
        let mut idx = [r, s, u];
        idx.sort_by_key(|&x| !self.is_mean(x));
        let [r, s, u] = idx;
        let n_prec = idx.iter().filter(|&&x| !self.is_mean(x)).count();
        let c = self.ctx;
        (0..c.n)
            .map(|i| {
                let (phi, mu, a, b, cc, d, e) = (c.phi[i], c.mu[i], c.a[i], c.b[i], c.c[i], c.d[i], c.e[i]);
                let (t1, t2, s1, s2) = (c.t1[i], c.t2[i], c.s1[i], c.s2[i]);
                let (tq, hq) = (c.trigamma_q[i], c.tetragamma_q[i]);
                let triple = self.d1(i, r) * self.d1(i, s) * self.d1(i, u);
                match n_prec {
                    0 => {
                        let sym = self.d2(i, r, s) * self.d1(i, u)
                            + self.d2(i, r, u) * self.d1(i, s)
                            + self.d2(i, s, u) * self.d1(i, r);
                        phi * phi * (phi * cc * t1.powi(3) - 3.0 * a * t1 * s1) * triple
                            - phi * phi * a * t1 * t1 * sym
                    }
                    1 => {
                        -phi * (2.0 * a + phi * hq - phi * mu * cc) * t1 * t1 * t2 * triple
                            + phi * (tq - mu * a) * s1 * t2 * triple
                            + phi * (tq - mu * a) * t1 * t2 * self.d2(i, r, s) * self.d1(i, u)
                    }
                    2 => {
                        (tq - mu * a) * (2.0 * t1 * t2 * t2 + phi * t1 * s2) * triple
                            + phi * d * t1 * t2 * t2 * triple
                            + phi * (tq - mu * a) * t1 * t2 * self.d1(i, r) * self.d2(i, s, u)
                    }
                    _ => {
                        let sym = self.d2(i, r, s) * self.d1(i, u)
                            + self.d2(i, r, u) * self.d1(i, s)
                            + self.d2(i, s, u) * self.d1(i, r);
                        (e * t2.powi(3) - 3.0 * b * s2 * t2) * triple - b * t2 * t2 * sym
                    }
                }
            })
            .sum()
    }

    /// Derivative of kappa_{rs} with respect to parameter `u`.
    pub fn second_derivative(&self, r: usize, s: usize, u: usize) -> f64 {
        let (r, s) = if self.is_mean(s) && !self.is_mean(r) { (s, r) } else { (r, s) };
        let (mr, ms, mu_idx) = (self.is_mean(r), self.is_mean(s), self.is_mean(u));
        let c = self.ctx;
        (0..c.n)
            .map(|i| {
                let (phi, mu, a, b, cc, d, e) = (c.phi[i], c.mu[i], c.a[i], c.b[i], c.c[i], c.d[i], c.e[i]);
                let (t1, t2, s1, s2) = (c.t1[i], c.t2[i], c.s1[i], c.s2[i]);
                let (tq, hq) = (c.trigamma_q[i], c.tetragamma_q[i]);
                let triple = self.d1(i, r) * self.d1(i, s) * self.d1(i, u);
                let ru_s = self.d2(i, r, u) * self.d1(i, s);
                let su_r = self.d2(i, s, u) * self.d1(i, r);
                match (mr, ms, mu_idx) {
                    (true, true, true) => {
                        -phi * phi * (2.0 * a * t1 * s1 - phi * cc * t1.powi(3)) * triple
                            - phi * phi * a * t1 * t1 * (ru_s + su_r)
                    }
                    (true, true, false) => -(phi * phi * (hq - mu * cc) + 2.0 * phi * a) * t1 * t1 * t2 * triple,
                    (false, false, true) => (d * phi + 2.0 * tq - 2.0 * mu * a) * t1 * t2 * t2 * triple,
                    (false, false, false) => {
                        (e * t2.powi(3) - 2.0 * b * t2 * s2) * triple - b * t2 * t2 * (ru_s + su_r)
                    }
                    (true, false, true) => {
                        phi * (phi * mu * cc - hq * phi - a) * t1 * t1 * t2 * triple
                            + phi * (tq - a * mu) * s1 * t2 * triple
                            + phi * (tq - a * mu) * t1 * t2 * ru_s
                    }
                    (true, false, false) => {
                        (tq - a * mu + phi * d) * t1 * t2 * t2 * triple
                            + phi * (tq - a * mu) * t1 * s2 * triple
                            + phi * (tq - a * mu) * t1 * t2 * su_r
                    }
                    (false, true, _) => unreachable!("indices were reordered"),
                }
            })
            .sum()
    }
}

/// Bias from the raw triple sums over cumulants. Intended as an oracle for
/// small models only.
pub fn brute_force_bias(ctx: &EvalContext, info_inv: &DMatrix<f64>) -> Result<BiasVector> {
    let p = ctx.n_params();
    if p > BRUTE_FORCE_MAX_PARAMS {
        return Err(Error::SizeGuard(format!(
            "brute-force bias supports at most {BRUTE_FORCE_MAX_PARAMS} parameters, model has {p}"
        )));
    }
    let cum = Cumulants::new(ctx);
    let mut inner = vec![0.0; p * p * p];
    for r in 0..p {
        for s in 0..p {
            for u in 0..p {
                inner[(r * p + s) * p + u] = cum.second_derivative(r, s, u) - 0.5 * cum.third(r, s, u);
            }
        }
    }
    let mut b = DVector::zeros(p);
    for a in 0..p {
        let mut total = 0.0;
        for r in 0..p {
            for s in 0..p {
                for u in 0..p {
                    total += info_inv[(a, r)] * info_inv[(s, u)] * inner[(r * p + s) * p + u];
                }
            }
        }
        b[a] = total;
    }
    Ok(BiasVector { b_zeta: b, k: ctx.k })
}

/// Information recomputed from the cumulants, for cross-checks.
pub fn information_from_cumulants(ctx: &EvalContext) -> DMatrix<f64> {
    let cum = Cumulants::new(ctx);
    let p = ctx.n_params();
    DMatrix::from_fn(p, p, |r, s| -cum.second(r, s))
}
