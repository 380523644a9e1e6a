//! Model definition, data, and the likelihood quantities built on them:
//! log-likelihood, score, weight blocks and expected information.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::formula::{DerivOrder, EvalBuffer, Formula};
use crate::links::{MeanLink, PrecisionLink};
use crate::special_fn::{digamma, tetragamma, tetragamma_tail, trigamma, trigamma_tail};

/// Largest accepted condition number of the scaled information matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Mean and precision submodels. Mean parameters come first in every
/// parameter vector, followed by the precision parameters.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub mean_link: MeanLink,
    pub precision_link: PrecisionLink,
    pub mean: Formula,
    pub precision: Formula,
}

impl ModelSpec {
    pub fn new(mean_link: MeanLink, mean: Formula, precision_link: PrecisionLink, precision: Formula) -> Result<Self> {
        if let Some(dup) = mean.params().iter().find(|p| precision.params().contains(p)) {
            return Err(Error::InvalidModel(format!(
                "parameter '{dup}' appears in both the mean and the precision formula"
            )));
        }
        Ok(ModelSpec {
            mean_link,
            precision_link,
            mean,
            precision,
        })
    }

    /// Number of mean parameters.
    pub fn k(&self) -> usize {
        self.mean.n_params()
    }

    /// Number of precision parameters.
    pub fn h(&self) -> usize {
        self.precision.n_params()
    }

    pub fn n_params(&self) -> usize {
        self.k() + self.h()
    }

    pub fn param_names(&self) -> Vec<String> {
        self.mean
            .params()
            .iter()
            .chain(self.precision.params())
            .cloned()
            .collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names().iter().position(|p| p == name)
    }

    pub fn is_linear(&self) -> bool {
        self.mean.is_linear() && self.precision.is_linear()
    }

    /// The model obtained by holding the named parameters at fixed values.
    pub fn restrict(&self, fixed: &[(String, f64)]) -> Result<ModelSpec> {
        let names = self.param_names();
        for (name, _) in fixed {
            if !names.contains(name) {
                return Err(Error::NotNested(format!("'{name}' is not a parameter of the model")));
            }
        }
        ModelSpec::new(
            self.mean_link,
            self.mean.fix_params(fixed)?,
            self.precision_link,
            self.precision.fix_params(fixed)?,
        )
    }
}

/// Responses in (0,1) together with named covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidData("dataset has no observations".into()));
        }
        for (row, &value) in y.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::ResponseOutOfRange { row: row + 1, value });
            }
        }
        let mut names = Vec::with_capacity(columns.len());
        let mut cols = Vec::with_capacity(columns.len());
        for (name, col) in columns {
            if col.len() != y.len() {
                return Err(Error::InvalidData(format!(
                    "column '{name}' has {} values, expected {}",
                    col.len(),
                    y.len()
                )));
            }
            if names.contains(&name) {
                return Err(Error::InvalidData(format!("column '{name}' appears twice")));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "column '{name}' has a non-finite value at row {row}"
                )));
            }
            names.push(name);
            cols.push(col);
        }
        Ok(Dataset {
            y,
            names,
            columns: cols,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.columns[j].as_slice())
    }

    /// Same covariates with a new response vector.
    pub fn with_response(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(y, self.names.iter().cloned().zip(self.columns.iter().cloned()).collect())
    }

    /// Rows selected by index, repeats allowed.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }
}

/// Everything the score, information and bias formulas need at one parameter
/// value. Vectors are indexed by observation.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub n: usize,
    pub k: usize,
    pub h: usize,
    pub mean_linear: bool,
    pub precision_linear: bool,
    pub eta1: DVector<f64>,
    pub eta2: DVector<f64>,
    pub mu: DVector<f64>,
    pub one_minus_mu: DVector<f64>,
    pub phi: DVector<f64>,
    /// logit of the response.
    pub ystar: DVector<f64>,
    /// Expected value of `ystar`.
    pub mustar: DVector<f64>,
    /// Per-observation precision score factor.
    pub v: DVector<f64>,
    /// d eta1 / d beta, n x k.
    pub xt: DMatrix<f64>,
    /// d eta2 / d theta, n x h.
    pub zt: DMatrix<f64>,
    /// Per-observation Hessians of eta1 in beta.
    pub xt_i: Vec<DMatrix<f64>>,
    /// Per-observation Hessians of eta2 in theta.
    pub zt_i: Vec<DMatrix<f64>>,
    /// dmu/deta1.
    pub t1: DVector<f64>,
    /// dphi/deta2.
    pub t2: DVector<f64>,
    /// d2mu/deta1^2.
    pub s1: DVector<f64>,
    /// d2phi/deta2^2.
    pub s2: DVector<f64>,
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: DVector<f64>,
    pub e: DVector<f64>,
    /// trigamma((1 - mu) phi).
    pub trigamma_q: DVector<f64>,
    /// tetragamma((1 - mu) phi).
    pub tetragamma_q: DVector<f64>,
}

impl EvalContext {
    pub fn n_params(&self) -> usize {
        self.k + self.h
    }
}

/// Per-observation entries of the 2x2 weight blocks in predictor space.
#[derive(Debug, Clone)]
pub struct WeightBlocks {
    pub bb: DVector<f64>,
    pub bt: DVector<f64>,
    pub tt: DVector<f64>,
}

/// Expected information with its inverse.
#[derive(Debug, Clone)]
pub struct Information {
    pub k: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    /// Condition number after scaling to unit diagonal.
    pub condition: f64,
}

/// A model bound to a dataset with reusable evaluation buffers.
#[derive(Debug, Clone)]
pub struct BoundModel<'a> {
    spec: &'a ModelSpec,
    n: usize,
    mean_rows: Vec<f64>,
    prec_rows: Vec<f64>,
    log_y: Vec<f64>,
    log_1my: Vec<f64>,
    mean_buf: EvalBuffer,
    prec_buf: EvalBuffer,
}

fn gather_rows(formula: &Formula, data: &Dataset) -> Result<Vec<f64>> {
    let cols: Vec<&[f64]> = formula
        .covariates()
        .iter()
        .map(|name| {
            data.column(name)
                .ok_or_else(|| Error::InvalidData(format!("unknown column '{name}'")))
        })
        .collect::<Result<_>>()?;
    let q = cols.len();
    let mut rows = vec![0.0; data.n() * q];
    for (j, col) in cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            rows[i * q + j] = x;
        }
    }
    Ok(rows)
}

struct Point {
    eta1: f64,
    eta2: f64,
    mu: f64,
    one_minus_mu: f64,
    phi: f64,
    t1: f64,
    t2: f64,
    s1: f64,
    s2: f64,
}

impl<'a> BoundModel<'a> {
    pub fn new(spec: &'a ModelSpec, data: &Dataset) -> Result<Self> {
        Ok(BoundModel {
            spec,
            n: data.n(),
            mean_rows: gather_rows(&spec.mean, data)?,
            prec_rows: gather_rows(&spec.precision, data)?,
            log_y: data.y().iter().map(|y| y.ln()).collect(),
            log_1my: data.y().iter().map(|y| (-y).ln_1p()).collect(),
            mean_buf: spec.mean.buffer(),
            prec_buf: spec.precision.buffer(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn check_len(&self, zeta: &[f64]) -> Result<()> {
        if zeta.len() != self.spec.n_params() {
            return Err(Error::InvalidModel(format!(
                "expected {} parameters, got {}",
                self.spec.n_params(),
                zeta.len()
            )));
        }
        Ok(())
    }

    fn point(&mut self, i: usize, zeta: &[f64], order: DerivOrder) -> Result<Point> {
        let spec = self.spec;
        let k = spec.k();
        let q1 = spec.mean.covariates().len();
        let q2 = spec.precision.covariates().len();
        let wrap = |e: Error| Error::LinkDomain {
            obs: i,
            detail: e.to_string(),
        };
        let eta1 = spec
            .mean
            .eval_into(&mut self.mean_buf, &zeta[..k], &self.mean_rows[i * q1..(i + 1) * q1], order)
            .map_err(wrap)?;
        let eta2 = spec
            .precision
            .eval_into(&mut self.prec_buf, &zeta[k..], &self.prec_rows[i * q2..(i + 1) * q2], order)
            .map_err(wrap)?;
        let m = spec.mean_link.eval(eta1).map_err(wrap)?;
        let p = spec.precision_link.eval(eta2).map_err(wrap)?;
        Ok(Point {
            eta1,
            eta2,
            mu: m.mu,
            one_minus_mu: m.one_minus_mu,
            phi: p.phi,
            t1: m.d1,
            t2: p.d1,
            s1: m.d2,
            s2: p.d2,
        })
    }

    /// Predictor values, means and precisions without derivatives.
    pub fn fitted(&mut self, zeta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(zeta)?;
        let mut mu = Vec::with_capacity(self.n);
        let mut phi = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let pt = self.point(i, zeta, DerivOrder::Value)?;
            mu.push(pt.mu);
            phi.push(pt.phi);
        }
        Ok((mu, phi))
    }

    /// Log-likelihood, and its gradient when requested, without building a
    /// full context. This is the optimizer's inner loop.
    pub fn loglik_and_score(&mut self, zeta: &[f64], want_score: bool) -> Result<(f64, Vec<f64>)> {
        self.check_len(zeta)?;
        let k = self.spec.k();
        let np = self.spec.n_params();
        let order = if want_score {
            DerivOrder::First
        } else {
            DerivOrder::Value
        };
        let mut ll = 0.0;
        let mut score = vec![0.0; if want_score { np } else { 0 }];
        for i in 0..self.n {
            let pt = self.point(i, zeta, order)?;
            let (pa, qa) = (pt.mu * pt.phi, pt.one_minus_mu * pt.phi);
            let dom = |e: Error| Error::LinkDomain {
                obs: i,
                detail: e.to_string(),
            };
            if pa < crate::special_fn::MIN_ARGUMENT || qa < crate::special_fn::MIN_ARGUMENT {
                return Err(dom(Error::Domain(format!("shape parameters ({pa}, {qa}) underflow"))));
            }
            ll += ln_gamma(pt.phi) - ln_gamma(pa) - ln_gamma(qa)
                + (pa - 1.0) * self.log_y[i]
                + (qa - 1.0) * self.log_1my[i];
            if want_score {
                let psi_p = digamma(pa).map_err(dom)?;
                let psi_q = digamma(qa).map_err(dom)?;
                let psi_phi = digamma(pt.phi).map_err(dom)?;
                let ystar = self.log_y[i] - self.log_1my[i];
                let mustar = psi_p - psi_q;
                let u1 = pt.phi * pt.t1 * (ystar - mustar);
                let v = pt.mu * (ystar - mustar) + self.log_1my[i] - psi_q + psi_phi;
                let u2 = pt.t2 * v;
                for (r, g) in self.mean_buf.grad().iter().enumerate() {
                    score[r] += u1 * g;
                }
                for (r, g) in self.prec_buf.grad().iter().enumerate() {
                    score[k + r] += u2 * g;
                }
            }
        }
        if !ll.is_finite() {
            return Err(Error::Domain("log-likelihood is not finite".into()));
        }
        Ok((ll, score))
    }

    /// Full evaluation context at `zeta`.
    pub fn context(&mut self, zeta: &[f64]) -> Result<EvalContext> {
        self.check_len(zeta)?;
        let (n, k, h) = (self.n, self.spec.k(), self.spec.h());
        let z = || DVector::<f64>::zeros(n);
        let mut ctx = EvalContext {
            n,
            k,
            h,
            mean_linear: self.spec.mean.is_linear(),
            precision_linear: self.spec.precision.is_linear(),
            eta1: z(),
            eta2: z(),
            mu: z(),
            one_minus_mu: z(),
            phi: z(),
            ystar: z(),
            mustar: z(),
            v: z(),
            xt: DMatrix::zeros(n, k),
            zt: DMatrix::zeros(n, h),
            xt_i: Vec::with_capacity(n),
            zt_i: Vec::with_capacity(n),
            t1: z(),
            t2: z(),
            s1: z(),
            s2: z(),
            a: z(),
            b: z(),
            c: z(),
            d: z(),
            e: z(),
            trigamma_q: z(),
            tetragamma_q: z(),
        };
        for i in 0..n {
            let pt = self.point(i, zeta, DerivOrder::Second)?;
            let dom = |e: Error| Error::LinkDomain {
                obs: i,
                detail: e.to_string(),
            };
            for (r, g) in self.mean_buf.grad().iter().enumerate() {
                ctx.xt[(i, r)] = *g;
            }
            for (r, g) in self.prec_buf.grad().iter().enumerate() {
                ctx.zt[(i, r)] = *g;
            }
            ctx.xt_i.push(DMatrix::from_row_slice(k, k, self.mean_buf.hess()));
            ctx.zt_i.push(DMatrix::from_row_slice(h, h, self.prec_buf.hess()));

            let (mu, mc, phi) = (pt.mu, pt.one_minus_mu, pt.phi);
            let (pa, qa) = (mu * phi, mc * phi);
            let psi_p = digamma(pa).map_err(dom)?;
            let psi_q = digamma(qa).map_err(dom)?;
            let psi_phi = digamma(phi).map_err(dom)?;
            let tri_p = trigamma(pa).map_err(dom)?;
            let tri_q = trigamma(qa).map_err(dom)?;
            let tet_p = tetragamma(pa).map_err(dom)?;
            let tet_q = tetragamma(qa).map_err(dom)?;

            let ystar = self.log_y[i] - self.log_1my[i];
            let mustar = psi_p - psi_q;
            ctx.eta1[i] = pt.eta1;
            ctx.eta2[i] = pt.eta2;
            ctx.mu[i] = mu;
            ctx.one_minus_mu[i] = mc;
            ctx.phi[i] = phi;
            ctx.ystar[i] = ystar;
            ctx.mustar[i] = mustar;
            ctx.v[i] = mu * (ystar - mustar) + self.log_1my[i] - psi_q + psi_phi;
            ctx.t1[i] = pt.t1;
            ctx.t2[i] = pt.t2;
            ctx.s1[i] = pt.s1;
            ctx.s2[i] = pt.s2;
            ctx.a[i] = tri_q + tri_p;
            // The leading asymptotic terms of these combinations cancel
            // exactly; summing only the tails keeps precision at large phi.
            let (rt_p, rt_q, rt_phi) = (trigamma_tail(pa).map_err(dom)?, trigamma_tail(qa).map_err(dom)?, trigamma_tail(phi).map_err(dom)?);
            let (rc_p, rc_q, rc_phi) = (tetragamma_tail(pa).map_err(dom)?, tetragamma_tail(qa).map_err(dom)?, tetragamma_tail(phi).map_err(dom)?);
            let phi3 = phi * phi * phi;
            ctx.b[i] = rt_q * mc * mc + rt_p * mu * mu - rt_phi + 0.5 / (phi * phi);
            ctx.c[i] = tet_q - tet_p;
            ctx.d[i] = rc_q * mc * mc - rc_p * mu * mu + (mc - mu) / (mu * mc * phi3);
            ctx.e[i] = rc_phi - rc_p * mu * mu * mu - rc_q * mc * mc * mc + 1.0 / phi3;
            ctx.trigamma_q[i] = tri_q;
            ctx.tetragamma_q[i] = tet_q;
            if !(ctx.a[i] > 0.0 && ctx.b[i] > 0.0) {
                return Err(dom(Error::Domain(format!(
                    "information weights are not positive (mu = {mu}, phi = {phi})"
                ))));
            }
        }
        Ok(ctx)
    }

    /// Log-likelihood at `zeta`.
    pub fn loglik(&mut self, zeta: &[f64]) -> Result<f64> {
        self.loglik_and_score(zeta, false).map(|(ll, _)| ll)
    }
}

/// Evaluation context of `spec` on `data` at `zeta`.
pub fn build_context(spec: &ModelSpec, data: &Dataset, zeta: &[f64]) -> Result<EvalContext> {
    BoundModel::new(spec, data)?.context(zeta)
}

/// Sum of beta log-densities of the responses at the context's means and precisions.
pub fn loglik(ctx: &EvalContext, data: &Dataset) -> Result<f64> {
    if data.n() != ctx.n {
        return Err(Error::InvalidData("context and dataset sizes differ".into()));
    }
    let mut ll = 0.0;
    for (i, &y) in data.y().iter().enumerate() {
        let (phi, pa, qa) = (ctx.phi[i], ctx.mu[i] * ctx.phi[i], ctx.one_minus_mu[i] * ctx.phi[i]);
        ll += ln_gamma(phi) - ln_gamma(pa) - ln_gamma(qa) + (pa - 1.0) * y.ln() + (qa - 1.0) * (-y).ln_1p();
    }
    Ok(ll)
}

/// Score vector, mean block first.
pub fn score(ctx: &EvalContext) -> DVector<f64> {
    let u1 = ctx.phi.component_mul(&ctx.t1).component_mul(&(&ctx.ystar - &ctx.mustar));
    let u2 = ctx.t2.component_mul(&ctx.v);
    let mut u = DVector::zeros(ctx.n_params());
    u.rows_mut(0, ctx.k).copy_from(&ctx.xt.tr_mul(&u1));
    u.rows_mut(ctx.k, ctx.h).copy_from(&ctx.zt.tr_mul(&u2));
    u
}

/// Diagonal entries of the weight blocks W_bb, W_bt and W_tt.
pub fn weights(ctx: &EvalContext) -> WeightBlocks {
    let n = ctx.n;
    let mut w = WeightBlocks {
        bb: DVector::zeros(n),
        bt: DVector::zeros(n),
        tt: DVector::zeros(n),
    };
    for i in 0..n {
        let (phi, t1, t2) = (ctx.phi[i], ctx.t1[i], ctx.t2[i]);
        w.bb[i] = phi * phi * ctx.a[i] * t1 * t1;
        w.bt[i] = phi * (ctx.mu[i] * ctx.a[i] - ctx.trigamma_q[i]) * t1 * t2;
        w.tt[i] = ctx.b[i] * t2 * t2;
    }
    w
}

/// The information matrix assembled block by block from the weights.
pub fn information_matrix(ctx: &EvalContext) -> DMatrix<f64> {
    let w = weights(ctx);
    let (k, h) = (ctx.k, ctx.h);
    let mut m = DMatrix::zeros(k + h, k + h);
    let scale_rows = |x: &DMatrix<f64>, d: &DVector<f64>| {
        let mut y = x.clone();
        for (i, mut row) in y.row_iter_mut().enumerate() {
            row *= d[i];
        }
        y
    };
    let kbb = ctx.xt.tr_mul(&scale_rows(&ctx.xt, &w.bb));
    let kbt = ctx.xt.tr_mul(&scale_rows(&ctx.zt, &w.bt));
    let ktt = ctx.zt.tr_mul(&scale_rows(&ctx.zt, &w.tt));
    // Products of the form A'DA are not bitwise symmetric once blocked.
    let kbb = (&kbb + kbb.transpose()) * 0.5;
    let ktt = (&ktt + ktt.transpose()) * 0.5;
    m.view_mut((0, 0), (k, k)).copy_from(&kbb);
    m.view_mut((0, k), (k, h)).copy_from(&kbt);
    m.view_mut((k, 0), (h, k)).copy_from(&kbt.transpose());
    m.view_mut((k, k), (h, h)).copy_from(&ktt);
    m
}

/// Invert a symmetric positive definite matrix after scaling it to unit
/// diagonal, rejecting it when the scaled condition number exceeds
/// [`MAX_CONDITION`].
pub fn invert_spd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let p = m.nrows();
    if p == 0 {
        return Ok((DMatrix::zeros(0, 0), 1.0));
    }
    let mut scale = DVector::zeros(p);
    for i in 0..p {
        let d = m[(i, i)];
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::SingularInformation {
                condition: f64::INFINITY,
            });
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| m[(i, j)] * scale[i] * scale[j]);
    let eig = scaled.clone().symmetric_eigen();
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularInformation { condition });
    }
    let chol = scaled.cholesky().ok_or(Error::SingularInformation { condition })?;
    let inv_scaled = chol.inverse();
    let inv = DMatrix::from_fn(p, p, |i, j| inv_scaled[(i, j)] * scale[i] * scale[j]);
    Ok((inv, condition))
}

/// Expected information and its inverse.
pub fn information(ctx: &EvalContext) -> Result<Information> {
    let k = information_matrix(ctx);
    let (inverse, condition) = invert_spd(&k)?;
    Ok(Information { k, inverse, condition })
}
