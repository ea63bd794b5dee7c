//! Nonlinear least-squares estimation of model parameters from transmission
//! magnitude traces, with covariance-based uncertainties, plus a batch mode
//! for families of scenarios.
//!
//! Residuals are taken in dB magnitude with per-sample weights (phase is
//! deliberately not part of the objective). Rates are fitted through a log
//! parameterization so positivity needs no constrained solver; mode
//! frequencies stay linear.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::FitError;
use crate::model::{FieldPoint, SystemModel};
use crate::numerics::ScatteringKernel;
use crate::sweep::SElem;
use crate::traces::DbTrace;

// ---------------------------------------------------------------------------
// Parameter handles
// ---------------------------------------------------------------------------

/// A fittable scalar of the model. Ties are expressed as one shared handle:
/// `ExternalRateTied(u)` drives both port rates of mode `u` together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ParamHandle {
    /// Mode frequency `f_c[u]` in GHz (linear parameterization).
    ModeFrequency(usize),
    /// Internal dissipation rate `gamma_int[u]` in MHz (log parameterization).
    InternalRate(usize),
    /// One port's external rate `gamma_ext[u][p]` in MHz (log).
    ExternalRate(usize, usize),
    /// Both ports' external rates of mode `u`, tied equal, in MHz (log).
    ExternalRateTied(usize),
}

impl ParamHandle {
    /// Rates are fitted in log space; frequencies linearly.
    pub fn is_rate(self) -> bool {
        !matches!(self, ParamHandle::ModeFrequency(_))
    }

    fn read(self, model: &SystemModel) -> Result<f64, FitError> {
        let unknown = || FitError::UnknownHandle(self.to_string());
        match self {
            ParamHandle::ModeFrequency(u) => {
                Ok(model.cavity_modes.get(u).ok_or_else(unknown)?.f_ghz)
            }
            ParamHandle::InternalRate(u) => Ok(model
                .cavity_modes
                .get(u)
                .ok_or_else(unknown)?
                .gamma_int_mhz),
            ParamHandle::ExternalRate(u, p) => {
                if p > 1 {
                    return Err(unknown());
                }
                Ok(model.cavity_modes.get(u).ok_or_else(unknown)?.gamma_ext_mhz[p])
            }
            ParamHandle::ExternalRateTied(u) => Ok(model
                .cavity_modes
                .get(u)
                .ok_or_else(unknown)?
                .gamma_ext_mhz[0]),
        }
    }

    fn write(self, model: &mut SystemModel, value: f64) -> Result<(), FitError> {
        let unknown = || FitError::UnknownHandle(self.to_string());
        match self {
            ParamHandle::ModeFrequency(u) => {
                model.cavity_modes.get_mut(u).ok_or_else(unknown)?.f_ghz = value;
            }
            ParamHandle::InternalRate(u) => {
                model
                    .cavity_modes
                    .get_mut(u)
                    .ok_or_else(unknown)?
                    .gamma_int_mhz = value;
            }
            ParamHandle::ExternalRate(u, p) => {
                if p > 1 {
                    return Err(unknown());
                }
                model
                    .cavity_modes
                    .get_mut(u)
                    .ok_or_else(unknown)?
                    .gamma_ext_mhz[p] = value;
            }
            ParamHandle::ExternalRateTied(u) => {
                let mode = model.cavity_modes.get_mut(u).ok_or_else(unknown)?;
                mode.gamma_ext_mhz[0] = value;
                mode.gamma_ext_mhz[1] = value;
            }
        }
        Ok(())
    }
}

impl fmt::Display for ParamHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamHandle::ModeFrequency(u) => write!(f, "f_c[{u}]"),
            ParamHandle::InternalRate(u) => write!(f, "gamma_int[{u}]"),
            ParamHandle::ExternalRate(u, p) => write!(f, "gamma_ext[{u}][{p}]"),
            ParamHandle::ExternalRateTied(u) => write!(f, "gamma_ext_tied[{u}]"),
        }
    }
}

impl FromStr for ParamHandle {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Self, FitError> {
        let bad = || FitError::UnknownHandle(s.to_string());
        let indices: Vec<usize> = s
            .split(|c| c == '[' || c == ']')
            .filter(|t| !t.is_empty() && t.chars().all(|c| c.is_ascii_digit()))
            .map(|t| t.parse().unwrap())
            .collect();
        let name = s.split('[').next().unwrap_or("");
        match (name, indices.as_slice()) {
            ("f_c", [u]) => Ok(ParamHandle::ModeFrequency(*u)),
            ("gamma_int", [u]) => Ok(ParamHandle::InternalRate(*u)),
            ("gamma_ext", [u, p]) => Ok(ParamHandle::ExternalRate(*u, *p)),
            ("gamma_ext_tied", [u]) => Ok(ParamHandle::ExternalRateTied(*u)),
            _ => Err(bad()),
        }
    }
}

/// One free parameter with bounds (original units). Bounds are validated at
/// the start point only; positivity during iteration comes from the log
/// parameterization of rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeParam {
    pub handle: ParamHandle,
    pub lower: f64,
    pub upper: f64,
}

impl FreeParam {
    /// Default bounds: rates in (0, +inf), frequencies unbounded.
    pub fn new(handle: ParamHandle) -> Self {
        if handle.is_rate() {
            Self {
                handle,
                lower: 0.0,
                upper: f64::INFINITY,
            }
        } else {
            Self {
                handle,
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
            }
        }
    }

    pub fn with_bounds(handle: ParamHandle, lower: f64, upper: f64) -> Self {
        Self {
            handle,
            lower,
            upper,
        }
    }
}

// ---------------------------------------------------------------------------
// Fit problem and result
// ---------------------------------------------------------------------------

/// One trace-fitting problem: the base model supplies the fixed parameters
/// and the initial values of the free ones.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub base: SystemModel,
    pub field: FieldPoint,
    pub observed: DbTrace,
    pub free: Vec<FreeParam>,
    /// Per-sample weights; `None` means unit weights.
    pub weights: Option<Vec<f64>>,
}

/// Fit outcome. `covariance` is `residual_variance * (J^T W J)^{-1}` in the
/// original parameter units; `residual_history` is the weighted sum of
/// squared dB residuals after each accepted step (non-increasing). With
/// uniformly doubled weights, estimates are unchanged and — because the
/// residual variance doubles while `(J^T W J)^{-1}` halves — the covariance
/// is unchanged too.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub param_names: Vec<String>,
    /// Estimates in original units (GHz for frequencies, MHz for rates).
    pub estimates: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// sqrt of the final weighted sum of squared residuals (dB).
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
}

/// Synthesize the dB transmission trace of a model on a frequency axis.
pub fn model_db_trace(
    model: &SystemModel,
    field: FieldPoint,
    f_ghz: &[f64],
) -> Result<DbTrace, FitError> {
    let kernel = ScatteringKernel::new(model, field)
        .map_err(|e| FitError::Evaluation(e.to_string()))?;
    let mut s21_db = Vec::with_capacity(f_ghz.len());
    for (i, &f) in f_ghz.iter().enumerate() {
        let db = match kernel.evaluate(f) {
            Ok(s) => 20.0 * s[SElem::S21.index()].norm().log10(),
            Err(_) => f64::NAN,
        };
        if !db.is_finite() {
            return Err(FitError::NonFiniteResidual { sample: i, f_ghz: f });
        }
        s21_db.push(db);
    }
    Ok(DbTrace {
        f_ghz: f_ghz.to_vec(),
        s21_db,
    })
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt core
// ---------------------------------------------------------------------------

struct Objective<'a> {
    problem: &'a FitProblem,
    weights: Vec<f64>,
}

impl<'a> Objective<'a> {
    /// Map internal coordinates (log for rates) to original units.
    fn to_original(&self, p: &[f64]) -> Vec<f64> {
        self.problem
            .free
            .iter()
            .zip(p)
            .map(|(fp, &v)| if fp.handle.is_rate() { v.exp() } else { v })
            .collect()
    }

    fn residuals(&self, p: &[f64]) -> Result<Vec<f64>, FitError> {
        let orig = self.to_original(p);
        let mut model = self.problem.base.clone();
        for (fp, &v) in self.problem.free.iter().zip(&orig) {
            fp.handle.write(&mut model, v)?;
        }
        let trace = model_db_trace(&model, self.problem.field, &self.problem.observed.f_ghz)?;
        Ok(trace
            .s21_db
            .iter()
            .zip(&self.problem.observed.s21_db)
            .map(|(m, o)| m - o)
            .collect())
    }

    fn cost(&self, r: &[f64]) -> f64 {
        r.iter().zip(&self.weights).map(|(ri, wi)| wi * ri * ri).sum()
    }

    fn jacobian(&self, p: &[f64], r0: &[f64]) -> Result<Vec<Vec<f64>>, FitError> {
        let n = p.len();
        let m = r0.len();
        let mut cols = Vec::with_capacity(n);
        for j in 0..n {
            let h = 1e-6 * p[j].abs().max(1.0);
            let mut pj = p.to_vec();
            pj[j] += h;
            let rj = self.residuals(&pj)?;
            let col: Vec<f64> = (0..m).map(|i| (rj[i] - r0[i]) / h).collect();
            cols.push(col);
        }
        Ok(cols)
    }
}

/// Solve the symmetric system `M x = b` by Gaussian elimination with partial
/// pivoting; a vanishing pivot in column `k` names free parameter `k` as
/// unidentifiable.
fn solve_sym(
    m: &[Vec<f64>],
    b: &[f64],
    names: &[String],
) -> Result<Vec<f64>, FitError> {
    let n = b.len();
    let mut a: Vec<Vec<f64>> = m.iter().cloned().collect();
    let mut x = b.to_vec();
    let scale = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for k in 0..n {
        let mut piv = k;
        for i in k + 1..n {
            if a[i][k].abs() > a[piv][k].abs() {
                piv = i;
            }
        }
        if a[piv][k].abs() <= 1e-12 * scale {
            return Err(FitError::RankDeficient(names[k].clone()));
        }
        a.swap(k, piv);
        x.swap(k, piv);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in i + 1..n {
            acc -= a[i][j] * x[j];
        }
        x[i] = acc / a[i][i];
    }
    Ok(x)
}

/// Invert a symmetric matrix by Gauss-Jordan elimination with partial
/// pivoting, reporting the pivot column on rank deficiency.
fn invert_sym(m: &[Vec<f64>], names: &[String]) -> Result<Vec<Vec<f64>>, FitError> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.iter().cloned().collect();
    let mut inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    let scale = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for k in 0..n {
        let mut piv = k;
        for i in k + 1..n {
            if a[i][k].abs() > a[piv][k].abs() {
                piv = i;
            }
        }
        if a[piv][k].abs() <= 1e-12 * scale {
            return Err(FitError::RankDeficient(names[k].clone()));
        }
        a.swap(k, piv);
        inv.swap(k, piv);
        let d = a[k][k];
        for j in 0..n {
            a[k][j] /= d;
            inv[k][j] /= d;
        }
        for i in 0..n {
            if i == k {
                continue;
            }
            let f = a[i][k];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[i][j] -= f * a[k][j];
                inv[i][j] -= f * inv[k][j];
            }
        }
    }
    Ok(inv)
}

fn normal_equations(
    jac: &[Vec<f64>],
    r: &[f64],
    w: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = jac.len();
    let mut h = vec![vec![0.0; n]; n];
    let mut g = vec![0.0; n];
    for a in 0..n {
        for b in a..n {
            let mut acc = 0.0;
            for i in 0..r.len() {
                acc += w[i] * jac[a][i] * jac[b][i];
            }
            h[a][b] = acc;
            h[b][a] = acc;
        }
        let mut acc = 0.0;
        for i in 0..r.len() {
            acc += w[i] * jac[a][i] * r[i];
        }
        g[a] = acc;
    }
    (h, g)
}

/// Fit the free parameters by damped least squares (Levenberg-Marquardt with
/// gain-ratio-adaptive damping). The Jacobian is taken by forward finite
/// differences with a 1e-6 relative step; iteration stops when the gradient
/// infinity-norm falls below 1e-8, the step norm below 1e-10, or after 500
/// iterations.
pub fn levenberg_marquardt(problem: &FitProblem) -> Result<FitResult, FitError> {
    if problem.free.is_empty() {
        return Err(FitError::NoFreeParameters);
    }
    let m = problem.observed.f_ghz.len();
    if m == 0 {
        return Err(FitError::NoObservations);
    }
    problem.base.validate()?;
    let weights = match &problem.weights {
        Some(w) => {
            if w.len() != m {
                return Err(FitError::WeightLengthMismatch {
                    got: w.len(),
                    expected: m,
                });
            }
            w.clone()
        }
        None => vec![1.0; m],
    };
    let names: Vec<String> = problem.free.iter().map(|f| f.handle.to_string()).collect();

    // Start point, bound checks, internal coordinates.
    let mut p = Vec::with_capacity(problem.free.len());
    for fp in &problem.free {
        if !(fp.lower < fp.upper) {
            return Err(FitError::BadBounds(fp.handle.to_string()));
        }
        let v0 = fp.handle.read(&problem.base)?;
        if v0 < fp.lower || v0 > fp.upper || (fp.handle.is_rate() && v0 <= 0.0) {
            return Err(FitError::StartOutOfBounds {
                param: fp.handle.to_string(),
                value: v0,
                lower: if fp.handle.is_rate() {
                    fp.lower.max(f64::MIN_POSITIVE)
                } else {
                    fp.lower
                },
                upper: fp.upper,
            });
        }
        p.push(if fp.handle.is_rate() { v0.ln() } else { v0 });
    }

    let obj = Objective { problem, weights };
    let mut r = obj.residuals(&p)?;
    let mut cost = obj.cost(&r);
    let mut jac = obj.jacobian(&p, &r)?;
    let (mut h, mut g) = normal_equations(&jac, &r, &obj.weights);

    let max_diag = h
        .iter()
        .enumerate()
        .map(|(i, row)| row[i])
        .fold(0.0, f64::max);
    let mut lambda = 1e-3 * max_diag.max(f64::MIN_POSITIVE);
    let mut nu = 2.0;
    let mut history = vec![cost];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < 500 {
        iterations += 1;
        let gnorm = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gnorm < 1e-8 {
            converged = true;
            break;
        }
        let n = p.len();
        let mut damped = h.clone();
        for (i, row) in damped.iter_mut().enumerate().take(n) {
            row[i] += lambda;
        }
        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let delta = match solve_sym(&damped, &neg_g, &names) {
            Ok(d) => d,
            Err(_) => {
                lambda *= nu;
                nu *= 2.0;
                continue;
            }
        };
        let step_norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        if step_norm < 1e-10 {
            converged = true;
            break;
        }
        let p_new: Vec<f64> = p.iter().zip(&delta).map(|(a, d)| a + d).collect();
        let r_new = obj.residuals(&p_new)?;
        let cost_new = obj.cost(&r_new);
        let predicted: f64 = delta
            .iter()
            .zip(&g)
            .map(|(d, gi)| d * (lambda * d - gi))
            .sum();
        let rho = if predicted > 0.0 {
            (cost - cost_new) / predicted
        } else {
            -1.0
        };
        if rho > 0.0 && cost_new.is_finite() {
            p = p_new;
            r = r_new;
            cost = cost_new;
            history.push(cost);
            jac = obj.jacobian(&p, &r)?;
            let (h2, g2) = normal_equations(&jac, &r, &obj.weights);
            h = h2;
            g = g2;
            lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
        } else {
            lambda *= nu;
            nu *= 2.0;
        }
    }

    // Covariance at the final point, mapped back to original units.
    let estimates = obj.to_original(&p);
    let h_inv = invert_sym(&h, &names)?;
    let dof = m.saturating_sub(p.len()).max(1) as f64;
    let variance = cost / dof;
    let n = p.len();
    let mut covariance = vec![vec![0.0; n]; n];
    for i in 0..n {
        let si = if problem.free[i].handle.is_rate() {
            estimates[i]
        } else {
            1.0
        };
        for j in 0..n {
            let sj = if problem.free[j].handle.is_rate() {
                estimates[j]
            } else {
                1.0
            };
            covariance[i][j] = variance * h_inv[i][j] * si * sj;
        }
    }
    let std_errors = (0..n).map(|i| covariance[i][i].max(0.0).sqrt()).collect();

    Ok(FitResult {
        param_names: names,
        estimates,
        std_errors,
        covariance,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
        residual_history: history,
    })
}

// ---------------------------------------------------------------------------
// Batch mode
// ---------------------------------------------------------------------------

/// Batch outcome: per-scenario results (failures isolated), the parameter
/// trend versus the scenario label, and the mean-parameter re-evaluation
/// (one shared parameter set, averaged over the successful fits, scored on
/// every scenario for comparison against the per-scenario fits).
#[derive(Debug, Clone, Serialize)]
pub struct BatchOutcome {
    pub labels: Vec<String>,
    pub param_names: Vec<String>,
    pub results: Vec<Option<FitResult>>,
    pub errors: Vec<Option<String>>,
    /// `trend[scenario][param]`; `None` marks a failed cell.
    pub trend: Vec<Vec<Option<f64>>>,
    /// Mean of each parameter over successful fits (when structures agree).
    pub mean_estimates: Option<Vec<f64>>,
    /// Final weighted cost of each per-scenario fit.
    pub fitted_cost: Vec<Option<f64>>,
    /// Weighted cost of the mean-parameter model on each scenario.
    pub mean_parameter_cost: Vec<Option<f64>>,
}

/// Run every fit (in parallel when enabled), tabulate parameter trends, and
/// score the mean-parameter model on each scenario.
pub fn batch_fit(
    problems: &[FitProblem],
    labels: &[String],
) -> Result<BatchOutcome, FitError> {
    if problems.is_empty() {
        return Err(FitError::EmptyBatch);
    }
    let labels: Vec<String> = (0..problems.len())
        .map(|i| {
            labels
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("scenario {i}"))
        })
        .collect();

    #[cfg(feature = "parallel")]
    let raw: Vec<Result<FitResult, FitError>> =
        problems.par_iter().map(levenberg_marquardt).collect();
    #[cfg(not(feature = "parallel"))]
    let raw: Vec<Result<FitResult, FitError>> =
        problems.iter().map(levenberg_marquardt).collect();

    let param_names: Vec<String> = problems[0]
        .free
        .iter()
        .map(|f| f.handle.to_string())
        .collect();
    let mut results = Vec::with_capacity(raw.len());
    let mut errors = Vec::with_capacity(raw.len());
    for item in raw {
        match item {
            Ok(res) => {
                results.push(Some(res));
                errors.push(None);
            }
            Err(e) => {
                results.push(None);
                errors.push(Some(e.to_string()));
            }
        }
    }

    let trend: Vec<Vec<Option<f64>>> = results
        .iter()
        .map(|res| match res {
            Some(r) if r.param_names == param_names => {
                r.estimates.iter().map(|v| Some(*v)).collect()
            }
            _ => vec![None; param_names.len()],
        })
        .collect();

    // Mean-parameter comparison, when every successful fit shares the same
    // parameter structure.
    let successes: Vec<&FitResult> = results.iter().flatten().collect();
    let structures_agree = !successes.is_empty()
        && successes.iter().all(|r| r.param_names == param_names);
    let mean_estimates = structures_agree.then(|| {
        let n = param_names.len();
        let mut mean = vec![0.0; n];
        for r in &successes {
            for (m, v) in mean.iter_mut().zip(&r.estimates) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= successes.len() as f64;
        }
        mean
    });

    let fitted_cost: Vec<Option<f64>> = results
        .iter()
        .map(|r| {
            r.as_ref()
                .map(|res| res.residual_norm * res.residual_norm)
        })
        .collect();

    let mean_parameter_cost: Vec<Option<f64>> = match &mean_estimates {
        None => vec![None; problems.len()],
        Some(mean) => problems
            .iter()
            .map(|prob| {
                let mut model = prob.base.clone();
                for (fp, &v) in prob.free.iter().zip(mean) {
                    fp.handle.write(&mut model, v).ok()?;
                }
                let trace =
                    model_db_trace(&model, prob.field, &prob.observed.f_ghz).ok()?;
                let w = prob.weights.clone().unwrap_or_else(|| vec![1.0; trace.f_ghz.len()]);
                Some(
                    trace
                        .s21_db
                        .iter()
                        .zip(&prob.observed.s21_db)
                        .zip(&w)
                        .map(|((m, o), wi)| wi * (m - o) * (m - o))
                        .sum(),
                )
            })
            .collect(),
    };

    Ok(BatchOutcome {
        labels,
        param_names,
        results,
        errors,
        trend,
        mean_estimates,
        fitted_cost,
        mean_parameter_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn handle_display_and_parse_roundtrip() {
        let handles = [
            ParamHandle::ModeFrequency(3),
            ParamHandle::InternalRate(0),
            ParamHandle::ExternalRate(2, 1),
            ParamHandle::ExternalRateTied(1),
        ];
        for h in handles {
            let s = h.to_string();
            let back: ParamHandle = s.parse().unwrap();
            assert_eq!(h, back, "roundtrip of {s}");
        }
        assert!("gamma_bogus[0]".parse::<ParamHandle>().is_err());
    }
}
