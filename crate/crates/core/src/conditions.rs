//! Classical and randomized condition functionals and the inequalities linking them.
//!
//! Every functional is an aggregate over a row prefix j ≤ k of a per-entry quantity:
//! a sum (Lindeberg, Lyapunov, Rotar) or a maximum (Feller, infinitesimality, the
//! ratio and characteristic-function forms, σ*). The classical value is the prefix at
//! k_n; the randomized value is Σ_k P(ν = k)·prefix(k). Both go through the same prefix
//! code so that a deterministic index reproduces the classical value bit for bit.

use crate::dist::{Estimate, IndexTable, RandomIndex, ScalarDistribution};
use crate::error::{invalid, Error, Result};
use crate::quad::{integrate_with_breaks, QuadOptions};
use crate::special::{norm_cdf, norm_pdf, norm_sf};
use crate::tri_array::{TriangularArray, ValidationTolerance};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Numerical settings shared by all functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Tail mass left out of randomized sums.
    pub eta: f64,
    pub quad: QuadOptions,
    /// Bound on the neglected Rotar tails beyond ±T, per entry.
    pub rotar_tail_tol: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            eta: 1e-10,
            quad: QuadOptions::default(),
            rotar_tail_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Functional {
    Lindeberg(f64),
    Lyapunov(f64),
    Feller,
    Infinitesimality(f64),
    InfinitesimalityRatio,
    CfDeviation(f64),
    Rotar(f64),
    SigmaStar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Aggregate {
    Sum,
    Max,
}

impl Functional {
    fn aggregate(&self) -> Aggregate {
        match self {
            Functional::Lindeberg(_) | Functional::Lyapunov(_) | Functional::Rotar(_) => Aggregate::Sum,
            _ => Aggregate::Max,
        }
    }

    /// Short name used in reports; randomized forms are prefixed with `R`.
    pub fn name(&self) -> String {
        match self {
            Functional::Lindeberg(_) => "L".into(),
            Functional::Lyapunov(_) => "Lambda".into(),
            Functional::Feller => "F".into(),
            Functional::Infinitesimality(_) => "I".into(),
            Functional::InfinitesimalityRatio => "I_ratio".into(),
            Functional::CfDeviation(t) => format!("cf_dev[t={t}]"),
            Functional::Rotar(_) => "R".into(),
            Functional::SigmaStar => "sigma_star".into(),
        }
    }

    pub fn randomized_name(&self) -> String {
        match self {
            Functional::Rotar(_) => "RR".into(),
            Functional::SigmaStar => "R_sigma_star".into(),
            other => format!("R{}", other.name()),
        }
    }

    /// A bound on the per-entry value that does not depend on the entry, if one exists.
    fn uniform_bound(&self) -> Option<f64> {
        match self {
            Functional::Infinitesimality(_) | Functional::InfinitesimalityRatio => Some(1.0),
            Functional::CfDeviation(_) => Some(2.0),
            _ => None,
        }
    }

    fn check(&self) -> Result<()> {
        match *self {
            Functional::Lindeberg(e) | Functional::Infinitesimality(e) | Functional::Rotar(e) => {
                if !(e > 0.0) {
                    return Err(invalid("epsilon", format!("must be > 0, got {e}")));
                }
            }
            Functional::Lyapunov(d) => {
                if !(d > 0.0 && d <= 1.0) {
                    return Err(invalid("delta", format!("must lie in (0, 1], got {d}")));
                }
            }
            Functional::CfDeviation(t) => {
                if !t.is_finite() {
                    return Err(invalid("t", "must be finite"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Per-entry quantity whose row aggregate is the functional.
    pub fn entry_value(&self, d: &ScalarDistribution, opts: &EvalOptions) -> Result<Estimate> {
        match *self {
            Functional::Lindeberg(eps) => d.truncated_second_moment_est(eps, opts.quad),
            Functional::Lyapunov(delta) => d.abs_moment_est(2.0 + delta, opts.quad),
            Functional::Feller => Ok(Estimate::exact(d.variance())),
            Functional::SigmaStar => Ok(Estimate::exact(d.sd())),
            Functional::Infinitesimality(eps) => Ok(Estimate::exact(d.abs_tail_ge(eps))),
            Functional::InfinitesimalityRatio => ratio_moment(d, opts),
            Functional::CfDeviation(t) => Ok(Estimate::exact((d.char_fn(t) - Complex64::new(1.0, 0.0)).norm())),
            Functional::Rotar(eps) => rotar_entry(d, eps, opts),
        }
    }
}

/// E[X²/(1 + X²)].
fn ratio_moment(d: &ScalarDistribution, opts: &EvalOptions) -> Result<Estimate> {
    if d.variance() > 1e300 {
        // the ratio is 1 to double precision once the spread overflows
        return Ok(Estimate::exact(1.0));
    }
    let (lo, hi) = d.support();
    d.expect_est(|x| x * x / (1.0 + x * x), lo, hi, opts.quad)
}

/// E[X² 1{|X| > t}] for X ~ N(0, var), with var = 0 allowed.
fn centered_normal_tsm(var: f64, t: f64) -> f64 {
    if var == 0.0 {
        return 0.0;
    }
    if var == f64::INFINITY {
        return f64::INFINITY;
    }
    let c = t / var.sqrt();
    var * (2.0 * c * norm_pdf(c) + 2.0 * norm_sf(c))
}

/// ∫_{|x| > ε} |x| · |F(x) − Φ(x/σ)| dx for one entry.
pub fn rotar_entry(d: &ScalarDistribution, eps: f64, opts: &EvalOptions) -> Result<Estimate> {
    let var = d.variance();
    if let Some((mean, _)) = d.as_normal() {
        if mean == 0.0 && !var.is_finite() {
            // F coincides with Φ(·/σ) for every σ; only the overflowed scale is special
            return Ok(Estimate::exact(0.0));
        }
    }
    if !var.is_finite() {
        return Err(Error::Precondition(format!("entry variance is not finite: {d:?}")));
    }
    let sd = var.sqrt();
    let phi = |x: f64| {
        if sd == 0.0 {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            norm_cdf(x / sd)
        }
    };
    // ∫_T^∞ x |F − Φ| dx ≤ ∫_T^∞ x (P(|X| > x) + P(|σZ| > x)) dx ≤ (E[X²; |X|>T] + E[σ²Z²; |σZ|>T]) / 2
    let majorant = |t: f64| -> Result<f64> {
        Ok(0.5 * (d.truncated_second_moment_est(t, opts.quad)?.value + centered_normal_tsm(var, t)))
    };
    let (s_lo, s_hi) = d.support();
    let mut t = (2.0 * eps).max(8.0 * sd).max(s_hi.abs().max(s_lo.abs()) * 1.01);
    let mut tail = majorant(t)?;
    let mut doublings = 0;
    while tail > opts.rotar_tail_tol {
        t *= 2.0;
        tail = majorant(t)?;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::QuadratureNonConvergence {
                estimate: f64::NAN,
                achieved: tail,
                requested: opts.rotar_tail_tol,
            });
        }
    }
    if t <= eps {
        return Ok(Estimate::new(0.0, tail));
    }
    let f = |x: f64| x.abs() * (d.cdf(x) - phi(x)).abs();
    let breaks = d.breakpoints();
    let mut total = Estimate::new(0.0, tail);
    for (a, b) in [(eps, t), (-t, -eps)] {
        let mut pts = vec![a, b];
        pts.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
        let r = integrate_with_breaks(f, &pts, opts.quad)?;
        total = total + Estimate::new(r.value, r.error);
    }
    Ok(total)
}

/// Lazily extended row of entry laws for one (array, n).
#[derive(Debug, Clone)]
pub struct RowEvaluator<'a> {
    pub array: &'a TriangularArray,
    pub n: u64,
    pub row_length: u64,
    pub opts: EvalOptions,
    entries: Vec<ScalarDistribution>,
}

impl<'a> RowEvaluator<'a> {
    /// Rejects rows violating conditions (B) or (C) at the default tolerances.
    pub fn new(array: &'a TriangularArray, n: u64, opts: EvalOptions) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "rows are numbered from 1"));
        }
        let report = array.validate(n, &ValidationTolerance::default());
        if !report.passed() {
            return Err(Error::Precondition(format!(
                "row {n} of {} violates the array conditions (mean residual {:e}, variance residual {:e})",
                array.label(),
                report.mean_residual,
                report.variance_residual
            )));
        }
        let row_length = array.row_length(n);
        Ok(Self {
            array,
            n,
            row_length,
            opts,
            entries: array.row(n, row_length),
        })
    }

    pub fn entries(&mut self, upto: u64) -> &[ScalarDistribution] {
        if (self.entries.len() as u64) < upto {
            self.entries = self.array.row(self.n, upto);
        }
        &self.entries[..upto as usize]
    }

    /// Per-entry values for j = 1..=upto, reusing the previous value when consecutive
    /// entries are identical.
    pub fn entry_values(&mut self, f: Functional, upto: u64) -> Result<Vec<Estimate>> {
        f.check()?;
        let opts = self.opts;
        let entries = self.entries(upto);
        let mut out: Vec<Estimate> = Vec::with_capacity(entries.len());
        for (i, d) in entries.iter().enumerate() {
            let v = if i > 0 && entries[i - 1] == *d {
                out[i - 1]
            } else {
                f.entry_value(d, &opts)?
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Aggregates over j ≤ k for k = 1..=upto.
    pub fn prefix(&mut self, f: Functional, upto: u64) -> Result<Vec<Estimate>> {
        let vals = self.entry_values(f, upto)?;
        let agg = f.aggregate();
        let mut acc = Estimate::ZERO;
        Ok(vals
            .into_iter()
            .map(|v| {
                acc = match agg {
                    Aggregate::Sum => Estimate::new(acc.value + v.value, acc.error + v.error),
                    Aggregate::Max => Estimate::new(acc.value.max(v.value), acc.error.max(v.error)),
                };
                acc
            })
            .collect())
    }

    pub fn classical(&mut self, f: Functional) -> Result<Estimate> {
        let k = self.row_length;
        Ok(*self.prefix(f, k)?.last().expect("row length ≥ 1"))
    }

    pub fn randomized(&mut self, f: Functional, table: &IndexTable) -> Result<RandomizedValue> {
        let secondary = secondary_truncation(&table.index, table.eta, table.k_max)?;
        let prefix = self.prefix(f, secondary.max(table.k_max))?;
        Ok(mix_prefix(&prefix, table, secondary, f.uniform_bound()))
    }
}

/// Truncation point used only for the remainder estimate.
fn secondary_truncation(index: &RandomIndex, eta: f64, k_max: u64) -> Result<u64> {
    let eta2 = (eta * 1e-6).max(1e-300);
    Ok(index.truncation(eta2).unwrap_or(k_max).max(k_max))
}

/// Σ_{k ≤ K} pmf(k)·prefix(k) plus a remainder estimate for k > K.
fn mix_prefix(prefix: &[Estimate], table: &IndexTable, secondary: u64, bound: Option<f64>) -> RandomizedValue {
    let mut value = 0.0;
    let mut error = 0.0;
    for (k, p) in table.terms() {
        let inner = prefix[(k - 1) as usize];
        value += p * inner.value;
        error += p * inner.error;
    }
    // the inner aggregate is nondecreasing in k
    let mut remainder = 0.0;
    for k in table.k_max + 1..=secondary {
        let p = table.index.pmf(k);
        if p > 0.0 {
            remainder += p * prefix[(k - 1) as usize].value;
        }
    }
    let far = table.index.tail_gt(secondary);
    if far > 0.0 {
        let last = prefix[(secondary - 1) as usize].value;
        remainder += far * bound.map_or(last, |b| b.max(last));
    }
    if let Some(b) = bound {
        remainder = remainder.min(table.tail * b);
    }
    RandomizedValue {
        value,
        quadrature_error: error,
        remainder,
        truncation: table.k_max,
        eta: table.eta,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizedValue {
    /// Σ_{k ≤ K(η)} P(ν = k) · inner(k).
    pub value: f64,
    pub quadrature_error: f64,
    /// Estimate of the contribution of {ν > K(η)}.
    pub remainder: f64,
    pub truncation: u64,
    pub eta: f64,
}

impl RandomizedValue {
    pub fn error_bound(&self) -> f64 {
        self.quadrature_error + self.remainder
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.error_bound())
    }
}

fn with_row<T>(array: &TriangularArray, n: u64, f: impl FnOnce(&mut RowEvaluator) -> Result<T>) -> Result<T> {
    let mut ev = RowEvaluator::new(array, n, EvalOptions::default())?;
    f(&mut ev)
}

/// L(ε) = Σ_{j ≤ k_n} E[X²_{n,j} 1{|X_{n,j}| > ε}].
pub fn lindeberg(array: &TriangularArray, n: u64, epsilon: f64) -> Result<Estimate> {
    with_row(array, n, |ev| ev.classical(Functional::Lindeberg(epsilon)))
}

/// Λ(δ) = Σ_{j ≤ k_n} E|X_{n,j}|^{2+δ}.
pub fn lyapunov(array: &TriangularArray, n: u64, delta: f64) -> Result<Estimate> {
    with_row(array, n, |ev| ev.classical(Functional::Lyapunov(delta)))
}

/// max_{j ≤ k_n} σ²_{n,j}.
pub fn feller(array: &TriangularArray, n: u64) -> Result<f64> {
    with_row(array, n, |ev| ev.classical(Functional::Feller)).map(|e| e.value)
}

/// max_{j ≤ k_n} P(|X_{n,j}| ≥ ε).
pub fn infinitesimality(array: &TriangularArray, n: u64, epsilon: f64) -> Result<f64> {
    with_row(array, n, |ev| ev.classical(Functional::Infinitesimality(epsilon))).map(|e| e.value)
}

/// max_{j ≤ k_n} E[X²/(1 + X²)].
pub fn infinitesimality_ratio(array: &TriangularArray, n: u64) -> Result<Estimate> {
    with_row(array, n, |ev| ev.classical(Functional::InfinitesimalityRatio))
}

/// max_{j ≤ k_n} |f_{n,j}(t) − 1|.
pub fn cf_deviation(array: &TriangularArray, n: u64, t: f64) -> Result<f64> {
    with_row(array, n, |ev| ev.classical(Functional::CfDeviation(t))).map(|e| e.value)
}

/// R(ε) = Σ_{j ≤ k_n} ∫_{|x|>ε} |x| |F_{n,j}(x) − Φ(x/σ_{n,j})| dx.
pub fn rotar(array: &TriangularArray, n: u64, epsilon: f64) -> Result<Estimate> {
    with_row(array, n, |ev| ev.classical(Functional::Rotar(epsilon)))
}

/// Σ_k P(ν = k) · (functional over j ≤ k).
pub fn randomized(
    f: Functional,
    array: &TriangularArray,
    index: &RandomIndex,
    n: u64,
    eta: f64,
) -> Result<RandomizedValue> {
    if !(eta > 0.0 && eta <= 1e-3) {
        return Err(invalid("eta", format!("must lie in (0, 1e-3], got {eta}")));
    }
    let table = index.table(eta)?;
    let opts = EvalOptions { eta, ..EvalOptions::default() };
    let mut ev = RowEvaluator::new(array, n, opts)?;
    ev.randomized(f, &table)
}

/// All functionals of one (n, ε, δ) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub label: String,
    pub n: u64,
    pub row_length: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub classical: Vec<NamedValue>,
    pub randomized: Vec<NamedValue>,
    /// K(η) used for the randomized values.
    pub truncation: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedValue {
    pub functional: String,
    pub value: f64,
    pub error_bound: f64,
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.classical
            .iter()
            .chain(&self.randomized)
            .find(|v| v.functional == name)
            .map(|v| v.value)
    }

    /// (functional, value, error_bound) rows, classical first.
    pub fn rows(&self) -> impl Iterator<Item = &NamedValue> {
        self.classical.iter().chain(&self.randomized)
    }
}

/// Which functionals a condition report evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSelection {
    #[serde(default = "default_true")]
    pub lindeberg: bool,
    #[serde(default = "default_true")]
    pub lyapunov: bool,
    #[serde(default = "default_true")]
    pub feller: bool,
    #[serde(default = "default_true")]
    pub infinitesimality: bool,
    #[serde(default = "default_true")]
    pub ratio: bool,
    #[serde(default = "default_true")]
    pub rotar: bool,
    #[serde(default = "default_true")]
    pub sigma_star: bool,
    /// t grid for the characteristic-function form.
    #[serde(default = "default_t_grid")]
    pub cf_t: Vec<f64>,
}

fn default_true() -> bool {
    true
}

fn default_t_grid() -> Vec<f64> {
    vec![1.0]
}

impl Default for FunctionalSelection {
    fn default() -> Self {
        Self {
            lindeberg: true,
            lyapunov: true,
            feller: true,
            infinitesimality: true,
            ratio: true,
            rotar: true,
            sigma_star: true,
            cf_t: default_t_grid(),
        }
    }
}

impl FunctionalSelection {
    pub fn functionals(&self, epsilon: f64, delta: f64) -> Vec<Functional> {
        let mut v = Vec::new();
        if self.lindeberg {
            v.push(Functional::Lindeberg(epsilon));
        }
        if self.lyapunov {
            v.push(Functional::Lyapunov(delta));
        }
        if self.feller {
            v.push(Functional::Feller);
        }
        if self.infinitesimality {
            v.push(Functional::Infinitesimality(epsilon));
        }
        if self.ratio {
            v.push(Functional::InfinitesimalityRatio);
        }
        v.extend(self.cf_t.iter().map(|&t| Functional::CfDeviation(t)));
        if self.rotar {
            v.push(Functional::Rotar(epsilon));
        }
        if self.sigma_star {
            v.push(Functional::SigmaStar);
        }
        v
    }
}

/// Evaluates the selected classical functionals and, when `index` is given, their
/// randomized forms. Ratio and cf forms are reported in classical form only.
pub fn condition_report(
    array: &TriangularArray,
    index: Option<&RandomIndex>,
    n: u64,
    epsilon: f64,
    delta: f64,
    selection: &FunctionalSelection,
    opts: EvalOptions,
) -> Result<ConditionReport> {
    let mut ev = RowEvaluator::new(array, n, opts)?;
    let table = index.map(|ix| ix.table(opts.eta)).transpose()?;
    let mut classical = Vec::new();
    let mut randomized = Vec::new();
    for f in selection.functionals(epsilon, delta) {
        let c = ev.classical(f)?;
        classical.push(NamedValue {
            functional: f.name(),
            value: c.value,
            error_bound: c.error,
        });
        if let Some(t) = &table {
            if matches!(f, Functional::InfinitesimalityRatio | Functional::CfDeviation(_)) {
                continue;
            }
            let r = ev.randomized(f, t)?;
            randomized.push(NamedValue {
                functional: f.randomized_name(),
                value: r.value,
                error_bound: r.error_bound(),
            });
        }
    }
    Ok(ConditionReport {
        label: array.label(),
        n,
        row_length: ev.row_length,
        epsilon,
        delta,
        eta: opts.eta,
        classical,
        randomized,
        truncation: table.map(|t| t.k_max),
    })
}

/// One evaluated inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub n: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// rhs − lhs (0 when both sides are the same infinity).
    pub slack: f64,
    pub holds: bool,
    /// Checks that are not implied by the theory in the form evaluated are reported only.
    pub required: bool,
}

impl InequalityCheck {
    pub fn new(name: &str, n: u64, epsilon: f64, delta: f64, lhs: f64, rhs: f64, tol: f64, required: bool) -> Self {
        let slack = if lhs == rhs { 0.0 } else { rhs - lhs };
        Self {
            name: name.to_string(),
            n,
            epsilon,
            delta,
            lhs,
            rhs,
            slack,
            holds: lhs == rhs || lhs <= rhs + tol,
            required,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub label: String,
    pub tolerance: f64,
    pub checks: Vec<InequalityCheck>,
}

impl InequalityReport {
    /// Required checks that failed.
    pub fn violations(&self) -> Vec<&InequalityCheck> {
        self.checks.iter().filter(|c| c.required && !c.holds).collect()
    }

    pub fn advisory_failures(&self) -> Vec<&InequalityCheck> {
        self.checks.iter().filter(|c| !c.required && !c.holds).collect()
    }
}

/// Checks the classical and randomized implication inequalities on a grid:
/// L ≤ ε^{−δ}Λ, F ≤ ε² + L, I ≤ F/ε², their randomized twins, Σσ⁴ ≤ max σ², and for
/// all-normal rows the normal-domination bound on RL.
pub fn implication_suite(
    array: &TriangularArray,
    index: &RandomIndex,
    n_grid: &[u64],
    epsilon_grid: &[f64],
    delta_grid: &[f64],
    opts: EvalOptions,
    tol: f64,
) -> Result<InequalityReport> {
    if n_grid.is_empty() || epsilon_grid.is_empty() || delta_grid.is_empty() {
        return Err(invalid("grid", "grids must be non-empty"));
    }
    let table = index.table(opts.eta)?;
    let mut checks = Vec::new();
    for &n in n_grid {
        let mut ev = RowEvaluator::new(array, n, opts)?;
        let f = ev.classical(Functional::Feller)?.value;
        let rf = ev.randomized(Functional::Feller, &table)?.value;
        let var = ev.entry_values(Functional::Feller, ev.row_length)?;
        let sum4: f64 = var.iter().map(|v| v.value * v.value).sum();
        checks.push(InequalityCheck::new("sum_sigma4<=F", n, f64::NAN, f64::NAN, sum4, f, tol, true));
        for &eps in epsilon_grid {
            let l = ev.classical(Functional::Lindeberg(eps))?.value;
            let i = ev.classical(Functional::Infinitesimality(eps))?.value;
            let rl = ev.randomized(Functional::Lindeberg(eps), &table)?.value;
            let ri = ev.randomized(Functional::Infinitesimality(eps), &table)?.value;
            let e2 = eps * eps;
            checks.push(InequalityCheck::new("F<=eps2+L", n, eps, f64::NAN, f, e2 + l, tol, true));
            checks.push(InequalityCheck::new("I<=F/eps2", n, eps, f64::NAN, i, f / e2, tol, true));
            checks.push(InequalityCheck::new("RF<=eps2+RL", n, eps, f64::NAN, rf, e2 + rl, tol, true));
            checks.push(InequalityCheck::new("RI<=RF/eps2", n, eps, f64::NAN, ri, rf / e2, tol, true));
            for &delta in delta_grid {
                let lam = ev.classical(Functional::Lyapunov(delta))?.value;
                let rlam = ev.randomized(Functional::Lyapunov(delta), &table)?.value;
                let c = eps.powf(-delta);
                checks.push(InequalityCheck::new("L<=eps^-delta*Lambda", n, eps, delta, l, c * lam, tol, true));
                checks.push(InequalityCheck::new("RL<=eps^-delta*RLambda", n, eps, delta, rl, c * rlam, tol, true));
            }
            if let Some((paper, corrected)) = normal_domination(&mut ev, &table, eps)? {
                checks.push(InequalityCheck::new("RL<=E[Z^2;|Z|>=eps/sigma*]", n, eps, f64::NAN, rl, paper, tol, false));
                checks.push(InequalityCheck::new("RL<=E[V_nu]*E[Z^2;|Z|>=eps/sigma*]", n, eps, f64::NAN, rl, corrected, tol, true));
            }
        }
    }
    Ok(InequalityReport {
        label: array.label(),
        tolerance: tol,
        checks,
    })
}

/// For all-normal rows returns the two normal-domination bounds on RL(ε): the
/// standard-normal tail E[Z² 1{|Z| ≥ ε/σ*}] alone and the same times E[Σ_{j ≤ ν} σ²_j],
/// where σ* is the largest entry σ up to K(η). `None` if some entry is not normal.
pub fn normal_domination(ev: &mut RowEvaluator, table: &IndexTable, eps: f64) -> Result<Option<(f64, f64)>> {
    let entries = ev.entries(table.k_max);
    if !entries.iter().all(|d| d.as_normal().is_some_and(|(m, _)| m == 0.0)) {
        return Ok(None);
    }
    let prefix_var = ev.prefix(Functional::Feller, table.k_max)?;
    let sigma_star = prefix_var.last().expect("K ≥ 1").value.sqrt();
    let c = eps / sigma_star;
    let tail = 2.0 * c * norm_pdf(c) + 2.0 * norm_sf(c);
    let mut ev_sum = 0.0;
    let mut acc = 0.0;
    let vars = ev.entry_values(Functional::Feller, table.k_max)?;
    let mut prefix_sums = Vec::with_capacity(vars.len());
    for v in &vars {
        acc += v.value;
        prefix_sums.push(acc);
    }
    for (k, p) in table.terms() {
        ev_sum += p * prefix_sums[(k - 1) as usize];
    }
    Ok(Some((tail, ev_sum * tail)))
}

/// Optional check |E e^{itS_ν} − e^{−t²/2}| ≤ ε|t|³ + 2t²·RR(ε) for the random sum of row n.
/// Reported, never required.
pub fn cf_domination(
    array: &TriangularArray,
    index: &RandomIndex,
    n: u64,
    epsilon: f64,
    t_grid: &[f64],
    opts: EvalOptions,
) -> Result<Vec<InequalityCheck>> {
    let table = index.table(opts.eta)?;
    let mut ev = RowEvaluator::new(array, n, opts)?;
    let rr = ev.randomized(Functional::Rotar(epsilon), &table)?.value;
    let entries = ev.entries(table.k_max).to_vec();
    let mut out = Vec::new();
    for &t in t_grid {
        let mut prod = Complex64::new(1.0, 0.0);
        let mut cf = Complex64::new(0.0, 0.0);
        let mut k = 0u64;
        for (kk, p) in table.terms() {
            while k < kk {
                prod *= entries[k as usize].char_fn(t);
                k += 1;
            }
            cf += prod * p;
        }
        let lhs = (cf - Complex64::new((-0.5 * t * t).exp(), 0.0)).norm();
        let rhs = epsilon * t.abs().powi(3) + 2.0 * t * t * rr;
        out.push(InequalityCheck::new(&format!("cf_domination[t={t}]"), n, epsilon, f64::NAN, lhs, rhs, 0.0, false));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tri_array::{Rows, SeriesBase};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rademacher() -> TriangularArray {
        TriangularArray::iid(ScalarDistribution::rademacher(), Rows::default()).unwrap()
    }

    #[test]
    fn lindeberg_rademacher_examples() {
        let a = rademacher();
        for n in [4u64, 9, 25] {
            let e = 1.0 / (n as f64).sqrt();
            assert_eq!(lindeberg(&a, n, e).unwrap().value, 0.0);
            assert_eq!(lindeberg(&a, n, 2.0 * e).unwrap().value, 0.0);
        }
        assert_eq!(lindeberg(&a, 4, 0.3).unwrap().value, 1.0);
    }

    #[test]
    fn lindeberg_shiryaev_against_monte_carlo() {
        let a = TriangularArray::shiryaev(Rows::default());
        let l = lindeberg(&a, 10, 0.5).unwrap().value;
        let last = a.entry(10, 10);
        assert_eq!(last.variance(), 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = 10_000_000;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..m {
            let x = last.sample(&mut rng);
            let v = if x.abs() > 0.5 { x * x } else { 0.0 };
            s += v;
            s2 += v * v;
        }
        let mean = s / m as f64;
        let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
        let exact_last = last.truncated_second_moment(0.5).unwrap();
        assert!((exact_last - mean).abs() < 3.0 * se);
        assert!(l >= exact_last);
    }

    #[test]
    fn lyapunov_examples() {
        let a = rademacher();
        for n in [1u64, 4, 16, 100] {
            assert_relative_eq!(lyapunov(&a, n, 1.0).unwrap().value, (n as f64).powf(-0.5), max_relative = 1e-13);
        }
        let single = TriangularArray::iid(ScalarDistribution::standard_normal(), Rows::default()).unwrap();
        let v = lyapunov(&single, 1, 1.0).unwrap().value;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = 10_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..m {
            let x: f64 = ScalarDistribution::standard_normal().sample(&mut rng);
            let c = x.abs().powi(3);
            s += c;
            s2 += c * c;
        }
        let mean = s / m as f64;
        let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
        assert!((v - mean).abs() < 3.0 * se, "{v} vs {mean}");
    }

    #[test]
    fn degenerate_row_rejected() {
        let a = TriangularArray::explicit(vec![vec![ScalarDistribution::point_mass(0.0); 3]]).unwrap();
        assert!(matches!(lyapunov(&a, 1, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn feller_examples() {
        let s = TriangularArray::shiryaev(Rows::default());
        for k in [2u64, 5, 20] {
            assert_eq!(feller(&s, k).unwrap(), 0.5);
        }
        for n in [1u64, 3, 10] {
            assert_relative_eq!(feller(&rademacher(), n).unwrap(), 1.0 / n as f64, max_relative = 1e-15);
        }
    }

    #[test]
    fn ratio_and_cf_examples() {
        let a = rademacher();
        assert_eq!(cf_deviation(&a, 9, 0.0).unwrap(), 0.0);
        for n in [1u64, 4, 16] {
            let x = 1.0 / (n as f64).sqrt();
            // two-atom expectation of e^{itX} − 1
            let direct = (0.5 * Complex64::new(0.0, x).exp() + 0.5 * Complex64::new(0.0, -x).exp() - 1.0).norm();
            assert!((cf_deviation(&a, n, 1.0).unwrap() - direct).abs() < 1e-15);
            assert!((direct - (1.0 - x.cos())).abs() < 1e-15);
        }
        let zero = ScalarDistribution::point_mass(0.0);
        assert_eq!(ratio_moment(&zero, &EvalOptions::default()).unwrap().value, 0.0);
        let r = infinitesimality_ratio(&a, 4).unwrap().value;
        assert_relative_eq!(r, 0.25 / 1.25, max_relative = 1e-14);
    }

    #[test]
    fn rotar_vanishes_on_normal_rows() {
        let s = TriangularArray::shiryaev(Rows::default());
        for k in [2u64, 8, 16] {
            for eps in [0.1, 0.5, 1.0] {
                let r = rotar(&s, k, eps).unwrap();
                assert!(r.value + r.error <= 1e-8, "{r:?}");
            }
        }
        let p = TriangularArray::from_series(SeriesBase::PowerVariance { base: ScalarDistribution::standard_normal(), power: 2.0 }).unwrap();
        assert!(rotar(&p, 7, 0.2).unwrap().value <= 1e-10);
    }

    #[test]
    fn rotar_rademacher_matches_trapezoid() {
        let a = rademacher();
        let r = rotar(&a, 2, 0.1).unwrap();
        // fixed-grid trapezoid oracle over (0.1, 12), doubled by symmetry, times two entries
        let s = 0.5f64.sqrt();
        let g = |x: f64| {
            let f = if x > s { 1.0 } else if x > -s { 0.5 } else { 0.0 };
            x.abs() * (f - norm_cdf(x / s)).abs()
        };
        let trap = |a: f64, b: f64, m: usize| {
            let h = (b - a) / m as f64;
            let mut acc = 0.5 * (g(a) + g(b));
            for i in 1..m {
                acc += g(a + i as f64 * h);
            }
            acc * h
        };
        let oracle = 2.0 * 2.0 * (trap(0.1, s, 400_000) + trap(s, 12.0, 4_000_000));
        assert!(r.value > 0.0);
        assert!((r.value - oracle).abs() < 1e-6, "{} vs {oracle}", r.value);
    }

    #[test]
    fn deterministic_index_reproduces_classical_values() {
        let arrays = [
            rademacher(),
            TriangularArray::shiryaev(Rows::default()),
            TriangularArray::iid(ScalarDistribution::exponential_centered(1.0).unwrap(), Rows::times(2)).unwrap(),
        ];
        for a in &arrays {
            let n = 6;
            let ix = RandomIndex::deterministic(a.row_length(n)).unwrap();
            let table = ix.table(1e-10).unwrap();
            let mut ev = RowEvaluator::new(a, n, EvalOptions::default()).unwrap();
            for f in FunctionalSelection::default().functionals(0.3, 0.5) {
                let c = ev.classical(f).unwrap();
                let r = ev.randomized(f, &table).unwrap();
                assert_eq!(c.value, r.value, "{f:?} on {}", a.label());
                assert_eq!(r.remainder, 0.0);
            }
        }
    }

    #[test]
    fn randomized_lindeberg_matches_brute_force_loop() {
        let a = rademacher();
        let n = 16;
        let ix = RandomIndex::geometric(0.5).unwrap();
        let eps = 0.1;
        let v = randomized(Functional::Lindeberg(eps), &a, &ix, n, 1e-12).unwrap();
        // every atom ±1/4 exceeds 0.1, so the inner sum is k/16
        let k_max = ix.truncation(1e-12).unwrap();
        let mut oracle = 0.0;
        for k in 1..=k_max {
            let mut inner = 0.0;
            for _ in 0..k {
                inner += 0.25 * 0.25;
            }
            oracle += ix.pmf(k) * inner;
        }
        assert!((v.value - oracle).abs() < 1e-10, "{} vs {oracle}", v.value);
        assert!(v.remainder < 1e-11);
        let coarse = randomized(Functional::Lindeberg(eps), &a, &ix, n, 1e-6).unwrap();
        // E ν / 16 with E ν = 2
        assert!((coarse.value + coarse.remainder - 0.125).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_for_randomized_infinitesimality() {
        let a = TriangularArray::iid(ScalarDistribution::standard_uniform(), Rows::default()).unwrap();
        let ix = RandomIndex::poisson_with_mean(8.0).unwrap();
        for eps in [0.1, 0.3, 1.0] {
            let ri = randomized(Functional::Infinitesimality(eps), &a, &ix, 8, 1e-10).unwrap().value;
            let rf = randomized(Functional::Feller, &a, &ix, 8, 1e-10).unwrap().value;
            assert!(ri <= rf / (eps * eps) + 1e-12);
        }
    }

    #[test]
    fn implication_suite_has_no_violations_on_examples() {
        let a = TriangularArray::iid(ScalarDistribution::two_point(-2.0, 0.5, 0.2).unwrap(), Rows::default()).unwrap();
        let ix = RandomIndex::negative_binomial_with_mean(2.0, 16.0).unwrap();
        let rep = implication_suite(&a, &ix, &[4, 16], &[0.1, 0.3, 1.0, 1e3], &[0.5, 1.0], EvalOptions::default(), 1e-9).unwrap();
        assert!(rep.violations().is_empty(), "{:?}", rep.violations());
        let far: Vec<_> = rep.checks.iter().filter(|c| c.epsilon == 1e3 && c.name == "RF<=eps2+RL").collect();
        assert!(far.iter().all(|c| c.lhs <= 1.0 && c.slack > 1e5));
    }

    #[test]
    fn normal_domination_forms() {
        let a = TriangularArray::iid(ScalarDistribution::standard_normal(), Rows::default()).unwrap();
        let ix = RandomIndex::finite_support(vec![4, 8, 16], vec![1.0 / 3.0; 3]).unwrap();
        let rep = implication_suite(&a, &ix, &[8], &[0.3], &[1.0], EvalOptions::default(), 1e-9).unwrap();
        let corrected = rep.checks.iter().find(|c| c.name.starts_with("RL<=E[V_nu]")).unwrap();
        assert!(corrected.holds);
        assert!(rep.checks.iter().any(|c| c.name == "RL<=E[Z^2;|Z|>=eps/sigma*]"));
    }

    #[test]
    fn monotone_in_epsilon() {
        let a = TriangularArray::iid(ScalarDistribution::exponential_centered(2.0).unwrap(), Rows::default()).unwrap();
        let ix = RandomIndex::geometric(0.25).unwrap();
        let table = ix.table(1e-10).unwrap();
        let mut ev = RowEvaluator::new(&a, 4, EvalOptions::default()).unwrap();
        let grid = [0.05, 0.1, 0.3, 0.6, 1.0, 2.0];
        for mk in [Functional::Lindeberg as fn(f64) -> Functional, Functional::Infinitesimality, Functional::Rotar] {
            let mut prev_c = f64::INFINITY;
            let mut prev_r = f64::INFINITY;
            for &e in &grid {
                let c = ev.classical(mk(e)).unwrap().value;
                let r = ev.randomized(mk(e), &table).unwrap().value;
                assert!(c <= prev_c + 1e-12 && r <= prev_r + 1e-12, "{:?}", mk(e));
                prev_c = c;
                prev_r = r;
            }
        }
    }

    #[test]
    fn shiryaev_geometric_overflow_is_reported_not_hidden() {
        let a = TriangularArray::shiryaev(Rows::default());
        let ix = RandomIndex::geometric(1.0 / 64.0).unwrap();
        let rf = randomized(Functional::Feller, &a, &ix, 64, 1e-10).unwrap();
        assert!(rf.value.is_infinite());
        let rr = randomized(Functional::Rotar(0.5), &a, &ix, 64, 1e-10).unwrap();
        assert_eq!(rr.value, 0.0);
    }

    #[test]
    fn bad_parameters() {
        let a = rademacher();
        assert!(lindeberg(&a, 4, 0.0).is_err());
        assert!(lyapunov(&a, 4, 1.5).is_err());
        assert!(randomized(Functional::Feller, &a, &RandomIndex::geometric(0.5).unwrap(), 4, 0.1).is_err());
    }
}
