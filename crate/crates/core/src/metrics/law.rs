//! Laws that distances are computed between: single distributions, exact row-sum laws
//! of the form (atomic) ⊛ N(0, sd²), empirical laws and finite mixtures.

use crate::dist::{Estimate, ScalarDistribution};
use crate::error::Result;
use crate::quad::{integrate_with_breaks, QuadOptions};
use crate::special::{norm_cdf, norm_lower_partial_moment, norm_upper_partial_moment, INV_SQRT_2PI};

/// Largest number of merged atoms an exact row-sum law may carry.
pub const MAX_ATOMS: usize = 1 << 20;

/// Normal components farther than this many standard deviations from a point are
/// treated as fully to one side of it when evaluating the CDF.
const NORMAL_WINDOW: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    Scalar(ScalarDistribution),
    /// Σ_i p_i · N(a_i, sd²); purely atomic when `sd == 0`. Atoms are sorted and distinct.
    AtomNormal { atoms: Vec<(f64, f64)>, cum: Vec<f64>, sd: f64 },
    /// Empirical law of a sorted sample.
    Empirical { sorted: Vec<f64> },
    /// Σ w_i · law_i; weights may sum to less than one (truncated mixtures).
    Mixture(Vec<(f64, Law)>),
}

impl Law {
    pub fn standard_normal() -> Self {
        Law::Scalar(ScalarDistribution::standard_normal())
    }

    /// `atoms` need not be sorted or distinct.
    pub fn atom_normal(mut atoms: Vec<(f64, f64)>, sd: f64) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let atoms = merge_sorted(atoms, 0.0);
        Self::from_merged(atoms, sd)
    }

    fn from_merged(atoms: Vec<(f64, f64)>, sd: f64) -> Self {
        let mut cum = Vec::with_capacity(atoms.len() + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for (_, p) in &atoms {
            acc += p;
            cum.push(acc);
        }
        Law::AtomNormal { atoms, cum, sd }
    }

    pub fn empirical(mut sample: Vec<f64>) -> Self {
        sample.sort_by(f64::total_cmp);
        Law::Empirical { sorted: sample }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.total_mass()).sum(),
            Law::AtomNormal { cum, .. } => *cum.last().expect("non-empty"),
            _ => 1.0,
        }
    }

    /// P(X < x).
    pub fn cdf(&self, x: f64) -> f64 {
        self.cdf_impl(x, false)
    }

    /// P(X ≤ x).
    pub fn cdf_right(&self, x: f64) -> f64 {
        self.cdf_impl(x, true)
    }

    fn cdf_impl(&self, x: f64, right: bool) -> f64 {
        match self {
            Law::Scalar(d) => {
                if right {
                    d.cdf_right(x)
                } else {
                    d.cdf(x)
                }
            }
            Law::AtomNormal { atoms, cum, sd } => {
                if *sd == 0.0 {
                    let i = if right {
                        atoms.partition_point(|(a, _)| *a <= x)
                    } else {
                        atoms.partition_point(|(a, _)| *a < x)
                    };
                    return cum[i];
                }
                let lo = atoms.partition_point(|(a, _)| *a < x - NORMAL_WINDOW * sd);
                let hi = atoms.partition_point(|(a, _)| *a <= x + NORMAL_WINDOW * sd);
                let mut v = cum[lo];
                for (a, p) in &atoms[lo..hi] {
                    v += p * norm_cdf((x - a) / sd);
                }
                v
            }
            Law::Empirical { sorted } => {
                let i = if right {
                    sorted.partition_point(|v| *v <= x)
                } else {
                    sorted.partition_point(|v| *v < x)
                };
                i as f64 / sorted.len() as f64
            }
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.cdf_impl(x, right)).sum(),
        }
    }

    /// Points where the CDF may jump.
    pub fn jump_points(&self) -> Vec<f64> {
        match self {
            Law::Scalar(d) => d.atoms().map(|v| v.into_iter().map(|(x, _)| x).collect()).unwrap_or_default(),
            Law::AtomNormal { atoms, sd, .. } => {
                if *sd == 0.0 {
                    atoms.iter().map(|(x, _)| *x).collect()
                } else {
                    Vec::new()
                }
            }
            Law::Empirical { sorted } => {
                let mut v = sorted.clone();
                v.dedup();
                v
            }
            Law::Mixture(parts) => {
                let mut v: Vec<f64> = parts.iter().flat_map(|(_, l)| l.jump_points()).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            }
        }
    }

    /// Bound on the density of the continuous part. Between jump points a purely atomic
    /// CDF is flat, so atomic laws contribute zero.
    pub fn density_bound(&self) -> f64 {
        match self {
            Law::Scalar(d) => {
                if d.is_atomic() {
                    0.0
                } else {
                    d.density_bound()
                }
            }
            Law::AtomNormal { sd, cum, .. } => {
                if *sd == 0.0 {
                    0.0
                } else {
                    cum.last().expect("non-empty") * INV_SQRT_2PI / sd
                }
            }
            Law::Empirical { .. } => 0.0,
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.density_bound()).sum(),
        }
    }

    /// Bound on |f'| for the density f of the continuous part, valid between kinks.
    pub fn density_slope_bound(&self) -> f64 {
        match self {
            Law::Scalar(d) => scalar_density_slope(d),
            Law::AtomNormal { sd, cum, .. } => {
                if *sd == 0.0 {
                    0.0
                } else {
                    cum.last().expect("non-empty") * MAX_NORMAL_PDF_SLOPE / (sd * sd)
                }
            }
            Law::Empirical { .. } => 0.0,
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.density_slope_bound()).sum(),
        }
    }

    /// Points where the density of the continuous part jumps or bends.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            Law::Scalar(d) if !d.is_atomic() => d.breakpoints(),
            Law::Mixture(parts) => parts.iter().flat_map(|(_, l)| l.kinks()).collect(),
            _ => Vec::new(),
        }
    }

    /// (mean, sd) when the law is a single normal distribution.
    pub fn normal_params(&self) -> Option<(f64, f64)> {
        match self {
            Law::Scalar(d) => d.as_normal().map(|(m, v)| (m, v.sqrt())),
            Law::AtomNormal { atoms, sd, .. } if atoms.len() == 1 && atoms[0].1 == 1.0 && *sd > 0.0 => {
                Some((atoms[0].0, *sd))
            }
            _ => None,
        }
    }

    /// Raw moment of order 1 or 2 (of the possibly sub-probability measure).
    pub fn raw_moment(&self, order: u32) -> f64 {
        match self {
            Law::Scalar(d) => match order {
                0 => 1.0,
                1 => d.mean(),
                _ => d.second_moment(),
            },
            Law::AtomNormal { atoms, sd, .. } => atoms
                .iter()
                .map(|(a, p)| match order {
                    0 => *p,
                    1 => p * a,
                    _ => p * (a * a + sd * sd),
                })
                .sum(),
            Law::Empirical { sorted } => {
                sorted.iter().map(|x| x.powi(order as i32)).sum::<f64>() / sorted.len() as f64
            }
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.raw_moment(order)).sum(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1) / self.total_mass()
    }

    pub fn sd(&self) -> f64 {
        let m = self.total_mass();
        let mean = self.raw_moment(1) / m;
        (self.raw_moment(2) / m - mean * mean).max(0.0).sqrt()
    }

    /// Smallest and largest atom, if any.
    pub fn atom_range(&self) -> Option<(f64, f64)> {
        match self {
            Law::Scalar(d) => d.atoms().map(|_| d.support()),
            Law::AtomNormal { atoms, .. } => Some((atoms[0].0, atoms[atoms.len() - 1].0)),
            Law::Empirical { sorted } => Some((sorted[0], sorted[sorted.len() - 1])),
            Law::Mixture(parts) => parts
                .iter()
                .filter_map(|(_, l)| l.atom_range())
                .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1))),
        }
    }

    /// Effective support: atoms and mean ± `sds` standard deviations of every component.
    pub fn range(&self, sds: f64) -> (f64, f64) {
        let (m, s) = (self.mean(), self.sd());
        let (mut lo, mut hi) = (m - sds * s, m + sds * s);
        match self {
            Law::Scalar(d) => {
                let (a, b) = d.support();
                lo = lo.min(a);
                hi = hi.max(b);
            }
            Law::AtomNormal { atoms, sd, .. } => {
                lo = lo.min(atoms[0].0 - sds * sd);
                hi = hi.max(atoms[atoms.len() - 1].0 + sds * sd);
            }
            Law::Mixture(parts) => {
                for (_, l) in parts {
                    let (a, b) = l.range(sds);
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
            }
            Law::Empirical { .. } => {}
        }
        if let Some((a, b)) = self.atom_range() {
            lo = lo.min(a);
            hi = hi.max(b);
        }
        (lo, hi)
    }

    /// E[(x − X)_+^m], m ≤ 3.
    pub fn lower_partial_moment(&self, m: u32, x: f64) -> f64 {
        match self {
            Law::Scalar(d) => d.lower_partial_moment(m, x),
            Law::AtomNormal { atoms, sd, .. } => atoms
                .iter()
                .map(|(a, p)| {
                    if *sd == 0.0 {
                        if *a < x {
                            p * (x - a).powi(m as i32)
                        } else {
                            0.0
                        }
                    } else {
                        p * sd.powi(m as i32) * norm_lower_partial_moment(m, (x - a) / sd)
                    }
                })
                .sum(),
            Law::Empirical { sorted } => {
                sorted.iter().filter(|v| **v < x).map(|v| (x - v).powi(m as i32)).sum::<f64>() / sorted.len() as f64
            }
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.lower_partial_moment(m, x)).sum(),
        }
    }

    /// E[(X − x)_+^m], m ≤ 3.
    pub fn upper_partial_moment(&self, m: u32, x: f64) -> f64 {
        match self {
            Law::Scalar(d) => d.upper_partial_moment(m, x),
            Law::AtomNormal { atoms, sd, .. } => atoms
                .iter()
                .map(|(a, p)| {
                    if *sd == 0.0 {
                        if *a > x {
                            p * (a - x).powi(m as i32)
                        } else {
                            0.0
                        }
                    } else {
                        p * sd.powi(m as i32) * norm_upper_partial_moment(m, (x - a) / sd)
                    }
                })
                .sum(),
            Law::Empirical { sorted } => {
                sorted.iter().filter(|v| **v > x).map(|v| (v - x).powi(m as i32)).sum::<f64>() / sorted.len() as f64
            }
            Law::Mixture(parts) => parts.iter().map(|(w, l)| w * l.upper_partial_moment(m, x)).sum(),
        }
    }

    /// E g(X) by atom sums and quadrature against densities; `kinks` are extra
    /// breakpoints of `g`.
    pub fn expect<G: Fn(f64) -> f64 + Copy>(&self, g: G, kinks: &[f64], opts: QuadOptions) -> Result<Estimate> {
        match self {
            Law::Scalar(d) => {
                if let Some(atoms) = d.atoms() {
                    return Ok(Estimate::exact(atoms.iter().map(|(x, p)| p * g(*x)).sum()));
                }
                let (lo, hi) = d.support();
                let mut pts = vec![lo, hi];
                pts.extend(d.breakpoints().into_iter().chain(kinks.iter().copied()).filter(|x| *x > lo && *x < hi));
                let r = integrate_with_breaks(|x| g(x) * d.pdf(x), &pts, opts)?;
                Ok(Estimate::new(r.value, r.error))
            }
            Law::AtomNormal { atoms, sd, .. } => {
                let mut total = Estimate::ZERO;
                for (a, p) in atoms {
                    if *sd == 0.0 {
                        total.value += p * g(*a);
                        continue;
                    }
                    let mut pts = vec![-12.0, 12.0];
                    pts.extend(kinks.iter().map(|k| (k - a) / sd).filter(|z| z.abs() < 12.0));
                    let r = integrate_with_breaks(|z| g(a + sd * z) * INV_SQRT_2PI * (-0.5 * z * z).exp(), &pts, opts)?;
                    total = total + Estimate::new(p * r.value, p * r.error);
                }
                Ok(total)
            }
            Law::Empirical { sorted } => Ok(Estimate::exact(
                sorted.iter().map(|x| g(*x)).sum::<f64>() / sorted.len() as f64,
            )),
            Law::Mixture(parts) => {
                let mut total = Estimate::ZERO;
                for (w, l) in parts {
                    let e = l.expect(g, kinks, opts)?;
                    total = total + Estimate::new(w * e.value, w * e.error);
                }
                Ok(total)
            }
        }
    }

    /// Law of c·X for the laws that support it exactly.
    pub fn scaled(&self, c: f64) -> Law {
        match self {
            Law::Scalar(d) => Law::Scalar(d.clone().scaled(c)),
            Law::AtomNormal { atoms, sd, .. } => {
                Law::atom_normal(atoms.iter().map(|(a, p)| (c * a, *p)).collect(), c.abs() * sd)
            }
            Law::Empirical { sorted } => Law::empirical(sorted.iter().map(|x| c * x).collect()),
            Law::Mixture(parts) => Law::Mixture(parts.iter().map(|(w, l)| (*w, l.scaled(c))).collect()),
        }
    }
}

/// max |φ'(z)| = φ(1).
const MAX_NORMAL_PDF_SLOPE: f64 = 0.241_970_724_519_143_37;

fn scalar_density_slope(d: &ScalarDistribution) -> f64 {
    match d {
        ScalarDistribution::Normal { var, .. } => MAX_NORMAL_PDF_SLOPE / var,
        ScalarDistribution::ExponentialCentered { rate } => rate * rate,
        ScalarDistribution::Scaled { base, factor } => scalar_density_slope(base) / (factor * factor),
        ScalarDistribution::Shifted { base, .. } => scalar_density_slope(base),
        // uniform densities are flat and atomic laws have none
        _ => 0.0,
    }
}

/// Merges atoms closer than `tol`, keeping the first position.
fn merge_sorted(atoms: Vec<(f64, f64)>, tol: f64) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (x, p) in atoms {
        match out.last_mut() {
            Some(last) if x - last.0 <= tol => last.1 += p,
            _ => out.push((x, p)),
        }
    }
    out
}

/// Incremental exact law of X_1 + … + X_k for normal and atomic summands.
#[derive(Debug, Clone)]
pub struct RowSumBuilder {
    atoms: Vec<(f64, f64)>,
    shift: f64,
    var: f64,
    /// Accumulated magnitude used to scale the merge tolerance.
    scale: f64,
    failed: bool,
}

impl Default for RowSumBuilder {
    fn default() -> Self {
        Self {
            atoms: vec![(0.0, 1.0)],
            shift: 0.0,
            var: 0.0,
            scale: 0.0,
            failed: false,
        }
    }
}

impl RowSumBuilder {
    /// Adds one summand; returns false once the law is no longer exactly representable.
    pub fn push(&mut self, d: &ScalarDistribution) -> bool {
        if self.failed {
            return false;
        }
        if let Some((mean, var)) = d.as_normal() {
            self.shift += mean;
            self.var += var;
            self.scale += mean.abs();
            return true;
        }
        let Some(mut add) = d.atoms() else {
            self.failed = true;
            return false;
        };
        add.retain(|(_, p)| *p > 0.0);
        if add.len() == 1 {
            self.shift += add[0].0;
            self.scale += add[0].0.abs();
            return true;
        }
        let m = add.iter().map(|(x, _)| x.abs()).fold(0.0, f64::max);
        self.scale += m;
        if self.atoms.len() * add.len() > 4 * MAX_ATOMS {
            self.failed = true;
            return false;
        }
        let mut next = Vec::with_capacity(self.atoms.len() * add.len());
        for (b, q) in &add {
            next.extend(self.atoms.iter().map(|(a, p)| (a + b, p * q)));
        }
        next.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.atoms = merge_sorted(next, 1e-12 * self.scale.max(1e-300));
        if self.atoms.len() > MAX_ATOMS {
            self.failed = true;
            return false;
        }
        true
    }

    pub fn law(&self) -> Option<Law> {
        if self.failed {
            return None;
        }
        let atoms = self.atoms.iter().map(|(a, p)| (a + self.shift, *p)).collect();
        Some(Law::from_merged(atoms, self.var.sqrt()))
    }
}

/// Exact law of the sum of independent summands, when every summand is normal or atomic.
pub fn row_sum_law(summands: &[ScalarDistribution]) -> Option<Law> {
    let mut b = RowSumBuilder::default();
    for d in summands {
        if !b.push(d) {
            return None;
        }
    }
    b.law()
}
