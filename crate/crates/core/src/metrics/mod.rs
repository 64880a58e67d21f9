//! Distances between laws: Kolmogorov (exact and mixture forms) and Zolotarev ζₛ.

mod kolmogorov;
mod law;
mod zeta;

pub use kolmogorov::{kolmogorov, kolmogorov_with, GridOptions};
pub use law::{row_sum_law, Law, RowSumBuilder, MAX_ATOMS};
pub use zeta::{regularity_check, semi_additivity_check, zeta, zeta_lower_bound, zeta_with};

use crate::dist::RandomIndex;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::tri_array::SumModel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A distance value with an error bound and the method that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub value: f64,
    pub bound: f64,
    pub method: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl DistanceEstimate {
    pub fn new(value: f64, bound: f64, method: &str) -> Self {
        Self {
            value,
            bound,
            method: method.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }
}

/// Dvoretzky–Kiefer–Wolfowitz half-width √(ln(2/α)/(2M)).
pub fn dkw_bound(samples: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * samples as f64)).sqrt()
}

/// Monte Carlo stand-in for row sums that have no exact law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalFallback {
    pub samples: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureOptions {
    pub eta: f64,
    pub grid: GridOptions,
    pub empirical: Option<EmpiricalFallback>,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self {
            eta: 1e-10,
            grid: GridOptions::default(),
            empirical: None,
        }
    }
}

/// Per-k laws of the random sum on {ν = k}, with the probability mass left out.
struct MixtureTerms {
    terms: Vec<(u64, f64, Law, f64)>,
    truncation: u64,
    left_out: f64,
    /// Whether some term fell back to Monte Carlo; the fourth field then holds its DKW bound.
    empirical: bool,
}

fn mixture_terms(model: &SumModel, index: &RandomIndex, opts: &MixtureOptions) -> Result<MixtureTerms> {
    let table = index.table(opts.eta)?;
    let kept: Vec<(u64, f64)> = {
        let count = table.terms().count().max(1) as f64;
        table.terms().filter(|(_, p)| *p >= opts.eta / count).collect()
    };
    let pruned: f64 = table.terms().map(|(_, p)| p).sum::<f64>() - kept.iter().map(|(_, p)| p).sum::<f64>();
    let left_out = table.tail + pruned.max(0.0);
    let mut terms = Vec::with_capacity(kept.len());
    let mut empirical = false;
    match model {
        SumModel::Array { .. } => {
            let k_last = kept.last().map_or(1, |(k, _)| *k);
            let entries = model.summands(k_last);
            let mut builder = RowSumBuilder::default();
            let mut pushed = 0u64;
            let mut exact = true;
            for &(k, p) in &kept {
                if exact {
                    while pushed < k {
                        if !builder.push(&entries[pushed as usize]) {
                            exact = false;
                            break;
                        }
                        pushed += 1;
                    }
                }
                let (law, extra) = if exact {
                    (builder.law().expect("exact builder"), 0.0)
                } else {
                    empirical = true;
                    empirical_law(model, k, opts)?
                };
                terms.push((k, p, law, extra));
            }
        }
        SumModel::SelfNormalized { .. } => {
            for &(k, p) in &kept {
                let (law, extra) = match row_sum_law(&model.summands(k)) {
                    Some(l) => (l, 0.0),
                    None => {
                        empirical = true;
                        empirical_law(model, k, opts)?
                    }
                };
                terms.push((k, p, law, extra));
            }
        }
    }
    Ok(MixtureTerms {
        terms,
        truncation: table.k_max,
        left_out,
        empirical,
    })
}

fn empirical_law(model: &SumModel, k: u64, opts: &MixtureOptions) -> Result<(Law, f64)> {
    let fb = opts.empirical.ok_or_else(|| {
        Error::NotAnalytic(format!(
            "row sum with {k} summands has no exact law and no Monte Carlo fallback was configured"
        ))
    })?;
    let summands = model.summands(k);
    let mut rng = substream(fb.seed, k);
    let sample: Vec<f64> = (0..fb.samples)
        .map(|_| summands.iter().map(|d| d.sample(&mut rng)).sum())
        .collect();
    Ok((Law::empirical(sample), dkw_bound(fb.samples, fb.alpha)))
}

/// Σ_k P(ν = k) · Δ(row sum up to k, Φ): the mixture of per-k Kolmogorov distances.
pub fn delta_mixture(model: &SumModel, index: &RandomIndex, opts: &MixtureOptions) -> Result<DistanceEstimate> {
    let mt = mixture_terms(model, index, opts)?;
    let normal = Law::standard_normal();
    let mut value = 0.0;
    let mut bound = 0.0;
    for (_, p, law, extra) in &mt.terms {
        let d = kolmogorov_with(law, &normal, &opts.grid);
        value += p * d.value;
        bound += p * (d.bound + extra);
    }
    bound += mt.left_out;
    let method = if mt.empirical { "mixture-empirical" } else { "mixture" };
    Ok(DistanceEstimate::new(value, bound, method)
        .with_param("eta", opts.eta)
        .with_param("truncation", mt.truncation as f64)
        .with_param("terms", mt.terms.len() as f64)
        .with_param("left_out_mass", mt.left_out))
}

/// sup_x |Σ_k P(ν = k) F_k(x) − Φ(x)|: the Kolmogorov distance of the random sum itself.
pub fn delta_randomsum(model: &SumModel, index: &RandomIndex, opts: &MixtureOptions) -> Result<DistanceEstimate> {
    let mt = mixture_terms(model, index, opts)?;
    let extra: f64 = mt.terms.iter().map(|(_, p, _, e)| p * e).sum();
    let mixture = if mt.terms.len() == 1 && mt.left_out == 0.0 && mt.terms[0].1 == 1.0 {
        mt.terms.into_iter().next().expect("one term").2
    } else {
        // renormalize the kept terms; the neglected mass is carried in the bound
        let kept: f64 = mt.terms.iter().map(|(_, p, _, _)| p).sum();
        Law::Mixture(mt.terms.into_iter().map(|(_, p, l, _)| (p / kept, l)).collect())
    };
    let d = kolmogorov_with(&mixture, &Law::standard_normal(), &opts.grid);
    let method = if extra > 0.0 { "randomsum-empirical" } else { "randomsum" };
    Ok(DistanceEstimate::new(d.value, d.bound + extra + mt.left_out, method)
        .with_param("eta", opts.eta)
        .with_param("truncation", mt.truncation as f64)
        .with_param("left_out_mass", mt.left_out))
}
