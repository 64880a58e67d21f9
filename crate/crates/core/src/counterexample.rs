//! The Shiryaev array: a normal array that satisfies the central limit theorem while
//! failing the Lindeberg, Feller and infinitesimality conditions.

use crate::conditions::{EvalOptions, Functional, RowEvaluator};
use crate::config::CounterexampleSettings;
use crate::error::Result;
use crate::metrics::{kolmogorov, row_sum_law, Law};
use crate::rng::{substream, task_id};
use crate::special::norm_sf;
use crate::tri_array::{Rows, TriangularArray};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub name: String,
    pub n: u64,
    pub epsilon: Option<f64>,
    pub value: f64,
    /// The value must stay on the correct side of this threshold.
    pub threshold: f64,
    pub holds: bool,
}

/// Monte Carlo estimate of L(ε) for one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindebergOracle {
    pub n: u64,
    pub epsilon: f64,
    pub computed: f64,
    pub oracle: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub settings: CounterexampleSettings,
    pub seed: u64,
    pub findings: Vec<Finding>,
    pub lindeberg: Vec<LindebergOracle>,
    pub passed: bool,
}

impl CounterexampleReport {
    pub fn first_violation(&self) -> Option<&Finding> {
        self.findings.iter().find(|f| !f.holds)
    }
}

/// Σ_j E[X²_{n,j} 1{|X_{n,j}| > ε}] estimated from `samples` draws per entry.
fn lindeberg_oracle(array: &TriangularArray, n: u64, eps: f64, samples: usize, seed: u64) -> (f64, f64) {
    let (mut total, mut var) = (0.0, 0.0);
    for (j, d) in array.row(n, array.row_length(n)).iter().enumerate() {
        let mut rng = substream(seed, task_id(n as u32, j as u32));
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..samples {
            let x = d.sample(&mut rng);
            let y = if x.abs() > eps { x * x } else { 0.0 };
            s += y;
            s2 += y * y;
        }
        let m = samples as f64;
        let mean = s / m;
        total += mean;
        var += (s2 / m - mean * mean).max(0.0) / (m - 1.0);
    }
    (total, var.sqrt())
}

/// Runs the five findings in order: exact CLT distance, F = 1/2, L bounded away from 0,
/// I not vanishing, R within tolerance.
pub fn counterexample(settings: &CounterexampleSettings, seed: u64, opts: EvalOptions) -> Result<CounterexampleReport> {
    let array = TriangularArray::shiryaev(Rows::default());
    let mut clt = Vec::new();
    let mut feller = Vec::new();
    let mut lind = Vec::new();
    let mut infin = Vec::new();
    let mut rot = Vec::new();
    let mut oracles = Vec::new();
    let eps_l = settings.lindeberg_epsilon;
    for &n in &settings.n {
        let mut ev = RowEvaluator::new(&array, n, opts)?;
        let k = ev.row_length;
        let law = row_sum_law(&array.row(n, k)).expect("normal rows have exact sums");
        let d = kolmogorov(&law, &Law::standard_normal());
        clt.push(Finding {
            name: "clt_distance_zero".into(),
            n,
            epsilon: None,
            value: d.value + d.bound,
            threshold: settings.clt_tol,
            holds: d.value + d.bound <= settings.clt_tol,
        });
        let f = ev.classical(Functional::Feller)?.value;
        feller.push(Finding {
            name: "feller_is_half".into(),
            n,
            epsilon: None,
            value: f,
            threshold: settings.feller_tol,
            holds: (f - 0.5).abs() <= settings.feller_tol,
        });
        let l = ev.classical(Functional::Lindeberg(eps_l))?.value;
        let (oracle, se) = lindeberg_oracle(&array, n, eps_l, settings.oracle_samples, seed);
        oracles.push(LindebergOracle {
            n,
            epsilon: eps_l,
            computed: l,
            oracle,
            standard_error: se,
        });
        for &eps in &settings.epsilon {
            // the largest entry has variance 1/2 in every row
            let floor = 2.0 * norm_sf(eps * std::f64::consts::SQRT_2);
            let i = ev.classical(Functional::Infinitesimality(eps))?.value;
            infin.push(Finding {
                name: "infinitesimality_not_vanishing".into(),
                n,
                epsilon: Some(eps),
                value: i,
                threshold: floor,
                holds: i >= floor - 1e-12,
            });
            let r = ev.classical(Functional::Rotar(eps))?;
            rot.push(Finding {
                name: "rotar_within_tolerance".into(),
                n,
                epsilon: Some(eps),
                value: r.value + r.error,
                threshold: settings.rotar_tol,
                holds: r.value + r.error <= settings.rotar_tol,
            });
        }
    }
    let first = oracles.first().map_or(0.0, |o| o.oracle);
    for o in &oracles {
        let floor = (o.oracle - 3.0 * o.standard_error).max(0.0);
        lind.push(Finding {
            name: "lindeberg_matches_oracle".into(),
            n: o.n,
            epsilon: Some(o.epsilon),
            value: o.computed,
            threshold: floor,
            holds: o.computed >= floor,
        });
        lind.push(Finding {
            name: "lindeberg_bounded_away".into(),
            n: o.n,
            epsilon: Some(o.epsilon),
            value: o.computed,
            threshold: 0.5 * first,
            holds: o.computed >= 0.5 * first && o.computed > 0.0,
        });
    }
    let findings: Vec<Finding> = [clt, feller, lind, infin, rot].concat();
    Ok(CounterexampleReport {
        settings: settings.clone(),
        seed,
        passed: findings.iter().all(|f| f.holds),
        findings,
        lindeberg: oracles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_run_holds() {
        let s = CounterexampleSettings {
            oracle_samples: 20_000,
            ..CounterexampleSettings::default()
        };
        let r = counterexample(&s, 42, EvalOptions::default()).unwrap();
        assert!(r.passed, "{:#?}", r.first_violation());
        // nonincreasing Lindeberg values along the grid
        for w in r.lindeberg.windows(2) {
            assert!(w[1].computed <= w[0].computed + 1e-12);
        }
    }

    #[test]
    fn tightened_rotar_tolerance_still_holds() {
        let s = CounterexampleSettings {
            rotar_tol: 1e-14,
            oracle_samples: 1000,
            ..CounterexampleSettings::default()
        };
        let r = counterexample(&s, 1, EvalOptions::default()).unwrap();
        assert!(r.findings.iter().filter(|f| f.name == "rotar_within_tolerance").all(|f| f.holds));
    }
}
