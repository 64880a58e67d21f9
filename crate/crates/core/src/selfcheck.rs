//! A fast, deterministic run of the core invariants at the smallest useful scale.

use crate::conditions::{implication_suite, rotar, EvalOptions, Functional, RowEvaluator};
use crate::dist::{RandomIndex, ScalarDistribution};
use crate::error::Result;
use crate::mc::empirical_delta;
use crate::metrics::{delta_mixture, kolmogorov, row_sum_law, zeta, Law, MixtureOptions};
use crate::quad::QuadOptions;
use crate::special::norm_cdf;
use crate::tri_array::{Rows, SeriesBase, SumModel, TriangularArray};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    /// tolerance − measured.
    pub slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfcheckReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl SelfcheckReport {
    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

pub fn selfcheck(seed: u64) -> SelfcheckReport {
    selfcheck_with(seed, QuadOptions::default())
}

/// Runs every check with the given quadrature settings.
pub fn selfcheck_with(seed: u64, quad: QuadOptions) -> SelfcheckReport {
    let opts = EvalOptions {
        quad,
        ..EvalOptions::default()
    };
    type Check<'a> = (&'static str, f64, Box<dyn Fn() -> Result<f64> + 'a>);
    let checks: Vec<Check> = vec![
        ("feller_shiryaev_is_half", 1e-12, Box::new(|| {
            let array = TriangularArray::shiryaev(Rows::default());
            let mut ev = RowEvaluator::new(&array, 4, opts)?;
            Ok((ev.classical(Functional::Feller)?.value - 0.5).abs())
        })),
        ("rotar_zero_on_normal", 1e-8, Box::new(|| {
            Ok(rotar(&TriangularArray::shiryaev(Rows::default()), 4, 0.5)?.value)
        })),
        ("abs_moment_quadrature", 1e-9, Box::new(|| {
            let p = 2.5;
            let est = ScalarDistribution::standard_normal().expect_est(
                |x: f64| x.abs().powf(p),
                f64::NEG_INFINITY,
                f64::INFINITY,
                quad,
            )?;
            let exact = 2f64.powf(0.5 * p) * libm::tgamma(0.5 * (p + 1.0)) / std::f64::consts::PI.sqrt();
            Ok((est.value - exact).abs())
        })),
        ("lindeberg_uniform_closed_form", 1e-10, Box::new(|| {
            let (n, eps) = (8u64, 0.1);
            let array = TriangularArray::iid(ScalarDistribution::standard_uniform(), Rows::default())?;
            let mut ev = RowEvaluator::new(&array, n, opts)?;
            let a = (3.0 / n as f64).sqrt();
            let exact = n as f64 * (a.powi(3) - eps * eps * eps) / (3.0 * a);
            Ok((ev.classical(Functional::Lindeberg(eps))?.value - exact).abs())
        })),
        ("deterministic_index_reduction", 1e-10, Box::new(|| {
            let n = 8;
            let array = TriangularArray::iid(ScalarDistribution::standard_uniform(), Rows::default())?;
            let table = RandomIndex::deterministic(n)?.table(opts.eta)?;
            let mut ev = RowEvaluator::new(&array, n, opts)?;
            let mut worst: f64 = 0.0;
            for f in [
                Functional::Lindeberg(0.3),
                Functional::Lyapunov(1.0),
                Functional::Feller,
                Functional::Infinitesimality(0.3),
                Functional::Rotar(0.3),
            ] {
                worst = worst.max((ev.randomized(f, &table)?.value - ev.classical(f)?.value).abs());
            }
            Ok(worst)
        })),
        ("implication_chain", 0.0, Box::new(|| {
            let index = RandomIndex::geometric(0.25)?;
            let arrays = [
                TriangularArray::shiryaev(Rows::default()),
                TriangularArray::rare_jumps(Rows::default()),
                TriangularArray::iid(ScalarDistribution::standard_uniform(), Rows::default())?,
            ];
            let mut violations = 0usize;
            for a in &arrays {
                violations += implication_suite(a, &index, &[4], &[0.5], &[1.0], opts, 1e-9)?.violations().len();
            }
            Ok(violations as f64)
        })),
        ("binomial_enumeration", 1e-12, Box::new(|| {
            let k = 8usize;
            let entry = ScalarDistribution::rademacher().scaled(1.0 / (k as f64).sqrt());
            let law = row_sum_law(&vec![entry; k]).expect("atomic row");
            let d = kolmogorov(&law, &Law::standard_normal());
            let mut oracle: f64 = 0.0;
            let (mut cum, mut c) = (0.0, 1.0);
            for i in 0..=k {
                let x = (2.0 * i as f64 - k as f64) / (k as f64).sqrt();
                oracle = oracle.max((cum - norm_cdf(x)).abs());
                cum += c / 2f64.powi(k as i32);
                oracle = oracle.max((cum - norm_cdf(x)).abs());
                c = c * (k - i) as f64 / (i + 1) as f64;
            }
            Ok((d.value - oracle).abs())
        })),
        ("zeta2_homogeneity", 1e-8, Box::new(|| {
            let (x, y) = (ScalarDistribution::rademacher(), ScalarDistribution::standard_normal());
            let c = 2.0;
            let base = zeta(&Law::Scalar(x.clone()), &Law::Scalar(y.clone()), 2)?.value;
            let scaled = zeta(&Law::Scalar(x.scaled(c)), &Law::Scalar(y.scaled(c)), 2)?.value;
            Ok((scaled / (c * c * base) - 1.0).abs())
        })),
        ("exact_normal_mixture", 1e-10, Box::new(|| {
            Ok(delta_mixture(&exact_normal_model(), &RandomIndex::geometric(0.125)?, &MixtureOptions::default())?.value)
        })),
        ("exact_normal_empirical_within_dkw", 0.0, Box::new(|| {
            let d = empirical_delta(&exact_normal_model(), &RandomIndex::geometric(0.125)?, 10_000, 0.001, seed, 0)?;
            Ok(d.value - d.bound)
        })),
    ];
    let checks: Vec<CheckOutcome> = checks
        .into_iter()
        .map(|(name, tolerance, run)| match run() {
            Ok(measured) => CheckOutcome {
                name: name.into(),
                passed: measured <= tolerance,
                measured,
                tolerance,
                slack: tolerance - measured,
                error: None,
            },
            Err(e) => CheckOutcome {
                name: name.into(),
                passed: false,
                measured: f64::NAN,
                tolerance,
                slack: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect();
    SelfcheckReport {
        seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn exact_normal_model() -> SumModel {
    SumModel::SelfNormalized {
        base_seq: SeriesBase::PowerVariance {
            base: ScalarDistribution::standard_normal(),
            power: 1.0,
        },
    }
}
