//! Seeded Monte Carlo for random sums, empirical Kolmogorov distances and per-n studies.
//!
//! Draws are produced in chunks of [`CHUNK`] samples. Chunk `c` of cell `i` uses the
//! stream `substream(seed, task_id(i, c))`, so the output does not depend on the number
//! of threads. Within a chunk, every sample consumes one index draw followed by `k`
//! entry draws in the order j = 1, …, k.

use crate::conditions::{
    condition_report, randomized, ConditionReport, EvalOptions, Functional, FunctionalSelection, NamedValue,
};
use crate::dist::{RandomIndex, ScalarDistribution};
use crate::error::{invalid, Error, Result};
use crate::metrics::{delta_mixture, delta_randomsum, dkw_bound, DistanceEstimate, GridOptions, MixtureOptions};
use crate::param::IndexSpec;
use crate::rng::{substream, task_id};
use crate::special::norm_cdf;
use crate::tri_array::{SeriesBase, SumModel, TriangularArray};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const CHUNK: usize = 8192;

/// Smallest Monte Carlo sample count a study accepts.
pub const MIN_SAMPLES: usize = 1000;

/// Entries past this many are built on demand instead of being cached.
const MAX_CACHED: u64 = 1 << 22;

/// Precomputed entry laws for repeated draws of one random sum.
#[derive(Debug, Clone)]
pub struct RandomSumSampler {
    index: RandomIndex,
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    /// Every entry of the row has the same law.
    Constant(ScalarDistribution),
    Row {
        array: TriangularArray,
        n: u64,
        entries: Vec<ScalarDistribution>,
    },
    /// Σ_{j ≤ k} (X_j − a_j) / B_k.
    Series {
        base_seq: SeriesBase,
        centered: Vec<ScalarDistribution>,
        /// b2[k] = B²_k, b2[0] = 0.
        b2: Vec<f64>,
    },
}

impl RandomSumSampler {
    pub fn new(model: &SumModel, index: &RandomIndex) -> Result<Self> {
        index.validate()?;
        let cached = index
            .max_support()
            .map_or_else(|| index.truncation(1e-12), Ok)?
            .min(MAX_CACHED);
        let kind = match model {
            SumModel::Array { array, n } => match array {
                TriangularArray::Iid { .. } | TriangularArray::RareJumps { .. } => {
                    SamplerKind::Constant(array.entry(*n, 1))
                }
                _ => SamplerKind::Row {
                    array: array.clone(),
                    n: *n,
                    entries: array.row(*n, cached),
                },
            },
            SumModel::SelfNormalized { base_seq } => {
                let centered: Vec<_> = (1..=cached).map(|j| centered_term(base_seq, j)).collect();
                let mut b2 = Vec::with_capacity(centered.len() + 1);
                b2.push(0.0);
                let mut acc = 0.0;
                for j in 1..=cached {
                    acc += base_seq.variance(j);
                    b2.push(acc);
                }
                SamplerKind::Series {
                    base_seq: base_seq.clone(),
                    centered,
                    b2,
                }
            }
        };
        Ok(Self {
            index: index.clone(),
            kind,
        })
    }

    /// One realization of the random sum.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = self.index.sample(rng);
        match &self.kind {
            SamplerKind::Constant(d) => (0..k).map(|_| d.sample(rng)).sum(),
            SamplerKind::Row { array, n, entries } => {
                let cached = (k as usize).min(entries.len());
                let mut s: f64 = entries[..cached].iter().map(|d| d.sample(rng)).sum();
                if k as usize > entries.len() {
                    let rest = array.row(*n, k);
                    s += rest[entries.len()..].iter().map(|d| d.sample(rng)).sum::<f64>();
                }
                s
            }
            SamplerKind::Series { base_seq, centered, b2 } => {
                let cached = (k as usize).min(centered.len());
                let mut s: f64 = centered[..cached].iter().map(|d| d.sample(rng)).sum();
                let mut var = b2[cached];
                for j in cached as u64 + 1..=k {
                    s += centered_term(base_seq, j).sample(rng);
                    var += base_seq.variance(j);
                }
                s / var.sqrt()
            }
        }
    }
}

fn centered_term(base_seq: &SeriesBase, j: u64) -> ScalarDistribution {
    base_seq.term(j).centered()
}

/// Draws k ~ `index`, then k independent entries, and returns their sum.
pub fn sample_random_sum<R: Rng + ?Sized>(model: &SumModel, index: &RandomIndex, rng: &mut R) -> Result<f64> {
    Ok(RandomSumSampler::new(model, index)?.sample(rng))
}

/// `samples` independent draws for study cell `cell`, in a fixed order.
pub fn draw_random_sums(
    model: &SumModel,
    index: &RandomIndex,
    samples: usize,
    seed: u64,
    cell: u32,
) -> Result<Vec<f64>> {
    let sampler = RandomSumSampler::new(model, index)?;
    let chunks = samples.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, task_id(cell, c as u32));
            let len = CHUNK.min(samples - c * CHUNK);
            (0..len).map(|_| sampler.sample(&mut rng)).collect()
        })
        .collect();
    Ok(parts.concat())
}

/// sup_x |F_M(x) − Φ(x)| for a sample sorted in place.
pub fn ks_statistic(sample: &mut [f64]) -> f64 {
    sample.sort_by(f64::total_cmp);
    let m = sample.len() as f64;
    sample.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let p = norm_cdf(x);
        d.max((i + 1) as f64 / m - p).max(p - i as f64 / m)
    })
}

/// Kolmogorov–Smirnov distance of `samples` draws of the random sum from Φ, with the
/// DKW half-width at level `alpha` as its bound.
pub fn empirical_delta(
    model: &SumModel,
    index: &RandomIndex,
    samples: usize,
    alpha: f64,
    seed: u64,
    cell: u32,
) -> Result<DistanceEstimate> {
    if samples < MIN_SAMPLES {
        return Err(invalid("samples", format!("must be ≥ {MIN_SAMPLES}, got {samples}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    let mut xs = draw_random_sums(model, index, samples, seed, cell)?;
    Ok(DistanceEstimate::new(ks_statistic(&mut xs), dkw_bound(samples, alpha), "empirical")
        .with_param("samples", samples as f64)
        .with_param("alpha", alpha)
        .with_param("seed", seed as f64))
}

/// Which distances a study computes per cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSelection {
    /// Monte Carlo KS distance of the random sum.
    #[serde(default = "yes")]
    pub empirical: bool,
    /// Σ_k P(ν = k) Δ_k, exact where row sums have closed-form laws.
    #[serde(default = "yes")]
    pub mixture: bool,
    /// Exact Kolmogorov distance of the random-sum law.
    #[serde(default = "yes")]
    pub randomsum: bool,
}

fn yes() -> bool {
    true
}

impl Default for DistanceSelection {
    fn default() -> Self {
        Self {
            empirical: true,
            mixture: true,
            randomsum: true,
        }
    }
}

/// Everything a convergence study needs, with n-dependent index parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub label: String,
    pub array: TriangularArray,
    /// Use Σ_{j ≤ ν} (X_j − a_j)/B_ν instead of the row-n sum; needs a series array.
    pub self_normalized: bool,
    pub index: IndexSpec,
    pub n_grid: Vec<u64>,
    pub eps_grid: Vec<f64>,
    pub delta: f64,
    pub samples: usize,
    pub alpha: f64,
    pub seed: u64,
    pub functionals: FunctionalSelection,
    pub distances: DistanceSelection,
    pub eval: EvalOptions,
}

impl StudyPlan {
    pub fn validate(&self) -> Result<()> {
        self.array.check()?;
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(invalid("n", "grid must be nonempty with entries ≥ 1"));
        }
        if self.eps_grid.is_empty() || self.eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(invalid("epsilon", "grid must be nonempty with finite entries > 0"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", format!("must be finite and > 0, got {}", self.delta)));
        }
        if self.samples < MIN_SAMPLES {
            return Err(invalid("samples", format!("must be ≥ {MIN_SAMPLES}, got {}", self.samples)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if self.self_normalized && !matches!(self.array, TriangularArray::Series { .. }) {
            return Err(invalid("self_normalized", "requires a series array"));
        }
        Ok(())
    }

    pub fn model(&self, n: u64) -> SumModel {
        match (&self.array, self.self_normalized) {
            (TriangularArray::Series { base_seq }, true) => SumModel::SelfNormalized {
                base_seq: base_seq.clone(),
            },
            (array, _) => SumModel::Array { array: array.clone(), n },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDistance {
    pub name: String,
    pub estimate: DistanceEstimate,
}

/// Results for one n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub n: u64,
    pub seed: u64,
    pub index: Option<RandomIndex>,
    pub conditions: Vec<ConditionReport>,
    /// RF of the normal array with the same entry variances.
    pub matched_normal_rf: Option<NamedValue>,
    pub distances: Vec<NamedDistance>,
    pub errors: Vec<String>,
}

/// How one metric moves along the n grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub metric: String,
    pub n: Vec<u64>,
    pub values: Vec<f64>,
    /// Each step satisfies v_{i+1} < v_i, or v_{i+1} = 0 once v_i = 0.
    pub strictly_decreasing: bool,
    /// Each step satisfies v_{i+1} ≤ v_i + b_i + b_{i+1} with the reported bounds b.
    pub decreasing_within_bounds: bool,
    pub final_value: f64,
}

impl Trend {
    fn new(metric: String, points: &[(u64, f64, f64)]) -> Self {
        let strictly = points
            .windows(2)
            .all(|w| w[1].1 < w[0].1 || (w[0].1 == 0.0 && w[1].1 == 0.0));
        let within = points.windows(2).all(|w| w[1].1 <= w[0].1 + w[0].2 + w[1].2);
        Trend {
            metric,
            n: points.iter().map(|p| p.0).collect(),
            values: points.iter().map(|p| p.1).collect(),
            strictly_decreasing: strictly,
            decreasing_within_bounds: within,
            final_value: points.last().map_or(f64::NAN, |p| p.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub label: String,
    pub seed: u64,
    pub cells: Vec<StudyCell>,
    pub trends: Vec<Trend>,
}

impl StudyResult {
    pub fn trend(&self, metric: &str) -> Option<&Trend> {
        self.trends.iter().find(|t| t.metric == metric)
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.errors.is_empty()).count()
    }
}

/// Wall-clock time per cell; kept apart from [`StudyResult`], which is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub n: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRun {
    pub result: StudyResult,
    pub timings: Vec<CellTiming>,
}

/// Runs every cell of the plan. Failures inside a cell are recorded in its `errors`.
pub fn run_study(plan: &StudyPlan) -> Result<StudyRun> {
    plan.validate()?;
    let cells: Vec<(StudyCell, CellTiming)> = plan
        .n_grid
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let start = Instant::now();
            let cell = run_cell(plan, i as u32, n);
            let timing = CellTiming {
                n,
                seconds: start.elapsed().as_secs_f64(),
            };
            (cell, timing)
        })
        .collect();
    let (cells, timings): (Vec<_>, Vec<_>) = cells.into_iter().unzip();
    let trends = trends(&cells);
    Ok(StudyRun {
        result: StudyResult {
            label: plan.label.clone(),
            seed: plan.seed,
            cells,
            trends,
        },
        timings,
    })
}

fn run_cell(plan: &StudyPlan, i: u32, n: u64) -> StudyCell {
    let mut cell = StudyCell {
        n,
        seed: plan.seed,
        index: None,
        conditions: Vec::new(),
        matched_normal_rf: None,
        distances: Vec::new(),
        errors: Vec::new(),
    };
    let index = match plan.index.resolve(n) {
        Ok(ix) => ix,
        Err(e) => {
            cell.errors.push(format!("index: {e}"));
            return cell;
        }
    };
    for &eps in &plan.eps_grid {
        match condition_report(&plan.array, Some(&index), n, eps, plan.delta, &plan.functionals, plan.eval) {
            Ok(r) => cell.conditions.push(r),
            Err(e) => cell.errors.push(format!("conditions at epsilon {eps}: {e}")),
        }
    }
    match matched_normal_feller(&plan.array, &index, n, plan.eval.eta) {
        Ok(v) => cell.matched_normal_rf = Some(v),
        Err(e) => cell.errors.push(format!("matched normal RF: {e}")),
    }
    let (distances, errors) = cell_distances(plan, i, n, &index);
    cell.distances = distances;
    cell.errors.extend(errors);
    cell.index = Some(index);
    cell
}

/// The distances selected in `plan` for cell `i` (row `n`), with per-distance failures.
pub fn cell_distances(plan: &StudyPlan, i: u32, n: u64, index: &RandomIndex) -> (Vec<NamedDistance>, Vec<String>) {
    let model = plan.model(n);
    let mopts = MixtureOptions {
        eta: plan.eval.eta,
        grid: GridOptions::default(),
        empirical: None,
    };
    let mut distances = Vec::new();
    let mut errors = Vec::new();
    let mut push = |name: &str, r: Result<DistanceEstimate>| match r {
        Ok(estimate) => distances.push(NamedDistance {
            name: name.to_string(),
            estimate,
        }),
        Err(e) => errors.push(format!("{name}: {e}")),
    };
    if plan.distances.mixture {
        push("mixture", delta_mixture(&model, index, &mopts));
    }
    if plan.distances.randomsum {
        push("randomsum", delta_randomsum(&model, index, &mopts));
    }
    if plan.distances.empirical {
        push(
            "empirical",
            empirical_delta(&model, index, plan.samples, plan.alpha, plan.seed, i),
        );
    }
    (distances, errors)
}

/// Σ_k P(ν = k) max_{j ≤ k} σ²_{n,j} for the normal array with the same variances.
///
/// Feller's functional only sees variances, so this equals RF of the array itself; it is
/// computed separately so the hypothesis on the normal array is reported explicitly.
pub fn matched_normal_feller(array: &TriangularArray, index: &RandomIndex, n: u64, eta: f64) -> Result<NamedValue> {
    let table = index.table(eta)?;
    let vars = array.row_variances(n, table.k_max);
    let mut prefix_max = 0.0f64;
    let mut value = 0.0;
    let mut j = 0usize;
    for (k, p) in table.terms() {
        while (j as u64) < k {
            prefix_max = prefix_max.max(vars[j]);
            j += 1;
        }
        value += p * prefix_max;
    }
    if !value.is_finite() {
        return Err(Error::Precondition("matched normal RF is not finite".into()));
    }
    // same variances, hence the same tail remainder as the array's own RF
    let rf = randomized(Functional::Feller, array, index, n, eta)?;
    Ok(NamedValue {
        functional: "RF_matched_normal".into(),
        value,
        error_bound: rf.error_bound(),
    })
}

fn trends(cells: &[StudyCell]) -> Vec<Trend> {
    let mut out = Vec::new();
    let mut names: Vec<(String, f64)> = Vec::new();
    for c in cells {
        for r in &c.conditions {
            for v in r.rows() {
                let key = (v.functional.clone(), r.epsilon);
                if !names.contains(&key) {
                    names.push(key);
                }
            }
        }
    }
    for (name, eps) in names {
        let points: Vec<(u64, f64, f64)> = cells
            .iter()
            .filter_map(|c| {
                let r = c.conditions.iter().find(|r| r.epsilon == eps)?;
                let v = r.rows().find(|v| v.functional == name)?;
                Some((c.n, v.value, v.error_bound))
            })
            .collect();
        out.push(Trend::new(format!("{name}@{eps}"), &points));
    }
    for name in ["mixture", "randomsum", "empirical"] {
        let points: Vec<(u64, f64, f64)> = cells
            .iter()
            .filter_map(|c| {
                let d = c.distances.iter().find(|d| d.name == name)?;
                Some((c.n, d.estimate.value, d.estimate.bound))
            })
            .collect();
        if !points.is_empty() {
            out.push(Trend::new(name.to_string(), &points));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{kolmogorov, row_sum_law, Law};
    use crate::tri_array::Rows;

    fn rademacher(n: u64) -> SumModel {
        SumModel::Array {
            array: TriangularArray::iid(ScalarDistribution::rademacher(), Rows::default()).unwrap(),
            n,
        }
    }

    #[test]
    fn draws_are_reproducible_and_thread_independent() {
        let m = rademacher(16);
        let ix = RandomIndex::poisson_with_mean(16.0).unwrap();
        let a = draw_random_sums(&m, &ix, 20_000, 7, 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| draw_random_sums(&m, &ix, 20_000, 7, 3).unwrap());
        assert_eq!(a, b);
        let c = draw_random_sums(&m, &ix, 20_000, 7, 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_normal_entry_passes_ks() {
        let m = SumModel::Array {
            array: TriangularArray::explicit(vec![vec![ScalarDistribution::standard_normal()]]).unwrap(),
            n: 1,
        };
        let ix = RandomIndex::deterministic(1).unwrap();
        let d = empirical_delta(&m, &ix, 1_000_000, 0.01, 42, 0).unwrap();
        assert!(d.value <= d.bound, "{d:?}");
    }

    #[test]
    fn rademacher_sum_matches_binomial_pmf() {
        let k = 6u64;
        let m = rademacher(k);
        let ix = RandomIndex::deterministic(k).unwrap();
        let draws = 200_000usize;
        let xs = draw_random_sums(&m, &ix, draws, 1, 0).unwrap();
        let scale = (k as f64).sqrt();
        let mut counts = vec![0usize; k as usize + 1];
        for x in xs {
            let heads = ((x * scale + k as f64) / 2.0).round() as usize;
            counts[heads] += 1;
        }
        let mut c = 1.0;
        for (i, &cnt) in counts.iter().enumerate() {
            let p = c / 2f64.powi(k as i32);
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((cnt as f64 / draws as f64 - p).abs() < 5.0 * se, "atom {i}");
            c = c * (k as f64 - i as f64) / (i as f64 + 1.0);
        }
    }

    #[test]
    fn self_normalized_normal_series_is_standard_normal() {
        let m = SumModel::SelfNormalized {
            base_seq: SeriesBase::PowerVariance {
                base: ScalarDistribution::standard_normal(),
                power: 1.0,
            },
        };
        let ix = RandomIndex::geometric(1.0 / 8.0).unwrap();
        let d = empirical_delta(&m, &ix, 1_000_000, 0.01, 42, 0).unwrap();
        assert!(d.value <= d.bound, "{d:?}");
    }

    #[test]
    fn empirical_rademacher_within_dkw_of_enumeration() {
        let n = 1 << 10;
        let m = rademacher(n);
        let ix = RandomIndex::deterministic(n).unwrap();
        let exact = kolmogorov(&row_sum_law(&m.summands(n)).unwrap(), &Law::standard_normal());
        let d = empirical_delta(&m, &ix, 100_000, 0.01, 5, 0).unwrap();
        assert!((d.value - exact.value).abs() <= d.bound, "{} vs {}", d.value, exact.value);
    }

    #[test]
    fn dkw_shrinks_by_root_two() {
        let m = rademacher(4);
        let ix = RandomIndex::deterministic(4).unwrap();
        let a = empirical_delta(&m, &ix, 4000, 0.01, 1, 0).unwrap();
        let b = empirical_delta(&m, &ix, 8000, 0.01, 1, 0).unwrap();
        assert!((b.bound / a.bound - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(empirical_delta(&m, &ix, 999, 0.01, 1, 0).is_err());
    }

    #[test]
    fn ks_statistic_by_hand() {
        let mut xs = vec![0.0, -1.0];
        // sorted: −1, 0; D = max(0.5 − Φ(−1), Φ(−1), 1 − 0.5, 0.5 − 0.5)
        let want = (0.5 - norm_cdf(-1.0)).max(norm_cdf(-1.0)).max(0.5);
        assert_eq!(ks_statistic(&mut xs), want);
    }

    fn small_plan() -> StudyPlan {
        StudyPlan {
            label: "uniform-poisson".into(),
            array: TriangularArray::iid(ScalarDistribution::standard_uniform(), Rows::default()).unwrap(),
            self_normalized: false,
            index: IndexSpec::Poisson {
                mean: crate::param::Param::times_n(1.0),
            },
            n_grid: vec![4, 16, 64],
            eps_grid: vec![0.5],
            delta: 1.0,
            samples: 20_000,
            alpha: 0.01,
            seed: 42,
            functionals: FunctionalSelection::default(),
            distances: DistanceSelection {
                empirical: true,
                mixture: false,
                randomsum: false,
            },
            eval: EvalOptions::default(),
        }
    }

    #[test]
    fn study_is_deterministic_and_reports_trends() {
        let plan = small_plan();
        let a = run_study(&plan).unwrap();
        let b = run_study(&plan).unwrap();
        assert_eq!(
            serde_json::to_string(&a.result).unwrap(),
            serde_json::to_string(&b.result).unwrap()
        );
        assert_eq!(a.result.failed_cells(), 0);
        let rl = a.result.trend("RL@0.5").unwrap();
        assert!(rl.strictly_decreasing, "{rl:?}");
        let rf = a.result.trend("RF@0.5").unwrap();
        for c in &a.result.cells {
            let mf = c.matched_normal_rf.as_ref().unwrap();
            let rf_cell = c.conditions[0].get("RF").unwrap();
            assert!((mf.value - rf_cell).abs() < 1e-12);
        }
        assert_eq!(rf.values.len(), 3);
        assert!(a.result.trend("empirical").is_some());
    }

    #[test]
    fn study_records_cell_errors_and_continues() {
        let mut plan = small_plan();
        plan.distances.mixture = true;
        let run = run_study(&plan).unwrap();
        assert!(run.result.cells.iter().all(|c| c.errors.iter().any(|e| e.starts_with("mixture"))));
        assert!(run.result.cells.iter().all(|c| c.distances.iter().any(|d| d.name == "empirical")));
    }
}
