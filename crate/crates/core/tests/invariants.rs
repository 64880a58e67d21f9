use randsum_core::mc::empirical_delta;
use randsum_core::metrics::{delta_mixture, delta_randomsum, MixtureOptions};
use randsum_core::{RandomIndex, Rows, ScalarDistribution, SeriesBase, SumModel, TriangularArray};

fn exact_normal_series() -> SumModel {
    SumModel::SelfNormalized {
        base_seq: SeriesBase::PowerVariance {
            base: ScalarDistribution::standard_normal(),
            power: 1.0,
        },
    }
}

#[test]
fn exact_normal_sums_stay_within_dkw_at_level_one_in_a_thousand() {
    let model = exact_normal_series();
    let ix = RandomIndex::geometric(1.0 / 16.0).unwrap();
    let misses = (0..1000u64)
        .filter(|&seed| {
            let d = empirical_delta(&model, &ix, 2000, 0.001, seed, 0).unwrap();
            d.value > d.bound
        })
        .count();
    assert!(misses <= 1, "{misses} of 1000 repetitions exceeded the DKW bound");
}

#[test]
fn exact_distances_lie_within_the_empirical_band() {
    let rademacher = TriangularArray::iid(ScalarDistribution::rademacher(), Rows::default()).unwrap();
    let two_point = TriangularArray::iid(ScalarDistribution::two_point(-1.0, 3.0, 0.75).unwrap(), Rows::default()).unwrap();
    let cases = [
        (SumModel::Array { array: rademacher.clone(), n: 16 }, RandomIndex::deterministic(16).unwrap()),
        (SumModel::Array { array: rademacher, n: 16 }, RandomIndex::poisson_with_mean(12.0).unwrap()),
        (SumModel::Array { array: two_point, n: 12 }, RandomIndex::finite_support(vec![4, 12], vec![0.5, 0.5]).unwrap()),
        (exact_normal_series(), RandomIndex::poisson_with_mean(32.0).unwrap()),
    ];
    let opts = MixtureOptions::default();
    for (cell, (model, ix)) in cases.iter().enumerate() {
        let emp = empirical_delta(model, ix, 100_000, 0.01, 42, cell as u32).unwrap();
        // the random-sum law is the one sampled; Σ P(ν = k) Δ_k coincides with it for a
        // deterministic index or a normal mixture
        let exact = delta_randomsum(model, ix, &opts).unwrap();
        assert!((exact.value - emp.value).abs() <= emp.bound + exact.bound, "case {cell}: {exact:?} vs {emp:?}");
        if matches!(ix, RandomIndex::Deterministic { .. }) || matches!(model, SumModel::SelfNormalized { .. }) {
            let mix = delta_mixture(model, ix, &opts).unwrap();
            assert!((mix.value - emp.value).abs() <= emp.bound + mix.bound, "case {cell}: {mix:?} vs {emp:?}");
        }
    }
}
