use super::law::{row_sum_law, Law};
use super::DistanceEstimate;
use crate::conditions::{InequalityCheck, InequalityReport};
use crate::dist::{RandomIndex, ScalarDistribution};
use crate::error::{invalid, Error, Result};
use crate::quad::{integrate_with_breaks, QuadOptions};
use crate::special::factorial;

const MOMENT_TOL: f64 = 1e-8;
const RANGE_SDS: f64 = 12.0;

fn check_order(s: u32) -> Result<()> {
    if !(1..=3).contains(&s) {
        return Err(invalid("s", format!("order must be 1, 2 or 3, got {s}")));
    }
    Ok(())
}

/// ζₛ(F, G) = ∫ |Δ^{s−1}(x)| dx, where Δ^{s−1} is the (s−1)-fold integrated CDF
/// difference, written through partial moments.
pub fn zeta(f: &Law, g: &Law, s: u32) -> Result<DistanceEstimate> {
    zeta_with(f, g, s, QuadOptions::default())
}

pub fn zeta_with(f: &Law, g: &Law, s: u32, opts: QuadOptions) -> Result<DistanceEstimate> {
    check_order(s)?;
    for order in 0..s {
        let (a, b) = (f.raw_moment(order), g.raw_moment(order));
        if (a - b).abs() > MOMENT_TOL {
            return Err(Error::MomentMismatch { order, s, lhs: a, rhs: b });
        }
    }
    let m = s - 1;
    let mf = factorial(m);
    let (a1, b1) = f.range(RANGE_SDS);
    let (a2, b2) = g.range(RANGE_SDS);
    let (lo, hi) = (a1.min(a2), b1.max(b2));
    let centre = 0.5 * (f.mean() + g.mean());
    let sign = if m % 2 == 0 { -1.0 } else { 1.0 };
    // left of the centre use lower partial moments, right of it the upper ones; the two
    // agree when moments below s coincide, and each side avoids cancellation in its tail
    let integrand = |x: f64| {
        let d = if x <= centre {
            f.lower_partial_moment(m, x) - g.lower_partial_moment(m, x)
        } else {
            sign * (f.upper_partial_moment(m, x) - g.upper_partial_moment(m, x))
        };
        d.abs() / mf
    };
    if !(hi > lo) {
        return Ok(DistanceEstimate::new(0.0, 0.0, "iterated-integral").with_param("s", s as f64));
    }
    let mut pts = vec![lo, hi];
    if centre > lo && centre < hi {
        pts.push(centre);
    }
    let jumps: Vec<f64> = f.jump_points().into_iter().chain(g.jump_points()).filter(|x| *x > lo && *x < hi).collect();
    let opts = QuadOptions {
        max_intervals: opts.max_intervals.max(4 * (jumps.len() + 2)),
        ..opts
    };
    pts.extend(jumps);
    let r = integrate_with_breaks(integrand, &pts, opts)?;
    let sf = factorial(s);
    let tails = (f.lower_partial_moment(s, lo) + g.lower_partial_moment(s, lo)) / sf
        + (f.upper_partial_moment(s, hi) + g.upper_partial_moment(s, hi)) / sf;
    Ok(DistanceEstimate::new(r.value, r.error + tails, "iterated-integral")
        .with_param("s", s as f64)
        .with_param("lo", lo)
        .with_param("hi", hi))
}

/// f with f^{(s−1)} = clamp(x − c, 0, w) (w may be infinite).
fn ramp_antiderivative(s: u32, c: f64, w: f64, x: f64) -> f64 {
    let u = x - c;
    if u <= 0.0 {
        return 0.0;
    }
    if u <= w || w.is_infinite() {
        return u.powi(s as i32) / factorial(s);
    }
    let v = u - w;
    match s {
        1 => w,
        2 => 0.5 * w * w + w * v,
        _ => w * w * w / 6.0 + 0.5 * w * w * v + 0.5 * w * v * v,
    }
}

/// max |E f(X) − E f(Y)| over a deterministic family of admissible test functions:
/// (s−1)-fold antiderivatives of clamped unit-slope ramps and their reflections.
pub fn zeta_lower_bound(f: &Law, g: &Law, s: u32, n_testfns: usize) -> Result<DistanceEstimate> {
    check_order(s)?;
    if n_testfns == 0 {
        return Err(invalid("n_testfns", "need at least one test function"));
    }
    let (m, sd) = {
        let a = f.mean().min(g.mean());
        let b = f.mean().max(g.mean());
        (0.5 * (a + b), f.sd().max(g.sd()).max(1e-12))
    };
    let widths = [0.5 * sd, sd, 2.0 * sd, f64::INFINITY];
    let per_sign = n_testfns.div_ceil(2);
    let opts = QuadOptions::with_abs_tol(1e-12);
    let mut best = 0.0f64;
    let mut best_err = 0.0;
    let mut used = 0;
    'outer: for i in 0..per_sign {
        let t = if per_sign == 1 { 0.5 } else { i as f64 / (per_sign - 1) as f64 };
        let c = m - 4.0 * sd + 8.0 * sd * t;
        let w = widths[i % widths.len()];
        for reflect in [false, true] {
            if used == n_testfns {
                break 'outer;
            }
            used += 1;
            let (kinks, func): (Vec<f64>, Box<dyn Fn(f64) -> f64>) = if reflect {
                (vec![-c, -c - w], Box::new(move |x: f64| ramp_antiderivative(s, c, w, -x)))
            } else {
                (vec![c, c + w], Box::new(move |x: f64| ramp_antiderivative(s, c, w, x)))
            };
            let kinks: Vec<f64> = kinks.into_iter().filter(|k| k.is_finite()).collect();
            let ef = f.expect(|x| func(x), &kinks, opts)?;
            let eg = g.expect(|x| func(x), &kinks, opts)?;
            let d = (ef.value - eg.value).abs();
            if d > best {
                best = d;
                best_err = ef.error + eg.error;
            }
        }
    }
    Ok(DistanceEstimate::new(best, best_err, "testfn-lower-bound")
        .with_param("s", s as f64)
        .with_param("test_functions", used as f64))
}

/// ζₛ of row sums against the sum of entrywise ζₛ, optionally over a random index.
/// With an index the left side compares the two random-sum mixtures and the right side is
/// Σ_k P(ν = k) Σ_{j ≤ k} ζₛ(X_j, Y_j); for identical entries the E ν · ζₛ(X_1, Y_1)
/// form is checked as well.
pub fn semi_additivity_check(
    xs: &[ScalarDistribution],
    ys: &[ScalarDistribution],
    index: Option<&RandomIndex>,
    orders: &[u32],
    eta: f64,
    tol: f64,
) -> Result<InequalityReport> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(invalid("rows", "rows must be non-empty and of equal length"));
    }
    let terms: Vec<(u64, f64)> = match index {
        None => vec![(xs.len() as u64, 1.0)],
        Some(ix) => {
            let t = ix.table(eta)?;
            if t.k_max > xs.len() as u64 {
                return Err(Error::Precondition(format!(
                    "index reaches {} but rows hold {} entries",
                    t.k_max,
                    xs.len()
                )));
            }
            t.terms().collect()
        }
    };
    let law_of = |row: &[ScalarDistribution]| -> Result<Law> {
        row_sum_law(row).ok_or_else(|| Error::NotAnalytic("semi-additivity needs normal or atomic entries".into()))
    };
    let mix = |row: &[ScalarDistribution]| -> Result<Law> {
        if index.is_none() {
            return law_of(row);
        }
        let parts = terms
            .iter()
            .map(|&(k, p)| Ok((p, law_of(&row[..k as usize])?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Law::Mixture(parts))
    };
    let (lx, ly) = (mix(xs)?, mix(ys)?);
    let iid = xs.iter().all(|d| *d == xs[0]) && ys.iter().all(|d| *d == ys[0]);
    let mut checks = Vec::new();
    for &s in orders {
        let lhs = zeta(&lx, &ly, s)?;
        let per: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| zeta(&Law::Scalar(x.clone()), &Law::Scalar(y.clone()), s).map(|d| d.value))
            .collect::<Result<_>>()?;
        let mut prefix = Vec::with_capacity(per.len());
        let mut acc = 0.0;
        for v in &per {
            acc += v;
            prefix.push(acc);
        }
        let rhs: f64 = terms.iter().map(|&(k, p)| p * prefix[(k - 1) as usize]).sum();
        let k = xs.len() as u64;
        let name = if index.is_some() { "zeta(random sums)<=E sum zeta" } else { "zeta(row sums)<=sum zeta" };
        checks.push(InequalityCheck::new(&format!("{name}[s={s}]"), k, f64::NAN, f64::NAN, lhs.value - lhs.bound, rhs, tol, true));
        if iid {
            let mean_index = index.map_or(k as f64, |ix| ix.mean());
            checks.push(InequalityCheck::new(
                &format!("zeta<=E[nu]*zeta_1[s={s}]"),
                k,
                f64::NAN,
                f64::NAN,
                lhs.value - lhs.bound,
                mean_index * per[0],
                tol,
                true,
            ));
        }
    }
    Ok(InequalityReport {
        label: "semi-additivity".into(),
        tolerance: tol,
        checks,
    })
}

/// ζₛ(X + Z, Y + Z) ≤ ζₛ(X, Y) for independent Z, by exact convolution.
pub fn regularity_check(
    x: &ScalarDistribution,
    y: &ScalarDistribution,
    z: &ScalarDistribution,
    s: u32,
    tol: f64,
) -> Result<InequalityCheck> {
    let conv = |a: &ScalarDistribution| {
        row_sum_law(&[a.clone(), z.clone()]).ok_or_else(|| Error::NotAnalytic("regularity check needs normal or atomic laws".into()))
    };
    let lhs = zeta(&conv(x)?, &conv(y)?, s)?;
    let rhs = zeta(&Law::Scalar(x.clone()), &Law::Scalar(y.clone()), s)?;
    Ok(InequalityCheck::new(
        &format!("regularity[s={s}]"),
        0,
        f64::NAN,
        f64::NAN,
        lhs.value - lhs.bound,
        rhs.value + rhs.bound,
        tol,
        true,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn three_point() -> ScalarDistribution {
        let r = 2f64.sqrt();
        ScalarDistribution::finite_discrete(vec![-r, 0.0, r], vec![0.25, 0.5, 0.25]).unwrap()
    }

    #[test]
    fn identical_laws() {
        for s in 1..=3 {
            let d = zeta(&Law::standard_normal(), &Law::standard_normal(), s).unwrap();
            assert_eq!(d.value, 0.0);
            let l = zeta_lower_bound(&Law::standard_normal(), &Law::standard_normal(), s, 16).unwrap();
            assert_eq!(l.value, 0.0);
        }
    }

    #[test]
    fn zeta_one_is_l1_distance_of_cdfs() {
        let a = Law::Scalar(ScalarDistribution::rademacher());
        let b = Law::Scalar(ScalarDistribution::finite_discrete(vec![-1.0, 1.0], vec![0.25, 0.75]).unwrap());
        let d = zeta(&a, &b, 1).unwrap();
        // |F − G| = 1/4 on (−1, 1)
        assert_relative_eq!(d.value, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn moment_mismatch_is_reported() {
        let a = Law::Scalar(ScalarDistribution::rademacher());
        let b = Law::Scalar(ScalarDistribution::normal(0.0, 2.0).unwrap());
        assert!(zeta(&a, &b, 2).is_ok());
        match zeta(&a, &b, 3) {
            Err(Error::MomentMismatch { order, s, .. }) => assert_eq!((order, s), (2, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rademacher_normal_zeta3_matches_trapezoid_and_lower_bound() {
        let a = Law::Scalar(ScalarDistribution::rademacher());
        let b = Law::standard_normal();
        let z = zeta(&a, &b, 3).unwrap();
        // Δ¹ by the midpoint rule (jumps at ±1 sit on cell edges), Δ² and ∫|Δ²| by trapezoids
        let (lo, hi, m) = (-14.0, 14.0, 2_800_000usize);
        let h = (hi - lo) / m as f64;
        let diff = |x: f64| {
            let f = if x > 1.0 { 1.0 } else if x > -1.0 { 0.5 } else { 0.0 };
            f - crate::special::norm_cdf(x)
        };
        let (mut d1, mut d2, mut total) = (0.0, 0.0, 0.0);
        let mut prev_d1 = 0.0;
        let mut prev_abs = 0.0;
        for i in 1..=m {
            let mid = lo + (i as f64 - 0.5) * h;
            d1 += diff(mid) * h;
            d2 += 0.5 * (prev_d1 + d1) * h;
            total += 0.5 * (prev_abs + d2.abs()) * h;
            prev_d1 = d1;
            prev_abs = d2.abs();
        }
        assert!((z.value - total).abs() < 1e-6, "{} vs {total}", z.value);
        let lb = zeta_lower_bound(&a, &b, 3, 64).unwrap();
        assert!(lb.value > 0.0 && lb.value <= z.value + 1e-8, "{lb:?} {z:?}");
    }

    #[test]
    fn homogeneity() {
        let x = ScalarDistribution::rademacher();
        let y = ScalarDistribution::standard_normal();
        for s in 1..=3u32 {
            let base = zeta(&Law::Scalar(x.clone()), &Law::Scalar(y.clone()), s).unwrap();
            for c in [0.5, 2.0, -3.0] {
                let sc = zeta(&Law::Scalar(x.clone().scaled(c)), &Law::Scalar(y.clone().scaled(c)), s).unwrap();
                let want = f64::abs(c).powi(s as i32) * base.value;
                assert!((sc.value - want).abs() <= 1e-8 * want, "s={s} c={c}: {} vs {want}", sc.value);
            }
        }
    }

    #[test]
    fn semi_additivity_rademacher_vs_normal() {
        let xs = vec![ScalarDistribution::rademacher().scaled(0.5); 4];
        let ys = vec![ScalarDistribution::normal(0.0, 0.25).unwrap(); 4];
        let rep = semi_additivity_check(&xs, &ys, None, &[1, 2, 3], 1e-10, 1e-9).unwrap();
        assert!(rep.violations().is_empty(), "{:?}", rep.checks);
        assert!(rep.checks.iter().all(|c| c.slack > 0.0));
        let same = semi_additivity_check(&xs, &xs, None, &[3], 1e-10, 1e-9).unwrap();
        assert_eq!(same.checks[0].lhs, 0.0);
        let ix = RandomIndex::finite_support(vec![2, 4], vec![0.5, 0.5]).unwrap();
        let rep = semi_additivity_check(&xs, &ys, Some(&ix), &[1, 2, 3], 1e-10, 1e-9).unwrap();
        assert!(rep.violations().is_empty(), "{:?}", rep.checks);
    }

    #[test]
    fn regularity() {
        let z = ScalarDistribution::finite_discrete(vec![-0.5, 0.1, 0.7], vec![0.3, 0.3, 0.4]).unwrap();
        for s in 1..=3 {
            let c = regularity_check(&ScalarDistribution::rademacher(), &three_point(), &z, s, 1e-9).unwrap();
            assert!(c.holds, "{c:?}");
        }
    }
}
