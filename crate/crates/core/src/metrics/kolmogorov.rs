use super::law::Law;
use super::DistanceEstimate;
use crate::special::norm_cdf;

/// Sup-search settings for the Kolmogorov distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub points: usize,
    /// Half-width of the initial grid in combined standard deviations.
    pub range_sds: f64,
    pub passes: usize,
    pub refine_top: usize,
    pub refine_factor: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            points: 4097,
            range_sds: 10.0,
            passes: 2,
            refine_top: 16,
            refine_factor: 8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    x: f64,
    fl: f64,
    fr: f64,
    gl: f64,
    gr: f64,
}

impl Point {
    fn eval(x: f64, f: &Law, g: &Law) -> Self {
        Self {
            x,
            fl: f.cdf(x),
            fr: f.cdf_right(x),
            gl: g.cdf(x),
            gr: g.cdf_right(x),
        }
    }

    fn left_gap(&self) -> f64 {
        (self.fl - self.gl).abs()
    }

    fn right_gap(&self) -> f64 {
        (self.fr - self.gr).abs()
    }

    fn gap(&self) -> f64 {
        self.left_gap().max(self.right_gap())
    }
}

/// Closed form for two normal laws: the supremum sits where the densities cross.
fn normal_pair((m1, s1): (f64, f64), (m2, s2): (f64, f64)) -> DistanceEstimate {
    if m1 == m2 && s1 == s2 {
        return DistanceEstimate::new(0.0, 0.0, "exact-identical");
    }
    let diff = |x: f64| (norm_cdf((x - m1) / s1) - norm_cdf((x - m2) / s2)).abs();
    // (x − m2)²/s2² − (x − m1)²/s1² = 2 ln(s1/s2)
    let a = 1.0 / (s2 * s2) - 1.0 / (s1 * s1);
    let b = 2.0 * (m1 / (s1 * s1) - m2 / (s2 * s2));
    let c = m2 * m2 / (s2 * s2) - m1 * m1 / (s1 * s1) - 2.0 * (s1 / s2).ln();
    let mut roots = Vec::new();
    if a.abs() <= 1e-14 * (1.0 / (s1 * s1)).max(1.0 / (s2 * s2)) {
        if b != 0.0 {
            roots.push(-c / b);
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            if q != 0.0 {
                roots.push(q / a);
                roots.push(c / q);
            } else {
                roots.push(0.0);
            }
        }
    }
    let value = roots.into_iter().map(diff).fold(0.0, f64::max);
    DistanceEstimate::new(value, 8.0 * f64::EPSILON, "exact-normal")
}

/// Triangle bound Σ w_i Δ(N_i, G) + |1 − Σ w_i| for a mixture of normals against a normal
/// law, used when it is below what the grid can resolve.
fn normal_mixture(f: &Law, g: &Law) -> Option<DistanceEstimate> {
    let (Law::Mixture(parts), Some(b)) = (f, g.normal_params()) else {
        return None;
    };
    let mut upper = 0.0;
    let mut total = 0.0;
    for (w, l) in parts {
        let d = normal_pair(l.normal_params()?, b);
        upper += w * (d.value + d.bound);
        total += w;
    }
    upper += (1.0 - total).abs();
    (upper < 1e-9).then(|| DistanceEstimate::new(0.5 * upper, 0.5 * upper, "normal-mixture-bound"))
}

/// sup_x |F(x) − G(x)| with left and right limits taken at every atom.
pub fn kolmogorov(f: &Law, g: &Law) -> DistanceEstimate {
    kolmogorov_with(f, g, &GridOptions::default())
}

pub fn kolmogorov_with(f: &Law, g: &Law, opts: &GridOptions) -> DistanceEstimate {
    if f == g {
        return DistanceEstimate::new(0.0, 0.0, "exact-identical");
    }
    if let (Some(a), Some(b)) = (f.normal_params(), g.normal_params()) {
        return normal_pair(a, b);
    }
    if let Some(d) = normal_mixture(f, g).or_else(|| normal_mixture(g, f)) {
        return d;
    }
    let (a1, b1) = f.range(opts.range_sds);
    let (a2, b2) = g.range(opts.range_sds);
    let (mut lo, mut hi) = (a1.min(a2), b1.max(b2));
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let mut xs: Vec<f64> = (0..opts.points)
        .map(|i| lo + (hi - lo) * i as f64 / (opts.points - 1) as f64)
        .collect();
    let jumps_f = f.jump_points();
    let jumps_g = g.jump_points();
    let atomic = !(jumps_f.is_empty() && jumps_g.is_empty());
    xs.extend(jumps_f);
    xs.extend(jumps_g);
    xs.extend(f.kinks());
    xs.extend(g.kinks());
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut pts: Vec<Point> = xs.iter().map(|&x| Point::eval(x, f, g)).collect();

    for _ in 0..opts.passes {
        let mut cells: Vec<(f64, usize)> = pts
            .windows(2)
            .enumerate()
            .map(|(i, w)| (w[0].right_gap().max(w[1].left_gap()), i))
            .collect();
        cells.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut extra = Vec::new();
        for &(_, i) in cells.iter().take(opts.refine_top) {
            let (a, b) = (pts[i].x, pts[i + 1].x);
            for s in 1..opts.refine_factor {
                let x = a + (b - a) * s as f64 / opts.refine_factor as f64;
                if x > a && x < b {
                    extra.push(Point::eval(x, f, g));
                }
            }
        }
        if extra.is_empty() {
            break;
        }
        pts.extend(extra);
        pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    }

    let value = pts.iter().map(Point::gap).fold(0.0, f64::max);
    // inside a cell F − G is continuous with |(F − G)'| ≤ lip and |(F − G)''| ≤ curv;
    // an interior maximum of |F − G| is a critical point, so it exceeds the nearer
    // endpoint by at most curv·(w/2)²/2
    let lip = f.density_bound() + g.density_bound();
    let curv = f.density_slope_bound() + g.density_slope_bound();
    let mut worst: f64 = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let width = b.x - a.x;
        let monotone = (b.fl - a.gr).max(b.gl - a.fr);
        let lipschitz = 0.5 * (a.right_gap() + b.left_gap() + lip * width);
        let curvature = a.right_gap().max(b.left_gap()) + curv * width * width / 8.0;
        worst = worst.max(monotone.min(lipschitz).min(curvature));
    }
    let first = &pts[0];
    let last = &pts[pts.len() - 1];
    worst = worst.max(first.fl.max(first.gl));
    worst = worst.max((1.0 - last.fr).max(1.0 - last.gr));
    let bound = (worst - value).max(0.0);
    let mut est = DistanceEstimate::new(value, bound, if atomic { "exact-atomic" } else { "exact-grid" });
    est.params.insert("grid_points".into(), pts.len() as f64);
    est.params.insert("lo".into(), lo);
    est.params.insert("hi".into(), hi);
    est
}
