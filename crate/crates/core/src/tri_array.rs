//! Triangular arrays {X_{n,j}} of independent, centered, row-normalized entries.
//!
//! Rows are infinite in `j`: `entry(n, j)` is defined for every `j ≥ 1`, including
//! `j > k_n`, so that sums over a random number of entries are well defined.

use crate::dist::ScalarDistribution;
use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Row length rule `k_n = multiplier · n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Rows {
    pub multiplier: u64,
}

impl Default for Rows {
    fn default() -> Self {
        Self { multiplier: 1 }
    }
}

impl Rows {
    pub fn times(multiplier: u64) -> Self {
        Self { multiplier }
    }

    pub fn length(&self, n: u64) -> u64 {
        self.multiplier * n
    }
}

impl TryFrom<String> for Rows {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let coef = t
            .strip_suffix('n')
            .ok_or_else(|| format!("row rule must look like \"n\" or \"2n\", got {s:?}"))?;
        let coef = coef.strip_suffix('*').unwrap_or(coef);
        let multiplier = if coef.is_empty() {
            1
        } else {
            coef.parse::<u64>()
                .map_err(|_| format!("row rule multiplier must be a positive integer, got {s:?}"))?
        };
        if multiplier == 0 {
            return Err("row rule multiplier must be positive".into());
        }
        Ok(Self { multiplier })
    }
}

impl From<Rows> for String {
    fn from(r: Rows) -> String {
        r.to_string()
    }
}

impl fmt::Display for Rows {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.multiplier == 1 {
            write!(f, "n")
        } else {
            write!(f, "{}n", self.multiplier)
        }
    }
}

/// A sequence of independent variables X_1, X_2, … with means a_j and variances σ²_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeriesBase {
    /// X_j i.i.d. copies of `base`.
    Iid { base: ScalarDistribution },
    /// X_1 ~ N(0, 1), X_j ~ N(0, 2^{j−2}) for j ≥ 2.
    Shiryaev,
    /// X_j ~ N(j, var).
    ShiftedNormals { var: f64 },
    /// X_j = j^{power/2} · (Y − E Y) with Y ~ `base`, so σ²_j = j^power · Var Y.
    PowerVariance { base: ScalarDistribution, power: f64 },
}

impl SeriesBase {
    pub fn validate(&self) -> Result<()> {
        match self {
            SeriesBase::Iid { base } | SeriesBase::PowerVariance { base, .. } => {
                base.validate()?;
                if !(base.variance() > 0.0) {
                    return Err(Error::ZeroVariance("series base has zero variance".into()));
                }
            }
            SeriesBase::Shiryaev => {}
            SeriesBase::ShiftedNormals { var } => {
                if !(*var > 0.0 && var.is_finite()) {
                    return Err(invalid("var", format!("must be finite and > 0, got {var}")));
                }
            }
        }
        if let SeriesBase::PowerVariance { power, .. } = self {
            if !power.is_finite() {
                return Err(invalid("power", "must be finite"));
            }
        }
        Ok(())
    }

    /// Law of X_j.
    pub fn term(&self, j: u64) -> ScalarDistribution {
        match self {
            SeriesBase::Iid { base } => base.clone(),
            SeriesBase::Shiryaev => ScalarDistribution::Normal {
                mean: 0.0,
                var: shiryaev_base_variance(j),
            },
            SeriesBase::ShiftedNormals { var } => ScalarDistribution::Normal {
                mean: j as f64,
                var: *var,
            },
            SeriesBase::PowerVariance { base, power } => {
                base.clone().centered().scaled((j as f64).powf(0.5 * power))
            }
        }
    }

    pub fn mean(&self, j: u64) -> f64 {
        match self {
            SeriesBase::ShiftedNormals { .. } => j as f64,
            SeriesBase::Iid { base } => base.mean(),
            _ => 0.0,
        }
    }

    pub fn variance(&self, j: u64) -> f64 {
        match self {
            SeriesBase::Iid { base } => base.variance(),
            SeriesBase::Shiryaev => shiryaev_base_variance(j),
            SeriesBase::ShiftedNormals { var } => *var,
            SeriesBase::PowerVariance { base, power } => (j as f64).powf(*power) * base.variance(),
        }
    }

    /// B²_n = Σ_{j ≤ n} σ²_j.
    pub fn b2(&self, n: u64) -> f64 {
        match self {
            SeriesBase::Iid { base } => n as f64 * base.variance(),
            SeriesBase::Shiryaev => 2f64.powi(n as i32 - 1),
            SeriesBase::ShiftedNormals { var } => n as f64 * var,
            SeriesBase::PowerVariance { .. } => (1..=n).map(|j| self.variance(j)).sum(),
        }
    }

    /// (X_j − a_j) / B with B² = `b2`.
    fn normalized_term(&self, j: u64, b2: f64) -> ScalarDistribution {
        let centered = match self {
            SeriesBase::ShiftedNormals { var } => ScalarDistribution::Normal { mean: 0.0, var: *var },
            SeriesBase::Iid { base } => base.clone().centered(),
            _ => self.term(j),
        };
        centered.divided_by_sqrt(b2)
    }
}

fn shiryaev_base_variance(j: u64) -> f64 {
    if j <= 1 {
        1.0
    } else {
        2f64.powi(j as i32 - 2)
    }
}

/// Generator of row-n entry laws with a designated row length k_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "array", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TriangularArray {
    /// X_{n,j} = (Y − E Y)/√(k_n Var Y) for a fixed base law Y.
    Iid {
        base: ScalarDistribution,
        #[serde(default)]
        rows: Rows,
    },
    /// Normal entries X_j/B_n with Var X_1 = 1, Var X_j = 2^{j−2}, B²_n = 2^{k_n − 1}.
    Shiryaev {
        #[serde(default)]
        rows: Rows,
    },
    /// Series form X_{n,j} = (X_j − a_j)/B_n with k_n = n.
    Series { base_seq: SeriesBase },
    /// Entries ±1 with probability 1/(2k_n) each and 0 otherwise: Feller holds, Lindeberg fails.
    RareJumps {
        #[serde(default)]
        rows: Rows,
    },
    /// Literal rows; row n uses the last listed row when n exceeds the list, and
    /// entries past the row end are point masses at 0. No normalization is applied.
    Explicit { rows: Vec<Vec<ScalarDistribution>> },
}

impl TriangularArray {
    pub fn iid(base: ScalarDistribution, rows: Rows) -> Result<Self> {
        let a = TriangularArray::Iid { base, rows };
        a.check()?;
        Ok(a)
    }

    pub fn shiryaev(rows: Rows) -> Self {
        TriangularArray::Shiryaev { rows }
    }

    pub fn from_series(base_seq: SeriesBase) -> Result<Self> {
        let a = TriangularArray::Series { base_seq };
        a.check()?;
        Ok(a)
    }

    pub fn rare_jumps(rows: Rows) -> Self {
        TriangularArray::RareJumps { rows }
    }

    pub fn explicit(rows: Vec<Vec<ScalarDistribution>>) -> Result<Self> {
        let a = TriangularArray::Explicit { rows };
        a.check()?;
        Ok(a)
    }

    /// Structural checks on the descriptor (not the (B)/(C) conditions, see [`validate`]).
    ///
    /// [`validate`]: TriangularArray::validate
    pub fn check(&self) -> Result<()> {
        match self {
            TriangularArray::Iid { base, .. } => {
                base.validate()?;
                if !(base.variance() > 0.0) {
                    return Err(Error::ZeroVariance("i.i.d. base has zero variance".into()));
                }
            }
            TriangularArray::Series { base_seq } => base_seq.validate()?,
            TriangularArray::Explicit { rows } => {
                if rows.is_empty() || rows.iter().any(|r| r.is_empty()) {
                    return Err(invalid("rows", "explicit rows must be non-empty"));
                }
                for d in rows.iter().flatten() {
                    d.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            TriangularArray::Iid { base, rows } => format!("iid-{}-k={rows}", base.family()),
            TriangularArray::Shiryaev { rows } => format!("shiryaev-k={rows}"),
            TriangularArray::Series { base_seq } => match base_seq {
                SeriesBase::Iid { base } => format!("series-iid-{}", base.family()),
                SeriesBase::Shiryaev => "series-shiryaev".into(),
                SeriesBase::ShiftedNormals { .. } => "series-shifted-normals".into(),
                SeriesBase::PowerVariance { base, power } => {
                    format!("series-power{power}-{}", base.family())
                }
            },
            TriangularArray::RareJumps { rows } => format!("rare-jumps-k={rows}"),
            TriangularArray::Explicit { .. } => "explicit".into(),
        }
    }

    /// k_n.
    pub fn row_length(&self, n: u64) -> u64 {
        match self {
            TriangularArray::Iid { rows, .. }
            | TriangularArray::Shiryaev { rows }
            | TriangularArray::RareJumps { rows } => rows.length(n),
            TriangularArray::Series { .. } => n,
            TriangularArray::Explicit { rows } => self.explicit_row(rows, n).len() as u64,
        }
    }

    fn explicit_row<'a>(&self, rows: &'a [Vec<ScalarDistribution>], n: u64) -> &'a [ScalarDistribution] {
        let i = (n.max(1) as usize).min(rows.len()) - 1;
        &rows[i]
    }

    /// Law of X_{n,j}.
    pub fn entry(&self, n: u64, j: u64) -> ScalarDistribution {
        self.row(n, j).pop().expect("row holds j ≥ 1 entries")
    }

    /// Laws of X_{n,1}, …, X_{n,upto}.
    pub fn row(&self, n: u64, upto: u64) -> Vec<ScalarDistribution> {
        let k = self.row_length(n);
        match self {
            TriangularArray::Iid { base, .. } => {
                let e = base.clone().centered().divided_by_sqrt(k as f64 * base.variance());
                vec![e; upto as usize]
            }
            TriangularArray::Shiryaev { .. } => (1..=upto)
                .map(|j| ScalarDistribution::Normal {
                    mean: 0.0,
                    var: shiryaev_entry_variance(j, k),
                })
                .collect(),
            TriangularArray::Series { base_seq } => {
                let b2 = base_seq.b2(n);
                match base_seq {
                    SeriesBase::Shiryaev => (1..=upto)
                        .map(|j| ScalarDistribution::Normal {
                            mean: 0.0,
                            var: shiryaev_entry_variance(j, n),
                        })
                        .collect(),
                    _ => (1..=upto).map(|j| base_seq.normalized_term(j, b2)).collect(),
                }
            }
            TriangularArray::RareJumps { .. } => {
                let q = 1.0 / k as f64;
                let e = ScalarDistribution::FiniteDiscrete {
                    atoms: vec![-1.0, 0.0, 1.0],
                    probs: vec![0.5 * q, 1.0 - q, 0.5 * q],
                };
                vec![e; upto as usize]
            }
            TriangularArray::Explicit { rows } => {
                let r = self.explicit_row(rows, n);
                (0..upto as usize)
                    .map(|i| r.get(i).cloned().unwrap_or_else(|| ScalarDistribution::point_mass(0.0)))
                    .collect()
            }
        }
    }

    /// Variances of X_{n,1}, …, X_{n,upto}.
    pub fn row_variances(&self, n: u64, upto: u64) -> Vec<f64> {
        match self {
            TriangularArray::Iid { .. } | TriangularArray::RareJumps { .. } => {
                let v = self.entry(n, 1).variance();
                vec![v; upto as usize]
            }
            TriangularArray::Shiryaev { .. } => {
                let k = self.row_length(n);
                (1..=upto).map(|j| shiryaev_entry_variance(j, k)).collect()
            }
            _ => self.row(n, upto).iter().map(|d| d.variance()).collect(),
        }
    }

    /// Σ_{j ≤ k} Var X_{n,j}.
    pub fn prefix_variance(&self, n: u64, k: u64) -> f64 {
        self.row_variances(n, k).iter().sum()
    }

    /// Checks conditions (B) zero means and (C) unit variance sum on row `n`.
    pub fn validate(&self, n: u64, tol: &ValidationTolerance) -> ValidationReport {
        let k = self.row_length(n);
        let row = self.row(n, k);
        let mean_residual = row.iter().map(|d| d.mean().abs()).fold(0.0, f64::max);
        let var_sum: f64 = row.iter().map(|d| d.variance()).sum();
        let variance_residual = (var_sum - 1.0).abs();
        ValidationReport {
            n,
            row_length: k,
            mean_residual,
            variance_sum: var_sum,
            variance_residual,
            zero_means: mean_residual <= tol.mean,
            unit_variance: variance_residual <= tol.variance_sum,
            independent: true,
        }
    }
}

/// Var X_{n,j} = 2^{j−2}/2^{k−1} (j ≥ 2), 1/2^{k−1} (j = 1), formed as an exact power of two.
fn shiryaev_entry_variance(j: u64, k: u64) -> f64 {
    let e = if j <= 1 { -(k as i64 - 1) } else { j as i64 - 2 - (k as i64 - 1) };
    2f64.powi(e.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationTolerance {
    pub mean: f64,
    pub variance_sum: f64,
}

impl Default for ValidationTolerance {
    fn default() -> Self {
        Self {
            mean: 1e-12,
            variance_sum: 1e-10,
        }
    }
}

/// Per-condition outcome of [`TriangularArray::validate`]. Failures are data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: u64,
    pub row_length: u64,
    /// max_j |E X_{n,j}| over j ≤ k_n.
    pub mean_residual: f64,
    pub variance_sum: f64,
    /// |Σ_{j ≤ k_n} Var X_{n,j} − 1|.
    pub variance_residual: f64,
    pub zero_means: bool,
    pub unit_variance: bool,
    /// Entries are independent by construction.
    pub independent: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.zero_means && self.unit_variance && self.independent
    }
}

/// What a "random sum" means for a study: either the row-n array summed up to ν, or the
/// self-normalized series sum Σ_{j ≤ ν} (X_j − a_j)/B_ν.
#[derive(Debug, Clone, PartialEq)]
pub enum SumModel {
    Array { array: TriangularArray, n: u64 },
    SelfNormalized { base_seq: SeriesBase },
}

impl SumModel {
    /// Entry laws whose sum is the random sum on the event {ν = k}.
    pub fn summands(&self, k: u64) -> Vec<ScalarDistribution> {
        match self {
            SumModel::Array { array, n } => array.row(*n, k),
            SumModel::SelfNormalized { base_seq } => {
                TriangularArray::Series { base_seq: base_seq.clone() }.row(k, k)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn iid_rademacher_row() {
        let a = TriangularArray::iid(ScalarDistribution::rademacher(), Rows::default()).unwrap();
        let row = a.row(4, 4);
        assert!(row.iter().all(|d| *d == ScalarDistribution::rademacher().scaled(0.5)));
        assert_eq!(a.prefix_variance(4, 4), 1.0);
    }

    #[test]
    fn iid_uniform_single_entry() {
        let a = TriangularArray::iid(ScalarDistribution::standard_uniform(), Rows::default()).unwrap();
        let e = a.entry(1, 1);
        assert_relative_eq!(e.variance(), 1.0, max_relative = 1e-15);
        assert_eq!(e.mean(), 0.0);
    }

    #[test]
    fn iid_normal_double_rows() {
        let a = TriangularArray::iid(ScalarDistribution::standard_normal(), Rows::times(2)).unwrap();
        assert_eq!(a.row_length(3), 6);
        for d in a.row(3, 6) {
            assert_eq!(d, ScalarDistribution::Normal { mean: 0.0, var: 1.0 / 6.0 });
        }
        assert!(a.validate(3, &ValidationTolerance::default()).passed());
    }

    #[test]
    fn iid_auto_centers() {
        let a = TriangularArray::iid(ScalarDistribution::uniform(1.0, 3.0).unwrap(), Rows::default()).unwrap();
        let r = a.validate(7, &ValidationTolerance::default());
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn zero_variance_base_rejected() {
        let err = TriangularArray::iid(ScalarDistribution::point_mass(0.0), Rows::default()).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance(_)));
    }

    #[test]
    fn shiryaev_rows() {
        let a = TriangularArray::shiryaev(Rows::default());
        let r2 = a.row(2, 2);
        assert_eq!(r2, vec![ScalarDistribution::Normal { mean: 0.0, var: 0.5 }; 2]);
        for k in 2..40u64 {
            let max = a.row_variances(k, k).into_iter().fold(0.0, f64::max);
            assert_eq!(max, 0.5);
        }
        // 1 + 1 + 2 + 4 + 8 over 16
        let oracle = (1.0 + 1.0 + 2.0 + 4.0 + 8.0) / 16.0;
        assert!((a.prefix_variance(5, 5) - oracle).abs() <= 1e-12);
        assert!(a.validate(8, &ValidationTolerance::default()).passed());
    }

    #[test]
    fn series_forms() {
        let iid = TriangularArray::from_series(SeriesBase::Iid { base: ScalarDistribution::standard_normal() }).unwrap();
        assert_eq!(iid.entry(9, 3), ScalarDistribution::Normal { mean: 0.0, var: 1.0 / 9.0 });
        let shifted = TriangularArray::from_series(SeriesBase::ShiftedNormals { var: 2.0 }).unwrap();
        for d in shifted.row(5, 12) {
            assert_eq!(d.mean(), 0.0);
        }
        let s = TriangularArray::from_series(SeriesBase::Shiryaev).unwrap();
        let direct = TriangularArray::shiryaev(Rows::default());
        for n in 1..30 {
            assert_eq!(s.row(n, n + 5), direct.row(n, n + 5));
        }
    }

    #[test]
    fn series_variances_closed_form() {
        let sb = SeriesBase::PowerVariance { base: ScalarDistribution::standard_uniform(), power: 1.0 };
        let a = TriangularArray::from_series(sb.clone()).unwrap();
        for n in [1u64, 4, 17] {
            let b2: f64 = (1..=n).map(|j| j as f64).sum();
            for (j, v) in a.row_variances(n, n + 3).into_iter().enumerate() {
                assert_relative_eq!(v, (j + 1) as f64 / b2, max_relative = 1e-14);
            }
            assert!(a.validate(n, &ValidationTolerance::default()).passed());
        }
    }

    #[test]
    fn misscaled_array_fails_condition_c() {
        let e = ScalarDistribution::normal(0.0, 0.5).unwrap();
        let a = TriangularArray::explicit(vec![vec![e; 4]]).unwrap();
        let r = a.validate(3, &ValidationTolerance::default());
        assert!(r.zero_means);
        assert!(!r.unit_variance);
        assert_relative_eq!(r.variance_residual, 1.0, max_relative = 1e-15);
        assert_eq!(a.entry(3, 9), ScalarDistribution::point_mass(0.0));
    }

    #[test]
    fn rows_parse() {
        let r: Rows = serde_json::from_str("\"2n\"").unwrap();
        assert_eq!(r.multiplier, 2);
        let r: Rows = serde_json::from_str("\"3*n\"").unwrap();
        assert_eq!(r.multiplier, 3);
        assert!(serde_json::from_str::<Rows>("\"n^2\"").is_err());
        assert_eq!(serde_json::to_string(&Rows::times(2)).unwrap(), "\"2n\"");
    }

    #[test]
    fn config_forms() {
        let a: TriangularArray = serde_json::from_str(r#"{"array":"iid","base":{"family":"rademacher"},"rows":"n"}"#).unwrap();
        assert_eq!(a.row_length(5), 5);
        let s: TriangularArray = serde_json::from_str(r#"{"array":"shiryaev"}"#).unwrap();
        assert_eq!(s, TriangularArray::shiryaev(Rows::default()));
        let f: TriangularArray = serde_json::from_str(r#"{"array":"series","base_seq":{"kind":"shiryaev"}}"#).unwrap();
        assert_eq!(f.row_length(6), 6);
    }

    #[test]
    fn self_normalized_summands_are_per_k_standardized() {
        let m = SumModel::SelfNormalized {
            base_seq: SeriesBase::PowerVariance { base: ScalarDistribution::standard_normal(), power: 1.0 },
        };
        for k in [1u64, 3, 10] {
            let v: f64 = m.summands(k).iter().map(|d| d.variance()).sum();
            assert_relative_eq!(v, 1.0, max_relative = 1e-14);
        }
    }
}
