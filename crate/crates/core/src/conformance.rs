//! Conformance constraints: bounded linear projections over the normalized
//! numerical attributes, derived from the covariance eigenbasis of a profiled
//! subset, with a graded violation score.
//!
//! Each constraint carries the projection direction, the min/max bounds
//! observed on the profiled subset, the projection's standard deviation
//! (`scale`), and a normalized importance weight favoring low-variance
//! projections. A tuple's violation is
//! `sum_i q_i * (1 - exp(-dist_i / scale_i))` where `dist_i` is how far the
//! projected value falls outside `[lower_i, upper_i]`; it is 0 exactly when
//! the tuple sits inside every bound.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Identifies the group x label cell a constraint set was profiled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellTag {
    pub group: u8,
    pub label: u8,
}

/// One bounded linear projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    /// Unit projection direction over the numerical attributes.
    pub coeffs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    /// Standard deviation of the projection over the profiled subset,
    /// floored at 1e-9.
    pub scale: f64,
    /// Normalized importance weight; the set's importances sum to 1.
    pub importance: f64,
}

/// A conjunctive set of constraints profiled from one subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub constraints: Vec<Constraint>,
    pub source: Option<CellTag>,
}

pub const SCALE_FLOOR: f64 = 1e-9;
const IMPORTANCE_FLOOR: f64 = 1e-6;

#[inline]
pub(crate) fn project(coeffs: &[f64], x: &[f64]) -> f64 {
    coeffs.iter().zip(x).map(|(c, v)| c * v).sum()
}

/// Derive one constraint per covariance eigenvector of the normalized
/// numerical attributes over `idx`. Bounds are the observed min/max of each
/// projection; importance shifts and normalizes the projection standard
/// deviations so that tighter projections weigh more. Constraints are ordered
/// by ascending projection variance, ties broken lexicographically on the
/// coefficients; eigenvector signs are fixed by making the largest-magnitude
/// coefficient positive.
pub fn derive_ccs(d: &Dataset, idx: &[usize]) -> Result<ConstraintSet> {
    let m = d.num_numeric();
    let k = idx.len();
    if k < 2 {
        return Err(Error::InsufficientData {
            context: "constraint derivation",
            min: 2,
            got: k,
        });
    }

    let mut mean = vec![0.0f64; m];
    for &i in idx {
        for (j, v) in d.numeric_row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    for v in &mut mean {
        *v /= k as f64;
    }

    let mut cov = DMatrix::<f64>::zeros(m, m);
    for &i in idx {
        let row = d.numeric_row(i);
        for a in 0..m {
            let da = row[a] - mean[a];
            for b in a..m {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    let denom = (k - 1) as f64;
    for a in 0..m {
        for b in a..m {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "covariance matrix has non-finite entries".into(),
        ));
    }

    let eig = SymmetricEigen::new(cov);
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let psd_tol = 1e-8 * max_abs.max(1.0);
    if eig.eigenvalues.iter().any(|&l| l < -psd_tol) {
        return Err(Error::Numerical(format!(
            "covariance matrix is not positive semi-definite (min eigenvalue {:e})",
            eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
        )));
    }

    let mut axes: Vec<(f64, Vec<f64>)> = (0..m)
        .map(|j| {
            let mut v: Vec<f64> = (0..m).map(|r| eig.eigenvectors[(r, j)]).collect();
            let norm = project(&v, &v).sqrt();
            for x in &mut v {
                *x /= norm;
            }
            let lead = (0..m).fold(0, |best, t| if v[t].abs() > v[best].abs() { t } else { best });
            if v[lead] < 0.0 {
                for x in &mut v {
                    *x = -*x;
                }
            }
            (eig.eigenvalues[j], v)
        })
        .collect();
    axes.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            for (x, y) in a.1.iter().zip(&b.1) {
                let c = x.total_cmp(y);
                if c != std::cmp::Ordering::Equal {
                    return c;
                }
            }
            std::cmp::Ordering::Equal
        })
    });

    let mut sigmas = Vec::with_capacity(m);
    let mut partial: Vec<Constraint> = Vec::with_capacity(m);
    for (_, coeffs) in axes {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        let mut projected = Vec::with_capacity(k);
        for &i in idx {
            let v = project(&coeffs, d.numeric_row(i));
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
            projected.push(v);
        }
        let mu = sum / k as f64;
        let var = projected.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / denom;
        let sigma = var.sqrt();
        sigmas.push(sigma);
        partial.push(Constraint {
            coeffs,
            lower: lo,
            upper: hi,
            scale: sigma.max(SCALE_FLOOR),
            importance: 0.0,
        });
    }

    let smin = sigmas.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = sigmas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = if smax > smin {
        sigmas
            .iter()
            .map(|&s| (1.0 - (s - smin) / (smax - smin)).max(IMPORTANCE_FLOOR))
            .collect()
    } else {
        vec![1.0; m]
    };
    let total: f64 = raw.iter().sum();
    for (c, q) in partial.iter_mut().zip(&raw) {
        c.importance = q / total;
    }

    Ok(ConstraintSet {
        constraints: partial,
        source: None,
    })
}

impl ConstraintSet {
    /// Attach the cell this set was profiled from.
    pub fn tagged(mut self, tag: CellTag) -> Self {
        self.source = Some(tag);
        self
    }

    /// Graded violation of a tuple's normalized numerical attributes,
    /// in `[0, 1)`; exactly 0 iff every bound holds.
    pub fn violation(&self, tuple: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.constraints {
            if c.coeffs.len() != tuple.len() {
                return Err(Error::Shape {
                    expected: c.coeffs.len(),
                    got: tuple.len(),
                });
            }
            let v = project(&c.coeffs, tuple);
            let dist = (v - c.upper).max(c.lower - v).max(0.0);
            if dist > 0.0 {
                total += c.importance * (1.0 - (-dist / c.scale).exp());
            }
        }
        Ok(total)
    }
}

/// Minimum violation over a family of constraint sets, with the arg-min
/// index; ties go to the lowest index.
pub fn min_violation(family: &[ConstraintSet], tuple: &[f64]) -> Result<(f64, usize)> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut best = (f64::INFINITY, 0);
    for (i, cs) in family.iter().enumerate() {
        let v = cs.violation(tuple)?;
        if v < best.0 {
            best = (v, i);
        }
    }
    Ok(best)
}

/// Serializable container for the `profile` command output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDocument {
    pub sets: Vec<ConstraintSet>,
}

impl ConstraintDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset;

    fn unit_constraint(lower: f64, upper: f64, scale: f64, importance: f64) -> Constraint {
        Constraint {
            coeffs: vec![1.0, 0.0],
            lower,
            upper,
            scale,
            importance,
        }
    }

    fn dataset_from_rows(rows: &[[f64; 2]]) -> Dataset {
        let numeric: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let groups = vec![0u8; rows.len()];
        let labels: Vec<u8> = (0..rows.len()).map(|i| (i % 2) as u8).collect();
        dataset::from_numeric(&["X1".into(), "X2".into()], numeric, groups, labels).unwrap()
    }

    #[test]
    fn duplicate_coordinates_yield_zero_variance_direction() {
        let rows: Vec<[f64; 2]> = (0..20).map(|i| [i as f64 / 19.0, i as f64 / 19.0]).collect();
        let d = dataset_from_rows(&rows);
        let idx: Vec<usize> = (0..20).collect();
        let cs = derive_ccs(&d, &idx).unwrap();
        assert_eq!(cs.constraints.len(), 2);
        // lowest-variance constraint first: direction (1,-1)/sqrt(2) up to sign fix
        let c = &cs.constraints[0];
        let inv = 1.0 / 2f64.sqrt();
        assert!((c.coeffs[0] - inv).abs() < 1e-9, "{:?}", c.coeffs);
        assert!((c.coeffs[1] + inv).abs() < 1e-9, "{:?}", c.coeffs);
        assert!((c.upper - c.lower).abs() < 1e-12);
        // the degenerate direction carries the maximal importance
        assert!(c.importance > cs.constraints[1].importance);
    }

    #[test]
    fn profiled_tuples_have_zero_violation() {
        let rows: Vec<[f64; 2]> = (0..50)
            .map(|i| {
                let t = i as f64;
                [(t * 0.37).sin().abs(), (t * 0.61).cos().abs()]
            })
            .collect();
        let d = dataset_from_rows(&rows);
        let idx: Vec<usize> = (0..50).collect();
        let cs = derive_ccs(&d, &idx).unwrap();
        assert_eq!(cs.constraints.len(), 2);
        for &i in &idx {
            assert_eq!(cs.violation(d.numeric_row(i)).unwrap(), 0.0);
        }
    }

    #[test]
    fn constraint_invariants_hold() {
        let rows: Vec<[f64; 2]> = (0..40)
            .map(|i| [((i * 13) % 17) as f64, ((i * 5) % 11) as f64])
            .collect();
        let d = dataset_from_rows(&rows);
        let idx: Vec<usize> = (0..40).collect();
        let cs = derive_ccs(&d, &idx).unwrap();
        let q_sum: f64 = cs.constraints.iter().map(|c| c.importance).sum();
        assert!((q_sum - 1.0).abs() <= 1e-9);
        for c in &cs.constraints {
            assert!(c.lower <= c.upper);
            assert!(c.scale > 0.0);
            assert!(c.importance > 0.0);
            let norm: f64 = c.coeffs.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-9);
        }
        for a in 0..cs.constraints.len() {
            for b in a + 1..cs.constraints.len() {
                let dot = project(&cs.constraints[a].coeffs, &cs.constraints[b].coeffs);
                assert!(dot.abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn insufficient_data_is_an_error() {
        let d = dataset_from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert!(matches!(
            derive_ccs(&d, &[0]),
            Err(Error::InsufficientData { got: 1, .. })
        ));
    }

    #[test]
    fn violation_inside_bounds_is_zero() {
        let cs = ConstraintSet {
            constraints: vec![unit_constraint(0.708, 0.902, 0.05, 1.0)],
            source: None,
        };
        assert_eq!(cs.violation(&[0.8, 0.3]).unwrap(), 0.0);
    }

    #[test]
    fn violation_unit_overshoot() {
        let cs = ConstraintSet {
            constraints: vec![unit_constraint(-1.0, 0.0, 1.0, 1.0)],
            source: None,
        };
        // projection exceeds the upper bound by exactly 1
        let v = cs.violation(&[1.0, 0.0]).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() <= 1e-15);
        assert!((v - 0.6321206).abs() <= 1e-6);
    }

    #[test]
    fn violation_weighted_sum() {
        // per-constraint violations 0.5 and 0.25 with weights 0.6/0.4 -> 0.4
        let d1 = -(0.5f64.ln()); // 1 - exp(-d1) = 0.5
        let d2 = -(0.75f64.ln()); // 1 - exp(-d2) = 0.25
        let cs = ConstraintSet {
            constraints: vec![
                Constraint {
                    coeffs: vec![1.0, 0.0],
                    lower: -1.0,
                    upper: 0.0,
                    scale: 1.0,
                    importance: 0.6,
                },
                Constraint {
                    coeffs: vec![0.0, 1.0],
                    lower: -1.0,
                    upper: 0.0,
                    scale: 1.0,
                    importance: 0.4,
                },
            ],
            source: None,
        };
        let v = cs.violation(&[d1, d2]).unwrap();
        assert!((v - 0.4).abs() <= 1e-12, "{v}");
    }

    #[test]
    fn violation_shape_error() {
        let cs = ConstraintSet {
            constraints: vec![unit_constraint(0.0, 1.0, 1.0, 1.0)],
            source: None,
        };
        assert!(matches!(
            cs.violation(&[0.5]),
            Err(Error::Shape {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn min_violation_picks_minimum_and_breaks_ties_low() {
        let far = ConstraintSet {
            constraints: vec![unit_constraint(10.0, 11.0, 1.0, 1.0)],
            source: None,
        };
        let near = ConstraintSet {
            constraints: vec![unit_constraint(0.0, 1.0, 1.0, 1.0)],
            source: None,
        };
        let single = min_violation(std::slice::from_ref(&far), &[0.5, 0.0]).unwrap();
        assert_eq!(single.1, 0);
        let (v, i) = min_violation(&[far.clone(), near.clone()], &[0.5, 0.0]).unwrap();
        assert_eq!((v, i), (0.0, 1));
        let (v, i) = min_violation(&[near.clone(), near], &[0.5, 0.0]).unwrap();
        assert_eq!((v, i), (0.0, 0));
        assert!(matches!(
            min_violation(&[], &[0.5, 0.0]),
            Err(Error::EmptyFamily)
        ));
    }

    #[test]
    fn document_round_trip_is_lossless() {
        let rows: Vec<[f64; 2]> = (0..30)
            .map(|i| [((i * 7) % 13) as f64 + 0.123456789012345, (i as f64).sqrt()])
            .collect();
        let d = dataset_from_rows(&rows);
        let idx: Vec<usize> = (0..30).collect();
        let cs = derive_ccs(&d, &idx)
            .unwrap()
            .tagged(CellTag { group: 1, label: 0 });
        let doc = ConstraintDocument { sets: vec![cs] };
        let back = ConstraintDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(doc, back);
    }
}
