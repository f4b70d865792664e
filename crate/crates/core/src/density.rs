//! Gaussian kernel density estimation over normalized numerical attributes
//! and the filter that keeps only the densest fraction of a subset before
//! constraint derivation. Tight subsets produce tight bounds; the filter is
//! what gives the derived constraints their discriminative power.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Bandwidth selection rule. Only Scott's rule is implemented:
/// `h_j = sigma_j * k^(-1/(m+4))` per dimension, floored at 1e-6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    #[default]
    Scott,
}

/// Density-filter settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityConfig {
    /// Fraction of each subset to keep, in (0, 1].
    pub fraction: f64,
    pub bandwidth_rule: BandwidthRule,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            fraction: 0.2,
            bandwidth_rule: BandwidthRule::Scott,
        }
    }
}

impl DensityConfig {
    pub fn with_fraction(fraction: f64) -> Self {
        Self {
            fraction,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!(
                "density fraction must be in (0, 1], got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

pub const BANDWIDTH_FLOOR: f64 = 1e-6;

/// Fitted Gaussian product-kernel density estimator with per-dimension
/// Scott bandwidths.
#[derive(Debug, Clone)]
pub struct Kde {
    scaled: Vec<f64>, // sample coordinates divided by their bandwidth
    bandwidths: Vec<f64>,
    norm: f64,
    k: usize,
    m: usize,
}

impl Kde {
    /// Fit on `k >= 2` sample rows of equal width.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::InsufficientData {
                context: "density estimation",
                min: 2,
                got: k,
            });
        }
        let m = rows[0].len();
        let kf = k as f64;
        let mut mean = vec![0.0f64; m];
        for row in rows {
            for (j, v) in row.iter().enumerate() {
                mean[j] += v;
            }
        }
        for v in &mut mean {
            *v /= kf;
        }
        let mut var = vec![0.0f64; m];
        for row in rows {
            for (j, v) in row.iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
        let factor = kf.powf(-1.0 / (m as f64 + 4.0));
        let bandwidths: Vec<f64> = var
            .iter()
            .map(|&s2| ((s2 / (kf - 1.0)).sqrt() * factor).max(BANDWIDTH_FLOOR))
            .collect();
        // constant factor of the product kernel: 1 / (k * prod_j h_j * sqrt(2 pi))
        let norm = 1.0
            / (kf
                * bandwidths
                    .iter()
                    .map(|hj| hj * (2.0 * std::f64::consts::PI).sqrt())
                    .product::<f64>());
        let mut scaled = vec![0.0f64; k * m];
        for (a, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                scaled[a * m + j] = v / bandwidths[j];
            }
        }
        Ok(Self {
            scaled,
            bandwidths,
            norm,
            k,
            m,
        })
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    /// Density at an arbitrary point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.m);
        let mut sum = 0.0;
        for a in 0..self.k {
            let xa = &self.scaled[a * self.m..(a + 1) * self.m];
            let mut d2 = 0.0;
            for j in 0..self.m {
                let diff = x[j] / self.bandwidths[j] - xa[j];
                d2 += diff * diff;
            }
            sum += (-0.5 * d2).exp();
        }
        self.norm * sum
    }

    /// Density at every fitting sample. One exp per pair; O(k^2).
    pub fn self_scores(&self) -> Vec<f64> {
        let mut scores = vec![0.0f64; self.k];
        for a in 0..self.k {
            let xa = &self.scaled[a * self.m..(a + 1) * self.m];
            let mut sum = 0.0;
            for b in 0..self.k {
                let xb = &self.scaled[b * self.m..(b + 1) * self.m];
                let mut d2 = 0.0;
                for j in 0..self.m {
                    let diff = xa[j] - xb[j];
                    d2 += diff * diff;
                }
                sum += (-0.5 * d2).exp();
            }
            scores[a] = self.norm * sum;
        }
        scores
    }
}

/// Gaussian product-kernel density of each member of `idx`, evaluated over
/// the subset itself. Naive O(k^2) evaluation; scores are aligned with `idx`.
pub fn density_scores(d: &Dataset, idx: &[usize]) -> Result<Vec<f64>> {
    let rows: Vec<&[f64]> = idx.iter().map(|&i| d.numeric_row(i)).collect();
    Ok(Kde::fit(&rows)?.self_scores())
}

/// Sort `idx` by descending density (ties by ascending index) and keep the
/// first `ceil(fraction * |idx|)` entries, raised to at least
/// `min(2, |idx|)`. Singleton inputs pass through unchanged.
pub fn filter_densest(d: &Dataset, idx: &[usize], cfg: &DensityConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if idx.is_empty() {
        return Err(Error::InsufficientData {
            context: "density filtering",
            min: 1,
            got: 0,
        });
    }
    if idx.len() == 1 {
        return Ok(idx.to_vec());
    }
    let scores = density_scores(d, idx)?;
    let mut order: Vec<usize> = (0..idx.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| idx[a].cmp(&idx[b]))
    });
    let k = ((cfg.fraction * idx.len() as f64).ceil() as usize)
        .max(2.min(idx.len()))
        .min(idx.len());
    Ok(order[..k].iter().map(|&j| idx[j]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset;

    fn dataset_1d(values: &[f64]) -> Dataset {
        // a second constant column satisfies the two-numerical-column schema rule
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v, 0.5]).collect();
        let n = values.len();
        dataset::from_numeric(
            &["X1".into(), "X2".into()],
            rows,
            vec![0; n],
            (0..n).map(|i| (i % 2) as u8).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_points_share_one_score() {
        let d = dataset_1d(&[0.3; 6]);
        let idx: Vec<usize> = (0..6).collect();
        let s = density_scores(&d, &idx).unwrap();
        for v in &s {
            assert_eq!(*v, s[0]);
        }
    }

    #[test]
    fn outlier_has_strictly_lowest_score() {
        let d = dataset_1d(&[0.0, 0.01, 0.02, 0.9]);
        let idx: Vec<usize> = (0..4).collect();
        let s = density_scores(&d, &idx).unwrap();
        for j in 0..3 {
            assert!(s[3] < s[j], "outlier not lowest: {s:?}");
        }
    }

    #[test]
    fn permuting_indices_permutes_scores() {
        let d = dataset_1d(&[0.1, 0.4, 0.45, 0.9, 0.95]);
        let idx: Vec<usize> = (0..5).collect();
        let perm = [3usize, 0, 4, 1, 2];
        let s = density_scores(&d, &idx).unwrap();
        let sp = density_scores(&d, &perm).unwrap();
        for (a, &i) in perm.iter().enumerate() {
            assert_eq!(sp[a], s[i]);
        }
    }

    #[test]
    fn full_fraction_returns_same_multiset() {
        let d = dataset_1d(&[0.1, 0.2, 0.8, 0.25, 0.9]);
        let idx: Vec<usize> = (0..5).collect();
        let kept = filter_densest(&d, &idx, &DensityConfig::with_fraction(1.0)).unwrap();
        let mut sorted = kept.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, idx);
    }

    #[test]
    fn outliers_are_excluded() {
        let mut vals: Vec<f64> = (0..8).map(|i| 0.4 + i as f64 * 0.005).collect();
        vals.push(0.0);
        vals.push(1.0);
        let d = dataset_1d(&vals);
        let idx: Vec<usize> = (0..10).collect();
        let kept = filter_densest(&d, &idx, &DensityConfig::with_fraction(0.8)).unwrap();
        assert_eq!(kept.len(), 8);
        assert!(!kept.contains(&8));
        assert!(!kept.contains(&9));
    }

    #[test]
    fn ceiling_arithmetic() {
        let d = dataset_1d(&[0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4]);
        let idx: Vec<usize> = (0..7).collect();
        let kept = filter_densest(&d, &idx, &DensityConfig::with_fraction(0.2)).unwrap();
        assert_eq!(kept.len(), 2); // ceil(1.4)
    }

    #[test]
    fn kept_size_is_clamped() {
        let d = dataset_1d(&[0.1, 0.9]);
        let kept = filter_densest(&d, &[0, 1], &DensityConfig::with_fraction(0.01)).unwrap();
        assert_eq!(kept.len(), 2); // raised to min(2, |idx|)
        let kept1 = filter_densest(&d, &[1], &DensityConfig::with_fraction(0.5)).unwrap();
        assert_eq!(kept1, vec![1]);
    }

    #[test]
    fn kept_densities_dominate_excluded() {
        let vals: Vec<f64> = (0..20).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
        let d = dataset_1d(&vals);
        let idx: Vec<usize> = (0..20).collect();
        let s = density_scores(&d, &idx).unwrap();
        let kept = filter_densest(&d, &idx, &DensityConfig::with_fraction(0.4)).unwrap();
        let min_kept = kept
            .iter()
            .map(|i| s[*i])
            .fold(f64::INFINITY, f64::min);
        for i in idx.iter().filter(|i| !kept.contains(i)) {
            assert!(s[*i] <= min_kept);
        }
    }

    #[test]
    fn invalid_fraction_is_a_config_error() {
        let d = dataset_1d(&[0.1, 0.9]);
        for f in [0.0, -0.5, 1.5] {
            assert!(matches!(
                filter_densest(&d, &[0, 1], &DensityConfig::with_fraction(f)),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn one_dimensional_density_integrates_to_one() {
        let values = [0.05f64, 0.2, 0.22, 0.4, 0.41, 0.43, 0.7, 0.9];
        let rows: Vec<Vec<f64>> = values.iter().map(|&v| vec![v]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let kde = Kde::fit(&refs).unwrap();
        let h = kde.bandwidths()[0];
        let lo = 0.05 - 5.0 * h;
        let hi = 0.9 + 5.0 * h;
        let steps = 20_000;
        let dx = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for s in 0..=steps {
            let x = lo + s as f64 * dx;
            let w = if s == 0 || s == steps { 0.5 } else { 1.0 };
            integral += w * kde.eval(&[x]) * dx;
        }
        assert!((integral - 1.0).abs() <= 0.01, "integral {integral}");
    }
}
