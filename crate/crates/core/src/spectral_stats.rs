//! Per-class spectral summaries and Jeffries–Matusita separability.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Covariances with a condition number above this get a ridge before inversion.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Ridge added to the diagonal of ill-conditioned covariances.
pub const RIDGE: f64 = 1e-8;

/// Labelled pixel spectra for one land-cover class. Each spectrum has the same length
/// (normally the six bands blue, green, red, NIR, SWIR1, SWIR2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSampleSet {
    pub class_name: String,
    pub spectra: Vec<Vec<f64>>,
}

/// Box-plot summary of one band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_name: String,
    pub n: usize,
    pub bands: Vec<BandSummary>,
    pub mean: Vec<f64>,
    /// Row-major square covariance (unbiased, n − 1 denominator).
    pub covariance: Vec<Vec<f64>>,
}

/// Linear interpolation between order statistics (Hyndman–Fan type 7).
/// `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn class_stats(samples: &ClassSampleSet) -> Result<ClassStats> {
    let n = samples.spectra.len();
    if n < 2 {
        return Err(Error::TooFewSamples {
            class: samples.class_name.clone(),
            needed: 2,
            available: n,
        });
    }
    let dim = samples.spectra[0].len();
    if dim == 0 || samples.spectra.iter().any(|s| s.len() != dim) {
        return Err(Error::InvalidConfig(format!(
            "class {}: spectra must share a non-zero length",
            samples.class_name
        )));
    }
    if samples.spectra.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "class {}: non-finite reflectance",
            samples.class_name
        )));
    }

    let bands = (0..dim)
        .map(|b| {
            let mut col: Vec<f64> = samples.spectra.iter().map(|s| s[b]).collect();
            col.sort_by(f64::total_cmp);
            BandSummary {
                min: col[0],
                p25: percentile(&col, 0.25),
                p50: percentile(&col, 0.50),
                p75: percentile(&col, 0.75),
                max: col[n - 1],
            }
        })
        .collect();

    let mean: Vec<f64> = (0..dim)
        .map(|b| samples.spectra.iter().map(|s| s[b]).sum::<f64>() / n as f64)
        .collect();
    let mut covariance = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in i..dim {
            let c = samples
                .spectra
                .iter()
                .map(|s| (s[i] - mean[i]) * (s[j] - mean[j]))
                .sum::<f64>()
                / (n - 1) as f64;
            covariance[i][j] = c;
            covariance[j][i] = c;
        }
    }
    Ok(ClassStats {
        class_name: samples.class_name.clone(),
        n,
        bands,
        mean,
        covariance,
    })
}

impl ClassStats {
    /// A Gaussian summary without percentile information.
    pub fn gaussian(class_name: &str, mean: Vec<f64>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.len() != d || covariance.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidConfig(
                "covariance must be square and match the mean".into(),
            ));
        }
        let bands = mean
            .iter()
            .map(|&m| BandSummary {
                min: m,
                p25: m,
                p50: m,
                p75: m,
                max: m,
            })
            .collect();
        Ok(Self {
            class_name: class_name.to_string(),
            n: 0,
            bands,
            mean,
            covariance,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| self.covariance[i][j])
    }
}

/// Bhattacharyya distance and the JM value derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    pub jm: f64,
    pub bhattacharyya: f64,
    /// Whether the first / second covariance needed the ridge.
    pub regularized: (bool, bool),
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn regularize(m: DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if condition_number(&m) > CONDITION_LIMIT {
        let d = m.nrows();
        (m + DMatrix::identity(d, d) * RIDGE, true)
    } else {
        (m, false)
    }
}

fn cholesky(m: DMatrix<f64>, class: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::SingularCovariance(class.to_string()))
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// JM = 2·(1 − e^(−B)) with B the Gaussian Bhattacharyya distance
/// `⅛ dᵀ Σ̄⁻¹ d + ½ ln(|Σ̄| / √(|Σa||Σb|))`, `Σ̄ = (Σa + Σb)/2`.
pub fn jm_separability(a: &ClassStats, b: &ClassStats) -> Result<f64> {
    jm_separability_detailed(a, b).map(|s| s.jm)
}

pub fn jm_separability_detailed(a: &ClassStats, b: &ClassStats) -> Result<Separability> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidConfig(format!(
            "classes {} and {} have different band counts",
            a.class_name, b.class_name
        )));
    }
    let (ca, ra) = regularize(a.cov_matrix());
    let (cb, rb) = regularize(b.cov_matrix());
    let pooled = (&ca + &cb) * 0.5;
    let chol_a = cholesky(ca, &a.class_name)?;
    let chol_b = cholesky(cb, &b.class_name)?;
    let chol_p = cholesky(pooled, &format!("{}+{}", a.class_name, b.class_name))?;

    let d = DVector::from_iterator(a.dim(), a.mean.iter().zip(&b.mean).map(|(x, y)| x - y));
    // dᵀ Σ̄⁻¹ d = |L⁻¹ d|² keeps the result identical under argument swap
    let y = chol_p
        .l_dirty()
        .solve_lower_triangular(&d)
        .ok_or_else(|| Error::SingularCovariance(a.class_name.clone()))?;
    let mahalanobis = y.norm_squared();
    let log_term = log_det(&chol_p) - 0.5 * (log_det(&chol_a) + log_det(&chol_b));
    let bhattacharyya = (0.125 * mahalanobis + 0.5 * log_term).max(0.0);
    let jm = (2.0 * (1.0 - (-bhattacharyya).exp())).clamp(0.0, 2.0);
    Ok(Separability {
        jm,
        bhattacharyya,
        regularized: (ra, rb),
    })
}

/// Symmetric pairwise JM matrix; pairs are evaluated in parallel.
pub fn jm_matrix(classes: &[ClassStats]) -> Result<Vec<Vec<Separability>>> {
    let k = classes.len();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let results = pairs
        .par_iter()
        .map(|&(i, j)| jm_separability_detailed(&classes[i], &classes[j]))
        .collect::<Result<Vec<_>>>()?;
    let zero = Separability {
        jm: 0.0,
        bhattacharyya: 0.0,
        regularized: (false, false),
    };
    let mut m = vec![vec![zero; k]; k];
    for (&(i, j), s) in pairs.iter().zip(results) {
        m[i][j] = s;
        m[j][i] = Separability {
            regularized: (s.regularized.1, s.regularized.0),
            ..s
        };
    }
    Ok(m)
}
