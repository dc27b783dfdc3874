//! Orthonormal DCT-II, the Haar multiresolution pyramid, and the histogram
//! cross-correlation diagnostic used to pick a feature set.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::features::{FeatureMethod, FeatureVector};
use crate::imaging::{NormalizedHistogram, GREY_LEVELS};

/// Number of pyramid levels available for a 256-sample signal (`N = 2^M`).
pub const MAX_LEVELS: usize = 8;

/// Default pyramid depth; leaves 32 approximation coefficients.
pub const DEFAULT_LEVELS: usize = 3;

/// Orthonormal DCT-II coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct DctSpectrum {
    coefficients: Vec<f64>,
}

impl DctSpectrum {
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.coefficients)
    }

    /// Scale so the largest coefficient magnitude is exactly 1.
    pub fn normalized(&self) -> Result<DctSpectrum> {
        let m = self.max_abs();
        if m == 0.0 || !m.is_finite() {
            return Err(Error::ZeroSpectrum);
        }
        Ok(DctSpectrum {
            coefficients: self.coefficients.iter().map(|c| c / m).collect(),
        })
    }

    /// Reconstruct the signal (DCT-III, the transpose of the forward map).
    pub fn inverse(&self) -> Vec<f64> {
        idct(&self.coefficients)
    }
}

/// Build a spectrum from raw coefficients (must be a power-of-two length).
impl TryFrom<Vec<f64>> for DctSpectrum {
    type Error = Error;

    fn try_from(coefficients: Vec<f64>) -> Result<Self> {
        if !coefficients.len().is_power_of_two() {
            return Err(Error::BadLength {
                expected: coefficients.len().next_power_of_two(),
                found: coefficients.len(),
            });
        }
        Ok(Self { coefficients })
    }
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Orthonormal DCT-II of a 256-sample signal.
pub fn dct(signal: &[f64]) -> Result<DctSpectrum> {
    if signal.len() != GREY_LEVELS {
        return Err(Error::BadLength {
            expected: GREY_LEVELS,
            found: signal.len(),
        });
    }
    Ok(DctSpectrum {
        coefficients: dct_any(signal),
    })
}

pub fn normalize_spectrum(spec: &DctSpectrum) -> Result<DctSpectrum> {
    spec.normalized()
}

/// Orthonormal DCT-II for any power-of-two length.
pub fn dct_any(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    assert!(n.is_power_of_two(), "dct length must be a power of two");
    let mut v = signal.to_vec();
    let mut scratch = vec![0.0; n];
    lee_forward(&mut v, &mut scratch);
    let dc = (1.0 / n as f64).sqrt();
    let ac = (2.0 / n as f64).sqrt();
    v[0] *= dc;
    for c in &mut v[1..] {
        *c *= ac;
    }
    v
}

/// Inverse of [`dct_any`].
pub fn idct(coefficients: &[f64]) -> Vec<f64> {
    let n = coefficients.len();
    assert!(n.is_power_of_two(), "dct length must be a power of two");
    let dc = (1.0 / n as f64).sqrt();
    let ac = (2.0 / n as f64).sqrt();
    let mut v: Vec<f64> = coefficients
        .iter()
        .enumerate()
        .map(|(w, &c)| if w == 0 { dc * c } else { ac * c })
        .collect();
    let mut scratch = vec![0.0; n];
    lee_inverse(&mut v, &mut scratch);
    v
}

// Lee's recursive factorisation. Computes X[k] = sum_t x[t] cos(pi (t + 1/2) k / n).
fn lee_forward(v: &mut [f64], scratch: &mut [f64]) {
    let n = v.len();
    if n == 1 {
        return;
    }
    let half = n / 2;
    {
        let (alpha, beta) = scratch[..n].split_at_mut(half);
        for i in 0..half {
            let x = v[i];
            let y = v[n - 1 - i];
            alpha[i] = x + y;
            beta[i] = (x - y) / (((i as f64 + 0.5) * PI / n as f64).cos() * 2.0);
        }
    }
    {
        let (alpha, beta) = scratch[..n].split_at_mut(half);
        let (sa, sb) = v.split_at_mut(half);
        lee_forward(alpha, sa);
        lee_forward(beta, sb);
    }
    let (alpha, beta) = scratch[..n].split_at(half);
    for i in 0..half - 1 {
        v[i * 2] = alpha[i];
        v[i * 2 + 1] = beta[i] + beta[i + 1];
    }
    v[n - 2] = alpha[half - 1];
    v[n - 1] = beta[half - 1];
}

// Computes x[t] = X[0] + sum_{k>=1} X[k] cos(pi (t + 1/2) k / n).
fn lee_inverse(v: &mut [f64], scratch: &mut [f64]) {
    let n = v.len();
    if n == 1 {
        return;
    }
    let half = n / 2;
    {
        let (alpha, beta) = scratch[..n].split_at_mut(half);
        alpha[0] = v[0];
        beta[0] = v[1];
        for i in 1..half {
            alpha[i] = v[i * 2];
            beta[i] = v[i * 2 - 1] + v[i * 2 + 1];
        }
    }
    {
        let (alpha, beta) = scratch[..n].split_at_mut(half);
        let (sa, sb) = v.split_at_mut(half);
        lee_inverse(alpha, sa);
        lee_inverse(beta, sb);
    }
    let (alpha, beta) = scratch[..n].split_at(half);
    for i in 0..half {
        let x = alpha[i];
        let y = beta[i] / (((i as f64 + 0.5) * PI / n as f64).cos() * 2.0);
        v[i] = x + y;
        v[n - 1 - i] = x - y;
    }
}

/// Two-channel orthogonal filter bank: scaling taps `C_k` and the wavelet
/// taps `b_k = (-1)^k C_{L-1-k}` derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    scaling: Vec<f64>,
    wavelet: Vec<f64>,
}

impl FilterBank {
    /// Build from scaling taps, checking `sum C_k = 2` and the double-shift
    /// orthogonality `sum_k C_k C_{k+2j} = 2 δ_j`.
    pub fn from_scaling(scaling: Vec<f64>) -> Result<Self> {
        const TOL: f64 = 1e-12;
        let len = scaling.len();
        if len < 2 || !len.is_multiple_of(2) {
            return Err(Error::BadSpec(format!(
                "filter needs an even number of taps, got {len}"
            )));
        }
        let sum: f64 = scaling.iter().sum();
        if (sum - 2.0).abs() > TOL {
            return Err(Error::BadSpec(format!("scaling taps sum to {sum}, not 2")));
        }
        for shift in 0..len / 2 {
            let dot: f64 = (0..len - 2 * shift)
                .map(|k| scaling[k] * scaling[k + 2 * shift])
                .sum();
            let want = if shift == 0 { 2.0 } else { 0.0 };
            if (dot - want).abs() > TOL {
                return Err(Error::BadSpec(format!(
                    "taps not orthogonal at shift {shift}: {dot}"
                )));
            }
        }
        let wavelet = (0..len)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * scaling[len - 1 - k]
            })
            .collect();
        Ok(Self { scaling, wavelet })
    }

    /// `C = (1, 1)`, hence `b = (1, -1)`.
    pub fn haar() -> Self {
        Self::from_scaling(vec![1.0, 1.0]).expect("haar taps satisfy the constraints")
    }

    pub fn scaling(&self) -> &[f64] {
        &self.scaling
    }

    pub fn wavelet(&self) -> &[f64] {
        &self.wavelet
    }

    /// One analysis step: `S[n] = 1/√2 Σ_k C_k s[2n+k]`, `T[n] = 1/√2 Σ_k b_k s[2n+k]`.
    /// Indices past the end wrap around (only matters for filters longer than two taps).
    pub fn analysis_step(&self, prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let len = prev.len();
        if len == 0 || !len.is_multiple_of(2) {
            return Err(Error::OddLength(len));
        }
        let half = len / 2;
        let mut approx = Vec::with_capacity(half);
        let mut detail = Vec::with_capacity(half);
        for n in 0..half {
            let mut s = 0.0;
            let mut t = 0.0;
            for (k, (&c, &b)) in self.scaling.iter().zip(&self.wavelet).enumerate() {
                let x = prev[(2 * n + k) % len];
                s += c * x;
                t += b * x;
            }
            approx.push(s * FRAC_1_SQRT_2);
            detail.push(t * FRAC_1_SQRT_2);
        }
        Ok((approx, detail))
    }

    /// Adjoint of [`analysis_step`](Self::analysis_step); its exact inverse for orthogonal taps.
    pub fn synthesis_step(&self, approx: &[f64], detail: &[f64]) -> Result<Vec<f64>> {
        if approx.len() != detail.len() {
            return Err(Error::BadLength {
                expected: approx.len(),
                found: detail.len(),
            });
        }
        let len = approx.len() * 2;
        let mut out = vec![0.0; len];
        for n in 0..approx.len() {
            for (k, (&c, &b)) in self.scaling.iter().zip(&self.wavelet).enumerate() {
                out[(2 * n + k) % len] += (c * approx[n] + b * detail[n]) * FRAC_1_SQRT_2;
            }
        }
        Ok(out)
    }
}

/// One Haar butterfly stage.
pub fn haar_step(prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = prev.len();
    if len == 0 || !len.is_multiple_of(2) {
        return Err(Error::OddLength(len));
    }
    let approx = prev
        .chunks_exact(2)
        .map(|p| (p[0] + p[1]) * FRAC_1_SQRT_2)
        .collect();
    let detail = prev
        .chunks_exact(2)
        .map(|p| (p[0] - p[1]) * FRAC_1_SQRT_2)
        .collect();
    Ok((approx, detail))
}

/// Approximations `S_{m,n}` and details `T_{m,n}` for levels `m = 1..=levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    approximations: Vec<Vec<f64>>,
    details: Vec<Vec<f64>>,
}

impl WaveletDecomposition {
    pub fn levels(&self) -> usize {
        self.approximations.len()
    }

    /// `S_m`, with `m` counted from 1.
    pub fn approximation(&self, m: usize) -> Option<&[f64]> {
        m.checked_sub(1)
            .and_then(|i| self.approximations.get(i))
            .map(Vec::as_slice)
    }

    /// `T_m`, with `m` counted from 1.
    pub fn detail(&self, m: usize) -> Option<&[f64]> {
        m.checked_sub(1)
            .and_then(|i| self.details.get(i))
            .map(Vec::as_slice)
    }

    /// Approximation at the deepest computed level.
    pub fn coarsest(&self) -> &[f64] {
        self.approximations.last().expect("at least one level")
    }

    pub fn detail_count(&self) -> usize {
        self.details.iter().map(Vec::len).sum()
    }

    /// Invert every stage, starting from the coarsest approximation.
    pub fn reconstruct(&self) -> Vec<f64> {
        let bank = FilterBank::haar();
        let mut current = self.coarsest().to_vec();
        for detail in self.details.iter().rev() {
            current = bank
                .synthesis_step(&current, detail)
                .expect("stage lengths are consistent by construction");
        }
        current
    }
}

/// Iterated Haar analysis of a 256-sample signal.
pub fn dwt_pyramid(signal: &[f64], levels: usize) -> Result<WaveletDecomposition> {
    if signal.len() != GREY_LEVELS {
        return Err(Error::BadLength {
            expected: GREY_LEVELS,
            found: signal.len(),
        });
    }
    if !(1..=MAX_LEVELS).contains(&levels) {
        return Err(Error::BadLevels {
            levels,
            max: MAX_LEVELS,
        });
    }
    let mut approximations = Vec::with_capacity(levels);
    let mut details = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    for _ in 0..levels {
        let (s, t) = haar_step(&current)?;
        debug_assert!(
            {
                let e = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
                let before = e(&current);
                (before - e(&s) - e(&t)).abs() <= 1e-10 * before.max(1.0)
            },
            "haar step lost energy"
        );
        current = s.clone();
        approximations.push(s);
        details.push(t);
    }
    Ok(WaveletDecomposition {
        approximations,
        details,
    })
}

/// Level-`levels` approximation coefficients scaled into `[-1, 1]` by their
/// largest magnitude.
pub fn dwt_features_at(signal: &[f64], levels: usize) -> Result<FeatureVector> {
    let pyramid = dwt_pyramid(signal, levels)?;
    let coarse = pyramid.coarsest();
    let m = max_abs(coarse);
    if m == 0.0 {
        return Err(Error::ZeroSignal);
    }
    FeatureVector::new(FeatureMethod::Dwt, coarse.iter().map(|s| s / m).collect())
}

/// 32 approximation coefficients `S_{3,n}`, max-abs normalized.
pub fn dwt_features(signal: &[f64]) -> Result<FeatureVector> {
    dwt_features_at(signal, DEFAULT_LEVELS)
}

/// Pearson correlation of two equal-length sequences.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::BadLength {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cross_correlation(a: &NormalizedHistogram, b: &NormalizedHistogram) -> Result<f64> {
    pearson(a.values(), b.values())
}

/// Outcome of the correlation-based feature-set rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodRecommendation {
    Dwt,
    HistOrDct,
}

impl std::fmt::Display for MethodRecommendation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MethodRecommendation::Dwt => "DWT",
            MethodRecommendation::HistOrDct => "HIST_OR_DCT",
        })
    }
}

/// Midpoint of the 0.6-0.7 decision band.
pub const DEFAULT_THRESHOLD: f64 = 0.65;

/// Largest off-diagonal correlation among the given histograms.
pub fn max_pairwise_correlation(hists: &[NormalizedHistogram]) -> Result<f64> {
    if hists.len() < 2 {
        return Err(Error::TooFewHistograms(hists.len()));
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..hists.len() {
        for j in i + 1..hists.len() {
            best = best.max(cross_correlation(&hists[i], &hists[j])?);
        }
    }
    Ok(best)
}

/// Strongly correlated class histograms call for wavelet features.
pub fn recommend_method(hists: &[NormalizedHistogram], threshold: f64) -> Result<MethodRecommendation> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(recommend_from_correlation(max_pairwise_correlation(hists)?, threshold))
}

/// The decision rule on an already computed maximum correlation (strict `>`).
pub fn recommend_from_correlation(max_correlation: f64, threshold: f64) -> MethodRecommendation {
    if max_correlation > threshold {
        MethodRecommendation::Dwt
    } else {
        MethodRecommendation::HistOrDct
    }
}
