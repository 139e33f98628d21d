// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Static and sliding-window functional connectivity.
//!
//! Correlations are Fisher z-transformed and only the positive part is kept.
//! Correlations that saturate at |r| ≥ 1 − 1e−12 are clamped and reported as
//! [`ClampWarning`]s instead of failing the subject.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Correlations with magnitude at or above this bound are clamped before atanh.
pub const CLAMP_BOUND: f64 = 1.0 - 1e-12;

/// Gaussian kernels are truncated at this many standard deviations.
const TAPER_TRUNCATION_SIGMAS: f64 = 4.0;

/// Region signals, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    n_samples: usize,
    region_labels: Vec<String>,
    sample_period: f64,
}

impl TimeSeries {
    /// Build from row-major samples (`n_samples × region_labels.len()`).
    pub fn new(values: Vec<f64>, region_labels: Vec<String>, sample_period: f64) -> Result<Self> {
        let n_regions = region_labels.len();
        if n_regions < 2 {
            return Err(invalid("time series needs at least 2 regions"));
        }
        if values.len() % n_regions != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} values do not fill rows of {} regions",
                values.len(),
                n_regions
            )));
        }
        let n_samples = values.len() / n_regions;
        if n_samples < 2 {
            return Err(invalid("time series needs at least 2 samples"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite value at sample {} region {}",
                pos / n_regions,
                pos % n_regions
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &region_labels {
            if !seen.insert(l.as_str()) {
                return Err(invalid(format!("duplicate region label `{l}`")));
            }
        }
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(invalid("sample period must be positive"));
        }
        Ok(Self {
            values,
            n_samples,
            region_labels,
            sample_period,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_regions(&self) -> usize {
        self.region_labels.len()
    }

    pub fn region_labels(&self) -> &[String] {
        &self.region_labels
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    /// Row-major sample matrix.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, sample: usize, region: usize) -> f64 {
        self.values[sample * self.n_regions() + region]
    }

    /// Copy of one region's signal over `[start, start + len)`.
    pub fn region_slice(&self, region: usize, start: usize, len: usize) -> Vec<f64> {
        (start..start + len).map(|t| self.get(t, region)).collect()
    }
}

/// Window weights: a rectangle convolved with a Gaussian, normalized to sum 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowTaper {
    weights: Vec<f64>,
    sigma: f64,
}

impl WindowTaper {
    /// Uniform weights `1/width`; a plain rectangular window.
    pub fn uniform(width: usize) -> Result<Self> {
        if width < 2 {
            return Err(invalid("taper width must be at least 2"));
        }
        Ok(Self {
            weights: vec![1.0 / width as f64; width],
            sigma: 0.0,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn width(&self) -> usize {
        self.weights.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Tapered window of `width` samples: the all-ones rectangle convolved with a
/// unit-area Gaussian (truncated at ±4σ), central `width` samples kept and
/// renormalized.
pub fn make_taper(width: usize, sigma: f64) -> Result<WindowTaper> {
    if width < 2 {
        return Err(invalid(format!("taper width {width} < 2")));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid(format!("taper sigma {sigma} must be > 0")));
    }
    let half = (TAPER_TRUNCATION_SIGMAS * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let kernel_sum: f64 = kernel.iter().sum();

    let mut weights = Vec::with_capacity(width);
    for m in 0..width as i64 {
        // sum over rectangle positions n of g[m - n]
        let lo = (m - half).max(0);
        let hi = (m + half).min(width as i64 - 1);
        let mut acc = 0.0;
        for n in lo..=hi {
            acc += kernel[(m - n + half) as usize];
        }
        weights.push(acc / kernel_sum);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    // exact mirror symmetry
    for i in 0..width / 2 {
        let avg = 0.5 * (weights[i] + weights[width - 1 - i]);
        weights[i] = avg;
        weights[width - 1 - i] = avg;
    }
    Ok(WindowTaper { weights, sigma })
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    mean: f64,
    sd: f64,
}

fn weighted_moments(x: &[f64], w: &[f64]) -> Option<Moments> {
    let total: f64 = w.iter().sum();
    let mean = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    let var = x
        .iter()
        .zip(w)
        .map(|(a, b)| b * (a - mean) * (a - mean))
        .sum::<f64>()
        / total;
    let scale = x.iter().zip(w).map(|(a, b)| b * a * a).sum::<f64>() / total;
    if !(var > 1e-20 * scale.max(f64::MIN_POSITIVE)) {
        return None;
    }
    Some(Moments {
        mean,
        sd: var.sqrt(),
    })
}

fn weighted_corr_with(x: &[f64], mx: Moments, y: &[f64], my: Moments, w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let mut cov = 0.0;
    for k in 0..w.len() {
        cov += w[k] * (x[k] - mx.mean) * (y[k] - my.mean);
    }
    cov / total / (mx.sd * my.sd)
}

/// Taper-weighted Pearson correlation.
pub fn weighted_pearson(x: &[f64], y: &[f64], w: &WindowTaper) -> Result<f64> {
    let weights = w.weights();
    if x.len() != weights.len() || y.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "signals of length {} and {} against taper of width {}",
            x.len(),
            y.len(),
            weights.len()
        )));
    }
    let mx = weighted_moments(x, weights)
        .ok_or_else(|| Error::DegenerateSignal("first signal has zero weighted variance".into()))?;
    let my = weighted_moments(y, weights)
        .ok_or_else(|| Error::DegenerateSignal("second signal has zero weighted variance".into()))?;
    Ok(weighted_corr_with(x, mx, y, my, weights))
}

/// atanh(r), defined for |r| < 1.
pub fn fisher_z(r: f64) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return Err(Error::FisherDomain(r.abs()));
    }
    // evaluated on |r| so the result is exactly odd
    Ok(r.signum() * r.abs().atanh())
}

/// A correlation that hit the clamp bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClampWarning {
    /// Window index for dynamic estimates, `None` for static.
    pub window: Option<usize>,
    pub i: usize,
    pub j: usize,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectivityKind {
    RawR,
    FisherZ,
    FisherZPositive,
}

/// Symmetric region × region connectivity with zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityMatrix {
    n: usize,
    kind: ConnectivityKind,
    values: Vec<f64>,
}

impl ConnectivityMatrix {
    /// Build from a full row-major matrix. The upper triangle is mirrored into
    /// the lower one and the diagonal is zeroed.
    pub fn from_dense(n: usize, mut values: Vec<f64>, kind: ConnectivityKind) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {n}x{n} matrix",
                values.len()
            )));
        }
        if n < 2 {
            return Err(invalid("connectivity needs at least 2 regions"));
        }
        for i in 0..n {
            values[i * n + i] = 0.0;
            for j in (i + 1)..n {
                values[j * n + i] = values[i * n + j];
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("connectivity values must be finite"));
        }
        if kind == ConnectivityKind::RawR && values.iter().any(|v| v.abs() > 1.0) {
            return Err(invalid("raw correlations must lie in [-1, 1]"));
        }
        if kind == ConnectivityKind::FisherZPositive && values.iter().any(|v| *v < 0.0) {
            return Err(invalid("positive-part connectivity has negative entries"));
        }
        Ok(Self { n, kind, values })
    }

    /// Build from upper-triangle entries in (0,1), (0,2), ..., (n-2,n-1) order.
    pub fn from_upper(n: usize, upper: &[f64], kind: ConnectivityKind) -> Result<Self> {
        if upper.len() != n * n.saturating_sub(1) / 2 {
            return Err(Error::ShapeMismatch(format!(
                "{} upper-triangle values for n = {n}",
                upper.len()
            )));
        }
        let mut values = vec![0.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                values[i * n + j] = upper[k];
                k += 1;
            }
        }
        Self::from_dense(n, values, kind)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> ConnectivityKind {
        self.kind
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Sum of all off-diagonal entries over unordered pairs.
    pub fn total_weight(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                s += self.get(i, j);
            }
        }
        s
    }
}

/// Sliding-window stack of connectivity layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicConnectivity {
    pub layers: Vec<ConnectivityMatrix>,
    pub window_width: usize,
    pub step: usize,
    pub region_labels: Vec<String>,
    #[serde(default)]
    pub warnings: Vec<ClampWarning>,
}

impl DynamicConnectivity {
    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_regions(&self) -> usize {
        self.region_labels.len()
    }

    /// Check the stack is non-empty and uniform in size and kind.
    pub fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| crate::error::format_err("layers", "no layers"))?;
        if first.n() != self.region_labels.len() {
            return Err(crate::error::format_err(
                "region_labels",
                format!("{} labels for {} regions", self.region_labels.len(), first.n()),
            ));
        }
        for (t, l) in self.layers.iter().enumerate() {
            if l.n() != first.n() || l.kind() != first.kind() {
                return Err(crate::error::format_err(
                    "layers",
                    format!("layer {t} differs in size or kind from layer 0"),
                ));
            }
        }
        Ok(())
    }
}

/// Number of windows of width `width` with stride `step` over `n_samples`.
pub fn window_count(n_samples: usize, width: usize, step: usize) -> usize {
    if width > n_samples || step == 0 {
        0
    } else {
        (n_samples - width) / step + 1
    }
}

fn clamp_r(r: f64) -> (f64, bool) {
    if r >= CLAMP_BOUND {
        (CLAMP_BOUND, true)
    } else if r <= -CLAMP_BOUND {
        (-CLAMP_BOUND, true)
    } else {
        (r, false)
    }
}

/// Correlate every region pair over `[start, start + width)` and return the
/// Fisher-z positive-part layer.
fn window_layer(
    ts: &TimeSeries,
    start: usize,
    weights: &[f64],
    window: Option<usize>,
    warnings: &mut Vec<ClampWarning>,
) -> Result<ConnectivityMatrix> {
    let n = ts.n_regions();
    let width = weights.len();
    let signals: Vec<Vec<f64>> = (0..n).map(|r| ts.region_slice(r, start, width)).collect();
    let mut moments = Vec::with_capacity(n);
    for (r, s) in signals.iter().enumerate() {
        match weighted_moments(s, weights) {
            Some(m) => moments.push(m),
            None => {
                let at = match window {
                    Some(t) => format!(" in window {t}"),
                    None => String::new(),
                };
                return Err(Error::DegenerateSignal(format!(
                    "region `{}` has zero variance{at}",
                    ts.region_labels()[r]
                )));
            }
        }
    }
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = weighted_corr_with(&signals[i], moments[i], &signals[j], moments[j], weights);
            let (r, clamped) = clamp_r(r);
            if clamped {
                log::warn!("clamped correlation between regions {i} and {j}");
                warnings.push(ClampWarning { window, i, j, r });
            }
            let z = r.atanh().max(0.0);
            values[i * n + j] = z;
            values[j * n + i] = z;
        }
    }
    ConnectivityMatrix::from_dense(n, values, ConnectivityKind::FisherZPositive)
}

/// Full-scan Pearson connectivity, Fisher z, positive part.
pub fn static_fc(ts: &TimeSeries) -> Result<(ConnectivityMatrix, Vec<ClampWarning>)> {
    let uniform = WindowTaper::uniform(ts.n_samples())?;
    let mut warnings = Vec::new();
    let m = window_layer(ts, 0, uniform.weights(), None, &mut warnings)?;
    Ok((m, warnings))
}

/// Full-scan Pearson correlations without transformation (kind `RawR`).
pub fn static_correlation(ts: &TimeSeries) -> Result<ConnectivityMatrix> {
    let n = ts.n_regions();
    let uniform = WindowTaper::uniform(ts.n_samples())?;
    let signals: Vec<Vec<f64>> = (0..n).map(|r| ts.region_slice(r, 0, ts.n_samples())).collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = weighted_pearson(&signals[i], &signals[j], &uniform).map_err(|_| {
                Error::DegenerateSignal(format!(
                    "zero variance in region `{}` or `{}`",
                    ts.region_labels()[i],
                    ts.region_labels()[j]
                ))
            })?;
            values[i * n + j] = r.clamp(-1.0, 1.0);
        }
    }
    ConnectivityMatrix::from_dense(n, values, ConnectivityKind::RawR)
}

/// Sliding-window tapered connectivity. Window `t` covers samples
/// `[t * step, t * step + width)`.
pub fn dfc_estimate(ts: &TimeSeries, taper: &WindowTaper, step: usize) -> Result<DynamicConnectivity> {
    let width = taper.width();
    if step == 0 {
        return Err(invalid("window step must be >= 1"));
    }
    if width > ts.n_samples() {
        return Err(invalid(format!(
            "window width {width} exceeds {} samples",
            ts.n_samples()
        )));
    }
    let count = window_count(ts.n_samples(), width, step);
    let mut warnings = Vec::new();
    let mut layers = Vec::with_capacity(count);
    for t in 0..count {
        layers.push(window_layer(ts, t * step, taper.weights(), Some(t), &mut warnings)?);
    }
    Ok(DynamicConnectivity {
        layers,
        window_width: width,
        step,
        region_labels: ts.region_labels().to_vec(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        sxy / (sxx * syy).sqrt()
    }

    #[test]
    fn taper_default_width() {
        let t = make_taper(50, 3.0).unwrap();
        let w = t.weights();
        assert_eq!(w.len(), 50);
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for i in 0..25 {
            assert_eq!(w[i], w[49 - i]);
        }
        assert!(w[25] > w[0]);
        assert!(w.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn taper_width_five_golden() {
        // brute-force np.convolve(ones(5), gaussian(sigma=3, ±12)), central 5, renormalized
        let golden = [
            0.1825537414925768,
            0.20849145119982362,
            0.21790961461519912,
            0.20849145119982362,
            0.1825537414925768,
        ];
        let t = make_taper(5, 3.0).unwrap();
        for (a, b) in t.weights().iter().zip(golden) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn taper_width_two_is_even_split() {
        for sigma in [0.5, 3.0, 1e3] {
            let t = make_taper(2, sigma).unwrap();
            assert_abs_diff_eq!(t.weights()[0], 0.5, epsilon = 1e-15);
            assert_abs_diff_eq!(t.weights()[1], 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn taper_rejects_bad_parameters() {
        assert!(matches!(make_taper(1, 3.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_taper(10, 0.0), Err(Error::InvalidParameter(_))));
        assert!(matches!(make_taper(10, -1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn pearson_self_and_flip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let w = make_taper(50, 3.0).unwrap();
        assert_abs_diff_eq!(weighted_pearson(&x, &x, &w).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(weighted_pearson(&x, &neg, &w).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_uniform_matches_direct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let w = WindowTaper::uniform(50).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..50).map(|_| rng.random::<f64>()).collect();
            assert_abs_diff_eq!(
                weighted_pearson(&x, &y, &w).unwrap(),
                pearson_direct(&x, &y),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn pearson_degenerate() {
        let w = WindowTaper::uniform(4).unwrap();
        let r = weighted_pearson(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0], &w);
        assert!(matches!(r, Err(Error::DegenerateSignal(_))));
    }

    #[test]
    fn fisher_values() {
        assert_eq!(fisher_z(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(fisher_z(0.5).unwrap(), 0.549306, epsilon = 1e-6);
        assert_abs_diff_eq!(fisher_z(-0.5).unwrap(), -0.549306, epsilon = 1e-6);
        assert!(matches!(fisher_z(1.0), Err(Error::FisherDomain(_))));
        assert!(matches!(fisher_z(-1.5), Err(Error::FisherDomain(_))));
    }

    /// Three regions with exact sample correlations (0.8, 0.0, -0.3) for
    /// pairs (0,1), (0,2), (1,2): orthonormal centered basis times Cholesky.
    fn exact_three_region() -> TimeSeries {
        let n = 40;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for _ in 0..3 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let m = v.iter().sum::<f64>() / n as f64;
            v.iter_mut().for_each(|a| *a -= m);
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
        // Cholesky of [[1,.8,0],[.8,1,-.3],[0,-.3,1]]
        let l11 = 1.0;
        let l21 = 0.8;
        let l22 = (1.0f64 - 0.64).sqrt();
        let l31 = 0.0;
        let l32 = -0.3 / l22;
        let l33 = (1.0 - l32 * l32).sqrt();
        let rows = [[l11, 0.0, 0.0], [l21, l22, 0.0], [l31, l32, l33]];
        let mut values = vec![0.0; n * 3];
        for t in 0..n {
            for (r, row) in rows.iter().enumerate() {
                values[t * 3 + r] = (0..3).map(|k| row[k] * basis[k][t]).sum();
            }
        }
        TimeSeries::new(values, labels(3), 2.0).unwrap()
    }

    #[test]
    fn static_fc_three_region_oracle() {
        let ts = exact_three_region();
        let (fc, warnings) = static_fc(&ts).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(fc.kind(), ConnectivityKind::FisherZPositive);
        assert_abs_diff_eq!(fc.get(0, 1), 0.8f64.atanh(), epsilon = 1e-10);
        assert_abs_diff_eq!(fc.get(0, 2), 0.0, epsilon = 1e-10);
        assert_eq!(fc.get(1, 2), 0.0);
        let raw = static_correlation(&ts).unwrap();
        assert_abs_diff_eq!(raw.get(1, 2), -0.3, epsilon = 1e-10);
    }

    #[test]
    fn static_fc_clips_anticorrelation() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0];
        let mut values = Vec::new();
        for v in x {
            values.push(v);
            values.push(-v);
        }
        let ts = TimeSeries::new(values, labels(2), 1.0).unwrap();
        let (fc, _) = static_fc(&ts).unwrap();
        assert_eq!(fc.get(0, 1), 0.0);
    }

    #[test]
    fn duplicated_signal_is_clamped_with_warning() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0];
        let values: Vec<f64> = x.iter().flat_map(|v| [*v, *v]).collect();
        let ts = TimeSeries::new(values, labels(2), 1.0).unwrap();
        let (fc, warnings) = static_fc(&ts).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_abs_diff_eq!(fc.get(0, 1), CLAMP_BOUND.atanh(), epsilon = 1e-9);
    }

    #[test]
    fn constant_region_names_itself() {
        let values = vec![1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 5.0];
        let ts = TimeSeries::new(values, vec!["a".into(), "b".into()], 1.0).unwrap();
        match static_fc(&ts) {
            Err(Error::DegenerateSignal(msg)) => assert!(msg.contains("`a`")),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn random_ts(n_samples: usize, n_regions: usize, seed: u64) -> TimeSeries {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n_samples * n_regions).map(|_| rng.random::<f64>()).collect();
        TimeSeries::new(values, labels(n_regions), 2.0).unwrap()
    }

    #[test]
    fn dfc_window_count() {
        let ts = random_ts(200, 4, 4);
        let taper = make_taper(50, 3.0).unwrap();
        let dfc = dfc_estimate(&ts, &taper, 1).unwrap();
        assert_eq!(dfc.n_layers(), 151);
        assert_eq!(window_count(200, 50, 1), 151);
        assert_eq!(window_count(200, 50, 3), 51);
    }

    #[test]
    fn dfc_single_window_equals_taper_weighted_static() {
        let ts = random_ts(30, 3, 5);
        let taper = make_taper(30, 3.0).unwrap();
        let dfc = dfc_estimate(&ts, &taper, 1).unwrap();
        assert_eq!(dfc.n_layers(), 1);
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                let r = weighted_pearson(
                    &ts.region_slice(i, 0, 30),
                    &ts.region_slice(j, 0, 30),
                    &taper,
                )
                .unwrap();
                assert_abs_diff_eq!(dfc.layers[0].get(i, j), r.atanh().max(0.0), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn dfc_strided_matches_unit_step() {
        let ts = random_ts(80, 5, 6);
        let taper = make_taper(20, 3.0).unwrap();
        let unit = dfc_estimate(&ts, &taper, 1).unwrap();
        let strided = dfc_estimate(&ts, &taper, 7).unwrap();
        for (k, layer) in strided.layers.iter().enumerate() {
            assert_eq!(layer, &unit.layers[k * 7]);
        }
    }

    #[test]
    fn dfc_errors() {
        let ts = random_ts(20, 3, 7);
        let taper = make_taper(30, 3.0).unwrap();
        assert!(matches!(dfc_estimate(&ts, &taper, 1), Err(Error::InvalidParameter(_))));
        let taper = make_taper(10, 3.0).unwrap();
        assert!(matches!(dfc_estimate(&ts, &taper, 0), Err(Error::InvalidParameter(_))));

        let mut values = ts.values().to_vec();
        for t in 10..20 {
            values[t * 3] = 2.0;
        }
        let flat = TimeSeries::new(values, labels(3), 2.0).unwrap();
        match dfc_estimate(&flat, &taper, 1) {
            Err(Error::DegenerateSignal(msg)) => assert!(msg.contains("window 10")),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn fisher_is_odd(r in -0.999f64..0.999) {
            let a = fisher_z(r).unwrap();
            let b = fisher_z(-r).unwrap();
            prop_assert_eq!(a, -b);
        }

        #[test]
        fn fisher_is_increasing(a in -0.99f64..0.99, d in 1e-6f64..0.005) {
            prop_assert!(fisher_z(a + d).unwrap() > fisher_z(a).unwrap());
        }

        #[test]
        fn outputs_symmetric_positive(seed in 0u64..1000) {
            let ts = random_ts(25, 4, seed);
            let (fc, _) = static_fc(&ts).unwrap();
            let taper = make_taper(10, 3.0).unwrap();
            let dfc = dfc_estimate(&ts, &taper, 5).unwrap();
            for m in std::iter::once(&fc).chain(dfc.layers.iter()) {
                for i in 0..4 {
                    prop_assert_eq!(m.get(i, i), 0.0);
                    for j in 0..4 {
                        prop_assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
                        prop_assert!(m.get(i, j) >= 0.0);
                    }
                }
            }
        }

        #[test]
        fn uniform_weights_match_direct(seed in 0u64..1000, len in 3usize..60) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let y: Vec<f64> = (0..len).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
            let w = WindowTaper::uniform(len).unwrap();
            prop_assert!((weighted_pearson(&x, &y, &w).unwrap() - pearson_direct(&x, &y)).abs() <= 1e-12);
        }
    }
}
