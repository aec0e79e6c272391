//! Error metrics between multiscale and reference runs, and the CSV files
//! they are computed from.

mod files;
mod sweep;

pub use files::{
    read_fields, read_losses, read_probe_points, read_probe_series, write_fields, write_losses, write_probe_series,
    FieldRow, ProbeSeries,
};
pub use sweep::{format_sweep, frequency_sweep, is_nondecreasing, write_sweep, LossSolver, SweepRow};

use crate::error::{Error, Result};
use crate::materials::BVec;

/// Joule power per metre of depth, one sample per accepted time step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossSeries {
    pub t: Vec<f64>,
    pub p: Vec<f64>,
}

impl LossSeries {
    pub fn push(&mut self, t: f64, p: f64) {
        self.t.push(t);
        self.p.push(p);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            t: self.t.clone(),
            p: self.p.iter().map(|v| v * c).collect(),
        }
    }

    /// Piecewise-linear value at `t`; `None` outside the sampled range.
    pub fn sample(&self, t: f64) -> Option<f64> {
        interpolate(&self.t, t, |i| self.p[i], |a, b, w| a + (b - a) * w)
    }
}

fn interpolate<T>(ts: &[f64], t: f64, at: impl Fn(usize) -> T, lerp: impl Fn(T, T, f64) -> T) -> Option<T> {
    let (first, last) = (*ts.first()?, *ts.last()?);
    let tol = 1e-9 * (last - first).abs().max(f64::MIN_POSITIVE);
    if t < first - tol || t > last + tol {
        return None;
    }
    let i = ts.partition_point(|&s| s < t);
    if i < ts.len() && (ts[i] - t).abs() <= tol {
        return Some(at(i));
    }
    if i == 0 {
        return Some(at(0));
    }
    if i == ts.len() {
        return Some(at(ts.len() - 1));
    }
    let w = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
    Some(lerp(at(i - 1), at(i), w))
}

/// `Err_P = max_t |P(t) − P_ref(t)| / max_t |P_ref(t)|` on the reference
/// samples, with `p` linearly resampled where the time grids differ.
pub fn loss_error(p: &LossSeries, reference: &LossSeries) -> Result<f64> {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    let mut overlap = 0;
    for (&t, &pr) in reference.t.iter().zip(&reference.p) {
        let Some(pm) = p.sample(t) else { continue };
        overlap += 1;
        num = num.max((pm - pr).abs());
        den = den.max(pr.abs());
    }
    if overlap == 0 {
        return Err(Error::Probe("loss series do not overlap in time".into()));
    }
    if den == 0.0 {
        return if num == 0.0 { Ok(0.0) } else { Err(Error::UndefinedError) };
    }
    Ok(num / den)
}

/// Relative `L²(0,T)` error of a flux-density history,
/// `‖b − b_ref‖ / ‖b_ref‖`, trapezoidal on the reference samples.
pub fn field_error(t: &[f64], b: &[BVec], t_ref: &[f64], b_ref: &[BVec]) -> Result<f64> {
    let mut samples = Vec::new();
    for (&tr, br) in t_ref.iter().zip(b_ref) {
        if let Some(bm) = interpolate(t, tr, |i| b[i], |x, y, w| x + (y - x) * w) {
            samples.push((tr, (bm - br).norm_squared(), br.norm_squared()));
        }
    }
    if samples.is_empty() {
        return Err(Error::Probe("field series do not overlap in time".into()));
    }
    if samples.len() == 1 {
        let (_, d, r) = samples[0];
        return ratio(d, r);
    }
    let (mut num, mut den) = (0.0, 0.0);
    for w in samples.windows(2) {
        let h = w[1].0 - w[0].0;
        num += 0.5 * h * (w[0].1 + w[1].1);
        den += 0.5 * h * (w[0].2 + w[1].2);
    }
    ratio(num, den)
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if den == 0.0 {
        if num == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::UndefinedError)
        }
    } else {
        Ok((num / den).sqrt())
    }
}
