use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

fn clip01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Mean over pixels and channels of `(clip01(pred) - clip01(gt))^2`.
pub fn metric_mse_clipped(pred: &Image, gt: &Image) -> Result<f64> {
    pred.same_size(gt)?;
    if pred.data.is_empty() {
        return Err(Error::InvalidInput("empty image".into()));
    }
    let sum: f64 = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(&p, &g)| {
            let d = clip01(p as f64) - clip01(g as f64);
            d * d
        })
        .sum();
    Ok(sum / pred.data.len() as f64)
}

/// Scale-invariant albedo error: each channel of `pred` is rescaled by the
/// least-squares factor `<pred, gt> / <pred, pred>`, clipped, and compared
/// with clipped `gt`. `mask` selects the pixels that count.
pub fn metric_albedo_scale_invariant(pred: &Image, gt: &Image, mask: Option<&[bool]>) -> Result<f64> {
    pred.same_size(gt)?;
    let n = pred.pixel_count();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::InvalidInput(format!("mask has {} entries for {n} pixels", m.len())));
        }
    }
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let count = (0..n).filter(|&i| keep(i)).count();
    if count == 0 {
        return Err(Error::InvalidInput("no pixels selected".into()));
    }
    let mut total = 0.0;
    for c in 0..3 {
        let (mut pg, mut pp, mut gg) = (0.0, 0.0, 0.0);
        for i in (0..n).filter(|&i| keep(i)) {
            let (p, g) = (pred.data[3 * i + c] as f64, gt.data[3 * i + c] as f64);
            pg += p * g;
            pp += p * p;
            gg += g * g;
        }
        if gg == 0.0 {
            return Err(Error::InvalidInput("ground-truth albedo is all zero".into()));
        }
        let s = if pp > 0.0 { pg / pp } else { 0.0 };
        for i in (0..n).filter(|&i| keep(i)) {
            let d = clip01(s * pred.data[3 * i + c] as f64) - clip01(gt.data[3 * i + c] as f64);
            total += d * d;
        }
    }
    Ok(total / (3 * count) as f64)
}

/// Plain mean squared error over selected pixels of single-channel maps
/// stored in the red channel.
pub fn metric_roughness_mse(pred: &Image, gt: &Image, mask: Option<&[bool]>) -> Result<f64> {
    pred.same_size(gt)?;
    let n = pred.pixel_count();
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..n {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let d = pred.data[3 * i] as f64 - gt.data[3 * i] as f64;
        sum += d * d;
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInput("no pixels selected".into()));
    }
    Ok(sum / count as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub name: String,
    pub rerender_mse: f64,
    pub albedo_si_mse: f64,
    pub roughness_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub mean: MetricsRow,
}

impl MetricsReport {
    pub fn from_rows(rows: Vec<MetricsRow>) -> Result<MetricsReport> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("no metric rows".into()));
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let mean = MetricsRow {
            name: "mean".into(),
            rerender_mse: avg(|r| r.rerender_mse),
            albedo_si_mse: avg(|r| r.albedo_si_mse),
            roughness_mse: avg(|r| r.roughness_mse),
        };
        Ok(MetricsReport { rows, mean })
    }
}
