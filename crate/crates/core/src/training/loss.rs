use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};
use crate::scene::DenseSdfGrid;

/// `sum_c ((y_hat - y) / (sg(y_hat) + eps))^2` and its derivative with the
/// denominator held constant.
pub fn loss_recons(y_hat: Rgb, y: Rgb, eps: f64) -> (f64, Rgb) {
    loss_recons_weighted(y_hat, y_hat, y, eps)
}

/// [`loss_recons`] with the stop-gradient denominator taken from a separate
/// estimate `y_den`.
pub fn loss_recons_weighted(y_hat: Rgb, y_den: Rgb, y: Rgb, eps: f64) -> (f64, Rgb) {
    let mut value = 0.0;
    let mut grad = Rgb::ZERO;
    for c in 0..3 {
        let d = y_den[c] + eps;
        let r = (y_hat[c] - y[c]) / d;
        value += r * r;
        grad[c] = 2.0 * (y_hat[c] - y[c]) / (d * d);
    }
    (value, grad)
}

/// Per-pixel image loss used by the material gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PixelLoss {
    /// Linearized log loss with stabilizer `eps`.
    Recons { eps: f64 },
    /// Plain `sum_c (y_hat - y)^2`.
    Squared,
}

impl PixelLoss {
    pub fn eval(&self, y_hat: Rgb, y: Rgb) -> (f64, Rgb) {
        self.eval_weighted(y_hat, y_hat, y)
    }

    /// Loss and derivative at `y_hat`, with any stop-gradient term evaluated at `y_den`.
    pub fn eval_weighted(&self, y_hat: Rgb, y_den: Rgb, y: Rgb) -> (f64, Rgb) {
        match *self {
            PixelLoss::Recons { eps } => loss_recons_weighted(y_hat, y_den, y, eps),
            PixelLoss::Squared => {
                let d = y_hat - y;
                (d.hadamard(d).sum(), d * 2.0)
            }
        }
    }
}

/// Surface-angle weight: `max(cos(a (theta - pi/4)), 0)` below `pi/4`, with
/// `b` in place of `a` above it.
pub fn saw_weight(theta: f64, a: f64, b: f64) -> f64 {
    let k = if theta <= FRAC_PI_4 { a } else { b };
    (k * (theta - FRAC_PI_4)).cos().max(0.0)
}

/// Angle between the surface normal and the direction to the light.
pub fn light_angle(normal: Vec3, x: Vec3, xl: Vec3) -> f64 {
    let d = (xl - x).try_normalize().unwrap_or(normal);
    normal.dot(d).clamp(-1.0, 1.0).acos()
}

/// Within-segment roughness spread `sum_f (r_f - mean_seg)^2`; the segment
/// means are treated as constants in the gradient.
pub fn loss_rough(roughness: &[f64], segments: &[Option<u32>]) -> Result<(f64, Vec<f64>)> {
    if roughness.len() != segments.len() {
        return Err(Error::InvalidInput(format!(
            "{} roughness values but {} segment labels",
            roughness.len(),
            segments.len()
        )));
    }
    let mut labels = Vec::with_capacity(segments.len());
    for (f, s) in segments.iter().enumerate() {
        labels.push(s.ok_or_else(|| Error::InvalidInput(format!("face {f} has no segment label")))? as usize);
    }
    let n_seg = labels.iter().max().map_or(0, |m| m + 1);
    let mut sum = vec![0.0; n_seg];
    let mut count = vec![0usize; n_seg];
    for (&l, &r) in labels.iter().zip(roughness) {
        sum[l] += r;
        count[l] += 1;
    }
    let mean: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let mut value = 0.0;
    let mut grad = vec![0.0; roughness.len()];
    for (f, (&l, &r)) in labels.iter().zip(roughness).enumerate() {
        let d = r - mean[l];
        value += d * d;
        grad[f] = 2.0 * d;
    }
    Ok((value, grad))
}

/// `mean |S(x)|` over `points` with its gradient w.r.t. the grid node values.
pub fn loss_sfm(sdf: &DenseSdfGrid, points: &[Vec3]) -> Result<(f64, Vec<f64>)> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no structure-from-motion points".into()));
    }
    let inv = 1.0 / points.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; sdf.values.len()];
    for p in points {
        let s = sdf.sample(*p)?;
        value += s.value.abs() * inv;
        let sign = if s.value > 0.0 {
            1.0
        } else if s.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        for (&idx, w) in s.nodes.iter().zip(s.weights) {
            grad[idx] += sign * w * inv;
        }
    }
    Ok((value, grad))
}
