//! Principled-BRDF subset: Lambert diffuse plus a GGX specular lobe with
//! height-correlated Smith masking and Schlick Fresnel. Only albedo and
//! roughness are free; the specular level is a per-scene constant.
//!
//! All directions are world-space unit vectors pointing away from the surface.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::math::{sample_cosine_hemisphere, Frame, Rgb, Vec3};
use crate::rng::RngStream;

/// Roughness is clamped to this floor inside every evaluation.
pub const ROUGHNESS_FLOOR: f64 = 0.02;

/// Default specular level for synthetic scenes.
pub const DEFAULT_SPECULAR: f64 = 0.6;

/// Per-face free parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMaterial {
    pub albedo: Rgb,
    pub roughness: f64,
}

impl SurfaceMaterial {
    pub fn new(albedo: Rgb, roughness: f64) -> SurfaceMaterial {
        SurfaceMaterial { albedo, roughness }
    }

    pub fn clamped(self) -> SurfaceMaterial {
        SurfaceMaterial { albedo: self.albedo.clamp01(), roughness: self.roughness.clamp(0.0, 1.0) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipledParams {
    pub albedo: Rgb,
    pub roughness: f64,
    pub specular: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lobe {
    Diffuse,
    Specular,
}

#[derive(Clone, Copy, Debug)]
pub struct BrdfSample {
    pub wi: Vec3,
    pub pdf: f64,
    pub f: Rgb,
    pub lobe: Lobe,
}

/// Partials of `f` for one `(wi, wo)` pair. Albedo enters channel-wise, so
/// `d_albedo[c]` is `df_c / d albedo_c` and the off-diagonal terms vanish.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BrdfGrad {
    pub d_albedo: Rgb,
    pub d_roughness: Rgb,
}

impl PrincipledParams {
    pub fn new(material: SurfaceMaterial, specular: f64) -> PrincipledParams {
        let m = material.clamped();
        PrincipledParams { albedo: m.albedo, roughness: m.roughness, specular }
    }

    #[inline]
    fn f0(&self) -> f64 {
        0.08 * self.specular
    }

    #[inline]
    fn has_specular(&self) -> bool {
        self.specular > 0.0
    }

    #[inline]
    fn alpha(&self) -> f64 {
        let r = self.roughness.max(ROUGHNESS_FLOOR);
        r * r
    }

    /// Probability of picking the diffuse lobe.
    pub fn diffuse_probability(&self) -> f64 {
        if !self.has_specular() {
            return 1.0;
        }
        let lum = self.albedo.luminance().max(0.0);
        let total = lum + self.specular;
        if total > 0.0 {
            lum / total
        } else {
            0.5
        }
    }

    #[inline]
    fn schlick(&self, c: f64) -> f64 {
        let f0 = self.f0();
        f0 + (1.0 - f0) * (1.0 - c.clamp(0.0, 1.0)).powi(5)
    }

    /// Diffuse attenuation `(1 - F(cos_i)) (1 - F(cos_o))`; 1 without a specular lobe.
    #[inline]
    fn diffuse_weight(&self, ci: f64, co: f64) -> f64 {
        if self.has_specular() {
            (1.0 - self.schlick(ci)) * (1.0 - self.schlick(co))
        } else {
            1.0
        }
    }

    pub fn eval(&self, n: Vec3, wi: Vec3, wo: Vec3) -> Rgb {
        let ci = n.dot(wi);
        let co = n.dot(wo);
        if ci <= 0.0 || co <= 0.0 {
            return Rgb::BLACK;
        }
        let diffuse = self.albedo * (self.diffuse_weight(ci, co) / PI);
        if !self.has_specular() {
            return diffuse;
        }
        diffuse + Rgb::splat(self.specular_term(n, wi, wo, ci, co).value)
    }

    fn specular_term(&self, n: Vec3, wi: Vec3, wo: Vec3, ci: f64, co: f64) -> SpecularTerm {
        let h = (wi + wo).normalize();
        let ch = n.dot(h).clamp(0.0, 1.0);
        let a = self.alpha();
        let a2 = a * a;
        let k = ch * ch * (a2 - 1.0) + 1.0;
        let d = a2 / (PI * k * k);
        let (li, dli) = smith_lambda(ci, a2);
        let (lo, dlo) = smith_lambda(co, a2);
        let g = 1.0 / (1.0 + li + lo);
        let fresnel = self.schlick(wi.dot(h));
        let norm = fresnel / (4.0 * ci * co);
        let dd_da2 = (k - 2.0 * a2 * ch * ch) / (PI * k * k * k);
        let dg_da2 = -g * g * (dli + dlo);
        SpecularTerm { value: norm * d * g, d_a2: norm * (dd_da2 * g + d * dg_da2) }
    }

    /// Exact density of [`PrincipledParams::sample`] for `wi`.
    pub fn pdf(&self, n: Vec3, wo: Vec3, wi: Vec3) -> f64 {
        let ci = n.dot(wi);
        let co = n.dot(wo);
        if ci <= 0.0 || co <= 0.0 {
            return 0.0;
        }
        let pd = self.diffuse_probability();
        let mut pdf = pd * ci / PI;
        if pd < 1.0 {
            let h = (wi + wo).normalize();
            let ch = n.dot(h).max(0.0);
            let a = self.alpha();
            let a2 = a * a;
            let k = ch * ch * (a2 - 1.0) + 1.0;
            let d = a2 / (PI * k * k);
            if wo.dot(h) > 0.0 {
                let g1 = 1.0 / (1.0 + smith_lambda(co, a2).0);
                pdf += (1.0 - pd) * g1 * d / (4.0 * co);
            }
        }
        pdf
    }

    /// Importance-samples the lobe mixture. `None` when `wo` is below the
    /// horizon or the sampled direction falls below it.
    pub fn sample(&self, n: Vec3, wo: Vec3, rng: &mut RngStream) -> Option<BrdfSample> {
        let u_lobe = rng.next_f64();
        let (u1, u2) = rng.next_2d();
        self.sample_with(n, wo, u_lobe, u1, u2)
    }

    /// Deterministic form of [`PrincipledParams::sample`] taking the three uniforms.
    pub fn sample_with(&self, n: Vec3, wo: Vec3, u_lobe: f64, u1: f64, u2: f64) -> Option<BrdfSample> {
        let co = n.dot(wo);
        if co <= 0.0 {
            return None;
        }
        let frame = Frame::from_unit_normal(n);
        let pd = self.diffuse_probability();
        let (wi, lobe) = if u_lobe < pd {
            let (local, _) = sample_cosine_hemisphere(u1, u2);
            (frame.to_world(local), Lobe::Diffuse)
        } else {
            let h = frame.to_world(sample_ggx_vndf(frame.to_local(wo), self.alpha(), u1, u2));
            let wi = h * (2.0 * wo.dot(h)) - wo;
            (wi.normalize(), Lobe::Specular)
        };
        if n.dot(wi) <= 0.0 {
            return None;
        }
        let pdf = self.pdf(n, wo, wi);
        if !(pdf > 0.0) {
            return None;
        }
        Some(BrdfSample { wi, pdf, f: self.eval(n, wi, wo), lobe })
    }

    /// Analytic partials of [`PrincipledParams::eval`] w.r.t. albedo and roughness.
    pub fn eval_grad(&self, n: Vec3, wi: Vec3, wo: Vec3) -> BrdfGrad {
        let ci = n.dot(wi);
        let co = n.dot(wo);
        if ci <= 0.0 || co <= 0.0 {
            return BrdfGrad { d_albedo: Rgb::BLACK, d_roughness: Rgb::BLACK };
        }
        let d_albedo = Rgb::splat(self.diffuse_weight(ci, co) / PI);
        if !self.has_specular() || self.roughness < ROUGHNESS_FLOOR {
            return BrdfGrad { d_albedo, d_roughness: Rgb::BLACK };
        }
        let r = self.roughness;
        let da2_dr = 4.0 * r * r * r;
        let s = self.specular_term(n, wi, wo, ci, co);
        BrdfGrad { d_albedo, d_roughness: Rgb::splat(s.d_a2 * da2_dr) }
    }
}

struct SpecularTerm {
    value: f64,
    d_a2: f64,
}

/// Visible-normal sampling of the GGX distribution seen from local `wo`.
fn sample_ggx_vndf(wo: Vec3, a: f64, u1: f64, u2: f64) -> Vec3 {
    let vh = Vec3::new(a * wo.x, a * wo.y, wo.z).normalize();
    let len2 = vh.x * vh.x + vh.y * vh.y;
    let t1 = if len2 > 0.0 { Vec3::new(-vh.y, vh.x, 0.0) / len2.sqrt() } else { Vec3::new(1.0, 0.0, 0.0) };
    let t2 = vh.cross(t1);
    let r = u1.sqrt();
    let phi = 2.0 * PI * u2;
    let p1 = r * phi.cos();
    let s = 0.5 * (1.0 + vh.z);
    let p2 = (1.0 - s) * (1.0 - p1 * p1).max(0.0).sqrt() + s * r * phi.sin();
    let nh = t1 * p1 + t2 * p2 + vh * (1.0 - p1 * p1 - p2 * p2).max(0.0).sqrt();
    Vec3::new(a * nh.x, a * nh.y, nh.z.max(0.0)).normalize()
}

/// Smith Lambda for GGX and its derivative w.r.t. `alpha^2`.
#[inline]
fn smith_lambda(cos_theta: f64, a2: f64) -> (f64, f64) {
    let c2 = cos_theta * cos_theta;
    let t2 = ((1.0 - c2) / c2).max(0.0);
    let root = (1.0 + a2 * t2).sqrt();
    (0.5 * (root - 1.0), t2 / (4.0 * root))
}

/// GGX normal distribution `D(h)` as a function of `cos(theta_h)`.
pub fn ggx_d(cos_h: f64, roughness: f64) -> f64 {
    let r = roughness.max(ROUGHNESS_FLOOR);
    let a2 = r.powi(4);
    let k = cos_h * cos_h * (a2 - 1.0) + 1.0;
    a2 / (PI * k * k)
}

pub fn eval_brdf(p: &PrincipledParams, n: Vec3, wi: Vec3, wo: Vec3) -> Rgb {
    p.eval(n, wi, wo)
}

pub fn sample_brdf(p: &PrincipledParams, n: Vec3, wo: Vec3, rng: &mut RngStream) -> Option<BrdfSample> {
    p.sample(n, wo, rng)
}

pub fn pdf_brdf(p: &PrincipledParams, n: Vec3, wo: Vec3, wi: Vec3) -> f64 {
    p.pdf(n, wo, wi)
}

pub fn eval_brdf_grad(p: &PrincipledParams, n: Vec3, wi: Vec3, wo: Vec3) -> BrdfGrad {
    p.eval_grad(n, wi, wo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{sample_uniform_hemisphere, sample_uniform_sphere};

    fn params(albedo: f64, roughness: f64, specular: f64) -> PrincipledParams {
        PrincipledParams { albedo: Rgb::new(albedo, albedo * 0.7, albedo * 0.3), roughness, specular }
    }

    fn random_upper(rng: &mut RngStream) -> Vec3 {
        let mut v = sample_uniform_sphere(rng.next_f64(), rng.next_f64());
        v.z = v.z.abs().max(1e-3);
        v.normalize()
    }

    const N: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    #[test]
    fn lambert_when_no_specular() {
        let p = params(0.8, 0.3, 0.0);
        let mut rng = RngStream::new(1, 1);
        for _ in 0..100 {
            let f = p.eval(N, random_upper(&mut rng), random_upper(&mut rng));
            assert_eq!(f, p.albedo / PI);
        }
    }

    #[test]
    fn horizon_zero() {
        let p = params(0.5, 0.5, 0.6);
        let below = Vec3::new(0.3, 0.0, -0.2).normalize();
        let above = Vec3::new(0.0, 0.3, 0.9).normalize();
        assert!(p.eval(N, below, above).is_black());
        assert!(p.eval(N, above, below).is_black());
        assert_eq!(p.pdf(N, above, below), 0.0);
        assert!(p.sample_with(N, below, 0.2, 0.3, 0.4).is_none());
    }

    #[test]
    fn reciprocity_and_non_negativity() {
        let mut rng = RngStream::new(2, 2);
        for _ in 0..1000 {
            let p = params(rng.next_f64(), rng.next_f64(), 0.6);
            let a = random_upper(&mut rng);
            let b = random_upper(&mut rng);
            let fab = p.eval(N, a, b);
            let fba = p.eval(N, b, a);
            assert!(fab.min_component() >= 0.0);
            for c in 0..3 {
                assert!((fab[c] - fba[c]).abs() <= 1e-6 * fab[c].abs().max(1e-300), "{fab:?} {fba:?}");
            }
        }
    }

    /// Directional albedo by uniform hemisphere sampling.
    fn directional_albedo(p: &PrincipledParams, wo: Vec3, n: usize, rng: &mut RngStream) -> Rgb {
        let mut acc = Rgb::BLACK;
        for _ in 0..n {
            let wi = sample_uniform_hemisphere(rng.next_f64(), rng.next_f64());
            acc += p.eval(N, wi, wo) * (wi.z * 2.0 * PI);
        }
        acc / n as f64
    }

    #[test]
    fn energy_conservation_grid() {
        let mut rng = RngStream::new(3, 3);
        for ai in 0..5 {
            for ri in 0..5 {
                let a = ai as f64 / 4.0;
                let r = ri as f64 / 4.0;
                let p = PrincipledParams { albedo: Rgb::splat(a), roughness: r, specular: 0.6 };
                for cos_o in [1.0, 0.7, 0.3, 0.1] {
                    let wo = Vec3::new((1.0f64 - cos_o * cos_o).sqrt(), 0.0, cos_o);
                    // Use the BRDF's own sampler for the rough-glossy cases; uniform
                    // sampling is too noisy near the delta-like floor.
                    let mut est = Rgb::BLACK;
                    let n = 100_000;
                    for _ in 0..n {
                        if let Some(s) = p.sample(N, wo, &mut rng) {
                            est += s.f * (s.wi.z / s.pdf);
                        }
                    }
                    est = est / n as f64;
                    assert!(est.max_component() <= 1.01, "a={a} r={r} cos_o={cos_o} albedo={est:?}");
                }
            }
        }
    }

    #[test]
    fn sampled_matches_uniform_estimate() {
        let mut rng = RngStream::new(4, 4);
        for &(a, r) in &[(0.7, 0.6), (0.2, 0.3), (0.9, 0.9)] {
            let p = params(a, r, 0.6);
            let wo = Vec3::new(0.5, 0.1, 0.8).normalize();
            let uniform = directional_albedo(&p, wo, 400_000, &mut rng);
            let mut is = Rgb::BLACK;
            let n = 200_000;
            for _ in 0..n {
                if let Some(s) = p.sample(N, wo, &mut rng) {
                    is += s.f * (s.wi.z / s.pdf);
                }
            }
            is = is / n as f64;
            for c in 0..3 {
                assert!((is[c] - uniform[c]).abs() <= 0.02 * uniform[c], "{is:?} vs {uniform:?}");
            }
        }
    }

    #[test]
    fn no_specular_samples_cosine() {
        let p = params(0.5, 0.5, 0.0);
        let mut rng = RngStream::new(5, 5);
        for _ in 0..1000 {
            let wo = random_upper(&mut rng);
            let s = p.sample(N, wo, &mut rng).unwrap();
            assert_eq!(s.lobe, Lobe::Diffuse);
            assert!((s.pdf - s.wi.z / PI).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_pdf_matches_pdf_fn() {
        let mut rng = RngStream::new(6, 6);
        for _ in 0..1000 {
            let p = params(rng.next_f64(), rng.next_f64(), 0.6);
            let wo = random_upper(&mut rng);
            if let Some(s) = p.sample(N, wo, &mut rng) {
                let q = p.pdf(N, wo, s.wi);
                assert!((s.pdf - q).abs() <= 1e-6 * q);
                assert!(s.f.min_component() >= 0.0);
            }
        }
    }

    #[test]
    fn half_vector_histogram_matches_ggx() {
        // Specular-only sampling: p_diffuse = 0 when albedo is black.
        let p = PrincipledParams { albedo: Rgb::BLACK, roughness: 1.0, specular: 0.6 };
        assert_eq!(p.diffuse_probability(), 0.0);
        // At normal incidence wi = reflect(-N, h) stays above the horizon iff
        // theta_h < 45 deg. For alpha = 1, D(h) cos(h) = cos(h) / pi so cos^2(h)
        // is uniform: 10 bins over [0.5, 1] plus one bin for rejected samples.
        let wo = N;
        let bins = 10;
        let mut counts = vec![0usize; bins + 1];
        let mut rng = RngStream::new(7, 7);
        let n = 100_000;
        for _ in 0..n {
            match p.sample(N, wo, &mut rng) {
                Some(s) => {
                    assert_eq!(s.lobe, Lobe::Specular);
                    let h = (s.wi + wo).normalize();
                    let c2 = h.z * h.z;
                    let b = (((c2 - 0.5) / 0.5) * bins as f64).floor().clamp(0.0, bins as f64 - 1.0) as usize;
                    counts[b] += 1;
                }
                None => counts[bins] += 1,
            }
        }
        let mut expected = vec![n as f64 * 0.05; bins];
        expected.push(n as f64 * 0.5);
        let chi2: f64 = counts.iter().zip(&expected).map(|(&c, &e)| (c as f64 - e).powi(2) / e).sum();
        // 10 dof, p = 0.01
        assert!(chi2 < 23.21, "chi2 {chi2} {counts:?}");
    }

    #[test]
    fn sampled_directions_match_pdf_histogram() {
        // Chi-square of sampled cos(theta_i) against numerically integrated pdf.
        let p = params(0.4, 0.35, 0.6);
        let wo = Vec3::new(0.4, -0.2, 0.89).normalize();
        let bins = 16;
        let mut counts = vec![0usize; bins];
        let mut rng = RngStream::new(8, 8);
        let n = 100_000;
        let mut valid = 0usize;
        for _ in 0..n {
            if let Some(s) = p.sample(N, wo, &mut rng) {
                let b = ((s.wi.z) * bins as f64).floor().min(bins as f64 - 1.0) as usize;
                counts[b] += 1;
                valid += 1;
            }
        }
        // expected mass per cos-bin via midpoint quadrature over (cos, phi)
        let mut expected = vec![0.0; bins];
        let nc = 400;
        let np = 400;
        for b in 0..bins {
            for i in 0..nc {
                let c = (b as f64 + (i as f64 + 0.5) / nc as f64) / bins as f64;
                let s = (1.0 - c * c).sqrt();
                for j in 0..np {
                    let phi = 2.0 * PI * (j as f64 + 0.5) / np as f64;
                    let wi = Vec3::new(s * phi.cos(), s * phi.sin(), c);
                    expected[b] += p.pdf(N, wo, wi) * (1.0 / (bins * nc) as f64) * (2.0 * PI / np as f64);
                }
            }
        }
        let mass: f64 = expected.iter().sum();
        assert!((mass - valid as f64 / n as f64).abs() < 0.01, "mass {mass}");
        let chi2: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(&c, &e)| {
                let e = e * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 15 dof, p = 0.01
        assert!(chi2 < 30.58, "chi2 {chi2}");
    }

    #[test]
    fn grad_albedo_lambert() {
        let p = params(0.3, 0.4, 0.0);
        let g = p.eval_grad(N, Vec3::new(0.0, 0.6, 0.8), Vec3::new(0.6, 0.0, 0.8));
        assert_eq!(g.d_albedo, Rgb::splat(1.0 / PI));
        assert_eq!(g.d_roughness, Rgb::BLACK);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = RngStream::new(9, 9);
        let h = 1e-4;
        let mut probes = 0;
        for _ in 0..1000 {
            let p = params(0.1 + 0.8 * rng.next_f64(), 0.05 + 0.9 * rng.next_f64(), 0.6);
            let wi = random_upper(&mut rng);
            let wo = random_upper(&mut rng);
            let g = p.eval_grad(N, wi, wo);
            // roughness
            let fp = p.eval(N, wi, wo);
            let mut pp = p;
            pp.roughness += h;
            let mut pm = p;
            pm.roughness -= h;
            let fd = (pp.eval(N, wi, wo).r - pm.eval(N, wi, wo).r) / (2.0 * h);
            let an = g.d_roughness.r;
            let scale = an.abs().max(fd.abs()).max(1e-3 * fp.r);
            assert!((an - fd).abs() <= 1e-3 * scale, "rough an={an} fd={fd}");
            // albedo, green channel
            let mut pp = p;
            pp.albedo.g += h;
            let mut pm = p;
            pm.albedo.g -= h;
            let fd = (pp.eval(N, wi, wo).g - pm.eval(N, wi, wo).g) / (2.0 * h);
            assert!((g.d_albedo.g - fd).abs() <= 1e-3 * fd.abs().max(1e-12));
            probes += 1;
        }
        assert_eq!(probes, 1000);
    }

    #[test]
    fn grad_finite_at_floor() {
        let p = params(0.5, ROUGHNESS_FLOOR, 0.6);
        let wo = Vec3::new(0.1, 0.0, 1.0).normalize();
        let wi = Vec3::new(-0.1, 0.0, 1.0).normalize();
        let g = p.eval_grad(N, wi, wo);
        assert!(g.d_roughness.is_finite() && g.d_albedo.is_finite());
        let below = params(0.5, 0.01, 0.6).eval_grad(N, wi, wo);
        assert_eq!(below.d_roughness, Rgb::BLACK);
    }

    #[test]
    fn ggx_d_normalized() {
        // integral of D(h) cos(h) over the hemisphere is 1; with s = cos^2 it is pi * int D ds
        for r in [0.1, 0.5, 1.0] {
            let n = 1_000_000;
            let mut acc = 0.0;
            for i in 0..n {
                let s = (i as f64 + 0.5) / n as f64;
                acc += ggx_d(s.sqrt(), r) * PI / n as f64;
            }
            assert!((acc - 1.0).abs() < 1e-3, "r={r} {acc}");
        }
    }
}
