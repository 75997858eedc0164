use std::f64::consts::PI;

use super::*;
use crate::brdf::SurfaceMaterial;
use crate::math::Vec3;
use crate::rng::{Purpose, RngStream};
use crate::scene::{builtin, Materials, Ray};

fn mean_sigma(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn nadir_hit(scene: &Scene, height: f64) -> (Hit, Vec3) {
    let ray = Ray::new(Vec3::new(0.0, 0.0, height), Vec3::new(0.0, 0.0, -1.0));
    (scene.intersect(&ray).unwrap(), Vec3::new(0.0, 0.0, height))
}

#[test]
fn plane_nadir_closed_form() {
    let a = Rgb::new(0.6, 0.45, 0.3);
    for d in [0.5, 1.0, 2.0] {
        let scene = builtin::plane_with(a, 0.5, 0.0, d);
        let (hit, xl) = nadir_hit(&scene, d);
        let l = direct_radiance(&scene, &hit, Vec3::new(0.0, 0.0, 1.0), xl).unwrap();
        let i = scene.flashlight.intensity;
        for c in 0..3 {
            let expected = a[c] * i[c] / (PI * d * d);
            assert!((l[c] - expected).abs() <= 1e-12 * expected, "{} vs {expected}", l[c]);
        }
    }
}

#[test]
fn inverse_square() {
    let scene = builtin::plane_with(Rgb::splat(0.5), 0.3, 0.6, 1.0);
    let (hit, _) = nadir_hit(&scene, 1.0);
    let wo = Vec3::new(0.0, 0.0, 1.0);
    let near = direct_radiance(&scene, &hit, wo, Vec3::new(0.0, 0.0, 0.7)).unwrap();
    let far = direct_radiance(&scene, &hit, wo, Vec3::new(0.0, 0.0, 1.4)).unwrap();
    for c in 0..3 {
        assert!((far[c] * 4.0 - near[c]).abs() < 1e-12 * near[c]);
    }
}

#[test]
fn occluded_and_too_close() {
    let scene = builtin::cornell_desk();
    let sw = builtin::cornell_sweep_setup();
    let ray = Ray::new(sw.target + sw.wo * 0.3, -sw.wo);
    let hit = scene.intersect(&ray).unwrap();
    assert!((hit.position - sw.target).length() < 1e-9);
    assert_eq!(direct_radiance(&scene, &hit, sw.wo, sw.light_at(0.0)).unwrap(), Rgb::ZERO);
    assert!(!direct_radiance(&scene, &hit, sw.wo, sw.light_at(1.0)).unwrap().is_black());
    assert!(matches!(
        direct_radiance(&scene, &hit, sw.wo, hit.position + Vec3::new(0.0, 1e-5, 0.0)),
        Err(Error::InvalidScene(_))
    ));
}

/// Closed-form bounce series for the two-hemisphere sphere with the light at
/// its center. Returns per-bounce radiance `L_1..L_n` seen along `ray`.
struct SphereSeries {
    rho: [Rgb; 2],
    power: Rgb,
    area: f64,
    g: Rgb,
}

impl SphereSeries {
    fn new(scene: &Scene) -> SphereSeries {
        let rho = [builtin::TWO_PATCH_RHO[0], builtin::TWO_PATCH_RHO[1]];
        let mut area = [0.0; 2];
        for (f, t) in scene.mesh.triangles.iter().enumerate() {
            let [a, b, c] = t.map(|i| scene.mesh.vertices[i as usize]);
            area[scene.mesh.material_ids[f] as usize] += 0.5 * (b - a).cross(c - a).length();
        }
        let total = area[0] + area[1];
        let i = scene.flashlight.intensity;
        // each hemisphere subtends 2 pi sr from the center
        let power = (rho[0] + rho[1]) * 2.0 * PI;
        let power = power.hadamard(i);
        let g = (rho[0] * area[0] + rho[1] * area[1]) / total;
        SphereSeries { rho, power, area: total, g }
    }

    fn side(p: Vec3) -> usize {
        if p.z > 0.0 {
            0
        } else {
            1
        }
    }

    fn first(scene: &Scene, hit: &Hit) -> Rgb {
        let r2 = hit.position.length_squared();
        let cos = hit.geo_normal.dot(-hit.position) / r2.sqrt();
        let rho = builtin::TWO_PATCH_RHO[Self::side(hit.position)];
        rho.hadamard(scene.flashlight.intensity) * (cos / (PI * r2))
    }

    /// `L_j` for `j >= 2` on the given side.
    fn bounce(&self, side: usize, j: u32) -> Rgb {
        let mut p = self.power;
        for _ in 2..j {
            p = p.hadamard(self.g);
        }
        self.rho[side].hadamard(p) / (PI * self.area)
    }

    /// `sum_{j >= 2} L_j`.
    fn tail(&self, side: usize) -> Rgb {
        let geo = Rgb::splat(1.0) - self.g;
        let base = self.rho[side].hadamard(self.power) / (PI * self.area);
        Rgb::new(base.r / geo.r, base.g / geo.g, base.b / geo.b)
    }
}

fn sphere_primary(scene: &Scene) -> (Ray, Hit) {
    let cam = scene.cameras[0];
    let ray = cam.ray_through(31.5, 20.5);
    let hit = scene.intersect(&ray).unwrap();
    (ray, hit)
}

#[test]
fn sphere_bounce_series_matches_path_tracer() {
    let scene = builtin::two_patch();
    let series = SphereSeries::new(&scene);
    let (ray, hit) = sphere_primary(&scene);
    let side = SphereSeries::side(hit.position);
    let mut expected = SphereSeries::first(&scene, &hit);
    let n = 2048;
    for depth in 2..=6u32 {
        expected += series.bounce(side, depth);
        let mut samples = [Vec::new(), Vec::new(), Vec::new()];
        for i in 0..n {
            let mut rng = RngStream::derive(9, Purpose::Test, &[depth as u64, i]);
            let t = path_trace(&scene, &ray, Vec3::ZERO, &mut rng, depth).total();
            for c in 0..3 {
                samples[c].push(t[c]);
            }
        }
        for c in 0..3 {
            let (m, s) = mean_sigma(&samples[c]);
            assert!((m - expected[c]).abs() <= 3.0 * s, "D={depth} c={c}: {m} vs {} (sigma {s})", expected[c]);
        }
    }
}

#[test]
fn depth_one_is_direct_only() {
    let scene = builtin::cornell_desk();
    let cam = scene.cameras[0];
    for (px, py) in [(10, 40), (32, 32), (50, 20)] {
        let ray = cam.ray_through(px as f64 + 0.5, py as f64 + 0.5);
        let hit = scene.intersect(&ray).unwrap();
        let mut rng = RngStream::new(1, 1);
        let s = path_trace(&scene, &ray, cam.center(), &mut rng, 1);
        assert_eq!(s.indirect, Rgb::ZERO);
        assert_eq!(s.direct, direct_radiance(&scene, &hit, -ray.dir, cam.center()).unwrap());
    }
}

#[test]
fn split_equals_undecomposed_bitwise() {
    let scene = builtin::cornell_desk();
    let cam = scene.cameras[0];
    for k in 0..200u64 {
        let mut r = RngStream::new(3, k);
        let ray = cam.ray_through(64.0 * r.next_f64(), 64.0 * r.next_f64());
        let mut a = RngStream::new(4, k);
        let mut b = RngStream::new(4, k);
        let split = path_trace(&scene, &ray, cam.center(), &mut a, 6);
        let total = path_trace_total(&scene, &ray, cam.center(), &mut b, 6);
        assert_eq!(split.total(), total);
    }
}

fn sphere_ground_truth(scene: &Scene) -> impl Fn(&CacheQuery) -> Rgb + Sync + '_ {
    let series = SphereSeries::new(scene);
    move |q: &CacheQuery| {
        let ray = Ray::new(Vec3::ZERO, q.x.normalize());
        let hit = scene.intersect(&ray).unwrap();
        let side = SphereSeries::side(hit.position);
        let direct = if q.visible { SphereSeries::first(scene, &hit) } else { Rgb::ZERO };
        direct + series.tail(side)
    }
}

#[test]
fn transport_estimate_with_exact_cache_matches_series() {
    let scene = builtin::two_patch();
    let series = SphereSeries::new(&scene);
    let (ray, hit) = sphere_primary(&scene);
    let expected = SphereSeries::first(&scene, &hit) + series.tail(SphereSeries::side(hit.position));
    let field = FnField(sphere_ground_truth(&scene));
    let mut samples = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..4000 {
        let mut rng = RngStream::derive(2, Purpose::Test, &[i]);
        let v = transport_estimate(&scene, &hit, -ray.dir, Vec3::ZERO, &field, &mut rng, 1);
        for c in 0..3 {
            samples[c].push(v[c]);
        }
    }
    for c in 0..3 {
        let (m, s) = mean_sigma(&samples[c]);
        assert!((m - expected[c]).abs() <= 3.0 * s + 1e-12, "c={c}: {m} vs {} ({s})", expected[c]);
    }
}

#[test]
fn gather_with_exact_cache_matches_path_indirect() {
    let scene = builtin::two_patch();
    let (ray, hit) = sphere_primary(&scene);
    let field = FnField(sphere_ground_truth(&scene));
    let n = 4000;
    let (mut ga, mut pa) = (Vec::new(), Vec::new());
    for i in 0..n {
        let mut r1 = RngStream::derive(5, Purpose::Test, &[0, i]);
        let mut r2 = RngStream::derive(5, Purpose::Test, &[1, i]);
        ga.push(surface_gather(&scene, &hit, -ray.dir, Vec3::ZERO, &field, &mut r1).luminance());
        pa.push(path_trace(&scene, &ray, Vec3::ZERO, &mut r2, 40).indirect.luminance());
    }
    let (mg, sg) = mean_sigma(&ga);
    let (mp, sp) = mean_sigma(&pa);
    assert!((mg - mp).abs() <= 3.0 * (sg * sg + sp * sp).sqrt(), "{mg} vs {mp}");
}

#[test]
fn gather_of_constant_cache_is_albedo_times_constant() {
    let scene = builtin::two_patch();
    let (ray, hit) = sphere_primary(&scene);
    let rho = builtin::TWO_PATCH_RHO[SphereSeries::side(hit.position)];
    let c = Rgb::new(0.3, 1.0, 2.0);
    let field = FnField(|_: &CacheQuery| c);
    let mut xs = [Vec::new(), Vec::new(), Vec::new()];
    for i in 0..2000 {
        let mut rng = RngStream::derive(6, Purpose::Test, &[i]);
        let v = surface_gather(&scene, &hit, -ray.dir, Vec3::ZERO, &field, &mut rng);
        for k in 0..3 {
            xs[k].push(v[k]);
        }
    }
    for k in 0..3 {
        let (m, s) = mean_sigma(&xs[k]);
        // cosine sampling of a Lambertian surface gives a zero-variance estimator
        assert!((m - rho[k] * c[k]).abs() <= 3.0 * s + 1e-9, "{m}");
    }
}

#[test]
fn gather_zero_albedo() {
    let scene = builtin::plane_with(Rgb::ZERO, 0.5, 0.0, 1.0);
    let (hit, xl) = nadir_hit(&scene, 1.0);
    let field = FnField(|_: &CacheQuery| Rgb::splat(1.0));
    let mut rng = RngStream::new(0, 0);
    for _ in 0..100 {
        assert_eq!(surface_gather(&scene, &hit, Vec3::new(0.0, 0.0, 1.0), xl, &field, &mut rng), Rgb::ZERO);
    }
}

#[test]
fn zero_cache_gives_direct_exactly() {
    let scene = builtin::cornell_desk();
    let cam = scene.cameras[0];
    let ray = cam.ray_through(30.5, 40.5);
    let hit = scene.intersect(&ray).unwrap();
    let mut rng = RngStream::new(0, 0);
    let v = transport_estimate(&scene, &hit, -ray.dir, cam.center(), &ZeroField, &mut rng, 4);
    assert_eq!(v, direct_radiance(&scene, &hit, -ray.dir, cam.center()).unwrap());
}

#[test]
fn estimate_is_direct_plus_gather() {
    let scene = builtin::cornell_desk();
    let cam = scene.cameras[0];
    let field = FnField(|q: &CacheQuery| if q.visible { Rgb::new(0.2, 0.3, 0.4) } else { Rgb::splat(0.05) });
    for k in 0..100 {
        let ray = cam.ray_through(10.0 + 0.4 * k as f64, 30.5);
        let Some(hit) = scene.intersect(&ray) else { continue };
        let wo = -ray.dir;
        let xl = cam.center();
        let a = transport_estimate(&scene, &hit, wo, xl, &field, &mut RngStream::new(8, k), 1);
        let b = direct_radiance(&scene, &hit, wo, xl).unwrap()
            + surface_gather(&scene, &hit, wo, xl, &field, &mut RngStream::new(8, k));
        assert_eq!(a, b);
    }
}

#[test]
fn more_branches_same_mean_lower_variance() {
    let scene = builtin::cornell_desk();
    let cam = scene.cameras[0];
    let ray = cam.ray_through(20.5, 45.5);
    let hit = scene.intersect(&ray).unwrap();
    let field = FnField(|q: &CacheQuery| {
        let base = Rgb::new(0.1, 0.2, 0.15) + Rgb::splat(0.2 * (q.x.y + 1.0));
        if q.visible {
            base * 2.0
        } else {
            base
        }
    });
    let (mut one, mut four) = (Vec::new(), Vec::new());
    for i in 0..1000 {
        let mut r1 = RngStream::derive(11, Purpose::Test, &[1, i]);
        let mut r4 = RngStream::derive(11, Purpose::Test, &[4, i]);
        one.push(transport_estimate(&scene, &hit, -ray.dir, cam.center(), &field, &mut r1, 1).luminance());
        four.push(transport_estimate(&scene, &hit, -ray.dir, cam.center(), &field, &mut r4, 4).luminance());
    }
    let (m1, s1) = mean_sigma(&one);
    let (m4, s4) = mean_sigma(&four);
    assert!((m1 - m4).abs() <= 3.0 * (s1 * s1 + s4 * s4).sqrt(), "{m1} vs {m4}");
    assert!(s4 < s1 * 0.75, "{s4} vs {s1}");
}

#[test]
fn path_tracer_converges_with_depth_on_cornell() {
    let scene = builtin::cornell_desk();
    let cam = scene.cameras[0];
    let ray = cam.ray_through(40.5, 36.5);
    let (mut d6, mut d8) = (Vec::new(), Vec::new());
    for i in 0..10_000u64 {
        let mut a = RngStream::derive(12, Purpose::Test, &[6, i]);
        d6.push(path_trace(&scene, &ray, cam.center(), &mut a, 6).total().luminance());
    }
    for i in 0..40_000u64 {
        let mut b = RngStream::derive(12, Purpose::Test, &[8, i]);
        d8.push(path_trace(&scene, &ray, cam.center(), &mut b, 8).total().luminance());
    }
    let (m6, s6) = mean_sigma(&d6);
    let (m8, s8) = mean_sigma(&d8);
    assert!((m6 - m8).abs() <= 3.0 * (s6 * s6 + s8 * s8).sqrt(), "{m6} vs {m8}");
}

#[test]
fn darkroom_is_black() {
    let mut scene = builtin::cornell_desk();
    scene.flashlight.intensity = Rgb::ZERO;
    let cam = crate::scene::Camera { intrinsics: crate::scene::Intrinsics::from_fov(16, 16, 55.0), ..scene.cameras[0] };
    for mode in [RenderMode::Path, RenderMode::Direct, RenderMode::Cache] {
        let cfg = RenderConfig { mode, spp: 4, ..Default::default() };
        let im = render_image(&scene, &cam, cam.center(), &cfg, Some(&ZeroField), 0).unwrap();
        assert!(im.data.iter().all(|&v| v == 0.0), "{mode}");
    }
}

#[test]
fn black_materials_have_no_indirect() {
    let base = builtin::cornell_desk();
    let n = base.face_count();
    let black = base.with_materials(Materials::uniform(n, SurfaceMaterial::new(Rgb::ZERO, 0.5), 0.0)).unwrap();
    let cam = crate::scene::Camera { intrinsics: crate::scene::Intrinsics::from_fov(16, 16, 55.0), ..base.cameras[0] };
    let cfg = RenderConfig { spp: 4, ..Default::default() };
    let im = render_image(&black, &cam, cam.center(), &cfg, None, 0).unwrap();
    assert!(im.data.iter().all(|&v| v == 0.0));
    // with a specular lobe only the first hit's direct term survives in direct mode
    let shiny = base.with_materials(Materials::uniform(n, SurfaceMaterial::new(Rgb::ZERO, 0.5), 0.6)).unwrap();
    let direct = render_image(&shiny, &cam, cam.center(), &RenderConfig { mode: RenderMode::Direct, ..cfg }, None, 0).unwrap();
    let depth1 = render_image(&shiny, &cam, cam.center(), &RenderConfig { max_depth: 1, ..cfg }, None, 0).unwrap();
    assert_eq!(direct, depth1);
    assert!(direct.data.iter().any(|&v| v > 0.0));
}

#[test]
fn missing_cache_is_config_error() {
    let scene = builtin::plane();
    let cam = scene.cameras[0];
    let cfg = RenderConfig { mode: RenderMode::Cache, ..Default::default() };
    assert!(matches!(render_image(&scene, &cam, cam.center(), &cfg, None, 0), Err(Error::InvalidConfig(_))));
}

#[test]
fn render_is_thread_count_independent() {
    let scene = builtin::cornell_desk();
    let cam = crate::scene::Camera { intrinsics: crate::scene::Intrinsics::from_fov(24, 24, 55.0), ..scene.cameras[0] };
    let field = FnField(|q: &CacheQuery| Rgb::splat(if q.visible { 0.3 } else { 0.1 }));
    for mode in [RenderMode::Path, RenderMode::Cache] {
        let cfg = RenderConfig { mode, spp: 8, seed: 3, ..Default::default() };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| render_image(&scene, &cam, cam.center(), &cfg, Some(&field), 7).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn batched_pixels_match_single_pixel_renders() {
    let scene = builtin::cornell_desk();
    let cam = scene.cameras[0];
    let field = FnField(|q: &CacheQuery| Rgb::splat(0.1 + 0.05 * q.x.x.abs()));
    let cfg = RenderConfig { mode: RenderMode::Cache, spp: 3, m: 2, seed: 1, ..Default::default() };
    let pixels = [(3, 40), (31, 31), (60, 10)];
    let batch = render_pixels(&scene, &cam, cam.center(), &pixels, &cfg, Some(&field), 2).unwrap();
    for (&(px, py), b) in pixels.iter().zip(&batch) {
        assert_eq!(render_pixel(&scene, &cam, cam.center(), px, py, &cfg, Some(&field), 2).unwrap(), *b);
    }
}

#[test]
fn path_render_converges_per_pixel() {
    // sigma of a 4096-spp estimate from the spread of 256 independent 64-spp
    // renders (16384 samples keep the heavy indirect tail from inflating it)
    let scene = builtin::cornell_desk();
    let cam = crate::scene::Camera { intrinsics: crate::scene::Intrinsics::from_fov(32, 32, 55.0), ..scene.cameras[0] };
    let reps: Vec<crate::image::Image> = (0..256)
        .map(|seed| {
            let cfg = RenderConfig { spp: 64, seed, ..Default::default() };
            render_image(&scene, &cam, cam.center(), &cfg, None, 0).unwrap()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..reps[0].data.len() / 3 {
        let xs: Vec<f64> = reps
            .iter()
            .map(|r| Rgb::new(r.data[3 * i] as f64, r.data[3 * i + 1] as f64, r.data[3 * i + 2] as f64).luminance())
            .collect();
        let (m, s) = mean_sigma(&xs);
        if m > 0.0 {
            // standard error over 256 reps of 64 spp, rescaled to 64 reps
            worst = worst.max(2.0 * s / m);
        }
    }
    assert!(worst <= 0.02, "worst relative sigma {worst}");
}

#[test]
fn jacobian_value_matches_estimators() {
    let scene = builtin::cornell_desk();
    let cam = scene.cameras[0];
    let field = FnField(|q: &CacheQuery| Rgb::splat(if q.visible { 0.3 } else { 0.1 }));
    for k in 0..50u64 {
        let ray = cam.ray_through(8.0 + k as f64, 33.3);
        let xl = cam.center();
        let a = pixel_with_jacobian(&scene, &ray, xl, RenderMode::Path, 6, 1, None, &mut RngStream::new(1, k));
        let b = path_trace(&scene, &ray, xl, &mut RngStream::new(1, k), 6).total();
        assert!((a.value - b).max_component().abs() <= 1e-12 * (1.0 + b.max_component()));
        let c = pixel_with_jacobian(&scene, &ray, xl, RenderMode::Cache, 6, 2, Some(&field), &mut RngStream::new(2, k));
        let d = match scene.intersect(&ray) {
            Some(h) => transport_estimate(&scene, &h, -ray.dir, xl, &field, &mut RngStream::new(2, k), 2),
            None => Rgb::ZERO,
        };
        assert!((c.value - d).max_component().abs() <= 1e-12);
    }
}

/// Finite differences of the same sample path (common random numbers) against
/// the detached-sampling Jacobian.
#[test]
fn jacobian_matches_common_random_number_differences() {
    let scene = builtin::cornell_desk();
    let cam = scene.cameras[0];
    let xl = cam.center();
    let field = FnField(|q: &CacheQuery| Rgb::new(0.2, 0.25, 0.3) * (1.0 + q.x.y));
    let h = 1e-6;
    // without a specular lobe the sampling does not depend on albedo, so CRN differences are exact
    let n = scene.face_count();
    let mut mats = scene.materials.clone();
    mats.specular = 0.0;
    let diffuse = scene.with_materials(mats).unwrap();
    for k in 0..40u64 {
        let ray = cam.ray_through(5.0 + 1.3 * k as f64, 20.0 + 0.7 * k as f64);
        for mode in [RenderMode::Direct, RenderMode::Cache, RenderMode::Path] {
            let jac = pixel_with_jacobian(&diffuse, &ray, xl, mode, 6, 1, Some(&field), &mut RngStream::new(3, k));
            let mut dense = vec![Rgb::ZERO; n];
            let mut dr = vec![0.0; n];
            for c in 0..3 {
                let mut w = Rgb::ZERO;
                w[c] = 1.0;
                dense.iter_mut().for_each(|v| *v = Rgb::ZERO);
                jac.accumulate(w, &mut dense, &mut dr);
                for f in jac.entries.iter().map(|e| e.face as usize) {
                    let eval = |delta: f64| {
                        let mut m = diffuse.materials.clone();
                        m.faces[f].albedo[c] += delta;
                        let s = diffuse.with_materials(m).unwrap();
                        pixel_with_jacobian(&s, &ray, xl, mode, 6, 1, Some(&field), &mut RngStream::new(3, k)).value[c]
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    assert!((fd - dense[f][c]).abs() <= 1e-6 * (1.0 + fd.abs()), "{mode} face {f}: {fd} vs {}", dense[f][c]);
                }
            }
        }
    }
}
