use nalgebra::Vector3;

use super::*;
use crate::geom::{look_at, sample_sphere, Pose, Quaternion, SphericalConfig};
use crate::scene::{generate_synthetic, rgb_to_sh_dc, GaussianScene, SceneStyle};

fn cam_z4() -> Pose<f64> {
    look_at(&Vector3::new(0.0, 0.0, 4.0), &Vector3::zeros(), &Vector3::y()).unwrap()
}

fn one_splat(mean: [f64; 3], s: f64, opacity: f64, rgb: [f64; 3]) -> GaussianScene {
    let mut g = GaussianScene::default();
    g.push(mean, [s.ln(); 3], Quaternion::identity(), opacity, rgb_to_sh_dc(rgb));
    g
}

#[test]
fn on_axis_projection() {
    let k = CameraIntrinsics::square(64);
    let p = project_splat(
        &Vector3::zeros(),
        &Vector3::repeat(0.1),
        &Quaternion::identity(),
        &cam_z4(),
        &k,
    )
    .unwrap();
    assert!((p.center_px.x - k.cx).abs() < 1e-12 && (p.center_px.y - k.cy).abs() < 1e-12);
    assert!((p.depth - 4.0).abs() < 1e-12);
}

#[test]
fn isotropic_footprint_matches_pinhole_jacobian() {
    let k = CameraIntrinsics::square(128);
    let s = 0.07;
    let p = project_splat(&Vector3::zeros(), &Vector3::repeat(s), &Quaternion::identity(), &cam_z4(), &k).unwrap();
    let expect = (k.fx * s / 4.0).powi(2) + DILATION;
    assert!((p.cov2d[(0, 0)] - expect).abs() < 1e-9 * expect);
    assert!((p.cov2d[(1, 1)] - expect).abs() < 1e-9 * expect);
    assert!(p.cov2d[(0, 1)].abs() < 1e-12);
}

#[test]
fn splat_behind_camera_is_culled() {
    let k = CameraIntrinsics::square(64);
    let behind = Vector3::new(0.0, 0.0, 5.0);
    assert!(project_splat(&behind, &Vector3::repeat(0.1), &Quaternion::identity(), &cam_z4(), &k).is_none());
    let far_off = Vector3::new(50.0, 0.0, 0.0);
    assert!(project_splat(&far_off, &Vector3::repeat(0.1), &Quaternion::identity(), &cam_z4(), &k).is_none());
}

#[test]
fn projection_in_f32_agrees() {
    let k = CameraIntrinsics::square(64);
    let m = Vector3::new(0.2, -0.1, 0.3);
    let q = Quaternion::from_axis_angle_deg(&Vector3::new(1.0, 1.0, 0.0), 30.0);
    let s = Vector3::new(0.1, 0.05, 0.02);
    let a = project_splat(&m, &s, &q, &cam_z4(), &k).unwrap();
    let b = project_splat(&m.cast::<f32>(), &s.cast(), &q.cast(), &cam_z4().cast(), &k).unwrap();
    assert!((a.center_px - b.center_px.cast::<f64>()).norm() < 1e-3);
    assert!((a.cov2d - b.cov2d.cast::<f64>()).norm() < 1e-3 * a.cov2d.norm());
}

#[test]
fn empty_scene_is_background() {
    let k = CameraIntrinsics::square(32);
    let img = render(&GaussianScene::default(), &cam_z4(), &k, [0.2, 0.3, 0.4]).unwrap();
    assert!(img.rgb.iter().all(|p| *p == [0.2, 0.3, 0.4]));
    assert!(img.depth.unwrap().iter().all(|&d| d == 0.0));
}

#[test]
fn single_opaque_red_splat_peaks_at_principal_point() {
    let k = CameraIntrinsics::square(64);
    let g = one_splat([0.0; 3], 0.1, 0.999, [1.0, 0.0, 0.0]);
    let img = render(&g, &cam_z4(), &k, [0.0; 3]).unwrap();
    let (cx, cy) = (k.cx as usize, k.cy as usize);
    let c = img.pixel(cx, cy);
    assert!((c[0] - 1.0).abs() < 0.05 && c[1] < 0.05 && c[2] < 0.05);
    let max = img.rgb.iter().map(|p| p[0]).fold(0.0, f64::max);
    assert_eq!(max, c[0]);
    assert!((img.depth_at(cx, cy).unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn near_opaque_splat_hides_far_one() {
    let k = CameraIntrinsics::square(64);
    let mut g = one_splat([0.0, 0.0, 2.0], 0.1, 0.9999, [0.0, 1.0, 0.0]);
    g.push([0.0; 3], [0.2f64.ln(); 3], Quaternion::identity(), 0.9, rgb_to_sh_dc([1.0, 0.0, 0.0]));
    let img = render(&g, &cam_z4(), &k, [0.0; 3]).unwrap();
    let (cx, cy) = (k.cx as usize, k.cy as usize);
    let c = img.pixel(cx, cy);
    // 0.9999 green, then 1e-4 · 0.9 red
    assert!((c[1] - 1.0).abs() < 1e-3 && c[0] < 1e-3);
    assert!((img.depth_at(cx, cy).unwrap() - 2.0).abs() < 1e-12);
}

#[test]
fn compositing_is_a_convex_combination() {
    let col = [0.3, 0.6, 0.9];
    let mut g = generate_synthetic(4, 200, SceneStyle::Clustered).unwrap();
    for dc in &mut g.sh_dc {
        *dc = rgb_to_sh_dc(col);
    }
    let img = render(&g, &cam_z4(), &CameraIntrinsics::square(48), col).unwrap();
    for p in &img.rgb {
        for c in 0..3 {
            assert!((p[c] - col[c]).abs() < 1e-12);
        }
    }
}

#[test]
fn serial_parallel_and_thread_counts_are_bit_identical() {
    let g = generate_synthetic(7, 500, SceneStyle::Textured).unwrap();
    let pose = sample_sphere::<f64>(&SphericalConfig::default()).unwrap()[5];
    let k = CameraIntrinsics::square(96);
    let serial = Rasterizer::new(RenderOptions {
        parallel: false,
        ..Default::default()
    })
    .render(&g, &pose, &k, [0.0; 3])
    .unwrap();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let par = pool.install(|| render(&g, &pose, &k, [0.0; 3]).unwrap());
        assert_eq!(par, serial);
    }
    // another tile size only changes the work split
    let t7 = Rasterizer::new(RenderOptions {
        tile_size: 7,
        ..Default::default()
    })
    .render(&g, &pose, &k, [0.0; 3])
    .unwrap();
    assert_eq!(t7, serial);
}

#[test]
fn rigid_motion_of_scene_and_camera_leaves_image_unchanged() {
    let g = generate_synthetic(9, 300, SceneStyle::Textured).unwrap();
    let pose = sample_sphere::<f64>(&SphericalConfig::default()).unwrap()[2];
    let k = CameraIntrinsics::square(64);
    let a = render(&g, &pose, &k, [0.1; 3]).unwrap();
    let rot = Quaternion::from_axis_angle_deg(&Vector3::new(0.3, -1.0, 0.4), 77.0);
    let t = Vector3::new(0.5, -0.2, 1.0);
    let moved = g.transformed(&rot, &t);
    let g_motion = Pose::new(rot, t);
    let pose2 = pose.compose(&g_motion.inverse());
    let b = render(&moved, &pose2, &k, [0.1; 3]).unwrap();
    for (p, q) in a.rgb.iter().zip(&b.rgb) {
        for c in 0..3 {
            assert!((p[c] - q[c]).abs() < 1e-6);
        }
    }
}

#[test]
fn render_counter_counts() {
    let r = Rasterizer::default();
    let k = CameraIntrinsics::square(16);
    for _ in 0..3 {
        r.render(&GaussianScene::default(), &cam_z4(), &k, [0.0; 3]).unwrap();
    }
    assert_eq!(r.render_count(), 3);
    r.reset_count();
    assert_eq!(r.render_count(), 0);
}

#[test]
fn sh_degree_one_with_zero_rest_matches_degree_zero() {
    let mut g = generate_synthetic(2, 100, SceneStyle::Clustered).unwrap();
    g.sh_rest = Some(vec![[0.0; 45]; g.len()]);
    let k = CameraIntrinsics::square(32);
    let a = render(&g, &cam_z4(), &k, [0.0; 3]).unwrap();
    let b = Rasterizer::new(RenderOptions {
        sh_degree: 3,
        ..Default::default()
    })
    .render(&g, &cam_z4(), &k, [0.0; 3])
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_intrinsics_rejected() {
    let mut k = CameraIntrinsics::square(16);
    k.cx = 20.0;
    assert!(matches!(
        render(&GaussianScene::default(), &cam_z4(), &k, [0.0; 3]),
        Err(RenderError::InvalidIntrinsics(_))
    ));
}

#[test]
fn png_round_trip_and_downsample() {
    let g = generate_synthetic(7, 200, SceneStyle::Textured).unwrap();
    let img = render(&g, &cam_z4(), &CameraIntrinsics::square(32), [0.0; 3]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.png");
    img.save_png(&path).unwrap();
    let back = Image::load_png(&path).unwrap();
    for (p, q) in img.rgb.iter().zip(&back.rgb) {
        for c in 0..3 {
            assert!((p[c] - q[c]).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
    let small = img.downsample(4);
    assert_eq!((small.width, small.height), (8, 8));
    let mean_big: f64 = img.rgb.iter().map(|p| p[0]).sum::<f64>() / 1024.0;
    let mean_small: f64 = small.rgb.iter().map(|p| p[0]).sum::<f64>() / 64.0;
    assert!((mean_big - mean_small).abs() < 1e-12);
}
