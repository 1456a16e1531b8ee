//! Real spherical harmonics up to degree 3, in the usual splatting order.

use nalgebra::Vector3;

use crate::scene::SH_C0;

const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Color for unit view direction `d` from `dc` and `rest` (`f_rest` layout:
/// 15 coefficients for red, then green, then blue).
pub fn eval_sh(degree: u8, dc: &[f64; 3], rest: &[f64; 45], d: &Vector3<f64>) -> [f64; 3] {
    let (x, y, z) = (d.x, d.y, d.z);
    let mut basis = [0.0; 15];
    if degree >= 1 {
        basis[0] = -C1 * y;
        basis[1] = C1 * z;
        basis[2] = -C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        basis[3] = C2[0] * x * y;
        basis[4] = C2[1] * y * z;
        basis[5] = C2[2] * (2.0 * zz - xx - yy);
        basis[6] = C2[3] * x * z;
        basis[7] = C2[4] * (xx - yy);
        if degree >= 3 {
            basis[8] = C3[0] * y * (3.0 * xx - yy);
            basis[9] = C3[1] * x * y * z;
            basis[10] = C3[2] * y * (4.0 * zz - xx - yy);
            basis[11] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            basis[12] = C3[4] * x * (4.0 * zz - xx - yy);
            basis[13] = C3[5] * z * (xx - yy);
            basis[14] = C3[6] * x * (xx - 3.0 * yy);
        }
    }
    let n = match degree {
        0 => 0,
        1 => 3,
        2 => 8,
        _ => 15,
    };
    std::array::from_fn(|c| {
        let mut v = 0.5 + SH_C0 * dc[c];
        for k in 0..n {
            v += basis[k] * rest[c * 15 + k];
        }
        v
    })
}
