//! Rotations in three dimensions: unit quaternions and Wigner-D matrices.
//!
//! Irrep matrices are indexed `m = -l..=l` at row/column `m + l`. The vector
//! irrep `D^1` is the rotation matrix written in the spherical basis
//! `e_{+1} = -(x + iy)/√2`, `e_0 = z`, `e_{-1} = (x - iy)/√2`, so that
//! `D^1_{mn}(R) = e_m^H R e_n`. Higher `D^l` are obtained from
//! `D^{l-1} ⊗ D^1` by projecting onto the stretched (`j = j1 + 1`) Clebsch–Gordan
//! subspace, which keeps the homomorphism property exact.

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

pub type Quaternion = [f64; 4];

pub fn quat_mul(a: &Quaternion, b: &Quaternion) -> Quaternion {
    let [aw, ax, ay, az] = *a;
    let [bw, bx, by, bz] = *b;
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

pub fn quat_conj(q: &Quaternion) -> Quaternion {
    [q[0], -q[1], -q[2], -q[3]]
}

pub fn quat_normalize(q: &Quaternion) -> Quaternion {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    [q[0] / n, q[1] / n, q[2] / n, q[3] / n]
}

/// `Rz(alpha) Ry(beta) Rz(gamma)`.
pub fn quat_from_zyz(alpha: f64, beta: f64, gamma: f64) -> Quaternion {
    let qz = |t: f64| [(t / 2.0).cos(), 0.0, 0.0, (t / 2.0).sin()];
    let qy = [(beta / 2.0).cos(), 0.0, (beta / 2.0).sin(), 0.0];
    quat_mul(&quat_mul(&qz(alpha), &qy), &qz(gamma))
}

pub fn rotation_matrix(q: &Quaternion) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

fn spherical_basis() -> [[Complex64; 3]; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // rows indexed by m + 1 for m = -1, 0, 1; entries are (x, y, z) components
    [
        [Complex64::new(s, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        [Complex64::new(-s, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, 0.0)],
    ]
}

/// `D^1(R)` in the spherical basis.
pub fn wigner_d1(r: &Matrix3<f64>) -> DMatrix<Complex64> {
    let e = spherical_basis();
    DMatrix::from_fn(3, 3, |m, n| {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..3 {
            for b in 0..3 {
                acc += e[m][a].conj() * r[(a, b)] * e[n][b];
            }
        }
        acc
    })
}

/// Clebsch–Gordan coefficient `<j1, m - m2; 1, m2 | j1 + 1, m>`.
fn stretched_cg(j1: i64, m: i64, m2: i64) -> f64 {
    let j1f = j1 as f64;
    let mf = m as f64;
    let v = match m2 {
        1 => (j1f + mf) * (j1f + mf + 1.0) / ((2.0 * j1f + 1.0) * (2.0 * j1f + 2.0)),
        0 => (j1f - mf + 1.0) * (j1f + mf + 1.0) / ((2.0 * j1f + 1.0) * (j1f + 1.0)),
        -1 => (j1f - mf) * (j1f - mf + 1.0) / ((2.0 * j1f + 1.0) * (2.0 * j1f + 2.0)),
        _ => unreachable!("m2 must be -1, 0 or 1"),
    };
    v.max(0.0).sqrt()
}

/// `D^0 .. D^lmax` for one rotation.
pub fn wigner_d_all(r: &Matrix3<f64>, lmax: usize) -> Vec<DMatrix<Complex64>> {
    let mut out = Vec::with_capacity(lmax + 1);
    out.push(DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
    if lmax == 0 {
        return out;
    }
    let d1 = wigner_d1(r);
    out.push(d1.clone());
    for l in 2..=lmax as i64 {
        let prev = &out[(l - 1) as usize];
        let j1 = l - 1;
        let size = (2 * l + 1) as usize;
        let mut dl = DMatrix::from_element(size, size, Complex64::new(0.0, 0.0));
        for m in -l..=l {
            for n in -l..=l {
                let mut acc = Complex64::new(0.0, 0.0);
                for m2 in -1..=1i64 {
                    let m1 = m - m2;
                    if m1.abs() > j1 {
                        continue;
                    }
                    let cm = stretched_cg(j1, m, m2);
                    if cm == 0.0 {
                        continue;
                    }
                    for n2 in -1..=1i64 {
                        let n1 = n - n2;
                        if n1.abs() > j1 {
                            continue;
                        }
                        let cn = stretched_cg(j1, n, n2);
                        acc += prev[((m1 + j1) as usize, (n1 + j1) as usize)]
                            * d1[((m2 + 1) as usize, (n2 + 1) as usize)]
                            * (cm * cn);
                    }
                }
                dl[((m + l) as usize, (n + l) as usize)] = acc;
            }
        }
        out.push(dl);
    }
    out
}
