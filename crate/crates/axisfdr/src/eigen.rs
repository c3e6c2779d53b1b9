//! Symmetric 3x3 eigendecomposition.
//!
//! Eigenvalues come from the trigonometric solution of the characteristic
//! polynomial; eigenvectors from cross products of the rows of `A - lambda I`.
//! When the discriminant is nearly zero (clustered eigenvalues) or the
//! closed-form vectors fail a residual check, the solver falls back to cyclic
//! Jacobi rotations, which are unconditionally stable for symmetric input.

use std::f64::consts::PI;

pub type Mat3 = [[f64; 3]; 3];
pub type Vec3 = [f64; 3];

const RESIDUAL_TOL: f64 = 1e-11;

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn mat_vec(m: &Mat3, v: &Vec3) -> Vec3 {
    [dot(&m[0], v), dot(&m[1], v), dot(&m[2], v)]
}

/// Eigenvalues in descending order with matching unit eigenvectors.
#[derive(Clone, Copy, Debug)]
pub struct SymEigen3 {
    pub values: [f64; 3],
    pub vectors: [Vec3; 3],
}

pub fn eigen_sym3(m: &Mat3) -> SymEigen3 {
    let scale_factor = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    if scale_factor == 0.0 {
        return SymEigen3 {
            values: [0.0; 3],
            vectors: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
    }
    let mut b = *m;
    for row in &mut b {
        for v in row.iter_mut() {
            *v /= scale_factor;
        }
    }

    let off = b[0][1] * b[0][1] + b[0][2] * b[0][2] + b[1][2] * b[1][2];
    let mut result = if off < 1e-28 {
        diagonal_eigen(&b)
    } else {
        match closed_form(&b, off) {
            Some(e) => e,
            None => jacobi(&b),
        }
    };
    for v in &mut result.values {
        *v *= scale_factor;
    }
    result
}

fn diagonal_eigen(b: &Mat3) -> SymEigen3 {
    let mut pairs = [
        (b[0][0], [1.0, 0.0, 0.0]),
        (b[1][1], [0.0, 1.0, 0.0]),
        (b[2][2], [0.0, 0.0, 1.0]),
    ];
    pairs.sort_by(|a, c| c.0.total_cmp(&a.0));
    SymEigen3 {
        values: [pairs[0].0, pairs[1].0, pairs[2].0],
        vectors: [pairs[0].1, pairs[1].1, pairs[2].1],
    }
}

fn closed_form(b: &Mat3, off: f64) -> Option<SymEigen3> {
    let q = (b[0][0] + b[1][1] + b[2][2]) / 3.0;
    let p2 = (b[0][0] - q).powi(2) + (b[1][1] - q).powi(2) + (b[2][2] - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    if p < 1e-14 {
        return None;
    }
    let mut c = *b;
    for i in 0..3 {
        c[i][i] -= q;
        for v in &mut c[i] {
            *v /= p;
        }
    }
    let r = 0.5 * det3(&c);
    let phi = if r <= -1.0 {
        PI / 3.0
    } else if r >= 1.0 {
        0.0
    } else {
        r.acos() / 3.0
    };
    // phi in [0, pi/3] orders the roots descending by construction
    let l0 = q + 2.0 * p * phi.cos();
    let l2 = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();
    let l1 = 3.0 * q - l0 - l2;
    let values = [l0, l1, l2];

    let v0 = eigenvector_for(b, l0)?;
    let v2 = eigenvector_for(b, l2)?;
    let mut v1 = cross(&v2, &v0);
    let n1 = norm(&v1);
    if n1 < 1e-8 {
        return None;
    }
    v1 = scale(&v1, 1.0 / n1);
    let vectors = [v0, v1, v2];
    for (lambda, v) in values.iter().zip(vectors.iter()) {
        if residual(b, *lambda, v) > RESIDUAL_TOL {
            return None;
        }
    }
    Some(SymEigen3 { values, vectors })
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn eigenvector_for(b: &Mat3, lambda: f64) -> Option<Vec3> {
    let mut a = *b;
    for i in 0..3 {
        a[i][i] -= lambda;
    }
    let candidates = [
        cross(&a[0], &a[1]),
        cross(&a[0], &a[2]),
        cross(&a[1], &a[2]),
    ];
    let best = candidates
        .iter()
        .max_by(|x, y| dot(x, x).total_cmp(&dot(y, y)))
        .copied()
        .unwrap();
    let n = norm(&best);
    if n < 1e-10 {
        return None;
    }
    Some(scale(&best, 1.0 / n))
}

fn residual(b: &Mat3, lambda: f64, v: &Vec3) -> f64 {
    let bv = mat_vec(b, v);
    (0..3)
        .map(|i| (bv[i] - lambda * v[i]).abs())
        .fold(0.0f64, f64::max)
}

fn jacobi(b: &Mat3) -> SymEigen3 {
    let mut a = *b;
    let mut v: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off < 1e-32 {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq.abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let rotate = |m: &mut Mat3, row_based: bool| {
                for k in 0..3 {
                    let (mkp, mkq) = if row_based {
                        (m[k][p], m[k][q])
                    } else {
                        (m[p][k], m[q][k])
                    };
                    let np = c * mkp - s * mkq;
                    let nq = s * mkp + c * mkq;
                    if row_based {
                        m[k][p] = np;
                        m[k][q] = nq;
                    } else {
                        m[p][k] = np;
                        m[q][k] = nq;
                    }
                }
            };
            rotate(&mut a, false);
            rotate(&mut a, true);
            rotate(&mut v, true);
        }
    }
    let mut pairs = [
        (a[0][0], [v[0][0], v[1][0], v[2][0]]),
        (a[1][1], [v[0][1], v[1][1], v[2][1]]),
        (a[2][2], [v[0][2], v[1][2], v[2][2]]),
    ];
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    SymEigen3 {
        values: [pairs[0].0, pairs[1].0, pairs[2].0],
        vectors: [pairs[0].1, pairs[1].1, pairs[2].1],
    }
}
