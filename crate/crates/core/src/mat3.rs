//! Minimal 3x3 helpers for the affine-embedded update maps. Matrices are
//! row-major; they act on column vectors `[u_v, u_s, 1]`.

pub(crate) type Mat3 = [[f64; 3]; 3];

pub(crate) const IDENTITY: Mat3 = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
];

pub(crate) fn mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub(crate) fn mul_vec(a: &Mat3, v: &[f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2];
    }
    out
}

pub(crate) fn add(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][j] + b[i][j];
        }
    }
    out
}

pub(crate) fn scale(a: &Mat3, s: f64) -> Mat3 {
    let mut out = *a;
    for row in out.iter_mut() {
        for x in row.iter_mut() {
            *x *= s;
        }
    }
    out
}

pub(crate) fn neg(a: &Mat3) -> Mat3 {
    scale(a, -1.0)
}

/// Max absolute row sum.
pub(crate) fn inf_norm(a: &Mat3) -> f64 {
    let mut norm = 0.0f64;
    for row in a {
        let s = libm::fabs(row[0]) + libm::fabs(row[1]) + libm::fabs(row[2]);
        if s > norm {
            norm = s;
        }
    }
    norm
}

/// Matrix exponential by scaling-and-squaring around a truncated Taylor
/// series: the argument is halved until its norm sits below 0.5, the series
/// is summed until terms fall below 1e-16 of the running sum, and the result
/// is squared back up. A zero third row stays exactly `[0, 0, 1]` in the
/// output, so affine embeddings survive bit-for-bit.
pub(crate) fn expm(a: &Mat3) -> Mat3 {
    if !inf_norm(a).is_finite() {
        return [[f64::NAN; 3]; 3];
    }
    let mut scaled = *a;
    let mut squarings = 0u32;
    while inf_norm(&scaled) > 0.5 {
        scaled = scale(&scaled, 0.5);
        squarings += 1;
    }
    let mut sum = IDENTITY;
    let mut term = IDENTITY;
    for n in 1..=40u32 {
        term = scale(&mul(&term, &scaled), 1.0 / f64::from(n));
        sum = add(&sum, &term);
        if inf_norm(&term) <= 1e-16 * inf_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = mul(&sum, &sum);
    }
    sum
}

/// Gaussian elimination with partial pivoting. `None` when the pivot
/// collapses (singular system).
#[allow(clippy::needless_range_loop)] // explicit indices mirror the elimination
pub(crate) fn solve(mut a: Mat3, mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let mut pivot = col;
        for row in col + 1..3 {
            if libm::fabs(a[row][col]) > libm::fabs(a[pivot][col]) {
                pivot = row;
            }
        }
        if libm::fabs(a[pivot][col]) < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for j in col..3 {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..3).rev() {
        let mut s = b[col];
        for j in col + 1..3 {
            s -= a[col][j] * x[j];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}
