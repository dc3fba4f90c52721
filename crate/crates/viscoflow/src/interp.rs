//! Periodic cubic (Catmull-Rom) interpolation.
//!
//! Exact on linear data and on grid nodes; third-order accurate on smooth
//! data. Used to evaluate fields at characteristic feet, so samples may lie
//! anywhere in physical space and are wrapped into the box.

use crate::field::{Mat3, ScalarField, TensorField, VectorField};
use crate::grid::Grid;

/// Tap weights for offsets [-1, 0, +1, +2] at local coordinate `t`.
#[inline]
fn cr_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t + 2.0 * t2 - t3),
        1.0 - 2.5 * t2 + 1.5 * t3,
        0.5 * (t + 4.0 * t2 - 3.0 * t3),
        0.5 * (t3 - t2),
    ]
}

struct AxisTaps {
    idx: [usize; 4],
    w: [f64; 4],
    /// Number of active taps: 4 on an interpolated axis, 1 on a singleton.
    cnt: usize,
}

/// Snap tolerance for recognising exact node hits despite `i*h/h`
/// rounding, in fractional cells.
const NODE_SNAP: f64 = 1e-9;

fn axis_taps(grid: &Grid, axis: usize, coord: f64) -> AxisTaps {
    let n = grid.n(axis);
    if n == 1 {
        return AxisTaps {
            idx: [0; 4],
            w: [1.0, 0.0, 0.0, 0.0],
            cnt: 1,
        };
    }
    let x = grid.wrap_coord(coord, axis);
    let s = x / grid.h(axis);
    let nearest = s.round();
    let (base, t) = if (s - nearest).abs() <= NODE_SNAP {
        (nearest as isize, 0.0)
    } else {
        (s.floor() as isize, s - s.floor())
    };
    let ni = n as isize;
    AxisTaps {
        idx: [
            (base - 1).rem_euclid(ni) as usize,
            base.rem_euclid(ni) as usize,
            (base + 1).rem_euclid(ni) as usize,
            (base + 2).rem_euclid(ni) as usize,
        ],
        w: cr_weights(t),
        cnt: 4,
    }
}

/// Interpolate one component at a physical point; optionally report the
/// min/max over the containing cell corners for monotone clipping.
fn sample_raw(grid: &Grid, data: &[f64], p: [f64; 3], bounds: Option<&mut (f64, f64)>) -> f64 {
    let tx = axis_taps(grid, 0, p[0]);
    let ty = axis_taps(grid, 1, p[1]);
    let tz = axis_taps(grid, 2, p[2]);
    let [_, ny, _] = [grid.n(0), grid.n(1), grid.n(2)];
    let nx = grid.n(0);

    let mut acc = 0.0;
    for kz in 0..tz.cnt {
        let wz = tz.w[kz];
        let base_z = tz.idx[kz] * ny;
        let mut acc_y = 0.0;
        for ky in 0..ty.cnt {
            let wy = ty.w[ky];
            let base = (base_z + ty.idx[ky]) * nx;
            let row = &data[base..base + nx];
            let v = tx.w[0] * row[tx.idx[0]]
                + tx.w[1] * row[tx.idx[1]]
                + tx.w[2] * row[tx.idx[2]]
                + tx.w[3] * row[tx.idx[3]];
            acc_y += wy * v;
        }
        acc += wz * acc_y;
    }

    if let Some(b) = bounds {
        // Corners of the containing cell: taps 1 and 2 on each active axis
        // (tap 0 on singleton axes).
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let zs: &[usize] = if tz.cnt == 1 { &[0] } else { &[1, 2] };
        let ys: &[usize] = if ty.cnt == 1 { &[0] } else { &[1, 2] };
        for &kz in zs {
            for &ky in ys {
                let base = (tz.idx[kz] * ny + ty.idx[ky]) * nx;
                for kx in [1usize, 2] {
                    let v = data[base + tx.idx[kx]];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        *b = (lo, hi);
    }
    acc
}

pub(crate) fn sample_component(grid: &Grid, data: &[f64], p: [f64; 3]) -> f64 {
    sample_raw(grid, data, p, None)
}

/// Sample with the result clipped to the containing cell's corner range.
pub(crate) fn sample_component_monotone(grid: &Grid, data: &[f64], p: [f64; 3]) -> f64 {
    let mut b = (f64::NEG_INFINITY, f64::INFINITY);
    let v = sample_raw(grid, data, p, Some(&mut b));
    v.clamp(b.0, b.1)
}

/// Evaluate a scalar field at one physical point.
pub fn sample_scalar(f: &ScalarField, p: [f64; 3]) -> f64 {
    sample_component(f.grid(), f.data(), p)
}

/// Monotonized variant: result clipped to the local cell bounds.
pub fn sample_scalar_monotone(f: &ScalarField, p: [f64; 3]) -> f64 {
    sample_component_monotone(f.grid(), f.data(), p)
}

/// Evaluate a scalar field at a list of points.
pub fn sample_at(f: &ScalarField, points: &[[f64; 3]]) -> Vec<f64> {
    points.iter().map(|&p| sample_scalar(f, p)).collect()
}

/// Evaluate a vector field at a list of points.
pub fn sample_at_vector(v: &VectorField, points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    points.iter().map(|&p| sample_vector(v, p)).collect()
}

/// Evaluate a tensor field at a list of points.
pub fn sample_at_tensor(t: &TensorField, points: &[[f64; 3]]) -> Vec<Mat3> {
    points.iter().map(|&p| sample_tensor(t, p)).collect()
}

pub fn sample_vector(v: &VectorField, p: [f64; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for c in 0..v.grid().dim() {
        out[c] = sample_component(v.grid(), v.comp(c), p);
    }
    out
}

pub fn sample_tensor(t: &TensorField, p: [f64; 3]) -> Mat3 {
    let dim = t.grid().dim();
    let mut out = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            out[i][j] = sample_component(t.grid(), t.comp(i, j), p);
        }
    }
    out
}
