//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone)]
pub struct Integral {
    pub value: Vec<f64>,
    /// Sum of the per-interval |Kronrod - Gauss| estimates (max over components).
    pub abs_error: f64,
    pub intervals: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Segment
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];

    f(center, buf);
    for d in 0..dim {
        kron[d] = WGK[7] * buf[d];
        gauss[d] = WG[3] * buf[d];
    }
    for (node, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate().take(7) {
        let dx = half * x;
        for point in [center - dx, center + dx] {
            f(point, buf);
            for d in 0..dim {
                kron[d] += wk * buf[d];
                if node % 2 == 1 {
                    gauss[d] += WG[node / 2] * buf[d];
                }
            }
        }
    }
    let mut error: f64 = 0.0;
    for d in 0..dim {
        kron[d] *= half;
        gauss[d] *= half;
        error = error.max((kron[d] - gauss[d]).abs());
    }
    Segment {
        a,
        b,
        value: kron,
        error,
    }
}

/// Integrates the `dim`-dimensional integrand `f` over `[a, b]` until the
/// summed error estimate drops below `abs_tol` or `max_intervals` is reached.
///
/// `f(x, out)` writes the integrand at `x` into `out`.
pub fn integrate_vec<F>(mut f: F, a: f64, b: f64, dim: usize, abs_tol: f64, max_intervals: usize) -> Integral
where
    F: FnMut(f64, &mut [f64]),
{
    if !(b > a) {
        return Integral {
            value: vec![0.0; dim],
            abs_error: 0.0,
            intervals: 0,
        };
    }
    let mut buf = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    let first = gk15(&mut f, a, b, dim, &mut buf);
    let mut total_error = first.error;
    heap.push(first);

    while total_error > abs_tol && heap.len() < max_intervals {
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let left = gk15(&mut f, worst.a, mid, dim, &mut buf);
        let right = gk15(&mut f, mid, worst.b, dim, &mut buf);
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    let intervals = heap.len();
    let mut value = vec![0.0; dim];
    let mut err = 0.0;
    for seg in heap {
        for d in 0..dim {
            value[d] += seg.value[d];
        }
        err += seg.error;
    }
    Integral {
        value,
        abs_error: err,
        intervals,
    }
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate<F>(mut f: F, a: f64, b: f64, abs_tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let r = integrate_vec(|x, out| out[0] = f(x), a, b, 1, abs_tol, 500);
    (r.value[0], r.abs_error)
}
