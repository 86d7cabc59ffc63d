//! Adaptive Gauss–Kronrod (7/15) quadrature over real parameter intervals.
//!
//! Integrands may be real, complex or small fixed-size vectors of either;
//! the error estimate of a vector integrand is the largest component error.
//! Subintervals are refined in order of decreasing error estimate until the
//! total error meets `max(abs_tol, rel_tol * |integral|)`.

use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

/// Values that can be accumulated by the quadrature rules.
pub trait QuadValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    /// Magnitude used for error control.
    fn magnitude(&self) -> f64;
}

impl QuadValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QuadValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Fixed-size vector of values, integrated component-wise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vector<T, const N: usize>(pub [T; N]);

impl<T: QuadValue, const N: usize> Add for Vector<T, N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o = *o + r;
        }
        Vector(out)
    }
}

impl<T: QuadValue, const N: usize> Sub for Vector<T, N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut out = self.0;
        for (o, r) in out.iter_mut().zip(rhs.0) {
            *o = *o - r;
        }
        Vector(out)
    }
}

impl<T: QuadValue, const N: usize> Mul<f64> for Vector<T, N> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Vector(self.0.map(|v| v * rhs))
    }
}

impl<T: QuadValue, const N: usize> QuadValue for Vector<T, N> {
    fn zero() -> Self {
        Vector([T::zero(); N])
    }
    fn magnitude(&self) -> f64 {
        self.0.iter().map(QuadValue::magnitude).fold(0.0, f64::max)
    }
}

// Kronrod 15-point nodes (positive half, descending) and weights; the
// embedded Gauss 7-point rule uses the odd-indexed nodes.
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
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Integral<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Tolerances and work limits.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-12, rel: 1e-6, max_intervals: 2000 }
    }
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self { rel, ..Self::default() }
    }
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<T: QuadValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kron = kron + pair * w;
        if j % 2 == 1 {
            gauss = gauss + pair * WG[j / 2];
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).magnitude();
    (value, error)
}

/// Integrates `f` over `[a, b]`, splitting first at the given interior
/// breakpoints (points outside the open interval are ignored).
pub fn integrate<T, F>(mut f: F, a: f64, b: f64, breakpoints: &[f64], tol: Tolerance) -> Integral<T>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let mut edges = vec![a];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(b);

    let mut heap = BinaryHeap::new();
    let mut total = T::zero();
    let mut total_err = 0.0;
    let mut evaluations = 0;
    for w in edges.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, error) = kronrod(&mut f, w[0], w[1]);
        evaluations += 15;
        total = total + value;
        total_err += error;
        heap.push(Segment { a: w[0], b: w[1], value, error });
    }

    let mut converged = false;
    while heap.len() < tol.max_intervals {
        if total_err <= tol.abs.max(tol.rel * total.magnitude()) {
            converged = true;
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval cannot be split further in f64
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod(&mut f, worst.a, mid);
        let (v2, e2) = kronrod(&mut f, mid, worst.b);
        evaluations += 30;
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
    }
    if !converged && total_err <= tol.abs.max(tol.rel * total.magnitude()) {
        converged = true;
    }
    // re-sum to shed accumulated update rounding
    let (value, error) = heap
        .iter()
        .fold((T::zero(), 0.0), |(v, e), s| (v + s.value, e + s.error));
    Integral { value, error, evaluations, converged }
}

/// Result of [`integrate_tail`].
#[derive(Debug, Clone, Copy)]
pub struct Tail<T> {
    pub value: T,
    /// Estimated magnitude of the neglected remainder beyond `upper_limit`.
    pub bound: f64,
    pub upper_limit: f64,
    pub evaluations: usize,
}

/// Integrates `f` from `start` towards infinity in chunks of doubling length,
/// stopping once the integrand magnitude drops below `cutoff * peak`, where
/// `peak` is the largest magnitude seen (seeded with `initial_peak`). The
/// remainder is extrapolated as an exponential tail and added; its size is
/// reported as `bound`. Returns `Err(bound)` if `max_limit` is reached first.
pub fn integrate_tail<T, F>(
    mut f: F,
    start: f64,
    first_len: f64,
    initial_peak: f64,
    cutoff: f64,
    max_limit: f64,
    tol: Tolerance,
) -> Result<Tail<T>, f64>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    let mut a = start;
    let mut len = first_len;
    let mut value = T::zero();
    let mut evaluations = 0;
    let mut peak = initial_peak.max(f(a).magnitude());
    loop {
        let b = a + len;
        let chunk = integrate(&mut f, a, b, &[], tol);
        value = value + chunk.value;
        evaluations += chunk.evaluations + 2;
        let fb = f(b);
        let fm = f(b - 0.5 * len).magnitude();
        let fb_mag = fb.magnitude();
        peak = peak.max(fm).max(fb_mag);
        if fb_mag <= cutoff * peak && fm <= cutoff * peak {
            let (extra, bound) = if fb_mag == 0.0 {
                (T::zero(), 0.0)
            } else if fm > fb_mag {
                let decay = (fm / fb_mag).ln() / (0.5 * len);
                (fb * (1.0 / decay), fb_mag / decay)
            } else {
                (T::zero(), fb_mag * len)
            };
            return Ok(Tail { value: value + extra, bound, upper_limit: b, evaluations });
        }
        if b >= max_limit {
            return Err(fb_mag.max(fm) * b);
        }
        a = b;
        len *= 2.0;
    }
}
