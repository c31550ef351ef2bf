//! Globally adaptive Gauss-Kronrod (10/21) quadrature for complex-valued
//! integrands, plus an iterated variant for boxes.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;
use rayon::prelude::*;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Evaluations of one 21-point rule application.
pub const RULE_POINTS: usize = 21;

/// Applies the Kronrod rule on `[a, b]`; returns (kronrod, |kronrod - gauss|).
pub fn gk21<F>(f: &mut F, a: f64, b: f64) -> (Complex64, f64)
where
    F: FnMut(f64) -> Complex64,
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    for j in 0..10 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    let kronrod = kronrod * h;
    let gauss = gauss * h;
    (kronrod, (kronrod - gauss).norm())
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    // largest error first; ties broken by position so the order is total
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: Complex64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Adaptive integration of `f` over `[a, b]`, starting from `initial`
/// equal pieces and bisecting the worst piece until the summed nested-rule
/// discrepancy is below `tol` or `max_evals` is spent.
pub fn adaptive<F>(mut f: F, a: f64, b: f64, initial: usize, tol: f64, max_evals: usize) -> QuadResult
where
    F: FnMut(f64) -> Complex64,
{
    let initial = initial.max(1);
    let mut heap = BinaryHeap::with_capacity(initial * 2);
    let mut evaluations = 0;
    for i in 0..initial {
        let lo = a + (b - a) * i as f64 / initial as f64;
        let hi = if i + 1 == initial {
            b
        } else {
            a + (b - a) * (i + 1) as f64 / initial as f64
        };
        let (value, error) = gk21(&mut f, lo, hi);
        evaluations += RULE_POINTS;
        heap.push(Piece { a: lo, b: hi, value, error });
    }
    let total_error = |h: &BinaryHeap<Piece>| h.iter().map(|p| p.error).sum::<f64>();
    let mut error = total_error(&heap);
    while error > tol && evaluations + 2 * RULE_POINTS <= max_evals {
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // cannot split further in floating point
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk21(&mut f, worst.a, mid);
        let (v2, e2) = gk21(&mut f, mid, worst.b);
        evaluations += 2 * RULE_POINTS;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
        error = total_error(&heap);
    }
    // sum in position order so the result does not depend on heap layout
    let mut pieces = heap.into_vec();
    pieces.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut re = crate::ddouble::CompensatedSum::default();
    let mut im = crate::ddouble::CompensatedSum::default();
    for p in &pieces {
        re.add(p.value.re);
        im.add(p.value.im);
    }
    QuadResult {
        value: Complex64::new(re.value(), im.value()),
        error,
        evaluations,
        converged: error <= tol,
    }
}

/// Iterated adaptive integration over a box: the innermost axis is the last
/// one. `initial[axis]` sets the starting subdivision per axis. The reported
/// error adds the outer discrepancy to the weighted inner errors.
///
/// The initial pieces of the outermost axis are integrated in parallel, each
/// with a share of `tol` and `max_evals` proportional to its length, and
/// combined in position order.
pub fn iterated<F>(
    f: &F,
    lower: &[f64],
    upper: &[f64],
    initial: &[usize],
    tol: f64,
    max_evals: usize,
) -> QuadResult
where
    F: Fn(&[f64]) -> Complex64 + Sync,
{
    let n = lower.len();
    let pieces = initial[0].max(1);
    if n == 1 || pieces == 1 {
        let mut point = vec![0.0; n];
        return iterated_axis(f, lower, upper, initial, tol, max_evals, 0, &mut point);
    }
    let (a, b) = (lower[0], upper[0]);
    let mut sub_initial = initial.to_vec();
    sub_initial[0] = 1;
    let parts: Vec<QuadResult> = (0..pieces)
        .into_par_iter()
        .map(|i| {
            let lo = a + (b - a) * i as f64 / pieces as f64;
            let hi = if i + 1 == pieces {
                b
            } else {
                a + (b - a) * (i + 1) as f64 / pieces as f64
            };
            let mut l = lower.to_vec();
            let mut u = upper.to_vec();
            l[0] = lo;
            u[0] = hi;
            let mut point = vec![0.0; n];
            iterated_axis(f, &l, &u, &sub_initial, tol / pieces as f64, (max_evals / pieces).max(1), 0, &mut point)
        })
        .collect();
    let mut re = crate::ddouble::CompensatedSum::default();
    let mut im = crate::ddouble::CompensatedSum::default();
    let mut error = 0.0;
    let mut evaluations = 0;
    let mut converged = true;
    for p in &parts {
        re.add(p.value.re);
        im.add(p.value.im);
        error += p.error;
        evaluations += p.evaluations;
        converged &= p.converged;
    }
    QuadResult {
        value: Complex64::new(re.value(), im.value()),
        error,
        evaluations,
        converged: converged && error <= tol,
    }
}

#[allow(clippy::too_many_arguments)]
fn iterated_axis<F>(
    f: &F,
    lower: &[f64],
    upper: &[f64],
    initial: &[usize],
    tol: f64,
    max_evals: usize,
    axis: usize,
    point: &mut [f64],
) -> QuadResult
where
    F: Fn(&[f64]) -> Complex64,
{
    let n = lower.len();
    if axis + 1 == n {
        let mut p = point.to_vec();
        return adaptive(
            |x| {
                p[axis] = x;
                f(&p)
            },
            lower[axis],
            upper[axis],
            initial[axis],
            tol,
            max_evals,
        );
    }
    // inner integrals get a tighter tolerance, scaled by the outer length
    let outer_len = upper[axis] - lower[axis];
    let inner_tol = 0.1 * tol / outer_len;
    let mut inner_error_mass = 0.0;
    let mut evaluations = 0;
    let mut converged = true;
    // each level may refine to four times its initial subdivision
    let outer_expected = 4 * RULE_POINTS * initial[axis].max(1);
    let inner_budget = (max_evals / outer_expected).max(4 * RULE_POINTS * initial[axis + 1].max(1));
    let mut pt = point.to_vec();
    let outer = adaptive(
        |x| {
            pt[axis] = x;
            let r = iterated_axis(f, lower, upper, initial, inner_tol, inner_budget, axis + 1, &mut pt);
            evaluations += r.evaluations;
            converged &= r.converged;
            inner_error_mass = f64::max(inner_error_mass, r.error);
            r.value
        },
        lower[axis],
        upper[axis],
        initial[axis],
        0.9 * tol,
        (max_evals / inner_budget).max(outer_expected),
    );
    let error = outer.error + inner_error_mass * outer_len;
    QuadResult {
        value: outer.value,
        error,
        evaluations,
        converged: converged && outer.converged && error <= tol,
    }
}
