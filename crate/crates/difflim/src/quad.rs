//! Shared numerical kernels: adaptive Simpson quadrature, bracketed scalar
//! maximization, interval unions, and a modified Bessel evaluation used by
//! the periodic scenario.

const MAX_DEPTH: u32 = 30;

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth >= MAX_DEPTH || (b - a).abs() < 1e-14 * (1.0 + m.abs()) {
        // Richardson extrapolation of the two half-interval estimates.
        left + right + delta / 15.0
    } else {
        let half_tol = 0.5 * tol;
        adaptive_step(f, a, m, fa, flm, fm, left, half_tol, depth + 1)
            + adaptive_step(f, m, b, fm, frm, fb, right, half_tol, depth + 1)
    }
}

/// Integrate `f` over `[a, b]` (signed; `a > b` is allowed) with an absolute
/// error target `tol` via adaptive Simpson bisection.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -adaptive_simpson(f, b, a, tol);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    adaptive_step(f, a, b, fa, fm, fb, whole, tol.max(1e-300), 0)
}

/// Golden-section maximization of `f` on `[a, b]`. Returns `(x*, f(x*))`.
///
/// The bracket is assumed to contain a single local maximum; callers supply
/// grid-resolved brackets so this holds in practice.
pub fn golden_max<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9;
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-12 * (1.0 + lo.abs() + hi.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1);
        }
    }
    let mut best = (x1, f1);
    for (x, v) in [(x2, f2), (a, f(a)), (b, f(b))] {
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

/// Modified Bessel function of the first kind, order zero, by power series.
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// A finite union of closed intervals on the real line, kept sorted and
/// non-overlapping.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    /// Normalizes the given endpoints: swaps reversed pairs, drops empty or
    /// non-finite pieces, sorts, and merges overlaps.
    pub fn new(pieces: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut ivals: Vec<(f64, f64)> = pieces
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .filter(|(a, b)| a.is_finite() && b.is_finite() && a <= b)
            .collect();
        ivals.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(ivals.len());
        for (a, b) in ivals {
            match merged.last_mut() {
                Some((_, hi)) if a <= *hi => {
                    if b > *hi {
                        *hi = b;
                    }
                }
                _ => merged.push((a, b)),
            }
        }
        Self { intervals: merged }
    }

    pub fn interval(a: f64, b: f64) -> Self {
        Self::new([(a, b)])
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn pieces(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Total Lebesgue measure.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|&(a, _)| a <= x);
        idx > 0 && x <= self.intervals[idx - 1].1
    }

    /// Smallest `N` with the union contained in `[-N, N]`, or 0 when empty.
    pub fn enclosing_halfwidth(&self) -> f64 {
        self.intervals
            .iter()
            .map(|(a, b)| a.abs().max(b.abs()))
            .fold(0.0, f64::max)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.intervals.iter().all(|&(a, b)| {
            other
                .intervals
                .iter()
                .any(|&(c, d)| c <= a && b <= d)
        })
    }
}
