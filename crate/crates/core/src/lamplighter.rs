//! Exact Green function of the Diestel–Leader type lamplighter walk
//! ([`WalkSpec::wreath_walk`]).
//!
//! The projection to `Z` is a lazy nearest-neighbour walk with steps `+1`,
//! `-1`, `0` of probabilities `A = (1-gamma) alpha`, `B = (1-gamma)(1-alpha)`,
//! `C = gamma`. Given the projected path with range `[a, b]`, every site of
//! `[a, b-1]` has been reset uniformly at its last crossing, the site `b` has
//! been reset iff a lamp step happened there, and all other lamps are
//! untouched. Hence
//!
//! `G(e, (l, m)) = sum_{a <= 0 <= b} E_yes(a,b,m) q^{-(b-a+1)} [supp l in [a,b]]
//!               + E_no(a,b,m) q^{-(b-a)} [supp l in [a,b-1]]`
//!
//! where `E(a,b,m)` sums the projected paths `0 -> m` with range exactly
//! `[a, b]` (split by whether they hold at `b`). Exact ranges come from
//! interval Green functions by inclusion–exclusion. Ranges longer than `span`
//! are dropped; they carry total weight at most `q^{-span} G_Z(0,0)`.

use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::walk::WalkSpec;

#[derive(Clone, Debug)]
pub struct RangeGreen {
    pub q: u32,
    pub alpha: f64,
    pub gamma: f64,
    pub span: usize,
    /// Interval Green rows `G_[lo,hi](0, .)`, plain and without holding at `hi`,
    /// indexed by `(-lo, hi)`.
    plain: Vec<Vec<Vec<f64>>>,
    no_hold: Vec<Vec<Vec<f64>>>,
    tail: f64,
}

impl RangeGreen {
    /// Recognises walks built by [`WalkSpec::wreath_walk`].
    pub fn for_walk(walk: &WalkSpec, span: usize) -> Option<Self> {
        let rest = walk.name.strip_prefix("wreath-walk:")?;
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return None;
        }
        let q: u32 = parts[0].trim().parse().ok()?;
        let alpha: f64 = parts[1].trim().parse().ok()?;
        let gamma: f64 = parts[2].trim().parse().ok()?;
        let reference = WalkSpec::wreath_walk(q, alpha, gamma).ok()?;
        if reference.steps != walk.steps {
            return None;
        }
        Some(Self::new(q, alpha, gamma, span))
    }

    pub fn new(q: u32, alpha: f64, gamma: f64, span: usize) -> Self {
        let a = (1.0 - gamma) * alpha;
        let b = (1.0 - gamma) * (1.0 - alpha);
        let c = gamma;
        let mut plain = Vec::with_capacity(span + 1);
        let mut no_hold = Vec::with_capacity(span + 1);
        for neg_lo in 0..=span {
            let mut row_p = Vec::new();
            let mut row_n = Vec::new();
            for hi in 0..=(span - neg_lo) {
                row_p.push(interval_row(neg_lo, hi, a, b, c, false));
                row_n.push(interval_row(neg_lo, hi, a, b, c, true));
            }
            plain.push(row_p);
            no_hold.push(row_n);
        }
        let gz = 1.0 / ((1.0 - c).powi(2) - 4.0 * a * b).sqrt();
        let tail = (q as f64).powi(-(span as i32)) * gz;
        RangeGreen { q, alpha, gamma, span, plain, no_hold, tail }
    }

    /// `G_[lo,hi](0, m)`, zero when the interval is empty or misses `0` or `m`.
    fn interval(&self, lo: i64, hi: i64, m: i64, hold_free_top: bool) -> f64 {
        if lo > 0 || hi < 0 || m < lo || m > hi || (hi - lo) as usize > self.span {
            return 0.0;
        }
        let table = if hold_free_top { &self.no_hold } else { &self.plain };
        table[(-lo) as usize][hi as usize][(m - lo) as usize]
    }

    /// `(E_yes, E_no)` for the exact range `[a, b]`, and the absolute sum of
    /// the inclusion–exclusion terms (for the rounding bound).
    fn exact_range(&self, a: i64, b: i64, m: i64) -> (f64, f64, f64) {
        let t = [
            self.interval(a, b, m, false),
            self.interval(a + 1, b, m, false),
            self.interval(a, b - 1, m, false),
            self.interval(a + 1, b - 1, m, false),
            self.interval(a, b, m, true),
            self.interval(a + 1, b, m, true),
        ];
        let all = t[0] - t[1] - t[2] + t[3];
        let no = t[4] - t[5] - t[2] + t[3];
        (all - no, no, t.iter().sum())
    }

    /// `G(e, x)` and an absolute error bound.
    pub fn green(&self, x: &GroupElement) -> Result<(f64, f64)> {
        let GroupElement::Wreath { lamps, pos } = x else {
            return Err(Error::Representation(format!("{x} is not a lamplighter element")));
        };
        let m = *pos;
        let (lmin, lmax) = match (lamps.first(), lamps.last()) {
            (Some(f), Some(l)) => (f.0, l.0),
            _ => (i64::MAX, i64::MIN),
        };
        let a_max = 0.min(m).min(lmin);
        let b_min = 0.max(m);
        let span = self.span as i64;
        let q = self.q as f64;
        let mut total = 0.0;
        let mut magnitude = 0.0;
        let mut a = a_max;
        while a >= -span {
            let mut b = b_min.max(if lamps.is_empty() { 0 } else { lmax });
            while b - a <= span {
                let (yes, no, abs) = self.exact_range(a, b, m);
                let size = (b - a) as i32;
                magnitude += abs * q.powi(-size);
                total += yes * q.powi(-(size + 1));
                if lamps.is_empty() || lmax < b {
                    total += no * q.powi(-size);
                }
                b += 1;
            }
            a -= 1;
        }
        if a_max < -span || total <= 0.0 {
            return Err(Error::Range(format!("{x} needs a range longer than {span}")));
        }
        Ok((total, self.tail + 1e-14 * magnitude))
    }
}

/// Row `G(0, .)` of the lazy walk killed outside `[-neg_lo, hi]`, optionally
/// without holding at `hi`. Solves `(I - P^T) y = delta_0` by the Thomas
/// algorithm.
fn interval_row(neg_lo: usize, hi: usize, a: f64, b: f64, c: f64, hold_free_top: bool) -> Vec<f64> {
    let n = neg_lo + hi + 1;
    // y_m (1 - C_m) - A y_{m-1} - B y_{m+1} = delta_{m,0}
    let diag: Vec<f64> = (0..n).map(|i| if hold_free_top && i == n - 1 { 1.0 } else { 1.0 - c }).collect();
    let lower = -a;
    let upper = -b;
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    for i in 0..n {
        let rhs = if i == neg_lo { 1.0 } else { 0.0 };
        if i == 0 {
            cp[i] = upper / diag[i];
            dp[i] = rhs / diag[i];
        } else {
            let den = diag[i] - lower * cp[i - 1];
            cp[i] = upper / den;
            dp[i] = (rhs - lower * dp[i - 1]) / den;
        }
    }
    let mut y = vec![0.0; n];
    y[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        y[i] = dp[i] - cp[i] * y[i + 1];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelOptions, KernelTable};

    #[test]
    fn matches_ball_solve() {
        let walk = WalkSpec::wreath_walk(2, 0.8, 0.2).unwrap();
        let rg = RangeGreen::for_walk(&walk, 60).unwrap();
        let t = KernelTable::build_ball(&walk, 4, &KernelOptions { margin: 10, ..Default::default() }).unwrap();
        for g in t.elements() {
            let en = t.entry(g).unwrap();
            let (v, err) = rg.green(g).unwrap();
            assert!(err < 1e-12);
            assert!((v - en.value).abs() <= en.error() + 1e-9, "{g}: {v} vs {en:?}");
        }
    }

    #[test]
    fn ball_values_increase_to_exact() {
        // killed Green functions are lower bounds increasing in the radius
        let walk = WalkSpec::wreath_walk(3, 0.6, 0.3).unwrap();
        let rg = RangeGreen::for_walk(&walk, 60).unwrap();
        let e = walk.group.identity();
        let (v, _) = rg.green(&e).unwrap();
        let mut last = 0.0;
        for margin in [6, 9, 12] {
            let t = KernelTable::build_ball(&walk, 1, &KernelOptions { margin, ..Default::default() }).unwrap();
            let b = t.entry(&e).unwrap().value;
            assert!(b > last && b < v);
            last = b;
        }
        assert!(v - last < 1e-4);
    }

    #[test]
    fn other_walks_not_recognised() {
        assert!(RangeGreen::for_walk(&WalkSpec::srw_free(2), 10).is_none());
    }
}
