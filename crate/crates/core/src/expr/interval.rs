//! Closed real intervals with outward rounding.
//!
//! Additions, products, quotients and square roots are rounded outward only
//! when the floating-point result is inexact (detected with error-free
//! transformations), so exactly representable bounds stay exact. `exp`, `sin`
//! and `cos` are widened by one ulp on each side.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

pub(crate) fn next_up(x: f64) -> f64 {
    x.next_up()
}

pub(crate) fn next_down(x: f64) -> f64 {
    x.next_down()
}

/// `(rounded sum, exact error)` via TwoSum.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
pub(crate) fn add_down(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if s.is_finite() && e < 0.0 {
        next_down(s)
    } else {
        s
    }
}

#[inline]
pub(crate) fn add_up(a: f64, b: f64) -> f64 {
    let (s, e) = two_sum(a, b);
    if s.is_finite() && e > 0.0 {
        next_up(s)
    } else {
        s
    }
}

#[inline]
pub(crate) fn sub_down(a: f64, b: f64) -> f64 {
    add_down(a, -b)
}

#[inline]
pub(crate) fn sub_up(a: f64, b: f64) -> f64 {
    add_up(a, -b)
}

#[inline]
pub(crate) fn mul_down(a: f64, b: f64) -> f64 {
    let p = a * b;
    if !p.is_finite() {
        return p;
    }
    let e = a.mul_add(b, -p);
    if e < 0.0 {
        next_down(p)
    } else {
        p
    }
}

#[inline]
pub(crate) fn mul_up(a: f64, b: f64) -> f64 {
    let p = a * b;
    if !p.is_finite() {
        return p;
    }
    let e = a.mul_add(b, -p);
    if e > 0.0 {
        next_up(p)
    } else {
        p
    }
}

/// Sign of `a/b − fl(a/b)`.
#[inline]
fn div_err_sign(a: f64, b: f64, q: f64) -> f64 {
    // r = a − q·b exactly; true quotient = q + r/b.
    let r = (-q).mul_add(b, a);
    r * b.signum()
}

#[inline]
pub(crate) fn div_down(a: f64, b: f64) -> f64 {
    let q = a / b;
    if !q.is_finite() {
        return q;
    }
    if div_err_sign(a, b, q) < 0.0 {
        next_down(q)
    } else {
        q
    }
}

#[inline]
pub(crate) fn div_up(a: f64, b: f64) -> f64 {
    let q = a / b;
    if !q.is_finite() {
        return q;
    }
    if div_err_sign(a, b, q) > 0.0 {
        next_up(q)
    } else {
        q
    }
}

#[inline]
fn sqrt_down(x: f64) -> f64 {
    let r = x.sqrt();
    if r.mul_add(r, -x) > 0.0 {
        next_down(r).max(0.0)
    } else {
        r
    }
}

#[inline]
fn sqrt_up(x: f64) -> f64 {
    let r = x.sqrt();
    if r.mul_add(r, -x) < 0.0 {
        next_up(r)
    } else {
        r
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn add(&self, o: &Interval) -> Interval {
        Interval::new(add_down(self.lo, o.lo), add_up(self.hi, o.hi))
    }

    pub fn sub(&self, o: &Interval) -> Interval {
        Interval::new(sub_down(self.lo, o.hi), sub_up(self.hi, o.lo))
    }

    pub fn neg(&self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn mul(&self, o: &Interval) -> Interval {
        let pairs = [
            (self.lo, o.lo),
            (self.lo, o.hi),
            (self.hi, o.lo),
            (self.hi, o.hi),
        ];
        let lo = pairs
            .iter()
            .map(|&(a, b)| mul_down(a, b))
            .fold(f64::INFINITY, f64::min);
        let hi = pairs
            .iter()
            .map(|&(a, b)| mul_up(a, b))
            .fold(f64::NEG_INFINITY, f64::max);
        Interval::new(lo, hi)
    }

    /// `None` when the divisor contains zero.
    pub fn div(&self, o: &Interval) -> Option<Interval> {
        if o.contains(0.0) {
            return None;
        }
        let pairs = [
            (self.lo, o.lo),
            (self.lo, o.hi),
            (self.hi, o.lo),
            (self.hi, o.hi),
        ];
        let lo = pairs
            .iter()
            .map(|&(a, b)| div_down(a, b))
            .fold(f64::INFINITY, f64::min);
        let hi = pairs
            .iter()
            .map(|&(a, b)| div_up(a, b))
            .fold(f64::NEG_INFINITY, f64::max);
        Some(Interval::new(lo, hi))
    }

    /// `None` unless the whole interval is nonnegative.
    pub fn sqrt(&self) -> Option<Interval> {
        if self.lo < 0.0 {
            return None;
        }
        Some(Interval::new(sqrt_down(self.lo), sqrt_up(self.hi)))
    }

    pub fn exp(&self) -> Interval {
        let lo = self.lo.exp();
        let hi = self.hi.exp();
        Interval::new(next_down(lo).max(0.0), if hi.is_finite() { next_up(hi) } else { hi })
    }

    pub fn min(&self, o: &Interval) -> Interval {
        Interval::new(self.lo.min(o.lo), self.hi.min(o.hi))
    }

    pub fn max(&self, o: &Interval) -> Interval {
        Interval::new(self.lo.max(o.lo), self.hi.max(o.hi))
    }

    pub fn sin(&self) -> Interval {
        use std::f64::consts::{FRAC_PI_2, TAU};
        if !(self.width() < TAU) {
            return Interval::new(-1.0, 1.0);
        }
        let a = self.lo.sin();
        let b = self.hi.sin();
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        // Critical points at ±π/2 + 2kπ; a small slack keeps the test conservative.
        let slack = 1e-12 * (1.0 + self.lo.abs().max(self.hi.abs()));
        let k0 = ((self.lo - FRAC_PI_2) / TAU).floor() as i64 - 1;
        let k1 = ((self.hi - FRAC_PI_2) / TAU).ceil() as i64 + 1;
        for k in k0..=k1 {
            let peak = FRAC_PI_2 + TAU * k as f64;
            if peak >= self.lo - slack && peak <= self.hi + slack {
                hi = 1.0;
            }
            let trough = -FRAC_PI_2 + TAU * k as f64;
            if trough >= self.lo - slack && trough <= self.hi + slack {
                lo = -1.0;
            }
        }
        Interval::new(next_down(lo).max(-1.0), next_up(hi).min(1.0))
    }

    pub fn cos(&self) -> Interval {
        let shifted = Interval::new(
            add_down(self.lo, std::f64::consts::FRAC_PI_2),
            add_up(self.hi, std::f64::consts::FRAC_PI_2),
        );
        shifted.sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_operations_stay_exact() {
        let a = Interval::new(0.0, 32.0);
        let s = a.add(&a).add(&a);
        assert_eq!(s, Interval::new(0.0, 96.0));
        assert_eq!(s.div(&Interval::point(3.0)).unwrap(), Interval::new(0.0, 32.0));
        assert_eq!(Interval::new(-1.0, 2.0).mul(&Interval::new(-1.0, 2.0)), Interval::new(-2.0, 4.0));
    }

    #[test]
    fn inexact_operations_round_outward() {
        let third = Interval::point(1.0).div(&Interval::point(3.0)).unwrap();
        assert!(third.lo < third.hi);
        assert!(third.lo * 3.0 <= 1.0 && third.hi * 3.0 >= 1.0);
        let s = Interval::point(0.1).add(&Interval::point(0.2));
        assert!(s.contains(0.30000000000000004) && s.lo < s.hi);
    }

    #[test]
    fn partial_functions() {
        assert!(Interval::new(-2.0, -1.0).sqrt().is_none());
        assert!(Interval::new(-1.0, 4.0).sqrt().is_none());
        assert_eq!(Interval::new(4.0, 9.0).sqrt().unwrap(), Interval::new(2.0, 3.0));
        assert!(Interval::new(1.0, 2.0).div(&Interval::new(-1.0, 1.0)).is_none());
    }

    #[test]
    fn sine_covers_extrema() {
        let s = Interval::new(0.0, 2.0).sin();
        assert!(s.hi >= 1.0 - 1e-15 && s.hi <= 1.0);
        let t = Interval::new(0.1, 0.2).sin();
        assert!(t.contains(0.15f64.sin()) && t.hi < 0.5);
        assert_eq!(Interval::new(0.0, 10.0).sin(), Interval::new(-1.0, 1.0));
    }
}
