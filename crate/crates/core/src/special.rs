//! Bessel functions of the first kind for real order and argument.
//!
//! Small arguments use the ascending series summed in double-double
//! arithmetic; large arguments use the Hankel asymptotic expansion.

use statrs::function::gamma::gamma;

use crate::error::{domain, Result};

/// Switchover between the ascending series and the Hankel expansion.
pub const SERIES_LIMIT: f64 = 25.0;

/// Largest |order| accepted by [`bessel_j`].
pub const MAX_ORDER: f64 = 4.0;

/// Unevaluated sum hi + lo with |lo| ≤ ulp(hi)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {

    fn from_f64(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Self { hi: s, lo: err }
    }

    fn quick_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Self { hi: s, lo: b - (s - a) }
    }

    fn two_prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Self { hi: p, lo: a.mul_add(b, -p) }
    }

    fn add(self, o: Self) -> Self {
        let s = Self::two_sum(self.hi, o.hi);
        let t = Self::two_sum(self.lo, o.lo);
        let v = Self::quick_two_sum(s.hi, s.lo + t.hi);
        Self::quick_two_sum(v.hi, v.lo + t.lo)
    }

    fn mul(self, o: Self) -> Self {
        let p = Self::two_prod(self.hi, o.hi);
        Self::quick_two_sum(p.hi, p.lo + (self.hi * o.lo + self.lo * o.hi))
    }

    fn div(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        let r = self.add(o.mul(Self::from_f64(q1)).neg());
        let q2 = r.hi / o.hi;
        let r = r.add(o.mul(Self::from_f64(q2)).neg());
        let q3 = r.hi / o.hi;
        Self::quick_two_sum(q1, q2).add(Self::from_f64(q3))
    }

    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

fn is_negative_integer(v: f64) -> bool {
    v < 0.0 && v == v.round()
}

/// J_ν(x) for x ≥ 0 and |ν| ≤ [`MAX_ORDER`], ν not a negative integer.
pub fn bessel_j(order: f64, x: f64) -> Result<f64> {
    if !order.is_finite() || order.abs() > MAX_ORDER {
        return domain(format!("Bessel order {order} outside [-{MAX_ORDER}, {MAX_ORDER}]"));
    }
    if is_negative_integer(order) {
        return domain(format!("Bessel order {order} is a negative integer"));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return domain(format!("Bessel argument {x} must be finite and >= 0"));
    }
    if x == 0.0 {
        return if order == 0.0 {
            Ok(1.0)
        } else if order > 0.0 {
            Ok(0.0)
        } else {
            domain(format!("J_{order}(0) is unbounded"))
        };
    }
    if x < SERIES_LIMIT {
        Ok(ascending_series(order, x))
    } else {
        Ok(hankel_asymptotic(order, x))
    }
}

/// (x/2)^ν / Γ(ν+1) · Σ_k (−x²/4)^k / (k! (ν+1)_k)
fn ascending_series(order: f64, x: f64) -> f64 {
    let q = DoubleDouble::two_prod(x, x).mul(DoubleDouble::from_f64(0.25)).neg();
    let mut term = DoubleDouble::from_f64(1.0);
    let mut sum = term;
    for k in 1..400 {
        let kk = k as f64;
        let denom = DoubleDouble::two_prod(kk, 1.0).mul(DoubleDouble::two_sum(kk, order));
        term = term.mul(q).div(denom);
        sum = sum.add(term);
        if term.hi.abs() < 1e-34 * sum.hi.abs().max(1e-300) && kk > x {
            break;
        }
    }
    let prefactor = (0.5 * x).powf(order) / gamma(order + 1.0);
    sum.to_f64() * prefactor
}

/// J_ν(x) ≈ √(2/(πx)) [P cos χ − Q sin χ], χ = x − (ν/2 + 1/4)π.
fn hankel_asymptotic(order: f64, x: f64) -> f64 {
    let mu = 4.0 * order * order;
    let inv8x = 1.0 / (8.0 * x);
    let mut p = 1.0;
    let mut q = 0.0;
    // a_k = Π_{j=1..k} (μ − (2j−1)²) / (k! (8x)^k), alternating into P and Q
    let mut a: f64 = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        a *= (mu - odd * odd) * inv8x / k as f64;
        if a.abs() > prev || a == 0.0 {
            break;
        }
        prev = a.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            q += sign * a;
        } else {
            p += sign * a;
        }
        if a.abs() < 1e-18 {
            break;
        }
    }
    let chi = x - (0.5 * order + 0.25) * std::f64::consts::PI;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
