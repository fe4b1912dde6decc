//! Symmetric tridiagonal eigenproblems.
//!
//! `lowest_eigenpairs` uses Sturm-sequence bisection for the eigenvalues and
//! inverse iteration for the vectors, which is O(n) per pair. `full_eigen`
//! is the implicit QL algorithm and serves as the dense reference.

use crate::error::{Error, Result};

/// Real symmetric tridiagonal matrix: `diag` has n entries, `off` has n−1.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::Domain(format!(
                "tridiagonal shape mismatch: {} diagonal, {} off-diagonal entries",
                diag.len(),
                off.len()
            )));
        }
        Ok(Self { diag, off })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    fn scale(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let tiny = f64::MIN_POSITIVE / f64::EPSILON;
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.dim() {
            let coupling = if i > 0 { self.off[i - 1] * self.off[i - 1] / q } else { 0.0 };
            q = self.diag[i] - x - coupling;
            if q == 0.0 {
                q = -tiny;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `index`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, index: usize) -> Result<f64> {
        if index >= self.dim() {
            return Err(Error::Domain(format!("eigenvalue index {index} >= dimension {}", self.dim())));
        }
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 4.0 * f64::EPSILON * self.scale();
        lo -= pad;
        hi += pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Lowest `k` eigenpairs, ascending, with orthonormal vectors whose
    /// largest-magnitude component is positive.
    pub fn lowest_eigenpairs(&self, k: usize) -> Result<Vec<EigenPair>> {
        let n = self.dim();
        if k == 0 || k > n {
            return Err(Error::Domain(format!("requested {k} eigenpairs of a {n}-dimensional matrix")));
        }
        let scale = self.scale();
        let cluster = 1e-7 * scale;
        let mut out: Vec<EigenPair> = Vec::with_capacity(k);
        for idx in 0..k {
            let value = self.eigenvalue(idx)?;
            let mut v = inverse_iteration(self, value, idx)?;
            // Gram-Schmidt against close neighbours; twice is enough in practice
            for _ in 0..2 {
                for prev in out.iter().rev().take_while(|p| value - p.value < cluster) {
                    let d = dot(&prev.vector, &v);
                    for (x, p) in v.iter_mut().zip(&prev.vector) {
                        *x -= d * p;
                    }
                }
                normalize(&mut v)?;
            }
            fix_sign(&mut v);
            out.push(EigenPair { value, vector: v });
        }
        Ok(out)
    }

    /// All eigenpairs by the implicit QL algorithm, ascending.
    pub fn full_eigen(&self) -> Result<Vec<EigenPair>> {
        let n = self.dim();
        let mut d = self.diag.clone();
        let mut e: Vec<f64> = self.off.clone();
        e.push(0.0);
        let mut z = vec![0.0; n * n]; // column-major: z[row + n*col]
        for i in 0..n {
            z[i + n * i] = 1.0;
        }
        for l in 0..n {
            let mut iter = 0;
            loop {
                let mut m = l;
                while m + 1 < n {
                    let dd = d[m].abs() + d[m + 1].abs();
                    if e[m].abs() <= f64::EPSILON * dd {
                        break;
                    }
                    m += 1;
                }
                if m == l {
                    break;
                }
                iter += 1;
                if iter > 60 {
                    return Err(Error::Numerical(format!("QL iteration did not converge for eigenvalue {l}")));
                }
                let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                let mut r = g.hypot(1.0);
                g = d[m] - d[l] + e[l] / (g + r.copysign(g));
                let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
                let mut i = m;
                let mut early = false;
                while i > l {
                    i -= 1;
                    let f = s * e[i];
                    let b = c * e[i];
                    r = f.hypot(g);
                    e[i + 1] = r;
                    if r == 0.0 {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        early = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    for row in 0..n {
                        let zi1 = z[row + n * (i + 1)];
                        let zi = z[row + n * i];
                        z[row + n * (i + 1)] = s * zi + c * zi1;
                        z[row + n * i] = c * zi - s * zi1;
                    }
                }
                if early {
                    continue;
                }
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        Ok(order
            .into_iter()
            .map(|col| {
                let mut v = z[n * col..n * (col + 1)].to_vec();
                fix_sign(&mut v);
                EigenPair { value: d[col], vector: v }
            })
            .collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> Result<()> {
    let norm = dot(v, v).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Numerical("inverse iteration produced a null vector".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(())
}

/// Makes the largest-magnitude component positive (first such on ties).
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// LU factors of T − σI with partial pivoting. Row i of U holds the
/// entries in columns i, i+1, i+2.
struct ShiftedLu {
    u: Vec<[f64; 3]>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn new(t: &SymTridiag, shift: f64) -> Self {
        let n = t.dim();
        let floor = f64::EPSILON * t.scale();
        let mut u = vec![[0.0; 3]; n];
        let mut mult = vec![0.0; n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let mut row = [t.diag[0] - shift, if n > 1 { t.off[0] } else { 0.0 }, 0.0];
        for i in 0..n - 1 {
            let below = t.off[i];
            let next = [t.diag[i + 1] - shift, if i + 2 < n { t.off[i + 1] } else { 0.0 }];
            if below.abs() > row[0].abs() {
                let m = row[0] / below;
                u[i] = [below, next[0], next[1]];
                mult[i] = m;
                swapped[i] = true;
                row = [row[1] - m * next[0], row[2] - m * next[1], 0.0];
            } else {
                if row[0] == 0.0 {
                    row[0] = floor;
                }
                let m = below / row[0];
                u[i] = row;
                mult[i] = m;
                row = [next[0] - m * row[1], next[1] - m * row[2], 0.0];
            }
        }
        if row[0] == 0.0 {
            row[0] = floor;
        }
        u[n - 1] = row;
        for r in u.iter_mut() {
            if r[0].abs() < floor {
                r[0] = floor.copysign(r[0]);
            }
        }
        Self { u, mult, swapped }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let (lo, hi) = (b[i], b[i + 1]);
                b[i] = hi;
                b[i + 1] = lo - self.mult[i] * hi;
            } else {
                b[i + 1] -= self.mult[i] * b[i];
            }
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            if i + 1 < n {
                acc -= self.u[i][1] * b[i + 1];
            }
            if i + 2 < n {
                acc -= self.u[i][2] * b[i + 2];
            }
            b[i] = acc / self.u[i][0];
        }
    }
}

fn inverse_iteration(t: &SymTridiag, value: f64, seed: usize) -> Result<Vec<f64>> {
    let n = t.dim();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let lu = ShiftedLu::new(t, value);
    // deterministic, non-degenerate start vector
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.5 * (((i * 7919 + seed * 104_729) % 1009) as f64 / 1009.0))
        .collect();
    normalize(&mut v)?;
    for _ in 0..3 {
        lu.solve(&mut v);
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical(format!("inverse iteration overflow at eigenvalue {value}")));
        }
        normalize(&mut v)?;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual(t: &SymTridiag, p: &EigenPair) -> f64 {
        let mut y = vec![0.0; t.dim()];
        t.matvec(&p.vector, &mut y);
        y.iter().zip(&p.vector).map(|(a, b)| (a - p.value * b).powi(2)).sum::<f64>().sqrt()
    }

    fn sample(n: usize, seed: u64) -> SymTridiag {
        // simple LCG keeps the fixture deterministic without an RNG dependency
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let diag = (0..n).map(|_| 4.0 * next()).collect();
        let off = (0..n - 1).map(|_| next()).collect();
        SymTridiag::new(diag, off).unwrap()
    }

    #[test]
    fn shape_checked() {
        assert!(SymTridiag::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(SymTridiag::new(vec![], vec![]).is_err());
    }

    #[test]
    fn two_by_two_closed_form() {
        let t = SymTridiag::new(vec![1.0, 3.0], vec![1.0]).unwrap();
        let pairs = t.lowest_eigenpairs(2).unwrap();
        assert!((pairs[0].value - (2.0 - 2f64.sqrt())).abs() < 1e-14);
        assert!((pairs[1].value - (2.0 + 2f64.sqrt())).abs() < 1e-14);
        assert_eq!(t.count_below(0.0), 0);
        assert_eq!(t.count_below(2.0), 1);
    }

    #[test]
    fn free_chain_spectrum() {
        // diag 2, off −1: λ_j = 2 − 2cos(jπ/(n+1))
        let n = 40;
        let t = SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap();
        for (j, p) in t.full_eigen().unwrap().iter().enumerate() {
            let exact = 2.0 - 2.0 * ((j + 1) as f64 * std::f64::consts::PI / (n + 1) as f64).cos();
            assert!((p.value - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn bisection_agrees_with_ql() {
        for seed in 0..5 {
            let t = sample(60, seed);
            let full = t.full_eigen().unwrap();
            let low = t.lowest_eigenpairs(20).unwrap();
            for (a, b) in low.iter().zip(&full) {
                assert!((a.value - b.value).abs() < 1e-12);
                assert!((dot(&a.vector, &b.vector).abs() - 1.0).abs() < 1e-9);
                assert!(residual(&t, a) < 1e-11);
                assert!(residual(&t, b) < 1e-11);
            }
        }
    }

    #[test]
    fn clustered_eigenvalues_stay_orthogonal() {
        // two nearly decoupled identical blocks give pairs split by ~1e-12
        let mut diag = vec![0.0, 1.0, 2.0, 3.0];
        diag.extend([0.0, 1.0, 2.0, 3.0]);
        let off = vec![0.3, 0.3, 0.3, 1e-12, 0.3, 0.3, 0.3];
        let t = SymTridiag::new(diag, off).unwrap();
        let pairs = t.lowest_eigenpairs(8).unwrap();
        for i in 0..8 {
            for j in 0..i {
                assert!(dot(&pairs[i].vector, &pairs[j].vector).abs() < 1e-10, "{i} {j}");
            }
            assert!(residual(&t, &pairs[i]) < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let t = sample(5, 3);
        assert!(t.lowest_eigenpairs(0).is_err());
        assert!(t.lowest_eigenpairs(6).is_err());
        assert!(t.eigenvalue(5).is_err());
    }

    proptest! {
        #[test]
        fn sturm_count_matches_ql(seed in 0u64..1000, n in 2usize..30, x in -3.0f64..3.0) {
            let t = sample(n, seed);
            let below = t.full_eigen().unwrap().iter().filter(|p| p.value < x).count();
            prop_assert_eq!(t.count_below(x), below);
        }

        #[test]
        fn lowest_pairs_are_orthonormal(seed in 0u64..1000, n in 2usize..40) {
            let t = sample(n, seed);
            let k = n.min(8);
            let pairs = t.lowest_eigenpairs(k).unwrap();
            for i in 0..k {
                prop_assert!((dot(&pairs[i].vector, &pairs[i].vector) - 1.0).abs() < 1e-12);
                for j in 0..i {
                    prop_assert!(dot(&pairs[i].vector, &pairs[j].vector).abs() < 1e-10);
                }
            }
        }
    }
}
