//! Forward-mode differentiation: a scalar trait shared by `f64`, fixed-width
//! dual numbers and univariate Taylor jets, plus a Jacobian driver.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::DMatrix;

/// Number of simultaneous directional derivatives carried by [`Dual`].
pub const DUAL_WIDTH: usize = 8;

/// Scalar field used by every numeric kernel that needs derivatives.
pub trait Real:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(x: f64) -> Self;
    /// Value part, dropping all derivative information.
    fn re(&self) -> f64;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn scale(self, c: f64) -> Self {
        self * Self::cst(c)
    }
}

impl Real for f64 {
    #[inline]
    fn cst(x: f64) -> Self {
        x
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// Dual number with up to [`DUAL_WIDTH`] infinitesimal directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: [f64; DUAL_WIDTH],
}

impl Dual {
    pub fn constant(re: f64) -> Self {
        Dual { re, du: [0.0; DUAL_WIDTH] }
    }

    /// Independent variable seeded along direction `slot`.
    pub fn variable(re: f64, slot: usize) -> Self {
        let mut d = Dual::constant(re);
        d.du[slot] = 1.0;
        d
    }

    #[inline]
    fn chain(self, f: f64, df: f64) -> Self {
        let mut du = self.du;
        for v in du.iter_mut() {
            *v *= df;
        }
        Dual { re: f, du }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(mut self, rhs: Dual) -> Dual {
        self += rhs;
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(mut self, rhs: Dual) -> Dual {
        self -= rhs;
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, rhs: Dual) -> Dual {
        let mut du = [0.0; DUAL_WIDTH];
        for (k, v) in du.iter_mut().enumerate() {
            *v = self.du[k] * rhs.re + self.re * rhs.du[k];
        }
        Dual { re: self.re * rhs.re, du }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.re;
        let q = self.re * inv;
        let mut du = [0.0; DUAL_WIDTH];
        for (k, v) in du.iter_mut().enumerate() {
            *v = (self.du[k] - q * rhs.du[k]) * inv;
        }
        Dual { re: q, du }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        self.chain(-self.re, -1.0)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, rhs: Dual) {
        self.re += rhs.re;
        for k in 0..DUAL_WIDTH {
            self.du[k] += rhs.du[k];
        }
    }
}

impl SubAssign for Dual {
    #[inline]
    fn sub_assign(&mut self, rhs: Dual) {
        self.re -= rhs.re;
        for k in 0..DUAL_WIDTH {
            self.du[k] -= rhs.du[k];
        }
    }
}

impl MulAssign for Dual {
    #[inline]
    fn mul_assign(&mut self, rhs: Dual) {
        *self = *self * rhs;
    }
}

impl Real for Dual {
    #[inline]
    fn cst(x: f64) -> Self {
        Dual::constant(x)
    }
    #[inline]
    fn re(&self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    #[inline]
    fn scale(self, c: f64) -> Self {
        self.chain(self.re * c, c)
    }
}

/// Truncated univariate Taylor series: `c[k]` is the k-th Taylor coefficient,
/// i.e. f^(k)(x0)/k!.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet<const N: usize> {
    pub c: [f64; N],
}

impl<const N: usize> Jet<N> {
    pub fn variable(x0: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = x0;
        if N > 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    /// k-th derivative at the expansion point.
    pub fn derivative(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        self.c[k] * fact
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut c = [0.0; N];
        for i in 0..N {
            for j in 0..N - i {
                c[i + j] += self.c[i] * rhs.c[j];
            }
        }
        Jet { c }
    }
}

impl<const N: usize> Div for Jet<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let mut q = [0.0; N];
        for k in 0..N {
            let mut s = self.c[k];
            for j in 1..=k {
                s -= rhs.c[j] * q[k - j];
            }
            q[k] = s / rhs.c[0];
        }
        Jet { c: q }
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(mut self) -> Self {
        for v in self.c.iter_mut() {
            *v = -*v;
        }
        self
    }
}

impl<const N: usize> AddAssign for Jet<N> {
    fn add_assign(&mut self, rhs: Self) {
        for k in 0..N {
            self.c[k] += rhs.c[k];
        }
    }
}

impl<const N: usize> SubAssign for Jet<N> {
    fn sub_assign(&mut self, rhs: Self) {
        for k in 0..N {
            self.c[k] -= rhs.c[k];
        }
    }
}

impl<const N: usize> MulAssign for Jet<N> {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const N: usize> Real for Jet<N> {
    fn cst(x: f64) -> Self {
        let mut c = [0.0; N];
        c[0] = x;
        Jet { c }
    }
    fn re(&self) -> f64 {
        self.c[0]
    }
    fn exp(self) -> Self {
        // e' = e * x'  =>  k e_k = sum_{j=1..k} j x_j e_{k-j}
        let mut e = [0.0; N];
        e[0] = self.c[0].exp();
        for k in 1..N {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * self.c[j] * e[k - j];
            }
            e[k] = s / k as f64;
        }
        Jet { c: e }
    }
    fn sqrt(self) -> Self {
        // s*s = x
        let mut s = [0.0; N];
        s[0] = self.c[0].sqrt();
        for k in 1..N {
            let mut acc = self.c[k];
            for j in 1..k {
                acc -= s[j] * s[k - j];
            }
            s[k] = acc / (2.0 * s[0]);
        }
        Jet { c: s }
    }
}

/// Jacobian of `f: R^k -> R^l` at `x` by forward-mode duals. Directions are
/// processed in chunks of [`DUAL_WIDTH`], so any `k` is supported.
pub fn jacobian<F>(mut f: F, x: &[f64]) -> DMatrix<f64>
where
    F: FnMut(&[Dual]) -> Vec<Dual>,
{
    let k = x.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut rows;
    let mut start = 0;
    loop {
        let end = (start + DUAL_WIDTH).min(k);
        let input: Vec<Dual> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i >= start && i < end {
                    Dual::variable(v, i - start)
                } else {
                    Dual::constant(v)
                }
            })
            .collect();
        let out = f(&input);
        rows = out.len();
        for i in start..end {
            cols.push(out.iter().map(|o| o.du[i - start]).collect());
        }
        if end >= k {
            break;
        }
        start = end;
    }
    DMatrix::from_fn(rows, k, |r, c| cols[c][r])
}

/// Value and Jacobian in one pass (requires `x.len() <= DUAL_WIDTH`).
pub fn value_and_jacobian<F>(mut f: F, x: &[f64]) -> (Vec<f64>, DMatrix<f64>)
where
    F: FnMut(&[Dual]) -> Vec<Dual>,
{
    assert!(x.len() <= DUAL_WIDTH, "value_and_jacobian: too many inputs");
    let input: Vec<Dual> = x.iter().enumerate().map(|(i, &v)| Dual::variable(v, i)).collect();
    let out = f(&input);
    let vals = out.iter().map(|o| o.re).collect();
    let jac = DMatrix::from_fn(out.len(), x.len(), |r, c| out[r].du[c]);
    (vals, jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_of_shifted_exponential() {
        let j = jacobian(|a| vec![-(a[0] * (-a[0]).exp())], &[0.0]);
        assert!((j[(0, 0)] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobian_identity_map() {
        let j = jacobian(|a| a.to_vec(), &[0.3, -1.0, 2.0]);
        assert_eq!(j, DMatrix::identity(3, 3));
    }

    #[test]
    fn jacobian_five_dim_component_map() {
        let f = |t: &[Dual]| vec![(-t[1]).exp() * (t[0] - Dual::cst(1.0)), (t[1].scale(2.0)).exp()];
        let j = jacobian(f, &[0.0, 0.0]);
        let want = [[1.0, 1.0], [0.0, 2.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((j[(r, c)] - want[r][c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn jacobian_wide_input_chunks() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let j = jacobian(|a| vec![a.iter().fold(Dual::cst(0.0), |s, &v| s + v * v)], &x);
        for (i, &v) in x.iter().enumerate() {
            assert!((j[(0, i)] - 2.0 * v).abs() < 1e-14);
        }
    }

    #[test]
    fn jet_derivatives_of_exp_sqrt() {
        let x = Jet::<5>::variable(0.7);
        let e = (x * x).exp();
        // d/dx e^{x^2} = 2x e^{x^2}; second = (2 + 4x^2) e^{x^2}
        let v = (0.49f64).exp();
        assert!((e.derivative(1) - 1.4 * v).abs() < 1e-12);
        assert!((e.derivative(2) - (2.0 + 4.0 * 0.49) * v).abs() < 1e-12);
        let s = x.sqrt();
        assert!((s.derivative(1) - 0.5 / 0.7f64.sqrt()).abs() < 1e-12);
        let q = Jet::<5>::cst(1.0) / (Jet::<5>::cst(1.0) - x);
        // 1/(1-x): k-th derivative k!/(1-x)^{k+1}
        assert!((q.derivative(3) - 6.0 / 0.3f64.powi(4)).abs() < 1e-8);
    }
}
