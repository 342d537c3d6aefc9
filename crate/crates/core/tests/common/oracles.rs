//! Reference implementations in 256-bit arithmetic and exact integers.
//!
//! The combiners are evaluated straight from their defining formulas
//! (`tan` rather than `cot`, the Poisson sum rather than its log form) so
//! they share no numerics with the library.

#![allow(dead_code)]

use astro_float::{BigFloat, Consts, Radix, RoundingMode};

const P: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

pub struct Oracle {
    cc: Consts,
    pi: BigFloat,
}

fn big(x: f64) -> BigFloat {
    BigFloat::from_f64(x, P)
}

impl Oracle {
    pub fn new() -> Self {
        let mut cc = Consts::new().expect("constants cache");
        let pi = cc.pi(P, RM);
        Oracle { cc, pi }
    }

    fn round(&mut self, x: &BigFloat) -> f64 {
        x.format(Radix::Dec, RM, &mut self.cc)
            .expect("formattable")
            .parse()
            .expect("decimal output parses")
    }

    fn sorted_tail(col: &[f64], r: usize, lo: f64, hi: f64) -> Vec<f64> {
        let mut s: Vec<f64> = col.iter().map(|p| p.clamp(lo, hi)).collect();
        s.sort_by(f64::total_cmp);
        s[r - 1..].to_vec()
    }

    /// `min_t (n-r+1)/t · P_(r+t-1)`, capped at 1.
    pub fn simes(&mut self, col: &[f64], r: usize) -> f64 {
        let tail = Self::sorted_tail(col, r, 1e-300, 1.0);
        let k = big(tail.len() as f64);
        let mut best = big(1.0);
        for (t, &p) in tail.iter().enumerate() {
            let v = k.mul(&big(p), P, RM).div(&big((t + 1) as f64), P, RM);
            best = best.min(&v);
        }
        self.round(&best)
    }

    /// `pr(χ²_{2k} ≥ -2 Σ ln P_(i))` as `e^{-y} Σ_{i<k} y^i / i!`.
    pub fn fisher(&mut self, col: &[f64], r: usize) -> f64 {
        let tail = Self::sorted_tail(col, r, 1e-300, 1.0);
        let mut y = big(0.0);
        for &p in &tail {
            y = y.sub(&big(p).ln(P, RM, &mut self.cc), P, RM);
        }
        let mut term = big(1.0);
        let mut sum = big(1.0);
        for i in 1..tail.len() {
            term = term.mul(&y, P, RM).div(&big(i as f64), P, RM);
            sum = sum.add(&term, P, RM);
        }
        let v = sum.mul(&y.neg().exp(P, RM, &mut self.cc), P, RM);
        let v = self.round(&v);
        v.min(1.0)
    }

    /// `1/2 - atan(T)/π` with `T` the mean of `tan((1/2 - P_(i))π)`.
    pub fn cauchy(&mut self, col: &[f64], r: usize, eps: f64) -> f64 {
        let tail = Self::sorted_tail(col, r, eps, 1.0 - eps);
        let half = big(0.5);
        let mut t = big(0.0);
        for &p in &tail {
            let arg = half.sub(&big(p), P, RM).mul(&self.pi, P, RM);
            t = t.add(&arg.tan(P, RM, &mut self.cc), P, RM);
        }
        let t = t.div(&big(tail.len() as f64), P, RM);
        let at = t.atan(P, RM, &mut self.cc).div(&self.pi, P, RM);
        let v = half.sub(&at, P, RM);
        self.round(&v)
    }
}

fn binom(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact hypergeometric upper tails: `tails[k] / total = pr(X ≥ k)`.
/// For `n1 ≤ 60` every count stays below 2^57, so the quotient of the
/// two `f64` conversions is within a few ulps of the rational value.
pub fn hypergeometric_tails(n1: u64, n2: u64, big_k: u64) -> (Vec<u128>, u128) {
    let hi = n2.min(big_k);
    let mut tails = vec![0u128; hi as usize + 2];
    for i in (0..=hi).rev() {
        let ways = if n2 - i > n1 - big_k { 0 } else { binom(big_k, i) * binom(n1 - big_k, n2 - i) };
        tails[i as usize] = tails[i as usize + 1] + ways;
    }
    (tails, binom(n1, n2))
}
