//! Reference selective-SSM recurrence.
//!
//! Each channel `c` carries `d_state` lanes with a diagonal transition:
//!
//! ```text
//! h[c,s] ← a[t,c,s]·h[c,s] + b[t,s]·x[c,t]
//! y[c,t]  = Σ_s cc[t,s]·h[c,s] + D[c]·x[c,t]
//! ```
//!
//! `b` and `cc` are shared across channels. Whole-sequence and chunked
//! evaluation go through the same window routine, so chunking only changes
//! where the loop pauses, never the order of floating-point operations.

pub mod io;
pub mod synth;

use std::ops::Range;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A coefficient array that is either fixed over time or given per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "values", rename_all = "snake_case")]
pub enum Coef<T> {
    /// One row of `width` values reused at every step.
    Constant(Vec<T>),
    /// `len` rows of `width` values, row-major by step.
    PerStep(Vec<T>),
}

impl<T: Copy> Coef<T> {
    #[inline]
    fn row(&self, t: usize, width: usize) -> &[T] {
        match self {
            Coef::Constant(v) => v,
            Coef::PerStep(v) => &v[t * width..(t + 1) * width],
        }
    }

    fn values(&self) -> &[T] {
        match self {
            Coef::Constant(v) | Coef::PerStep(v) => v,
        }
    }

    fn check(&self, name: &str, width: usize, len: usize) -> Result<()> {
        let (got, want) = match self {
            Coef::Constant(v) => (v.len(), width),
            Coef::PerStep(v) => (v.len(), width * len),
        };
        if got != want {
            return Err(Error::ShapeMismatch(format!(
                "{name} holds {got} values, expected {want}"
            )));
        }
        Ok(())
    }

    fn map<U>(&self, f: impl Fn(T) -> U) -> Coef<U> {
        match self {
            Coef::Constant(v) => Coef::Constant(v.iter().map(|&x| f(x)).collect()),
            Coef::PerStep(v) => Coef::PerStep(v.iter().map(|&x| f(x)).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanParams<T> {
    pub d: usize,
    pub d_state: usize,
    pub len: usize,
    /// Row width `d·d_state`, indexed `c·d_state + s`.
    pub a: Coef<T>,
    /// Row width `d_state`.
    pub b: Coef<T>,
    /// Row width `d_state`.
    pub c: Coef<T>,
    /// Length `d`.
    pub skip: Vec<T>,
    /// Shape `(d, len)`, row-major.
    pub x: Vec<T>,
}

impl<T: Float> ScanParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d_state == 0 || self.len == 0 {
            return Err(Error::ShapeMismatch(format!(
                "dimensions (d={}, d_state={}, len={}) must be positive",
                self.d, self.d_state, self.len
            )));
        }
        self.a.check("A", self.d * self.d_state, self.len)?;
        self.b.check("B", self.d_state, self.len)?;
        self.c.check("C", self.d_state, self.len)?;
        if self.skip.len() != self.d {
            return Err(Error::ShapeMismatch(format!(
                "D holds {} values, expected {}",
                self.skip.len(),
                self.d
            )));
        }
        if self.x.len() != self.d * self.len {
            return Err(Error::ShapeMismatch(format!(
                "x holds {} values, expected {}",
                self.x.len(),
                self.d * self.len
            )));
        }
        let arrays = [
            self.a.values(),
            self.b.values(),
            self.c.values(),
            &self.skip,
            &self.x,
        ];
        for (name, arr) in ["A", "B", "C", "D", "x"].iter().zip(arrays) {
            if arr.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} contains non-finite values")));
            }
        }
        Ok(())
    }

    /// Converts every coefficient to another float type.
    pub fn cast<U: Float>(&self) -> ScanParams<U> {
        let f = |v: T| U::from(v).expect("float to float cast");
        ScanParams {
            d: self.d,
            d_state: self.d_state,
            len: self.len,
            a: self.a.map(f),
            b: self.b.map(f),
            c: self.c.map(f),
            skip: self.skip.iter().map(|&v| f(v)).collect(),
            x: self.x.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanState<T> {
    pub d: usize,
    pub d_state: usize,
    /// Shape `(d, d_state)`, row-major.
    pub h: Vec<T>,
}

impl<T: Float> ScanState<T> {
    pub fn zeros(d: usize, d_state: usize) -> Self {
        Self {
            d,
            d_state,
            h: vec![T::zero(); d * d_state],
        }
    }

    pub fn for_params(p: &ScanParams<T>) -> Self {
        Self::zeros(p.d, p.d_state)
    }

    fn check(&self, p: &ScanParams<T>) -> Result<()> {
        if self.d != p.d || self.d_state != p.d_state || self.h.len() != p.d * p.d_state {
            return Err(Error::ShapeMismatch(format!(
                "state ({}, {}) does not match params ({}, {})",
                self.d, self.d_state, p.d, p.d_state
            )));
        }
        if self.h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state contains non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutput<T> {
    pub d: usize,
    pub len: usize,
    /// Shape `(d, len)`, row-major.
    pub y: Vec<T>,
}

impl<T: Float> ScanOutput<T> {
    pub fn zeros(d: usize, len: usize) -> Self {
        Self {
            d,
            len,
            y: vec![T::zero(); d * len],
        }
    }

    /// Bitwise equality, distinguishing signed zeros and NaN payloads.
    pub fn bit_identical(&self, other: &Self) -> bool
    where
        T: ToBits,
    {
        self.d == other.d && self.len == other.len && bits_eq(&self.y, &other.y)
    }
}

/// Raw bit pattern of a float, for exact comparisons.
pub trait ToBits: Copy {
    fn to_bits_u64(self) -> u64;
}

impl ToBits for f64 {
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
}

impl ToBits for f32 {
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
}

pub fn bits_eq<T: ToBits>(a: &[T], b: &[T]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits_u64() == y.to_bits_u64())
}

/// Advances `state` over the steps in `range`, writing into `out`.
///
/// Running `0..a` then `a..len` is the same computation as `0..len`.
pub fn scan_range<T: Float>(
    p: &ScanParams<T>,
    state: &mut ScanState<T>,
    range: Range<usize>,
    out: &mut ScanOutput<T>,
) -> Result<()> {
    p.validate()?;
    state.check(p)?;
    if range.start > range.end || range.end > p.len {
        return Err(Error::InvalidParameter(format!(
            "step range {range:?} outside 0..{}",
            p.len
        )));
    }
    if out.d != p.d || out.len != p.len || out.y.len() != p.d * p.len {
        return Err(Error::ShapeMismatch("output buffer does not match params".into()));
    }
    window(p, state, range, out);
    Ok(())
}

fn window<T: Float>(p: &ScanParams<T>, state: &mut ScanState<T>, range: Range<usize>, out: &mut ScanOutput<T>) {
    let (ds, len) = (p.d_state, p.len);
    for t in range {
        let a = p.a.row(t, p.d * ds);
        let b = p.b.row(t, ds);
        let c = p.c.row(t, ds);
        for ch in 0..p.d {
            let x = p.x[ch * len + t];
            let h = &mut state.h[ch * ds..(ch + 1) * ds];
            let a = &a[ch * ds..(ch + 1) * ds];
            let mut acc = T::zero();
            for s in 0..ds {
                h[s] = a[s] * h[s] + b[s] * x;
                acc = acc + c[s] * h[s];
            }
            out.y[ch * len + t] = acc + p.skip[ch] * x;
        }
    }
}

/// Runs every step in order from `h0`.
pub fn scan_sequential<T: Float>(p: &ScanParams<T>, h0: &ScanState<T>) -> Result<(ScanOutput<T>, ScanState<T>)> {
    let mut state = h0.clone();
    let mut out = ScanOutput::zeros(p.d, p.len);
    scan_range(p, &mut state, 0..p.len, &mut out)?;
    Ok((out, state))
}

/// Runs consecutive windows of at most `chunk` steps, carrying the state.
pub fn scan_chunked<T: Float>(
    p: &ScanParams<T>,
    h0: &ScanState<T>,
    chunk: usize,
) -> Result<(ScanOutput<T>, ScanState<T>)> {
    if chunk == 0 {
        return Err(Error::InvalidParameter("chunk must be at least 1".into()));
    }
    p.validate()?;
    h0.check(p)?;
    let mut state = h0.clone();
    let mut out = ScanOutput::zeros(p.d, p.len);
    let mut start = 0;
    while start < p.len {
        let end = (start + chunk).min(p.len);
        window(p, &mut state, start..end, &mut out);
        start = end;
    }
    Ok((out, state))
}

#[cfg(test)]
mod tests {
    use super::synth::random_scan_params;
    use super::*;

    fn ones(len: usize) -> ScanParams<f64> {
        ScanParams {
            d: 1,
            d_state: 1,
            len,
            a: Coef::Constant(vec![1.0]),
            b: Coef::Constant(vec![1.0]),
            c: Coef::Constant(vec![1.0]),
            skip: vec![0.0],
            x: vec![1.0; len],
        }
    }

    #[test]
    fn prefix_sum_identity() {
        let p = ones(10);
        let (y, h) = scan_sequential(&p, &ScanState::for_params(&p)).unwrap();
        let expected: Vec<f64> = (1..=10).map(|t| t as f64).collect();
        assert_eq!(y.y, expected);
        assert_eq!(h.h, vec![10.0]);
    }

    #[test]
    fn memoryless_limit() {
        let mut p = random_scan_params(3, 4, 20, 5).unwrap();
        p.a = Coef::Constant(vec![0.0; 12]);
        p.skip = vec![0.0; 3];
        let (y, _) = scan_sequential(&p, &ScanState::for_params(&p)).unwrap();
        for ch in 0..3 {
            for t in 0..20 {
                let x = p.x[ch * 20 + t];
                let b = p.b.row(t, 4);
                let c = p.c.row(t, 4);
                let mut acc = 0.0;
                for s in 0..4 {
                    acc += c[s] * (b[s] * x);
                }
                assert_eq!(y.y[ch * 20 + t], acc);
            }
        }
    }

    #[test]
    fn chunk_extremes_match_sequential() {
        let p = random_scan_params(4, 8, 97, 1).unwrap();
        let h0 = ScanState::for_params(&p);
        let (y, h) = scan_sequential(&p, &h0).unwrap();
        for chunk in [1, 7, 96, 97, 1000] {
            let (yc, hc) = scan_chunked(&p, &h0, chunk).unwrap();
            assert!(y.bit_identical(&yc), "chunk {chunk}");
            assert!(bits_eq(&h.h, &hc.h));
        }
        assert!(scan_chunked(&p, &h0, 0).is_err());
    }

    #[test]
    fn split_handoff() {
        let p = random_scan_params(2, 3, 50, 2).unwrap();
        let (y, h) = scan_sequential(&p, &ScanState::for_params(&p)).unwrap();
        for split in [0, 1, 25, 49, 50] {
            let mut state = ScanState::for_params(&p);
            let mut out = ScanOutput::zeros(p.d, p.len);
            scan_range(&p, &mut state, 0..split, &mut out).unwrap();
            scan_range(&p, &mut state, split..50, &mut out).unwrap();
            assert!(out.bit_identical(&y));
            assert!(bits_eq(&state.h, &h.h));
        }
    }

    #[test]
    fn shape_errors() {
        let mut p = ones(4);
        p.x.pop();
        assert!(matches!(
            scan_sequential(&p, &ScanState::zeros(1, 1)),
            Err(Error::ShapeMismatch(_))
        ));
        let p = ones(4);
        assert!(scan_sequential(&p, &ScanState::zeros(2, 1)).is_err());
        let mut p = ones(4);
        p.b = Coef::PerStep(vec![1.0; 3]);
        assert!(p.validate().is_err());
        let mut p = ones(4);
        p.x[2] = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn single_precision_chunking_is_also_exact() {
        let p = random_scan_params(4, 4, 300, 3).unwrap().cast::<f32>();
        let h0 = ScanState::for_params(&p);
        let (y, _) = scan_sequential(&p, &h0).unwrap();
        for chunk in [1, 32, 64] {
            assert!(y.bit_identical(&scan_chunked(&p, &h0, chunk).unwrap().0));
        }
    }
}
