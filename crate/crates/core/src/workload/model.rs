//! Chunk-sweep latencies and the affine dispatch-cost model.
//!
//! The model is `latency ≈ base_ms + per_call_ms · calls`. The slope plays
//! the role of the per-launch dispatch cost; the intercept absorbs the work
//! that does not scale with the number of launches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::kernel_calls;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub config: String,
    pub chunk: usize,
    pub calls: usize,
    pub latency_ms: f64,
    pub std_ms: f64,
    pub seq_len: usize,
    pub reported_speedup: f64,
}

/// One point per chunk, keeping the first occurrence, sorted by chunk.
pub fn distinct_chunks(points: &[SweepPoint]) -> Vec<SweepPoint> {
    let mut out: Vec<SweepPoint> = Vec::new();
    for p in points {
        if !out.iter().any(|q| q.chunk == p.chunk) {
            out.push(p.clone());
        }
    }
    out.sort_by_key(|p| p.chunk);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub per_call_ms: f64,
    pub base_ms: f64,
}

impl LatencyModel {
    pub fn predict(&self, calls: usize) -> f64 {
        self.base_ms + self.per_call_ms * calls as f64
    }

    pub fn predict_chunk(&self, seq_len: usize, chunk: usize) -> f64 {
        self.predict(kernel_calls(seq_len, chunk))
    }
}

/// Ordinary least squares of latency on call count.
pub fn fit_latency_model(points: &[SweepPoint]) -> Result<LatencyModel> {
    let mut calls: Vec<usize> = points.iter().map(|p| p.calls).collect();
    calls.sort_unstable();
    calls.dedup();
    if calls.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 distinct call counts, got {}",
            calls.len()
        )));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.calls as f64).sum::<f64>() / n;
    let my = points.iter().map(|p| p.latency_ms).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for p in points {
        let dx = p.calls as f64 - mx;
        sxy += dx * (p.latency_ms - my);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok(LatencyModel {
        per_call_ms: slope,
        base_ms: my - slope * mx,
    })
}

/// Latency lookup: measured means where available, the model elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyTable {
    pub points: Vec<SweepPoint>,
    pub model: Option<LatencyModel>,
}

impl LatencyTable {
    pub fn measured(points: &[SweepPoint]) -> Self {
        Self {
            points: distinct_chunks(points),
            model: None,
        }
    }

    pub fn with_model(points: &[SweepPoint]) -> Result<Self> {
        let points = distinct_chunks(points);
        let model = fit_latency_model(&points)?;
        Ok(Self {
            points,
            model: Some(model),
        })
    }

    pub fn latency(&self, chunk: usize, seq_len: usize) -> Result<f64> {
        if chunk == 0 {
            return Err(Error::InvalidParameter("chunk must be positive".into()));
        }
        if let Some(p) = self.points.iter().find(|p| p.chunk == chunk && p.seq_len == seq_len) {
            return Ok(p.latency_ms);
        }
        match self.model {
            Some(m) => Ok(m.predict_chunk(seq_len, chunk)),
            None => Err(Error::InvalidParameter(format!(
                "no measurement for chunk {chunk} at seq_len {seq_len} and no model"
            ))),
        }
    }
}

/// `latency(a) / latency(b)`: how much faster `b` is than `a`.
pub fn predict_speedup(table: &LatencyTable, chunk_a: usize, chunk_b: usize, seq_len: usize) -> Result<f64> {
    Ok(table.latency(chunk_a, seq_len)? / table.latency(chunk_b, seq_len)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(chunk: usize, calls: usize, ms: f64) -> SweepPoint {
        SweepPoint {
            config: format!("static-{chunk}"),
            chunk,
            calls,
            latency_ms: ms,
            std_ms: 0.0,
            seq_len: 4096,
            reported_speedup: 0.0,
        }
    }

    #[test]
    fn two_point_fit() {
        let m = fit_latency_model(&[pt(64, 64, 3.299), pt(512, 8, 0.748)]).unwrap();
        let slope = (3.299 - 0.748) / 56.0;
        assert!((m.per_call_ms - slope).abs() < 1e-12);
        assert!((m.base_ms - (0.748 - 8.0 * slope)).abs() < 1e-12);
        assert!((m.per_call_ms - 0.04555).abs() < 1e-5);
        assert!((m.base_ms - 0.3836).abs() < 1e-4);
    }

    #[test]
    fn exact_line_has_zero_residuals() {
        let pts: Vec<_> = [(1, 1.5), (2, 2.0), (4, 3.0), (8, 5.0)]
            .iter()
            .map(|&(c, ms)| pt(c, c, ms))
            .collect();
        let m = fit_latency_model(&pts).unwrap();
        for p in &pts {
            assert!((m.predict(p.calls) - p.latency_ms).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_needs_two_call_counts() {
        assert!(fit_latency_model(&[pt(64, 64, 1.0), pt(64, 64, 2.0)]).is_err());
        assert!(fit_latency_model(&[]).is_err());
    }

    #[test]
    fn measured_speedups() {
        let t = LatencyTable::measured(&[pt(64, 64, 3.299), pt(256, 16, 1.148), pt(512, 8, 0.748)]);
        assert_eq!(predict_speedup(&t, 64, 64, 4096).unwrap(), 1.0);
        assert!((predict_speedup(&t, 64, 512, 4096).unwrap() - 4.41).abs() < 0.01);
        assert!(predict_speedup(&t, 64, 1024, 4096).is_err());
        let ab = predict_speedup(&t, 64, 256, 4096).unwrap();
        let ba = predict_speedup(&t, 256, 64, 4096).unwrap();
        assert!((ab * ba - 1.0).abs() < 1e-9);
    }

    #[test]
    fn model_fills_gaps() {
        let t = LatencyTable::with_model(&[pt(64, 64, 3.299), pt(512, 8, 0.748)]).unwrap();
        let m = t.model.unwrap();
        assert_eq!(t.latency(1024, 4096).unwrap(), m.predict(4));
        assert_eq!(t.latency(512, 4096).unwrap(), 0.748);
    }

    #[test]
    fn duplicates_collapse() {
        let d = distinct_chunks(&[pt(512, 8, 0.748), pt(64, 64, 3.299), pt(512, 8, 0.9)]);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].chunk, 64);
        assert_eq!(d[1].latency_ms, 0.748);
    }
}
