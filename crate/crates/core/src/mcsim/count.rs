use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::{rng_for, simulate_events, EventStream, Origin, SimConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoincidenceCounts {
    /// Pairs within ±window/2.
    pub coincidences: u64,
    /// Pairs within ±window/2 after shifting the second stream by one period.
    pub delayed: u64,
}

/// Greedy one-to-one matching of `a` against `b` shifted by `offset_ps`.
fn match_count(a: &[i64], b: &[i64], half_window: i64, offset_ps: i64) -> u64 {
    let (mut i, mut j, mut n) = (0usize, 0usize, 0u64);
    while i < a.len() && j < b.len() {
        let d = (b[j] - offset_ps) - a[i];
        if d < -half_window {
            j += 1;
        } else if d > half_window {
            i += 1;
        } else {
            n += 1;
            i += 1;
            j += 1;
        }
    }
    n
}

/// Two-pointer coincidence count within ±`window_ps`/2, plus the same count
/// against a copy of `idler` delayed by one pulse period.
pub fn count_coincidences(signal: &EventStream, idler: &EventStream, window_ps: f64, period_ps: f64) -> CoincidenceCounts {
    let half = (0.5 * window_ps).floor() as i64;
    CoincidenceCounts {
        coincidences: match_count(&signal.times_ps, &idler.times_ps, half, 0),
        delayed: match_count(&signal.times_ps, &idler.times_ps, half, period_ps.round() as i64),
    }
}

/// Number of n-tuples with one event from every stream inside ±`window_ps`/2
/// of an anchor event in the first stream.
pub fn nfold_coincidences(streams: &[&EventStream], window_ps: f64) -> Result<u64> {
    if streams.len() < 2 {
        return Err(Error::Arity(format!("{}-fold coincidences need at least two streams", streams.len())));
    }
    if streams.iter().any(|s| s.is_empty()) {
        return Ok(0);
    }
    let half = (0.5 * window_ps).floor() as i64;
    let others = &streams[1..];
    let mut lo = vec![0usize; others.len()];
    let mut hi = vec![0usize; others.len()];
    let mut total = 0u64;
    for &t in &streams[0].times_ps {
        let mut product = 1u64;
        for (k, s) in others.iter().enumerate() {
            let ts = &s.times_ps;
            while lo[k] < ts.len() && ts[lo[k]] < t - half {
                lo[k] += 1;
            }
            if hi[k] < lo[k] {
                hi[k] = lo[k];
            }
            while hi[k] < ts.len() && ts[hi[k]] <= t + half {
                hi[k] += 1;
            }
            product *= (hi[k] - lo[k]) as u64;
        }
        total += product;
    }
    Ok(total)
}

/// Homogeneous Poisson stream of `rate_cps` over `duration_s`.
pub fn poisson_stream(label: &str, rate_cps: f64, duration_s: f64, seed: u64, stream: u64) -> EventStream {
    let mut rng = rng_for(seed, stream);
    let mut events = Vec::new();
    if rate_cps > 0.0 {
        let exp = Exp::new(rate_cps * 1e-12).expect("positive rate");
        let end = duration_s * 1e12;
        let mut t = 0.0;
        loop {
            t += exp.sample(&mut rng);
            if t >= end {
                break;
            }
            events.push((t.round() as i64, Origin::Noise));
        }
    }
    EventStream::finalize(label, events)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisibilityEstimate {
    pub parallel: u64,
    pub orthogonal: u64,
    pub visibility: f64,
    pub stderr: f64,
}

/// `(N∥ − N⊥)/(N∥ + N⊥)` from separate parallel and orthogonal runs.
pub fn estimate_visibility(parallel: &SimConfig, orthogonal: &SimConfig) -> Result<VisibilityEstimate> {
    let count = |c: &SimConfig| -> Result<u64> {
        let (s, i) = simulate_events(c)?;
        Ok(count_coincidences(&s, &i, c.window_ps, c.period_ps()).coincidences)
    };
    let np = count(parallel)?;
    let no = count(orthogonal)?;
    let total = (np + no) as f64;
    if total == 0.0 {
        return Err(Error::UndefinedVisibility);
    }
    let v = (np as f64 - no as f64) / total;
    // Independent Poisson counts: var(V) = 4·N∥·N⊥/(N∥ + N⊥)³.
    let stderr = (4.0 * np as f64 * no as f64 / total.powi(3)).sqrt().max(1.0 / total);
    Ok(VisibilityEstimate { parallel: np, orthogonal: no, visibility: v, stderr })
}
