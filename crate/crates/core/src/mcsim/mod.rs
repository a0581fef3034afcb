//! Event-level Monte Carlo of the pair source, Raman noise and dark counts.
//!
//! Pulses are processed in fixed-size blocks. Each block draws from its own
//! ChaCha stream selected by `(seed, block index)`, so the output does not
//! depend on how blocks are spread over worker threads.

mod count;

pub use count::{
    count_coincidences, estimate_visibility, nfold_coincidences, poisson_stream, CoincidenceCounts,
    VisibilityEstimate,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default pulses per block.
pub const BLOCK_PULSES: u64 = 1 << 20;

const FWHM_TO_SIGMA: f64 = 0.424_660_900_144_009_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairStatistics {
    /// Two independent single-mode thermal emitters (HH and VV) of mean μ/2.
    Thermal,
    /// Poisson pair number per emitter, as for a highly multimode source.
    Poisson,
}

/// Polarizer in front of a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Analyzer {
    Open,
    H,
    V,
    D,
    A,
}

impl Analyzer {
    fn basis(self) -> Option<u8> {
        match self {
            Analyzer::Open => None,
            Analyzer::H | Analyzer::V => Some(0),
            Analyzer::D | Analyzer::A => Some(1),
        }
    }

    /// Outcome index within the basis.
    fn outcome(self) -> u8 {
        match self {
            Analyzer::V | Analyzer::A => 1,
            _ => 0,
        }
    }

    /// Analyzer orthogonal to this one (open stays open).
    pub fn orthogonal(self) -> Self {
        match self {
            Analyzer::Open => Analyzer::Open,
            Analyzer::H => Analyzer::V,
            Analyzer::V => Analyzer::H,
            Analyzer::D => Analyzer::A,
            Analyzer::A => Analyzer::D,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSim {
    /// Probability that a pair photon produces a click.
    pub eta_total: f64,
    /// Detected Raman noise rate with an open analyzer, counts/s.
    pub noise_cps: f64,
    pub dark_cps: f64,
    pub jitter_fwhm_ps: f64,
    pub analyzer: Analyzer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_pulses: u64,
    pub seed: u64,
    pub rep_rate_hz: f64,
    pub mu: f64,
    pub statistics: PairStatistics,
    pub phase_rad: f64,
    pub pulse_fwhm_ps: f64,
    pub signal: ArmSim,
    pub idler: ArmSim,
    pub window_ps: f64,
    #[serde(default = "default_block")]
    pub block_pulses: u64,
}

fn default_block() -> u64 {
    BLOCK_PULSES
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pulses == 0 || self.block_pulses == 0 {
            return Err(Error::Domain("pulse and block counts must be positive".into()));
        }
        if !(self.rep_rate_hz > 0.0) || !(self.window_ps > 0.0) || !(self.mu >= 0.0) {
            return Err(Error::Domain("rep rate and window must be positive, mu >= 0".into()));
        }
        for a in [&self.signal, &self.idler] {
            if !(0.0..=1.0).contains(&a.eta_total) || !(a.noise_cps >= 0.0) || !(a.dark_cps >= 0.0) || !(a.jitter_fwhm_ps >= 0.0) {
                return Err(Error::Domain("arm efficiency must be in [0, 1] and rates >= 0".into()));
            }
        }
        Ok(())
    }

    pub fn period_ps(&self) -> f64 {
        1e12 / self.rep_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.n_pulses as f64 / self.rep_rate_hz
    }

    pub fn with_analyzers(&self, signal: Analyzer, idler: Analyzer) -> Self {
        let mut c = self.clone();
        c.signal.analyzer = signal;
        c.idler.analyzer = idler;
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Pair,
    Noise,
    Dark,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventStream {
    pub label: String,
    pub times_ps: Vec<i64>,
    pub origins: Vec<Origin>,
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.times_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ps.is_empty()
    }

    /// Sort by time and drop same-picosecond repeats.
    fn finalize(label: &str, mut events: Vec<(i64, Origin)>) -> Self {
        events.sort_unstable();
        events.dedup_by_key(|e| e.0);
        let (times_ps, origins) = events.into_iter().unzip();
        Self { label: label.to_string(), times_ps, origins }
    }

    pub fn count(&self, origin: Origin) -> usize {
        self.origins.iter().filter(|&&o| o == origin).count()
    }

    /// CSV dump with columns `arm,t_ps,tag`.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for (t, o) in self.times_ps.iter().zip(&self.origins) {
            let tag = match o {
                Origin::Pair => "pair",
                Origin::Noise => "noise",
                Origin::Dark => "dark",
            };
            w.write_record([self.label.as_str(), &t.to_string(), tag])?;
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pair number of one emitter of mean `m`, conditioned on at least one pair.
fn draw_at_least_one(rng: &mut ChaCha20Rng, stats: PairStatistics, m: f64) -> u32 {
    match stats {
        PairStatistics::Thermal => 1 + draw_unconditioned(rng, stats, m),
        PairStatistics::Poisson => {
            let target = rng.random::<f64>() * (-(-m).exp_m1());
            let mut p = m * (-m).exp();
            let mut cum = p;
            let mut n = 1u32;
            while cum < target && n < 10_000 {
                n += 1;
                p *= m / n as f64;
                cum += p;
            }
            n
        }
    }
}

fn draw_unconditioned(rng: &mut ChaCha20Rng, stats: PairStatistics, m: f64) -> u32 {
    if m <= 0.0 {
        return 0;
    }
    match stats {
        PairStatistics::Thermal => {
            let x = m / (1.0 + m);
            let u: f64 = 1.0 - rng.random::<f64>();
            (u.ln() / x.ln()).floor() as u32
        }
        PairStatistics::Poisson => {
            let target = rng.random::<f64>();
            let mut p = (-m).exp();
            let mut cum = p;
            let mut n = 0u32;
            while cum < target && n < 10_000 {
                n += 1;
                p *= m / n as f64;
                cum += p;
            }
            n
        }
    }
}

/// Probability an emitter of mean `m` produces no pair.
fn p_zero(stats: PairStatistics, m: f64) -> f64 {
    match stats {
        PairStatistics::Thermal => 1.0 / (1.0 + m),
        PairStatistics::Poisson => (-m).exp(),
    }
}

struct BlockOutput {
    signal: Vec<(i64, Origin)>,
    idler: Vec<(i64, Origin)>,
}

fn arm_passes(rng: &mut ChaCha20Rng, arm: &ArmSim, label: Option<u8>) -> bool {
    let pol_ok = match (arm.analyzer.basis(), label) {
        (None, _) => true,
        (Some(_), Some(l)) => l == arm.analyzer.outcome(),
        (Some(_), None) => rng.random::<f64>() < 0.5,
    };
    pol_ok && rng.random::<f64>() < arm.eta_total
}

fn simulate_block(cfg: &SimConfig, block: u64) -> BlockOutput {
    let mut rng = rng_for(cfg.seed, block);
    let first = block * cfg.block_pulses;
    let last = (first + cfg.block_pulses).min(cfg.n_pulses);
    let period = cfg.period_ps();
    let mut out = BlockOutput { signal: Vec::new(), idler: Vec::new() };

    let half = 0.5 * cfg.mu;
    let p0 = p_zero(cfg.statistics, half);
    let p_any = 1.0 - p0 * p0;
    let pulse_sigma = cfg.pulse_fwhm_ps * FWHM_TO_SIGMA;
    let js = Normal::new(0.0, cfg.signal.jitter_fwhm_ps * FWHM_TO_SIGMA).expect("finite jitter");
    let ji = Normal::new(0.0, cfg.idler.jitter_fwhm_ps * FWHM_TO_SIGMA).expect("finite jitter");
    let jp = Normal::new(0.0, pulse_sigma).expect("finite pulse width");

    // Both arms measure in the same basis: correlated outcomes.
    let shared_basis = match (cfg.signal.analyzer.basis(), cfg.idler.analyzer.basis()) {
        (Some(a), Some(b)) => a == b,
        _ => true,
    };
    let da_basis = cfg.signal.analyzer.basis() == Some(1) || cfg.idler.analyzer.basis() == Some(1);
    let flip_p = (0.5 * cfg.phase_rad).sin().powi(2);

    if p_any > 0.0 {
        let ln_q = (1.0 - p_any).ln();
        let mut k = first;
        loop {
            let u: f64 = 1.0 - rng.random::<f64>();
            let skip = if ln_q == 0.0 { 0 } else { (u.ln() / ln_q).floor() as u64 };
            k = match k.checked_add(skip) {
                Some(v) if v < last => v,
                _ => break,
            };
            let (n_hh, n_vv) = if rng.random::<f64>() < 1.0 / (1.0 + p0) {
                (draw_at_least_one(&mut rng, cfg.statistics, half), draw_unconditioned(&mut rng, cfg.statistics, half))
            } else {
                (0, draw_at_least_one(&mut rng, cfg.statistics, half))
            };
            let mut s_click = false;
            let mut i_click = false;
            for mode in (0..n_hh).map(|_| 0u8).chain((0..n_vv).map(|_| 1u8)) {
                let (ls, li) = if shared_basis {
                    let li = if da_basis && rng.random::<f64>() < flip_p { 1 - mode } else { mode };
                    (Some(mode), Some(li))
                } else {
                    (None, None)
                };
                s_click |= arm_passes(&mut rng, &cfg.signal, ls);
                i_click |= arm_passes(&mut rng, &cfg.idler, li);
            }
            if s_click || i_click {
                let t0 = k as f64 * period + jp.sample(&mut rng);
                if s_click {
                    out.signal.push(((t0 + js.sample(&mut rng)).round() as i64, Origin::Pair));
                }
                if i_click {
                    out.idler.push(((t0 + ji.sample(&mut rng)).round() as i64, Origin::Pair));
                }
            }
            k += 1;
        }
    }

    let t_start = first as f64 * period;
    let t_end = last as f64 * period;
    for (arm, buf) in [(&cfg.signal, &mut out.signal), (&cfg.idler, &mut out.idler)] {
        let noise_rate = if arm.analyzer == Analyzer::Open { arm.noise_cps } else { 0.5 * arm.noise_cps };
        for (rate, origin) in [(noise_rate, Origin::Noise), (arm.dark_cps, Origin::Dark)] {
            push_poisson(&mut rng, rate, t_start, t_end, origin, buf);
        }
    }
    out
}

fn push_poisson(rng: &mut ChaCha20Rng, rate_cps: f64, t_start_ps: f64, t_end_ps: f64, origin: Origin, buf: &mut Vec<(i64, Origin)>) {
    if !(rate_cps > 0.0) {
        return;
    }
    let exp = Exp::new(rate_cps * 1e-12).expect("positive rate");
    let mut t = t_start_ps;
    loop {
        t += exp.sample(rng);
        if t >= t_end_ps {
            break;
        }
        buf.push((t.round() as i64, origin));
    }
}

/// Simulate `(signal, idler)` detection streams.
pub fn simulate_events(cfg: &SimConfig) -> Result<(EventStream, EventStream)> {
    cfg.validate()?;
    let blocks = cfg.n_pulses.div_ceil(cfg.block_pulses);
    let parts: Vec<BlockOutput> = (0..blocks).into_par_iter().map(|b| simulate_block(cfg, b)).collect();
    let mut s = Vec::with_capacity(parts.iter().map(|p| p.signal.len()).sum());
    let mut i = Vec::with_capacity(parts.iter().map(|p| p.idler.len()).sum());
    for p in parts {
        s.extend(p.signal);
        i.extend(p.idler);
    }
    Ok((EventStream::finalize("signal", s), EventStream::finalize("idler", i)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McSummary {
    pub duration_s: f64,
    pub singles_signal_cps: f64,
    pub singles_idler_cps: f64,
    pub ccr_ccps: f64,
    pub ccr_stderr: f64,
    pub accidentals_ccps: f64,
    pub accidentals_stderr: f64,
    pub visibility: f64,
    pub visibility_stderr: f64,
}

/// Open-analyzer rates plus an H/H vs H/V visibility estimate.
pub fn run_summary(cfg: &SimConfig) -> Result<McSummary> {
    let open = cfg.with_analyzers(Analyzer::Open, Analyzer::Open);
    let (s, i) = simulate_events(&open)?;
    let counts = count_coincidences(&s, &i, cfg.window_ps, cfg.period_ps());
    let par = cfg.with_analyzers(Analyzer::H, Analyzer::H);
    let orth = SimConfig { seed: cfg.seed ^ 0x9e37_79b9_7f4a_7c15, ..cfg.with_analyzers(Analyzer::H, Analyzer::V) };
    let v = estimate_visibility(&par, &orth)?;
    let t = cfg.duration_s();
    Ok(McSummary {
        duration_s: t,
        singles_signal_cps: s.len() as f64 / t,
        singles_idler_cps: i.len() as f64 / t,
        ccr_ccps: counts.coincidences as f64 / t,
        ccr_stderr: (counts.coincidences.max(1) as f64).sqrt() / t,
        accidentals_ccps: counts.delayed as f64 / t,
        accidentals_stderr: (counts.delayed.max(1) as f64).sqrt() / t,
        visibility: v.visibility,
        visibility_stderr: v.stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arm(eta: f64, noise: f64, dark: f64) -> ArmSim {
        ArmSim { eta_total: eta, noise_cps: noise, dark_cps: dark, jitter_fwhm_ps: 50.0, analyzer: Analyzer::Open }
    }

    fn cfg(mu: f64, n: u64) -> SimConfig {
        SimConfig {
            n_pulses: n,
            seed: 11,
            rep_rate_hz: 416.7e6,
            mu,
            statistics: PairStatistics::Thermal,
            phase_rad: 0.0,
            pulse_fwhm_ps: 80.0,
            signal: arm(0.1, 0.0, 0.0),
            idler: arm(0.1, 0.0, 0.0),
            window_ps: 600.0,
            block_pulses: 1 << 16,
        }
    }

    #[test]
    fn nothing_in_nothing_out() {
        let (s, i) = simulate_events(&cfg(0.0, 1_000_000)).unwrap();
        assert!(s.is_empty() && i.is_empty());
    }

    #[test]
    fn noise_only_count_is_poisson() {
        let mut c = cfg(0.0, 416_700_000);
        c.signal.noise_cps = 5000.0;
        let (s, _) = simulate_events(&c).unwrap();
        let expected = 5000.0 * c.duration_s();
        assert!((s.len() as f64 - expected).abs() < 3.0 * expected.sqrt(), "{} vs {expected}", s.len());
        assert_eq!(s.count(Origin::Noise), s.len());
    }

    #[test]
    fn replay_is_bit_identical_and_independent_of_threads() {
        let mut c = cfg(0.05, 3_000_000);
        c.signal.noise_cps = 1e5;
        c.idler.dark_cps = 1e4;
        let a = simulate_events(&c).unwrap();
        let b = simulate_events(&c).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let one = pool.install(|| simulate_events(&c).unwrap());
        assert_eq!(a, one);
    }

    #[test]
    fn streams_are_strictly_increasing() {
        let mut c = cfg(0.1, 2_000_000);
        c.signal.noise_cps = 2e5;
        let (s, i) = simulate_events(&c).unwrap();
        assert!(s.times_ps.windows(2).all(|w| w[0] < w[1]));
        assert!(i.times_ps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn pair_singles_match_closed_form() {
        // P(click) per pulse = 1 − (1 + η μ/2)^-2 for two thermal emitters.
        let c = cfg(0.02, 20_000_000);
        let (s, _) = simulate_events(&c).unwrap();
        let p = 1.0 - (1.0 + 0.1 * 0.01f64).powi(-2);
        let expected = p * c.n_pulses as f64;
        assert!((s.len() as f64 - expected).abs() < 3.0 * expected.sqrt(), "{} vs {expected}", s.len());
    }

    #[test]
    fn poisson_statistics_toggle() {
        let mut c = cfg(0.02, 20_000_000);
        c.statistics = PairStatistics::Poisson;
        let (s, _) = simulate_events(&c).unwrap();
        let p = 1.0 - (-0.1 * 0.02f64).exp();
        let expected = p * c.n_pulses as f64;
        assert!((s.len() as f64 - expected).abs() < 3.0 * expected.sqrt());
    }

    #[test]
    fn csv_dump_has_one_row_per_event() {
        let mut c = cfg(0.0, 100_000);
        c.signal.dark_cps = 1e6;
        let (s, _) = simulate_events(&c).unwrap();
        let mut w = csv::Writer::from_writer(Vec::new());
        s.write_csv(&mut w).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().count(), s.len());
        assert!(text.lines().all(|l| l.starts_with("signal,") && l.ends_with(",dark")));
    }
}
