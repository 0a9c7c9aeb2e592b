//! Synthetic detector data under additive white Gaussian noise: direct
//! intensity samples, superheterodyne waveforms and averaged frequency scans.
//!
//! Every draw comes from a ChaCha8 stream keyed by a 64-bit seed. Campaigns
//! derive one seed per (master seed, cell, trial, side) with [`derive_seed`],
//! so generated data never depends on thread scheduling.

use std::io::{BufRead, BufReader, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::response::{MarginalCurve, PeakLineshape, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise specification: {0}")]
    InvalidSpec(String),
    #[error("invalid sampling plan: {0}")]
    InvalidPlan(String),
    #[error("{side} scan frequency {f} MHz is on the wrong side of the resonance")]
    SideViolation { side: &'static str, f: f64 },
    #[error("scan format error: {0}")]
    Format(String),
}

/// Additive noise n0 ~ Normal(0, sigma0^2) with a deterministic seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma0: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma0: f64, seed: u64) -> Result<Self, NoiseError> {
        if !(sigma0.is_finite() && sigma0 >= 0.0) {
            return Err(NoiseError::InvalidSpec(format!("sigma0 must be finite and >= 0, got {sigma0}")));
        }
        Ok(Self { sigma0, seed })
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// `n` noise values sigma0 * N(0, 1).
    pub fn draw(&self, n: usize) -> Vec<f64> {
        let mut rng = self.rng();
        (0..n).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            self.sigma0 * z
        }).collect()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a path of counters under `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// N samples z = F_I[x] + n0.
pub fn sample_idd(curve: &MarginalCurve, x: f64, n: usize, noise: &NoiseSpec) -> Vec<f64> {
    let y = curve.eval(x);
    noise.draw(n).into_iter().map(|e| y + e).collect()
}

/// Superheterodyne waveform over `periods` periods of `per_period` samples:
/// z_k = F_I[x_LO] + F_I'[x_LO] x cos(2 pi k / per_period + phi) + n0 with
/// k = 1..per_period inside each period. The caller keeps x small against the
/// LO so the linearised beat model holds.
pub fn sample_isd(
    curve: &MarginalCurve,
    x_lo: f64,
    x: f64,
    phi: f64,
    periods: usize,
    per_period: usize,
    noise: &NoiseSpec,
) -> Result<Vec<f64>, NoiseError> {
    if per_period < 4 {
        return Err(NoiseError::InvalidSpec(format!("need at least 4 samples per period, got {per_period}")));
    }
    if periods < 1 {
        return Err(NoiseError::InvalidSpec("need at least one period".into()));
    }
    let (dc, slope) = curve.eval_with_derivative(x_lo);
    let wave: Vec<f64> = (1..=per_period)
        .map(|k| {
            let arg = 2.0 * std::f64::consts::PI * k as f64 / per_period as f64 + phi;
            slope * x * arg.cos()
        })
        .collect();
    let noise_v = noise.draw(periods * per_period);
    Ok((0..periods * per_period).map(|i| dc + wave[i % per_period] + noise_v[i]).collect())
}

/// Column-averaged scan over one peak.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanData {
    /// Probe detunings (MHz).
    pub frequencies: Vec<f64>,
    pub voltages: Vec<f64>,
    pub per_point_averages: usize,
    pub side: Side,
    pub seed: Option<u64>,
}

impl ScanData {
    pub fn new(frequencies: Vec<f64>, voltages: Vec<f64>, per_point_averages: usize, side: Side) -> Result<Self, NoiseError> {
        if frequencies.len() != voltages.len() || frequencies.is_empty() {
            return Err(NoiseError::Format("frequency and voltage vectors differ in length or are empty".into()));
        }
        if per_point_averages < 1 {
            return Err(NoiseError::Format("per-point averages must be at least 1".into()));
        }
        check_side(&frequencies, side)?;
        Ok(Self { frequencies, voltages, per_point_averages, side, seed: None })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// Total detector samples behind the scan.
    pub fn sample_count(&self) -> usize {
        self.len() * self.per_point_averages
    }

    /// CSV `f,z` preceded by `# key=value` metadata lines.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# side={}", self.side.name())?;
        writeln!(out, "# n_avg={}", self.per_point_averages)?;
        if let Some(s) = self.seed {
            writeln!(out, "# seed={s}")?;
        }
        writeln!(out, "f,z")?;
        for (f, z) in self.frequencies.iter().zip(&self.voltages) {
            writeln!(out, "{f},{z}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, NoiseError> {
        let bad = |m: String| NoiseError::Format(m);
        let mut side = None;
        let mut n_avg = None;
        let mut seed = None;
        let mut header = false;
        let mut freqs = Vec::new();
        let mut volts = Vec::new();
        for line in BufReader::new(input).lines() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    let v = v.trim();
                    match k.trim() {
                        "side" => side = Some(Side::parse(v).ok_or_else(|| bad(format!("bad side `{v}`")))?),
                        "n_avg" => n_avg = Some(v.parse().map_err(|e| bad(format!("n_avg: {e}")))?),
                        "seed" => seed = Some(v.parse().map_err(|e| bad(format!("seed: {e}")))?),
                        _ => {}
                    }
                }
                continue;
            }
            if !header {
                if line != "f,z" {
                    return Err(bad(format!("expected header `f,z`, got `{line}`")));
                }
                header = true;
                continue;
            }
            let (f, z) = line.split_once(',').ok_or_else(|| bad(format!("bad row `{line}`")))?;
            freqs.push(f.trim().parse().map_err(|e| bad(format!("f: {e}")))?);
            volts.push(z.trim().parse().map_err(|e| bad(format!("z: {e}")))?);
        }
        let side = side.ok_or_else(|| bad("missing `# side=`".into()))?;
        let n_avg = n_avg.ok_or_else(|| bad("missing `# n_avg=`".into()))?;
        let mut scan = Self::new(freqs, volts, n_avg, side)?;
        scan.seed = seed;
        Ok(scan)
    }
}

fn check_side(freqs: &[f64], side: Side) -> Result<(), NoiseError> {
    for &f in freqs {
        let ok = match side {
            Side::Right => f > 0.0,
            Side::Left => f < 0.0,
        };
        if !ok {
            return Err(NoiseError::SideViolation { side: side.name(), f });
        }
    }
    Ok(())
}

/// Which flank(s) of a peak a max-slope plan samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flanks {
    /// Half of the points at the steepest point of each flank.
    Both,
    /// All points at the single steepest point.
    Steepest,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Evenly spaced points over `span` MHz centred on the peak, endpoints
    /// included.
    Uniform { span: f64 },
    /// Points concentrated at the steepest flank point(s), spread evenly over
    /// `window` MHz around each (window 0 stacks them on one frequency).
    MaxSlope { window: f64, flanks: Flanks },
    /// Fixed detunings, passed through unchanged.
    Explicit(Vec<f64>),
}

/// Frequencies of one side's scan, N_SF,1 = `points`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub strategy: Strategy,
    pub points: usize,
}

/// How far from the peak a tabulated lineshape's flank is searched (MHz).
const FLANK_REACH: f64 = 5.0;

impl SamplingPlan {
    pub fn uniform(points: usize, span: f64) -> Self {
        Self { strategy: Strategy::Uniform { span }, points }
    }

    pub fn max_slope(points: usize, window: f64, flanks: Flanks) -> Self {
        Self { strategy: Strategy::MaxSlope { window, flanks }, points }
    }

    pub fn explicit(freqs: Vec<f64>) -> Self {
        Self { points: freqs.len(), strategy: Strategy::Explicit(freqs) }
    }

    /// Absolute detunings for a peak of shape `lineshape` located at `shift`.
    pub fn frequencies(&self, lineshape: &PeakLineshape, shift: f64) -> Result<Vec<f64>, NoiseError> {
        if self.points < 1 {
            return Err(NoiseError::InvalidPlan("plan needs at least one point".into()));
        }
        let freqs = match &self.strategy {
            Strategy::Explicit(f) => {
                if f.len() != self.points {
                    return Err(NoiseError::InvalidPlan("explicit list length differs from point count".into()));
                }
                f.clone()
            }
            Strategy::Uniform { span } => {
                if self.points < 2 || !(span.is_finite() && *span > 0.0) {
                    return Err(NoiseError::InvalidPlan("uniform plan needs >= 2 points and a positive span".into()));
                }
                let h = span / (self.points - 1) as f64;
                (0..self.points).map(|i| shift - 0.5 * span + h * i as f64).collect()
            }
            Strategy::MaxSlope { window, flanks } => {
                if !(window.is_finite() && *window >= 0.0) {
                    return Err(NoiseError::InvalidPlan("max-slope window must be >= 0".into()));
                }
                let lower = lineshape.flank_max_slope(false, FLANK_REACH);
                let upper = lineshape.flank_max_slope(true, FLANK_REACH);
                let steeper_upper = upper.1.abs() >= lower.1.abs();
                let groups: Vec<(f64, usize)> = match flanks {
                    Flanks::Steepest => vec![(if steeper_upper { upper.0 } else { lower.0 }, self.points)],
                    Flanks::Both => {
                        // an odd point goes to the steeper flank
                        let half = self.points / 2;
                        let extra = self.points - 2 * half;
                        let (nl, nu) = if steeper_upper { (half, half + extra) } else { (half + extra, half) };
                        vec![(lower.0, nl), (upper.0, nu)]
                    }
                };
                let mut out = Vec::with_capacity(self.points);
                for (centre, k) in groups {
                    for j in 0..k {
                        let off = if k == 1 { 0.0 } else { window * (j as f64 / (k - 1) as f64 - 0.5) };
                        out.push(shift + centre + off);
                    }
                }
                out
            }
        };
        check_side(&freqs, lineshape.side)?;
        Ok(freqs)
    }
}

/// Averaged scan: each z_i is the mean of `n_avg` draws of
/// `truth(f_i) + n0`, so z_i ~ Normal(truth(f_i), sigma0^2 / n_avg).
pub fn sample_scan(
    truth: impl Fn(f64) -> f64,
    frequencies: &[f64],
    side: Side,
    n_avg: usize,
    noise: &NoiseSpec,
) -> Result<ScanData, NoiseError> {
    if n_avg < 1 {
        return Err(NoiseError::InvalidSpec("n_avg must be at least 1".into()));
    }
    check_side(frequencies, side)?;
    let draws = noise.draw(frequencies.len() * n_avg);
    let voltages = frequencies
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let y = truth(f);
            let col = &draws[i * n_avg..(i + 1) * n_avg];
            y + col.iter().sum::<f64>() / n_avg as f64
        })
        .collect();
    let mut scan = ScanData::new(frequencies.to_vec(), voltages, n_avg, side)?;
    scan.seed = Some(noise.seed);
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::Axis;

    fn line() -> MarginalCurve {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.2).collect();
        let ys = xs.iter().map(|x| 1.0 - 0.02 * x).collect();
        MarginalCurve::new(Axis::FieldStrength, 0.0, xs, ys).unwrap()
    }

    #[test]
    fn noiseless_idd_is_exact_and_seeded_is_repeatable() {
        let c = line();
        let z = sample_idd(&c, 3.0, 7, &NoiseSpec::new(0.0, 1).unwrap());
        assert!(z.iter().all(|&v| v == c.eval(3.0)));
        let n = NoiseSpec::new(0.01, 99).unwrap();
        assert_eq!(sample_idd(&c, 3.0, 50, &n), sample_idd(&c, 3.0, 50, &n));
        assert_ne!(sample_idd(&c, 3.0, 50, &n), sample_idd(&c, 3.0, 50, &NoiseSpec::new(0.01, 100).unwrap()));
    }

    #[test]
    fn derive_seed_separates_paths() {
        let a = derive_seed(7, &[1, 2]);
        assert_eq!(a, derive_seed(7, &[1, 2]));
        assert_ne!(a, derive_seed(7, &[2, 1]));
        assert_ne!(a, derive_seed(8, &[1, 2]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(7, &[1, 0]));
    }

    #[test]
    fn isd_phase_flip_negates_ac() {
        let c = line();
        let n = NoiseSpec::new(0.0, 0).unwrap();
        let a = sample_isd(&c, 2.0, 0.3, 0.4, 3, 8, &n).unwrap();
        let b = sample_isd(&c, 2.0, 0.3, 0.4 + std::f64::consts::PI, 3, 8, &n).unwrap();
        let dc = c.eval(2.0);
        for (p, q) in a.iter().zip(&b) {
            assert!(((p - dc) + (q - dc)).abs() < 1e-15);
        }
        let flat = sample_isd(&c, 2.0, 0.0, 0.4, 3, 8, &n).unwrap();
        assert!(flat.iter().all(|&v| v == dc));
        assert!(sample_isd(&c, 2.0, 0.3, 0.0, 3, 3, &n).is_err());
    }

    #[test]
    fn uniform_plan_spacing() {
        let l = PeakLineshape::gaussian(Side::Right, [0.25, 0.5, 0.75]).unwrap();
        let f = SamplingPlan::uniform(10, 10.0).frequencies(&l, 7.5).unwrap();
        assert_eq!(f.len(), 10);
        assert!((f[0] - 2.5).abs() < 1e-12 && (f[9] - 12.5).abs() < 1e-12);
        for w in f.windows(2) {
            assert!((w[1] - w[0] - 10.0 / 9.0).abs() < 1e-12);
        }
        let left = PeakLineshape::gaussian(Side::Left, [0.25, 0.5, 0.75]).unwrap();
        assert!(SamplingPlan::uniform(10, 10.0).frequencies(&left, 7.5).is_err());
    }

    #[test]
    fn max_slope_plan_both_flanks() {
        let l = PeakLineshape::gaussian(Side::Right, [0.25, 0.5, 0.75]).unwrap();
        let f = SamplingPlan::max_slope(10, 0.0, Flanks::Both).frequencies(&l, 7.5).unwrap();
        assert_eq!(f.iter().filter(|&&v| (v - 6.5).abs() < 1e-12).count(), 5);
        assert_eq!(f.iter().filter(|&&v| (v - 8.5).abs() < 1e-12).count(), 5);
        let f = SamplingPlan::max_slope(10, 0.0, Flanks::Steepest).frequencies(&l, 7.5).unwrap();
        assert!(f.iter().all(|&v| v == f[0]));
        let f = SamplingPlan::max_slope(4, 0.5, Flanks::Both).frequencies(&l, 7.5).unwrap();
        assert_eq!(f, vec![6.25, 6.75, 8.25, 8.75]);
        let e = SamplingPlan::explicit(vec![3.0, 4.5]).frequencies(&l, 7.5).unwrap();
        assert_eq!(e, vec![3.0, 4.5]);
    }

    #[test]
    fn scan_csv_round_trip() {
        let n = NoiseSpec::new(0.01, 5).unwrap();
        let s = sample_scan(|f| 1.0 / (1.0 + f * f), &[1.0, 2.0, 3.5], Side::Right, 4, &n).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = ScanData::read_csv(&buf[..]).unwrap();
        assert_eq!(back, s);
        assert!(sample_scan(|_| 0.0, &[-1.0], Side::Right, 1, &n).is_err());
    }
}
