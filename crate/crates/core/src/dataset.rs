//! Supervised patterns from simulated trajectories.
//!
//! A trajectory is subsampled, zero-mean Gaussian noise is injected into
//! the two input channels (voltage and current) while the targets (speed,
//! temperature, resistance) stay clean, and all five channels are scaled
//! affinely to [-1, 1]. The whole dataset is a pure function of
//! (trajectory, rate, sigmas, seed, scaler policy).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::motor::{full, Trajectory};
use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid dataset parameters: {0}")]
    Invalid(String),
    #[error("channel {channel} is constant ({value}); cannot fit a scaler")]
    ConstantChannel { channel: &'static str, value: f64 },
    #[error("dataset csv, line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Channel names in storage order: two inputs then three targets.
pub const CHANNELS: [&str; 5] = ["v", "i", "omega", "theta", "r"];
pub const N_INPUTS: usize = 2;
pub const N_TARGETS: usize = 3;

/// One raw (unscaled) record: physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRecord {
    pub t: f64,
    pub v: f64,
    pub i: f64,
    pub omega: f64,
    pub theta: f64,
    pub r: f64,
}

impl RawRecord {
    fn channels(&self) -> [f64; 5] {
        [self.v, self.i, self.omega, self.theta, self.r]
    }
}

/// One normalized supervised pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pattern {
    pub input: [f64; N_INPUTS],
    pub target: [f64; N_TARGETS],
}

/// Per-channel affine map onto [-1, 1], fitted on training data.
///
/// Applying a fitted scaler to data outside the fitted range produces
/// values outside [-1, 1]; they are not clipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaler {
    /// (min, max) per channel, in [`CHANNELS`] order.
    pub ranges: [(f64, f64); 5],
}

impl Scaler {
    /// Fits per-channel min/max. Every channel needs at least two distinct
    /// values; a constant channel is rejected.
    pub fn fit(rows: &[[f64; 5]]) -> Result<Self, DatasetError> {
        if rows.len() < 2 {
            return Err(DatasetError::Invalid(format!(
                "need at least 2 records to fit a scaler, got {}",
                rows.len()
            )));
        }
        let mut ranges = [(f64::INFINITY, f64::NEG_INFINITY); 5];
        for row in rows {
            for (c, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(DatasetError::Invalid(format!(
                        "non-finite value {x} in channel {}",
                        CHANNELS[c]
                    )));
                }
                ranges[c].0 = ranges[c].0.min(x);
                ranges[c].1 = ranges[c].1.max(x);
            }
        }
        for (c, (lo, hi)) in ranges.iter().enumerate() {
            if hi <= lo {
                return Err(DatasetError::ConstantChannel {
                    channel: CHANNELS[c],
                    value: *lo,
                });
            }
        }
        Ok(Self { ranges })
    }

    #[inline]
    pub fn apply1(&self, channel: usize, x: f64) -> f64 {
        let (lo, hi) = self.ranges[channel];
        2.0 * (x - lo) / (hi - lo) - 1.0
    }

    #[inline]
    pub fn invert1(&self, channel: usize, y: f64) -> f64 {
        let (lo, hi) = self.ranges[channel];
        lo + (y + 1.0) * 0.5 * (hi - lo)
    }

    pub fn apply(&self, row: &[f64; 5]) -> [f64; 5] {
        std::array::from_fn(|c| self.apply1(c, row[c]))
    }

    pub fn invert(&self, row: &[f64; 5]) -> [f64; 5] {
        std::array::from_fn(|c| self.invert1(c, row[c]))
    }

    /// `v:min:max;i:min:max;...` with full-precision numbers.
    pub fn spec_string(&self) -> String {
        CHANNELS
            .iter()
            .zip(self.ranges.iter())
            .map(|(name, (lo, hi))| format!("{name}:{}:{}", full(*lo), full(*hi)))
            .collect::<Vec<_>>()
            .join(";")
    }

    pub fn parse_spec(spec: &str) -> Result<Self, DatasetError> {
        let parts: Vec<&str> = spec.trim().split(';').collect();
        if parts.len() != 5 {
            return Err(DatasetError::Invalid(format!(
                "scaler spec needs 5 channels, got {}",
                parts.len()
            )));
        }
        let mut ranges = [(0.0, 0.0); 5];
        for (c, part) in parts.iter().enumerate() {
            let fields: Vec<&str> = part.split(':').collect();
            if fields.len() != 3 || fields[0] != CHANNELS[c] {
                return Err(DatasetError::Invalid(format!(
                    "bad scaler spec for channel {}: {part:?}",
                    CHANNELS[c]
                )));
            }
            let lo: f64 = fields[1]
                .parse()
                .map_err(|_| DatasetError::Invalid(format!("bad scaler min {:?}", fields[1])))?;
            let hi: f64 = fields[2]
                .parse()
                .map_err(|_| DatasetError::Invalid(format!("bad scaler max {:?}", fields[2])))?;
            if !hi.is_finite() || !lo.is_finite() || hi <= lo {
                return Err(DatasetError::Invalid(format!(
                    "scaler channel {} has max <= min",
                    CHANNELS[c]
                )));
            }
            ranges[c] = (lo, hi);
        }
        Ok(Self { ranges })
    }
}

/// Where the scaler of a dataset under construction comes from.
#[derive(Debug, Clone)]
pub enum ScalerPolicy {
    /// Fit on the records being built (after noise injection, so the
    /// noisy training inputs land exactly in [-1, 1]).
    Fit,
    /// Reuse an existing scaler, e.g. the training scaler when building a
    /// matched evaluation set.
    Reuse(Scaler),
}

/// Noise injected into the input channels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Voltage noise standard deviation, V.
    pub sigma_v: f64,
    /// Current noise standard deviation, A.
    pub sigma_i: f64,
    pub seed: u64,
}

/// Adds independent zero-mean Gaussian noise to the voltage and current
/// channels; targets stay clean. The draw for record `k` depends only on
/// `(seed, k)`, so the result is independent of evaluation order.
pub fn add_noise(records: &mut [RawRecord], sigma_v: f64, sigma_i: f64, seed: u64) {
    assert!(
        sigma_v >= 0.0 && sigma_i >= 0.0,
        "noise sigmas must be non-negative"
    );
    for (k, rec) in records.iter_mut().enumerate() {
        rec.v += sigma_v * rng::normal_at(seed, k as u64, 0);
        rec.i += sigma_i * rng::normal_at(seed, k as u64, 1);
    }
}

/// Normalized patterns plus everything needed to reproduce or invert them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub patterns: Vec<Pattern>,
    pub scaler: Scaler,
    pub noise: NoiseConfig,
    /// Identifier of the source trajectory.
    pub source: String,
    /// Sample spacing, s (1 / rate).
    pub sample_dt: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Sample times, derived from the spacing.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let dt = self.sample_dt;
        (0..self.patterns.len()).map(move |k| k as f64 * dt)
    }
}

/// Subsamples `traj` at `rate_hz`, injects input noise, and scales.
///
/// The recording grid must contain the sampling grid: `1/rate_hz` has to
/// be an integer multiple of the trajectory's `record_dt`.
pub fn build_patterns(
    traj: &Trajectory,
    rate_hz: f64,
    noise: &NoiseConfig,
    scaler: ScalerPolicy,
    source: &str,
) -> Result<Dataset, DatasetError> {
    if traj.is_empty() {
        return Err(DatasetError::Invalid("empty trajectory".into()));
    }
    if !rate_hz.is_finite() || rate_hz <= 0.0 {
        return Err(DatasetError::Invalid(format!(
            "rate must be positive, got {rate_hz}"
        )));
    }
    if !(noise.sigma_v.is_finite() && noise.sigma_v >= 0.0)
        || !(noise.sigma_i.is_finite() && noise.sigma_i >= 0.0)
    {
        return Err(DatasetError::Invalid(
            "noise sigmas must be non-negative".into(),
        ));
    }
    let sample_dt = 1.0 / rate_hz;
    let stride = if traj.len() == 1 {
        1
    } else {
        let s = sample_dt / traj.record_dt;
        if s < 1.0 - 1e-9 {
            return Err(DatasetError::Invalid(format!(
                "rate {rate_hz} Hz exceeds the trajectory recording rate {} Hz",
                1.0 / traj.record_dt
            )));
        }
        if (s - s.round()).abs() > 1e-6 {
            return Err(DatasetError::Invalid(format!(
                "sample interval {sample_dt} is not a multiple of record_dt {}",
                traj.record_dt
            )));
        }
        s.round() as usize
    };

    let mut records: Vec<RawRecord> = traj
        .samples
        .iter()
        .step_by(stride)
        .map(|s| RawRecord {
            t: s.t,
            v: s.v_a,
            i: s.i_a,
            omega: s.omega,
            theta: s.theta,
            r: s.resistance,
        })
        .collect();
    add_noise(&mut records, noise.sigma_v, noise.sigma_i, noise.seed);

    let scaler = match scaler {
        ScalerPolicy::Fit => {
            let rows: Vec<[f64; 5]> = records.iter().map(|r| r.channels()).collect();
            Scaler::fit(&rows)?
        }
        ScalerPolicy::Reuse(s) => s,
    };

    let patterns = records
        .iter()
        .map(|r| {
            let scaled = scaler.apply(&r.channels());
            Pattern {
                input: [scaled[0], scaled[1]],
                target: [scaled[2], scaled[3], scaled[4]],
            }
        })
        .collect();

    Ok(Dataset {
        patterns,
        scaler,
        noise: *noise,
        source: source.to_string(),
        sample_dt,
    })
}

/// One train/validation split over pattern indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Deterministic seeded k-fold partition of the dataset indices. Folds are
/// disjoint and their union is the whole index range; `k` equal to the
/// pattern count gives leave-one-out.
pub fn kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>, DatasetError> {
    let n = dataset.len();
    if k < 2 || k > n {
        return Err(DatasetError::Invalid(format!(
            "k must satisfy 2 <= k <= {n}, got {k}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng::SplitMix64::new(seed).shuffle(&mut order);

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let validation: Vec<usize> = order[start..start + size].to_vec();
        let train: Vec<usize> = order[..start]
            .iter()
            .chain(order[start + size..].iter())
            .copied()
            .collect();
        folds.push(Fold { train, validation });
        start += size;
    }
    Ok(folds)
}

const HEADER: &str = "v_norm,i_norm,omega_norm,theta_norm,r_norm";

/// Writes the dataset CSV: `# key=value` metadata lines, the column
/// header, then one normalized pattern per row at full precision.
pub fn write_csv<W: Write>(
    dataset: &Dataset,
    mut w: W,
    comments: &[(String, String)],
) -> Result<(), DatasetError> {
    for (k, v) in comments {
        writeln!(w, "# {k}={v}")?;
    }
    writeln!(w, "# seed={}", dataset.noise.seed)?;
    writeln!(w, "# sigma_v={}", full(dataset.noise.sigma_v))?;
    writeln!(w, "# sigma_i={}", full(dataset.noise.sigma_i))?;
    writeln!(w, "# scaler={}", dataset.scaler.spec_string())?;
    writeln!(w, "# source={}", dataset.source)?;
    writeln!(w, "# sample_dt={}", full(dataset.sample_dt))?;
    writeln!(w, "# generator={}", rng::GENERATOR_ID)?;
    writeln!(w, "{HEADER}")?;
    for p in &dataset.patterns {
        writeln!(
            w,
            "{},{},{},{},{}",
            full(p.input[0]),
            full(p.input[1]),
            full(p.target[0]),
            full(p.target[1]),
            full(p.target[2])
        )?;
    }
    Ok(())
}

pub fn write_csv_file(
    dataset: &Dataset,
    path: &Path,
    comments: &[(String, String)],
) -> Result<(), DatasetError> {
    let mut buf = Vec::new();
    write_csv(dataset, &mut buf, comments)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// Reads a dataset CSV back; exact inverse of [`write_csv`].
pub fn read_csv<R: std::io::Read>(r: R) -> Result<Dataset, DatasetError> {
    let reader = BufReader::new(r);
    let mut seed: Option<u64> = None;
    let mut sigma_v: Option<f64> = None;
    let mut sigma_i: Option<f64> = None;
    let mut scaler: Option<Scaler> = None;
    let mut source = String::new();
    let mut sample_dt: Option<f64> = None;
    let mut saw_header = false;
    let mut patterns = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some((key, value)) = comment.split_once('=') {
                let bad = |what: &str| DatasetError::Csv {
                    line: lineno,
                    msg: format!("bad {what} {value:?}"),
                };
                match key.trim() {
                    "seed" => seed = Some(value.trim().parse().map_err(|_| bad("seed"))?),
                    "sigma_v" => sigma_v = Some(value.trim().parse().map_err(|_| bad("sigma_v"))?),
                    "sigma_i" => sigma_i = Some(value.trim().parse().map_err(|_| bad("sigma_i"))?),
                    "scaler" => {
                        scaler = Some(Scaler::parse_spec(value).map_err(|e| DatasetError::Csv {
                            line: lineno,
                            msg: e.to_string(),
                        })?)
                    }
                    "source" => source = value.trim().to_string(),
                    "sample_dt" => {
                        sample_dt = Some(value.trim().parse().map_err(|_| bad("sample_dt"))?)
                    }
                    _ => {} // unknown metadata is allowed
                }
            }
            continue;
        }
        if !saw_header {
            if trimmed != HEADER {
                return Err(DatasetError::Csv {
                    line: lineno,
                    msg: format!("expected header {HEADER:?}, got {trimmed:?}"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 5 {
            return Err(DatasetError::Csv {
                line: lineno,
                msg: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let mut vals = [0.0; 5];
        for (i, f) in fields.iter().enumerate() {
            vals[i] = f.parse::<f64>().map_err(|_| DatasetError::Csv {
                line: lineno,
                msg: format!("bad number {f:?}"),
            })?;
            if !vals[i].is_finite() {
                return Err(DatasetError::Csv {
                    line: lineno,
                    msg: format!("non-finite value {f:?}"),
                });
            }
        }
        patterns.push(Pattern {
            input: [vals[0], vals[1]],
            target: [vals[2], vals[3], vals[4]],
        });
    }

    let missing = |what: &str| DatasetError::Csv {
        line: 0,
        msg: format!("missing # {what}= line"),
    };
    if patterns.is_empty() {
        return Err(DatasetError::Csv {
            line: 0,
            msg: "no patterns".into(),
        });
    }
    Ok(Dataset {
        patterns,
        scaler: scaler.ok_or_else(|| missing("scaler"))?,
        noise: NoiseConfig {
            sigma_v: sigma_v.ok_or_else(|| missing("sigma_v"))?,
            sigma_i: sigma_i.ok_or_else(|| missing("sigma_i"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
        },
        source,
        sample_dt: sample_dt.ok_or_else(|| missing("sample_dt"))?,
    })
}

pub fn read_csv_file(path: &Path) -> Result<Dataset, DatasetError> {
    read_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motor::{simulate, DriveProfile, MotorParams, MotorState};
    use proptest::prelude::*;

    fn test_trajectory() -> Trajectory {
        // varying voltage so every channel has spread
        let p = MotorParams::calibrated_default();
        let profile = DriveProfile::parse("0:240:7.5;5:180:5.0").unwrap();
        simulate(&p, &profile, 1e-3, 0.1, 10.0, MotorState::REST).unwrap()
    }

    #[test]
    fn zero_sigma_leaves_records_bit_identical() {
        let mut records = vec![
            RawRecord {
                t: 0.0,
                v: 240.0,
                i: 1.5,
                omega: 10.0,
                theta: 2.0,
                r: 3.5,
            },
            RawRecord {
                t: 1.0,
                v: 239.0,
                i: 2.5,
                omega: 20.0,
                theta: 3.0,
                r: 3.6,
            },
        ];
        let before = records.clone();
        add_noise(&mut records, 0.0, 0.0, 42);
        assert_eq!(records, before);
    }

    #[test]
    fn noise_statistics_match_requested_sigma() {
        let n = 100_000;
        let mut records: Vec<RawRecord> = (0..n)
            .map(|k| RawRecord {
                t: k as f64,
                v: 0.0,
                i: 0.0,
                omega: 0.0,
                theta: 0.0,
                r: 0.0,
            })
            .collect();
        let sigma = 2.5;
        add_noise(&mut records, sigma, sigma, 7);
        for channel in [0usize, 1] {
            let xs: Vec<f64> = records
                .iter()
                .map(|r| if channel == 0 { r.v } else { r.i })
                .collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
            assert!(
                (var.sqrt() - sigma).abs() / sigma < 0.02,
                "std {}",
                var.sqrt()
            );
        }
    }

    #[test]
    fn same_seed_gives_bit_identical_noise() {
        let mk = || {
            let mut r = vec![
                RawRecord {
                    t: 0.0,
                    v: 240.0,
                    i: 1.0,
                    omega: 0.0,
                    theta: 0.0,
                    r: 3.5
                };
                64
            ];
            add_noise(&mut r, 1.0, 0.5, 99);
            r
        };
        assert_eq!(mk(), mk());
    }

    #[test]
    fn scaler_midpoint_maps_to_zero() {
        let rows = vec![[0.0, 0.0, 0.0, 0.0, 0.0], [10.0, 1.0, 1.0, 1.0, 1.0]];
        let s = Scaler::fit(&rows).unwrap();
        assert_eq!(s.apply1(0, 5.0), 0.0);
        assert_eq!(s.apply1(0, 0.0), -1.0);
        assert_eq!(s.apply1(0, 10.0), 1.0);
    }

    #[test]
    fn scaler_rejects_constant_channel() {
        let rows = vec![[1.0, 0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0, 1.0]];
        let err = Scaler::fit(&rows);
        assert!(matches!(
            err,
            Err(DatasetError::ConstantChannel { channel: "v", .. })
        ));
    }

    #[test]
    fn scaler_does_not_clip_out_of_range_values() {
        let rows = vec![[0.0; 5], [1.0; 5]];
        let s = Scaler::fit(&rows).unwrap();
        assert_eq!(s.apply1(0, 2.0), 3.0);
        assert_eq!(s.apply1(0, -1.0), -3.0);
    }

    #[test]
    fn scaler_spec_round_trips() {
        let rows = vec![[0.1, -2.0, 3.0, 4.0, 5.0], [1.0, 2.0, 30.0, 40.0, 50.0]];
        let s = Scaler::fit(&rows).unwrap();
        let back = Scaler::parse_spec(&s.spec_string()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn noiseless_build_inverts_to_the_trajectory() {
        let traj = test_trajectory();
        let noise = NoiseConfig {
            sigma_v: 0.0,
            sigma_i: 0.0,
            seed: 1,
        };
        let ds = build_patterns(&traj, 10.0, &noise, ScalerPolicy::Fit, "test").unwrap();
        assert_eq!(ds.len(), traj.len());
        for (p, s) in ds.patterns.iter().zip(traj.samples.iter()) {
            let row = ds.scaler.invert(&[
                p.input[0],
                p.input[1],
                p.target[0],
                p.target[1],
                p.target[2],
            ]);
            assert!((row[0] - s.v_a).abs() < 1e-9);
            assert!((row[1] - s.i_a).abs() < 1e-9);
            assert!((row[2] - s.omega).abs() < 1e-9);
            assert!((row[3] - s.theta).abs() < 1e-9);
            assert!((row[4] - s.resistance).abs() < 1e-9);
        }
    }

    #[test]
    fn pattern_count_is_floor_tend_rate_plus_one() {
        let traj = test_trajectory(); // 10 s recorded at 10 Hz
        for rate in [10.0, 5.0, 2.0, 1.0] {
            let noise = NoiseConfig {
                sigma_v: 0.0,
                sigma_i: 0.0,
                seed: 1,
            };
            let ds = build_patterns(&traj, rate, &noise, ScalerPolicy::Fit, "t").unwrap();
            assert_eq!(ds.len(), (10.0 * rate).floor() as usize + 1, "rate {rate}");
        }
    }

    #[test]
    fn resistance_target_is_affine_in_temperature_target() {
        let traj = test_trajectory();
        let noise = NoiseConfig {
            sigma_v: 0.5,
            sigma_i: 0.1,
            seed: 3,
        };
        let ds = build_patterns(&traj, 10.0, &noise, ScalerPolicy::Fit, "t").unwrap();
        // fit the affine map from the first two patterns, check the rest
        let (t0, r0) = (ds.patterns[0].target[1], ds.patterns[0].target[2]);
        let (t1, r1) = (ds.patterns[1].target[1], ds.patterns[1].target[2]);
        let slope = (r1 - r0) / (t1 - t0);
        for p in &ds.patterns {
            let predicted = r0 + slope * (p.target[1] - t0);
            assert!((p.target[2] - predicted).abs() < 1e-7);
        }
    }

    #[test]
    fn build_rejects_empty_trajectory() {
        let traj = Trajectory {
            samples: vec![],
            record_dt: 1.0,
        };
        let noise = NoiseConfig {
            sigma_v: 0.0,
            sigma_i: 0.0,
            seed: 1,
        };
        let err = build_patterns(&traj, 1.0, &noise, ScalerPolicy::Fit, "t");
        assert!(matches!(err, Err(DatasetError::Invalid(_))));
    }

    #[test]
    fn build_rejects_rate_above_recording_rate() {
        let traj = test_trajectory();
        let noise = NoiseConfig {
            sigma_v: 0.0,
            sigma_i: 0.0,
            seed: 1,
        };
        let err = build_patterns(&traj, 100.0, &noise, ScalerPolicy::Fit, "t");
        assert!(matches!(err, Err(DatasetError::Invalid(_))));
    }

    #[test]
    fn build_is_deterministic_in_the_seed() {
        let traj = test_trajectory();
        let noise = NoiseConfig {
            sigma_v: 1.0,
            sigma_i: 0.2,
            seed: 5,
        };
        let a = build_patterns(&traj, 10.0, &noise, ScalerPolicy::Fit, "t").unwrap();
        let b = build_patterns(&traj, 10.0, &noise, ScalerPolicy::Fit, "t").unwrap();
        assert_eq!(a, b);
        let other = NoiseConfig { seed: 6, ..noise };
        let c = build_patterns(&traj, 10.0, &other, ScalerPolicy::Fit, "t").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn targets_stay_clean_under_noise() {
        let traj = test_trajectory();
        let clean = NoiseConfig {
            sigma_v: 0.0,
            sigma_i: 0.0,
            seed: 1,
        };
        let noisy = NoiseConfig {
            sigma_v: 2.0,
            sigma_i: 0.5,
            seed: 1,
        };
        let ds_clean = build_patterns(&traj, 10.0, &clean, ScalerPolicy::Fit, "t").unwrap();
        let ds_noisy = build_patterns(
            &traj,
            10.0,
            &noisy,
            ScalerPolicy::Reuse(ds_clean.scaler),
            "t",
        )
        .unwrap();
        for (a, b) in ds_clean.patterns.iter().zip(ds_noisy.patterns.iter()) {
            assert_eq!(a.target, b.target);
            assert_ne!(a.input, b.input);
        }
    }

    #[test]
    fn kfold_partitions_and_is_deterministic() {
        let traj = test_trajectory();
        let noise = NoiseConfig {
            sigma_v: 0.0,
            sigma_i: 0.0,
            seed: 1,
        };
        let ds = build_patterns(&traj, 1.0, &noise, ScalerPolicy::Fit, "t").unwrap();
        let folds = kfold(&ds, 4, 9).unwrap();
        assert_eq!(folds, kfold(&ds, 4, 9).unwrap());
        let mut seen = vec![0usize; ds.len()];
        for f in &folds {
            for &i in &f.validation {
                seen[i] += 1;
            }
            let mut all: Vec<usize> = f.train.iter().chain(f.validation.iter()).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
        }
        assert!(
            seen.iter().all(|&c| c == 1),
            "each pattern in exactly one validation fold"
        );
    }

    #[test]
    fn kfold_leave_one_out_and_bad_k() {
        let traj = test_trajectory();
        let noise = NoiseConfig {
            sigma_v: 0.0,
            sigma_i: 0.0,
            seed: 1,
        };
        let ds = build_patterns(&traj, 1.0, &noise, ScalerPolicy::Fit, "t").unwrap();
        let folds = kfold(&ds, ds.len(), 1).unwrap();
        assert!(folds.iter().all(|f| f.validation.len() == 1));
        assert!(kfold(&ds, 1, 1).is_err());
        assert!(kfold(&ds, ds.len() + 1, 1).is_err());
    }

    #[test]
    fn csv_round_trips_exactly() {
        let traj = test_trajectory();
        let noise = NoiseConfig {
            sigma_v: 0.7,
            sigma_i: 0.05,
            seed: 21,
        };
        let ds = build_patterns(&traj, 5.0, &noise, ScalerPolicy::Fit, "traj-xyz").unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf, &[("cfg.example".into(), "1".into())]).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn csv_rejects_header_mismatch_and_nan() {
        let bad_header = "# seed=1\n# sigma_v=0\n# sigma_i=0\n# scaler=v:0:1;i:0:1;omega:0:1;theta:0:1;r:0:1\n# sample_dt=1\nv,i\n";
        assert!(matches!(
            read_csv(bad_header.as_bytes()),
            Err(DatasetError::Csv { .. })
        ));
        let nan_row = "# seed=1\n# sigma_v=0\n# sigma_i=0\n# scaler=v:0:1;i:0:1;omega:0:1;theta:0:1;r:0:1\n# sample_dt=1\nv_norm,i_norm,omega_norm,theta_norm,r_norm\n0,0,NaN,0,0\n";
        assert!(matches!(
            read_csv(nan_row.as_bytes()),
            Err(DatasetError::Csv { line: 7, .. })
        ));
    }

    proptest! {
        #[test]
        fn scaler_round_trip_is_identity(
            lo in -100.0..100.0f64,
            span in 0.1..1000.0f64,
            x in -2000.0..2000.0f64,
        ) {
            let rows = vec![[lo; 5], [lo + span; 5]];
            let s = Scaler::fit(&rows).unwrap();
            let y = s.invert1(0, s.apply1(0, x));
            let scale = x.abs().max(1.0);
            prop_assert!((y - x).abs() / scale < 1e-12);
        }

        #[test]
        fn kfold_is_a_partition_for_any_seed(k in 2usize..8, seed in 0u64..1000) {
            let traj = test_trajectory();
            let noise = NoiseConfig { sigma_v: 0.0, sigma_i: 0.0, seed: 1 };
            let ds = build_patterns(&traj, 1.0, &noise, ScalerPolicy::Fit, "t").unwrap();
            let folds = kfold(&ds, k, seed).unwrap();
            let mut count = vec![0usize; ds.len()];
            for f in &folds {
                for &i in &f.validation { count[i] += 1; }
            }
            prop_assert!(count.iter().all(|&c| c == 1));
        }
    }
}
