//! Lumped electro-thermo-mechanical model of a brushed DC machine.
//!
//! State is the triple (armature current `i_a`, speed `omega`, winding
//! temperature above ambient `theta`). The coupled dynamics are
//!
//! ```text
//! l_a di/dt  = v_a - R(theta) i - k_e w
//! J  dw/dt   = k_e i - b w - T_L
//! H  dth/dt  = R(theta) i^2 + k_ir w^2 - K (1 + KS w) theta
//! ```
//!
//! with `R(theta) = R_a0 (1 + alpha_cu theta)`. All temperatures in this
//! crate are kelvin above ambient; absolute temperatures are never stored.
//!
//! Besides the RK4 integrator the module provides an independent algebraic
//! steady-state solver (used as an oracle for the integrator) and the
//! calibration that fills in the three mechanical constants (`k_e`, `J`,
//! `b`) the nameplate data leaves open.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotorError {
    #[error("invalid motor parameters: {0}")]
    InvalidParams(String),
    #[error("invalid drive profile: {0}")]
    InvalidProfile(String),
    #[error("invalid simulation grid: {0}")]
    InvalidGrid(String),
    #[error("state became non-finite at t = {t} s (step size too large?)")]
    NonFinite { t: f64 },
    #[error("no thermal equilibrium found for v_a = {v_a} V, t_l = {t_l} N.m")]
    NoEquilibrium { v_a: f64, t_l: f64 },
    #[error("steady-state solve did not converge (residual {residual:.3e} per-unit)")]
    NotConverged { residual: f64 },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("trajectory csv, line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Viscous friction default used by the calibration, N.m.s. The
/// steady-state rows cannot pin it (see [`Calibration`]); the value is
/// kept small against the load torque but large enough that the thermal
/// drift leaves a measurable trace in the armature current
/// (`di/dtheta = -b R_a0 alpha_cu i / (R b + k_e^2)` at equilibrium).
pub const DEFAULT_VISCOUS_FRICTION: f64 = 1e-2;

/// Total inertia default used by the calibration, kg.m^2. Chosen so the
/// mechanical settling time (J R / k_e^2, a few tenths of a second) stays
/// far below the thermal settling time (H/K, about an hour).
pub const DEFAULT_INERTIA: f64 = 0.05;

/// Physical constants of the machine.
///
/// `v_rated`, `p_rated`, `tl_rated`, `r_a0` and `l_a` come from the
/// nameplate; `alpha_cu`, `k_ir`, `k_th`, `ks` and `h_th` from the thermal
/// characterization; `k_e`, `j` and `b` from [`calibrate_unstated_params`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    /// Rated armature voltage, V.
    pub v_rated: f64,
    /// Rated power, W.
    pub p_rated: f64,
    /// Rated load torque, N.m.
    pub tl_rated: f64,
    /// Armature resistance at ambient temperature, ohm.
    pub r_a0: f64,
    /// Armature inductance, H.
    pub l_a: f64,
    /// Torque / back-EMF constant, V.s/rad.
    pub k_e: f64,
    /// Total inertia, kg.m^2.
    pub j: f64,
    /// Viscous friction constant, N.m.s.
    pub b: f64,
    /// Temperature coefficient of resistance, 1/K.
    pub alpha_cu: f64,
    /// Iron loss constant, W/(rad/s)^2.
    pub k_ir: f64,
    /// Thermal transfer coefficient at zero speed, W/K.
    pub k_th: f64,
    /// Speed dependence of the thermal transfer coefficient, s/rad.
    pub ks: f64,
    /// Thermal capacity, J/K.
    pub h_th: f64,
}

impl MotorParams {
    /// Nameplate and thermal constants of the studied 3 kW / 240 V machine,
    /// with the three mechanical constants left at zero until calibration.
    fn nameplate() -> Self {
        Self {
            v_rated: 240.0,
            p_rated: 3000.0,
            tl_rated: 11.0,
            r_a0: 3.5,
            l_a: 0.034,
            k_e: 0.0,
            j: 0.0,
            b: 0.0,
            alpha_cu: 0.004,
            k_ir: 0.0041,
            k_th: 4.33,
            ks: 0.0028,
            h_th: 18_000.0,
        }
    }

    /// The default parameter set: nameplate constants plus the calibrated
    /// mechanical constants for the documented operating point.
    pub fn calibrated_default() -> Self {
        let base = Self::nameplate();
        let cal = calibrate_unstated_params(&base, &CalibrationTargets::default())
            .expect("default calibration targets are consistent");
        cal.apply_to(base)
    }

    pub fn validate(&self) -> Result<(), MotorError> {
        let fields = [
            ("v_rated", self.v_rated),
            ("p_rated", self.p_rated),
            ("tl_rated", self.tl_rated),
            ("r_a0", self.r_a0),
            ("l_a", self.l_a),
            ("k_e", self.k_e),
            ("j", self.j),
            ("b", self.b),
            ("alpha_cu", self.alpha_cu),
            ("k_ir", self.k_ir),
            ("k_th", self.k_th),
            ("ks", self.ks),
            ("h_th", self.h_th),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v <= 0.0 {
                return Err(MotorError::InvalidParams(format!(
                    "{name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Armature resistance at temperature rise `theta`:
    /// `R = R_a0 (1 + alpha_cu theta)`.
    ///
    /// Panics on non-finite `theta` or when `alpha_cu * theta <= -1`
    /// (resistance would not be positive).
    #[inline]
    pub fn resistance_at(&self, theta: f64) -> f64 {
        assert!(theta.is_finite(), "resistance_at: theta must be finite");
        let r = self.r_a0 * (1.0 + self.alpha_cu * theta);
        assert!(r > 0.0, "resistance_at: alpha_cu * theta <= -1");
        r
    }

    /// Copper plus iron losses: `R(theta) i^2 + k_ir w^2`, W.
    #[inline]
    pub fn power_losses(&self, s: &MotorState) -> f64 {
        self.resistance_at(s.theta) * s.i_a * s.i_a + self.k_ir * s.omega * s.omega
    }

    /// Heat flow to the cooling air: `K (1 + KS w) theta`, W.
    #[inline]
    pub fn heat_dissipation(&self, s: &MotorState) -> f64 {
        self.k_th * (1.0 + self.ks * s.omega) * s.theta
    }

    /// Time derivatives of the full state for the given terminal inputs.
    #[inline]
    pub fn derivative(&self, s: &MotorState, v_a: f64, t_l: f64) -> StateRates {
        let r = self.resistance_at(s.theta);
        StateRates {
            di_a: (v_a - r * s.i_a - self.k_e * s.omega) / self.l_a,
            domega: (self.k_e * s.i_a - self.b * s.omega - t_l) / self.j,
            dtheta: (self.power_losses(s) - self.heat_dissipation(s)) / self.h_th,
        }
    }

    /// Base current `P / V` used for per-unit comparisons, A.
    pub fn current_base(&self) -> f64 {
        self.p_rated / self.v_rated
    }

    /// Base speed `V / k_e`, rad/s.
    pub fn speed_base(&self) -> f64 {
        self.v_rated / self.k_e
    }

    /// Base temperature rise `P / K`, K.
    pub fn temp_base(&self) -> f64 {
        self.p_rated / self.k_th
    }

    /// Largest componentwise per-unit difference between two states.
    pub fn state_diff_pu(&self, a: &MotorState, b: &MotorState) -> f64 {
        let di = (a.i_a - b.i_a).abs() / self.current_base();
        let dw = (a.omega - b.omega).abs() / self.speed_base();
        let dt = (a.theta - b.theta).abs() / self.temp_base();
        di.max(dw).max(dt)
    }

    /// Per-unit residual of the three equilibrium rows at `s`. Zero exactly
    /// at a steady state.
    pub fn equilibrium_residual_pu(&self, s: &MotorState, v_a: f64, t_l: f64) -> f64 {
        let r = self.resistance_at(s.theta);
        let g_elec = (v_a - r * s.i_a - self.k_e * s.omega).abs() / self.v_rated;
        let g_mech = (self.k_e * s.i_a - self.b * s.omega - t_l).abs() / self.tl_rated;
        let g_therm = (self.power_losses(s) - self.heat_dissipation(s)).abs() / self.p_rated;
        g_elec.max(g_mech).max(g_therm)
    }

    /// Upper bound on accepted RK4 step sizes: a quarter of the cold
    /// electrical time constant. The linear stability limit is near
    /// 2.78 l_a / R, so this leaves an order of magnitude of margin for
    /// resistance growth with temperature.
    pub fn max_stable_dt(&self) -> f64 {
        0.25 * self.l_a / self.r_a0
    }
}

/// Instantaneous machine state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorState {
    /// Armature current, A.
    pub i_a: f64,
    /// Armature speed, rad/s.
    pub omega: f64,
    /// Winding temperature above ambient, K.
    pub theta: f64,
}

impl MotorState {
    pub const REST: MotorState = MotorState {
        i_a: 0.0,
        omega: 0.0,
        theta: 0.0,
    };

    pub fn is_finite(&self) -> bool {
        self.i_a.is_finite() && self.omega.is_finite() && self.theta.is_finite()
    }
}

/// Time derivatives of [`MotorState`].
#[derive(Debug, Clone, Copy)]
pub struct StateRates {
    pub di_a: f64,
    pub domega: f64,
    pub dtheta: f64,
}

#[inline]
fn advance(s: &MotorState, r: &StateRates, h: f64) -> MotorState {
    MotorState {
        i_a: s.i_a + h * r.di_a,
        omega: s.omega + h * r.domega,
        theta: s.theta + h * r.dtheta,
    }
}

/// One classical 4th-order Runge-Kutta step with the terminal inputs held
/// constant over the step.
pub fn rk4_step(
    p: &MotorParams,
    s: &MotorState,
    v_a: f64,
    t_l: f64,
    dt: f64,
) -> Result<MotorState, MotorError> {
    let k1 = p.derivative(s, v_a, t_l);
    let k2 = p.derivative(&advance(s, &k1, dt / 2.0), v_a, t_l);
    let k3 = p.derivative(&advance(s, &k2, dt / 2.0), v_a, t_l);
    let k4 = p.derivative(&advance(s, &k3, dt), v_a, t_l);
    let next = MotorState {
        i_a: s.i_a + dt / 6.0 * (k1.di_a + 2.0 * k2.di_a + 2.0 * k3.di_a + k4.di_a),
        omega: s.omega + dt / 6.0 * (k1.domega + 2.0 * k2.domega + 2.0 * k3.domega + k4.domega),
        theta: s.theta + dt / 6.0 * (k1.dtheta + 2.0 * k2.dtheta + 2.0 * k3.dtheta + k4.dtheta),
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(MotorError::NonFinite { t: f64::NAN })
    }
}

/// One segment of a piecewise-constant drive schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSegment {
    /// Segment start time, s.
    pub t_start: f64,
    /// Armature voltage over the segment, V.
    pub v_a: f64,
    /// Load torque over the segment, N.m.
    pub t_l: f64,
}

/// Piecewise-constant (voltage, load) schedule. A continuous-duty (S1) run
/// is a single segment held long enough to reach thermal equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveProfile {
    pub segments: Vec<ProfileSegment>,
}

impl DriveProfile {
    /// Single-segment schedule starting at t = 0.
    pub fn constant(v_a: f64, t_l: f64) -> Self {
        Self {
            segments: vec![ProfileSegment {
                t_start: 0.0,
                v_a,
                t_l,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), MotorError> {
        if self.segments.is_empty() {
            return Err(MotorError::InvalidProfile("profile has no segments".into()));
        }
        if self.segments[0].t_start != 0.0 {
            return Err(MotorError::InvalidProfile(format!(
                "first segment must start at t = 0, got {}",
                self.segments[0].t_start
            )));
        }
        for pair in self.segments.windows(2) {
            if pair[1].t_start <= pair[0].t_start {
                return Err(MotorError::InvalidProfile(format!(
                    "segment times must be strictly increasing ({} then {})",
                    pair[0].t_start, pair[1].t_start
                )));
            }
        }
        for seg in &self.segments {
            if !seg.t_start.is_finite() || !seg.v_a.is_finite() || !seg.t_l.is_finite() {
                return Err(MotorError::InvalidProfile(
                    "segment values must be finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// Inputs at time `t` (right-continuous lookup).
    pub fn inputs_at(&self, t: f64) -> (f64, f64) {
        let mut active = &self.segments[0];
        for seg in &self.segments {
            if seg.t_start <= t {
                active = seg;
            } else {
                break;
            }
        }
        (active.v_a, active.t_l)
    }

    /// Parses `"t:v:tl;t:v:tl;..."`.
    pub fn parse(spec: &str) -> Result<Self, MotorError> {
        let mut segments = Vec::new();
        for (i, part) in spec.split(';').enumerate() {
            let fields: Vec<&str> = part.trim().split(':').collect();
            if fields.len() != 3 {
                return Err(MotorError::InvalidProfile(format!(
                    "segment {i}: expected t:v:tl, got {part:?}"
                )));
            }
            let parse = |s: &str, what: &str| -> Result<f64, MotorError> {
                s.trim().parse::<f64>().map_err(|_| {
                    MotorError::InvalidProfile(format!("segment {i}: bad {what} {s:?}"))
                })
            };
            segments.push(ProfileSegment {
                t_start: parse(fields[0], "time")?,
                v_a: parse(fields[1], "voltage")?,
                t_l: parse(fields[2], "torque")?,
            });
        }
        let profile = Self { segments };
        profile.validate()?;
        Ok(profile)
    }

    pub fn spec_string(&self) -> String {
        self.segments
            .iter()
            .map(|s| format!("{}:{}:{}", s.t_start, s.v_a, s.t_l))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// One recorded trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub v_a: f64,
    pub i_a: f64,
    pub omega: f64,
    pub theta: f64,
    pub resistance: f64,
}

/// Time-stamped simulation output on a uniform recording grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Spacing of the recorded samples, s.
    pub record_dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> &TrajectorySample {
        self.samples.last().expect("trajectory is never empty")
    }

    const HEADER: &'static str = "t,v_a,i_a,omega,theta,resistance";

    /// Writes the trajectory as CSV with 17 significant digits so a
    /// downstream read reproduces every f64 bit-exactly. `comments` are
    /// emitted first as `# key=value` lines.
    pub fn write_csv<W: Write>(
        &self,
        mut w: W,
        comments: &[(String, String)],
    ) -> Result<(), MotorError> {
        for (k, v) in comments {
            writeln!(w, "# {k}={v}")?;
        }
        writeln!(w, "# record_dt={}", full(self.record_dt))?;
        writeln!(w, "{}", Self::HEADER)?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                full(s.t),
                full(s.v_a),
                full(s.i_a),
                full(s.omega),
                full(s.theta),
                full(s.resistance)
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(
        &self,
        path: &Path,
        comments: &[(String, String)],
    ) -> Result<(), MotorError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, comments)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self, MotorError> {
        let reader = BufReader::new(r);
        let mut samples = Vec::new();
        let mut saw_header = false;
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            if !saw_header {
                if trimmed != Self::HEADER {
                    return Err(MotorError::Csv {
                        line: lineno,
                        msg: format!("expected header {:?}, got {trimmed:?}", Self::HEADER),
                    });
                }
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 6 {
                return Err(MotorError::Csv {
                    line: lineno,
                    msg: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let mut vals = [0.0; 6];
            for (i, f) in fields.iter().enumerate() {
                vals[i] = f.parse::<f64>().map_err(|_| MotorError::Csv {
                    line: lineno,
                    msg: format!("bad number {f:?}"),
                })?;
                if !vals[i].is_finite() {
                    return Err(MotorError::Csv {
                        line: lineno,
                        msg: format!("non-finite value {f:?}"),
                    });
                }
            }
            samples.push(TrajectorySample {
                t: vals[0],
                v_a: vals[1],
                i_a: vals[2],
                omega: vals[3],
                theta: vals[4],
                resistance: vals[5],
            });
        }
        if samples.is_empty() {
            return Err(MotorError::Csv {
                line: 0,
                msg: "no samples".into(),
            });
        }
        let record_dt = if samples.len() > 1 {
            samples[1].t - samples[0].t
        } else {
            0.0
        };
        Ok(Self { samples, record_dt })
    }

    pub fn read_csv_file(path: &Path) -> Result<Self, MotorError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// 17-significant-digit decimal for an f64; reads back bit-exactly.
pub(crate) fn full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Integrates the machine from `init` over `profile`, recording a sample
/// every `record_dt` seconds up to `t_end` (inclusive). `record_dt` must be
/// an integer multiple of `dt` and `dt` must respect the electrical
/// stability bound.
pub fn simulate(
    p: &MotorParams,
    profile: &DriveProfile,
    dt: f64,
    record_dt: f64,
    t_end: f64,
    init: MotorState,
) -> Result<Trajectory, MotorError> {
    p.validate()?;
    profile.validate()?;
    if !dt.is_finite() || dt <= 0.0 {
        return Err(MotorError::InvalidGrid(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if dt > p.max_stable_dt() {
        return Err(MotorError::InvalidGrid(format!(
            "dt = {dt} exceeds the stability bound {:.3e} (l_a / (4 r_a0))",
            p.max_stable_dt()
        )));
    }
    if !t_end.is_finite() || t_end < 0.0 {
        return Err(MotorError::InvalidGrid(format!(
            "t_end must be non-negative, got {t_end}"
        )));
    }
    let steps_per_record = record_dt / dt;
    if !record_dt.is_finite()
        || record_dt <= 0.0
        || (steps_per_record - steps_per_record.round()).abs() > 1e-6
    {
        return Err(MotorError::InvalidGrid(format!(
            "record_dt = {record_dt} must be a positive integer multiple of dt = {dt}"
        )));
    }
    let steps_per_record = steps_per_record.round() as u64;
    let n_records = (t_end / record_dt + 1e-9).floor() as u64;

    let mut s = init;
    let sample = |t: f64, s: &MotorState, p: &MotorParams, profile: &DriveProfile| {
        let (v_a, _) = profile.inputs_at(t);
        TrajectorySample {
            t,
            v_a,
            i_a: s.i_a,
            omega: s.omega,
            theta: s.theta,
            resistance: p.resistance_at(s.theta),
        }
    };
    let mut samples = Vec::with_capacity(n_records as usize + 1);
    samples.push(sample(0.0, &s, p, profile));
    for k_rec in 1..=n_records {
        let base = (k_rec - 1) * steps_per_record;
        for j in 0..steps_per_record {
            let t = (base + j) as f64 * dt;
            let (v_a, t_l) = profile.inputs_at(t);
            s = rk4_step(p, &s, v_a, t_l, dt).map_err(|_| MotorError::NonFinite { t })?;
        }
        samples.push(sample(k_rec as f64 * record_dt, &s, p, profile));
    }
    Ok(Trajectory { samples, record_dt })
}

/// Solves the equilibrium of the three state equations for constant
/// inputs, independently of the integrator.
///
/// For a fixed temperature the electrical and mechanical rows are linear
/// in (i, w); eliminating them leaves a scalar heat-balance residual in
/// theta whose first root from theta = 0 is bracketed and bisected to
/// machine precision. The result is polished against a per-unit residual
/// bound of 1e-10.
pub fn steady_state(p: &MotorParams, v_a: f64, t_l: f64) -> Result<MotorState, MotorError> {
    p.validate()?;
    if !v_a.is_finite() || !t_l.is_finite() {
        return Err(MotorError::InvalidParams("inputs must be finite".into()));
    }

    // (i, w) solving the electrical and mechanical rows at temperature theta.
    let electromech = |theta: f64| -> (f64, f64) {
        let r = p.resistance_at(theta);
        let den = r * p.b + p.k_e * p.k_e;
        let i = (v_a * p.b + p.k_e * t_l) / den;
        let w = (p.k_e * v_a - r * t_l) / den;
        (i, w)
    };
    // Net heating at the electromechanical equilibrium for this theta.
    let heat_residual = |theta: f64| -> f64 {
        let (i, w) = electromech(theta);
        let r = p.resistance_at(theta);
        r * i * i + p.k_ir * w * w - p.k_th * (1.0 + p.ks * w) * theta
    };

    let f0 = heat_residual(0.0);
    let mut lo = 0.0;
    let mut hi;
    if f0 == 0.0 {
        hi = 0.0;
    } else {
        // Losses at theta = 0 are non-negative, so the residual starts >= 0;
        // expand until the cooling term dominates.
        hi = p.temp_base().max(1.0);
        let mut expansions = 0;
        while heat_residual(hi) > 0.0 {
            hi *= 2.0;
            expansions += 1;
            if expansions > 60 || !hi.is_finite() {
                return Err(MotorError::NoEquilibrium { v_a, t_l });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if heat_residual(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let theta = 0.5 * (lo + hi);
    let (i_a, omega) = electromech(theta);
    let state = MotorState { i_a, omega, theta };
    let residual = p.equilibrium_residual_pu(&state, v_a, t_l);
    if residual < 1e-10 {
        Ok(state)
    } else {
        Err(MotorError::NotConverged { residual })
    }
}

/// Target operating point for the calibration, plus the assumed values of
/// the two constants the steady-state rows cannot determine.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationTargets {
    /// Steady-state speed, rad/s.
    pub omega: f64,
    /// Steady-state temperature rise, K.
    pub theta: f64,
    /// Assumed viscous friction, N.m.s.
    pub b: f64,
    /// Assumed total inertia, kg.m^2.
    pub j: f64,
}

impl Default for CalibrationTargets {
    /// The documented operating point of the studied machine: a hot
    /// resistance of 4.60 ohm (theta = (4.60/3.5 - 1)/0.004) at 224 rad/s.
    fn default() -> Self {
        Self {
            omega: 224.0,
            theta: (4.60 / 3.5 - 1.0) / 0.004,
            b: DEFAULT_VISCOUS_FRICTION,
            j: DEFAULT_INERTIA,
        }
    }
}

/// Output of [`calibrate_unstated_params`]: the three mechanical constants
/// plus the implied operating values, echoed into run reports.
#[derive(Debug, Clone, Copy)]
pub struct Calibration {
    pub k_e: f64,
    pub j: f64,
    pub b: f64,
    /// Steady-state armature current at the target point, A.
    pub i_star: f64,
    /// Load torque that holds the machine at the target point, N.m.
    pub t_l: f64,
    /// Hot resistance at the target point, ohm.
    pub r_star: f64,
    pub omega_star: f64,
    pub theta_star: f64,
}

impl Calibration {
    pub fn apply_to(&self, mut p: MotorParams) -> MotorParams {
        p.k_e = self.k_e;
        p.j = self.j;
        p.b = self.b;
        p
    }

    /// The continuous-duty run that holds the calibrated operating point.
    pub fn s1_profile(&self, p: &MotorParams) -> DriveProfile {
        DriveProfile::constant(p.v_rated, self.t_l)
    }
}

impl fmt::Display for Calibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "calibration:")?;
        writeln!(f, "  target speed        = {:.6} rad/s", self.omega_star)?;
        writeln!(f, "  target temp rise    = {:.6} K", self.theta_star)?;
        writeln!(f, "  hot resistance      = {:.6} ohm", self.r_star)?;
        writeln!(f, "  implied current     = {:.6} A", self.i_star)?;
        writeln!(f, "  k_e (calibrated)    = {:.9} V.s/rad", self.k_e)?;
        writeln!(f, "  b   (assumed)       = {:.9} N.m.s", self.b)?;
        writeln!(f, "  J   (assumed)       = {:.9} kg.m^2", self.j)?;
        write!(f, "  s1 load torque      = {:.9} N.m", self.t_l)
    }
}

/// Determines `k_e` from the electrical steady-state row at the target
/// point, takes `b` and `J` from the documented defaults in `targets`, and
/// reports the load torque that makes the mechanical row consistent.
///
/// The nameplate values over-constrain the three rows (no non-negative `b`
/// satisfies all of them with the rated load), so the electrical and
/// thermal rows are honored exactly and the load torque is relaxed; every
/// chosen value is carried in the returned [`Calibration`] for the run
/// report. Only the stated constants of `p` are read; `p.k_e`, `p.j` and
/// `p.b` are ignored.
pub fn calibrate_unstated_params(
    p: &MotorParams,
    targets: &CalibrationTargets,
) -> Result<Calibration, MotorError> {
    if !(targets.omega.is_finite() && targets.omega > 0.0)
        || !(targets.theta.is_finite() && targets.theta > 0.0)
    {
        return Err(MotorError::Calibration(format!(
            "target point must have positive speed and temperature, got ({}, {})",
            targets.omega, targets.theta
        )));
    }
    let r_star = p.r_a0 * (1.0 + p.alpha_cu * targets.theta);
    let cooling = p.k_th * (1.0 + p.ks * targets.omega) * targets.theta;
    let copper = cooling - p.k_ir * targets.omega * targets.omega;
    if copper <= 0.0 {
        return Err(MotorError::Calibration(format!(
            "thermal row leaves no copper losses at the target point ({copper} W)"
        )));
    }
    let i_star = (copper / r_star).sqrt();
    let k_e = (p.v_rated - r_star * i_star) / targets.omega;
    if k_e <= 0.0 {
        return Err(MotorError::Calibration(format!(
            "target point forces non-positive k_e = {k_e}"
        )));
    }
    let t_l = k_e * i_star - targets.b * targets.omega;
    if t_l < 0.0 {
        return Err(MotorError::Calibration(format!(
            "target point forces negative load torque {t_l}"
        )));
    }
    Ok(Calibration {
        k_e,
        j: targets.j,
        b: targets.b,
        i_star,
        t_l,
        r_star,
        omega_star: targets.omega,
        theta_star: targets.theta,
    })
}
