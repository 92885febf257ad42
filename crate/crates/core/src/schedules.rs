//! Drive schedules: piecewise-linear protocol families, smooth adiabatic base
//! functions with graph-dependent counterdiabatic corrections, hardness-
//! parametrized schedule models, and hardware discretization.
//!
//! Every emitted schedule obeys the adiabatic boundary conditions:
//! `Omega(0) = Omega(t_f) = 0` exactly, `Delta(0) <= -delta_noise` and
//! `Delta(t_f) > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::UnitDiskGraph;
use crate::hamiltonian::{DriveSample, PhysicalConstants};

/// Samples per sweep when scanning a smooth drive for its maximum.
const CD_SCAN_SAMPLES: usize = 2001;
/// Rescale bisection tolerance on the drive maximum (MHz).
const KAPPA_TOL_MHZ: f64 = 1e-4;
/// Interpolation strength of the generalized gauge potential in the
/// infinite-hardness limit (MHz).
pub const CD_NU_LIMIT: f64 = 4.30;

/// Linear interpolation through strictly increasing breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearCurve {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseLinearCurve {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "piecewise-linear curve needs at least two matching breakpoints, got {} times and {} values",
                times.len(),
                values.len()
            )));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "piecewise-linear curve must start at t = 0, got {}",
                times[0]
            )));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidInput("breakpoint times must be strictly increasing".into()));
        }
        Ok(PiecewiseLinearCurve { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Interpolated value; evaluation outside `[0, t_f]` is an error.
    pub fn value(&self, t: f64) -> Result<f64> {
        let t_f = self.end_time();
        if !((-1e-12..=t_f * (1.0 + 1e-12) + 1e-12).contains(&t)) {
            return Err(Error::InvalidInput(format!(
                "curve evaluated at t = {t} outside [0, {t_f}]"
            )));
        }
        Ok(self.value_clamped(t))
    }

    pub(crate) fn value_clamped(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, self.end_time());
        // exact at breakpoints
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => self.values[i],
            Err(i) => {
                let (t0, t1) = (self.times[i - 1], self.times[i]);
                let (v0, v1) = (self.values[i - 1], self.values[i]);
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// Four-parameter linear protocol: trapezoidal Rabi amplitude and one
/// detuning ramp over the whole evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lin4Params {
    pub tau_i_us: f64,
    pub tau_f_us: f64,
    pub delta_i_mhz: f64,
    pub delta_f_mhz: f64,
}

/// Six-parameter linear protocol: as [`Lin4Params`] plus an interior detuning
/// knot at `(tau_m, delta_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lin6Params {
    pub tau_i_us: f64,
    pub tau_f_us: f64,
    pub delta_i_mhz: f64,
    pub tau_m_us: f64,
    pub delta_m_mhz: f64,
    pub delta_f_mhz: f64,
}

/// Counterdiabatic protocol parameters; `nu` interpolates between the
/// interaction-free gauge potential (0) and the fully graph-dependent one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdParams {
    pub delta_i_mhz: f64,
    pub delta_f_mhz: f64,
    pub nu_mhz: f64,
}

/// Protocol family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolFamily {
    Lin4,
    Lin6,
    Cd,
    Hardware,
    Custom,
}

impl ProtocolFamily {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lin4" => Ok(ProtocolFamily::Lin4),
            "lin6" => Ok(ProtocolFamily::Lin6),
            "cd" => Ok(ProtocolFamily::Cd),
            other => Err(Error::InvalidInput(format!(
                "unknown protocol {other:?}; expected lin4, lin6 or cd"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ProtocolFamily::Lin4 => "lin4",
            ProtocolFamily::Lin6 => "lin6",
            ProtocolFamily::Cd => "cd",
            ProtocolFamily::Hardware => "hardware",
            ProtocolFamily::Custom => "custom",
        }
    }

    /// Canonical free-parameter order of the family.
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            ProtocolFamily::Lin4 => &["tau_i", "tau_f", "delta_i", "delta_f"],
            ProtocolFamily::Lin6 => &["tau_i", "tau_f", "delta_i", "tau_m", "delta_m", "delta_f"],
            ProtocolFamily::Cd => &["delta_i", "delta_f", "nu"],
            ProtocolFamily::Hardware | ProtocolFamily::Custom => &[],
        }
    }
}

/// Parameters of one protocol family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProtocolParams {
    Lin4(Lin4Params),
    Lin6(Lin6Params),
    Cd(CdParams),
}

impl ProtocolParams {
    pub fn family(&self) -> ProtocolFamily {
        match self {
            ProtocolParams::Lin4(_) => ProtocolFamily::Lin4,
            ProtocolParams::Lin6(_) => ProtocolFamily::Lin6,
            ProtocolParams::Cd(_) => ProtocolFamily::Cd,
        }
    }

    /// Flatten in the family's canonical order.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            ProtocolParams::Lin4(p) => vec![p.tau_i_us, p.tau_f_us, p.delta_i_mhz, p.delta_f_mhz],
            ProtocolParams::Lin6(p) => vec![
                p.tau_i_us,
                p.tau_f_us,
                p.delta_i_mhz,
                p.tau_m_us,
                p.delta_m_mhz,
                p.delta_f_mhz,
            ],
            ProtocolParams::Cd(p) => vec![p.delta_i_mhz, p.delta_f_mhz, p.nu_mhz],
        }
    }

    pub fn from_vec(family: ProtocolFamily, v: &[f64]) -> Result<Self> {
        let expect = family.param_names().len();
        if v.len() != expect {
            return Err(Error::Inconsistent {
                context: "protocol parameter count",
                expected: expect,
                got: v.len(),
            });
        }
        Ok(match family {
            ProtocolFamily::Lin4 => ProtocolParams::Lin4(Lin4Params {
                tau_i_us: v[0],
                tau_f_us: v[1],
                delta_i_mhz: v[2],
                delta_f_mhz: v[3],
            }),
            ProtocolFamily::Lin6 => ProtocolParams::Lin6(Lin6Params {
                tau_i_us: v[0],
                tau_f_us: v[1],
                delta_i_mhz: v[2],
                tau_m_us: v[3],
                delta_m_mhz: v[4],
                delta_f_mhz: v[5],
            }),
            ProtocolFamily::Cd => ProtocolParams::Cd(CdParams {
                delta_i_mhz: v[0],
                delta_f_mhz: v[1],
                nu_mhz: v[2],
            }),
            ProtocolFamily::Hardware | ProtocolFamily::Custom => {
                return Err(Error::InvalidInput("this schedule family has no free parameters".into()))
            }
        })
    }
}

/// Smooth adiabatic base functions and their analytic time derivatives.
///
/// `Omega_ad(t) = Omega_max sin^2((pi/2) sin(theta))` and
/// `Delta_ad(t) = (Delta_i+Delta_f)/2 + ((Delta_i-Delta_f)/2) cos(theta)`
/// with `theta = pi t / t_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdBase {
    pub omega_max: f64,
    pub delta_i: f64,
    pub delta_f: f64,
    pub t_f: f64,
}

/// Values of the base functions at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdBaseSample {
    pub omega_ad: f64,
    pub domega_ad: f64,
    pub delta_ad: f64,
    pub ddelta_ad: f64,
}

impl CdBase {
    pub fn eval(&self, t: f64) -> CdBaseSample {
        // Exact zeros at the endpoints so the boundary conditions hold
        // without floating-point residue from sin(pi).
        if t <= 0.0 {
            return CdBaseSample { omega_ad: 0.0, domega_ad: 0.0, delta_ad: self.delta_i, ddelta_ad: 0.0 };
        }
        if t >= self.t_f {
            return CdBaseSample { omega_ad: 0.0, domega_ad: 0.0, delta_ad: self.delta_f, ddelta_ad: 0.0 };
        }
        let rate = std::f64::consts::PI / self.t_f;
        let theta = rate * t;
        let (sin_t, cos_t) = theta.sin_cos();
        let half_pi_sin = std::f64::consts::FRAC_PI_2 * sin_t;
        let s = half_pi_sin.sin();
        let omega_ad = self.omega_max * s * s;
        let domega_ad =
            self.omega_max * (2.0 * half_pi_sin).sin() * std::f64::consts::FRAC_PI_2 * cos_t * rate;
        let mid = 0.5 * (self.delta_i + self.delta_f);
        let amp = 0.5 * (self.delta_i - self.delta_f);
        let delta_ad = mid + amp * cos_t;
        let ddelta_ad = -amp * rate * sin_t;
        CdBaseSample { omega_ad, domega_ad, delta_ad, ddelta_ad }
    }
}

/// Construct the smooth adiabatic base functions.
pub fn cd_base(delta_i: f64, delta_f: f64, t_f: f64, omega_max: f64) -> CdBase {
    CdBase { omega_max, delta_i, delta_f, t_f }
}

/// Normalized interaction traces of a graph at unit nearest-neighbor
/// strength. Dimensionless and independent of the lattice spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphTraces {
    pub t1_0: f64,
    pub t2_0: f64,
}

fn traces_with_weights(graph: &UnitDiskGraph, weight: impl Fn(i64) -> f64) -> GraphTraces {
    let n = graph.order();
    let sites = graph.sites();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                w[i * n + j] = weight(sites[i].dist2(&sites[j]));
            }
        }
    }
    let mut t1 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            t1 += w[i * n + j];
        }
    }
    let mut t2 = 0.0;
    for i in 0..n {
        for j in i..n {
            for k in 0..n {
                if k != i && k != j {
                    t2 += w[i * n + k] * w[k * n + j];
                }
            }
        }
    }
    GraphTraces { t1_0: t1 / n as f64, t2_0: 0.5 * t2 / n as f64 }
}

/// Traces with the physical `1/d^6` pair weights evaluated at `V0 = 1`:
/// `N T1 = sum_{i<j} v_ij` and `N T2 = (1/2) sum_{i<=j} sum_{k!=i,j} v_ik v_kj`.
pub fn graph_traces(graph: &UnitDiskGraph) -> GraphTraces {
    traces_with_weights(graph, |d2| {
        let d2 = d2 as f64;
        1.0 / (d2 * d2 * d2)
    })
}

/// Traces with adjacency weights instead of interactions; `T1` is then exactly
/// half the mean degree.
pub fn adjacency_traces(graph: &UnitDiskGraph) -> GraphTraces {
    traces_with_weights(graph, |d2| if d2 <= 2 { 1.0 } else { 0.0 })
}

/// Counterdiabatic drive: base functions, rescale factor and gauge strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdDrive {
    pub base: CdBase,
    pub kappa: f64,
    pub nu: f64,
    pub t1_0: f64,
    pub t2_0: f64,
}

impl CdDrive {
    /// `(Omega_tilde, Delta_ad, phi_tilde)` at time `t`.
    fn sample(&self, t: f64) -> (f64, f64, f64) {
        let (omega_cd, s) = self.omega_cd(t);
        let omega_ad = self.kappa * s.omega_ad;
        let omega = omega_ad.hypot(omega_cd);
        let phi = if omega_ad == 0.0 && omega_cd == 0.0 {
            0.0
        } else {
            omega_cd.atan2(omega_ad)
        };
        (omega, s.delta_ad, phi)
    }

    /// Gauge strength at time `t`, with the kappa-scaled base functions.
    fn omega_cd(&self, t: f64) -> (f64, CdBaseSample) {
        let s = self.base.eval(t);
        let omega_ad = self.kappa * s.omega_ad;
        let domega_ad = self.kappa * s.domega_ad;
        let t1 = self.t1_0 * self.nu;
        let t2 = self.t2_0 * self.nu * self.nu;
        let num = omega_ad * s.ddelta_ad - domega_ad * s.delta_ad + domega_ad * t1;
        let den = omega_ad * omega_ad + s.delta_ad * s.delta_ad - 2.0 * s.delta_ad * t1 + t2;
        (num / den, s)
    }

    fn denominator(&self, t: f64) -> f64 {
        let s = self.base.eval(t);
        let omega_ad = self.kappa * s.omega_ad;
        let t1 = self.t1_0 * self.nu;
        let t2 = self.t2_0 * self.nu * self.nu;
        omega_ad * omega_ad + s.delta_ad * s.delta_ad - 2.0 * s.delta_ad * t1 + t2
    }
}

/// A time-dependent drive triple `(Omega, Delta, phi)` with its family tag and
/// originating parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    duration_us: f64,
    family: ProtocolFamily,
    params: Option<ProtocolParams>,
    shape: ScheduleShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ScheduleShape {
    PiecewiseLinear { omega: PiecewiseLinearCurve, delta: PiecewiseLinearCurve },
    Counterdiabatic(CdDrive),
    Hardware(HardwareProgram),
    Constant { omega: f64, delta: f64, phi: f64 },
}

/// Hardware-legal program: piecewise-linear amplitude and detuning plus a
/// piecewise-constant phase. `phi_values[i]` applies on
/// `[phi_times[i], phi_times[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProgram {
    pub omega: PiecewiseLinearCurve,
    pub delta: PiecewiseLinearCurve,
    pub phi_times: Vec<f64>,
    pub phi_values: Vec<f64>,
    /// Sign convention applied to the exported phase; some toolchains expect
    /// the phase multiplied by minus one.
    pub phase_sign: i8,
}

impl HardwareProgram {
    fn phi_at(&self, t: f64) -> f64 {
        if self.phi_values.is_empty() {
            return 0.0;
        }
        let idx = match self.phi_times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        self.phi_values[idx.min(self.phi_values.len() - 1)]
    }
}

impl Schedule {
    /// Time-independent drive, mainly for experiments and tests; a zero
    /// duration is allowed and means "do not evolve".
    pub fn constant(duration_us: f64, omega: f64, delta: f64, phi: f64) -> Schedule {
        Schedule {
            duration_us,
            family: ProtocolFamily::Custom,
            params: None,
            shape: ScheduleShape::Constant { omega, delta, phi },
        }
    }

    pub fn duration_us(&self) -> f64 {
        self.duration_us
    }

    pub fn family(&self) -> ProtocolFamily {
        self.family
    }

    pub fn params(&self) -> Option<&ProtocolParams> {
        self.params.as_ref()
    }

    pub fn omega(&self, t: f64) -> f64 {
        match &self.shape {
            ScheduleShape::PiecewiseLinear { omega, .. } => omega.value_clamped(t),
            ScheduleShape::Counterdiabatic(cd) => cd.sample(t).0,
            ScheduleShape::Hardware(hw) => hw.omega.value_clamped(t),
            ScheduleShape::Constant { omega, .. } => *omega,
        }
    }

    pub fn delta(&self, t: f64) -> f64 {
        match &self.shape {
            ScheduleShape::PiecewiseLinear { delta, .. } => delta.value_clamped(t),
            ScheduleShape::Counterdiabatic(cd) => cd.sample(t).1,
            ScheduleShape::Hardware(hw) => hw.delta.value_clamped(t),
            ScheduleShape::Constant { delta, .. } => *delta,
        }
    }

    pub fn phi(&self, t: f64) -> f64 {
        match &self.shape {
            ScheduleShape::PiecewiseLinear { .. } => 0.0,
            ScheduleShape::Counterdiabatic(cd) => cd.sample(t).2,
            ScheduleShape::Hardware(hw) => hw.phi_at(t),
            ScheduleShape::Constant { phi, .. } => *phi,
        }
    }

    pub fn drive_at(&self, t: f64) -> DriveSample {
        match &self.shape {
            ScheduleShape::PiecewiseLinear { omega, delta } => DriveSample {
                omega: omega.value_clamped(t),
                delta: delta.value_clamped(t),
                phi: 0.0,
            },
            ScheduleShape::Counterdiabatic(cd) => {
                let (omega, delta, phi) = cd.sample(t);
                DriveSample { omega, delta, phi }
            }
            ScheduleShape::Hardware(hw) => DriveSample {
                omega: hw.omega.value_clamped(t),
                delta: hw.delta.value_clamped(t),
                phi: hw.phi_at(t),
            },
            ScheduleShape::Constant { omega, delta, phi } => {
                DriveSample { omega: *omega, delta: *delta, phi: *phi }
            }
        }
    }

    /// Rescale factor applied to the adiabatic amplitude, 1 when untouched.
    pub fn kappa(&self) -> f64 {
        match &self.shape {
            ScheduleShape::Counterdiabatic(cd) => cd.kappa,
            _ => 1.0,
        }
    }

    /// Interior times where the drive is not smooth; integration is split at
    /// these points.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = match &self.shape {
            ScheduleShape::PiecewiseLinear { omega, delta } => {
                omega.times().iter().chain(delta.times()).copied().collect()
            }
            ScheduleShape::Counterdiabatic(_) | ScheduleShape::Constant { .. } => {
                vec![0.0, self.duration_us]
            }
            ScheduleShape::Hardware(hw) => hw
                .omega
                .times()
                .iter()
                .chain(hw.delta.times())
                .chain(hw.phi_times.iter())
                .copied()
                .collect(),
        };
        pts.push(0.0);
        pts.push(self.duration_us);
        pts.sort_by(|a, b| a.total_cmp(b));
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        pts.retain(|&t| t >= 0.0 && t <= self.duration_us);
        pts
    }

    pub fn hardware_program(&self) -> Option<&HardwareProgram> {
        match &self.shape {
            ScheduleShape::Hardware(hw) => Some(hw),
            _ => None,
        }
    }

    /// Check the boundary conditions and amplitude cap on a dense sample.
    pub fn validate_hardware(&self, constants: &PhysicalConstants) -> Result<()> {
        let mut violations = Vec::new();
        let t_f = self.duration_us;
        if self.omega(0.0) != 0.0 {
            violations.push(format!("Omega(0) = {} must be exactly 0", self.omega(0.0)));
        }
        if self.omega(t_f) != 0.0 {
            violations.push(format!("Omega(t_f) = {} must be exactly 0", self.omega(t_f)));
        }
        if !(self.delta(0.0) <= -constants.delta_noise) {
            violations.push(format!(
                "Delta(0) = {} must be at most -{}",
                self.delta(0.0),
                constants.delta_noise
            ));
        }
        if !(self.delta(t_f) > 0.0) {
            violations.push(format!("Delta(t_f) = {} must be positive", self.delta(t_f)));
        }
        let cap = constants.omega_max + 1e-9;
        for k in 0..CD_SCAN_SAMPLES {
            let t = t_f * k as f64 / (CD_SCAN_SAMPLES - 1) as f64;
            let om = self.omega(t);
            if !(-1e-9..=cap).contains(&om) {
                violations.push(format!(
                    "Omega({t:.6}) = {om:.6} outside [0, {}]",
                    constants.omega_max
                ));
                break;
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::HardwareInvariant(violations))
        }
    }
}

fn check_common_linear(
    tau_i: f64,
    tau_f: f64,
    delta_i: f64,
    delta_f: f64,
    t_f: f64,
    constants: &PhysicalConstants,
    violations: &mut Vec<String>,
) {
    if !(t_f > 0.0) {
        violations.push(format!("duration {t_f} must be positive"));
    }
    if !(tau_i > 0.0) {
        violations.push(format!(
            "up-ramp duration {tau_i} must be positive (a zero-length ramp breaks Omega(0) = 0)"
        ));
    }
    if !(tau_f > 0.0) {
        violations.push(format!(
            "down-ramp duration {tau_f} must be positive (a zero-length ramp breaks Omega(t_f) = 0)"
        ));
    }
    if tau_i + tau_f > t_f {
        violations.push(format!("ramp times {tau_i} + {tau_f} exceed the duration {t_f}"));
    }
    if !(delta_i <= -constants.delta_noise) {
        violations.push(format!(
            "initial detuning {delta_i} must be at most -{} (the detuning noise floor)",
            constants.delta_noise
        ));
    }
    if !(delta_f > 0.0) {
        violations.push(format!("final detuning {delta_f} must be positive"));
    }
}

fn trapezoid_omega(tau_i: f64, tau_f: f64, t_f: f64, omega_max: f64) -> PiecewiseLinearCurve {
    let mut times = vec![0.0, tau_i];
    let mut values = vec![0.0, omega_max];
    if t_f - tau_f > tau_i + 1e-12 {
        times.push(t_f - tau_f);
        values.push(omega_max);
    }
    times.push(t_f);
    values.push(0.0);
    PiecewiseLinearCurve::new(times, values).expect("validated ramp times")
}

/// Four-parameter piecewise-linear schedule: the amplitude ramps
/// `0 -> Omega_max` over `tau_i`, holds, and ramps back to zero over `tau_f`;
/// the detuning is one ramp `delta_i -> delta_f` across the whole duration.
pub fn lin4_schedule(p: Lin4Params, t_f: f64, constants: &PhysicalConstants) -> Result<Schedule> {
    let mut violations = Vec::new();
    check_common_linear(
        p.tau_i_us,
        p.tau_f_us,
        p.delta_i_mhz,
        p.delta_f_mhz,
        t_f,
        constants,
        &mut violations,
    );
    if !violations.is_empty() {
        return Err(Error::ScheduleParams(violations));
    }
    let omega = trapezoid_omega(p.tau_i_us, p.tau_f_us, t_f, constants.omega_max);
    let delta =
        PiecewiseLinearCurve::new(vec![0.0, t_f], vec![p.delta_i_mhz, p.delta_f_mhz]).unwrap();
    Ok(Schedule {
        duration_us: t_f,
        family: ProtocolFamily::Lin4,
        params: Some(ProtocolParams::Lin4(p)),
        shape: ScheduleShape::PiecewiseLinear { omega, delta },
    })
}

/// Six-parameter variant: the amplitude shape of [`lin4_schedule`] with the
/// detuning routed through an interior knot `(tau_m, delta_m)`.
pub fn lin6_schedule(p: Lin6Params, t_f: f64, constants: &PhysicalConstants) -> Result<Schedule> {
    let mut violations = Vec::new();
    check_common_linear(
        p.tau_i_us,
        p.tau_f_us,
        p.delta_i_mhz,
        p.delta_f_mhz,
        t_f,
        constants,
        &mut violations,
    );
    if !(p.tau_m_us > 0.0 && p.tau_m_us < t_f) {
        violations.push(format!("interior knot time {} must lie strictly inside (0, {t_f})", p.tau_m_us));
    }
    if !violations.is_empty() {
        return Err(Error::ScheduleParams(violations));
    }
    let omega = trapezoid_omega(p.tau_i_us, p.tau_f_us, t_f, constants.omega_max);
    let delta = PiecewiseLinearCurve::new(
        vec![0.0, p.tau_m_us, t_f],
        vec![p.delta_i_mhz, p.delta_m_mhz, p.delta_f_mhz],
    )
    .unwrap();
    Ok(Schedule {
        duration_us: t_f,
        family: ProtocolFamily::Lin6,
        params: Some(ProtocolParams::Lin6(p)),
        shape: ScheduleShape::PiecewiseLinear { omega, delta },
    })
}

/// Maximum of the total drive amplitude over a dense grid; `None` when the
/// gauge denominator is not strictly positive somewhere (the offending time
/// is returned instead).
fn cd_max_amplitude(drive: &CdDrive) -> std::result::Result<f64, f64> {
    let t_f = drive.base.t_f;
    let mut max = 0.0f64;
    for k in 0..CD_SCAN_SAMPLES {
        let t = t_f * k as f64 / (CD_SCAN_SAMPLES - 1) as f64;
        if drive.denominator(t) <= 0.0 {
            return Err(t);
        }
        max = max.max(drive.sample(t).0);
    }
    Ok(max)
}

/// Build the counterdiabatic schedule for a graph's traces.
///
/// The gauge strength is
/// `Omega_cd = (Omega_ad dDelta - dOmega Delta + dOmega T1 nu) /
///             (Omega_ad^2 + Delta^2 - 2 Delta T1 nu + T2 nu^2)`
/// with the unit-strength traces `T1, T2`; the emitted amplitude and phase
/// are `sqrt(Omega_ad^2 + Omega_cd^2)` and `arctan(Omega_cd / Omega_ad)`.
/// When the total amplitude exceeds `Omega_max`, the adiabatic amplitude
/// (not the total) is rescaled by the largest factor `kappa` in `(0, 1)` that
/// caps the self-consistently recomputed maximum at `Omega_max`.
pub fn cd_drive(
    base: CdBase,
    traces: GraphTraces,
    nu: f64,
    constants: &PhysicalConstants,
) -> Result<Schedule> {
    let mut violations = Vec::new();
    if !(base.t_f > 0.0) {
        violations.push(format!("duration {} must be positive", base.t_f));
    }
    if !(base.delta_i <= -constants.delta_noise) {
        violations.push(format!(
            "initial detuning {} must be at most -{}",
            base.delta_i, constants.delta_noise
        ));
    }
    if !(base.delta_f > 0.0) {
        violations.push(format!("final detuning {} must be positive", base.delta_f));
    }
    if !(0.0..=constants.v0(1.0)).contains(&nu) {
        violations.push(format!("nu = {nu} must lie in [0, C6/a^6]"));
    }
    if !violations.is_empty() {
        return Err(Error::ScheduleParams(violations));
    }

    let mut drive = CdDrive { base, kappa: 1.0, nu, t1_0: traces.t1_0, t2_0: traces.t2_0 };
    match cd_max_amplitude(&drive) {
        Err(t) => return Err(Error::CdDenominatorZero { t }),
        Ok(max) if max <= constants.omega_max => {}
        Ok(_) => {
            // Walk kappa down from 1 to bracket the largest feasible factor,
            // then bisect. The maximum is not monotone in kappa, so the
            // bracket must come from the scan rather than from [~0, 1].
            let grid = 400;
            let mut hi = 1.0f64;
            let mut lo = None;
            for k in 1..=grid {
                let kappa = 1.0 - k as f64 * (1.0 - 1e-3) / grid as f64;
                drive.kappa = kappa;
                match cd_max_amplitude(&drive) {
                    Ok(max) if max <= constants.omega_max => {
                        lo = Some(kappa);
                        break;
                    }
                    _ => hi = kappa,
                }
            }
            let Some(mut lo) = lo else {
                return Err(Error::CdRescaleInfeasible { omega_max: constants.omega_max });
            };
            loop {
                drive.kappa = lo;
                let max_lo = match cd_max_amplitude(&drive) {
                    Ok(m) => m,
                    Err(t) => return Err(Error::CdDenominatorZero { t }),
                };
                if constants.omega_max - max_lo <= KAPPA_TOL_MHZ || hi - lo <= 1e-12 {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                drive.kappa = mid;
                match cd_max_amplitude(&drive) {
                    Ok(max) if max <= constants.omega_max => lo = mid,
                    _ => hi = mid,
                }
            }
            drive.kappa = lo;
        }
    }

    Ok(Schedule {
        duration_us: base.t_f,
        family: ProtocolFamily::Cd,
        params: Some(ProtocolParams::Cd(CdParams {
            delta_i_mhz: base.delta_i,
            delta_f_mhz: base.delta_f,
            nu_mhz: nu,
        })),
        shape: ScheduleShape::Counterdiabatic(drive),
    })
}

/// Build a schedule from protocol parameters. Counterdiabatic schedules are
/// graph-dependent and need the graph's traces.
pub fn build_schedule(
    params: &ProtocolParams,
    t_f: f64,
    constants: &PhysicalConstants,
    traces: Option<&GraphTraces>,
) -> Result<Schedule> {
    match params {
        ProtocolParams::Lin4(p) => lin4_schedule(*p, t_f, constants),
        ProtocolParams::Lin6(p) => lin6_schedule(*p, t_f, constants),
        ProtocolParams::Cd(p) => {
            let traces = traces.ok_or_else(|| {
                Error::InvalidInput("counterdiabatic schedules need the graph traces".into())
            })?;
            let base = cd_base(p.delta_i_mhz, p.delta_f_mhz, t_f, constants.omega_max);
            cd_drive(base, *traces, p.nu_mhz, constants)
        }
    }
}

/// Saturating dependence of one schedule parameter on the hardness:
/// `p(h) = p_inf + (p_0 - p_inf) exp(-h / h_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturatingCurve {
    pub p0: f64,
    pub p_inf: f64,
    pub h_scale: f64,
}

impl SaturatingCurve {
    pub fn eval(&self, hp: f64) -> f64 {
        self.p_inf + (self.p0 - self.p_inf) * (-hp / self.h_scale).exp()
    }
}

/// How schedule parameters are chosen for a given hardness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleModel {
    /// Published infinite-hardness constants.
    Limit,
    /// Per-parameter saturating curves in the family's canonical order,
    /// produced by fitting batch-optimization results.
    Fitted(Vec<SaturatingCurve>),
}

/// Schedule parameters for a graph of hardness `hp`.
///
/// The limit model returns the infinite-hardness constants of each family;
/// the fitted model evaluates its saturating curves at `hp`. `delta_ub` is
/// the recommended upper detuning bound (`V0/8` for the lattice in use).
pub fn hp_schedule_model(
    hp: f64,
    family: ProtocolFamily,
    model: &ScheduleModel,
    t_f: f64,
    delta_ub: f64,
) -> Result<ProtocolParams> {
    if !(hp > 0.0) {
        return Err(Error::InvalidInput(format!("hardness parameter {hp} must be positive")));
    }
    match model {
        ScheduleModel::Limit => Ok(match family {
            ProtocolFamily::Lin4 => ProtocolParams::Lin4(Lin4Params {
                tau_i_us: t_f / 2.0,
                tau_f_us: t_f / 10.0,
                delta_i_mhz: -delta_ub / 2.0,
                delta_f_mhz: delta_ub,
            }),
            ProtocolFamily::Lin6 => ProtocolParams::Lin6(Lin6Params {
                tau_i_us: 0.22 * t_f,
                tau_f_us: 0.12 * t_f,
                delta_i_mhz: -0.83 * delta_ub,
                tau_m_us: 0.34 * t_f,
                delta_m_mhz: 0.36 * delta_ub,
                delta_f_mhz: delta_ub,
            }),
            ProtocolFamily::Cd => ProtocolParams::Cd(CdParams {
                delta_i_mhz: -delta_ub / 10.0,
                delta_f_mhz: delta_ub,
                nu_mhz: CD_NU_LIMIT,
            }),
            ProtocolFamily::Hardware | ProtocolFamily::Custom => {
                return Err(Error::ModelNotFitted { family: "hardware" })
            }
        }),
        ScheduleModel::Fitted(curves) => {
            let expect = family.param_names().len();
            if curves.len() != expect {
                return Err(Error::Inconsistent {
                    context: "fitted model parameter count",
                    expected: expect,
                    got: curves.len(),
                });
            }
            let values: Vec<f64> = curves.iter().map(|c| c.eval(hp)).collect();
            ProtocolParams::from_vec(family, &values)
        }
    }
}

/// Outcome details of a hardware discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationReport {
    pub intervals: usize,
    /// Largest amplitude clamp applied anywhere on the grid (MHz).
    pub max_clamp_mhz: f64,
}

/// Resample a schedule onto a hardware grid: piecewise-linear amplitude and
/// detuning through the grid points, piecewise-constant phase taking each
/// interval's midpoint value. Endpoint amplitudes are forced to exactly zero
/// and every sample is clamped to `[0, Omega_max]`.
pub fn discretize_for_hardware(
    schedule: &Schedule,
    step_us: f64,
    constants: &PhysicalConstants,
    phase_sign: i8,
) -> Result<(Schedule, DiscretizationReport)> {
    if step_us < constants.hw_step_us {
        return Err(Error::StepTooSmall { step: step_us, min: constants.hw_step_us });
    }
    let t_f = schedule.duration_us();
    let ratio = t_f / step_us;
    let mut intervals = ratio.round() as usize;
    if (ratio - ratio.round()).abs() > 1e-9 {
        // duration is not a multiple of the step: pad with a shorter final
        // segment
        intervals = ratio.ceil() as usize;
    }
    if intervals == 0 {
        return Err(Error::InvalidInput(format!(
            "duration {t_f} us is too short for step {step_us} us"
        )));
    }

    let mut times = Vec::with_capacity(intervals + 1);
    for k in 0..intervals {
        times.push((k as f64 * step_us).min(t_f));
    }
    times.push(t_f);

    let mut max_clamp = 0.0f64;
    let mut omega_vals = Vec::with_capacity(times.len());
    let mut delta_vals = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let raw = if k == 0 || k == times.len() - 1 { 0.0 } else { schedule.omega(t) };
        let clamped = raw.clamp(0.0, constants.omega_max);
        max_clamp = max_clamp.max((raw - clamped).abs());
        omega_vals.push(clamped);
        delta_vals.push(schedule.delta(t));
    }
    let mut phi_vals = Vec::with_capacity(intervals);
    for k in 0..intervals {
        let mid = 0.5 * (times[k] + times[k + 1]);
        phi_vals.push(f64::from(phase_sign) * schedule.phi(mid));
    }

    let program = HardwareProgram {
        omega: PiecewiseLinearCurve::new(times.clone(), omega_vals)?,
        delta: PiecewiseLinearCurve::new(times.clone(), delta_vals)?,
        phi_times: times,
        phi_values: phi_vals,
        phase_sign,
    };
    let hw = Schedule {
        duration_us: t_f,
        family: ProtocolFamily::Hardware,
        params: schedule.params,
        shape: ScheduleShape::Hardware(program),
    };
    Ok((hw, DiscretizationReport { intervals, max_clamp_mhz: max_clamp }))
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveJson {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleJson {
    duration_us: f64,
    omega_mhz: CurveJson,
    delta_mhz: CurveJson,
    phi_rad: CurveJson,
    phase_sign: i8,
}

/// Serialize a hardware-legal schedule. Smooth counterdiabatic schedules must
/// be discretized first; the export refuses schedules that violate the
/// hardware invariants or exceed the maximum coherent duration.
pub fn export_schedule_json(schedule: &Schedule, constants: &PhysicalConstants) -> Result<String> {
    schedule.validate_hardware(constants)?;
    if schedule.duration_us() > constants.t_max_us + 1e-12 {
        return Err(Error::HardwareInvariant(vec![format!(
            "duration {} us exceeds the maximum coherent evolution {} us",
            schedule.duration_us(),
            constants.t_max_us
        )]));
    }
    let json = match &schedule.shape {
        ScheduleShape::PiecewiseLinear { omega, delta } => ScheduleJson {
            duration_us: schedule.duration_us(),
            omega_mhz: CurveJson { times: omega.times().to_vec(), values: omega.values().to_vec() },
            delta_mhz: CurveJson { times: delta.times().to_vec(), values: delta.values().to_vec() },
            phi_rad: CurveJson { times: vec![0.0, schedule.duration_us()], values: vec![0.0] },
            phase_sign: 1,
        },
        ScheduleShape::Hardware(hw) => ScheduleJson {
            duration_us: schedule.duration_us(),
            omega_mhz: CurveJson { times: hw.omega.times().to_vec(), values: hw.omega.values().to_vec() },
            delta_mhz: CurveJson { times: hw.delta.times().to_vec(), values: hw.delta.values().to_vec() },
            phi_rad: CurveJson { times: hw.phi_times.clone(), values: hw.phi_values.clone() },
            phase_sign: hw.phase_sign,
        },
        ScheduleShape::Counterdiabatic(_) | ScheduleShape::Constant { .. } => {
            return Err(Error::InvalidInput(
                "only piecewise-linear and hardware schedules are exportable; discretize first"
                    .into(),
            ))
        }
    };
    serde_json::to_string_pretty(&json)
        .map_err(|e| Error::InvalidInput(format!("schedule serialization failed: {e}")))
}

/// Load an exported hardware program.
pub fn import_schedule_json(text: &str) -> Result<Schedule> {
    let json: ScheduleJson = serde_json::from_str(text)
        .map_err(|e| Error::InvalidInput(format!("schedule parse error: {e}")))?;
    if json.phi_rad.times.len() != json.phi_rad.values.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "phase needs one more breakpoint than values, got {} and {}",
            json.phi_rad.times.len(),
            json.phi_rad.values.len()
        )));
    }
    let program = HardwareProgram {
        omega: PiecewiseLinearCurve::new(json.omega_mhz.times, json.omega_mhz.values)?,
        delta: PiecewiseLinearCurve::new(json.delta_mhz.times, json.delta_mhz.values)?,
        phi_times: json.phi_rad.times,
        phi_values: json.phi_rad.values,
        phase_sign: json.phase_sign,
    };
    Ok(Schedule {
        duration_us: json.duration_us,
        family: ProtocolFamily::Hardware,
        params: None,
        shape: ScheduleShape::Hardware(program),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{build_unit_disk_graph, parse_toy_graph_id, Site};

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn delta_ub() -> f64 {
        consts().recommended_detuning_interval(5.0).1
    }

    fn row3() -> UnitDiskGraph {
        build_unit_disk_graph(
            vec![Site::new(0, 0), Site::new(1, 0), Site::new(2, 0)],
            5.0,
        )
        .unwrap()
    }

    #[test]
    fn lin4_limit_params_build_a_valid_schedule() {
        let t_f = 1.0;
        let p = Lin4Params {
            tau_i_us: t_f / 2.0,
            tau_f_us: t_f / 10.0,
            delta_i_mhz: -delta_ub() / 2.0,
            delta_f_mhz: delta_ub(),
        };
        let s = lin4_schedule(p, t_f, &consts()).unwrap();
        s.validate_hardware(&consts()).unwrap();
        assert_eq!(s.omega(0.0), 0.0);
        assert_eq!(s.omega(t_f), 0.0);
        assert_eq!(s.omega(0.7), consts().omega_max);
        assert!((s.omega(0.95) - consts().omega_max / 2.0).abs() < 1e-12);
        assert_eq!(s.phi(0.3), 0.0);
    }

    #[test]
    fn lin4_zero_ramps_rejected_with_reasons() {
        let p = Lin4Params { tau_i_us: 0.0, tau_f_us: 0.0, delta_i_mhz: -10.0, delta_f_mhz: 20.0 };
        match lin4_schedule(p, 1.0, &consts()) {
            Err(Error::ScheduleParams(v)) => assert_eq!(v.len(), 2, "{v:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lin4_plateau_reaches_omega_max() {
        let p = Lin4Params { tau_i_us: 0.2, tau_f_us: 0.2, delta_i_mhz: -10.0, delta_f_mhz: 20.0 };
        let s = lin4_schedule(p, 1.0, &consts()).unwrap();
        assert_eq!(s.omega(0.5), consts().omega_max);
    }

    #[test]
    fn lin6_interpolates_through_the_knot() {
        let t_f = 1.0;
        let p = Lin6Params {
            tau_i_us: 0.22,
            tau_f_us: 0.12,
            delta_i_mhz: -0.83 * delta_ub(),
            tau_m_us: 0.34,
            delta_m_mhz: 0.36 * delta_ub(),
            delta_f_mhz: delta_ub(),
        };
        let s = lin6_schedule(p, t_f, &consts()).unwrap();
        s.validate_hardware(&consts()).unwrap();
        assert_eq!(s.delta(p.tau_m_us), p.delta_m_mhz);
    }

    #[test]
    fn lin6_collinear_knot_reproduces_lin4() {
        let t_f = 2.0;
        let (di, df) = (-20.0, 30.0);
        let p6 = Lin6Params {
            tau_i_us: 0.3,
            tau_f_us: 0.3,
            delta_i_mhz: di,
            tau_m_us: t_f / 2.0,
            delta_m_mhz: (di + df) / 2.0,
            delta_f_mhz: df,
        };
        let p4 = Lin4Params { tau_i_us: 0.3, tau_f_us: 0.3, delta_i_mhz: di, delta_f_mhz: df };
        let s6 = lin6_schedule(p6, t_f, &consts()).unwrap();
        let s4 = lin4_schedule(p4, t_f, &consts()).unwrap();
        for k in 0..=40 {
            let t = t_f * k as f64 / 40.0;
            assert!((s6.delta(t) - s4.delta(t)).abs() < 1e-12);
            assert!((s6.omega(t) - s4.omega(t)).abs() < 1e-12);
        }
    }

    #[test]
    fn cd_base_midpoint_and_endpoints() {
        let t_f = 1.3;
        let base = cd_base(-10.0, 40.0, t_f, consts().omega_max);
        let mid = base.eval(t_f / 2.0);
        assert!((mid.omega_ad - consts().omega_max).abs() < 1e-12);
        assert!((mid.delta_ad - 15.0).abs() < 1e-12);
        let start = base.eval(0.0);
        assert_eq!(start.omega_ad, 0.0);
        assert_eq!(start.domega_ad, 0.0);
        assert_eq!(start.delta_ad, -10.0);
        assert_eq!(start.ddelta_ad, 0.0);
    }

    #[test]
    fn cd_base_derivatives_match_finite_differences() {
        let t_f = 1.0;
        let base = cd_base(-25.0, 43.0, t_f, consts().omega_max);
        let h = 1e-6;
        for k in 1..20 {
            let t = t_f * k as f64 / 20.0;
            if t + h >= t_f {
                continue;
            }
            let plus = base.eval(t + h);
            let minus = base.eval(t - h);
            let s = base.eval(t);
            let fd_omega = (plus.omega_ad - minus.omega_ad) / (2.0 * h);
            let fd_delta = (plus.delta_ad - minus.delta_ad) / (2.0 * h);
            let scale_o = s.domega_ad.abs().max(1e-3);
            let scale_d = s.ddelta_ad.abs().max(1e-3);
            assert!((fd_omega - s.domega_ad).abs() / scale_o < 1e-6, "t={t}");
            assert!((fd_delta - s.ddelta_ad).abs() / scale_d < 1e-6, "t={t}");
        }
    }

    #[test]
    fn traces_of_the_three_atom_row() {
        let g = row3();
        let tr = graph_traces(&g);
        assert_eq!(tr.t1_0, (2.0 + 1.0 / 64.0) / 3.0);
        assert!((tr.t2_0 - 0.838623046875).abs() < 1e-12);
    }

    #[test]
    fn adjacency_t1_is_half_the_mean_degree() {
        for id in ["7DE", "5F7", "7F7"] {
            let g = parse_toy_graph_id(id, 5.0).unwrap();
            let tr = adjacency_traces(&g);
            let mean_degree =
                (0..g.order()).map(|v| g.degree(v) as f64).sum::<f64>() / g.order() as f64;
            assert!((tr.t1_0 - mean_degree / 2.0).abs() < 1e-12, "{id}");
        }
    }

    #[test]
    fn traces_are_spacing_and_labeling_invariant() {
        let g = parse_toy_graph_id("7DE", 5.0).unwrap();
        let tr = graph_traces(&g);
        let g2 = parse_toy_graph_id("7DE", 6.5).unwrap();
        let tr2 = graph_traces(&g2);
        assert_eq!(tr, tr2);
        let mut sites = g.sites().to_vec();
        sites.reverse();
        let g3 = build_unit_disk_graph(sites, 5.0).unwrap();
        let tr3 = graph_traces(&g3);
        assert!((tr.t1_0 - tr3.t1_0).abs() < 1e-12);
        assert!((tr.t2_0 - tr3.t2_0).abs() < 1e-12);
    }

    #[test]
    fn cd_with_nu_zero_is_the_interaction_free_gauge() {
        let g = parse_toy_graph_id("7DE", 5.0).unwrap();
        let traces = graph_traces(&g);
        let base = cd_base(-delta_ub() / 10.0, delta_ub(), 1.0, consts().omega_max);
        let s = cd_drive(base, traces, 0.0, &consts()).unwrap();
        let kappa = s.kappa();
        for k in 1..50 {
            let t = k as f64 / 50.0;
            let b = base.eval(t);
            let (oad, doad) = (kappa * b.omega_ad, kappa * b.domega_ad);
            let expected_cd = (oad * b.ddelta_ad - doad * b.delta_ad)
                / (oad * oad + b.delta_ad * b.delta_ad);
            let omega = s.omega(t);
            let phi = s.phi(t);
            let got_cd = omega * phi.sin();
            assert!((got_cd - expected_cd).abs() <= 1e-12 * expected_cd.abs().max(1.0), "t={t}");
        }
    }

    #[test]
    fn cd_amplitude_vanishes_exactly_at_the_boundaries() {
        let g = parse_toy_graph_id("7DE", 5.0).unwrap();
        let s = cd_drive(
            cd_base(-delta_ub() / 10.0, delta_ub(), 1.0, consts().omega_max),
            graph_traces(&g),
            CD_NU_LIMIT,
            &consts(),
        )
        .unwrap();
        assert_eq!(s.omega(0.0), 0.0);
        assert_eq!(s.omega(1.0), 0.0);
        assert_eq!(s.phi(0.0), 0.0);
    }

    #[test]
    fn cd_contribution_fades_for_long_durations() {
        // raw gauge strength, no amplitude rescale on either side
        let g = parse_toy_graph_id("7DE", 5.0).unwrap();
        let traces = graph_traces(&g);
        let max_cd = |t_f: f64| -> f64 {
            let base = cd_base(-delta_ub() / 10.0, delta_ub(), t_f, consts().omega_max);
            let drive = CdDrive { base, kappa: 1.0, nu: CD_NU_LIMIT, t1_0: traces.t1_0, t2_0: traces.t2_0 };
            let mut m = 0.0f64;
            for k in 0..=1000 {
                let t = t_f * k as f64 / 1000.0;
                m = m.max(drive.omega_cd(t).0.abs());
            }
            m
        };
        assert!(max_cd(100.0) <= 1.0001e-2 * max_cd(1.0));
    }

    #[test]
    fn kappa_rescale_caps_the_amplitude() {
        let g = parse_toy_graph_id("7DE", 5.0).unwrap();
        let traces = graph_traces(&g);
        // strongly asymmetric detunings push the total amplitude past the cap
        let base = cd_base(-1.1 * delta_ub(), delta_ub(), 1.0, consts().omega_max);
        let s = cd_drive(base, traces, CD_NU_LIMIT, &consts()).unwrap();
        let kappa = s.kappa();
        assert!(kappa < 1.0 && kappa > 0.0, "kappa = {kappa}");
        let mut max = 0.0f64;
        for k in 0..CD_SCAN_SAMPLES {
            let t = k as f64 / (CD_SCAN_SAMPLES - 1) as f64;
            max = max.max(s.omega(t));
        }
        assert!(max <= consts().omega_max + 1e-9);
        assert!((max - consts().omega_max).abs() <= KAPPA_TOL_MHZ, "max = {max}");
        // a schedule whose base amplitude stays clear of the cap is untouched
        let gentle = cd_drive(
            cd_base(-delta_ub() / 10.0, delta_ub(), 10.0, 0.8 * consts().omega_max),
            traces,
            CD_NU_LIMIT,
            &consts(),
        )
        .unwrap();
        assert_eq!(gentle.kappa(), 1.0);
    }

    #[test]
    fn phase_is_continuous_inside_the_evolution() {
        let g = parse_toy_graph_id("7DE", 5.0).unwrap();
        let s = cd_drive(
            cd_base(-1.1 * delta_ub(), delta_ub(), 1.0, consts().omega_max),
            graph_traces(&g),
            CD_NU_LIMIT,
            &consts(),
        )
        .unwrap();
        let mut prev = s.phi(1e-4);
        for k in 2..2000 {
            let t = k as f64 * 1e-3 / 2.0;
            let phi = s.phi(t);
            assert!((phi - prev).abs() < 0.05, "jump at t={t}: {prev} -> {phi}");
            prev = phi;
        }
    }

    #[test]
    fn limit_model_constants() {
        let t_f = 1.0;
        let ub = delta_ub();
        match hp_schedule_model(3.0, ProtocolFamily::Lin4, &ScheduleModel::Limit, t_f, ub).unwrap()
        {
            ProtocolParams::Lin4(p) => {
                assert_eq!(p.tau_i_us, 0.5);
                assert_eq!(p.tau_f_us, 0.1);
                assert_eq!(p.delta_i_mhz, -ub / 2.0);
                assert_eq!(p.delta_f_mhz, ub);
            }
            other => panic!("unexpected {other:?}"),
        }
        match hp_schedule_model(0.5, ProtocolFamily::Cd, &ScheduleModel::Limit, t_f, ub).unwrap() {
            ProtocolParams::Cd(p) => {
                assert_eq!(p.delta_i_mhz, -ub / 10.0);
                assert_eq!(p.delta_f_mhz, ub);
                assert_eq!(p.nu_mhz, 4.30);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fitted_model_converges_to_its_asymptote() {
        let curve = SaturatingCurve { p0: 0.2, p_inf: 0.45, h_scale: 2.0 };
        let curves = vec![
            SaturatingCurve { p0: 0.3, p_inf: 0.5, h_scale: 1.0 },
            SaturatingCurve { p0: 0.2, p_inf: 0.1, h_scale: 1.5 },
            SaturatingCurve { p0: -20.0, p_inf: -30.0, h_scale: 2.0 },
            curve,
        ];
        let model = ScheduleModel::Fitted(curves);
        match hp_schedule_model(1e6, ProtocolFamily::Lin4, &model, 1.0, delta_ub()).unwrap() {
            ProtocolParams::Lin4(p) => assert!((p.delta_f_mhz - 0.45).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn discretization_produces_eighty_intervals_at_full_duration() {
        let p = Lin4Params { tau_i_us: 2.0, tau_f_us: 0.4, delta_i_mhz: -20.0, delta_f_mhz: 40.0 };
        let s = lin4_schedule(p, 4.0, &consts()).unwrap();
        let (hw, report) = discretize_for_hardware(&s, 0.05, &consts(), 1).unwrap();
        assert_eq!(report.intervals, 80);
        assert_eq!(report.max_clamp_mhz, 0.0);
        hw.validate_hardware(&consts()).unwrap();
    }

    #[test]
    fn discretizing_a_linear_schedule_is_lossless_at_breakpoints() {
        let p = Lin4Params { tau_i_us: 0.5, tau_f_us: 0.1, delta_i_mhz: -21.7, delta_f_mhz: 43.4 };
        let s = lin4_schedule(p, 1.0, &consts()).unwrap();
        let (hw, _) = discretize_for_hardware(&s, 0.05, &consts(), 1).unwrap();
        for k in 0..=20 {
            let t = k as f64 * 0.05;
            assert!((hw.delta(t) - s.delta(t)).abs() <= 1e-9);
            // the grid contains tau_i = 0.5 and t_f - tau_f = 0.9 exactly
            assert!((hw.omega(t) - s.omega(t)).abs() <= 1e-9, "t={t}");
        }
    }

    #[test]
    fn discretization_error_is_second_order_in_the_step() {
        let g = parse_toy_graph_id("7DE", 5.0).unwrap();
        let s = cd_drive(
            cd_base(-delta_ub() / 10.0, delta_ub(), 1.0, consts().omega_max),
            graph_traces(&g),
            CD_NU_LIMIT,
            &consts(),
        )
        .unwrap();
        let step = 0.05;
        let (hw, _) = discretize_for_hardware(&s, step, &consts(), 1).unwrap();
        // curvature bound from dense second differences
        let h = 1e-3;
        let mut max_dd = 0.0f64;
        for k in 1..1000 {
            let t = k as f64 * 1e-3;
            let dd = (s.omega(t + h) - 2.0 * s.omega(t) + s.omega(t - h)) / (h * h);
            max_dd = max_dd.max(dd.abs());
        }
        let bound = max_dd * step * step / 8.0;
        let mut max_err = 0.0f64;
        for k in 0..=2000 {
            let t = k as f64 / 2000.0;
            max_err = max_err.max((hw.omega(t) - s.omega(t)).abs());
        }
        assert!(max_err <= bound * 1.05 + 1e-9, "err {max_err} vs bound {bound}");
    }

    #[test]
    fn export_import_roundtrip_preserves_breakpoints() {
        let g = parse_toy_graph_id("7DE", 5.0).unwrap();
        let s = cd_drive(
            cd_base(-delta_ub() / 10.0, delta_ub(), 1.0, consts().omega_max),
            graph_traces(&g),
            CD_NU_LIMIT,
            &consts(),
        )
        .unwrap();
        let (hw, _) = discretize_for_hardware(&s, 0.05, &consts(), -1).unwrap();
        let text = export_schedule_json(&hw, &consts()).unwrap();
        let back = import_schedule_json(&text).unwrap();
        let (p0, p1) = (hw.hardware_program().unwrap(), back.hardware_program().unwrap());
        assert_eq!(p0.phase_sign, p1.phase_sign);
        for (a, b) in p0.omega.values().iter().zip(p1.omega.values()) {
            assert!((a - b).abs() <= 1e-9);
        }
        for (a, b) in p0.delta.values().iter().zip(p1.delta.values()) {
            assert!((a - b).abs() <= 1e-9);
        }
        for (a, b) in p0.phi_values.iter().zip(&p1.phi_values) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn export_refuses_invalid_schedules() {
        // positive initial detuning violates the boundary conditions
        let omega = PiecewiseLinearCurve::new(vec![0.0, 0.5, 1.0], vec![0.0, 10.0, 0.0]).unwrap();
        let delta = PiecewiseLinearCurve::new(vec![0.0, 1.0], vec![5.0, 40.0]).unwrap();
        let s = Schedule {
            duration_us: 1.0,
            family: ProtocolFamily::Lin4,
            params: None,
            shape: ScheduleShape::PiecewiseLinear { omega, delta },
        };
        assert!(matches!(
            export_schedule_json(&s, &consts()),
            Err(Error::HardwareInvariant(_))
        ));
    }

    #[test]
    fn step_below_hardware_minimum_rejected() {
        let p = Lin4Params { tau_i_us: 0.5, tau_f_us: 0.1, delta_i_mhz: -20.0, delta_f_mhz: 40.0 };
        let s = lin4_schedule(p, 1.0, &consts()).unwrap();
        assert!(matches!(
            discretize_for_hardware(&s, 0.01, &consts(), 1),
            Err(Error::StepTooSmall { .. })
        ));
    }

    #[test]
    fn curve_evaluation_outside_domain_errors() {
        let c = PiecewiseLinearCurve::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(c.value(1.5).is_err());
        assert!(c.value(-0.5).is_err());
        assert_eq!(c.value(0.25).unwrap(), 0.25);
    }
}
