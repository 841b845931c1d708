//! Classical mean-field dynamics of the driven two-mode condensate in
//! `(phi, z)` variables and stroboscopic Poincaré sections.

use std::f64::consts::{PI, TAU};

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::ModelParams;

/// Guard keeping `sqrt(1 - z^2)` away from zero.
pub const Z_GUARD: f64 = 1e-12;
/// RK4 steps per drive period unless configured otherwise.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 1000;
/// Periods integrated for a section unless configured otherwise.
pub const DEFAULT_SECTION_PERIODS: usize = 500;

/// Relative phase (unwrapped) and population imbalance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub phi: f64,
    pub z: f64,
}

impl MeanFieldState {
    pub fn new(phi: f64, z: f64) -> Self {
        Self { phi, z }
    }

    /// `phi` reduced to `[0, 2 pi)`.
    pub fn wrapped_phi(&self) -> f64 {
        let w = self.phi.rem_euclid(TAU);
        // rem_euclid can round up to exactly 2 pi for tiny negative inputs.
        if w >= TAU { 0.0 } else { w }
    }

    fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.z.is_finite()
    }
}

/// Right-hand side `(dphi/dt, dz/dt)` with the drive factor `cos(omega t)`
/// supplied by the caller; the flag reports whether `z` was clamped.
fn rhs_with_drive(state: MeanFieldState, drive: f64, params: &ModelParams) -> ((f64, f64), bool) {
    let limit = 1.0 - Z_GUARD;
    let clamped = state.z.abs() > limit;
    let z = state.z.clamp(-limit, limit);
    let root = (1.0 - z * z).sqrt();
    let (sin, cos) = state.phi.sin_cos();
    let b = params.bx * drive;
    let dphi = z * params.chi - z * b * cos / root - params.bz;
    let dz = b * root * sin;
    ((dphi, dz), clamped)
}

/// `(dphi/dt, dz/dt)` at time `t`, plus whether `z` had to be clamped.
pub fn mf_rhs(state: MeanFieldState, t: f64, params: &ModelParams) -> ((f64, f64), bool) {
    rhs_with_drive(state, (params.omega * t).cos(), params)
}

/// Classical energy for a frozen drive factor `c`; conserved when `c` is constant.
pub fn classical_energy(state: MeanFieldState, drive: f64, params: &ModelParams) -> f64 {
    let z = state.z;
    0.5 * params.chi * z * z + params.bx * drive * (1.0 - z * z).max(0.0).sqrt() * state.phi.cos()
        - params.bz * z
}

/// One RK4 step; `drives` holds `cos(omega t)` at `t`, `t + h/2`, `t + h`.
fn rk4_step(state: MeanFieldState, h: f64, drives: [f64; 3], params: &ModelParams, clamps: &mut usize) -> MeanFieldState {
    let mut eval = |s: MeanFieldState, c: f64| {
        let (d, clamped) = rhs_with_drive(s, c, params);
        if clamped {
            *clamps += 1;
        }
        d
    };
    let shift = |s: MeanFieldState, d: (f64, f64), f: f64| MeanFieldState::new(s.phi + f * d.0, s.z + f * d.1);
    let k1 = eval(state, drives[0]);
    let k2 = eval(shift(state, k1, h / 2.0), drives[1]);
    let k3 = eval(shift(state, k2, h / 2.0), drives[1]);
    let k4 = eval(shift(state, k3, h), drives[2]);
    let mut next = MeanFieldState::new(
        state.phi + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        state.z + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    );
    if next.z.abs() > 1.0 {
        *clamps += 1;
        next.z = next.z.clamp(-1.0, 1.0);
    }
    next
}

/// Sampled classical trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MfTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub clamp_events: usize,
}

/// Fixed-step RK4 from `t = 0` to `t_end`, recording every step.
pub fn integrate(initial: MeanFieldState, params: &ModelParams, t_end: f64, h: f64) -> Result<MfTrajectory> {
    params.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", "must be positive"));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::invalid("t_end", "must be non-negative"));
    }
    let ratio = t_end / h;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::invalid("h", "must divide t_end into a whole number of steps"));
    }
    let steps = steps as usize;
    let mut clamps = 0;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut state = initial;
    times.push(0.0);
    states.push(state);
    for k in 0..steps {
        let t = k as f64 * h;
        let drives = [t, t + h / 2.0, t + h].map(|s| (params.omega * s).cos());
        state = rk4_step(state, h, drives, params, &mut clamps);
        if !state.is_finite() {
            return Err(Error::Numerical(format!("trajectory diverged at t = {}", t + h)));
        }
        times.push((k + 1) as f64 * h);
        states.push(state);
    }
    Ok(MfTrajectory { times, states, clamp_events: clamps })
}

/// Drive factors at every RK4 stage of one period, reused each period so
/// stroboscopic maps are exactly periodic.
struct PeriodDrive {
    h: f64,
    /// `cos(omega t)` at `t = k h / 2`, `k = 0..=2K`.
    table: Vec<f64>,
}

impl PeriodDrive {
    fn new(params: &ModelParams, steps_per_period: usize) -> Self {
        let period = params.period();
        let h = period / steps_per_period as f64;
        let table = (0..=2 * steps_per_period)
            .map(|k| (params.omega * (k as f64 * h / 2.0)).cos())
            .collect();
        Self { h, table }
    }

    fn advance(&self, mut state: MeanFieldState, params: &ModelParams, clamps: &mut usize) -> MeanFieldState {
        let steps = (self.table.len() - 1) / 2;
        for k in 0..steps {
            let drives = [self.table[2 * k], self.table[2 * k + 1], self.table[2 * k + 2]];
            state = rk4_step(state, self.h, drives, params, clamps);
        }
        state
    }
}

/// Stroboscopic samples of one initial condition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectionTrajectory {
    pub initial: MeanFieldState,
    /// `(phi mod 2 pi, z)` after periods `1..=points.len()`.
    pub points: Vec<(f64, f64)>,
    pub clamp_events: usize,
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoincareSection {
    pub params: ModelParams,
    pub n_periods: usize,
    pub steps_per_period: usize,
    pub trajectories: Vec<SectionTrajectory>,
}

impl PoincareSection {
    pub fn clamp_events(&self) -> usize {
        self.trajectories.iter().map(|t| t.clamp_events).sum()
    }

    pub fn aborted(&self) -> usize {
        self.trajectories.iter().filter(|t| t.aborted.is_some()).count()
    }
}

fn section_trajectory(
    initial: MeanFieldState,
    params: &ModelParams,
    drive: &PeriodDrive,
    n_periods: usize,
) -> SectionTrajectory {
    let mut clamps = 0;
    let mut points = Vec::with_capacity(n_periods);
    let mut state = initial;
    let mut aborted = None;
    if !initial.is_finite() || initial.z.abs() > 1.0 {
        aborted = Some(format!("invalid initial condition ({}, {})", initial.phi, initial.z));
    } else {
        for period in 1..=n_periods {
            state = drive.advance(state, params, &mut clamps);
            if !state.is_finite() {
                aborted = Some(format!("diverged in period {period}"));
                break;
            }
            points.push((state.wrapped_phi(), state.z));
        }
    }
    if let Some(reason) = &aborted {
        debug!("trajectory from ({}, {}) aborted: {reason}", initial.phi, initial.z);
    }
    SectionTrajectory { initial, points, clamp_events: clamps, aborted }
}

/// Stroboscopic section of every initial condition, computed in parallel and
/// returned in input order.
pub fn poincare_section(
    initials: &[MeanFieldState],
    params: &ModelParams,
    n_periods: usize,
    steps_per_period: usize,
) -> Result<PoincareSection> {
    params.validate()?;
    if initials.is_empty() {
        return Err(Error::invalid("initials", "at least one initial condition is required"));
    }
    if steps_per_period == 0 {
        return Err(Error::invalid("steps_per_period", "must be at least 1"));
    }
    let drive = PeriodDrive::new(params, steps_per_period);
    let trajectories = initials
        .par_iter()
        .map(|&init| section_trajectory(init, params, &drive, n_periods))
        .collect();
    Ok(PoincareSection { params: *params, n_periods, steps_per_period, trajectories })
}

/// Uniform `n_phi x n_z` seeds over `[0, 2 pi) x [-z_max, z_max]`, phi fastest.
pub fn seed_grid(n_phi: usize, n_z: usize, z_max: f64) -> Result<Vec<MeanFieldState>> {
    if n_phi == 0 || n_z == 0 {
        return Err(Error::invalid("seeds", "grid needs at least one point per axis"));
    }
    if !(0.0..=1.0).contains(&z_max) {
        return Err(Error::invalid("z_max", "must lie in [0, 1]"));
    }
    let zs: Vec<f64> = if n_z == 1 {
        vec![0.0]
    } else {
        (0..n_z).map(|i| -z_max + 2.0 * z_max * i as f64 / (n_z - 1) as f64).collect()
    };
    Ok(zs
        .iter()
        .flat_map(|&z| (0..n_phi).map(move |j| MeanFieldState::new(TAU * j as f64 / n_phi as f64, z)))
        .collect())
}

fn wrap_signed(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(TAU) - PI;
    if w <= -PI { w + TAU } else { w }
}

/// Period map `P(x)` with `phi` kept unwrapped.
pub fn period_map(state: MeanFieldState, params: &ModelParams, steps_per_period: usize) -> MeanFieldState {
    let drive = PeriodDrive::new(params, steps_per_period);
    let mut clamps = 0;
    drive.advance(state, params, &mut clamps)
}

/// Newton iteration for a fixed point of the period map near `guess`.
pub fn refine_fixed_point(
    guess: MeanFieldState,
    params: &ModelParams,
    steps_per_period: usize,
) -> Result<MeanFieldState> {
    params.validate()?;
    let drive = PeriodDrive::new(params, steps_per_period);
    let map = |s: MeanFieldState| {
        let mut clamps = 0;
        drive.advance(s, params, &mut clamps)
    };
    let residual = |s: MeanFieldState| {
        let p = map(s);
        (wrap_signed(p.phi - s.phi), p.z - s.z)
    };
    let mut x = guess;
    for _ in 0..50 {
        let f = residual(x);
        if f.0.hypot(f.1) < 1e-12 {
            return Ok(MeanFieldState::new(x.phi.rem_euclid(TAU), x.z));
        }
        let d = 1e-7;
        let fp = residual(MeanFieldState::new(x.phi + d, x.z));
        let fz = residual(MeanFieldState::new(x.phi, x.z + d));
        let (a, b) = ((fp.0 - f.0) / d, (fz.0 - f.0) / d);
        let (c, e) = ((fp.1 - f.1) / d, (fz.1 - f.1) / d);
        let det = a * e - b * c;
        if det.abs() < 1e-14 {
            return Err(Error::Numerical("singular Jacobian in fixed-point search".into()));
        }
        let dphi = (e * f.0 - b * f.1) / det;
        let dz = (a * f.1 - c * f.0) / det;
        x = MeanFieldState::new(x.phi - dphi, (x.z - dz).clamp(-1.0 + Z_GUARD, 1.0 - Z_GUARD));
        if !x.is_finite() {
            break;
        }
    }
    let f = residual(x);
    if f.0.hypot(f.1) < 1e-9 {
        Ok(MeanFieldState::new(x.phi.rem_euclid(TAU), x.z))
    } else {
        Err(Error::Numerical(format!("fixed-point search did not converge (residual {:.3e})", f.0.hypot(f.1))))
    }
}

/// Classical point matching the mean spin direction of `SCS(theta, phi)`.
///
/// With the Dicke basis ordered from `m = J` and the Hamiltonian sign
/// conventions used here, the quantum mean spin follows the classical
/// equations under `z = -cos(theta)` and `phi -> -phi`.
pub fn bloch_to_classical(theta: f64, phi: f64) -> MeanFieldState {
    MeanFieldState::new((-phi).rem_euclid(TAU) % TAU, -theta.cos())
}

/// Inverse of [`bloch_to_classical`]: `(theta, phi)` with `phi` in `[0, 2 pi)`.
pub fn classical_to_bloch(state: MeanFieldState) -> (f64, f64) {
    let theta = (-state.z).clamp(-1.0, 1.0).acos();
    (theta, (-state.phi).rem_euclid(TAU) % TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn fig1(bx: f64) -> ModelParams {
        ModelParams::new(1, 10.0, FRAC_PI_2, bx)
    }

    #[test]
    fn rhs_hand_values() {
        let ((dphi, dz), clamped) = mf_rhs(MeanFieldState::new(FRAC_PI_2, 0.5), 0.0, &fig1(1.5));
        assert!(!clamped);
        assert_abs_diff_eq!(dz, 1.5 * 0.75f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(dphi, 5.0 - FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn rhs_limits() {
        let params = fig1(0.0);
        for (phi, z, t) in [(0.1, 0.3, 0.2), (2.0, -0.9, 7.5)] {
            assert_eq!(mf_rhs(MeanFieldState::new(phi, z), t, &params).0 .1, 0.0);
        }
        let driven = fig1(3.0);
        for (phi, t) in [(0.0, 0.0), (1.3, 0.37), (4.0, 2.5)] {
            assert_eq!(mf_rhs(MeanFieldState::new(phi, 0.0), t, &driven).0 .0, -FRAC_PI_2);
        }
    }

    #[test]
    fn poles_are_clamped_not_fatal() {
        let (d, clamped) = mf_rhs(MeanFieldState::new(1.0, 1.0), 0.0, &fig1(1.5));
        assert!(clamped);
        assert!(d.0.is_finite() && d.1.is_finite());
    }

    #[test]
    fn undriven_closed_form() {
        let params = fig1(0.0);
        let traj = integrate(MeanFieldState::new(0.4, 0.3), &params, 5.0, 1e-3).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            assert_abs_diff_eq!(s.z, 0.3, epsilon = 1e-12);
            assert_abs_diff_eq!(s.phi, 0.4 + (0.3 * 10.0 - FRAC_PI_2) * t, epsilon = 1e-8);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let params = fig1(1.5);
        let init = MeanFieldState::new(PI, -0.2);
        let reference = integrate(init, &params, 2.0, 1.0 / 6400.0).unwrap();
        let exact = *reference.states.last().unwrap();
        let err = |h: f64| {
            let s = *integrate(init, &params, 2.0, h).unwrap().states.last().unwrap();
            (s.phi - exact.phi).hypot(s.z - exact.z)
        };
        let ratio = err(1.0 / 200.0) / err(1.0 / 400.0);
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn static_drive_conserves_energy() {
        let params = fig1(1.5).with_omega(1e-12);
        let init = MeanFieldState::new(1.0, 0.4);
        let traj = integrate(init, &params, 100.0, 1e-3).unwrap();
        let e0 = classical_energy(init, 1.0, &params);
        let drift = traj.states.iter().map(|s| (classical_energy(*s, 1.0, &params) - e0).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-6, "drift {drift}");
    }

    #[test]
    fn integrate_rejects_uneven_step() {
        assert!(integrate(MeanFieldState::new(0.0, 0.0), &fig1(1.0), 1.0, 0.3).is_err());
    }

    #[test]
    fn undriven_section_is_horizontal() {
        let seeds = seed_grid(4, 3, 0.9).unwrap();
        let s = poincare_section(&seeds, &fig1(0.0), 50, 200).unwrap();
        for t in &s.trajectories {
            assert_eq!(t.points.len(), 50);
            let mean = t.points.iter().map(|p| p.1).sum::<f64>() / 50.0;
            let var = t.points.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(var < 1e-20);
            assert!(t.points.iter().all(|p| (0.0..TAU).contains(&p.0)));
        }
    }

    #[test]
    fn bad_seed_does_not_poison_section() {
        let seeds = [MeanFieldState::new(0.0, 0.1), MeanFieldState::new(f64::NAN, 0.0)];
        let s = poincare_section(&seeds, &fig1(1.5), 5, 100).unwrap();
        assert_eq!(s.trajectories[0].points.len(), 5);
        assert!(s.trajectories[1].aborted.is_some());
        assert_eq!(s.aborted(), 1);
    }

    #[test]
    fn fixed_point_is_stroboscopically_still() {
        let params = fig1(1.5);
        let fp = refine_fixed_point(MeanFieldState::new(PI, 0.1), &params, 1000).unwrap();
        let s = poincare_section(&[fp], &params, 100, 1000).unwrap();
        for &(phi, z) in &s.trajectories[0].points {
            assert!(wrap_signed(phi - fp.phi).hypot(z - fp.z) < 1e-3);
        }
    }

    #[test]
    fn seed_grid_layout() {
        let g = seed_grid(24, 24, 0.98).unwrap();
        assert_eq!(g.len(), 576);
        assert_eq!(g[0], MeanFieldState::new(0.0, -0.98));
        assert_abs_diff_eq!(g[575].z, 0.98, epsilon = 1e-15);
        assert_abs_diff_eq!(g[23].phi, TAU * 23.0 / 24.0, epsilon = 1e-15);
    }

    #[test]
    fn bloch_mapping_round_trips() {
        for (t, p) in [(0.3, 0.0), (2.4, 1.1), (PI / 2.0, PI)] {
            let (t2, p2) = classical_to_bloch(bloch_to_classical(t, p));
            assert_abs_diff_eq!(t, t2, epsilon = 1e-12);
            assert_abs_diff_eq!(p, p2, epsilon = 1e-12);
        }
        assert_eq!(bloch_to_classical(1.0, PI).phi, PI);
    }
}
