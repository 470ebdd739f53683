//! Adaptive time integration of the kinetics.
//!
//! The system is linear in the state with a time-dependent generator, and the
//! singlet/intermediate rates make it stiff (R78 = 1 GHz against kHz-scale
//! spin dynamics). An L-stable singly diagonally implicit Runge–Kutta method of
//! order 4 with an embedded order-3 solution is used; each stage is one 10×10
//! LU solve. The local error estimate is filtered through (I − hγA)⁻¹ so stiff,
//! already-decayed components do not throttle the step size.

use nalgebra::{Const, LU};

use super::model::{generator, Generator, KineticsParams, NVState, StateVector, DIM};
use crate::error::{invalid, Error, Result};

const GAMMA: f64 = 0.25;
const C: [f64; 5] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
const A: [[f64; 4]; 5] = [
    [0.0, 0.0, 0.0, 0.0],
    [0.5, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0],
];
const B: [f64; 5] = [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25];
const B_HAT: [f64; 5] = [59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0];

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step, s.
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl IntegratorOptions {
    pub fn with_rtol(rtol: f64) -> Self {
        Self {
            rtol,
            atol: (rtol * 1e-4).max(1e-16),
            ..Self::default()
        }
    }
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-13,
            initial_step: 1e-10,
            max_step: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }
}

/// Sampled solution of the kinetics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<NVState>,
    pub fluorescence: Vec<f64>,
}

impl Trajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            fluorescence: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, y: &StateVector) {
        let s = NVState::from_vector(y);
        self.times.push(t);
        self.fluorescence.push(s.fluorescence());
        self.states.push(s);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&NVState> {
        self.states.last()
    }

    /// CSV with columns `time_s,n1..n8,rho_re,rho_im,fluorescence`.
    pub fn to_csv_string(&self, header_comments: &[String]) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        for line in header_comments {
            for l in line.lines() {
                let _ = writeln!(s, "# {l}");
            }
        }
        s.push_str("time_s,n1,n2,n3,n4,n5,n6,n7,n8,rho_re,rho_im,fluorescence\n");
        for ((t, st), f) in self.times.iter().zip(&self.states).zip(&self.fluorescence) {
            let _ = write!(s, "{t:?}");
            for n in st.n {
                let _ = write!(s, ",{n:?}");
            }
            let _ = writeln!(s, ",{:?},{:?},{f:?}", st.rho01_re, st.rho01_im);
        }
        s
    }
}

// Lives on the stack for one integration call only.
#[allow(clippy::large_enum_variant)]
enum Source<'a> {
    Fixed(Generator),
    Varying(&'a KineticsParams),
}

impl Source<'_> {
    fn new(params: &KineticsParams) -> Source<'_> {
        if params.detuning.is_constant() {
            Source::Fixed(generator(params, params.detuning.at(0.0)))
        } else {
            Source::Varying(params)
        }
    }

    fn at(&self, t: f64) -> Generator {
        match self {
            Source::Fixed(a) => *a,
            Source::Varying(p) => generator(p, p.detuning.at(t)),
        }
    }
}

fn stage_matrix(a: &Generator, h: f64) -> LU<f64, Const<DIM>, Const<DIM>> {
    (Generator::identity() - a * (h * GAMMA)).lu()
}

struct Step {
    y: StateVector,
    err: f64,
}

fn try_step(src: &Source, t: f64, y: &StateVector, h: f64, opts: &IntegratorOptions) -> Option<Step> {
    let mut k = [StateVector::zeros(); 5];
    let fixed_lu = match src {
        Source::Fixed(a) => Some(stage_matrix(a, h)),
        Source::Varying(_) => None,
    };
    let mut last_lu = None;
    for i in 0..5 {
        let a = src.at(t + C[i] * h);
        let mut arg = *y;
        for j in 0..i {
            arg.axpy(h * A[i][j], &k[j], 1.0);
        }
        let rhs = a * arg;
        k[i] = match &fixed_lu {
            Some(lu) => lu.solve(&rhs)?,
            None => {
                let lu = stage_matrix(&a, h);
                let ki = lu.solve(&rhs)?;
                last_lu = Some(lu);
                ki
            }
        };
    }
    let mut y_new = *y;
    let mut e = StateVector::zeros();
    for i in 0..5 {
        y_new.axpy(h * B[i], &k[i], 1.0);
        e.axpy(h * (B[i] - B_HAT[i]), &k[i], 1.0);
    }
    let lu = fixed_lu.as_ref().or(last_lu.as_ref())?;
    let e = lu.solve(&e)?;
    let mut acc = 0.0;
    for i in 0..DIM {
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        acc += (e[i] / sc).powi(2);
    }
    let err = (acc / DIM as f64).sqrt();
    if !y_new.iter().all(|x| x.is_finite()) || !err.is_finite() {
        return None;
    }
    Some(Step { y: y_new, err })
}

/// Advances `y` from `t0` through each of `stops` (ascending, ≥ t0), calling
/// `record` with the state at every stop. Steps are clipped to land on stops.
pub(crate) fn propagate(
    params: &KineticsParams,
    y0: StateVector,
    t0: f64,
    stops: &[f64],
    opts: &IntegratorOptions,
    mut record: impl FnMut(f64, &StateVector),
) -> Result<StateVector> {
    params.validate()?;
    if !(opts.rtol > 0.0 && opts.atol > 0.0) {
        return Err(invalid("tolerance", "rtol and atol must be > 0"));
    }
    if y0.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidState("non-finite initial state".into()));
    }
    let src = Source::new(params);
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.initial_step;
    let mut steps = 0usize;
    for &stop in stops {
        if stop < t {
            return Err(invalid("sample_times", "must be ascending and >= start time"));
        }
        while t < stop {
            let remaining = stop - t;
            let h_lim = h.min(opts.max_step);
            let clipped = h_lim >= remaining * (1.0 - 1e-12);
            let h_try = if clipped { remaining } else { h_lim };
            if h_try <= 1e-14 * t.abs().max(1e-9) {
                if remaining <= 1e-14 * t.abs().max(1e-9) {
                    t = stop;
                    break;
                }
                return Err(Error::Stiffness {
                    t,
                    h: h_try,
                    rate_scale: params.dominant_rate(),
                });
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Stiffness {
                    t,
                    h: h_try,
                    rate_scale: params.dominant_rate(),
                });
            }
            match try_step(&src, t, &y, h_try, opts) {
                Some(step) if step.err <= 1.0 => {
                    t = if clipped { stop } else { t + h_try };
                    y = step.y;
                    let fac = if step.err == 0.0 {
                        5.0
                    } else {
                        (0.9 * step.err.powf(-0.25)).clamp(0.2, 5.0)
                    };
                    // Clipped steps are artificially short; don't let them shrink h.
                    h = if clipped { h.max(h_try * fac) } else { h_try * fac };
                }
                Some(step) => {
                    h = h_try * (0.9 * step.err.powf(-0.25)).clamp(0.1, 0.9);
                }
                None => h = h_try * 0.25,
            }
        }
        record(stop, &y);
    }
    Ok(y)
}

/// Integrates over `[0, duration]`, recording every accepted step.
pub fn integrate(state0: &NVState, params: &KineticsParams, duration: f64, tolerance: f64) -> Result<Trajectory> {
    if !(duration >= 0.0) {
        return Err(invalid("duration", format!("must be >= 0, got {duration}")));
    }
    let opts = IntegratorOptions::with_rtol(tolerance);
    let mut traj = Trajectory::with_capacity(64);
    traj.push(0.0, &state0.to_vector());
    if duration == 0.0 {
        return Ok(traj);
    }
    // Record the natural step sequence by stepping to the end one step at a time.
    params.validate()?;
    let src = Source::new(params);
    let mut t = 0.0;
    let mut y = state0.to_vector();
    let mut h = opts.initial_step;
    let mut steps = 0usize;
    while t < duration {
        let remaining = duration - t;
        let clipped = h >= remaining * (1.0 - 1e-12);
        let h_try = if clipped { remaining } else { h };
        steps += 1;
        if h_try <= 1e-14 * t.max(1e-9) || steps > opts.max_steps {
            return Err(Error::Stiffness {
                t,
                h: h_try,
                rate_scale: params.dominant_rate(),
            });
        }
        match try_step(&src, t, &y, h_try, &opts) {
            Some(step) if step.err <= 1.0 => {
                t = if clipped { duration } else { t + h_try };
                y = step.y;
                traj.push(t, &y);
                let fac = if step.err == 0.0 {
                    5.0
                } else {
                    (0.9 * step.err.powf(-0.25)).clamp(0.2, 5.0)
                };
                h = h_try * fac;
            }
            Some(step) => h = h_try * (0.9 * step.err.powf(-0.25)).clamp(0.1, 0.9),
            None => h = h_try * 0.25,
        }
    }
    Ok(traj)
}

/// Integrates from t = 0 and samples the state at `sample_times` (ascending, ≥ 0).
pub fn integrate_at(
    state0: &NVState,
    params: &KineticsParams,
    sample_times: &[f64],
    tolerance: f64,
) -> Result<Trajectory> {
    integrate_at_with(state0, params, sample_times, &IntegratorOptions::with_rtol(tolerance))
}

pub fn integrate_at_with(
    state0: &NVState,
    params: &KineticsParams,
    sample_times: &[f64],
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    if sample_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("sample_times", "must be strictly increasing"));
    }
    let mut traj = Trajectory::with_capacity(sample_times.len());
    propagate(params, state0.to_vector(), 0.0, sample_times, opts, |t, y| {
        traj.push(t, y)
    })?;
    Ok(traj)
}

/// State after `duration`, without storing intermediate samples.
pub fn evolve(state0: &NVState, params: &KineticsParams, duration: f64, opts: &IntegratorOptions) -> Result<NVState> {
    let y = propagate(params, state0.to_vector(), 0.0, &[duration], opts, |_, _| {})?;
    Ok(NVState::from_vector(&y))
}
