use crate::error::{Error, Result};
use crate::real::Real;

/// Observed projection of a trajectory on a uniform time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseTrajectory<F> {
    pub times: Vec<F>,
    pub samples: Vec<Vec<F>>,
}

/// Classical fourth-order Runge–Kutta with a fixed step no larger than
/// `dt_max`, reporting `observe(state)` on `grid_points` uniformly spaced
/// times covering `[0, t_end]`.
///
/// The step is shrunk so that every grid time is a step node, so the dense
/// output carries the full RK4 accuracy. Returns the trajectory and the
/// final state.
pub fn rk4_dense<F, V, O>(
    mut field: V,
    y0: &[F],
    t_end: F,
    dt_max: F,
    grid_points: usize,
    mut observe: O,
) -> Result<(DenseTrajectory<F>, Vec<F>)>
where
    F: Real,
    V: FnMut(&[F], &mut [F]) -> Result<()>,
    O: FnMut(&[F]) -> Vec<F>,
{
    if !(dt_max > F::zero()) {
        return Err(Error::InvalidConfig("reference step must be positive".into()));
    }
    if t_end < F::zero() || !t_end.is_finite() {
        return Err(Error::InvalidConfig("end time must be finite and non-negative".into()));
    }
    let mut y = y0.to_vec();
    if t_end == F::zero() {
        return Ok((
            DenseTrajectory {
                times: vec![F::zero()],
                samples: vec![observe(&y)],
            },
            y,
        ));
    }
    if grid_points < 2 {
        return Err(Error::InvalidConfig("dense output needs at least two grid points".into()));
    }
    let intervals = grid_points - 1;
    let per_interval = (t_end / (F::from_usize(intervals).unwrap() * dt_max))
        .ceil()
        .to_usize()
        .unwrap()
        .max(1);
    let total_steps = intervals * per_interval;
    let dt = t_end / F::from_usize(total_steps).unwrap();
    let half = dt * F::c(0.5);
    let sixth = dt / F::c(6.0);

    let n = y.len();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![F::zero(); n], vec![F::zero(); n], vec![F::zero(); n], vec![F::zero(); n]);
    let mut tmp = vec![F::zero(); n];

    let mut times = Vec::with_capacity(grid_points);
    let mut samples = Vec::with_capacity(grid_points);
    times.push(F::zero());
    samples.push(observe(&y));

    for step in 1..=total_steps {
        field(&y, &mut k1)?;
        for j in 0..n {
            tmp[j] = y[j] + half * k1[j];
        }
        field(&tmp, &mut k2)?;
        for j in 0..n {
            tmp[j] = y[j] + half * k2[j];
        }
        field(&tmp, &mut k3)?;
        for j in 0..n {
            tmp[j] = y[j] + dt * k3[j];
        }
        field(&tmp, &mut k4)?;
        let mut finite = true;
        for j in 0..n {
            y[j] = y[j] + sixth * (k1[j] + F::c(2.0) * (k2[j] + k3[j]) + k4[j]);
            finite &= y[j].is_finite();
        }
        if !finite {
            return Err(Error::NonFinite("reference integrator state"));
        }
        if step % per_interval == 0 {
            times.push(dt * F::from_usize(step).unwrap());
            samples.push(observe(&y));
        }
    }
    Ok((DenseTrajectory { times, samples }, y))
}
