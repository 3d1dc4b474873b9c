//! Classical θ-interpolation time-stepping baselines for the QPME
//! (implicit θ=0, midpoint θ=1/2, explicit θ=1), with CFL diagnostics.

use crate::anisotropy::TensorDecomposition;
use crate::grid::{Field, StaggerTag, TimeTag};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// θ-scheme parameters; θ=0 implicit, θ=1/2 midpoint, θ=1 explicit.
#[derive(Clone, Copy, Debug)]
pub struct ThetaScheme {
    pub theta: f64,
    /// Nonlinear-solve tolerance (sup-norm residual, relative).
    pub tol: f64,
    pub max_newton: usize,
}

impl ThetaScheme {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Invalid("theta must lie in [0, 1]".into()));
        }
        Ok(ThetaScheme { theta, tol: 1e-12, max_newton: 50 })
    }
}

/// CFL bound h²/max(u) for the explicit scheme; ∞ when max(u) ≤ 0.
pub fn cfl_bound(u: &Field, h: f64) -> f64 {
    let umax = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if umax <= 0.0 {
        f64::INFINITY
    } else {
        h * h / umax
    }
}

const BLOWUP: f64 = 1e10;

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Apply L_h (given by its rows) to the entrywise square of v.
fn lh_square(rows: &[Vec<(usize, f64)>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (i, row) in rows.iter().enumerate() {
        let mut acc = 0.0;
        for &(j, w) in row {
            acc += w * v[j] * v[j];
        }
        out[i] = acc;
    }
    out
}

/// Solve v + c·L_h v² = rhs by Newton iteration starting from `guess`.
fn solve_nonlinear(
    rhs: &[f64],
    c: f64,
    rows: &[Vec<(usize, f64)>],
    guess: &[f64],
    tol: f64,
    max_newton: usize,
) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut v = guess.to_vec();
    let scale = 1.0 + sup(rhs);
    for _ in 0..max_newton {
        let lv = lh_square(rows, &v);
        let mut resid = vec![0.0; n];
        let mut rmax = 0.0f64;
        for i in 0..n {
            resid[i] = v[i] + c * lv[i] - rhs[i];
            rmax = rmax.max(resid[i].abs());
        }
        if !rmax.is_finite() || sup(&v) > BLOWUP {
            return Err(Error::Numerical("nonlinear step blew up".into()));
        }
        if rmax <= tol * scale {
            return Ok(v);
        }
        // Jacobian I + c·L_h·diag(2v).
        let mut jac = DMatrix::<f64>::identity(n, n);
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                jac[(i, j)] += c * w * 2.0 * v[j];
            }
        }
        let b = DVector::from_column_slice(&resid);
        let lu = jac.lu();
        let Some(delta) = lu.solve(&b) else {
            return Err(Error::Numerical("singular Jacobian in nonlinear step".into()));
        };
        for i in 0..n {
            v[i] -= delta[i];
        }
    }
    Err(Error::Numerical(format!(
        "nonlinear step did not converge in {max_newton} Newton iterations"
    )))
}

/// First step: solve u(τ) + τ(1−θ)·L_h u(τ)² = u₀; identity for θ=1.
pub fn theta_first_step(
    u0: &Field,
    scheme: &ThetaScheme,
    dec: &TensorDecomposition,
) -> Result<Field> {
    let spec = u0.spec;
    let tau = spec.tau();
    let mut out = u0.clone();
    if scheme.theta < 1.0 {
        let rows = dec.lh_rows();
        out.values = solve_nonlinear(
            &u0.values,
            tau * (1.0 - scheme.theta),
            &rows,
            &u0.values,
            scheme.tol,
            scheme.max_newton,
        )?;
    }
    if sup(&out.values) > BLOWUP {
        return Err(Error::Numerical("first step blew up".into()));
    }
    Ok(out)
}

/// One θ-step from u(t−τ) to u(t+τ):
/// u(t+τ) + τ(1−θ)·L_h u(t+τ)² = u(t−τ) − τθ·L_h u(t−τ)².
pub fn theta_step(
    u_prev: &Field,
    scheme: &ThetaScheme,
    dec: &TensorDecomposition,
) -> Result<Field> {
    let spec = u_prev.spec;
    let tau = spec.tau();
    let rows = dec.lh_rows();
    let lprev = lh_square(&rows, &u_prev.values);
    let mut rhs = u_prev.values.clone();
    for (r, l) in rhs.iter_mut().zip(&lprev) {
        *r -= tau * scheme.theta * l;
    }
    let mut out = u_prev.clone();
    if scheme.theta >= 1.0 {
        out.values = rhs;
    } else {
        // Explicit update as initial guess for the nonlinear solve.
        let mut guess = u_prev.values.clone();
        for (g, l) in guess.iter_mut().zip(&lprev) {
            *g -= tau * l;
        }
        out.values = solve_nonlinear(
            &rhs,
            tau * (1.0 - scheme.theta),
            &rows,
            &guess,
            scheme.tol,
            scheme.max_newton,
        )?;
    }
    if sup(&out.values) > BLOWUP {
        return Err(Error::Numerical("time step blew up (norm > 1e10)".into()));
    }
    Ok(out)
}

/// Full θ-scheme run over the grid's staggered times.
pub struct ThetaRun {
    /// u on the staggered time grid.
    pub u: Field,
    /// CFL bound h²/max(u₀).
    pub cfl: f64,
    /// Whether the half-timestep τ exceeded the CFL bound (explicit warning).
    pub cfl_exceeded: bool,
}

/// March the θ-scheme from u₀ across all N_tau staggered times.
pub fn run_theta(
    u0: &Field,
    scheme: &ThetaScheme,
    dec: &TensorDecomposition,
) -> Result<ThetaRun> {
    let spec = u0.spec;
    let cfl = cfl_bound(u0, spec.h());
    let cfl_exceeded = spec.tau() > cfl;
    let mut u = Field::zeros(spec, StaggerTag::new(TimeTag::Staggered, [0, 0]));
    let mut cur = theta_first_step(u0, scheme, dec)?;
    u.slice_mut(0).copy_from_slice(&cur.values);
    for k in 1..spec.n_tau {
        cur = theta_step(&cur, scheme, dec)?;
        u.slice_mut(k).copy_from_slice(&cur.values);
    }
    Ok(ThetaRun { u, cfl, cfl_exceeded })
}
