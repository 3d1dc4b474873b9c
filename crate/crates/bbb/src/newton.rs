//! Damped Newton minimization of the dual energy in φ with a logarithmic
//! barrier keeping the density strictly positive.
//!
//! Unknowns are the centered-time slices φ(T0), ..., φ(T−2τ); the terminal
//! slice is pinned at zero. Every perspective slot contributes w·𝒫(n, ρ) with
//! numerator n and denominator ρ affine in φ, plus a barrier term −μ·c·log ρ.
//! The Hessian is block tridiagonal in time; it is solved by a block
//! factorization sweep with dense per-slice blocks up to a size cap, and by
//! Jacobi-preconditioned conjugate gradients beyond it.

use crate::anisotropy::{apply_lh, TensorDecomposition};
use crate::energy::{
    energy_burgers, energy_qpme, phi_to_mrho_burgers, phi_to_mrho_qpme, DualPotential,
};
use crate::grid::{dhe, dt_stagger, Field, GridSpec, StaggerTag, TimeTag};
use crate::problem::{SolveResult, TraceRow};
use crate::recovery::{recover_u_burgers, recover_u_qpme};
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

/// Which dual energy the solver minimizes.
pub enum NewtonProblem<'a> {
    Qpme { dec: &'a TensorDecomposition },
    Burgers { nu: f64 },
}

/// Barrier schedule, tolerances, and line-search parameters.
#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    pub mu_init: f64,
    pub mu_factor: f64,
    pub mu_min: f64,
    /// Maximum number of barrier stages.
    pub max_outer: usize,
    /// Maximum Newton steps per stage.
    pub max_inner: usize,
    /// Convergence threshold on the volume-normalized gradient sup norm.
    pub grad_tol: f64,
    /// Backtracking shrink factor.
    pub ls_shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub ls_c1: f64,
    /// Largest unknown count handled by the dense block factorization.
    pub direct_cap: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            mu_init: 1e-2,
            mu_factor: 0.1,
            mu_min: 1e-10,
            max_outer: 40,
            max_inner: 60,
            grad_tol: 1e-8,
            ls_shrink: 0.5,
            ls_c1: 1e-4,
            direct_cap: 20000,
        }
    }
}

/// Quadrature prefactor c = 2τ(2h)^d shared by energy, barrier, and gradient
/// normalization.
fn volume_factor(spec: &GridSpec) -> f64 {
    2.0 * spec.tau() * spec.cell_volume()
}

/// Visit every perspective slot of the energy: f(w, n, ρ, numerator dofs,
/// denominator dofs), with dofs as (flat unknown index, coefficient) pairs over
/// the free φ entries (slice k < N_tau, flat index k·N_h^d + s).
fn for_each_slot(
    phi: &Field,
    prob: &NewtonProblem,
    mut f: impl FnMut(f64, f64, f64, &[(usize, f64)], &[(usize, f64)]),
) {
    let spec = phi.spec;
    let n_tau = spec.n_tau;
    let ns = spec.n_space();
    let i2t = 1.0 / (2.0 * spec.tau());
    match prob {
        NewtonProblem::Qpme { dec } => {
            let rows = dec.lh_rows();
            let m = dt_stagger(phi);
            let mut rho = apply_lh(phi, dec);
            for v in rho.values.iter_mut() {
                *v += 1.0;
            }
            let w = 0.5 * volume_factor(&spec);
            let mut nd: Vec<(usize, f64)> = Vec::with_capacity(2);
            let mut dd: Vec<(usize, f64)> = Vec::with_capacity(16);
            for k in 0..n_tau {
                for s in 0..ns {
                    nd.clear();
                    nd.push((k * ns + s, -i2t));
                    if k + 1 < n_tau {
                        nd.push(((k + 1) * ns + s, i2t));
                    }
                    let nval = m.at(k, s);
                    for kc in [k, k + 1] {
                        dd.clear();
                        if kc < n_tau {
                            for &(col, val) in &rows[s] {
                                dd.push((kc * ns + col, val));
                            }
                        }
                        f(w, nval, rho.at(kc, s), &nd, &dd);
                    }
                }
            }
        }
        NewtonProblem::Burgers { nu } => {
            assert_eq!(spec.d, 1, "the Burgers energy is one-dimensional");
            let h = spec.h();
            let i2h = 1.0 / (2.0 * h);
            let lap_c = nu / (4.0 * h * h);
            let m = dt_stagger(phi);
            let dphi = dhe(phi, [1, 0]);
            let mut rho = dphi;
            for v in rho.values.iter_mut() {
                *v = 1.0 - *v;
            }
            let w = 0.25 * volume_factor(&spec);
            let mut nd: Vec<(usize, f64)> = Vec::with_capacity(5);
            let mut dd: Vec<(usize, f64)> = Vec::with_capacity(2);
            for k in 0..n_tau {
                for s in 0..ns {
                    let sm = if s == 0 { ns - 1 } else { s - 1 };
                    let sp = if s + 1 == ns { 0 } else { s + 1 };
                    for kc in [k, k + 1] {
                        let drho = (rho.at(kc, s) - rho.at(kc, sm)) * i2h;
                        let nval = m.at(k, s) - nu * drho;
                        nd.clear();
                        nd.push((k * ns + s, -i2t));
                        if k + 1 < n_tau {
                            nd.push(((k + 1) * ns + s, i2t));
                        }
                        if kc < n_tau {
                            // ν∂_hhφ at the centered point, in φ dofs.
                            nd.push((kc * ns + sm, lap_c));
                            nd.push((kc * ns + s, -2.0 * lap_c));
                            nd.push((kc * ns + sp, lap_c));
                        }
                        for sx in [sm, s] {
                            dd.clear();
                            if kc < n_tau {
                                let sxp = if sx + 1 == ns { 0 } else { sx + 1 };
                                // ρ(x+h) = 1 − (φ(x+2h)−φ(x))/(2h).
                                dd.push((kc * ns + sx, i2h));
                                dd.push((kc * ns + sxp, -i2h));
                            }
                            f(w, nval, rho.at(kc, sx), &nd, &dd);
                        }
                    }
                }
            }
        }
    }
}

/// Per-slot curvature data for matrix-free Hessian application.
struct SlotEntry {
    hnn: f64,
    hnp: f64,
    hpp: f64,
    nd: Vec<(usize, f64)>,
    dd: Vec<(usize, f64)>,
}

struct SlotCache {
    entries: Vec<SlotEntry>,
    n_unk: usize,
}

impl SlotCache {
    /// out = H·v (barrier Hessian).
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for e in &self.entries {
            let mut dn = 0.0;
            let mut dp = 0.0;
            for &(i, c) in &e.nd {
                dn += c * v[i];
            }
            for &(i, c) in &e.dd {
                dp += c * v[i];
            }
            for &(i, c) in &e.nd {
                out[i] += c * (e.hnn * dn + e.hnp * dp);
            }
            for &(i, c) in &e.dd {
                out[i] += c * (e.hnp * dn + e.hpp * dp);
            }
        }
    }

    /// Diagonal of the Hessian, for Jacobi preconditioning.
    fn diagonal(&self) -> Vec<f64> {
        let mut diag = vec![0.0; self.n_unk];
        for e in &self.entries {
            for &(i, c) in &e.nd {
                diag[i] += e.hnn * c * c;
            }
            for &(i, c) in &e.dd {
                diag[i] += e.hpp * c * c;
            }
            for &(i, ci) in &e.nd {
                for &(j, cj) in &e.dd {
                    if i == j {
                        diag[i] += 2.0 * e.hnp * ci * cj;
                    }
                }
            }
        }
        diag
    }
}

struct Eval {
    value: f64,
    grad: Vec<f64>,
    min_rho: f64,
    cache: Option<SlotCache>,
}

/// Barrier energy value with optional gradient and curvature cache. The value
/// is +∞ when any slot density is nonpositive.
fn eval(
    phi: &Field,
    mu: f64,
    prob: &NewtonProblem,
    u0: &Field,
    want_grad: bool,
    want_cache: bool,
) -> Eval {
    let spec = phi.spec;
    let n_tau = spec.n_tau;
    let ns = spec.n_space();
    let n_unk = n_tau * ns;
    let c = volume_factor(&spec);
    let mut value = 0.0f64;
    let mut min_rho = f64::INFINITY;
    let mut bad = false;
    let mut grad = if want_grad { vec![0.0; n_unk] } else { Vec::new() };
    let mut entries: Vec<SlotEntry> = Vec::new();
    for_each_slot(phi, prob, |w, n, rho, nd, dd| {
        if bad {
            return;
        }
        if rho <= 0.0 {
            bad = true;
            return;
        }
        min_rho = min_rho.min(rho);
        value += w * n * n / (2.0 * rho) - mu * c * rho.ln();
        if want_grad {
            let gn = w * n / rho;
            let gp = -w * n * n / (2.0 * rho * rho) - mu * c / rho;
            for &(i, co) in nd {
                grad[i] += co * gn;
            }
            for &(i, co) in dd {
                grad[i] += co * gp;
            }
        }
        if want_cache {
            entries.push(SlotEntry {
                hnn: w / rho,
                hnp: -w * n / (rho * rho),
                hpp: w * n * n / (rho * rho * rho) + mu * c / (rho * rho),
                nd: nd.to_vec(),
                dd: dd.to_vec(),
            });
        }
    });
    if bad {
        return Eval { value: f64::INFINITY, grad: Vec::new(), min_rho: 0.0, cache: None };
    }
    // Linear coupling to the initial datum: −c Σ m·u₀.
    let m = dt_stagger(phi);
    let i2t = 1.0 / (2.0 * spec.tau());
    for k in 0..n_tau {
        for s in 0..ns {
            value -= c * m.at(k, s) * u0.values[s];
            if want_grad {
                grad[k * ns + s] += c * u0.values[s] * i2t;
                if k + 1 < n_tau {
                    grad[(k + 1) * ns + s] -= c * u0.values[s] * i2t;
                }
            }
        }
    }
    let cache = want_cache.then_some(SlotCache { entries, n_unk });
    Eval { value, grad, min_rho, cache }
}

/// Barrier energy E(φ) − μ·c·Σ_slots log ρ(φ) and its exact gradient with
/// respect to the interior φ unknowns (value +∞ and empty gradient when some
/// density is nonpositive).
pub fn barrier_energy(
    phi: &DualPotential,
    mu: f64,
    prob: &NewtonProblem,
    u0: &Field,
) -> (f64, Vec<f64>) {
    let e = eval(&phi.phi, mu, prob, u0, true, false);
    (e.value, e.grad)
}

/// Assemble the block-tridiagonal barrier Hessian: diagonal blocks d[k] and
/// upper couplings u[k] between slices k and k+1, each N_h^d square.
fn assemble_blocks(cache: &SlotCache, n_tau: usize, ns: usize) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let mut d: Vec<DMatrix<f64>> = (0..n_tau).map(|_| DMatrix::zeros(ns, ns)).collect();
    let mut u: Vec<DMatrix<f64>> =
        (0..n_tau.saturating_sub(1)).map(|_| DMatrix::zeros(ns, ns)).collect();
    let mut place = |p: usize, q: usize, v: f64| {
        let (kp, sp) = (p / ns, p % ns);
        let (kq, sq) = (q / ns, q % ns);
        if kp == kq {
            d[kp][(sp, sq)] += v;
        } else if kq == kp + 1 {
            u[kp][(sp, sq)] += v;
        }
        // kq == kp − 1 entries are the transposes of stored upper blocks.
    };
    for e in &cache.entries {
        for &(pa, ca) in &e.nd {
            for &(pb, cb) in &e.nd {
                place(pa, pb, e.hnn * ca * cb);
            }
        }
        for &(pa, ca) in &e.nd {
            for &(pb, cb) in &e.dd {
                let v = e.hnp * ca * cb;
                place(pa, pb, v);
                place(pb, pa, v);
            }
        }
        for &(pa, ca) in &e.dd {
            for &(pb, cb) in &e.dd {
                place(pa, pb, e.hpp * ca * cb);
            }
        }
    }
    (d, u)
}

enum Fac {
    Chol(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Fac {
    fn new(s: DMatrix<f64>) -> Result<Self> {
        match Cholesky::new(s.clone()) {
            Some(c) => Ok(Fac::Chol(c)),
            None => {
                let lu = s.lu();
                if !lu.is_invertible() {
                    return Err(Error::Numerical("singular Hessian block".into()));
                }
                Ok(Fac::Lu(lu))
            }
        }
    }

    fn solve_mat(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Fac::Chol(c) => Ok(c.solve(b)),
            Fac::Lu(l) => {
                l.solve(b).ok_or_else(|| Error::Numerical("singular Hessian block".into()))
            }
        }
    }

    fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Fac::Chol(c) => Ok(c.solve(b)),
            Fac::Lu(l) => {
                l.solve(b).ok_or_else(|| Error::Numerical("singular Hessian block".into()))
            }
        }
    }
}

/// Block-tridiagonal factorization via the Schur-complement sweep
/// S_0 = D_0, S_k = D_k − U_{k−1}ᵀ S_{k−1}⁻¹ U_{k−1}.
struct BlockFactor {
    fac: Vec<Fac>,
    u: Vec<DMatrix<f64>>,
    ns: usize,
}

impl BlockFactor {
    fn new(d: Vec<DMatrix<f64>>, u: Vec<DMatrix<f64>>) -> Result<Self> {
        let nb = d.len();
        let ns = d[0].nrows();
        let mut fac: Vec<Fac> = Vec::with_capacity(nb);
        for (k, dk) in d.into_iter().enumerate() {
            if k == 0 {
                fac.push(Fac::new(dk)?);
            } else {
                let w = fac[k - 1].solve_mat(&u[k - 1])?;
                let s = dk - u[k - 1].transpose() * w;
                fac.push(Fac::new(s)?);
            }
        }
        Ok(BlockFactor { fac, u, ns })
    }

    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let nb = self.fac.len();
        let ns = self.ns;
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(nb);
        for k in 0..nb {
            let mut rk = DVector::from_column_slice(&rhs[k * ns..(k + 1) * ns]);
            if k > 0 {
                let z = self.fac[k - 1].solve_vec(&y[k - 1])?;
                rk -= self.u[k - 1].transpose() * z;
            }
            y.push(rk);
        }
        let mut x = vec![DVector::<f64>::zeros(ns); nb];
        x[nb - 1] = self.fac[nb - 1].solve_vec(&y[nb - 1])?;
        for k in (0..nb.saturating_sub(1)).rev() {
            let r = &y[k] - &self.u[k] * &x[k + 1];
            x[k] = self.fac[k].solve_vec(&r)?;
        }
        let mut out = vec![0.0; nb * ns];
        for k in 0..nb {
            out[k * ns..(k + 1) * ns].copy_from_slice(x[k].as_slice());
        }
        Ok(out)
    }
}

/// Jacobi-preconditioned conjugate gradients on the cached Hessian.
fn cg_solve(cache: &SlotCache, b: &[f64], rel_tol: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let n = b.len();
    let diag = cache.diagonal();
    let prec = |r: &[f64], z: &mut [f64]| {
        for i in 0..n {
            z[i] = if diag[i] > 0.0 { r[i] / diag[i] } else { r[i] };
        }
    };
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return (vec![0.0; n], 0.0);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    prec(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut hp = vec![0.0; n];
    let mut relres = 1.0;
    for _ in 0..max_iter {
        cache.apply(&p, &mut hp);
        let php: f64 = p.iter().zip(&hp).map(|(a, b)| a * b).sum();
        if php <= 0.0 {
            break;
        }
        let alpha = rz / php;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        relres = r.iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
        if relres <= rel_tol {
            break;
        }
        prec(&r, &mut z);
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    (x, relres)
}

/// Compute the Newton direction d = −H⁻¹g to relative residual 1e−10.
fn newton_direction(
    cache: &SlotCache,
    grad: &[f64],
    n_tau: usize,
    ns: usize,
    direct_cap: usize,
) -> Result<Vec<f64>> {
    let n = grad.len();
    let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
    let rhs_norm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut dir;
    if n <= direct_cap {
        let (d, u) = assemble_blocks(cache, n_tau, ns);
        let f = BlockFactor::new(d, u)?;
        dir = f.solve(&rhs)?;
        // One step of iterative refinement, then verify the residual.
        let mut hd = vec![0.0; n];
        cache.apply(&dir, &mut hd);
        let mut res: Vec<f64> = (0..n).map(|i| -grad[i] - hd[i]).collect();
        let corr = f.solve(&res)?;
        for i in 0..n {
            dir[i] += corr[i];
        }
        cache.apply(&dir, &mut hd);
        for i in 0..n {
            res[i] = -grad[i] - hd[i];
        }
        let rr = res.iter().map(|x| x * x).sum::<f64>().sqrt() / rhs_norm.max(f64::MIN_POSITIVE);
        if rr > 1e-8 {
            return Err(Error::Numerical(format!(
                "Newton system residual {rr:.3e} after refinement"
            )));
        }
    } else {
        let (x, relres) = cg_solve(cache, &rhs, 1e-10, 40 * n);
        if relres > 1e-6 {
            return Err(Error::Numerical(format!(
                "conjugate gradients stalled at relative residual {relres:.3e}"
            )));
        }
        dir = x;
    }
    Ok(dir)
}

/// Minimize the barrier energy over φ with a decreasing-μ schedule and damped
/// Newton steps. `init` optionally replaces the default φ = 0 starting point
/// (it must be strictly feasible).
pub fn solve_newton(
    prob: &NewtonProblem,
    u0: &Field,
    cfg: &NewtonConfig,
    init: Option<&DualPotential>,
) -> Result<SolveResult> {
    let spec = u0.spec;
    let n_tau = spec.n_tau;
    let ns = spec.n_space();
    let c = volume_factor(&spec);
    let mut phi = match init {
        Some(p) => {
            p.check_terminal()?;
            p.phi.clone()
        }
        None => Field::zeros(spec, StaggerTag::centered(TimeTag::Centered)),
    };
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut iterations = 0usize;
    let mut grad_norm = f64::INFINITY;
    let mut min_rho = f64::INFINITY;
    let mut mu = cfg.mu_init;
    for _stage in 0..cfg.max_outer {
        let stage_tol =
            if mu <= cfg.mu_min { cfg.grad_tol } else { cfg.grad_tol.max(0.1 * mu) };
        let mut last_step = 0.0f64;
        for inner in 0..cfg.max_inner {
            let ev = eval(&phi, mu, prob, u0, true, true);
            if !ev.value.is_finite() {
                return Err(Error::Numerical("iterate left the feasible region".into()));
            }
            grad_norm = ev.grad.iter().fold(0.0f64, |a, g| a.max(g.abs())) / c;
            min_rho = ev.min_rho;
            trace.push(TraceRow {
                mu,
                inner,
                energy: ev.value,
                grad_norm,
                step: last_step,
                min_rho: ev.min_rho,
            });
            if grad_norm <= stage_tol {
                break;
            }
            let cache = ev.cache.as_ref().expect("curvature cache requested");
            let dir = newton_direction(cache, &ev.grad, n_tau, ns, cfg.direct_cap)?;
            let slope: f64 = ev.grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            if slope >= 0.0 {
                return Err(Error::Numerical("Newton direction is not a descent direction".into()));
            }
            // The predicted decrease is at the resolution limit of the energy:
            // nothing left to gain in double precision at this stage.
            if -slope <= 4e-15 * (1.0 + ev.value.abs()) {
                break;
            }
            let mut alpha = 1.0f64;
            loop {
                let mut cand = phi.clone();
                for (i, d) in dir.iter().enumerate() {
                    cand.values[i] += alpha * d;
                }
                let cv = eval(&cand, mu, prob, u0, false, false);
                if cv.value.is_finite()
                    && cv.min_rho > 0.0
                    && cv.value <= ev.value + cfg.ls_c1 * alpha * slope
                {
                    phi = cand;
                    break;
                }
                alpha *= cfg.ls_shrink;
                if alpha < 1e-14 {
                    return Err(Error::Numerical(format!(
                        "line search failed at mu={mu:.2e}, |grad|={grad_norm:.3e}, \
                         energy={:.6e}",
                        ev.value
                    )));
                }
            }
            last_step = alpha;
            iterations += 1;
        }
        if mu <= cfg.mu_min {
            break;
        }
        mu = (mu * cfg.mu_factor).max(cfg.mu_min);
    }
    let dual = DualPotential { phi };
    let (m, rho, u, flagged, energy) = match prob {
        NewtonProblem::Qpme { dec } => {
            let v = phi_to_mrho_qpme(&dual, dec);
            let (u, flagged) = recover_u_qpme(&v);
            let e = energy_qpme(&v, u0);
            (v.m, v.rho, u, flagged, e)
        }
        NewtonProblem::Burgers { nu } => {
            let v = phi_to_mrho_burgers(&dual, *nu);
            let (u, flagged) = recover_u_burgers(&v);
            let e = energy_burgers(&v, u0);
            (v.m_plus, v.rho, u, flagged, e)
        }
    };
    Ok(SolveResult {
        phi: dual,
        m,
        rho,
        u,
        energy,
        iterations,
        residual: grad_norm,
        min_rho,
        flagged,
        trace,
    })
}
