//! Chambolle-Pock primal-dual iteration on the periodized energy: alternates
//! the separable prox of the energy with the FFT projection onto the linear
//! feasible set.

use crate::anisotropy::{apply_lh, TensorDecomposition};
use crate::energy::{
    deperiodize_burgers, deperiodize_qpme, energy_burgers, energy_qpme, prox_energy_burgers,
    prox_energy_qpme, BurgersVars, DualPotential, QpmeAux, QpmeVars,
};
use crate::grid::{dhe, dt_stagger, Field, GridSpec, StaggerTag, TimeTag};
use crate::problem::{SolveResult, TraceRow};
use crate::recovery::{recover_u_burgers, recover_u_qpme};
use crate::spectral::{project_parity_even, project_parity_odd, FeasibleProjector};
use crate::{Error, Result};

/// Problem selector for the primal-dual solver.
pub enum PdProblem<'a> {
    Qpme { dec: &'a TensorDecomposition },
    Burgers { nu: f64 },
}

/// Step sizes, relaxation, and stopping controls for the primal-dual iteration.
#[derive(Clone, Copy, Debug)]
pub struct PdConfig {
    pub max_iters: usize,
    /// Dual step; the identity coupling requires sigma·tau_step ≤ 1.
    pub sigma: f64,
    /// Primal step.
    pub tau_step: f64,
    /// Over-relaxation factor in [0, 1].
    pub relaxation: f64,
    /// Strong-convexity acceleration parameter; 0 disables acceleration.
    pub accel_gamma: f64,
    /// Stop when the probed energy change falls below this (relative).
    pub tol_energy: f64,
    /// Stop when the sup-norm change between consecutive iterates falls below this.
    pub tol_residual: f64,
    /// Probe energy and record a trace row every this many iterations.
    pub trace_every: usize,
}

impl Default for PdConfig {
    fn default() -> Self {
        PdConfig {
            max_iters: 20000,
            sigma: 0.99,
            tau_step: 0.99,
            relaxation: 1.0,
            accel_gamma: 0.0,
            tol_energy: 1e-11,
            tol_residual: 1e-9,
            trace_every: 50,
        }
    }
}

impl PdConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.trace_every == 0 {
            return Err(Error::Invalid("iteration counts must be positive".into()));
        }
        if self.sigma <= 0.0 || self.tau_step <= 0.0 {
            return Err(Error::Invalid("step sizes must be positive".into()));
        }
        if self.sigma * self.tau_step > 1.0 + 1e-12 {
            return Err(Error::Invalid(format!(
                "step condition violated: sigma*tau_step = {} > 1",
                self.sigma * self.tau_step
            )));
        }
        if !(0.0..=1.0).contains(&self.relaxation) {
            return Err(Error::Invalid("relaxation must lie in [0, 1]".into()));
        }
        if self.accel_gamma < 0.0 || self.tol_energy < 0.0 || self.tol_residual < 0.0 {
            return Err(Error::Invalid("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Periodized primal (or dual) iterate: one of the two variable layouts.
#[derive(Clone)]
enum Vars {
    Q(QpmeVars),
    B(BurgersVars),
}

impl Vars {
    fn fields(&self) -> Vec<&Field> {
        match self {
            Vars::Q(v) => {
                let mut out = vec![&v.m, &v.rho];
                if let Some(a) = &v.aux {
                    out.extend(a.m_e.iter());
                    out.extend(a.n_e.iter());
                }
                out
            }
            Vars::B(v) => vec![&v.m_plus, &v.m_minus, &v.a_plus, &v.a_minus, &v.rho],
        }
    }

    fn fields_mut(&mut self) -> Vec<&mut Field> {
        match self {
            Vars::Q(v) => {
                let mut out = vec![&mut v.m, &mut v.rho];
                if let Some(a) = &mut v.aux {
                    out.extend(a.m_e.iter_mut());
                    out.extend(a.n_e.iter_mut());
                }
                out
            }
            Vars::B(v) => {
                vec![&mut v.m_plus, &mut v.m_minus, &mut v.a_plus, &mut v.a_minus, &mut v.rho]
            }
        }
    }
}

/// out[i] += c * src[i], fieldwise.
fn axpy(out: &mut Vars, c: f64, src: &Vars) {
    for (fo, fs) in out.fields_mut().into_iter().zip(src.fields()) {
        for (a, b) in fo.values.iter_mut().zip(&fs.values) {
            *a += c * *b;
        }
    }
}

fn max_abs_diff(a: &Vars, b: &Vars) -> f64 {
    let mut m = 0.0f64;
    for (fa, fb) in a.fields().into_iter().zip(b.fields()) {
        for (x, y) in fa.values.iter().zip(&fb.values) {
            m = m.max((x - y).abs());
        }
    }
    m
}

/// Constraint-violation norms (sup norms, physical-space recomputation).
#[derive(Clone, Copy, Debug, Default)]
pub struct PdResiduals {
    /// Continuity: ∂_τρ − L_hm (QPME) or ∂_τρ + ∂_hm (Burgers).
    pub continuity: f64,
    /// Auxiliary consistency ∂_h^e m − m_e (anisotropic QPME only).
    pub auxiliary: f64,
    /// Odd/even time-parity violation.
    pub parity: f64,
    /// Burgers duplication m₊ − m₋ and a₊ − a₋.
    pub duplication: f64,
    /// Burgers diffusive flux a + ν∂_hρ.
    pub flux: f64,
    /// Terminal density ρ(T) − 1.
    pub terminal: f64,
}

impl PdResiduals {
    pub fn max(&self) -> f64 {
        self.continuity
            .max(self.auxiliary)
            .max(self.parity)
            .max(self.duplication)
            .max(self.flux)
            .max(self.terminal)
    }
}

fn parity_violation(f: &Field, odd: bool) -> f64 {
    let mut p = f.clone();
    if odd {
        project_parity_odd(&mut p);
    } else {
        project_parity_even(&mut p);
    }
    let mut m = 0.0f64;
    for (a, b) in f.values.iter().zip(&p.values) {
        m = m.max((a - b).abs());
    }
    m
}

fn field_sup(f: &Field) -> f64 {
    f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Recompute the linear-constraint violations of a periodized QPME state.
pub fn residuals_qpme(v: &QpmeVars) -> PdResiduals {
    let spec = v.m.spec;
    let mut r = PdResiduals::default();
    let mut cont = dt_stagger(&v.rho);
    match &v.aux {
        None => {
            let dec = TensorDecomposition::isotropic(spec);
            let lm = apply_lh(&v.m, &dec);
            for (c, l) in cont.values.iter_mut().zip(&lm.values) {
                *c -= l;
            }
        }
        Some(aux) => {
            for (i, &e) in aux.offsets.iter().enumerate() {
                let dm = dhe(&v.m, e);
                for (a, b) in dm.values.iter().zip(&aux.m_e[i].values) {
                    r.auxiliary = r.auxiliary.max((a - b).abs());
                }
                let dn = dhe(&aux.n_e[i], e);
                for (c, d) in cont.values.iter_mut().zip(&dn.values) {
                    *c += d;
                }
            }
        }
    }
    r.continuity = field_sup(&cont);
    r.parity = parity_violation(&v.m, true).max(parity_violation(&v.rho, false));
    if let Some(aux) = &v.aux {
        for f in aux.m_e.iter().chain(aux.n_e.iter()) {
            r.parity = r.parity.max(parity_violation(f, true));
        }
    }
    for s in 0..spec.n_space() {
        r.terminal = r.terminal.max((v.rho.at(spec.n_tau, s) - 1.0).abs());
    }
    r
}

/// Recompute the linear-constraint violations of a periodized Burgers state.
pub fn residuals_burgers(v: &BurgersVars) -> PdResiduals {
    let spec = v.rho.spec;
    let mut r = PdResiduals::default();
    for (a, b) in v.m_plus.values.iter().zip(&v.m_minus.values) {
        r.duplication = r.duplication.max((a - b).abs());
    }
    for (a, b) in v.a_plus.values.iter().zip(&v.a_minus.values) {
        r.duplication = r.duplication.max((a - b).abs());
    }
    let mut cont = dt_stagger(&v.rho);
    let dm = dhe(&v.m_plus, [1, 0]);
    for (c, d) in cont.values.iter_mut().zip(&dm.values) {
        *c += d;
    }
    r.continuity = field_sup(&cont);
    let drho = dhe(&v.rho, [1, 0]);
    for (a, d) in v.a_plus.values.iter().zip(&drho.values) {
        r.flux = r.flux.max((a + v.nu * d).abs());
    }
    r.parity = parity_violation(&v.m_plus, true)
        .max(parity_violation(&v.m_minus, true))
        .max(parity_violation(&v.a_plus, false))
        .max(parity_violation(&v.a_minus, false))
        .max(parity_violation(&v.rho, false));
    for s in 0..spec.n_space() {
        r.terminal = r.terminal.max((v.rho.at(spec.n_tau, s) - 1.0).abs());
    }
    r
}

fn residuals(v: &Vars) -> PdResiduals {
    match v {
        Vars::Q(q) => residuals_qpme(q),
        Vars::B(b) => residuals_burgers(b),
    }
}

/// Backward time integration of a staggered momentum into a dual potential
/// with φ(T) = 0 (no consistency check; the iterate is only approximately
/// feasible before full convergence).
fn integrate_phi(m: &Field) -> DualPotential {
    let spec = m.spec;
    let tau = spec.tau();
    let ns = spec.n_space();
    let mut phi = Field::zeros(spec, StaggerTag::centered(TimeTag::Centered));
    for k in (0..spec.n_tau).rev() {
        for s in 0..ns {
            *phi.at_mut(k, s) = phi.at(k + 1, s) - 2.0 * tau * m.at(k, s);
        }
    }
    DualPotential { phi }
}

fn dec_is_isotropic(dec: &TensorDecomposition) -> bool {
    dec.offsets.iter().all(|&e| e == [1, 0] || e == [0, 1])
        && dec.weights.iter().flatten().all(|&w| (w - 1.0).abs() < 1e-14)
}

fn initial_state(prob: &PdProblem, spec: GridSpec) -> Vars {
    match prob {
        PdProblem::Qpme { dec } => {
            let m = Field::zeros(spec, StaggerTag::new(TimeTag::PerStaggered, [0, 0]));
            let rho = Field::constant(spec, StaggerTag::new(TimeTag::PerCentered, [0, 0]), 1.0);
            let aux = if dec_is_isotropic(dec) {
                None
            } else {
                Some(QpmeAux {
                    offsets: dec.offsets.clone(),
                    m_e: dec
                        .offsets
                        .iter()
                        .map(|&e| {
                            Field::zeros(
                                spec,
                                StaggerTag::new(
                                    TimeTag::PerStaggered,
                                    crate::anisotropy::offset_shift(e),
                                ),
                            )
                        })
                        .collect(),
                    n_e: dec
                        .offsets
                        .iter()
                        .map(|&e| {
                            Field::zeros(
                                spec,
                                StaggerTag::new(
                                    TimeTag::PerStaggered,
                                    crate::anisotropy::offset_shift(e),
                                ),
                            )
                        })
                        .collect(),
                })
            };
            Vars::Q(QpmeVars { m, rho, aux })
        }
        PdProblem::Burgers { nu } => {
            let mc = Field::zeros(spec, StaggerTag::new(TimeTag::PerStaggered, [0, 0]));
            let ac = Field::zeros(spec, StaggerTag::new(TimeTag::PerCentered, [0, 0]));
            let rho = Field::constant(spec, StaggerTag::new(TimeTag::PerCentered, [1, 0]), 1.0);
            Vars::B(BurgersVars {
                m_plus: mc.clone(),
                m_minus: mc,
                a_plus: ac.clone(),
                a_minus: ac,
                rho,
                nu: *nu,
            })
        }
    }
}

fn zero_like(v: &Vars) -> Vars {
    let mut out = v.clone();
    for f in out.fields_mut() {
        f.values.fill(0.0);
    }
    out
}

fn prox(prob: &PdProblem, lambda: f64, v: &Vars, u0: &Field) -> Result<Vars> {
    match (prob, v) {
        (PdProblem::Qpme { dec }, Vars::Q(q)) => {
            let weights = q.aux.as_ref().map(|_| *dec);
            Ok(Vars::Q(prox_energy_qpme(lambda, q, u0, weights)?))
        }
        (PdProblem::Burgers { .. }, Vars::B(b)) => Ok(Vars::B(prox_energy_burgers(lambda, b, u0)?)),
        _ => unreachable!("state layout matches the problem"),
    }
}

fn project(projector: &FeasibleProjector, v: &mut Vars) {
    match v {
        Vars::Q(q) => projector.project_qpme(q),
        Vars::B(b) => projector.project_burgers(b),
    }
}

/// Physical (deperiodized, rescaled) energy of the current iterate.
fn physical_energy(prob: &PdProblem, v: &Vars, u0: &Field) -> f64 {
    match (prob, v) {
        (PdProblem::Qpme { .. }, Vars::Q(q)) => energy_qpme(&deperiodize_qpme(q), u0),
        (PdProblem::Burgers { .. }, Vars::B(b)) => energy_burgers(&deperiodize_burgers(b), u0),
        _ => unreachable!(),
    }
}

/// Minimize the periodized energy over the feasible set by Chambolle-Pock
/// splitting: dual ascent through the Moreau identity, primal descent through
/// the FFT feasibility projection, then over-relaxation.
pub fn solve_pd(prob: &PdProblem, u0: &Field, cfg: &PdConfig) -> Result<SolveResult> {
    cfg.validate()?;
    let spec = u0.spec;
    let u0p = match prob {
        PdProblem::Qpme { .. } => periodize_space_centered(u0),
        PdProblem::Burgers { .. } => periodize_space_centered(u0),
    };
    let projector = match prob {
        PdProblem::Qpme { dec } => {
            if dec_is_isotropic(dec) {
                FeasibleProjector::qpme_iso(spec)
            } else {
                FeasibleProjector::qpme_aniso(spec, &dec.offsets)
            }
        }
        PdProblem::Burgers { nu } => FeasibleProjector::burgers(spec, *nu),
    };
    let mut z = initial_state(prob, spec);
    let mut y = zero_like(&z);
    let mut zbar = z.clone();
    let mut sigma = cfg.sigma;
    let mut tau_step = cfg.tau_step;
    let mut relax = cfg.relaxation;

    let mut trace: Vec<TraceRow> = Vec::new();
    let mut last_energy = f64::INFINITY;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let warmup_probes = 10usize;
    let mut probes = 0usize;
    let mut finite_seen = false;
    let mut converged = false;

    for iter in 1..=cfg.max_iters {
        iterations = iter;
        // w = y/σ + z̄; dual update y ← σ(w − prox_{F/σ}(w)).
        let mut w = zbar.clone();
        axpy(&mut w, 1.0 / sigma, &y);
        let p = prox(prob, 1.0 / sigma, &w, &u0p)?;
        y = w;
        axpy(&mut y, -1.0, &p);
        for f in y.fields_mut() {
            for v in f.values.iter_mut() {
                *v *= sigma;
            }
        }
        // Primal update z ← P_V(z − τ·y), then over-relaxation.
        let z_prev = z.clone();
        axpy(&mut z, -tau_step, &y);
        project(&projector, &mut z);
        change = max_abs_diff(&z, &z_prev);
        zbar = z.clone();
        if cfg.accel_gamma > 0.0 {
            let theta = 1.0 / (1.0 + 2.0 * cfg.accel_gamma * tau_step).sqrt();
            tau_step *= theta;
            sigma /= theta;
            relax = theta * cfg.relaxation;
        }
        axpy(&mut zbar, relax, &z);
        axpy(&mut zbar, -relax, &z_prev);

        if iter % cfg.trace_every == 0 || iter == cfg.max_iters {
            probes += 1;
            let e = physical_energy(prob, &z, u0);
            let min_rho = match &z {
                Vars::Q(q) => q.rho.values.iter().copied().fold(f64::INFINITY, f64::min),
                Vars::B(b) => b.rho.values.iter().copied().fold(f64::INFINITY, f64::min),
            };
            trace.push(TraceRow { mu: 0.0, inner: iter, energy: e, grad_norm: change, step: tau_step, min_rho });
            if e.is_finite() {
                finite_seen = true;
                let de = (e - last_energy).abs();
                last_energy = e;
                if de <= cfg.tol_energy * (1.0 + e.abs()) && change <= cfg.tol_residual {
                    converged = true;
                    break;
                }
            } else if probes > warmup_probes && !finite_seen {
                return Err(Error::Numerical(format!(
                    "primal-dual iteration diverged: energy non-finite at every probe \
                     through iteration {iter} (last iterate change {change:.3e})"
                )));
            }
        }
    }
    let _ = converged;

    let resid = residuals(&z);
    match (prob, &z) {
        (PdProblem::Qpme { .. }, Vars::Q(q)) => {
            let v = deperiodize_qpme(q);
            let energy = energy_qpme(&v, u0);
            if !energy.is_finite() {
                return Err(Error::Numerical(
                    "primal-dual iteration ended with non-finite energy".into(),
                ));
            }
            let phi = integrate_phi(&v.m);
            let (u, flagged) = recover_u_qpme(&v);
            let min_rho = v.rho.values.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(SolveResult {
                phi,
                m: v.m.clone(),
                rho: v.rho.clone(),
                u,
                energy,
                iterations,
                residual: resid.max().max(change),
                min_rho,
                flagged,
                trace,
            })
        }
        (PdProblem::Burgers { .. }, Vars::B(b)) => {
            let v = deperiodize_burgers(b);
            let energy = energy_burgers(&v, u0);
            if !energy.is_finite() {
                return Err(Error::Numerical(
                    "primal-dual iteration ended with non-finite energy".into(),
                ));
            }
            let phi = integrate_phi(&v.m_plus);
            let (u, flagged) = recover_u_burgers(&v);
            let min_rho = v.rho.values.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(SolveResult {
                phi,
                m: v.m_plus.clone(),
                rho: v.rho.clone(),
                u,
                energy,
                iterations,
                residual: resid.max().max(change),
                min_rho,
                flagged,
                trace,
            })
        }
        _ => unreachable!(),
    }
}

/// u₀ is a single space slice; the prox stages index it directly, so no time
/// periodization is needed — this just validates the tag.
fn periodize_space_centered(u0: &Field) -> Field {
    assert_eq!(u0.tag.time, TimeTag::Single);
    u0.clone()
}
