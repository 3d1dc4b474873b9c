//! Shared solver output types. Problem construction helpers (initial data,
//! window rescaling) live here as well.

use crate::energy::DualPotential;
use crate::grid::{Field, StaggerTag, TimeTag};

use crate::anisotropy::{decompose_field, TensorDecomposition};
use crate::exact::{barenblatt_u, hopf_cole_u, mapped_anisotropic, BarenblattParams, HopfColeParams};
use crate::grid::GridSpec;
use crate::Result;

/// Barenblatt QPME instance in conditioned solver units.
///
/// Solving with datum u₀/A on the window [A·t₀, A·t₁] yields exactly the same
/// discrete dual potential as the raw instance (m and the energy scale by 1/A,
/// ρ is unchanged), so the rescaling only improves floating-point conditioning.
/// Physical values are recovered as u = A·v at t_phys = t_solver/A.
pub struct QpmeBarenblatt {
    pub spec: GridSpec,
    pub params: BarenblattParams,
    /// Amplitude A = u(T0, 0): time runs A·t_phys, values scale by 1/A.
    pub amp: f64,
    /// Initial datum in solver units.
    pub u0: Field,
}

impl QpmeBarenblatt {
    pub fn new(
        gamma: f64,
        d: usize,
        t0: f64,
        t1: f64,
        n_tau: usize,
        n_h: usize,
    ) -> Result<Self> {
        let params = BarenblattParams::new(gamma, d, t0, t1)?;
        let amp = barenblatt_u(t0, [0.0, 0.0], &params);
        let spec = GridSpec::new(amp * t0, amp * t1, d, n_tau, n_h)?;
        let u0 = Field::from_fn(spec, StaggerTag::centered(TimeTag::Single), |_, x| {
            barenblatt_u(t0, [x[0] - 0.5, x[1] - 0.5], &params) / amp
        });
        Ok(QpmeBarenblatt { spec, params, amp, u0 })
    }

    /// Physical-units solution field from a solver-units result.
    pub fn physical_u(&self, u: &Field) -> Field {
        let mut out = u.clone();
        for v in out.values.iter_mut() {
            *v *= self.amp;
        }
        out
    }

    /// Physical-units closed form, indexed by solver time and grid coordinate.
    pub fn reference(&self) -> impl Fn(f64, [f64; 2]) -> f64 + '_ {
        move |t_solver, x| {
            barenblatt_u(t_solver / self.amp, [x[0] - 0.5, x[1] - 0.5], &self.params)
        }
    }

    /// Dual potential closed form in solver units (φ is scale-invariant).
    pub fn reference_phi(&self) -> impl Fn(f64, [f64; 2]) -> f64 + '_ {
        move |t_solver, x| {
            crate::exact::barenblatt_dual(t_solver / self.amp, [x[0] - 0.5, x[1] - 0.5], &self.params).0
        }
    }
}

/// Hopf-Cole viscous Burgers instance mapped onto the unit torus.
///
/// The physical line window [lo, lo+a] is scaled to [0, 1]: w(t, y) =
/// u(t, a·y + lo)/a solves Burgers with viscosity ν/a². Physical values are
/// recovered as u = a·w at x = a·y + lo.
pub struct BurgersHopfCole {
    pub spec: GridSpec,
    pub params: HopfColeParams,
    /// Window start and width.
    pub lo: f64,
    pub a: f64,
    /// Effective viscosity ν/a² in solver units.
    pub nu_eff: f64,
    pub u0: Field,
}

impl BurgersHopfCole {
    pub fn new(
        nu: f64,
        re: f64,
        t0: f64,
        t1: f64,
        lo: f64,
        hi: f64,
        n_tau: usize,
        n_h: usize,
    ) -> Result<Self> {
        let params = HopfColeParams::new(nu, re)?;
        let a = hi - lo;
        if a <= 0.0 {
            return Err(crate::Error::Invalid("window must have positive width".into()));
        }
        let spec = GridSpec::new(t0, t1, 1, n_tau, n_h)?;
        let nu_eff = nu / (a * a);
        let u0 = Field::from_fn(spec, StaggerTag::centered(TimeTag::Single), |_, x| {
            hopf_cole_u(t0, a * x[0] + lo, &params) / a
        });
        Ok(BurgersHopfCole { spec, params, lo, a, nu_eff, u0 })
    }

    pub fn physical_u(&self, u: &Field) -> Field {
        let mut out = u.clone();
        for v in out.values.iter_mut() {
            *v *= self.a;
        }
        out
    }

    pub fn reference(&self) -> impl Fn(f64, [f64; 2]) -> f64 + '_ {
        move |t, x| hopf_cole_u(t, self.a * x[0] + self.lo, &self.params)
    }
}

/// Anisotropic QPME built by pushing the radial Barenblatt solution through a
/// measure-preserving diffeomorphism; 𝒟 = (Dψᵀ Dψ)⁻¹. Same amplitude
/// conditioning as the isotropic instance.
pub struct QpmeMapped {
    pub spec: GridSpec,
    pub params: BarenblattParams,
    pub amp: f64,
    pub eps: f64,
    pub dec: TensorDecomposition,
    pub u0: Field,
}

impl QpmeMapped {
    pub fn new(
        gamma: f64,
        t0: f64,
        t1: f64,
        eps: f64,
        n_tau: usize,
        n_h: usize,
    ) -> Result<Self> {
        let params = BarenblattParams::new(gamma, 2, t0, t1)?;
        let amp = barenblatt_u(t0, [0.0, 0.0], &params);
        let spec = GridSpec::new(amp * t0, amp * t1, 2, n_tau, n_h)?;
        let dec = decompose_field(spec, &|x| {
            mapped_anisotropic(t0, [x[0] - 0.5, x[1] - 0.5], &params, eps).1
        })?;
        let u0 = Field::from_fn(spec, StaggerTag::centered(TimeTag::Single), |_, x| {
            mapped_anisotropic(t0, [x[0] - 0.5, x[1] - 0.5], &params, eps).0 / amp
        });
        Ok(QpmeMapped { spec, params, amp, eps, dec, u0 })
    }

    pub fn physical_u(&self, u: &Field) -> Field {
        let mut out = u.clone();
        for v in out.values.iter_mut() {
            *v *= self.amp;
        }
        out
    }

    pub fn reference(&self) -> impl Fn(f64, [f64; 2]) -> f64 + '_ {
        move |t_solver, x| {
            mapped_anisotropic(
                t_solver / self.amp,
                [x[0] - 0.5, x[1] - 0.5],
                &self.params,
                self.eps,
            )
            .0
        }
    }
}

/// Sparse three-positive-value initial datum (0.3, 1, 0, 0, 0, 0.7) placed at
/// the domain center, used for the large-timestep and stability experiments.
pub fn three_spike(spec: crate::grid::GridSpec) -> Field {
    assert_eq!(spec.d, 1);
    let mut u0 = Field::zeros(spec, StaggerTag::centered(TimeTag::Single));
    let j0 = spec.n_h / 2;
    u0.values[(j0 + spec.n_h - 2) % spec.n_h] = 0.3;
    u0.values[(j0 + spec.n_h - 1) % spec.n_h] = 1.0;
    u0.values[(j0 + 3) % spec.n_h] = 0.7;
    u0
}

/// One line of a solver trace.
#[derive(Clone, Copy, Debug)]
pub struct TraceRow {
    /// Barrier weight (Newton) or 0 (primal-dual).
    pub mu: f64,
    /// Inner iteration index within the current stage / overall sweep.
    pub inner: usize,
    pub energy: f64,
    /// Normalized gradient norm (Newton) or iterate-change norm (primal-dual).
    pub grad_norm: f64,
    /// Accepted step length (0 on the first evaluation of a stage).
    pub step: f64,
    pub min_rho: f64,
}

/// Output of a solver run: the dual potential, derived fields, and diagnostics.
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub phi: DualPotential,
    /// Momentum, time-staggered.
    pub m: Field,
    /// Density, time-centered (space-staggered for Burgers).
    pub rho: Field,
    /// Recovered velocity/solution u ≈ m/ρ on the staggered time grid.
    pub u: Field,
    /// Physical (rescaled) energy at the final iterate.
    pub energy: f64,
    pub iterations: usize,
    /// Final convergence measure (normalized gradient or constraint residual).
    pub residual: f64,
    pub min_rho: f64,
    /// Samples where the velocity recovery hit a vacuum cell.
    pub flagged: usize,
    pub trace: Vec<TraceRow>,
}
