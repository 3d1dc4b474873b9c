//! Discrete space-time energies for QPME and Burgers, the φ ↔ (m,ρ) bijections,
//! odd/even periodization in time, and the separable proximal operators of the
//! periodized energies.

use crate::anisotropy::{apply_lh, TensorDecomposition};
use crate::grid::{dhe, dt_stagger, Field, GridSpec, StaggerTag, TimeTag};
use crate::perspective::{persp, prox_persp, prox_persp2};
use crate::{Error, Result};

/// Optimization variables for the porous medium problem.
#[derive(Clone, Debug)]
pub struct QpmeVars {
    /// Momentum, time-staggered (periodized: 𝒯'_per), space-centered.
    pub m: Field,
    /// Density, time-centered (periodized: 𝒯_per), space-centered.
    pub rho: Field,
    /// Anisotropic auxiliaries m_e = ∂_h^e m and n_e = λᵉ m_e, per offset.
    pub aux: Option<QpmeAux>,
}

#[derive(Clone, Debug)]
pub struct QpmeAux {
    pub offsets: Vec<[i64; 2]>,
    pub m_e: Vec<Field>,
    pub n_e: Vec<Field>,
}

/// Optimization variables for the viscous Burgers problem (d = 1).
#[derive(Clone, Debug)]
pub struct BurgersVars {
    /// Duplicated momenta, time-staggered, space-centered.
    pub m_plus: Field,
    pub m_minus: Field,
    /// Duplicated diffusive fluxes a_σ ≈ −ν ∂_h ρ, time-centered, space-centered.
    pub a_plus: Field,
    pub a_minus: Field,
    /// Density, time-centered, space-staggered.
    pub rho: Field,
    pub nu: f64,
}

/// Dual potential on the centered grid with φ(T,·) = 0.
#[derive(Clone, Debug)]
pub struct DualPotential {
    pub phi: Field,
}

impl DualPotential {
    pub fn zeros(spec: GridSpec) -> Self {
        DualPotential { phi: Field::zeros(spec, StaggerTag::centered(TimeTag::Centered)) }
    }

    pub fn check_terminal(&self) -> Result<()> {
        let k = self.phi.spec.n_tau;
        if self.phi.slice(k).iter().any(|v| *v != 0.0) {
            return Err(Error::Invalid("dual potential terminal slice must be zero".into()));
        }
        Ok(())
    }
}

/// φ ↦ (m, ρ) = (∂_τφ, 1 + L_hφ).
pub fn phi_to_mrho_qpme(phi: &DualPotential, dec: &TensorDecomposition) -> QpmeVars {
    let m = dt_stagger(&phi.phi);
    let mut rho = apply_lh(&phi.phi, dec);
    for v in rho.values.iter_mut() {
        *v += 1.0;
    }
    QpmeVars { m, rho, aux: None }
}

/// Inverse of phi_to_mrho_qpme: backward time integration from φ(T) = 0, with a
/// consistency check on the density.
pub fn mrho_to_phi_qpme(
    v: &QpmeVars,
    dec: &TensorDecomposition,
    tol: f64,
) -> Result<DualPotential> {
    let spec = v.m.spec;
    assert_eq!(v.m.tag.time, TimeTag::Staggered);
    let tau = spec.tau();
    let ns = spec.n_space();
    let mut phi = Field::zeros(spec, StaggerTag::centered(TimeTag::Centered));
    for k in (0..spec.n_tau).rev() {
        for s in 0..ns {
            *phi.at_mut(k, s) = phi.at(k + 1, s) - 2.0 * tau * v.m.at(k, s);
        }
    }
    let out = DualPotential { phi };
    let rebuilt = phi_to_mrho_qpme(&out, dec);
    let mut resid = 0.0f64;
    let mut scale = 1.0f64;
    for (a, b) in rebuilt.rho.values.iter().zip(&v.rho.values) {
        resid = resid.max((a - b).abs());
        scale = scale.max(b.abs());
    }
    if resid > tol * scale {
        return Err(Error::Numerical(format!(
            "momentum/density pair violates the continuity structure: residual {resid:.3e}"
        )));
    }
    Ok(out)
}

/// φ ↦ (m, ρ) = (∂_τφ, 1 − ∂_hφ) for Burgers; the auxiliaries are a_σ = −ν∂_hρ.
pub fn phi_to_mrho_burgers(phi: &DualPotential, nu: f64) -> BurgersVars {
    let m = dt_stagger(&phi.phi);
    let dphi = dhe(&phi.phi, [1, 0]);
    let mut rho = dphi.clone();
    for v in rho.values.iter_mut() {
        *v = 1.0 - *v;
    }
    let drho = dhe(&rho, [1, 0]);
    let mut a = drho;
    for v in a.values.iter_mut() {
        *v *= -nu;
    }
    BurgersVars { m_plus: m.clone(), m_minus: m, a_plus: a.clone(), a_minus: a, rho, nu }
}

/// Discrete QPME energy 2τ(2h)^d Σ_{t∈𝒯',x} [ ½Σ_σ 𝒫(m, ρ(t+στ)) − m·u₀ ].
pub fn energy_qpme(v: &QpmeVars, u0: &Field) -> f64 {
    let spec = v.m.spec;
    assert_eq!(v.m.tag.time, TimeTag::Staggered);
    assert_eq!(v.rho.tag.time, TimeTag::Centered);
    let c = 2.0 * spec.tau() * spec.cell_volume();
    let ns = spec.n_space();
    let mut total = 0.0;
    for k in 0..spec.n_tau {
        for s in 0..ns {
            let m = v.m.at(k, s);
            let p = 0.5 * (persp(m, v.rho.at(k, s)) + persp(m, v.rho.at(k + 1, s)));
            if !p.is_finite() {
                return f64::INFINITY;
            }
            total += p - m * u0.values[s];
        }
    }
    c * total
}

/// Discrete Burgers energy
/// 4τh Σ_{t,x} [ ¼ Σ_{σ_t,σ_x} 𝒫(m − ν∂_hρ(t+σ_tτ), ρ(t+σ_tτ, x+σ_xh)) − m·u₀ ].
pub fn energy_burgers(v: &BurgersVars, u0: &Field) -> f64 {
    let spec = v.rho.spec;
    assert_eq!(spec.d, 1);
    assert_eq!(v.m_plus.tag.time, TimeTag::Staggered);
    assert_eq!(v.rho.tag.time, TimeTag::Centered);
    let h = spec.h();
    let c = 4.0 * spec.tau() * h;
    let ns = spec.n_space();
    let nu = v.nu;
    let mut total = 0.0;
    for k in 0..spec.n_tau {
        for s in 0..ns {
            // Duplicates must agree for the physical energy; use their mean.
            let m = 0.5 * (v.m_plus.at(k, s) + v.m_minus.at(k, s));
            let mut p = 0.0;
            for kc in [k, k + 1] {
                // ∂_hρ at centered x from staggered neighbors ρ[s−1], ρ[s].
                let sm = if s == 0 { ns - 1 } else { s - 1 };
                let drho = (v.rho.at(kc, s) - v.rho.at(kc, sm)) / (2.0 * h);
                let num = m - nu * drho;
                for sx in [sm, s] {
                    p += 0.25 * persp(num, v.rho.at(kc, sx));
                }
            }
            if !p.is_finite() {
                return f64::INFINITY;
            }
            total += p - m * u0.values[s];
        }
    }
    c * total
}

/// Sign ε(t) of the periodized staggered time sample with index k.
#[inline]
pub fn epsilon(spec: &GridSpec, k: usize) -> f64 {
    if k < spec.n_tau {
        1.0
    } else {
        -1.0
    }
}

/// Odd extension of a staggered-time field to the doubled (periodized) grid.
pub fn periodize_odd(f: &Field) -> Field {
    assert_eq!(f.tag.time, TimeTag::Staggered);
    let spec = f.spec;
    let nt = 2 * spec.n_tau;
    let ns = spec.n_space();
    let mut out = Field::zeros(spec, StaggerTag::new(TimeTag::PerStaggered, f.tag.shift));
    for k in 0..nt {
        for s in 0..ns {
            *out.at_mut(k, s) =
                if k < spec.n_tau { f.at(k, s) } else { -f.at(nt - 1 - k, s) };
        }
    }
    out
}

/// Even extension of a centered-time field to the doubled grid.
pub fn periodize_even(f: &Field) -> Field {
    assert_eq!(f.tag.time, TimeTag::Centered);
    let spec = f.spec;
    let nt = 2 * spec.n_tau;
    let ns = spec.n_space();
    let mut out = Field::zeros(spec, StaggerTag::new(TimeTag::PerCentered, f.tag.shift));
    for k in 0..nt {
        for s in 0..ns {
            *out.at_mut(k, s) = if k <= spec.n_tau { f.at(k, s) } else { f.at(nt - k, s) };
        }
    }
    out
}

/// Restriction of a periodized staggered field to [T0, T].
pub fn restrict_staggered(f: &Field) -> Field {
    assert_eq!(f.tag.time, TimeTag::PerStaggered);
    let spec = f.spec;
    let ns = spec.n_space();
    Field {
        spec,
        tag: StaggerTag::new(TimeTag::Staggered, f.tag.shift),
        values: f.values[..spec.n_tau * ns].to_vec(),
    }
}

/// Restriction of a periodized centered field to [T0, T].
pub fn restrict_centered(f: &Field) -> Field {
    assert_eq!(f.tag.time, TimeTag::PerCentered);
    let spec = f.spec;
    let ns = spec.n_space();
    Field {
        spec,
        tag: StaggerTag::new(TimeTag::Centered, f.tag.shift),
        values: f.values[..(spec.n_tau + 1) * ns].to_vec(),
    }
}

/// Periodize QPME variables (odd m, even ρ, odd auxiliaries).
pub fn periodize_qpme(v: &QpmeVars) -> QpmeVars {
    QpmeVars {
        m: periodize_odd(&v.m),
        rho: periodize_even(&v.rho),
        aux: v.aux.as_ref().map(|a| QpmeAux {
            offsets: a.offsets.clone(),
            m_e: a.m_e.iter().map(periodize_odd).collect(),
            n_e: a.n_e.iter().map(periodize_odd).collect(),
        }),
    }
}

/// Restrict periodized QPME variables back to [T0, T].
pub fn deperiodize_qpme(v: &QpmeVars) -> QpmeVars {
    QpmeVars {
        m: restrict_staggered(&v.m),
        rho: restrict_centered(&v.rho),
        aux: v.aux.as_ref().map(|a| QpmeAux {
            offsets: a.offsets.clone(),
            m_e: a.m_e.iter().map(restrict_staggered).collect(),
            n_e: a.n_e.iter().map(restrict_staggered).collect(),
        }),
    }
}

/// Periodized QPME energy (unscaled):
/// Σ_{t∈𝒯'_per,x} [ 𝒫(m(t,x), ρ(t+τ,x)) − ε(t)·m(t,x)·u₀(x) ] + χ(ρ(T,·) = 1).
/// Anisotropic runs additionally carry χ(n_e = λᵉ m_e); that indicator lives in
/// the prox stage and is not evaluated here.
pub fn energy_per_qpme(v: &QpmeVars, u0: &Field) -> f64 {
    let spec = v.m.spec;
    assert_eq!(v.m.tag.time, TimeTag::PerStaggered);
    let nt = 2 * spec.n_tau;
    let ns = spec.n_space();
    for s in 0..ns {
        if v.rho.at(spec.n_tau, s) != 1.0 {
            return f64::INFINITY;
        }
    }
    let mut total = 0.0;
    for k in 0..nt {
        let eps = epsilon(&spec, k);
        for s in 0..ns {
            let m = v.m.at(k, s);
            let p = persp(m, v.rho.at((k + 1) % nt, s));
            if !p.is_finite() {
                return f64::INFINITY;
            }
            total += p - eps * m * u0.values[s];
        }
    }
    total
}

/// Separable prox of the periodized QPME energy at parameter λ:
/// per (t,x): (m', ρ'(t+τ)) = prox_{λ𝒫}(m + λε(t)u₀, ρ(t+τ)), with the terminal
/// slice closed form m'(T−τ) = (m+λu₀)/(1+λ), ρ'(T) = 1. Anisotropic auxiliaries
/// are projected onto the lines {n_e = λᵉ m_e}.
pub fn prox_energy_qpme(
    lambda: f64,
    v: &QpmeVars,
    u0: &Field,
    weights: Option<&TensorDecomposition>,
) -> Result<QpmeVars> {
    if lambda <= 0.0 {
        return Err(Error::Invalid("prox parameter must be positive".into()));
    }
    let spec = v.m.spec;
    let nt = 2 * spec.n_tau;
    let ns = spec.n_space();
    let mut out = v.clone();
    for k in 0..nt {
        let eps = epsilon(&spec, k);
        let kc = (k + 1) % nt;
        for s in 0..ns {
            let mt = v.m.at(k, s) + lambda * eps * u0.values[s];
            if kc == spec.n_tau {
                // Terminal slot: ρ(T) pinned at 1.
                *out.m.at_mut(k, s) = mt / (1.0 + lambda);
                *out.rho.at_mut(kc, s) = 1.0;
            } else {
                let (mp, rp) = prox_persp(lambda, mt, v.rho.at(kc, s))?;
                *out.m.at_mut(k, s) = mp;
                *out.rho.at_mut(kc, s) = rp;
            }
        }
    }
    if let (Some(aux), Some(dec)) = (out.aux.as_mut(), weights) {
        for (i, &e) in aux.offsets.iter().enumerate() {
            // m_e = ∂_h^e m lives on the canonical e-staggered lattice, which is
            // exactly where weights[di] is sampled.
            let di = dec
                .offsets
                .iter()
                .position(|&o| o == e)
                .expect("auxiliary offset missing from decomposition");
            for k in 0..nt {
                for s in 0..ns {
                    let w = dec.weights[di][s];
                    let me = aux.m_e[i].at(k, s);
                    let ne = aux.n_e[i].at(k, s);
                    // Orthogonal projection of (me, ne) onto {n = w·m}.
                    let p = (me + w * ne) / (1.0 + w * w);
                    *aux.m_e[i].at_mut(k, s) = p;
                    *aux.n_e[i].at_mut(k, s) = w * p;
                }
            }
        }
    }
    Ok(out)
}

/// Periodize Burgers variables.
pub fn periodize_burgers(v: &BurgersVars) -> BurgersVars {
    BurgersVars {
        m_plus: periodize_odd(&v.m_plus),
        m_minus: periodize_odd(&v.m_minus),
        a_plus: periodize_even(&v.a_plus),
        a_minus: periodize_even(&v.a_minus),
        rho: periodize_even(&v.rho),
        nu: v.nu,
    }
}

pub fn deperiodize_burgers(v: &BurgersVars) -> BurgersVars {
    BurgersVars {
        m_plus: restrict_staggered(&v.m_plus),
        m_minus: restrict_staggered(&v.m_minus),
        a_plus: restrict_centered(&v.a_plus),
        a_minus: restrict_centered(&v.a_minus),
        rho: restrict_centered(&v.rho),
        nu: v.nu,
    }
}

/// Periodized Burgers energy (unscaled): over the disjoint 5-tuples
/// (ρ(t+τ,x+h), m₊(t,x), a₊(t+τ,x), m₋(t,x+2h), a₋(t+τ,x+2h)):
/// Σ_σ [ 𝒫(ε(t)m_σ + a_σ, ρ) − ε(t)m_σ u₀ ] + χ(ρ(T,·) = 1).
pub fn energy_per_burgers(v: &BurgersVars, u0: &Field) -> f64 {
    let spec = v.rho.spec;
    let nt = 2 * spec.n_tau;
    let ns = spec.n_space();
    for s in 0..ns {
        if v.rho.at(spec.n_tau, s) != 1.0 {
            return f64::INFINITY;
        }
    }
    let mut total = 0.0;
    for k in 0..nt {
        let eps = epsilon(&spec, k);
        let kc = (k + 1) % nt;
        for j in 0..ns {
            // Tuple anchored at staggered ρ index j: m₊ at centered j, m₋ at j+1.
            let jp = (j + 1) % ns;
            let rho = v.rho.at(kc, j);
            let np = eps * v.m_plus.at(k, j) + v.a_plus.at(kc, j);
            let nm = eps * v.m_minus.at(k, jp) + v.a_minus.at(kc, jp);
            let p = persp(np, rho) + persp(nm, rho);
            if !p.is_finite() {
                return f64::INFINITY;
            }
            total += p
                - eps * v.m_plus.at(k, j) * u0.values[j]
                - eps * v.m_minus.at(k, jp) * u0.values[jp];
        }
    }
    total
}

/// Separable prox of the periodized Burgers energy: per 5-tuple, translate the
/// m-entries by λε(t)u₀, rotate each (m̃, a) pair, apply prox_{2λ𝒫₂} with the
/// shared density, rotate back. Terminal slots use the closed-form 2×2 normal
/// equations with ρ(T) pinned at 1.
pub fn prox_energy_burgers(lambda: f64, v: &BurgersVars, u0: &Field) -> Result<BurgersVars> {
    if lambda <= 0.0 {
        return Err(Error::Invalid("prox parameter must be positive".into()));
    }
    let spec = v.rho.spec;
    let nt = 2 * spec.n_tau;
    let ns = spec.n_space();
    let mut out = v.clone();
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    for k in 0..nt {
        let eps = epsilon(&spec, k);
        let kc = (k + 1) % nt;
        for j in 0..ns {
            let jp = (j + 1) % ns;
            // Work in m̃ = ε·m coordinates; the u₀ translation applies there.
            let mt = [
                eps * v.m_plus.at(k, j) + lambda * u0.values[j],
                eps * v.m_minus.at(k, jp) + lambda * u0.values[jp],
            ];
            let at = [v.a_plus.at(kc, j), v.a_minus.at(kc, jp)];
            let (mp, rp, ap);
            if kc == spec.n_tau {
                // Terminal: min ½(m'−m̃)² + ½(a'−a)² + λ(m'+a')²/2 per pair.
                let det = 1.0 + 2.0 * lambda;
                mp = [
                    ((1.0 + lambda) * mt[0] - lambda * at[0]) / det,
                    ((1.0 + lambda) * mt[1] - lambda * at[1]) / det,
                ];
                ap = [
                    ((1.0 + lambda) * at[0] - lambda * mt[0]) / det,
                    ((1.0 + lambda) * at[1] - lambda * mt[1]) / det,
                ];
                rp = 1.0;
            } else {
                let p = [(mt[0] + at[0]) * s2, (mt[1] + at[1]) * s2];
                let q = [(mt[0] - at[0]) * s2, (mt[1] - at[1]) * s2];
                let (pp, rr) = prox_persp2(2.0 * lambda, p, v.rho.at(kc, j))?;
                mp = [(pp[0] + q[0]) * s2, (pp[1] + q[1]) * s2];
                ap = [(pp[0] - q[0]) * s2, (pp[1] - q[1]) * s2];
                rp = rr;
            }
            *out.m_plus.at_mut(k, j) = eps * mp[0];
            *out.m_minus.at_mut(k, jp) = eps * mp[1];
            *out.a_plus.at_mut(kc, j) = ap[0];
            *out.a_minus.at_mut(kc, jp) = ap[1];
            *out.rho.at_mut(kc, j) = rp;
        }
    }
    Ok(out)
}
