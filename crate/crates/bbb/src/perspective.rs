//! The perspective function 𝒫(m,ρ) = m²/(2ρ), its two-numerator extension,
//! their proximal operators, the rotation trick for prox of f(m+a,ρ), and the
//! exact expansion identity used by the energy tests.

use crate::{Error, Result};

/// 𝒫(m,ρ): m²/(2ρ) if ρ > 0; 0 if m = ρ = 0; +∞ otherwise.
pub fn persp(m: f64, rho: f64) -> f64 {
    if rho > 0.0 {
        m * m / (2.0 * rho)
    } else if m == 0.0 && rho == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// 𝒫₂((m0,m1),ρ) = (m0²+m1²)/(2ρ) with the same degenerate cases.
pub fn persp2(m0: f64, m1: f64, rho: f64) -> f64 {
    if rho > 0.0 {
        (m0 * m0 + m1 * m1) / (2.0 * rho)
    } else if m0 == 0.0 && m1 == 0.0 && rho == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("prox parameter must be positive, got {lambda}")))
    }
}

/// Root of the strictly increasing (on the relevant branch) cubic
/// (λ/2)u³ + (ρ+λ)u − m = 0 with ρ + λu²/2 ≥ 0, assuming ρ + m²/(2λ) > 0.
///
/// Newton iteration from u₀ = m/(ρ+λ) with a bisection safeguard on a bracket.
fn prox_cubic_root(lambda: f64, m: f64, rho: f64) -> f64 {
    if m == 0.0 {
        return 0.0;
    }
    let f = |u: f64| 0.5 * lambda * u * u * u + (rho + lambda) * u - m;
    let fp = |u: f64| 1.5 * lambda * u * u + rho + lambda;
    let sign = m.signum();
    // On |u| ≥ u_min := sqrt(max(0,−2ρ)/λ) the cubic is strictly increasing and the
    // admissible root (the one with ρ' = ρ + λu²/2 ≥ 0) is the unique root there.
    let u_min = ((-2.0 * rho).max(0.0) / lambda).sqrt();
    let (mut lo, mut hi);
    if sign > 0.0 {
        lo = u_min;
        hi = (m / lambda).max(u_min) + 1.0;
        while f(hi) < 0.0 {
            hi *= 2.0;
        }
    } else {
        hi = -u_min;
        lo = (m / lambda).min(-u_min) - 1.0;
        while f(lo) > 0.0 {
            lo *= 2.0;
        }
    }
    let tol = 1e-14 * (1.0 + m.abs());
    let mut u = (m / (rho + lambda)).clamp(lo, hi);
    for _ in 0..200 {
        let fu = f(u);
        if fu.abs() <= tol {
            return u;
        }
        if fu > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
        let d = fp(u);
        let mut next = u - fu / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        u = next;
    }
    u
}

/// Proximal operator of λ𝒫: the minimizer of ½(m'−m)² + ½(ρ'−ρ)² + λ𝒫(m',ρ').
pub fn prox_persp(lambda: f64, m: f64, rho: f64) -> Result<(f64, f64)> {
    check_lambda(lambda)?;
    if rho + m * m / (2.0 * lambda) <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let u = prox_cubic_root(lambda, m, rho);
    Ok((m - lambda * u, rho + 0.5 * lambda * u * u))
}

/// Proximal operator of λ𝒫₂ for a planar numerator; direction preserved.
pub fn prox_persp2(lambda: f64, m: [f64; 2], rho: f64) -> Result<([f64; 2], f64)> {
    check_lambda(lambda)?;
    let r = (m[0] * m[0] + m[1] * m[1]).sqrt();
    if rho + r * r / (2.0 * lambda) <= 0.0 {
        return Ok(([0.0, 0.0], 0.0));
    }
    if r == 0.0 {
        // rho > 0 here; numerator stays zero.
        return Ok(([0.0, 0.0], rho));
    }
    let u = prox_cubic_root(lambda, r, rho);
    let scale = (r - lambda * u) / r;
    Ok(([scale * m[0], scale * m[1]], rho + 0.5 * lambda * u * u))
}

/// Prox of F(m,ρ,a) := 𝒫₂(m+a, ρ) via the isometric rotation
/// p = (m+a)/√2, q = (m−a)/√2 and the 2-homogeneity of 𝒫₂:
/// (p', ρ') = prox_{2λ𝒫₂}(p, ρ), output ((p'+q)/√2, ρ', (p'−q)/√2).
pub fn prox_rotation(
    lambda: f64,
    m: [f64; 2],
    rho: f64,
    a: [f64; 2],
) -> Result<([f64; 2], f64, [f64; 2])> {
    check_lambda(lambda)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let p = [(m[0] + a[0]) * s, (m[1] + a[1]) * s];
    let q = [(m[0] - a[0]) * s, (m[1] - a[1]) * s];
    let (pp, rr) = prox_persp2(2.0 * lambda, p, rho)?;
    Ok(([(pp[0] + q[0]) * s, (pp[1] + q[1]) * s], rr, [(pp[0] - q[0]) * s, (pp[1] - q[1]) * s]))
}

/// Exact expansion 𝒫(m+m̂, ρ+ρ̂) = 𝒫(m,ρ) + (u m̂ − ½u²ρ̂) + 𝒫(m̂ − ρ̂u, ρ+ρ̂)
/// with u = m/ρ (u = 0 at the apex). Returns (base, linear, remainder).
pub fn persp_expand(m: f64, rho: f64, mhat: f64, rhohat: f64) -> Result<(f64, f64, f64)> {
    let base = persp(m, rho);
    if !base.is_finite() {
        return Err(Error::Invalid("expansion base point has infinite value".into()));
    }
    let u = if rho > 0.0 { m / rho } else { 0.0 };
    let linear = u * mhat - 0.5 * u * u * rhohat;
    let remainder = persp(mhat - rhohat * u, rho + rhohat);
    Ok((base, linear, remainder))
}
