//! Primal-variable recovery u from (m, ρ), optional mollified recovery from a
//! numerical dual potential, error tables with log-log slope fits, and the
//! viscous density-floor diagnostic.

use crate::anisotropy::{apply_lh, TensorDecomposition};
use crate::energy::{BurgersVars, QpmeVars};
use crate::grid::{dt_stagger, Field, GridSpec, StaggerTag, TimeTag};

/// u = m/𝓗ρ with 𝓗ρ(t) = 2(ρ(t−τ)⁻¹ + ρ(t+τ)⁻¹)⁻¹. Returns the field on the
/// staggered times and the number of flagged entries (ρ ≤ 0 with m ≠ 0).
pub fn recover_u_qpme(v: &QpmeVars) -> (Field, usize) {
    let spec = v.m.spec;
    assert_eq!(v.m.tag.time, TimeTag::Staggered);
    assert_eq!(v.rho.tag.time, TimeTag::Centered);
    let ns = spec.n_space();
    let mut u = Field::zeros(spec, v.m.tag);
    let mut flagged = 0usize;
    for k in 0..spec.n_tau {
        for s in 0..ns {
            let m = v.m.at(k, s);
            let (r0, r1) = (v.rho.at(k, s), v.rho.at(k + 1, s));
            if r0 > 0.0 && r1 > 0.0 {
                *u.at_mut(k, s) = 0.5 * m * (1.0 / r0 + 1.0 / r1);
            } else if m != 0.0 {
                flagged += 1;
            }
        }
    }
    (u, flagged)
}

/// u = (m − ν∂_hρ̄)/ρ̄ where ρ̄ is the harmonic mean of the four neighboring
/// density samples ρ(t±τ, x±h) and ∂_hρ̄ the centered difference of the
/// time-harmonic means at x±h.
pub fn recover_u_burgers(v: &BurgersVars) -> (Field, usize) {
    let spec = v.rho.spec;
    assert_eq!(spec.d, 1);
    let ns = spec.n_space();
    let h = spec.h();
    let mut u = Field::zeros(spec, StaggerTag::new(TimeTag::Staggered, [0, 0]));
    let mut flagged = 0usize;
    for k in 0..spec.n_tau {
        for s in 0..ns {
            let sm = if s == 0 { ns - 1 } else { s - 1 };
            let m = 0.5 * (v.m_plus.at(k, s) + v.m_minus.at(k, s));
            let r = [v.rho.at(k, sm), v.rho.at(k, s), v.rho.at(k + 1, sm), v.rho.at(k + 1, s)];
            if r.iter().all(|&x| x > 0.0) {
                let rbar = 4.0 / r.iter().map(|x| 1.0 / x).sum::<f64>();
                let hp = 2.0 / (1.0 / r[1] + 1.0 / r[3]);
                let hm = 2.0 / (1.0 / r[0] + 1.0 / r[2]);
                let drho = (hp - hm) / (2.0 * h);
                *u.at_mut(k, s) = (m - v.nu * drho) / rbar;
            } else if m != 0.0 {
                flagged += 1;
            }
        }
    }
    (u, flagged)
}

/// Normalized bump-kernel quadrature weights on the periodic spatial grid.
fn bump_weights(spec: &GridSpec, epsilon: f64) -> Vec<f64> {
    let ns = spec.n_space();
    let nh = spec.n_h;
    let mut w = vec![0.0; ns];
    let step = 1.0 / nh as f64;
    let bump = |r2: f64| if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 };
    for (j, wj) in w.iter_mut().enumerate() {
        // Nearest periodic image of grid point j relative to the origin.
        let wrap = |i: usize| {
            let x = i as f64 * step;
            if x > 0.5 { x - 1.0 } else { x }
        };
        let r2 = if spec.d == 1 {
            (wrap(j) / epsilon).powi(2)
        } else {
            (wrap(j / nh) / epsilon).powi(2) + (wrap(j % nh) / epsilon).powi(2)
        };
        *wj = bump(r2);
    }
    let total: f64 = w.iter().sum();
    assert!(total > 0.0, "mollifier support smaller than one cell");
    for wj in w.iter_mut() {
        *wj /= total;
    }
    w
}

fn convolve_periodic(f: &[f64], w: &[f64], spec: &GridSpec) -> Vec<f64> {
    let ns = spec.n_space();
    let nh = spec.n_h;
    let mut out = vec![0.0; ns];
    if spec.d == 1 {
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, &wk) in w.iter().enumerate() {
                acc += wk * f[(j + ns - k % ns) % ns];
            }
            *o = acc;
        }
    } else {
        for j1 in 0..nh {
            for j2 in 0..nh {
                let mut acc = 0.0;
                for k1 in 0..nh {
                    for k2 in 0..nh {
                        let wk = w[k1 * nh + k2];
                        if wk != 0.0 {
                            acc += wk
                                * f[((j1 + nh - k1) % nh) * nh + (j2 + nh - k2) % nh];
                        }
                    }
                }
                out[j1 * nh + j2] = acc;
            }
        }
    }
    out
}

/// Recovery target: equation-specific denominator.
pub enum RecoveryKind<'a> {
    Qpme { dec: &'a TensorDecomposition },
    Burgers { nu: f64 },
}

/// Spatially mollify a centered-time dual potential with the bump kernel at
/// width epsilon, then recover u = ∂_τφ / denominator with finite differences.
pub fn mollified_recover(phi_num: &Field, kind: RecoveryKind, epsilon: f64) -> (Field, usize) {
    let spec = phi_num.spec;
    assert_eq!(phi_num.tag.time, TimeTag::Centered);
    let w = bump_weights(&spec, epsilon);
    let mut phi = phi_num.clone();
    for k in 0..phi.n_time() {
        let sm = convolve_periodic(phi_num.slice(k), &w, &spec);
        phi.slice_mut(k).copy_from_slice(&sm);
    }
    let num = dt_stagger(&phi);
    let ns = spec.n_space();
    let mut u = Field::zeros(spec, num.tag);
    let mut flagged = 0usize;
    match kind {
        RecoveryKind::Qpme { dec } => {
            let lphi = apply_lh(&phi, dec);
            for k in 0..spec.n_tau {
                for s in 0..ns {
                    // Denominator at the staggered time: average the two centered
                    // neighbors of ρ = 1 + L_hφ.
                    let den = 1.0 + 0.5 * (lphi.at(k, s) + lphi.at(k + 1, s));
                    if den > 0.0 {
                        *u.at_mut(k, s) = num.at(k, s) / den;
                    } else {
                        flagged += 1;
                    }
                }
            }
        }
        RecoveryKind::Burgers { nu } => {
            assert_eq!(spec.d, 1);
            let h = spec.h();
            for k in 0..spec.n_tau {
                for s in 0..ns {
                    let sp = (s + 1) % ns;
                    let sm = (s + ns - 1) % ns;
                    let mut numerator = num.at(k, s);
                    let mut den = 1.0;
                    for kc in [k, k + 1] {
                        let second = (phi.at(kc, sp) - 2.0 * phi.at(kc, s) + phi.at(kc, sm))
                            / (2.0 * h).powi(2);
                        let first = (phi.at(kc, sp) - phi.at(kc, sm)) / (4.0 * h);
                        numerator += 0.5 * nu * second;
                        den -= 0.5 * first;
                    }
                    if den > 0.0 {
                        *u.at_mut(k, s) = numerator / den;
                    } else {
                        flagged += 1;
                    }
                }
            }
        }
    }
    (u, flagged)
}

/// Least-squares slope of log(err) against log(N), sign-flipped so that a
/// second-order method reports ≈ 2.
pub fn fit_order(ns: &[f64], errs: &[f64]) -> f64 {
    assert_eq!(ns.len(), errs.len());
    assert!(ns.len() >= 2, "slope fit needs at least two points");
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    -num / den
}

#[derive(Clone, Debug)]
pub struct ErrorRow {
    pub n_tau: usize,
    pub n_h: usize,
    pub error_l1: f64,
    pub error_linf: f64,
    pub runtime: f64,
}

/// Refinement-study error table with per-column slope fits.
#[derive(Clone, Debug, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn push(&mut self, row: ErrorRow) {
        if let Some(last) = self.rows.last() {
            assert!(row.n_tau > last.n_tau, "rows must be sorted by refinement");
        }
        self.rows.push(row);
    }

    fn ns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.n_tau as f64).collect()
    }

    pub fn slope_l1(&self) -> f64 {
        assert!(self.rows.len() >= 3, "slope fit uses at least 3 rows");
        fit_order(&self.ns(), &self.rows.iter().map(|r| r.error_l1).collect::<Vec<_>>())
    }

    pub fn slope_linf(&self) -> f64 {
        assert!(self.rows.len() >= 3, "slope fit uses at least 3 rows");
        fit_order(&self.ns(), &self.rows.iter().map(|r| r.error_linf).collect::<Vec<_>>())
    }
}

/// (max over times of the spatial L¹ error, global L∞ error) of a staggered-time
/// field against a closed-form reference u(t, x).
pub fn u_errors(u: &Field, reference: &dyn Fn(f64, [f64; 2]) -> f64) -> (f64, f64) {
    let spec = u.spec;
    assert_eq!(u.tag.time, TimeTag::Staggered);
    let vol = spec.cell_volume();
    let ns = spec.n_space();
    let mut l1 = 0.0f64;
    let mut linf = 0.0f64;
    for k in 0..spec.n_tau {
        let t = spec.t_staggered(k);
        let mut slice_l1 = 0.0;
        for s in 0..ns {
            let d = (u.at(k, s) - reference(t, spec.coord(s, u.tag.shift))).abs();
            slice_l1 += d * vol;
            linf = linf.max(d);
        }
        l1 = l1.max(slice_l1);
    }
    (l1, linf)
}

/// Same for a centered-time potential: max over centered times of the spatial ℓ¹
/// norm (measure-weighted) of φ − reference.
pub fn phi_errors(phi: &Field, reference: &dyn Fn(f64, [f64; 2]) -> f64) -> (f64, f64) {
    let spec = phi.spec;
    assert_eq!(phi.tag.time, TimeTag::Centered);
    let vol = spec.cell_volume();
    let ns = spec.n_space();
    let mut l1 = 0.0f64;
    let mut linf = 0.0f64;
    for k in 0..=spec.n_tau {
        let t = spec.t_centered(k);
        let mut slice_l1 = 0.0;
        for s in 0..ns {
            let d = (phi.at(k, s) - reference(t, spec.coord(s, phi.tag.shift))).abs();
            slice_l1 += d * vol;
            linf = linf.max(d);
        }
        l1 = l1.max(slice_l1);
    }
    (l1, linf)
}

/// Viscous density-floor diagnostic: T* = 8ν/osc(u₀)², floor = exp(−T/T*).
pub fn rho_floor_estimate(u0: &Field, nu: f64, t_len: f64) -> (f64, f64) {
    let osc = u0.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - u0.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if osc <= 0.0 || nu <= 0.0 {
        return (f64::INFINITY, if nu > 0.0 { 1.0 } else { 0.0 });
    }
    let t_star = 8.0 * nu / (osc * osc);
    (t_star, (-t_len / t_star).exp())
}
