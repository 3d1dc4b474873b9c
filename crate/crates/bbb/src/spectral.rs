//! Space-time Fourier transforms on the periodized staggered grids, the sine
//! symbols of the difference operators, and the orthogonal projection onto the
//! linear feasibility constraints (time parity + continuity structure).
//!
//! Staggered fields are stored at canonical +τ/+h half-shifts; the transform
//! multiplies the raw FFT by e^{−iπ(ζ s_t/N_t + Σ ξ_i s_i/N_h)} so that every
//! staggered difference operator acts diagonally with a pure sine symbol,
//! identically in both stagger directions.

use crate::energy::{BurgersVars, QpmeVars};
use crate::grid::{Field, GridSpec, StaggerTag, TimeTag};
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Fourier coefficients of a periodized field, same index layout as the field.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub spec: GridSpec,
    pub tag: StaggerTag,
    pub data: Vec<Complex64>,
}

fn dims_of(spec: &GridSpec) -> Vec<usize> {
    let nt = 2 * spec.n_tau;
    if spec.d == 1 {
        vec![nt, spec.n_h]
    } else {
        vec![nt, spec.n_h, spec.n_h]
    }
}

fn fft_axes(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..dims.len() {
        let len = dims[axis];
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
        let mut scratch = vec![Complex64::default(); len];
        for o in 0..outer {
            for i in 0..stride {
                let base = o * len * stride + i;
                for t in 0..len {
                    scratch[t] = data[base + t * stride];
                }
                fft.process(&mut scratch);
                for t in 0..len {
                    data[base + t * stride] = scratch[t];
                }
            }
        }
    }
}

fn for_each_freq(spec: &GridSpec, mut f: impl FnMut(usize, usize, [usize; 2])) {
    let nt = 2 * spec.n_tau;
    let ns = spec.n_space();
    for zeta in 0..nt {
        for s in 0..ns {
            let xi = if spec.d == 1 { [s, 0] } else { [s / spec.n_h, s % spec.n_h] };
            f(zeta, s, xi);
        }
    }
}

fn phase_of(spec: &GridSpec, tag: &StaggerTag, zeta: usize, xi: [usize; 2]) -> Complex64 {
    let nt = 2 * spec.n_tau;
    let st = match tag.time {
        TimeTag::PerStaggered => 1.0,
        TimeTag::PerCentered => 0.0,
        _ => panic!("spectral transforms require periodized time tags"),
    };
    let mut arg = -std::f64::consts::PI * zeta as f64 * st / nt as f64;
    for i in 0..spec.d {
        arg -= std::f64::consts::PI * xi[i] as f64 * tag.shift[i] as f64 / spec.n_h as f64;
    }
    Complex64::from_polar(1.0, arg)
}

/// Forward transform of a periodized field (unnormalized FFT + phase).
pub fn fft_field(f: &Field) -> Spectrum {
    let spec = f.spec;
    let dims = dims_of(&spec);
    let mut data: Vec<Complex64> =
        f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_axes(&mut data, &dims, false);
    let ns = spec.n_space();
    for_each_freq(&spec, |zeta, s, xi| {
        data[zeta * ns + s] *= phase_of(&spec, &f.tag, zeta, xi);
    });
    Spectrum { spec, tag: f.tag, data }
}

/// Inverse transform back to a real periodized field.
pub fn ifft_field(sp: &Spectrum) -> Field {
    let spec = sp.spec;
    let dims = dims_of(&spec);
    let ns = spec.n_space();
    let mut data = sp.data.clone();
    for_each_freq(&spec, |zeta, s, xi| {
        data[zeta * ns + s] *= phase_of(&spec, &sp.tag, zeta, xi).conj();
    });
    fft_axes(&mut data, &dims, true);
    let scale = 1.0 / (dims.iter().product::<usize>() as f64);
    Field { spec, tag: sp.tag, values: data.iter().map(|c| c.re * scale).collect() }
}

/// Symbol of ∂_τ (both stagger directions): (i/τ) sin(πζ/N_t).
#[inline]
pub fn sym_dt(spec: &GridSpec, zeta: usize) -> Complex64 {
    let nt = 2 * spec.n_tau;
    Complex64::new(0.0, (std::f64::consts::PI * zeta as f64 / nt as f64).sin() / spec.tau())
}

/// Symbol of ∂_h^e: (i/h) sin(π⟨ξ,e⟩/N_h).
#[inline]
pub fn sym_de(spec: &GridSpec, xi: [usize; 2], e: [i64; 2]) -> Complex64 {
    let dot = xi[0] as f64 * e[0] as f64 + xi[1] as f64 * e[1] as f64;
    Complex64::new(0.0, (std::f64::consts::PI * dot / spec.n_h as f64).sin() / spec.h())
}

/// Symbol of the isotropic L_h = −Δ_h (nonnegative): (1/h²) Σ sin²(πξ_i/N_h).
#[inline]
pub fn sym_lap(spec: &GridSpec, xi: [usize; 2]) -> f64 {
    let mut acc = 0.0;
    for i in 0..spec.d {
        acc += (std::f64::consts::PI * xi[i] as f64 / spec.n_h as f64).sin().powi(2);
    }
    acc / (spec.h() * spec.h())
}

/// Orthogonal projection of x onto span{v} (Hermitian inner product).
pub fn project_line(x: &[Complex64], v: &[Complex64]) -> Vec<Complex64> {
    let n2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    if n2 == 0.0 {
        return vec![Complex64::default(); x.len()];
    }
    let inner: Complex64 = v.iter().zip(x).map(|(a, b)| a.conj() * b).sum();
    v.iter().map(|c| c * (inner / n2)).collect()
}

/// Orthogonal projection of z onto the hyperplane {Σ a_i z_i = 0} (in place).
pub fn project_hyperplane(z: &mut [Complex64], a: &[Complex64]) {
    let n2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
    if n2 == 0.0 {
        return;
    }
    let r: Complex64 = a.iter().zip(z.iter()).map(|(ai, zi)| ai * zi).sum();
    let r = r / n2;
    for (zi, ai) in z.iter_mut().zip(a) {
        *zi -= r * ai.conj();
    }
}

/// In-place projection onto odd-in-time periodized fields: f(−t) = −f(t).
pub fn project_parity_odd(f: &mut Field) {
    assert_eq!(f.tag.time, TimeTag::PerStaggered);
    let nt = 2 * f.spec.n_tau;
    let ns = f.spec.n_space();
    for k in 0..f.spec.n_tau {
        let kr = nt - 1 - k;
        for s in 0..ns {
            let v = 0.5 * (f.at(k, s) - f.at(kr, s));
            *f.at_mut(k, s) = v;
            *f.at_mut(kr, s) = -v;
        }
    }
}

/// In-place projection onto even-in-time periodized fields: f(−t) = f(t).
pub fn project_parity_even(f: &mut Field) {
    assert_eq!(f.tag.time, TimeTag::PerCentered);
    let nt = 2 * f.spec.n_tau;
    let ns = f.spec.n_space();
    for k in 1..f.spec.n_tau {
        let kr = nt - k;
        for s in 0..ns {
            let v = 0.5 * (f.at(k, s) + f.at(kr, s));
            *f.at_mut(k, s) = v;
            *f.at_mut(kr, s) = v;
        }
    }
}

/// Small complex LU factorization with partial pivoting.
#[derive(Clone, Debug)]
struct SmallLu {
    n: usize,
    lu: Vec<Complex64>,
    piv: Vec<usize>,
}

impl SmallLu {
    fn factor(n: usize, mut a: Vec<Complex64>) -> Option<SmallLu> {
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            for r in k + 1..n {
                if a[r * n + k].norm_sqr() > a[p * n + k].norm_sqr() {
                    p = r;
                }
            }
            if a[p * n + k].norm_sqr() == 0.0 {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
            }
            piv[k] = p;
            let d = a[k * n + k];
            for r in k + 1..n {
                let l = a[r * n + k] / d;
                a[r * n + k] = l;
                for c in k + 1..n {
                    let sub = l * a[k * n + c];
                    a[r * n + c] -= sub;
                }
            }
        }
        Some(SmallLu { n, lu: a, piv })
    }

    fn solve(&self, b: &mut [Complex64]) {
        let n = self.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            for r in k + 1..n {
                let sub = self.lu[r * n + k] * b[k];
                b[r] -= sub;
            }
        }
        for k in (0..n).rev() {
            for c in k + 1..n {
                let sub = self.lu[k * n + c] * b[c];
                b[k] -= sub;
            }
            b[k] /= self.lu[k * n + k];
        }
    }
}

struct FreqFactor {
    /// Constraint rows (r × nvars, row-major), zero rows dropped.
    rows: Vec<Complex64>,
    nrows: usize,
    gram: SmallLu,
}

/// Per-frequency orthogonal projection onto the null space of a small set of
/// constraint rows, with the Gram matrices prefactored.
pub struct JointProjector {
    spec: GridSpec,
    nvars: usize,
    factors: Vec<Option<FreqFactor>>,
}

impl JointProjector {
    pub fn new(
        spec: GridSpec,
        nvars: usize,
        rows_fn: impl Fn(usize, [usize; 2]) -> Vec<Vec<Complex64>>,
    ) -> Self {
        let nt = 2 * spec.n_tau;
        let ns = spec.n_space();
        let scale2 = 1.0 / (spec.h() * spec.h()) + 1.0 / (spec.tau() * spec.tau()) + 1.0;
        let mut factors = Vec::with_capacity(nt * ns);
        for_each_freq(&spec, |zeta, _s, xi| {
            let mut rows: Vec<Vec<Complex64>> = rows_fn(zeta, xi)
                .into_iter()
                .filter(|r| r.iter().map(|c| c.norm_sqr()).sum::<f64>() > 1e-28 * scale2)
                .collect();
            if rows.is_empty() {
                factors.push(None);
                return;
            }
            for r in &rows {
                assert_eq!(r.len(), nvars);
            }
            let nr = rows.len();
            // Gram matrix G = A Aᴴ.
            let mut g = vec![Complex64::default(); nr * nr];
            for i in 0..nr {
                for j in 0..nr {
                    g[i * nr + j] =
                        rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b.conj()).sum();
                }
            }
            let gram = SmallLu::factor(nr, g)
                .expect("constraint rows must be linearly independent");
            let flat = rows.drain(..).flatten().collect();
            factors.push(Some(FreqFactor { rows: flat, nrows: nr, gram }));
        });
        JointProjector { spec, nvars, factors }
    }

    /// Project the stacked spectra in place: z ← z − Aᴴ(AAᴴ)⁻¹Az per frequency.
    pub fn apply(&self, fields: &mut [&mut Spectrum]) {
        assert_eq!(fields.len(), self.nvars);
        let ns = self.spec.n_space();
        let nt = 2 * self.spec.n_tau;
        let mut z = vec![Complex64::default(); self.nvars];
        let mut res = vec![Complex64::default(); 8];
        for idx in 0..nt * ns {
            let Some(f) = &self.factors[idx] else { continue };
            for (v, field) in z.iter_mut().zip(fields.iter()) {
                *v = field.data[idx];
            }
            let nr = f.nrows;
            for i in 0..nr {
                res[i] = f.rows[i * self.nvars..(i + 1) * self.nvars]
                    .iter()
                    .zip(&z)
                    .map(|(a, b)| a * b)
                    .sum();
            }
            f.gram.solve(&mut res[..nr]);
            for (vi, field) in fields.iter_mut().enumerate() {
                let mut corr = Complex64::default();
                for i in 0..nr {
                    corr += f.rows[i * self.nvars + vi].conj() * res[i];
                }
                field.data[idx] -= corr;
            }
        }
    }
}

/// Orthogonal projection onto the full linear feasibility set of a problem:
/// time parity, duplication (Burgers), and the Fourier-diagonal continuity
/// structure. Precomputes the per-frequency factors once.
pub struct FeasibleProjector {
    spec: GridSpec,
    kind: ProjKind,
}

enum ProjKind {
    QpmeIso,
    QpmeAniso { joint: JointProjector, n_offsets: usize },
    Burgers { joint: JointProjector },
}

impl FeasibleProjector {
    /// Isotropic QPME: single row d_t·P − lap·M = 0 per frequency.
    pub fn qpme_iso(spec: GridSpec) -> Self {
        FeasibleProjector { spec, kind: ProjKind::QpmeIso }
    }

    /// Anisotropic QPME with auxiliary variables for the given stencil.
    /// Variable order: [M, M_{e_1}.., M_{e_k}, N_{e_1}.., N_{e_k}, P].
    pub fn qpme_aniso(spec: GridSpec, offsets: &[[i64; 2]]) -> Self {
        let k = offsets.len();
        let nvars = 2 * k + 2;
        let offsets_owned = offsets.to_vec();
        let joint = JointProjector::new(spec, nvars, move |zeta, xi| {
            let mut rows = Vec::with_capacity(k + 1);
            for (i, &e) in offsets_owned.iter().enumerate() {
                // ∂_h^e m − m_e = 0.
                let mut r = vec![Complex64::default(); nvars];
                r[0] = sym_de(&spec, xi, e);
                r[1 + i] = Complex64::new(-1.0, 0.0);
                rows.push(r);
            }
            // ∂_τρ + Σ_e ∂_h^e n_e = 0.
            let mut r = vec![Complex64::default(); nvars];
            r[nvars - 1] = sym_dt(&spec, zeta);
            for (i, &e) in offsets_owned.iter().enumerate() {
                r[1 + k + i] = sym_de(&spec, xi, e);
            }
            rows.push(r);
            rows
        });
        FeasibleProjector { spec, kind: ProjKind::QpmeAniso { joint, n_offsets: k } }
    }

    /// Viscous Burgers (d = 1). Variable order: [M₊, M₋, A₊, A₋, P]. Rows:
    /// duplication M₊=M₋ and A₊=A₋, continuity ∂_τρ + ∂_h m = 0, flux a + ν∂_hρ = 0.
    pub fn burgers(spec: GridSpec, nu: f64) -> Self {
        assert_eq!(spec.d, 1);
        let joint = JointProjector::new(spec, 5, move |zeta, xi| {
            let one = Complex64::new(1.0, 0.0);
            let dx = sym_de(&spec, xi, [1, 0]);
            let dt = sym_dt(&spec, zeta);
            vec![
                vec![one, -one, Complex64::default(), Complex64::default(), Complex64::default()],
                vec![Complex64::default(), Complex64::default(), one, -one, Complex64::default()],
                vec![dx, Complex64::default(), Complex64::default(), Complex64::default(), dt],
                vec![Complex64::default(), Complex64::default(), one, Complex64::default(), nu * dx],
            ]
        });
        FeasibleProjector { spec, kind: ProjKind::Burgers { joint } }
    }

    pub fn project_qpme(&self, v: &mut QpmeVars) {
        project_parity_odd(&mut v.m);
        project_parity_even(&mut v.rho);
        match &self.kind {
            ProjKind::QpmeIso => {
                assert!(v.aux.is_none());
                let mut ms = fft_field(&v.m);
                let mut ps = fft_field(&v.rho);
                let spec = self.spec;
                let ns = spec.n_space();
                for_each_freq(&spec, |zeta, s, xi| {
                    let idx = zeta * ns + s;
                    let row = [
                        Complex64::new(-sym_lap(&spec, xi), 0.0),
                        sym_dt(&spec, zeta),
                    ];
                    let mut z = [ms.data[idx], ps.data[idx]];
                    project_hyperplane(&mut z, &row);
                    ms.data[idx] = z[0];
                    ps.data[idx] = z[1];
                });
                v.m = ifft_field(&ms);
                v.rho = ifft_field(&ps);
            }
            ProjKind::QpmeAniso { joint, n_offsets } => {
                let aux = v.aux.as_mut().expect("anisotropic projection requires auxiliaries");
                assert_eq!(aux.offsets.len(), *n_offsets);
                for f in aux.m_e.iter_mut().chain(aux.n_e.iter_mut()) {
                    project_parity_odd(f);
                }
                let mut specs: Vec<Spectrum> = Vec::with_capacity(2 * n_offsets + 2);
                specs.push(fft_field(&v.m));
                for f in &aux.m_e {
                    specs.push(fft_field(f));
                }
                for f in &aux.n_e {
                    specs.push(fft_field(f));
                }
                specs.push(fft_field(&v.rho));
                {
                    let mut refs: Vec<&mut Spectrum> = specs.iter_mut().collect();
                    joint.apply(&mut refs);
                }
                let mut it = specs.iter();
                v.m = ifft_field(it.next().unwrap());
                for f in aux.m_e.iter_mut() {
                    *f = ifft_field(it.next().unwrap());
                }
                for f in aux.n_e.iter_mut() {
                    *f = ifft_field(it.next().unwrap());
                }
                v.rho = ifft_field(it.next().unwrap());
            }
            ProjKind::Burgers { .. } => panic!("QPME projection on a Burgers projector"),
        }
    }

    pub fn project_burgers(&self, v: &mut BurgersVars) {
        let ProjKind::Burgers { joint } = &self.kind else {
            panic!("Burgers projection on a QPME projector")
        };
        // Duplication averaging.
        for i in 0..v.m_plus.values.len() {
            let t = 0.5 * (v.m_plus.values[i] + v.m_minus.values[i]);
            v.m_plus.values[i] = t;
            v.m_minus.values[i] = t;
        }
        for i in 0..v.a_plus.values.len() {
            let t = 0.5 * (v.a_plus.values[i] + v.a_minus.values[i]);
            v.a_plus.values[i] = t;
            v.a_minus.values[i] = t;
        }
        project_parity_odd(&mut v.m_plus);
        project_parity_odd(&mut v.m_minus);
        project_parity_even(&mut v.a_plus);
        project_parity_even(&mut v.a_minus);
        project_parity_even(&mut v.rho);
        let mut specs = [
            fft_field(&v.m_plus),
            fft_field(&v.m_minus),
            fft_field(&v.a_plus),
            fft_field(&v.a_minus),
            fft_field(&v.rho),
        ];
        {
            let mut refs: Vec<&mut Spectrum> = specs.iter_mut().collect();
            joint.apply(&mut refs);
        }
        v.m_plus = ifft_field(&specs[0]);
        v.m_minus = ifft_field(&specs[1]);
        v.a_plus = ifft_field(&specs[2]);
        v.a_minus = ifft_field(&specs[3]);
        v.rho = ifft_field(&specs[4]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisotropy::TensorDecomposition;
    use crate::energy::{
        periodize_burgers, periodize_qpme, phi_to_mrho_burgers, phi_to_mrho_qpme, DualPotential,
        QpmeAux,
    };
    use crate::grid::{dhe, dt_stagger};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_per_field(spec: GridSpec, tag: StaggerTag, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(spec, tag, |_, _| rng.gen::<f64>() - 0.5)
    }

    #[test]
    fn fft_round_trip() {
        for d in [1usize, 2] {
            let spec = GridSpec::new(0.0, 1.0, d, 3, 4).unwrap();
            for (st, sh) in [
                (TimeTag::PerCentered, [0u8, 0u8]),
                (TimeTag::PerStaggered, [0, 0]),
                (TimeTag::PerStaggered, [1, 0]),
                (TimeTag::PerCentered, [1, if d == 2 { 1 } else { 0 }]),
            ] {
                let f = rand_per_field(spec, StaggerTag::new(st, sh), 40 + d as u64);
                let back = ifft_field(&fft_field(&f));
                for (a, b) in back.values.iter().zip(&f.values) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn parseval() {
        let spec = GridSpec::new(0.0, 1.0, 2, 2, 3).unwrap();
        let f = rand_per_field(spec, StaggerTag::new(TimeTag::PerStaggered, [1, 0]), 41);
        let sp = fft_field(&f);
        let phys: f64 = f.values.iter().map(|v| v * v).sum();
        let freq: f64 = sp.data.iter().map(|c| c.norm_sqr()).sum();
        let n = (2 * spec.n_tau * spec.n_space()) as f64;
        assert!((freq / n - phys).abs() < 1e-10 * (1.0 + phys));
    }

    #[test]
    fn conjugate_symmetry_centered() {
        let spec = GridSpec::new(0.0, 1.0, 1, 2, 4).unwrap();
        let f = rand_per_field(spec, StaggerTag::new(TimeTag::PerCentered, [0, 0]), 42);
        let sp = fft_field(&f);
        let nt = 2 * spec.n_tau;
        let nh = spec.n_h;
        for z in 0..nt {
            for x in 0..nh {
                let a = sp.data[z * nh + x];
                let b = sp.data[((nt - z) % nt) * nh + (nh - x) % nh];
                assert!((a - b.conj()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn dt_symbol_matches_operator() {
        let spec = GridSpec::new(0.3, 1.1, 1, 3, 4).unwrap();
        let f = rand_per_field(spec, StaggerTag::new(TimeTag::PerCentered, [0, 0]), 43);
        let df = dt_stagger(&f);
        let sp = fft_field(&f);
        let dsp = fft_field(&df);
        let ns = spec.n_space();
        for_each_freq(&spec, |zeta, s, _| {
            let want = sym_dt(&spec, zeta) * sp.data[zeta * ns + s];
            assert!((dsp.data[zeta * ns + s] - want).norm() < 1e-9);
        });
        // And staggered → centered with the same symbol.
        let g = rand_per_field(spec, StaggerTag::new(TimeTag::PerStaggered, [0, 0]), 44);
        let dg = dt_stagger(&g);
        let gs = fft_field(&g);
        let dgs = fft_field(&dg);
        for_each_freq(&spec, |zeta, s, _| {
            let want = sym_dt(&spec, zeta) * gs.data[zeta * ns + s];
            assert!((dgs.data[zeta * ns + s] - want).norm() < 1e-9);
        });
    }

    #[test]
    fn de_symbol_matches_operator() {
        let spec = GridSpec::new(0.0, 1.0, 2, 2, 4).unwrap();
        let ns = spec.n_space();
        for e in [[1i64, 0i64], [0, 1], [1, -1], [1, 1]] {
            let f = rand_per_field(spec, StaggerTag::new(TimeTag::PerCentered, [0, 0]), 45);
            let df = dhe(&f, e);
            let sp = fft_field(&f);
            let dsp = fft_field(&df);
            for_each_freq(&spec, |zeta, s, xi| {
                let want = sym_de(&spec, xi, e) * sp.data[zeta * ns + s];
                assert!(
                    (dsp.data[zeta * ns + s] - want).norm() < 1e-8,
                    "e={e:?} zeta={zeta} xi={xi:?}"
                );
            });
        }
        // Staggered input too.
        let f = rand_per_field(spec, StaggerTag::new(TimeTag::PerCentered, [1, 0]), 46);
        let df = dhe(&f, [1, 0]);
        let sp = fft_field(&f);
        let dsp = fft_field(&df);
        for_each_freq(&spec, |zeta, s, xi| {
            let want = sym_de(&spec, xi, [1, 0]) * sp.data[zeta * ns + s];
            assert!((dsp.data[zeta * ns + s] - want).norm() < 1e-8);
        });
    }

    #[test]
    fn lap_symbol_matches_apply_lh() {
        let spec = GridSpec::new(0.0, 1.0, 2, 1, 4).unwrap();
        let dec = TensorDecomposition::isotropic(spec);
        let f = rand_per_field(spec, StaggerTag::new(TimeTag::PerCentered, [0, 0]), 47);
        let lf = crate::anisotropy::apply_lh(&f, &dec);
        let sp = fft_field(&f);
        let lsp = fft_field(&lf);
        let ns = spec.n_space();
        for_each_freq(&spec, |zeta, s, xi| {
            let want = sp.data[zeta * ns + s] * sym_lap(&spec, xi);
            assert!((lsp.data[zeta * ns + s] - want).norm() < 1e-8);
        });
    }

    #[test]
    fn line_and_hyperplane_projections() {
        let v = [Complex64::new(1.0, 1.0), Complex64::new(0.0, -2.0)];
        let x = [Complex64::new(3.0, 0.0), Complex64::new(1.0, 1.0)];
        let p = project_line(&x, &v);
        // Idempotent and residual orthogonal to v.
        let p2 = project_line(&p, &v);
        for i in 0..2 {
            assert!((p[i] - p2[i]).norm() < 1e-14);
        }
        let resid: Complex64 = v.iter().zip(x.iter().zip(&p)).map(|(a, (b, c))| a.conj() * (b - c)).sum();
        assert!(resid.norm() < 1e-14);
        let mut z = x;
        project_hyperplane(&mut z, &v);
        let c: Complex64 = v.iter().zip(&z).map(|(a, b)| a * b).sum();
        assert!(c.norm() < 1e-14);
        let mut z2 = z;
        project_hyperplane(&mut z2, &v);
        for i in 0..2 {
            assert!((z[i] - z2[i]).norm() < 1e-14);
        }
    }

    fn flat_qpme(v: &QpmeVars) -> Vec<f64> {
        let mut out = v.m.values.clone();
        out.extend(&v.rho.values);
        if let Some(a) = &v.aux {
            for f in a.m_e.iter().chain(a.n_e.iter()) {
                out.extend(&f.values);
            }
        }
        out
    }

    fn rand_qpme(spec: GridSpec, seed: u64, aux_offsets: Option<&[[i64; 2]]>) -> QpmeVars {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = |tag: StaggerTag| {
            Field::from_fn(spec, tag, |_, _| rng.gen::<f64>() - 0.5)
        };
        let m = g(StaggerTag::new(TimeTag::PerStaggered, [0, 0]));
        let rho = g(StaggerTag::new(TimeTag::PerCentered, [0, 0]));
        let aux = aux_offsets.map(|offs| QpmeAux {
            offsets: offs.to_vec(),
            m_e: offs
                .iter()
                .map(|&e| g(StaggerTag::new(TimeTag::PerStaggered, crate::anisotropy::offset_shift(e))))
                .collect(),
            n_e: offs
                .iter()
                .map(|&e| g(StaggerTag::new(TimeTag::PerStaggered, crate::anisotropy::offset_shift(e))))
                .collect(),
        });
        QpmeVars { m, rho, aux }
    }

    #[test]
    fn qpme_iso_projection_properties() {
        let spec = GridSpec::new(0.1, 1.0, 1, 3, 6).unwrap();
        let proj = FeasibleProjector::qpme_iso(spec);
        // Bijection output is feasible: projection leaves it unchanged.
        let dec = TensorDecomposition::isotropic(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mut phi = Field::from_fn(spec, StaggerTag::centered(TimeTag::Centered), |_, _| {
            rng.gen::<f64>() - 0.5
        });
        phi.slice_mut(spec.n_tau).fill(0.0);
        let v0 = periodize_qpme(&phi_to_mrho_qpme(&DualPotential { phi }, &dec));
        let mut v1 = v0.clone();
        proj.project_qpme(&mut v1);
        for (a, b) in flat_qpme(&v1).iter().zip(flat_qpme(&v0)) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        // Idempotence and norm non-increase on random input.
        let w0 = rand_qpme(spec, 51, None);
        let mut w1 = w0.clone();
        proj.project_qpme(&mut w1);
        let mut w2 = w1.clone();
        proj.project_qpme(&mut w2);
        let (f0, f1, f2) = (flat_qpme(&w0), flat_qpme(&w1), flat_qpme(&w2));
        let n0: f64 = f0.iter().map(|x| x * x).sum();
        let n1: f64 = f1.iter().map(|x| x * x).sum();
        assert!(n1 <= n0 + 1e-12);
        for (a, b) in f1.iter().zip(&f2) {
            assert!((a - b).abs() < 1e-12);
        }
        // Self-adjointness: ⟨Px, y⟩ = ⟨x, Py⟩.
        let y0 = rand_qpme(spec, 52, None);
        let mut py = y0.clone();
        proj.project_qpme(&mut py);
        let (fy0, fpy) = (flat_qpme(&y0), flat_qpme(&py));
        let ip_py_x: f64 = fpy.iter().zip(&f0).map(|(a, b)| a * b).sum();
        let ip_y_px: f64 = fy0.iter().zip(&f1).map(|(a, b)| a * b).sum();
        assert!((ip_py_x - ip_y_px).abs() < 1e-10 * (1.0 + ip_py_x.abs()));
    }

    #[test]
    fn qpme_aniso_projection_properties() {
        let spec = GridSpec::new(0.0, 1.0, 2, 2, 4).unwrap();
        let d = [[1.3, 0.4], [0.4, 0.9]];
        let dec = TensorDecomposition::constant(spec, &d).unwrap();
        let offsets = dec.offsets.clone();
        let proj = FeasibleProjector::qpme_aniso(spec, &offsets);
        // Feasible point from the bijection with consistent auxiliaries.
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let mut phi = Field::from_fn(spec, StaggerTag::centered(TimeTag::Centered), |_, _| {
            rng.gen::<f64>() - 0.5
        });
        phi.slice_mut(spec.n_tau).fill(0.0);
        let base = phi_to_mrho_qpme(&DualPotential { phi }, &dec);
        let m_per = crate::energy::periodize_odd(&base.m);
        let m_e: Vec<Field> = offsets.iter().map(|&e| dhe(&m_per, e)).collect();
        let n_e: Vec<Field> = offsets
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let mut f = m_e[i].clone();
                for kk in 0..f.n_time() {
                    for s in 0..spec.n_space() {
                        *f.at_mut(kk, s) *= dec.weights[i][s];
                    }
                }
                f
            })
            .collect();
        let v0 = QpmeVars {
            m: m_per,
            rho: crate::energy::periodize_even(&base.rho),
            aux: Some(QpmeAux { offsets: offsets.clone(), m_e, n_e }),
        };
        let mut v1 = v0.clone();
        proj.project_qpme(&mut v1);
        for (a, b) in flat_qpme(&v1).iter().zip(flat_qpme(&v0)) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // Idempotence + norm non-increase on random input.
        let w0 = rand_qpme(spec, 54, Some(&offsets));
        let mut w1 = w0.clone();
        proj.project_qpme(&mut w1);
        let mut w2 = w1.clone();
        proj.project_qpme(&mut w2);
        let (f0, f1, f2) = (flat_qpme(&w0), flat_qpme(&w1), flat_qpme(&w2));
        assert!(f1.iter().map(|x| x * x).sum::<f64>() <= f0.iter().map(|x| x * x).sum::<f64>() + 1e-12);
        for (a, b) in f1.iter().zip(&f2) {
            assert!((a - b).abs() < 1e-11);
        }
        // Residuals of the projected state vanish in physical space.
        let dm: Vec<Field> = offsets.iter().map(|&e| dhe(&w1.m, e)).collect();
        let aux = w1.aux.as_ref().unwrap();
        for (i, f) in dm.iter().enumerate() {
            for (a, b) in f.values.iter().zip(&aux.m_e[i].values) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        let drho = dt_stagger(&w1.rho);
        let mut div = Field::zeros(spec, drho.tag);
        for (i, &e) in offsets.iter().enumerate() {
            let dn = dhe(&aux.n_e[i], e);
            for (d, s) in div.values.iter_mut().zip(&dn.values) {
                *d += s;
            }
        }
        for (a, b) in drho.values.iter().zip(&div.values) {
            assert!((a + b).abs() < 1e-9);
        }
    }

    #[test]
    fn burgers_projection_properties() {
        let spec = GridSpec::new(0.1, 0.9, 1, 3, 8).unwrap();
        let nu = 0.07;
        let proj = FeasibleProjector::burgers(spec, nu);
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut phi = Field::from_fn(spec, StaggerTag::centered(TimeTag::Centered), |_, _| {
            rng.gen::<f64>() - 0.5
        });
        phi.slice_mut(spec.n_tau).fill(0.0);
        let mut v0 = periodize_burgers(&phi_to_mrho_burgers(&DualPotential { phi }, nu));
        // Move ρ to its staggered storage: phi_to_mrho_burgers stores ρ on the
        // centered lattice of 1 − ∂_hφ, whose dhe output shift is [1, 0].
        assert_eq!(v0.rho.tag.shift, [1, 0]);
        let flat = |v: &BurgersVars| {
            let mut o = v.m_plus.values.clone();
            o.extend(&v.m_minus.values);
            o.extend(&v.a_plus.values);
            o.extend(&v.a_minus.values);
            o.extend(&v.rho.values);
            o
        };
        let f0 = flat(&v0);
        proj.project_burgers(&mut v0);
        for (a, b) in flat(&v0).iter().zip(&f0) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // Random input: idempotent, nonexpansive, residuals vanish.
        let mut g = |tag: StaggerTag| Field::from_fn(spec, tag, |_, _| rng.gen::<f64>() - 0.5);
        let mut w = BurgersVars {
            m_plus: g(StaggerTag::new(TimeTag::PerStaggered, [0, 0])),
            m_minus: g(StaggerTag::new(TimeTag::PerStaggered, [0, 0])),
            a_plus: g(StaggerTag::new(TimeTag::PerCentered, [0, 0])),
            a_minus: g(StaggerTag::new(TimeTag::PerCentered, [0, 0])),
            rho: g(StaggerTag::new(TimeTag::PerCentered, [1, 0])),
            nu,
        };
        let w0 = flat(&w);
        proj.project_burgers(&mut w);
        let w1 = flat(&w);
        let mut w2s = w.clone();
        proj.project_burgers(&mut w2s);
        let w2 = flat(&w2s);
        assert!(w1.iter().map(|x| x * x).sum::<f64>() <= w0.iter().map(|x| x * x).sum::<f64>() + 1e-12);
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a - b).abs() < 1e-11);
        }
        for (a, b) in w.m_plus.values.iter().zip(&w.m_minus.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let drho = dt_stagger(&w.rho);
        let dm = dhe(&w.m_plus, [1, 0]);
        for (a, b) in drho.values.iter().zip(&dm.values) {
            assert!((a + b).abs() < 1e-9);
        }
        let dr = dhe(&w.rho, [1, 0]);
        for (a, b) in w.a_plus.values.iter().zip(&dr.values) {
            assert!((a + nu * b).abs() < 1e-9);
        }
    }
}
