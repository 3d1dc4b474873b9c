use bbb::anisotropy::offset_shift;
use bbb::energy::{QpmeAux, QpmeVars};
use bbb::grid::{Field, GridSpec, StaggerTag, TimeTag};
use bbb::spectral::{fft_field, ifft_field, project_parity_even, project_parity_odd, sym_de, sym_dt, FeasibleProjector};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let spec = GridSpec::new(0.1, 1.0, 2, 1, 8).unwrap();
    let offs = vec![[0i64, 1], [1, -1], [1, 0], [1, 1]];
    let k = offs.len();
    let nvars = 2 * k + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut v = QpmeVars {
        m: Field::from_fn(spec, StaggerTag::new(TimeTag::PerStaggered, [0, 0]), |_, _| rng.gen::<f64>() - 0.5),
        rho: Field::from_fn(spec, StaggerTag::new(TimeTag::PerCentered, [0, 0]), |_, _| rng.gen::<f64>() - 0.5),
        aux: Some(QpmeAux {
            offsets: offs.clone(),
            m_e: (0..k).map(|i| Field::from_fn(spec, StaggerTag::new(TimeTag::PerStaggered, offset_shift(offs[i])), |_, _| rng.gen::<f64>() - 0.5)).collect(),
            n_e: (0..k).map(|i| Field::from_fn(spec, StaggerTag::new(TimeTag::PerStaggered, offset_shift(offs[i])), |_, _| rng.gen::<f64>() - 0.5)).collect(),
        }),
    };
    // Replica: parity first, then per-frequency exact projection via nalgebra.
    let mut w = v.clone();
    project_parity_odd(&mut w.m);
    project_parity_even(&mut w.rho);
    {
        let aux = w.aux.as_mut().unwrap();
        for f in aux.m_e.iter_mut().chain(aux.n_e.iter_mut()) {
            project_parity_odd(f);
        }
    }
    let mut spectra = vec![fft_field(&w.m)];
    for f in &w.aux.as_ref().unwrap().m_e {
        spectra.push(fft_field(f));
    }
    for f in &w.aux.as_ref().unwrap().n_e {
        spectra.push(fft_field(f));
    }
    spectra.push(fft_field(&w.rho));
    let n = spec.n_h;
    let ns = spec.n_space();
    let nt = 2 * spec.n_tau;
    let scale2 = 1.0 / (spec.h() * spec.h()) + 1.0 / (spec.tau() * spec.tau()) + 1.0;
    for zeta in 0..nt {
        for s in 0..ns {
            let xi = [s / n, s % n];
            let mut rows: Vec<Vec<Complex64>> = Vec::new();
            for (i, &e) in offs.iter().enumerate() {
                let mut r = vec![Complex64::default(); nvars];
                r[0] = sym_de(&spec, xi, e);
                r[1 + i] = Complex64::new(-1.0, 0.0);
                rows.push(r);
            }
            let mut r = vec![Complex64::default(); nvars];
            r[nvars - 1] = sym_dt(&spec, zeta);
            for (i, &e) in offs.iter().enumerate() {
                r[1 + k + i] = sym_de(&spec, xi, e);
            }
            rows.push(r);
            let rows: Vec<Vec<Complex64>> = rows
                .into_iter()
                .filter(|r| r.iter().map(|c| c.norm_sqr()).sum::<f64>() > 1e-28 * scale2)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let nr = rows.len();
            let a = DMatrix::from_fn(nr, nvars, |i, j| rows[i][j]);
            let idx = zeta * ns + s;
            let z = DVector::from_fn(nvars, |i, _| spectra[i].data[idx]);
            let g = &a * a.adjoint();
            let gi = g.try_inverse().unwrap();
            let znew = &z - a.adjoint() * gi * (&a * z.clone());
            for i in 0..nvars {
                spectra[i].data[idx] = znew[i];
            }
        }
    }
    w.m = ifft_field(&spectra[0]);
    for (i, f) in w.aux.as_mut().unwrap().m_e.iter_mut().enumerate() {
        *f = ifft_field(&spectra[1 + i]);
    }
    for (i, f) in w.aux.as_mut().unwrap().n_e.iter_mut().enumerate() {
        *f = ifft_field(&spectra[1 + k + i]);
    }
    w.rho = ifft_field(&spectra[nvars - 1]);
    // Implemented version.
    let proj = FeasibleProjector::qpme_aniso(spec, &offs);
    proj.project_qpme(&mut v);
    // Compare.
    let cmp = |a: &Field, b: &Field| a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max);
    println!("m diff {:.3e}  rho diff {:.3e}", cmp(&v.m, &w.m), cmp(&v.rho, &w.rho));
    for i in 0..k {
        println!("m_e[{i}] diff {:.3e}  n_e[{i}] diff {:.3e}",
            cmp(&v.aux.as_ref().unwrap().m_e[i], &w.aux.as_ref().unwrap().m_e[i]),
            cmp(&v.aux.as_ref().unwrap().n_e[i], &w.aux.as_ref().unwrap().n_e[i]));
    }
    // Does the replica satisfy constraints?
    use bbb::grid::dhe;
    for (i, &e) in offs.iter().enumerate() {
        let d = dhe(&w.m, e);
        let r = d.values.iter().zip(&w.aux.as_ref().unwrap().m_e[i].values).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        println!("replica offset {e:?}: |dhe(m)-m_e| = {r:.3e}");
    }
}
