use bbb::anisotropy::TensorDecomposition as TD;
use bbb::baseline::{run_theta, ThetaScheme};
use bbb::grid::{Field, GridSpec, StaggerTag, TimeTag};
use bbb::newton::{solve_newton, NewtonConfig, NewtonProblem};
use bbb::pd_solver::{solve_pd, PdConfig, PdProblem};
use bbb::problem::QpmeBarenblatt;
use bbb::recovery::{fit_order, phi_errors, u_errors};
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();
    if which == "phi" {
        // C3 probe: phi errors on the criterion-1 ladder.
        let mut ns = vec![];
        let mut es = vec![];
        for nt in [4usize, 8, 16, 32, 64] {
            let p = QpmeBarenblatt::new(1.0, 1, 1e-4, 1e-3, nt, 5 * nt).unwrap();
            let dec = TD::isotropic(p.spec);
            let mut cfg = NewtonConfig::default();
            cfg.direct_cap = 40000;
            let r = solve_newton(&NewtonProblem::Qpme { dec: &dec }, &p.u0, &cfg, None).unwrap();
            let (l1, _) = phi_errors(&r.phi.phi, &p.reference_phi());
            println!("nt={nt:3} phi_l1={l1:.5e}");
            ns.push(nt as f64);
            es.push(l1);
        }
        println!("phi LS slope = {:.3}", fit_order(&ns, &es));
    } else if which == "implicit" {
        // C10 probe: implicit slope in tau.
        let t0 = 1e-4;
        let t1 = 1e-3;
        let p = QpmeBarenblatt::new(1.0, 1, t0, t1, 4, 128).unwrap();
        let mut ns = vec![];
        let mut es = vec![];
        for nt in [4usize, 8, 16, 32] {
            let p = QpmeBarenblatt::new(1.0, 1, t0, t1, nt, 128).unwrap();
            let dec = TD::isotropic(p.spec);
            let run = run_theta(&p.u0, &ThetaScheme::new(0.0).unwrap(), &dec).unwrap();
            let (l1, linf) = u_errors(&p.physical_u(&run.u), &p.reference());
            println!("nt={nt:3} l1={l1:.4e} linf={linf:.4e}");
            ns.push(nt as f64);
            es.push(l1);
        }
        let _ = p;
        println!("implicit LS slope = {:.3}", fit_order(&ns, &es));
    } else if which == "aniso" {
        // C11 probe: mapped vs iso PD at nt=12, nx=48.
        use bbb::problem::QpmeMapped;
        let t = Instant::now();
        let m = QpmeMapped::new(1.0, 1e-5, 1e-4, 0.035, 12, 48).unwrap();
        println!("mapped setup {:?} offsets={}", t.elapsed(), m.dec.offsets.len());
        let mut cfg = PdConfig::default();
        cfg.max_iters = 6000;
        let t = Instant::now();
        let r = solve_pd(&PdProblem::Qpme { dec: &m.dec }, &m.u0, &cfg).unwrap();
        let (l1m, _) = u_errors(&m.physical_u(&r.u), &m.reference());
        println!("mapped iters={} resid={:.2e} l1={l1m:.5e} ({:?})", r.iterations, r.residual, t.elapsed());
        let pi = QpmeBarenblatt::new(1.0, 2, 1e-5, 1e-4, 12, 48).unwrap();
        let dec = TD::isotropic(pi.spec);
        let t = Instant::now();
        let ri = solve_pd(&PdProblem::Qpme { dec: &dec }, &pi.u0, &cfg).unwrap();
        let (l1i, _) = u_errors(&pi.physical_u(&ri.u), &pi.reference());
        println!("iso    iters={} resid={:.2e} l1={l1i:.5e} ({:?})", ri.iterations, ri.residual, t.elapsed());
        println!("ratio = {:.3}", l1m / l1i);
    } else if which == "cross" {
        // C9 probe at nt=8, nx=40 for qpme.
        let p = QpmeBarenblatt::new(1.0, 1, 1e-4, 1e-3, 8, 40).unwrap();
        let dec = TD::isotropic(p.spec);
        let rn = solve_newton(&NewtonProblem::Qpme { dec: &dec }, &p.u0, &NewtonConfig::default(), None).unwrap();
        let rp = solve_pd(&PdProblem::Qpme { dec: &dec }, &p.u0, &PdConfig::default()).unwrap();
        let du = rn.u.values.iter().zip(&rp.u.values).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        println!("qpme dE={:.3e} du={du:.3e} pd_iters={}", (rn.energy - rp.energy).abs(), rp.iterations);
        let b = bbb::problem::BurgersHopfCole::new(1e-2, 5.0, 0.1, 1.0, -0.6, 0.9, 8, 40).unwrap();
        let rn = solve_newton(&NewtonProblem::Burgers { nu: b.nu_eff }, &b.u0, &NewtonConfig::default(), None).unwrap();
        let rp = solve_pd(&PdProblem::Burgers { nu: b.nu_eff }, &b.u0, &PdConfig::default()).unwrap();
        let du = rn.u.values.iter().zip(&rp.u.values).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        println!("burgers dE={:.3e} du={du:.3e} pd_iters={}", (rn.energy - rp.energy).abs(), rp.iterations);
        let _ = Field::zeros(p.spec, StaggerTag::centered(TimeTag::Single));
        let _ = GridSpec::new(0.0, 1.0, 1, 2, 4);
    }
}
