//! Text serialization: fields as delimiter-separated records, error tables
//! with trailing slope comments, and run summaries as key: value blocks.

use crate::grid::{Field, GridSpec, StaggerTag, TimeTag};
use crate::problem::SolveResult;
use crate::recovery::ErrorTable;
use crate::{Error, Result};
use std::io::{BufRead, Write};

fn sample_time(spec: &GridSpec, time: TimeTag, k: usize) -> f64 {
    match time {
        TimeTag::Single => spec.t0,
        TimeTag::Centered => spec.t_centered(k),
        TimeTag::Staggered => spec.t_staggered(k),
        _ => panic!("periodized fields are internal and not serialized"),
    }
}

/// Write a field as CSV, one record per (t, x₁[, x₂], value), time-major.
pub fn write_field(w: &mut impl Write, f: &Field) -> Result<()> {
    let spec = f.spec;
    if spec.d == 1 {
        writeln!(w, "t,x1,value")?;
    } else {
        writeln!(w, "t,x1,x2,value")?;
    }
    for k in 0..f.n_time() {
        let t = sample_time(&spec, f.tag.time, k);
        for s in 0..spec.n_space() {
            let x = spec.coord(s, f.tag.shift);
            if spec.d == 1 {
                writeln!(w, "{t:.17e},{:.17e},{:.17e}", x[0], f.at(k, s))?;
            } else {
                writeln!(w, "{t:.17e},{:.17e},{:.17e},{:.17e}", x[0], x[1], f.at(k, s))?;
            }
        }
    }
    Ok(())
}

/// Read a single-time-slice field (initial condition) written by write_field;
/// values must appear in the writer's spatial order.
pub fn read_u0(r: &mut impl BufRead, spec: GridSpec) -> Result<Field> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Invalid("empty field file".into()))??;
    let ncols = header.split(',').count();
    if ncols != spec.d + 2 {
        return Err(Error::Invalid(format!(
            "field file has {ncols} columns, expected {}",
            spec.d + 2
        )));
    }
    let mut values = Vec::with_capacity(spec.n_space());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != ncols {
            return Err(Error::Invalid(format!("malformed record: {line}")));
        }
        let v: f64 = cols[ncols - 1]
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad value in record: {line}")))?;
        values.push(v);
    }
    if values.len() != spec.n_space() {
        return Err(Error::Invalid(format!(
            "field file holds {} values, expected {}",
            values.len(),
            spec.n_space()
        )));
    }
    let mut f = Field::zeros(spec, StaggerTag::centered(TimeTag::Single));
    f.values = values;
    Ok(f)
}

/// Write an error table as CSV with trailing "# slope" comment lines.
pub fn write_error_table(w: &mut impl Write, t: &ErrorTable) -> Result<()> {
    writeln!(w, "n_tau,n_h,error_l1,error_linf,runtime_s")?;
    for r in &t.rows {
        writeln!(
            w,
            "{},{},{:.8e},{:.8e},{:.3}",
            r.n_tau, r.n_h, r.error_l1, r.error_linf, r.runtime
        )?;
    }
    if t.rows.len() >= 3 {
        writeln!(w, "# slope_l1 {:.4}", t.slope_l1())?;
        writeln!(w, "# slope_linf {:.4}", t.slope_linf())?;
    }
    Ok(())
}

/// Run metadata for the summary block.
pub struct RunSummary<'a> {
    pub spec: GridSpec,
    pub solver: &'a str,
    pub result: &'a SolveResult,
    /// (t_star, floor) from the density-floor diagnostic, if applicable.
    pub rho_floor: Option<(f64, f64)>,
}

/// Write the summary as a key: value block.
pub fn write_summary(w: &mut impl Write, s: &RunSummary) -> Result<()> {
    let g = &s.spec;
    writeln!(w, "t0: {:.10e}", g.t0)?;
    writeln!(w, "t1: {:.10e}", g.t1)?;
    writeln!(w, "dimension: {}", g.d)?;
    writeln!(w, "n_tau: {}", g.n_tau)?;
    writeln!(w, "n_h: {}", g.n_h)?;
    writeln!(w, "solver: {}", s.solver)?;
    writeln!(w, "iterations: {}", s.result.iterations)?;
    writeln!(w, "energy: {:.12e}", s.result.energy)?;
    writeln!(w, "max_residual: {:.6e}", s.result.residual)?;
    writeln!(w, "min_rho: {:.6e}", s.result.min_rho)?;
    writeln!(w, "flagged_recovery_cells: {}", s.result.flagged)?;
    if let Some((t_star, floor)) = s.rho_floor {
        writeln!(w, "rho_floor_t_star: {t_star:.6e}")?;
        writeln!(w, "rho_floor_estimate: {floor:.6e}")?;
        if floor < 1e-12 {
            writeln!(
                w,
                "warning: density floor {floor:.3e} is below machine tolerance; \
                 convergence before the final time is not expected"
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery::ErrorRow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn field_round_trip_via_text() {
        let spec = GridSpec::new(0.1, 1.0, 1, 3, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(80);
        let f = Field::from_fn(spec, StaggerTag::centered(TimeTag::Single), |_, _| {
            rng.gen::<f64>() - 0.5
        });
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let back = read_u0(&mut std::io::Cursor::new(&buf), spec).unwrap();
        assert_eq!(back.values, f.values);
    }

    #[test]
    fn deterministic_output() {
        let spec = GridSpec::new(0.0, 1.0, 2, 2, 3).unwrap();
        let f = Field::from_fn(spec, StaggerTag::centered(TimeTag::Staggered), |k, x| {
            k as f64 + x[0] - x[1]
        });
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_field(&mut a, &f).unwrap();
        write_field(&mut b, &f).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with("t,x1,x2,value\n"));
    }

    #[test]
    fn wrong_size_rejected() {
        let spec = GridSpec::new(0.1, 1.0, 1, 3, 5).unwrap();
        let small = GridSpec::new(0.1, 1.0, 1, 3, 4).unwrap();
        let f = Field::zeros(spec, StaggerTag::centered(TimeTag::Single));
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert!(read_u0(&mut std::io::Cursor::new(&buf), small).is_err());
    }

    #[test]
    fn error_table_text_has_slope_comments() {
        let mut t = ErrorTable::default();
        for (n, e) in [(4usize, 0.1f64), (8, 0.025), (16, 0.00625)] {
            t.push(ErrorRow { n_tau: n, n_h: 5 * n, error_l1: e, error_linf: 2.0 * e, runtime: 0.1 });
        }
        let mut buf = Vec::new();
        write_error_table(&mut buf, &t).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("# slope_l1 2.0000"), "{s}");
        assert!(s.contains("# slope_linf 2.0000"), "{s}");
    }
}
