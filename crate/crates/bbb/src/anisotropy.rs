//! Selling decomposition of 2×2 SPD tensors into nonnegative weights over
//! integer offsets, spatially varying weight fields, and the divergence-form
//! operator L_h = −div_h(𝒟 ∇_h ·):
//!
//!   −L_h u(x) = (2h)⁻² Σ_e [ λᵉ(x+he)(u(x+2he)−u(x)) + λᵉ(x−he)(u(x−2he)−u(x)) ].

use crate::grid::{shift_index, Field, GridSpec};
use crate::{Error, Result};

/// Lexicographically positive representative of ±e.
fn canonical_offset(e: [i64; 2]) -> [i64; 2] {
    if e[0] > 0 || (e[0] == 0 && e[1] > 0) {
        e
    } else {
        [-e[0], -e[1]]
    }
}

/// Canonical lattice shift (in units of h) of the half-offset point x + he.
pub fn offset_shift(e: [i64; 2]) -> [u8; 2] {
    [(e[0].rem_euclid(2)) as u8, (e[1].rem_euclid(2)) as u8]
}

/// Index correction so that λᵉ(x_j + he) = weights[j + offset_delta(e)] when the
/// weight field is stored on the canonical (+h per odd axis) lattice.
pub fn offset_delta(e: [i64; 2]) -> [i64; 2] {
    let s = offset_shift(e);
    [(e[0] - s[0] as i64) / 2, (e[1] - s[1] as i64) / 2]
}

fn dot(a: [i64; 2], m: &[[f64; 2]; 2], b: [i64; 2]) -> f64 {
    let ma = [
        m[0][0] * a[0] as f64 + m[0][1] * a[1] as f64,
        m[1][0] * a[0] as f64 + m[1][1] * a[1] as f64,
    ];
    ma[0] * b[0] as f64 + ma[1] * b[1] as f64
}

/// Selling decomposition of a symmetric positive-definite 2×2 matrix:
/// D = Σ λᵉ e eᵀ with at most 3 integer offsets and λᵉ ≥ 0.
pub fn selling_decompose(d: &[[f64; 2]; 2]) -> Result<Vec<([i64; 2], f64)>> {
    let scale = d[0][0].abs().max(d[1][1].abs()).max(d[0][1].abs());
    if (d[0][1] - d[1][0]).abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::Invalid("matrix is not symmetric".into()));
    }
    let tr = d[0][0] + d[1][1];
    let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    if !(tr > 0.0 && det > 0.0) {
        return Err(Error::Invalid("matrix is not positive definite".into()));
    }
    // Iteration cap proportional to log of the condition number.
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let cond = (tr + disc) / (tr - disc).max(f64::MIN_POSITIVE);
    let cap = 100 + (20.0 * cond.log2().max(0.0)) as usize;
    let mut sb: [[i64; 2]; 3] = [[1, 0], [0, 1], [-1, -1]];
    let tol = 1e-14 * scale;
    for _ in 0..cap {
        // Most positive pairwise product first (deterministic tie-breaking).
        let mut best = (0usize, 1usize, f64::NEG_INFINITY);
        for i in 0..3 {
            for j in (i + 1)..3 {
                let p = dot(sb[i], d, sb[j]);
                if p > best.2 {
                    best = (i, j, p);
                }
            }
        }
        if best.2 <= tol {
            let mut out: Vec<([i64; 2], f64)> = Vec::new();
            for i in 0..3 {
                for j in (i + 1)..3 {
                    let k = 3 - i - j;
                    let w = -dot(sb[i], d, sb[j]);
                    if w > 0.0 {
                        // Offset perpendicular to the third superbase element.
                        let e = canonical_offset([-sb[k][1], sb[k][0]]);
                        out.push((e, w));
                    }
                }
            }
            out.sort_unstable_by_key(|p| p.0);
            return Ok(out);
        }
        let (i, j, _) = best;
        let k = 3 - i - j;
        let (ei, ej) = (sb[i], sb[j]);
        sb[i] = [-ei[0], -ei[1]];
        sb[j] = ej;
        sb[k] = [ei[0] - ej[0], ei[1] - ej[1]];
    }
    Err(Error::Numerical("Selling reduction did not terminate (ill-conditioned input)".into()))
}

/// Offset stencil with nonnegative weight fields reconstructing a tensor field.
///
/// Weight fields are space-only, one slice per offset, sampled at the shifted
/// points x + he and stored on the canonical staggered lattice (see offset_delta).
#[derive(Clone, Debug)]
pub struct TensorDecomposition {
    pub spec: GridSpec,
    pub offsets: Vec<[i64; 2]>,
    /// weights[i][j] = λ^{offsets[i]} at lattice point j (canonical shift).
    pub weights: Vec<Vec<f64>>,
}

impl TensorDecomposition {
    /// Constant-coefficient decomposition (e.g. the isotropic identity).
    pub fn constant(spec: GridSpec, d: &[[f64; 2]; 2]) -> Result<Self> {
        let parts = if spec.d == 1 {
            vec![([1i64, 0i64], d[0][0])]
        } else {
            selling_decompose(d)?
        };
        let ns = spec.n_space();
        Ok(TensorDecomposition {
            spec,
            offsets: parts.iter().map(|p| p.0).collect(),
            weights: parts.iter().map(|p| vec![p.1; ns]).collect(),
        })
    }

    /// Isotropic unit tensor.
    pub fn isotropic(spec: GridSpec) -> Self {
        Self::constant(spec, &[[1.0, 0.0], [0.0, 1.0]]).expect("identity is SPD")
    }

    /// λᵉ(x_j ± he) for offset index i at centered flat index j.
    #[inline]
    pub fn weight_at(&self, i: usize, j: usize, sign: i64) -> f64 {
        let e = self.offsets[i];
        let delta = if sign > 0 {
            offset_delta(e)
        } else {
            // x − he = x_{j} + h(−e): index j + (−e − canon(−e... use identity
            // λᵉ(x_j − he) = weights[j − e + delta] since the lattice repeats every 2h.
            let d0 = offset_delta(e);
            [d0[0] - e[0], d0[1] - e[1]]
        };
        self.weights[i][shift_index(&self.spec, j, delta)]
    }

    /// Sparse rows of the matrix of L_h acting on one spatial slice.
    pub fn lh_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let ns = self.spec.n_space();
        let inv = 1.0 / (2.0 * self.spec.h()).powi(2);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ns];
        for (j, row) in rows.iter_mut().enumerate() {
            let mut acc: Vec<(usize, f64)> = Vec::with_capacity(2 * self.offsets.len() + 1);
            let mut diag = 0.0;
            for i in 0..self.offsets.len() {
                let e = self.offsets[i];
                let wp = self.weight_at(i, j, 1);
                let wm = self.weight_at(i, j, -1);
                diag += (wp + wm) * inv;
                let jp = shift_index(&self.spec, j, e);
                let jm = shift_index(&self.spec, j, [-e[0], -e[1]]);
                push_acc(&mut acc, jp, -wp * inv);
                push_acc(&mut acc, jm, -wm * inv);
            }
            push_acc(&mut acc, j, diag);
            acc.sort_unstable_by_key(|&(c, _)| c);
            *row = acc;
        }
        rows
    }
}

fn push_acc(acc: &mut Vec<(usize, f64)>, col: usize, val: f64) {
    for entry in acc.iter_mut() {
        if entry.0 == col {
            entry.1 += val;
            return;
        }
    }
    acc.push((col, val));
}

/// Decompose a spatially varying SPD tensor field. The union stencil is collected
/// by a fixed-point sweep so that weights exist at every point where apply_lh
/// samples them.
pub fn decompose_field(
    spec: GridSpec,
    dfield: &dyn Fn([f64; 2]) -> [[f64; 2]; 2],
) -> Result<TensorDecomposition> {
    if spec.d == 1 {
        let ns = spec.n_space();
        let h = spec.h();
        let mut w = vec![0.0; ns];
        for (j, wj) in w.iter_mut().enumerate() {
            let x = 2.0 * h * j as f64 + h; // staggered point x_j + h
            let v = dfield([x, 0.0])[0][0];
            if v <= 0.0 {
                return Err(Error::Invalid(format!("nonpositive 1D coefficient at x={x}")));
            }
            *wj = v;
        }
        return Ok(TensorDecomposition { spec, offsets: vec![[1, 0]], weights: vec![w] });
    }
    let ns = spec.n_space();
    let h = spec.h();
    let decompose_at = |x: [f64; 2]| -> Result<Vec<([i64; 2], f64)>> {
        selling_decompose(&dfield(x))
            .map_err(|e| Error::Numerical(format!("at x=({},{}): {e}", x[0], x[1])))
    };
    // Collect the union stencil: centered points first, then each offset's shifted
    // lattice, until no new offsets appear.
    let mut offsets: Vec<[i64; 2]> = Vec::new();
    for j in 0..ns {
        for (e, _) in decompose_at(spec.coord(j, [0, 0]))? {
            if !offsets.contains(&e) {
                offsets.push(e);
            }
        }
    }
    for _round in 0..4 {
        let mut grew = false;
        for &e in offsets.clone().iter() {
            for j in 0..ns {
                let mut x = spec.coord(j, [0, 0]);
                x[0] += h * e[0] as f64;
                x[1] += h * e[1] as f64;
                for (e2, _) in decompose_at(x)? {
                    if !offsets.contains(&e2) {
                        offsets.push(e2);
                        grew = true;
                    }
                }
            }
        }
        if !grew {
            break;
        }
    }
    offsets.sort_unstable();
    // Sample weight fields on each offset's canonical lattice.
    let mut weights = vec![vec![0.0; ns]; offsets.len()];
    for (i, &e) in offsets.iter().enumerate() {
        let s = offset_shift(e);
        for j in 0..ns {
            let x = spec.coord(j, s);
            let parts = decompose_at(x)?;
            weights[i][j] = parts
                .iter()
                .find(|(e2, _)| *e2 == e)
                .map(|(_, w)| *w)
                .unwrap_or(0.0);
        }
    }
    Ok(TensorDecomposition { spec, offsets, weights })
}

/// Apply L_h slice-wise to a space-centered field.
pub fn apply_lh(u: &Field, dec: &TensorDecomposition) -> Field {
    assert_eq!(u.tag.shift, [0, 0], "apply_lh expects a space-centered field");
    let rows = dec.lh_rows();
    let mut out = Field::zeros(u.spec, u.tag);
    for k in 0..u.n_time() {
        let src = u.slice(k);
        let dst = out.slice_mut(k);
        apply_lh_slice(&rows, src, dst);
    }
    out
}

/// Apply L_h to one spatial slice given precomputed rows.
pub fn apply_lh_slice(rows: &[Vec<(usize, f64)>], src: &[f64], dst: &mut [f64]) {
    for (j, row) in rows.iter().enumerate() {
        let mut acc = 0.0;
        for &(c, v) in row {
            acc += v * src[c];
        }
        dst[j] = acc;
    }
}
