//! Integer sampling-lattice arithmetic.
//!
//! A sampling matrix `M` (nonsingular, integer) induces the coset space
//! `Z^d / M^T Z^d` with `m = |det M|` residues `gamma_1..gamma_m`,
//! `gamma_1 = 0`. The fundamental cells
//! `Q_k = M^{-T} gamma_k / N + M^{-T} [0,1)^d / N` fold into `[0, 1/N)^d`
//! without overlap, which is what makes the coset resummation of integrals
//! over `[0, 1/N)^d` valid.
//!
//! Everything here is exact integer (or rational) arithmetic; floating point
//! only appears in the affine cell descriptors handed to the numeric layers.

use crate::error::{Error, Result};

/// Floor division that rounds toward negative infinity for any sign of `q`.
fn floor_div(p: i128, q: i128) -> i128 {
    let (p, q) = if q < 0 { (-p, -q) } else { (p, q) };
    p.div_euclid(q)
}

/// Exact determinant of a small integer matrix (cofactor expansion).
fn det_i128(a: &[Vec<i128>]) -> i128 {
    let n = a.len();
    match n {
        0 => 1,
        1 => a[0][0],
        2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        _ => {
            let mut det = 0i128;
            for j in 0..n {
                if a[0][j] == 0 {
                    continue;
                }
                let minor: Vec<Vec<i128>> = (1..n)
                    .map(|r| (0..n).filter(|&c| c != j).map(|c| a[r][c]).collect())
                    .collect();
                let sign = if j % 2 == 0 { 1 } else { -1 };
                det += sign * a[0][j] * det_i128(&minor);
            }
            det
        }
    }
}

/// Adjugate matrix, so that `a * adj(a) = det(a) * I` exactly.
fn adjugate_i128(a: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let n = a.len();
    if n == 1 {
        return vec![vec![1]];
    }
    let mut adj = vec![vec![0i128; n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: Vec<Vec<i128>> = (0..n)
                .filter(|&r| r != i)
                .map(|r| (0..n).filter(|&c| c != j).map(|c| a[r][c]).collect())
                .collect();
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            // cofactor C_ij goes to adj[j][i]
            adj[j][i] = sign * det_i128(&minor);
        }
    }
    adj
}

/// `|det M|` computed exactly in integer arithmetic.
pub fn abs_determinant(mat: &[Vec<i64>]) -> Result<u64> {
    let a: Vec<Vec<i128>> = mat
        .iter()
        .map(|r| r.iter().map(|&x| x as i128).collect())
        .collect();
    let d = det_i128(&a);
    if d == 0 {
        return Err(Error::SingularMatrix);
    }
    Ok(d.unsigned_abs() as u64)
}

/// One fundamental cell `Q_k = offset + map [0,1)^d`, half-open.
#[derive(Debug, Clone)]
pub struct Cell {
    /// `M^{-T} gamma_k / N`
    pub offset: Vec<f64>,
    /// Row-major `M^{-T} / N`
    pub map: Vec<f64>,
    /// Exact volume as the fraction 1 / `vol_denom`
    pub vol_denom: u64,
}

impl Cell {
    pub fn volume(&self) -> f64 {
        1.0 / self.vol_denom as f64
    }
}

/// Sampling matrix together with its coset data and subcube count `N`.
#[derive(Debug, Clone)]
pub struct SamplingLattice {
    pub dim: usize,
    pub mat: Vec<Vec<i64>>,
    /// `|det M|`
    pub m: usize,
    /// Coset representatives of `Z^d / M^T Z^d`, `gammas[0] = 0`
    pub gammas: Vec<Vec<i64>>,
    /// Subcube count of the ambient construction
    pub n_sub: usize,
    det: i128,
    /// Adjugate of `M^T`, so `M^{-T} = adj / det`
    adj_t: Vec<Vec<i128>>,
    /// Row-major `M^{-T}` as floats
    minv_t: Vec<f64>,
}

impl SamplingLattice {
    pub fn new(mat: Vec<Vec<i64>>, n_sub: usize) -> Result<Self> {
        let dim = mat.len();
        if dim == 0 || mat.iter().any(|r| r.len() != dim) {
            return Err(Error::ShapeMismatch(format!(
                "lattice matrix must be square, got {} rows",
                dim
            )));
        }
        if n_sub == 0 {
            return Err(Error::Validation("N must be positive".into()));
        }
        if dim > 1 && n_sub > 1 {
            return Err(Error::UnsupportedRegime(format!(
                "d = {dim}, N = {n_sub}: the diagonal subcubes do not tile the unit cube"
            )));
        }
        let mt: Vec<Vec<i128>> = (0..dim)
            .map(|i| (0..dim).map(|j| mat[j][i] as i128).collect())
            .collect();
        let det = det_i128(&mt);
        if det == 0 {
            return Err(Error::SingularMatrix);
        }
        let adj_t = adjugate_i128(&mt);
        let m = det.unsigned_abs() as usize;
        let mut minv_t = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                minv_t[i * dim + j] = adj_t[i][j] as f64 / det as f64;
            }
        }
        let gammas = coset_representatives(&mat)?;
        Ok(Self {
            dim,
            mat,
            m,
            gammas,
            n_sub,
            det,
            adj_t,
            minv_t,
        })
    }

    /// `M^T x` for a float vector.
    pub fn mul_mt(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.mat[j][i] as f64 * x[j]).sum())
            .collect()
    }

    /// `M x` for an integer vector, as floats.
    pub fn mul_m(&self, x: &[i64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.mat[i][j] as f64 * x[j] as f64)
                    .sum()
            })
            .collect()
    }

    /// `M alpha` over the integers.
    pub fn mul_m_int(&self, x: &[i64]) -> Vec<i64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.mat[i][j] * x[j]).sum())
            .collect()
    }

    /// `M^{-T} x`.
    pub fn mul_minv_t(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.minv_t[i * self.dim + j] * x[j])
                    .sum()
            })
            .collect()
    }

    /// Shift `M^{-T} gamma_k / N` of cell `k` (0-based).
    pub fn coset_shift(&self, k: usize) -> Vec<f64> {
        let g: Vec<f64> = self.gammas[k].iter().map(|&x| x as f64).collect();
        self.mul_minv_t(&g)
            .iter()
            .map(|v| v / self.n_sub as f64)
            .collect()
    }

    /// Canonical representative of the coset of `alpha`: the unique point of
    /// `alpha + M^T Z^d` inside the half-open parallelepiped `M^T [0,1)^d`.
    pub fn canonical_rep(&self, alpha: &[i64]) -> Vec<i64> {
        canonical_rep_inner(&self.adj_t, self.det, &self.mat, alpha)
    }

    /// Index `k` (0-based) with `alpha - gamma_k` in `M^T Z^d`.
    pub fn reduce_to_coset(&self, alpha: &[i64]) -> usize {
        let c = self.canonical_rep(alpha);
        self.gammas
            .iter()
            .position(|g| self.canonical_rep(g) == c)
            .expect("every integer vector reduces to one of the gammas")
    }

    /// Index of the coset of `gamma_k + gamma_l`.
    pub fn coset_add_index(&self, k: usize, l: usize) -> usize {
        let s: Vec<i64> = self.gammas[k]
            .iter()
            .zip(&self.gammas[l])
            .map(|(a, b)| a + b)
            .collect();
        self.reduce_to_coset(&s)
    }

    /// The `m` half-open cells `Q_k`.
    pub fn cells(&self) -> Vec<Cell> {
        let nf = self.n_sub as f64;
        let vol_denom = (self.m as u64) * (self.n_sub as u64).pow(self.dim as u32);
        (0..self.m)
            .map(|k| Cell {
                offset: self.coset_shift(k),
                map: self.minv_t.iter().map(|v| v / nf).collect(),
                vol_denom,
            })
            .collect()
    }

    /// Whether `y` lies in `Q_k` modulo `Z^d / N`: checks whether
    /// `N M^T y - gamma_k` lands in `[0,1)^d` modulo `M^T Z^d`.
    pub fn in_cell_mod_period(&self, k: usize, y: &[f64]) -> bool {
        let nf = self.n_sub as f64;
        let u0: Vec<f64> = self
            .mul_mt(y)
            .iter()
            .zip(&self.gammas[k])
            .map(|(v, &g)| v * nf - g as f64)
            .collect();
        // Candidate beta near M^{-T}(u0 - center); scan a small neighbourhood.
        let t = self.mul_minv_t(&u0.iter().map(|v| v - 0.5).collect::<Vec<_>>());
        let base: Vec<i64> = t.iter().map(|v| v.round() as i64).collect();
        let mut found = false;
        let mut probe = vec![0i64; self.dim];
        scan_box(self.dim, 2, &mut probe, &mut |off| {
            let beta: Vec<i64> = base.iter().zip(off).map(|(b, o)| b + o).collect();
            let mtb = self.mul_m_t_int(&beta);
            let inside = (0..self.dim).all(|i| {
                let v = u0[i] - mtb[i] as f64;
                (0.0..1.0).contains(&v)
            });
            if inside {
                found = true;
            }
        });
        found
    }

    fn mul_m_t_int(&self, x: &[i64]) -> Vec<i64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.mat[j][i] * x[j]).sum())
            .collect()
    }
}

/// Midpoint grid over the fundamental cell `M^{-T} [0,1)^d / N`,
/// parameterized by `u` in `[0,1)^d` through `x = M^{-T} u / N`.
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub dim: usize,
    pub res: u32,
    /// Row-major `M^{-T} / N`
    pub map: Vec<f64>,
    /// Exact cell volume `1 / (m N^d)`
    pub volume: f64,
}

impl CellGrid {
    pub fn new(lat: &SamplingLattice, res: u32) -> Self {
        let nf = lat.n_sub as f64;
        let volume = 1.0 / (lat.m as f64 * nf.powi(lat.dim as i32));
        Self {
            dim: lat.dim,
            res,
            map: lat.minv_t.iter().map(|v| v / nf).collect(),
            volume,
        }
    }

    pub fn len(&self) -> usize {
        (self.res as usize).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameter-space midpoint of flat index `i`.
    pub fn u_point(&self, mut flat: usize) -> Vec<f64> {
        let mut u = vec![0.0; self.dim];
        for ax in (0..self.dim).rev() {
            u[ax] = ((flat % self.res as usize) as f64 + 0.5) / self.res as f64;
            flat /= self.res as usize;
        }
        u
    }

    /// Physical point `M^{-T} u / N`.
    pub fn x_point(&self, flat: usize) -> Vec<f64> {
        let u = self.u_point(flat);
        (0..self.dim)
            .map(|i| {
                (0..self.dim)
                    .map(|j| self.map[i * self.dim + j] * u[j])
                    .sum()
            })
            .collect()
    }

    /// Quadrature weight for integrals over the cell.
    pub fn weight(&self) -> f64 {
        self.volume / self.len() as f64
    }
}

fn canonical_rep_inner(
    adj_t: &[Vec<i128>],
    det: i128,
    mat: &[Vec<i64>],
    alpha: &[i64],
) -> Vec<i64> {
    let dim = alpha.len();
    // z = floor(M^{-T} alpha) computed exactly as floor(adj_t * alpha / det)
    let z: Vec<i128> = (0..dim)
        .map(|i| {
            let num: i128 = (0..dim).map(|j| adj_t[i][j] * alpha[j] as i128).sum();
            floor_div(num, det)
        })
        .collect();
    (0..dim)
        .map(|i| {
            let mtz: i128 = (0..dim).map(|j| mat[j][i] as i128 * z[j]).sum();
            (alpha[i] as i128 - mtz) as i64
        })
        .collect()
}

/// Visits every offset vector in `[-r, r]^d`.
fn scan_box(dim: usize, r: i64, probe: &mut [i64], visit: &mut impl FnMut(&[i64])) {
    fn rec(dim: usize, axis: usize, r: i64, probe: &mut [i64], visit: &mut impl FnMut(&[i64])) {
        if axis == dim {
            visit(probe);
            return;
        }
        for v in -r..=r {
            probe[axis] = v;
            rec(dim, axis + 1, r, probe, visit);
        }
    }
    rec(dim, 0, r, probe, visit);
}

/// Sort key preferring small, non-negative, colex-early representatives.
fn rep_key(v: &[i64]) -> (i64, usize, Vec<i64>) {
    let l1: i64 = v.iter().map(|x| x.abs()).sum();
    let negs = v.iter().filter(|&&x| x < 0).count();
    let colex: Vec<i64> = v.iter().rev().copied().collect();
    (l1, negs, colex)
}

/// Ordered coset representatives of `Z^d / M^T Z^d`.
///
/// Brute force: canonicalize every integer point of a box that covers the
/// fundamental parallelepiped, group by coset, take the smallest member of
/// each group, sort lexicographically with 0 first.
pub fn coset_representatives(mat: &[Vec<i64>]) -> Result<Vec<Vec<i64>>> {
    let dim = mat.len();
    let mt: Vec<Vec<i128>> = (0..dim)
        .map(|i| (0..dim).map(|j| mat[j][i] as i128).collect())
        .collect();
    let det = det_i128(&mt);
    if det == 0 {
        return Err(Error::SingularMatrix);
    }
    let adj_t = adjugate_i128(&mt);
    let m = det.unsigned_abs() as usize;

    let norm = mat
        .iter()
        .flat_map(|r| r.iter().map(|x| x.abs()))
        .max()
        .unwrap_or(1);
    let reach = norm * dim as i64;

    let mut groups: std::collections::BTreeMap<Vec<i64>, Vec<i64>> = Default::default();
    let mut probe = vec![0i64; dim];
    scan_box(dim, reach, &mut probe, &mut |pt| {
        let canon = canonical_rep_inner(&adj_t, det, mat, pt);
        groups
            .entry(canon)
            .and_modify(|best| {
                if rep_key(pt) < rep_key(best) {
                    *best = pt.to_vec();
                }
            })
            .or_insert_with(|| pt.to_vec());
    });
    debug_assert_eq!(groups.len(), m, "canonical box scan must find all cosets");

    let mut out: Vec<Vec<i64>> = groups.into_values().collect();
    let zero = vec![0i64; dim];
    out.retain(|g| *g != zero);
    out.sort();
    out.insert(0, zero);
    if out.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "found {} coset representatives, expected {}",
            out.len(),
            m
        )));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quincunx() -> Vec<Vec<i64>> {
        vec![vec![1, 1], vec![-1, 1]]
    }

    #[test]
    fn determinant_examples() {
        assert_eq!(abs_determinant(&[vec![2]]).unwrap(), 2);
        assert_eq!(abs_determinant(&[vec![1, 0], vec![0, 1]]).unwrap(), 1);
        assert_eq!(abs_determinant(&quincunx()).unwrap(), 2);
        assert!(matches!(
            abs_determinant(&[vec![1, 1], vec![1, 1]]),
            Err(Error::SingularMatrix)
        ));
    }

    #[test]
    fn coset_examples() {
        assert_eq!(
            coset_representatives(&[vec![2]]).unwrap(),
            vec![vec![0], vec![1]]
        );
        assert_eq!(
            coset_representatives(&[vec![1, 0], vec![0, 1]]).unwrap(),
            vec![vec![0, 0]]
        );
        assert_eq!(
            coset_representatives(&quincunx()).unwrap(),
            vec![vec![0, 0], vec![1, 0]]
        );
    }

    #[test]
    fn reduce_examples() {
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        assert_eq!(lat.gammas[lat.reduce_to_coset(&[5])], vec![1]);
        let id = SamplingLattice::new(vec![vec![1, 0], vec![0, 1]], 1).unwrap();
        assert_eq!(id.reduce_to_coset(&[17, -3]), 0);
        // (1,1) = M^T (1,0) for the quincunx matrix, so it is in the zero coset
        let q = SamplingLattice::new(quincunx(), 1).unwrap();
        assert_eq!(q.reduce_to_coset(&[1, 1]), 0);
        assert_eq!(q.reduce_to_coset(&[1, 0]), 1);
    }

    #[test]
    fn cells_examples() {
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        let cells = lat.cells();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].offset, vec![0.0]);
        assert_eq!(cells[1].offset, vec![0.5]);
        assert_eq!(cells[0].map, vec![0.5]);

        let single = SamplingLattice::new(vec![vec![1]], 2).unwrap();
        let cells = single.cells();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].offset, vec![0.0]);
        assert_eq!(cells[0].map, vec![0.5]);

        let q = SamplingLattice::new(quincunx(), 1).unwrap();
        for c in q.cells() {
            assert_eq!(c.vol_denom, 2); // area 1/2 each
        }
    }

    #[test]
    fn cell_volumes_sum_exactly() {
        for (mat, n) in [
            (vec![vec![1i64]], 1usize),
            (vec![vec![2]], 1),
            (vec![vec![1]], 2),
            (vec![vec![3]], 4),
            (quincunx(), 1),
        ] {
            let lat = SamplingLattice::new(mat, n).unwrap();
            let cells = lat.cells();
            // sum of volumes = m / (m N^d) = 1 / N^d, checked on exact fractions
            let denom = cells[0].vol_denom;
            assert!(cells.iter().all(|c| c.vol_denom == denom));
            let n_pow = (lat.n_sub as u64).pow(lat.dim as u32);
            assert_eq!(cells.len() as u64 * n_pow, denom);
        }
    }

    #[test]
    fn gammas_pairwise_inequivalent() {
        for mat in [vec![vec![4]], quincunx(), vec![vec![2, 1], vec![0, 3]]] {
            let lat = SamplingLattice::new(mat, 1).unwrap();
            assert_eq!(lat.gammas[0], vec![0i64; lat.dim]);
            assert_eq!(lat.gammas.len(), lat.m);
            for k in 0..lat.m {
                for l in 0..lat.m {
                    if k != l {
                        assert_ne!(
                            lat.canonical_rep(&lat.gammas[k]),
                            lat.canonical_rep(&lat.gammas[l])
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn monte_carlo_disjoint_cover() {
        use rand::Rng;
        for (mat, n) in [
            (vec![vec![2i64]], 1usize),
            (quincunx(), 1),
            (vec![vec![3]], 2),
        ] {
            let lat = SamplingLattice::new(mat, n).unwrap();
            let mut rng = crate::exec::member_rng(42, 0);
            for _ in 0..10_000 {
                let y: Vec<f64> = (0..lat.dim)
                    .map(|_| rng.random::<f64>() / lat.n_sub as f64)
                    .collect();
                let hits = (0..lat.m)
                    .filter(|&k| lat.in_cell_mod_period(k, &y))
                    .count();
                assert_eq!(hits, 1, "point {y:?} must land in exactly one folded cell");
            }
        }
    }

    #[test]
    fn rejects_unsupported_regime() {
        let err = SamplingLattice::new(vec![vec![1, 0], vec![0, 1]], 2).unwrap_err();
        assert!(matches!(err, Error::UnsupportedRegime(_)));
    }
}
