//! The constructive side: pseudo-inverse dual rows, reconstruction kernels,
//! lattice sampling and the frame expansion.
//!
//! The dual row at a point `y` of subcube `p` is the first row of
//! `G_p^+(y) = (G_p^* G_p)^{-1} G_p^*(y)`; it satisfies
//! `d^p(y) G_p(y) = (1, 0, .., 0)`. Kernels are synthesized by feeding
//! `d_j^p(.) e_0(M^T .)` on subcube `p` through the synthesis operator,
//! which collapses to Fourier coefficients of `N^{d/2} d_j^p` against the
//! subcube exponentials. Shifted kernels are coefficient translates by
//! `M alpha`, so the expansion is assembled directly on coefficients.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::filters::{apply_to_element, FilterBank};
use crate::grid::{fourier_sums, Grid, GridFunction};
use crate::lattice::{CellGrid, SamplingLattice};
use crate::modulation::{ModulationField, SpectralBounds};
use crate::patch::{subcube_bounds, IndexBox};
use crate::sispace::{synthesize, CoefficientArray, GeneratorSet, SpaceElement};

/// Pseudo-inverses `G_p^+` over the cell grid.
#[derive(Debug, Clone)]
pub struct PinvField {
    pub cell: CellGrid,
    pub n_sys: usize,
    pub m: usize,
    /// `mats[p][flat * m * s ..]`, row-major `m x s` per point.
    mats: Vec<Vec<Complex64>>,
    /// Max over the grid of `||G^+ G - I||_max`; meaningful when not forced.
    pub left_inverse_residual: f64,
    pub forced: bool,
}

/// `G^+ = (G^* G)^{-1} G^*`; under `forced` a thresholded eigeninverse is
/// used instead so rank-deficient fields can still be pushed through.
fn pinv_matrix(g: &DMatrix<Complex64>, forced: bool, floor: f64) -> DMatrix<Complex64> {
    let h = g.adjoint() * g;
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    if forced {
        let eig = h.clone().symmetric_eigen();
        let lmax = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        let cut = floor.max(1e-14 * lmax.max(1.0));
        let m = h.nrows();
        let mut inv = DMatrix::<Complex64>::zeros(m, m);
        for i in 0..m {
            let l = eig.eigenvalues[i];
            if l > cut {
                let v = eig.eigenvectors.column(i);
                let w = Complex64::new(1.0 / l, 0.0);
                for r in 0..m {
                    for c in 0..m {
                        inv[(r, c)] += w * v[r] * v[c].conj();
                    }
                }
            }
        }
        inv * g.adjoint()
    } else {
        let inv = h
            .clone()
            .try_inverse()
            .expect("A_G floor guarantees invertibility");
        inv * g.adjoint()
    }
}

/// Builds `G_p^+` at every cell grid point.
pub fn pseudo_inverse_field(
    field: &ModulationField,
    bounds: &SpectralBounds,
    floor: f64,
    forced: bool,
) -> Result<PinvField> {
    if !forced && bounds.a_g <= floor {
        return Err(Error::NotLeftInvertible {
            a_g: bounds.a_g,
            floor,
        });
    }
    let (s, m) = (field.n_sys, field.lat.m);
    let npts = field.n_points();
    let mut mats = Vec::with_capacity(field.lat.n_sub);
    let mut residual = 0.0f64;
    for p in 0..field.lat.n_sub {
        let per_point = exec::map_indexed(npts, |flat| {
            let g = field.matrix_at(p, flat);
            let pinv = pinv_matrix(&g, forced, floor);
            let check = &pinv * &g;
            let mut res = 0.0f64;
            for r in 0..m {
                for c in 0..m {
                    let expect = if r == c {
                        Complex64::ONE
                    } else {
                        Complex64::ZERO
                    };
                    res = res.max((check[(r, c)] - expect).norm());
                }
            }
            let mut flatv = Vec::with_capacity(m * s);
            for r in 0..m {
                for c in 0..s {
                    flatv.push(pinv[(r, c)]);
                }
            }
            (flatv, res)
        });
        let mut block = Vec::with_capacity(npts * m * s);
        for (v, r) in per_point {
            residual = residual.max(r);
            block.extend(v);
        }
        mats.push(block);
    }
    if !forced && residual > 1e-8 {
        return Err(Error::NotLeftInvertible {
            a_g: bounds.a_g,
            floor: residual,
        });
    }
    Ok(PinvField {
        cell: field.cell.clone(),
        n_sys: s,
        m,
        mats,
        left_inverse_residual: residual,
        forced,
    })
}

impl PinvField {
    /// Row `r` of `G_p^+` at grid point `flat`.
    pub fn row(&self, p: usize, flat: usize, r: usize) -> Vec<Complex64> {
        let base = flat * self.m * self.n_sys + r * self.n_sys;
        self.mats[p][base..base + self.n_sys].to_vec()
    }
}

/// First rows `d^p(x)` on the cell grid, with the residual of (the defining
/// relation) `d^p G_p = e_1^T` and the largest modulus.
#[derive(Debug, Clone)]
pub struct DualField {
    pub cell: CellGrid,
    pub n_sys: usize,
    /// `rows[p][flat * s ..]`
    rows: Vec<Vec<Complex64>>,
    pub residual_max: f64,
    pub max_modulus: f64,
    pub forced: bool,
}

pub fn dual_rows(pinv: &PinvField, field: &ModulationField) -> DualField {
    let s = pinv.n_sys;
    let npts = pinv.cell.len();
    let mut rows = Vec::with_capacity(field.lat.n_sub);
    let mut residual_max = 0.0f64;
    let mut max_modulus = 0.0f64;
    for p in 0..field.lat.n_sub {
        let mut block = Vec::with_capacity(npts * s);
        for flat in 0..npts {
            let d = pinv.row(p, flat, 0);
            // residual ||d G - e_1||_inf
            let g = field.matrix_at(p, flat);
            for c in 0..pinv.m {
                let mut acc = Complex64::ZERO;
                for j in 0..s {
                    acc += d[j] * g[(j, c)];
                }
                let expect = if c == 0 {
                    Complex64::ONE
                } else {
                    Complex64::ZERO
                };
                residual_max = residual_max.max((acc - expect).norm());
            }
            for v in &d {
                max_modulus = max_modulus.max(v.norm());
            }
            block.extend(d);
        }
        rows.push(block);
    }
    DualField {
        cell: pinv.cell.clone(),
        n_sys: s,
        rows,
        residual_max,
        max_modulus,
        forced: pinv.forced,
    }
}

impl DualField {
    pub fn row_at(&self, p: usize, flat: usize) -> &[Complex64] {
        &self.rows[p][flat * self.n_sys..(flat + 1) * self.n_sys]
    }
}

/// The kernels `S_j^p`, as coefficient arrays over generator `p`.
#[derive(Debug, Clone)]
pub struct ReconstructionKernelSet {
    pub gens: Arc<GeneratorSet>,
    pub lat: SamplingLattice,
    pub n_sys: usize,
    pub bx: IndexBox,
    /// `coeffs[j * N + p][flat(alpha)]`
    pub coeffs: Vec<Vec<Complex64>>,
}

impl ReconstructionKernelSet {
    /// `S_j^p` as a standalone space element (for export and inspection).
    pub fn kernel_element(&self, j: usize, p: usize) -> SpaceElement {
        let n = self.lat.n_sub;
        let mut per_gen = vec![vec![Complex64::ZERO; self.bx.len()]; n];
        per_gen[p] = self.coeffs[j * n + p].clone();
        let coeffs = CoefficientArray {
            bx: self.bx,
            per_gen,
        };
        let (lo, hi) = crate::sispace::auto_box(&self.gens, self.bx.k);
        synthesize(&self.gens, coeffs, &lo, &hi).expect("auto box fits")
    }
}

/// Builds every `S_j^p` by solving for the dual row on the subcube grid and
/// taking Fourier coefficients of `N^{d/2} d_j^p` there.
///
/// The dual row at a subcube point is recomputed from the field source
/// (rather than interpolated off the cell grid) because moving by a coset
/// shift permutes the columns of `G_p`, which re-indexes the pseudo-inverse
/// rows.
/// Dual row (all `s` entries of the first pseudo-inverse row) at every point
/// of the subcube `p` midpoint grid. Returned as `rows[flat][j]`.
pub fn dual_rows_on_subcube(
    field: &ModulationField,
    p: usize,
    res: u32,
    floor: f64,
    forced: bool,
) -> Result<(Grid, Vec<Vec<Complex64>>)> {
    let lat = &field.lat;
    let s = field.n_sys;
    let (lo, hi) = subcube_bounds(lat.dim, lat.n_sub, p);
    let grid = Grid::new(&lo, &hi, res)?;
    let rows = exec::map_indexed(grid.len(), |flat| {
        let y = grid.point(&grid.unflatten(flat));
        let g = field.matrix_at_point(p, &y);
        let pinv = pinv_matrix(&g, forced, floor);
        (0..s).map(|j| pinv[(0, j)]).collect::<Vec<_>>()
    });
    Ok((grid, rows))
}

pub fn build_kernels(
    field: &ModulationField,
    gens: &Arc<GeneratorSet>,
    k_kernel: i64,
    res: u32,
    floor: f64,
    forced: bool,
) -> Result<ReconstructionKernelSet> {
    let lat = &field.lat;
    let s = field.n_sys;
    let n = lat.n_sub;
    let dim = lat.dim;
    let bx = IndexBox::new(dim, k_kernel);
    let mut coeffs = vec![Vec::new(); s * n];
    for p in 0..n {
        let (grid, rows) = dual_rows_on_subcube(field, p, res, floor, forced)?;
        let scale = (n as f64).powf(dim as f64 / 2.0);
        let freqs: Vec<Vec<i64>> = bx
            .iter()
            .map(|a| a.iter().map(|&v| v * n as i64).collect())
            .collect();
        for j in 0..s {
            let dual_tab = GridFunction {
                grid: grid.clone(),
                values: rows.iter().map(|r| r[j]).collect(),
                period: None,
            };
            let sums = fourier_sums(&dual_tab, &freqs);
            // c_alpha = N^{d/2} int (d e_0)(y) e^{+2 pi i N alpha y} dy
            //         = N^d int d(y) e^{...}; fourier_sums already integrates
            coeffs[j * n + p] = sums.into_iter().map(|v| v * scale * scale).collect();
        }
    }
    Ok(ReconstructionKernelSet {
        gens: Arc::clone(gens),
        lat: lat.clone(),
        n_sys: s,
        bx,
        coeffs,
    })
}

/// Samples `L_j f^{(p)}(M alpha)` for `|alpha|_inf <= k_samp`.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub n_sys: usize,
    pub n_sub: usize,
    pub bx: IndexBox,
    /// `values[(j * N + p) * bx.len() + flat(alpha)]`
    pub values: Vec<Complex64>,
}

impl SampleSet {
    pub fn get(&self, j: usize, p: usize, alpha: &[i64]) -> Complex64 {
        self.values[(j * self.n_sub + p) * self.bx.len() + self.bx.flatten(alpha)]
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Shifts the index: `out(alpha) = self(alpha + beta)` (translation of
    /// `f` by `M beta` shifts samples this way).
    pub fn shift_index(&self, beta: &[i64]) -> SampleSet {
        let mut out = self.clone();
        for j in 0..self.n_sys {
            for p in 0..self.n_sub {
                let base = (j * self.n_sub + p) * self.bx.len();
                for flat in 0..self.bx.len() {
                    let mut alpha = self.bx.unflatten(flat);
                    for (a, b) in alpha.iter_mut().zip(beta) {
                        *a += b;
                    }
                    out.values[base + flat] = if self.bx.contains(&alpha) {
                        self.values[base + self.bx.flatten(&alpha)]
                    } else {
                        Complex64::ZERO
                    };
                }
            }
        }
        out
    }

    pub fn write_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "# j,p,alpha...,re,im")?;
        for j in 0..self.n_sys {
            for p in 0..self.n_sub {
                for flat in 0..self.bx.len() {
                    let alpha = self.bx.unflatten(flat);
                    let v = self.values[(j * self.n_sub + p) * self.bx.len() + flat];
                    let a: Vec<String> = alpha.iter().map(|x| x.to_string()).collect();
                    writeln!(w, "{},{},{},{},{}", j, p, a.join(","), v.re, v.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Takes the lattice samples of the parts of `f`.
pub fn take_samples(
    f: &SpaceElement,
    bank: &FilterBank,
    lat: &SamplingLattice,
    k_samp: i64,
    res: u32,
) -> Result<SampleSet> {
    if f.gens.n_gens() != lat.n_sub {
        return Err(Error::ShapeMismatch(
            "element and lattice disagree on N".into(),
        ));
    }
    let bx = IndexBox::new(lat.dim, k_samp);
    let s = bank.n_sys();
    let n = lat.n_sub;
    let jobs: Vec<(usize, usize)> = (0..s).flat_map(|j| (0..n).map(move |p| (j, p))).collect();
    let blocks = exec::map_indexed(jobs.len(), |idx| {
        let (j, p) = jobs[idx];
        (0..bx.len())
            .map(|flat| {
                let alpha = bx.unflatten(flat);
                let t = lat.mul_m(&alpha);
                apply_to_element(bank, j, f, Some(p), &t, res)
            })
            .collect::<Vec<_>>()
    });
    Ok(SampleSet {
        n_sys: s,
        n_sub: n,
        bx,
        values: blocks.into_iter().flatten().collect(),
    })
}

/// Default `k_samp`: every lattice point whose filter window can still see
/// the support of elements with coefficients in `[-k_coeff, k_coeff]^d`.
pub fn auto_k_samp(
    lat: &SamplingLattice,
    gens: &GeneratorSet,
    bank: &FilterBank,
    k_coeff: i64,
) -> i64 {
    let reach = k_coeff as f64 + gens.support_radius() + bank.reach() + 1.0;
    let dim = lat.dim;
    // max over corners c of reach * [-1,1]^d of ||M^{-1} c||_inf
    let mut worst = 0.0f64;
    for corner in 0..(1usize << dim) {
        let c: Vec<f64> = (0..dim)
            .map(|ax| {
                if (corner >> ax) & 1 == 1 {
                    reach
                } else {
                    -reach
                }
            })
            .collect();
        // solve M a = c approximately via the float inverse of M
        let a = invert_apply(lat, &c);
        for v in a {
            worst = worst.max(v.abs());
        }
    }
    worst.ceil() as i64 + 1
}

fn invert_apply(lat: &SamplingLattice, c: &[f64]) -> Vec<f64> {
    // M^{-1} c = (M^{-T})^T c
    let d = lat.dim;
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    // minv_t is row-major M^{-T}; transpose it
                    lat_minv_t(lat, j, i) * c[j]
                })
                .sum()
        })
        .collect()
}

fn lat_minv_t(lat: &SamplingLattice, i: usize, j: usize) -> f64 {
    // reconstruct M^{-T} entries through the public API
    let mut e = vec![0.0; lat.dim];
    e[j] = 1.0;
    lat.mul_minv_t(&e)[i]
}

/// The expansion `f_hat = m sum_{j,p,alpha} L_j f^{(p)}(M alpha)
/// S_j^p(. - M alpha)`, assembled on coefficients.
pub fn reconstruct(
    samples: &SampleSet,
    kernels: &ReconstructionKernelSet,
    lat: &SamplingLattice,
) -> Result<SpaceElement> {
    if samples.n_sys != kernels.n_sys || samples.n_sub != lat.n_sub {
        return Err(Error::ShapeMismatch(
            "samples and kernels come from different scenarios".into(),
        ));
    }
    let n = lat.n_sub;
    let dim = lat.dim;
    // worst shift |M alpha|_inf over the sample box
    let mut max_shift = 0i64;
    for flat in 0..samples.bx.len() {
        let alpha = samples.bx.unflatten(flat);
        let ma = lat.mul_m_int(&alpha);
        for v in ma {
            max_shift = max_shift.max(v.abs());
        }
    }
    let k_out = max_shift + kernels.bx.k;
    let out_bx = IndexBox::new(dim, k_out);
    let mut coeffs = CoefficientArray::zeros(n, out_bx);
    let m_factor = Complex64::new(lat.m as f64, 0.0);
    for j in 0..samples.n_sys {
        for p in 0..n {
            let kc = &kernels.coeffs[j * n + p];
            for s_flat in 0..samples.bx.len() {
                let sample = samples.values[(j * n + p) * samples.bx.len() + s_flat];
                if sample == Complex64::ZERO {
                    continue;
                }
                let alpha = samples.bx.unflatten(s_flat);
                let ma = lat.mul_m_int(&alpha);
                let w = m_factor * sample;
                for k_flat in 0..kernels.bx.len() {
                    let c = kc[k_flat];
                    if c == Complex64::ZERO {
                        continue;
                    }
                    let mut target = kernels.bx.unflatten(k_flat);
                    for (t, s) in target.iter_mut().zip(&ma) {
                        *t += s;
                    }
                    // out-of-box shifts would need samples beyond k_samp anyway
                    if out_bx.contains(&target) {
                        let f = out_bx.flatten(&target);
                        coeffs.per_gen[p][f] += w * c;
                    }
                }
            }
        }
    }
    let (lo, hi) = crate::sispace::auto_box(&kernels.gens, k_out);
    synthesize(&kernels.gens, coeffs, &lo, &hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{build_symbols, FilterSystem, KernelFn};
    use crate::modulation::{spectral_bounds, FieldSource};
    use crate::sispace::{auto_box, ComponentFn, Generator};
    use approx::assert_abs_diff_eq;

    const TAU: f64 = std::f64::consts::TAU;

    fn hat_gens() -> Arc<GeneratorSet> {
        let g = Generator {
            comps: vec![ComponentFn::Spline {
                order: 2,
                shift: vec![0.0],
            }],
        };
        Arc::new(GeneratorSet::new(1, 1, vec![g], 0.05, false).unwrap())
    }

    fn classical() -> (
        SamplingLattice,
        Arc<GeneratorSet>,
        FilterBank,
        ModulationField,
    ) {
        let lat = SamplingLattice::new(vec![vec![1]], 1).unwrap();
        let gens = hat_gens();
        let bank = FilterBank::new(
            1,
            1,
            vec![FilterSystem::Point {
                component: 0,
                offset: vec![0.0],
            }],
        )
        .unwrap();
        let st = build_symbols(&bank, &gens, &lat, 3, 256, false).unwrap();
        let field = ModulationField::build(Arc::new(FieldSource::Symbols(st)), &lat, 128).unwrap();
        (lat, gens, bank, field)
    }

    fn averaging() -> (
        SamplingLattice,
        Arc<GeneratorSet>,
        FilterBank,
        ModulationField,
    ) {
        let lat = SamplingLattice::new(vec![vec![1]], 1).unwrap();
        let gens = hat_gens();
        let bank = FilterBank::new(
            1,
            1,
            vec![FilterSystem::Conv {
                kernels: vec![KernelFn::BoxCar {
                    center: vec![0.0],
                    width: 1.0,
                }],
            }],
        )
        .unwrap();
        let st = build_symbols(&bank, &gens, &lat, 3, 256, false).unwrap();
        let field = ModulationField::build(Arc::new(FieldSource::Symbols(st)), &lat, 128).unwrap();
        (lat, gens, bank, field)
    }

    #[test]
    fn pinv_scalar_cases() {
        let one = DMatrix::from_element(1, 1, Complex64::ONE);
        let p = pinv_matrix(&one, false, 1e-8);
        assert!((p[(0, 0)] - Complex64::ONE).norm() < 1e-14);
        let two = DMatrix::from_element(1, 1, Complex64::new(2.0, 0.0));
        let p = pinv_matrix(&two, false, 1e-8);
        assert!((p[(0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn pinv_orthogonal_columns() {
        // G with G^* G = 2 I: G^+ = G^* / 2
        let g = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::ONE,
                Complex64::ONE,
                Complex64::cis(0.7),
                -Complex64::cis(0.7),
            ],
        );
        let p = pinv_matrix(&g, false, 1e-8);
        let expect = g.adjoint() * Complex64::new(0.5, 0.0);
        assert!((p - expect).norm() < 1e-12);
    }

    #[test]
    fn dual_rows_classical_and_averaging() {
        let (_, _, _, field) = classical();
        let bounds = spectral_bounds(&field);
        let pinv = pseudo_inverse_field(&field, &bounds, 1e-8, false).unwrap();
        let duals = dual_rows(&pinv, &field);
        assert!(duals.residual_max < 1e-10);
        for flat in [0usize, 50] {
            assert!((duals.row_at(0, flat)[0] - Complex64::ONE).norm() < 1e-10);
        }

        let (_, _, _, field) = averaging();
        let bounds = spectral_bounds(&field);
        let pinv = pseudo_inverse_field(&field, &bounds, 1e-8, false).unwrap();
        let duals = dual_rows(&pinv, &field);
        assert!(duals.residual_max < 1e-8);
        // d = 1/g, max modulus 2 near x = 1/2
        assert!((duals.max_modulus - 2.0).abs() < 1e-3);
        for flat in [7usize, 99] {
            let x = duals.cell.x_point(flat)[0];
            let g = 0.75 + 0.25 * (TAU * x).cos();
            assert!((duals.row_at(0, flat)[0] - Complex64::new(1.0 / g, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn unimodular_symbol_dual_is_reciprocal() {
        // g(x) = exp(-2 pi i x): d(x) = exp(2 pi i x)
        let lat = SamplingLattice::new(vec![vec![1]], 1).unwrap();
        let g = Generator {
            comps: vec![ComponentFn::Spline {
                order: 2,
                shift: vec![1.0],
            }],
        };
        let gens = Arc::new(GeneratorSet::new(1, 1, vec![g], 0.05, false).unwrap());
        let bank = FilterBank::new(
            1,
            1,
            vec![FilterSystem::Point {
                component: 0,
                offset: vec![0.0],
            }],
        )
        .unwrap();
        let st = build_symbols(&bank, &gens, &lat, 3, 256, false).unwrap();
        let field = ModulationField::build(Arc::new(FieldSource::Symbols(st)), &lat, 128).unwrap();
        let bounds = spectral_bounds(&field);
        let pinv = pseudo_inverse_field(&field, &bounds, 1e-8, false).unwrap();
        let duals = dual_rows(&pinv, &field);
        for flat in [3usize, 64, 120] {
            let x = duals.cell.x_point(flat)[0];
            assert!((duals.row_at(0, flat)[0] - Complex64::cis(TAU * x)).norm() < 1e-10);
        }
        // kernel: single coefficient at alpha = -1, S = phi(. + 1)
        let kernels = build_kernels(&field, &gens, 8, 256, 1e-8, false).unwrap();
        for alpha in kernels.bx.iter() {
            let c = kernels.coeffs[0][kernels.bx.flatten(&alpha)];
            let expect = if alpha[0] == -1 { 1.0 } else { 0.0 };
            assert!((c - expect).norm() < 1e-10, "alpha={alpha:?} c={c}");
        }
    }

    #[test]
    fn not_left_invertible_detected() {
        // s=1, m=2 rank-deficient field
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        let gens = hat_gens();
        let bank = FilterBank::new(
            1,
            1,
            vec![FilterSystem::Point {
                component: 0,
                offset: vec![0.0],
            }],
        )
        .unwrap();
        let st = build_symbols(&bank, &gens, &lat, 3, 256, false).unwrap();
        let field = ModulationField::build(Arc::new(FieldSource::Symbols(st)), &lat, 64).unwrap();
        let bounds = spectral_bounds(&field);
        assert!(matches!(
            pseudo_inverse_field(&field, &bounds, 1e-8, false),
            Err(Error::NotLeftInvertible { .. })
        ));
        // forced mode still produces something, with honest residual
        let pinv = pseudo_inverse_field(&field, &bounds, 1e-8, true).unwrap();
        assert!(pinv.left_inverse_residual > 0.4);
    }

    #[test]
    fn classical_kernel_is_generator() {
        let (_, gens, _, field) = classical();
        let kernels = build_kernels(&field, &gens, 8, 256, 1e-8, false).unwrap();
        for alpha in kernels.bx.iter() {
            let c = kernels.coeffs[0][kernels.bx.flatten(&alpha)];
            let expect = if alpha[0] == 0 { 1.0 } else { 0.0 };
            assert!((c - expect).norm() < 1e-10);
        }
        let s = kernels.kernel_element(0, 0);
        assert_abs_diff_eq!(s.eval(0, &[0.0]).re, 1.0, epsilon = 1e-10);
        assert!(s.eval(0, &[1.0]).norm() < 1e-10);
    }

    #[test]
    fn classical_reconstruction_exact() {
        let (lat, gens, bank, field) = classical();
        let kernels = build_kernels(&field, &gens, 8, 256, 1e-8, false).unwrap();
        let mut rng = exec::member_rng(7, 0);
        let bx = IndexBox::new(1, 6);
        let coeffs = CoefficientArray::random_unit(1, bx, &mut rng);
        let (lo, hi) = auto_box(&gens, 6);
        let f = synthesize(&gens, coeffs.clone(), &lo, &hi).unwrap();
        let samples = take_samples(&f, &bank, &lat, 10, 256).unwrap();
        // hat interpolation: f(alpha) = a_alpha
        for alpha in bx.iter() {
            assert!((samples.get(0, 0, &alpha) - coeffs.get(0, &alpha)).norm() < 1e-12);
        }
        let f_hat = reconstruct(&samples, &kernels, &lat).unwrap();
        // coefficients agree on the coefficient box
        for alpha in bx.iter() {
            assert!(
                (f_hat.coeffs.get(0, &alpha) - coeffs.get(0, &alpha)).norm() < 1e-10,
                "alpha={alpha:?}"
            );
        }
        // interior values agree
        for t in [-3.3, -0.2, 0.0, 1.7, 4.1] {
            assert!((f_hat.eval(0, &[t]) - f.eval(0, &[t])).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_samples_zero_reconstruction() {
        let (lat, gens, _, field) = classical();
        let kernels = build_kernels(&field, &gens, 4, 128, 1e-8, false).unwrap();
        let samples = SampleSet {
            n_sys: 1,
            n_sub: 1,
            bx: IndexBox::new(1, 3),
            values: vec![Complex64::ZERO; IndexBox::new(1, 3).len()],
        };
        let f_hat = reconstruct(&samples, &kernels, &lat).unwrap();
        assert!(f_hat.coeffs.norm_sq() < 1e-30);
    }

    #[test]
    fn oversampled_reconstruction() {
        // d=1, M=[2], s=2: samples f(2a) and f(2a+1) reconstruct exactly
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        let gens = hat_gens();
        let bank = FilterBank::new(
            1,
            1,
            vec![
                FilterSystem::Point {
                    component: 0,
                    offset: vec![0.0],
                },
                FilterSystem::Point {
                    component: 0,
                    offset: vec![-1.0],
                },
            ],
        )
        .unwrap();
        let st = build_symbols(&bank, &gens, &lat, 4, 256, false).unwrap();
        let field = ModulationField::build(Arc::new(FieldSource::Symbols(st)), &lat, 128).unwrap();
        let kernels = build_kernels(&field, &gens, 8, 256, 1e-8, false).unwrap();
        let mut rng = exec::member_rng(11, 3);
        let bx = IndexBox::new(1, 6);
        let coeffs = CoefficientArray::random_unit(1, bx, &mut rng);
        let (lo, hi) = auto_box(&gens, 6);
        let f = synthesize(&gens, coeffs.clone(), &lo, &hi).unwrap();
        let samples = take_samples(&f, &bank, &lat, 6, 256).unwrap();
        let f_hat = reconstruct(&samples, &kernels, &lat).unwrap();
        let lo_i = [-5.0];
        let hi_i = [5.0];
        let mut num = 0.0;
        let mut den = 0.0;
        let probe = Grid::new(&lo_i, &hi_i, 64).unwrap();
        for flat in 0..probe.len() {
            let t = probe.point(&probe.unflatten(flat));
            num += (f_hat.eval(0, &t) - f.eval(0, &t)).norm_sqr();
            den += f.eval(0, &t).norm_sqr();
        }
        assert!((num / den).sqrt() < 1e-3, "rel err {}", (num / den).sqrt());
    }

    #[test]
    fn translation_covariance() {
        let (lat, gens, bank, field) = classical();
        let kernels = build_kernels(&field, &gens, 8, 256, 1e-8, false).unwrap();
        let bx = IndexBox::new(1, 4);
        let mut rng = exec::member_rng(5, 1);
        let coeffs = CoefficientArray::random_unit(1, bx, &mut rng);
        let (lo, hi) = auto_box(&gens, 8);
        let f = synthesize(&gens, coeffs.clone(), &lo, &hi).unwrap();
        // shifted element: coefficients moved by M beta with beta = 2
        let beta = 2i64;
        let mut shifted = CoefficientArray::zeros(1, IndexBox::new(1, 8));
        for alpha in bx.iter() {
            shifted.set(0, &[alpha[0] + beta], coeffs.get(0, &alpha));
        }
        let f_shift = synthesize(&gens, shifted, &lo, &hi).unwrap();
        let s_plain = take_samples(&f, &bank, &lat, 12, 256).unwrap();
        let s_shift = take_samples(&f_shift, &bank, &lat, 12, 256).unwrap();
        // index shift matches
        for alpha in IndexBox::new(1, 6).iter() {
            let a = s_shift.get(0, 0, &[alpha[0] + beta]);
            let b = s_plain.get(0, 0, &alpha);
            assert!((a - b).norm() < 1e-12);
        }
        // index-shift helper folds the shifted set back onto the plain one
        let folded = s_shift.shift_index(&[beta]);
        for alpha in IndexBox::new(1, 6).iter() {
            assert!((folded.get(0, 0, &alpha) - s_plain.get(0, 0, &alpha)).norm() < 1e-12);
        }
        let r_plain = reconstruct(&s_plain, &kernels, &lat).unwrap();
        let r_shift = reconstruct(&s_shift, &kernels, &lat).unwrap();
        for t in [-2.4, 0.3, 1.9] {
            let a = r_shift.eval(0, &[t + beta as f64]);
            let b = r_plain.eval(0, &[t]);
            assert!((a - b).norm() < 1e-10);
        }
    }
}
