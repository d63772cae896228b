//! Modulation matrices `G_p(x)`, their spectral bounds and the induced
//! classification of the system (complete / Bessel / frame / Riesz).
//!
//! For each subcube `p`, `G_p(x)` is the `s x m` matrix with entry `(j, k)`
//! equal to `(g_j chi_p)(x + M^{-T} gamma_k / N)` under the `Z^d/N`-periodic
//! extension, tabulated over a grid of the fundamental cell. The pointwise
//! eigenvalues of `G_p^* G_p` drive everything downstream: their grid
//! extrema approximate the essential bounds `A_G`, `B_G`, and the optimal
//! Bessel / frame bounds are `B_G / m` and `(A_G / m, B_G / m)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec;
use crate::filters::SymbolTable;
use crate::grid::GridFunction;
use crate::lattice::{CellGrid, SamplingLattice};
use crate::patch::subcube_bounds;

/// Where the symbols `g_j` come from.
#[derive(Debug, Clone)]
pub enum FieldSource {
    /// Filter symbols built from generator samples; `1/N`-periodic exactly.
    Symbols(SymbolTable),
    /// User-supplied `g_j` on the unit cube, cut by `chi_p` and folded.
    Functions(Vec<GridFunction>),
}

impl FieldSource {
    pub fn n_sys(&self) -> usize {
        match self {
            FieldSource::Symbols(st) => st.n_sys,
            FieldSource::Functions(gs) => gs.len(),
        }
    }

    /// `(g_j chi_p)` at `x` under the periodic extension.
    pub fn eval(&self, j: usize, p: usize, n_sub: usize, x: &[f64]) -> Complex64 {
        match self {
            FieldSource::Symbols(st) => st.eval(j, p, x),
            FieldSource::Functions(gs) => {
                // fold x into the subcube modulo 1/N, where chi_p = 1
                let (lo, _) = subcube_bounds(x.len(), n_sub, p);
                let period = 1.0 / n_sub as f64;
                let y: Vec<f64> = x
                    .iter()
                    .zip(&lo)
                    .map(|(v, l)| l + (v - l).rem_euclid(period))
                    .collect();
                gs[j].eval(&y)
            }
        }
    }
}

/// The tabulated matrices `G_p(x)` over the fundamental-cell grid.
#[derive(Debug, Clone)]
pub struct ModulationField {
    pub lat: SamplingLattice,
    pub cell: CellGrid,
    pub n_sys: usize,
    pub source: Arc<FieldSource>,
    /// `mats[p][flat * s * m ..]`, row-major `s x m` per grid point.
    mats: Vec<Vec<Complex64>>,
}

impl ModulationField {
    /// Tabulates all pieces `p = 1..N` at `cell_res` points per parameter axis.
    pub fn build(source: Arc<FieldSource>, lat: &SamplingLattice, cell_res: u32) -> Result<Self> {
        if lat.dim > 1 && lat.n_sub > 1 {
            return Err(Error::UnsupportedRegime(format!(
                "d = {}, N = {}",
                lat.dim, lat.n_sub
            )));
        }
        let cell = CellGrid::new(lat, cell_res);
        let s = source.n_sys();
        let m = lat.m;
        let shifts: Vec<Vec<f64>> = (0..m).map(|k| lat.coset_shift(k)).collect();
        let mats = (0..lat.n_sub)
            .map(|p| {
                let flat_mats = exec::map_indexed(cell.len(), |flat| {
                    let x = cell.x_point(flat);
                    let mut block = vec![Complex64::ZERO; s * m];
                    for (k, shift) in shifts.iter().enumerate() {
                        let y: Vec<f64> = x.iter().zip(shift).map(|(a, b)| a + b).collect();
                        for j in 0..s {
                            block[j * m + k] = source.eval(j, p, lat.n_sub, &y);
                        }
                    }
                    block
                });
                flat_mats.into_iter().flatten().collect()
            })
            .collect();
        Ok(Self {
            lat: lat.clone(),
            cell,
            n_sys: s,
            source,
            mats,
        })
    }

    pub fn n_points(&self) -> usize {
        self.cell.len()
    }

    /// `G_p` at grid point `flat` as a dense matrix.
    pub fn matrix_at(&self, p: usize, flat: usize) -> DMatrix<Complex64> {
        let (s, m) = (self.n_sys, self.lat.m);
        DMatrix::from_fn(s, m, |r, c| self.mats[p][flat * s * m + r * m + c])
    }

    /// `G_p(y)` at an arbitrary point, straight from the source symbols.
    pub fn matrix_at_point(&self, p: usize, y: &[f64]) -> DMatrix<Complex64> {
        let (s, m) = (self.n_sys, self.lat.m);
        DMatrix::from_fn(s, m, |j, k| {
            let shift = self.lat.coset_shift(k);
            let z: Vec<f64> = y.iter().zip(&shift).map(|(a, b)| a + b).collect();
            self.source.eval(j, p, self.lat.n_sub, &z)
        })
    }

    /// `G_p(x_flat) v` for a length-`m` vector.
    pub fn apply_at(&self, p: usize, flat: usize, v: &[Complex64]) -> Vec<Complex64> {
        let (s, m) = (self.n_sys, self.lat.m);
        let base = flat * s * m;
        (0..s)
            .map(|j| (0..m).map(|k| self.mats[p][base + j * m + k] * v[k]).sum())
            .collect()
    }

    /// Eigen-decomposition of `G_p^* G_p` at one grid point.
    pub fn gram_eigen_at(&self, p: usize, flat: usize) -> (DVector<f64>, DMatrix<Complex64>) {
        let g = self.matrix_at(p, flat);
        let h = hermitianized_gram(&g);
        let eig = h.symmetric_eigen();
        (eig.eigenvalues, eig.eigenvectors)
    }
}

fn hermitianized_gram(g: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let h = g.adjoint() * g;
    (&h + h.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Min/max eigenvalues of `G^* G` without forming eigenvectors.
fn gram_extrema(g: &DMatrix<Complex64>) -> (f64, f64) {
    let m = g.ncols();
    if m == 1 {
        let v: f64 = (0..g.nrows()).map(|r| g[(r, 0)].norm_sqr()).sum();
        return (v, v);
    }
    let h = hermitianized_gram(g);
    let eig = h.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l);
        hi = hi.max(l);
    }
    (lo.max(0.0), hi)
}

/// Grid approximations of `A_G`, `B_G` with argmin/argmax records.
#[derive(Debug, Clone)]
pub struct SpectralBounds {
    pub a_g: f64,
    pub b_g: f64,
    /// `(p, flat index, x)` achieving the min of `lambda_min`
    pub argmin: (usize, usize, Vec<f64>),
    pub argmax: (usize, usize, Vec<f64>),
    /// Per-`p` `(min lambda_min, max lambda_max)`
    pub per_p: Vec<(f64, f64)>,
}

/// Pointwise Hermitian eigenbounds of `G_p^* G_p`, reduced sequentially so
/// the result does not depend on the parallel schedule.
pub fn spectral_bounds(field: &ModulationField) -> SpectralBounds {
    let npts = field.n_points();
    let mut a_g = f64::INFINITY;
    let mut b_g = f64::NEG_INFINITY;
    let mut argmin = (0, 0, vec![]);
    let mut argmax = (0, 0, vec![]);
    let mut per_p = Vec::with_capacity(field.lat.n_sub);
    for p in 0..field.lat.n_sub {
        let extrema = exec::map_indexed(npts, |flat| {
            let g = field.matrix_at(p, flat);
            gram_extrema(&g)
        });
        let mut p_lo = f64::INFINITY;
        let mut p_hi = f64::NEG_INFINITY;
        for (flat, &(lo, hi)) in extrema.iter().enumerate() {
            p_lo = p_lo.min(lo);
            p_hi = p_hi.max(hi);
            if lo < a_g {
                a_g = lo;
                argmin = (p, flat, field.cell.x_point(flat));
            }
            if hi > b_g {
                b_g = hi;
                argmax = (p, flat, field.cell.x_point(flat));
            }
        }
        per_p.push((p_lo, p_hi));
    }
    SpectralBounds {
        a_g,
        b_g,
        argmin,
        argmax,
        per_p,
    }
}

/// Doubling refinement: recompute at `2 x cell_res` and report the relative
/// change of both bounds. `accepted` when the change stays under 1%.
#[derive(Debug, Clone)]
pub struct RefinedBounds {
    pub coarse: SpectralBounds,
    pub fine_a_g: f64,
    pub fine_b_g: f64,
    pub rel_change: f64,
    pub accepted: bool,
}

pub fn spectral_bounds_refined(
    source: &Arc<FieldSource>,
    lat: &SamplingLattice,
    cell_res: u32,
) -> Result<RefinedBounds> {
    let coarse_field = ModulationField::build(Arc::clone(source), lat, cell_res)?;
    let coarse = spectral_bounds(&coarse_field);
    let fine_field = ModulationField::build(Arc::clone(source), lat, cell_res * 2)?;
    let fine = spectral_bounds(&fine_field);
    let scale = fine.b_g.abs().max(1e-300);
    let rel_change = ((fine.a_g - coarse.a_g)
        .abs()
        .max((fine.b_g - coarse.b_g).abs()))
        / scale;
    Ok(RefinedBounds {
        coarse,
        fine_a_g: fine.a_g,
        fine_b_g: fine.b_g,
        rel_change,
        accepted: rel_change < 0.01,
    })
}

/// Numerical-rank verdicts per subcube.
#[derive(Debug, Clone)]
pub struct Completeness {
    pub per_p: Vec<bool>,
    pub all: bool,
    /// Smallest `sigma_min / sigma_max` seen over the grid.
    pub worst_sigma_ratio: f64,
}

/// Full rank `m` at every grid point: `sigma_min > rank_tol * sigma_max`.
pub fn completeness_test(field: &ModulationField, rank_tol: f64) -> Completeness {
    let npts = field.n_points();
    let mut per_p = Vec::with_capacity(field.lat.n_sub);
    let mut worst = f64::INFINITY;
    for p in 0..field.lat.n_sub {
        let ratios = exec::map_indexed(npts, |flat| {
            let g = field.matrix_at(p, flat);
            if g.nrows() < g.ncols() {
                return 0.0;
            }
            let (lo, hi) = gram_extrema(&g);
            if hi <= 0.0 {
                0.0
            } else {
                (lo / hi).max(0.0).sqrt()
            }
        });
        let p_worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        worst = worst.min(p_worst);
        per_p.push(p_worst > rank_tol);
    }
    Completeness {
        all: per_p.iter().all(|&b| b),
        per_p,
        worst_sigma_ratio: worst,
    }
}

/// Classification verdicts with the optimal bounds.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SystemClassification {
    pub complete: bool,
    pub bessel: bool,
    /// Optimal Bessel bound `B_G / m`
    pub bessel_bound: f64,
    pub frame: bool,
    /// Optimal frame bounds `(A_G / m, B_G / m)` when `frame`
    pub frame_bounds: Option<(f64, f64)>,
    pub riesz: bool,
    pub s: usize,
    pub m: usize,
}

pub fn classify(
    bounds: &SpectralBounds,
    s: usize,
    m: usize,
    complete: &Completeness,
    blowup_cap: f64,
    frame_floor: f64,
) -> SystemClassification {
    let bessel = bounds.b_g.is_finite() && bounds.b_g < blowup_cap;
    let frame = bessel && bounds.a_g > frame_floor * bounds.b_g.max(1.0);
    let riesz = frame && s == m;
    let out = SystemClassification {
        complete: complete.all,
        bessel,
        bessel_bound: bounds.b_g / m as f64,
        frame,
        frame_bounds: frame.then_some((bounds.a_g / m as f64, bounds.b_g / m as f64)),
        riesz,
        s,
        m,
    };
    debug_assert!(!out.riesz || (out.frame && s == m));
    debug_assert!(!out.frame || out.bessel);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::{build_symbols, FilterBank, FilterSystem, KernelFn};
    use crate::sispace::{ComponentFn, Generator, GeneratorSet};
    use approx::assert_abs_diff_eq;

    const TAU: f64 = std::f64::consts::TAU;

    fn hat_gens() -> GeneratorSet {
        let g = Generator {
            comps: vec![ComponentFn::Spline {
                order: 2,
                shift: vec![0.0],
            }],
        };
        GeneratorSet::new(1, 1, vec![g], 0.05, false).unwrap()
    }

    fn point_system(offset: f64) -> FilterSystem {
        FilterSystem::Point {
            component: 0,
            offset: vec![offset],
        }
    }

    fn symbols_for(lat: &SamplingLattice, systems: Vec<FilterSystem>) -> Arc<FieldSource> {
        let gens = hat_gens();
        let bank = FilterBank::new(1, 1, systems).unwrap();
        let st = build_symbols(&bank, &gens, lat, 3, 256, false).unwrap();
        Arc::new(FieldSource::Symbols(st))
    }

    #[test]
    fn scalar_identity_field() {
        let lat = SamplingLattice::new(vec![vec![1]], 1).unwrap();
        let src = symbols_for(&lat, vec![point_system(0.0)]);
        let field = ModulationField::build(src, &lat, 64).unwrap();
        for flat in [0usize, 17, 63] {
            let g = field.matrix_at(0, flat);
            assert_eq!(g.shape(), (1, 1));
            assert!((g[(0, 0)] - Complex64::ONE).norm() < 1e-12);
        }
        let b = spectral_bounds(&field);
        assert_abs_diff_eq!(b.a_g, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.b_g, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_one_row_field() {
        // d=1, M=[2], s=1, g(x) = exp(-2 pi i x) from a hat shifted to 1:
        // row (e^{-2 pi i x}, -e^{-2 pi i x})
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        let g = Generator {
            comps: vec![ComponentFn::Spline {
                order: 2,
                shift: vec![1.0],
            }],
        };
        let gens = GeneratorSet::new(1, 1, vec![g], 0.05, false).unwrap();
        let bank = FilterBank::new(1, 1, vec![point_system(0.0)]).unwrap();
        let st = build_symbols(&bank, &gens, &lat, 3, 256, false).unwrap();
        let field = ModulationField::build(Arc::new(FieldSource::Symbols(st)), &lat, 128).unwrap();
        for flat in [0usize, 40, 100] {
            let x = field.cell.x_point(flat)[0];
            let g = field.matrix_at(0, flat);
            let e = Complex64::cis(-TAU * x);
            assert!((g[(0, 0)] - e).norm() < 1e-12);
            assert!((g[(0, 1)] + e).norm() < 1e-12);
        }
        let b = spectral_bounds(&field);
        assert!(b.a_g.abs() < 1e-12);
        assert_abs_diff_eq!(b.b_g, 2.0, epsilon = 1e-9);
        let c = completeness_test(&field, 1e-8);
        assert!(!c.all);
        let cls = classify(&b, 1, 2, &c, 1e12, 1e-8);
        assert!(cls.bessel && !cls.frame && !cls.riesz && !cls.complete);
        assert_abs_diff_eq!(cls.bessel_bound, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn unitary_column_field() {
        // s=2, m=2, point sampling at 0 and at -1 on the hat space with M=[2]:
        // G^* G = 2 I so A_G = B_G = 2 = m
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        let src = symbols_for(&lat, vec![point_system(0.0), point_system(-1.0)]);
        let field = ModulationField::build(src, &lat, 128).unwrap();
        let b = spectral_bounds(&field);
        assert_abs_diff_eq!(b.a_g, 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.b_g, 2.0, epsilon = 1e-9);
        let c = completeness_test(&field, 1e-8);
        assert!(c.all);
        let cls = classify(&b, 2, 2, &c, 1e12, 1e-8);
        assert!(cls.frame && cls.riesz);
        let (fa, fb) = cls.frame_bounds.unwrap();
        assert_abs_diff_eq!(fa, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fb, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn averaging_symbol_bounds() {
        // |g|^2 has range [1/4, 1]
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
        let src = Arc::new(FieldSource::Symbols(st));
        let refined = spectral_bounds_refined(&src, &lat, 128).unwrap();
        assert!(refined.accepted, "rel change {}", refined.rel_change);
        assert!((refined.coarse.a_g - 0.25).abs() < 1e-3);
        assert!((refined.coarse.b_g - 1.0).abs() < 1e-3);
        let field = ModulationField::build(src, &lat, 128).unwrap();
        let c = completeness_test(&field, 1e-8);
        assert!(c.all); // |g| >= 1/2 > 0 everywhere
        let cls = classify(&refined.coarse, 1, 1, &c, 1e12, 1e-8);
        assert!(cls.frame && cls.riesz);
    }

    #[test]
    fn column_permutation_covariance() {
        // permuting the gamma ordering permutes columns and leaves the
        // spectral data unchanged
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        let mut lat_perm = lat.clone();
        lat_perm.gammas.swap(0, 1);
        let src = symbols_for(&lat, vec![point_system(0.0), point_system(-1.0)]);
        let f1 = ModulationField::build(Arc::clone(&src), &lat, 64).unwrap();
        let f2 = ModulationField::build(src, &lat_perm, 64).unwrap();
        let (b1, b2) = (spectral_bounds(&f1), spectral_bounds(&f2));
        assert_abs_diff_eq!(b1.a_g, b2.a_g, epsilon = 1e-10);
        assert_abs_diff_eq!(b1.b_g, b2.b_g, epsilon = 1e-10);
        let (c1, c2) = (completeness_test(&f1, 1e-8), completeness_test(&f2, 1e-8));
        assert_eq!(c1.all, c2.all);
        // and the columns really are permuted
        for flat in [3usize, 31] {
            let g1 = f1.matrix_at(0, flat);
            let g2 = f2.matrix_at(0, flat);
            assert!((g1[(0, 0)] - g2[(0, 1)]).norm() < 1e-12);
            assert!((g1[(0, 1)] - g2[(0, 0)]).norm() < 1e-12);
        }
    }

    #[test]
    fn user_function_source_matches_symbol_source() {
        // the two constructors of the field agree when fed the same symbol
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        let gens = hat_gens();
        let bank = FilterBank::new(1, 1, vec![point_system(0.0)]).unwrap();
        let st = build_symbols(&bank, &gens, &lat, 3, 256, false).unwrap();
        let table = st.tables[0].clone();
        let sym_field =
            ModulationField::build(Arc::new(FieldSource::Symbols(st)), &lat, 64).unwrap();
        let fun_field =
            ModulationField::build(Arc::new(FieldSource::Functions(vec![table])), &lat, 64)
                .unwrap();
        for flat in 0..sym_field.n_points() {
            let a = sym_field.matrix_at(0, flat);
            let b = fun_field.matrix_at(0, flat);
            assert!((a[(0, 0)] - b[(0, 0)]).norm() < 1e-9);
            assert!((a[(0, 1)] - b[(0, 1)]).norm() < 1e-9);
        }
    }

    #[test]
    fn entries_match_direct_coefficient_sums() {
        // s=2, M=[2]: point sampling at 0 and at 1/2 on the hat space.
        // The second symbol is 1/2 + exp(-2 pi i x)/2, so G is not unitary:
        // lambda = (3 +- sqrt(5))/2 pointwise.
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        let src = symbols_for(&lat, vec![point_system(0.0), point_system(0.5)]);
        let field = ModulationField::build(src, &lat, 128).unwrap();
        // direct evaluation of the coefficient sums at the shifted arguments
        let hat_samples = |tau: f64| -> Vec<(i64, f64)> {
            (-2..=2)
                .map(|a| (a, crate::sispace::bspline(2, a as f64 - tau)))
                .filter(|(_, v)| *v != 0.0)
                .collect()
        };
        for flat in [0usize, 33, 90] {
            let x = field.cell.x_point(flat)[0];
            let g = field.matrix_at(0, flat);
            for (j, tau) in [(0usize, 0.0), (1, 0.5)] {
                for (k, shift) in [(0usize, 0.0), (1, 0.5)] {
                    let expect: Complex64 = hat_samples(tau)
                        .iter()
                        .map(|(a, v)| v * Complex64::cis(-TAU * *a as f64 * (x + shift)))
                        .sum();
                    assert!((g[(j, k)] - expect).norm() < 1e-12, "j={j} k={k} x={x}");
                }
            }
        }
        let b = spectral_bounds(&field);
        let sqrt5 = 5.0f64.sqrt();
        assert_abs_diff_eq!(b.a_g, (3.0 - sqrt5) / 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(b.b_g, (3.0 + sqrt5) / 2.0, epsilon = 1e-9);
    }
}
