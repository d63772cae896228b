//! LTI sampling systems, their action on space elements, and the periodic
//! filter symbols whose coefficients are the filtered generator samples.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::lattice::SamplingLattice;
use crate::patch::{subcube_bounds, IndexBox};
use crate::sispace::{GeneratorSet, SpaceElement};

const TAU: f64 = std::f64::consts::TAU;

/// Convolution kernel for one component.
#[derive(Debug, Clone)]
pub enum KernelFn {
    /// Indicator of `[center - width/2, center + width/2)` scaled by 1.
    BoxCar {
        center: Vec<f64>,
        width: f64,
    },
    /// Tabulated kernel, multilinear interpolation, zero outside.
    Tabulated(GridFunction),
    Zero,
}

impl KernelFn {
    pub fn eval(&self, y: &[f64]) -> Complex64 {
        match self {
            KernelFn::BoxCar { center, width } => {
                let h = width / 2.0;
                let inside = y.iter().zip(center).all(|(v, c)| *v >= c - h && *v < c + h);
                if inside {
                    Complex64::ONE
                } else {
                    Complex64::ZERO
                }
            }
            KernelFn::Tabulated(gf) => gf.eval(y),
            KernelFn::Zero => Complex64::ZERO,
        }
    }

    /// `[lo, hi]` box containing the support.
    pub fn support(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            KernelFn::BoxCar { center, width } => {
                let h = width / 2.0;
                (
                    center.iter().map(|c| c - h).collect(),
                    center.iter().map(|c| c + h).collect(),
                )
            }
            KernelFn::Tabulated(gf) => (gf.grid.lo.clone(), gf.grid.hi()),
            KernelFn::Zero => (vec![0.0; dim], vec![0.0; dim]),
        }
    }

    pub fn reach(&self, dim: usize) -> f64 {
        let (lo, hi) = self.support(dim);
        lo.iter()
            .zip(&hi)
            .map(|(a, b)| a.abs().max(b.abs()))
            .fold(0.0, f64::max)
    }
}

/// One sampling system `L_j`.
#[derive(Debug, Clone)]
pub enum FilterSystem {
    /// Ideal sampling `L_j f = f_q(t - tau)`.
    Point { component: usize, offset: Vec<f64> },
    /// `L_j f = sum_q int f_q(x) p_q(t - x) dx`, one kernel per component.
    Conv { kernels: Vec<KernelFn> },
}

impl FilterSystem {
    pub fn reach(&self, dim: usize) -> f64 {
        match self {
            FilterSystem::Point { offset, .. } => {
                offset.iter().map(|v| v.abs()).fold(0.0, f64::max)
            }
            FilterSystem::Conv { kernels } => {
                kernels.iter().map(|k| k.reach(dim)).fold(0.0, f64::max)
            }
        }
    }
}

/// The bank `{L_1 .. L_s}`.
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub dim: usize,
    pub n_comp: usize,
    pub systems: Vec<FilterSystem>,
}

impl FilterBank {
    pub fn new(dim: usize, n_comp: usize, systems: Vec<FilterSystem>) -> Result<Self> {
        if systems.is_empty() {
            return Err(Error::Validation(
                "filter bank needs at least one system".into(),
            ));
        }
        for s in &systems {
            match s {
                FilterSystem::Point { component, offset } => {
                    if *component >= n_comp || offset.len() != dim {
                        return Err(Error::ShapeMismatch(
                            "point filter component/offset out of range".into(),
                        ));
                    }
                }
                FilterSystem::Conv { kernels } => {
                    if kernels.len() != n_comp {
                        return Err(Error::ShapeMismatch(
                            "convolution filter needs one kernel per component".into(),
                        ));
                    }
                }
            }
        }
        Ok(Self {
            dim,
            n_comp,
            systems,
        })
    }

    pub fn n_sys(&self) -> usize {
        self.systems.len()
    }

    pub fn reach(&self) -> f64 {
        self.systems
            .iter()
            .map(|s| s.reach(self.dim))
            .fold(0.0, f64::max)
    }

    /// True if some system is an ideal point evaluation (excluded under the
    /// strict integrable-kernel mode).
    pub fn has_point_eval(&self) -> bool {
        self.systems
            .iter()
            .any(|s| matches!(s, FilterSystem::Point { .. }))
    }
}

/// Closure-style target for a filter application.
enum Target<'a> {
    Element {
        f: &'a SpaceElement,
        part: Option<usize>,
    },
    Grid(&'a [GridFunction]),
}

impl Target<'_> {
    fn eval(&self, q: usize, x: &[f64]) -> Complex64 {
        match self {
            Target::Element { f, part } => match part {
                Some(p) => f.eval_part(*p, q, x),
                None => f.eval(q, x),
            },
            Target::Grid(gfs) => gfs[q].eval(x),
        }
    }
}

fn apply_inner(bank: &FilterBank, j: usize, target: &Target, t: &[f64], res: u32) -> Complex64 {
    match &bank.systems[j] {
        FilterSystem::Point { component, offset } => {
            let y: Vec<f64> = t.iter().zip(offset).map(|(a, b)| a - b).collect();
            target.eval(*component, &y)
        }
        FilterSystem::Conv { kernels } => {
            let mut acc = Complex64::ZERO;
            for (q, ker) in kernels.iter().enumerate() {
                if matches!(ker, KernelFn::Zero) {
                    continue;
                }
                // integrate over t - supp(p_q)
                let (klo, khi) = ker.support(bank.dim);
                let lo: Vec<f64> = t.iter().zip(&khi).map(|(a, b)| a - b).collect();
                let hi: Vec<f64> = t.iter().zip(&klo).map(|(a, b)| a - b).collect();
                let grid = match Grid::new(&lo, &hi, res) {
                    Ok(g) => g,
                    Err(_) => continue,
                };
                let mut part = Complex64::ZERO;
                for flat in 0..grid.len() {
                    let x = grid.point(&grid.unflatten(flat));
                    let fx = target.eval(q, &x);
                    if fx != Complex64::ZERO {
                        let y: Vec<f64> = t.iter().zip(&x).map(|(a, b)| a - b).collect();
                        part += fx * ker.eval(&y);
                    }
                }
                acc += part * grid.weight();
            }
            acc
        }
    }
}

/// `(L_j f)(t)` for a space element (optionally one part `f^{(p)}`), exact
/// pointwise for ideal sampling, midpoint quadrature for kernels.
pub fn apply_to_element(
    bank: &FilterBank,
    j: usize,
    f: &SpaceElement,
    part: Option<usize>,
    t: &[f64],
    res: u32,
) -> Complex64 {
    apply_inner(bank, j, &Target::Element { f, part }, t, res)
}

/// `(L_j f)(t)` for tabulated components. Errors when the kernel window
/// around `t` leaves the tabulated domain of an aperiodic function.
pub fn apply_to_gridfn(
    bank: &FilterBank,
    j: usize,
    comps: &[GridFunction],
    t: &[f64],
    res: u32,
) -> Result<Complex64> {
    let reach = bank.systems[j].reach(bank.dim);
    for g in comps {
        if g.period.is_none() {
            let hi = g.grid.hi();
            for ax in 0..bank.dim {
                if t[ax] - reach < g.grid.lo[ax] || t[ax] + reach > hi[ax] {
                    return Err(Error::OutOfReliableRegion { point: t.to_vec() });
                }
            }
        }
    }
    Ok(apply_inner(bank, j, &Target::Grid(comps), t, res))
}

/// Inner-product form `<f, h_j(. - t)>` with `h_j(x) = conj(P_j(-x))`,
/// integrating over the element's working box rather than the kernel window.
/// Agrees with [`apply_to_element`]; kept as an independent code path.
pub fn apply_via_inner_product(
    bank: &FilterBank,
    j: usize,
    f: &SpaceElement,
    t: &[f64],
    res: u32,
) -> Result<Complex64> {
    match &bank.systems[j] {
        FilterSystem::Point { component, offset } => {
            let y: Vec<f64> = t.iter().zip(offset).map(|(a, b)| a - b).collect();
            Ok(f.eval(*component, &y))
        }
        FilterSystem::Conv { kernels } => {
            let grid = Grid::new(&f.lo, &f.hi, res)?;
            let mut acc = Complex64::ZERO;
            for flat in 0..grid.len() {
                let x = grid.point(&grid.unflatten(flat));
                for (q, ker) in kernels.iter().enumerate() {
                    let fx = f.eval(q, &x);
                    if fx == Complex64::ZERO {
                        continue;
                    }
                    // h_{j,q}(u) = conj(p_q(-u)), evaluated at u = x - t
                    let neg_u: Vec<f64> = t.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let h = ker.eval(&neg_u).conj();
                    acc += fx * h.conj();
                }
            }
            Ok(acc * grid.weight())
        }
    }
}

/// Sparse sample sequence `[(alpha, value)]` plus a truncation flag.
pub type FilterSamples = (Vec<(Vec<i64>, Complex64)>, bool);

/// Filtered generator samples `(L_j phi_p)(alpha)`, `|alpha|_inf <= k_sym`.
///
/// Compact supports make the sequence finitely supported; if a boundary
/// sample exceeds 1e-12 the truncation is reported (an error under strict
/// mode, a flag otherwise).
pub fn generator_filter_samples(
    bank: &FilterBank,
    gens: &GeneratorSet,
    j: usize,
    p: usize,
    k_sym: i64,
    res: u32,
    strict: bool,
) -> Result<FilterSamples> {
    let bx = IndexBox::new(gens.dim, k_sym);
    let phi = &gens.gens[p];
    let values: Vec<Complex64> = crate::exec::map_indexed(bx.len(), |flat| {
        let alpha = bx.unflatten(flat);
        let t: Vec<f64> = alpha.iter().map(|&a| a as f64).collect();
        match &bank.systems[j] {
            FilterSystem::Point { component, offset } => {
                let y: Vec<f64> = t.iter().zip(offset).map(|(a, b)| a - b).collect();
                phi.comps[*component].eval(&y)
            }
            FilterSystem::Conv { kernels } => {
                let mut acc = Complex64::ZERO;
                for (q, ker) in kernels.iter().enumerate() {
                    if matches!(ker, KernelFn::Zero) {
                        continue;
                    }
                    let (klo, khi) = ker.support(gens.dim);
                    let lo: Vec<f64> = t.iter().zip(&khi).map(|(a, b)| a - b).collect();
                    let hi: Vec<f64> = t.iter().zip(&klo).map(|(a, b)| a - b).collect();
                    if let Ok(grid) = Grid::new(&lo, &hi, res) {
                        let mut part = Complex64::ZERO;
                        for g in 0..grid.len() {
                            let x = grid.point(&grid.unflatten(g));
                            let fx = phi.comps[q].eval(&x);
                            if fx != Complex64::ZERO {
                                let y: Vec<f64> = t.iter().zip(&x).map(|(a, b)| a - b).collect();
                                part += fx * ker.eval(&y);
                            }
                        }
                        acc += part * grid.weight();
                    }
                }
                acc
            }
        }
    });

    let mut worst_boundary = 0.0f64;
    for flat in 0..bx.len() {
        let alpha = bx.unflatten(flat);
        if alpha.iter().any(|a| a.abs() == k_sym) {
            worst_boundary = worst_boundary.max(values[flat].norm());
        }
    }
    let truncated = worst_boundary > 1e-12;
    if truncated && strict {
        return Err(Error::TruncationLoss {
            worst: worst_boundary,
            k_sym,
        });
    }
    let seq = bx
        .iter()
        .zip(values)
        .filter(|(_, v)| v.norm() > 0.0)
        .collect();
    Ok((seq, truncated))
}

/// Table of the symbols `g_{j,p}(x) = sum_alpha (L_j phi_p)(alpha)
/// exp(-2 pi i N alpha . x)`, kept as coefficient lists plus a tabulation
/// per subcube.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    pub n_sys: usize,
    pub n_sub: usize,
    pub dim: usize,
    /// `coeffs[j * n_sub + p]`, sorted by index
    pub coeffs: Vec<Vec<(Vec<i64>, Complex64)>>,
    /// Grid max of `|g_{j,p}|` (essential sup surrogate)
    pub ess_sup: Vec<f64>,
    pub tables: Vec<GridFunction>,
    pub truncated: bool,
}

impl SymbolTable {
    /// Exact evaluation from the coefficient list; `1/N`-periodic by
    /// construction, so any `x` is valid.
    pub fn eval(&self, j: usize, p: usize, x: &[f64]) -> Complex64 {
        let n = self.n_sub as f64;
        self.coeffs[j * self.n_sub + p]
            .iter()
            .map(|(alpha, c)| {
                let dot: f64 = alpha.iter().zip(x).map(|(&a, &v)| a as f64 * v).sum();
                c * Complex64::cis(-TAU * n * dot)
            })
            .sum()
    }
}

/// Builds the symbol table for every `(j, p)`.
pub fn build_symbols(
    bank: &FilterBank,
    gens: &GeneratorSet,
    lat: &SamplingLattice,
    k_sym: i64,
    res: u32,
    strict: bool,
) -> Result<SymbolTable> {
    let n_sub = gens.n_gens();
    if n_sub != lat.n_sub {
        return Err(Error::ShapeMismatch(
            "generator count must equal the subcube count N".into(),
        ));
    }
    let mut coeffs = Vec::with_capacity(bank.n_sys() * n_sub);
    let mut ess_sup = Vec::new();
    let mut tables = Vec::new();
    let mut truncated = false;
    for j in 0..bank.n_sys() {
        for p in 0..n_sub {
            let (seq, trunc) = generator_filter_samples(bank, gens, j, p, k_sym, res, strict)?;
            truncated |= trunc;
            let (lo, hi) = subcube_bounds(gens.dim, n_sub, p);
            let grid = Grid::new(&lo, &hi, res)?;
            let n = n_sub as f64;
            let table = GridFunction::from_fn(grid, |x| {
                seq.iter()
                    .map(|(alpha, c)| {
                        let dot: f64 = alpha.iter().zip(x).map(|(&a, &v)| a as f64 * v).sum();
                        c * Complex64::cis(-TAU * n * dot)
                    })
                    .sum()
            })
            .with_period(vec![1.0 / n; gens.dim]);
            ess_sup.push(table.values.iter().map(|v| v.norm()).fold(0.0, f64::max));
            tables.push(table);
            coeffs.push(seq);
        }
    }
    Ok(SymbolTable {
        n_sys: bank.n_sys(),
        n_sub,
        dim: gens.dim,
        coeffs,
        ess_sup,
        tables,
        truncated,
    })
}

/// Default symbol truncation: everything a compactly supported generator and
/// kernel can reach, plus one guard index.
pub fn auto_k_sym(bank: &FilterBank, gens: &GeneratorSet) -> i64 {
    (gens.support_radius() + bank.reach()).ceil() as i64 + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch::IndexBox;
    use crate::sispace::{auto_box, synthesize, CoefficientArray, ComponentFn, Generator};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn hat_gens() -> Arc<GeneratorSet> {
        let g = Generator {
            comps: vec![ComponentFn::Spline {
                order: 2,
                shift: vec![0.0],
            }],
        };
        Arc::new(GeneratorSet::new(1, 1, vec![g], 0.05, false).unwrap())
    }

    fn shifted_hat_gens(shift: f64) -> Arc<GeneratorSet> {
        let g = Generator {
            comps: vec![ComponentFn::Spline {
                order: 2,
                shift: vec![shift],
            }],
        };
        Arc::new(GeneratorSet::new(1, 1, vec![g], 0.05, false).unwrap())
    }

    fn point_bank() -> FilterBank {
        FilterBank::new(
            1,
            1,
            vec![FilterSystem::Point {
                component: 0,
                offset: vec![0.0],
            }],
        )
        .unwrap()
    }

    fn averaging_bank() -> FilterBank {
        FilterBank::new(
            1,
            1,
            vec![FilterSystem::Conv {
                kernels: vec![KernelFn::BoxCar {
                    center: vec![0.0],
                    width: 1.0,
                }],
            }],
        )
        .unwrap()
    }

    fn hat_element() -> SpaceElement {
        let gens = hat_gens();
        let mut c = CoefficientArray::zeros(1, IndexBox::new(1, 2));
        c.set(0, &[0], Complex64::ONE);
        let (lo, hi) = auto_box(&gens, 2);
        synthesize(&gens, c, &lo, &hi).unwrap()
    }

    #[test]
    fn point_sampling_hat_peak() {
        let f = hat_element();
        let v = apply_to_element(&point_bank(), 0, &f, None, &[0.0], 256);
        assert_eq!(v, Complex64::ONE);
    }

    #[test]
    fn averaging_hat_at_zero() {
        // int_{-1/2}^{1/2} (1 - |x|) dx = 3/4, exact under aligned midpoints
        let f = hat_element();
        let v = apply_to_element(&averaging_bank(), 0, &f, None, &[0.0], 256);
        assert_abs_diff_eq!(v.re, 0.75, epsilon = 1e-12);
        assert!(v.im.abs() < 1e-15);
    }

    #[test]
    fn filter_linearity() {
        let gens = hat_gens();
        let (lo, hi) = auto_box(&gens, 3);
        let bx = IndexBox::new(1, 3);
        let mut rng = crate::exec::member_rng(8, 0);
        let a = CoefficientArray::random_unit(1, bx, &mut rng);
        let b = CoefficientArray::random_unit(1, bx, &mut rng);
        let mut ab = CoefficientArray::zeros(1, bx);
        for i in 0..bx.len() {
            ab.per_gen[0][i] = a.per_gen[0][i] + b.per_gen[0][i];
        }
        let (fa, fb, fab) = (
            synthesize(&gens, a, &lo, &hi).unwrap(),
            synthesize(&gens, b, &lo, &hi).unwrap(),
            synthesize(&gens, ab, &lo, &hi).unwrap(),
        );
        let bank = averaging_bank();
        for t in [-0.8, 0.1, 1.4] {
            let lhs = apply_to_element(&bank, 0, &fab, None, &[t], 256);
            let rhs = apply_to_element(&bank, 0, &fa, None, &[t], 256)
                + apply_to_element(&bank, 0, &fb, None, &[t], 256);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn inner_product_form_agrees() {
        // probes are multiples of the grid step so the kernel edges land on
        // cell boundaries in both integration routes
        let f = hat_element();
        let bank = averaging_bank();
        for t in [-0.25, 0.0, 0.5, 1.0 + 3.0 / 256.0] {
            let a = apply_to_element(&bank, 0, &f, None, &[t], 256);
            let b = apply_via_inner_product(&bank, 0, &f, &[t], 256).unwrap();
            assert!((a - b).norm() < 1e-10, "t={t} a={a} b={b}");
        }
    }

    #[test]
    fn generator_samples_point_centered_hat() {
        let gens = hat_gens();
        let (seq, trunc) =
            generator_filter_samples(&point_bank(), &gens, 0, 0, 3, 256, false).unwrap();
        assert!(!trunc);
        assert_eq!(seq.len(), 1);
        assert_eq!(seq[0].0, vec![0]);
        assert_eq!(seq[0].1, Complex64::ONE);
    }

    #[test]
    fn generator_samples_shifted_hat() {
        let gens = shifted_hat_gens(1.0);
        let (seq, _) = generator_filter_samples(&point_bank(), &gens, 0, 0, 3, 256, false).unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq[0].0, vec![1]);
        assert_eq!(seq[0].1, Complex64::ONE);
    }

    #[test]
    fn generator_samples_averaging_hat() {
        let gens = hat_gens();
        let (seq, trunc) =
            generator_filter_samples(&averaging_bank(), &gens, 0, 0, 3, 256, false).unwrap();
        assert!(!trunc);
        let get = |a: i64| {
            seq.iter()
                .find(|(al, _)| al[0] == a)
                .map(|(_, v)| *v)
                .unwrap_or(Complex64::ZERO)
        };
        assert_abs_diff_eq!(get(0).re, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(get(1).re, 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(get(-1).re, 0.125, epsilon = 1e-12);
    }

    #[test]
    fn symbols_classical_and_shifted() {
        let lat = SamplingLattice::new(vec![vec![1]], 1).unwrap();
        // centered hat + point sampling: g == 1
        let st = build_symbols(&point_bank(), &hat_gens(), &lat, 3, 256, false).unwrap();
        for x in [0.0, 0.31, 0.77] {
            assert!((st.eval(0, 0, &[x]) - Complex64::ONE).norm() < 1e-12);
        }
        // hat peaked at 1: g(x) = exp(-2 pi i x), |g| == 1
        let st = build_symbols(&point_bank(), &shifted_hat_gens(1.0), &lat, 3, 256, false).unwrap();
        for x in [0.0, 0.25, 0.5, 0.9] {
            let g = st.eval(0, 0, &[x]);
            assert!((g - Complex64::cis(-TAU * x)).norm() < 1e-12);
            assert_abs_diff_eq!(g.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn symbols_averaging_range() {
        // g(x) = 3/4 + cos(2 pi x)/4, range [1/2, 1]
        let lat = SamplingLattice::new(vec![vec![1]], 1).unwrap();
        let st = build_symbols(&averaging_bank(), &hat_gens(), &lat, 3, 256, false).unwrap();
        for x in [0.0, 0.2, 0.5, 0.85] {
            let expect = 0.75 + 0.25 * (TAU * x).cos();
            assert!((st.eval(0, 0, &[x]) - expect).norm() < 1e-12);
        }
        let min = st.tables[0]
            .values
            .iter()
            .map(|v| v.norm())
            .fold(f64::INFINITY, f64::min);
        assert!((0.5..0.51).contains(&min));
        assert!(st.ess_sup[0] <= 1.0 + 1e-12 && st.ess_sup[0] > 0.99);
    }

    #[test]
    fn symbol_periodicity() {
        let lat = SamplingLattice::new(vec![vec![2]], 1).unwrap();
        let st = build_symbols(&averaging_bank(), &hat_gens(), &lat, 3, 256, false).unwrap();
        for x in [0.1, 0.6] {
            let a = st.eval(0, 0, &[x]);
            let b = st.eval(0, 0, &[x + 1.0]); // beta/N with N = 1
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn doubling_k_sym_changes_nothing_without_truncation() {
        let gens = hat_gens();
        let lat = SamplingLattice::new(vec![vec![1]], 1).unwrap();
        let a = build_symbols(&averaging_bank(), &gens, &lat, 3, 256, false).unwrap();
        let b = build_symbols(&averaging_bank(), &gens, &lat, 6, 256, false).unwrap();
        assert!(!a.truncated);
        for x in [0.13, 0.47, 0.81] {
            assert!((a.eval(0, 0, &[x]) - b.eval(0, 0, &[x])).norm() < 1e-12);
        }
    }

    #[test]
    fn truncation_loss_detected_in_strict_mode() {
        // k_sym = 1 clips the averaging sequence {1/8, 3/4, 1/8}
        let gens = hat_gens();
        let err =
            generator_filter_samples(&averaging_bank(), &gens, 0, 0, 1, 256, true).unwrap_err();
        assert!(matches!(err, Error::TruncationLoss { .. }));
    }

    #[test]
    fn out_of_reliable_region_for_tabulated_target() {
        let grid = Grid::new(&[-1.0], &[1.0], 32).unwrap();
        let comps = vec![GridFunction::from_fn(grid, |_| Complex64::ONE)];
        let bank = averaging_bank();
        assert!(apply_to_gridfn(&bank, 0, &comps, &[0.0], 64).is_ok());
        assert!(matches!(
            apply_to_gridfn(&bank, 0, &comps, &[0.9], 64),
            Err(Error::OutOfReliableRegion { .. })
        ));
    }
}
