//! The shift-invariant space: generators, synthesis, Riesz-bound estimation
//! and the synthesis operator that maps subcube functions to space elements.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{Grid, GridFunction};
use crate::patch::{gaussian_c64, CoeffGrid, IndexBox, PatchFunction};

/// Centered cardinal B-spline of the given order, support `[-order/2, order/2]`.
pub fn bspline(order: u32, x: f64) -> f64 {
    if order == 1 {
        return if (-0.5..0.5).contains(&x) { 1.0 } else { 0.0 };
    }
    let n = order as f64;
    let prev = order - 1;
    ((n / 2.0 + x) * bspline(prev, x + 0.5) + (n / 2.0 - x) * bspline(prev, x - 0.5)) / (n - 1.0)
}

/// One scalar component of a generator.
#[derive(Debug, Clone)]
pub enum ComponentFn {
    /// Tensor product of centered B-splines, shifted: `prod_i B_order(x_i - shift_i)`.
    Spline { order: u32, shift: Vec<f64> },
    /// Tabulated values, multilinear interpolation, zero outside the grid.
    Tabulated(GridFunction),
}

impl ComponentFn {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        match self {
            ComponentFn::Spline { order, shift } => {
                let mut v = 1.0;
                for (xi, si) in x.iter().zip(shift) {
                    v *= bspline(*order, xi - si);
                    if v == 0.0 {
                        return Complex64::ZERO;
                    }
                }
                Complex64::new(v, 0.0)
            }
            ComponentFn::Tabulated(gf) => gf.eval(x),
        }
    }

    /// Radius of an origin-centered box containing the support.
    pub fn support_radius(&self) -> f64 {
        match self {
            ComponentFn::Spline { order, shift } => {
                let half = *order as f64 / 2.0;
                shift.iter().map(|s| s.abs() + half).fold(0.0, f64::max)
            }
            ComponentFn::Tabulated(gf) => {
                let hi = gf.grid.hi();
                gf.grid
                    .lo
                    .iter()
                    .zip(&hi)
                    .map(|(a, b)| a.abs().max(b.abs()))
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// One vector generator: `r` scalar components.
#[derive(Debug, Clone)]
pub struct Generator {
    pub comps: Vec<ComponentFn>,
}

impl Generator {
    pub fn support_radius(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| c.support_radius())
            .fold(0.0, f64::max)
    }
}

/// Diagnostics from the construction-time continuity and overlap checks.
#[derive(Debug, Clone)]
pub struct GeneratorChecks {
    /// Largest jump between adjacent probe samples, per generator.
    pub max_jump: f64,
    pub continuous: bool,
    /// `sup_x sum_{j,q,alpha} |phi_{j,q}(x - alpha)|^2` over a probe grid.
    pub translate_sup: f64,
}

/// The generator family `phi_1..phi_N`.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    pub dim: usize,
    pub n_comp: usize,
    pub gens: Vec<Generator>,
    pub checks: GeneratorChecks,
}

impl GeneratorSet {
    /// Probes continuity and the translate overlap sum. With `strict` a
    /// discontinuous component (jump above `budget`) is an error; otherwise
    /// it is only recorded.
    pub fn new(
        dim: usize,
        n_comp: usize,
        gens: Vec<Generator>,
        budget: f64,
        strict: bool,
    ) -> Result<Self> {
        if gens.is_empty() || gens.iter().any(|g| g.comps.len() != n_comp) {
            return Err(Error::ShapeMismatch(
                "every generator needs the same number of components".into(),
            ));
        }
        let mut checks = probe_checks(dim, &gens);
        checks.continuous = checks.max_jump <= budget;
        if strict && !checks.continuous {
            return Err(Error::Validation(format!(
                "generator component jump {:.3e} exceeds continuity budget {budget:.3e}",
                checks.max_jump
            )));
        }
        Ok(Self {
            dim,
            n_comp,
            gens,
            checks,
        })
    }

    pub fn n_gens(&self) -> usize {
        self.gens.len()
    }

    pub fn support_radius(&self) -> f64 {
        self.gens
            .iter()
            .map(|g| g.support_radius())
            .fold(0.0, f64::max)
    }
}

fn probe_checks(dim: usize, gens: &[Generator]) -> GeneratorChecks {
    let res = 128u32;
    let reach = gens
        .iter()
        .map(|g| g.support_radius())
        .fold(0.0, f64::max)
        .ceil() as i64
        + 1;
    let mut max_jump = 0.0f64;
    for g in gens {
        for c in &g.comps {
            // scan along each axis through a handful of offsets
            for axis in 0..dim {
                for off in 0..4 {
                    let mut prev: Option<Complex64> = None;
                    let shift = off as f64 * 0.137;
                    let n = (2 * reach) as u32 * res;
                    for i in 0..=n {
                        let mut x = vec![shift; dim];
                        x[axis] = -reach as f64 + i as f64 / res as f64;
                        let v = c.eval(&x);
                        if let Some(pv) = prev {
                            max_jump = max_jump.max((v - pv).norm());
                        }
                        prev = Some(v);
                    }
                }
            }
        }
    }
    // sup of the translate overlap sum over one period
    let probe = Grid::new(&vec![0.0; dim], &vec![1.0; dim], 32).expect("probe grid");
    let mut translate_sup = 0.0f64;
    for flat in 0..probe.len() {
        let x = probe.point(&probe.unflatten(flat));
        let mut total = 0.0;
        for g in gens {
            for c in &g.comps {
                let mut alpha = vec![-reach; dim];
                loop {
                    let y: Vec<f64> = x.iter().zip(&alpha).map(|(xi, &a)| xi - a as f64).collect();
                    total += c.eval(&y).norm_sqr();
                    // advance multi-index
                    let mut ax = dim;
                    for a in 0..dim {
                        if alpha[a] < reach {
                            alpha[a] += 1;
                            for b in 0..a {
                                alpha[b] = -reach;
                            }
                            ax = a;
                            break;
                        }
                    }
                    if ax == dim {
                        break;
                    }
                }
            }
        }
        translate_sup = translate_sup.max(total);
    }
    GeneratorChecks {
        max_jump,
        continuous: true,
        translate_sup,
    }
}

/// Coefficient family `a_{j,alpha}`, `|alpha|_inf <= k`.
#[derive(Debug, Clone)]
pub struct CoefficientArray {
    pub bx: IndexBox,
    /// `per_gen[j][flat(alpha)]`
    pub per_gen: Vec<Vec<Complex64>>,
}

impl CoefficientArray {
    pub fn zeros(n_gens: usize, bx: IndexBox) -> Self {
        Self {
            per_gen: vec![vec![Complex64::ZERO; bx.len()]; n_gens],
            bx,
        }
    }

    pub fn random_unit(n_gens: usize, bx: IndexBox, rng: &mut impl Rng) -> Self {
        let mut a = Self::zeros(n_gens, bx);
        let mut total = 0.0;
        for g in &mut a.per_gen {
            for c in g.iter_mut() {
                *c = gaussian_c64(rng);
                total += c.norm_sqr();
            }
        }
        let s = 1.0 / total.sqrt();
        for g in &mut a.per_gen {
            for c in g.iter_mut() {
                *c *= s;
            }
        }
        a
    }

    pub fn get(&self, j: usize, alpha: &[i64]) -> Complex64 {
        if self.bx.contains(alpha) {
            self.per_gen[j][self.bx.flatten(alpha)]
        } else {
            Complex64::ZERO
        }
    }

    pub fn set(&mut self, j: usize, alpha: &[i64], v: Complex64) {
        let flat = self.bx.flatten(alpha);
        self.per_gen[j][flat] = v;
    }

    pub fn norm_sq(&self) -> f64 {
        self.per_gen
            .iter()
            .map(|g| g.iter().map(|c| c.norm_sqr()).sum::<f64>())
            .sum()
    }

    pub fn scale(&mut self, s: Complex64) {
        for g in &mut self.per_gen {
            for c in g.iter_mut() {
                *c *= s;
            }
        }
    }
}

/// An element of the space, kept as coefficients plus the generator handle so
/// it can be evaluated exactly anywhere.
#[derive(Debug, Clone)]
pub struct SpaceElement {
    pub gens: Arc<GeneratorSet>,
    pub coeffs: CoefficientArray,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Source patch function when produced by the synthesis operator.
    pub source: Option<PatchFunction>,
}

impl SpaceElement {
    /// Value of component `q` of `f = sum_j sum_alpha a_{j,alpha} phi_j(. - alpha)`.
    pub fn eval(&self, q: usize, t: &[f64]) -> Complex64 {
        self.eval_inner(None, q, t)
    }

    /// Same but keeping only the part `f^{(p)}` synthesized from generator `p`.
    pub fn eval_part(&self, p: usize, q: usize, t: &[f64]) -> Complex64 {
        self.eval_inner(Some(p), q, t)
    }

    fn eval_inner(&self, part: Option<usize>, q: usize, t: &[f64]) -> Complex64 {
        let d = self.gens.dim;
        let k = self.coeffs.bx.k;
        let mut acc = Complex64::ZERO;
        for (j, ja) in self.coeffs.per_gen.iter().enumerate() {
            if let Some(p) = part {
                if j != p {
                    continue;
                }
            }
            let supp = self.gens.gens[j].support_radius();
            let lo: Vec<i64> = t
                .iter()
                .map(|v| ((v - supp).ceil() as i64).max(-k))
                .collect();
            let hi: Vec<i64> = t
                .iter()
                .map(|v| ((v + supp).floor() as i64).min(k))
                .collect();
            if lo.iter().zip(&hi).any(|(a, b)| a > b) {
                continue;
            }
            let mut alpha = lo.clone();
            loop {
                let a = ja[self.coeffs.bx.flatten(&alpha)];
                if a != Complex64::ZERO {
                    let y: Vec<f64> = t.iter().zip(&alpha).map(|(v, &s)| v - s as f64).collect();
                    acc += a * self.gens.gens[j].comps[q].eval(&y);
                }
                let mut done = true;
                for ax in 0..d {
                    if alpha[ax] < hi[ax] {
                        alpha[ax] += 1;
                        alpha[..ax].copy_from_slice(&lo[..ax]);
                        done = false;
                        break;
                    }
                }
                if done {
                    break;
                }
            }
        }
        acc
    }

    /// Tabulates component `q` (optionally of one part) over `[lo, hi)` by
    /// scattering each coefficient's support window onto the grid.
    pub fn tabulate(
        &self,
        part: Option<usize>,
        q: usize,
        lo: &[f64],
        hi: &[f64],
        res: u32,
    ) -> Result<GridFunction> {
        let grid = Grid::new(lo, hi, res)?;
        let d = grid.dim();
        let mut values = vec![Complex64::ZERO; grid.len()];
        for (j, ja) in self.coeffs.per_gen.iter().enumerate() {
            if let Some(p) = part {
                if j != p {
                    continue;
                }
            }
            let supp = self.gens.gens[j].support_radius();
            let comp = &self.gens.gens[j].comps[q];
            for flat_a in 0..self.coeffs.bx.len() {
                let a = ja[flat_a];
                if a == Complex64::ZERO {
                    continue;
                }
                let alpha = self.coeffs.bx.unflatten(flat_a);
                // index window covering supp(phi(. - alpha))
                let (mut ilo, mut ihi) = (vec![0i64; d], vec![0i64; d]);
                let mut empty = false;
                for ax in 0..d {
                    let a0 = (alpha[ax] as f64 - supp - grid.lo[ax]) * res as f64 - 0.5;
                    let a1 = (alpha[ax] as f64 + supp - grid.lo[ax]) * res as f64 - 0.5;
                    ilo[ax] = (a0.ceil() as i64).max(0);
                    ihi[ax] = (a1.floor() as i64).min(grid.npts[ax] as i64 - 1);
                    if ilo[ax] > ihi[ax] {
                        empty = true;
                    }
                }
                if empty {
                    continue;
                }
                let mut idx = ilo.clone();
                loop {
                    let iu: Vec<usize> = idx.iter().map(|&v| v as usize).collect();
                    let x = grid.point(&iu);
                    let y: Vec<f64> = x.iter().zip(&alpha).map(|(v, &s)| v - s as f64).collect();
                    let phi = comp.eval(&y);
                    if phi != Complex64::ZERO {
                        values[grid.flatten(&iu)] += a * phi;
                    }
                    let mut done = true;
                    for ax in 0..d {
                        if idx[ax] < ihi[ax] {
                            idx[ax] += 1;
                            idx[..ax].copy_from_slice(&ilo[..ax]);
                            done = false;
                            break;
                        }
                    }
                    if done {
                        break;
                    }
                }
            }
        }
        Ok(GridFunction {
            grid,
            values,
            period: None,
        })
    }

    /// `||f||^2` over `[lo, hi)` summed across components, midpoint rule.
    pub fn norm_sq_on(&self, lo: &[f64], hi: &[f64], res: u32) -> Result<f64> {
        let mut total = 0.0;
        for q in 0..self.gens.n_comp {
            total += self.tabulate(None, q, lo, hi, res)?.norm_sq();
        }
        Ok(total)
    }

    /// `||f||^2` over the working box.
    pub fn norm_sq(&self, res: u32) -> Result<f64> {
        let (lo, hi) = (self.lo.clone(), self.hi.clone());
        self.norm_sq_on(&lo, &hi, res)
    }
}

/// Working box that contains every shifted support for coefficients in
/// `[-k, k]^d`.
pub fn auto_box(gens: &GeneratorSet, k: i64) -> (Vec<f64>, Vec<f64>) {
    let reach = k as f64 + gens.support_radius().ceil();
    (vec![-reach; gens.dim], vec![reach; gens.dim])
}

/// `f = sum_j sum_alpha a_{j,alpha} phi_j(. - alpha)` with a box check.
pub fn synthesize(
    gens: &Arc<GeneratorSet>,
    coeffs: CoefficientArray,
    lo: &[f64],
    hi: &[f64],
) -> Result<SpaceElement> {
    let supp = gens.support_radius();
    let k = coeffs.bx.k as f64;
    for ax in 0..gens.dim {
        if lo[ax] > -(k + supp) || hi[ax] < k + supp {
            return Err(Error::BoxTooSmall(format!(
                "box [{}, {}) on axis {ax} cannot hold shifts up to {k} with support {supp}",
                lo[ax], hi[ax]
            )));
        }
    }
    Ok(SpaceElement {
        gens: Arc::clone(gens),
        coeffs,
        lo: lo.to_vec(),
        hi: hi.to_vec(),
        source: None,
    })
}

/// Estimated Riesz bounds.
#[derive(Debug, Clone)]
pub struct RieszEstimate {
    pub a_lo: f64,
    pub b_hi: f64,
    pub gram_min: f64,
    pub gram_max: f64,
    pub probe_min: f64,
    pub probe_max: f64,
    pub trials: usize,
}

/// Gram matrix of the translate family `phi_j(. - alpha)`, `|alpha|_inf <= k`.
pub fn translate_gram(gens: &GeneratorSet, k: i64, res: u32) -> Result<DMatrix<Complex64>> {
    let d = gens.dim;
    let n = gens.n_gens();
    let bx = IndexBox::new(d, k);
    let supp = gens.support_radius();
    let reach = (2.0 * supp).ceil() as i64;
    let corr_bx = IndexBox::new(d, reach);

    // corr[(j, j')][delta] = <phi_j, phi_j'(. - delta)>
    let mut corr = vec![vec![Complex64::ZERO; corr_bx.len()]; n * n];
    let lo = vec![-supp - 0.5; d];
    let hi = vec![supp + 0.5; d];
    for j in 0..n {
        for jp in 0..n {
            let entries = exec::map_indexed(corr_bx.len(), |flat| {
                let delta = corr_bx.unflatten(flat);
                let grid = Grid::new(&lo, &hi, res).expect("corr grid");
                let mut acc = Complex64::ZERO;
                for g in 0..grid.len() {
                    let x = grid.point(&grid.unflatten(g));
                    let y: Vec<f64> = x.iter().zip(&delta).map(|(v, &s)| v - s as f64).collect();
                    for q in 0..gens.n_comp {
                        acc +=
                            gens.gens[j].comps[q].eval(&x) * gens.gens[jp].comps[q].eval(&y).conj();
                    }
                }
                acc * grid.weight()
            });
            corr[j * n + jp] = entries;
        }
    }

    let side = bx.len();
    let mut g = DMatrix::<Complex64>::zeros(n * side, n * side);
    for j in 0..n {
        for jp in 0..n {
            for fa in 0..side {
                let alpha = bx.unflatten(fa);
                for fb in 0..side {
                    let beta = bx.unflatten(fb);
                    let delta: Vec<i64> = beta.iter().zip(&alpha).map(|(b, a)| b - a).collect();
                    let v = if corr_bx.contains(&delta) {
                        corr[j * n + jp][corr_bx.flatten(&delta)]
                    } else {
                        Complex64::ZERO
                    };
                    g[(j * side + fa, jp * side + fb)] = v;
                }
            }
        }
    }
    Ok(g)
}

/// Eigenvalue range of a Hermitian matrix (clamped at zero from below).
pub fn hermitian_eig_range(h: &DMatrix<Complex64>) -> (f64, f64) {
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &l in eig.eigenvalues.iter() {
        min = min.min(l);
        max = max.max(l);
    }
    (min.max(0.0), max)
}

/// Riesz bounds via random probing cross-checked against the finite Gram
/// eigen-range. Neither route is certified; both are reported.
pub fn riesz_bounds_estimate(
    gens: &Arc<GeneratorSet>,
    trials: usize,
    k_coeff: i64,
    res: u32,
    seed: u64,
    degenerate_cap: f64,
) -> Result<RieszEstimate> {
    let gram = translate_gram(gens, k_coeff, res)?;
    let (gram_min, gram_max) = hermitian_eig_range(&gram);

    let (lo, hi) = auto_box(gens, k_coeff);
    let bx = IndexBox::new(gens.dim, k_coeff);
    let ratios = exec::map_indexed(trials, |t| {
        let mut rng = exec::member_rng(seed, t as u64);
        let coeffs = CoefficientArray::random_unit(gens.n_gens(), bx, &mut rng);
        let f = synthesize(gens, coeffs, &lo, &hi).expect("auto box fits");
        f.norm_sq(res).expect("norm over working box")
    });
    let probe_min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let probe_max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let a_lo = gram_min.min(probe_min);
    let b_hi = gram_max.max(probe_max);
    let ratio = b_hi / a_lo.max(1e-300);
    if ratio > degenerate_cap {
        return Err(Error::DegenerateGenerators {
            ratio,
            cap: degenerate_cap,
        });
    }
    Ok(RieszEstimate {
        a_lo,
        b_hi,
        gram_min,
        gram_max,
        probe_min,
        probe_max,
        trials,
    })
}

/// The synthesis operator `T_phi`: Fourier coefficients of `F` on each
/// subcube feed the matching generator.
pub fn synthesis_operator(
    gens: &Arc<GeneratorSet>,
    f: &PatchFunction,
    k: i64,
) -> Result<SpaceElement> {
    if f.n_sub != gens.n_gens() {
        return Err(Error::ShapeMismatch(format!(
            "patch has {} subcubes but the family has {} generators",
            f.n_sub,
            gens.n_gens()
        )));
    }
    if gens.dim > 1 && f.n_sub > 1 {
        return Err(Error::UnsupportedRegime(format!(
            "d = {}, N = {}",
            gens.dim, f.n_sub
        )));
    }
    let coeff_grids: Vec<CoeffGrid> = (0..f.n_sub).map(|p| f.fourier_coefficients(p, k)).collect();
    let bx = IndexBox::new(gens.dim, k);
    let per_gen = coeff_grids.into_iter().map(|c| c.data).collect();
    let coeffs = CoefficientArray { bx, per_gen };
    let (lo, hi) = auto_box(gens, k);
    let mut el = synthesize(gens, coeffs, &lo, &hi)?;
    el.source = Some(f.clone());
    Ok(el)
}
