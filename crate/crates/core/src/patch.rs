//! Patch functions on the unit cube: per-subcube pieces, Fourier
//! coefficients and the coset vectorization over the fundamental cell.
//!
//! A patch function `F` on `[0,1]^d` carries one piece per subcube
//! `[(p-1)/N, p/N]^d`. Each piece is tabulated on a midpoint grid; when the
//! piece was born as a trigonometric polynomial in the `e_alpha` basis, the
//! exact coefficients are kept alongside so that the `Z^d/N`-periodic
//! extension can be evaluated anywhere without interpolation error.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{exp_basis, fourier_sums, Grid, GridFunction};
use crate::lattice::{CellGrid, SamplingLattice};

const TAU: f64 = std::f64::consts::TAU;

/// Lexicographically ordered integer box `[-k, k]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexBox {
    pub dim: usize,
    pub k: i64,
}

impl IndexBox {
    pub fn new(dim: usize, k: i64) -> Self {
        assert!(k >= 0);
        Self { dim, k }
    }

    pub fn len(&self) -> usize {
        (2 * self.k as usize + 1).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, alpha: &[i64]) -> bool {
        alpha.iter().all(|a| a.abs() <= self.k)
    }

    pub fn flatten(&self, alpha: &[i64]) -> usize {
        let side = 2 * self.k as usize + 1;
        let mut flat = 0usize;
        for &a in alpha {
            debug_assert!(a.abs() <= self.k);
            flat = flat * side + (a + self.k) as usize;
        }
        flat
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<i64> {
        let side = 2 * self.k as usize + 1;
        let mut alpha = vec![0i64; self.dim];
        for ax in (0..self.dim).rev() {
            alpha[ax] = (flat % side) as i64 - self.k;
            flat /= side;
        }
        alpha
    }

    pub fn iter(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(|f| self.unflatten(f))
    }
}

/// Fourier coefficients `c_alpha` on one subcube, `|alpha|_inf <= k`.
#[derive(Debug, Clone)]
pub struct CoeffGrid {
    pub bx: IndexBox,
    pub data: Vec<Complex64>,
}

impl CoeffGrid {
    pub fn zeros(bx: IndexBox) -> Self {
        Self {
            data: vec![Complex64::ZERO; bx.len()],
            bx,
        }
    }

    pub fn get(&self, alpha: &[i64]) -> Complex64 {
        if self.bx.contains(alpha) {
            self.data[self.bx.flatten(alpha)]
        } else {
            Complex64::ZERO
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Bounds of subcube `p` (0-based): `[p/N, (p+1)/N]^d`.
pub fn subcube_bounds(dim: usize, n_sub: usize, p: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = p as f64 / n_sub as f64;
    let hi = (p + 1) as f64 / n_sub as f64;
    (vec![lo; dim], vec![hi; dim])
}

#[derive(Debug, Clone)]
enum PatchSource {
    /// Exact trig-polynomial pieces in the `e_alpha` basis, one list per subcube.
    Trig(Vec<Vec<(Vec<i64>, Complex64)>>),
    /// Tabulated only; evaluation folds periodically and interpolates.
    Grid,
}

/// Function on `[0,1]^d` carried as per-subcube pieces `F chi_p`.
#[derive(Debug, Clone)]
pub struct PatchFunction {
    pub dim: usize,
    pub n_sub: usize,
    pieces: Vec<GridFunction>,
    source: PatchSource,
}

impl PatchFunction {
    fn piece_grid(dim: usize, n_sub: usize, p: usize, res: u32) -> Result<Grid> {
        let (lo, hi) = subcube_bounds(dim, n_sub, p);
        Grid::new(&lo, &hi, res)
    }

    /// Tabulates `f(p, x)` on every subcube.
    pub fn from_fn(
        dim: usize,
        n_sub: usize,
        res: u32,
        f: impl Fn(usize, &[f64]) -> Complex64,
    ) -> Result<Self> {
        check_regime(dim, n_sub)?;
        let period = vec![1.0 / n_sub as f64; dim];
        let pieces = (0..n_sub)
            .map(|p| {
                let grid = Self::piece_grid(dim, n_sub, p, res)?;
                Ok(GridFunction::from_fn(grid, |x| f(p, x)).with_period(period.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            n_sub,
            pieces,
            source: PatchSource::Grid,
        })
    }

    /// Builds from explicit `e_alpha` coefficients per subcube.
    pub fn from_trig(
        dim: usize,
        n_sub: usize,
        res: u32,
        coeffs: Vec<Vec<(Vec<i64>, Complex64)>>,
    ) -> Result<Self> {
        check_regime(dim, n_sub)?;
        if coeffs.len() != n_sub {
            return Err(Error::ShapeMismatch(
                "one coefficient list per subcube".into(),
            ));
        }
        let period = vec![1.0 / n_sub as f64; dim];
        let pieces = (0..n_sub)
            .map(|p| {
                let grid = Self::piece_grid(dim, n_sub, p, res)?;
                let cs = &coeffs[p];
                Ok(GridFunction::from_fn(grid, |x| {
                    cs.iter().map(|(a, c)| c * exp_basis(a, n_sub, x)).sum()
                })
                .with_period(period.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dim,
            n_sub,
            pieces,
            source: PatchSource::Trig(coeffs),
        })
    }

    /// Random smooth patch: unit-norm Gaussian trig coefficients with
    /// `1/(1+|alpha|^2)` decay, band-limited to `|alpha|_inf <= band`.
    pub fn random_trig(
        dim: usize,
        n_sub: usize,
        res: u32,
        band: i64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let bx = IndexBox::new(dim, band);
        let mut total = 0.0f64;
        let mut coeffs: Vec<Vec<(Vec<i64>, Complex64)>> = Vec::with_capacity(n_sub);
        for _ in 0..n_sub {
            let mut list = Vec::with_capacity(bx.len());
            for alpha in bx.iter() {
                let decay = 1.0 / (1.0 + alpha.iter().map(|&a| (a * a) as f64).sum::<f64>());
                let c = decay * gaussian_c64(rng);
                total += c.norm_sqr();
                list.push((alpha, c));
            }
            coeffs.push(list);
        }
        let scale = 1.0 / total.sqrt();
        for list in &mut coeffs {
            for (_, c) in list.iter_mut() {
                *c *= scale;
            }
        }
        Self::from_trig(dim, n_sub, res, coeffs)
    }

    pub fn piece(&self, p: usize) -> &GridFunction {
        &self.pieces[p]
    }

    /// `Z^d/N`-periodic extension of `F chi_p` evaluated anywhere.
    pub fn eval_periodized(&self, p: usize, x: &[f64]) -> Complex64 {
        match &self.source {
            PatchSource::Trig(coeffs) => coeffs[p]
                .iter()
                .map(|(a, c)| c * exp_basis(a, self.n_sub, x))
                .sum(),
            PatchSource::Grid => self.pieces[p].eval(x),
        }
    }

    /// `||F chi_p||^2` by midpoint quadrature.
    pub fn piece_norm_sq(&self, p: usize) -> f64 {
        self.pieces[p].norm_sq()
    }

    /// `||F||^2 = sum_p ||F chi_p||^2` (valid in the supported regimes).
    pub fn norm_sq(&self) -> f64 {
        (0..self.n_sub).map(|p| self.piece_norm_sq(p)).sum()
    }

    /// Fourier coefficients
    /// `c_{F,p,alpha} = N^{d/2} int_{subcube p} F(x) e^{2 pi i N alpha . x} dx`
    /// for `|alpha|_inf <= k`, by midpoint quadrature.
    pub fn fourier_coefficients(&self, p: usize, k: i64) -> CoeffGrid {
        let bx = IndexBox::new(self.dim, k);
        let n = self.n_sub as i64;
        let freqs: Vec<Vec<i64>> = bx
            .iter()
            .map(|a| a.iter().map(|&v| v * n).collect())
            .collect();
        let sums = fourier_sums(&self.pieces[p], &freqs);
        let scale = (self.n_sub as f64).powf(self.dim as f64 / 2.0);
        CoeffGrid {
            bx,
            data: sums.into_iter().map(|s| s * scale).collect(),
        }
    }
}

fn check_regime(dim: usize, n_sub: usize) -> Result<()> {
    if dim > 1 && n_sub > 1 {
        return Err(Error::UnsupportedRegime(format!("d = {dim}, N = {n_sub}")));
    }
    Ok(())
}

pub fn gaussian_c64(rng: &mut impl Rng) -> Complex64 {
    // Box-Muller; unit-variance complex Gaussian.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    let r = (-2.0 * u1.ln()).sqrt() / std::f64::consts::SQRT_2;
    Complex64::new(r * (TAU * u2).cos(), r * (TAU * u2).sin())
}

/// The vectorization `F_p(x) = ((F chi_p)(x + M^{-T} gamma_k / N))_k`
/// tabulated on the fundamental-cell grid.
#[derive(Debug, Clone)]
pub struct PatchVector {
    pub cell: CellGrid,
    /// `comps[k][flat]`, one component per coset.
    pub comps: Vec<Vec<Complex64>>,
}

impl PatchVector {
    pub fn norm_sq(&self) -> f64 {
        let w = self.cell.weight();
        self.comps
            .iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            * w
    }

    /// Value of component `k` at parameter point `u` (bilinear, periodic).
    pub fn interp_u(&self, k: usize, u: &[f64]) -> Complex64 {
        let res = self.cell.res as usize;
        let d = self.cell.dim;
        let mut base = vec![0i64; d];
        let mut frac = vec![0.0; d];
        for ax in 0..d {
            let pos = u[ax].rem_euclid(1.0) * res as f64 - 0.5;
            let f = pos.floor();
            base[ax] = f as i64;
            frac[ax] = pos - f;
        }
        let mut acc = Complex64::ZERO;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for ax in 0..d {
                let hi = (corner >> ax) & 1 == 1;
                let i = (base[ax] + if hi { 1 } else { 0 }).rem_euclid(res as i64) as usize;
                w *= if hi { frac[ax] } else { 1.0 - frac[ax] };
                flat = flat * res + i;
            }
            acc += w * self.comps[k][flat];
        }
        acc
    }

    /// Reassembles a patch function on subcube `p` whose vectorization is
    /// (approximately) this field: at each subcube grid point the matching
    /// coset component is read back, interpolating in parameter space.
    pub fn unfold_to_patch(
        &self,
        lat: &SamplingLattice,
        p: usize,
        res: u32,
    ) -> Result<PatchFunction> {
        let nf = lat.n_sub as f64;
        PatchFunction::from_fn(lat.dim, lat.n_sub, res, |pp, y| {
            if pp != p {
                return Complex64::ZERO;
            }
            // u0 = N M^T y - gamma_k must land in [0,1)^d modulo M^T Z^d
            for k in 0..lat.m {
                let mty = lat.mul_mt(y);
                let u0: Vec<f64> = mty
                    .iter()
                    .zip(&lat.gammas[k])
                    .map(|(v, &g)| v * nf - g as f64)
                    .collect();
                if let Some(u) = fold_to_unit(lat, &u0) {
                    return self.interp_u(k, &u);
                }
            }
            Complex64::ZERO
        })
    }
}

/// Finds `u = u0 - M^T beta` in `[0,1)^d` if one exists nearby.
fn fold_to_unit(lat: &SamplingLattice, u0: &[f64]) -> Option<Vec<f64>> {
    let shifted: Vec<f64> = u0.iter().map(|v| v - 0.5).collect();
    let t = lat.mul_minv_t(&shifted);
    let base: Vec<i64> = t.iter().map(|v| v.round() as i64).collect();
    let d = lat.dim;
    let mut best: Option<Vec<f64>> = None;
    let range = 2i64;
    let mut stack = vec![(0usize, vec![0i64; d])];
    while let Some((axis, off)) = stack.pop() {
        if axis == d {
            let beta: Vec<i64> = base.iter().zip(&off).map(|(b, o)| b + o).collect();
            let mtb: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| lat.mat[j][i] as f64 * beta[j] as f64).sum())
                .collect();
            let u: Vec<f64> = u0.iter().zip(&mtb).map(|(a, b)| a - b).collect();
            if u.iter().all(|&v| (0.0..1.0).contains(&v)) {
                best = Some(u);
            }
            continue;
        }
        for v in -range..=range {
            let mut next = off.clone();
            next[axis] = v;
            stack.push((axis + 1, next));
        }
    }
    best
}

/// Tabulates `F_p` over the fundamental-cell grid using the periodic
/// extension of `F chi_p`.
pub fn vectorize_patch(
    f: &PatchFunction,
    p: usize,
    lat: &SamplingLattice,
    cell_res: u32,
) -> Result<PatchVector> {
    check_regime(lat.dim, lat.n_sub)?;
    if f.n_sub != lat.n_sub || f.dim != lat.dim {
        return Err(Error::ShapeMismatch(
            "patch and lattice disagree on d or N".into(),
        ));
    }
    let cell = CellGrid::new(lat, cell_res);
    let shifts: Vec<Vec<f64>> = (0..lat.m).map(|k| lat.coset_shift(k)).collect();
    let comps: Vec<Vec<Complex64>> = (0..lat.m)
        .map(|k| {
            crate::exec::map_indexed(cell.len(), |flat| {
                let x = cell.x_point(flat);
                let y: Vec<f64> = x.iter().zip(&shifts[k]).map(|(a, b)| a + b).collect();
                f.eval_periodized(p, &y)
            })
        })
        .collect();
    Ok(PatchVector { cell, comps })
}
