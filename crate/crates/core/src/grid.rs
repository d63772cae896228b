//! Uniform grids, tabulated complex functions, midpoint quadrature and
//! exponential-basis sums.
//!
//! Grid points follow the midpoint convention `lo + (i + 1/2)/R`, which makes
//! the midpoint rule integrate full-period complex exponentials to exactly
//! zero. That is what keeps the orthonormality and Fourier-coefficient tests
//! crisp: products of band-limited integrands are integrated exactly as long
//! as no combined frequency reaches a multiple of `R`.

use num_complex::Complex64;

use crate::error::{Error, Result};

const TAU: f64 = std::f64::consts::TAU;

/// Uniform midpoint grid over an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lo: Vec<f64>,
    /// Samples per unit length, shared by all axes.
    pub res: u32,
    /// Points per axis.
    pub npts: Vec<usize>,
}

impl Grid {
    /// Grid over `[lo, hi)` with `res` samples per unit length.
    pub fn new(lo: &[f64], hi: &[f64], res: u32) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::ShapeMismatch("grid corners must match".into()));
        }
        if res < 2 {
            return Err(Error::Validation("grid resolution must be >= 2".into()));
        }
        let npts: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| ((b - a) * res as f64).round() as i64)
            .map(|n| n.max(0) as usize)
            .collect();
        if npts.contains(&0) {
            return Err(Error::Validation(
                "grid box must have positive volume".into(),
            ));
        }
        Ok(Self {
            lo: lo.to_vec(),
            res,
            npts,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn step(&self) -> f64 {
        1.0 / self.res as f64
    }

    pub fn hi(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.npts)
            .map(|(a, &n)| a + n as f64 * self.step())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.npts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of the point with multi-index `idx`.
    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .zip(&self.lo)
            .map(|(&i, a)| a + (i as f64 + 0.5) * self.step())
            .collect()
    }

    /// Decodes a flat index (row-major, last axis fastest).
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dim()];
        for ax in (0..self.dim()).rev() {
            idx[ax] = flat % self.npts[ax];
            flat /= self.npts[ax];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for ax in 0..self.dim() {
            flat = flat * self.npts[ax] + idx[ax];
        }
        flat
    }

    /// Volume element of one grid cell.
    pub fn weight(&self) -> f64 {
        self.step().powi(self.dim() as i32)
    }
}

/// Tabulated complex function on a [`Grid`], optionally periodic.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    /// Period per axis; evaluation folds the argument by it first.
    pub period: Option<Vec<f64>>,
}

impl GridFunction {
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len())
            .map(|flat| f(&grid.point(&grid.unflatten(flat))))
            .collect();
        Self {
            grid,
            values,
            period: None,
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![Complex64::ZERO; n],
            period: None,
        }
    }

    pub fn with_period(mut self, period: Vec<f64>) -> Self {
        self.period = Some(period);
        self
    }

    /// Multilinear interpolation; zero outside the domain for aperiodic
    /// functions, folded by the period otherwise.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let d = self.grid.dim();
        let mut pos = vec![0.0f64; d];
        for ax in 0..d {
            let mut v = x[ax];
            if let Some(period) = &self.period {
                let p = period[ax];
                v = self.grid.lo[ax] + (v - self.grid.lo[ax]).rem_euclid(p);
            }
            pos[ax] = (v - self.grid.lo[ax]) * self.grid.res as f64 - 0.5;
        }
        // Gather the 2^d corner stencil.
        let mut base = vec![0i64; d];
        let mut frac = vec![0.0f64; d];
        for ax in 0..d {
            let f = pos[ax].floor();
            base[ax] = f as i64;
            frac[ax] = pos[ax] - f;
        }
        let mut acc = Complex64::ZERO;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            let mut inside = true;
            for ax in 0..d {
                let hi_side = (corner >> ax) & 1 == 1;
                let mut i = base[ax] + if hi_side { 1 } else { 0 };
                w *= if hi_side { frac[ax] } else { 1.0 - frac[ax] };
                let n = self.grid.npts[ax] as i64;
                if let Some(period) = &self.period {
                    let span = (period[ax] * self.grid.res as f64).round() as i64;
                    if span > 0 && span <= n {
                        i = i.rem_euclid(span);
                    }
                }
                if i < 0 || i >= n {
                    inside = false;
                    break;
                }
                flat = flat * self.grid.npts[ax] + i as usize;
            }
            if inside && w != 0.0 {
                acc += w * self.values[flat];
            }
        }
        acc
    }

    /// L2 norm squared over the whole grid (midpoint rule).
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.weight()
    }
}

/// Midpoint-rule integral of `f` over a half-open `box = [lo, hi)`.
///
/// The box must lie inside the tabulated domain (after periodic folding);
/// accuracy is `O(R^-2)` for C2 integrands and exact for full-period
/// exponentials.
pub fn quadrature(f: &GridFunction, lo: &[f64], hi: &[f64]) -> Result<Complex64> {
    let g = &f.grid;
    let d = g.dim();
    if lo.len() != d || hi.len() != d {
        return Err(Error::ShapeMismatch("quadrature box dimension".into()));
    }
    if f.period.is_none() {
        let ghi = g.hi();
        let eps = 1e-9;
        for ax in 0..d {
            if lo[ax] < g.lo[ax] - eps || hi[ax] > ghi[ax] + eps {
                return Err(Error::DomainMismatch(format!(
                    "box [{:?}, {:?}) outside grid domain",
                    lo, hi
                )));
            }
        }
    }
    let mut acc = Complex64::ZERO;
    for flat in 0..g.len() {
        let p = g.point(&g.unflatten(flat));
        if (0..d).all(|ax| p[ax] >= lo[ax] && p[ax] < hi[ax]) {
            acc += f.values[flat];
        }
    }
    Ok(acc * g.weight())
}

/// Exponential basis `e_alpha(x) = N^{d/2} exp(-2 pi i N alpha . x)`.
pub fn exp_basis(alpha: &[i64], n_sub: usize, x: &[f64]) -> Complex64 {
    let d = alpha.len();
    let dot: f64 = alpha.iter().zip(x).map(|(&a, &v)| a as f64 * v).sum();
    let scale = (n_sub as f64).powf(d as f64 / 2.0);
    scale * Complex64::cis(-TAU * n_sub as f64 * dot)
}

/// Weighted sums `h^d * sum_points f(x) exp(+2 pi i w . x)` for a list of
/// integer frequency vectors `w`, i.e. midpoint-rule Fourier-type integrals.
///
/// Direct evaluation per frequency in 1D; in 2D the inner axis is transformed
/// once per distinct inner frequency, which brings the cost down from
/// `O(|freqs| . points)` to `O(W2 . points + |freqs| . n1)`.
pub fn fourier_sums(f: &GridFunction, freqs: &[Vec<i64>]) -> Vec<Complex64> {
    let g = &f.grid;
    match g.dim() {
        1 => {
            let axis = phase_axis(g, 0);
            freqs
                .iter()
                .map(|w| {
                    let mut acc = Complex64::ZERO;
                    for (i, v) in f.values.iter().enumerate() {
                        acc += v * axis.phase(w[0], i);
                    }
                    acc * g.weight()
                })
                .collect()
        }
        2 => fourier_sums_2d(f, freqs),
        _ => {
            let axes: Vec<PhaseAxis> = (0..g.dim()).map(|ax| phase_axis(g, ax)).collect();
            freqs
                .iter()
                .map(|w| {
                    let mut acc = Complex64::ZERO;
                    for flat in 0..g.len() {
                        let idx = g.unflatten(flat);
                        let mut ph = Complex64::ONE;
                        for ax in 0..g.dim() {
                            ph *= axes[ax].phase(w[ax], idx[ax]);
                        }
                        acc += f.values[flat] * ph;
                    }
                    acc * g.weight()
                })
                .collect()
        }
    }
}

/// Pointwise synthesis `sum_w amps[w] exp(+2 pi i w . x)` over the grid,
/// the adjoint counterpart of [`fourier_sums`] (same separable 2D path).
pub fn fourier_synthesis(grid: &Grid, freqs: &[Vec<i64>], amps: &[Complex64]) -> Vec<Complex64> {
    assert_eq!(freqs.len(), amps.len());
    match grid.dim() {
        2 => {
            let (n0, n1) = (grid.npts[0], grid.npts[1]);
            let ax0 = phase_axis(grid, 0);
            let ax1 = phase_axis(grid, 1);
            // accumulate per distinct w0 the partial synthesis over axis 1
            let mut by_w0: std::collections::BTreeMap<i64, Vec<usize>> = Default::default();
            for (i, w) in freqs.iter().enumerate() {
                by_w0.entry(w[0]).or_default().push(i);
            }
            let keys: Vec<i64> = by_w0.keys().copied().collect();
            let rows = crate::exec::map_indexed(keys.len(), |ki| {
                let mut row = vec![Complex64::ZERO; n1];
                for &i in &by_w0[&keys[ki]] {
                    let (w, a) = (&freqs[i], amps[i]);
                    for (i1, r) in row.iter_mut().enumerate() {
                        *r += a * ax1.phase(w[1], i1);
                    }
                }
                row
            });
            let mut out = vec![Complex64::ZERO; grid.len()];
            for (ki, row) in keys.iter().zip(&rows) {
                for i0 in 0..n0 {
                    let ph = ax0.phase(*ki, i0);
                    let base = i0 * n1;
                    for i1 in 0..n1 {
                        out[base + i1] += ph * row[i1];
                    }
                }
            }
            out
        }
        _ => {
            let axes: Vec<PhaseAxis> = (0..grid.dim()).map(|ax| phase_axis(grid, ax)).collect();
            crate::exec::map_indexed(grid.len(), |flat| {
                let idx = grid.unflatten(flat);
                let mut acc = Complex64::ZERO;
                for (w, a) in freqs.iter().zip(amps) {
                    let mut ph = Complex64::ONE;
                    for ax in 0..grid.dim() {
                        ph *= axes[ax].phase(w[ax], idx[ax]);
                    }
                    acc += a * ph;
                }
                acc
            })
        }
    }
}

/// Per-axis phase helper: `exp(2 pi i w x_i)` with `x_i = lo + (i+1/2) h`.
struct PhaseAxis {
    lo: f64,
    step: f64,
}

fn phase_axis(g: &Grid, ax: usize) -> PhaseAxis {
    PhaseAxis {
        lo: g.lo[ax],
        step: g.step(),
    }
}

impl PhaseAxis {
    fn phase(&self, w: i64, i: usize) -> Complex64 {
        let x = self.lo + (i as f64 + 0.5) * self.step;
        Complex64::cis(TAU * w as f64 * x)
    }

    fn table(&self, w: i64, n: usize) -> Vec<Complex64> {
        (0..n).map(|i| self.phase(w, i)).collect()
    }
}

fn fourier_sums_2d(f: &GridFunction, freqs: &[Vec<i64>]) -> Vec<Complex64> {
    let g = &f.grid;
    let (n0, n1) = (g.npts[0], g.npts[1]);
    let ax0 = phase_axis(g, 0);
    let ax1 = phase_axis(g, 1);

    // Transform the inner axis once per distinct w1.
    let keys: Vec<i64> = {
        let set: std::collections::BTreeSet<i64> = freqs.iter().map(|w| w[1]).collect();
        set.into_iter().collect()
    };
    let rows = crate::exec::map_indexed(keys.len(), |ki| {
        let tab = ax1.table(keys[ki], n1);
        let mut row = vec![Complex64::ZERO; n0];
        for i0 in 0..n0 {
            let base = i0 * n1;
            let mut acc = Complex64::ZERO;
            for i1 in 0..n1 {
                acc += f.values[base + i1] * tab[i1];
            }
            row[i0] = acc;
        }
        row
    });
    let rows_by_key: std::collections::BTreeMap<i64, Vec<Complex64>> =
        keys.iter().copied().zip(rows).collect();

    freqs
        .iter()
        .map(|w| {
            let row = &rows_by_key[&w[1]];
            let mut acc = Complex64::ZERO;
            for (i0, r) in row.iter().enumerate() {
                acc += r * ax0.phase(w[0], i0);
            }
            acc * g.weight()
        })
        .collect()
}

/// Writes a grid function as a CSV table `(i0,..,i{d-1},re,im)` with a
/// `#`-prefixed header describing the grid.
pub fn write_csv(f: &GridFunction, w: &mut impl std::io::Write) -> std::io::Result<()> {
    let g = &f.grid;
    writeln!(w, "# dim={}", g.dim())?;
    writeln!(
        w,
        "# lo={}",
        g.lo.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    writeln!(w, "# res={}", g.res)?;
    writeln!(
        w,
        "# npts={}",
        g.npts
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    )?;
    if let Some(p) = &f.period {
        writeln!(
            w,
            "# period={}",
            p.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )?;
    }
    for flat in 0..g.len() {
        let idx = g.unflatten(flat);
        let v = f.values[flat];
        let cols: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        writeln!(w, "{},{},{}", cols.join(","), v.re, v.im)?;
    }
    Ok(())
}

/// Reads a grid function written by [`write_csv`].
pub fn read_csv(path: &str, text: &str) -> Result<GridFunction> {
    let mut lo = None;
    let mut res = None;
    let mut npts: Option<Vec<usize>> = None;
    let mut dim = None;
    let mut period = None;
    let mut rows: Vec<(Vec<usize>, Complex64)> = Vec::new();
    let parse_err = |detail: &str| Error::Parse {
        path: path.to_string(),
        detail: detail.to_string(),
    };
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("dim=") {
                dim = Some(v.parse::<usize>().map_err(|e| parse_err(&e.to_string()))?);
            } else if let Some(v) = rest.strip_prefix("lo=") {
                lo = Some(parse_f64_list(v).map_err(|e| parse_err(&e))?);
            } else if let Some(v) = rest.strip_prefix("res=") {
                res = Some(v.parse::<u32>().map_err(|e| parse_err(&e.to_string()))?);
            } else if let Some(v) = rest.strip_prefix("npts=") {
                npts = Some(
                    v.split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| parse_err(&e.to_string()))?,
                );
            } else if let Some(v) = rest.strip_prefix("period=") {
                period = Some(parse_f64_list(v).map_err(|e| parse_err(&e))?);
            }
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let d = dim.ok_or_else(|| parse_err("data row before dim header"))?;
        if cols.len() != d + 2 {
            return Err(parse_err(&format!(
                "expected {} columns, got {}",
                d + 2,
                cols.len()
            )));
        }
        let idx: Vec<usize> = cols[..d]
            .iter()
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(&e.to_string()))?;
        let re: f64 = cols[d]
            .trim()
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(&e.to_string()))?;
        let im: f64 = cols[d + 1]
            .trim()
            .parse()
            .map_err(|e: std::num::ParseFloatError| parse_err(&e.to_string()))?;
        rows.push((idx, Complex64::new(re, im)));
    }
    let (lo, res, npts) = match (lo, res, npts) {
        (Some(lo), Some(res), Some(npts)) => (lo, res, npts),
        _ => return Err(parse_err("missing lo/res/npts header")),
    };
    let grid = Grid {
        lo,
        res,
        npts: npts.clone(),
    };
    let mut values = vec![Complex64::ZERO; grid.len()];
    for (idx, v) in rows {
        if idx.iter().zip(&npts).any(|(&i, &n)| i >= n) {
            return Err(parse_err("index out of range"));
        }
        values[grid.flatten(&idx)] = v;
    }
    Ok(GridFunction {
        grid,
        values,
        period,
    })
}

fn parse_f64_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect()
}
