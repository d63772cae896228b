//! Independent oracles for the identities: the master coset identity, the
//! sampling identity, stability estimation, the adversarial spectral probes
//! and the four-way equivalence check.
//!
//! Each oracle recomputes its left-hand side by direct quadrature against
//! tabulated data and its right-hand side through the modulation machinery,
//! so an error in either route shows up as a mismatch.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::filters::{apply_to_element, FilterBank};
use crate::grid::{fourier_sums, GridFunction};
use crate::lattice::SamplingLattice;
use crate::modulation::{ModulationField, SpectralBounds};
use crate::patch::{vectorize_patch, IndexBox, PatchFunction, PatchVector};
use crate::reconstruction::{build_kernels, reconstruct, take_samples, ReconstructionKernelSet};
use crate::sispace::{synthesis_operator, CoefficientArray, GeneratorSet, SpaceElement};

/// Inner products `<F, conj(g_j) chi_p e_alpha(M^T .)>` for all `alpha` in a
/// box, computed by quadrature over the subcube grid.
fn modulated_inner_products(
    f: &PatchFunction,
    field: &ModulationField,
    j: usize,
    p: usize,
    bx: &IndexBox,
) -> Vec<Complex64> {
    let piece = f.piece(p);
    let values: Vec<Complex64> = (0..piece.grid.len())
        .map(|flat| {
            let x = piece.grid.point(&piece.grid.unflatten(flat));
            piece.values[flat] * field.source.eval(j, p, field.lat.n_sub, &x)
        })
        .collect();
    let product = GridFunction {
        grid: piece.grid.clone(),
        values,
        period: None,
    };
    let n = field.lat.n_sub as i64;
    let freqs: Vec<Vec<i64>> = bx
        .iter()
        .map(|alpha| {
            field
                .lat
                .mul_m_int(&alpha)
                .into_iter()
                .map(|v| v * n)
                .collect()
        })
        .collect();
    let scale = (field.lat.n_sub as f64).powf(field.lat.dim as f64 / 2.0);
    fourier_sums(&product, &freqs)
        .into_iter()
        .map(|v| v * scale)
        .collect()
}

/// The master oracle: frame-side coefficient energy versus
/// `(1/m) ||G_p F_p||^2` over the cell.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
}

pub fn check_identity(
    f: &PatchFunction,
    p: usize,
    field: &ModulationField,
    k: i64,
) -> Result<IdentityCheck> {
    let bx = IndexBox::new(field.lat.dim, k);
    let lhs: f64 = (0..field.n_sys)
        .map(|j| {
            modulated_inner_products(f, field, j, p, &bx)
                .iter()
                .map(|v| v.norm_sqr())
                .sum::<f64>()
        })
        .sum();

    let vecf = vectorize_patch(f, p, &field.lat, field.cell.res)?;
    let w = vecf.cell.weight();
    let m = field.lat.m;
    let rhs_terms = exec::map_indexed(vecf.cell.len(), |flat| {
        let v: Vec<Complex64> = (0..m).map(|k| vecf.comps[k][flat]).collect();
        field
            .apply_at(p, flat, &v)
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
    });
    let rhs = rhs_terms.iter().sum::<f64>() * w / m as f64;
    let rel_err = (lhs - rhs).abs() / rhs.abs().max(1e-300);
    Ok(IdentityCheck { lhs, rhs, rel_err })
}

/// Sampling identity: `L_j f^{(p)}(M beta)` against the inner product with
/// the modulated symbol.
#[derive(Debug, Clone, Serialize)]
pub struct SamplingCheck {
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs_re: f64,
    pub rhs_im: f64,
    pub abs_err: f64,
}

pub fn check_sampling_identity(
    f: &SpaceElement,
    bank: &FilterBank,
    field: &ModulationField,
    j: usize,
    p: usize,
    beta: &[i64],
    res: u32,
) -> Result<SamplingCheck> {
    let source = f.source.as_ref().ok_or(Error::MissingProvenance)?;
    let t = field.lat.mul_m(beta);
    let lhs = apply_to_element(bank, j, f, Some(p), &t, res);
    let bx = IndexBox::new(
        field.lat.dim,
        beta.iter().map(|b| b.abs()).max().unwrap_or(0),
    );
    let ips = modulated_inner_products(source, field, j, p, &bx);
    let rhs = ips[bx.flatten(beta)];
    Ok(SamplingCheck {
        lhs_re: lhs.re,
        lhs_im: lhs.im,
        rhs_re: rhs.re,
        rhs_im: rhs.im,
        abs_err: (lhs - rhs).norm(),
    })
}

/// Empirical stability constants over a random ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub c1_est: f64,
    pub c2_est: f64,
    pub ensemble_size: usize,
    /// Predicted envelope `(A_G/m) / B_riesz` for `C1`.
    pub c1_envelope: f64,
    /// Predicted envelope `(B_G/m) / A_riesz` for `C2`.
    pub c2_envelope: f64,
    pub within_envelopes: bool,
    /// Ratio of the explicit null-direction probe, when one was added.
    pub null_ratio: Option<f64>,
}

pub struct StabilityInputs<'a> {
    pub gens: &'a std::sync::Arc<GeneratorSet>,
    pub bank: &'a FilterBank,
    pub lat: &'a SamplingLattice,
    pub k_coeff: i64,
    pub k_samp: i64,
    pub res: u32,
    pub eval_res: u32,
    pub seed: u64,
}

/// Sample-energy over `||f||^2` for one element.
fn stability_ratio(inp: &StabilityInputs, f: &SpaceElement) -> Result<f64> {
    let samples = take_samples(f, inp.bank, inp.lat, inp.k_samp, inp.res)?;
    let norm = f.norm_sq(inp.eval_res)?;
    Ok(samples.energy() / norm.max(1e-300))
}

pub fn estimate_stability(
    inp: &StabilityInputs,
    ensemble: usize,
    bounds: &SpectralBounds,
    riesz_a: f64,
    riesz_b: f64,
    envelope_slack: f64,
    null_probe: Option<&SpaceElement>,
) -> Result<StabilityReport> {
    let bx = IndexBox::new(inp.lat.dim, inp.k_coeff);
    let (lo, hi) = crate::sispace::auto_box(inp.gens, inp.k_coeff);
    let ratios: Vec<Result<f64>> = exec::map_indexed(ensemble, |i| {
        let mut rng = exec::member_rng(inp.seed, 0x57AB + i as u64);
        let coeffs = CoefficientArray::random_unit(inp.gens.n_gens(), bx, &mut rng);
        let f = crate::sispace::synthesize(inp.gens, coeffs, &lo, &hi)?;
        stability_ratio(inp, &f)
    });
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::NEG_INFINITY;
    for r in ratios {
        let r = r?;
        c1 = c1.min(r);
        c2 = c2.max(r);
    }
    let null_ratio = match null_probe {
        Some(f) => {
            let r = stability_ratio(inp, f)?;
            c1 = c1.min(r);
            Some(r)
        }
        None => None,
    };
    let m = inp.lat.m as f64;
    let c1_envelope = (bounds.a_g / m) / riesz_b.max(1e-300);
    let c2_envelope = (bounds.b_g / m) / riesz_a.max(1e-300);
    let within = c2 <= c2_envelope * (1.0 + envelope_slack)
        && c1 >= c1_envelope * (1.0 - envelope_slack) - 1e-12;
    Ok(StabilityReport {
        c1_est: c1,
        c2_est: c2,
        ensemble_size: ensemble,
        c1_envelope,
        c2_envelope,
        within_envelopes: within,
        null_ratio,
    })
}

/// Eigenvector of `G_p^* G_p` (smallest or largest eigenvalue) at every cell
/// grid point, with greedy phase alignment along the scan.
fn aligned_eigvec_field(field: &ModulationField, p: usize, largest: bool) -> Vec<Vec<Complex64>> {
    let m = field.lat.m;
    let npts = field.n_points();
    let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(npts);
    for flat in 0..npts {
        let (vals, vecs) = field.gram_eigen_at(p, flat);
        let mut idx = 0usize;
        for i in 1..m {
            let better = if largest {
                vals[i] > vals[idx]
            } else {
                vals[i] < vals[idx]
            };
            if better {
                idx = i;
            }
        }
        let mut v: Vec<Complex64> = (0..m).map(|r| vecs[(r, idx)]).collect();
        let phase = if let Some(prev) = out.last() {
            let s: Complex64 = prev.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            if s.norm() > 1e-9 {
                s.conj() / s.norm()
            } else {
                Complex64::ONE
            }
        } else {
            let lead = v
                .iter()
                .cloned()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap_or(Complex64::ONE);
            if lead.norm() > 1e-12 {
                lead.conj() / lead.norm()
            } else {
                Complex64::ONE
            }
        };
        for c in v.iter_mut() {
            *c *= phase;
        }
        out.push(v);
    }
    out
}

/// Smooth periodic bump centered at `c` in parameter space.
fn bump(u: &[f64], c: &[f64], power: i32) -> f64 {
    let mut w = 1.0;
    for (ui, ci) in u.iter().zip(c) {
        w *= ((1.0 + (std::f64::consts::TAU * (ui - ci)).cos()) / 2.0).powi(power)
    }
    w
}

/// Builds the vector field `bump . v` where `v` is the pointwise extreme
/// eigenvector at `p`, centered at the arg-extremum.
fn eigvec_probe_field(
    field: &ModulationField,
    p: usize,
    center_flat: usize,
    largest: bool,
    power: i32,
) -> PatchVector {
    let vecs = aligned_eigvec_field(field, p, largest);
    let center = field.cell.u_point(center_flat);
    let m = field.lat.m;
    let npts = field.n_points();
    let comps: Vec<Vec<Complex64>> = (0..m)
        .map(|k| {
            (0..npts)
                .map(|flat| {
                    let u = field.cell.u_point(flat);
                    vecs[flat][k] * bump(&u, &center, power)
                })
                .collect()
        })
        .collect();
    PatchVector {
        cell: field.cell.clone(),
        comps,
    }
}

/// Frame-side ratio of a cell vector field:
/// `(1/m) ||G F||^2_cell / ||F||^2_cell`, the all-alpha coefficient energy
/// per unit norm of the underlying `F`.
pub fn cell_frame_ratio(field: &ModulationField, p: usize, vecf: &PatchVector) -> f64 {
    let m = field.lat.m;
    let num: f64 = exec::map_indexed(vecf.cell.len(), |flat| {
        let v: Vec<Complex64> = (0..m).map(|k| vecf.comps[k][flat]).collect();
        field
            .apply_at(p, flat, &v)
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
    })
    .iter()
    .sum();
    let den: f64 = vecf
        .comps
        .iter()
        .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>())
        .sum();
    num / (m as f64 * den.max(1e-300))
}

/// Adversarial Bessel-tightness probe: the top-eigenvector field around the
/// argmax should realize nearly `B_G / m`.
#[derive(Debug, Clone, Serialize)]
pub struct TightnessProbe {
    pub achieved_ratio: f64,
    pub bound: f64,
    pub fraction: f64,
}

pub fn tightness_probe(field: &ModulationField, bounds: &SpectralBounds) -> TightnessProbe {
    let (p, flat, _) = bounds.argmax.clone();
    let probe = eigvec_probe_field(field, p, flat, true, 8);
    let achieved = cell_frame_ratio(field, p, &probe);
    let bound = bounds.b_g / field.lat.m as f64;
    TightnessProbe {
        achieved_ratio: achieved,
        bound,
        fraction: achieved / bound.max(1e-300),
    }
}

/// The explicit null-direction element from the pointwise kernel of `G_p`,
/// synthesized back into the space.
pub fn null_direction_element(
    field: &ModulationField,
    bounds: &SpectralBounds,
    gens: &std::sync::Arc<GeneratorSet>,
    k_coeff: i64,
    res: u32,
) -> Result<SpaceElement> {
    let (p, flat, _) = bounds.argmin.clone();
    let probe = eigvec_probe_field(field, p, flat, false, 2);
    let patch = probe.unfold_to_patch(&field.lat, p, res)?;
    synthesis_operator(gens, &patch, k_coeff)
}

/// Dual-frame identity on the unit cube: relative L2 residual of
/// `F - m sum_{j,p,|alpha|<=k} <F, conj(g_{j,p}) e_alpha(M^T .)>
/// d_j^p(.) e_alpha(M^T .)`, with the dual rows tabulated on the subcube
/// grids (`duals[p]` as returned by
/// [`crate::reconstruction::dual_rows_on_subcube`]).
pub fn dual_frame_identity(
    f: &PatchFunction,
    field: &ModulationField,
    duals: &[Vec<Vec<Complex64>>],
    k: i64,
) -> Result<f64> {
    let lat = &field.lat;
    let bx = IndexBox::new(lat.dim, k);
    let n = lat.n_sub as i64;
    let scale = (lat.n_sub as f64).powf(lat.dim as f64 / 2.0);
    // e_alpha(M^T y) = N^{d/2} exp(-2 pi i N (M alpha) . y)
    let freqs: Vec<Vec<i64>> = bx
        .iter()
        .map(|alpha| lat.mul_m_int(&alpha).into_iter().map(|v| -v * n).collect())
        .collect();
    let m_factor = lat.m as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for p in 0..lat.n_sub {
        let piece = f.piece(p);
        let mut synth = vec![Complex64::ZERO; piece.grid.len()];
        for j in 0..field.n_sys {
            let ips = modulated_inner_products(f, field, j, p, &bx);
            let amps: Vec<Complex64> = ips.iter().map(|v| v * scale).collect();
            let tj = crate::grid::fourier_synthesis(&piece.grid, &freqs, &amps);
            for (flat, t) in tj.iter().enumerate() {
                synth[flat] += m_factor * duals[p][flat][j] * t;
            }
        }
        let w = piece.grid.weight();
        for (flat, v) in piece.values.iter().enumerate() {
            num += (v - synth[flat]).norm_sqr() * w;
            den += v.norm_sqr() * w;
        }
    }
    Ok((num / den.max(1e-300)).sqrt())
}

/// Verdicts for the four equivalent statements.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    /// (a) `A_G > 0` at tolerance
    pub a_spectral: bool,
    /// (b) empirical stable sampler
    pub b_stable: bool,
    /// (c) bounded dual row with small residual
    pub c_dual: bool,
    /// (d) frame expansion reconstructs
    pub d_reconstructs: bool,
    pub agree: bool,
}

impl EquivalenceReport {
    pub fn new(a: bool, b: bool, c: bool, d: bool) -> Self {
        Self {
            a_spectral: a,
            b_stable: b,
            c_dual: c,
            d_reconstructs: d,
            agree: (a == b) && (b == c) && (c == d),
        }
    }
}

/// Interior relative L2 distance between two elements.
pub fn interior_rel_error(
    f: &SpaceElement,
    f_hat: &SpaceElement,
    lo: &[f64],
    hi: &[f64],
    res: u32,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for q in 0..f.gens.n_comp {
        let a = f.tabulate(None, q, lo, hi, res)?;
        let b = f_hat.tabulate(None, q, lo, hi, res)?;
        for (va, vb) in a.values.iter().zip(&b.values) {
            num += (va - vb).norm_sqr();
            den += va.norm_sqr();
        }
    }
    if den <= 1e-300 {
        // zero target: fall back to absolute error
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}

/// End-to-end reconstruction error for one coefficient draw.
pub struct ReconInputs<'a> {
    pub gens: &'a std::sync::Arc<GeneratorSet>,
    pub bank: &'a FilterBank,
    pub lat: &'a SamplingLattice,
    pub kernels: &'a ReconstructionKernelSet,
    pub k_coeff: i64,
    pub k_samp: i64,
    pub res: u32,
    pub eval_res: u32,
    pub interior_lo: Vec<f64>,
    pub interior_hi: Vec<f64>,
}

pub fn reconstruction_error(inp: &ReconInputs, f: &SpaceElement) -> Result<f64> {
    let samples = take_samples(f, inp.bank, inp.lat, inp.k_samp, inp.res)?;
    let f_hat = reconstruct(&samples, inp.kernels, inp.lat)?;
    interior_rel_error(f, &f_hat, &inp.interior_lo, &inp.interior_hi, inp.eval_res)
}

/// Max reconstruction error over a seeded random ensemble.
pub fn reconstruction_ensemble(inp: &ReconInputs, draws: usize, seed: u64) -> Result<f64> {
    let bx = IndexBox::new(inp.lat.dim, inp.k_coeff);
    let (lo, hi) = crate::sispace::auto_box(inp.gens, inp.k_coeff);
    let errs: Vec<Result<f64>> = exec::map_indexed(draws, |i| {
        let mut rng = exec::member_rng(seed, 0xEC0 + i as u64);
        let coeffs = CoefficientArray::random_unit(inp.gens.n_gens(), bx, &mut rng);
        let f = crate::sispace::synthesize(inp.gens, coeffs, &lo, &hi)?;
        reconstruction_error(inp, &f)
    });
    let mut worst = 0.0f64;
    for e in errs {
        worst = worst.max(e?);
    }
    Ok(worst)
}

/// Null-direction witness for non-frame scenarios: near-zero sample energy
/// and a large reconstruction error under the forced pseudo-inverse.
#[derive(Debug, Clone, Serialize)]
pub struct NullWitness {
    pub sample_ratio: f64,
    pub recon_error: f64,
}

pub fn null_witness(
    field: &ModulationField,
    bounds: &SpectralBounds,
    stab: &StabilityInputs,
    k_kernel: i64,
    pinv_floor: f64,
    interior_lo: &[f64],
    interior_hi: &[f64],
) -> Result<NullWitness> {
    let f = null_direction_element(field, bounds, stab.gens, stab.k_coeff, stab.res)?;
    let sample_ratio = stability_ratio(stab, &f)?;
    let kernels = build_kernels(field, stab.gens, k_kernel, stab.res, pinv_floor, true)?;
    let recon = ReconInputs {
        gens: stab.gens,
        bank: stab.bank,
        lat: stab.lat,
        kernels: &kernels,
        k_coeff: stab.k_coeff,
        k_samp: stab.k_samp,
        res: stab.res,
        eval_res: stab.eval_res,
        interior_lo: interior_lo.to_vec(),
        interior_hi: interior_hi.to_vec(),
    };
    let recon_error = reconstruction_error(&recon, &f)?;
    Ok(NullWitness {
        sample_ratio,
        recon_error,
    })
}
