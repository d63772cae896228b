//! The analyze / reconstruct / verify drivers on top of a loaded scenario.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exec;
use crate::filters::{auto_k_sym, build_symbols, FilterBank, SymbolTable};
use crate::grid::GridFunction;
use crate::lattice::SamplingLattice;
use crate::modulation::{
    classify, completeness_test, spectral_bounds_refined, Completeness, FieldSource,
    ModulationField, SpectralBounds, SystemClassification,
};
use crate::patch::{IndexBox, PatchFunction};
use crate::reconstruction::{
    auto_k_samp, build_kernels, dual_rows, pseudo_inverse_field, reconstruct, take_samples,
    SampleSet,
};
use crate::report::*;
use crate::scenario::{ResolvedParams, Scenario};
use crate::sispace::{
    riesz_bounds_estimate, synthesis_operator, synthesize, CoefficientArray, GeneratorSet,
    RieszEstimate,
};
use crate::verify::{
    self, check_identity, check_sampling_identity, tightness_probe, EquivalenceReport, ReconInputs,
    StabilityInputs,
};

/// Everything the analyze step produces; reused by reconstruct and verify.
pub struct Analysis {
    pub scenario: Scenario,
    pub rp: ResolvedParams,
    pub lat: SamplingLattice,
    pub gens: Arc<GeneratorSet>,
    pub bank: FilterBank,
    pub field: ModulationField,
    pub bounds: SpectralBounds,
    pub refined_a_g: f64,
    pub refined_b_g: f64,
    pub refinement_rel_change: f64,
    pub refinement_accepted: bool,
    pub completeness: Completeness,
    pub classification: SystemClassification,
    pub k_sym: i64,
    pub k_samp: i64,
    pub symbol_summary: SymbolSummary,
}

impl Analysis {
    pub fn build(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let rp = scenario.resolved();
        let lat = SamplingLattice::new(scenario.lattice.clone(), scenario.subcubes)?;
        let gens = scenario.build_generators()?;
        let bank = scenario.build_filter_bank()?;
        let k_sym = rp.k_sym.unwrap_or_else(|| auto_k_sym(&bank, &gens));
        let symbols: SymbolTable =
            build_symbols(&bank, &gens, &lat, k_sym, rp.resolution, rp.strict)?;
        let symbol_summary = SymbolSummary {
            k_sym,
            truncated: symbols.truncated,
            ess_sup: (0..bank.n_sys())
                .flat_map(|j| {
                    let per = symbols.ess_sup.clone();
                    let n_sub = symbols.n_sub;
                    (0..n_sub).map(move |p| (j, p, per[j * n_sub + p]))
                })
                .collect(),
        };
        let source = Arc::new(FieldSource::Symbols(symbols));
        let refined = spectral_bounds_refined(&source, &lat, rp.cell_resolution)?;
        let field = ModulationField::build(Arc::clone(&source), &lat, rp.cell_resolution)?;
        let bounds = refined.coarse.clone();
        let completeness = completeness_test(&field, rp.tolerances.tol_rank);
        let classification = classify(
            &bounds,
            bank.n_sys(),
            lat.m,
            &completeness,
            rp.tolerances.blowup_cap,
            rp.tolerances.pinv_floor,
        );
        let k_samp = rp
            .k_samp
            .unwrap_or_else(|| auto_k_samp(&lat, &gens, &bank, rp.k_coeff));
        Ok(Self {
            scenario,
            rp,
            lat,
            gens,
            bank,
            field,
            bounds,
            refined_a_g: refined.fine_a_g,
            refined_b_g: refined.fine_b_g,
            refinement_rel_change: refined.rel_change,
            refinement_accepted: refined.accepted,
            completeness,
            classification,
            k_sym,
            k_samp,
            symbol_summary,
        })
    }

    pub fn analyze_report(&self) -> AnalyzeReport {
        AnalyzeReport {
            schema_version: SCHEMA_VERSION,
            scenario: self.scenario.name.clone(),
            dim: self.lat.dim,
            n_sub: self.lat.n_sub,
            n_comp: self.gens.n_comp,
            n_sys: self.bank.n_sys(),
            m: self.lat.m,
            seed: self.rp.seed,
            symbols: self.symbol_summary.clone(),
            bounds: BoundsSummary {
                a_g: self.bounds.a_g,
                b_g: self.bounds.b_g,
                refined_a_g: self.refined_a_g,
                refined_b_g: self.refined_b_g,
                refinement_rel_change: self.refinement_rel_change,
                refinement_accepted: self.refinement_accepted,
                argmin_x: self.bounds.argmin.2.clone(),
                argmax_x: self.bounds.argmax.2.clone(),
                per_p: self.bounds.per_p.clone(),
            },
            completeness: CompletenessSummary {
                per_p: self.completeness.per_p.clone(),
                all: self.completeness.all,
                worst_sigma_ratio: self.completeness.worst_sigma_ratio,
            },
            classification: self.classification.clone(),
        }
    }

    /// Interior comparison box: working box shrunk by supports plus margin.
    pub fn interior_box(&self) -> (Vec<f64>, Vec<f64>) {
        let supp = self.gens.support_radius().ceil();
        let reach = self.bank.reach().ceil();
        let margin = supp + reach + self.rp.margin_extra;
        let t = (self.rp.k_coeff as f64 + supp - margin).max(1.0);
        (vec![-t; self.lat.dim], vec![t; self.lat.dim])
    }

    fn stability_inputs(&self) -> StabilityInputs<'_> {
        StabilityInputs {
            gens: &self.gens,
            bank: &self.bank,
            lat: &self.lat,
            k_coeff: self.rp.k_coeff,
            k_samp: self.k_samp,
            res: self.rp.resolution,
            eval_res: self.rp.eval_resolution,
            seed: self.rp.seed,
        }
    }
}

/// Runs the analyze command.
pub fn cmd_analyze(scenario: Scenario) -> Result<AnalyzeReport> {
    Ok(Analysis::build(scenario)?.analyze_report())
}

/// Data exported by the reconstruct command.
pub struct ReconstructArtifacts {
    /// Per component of the synthesized `f`.
    pub f_tabs: Vec<GridFunction>,
    pub f_hat_tabs: Vec<GridFunction>,
    /// `(j, p, q, table)` for every kernel component.
    pub kernel_tabs: Vec<(usize, usize, usize, GridFunction)>,
    pub samples: SampleSet,
}

/// Runs the reconstruct command: synthesize a random element, sample it,
/// rebuild it from the samples, report the interior error.
pub fn cmd_reconstruct(
    scenario: Scenario,
    seed_override: Option<u64>,
    force: bool,
) -> Result<(ReconstructReport, ReconstructArtifacts)> {
    let analysis = Analysis::build(scenario)?;
    let rp = &analysis.rp;
    let seed = seed_override.unwrap_or(rp.seed);
    if !analysis.classification.frame && !force {
        return Err(Error::NotLeftInvertible {
            a_g: analysis.bounds.a_g,
            floor: rp.tolerances.pinv_floor,
        });
    }
    let forced = !analysis.classification.frame;
    let kernels = build_kernels(
        &analysis.field,
        &analysis.gens,
        rp.k_kernel,
        rp.resolution,
        rp.tolerances.pinv_floor,
        forced,
    )?;

    let bx = IndexBox::new(analysis.lat.dim, rp.k_coeff);
    let mut rng = exec::member_rng(seed, 0xF00D);
    let coeffs = CoefficientArray::random_unit(analysis.gens.n_gens(), bx, &mut rng);
    let (lo, hi) = crate::sispace::auto_box(&analysis.gens, rp.k_coeff);
    let f = synthesize(&analysis.gens, coeffs, &lo, &hi)?;
    let samples = take_samples(
        &f,
        &analysis.bank,
        &analysis.lat,
        analysis.k_samp,
        rp.resolution,
    )?;
    let f_hat = reconstruct(&samples, &kernels, &analysis.lat)?;

    let (ilo, ihi) = analysis.interior_box();
    let rel_error = verify::interior_rel_error(&f, &f_hat, &ilo, &ihi, rp.eval_resolution)?;
    let pass = if forced {
        // under --force a large error is the expected observation
        rel_error > rp.tolerances.null_recon_min
    } else {
        rel_error <= rp.tolerances.tol_reconstruct
    };

    let mut f_tabs = Vec::new();
    let mut f_hat_tabs = Vec::new();
    for q in 0..analysis.gens.n_comp {
        f_tabs.push(f.tabulate(None, q, &ilo, &ihi, rp.eval_resolution)?);
        f_hat_tabs.push(f_hat.tabulate(None, q, &ilo, &ihi, rp.eval_resolution)?);
    }
    let mut kernel_tabs = Vec::new();
    for j in 0..kernels.n_sys {
        for p in 0..analysis.lat.n_sub {
            let el = kernels.kernel_element(j, p);
            let klo: Vec<f64> = vec![-(rp.k_kernel as f64 + 2.0); analysis.lat.dim];
            let khi: Vec<f64> = vec![rp.k_kernel as f64 + 2.0; analysis.lat.dim];
            for q in 0..analysis.gens.n_comp {
                kernel_tabs.push((
                    j,
                    p,
                    q,
                    el.tabulate(None, q, &klo, &khi, rp.eval_resolution)?,
                ));
            }
        }
    }

    let report = ReconstructReport {
        schema_version: SCHEMA_VERSION,
        scenario: analysis.scenario.name.clone(),
        seed,
        forced,
        frame: analysis.classification.frame,
        k_samp: analysis.k_samp,
        k_kernel: rp.k_kernel,
        interior_lo: ilo,
        interior_hi: ihi,
        rel_error,
        tolerance: rp.tolerances.tol_reconstruct,
        pass,
    };
    let artifacts = ReconstructArtifacts {
        f_tabs,
        f_hat_tabs,
        kernel_tabs,
        samples,
    };
    Ok((report, artifacts))
}

fn cell_checks(lat: &SamplingLattice, mc_points: usize, seed: u64) -> CellCheck {
    let mut rng = exec::member_rng(seed, 0xCE11);
    let mut mc_ok = true;
    for _ in 0..mc_points {
        let y: Vec<f64> = (0..lat.dim)
            .map(|_| rng.random::<f64>() / lat.n_sub as f64)
            .collect();
        let hits = (0..lat.m)
            .filter(|&k| lat.in_cell_mod_period(k, &y))
            .count();
        if hits != 1 {
            mc_ok = false;
        }
    }
    let cells = lat.cells();
    let denom = cells[0].vol_denom;
    let n_pow = (lat.n_sub as u64).pow(lat.dim as u32);
    let volume_exact =
        cells.iter().all(|c| c.vol_denom == denom) && cells.len() as u64 * n_pow == denom;
    CellCheck {
        mc_points,
        mc_ok,
        volume_exact,
    }
}

/// Riesz bounds for the scenario's generator family.
pub fn riesz_estimate(analysis: &Analysis) -> Result<RieszEstimate> {
    let rp = &analysis.rp;
    riesz_bounds_estimate(
        &analysis.gens,
        rp.ensembles.riesz_trials,
        rp.k_coeff,
        rp.eval_resolution,
        rp.seed,
        rp.tolerances.degenerate_cap,
    )
}

fn random_patch(analysis: &Analysis, stream: u64) -> Result<PatchFunction> {
    let rp = &analysis.rp;
    let mut rng = exec::member_rng(rp.seed, stream);
    PatchFunction::random_trig(
        analysis.lat.dim,
        analysis.lat.n_sub,
        rp.resolution,
        rp.band,
        &mut rng,
    )
}

/// The master-identity ensemble: random smooth patches, every subcube.
pub fn identity_ensemble(analysis: &Analysis, draws: usize) -> Result<CheckLine> {
    let rp = &analysis.rp;
    let identity_errs: Vec<Result<f64>> = exec::map_indexed(draws, |i| {
        let f = random_patch(analysis, 0x1D + i as u64)?;
        let mut worst = 0.0f64;
        for p in 0..analysis.lat.n_sub {
            let chk = check_identity(&f, p, &analysis.field, rp.k_fourier)?;
            worst = worst.max(chk.rel_err);
        }
        Ok(worst)
    });
    let mut worst = 0.0f64;
    for e in identity_errs {
        worst = worst.max(e?);
    }
    Ok(CheckLine {
        n: draws,
        worst,
        tolerance: rp.tolerances.tol_identity,
        pass: worst <= rp.tolerances.tol_identity,
    })
}

/// Sampling-identity probes at random `(j, p, beta)`.
pub fn sampling_ensemble(analysis: &Analysis, probes: usize) -> Result<CheckLine> {
    let rp = &analysis.rp;
    let lat = &analysis.lat;
    let sampling_errs: Vec<Result<f64>> = exec::map_indexed(probes, |i| {
        let mut rng = exec::member_rng(rp.seed, 0x5A + i as u64);
        let fp = random_patch(analysis, 0x5A00 + i as u64)?;
        let f = synthesis_operator(&analysis.gens, &fp, rp.k_coeff)?;
        let j = rng.random_range(0..analysis.bank.n_sys());
        let p = rng.random_range(0..lat.n_sub);
        let beta: Vec<i64> = (0..lat.dim).map(|_| rng.random_range(-3..=3)).collect();
        let chk = check_sampling_identity(
            &f,
            &analysis.bank,
            &analysis.field,
            j,
            p,
            &beta,
            rp.resolution,
        )?;
        Ok(chk.abs_err)
    });
    let mut worst = 0.0f64;
    for e in sampling_errs {
        worst = worst.max(e?);
    }
    Ok(CheckLine {
        n: probes,
        worst,
        tolerance: rp.tolerances.tol_sampling,
        pass: worst <= rp.tolerances.tol_sampling,
    })
}

/// Runs the verify command.
pub fn cmd_verify(scenario: Scenario) -> Result<VerifyReport> {
    verify_analysis(&Analysis::build(scenario)?)
}

/// Runs every oracle against an already-built analysis.
pub fn verify_analysis(analysis: &Analysis) -> Result<VerifyReport> {
    let rp = analysis.rp.clone();
    let tol = &rp.tolerances;
    let lat = &analysis.lat;

    let cells = cell_checks(lat, rp.ensembles.mc_points, rp.seed);
    let identity = identity_ensemble(analysis, rp.ensembles.identity_draws)?;
    let sampling = sampling_ensemble(analysis, rp.ensembles.sampling_probes)?;

    // Riesz sandwich for the synthesis operator
    let riesz = riesz_estimate(analysis)?;
    let sdraws = rp.ensembles.sandwich_draws;
    let ratios: Vec<Result<f64>> = exec::map_indexed(sdraws, |i| {
        let fp = random_patch(analysis, 0x3A00 + i as u64)?;
        let f = synthesis_operator(&analysis.gens, &fp, rp.k_coeff)?;
        let tf = f.norm_sq(rp.eval_resolution)?;
        let nf = fp.norm_sq();
        Ok(tf / nf.max(1e-300))
    });
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    for r in ratios {
        let r = r?;
        min_ratio = min_ratio.min(r);
        max_ratio = max_ratio.max(r);
    }
    let sandwich_pass = min_ratio >= riesz.a_lo * (1.0 - tol.sandwich_slack)
        && max_ratio <= riesz.b_hi * (1.0 + tol.sandwich_slack);
    let sandwich = SandwichCheck {
        draws: sdraws,
        a_lo: riesz.a_lo,
        b_hi: riesz.b_hi,
        gram_min: riesz.gram_min,
        gram_max: riesz.gram_max,
        min_ratio,
        max_ratio,
        slack: tol.sandwich_slack,
        pass: sandwich_pass,
    };

    // Bessel bound over random elements (sample energy per unit ||F||^2)
    let bdraws = rp.ensembles.bessel_draws;
    let bx = IndexBox::new(lat.dim, rp.k_coeff);
    let (blo, bhi_box) = crate::sispace::auto_box(&analysis.gens, rp.k_coeff);
    let bessel_ratios: Vec<Result<f64>> = exec::map_indexed(bdraws, |i| {
        let mut rng = exec::member_rng(rp.seed, 0xBE55 + i as u64);
        let coeffs = CoefficientArray::random_unit(analysis.gens.n_gens(), bx, &mut rng);
        let f = synthesize(&analysis.gens, coeffs, &blo, &bhi_box)?;
        let samples = take_samples(&f, &analysis.bank, lat, analysis.k_samp, rp.resolution)?;
        Ok(samples.energy())
    });
    let mut bessel_max = 0.0f64;
    for r in bessel_ratios {
        bessel_max = bessel_max.max(r?);
    }
    let bessel_bound = analysis.classification.bessel_bound;
    let probe = tightness_probe(&analysis.field, &analysis.bounds);
    let bessel = BesselCheck {
        draws: bdraws,
        max_ratio: bessel_max,
        bound: bessel_bound,
        slack: tol.bessel_slack,
        pass: bessel_max <= bessel_bound * (1.0 + tol.bessel_slack),
        tightness_pass: probe.fraction >= tol.tightness_frac,
        tightness: probe,
        tightness_frac: tol.tightness_frac,
    };

    // dual rows (frame scenarios only)
    let dual = if analysis.classification.frame {
        let pinv = pseudo_inverse_field(&analysis.field, &analysis.bounds, tol.pinv_floor, false)?;
        let duals = dual_rows(&pinv, &analysis.field);
        Some(DualCheck {
            residual: duals.residual_max,
            max_modulus: duals.max_modulus,
            tolerance: tol.dual_residual,
            pass: duals.residual_max <= tol.dual_residual && duals.max_modulus < tol.blowup_cap,
        })
    } else {
        None
    };

    // dual-frame identity on the unit cube (frame scenarios)
    let dual_frame = if analysis.classification.frame {
        let subcube_duals: Vec<Vec<Vec<num_complex::Complex64>>> = (0..lat.n_sub)
            .map(|p| {
                crate::reconstruction::dual_rows_on_subcube(
                    &analysis.field,
                    p,
                    rp.resolution,
                    tol.pinv_floor,
                    false,
                )
                .map(|(_, rows)| rows)
            })
            .collect::<Result<_>>()?;
        let draws = rp.ensembles.recon_draws;
        let errs: Vec<Result<f64>> = exec::map_indexed(draws, |i| {
            let f = random_patch(analysis, 0xDF + i as u64)?;
            verify::dual_frame_identity(&f, &analysis.field, &subcube_duals, rp.k_fourier)
        });
        let mut worst = 0.0f64;
        for e in errs {
            worst = worst.max(e?);
        }
        Some(CheckLine {
            n: draws,
            worst,
            tolerance: tol.tol_identity,
            pass: worst <= tol.tol_identity,
        })
    } else {
        None
    };

    // stability ensemble, with the null probe added when incomplete
    let stab_inputs = analysis.stability_inputs();
    let null_element = if analysis.completeness.all {
        None
    } else {
        Some(verify::null_direction_element(
            &analysis.field,
            &analysis.bounds,
            &analysis.gens,
            rp.k_coeff,
            rp.resolution,
        )?)
    };
    let stability_report = verify::estimate_stability(
        &stab_inputs,
        rp.ensembles.stability_ensemble,
        &analysis.bounds,
        riesz.a_lo,
        riesz.b_hi,
        tol.envelope_slack,
        null_element.as_ref(),
    )?;
    let stability = StabilityCheck {
        pass: stability_report.within_envelopes,
        report: stability_report,
    };

    // end-to-end reconstruction / null witness
    let (ilo, ihi) = analysis.interior_box();
    let mut reconstruction = None;
    let mut null_check = None;
    if analysis.classification.frame {
        let kernels = build_kernels(
            &analysis.field,
            &analysis.gens,
            rp.k_kernel,
            rp.resolution,
            tol.pinv_floor,
            false,
        )?;
        let rin = ReconInputs {
            gens: &analysis.gens,
            bank: &analysis.bank,
            lat,
            kernels: &kernels,
            k_coeff: rp.k_coeff,
            k_samp: analysis.k_samp,
            res: rp.resolution,
            eval_res: rp.eval_resolution,
            interior_lo: ilo.clone(),
            interior_hi: ihi.clone(),
        };
        let worst = verify::reconstruction_ensemble(&rin, rp.ensembles.recon_draws, rp.seed)?;
        reconstruction = Some(CheckLine {
            n: rp.ensembles.recon_draws,
            worst,
            tolerance: tol.tol_reconstruct,
            pass: worst <= tol.tol_reconstruct,
        });
    } else {
        let w = verify::null_witness(
            &analysis.field,
            &analysis.bounds,
            &stab_inputs,
            rp.k_kernel,
            tol.pinv_floor,
            &ilo,
            &ihi,
        )?;
        null_check = Some(NullCheck {
            pass: w.sample_ratio <= tol.null_ratio_max && w.recon_error > tol.null_recon_min,
            ratio_max: tol.null_ratio_max,
            recon_min: tol.null_recon_min,
            witness: w,
        });
    }

    // four-way equivalence
    let a = analysis.classification.frame;
    let b = stability.report.c1_est > tol.stability_floor;
    let c = dual.as_ref().map(|d| d.pass).unwrap_or(false);
    let d = reconstruction.as_ref().map(|r| r.pass).unwrap_or(false);
    let equivalence = EquivalenceReport::new(a, b, c, d);

    let overall_pass = cells.mc_ok
        && cells.volume_exact
        && identity.pass
        && sampling.pass
        && sandwich.pass
        && bessel.pass
        && bessel.tightness_pass
        && dual.as_ref().map(|d| d.pass).unwrap_or(true)
        && dual_frame.as_ref().map(|d| d.pass).unwrap_or(true)
        && stability.pass
        && reconstruction.as_ref().map(|r| r.pass).unwrap_or(true)
        && null_check.as_ref().map(|n| n.pass).unwrap_or(true)
        && equivalence.agree;

    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        scenario: analysis.scenario.name.clone(),
        seed: rp.seed,
        cells,
        identity,
        sampling,
        sandwich,
        bessel,
        dual,
        dual_frame,
        stability,
        reconstruction,
        null_witness: null_check,
        equivalence,
        overall_pass,
    })
}
