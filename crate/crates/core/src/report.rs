//! Report structures for the three commands. Everything is plain data with
//! a stable field order, so serialized reports are byte-identical across
//! runs with the same seed.

use serde::Serialize;

use crate::modulation::SystemClassification;
use crate::verify::{EquivalenceReport, NullWitness, StabilityReport, TightnessProbe};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct SymbolSummary {
    pub k_sym: i64,
    pub truncated: bool,
    /// `[(j, p, ess_sup)]`
    pub ess_sup: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsSummary {
    pub a_g: f64,
    pub b_g: f64,
    pub refined_a_g: f64,
    pub refined_b_g: f64,
    pub refinement_rel_change: f64,
    pub refinement_accepted: bool,
    pub argmin_x: Vec<f64>,
    pub argmax_x: Vec<f64>,
    /// Per-subcube `(min lambda_min, max lambda_max)`
    pub per_p: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompletenessSummary {
    pub per_p: Vec<bool>,
    pub all: bool,
    pub worst_sigma_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub schema_version: u32,
    pub scenario: String,
    pub dim: usize,
    pub n_sub: usize,
    pub n_comp: usize,
    pub n_sys: usize,
    pub m: usize,
    pub seed: u64,
    pub symbols: SymbolSummary,
    pub bounds: BoundsSummary,
    pub completeness: CompletenessSummary,
    pub classification: SystemClassification,
}

impl AnalyzeReport {
    pub fn summary_table(&self) -> String {
        let c = &self.classification;
        let verdict = if c.riesz {
            "riesz basis"
        } else if c.frame {
            "frame"
        } else if c.complete {
            "complete, not frame"
        } else {
            "not complete"
        };
        let mut s = String::new();
        s.push_str(&format!(
            "scenario {:<14} d={} N={} r={} s={} m={}\n",
            self.scenario, self.dim, self.n_sub, self.n_comp, self.n_sys, self.m
        ));
        s.push_str(&format!(
            "  A_G = {:.6e}   B_G = {:.6e}   (refined: {:.6e}, {:.6e}; change {:.2e}{})\n",
            self.bounds.a_g,
            self.bounds.b_g,
            self.bounds.refined_a_g,
            self.bounds.refined_b_g,
            self.bounds.refinement_rel_change,
            if self.bounds.refinement_accepted {
                ", accepted"
            } else {
                ", NOT CONVERGED"
            }
        ));
        s.push_str(&format!(
            "  complete: {}   bessel bound B_G/m = {:.6}\n",
            self.completeness.all, c.bessel_bound
        ));
        if let Some((a, b)) = c.frame_bounds {
            s.push_str(&format!(
                "  frame bounds (A_G/m, B_G/m) = ({a:.6}, {b:.6})\n"
            ));
        }
        s.push_str(&format!("  verdict: {verdict}\n"));
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub forced: bool,
    pub frame: bool,
    pub k_samp: i64,
    pub k_kernel: i64,
    pub interior_lo: Vec<f64>,
    pub interior_hi: Vec<f64>,
    pub rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl ReconstructReport {
    pub fn summary_table(&self) -> String {
        format!(
            "scenario {:<14} seed={} forced={} interior rel L2 error = {:.3e} (tol {:.1e}) -> {}\n",
            self.scenario,
            self.seed,
            self.forced,
            self.rel_error,
            self.tolerance,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckLine {
    pub n: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichCheck {
    pub draws: usize,
    pub a_lo: f64,
    pub b_hi: f64,
    pub gram_min: f64,
    pub gram_max: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BesselCheck {
    pub draws: usize,
    pub max_ratio: f64,
    pub bound: f64,
    pub slack: f64,
    pub pass: bool,
    pub tightness: TightnessProbe,
    pub tightness_frac: f64,
    pub tightness_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualCheck {
    pub residual: f64,
    pub max_modulus: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellCheck {
    pub mc_points: usize,
    pub mc_ok: bool,
    pub volume_exact: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityCheck {
    #[serde(flatten)]
    pub report: StabilityReport,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NullCheck {
    #[serde(flatten)]
    pub witness: NullWitness,
    pub ratio_max: f64,
    pub recon_min: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub cells: CellCheck,
    pub identity: CheckLine,
    pub sampling: CheckLine,
    pub sandwich: SandwichCheck,
    pub bessel: BesselCheck,
    pub dual: Option<DualCheck>,
    /// Dual-frame expansion residual on the unit cube (frame scenarios).
    pub dual_frame: Option<CheckLine>,
    pub stability: StabilityCheck,
    pub reconstruction: Option<CheckLine>,
    pub null_witness: Option<NullCheck>,
    pub equivalence: EquivalenceReport,
    pub overall_pass: bool,
}

impl VerifyReport {
    pub fn summary_table(&self) -> String {
        fn line(name: &str, detail: String, pass: bool) -> String {
            format!(
                "  {:<22} {:<44} {}\n",
                name,
                detail,
                if pass { "PASS" } else { "FAIL" }
            )
        }
        let mut s = format!("verify {:<14} seed={}\n", self.scenario, self.seed);
        s.push_str(&line(
            "cell partition",
            format!(
                "mc={} volumes_exact={}",
                self.cells.mc_ok, self.cells.volume_exact
            ),
            self.cells.mc_ok && self.cells.volume_exact,
        ));
        s.push_str(&line(
            "coset identity",
            format!(
                "{} draws, worst rel err {:.2e} (tol {:.0e})",
                self.identity.n, self.identity.worst, self.identity.tolerance
            ),
            self.identity.pass,
        ));
        s.push_str(&line(
            "sampling identity",
            format!(
                "{} probes, worst abs err {:.2e} (tol {:.0e})",
                self.sampling.n, self.sampling.worst, self.sampling.tolerance
            ),
            self.sampling.pass,
        ));
        s.push_str(&line(
            "riesz sandwich",
            format!(
                "ratios in [{:.4}, {:.4}] vs [{:.4}, {:.4}]",
                self.sandwich.min_ratio,
                self.sandwich.max_ratio,
                self.sandwich.a_lo,
                self.sandwich.b_hi
            ),
            self.sandwich.pass,
        ));
        s.push_str(&line(
            "bessel bound",
            format!(
                "max ratio {:.6} <= {:.6}; probe {:.1}%",
                self.bessel.max_ratio,
                self.bessel.bound,
                100.0 * self.bessel.tightness.fraction
            ),
            self.bessel.pass && self.bessel.tightness_pass,
        ));
        match &self.dual {
            Some(d) => s.push_str(&line(
                "dual residual",
                format!(
                    "{:.2e} (tol {:.0e}), max |d| {:.3}",
                    d.residual, d.tolerance, d.max_modulus
                ),
                d.pass,
            )),
            None => s.push_str("  dual residual          skipped (not a frame)\n"),
        }
        match &self.dual_frame {
            Some(d) => s.push_str(&line(
                "dual-frame identity",
                format!(
                    "{} draws, worst rel resid {:.2e} (tol {:.0e})",
                    d.n, d.worst, d.tolerance
                ),
                d.pass,
            )),
            None => s.push_str("  dual-frame identity    skipped (not a frame)\n"),
        }
        s.push_str(&line(
            "stability",
            format!(
                "C1={:.4e} C2={:.4e} envelopes [{:.3e}, {:.3e}]",
                self.stability.report.c1_est,
                self.stability.report.c2_est,
                self.stability.report.c1_envelope,
                self.stability.report.c2_envelope
            ),
            self.stability.pass,
        ));
        match &self.reconstruction {
            Some(r) => s.push_str(&line(
                "reconstruction",
                format!(
                    "{} draws, worst rel err {:.2e} (tol {:.0e})",
                    r.n, r.worst, r.tolerance
                ),
                r.pass,
            )),
            None => s.push_str("  reconstruction         skipped (not a frame)\n"),
        }
        if let Some(nw) = &self.null_witness {
            s.push_str(&line(
                "null witness",
                format!(
                    "sample ratio {:.2e} <= {:.0e}, recon err {:.3} > {:.2}",
                    nw.witness.sample_ratio, nw.ratio_max, nw.witness.recon_error, nw.recon_min
                ),
                nw.pass,
            ));
        }
        let e = &self.equivalence;
        s.push_str(&line(
            "equivalence",
            format!(
                "a={} b={} c={} d={}",
                e.a_spectral, e.b_stable, e.c_dual, e.d_reconstructs
            ),
            e.agree,
        ));
        s.push_str(&format!(
            "  overall: {}\n",
            if self.overall_pass { "PASS" } else { "FAIL" }
        ));
        s
    }
}

/// Serializes a report with a trailing newline (stable output for diffing).
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports are serializable");
    s.push('\n');
    s
}
