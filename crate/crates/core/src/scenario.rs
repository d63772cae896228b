//! Scenario files: one JSON document naming the lattice, the generators,
//! the filter bank and the numeric parameters.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{FilterBank, FilterSystem, KernelFn};
use crate::grid;
use crate::sispace::{ComponentFn, Generator, GeneratorSet};

/// One scalar component of a generator, or one convolution kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentSpec {
    /// Order-1 B-spline (indicator of `[-1/2, 1/2)^d`).
    Box {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<Vec<f64>>,
    },
    /// Order-2 B-spline (tensor hat), support `[-1, 1]^d`.
    Hat {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<Vec<f64>>,
    },
    /// Order-4 B-spline, support `[-2, 2]^d`.
    Cubic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<Vec<f64>>,
    },
    /// Arbitrary-order tensor B-spline.
    Bspline {
        order: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<Vec<f64>>,
    },
    /// Tabulated values from a grid-function CSV.
    File { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratorSpec {
    Single(ComponentSpec),
    Multi { components: Vec<ComponentSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Box {
        width: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    File {
        path: String,
    },
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    /// Ideal sampling `L f = f_q(t - tau)`.
    Point {
        #[serde(default)]
        component: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        offset: Option<Vec<f64>>,
    },
    /// Single box kernel acting on one component (shorthand for `conv`).
    Box {
        width: f64,
        #[serde(default)]
        component: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    /// One kernel per component.
    Conv { kernels: Vec<KernelSpec> },
}

/// Tolerances and caps, all in one block.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub tol_rank: f64,
    pub tol_identity: f64,
    pub tol_reconstruct: f64,
    pub tol_sampling: f64,
    pub pinv_floor: f64,
    pub dual_residual: f64,
    pub blowup_cap: f64,
    pub degenerate_cap: f64,
    pub continuity_budget: f64,
    pub sandwich_slack: f64,
    pub bessel_slack: f64,
    pub stability_floor: f64,
    pub envelope_slack: f64,
    pub tightness_frac: f64,
    pub null_ratio_max: f64,
    pub null_recon_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_rank: 1e-8,
            tol_identity: 1e-3,
            tol_reconstruct: 1e-3,
            tol_sampling: 1e-6,
            pinv_floor: 1e-8,
            dual_residual: 1e-8,
            blowup_cap: 1e12,
            degenerate_cap: 1e8,
            continuity_budget: 0.05,
            sandwich_slack: 0.02,
            bessel_slack: 1e-3,
            stability_floor: 1e-6,
            envelope_slack: 0.05,
            tightness_frac: 0.9,
            null_ratio_max: 1e-6,
            null_recon_min: 0.1,
        }
    }
}

/// Ensemble sizes for the verification oracles.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Ensembles {
    pub riesz_trials: usize,
    pub identity_draws: usize,
    pub sampling_probes: usize,
    pub sandwich_draws: usize,
    pub bessel_draws: usize,
    pub stability_ensemble: usize,
    pub recon_draws: usize,
    pub mc_points: usize,
}

impl Default for Ensembles {
    fn default() -> Self {
        Self {
            riesz_trials: 64,
            identity_draws: 50,
            sampling_probes: 30,
            sandwich_draws: 50,
            bessel_draws: 100,
            stability_ensemble: 100,
            recon_draws: 20,
            mc_points: 10_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Params {
    pub resolution: Option<u32>,
    pub eval_resolution: Option<u32>,
    pub cell_resolution: Option<u32>,
    pub k_fourier: Option<i64>,
    pub k_coeff: Option<i64>,
    pub k_sym: Option<i64>,
    pub k_samp: Option<i64>,
    pub k_kernel: Option<i64>,
    pub band: Option<i64>,
    pub seed: Option<u64>,
    pub margin_extra: Option<f64>,
    pub strict: Option<bool>,
    pub strict_l1: Option<bool>,
    pub tolerances: Tolerances,
    pub ensembles: Ensembles,
}

/// Defaults filled in, ready for the pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedParams {
    pub resolution: u32,
    pub eval_resolution: u32,
    pub cell_resolution: u32,
    pub k_fourier: i64,
    pub k_coeff: i64,
    pub k_sym: Option<i64>,
    pub k_samp: Option<i64>,
    pub k_kernel: i64,
    pub band: i64,
    pub seed: u64,
    pub margin_extra: f64,
    pub strict: bool,
    pub strict_l1: bool,
    pub tolerances: Tolerances,
    pub ensembles: Ensembles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub dim: usize,
    /// Subcube / generator count `N`.
    #[serde(default = "one")]
    pub subcubes: usize,
    /// Vector components `r`.
    #[serde(default = "one")]
    pub components: usize,
    /// Row-major integer sampling matrix.
    pub lattice: Vec<Vec<i64>>,
    pub generators: Vec<GeneratorSpec>,
    pub filters: Vec<FilterSpec>,
    #[serde(default)]
    pub params: Params,
    /// Directory of the scenario file, for resolving tabulated paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}

impl Scenario {
    pub fn resolved(&self) -> ResolvedParams {
        let p = &self.params;
        let d1 = self.dim == 1;
        ResolvedParams {
            resolution: p.resolution.unwrap_or(256),
            eval_resolution: p.eval_resolution.unwrap_or(if d1 { 256 } else { 64 }),
            cell_resolution: p.cell_resolution.unwrap_or(128),
            k_fourier: p.k_fourier.unwrap_or(32),
            k_coeff: p.k_coeff.unwrap_or(if d1 { 16 } else { 5 }),
            k_sym: p.k_sym,
            k_samp: p.k_samp,
            k_kernel: p.k_kernel.unwrap_or(if d1 { 32 } else { 8 }),
            band: p.band.unwrap_or(if d1 { 6 } else { 3 }),
            seed: p.seed.unwrap_or(7),
            margin_extra: p.margin_extra.unwrap_or(if d1 { 8.0 } else { 2.0 }),
            strict: p.strict.unwrap_or(false),
            strict_l1: p.strict_l1.unwrap_or(false),
            tolerances: p.tolerances.clone(),
            ensembles: p.ensembles.clone(),
        }
    }

    fn resolve_path(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn load_component(&self, spec: &ComponentSpec) -> Result<ComponentFn> {
        let shift_of = |s: &Option<Vec<f64>>| -> Result<Vec<f64>> {
            match s {
                Some(v) if v.len() == self.dim => Ok(v.clone()),
                Some(v) => Err(Error::Validation(format!(
                    "shift has {} entries, dim is {}",
                    v.len(),
                    self.dim
                ))),
                None => Ok(vec![0.0; self.dim]),
            }
        };
        Ok(match spec {
            ComponentSpec::Box { shift } => ComponentFn::Spline {
                order: 1,
                shift: shift_of(shift)?,
            },
            ComponentSpec::Hat { shift } => ComponentFn::Spline {
                order: 2,
                shift: shift_of(shift)?,
            },
            ComponentSpec::Cubic { shift } => ComponentFn::Spline {
                order: 4,
                shift: shift_of(shift)?,
            },
            ComponentSpec::Bspline { order, shift } => {
                if !(1..=6).contains(order) {
                    return Err(Error::Validation(format!(
                        "bspline order {order} outside 1..=6"
                    )));
                }
                ComponentFn::Spline {
                    order: *order,
                    shift: shift_of(shift)?,
                }
            }
            ComponentSpec::File { path } => {
                let full = self.resolve_path(path);
                let text = std::fs::read_to_string(&full).map_err(|e| Error::Io {
                    path: full.display().to_string(),
                    source: e,
                })?;
                ComponentFn::Tabulated(grid::read_csv(&full.display().to_string(), &text)?)
            }
        })
    }

    /// Builds the generator family.
    pub fn build_generators(&self) -> Result<Arc<GeneratorSet>> {
        let rp = self.resolved();
        let mut gens = Vec::with_capacity(self.generators.len());
        for spec in &self.generators {
            let comps = match spec {
                GeneratorSpec::Single(c) => vec![self.load_component(c)?],
                GeneratorSpec::Multi { components } => components
                    .iter()
                    .map(|c| self.load_component(c))
                    .collect::<Result<Vec<_>>>()?,
            };
            gens.push(Generator { comps });
        }
        Ok(Arc::new(GeneratorSet::new(
            self.dim,
            self.components,
            gens,
            rp.tolerances.continuity_budget,
            rp.strict,
        )?))
    }

    fn load_kernel(&self, spec: &KernelSpec) -> Result<KernelFn> {
        Ok(match spec {
            KernelSpec::Box { width, center } => {
                if *width <= 0.0 {
                    return Err(Error::Validation("kernel width must be positive".into()));
                }
                KernelFn::BoxCar {
                    center: center.clone().unwrap_or_else(|| vec![0.0; self.dim]),
                    width: *width,
                }
            }
            KernelSpec::File { path } => {
                let full = self.resolve_path(path);
                let text = std::fs::read_to_string(&full).map_err(|e| Error::Io {
                    path: full.display().to_string(),
                    source: e,
                })?;
                KernelFn::Tabulated(grid::read_csv(&full.display().to_string(), &text)?)
            }
            KernelSpec::Zero => KernelFn::Zero,
        })
    }

    /// Builds the filter bank.
    pub fn build_filter_bank(&self) -> Result<FilterBank> {
        let rp = self.resolved();
        let mut systems = Vec::with_capacity(self.filters.len());
        for spec in &self.filters {
            let sys = match spec {
                FilterSpec::Point { component, offset } => {
                    if rp.strict_l1 {
                        return Err(Error::Validation(
                            "ideal point sampling is disabled under strict_l1".into(),
                        ));
                    }
                    FilterSystem::Point {
                        component: *component,
                        offset: offset.clone().unwrap_or_else(|| vec![0.0; self.dim]),
                    }
                }
                FilterSpec::Box {
                    width,
                    component,
                    center,
                } => {
                    let mut kernels = vec![KernelFn::Zero; self.components];
                    if *component >= self.components {
                        return Err(Error::Validation(format!(
                            "filter component {component} out of range"
                        )));
                    }
                    kernels[*component] = self.load_kernel(&KernelSpec::Box {
                        width: *width,
                        center: center.clone(),
                    })?;
                    FilterSystem::Conv { kernels }
                }
                FilterSpec::Conv { kernels } => {
                    if kernels.len() != self.components {
                        return Err(Error::Validation(format!(
                            "conv filter has {} kernels, expected {}",
                            kernels.len(),
                            self.components
                        )));
                    }
                    FilterSystem::Conv {
                        kernels: kernels
                            .iter()
                            .map(|k| self.load_kernel(k))
                            .collect::<Result<Vec<_>>>()?,
                    }
                }
            };
            systems.push(sys);
        }
        FilterBank::new(self.dim, self.components, systems)
    }

    /// Structural validation; returns the scenario with defaults echoed.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("dim must be >= 1".into()));
        }
        if self.dim > 1 && self.subcubes > 1 {
            return Err(Error::UnsupportedRegime(format!(
                "d = {}, N = {}",
                self.dim, self.subcubes
            )));
        }
        if self.generators.len() != self.subcubes {
            return Err(Error::Validation(format!(
                "need exactly N = {} generators, got {}",
                self.subcubes,
                self.generators.len()
            )));
        }
        if self.lattice.len() != self.dim || self.lattice.iter().any(|r| r.len() != self.dim) {
            return Err(Error::Validation("lattice matrix must be d x d".into()));
        }
        if self.filters.is_empty() {
            return Err(Error::Validation("at least one filter is required".into()));
        }
        let rp = self.resolved();
        if rp.resolution < 2 || rp.cell_resolution < 2 {
            return Err(Error::Validation("resolutions must be >= 2".into()));
        }
        if rp.k_fourier < 0 || rp.k_coeff < 1 || rp.band < 0 {
            return Err(Error::Validation("index bounds must be positive".into()));
        }
        // touching all referenced files and building once catches bad specs
        self.build_generators()?;
        self.build_filter_bank()?;
        Ok(())
    }
}

/// Loads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut sc: Scenario = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: format!("line {}, column {}: {}", e.line(), e.column(), e),
    })?;
    sc.base_dir = path
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."));
    if sc.name.is_empty() {
        sc.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    sc.validate()?;
    Ok(sc)
}
