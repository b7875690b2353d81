//! JSON run configuration, benchmark presets and problem assembly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::design::Simp;
use crate::error::{Error, Result};
use crate::fem::Material;
use crate::mesh::{BcPreset, DomainShape, Mesh};
use crate::optimize::{BiFidelitySettings, ElementChoice, ImportantBudget, Loads, OptSettings, ResolutionModel, Thresholds};
use crate::random_field::{active_threshold, edge_weights, threshold_field, KLModel, LoadFamily};
use crate::sampling::{monte_carlo, sparse_grid, tensor_gauss, SampleKind, SampleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    CarrierPlate,
    LBracket,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uncertainty {
    /// Random horizontal load on the top edge.
    Loading,
    /// Random projection threshold.
    Geometric,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlConfig {
    pub lc: f64,
    pub n_modes: usize,
    pub gamma0: f64,
    pub a1: f64,
    pub a2: f64,
    /// Vertical load per unit length on the top edge.
    pub f2: f64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct KlOverrides {
    lc: Option<f64>,
    n_modes: Option<usize>,
    gamma0: Option<f64>,
    a1: Option<f64>,
    a2: Option<f64>,
    f2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub kind: SampleKind,
    /// Point count for Monte Carlo, points per axis for tensor rules.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub level: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Important-sample budget as written in the file: a count or `"rank"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImportantSpec {
    Count(usize),
    Keyword(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    benchmark: Option<Benchmark>,
    lambda: Option<f64>,
    fine_mesh: Option<[usize; 2]>,
    coarse_mesh: Option<[usize; 2]>,
    uncertainty: Option<Uncertainty>,
    kl: Option<KlOverrides>,
    sampling: Option<SamplingConfig>,
    n_important: Option<ImportantSpec>,
    n_important_cap: Option<usize>,
    vbar: Option<f64>,
    domain_width: Option<f64>,
    filter_radius: Option<f64>,
    coarse_filter_radius: Option<f64>,
    beta: Option<f64>,
    beta_continuation: Option<bool>,
    adaptive_move: Option<bool>,
    tau: Option<f64>,
    iota: Option<f64>,
    max_iters: Option<usize>,
    tol_change: Option<f64>,
    output_dir: Option<PathBuf>,
    certify: Option<bool>,
    certify_probes: Option<usize>,
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub lambda: f64,
    pub fine_mesh: [usize; 2],
    pub coarse_mesh: [usize; 2],
    pub uncertainty: Uncertainty,
    pub kl: KlConfig,
    pub sampling: SamplingConfig,
    pub n_important: ImportantBudget,
    pub vbar: f64,
    /// Physical width of the domain; elements are square.
    pub domain_width: f64,
    /// Fine-mesh filter radius in fine element widths.
    pub filter_radius: f64,
    /// Coarse-mesh filter radius in coarse element widths.
    pub coarse_filter_radius: f64,
    pub beta: f64,
    pub beta_continuation: bool,
    /// Per-element move limits that shrink on step reversal.
    pub adaptive_move: bool,
    /// Projection threshold when it is not random.
    pub tau: f64,
    pub iota: f64,
    pub max_iters: usize,
    pub tol_change: f64,
    pub output_dir: PathBuf,
    pub certify: bool,
    pub certify_probes: usize,
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::config(format!("at `{}`: {}", e.path(), e.inner())))?;
    resolve(raw)
}

/// Filter radius in element widths for a mesh `nx` elements wide: the
/// benchmark values where they are known, `0.06 nx` otherwise, never below
/// the smallest radius that still reaches the neighbours.
fn default_radius(nx: usize, uncertainty: Uncertainty) -> f64 {
    let known: &[(usize, f64)] = match uncertainty {
        Uncertainty::Geometric => &[(4, 1.5), (10, 2.0), (20, 2.5), (50, 3.0), (100, 6.0)],
        _ => &[(4, 1.05), (10, 1.5), (20, 2.0), (50, 3.0), (100, 6.0)],
    };
    match known.iter().find(|(n, _)| *n == nx) {
        Some(&(_, r)) => r,
        None => (0.06 * nx as f64).max(1.05),
    }
}

fn resolve(raw: RawConfig) -> Result<RunConfig> {
    let mut missing = Vec::new();
    if raw.benchmark.is_none() {
        missing.push("benchmark");
    }
    if raw.lambda.is_none() {
        missing.push("lambda");
    }
    let (Some(benchmark), Some(lambda)) = (raw.benchmark, raw.lambda) else {
        return Err(Error::config(format!("missing required keys: {}", missing.join(", "))));
    };

    let lbracket = benchmark == Benchmark::LBracket;
    let fine_mesh = raw.fine_mesh.unwrap_or(if lbracket { [50, 50] } else { [60, 60] });
    let coarse_mesh = raw.coarse_mesh.unwrap_or([10, 10]);
    let uncertainty = raw.uncertainty.unwrap_or(if lbracket { Uncertainty::Geometric } else { Uncertainty::Loading });
    let o = raw.kl.unwrap_or_default();
    let kl = KlConfig {
        lc: o.lc.unwrap_or(if lbracket { 0.85 } else { 0.2 }),
        n_modes: o.n_modes.unwrap_or(if lbracket { 4 } else { 10 }),
        gamma0: o.gamma0.unwrap_or(0.0),
        a1: o.a1.unwrap_or(0.1),
        a2: o.a2.unwrap_or(0.45),
        f2: o.f2.unwrap_or(2.0),
    };
    let sampling = raw.sampling.unwrap_or(if lbracket {
        SamplingConfig { kind: SampleKind::SparseGrid, n: None, level: Some(3), seed: None }
    } else {
        SamplingConfig { kind: SampleKind::MonteCarlo, n: Some(148), level: None, seed: None }
    });
    let n_important = match raw.n_important {
        None if lbracket => ImportantBudget::Fixed(10),
        None => ImportantBudget::Rank { cap: raw.n_important_cap.unwrap_or(20) },
        Some(ImportantSpec::Count(n)) => ImportantBudget::Fixed(n),
        Some(ImportantSpec::Keyword(k)) if k == "rank" => {
            ImportantBudget::Rank { cap: raw.n_important_cap.unwrap_or(20) }
        }
        Some(ImportantSpec::Keyword(k)) => {
            return Err(Error::config(format!("at `n_important`: expected a count or \"rank\", got \"{k}\"")))
        }
    };
    let filter_radius = raw.filter_radius.unwrap_or_else(|| default_radius(fine_mesh[0], uncertainty));
    let coarse_filter_radius = raw.coarse_filter_radius.unwrap_or_else(|| default_radius(coarse_mesh[0], uncertainty));
    let cfg = RunConfig {
        benchmark,
        lambda,
        fine_mesh,
        coarse_mesh,
        uncertainty,
        kl,
        sampling,
        n_important,
        vbar: raw.vbar.unwrap_or(0.35),
        domain_width: raw.domain_width.unwrap_or(if lbracket { 1.0 } else { 2.4 }),
        filter_radius,
        coarse_filter_radius,
        beta: raw.beta.unwrap_or(8.0),
        beta_continuation: raw.beta_continuation.unwrap_or(false),
        adaptive_move: raw.adaptive_move.unwrap_or(true),
        tau: raw.tau.unwrap_or(0.5),
        iota: raw.iota.unwrap_or(3.0),
        max_iters: raw.max_iters.unwrap_or(500),
        tol_change: raw.tol_change.unwrap_or(0.01),
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        certify: raw.certify.unwrap_or(false),
        certify_probes: raw.certify_probes.unwrap_or(10),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::config(msg));
        let [fx, fy] = self.fine_mesh;
        let [cx, cy] = self.coarse_mesh;
        if fx == 0 || fy == 0 || cx == 0 || cy == 0 {
            return bad("mesh sizes must be positive".into());
        }
        if fx % cx != 0 || fy % cy != 0 || fx / cx != fy / cy {
            return bad(format!("fine mesh {fx}x{fy} is not a uniform refinement of coarse mesh {cx}x{cy}"));
        }
        if !(self.vbar > 0.0 && self.vbar < 1.0) {
            return bad(format!("vbar must lie in (0, 1), got {}", self.vbar));
        }
        if !(self.filter_radius > 0.0 && self.coarse_filter_radius > 0.0) {
            return bad("filter radii must be positive".into());
        }
        if !(self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.beta > 0.0) || !(self.iota > 0.0) {
            return bad("beta and iota must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if !(self.domain_width > 0.0) {
            return bad("domain_width must be positive".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if self.uncertainty != Uncertainty::None && (self.kl.n_modes == 0 || !(self.kl.lc > 0.0)) {
            return bad("the random field needs n_modes ≥ 1 and lc > 0".into());
        }
        if self.uncertainty == Uncertainty::Loading && self.benchmark == Benchmark::LBracket {
            return bad("loading uncertainty needs a top-edge load; the L-bracket has a point load".into());
        }
        if self.uncertainty != Uncertainty::None && self.sampling.kind == SampleKind::MonteCarlo {
            if self.sampling.seed.is_none() {
                return bad("Monte Carlo sampling needs `sampling.seed`".into());
            }
            if self.sampling.n.unwrap_or(0) == 0 {
                return bad("Monte Carlo sampling needs `sampling.n` ≥ 1".into());
            }
        }
        if let ImportantBudget::Fixed(0) | ImportantBudget::Rank { cap: 0 } = self.n_important {
            return bad("the important-sample budget must be at least 1".into());
        }
        Ok(())
    }

    fn shape(&self) -> (DomainShape, BcPreset) {
        match self.benchmark {
            Benchmark::CarrierPlate => (DomainShape::Rectangle, BcPreset::CarrierPlate),
            Benchmark::LBracket => (DomainShape::LBracket, BcPreset::LBracket),
            Benchmark::Custom => (DomainShape::Rectangle, BcPreset::Custom),
        }
    }

    pub fn mesh(&self, size: [usize; 2]) -> Result<Mesh> {
        let (shape, preset) = self.shape();
        Mesh::new(size[0], size[1], shape, preset, self.domain_width / size[0] as f64)
    }

    pub fn parameter_dim(&self) -> usize {
        match self.uncertainty {
            Uncertainty::None => 0,
            _ => self.kl.n_modes,
        }
    }

    /// The configured sample rule.
    pub fn samples(&self) -> Result<SampleSet> {
        let d = self.parameter_dim();
        if d == 0 {
            return Ok(SampleSet::nominal(0));
        }
        let s = &self.sampling;
        match s.kind {
            SampleKind::MonteCarlo => {
                let seed = s.seed.ok_or_else(|| Error::config("Monte Carlo sampling needs `sampling.seed`"))?;
                monte_carlo(d, s.n.unwrap_or(0), seed)
            }
            SampleKind::SparseGrid => sparse_grid(d, s.level.unwrap_or(3)),
            SampleKind::TensorGauss => tensor_gauss(d, s.n.unwrap_or(3)),
        }
    }

    pub fn opt_settings(&self) -> OptSettings {
        let mut s = OptSettings::new(self.lambda, self.vbar);
        s.max_iters = self.max_iters;
        s.tol_change = self.tol_change;
        s.beta = self.beta;
        s.beta_continuation = self.beta_continuation;
        s.oc.adaptive_move = self.adaptive_move;
        s
    }

    pub fn bifi_settings(&self) -> BiFidelitySettings {
        BiFidelitySettings {
            budget: self.n_important,
            certify: self.certify.then_some(self.certify_probes),
            element: ElementChoice::LargestSensitivity,
        }
    }

    /// Random field on the fine mesh, if any.
    pub fn field(&self, fine: &Mesh) -> Result<Option<KLModel>> {
        let k = &self.kl;
        Ok(match self.uncertainty {
            Uncertainty::None => None,
            Uncertainty::Loading => Some(KLModel::top_edge(fine, k.lc, k.n_modes, k.gamma0)?),
            Uncertainty::Geometric => Some(KLModel::centroids(fine, k.lc, k.n_modes, k.gamma0)?),
        })
    }

    /// Analysis model on `mesh` for every point of `samples`.
    pub fn model(&self, mesh: Mesh, field: Option<&KLModel>, samples: &SampleSet, radius: f64) -> Result<ResolutionModel> {
        let res = (mesh.nx, mesh.ny);
        let (loads, thresholds) = match (self.uncertainty, field) {
            (Uncertainty::Loading, Some(kl)) => {
                let family = LoadFamily::top_edge(&mesh, kl, self.kl.f2)?;
                let loads = samples.points.iter().map(|p| family.at(p)).collect::<Result<Vec<_>>>()?;
                (Loads::PerSample(loads), Thresholds::Shared(self.tau))
            }
            (Uncertainty::Geometric, Some(kl)) => {
                let taus = samples
                    .points
                    .iter()
                    .map(|p| Ok(active_threshold(&mesh, &threshold_field(kl, p, self.kl.a1, self.kl.a2, res)?)))
                    .collect::<Result<Vec<_>>>()?;
                (Loads::Shared(self.deterministic_load(&mesh)), Thresholds::PerSample(taus))
            }
            _ => (Loads::Shared(self.deterministic_load(&mesh)), Thresholds::Shared(self.tau)),
        };
        ResolutionModel::new(mesh, radius, Material::default(), Simp::new(self.iota), loads, thresholds)
    }

    /// Unit downward tip load for the L-bracket, `-f2` per unit length on the
    /// top edge otherwise.
    pub fn deterministic_load(&self, mesh: &Mesh) -> Vec<f64> {
        let mut f = vec![0.0; mesh.n_dofs()];
        if self.benchmark == Benchmark::LBracket {
            f[2 * mesh.lbracket_tip_node() + 1] = -1.0;
        } else {
            let w = edge_weights(mesh);
            for (k, n) in mesh.top_edge_nodes().into_iter().enumerate() {
                f[2 * n + 1] = -self.kl.f2 * w[k];
            }
        }
        f
    }

    /// Fine and coarse models for `samples`.
    pub fn models(&self, samples: &SampleSet) -> Result<(ResolutionModel, ResolutionModel)> {
        let fine_mesh = self.mesh(self.fine_mesh)?;
        let coarse_mesh = self.mesh(self.coarse_mesh)?;
        let field = self.field(&fine_mesh)?;
        let coarse = self.model(coarse_mesh, field.as_ref(), samples, self.coarse_filter_radius)?;
        let fine = self.model(fine_mesh, field.as_ref(), samples, self.filter_radius)?;
        Ok((fine, coarse))
    }

    /// Sample rule plus fine and coarse models.
    pub fn build(&self) -> Result<Problem> {
        let samples = self.samples()?;
        let (fine, coarse) = self.models(&samples)?;
        Ok(Problem { config: self.clone(), fine, coarse, samples })
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub config: RunConfig,
    pub fine: ResolutionModel,
    pub coarse: ResolutionModel,
    pub samples: SampleSet,
}
