//! Scenario files: a loose TOML schema, field-level validation, and the resolved
//! scenario handed to the pipelines.

use std::path::{Path, PathBuf};

use coverage_core::assign::{even_orientations, Footprint, ServiceModel};
use coverage_core::density::{parse_point_csv, DensityField, GaussianComponent, GaussianMixture, Grid};
use coverage_core::geometry::{ConvexPolygon, Vec2};
use coverage_core::linalg::Sym2;
use coverage_core::poi::Bandwidth;
use coverage_core::submod::BlockOrder;
use coverage_core::{Density, Point, Polygon};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub output: Option<String>,
    pub workspace: Option<RawWorkspace>,
    pub density: Option<RawDensity>,
    pub agents: Option<RawAgents>,
    pub pipeline: Option<RawPipeline>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWorkspace {
    /// `[x0, y0, x1, y1]`.
    pub rectangle: Option<[f64; 4]>,
    pub polygon: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDensity {
    /// `uniform`, `gmm`, `image` (PGM) or `grid` (CSV rows, top row first).
    pub kind: Option<String>,
    pub components: Option<Vec<RawComponent>>,
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    /// `[xx, xy, yy]`.
    pub covariance: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawPositions {
    Keyword(String),
    List(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAgents {
    pub count: Option<usize>,
    pub positions: Option<RawPositions>,
    pub radii: Option<Vec<f64>>,
    /// One service model shared by every agent.
    pub service: Option<RawService>,
    /// One service model per agent.
    pub services: Option<Vec<RawService>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawService {
    /// `disk` or `gaussian`.
    pub kind: Option<String>,
    pub radius: Option<f64>,
    pub covariance: Option<[f64; 3]>,
    /// `disk` or `three_sigma` (gaussian only).
    pub footprint: Option<String>,
    pub exponent: Option<f64>,
    pub orientations: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPipeline {
    pub kind: Option<String>,
    pub iters: Option<usize>,
    pub tol: Option<f64>,
    /// power_lloyd: `given` or `equitable`.
    pub radii_mode: Option<String>,
    pub equitable_tol: Option<f64>,
    /// `kmeans`, `gmm`, `svgd` or `file`.
    pub pois: Option<String>,
    pub poi_file: Option<String>,
    pub k: Option<usize>,
    pub samples: Option<usize>,
    /// poi_assign: `footprint`, `kld` or `ot`.
    pub cost: Option<String>,
    pub ot_samples: Option<usize>,
    /// svgd: `median` or `footprint`.
    pub bandwidth: Option<String>,
    pub footprint_radius: Option<f64>,
    pub step: Option<f64>,
    /// submodular_assign: `uniform` or `partition`.
    pub matroid: Option<String>,
    /// submodular_assign: `exemplar` or `coverage`.
    pub utility: Option<String>,
    /// `ascending` or `descending`.
    pub block_order: Option<String>,
    pub tau: Option<f64>,
    pub batch: Option<usize>,
    pub frame_every: Option<usize>,
    pub metric_bins: Option<usize>,
    /// Raster resolution of rendered density bands.
    pub resolution: Option<usize>,
}

/// One validation problem, tied to a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for Finding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Default)]
struct Findings(Vec<Finding>);

impl Findings {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Finding {
            field: field.to_string(),
            message: message.into(),
        });
    }
}

#[derive(Debug, Clone)]
pub enum PoiSource {
    KMeans { k: usize, samples: usize },
    Gmm { k: usize, samples: usize },
    Svgd { k: usize, bandwidth: Bandwidth<f64>, step: f64, iters: usize },
    File { points: Vec<Point> },
}

impl PoiSource {
    pub fn count(&self) -> usize {
        match self {
            PoiSource::KMeans { k, .. } | PoiSource::Gmm { k, .. } | PoiSource::Svgd { k, .. } => *k,
            PoiSource::File { points } => points.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Footprint,
    Kld,
    Ot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Utility {
    Exemplar,
    Coverage,
}

#[derive(Debug, Clone)]
pub enum Pipeline {
    Lloyd {
        iters: usize,
        tol: f64,
    },
    PowerLloyd {
        iters: usize,
        tol: f64,
        equitable: bool,
        equitable_tol: f64,
    },
    PoiAssign {
        source: PoiSource,
        cost: CostKind,
        ot_samples: usize,
        /// Data points drawn from φ for clustering and OT clusters.
        samples: usize,
    },
    SubmodularAssign {
        source: PoiSource,
        uniform: bool,
        utility: Utility,
        block_order: BlockOrder,
        samples: usize,
    },
    Swarm {
        iters: usize,
        tau: f64,
        batch: Option<usize>,
        frame_every: usize,
        metric_bins: Option<usize>,
    },
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::Lloyd { .. } => "lloyd",
            Pipeline::PowerLloyd { .. } => "power_lloyd",
            Pipeline::PoiAssign { .. } => "poi_assign",
            Pipeline::SubmodularAssign { .. } => "submodular_assign",
            Pipeline::Swarm { .. } => "swarm",
        }
    }
}

/// A validated scenario with every input loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub output: PathBuf,
    pub workspace: Polygon,
    pub density: Density,
    pub count: usize,
    /// Explicit initial positions; `None` means sampled from φ.
    pub positions: Option<Vec<Point>>,
    pub radii: Option<Vec<f64>>,
    pub services: Vec<ServiceModel<f64>>,
    /// Per-agent coverage radius for the coverage utility.
    pub coverage_radii: Option<Vec<f64>>,
    pub pipeline: Pipeline,
    pub resolution: usize,
}

/// Outcome of validating a config file.
#[derive(Debug, Serialize)]
pub struct Report {
    pub valid: bool,
    pub errors: Vec<Finding>,
}

pub fn parse(text: &str) -> Result<RawConfig, Finding> {
    toml::from_str(text).map_err(|e| Finding {
        field: "<file>".into(),
        message: e.to_string().trim().replace('\n', " "),
    })
}

/// Reads, parses and validates `path`; relative input paths resolve against its folder.
pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<(RawConfig, Scenario), Vec<Finding>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Finding {
            field: "<file>".into(),
            message: format!("cannot read {}: {e}", path.display()),
        }]
    })?;
    let mut raw = parse(&text).map_err(|f| vec![f])?;
    if let Some(s) = seed {
        raw.seed = Some(s);
    }
    if let Some(o) = out {
        raw.output = Some(o.display().to_string());
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = validate(&raw, base)?;
    Ok((raw, scenario))
}

pub fn report(result: &Result<(RawConfig, Scenario), Vec<Finding>>) -> Report {
    match result {
        Ok(_) => Report {
            valid: true,
            errors: Vec::new(),
        },
        Err(e) => Report {
            valid: false,
            errors: e.clone(),
        },
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn sym(c: [f64; 3]) -> Sym2<f64> {
    Sym2::new(c[0], c[1], c[2])
}

fn workspace(raw: Option<&RawWorkspace>, f: &mut Findings) -> Option<Polygon> {
    let Some(w) = raw else {
        f.push("workspace", "missing section");
        return None;
    };
    match (&w.rectangle, &w.polygon) {
        (Some(r), None) => match ConvexPolygon::rectangle(r[0], r[1], r[2], r[3]) {
            Ok(p) => Some(p),
            Err(e) => {
                f.push("workspace.rectangle", e.to_string());
                None
            }
        },
        (None, Some(v)) => match ConvexPolygon::new(v.iter().map(|p| Vec2::new(p[0], p[1])).collect()) {
            Ok(p) => Some(p),
            Err(e) => {
                f.push("workspace.polygon", e.to_string());
                None
            }
        },
        (Some(_), Some(_)) => {
            f.push("workspace", "give either rectangle or polygon, not both");
            None
        }
        (None, None) => {
            f.push("workspace", "needs rectangle or polygon");
            None
        }
    }
}

fn density(raw: Option<&RawDensity>, w: &Polygon, base: &Path, f: &mut Findings) -> Option<Density> {
    let Some(d) = raw else {
        f.push("density", "missing section");
        return None;
    };
    let need_path = |f: &mut Findings| -> Option<PathBuf> {
        match &d.path {
            Some(p) => {
                let full = resolve(base, p);
                if full.is_file() {
                    Some(full)
                } else {
                    f.push("density.path", format!("file not found: {}", full.display()));
                    None
                }
            }
            None => {
                f.push("density.path", "required for this density kind");
                None
            }
        }
    };
    match d.kind.as_deref() {
        Some("uniform") => Some(DensityField::uniform(w.clone())),
        Some("gmm") => {
            let Some(comps) = d.components.as_ref().filter(|c| !c.is_empty()) else {
                f.push("density.components", "gmm needs at least one component");
                return None;
            };
            let mut out = Vec::new();
            for (i, c) in comps.iter().enumerate() {
                match GaussianComponent::new(c.weight, Vec2::new(c.mean[0], c.mean[1]), sym(c.covariance)) {
                    Ok(g) => out.push(g),
                    Err(e) => f.push(&format!("density.components[{i}]"), e.to_string()),
                }
            }
            if out.len() != comps.len() {
                return None;
            }
            match GaussianMixture::new(out).and_then(|m| DensityField::gmm(w.clone(), m)) {
                Ok(phi) => Some(phi),
                Err(e) => {
                    f.push("density.components", e.to_string());
                    None
                }
            }
        }
        Some("image") => {
            let path = need_path(f)?;
            match DensityField::from_pgm_file(w.clone(), &path) {
                Ok(phi) => Some(phi),
                Err(e) => {
                    f.push("density.path", e.to_string());
                    None
                }
            }
        }
        Some("grid") => {
            let path = need_path(f)?;
            match read_grid(&path, w) {
                Ok(phi) => Some(phi),
                Err(e) => {
                    f.push("density.path", e);
                    None
                }
            }
        }
        Some(other) => {
            f.push("density.kind", format!("unknown kind '{other}' (uniform, gmm, image, grid)"));
            None
        }
        None => {
            f.push("density.kind", "missing");
            None
        }
    }
}

/// Comma- or whitespace-separated rows of nonnegative values, top row first, spanning
/// the workspace bounding box.
fn read_grid(path: &Path, w: &Polygon) -> Result<Density, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect();
        rows.push(row.map_err(|e| format!("line {}: {e}", n + 1))?);
    }
    let nx = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nx) {
        return Err("rows have different lengths".into());
    }
    let ny = rows.len();
    let values: Vec<f64> = rows.into_iter().rev().flatten().collect();
    let grid = Grid::new(nx, ny, values, w.bounding_box()).map_err(|e| e.to_string())?;
    DensityField::grid(w.clone(), grid).map_err(|e| e.to_string())
}

fn service(raw: &RawService, field: &str, f: &mut Findings) -> Option<ServiceModel<f64>> {
    let m = raw.orientations.unwrap_or(8);
    if m == 0 {
        f.push(&format!("{field}.orientations"), "must be at least 1");
        return None;
    }
    let mut model = match raw.kind.as_deref() {
        Some("disk") => match raw.radius {
            Some(r) => ServiceModel::disk(r),
            None => {
                f.push(&format!("{field}.radius"), "required for a disk service");
                return None;
            }
        },
        Some("gaussian") => {
            let Some(c) = raw.covariance else {
                f.push(&format!("{field}.covariance"), "required for a gaussian service");
                return None;
            };
            let mut model = ServiceModel::gaussian(sym(c));
            match (raw.footprint.as_deref(), raw.radius) {
                (Some("disk"), Some(r)) => model = model.with_footprint(Footprint::Disk { radius: r }),
                (Some("disk"), None) => {
                    f.push(&format!("{field}.radius"), "disk footprint needs a radius");
                    return None;
                }
                (None | Some("three_sigma"), _) => {}
                (Some(other), _) => {
                    f.push(&format!("{field}.footprint"), format!("unknown footprint '{other}' (disk, three_sigma)"));
                    return None;
                }
            }
            model
        }
        Some(other) => {
            f.push(&format!("{field}.kind"), format!("unknown service '{other}' (disk, gaussian)"));
            return None;
        }
        None => {
            f.push(&format!("{field}.kind"), "missing");
            return None;
        }
    };
    if let Some(a) = raw.exponent {
        model.exponent = a;
    }
    model = model.with_orientations(even_orientations(m));
    match model.validate() {
        Ok(()) => Some(model),
        Err(e) => {
            f.push(field, e.to_string());
            None
        }
    }
}

fn positive(v: Option<f64>, field: &str, default: f64, f: &mut Findings) -> f64 {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => x,
        Some(_) => {
            f.push(field, "must be positive");
            default
        }
        None => default,
    }
}

fn required<T: Copy>(v: Option<T>, field: &str, f: &mut Findings) -> Option<T> {
    if v.is_none() {
        f.push(field, "required for this pipeline");
    }
    v
}

fn at_least_one(v: Option<usize>, field: &str, f: &mut Findings) -> Option<usize> {
    let v = required(v, field, f)?;
    if v == 0 {
        f.push(field, "must be at least 1");
        return None;
    }
    Some(v)
}

fn poi_source(p: &RawPipeline, w: &Polygon, base: &Path, f: &mut Findings) -> Option<PoiSource> {
    let samples = p.samples.unwrap_or(2000);
    if samples == 0 {
        f.push("pipeline.samples", "must be at least 1");
    }
    match p.pois.as_deref() {
        Some("kmeans") => Some(PoiSource::KMeans {
            k: at_least_one(p.k, "pipeline.k", f)?,
            samples,
        }),
        Some("gmm") => Some(PoiSource::Gmm {
            k: at_least_one(p.k, "pipeline.k", f)?,
            samples,
        }),
        Some("svgd") => {
            let k = at_least_one(p.k, "pipeline.k", f)?;
            let bandwidth = match p.bandwidth.as_deref() {
                None | Some("median") => Bandwidth::Median,
                Some("footprint") => Bandwidth::Footprint(positive(p.footprint_radius, "pipeline.footprint_radius", 0.1, f)),
                Some(other) => {
                    f.push("pipeline.bandwidth", format!("unknown bandwidth '{other}' (median, footprint)"));
                    return None;
                }
            };
            Some(PoiSource::Svgd {
                k,
                bandwidth,
                step: positive(p.step, "pipeline.step", 1e-3, f),
                iters: p.iters.unwrap_or(500),
            })
        }
        Some("file") => {
            let Some(rel) = &p.poi_file else {
                f.push("pipeline.poi_file", "required when pois = 'file'");
                return None;
            };
            let path = resolve(base, rel);
            let text = match std::fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) => {
                    f.push("pipeline.poi_file", format!("cannot read {}: {e}", path.display()));
                    return None;
                }
            };
            match parse_point_csv::<f64>(&text) {
                Ok(points) => {
                    if let Some(i) = points.iter().position(|q| !w.contains_with(*q, 1e-9)) {
                        f.push("pipeline.poi_file", format!("point {i} lies outside the workspace"));
                    }
                    Some(PoiSource::File { points })
                }
                Err(e) => {
                    f.push("pipeline.poi_file", e.to_string());
                    None
                }
            }
        }
        Some(other) => {
            f.push("pipeline.pois", format!("unknown source '{other}' (kmeans, gmm, svgd, file)"));
            None
        }
        None => {
            f.push("pipeline.pois", "required for this pipeline");
            None
        }
    }
}

/// Structural validation of `raw`; loads referenced files but runs no computation.
pub fn validate(raw: &RawConfig, base: &Path) -> Result<Scenario, Vec<Finding>> {
    let mut f = Findings::default();
    let w = workspace(raw.workspace.as_ref(), &mut f);
    let phi = w.as_ref().and_then(|w| density(raw.density.as_ref(), w, base, &mut f));
    let empty_agents = RawAgents::default();
    let agents = raw.agents.as_ref().unwrap_or_else(|| {
        f.push("agents", "missing section");
        &empty_agents
    });
    let count = agents.count.unwrap_or(0);
    if agents.count.is_none() && raw.agents.is_some() {
        f.push("agents.count", "missing");
    } else if agents.count == Some(0) {
        f.push("agents.count", "must be at least 1");
    }
    let positions = match &agents.positions {
        None => None,
        Some(RawPositions::Keyword(k)) if k == "sample" => None,
        Some(RawPositions::Keyword(k)) => {
            f.push("agents.positions", format!("expected 'sample' or a list of points, found '{k}'"));
            None
        }
        Some(RawPositions::List(list)) => {
            if list.len() != count {
                f.push("agents.positions", format!("expected {count} entries, found {}", list.len()));
            }
            let pts: Vec<Point> = list.iter().map(|p| Vec2::new(p[0], p[1])).collect();
            if let Some(w) = &w {
                if let Some(i) = pts.iter().position(|q| !w.contains_with(*q, 1e-9)) {
                    f.push(&format!("agents.positions[{i}]"), "lies outside the workspace");
                }
            }
            Some(pts)
        }
    };
    if let Some(r) = &agents.radii {
        if r.len() != count {
            f.push("agents.radii", format!("expected {count} entries (one per agent), found {}", r.len()));
        }
        if let Some(i) = r.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
            f.push(&format!("agents.radii[{i}]"), "must be finite and nonnegative");
        }
    }
    let mut services = Vec::new();
    match (&agents.service, &agents.services) {
        (Some(_), Some(_)) => f.push("agents", "give either service or services, not both"),
        (Some(s), None) => {
            if let Some(m) = service(s, "agents.service", &mut f) {
                services = vec![m; count];
            }
        }
        (None, Some(list)) => {
            if list.len() != count {
                f.push("agents.services", format!("expected {count} entries (one per agent), found {}", list.len()));
            }
            services = list
                .iter()
                .enumerate()
                .filter_map(|(i, s)| service(s, &format!("agents.services[{i}]"), &mut f))
                .collect();
        }
        (None, None) => {}
    }

    let empty_pipeline = RawPipeline::default();
    let p = raw.pipeline.as_ref().unwrap_or_else(|| {
        f.push("pipeline", "missing section");
        &empty_pipeline
    });
    let tol = positive(p.tol, "pipeline.tol", 1e-6, &mut f);
    let resolution = p.resolution.unwrap_or(96);
    if !(8..=1024).contains(&resolution) {
        f.push("pipeline.resolution", "must lie in 8..=1024");
    }
    let ws = w.clone().unwrap_or_else(ConvexPolygon::unit_square);
    let pipeline = match p.kind.as_deref() {
        Some("lloyd") => at_least_one(p.iters, "pipeline.iters", &mut f).map(|iters| Pipeline::Lloyd { iters, tol }),
        Some("power_lloyd") => {
            let iters = at_least_one(p.iters, "pipeline.iters", &mut f);
            let equitable = match p.radii_mode.as_deref() {
                None | Some("given") => {
                    if agents.radii.is_none() {
                        f.push("agents.radii", "power_lloyd with given radii needs one radius per agent");
                    }
                    false
                }
                Some("equitable") => true,
                Some(other) => {
                    f.push("pipeline.radii_mode", format!("unknown mode '{other}' (given, equitable)"));
                    false
                }
            };
            let equitable_tol = positive(p.equitable_tol, "pipeline.equitable_tol", 1e-3 / count.max(1) as f64, &mut f);
            iters.map(|iters| Pipeline::PowerLloyd {
                iters,
                tol,
                equitable,
                equitable_tol,
            })
        }
        Some("poi_assign") => {
            let source = poi_source(p, &ws, base, &mut f);
            let cost = match p.cost.as_deref() {
                Some("footprint") => Some(CostKind::Footprint),
                Some("kld") => Some(CostKind::Kld),
                Some("ot") => Some(CostKind::Ot),
                Some(other) => {
                    f.push("pipeline.cost", format!("unknown cost '{other}' (footprint, kld, ot)"));
                    None
                }
                None => {
                    f.push("pipeline.cost", "required for this pipeline");
                    None
                }
            };
            if let Some(src) = &source {
                if count > src.count() {
                    f.push(
                        "agents.count",
                        format!("infeasible assignment shape: {count} agents but only {} PoIs", src.count()),
                    );
                }
            }
            if agents.service.is_none() && agents.services.is_none() {
                f.push("agents.service", "poi_assign needs a service model");
            }
            let gaussian = !services.is_empty() && services.iter().all(|s| s.covariance.is_some());
            match cost {
                Some(CostKind::Kld) => {
                    if !matches!(source, Some(PoiSource::Gmm { .. })) {
                        f.push("pipeline.pois", "kld cost needs pois = 'gmm'");
                    }
                    if !gaussian {
                        f.push("agents.service", "kld cost needs gaussian services");
                    }
                }
                Some(CostKind::Ot) if !gaussian => f.push("agents.service", "ot cost needs gaussian services"),
                _ => {}
            }
            match (source, cost) {
                (Some(source), Some(cost)) => Some(Pipeline::PoiAssign {
                    source,
                    cost,
                    ot_samples: p.ot_samples.unwrap_or(64).max(1),
                    samples: p.samples.unwrap_or(2000),
                }),
                _ => None,
            }
        }
        Some("submodular_assign") => {
            let source = poi_source(p, &ws, base, &mut f);
            let uniform = match p.matroid.as_deref() {
                Some("uniform") => Some(true),
                Some("partition") => Some(false),
                Some(other) => {
                    f.push("pipeline.matroid", format!("unknown matroid '{other}' (uniform, partition)"));
                    None
                }
                None => {
                    f.push("pipeline.matroid", "required for this pipeline");
                    None
                }
            };
            let utility = match p.utility.as_deref() {
                Some("exemplar") => Some(Utility::Exemplar),
                Some("coverage") => Some(Utility::Coverage),
                Some(other) => {
                    f.push("pipeline.utility", format!("unknown utility '{other}' (exemplar, coverage)"));
                    None
                }
                None => {
                    f.push("pipeline.utility", "required for this pipeline");
                    None
                }
            };
            let block_order = match p.block_order.as_deref() {
                None | Some("ascending") => BlockOrder::Ascending,
                Some("descending") => BlockOrder::Descending,
                Some(other) => {
                    f.push("pipeline.block_order", format!("unknown order '{other}' (ascending, descending)"));
                    BlockOrder::Ascending
                }
            };
            if let (Some(src), Some(true)) = (&source, uniform) {
                if count > src.count() {
                    f.push(
                        "agents.count",
                        format!("infeasible assignment shape: {count} agents but only {} PoIs", src.count()),
                    );
                }
            }
            if utility == Some(Utility::Coverage) && coverage_radii(agents, &services, count).is_none() {
                f.push("agents", "coverage utility needs disk services or one radius per agent");
            }
            match (source, uniform, utility) {
                (Some(source), Some(uniform), Some(utility)) => Some(Pipeline::SubmodularAssign {
                    source,
                    uniform,
                    utility,
                    block_order,
                    samples: p.samples.unwrap_or(500),
                }),
                _ => None,
            }
        }
        Some("swarm") => {
            let iters = at_least_one(p.iters, "pipeline.iters", &mut f);
            let tau = required(p.tau, "pipeline.tau", &mut f);
            if let Some(t) = tau {
                if !(t > 0.0 && t <= 1.0) {
                    f.push("pipeline.tau", "must lie in (0, 1]");
                }
            }
            if let Some(b) = p.batch {
                if b == 0 || b > count {
                    f.push("pipeline.batch", format!("must lie in 1..={count}"));
                }
            }
            if positions.is_some() {
                f.push("agents.positions", "swarm starts from uniform random positions; use 'sample' or omit");
            }
            if let Some(b) = p.metric_bins {
                if b < 2 {
                    f.push("pipeline.metric_bins", "must be at least 2");
                }
            }
            match (iters, tau) {
                (Some(iters), Some(tau)) => Some(Pipeline::Swarm {
                    iters,
                    tau,
                    batch: p.batch,
                    frame_every: p.frame_every.unwrap_or(10).max(1),
                    metric_bins: p.metric_bins,
                }),
                _ => None,
            }
        }
        Some(other) => {
            f.push(
                "pipeline.kind",
                format!("unknown pipeline '{other}' (lloyd, power_lloyd, poi_assign, submodular_assign, swarm)"),
            );
            None
        }
        None => {
            f.push("pipeline.kind", "missing");
            None
        }
    };

    if !f.0.is_empty() {
        return Err(f.0);
    }
    let (Some(w), Some(phi), Some(pipeline)) = (w, phi, pipeline) else {
        unreachable!("every missing piece records a finding");
    };
    Ok(Scenario {
        seed: raw.seed.unwrap_or(0),
        output: PathBuf::from(raw.output.clone().unwrap_or_else(|| "out".into())),
        workspace: w,
        density: phi,
        count,
        positions,
        radii: agents.radii.clone(),
        coverage_radii: coverage_radii(agents, &services, count),
        services,
        pipeline,
        resolution,
    })
}

/// Coverage radius per agent: disk footprint radius, else the power radius.
pub fn coverage_radii(agents: &RawAgents, services: &[ServiceModel<f64>], count: usize) -> Option<Vec<f64>> {
    if services.len() == count && count > 0 {
        let r: Option<Vec<f64>> = services
            .iter()
            .map(|s| match s.footprint {
                Footprint::Disk { radius } => Some(radius),
                _ => None,
            })
            .collect();
        if r.is_some() {
            return r;
        }
    }
    agents.radii.clone().filter(|r| r.len() == count)
}
