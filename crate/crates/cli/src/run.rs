//! Pipeline execution and artifact writing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use coverage_core::assign::{
    footprint_cost, kld_cost, ot_registration_cost, solve_assignment, AssignError, CostMatrix, Footprint,
};
use coverage_core::coverage::{
    agents_from, build_partition, equitable_weights, run_descent_observed, CoverageError, PartitionKind,
};
use coverage_core::density::GaussianMixture;
use coverage_core::geometry::nearest_site;
use coverage_core::poi::{gmm_em, kmeans, svgd, PoiError, PoiSet, Provenance};
use coverage_core::submod::{
    greedy_partition, greedy_uniform, pair_blocks, ExemplarClustering, HeterogeneousCoverage, Lifted, SetFunction,
    SubmodError,
};
use coverage_core::swarm::{
    default_metric_bins, occupancy_histogram, run_reconfiguration_observed, voronoi_graph, ReconfigOptions, SwarmError,
};
use coverage_core::transport::TransportError;
use coverage_core::Point;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{CostKind, Pipeline, PoiSource, RawConfig, Scenario, Utility};
use crate::render;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

macro_rules! numerical {
    ($($t:ty),*) => {
        $(impl From<$t> for RunError {
            fn from(e: $t) -> Self {
                RunError::Numerical(e.to_string())
            }
        })*
    };
}
numerical!(CoverageError, PoiError, AssignError, SubmodError, SwarmError, TransportError);

/// Output directory with a streaming `metrics.jsonl`.
pub struct Output {
    dir: PathBuf,
    metrics: BufWriter<File>,
    files: Vec<String>,
    manifest: Value,
}

impl Output {
    pub fn create(dir: &Path, manifest: Value) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let metrics = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
        let mut out = Self {
            dir: dir.to_path_buf(),
            metrics,
            files: vec!["manifest.json".into(), "metrics.jsonl".into()],
            manifest,
        };
        out.write_manifest("running", None)?;
        Ok(out)
    }

    /// Appends one JSON line and flushes, so partial logs survive a failure.
    pub fn record(&mut self, v: &Value) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.metrics, v)?;
        self.metrics.write_all(b"\n")?;
        self.metrics.flush()
    }

    pub fn file(&mut self, name: &str, contents: &str) -> std::io::Result<()> {
        std::fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_manifest(&mut self, status: &str, error: Option<&str>) -> std::io::Result<()> {
        let mut m = self.manifest.clone();
        m["status"] = json!(status);
        m["files"] = json!(self.files);
        if let Some(e) = error {
            m["error"] = json!(e);
        }
        std::fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")
    }
}

fn pt(p: Point) -> Value {
    json!([p.x, p.y])
}

fn pts(ps: &[Point]) -> Value {
    Value::Array(ps.iter().map(|p| pt(*p)).collect())
}

/// Resolved config echoed into `manifest.json`.
pub fn manifest(raw: &RawConfig, scenario: &Scenario) -> Value {
    json!({
        "tool": "coverage",
        "version": env!("CARGO_PKG_VERSION"),
        "pipeline": scenario.pipeline.name(),
        "seed": scenario.seed,
        "config": raw,
    })
}

/// Runs the scenario, writing every artifact into its output directory.
pub fn run(raw: &RawConfig, scenario: &Scenario) -> Result<(), RunError> {
    let mut out = Output::create(&scenario.output, manifest(raw, scenario))?;
    let result = match &scenario.pipeline {
        Pipeline::Lloyd { iters, tol } => descent(scenario, &mut out, PartitionKind::Voronoi, *iters, *tol, None),
        Pipeline::PowerLloyd {
            iters,
            tol,
            equitable,
            equitable_tol,
        } => descent(
            scenario,
            &mut out,
            PartitionKind::Power,
            *iters,
            *tol,
            equitable.then_some(*equitable_tol),
        ),
        Pipeline::PoiAssign {
            source,
            cost,
            ot_samples,
            samples,
        } => poi_assign(scenario, &mut out, source, *cost, *ot_samples, *samples),
        Pipeline::SubmodularAssign {
            source,
            uniform,
            utility,
            block_order,
            samples,
        } => submodular(scenario, &mut out, source, *uniform, *utility, block_order, *samples),
        Pipeline::Swarm {
            iters,
            tau,
            batch,
            frame_every,
            metric_bins,
        } => swarm(scenario, &mut out, *iters, *tau, *batch, *frame_every, *metric_bins),
    };
    match &result {
        Ok(()) => out.write_manifest("ok", None)?,
        Err(e) => out.write_manifest("failed", Some(&e.to_string()))?,
    }
    result
}

fn initial_positions(s: &Scenario) -> Vec<Point> {
    s.positions.clone().unwrap_or_else(|| s.density.sample(s.count, s.seed))
}

fn descent(
    s: &Scenario,
    out: &mut Output,
    kind: PartitionKind,
    iters: usize,
    tol: f64,
    equitable: Option<f64>,
) -> Result<(), RunError> {
    let phi = &s.density;
    let start = initial_positions(s);
    let radii = match kind {
        PartitionKind::Power => s.radii.clone().or_else(|| Some(vec![0.0; s.count])),
        PartitionKind::Voronoi => None,
    };
    let agents = agents_from(&start, radii.as_deref());
    let initial = build_partition(phi, &agents, kind)?;
    out.file(
        "render_initial.svg",
        &render::coverage_scene(phi, s.resolution, &initial.cells, &start, radii.as_deref()),
    )?;
    let mut io_err = None;
    let traj = run_descent_observed(phi, &agents, kind, iters, tol, |r| {
        let line = json!({
            "iter": r.iter,
            "cost": r.cost,
            "max_displacement": r.max_displacement,
            "masses": r.masses,
            "positions": pts(&r.positions),
        });
        if let Err(e) = out.record(&line) {
            io_err.get_or_insert(e);
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let traj = traj?;
    let mut finals = traj.final_agents.clone();
    if let Some(tol_mass) = equitable {
        let w = equitable_weights(phi, &traj.final_positions(), tol_mass)?;
        for (a, r) in finals.iter_mut().zip(&w) {
            a.power_radius = *r;
        }
    }
    let part = build_partition(phi, &finals, kind)?;
    let positions: Vec<Point> = finals.iter().map(|a| a.position).collect();
    let final_radii: Option<Vec<f64>> = (kind == PartitionKind::Power).then(|| finals.iter().map(|a| a.power_radius).collect());
    out.record(&json!({
        "stage": "final",
        "converged": traj.converged,
        "iterations": traj.records.len(),
        "equitable": equitable.is_some(),
        "radii": final_radii,
        "masses": part.masses,
    }))?;
    let mut csv = String::from("agent,x,y,rho,mass,centroid_x,centroid_y\n");
    for (i, a) in finals.iter().enumerate() {
        let c = part.centroids[i].unwrap_or(a.position);
        csv.push_str(&format!(
            "{i},{},{},{},{},{},{}\n",
            a.position.x, a.position.y, a.power_radius, part.masses[i], c.x, c.y
        ));
    }
    out.file("final.csv", &csv)?;
    out.file(
        "render_final.svg",
        &render::coverage_scene(phi, s.resolution, &part.cells, &positions, final_radii.as_deref()),
    )?;
    Ok(())
}

/// PoIs, the fitted mixture when there is one, and the data cluster of each PoI.
struct Pois {
    set: PoiSet<f64>,
    mixture: Option<GaussianMixture<f64>>,
    clusters: Vec<Vec<Point>>,
}

fn extract_pois(s: &Scenario, source: &PoiSource, data: &[Point]) -> Result<Pois, RunError> {
    let (set, mixture) = match source {
        PoiSource::KMeans { k, .. } => (kmeans(data, *k, s.seed, 300)?.pois, None),
        PoiSource::Gmm { k, .. } => {
            let fit = gmm_em(data, *k, s.seed, 300, 1e-6)?;
            (fit.pois, Some(fit.mixture))
        }
        PoiSource::Svgd {
            k,
            bandwidth,
            step,
            iters,
        } => (svgd(&s.density, *k, *bandwidth, *step, *iters, s.seed)?.pois, None),
        PoiSource::File { points } => (
            PoiSet {
                points: points.clone(),
                provenance: Provenance::KMeans { k: 0 },
            },
            None,
        ),
    };
    let mut clusters = vec![Vec::new(); set.len()];
    for d in data {
        let j = match &mixture {
            Some(m) => {
                let logs: Vec<f64> = m.components().iter().map(|c| c.weight.ln() + c.log_pdf(*d)).collect();
                (0..logs.len()).fold(0, |b, j| if logs[j] > logs[b] { j } else { b })
            }
            None => nearest_site(&set.points, None, *d),
        };
        clusters[j].push(*d);
    }
    for (j, c) in clusters.iter_mut().enumerate() {
        if c.is_empty() {
            c.push(set.points[j]);
        }
    }
    Ok(Pois { set, mixture, clusters })
}

fn poi_record(source: &PoiSource, pois: &Pois) -> Value {
    let provenance = match source {
        PoiSource::File { .. } => "file".to_string(),
        _ => pois.set.provenance.to_string(),
    };
    json!({
        "stage": "pois",
        "count": pois.set.len(),
        "provenance": provenance,
        "points": pts(&pois.set.points),
    })
}

fn pois_csv(source: &PoiSource, pois: &Pois) -> String {
    match source {
        PoiSource::File { .. } => {
            let mut csv = String::from("x,y,provenance\n");
            for p in &pois.set.points {
                csv.push_str(&format!("{},{},file\n", p.x, p.y));
            }
            csv
        }
        _ => pois.set.to_csv(),
    }
}

fn poi_assign(
    s: &Scenario,
    out: &mut Output,
    source: &PoiSource,
    cost: CostKind,
    ot_samples: usize,
    samples: usize,
) -> Result<(), RunError> {
    let phi = &s.density;
    let data = phi.sample(samples, s.seed);
    let pois = extract_pois(s, source, &data)?;
    out.record(&poi_record(source, &pois))?;
    out.file("pois.csv", &pois_csv(source, &pois))?;
    let n = pois.set.len();
    let cm = CostMatrix::build(s.count, n, |i, j| match cost {
        CostKind::Footprint => footprint_cost(phi, &s.services[i], pois.set.points[j]),
        CostKind::Kld => {
            let comps = pois.mixture.as_ref().expect("kld cost runs on a fitted mixture").components();
            kld_cost(&s.services[i], &comps[j])
        }
        CostKind::Ot => {
            let seed = s.seed ^ ((i * n + j) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let (c, theta) = ot_registration_cost(&s.services[i], &pois.clusters[j], ot_samples, seed)?;
            // the registration translates samples onto the cluster mean
            Ok((c, theta))
        }
    })?;
    out.file("cost_matrix.csv", &cm.to_csv())?;
    let result = solve_assignment(&cm)?;
    let pairs: Vec<Value> = result.pairs.iter().map(|(i, j, t)| json!([i, j, t])).collect();
    let assignment = json!({ "pairs": pairs, "cost": result.total });
    out.record(&json!({ "stage": "assignment", "pairs": pairs, "cost": result.total }))?;
    out.file("assignment.json", &(serde_json::to_string_pretty(&assignment).expect("json") + "\n"))?;
    let mut csv = String::from("agent,poi,x,y,theta,cost\n");
    let mut placed = Vec::new();
    let mut footprints = Vec::new();
    for (i, j, theta) in &result.pairs {
        let p = pois.set.points[*j];
        csv.push_str(&format!("{i},{j},{},{},{theta},{}\n", p.x, p.y, cm.get(*i, *j)));
        placed.push((*i, p));
        if let Ok(f) = s.services[*i].footprint_polygon(p, *theta) {
            footprints.push(f);
        }
    }
    out.file("final.csv", &csv)?;
    out.file(
        "render_final.svg",
        &render::assignment_scene(phi, s.resolution, &pois.set.points, &placed, &footprints),
    )?;
    Ok(())
}

fn submodular(
    s: &Scenario,
    out: &mut Output,
    source: &PoiSource,
    uniform: bool,
    utility: Utility,
    block_order: &coverage_core::submod::BlockOrder,
    samples: usize,
) -> Result<(), RunError> {
    let phi = &s.density;
    let data = phi.sample(samples, s.seed);
    let pois = extract_pois(s, source, &data)?;
    out.record(&poi_record(source, &pois))?;
    out.file("pois.csv", &pois_csv(source, &pois))?;
    let n = pois.set.len();
    let weights = vec![1.0 / data.len() as f64; data.len()];
    let exemplar = ExemplarClustering::with_diameter(pois.set.points.clone(), data.clone(), phi.workspace().diameter())?;

    // (agent, poi, gain) per round and the final utility
    let (rounds, value): (Vec<(usize, usize, f64)>, f64) = match (utility, uniform) {
        (Utility::Exemplar, true) => {
            let r = greedy_uniform(&exemplar, s.count)?;
            (r.trace.iter().enumerate().map(|(i, (x, g))| (i, *x, *g)).collect(), r.value)
        }
        (Utility::Exemplar, false) => {
            let f = Lifted {
                inner: exemplar.clone(),
                agents: s.count,
            };
            let r = greedy_partition(&f, &pair_blocks(s.count, n), block_order)?;
            (
                r.picks.iter().zip(&r.trace).map(|((b, x), (_, g))| (*b, x % n, *g)).collect(),
                r.value,
            )
        }
        (Utility::Coverage, _) => {
            let radii = s.coverage_radii.as_ref().expect("validated");
            let f = HeterogeneousCoverage::new(radii, &pois.set.points, &data, weights.clone())?;
            let blocks = f.blocks();
            let r = greedy_partition(&f, &blocks, block_order)?;
            (
                r.picks
                    .iter()
                    .zip(&r.trace)
                    .map(|((_, x), (_, g))| {
                        let (a, j) = f.pair(*x);
                        (a, j, *g)
                    })
                    .collect(),
                f.eval(&r.selected()),
            )
        }
    };
    for (round, (agent, poi, gain)) in rounds.iter().enumerate() {
        out.record(&json!({ "round": round, "agent": agent, "poi": poi, "gain": gain }))?;
    }
    out.record(&json!({ "stage": "result", "value": value }))?;
    let mut csv = String::from("agent,poi,x,y,gain\n");
    let mut placed = Vec::new();
    let mut footprints = Vec::new();
    let mut sorted = rounds.clone();
    sorted.sort_by_key(|r| r.0);
    for (agent, poi, gain) in &sorted {
        let p = pois.set.points[*poi];
        csv.push_str(&format!("{agent},{poi},{},{},{gain}\n", p.x, p.y));
        placed.push((*agent, p));
        if let Some(model) = s.services.get(*agent) {
            if matches!(model.footprint, Footprint::Disk { .. }) {
                if let Ok(f) = model.footprint_polygon(p, 0.0) {
                    footprints.push(f);
                }
            }
        }
    }
    out.file("final.csv", &csv)?;
    out.file(
        "render_final.svg",
        &render::assignment_scene(phi, s.resolution, &pois.set.points, &placed, &footprints),
    )?;
    Ok(())
}

fn swarm(
    s: &Scenario,
    out: &mut Output,
    iters: usize,
    tau: f64,
    batch: Option<usize>,
    frame_every: usize,
    metric_bins: Option<usize>,
) -> Result<(), RunError> {
    let phi = &s.density;
    let opts = ReconfigOptions {
        iters,
        tau,
        batch,
        seed: s.seed,
        frame_every,
        metric_bins,
    };
    let mut io_err = None;
    let run = run_reconfiguration_observed(phi, s.count, &opts, |r, _| {
        let line = json!({
            "iter": r.iter,
            "w2": r.w2,
            "objective": r.objective,
            "mean_displacement": r.mean_displacement,
        });
        if let Err(e) = out.record(&line) {
            io_err.get_or_insert(e);
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    let run = run?;
    for (iter, frame) in &run.frames {
        out.file(&format!("render_frame_{iter:04}.svg"), &render::swarm_scene(phi, s.resolution, frame))?;
    }
    let fin = &run.final_state.positions;
    out.file("render_final.svg", &render::swarm_scene(phi, s.resolution, fin))?;
    let mut csv = String::from("agent,x,y\n");
    for (i, p) in fin.iter().enumerate() {
        csv.push_str(&format!("{i},{},{}\n", p.x, p.y));
    }
    out.file("final.csv", &csv)?;
    let bins = metric_bins.unwrap_or_else(|| default_metric_bins(s.count));
    let counts = occupancy_histogram(fin, &phi.workspace().bounding_box(), bins, bins);
    let mut occ = String::from("row,col,count\n");
    for (k, c) in counts.iter().enumerate() {
        occ.push_str(&format!("{},{},{c}\n", k / bins, k % bins));
    }
    out.file("occupancy.csv", &occ)?;
    let edges = voronoi_graph(phi.workspace(), fin)?;
    let mut g = String::from("i,j\n");
    for (i, j) in &edges {
        g.push_str(&format!("{i},{j}\n"));
    }
    out.file("voronoi_graph.csv", &g)?;
    let first = run.records.first().map(|r| r.w2);
    let last = run.records.last().map(|r| r.w2);
    out.record(&json!({
        "stage": "final",
        "converged": run.converged,
        "iterations": run.records.len() - 1,
        "w2_initial": first,
        "w2_final": last,
        "voronoi_edges": edges.len(),
    }))?;
    Ok(())
}
