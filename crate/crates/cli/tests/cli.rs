use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn coverage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coverage"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn report(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json report")
}

const LLOYD: &str = r#"
seed = 4
[workspace]
rectangle = [0.0, 0.0, 1.0, 1.0]
[density]
kind = "gmm"
components = [{ weight = 1.0, mean = [0.4, 0.6], covariance = [0.02, 0.0, 0.02] }]
[agents]
count = 3
positions = "sample"
[pipeline]
kind = "lloyd"
iters = 30
"#;

fn scenario_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

#[test]
fn well_formed_config_validates_clean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", LLOYD);
    let out = coverage(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["valid"], true);
    assert_eq!(r["errors"].as_array().unwrap().len(), 0);
}

#[test]
fn shipped_scenarios_validate() {
    for entry in std::fs::read_dir(scenario_root()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let out = coverage(&["validate", p.to_str().unwrap()]);
            assert_eq!(out.status.code(), Some(0), "{}: {}", p.display(), String::from_utf8_lossy(&out.stdout));
        }
    }
}

#[test]
fn more_agents_than_pois_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.toml",
        r#"
[workspace]
rectangle = [0.0, 0.0, 1.0, 1.0]
[density]
kind = "uniform"
[agents]
count = 5
service = { kind = "disk", radius = 0.1 }
[pipeline]
kind = "poi_assign"
pois = "kmeans"
k = 3
cost = "footprint"
"#,
    );
    let out = coverage(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let text = serde_json::to_string(&report(&out)["errors"]).unwrap();
    assert!(text.contains("infeasible assignment shape"), "{text}");
}

#[test]
fn radii_length_mismatch_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", &LLOYD.replace("positions = \"sample\"", "radii = [0.1, 0.2]"));
    let out = coverage(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let errors = report(&out)["errors"].clone();
    assert!(
        errors.as_array().unwrap().iter().any(|e| e["field"] == "agents.radii"),
        "{errors}"
    );
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", &LLOYD.replace("iters = 30", "iters = 30\nspeed = 2"));
    let out = coverage(&["validate", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(report(&out)["valid"], false);
}

#[test]
fn missing_density_file_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.toml",
        r#"
[workspace]
rectangle = [0.0, 0.0, 1.0, 1.0]
[density]
kind = "image"
path = "nowhere.pgm"
[agents]
count = 10
[pipeline]
kind = "swarm"
iters = 5
tau = 0.5
"#,
    );
    let out_dir = dir.path().join("run");
    let out = coverage(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("density.path"));
    assert!(!out_dir.exists());
}

#[test]
fn lloyd_run_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", LLOYD);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for o in [&a, &b] {
        let out = coverage(&["run", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["metrics.jsonl", "final.csv", "render_initial.svg", "render_final.svg", "manifest.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let ma = std::fs::read(a.join("metrics.jsonl")).unwrap();
    assert_eq!(ma, std::fs::read(b.join("metrics.jsonl")).unwrap());

    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["pipeline"], "lloyd");
    assert_eq!(manifest["config"]["agents"]["count"], 3);

    let costs: Vec<f64> = String::from_utf8(ma)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter_map(|v| v["cost"].as_f64())
        .collect();
    assert!(costs.len() > 1);
    for w in costs.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-6), "{costs:?}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "a.toml", LLOYD);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    coverage(&["run", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    coverage(&["run", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "99"]);
    assert_ne!(
        std::fs::read(a.join("metrics.jsonl")).unwrap(),
        std::fs::read(b.join("metrics.jsonl")).unwrap()
    );
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn power_scenario_draws_dashed_disks() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let cfg = scenario_root().join("four_modes_power.toml");
    let out = coverage(&["run", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let svg = std::fs::read_to_string(o.join("render_final.svg")).unwrap();
    assert_eq!(svg.matches("stroke-dasharray").count(), 4);
    assert!(svg.contains("id=\"density\""));
}

#[test]
fn swarm_scenario_writes_frames_and_w2_trends_down() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let pgm = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets/portrait.pgm");
    let cfg = write(
        dir.path(),
        "s.toml",
        &format!(
            r#"
seed = 2
[workspace]
rectangle = [0.0, 0.0, 1.0, 1.0]
[density]
kind = "image"
path = "{}"
[agents]
count = 300
[pipeline]
kind = "swarm"
iters = 12
tau = 0.3
frame_every = 3
"#,
            pgm.display()
        ),
    );
    let out = coverage(&["run", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let frames = std::fs::read_dir(&o)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("render_frame_"))
        .count();
    assert!(frames >= 12 / 3, "{frames} frames");
    let w2: Vec<f64> = std::fs::read_to_string(o.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter_map(|v| v["w2"].as_f64())
        .collect();
    assert!(w2.len() >= 2);
    assert!(w2.last().unwrap() < &(0.5 * w2[0]), "{w2:?}");
    let rises = w2.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(rises * 4 <= w2.len(), "{w2:?}");
    assert!(o.join("occupancy.csv").exists());
    assert!(o.join("voronoi_graph.csv").exists());
}

#[test]
fn poi_assign_run_writes_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path().join("o");
    let cfg = scenario_root().join("kmeans_assign.toml");
    let out = coverage(&["run", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let a: serde_json::Value = serde_json::from_slice(&std::fs::read(o.join("assignment.json")).unwrap()).unwrap();
    let pairs = a["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 3);
    let mut pois: Vec<u64> = pairs.iter().map(|p| p[1].as_u64().unwrap()).collect();
    pois.sort();
    pois.dedup();
    assert_eq!(pois.len(), 3);
    assert!(o.join("cost_matrix.csv").exists());
}
