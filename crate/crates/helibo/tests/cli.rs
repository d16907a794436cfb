//! End-to-end checks of the command layer and the installed binary:
//! exit codes, artifact schemas, and manifest-based reproducibility.

use std::fs;
use std::process::Command;

use helibo::commands::{cmd_evaluate, cmd_landscape, cmd_uncertainty};
use helibo::config::RunConfig;
use helibo::detector::EnvCondition;

fn helibo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_helibo"))
}

/// A configuration small enough for binary-level runs.
const TINY_CONFIG: &str = "\
seed = 11

[bo]
budget = 2
init_samples = 2

[trials]
trials_per_eval = 2
max_steps = 4000
";

#[test]
fn invalid_env_exits_2_and_names_the_field() {
    let out = helibo()
        .args(["optimize", "--env", "foggy_dawn"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("env"), "stderr: {stderr}");
}

#[test]
fn out_of_range_params_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = helibo()
        .args([
            "evaluate",
            "--scale",
            "1.5",
            "--brightness",
            "0.5",
            "--output-dir",
        ])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("params"), "stderr: {stderr}");
}

#[test]
fn set_overrides_reach_any_field() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = helibo()
        .args([
            "landscape",
            "--set",
            "trials.trials_per_eval=3",
            "--set",
            "env=night_rain",
            "--set",
            "landscape.clear_day.q_max=0.5",
        ])
        .arg("--output-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let manifest = fs::read_to_string(out_dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("trials_per_eval = 3"), "{manifest}");
    assert!(manifest.contains("env = \"night_rain\""));
    assert!(manifest.contains("q_max = 0.5"));

    // A typo in the path is a config error, not a silent no-op.
    let out = helibo()
        .args(["landscape", "--set", "trials.trials_per_evall=3"])
        .arg("--output-dir")
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "definitely_not_a_key = 1\n").unwrap();
    let out = helibo()
        .arg("optimize")
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimize_rerun_from_manifest_reproduces_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    fs::write(&config, TINY_CONFIG).unwrap();
    let dir_a = dir.path().join("a");
    let dir_b = dir.path().join("b");

    let run_a = helibo()
        .arg("optimize")
        .arg("--config")
        .arg(&config)
        .arg("--output-dir")
        .arg(&dir_a)
        .output()
        .unwrap();
    assert!(run_a.status.success(), "{:?}", run_a);

    let run_b = helibo()
        .arg("optimize")
        .arg("--config")
        .arg(dir_a.join("manifest.toml"))
        .arg("--output-dir")
        .arg(&dir_b)
        .output()
        .unwrap();
    assert!(run_b.status.success(), "{:?}", run_b);

    for file in ["observations.csv", "contour.csv", "trials.csv"] {
        let a = fs::read(dir_a.join(file)).unwrap();
        let b = fs::read(dir_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} not reproduced from the manifest");
    }
    let manifest = fs::read_to_string(dir_a.join("manifest.toml")).unwrap();
    assert!(manifest.starts_with("# helibo"));
    assert!(manifest.contains("seed = 11"));
}

#[test]
fn seed_env_var_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = helibo()
        .arg("landscape")
        .arg("--output-dir")
        .arg(&out_dir)
        .env("HELIBO_SEED", "777")
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest = fs::read_to_string(out_dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 777"), "{manifest}");

    let rows = fs::read_to_string(out_dir.join("landscape.csv")).unwrap();
    // Schema comment + header + 101 x 101 rows per environment.
    assert_eq!(rows.lines().count(), 2 + 3 * 101 * 101);
}

#[test]
fn convert_labels_round_trip_via_binary() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in");
    fs::create_dir_all(&input).unwrap();
    fs::write(
        input.join("ann.csv"),
        "image,class_id,x_min,y_min,x_max,y_max,img_w,img_h\n\
         pad1.jpg,0,64,64,192,320,640,640\n",
    )
    .unwrap();
    let output = dir.path().join("labels");
    let out = helibo()
        .arg("convert-labels")
        .arg("--input")
        .arg(&input)
        .arg("--output")
        .arg(&output)
        .output()
        .unwrap();
    assert!(out.status.success());
    let label = fs::read_to_string(output.join("pad1.txt")).unwrap();
    assert_eq!(label, "0 0.200000 0.300000 0.200000 0.400000\n");

    // A degenerate annotation is a runtime failure, not a panic.
    fs::write(
        input.join("bad.csv"),
        "image,class_id,x_min,y_min,x_max,y_max,img_w,img_h\n\
         pad2.jpg,0,64,64,64,320,640,640\n",
    )
    .unwrap();
    let out = helibo()
        .arg("convert-labels")
        .arg("--input")
        .arg(&input)
        .arg("--output")
        .arg(&output)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn evaluate_far_from_every_peak_fails_to_land() {
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig {
        output_dir: dir.path().join("out"),
        ..RunConfig::default()
    };
    let rates = cmd_evaluate(&config, 0.0, 0.0, false).unwrap();
    assert_eq!(rates.len(), 1);
    assert!(rates[0].1 <= 0.2, "rate {} at (0,0)", rates[0].1);
    // trials.csv exists with one row per trial.
    let text = fs::read_to_string(config.output_dir.join("trials.csv")).unwrap();
    assert_eq!(text.lines().count(), 2 + 10);
}

#[test]
fn uncertainty_is_lowest_in_the_training_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = RunConfig {
        output_dir: dir.path().join("out"),
        ..RunConfig::default()
    };
    config.uncertainty.frames = 200;
    let rows = cmd_uncertainty(&config).unwrap();
    let day = rows
        .iter()
        .find(|(e, _)| *e == EnvCondition::ClearDay)
        .unwrap()
        .1
        .mean();
    for (env, u) in &rows {
        if *env != EnvCondition::ClearDay {
            assert!(u.mean() > day, "{env} mean {} <= day {day}", u.mean());
        }
    }

    // Identical seeds produce identical CSV bytes.
    let csv_a = fs::read(config.output_dir.join("uncertainty.csv")).unwrap();
    config.output_dir = dir.path().join("out2");
    cmd_uncertainty(&config).unwrap();
    let csv_b = fs::read(config.output_dir.join("uncertainty.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
}

#[test]
fn landscape_posterior_grid_respects_noise_floor() {
    let dir = tempfile::tempdir().unwrap();

    // A small real run provides the observations file.
    let mut config = RunConfig {
        output_dir: dir.path().join("run"),
        ..RunConfig::default()
    };
    config.bo.budget = 2;
    config.bo.init_samples = 3;
    config.trials.trials_per_eval = 2;
    config.trials.max_steps = 4000;
    helibo::commands::cmd_optimize(&config).unwrap();
    let observations = config.output_dir.join("observations.csv");

    let land_dir = dir.path().join("land");
    let mut land_config = RunConfig {
        output_dir: land_dir.clone(),
        ..RunConfig::default()
    };
    land_config.gp = config.gp;
    cmd_landscape(&land_config, Some(&observations)).unwrap();

    let contour = fs::read_to_string(land_dir.join("contour.csv")).unwrap();
    let grid: Vec<(f64, f64, f64)> = contour
        .lines()
        .skip(2)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (
                c[0].parse().unwrap(),
                c[1].parse().unwrap(),
                c[3].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(grid.len(), 101 * 101);

    let noise_std = config.gp.noise_var.sqrt();
    for (params, _) in helibo::report::read_observations(&observations)
        .unwrap()
        .iter()
        .map(|(p, y)| (*p, *y))
        .collect::<Vec<_>>()
    {
        // Nearest grid node to the observed point.
        let (s, b) = (params.scale, params.brightness);
        let node = grid
            .iter()
            .min_by(|a, c| {
                let da = (a.0 - s).hypot(a.1 - b);
                let dc = (c.0 - s).hypot(c.1 - b);
                da.partial_cmp(&dc).unwrap()
            })
            .unwrap();
        assert!(
            node.2 <= noise_std + 1e-3,
            "posterior std {} at observed ({s:.3}, {b:.3})",
            node.2
        );
    }
}
