//! Subcommand implementations shared by the CLI binary and the
//! integration tests. Each command validates its configuration, runs,
//! writes its CSV artifacts plus a reproducibility manifest into the
//! output directory, and prints a short summary.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::bayesopt::{self, GpDataset, GpError, OptimizationReport, OptimizeError};
use crate::config::{ConfigError, RunConfig};
use crate::detector::{
    ensemble_uncertainty, train_ensemble, AugParams, DetectorError, EnsembleUncertainty,
    EnvCondition,
};
use crate::geometry::{project_pad, WorldPose};
use crate::labels::{self, LabelError};
use crate::report;
use crate::seed;
use crate::trials::{self, EvalResult, TrialError};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CommandError {
    /// 2 for configuration problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            _ => 3,
        }
    }
}

impl From<OptimizeError<TrialError>> for CommandError {
    fn from(e: OptimizeError<TrialError>) -> Self {
        match e {
            OptimizeError::Gp(g) => CommandError::Gp(g),
            OptimizeError::Objective { source, .. } => CommandError::Trial(source),
        }
    }
}

fn write_manifest(config: &RunConfig) -> Result<(), CommandError> {
    fs::create_dir_all(&config.output_dir)?;
    fs::write(
        config.output_dir.join("manifest.toml"),
        config.manifest_toml(),
    )?;
    Ok(())
}

/// Run the full optimization loop for the configured environment and
/// write observations.csv, contour.csv, trials.csv, and the manifest.
pub fn cmd_optimize(config: &RunConfig) -> Result<OptimizationReport, CommandError> {
    config.validate()?;
    let scenario = config.scenario()?;
    let env = config.env;
    let run_seed = config.seed;

    let mut evals: Vec<(u32, EvalResult)> = Vec::new();
    let objective = |params: AugParams, index: u32| -> Result<f64, TrialError> {
        let eval_seed = seed::derive(run_seed, "eval", &[u64::from(index)]);
        let result = trials::evaluate(&scenario, params, env, eval_seed)?;
        let y = result.success_rate;
        println!(
            "eval {index:>3}: S={:.4} B={:.4} -> success rate {y:.2}",
            params.scale, params.brightness
        );
        evals.push((index, result));
        Ok(y)
    };
    let report = bayesopt::optimize(
        objective,
        &config.bo,
        config.gp.kernel,
        config.gp.noise_var,
        run_seed,
    )?;

    let mut data = GpDataset::new(config.gp.kernel, config.gp.noise_var);
    for o in &report.observations {
        data.push(o.params, o.y);
    }
    if config.bo.refit_hyperparams {
        data.refit()?;
    }
    let grid = bayesopt::posterior_grid(&data)?;

    let out = &config.output_dir;
    write_manifest(config)?;
    report::write_observations(&out.join("observations.csv"), &report)?;
    report::write_contour(&out.join("contour.csv"), &grid)?;
    report::write_trials(&out.join("trials.csv"), &evals)?;

    println!(
        "optimize[{env}]: best S={:.4} B={:.4} success rate {:.2} after {} evaluations ({})",
        report.best_params.scale,
        report.best_params.brightness,
        report.best_y,
        report.observations.len(),
        report.stop_reason
    );
    Ok(report)
}

/// Evaluate fixed parameters, optionally across all environments.
pub fn cmd_evaluate(
    config: &RunConfig,
    scale: f64,
    brightness: f64,
    all_envs: bool,
) -> Result<Vec<(EnvCondition, f64)>, CommandError> {
    config.validate()?;
    let params = AugParams::new(scale, brightness).map_err(|e| ConfigError::Invalid {
        field: "params",
        reason: e.to_string(),
    })?;
    let scenario = config.scenario()?;
    let envs: Vec<EnvCondition> = if all_envs {
        EnvCondition::ALL.to_vec()
    } else {
        vec![config.env]
    };

    let mut evals = Vec::new();
    let mut rates = Vec::new();
    for (i, env) in envs.iter().enumerate() {
        let eval_seed = seed::derive(config.seed, "eval-fixed", &[i as u64]);
        let result = trials::evaluate(&scenario, params, *env, eval_seed)?;
        println!(
            "evaluate[{env}]: S={scale:.4} B={brightness:.4} -> success rate {:.2} ({}/{} trials)",
            result.success_rate,
            result.outcomes.iter().filter(|o| o.success).count(),
            result.outcomes.len()
        );
        rates.push((*env, result.success_rate));
        evals.push((i as u32, result));
    }
    write_manifest(config)?;
    report::write_trials(&config.output_dir.join("trials.csv"), &evals)?;
    if config.trials.record_trace {
        for (eval_id, result) in &evals {
            for (trial_id, outcome) in result.outcomes.iter().enumerate() {
                report::write_track_log(
                    &config
                        .output_dir
                        .join(format!("track_log_e{eval_id}_t{trial_id}.csv")),
                    outcome,
                )?;
            }
        }
    }
    Ok(rates)
}

/// Train a subsampling ensemble under the configured environment and
/// report its box spread under every evaluation environment.
pub fn cmd_uncertainty(
    config: &RunConfig,
) -> Result<Vec<(EnvCondition, EnsembleUncertainty)>, CommandError> {
    config.validate()?;
    let scenario = config.scenario()?;
    let train_env = config.env;
    let default_peak = config.landscape.peak(train_env);
    let params = AugParams::new(
        config.uncertainty.scale.unwrap_or(default_peak.scale),
        config
            .uncertainty
            .brightness
            .unwrap_or(default_peak.brightness),
    )
    .map_err(|e| ConfigError::Invalid {
        field: "uncertainty.scale",
        reason: e.to_string(),
    })?;

    let ensemble = train_ensemble(
        &config.landscape,
        params,
        train_env,
        config.detector.ensemble_size,
        config.detector.sigma_sub,
        config.detector.noise_px,
        seed::derive(config.seed, "ensemble", &[]),
    )?;

    let pose = WorldPose::new(
        scenario.pad.center.x,
        scenario.pad.center.y,
        config.uncertainty.probe_altitude_m,
    );
    let truth = project_pad(&pose, &scenario.pad, &scenario.camera)
        .map_err(TrialError::from)?
        .ok_or_else(|| ConfigError::Invalid {
            field: "uncertainty.probe_altitude_m",
            reason: "pad not visible from the probe pose".into(),
        })?;

    let mut rows = Vec::new();
    for (ei, env) in EnvCondition::ALL.into_iter().enumerate() {
        let mut sum = [0.0f64; 4];
        for frame in 0..u64::from(config.uncertainty.frames) {
            let mut rng = seed::stream(config.seed, "uncertainty-frame", &[ei as u64, frame]);
            let u = ensemble_uncertainty(&ensemble, &truth, env, &mut rng);
            sum[0] += u.sigma_cx;
            sum[1] += u.sigma_cy;
            sum[2] += u.sigma_w;
            sum[3] += u.sigma_h;
        }
        let n = f64::from(config.uncertainty.frames);
        let mean = EnsembleUncertainty {
            sigma_cx: sum[0] / n,
            sigma_cy: sum[1] / n,
            sigma_w: sum[2] / n,
            sigma_h: sum[3] / n,
        };
        println!(
            "uncertainty[train={train_env}, eval={env}]: sigma_cx={:.5} sigma_cy={:.5} sigma_w={:.5} sigma_h={:.5}",
            mean.sigma_cx, mean.sigma_cy, mean.sigma_w, mean.sigma_h
        );
        rows.push((env, mean));
    }
    write_manifest(config)?;
    report::write_uncertainty(&config.output_dir.join("uncertainty.csv"), &rows)?;
    Ok(rows)
}

/// Dump the reference landscape grid and, when an observations file is
/// supplied, the GP posterior grid rebuilt from it.
pub fn cmd_landscape(
    config: &RunConfig,
    observations: Option<&Path>,
) -> Result<(), CommandError> {
    config.validate()?;
    write_manifest(config)?;
    let out = &config.output_dir;
    report::write_landscape(&out.join("landscape.csv"), &config.landscape)?;
    println!("landscape: wrote {}", out.join("landscape.csv").display());
    if let Some(path) = observations {
        let points = report::read_observations(path)?;
        let mut data = GpDataset::new(config.gp.kernel, config.gp.noise_var);
        for (p, y) in points {
            data.push(p, y);
        }
        let grid = bayesopt::posterior_grid(&data)?;
        report::write_contour(&out.join("contour.csv"), &grid)?;
        println!("landscape: wrote {}", out.join("contour.csv").display());
    }
    Ok(())
}

/// Convert corner-format CSV annotations into normalized label files.
pub fn cmd_convert_labels(
    input: &Path,
    output: &Path,
    val_fraction: Option<f64>,
    split_seed: u64,
) -> Result<(), CommandError> {
    let images = labels::convert_directory(input, output, val_fraction, split_seed)?;
    println!(
        "convert-labels: wrote labels for {images} images to {}",
        output.display()
    );
    Ok(())
}
