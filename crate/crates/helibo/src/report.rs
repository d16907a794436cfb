//! CSV artifacts. Every file opens with a versioned schema comment line
//! followed by a header row; all floats are fixed six-decimal, so a run
//! with the same seed reproduces each file byte for byte.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::bayesopt::OptimizationReport;
use crate::detector::{AugParams, EnsembleUncertainty, EnvCondition, QualityLandscape};
use crate::trials::{EvalResult, TrialOutcome};

/// Grid resolution used for the landscape dump (101 points per axis,
/// matching the posterior contour grid).
pub const LANDSCAPE_GRID_STEPS: usize = 100;

fn create(path: &Path) -> std::io::Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

/// `observations.csv`: the optimization history. The acquisition column
/// is empty for the random initialization samples; the stop reason
/// appears on the final row.
pub fn write_observations(path: &Path, report: &OptimizationReport) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# schema: helibo.observations v1")?;
    writeln!(w, "iter,S,B,success_rate,acquisition_at_proposal,stop_reason")?;
    let last = report.observations.len().saturating_sub(1);
    for (i, o) in report.observations.iter().enumerate() {
        let acq = o.acquisition.map(f).unwrap_or_default();
        let stop = if i == last {
            report.stop_reason.to_string()
        } else {
            String::new()
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            o.index,
            f(o.params.scale),
            f(o.params.brightness),
            f(o.y),
            acq,
            stop
        )?;
    }
    w.flush()
}

/// `contour.csv`: posterior mean/std over the acquisition grid.
pub fn write_contour(path: &Path, rows: &[(f64, f64, f64, f64)]) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# schema: helibo.contour v1")?;
    writeln!(w, "S,B,posterior_mean,posterior_std")?;
    for &(s, b, mean, std) in rows {
        writeln!(w, "{},{},{},{}", f(s), f(b), f(mean), f(std))?;
    }
    w.flush()
}

/// `trials.csv`: one row per landing trial across all evaluations.
pub fn write_trials(path: &Path, evals: &[(u32, EvalResult)]) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# schema: helibo.trials v1")?;
    writeln!(
        w,
        "eval_id,trial_id,env,S,B,init_x,init_y,init_z,final_x,final_y,final_z,success,steps"
    )?;
    for (eval_id, result) in evals {
        for (trial_id, t) in result.outcomes.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                eval_id,
                trial_id,
                result.env,
                f(result.params.scale),
                f(result.params.brightness),
                f(t.init.x),
                f(t.init.y),
                f(t.init.z),
                f(t.final_pose.x),
                f(t.final_pose.y),
                f(t.final_pose.z),
                u8::from(t.success),
                t.steps_used
            )?;
        }
    }
    w.flush()
}

/// `landscape.csv`: the reference quality surface for every environment.
pub fn write_landscape(path: &Path, landscape: &QualityLandscape) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# schema: helibo.landscape v1")?;
    writeln!(w, "S,B,env,q")?;
    for env in EnvCondition::ALL {
        for i in 0..=LANDSCAPE_GRID_STEPS {
            let s = i as f64 / LANDSCAPE_GRID_STEPS as f64;
            for j in 0..=LANDSCAPE_GRID_STEPS {
                let b = j as f64 / LANDSCAPE_GRID_STEPS as f64;
                let q = landscape.quality(
                    &AugParams {
                        scale: s,
                        brightness: b,
                    },
                    env,
                );
                writeln!(w, "{},{},{},{}", f(s), f(b), env, f(q))?;
            }
        }
    }
    w.flush()
}

/// `uncertainty.csv`: mean per-coordinate ensemble spread per
/// evaluation environment.
pub fn write_uncertainty(
    path: &Path,
    rows: &[(EnvCondition, EnsembleUncertainty)],
) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# schema: helibo.uncertainty v1")?;
    writeln!(w, "env,sigma_cx,sigma_cy,sigma_w,sigma_h")?;
    for (env, u) in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            env,
            f(u.sigma_cx),
            f(u.sigma_cy),
            f(u.sigma_w),
            f(u.sigma_h)
        )?;
    }
    w.flush()
}

/// Per-frame track log recovered from a recorded trial trace.
pub fn write_track_log(path: &Path, outcome: &TrialOutcome) -> std::io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# schema: helibo.track_log v1")?;
    writeln!(w, "frame,id,cx,cy,w,h,hits")?;
    for step in outcome.trace.as_deref().unwrap_or_default() {
        if let Some(track) = &step.track {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                step.step,
                track.id,
                f(track.bbox.cx),
                f(track.bbox.cy),
                f(track.bbox.w),
                f(track.bbox.h),
                track.hits
            )?;
        }
    }
    w.flush()
}

/// Parse an `observations.csv` back into (params, success rate) pairs,
/// e.g. to rebuild a posterior for the contour dump.
pub fn read_observations(path: &Path) -> std::io::Result<Vec<(AugParams, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 4 {
            continue;
        }
        let parse = |v: &str, name: &str| {
            v.parse::<f64>().map_err(|_| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad {name} value '{v}' in {}", path.display()),
                )
            })
        };
        out.push((
            AugParams {
                scale: parse(cols[1], "S")?,
                brightness: parse(cols[2], "B")?,
            },
            parse(cols[3], "success_rate")?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayesopt::{BoObservation, StopReason};
    use crate::geometry::WorldPose;

    #[test]
    fn observations_round_trip_through_csv() {
        let report = OptimizationReport {
            observations: vec![
                BoObservation {
                    index: 0,
                    params: AugParams {
                        scale: 0.25,
                        brightness: 0.75,
                    },
                    y: 0.4,
                    acquisition: None,
                },
                BoObservation {
                    index: 1,
                    params: AugParams {
                        scale: 0.5,
                        brightness: 0.5,
                    },
                    y: 0.8,
                    acquisition: Some(1.23),
                },
            ],
            best_params: AugParams {
                scale: 0.5,
                brightness: 0.5,
            },
            best_y: 0.8,
            stop_reason: StopReason::ThresholdReached,
            max_jitter_used: 0.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("observations.csv");
        write_observations(&path, &report).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# schema: helibo.observations v1\n"));
        assert!(text.contains("threshold_reached"));
        let parsed = read_observations(&path).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[1].1, 0.8);
    }

    #[test]
    fn landscape_row_count_and_peak() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("landscape.csv");
        let landscape = QualityLandscape::default();
        write_landscape(&path, &landscape).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(rows.len(), 3 * 101 * 101);

        // The emitted grid's argmax per env sits at the configured peak
        // (within grid resolution).
        for env in EnvCondition::ALL {
            let best = rows
                .iter()
                .filter(|r| r.contains(env.as_str()))
                .max_by(|a, b| {
                    let qa: f64 = a.rsplit(',').next().unwrap().parse().unwrap();
                    let qb: f64 = b.rsplit(',').next().unwrap().parse().unwrap();
                    qa.partial_cmp(&qb).unwrap()
                })
                .unwrap();
            let cols: Vec<&str> = best.split(',').collect();
            let s: f64 = cols[0].parse().unwrap();
            let b: f64 = cols[1].parse().unwrap();
            let peak = landscape.peak(env);
            assert!((s - peak.scale).abs() <= 0.005 + 1e-9, "{env}: S {s}");
            assert!((b - peak.brightness).abs() <= 0.005 + 1e-9, "{env}: B {b}");
        }
    }

    #[test]
    fn track_log_keeps_tracked_frames_only() {
        use crate::controller::ErrorVector;
        use crate::geometry::BoundingBox;
        use crate::trials::{TraceStep, TrackSnapshot};

        let step = |n: u32, tracked: bool| TraceStep {
            step: n,
            pose: WorldPose::new(0.0, 0.0, 30.0),
            detected: tracked,
            track: tracked.then(|| TrackSnapshot {
                id: 4,
                bbox: BoundingBox::raw(0.5, 0.5, 0.1, 0.1),
                hits: n,
            }),
            error: tracked.then_some(ErrorVector {
                ex: 0.0,
                ey: 0.0,
                ez: 0.5,
            }),
        };
        let outcome = TrialOutcome {
            init: WorldPose::new(0.0, 0.0, 50.0),
            final_pose: WorldPose::new(0.0, 0.0, 0.9),
            success: true,
            touched_down: true,
            steps_used: 3,
            trace: Some(vec![step(1, true), step(2, false), step(3, true)]),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("track_log.csv");
        write_track_log(&path, &outcome).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("1,4,0.500000,"));
        assert!(rows[1].ends_with(",3"));
    }

    #[test]
    fn trials_csv_counts_rows() {
        let outcome = |success| TrialOutcome {
            init: WorldPose::new(1.0, 2.0, 50.0),
            final_pose: WorldPose::new(0.1, 0.2, 0.9),
            success,
            touched_down: true,
            steps_used: 1234,
            trace: None,
        };
        let result = EvalResult {
            params: AugParams {
                scale: 0.77,
                brightness: 0.66,
            },
            env: EnvCondition::NightRain,
            success_rate: 0.5,
            outcomes: vec![outcome(true), outcome(false)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.csv");
        write_trials(&path, &[(3, result)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].starts_with("3,0,night_rain,0.770000,0.660000,"));
        assert!(rows[0].ends_with(",1,1234"));
        assert!(rows[1].contains(",0,1234"));
    }
}
