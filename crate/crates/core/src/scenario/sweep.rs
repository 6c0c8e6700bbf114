use rayon::prelude::*;
use thiserror::Error;

use crate::scenario::{run_experiment, ConfigError, Report, RunRow, ScenarioConfig};
use crate::sim::SimError;

/// Numeric config fields a sweep can vary.
pub const SWEEP_AXES: &[&str] = &[
    "compromised_fraction",
    "attack_magnitude",
    "onset_s",
    "node_count",
    "range_m",
    "simulation_time_s",
    "sampling_period_s",
    "broadcast_threshold_pct",
    "sigma_factor",
    "sharp_fall_threshold_sigmas",
    "poll_timeout_s",
    "sensor_noise_sigma",
    "buffer_capacity",
    "initial_energy_j",
    "field_sigma_c",
    "loss_probability",
    "airtime_s",
    "tx_jitter_s",
];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("unknown sweep axis `{axis}`; valid axes: {}", SWEEP_AXES.join(", "))]
    UnknownAxis { axis: String },
    #[error("axis `{axis}` needs a whole number, got {value}")]
    NotInteger { axis: String, value: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {axis}={value} rep {repetition}: {source}")]
    Run {
        axis: String,
        value: f64,
        repetition: usize,
        #[source]
        source: SimError,
    },
}

fn whole(axis: &str, value: f64) -> Result<usize, SweepError> {
    if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(SweepError::NotInteger {
            axis: axis.to_string(),
            value,
        })
    }
}

/// Set `axis` to `value` in `cfg` and revalidate.
pub fn apply_axis(cfg: &mut ScenarioConfig, axis: &str, value: f64) -> Result<(), SweepError> {
    match axis {
        "compromised_fraction" => cfg.adversary.compromised_fraction = value,
        "attack_magnitude" => cfg.adversary.attack = cfg.adversary.attack.with_magnitude(value),
        "onset_s" => cfg.adversary.onset_s = value,
        "node_count" => cfg.node_count = whole(axis, value)?,
        "range_m" => cfg.range_m = value,
        "simulation_time_s" => cfg.simulation_time_s = value,
        "sampling_period_s" => cfg.sampling_period_s = value,
        "broadcast_threshold_pct" => cfg.broadcast_threshold_pct = value,
        "sigma_factor" => cfg.sigma_factor = value,
        "sharp_fall_threshold_sigmas" => cfg.sharp_fall_threshold_sigmas = value,
        "poll_timeout_s" => cfg.poll_timeout_s = value,
        "sensor_noise_sigma" => cfg.sensor_noise_sigma = value,
        "buffer_capacity" => cfg.buffer_capacity = whole(axis, value)?,
        "initial_energy_j" => cfg.initial_energy_j = value,
        "field_sigma_c" => cfg.field.base_sigma_c = value,
        "loss_probability" => cfg.radio.loss_probability = value,
        "airtime_s" => cfg.radio.airtime_s = value,
        "tx_jitter_s" => cfg.radio.tx_jitter_s = value,
        _ => {
            return Err(SweepError::UnknownAxis {
                axis: axis.to_string(),
            })
        }
    }
    cfg.validate()?;
    Ok(())
}

/// Run `repetitions` experiments for every value of `axis`.
///
/// Repetition `r` uses `base.seeds.for_repetition(r)` for every value, so
/// cells are compared on the same deployments. When `base` has security
/// enabled each run is paired with a security-off run on identical seeds to
/// measure the energy overhead.
pub fn run_sweep(
    base: &ScenarioConfig,
    axis: &str,
    values: &[f64],
    repetitions: usize,
) -> Result<Report, SweepError> {
    base.validate()?;
    let mut jobs = Vec::with_capacity(values.len() * repetitions);
    for &value in values {
        for rep in 0..repetitions {
            let mut cfg = base.clone();
            apply_axis(&mut cfg, axis, value)?;
            cfg.seeds = base.seeds.for_repetition(rep as u64);
            jobs.push((value, rep, cfg));
        }
    }
    if jobs.is_empty() && !SWEEP_AXES.contains(&axis) {
        return Err(SweepError::UnknownAxis {
            axis: axis.to_string(),
        });
    }

    let rows = jobs
        .into_par_iter()
        .map(|(value, rep, cfg)| {
            let wrap = |source| SweepError::Run {
                axis: axis.to_string(),
                value,
                repetition: rep,
                source,
            };
            let on = run_experiment(&cfg).map_err(wrap)?;
            let off = if cfg.security_enabled {
                let mut off_cfg = cfg.clone();
                off_cfg.security_enabled = false;
                Some(run_experiment(&off_cfg).map_err(wrap)?)
            } else {
                None
            };
            Ok(RunRow::new(axis, Some(value), rep, &on, off.as_ref()))
        })
        .collect::<Result<Vec<_>, SweepError>>()?;

    Ok(Report::new(base.clone(), axis, values.to_vec(), repetitions, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        ScenarioConfig {
            node_count: 20,
            area_m: [40.0, 40.0],
            simulation_time_s: 5.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn unknown_axis_lists_valid_ones() {
        let err = run_sweep(&tiny(), "colour", &[1.0], 1).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("colour"));
        assert!(text.contains("compromised_fraction"));
    }

    #[test]
    fn row_count_is_values_times_reps() {
        let r = run_sweep(&tiny(), "compromised_fraction", &[0.1, 0.2], 3).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert_eq!(r.cells.len(), 2);
        let order: Vec<(f64, usize)> = r.rows.iter().map(|x| (x.axis_value.unwrap(), x.repetition)).collect();
        assert_eq!(order, vec![(0.1, 0), (0.1, 1), (0.1, 2), (0.2, 0), (0.2, 1), (0.2, 2)]);
        assert!(r.rows.iter().all(|x| x.energy_overhead_pct.is_some()));
    }

    #[test]
    fn single_cell_matches_run_experiment() {
        let mut base = tiny();
        base.security_enabled = false;
        let r = run_sweep(&base, "compromised_fraction", &[0.1], 1).unwrap();
        let mut cfg = base.clone();
        cfg.adversary.compromised_fraction = 0.1;
        let m = run_experiment(&cfg).unwrap();
        assert_eq!(r.rows[0], RunRow::new("compromised_fraction", Some(0.1), 0, &m, None));
    }

    #[test]
    fn integer_axes_reject_fractions() {
        let mut cfg = tiny();
        assert!(matches!(
            apply_axis(&mut cfg, "node_count", 2.5),
            Err(SweepError::NotInteger { .. })
        ));
        apply_axis(&mut cfg, "node_count", 30.0).unwrap();
        assert_eq!(cfg.node_count, 30);
    }

    #[test]
    fn every_listed_axis_is_accepted() {
        for axis in SWEEP_AXES {
            let mut cfg = tiny();
            let v = match *axis {
                "compromised_fraction" | "loss_probability" => 0.1,
                "node_count" | "buffer_capacity" => 3.0,
                _ => 0.5,
            };
            apply_axis(&mut cfg, axis, v).unwrap_or_else(|e| panic!("{axis}: {e}"));
        }
    }
}
