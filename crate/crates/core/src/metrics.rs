//! Regret and error accounting over trajectory logs.

use std::ops::Range;

use nalgebra::DVector;

use crate::controller::TrajectoryLog;
use crate::error::{check_dim, Error, Result};
use crate::plants::NoiseSpec;
use crate::scalar::Real;

/// Paired-run dynamic regret of one controller against another.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport<T> {
    pub horizon: usize,
    pub alg_cumulative_cost: T,
    pub oracle_cumulative_cost: T,
    pub dynamic_regret: T,
    /// `Regret(τ)` for `τ = 1..=T`.
    pub prefix: Vec<T>,
    /// `Regret(τ) / τ`.
    pub normalized: Vec<T>,
}

/// Stage costs of each log are summed along its own trajectory.
pub fn dynamic_regret<T: Real>(alg: &TrajectoryLog<T>, oracle: &TrajectoryLog<T>) -> Result<RegretReport<T>> {
    check_dim("paired log length", alg.len(), oracle.len())?;
    let mut prefix = Vec::with_capacity(alg.len());
    let mut normalized = Vec::with_capacity(alg.len());
    let (mut a_sum, mut o_sum) = (T::zero(), T::zero());
    for (i, (a, o)) in alg.records.iter().zip(&oracle.records).enumerate() {
        a_sum += a.stage_cost;
        o_sum += o.stage_cost;
        prefix.push(a_sum - o_sum);
        normalized.push((a_sum - o_sum) / T::lit((i + 1) as f64));
    }
    Ok(RegretReport {
        horizon: alg.len(),
        alg_cumulative_cost: a_sum,
        oracle_cumulative_cost: o_sum,
        dynamic_regret: a_sum - o_sum,
        prefix,
        normalized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    /// `p` in `Regret ≈ c·τ^p`.
    pub exponent: f64,
    /// `ln c`.
    pub intercept: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// Some value was nonpositive and was raised to the floor before the fit.
    pub floored: bool,
}

pub const SLOPE_FLOOR: f64 = 1e-12;

/// Least-squares fit of `ln Regret` against `ln τ`.
pub fn sublinearity_slope(horizons: &[f64], regrets: &[f64]) -> Result<SlopeFit> {
    check_dim("regret series", horizons.len(), regrets.len())?;
    if horizons.len() < 3 {
        return Err(Error::InvalidParameter("slope fit needs at least three points".into()));
    }
    if horizons.windows(2).any(|w| !(w[0] < w[1])) || !(horizons[0] > 0.0) {
        return Err(Error::InvalidParameter(
            "horizons must be positive and strictly increasing".into(),
        ));
    }
    if regrets.iter().any(|r| r.is_nan()) {
        return Err(Error::InvalidParameter("regret series contains NaN".into()));
    }
    let floored = regrets.iter().any(|&r| r <= 0.0);
    let xs: Vec<f64> = horizons.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = regrets.iter().map(|r| r.max(SLOPE_FLOOR).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let sse: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + exponent * x);
            e * e
        })
        .sum();
    Ok(SlopeFit {
        exponent,
        intercept,
        residual: (sse / n).sqrt(),
        floored,
    })
}

/// Per-step `‖x_t‖²` and its sum.
pub fn stabilization_error<T: Real>(log: &TrajectoryLog<T>) -> (Vec<T>, T) {
    let series: Vec<T> = log.records.iter().map(|r| r.state.norm_squared()).collect();
    let total = series.iter().fold(T::zero(), |a, &v| a + v);
    (series, total)
}

/// `sqrt(mean_t Σ_{i∈dims} (x_t,i − ref_t,i)²)`.
pub fn tracking_rmse<T: Real>(log: &TrajectoryLog<T>, reference: &[DVector<T>], dims: Range<usize>) -> Result<T> {
    check_dim("reference length", log.len(), reference.len())?;
    if log.is_empty() {
        return Err(Error::InvalidParameter("tracking error of an empty log".into()));
    }
    let mut sum = T::zero();
    for (r, xr) in log.records.iter().zip(reference) {
        if dims.end > r.state.len() || dims.end > xr.len() {
            return Err(Error::DimensionMismatch {
                context: "position components",
                expected: dims.end,
                got: r.state.len().min(xr.len()),
            });
        }
        for i in dims.clone() {
            let e = r.state[i] - xr[i];
            sum += e * e;
        }
    }
    Ok((sum / T::lit(log.len() as f64)).sqrt())
}

/// Mean `l_t` over the second half of the log divided by the total noise
/// variance `Σ_i σ_i²`. `None` without noise.
pub fn noise_floor_check<T: Real>(log: &TrajectoryLog<T>, noise: &NoiseSpec, state_dim: usize) -> Result<Option<f64>> {
    if noise.is_none() {
        return Ok(None);
    }
    let variance = noise.total_variance(state_dim)?;
    if !(variance > 0.0) || log.is_empty() {
        return Ok(None);
    }
    let tail = &log.records[log.len() / 2..];
    let mean = tail.iter().map(|r| r.loss.as_f64()).sum::<f64>() / tail.len() as f64;
    Ok(Some(mean / variance))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{ControllerKind, EpisodeSummary, StepRecord};
    use crate::rff::ParamEstimate;

    fn log_from(states: &[Vec<f64>], costs: &[f64], losses: &[f64]) -> TrajectoryLog<f64> {
        let records: Vec<_> = states
            .iter()
            .zip(costs)
            .zip(losses)
            .enumerate()
            .map(|(t, ((x, &c), &l))| StepRecord {
                t,
                state: DVector::from_vec(x.clone()),
                input: DVector::zeros(1),
                residual: DVector::zeros(x.len()),
                loss: l,
                stage_cost: c,
                objective: 0.0,
                solver_iterations: 1,
                converged: true,
                param_max_abs: 0.0,
            })
            .collect();
        let n = states.first().map_or(1, |x| x.len());
        TrajectoryLog {
            controller: ControllerKind::SsiMpc,
            reference_states: vec![DVector::zeros(n); records.len()],
            records,
            position_dims: 0..1,
            summary: EpisodeSummary {
                cumulative_cost: costs.iter().sum(),
                cumulative_state_error: 0.0,
                rmse: 0.0,
                final_params: ParamEstimate::zeros(n, 1, 1.0).unwrap(),
                failed: false,
                failure: None,
            },
        }
    }

    #[test]
    fn regret_self_and_strict() {
        let states = vec![vec![0.0]; 4];
        let a = log_from(&states, &[1.0, 2.0, 3.0, 4.0], &[0.0; 4]);
        let r = dynamic_regret(&a, &a).unwrap();
        assert!(r.prefix.iter().all(|v| *v == 0.0));
        let o = log_from(&states, &[0.5, 1.5, 2.0, 3.5], &[0.0; 4]);
        let r = dynamic_regret(&a, &o).unwrap();
        assert!(r.prefix.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(r.dynamic_regret, 10.0 - 7.5);
        assert_eq!(r.normalized[3], 2.5 / 4.0);
        let swapped = dynamic_regret(&o, &a).unwrap();
        assert_eq!(swapped.dynamic_regret, -r.dynamic_regret);
        let short = log_from(&states[..2], &[1.0, 1.0], &[0.0; 2]);
        assert!(dynamic_regret(&a, &short).is_err());
    }

    #[test]
    fn slope_recovers_planted_exponents() {
        let t = [500.0, 1000.0, 2000.0, 4000.0];
        for p in [0.0, 0.75, 1.0] {
            let r: Vec<f64> = t.iter().map(|x: &f64| 3.0 * x.powf(p)).collect();
            let fit = sublinearity_slope(&t, &r).unwrap();
            assert!((fit.exponent - p).abs() < 1e-9, "{p} {}", fit.exponent);
            assert!(!fit.floored);
        }
        let fit = sublinearity_slope(&t, &[1.0, -1.0, 2.0, 3.0]).unwrap();
        assert!(fit.floored);
        assert!(sublinearity_slope(&t[..2], &[1.0, 2.0]).is_err());
        assert!(sublinearity_slope(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn stabilization_and_tracking() {
        let log = log_from(&[vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]], &[0.0; 2], &[0.0; 2]);
        let (series, total) = stabilization_error(&log);
        assert_eq!(series, vec![1.0, 0.0]);
        assert_eq!(total, 1.0);

        let log = log_from(&[vec![0.1, 2.0, 0.0], vec![0.1, 5.0, 0.0]], &[0.0; 2], &[0.0; 2]);
        let refs = vec![DVector::zeros(3); 2];
        assert!((tracking_rmse(&log, &refs, 0..1).unwrap() - 0.1).abs() < 1e-15);
        assert!(tracking_rmse(&log, &refs[..1], 0..1).is_err());
        assert!(tracking_rmse(&log, &refs, 0..5).is_err());
    }

    #[test]
    fn noise_floor_ratio() {
        let states = vec![vec![0.0, 0.0]; 4];
        let log = log_from(&states, &[0.0; 4], &[9.0, 9.0, 2e-4, 2e-4]);
        let noise = NoiseSpec::gaussian(vec![0.01], 1);
        let ratio = noise_floor_check(&log, &noise, 2).unwrap().unwrap();
        assert!((ratio - 1.0).abs() < 1e-12);
        assert_eq!(noise_floor_check(&log, &NoiseSpec::none(), 2).unwrap(), None);
    }
}
