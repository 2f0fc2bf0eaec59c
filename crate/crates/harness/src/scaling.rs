//! Log-log fits of oracle cost against `1/ε` or `n`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{HarnessError, Result};
use crate::runner::Aggregate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Eps,
    N,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "eps" => Ok(Axis::Eps),
            "n" => Ok(Axis::N),
            other => Err(format!("axis must be `eps` or `n`, got `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval on the slope; `None` with fewer than 3 observations.
    pub slope_ci: Option<(f64, f64)>,
    pub r_squared: f64,
}

/// Ordinary least squares of `ys` on `xs`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let k = xs.len();
    if k < 2 || ys.len() != k {
        return Err(HarnessError::InsufficientData(format!("need >= 2 paired points, got {k}")));
    }
    let kf = k as f64;
    let mx = xs.iter().sum::<f64>() / kf;
    let my = ys.iter().sum::<f64>() / kf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(HarnessError::InsufficientData("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let slope_ci = (k > 2).then(|| {
        let dof = kf - 2.0;
        let se = (sse / dof / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof).expect("dof > 0").inverse_cdf(0.975);
        (slope - t * se, slope + t * se)
    });
    Ok(LineFit {
        slope,
        intercept,
        slope_ci,
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    /// `1/ε` or `n`.
    pub x: f64,
    /// Mean over seeds of the cost measure.
    pub mean_cost: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub problem: String,
    pub optimizer: String,
    pub axis: Axis,
    /// `sfo_to_fosp` on the `eps` axis, `sfo_to_fosp − n` on the `n` axis.
    pub measure: String,
    pub points: Vec<ScalingPoint>,
    /// Fit over every successful (cell, seed) observation.
    pub fit: LineFit,
    /// Cells without a recorded first-order hit.
    pub missing: usize,
    pub run_ids: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub axis: Axis,
    pub fits: Vec<ScalingFit>,
}

/// Fits `log(cost)` against `log(1/ε)` or `log n` per (problem, optimizer).
pub fn scaling_report(agg: &Aggregate, axis: Axis) -> Result<ScalingReport> {
    type Obs = (Vec<(f64, f64)>, usize, Vec<String>);
    let mut groups: BTreeMap<(String, String), Obs> = BTreeMap::new();
    for c in &agg.cells {
        let g = groups.entry((c.problem.clone(), c.optimizer.clone())).or_default();
        let x = match axis {
            Axis::Eps => 1.0 / c.eps,
            Axis::N => match c.n {
                Some(n) => n as f64,
                None => continue,
            },
        };
        let cost = match (c.failed, c.sfo_to_fosp) {
            (false, Some(s)) => match axis {
                Axis::Eps => Some(s as f64),
                Axis::N => Some(s as f64 - x).filter(|v| *v > 0.0),
            },
            _ => None,
        };
        match cost {
            Some(y) => {
                g.0.push((x, y));
                g.2.push(c.run_id.clone());
            }
            None => g.1 += 1,
        }
    }
    let mut fits = Vec::new();
    let mut best = 0;
    for ((problem, optimizer), (obs, missing, run_ids)) in groups {
        let mut by_x: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
        for &(x, y) in &obs {
            let e = by_x.entry(x.to_bits()).or_insert((x, 0.0, 0));
            e.1 += y;
            e.2 += 1;
        }
        best = best.max(by_x.len());
        if by_x.len() < 3 {
            continue;
        }
        let mut points: Vec<ScalingPoint> = by_x
            .into_values()
            .map(|(x, sum, k)| ScalingPoint {
                x,
                mean_cost: sum / k as f64,
                seeds: k,
            })
            .collect();
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        let lx: Vec<f64> = obs.iter().map(|o| o.0.ln()).collect();
        let ly: Vec<f64> = obs.iter().map(|o| o.1.ln()).collect();
        fits.push(ScalingFit {
            problem,
            optimizer,
            axis,
            measure: match axis {
                Axis::Eps => "sfo_to_fosp".into(),
                Axis::N => "sfo_to_fosp - n".into(),
            },
            points,
            fit: fit_line(&lx, &ly)?,
            missing,
            run_ids,
        });
    }
    if fits.is_empty() {
        return Err(HarnessError::InsufficientData(format!(
            "need >= 3 sweep points with successful cells on the {} axis, best group has {best}",
            match axis {
                Axis::Eps => "eps",
                Axis::N => "n",
            }
        )));
    }
    Ok(ScalingReport { axis, fits })
}
