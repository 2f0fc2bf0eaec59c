use serde::{Deserialize, Serialize};

use super::wilson_interval;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ssrgd::SuperEpochRecord;
use crate::vector::dist;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationPoint {
    pub t: usize,
    pub distance: f64,
    /// `√(4t(f(x₀) − f(x_t))/(C′L))`; `None` when `f` went up.
    pub bound: Option<f64>,
    /// `bound − distance`.
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub c_prime: f64,
    pub points: Vec<LocalizationPoint>,
    /// Steps where `f(x_t) > f(x₀)`; excluded from the check.
    pub increase_events: usize,
    /// Bound held at every checked step.
    pub pass: bool,
}

/// Checks `‖x_t − x₀‖ ≤ √(4t(f(x₀) − f(x_t))/(C′L))` along one super epoch,
/// with `x₀` the perturbed starting point.
pub fn verify_localization(
    record: &SuperEpochRecord,
    cfg: &RunConfig,
    lipschitz: f64,
    c_prime: f64,
) -> Result<LocalizationReport> {
    if cfg.minibatch < cfg.epoch_len {
        return Err(Error::InvalidConfig(format!(
            "localization needs b >= m, got b={}, m={}",
            cfg.minibatch, cfg.epoch_len
        )));
    }
    if !(c_prime > 0.0) || !(lipschitz > 0.0) {
        return Err(Error::InvalidInput("C' and L must be positive".into()));
    }
    let eta_max = 1.0 / (2.0 * c_prime * lipschitz);
    if cfg.eta > eta_max * (1.0 + 1e-12) {
        return Err(Error::InvalidConfig(format!(
            "localization needs eta <= 1/(2C'L) = {eta_max}, got {}",
            cfg.eta
        )));
    }
    if record.points.is_empty() || record.points.len() != record.f_values.len() {
        return Err(Error::InvalidInput("super epoch record has no iterates".into()));
    }
    let x0 = &record.points[0];
    let f0 = record.f_values[0];
    let mut increase_events = 0;
    let mut pass = true;
    let points = record
        .points
        .iter()
        .zip(&record.f_values)
        .enumerate()
        .map(|(t, (x, &f))| {
            let distance = dist(x, x0);
            let drop = f0 - f;
            if drop < 0.0 {
                increase_events += 1;
                return LocalizationPoint {
                    t,
                    distance,
                    bound: None,
                    margin: None,
                };
            }
            let bound = (4.0 * t as f64 * drop / (c_prime * lipschitz)).sqrt();
            if distance > bound {
                pass = false;
            }
            LocalizationPoint {
                t,
                distance,
                bound: Some(bound),
                margin: Some(bound - distance),
            }
        })
        .collect();
    Ok(LocalizationReport {
        c_prime,
        points,
        increase_events,
        pass,
    })
}

/// Fraction of reports that passed, with a 95% Wilson interval.
pub fn localization_frequency(reports: &[LocalizationReport]) -> (f64, (f64, f64)) {
    let k = reports.iter().filter(|r| r.pass).count();
    let freq = if reports.is_empty() {
        0.0
    } else {
        k as f64 / reports.len() as f64
    };
    (freq, wilson_interval(k, reports.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Problem, ProblemExt};
    use crate::problems::QuadraticSum;
    use crate::ssrgd::derive_config_first_order;
    use crate::vector::ParamVector;

    fn record(points: Vec<Vec<f64>>, f: Vec<f64>) -> SuperEpochRecord {
        SuperEpochRecord {
            t_init: 0,
            x_anchor: points[0].clone().into(),
            f_anchor: f[0],
            points: points.into_iter().map(ParamVector::from).collect(),
            f_values: f,
            end: None,
        }
    }

    #[test]
    fn single_gd_step_on_quadratic() {
        // f = (λ/2)‖x‖², L = λ. One step of size η = 1/(2L).
        let lambda = 3.0;
        let p = QuadraticSum::new(2, vec![vec![lambda, 0.0, 0.0, lambda]], vec![vec![0.0, 0.0]]).unwrap();
        let mut cfg = derive_config_first_order(&p, 0.1).unwrap();
        cfg.eta = 1.0 / (2.0 * lambda);
        let x0 = vec![1.0, -2.0];
        let g = p.grad_at(&x0).unwrap();
        let x1: Vec<f64> = x0.iter().zip(g.iter()).map(|(x, g)| x - cfg.eta * g).collect();
        let rec = record(vec![x0.clone(), x1.clone()], vec![p.value(&x0), p.value(&x1)]);
        let rep = verify_localization(&rec, &cfg, lambda, 1.0).unwrap();
        // ‖x₁ − x₀‖ = η‖∇f(x₀)‖ = ‖x₀‖/2; f drop = (λ/2)(1 − 1/4)‖x₀‖².
        let r0_sq: f64 = 5.0;
        let dist = 0.5 * r0_sq.sqrt();
        let bound = (4.0 * 0.375 * lambda * r0_sq / lambda).sqrt();
        assert!((rep.points[1].distance - dist).abs() < 1e-12);
        assert!((rep.points[1].bound.unwrap() - bound).abs() < 1e-12);
        assert!(rep.pass);
        assert_eq!(rep.points[0].distance, 0.0);
        assert_eq!(rep.points[0].bound, Some(0.0));
    }

    #[test]
    fn increases_are_excluded() {
        let p = QuadraticSum::isotropic(1, 1);
        let mut cfg = derive_config_first_order(&p, 0.1).unwrap();
        cfg.eta = 0.5;
        let rec = record(vec![vec![0.0], vec![5.0]], vec![0.0, 1.0]);
        let rep = verify_localization(&rec, &cfg, 1.0, 1.0).unwrap();
        assert_eq!(rep.increase_events, 1);
        assert!(rep.pass);
    }

    #[test]
    fn large_step_rejected() {
        let p = QuadraticSum::isotropic(1, 1);
        let cfg = derive_config_first_order(&p, 0.1).unwrap();
        let rec = record(vec![vec![0.0], vec![0.0]], vec![0.0, 0.0]);
        assert!(matches!(
            verify_localization(&rec, &cfg, 1.0, 1.0),
            Err(Error::InvalidConfig(_))
        ));
    }
}
