//! Test-problem suite.

pub mod libsvm;
pub mod logistic;
pub mod online;
pub mod quadratic;
pub mod saddle;

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::problem::{Mode, Problem, ProblemInstance, SaddlePoint};
use crate::rng::{sample_uniform_ball, RngStream};
use crate::vector::{dist, ParamVector};

pub use libsvm::{parse_libsvm, read_libsvm, Dataset};
pub use logistic::NonconvexLogistic;
pub use online::OnlineStream;
pub use quadratic::QuadraticSum;
pub use saddle::{SaddleParams, SeparableSaddle};

/// Default nonconvex penalty weight for logistic problems.
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Planted-saddle quartic with `γ₄ = 1` on the box `‖x‖_∞ ≤ 1.5`.
///
/// `delta_plant = 0` is accepted as the flat control (no negative curvature,
/// no listed saddle).
pub fn make_separable_saddle(
    d: usize,
    n: usize,
    delta_plant: f64,
    noise: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    let params = SaddleParams {
        noise,
        seed,
        ..SaddleParams::new(d, n, delta_plant)
    };
    saddle_instance(params)
}

pub fn saddle_instance(params: SaddleParams) -> Result<ProblemInstance> {
    let p = SeparableSaddle::new(params.clone())?;
    let fstar = p.fstar();
    let mut inst = ProblemInstance::new("separable_saddle", Arc::new(p))
        .with_param("d", params.d)
        .with_param("n", params.n)
        .with_param("delta_plant", params.delta)
        .with_param("quartic", params.quartic)
        .with_param("box_radius", params.box_radius)
        .with_param("noise", params.noise)
        .with_param("seed", params.seed);
    inst.known_fstar = Some(fstar);
    if params.delta > 0.0 {
        inst.saddle_points.push(SaddlePoint {
            x: ParamVector::zeros(params.d),
            lambda_min: -params.delta,
        });
    }
    Ok(inst)
}

/// Synthetic nonconvex-logistic finite sum.
pub fn make_nonconvex_logistic(n: usize, d: usize, alpha: f64, seed: u64) -> Result<ProblemInstance> {
    let p = logistic::synthetic_logistic(n, d, alpha, seed)?;
    Ok(ProblemInstance::new("nonconvex_logistic", Arc::new(p))
        .with_param("n", n)
        .with_param("d", d)
        .with_param("alpha", alpha)
        .with_param("seed", seed))
}

/// Online version of a finite-sum base with noise bounded by `σ`.
pub fn make_online_stream(base: &ProblemInstance, sigma: f64, noise_seed: u64) -> Result<ProblemInstance> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidConfig(format!("sigma must be nonnegative, got {sigma}")));
    }
    if base.problem.mode() == Mode::Online {
        return Err(Error::InvalidConfig("online base must be a finite sum".into()));
    }
    let stream = OnlineStream::new(base.problem.clone(), sigma, noise_seed);
    let mut inst = ProblemInstance::new(format!("online_{}", base.name), Arc::new(stream));
    inst.known_fstar = base.known_fstar;
    inst.saddle_points = base.saddle_points.clone();
    inst.generator_params = base.generator_params.clone();
    inst.generator_params.insert("sigma".into(), sigma.into());
    inst.generator_params.insert("noise_seed".into(), noise_seed.into());
    Ok(inst)
}

/// Loads a sparse text dataset as a nonconvex-logistic instance.
pub fn load_libsvm(path: impl AsRef<Path>, d_cap: usize, alpha: f64) -> Result<ProblemInstance> {
    let path = path.as_ref();
    let ds = read_libsvm(path, d_cap)?;
    let p = NonconvexLogistic::new(ds.n, ds.d, ds.features, ds.labels, alpha)?;
    Ok(ProblemInstance::new("libsvm", Arc::new(p))
        .with_param("path", path.display().to_string())
        .with_param("n", ds.n)
        .with_param("d", ds.d)
        .with_param("alpha", alpha))
}

/// Largest observed `‖∇f_i(x) − ∇f_i(y)‖ / ‖x − y‖` over random pairs in the
/// declared domain (or a unit-scale region when none is declared).
pub fn max_lipschitz_ratio(problem: &dyn Problem, pairs: usize, rng: &mut RngStream) -> f64 {
    let d = problem.dim();
    let radius = problem.domain_radius().unwrap_or(1.0);
    let mut gx = vec![0.0; d];
    let mut gy = vec![0.0; d];
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        let x: Vec<f64> = (0..d).map(|_| radius * (2.0 * rng.uniform() - 1.0)).collect();
        // Nearby partner; ratios at short range probe the local curvature.
        let step = sample_uniform_ball(rng, d, radius * 0.1);
        let y: Vec<f64> = x
            .iter()
            .zip(step.iter())
            .map(|(a, s)| (a + s).clamp(-radius, radius))
            .collect();
        let gap = dist(&x, &y);
        if gap == 0.0 {
            continue;
        }
        let i = match problem.mode() {
            Mode::FiniteSum { n } => rng.index(n),
            Mode::Online => rng.index(usize::MAX),
        };
        problem.component_grad(i, &x, &mut gx);
        problem.component_grad(i, &y, &mut gy);
        worst = worst.max(dist(&gx, &gy) / gap);
    }
    worst
}
