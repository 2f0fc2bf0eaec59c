use std::sync::Arc;

use ssrgd::problems::logistic::synthetic_logistic;
use ssrgd::problems::{
    load_libsvm, make_nonconvex_logistic, make_online_stream, make_separable_saddle, max_lipschitz_ratio,
    NonconvexLogistic, QuadraticSum,
};
use ssrgd::rng::{sample_online, sample_uniform_ball, RngStream};
use ssrgd::spectral::lambda_min_dense;
use ssrgd::vector::{dist, dot, norm};
use ssrgd::{Problem, ProblemExt, ProblemInstance};

fn suite() -> Vec<ProblemInstance> {
    vec![
        make_separable_saddle(5, 16, 0.3, 0.1, 1).unwrap(),
        make_nonconvex_logistic(50, 10, 0.1, 2).unwrap(),
        ProblemInstance::new("quadratic", Arc::new(QuadraticSum::random(6, 4, 3))),
        make_online_stream(&make_nonconvex_logistic(40, 6, 0.1, 4).unwrap(), 0.5, 9).unwrap(),
    ]
}

fn random_point(rng: &mut RngStream, d: usize, radius: f64) -> Vec<f64> {
    (0..d).map(|_| radius * (2.0 * rng.uniform() - 1.0)).collect()
}

fn unit(rng: &mut RngStream, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let n = norm(&v);
    v.into_iter().map(|c| c / n).collect()
}

#[test]
fn directional_derivatives_match_gradient() {
    for inst in suite() {
        let p = inst.problem.as_ref();
        let d = p.dim();
        let radius = p.domain_radius().unwrap_or(1.0);
        let mut rng = RngStream::new(11, 0);
        let h = 1e-5;
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let x = random_point(&mut rng, d, radius * 0.9);
            let u = unit(&mut rng, d);
            let xp: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - h * b).collect();
            let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
            let g = p.population_grad_at(&x).unwrap();
            let an = dot(&g, &u);
            worst = worst.max((fd - an).abs() / an.abs().max(norm(&g)).max(1e-8));
        }
        assert!(worst <= 1e-5, "{}: relative error {worst:.2e}", inst.name);
    }
}

#[test]
fn hessian_vector_products_match_gradient_differences() {
    for inst in suite() {
        let p = inst.problem.as_ref();
        let d = p.dim();
        let radius = p.domain_radius().unwrap_or(1.0);
        let mut rng = RngStream::new(12, 0);
        let h = 1e-5;
        let mut worst = 0.0_f64;
        for _ in 0..100 {
            let x = random_point(&mut rng, d, radius * 0.9);
            let v = unit(&mut rng, d);
            let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let gp = p.population_grad_at(&xp).unwrap();
            let gm = p.population_grad_at(&xm).unwrap();
            let fd: Vec<f64> = gp.iter().zip(gm.iter()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let mut hv = vec![0.0; d];
            p.hvp(&x, &v, &mut hv).unwrap();
            worst = worst.max(dist(&fd, &hv) / norm(&hv).max(1e-3));
        }
        assert!(worst <= 1e-4, "{}: relative error {worst:.2e}", inst.name);
    }
}

#[test]
fn declared_gradient_lipschitz_holds_on_sampled_pairs() {
    for inst in suite() {
        let p = inst.problem.as_ref();
        let mut rng = RngStream::new(13, 0);
        let ratio = max_lipschitz_ratio(p, 10_000, &mut rng);
        let l = p.smoothness().lipschitz_grad;
        assert!(ratio <= l, "{}: observed {ratio} > declared {l}", inst.name);
        assert!(ratio > 0.0);
    }
}

#[test]
fn declared_hessian_lipschitz_holds_on_sampled_pairs() {
    for inst in suite() {
        let p = inst.problem.as_ref();
        let d = p.dim();
        let radius = p.domain_radius().unwrap_or(1.0);
        let rho = p.smoothness().lipschitz_hess;
        let mut rng = RngStream::new(14, 0);
        let (mut hx, mut hy) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..2000 {
            let x = random_point(&mut rng, d, radius);
            let y: Vec<f64> = x
                .iter()
                .zip(sample_uniform_ball(&mut rng, d, 0.1 * radius).iter())
                .map(|(a, s)| (a + s).clamp(-radius, radius))
                .collect();
            let v = unit(&mut rng, d);
            p.hvp(&x, &v, &mut hx).unwrap();
            p.hvp(&y, &v, &mut hy).unwrap();
            let gap = dist(&x, &y);
            if gap > 0.0 {
                let r = dist(&hx, &hy) / gap;
                assert!(r <= rho * (1.0 + 1e-9), "{}: {r} > {rho}", inst.name);
            }
        }
    }
}

#[test]
fn listed_saddles_are_strict_and_stationary() {
    for inst in suite() {
        let p = inst.problem.as_ref();
        for s in &inst.saddle_points {
            let g = p.population_grad_at(&s.x).unwrap();
            assert!(norm(&g) <= 1e-10, "{}", inst.name);
            let lam = lambda_min_dense(p, &s.x, 200).unwrap();
            assert!(lam < 0.0);
            assert!((lam - s.lambda_min).abs() < 1e-12);
        }
    }
}

#[test]
fn planted_saddle_minima_by_grid_search() {
    // d = 2, δ = 0.5, γ₄ = 1: minima at (0, ±√0.5) with f = −0.0625.
    let inst = make_separable_saddle(2, 4, 0.5, 0.0, 0).unwrap();
    let p = inst.problem.as_ref();
    let step = 1e-3;
    let k = (1.5 / step) as i64;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in -k..=k {
        for j in -k..=k {
            let x = [i as f64 * step, j as f64 * step];
            let f = p.value(&x);
            if f < best.0 {
                best = (f, x[0], x[1]);
            }
        }
    }
    assert!((best.0 + 0.0625).abs() < 1e-6, "{}", best.0);
    assert!(best.1.abs() <= step);
    assert!((best.2.abs() - 0.5f64.sqrt()).abs() <= step);
    assert_eq!(inst.known_fstar, Some(-0.0625));
}

#[test]
fn planted_saddle_components_average_to_gradient() {
    let inst = make_separable_saddle(4, 9, 0.3, 0.5, 7).unwrap();
    let p = inst.problem.as_ref();
    let mut rng = RngStream::new(1, 0);
    let x = random_point(&mut rng, 4, 1.0);
    let mut sum = vec![0.0; 4];
    p.accumulate_component_grads(&(0..9).collect::<Vec<_>>(), &x, 1.0 / 9.0, &mut sum);
    let g = p.grad_at(&x).unwrap();
    assert!(dist(&sum, &g) < 1e-12);
    let mut gi = vec![0.0; 4];
    p.component_grad(0, &x, &mut gi);
    assert!(dist(&gi, &g) > 1e-3, "noise terms should separate components");
}

#[test]
fn negative_plant_rejected() {
    assert!(make_separable_saddle(3, 4, -0.1, 0.0, 0).is_err());
}

#[test]
fn logistic_closed_forms() {
    let inst = make_nonconvex_logistic(30, 5, 0.2, 5).unwrap();
    let p = inst.problem.as_ref();
    assert!((p.value(&[0.0; 5]) - 2f64.ln()).abs() < 1e-15);

    let q = synthetic_logistic(30, 5, 0.0, 5).unwrap();
    let x = [0.3, -0.2, 0.5, 0.1, -0.4];
    let g = q.grad_at(&x).unwrap();
    for j in 0..5 {
        let h = 1e-6;
        let mut xp = x;
        let mut xm = x;
        xp[j] += h;
        xm[j] -= h;
        let fd = (q.value(&xp) - q.value(&xm)) / (2.0 * h);
        assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "coord {j}");
    }
}

#[test]
fn logistic_declared_lipschitz_formula() {
    let q: NonconvexLogistic = synthetic_logistic(40, 6, 0.3, 8).unwrap();
    let max_sq = q
        .features()
        .chunks(6)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    assert!((q.smoothness().lipschitz_grad - (max_sq / 4.0 + 0.6)).abs() < 1e-12);
}

#[test]
fn online_noise_is_bounded_and_centred() {
    let base = make_nonconvex_logistic(40, 5, 0.1, 6).unwrap();
    let sigma = 0.7;
    let inst = make_online_stream(&base, sigma, 3).unwrap();
    let p = inst.problem.as_ref();
    let x = [0.2, -0.1, 0.4, 0.0, 0.3];
    let g = base.problem.grad_at(&x).unwrap();
    let samples = 100_000;
    let mut rng = RngStream::new(0, 0);
    let idx = sample_online(&mut rng, samples);
    let mut gi = vec![0.0; 5];
    let mut mean = vec![0.0; 5];
    for &i in &idx {
        p.component_grad(i, &x, &mut gi);
        assert!(dist(&gi, &g) <= sigma * (1.0 + 1e-12));
        for (m, v) in mean.iter_mut().zip(&gi) {
            *m += v / samples as f64;
        }
    }
    let err = dist(&mean, &g);
    assert!(err <= 3.0 * sigma / (samples as f64).sqrt(), "{err}");
}

#[test]
fn zero_sigma_stream_is_deterministic() {
    let base = make_nonconvex_logistic(20, 3, 0.1, 1).unwrap();
    let inst = make_online_stream(&base, 0.0, 0).unwrap();
    let x = [0.1, 0.2, 0.3];
    let g = base.problem.grad_at(&x).unwrap();
    let mut gi = vec![0.0; 3];
    for i in [0usize, 17, 1 << 40] {
        inst.problem.component_grad(i, &x, &mut gi);
        assert!(dist(&gi, &g) < 1e-15);
    }
}

#[test]
fn libsvm_file_round_trip() {
    let path = std::env::temp_dir().join(format!("ssrgd-libsvm-{}.txt", std::process::id()));
    std::fs::write(&path, "1 1:0.5 3:2.0\n-1 2:1.0\n+1 1:-1 2:0.25 3:0.5\n").unwrap();
    let inst = load_libsvm(&path, 3, 0.1).unwrap();
    std::fs::remove_file(&path).ok();
    assert_eq!(inst.dim(), 3);
    assert_eq!(inst.generator_params["n"], 3);
    let p = inst.problem.as_ref();
    assert!((p.value(&[0.0; 3]) - 2f64.ln()).abs() < 1e-15);
    // L = max‖a‖²/4 + 2α; the first row (0.5, 0, 2) has the largest norm.
    let max_sq = 0.25 + 4.0;
    assert!((p.smoothness().lipschitz_grad - (max_sq / 4.0 + 0.2)).abs() < 1e-12);
}
