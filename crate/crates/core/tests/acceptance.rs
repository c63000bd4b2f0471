//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use pcalloc::allocator::{exhaustive_search, solve_interior_point, AllocationProblem, QpGrid, SolverConfig};
use pcalloc::cloud::{PointCloud, Rgb};
use pcalloc::eval::{compute_be, compute_cq, compute_qpe};
use pcalloc::metrics::{symmetric_distortion, Omega};
use pcalloc::models::{fit_from_records, qp_to_step, DistortionModel, FitMethod, QuantPair, RateModel};
use pcalloc::simcodec::{coupling_for_interaction_share, probe_schedule, validate_separability, SimOracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{max_step, vpcc_regime};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn rel(x: f64, truth: f64) -> f64 {
    (x - truth).abs() / truth.abs()
}

/// Exact-model round trip: probe, fit and compare all seven parameters.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let inst = vpcc_regime(&mut rng);
        let records: Vec<_> = probe_schedule()
            .iter()
            .map(|&qp| inst.spec.encode(qp).to_probe_record())
            .collect();
        let fitted = fit_from_records(&records, inst.omega, FitMethod::Exact).expect("fit");
        let d = inst.spec.distortion_model(inst.omega);
        let r = inst.spec.rate;
        let pairs = [
            (fitted.distortion.a, d.a),
            (fitted.distortion.b, d.b),
            (fitted.distortion.c, d.c),
            (fitted.rate.gamma_g, r.gamma_g),
            (fitted.rate.theta_g, r.theta_g),
            (fitted.rate.gamma_c, r.gamma_c),
            (fitted.rate.theta_c, r.theta_c),
        ];
        for (x, t) in pairs {
            worst = worst.max(rel(x, t));
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && within(elapsed, 5.0),
        format!(
            "max relative parameter error {worst:.2e} over 100 specs, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

/// Best modelled distortion on a 1000×1000 grid of steps spanning the QP
/// range. The rate is separable and decreasing, so for each geometry step
/// the cheapest feasible color step is found by bisection.
fn dense_grid_best(d: &DistortionModel, r: &RateModel, target: f64) -> Option<f64> {
    let n = 1000;
    let (lo, hi) = (qp_to_step(22), max_step());
    let steps: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let rc: Vec<f64> = steps.iter().map(|&q| r.color_rate(q)).collect();
    let mut best: Option<f64> = None;
    for &qg in &steps {
        let left = target - r.geometry_rate(qg);
        // rc is decreasing: first index with rc <= left
        let k = rc.partition_point(|&v| v > left);
        if k < n {
            let v = d.predict(QuantPair { g: qg, c: steps[k] });
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

/// Allocator optimality on the worked instance and against dense grids.
fn criterion_2() -> Outcome {
    let cfg = SolverConfig::default();
    let worked = AllocationProblem::new(
        DistortionModel::new(0.5, 0.25, 4.0, Omega::new(0.5).unwrap()),
        RateModel::new(6400.0, -1.0, 3200.0, -1.0).unwrap(),
        1000.0,
    )
    .unwrap();
    let a = solve_interior_point(&worked, &cfg).expect("worked instance");
    let worked_ok = (a.continuous.g - 9.6).abs() <= 1e-4
        && (a.continuous.c - 9.6).abs() <= 1e-4
        && (a.continuous_distortion - 11.2).abs() <= 1e-4;

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_gap = f64::NEG_INFINITY;
    let mut failures = 0;
    for _ in 0..500 {
        let inst = vpcc_regime(&mut rng);
        let d = inst.spec.distortion_model(inst.omega);
        let p = AllocationProblem::new(d, inst.spec.rate, inst.target).expect("well-posed");
        let sol = solve_interior_point(&p, &cfg).expect("solve");
        let grid = dense_grid_best(&d, &inst.spec.rate, inst.target).expect("grid has a feasible point");
        let gap = sol.continuous_distortion - grid;
        worst_gap = worst_gap.max(gap);
        if gap > 1e-4 {
            failures += 1;
        }
    }
    outcome(
        worked_ok && failures == 0,
        format!(
            "worked optimum ({:.6}, {:.6}) D={:.6}; 500 instances: {failures} above grid best + 1e-4, worst gap {worst_gap:.2e}",
            a.continuous.g, a.continuous.c, a.continuous_distortion
        ),
    )
}

/// Full noise-free pipeline against the 441-pair search.
fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 500;
    let mut total = 0u32;
    let mut within_two = 0;
    let mut histogram = [0usize; 6];
    for _ in 0..n {
        let inst = vpcc_regime(&mut rng);
        let records: Vec<_> = probe_schedule()
            .iter()
            .map(|&qp| inst.spec.encode(qp).to_probe_record())
            .collect();
        let fitted = fit_from_records(&records, inst.omega, FitMethod::Exact).expect("fit");
        let p = AllocationProblem::new(fitted.distortion, fitted.rate, inst.target).expect("well-posed");
        let pba = solve_interior_point(&p, &cfg).expect("solve");
        let oracle = SimOracle::new(&inst.spec, inst.omega);
        let esa = exhaustive_search(&oracle, inst.target, QpGrid::default()).expect("search");
        let qpe = compute_qpe(pba.qp, esa.qp);
        total += qpe;
        if qpe <= 2 {
            within_two += 1;
        }
        histogram[(qpe as usize).min(5)] += 1;
    }
    let elapsed = start.elapsed();
    let share = within_two as f64 / n as f64;
    let avg = total as f64 / n as f64;
    outcome(
        share >= 0.95 && avg <= 1.1 && within(elapsed, 60.0),
        format!(
            "QPE<=2 in {:.1}% (need 95%), mean QPE {avg:.2} (need <= 1.1), QPE histogram 0..5+ {histogram:?}, {:.2} s",
            100.0 * share,
            elapsed.as_secs_f64()
        ),
    )
}

fn brute_force_sums(b: &PointCloud, a: &PointCloud) -> (u128, u128) {
    let luma = |c: Rgb| 2126i64 * c.r as i64 + 7152 * c.g as i64 + 722 * c.b as i64;
    let mut geometry = 0u128;
    let mut color = 0u128;
    for (p, pc) in b.positions().iter().zip(b.colors()) {
        let mut best = (u64::MAX, 0usize);
        for (j, q) in a.positions().iter().enumerate() {
            let d: u64 = (0..3).map(|k| (p[k] as i64 - q[k] as i64).pow(2) as u64).sum();
            if d < best.0 {
                best = (d, j);
            }
        }
        geometry += best.0 as u128;
        let dy = luma(*pc) - luma(a.colors()[best.1]);
        color += (dy * dy) as u128;
    }
    (geometry, color)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, extent: u32) -> PointCloud {
    let positions = (0..n)
        .map(|_| [0; 3].map(|_: u32| rng.random_range(0..extent)))
        .collect();
    let colors = (0..n)
        .map(|_| Rgb::new(rng.random(), rng.random(), rng.random()))
        .collect();
    PointCloud::new(positions, colors, Some(10)).unwrap()
}

/// Metric equivalence with an O(n²) brute force.
fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for i in 0..50 {
        let na = rng.random_range(1..=2000);
        let nb = rng.random_range(1..=2000);
        // small extents produce many equidistant neighbours
        let extent = if i % 2 == 0 { 16 } else { 1024 };
        let a = random_cloud(&mut rng, na, extent);
        let b = random_cloud(&mut rng, nb, extent);
        let got = symmetric_distortion(&a, &b);
        let (gba, cba) = brute_force_sums(&b, &a);
        let (gab, cab) = brute_force_sums(&a, &b);
        let scale = 1e8;
        let d_g = (gba as f64 / nb as f64).max(gab as f64 / na as f64);
        let d_c = (cba as f64 / (nb as f64 * scale)).max(cab as f64 / (na as f64 * scale));
        if got.d_g != d_g || got.d_c != d_c {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && within(elapsed, 30.0),
        format!(
            "{mismatches} of 50 cloud pairs differ from brute force, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Outcome {
    let be = compute_be(232.7, 240.0).unwrap();
    let cq = compute_cq(364.08, 53342.84).unwrap();
    let q22 = qp_to_step(22);
    let probes = compute_cq(probe_schedule().len() as f64, QpGrid::default().pairs().count() as f64).unwrap();
    let pass = (be - 3.0).abs() <= 0.05 && (cq - 0.68).abs() <= 0.01 && q22 == 8.0 && (probes - 0.68).abs() <= 0.01;
    outcome(
        pass,
        format!("BE {be:.3}%, CQ {cq:.4}%, step(22) = {q22}, probe ratio {probes:.4}%"),
    )
}

/// Barrier derivatives against central differences.
fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_grad: f64 = 0.0;
    let mut worst_hess: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        let inst = vpcc_regime(&mut rng);
        let p = AllocationProblem::new(inst.spec.distortion_model(inst.omega), inst.spec.rate, inst.target).unwrap();
        let q = QuantPair {
            g: rng.random_range(8.0..80.0),
            c: rng.random_range(8.0..80.0),
        };
        if !p.strictly_feasible(q) {
            continue;
        }
        let mu = rng.random_range(1e-3f64.ln()..1f64.ln()).exp();
        let e = p.barrier_objective(q, mu).unwrap();
        // Central differences at 1e-5 relative step, with Richardson
        // extrapolation against half the step; near the constraint the plain
        // stencil's truncation error dominates.
        let h = [1e-5 * q.g, 1e-5 * q.c];
        let at = |i: usize, s: f64| {
            let mut x = q;
            if i == 0 {
                x.g += s;
            } else {
                x.c += s;
            }
            p.barrier_objective(x, mu).unwrap()
        };
        // central difference of `f` along axis i with step s
        let central = |i: usize, s: f64, f: &dyn Fn(&pcalloc::allocator::BarrierEval) -> f64| {
            (f(&at(i, s)) - f(&at(i, -s))) / (2.0 * s)
        };
        let richardson = |i: usize, f: &dyn Fn(&pcalloc::allocator::BarrierEval) -> f64| {
            (4.0 * central(i, h[i] / 2.0, f) - central(i, h[i], f)) / 3.0
        };
        let mut grad_err = 0.0;
        let mut hess_err = 0.0;
        for i in 0..2 {
            let g_fd = richardson(i, &|b| b.value);
            grad_err += (g_fd - e.gradient[i]).powi(2);
            for j in 0..2 {
                let h_fd = richardson(i, &|b| b.gradient[j]);
                hess_err += (h_fd - e.hessian[j][i]).powi(2);
            }
        }
        let g_norm = e.gradient.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h_norm = e.hessian.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        worst_grad = worst_grad.max(grad_err.sqrt() / g_norm);
        worst_hess = worst_hess.max(hess_err.sqrt() / h_norm);
        checked += 1;
    }
    outcome(
        worst_grad <= 1e-6 && worst_hess <= 1e-6,
        format!("100 interior points: worst relative gradient error {worst_grad:.2e}, Hessian {worst_hess:.2e}"),
    )
}

/// Additive separability of color distortion on the synthetic codec.
fn criterion_7() -> Outcome {
    let qps: Vec<u32> = QpGrid::default().qps().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_additive: f64 = 0.0;
    let mut min_coupled = f64::INFINITY;
    let mut min_noisy_scc = f64::INFINITY;
    for _ in 0..20 {
        let spec = vpcc_regime(&mut rng).spec;
        let additive = validate_separability(&spec, &qps, &qps).unwrap();
        worst_additive = worst_additive.max(additive.residual_fraction);

        let coupled_spec = pcalloc::simcodec::SyntheticCodecSpec {
            coupling: coupling_for_interaction_share(&spec, &qps, &qps, 0.10).unwrap(),
            ..spec
        };
        let coupled = validate_separability(&coupled_spec, &qps, &qps).unwrap();
        min_coupled = min_coupled.min(coupled.residual_fraction);

        let noisy_spec = pcalloc::simcodec::SyntheticCodecSpec {
            noise_rel: 0.01,
            ..spec
        };
        let noisy = validate_separability(&noisy_spec, &qps, &qps).unwrap();
        min_noisy_scc = min_noisy_scc.min(noisy.additive_scc);
    }
    outcome(
        worst_additive < 1e-10 && min_coupled >= 0.05 && min_noisy_scc >= 0.96,
        format!(
            "20 specs: additive residual <= {worst_additive:.2e}, coupled residual >= {min_coupled:.4}, noisy additive SCC >= {min_noisy_scc:.4}"
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("1 exact-model round trip", criterion_1),
        ("2 allocator optimality", criterion_2),
        ("3 ESA agreement", criterion_3),
        ("4 metric oracle equivalence", criterion_4),
        ("5 reference arithmetic", criterion_5),
        ("6 gradient/Hessian checks", criterion_6),
        ("7 separability", criterion_7),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {name}: {} - {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "criterion 8 desk-scale limitation: NOT TESTED - absolute SCC/RMSE/BE/BD-PSNR values on real sequences need the reference encoder; covered by criteria 1-7 instead"
    );
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
