use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::problems::LeastSquares;
use crate::regularizers::{fenchel_residual, project_simplex, Nuclear, SimplexIndicator, SquaredNorm, Zero, L1};

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn random_ls(m: usize, n: usize, seed: u64) -> LeastSquares {
    LeastSquares::new(random(&[m, n], seed, -1.0, 1.0), random(&[m], seed + 1, -1.0, 1.0)).unwrap()
}

struct HalfSquare;

impl SmoothObjective for HalfSquare {
    fn value(&self, u: &Tensor) -> Result<f64> {
        Ok(0.5 * u.norm_sq())
    }
    fn gradient(&self, u: &Tensor) -> Result<Tensor> {
        Ok(u.clone())
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Finite only at the origin of the first coordinate plane `u₀ = 1`.
struct Cliff;

impl SmoothObjective for Cliff {
    fn value(&self, u: &Tensor) -> Result<f64> {
        Ok(if u.data()[0] == 1.0 { 1.0 } else { f64::NAN })
    }
    fn gradient(&self, u: &Tensor) -> Result<Tensor> {
        Ok(Tensor::full(u.shape(), 1.0))
    }
}

fn run_fixed(
    e: &dyn SmoothObjective,
    r: &dyn BregmanFunction,
    u0: Tensor,
    tau: f64,
    iters: usize,
    method: Method,
) -> RunOutcome {
    let st = SolverState::new(e, r, u0, tau).unwrap();
    let opts = RunOptions { method, certify_dual: true, ..Default::default() };
    run(e, r, st, &BacktrackingPolicy::new(tau), &StoppingRule::max_iter(iters), opts).unwrap()
}

#[test]
fn zero_iterations_return_initial_state() {
    let e = HalfSquare;
    let st = SolverState::new(&e, &Zero, Tensor::full(&[3], 2.0), 0.5).unwrap();
    let out = run(&e, &Zero, st.clone(), &BacktrackingPolicy::new(0.5), &StoppingRule::max_iter(0), RunOptions::default())
        .unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.reason, StopReason::MaxIter);
    assert_eq!(out.state.u, st.u);
    assert_eq!(out.state.k, 0);
}

#[test]
fn zero_regularizer_gives_gradient_descent() {
    let f = random(&[6], 1, -1.0, 1.0);
    let e = LeastSquares::denoising(f.clone());
    let u0 = random(&[6], 2, -1.0, 1.0);
    let tau = 0.3;
    let mut st = SolverState::new(&e, &Zero, u0.clone(), tau).unwrap();
    for k in 1..=50 {
        st = linbreg_step(&e, &Zero, &st).unwrap();
        let c = (1.0 - tau).powi(k);
        for ((a, fi), ui) in st.u.data().iter().zip(f.data()).zip(u0.data()) {
            let expect = fi + c * (ui - fi);
            assert!((a - expect).abs() <= 1e-14 * (1.0 + expect.abs()));
        }
    }
    // the squared-norm Bregman function with no extra term also reduces to it
    let sq = SquaredNorm::new(0.0).unwrap();
    let a = linbreg_step(&e, &sq, &SolverState::new(&e, &sq, u0.clone(), tau).unwrap()).unwrap();
    let expect = u0.sub(&e.gradient(&u0).unwrap().scale(tau));
    assert!(a.u.sub(&expect).max_abs() < 1e-15);
}

#[test]
fn analytic_shrinkage_step() {
    let f = Tensor::vector(vec![2.0, 0.5]).unwrap();
    let e = LeastSquares::denoising(f);
    let r = L1::new(1.0).unwrap();
    let st = SolverState::with_subgradient(&e, &r, Tensor::zeros(&[2]), Tensor::zeros(&[2]), 1.0).unwrap();
    let next = linbreg_step(&e, &r, &st).unwrap();
    assert_eq!(next.u.data(), &[1.0, 0.0]);
    assert_eq!(next.q.data(), &[1.0, 0.5]);
    assert_eq!(fenchel_residual(&r, &next.u, &next.q).unwrap(), 0.0);
}

#[test]
fn aggregate_form_for_constant_stepsize() {
    let e = random_ls(7, 5, 3);
    let r = L1::new(0.2).unwrap();
    let u0 = random(&[5], 4, -1.0, 1.0);
    let tau = 0.5 / e.lipschitz().unwrap();
    let mut st = SolverState::new(&e, &r, u0.clone(), tau).unwrap();
    let mut acc = u0.clone();
    acc.axpy(tau, &st.q);
    for _ in 0..10 {
        acc.axpy(-tau, &e.gradient(&st.u).unwrap());
        st = linbreg_step(&e, &r, &st).unwrap();
        let direct = r.prox(&acc, tau).unwrap();
        assert!(st.u.sub(&direct).max_abs() <= 1e-10);
    }
}

#[test]
fn backtracking_shrink_sequence() {
    let e = HalfSquare;
    let st = SolverState::new(&e, &Zero, Tensor::vector(vec![1.0]).unwrap(), 4.0).unwrap();
    let policy = BacktrackingPolicy::new(4.0);
    let next = backtrack(&e, &Zero, &st, &policy, policy.resolved_eps(st.energy), Method::Linbreg).unwrap();
    assert_eq!(next.tau, 1.6875);
    assert_eq!(next.u.data(), &[-0.6875]);
    assert!(next.energy <= st.energy);
    assert_eq!(BACKTRACK_SHRINK, 3.0 / 4.0);

    let st = SolverState::new(&e, &Zero, Tensor::vector(vec![1.0]).unwrap(), 0.5).unwrap();
    let next = backtrack(&e, &Zero, &st, &BacktrackingPolicy::new(0.5), 0.0, Method::Linbreg).unwrap();
    assert_eq!(next.tau, 0.5);
}

#[test]
fn stepsize_never_increases_and_stagnation_is_reported() {
    let e = HalfSquare;
    let st = SolverState::new(&e, &Zero, random(&[4], 5, -1.0, 1.0), 10.0).unwrap();
    let out = run(&e, &Zero, st, &BacktrackingPolicy::new(10.0), &StoppingRule::max_iter(30), RunOptions::default())
        .unwrap();
    assert!(out.records.windows(2).all(|w| w[1].tau <= w[0].tau));

    let st = SolverState::new(&Cliff, &Zero, Tensor::vector(vec![1.0, 0.0]).unwrap(), 1.0).unwrap();
    let err = run(&Cliff, &Zero, st, &BacktrackingPolicy::new(1.0), &StoppingRule::max_iter(3), RunOptions::default());
    assert!(matches!(err, Err(Error::Stagnation { k: 0, .. })));
}

#[test]
fn projected_gradient_examples() {
    let c = Tensor::vector(vec![0.9, 0.8, -0.3]).unwrap();
    let e = LeastSquares::denoising(c.clone());
    let h0 = Tensor::vector(vec![1.0 / 3.0; 3]).unwrap();
    let st = SolverState::new(&e, &SimplexIndicator, h0, 1.0).unwrap();
    let next = projected_gradient_step(&e, &SimplexIndicator, &st).unwrap();
    assert!(next.u.sub(&project_simplex(&c)).max_abs() < 1e-15);

    // a feasible minimiser is a fixed point
    let inside = Tensor::vector(vec![0.2, 0.3, 0.5]).unwrap();
    let e = LeastSquares::denoising(inside.clone());
    let st = SolverState::new(&e, &SimplexIndicator, inside.clone(), 0.7).unwrap();
    assert!(projected_gradient_step(&e, &SimplexIndicator, &st).unwrap().u.sub(&inside).max_abs() < 1e-15);
}

#[test]
fn projected_gradient_matches_linbreg_with_indicator_in_the_interior() {
    // minimiser strictly inside the simplex keeps every trajectory interior
    let target = Tensor::vector(vec![0.3, 0.25, 0.2, 0.25]).unwrap();
    let a = random(&[6, 4], 6, 0.5, 1.0);
    let f = matmul(&a, Transpose::No, &target.reshape(&[4, 1]).unwrap(), Transpose::No).unwrap().flatten();
    let e = LeastSquares::new(a, f).unwrap();
    let h0 = Tensor::vector(vec![0.25; 4]).unwrap();
    let tau = 1.0 / e.lipschitz().unwrap();
    let mut p = SolverState::new(&e, &SimplexIndicator, h0.clone(), tau).unwrap();
    let mut l = p.clone();
    for _ in 0..200 {
        p = projected_gradient_step(&e, &SimplexIndicator, &p).unwrap();
        l = linbreg_step(&e, &SimplexIndicator, &l).unwrap();
        assert!(p.u.data().iter().all(|&v| v > 0.0));
        assert!(p.u.sub(&l.u).max_abs() <= 1e-12);
    }
}

use crate::tensor::{matmul, Transpose};

#[test]
fn proximal_gradient_diverges_from_linbreg_after_first_step() {
    let f = Tensor::vector(vec![2.0, 0.5, -1.5]).unwrap();
    let e = LeastSquares::denoising(f);
    let r = L1::new(1.0).unwrap();
    let st = SolverState::with_subgradient(&e, &r, Tensor::zeros(&[3]), Tensor::zeros(&[3]), 1.0).unwrap();
    let p1 = proximal_gradient_step(&e, &r, &st).unwrap();
    let l1 = linbreg_step(&e, &r, &st).unwrap();
    assert_eq!(p1.u, l1.u);
    let p2 = proximal_gradient_step(&e, &r, &p1).unwrap();
    let l2 = linbreg_step(&e, &r, &l1).unwrap();
    assert!(p2.u.sub(&l2.u).norm() > 0.1);
    // proximal gradient sits at the shrunken data; linbreg recovers it
    assert_eq!(p2.u.data(), &[1.0, 0.0, -0.5]);
    assert_eq!(l2.u.data(), &[2.0, 0.0, -1.5]);
}

#[test]
fn surrogate_forms() {
    let e = HalfSquare;
    let x = random(&[5], 7, -1.0, 1.0);
    let zero = Tensor::zeros(&[5]);
    assert_eq!(surrogate_value(&e, &Zero, &x, &zero, None).unwrap(), e.value(&x).unwrap());
    let r = L1::new(0.7).unwrap();
    let v = random(&[5], 8, -1.0, 1.0);
    let q = r.initial_subgradient(&v).unwrap();
    let conj = surrogate_value(&e, &r, &x, &q, None).unwrap();
    let breg = e.value(&x).unwrap() + bregman_distance(&r, &x, &v, &q);
    assert!((conj - breg).abs() <= 1e-12);
    let qx = r.initial_subgradient(&x).unwrap();
    assert!((surrogate_value(&e, &r, &x, &qx, Some(&x)).unwrap() - e.value(&x).unwrap()).abs() < 1e-12);
    let tv = crate::regularizers::TotalVariation::new(1.0, 1, 5).unwrap();
    assert!(matches!(surrogate_value(&e, &tv, &x, &q, None), Err(Error::Unsupported(_))));
    assert!(surrogate_value(&e, &tv, &x, &tv.initial_subgradient(&v).unwrap(), Some(&v)).is_ok());
}

#[test]
fn surrogate_subgradient_cases() {
    let f = random(&[4], 9, -1.0, 1.0);
    let e = LeastSquares::denoising(f.clone());
    let st = SolverState::new(&e, &Zero, f.clone(), 0.5).unwrap();
    assert!(surrogate_subgradient(&st).is_err());
    let next = linbreg_step(&e, &Zero, &st).unwrap();
    let (a, b) = surrogate_subgradient(&next).unwrap();
    assert_eq!(a.norm(), 0.0);
    assert_eq!(b.norm(), 0.0);

    let st = SolverState::new(&e, &Zero, Tensor::zeros(&[4]), 0.5).unwrap();
    let next = linbreg_step(&e, &Zero, &st).unwrap();
    let (a, _) = surrogate_subgradient(&next).unwrap();
    let bound = next.u.sub(&st.u).norm() / 0.5 + next.grad.sub(&st.grad).norm();
    assert!(a.norm() <= bound + 1e-14);
}

#[test]
fn stepsize_bound_arithmetic() {
    // τ ≤ 2/(L + 2ρ₁) with L = 1, ρ₁ = 1/4
    let tau_max: f64 = 2.0 / (1.0 + 2.0 * 0.25);
    assert!((tau_max - 4.0 / 3.0).abs() < 1e-15);
}

#[test]
fn gradient_descent_at_inverse_lipschitz_decreases_energy() {
    let e = random_ls(8, 5, 10);
    let tau = 1.0 / e.lipschitz().unwrap();
    let out = run_fixed(&e, &Zero, Tensor::zeros(&[5]), tau, 100, Method::Linbreg);
    let mut prev = out.surrogate0;
    for rec in &out.records {
        assert!(rec.energy <= prev + 1e-15);
        assert!((rec.surrogate - rec.energy).abs() <= 1e-12 * (1.0 + rec.energy));
        prev = rec.energy;
    }
}

fn audit(e: &LeastSquares, r: &dyn BregmanFunction, u0: Tensor, iters: usize) {
    let l = e.lipschitz().unwrap();
    let rho1 = l / 4.0;
    let tau = 2.0 / (l + 2.0 * rho1);
    let out = run_fixed(e, r, u0, tau, iters, Method::Linbreg);
    assert_eq!(out.records.len(), iters);
    assert!(check_sufficient_decrease(&out.records, out.surrogate0, l).is_empty());
    let mut sum_sq = 0.0;
    let mut f_min = out.surrogate0;
    for rec in &out.records {
        assert_eq!(rec.decrease_ok, Some(true), "k = {}", rec.k);
        assert_eq!(rec.bound_ok, Some(true), "k = {}", rec.k);
        assert!(rec.identity_residual() <= 1e-9, "k = {}: {}", rec.k, rec.identity_residual());
        assert!(rec.breg_sym >= -1e-12);
        if let Some(res) = rec.dual_residual {
            assert!(res.abs() <= 1e-8 * (1.0 + r.value(&out.state.u).abs()), "dual residual {res}");
        }
        assert!(rec.energy <= rec.surrogate + 1e-10 * (1.0 + rec.energy.abs()));
        sum_sq += rec.iterate_gap.powi(2);
        f_min = f_min.min(rec.surrogate);
    }
    assert!(sum_sq <= (out.surrogate0 - f_min) / rho1 * (1.0 + 1e-9) + 1e-12);
}

#[test]
fn monitors_on_l1_simplex_and_nuclear_instances() {
    audit(&random_ls(10, 8, 11), &L1::new(0.3).unwrap(), Tensor::zeros(&[8]), 500);
    audit(&random_ls(10, 8, 12), &SimplexIndicator, Tensor::full(&[8], 1.0 / 8.0), 500);
    audit(&random_ls(15, 12, 13), &Nuclear::new(0.4, 3, 4).unwrap(), Tensor::zeros(&[3, 4]), 500);
}

#[test]
fn discrepancy_stop_on_noisy_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let truth = random(&[20], 15, -1.0, 1.0);
    let noise = Tensor::new(&[20], (0..20).map(|_| 0.01 * rng.random_range(-1.0..1.0)).collect()).unwrap();
    let f = truth.add(&noise);
    let a = random(&[20, 20], 16, -1.0, 1.0);
    let f = matmul(&a, Transpose::No, &f.reshape(&[20, 1]).unwrap(), Transpose::No).unwrap().flatten();
    let e = LeastSquares::new(a, f).unwrap();
    let eta = 1.2 * 0.5 * noise.norm_sq();
    let tau = 1.0 / e.lipschitz().unwrap();
    let st = SolverState::new(&e, &L1::new(0.5).unwrap(), Tensor::zeros(&[20]), tau).unwrap();
    let stop = StoppingRule { max_iter: 200_000, discrepancy_eta: Some(eta), iterate_gap_tol: None };
    let out = run(&e, &L1::new(0.5).unwrap(), st, &BacktrackingPolicy::new(tau), &stop, RunOptions::default()).unwrap();
    assert_eq!(out.reason, StopReason::Discrepancy);
    assert!(out.state.energy <= eta);
    assert!(out.state.k < stop.max_iter);
}

#[test]
fn iterate_gap_stop() {
    let e = LeastSquares::denoising(random(&[3], 17, -1.0, 1.0));
    let st = SolverState::new(&e, &Zero, Tensor::zeros(&[3]), 0.5).unwrap();
    let stop = StoppingRule { max_iter: 10_000, discrepancy_eta: None, iterate_gap_tol: Some(1e-10) };
    let out = run(&e, &Zero, st, &BacktrackingPolicy::new(0.5), &stop, RunOptions::default()).unwrap();
    assert_eq!(out.reason, StopReason::IterateGap);
    assert!(out.records.last().unwrap().iterate_gap <= 1e-10);
}

#[test]
fn observer_sees_every_record_and_can_abort() {
    let e = LeastSquares::denoising(random(&[3], 18, -1.0, 1.0));
    let st = SolverState::new(&e, &Zero, Tensor::zeros(&[3]), 0.5).unwrap();
    let mut seen = Vec::new();
    let out = run_observed(
        &e,
        &Zero,
        st.clone(),
        &BacktrackingPolicy::new(0.5),
        &StoppingRule::max_iter(7),
        RunOptions::default(),
        &mut |s, rec| {
            assert_eq!(s.k, rec.k);
            seen.push(rec.k);
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(seen, (1..=7).collect::<Vec<_>>());
    assert_eq!(out.records.len(), 7);
    let err = run_observed(
        &e,
        &Zero,
        st,
        &BacktrackingPolicy::new(0.5),
        &StoppingRule::max_iter(7),
        RunOptions::default(),
        &mut |_, _| Err(Error::Argument("stop".into())),
    );
    assert!(err.is_err());
}

#[test]
fn csv_export_layout() {
    let e = LeastSquares::denoising(random(&[3], 19, -1.0, 1.0));
    let out = run_fixed(&e, &Zero, Tensor::zeros(&[3]), 0.5, 2, Method::ProximalGradient);
    let mut buf = Vec::new();
    write_monitor_csv(&mut buf, &out.records, &["tv_value".to_string()], &[vec![1.5], vec![f64::NAN]]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# linbreg-monitor v1");
    assert_eq!(
        lines[1],
        "k,tau,energy,surrogate,iterate_gap,breg_sym,r_norm,rho2_bound,decrease_ok,bound_ok,tv_value"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("1,0.5,"));
    assert!(lines[2].ends_with(",NA,1,1.5"));
    assert!(lines[3].ends_with(",NA"));
    assert!(write_monitor_csv(Vec::new(), &out.records, &["x".to_string()], &[vec![1.0]]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn step_identity_and_dual_feasibility(seed in 0u64..5000, alpha in 0.01f64..1.0, frac in 0.1f64..1.9) {
        let e = random_ls(6, 5, seed);
        let r = L1::new(alpha).unwrap();
        let tau = frac / e.lipschitz().unwrap();
        let out = run_fixed(&e, &r, random(&[5], seed + 2, -1.0, 1.0), tau, 20, Method::Linbreg);
        for rec in &out.records {
            prop_assert!(rec.identity_residual() <= 1e-9);
            prop_assert!(rec.dual_residual.unwrap().abs() <= 1e-8);
        }
    }

    #[test]
    fn gradient_descent_equivalence(seed in 0u64..5000, tau in 0.05f64..1.5) {
        let f = random(&[4], seed, -3.0, 3.0);
        let e = LeastSquares::denoising(f.clone());
        let u0 = random(&[4], seed + 1, -3.0, 3.0);
        let mut st = SolverState::new(&e, &Zero, u0.clone(), tau).unwrap();
        for k in 1..=20 {
            st = linbreg_step(&e, &Zero, &st).unwrap();
            let c = (1.0 - tau).powi(k);
            for ((a, fi), ui) in st.u.data().iter().zip(f.data()).zip(u0.data()) {
                let expect = fi + c * (ui - fi);
                prop_assert!((a - expect).abs() <= 1e-13 * (1.0 + expect.abs()));
            }
        }
    }
}
