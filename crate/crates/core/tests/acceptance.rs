//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};

use odesens::diffmethods::{cross_compare, relative_error, CompareTable, Method};
use odesens::models::{Fmain, LinearGrowth, LotkaVolterra};
use odesens::sensitivity::{forward_sensitivity_solve, jvp_solution, vjp_solution, JacobianProvider};
use odesens::solvers::{euler_solve, rk23_step, SolverConfig, TimeSpec, ToleranceConfig};

const P: [f64; 4] = [0.015, 0.0001, 0.03, 0.0001];
const Y0: [f64; 2] = [1000.0, 20.0];

// criterion 1
const EULER_BUDGET: Duration = Duration::from_secs(60);
const EULER_ANALYTIC_AD: f64 = 1e-13;
const EULER_ANALYTIC_CS: f64 = 1e-12;
const EULER_ANALYTIC_FD: (f64, f64) = (1e-8, 1e-4);
// criterion 2
const RK23_ANALYTIC_AD: f64 = 1e-13;
const RK23_GROWTH_FACTOR: f64 = 10.0;
// criterion 3
const CLOSED_FORM_REL_TOL: f64 = 1e-8;
const CLOSED_FORM_ERR: f64 = 1e-6;
// criterion 4
const ADJOINT_PAIRS: usize = 50;
const ADJOINT_ERR: f64 = 1e-13;
// criterion 5
const FM_RM_ERR: f64 = 1e-12;
const GRADIENT_FD_ERR: f64 = 1e-5;
// criterion 6
const HESSIAN_SYMMETRY: f64 = 1e-10;
const HESSIAN_FD_ERR: f64 = 1e-5;
// criterion 7
const EULER_RATIO: (f64, f64) = (1.8, 2.2);
const RK23_RATIO: (f64, f64) = (6.5, 9.5);
// criterion 8
const SENS_FIRST_ROW: [f64; 12] = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0];

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reference_grid() -> TimeSpec {
    TimeSpec::linspace(0.0, 1000.0, 10001).unwrap()
}

fn table(solver: SolverConfig) -> (CompareTable, Duration) {
    let start = Instant::now();
    let t = cross_compare(&LotkaVolterra, &Y0, &P, &reference_grid(), &solver, &Method::ALL).unwrap();
    (t, start.elapsed())
}

fn errors(t: &CompareTable) -> (f64, f64, f64, f64) {
    (
        t.get(Method::Analytic, Method::Ad).unwrap(),
        t.get(Method::Analytic, Method::Cs).unwrap(),
        t.get(Method::Analytic, Method::Fd).unwrap(),
        t.get(Method::Fd, Method::Cs).unwrap(),
    )
}

fn criterion_1(euler: &CompareTable, elapsed: Duration) -> Outcome {
    let (ad, cs, fd, _) = errors(euler);
    check(
        ad <= EULER_ANALYTIC_AD
            && cs <= EULER_ANALYTIC_CS
            && (EULER_ANALYTIC_FD.0..=EULER_ANALYTIC_FD.1).contains(&fd)
            && elapsed < EULER_BUDGET,
        format!(
            "analytic/ad {ad:.3e}, analytic/cs {cs:.3e}, analytic/fd {fd:.3e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(euler: &CompareTable, rk: &CompareTable) -> Outcome {
    let (_, e_cs, e_fd, _) = errors(euler);
    let (ad, cs, fd, fd_cs) = errors(rk);
    check(
        ad <= RK23_ANALYTIC_AD
            && fd_cs < fd
            && fd_cs < cs
            && fd >= RK23_GROWTH_FACTOR * e_fd
            && cs >= RK23_GROWTH_FACTOR * e_cs,
        format!(
            "analytic/ad {ad:.3e}, fd/cs {fd_cs:.3e}, analytic/fd {fd:.3e} ({:.1}x euler), analytic/cs {cs:.3e} ({:.1e}x euler)",
            fd / e_fd,
            cs / e_cs
        ),
    )
}

fn criterion_3() -> Outcome {
    let (y0, a) = (2.0, 0.5);
    let tol = ToleranceConfig {
        rel_tol: CLOSED_FORM_REL_TOL,
        ..ToleranceConfig::default()
    };
    let b = forward_sensitivity_solve(
        &LinearGrowth,
        JacobianProvider::Analytic,
        &[a],
        &[y0],
        &TimeSpec::points(vec![0.0, 1.0]).unwrap(),
        &SolverConfig::Rk23(tol),
    )
    .unwrap();
    let t: f64 = 1.0;
    let v_exact = t * y0 * (a * t).exp();
    let w_exact = (a * t).exp();
    let ev = (b.v(1)[(0, 0)] - v_exact).abs() / v_exact;
    let ew = (b.w(1)[(0, 0)] - w_exact).abs() / w_exact;
    check(
        ev <= CLOSED_FORM_ERR && ew <= CLOSED_FORM_ERR,
        format!("V(1) rel err {ev:.3e}, W(1) rel err {ew:.3e}"),
    )
}

/// Compensated summation, so the oracle's own rounding stays far below the tolerance.
fn neumaier(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        carry += if sum.abs() >= x.abs() {
            (sum - t) + x
        } else {
            (x - t) + sum
        };
        sum = t;
    }
    sum + carry
}

fn criterion_4() -> Outcome {
    let bundle = forward_sensitivity_solve(
        &LotkaVolterra,
        JacobianProvider::Analytic,
        &P,
        &Y0,
        &reference_grid(),
        &SolverConfig::euler(0.1),
    )
    .unwrap();
    let pair = bundle.jacobian_pair();
    let n = bundle.len();
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..ADJOINT_PAIRS {
        let g_y0: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g_p: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
        let jg = jvp_solution(&pair, &g_y0, &g_p).unwrap();
        let lhs = neumaier(a.iter().zip(jg.iter()).map(|(x, y)| x * y));
        let (a_y0, a_p) = vjp_solution(&pair, &a).unwrap();
        let rhs = neumaier(a_y0.iter().zip(&g_y0).chain(a_p.iter().zip(&g_p)).map(|(x, y)| x * y));
        worst = worst.max((lhs - rhs).abs() / lhs.abs());
    }
    check(
        worst <= ADJOINT_ERR,
        format!("worst of {ADJOINT_PAIRS} pairs {worst:.3e}"),
    )
}

/// Central differences with `h = √eps·max(1, |x|)`, written independently of the library.
fn central_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = (0..x.len())
        .map(|k| {
            let h = f64::EPSILON.sqrt() * x[k].abs().max(1.0);
            let mut up = x.to_vec();
            let mut down = x.to_vec();
            up[k] += h;
            down[k] -= h;
            let span = up[k] - down[k];
            f(&up).iter().zip(f(&down)).map(|(u, d)| (u - d) / span).collect()
        })
        .collect();
    DMatrix::from_fn(cols[0].len(), x.len(), |i, k| cols[k][i])
}

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb)
}

fn x0() -> Vec<f64> {
    Y0.iter().chain(&P).copied().collect()
}

fn criterion_5() -> Outcome {
    let lv = LotkaVolterra;
    let f = Fmain::new(&lv, reference_grid(), SolverConfig::euler(0.1)).unwrap();
    let fm = f.gradient_forward(&Y0, &P).unwrap();
    let rm = f.gradient_reverse(&Y0, &P).unwrap();
    let fd = central_jacobian(|x| vec![f.objective_at(x).unwrap()], &x0());
    let fd: Vec<f64> = fd.iter().copied().collect();
    let (e_mode, e_fm, e_rm) = (rel_vec(&fm, &rm), rel_vec(&fm, &fd), rel_vec(&rm, &fd));
    check(
        e_mode <= FM_RM_ERR && e_fm <= GRADIENT_FD_ERR && e_rm <= GRADIENT_FD_ERR,
        format!("fm/rm {e_mode:.3e}, fm/fd {e_fm:.3e}, rm/fd {e_rm:.3e}"),
    )
}

fn criterion_6() -> Outcome {
    let lv = LotkaVolterra;
    let f = Fmain::new(&lv, reference_grid(), SolverConfig::euler(0.1)).unwrap();
    let h = f.hessian(&Y0, &P).unwrap();
    let sym = (&h - h.transpose()).norm() / h.norm();
    let h_fd = central_jacobian(|x| f.gradient_reverse(&x[..2], &x[2..]).unwrap(), &x0());
    let e_fd = relative_error(&h, &h_fd).unwrap();

    let rk = Fmain::new(&lv, reference_grid(), SolverConfig::rk23()).unwrap();
    let h_rk = rk.hessian(&Y0, &P);
    let rk_ok = matches!(&h_rk, Ok(m) if m.iter().all(|v| v.is_finite()));
    check(
        sym <= HESSIAN_SYMMETRY && e_fd <= HESSIAN_FD_ERR && rk_ok,
        format!(
            "asymmetry {sym:.3e}, vs fd of reverse gradient {e_fd:.3e}, rk23 variant {}",
            match h_rk {
                Ok(_) if rk_ok => "completed".to_string(),
                Ok(_) => "non-finite".to_string(),
                Err(e) => format!("failed: {e}"),
            }
        ),
    )
}

fn criterion_7() -> Outcome {
    let grow = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0];
    let exact = 1f64.exp();
    let span = TimeSpec::span(0.0, 1.0).unwrap();
    let euler_err = |dt: f64| (euler_solve(grow, &span, &[1.0], dt).unwrap().last_row()[0] - exact).abs();
    let rk_err = |n: usize| {
        let h = 1.0 / n as f64;
        let mut y = vec![1.0];
        for i in 0..n {
            y = rk23_step(grow, i as f64 * h, &y, h).unwrap().y_next;
        }
        (y[0] - exact).abs()
    };
    let r_euler = euler_err(0.01) / euler_err(0.005);
    let r_rk = rk_err(10) / rk_err(20);
    check(
        (EULER_RATIO.0..=EULER_RATIO.1).contains(&r_euler) && (RK23_RATIO.0..=RK23_RATIO.1).contains(&r_rk),
        format!("euler ratio {r_euler:.4}, fixed-step rk23 ratio {r_rk:.4}"),
    )
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sens.csv");
    let file_arg = file.to_str().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec![],
        vec!["--jac", "ad"],
        vec!["--solver", "rk23"],
        vec!["--solver", "rk23", "--jac", "ad", "--n-points", "0"],
        vec!["--t-end", "10", "--n-points", "1"],
        vec!["--output", file_arg],
    ];
    let mut failures = Vec::new();
    for extra in &runs {
        let out = Command::new(env!("CARGO_BIN_EXE_odesens"))
            .arg("sens")
            .args(extra)
            .output()
            .unwrap();
        if !out.status.success() {
            failures.push(format!("{extra:?}: exit {:?}", out.status.code()));
            continue;
        }
        let text = if extra.contains(&"--output") {
            std::fs::read_to_string(&file).unwrap()
        } else {
            String::from_utf8(out.stdout).unwrap()
        };
        let first: Vec<f64> = text
            .lines()
            .nth(1)
            .unwrap_or("")
            .split(',')
            .skip(3)
            .map(|v| v.parse().unwrap_or(f64::NAN))
            .collect();
        if first != SENS_FIRST_ROW {
            failures.push(format!("{extra:?}: {first:?}"));
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{} sensitivity outputs checked", runs.len())
        } else {
            failures.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let (euler, euler_time) = table(SolverConfig::euler(0.1));
    let (rk, _) = table(SolverConfig::rk23());
    let results: Vec<(&str, Outcome)> = vec![
        ("euler cross-method table", criterion_1(&euler, euler_time)),
        ("rk23 cross-method table", criterion_2(&euler, &rk)),
        ("closed-form linear sensitivities", criterion_3()),
        ("adjoint identity", criterion_4()),
        ("objective gradients", criterion_5()),
        ("objective hessian", criterion_6()),
        ("solver convergence order", criterion_7()),
        ("sensitivity csv initial row", criterion_8()),
    ];
    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
