//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs without the libtest harness so the lines always print.

mod common;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wavefront::diagnostics::{
    adjoint_integrate, elementarity_symmetric, front_problem, melnikov_sensitivity, tangency_of, transversality_front,
    End, TangencyOptions, TangencyVerdict,
};
use wavefront::dynamics::{hamiltonian_state, integrate_state};
use wavefront::perturbation::{case1_bump, case2_bump, combination, perturbed, robustness_experiment, BumpPerturbation};
use wavefront::potential::{find_critical_points, Polynomial, SearchBox};
use wavefront::shooting::{
    check_standing_front_obstruction, solve_asymmetric_pulse, solve_front, solve_symmetric_pulse, FrontMap,
    Obstruction,
};
use wavefront::spectral::{lambda_pair, manifold_dimensions, spectrum_at};
use wavefront::{
    ConnectionSolution, CriticalPoint, DiagnosticsOptions, FrontProblem, IntegrateOptions, PotentialModel,
    ShootingOptions, Verdict,
};

use common::*;

type Outcome = Result<String, String>;

const A: f64 = 0.25;

fn nagumo() -> PotentialModel {
    PotentialModel::new(Polynomial::univariate(&[0.0, 0.0, A / 2.0, -(1.0 + A) / 3.0, 0.25]))
}

fn cubic() -> PotentialModel {
    PotentialModel::new(Polynomial::univariate(&[0.0, 0.0, 0.5, -1.0 / 3.0]))
}

fn cp(model: &PotentialModel, e: &[f64]) -> CriticalPoint {
    CriticalPoint::refine(model, e).expect("critical point")
}

fn nagumo_front() -> Result<ConnectionSolution, String> {
    let m = nagumo();
    let p = FrontProblem::new(m.clone(), cp(&m, &[1.0]), cp(&m, &[0.0]), (0.05, 1.0)).map_err(|e| e.to_string())?;
    solve_front(&p, None, &ShootingOptions::default()).map_err(|e| e.to_string())
}

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// First `xi` with `u1(xi) = level` on a decreasing profile.
fn crossing(sol: &ConnectionSolution, level: f64) -> f64 {
    let t = &sol.trajectory;
    let (mut a, mut b) = (t.xi_start(), t.xi_end());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if t.state_at(m).unwrap()[0] > level {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn nagumo_speed_and_profile() -> Outcome {
    let start = Instant::now();
    let sol = nagumo_front()?;
    let secs = start.elapsed().as_secs_f64();
    let c_err = (sol.speed - 2f64.sqrt() * (0.5 - A)).abs();
    let shift = crossing(&sol, 0.5);
    let exact = |xi: f64| 1.0 / (1.0 + (xi / 2f64.sqrt()).exp());
    let p_err = sol
        .trajectory
        .xi()
        .iter()
        .zip(sol.trajectory.states())
        .map(|(t, y)| (y[0] - exact(t - shift)).abs())
        .fold(0.0, f64::max);
    check(
        c_err <= 1e-4 && p_err <= 1e-3 && secs < 5.0,
        format!("|dc| = {c_err:.2e}, profile error {p_err:.2e}, {secs:.2} s"),
    )
}

fn sech_pulse() -> Outcome {
    let start = Instant::now();
    let m = cubic();
    let sol = solve_symmetric_pulse(&m, &cp(&m, &[0.0]), None, &ShootingOptions::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let xt = sol.turning_time.ok_or("no turning time")?;
    let t = &sol.trajectory;
    let peak = (t.state_at(xt).unwrap()[0] - 1.5).abs();
    let reach = (xt - t.xi_start()).min(t.xi_end() - xt);
    let sym = (0..=2000)
        .map(|k| reach * k as f64 / 2000.0)
        .map(|x| (t.state_at(xt - x).unwrap()[0] - t.state_at(xt + x).unwrap()[0]).abs())
        .fold(0.0, f64::max);
    let h = t.states().iter().map(|y| hamiltonian_state(&m, y).abs()).fold(0.0, f64::max);
    let rep = elementarity_symmetric(&sol, &DiagnosticsOptions::default()).map_err(|e| e.to_string())?;
    let grad = (1.5f64 - 1.5 * 1.5).abs();
    let margin_err = (rep.margin - grad).abs() / grad;
    check(
        peak <= 1e-6 && sym <= 1e-8 && h <= 1e-8 && margin_err <= 0.01 && secs < 5.0,
        format!(
            "|u(xi_T) - 1.5| = {peak:.2e}, symmetry {sym:.2e}, |H| {h:.2e}, margin {:.6} ({secs:.2} s)",
            rep.margin
        ),
    )
}

fn eigenvalue_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mu: f64 = rng.random_range(-10.0..10.0);
        let c: f64 = rng.random_range(0.0..10.0);
        let (a, b) = lambda_pair(mu, c);
        for l in [a, b] {
            worst = worst.max((l * l + l * c - mu).norm() / (1.0 + mu.abs()));
        }
    }
    let mut table_ok = true;
    for d in 1..=5usize {
        for m in 0..=d {
            for c in [0.0, 1.0] {
                let expected = if c == 0.0 { (d - m, d - m, 2 * m) } else { (d - m, d + m, 0) };
                let mu: Vec<f64> = (0..d).map(|i| if i < m { -1.0 - i as f64 } else { 1.0 + i as f64 }).collect();
                let model = PotentialModel::new(Polynomial::diagonal_quadratic(&mu));
                let spectral = spectrum_at(&model, &cp(&model, &vec![0.0; d]), c).dims();
                table_ok &= manifold_dimensions(d, m, c) == expected && spectral == expected;
            }
        }
    }
    check(
        worst <= 1e-12 && table_ok,
        format!("worst scaled residual {worst:.2e}, dimension table {}", if table_ok { "matches" } else { "differs" }),
    )
}

fn hamiltonian_conservation() -> Outcome {
    let m = cubic();
    let opts = IntegrateOptions::with_tol(1e-10);
    let mut drift: f64 = 0.0;
    for span in [(0.0, 40.0), (0.0, -40.0)] {
        let t = integrate_state(&m, 0.0, &[1.5, 0.0], span, &opts, &[]).map_err(|e| e.to_string())?.trajectory;
        drift = drift.max(t.states().iter().map(|y| hamiltonian_state(&m, y).abs()).fold(0.0, f64::max));
    }
    let sol = nagumo_front()?;
    let t = &sol.trajectory;
    let n = 200_000;
    let (a, b) = (t.xi_start(), t.xi_end());
    let h = (b - a) / n as f64;
    let speed2 = |k: usize| {
        let y = t.state_at(a + h * k as f64).unwrap();
        y[1] * y[1]
    };
    // composite Simpson
    let mut integral = speed2(0) + speed2(n);
    for k in 1..n {
        integral += if k % 2 == 1 { 4.0 } else { 2.0 } * speed2(k);
    }
    integral *= h / 3.0;
    let lhs = sol.model.value(&sol.departure.e) - sol.model.value(&sol.arrival.e);
    let rel = (lhs + sol.speed * integral).abs() / lhs.abs();
    check(
        drift <= 1e-8 && rel <= 1e-6,
        format!("energy drift {drift:.2e}, dissipation identity relative error {rel:.2e}"),
    )
}

fn melnikov_vs_fd() -> Outcome {
    let sol = nagumo_front()?;
    let opts = DiagnosticsOptions::default();
    let terminal = [0.8, -0.6];
    let adj = adjoint_integrate(&sol, &terminal, None, &opts).map_err(|e| e.to_string())?;
    let base = front_problem(&sol);
    let mismatch = |w: &BumpPerturbation, a: f64| -> Vec<f64> {
        let p = base.with_model(perturbed(&sol.model, w, a));
        let map = FrontMap {
            problem: &p,
            unstable: sol.unstable_size,
            stable: sol.stable_size.unwrap(),
            opts: &sol.options,
        };
        map.mismatch(&sol.b_u, sol.b_s.as_ref().unwrap(), sol.transit, sol.speed).unwrap()
    };
    let bumps = [
        case1_bump(&[0.5], 0.2, &[1.0]).unwrap(),
        case2_bump(&[0.4], 0.15).unwrap(),
        case1_bump(&[0.7], 0.1, &[-1.0]).unwrap(),
        case2_bump(&[0.2], 0.1).unwrap(),
    ];
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    let mut values = Vec::new();
    for w in &bumps {
        let s = melnikov_sensitivity(&sol.trajectory, &adj, &PotentialModel::new(w.clone()), &opts);
        let (p, m) = (mismatch(w, eps), mismatch(w, -eps));
        let fd: f64 = p.iter().zip(&m).zip(&terminal).map(|((a, b), t)| (a - b) / (2.0 * eps) * t).sum();
        worst = worst.max((s - fd).abs() / fd.abs());
        values.push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lin: f64 = 0.0;
    for _ in 0..10 {
        let (x, y): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let both = melnikov_sensitivity(
            &sol.trajectory,
            &adj,
            &combination(1, vec![(x, bumps[0].clone()), (y, bumps[1].clone())]),
            &opts,
        );
        lin = lin.max((both - x * values[0] - y * values[1]).abs() / (1.0 + both.abs()));
    }
    check(
        worst <= 1e-3 && lin <= 1e-10 && values.iter().all(|v| v.abs() > 1e-6),
        format!("{} bumps, worst relative FD gap {worst:.2e}, linearity defect {lin:.2e}", bumps.len()),
    )
}

fn transversality() -> Outcome {
    let sol = nagumo_front()?;
    let opts = DiagnosticsOptions::default();
    let r = transversality_front(&sol, &opts).map_err(|e| e.to_string())?;
    let dup = r.with_column_copied(0, 1, &opts);
    check(
        r.rank == 2 && r.margin > 1e-3 && r.verdict == Verdict::Transverse && dup.verdict == Verdict::Degenerate,
        format!("rank {}, margin {:.3e}, duplicated column gives {:?}", r.rank, r.margin, dup.verdict),
    )
}

fn tangency() -> Outcome {
    let m = PotentialModel::new(Polynomial::diagonal_quadratic(&[1.0, 4.0]));
    let e = cp(&m, &[0.0, 0.0]);
    let opts = IntegrateOptions {
        rtol: 1e-12,
        atol: 1e-30,
        ..IntegrateOptions::default()
    };
    let exact = |a: f64, b: f64, xi: f64| -> Vec<f64> {
        let (p, q) = ((-xi).exp(), (-2.0 * xi).exp());
        vec![a * p, b * q, -a * p, -2.0 * b * q]
    };
    let orbit = |a: f64, b: f64| integrate_state(&m, 0.0, &exact(a, b, 30.0), (30.0, 0.0), &opts, &[]);
    let mixed = orbit(0.01, 0.02).map_err(|e| e.to_string())?.trajectory;
    let strong = orbit(0.0, 0.02).map_err(|e| e.to_string())?.trajectory;
    let t = TangencyOptions::default();
    let r = tangency_of(&m, &mixed, &e, End::Right, &t).map_err(|e| e.to_string())?;
    let s = tangency_of(&m, &strong, &e, End::Right, &t).map_err(|e| e.to_string())?;
    let rate = r.fitted_rate.unwrap_or(f64::NAN);
    let cos = r.direction_cosine.unwrap_or(f64::NAN);
    check(
        r.verdict == TangencyVerdict::SlowTangent
            && (rate + 1.0).abs() <= 1e-3
            && cos >= 1.0 - 1e-4
            && s.verdict == TangencyVerdict::Fast,
        format!("mixed start {:?} (rate {rate:.6}, cosine {cos:.8}), strong start {:?}", r.verdict, s.verdict),
    )
}

fn obstruction() -> Outcome {
    let minima = |coeffs: &[f64]| -> Result<(PotentialModel, Vec<CriticalPoint>), String> {
        let m = PotentialModel::new(Polynomial::univariate(coeffs));
        let pts = find_critical_points(&m, &SearchBox::new(vec![-3.0], vec![3.0]), 64).map_err(|e| e.to_string())?;
        let mins = pts.points.into_iter().filter(|p| p.morse_index == 0).collect();
        Ok((m, mins))
    };
    let opts = ShootingOptions::default();
    let (tilted, a) = minima(&[0.25, 0.1, -0.5, 0.0, 0.25])?;
    let (sym, b) = minima(&[0.0, 0.0, -0.5, 0.0, 0.25])?;
    if a.len() != 2 || b.len() != 2 {
        return Err("expected two minima in each well".into());
    }
    let o1 = check_standing_front_obstruction(&tilted, &a[0], &a[1], &opts).map_err(|e| e.to_string())?;
    let o2 = check_standing_front_obstruction(&sym, &b[0], &b[1], &opts).map_err(|e| e.to_string())?;
    check(
        matches!(o1, Obstruction::Obstructed { .. }) && matches!(o2, Obstruction::PossiblyConnectable { .. }),
        format!("unequal depths {o1:?}, equal depths {o2:?}"),
    )
}

fn scalar_pulses_are_symmetric() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let opts = ShootingOptions::default();
    let (mut found, mut symmetric) = (0, 0);
    let mut failures = Vec::new();
    for k in 0..20 {
        let mu: f64 = rng.random_range(0.5..2.0);
        let kappa: f64 = rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        // quartic term small enough that V returns to the level of the minimum
        let q = if k % 2 == 0 {
            0.0
        } else {
            rng.random_range(-0.5..0.8) * 2.0 * kappa * kappa / (9.0 * mu)
        };
        let m = PotentialModel::new(Polynomial::univariate(&[0.0, 0.0, mu / 2.0, -kappa / 3.0, q / 4.0]));
        match solve_asymmetric_pulse(&m, &cp(&m, &[0.0]), None, &opts) {
            Ok(sol) => {
                found += 1;
                if sol.symmetric {
                    symmetric += 1;
                }
            }
            Err(e) => failures.push(format!("#{k}: {e}")),
        }
    }
    check(
        found == 20 && symmetric == found,
        format!("{symmetric} of {found} pulses flagged symmetric{}", if failures.is_empty() {
            String::new()
        } else {
            format!("; not found: {}", failures.join(", "))
        }),
    )
}

fn robustness() -> Outcome {
    let sol = nagumo_front()?;
    let w = case1_bump(&[0.5], 0.1, &[1.0]).unwrap();
    let a = 1e-4;
    let rep = robustness_experiment(&sol, &w, &[a], &DiagnosticsOptions::default()).map_err(|e| e.to_string())?;
    let rung = &rep.rungs[0];
    let dc = rung.speed.ok_or("re-solve failed")? - sol.speed;
    let predicted = rep.predicted_slope * a;
    let rel = (dc - predicted).abs() / predicted.abs();
    check(
        rung.converged && rel <= 0.05,
        format!("dc = {dc:.4e}, predicted {predicted:.4e}, relative gap {rel:.2e}"),
    )
}

/// The CLI workflow from problem files to diagnostics, into `dir`.
fn cli_script(dir: &Path) -> Result<(), String> {
    let run = |cmd: &str, cfg: &Path, sub: &str, expect: i32| -> Result<(), String> {
        let (code, err) = run_in(cmd, cfg, &dir.join(sub));
        if code == expect {
            Ok(())
        } else {
            Err(format!("{cmd} {}: exit {code}: {err}", cfg.display()))
        }
    };
    let c = configs();
    run("equilibria", &c.join("double_well.json"), "double_well", 0)?;
    run("front", &c.join("nagumo.json"), "nagumo", 0)?;
    run("scan", &c.join("nagumo_scan.json"), "nagumo_scan", 0)?;
    run("pulse", &c.join("sech.json"), "sech", 0)?;
    run("pulse", &c.join("quadratic.json"), "quadratic", 4)?;
    let cfgs = dir.join("configs");
    std::fs::create_dir_all(&cfgs).map_err(|e| e.to_string())?;
    for (name, sol) in [("nagumo", "nagumo"), ("sech", "sech")] {
        let p = write_config(&cfgs, &format!("{name}_check.json"), &json!({
            "schema": 1, "command": "check", "solution": dir.join(sol).join("solution.json")
        }));
        run("check", &p, &format!("{name}_check"), 0)?;
    }
    let mut perturb = read_json(&c.join("nagumo_perturb.json"));
    perturb["solution"] = json!(dir.join("nagumo").join("solution.json"));
    perturb.as_object_mut().unwrap().remove("out");
    let p = write_config(&cfgs, "nagumo_perturb.json", &perturb);
    run("perturb", &p, "nagumo_perturb", 0)
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let subs = [
        "double_well",
        "nagumo",
        "nagumo_scan",
        "sech",
        "quadratic",
        "nagumo_check",
        "sech_check",
        "nagumo_perturb",
    ];
    let mut snaps = Vec::new();
    for k in 0..2 {
        let dir = root.path().join(format!("run{k}"));
        cli_script(&dir)?;
        let mut files = Vec::new();
        for s in subs {
            for (name, bytes) in snapshot(&dir.join(s)) {
                files.push((format!("{s}/{name}"), bytes));
            }
        }
        snaps.push(files);
    }
    let first = root.path().join("run0");
    let schemas_ok = snaps[0].iter().filter(|(n, _)| n.ends_with(".json")).all(|(n, _)| {
        let v = read_json(&first.join(n));
        let schema = if n.ends_with("solution.json") {
            "solution"
        } else if n.starts_with("double_well") {
            "equilibria"
        } else {
            "report"
        };
        validate(schema, &v).is_ok()
    });
    let n = snaps[0].len();
    check(
        snaps[0] == snaps[1] && n == 14 && schemas_ok,
        format!(
            "{n} files, runs {}, schemas {}",
            if snaps[0] == snaps[1] { "identical" } else { "differ" },
            if schemas_ok { "valid" } else { "violated" }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("Nagumo front speed and profile", nagumo_speed_and_profile),
        ("sech^2 pulse", sech_pulse),
        ("eigenvalue identities and dimension table", eigenvalue_identities),
        ("Hamiltonian conservation and dissipation", hamiltonian_conservation),
        ("Melnikov against finite differences", melnikov_vs_fd),
        ("transversality certificate", transversality),
        ("tangency in the anisotropic quadratic", tangency),
        ("standing-front obstruction", obstruction),
        ("scalar pulses are symmetric", scalar_pulses_are_symmetric),
        ("robustness under a small bump", robustness),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
