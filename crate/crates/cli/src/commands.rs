use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::{json, Map, Value};
use wavefront::diagnostics::{
    elementarity_symmetric, level_set_transversality_symmetric, tangency_check, transversality_asymmetric, transversality_front, End, TangencyOptions,
};
use wavefront::dynamics::{dissipation_residual, hamiltonian_state};
use wavefront::perturbation::{default_ladder, robustness_experiment};
use wavefront::potential::find_critical_points;
use wavefront::shooting::{
    scan_speed, solve_asymmetric_pulse, solve_front, solve_symmetric_pulse, AsymmetricSeed, FrontGuess,
};
use wavefront::spectral::spectrum_at;
use wavefront::{ConnectionKind, ConnectionSolution, CriticalPoint, FrontProblem, ShootingError, SolutionRecord};

use crate::config::{resolve_potential, PulseMode, ResolvedPotential, RunConfig, Tolerances, SCHEMA_VERSION};
use crate::error::CliError;
use crate::output::{csv_table, envelope, Output};

/// Samples used when `scan` has no explicit grid.
const DEFAULT_GRID_SAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Equilibria,
    Front,
    Pulse,
    Scan,
    Check,
    Perturb,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Equilibria => "equilibria",
            Self::Front => "front",
            Self::Pulse => "pulse",
            Self::Scan => "scan",
            Self::Check => "check",
            Self::Perturb => "perturb",
        }
    }
}

pub struct Context {
    pub command: Command,
    pub config: RunConfig,
    /// Directory of the config file.
    pub base: PathBuf,
    /// Config tolerances with flags applied.
    pub tolerances: Tolerances,
    /// Flag overrides alone, applied last to tolerances read from a
    /// solution file.
    pub flags: Tolerances,
    pub out: Output,
}

/// `solution.json` as written by `front` and `pulse`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionFile {
    schema: u32,
    command: String,
    status: String,
    #[allow(dead_code)]
    metadata: Value,
    potential: Value,
    tolerances: Tolerances,
    solution: SolutionRecord,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymmetricSeed {
    b_u: Vec<f64>,
}

pub fn run(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    match ctx.command {
        Command::Equilibria => equilibria(ctx),
        Command::Front => front(ctx),
        Command::Pulse => pulse(ctx),
        Command::Scan => scan(ctx),
        Command::Check => check(ctx),
        Command::Perturb => perturb(ctx),
    }
}

impl Context {
    fn name(&self) -> &'static str {
        self.command.name()
    }

    fn potential(&self) -> Result<ResolvedPotential, CliError> {
        let v = self.config.require(self.config.potential.as_ref(), "potential", self.name())?;
        resolve_potential(v, &self.base)
    }

    fn equilibria(&self) -> Result<(ResolvedPotential, Vec<CriticalPoint>), CliError> {
        let pot = self.potential()?;
        let search = self.config.require(self.config.search.as_ref(), "search", self.name())?;
        let found = find_critical_points(&pot.model, &search.search_box(), search.grid_density)?;
        Ok((pot, found.points))
    }

    fn pick(&self, points: &[CriticalPoint], index: Option<usize>, name: &str) -> Result<CriticalPoint, CliError> {
        let i = *self.config.require(index.as_ref(), name, self.name())?;
        points.get(i).cloned().ok_or_else(|| {
            CliError::config(format!("{name} = {i} but only {} critical points were found", points.len()))
        })
    }

    fn speeds(&self) -> Result<(f64, f64), CliError> {
        let [lo, hi] = *self.config.require(self.config.speeds.as_ref(), "speeds", self.name())?;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi > lo) {
            return Err(CliError::config(format!("speeds [{lo}, {hi}] must satisfy 0 < lo < hi")));
        }
        Ok((lo, hi))
    }

    fn front_problem(&self) -> Result<(ResolvedPotential, FrontProblem, [usize; 2]), CliError> {
        let (pot, points) = self.equilibria()?;
        let dep = self.pick(&points, self.config.departure, "departure")?;
        let arr = self.pick(&points, self.config.arrival, "arrival")?;
        let idx = [self.config.departure.unwrap_or(0), self.config.arrival.unwrap_or(0)];
        let problem = FrontProblem::new(pot.model.clone(), dep, arr, self.speeds()?)?;
        Ok((pot, problem, idx))
    }

    /// Reads `solution`, rebuilding the connection under the recorded (or
    /// overriding) potential.
    fn load_solution(&self) -> Result<(ResolvedPotential, ConnectionSolution, Tolerances), CliError> {
        let rel = self.config.require(self.config.solution.as_ref(), "solution", self.name())?;
        let path = self.base.join(rel);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::config(format!("cannot read solution {}: {e}", path.display())))?;
        let file: SolutionFile = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("solution {}: {e}", path.display())))?;
        if file.schema != SCHEMA_VERSION || file.status != "ok" || !matches!(file.command.as_str(), "front" | "pulse") {
            return Err(CliError::config(format!(
                "{} is not a solution written by `front` or `pulse`",
                path.display()
            )));
        }
        let pot = match &self.config.potential {
            Some(v) => resolve_potential(v, &self.base)?,
            None => resolve_potential(&file.potential, solution_dir(&path))?,
        };
        let tol = file
            .tolerances
            .overridden_by(self.config.tolerances)
            .overridden_by(self.flags);
        let sol = ConnectionSolution::rebuild(&pot.model, &file.solution, &tol.shooting())?;
        Ok((pot, sol, tol))
    }
}

fn solution_dir(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn point_summary(index: usize, p: &CriticalPoint) -> Value {
    json!({ "index": index, "e": p.e, "value": p.value, "morse_index": p.morse_index })
}

fn equilibria(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let pot = ctx.potential()?;
    let search = ctx.config.require(ctx.config.search.as_ref(), "search", ctx.name())?;
    let found = find_critical_points(&pot.model, &search.search_box(), search.grid_density)?;
    let speeds = ctx.config.speeds_report.clone().unwrap_or_else(|| vec![0.0]);
    if let Some(c) = speeds.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(CliError::config(format!("speeds_report entries must be finite and >= 0, got {c}")));
    }
    let list: Vec<Value> = found
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let spectra: Vec<Value> = speeds
                .iter()
                .map(|&c| {
                    let mut v = serde_json::to_value(spectrum_at(&pot.model, p, c)).expect("spectra serialize");
                    if let Value::Object(m) = &mut v {
                        m.remove("equilibrium");
                    }
                    v
                })
                .collect();
            json!({ "index": i, "point": p, "spectra": spectra })
        })
        .collect();
    let body = json!({
        "potential": pot.config,
        "equilibria": list,
        "degenerate": found.degenerate,
    });
    Ok(vec![ctx.out.write_json("report.json", &envelope(ctx.name(), "ok", body))?])
}

fn write_connection(
    ctx: &Context,
    pot: &ResolvedPotential,
    sol: &ConnectionSolution,
    mut summary: Map<String, Value>,
) -> Result<Vec<PathBuf>, CliError> {
    let profile = ctx.out.write("profile.csv", sol.trajectory.to_csv().as_bytes())?;
    let solution = envelope(
        ctx.name(),
        "ok",
        json!({
            "potential": pot.config,
            "tolerances": ctx.tolerances,
            "solution": sol.record(),
        }),
    );
    let solution = ctx.out.write_json("solution.json", &solution)?;
    summary.insert("kind".into(), json!(sol.kind));
    summary.insert("speed".into(), json!(sol.speed));
    summary.insert("transit".into(), json!(sol.transit));
    summary.insert("mismatch".into(), json!(sol.mismatch));
    summary.insert("iterations".into(), json!(sol.iterations));
    summary.insert("profile_points".into(), json!(sol.trajectory.len()));
    let report = ctx.out.write_json("report.json", &envelope(ctx.name(), "ok", Value::Object(summary)))?;
    Ok(vec![profile, solution, report])
}

fn front(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let (pot, problem, [i, j]) = ctx.front_problem()?;
    let seed: Option<FrontGuess> = ctx.config.seed_as()?;
    let sol = solve_front(&problem, seed, &ctx.tolerances.shooting())?;
    let mut s = Map::new();
    s.insert("departure".into(), point_summary(i, &problem.departure));
    s.insert("arrival".into(), point_summary(j, &problem.arrival));
    s.insert("dissipation_residual".into(), json!(dissipation_residual(&sol.trajectory)));
    write_connection(ctx, &pot, &sol, s)
}

fn pulse(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let (pot, points) = ctx.equilibria()?;
    let e = ctx.pick(&points, ctx.config.equilibrium, "equilibrium")?;
    let opts = ctx.tolerances.shooting();
    let sol = match ctx.config.mode.unwrap_or_default() {
        PulseMode::Symmetric => {
            let seed: Option<SymmetricSeed> = ctx.config.seed_as()?;
            solve_symmetric_pulse(&pot.model, &e, seed.map(|s| s.b_u), &opts)?
        }
        PulseMode::Asymmetric => {
            let seed: Option<AsymmetricSeed> = ctx.config.seed_as()?;
            solve_asymmetric_pulse(&pot.model, &e, seed, &opts)?
        }
    };
    let level = -pot.model.value(&e.e);
    let drift = sol
        .trajectory
        .states()
        .iter()
        .map(|y| (hamiltonian_state(&pot.model, y) - level).abs())
        .fold(0.0, f64::max);
    let mut s = Map::new();
    s.insert("equilibrium".into(), point_summary(ctx.config.equilibrium.unwrap_or(0), &e));
    s.insert("turning_time".into(), json!(sol.turning_time));
    s.insert("symmetric".into(), json!(sol.symmetric));
    s.insert("symmetry_distance".into(), json!(sol.symmetry_distance));
    s.insert("energy_drift".into(), json!(drift));
    write_connection(ctx, &pot, &sol, s)
}

fn scan(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let (_, problem, [i, j]) = ctx.front_problem()?;
    let (lo, hi) = problem.speeds;
    let grid = match &ctx.config.grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
                return Err(CliError::config("grid speeds must be finite and positive"));
            }
            g.clone()
        }
        None => {
            let n = ctx.config.grid_samples.unwrap_or(DEFAULT_GRID_SAMPLES);
            if n < 2 {
                return Err(CliError::config("grid_samples must be at least 2"));
            }
            (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
        }
    };
    let samples = scan_speed(&problem, &grid, &ctx.tolerances.shooting());
    let rows: Vec<Vec<Option<f64>>> = samples.iter().map(|s| vec![Some(s.speed), s.indicator]).collect();
    let csv = ctx.out.write("scan.csv", csv_table(&["speed", "indicator"], &rows).as_bytes())?;
    let brackets: Vec<[f64; 2]> = samples
        .windows(2)
        .filter_map(|w| match (w[0].indicator, w[1].indicator) {
            (Some(a), Some(b)) if a.signum() != b.signum() => Some([w[0].speed, w[1].speed]),
            _ => None,
        })
        .collect();
    if brackets.is_empty() {
        let (lo, hi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(*c), b.max(*c)));
        return Err(ShootingError::NoBracket { lo, hi }.into());
    }
    let body = json!({
        "departure": point_summary(i, &problem.departure),
        "arrival": point_summary(j, &problem.arrival),
        "samples": samples,
        "brackets": brackets,
    });
    let report = ctx.out.write_json("report.json", &envelope(ctx.name(), "ok", body))?;
    Ok(vec![csv, report])
}

fn check(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let (_, sol, tol) = ctx.load_solution()?;
    let dopts = tol.diagnostics();
    let mut reports = Map::new();
    let verdict = match sol.kind {
        ConnectionKind::Front => {
            let r = transversality_front(&sol, &dopts)?;
            let v = r.verdict;
            reports.insert("transversality".into(), json!(r));
            v
        }
        ConnectionKind::SymmetricPulse => {
            let r = elementarity_symmetric(&sol, &dopts)?;
            let v = r.verdict;
            reports.insert("elementarity".into(), json!(r));
            reports.insert("level_set".into(), json!(level_set_transversality_symmetric(&sol, &dopts)?));
            v
        }
        ConnectionKind::AsymmetricPulse => {
            let r = transversality_asymmetric(&sol, &dopts)?;
            let v = r.verdict;
            reports.insert("transversality".into(), json!(r));
            v
        }
    };
    let tangency: Vec<Value> = [End::Left, End::Right]
        .into_iter()
        .map(|end| match tangency_check(&sol, end, &TangencyOptions::default()) {
            Ok(r) => json!(r),
            Err(e) => json!({ "end": end, "verdict": "unavailable", "reason": e.to_string() }),
        })
        .collect();
    let body = json!({
        "kind": sol.kind,
        "verdict": verdict,
        "rebuilt_mismatch": sol.mismatch,
        "reports": reports,
        "tangency": tangency,
    });
    Ok(vec![ctx.out.write_json("report.json", &envelope(ctx.name(), "ok", body))?])
}

fn perturb(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let pert = ctx.config.require(ctx.config.perturbation.as_ref(), "perturbation", ctx.name())?;
    let amps = pert.amplitudes.clone().unwrap_or_else(default_ladder);
    if amps.is_empty() || amps.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(CliError::config("perturbation.amplitudes must be finite and >= 0"));
    }
    let (_, sol, tol) = ctx.load_solution()?;
    let rep = robustness_experiment(&sol, &pert.bump, &amps, &tol.diagnostics())?;
    let rows: Vec<Vec<Option<f64>>> = rep
        .rungs
        .iter()
        .map(|r| {
            vec![
                Some(r.amplitude),
                Some(if r.converged { 1.0 } else { 0.0 }),
                r.speed,
                r.speed_drift,
                Some(rep.predicted_slope * r.amplitude),
                r.profile_drift,
                r.mismatch,
            ]
        })
        .collect();
    let header = [
        "amplitude",
        "converged",
        "speed",
        "speed_drift",
        "predicted_drift",
        "profile_drift",
        "mismatch",
    ];
    let csv = ctx.out.write("ladder.csv", csv_table(&header, &rows).as_bytes())?;
    let body = json!({ "bump": pert.bump, "robustness": rep });
    let report = ctx.out.write_json("report.json", &envelope(ctx.name(), "ok", body))?;
    Ok(vec![csv, report])
}
