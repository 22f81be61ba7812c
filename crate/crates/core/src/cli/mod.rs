//! Command-line front end.

mod output;

pub use output::{aligned_table, csv_document, format_number, parse_csv, write_atomic};

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use crate::diffmethods::{cross_compare, cs_jacobian, fd_jacobian, sensitivity_matrix, Method};
use crate::error::{Error, Result};
use crate::models::{Fmain, Model, Scenario};
use crate::sensitivity::{forward_sensitivity_solve, JacobianProvider, OdeSystem};
use crate::solvers::{solve, SolverConfig, TimeSpec, ToleranceConfig};

#[derive(Debug, Parser)]
#[command(name = "odesens", version, about = "Solve ODEs and differentiate the solutions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the model and print the trajectory as CSV.
    Solve(ScenarioArgs),
    /// Integrate the augmented system and print states with sensitivities.
    Sens {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Source of the model Jacobians inside the augmented system.
        #[arg(long, value_enum, default_value_t = JacArg::Analytic)]
        jac: JacArg,
        /// Restrict output to these inputs, e.g. `p1,y02`.
        #[arg(long, value_delimiter = ',')]
        seed_columns: Option<Vec<String>>,
    },
    /// Compare analytic, AD, FD and complex-step sensitivities pairwise.
    Compare(ScenarioArgs),
    /// Gradient of the two-solve objective.
    Gradient {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = GradMode::Fm)]
        mode: GradMode,
    },
    /// Hessian of the two-solve objective.
    Hessian {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = HessMethod::For)]
        method: HessMethod,
    },
    /// Time each sensitivity method under both solvers.
    Bench(ScenarioArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum JacArg {
    Analytic,
    Ad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GradMode {
    Fm,
    Rm,
    Fd,
    Cs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum HessMethod {
    For,
    Fd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Euler,
    Rk23,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    #[default]
    Lv,
    Linear,
    Zero,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Lv => Model::LotkaVolterra,
            ModelArg::Linear => Model::LinearGrowth,
            ModelArg::Zero => Model::Zero,
        }
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Lv)]
    pub model: ModelArg,
    /// Scenario file with `key = value` lines.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Comma-separated parameters.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub params: Option<Vec<f64>>,
    /// Comma-separated initial state.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub y0: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    /// Number of evenly spaced output points; 0 lets the solver choose.
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub model: Model,
    pub y0: Vec<f64>,
    pub params: Vec<f64>,
    pub time: TimeSpec,
    pub solver: SolverConfig,
}

fn grid_of(time: &TimeSpec) -> (f64, f64, usize) {
    match time {
        TimeSpec::Span { t0, t_end } => (*t0, *t_end, 0),
        TimeSpec::Points(ts) => (ts[0], ts[ts.len() - 1], ts.len()),
    }
}

impl ScenarioArgs {
    /// Applies command-line overrides on top of the scenario file or model defaults.
    pub fn resolve(&self) -> Result<Run> {
        let model = Model::from(self.model);
        let mut run = match &self.scenario {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Io(format!("cannot read {}: {e}", path.display())))?;
                let s = Scenario::parse(&text)?;
                Run {
                    model,
                    y0: s.y0.to_vec(),
                    params: s.params.to_array().to_vec(),
                    time: s.time,
                    solver: s.solver,
                }
            }
            None => {
                let s = Scenario::default();
                let time = match model {
                    Model::LinearGrowth => TimeSpec::linspace(0.0, 1.0, 11)?,
                    _ => s.time,
                };
                Run {
                    model,
                    y0: model.default_y0(),
                    params: model.default_params(),
                    time,
                    solver: s.solver,
                }
            }
        };
        if self.scenario.is_some() && model == Model::LinearGrowth {
            return Err(Error::InvalidParameters(
                "scenario files describe the Lotka-Volterra model".into(),
            ));
        }
        if let Some(p) = &self.params {
            run.params = p.clone();
        }
        if let Some(y0) = &self.y0 {
            run.y0 = y0.clone();
        }
        if run.params.len() != model.param_dim() {
            return Err(Error::DimensionMismatch {
                what: "parameters",
                expected: model.param_dim(),
                got: run.params.len(),
            });
        }
        if run.y0.len() != model.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "initial state",
                expected: model.state_dim(),
                got: run.y0.len(),
            });
        }

        let (mut t0, mut t_end, mut n) = grid_of(&run.time);
        if self.t0.is_some() || self.t_end.is_some() || self.n_points.is_some() {
            t0 = self.t0.unwrap_or(t0);
            t_end = self.t_end.unwrap_or(t_end);
            n = self.n_points.unwrap_or(n);
            run.time = if n == 0 {
                TimeSpec::span(t0, t_end)?
            } else {
                TimeSpec::linspace(t0, t_end, n)?
            };
        }

        let kind = self.solver.unwrap_or(match run.solver {
            SolverConfig::Euler { .. } => SolverArg::Euler,
            SolverConfig::Rk23(_) => SolverArg::Rk23,
        });
        run.solver = match (kind, run.solver) {
            (SolverArg::Euler, SolverConfig::Euler { dt }) => SolverConfig::euler(self.dt.unwrap_or(dt)),
            (SolverArg::Euler, _) => SolverConfig::euler(self.dt.unwrap_or(0.1)),
            (SolverArg::Rk23, current) => {
                let base = match current {
                    SolverConfig::Rk23(tol) => tol,
                    SolverConfig::Euler { .. } => ToleranceConfig::default(),
                };
                SolverConfig::Rk23(ToleranceConfig {
                    rel_tol: self.rel_tol.unwrap_or(base.rel_tol),
                    abs_tol: self.abs_tol.unwrap_or(base.abs_tol),
                    ..base
                })
            }
        };
        match run.solver {
            SolverConfig::Euler { dt } if !(dt > 0.0 && dt.is_finite()) => return Err(Error::InvalidStep(dt)),
            SolverConfig::Rk23(tol) => tol.validate()?,
            _ => {}
        }
        Ok(run)
    }
}

fn state_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("Y{i}")).collect()
}

fn input_names(m: usize, k: usize) -> Vec<String> {
    (1..=m)
        .map(|j| format!("y0{j}"))
        .chain((1..=k).map(|j| format!("p{j}")))
        .collect()
}

/// Sensitivity column names in composite-state order.
pub fn sens_header(m: usize, k: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(state_names(m));
    for j in 1..=k {
        h.extend((1..=m).map(|i| format!("dY{i}dp{j}")));
    }
    for j in 1..=m {
        h.extend((1..=m).map(|i| format!("dY{i}dy0{j}")));
    }
    h
}

fn cmd_solve(args: &ScenarioArgs) -> Result<String> {
    let run = args.resolve()?;
    let sys = run.model;
    let p = &run.params;
    let traj = solve(
        |t, y: &[f64], dy: &mut [f64]| sys.rhs(t, y, p, dy),
        &run.time,
        &run.y0,
        &run.solver,
    )?;
    let mut header = vec!["t".to_string()];
    header.extend(state_names(traj.dim()));
    let rows = (0..traj.len()).map(|i| {
        let mut r = vec![traj.times()[i]];
        r.extend_from_slice(traj.row(i));
        r
    });
    Ok(csv_document(&header, rows))
}

fn cmd_sens(args: &ScenarioArgs, jac: JacArg, seed_columns: Option<&[String]>) -> Result<String> {
    let run = args.resolve()?;
    let provider = match jac {
        JacArg::Analytic => JacobianProvider::Analytic,
        JacArg::Ad => JacobianProvider::DualAd,
    };
    let (m, k) = (run.model.state_dim(), run.model.param_dim());
    let bundle = forward_sensitivity_solve(&run.model, provider, &run.params, &run.y0, &run.time, &run.solver)?;

    // p-columns first, then y0-columns, matching the composite layout
    let all: Vec<String> = (1..=k)
        .map(|j| format!("p{j}"))
        .chain((1..=m).map(|j| format!("y0{j}")))
        .collect();
    let keep: Vec<bool> = match seed_columns {
        None => vec![true; k + m],
        Some(sel) => {
            if let Some(bad) = sel.iter().find(|s| !all.contains(s)) {
                return Err(Error::InvalidParameters(format!(
                    "unknown seed column '{bad}' (expected one of {})",
                    all.join(", ")
                )));
            }
            all.iter().map(|name| sel.contains(name)).collect()
        }
    };

    let full = sens_header(m, k);
    let mut header: Vec<String> = full[..1 + m].to_vec();
    for (block, &on) in keep.iter().enumerate() {
        if on {
            let start = 1 + m + block * m;
            header.extend_from_slice(&full[start..start + m]);
        }
    }
    let rows = (0..bundle.len()).map(|i| {
        let composite = bundle.composite_row(i);
        let mut r = vec![bundle.times()[i]];
        r.extend_from_slice(&composite[..m]);
        for (block, &on) in keep.iter().enumerate() {
            if on {
                let start = m + block * m;
                r.extend_from_slice(&composite[start..start + m]);
            }
        }
        r
    });
    Ok(csv_document(&header, rows))
}

fn cmd_compare(args: &ScenarioArgs) -> Result<(String, String)> {
    let run = args.resolve()?;
    let table = cross_compare(&run.model, &run.y0, &run.params, &run.time, &run.solver, &Method::ALL)?;
    let methods = table.methods();
    let mut header = vec![String::new()];
    header.extend(methods[1..].iter().map(|m| format!("vs. {m}")));
    let rows: Vec<Vec<String>> = methods[..methods.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut r = vec![a.to_string()];
            for (j, &b) in methods.iter().enumerate().skip(1) {
                r.push(if j > i {
                    format!("{:.6e}", table.get(a, b).unwrap_or(f64::NAN))
                } else {
                    String::new()
                });
            }
            r
        })
        .collect();
    let text = aligned_table(&header, &rows);
    let mut csv = output::csv_line(["method_a", "method_b", "relative_error"]);
    for (a, b, e) in table.entries() {
        csv.push_str(&output::csv_line([a.to_string(), b.to_string(), format_number(e)]));
    }
    Ok((text, csv))
}

fn labelled_vector(names: &[String], values: &[f64]) -> String {
    let mut out = output::csv_line(["input", "derivative"]);
    for (n, v) in names.iter().zip(values) {
        out.push_str(&output::csv_line([n.clone(), format_number(*v)]));
    }
    out
}

fn cmd_gradient(args: &ScenarioArgs, mode: GradMode) -> Result<String> {
    let run = args.resolve()?;
    let m = run.model.state_dim();
    let f = Fmain::new(&run.model, run.time.clone(), run.solver)?;
    let x: Vec<f64> = run.y0.iter().chain(&run.params).copied().collect();
    let grad = match mode {
        GradMode::Fm => f.gradient_forward(&run.y0, &run.params)?,
        GradMode::Rm => f.gradient_reverse(&run.y0, &run.params)?,
        GradMode::Fd => fd_jacobian(|x| Ok(vec![f.objective_at(x)?]), &x)?
            .row(0)
            .iter()
            .copied()
            .collect(),
        GradMode::Cs => cs_jacobian(|z: &[Complex64]| Ok(vec![f.objective_at(z)?]), &x)?
            .row(0)
            .iter()
            .copied()
            .collect(),
    };
    Ok(labelled_vector(&input_names(m, run.model.param_dim()), &grad))
}

fn cmd_hessian(args: &ScenarioArgs, method: HessMethod) -> Result<String> {
    let run = args.resolve()?;
    let m = run.model.state_dim();
    let f = Fmain::new(&run.model, run.time.clone(), run.solver)?;
    let h = match method {
        HessMethod::For => f.hessian(&run.y0, &run.params)?,
        HessMethod::Fd => {
            let x: Vec<f64> = run.y0.iter().chain(&run.params).copied().collect();
            fd_jacobian(|x| f.gradient_reverse(&x[..m], &x[m..]), &x)?
        }
    };
    let names = input_names(m, run.model.param_dim());
    let mut out = output::csv_line(std::iter::once("input".to_string()).chain(names.iter().cloned()));
    for (i, name) in names.iter().enumerate() {
        let row: Vec<String> = std::iter::once(name.clone())
            .chain((0..h.ncols()).map(|j| format_number(h[(i, j)])))
            .collect();
        out.push_str(&output::csv_line(row));
    }
    Ok(out)
}

fn cmd_bench(args: &ScenarioArgs) -> Result<(String, String)> {
    let run = args.resolve()?;
    let euler = match run.solver {
        SolverConfig::Euler { .. } => run.solver,
        SolverConfig::Rk23(_) => SolverConfig::euler(0.1),
    };
    let rk23 = match run.solver {
        SolverConfig::Rk23(_) => run.solver,
        SolverConfig::Euler { .. } => SolverConfig::rk23(),
    };
    let mut header = vec!["solver".to_string()];
    header.extend(Method::ALL.iter().map(|m| m.to_string()));
    let mut rows = Vec::new();
    for (name, solver) in [("euler", euler), ("rk23", rk23)] {
        let mut r = vec![name.to_string()];
        for method in Method::ALL {
            let start = Instant::now();
            sensitivity_matrix(method, &run.model, &run.y0, &run.params, &run.time, &solver)?;
            r.push(format!("{:.6}", start.elapsed().as_secs_f64()));
        }
        rows.push(r);
    }
    let text = aligned_table(&header, &rows);
    let mut csv = output::csv_line(&header);
    for r in &rows {
        csv.push_str(&output::csv_line(r));
    }
    Ok((text, csv))
}

/// Executes one command. Tables go to stdout; CSV goes to `--output` or stdout.
pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => output::emit(a.output.as_deref(), &cmd_solve(a)?),
        Command::Sens {
            scenario,
            jac,
            seed_columns,
        } => output::emit(
            scenario.output.as_deref(),
            &cmd_sens(scenario, *jac, seed_columns.as_deref())?,
        ),
        Command::Compare(a) => tabular(a, cmd_compare(a)?),
        Command::Gradient { scenario, mode } => {
            output::emit(scenario.output.as_deref(), &cmd_gradient(scenario, *mode)?)
        }
        Command::Hessian { scenario, method } => {
            output::emit(scenario.output.as_deref(), &cmd_hessian(scenario, *method)?)
        }
        Command::Bench(a) => tabular(a, cmd_bench(a)?),
    }
}

fn tabular(args: &ScenarioArgs, (text, csv): (String, String)) -> Result<()> {
    match &args.output {
        Some(path) => {
            write_atomic(path, &csv)?;
            output::emit(None, &text)
        }
        None => output::emit(None, &format!("{text}\n{csv}")),
    }
}
