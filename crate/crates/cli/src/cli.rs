//! Flag parsing and subcommand dispatch.
//!
//! Exit contract: 0 on success, 1 when a requested computation fails (with a
//! JSON error document on standard error), 2 for usage and input-validation
//! errors. Identical inputs and flags produce byte-identical outputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gapdyn_core::discrete::{simulate_discrete, DiscreteError, Schedule};
use gapdyn_core::dynamics::{
    closed_form_state, epochs_to_tolerance, integrate_ode, DynamicsError, DynamicsParams,
    InitialState,
};
use gapdyn_core::fit::{fit_exponential, fit_gap_linear, recover_params, ExpFit, FitStatus};
use gapdyn_core::select::{
    pass_at_k, select_bon, solver_uncertainty, verifier_uncertainty, CandidateSet, SelectError,
};
use gapdyn_core::{Trajectory, TrajectoryPoint};

use crate::error::{fit_error, params_usage_error, select_error, CliError};
use crate::noise::perturb_trajectory;
use crate::plot::{emit_plot, PlotError, PlotSeries};
use crate::report::{
    precise_map, write_metrics, write_report, BudgetSection, ChannelFit, FitsSection,
    GapLinearSection, InitEcho, InputSection, LimitsSection, MetricsDocument, MetricsInput,
    ParamsEcho, PassAtKRow, PromptOutcome, RecoveredSection, Report, ReportError, ScheduleRow,
    SchedulesSection, SelectionSection,
};
use crate::tabular::{
    read_candidate_sets, read_correctness_matrix, read_trajectory, write_step_records,
    write_trajectory, TabularError,
};

#[derive(Debug, Parser)]
#[command(
    name = "gapdyn",
    version,
    about = "Solver-verifier gap dynamics: simulate, fit, budget, schedule, and score"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory receiving every generated file.
    #[arg(long, global = true, default_value = ".")]
    pub output: PathBuf,
    /// Also emit an SVG plot (plus its sibling points CSV).
    #[arg(long, global = true)]
    pub plot: bool,
    /// Seed for randomized options such as --noise.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Suppress the one-line summaries on standard output.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a trajectory CSV from the continuous or discrete model.
    Simulate(SimulateArgs),
    /// Fit decaying exponentials to a trajectory and recover k=1 parameters.
    Fit(FitArgs),
    /// Compare verification-allocation schedules over a shared horizon.
    Schedules(ScheduleCmdArgs),
    /// Best-of-n selection metrics and pass@k from candidate files.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMode {
    /// Exact closed-form states at integer epochs.
    ClosedForm,
    /// Fixed-step RK4 integration sampled at integer epochs.
    Ode,
    /// Per-epoch discrete map, optionally with a verification schedule.
    Discrete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleKind {
    /// No verification effort (self-improvement baseline).
    None,
    /// Whole budget on the first epoch.
    Early,
    /// Budget spread evenly across the horizon.
    Uniform,
    /// Whole budget on one late epoch (see --late-epoch).
    Late,
    /// Explicit per-epoch allocation from --eta.
    Custom,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = SimMode::ClosedForm)]
    pub mode: SimMode,
    /// Solver learning rate (must exceed --beta).
    #[arg(long)]
    pub alpha: f64,
    /// Verifier learning rate (nonnegative).
    #[arg(long)]
    pub beta: f64,
    /// Energy slope with respect to the gap.
    #[arg(long)]
    pub k: f64,
    /// Energy offset; the gap settles at b/k.
    #[arg(long)]
    pub b: f64,
    /// Verifier boost strength of the discrete map.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Initial solver uncertainty.
    #[arg(long)]
    pub us0: f64,
    /// Initial verifier uncertainty.
    #[arg(long)]
    pub uv0: f64,
    /// Horizon in epochs; rows are written for t = 0..=T.
    #[arg(long = "T", default_value_t = 10)]
    pub horizon: u32,
    /// RK4 step size (ode mode).
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Verification allocation (discrete mode).
    #[arg(long, value_enum, default_value_t = ScheduleKind::None)]
    pub schedule: ScheduleKind,
    /// Total verification budget for early/uniform/late schedules.
    #[arg(long)]
    pub total: Option<f64>,
    /// Epoch receiving the whole budget under --schedule late.
    #[arg(long, default_value_t = 8)]
    pub late_epoch: usize,
    /// Comma-separated per-epoch allocation for --schedule custom.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub eta: Option<Vec<f64>>,
    /// Uniform measurement noise of this spread, seeded by --seed.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct FitArgs {
    /// Trajectory CSV with header epoch,u_s,u_v.
    #[arg(long)]
    pub input: PathBuf,
    /// Gap tolerance; adds the epoch-budget section to the report.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Allowed relative disagreement between the two fitted rates.
    #[arg(long, default_value_t = 0.1)]
    pub rate_tolerance: f64,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct ScheduleCmdArgs {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub beta: f64,
    #[arg(long)]
    pub k: f64,
    #[arg(long)]
    pub b: f64,
    /// Verifier boost strength; at 0 every schedule collapses onto the baseline.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long)]
    pub us0: f64,
    #[arg(long)]
    pub uv0: f64,
    /// Shared horizon of the compared schedules.
    #[arg(long = "T", default_value_t = 10)]
    pub horizon: usize,
    /// Total verification budget for the named schedules.
    #[arg(long)]
    pub total: Option<f64>,
    /// Epoch receiving the whole budget under the late schedule.
    #[arg(long, default_value_t = 8)]
    pub late_epoch: usize,
    /// Adds a custom schedule with this comma-separated allocation.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub eta: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct MetricsArgs {
    /// Candidate CSV with header prompt_id,nll,length,score.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Verifier score threshold for best-of-n selection.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Headerless 0/1 matrix of per-prompt response correctness.
    #[arg(long)]
    pub correctness: Option<PathBuf>,
    /// Comma-separated k values for pass@k (default: 1..=row width).
    #[arg(long = "K", value_delimiter = ',', num_args = 1..)]
    pub k_values: Option<Vec<usize>>,
}

/// Input-file parse failures are usage errors: the operator handed us a bad
/// path or a malformed file. (Write failures stay computation errors.)
fn input_usage_error(e: TabularError) -> CliError {
    CliError::Usage(e.to_string())
}

fn schedule_usage_error(e: DiscreteError) -> CliError {
    let flags = match e {
        DiscreteError::EmptyHorizon => "--T",
        DiscreteError::LateEpochOutOfRange { .. } => "--late-epoch",
        DiscreteError::TotalOutOfRange { .. } | DiscreteError::TotalMismatch { .. } => "--total",
        DiscreteError::EtaOutOfRange { .. }
        | DiscreteError::EtaSumTooLarge { .. }
        | DiscreteError::InvalidEta { .. } => "--eta",
        _ => "--gamma/--eta",
    };
    CliError::Usage(format!("{flags}: {e}"))
}

fn report_error(e: ReportError) -> CliError {
    match e {
        ReportError::Io { path, source } => CliError::Computation {
            kind: "io",
            message: format!("{}: {source}", path.display()),
        },
        ReportError::NonFinite { .. } => CliError::Computation {
            kind: "non_finite",
            message: e.to_string(),
        },
    }
}

fn plot_error(e: PlotError) -> CliError {
    match e {
        PlotError::Io { path, source } => CliError::Computation {
            kind: "io",
            message: format!("{}: {source}", path.display()),
        },
        other => CliError::Computation {
            kind: "plot",
            message: other.to_string(),
        },
    }
}

/// Write failures carry the path; parse-side failures cannot occur here.
fn output_error(e: TabularError) -> CliError {
    match e {
        TabularError::Io { path, source } => CliError::Computation {
            kind: "io",
            message: format!("{}: {source}", path.display()),
        },
        other => CliError::Computation {
            kind: "io",
            message: other.to_string(),
        },
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    std::fs::create_dir_all(&cli.output).map_err(|e| CliError::Computation {
        kind: "io",
        message: format!("{}: {e}", cli.output.display()),
    })?;
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(cli, args),
        Command::Fit(args) => cmd_fit(cli, args),
        Command::Schedules(args) => cmd_schedules(cli, args),
        Command::Metrics(args) => cmd_metrics(cli, args),
    }
}

fn say(cli: &Cli, line: impl AsRef<str>) {
    if !cli.quiet {
        println!("{}", line.as_ref());
    }
}

fn build_params(
    alpha: f64,
    beta: f64,
    k: f64,
    b: f64,
    gamma: f64,
) -> Result<DynamicsParams, CliError> {
    DynamicsParams::new(alpha, beta, k, b)
        .and_then(|p| p.with_gamma(gamma))
        .map_err(params_usage_error)
}

/// Builds the requested allocation; `custom` takes its length from --eta but
/// must agree with the stated horizon so every mode sees the same T.
fn build_schedule(
    kind: ScheduleKind,
    horizon: usize,
    total: Option<f64>,
    late_epoch: usize,
    eta: &Option<Vec<f64>>,
) -> Result<Schedule, CliError> {
    if eta.is_some() && kind != ScheduleKind::Custom {
        return Err(CliError::usage("--eta requires --schedule custom"));
    }
    let named_total = total.unwrap_or(1.0);
    match kind {
        ScheduleKind::None => Schedule::self_improvement(horizon),
        ScheduleKind::Early => Schedule::early(horizon, named_total),
        ScheduleKind::Uniform => Schedule::uniform(horizon, named_total),
        ScheduleKind::Late => Schedule::late(horizon, named_total, late_epoch),
        ScheduleKind::Custom => {
            let Some(eta) = eta.as_ref() else {
                return Err(CliError::usage("--schedule custom requires --eta"));
            };
            if eta.len() != horizon {
                return Err(CliError::usage(format!(
                    "--eta: custom schedule needs exactly T values, got {} with --T {horizon}",
                    eta.len()
                )));
            }
            let custom_total = total.unwrap_or_else(|| eta.iter().sum());
            Schedule::custom(eta.clone(), custom_total)
        }
    }
    .map_err(schedule_usage_error)
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), CliError> {
    let params = build_params(args.alpha, args.beta, args.k, args.b, args.gamma)?;
    let init = InitialState::new(args.us0, args.uv0).map_err(params_usage_error)?;
    if let Some(spread) = args.noise {
        if !(spread.is_finite() && spread >= 0.0) {
            return Err(CliError::usage(format!(
                "--noise must be finite and nonnegative, got {spread}"
            )));
        }
        if args.mode == SimMode::Discrete {
            return Err(CliError::usage(
                "--noise applies to closed-form and ode trajectories, not --mode discrete",
            ));
        }
    }

    let horizon = args.horizon;
    let (mut points, label) = match args.mode {
        SimMode::ClosedForm => {
            let mut points = Vec::with_capacity(horizon as usize + 1);
            for t in 0..=horizon {
                let s = closed_form_state(&params, &init, f64::from(t))
                    .map_err(params_usage_error)?;
                points.push(TrajectoryPoint {
                    t: f64::from(t),
                    u_s: s.u_s,
                    u_v: s.u_v,
                });
            }
            (points, "closed-form")
        }
        SimMode::Ode => {
            let dense = integrate_ode(&params, &init, f64::from(horizon), args.step)
                .map_err(params_usage_error)?;
            let points: Vec<TrajectoryPoint> = dense
                .points()
                .iter()
                .copied()
                .filter(|p| p.t.fract() == 0.0)
                .collect();
            (points, "rk4")
        }
        SimMode::Discrete => {
            let schedule = build_schedule(
                args.schedule,
                horizon as usize,
                args.total,
                args.late_epoch,
                &args.eta,
            )?;
            let run = simulate_discrete(&params, &init, &schedule).map_err(|e| {
                CliError::Computation {
                    kind: "schedule",
                    message: e.to_string(),
                }
            })?;
            if run.stability_warning {
                say(
                    cli,
                    format!(
                        "warning: unit-step factor 1-k*(alpha-beta) = {} does not contract; \
                         the discrete run may diverge from the continuous solution",
                        run.gap_step_factor
                    ),
                );
            }
            let steps_path = cli.output.join("trajectory.steps.csv");
            write_step_records(&steps_path, &run.records).map_err(output_error)?;
            say(
                cli,
                format!("wrote {} ({} steps)", steps_path.display(), run.records.len()),
            );
            let mut points = Vec::with_capacity(run.records.len() + 1);
            points.push(TrajectoryPoint {
                t: 0.0,
                u_s: init.u_s0,
                u_v: init.u_v0,
            });
            for r in &run.records {
                points.push(TrajectoryPoint {
                    t: r.epoch as f64,
                    u_s: r.post_u_s,
                    u_v: r.post_u_v,
                });
            }
            (points, "discrete")
        }
    };

    if let Some(spread) = args.noise {
        perturb_trajectory(&mut points, spread, cli.seed);
    }
    let trajectory = Trajectory::new(points, label).map_err(|e| CliError::Computation {
        kind: "internal",
        message: e.to_string(),
    })?;
    let path = cli.output.join("trajectory.csv");
    write_trajectory(&path, &trajectory).map_err(output_error)?;
    say(
        cli,
        format!(
            "wrote {} ({} points, {label})",
            path.display(),
            trajectory.len()
        ),
    );

    if cli.plot {
        let svg = cli.output.join("trajectory.svg");
        emit_plot(
            &svg,
            "capability trajectories",
            "epoch",
            "uncertainty",
            &[
                PlotSeries::line("u_s", trajectory.solver_series()),
                PlotSeries::line("u_v", trajectory.verifier_series()),
            ],
        )
        .map_err(plot_error)?;
        say(cli, format!("wrote {}", svg.display()));
    }
    Ok(())
}

/// Epoch budget from the recovered k=1 parameters, using the fitted curves'
/// own t=0 values as the initial state so the budget describes the fitted
/// trajectory rather than the raw first sample.
fn budget_from_fits(
    rec: &gapdyn_core::fit::RecoveredParams,
    fit_s: &ExpFit,
    fit_v: &ExpFit,
    epsilon: f64,
) -> Result<BudgetSection, CliError> {
    let budget_failed = |e: DynamicsError| CliError::Computation {
        kind: "budget",
        message: format!("epoch budget unavailable: {e}"),
    };
    let params = DynamicsParams::new(rec.alpha, rec.beta, 1.0, rec.b).map_err(budget_failed)?;
    let init = InitialState::new(
        fit_s.amplitude + fit_s.offset,
        fit_v.amplitude + fit_v.offset,
    )
    .map_err(budget_failed)?;
    let epochs = epochs_to_tolerance(&params, &init, epsilon).map_err(budget_failed)?;
    Ok(BudgetSection {
        epsilon,
        epochs,
        epochs_ceil: epochs.ceil() as u64,
        precise: precise_map(&[("epochs", epochs), ("epsilon", epsilon)]),
    })
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<(), CliError> {
    if let Some(eps) = args.epsilon {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(CliError::usage(format!(
                "--epsilon must be positive and finite, got {eps}"
            )));
        }
    }
    if !(args.rate_tolerance.is_finite() && args.rate_tolerance >= 0.0) {
        return Err(CliError::usage(format!(
            "--rate-tolerance must be finite and nonnegative, got {}",
            args.rate_tolerance
        )));
    }

    let trajectory = read_trajectory(&args.input).map_err(input_usage_error)?;
    let times: Vec<f64> = trajectory.points().iter().map(|p| p.t).collect();
    let u_s: Vec<f64> = trajectory.points().iter().map(|p| p.u_s).collect();
    let u_v: Vec<f64> = trajectory.points().iter().map(|p| p.u_v).collect();
    let gaps: Vec<f64> = trajectory.points().iter().map(|p| p.gap()).collect();

    let fit_s = fit_exponential(&times, &u_s).map_err(|e| fit_error("u_s", e))?;
    let fit_v = fit_exponential(&times, &u_v).map_err(|e| fit_error("u_v", e))?;

    let mut note: Option<String> = None;
    let gap_linear = match fit_gap_linear(&times, &gaps) {
        Ok(line) => Some(GapLinearSection {
            slope: line.slope,
            intercept: line.intercept,
            r_squared: line.r_squared,
            residual_norm: line.residual_norm,
            precise: precise_map(&[("intercept", line.intercept), ("slope", line.slope)]),
        }),
        Err(e) => {
            note = Some(format!("gap line omitted: {e}"));
            None
        }
    };

    let mut report = Report {
        budget: None,
        fits: None,
        input: Some(InputSection {
            path: Some(args.input.display().to_string()),
            label: Some(String::from(trajectory.label())),
            points: Some(trajectory.len()),
            params: None,
            init: None,
        }),
        limits: None,
        recovered_params: None,
        schedules: None,
    };
    let report_path = cli.output.join("report.json");

    let solver_flat = matches!(fit_s.status, FitStatus::Degenerate | FitStatus::NoDecay);
    if solver_flat {
        let mut flat_note = String::from(
            "solver channel shows no decay; recovered parameters, limits, and budget unavailable",
        );
        if let Some(extra) = &note {
            flat_note.push_str("; ");
            flat_note.push_str(extra);
        }
        report.fits = Some(FitsSection {
            u_s: ChannelFit::from_fit(&fit_s),
            u_v: ChannelFit::from_fit(&fit_v),
            gap_linear,
            note: Some(flat_note),
        });
        write_report(&report_path, &report).map_err(report_error)?;
        say(
            cli,
            format!(
                "wrote {} (solver channel flat; partial report)",
                report_path.display()
            ),
        );
        return Ok(());
    }

    report.fits = Some(FitsSection {
        u_s: ChannelFit::from_fit(&fit_s),
        u_v: ChannelFit::from_fit(&fit_v),
        gap_linear,
        note: note.clone(),
    });

    let rec = match recover_params(&fit_s, &fit_v, args.rate_tolerance) {
        Ok(rec) => rec,
        Err(e) => {
            // Leave the fits on disk for inspection, then fail loudly.
            if let Some(fits) = &mut report.fits {
                fits.note = Some(match note {
                    Some(extra) => format!("parameter recovery failed: {e}; {extra}"),
                    None => format!("parameter recovery failed: {e}"),
                });
            }
            write_report(&report_path, &report).map_err(report_error)?;
            return Err(fit_error("recovery", e));
        }
    };
    report.recovered_params = Some(RecoveredSection::from_recovered(&rec));
    report.limits = Some(LimitsSection {
        u_s_inf: fit_s.offset,
        u_v_inf: fit_v.offset,
        g_inf: rec.g_inf,
        precise: precise_map(&[
            ("g_inf", rec.g_inf),
            ("u_s_inf", fit_s.offset),
            ("u_v_inf", fit_v.offset),
        ]),
    });

    if let Some(eps) = args.epsilon {
        match budget_from_fits(&rec, &fit_s, &fit_v, eps) {
            Ok(section) => report.budget = Some(section),
            Err(e) => {
                write_report(&report_path, &report).map_err(report_error)?;
                return Err(e);
            }
        }
    }

    write_report(&report_path, &report).map_err(report_error)?;
    say(
        cli,
        format!(
            "wrote {} (u_s R^2={:.6}, u_v R^2={:.6}, recovered alpha={:.6} beta={:.6} b={:.6})",
            report_path.display(),
            fit_s.r_squared,
            fit_v.r_squared,
            rec.alpha,
            rec.beta,
            rec.b
        ),
    );
    if let Some(budget) = &report.budget {
        say(
            cli,
            format!(
                "epoch budget for epsilon={}: {:.4} (ceil {})",
                budget.epsilon, budget.epochs, budget.epochs_ceil
            ),
        );
    }

    if cli.plot {
        let svg = cli.output.join("fit.svg");
        let t0 = times[0];
        let t1 = times[times.len() - 1];
        let dense = |fit: &ExpFit| -> Vec<(f64, f64)> {
            (0..200)
                .map(|i| {
                    let t = t0 + (t1 - t0) * f64::from(i) / 199.0;
                    (t, fit.predict(t))
                })
                .collect()
        };
        emit_plot(
            &svg,
            "exponential fits",
            "epoch",
            "uncertainty",
            &[
                PlotSeries::scatter("observed u_s", trajectory.solver_series()),
                PlotSeries::scatter("observed u_v", trajectory.verifier_series()),
                PlotSeries::line("fitted u_s", dense(&fit_s)),
                PlotSeries::line("fitted u_v", dense(&fit_v)),
            ],
        )
        .map_err(plot_error)?;
        say(cli, format!("wrote {}", svg.display()));
    }
    Ok(())
}

fn cmd_schedules(cli: &Cli, args: &ScheduleCmdArgs) -> Result<(), CliError> {
    let params = build_params(args.alpha, args.beta, args.k, args.b, args.gamma)?;
    let init = InitialState::new(args.us0, args.uv0).map_err(params_usage_error)?;
    let total = args.total.unwrap_or(1.0);
    let horizon = args.horizon;

    let early = Schedule::early(horizon, total).map_err(schedule_usage_error)?;
    let uniform = Schedule::uniform(horizon, total).map_err(schedule_usage_error)?;
    let late = Schedule::late(horizon, total, args.late_epoch).map_err(schedule_usage_error)?;
    let custom = match &args.eta {
        Some(eta) => {
            if eta.len() != horizon {
                return Err(CliError::usage(format!(
                    "--eta: custom schedule needs exactly T values, got {} with --T {horizon}",
                    eta.len()
                )));
            }
            Some(Schedule::custom(eta.clone(), eta.iter().sum()).map_err(schedule_usage_error)?)
        }
        None => None,
    };
    let mut named: Vec<(&str, &Schedule)> =
        vec![("early", &early), ("uniform", &uniform), ("late", &late)];
    if let Some(custom) = &custom {
        named.push(("custom", custom));
    }

    let comparison = gapdyn_core::discrete::compare_schedules(&params, &init, &named).map_err(
        |e| CliError::Computation {
            kind: "schedule",
            message: e.to_string(),
        },
    )?;
    let stability_warning = (1.0 - params.decay_rate()).abs() >= 1.0;
    if stability_warning {
        say(
            cli,
            format!(
                "warning: unit-step factor 1-k*(alpha-beta) = {} does not contract; \
                 exact finals may diverge from the continuous solution",
                1.0 - params.decay_rate()
            ),
        );
    }

    let rows: Vec<ScheduleRow> = comparison
        .outcomes
        .iter()
        .map(|o| ScheduleRow {
            name: o.name.clone(),
            total_eta: o.total_eta,
            exact_u_s: o.exact_u_s,
            exact_u_v: o.exact_u_v,
            approx_u_s: o.approx_u_s,
            approx_u_v: o.approx_u_v,
            discrepancy: o.discrepancy,
            precise: precise_map(&[
                ("approx_u_s", o.approx_u_s),
                ("approx_u_v", o.approx_u_v),
                ("discrepancy", o.discrepancy),
                ("exact_u_s", o.exact_u_s),
                ("exact_u_v", o.exact_u_v),
            ]),
        })
        .collect();
    let report = Report {
        budget: None,
        fits: None,
        input: Some(InputSection {
            path: None,
            label: None,
            points: None,
            params: Some(ParamsEcho {
                alpha: args.alpha,
                beta: args.beta,
                k: args.k,
                b: args.b,
                gamma: args.gamma,
            }),
            init: Some(InitEcho {
                u_s0: args.us0,
                u_v0: args.uv0,
            }),
        }),
        limits: None,
        recovered_params: None,
        schedules: Some(SchedulesSection {
            horizon,
            baseline_u_s: comparison.baseline_u_s,
            baseline_u_v: comparison.baseline_u_v,
            spread_exact_u_s: comparison.spread_exact_u_s,
            stability_warning,
            rows,
            precise: precise_map(&[
                ("baseline_u_s", comparison.baseline_u_s),
                ("baseline_u_v", comparison.baseline_u_v),
                ("spread_exact_u_s", comparison.spread_exact_u_s),
            ]),
        }),
    };
    let path = cli.output.join("schedules.json");
    write_report(&path, &report).map_err(report_error)?;
    say(
        cli,
        format!(
            "wrote {} (spread_exact_u_s={:e}, baseline u_s={:.6})",
            path.display(),
            comparison.spread_exact_u_s,
            comparison.baseline_u_s
        ),
    );

    if cli.plot {
        let trace = |schedule: &Schedule| -> Result<Vec<(f64, f64)>, CliError> {
            let run = simulate_discrete(&params, &init, schedule).map_err(|e| {
                CliError::Computation {
                    kind: "schedule",
                    message: e.to_string(),
                }
            })?;
            let mut pts = Vec::with_capacity(run.records.len() + 1);
            pts.push((0.0, init.u_s0));
            for r in &run.records {
                pts.push((r.epoch as f64, r.post_u_s));
            }
            Ok(pts)
        };
        let baseline_schedule =
            Schedule::self_improvement(horizon).map_err(schedule_usage_error)?;
        let mut series = Vec::with_capacity(named.len() + 1);
        for (name, schedule) in &named {
            series.push(PlotSeries::line(*name, trace(schedule)?));
        }
        series.push(PlotSeries::line("baseline", trace(&baseline_schedule)?));
        let svg = cli.output.join("schedules.svg");
        emit_plot(
            &svg,
            "solver uncertainty by verification schedule",
            "epoch",
            "u_s",
            &series,
        )
        .map_err(plot_error)?;
        say(cli, format!("wrote {}", svg.display()));
    }
    Ok(())
}

fn cmd_metrics(cli: &Cli, args: &MetricsArgs) -> Result<(), CliError> {
    if args.candidates.is_none() && args.correctness.is_none() {
        return Err(CliError::usage(
            "provide --candidates and/or --correctness",
        ));
    }
    if args.k_values.is_some() && args.correctness.is_none() {
        return Err(CliError::usage("--K requires --correctness"));
    }
    if !args.sigma.is_finite() {
        return Err(CliError::usage(format!(
            "--sigma must be finite, got {}",
            args.sigma
        )));
    }

    let mut selection: Option<SelectionSection> = None;
    let mut all_prompts_failed: Option<CliError> = None;
    if let Some(path) = &args.candidates {
        let sets = read_candidate_sets(path).map_err(input_usage_error)?;
        let mut prompts = Vec::with_capacity(sets.len());
        let mut winners: Vec<CandidateSet> = Vec::new();
        let mut first_nlls: Vec<f64> = Vec::new();
        for set in &sets {
            match select_bon(set, args.sigma) {
                Ok(i) => {
                    prompts.push(PromptOutcome {
                        prompt_id: String::from(set.prompt_id()),
                        selected_index: Some(i),
                        selected_nll: Some(set.candidates()[i].nll()),
                        error: None,
                    });
                    // The solver-alone answer is the first sample; best-of-n
                    // re-ranks the same pool through the verifier.
                    first_nlls.push(set.candidates()[0].nll());
                    winners.push(set.clone());
                }
                Err(e @ SelectError::AllBelowThreshold { .. }) => {
                    prompts.push(PromptOutcome {
                        prompt_id: String::from(set.prompt_id()),
                        selected_index: None,
                        selected_nll: None,
                        error: Some(e.to_string()),
                    });
                }
                Err(e) => return Err(select_error(set.prompt_id(), e)),
            }
        }
        let evaluated = winners.len();
        let (solver, verifier, gap) = if evaluated > 0 {
            let solver = solver_uncertainty(&first_nlls)
                .map_err(|e| select_error("solver aggregate", e))?;
            let verifier = verifier_uncertainty(&winners, args.sigma)
                .map_err(|e| select_error("verifier aggregate", e))?;
            (Some(solver), Some(verifier), Some(solver - verifier))
        } else {
            all_prompts_failed = Some(CliError::Computation {
                kind: "all_below_threshold",
                message: format!(
                    "every candidate of every prompt scores below sigma={}",
                    args.sigma
                ),
            });
            (None, None, None)
        };
        let mut precise_entries: Vec<(&str, f64)> = Vec::new();
        if let Some(v) = gap {
            precise_entries.push(("capability_gap", v));
        }
        if let Some(v) = solver {
            precise_entries.push(("solver_uncertainty", v));
        }
        if let Some(v) = verifier {
            precise_entries.push(("verifier_uncertainty", v));
        }
        selection = Some(SelectionSection {
            prompts,
            evaluated_prompts: evaluated,
            solver_uncertainty: solver,
            verifier_uncertainty: verifier,
            capability_gap: gap,
            precise: precise_map(&precise_entries),
        });
    }

    let mut pass_rows: Option<Vec<PassAtKRow>> = None;
    let mut k_echo: Option<Vec<usize>> = None;
    if let Some(path) = &args.correctness {
        let matrix = read_correctness_matrix(path).map_err(input_usage_error)?;
        let ks: Vec<usize> = match &args.k_values {
            Some(ks) => ks.clone(),
            None => (1..=matrix.width()).collect(),
        };
        let mut rows = Vec::with_capacity(ks.len());
        for &k in &ks {
            let value = pass_at_k(&matrix, k).map_err(|e| select_error("pass@k", e))?;
            rows.push(PassAtKRow { k, value });
        }
        k_echo = Some(ks);
        pass_rows = Some(rows);
    }

    let doc = MetricsDocument {
        input: MetricsInput {
            candidates: args.candidates.as_ref().map(|p| p.display().to_string()),
            correctness: args.correctness.as_ref().map(|p| p.display().to_string()),
            sigma: args.sigma,
            k_values: k_echo,
        },
        selection,
        pass_at_k: pass_rows,
    };
    let path = cli.output.join("metrics.json");
    write_metrics(&path, &doc).map_err(report_error)?;
    let evaluated = doc
        .selection
        .as_ref()
        .map(|s| (s.evaluated_prompts, s.prompts.len()));
    match (evaluated, doc.pass_at_k.as_ref().map(Vec::len)) {
        (Some((done, total)), Some(nk)) => say(
            cli,
            format!(
                "wrote {} ({done}/{total} prompts, {nk} pass@k values)",
                path.display()
            ),
        ),
        (Some((done, total)), None) => say(
            cli,
            format!("wrote {} ({done}/{total} prompts)", path.display()),
        ),
        (None, Some(nk)) => say(
            cli,
            format!("wrote {} ({nk} pass@k values)", path.display()),
        ),
        (None, None) => say(cli, format!("wrote {}", path.display())),
    }

    if cli.plot {
        let svg = cli.output.join("metrics.svg");
        let series = if let Some(rows) = &doc.pass_at_k {
            PlotSeries::line(
                "pass@k",
                rows.iter().map(|r| (r.k as f64, r.value)).collect(),
            )
        } else {
            let winners: Vec<(f64, f64)> = doc
                .selection
                .iter()
                .flat_map(|s| s.prompts.iter().enumerate())
                .filter_map(|(i, p)| p.selected_nll.map(|nll| (i as f64, nll)))
                .collect();
            PlotSeries::scatter("winner nll", winners)
        };
        if !series.points.is_empty() {
            emit_plot(&svg, "selection metrics", "k or prompt", "value", &[series])
                .map_err(plot_error)?;
            say(cli, format!("wrote {}", svg.display()));
        }
    }

    if let Some(err) = all_prompts_failed {
        return Err(err);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_worked_example_flags() {
        let cli = Cli::try_parse_from([
            "gapdyn", "simulate", "--alpha", "2", "--beta", "1", "--k", "1", "--b", "0.5",
            "--us0", "3", "--uv0", "1", "--T", "10",
        ])
        .unwrap();
        let Command::Simulate(args) = &cli.command else {
            panic!("expected simulate");
        };
        assert_eq!(args.horizon, 10);
        assert_eq!(args.mode, SimMode::ClosedForm);
        assert_eq!(args.gamma, 0.0);
        assert_eq!(cli.seed, 0);
        assert!(!cli.plot);
    }

    #[test]
    fn parses_negative_values_and_lists() {
        let cli = Cli::try_parse_from([
            "gapdyn", "simulate", "--alpha", "2", "--beta", "1", "--k", "1", "--b", "0.5",
            "--us0", "1", "--uv0", "-1", "--mode", "discrete", "--schedule", "custom", "--T",
            "3", "--eta", "0.2,0.3,0.5",
        ])
        .unwrap();
        let Command::Simulate(args) = &cli.command else {
            panic!("expected simulate");
        };
        assert_eq!(args.uv0, -1.0);
        assert_eq!(args.eta.as_deref(), Some(&[0.2, 0.3, 0.5][..]));
    }

    #[test]
    fn parses_metrics_k_list() {
        let cli = Cli::try_parse_from([
            "gapdyn",
            "metrics",
            "--correctness",
            "m.csv",
            "--K",
            "1,2,5",
        ])
        .unwrap();
        let Command::Metrics(args) = &cli.command else {
            panic!("expected metrics");
        };
        assert_eq!(args.k_values.as_deref(), Some(&[1, 2, 5][..]));
    }

    #[test]
    fn rejects_unknown_flag() {
        assert!(Cli::try_parse_from(["gapdyn", "simulate", "--bogus", "1"]).is_err());
    }

    #[test]
    fn custom_schedule_requires_matching_length() {
        let err = build_schedule(
            ScheduleKind::Custom,
            5,
            None,
            4,
            &Some(vec![0.5, 0.5]),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = build_schedule(ScheduleKind::Uniform, 5, None, 4, &Some(vec![0.1; 5]));
        assert!(err.is_err());
    }
}
