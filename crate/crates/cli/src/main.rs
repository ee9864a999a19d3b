//! Experiment runner: Jones-Wenzl dumps, oracle checks, Gram sweeps,
//! commutator coefficient tables, orthogonality probes and the full
//! verification battery, with CSV/JSON output and deterministic seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tlnum::commutator::phi_bound_check;
use tlnum::fiber::{ccirc_basis, orthogonality_probe, pi_abc};
use tlnum::gram::{estimate_n0, riesz_margin};
use tlnum::jones_wenzl::jw;
use tlnum::scalars::RecCoeffParams;
use tlnum::suite;
use tlnum::{Error, ScalarContext};

#[derive(Parser)]
#[command(name = "tlnum", version, about = "Temperley-Lieb numerics workbench")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct ScalarArgs {
    /// Integer parameter N >= 3 (loop parameter delta = N).
    #[arg(long = "N", conflicts_with = "q")]
    n_int: Option<u32>,

    /// Deformation parameter q in (0,1), exclusive with --N.
    #[arg(long)]
    q: Option<f64>,

    /// Override the tolerance for diagrammatic identities.
    #[arg(long)]
    tol_identity: Option<f64>,

    /// Override the tolerance for dense-oracle comparisons.
    #[arg(long)]
    tol_oracle: Option<f64>,
}

impl ScalarArgs {
    fn context(&self) -> Result<ScalarContext, Error> {
        let ctx = match (self.n_int, self.q) {
            (Some(n), None) => ScalarContext::from_n(n)?,
            (None, Some(q)) => ScalarContext::from_q(q)?,
            _ => {
                return Err(Error::Domain(
                    "exactly one of --N and --q must be given".into(),
                ))
            }
        };
        ctx.with_tols(
            self.tol_identity.unwrap_or(ctx.tol_identity),
            self.tol_oracle.unwrap_or(ctx.tol_oracle),
        )
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Output format; each subcommand has its natural default.
    #[arg(long, value_enum)]
    format: Option<OutFormat>,
}

impl OutputArgs {
    fn emit(&self, payload: &str) -> std::io::Result<()> {
        match &self.out {
            Some(path) => fs::write(path, payload),
            None => {
                print!("{payload}");
                Ok(())
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Dump the coefficients of the Jones-Wenzl projection P_n.
    Jw {
        #[command(flatten)]
        scalar: ScalarArgs,
        /// Strand count n.
        #[arg(long)]
        n: u16,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the dense-matrix oracle checks and report residuals.
    Oracle {
        #[command(flatten)]
        scalar: ScalarArgs,
        /// Which check group to run.
        #[arg(long, default_value = "all")]
        check: OracleCheck,
        /// Largest strand count for embedded-operator checks.
        #[arg(long, default_value_t = 6)]
        n_max: u16,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Gram blocks along one recursion chain.
    Gram {
        #[command(flatten)]
        scalar: ScalarArgs,
        /// Weight of the generating vector.
        #[arg(long)]
        k: u32,
        /// Rotation eigenvalue index s: mu = exp(i pi s / k).
        #[arg(long, default_value_t = 0)]
        mu_index: u32,
        #[arg(long, default_value_t = 40)]
        n_max: u16,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Margin sweep over a range of N.
    Sweep {
        #[arg(long = "N-min", default_value_t = 3)]
        n_min: u32,
        #[arg(long = "N-max", default_value_t = 30)]
        n_max_int: u32,
        #[arg(long, default_value_t = 4)]
        k_max: u32,
        #[arg(long, default_value_t = 40)]
        n_max: u16,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Recursive phi coefficient tables with the growth summary.
    Coeffs {
        #[command(flatten)]
        scalar: ScalarArgs,
        #[arg(long)]
        k: u32,
        #[arg(long, default_value_t = 0)]
        mu_index: u32,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        l: u32,
        #[arg(long, default_value_t = 40)]
        p_max: u32,
        /// Growth-bound radius R in (3.4, 0.995/(2 q^2)).
        #[arg(long = "R", default_value_t = 4.0)]
        r: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Inner products (x_{i,j} y | y x'_{i',j'}) over a small index grid.
    ProbeOrth {
        #[command(flatten)]
        scalar: ScalarArgs,
        #[arg(long, default_value_t = 1)]
        k: u16,
        #[arg(long, default_value_t = 1)]
        n: u16,
        #[arg(long, default_value_t = 2)]
        max_ij: u16,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the verification battery; nonzero exit on any failure.
    Verify {
        /// Restrict the N-swept suites to a single N.
        #[arg(long = "N")]
        n_int: Option<u32>,
        /// Restrict to one suite (jw, partial-trace, fiber, ccirc,
        /// rotation, gram, one-step, riesz, commutator, phi, support,
        /// decay, alpha, shape).
        #[arg(long)]
        suite: Option<String>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleCheck {
    All,
    Ccirc,
    Gram,
    Rec,
    Pi,
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::BudgetExceeded(_) => 3,
        Error::RankAmbiguity(_) | Error::EigenSnap(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Domain(format!("io error: {e}"))
}

fn dispatch(cmd: Command) -> Result<ExitCode, Error> {
    match cmd {
        Command::Jw { scalar, n, output } => {
            let ctx = scalar.context()?;
            let p = jw(n, &ctx)?;
            let format = output.format.unwrap_or(OutFormat::Json);
            let payload = match format {
                OutFormat::Json => {
                    let rows: Vec<serde_json::Value> = p
                        .terms()
                        .map(|(d, c)| {
                            serde_json::json!({
                                "diagram": d.pair_string(),
                                "coefficient": [c.re, c.im],
                            })
                        })
                        .collect();
                    let doc = serde_json::json!({
                        "n": n,
                        "q": ctx.q,
                        "delta": ctx.delta,
                        "terms": rows,
                    });
                    serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
                }
                OutFormat::Csv => {
                    let mut s = String::from("diagram,coeff_re,coeff_im\n");
                    for (d, c) in p.terms() {
                        let _ = writeln!(s, "\"{}\",{},{}", d.pair_string(), c.re, c.im);
                    }
                    s
                }
            };
            output.emit(&payload).map_err(io_err)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle {
            scalar,
            check,
            n_max,
            seed,
            output,
        } => {
            let ctx = scalar.context()?;
            let _ = ctx
                .n_int
                .ok_or_else(|| Error::Domain("the oracle needs --N (integer mode)".into()))?;
            let mut reports = Vec::new();
            match check {
                OracleCheck::All => {
                    reports.push(suite::fiber_functor_battery(seed)?);
                    reports.push(suite::ccirc_dimension_battery()?);
                    reports.push(suite::rotation_battery()?);
                    reports.push(suite::gram_oracle_battery_at(n_max)?);
                    reports.push(suite::one_step_trace_battery_at(n_max)?);
                    reports.push(oracle_pi_report(&ctx)?);
                }
                OracleCheck::Ccirc => {
                    reports.push(suite::ccirc_dimension_battery()?);
                    reports.push(suite::rotation_battery()?);
                }
                OracleCheck::Gram => reports.push(suite::gram_oracle_battery_at(n_max)?),
                OracleCheck::Rec => reports.push(suite::one_step_trace_battery_at(n_max)?),
                OracleCheck::Pi => reports.push(oracle_pi_report(&ctx)?),
            }
            emit_reports(&output, "oracle", reports)
        }
        Command::Gram {
            scalar,
            k,
            mu_index,
            n_max,
            output,
        } => {
            let ctx = scalar.context()?;
            let params = RecCoeffParams::from_root_index(k, mu_index)?;
            let rep = riesz_margin(k, params.mu_re, ctx.q, n_max)?;
            let n_label = ctx
                .n_int
                .map(|n| n.to_string())
                .unwrap_or_else(|| "0".into());
            let format = output.format.unwrap_or(OutFormat::Csv);
            let payload = match format {
                OutFormat::Csv => {
                    let mut s = String::from("N,q,k,mu_re,n,norm,inv_norm,cond,margin\n");
                    for &(n, norm, inv, cond, margin) in &rep.per_n {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{},{},{},{}",
                            n_label, ctx.q, k, params.mu_re, n, norm, inv, cond, margin
                        );
                    }
                    s
                }
                OutFormat::Json => serde_json::to_string_pretty(&rep).expect("serializable") + "\n",
            };
            output.emit(&payload).map_err(io_err)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            n_min,
            n_max_int,
            k_max,
            n_max,
            output,
        } => {
            let rep = estimate_n0(k_max, n_max, (n_min, n_max_int))?;
            let format = output.format.unwrap_or(OutFormat::Csv);
            let payload = match format {
                OutFormat::Csv => {
                    let mut s = String::from("N,q,margin,sup_norm,sup_inv_norm,pass\n");
                    for r in &rep.rows {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{}",
                            r.n_int, r.q, r.margin, r.sup_norm, r.sup_inv_norm, r.pass
                        );
                    }
                    s
                }
                OutFormat::Json => serde_json::to_string_pretty(&rep).expect("serializable") + "\n",
            };
            output.emit(&payload).map_err(io_err)?;
            if let Some(n0) = rep.smallest_pass {
                eprintln!("smallest N with margin < 1: {n0}");
            } else {
                eprintln!("no N in range reached margin < 1");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Coeffs {
            scalar,
            k,
            mu_index,
            m,
            l,
            p_max,
            r,
            output,
        } => {
            let ctx = scalar.context()?;
            let params = RecCoeffParams::from_root_index(k, mu_index)?;
            let table = tlnum::commutator::phi_table(m, l, p_max, &params, &ctx)?;
            let bound = phi_bound_check(m, &params, &ctx, p_max, r, 8)?;
            let format = output.format.unwrap_or(OutFormat::Csv);
            let payload = match format {
                OutFormat::Csv => {
                    let mut s = String::from("m,l,p,i,phi_re,phi_im\n");
                    for p in 0..=p_max {
                        for i in -(p as i64)..=(m + p) as i64 {
                            let _ =
                                writeln!(s, "{},{},{},{},{},{}", m, l, p, i, table.phi(p, i), 0.0);
                        }
                    }
                    s
                }
                OutFormat::Json => {
                    let rows: Vec<serde_json::Value> = (0..=p_max)
                        .flat_map(|p| {
                            let table = &table;
                            (-(p as i64)..=(m + p) as i64).map(move |i| {
                                serde_json::json!({
                                    "m": m, "l": l, "p": p, "i": i,
                                    "phi_re": table.phi(p, i), "phi_im": 0.0,
                                })
                            })
                        })
                        .collect();
                    serde_json::to_string_pretty(&rows).expect("serializable") + "\n"
                }
            };
            output.emit(&payload).map_err(io_err)?;
            eprintln!(
                "K_empirical = {:e} (R = {}), stable = {}",
                bound.k_empirical, bound.r, bound.stable
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::ProbeOrth {
            scalar,
            k,
            n,
            max_ij,
            seed,
            output,
        } => {
            let ctx = scalar.context()?;
            let rows = orthogonality_probe(k, n, max_ij, seed, &ctx)?;
            let format = output.format.unwrap_or(OutFormat::Csv);
            let payload = match format {
                OutFormat::Csv => {
                    let mut s = String::from("k,kp,n,i,j,ip,jp,abs_inner\n");
                    for row in &rows {
                        let _ = writeln!(
                            s,
                            "{},{},{},{},{},{},{},{}",
                            k, k, n, row.i, row.j, row.ip, row.jp, row.abs_inner
                        );
                    }
                    s
                }
                OutFormat::Json => {
                    let rows: Vec<serde_json::Value> = rows
                        .iter()
                        .map(|row| {
                            serde_json::json!({
                                "k": k, "kp": k, "n": n,
                                "i": row.i, "j": row.j, "ip": row.ip, "jp": row.jp,
                                "abs_inner": row.abs_inner,
                            })
                        })
                        .collect();
                    serde_json::to_string_pretty(&rows).expect("serializable") + "\n"
                }
            };
            output.emit(&payload).map_err(io_err)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            n_int,
            suite: which,
            seed,
            output,
        } => {
            let ns: Vec<u32> = match n_int {
                Some(n) => {
                    if n < 3 {
                        return Err(Error::Domain("--N must be at least 3".into()));
                    }
                    vec![n]
                }
                None => vec![3, 5, 7],
            };
            let reports = match which.as_deref() {
                None | Some("all") => {
                    let mut rs = vec![
                        suite::jw_battery_at(&ns, 10)?,
                        suite::partial_trace_battery_at(&ns, 10)?,
                        suite::fiber_functor_battery(seed)?,
                        suite::ccirc_dimension_battery()?,
                        suite::rotation_battery()?,
                        suite::gram_oracle_battery()?,
                        suite::one_step_trace_battery()?,
                        suite::riesz_battery()?,
                        suite::iterated_move_battery(seed)?,
                        suite::phi_bound_battery()?,
                        suite::support_localization_battery(seed)?,
                        suite::decay_probe_battery(seed)?,
                        suite::alpha_battery()?,
                        suite::gram_shape_battery()?,
                    ];
                    rs.shrink_to_fit();
                    rs
                }
                Some("jw") => vec![suite::jw_battery_at(&ns, 10)?],
                Some("partial-trace") => vec![suite::partial_trace_battery_at(&ns, 10)?],
                Some("fiber") => vec![suite::fiber_functor_battery(seed)?],
                Some("ccirc") => vec![suite::ccirc_dimension_battery()?],
                Some("rotation") => vec![suite::rotation_battery()?],
                Some("gram") => vec![suite::gram_oracle_battery()?],
                Some("one-step") => vec![suite::one_step_trace_battery()?],
                Some("riesz") => vec![suite::riesz_battery()?],
                Some("commutator") => vec![
                    suite::iterated_move_battery(seed)?,
                    suite::support_localization_battery(seed)?,
                ],
                Some("phi") => vec![suite::phi_bound_battery()?],
                Some("support") => vec![suite::support_localization_battery(seed)?],
                Some("decay") => vec![suite::decay_probe_battery(seed)?],
                Some("alpha") => vec![suite::alpha_battery()?],
                Some("shape") => vec![suite::gram_shape_battery()?],
                Some(other) => {
                    return Err(Error::Domain(format!("unknown suite '{other}'")));
                }
            };
            let label = which.unwrap_or_else(|| "all".into());
            emit_reports(&output, &label, reports)
        }
    }
}

fn oracle_pi_report(ctx: &ScalarContext) -> Result<suite::Report, Error> {
    let mut cases = Vec::new();
    for b in 1..=4u16 {
        let probe = pi_abc(1, b, 1, ctx)?;
        cases.push(suite::Case::info(
            "pi_deviation",
            format!("a=c=1 b={b} lambda={:.6} ref={:.6}", probe.best_lambda, probe.lambda_ref),
            probe.deviation,
        ));
    }
    let scalar = pi_abc(2, 2, 0, ctx)?;
    cases.push(suite::Case::check(
        "pi_scalar_when_c_is_zero",
        "a=2 b=2 c=0".into(),
        scalar.deviation,
        1e-12,
    ));
    // keep the basis cache warm for subsequent checks
    let _ = ccirc_basis(1, ctx)?;
    Ok(suite::Report {
        suite: "pi".into(),
        cases,
    })
}

fn emit_reports(
    output: &OutputArgs,
    label: &str,
    reports: Vec<suite::Report>,
) -> Result<ExitCode, Error> {
    let all_pass = reports.iter().all(|r| r.all_pass());
    let cases: Vec<suite::Case> = reports.into_iter().flat_map(|r| r.cases).collect();
    let merged = suite::Report {
        suite: label.to_string(),
        cases,
    };
    let format = output.format.unwrap_or(OutFormat::Json);
    let payload = match format {
        OutFormat::Json => serde_json::to_string_pretty(&merged).expect("serializable") + "\n",
        OutFormat::Csv => {
            let mut s = String::from("name,params,residual,tol,pass\n");
            for c in &merged.cases {
                let _ = writeln!(
                    s,
                    "{},\"{}\",{},{},{}",
                    c.name, c.params, c.residual, c.tol, c.pass
                );
            }
            s
        }
    };
    output.emit(&payload).map_err(io_err)?;
    let (npass, ntotal) = (
        merged.cases.iter().filter(|c| c.pass).count(),
        merged.cases.len(),
    );
    eprintln!("{label}: {npass}/{ntotal} cases pass");
    if all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}
