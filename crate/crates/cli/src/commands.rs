use nadir_core::deterministic::{deterministic_frequency, deterministic_nadir, Nadir};
use nadir_core::ld_matrices::{build_a, van_loan_blocks, Mat7};
use nadir_core::optimizer::{MostLikelyScenario, SolveStatus, Solver};
use nadir_core::oracles::montecarlo::estimate_q;
use nadir_core::scenario::{eval_trajectory, p_star, ScenarioVars};
use nadir_core::sweep::{inertia_sweep, phase_boundary, run_sweep, status_label, Axis, PhaseBoundary, SweepRow};
use nadir_core::validation::run_validation;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{histogram, num, OutDir};
use crate::svg;

#[derive(Serialize)]
struct NadirSummary {
    k: u32,
    nadir: f64,
    t_nadir: f64,
}

pub fn deterministic(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let p = &cfg.system;
    let n = cfg.deterministic.points.max(2);
    let times: Vec<f64> = (0..n).map(|i| p.horizon * i as f64 / (n - 1) as f64).collect();
    let ks = &cfg.deterministic.k;

    let mut columns = Vec::with_capacity(ks.len());
    for &k in ks {
        columns.push(
            times
                .iter()
                .map(|&t| deterministic_frequency(k, t, p))
                .collect::<nadir_core::Result<Vec<f64>>>()?,
        );
    }
    let mut header = vec!["t".to_string()];
    header.extend(ks.iter().map(|k| format!("theta_dot_k{k}")));
    let rows: Vec<Vec<String>> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| std::iter::once(num(t)).chain(columns.iter().map(|c| num(c[i]))).collect())
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv("deterministic.csv", &header_refs, &rows)?;

    let summary = ks
        .iter()
        .map(|&k| {
            let Nadir { value, time } = deterministic_nadir(k, p)?;
            println!("k={k}: nadir {value:.6} Hz at t={time:.4} s");
            Ok(NadirSummary {
                k,
                nadir: value,
                t_nadir: time,
            })
        })
        .collect::<nadir_core::Result<Vec<_>>>()?;
    out.write_json("deterministic_summary.json", &summary)?;

    if cfg.output.svg {
        let names: Vec<String> = ks.iter().map(|k| format!("k = {k}")).collect();
        let series: Vec<svg::Series> = columns
            .iter()
            .zip(&names)
            .map(|(c, name)| svg::Series {
                name,
                points: times.iter().copied().zip(c.iter().copied()).collect(),
            })
            .collect();
        out.write_text(
            "deterministic.svg",
            &svg::line_plot("Frequency after simultaneous outages", "t [s]", "theta_dot [Hz]", &series),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PerKReport {
    k: u32,
    #[serde(rename = "J")]
    j: f64,
    feasible: bool,
    status: SolveStatus,
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct ScenarioReport {
    k_star: u32,
    c_star: [f64; 3],
    J_total: f64,
    J_jump: f64,
    J_gauss: f64,
    nadir: f64,
    t_nadir: f64,
    p_star_T: f64,
    per_k: Vec<PerKReport>,
    seed: u64,
    status: SolveStatus,
}

impl From<&MostLikelyScenario> for ScenarioReport {
    fn from(s: &MostLikelyScenario) -> Self {
        ScenarioReport {
            k_star: s.k_star,
            c_star: s.c_star,
            J_total: s.j_star.total,
            J_jump: s.j_star.jump_part,
            J_gauss: s.j_star.gaussian_part,
            nadir: s.nadir.value,
            t_nadir: s.nadir.time,
            p_star_T: s.p_star_t,
            per_k: s
                .per_k
                .iter()
                .map(|p| PerKReport {
                    k: p.k,
                    j: p.j,
                    feasible: p.feasible,
                    status: p.status,
                })
                .collect(),
            seed: s.seed,
            status: s.status,
        }
    }
}

#[derive(Serialize)]
struct MatrixDump {
    k: u32,
    a: Vec<Vec<f64>>,
    b1: Vec<Vec<f64>>,
    b2: Vec<f64>,
    b3: Vec<f64>,
    exp_at: Vec<Vec<f64>>,
}

pub fn most_likely(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let p = &cfg.system;
    let noise = cfg.noise.scaling()?;
    let solver = Solver::new(p, &cfg.solver)?;
    let s = solver.solve(cfg.event.gamma, &noise)?;
    let report = ScenarioReport::from(&s);
    out.write_json("most_likely.json", &report)?;
    println!(
        "k*={} J*={:.10} (jump {:.6}, gaussian {:.6}) nadir {:.6} at t={:.4} p*(T)={:.6} [{}]",
        s.k_star,
        s.j_star.total,
        s.j_star.jump_part,
        s.j_star.gaussian_part,
        s.nadir.value,
        s.nadir.time,
        s.p_star_t,
        status_label(s.status)
    );

    let header = ["t", "theta_dot", "p_star", "renewable"];
    let mut rows = Vec::new();
    let mut series = Vec::new();
    if s.c_star.iter().all(|c| c.is_finite()) {
        let traj = eval_trajectory(&ScenarioVars::new(s.k_star, s.c_star), p, cfg.solver.grid_size)?;
        let path = p_star(&traj, p);
        for (i, t) in traj.times.iter().enumerate() {
            rows.push(vec![
                num(*t),
                num(traj.samples[i][1]),
                num(path.p_star[i]),
                num(path.renewable_component[i]),
            ]);
        }
        series.push((traj.times.clone(), traj.frequency(), path.renewable_component));
    }
    out.write_csv("trajectory.csv", &header, &rows)?;

    if cfg.output.svg {
        if let Some((times, freq, renewable)) = series.first() {
            let plot = svg::line_plot(
                "Most likely path to the event",
                "t [s]",
                "value",
                &[
                    svg::Series {
                        name: "theta_dot [Hz]",
                        points: times.iter().copied().zip(freq.iter().copied()).collect(),
                    },
                    svg::Series {
                        name: "renewable P [pu]",
                        points: times.iter().copied().zip(renewable.iter().copied()).collect(),
                    },
                ],
            );
            out.write_text("trajectory.svg", &plot)?;
        }
    }

    if cfg.output.dump_matrices {
        let blocks = van_loan_blocks(p, s.k_star, p.horizon)?;
        let a = build_a(p).0;
        let mat = |m: &Mat7| -> Vec<Vec<f64>> { (0..7).map(|i| (0..7).map(|j| m[(i, j)]).collect()).collect() };
        out.write_json(
            "matrices.json",
            &MatrixDump {
                k: s.k_star,
                a: mat(&a),
                b1: mat(&blocks.b1),
                b2: blocks.b2.iter().copied().collect(),
                b3: blocks.b3.iter().copied().collect(),
                exp_at: mat(&blocks.exp_at),
            },
        )?;
    }

    if let Some(e) = solver.overflow() {
        return Err(CliError::Model(e.clone()));
    }
    if s.status == SolveStatus::InfeasibleK {
        return Err(CliError::Failed("no feasible outage count".into()));
    }
    Ok(())
}

const SWEEP_HEADER: [&str; 11] = [
    "sigma",
    "lambda",
    "mu",
    "gamma",
    "J_star",
    "k_star",
    "p_star_T",
    "gaussian_part",
    "jump_part",
    "class",
    "status",
];

fn sweep_record(r: &SweepRow) -> Vec<String> {
    vec![
        num(r.sigma),
        num(r.lambda),
        num(r.mu),
        num(r.gamma),
        num(r.j_star),
        r.k_star.map(|k| k.to_string()).unwrap_or_default(),
        num(r.p_star_t),
        num(r.gaussian_part),
        num(r.jump_part),
        r.class.as_str().to_owned(),
        r.status.clone(),
    ]
}

fn axis_label(a: Axis) -> &'static str {
    match a {
        Axis::Sigma => "sigma",
        Axis::Lambda => "lambda",
        Axis::Mu => "mu",
        Axis::Gamma => "gamma",
    }
}

#[derive(Serialize)]
struct BoundaryReport {
    lambda: f64,
    boundary: Option<PhaseBoundary>,
    error: Option<String>,
}

pub fn sweep(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let base = cfg.sweep_base()?;
    let rows = run_sweep(&base, &cfg.sweep)?;
    let records: Vec<Vec<String>> = rows.iter().map(sweep_record).collect();
    out.write_csv("sweep.csv", &SWEEP_HEADER, &records)?;
    let failed = rows.iter().filter(|r| r.k_star.is_none()).count();
    println!("{} points, {failed} failed", rows.len());

    if cfg.output.svg && cfg.sweep.axes.len() == 2 {
        let (ax, ay) = (&cfg.sweep.axes[0], &cfg.sweep.axes[1]);
        let j: Vec<f64> = rows.iter().map(|r| r.j_star).collect();
        let classes: Vec<&str> = rows.iter().map(|r| r.class.as_str()).collect();
        let (xl, yl) = (axis_label(ax.name), axis_label(ay.name));
        out.write_text("sweep_j.svg", &svg::heatmap("Decay rate J*", xl, yl, ax.points, ay.points, &j))?;
        out.write_text(
            "sweep_class.svg",
            &svg::categorical("Most likely cause", xl, yl, ax.points, ay.points, &classes),
        )?;
    }

    let b = cfg.boundary;
    if b.enabled {
        let mut at = base;
        at.point.lambda = b.lambda;
        let report = match phase_boundary(&at, b.sigma_min, b.sigma_max, b.tol) {
            Ok(pb) => {
                println!("k* steps {} -> {} at sigma = {:.5}", pb.k_below, pb.k_above, pb.sigma);
                BoundaryReport {
                    lambda: b.lambda,
                    boundary: Some(pb),
                    error: None,
                }
            }
            Err(e) => BoundaryReport {
                lambda: b.lambda,
                boundary: None,
                error: Some(e.to_string()),
            },
        };
        out.write_json("phase_boundary.json", &report)?;
    }
    Ok(())
}

pub fn inertia(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let base = cfg.sweep_base()?;
    let i = cfg.inertia;
    let rows = inertia_sweep(&base, i.min, i.max, i.points)?;
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.mu),
                num(r.j_star),
                r.k_star.map(|k| k.to_string()).unwrap_or_default(),
                num(r.p_star_t),
                r.status.clone(),
            ]
        })
        .collect();
    out.write_csv("inertia.csv", &["mu", "J_star", "k_star", "p_star_T", "status"], &records)?;
    println!("{} inertia values", rows.len());

    if cfg.output.svg {
        let pick = |f: &dyn Fn(&SweepRow) -> f64| rows.iter().map(|r| (r.mu, f(r))).collect::<Vec<_>>();
        let plot = svg::line_plot(
            "Influence of inertia",
            "mu",
            "value",
            &[
                svg::Series {
                    name: "J*",
                    points: pick(&|r| r.j_star),
                },
                svg::Series {
                    name: "k*",
                    points: pick(&|r| r.k_star.map_or(f64::NAN, f64::from)),
                },
                svg::Series {
                    name: "|p*(T)|",
                    points: pick(&|r| r.p_star_t.abs()),
                },
            ],
        );
        out.write_text("inertia.svg", &plot)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulationReport {
    gamma: f64,
    sigma: f64,
    lambda: f64,
    epsilon: f64,
    n_paths: usize,
    q_hat: f64,
    ci95: f64,
    n_hits: usize,
    warnings: Vec<nadir_core::oracles::montecarlo::McWarning>,
    empirical_rate: f64,
    j_star: f64,
    note: &'static str,
}

pub fn simulate(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let noise = cfg.noise.scaling()?;
    let (sigma, lambda) = (noise.sigma(), noise.lambda());
    let mut sim = cfg.simulation;
    sim.epsilon = noise.epsilon;
    let est = estimate_q(cfg.event.gamma, &cfg.system, sigma, lambda, &sim)?;
    let j_star = Solver::new(&cfg.system, &cfg.solver)?
        .solve(cfg.event.gamma, &noise)?
        .j_star
        .total;
    let report = SimulationReport {
        gamma: cfg.event.gamma,
        sigma,
        lambda,
        epsilon: noise.epsilon,
        n_paths: est.n_paths,
        q_hat: est.q_hat,
        ci95: est.ci95,
        n_hits: est.n_hits,
        warnings: est.warnings.clone(),
        empirical_rate: est.empirical_rate(noise.epsilon),
        j_star,
        note: "asymptotic-consistency check: -eps ln q_hat approaches J* only as eps -> 0",
    };
    out.write_json("simulation.json", &report)?;
    let bins = histogram(&est.nadir_samples, cfg.output.histogram_bins);
    let rows: Vec<Vec<String>> = bins
        .iter()
        .map(|(lo, hi, c)| vec![num(*lo), num(*hi), c.to_string()])
        .collect();
    out.write_csv("nadir_histogram.csv", &["lower", "upper", "count"], &rows)?;
    println!(
        "q_hat={:.6e} +/- {:.2e} ({} hits of {}), -eps ln q_hat={:.6}, J*={:.6}",
        est.q_hat,
        est.ci95,
        est.n_hits,
        est.n_paths,
        report.empirical_rate,
        j_star
    );
    Ok(())
}

pub fn validate(cfg: &RunConfig, out: &OutDir) -> Result<(), CliError> {
    let noise = cfg.noise.scaling()?;
    let report = run_validation(&cfg.system, cfg.event.gamma, &noise, &cfg.validation);
    out.write_json("validation.json", &report)?;
    for c in &report.checks {
        println!("{} {}: {:.3e} (tol {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    if report.passed {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(CliError::Failed(format!("failed checks: {}", names.join(", "))))
    }
}
