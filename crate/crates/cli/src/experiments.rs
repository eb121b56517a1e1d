//! Experiment pipelines behind the three subcommands.

use std::fs;
use std::path::Path;

use lalm::analysis::{
    critical_rho, critical_rho_by_root_finding, damping_frequency, theorem1_bound, theorem2_bound,
    transition_matrix,
};
use lalm::ct::{
    build_ct_problem, build_scenario, fbp_like_init, write_pgm, write_raw, CtGeometry,
};
use lalm::lasso::{build_lasso_instance, lasso_saddle, run_lasso_solver, LassoSolverKind};
use lalm::solvers::{
    fgm_restart_run, os_relaxed_lalm_run, os_simple_relaxed_lalm_run, os_sqs_run, records_to_csv,
    RhoMode, SolverConfig,
};

use crate::config::{ExperimentConfig, SolverEntry, SolverKind};

pub type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn write_text(out: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(out.join(name), text)?;
    Ok(())
}

/// Run the LASSO gap study: one gap CSV per solver, plus a rate-bound
/// table when the penalty is fixed (the bounds assume a constant rho).
pub fn run_lasso_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let p = &cfg.lasso;
    let instance =
        build_lasso_instance(p.rows, p.cols, p.sparsity, p.noise_std, p.lambda, cfg.seed)?;
    let saddle = lasso_saddle(&instance, cfg.reference_iterations)?;

    for solver in &cfg.solvers {
        let kind = match solver.kind {
            SolverKind::Proposed => LassoSolverKind::Proposed,
            SolverKind::Simple => LassoSolverKind::Simple,
            SolverKind::Sqs => {
                return Err(format!(
                    "solver `{}`: kind `sqs` is not a lasso solver (valid: proposed, simple)",
                    solver.name
                )
                .into())
            }
        };
        let RhoMode::Fixed(rho) = solver.rho else {
            return Err(format!(
                "solver `{}`: the lasso runner needs a fixed rho",
                solver.name
            )
            .into());
        };
        let gaps = run_lasso_solver(&instance, kind, solver.alpha, rho, solver.iterations, &saddle)?;

        let mut csv = String::from("k,ergodic_gap,nonergodic_gap\n");
        for (i, (e, n)) in gaps.ergodic.iter().zip(&gaps.nonergodic).enumerate() {
            csv.push_str(&format!("{},{e:.12e},{n:.12e}\n", i + 1));
        }
        write_text(out, &format!("gaps_{}.csv", solver.name), &csv)?;

        let bound = |k: usize| -> lalm::error::Result<f64> {
            let args = (
                k,
                &instance.x0[..],
                &instance.u0[..],
                &instance.mu0[..],
                &saddle,
                &instance.d_psi,
                &instance.d_a,
                rho,
                solver.alpha,
                &instance.problem,
            );
            match solver.kind {
                SolverKind::Simple => theorem1_bound(
                    args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7, args.8, args.9,
                ),
                _ => theorem2_bound(
                    args.0, args.1, args.2, args.3, args.4, args.5, args.6, args.7, args.8, args.9,
                ),
            }
        };
        let mut table = String::from("k,ergodic_gap,bound\n");
        for (i, e) in gaps.ergodic.iter().enumerate() {
            table.push_str(&format!("{},{e:.12e},{:.12e}\n", i + 1, bound(i + 1)?));
        }
        write_text(out, &format!("bounds_{}.csv", solver.name), &table)?;
    }
    Ok(())
}

fn run_ct_solver(
    solver: &SolverEntry,
    problem: &lalm::CompositeProblem,
    x0: &[f64],
    num_bins: usize,
    reference: &[f64],
) -> Result<lalm::solvers::RunOutput> {
    let mut sc = SolverConfig::new(solver.alpha, solver.rho, solver.iterations, solver.subsets);
    sc.d_psi_mode = solver.d_psi;
    // Group whole views so every subset sees the full detector; splitting
    // individual rays across subsets makes the subset gradients far
    // noisier.
    sc.rows_per_view = num_bins;
    let run = match solver.kind {
        SolverKind::Proposed => os_relaxed_lalm_run,
        SolverKind::Simple => os_simple_relaxed_lalm_run,
        SolverKind::Sqs => os_sqs_run,
    };
    Ok(run(problem, x0, &sc, Some(reference), false)?)
}

/// Run the CT reconstruction study: scenario, reference solve, one
/// convergence CSV and final/difference images per solver.
pub fn run_ct_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let s = &cfg.scenario;
    let geometry = CtGeometry::desk(s.nx, s.ny, s.views)?;
    let num_bins = geometry.num_bins;
    let scenario = build_scenario(geometry, s.i0, cfg.seed, s.noiseless, s.beta, s.delta)?;
    let problem = build_ct_problem(&scenario)?;
    let x0 = fbp_like_init(&scenario)?;
    let (x_star, _) = fgm_restart_run(&problem, &x0, cfg.reference_iterations, 0.0)?;

    let window = s.window_hu;
    write_pgm(&out.join("truth.pgm"), &scenario.x_true, s.nx, s.ny, window)?;
    write_pgm(&out.join("init.pgm"), &x0, s.nx, s.ny, window)?;
    write_raw(&out.join("init.raw"), &x0, s.nx, s.ny)?;
    write_pgm(&out.join("reference.pgm"), &x_star, s.nx, s.ny, window)?;
    write_raw(&out.join("reference.raw"), &x_star, s.nx, s.ny)?;

    for solver in &cfg.solvers {
        let run = run_ct_solver(solver, &problem, &x0, num_bins, &x_star)?;
        write_text(out, &format!("ct_{}.csv", solver.name), &records_to_csv(&run.records))?;
        write_pgm(
            &out.join(format!("ct_{}_final.pgm", solver.name)),
            &run.x,
            s.nx,
            s.ny,
            window,
        )?;
        write_raw(&out.join(format!("ct_{}_final.raw", solver.name)), &run.x, s.nx, s.ny)?;
        let diff: Vec<f64> = run.x.iter().zip(&x_star).map(|(a, b)| a - b).collect();
        write_pgm(
            &out.join(format!("ct_{}_diff.pgm", solver.name)),
            &diff,
            s.nx,
            s.ny,
            (-50.0, 50.0),
        )?;
    }
    Ok(())
}

/// Tabulate the second-order mode analysis over the configured
/// `(lambda_1 / L_A, alpha)` grid.
pub fn analyze_spectral(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let sp = &cfg.spectral;
    let mut csv = String::from(
        "ratio,alpha,critical_rho,critical_rho_root,omega,alpha_sqrt_ratio,spectral_radius\n",
    );
    for &ratio in &sp.ratios {
        for &alpha in &sp.alphas {
            let rc = critical_rho(ratio, 1.0)?;
            let rc_root = critical_rho_by_root_finding(ratio, 1.0, alpha)?;
            // The mode stops oscillating for large ratios, in which case
            // there is no damping frequency to report.
            let omega = damping_frequency(ratio, 1.0, alpha, sp.rho_small)
                .map_or(String::new(), |w| format!("{w:.12e}"));
            let t = transition_matrix(ratio, 1.0, sp.rho_small, alpha)?;
            csv.push_str(&format!(
                "{ratio:.12e},{alpha:.12e},{rc:.12e},{rc_root:.12e},{omega},{:.12e},{:.12e}\n",
                alpha * ratio.sqrt(),
                t.spectral_radius(),
            ));
        }
    }
    write_text(out, "spectral.csv", &csv)?;
    Ok(())
}
