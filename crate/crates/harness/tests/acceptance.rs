//! Release gate. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails. The desk-scale suites dominate the runtime (a few
//! minutes on one core with the optimized test profile).

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use berm_core::metrics::mardia;
use berm_core::selection::{berm_refit, percentile_intervals, relevance_from_ci};
use berm_core::simgen::{min_eigenvalue, realize_scenario, CovarianceSpec, Scenario};
use berm_core::solver::{audit, cd_fit, cv_fit, lambda_grid, CvOptions, PenaltyConfig, SolverOptions};
use berm_core::{seeds, standardize, Dataset, StandardizedDesign};
use berm_harness::case::run_case_study;
use berm_harness::config::{parse_config_str, Config};
use berm_harness::suite::evaluate_suite;
use common::{linear_fixture, null_group_fixture, write_file, TRUE_FEATURES};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

const ORACLE_TOL: f64 = 1e-6;
const ORACLE_PROBLEMS: usize = 50;
const ORACLE_SECONDS: f64 = 10.0;
const KKT_TOL: f64 = 1e-5;
const MARDIA_REL_TOL: f64 = 0.25;
const COVARIANCE_REL_TOL: f64 = 0.05;
const GENERATOR_SECONDS: f64 = 120.0;
const DESK_REPLICATES: usize = 20;
const DESK_MARGIN: f64 = 0.03;
const DESK_SECONDS: f64 = 30.0 * 60.0;
const MSE_RATIO: f64 = 2.0;
const CASE_R2: f64 = 0.95;
const NULL_SEEDS: u64 = 20;
const NULL_MIN_NONSIGNIFICANT: usize = 18;

struct Verdict {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict { name, pass, detail }
}

fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeds::rng(seed);
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn design(x: DMatrix<f64>, y: DVector<f64>) -> StandardizedDesign {
    standardize(&Dataset::new(x, y).unwrap()).unwrap()
}

fn soft(z: f64, g: f64) -> f64 {
    z.signum() * (z.abs() - g).max(0.0)
}

fn solver_oracle() -> Verdict {
    let started = Instant::now();
    let n = 200;
    let mut worst: f64 = 0.0;
    for k in 0..ORACLE_PROBLEMS as u64 {
        let mut rng = seeds::rng(1000 + k);
        let p = rng.random_range(1..=20);
        let alpha = rng.random_range(0.05..=1.0);
        let frac: f64 = rng.random_range(0.0..1.0);

        // centred orthonormal columns scaled to x_jᵀx_j / n = 1
        let mut x = gaussian(n, p, 2000 + k);
        for mut c in x.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let x = x.qr().q() * (n as f64).sqrt();
        let y = gaussian(n, 1, 3000 + k).column(0) * 2.0 + x.column(0) * 3.0;
        let sd = design(x, y);
        let ones = vec![1.0; p];
        let top = lambda_grid(&sd, alpha, &ones, 2, 0.5).unwrap()[0];
        let pen = PenaltyConfig::new(alpha, top * frac, ones).unwrap();
        let fit = cd_fit(&sd, &pen, None, &SolverOptions::default()).unwrap();
        for j in 0..p {
            let z = sd.xs().column(j).dot(sd.yc()) / n as f64;
            let expect = soft(z, pen.lambda() * alpha) / (1.0 + pen.lambda() * (1.0 - alpha));
            worst = worst.max((fit.beta()[j] - expect).abs());
        }

        let x = gaussian(n, p, 4000 + k);
        let beta = DVector::from_fn(p, |j, _| j as f64 * 0.3 - 1.0);
        let y = &x * &beta + gaussian(n, 1, 5000 + k).column(0);
        let sd = design(x, y);
        let fit = cd_fit(&sd, &PenaltyConfig::unit(alpha, 0.0, p).unwrap(), None, &SolverOptions::default()).unwrap();
        let xs = sd.xs();
        let ols = (xs.transpose() * xs).cholesky().unwrap().solve(&(xs.transpose() * sd.yc()));
        worst = worst.max((fit.beta() - ols).amax());
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        "solver oracle equivalence",
        worst < ORACLE_TOL && secs < ORACLE_SECONDS,
        format!("{ORACLE_PROBLEMS} soft-threshold + {ORACLE_PROBLEMS} least-squares problems, max |error| {worst:.2e}, {secs:.2} s"),
    )
}

fn relevance_logic() -> Verdict {
    let mut failures = Vec::new();

    let lo = [-0.2, 0.1, -0.5, 0.0, -0.3, 1e-12, -1e-12];
    let hi = [0.3, 0.5, -0.1, 0.4, 0.0, 2.0, -1e-13];
    if relevance_from_ci(&lo, &hi) != [false, true, true, false, false, true, true] {
        failures.push("interval relevance table");
    }

    // 41 draws per column: type-7 2.5% / 97.5% points are the 2nd and 40th order statistics
    let samples = DMatrix::from_fn(41, 3, |i, j| {
        let v = ((i * 17) % 41) as f64;
        match j {
            0 => v,
            1 => -v,
            _ => v - 20.0,
        }
    });
    let (l, u) = percentile_intervals(&samples, 0.95);
    let expect = [(1.0, 39.0), (-39.0, -1.0), (-19.0, 19.0)];
    if (0..3).any(|j| (l[j] - expect[j].0).abs() > 1e-12 || (u[j] - expect[j].1).abs() > 1e-12) {
        failures.push("percentile interval endpoints");
    }
    if relevance_from_ci(l.as_slice(), u.as_slice()) != [true, true, false] {
        failures.push("percentile interval relevance");
    }

    let x = gaussian(120, 6, 3);
    let y = x.column(1) * 2.0 - x.column(4) + gaussian(120, 1, 4).column(0);
    let sd = design(x, y);
    let cv = CvOptions { seed: 17, ..CvOptions::default() };
    let (refit, _) = berm_refit(&sd, 0.5, &[true; 6], &cv).unwrap();
    let (plain, _) = cv_fit(&sd, 0.5, &[1.0; 6], &cv).unwrap();
    if refit.beta() != plain.beta() || refit.lambda() != plain.lambda() {
        failures.push("all-relevant refit differs from the plain elastic net");
    }
    let (empty, empty_cv) = berm_refit(&sd, 0.5, &[false; 6], &cv).unwrap();
    if empty_cv.is_some() || empty.beta().iter().any(|&b| b != 0.0) || empty.n_selected() != 0 {
        failures.push("all-irrelevant refit is not the zero model");
    }
    let (partial, _) = berm_refit(&sd, 0.5, &[false, true, false, false, true, false], &cv).unwrap();
    if [0, 2, 3, 5].iter().any(|&j| partial.beta()[j] != 0.0) {
        failures.push("irrelevant coefficients entered the refit");
    }

    verdict(
        "relevance/BERM logic",
        failures.is_empty(),
        if failures.is_empty() {
            "interval table, percentile endpoints, all-relevant collapse, zero model, exclusion".into()
        } else {
            failures.join("; ")
        },
    )
}

fn generator_fidelity() -> Verdict {
    let started = Instant::now();
    let scenario = Scenario {
        n: 20_000,
        p: 60,
        sparsity: 0.5,
        sigma: 1.0,
        covariance: CovarianceSpec::moderate(),
        target_skewness: 5000.0,
        target_kurtosis: Some(25000.0),
        simple: false,
        seed: 2024,
        coefficient_seed: None,
    };
    let data = realize_scenario(&scenario).unwrap();
    let (skew, kurt) = mardia(data.dataset.x()).unwrap();
    let secs = started.elapsed().as_secs_f64();

    let x = data.dataset.x();
    let n = x.nrows() as f64;
    let mut centred = x.clone();
    for mut c in centred.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    let cov = centred.transpose() * &centred / (n - 1.0);
    let sigma = &data.sigma_true;
    let frob = (&cov - sigma).norm() / sigma.norm();
    let min_eig = min_eigenvalue(sigma);
    let pd = min_eig > 0.0 && sigma.clone().cholesky().is_some();

    let skew_err = (skew - 5000.0).abs() / 5000.0;
    let kurt_err = (kurt - 25000.0).abs() / 25000.0;
    verdict(
        "generator fidelity",
        skew_err <= MARDIA_REL_TOL && kurt_err <= MARDIA_REL_TOL && frob <= COVARIANCE_REL_TOL && pd && secs < GENERATOR_SECONDS,
        format!(
            "skewness {skew:.0} ({:.1}%), kurtosis {kurt:.0} ({:.1}%), covariance error {:.2e} of ||Σ||, min eigenvalue {min_eig:.3}, {secs:.1} s",
            100.0 * skew_err,
            100.0 * kurt_err,
            frob
        ),
    )
}

const DESK_SCENARIO: &str = "[[suite.scenarios]]\nid = \"desk\"\nn = 300\np = 60\nsparsity = 0.5\nsigma = 1\n";

fn desk_config(simple: bool) -> String {
    let kind = if simple {
        "simple = true\n"
    } else {
        "covariance = \"moderate\"\ntarget_skewness = 5000\ntarget_kurtosis = 25000\n"
    };
    format!(
        "[suite]\nreplicates = {DESK_REPLICATES}\nbase_seed = 2024\nmethods = [\"berm\", \"lasso\", \"enet\", \"alasso\", \"aenet\"]\n\n{DESK_SCENARIO}{kind}"
    )
}

/// method -> (balanced accuracy, selection delta, |selection delta|, mse) means
type Means = BTreeMap<String, [f64; 4]>;

fn summary_means(text: &str) -> Means {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let get = |name: &str| rec[col(name)].parse::<f64>().unwrap_or(f64::NAN);
            (
                rec[col("method")].to_string(),
                [
                    get("balanced_accuracy_mean"),
                    get("selection_delta_mean"),
                    get("abs_selection_delta_mean"),
                    get("mse_selected_mean"),
                ],
            )
        })
        .collect()
}

fn run_binary_suite(dir: &Path, name: &str, threads: &str) -> (String, String, f64) {
    let cfg = write_file(dir, &format!("{name}.toml"), &desk_config(false));
    let out = dir.join(name);
    let started = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_berm"))
        .args(["suite", "run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", threads, "-q"])
        .status()
        .unwrap();
    let secs = started.elapsed().as_secs_f64();
    assert!(status.success(), "suite run failed");
    (
        fs::read_to_string(out.join("results.csv")).unwrap(),
        fs::read_to_string(out.join("summary.csv")).unwrap(),
        secs,
    )
}

fn fmt_means(m: &Means, k: usize) -> String {
    ["berm", "lasso", "enet", "alasso", "aenet"].map(|t| format!("{t} {:.4}", m[t][k])).join(", ")
}

fn case_fixture() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    write_file(dir.path(), "linear.csv", &linear_fixture(150, 21));
    let cfg = match parse_config_str(
        "[case]\ndata_path = \"linear.csv\"\nresponse_column = \"y\"\nid_column = \"id\"\ngroup_column = \"group\"\nfit_group = \"CTR\"\noutput_dir = \"linear\"\n",
        dir.path(),
    )
    .unwrap()
    {
        Config::Case(c) => c,
        Config::Suite(_) => unreachable!(),
    };
    let out = run_case_study(&cfg).unwrap();
    let names: Vec<&str> = out.selected.iter().map(|s| s.name.as_str()).collect();
    let recovered = names == TRUE_FEATURES;

    let mut nonsignificant = 0;
    for s in 0..NULL_SEEDS {
        let data = format!("null{s}.csv");
        write_file(dir.path(), &data, &null_group_fixture(500 + s));
        let cfg = match parse_config_str(
            &format!(
                "[case]\ndata_path = \"{data}\"\nresponse_column = \"age\"\ngroup_column = \"group\"\nfit_group = \"CTR\"\neval_groups = [\"T1D\"]\nage_threshold = 45\nseed = {s}\noutput_dir = \"null{s}\"\n"
            ),
            dir.path(),
        )
        .unwrap()
        {
            Config::Case(c) => c,
            Config::Suite(_) => unreachable!(),
        };
        let res = run_case_study(&cfg).unwrap();
        if res.comparisons[0].test.is_some_and(|t| t.p_value > 0.05) {
            nonsignificant += 1;
        }
    }
    verdict(
        "case-study fixture",
        out.test_r2 > CASE_R2 && recovered && nonsignificant >= NULL_MIN_NONSIGNIFICANT,
        format!(
            "test R² {:.4}, selected {names:?}, null comparison p > 0.05 in {nonsignificant}/{NULL_SEEDS} seeds",
            out.test_r2
        ),
    )
}

#[test]
fn acceptance() {
    let mut verdicts = vec![solver_oracle(), relevance_logic(), generator_fidelity()];

    let dir = tempfile::tempdir().unwrap();
    let (results_a, summary_a, secs_a) = run_binary_suite(dir.path(), "threads1", "1");
    let (results_b, _, secs_b) = run_binary_suite(dir.path(), "threads4", "4");
    let complex = summary_means(&summary_a);

    let simple_cfg = match parse_config_str(&desk_config(true), dir.path()).unwrap() {
        Config::Suite(s) => s,
        Config::Case(_) => unreachable!(),
    };
    let simple_outcome = evaluate_suite(&simple_cfg, &|_, _| {}).unwrap();
    let simple: Means = simple_outcome
        .summary
        .iter()
        .map(|s| {
            (
                s.method.to_string(),
                [s.mean("balanced_accuracy"), s.mean("selection_delta"), s.mean("abs_selection_delta"), s.mean("mse_selected")],
            )
        })
        .collect();

    let ba = |m: &Means, t: &str| m[t][0];
    let best = complex.iter().max_by(|a, b| a.1[0].total_cmp(&b.1[0])).unwrap().0.clone();
    verdicts.push(verdict(
        "desk-scale simulation trend",
        ba(&complex, "berm") >= ba(&complex, "lasso") + DESK_MARGIN
            && ba(&complex, "berm") >= ba(&complex, "enet") + DESK_MARGIN
            && best == "berm"
            && secs_a < DESK_SECONDS,
        format!("balanced accuracy {}; {DESK_REPLICATES} replicates in {secs_a:.0} s", fmt_means(&complex, 0)),
    ));

    let berm_abs = complex["berm"][2];
    verdicts.push(verdict(
        "over-selection trend",
        ["lasso", "enet"].iter().all(|t| complex[*t][1] > 0.0 && complex[*t][1] > berm_abs),
        format!(
            "mean selection delta lasso {:.2}, enet {:.2}; BERM mean |delta| {berm_abs:.2}",
            complex["lasso"][1], complex["enet"][1]
        ),
    ));

    let (mse_berm, mse_enet) = (complex["berm"][3], complex["enet"][3]);
    verdicts.push(verdict(
        "MSE comparability",
        mse_berm <= MSE_RATIO * mse_enet,
        format!("mse_selected BERM {mse_berm:.4}, enet {mse_enet:.4}, ratio {:.3}", mse_berm / mse_enet),
    ));

    let gaps: Vec<(String, f64)> = complex.keys().map(|t| (t.clone(), ba(&simple, t) - ba(&complex, t))).collect();
    verdicts.push(verdict(
        "simple-vs-complex gap",
        gaps.iter().all(|(_, g)| *g >= 0.0) && gaps.len() == 5,
        format!(
            "simple minus complex balanced accuracy: {}",
            gaps.iter().map(|(t, g)| format!("{t} {g:+.4}")).collect::<Vec<_>>().join(", ")
        ),
    ));

    verdicts.push(verdict(
        "determinism",
        results_a == results_b && results_a.lines().count() == 1 + 5 * DESK_REPLICATES,
        format!(
            "results.csv with --threads 1 and --threads 4: {} bytes each, identical = {} ({secs_b:.0} s second run)",
            results_a.len(),
            results_a == results_b
        ),
    ));

    verdicts.push(case_fixture());

    let snap = audit::snapshot();
    verdicts.insert(
        1,
        verdict(
            "KKT certification",
            snap.checked > 0 && snap.failed == 0 && snap.worst_violation <= KKT_TOL,
            format!(
                "{} fits checked in process, {} above {KKT_TOL:e}, worst violation {:.2e}",
                snap.checked, snap.failed, snap.worst_violation
            ),
        ),
    );

    println!();
    for v in &verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
    }
    let failed: Vec<&str> = verdicts.iter().filter(|v| !v.pass).map(|v| v.name).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
