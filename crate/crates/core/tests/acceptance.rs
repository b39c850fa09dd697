//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Run with `cargo test --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bilevel_bo::bilevel::{
    CellOutcome, ObjectiveColumn, RowSpec, compare_configs, improvement_rate, median, round_half_up,
};
use bilevel_bo::objective::{Builtin, BuiltinObjective, ObjectiveError, branin};
use bilevel_bo::report::{ReferenceRow, check_reference_rows};
use bilevel_bo::surrogate::FitOptions;
use bilevel_bo::{
    AcquisitionKind, Configuration, Evaluation, GpModel, Incumbent, Mode, Objective, StudyConfig, StudyResult,
    ei_score, run_study, ucb_score,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

struct Suite {
    failures: usize,
    studies: Vec<StudyResult>,
}

impl Suite {
    fn check(
        &mut self,
        id: u32,
        name: &str,
        limit: Option<Duration>,
        f: impl FnOnce(&mut Vec<StudyResult>) -> Outcome,
    ) {
        let start = Instant::now();
        let mut studies = Vec::new();
        let outcome = f(&mut studies);
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = outcome.pass && in_time;
        let budget = limit.map_or(String::new(), |l| format!(", limit {}s", l.as_secs()));
        println!(
            "criterion {id:>2} [{}] {name}: {} ({:.1}s{budget})",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            self.failures += 1;
        }
        self.studies.extend(studies);
    }
}

fn unit(config: &Configuration, name: &str) -> f64 {
    config.get(name).and_then(|v| v.as_f64()).expect("numeric parameter")
}

fn seeds() -> Vec<u64> {
    (0..20).collect()
}

fn study(problem: Builtin, cfg: &StudyConfig) -> StudyResult {
    let space = problem.default_space();
    let mut objective = BuiltinObjective::new(problem, space.clone()).unwrap();
    run_study(&mut objective, &space, cfg).unwrap()
}

fn ei_vs_monte_carlo() -> Outcome {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 1_000_000;
    let mut worst: f64 = 0.0;
    for std in [0.1, 1.0, 10.0] {
        for z in -3..=3 {
            let (best, mean) = (0.0, z as f64 * std);
            let closed = ei_score(mean, std, Incumbent(best)).unwrap();
            // Stratified sampling: one draw per equal-probability stratum.
            let mc = (0..n)
                .map(|i| {
                    let u = (i as f64 + rng.gen_range(f64::EPSILON..1.0)) / n as f64;
                    (mean + std * normal.inverse_cdf(u) - best).max(0.0)
                })
                .sum::<f64>()
                / n as f64;
            worst = worst.max((closed - mc).abs());
        }
    }
    Outcome { pass: worst <= 3e-3, detail: format!("max |EI - MC| = {worst:.2e} (tol 3e-3) over 21 grid points") }
}

fn ucb_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mismatches = (0..1000)
        .filter(|_| {
            let (m, s, k) = (rng.gen_range(-1e3..1e3), rng.gen_range(0.0..1e2), rng.gen_range(1e-3..1e2));
            ucb_score(m, s, k).unwrap() != m + k * s
        })
        .count();
    Outcome {
        pass: mismatches == 0,
        detail: format!("{mismatches} of 1000 random triples differ from mean + kappa*std"),
    }
}

fn gp_interpolation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let options = FitOptions { fixed_noise: Some(0.0), ..FitOptions::default() };
    let (mut worst_mean, mut worst_std): (f64, f64) = (0.0, 0.0);
    for case in 0..50 {
        let dim = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=10);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.r#gen()).collect()).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let gp = GpModel::fit_with(xs.clone(), ys.clone(), case, &options).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (m, s) = gp.predict(x).unwrap();
            worst_mean = worst_mean.max((m - y).abs());
            worst_std = worst_std.max(s);
        }
    }
    Outcome {
        pass: worst_mean <= 1e-6 && worst_std <= 1e-3,
        detail: format!(
            "max |mean - y| = {worst_mean:.1e} (tol 1e-6), max std = {worst_std:.1e} (tol 1e-3), 50 datasets"
        ),
    }
}

fn gp_regression() -> Outcome {
    let f = |x: f64| (std::f64::consts::TAU * x).sin();
    let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 19.0]).collect();
    let gp = GpModel::fit(xs.clone(), xs.iter().map(|x| f(x[0])).collect(), 0).unwrap();
    let worst = (0..50)
        .map(|i| (i as f64 + 0.5) / 50.0)
        .map(|x| (gp.predict(&[x]).unwrap().0 - f(x)).abs())
        .fold(0.0, f64::max);
    Outcome { pass: worst <= 0.1, detail: format!("max held-out error {worst:.4} (tol 0.1) on 50 points") }
}

fn bilevel_convergence(studies: &mut Vec<StudyResult>) -> Outcome {
    let mut dist = Vec::new();
    let mut best = Vec::new();
    for seed in seeds() {
        let cfg =
            StudyConfig { outer_budget: 15, inner_budget: 8, init_outer: 3, init_inner: 3, seed, ..Default::default() };
        let s = study(Builtin::QuadraticBilevel, &cfg);
        dist.push((unit(&s.best_config, "theta") - 0.5).abs());
        best.push(s.best_val);
        studies.push(s);
    }
    let (d, b) = (median(dist).unwrap(), median(best).unwrap());
    Outcome {
        pass: d <= 0.05 && b >= -0.01,
        detail: format!("median |theta - 0.5| = {d:.4} (tol 0.05), median best F = {b:.5} (min -0.01)"),
    }
}

fn misalignment(studies: &mut Vec<StudyResult>) -> Outcome {
    let base = StudyConfig { outer_budget: 15, inner_budget: 8, init_outer: 3, init_inner: 3, ..Default::default() };
    let paired = RowSpec::pairing(&base, AcquisitionKind::Ei, AcquisitionKind::ucb(2.0));
    let random = RowSpec::random(&base);
    let (mut bo_best, mut rnd_best, mut argmin_dist, mut phi_best) = (vec![], vec![], vec![], vec![]);
    for seed in seeds() {
        let bo = study(Builtin::Misaligned, &StudyConfig { seed, ..paired.config.clone() });
        let rnd = study(Builtin::Misaligned, &StudyConfig { seed, ..random.config.clone() });
        assert_eq!(bo.trials.len(), rnd.trials.len());
        let per_theta: Vec<f64> = bo
            .outer_trials
            .iter()
            .filter_map(|o| o.inner_argmin)
            .map(|i| (unit(&bo.trials[i].config, "phi") - 0.2).abs())
            .collect();
        argmin_dist.push(median(per_theta).unwrap());
        phi_best.push(unit(&bo.best_config, "phi"));
        bo_best.push(bo.best_val);
        rnd_best.push(rnd.best_val);
        studies.push(bo);
        studies.push(rnd);
    }
    let (b, r) = (median(bo_best).unwrap(), median(rnd_best).unwrap());
    let d = median(argmin_dist).unwrap();
    let phi = median(phi_best).unwrap();
    Outcome {
        pass: b >= r && d <= 0.1 && (phi - 0.8).abs() < (phi - 0.2).abs(),
        detail: format!(
            "median best val EI-UCB {b:.4} vs random {r:.4}; median |phi_argmin - 0.2| = {d:.4} (tol 0.1); \
             median phi of best trial = {phi:.3} (toward 0.8)"
        ),
    }
}

fn single_level(studies: &mut Vec<StudyResult>) -> Outcome {
    let optimum = -branin(std::f64::consts::PI, 2.275);
    let mut gaps = Vec::new();
    for seed in seeds() {
        let cfg = StudyConfig {
            mode: Mode::SingleLevel,
            outer_budget: 50,
            init_outer: 5,
            acq_outer: AcquisitionKind::Ei,
            seed,
            ..Default::default()
        };
        let s = study(Builtin::Branin, &cfg);
        gaps.push(optimum - s.best_val);
        studies.push(s);
    }
    let gap = median(gaps).unwrap();
    Outcome { pass: gap <= 0.5, detail: format!("median gap to -0.397887 = {gap:.4} (tol 0.5)") }
}

/// Returns the same evaluation for every configuration.
struct Constant(f64);

impl Objective for Constant {
    fn evaluate(&mut self, _: &Configuration) -> Result<Evaluation, ObjectiveError> {
        Ok(Evaluation::new(0.5, self.0))
    }

    fn reports_wall_time(&self) -> bool {
        false
    }
}

fn improvement_arithmetic(studies: &mut Vec<StudyResult>) -> Outcome {
    let direct = round_half_up(improvement_rate(76.82, 74.80).unwrap(), 2);

    let base = StudyConfig { outer_budget: 2, inner_budget: 2, init_outer: 1, init_inner: 1, ..Default::default() };
    let rows = vec![RowSpec::pairing(&base, AcquisitionKind::Ei, AcquisitionKind::ucb(2.0)), RowSpec::random(&base)];
    let columns = [ObjectiveColumn { label: "fixture".into(), space: Builtin::QuadraticBilevel.default_space() }];
    let table = compare_configs(&columns, &rows, &[0], 1, 1, |row, _, _| {
        let value = if row.config.mode == Mode::Random { 74.80 } else { 76.82 };
        Ok(Box::new(Constant(value)) as Box<dyn Objective>)
    });
    let references = check_reference_rows(
        &[
            ReferenceRow { label: "Fine-tune".into(), avg: 74.80, printed_rate: None },
            ReferenceRow { label: "single-level".into(), avg: 75.98, printed_rate: Some(1.18) },
            ReferenceRow { label: "EI-UCB".into(), avg: 76.82, printed_rate: Some(2.70) },
        ],
        "Fine-tune",
    );
    let text = table.render_text(&references);
    let row_line = text.lines().find(|l| l.starts_with("EI-UCB")).unwrap_or_default().to_owned();
    let footnote = text.lines().any(|l| l.contains("printed rate 1.18") && l.contains("gives 1.58"));
    studies.extend(table.cells.iter().filter_map(|c| match &c.outcome {
        CellOutcome::Ok(s) => Some(s.as_ref().clone()),
        CellOutcome::Failed(_) => None,
    }));
    Outcome {
        pass: direct == 2.70 && row_line.trim_end().ends_with("2.70*") && footnote,
        detail: format!(
            "improvement_rate(76.82, 74.80) -> {direct:.2}; table row `{}`; 1.18 vs 1.58 footnote {}",
            row_line.split_whitespace().collect::<Vec<_>>().join(" "),
            if footnote { "present" } else { "missing" }
        ),
    }
}

fn cli_determinism(studies: &mut Vec<StudyResult>) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml");
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_bilevel-bo"))
            .arg("run")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env_remove("BILEVEL_BO_OUT")
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome { pass: false, detail: format!("run {run} exited with {}", status.status) };
        }
        let read = |name: &str| std::fs::read(out.join(name)).unwrap();
        outputs.push((read("trials.csv"), read("study.json")));
    }
    let same = outputs[0] == outputs[1];
    let rows = outputs[0].0.iter().filter(|b| **b == b'\n').count() - 1;
    studies.push(StudyResult::from_json(std::str::from_utf8(&outputs[0].1).unwrap()).unwrap());
    Outcome {
        pass: same && rows == 400,
        detail: format!("two runs of the default config: {rows} trial rows, outputs byte-identical: {same}"),
    }
}

fn main() {
    let mut suite = Suite { failures: 0, studies: Vec::new() };
    let secs = Duration::from_secs;
    suite.check(1, "EI closed form vs Monte Carlo", Some(secs(30)), |_| ei_vs_monte_carlo());
    suite.check(2, "UCB exactness", None, |_| ucb_exact());
    suite.check(3, "GP interpolation", Some(secs(60)), |_| gp_interpolation());
    suite.check(4, "GP regression on sin(2 pi x)", None, |_| gp_regression());
    suite.check(5, "bilevel convergence on quadratic-bilevel", Some(secs(120)), bilevel_convergence);
    suite.check(6, "misalignment advantage", Some(secs(120)), misalignment);
    suite.check(7, "single-level Branin", Some(secs(120)), single_level);
    suite.check(8, "improvement-rate arithmetic", None, improvement_arithmetic);
    suite.check(9, "run determinism", None, cli_determinism);

    let studies = std::mem::take(&mut suite.studies);
    suite.check(10, "cumulative best is monotone", None, |_| {
        let series: Vec<&Vec<f64>> = studies.iter().map(|s| &s.cumulative_best).collect();
        let bad = series.iter().filter(|s| s.windows(2).any(|w| w[1] < w[0])).count();
        let tail_ok = studies.iter().all(|s| s.cumulative_best.last() == Some(&s.best_val));
        Outcome {
            pass: bad == 0 && tail_ok && !series.is_empty(),
            detail: format!(
                "{bad} decreasing series among {} studies; final value equals best_val: {tail_ok}",
                series.len()
            ),
        }
    });

    if suite.failures > 0 {
        println!("{} criterion(s) failed", suite.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
