//! Acceptance gate. Runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line each; exits non-zero if any criterion fails.

use std::path::PathBuf;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use platoon_san::analytic::{
    balance_residual, interval_average_distribution, mean_time_to_failure, steady_state, transient_distribution,
};
use platoon_san::measures::{evaluate, AnalyticEvaluator, EvalSettings, MeasureKind, MeasureSpec, ANALYTIC, SIMULATION};
use platoon_san::metamodel::{allowed_structures, validate_platoon, EnvironmentArea, Role, SocialStructure};
use platoon_san::pipeline::{generate, run_sweep};
use platoon_san::san::patterns::single_failure;
use platoon_san::san::{Cmp, Condition, Guard, PlaceId};
use platoon_san::scenario::{load_scenario_file, Scenario, VEHICLE_COUNT_PATH};
use platoon_san::simulation::{estimate_measure, SimConfig};
use platoon_san::statespace::CtmcModel;

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn reference() -> Scenario {
    load_scenario_file(&scenario_path("urban_convoy.toml")).expect("reference scenario loads")
}

/// Reference convoy with the given disturbance rates.
fn urban(ext: f64, ext_mttr: f64, mech: f64, mech_mttr: f64) -> Scenario {
    let mut s = reference();
    s.disturbances.external_event_rate = ext;
    s.disturbances.external_mttr = ext_mttr;
    s.disturbances.mech_failure_rate_per_vehicle = mech;
    s.disturbances.mech_mttr = mech_mttr;
    s
}

#[derive(Default)]
struct Checks(Vec<(bool, String)>);

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.0.push((ok, what.into()));
    }

    fn close(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol;
        self.check(ok, format!("{label}: {got} vs {want} (|diff| {:.3e}, tol {tol:e})", (got - want).abs()));
    }

    fn within_ci(&mut self, label: &str, sim: f64, half: f64, analytic: f64) {
        let ok = (sim - analytic).abs() <= 3.0 * half;
        self.check(
            ok,
            format!("{label}: sim {sim} ± {half:.3e} vs analytic {analytic} (|diff| = {:.2} CI)", (sim - analytic).abs() / half),
        );
    }
}

fn steady(s: &Scenario) -> f64 {
    let g = generate(s).unwrap();
    evaluate(&g, &MeasureSpec::availability(MeasureKind::SteadyState), ANALYTIC, &EvalSettings::default())
        .unwrap()
        .value
}

fn anchor() -> Checks {
    let mut c = Checks::default();
    c.close("A(MTTF=1, MTTR=1)", steady(&urban(1.0, 1.0, 0.0, 1.0)), 0.5, 1e-10);
    c
}

fn mttr_trend() -> Checks {
    let mut c = Checks::default();
    let report = run_sweep(&load_scenario_file(&scenario_path("mttr_sweep.toml")).unwrap()).unwrap();
    c.check(report.rows.len() == 25, format!("{} rows", report.rows.len()));
    let values: Vec<f64> = report.rows.iter().map(|r| r.value.unwrap_or(f64::NAN)).collect();
    c.check(values.windows(2).all(|w| w[1] < w[0]), "availability strictly decreasing");
    let worst = report
        .rows
        .iter()
        .map(|r| (r.value.unwrap_or(f64::NAN) - 1.0 / (1.0 + r.sweep_value.unwrap())).abs())
        .fold(0.0, f64::max);
    c.check(worst <= 1e-10, format!("max |A - MTTF/(MTTF+MTTR)| = {worst:.3e}"));
    c
}

fn case_study_shape() -> Checks {
    let mut c = Checks::default();
    let s = reference();
    let g = generate(&s).unwrap();
    let ctmc = AnalyticEvaluator::ctmc(&g, s.state_limit).unwrap();
    let transitions = ctmc.graph().transitions().len();
    c.check(g.san.places.len() == 3, format!("{} places (want 3)", g.san.places.len()));
    c.check(g.san.activities.len() == 4, format!("{} activities (want 4)", g.san.activities.len()));
    c.check(ctmc.len() == 8, format!("{} states (want 8)", ctmc.len()));
    c.check(transitions == 18, format!("{transitions} transitions (want 18)"));
    c.check(ctmc.up_states().len() == 1, format!("{} up states (want 1)", ctmc.up_states().len()));
    c
}

fn backend_agreement() -> Checks {
    let mut c = Checks::default();
    let g = generate(&urban(1.0, 1.0, 0.1, 1.0)).unwrap();
    let settings = EvalSettings {
        sim: SimConfig { replications: 100_000, seed: 42, horizon: Some(1000.0), ..SimConfig::default() },
        ..EvalSettings::default()
    };
    let ctmc = AnalyticEvaluator::ctmc(&g, settings.state_limit).unwrap();
    let exact_avg = interval_average_distribution(&ctmc, 1000.0, 1e-12).unwrap().up_probability(&ctmc);
    for (label, kind) in [
        ("steady state", MeasureKind::SteadyState),
        ("A(1)", MeasureKind::InstantOfTime { t: 1.0 }),
        ("A(10)", MeasureKind::InstantOfTime { t: 10.0 }),
    ] {
        let spec = MeasureSpec::availability(kind);
        let a = evaluate(&g, &spec, ANALYTIC, &settings).unwrap();
        let s = evaluate(&g, &spec, SIMULATION, &settings).unwrap();
        c.within_ci(label, s.value, s.error_bound, a.value);
        if kind == MeasureKind::SteadyState {
            println!(
                "    note: analytic interval average over T = 1000 is {exact_avg} ({:.2} CI from the estimate)",
                (s.value - exact_avg).abs() / s.error_bound
            );
        }
    }
    c
}

/// `exp(Q t)` by scaling and squaring a degree-30 Taylor polynomial; dense
/// and independent of the uniformization code.
fn expm(q: &[Vec<f64>], t: f64) -> Vec<Vec<f64>> {
    let n = q.len();
    let norm = q.iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max) * t;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = t / 2f64.powi(squarings);
    let a: Vec<Vec<f64>> = q.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
    let mul = |x: &[Vec<f64>], y: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| x[i][k] * y[k][j]).sum()).collect()).collect()
    };
    let identity: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut sum = identity.clone();
    let mut term = identity;
    for k in 1..=30 {
        term = mul(&term, &a).into_iter().map(|r| r.into_iter().map(|x| x / k as f64).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                sum[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        sum = mul(&sum, &sum);
    }
    sum
}

fn oracle_equivalence() -> Checks {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_transient, mut worst_residual) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(1..=10usize);
        let mut edges = Vec::new();
        for i in 0..n {
            if n > 1 {
                edges.push((i, (i + 1) % n, rng.random_range(0.1..5.0)));
            }
            for j in 0..n {
                if i != j && j != (i + 1) % n && rng.random_bool(0.3) {
                    edges.push((i, j, rng.random_range(0.01..10.0)));
                }
            }
        }
        let init = rng.random_range(0..n);
        let ctmc = CtmcModel::from_rates(n, &edges, init, &[init]).unwrap();
        let mut q = vec![vec![0.0; n]; n];
        for &(i, j, r) in &edges {
            q[i][j] += r;
            q[i][i] -= r;
        }
        for t in [0.0, rng.random_range(0.01..1.0), rng.random_range(1.0..10.0)] {
            let p = transient_distribution(&ctmc, t, 1e-9).unwrap();
            let e = expm(&q, t);
            for (j, pj) in p.probabilities().iter().enumerate() {
                worst_transient = worst_transient.max((pj - e[init][j]).abs());
            }
        }
        let pi = steady_state(&ctmc).unwrap();
        worst_residual = worst_residual.max(balance_residual(&ctmc, &pi));
    }
    c.check(worst_transient <= 1e-7, format!("max |uniformization - expm| = {worst_transient:.3e}"));
    c.check(worst_residual <= 1e-10, format!("max ‖πQ‖∞ = {worst_residual:.3e}"));
    c
}

fn mttf_oracles() -> Checks {
    let mut c = Checks::default();
    let sim = SimConfig { replications: 100_000, seed: 42, ..SimConfig::default() };
    let single = CtmcModel::from_rates(2, &[(0, 1, 2.0)], 0, &[0]).unwrap();
    let exact = mean_time_to_failure(&single).unwrap();
    c.check(exact == 0.5, format!("single state, rate 2: {exact} (want 0.5 exactly)"));
    let up = Guard::from(Condition::new(PlaceId(0), Cmp::Ge, 1));
    let est = estimate_measure(&single_failure(2.0), &up, &MeasureSpec::availability(MeasureKind::Mttf), &sim).unwrap();
    c.within_ci("single state, simulated", est.mean, est.ci_half_width, 0.5);

    let lambda = 0.1;
    for n in [2u32, 3, 4] {
        let s = urban(0.0, 1.0, lambda, 1.0).with_parameter(VEHICLE_COUNT_PATH, f64::from(n)).unwrap();
        let g = generate(&s).unwrap();
        let spec = MeasureSpec::availability(MeasureKind::Mttf);
        let settings = EvalSettings { sim: sim.clone(), ..EvalSettings::default() };
        let want = 1.0 / (f64::from(n) * lambda);
        let a = evaluate(&g, &spec, ANALYTIC, &settings).unwrap();
        c.close(&format!("n = {n}, analytic"), a.value, want, 1e-10);
        let s = evaluate(&g, &spec, SIMULATION, &settings).unwrap();
        c.within_ci(&format!("n = {n}, simulated"), s.value, s.error_bound, want);
    }
    c
}

fn metamodel_gates() -> Checks {
    use SocialStructure::*;
    let mut c = Checks::default();
    let table = [
        (EnvironmentArea::Urban, vec![Congregation, Coalition]),
        (EnvironmentArea::Agricultural, vec![Congregation, Team, Coalition]),
        (EnvironmentArea::Military, vec![Team, Congregation, Coalition]),
    ];
    for (area, structures) in table {
        let want = structures.into_iter().collect();
        c.check(allowed_structures(area) == want, format!("{area:?} structures {:?}", allowed_structures(area)));
    }

    let valid = reference().platoon;
    let report = validate_platoon(&valid);
    c.check(report.is_empty(), format!("reference convoy report: {:?}", report.codes()));

    let mut double = valid.clone();
    let mut second = double.entities[0].clone();
    second.name = "V_Leader_2".into();
    double.entities.push(second);
    double.system.vehicle_count += 1;
    let codes = validate_platoon(&double).codes();
    c.check(codes == vec!["LEADER_CARDINALITY"], format!("double leader report: {codes:?}"));
    c.check(double.entities.iter().filter(|e| e.role == Role::Leader).count() == 2, "fixture has two leaders");

    let mut team = valid;
    team.structure = Team;
    let codes = validate_platoon(&team).codes();
    c.check(codes == vec!["STRUCTURE_AREA_MISMATCH"], format!("urban team report: {codes:?}"));
    c
}

fn run_cli(seed: u64) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_platoon-san"))
        .arg("eval")
        .arg(scenario_path("urban_convoy.toml"))
        .args(["--seed", &seed.to_string()])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn determinism() -> Checks {
    let mut c = Checks::default();
    let (a, b, other) = (run_cli(42), run_cli(42), run_cli(7));
    c.check(a == b, "identical seeds give byte-identical CSV");
    let rows = |s: &str, method: &str| -> Vec<String> {
        s.lines().filter(|l| l.split(',').nth(3) == Some(method)).map(str::to_owned).collect()
    };
    c.check(rows(&a, ANALYTIC) == rows(&other, ANALYTIC), "analytic rows ignore the seed");
    let (sa, so) = (rows(&a, SIMULATION), rows(&other, SIMULATION));
    c.check(!sa.is_empty() && sa.iter().zip(&so).all(|(x, y)| x != y), "every simulation row changes with the seed");
    c
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Checks, Option<Duration>);
    let criteria: [Criterion; 8] = [
        ("anchor availability at MTTR = MTTF", anchor, Some(Duration::from_secs(1))),
        ("MTTR sweep trend", mttr_trend, Some(Duration::from_secs(5))),
        ("case-study model shape", case_study_shape, Some(Duration::from_secs(1))),
        ("backend cross-validation", backend_agreement, Some(Duration::from_secs(60))),
        ("transient oracle equivalence", oracle_equivalence, Some(Duration::from_secs(30))),
        ("MTTF oracles", mttf_oracles, None),
        ("metamodel gates", metamodel_gates, None),
        ("end-to-end determinism", determinism, None),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut checks = match std::panic::catch_unwind(run) {
            Ok(c) => c,
            Err(_) => {
                let mut c = Checks::default();
                c.check(false, "panicked");
                c
            }
        };
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            checks.check(elapsed <= b, format!("runtime {elapsed:.2?} (budget {b:?})"));
        }
        let ok = checks.0.iter().all(|(ok, _)| *ok);
        failed += usize::from(!ok);
        println!("{} criterion {}: {name} ({elapsed:.2?})", if ok { "PASS" } else { "FAIL" }, i + 1);
        for (ok, what) in &checks.0 {
            println!("    {} {what}", if *ok { "ok  " } else { "FAIL" });
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
