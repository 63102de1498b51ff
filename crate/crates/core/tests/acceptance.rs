//! Acceptance run: one PASS/FAIL line per criterion, with the failing
//! sub-checks listed underneath.
//!
//! A criterion that cannot be met with the stated inputs is kept at its
//! stated tolerance and listed in `EXPECTED_FAILURES`. It still prints FAIL;
//! the process exits nonzero only for failures outside that list, or when a
//! listed check starts passing and the list needs updating.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use carfollow::harness::{min_beta_for_compliance, replicate, Bundle, Experiment};
use carfollow::models::{acceleration_bound, model_next};
use carfollow::oracles::{gipps_speed_sup_error, idm_linearize, GippsBrakingSolution};
use carfollow::phase::{classify, congested_wave_speed, fd_from_simulation, fundamental_diagram, linspace, memberships, PhaseLabel};
use carfollow::principles::safe_stopping_distance;
use carfollow::{ModelId, ModelParams, PairState, StepSize};
use tempfile::TempDir;

/// (criterion, sub-check) pairs known to fail. With β = 2 a 30 m/s follower
/// stops 15 s after it starts braking; the 18 s figure belongs to β = 1.67.
const EXPECTED_FAILURES: &[(u32, &str)] = &[(4, "halt-after-onset")];

struct Check {
    name: String,
    pass: bool,
    detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check { name: name.into(), pass, detail }
    }

    fn within(name: &str, observed: f64, target: f64, tol: f64) -> Self {
        Check::new(name, (observed - target).abs() <= tol, format!("{observed} (want {target} ± {tol})"))
    }

    fn below(name: &str, observed: f64, bound: f64) -> Self {
        Check::new(name, observed < bound, format!("{observed} (want < {bound})"))
    }

    fn at_most(name: &str, observed: f64, bound: f64) -> Self {
        Check::new(name, observed <= bound, format!("{observed} (want <= {bound})"))
    }

    fn above(name: &str, observed: f64, bound: f64) -> Self {
        Check::new(name, observed > bound, format!("{observed} (want > {bound})"))
    }

    fn at_least(name: &str, observed: f64, bound: f64) -> Self {
        Check::new(name, observed >= bound, format!("{observed} (want >= {bound})"))
    }

    fn runtime(limit: Duration, took: Duration) -> Self {
        Check::new("runtime", took < limit, format!("{took:?} (want < {limit:?})"))
    }

    fn error(name: &str, e: impl std::fmt::Display) -> Self {
        Check::new(name, false, format!("error: {e}"))
    }
}

fn observed(bundle: &Bundle, id: &str) -> f64 {
    bundle.finding(id).map_or(f64::NAN, |f| f.observed)
}

fn eps(e: f64) -> StepSize {
    StepSize::new(e).unwrap()
}

/// Replications are written once here and reused by the determinism check.
struct Replications {
    first: TempDir,
    bundles: BTreeMap<&'static str, (Bundle, Duration)>,
    errors: Vec<Check>,
}

fn replicate_all() -> Replications {
    let first = TempDir::new().expect("temp dir");
    let mut bundles = BTreeMap::new();
    let mut errors = Vec::new();
    for exp in Experiment::ALL {
        let start = Instant::now();
        match replicate(exp, Some(first.path()), None) {
            Ok(b) => {
                bundles.insert(exp.name(), (b, start.elapsed()));
            }
            Err(e) => errors.push(Check::error(exp.name(), e)),
        }
    }
    Replications { first, bundles, errors }
}

fn bundle_checks(reps: &Replications, exp: Experiment, limit: Duration, f: impl FnOnce(&Bundle) -> Vec<Check>) -> Vec<Check> {
    match reps.bundles.get(exp.name()) {
        Some((b, took)) => {
            let mut checks = f(b);
            checks.push(Check::runtime(limit, *took));
            checks
        }
        None => vec![Check::new(exp.name(), false, "replication failed".into())],
    }
}

fn idm_eigenvalues() -> Vec<Check> {
    let params = ModelParams::default();
    let start = Instant::now();
    let lin = match idm_linearize(&params) {
        Ok(l) => l,
        Err(e) => return vec![Check::error("linearize", e)],
    };
    let first_call = start.elapsed();
    let reps = 1000;
    let start = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(idm_linearize(std::hint::black_box(&params)).ok());
    }
    let per_call = start.elapsed() / reps;
    let (l1, l2) = (lin.eigenvalues[0], lin.eigenvalues[1]);
    vec![
        Check::within("real part", l1.re, -0.584, 1e-3),
        Check::within("imaginary part", l1.im.abs(), 0.624, 1e-3),
        Check::new("conjugate pair", l2 == l1.conj(), format!("{l1}, {l2}")),
        Check::runtime(Duration::from_millis(1), first_call.max(per_call)),
    ]
}

fn idm_replication(reps: &Replications) -> Vec<Check> {
    bundle_checks(reps, Experiment::IdmFig2, Duration::from_secs(10), |b| {
        let last = b.trajectory.last().state;
        vec![
            Check::above("onset spacing", observed(b, "onset-spacing"), 1000.0),
            Check::below("min speed", observed(b, "min-speed"), 0.0),
            Check::at_most("terminal |v|", last.follower.v.abs(), 0.01),
            Check::at_most("terminal |z - 7|", (last.spacing - 7.0).abs(), 0.05),
        ]
    })
}

fn ssd_comparison(reps: &Replications) -> Vec<Check> {
    let ssd = match safe_stopping_distance(33.33, &ModelParams::default()) {
        Ok(s) => s,
        Err(e) => return vec![Check::error("ssd", e)],
    };
    let mut checks = vec![Check::within("ssd(33.33)", ssd, 366.0, 1.0)];
    match reps.bundles.get(Experiment::IdmFig2.name()) {
        Some((b, _)) => checks.push(Check::at_least("onset / ssd", observed(b, "onset-spacing") / ssd, 2.5)),
        None => checks.push(Check::new("onset / ssd", false, "idm replication failed".into())),
    }
    checks
}

fn bda_collision(reps: &Replications) -> Vec<Check> {
    bundle_checks(reps, Experiment::BdaNewellCollision, Duration::from_secs(60), |b| {
        vec![
            Check::within("cruise-end-speed", observed(b, "cruise-end-speed"), 30.0, 1e-9),
            Check::within("cruise-end-spacing", observed(b, "cruise-end-spacing"), 55.0, 0.5),
            Check::within("cruise-end-time", observed(b, "cruise-end-time"), 11.5, 0.2),
            Check::below("min-spacing-negative", observed(b, "min-spacing-negative"), 0.0),
            Check::at_most("min-spacing-bound", observed(b, "min-spacing-bound"), -150.0),
            Check::within("halt-after-onset", observed(b, "halt-after-onset"), 18.0, 0.5),
            Check::within("terminal-spacing", observed(b, "terminal-spacing"), 7.0, 0.1),
        ]
    })
}

fn beta_threshold() -> Vec<Check> {
    let params = ModelParams::default();
    match min_beta_for_compliance(&params, 30.0, eps(1e-3)) {
        Ok(t) => {
            let closed = 30.0 / (2.0 * params.tau);
            vec![
                Check::within("threshold", t.threshold, 9.375, 0.1),
                Check::at_most("relative gap to v0/(2 tau)", (t.threshold - closed).abs() / closed, 0.01),
            ]
        }
        Err(e) => vec![Check::error("search", e)],
    }
}

fn ba_newell(reps: &Replications) -> Vec<Check> {
    bundle_checks(reps, Experiment::BaNewellSlvp, Duration::from_secs(60), |b| {
        let mut checks = vec![Check::within("max deceleration", observed(b, "max-deceleration"), 18.75, 0.1)];
        let rates = b
            .report
            .findings
            .iter()
            .filter(|f| f.id.starts_with("grid-pass-rate-") && f.asserted)
            .collect::<Vec<_>>();
        checks.push(Check::new("grid principles present", rates.len() == 5, format!("{} principles", rates.len())));
        for f in rates {
            checks.push(Check::within(&f.id, f.observed, 1.0, 0.0));
        }
        match &b.compliance {
            Some(c) => checks.push(Check::new("grid size", c.cells.len() == 400, format!("{} cells", c.cells.len()))),
            None => checks.push(Check::new("grid size", false, "no compliance report".into())),
        }
        checks
    })
}

fn gipps_replication(reps: &Replications) -> Vec<Check> {
    let params = ModelParams::highway();
    bundle_checks(reps, Experiment::GippsFig2, Duration::from_secs(60), |b| {
        vec![
            Check::within("peak speed", observed(b, "peak-speed"), 30.0, 0.3),
            Check::within("stopping distance", observed(b, "stopping-distance"), 301.0, 3.0),
            Check::within("min acceleration", observed(b, "min-acceleration"), -1.6, 0.1),
            Check::at_least("min speed", observed(b, "min-speed"), -1e-9),
            Check::at_least("acceleration floor", observed(b, "acceleration-floor"), -params.beta - 1e-6),
            Check::at_most("sup |v - v(z)| at eps 1e-4", observed(b, "closed-form-speed-error"), 1e-2),
        ]
    })
}

fn oracle_identities() -> Vec<Check> {
    let sol = match GippsBrakingSolution::new(ModelParams::default(), 30.0) {
        Ok(s) => s,
        Err(e) => return vec![Check::error("solution", e)],
    };
    let zeta = sol.params.zeta;
    let v = |z: f64| sol.speed_of_spacing(z).unwrap();
    // the spacing shrinks at the follower's speed, so a = dv/dt = −v·dv/dz
    let mut worst = 0.0f64;
    for i in 1..=50 {
        let z = zeta + (sol.z0 - zeta) * i as f64 / 50.0;
        let h = 1e-2 * (z - zeta).min(1.0);
        let central = |h: f64| (v(z + h) - v(z - h)) / (2.0 * h);
        let dvdz = (4.0 * central(h / 2.0) - central(h)) / 3.0;
        let a = sol.accel_of_spacing(z).unwrap();
        worst = worst.max((a + v(z) * dvdz).abs() / a.abs());
    }
    let mut checks = vec![
        Check::at_most("a = -v dv/dz, relative", worst, 1e-8),
        match sol.time_of_spacing(sol.z0) {
            Ok(t) => Check::new("t(z0)", t == 0.0, format!("{t} (want exactly 0)")),
            Err(e) => Check::error("t(z0)", e),
        },
    ];
    let steps = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
    let errors: Result<Vec<f64>, _> = steps.iter().map(|&e| gipps_speed_sup_error(&sol, eps(e), zeta)).collect();
    match errors {
        Ok(errors) => {
            for (k, w) in errors.windows(2).enumerate() {
                checks.push(Check::within(&format!("error ratio {}", k + 1), w[1] / w[0], 0.5, 0.1));
            }
        }
        Err(e) => checks.push(Check::error("convergence", e)),
    }
    checks
}

fn fundamental_diagrams() -> Vec<Check> {
    let params = ModelParams::default();
    let kappa = params.jam_density();
    let densities: Vec<f64> = (1..=20).map(|i| kappa * i as f64 / 20.0).collect();
    let mut checks = Vec::new();
    for model in [ModelId::Newell, ModelId::BANewell, ModelId::BDANewell, ModelId::GippsSimplified] {
        let analytic = match fundamental_diagram(model, &params, &densities) {
            Ok(a) => a,
            Err(e) => {
                checks.push(Check::error(&format!("{model} analytic"), e));
                continue;
            }
        };
        let mut worst = 0.0f64;
        let mut failure = None;
        for pt in &analytic {
            match fd_from_simulation(model, &params, pt.k) {
                Ok(sim) => worst = worst.max((sim.v - pt.v).abs()),
                Err(e) => failure = Some(e),
            }
        }
        checks.push(match failure {
            Some(e) => Check::error(&format!("{model} simulated"), e),
            None => Check::at_most(&format!("{model} max |v_sim - v_fd|"), worst, 0.01),
        });
    }
    for (model, target) in [(ModelId::Newell, 4.375), (ModelId::GippsSimplified, 7.0)] {
        match congested_wave_speed(model, &params) {
            Ok(w) => checks.push(Check::within(&format!("{model} wave speed"), w, target, 1e-6)),
            Err(e) => checks.push(Check::error(&format!("{model} wave speed"), e)),
        }
    }
    checks
}

/// The label a cell must carry given the acceleration the model produced.
fn label_from_accel(model: ModelId, a: f64, v: f64, params: &ModelParams) -> PhaseLabel {
    if a == 0.0 {
        PhaseLabel::EquilibriumCruising
    } else if a == acceleration_bound(v, params) {
        PhaseLabel::BoundedAcceleration
    } else if model == ModelId::BDANewell && a == -params.beta {
        PhaseLabel::BoundedDeceleration
    } else if a > 0.0 {
        PhaseLabel::EquilibriumAcceleration
    } else {
        PhaseLabel::EquilibriumDeceleration
    }
}

fn phase_partition() -> Vec<Check> {
    let params = ModelParams::default();
    let speeds = linspace(0.0, 40.0, 200);
    let spacings = linspace(0.0, 400.0, 200);
    let mut checks = Vec::new();
    for model in [ModelId::BANewell, ModelId::BDANewell] {
        let allowed = PhaseLabel::labels_for(model);
        for e in [1e-3, 0.1, 1.0] {
            let step = eps(e);
            let (mut uncovered, mut outside, mut inconsistent) = (0, 0, 0);
            let mut seen = Vec::new();
            for &z in &spacings {
                for &v in &speeds {
                    let p = PairState::slvp(v, z, params.zeta);
                    let found = memberships(model, &p, &params, step);
                    let label = classify(model, &p, &params, step);
                    if found.is_empty() || !found.contains(&label) {
                        uncovered += 1;
                    }
                    if !allowed.contains(&label) {
                        outside += 1;
                    }
                    match model_next(model, &p, &params, step) {
                        Ok(out) if label_from_accel(model, out.a, v, &params) == label => {}
                        _ => inconsistent += 1,
                    }
                    if !seen.contains(&label) {
                        seen.push(label);
                    }
                }
            }
            let name = format!("{model} eps {e}");
            checks.push(Check::new(
                &name,
                uncovered == 0 && outside == 0 && inconsistent == 0,
                format!(
                    "{uncovered} uncovered, {outside} foreign labels, {inconsistent} label/acceleration mismatches, {} of {} labels seen",
                    seen.len(),
                    allowed.len()
                ),
            ));
        }
    }
    checks
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).into_iter().flatten().flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, fs::read(&path).unwrap_or_default());
            }
        }
    }
    files
}

fn determinism(reps: &Replications) -> Vec<Check> {
    let second = TempDir::new().expect("temp dir");
    let mut checks = Vec::new();
    for exp in Experiment::ALL {
        if let Err(e) = replicate(exp, Some(second.path()), None) {
            checks.push(Check::error(exp.name(), e));
        }
    }
    let a = read_tree(reps.first.path());
    let b = read_tree(second.path());
    for exp in Experiment::ALL {
        let prefix = format!("{}/", exp.name());
        let names: Vec<&String> = a.keys().filter(|k| k.starts_with(&prefix)).collect();
        let same = !names.is_empty()
            && names.len() == b.keys().filter(|k| k.starts_with(&prefix)).count()
            && names.iter().all(|k| b.get(*k) == a.get(*k));
        checks.push(Check::new(exp.name(), same, format!("{} files compared", names.len())));
    }
    checks
}

fn main() -> ExitCode {
    let start = Instant::now();
    let reps = replicate_all();
    let criteria: Vec<(u32, &str, Vec<Check>)> = vec![
        (1, "IDM linearisation eigenvalues", idm_eigenvalues()),
        (2, "IDM stop from highway speed", idm_replication(&reps)),
        (3, "safe stopping distance vs IDM onset", ssd_comparison(&reps)),
        (4, "bounded Newell collision with beta = 2", bda_collision(&reps)),
        (5, "smallest collision-free deceleration bound", beta_threshold()),
        (6, "bounded-acceleration Newell stop and compliant grid", ba_newell(&reps)),
        (7, "Gipps stop from highway speed", gipps_replication(&reps)),
        (8, "Gipps closed-form identities and convergence", oracle_identities()),
        (9, "fundamental diagrams and wave speeds", fundamental_diagrams()),
        (10, "phase partition of the (v, z) plane", phase_partition()),
        (11, "replication bundles are reproducible", determinism(&reps)),
    ];

    let mut unexpected = 0;
    for check in &reps.errors {
        println!("FAIL  replicate {}: {}", check.name, check.detail);
        unexpected += 1;
    }
    let mut failed = 0;
    for (id, title, checks) in &criteria {
        let pass = checks.iter().all(|c| c.pass);
        let known: Vec<&str> = EXPECTED_FAILURES.iter().filter(|(n, _)| n == id).map(|(_, c)| *c).collect();
        let note = if !pass && checks.iter().filter(|c| !c.pass).all(|c| known.contains(&c.name.as_str())) {
            "  [expected failure]"
        } else {
            ""
        };
        println!("{}  {id:>2}. {title}{note}", if pass { "PASS" } else { "FAIL" });
        for c in checks {
            let tag = if c.pass { "ok" } else { "FAILED" };
            if !c.pass || std::env::var_os("ACCEPTANCE_VERBOSE").is_some() {
                println!("        {}: {} {tag}", c.name, c.detail);
            }
            let listed = known.contains(&c.name.as_str());
            if !c.pass && !listed {
                unexpected += 1;
            }
            if c.pass && listed {
                println!("        {} passes but is listed as an expected failure", c.name);
                unexpected += 1;
            }
        }
        if !pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria pass ({failed} failing, {unexpected} unexpected) in {:.1?}",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
