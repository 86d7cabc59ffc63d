use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nvcavity::reproduce::{run_criterion, CriterionReport, CRITERIA};

const SEED: u64 = 1;

/// Criteria whose targets the model does not reach. They are still run and
/// reported as FAIL; any other failing criterion fails this target.
const DOCUMENTED_MISSES: [u8; 2] = [2, 6];

/// Full `reproduce-paper` wall-clock limit, seconds.
const SUITE_BUDGET_S: f64 = 600.0;

/// (criterion, quantity, lower, upper)
const BANDS: &[(u8, &str, f64, f64)] = &[
    (1, "planar mirror transmission %", 6.0, 10.0),
    (1, "planar mirror absorption %", 2.0, 6.0),
    (1, "fiber mirror transmission %", 0.3, 1.3),
    (1, "fiber mirror absorption %", 1.0, 5.0),
    (1, "|reflection phase| / pi", 0.67, 0.77),
    (2, "finesse 2 pi / total loss", 36.0, 46.0),
    (2, "outcoupling efficiency, fiber cavity", 0.48, 0.54),
    (2, "outcoupling efficiency, plane-plane cavity", 0.53, 0.59),
    (3, "waist at half-wave length, um", 1.05, 1.15),
    (3, "mode volume, cubic wavelengths", 0.9, 1.1),
    (3, "first-order air gap, nm", 255.0, 265.0),
    (4, "C_eff for V = 5, Q_c = 126, Q_em = 8", 0.11, 0.13),
    (4, "enhancement ratio at C_eff = 0.12", 0.35, 0.45),
    (4, "enhancement ratio at C_eff = 1.4", 4.3, 4.7),
    (4, "C_eff from lifetimes 34 / 11.2 ns", 1.95, 2.05),
    (5, "ideal-mirror rate error", 0.0, 1e-6),
    (5, "collection efficiency, glass, NA 0.75", 0.14, 0.18),
    (5, "nonradiative fraction at 60 nm spacer", 0.0, 0.10),
    (6, "oscillation period, nm", 335.0, 355.0),
    (6, "largest minimum-to-resonance offset, nm", 0.0, 20.0),
    (6, "largest |tau/tau_m - 1| beyond 5 um", 0.0, 0.05),
    (6, "deepest lifetime reduction", 0.15, 0.60),
    (7, "effective index at 70 nm", 1.80, 1.96),
    (7, "optimal half-width, nm", 55.0, 85.0),
    (7, "minimal mode radius, nm", 130.0, 190.0),
    (7, "hybrid volume, (lambda/n_eff)^3", 0.05, 0.09),
    (7, "hybrid C_eff", 6.0, 10.0),
    (7, "Brent vs bisection index gap", 0.0, 1e-9),
    (8, "g2 draws within 3 sigma", 20.0, 20.0),
    (8, "saturation draws within 3 sigma", 20.0, 20.0),
    (8, "mono lifetime draws within 3 sigma", 20.0, 20.0),
    (8, "stretched lifetime draws within 3 sigma", 20.0, 20.0),
    (8, "|g2(0) - (1 - p)|", 0.0, 0.0),
    (8, "photons per second at first lens", 1.55e6, 1.65e6),
    (8, "simulator chi2 per bin at 1e6 detections", 0.8, 1.2),
];

/// Runtime limits, seconds.
const RUNTIME: [(u8, f64); 8] = [(1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0), (5, 30.0), (6, 300.0), (7, 10.0), (8, 120.0)];

struct Outcome {
    passed: bool,
    problems: Vec<String>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn judge(id: u8, report: &CriterionReport) -> Outcome {
    let mut passed = true;
    let mut problems = Vec::new();
    for &(_, quantity, lower, upper) in BANDS.iter().filter(|b| b.0 == id) {
        let Some(m) = report.measurements.iter().find(|m| m.quantity == quantity) else {
            problems.push(format!("missing quantity {quantity:?}"));
            passed = false;
            continue;
        };
        let ok = m.value.is_finite() && m.value >= lower && m.value <= upper;
        println!("    {:<48} {:>14.6}  in [{lower}, {upper}]  {}", quantity, m.value, if ok { "ok" } else { "OUT" });
        passed &= ok;
        if !close(m.lower, lower) || !close(m.upper, upper) || m.passed != ok {
            problems.push(format!("{quantity}: library band [{}, {}] disagrees with [{lower}, {upper}]", m.lower, m.upper));
        }
    }
    let expected = BANDS.iter().filter(|b| b.0 == id).count();
    if report.measurements.len() != expected {
        problems.push(format!("{} measurements reported, {expected} pinned", report.measurements.len()));
    }
    let limit = RUNTIME.iter().find(|r| r.0 == id).map(|r| r.1).unwrap_or(0.0);
    let fast = report.elapsed_s < limit;
    println!("    {:<48} {:>14.3}  below {limit}  {}", "runtime, s", report.elapsed_s, if fast { "ok" } else { "OUT" });
    Outcome { passed: passed && fast && report.passed() == (passed && fast), problems }
}

/// Runs the binary end to end and checks the report it leaves behind.
fn full_suite(library: &BTreeMap<u8, bool>) -> Result<f64, String> {
    let out = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_nvcavity"))
        .args(["--seed", &SEED.to_string(), "--out"])
        .arg(out.path())
        .arg("reproduce-paper")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    if !o.status.success() {
        return Err(format!("exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    let passing = library.values().filter(|&&p| p).count();
    if !stdout.contains(&format!("{passing} of {} criteria passed", CRITERIA.len())) {
        return Err(format!("summary line disagrees with {passing} library passes:\n{stdout}"));
    }
    for (&id, &ok) in library {
        let verdict = if ok { "PASS" } else { "FAIL" };
        if !stdout.lines().any(|l| l.starts_with(&format!("criterion {id}  {verdict}"))) {
            return Err(format!("criterion {id} not reported as {verdict}"));
        }
    }
    report_rows(&out.path().join("reproduce_report.csv"))?;
    if elapsed >= SUITE_BUDGET_S {
        return Err(format!("took {elapsed:.1} s"));
    }
    Ok(elapsed)
}

fn report_rows(path: &Path) -> Result<(), String> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| e.to_string())?;
    let mut per_criterion: BTreeMap<u8, usize> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| e.to_string())?;
        let id: u8 = record[0].parse().map_err(|_| format!("bad criterion cell {:?}", &record[0]))?;
        *per_criterion.entry(id).or_default() += 1;
    }
    for &(id, _, _) in &CRITERIA {
        let pinned = BANDS.iter().filter(|b| b.0 == id).count();
        match per_criterion.get(&id) {
            Some(&n) if n == pinned + 1 => {}
            other => return Err(format!("criterion {id}: {other:?} report rows, expected {}", pinned + 1)),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut failures = Vec::new();
    let mut library = BTreeMap::new();
    for &(id, title, _) in &CRITERIA {
        println!("criterion {id}  {title}");
        let outcome = match run_criterion(id, SEED) {
            Ok(report) => judge(id, &report),
            Err(e) => Outcome { passed: false, problems: vec![format!("did not complete: {e}")] },
        };
        library.insert(id, outcome.passed);
        let verdict = match (outcome.passed, DOCUMENTED_MISSES.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (documented deviation)",
            (false, false) => "FAIL",
        };
        println!("criterion {id}: {verdict}");
        if !outcome.passed && !DOCUMENTED_MISSES.contains(&id) {
            failures.push(format!("criterion {id} failed"));
        }
        failures.extend(outcome.problems.into_iter().map(|p| format!("criterion {id}: {p}")));
    }

    println!("criterion 9  reproduce-paper end to end");
    match full_suite(&library) {
        Ok(elapsed) => println!("    full suite {elapsed:.1} s, below {SUITE_BUDGET_S} s\ncriterion 9: PASS"),
        Err(e) => {
            println!("    {e}\ncriterion 9: FAIL");
            failures.push(format!("criterion 9: {e}"));
        }
    }

    if failures.is_empty() {
        println!("acceptance: ok");
        ExitCode::SUCCESS
    } else {
        for f in &failures {
            println!("acceptance problem: {f}");
        }
        ExitCode::FAILURE
    }
}
