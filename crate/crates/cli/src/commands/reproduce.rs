use nvcavity::reproduce::{run_criterion, CRITERIA};

use crate::config::require;
use crate::error::CliError;
use crate::output::Table;
use crate::{row, Session};

pub fn run(s: &mut Session) -> Result<(), CliError> {
    let c = s.config.reproduce.clone().unwrap_or_default();
    require("reproduce.criteria must not be empty", !c.criteria.is_empty())?;
    for (i, id) in c.criteria.iter().enumerate() {
        require(&format!("reproduce.criteria: no criterion {id}"), CRITERIA.iter().any(|k| k.0 == *id))?;
        require(&format!("reproduce.criteria: criterion {id} listed twice"), !c.criteria[..i].contains(id))?;
    }
    s.begin(&c, &[]);

    let mut report = Table::new("reproduce_report", &["criterion", "title", "quantity", "value", "lower", "upper", "passed"]);
    let mut info = Table::new("reproduce_info", &["criterion", "quantity", "value"]);
    let mut errors = Vec::new();
    let mut passed = 0;
    for &id in &c.criteria {
        let &(_, title, budget_s) = CRITERIA.iter().find(|k| k.0 == id).expect("validated above");
        match run_criterion(id, s.seed) {
            Ok(r) => {
                for m in &r.measurements {
                    report.push(row![id, title, m.quantity.as_str(), m.value, m.lower, m.upper, m.passed]);
                }
                report.push(row![id, title, "runtime within budget, s", budget_s, 0.0, budget_s, r.within_budget()]);
                for (q, v) in &r.info {
                    info.push(row![id, q.as_str(), *v]);
                }
                if r.passed() {
                    passed += 1;
                }
                let failed: Vec<&str> = r.measurements.iter().filter(|m| !m.passed).map(|m| m.quantity.as_str()).collect();
                let verdict = if r.passed() { "PASS" } else { "FAIL" };
                println!("criterion {id}  {verdict}  {title}  ({:.1} s of {budget_s} s)", r.elapsed_s);
                for q in failed {
                    println!("    out of range: {q}");
                }
            }
            Err(e) => {
                report.push(row![id, title, "error", f64::NAN, f64::NAN, f64::NAN, false]);
                report.note(format!("criterion {id} did not complete: {e}"));
                println!("criterion {id}  ERROR  {title}  ({e})");
                errors.push(format!("criterion {id}: {e}"));
            }
        }
    }
    println!("{passed} of {} criteria passed", c.criteria.len());
    s.sink.table(&report)?;
    s.sink.table(&info)?;
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(errors.join("; ")))
    }
}
