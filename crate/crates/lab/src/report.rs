//! Result tables: a flat CSV and a markdown matrix with inference mode x
//! training variant as rows and task sizes as columns.

use std::cmp::Ordering;

use crate::eval::{EvalResult, InferenceMode, Variant};

pub const CSV_HEADER: &str = "task,variant,mode,accuracy,correct,n_examples,malformed,seed";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub csv: String,
    pub markdown: String,
}

pub fn result_csv_row(r: &EvalResult) -> String {
    format!(
        "{},{},{},{:.4},{},{},{},{}",
        r.task_id, r.variant, r.mode, r.accuracy, r.correct, r.n_examples, r.malformed, r.seed
    )
}

/// Parses rows written by [`result_csv_row`] (header optional).
pub fn parse_results_csv(text: &str) -> Result<Vec<EvalResult>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line == CSV_HEADER {
            continue;
        }
        // task ids such as G(2,5) contain a comma
        let fields: Vec<&str> = line.rsplitn(8, ',').collect();
        if fields.len() != 8 {
            return Err(format!("line {}: expected 8 fields", i + 1));
        }
        let f = |k: usize| fields[7 - k];
        let num = |k: usize| f(k).parse::<usize>().map_err(|e| format!("line {}: {e}", i + 1));
        let r = EvalResult::new(
            f(0).to_string(),
            f(1).parse()?,
            f(2).parse()?,
            num(4)?,
            num(5)?,
            num(6)?,
            f(7).parse().map_err(|e| format!("line {}: {e}", i + 1))?,
        )
        .map_err(|e| e.to_string())?;
        out.push(r);
    }
    Ok(out)
}

/// Star ids `G(d,n)` before `scc-n`, numerically within each family.
fn task_order(a: &str, b: &str) -> Ordering {
    fn key(s: &str) -> (u8, Vec<u64>, String) {
        let nums: Vec<u64> = s
            .split(|c: char| !c.is_ascii_digit())
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().unwrap_or(0))
            .collect();
        (u8::from(!s.starts_with("G(")), nums, s.to_string())
    }
    key(a).cmp(&key(b))
}

fn row_order(a: &EvalResult, b: &EvalResult) -> Ordering {
    (a.mode, a.variant).cmp(&(b.mode, b.variant)).then_with(|| task_order(&a.task_id, &b.task_id))
}

pub fn emit_report(results: &[EvalResult]) -> Report {
    let mut sorted: Vec<&EvalResult> = results.iter().collect();
    sorted.sort_by(|a, b| row_order(a, b));

    let mut csv = format!("{CSV_HEADER}\n");
    for r in &sorted {
        csv.push_str(&result_csv_row(r));
        csv.push('\n');
    }

    let mut tasks: Vec<&str> = sorted.iter().map(|r| r.task_id.as_str()).collect();
    tasks.sort_by(|a, b| task_order(a, b));
    tasks.dedup();
    let mut rows: Vec<(InferenceMode, Variant)> = sorted.iter().map(|r| (r.mode, r.variant)).collect();
    rows.dedup();

    let cell = |mode: InferenceMode, variant: Variant, task: &str| {
        sorted
            .iter()
            .find(|r| r.mode == mode && r.variant == variant && r.task_id == task)
            .map(|r| r.accuracy)
    };
    let best: Vec<Option<f64>> = tasks
        .iter()
        .map(|t| sorted.iter().filter(|r| r.task_id == *t).map(|r| r.accuracy).reduce(f64::max))
        .collect();

    let mut md = String::from("| Inference | Variant |");
    for t in &tasks {
        md.push_str(&format!(" {t} |"));
    }
    md.push_str("\n|---|---|");
    for _ in &tasks {
        md.push_str("---|");
    }
    md.push('\n');
    for (mode, variant) in rows {
        md.push_str(&format!("| {mode} | {variant} |"));
        for (t, b) in tasks.iter().zip(&best) {
            match cell(mode, variant, t) {
                Some(a) if Some(a) == *b => md.push_str(&format!(" **{a:.2}** |")),
                Some(a) => md.push_str(&format!(" {a:.2} |")),
                None => md.push_str(" -- |"),
            }
        }
        md.push('\n');
    }
    Report { csv, markdown: md }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(task: &str, v: Variant, m: InferenceMode, correct: usize) -> EvalResult {
        EvalResult::new(task.into(), v, m, correct, 100, 0, 7).unwrap()
    }

    #[test]
    fn empty_report_is_header_only() {
        let rep = emit_report(&[]);
        assert_eq!(rep.csv, format!("{CSV_HEADER}\n"));
        assert_eq!(rep.markdown.lines().count(), 2);
    }

    #[test]
    fn single_result_is_one_cell() {
        let rep = emit_report(&[r("G(2,5)", Variant::Random, InferenceMode::Specified, 93)]);
        let lines: Vec<&str> = rep.markdown.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], "| Specified | random | **0.93** |");
    }

    #[test]
    fn rows_follow_mode_then_variant_and_best_is_bold() {
        let rs = vec![
            r("scc-5", Variant::Fixed, InferenceMode::Specified, 40),
            r("G(5,5)", Variant::Ntp, InferenceMode::AutoReg, 20),
            r("G(2,5)", Variant::Random, InferenceMode::AutoReg, 60),
            r("G(2,5)", Variant::Ntp, InferenceMode::AutoReg, 50),
        ];
        let rep = emit_report(&rs);
        let lines: Vec<&str> = rep.markdown.lines().collect();
        assert_eq!(lines[0], "| Inference | Variant | G(2,5) | G(5,5) | scc-5 |");
        assert_eq!(lines[2], "| AutoReg | NTP | 0.50 | **0.20** | -- |");
        assert_eq!(lines[3], "| AutoReg | random | **0.60** | -- | -- |");
        assert_eq!(lines[4], "| Specified | fixed | -- | -- | **0.40** |");
        assert_eq!(parse_results_csv(&rep.csv).unwrap().len(), 4);
        let mut shuffled = rs.clone();
        shuffled.reverse();
        assert_eq!(emit_report(&shuffled), rep);
    }
}
