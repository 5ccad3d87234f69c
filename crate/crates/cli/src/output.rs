use std::time::Duration;

use skipfree::solver::TraceRow;
use skipfree::{Mdp, Report};

use crate::Format;

pub const TRACE_HEADER: &str = "iter,g_n,u0";

pub struct Solution {
    pub g: f64,
    pub h: Vec<f64>,
    /// Alternative per-state column replacing `h` in the output.
    pub values: Option<(String, Vec<f64>)>,
    pub policy: Vec<String>,
    pub trace: Vec<TraceRow<f64>>,
    pub iterations: usize,
    pub variant: String,
    pub distinguished: usize,
    pub extra: Vec<(String, String)>,
}

impl Solution {
    pub fn from_report(m: &Mdp, rep: &Report) -> Self {
        Self {
            g: rep.g_star,
            h: rep.h_star.clone(),
            values: None,
            policy: m.policy_labels(&rep.policy).iter().map(|s| s.to_string()).collect(),
            trace: rep.trace.clone(),
            iterations: rep.iterations,
            variant: rep.variant.to_string(),
            distinguished: rep.distinguished,
            extra: Vec::new(),
        }
    }

    fn column(&self) -> (&str, &[f64]) {
        match &self.values {
            Some((name, v)) => (name, v),
            None => ("h*", &self.h),
        }
    }
}

fn csv_trace(trace: &[TraceRow<f64>]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for r in trace {
        out.push_str(&format!("{},{:?},{:?}\n", r.iteration, r.g, r.u0));
    }
    out
}

pub fn print_trace_only(trace: &[TraceRow<f64>], format: Format) {
    match format {
        Format::Kv => {
            for r in trace {
                println!("trace.{}={:?},{:?}", r.iteration, r.g, r.u0);
            }
        }
        _ => print!("{}", csv_trace(trace)),
    }
}

pub fn print_solution(sol: &Solution, format: Format) {
    let (name, column) = sol.column();
    let states = sol.policy.len();
    match format {
        Format::Csv => print!("{}", csv_trace(&sol.trace)),
        Format::Kv => {
            println!("g_star={:?}", sol.g);
            println!("iterations={}", sol.iterations);
            println!("variant={}", sol.variant);
            println!("distinguished={}", sol.distinguished);
            for (k, v) in &sol.extra {
                println!("{k}={v}");
            }
            let key = if name == "v" { "v" } else { "h" };
            for (i, v) in column.iter().take(states).enumerate() {
                println!("{key}.{i}={v:?}");
            }
            for (i, a) in sol.policy.iter().enumerate() {
                println!("d.{i}={a}");
            }
            print_trace_only(&sol.trace, Format::Kv);
        }
        Format::Human => {
            println!("g* = {}", sol.g);
            println!("variant: {}, iterations: {}", sol.variant, sol.iterations);
            if sol.distinguished != 0 {
                println!("recurrent class rooted at state {}", sol.distinguished);
            }
            for (k, v) in &sol.extra {
                println!("{k}: {v}");
            }
            println!();
            println!("{:>6}  {:<10}  {}", "state", "action", if column.is_empty() { "" } else { name });
            for (i, a) in sol.policy.iter().enumerate() {
                match column.get(i) {
                    Some(v) => println!("{i:>6}  {a:<10}  {v}"),
                    None => println!("{i:>6}  {a:<10}"),
                }
            }
            println!();
            println!("{:>4}  {:>22}  {:>22}", "iter", "g_n", "u0");
            for r in &sol.trace {
                println!("{:>4}  {:>22}  {:>22.6e}", r.iteration, r.g, r.u0);
            }
        }
    }
}

pub struct CompareRow {
    pub method: String,
    pub g: Option<f64>,
    pub iterations: Option<usize>,
    pub time: Option<Duration>,
    pub note: String,
}

impl CompareRow {
    pub fn done(method: String, g: f64, iterations: usize, time: Duration) -> Self {
        Self { method, g: Some(g), iterations: Some(iterations), time: Some(time), note: String::new() }
    }

    pub fn skipped(method: String, reason: String) -> Self {
        Self { method, g: None, iterations: None, time: None, note: format!("skipped: {reason}") }
    }
}

pub fn print_compare(rows: &[CompareRow]) {
    println!("{:<30} {:>24} {:>10} {:>12}", "method", "g*", "iterations", "time_ms");
    for r in rows {
        match (r.g, r.iterations, r.time) {
            (Some(g), Some(it), Some(t)) => {
                println!("{:<30} {:>24} {:>10} {:>12.3}", r.method, g, it, t.as_secs_f64() * 1e3)
            }
            _ => println!("{:<30} {}", r.method, r.note),
        }
    }
}
