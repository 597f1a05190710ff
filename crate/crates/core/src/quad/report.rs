use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::IntegralEstimate;

pub const SCHEMA_VERSION: u32 = 1;

/// A labelled number with its error bar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub label: String,
    pub re: f64,
    pub im: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
}

impl Estimate {
    pub fn from_integral(label: impl Into<String>, e: &IntegralEstimate) -> Estimate {
        Estimate { label: label.into(), re: e.re, im: e.im, std_error: e.std_error, n: e.n, seed: e.seed }
    }

    /// A deterministic quantity: no error bar.
    pub fn exact(label: impl Into<String>, value: f64, n: u64, seed: u64) -> Estimate {
        Estimate { label: label.into(), re: value, im: 0.0, std_error: 0.0, n, seed }
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    /// Diagnostic verdicts never change the overall outcome.
    pub gating: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub eps: f64,
    pub z_index: usize,
    pub estimate: Estimate,
}

/// Estimates over an `eps` grid and a panel of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub majorant: String,
    pub lambda: f64,
    pub eps: Vec<f64>,
    /// Panel points as `[re, im]` pairs, one list per point and per `eps`.
    pub z_panel: Vec<Vec<Vec<[f64; 2]>>>,
    pub cells: Vec<SweepCell>,
    /// Per panel point, largest over smallest estimate across the grid.
    pub ratios: Vec<Option<f64>>,
    /// Per panel point, whether the estimates increase along the grid.
    pub monotone: Vec<bool>,
    /// Per panel point, last over first estimate.
    pub growth: Vec<Option<f64>>,
}

impl SweepReport {
    /// Recomputes the ratio fields from the cells.
    pub fn summarize(&mut self) {
        let panel = self.cells.iter().map(|c| c.z_index + 1).max().unwrap_or(0);
        self.ratios.clear();
        self.monotone.clear();
        self.growth.clear();
        for zi in 0..panel {
            let vals: Vec<f64> = self.eps.iter().filter_map(|e| self.cell(*e, zi).map(|c| c.estimate.re)).collect();
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let min = vals.iter().cloned().fold(f64::MAX, f64::min);
            self.ratios.push((min > 0.0).then(|| max / min));
            self.monotone.push(vals.windows(2).all(|w| w[1] > w[0]));
            self.growth.push(match (vals.first(), vals.last()) {
                (Some(a), Some(b)) if *a > 0.0 => Some(b / a),
                _ => None,
            });
        }
    }

    pub fn cell(&self, eps: f64, z_index: usize) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.eps == eps && c.z_index == z_index)
    }
}

/// Outcome of one verification command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub command: String,
    pub config: BTreeMap<String, serde_json::Value>,
    pub estimates: Vec<Estimate>,
    pub sweeps: Vec<SweepReport>,
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
    pub versions: BTreeMap<String, String>,
}

impl VerificationReport {
    pub fn new(command: &str, config: &impl Serialize) -> VerificationReport {
        let config = match serde_json::to_value(config) {
            Ok(serde_json::Value::Object(m)) => m.into_iter().collect(),
            Ok(other) => BTreeMap::from([("value".to_string(), other)]),
            Err(e) => BTreeMap::from([("error".to_string(), serde_json::Value::String(e.to_string()))]),
        };
        let versions = BTreeMap::from([
            ("hlkernel".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ("schema".to_string(), SCHEMA_VERSION.to_string()),
        ]);
        VerificationReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config,
            estimates: Vec::new(),
            sweeps: Vec::new(),
            verdicts: Vec::new(),
            pass: true,
            versions,
        }
    }

    pub fn estimate(&mut self, e: Estimate) {
        self.estimates.push(e);
    }

    pub fn verdict(&mut self, name: impl Into<String>, pass: bool, gating: bool, detail: impl Into<String>) {
        self.verdicts.push(Verdict { name: name.into(), pass, gating, detail: detail.into() });
        self.pass = self.verdicts.iter().filter(|v| v.gating).all(|v| v.pass);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn from_json(text: &str) -> Result<VerificationReport, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn num(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 1e-3 && x.abs() < 1e5 {
        format!("{x:.6}")
    } else {
        format!("{x:.4e}")
    }
}

/// Plain-text table of a report.
pub fn render_report(r: &VerificationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} (schema {})  {}", r.command, r.schema_version, if r.pass { "PASS" } else { "FAIL" });
    if !r.config.is_empty() {
        let _ = writeln!(out, "\nconfig");
        for (k, v) in &r.config {
            let _ = writeln!(out, "  {k:<16} {v}");
        }
    }
    if !r.estimates.is_empty() {
        let w = r.estimates.iter().map(|e| e.label.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "\n{:<w$}  {:>14}  {:>14}  {:>12}  {:>9}", "label", "re", "im", "std_error", "n");
        for e in &r.estimates {
            let _ = writeln!(
                out,
                "{:<w$}  {:>14}  {:>14}  {:>12}  {:>9}",
                e.label,
                num(e.re),
                num(e.im),
                num(e.std_error),
                e.n
            );
        }
    }
    for s in &r.sweeps {
        let _ = writeln!(out, "\nsweep {}  lambda = {}", s.majorant, s.lambda);
        let panel = s.ratios.len();
        let mut head = format!("{:>10}", "eps");
        for zi in 0..panel {
            head += &format!("  {:>12}", format!("z{zi}"));
        }
        let _ = writeln!(out, "{head}");
        for eps in &s.eps {
            let mut line = format!("{:>10}", num(*eps));
            for zi in 0..panel {
                let v = s.cell(*eps, zi).map(|c| num(c.estimate.re)).unwrap_or_default();
                line += &format!("  {v:>12}");
            }
            let _ = writeln!(out, "{line}");
        }
        let mut line = format!("{:>10}", "max/min");
        for x in &s.ratios {
            line += &format!("  {:>12}", x.map(num).unwrap_or_else(|| "-".into()));
        }
        let _ = writeln!(out, "{line}");
    }
    if !r.verdicts.is_empty() {
        let _ = writeln!(out, "\nverdicts");
        for v in &r.verdicts {
            let tag = if v.pass { "pass" } else { "FAIL" };
            let kind = if v.gating { "" } else { " (diagnostic)" };
            let _ = writeln!(out, "  [{tag}] {}{kind}: {}", v.name, v.detail);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagnostics_do_not_gate() {
        let mut r = VerificationReport::new("verify demo", &BTreeMap::from([("seed", 7)]));
        r.verdict("main", true, true, "ok");
        r.verdict("extra", false, false, "informational");
        assert!(r.pass);
        r.verdict("second", false, true, "bad");
        assert!(!r.pass);
        let back = VerificationReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let text = render_report(&r);
        assert!(text.contains("FAIL") && text.contains("(diagnostic)"));
        assert_eq!(text, render_report(&back));
    }

    #[test]
    fn sweep_summary() {
        let cell = |eps: f64, z: usize, v: f64| SweepCell { eps, z_index: z, estimate: Estimate::exact("m", v, 1, 0) };
        let mut s = SweepReport {
            majorant: "m".into(),
            lambda: 1.0,
            eps: vec![0.1, 0.05],
            z_panel: vec![],
            cells: vec![cell(0.1, 0, 1.0), cell(0.05, 0, 3.0), cell(0.1, 1, 2.0), cell(0.05, 1, 2.0)],
            ratios: vec![],
            monotone: vec![],
            growth: vec![],
        };
        s.summarize();
        assert_eq!(s.ratios, vec![Some(3.0), Some(1.0)]);
        assert_eq!(s.monotone, vec![true, false]);
        assert_eq!(s.growth, vec![Some(3.0), Some(1.0)]);
    }
}
