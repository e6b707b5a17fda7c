//! Canonical JSON documents. Keys are sorted at every level, floats are
//! written in shortest-round-trip form, and each numeric section carries a
//! parallel `precise` map with 17-significant-digit renderings, so identical
//! inputs always produce byte-identical files and every number survives the
//! trip back.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("report field `{field}` is not finite and cannot be serialized")]
    NonFinite { field: String },
}

/// 17 significant digits: enough to reproduce any f64 bit for bit.
pub fn precise_map(entries: &[(&str, f64)]) -> BTreeMap<String, String> {
    entries
        .iter()
        .map(|&(name, v)| (String::from(name), format!("{v:.16e}")))
        .collect()
}

fn ck(field: &str, v: f64) -> Result<(), ReportError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ReportError::NonFinite {
            field: String::from(field),
        })
    }
}

fn ck_opt(field: &str, v: Option<f64>) -> Result<(), ReportError> {
    v.map_or(Ok(()), |x| ck(field, x))
}

/// The document the `fit` and `schedules` workflows write. All six keys are
/// always present; sections that do not apply are `null`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Report {
    pub budget: Option<BudgetSection>,
    pub fits: Option<FitsSection>,
    pub input: Option<InputSection>,
    pub limits: Option<LimitsSection>,
    pub recovered_params: Option<RecoveredSection>,
    pub schedules: Option<SchedulesSection>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputSection {
    pub path: Option<String>,
    pub label: Option<String>,
    pub points: Option<usize>,
    pub params: Option<ParamsEcho>,
    pub init: Option<InitEcho>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamsEcho {
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub b: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InitEcho {
    pub u_s0: f64,
    pub u_v0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitsSection {
    pub u_s: ChannelFit,
    pub u_v: ChannelFit,
    pub gap_linear: Option<GapLinearSection>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChannelFit {
    pub amplitude: f64,
    pub rate: f64,
    pub offset: f64,
    pub r_squared: f64,
    pub residual_norm: f64,
    pub iterations: u32,
    pub status: String,
    pub precise: BTreeMap<String, String>,
}

impl ChannelFit {
    pub fn from_fit(fit: &gapdyn_core::fit::ExpFit) -> Self {
        let status = match fit.status {
            gapdyn_core::fit::FitStatus::Converged => "converged",
            gapdyn_core::fit::FitStatus::MaxIterations => "max_iterations",
            gapdyn_core::fit::FitStatus::Degenerate => "degenerate",
            gapdyn_core::fit::FitStatus::NoDecay => "no_decay",
        };
        ChannelFit {
            amplitude: fit.amplitude,
            rate: fit.rate,
            offset: fit.offset,
            r_squared: fit.r_squared,
            residual_norm: fit.residual_norm,
            iterations: fit.iterations,
            status: String::from(status),
            precise: precise_map(&[
                ("amplitude", fit.amplitude),
                ("offset", fit.offset),
                ("r_squared", fit.r_squared),
                ("rate", fit.rate),
                ("residual_norm", fit.residual_norm),
            ]),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapLinearSection {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub residual_norm: f64,
    pub precise: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveredSection {
    pub normalization: String,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub g_inf: f64,
    pub alpha_over_beta: Option<f64>,
    pub identifiable: bool,
    pub precise: BTreeMap<String, String>,
}

impl RecoveredSection {
    pub fn from_recovered(rec: &gapdyn_core::fit::RecoveredParams) -> Self {
        RecoveredSection {
            normalization: String::from("k=1"),
            lambda: rec.lambda,
            alpha: rec.alpha,
            beta: rec.beta,
            b: rec.b,
            g_inf: rec.g_inf,
            alpha_over_beta: rec.alpha_over_beta,
            identifiable: rec.identifiable,
            precise: precise_map(&[
                ("alpha", rec.alpha),
                ("b", rec.b),
                ("beta", rec.beta),
                ("g_inf", rec.g_inf),
                ("lambda", rec.lambda),
            ]),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitsSection {
    pub u_s_inf: f64,
    pub u_v_inf: f64,
    pub g_inf: f64,
    pub precise: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetSection {
    pub epsilon: f64,
    pub epochs: f64,
    pub epochs_ceil: u64,
    pub precise: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchedulesSection {
    pub horizon: usize,
    pub baseline_u_s: f64,
    pub baseline_u_v: f64,
    pub spread_exact_u_s: f64,
    pub stability_warning: bool,
    pub rows: Vec<ScheduleRow>,
    pub precise: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleRow {
    pub name: String,
    pub total_eta: f64,
    pub exact_u_s: f64,
    pub exact_u_v: f64,
    pub approx_u_s: f64,
    pub approx_u_v: f64,
    pub discrepancy: f64,
    pub precise: BTreeMap<String, String>,
}

impl Report {
    pub fn validate_finite(&self) -> Result<(), ReportError> {
        if let Some(b) = &self.budget {
            ck("budget.epsilon", b.epsilon)?;
            ck("budget.epochs", b.epochs)?;
        }
        if let Some(f) = &self.fits {
            for (name, c) in [("u_s", &f.u_s), ("u_v", &f.u_v)] {
                ck(&format!("fits.{name}.amplitude"), c.amplitude)?;
                ck(&format!("fits.{name}.rate"), c.rate)?;
                ck(&format!("fits.{name}.offset"), c.offset)?;
                ck(&format!("fits.{name}.r_squared"), c.r_squared)?;
                ck(&format!("fits.{name}.residual_norm"), c.residual_norm)?;
            }
            if let Some(g) = &f.gap_linear {
                ck("fits.gap_linear.slope", g.slope)?;
                ck("fits.gap_linear.intercept", g.intercept)?;
                ck("fits.gap_linear.r_squared", g.r_squared)?;
                ck("fits.gap_linear.residual_norm", g.residual_norm)?;
            }
        }
        if let Some(i) = &self.input {
            if let Some(p) = &i.params {
                ck("input.params.alpha", p.alpha)?;
                ck("input.params.beta", p.beta)?;
                ck("input.params.k", p.k)?;
                ck("input.params.b", p.b)?;
                ck("input.params.gamma", p.gamma)?;
            }
            if let Some(s) = &i.init {
                ck("input.init.u_s0", s.u_s0)?;
                ck("input.init.u_v0", s.u_v0)?;
            }
        }
        if let Some(l) = &self.limits {
            ck("limits.u_s_inf", l.u_s_inf)?;
            ck("limits.u_v_inf", l.u_v_inf)?;
            ck("limits.g_inf", l.g_inf)?;
        }
        if let Some(r) = &self.recovered_params {
            ck("recovered_params.lambda", r.lambda)?;
            ck("recovered_params.alpha", r.alpha)?;
            ck("recovered_params.beta", r.beta)?;
            ck("recovered_params.b", r.b)?;
            ck("recovered_params.g_inf", r.g_inf)?;
            ck_opt("recovered_params.alpha_over_beta", r.alpha_over_beta)?;
        }
        if let Some(s) = &self.schedules {
            ck("schedules.baseline_u_s", s.baseline_u_s)?;
            ck("schedules.baseline_u_v", s.baseline_u_v)?;
            ck("schedules.spread_exact_u_s", s.spread_exact_u_s)?;
            for row in &s.rows {
                let f = format!("schedules.rows.{}", row.name);
                ck(&format!("{f}.total_eta"), row.total_eta)?;
                ck(&format!("{f}.exact_u_s"), row.exact_u_s)?;
                ck(&format!("{f}.exact_u_v"), row.exact_u_v)?;
                ck(&format!("{f}.approx_u_s"), row.approx_u_s)?;
                ck(&format!("{f}.approx_u_v"), row.approx_u_v)?;
                ck(&format!("{f}.discrepancy"), row.discrepancy)?;
            }
        }
        Ok(())
    }
}

/// Selection-metrics output document.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricsDocument {
    pub input: MetricsInput,
    pub selection: Option<SelectionSection>,
    pub pass_at_k: Option<Vec<PassAtKRow>>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricsInput {
    pub candidates: Option<String>,
    pub correctness: Option<String>,
    pub sigma: f64,
    pub k_values: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionSection {
    pub prompts: Vec<PromptOutcome>,
    pub evaluated_prompts: usize,
    pub solver_uncertainty: Option<f64>,
    pub verifier_uncertainty: Option<f64>,
    pub capability_gap: Option<f64>,
    pub precise: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PromptOutcome {
    pub prompt_id: String,
    pub selected_index: Option<usize>,
    pub selected_nll: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PassAtKRow {
    pub k: usize,
    pub value: f64,
}

impl MetricsDocument {
    pub fn validate_finite(&self) -> Result<(), ReportError> {
        ck("input.sigma", self.input.sigma)?;
        if let Some(s) = &self.selection {
            ck_opt("selection.solver_uncertainty", s.solver_uncertainty)?;
            ck_opt("selection.verifier_uncertainty", s.verifier_uncertainty)?;
            ck_opt("selection.capability_gap", s.capability_gap)?;
            for p in &s.prompts {
                ck_opt(&format!("selection.prompts.{}", p.prompt_id), p.selected_nll)?;
            }
        }
        if let Some(rows) = &self.pass_at_k {
            for r in rows {
                ck(&format!("pass_at_k.{}", r.k), r.value)?;
            }
        }
        Ok(())
    }
}

/// Serializes any document to sorted-key, pretty-printed JSON with a
/// trailing newline. `serde_json`'s map is ordered, so nested keys come out
/// sorted no matter the struct declaration order.
pub fn canonical_json<T: Serialize>(doc: &T) -> String {
    let value = serde_json::to_value(doc).expect("report types serialize");
    let mut text = serde_json::to_string_pretty(&value).expect("value prints");
    text.push('\n');
    text
}

pub fn write_report(path: &Path, report: &Report) -> Result<(), ReportError> {
    report.validate_finite()?;
    fs::write(path, canonical_json(report)).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_metrics(path: &Path, doc: &MetricsDocument) -> Result<(), ReportError> {
    doc.validate_finite()?;
    fs::write(path, canonical_json(doc)).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report() -> Report {
        Report {
            budget: Some(BudgetSection {
                epsilon: 0.015,
                epochs: 4.605170185988091,
                epochs_ceil: 5,
                precise: precise_map(&[("epochs", 4.605170185988091), ("epsilon", 0.015)]),
            }),
            limits: Some(LimitsSection {
                u_s_inf: 0.0,
                u_v_inf: -0.5,
                g_inf: 0.5,
                precise: precise_map(&[("g_inf", 0.5), ("u_s_inf", 0.0), ("u_v_inf", -0.5)]),
            }),
            ..Report::default()
        }
    }

    #[test]
    fn all_six_keys_always_present_and_sorted() {
        let text = canonical_json(&sample_report());
        let order: Vec<usize> = ["\"budget\"", "\"fits\"", "\"input\"", "\"limits\"", "\"recovered_params\"", "\"schedules\""]
            .iter()
            .map(|k| text.find(k).expect("key present"))
            .collect();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(order, sorted);
        assert!(text.contains("\"fits\": null"));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn serialization_is_deterministic() {
        let a = canonical_json(&sample_report());
        let b = canonical_json(&sample_report());
        assert_eq!(a, b);
    }

    #[test]
    fn numbers_round_trip_exactly() {
        let report = sample_report();
        let text = canonical_json(&report);
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let epochs = value["budget"]["epochs"].as_f64().unwrap();
        assert_eq!(epochs.to_bits(), 4.605170185988091_f64.to_bits());
        let precise: f64 = value["budget"]["precise"]["epochs"]
            .as_str()
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(precise.to_bits(), 4.605170185988091_f64.to_bits());
    }

    #[test]
    fn non_finite_fields_are_rejected_before_writing() {
        let mut r = sample_report();
        r.budget.as_mut().unwrap().epochs = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        match write_report(&path, &r) {
            Err(ReportError::NonFinite { field }) => assert_eq!(field, "budget.epochs"),
            other => panic!("unexpected: {other:?}"),
        }
        assert!(!path.exists());
    }

    #[test]
    fn writes_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
        write_report(&p1, &sample_report()).unwrap();
        write_report(&p2, &sample_report()).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }
}
