//! Bundled and on-disk data: hardware specs, model profiles, measurement
//! records and the published acceleration results.
//!
//! Every file is a JSON array of flat objects with units in the field names.
//! The file kind comes from the file name:
//!
//! | file                   | rows                 |
//! |------------------------|----------------------|
//! | `hardware*.json`       | [`HardwareRow`]      |
//! | `models*.json`         | [`ModelSpec`]        |
//! | `records*.json`        | [`MeasurementRecord`]|
//! | `contention*.json`     | [`ContentionPreset`] |
//! | `fusion_speedups*.json`| [`FusionResult`]     |
//! | `stale_steps*.json`    | [`StaleStepResult`]  |
//!
//! Errors name the file, the line of the offending entry (or field), and
//! the field.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fusion::{ContentionModel, FusionSchedule};
use crate::leaderboard::{MeasurementRecord, PowerSample};
use crate::roofline::{HardwareSpec, ModelSpec, PhaseRole};
use crate::sim::{calibrate_overheads, phase_split, SimConfig};

const GIGA: f64 = 1e9;
const TERA: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareRow {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    pub peak_tflops: f64,
    /// Decimal gigabytes.
    pub memory_gb: f64,
    pub bandwidth_gb_s: f64,
    pub cost_usd: f64,
    #[serde(default)]
    pub tdp_w: Option<f64>,
}

impl HardwareRow {
    pub fn spec(&self) -> HardwareSpec {
        HardwareSpec {
            name: self.name.clone(),
            peak_flops: self.peak_tflops * TERA,
            memory_bytes: self.memory_gb * GIGA,
            bandwidth: self.bandwidth_gb_s * GIGA,
            cost: self.cost_usd,
            tdp: self.tdp_w,
        }
    }

    pub fn from_spec(spec: &HardwareSpec, display_name: Option<String>) -> Self {
        Self {
            name: spec.name.clone(),
            display_name,
            peak_tflops: spec.peak_flops / TERA,
            memory_gb: spec.memory_bytes / GIGA,
            bandwidth_gb_s: spec.bandwidth / GIGA,
            cost_usd: spec.cost,
            tdp_w: spec.tdp,
        }
    }
}

/// Contention level fitted to a published fused speedup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentionPreset {
    pub model: String,
    pub hardware: String,
    pub target_speedup: f64,
    pub level: f64,
    pub contention: ContentionModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionResult {
    pub model: String,
    pub hardware: String,
    pub baseline_ms: f64,
    pub fused_ms: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaleStepResult {
    pub task: String,
    pub stale_steps: usize,
    pub success_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub kind: String,
    pub key: String,
    pub path: String,
    pub line: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub hardware: Vec<HardwareRow>,
    pub models: Vec<ModelSpec>,
    pub records: Vec<MeasurementRecord>,
    pub contention: Vec<ContentionPreset>,
    pub fusion_results: Vec<FusionResult>,
    pub stale_steps: Vec<StaleStepResult>,
    #[serde(skip)]
    pub provenance: Vec<Provenance>,
}

mod bundled {
    pub const FILES: [(&str, &str); 6] = [
        ("hardware.json", include_str!("../data/hardware.json")),
        ("models.json", include_str!("../data/models.json")),
        ("records_pi0.json", include_str!("../data/records_pi0.json")),
        ("contention.json", include_str!("../data/contention.json")),
        ("fusion_speedups.json", include_str!("../data/fusion_speedups.json")),
        ("stale_steps.json", include_str!("../data/stale_steps.json")),
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Hardware,
    Models,
    Records,
    Contention,
    FusionResults,
    StaleSteps,
}

impl Kind {
    fn of(path: &str) -> Option<Kind> {
        let stem = Path::new(path).file_name()?.to_str()?;
        if !stem.ends_with(".json") {
            return None;
        }
        [
            ("hardware", Kind::Hardware),
            ("models", Kind::Models),
            ("records", Kind::Records),
            ("contention", Kind::Contention),
            ("fusion_speedups", Kind::FusionResults),
            ("stale_steps", Kind::StaleSteps),
        ]
        .into_iter()
        .find(|(prefix, _)| stem.starts_with(prefix))
        .map(|(_, k)| k)
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Hardware => "hardware",
            Kind::Models => "model",
            Kind::Records => "record",
            Kind::Contention => "contention",
            Kind::FusionResults => "fusion_result",
            Kind::StaleSteps => "stale_step",
        }
    }
}

/// Byte ranges of the top-level elements of a JSON array. Assumes the text
/// already parsed as JSON.
fn element_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let (mut depth, mut in_str, mut escaped) = (0usize, false, false);
    let mut start: Option<usize> = None;
    let mut last_non_ws = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if in_str {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_str = false,
                _ => {}
            }
            last_non_ws = i;
            continue;
        }
        match b {
            b'[' | b'{' => {
                if depth == 1 && start.is_none() {
                    start = Some(i);
                }
                depth += 1;
            }
            b']' | b'}' => {
                depth -= 1;
                if depth == 0 {
                    if let Some(s) = start.take() {
                        spans.push((s, last_non_ws + 1));
                    }
                }
            }
            b',' if depth == 1 => {
                if let Some(s) = start.take() {
                    spans.push((s, last_non_ws + 1));
                }
            }
            b' ' | b'\t' | b'\r' | b'\n' => continue,
            _ => {
                if depth == 1 && start.is_none() {
                    start = Some(i);
                }
                if b == b'"' {
                    in_str = true;
                }
            }
        }
        last_non_ws = i;
    }
    spans
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset].bytes().filter(|&b| b == b'\n').count() + 1
}

/// One parsed entry and where it came from.
struct Entry<T> {
    value: T,
    line: usize,
    span: (usize, usize),
}

struct Source<'a> {
    path: &'a str,
    text: &'a str,
}

impl Source<'_> {
    fn err(&self, line: usize, field: &str, message: impl Into<String>) -> Error {
        Error::Schema {
            path: self.path.to_string(),
            line,
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Line of `"field"` inside an entry, falling back to the entry line.
    fn field_line<T>(&self, e: &Entry<T>, field: &str) -> usize {
        let body = &self.text[e.span.0..e.span.1];
        match body.find(&format!("\"{field}\"")) {
            Some(off) => line_of(self.text, e.span.0 + off),
            None => e.line,
        }
    }

    fn parse<T: DeserializeOwned>(&self) -> Result<Vec<Entry<T>>> {
        let values: Vec<serde_json::Value> = serde_json::from_str(self.text).map_err(|e| {
            let field = if e.is_syntax() || e.is_eof() { "json" } else { "document" };
            self.err(e.line(), field, format!("{e} (expected a JSON array of objects)"))
        })?;
        let spans = element_spans(self.text);
        debug_assert_eq!(spans.len(), values.len());
        values
            .into_iter()
            .zip(spans)
            .map(|(_, span)| {
                let line = line_of(self.text, span.0);
                let elem = &self.text[span.0..span.1];
                let mut de = serde_json::Deserializer::from_str(elem);
                let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
                    let field = e.path().to_string();
                    let inner = e.into_inner();
                    let line = line + inner.line().saturating_sub(1);
                    self.err(line, &field, inner.to_string())
                })?;
                Ok(Entry { value, line, span })
            })
            .collect()
    }

    fn provenance<T>(&self, kind: Kind, key: String, e: &Entry<T>) -> Provenance {
        Provenance {
            kind: kind.name().to_string(),
            key,
            path: self.path.to_string(),
            line: e.line,
            sha256: hex::encode(Sha256::digest(&self.text.as_bytes()[e.span.0..e.span.1])),
        }
    }
}

/// Map `Error::InvalidInput` from a domain `validate` onto a schema error.
fn at<T>(src: &Source<'_>, e: &Entry<T>, field: &str, r: Result<()>) -> Result<()> {
    r.map_err(|err| match err {
        Error::InvalidInput(m) => src.err(src.field_line(e, field), field, m),
        other => other,
    })
}

fn field_from_message(msg: &str, fields: &[&'static str]) -> &'static str {
    fields.iter().copied().find(|f| msg.contains(f)).unwrap_or(fields[0])
}

impl Catalog {
    /// The data shipped with the crate.
    pub fn bundled() -> Self {
        let files: Vec<_> = bundled::FILES
            .iter()
            .map(|(name, text)| (format!("bundled/{name}"), text.to_string()))
            .collect();
        Self::from_sources(&files).expect("bundled catalog is valid")
    }

    /// Load the given files. Kinds come from the file names.
    pub fn load(paths: &[PathBuf]) -> Result<Self> {
        let mut files = Vec::with_capacity(paths.len());
        for p in paths {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            files.push((p.display().to_string(), text));
        }
        Self::from_sources(&files)
    }

    /// Load every `*.json` in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let io = |e: std::io::Error| Error::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .map(|e| e.map(|e| e.path()).map_err(io))
            .collect::<Result<_>>()?;
        paths.retain(|p| p.extension().is_some_and(|x| x == "json"));
        paths.sort();
        Self::load(&paths)
    }

    /// Parse `(path, text)` pairs and validate the result as a whole.
    pub fn from_sources(files: &[(String, String)]) -> Result<Self> {
        let mut cat = Catalog::default();
        // Entry locations for cross-reference errors, keyed by kind and index.
        let mut where_: BTreeMap<(&'static str, usize), (String, usize, usize)> = BTreeMap::new();
        let mut seen_kinds = BTreeSet::new();
        for (path, text) in files {
            let src = Source { path, text };
            let kind = Kind::of(path).ok_or_else(|| {
                src.err(1, "file", "unrecognized catalog file name; expected hardware, models, records, contention, fusion_speedups or stale_steps prefix")
            })?;
            seen_kinds.insert(kind.name());
            match kind {
                Kind::Hardware => {
                    for e in src.parse::<HardwareRow>()? {
                        let h = &e.value;
                        let positive = |v: f64| v.is_finite() && v > 0.0;
                        for (field, ok) in [
                            ("name", !h.name.trim().is_empty()),
                            ("peak_tflops", positive(h.peak_tflops)),
                            ("memory_gb", positive(h.memory_gb)),
                            ("bandwidth_gb_s", positive(h.bandwidth_gb_s)),
                            ("cost_usd", h.cost_usd.is_finite() && h.cost_usd >= 0.0),
                            ("tdp_w", h.tdp_w.is_none_or(positive)),
                        ] {
                            if !ok {
                                return Err(src.err(
                                    src.field_line(&e, field),
                                    field,
                                    format!("{}: out of range", h.name),
                                ));
                            }
                        }
                        where_.insert(("hardware", cat.hardware.len()), (path.clone(), e.line, 0));
                        cat.provenance.push(src.provenance(kind, e.value.name.clone(), &e));
                        cat.hardware.push(e.value);
                    }
                }
                Kind::Models => {
                    for e in src.parse::<ModelSpec>()? {
                        let m = &e.value;
                        at(&src, &e, "phases", m.validate())?;
                        let expected = m
                            .phases
                            .iter()
                            .find(|p| p.role == PhaseRole::ActionExpert)
                            .map_or(0, |p| p.invocations_per_cycle);
                        if m.denoise_steps != expected {
                            return Err(src.err(
                                src.field_line(&e, "denoise_steps"),
                                "denoise_steps",
                                format!(
                                    "{}: denoise_steps {} does not match the action expert's {} invocations",
                                    m.name, m.denoise_steps, expected
                                ),
                            ));
                        }
                        let mut names = BTreeSet::new();
                        for p in &m.phases {
                            if !names.insert(&p.name) {
                                return Err(src.err(
                                    src.field_line(&e, "phases"),
                                    "phases",
                                    format!("{}: duplicate phase name `{}`", m.name, p.name),
                                ));
                            }
                        }
                        where_.insert(("model", cat.models.len()), (path.clone(), e.line, 0));
                        cat.provenance.push(src.provenance(kind, m.name.clone(), &e));
                        cat.models.push(e.value);
                    }
                }
                Kind::Records => {
                    for e in src.parse::<MeasurementRecord>()? {
                        let r = &e.value;
                        r.validate().map_err(|err| match err {
                            Error::InvalidInput(m) => {
                                let f = field_from_message(
                                    &m,
                                    &["latency_ms", "energy_kj", "cost_usd", "score_pct", "model", "hardware"],
                                );
                                src.err(src.field_line(&e, f), f, m)
                            }
                            other => other,
                        })?;
                        let idx = cat.records.len();
                        where_.insert(("record", idx), (path.clone(), src.field_line(&e, "hardware"), src.field_line(&e, "model")));
                        cat.provenance.push(src.provenance(kind, format!("{}@{}", r.model, r.hardware), &e));
                        cat.records.push(e.value);
                    }
                }
                Kind::Contention => {
                    for e in src.parse::<ContentionPreset>()? {
                        at(&src, &e, "contention", e.value.contention.validate())?;
                        let idx = cat.contention.len();
                        where_.insert(("contention", idx), (path.clone(), src.field_line(&e, "hardware"), src.field_line(&e, "model")));
                        cat.provenance.push(src.provenance(kind, format!("{}@{}", e.value.model, e.value.hardware), &e));
                        cat.contention.push(e.value);
                    }
                }
                Kind::FusionResults => {
                    for e in src.parse::<FusionResult>()? {
                        let r = &e.value;
                        if !(r.baseline_ms > 0.0 && r.fused_ms > 0.0 && r.speedup > 0.0) {
                            return Err(src.err(e.line, "baseline_ms", "latencies and speedup must be > 0"));
                        }
                        let idx = cat.fusion_results.len();
                        where_.insert(("fusion_result", idx), (path.clone(), src.field_line(&e, "hardware"), src.field_line(&e, "model")));
                        cat.provenance.push(src.provenance(kind, format!("{}@{}", r.model, r.hardware), &e));
                        cat.fusion_results.push(e.value);
                    }
                }
                Kind::StaleSteps => {
                    for e in src.parse::<StaleStepResult>()? {
                        if !(0.0..=100.0).contains(&e.value.success_pct) {
                            return Err(src.err(
                                src.field_line(&e, "success_pct"),
                                "success_pct",
                                "must be within [0, 100]",
                            ));
                        }
                        cat.provenance.push(src.provenance(
                            kind,
                            format!("{}@{}", e.value.task, e.value.stale_steps),
                            &e,
                        ));
                        cat.stale_steps.push(e.value);
                    }
                }
            }
        }
        cat.check_references(&where_)?;
        Ok(cat)
    }

    fn check_references(
        &self,
        where_: &BTreeMap<(&'static str, usize), (String, usize, usize)>,
    ) -> Result<()> {
        let schema = |kind: &'static str, idx: usize, field: &str, msg: String, model_line: bool| {
            let (path, hw_line, m_line) = where_
                .get(&(kind, idx))
                .cloned()
                .unwrap_or_else(|| ("<catalog>".into(), 0, 0));
            Error::Schema {
                path,
                line: if model_line { m_line } else { hw_line },
                field: field.to_string(),
                message: msg,
            }
        };
        let mut hw = BTreeSet::new();
        for (i, h) in self.hardware.iter().enumerate() {
            if !hw.insert(h.name.as_str()) {
                return Err(schema("hardware", i, "name", format!("duplicate hardware `{}`", h.name), false));
            }
        }
        let mut models = BTreeSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if !models.insert(m.name.as_str()) {
                return Err(schema("model", i, "name", format!("duplicate model `{}`", m.name), false));
            }
        }
        let refs = |kind: &'static str, items: Vec<(&str, &str)>| -> Result<()> {
            let mut pairs = BTreeSet::new();
            for (i, (model, hardware)) in items.into_iter().enumerate() {
                if !hw.contains(hardware) {
                    return Err(schema(kind, i, "hardware", format!("unknown hardware `{hardware}`"), false));
                }
                if !models.contains(model) {
                    return Err(schema(kind, i, "model", format!("unknown model `{model}`"), true));
                }
                if !pairs.insert((model, hardware)) {
                    return Err(schema(
                        kind,
                        i,
                        "hardware",
                        format!("duplicate {kind} for `{model}` on `{hardware}`"),
                        false,
                    ));
                }
            }
            Ok(())
        };
        refs("record", self.records.iter().map(|r| (r.model.as_str(), r.hardware.as_str())).collect())?;
        refs(
            "contention",
            self.contention.iter().map(|r| (r.model.as_str(), r.hardware.as_str())).collect(),
        )?;
        refs(
            "fusion_result",
            self.fusion_results.iter().map(|r| (r.model.as_str(), r.hardware.as_str())).collect(),
        )?;
        for (i, r) in self.records.iter().enumerate() {
            let h = self.hardware.iter().find(|h| h.name == r.hardware).expect("checked above");
            if h.cost_usd != r.cost_usd {
                return Err(schema(
                    "record",
                    i,
                    "cost_usd",
                    format!(
                        "record cost {} for `{}` differs from the hardware cost {}",
                        r.cost_usd, r.hardware, h.cost_usd
                    ),
                    false,
                ));
            }
        }
        Ok(())
    }

    pub fn hardware_spec(&self, name: &str) -> Result<HardwareSpec> {
        self.hardware
            .iter()
            .find(|h| h.name == name)
            .map(HardwareRow::spec)
            .ok_or_else(|| Error::Unknown {
                kind: "hardware",
                name: name.to_string(),
            })
    }

    pub fn hardware_specs(&self) -> Vec<HardwareSpec> {
        self.hardware.iter().map(HardwareRow::spec).collect()
    }

    pub fn model(&self, name: &str) -> Result<&ModelSpec> {
        self.models.iter().find(|m| m.name == name).ok_or_else(|| Error::Unknown {
            kind: "model",
            name: name.to_string(),
        })
    }

    pub fn records_for(&self, model: &str) -> Vec<MeasurementRecord> {
        self.records.iter().filter(|r| r.model == model).cloned().collect()
    }

    pub fn record(&self, model: &str, hardware: &str) -> Option<&MeasurementRecord> {
        self.records.iter().find(|r| r.model == model && r.hardware == hardware)
    }

    pub fn contention_for(&self, model: &str, hardware: &str) -> Option<&ContentionPreset> {
        self.contention.iter().find(|c| c.model == model && c.hardware == hardware)
    }

    /// Fit one contention level per published fused speedup, against the
    /// backbone and expert times of the calibrated simulator. The fused
    /// schedule overlaps half of the expert's steps.
    pub fn fit_contention(&self) -> Result<Vec<ContentionPreset>> {
        self.fusion_results
            .iter()
            .map(|r| {
                let model = self.model(&r.model)?;
                let hw = self.hardware_spec(&r.hardware)?;
                let cal = calibrate_overheads(&self.records, model, &hw)?;
                let cfg = SimConfig::calibrated(model.clone(), hw, &cal);
                let (t_vlm, t_ae) = phase_split(&cfg)?;
                let k = model.action_expert().map_or(1, |p| p.invocations_per_cycle as usize);
                let sched = FusionSchedule::new(k, k / 2)?;
                let contention = ContentionModel::calibrate(t_vlm, t_ae, &sched, r.speedup)?;
                Ok(ContentionPreset {
                    model: r.model.clone(),
                    hardware: r.hardware.clone(),
                    target_speedup: r.speedup,
                    level: contention.vlm_bandwidth,
                    contention,
                })
            })
            .collect()
    }

    /// Canonical form: every list sorted by its key, no provenance.
    pub fn normalized(&self) -> Catalog {
        let mut c = Catalog {
            provenance: Vec::new(),
            ..self.clone()
        };
        c.hardware.sort_by(|a, b| a.name.cmp(&b.name));
        c.models.sort_by(|a, b| a.name.cmp(&b.name));
        c.records.sort_by(|a, b| (&a.model, &a.hardware).cmp(&(&b.model, &b.hardware)));
        c.contention.sort_by(|a, b| (&a.model, &a.hardware).cmp(&(&b.model, &b.hardware)));
        c.fusion_results.sort_by(|a, b| (&a.model, &a.hardware).cmp(&(&b.model, &b.hardware)));
        c.stale_steps.sort_by(|a, b| (&a.task, a.stale_steps).cmp(&(&b.task, b.stale_steps)));
        c
    }

    /// SHA-256 of the normalized catalog as compact JSON.
    pub fn normalized_hash(&self) -> String {
        let json = serde_json::to_vec(&self.normalized()).expect("catalog serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Files in the on-disk layout, one per kind.
    pub fn to_files(&self) -> Vec<(&'static str, String)> {
        fn pretty<T: Serialize>(v: &T) -> String {
            let mut s = serde_json::to_string_pretty(v).expect("catalog serializes");
            s.push('\n');
            s
        }
        vec![
            ("hardware.json", pretty(&self.hardware)),
            ("models.json", pretty(&self.models)),
            ("records.json", pretty(&self.records)),
            ("contention.json", pretty(&self.contention)),
            ("fusion_speedups.json", pretty(&self.fusion_results)),
            ("stale_steps.json", pretty(&self.stale_steps)),
        ]
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let io = |p: &Path, e: std::io::Error| Error::Io {
            path: p.display().to_string(),
            message: e.to_string(),
        };
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        for (name, text) in self.to_files() {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| io(&p, e))?;
        }
        Ok(())
    }
}

/// Parse a power trace with header `t_s,power_w`.
pub fn parse_power_csv<R: Read>(input: R, source: &str) -> Result<Vec<PowerSample>> {
    let err = |line: usize, field: &str, message: String| Error::Schema {
        path: source.to_string(),
        line,
        field: field.to_string(),
        message,
    };
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = r.headers().map_err(|e| err(1, "header", e.to_string()))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(err(1, "header", "empty file; expected header `t_s,power_w`".into()));
    }
    if headers.iter().ne(["t_s", "power_w"]) {
        return Err(err(1, "header", "expected header `t_s,power_w`".into()));
    }
    let mut out: Vec<PowerSample> = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            err(line, "row", e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize, name: &str| -> Result<f64> {
            let s = row.get(i).unwrap_or("");
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(line, name, format!("malformed number `{s}`")))
        };
        let t_s = num(0, "t_s")?;
        let power_w = num(1, "power_w")?;
        if power_w < 0.0 {
            return Err(err(line, "power_w", format!("negative power {power_w}")));
        }
        if let Some(prev) = out.last() {
            if t_s <= prev.t_s {
                return Err(err(
                    line,
                    "t_s",
                    format!("timestamp {t_s} does not increase (previous {})", prev.t_s),
                ));
            }
        }
        out.push(PowerSample { t_s, power_w });
    }
    if out.is_empty() {
        return Err(err(1, "row", "no samples".into()));
    }
    Ok(out)
}

pub fn ingest_power_csv(path: &Path) -> Result<Vec<PowerSample>> {
    let f = fs::File::open(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_power_csv(f, &path.display().to_string())
}
