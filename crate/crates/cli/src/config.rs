use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use fractal_spectra::analysis::WindowRule;
use fractal_spectra::geometry::{ModelKind, DEFAULT_VERTEX_CAP};
use fractal_spectra::measure::{validate_measure, MeasureParams};
use fractal_spectra::pipeline::Problem;
use fractal_spectra::quantum::{LengthConvention, DEFAULT_THRESHOLD};
use fractal_spectra::resistance::ResistanceParams;
use fractal_spectra::spectrum::BoundaryCondition;

use crate::error::CliError;

const KEYS: &[&str] = &[
    "model",
    "level",
    "r",
    "a",
    "b",
    "c",
    "bc",
    "fit_window",
    "lambda_max",
    "grid_step",
    "threshold",
    "length_convention",
    "renormalize",
    "index",
    "plot",
    "vertex_cap",
    "out",
];

// 2^53: integers up to here convert to f64 exactly, so p/q rounds once.
const EXACT_INT: i64 = 1 << 53;

/// A real parameter together with the text it was given as, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: f64,
    pub text: Option<String>,
}

impl Param {
    pub fn num(value: f64) -> Self {
        Param { value, text: None }
    }

    fn to_json(&self) -> Value {
        match &self.text {
            Some(t) => Value::String(t.clone()),
            None => json!(self.value),
        }
    }
}

/// Parses `"p/q"` or a decimal literal. `p/q` is a single correctly rounded
/// division, i.e. the double nearest the rational.
pub fn parse_number(text: &str) -> Option<f64> {
    let t = text.trim();
    if let Some((p, q)) = t.split_once('/') {
        let p: i64 = p.trim().parse().ok()?;
        let q: i64 = q.trim().parse().ok()?;
        if q == 0 || p.abs() > EXACT_INT || q.abs() > EXACT_INT {
            return None;
        }
        return Some(p as f64 / q as f64);
    }
    t.parse::<f64>().ok().filter(|x| x.is_finite())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitWindow {
    Rule(WindowRule),
    /// Explicit `[lo, hi]` in eigenvalue units.
    Range(f64, f64),
}

impl FitWindow {
    pub fn text(&self) -> String {
        match self {
            FitWindow::Rule(WindowRule::Bend) => "bend".into(),
            FitWindow::Rule(WindowRule::Quantile(q)) => format!("quantile:{q}"),
            FitWindow::Range(lo, hi) => format!("range:{lo}:{hi}"),
        }
    }

    fn parse(text: &str) -> Option<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        match parts.as_slice() {
            ["bend"] => Some(FitWindow::Rule(WindowRule::Bend)),
            ["quantile", q] => {
                let q = parse_number(q)?;
                (q > 0.0 && q < 1.0).then_some(FitWindow::Rule(WindowRule::Quantile(q)))
            }
            ["range", lo, hi] => {
                let (lo, hi) = (parse_number(lo)?, parse_number(hi)?);
                (lo > 0.0 && hi > lo).then_some(FitWindow::Range(lo, hi))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Step plot of the counting function.
    Counting,
    /// Log-log counting function with the fitted power law.
    LogLog,
    /// `N(x)/x^{d_S/2}` on a log grid.
    Weyl,
    /// Eigenfunction `index` over the layout.
    Eigfun,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Counting => "counting",
            PlotKind::LogLog => "loglog",
            PlotKind::Weyl => "weyl",
            PlotKind::Eigfun => "eigfun",
        }
    }

    fn parse(text: &str) -> Option<Self> {
        [PlotKind::Counting, PlotKind::LogLog, PlotKind::Weyl, PlotKind::Eigfun]
            .into_iter()
            .find(|k| k.name() == text)
    }
}

fn parse_bc(text: &str) -> Option<BoundaryCondition> {
    [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann]
        .into_iter()
        .find(|b| b.name() == text)
}

fn parse_convention(text: &str) -> Option<LengthConvention> {
    [
        LengthConvention::ResistanceLengths,
        LengthConvention::PowerLengths,
        LengthConvention::BondScaledLengths,
    ]
    .into_iter()
    .find(|c| c.name() == text)
}

fn parse_model(text: &str) -> Option<ModelKind> {
    [ModelKind::Hanoi, ModelKind::Sg3Hybrid]
        .into_iter()
        .find(|m| m.name() == text)
}

/// Fully validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub level: u32,
    pub r: Param,
    pub a: Param,
    /// Segment mass ratio; SG3 only.
    pub b: Option<Param>,
    /// Inverted-gasket mass ratio; SG3 only, derived when absent.
    pub c: Option<Param>,
    pub bc: BoundaryCondition,
    pub fit_window: FitWindow,
    /// Upper end of the quantum-graph scan in `λ`.
    pub lambda_max: f64,
    pub grid_step: Option<f64>,
    pub threshold: f64,
    pub length_convention: LengthConvention,
    pub renormalize: bool,
    /// Eigenfunction index for `export-eigfun` and eigenfunction plots.
    pub index: usize,
    pub plot: PlotKind,
    pub vertex_cap: u64,
    pub out: PathBuf,
}

impl RunConfig {
    pub fn resistance(&self) -> ResistanceParams {
        ResistanceParams::for_model(self.model, self.r.value).expect("validated at parse time")
    }

    pub fn measure(&self) -> MeasureParams {
        match self.model {
            ModelKind::Hanoi => MeasureParams::hanoi(self.a.value),
            ModelKind::Sg3Hybrid => MeasureParams::sg3(
                self.a.value,
                self.b.as_ref().map_or(f64::NAN, |b| b.value),
                self.c.as_ref().map(|c| c.value),
            ),
        }
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let mut p = Problem::new(self.level, self.resistance(), self.measure())?;
        p.vertex_cap = self.vertex_cap;
        Ok(p)
    }

    /// Config with every default filled in; parses back to `self`.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("model".into(), json!(self.model.name()));
        m.insert("level".into(), json!(self.level));
        m.insert("r".into(), self.r.to_json());
        m.insert("a".into(), self.a.to_json());
        if let Some(b) = &self.b {
            m.insert("b".into(), b.to_json());
        }
        if let Some(c) = &self.c {
            m.insert("c".into(), c.to_json());
        }
        m.insert("bc".into(), json!(self.bc.name()));
        m.insert("fit_window".into(), json!(self.fit_window.text()));
        m.insert("lambda_max".into(), json!(self.lambda_max));
        if let Some(g) = self.grid_step {
            m.insert("grid_step".into(), json!(g));
        }
        m.insert("threshold".into(), json!(self.threshold));
        m.insert("length_convention".into(), json!(self.length_convention.name()));
        m.insert("renormalize".into(), json!(self.renormalize));
        m.insert("index".into(), json!(self.index));
        m.insert("plot".into(), json!(self.plot.name()));
        m.insert("vertex_cap".into(), json!(self.vertex_cap));
        m.insert("out".into(), json!(self.out.to_string_lossy()));
        Value::Object(m)
    }
}

struct Reader<'a> {
    obj: &'a Map<String, Value>,
}

impl Reader<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.obj.get(key).filter(|v| !v.is_null())
    }

    fn required(&self, key: &str) -> Result<&Value, CliError> {
        self.get(key)
            .ok_or_else(|| CliError::config(format!(".{key}"), "required key is missing"))
    }

    fn string(&self, key: &str) -> Result<Option<&str>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(CliError::config(format!(".{key}"), "expected a string")),
        }
    }

    fn choice<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>, CliError> {
        match self.string(key)? {
            None => Ok(None),
            Some(s) => parse(s)
                .map(Some)
                .ok_or_else(|| CliError::config(format!(".{key}"), format!("unknown {what} {s:?}"))),
        }
    }

    fn param(&self, key: &str) -> Result<Option<Param>, CliError> {
        let path = format!(".{key}");
        match self.get(key) {
            None => Ok(None),
            Some(Value::Number(n)) => {
                let value = n.as_f64().filter(|x| x.is_finite());
                value
                    .map(|value| Some(Param::num(value)))
                    .ok_or_else(|| CliError::config(path, "not a finite number"))
            }
            Some(Value::String(s)) => parse_number(s)
                .map(|value| {
                    Some(Param {
                        value,
                        text: Some(s.clone()),
                    })
                })
                .ok_or_else(|| CliError::config(path, format!("cannot parse {s:?} as a number or p/q"))),
            Some(_) => Err(CliError::config(path, "expected a number or a \"p/q\" string")),
        }
    }

    fn real(&self, key: &str) -> Result<Option<f64>, CliError> {
        Ok(self.param(key)?.map(|p| p.value))
    }

    fn uint(&self, key: &str) -> Result<Option<u64>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| CliError::config(format!(".{key}"), "expected a non-negative integer")),
        }
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(_) => Err(CliError::config(format!(".{key}"), "expected true or false")),
        }
    }
}

fn positive(key: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::config(format!(".{key}"), format!("{x} must be positive")))
    }
}

/// Which key a measure-validation message is about.
fn measure_key(message: &str, c_given: bool) -> &'static str {
    if message.starts_with("a ") {
        ".a"
    } else if message.starts_with("b ") {
        ".b"
    } else if c_given {
        ".c"
    } else {
        // c is derived from a and b, so blame b
        ".b"
    }
}

/// Validates a JSON config document.
pub fn parse_value(doc: &Value) -> Result<RunConfig, CliError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| CliError::config(".", "config must be a JSON object"))?;
    if let Some(k) = obj.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(CliError::config(format!(".{k}"), "unknown key"));
    }
    let rd = Reader { obj };

    let model_text = match rd.required("model")? {
        Value::String(s) => s.as_str(),
        _ => return Err(CliError::config(".model", "expected a string")),
    };
    let model = parse_model(model_text)
        .ok_or_else(|| CliError::config(".model", format!("unknown model {model_text:?}, expected hanoi or sg3")))?;
    rd.required("level")?;
    let level = rd.uint("level")?.unwrap_or(0);
    let level = u32::try_from(level).map_err(|_| CliError::config(".level", "level too large"))?;
    rd.required("r")?;
    let r = rd.param("r")?.expect("present");
    rd.required("a")?;
    let a = rd.param("a")?.expect("present");
    let (b, c) = match model {
        ModelKind::Hanoi => {
            for key in ["b", "c"] {
                if rd.get(key).is_some() {
                    return Err(CliError::config(
                        format!(".{key}"),
                        "the Hanoi model derives its bond mass from a",
                    ));
                }
            }
            (None, None)
        }
        ModelKind::Sg3Hybrid => {
            rd.required("b")?;
            (rd.param("b")?, rd.param("c")?)
        }
    };

    ResistanceParams::for_model(model, r.value).map_err(|e| CliError::at(e, ".r"))?;
    let measure = match model {
        ModelKind::Hanoi => MeasureParams::hanoi(a.value),
        ModelKind::Sg3Hybrid => MeasureParams::sg3(
            a.value,
            b.as_ref().expect("required").value,
            c.as_ref().map(|c| c.value),
        ),
    };
    if let Some(first) = validate_measure(&measure).first() {
        return Err(CliError::config(measure_key(first, c.is_some()), first.clone()));
    }

    let bc = rd
        .choice("bc", parse_bc, "boundary condition")?
        .unwrap_or(BoundaryCondition::Dirichlet);
    let fit_window = rd
        .choice("fit_window", FitWindow::parse, "fit window")?
        .unwrap_or(FitWindow::Rule(WindowRule::Bend));
    let lambda_max = positive("lambda_max", rd.real("lambda_max")?.unwrap_or(20.0))?;
    let grid_step = rd
        .real("grid_step")?
        .map(|g| positive("grid_step", g))
        .transpose()?;
    let threshold = rd.real("threshold")?.unwrap_or(DEFAULT_THRESHOLD);
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CliError::config(".threshold", format!("{threshold} outside (0, 1)")));
    }
    let length_convention = rd
        .choice("length_convention", parse_convention, "length convention")?
        .unwrap_or(LengthConvention::BondScaledLengths);
    let renormalize = rd.boolean("renormalize")?.unwrap_or(false);
    let index = rd.uint("index")?.unwrap_or(0) as usize;
    let plot = rd.choice("plot", PlotKind::parse, "plot kind")?.unwrap_or(PlotKind::Counting);
    let vertex_cap = rd.uint("vertex_cap")?.unwrap_or(DEFAULT_VERTEX_CAP);
    let out = PathBuf::from(rd.string("out")?.unwrap_or("out"));

    Ok(RunConfig {
        model,
        level,
        r,
        a,
        b,
        c,
        bc,
        fit_window,
        lambda_max,
        grid_step,
        threshold,
        length_convention,
        renormalize,
        index,
        plot,
        vertex_cap,
        out,
    })
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| CliError::config(".", format!("invalid JSON: {e}")))?;
    parse_value(&doc)
}

/// Reads a config file, then lets `overrides` (already keyed by config
/// name) replace individual entries.
pub fn parse_config(path: Option<&Path>, overrides: Map<String, Value>) -> Result<RunConfig, CliError> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(".", format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::config(".", format!("invalid JSON in {}: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    let obj = doc
        .as_object_mut()
        .ok_or_else(|| CliError::config(".", "config must be a JSON object"))?;
    obj.extend(overrides);
    parse_value(&doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hanoi_doc() -> Value {
        json!({"model": "hanoi", "level": 6, "r": "1/6", "a": "1/6", "bc": "dirichlet"})
    }

    #[test]
    fn rational_strings_are_exact() {
        let cfg = parse_value(&hanoi_doc()).unwrap();
        assert_eq!(cfg.r.value, 1.0 / 6.0);
        assert_eq!(cfg.r.text.as_deref(), Some("1/6"));
        assert_eq!(cfg.to_json()["r"], "1/6");
        assert_eq!(parse_number("10/33"), Some(10.0 / 33.0));
        assert_eq!(parse_number(" -3/4 "), Some(-0.75));
        assert_eq!(parse_number("1/0"), None);
        assert_eq!(parse_number("abc"), None);
    }

    #[test]
    fn sg3_rejects_large_r() {
        let doc = json!({"model": "sg3", "level": 2, "r": "1/2", "a": "1/12", "b": "1/13"});
        let err = parse_value(&doc).unwrap_err();
        assert_eq!(err.key.as_deref(), Some(".r"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_a_names_its_path() {
        let doc = json!({"model": "hanoi", "level": 2, "r": "1/6"});
        assert_eq!(parse_value(&doc).unwrap_err().key.as_deref(), Some(".a"));
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        let mut doc = hanoi_doc();
        doc["colour"] = json!("red");
        assert_eq!(parse_value(&doc).unwrap_err().key.as_deref(), Some(".colour"));
        let mut doc = hanoi_doc();
        doc["level"] = json!("six");
        assert_eq!(parse_value(&doc).unwrap_err().key.as_deref(), Some(".level"));
        let mut doc = hanoi_doc();
        doc["bc"] = json!("robin");
        assert_eq!(parse_value(&doc).unwrap_err().key.as_deref(), Some(".bc"));
        let mut doc = hanoi_doc();
        doc["b"] = json!(0.1);
        assert_eq!(parse_value(&doc).unwrap_err().key.as_deref(), Some(".b"));
    }

    #[test]
    fn measure_violations_are_located() {
        let doc = json!({"model": "hanoi", "level": 1, "r": 0.2, "a": 0.4});
        assert_eq!(parse_value(&doc).unwrap_err().key.as_deref(), Some(".a"));
        // derived c = 1 - 6a - 6b < 0
        let doc = json!({"model": "sg3", "level": 1, "r": 0.1, "a": 0.1, "b": 0.1});
        assert_eq!(parse_value(&doc).unwrap_err().key.as_deref(), Some(".b"));
        let doc = json!({"model": "sg3", "level": 1, "r": 0.1, "a": 0.1, "b": 0.05, "c": 0.5});
        assert_eq!(parse_value(&doc).unwrap_err().key.as_deref(), Some(".c"));
    }

    #[test]
    fn defaults_filled() {
        let cfg = parse_value(&hanoi_doc()).unwrap();
        assert_eq!(cfg.fit_window, FitWindow::Rule(WindowRule::Bend));
        assert_eq!(cfg.length_convention, LengthConvention::BondScaledLengths);
        assert_eq!(cfg.vertex_cap, DEFAULT_VERTEX_CAP);
        assert_eq!(cfg.out, PathBuf::from("out"));
        assert!(!cfg.renormalize);
    }

    #[test]
    fn fit_window_forms() {
        assert_eq!(FitWindow::parse("quantile:0.6"), Some(FitWindow::Rule(WindowRule::Quantile(0.6))));
        assert_eq!(FitWindow::parse("range:10:1e4"), Some(FitWindow::Range(10.0, 1e4)));
        assert_eq!(FitWindow::parse("quantile:1.5"), None);
        assert_eq!(FitWindow::parse("range:5:1"), None);
    }

    #[test]
    fn overrides_replace_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, hanoi_doc().to_string()).unwrap();
        let mut over = Map::new();
        over.insert("level".into(), json!(2));
        let cfg = parse_config(Some(&path), over).unwrap();
        assert_eq!(cfg.level, 2);
        assert_eq!(cfg.a.value, 1.0 / 6.0);
    }

    fn arb_param() -> impl Strategy<Value = Param> {
        prop_oneof![
            (1i64..5, 63i64..400).prop_map(|(p, q)| Param {
                value: p as f64 / q as f64,
                text: Some(format!("{p}/{q}")),
            }),
            (0.001f64..0.08).prop_map(Param::num),
        ]
    }

    proptest! {
        #[test]
        fn serialize_round_trips(
            level in 0u32..7,
            r in arb_param(),
            a in arb_param(),
            b in arb_param(),
            sg3 in any::<bool>(),
            window in prop_oneof![
                Just(FitWindow::Rule(WindowRule::Bend)),
                (0.05f64..0.95).prop_map(|q| FitWindow::Rule(WindowRule::Quantile(q))),
                (0.1f64..10.0, 11.0f64..1e5).prop_map(|(lo, hi)| FitWindow::Range(lo, hi)),
            ],
            lambda_max in 0.5f64..100.0,
            grid in proptest::option::of(1e-4f64..0.1),
            renormalize in any::<bool>(),
            index in 0usize..50,
        ) {
            let cfg = RunConfig {
                model: if sg3 { ModelKind::Sg3Hybrid } else { ModelKind::Hanoi },
                level,
                r,
                a,
                b: sg3.then_some(b),
                c: None,
                bc: BoundaryCondition::Neumann,
                fit_window: window,
                lambda_max,
                grid_step: grid,
                threshold: 1e-9,
                length_convention: LengthConvention::PowerLengths,
                renormalize,
                index,
                plot: PlotKind::Weyl,
                vertex_cap: 12345,
                out: PathBuf::from("runs/x"),
            };
            let back = parse_value(&cfg.to_json()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
