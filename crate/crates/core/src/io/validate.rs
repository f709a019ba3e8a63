//! Schema checks on raw JSON values.
//!
//! Checks run on [`serde_json::Value`] rather than typed structs so that
//! every problem is reported with its path, and so that UIC samples can be
//! re-verified from the stored numbers alone.

use std::collections::HashSet;
use std::fmt;

use serde_json::{Map, Value};

use super::FileKind;

/// Slack for quantities recomputed from 9-digit rounded output.
const RECOMPUTE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Guesses the kind of a document from its top-level layout.
pub fn detect_kind(value: &Value) -> Option<FileKind> {
    let obj = value.as_object()?;
    if obj.contains_key("header") && obj.contains_key("samples") {
        return Some(FileKind::Uic);
    }
    if obj.contains_key("acc") && obj.contains_key("mean_iou") {
        return Some(FileKind::Report);
    }
    if obj.contains_key("weights") && obj.contains_key("images") {
        return Some(FileKind::Match);
    }
    let images = obj.get("images")?.as_array()?;
    let first = images.first().and_then(Value::as_object);
    match first {
        Some(img) if img.contains_key("width") || img.contains_key("height") => Some(FileKind::Annotations),
        Some(img) => {
            let view = img.get("views").and_then(Value::as_array).and_then(|v| v.first());
            match view.and_then(Value::as_object) {
                Some(v) if v.contains_key("score") => Some(FileKind::Annotations),
                _ => Some(FileKind::Predictions),
            }
        }
        None => Some(FileKind::Predictions),
    }
}

/// All schema violations of `value` read as `kind`.
pub fn validate(value: &Value, kind: FileKind) -> Vec<Violation> {
    let mut c = Checker::default();
    match kind {
        FileKind::Annotations => c.annotations(value),
        FileKind::Predictions => c.predictions(value),
        FileKind::Uic => c.uic(value),
        FileKind::Match => c.match_file(value),
        FileKind::Report => c.report(value),
    }
    c.violations
}

#[derive(Default)]
struct Checker {
    violations: Vec<Violation>,
}

fn at(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn idx(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

impl Checker {
    fn fail(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            path: if path.is_empty() { "$".into() } else { path.into() },
            message: message.into(),
        });
    }

    fn object<'a>(&mut self, v: &'a Value, path: &str) -> Option<&'a Map<String, Value>> {
        let o = v.as_object();
        if o.is_none() {
            self.fail(path, "expected an object");
        }
        o
    }

    fn field<'a>(&mut self, o: &'a Map<String, Value>, key: &str, path: &str) -> Option<&'a Value> {
        let v = o.get(key);
        if v.is_none() {
            self.fail(&at(path, key), "missing field");
        }
        v
    }

    fn array<'a>(&mut self, o: &'a Map<String, Value>, key: &str, path: &str) -> Option<&'a Vec<Value>> {
        let v = self.field(o, key, path)?;
        let a = v.as_array();
        if a.is_none() {
            self.fail(&at(path, key), "expected an array");
        }
        a
    }

    fn number(&mut self, o: &Map<String, Value>, key: &str, path: &str) -> Option<f64> {
        let v = self.field(o, key, path)?;
        self.number_value(v, &at(path, key))
    }

    fn number_value(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(path, "expected a finite number");
                None
            }
        }
    }

    fn number_in(&mut self, o: &Map<String, Value>, key: &str, path: &str, lo: f64, hi: f64) -> Option<f64> {
        let x = self.number(o, key, path)?;
        if !(lo..=hi).contains(&x) {
            self.fail(&at(path, key), format!("{x} is outside [{lo}, {hi}]"));
            return None;
        }
        Some(x)
    }

    fn uint(&mut self, o: &Map<String, Value>, key: &str, path: &str) -> Option<u64> {
        let v = self.field(o, key, path)?;
        let n = v.as_u64();
        if n.is_none() {
            self.fail(&at(path, key), "expected a non-negative integer");
        }
        n
    }

    fn string<'a>(&mut self, o: &'a Map<String, Value>, key: &str, path: &str) -> Option<&'a str> {
        let v = self.field(o, key, path)?;
        match v.as_str() {
            Some(s) if !s.is_empty() => Some(s),
            _ => {
                self.fail(&at(path, key), "expected a non-empty string");
                None
            }
        }
    }

    fn numbers<const K: usize>(&mut self, o: &Map<String, Value>, key: &str, path: &str) -> Option<[f64; K]> {
        let a = self.array(o, key, path)?;
        let p = at(path, key);
        if a.len() != K {
            self.fail(&p, format!("expected {K} numbers, found {}", a.len()));
            return None;
        }
        let mut out = [0.0; K];
        let mut ok = true;
        for (i, v) in a.iter().enumerate() {
            match self.number_value(v, &idx(&p, i)) {
                Some(x) => out[i] = x,
                None => ok = false,
            }
        }
        ok.then_some(out)
    }

    /// A `[cx, cy, w, h]` box with positive size.
    fn comp_box(&mut self, o: &Map<String, Value>, key: &str, path: &str) -> Option<[f64; 4]> {
        let b = self.numbers::<4>(o, key, path)?;
        if b[2] <= 0.0 || b[3] <= 0.0 {
            self.fail(
                &at(path, key),
                format!("width and height must be positive, got {} x {}", b[2], b[3]),
            );
            return None;
        }
        Some(b)
    }

    fn unique_id(&mut self, seen: &mut HashSet<String>, id: Option<&str>, path: &str) {
        if let Some(id) = id {
            if !seen.insert(id.to_string()) {
                self.fail(path, format!("duplicate id `{id}`"));
            }
        }
    }

    fn annotated_views(&mut self, o: &Map<String, Value>, key: &str, path: &str) -> Option<Vec<([f64; 4], f64)>> {
        let views = self.array(o, key, path)?;
        let vp = at(path, key);
        if views.is_empty() {
            self.fail(&vp, "expected at least one view");
        }
        let mut out = Vec::new();
        for (j, v) in views.iter().enumerate() {
            let p = idx(&vp, j);
            let Some(view) = self.object(v, &p) else { continue };
            let b = self.comp_box(view, "box", &p);
            let s = self.number(view, "score", &p);
            if let (Some(b), Some(s)) = (b, s) {
                out.push((b, s));
            }
        }
        (out.len() == views.len()).then_some(out)
    }

    fn annotations(&mut self, doc: &Value) {
        let Some(root) = self.object(doc, "") else { return };
        let Some(images) = self.array(root, "images", "") else {
            return;
        };
        let mut seen = HashSet::new();
        for (i, img) in images.iter().enumerate() {
            let p = idx("images", i);
            let Some(img) = self.object(img, &p) else { continue };
            let id = self.string(img, "id", &p);
            self.unique_id(&mut seen, id, &at(&p, "id"));
            for key in ["width", "height"] {
                if self.uint(img, key, &p) == Some(0) {
                    self.fail(&at(&p, key), "must be positive");
                }
            }
            self.annotated_views(img, "views", &p);
        }
    }

    fn predictions(&mut self, doc: &Value) {
        let Some(root) = self.object(doc, "") else { return };
        let Some(images) = self.array(root, "images", "") else {
            return;
        };
        let mut seen = HashSet::new();
        for (i, img) in images.iter().enumerate() {
            let p = idx("images", i);
            let Some(img) = self.object(img, &p) else { continue };
            let id = self.string(img, "id", &p);
            self.unique_id(&mut seen, id, &at(&p, "id"));
            let Some(views) = self.array(img, "views", &p) else {
                continue;
            };
            for (j, v) in views.iter().enumerate() {
                let vp = idx(&at(&p, "views"), j);
                let Some(view) = self.object(v, &vp) else { continue };
                self.comp_box(view, "box", &vp);
                self.number_in(view, "confidence", &vp, 0.0, 1.0);
            }
        }
    }

    fn range(&mut self, o: &Map<String, Value>, key: &str, path: &str, lo_excl: bool) -> Option<(f64, f64)> {
        let [lo, hi] = self.numbers::<2>(o, key, path)?;
        let lo_ok = if lo_excl { lo > 0.0 } else { lo >= 0.0 };
        if !(lo_ok && lo <= hi && hi <= 1.0) {
            self.fail(
                &at(path, key),
                format!("[{lo}, {hi}] is not an ordered range inside the unit interval"),
            );
            return None;
        }
        Some((lo, hi))
    }

    fn uic(&mut self, doc: &Value) {
        let Some(root) = self.object(doc, "") else { return };
        let mut scale = None;
        let mut frac = None;
        if let Some(h) = self.field(root, "header", "").and_then(|h| self.object(h, "header")) {
            self.uint(h, "format_version", "header");
            self.string(h, "tool_version", "header");
            self.uint(h, "seed", "header");
            if let Some(params) = self
                .field(h, "params", "header")
                .and_then(|v| self.object(v, "header.params"))
            {
                scale = self.range(params, "scale_range", "header.params", true);
                frac = self.range(params, "visible_frac", "header.params", false);
                if self.uint(params, "max_attempts", "header.params") == Some(0) {
                    self.fail("header.params.max_attempts", "must be positive");
                }
            }
        }
        if let Some(samples) = self.array(root, "samples", "") {
            let mut seen = HashSet::new();
            for (i, s) in samples.iter().enumerate() {
                let p = idx("samples", i);
                if let Some(s) = self.object(s, &p) {
                    let id = self.string(s, "image_id", &p);
                    self.unique_id(&mut seen, id, &at(&p, "image_id"));
                    self.uic_sample(s, &p, scale, frac);
                }
            }
        }
        if let Some(skipped) = self.array(root, "skipped", "") {
            for (i, s) in skipped.iter().enumerate() {
                let p = idx("skipped", i);
                if let Some(s) = self.object(s, &p) {
                    self.string(s, "id", &p);
                    self.string(s, "reason", &p);
                }
            }
        }
    }

    fn uic_sample(&mut self, s: &Map<String, Value>, p: &str, scale: Option<(f64, f64)>, frac: Option<(f64, f64)>) {
        if let Some([x0, y0, x1, y1]) = self.numbers::<4>(s, "init_view", p) {
            let ip = at(p, "init_view");
            if !(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0) {
                self.fail(&ip, "initial view must be a non-empty box inside the full image");
            } else {
                let (w, h) = (x1 - x0, y1 - y0);
                if (w - h).abs() > RECOMPUTE_TOL {
                    self.fail(&ip, format!("initial view is {w} x {h}, expected equal relative sides"));
                }
                if let Some((lo, hi)) = scale {
                    if w < lo - RECOMPUTE_TOL || w > hi + RECOMPUTE_TOL {
                        self.fail(
                            &ip,
                            format!("relative side {w} is outside the scale range [{lo}, {hi}]"),
                        );
                    }
                }
            }
        }
        let stored = self.number_in(s, "visible_fraction", p, 0.0, 1.0);
        let Some(views) = self.annotated_views(s, "gt_views", p) else {
            return;
        };
        if views.is_empty() {
            return;
        }
        let corners = |b: &[f64; 4]| {
            (
                b[0] - b[2] / 2.0,
                b[1] - b[3] / 2.0,
                b[0] + b[2] / 2.0,
                b[1] + b[3] / 2.0,
            )
        };
        let outside = views.iter().any(|(b, _)| {
            let (x0, y0, x1, y1) = corners(b);
            x0 < 0.0 || y0 < 0.0 || x1 > 1.0 || y1 > 1.0
        });
        if !outside {
            self.fail(
                &at(p, "gt_views"),
                "unbounded property violated: every view lies inside the initial view",
            );
        }
        let mut top = 0;
        for (j, (_, score)) in views.iter().enumerate() {
            if *score > views[top].1 {
                top = j;
            }
        }
        let (x0, y0, x1, y1) = corners(&views[top].0);
        let inside = (x1.min(1.0) - x0.max(0.0)).max(0.0) * (y1.min(1.0) - y0.max(0.0)).max(0.0);
        let recomputed = inside / ((x1 - x0) * (y1 - y0));
        let fp = at(p, "visible_fraction");
        if let Some(stored) = stored {
            if (stored - recomputed).abs() > RECOMPUTE_TOL {
                self.fail(&fp, format!("stored {stored} but the top view is {recomputed} visible"));
            }
        }
        if let Some((lo, hi)) = frac {
            if recomputed < lo - RECOMPUTE_TOL || recomputed > hi + RECOMPUTE_TOL {
                self.fail(&fp, format!("top view is {recomputed} visible, outside [{lo}, {hi}]"));
            }
        }
    }

    fn breakdown(&mut self, o: &Map<String, Value>, path: &str) {
        let Some(b) = self
            .field(o, "breakdown", path)
            .and_then(|v| self.object(v, &at(path, "breakdown")))
        else {
            return;
        };
        for key in ["reg", "giou", "focal", "total"] {
            self.number_in(b, key, &at(path, "breakdown"), 0.0, f64::INFINITY);
        }
    }

    fn match_file(&mut self, doc: &Value) {
        let Some(root) = self.object(doc, "") else { return };
        self.string(root, "tool_version", "");
        self.number_in(root, "total_cost", "", 0.0, f64::INFINITY);
        if let Some(w) = self.field(root, "weights", "").and_then(|v| self.object(v, "weights")) {
            for key in ["lambda_iou", "lambda_focal", "beta"] {
                self.number_in(w, key, "weights", 0.0, f64::INFINITY);
            }
        }
        let Some(images) = self.array(root, "images", "") else {
            return;
        };
        let mut seen = HashSet::new();
        for (i, img) in images.iter().enumerate() {
            let p = idx("images", i);
            let Some(img) = self.object(img, &p) else { continue };
            let id = self.string(img, "id", &p);
            self.unique_id(&mut seen, id, &at(&p, "id"));
            self.number_in(img, "total_cost", &p, 0.0, f64::INFINITY);
            self.breakdown(img, &p);
            let slots = self.uint(img, "slots", &p);
            let Some(sigma) = self.array(img, "sigma", &p) else {
                continue;
            };
            let sp = at(&p, "sigma");
            let entries: Option<Vec<u64>> = sigma.iter().map(Value::as_u64).collect();
            match (entries, slots) {
                (Some(mut e), Some(n)) => {
                    e.sort_unstable();
                    if e != (0..n).collect::<Vec<_>>() {
                        self.fail(&sp, format!("not a permutation of 0..{n}"));
                    }
                }
                (None, _) => self.fail(&sp, "expected non-negative integers"),
                _ => {}
            }
        }
    }

    fn report(&mut self, doc: &Value) {
        let Some(root) = self.object(doc, "") else { return };
        self.string(root, "tool_version", "");
        if let Some(cfg) = self.field(root, "config", "").and_then(|v| self.object(v, "config")) {
            for key in ["k_values", "n_values", "thresholds"] {
                if let Some(a) = self.array(cfg, key, "config") {
                    if a.is_empty() {
                        self.fail(&at("config", key), "expected at least one value");
                    }
                }
            }
        }
        if let Some(acc) = self.field(root, "acc", "").and_then(|v| self.object(v, "acc")) {
            for key in acc.keys() {
                self.number_in(acc, key, "acc", 0.0, 1.0);
            }
        }
        self.number_in(root, "mean_iou", "", 0.0, 1.0);
        self.number_in(root, "mean_disp", "", 0.0, f64::INFINITY);
        self.uint(root, "image_count", "");
        if let Some(inputs) = self.field(root, "inputs", "").and_then(|v| self.object(v, "inputs")) {
            for key in ["annotations", "predictions"] {
                if let Some(d) = self.string(inputs, key, "inputs") {
                    if d.len() != 64 || !d.bytes().all(|b| b.is_ascii_hexdigit()) {
                        self.fail(&at("inputs", key), "expected a SHA-256 hex digest");
                    }
                }
            }
        }
    }
}
