//! Design spaces, designs, patient contexts and their numeric/text forms.
//!
//! Every design has a lossless numeric encoding used as critic and surrogate
//! input: continuous dimensions are min-max scaled to `[0, 1]`, booleans map
//! to `{0, 1}` and categoricals are one-hot.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{schema, Result};

/// Kind of a single design dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimKind {
    Continuous { lo: f64, hi: f64 },
    Boolean,
    Categorical { labels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dim {
    pub name: String,
    #[serde(flatten)]
    pub kind: DimKind,
}

impl Dim {
    pub fn continuous(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Dim { name: name.into(), kind: DimKind::Continuous { lo, hi } }
    }

    pub fn boolean(name: impl Into<String>) -> Self {
        Dim { name: name.into(), kind: DimKind::Boolean }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Self {
        Dim {
            name: name.into(),
            kind: DimKind::Categorical { labels: labels.into_iter().map(Into::into).collect() },
        }
    }

    /// Number of encoded coordinates this dimension occupies.
    pub fn width(&self) -> usize {
        match &self.kind {
            DimKind::Continuous { .. } | DimKind::Boolean => 1,
            DimKind::Categorical { labels } => labels.len(),
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, DimKind::Continuous { .. })
    }
}

/// The schema of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dim>", into = "Vec<Dim>")]
pub struct DesignSpace {
    dims: Vec<Dim>,
}

impl TryFrom<Vec<Dim>> for DesignSpace {
    type Error = crate::LeonError;

    fn try_from(dims: Vec<Dim>) -> Result<Self> {
        DesignSpace::new(dims)
    }
}

impl From<DesignSpace> for Vec<Dim> {
    fn from(space: DesignSpace) -> Self {
        space.dims
    }
}

impl DesignSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(schema("design space needs at least one dimension"));
        }
        for dim in &dims {
            match &dim.kind {
                DimKind::Continuous { lo, hi } => {
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(schema(format!("dimension `{}` needs finite lo < hi", dim.name)));
                    }
                }
                DimKind::Boolean => {}
                DimKind::Categorical { labels } => {
                    if labels.is_empty() {
                        return Err(schema(format!("dimension `{}` has no labels", dim.name)));
                    }
                    for (i, label) in labels.iter().enumerate() {
                        if labels[..i].contains(label) {
                            return Err(schema(format!(
                                "dimension `{}` repeats label `{label}`",
                                dim.name
                            )));
                        }
                    }
                }
            }
        }
        Ok(DesignSpace { dims })
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    /// Length of [`encode`](Self::encode) output.
    pub fn encoded_width(&self) -> usize {
        self.dims.iter().map(Dim::width).sum()
    }

    pub fn has_continuous(&self) -> bool {
        self.dims.iter().any(Dim::is_continuous)
    }

    pub fn validate(&self, design: &Design) -> Result<()> {
        if design.values.len() != self.dims.len() {
            return Err(schema(format!(
                "design has {} values but the space has {} dimensions",
                design.values.len(),
                self.dims.len()
            )));
        }
        for (dim, value) in self.dims.iter().zip(&design.values) {
            match (&dim.kind, value) {
                (DimKind::Continuous { lo, hi }, Value::Real(v)) => {
                    if !(v.is_finite() && *v >= *lo && *v <= *hi) {
                        return Err(schema(format!("`{}` = {v} outside [{lo}, {hi}]", dim.name)));
                    }
                }
                (DimKind::Boolean, Value::Bool(_)) => {}
                (DimKind::Categorical { labels }, Value::Label(i)) => {
                    if *i >= labels.len() {
                        return Err(schema(format!("`{}` label index {i} out of range", dim.name)));
                    }
                }
                _ => return Err(schema(format!("`{}` has a value of the wrong kind", dim.name))),
            }
        }
        Ok(())
    }

    pub fn encode(&self, design: &Design) -> Result<Vec<f64>> {
        self.validate(design)?;
        let mut out = Vec::with_capacity(self.encoded_width());
        self.encode_into(design, &mut out);
        Ok(out)
    }

    /// Encodes a design already known to be valid.
    pub(crate) fn encode_into(&self, design: &Design, out: &mut Vec<f64>) {
        for (dim, value) in self.dims.iter().zip(&design.values) {
            match (&dim.kind, value) {
                (DimKind::Continuous { lo, hi }, Value::Real(v)) => out.push((v - lo) / (hi - lo)),
                (DimKind::Boolean, Value::Bool(b)) => out.push(if *b { 1.0 } else { 0.0 }),
                (DimKind::Categorical { labels }, Value::Label(i)) => {
                    out.extend((0..labels.len()).map(|j| if j == *i { 1.0 } else { 0.0 }))
                }
                _ => unreachable!("encode_into called on an unvalidated design"),
            }
        }
    }

    /// Inverse of [`encode`](Self::encode) up to clamping. Booleans threshold
    /// at 0.5; categoricals take the argmax with the lowest index winning ties.
    pub fn decode(&self, v: &[f64]) -> Result<Design> {
        if v.len() != self.encoded_width() {
            return Err(schema(format!(
                "encoded vector has length {} but the space expects {}",
                v.len(),
                self.encoded_width()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(schema("encoded vector contains non-finite entries"));
        }
        let mut values = Vec::with_capacity(self.dims.len());
        let mut at = 0;
        for dim in &self.dims {
            let w = dim.width();
            let chunk = &v[at..at + w];
            at += w;
            values.push(match &dim.kind {
                DimKind::Continuous { lo, hi } => {
                    Value::Real((lo + chunk[0].clamp(0.0, 1.0) * (hi - lo)).clamp(*lo, *hi))
                }
                DimKind::Boolean => Value::Bool(chunk[0] >= 0.5),
                DimKind::Categorical { .. } => {
                    let mut best = 0;
                    for (j, x) in chunk.iter().enumerate() {
                        if *x > chunk[best] {
                            best = j;
                        }
                    }
                    Value::Label(best)
                }
            });
        }
        Ok(Design { values })
    }

    /// Human-readable value of one dimension, e.g. `32.0` or a label.
    pub fn format_value(&self, dim_index: usize, value: &Value) -> String {
        match (&self.dims[dim_index].kind, value) {
            (_, Value::Real(v)) => format!("{v:.1}"),
            (DimKind::Boolean, Value::Bool(b)) => (if *b { "yes" } else { "no" }).to_string(),
            (DimKind::Categorical { labels }, Value::Label(i)) => {
                labels.get(*i).cloned().unwrap_or_else(|| format!("#{i}"))
            }
            (_, Value::Bool(b)) => b.to_string(),
            (_, Value::Label(i)) => format!("#{i}"),
        }
    }

    /// Compact JSON object `{"<dim name>": value, ...}` used in prompts and
    /// in the structured-output contract.
    pub fn design_to_json(&self, design: &Design) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (dim, value) in self.dims.iter().zip(&design.values) {
            let v = match (&dim.kind, value) {
                (_, Value::Real(x)) => serde_json::json!(x),
                (_, Value::Bool(b)) => serde_json::json!(b),
                (DimKind::Categorical { labels }, Value::Label(i)) => {
                    serde_json::json!(labels.get(*i).cloned().unwrap_or_default())
                }
                (_, Value::Label(i)) => serde_json::json!(i),
            };
            map.insert(dim.name.clone(), v);
        }
        serde_json::Value::Object(map)
    }
}

/// A single coordinate of a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Label(usize),
    Real(f64),
}

/// A concrete point of a [`DesignSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub values: Vec<Value>,
}

impl Design {
    pub fn new(values: Vec<Value>) -> Self {
        Design { values }
    }

    pub fn reals(xs: &[f64]) -> Self {
        Design { values: xs.iter().map(|x| Value::Real(*x)).collect() }
    }

    pub fn bools(bs: &[bool]) -> Self {
        Design { values: bs.iter().map(|b| Value::Bool(*b)).collect() }
    }
}

/// The conditioning vector of one optimization instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub features: Vec<f64>,
    pub id: String,
}

impl Context {
    pub fn new(id: impl Into<String>, features: Vec<f64>) -> Self {
        Context { features, id: id.into() }
    }

    /// All-zero context used when fitting context-free structures.
    pub fn reference(dim: usize) -> Self {
        Context { features: vec![0.0; dim], id: "reference".to_string() }
    }
}

/// Patient description: task name, context id and every feature.
pub fn render_context(task_name: &str, ctx: &Context) -> String {
    let mut out = format!("Task: {task_name}\nPatient: {}\nPatient features:", ctx.id);
    for (i, f) in ctx.features.iter().enumerate() {
        let _ = write!(out, " z{i}={f:.2}");
    }
    out.push('\n');
    out
}

/// Natural-language rendering of a patient/design pair. Deterministic; each
/// design dimension occupies its own `<name>: <value>` line.
pub fn render_text(task_name: &str, space: &DesignSpace, ctx: &Context, design: &Design) -> Result<String> {
    space.validate(design)?;
    let mut out = render_context(task_name, ctx);
    out.push_str("Treatment design:\n");
    for (i, (dim, value)) in space.dims().iter().zip(&design.values).enumerate() {
        let _ = writeln!(out, "{}: {}", dim.name, space.format_value(i, value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn abc() -> DesignSpace {
        DesignSpace::new(vec![Dim::categorical("drug", ["a", "b", "c"])]).unwrap()
    }

    #[test]
    fn encode_examples() {
        let s = DesignSpace::new(vec![Dim::continuous("Dose", 0.0, 100.0)]).unwrap();
        assert_eq!(s.encode(&Design::reals(&[50.0])).unwrap(), vec![0.5]);

        let s = DesignSpace::new(vec![Dim::boolean("a"), Dim::boolean("b"), Dim::boolean("c")]).unwrap();
        assert_eq!(s.encode(&Design::bools(&[true, false, true])).unwrap(), vec![1.0, 0.0, 1.0]);

        let one_hot: Vec<f64> = (0..3).map(|j| if j == 1 { 1.0 } else { 0.0 }).collect();
        assert_eq!(abc().encode(&Design::new(vec![Value::Label(1)])).unwrap(), one_hot);
    }

    #[test]
    fn decode_examples() {
        let s = DesignSpace::new(vec![Dim::continuous("Dose", 0.0, 100.0)]).unwrap();
        assert_eq!(s.decode(&[0.5]).unwrap(), Design::reals(&[50.0]));
        assert_eq!(s.decode(&[1.7]).unwrap(), Design::reals(&[100.0]));
        assert_eq!(abc().decode(&[0.2, 0.9, 0.2]).unwrap(), Design::new(vec![Value::Label(1)]));
        assert_eq!(abc().decode(&[0.5, 0.5, 0.1]).unwrap(), Design::new(vec![Value::Label(0)]));
    }

    #[test]
    fn schema_errors() {
        let s = DesignSpace::new(vec![Dim::continuous("Dose", 0.0, 100.0)]).unwrap();
        assert!(matches!(s.encode(&Design::reals(&[1.0, 2.0])), Err(crate::LeonError::Schema(_))));
        assert!(matches!(s.decode(&[0.1, 0.2]), Err(crate::LeonError::Schema(_))));
        assert!(s.validate(&Design::reals(&[101.0])).is_err());
        assert!(DesignSpace::new(vec![]).is_err());
        assert!(DesignSpace::new(vec![Dim::continuous("x", 1.0, 1.0)]).is_err());
        assert!(DesignSpace::new(vec![Dim::categorical("c", ["a", "a"])]).is_err());
        assert!(DesignSpace::new(vec![Dim::categorical("c", Vec::<String>::new())]).is_err());
    }

    #[test]
    fn render_contains_dose_fragment_and_is_stable() {
        let s = DesignSpace::new(vec![Dim::continuous("Dose", 0.0, 100.0)]).unwrap();
        let ctx = Context::new("p0", vec![0.5, -1.0]);
        let a = render_text("dose", &s, &ctx, &Design::reals(&[32.0])).unwrap();
        assert!(a.contains("Dose: 32.0"), "{a}");
        assert_eq!(a, render_text("dose", &s, &ctx, &Design::reals(&[32.0])).unwrap());
    }

    #[test]
    fn render_differs_only_in_changed_dimension() {
        let s = DesignSpace::new(vec![
            Dim::continuous("Dose", 0.0, 100.0),
            Dim::boolean("Aspirin"),
            Dim::categorical("Route", ["oral", "iv"]),
        ])
        .unwrap();
        let ctx = Context::new("p1", vec![1.0]);
        let a = Design::new(vec![Value::Real(10.0), Value::Bool(true), Value::Label(0)]);
        let b = Design::new(vec![Value::Real(10.0), Value::Bool(false), Value::Label(0)]);
        let ta = render_text("t", &s, &ctx, &a).unwrap();
        let tb = render_text("t", &s, &ctx, &b).unwrap();
        let diff: Vec<(&str, &str)> = ta.lines().zip(tb.lines()).filter(|(x, y)| x != y).collect();
        assert_eq!(diff, vec![("Aspirin: yes", "Aspirin: no")]);
    }

    #[test]
    fn design_json_shape() {
        let d = Design::new(vec![Value::Real(50.0), Value::Bool(true), Value::Label(2)]);
        let txt = serde_json::to_string(&d).unwrap();
        assert_eq!(txt, r#"{"values":[50.0,true,2]}"#);
        let back: Design = serde_json::from_str(&txt).unwrap();
        assert_eq!(back, d);
        let ctx = Context::new("p", vec![1.5]);
        assert_eq!(serde_json::to_string(&ctx).unwrap(), r#"{"features":[1.5],"id":"p"}"#);
    }

    fn mixed_space() -> DesignSpace {
        DesignSpace::new(vec![
            Dim::continuous("x", -3.0, 7.0),
            Dim::boolean("b"),
            Dim::categorical("c", ["p", "q", "r", "s"]),
            Dim::continuous("y", 0.0, 1.0),
        ])
        .unwrap()
    }

    proptest! {
        #[test]
        fn round_trip(x in -3.0f64..=7.0, b: bool, c in 0usize..4, y in 0.0f64..=1.0) {
            let s = mixed_space();
            let d = Design::new(vec![Value::Real(x), Value::Bool(b), Value::Label(c), Value::Real(y)]);
            let v = s.encode(&d).unwrap();
            prop_assert_eq!(v.len(), s.encoded_width());
            prop_assert!(v.iter().all(|e| e.is_finite()));
            let back = s.decode(&v).unwrap();
            // min-max scaling may perturb the last ulp
            prop_assert!(matches!(back.values[1], Value::Bool(bb) if bb == b));
            prop_assert!(matches!(back.values[2], Value::Label(cc) if cc == c));
            for (i, orig) in [(0, x), (3, y)] {
                match back.values[i] {
                    Value::Real(r) => prop_assert!((r - orig).abs() <= 1e-12 * (1.0 + orig.abs())),
                    _ => prop_assert!(false),
                }
            }
            // decode ∘ encode is idempotent on valid encodings
            let again = s.encode(&back).unwrap();
            prop_assert_eq!(s.decode(&again).unwrap(), back);
        }
    }
}
