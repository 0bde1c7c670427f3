//! Structured-output parsing of proposed designs.

use serde_json::Value as Json;

use crate::error::{LeonError, Result};
use crate::space::{Design, DesignSpace, DimKind, Value};

/// Designs parsed from one reply plus the number of rejected elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub designs: Vec<Design>,
    pub rejects: usize,
}

/// The outermost `[...]` span of a reply, tolerating surrounding prose or
/// code fences.
fn array_span(raw: &str) -> Option<&str> {
    let start = raw.find('[')?;
    let end = raw.rfind(']')?;
    (end > start).then(|| &raw[start..=end])
}

fn parse_value(kind: &DimKind, v: &Json) -> Option<Value> {
    match kind {
        DimKind::Continuous { lo, hi } => {
            let x = match v {
                Json::Number(n) => n.as_f64()?,
                Json::String(s) => s.trim().parse::<f64>().ok()?,
                _ => return None,
            };
            x.is_finite().then(|| Value::Real(x.clamp(*lo, *hi)))
        }
        DimKind::Boolean => match v {
            Json::Bool(b) => Some(Value::Bool(*b)),
            Json::Number(n) => match n.as_f64()? {
                x if x == 0.0 => Some(Value::Bool(false)),
                x if x == 1.0 => Some(Value::Bool(true)),
                _ => None,
            },
            Json::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => Some(Value::Bool(true)),
                "false" | "no" | "0" => Some(Value::Bool(false)),
                _ => None,
            },
            _ => None,
        },
        DimKind::Categorical { labels } => match v {
            Json::String(s) => {
                let s = s.trim();
                labels
                    .iter()
                    .position(|l| l == s)
                    .or_else(|| labels.iter().position(|l| l.eq_ignore_ascii_case(s)))
                    .map(Value::Label)
            }
            Json::Number(n) => {
                let i = n.as_u64()? as usize;
                (i < labels.len()).then_some(Value::Label(i))
            }
            _ => None,
        },
    }
}

fn parse_element(space: &DesignSpace, el: &Json) -> Option<Design> {
    let obj = el.as_object()?;
    let values = space
        .dims()
        .iter()
        .map(|d| obj.get(&d.name).and_then(|v| parse_value(&d.kind, v)))
        .collect::<Option<Vec<_>>>()?;
    Some(Design::new(values))
}

/// Parses a JSON array of `{dimension name: value}` objects. Continuous
/// values are clamped into range; elements with a missing dimension or an
/// invalid value are counted as rejects. At most `b` designs are returned.
pub fn parse_designs(raw: &str, space: &DesignSpace, b: usize) -> Result<Parsed> {
    let span = array_span(raw).ok_or_else(|| LeonError::Parse("reply contains no JSON array".into()))?;
    let items: Vec<Json> = serde_json::from_str(span).map_err(|e| LeonError::Parse(e.to_string()))?;
    let mut designs = Vec::new();
    let mut rejects = 0;
    for el in &items {
        match parse_element(space, el) {
            Some(d) if designs.len() < b => designs.push(d),
            Some(_) => {}
            None => rejects += 1,
        }
    }
    Ok(Parsed { designs, rejects })
}
