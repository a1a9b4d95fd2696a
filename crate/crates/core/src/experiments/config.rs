//! Dotted-key overrides on serde configs, and hyperparameter grids built
//! from them.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Replaces the value at `key` (dot-separated object path). Every segment
/// must already exist, so typos are rejected rather than silently added.
pub fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let mut segments = key.split('.').peekable();
    while let Some(seg) = segments.next() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(format!("'{key}': cannot descend into a non-object at '{seg}'")))?;
        let slot = obj.get_mut(seg).ok_or_else(|| Error::config(format!("unknown config key '{key}'")))?;
        if segments.peek().is_none() {
            *slot = value;
            return Ok(());
        }
        cur = slot;
    }
    Err(Error::config("empty config key"))
}

/// Parses the right-hand side of `key=value`: JSON when it parses, else a
/// bare string (so `pooling=add` works without quotes).
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies `(key, value)` overrides to a config and re-validates it through
/// deserialization.
pub fn apply_overrides<T: Serialize + DeserializeOwned>(cfg: &T, overrides: &[(String, Value)]) -> Result<T> {
    let mut v = serde_json::to_value(cfg)?;
    for (k, val) in overrides {
        set_path(&mut v, k, val.clone())?;
    }
    serde_json::from_value(v).map_err(|e| Error::config(format!("invalid config after overrides: {e}")))
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override '{s}' is not of the form key=value")))?;
    if k.is_empty() {
        return Err(Error::config(format!("override '{s}' has an empty key")));
    }
    Ok((k.trim().to_string(), parse_value(v.trim())))
}

/// One searched hyperparameter: a dotted key and its candidate values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub key: String,
    pub values: Vec<Value>,
}

/// Cartesian product of the axes, as override lists, first axis slowest.
/// An empty grid yields one empty point.
pub fn grid_points(axes: &[GridAxis]) -> Vec<Vec<(String, Value)>> {
    let mut points: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for p in &points {
            for v in &axis.values {
                let mut q = p.clone();
                q.push((axis.key.clone(), v.clone()));
                next.push(q);
            }
        }
        points = next;
    }
    points
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        a: u32,
        b: Option<f64>,
    }

    #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Outer {
        inner: Inner,
        name: String,
    }

    #[test]
    fn overrides_walk_dotted_keys() {
        let cfg = Outer {
            inner: Inner { a: 1, b: None },
            name: "x".into(),
        };
        let sets = vec![parse_assignment("inner.a=7").unwrap(), parse_assignment("inner.b=0.5").unwrap(), parse_assignment("name=y").unwrap()];
        let out = apply_overrides(&cfg, &sets).unwrap();
        assert_eq!(out.inner, Inner { a: 7, b: Some(0.5) });
        assert_eq!(out.name, "y");
    }

    #[test]
    fn unknown_and_ill_typed_keys_are_rejected() {
        let cfg = Outer {
            inner: Inner { a: 1, b: None },
            name: "x".into(),
        };
        assert!(apply_overrides(&cfg, &[("inner.c".into(), json!(1))]).is_err());
        assert!(apply_overrides(&cfg, &[("name.x".into(), json!(1))]).is_err());
        assert!(apply_overrides(&cfg, &[("inner.a".into(), json!("many"))]).is_err());
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn grid_is_a_cartesian_product() {
        let axes = vec![
            GridAxis {
                key: "a".into(),
                values: vec![json!(1), json!(2)],
            },
            GridAxis {
                key: "b".into(),
                values: vec![json!("x"), json!("y"), json!("z")],
            },
        ];
        let pts = grid_points(&axes);
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], vec![("a".to_string(), json!(1)), ("b".to_string(), json!("y"))]);
        assert_eq!(grid_points(&[]), vec![Vec::new()]);
    }
}
