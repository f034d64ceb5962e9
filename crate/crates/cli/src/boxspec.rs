//! Parsing of user-declared column roles and box-family config files.

use boxtau::error::{Error, Result};
use boxtau::sample::{ColumnRoles, Role, Sample};
use boxtau::{BoxFamily, CondBox, Constraint, Rect};
use serde_json::Value;

/// Roles from either an inline "col:role,col:role" string or a JSON file
/// mapping column names to role names.
pub fn parse_roles(spec: &str) -> Result<ColumnRoles> {
    if spec.contains(':') {
        let mut roles = Vec::new();
        for token in spec.split(',') {
            let token = token.trim();
            if token.is_empty() {
                continue;
            }
            let (name, role) = token
                .split_once(':')
                .ok_or_else(|| Error::invalid(format!("bad role token '{token}'")))?;
            roles.push((name.trim().to_string(), parse_role_name(role.trim())?));
        }
        if roles.is_empty() {
            return Err(Error::invalid("no roles given"));
        }
        Ok(ColumnRoles { roles })
    } else {
        let text = std::fs::read_to_string(spec)?;
        let map: serde_json::Map<String, Value> = serde_json::from_str(&text)?;
        let mut roles = Vec::new();
        for (name, role) in map {
            let role_str = role
                .as_str()
                .ok_or_else(|| Error::invalid(format!("role of '{name}' must be a string")))?;
            roles.push((name, parse_role_name(role_str)?));
        }
        Ok(ColumnRoles { roles })
    }
}

fn parse_role_name(role: &str) -> Result<Role> {
    match role.to_ascii_lowercase().as_str() {
        "cond" | "conditioned" => Ok(Role::Conditioned),
        "conditioning" | "given" => Ok(Role::Conditioning),
        "cat" | "categorical" | "conditioning_categorical" => Ok(Role::ConditioningCategorical),
        "ignore" | "ignored" => Ok(Role::Ignored),
        other => Err(Error::invalid(format!(
            "unknown role '{other}' (expected cond, conditioning, cat or ignore)"
        ))),
    }
}

/// Box-family file: either a bare JSON array of box specs, or an object
/// `{"disjoint": bool, "boxes": [...]}`. A box spec is one constraint
/// object, an array of constraint objects, or `{"union": [spec, ...]}`.
/// Constraints reference conditioning columns by name or CSV position and
/// give either interval bounds or a code list.
pub fn parse_box_family(text: &str, sample: &Sample) -> Result<BoxFamily> {
    let value: Value = serde_json::from_str(text)?;
    let (boxes_value, declared_disjoint) = match &value {
        Value::Array(_) => (value.clone(), None),
        Value::Object(obj) => {
            let boxes = obj
                .get("boxes")
                .ok_or_else(|| Error::invalid("box config object needs a 'boxes' array"))?;
            let disjoint = obj.get("disjoint").and_then(|d| d.as_bool());
            (boxes.clone(), disjoint)
        }
        _ => return Err(Error::invalid("box config must be a JSON array or object")),
    };
    let specs = boxes_value
        .as_array()
        .ok_or_else(|| Error::invalid("'boxes' must be a JSON array"))?;
    if specs.is_empty() {
        return Err(Error::invalid("box config declares no boxes"));
    }
    let boxes: Result<Vec<CondBox>> = specs.iter().map(|s| parse_box(s, sample)).collect();
    let boxes = boxes?;
    let dim = sample.conditioning_dim();
    for b in &boxes {
        if b.dim() != dim {
            return Err(Error::invalid("box dimension mismatch"));
        }
    }
    let disjoint = match declared_disjoint {
        Some(d) => d,
        None => {
            let family = BoxFamily::new(boxes.clone(), false);
            family.verify_disjoint_on(sample)
        }
    };
    Ok(BoxFamily::new(boxes, disjoint))
}

fn parse_box(spec: &Value, sample: &Sample) -> Result<CondBox> {
    match spec {
        Value::Object(obj) if obj.contains_key("union") => {
            let parts = obj["union"]
                .as_array()
                .ok_or_else(|| Error::invalid("'union' must be an array of box specs"))?;
            let boxes: Result<Vec<CondBox>> = parts.iter().map(|p| parse_box(p, sample)).collect();
            Ok(CondBox::union(boxes?))
        }
        Value::Object(_) => parse_rect(std::slice::from_ref(spec), sample),
        Value::Array(items) => parse_rect(items, sample),
        _ => Err(Error::invalid("box spec must be an object or array of constraint objects")),
    }
}

fn parse_rect(constraints: &[Value], sample: &Sample) -> Result<CondBox> {
    let dim = sample.conditioning_dim();
    let mut rect = Rect::full(dim);
    for c in constraints {
        let obj = c
            .as_object()
            .ok_or_else(|| Error::invalid("constraint must be a JSON object"))?;
        let column = obj
            .get("column")
            .ok_or_else(|| Error::invalid("constraint needs a 'column'"))?;
        let coord = resolve_conditioning_coord(column, sample)?;
        rect.constraints[coord] = if let Some(codes) = obj.get("codes") {
            let list = codes
                .as_array()
                .ok_or_else(|| Error::invalid("'codes' must be an array"))?;
            let mut resolved = Vec::with_capacity(list.len());
            for code in list {
                resolved.push(resolve_code(code, coord, sample)?);
            }
            resolved.sort_unstable();
            resolved.dedup();
            Constraint::Codes { codes: resolved }
        } else {
            Constraint::Interval {
                lower: obj
                    .get("lower")
                    .map(|v| number(v, "lower"))
                    .transpose()?
                    .unwrap_or(f64::NEG_INFINITY),
                upper: obj
                    .get("upper")
                    .map(|v| number(v, "upper"))
                    .transpose()?
                    .unwrap_or(f64::INFINITY),
                lower_open: obj.get("lower_open").and_then(|v| v.as_bool()).unwrap_or(false),
                upper_open: obj.get("upper_open").and_then(|v| v.as_bool()).unwrap_or(false),
            }
        };
    }
    Ok(CondBox { parts: vec![rect] })
}

fn number(v: &Value, what: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| Error::invalid(format!("'{what}' must be a number")))
}

/// Resolves a column reference (header name or CSV position) to its
/// position within the conditioning coordinate set.
fn resolve_conditioning_coord(column: &Value, sample: &Sample) -> Result<usize> {
    let col_index = match column {
        Value::String(name) => sample
            .column_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::invalid(format!("unknown column '{name}'")))?,
        Value::Number(idx) => idx
            .as_u64()
            .ok_or_else(|| Error::invalid("column index must be a non-negative integer"))?
            as usize,
        _ => return Err(Error::invalid("'column' must be a name or index")),
    };
    sample
        .conditioning_columns()
        .iter()
        .position(|&c| c == col_index)
        .ok_or_else(|| {
            Error::invalid(format!(
                "column {column} is not a conditioning column; boxes constrain conditioning columns only"
            ))
        })
}

/// Code entries may be integers or (for categorical columns loaded from
/// strings) the level strings themselves.
fn resolve_code(code: &Value, coord: usize, sample: &Sample) -> Result<i64> {
    match code {
        Value::Number(v) => v
            .as_i64()
            .ok_or_else(|| Error::invalid("codes must be integers")),
        Value::String(level) => {
            let col = sample.conditioning_columns()[coord];
            let levels = sample
                .category_levels()
                .get(&col)
                .ok_or_else(|| Error::invalid(format!("column has no categorical levels for '{level}'")))?;
            levels
                .binary_search(&level.to_string())
                .map(|i| i as i64)
                .map_err(|_| Error::invalid(format!("unknown categorical level '{level}'")))
        }
        _ => Err(Error::invalid("codes must be integers or level strings")),
    }
}
