//! Canonical JSON text: object keys sorted, floats written with 17
//! significant digits in exponent form, no insignificant whitespace.

use std::fmt::Write as _;

use serde_json::Value;

pub fn format_float(v: f64) -> String {
    if v == 0.0 {
        // Keep a single spelling of zero.
        return "0.0000000000000000e0".into();
    }
    format!("{v:.16e}")
}

fn write_string(out: &mut String, s: &str) {
    out.push_str(&serde_json::to_string(s).expect("strings serialize"));
}

fn write_value(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, k);
                out.push(':');
                write_value(out, &map[k]);
            }
            out.push('}');
        }
    }
}

pub fn to_canonical_string(v: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, v);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_sorted_and_floats_fixed() {
        let v = json!({"b": 1.5, "a": [1, -2.0, true, null], "c": {"z": "s", "y": 0.0}});
        assert_eq!(
            to_canonical_string(&v),
            r#"{"a":[1,-2.0000000000000000e0,true,null],"b":1.5000000000000000e0,"c":{"y":0.0000000000000000e0,"z":"s"}}"#
        );
    }

    #[test]
    fn output_parses_back() {
        let v = json!({"x": [0.1, 1e-300, 123456789.123], "s": "a\"b"});
        let back: Value = serde_json::from_str(&to_canonical_string(&v)).unwrap();
        assert_eq!(back["x"][0].as_f64().unwrap(), 0.1);
        assert_eq!(back["x"][1].as_f64().unwrap(), 1e-300);
        assert_eq!(back["s"], "a\"b");
    }
}
