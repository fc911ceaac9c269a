//! Merging a JSON config file into the argument list. Keys are long flag
//! names (`max_sweeps` and `max-sweeps` both work); a flag already present on
//! the command line is never overridden.

use std::ffi::OsString;
use std::fs;

use serde_json::Value;

const VALUE_FLAGS: [&str; 3] = ["--seed", "--threads", "--config"];

fn config_path(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            return None;
        }
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Index just past the subcommand name.
fn subcommand_end(args: &[OsString]) -> Option<usize> {
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if VALUE_FLAGS.contains(&s.as_ref()) {
            i += 2;
        } else if s.starts_with('-') {
            i += 1;
        } else {
            return Some(i + 1);
        }
    }
    None
}

fn present(args: &[OsString], flag: &str) -> bool {
    let with_eq = format!("{flag}=");
    args.iter()
        .map(|a| a.to_string_lossy())
        .take_while(|s| s != "--")
        .any(|s| s == flag || s.starts_with(&with_eq))
}

fn scalar(key: &str, v: &Value) -> Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(format!("config key `{key}` must be a string, number, boolean or list")),
    }
}

/// Returns `args` with the config's flags spliced in after the subcommand.
pub fn merge(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| format!("reading config {}: {e}", path.to_string_lossy()))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| format!("config {}: {e}", path.to_string_lossy()))?;
    let Value::Object(map) = doc else {
        return Err("config must be a JSON object".into());
    };
    let mut global = Vec::new();
    let mut local = Vec::new();
    for (key, value) in &map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" || present(&args, &flag) {
            continue;
        }
        let dest = if VALUE_FLAGS.contains(&flag.as_str()) {
            &mut global
        } else {
            &mut local
        };
        match value {
            Value::Bool(true) => dest.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                for item in items {
                    dest.push(OsString::from(&flag));
                    dest.push(scalar(key, item)?.into());
                }
            }
            other => {
                dest.push(flag.into());
                dest.push(scalar(key, other)?.into());
            }
        }
    }
    let Some(end) = subcommand_end(&args) else {
        return Ok(args);
    };
    let mut out: Vec<OsString> = args[..1].to_vec();
    out.extend(global);
    out.extend_from_slice(&args[1..end]);
    out.extend(local);
    out.extend_from_slice(&args[end..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn command_line_wins() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        write!(file, r#"{{"lambda": 0.2, "max_sweeps": 5, "center": true, "seed": 9, "no_col_normalize": false}}"#).unwrap();
        let cfg = file.path().to_str().unwrap();
        let merged = merge(os(&["flm", "--config", cfg, "fit", "--lambda", "0.3"])).unwrap();
        let merged: Vec<String> = merged.iter().map(|s| s.to_string_lossy().into()).collect();
        assert_eq!(
            merged,
            ["flm", "--seed", "9", "--config", cfg, "fit", "--center", "--max-sweeps", "5", "--lambda", "0.3"]
        );
    }

    #[test]
    fn without_config_args_pass_through() {
        let args = os(&["flm", "eval", "--model", "m.json"]);
        assert_eq!(merge(args.clone()).unwrap(), args);
    }
}
