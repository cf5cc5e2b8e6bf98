//! Optional TOML config file: flag values that apply when the flag is not
//! given on the command line.
//!
//! Top-level keys apply to every command; a `[command-name]` table applies
//! only to that command. Keys are flag names without the leading dashes.
//!
//! ```toml
//! seed = 7
//! [train-target]
//! epochs = 300
//! lr = 0.01
//! ```

use std::ffi::OsString;
use std::fs;

pub const COMMANDS: &[&str] = &[
    "gen-data",
    "train-target",
    "train-explainer",
    "explain",
    "evaluate",
    "sanity-check",
    "export-dot",
    "bench",
];

fn take_config_path(args: &mut Vec<OsString>) -> Result<Option<String>, String> {
    let mut i = 0;
    while i < args.len() {
        let a = args[i].to_string_lossy().into_owned();
        if a == "--config" {
            if i + 1 >= args.len() {
                return Err("--config needs a file path".into());
            }
            let path = args.remove(i + 1).to_string_lossy().into_owned();
            args.remove(i);
            return Ok(Some(path));
        }
        if let Some(path) = a.strip_prefix("--config=") {
            let path = path.to_string();
            args.remove(i);
            return Ok(Some(path));
        }
        i += 1;
    }
    Ok(None)
}

fn flag_given(args: &[OsString], flag: &str) -> bool {
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.starts_with(&format!("{flag}="))
    })
}

fn push_value(out: &mut Vec<OsString>, flag: &str, value: &toml::Value) -> Result<(), String> {
    let text = match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(true) => {
            out.push(flag.into());
            return Ok(());
        }
        toml::Value::Boolean(false) => return Ok(()),
        toml::Value::Array(items) => items
            .iter()
            .map(|v| match v {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                toml::Value::Float(f) => Ok(f.to_string()),
                _ => Err(format!("config key `{flag}`: unsupported list element")),
            })
            .collect::<Result<Vec<_>, _>>()?
            .join(","),
        _ => return Err(format!("config key `{flag}`: unsupported value")),
    };
    out.push(flag.into());
    out.push(text.into());
    Ok(())
}

/// Removes `--config PATH` from `args` and appends every config value whose
/// flag is absent, so command-line flags win.
pub fn apply_config(mut args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let Some(path) = take_config_path(&mut args)? else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    let table: toml::Table = text.parse().map_err(|e| format!("{path}: {e}"))?;
    let command = args
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .find(|a| COMMANDS.contains(&a.as_str()));
    // Section values override top-level ones; both lose to explicit flags.
    let mut merged: std::collections::BTreeMap<String, toml::Value> = table
        .iter()
        .filter(|(_, v)| !v.is_table())
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if let Some(section) = command.as_deref().and_then(|c| table.get(c)).and_then(|v| v.as_table()) {
        for (key, value) in section {
            if value.is_table() {
                return Err(format!("{path}: nested table `{key}` not supported"));
            }
            merged.insert(key.clone(), value.clone());
        }
    }
    let mut extra = Vec::new();
    for (key, value) in &merged {
        let flag = format!("--{}", key.replace('_', "-"));
        if !flag_given(&args, &flag) {
            push_value(&mut extra, &flag, value)?;
        }
    }
    args.extend(extra);
    Ok(args)
}
