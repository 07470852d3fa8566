//! `--config FILE` support. Each `key=value` line becomes `--key=value`,
//! spliced in right after the subcommand so explicit flags, which come
//! later, win.

use std::fs;

use crate::failure::{Failure, BAD_ARGS};

pub fn expand(mut argv: Vec<String>) -> Result<Vec<String>, Failure> {
    let Some((idx, path, width)) = find_config(&argv) else {
        return Ok(argv);
    };
    argv.drain(idx..idx + width);
    let text = fs::read_to_string(&path).map_err(|e| Failure::io(&path, e))?;
    let injected = parse(&text)
        .map_err(|(line, msg)| Failure::new(BAD_ARGS, format!("{path}:{line}: {msg}")))?;
    let at = 2.min(argv.len());
    argv.splice(at..at, injected);
    Ok(argv)
}

fn find_config(argv: &[String]) -> Option<(usize, String, usize)> {
    for (i, a) in argv.iter().enumerate().skip(1) {
        if a == "--" {
            return None;
        }
        if a == "--config" {
            return argv.get(i + 1).map(|p| (i, p.clone(), 2));
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some((i, p.to_string(), 1));
        }
    }
    None
}

fn parse(text: &str) -> Result<Vec<String>, (usize, String)> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err((n + 1, format!("expected key=value, got {line:?}")));
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err((n + 1, "empty key".into()));
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => out.push(format!("--{key}={v}")),
        }
    }
    Ok(out)
}
