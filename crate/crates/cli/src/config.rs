//! `key = value` config files whose keys mirror long flag names.
//!
//! Values from the file are spliced into the argument list right after the
//! subcommand, so any flag given on the command line overrides them.

use std::fs;

use clap::CommandFactory;

use crate::Cli;

pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", lineno + 1))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(format!("config line {}: empty key", lineno + 1));
        }
        entries.push((key.to_string(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Path given by `--config PATH` or `--config=PATH`, if any.
fn config_path(args: &[String]) -> Option<String> {
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            return iter.next().cloned();
        }
        if let Some(path) = arg.strip_prefix("--config=") {
            return Some(path.to_string());
        }
    }
    None
}

/// Returns `args` with the config file's flags inserted after the subcommand.
pub fn expand_args(args: Vec<String>) -> Result<Vec<String>, String> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let entries = parse_file(&text)?;

    let command = Cli::command();
    let subcommands: Vec<String> =
        command.get_subcommands().map(|s| s.get_name().to_string()).collect();
    let Some(position) = args.iter().position(|a| subcommands.contains(a)) else {
        return Ok(args);
    };
    let sub = command.find_subcommand(&args[position]).expect("subcommand exists");
    let known = |cmd: &clap::Command, key: &str| {
        cmd.get_arguments().find(|a| a.get_long() == Some(key)).map(|a| a.get_action().takes_values())
    };

    let mut injected = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        match known(sub, &key) {
            Some(true) => {
                injected.push(format!("--{key}"));
                injected.push(value);
            }
            Some(false) => match value.as_str() {
                "true" | "yes" | "1" => injected.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                other => return Err(format!("config key {key}: expected true or false, got {other}")),
            },
            None => {
                let elsewhere = command.get_subcommands().any(|s| known(s, &key).is_some());
                if !elsewhere {
                    return Err(format!("unknown config key `{key}`"));
                }
            }
        }
    }
    let mut out = args;
    out.splice(position + 1..position + 1, injected);
    Ok(out)
}
