//! Flat `key = value` run files.
//!
//! ```text
//! # comment
//! system = heavy-top
//! params.OmegaB = 0.01
//! initial.q = 0.4, 1.0, 0.3
//! initial.theta_dot = 0.2
//! run.t1 = 2
//! run.mu = 0.5
//! ```
//!
//! `initial.q` and `initial.v` set whole vectors; `initial.<coord>` and
//! `initial.<coord>_dot` set single components afterwards.

use std::collections::BTreeMap;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunFile {
    pub system: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub initial: BTreeMap<String, Vec<f64>>,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    pub dt: Option<f64>,
    pub mu: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("'{}' is not a number", p.trim())))
        .collect()
}

fn scalar(key: &str, s: &str) -> Result<f64, String> {
    s.parse().map_err(|_| format!("{key}: '{s}' is not a number"))
}

pub fn parse(text: &str) -> Result<RunFile, String> {
    let mut out = RunFile::default();
    let mut seen = std::collections::BTreeSet::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
        if !seen.insert(key.to_string()) {
            return Err(format!("line {}: '{key}' given twice", no + 1));
        }
        match key.split_once('.') {
            None if key == "system" => out.system = Some(value.to_string()),
            Some(("params", name)) if !name.is_empty() => {
                out.params.insert(name.to_string(), scalar(key, value)?);
            }
            Some(("initial", name)) if !name.is_empty() => {
                let v = parse_list(value).map_err(|e| format!("{key}: {e}"))?;
                out.initial.insert(name.to_string(), v);
            }
            Some(("run", "t0")) => out.t0 = Some(scalar(key, value)?),
            Some(("run", "t1")) => out.t1 = Some(scalar(key, value)?),
            Some(("run", "dt")) => out.dt = Some(scalar(key, value)?),
            Some(("run", "mu")) => out.mu = Some(parse_list(value).map_err(|e| format!("{key}: {e}"))?),
            Some(("run", "seed")) => {
                out.seed = Some(value.parse().map_err(|_| format!("{key}: '{value}' is not a seed"))?)
            }
            _ => return Err(format!("line {}: unknown key '{key}'", no + 1)),
        }
    }
    Ok(out)
}

/// Applies `initial.*` entries to (q, v) given the coordinate names.
pub fn apply_initial(
    initial: &BTreeMap<String, Vec<f64>>,
    names: &[String],
    q: &mut [f64],
    v: &mut [f64],
) -> Result<(), String> {
    let n = names.len();
    for (key, target) in [("q", &mut *q), ("v", &mut *v)] {
        if let Some(vals) = initial.get(key) {
            if vals.len() != n {
                return Err(format!("initial.{key} needs {n} values, got {}", vals.len()));
            }
            target.copy_from_slice(vals);
        }
    }
    for (key, vals) in initial {
        if key == "q" || key == "v" {
            continue;
        }
        let (name, is_rate) = match key.strip_suffix("_dot") {
            Some(base) => (base, true),
            None => (key.as_str(), false),
        };
        let i = names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| format!("initial.{key}: no coordinate named '{name}' (have {})", names.join(", ")))?;
        let [x] = vals[..] else {
            return Err(format!("initial.{key} takes one value"));
        };
        if is_rate {
            v[i] = x;
        } else {
            q[i] = x;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_section() {
        let f = parse(
            "# heavy top\nsystem = heavy-top\nparams.OmegaB = 0.02\n\ninitial.q = 0.4, 1.0,0.3\n\
             initial.theta_dot = 0.2  # trailing\nrun.t1 = 2\nrun.dt=1e-3\nrun.mu = 0.5\nrun.seed = 7\n",
        )
        .unwrap();
        assert_eq!(f.system.as_deref(), Some("heavy-top"));
        assert_eq!(f.params["OmegaB"], 0.02);
        assert_eq!(f.initial["q"], vec![0.4, 1.0, 0.3]);
        assert_eq!((f.t0, f.t1, f.dt), (None, Some(2.0), Some(1e-3)));
        assert_eq!(f.mu, Some(vec![0.5]));
        assert_eq!(f.seed, Some(7));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(parse("system heavy-top").is_err());
        assert!(parse("run.t2 = 1").is_err());
        assert!(parse("params.m = heavy").is_err());
        assert!(parse("system = a\nsystem = b").is_err());
        assert!(parse("colour = red").is_err());
    }

    #[test]
    fn initial_components_override_vectors() {
        let f = parse("initial.q = 1, 2\ninitial.b = 5\ninitial.a_dot = -1").unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        let (mut q, mut v) = ([0.0; 2], [0.0; 2]);
        apply_initial(&f.initial, &names, &mut q, &mut v).unwrap();
        assert_eq!((q, v), ([1.0, 5.0], [-1.0, 0.0]));
        let bad = parse("initial.c = 1").unwrap();
        assert!(apply_initial(&bad.initial, &names, &mut q, &mut v).is_err());
        let short = parse("initial.v = 1").unwrap();
        assert!(apply_initial(&short.initial, &names, &mut q, &mut v).is_err());
    }
}
