//! Rule files and rule-parameter JSON (`{"0": {"weights": [...], "bias": ...}, ...}`).

use std::collections::BTreeMap;
use std::path::Path;

use oilsense_core::logic::{parse_rules, Rule, RuleParams};

use crate::error::{read_text, write_bytes, Error, Result};

pub type ParsedRules = Vec<(Rule, Option<RuleParams>)>;

pub fn load_rules(path: &Path) -> Result<ParsedRules> {
    let text = read_text(path)?;
    let rules = parse_rules(&text).map_err(|e| Error::data(path, e))?;
    if rules.is_empty() {
        return Err(Error::data(path, "no rules"));
    }
    Ok(rules)
}

pub fn params_to_json(params: &[RuleParams]) -> String {
    let map: serde_json::Map<String, serde_json::Value> = params
        .iter()
        .enumerate()
        .map(|(i, p)| (i.to_string(), serde_json::to_value(p).expect("params serialize")))
        .collect();
    serde_json::to_string_pretty(&map).expect("params serialize")
}

/// Parses a parameter file; keys must be exactly `0..n`.
pub fn params_from_json(text: &str) -> Result<Vec<RuleParams>, String> {
    let raw: BTreeMap<String, RuleParams> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut indexed = BTreeMap::new();
    for (k, v) in raw {
        let i: usize = k.parse().map_err(|_| format!("key `{k}` is not a rule index"))?;
        if !(v.bias.is_finite() && v.weights.iter().all(|w| w.is_finite())) {
            return Err(format!("rule {i} has non-finite parameters"));
        }
        indexed.insert(i, v);
    }
    if let Some(gap) = (0..indexed.len()).find(|i| !indexed.contains_key(i)) {
        return Err(format!("rule index {gap} missing"));
    }
    Ok(indexed.into_values().collect())
}

/// Checks that `params` line up with `rules` one-to-one.
pub fn check_params(rules: &[Rule], params: &[RuleParams]) -> Result<(), String> {
    if rules.len() != params.len() {
        return Err(format!("{} rules but {} parameter sets", rules.len(), params.len()));
    }
    for (i, (r, p)) in rules.iter().zip(params).enumerate() {
        if r.body.len() != p.weights.len() {
            return Err(format!("rule {i} has {} atoms but {} weights", r.body.len(), p.weights.len()));
        }
    }
    Ok(())
}

pub fn save_params(path: &Path, params: &[RuleParams]) -> Result<()> {
    write_bytes(path, params_to_json(params).as_bytes())
}

pub fn load_params(path: &Path) -> Result<Vec<RuleParams>> {
    params_from_json(&read_text(path)?).map_err(|m| Error::data(path, m))
}
