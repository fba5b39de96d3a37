//! Plain-text MDP format.
//!
//! ```text
//! mdp <n_states> <n_actions> <gamma>
//! r <s> <a> <value>
//! p <s> <a> <s'> <prob>
//! ```
//!
//! Rewards default to zero. Every `(s, a)` must have at least one `p` line and
//! its probabilities must sum to one. `#` starts a comment.

use std::fmt::Write;

use super::TabularMdp;
use crate::error::{invalid_input, Result};

pub fn parse_mdp(text: &str) -> Result<TabularMdp> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (lineno, header) = lines.next().ok_or_else(|| invalid_input("empty MDP file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "mdp" {
        return Err(invalid_input(format!(
            "line {lineno}: expected `mdp <n_states> <n_actions> <gamma>`"
        )));
    }
    let n_states: usize = parse_field(fields[1], lineno)?;
    let n_actions: usize = parse_field(fields[2], lineno)?;
    let gamma: f64 = parse_field(fields[3], lineno)?;
    if n_states == 0 || n_actions == 0 {
        return Err(invalid_input(format!("line {lineno}: empty state or action set")));
    }

    let mut reward = vec![0.0; n_states * n_actions];
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut seen_row = vec![false; n_states * n_actions];
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first().copied() {
            Some("r") if fields.len() == 4 => {
                let s = index(fields[1], n_states, lineno)?;
                let a = index(fields[2], n_actions, lineno)?;
                reward[s * n_actions + a] = parse_field(fields[3], lineno)?;
            }
            Some("p") if fields.len() == 5 => {
                let s = index(fields[1], n_states, lineno)?;
                let a = index(fields[2], n_actions, lineno)?;
                let next = index(fields[3], n_states, lineno)?;
                let prob: f64 = parse_field(fields[4], lineno)?;
                seen_row[s * n_actions + a] = true;
                transition[(s * n_actions + a) * n_states + next] = prob;
            }
            _ => {
                return Err(invalid_input(format!(
                    "line {lineno}: expected `r s a value` or `p s a s' prob`"
                )))
            }
        }
    }
    if let Some(missing) = seen_row.iter().position(|seen| !seen) {
        return Err(invalid_input(format!(
            "transition row ({}, {}) is unspecified",
            missing / n_actions,
            missing % n_actions
        )));
    }
    TabularMdp::new(n_states, n_actions, transition, reward, gamma)
}

/// Serializes an MDP; parsing the output reproduces it exactly.
pub fn write_mdp(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "mdp {} {} {}", mdp.n_states(), mdp.n_actions(), mdp.gamma());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let r = mdp.reward(s, a);
            if r != 0.0 {
                let _ = writeln!(out, "r {s} {a} {r}");
            }
        }
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for (next, p) in mdp.row(s, a).iter().enumerate() {
                if *p != 0.0 {
                    let _ = writeln!(out, "p {s} {a} {next} {p}");
                }
            }
        }
    }
    out
}

fn parse_field<T: std::str::FromStr>(field: &str, lineno: usize) -> Result<T> {
    field
        .parse()
        .map_err(|_| invalid_input(format!("line {lineno}: cannot parse `{field}`")))
}

fn index(field: &str, bound: usize, lineno: usize) -> Result<usize> {
    let i: usize = parse_field(field, lineno)?;
    if i >= bound {
        return Err(invalid_input(format!(
            "line {lineno}: index {i} out of range (< {bound})"
        )));
    }
    Ok(i)
}
