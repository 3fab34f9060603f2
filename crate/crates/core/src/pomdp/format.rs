//! Line-oriented POMDP text format.
//!
//! ```text
//! format: riskfsc-pomdp 1
//! discount: 0.95
//! values: cost            # or `reward`; rewards become costs as shift - r
//! reward_shift: 0         # optional, only meaningful with `values: reward`
//! states: left right      # names, or a count N (names s0..s{N-1})
//! actions: stay go
//! observations: quiet loud
//! start: 0.5 0.5          # or `uniform`; defaults to uniform
//! T: go : left : right 0.9
//! T: go : left            # row form: next line lists one probability per state
//! 0.1 0.9
//! O: left : quiet 0.8     # state-conditioned observation O(o | s)
//! O: right                # row form
//! 0.3 0.7
//! R: go : left 1.5        # cost (or reward) of action `go` in `left`
//! ```
//!
//! `*` matches every action in `T:`/`R:` and every state in the first state
//! position of `T:`, `O:` and `R:`. Names may also be given as indices.
//! Comments start with `#`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::pomdp::{validate_pomdp, Pomdp};

pub const FORMAT_HEADER: &str = "riskfsc-pomdp 1";

#[derive(Default)]
struct Header {
    discount: Option<f64>,
    rewards: bool,
    shift: f64,
    states: Option<Vec<String>>,
    actions: Option<Vec<String>>,
    observations: Option<Vec<String>>,
    start: Option<(usize, Vec<String>)>,
}

enum Entry {
    Transition { a: String, s: String, next: Option<String>, probs: Vec<String> },
    Observation { s: String, o: Option<String>, probs: Vec<String> },
    Cost { a: String, s: String, value: String },
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::Syntax { line, message: message.into() }
}

fn semantic(line: usize, message: impl Into<String>) -> Error {
    Error::Semantic { location: format!("line {line}"), message: message.into() }
}

fn parse_names(line: usize, rest: &str, prefix: &str) -> Result<Vec<String>> {
    let tokens: Vec<&str> = rest.split_whitespace().collect();
    match tokens.as_slice() {
        [] => Err(syntax(line, "empty declaration")),
        [single] if single.parse::<usize>().is_ok() => {
            let n: usize = single.parse().unwrap();
            if n == 0 {
                return Err(syntax(line, "declared an empty set"));
            }
            Ok((0..n).map(|i| format!("{prefix}{i}")).collect())
        }
        names => Ok(names.iter().map(|s| s.to_string()).collect()),
    }
}

fn parse_number(line: usize, token: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| syntax(line, format!("expected a number, found '{token}'")))
}

/// Resolves a name, an index, or `*` against a declared set.
fn resolve(line: usize, token: &str, names: &[String], what: &str, wildcard: bool) -> Result<Vec<usize>> {
    if token == "*" {
        return if wildcard {
            Ok((0..names.len()).collect())
        } else {
            Err(syntax(line, format!("wildcard not allowed for {what}")))
        };
    }
    if let Some(i) = names.iter().position(|n| n == token) {
        return Ok(vec![i]);
    }
    match token.parse::<usize>() {
        Ok(i) if i < names.len() => Ok(vec![i]),
        _ => Err(semantic(line, format!("unknown {what} '{token}'"))),
    }
}

/// Parses the text format into a validated model.
pub fn parse_pomdp(text: &str) -> Result<Pomdp> {
    let m = parse_pomdp_unchecked(text)?;
    if let Some(v) = validate_pomdp(&m).into_iter().next() {
        return Err(Error::Semantic { location: v.location.clone(), message: v.to_string() });
    }
    Ok(m)
}

/// Parses without checking the stochastic invariants, so that callers can
/// report every violation via [`validate_pomdp`].
pub fn parse_pomdp_unchecked(text: &str) -> Result<Pomdp> {
    let mut header = Header::default();
    let mut entries: Vec<(usize, Entry)> = Vec::new();
    let mut pending: Option<(usize, Entry)> = None;
    let mut last_line = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some((at, mut entry)) = pending.take() {
            let probs: Vec<String> = content.split_whitespace().map(str::to_string).collect();
            match &mut entry {
                Entry::Transition { probs: p, .. } | Entry::Observation { probs: p, .. } => *p = probs,
                Entry::Cost { .. } => unreachable!("cost entries are single-line"),
            }
            entries.push((at, entry));
            continue;
        }
        let Some((key, rest)) = content.split_once(':') else {
            return Err(syntax(line, format!("expected 'key: value', found '{content}'")));
        };
        let key = key.trim();
        let rest = rest.trim();
        match key {
            "format" => {
                if rest != FORMAT_HEADER {
                    return Err(syntax(line, format!("unsupported format '{rest}', expected '{FORMAT_HEADER}'")));
                }
            }
            "discount" => header.discount = Some(parse_number(line, rest)?),
            "values" => {
                header.rewards = match rest {
                    "cost" => false,
                    "reward" => true,
                    other => return Err(syntax(line, format!("values must be cost or reward, found '{other}'"))),
                }
            }
            "reward_shift" => header.shift = parse_number(line, rest)?,
            "states" => header.states = Some(parse_names(line, rest, "s")?),
            "actions" => header.actions = Some(parse_names(line, rest, "a")?),
            "observations" => header.observations = Some(parse_names(line, rest, "o")?),
            "start" => header.start = Some((line, rest.split_whitespace().map(str::to_string).collect())),
            "T" | "O" | "R" => {
                let mut fields: Vec<String> = vec![];
                // `T: a : s : s' p` arrives here as rest = "a : s : s' p".
                for part in rest.split(':') {
                    fields.push(part.trim().to_string());
                }
                let entry = parse_entry(line, key, &fields)?;
                let complete = match &entry {
                    Entry::Transition { probs, .. } | Entry::Observation { probs, .. } => !probs.is_empty(),
                    Entry::Cost { .. } => true,
                };
                if complete {
                    entries.push((line, entry));
                } else {
                    pending = Some((line, entry));
                }
            }
            other => return Err(syntax(line, format!("unknown key '{other}'"))),
        }
    }
    if let Some((at, _)) = pending {
        return Err(syntax(at, "row form is missing its probability line"));
    }

    let end = last_line + 1;
    let discount = header.discount.ok_or_else(|| syntax(end, "missing required 'discount' line"))?;
    let states = header.states.ok_or_else(|| syntax(end, "missing required 'states' line"))?;
    let actions = header.actions.ok_or_else(|| syntax(end, "missing required 'actions' line"))?;
    let observations =
        header.observations.ok_or_else(|| syntax(end, "missing required 'observations' line"))?;
    for (what, names) in [("state", &states), ("action", &actions), ("observation", &observations)] {
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(semantic(0, format!("duplicate {what} name '{n}'")));
            }
        }
    }

    let ns = states.len();
    let mut m = Pomdp::new(states.clone(), actions.clone(), observations.clone(), discount);
    let initial = match header.start {
        None => vec![1.0 / ns as f64; ns],
        Some((_, tokens)) if tokens.len() == 1 && tokens[0] == "uniform" => vec![1.0 / ns as f64; ns],
        Some((line, tokens)) => {
            if tokens.len() != ns {
                return Err(semantic(line, format!("start lists {} probabilities for {ns} states", tokens.len())));
            }
            tokens.iter().map(|t| parse_number(line, t)).collect::<Result<Vec<_>>>()?
        }
    };
    m.set_initial(initial);
    if header.rewards {
        // Unlisted (s, a) pairs carry reward 0.
        if header.shift < 0.0 {
            return Err(semantic(0, "reward_shift makes unlisted costs negative"));
        }
        for s in 0..ns {
            for a in 0..actions.len() {
                m.set_cost(s, a, header.shift);
            }
        }
    }

    for (line, entry) in entries {
        match entry {
            Entry::Transition { a, s, next, probs } => {
                let acts = resolve(line, &a, &actions, "action", true)?;
                let from = resolve(line, &s, &states, "state", true)?;
                let row: Vec<(usize, f64)> = match next {
                    Some(next) => {
                        let to = resolve(line, &next, &states, "state", false)?[0];
                        if probs.len() != 1 {
                            return Err(syntax(line, "transition entry takes one probability"));
                        }
                        vec![(to, parse_number(line, &probs[0])?)]
                    }
                    None => {
                        if probs.len() != ns {
                            return Err(semantic(line, format!("row has {} entries for {ns} states", probs.len())));
                        }
                        probs.iter().enumerate().map(|(i, t)| Ok((i, parse_number(line, t)?))).collect::<Result<_>>()?
                    }
                };
                for &a in &acts {
                    for &s in &from {
                        for &(to, p) in &row {
                            m.set_transition(s, a, to, p);
                        }
                    }
                }
            }
            Entry::Observation { s, o, probs } => {
                let at = resolve(line, &s, &states, "state", true)?;
                let row: Vec<(usize, f64)> = match o {
                    Some(o) => {
                        let o = resolve(line, &o, &observations, "observation", false)?[0];
                        if probs.len() != 1 {
                            return Err(syntax(line, "observation entry takes one probability"));
                        }
                        vec![(o, parse_number(line, &probs[0])?)]
                    }
                    None => {
                        if probs.len() != observations.len() {
                            return Err(semantic(
                                line,
                                format!("row has {} entries for {} observations", probs.len(), observations.len()),
                            ));
                        }
                        probs.iter().enumerate().map(|(i, t)| Ok((i, parse_number(line, t)?))).collect::<Result<_>>()?
                    }
                };
                for &s in &at {
                    for &(o, p) in &row {
                        m.set_observation(s, o, p);
                    }
                }
            }
            Entry::Cost { a, s, value } => {
                let acts = resolve(line, &a, &actions, "action", true)?;
                let at = resolve(line, &s, &states, "state", true)?;
                let v = parse_number(line, &value)?;
                let c = if header.rewards { header.shift - v } else { v };
                if c < 0.0 {
                    return Err(semantic(line, format!("cost {c} is negative")));
                }
                for &a in &acts {
                    for &s in &at {
                        m.set_cost(s, a, c);
                    }
                }
            }
        }
    }

    Ok(m)
}

fn parse_entry(line: usize, key: &str, fields: &[String]) -> Result<Entry> {
    let split_last = |field: &str| -> (String, Vec<String>) {
        let mut tokens = field.split_whitespace();
        let head = tokens.next().unwrap_or("").to_string();
        (head, tokens.map(str::to_string).collect())
    };
    match (key, fields.len()) {
        ("T", 3) => {
            let (next, probs) = split_last(&fields[2]);
            Ok(Entry::Transition { a: fields[0].clone(), s: fields[1].clone(), next: Some(next), probs })
        }
        ("T", 2) => {
            let (s, probs) = split_last(&fields[1]);
            Ok(Entry::Transition { a: fields[0].clone(), s, next: None, probs })
        }
        ("O", 2) => {
            let (o, probs) = split_last(&fields[1]);
            Ok(Entry::Observation { s: fields[0].clone(), o: Some(o), probs })
        }
        ("O", 1) => {
            let (s, probs) = split_last(&fields[0]);
            Ok(Entry::Observation { s, o: None, probs })
        }
        ("R", 2) => {
            let (s, rest) = split_last(&fields[1]);
            match rest.as_slice() {
                [value] => Ok(Entry::Cost { a: fields[0].clone(), s, value: value.clone() }),
                _ => Err(syntax(line, "cost entry takes exactly one value")),
            }
        }
        _ => Err(syntax(line, format!("malformed {key}: entry"))),
    }
}

/// Writes a model in the text format; [`parse_pomdp`] reads it back exactly.
pub fn write_pomdp(m: &Pomdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format: {FORMAT_HEADER}");
    let _ = writeln!(out, "discount: {}", m.discount());
    let _ = writeln!(out, "values: cost");
    let _ = writeln!(out, "states: {}", m.state_names().join(" "));
    let _ = writeln!(out, "actions: {}", m.action_names().join(" "));
    let _ = writeln!(out, "observations: {}", m.observation_names().join(" "));
    let start: Vec<String> = m.initial().iter().map(|p| p.to_string()).collect();
    let _ = writeln!(out, "start: {}", start.join(" "));
    let (states, actions, obs) = (m.state_names(), m.action_names(), m.observation_names());
    for (a, an) in actions.iter().enumerate() {
        for (s, sn) in states.iter().enumerate() {
            for (next, p) in m.transition_row(s, a).iter().enumerate() {
                if *p != 0.0 {
                    let _ = writeln!(out, "T: {an} : {sn} : {} {p}", states[next]);
                }
            }
        }
    }
    for (s, sn) in states.iter().enumerate() {
        for (o, p) in m.observation_row(s).iter().enumerate() {
            if *p != 0.0 {
                let _ = writeln!(out, "O: {sn} : {} {p}", obs[o]);
            }
        }
    }
    for (a, an) in actions.iter().enumerate() {
        for (s, sn) in states.iter().enumerate() {
            let c = m.cost(s, a);
            if c != 0.0 {
                let _ = writeln!(out, "R: {an} : {sn} {c}");
            }
        }
    }
    out
}
