use super::inequality::BellInequality;
use crate::error::{Error, Result};

fn parse_err<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, message: message.into() })
}

fn parse_bits(token: &str, n: usize, line: usize) -> Result<usize> {
    if token.len() != n || !token.bytes().all(|b| b == b'0' || b == b'1') {
        return parse_err(line, format!("expected {n} binary digits, got `{token}`"));
    }
    Ok(token.bytes().fold(0, |acc, b| (acc << 1) | usize::from(b == b'1')))
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    match token.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => parse_err(line, format!("invalid number `{token}`")),
    }
}

/// Parses the line-based inequality format.
///
/// ```text
/// bellineq 1
/// parties 2
/// inputs 2
/// outputs 2
/// bound 2
/// # name chsh
/// c 00 00 1
/// ```
///
/// Setting and outcome strings list party 0 first. They may also be written
/// as separate digits (`c 0 0 0 0 1`). Omitted terms are zero. A comment of
/// the form `# name <text>` sets the inequality's name.
pub fn parse_inequality(text: &str) -> Result<BellInequality> {
    let mut header: Vec<(usize, &str, &str)> = Vec::new();
    let mut terms: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut name = String::from("unnamed");
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(n) = comment.trim().strip_prefix("name ") {
                name = n.trim().to_string();
            }
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens[0] == "c" {
            terms.push((line, tokens[1..].to_vec()));
        } else if header.len() < 5 && terms.is_empty() {
            if tokens.len() != 2 {
                return parse_err(line, format!("expected `<key> <value>`, got `{trimmed}`"));
            }
            header.push((line, tokens[0], tokens[1]));
        } else {
            return parse_err(line, format!("unexpected line `{trimmed}`"));
        }
    }

    let expected = ["bellineq", "parties", "inputs", "outputs", "bound"];
    for (i, key) in expected.iter().enumerate() {
        let Some(&(line, k, _)) = header.get(i) else {
            return parse_err(last_line.max(1), format!("missing `{key}` line"));
        };
        if k != *key {
            return parse_err(line, format!("expected `{key}`, got `{k}`"));
        }
    }
    let (line, _, version) = header[0];
    if version != "1" {
        return parse_err(line, format!("unsupported format version `{version}`"));
    }
    let (line, _, parties) = header[1];
    let n: usize = match parties.parse() {
        Ok(n) => n,
        Err(_) => return parse_err(line, format!("invalid party count `{parties}`")),
    };
    let inputs = header[2].2;
    let outputs = header[3].2;
    if !(2..=3).contains(&n) || inputs != "2" || outputs != "2" {
        return Err(Error::UnsupportedScenario(format!(
            "parties {parties}, inputs {inputs}, outputs {outputs} (only 2 or 3 parties with 2 inputs and 2 outputs)"
        )));
    }
    let (line, _, bound) = header[4];
    let bound = parse_number(bound, line)?;

    let d = 1usize << n;
    let mut coefficients = vec![0.0; d * d];
    let mut assigned = vec![false; d * d];
    for (line, tokens) in terms {
        let (s_tok, r_tok, value) = match tokens.len() {
            3 => (tokens[0].to_string(), tokens[1].to_string(), tokens[2]),
            k if k == 2 * n + 1 => (tokens[..n].concat(), tokens[n..2 * n].concat(), tokens[2 * n]),
            k => return parse_err(line, format!("coefficient line has {k} fields")),
        };
        let s = parse_bits(&s_tok, n, line)?;
        let r = parse_bits(&r_tok, n, line)?;
        let idx = (s << n) | r;
        if assigned[idx] {
            return parse_err(line, format!("duplicate coefficient for settings {s_tok}, outcomes {r_tok}"));
        }
        assigned[idx] = true;
        coefficients[idx] = parse_number(value, line)?;
    }
    BellInequality::new(n, coefficients, bound, name)
        .map_err(|e| Error::Parse { line: last_line, message: e.to_string() })
}

fn bits(x: usize, n: usize) -> String {
    (0..n).map(|i| if (x >> (n - 1 - i)) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Writes the canonical text form. Numbers use the shortest representation
/// that parses back to the same `f64`.
pub fn serialize_inequality(ineq: &BellInequality) -> String {
    let n = ineq.n_parties();
    let mut out = format!("bellineq 1\nparties {n}\ninputs 2\noutputs 2\nbound {}\n", ineq.lhv_bound());
    out.push_str(&format!("# name {}\n", ineq.name()));
    let d = 1usize << n;
    for s in 0..d {
        for r in 0..d {
            let c = ineq.coefficient(s, r);
            if c != 0.0 {
                out.push_str(&format!("c {} {} {c}\n", bits(s, n), bits(r, n)));
            }
        }
    }
    out
}
