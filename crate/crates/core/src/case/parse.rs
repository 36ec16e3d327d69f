use super::{CaseError, RawCase};

/// Parse MATPOWER-style case text into raw matrices.
///
/// Recognizes `mpc.baseMVA = <num>;` and `mpc.<table> = [ rows ];` blocks
/// with rows separated by `;` or newlines. `%` comments are stripped.
/// Unknown `mpc.*` assignments are ignored.
pub fn parse_case(text: &str) -> Result<RawCase, CaseError> {
    let cleaned = strip_comments(text);
    let name = cleaned
        .lines()
        .find_map(|l| {
            let l = l.trim();
            l.strip_prefix("function")
                .and_then(|rest| rest.split('=').nth(1))
                .map(|n| n.trim().to_string())
        })
        .unwrap_or_else(|| "case".to_string());

    let base_mva = scalar_section(&cleaned, "baseMVA")?
        .ok_or_else(|| CaseError::MissingSection("baseMVA".into()))?;
    let bus_rows = matrix_section(&cleaned, "bus")?
        .ok_or_else(|| CaseError::MissingSection("bus".into()))?;
    let gen_rows = matrix_section(&cleaned, "gen")?
        .ok_or_else(|| CaseError::MissingSection("gen".into()))?;
    let branch_rows = matrix_section(&cleaned, "branch")?
        .ok_or_else(|| CaseError::MissingSection("branch".into()))?;
    let gencost_rows = matrix_section(&cleaned, "gencost")?
        .ok_or_else(|| CaseError::MissingSection("gencost".into()))?;

    Ok(RawCase {
        name,
        base_mva,
        bus_rows,
        gen_rows,
        branch_rows,
        gencost_rows,
    })
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Locate `mpc.<name> =` and return the text after `=` up to `;` (scalars)
/// or the bracketed block (matrices).
fn find_assignment<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let mut search = 0usize;
    let pat = format!("mpc.{name}");
    while let Some(pos) = text[search..].find(&pat) {
        let abs = search + pos;
        let rest = &text[abs + pat.len()..];
        // Demand an exact field match followed by `=` (skipping whitespace).
        let trimmed = rest.trim_start();
        if let Some(after_eq) = trimmed.strip_prefix('=') {
            return Some(after_eq);
        }
        search = abs + pat.len();
    }
    None
}

fn scalar_section(text: &str, name: &str) -> Result<Option<f64>, CaseError> {
    let Some(rest) = find_assignment(text, name) else {
        return Ok(None);
    };
    let value = rest.split(';').next().unwrap_or("").trim();
    value
        .parse::<f64>()
        .map(Some)
        .map_err(|_| CaseError::NonNumericEntry {
            section: name.to_string(),
            token: value.to_string(),
        })
}

/// Matches the `gencost` table only for `name == "gencost"` and not for
/// `name == "gen"`, because the first `mpc.gen` occurrence is checked for a
/// following `=` or `cost` suffix.
fn matrix_section(text: &str, name: &str) -> Result<Option<Vec<Vec<f64>>>, CaseError> {
    let mut search = 0usize;
    let pat = format!("mpc.{name}");
    let body = loop {
        let Some(pos) = text[search..].find(&pat) else {
            return Ok(None);
        };
        let abs = search + pos;
        let rest = &text[abs + pat.len()..];
        // Reject prefixes of longer field names (e.g. `gen` inside `gencost`).
        if rest.starts_with(|c: char| c.is_alphanumeric() || c == '_') {
            search = abs + pat.len();
            continue;
        }
        let trimmed = rest.trim_start();
        let Some(after_eq) = trimmed.strip_prefix('=') else {
            search = abs + pat.len();
            continue;
        };
        let after_eq = after_eq.trim_start();
        let Some(block) = after_eq.strip_prefix('[') else {
            search = abs + pat.len();
            continue;
        };
        let Some(end) = block.find(']') else {
            return Err(CaseError::MalformedMatrix {
                section: name.to_string(),
                row: 0,
                got: 0,
                expected: 0,
            });
        };
        break &block[..end];
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected = 0usize;
    for (i, line) in body
        .split(|c| c == ';' || c == '\n')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
    {
        let mut row = Vec::new();
        for tok in line.split([' ', '\t', ',']).filter(|t| !t.is_empty()) {
            let v = tok
                .parse::<f64>()
                .map_err(|_| CaseError::NonNumericEntry {
                    section: name.to_string(),
                    token: tok.to_string(),
                })?;
            row.push(v);
        }
        if i == 0 {
            expected = row.len();
        } else if row.len() != expected {
            return Err(CaseError::MalformedMatrix {
                section: name.to_string(),
                row: i,
                got: row.len(),
                expected,
            });
        }
        rows.push(row);
    }
    Ok(Some(rows))
}
