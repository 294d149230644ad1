// MDL SD file, V2000 connection tables
//
// header block : title / program / comment
// counts line  : aaabbblllfffcccsssxxxrrrpppiiimmmvvvvvv
// atom block   : xxxxx.xxxxyyyyy.yyyyzzzzz.zzzz aaa...
// bond block   : 111222tttsss...
// properties   : terminated by "M  END"
// data items   : "> <name>" followed by value lines and a blank line
// record end   : "$$$$"

use std::collections::HashMap;
use std::io::Read;

use super::{Atom, ChemError, Graph3D};

#[derive(Clone, Debug)]
pub struct SdfOptions {
    /// Data item holding the regression target; `None` leaves targets unset.
    pub target_field: Option<String>,
}

impl Default for SdfOptions {
    fn default() -> Self {
        Self {
            target_field: Some("target".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordError {
    /// Zero-based position of the record in the stream.
    pub record: usize,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "record {}: {}", self.record, self.message)
    }
}

/// Parsed molecules plus the records that were skipped and why.
#[derive(Debug, Default)]
pub struct SdfParse {
    pub graphs: Vec<Graph3D>,
    pub errors: Vec<RecordError>,
}

pub fn parse_sdf(text: &str, opts: &SdfOptions) -> SdfParse {
    let mut out = SdfParse::default();
    let mut current: Vec<&str> = Vec::new();
    let mut index = 0;
    let mut flush = |lines: &mut Vec<&str>, index: &mut usize| {
        if lines.iter().all(|l| l.trim().is_empty()) {
            lines.clear();
            return;
        }
        match parse_record(lines, *index, opts) {
            Ok(g) => out.graphs.push(g),
            Err(message) => {
                log::warn!("skipping SDF record {index}: {message}");
                out.errors.push(RecordError {
                    record: *index,
                    message,
                })
            }
        }
        *index += 1;
        lines.clear();
    };
    for line in text.lines() {
        if line.trim_end() == "$$$$" {
            flush(&mut current, &mut index);
        } else {
            current.push(line.trim_end_matches('\r'));
        }
    }
    flush(&mut current, &mut index);
    out
}

/// Reads an SDF stream; I/O failures are errors, bad records are not.
pub fn read_sdf(mut reader: impl Read, opts: &SdfOptions) -> Result<SdfParse, ChemError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    Ok(parse_sdf(&text, opts))
}

fn field(line: &str, start: usize, end: usize) -> Option<&str> {
    let end = end.min(line.len());
    line.get(start..end).map(str::trim).filter(|s| !s.is_empty())
}

fn parse_counts(line: &str) -> Result<(usize, usize), String> {
    if line.contains("V3000") {
        return Err("V3000 connection tables are not supported".into());
    }
    let fixed = field(line, 0, 3)
        .zip(field(line, 3, 6))
        .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
    fixed.ok_or_else(|| format!("malformed counts line {line:?}"))
}

fn parse_atom(line: &str) -> Result<Atom, String> {
    let fixed = (|| {
        let x: f64 = field(line, 0, 10)?.parse().ok()?;
        let y: f64 = field(line, 10, 20)?.parse().ok()?;
        let z: f64 = field(line, 20, 30)?.parse().ok()?;
        let sym = field(line, 31, 34)?;
        Some(([x, y, z], sym.to_string()))
    })();
    let (xyz, sym) = match fixed {
        Some(v) => v,
        None => {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() < 4 {
                return Err(format!("malformed atom line {line:?}"));
            }
            let mut xyz = [0.0; 3];
            for (c, t) in xyz.iter_mut().zip(&tok[..3]) {
                *c = t
                    .parse()
                    .map_err(|_| format!("non-numeric coordinate {t:?}"))?;
            }
            (xyz, tok[3].to_string())
        }
    };
    if xyz.iter().any(|c| !c.is_finite()) {
        return Err(format!("non-finite coordinate in {line:?}"));
    }
    Atom::new(&sym, xyz).map_err(|e| e.to_string())
}

fn parse_bond(line: &str, num_atoms: usize) -> Result<(usize, usize), String> {
    let fixed = field(line, 0, 3)
        .zip(field(line, 3, 6))
        .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)));
    let (a, b) = match fixed {
        Some(p) => p,
        None => {
            let tok: Vec<&str> = line.split_whitespace().collect();
            let a = tok.first().and_then(|t| t.parse().ok());
            let b = tok.get(1).and_then(|t| t.parse().ok());
            a.zip(b)
                .ok_or_else(|| format!("malformed bond line {line:?}"))?
        }
    };
    for idx in [a, b] {
        if idx == 0 || idx > num_atoms {
            return Err(format!(
                "bond {a}-{b} references atom {idx}, outside 1..={num_atoms}"
            ));
        }
    }
    Ok((a - 1, b - 1))
}

fn parse_record(lines: &[&str], index: usize, opts: &SdfOptions) -> Result<Graph3D, String> {
    let counts = lines.get(3).ok_or("truncated header block")?;
    let (num_atoms, num_bonds) = parse_counts(counts)?;
    let atom_lines = lines
        .get(4..4 + num_atoms)
        .ok_or_else(|| format!("expected {num_atoms} atom lines"))?;
    let atoms = atom_lines
        .iter()
        .map(|l| parse_atom(l))
        .collect::<Result<Vec<_>, _>>()?;
    let bond_start = 4 + num_atoms;
    let bond_lines = lines
        .get(bond_start..bond_start + num_bonds)
        .ok_or_else(|| format!("expected {num_bonds} bond lines"))?;
    let bonds = bond_lines
        .iter()
        .map(|l| parse_bond(l, num_atoms))
        .collect::<Result<Vec<_>, _>>()?;

    let data = data_items(&lines[bond_start + num_bonds..]);
    let target = match &opts.target_field {
        Some(name) => match data.get(name.as_str()) {
            Some(v) => Some(
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("field <{name}> is not numeric: {v:?}"))?,
            ),
            None => None,
        },
        None => None,
    };
    let title = lines[0].trim();
    let name = if title.is_empty() {
        format!("record_{index}")
    } else {
        title.to_string()
    };
    Graph3D::new(name, atoms, bonds, target).map_err(|e| e.to_string())
}

fn data_items<'a>(lines: &[&'a str]) -> HashMap<&'a str, String> {
    let mut items = HashMap::new();
    let mut iter = lines.iter().skip_while(|l| !l.starts_with("M  END"));
    iter.next();
    let mut key: Option<&str> = None;
    let mut value = String::new();
    for &line in iter {
        if line.starts_with('>') {
            if let Some(k) = key.take() {
                items.insert(k, std::mem::take(&mut value));
            }
            key = line
                .find('<')
                .zip(line.rfind('>'))
                .and_then(|(s, e)| line.get(s + 1..e));
        } else if line.trim().is_empty() {
            if let Some(k) = key.take() {
                items.insert(k, std::mem::take(&mut value));
            }
        } else if key.is_some() {
            if !value.is_empty() {
                value.push('\n');
            }
            value.push_str(line);
        }
    }
    if let Some(k) = key {
        items.insert(k, value);
    }
    items
}

/// Sets targets from a CSV with columns `id,target`, matching `id` against
/// molecule names. Returns how many molecules received a target.
pub fn apply_target_csv(graphs: &mut [Graph3D], reader: impl Read) -> Result<usize, ChemError> {
    #[derive(serde::Deserialize)]
    struct Row {
        id: String,
        target: f64,
    }
    let mut map = HashMap::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: Row = row?;
        map.insert(row.id, row.target);
    }
    let mut matched = 0;
    for g in graphs {
        if let Some(&t) = map.get(&g.name) {
            g.target = Some(t);
            matched += 1;
        }
    }
    Ok(matched)
}
