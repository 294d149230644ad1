use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Atom, ChemError, Graph3D};

/// One line of the JSON-lines interchange format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRecord {
    pub id: String,
    pub atoms: Vec<AtomRecord>,
    pub bonds: Vec<[usize; 2]>,
    #[serde(default)]
    pub target: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub element: String,
    pub xyz: [f64; 3],
}

impl From<&Graph3D> for MoleculeRecord {
    fn from(g: &Graph3D) -> Self {
        Self {
            id: g.name.clone(),
            atoms: g
                .atoms()
                .iter()
                .map(|a| AtomRecord {
                    element: a.element.clone(),
                    xyz: a.position,
                })
                .collect(),
            bonds: g.bonds().iter().map(|&(i, j)| [i, j]).collect(),
            target: g.target,
        }
    }
}

impl TryFrom<MoleculeRecord> for Graph3D {
    type Error = ChemError;

    fn try_from(r: MoleculeRecord) -> Result<Self, ChemError> {
        let atoms = r
            .atoms
            .iter()
            .map(|a| Atom::new(&a.element, a.xyz))
            .collect::<Result<Vec<_>, _>>()?;
        let bonds = r.bonds.iter().map(|b| (b[0], b[1])).collect();
        Graph3D::new(r.id, atoms, bonds, r.target)
    }
}

pub fn write_jsonl<'a>(
    mut out: impl Write,
    graphs: impl IntoIterator<Item = &'a Graph3D>,
) -> Result<usize, ChemError> {
    let mut n = 0;
    for g in graphs {
        let line = serde_json::to_string(&MoleculeRecord::from(g))
            .map_err(|source| ChemError::Json { line: n + 1, source })?;
        writeln!(out, "{line}")?;
        n += 1;
    }
    Ok(n)
}

/// Reads every non-blank line; the first invalid line aborts with its number.
pub fn read_jsonl(input: impl BufRead) -> Result<Vec<Graph3D>, ChemError> {
    let mut graphs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MoleculeRecord = serde_json::from_str(&line)
            .map_err(|source| ChemError::Json { line: i + 1, source })?;
        let g = Graph3D::try_from(rec).map_err(|e| ChemError::Record {
            record: i,
            message: e.to_string(),
        })?;
        graphs.push(g);
    }
    Ok(graphs)
}
