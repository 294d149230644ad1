#!/usr/bin/env python3
"""Embed SMILES from a CSV into 3D and write a V2000 SDF with a `target` field.

The Rust pipeline only ingests molecules that already carry coordinates; this
adapter produces them with RDKit (ETKDG embedding followed by MMFF relaxation,
fixed random seed). Hydrogens are used during embedding and removed before
writing, so every record is a heavy-atom graph with 3D coordinates.

    python3 tools/smiles_to_sdf.py data/raw/ESOL.csv data/esol.sdf \
        --smiles smiles --target "measured log solubility in mols per litre" --prefix esol
"""
import argparse
import csv
import sys

from rdkit import Chem, RDLogger
from rdkit.Chem import AllChem


def embed(smiles, seed):
    mol = Chem.MolFromSmiles(smiles)
    if mol is None:
        return None
    mol = Chem.AddHs(mol)
    params = AllChem.ETKDGv3()
    params.randomSeed = seed
    if AllChem.EmbedMolecule(mol, params) != 0:
        params.useRandomCoords = True
        if AllChem.EmbedMolecule(mol, params) != 0:
            return None
    if AllChem.MMFFHasAllMoleculeParams(mol):
        AllChem.MMFFOptimizeMolecule(mol, maxIters=500)
    else:
        AllChem.UFFOptimizeMolecule(mol, maxIters=500)
    return Chem.RemoveHs(mol)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("sdf")
    ap.add_argument("--smiles", default="smiles")
    ap.add_argument("--target", required=True)
    ap.add_argument("--name", default=None, help="column copied into a `name` field")
    ap.add_argument("--prefix", default="mol")
    ap.add_argument("--seed", type=int, default=0xF00D)
    args = ap.parse_args()
    RDLogger.DisableLog("rdApp.*")

    written = skipped = 0
    with open(args.csv, newline="") as fh, open(args.sdf, "w") as out:
        writer = Chem.SDWriter(out)
        writer.SetForceV3000(False)
        for i, row in enumerate(csv.DictReader(fh)):
            mol = embed(row[args.smiles], args.seed)
            if mol is None:
                print(f"skip row {i}: {row[args.smiles]}", file=sys.stderr)
                skipped += 1
                continue
            mol.SetProp("_Name", f"{args.prefix}_{i:04d}")
            mol.SetProp("target", row[args.target])
            mol.SetProp("smiles", row[args.smiles])
            if args.name:
                mol.SetProp("name", row[args.name])
            writer.write(mol)
            written += 1
        writer.close()
    print(f"wrote {written} molecules, skipped {skipped}", file=sys.stderr)


if __name__ == "__main__":
    main()
