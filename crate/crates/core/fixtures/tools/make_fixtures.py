"""Writes the bundled molecule fixtures and the 16-molecule overfit set.

Targets are synthetic: a screened pairwise nuclear-charge sum,
    energy = sum_{a<b} Z_a Z_b exp(-d_ab / 1.5) / 10,
so they depend smoothly on geometry. Run from this directory.
"""
import math
import random
from pathlib import Path

Z = {"H": 1, "C": 6, "N": 7, "O": 8}

BASE = {
    "water": [("O", 0.0, 0.0, 0.1173), ("H", 0.0, 0.7572, -0.4692), ("H", 0.0, -0.7572, -0.4692)],
    "methane": [("C", 0.0, 0.0, 0.0), ("H", 0.6291, 0.6291, 0.6291), ("H", -0.6291, -0.6291, 0.6291),
                ("H", -0.6291, 0.6291, -0.6291), ("H", 0.6291, -0.6291, -0.6291)],
    "ammonia": [("N", 0.0, 0.0, 0.1162), ("H", 0.0, 0.9397, -0.2711), ("H", 0.8138, -0.4699, -0.2711),
                ("H", -0.8138, -0.4699, -0.2711)],
    "formaldehyde": [("C", 0.0, 0.0, -0.5297), ("O", 0.0, 0.0, 0.6770), ("H", 0.0, 0.9347, -1.1130),
                     ("H", 0.0, -0.9347, -1.1130)],
    "hydrogen_cyanide": [("H", 0.0, 0.0, -1.6275), ("C", 0.0, 0.0, -0.5615), ("N", 0.0, 0.0, 0.5910)],
    "methanol": [("C", -0.0469, 0.6608, 0.0), ("O", -0.0469, -0.7612, 0.0), ("H", -1.0857, 0.9751, 0.0),
                 ("H", 0.4359, 1.0817, 0.8918), ("H", 0.4359, 1.0817, -0.8918), ("H", 0.8672, -1.0617, 0.0)],
    "ethylene": [("C", 0.0, 0.0, 0.6695), ("C", 0.0, 0.0, -0.6695), ("H", 0.0, 0.9289, 1.2321),
                 ("H", 0.0, -0.9289, 1.2321), ("H", 0.0, 0.9289, -1.2321), ("H", 0.0, -0.9289, -1.2321)],
    "hydrogen_peroxide": [("O", 0.0, 0.7375, -0.0528), ("O", 0.0, -0.7375, -0.0528),
                          ("H", 0.8190, 0.8170, 0.4220), ("H", -0.8190, -0.8170, 0.4220)],
    "formic_acid": [("C", 0.0, 0.4229, 0.0), ("O", 1.0453, -0.1943, 0.0), ("O", -1.1574, -0.2658, 0.0),
                    ("H", 0.0, 1.5197, 0.0), ("H", -1.8756, 0.3804, 0.0)],
    "ethanol": [("C", -0.0013, 1.0844, 0.0082), ("C", 0.0023, -0.0060, 0.0020), ("O", 0.9074, -0.4012, 0.9934),
                ("H", 0.5113, 1.4461, -0.8827), ("H", -1.0170, 1.4834, 0.0049), ("H", 0.5206, 1.4848, 0.8798),
                ("H", -0.5230, -0.3836, -0.8796), ("H", 0.5172, -0.3789, -0.8747), ("H", 1.7988, -0.0567, 0.8131)],
}


def energy(atoms):
    total = 0.0
    for a in range(len(atoms)):
        for b in range(a + 1, len(atoms)):
            d = math.dist(atoms[a][1:], atoms[b][1:])
            total += Z[atoms[a][0]] * Z[atoms[b][0]] * math.exp(-d / 1.5) / 10.0
    return total


def write(path, atoms, bonds=None):
    lines = [str(len(atoms)), f"energy={energy(atoms):.10f}"]
    lines += [f"{s} {x:.6f} {y:.6f} {z:.6f}" for s, x, y, z in atoms]
    if bonds:
        lines.append("BONDS")
        lines += [f"{a} {b}" for a, b in bonds]
    path.write_text("\n".join(lines) + "\n")


def main():
    root = Path(__file__).resolve().parent.parent
    mol_dir = root / "molecules"
    for name, atoms in BASE.items():
        write(mol_dir / f"{name}.xyz", atoms, [(0, 1), (0, 2)] if name == "water" else None)
    (root / "molecules.manifest").write_text(
        "# bundled fixture molecules\n" + "".join(f"molecules/{n}.xyz\n" for n in BASE)
    )

    # Rigidly moved copy of water and a copy with one displaced atom.
    c, s = math.cos(0.7), math.sin(0.7)
    moved = [(a, c * x - s * y + 1.5, s * x + c * y - 2.0, z + 0.25) for a, x, y, z in BASE["water"]]
    write(mol_dir / "water_moved.xyz", moved, [(0, 1), (0, 2)])
    tampered = list(BASE["water"])
    tampered[1] = ("H", 0.0, 0.9572, -0.4692)
    write(root / "tampered" / "water_tampered.xyz", tampered, [(0, 1), (0, 2)])
    (root / "pairs.txt").write_text("molecules/water.xyz molecules/water_moved.xyz\n")
    (root / "tampered" / "pairs.txt").write_text("../molecules/water.xyz water_tampered.xyz\n")

    rng = random.Random(20240611)
    small = [n for n, a in BASE.items() if len(a) <= 8]
    names = []
    for i in range(16):
        base = small[i % len(small)]
        atoms = [(a, x + rng.uniform(-0.06, 0.06), y + rng.uniform(-0.06, 0.06), z + rng.uniform(-0.06, 0.06))
                 for a, x, y, z in BASE[base]]
        name = f"{i:02d}_{base}.xyz"
        write(root / "overfit" / name, atoms)
        names.append(name)
    (root / "overfit" / "overfit.manifest").write_text("".join(f"{n}\n" for n in names))


if __name__ == "__main__":
    main()
