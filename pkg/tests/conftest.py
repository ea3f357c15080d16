import hashlib
import random
import shutil
from pathlib import Path

import pytest

from rhysida_lab.infection_sim.corpus import MARKER_FILE
from rhysida_lab.infection_sim.crypto import MIB, generate_rsa_key

BOUNDARY_SIZES = [0, 1, 15, 16, 17, MIB - 1, MIB, 2 * MIB - 1, 2 * MIB, 3 * MIB - 1, 3 * MIB, 4 * MIB - 1, 4 * MIB]


@pytest.fixture(scope="session")
def rsa_key():
    return generate_rsa_key(seed=20240101)


def corpus_sizes(n: int, rng: random.Random, tiny_fraction: float = 0.25, large: bool = True) -> list[int]:
    """File sizes covering every offset-plan branch, with a share of tiny files."""
    sizes = list(BOUNDARY_SIZES) + [8 * MIB] if large else [0, 1, 17, 4096]
    while len(sizes) < n:
        r = rng.random()
        if r < tiny_fraction:
            sizes.append(rng.randint(0, 200))
        elif r < tiny_fraction + 0.50 or not large:
            sizes.append(rng.randint(201, 256 * 1024))
        elif r < tiny_fraction + 0.60:
            sizes.append(rng.randint(MIB, 2 * MIB - 1))
        elif r < tiny_fraction + 0.67:
            sizes.append(rng.randint(2 * MIB, 3 * MIB - 1))
        elif r < tiny_fraction + 0.72:
            sizes.append(rng.randint(3 * MIB, 4 * MIB - 1))
        else:
            sizes.append(rng.randint(4 * MIB, 8 * MIB))
    rng.shuffle(sizes)
    return sizes[:n]


def write_corpus(root: Path, sizes: list[int], rng: random.Random, fanout: int = 6) -> dict[str, bytes]:
    """Nested corpus with random contents; returns {relative path: bytes}."""
    root.mkdir(parents=True, exist_ok=True)
    files = {}
    for i, size in enumerate(sizes):
        depth = rng.randint(0, 2)
        parts = [f"dir{rng.randint(0, fanout - 1)}" for _ in range(depth)]
        rel = "/".join(parts + [f"f{i:04d}_{rng.randint(0, 999):03d}.bin"])
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        data = rng.randbytes(size)
        path.write_bytes(data)
        files[rel] = data
    (root / MARKER_FILE).touch()
    return files


def snapshot(root: Path, dest: Path) -> Path:
    shutil.copytree(root, dest)
    return dest


def tree_digests(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture
def small_corpus(tmp_path):
    rng = random.Random(99)
    sizes = corpus_sizes(48, rng, tiny_fraction=0.3, large=False)
    root = tmp_path / "corpus"
    files = write_corpus(root, sizes, rng)
    return root, files


# one line per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
