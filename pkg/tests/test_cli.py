import os
import random
import shutil

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rhysida_lab import config as config_mod
from rhysida_lab.cli import (
    EXIT_OK,
    EXIT_SEED_INVALID,
    EXIT_USAGE,
    bench_search,
    inspect_file,
    main,
)
from rhysida_lab.config import LabConfig
from rhysida_lab.csprng import Arch, EntropyStrategy
from rhysida_lab.infection_sim.corpus import MARKER_FILE
from rhysida_lab.infection_sim.crypto import FOOTER_SIZE, MIB
from tests.conftest import snapshot, tree_digests

SEED = 1_680_000_000


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    monkeypatch.setenv(config_mod.CONFIG_ENV, str(tmp_path / "no-such.conf"))


@pytest.fixture
def lab(tmp_path):
    rng = random.Random(12)
    root = tmp_path / "corpus"
    (root / "docs").mkdir(parents=True)
    for i in range(12):
        (root / "docs" / f"n{i}.bin").write_bytes(rng.randbytes(rng.randint(0, 40_000)))
    (root / "big.bin").write_bytes(rng.randbytes(5 * MIB))
    (root / MARKER_FILE).touch()
    originals = snapshot(root, tmp_path / "originals")
    return root, originals


def sim(root, *extra):
    return main(["simulate", str(root), "--seed", str(SEED), "--processors", "2",
                 "--start-delay-us", "3000000", *extra])


class TestSimulate:
    def test_refuses_without_marker(self, tmp_path, capsys):
        (tmp_path / "c").mkdir()
        (tmp_path / "c" / "f").write_bytes(b"keep me")
        assert main(["simulate", str(tmp_path / "c"), "--seed", "1"]) == EXIT_USAGE
        assert "refusing" in capsys.readouterr().err
        assert (tmp_path / "c" / "f").read_bytes() == b"keep me"

    def test_dry_run_changes_nothing(self, lab, capsys):
        root, _ = lab
        before = tree_digests(root)
        assert sim(root, "--dry-run") == EXIT_OK
        assert tree_digests(root) == before
        assert "would encrypt 13 files" in capsys.readouterr().out

    def test_copy_leaves_source(self, lab, tmp_path):
        root, _ = lab
        before = tree_digests(root)
        assert sim(root, "--copy", str(tmp_path / "victim")) == EXIT_OK
        assert tree_digests(root) == before
        assert (tmp_path / "victim" / "big.bin.rhysida").stat().st_size == 5 * MIB + FOOTER_SIZE


class TestRecover:
    def test_round_trip_known_plaintext(self, lab, tmp_path, capsys):
        root, originals = lab
        assert sim(root) == EXIT_OK
        report = tmp_path / "report.txt"
        code = main(["recover", str(root), "--oracle", "known", "--known-dir", str(originals),
                     "--window-span", "4096", "--report", str(report), "-q"])
        out = capsys.readouterr().out
        assert code == EXIT_OK, out
        assert f"seed {SEED} found" in out
        assert "recovered 13/13" in out
        assert report.read_text().startswith(f"# recovery seed={SEED}")
        got = {k: v for k, v in tree_digests(root).items() if not k.startswith(".rhysida-lab")}
        want = {k: v for k, v in tree_digests(originals).items() if not k.startswith(".rhysida-lab")}
        assert got == want

    def test_dry_run_writes_nothing(self, lab, capsys):
        root, originals = lab
        sim(root)
        before = tree_digests(root)
        code = main(["recover", str(root), "--oracle", "known", "--known-dir", str(originals),
                     "--dry-run", "-q"])
        assert code == EXIT_OK
        assert "nothing written" in capsys.readouterr().out
        assert tree_digests(root) == before

    def test_window_without_seed_exits_3(self, lab, capsys):
        root, originals = lab
        sim(root)
        before = tree_digests(root)
        code = main(["recover", str(root), "--oracle", "known", "--known-dir", str(originals),
                     "--window-high", str(SEED - 1), "--window-span", "2000", "-q"])
        captured = capsys.readouterr()
        assert code == EXIT_SEED_INVALID
        assert "exhausted window" in captured.out
        assert "no files were modified" in captured.err
        assert tree_digests(root) == before

    def test_explicit_seed(self, lab, capsys):
        root, originals = lab
        sim(root)
        code = main(["recover", str(root), "--seed", str(SEED), "--oracle", "known",
                     "--known-dir", str(originals), "-q"])
        assert code == EXIT_OK
        assert (root / "big.bin").read_bytes() == (originals / "big.bin").read_bytes()

    def test_needs_processors_without_manifest(self, lab, capsys):
        root, originals = lab
        sim(root)
        shutil.rmtree(root / ".rhysida-lab")
        code = main(["recover", str(root), "--oracle", "known", "--known-dir", str(originals), "-q"])
        assert code == EXIT_USAGE
        assert "--processors" in capsys.readouterr().err
        code = main(["recover", str(root), "--processors", "2", "--oracle", "known",
                     "--known-dir", str(originals), "-q"])
        assert code == EXIT_OK

    def test_magic_oracle_on_unknown_types_is_usage_error(self, lab, capsys):
        root, _ = lab
        sim(root)
        assert main(["recover", str(root), "--oracle", "magic", "-q"]) == EXIT_USAGE
        assert "cannot screen" in capsys.readouterr().err


class TestInspect:
    def test_five_mib_file(self, tmp_path):
        f = tmp_path / "x.rhysida"
        f.write_bytes(bytes(5 * MIB + FOOTER_SIZE))
        line = inspect_file(f)
        assert "original_size=5242880 div=4 offsets=0,1310720,2621440,3932160" in line

    def test_small_file_flagged(self, tmp_path):
        f = tmp_path / "tiny"
        f.write_bytes(b"abc")
        assert "not Rhysida-shaped" in inspect_file(f)

    def test_distinct_mtimes_have_no_groups(self, tmp_path, capsys):
        for i in range(4):
            f = tmp_path / f"f{i}.rhysida"
            f.write_bytes(bytes(FOOTER_SIZE + i))
            os.utime(f, ns=(10**18 + i * 1000, 10**18 + i * 1000))
        assert main(["inspect", str(tmp_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "collision groups (whole directory, processor count unknown): none" in out
        assert "tick capacity: at most 4 files per tick" in out

    def test_simulated_corpus_histogram(self, lab, capsys):
        root, _ = lab
        sim(root, "--tick-us", "100000")
        capsys.readouterr()
        assert main(["inspect", str(root)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "per thread, 2 processors" in out and "size " in out

    def test_missing_target(self, tmp_path):
        assert main(["inspect", str(tmp_path / "nope")]) == EXIT_USAGE


class TestConfig:
    @given(
        st.builds(
            LabConfig,
            processors=st.one_of(st.none(), st.integers(1, 64)),
            arch=st.sampled_from(list(Arch)),
            stack_capacity=st.integers(1, 1000),
            tick_us=st.integers(1, 10**7),
            window_span=st.integers(1, 2**32),
            interleave_seed=st.integers(0, 2**40),
            jobs=st.integers(1, 64),
            oracle=st.sampled_from(config_mod.ORACLE_MODES),
            entropy_threshold=st.floats(0.01, 8.0),
            entropy_strategy=st.sampled_from(list(EntropyStrategy)),
            known_dir=st.one_of(st.none(), st.just("/data/originals")),
        )
    )
    def test_parse_serialize_round_trip(self, cfg):
        assert config_mod.parse(config_mod.serialize(cfg)) == cfg

    def test_env_relocates_config(self, tmp_path, monkeypatch):
        path = tmp_path / "elsewhere" / "lab.conf"
        path.parent.mkdir()
        path.write_text("processors=6\narch=x86\ntick-us=10\n")
        monkeypatch.setenv(config_mod.CONFIG_ENV, str(path))
        cfg = config_mod.load()
        assert (cfg.processors, cfg.arch, cfg.tick_us) == (6, Arch.X86, 10)

    def test_flags_override_file(self, tmp_path, capsys):
        path = tmp_path / "lab.conf"
        path.write_text("tick_us=1000\n")
        assert main(["--config", str(path), "inspect", str(tmp_path), "--tick-us", "1"]) == EXIT_OK
        assert "at most 4 files per tick" in capsys.readouterr().out

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            config_mod.parse("processors=0\n")
        with pytest.raises(ValueError):
            config_mod.parse("colour=blue\n")
        with pytest.raises(ValueError):
            LabConfig(oracle="psychic")

    def test_missing_explicit_config(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.conf"), "inspect", str(tmp_path)]) == EXIT_USAGE


def test_bench_search_reports_throughput(capsys):
    r = bench_search(20_000, 2, Arch.X64, 1)
    assert r["seeds"] == 20_000 and not r["found"]
    assert r["seeds_per_sec_per_core"] > 0
    assert main(["bench-search", "--seeds", "5000", "--processors", "2"]) == EXIT_OK
    assert "seeds/s" in capsys.readouterr().out
