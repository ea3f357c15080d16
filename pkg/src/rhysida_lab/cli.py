"""Command-line front end: ``simulate``, ``recover``, ``inspect``, ``bench-search``."""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import tempfile
import time
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from . import config as config_mod
from .config import LabConfig
from .csprng import Arch
from .decryptor import RecoveryReport, decrypt_corpus
from .infection_sim import manifest as manifest_mod
from .infection_sim.corpus import ENCRYPTED_SUFFIX, MARKER_FILE, FileMeta, traverse
from .infection_sim.crypto import FOOTER_SIZE, offset_plan
from .infection_sim.simulate import SimConfig, manifest_path, simulate
from .oracles import ValidityOracle, make_oracle
from .order_reconstruct import build_hypothesis, collision_capacity
from .seed_search import SearchResult, SeedWindow, search, stderr_progress

log = logging.getLogger("rhysida_lab")

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2
EXIT_SEED_INVALID = 3


class LabError(Exception):
    pass


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(corpus: Path, cfg: LabConfig, time_seed: int | None, copy_to: Path | None = None,
                 dry_run: bool = False) -> int:
    corpus = Path(corpus)
    if not corpus.is_dir():
        raise LabError(f"{corpus} is not a directory")
    if not (corpus / MARKER_FILE).is_file():
        raise LabError(
            f"refusing to encrypt {corpus}: create an empty '{MARKER_FILE}' file in it "
            "to confirm this directory is a disposable lab corpus"
        )
    if time_seed is None:
        time_seed = int(time.time())
    processors = cfg.processors or 4
    sim_cfg = SimConfig(
        processors=processors,
        stack_capacity=cfg.stack_capacity,
        arch=cfg.arch,
        tick_us=cfg.tick_us,
        interleave_seed=cfg.interleave_seed,
        clock_hz=cfg.clock_hz,
        key_schedule_cycles=cfg.key_schedule_cycles,
        cycles_per_byte=cfg.cycles_per_byte,
        start_delay_us=cfg.start_delay_us,
        entropy_strategy=cfg.entropy_strategy,
    )
    if dry_run:
        files = traverse(corpus).files
        print(f"dry run: would encrypt {len(files)} files in {corpus} with seed {time_seed}, "
              f"{processors} threads ({processors + 1} generators), arch {cfg.arch.value}")
        return EXIT_OK
    if copy_to is not None:
        if copy_to.exists():
            raise LabError(f"--copy target {copy_to} already exists")
        shutil.copytree(corpus, copy_to, symlinks=True)
        corpus = copy_to
    result = simulate(corpus, time_seed, sim_cfg)
    rec = result.record
    print(f"encrypted {len(rec.files)} files in {corpus}")
    print(f"time_seed={time_seed} processors={processors} generators={processors + 1} arch={cfg.arch.value}")
    for t, n in sorted(rec.emitted.items()):
        print(f"thread {t}: {len(rec.by_thread().get(t, []))} files, {n} keystream bytes")
    for path, why in result.skipped:
        print(f"skipped {path}: {why}", file=sys.stderr)
    print(f"manifest: {manifest_path(corpus)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# recover


@dataclass
class RecoverOutcome:
    search: SearchResult | None
    report: RecoveryReport | None
    exit_code: int


def resolve_machine(corpus: Path, cfg: LabConfig) -> tuple[int, Arch]:
    """Processor count and arch: explicit config wins, else the manifest of a simulated corpus."""
    processors, arch = cfg.processors, cfg.arch
    mpath = manifest_path(corpus)
    if mpath.exists():
        rec = manifest_mod.load(mpath)
        processors = processors or rec.processors
        arch = rec.arch
    if not processors:
        raise LabError("the victim's processor count is unknown; pass --processors")
    return processors, arch


def encrypted_metas(corpus: Path) -> list[FileMeta]:
    return [m for m in traverse(corpus).files if m.path.endswith(ENCRYPTED_SUFFIX)]


def run_recover(
    corpus: Path,
    cfg: LabConfig,
    oracle: ValidityOracle | None = None,
    window_high: int | None = None,
    seed: int | None = None,
    dry_run: bool = False,
    keep_encrypted: bool = False,
    progress=None,
    arch: Arch | None = None,
) -> RecoverOutcome:
    corpus = Path(corpus)
    processors, manifest_arch = resolve_machine(corpus, cfg)
    arch = arch or manifest_arch
    metas = encrypted_metas(corpus)
    if not metas:
        raise LabError(f"no '*{ENCRYPTED_SUFFIX}' files under {corpus}")
    if oracle is None:
        oracle = make_oracle(cfg.oracle, known_dir=cfg.known_dir, magic_table=cfg.magic_table,
                             entropy_threshold=cfg.entropy_threshold)
    found = None
    if seed is None:
        window = SeedWindow.below(metas, cfg.window_span)
        if window_high is not None:
            window = SeedWindow(window_high, cfg.window_span)
        found = search(window, metas, processors, arch, oracle, corpus, parallelism=cfg.jobs,
                       strategy=cfg.entropy_strategy, progress=progress)
        if not found.found:
            return RecoverOutcome(found, None, EXIT_SEED_INVALID)
        seed = found.seed
    capacity = collision_capacity(cfg.clock_hz, cfg.key_schedule_cycles, cfg.cycles_per_byte, cfg.tick_us / 1e6)
    order = build_hypothesis(metas, processors, capacity)
    report = decrypt_corpus(seed, metas, processors, arch, order, oracle, corpus, dry_run=dry_run,
                            keep_encrypted=keep_encrypted, jobs=cfg.jobs, strategy=cfg.entropy_strategy)
    return RecoverOutcome(found, report, EXIT_OK if report.all_recovered else EXIT_PARTIAL)


def cmd_recover(corpus: Path, cfg: LabConfig, seed: int | None, window_high: int | None, dry_run: bool,
                keep_encrypted: bool, report_path: Path | None, quiet: bool) -> int:
    out = run_recover(corpus, cfg, window_high=window_high, seed=seed, dry_run=dry_run,
                      keep_encrypted=keep_encrypted, progress=None if quiet else stderr_progress)
    if out.search is not None:
        print(out.search.summary())
        for d in out.search.diagnostics:
            print(f"warning: {d}", file=sys.stderr)
        if not out.search.found:
            if out.search.weak_seeds:
                print("seeds with too little evidence to accept: "
                      + ", ".join(f"{s} ({b:.0f} bits)" for s, b in out.search.weak_seeds[:10]))
            print("no files were modified; widen --window-span or choose another --oracle", file=sys.stderr)
            return out.exit_code
    rep = out.report
    text = rep.text()
    if report_path is not None and not dry_run:
        report_path.write_text(text)
    print(text, end="")
    print(f"recovered {rep.count('recovered')}/{len(rep.files)} files"
          f"{' (dry run, nothing written)' if dry_run else ''}")
    return out.exit_code


# ---------------------------------------------------------------------------
# inspect


def inspect_file(path: Path) -> str:
    st = path.stat()
    size = st.st_size
    mtime = st.st_mtime_ns // 1000
    if size < FOOTER_SIZE:
        return f"{path}: size={size} mtime_us={mtime} not Rhysida-shaped (smaller than 0x40C footer)"
    body = size - FOOTER_SIZE
    plan = offset_plan(body)
    offsets = ",".join(map(str, plan.offsets)) or "-"
    return f"{path}: size={size} original_size={body} div={plan.div} offsets={offsets} mtime_us={mtime}"


def cmd_inspect(target: Path, cfg: LabConfig) -> int:
    target = Path(target)
    if target.is_file():
        print(inspect_file(target))
        return EXIT_OK
    if not target.is_dir():
        raise LabError(f"{target} does not exist")
    metas = traverse(target).files
    for m in metas:
        print(inspect_file(target / m.path))
    enc = [m for m in metas if m.path.endswith(ENCRYPTED_SUFFIX)]
    try:
        processors, _ = resolve_machine(target, cfg)
    except LabError:
        processors = None
    if processors:
        hist = build_hypothesis(enc, processors).collision_histogram()
        scope = f"per thread, {processors} processors"
    else:
        counts = Counter(m.mtime for m in enc)
        hist = dict(sorted(Counter(c for c in counts.values() if c > 1).items()))
        scope = "whole directory, processor count unknown"
    print(f"collision groups ({scope}): " + (", ".join(f"size {k}: {v}" for k, v in hist.items()) or "none"))
    cap = collision_capacity(cfg.clock_hz, cfg.key_schedule_cycles, cfg.cycles_per_byte, cfg.tick_us / 1e6)
    bounds = ", ".join(f"{k} files <= {b} bytes" for k, b in cap.size_bound_per_k.items())
    print(f"tick capacity: at most {cap.max_files} files per tick ({bounds})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench-search


def bench_search(seeds: int, processors: int, arch: Arch, jobs: int, files_per_thread: int = 1) -> dict:
    """Time the seed scan on a throwaway simulated corpus with a known-plaintext oracle."""
    import random

    from .infection_sim.crypto import generate_rsa_key
    from .oracles import KnownPlaintextOracle

    rng = random.Random(1234)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        originals = {}
        for i in range(processors * files_per_thread):
            data = rng.randbytes(rng.randint(64 * 1024, 2 * 1024 * 1024))
            name = f"f{i:03d}.bin"
            (root / name).write_bytes(data)
            originals[name] = data
        true_seed = 1_700_000_000
        simulate(root, true_seed, SimConfig(processors=processors, arch=arch),
                 rsa_key=generate_rsa_key(seed=7), write_manifest=False)
        oracle = KnownPlaintextOracle.from_plaintexts(originals)
        metas = encrypted_metas(root)
        # scan a window that stops just short of the true seed: every seed is a full miss
        window = SeedWindow(true_seed + seeds, seeds)
        search(SeedWindow(true_seed + 64, 64), metas, processors, arch, oracle, root)  # compile
        res = search(window, metas, processors, arch, oracle, root, parallelism=jobs)
    cores = min(jobs, os.cpu_count() or 1)
    return {
        "seeds": res.seeds_tried,
        "elapsed": res.elapsed,
        "seeds_per_sec": res.throughput,
        "seeds_per_sec_per_core": res.throughput / cores,
        "cores": cores,
        "found": res.found,
    }


def cmd_bench(seeds: int, processors: int, arch: Arch, jobs: int) -> int:
    r = bench_search(seeds, processors, arch, jobs)
    print(f"{r['seeds']} seed trials in {r['elapsed']:.3f}s: {r['seeds_per_sec']:,.0f} seeds/s "
          f"({r['seeds_per_sec_per_core']:,.0f} per core over {r['cores']} core(s))")
    full = 2**32 / r["seeds_per_sec"]
    print(f"full 2^32 seed space at this rate: {full / 3600:.1f} h")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rhysida-lab", description=__doc__)
    p.add_argument("--config", type=Path, help=f"config file (default ${config_mod.CONFIG_ENV} or ~/.config/rhysida-lab/lab.conf)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def machine(sp):
        sp.add_argument("--processors", type=int)
        sp.add_argument("--arch", choices=["x86", "x64"])
        sp.add_argument("--jobs", type=int)

    sp = sub.add_parser("simulate", help="encrypt a lab corpus and write the ground-truth manifest")
    sp.add_argument("corpus", type=Path)
    machine(sp)
    sp.add_argument("--seed", type=int, help="rand() time seed (default: now)")
    sp.add_argument("--stack-capacity", type=int)
    sp.add_argument("--tick-us", type=int)
    sp.add_argument("--interleave-seed", type=int)
    sp.add_argument("--start-delay-us", type=int)
    sp.add_argument("--copy", type=Path, help="encrypt a copy at this path instead of in place")
    sp.add_argument("--dry-run", action="store_true")

    sp = sub.add_parser("recover", help="find the seed, rebuild the order and decrypt")
    sp.add_argument("corpus", type=Path)
    machine(sp)
    sp.add_argument("--seed", type=int, help="skip the search and use this seed")
    sp.add_argument("--window-span", type=int)
    sp.add_argument("--window-high", type=int, help="highest seed to try (default: earliest mtime)")
    sp.add_argument("--tick-us", type=int)
    sp.add_argument("--oracle", choices=config_mod.ORACLE_MODES)
    sp.add_argument("--known-dir", type=Path, help="originals for the known-plaintext oracle")
    sp.add_argument("--magic-table", type=Path)
    sp.add_argument("--keep-encrypted", action="store_true")
    sp.add_argument("--report", type=Path)
    sp.add_argument("--dry-run", action="store_true")
    sp.add_argument("-q", "--quiet", action="store_true")

    sp = sub.add_parser("inspect", help="forensic summary of an encrypted file or directory")
    sp.add_argument("target", type=Path)
    sp.add_argument("--processors", type=int)
    sp.add_argument("--tick-us", type=int)
    sp.add_argument("--dry-run", action="store_true", help="accepted for symmetry; inspect never writes")

    sp = sub.add_parser("bench-search", help="measure seed trials per second")
    machine(sp)
    sp.add_argument("--seeds", type=int, default=200_000)
    sp.add_argument("--dry-run", action="store_true", help="accepted for symmetry; the benchmark writes only to a temp dir")
    return p


def _config_from_args(args) -> LabConfig:
    cfg = config_mod.load(args.config)
    get = lambda name: getattr(args, name, None)  # noqa: E731
    return cfg.replace(
        processors=get("processors"),
        arch=Arch.parse(get("arch")) if get("arch") else None,
        jobs=get("jobs"),
        stack_capacity=get("stack_capacity"),
        tick_us=get("tick_us"),
        interleave_seed=get("interleave_seed"),
        start_delay_us=get("start_delay_us"),
        window_span=get("window_span"),
        oracle=get("oracle"),
        known_dir=str(get("known_dir")) if get("known_dir") else None,
        magic_table=str(get("magic_table")) if get("magic_table") else None,
    )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config_from_args(args)
        if args.command == "simulate":
            return cmd_simulate(args.corpus, cfg, args.seed, args.copy, args.dry_run)
        if args.command == "recover":
            return cmd_recover(args.corpus, cfg, args.seed, args.window_high, args.dry_run,
                               args.keep_encrypted, args.report, args.quiet)
        if args.command == "inspect":
            return cmd_inspect(args.target, cfg)
        if args.command == "bench-search":
            return cmd_bench(args.seeds, cfg.processors or 4, cfg.arch, cfg.jobs)
    except (LabError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
