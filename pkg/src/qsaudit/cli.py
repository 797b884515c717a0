"""``qsa`` command line: ingest, analyze, simulate, report."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, nist, plots, qsim, spectral, transport
from .bitcore import (
    BitMatrix,
    DatasetMeta,
    Registry,
    RegistryEntry,
    column_means,
    heatmap,
    load_bitstrings,
    ones_probability,
    save_bitstrings,
)

log = logging.getLogger("qsaudit")

SCHEMA_VERSION = 1
DEFAULT_REGISTRY = "qsa_registry.json"
ANALYSES = ("heatmap", "spectrum", "wasserstein", "nist")


class CliError(Exception):
    pass


def registry_path(arg: str | None) -> Path:
    return Path(arg or os.environ.get("QSA_REGISTRY") or DEFAULT_REGISTRY)


def _infer_m(stem: str) -> int | None:
    match = re.search(r"(?:^|[_-])m(\d+)", stem) or re.match(r"^\d+_(\d+)_", stem)
    return int(match.group(1)) if match else None


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


# --------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    reg = Registry.load(registry_path(args.registry))
    cache_dir = Path(args.cache_dir) if args.cache_dir else reg.path.parent / "cache"
    if args.name and len(args.paths) > 1:
        raise CliError("--name can only be used with a single file")

    staged: list[tuple[RegistryEntry, BitMatrix | None]] = []
    failures = []
    for raw in args.paths:
        path = Path(raw)
        name = args.name or path.stem
        try:
            digest = _sha256(path)
            old = reg.entries.get(name)
            if old and old.sha256 == digest and old.cache and Path(old.cache).exists():
                log.info("%s: unchanged, cache reused", name)
                staged.append((old, None))
                continue
            m = args.m if args.m is not None else _infer_m(path.stem)
            fmt = None if args.format == "auto" else args.format
            bm = load_bitstrings(path, fmt, DatasetMeta(name=name, m=m, origin=args.origin))
        except (OSError, ValueError) as exc:
            failures.append(f"{path}: {exc}")
            continue
        cache = cache_dir / f"{name}.qsbm"
        entry = RegistryEntry(
            name=name, path=str(path.resolve()), n=bm.cols, m=m, origin=args.origin,
            cache=str(cache.resolve()), sha256=digest, M=bm.rows,
        )
        staged.append((entry, bm))

    if failures:
        for msg in failures:
            print(f"error: {msg}", file=sys.stderr)
        return 1

    cache_dir.mkdir(parents=True, exist_ok=True)
    for entry, bm in staged:
        if bm is not None:
            save_bitstrings(bm, entry.cache, "packed-binary")
            log.info("%s: M=%d n=%d cached at %s", entry.name, entry.M, entry.n, entry.cache)
        reg.entries[entry.name] = entry
    reg.save()
    return 0


# --------------------------------------------------------------------------
# analyze


def resolve_datasets(refs: Sequence[str], reg: Registry) -> list[BitMatrix]:
    """Load every reference (registry name or file path) before any analysis runs."""
    out, missing = [], []
    stems = [Path(r).stem for r in refs if r not in reg]
    for ref in refs:
        if ref in reg:
            out.append(reg.open(ref))
        elif Path(ref).exists():
            p = Path(ref)
            # files sharing a stem (e.g. several samples.qsbm) are named by path
            name = p.stem if stems.count(p.stem) == 1 else str(p.with_suffix(""))
            out.append(load_bitstrings(p, meta=DatasetMeta(name=name, m=_infer_m(p.stem))))
        else:
            missing.append(ref)
    if missing:
        raise CliError(f"unresolved datasets: {', '.join(missing)}")
    names = [bm.meta.name for bm in out]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise CliError(f"duplicate dataset names: {', '.join(dupes)}")
    return out


def _dataset_entry(bm: BitMatrix) -> dict:
    return {
        "name": bm.meta.name,
        "n": bm.cols,
        "m": bm.meta.m,
        "M": bm.rows,
        "origin": bm.meta.origin,
        "p1": ones_probability(bm),
    }


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def cmd_analyze(args) -> int:
    analyses = [a.strip() for a in args.analyses.split(",") if a.strip()]
    unknown = sorted(set(analyses) - set(ANALYSES))
    if unknown:
        raise CliError(f"unknown analyses: {', '.join(unknown)}")
    reg = Registry.load(registry_path(args.registry))
    datasets = resolve_datasets(args.datasets, reg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    params = {"analyses": analyses, "gamma": args.gamma, "k": args.k,
              "nist_limit": args.nist_limit, "peak": args.peak,
              "single_slice": args.single_slice, "nist_substreams": args.nist_substreams}
    entries = []
    nist_rows = []
    for bm in datasets:
        name = bm.meta.name
        entry = _dataset_entry(bm)
        entry["column_means"] = column_means(bm).tolist()
        try:
            if "heatmap" in analyses:
                hm = heatmap(bm, args.single_slice)
                stem = out / f"heatmap_{_safe(name)}"
                plots.heatmap_svg(hm, stem.with_suffix(".svg"), name)
                plots.heatmap_csv(hm, stem.with_suffix(".csv"))
                entry["heatmap"] = {
                    "blocks_used": hm.blocks_used, "single_slice": hm.single_slice,
                    "cell_sigma": hm.cell_sigma(),
                    "max_abs_deviation": float(np.abs(hm.grid - hm.p1).max()),
                    "color_scale": "linear grayscale clipped to p1 +/- 3 sigma_cell",
                }
            if "spectrum" in analyses:
                res = spectral.empirical_spectrum(bm, args.gamma, args.k)
                stem = out / f"spectrum_{_safe(name)}"
                plots.spectrum_svg(res, stem.with_suffix(".svg"), name)
                stem.with_suffix(".tsv").write_text(res.to_table())
                summary = res.summary()
                summary["peak_estimator"] = args.peak
                summary["peak"] = res.mean_top if args.peak == "mean" else res.mode_top()
                summary["peak_distance"] = summary["peak"] - res.n / 4
                entry["spectrum"] = summary
            if "nist" in analyses:
                limit = args.nist_limit or None
                stream = nist.stream_from_matrix(bm, limit)
                report = nist.run_battery(stream, source=name)
                (out / f"nist_{_safe(name)}.txt").write_text(report.to_text())
                entry["nist"] = report.to_dict()
                nist_rows.append((name, bm.rows, entry["p1"], report.verdict))
                if args.nist_substreams:
                    multi = nist.substream_analysis(
                        nist.stream_from_matrix(bm), args.nist_substreams, source=name)
                    (out / f"nist_substreams_{_safe(name)}.txt").write_text(multi.to_text())
                    entry["nist_substreams"] = multi.to_dict()
        except ValueError as exc:
            raise CliError(f"{name}: {exc}") from exc
        entries.append(entry)

    doc = {"schema_version": SCHEMA_VERSION, "generator": f"qsaudit {__version__}",
           "parameters": params, "datasets": entries}

    if nist_rows:
        lines = [f"{'File name':<28}{'M':>12}  {'p1':<22}NIST random number tests"]
        lines += [f"{n:<28}{M:>12}  {p!r:<22}{v}" for n, M, p, v in nist_rows]
        (out / "p1_table.txt").write_text("\n".join(lines) + "\n")

    if "wasserstein" in analyses:
        if len(datasets) < 2:
            raise CliError("wasserstein analysis needs at least two datasets")
        samples = [transport.to_transport(bm) for bm in datasets]
        labels = [bm.meta.name for bm in datasets]
        matrix = transport.distance_matrix(samples)
        (out / "wasserstein.tsv").write_text(transport.format_distance_matrix(labels, matrix))
        cross_n = len({bm.cols for bm in datasets}) > 1
        if cross_n:
            log.warning("wasserstein: datasets have different qubit counts")
        wdoc = {"labels": labels, "matrix": matrix.tolist(), "cross_n": cross_n,
                "embedding": "integer value, qubit 0 most significant, scaled by 2^-n"}
        if len(datasets) >= 3:
            tri = transport.triangle_embed(matrix[0, 1], matrix[0, 2], matrix[1, 2], labels[:3])
            plots.triangle_svg(tri, out / "triangle.svg", "Wasserstein triangle")
            wdoc["triangle"] = {"labels": list(tri.labels),
                                "coordinates": tri.coordinates.tolist(),
                                "degenerate": tri.degenerate}
        doc["wasserstein"] = wdoc

    _write_json(out / "report.json", doc)
    log.info("report written to %s", out / "report.json")
    return 0


# --------------------------------------------------------------------------
# simulate


def _parse_readout(text: str | None) -> tuple[float, float]:
    if not text:
        return 0.0, 0.0
    try:
        p01, p10 = (float(v) for v in text.split(","))
    except ValueError:
        raise CliError(f"--noise-readout expects 'p01,p10', got {text!r}") from None
    return p01, p10


def _parse_grid(text: str) -> tuple[int, int]:
    match = re.fullmatch(r"(\d+)[xX](\d+)", text)
    if not match:
        raise CliError(f"--grid expects ROWSxCOLS, got {text!r}")
    return int(match.group(1)), int(match.group(2))


def cmd_simulate(args) -> int:
    if args.spec_file:
        spec = qsim.CircuitSpec.load(args.spec_file)
    else:
        rows, cols = _parse_grid(args.grid)
        spec = qsim.CircuitSpec.grid(rows, cols, args.cycles, seed=args.circuit_seed)
    if spec.n > qsim.MAX_SIM_QUBITS:
        raise qsim.CapacityError(
            f"{spec.n} qubits exceeds the simulator limit of {qsim.MAX_SIM_QUBITS}"
        )
    p01, p10 = _parse_readout(args.noise_readout)
    noise = qsim.NoiseSpec(p01, p10, args.noise_gate)

    circuit = qsim.build_random_circuit(spec)
    state = qsim.simulate(circuit)
    name = args.name or f"sim-n{spec.n}-m{spec.m}"
    origin = "classical-uniform" if args.uniform else "simulator"
    meta = DatasetMeta(name=name, n=spec.n, m=spec.m, origin=origin)
    if args.uniform:
        samples = qsim.sample_uniform(spec.n, args.M, args.seed, meta)
    else:
        samples = qsim.sample_circuit(circuit, args.M, args.seed, noise, args.trajectories, meta)
    xeb = qsim.xeb_fidelity(samples, state)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_bitstrings(samples, out / "samples.qsbm", "packed-binary")
    if args.text:
        save_bitstrings(samples, out / "samples.txt", "text-lines")
    spec.save(out / "circuit.json")
    params = {"M": args.M, "seed": args.seed, "uniform": args.uniform,
              "noise_readout": [p01, p10], "noise_gate": args.noise_gate,
              "trajectories": args.trajectories if args.noise_gate else 0,
              "circuit_seed": spec.seed}
    _write_json(out / "xeb.json", {"dataset": name, "parameters": params, **xeb.to_dict()})

    entry = _dataset_entry(samples)
    entry["column_means"] = column_means(samples).tolist()
    entry["xeb"] = {**xeb.to_dict(), "parameters": params}
    if samples.rows >= 2 * spec.n:
        entry["spectrum"] = spectral.empirical_spectrum(samples).summary()
    _write_json(out / "report.json", {
        "schema_version": SCHEMA_VERSION, "generator": f"qsaudit {__version__}",
        "parameters": params, "datasets": [entry],
    })
    print(f"{name}: F_XEB = {xeb.value:.5f} +/- {xeb.std_error:.5f} (M={xeb.M})")
    return 0


# --------------------------------------------------------------------------
# report


def merge_reports(docs: Sequence[dict]) -> dict:
    versions = {d.get("schema_version") for d in docs}
    if versions != {SCHEMA_VERSION}:
        raise CliError(f"schema version mismatch: found {sorted(map(str, versions))}, "
                       f"expected {SCHEMA_VERSION}")
    merged: dict[str, dict] = {}
    conflicts = []
    for doc in docs:
        for entry in doc.get("datasets", []):
            name = entry["name"]
            if name in merged and merged[name] != entry:
                conflicts.append(name)
            merged[name] = entry
    if conflicts:
        raise CliError(f"conflicting dataset names: {', '.join(sorted(set(conflicts)))}")

    def order(e):
        return (e.get("n") or 0, e.get("m") if e.get("m") is not None else -1, e["name"])

    out = {"schema_version": versions.pop(), "generator": f"qsaudit {__version__}",
           "datasets": sorted(merged.values(), key=order)}
    wass = [d["wasserstein"] for d in docs if "wasserstein" in d]
    if wass:
        out["wasserstein"] = wass
    return out


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def comparison_table(doc: dict, mode: str) -> str:
    key = "n" if mode == "by-n" else "m"
    rows = [e for e in doc["datasets"] if e.get(key) is not None]
    rows.sort(key=lambda e: (e[key], e["name"]))
    head = ["name", "n", "m", "M", "p1", "signed_distance", "nist_verdict", "xeb"]
    lines = ["\t".join(head)]
    for e in rows:
        lines.append("\t".join(_fmt(v) for v in (
            e["name"], e.get("n"), e.get("m"), e.get("M"), e.get("p1"),
            e.get("spectrum", {}).get("signed_distance"),
            e.get("nist", {}).get("verdict"),
            e.get("xeb", {}).get("value"),
        )))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    docs = [json.loads(Path(p).read_text()) for p in args.reports]
    merged = merge_reports(docs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "merged.json", merged)
    for mode in ("by-n", "by-m"):
        (out / f"distance_{mode.replace('-', '_')}.tsv").write_text(comparison_table(merged, mode))
    for mode, xlabel in (("by-n", "qubits n"), ("by-m", "cycles m")):
        key = mode[-1]
        rows = [e for e in merged["datasets"]
                if e.get(key) is not None and "spectrum" in e]
        if rows:
            rows.sort(key=lambda e: (e[key], e["name"]))
            plots.distance_curve_svg(
                [e[key] for e in rows], [e["spectrum"]["signed_distance"] for e in rows],
                out / f"distance_{key}.svg", xlabel, [e["name"] for e in rows])
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsa", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qsaudit {__version__}")
    parser.add_argument("--registry", help="registry file (default: $QSA_REGISTRY or ./qsa_registry.json)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse bit-string files, cache them and register them")
    p.add_argument("paths", nargs="+")
    p.add_argument("--name", help="registry name (single file only; default: file stem)")
    p.add_argument("--m", type=int, help="circuit cycle count (default: parsed from file name)")
    p.add_argument("--origin", choices=("quantum-device", "simulator", "classical-uniform"))
    p.add_argument("--format", choices=("auto", "text-lines", "packed-binary"), default="auto")
    p.add_argument("--cache-dir")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="run analyses and emit report, tables and SVG plots")
    p.add_argument("datasets", nargs="+", help="registry names or file paths")
    p.add_argument("--analyses", default=",".join(ANALYSES))
    p.add_argument("--out", default="qsa_out")
    p.add_argument("--gamma", type=float, default=spectral.DEFAULT_GAMMA)
    p.add_argument("--k", type=int, help="rows per spectral block (overrides --gamma)")
    p.add_argument("--nist-limit", type=int, default=nist.RECOMMENDED_LENGTH,
                   help="bits fed to the NIST battery; 0 uses the full stream")
    p.add_argument("--nist-substreams", type=int, default=0,
                   help="also split the full stream into N substreams for proportion/uniformity analysis")
    p.add_argument("--single-slice", type=int, help="heatmap of one n x n slice instead of the average")
    p.add_argument("--peak", choices=("mean", "mode"), default="mean",
                   help="outlier-peak estimator reported as peak_distance")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="sample a random circuit and score it with XEB")
    p.add_argument("spec_file", nargs="?", help="circuit spec JSON (default: build a grid circuit)")
    p.add_argument("--grid", default="3x4")
    p.add_argument("--cycles", type=int, default=14)
    p.add_argument("--circuit-seed", type=int, default=0)
    p.add_argument("-M", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--noise-readout", help="p01,p10 readout flip probabilities")
    p.add_argument("--noise-gate", type=float, default=0.0, help="per-gate Pauli error rate")
    p.add_argument("--trajectories", type=int, default=50)
    p.add_argument("--uniform", action="store_true", help="sample uniformly instead of from the circuit")
    p.add_argument("--name")
    p.add_argument("--text", action="store_true", help="also write samples as text lines")
    p.add_argument("--out", default="qsa_sim")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="merge report.json files into comparison tables")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", default="qsa_report")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, qsim.CapacityError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
