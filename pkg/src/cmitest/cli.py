"""Command-line entry point for batch testing, simulation studies, and reports.

Commands
--------
* ``test``      run the test on three CSV matrices (X, Y, Z)
* ``simulate``  run a Monte-Carlo study on a benchmark scenario
* ``report``    merge study records into a size/size-adjusted-power table
* ``rerun``     repeat a previous run exactly from its manifest

Every run writes a ``manifest.json`` holding the fully resolved
configuration, input digests, and artifact names; ``rerun`` reproduces the
record files bit-for-bit from it. Machine-readable outputs are JSON with a
``schema`` field (``cmitest/test-result/v1``, ``cmitest/study/v1``); tables
are plain CSV/text. Exit codes: 0 success, 2 input or configuration error,
3 internal numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .bootstrap import BootstrapConfig, MULTIPLIER_FAMILIES
from .dataio import CsvFormatError, file_digest, load_dataset_csv
from .generator import GeneratorTrainConfig
from .harness import StudySpec, run_study, size_adjusted_power, study_record
from .kernels import FAMILIES
from .neuralnet import NumericalError
from .pipeline import TestConfig, run_cmi_test
from .regressor import RegressorTrainConfig
from .simdata import EXAMPLES, SCENARIOS

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

MANIFEST_SCHEMA = "cmitest/manifest/v1"
RESULT_SCHEMA = "cmitest/test-result/v1"


# ---------------------------------------------------------------- config


def test_config_to_dict(cfg: TestConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def _build_config(cls, d: dict, tuple_keys=(), name: str = "config"):
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ValueError(f"unknown {name} keys: {', '.join(unknown)}")
    kw = dict(d)
    for key in tuple_keys:
        if kw.get(key) is not None:
            kw[key] = tuple(kw[key])
    return cls(**kw)


def test_config_from_dict(d: dict) -> TestConfig:
    d = dict(d)
    sub = {}
    if "bootstrap" in d:
        sub["bootstrap"] = _build_config(BootstrapConfig, d.pop("bootstrap"), name="bootstrap")
    if "generator" in d:
        sub["generator"] = _build_config(
            GeneratorTrainConfig, d.pop("generator"),
            ("hidden_dims", "mmd_bandwidth_multipliers"), "generator")
    if "regressor" in d:
        sub["regressor"] = _build_config(
            RegressorTrainConfig, d.pop("regressor"), ("hidden_dims",), "regressor")
    return _build_config(TestConfig, {**d, **sub}, name="test")


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CsvFormatError(f"{p}: no such config file")
    try:
        loaded = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{p}: invalid JSON config: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ValueError(f"{p}: config must be a JSON object")
    return loaded


def _apply_flag_overrides(cfg_dict: dict, ns: argparse.Namespace) -> dict:
    out = dict(cfg_dict)
    if ns.level is not None:
        out["level"] = ns.level
    if ns.seed is not None:
        out["seed"] = ns.seed
    if ns.mc_samples is not None:
        out["mc_samples"] = ns.mc_samples
    if ns.kernel is not None:
        out["kernel_family"] = ns.kernel
    if ns.bootstrap is not None:
        boot = dict(out.get("bootstrap", {}))
        boot["replicates"] = ns.bootstrap
        out["bootstrap"] = boot
    if getattr(ns, "multiplier", None) is not None:
        boot = dict(out.get("bootstrap", {}))
        boot["multiplier"] = ns.multiplier
        out["bootstrap"] = boot
    return out


# ---------------------------------------------------------------- output


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_manifest(out: Path, command: str, resolved: dict, inputs: dict, artifacts: list[str]) -> None:
    _write_json(out / "manifest.json", {
        "schema": MANIFEST_SCHEMA,
        "tool_version": __version__,
        "command": command,
        "resolved": resolved,
        "inputs": inputs,
        "artifacts": artifacts,
    })


def _result_record(result, input_digests: dict, cfg_dict: dict) -> dict:
    return {
        "schema": RESULT_SCHEMA,
        "statistic": float(result.statistic),
        "p_value": float(result.p_value),
        "level": float(result.level),
        "reject": bool(result.reject),
        "boot": [float(v) for v in result.boot],
        "diagnostics": json.loads(json.dumps(result.diagnostics, default=_json_default)),
        "config": cfg_dict,
        "input_digests": input_digests,
    }


def _json_default(obj):
    import numpy as np

    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


# ---------------------------------------------------------------- test


def _execute_test(x_path: str, y_path: str, z_path: str, cfg_dict: dict, out: Path,
                  expect_digests: dict | None = None) -> int:
    data = load_dataset_csv(x_path, y_path, z_path)
    digests = {role: file_digest(path) for role, path in
               (("x", x_path), ("y", y_path), ("z", z_path))}
    if expect_digests is not None and digests != expect_digests:
        raise CsvFormatError("input files changed since the manifest was written")
    cfg = test_config_from_dict(cfg_dict)
    result = run_cmi_test(data, cfg)

    out.mkdir(parents=True, exist_ok=True)
    record = _result_record(result, digests, cfg_dict)
    _write_json(out / "result.json", record)
    decision = "reject H0" if result.reject else "fail to reject H0"
    summary = "\n".join([
        "conditional mean independence test",
        f"n={data.n} d_x={data.x.shape[1]} d_y={data.y.shape[1]} d_z={data.z.shape[1]}",
        f"kernel: {cfg.kernel_family}, M={cfg.mc_samples}, B={cfg.bootstrap.replicates}",
        f"statistic: {result.statistic:.6g}",
        f"p-value:   {result.p_value:.4f}",
        f"decision at level {cfg.level:g}: {decision}",
        "",
    ])
    (out / "result.txt").write_text(summary)
    resolved = {"x": str(x_path), "y": str(y_path), "z": str(z_path), "config": cfg_dict}
    _write_manifest(out, "test", resolved, digests, ["result.json", "result.txt"])
    print(summary, end="")
    return EXIT_OK


def cmd_test(ns: argparse.Namespace) -> int:
    cfg_dict = test_config_to_dict(test_config_from_dict(
        _apply_flag_overrides(_load_config_file(ns.config), ns)))
    return _execute_test(ns.x, ns.y, ns.z, cfg_dict, Path(ns.out))


# ---------------------------------------------------------------- simulate


def _execute_simulate(spec_dict: dict, out: Path) -> int:
    cfg = test_config_from_dict(spec_dict["config"])
    spec = StudySpec(
        example=spec_dict["example"],
        scenario=spec_dict["scenario"],
        n=int(spec_dict["n"]),
        replications=int(spec_dict["replications"]),
        variant=spec_dict["variant"],
        level=float(spec_dict["level"]),
        seed=int(spec_dict["seed"]),
        contaminate_exponent=spec_dict.get("contaminate_exponent"),
        test_config=cfg,
    )
    report = run_study(spec)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "study.json", study_record(report))
    lines = [
        f"study: example={spec.example} scenario={spec.scenario} n={spec.n} variant={spec.variant}",
        f"replications: {spec.replications} (failed: {report.n_failed})",
        f"rejection rate: {100 * report.rejection_rate:.1f}% "
        f"(binomial se {100 * report.binomial_se:.1f}%)",
        f"level: {spec.level:g}   seed: {spec.seed}",
        f"elapsed: {report.elapsed_seconds:.1f}s",
        "",
    ]
    (out / "study.txt").write_text("\n".join(lines))
    _write_manifest(out, "simulate", spec_dict, {}, ["study.json", "study.txt"])
    print("\n".join(lines), end="")
    return EXIT_OK


def cmd_simulate(ns: argparse.Namespace) -> int:
    cfg_dict = test_config_to_dict(test_config_from_dict(
        _apply_flag_overrides(_load_config_file(ns.config), ns)))
    spec_dict = {
        "example": ns.example,
        "scenario": ns.scenario,
        "n": ns.n,
        "replications": ns.reps,
        "variant": ns.variant,
        "level": cfg_dict["level"],
        "seed": cfg_dict["seed"],
        "contaminate_exponent": ns.contaminate_exponent,
        "config": cfg_dict,
    }
    return _execute_simulate(spec_dict, Path(ns.out))


# ---------------------------------------------------------------- report


def _load_study_records(paths: list[str]) -> list[dict]:
    seen: dict[str, dict] = {}
    for path in paths:
        p = Path(path)
        if not p.exists():
            raise CsvFormatError(f"{p}: no such study record")
        digest = file_digest(p)
        if digest in seen:
            continue  # duplicate input, keep one copy
        rec = json.loads(p.read_text())
        if rec.get("schema") != "cmitest/study/v1":
            raise ValueError(f"{p}: not a study record (schema {rec.get('schema')!r})")
        seen[digest] = rec
    records = list(seen.values())
    keys = [json.dumps(r["spec"], sort_keys=True) for r in records]
    if len(set(keys)) != len(keys):
        raise ValueError("conflicting study records: identical specs with different contents")
    return records


def _stats_of(rec: dict) -> list[float]:
    return [row["statistic"] for row in rec["replications"] if row["error"] is None]


def _execute_report(paths: list[str], out: Path) -> int:
    records = _load_study_records(paths)
    nulls = {}
    for rec in records:
        s = rec["spec"]
        if s["scenario"] == "null":
            key = (s["example"], s["n"], s["variant"])
            if key in nulls and nulls[key]["test_config"] != rec["test_config"]:
                raise ValueError(f"incompatible null studies for {key}: configurations differ")
            nulls.setdefault(key, rec)

    rows = []
    for rec in records:
        s = rec["spec"]
        adjusted = None
        if s["scenario"] != "null":
            null_rec = nulls.get((s["example"], s["n"], s["variant"]))
            if null_rec is not None:
                if null_rec["test_config"] != rec["test_config"] or \
                        null_rec["spec"]["level"] != s["level"]:
                    raise ValueError(
                        f"incompatible studies for example={s['example']} n={s['n']} "
                        f"variant={s['variant']}: configurations differ"
                    )
                adjusted = size_adjusted_power(_stats_of(null_rec), _stats_of(rec), s["level"])
        rows.append({
            "example": s["example"],
            "scenario": s["scenario"],
            "n": s["n"],
            "variant": s["variant"],
            "replications": s["replications"],
            "rejection_rate": rec["rejection_rate"],
            "adjusted_power": adjusted,
        })
    scenario_order = {"null": 0, "sparse": 1, "dense": 2}
    rows.sort(key=lambda r: (r["example"], scenario_order[r["scenario"]], r["n"], r["variant"]))

    out.mkdir(parents=True, exist_ok=True)
    header = ["example", "scenario", "n", "variant", "replications",
              "rejection_rate", "adjusted_power"]
    csv_lines = [",".join(header)]
    for r in rows:
        adj = "" if r["adjusted_power"] is None else f"{r['adjusted_power']:.17g}"
        csv_lines.append(
            f"{r['example']},{r['scenario']},{r['n']},{r['variant']},"
            f"{r['replications']},{r['rejection_rate']:.17g},{adj}"
        )
    (out / "table.csv").write_text("\n".join(csv_lines) + "\n")

    width = 12
    text_lines = [" ".join(h.ljust(width) for h in header)]
    for r in rows:
        adj = "absent" if r["adjusted_power"] is None else f"{100 * r['adjusted_power']:.1f}%"
        if r["scenario"] == "null":
            adj = "-"
        text_lines.append(" ".join(str(v).ljust(width) for v in [
            r["example"], r["scenario"], r["n"], r["variant"], r["replications"],
            f"{100 * r['rejection_rate']:.1f}%", adj,
        ]))
    (out / "table.txt").write_text("\n".join(text_lines) + "\n")

    plot_lines = ["example,scenario,variant,n,rejection_rate"]
    for r in rows:
        plot_lines.append(
            f"{r['example']},{r['scenario']},{r['variant']},{r['n']},{r['rejection_rate']:.17g}"
        )
    (out / "plot.csv").write_text("\n".join(plot_lines) + "\n")

    digests = {str(p): file_digest(p) for p in paths if Path(p).exists()}
    _write_manifest(out, "report", {"records": sorted(digests.values())}, digests,
                    ["table.csv", "table.txt", "plot.csv"])
    print("\n".join(text_lines))
    return EXIT_OK


def cmd_report(ns: argparse.Namespace) -> int:
    return _execute_report(ns.records, Path(ns.out))


# ---------------------------------------------------------------- rerun


def cmd_rerun(ns: argparse.Namespace) -> int:
    p = Path(ns.manifest)
    if not p.exists():
        raise CsvFormatError(f"{p}: no such manifest")
    manifest = json.loads(p.read_text())
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"{p}: not a run manifest (schema {manifest.get('schema')!r})")
    command = manifest["command"]
    resolved = manifest["resolved"]
    out = Path(ns.out)
    if command == "test":
        return _execute_test(resolved["x"], resolved["y"], resolved["z"],
                             resolved["config"], out, expect_digests=manifest["inputs"])
    if command == "simulate":
        return _execute_simulate(resolved, out)
    if command == "report":
        return _execute_report(list(manifest["inputs"].keys()), out)
    raise ValueError(f"{p}: cannot rerun command {command!r}")


# ---------------------------------------------------------------- parser


def _add_common_config_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="JSON file with test-configuration overrides")
    sp.add_argument("--level", type=float, default=None, help="significance level (default 0.05)")
    sp.add_argument("--bootstrap", type=int, default=None, metavar="B",
                    help="bootstrap replicates (default 1000)")
    sp.add_argument("--mc-samples", type=int, default=None, metavar="M",
                    help="conditional draws per observation (default 64)")
    sp.add_argument("--kernel", choices=list(FAMILIES), default=None,
                    help="kernel family (default laplacian)")
    sp.add_argument("--multiplier", choices=list(MULTIPLIER_FAMILIES), default=None,
                    help="bootstrap multiplier family (default rademacher)")
    sp.add_argument("--seed", type=int, default=None, help="master seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmi-test",
        description="Conditional mean independence testing with generative neural networks.",
    )
    parser.add_argument("--version", action="version", version=f"cmi-test {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("test", help="run the test on three CSV matrices")
    sp.add_argument("--x", required=True, help="CSV with the X matrix")
    sp.add_argument("--y", required=True, help="CSV with the Y matrix")
    sp.add_argument("--z", required=True, help="CSV with the Z matrix")
    sp.add_argument("--out", default=".", help="output directory (default: cwd)")
    _add_common_config_flags(sp)
    sp.set_defaults(func=cmd_test)

    sp = sub.add_parser("simulate", help="run a Monte-Carlo study on a benchmark scenario")
    sp.add_argument("--example", required=True, choices=list(EXAMPLES))
    sp.add_argument("--scenario", required=True, choices=list(SCENARIOS))
    sp.add_argument("--n", required=True, type=int, help="sample size per replication")
    sp.add_argument("--reps", required=True, type=int, help="number of replications")
    sp.add_argument("--variant", default="estimated", choices=["estimated", "oracle"])
    sp.add_argument("--contaminate-exponent", type=float, default=None,
                    help="oracle-nuisance contamination rate exponent a (shift size n^-a)")
    sp.add_argument("--out", default=".", help="output directory (default: cwd)")
    _add_common_config_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("report", help="merge study records into a results table")
    sp.add_argument("records", nargs="+", help="study.json files from simulate runs")
    sp.add_argument("--out", default=".", help="output directory (default: cwd)")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("rerun", help="repeat a previous run exactly from its manifest")
    sp.add_argument("manifest", help="manifest.json of the run to repeat")
    sp.add_argument("--out", required=True, help="output directory for the repeated run")
    sp.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.func(ns)
    except (CsvFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
