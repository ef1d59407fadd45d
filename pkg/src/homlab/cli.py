"""Command line entry point: ``lab <kind> --config FILE`` and ``lab summary --dir DIR``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import platform
import sys
import time
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, parallel
from . import config as C
from . import experiments

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
PARTIAL = ".partial"

log = logging.getLogger("homlab")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _csv(rows: list[dict]) -> str:
    extra = []
    for r in rows:
        extra += [k for k in r if k not in ("index", "value", "stderr") and k not in extra]
    cols = ["index", "value", "stderr"] + extra
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(float(r[c])) if isinstance(r.get(c), (float, np.floating)) else r.get(c, "")
                    for c in cols])
    return buf.getvalue()


def _versions() -> dict:
    import numba
    import scipy
    return {"homlab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def run_experiment(kind: str, cfg: dict, out: Path, threads: int) -> int:
    """Execute one experiment and persist its artifacts; returns the exit status."""
    out.mkdir(parents=True, exist_ok=True)
    for old in ("manifest.json", "report.json"):
        (out / old).unlink(missing_ok=True)
    merged = C.merge(experiments.defaults(kind), cfg)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    manifest = {"kind": kind, "config_sha256": C.digest(merged), "versions": _versions(),
                "threads": threads, "started": started, "seed": merged.get("seed", 0)}
    files = []

    def stage(name, text):
        (out / (name + PARTIAL)).write_text(text)
        files.append(name)

    try:
        rep = experiments.run(kind, merged)
    except C.ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - every failure is reported in the manifest
        traceback.print_exc()
        manifest.update({"status": "ERROR", "passed": False, "error": f"{type(exc).__name__}: {exc}",
                         "wall_time_s": time.perf_counter() - t0,
                         "finished": datetime.now(timezone.utc).isoformat(), "files": []})
        (out / "manifest.json").write_text(_dump(manifest))
        return EXIT_ERROR

    report = {"kind": kind, "config": merged, "quantities": rep.quantities, "checks": rep.checks,
              "passed": rep.passed, "tables": rep.tables}
    stage("report.json", _dump(report))
    for name, rows in sorted(rep.tables.items()):
        if rows and isinstance(rows, list) and isinstance(rows[0], dict):
            stage(f"{name}.csv", _csv(rows))
    key = experiments.REGISTRY[kind].key
    manifest.update({"status": "PASS" if rep.passed else "FAIL", "passed": rep.passed,
                     "key": {"name": key, "value": rep.quantities.get(key)},
                     "wall_time_s": time.perf_counter() - t0,
                     "finished": datetime.now(timezone.utc).isoformat(), "files": files})
    (out / ("manifest.json" + PARTIAL)).write_text(_dump(manifest))
    for name in files:
        os.replace(out / (name + PARTIAL), out / name)
    os.replace(out / ("manifest.json" + PARTIAL), out / "manifest.json")
    for c in rep.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  value={c['value']}  target={c['target']}")
    print(f"{kind}: {'PASS' if rep.passed else 'FAIL'}  ({out})")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _run_dirs(root: Path):
    cands = [root] + sorted(p for p in root.rglob("*") if p.is_dir())
    for d in cands:
        if (d / "manifest.json").exists() or (d / "report.json").exists() or any(d.glob("*" + PARTIAL)):
            yield d


def report_summary(root: Path) -> tuple[str, int]:
    """One line per run directory under ``root`` and the aggregate status."""
    lines, statuses = [], []
    for d in _run_dirs(root):
        name = str(d.relative_to(root)) if d != root else "."
        try:
            m = json.loads((d / "manifest.json").read_text())
            status = m["status"]
            key = m.get("key") or {}
            val = key.get("value")
            fit = f"{key.get('name')}={val:.6g}" if isinstance(val, (int, float)) else f"{key.get('name')}={val}"
        except (OSError, ValueError, KeyError, TypeError):
            status, fit = "CORRUPT", "-"
            m = {"kind": "?"}
        statuses.append(status)
        lines.append(f"{name:<30} {m.get('kind', '?'):<12} {fit:<32} {status}")
    header = f"{'run':<30} {'kind':<12} {'key fit':<32} status"
    text = "\n".join([header] + lines)
    if any(s in ("CORRUPT", "ERROR") for s in statuses):
        code = EXIT_ERROR
    elif any(s == "FAIL" for s in statuses):
        code = EXIT_FAIL
    else:
        code = EXIT_PASS
    return text, code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lab", description="Run numerical experiments.")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in experiments.REGISTRY:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", type=Path, help="TOML file merged over the defaults")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default LAB_THREADS or 1)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
    s = sub.add_parser("summary", help="summarize run directories")
    s.add_argument("--dir", type=Path, required=True)
    d = sub.add_parser("defaults", help="print the default config of an experiment")
    d.add_argument("name", choices=sorted(experiments.REGISTRY))
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.kind == "summary":
        if not args.dir.is_dir():
            print(f"no such directory {args.dir}", file=sys.stderr)
            return EXIT_ERROR
        text, code = report_summary(args.dir)
        print(text)
        return code
    if args.kind == "defaults":
        print(C.dumps_toml(experiments.defaults(args.name)), end="")
        return EXIT_PASS

    try:
        threads = parallel.set_threads(args.threads)
    except ValueError as exc:
        print(f"config error at threads: {exc}", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = C.load(args.config) if args.config else {}
    except C.ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_ERROR
    file_kind = cfg.pop("kind", args.kind)
    if file_kind != args.kind:
        print(f"config error at kind: file says {file_kind!r}, command says {args.kind!r}", file=sys.stderr)
        return EXIT_ERROR
    if args.seed is not None:
        cfg["seed"] = args.seed
    out = args.out or Path(cfg.pop("out", f"lab-out/{args.kind}"))
    cfg.pop("out", None)
    return run_experiment(args.kind, cfg, out, threads)


if __name__ == "__main__":
    sys.exit(main())
