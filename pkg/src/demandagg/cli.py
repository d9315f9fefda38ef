"""Command-line pipeline: ``synth``, ``evaluate`` and ``simulate``.

Every command reads one JSON run config (``--config``).  Relative paths in
the config resolve against the config file's directory.  Exit status is 0 on
success, 2 for config errors and 3 for data errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .data import (Box, DataError, EventDataset, FilterRules, ParseConfig, filter_events, monthly_counts,
                   month_range, read_events_csv, split_by_date, write_events, write_rejects)
from .demand import extreme_month_counts, fit_median, fit_stochastic, predict_static, simulate
from .geo import LonFrame
from .metrics import error_report
from .partition import PACIFIC_REGION, build_from_spec, partition_to_dict
from .synth import SynthSpec, default_spec, generate

log = logging.getLogger("demandagg")

EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(ValueError):
    pass


def default_config() -> dict:
    """Run config reproducing the shipped Pacific experiment."""
    return {
        "synth": "default",
        "frame_offset_deg": 0.0,
        "filter": {"exclude_categories": ["medical_consultation"], "region": "pacific"},
        "split": {"cutoff": "2016-01"},
        "partitions": [
            {"name": "A", "kind": "grid", "preset": "grid1"},
            {"name": "B", "kind": "grid", "preset": "grid2"},
            {"name": "C", "kind": "grid", "preset": "grid8"},
            {"name": "D", "kind": "grid", "preset": "grid15"},
            {"name": "E", "kind": "grid", "preset": "grid43"},
            {"name": "F", "kind": "grid", "preset": "grid91"},
            {"name": "ZDM", "kind": "zdm", "k": "rule_of_thumb", "seed": 11},
            {"name": "SZDM", "kind": "szdm", "per_group_k": "elbow", "k_max": 8, "seed": 12},
        ],
        "demand": {"stochastic": ["C", "D", "SZDM"]},
        "simulation": {"months": 24, "replications": 10000, "master_seed": 2016, "lower": 30, "upper": 60},
        "output_dir": "out",
    }


# ---------------------------------------------------------------------------
# config handling


class RunConfig:
    def __init__(self, raw: dict, base_dir: Path, out_override: str | None = None, seed_override: int | None = None):
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        self.raw = raw
        self.base_dir = base_dir
        self.frame = LonFrame(float(raw.get("frame_offset_deg", 0.0)))
        out = out_override if out_override is not None else raw.get("output_dir", "out")
        self.output_dir = self._path(out)
        sim = dict(raw.get("simulation", {}))
        if seed_override is not None:
            sim["master_seed"] = seed_override
        self.simulation = sim
        names = [p.get("name") for p in raw.get("partitions", [])]
        if any(not isinstance(n, str) or not n for n in names):
            raise ConfigError("every partition spec needs a non-empty string name")
        if len(set(names)) != len(names):
            raise ConfigError("partition names must be unique")
        for spec in raw.get("partitions", []):
            if spec.get("kind") in ("zdm", "szdm") and "seed" not in spec:
                raise ConfigError(f"partition {spec['name']!r} needs an explicit seed")
        self.partitions = {p["name"]: p for p in raw.get("partitions", [])}

    def _path(self, p: str) -> Path:
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path

    def digest(self) -> str:
        effective = dict(self.raw, simulation=self.simulation)
        effective.pop("output_dir", None)
        return hashlib.sha256(json.dumps(effective, sort_keys=True).encode()).hexdigest()

    def synth_spec(self) -> SynthSpec:
        s = self.raw.get("synth")
        if s is None:
            raise ConfigError("config has no 'synth' section")
        if s == "default":
            return default_spec()
        if isinstance(s, dict) and s.get("preset") == "default":
            return default_spec(int(s.get("seed", default_spec().seed)))
        try:
            return SynthSpec.from_dict(s)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad synth spec: {exc}") from exc

    def filter_rules(self) -> FilterRules | None:
        f = self.raw.get("filter")
        if not f:
            return None
        region = f.get("region")
        if region == "pacific":
            region = PACIFIC_REGION
        elif region is not None:
            region = tuple(Box.from_seq(b) for b in region)
        return FilterRules(tuple(f.get("exclude_categories", [])), region, self.frame)


def load_config(path: str | Path, out: str | None = None, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return RunConfig(raw, path.parent, out, seed)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return "" if x is None else repr(float(x))


def _update_manifest(cfg: RunConfig, command: str, inputs: list[dict], seeds: dict, outputs: list[Path]) -> None:
    path = cfg.output_dir / "manifest.json"
    manifest = json.loads(path.read_text()) if path.exists() else {}
    manifest[command] = {
        "config_sha256": cfg.digest(),
        "inputs": inputs,
        "seeds": seeds,
        "outputs": {str(p.relative_to(cfg.output_dir)): _sha256_file(p) for p in sorted(outputs)},
    }
    _write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _seeds(cfg: RunConfig) -> dict:
    seeds = {name: spec["seed"] for name, spec in cfg.partitions.items() if "seed" in spec}
    if "master_seed" in cfg.simulation:
        seeds["simulation"] = cfg.simulation["master_seed"]
    return seeds


# ---------------------------------------------------------------------------
# pipeline steps


def load_dataset(cfg: RunConfig) -> tuple[EventDataset, list[dict]]:
    """Read (or synthesise) the configured dataset and apply the filter rules."""
    if "dataset" in cfg.raw:
        path = cfg._path(cfg.raw["dataset"])
        parse = cfg.raw.get("parse", {})
        pc = ParseConfig(float(parse.get("max_reject_fraction", 0.10)),
                         tuple(parse["time_span"]) if "time_span" in parse else None, str(cfg.raw["dataset"]))
        try:
            ds, rejects = read_events_csv(path, pc)
        except OSError as exc:
            raise DataError(f"cannot read dataset {path}: {exc}") from exc
        if rejects:
            buf = io.StringIO()
            write_rejects(rejects, buf)
            _write(cfg.output_dir / "rejects.csv", buf.getvalue())
        inputs = [{"path": str(cfg.raw["dataset"]), "sha256": _sha256_file(path)}]
    else:
        ds = generate(cfg.synth_spec())
        inputs = [{"synth_seed": cfg.synth_spec().seed}]
    rules = cfg.filter_rules()
    if rules is not None:
        ds = filter_events(ds, rules)
    return ds, inputs


def _split(cfg: RunConfig, ds: EventDataset) -> tuple[EventDataset, EventDataset]:
    split = cfg.raw.get("split")
    if not split or "cutoff" not in split:
        raise ConfigError("config needs split.cutoff")
    try:
        return split_by_date(ds, split["cutoff"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build(cfg: RunConfig, name: str, train: EventDataset):
    if name not in cfg.partitions:
        raise ConfigError(f"unknown partition {name!r}; available: {', '.join(cfg.partitions)}")
    try:
        return build_from_spec(cfg.partitions[name], train, cfg.frame)
    except KeyError as exc:
        raise ConfigError(f"partition {name!r}: missing key {exc}") from exc


def cmd_synth(cfg: RunConfig) -> list[Path]:
    """Generate the configured synthetic dataset and write it as CSV."""
    spec = cfg.synth_spec()
    ds = generate(spec)
    name = cfg.raw.get("synth_output", "events.csv")
    csv_path = cfg.output_dir / name
    buf = io.StringIO()
    write_events(ds, buf)
    _write(csv_path, buf.getvalue())
    prov_path = csv_path.with_suffix(".provenance.json")
    prov = {"generator": "demandagg.synth", "spec": spec.to_dict(), "events": len(ds)}
    _write(prov_path, json.dumps(prov, indent=2, sort_keys=True) + "\n")
    outputs = [csv_path, prov_path]
    _update_manifest(cfg, "synth", [], {"synth": spec.seed}, outputs)
    return outputs


def cmd_evaluate(cfg: RunConfig) -> list[Path]:
    """Distance and volume errors for every configured aggregation."""
    if not cfg.partitions:
        raise ConfigError("config lists no partitions")
    ds, inputs = load_dataset(cfg)
    train, test = _split(cfg, ds)
    out = cfg.output_dir
    outputs = []
    rows, reports = [], []
    for name, spec in cfg.partitions.items():
        log.info("evaluating %s", name)
        p = _build(cfg, name, train)
        preds = predict_static(fit_median(monthly_counts(train, p)))
        actual = monthly_counts(test, p)
        report = error_report(name, p, test, preds, actual)
        reports.append(report)
        rows.append((name, p.kind, len(p), _num(report.d_e), _num(report.d_we), _num(report.v_e),
                     report.out_of_region))
        path = out / "errors" / f"{name}.json"
        _write(path, report.to_json())
        buf = io.StringIO()
        report.write_csv(buf)
        _write(path.with_suffix(".csv"), buf.getvalue())
        ppath = out / "partitions" / f"{name}.json"
        _write(ppath, json.dumps(partition_to_dict(p), indent=2, sort_keys=True) + "\n")
        outputs += [path, path.with_suffix(".csv"), ppath]

    header = ("aggregation", "kind", "zones", "d_e", "d_we", "v_e", "out_of_region")
    _write(out / "comparison.csv", _csv_text(header, rows))
    _write(out / "comparison.json", json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n")
    months = reports[0].months
    signed_rows = [(m, *(_num(r.signed_monthly[i]) for r in reports)) for i, m in enumerate(months)]
    _write(out / "signed_series.csv", _csv_text(("month", *(r.aggregation for r in reports)), signed_rows))
    outputs += [out / "comparison.csv", out / "comparison.json", out / "signed_series.csv"]
    _update_manifest(cfg, "evaluate", inputs, _seeds(cfg), outputs)
    return outputs


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    """Monte Carlo simulation of the stochastic aggregations plus extreme-month counts."""
    names = cfg.raw.get("demand", {}).get("stochastic", [])
    if not names:
        raise ConfigError("no stochastic aggregations configured (demand.stochastic is empty)")
    sim = cfg.simulation
    try:
        replications = int(sim["replications"])
        master_seed = int(sim["master_seed"])
    except KeyError as exc:
        raise ConfigError(f"simulation section lacks {exc}") from exc
    lower, upper = int(sim.get("lower", 30)), int(sim.get("upper", 60))
    n_jobs = int(sim.get("n_jobs", 1))

    ds, inputs = load_dataset(cfg)
    train, test = _split(cfg, ds)
    test_months = [str(m) for m in month_range(*test.time_span)]
    months = int(sim.get("months", len(test_months)))
    out = cfg.output_dir
    sim_rows, extreme_rows, series_rows = [], [], []
    outputs = []
    for name in names:
        log.info("simulating %s", name)
        p = _build(cfg, name, train)
        model = fit_stochastic(monthly_counts(train, p))
        mpath = out / "models" / f"{name}.json"
        _write(mpath, model.to_json())
        outputs.append(mpath)
        result = simulate(model, months, replications, master_seed, n_jobs)
        for r, row in enumerate(result.monthly_totals):
            sim_rows.extend((name, r, m + 1, int(v)) for m, v in enumerate(row))
        below, above = extreme_month_counts(result, lower, upper)
        extreme_rows.append((name, len(p), below, above, lower, upper, replications * months))
        actual = monthly_counts(test, p).totals()
        q05, q95 = np.quantile(result.monthly_totals, [0.05, 0.95], axis=0)
        mean = result.monthly_totals.mean(axis=0)
        for m in range(months):
            label = test_months[m] if m < len(test_months) else str(m + 1)
            act = int(actual[m]) if m < len(actual) else ""
            series_rows.append((name, label, act, int(result.monthly_totals[0, m]), _num(mean[m]),
                                _num(q05[m]), _num(q95[m])))

    _write(out / "simulation.csv", _csv_text(("aggregation", "replication", "month", "total"), sim_rows))
    _write(out / "extreme_months.csv",
           _csv_text(("aggregation", "zones", "below", "above", "lower", "upper", "months_simulated"), extreme_rows))
    _write(out / "simulated_vs_actual.csv",
           _csv_text(("aggregation", "month", "actual", "simulated", "sim_mean", "sim_p05", "sim_p95"), series_rows))
    outputs += [out / "simulation.csv", out / "extreme_months.csv", out / "simulated_vs_actual.csv"]
    _update_manifest(cfg, "simulate", inputs, _seeds(cfg), outputs)
    return outputs


COMMANDS = {"synth": cmd_synth, "evaluate": cmd_evaluate, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="demandagg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__.splitlines()[0])
        sp.add_argument("--config", required=True, help="path to the JSON run config")
        sp.add_argument("--out", help="override the config's output_dir")
        sp.add_argument("--seed", type=int, help="override simulation.master_seed")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    try:
        cfg = load_config(args.config, args.out, args.seed)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            outputs = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for p in outputs:
        log.info("wrote %s", p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
