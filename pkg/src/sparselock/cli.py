"""Batch front end: ``python3 -m sparselock {gen,run,attack,metrics,report}``.

Every command reads the YAML experiment config, works under ``--out`` and
writes JSON, JSONL or CSV with sorted keys and no timestamps, so reruns are
byte-identical. The exit status is 1 exactly when a written report carries
an error record.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import attacks, convnet, experiments, leakage, memsim
from .convnet import LayerSpec
from .errors import EstimationFailure, TraceTooShort
from .memsim import SimConfig

MODE_ALIASES = {"compress-only": "compress", "compress_only": "compress"}

DEFAULT_CONFIG = {
    "seed": 0,
    "mode": "compress",
    "accelerator": {
        "bin_capacity": 61440,
        "residency": 3,
        "buffers_kb": {"global": 182, "ifmap": 182, "weight": 182, "ofmap": 182},
        "loop_order": "weight_stationary",
        "compression": "auto",
    },
    "workload": {
        "input": {"shape": [1, 32], "sparsity": 0.0, "impulse": None},
        "input_tile": None,
        "layers": [],
    },
    "probe": {"layer": 0, "positions": None},
    "synthetic": {"strides": None, "events": None},
    "metrics": {"probes": 2048, "min_bits": 100},
}


@dataclass
class ExperimentConfig:
    seed: int
    mode: str
    accelerator: dict
    workload: dict
    probe: dict
    synthetic: dict
    metrics: dict
    raw: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | None, mode: str | None = None, seed: int | None = None) -> "ExperimentConfig":
        user = yaml.safe_load(Path(path).read_text()) if path else {}
        cfg = _merge(DEFAULT_CONFIG, user or {})
        if mode is not None:
            cfg["mode"] = mode
        if seed is not None:
            cfg["seed"] = seed
        cfg["mode"] = MODE_ALIASES.get(cfg["mode"], cfg["mode"])
        if cfg["mode"] not in memsim.MODES:
            raise SystemExit(f"unknown mode {cfg['mode']!r}")
        return cls(cfg["seed"], cfg["mode"], cfg["accelerator"], cfg["workload"], cfg["probe"],
                   cfg["synthetic"], cfg["metrics"], cfg)

    def sim(self) -> SimConfig:
        a = self.accelerator
        return SimConfig(mode=self.mode, bin_capacity=a["bin_capacity"], residency=a["residency"],
                         loop_order=a["loop_order"], compression=a["compression"], seed=self.seed)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) else v
    return out


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _tuple(v):
    return None if v is None else tuple(v)


# -- gen ------------------------------------------------------------------


def build_workload(cfg: ExperimentConfig) -> tuple[memsim.Workload, list[dict]]:
    """Workload described by the config plus per-layer metadata."""
    rng = np.random.default_rng(cfg.seed)
    w = cfg.workload
    shape = tuple(w["input"]["shape"])
    if w["input"].get("impulse") is not None:
        x = convnet.make_impulse(shape, tuple(w["input"]["impulse"]))
    else:
        x = convnet.random_sparse_tensor(shape, w["input"].get("sparsity", 0.0), rng)
    layers, meta = [], []
    for i, lc in enumerate(w["layers"]):
        spec = LayerSpec(in_shape=shape, filter_shape=tuple(lc["filter"]),
                         out_channels=lc.get("out_channels", 1), stride=lc.get("stride", 1),
                         padding=lc.get("padding", "same"), activation=lc.get("activation", "none"),
                         requant_shift=lc.get("requant_shift", 0))
        sp = lc.get("sparsity", 0.0)
        weights = convnet.random_weights(spec, rng, sp)
        layers.append(memsim.Layer(spec, weights, _tuple(lc.get("ofmap_tile")), _tuple(lc.get("weight_tile")),
                                   lc.get("act_sparsity", 0.0)))
        size = int(np.prod(spec.weight_shape))
        meta.append({"spec": spec.to_dict(), "target_sparsity": sp,
                     "target_nnz": size - int(np.floor(sp * size + 1e-9)), "nnz": convnet.nnz(weights)})
        shape = spec.out_shape
    return memsim.Workload(x, layers, _tuple(w.get("input_tile"))), meta


def cmd_gen(cfg: ExperimentConfig, out: Path) -> dict:
    wdir = out / "workload"
    wdir.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.raw, "files": {}, "layers": []}
    if cfg.workload["layers"]:
        wl, meta = build_workload(cfg)
        files = {"input.sltn": wl.input}
        files.update({f"layer{i:02d}.weights.sltn": l.weights for i, l in enumerate(wl.layers)})
        for name, t in files.items():
            convnet.save_tensor(wdir / name, t)
            manifest["files"][name] = {"sha256": hashlib.sha256((wdir / name).read_bytes()).hexdigest(),
                                       "shape": list(t.shape), "nnz": convnet.nnz(t)}
        manifest["layers"] = meta
        sched = [{"layer": i, "grids": {r: s.grid(r).to_dict() for r in convnet.ROLES},
                  "loop_strides": list(s.loop_strides)} for i, s in enumerate(wl.schedules())]
        _dump(wdir / "schedule.json", sched)
    _dump(wdir / "manifest.json", manifest)
    return manifest


def load_workload(cfg: ExperimentConfig, out: Path) -> memsim.Workload:
    wdir = out / "workload"
    if not (wdir / "manifest.json").exists():
        raise FileNotFoundError(f"no workload under {wdir}; run gen first")
    wl, _ = build_workload(cfg)
    wl.input = convnet.load_tensor(wdir / "input.sltn")
    for i, layer in enumerate(wl.layers):
        layer.weights = convnet.load_tensor(wdir / f"layer{i:02d}.weights.sltn")
    return wl


# -- run ------------------------------------------------------------------


def _write_trace(path: Path, trace: memsim.Trace) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(trace.to_jsonl())
    path.with_suffix(".oracle.jsonl").write_text(trace.to_jsonl(oracle=True))


def _probe_positions(cfg: ExperimentConfig, spec: LayerSpec) -> list:
    pos = cfg.probe.get("positions")
    if pos is None:
        return list(range(spec.spatial_shape[-1])) if len(spec.spatial_shape) == 1 else \
            [(spec.spatial_shape[0] // 2, w) for w in range(spec.spatial_shape[1])]
    return [p if np.isscalar(p) else tuple(p) for p in pos]


def cmd_run(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    tdir = out / "traces"
    summary = {"mode": cfg.mode, "errors": [], "traces": {}}
    sim = cfg.sim()
    if cfg.synthetic.get("strides"):
        tr = memsim.strided_trace(cfg.synthetic["strides"], cfg.synthetic.get("events"), cfg.mode, sim)
        _write_trace(tdir / f"synthetic.{cfg.mode}.jsonl", tr)
        summary["traces"]["synthetic"] = memsim.traffic_bytes(tr)
    if cfg.workload["layers"]:
        wl = load_workload(cfg, out)
        tr = memsim.run(wl, sim)
        _write_trace(tdir / f"{cfg.mode}.jsonl", tr)
        summary["traces"]["workload"] = memsim.traffic_bytes(tr)
        li = cfg.probe.get("layer", 0)
        layer = wl.layers[li]
        positions = _probe_positions(cfg, layer.spec)
        pdir = out / "probes" / cfg.mode
        traces = experiments.parallel_map(
            lambda p: memsim.run(attacks._probe_workload(layer.spec, layer.weights, p), sim), positions, workers)
        index = []
        for i, (p, t) in enumerate(zip(positions, traces)):
            name = f"pos_{i:03d}.jsonl"
            _write_trace(pdir / name, t)
            index.append({"file": name, "position": p if np.isscalar(p) else list(p)})
        _dump(pdir / "index.json", index)
    _dump(tdir / f"summary.{cfg.mode}.json", summary)
    return summary


# -- attack ---------------------------------------------------------------


def _read_trace(path: Path) -> memsim.Trace:
    if not path.exists():
        raise FileNotFoundError(f"missing trace {path}; run the run command first")
    return memsim.Trace.from_jsonl(path.read_text())


def cmd_attack(cfg: ExperimentConfig, out: Path, attack: str) -> dict:
    adir = out / "attacks"
    adir.mkdir(parents=True, exist_ok=True)
    report = {"attack": attack, "mode": cfg.mode, "errors": []}
    if attack == "huffduff":
        pdir = out / "probes" / cfg.mode
        if not (pdir / "index.json").exists():
            raise FileNotFoundError(f"no probe traces under {pdir}; run the run command first")
        index = json.loads((pdir / "index.json").read_text())
        traces = [_read_trace(pdir / r["file"]) for r in index]
        positions = tuple(r["position"] if np.isscalar(r["position"]) else tuple(r["position"]) for r in index)
        curve = attacks.NnzCurve(positions, tuple(sum(e.bytes for e in t if e.op == "W") for t in traces))
        (adir / f"huffduff.{cfg.mode}.csv").write_text(curve.to_csv())
        views = {json.dumps(t.attacker_view()) for t in traces}
        report["identical_traces"] = len(views) == 1
        try:
            est = attacks.knee_detect(curve)
            report.update(status="ok", estimate=attacks.ArchEstimate([est]).__dict__)
        except EstimationFailure as exc:
            report.update(status="estimation_failure", reason=str(exc))
        report["curve"] = list(curve.values)
    elif attack in ("fft", "hints"):
        name = f"synthetic.{cfg.mode}.jsonl" if cfg.synthetic.get("strides") else f"{cfg.mode}.jsonl"
        tr = _read_trace(out / "traces" / name)
        if attack == "fft":
            try:
                peaks = attacks.fft_periodicity(tr)
            except TraceTooShort as exc:
                peaks = []
                report["errors"].append(str(exc))
            report["periods"] = [[p, m] for p, m in peaks]
            report["integer_periods"] = sorted(attacks.detected_periods(tr)) if peaks else []
            (adir / f"spectrum.{cfg.mode}.csv").write_text(attacks.spectrum_csv(tr))
        else:
            report["hints"] = json.loads(attacks.hint_report(tr).to_json())
    else:
        raise SystemExit(f"unsupported attack {attack!r}")
    _dump(adir / f"{attack}.{cfg.mode}.json", report)
    return report


# -- metrics --------------------------------------------------------------


def cmd_metrics(cfg: ExperimentConfig, out: Path, workers: int = 1) -> dict:
    n = int(cfg.metrics["probes"])
    report = {"config": {"probes": n, "seed": cfg.seed}, "errors": []}
    if n < 2:
        report["errors"].append("need at least two probes per ensemble")
        _dump(out / "metrics" / "leakage.json", report)
        return report
    ens = experiments.leakage_ensemble(n, cfg.seed, workers)
    bits = 8 * int(ens["sparselock"].sizes.min())
    if bits < cfg.metrics["min_bits"]:
        report["errors"].append(f"{bits} bits per probe are too few for the runs test")
    reps = experiments.leakage_reports(ens)
    report["reports"] = [r.to_dict() for r in reps]
    fi_p, fi_r = ens["sparselock"].fi(), ens["random"].fi()
    report["fi_gap"] = abs(fi_p - fi_r) / fi_r
    report["cvm_critical_5pct"] = leakage.CVM_CRITICAL_5PCT
    mdir = out / "metrics"
    _dump(mdir / "leakage.json", report)
    (mdir / "leakage.csv").write_text(leakage.reports_csv(reps))
    return report


# -- report ---------------------------------------------------------------


def cmd_report(out: Path) -> dict:
    """Collect every JSON report under `out` into ``report.json``."""
    collected = {}
    errors = []
    for p in sorted(out.rglob("*.json")):
        rel = p.relative_to(out).as_posix()
        if rel == "report.json" or rel.startswith("workload/"):
            continue
        obj = json.loads(p.read_text())
        if isinstance(obj, dict):
            errors += [f"{rel}: {e}" for e in obj.get("errors", [])]
            collected[rel] = {k: v for k, v in obj.items() if k not in ("curve", "periods")}
    report = {"reports": collected, "errors": errors}
    _dump(out / "report.json", report)
    return report


# -- entry point ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sparselock", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="YAML experiment config")
    ap.add_argument("--mode", help="baseline, compress-only or sparselock")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--workers", type=int, default=1)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", help="write workload tensors, schedule and manifest")
    sub.add_parser("run", help="write attacker and oracle trace views")
    a = sub.add_parser("attack", help="run an attack over written traces")
    a.add_argument("attack", choices=("huffduff", "fft", "hints"))
    sub.add_parser("metrics", help="leakage metrics over probe ensembles")
    sub.add_parser("report", help="collect reports")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = _dispatch(args, out)
    except FileNotFoundError as exc:
        print(f"sparselock {args.command}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({k: v for k, v in res.items() if k in ("status", "estimate", "errors", "fi_gap",
                                                            "integer_periods", "identical_traces")},
                     sort_keys=True))
    return 1 if res.get("errors") else 0


def _dispatch(args, out: Path) -> dict:
    if args.command == "report":
        res = cmd_report(out)
    else:
        cfg = ExperimentConfig.load(args.config, args.mode, args.seed)
        if args.command == "gen":
            res = cmd_gen(cfg, out)
        elif args.command == "run":
            res = cmd_run(cfg, out, args.workers)
        elif args.command == "attack":
            res = cmd_attack(cfg, out, args.attack)
        else:
            res = cmd_metrics(cfg, out, args.workers)
    return res


if __name__ == "__main__":
    sys.exit(main())
