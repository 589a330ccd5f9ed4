"""Command-line front end: fit, transport, bench, metrics, rank, scenario-gen.

Exit codes: 0 success, 1 runtime failure (missing/invalid files, numeric
failure), 2 usage error (unknown subcommand, method, or suite). The bench
subcommand fans scenario x method x seed work out to a thread pool capped
by the POLTRANS_THREADS environment variable and writes deterministically
ordered artifacts: metrics CSV (timing deliberately excluded so reruns are
bitwise identical), ranking JSON, per-scenario reports, and SVG overlays.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .affine import fit_affine
from .baselines import apply_lwt, assign_via_points, fit_lwt, laplacian_edit, reshaped_kmp
from .metrics import (
    METRIC_NAMES,
    RankingResult,
    compute_metrics,
    rank_methods,
    read_metrics_csv,
    save_ranking,
    write_metrics_csv,
)
from .scenarios import (
    SURFACE_PROFILES,
    FrameScenario,
    frame_pairing,
    load_scenario,
    make_surface_scenario,
    random_frame_scenario,
    save_scenario,
)
from .transport import (
    TransportConfig,
    check_local_diffeomorphism,
    fit_transport,
    load_transport_map,
    save_transport_map,
    transport_labels,
    transport_points,
)
from .types import PairedKeypoints, PointSet, PolicyLabels, Trajectory, load_json
from .svgplot import SvgScene

METHODS = ("gpt", "le", "reshaped_kmp", "lwt")
SUITES = ("surfaces", "frames")
# Frame benchmarks give assignment-based reshapers fewer keypoints per frame
# (pairing more is ambiguous for them); map-based methods use all five.
FRAME_KPF = {"gpt": 5, "lwt": 5, "le": 2, "reshaped_kmp": 2}
_METHOD_COLORS = {
    "gpt": "#1f77b4",
    "le": "#2ca02c",
    "reshaped_kmp": "#9467bd",
    "lwt": "#8c564b",
}


class UsageError(Exception):
    pass


def _worker_count() -> int:
    env = os.environ.get("POLTRANS_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError(f"POLTRANS_THREADS must be an integer, got {env!r}") from exc
    return max(1, min(4, os.cpu_count() or 1))


def _load_config(args) -> dict:
    """Merge an optional --config JSON file under the CLI flags: a flag set
    on the command line wins; config supplies defaults otherwise."""
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    cfg = load_json(path)
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    reps = cfg.get("repetitions")
    if reps is not None and int(reps) < 1:
        raise UsageError("repetitions must be >= 1")
    for key in ("scenario", "map", "labels"):
        ref = cfg.get(key)
        if ref is not None and not Path(ref).exists():
            raise UsageError(f"config references missing file: {ref}")
    return cfg


def _setting(args, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if cfg.get(name) is not None:
        return cfg[name]
    return default


def _check_method(method: str) -> str:
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; valid ids: {', '.join(METHODS)}")
    return method


def _scenario_keypoints(path: str) -> PairedKeypoints:
    scenario = load_scenario(path)
    return scenario.keypoints


def _write_json(payload: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    method = _check_method(_setting(args, cfg, "method", "gpt"))
    if method != "gpt":
        raise UsageError(
            f"method {method!r} does not produce a transport map; "
            "use 'gpt' here (baselines run under 'bench')"
        )
    scenario_path = _setting(args, cfg, "scenario")
    if scenario_path is None:
        raise UsageError("a scenario file is required (--scenario or config)")
    out_dir = Path(_setting(args, cfg, "out_dir", "."))
    seed = int(_setting(args, cfg, "seed", 0))

    kp = _scenario_keypoints(scenario_path)
    start = time.perf_counter()
    tmap = fit_transport(kp, TransportConfig(seed=seed))
    fit_seconds = time.perf_counter() - start

    mapped, _ = transport_points(tmap, kp.source.points)
    errors = np.linalg.norm(mapped - kp.target.points, axis=1)
    report = {
        "fit_seconds": fit_seconds,
        "keypoint_error_max": float(errors.max()),
        "keypoint_error_mean": float(errors.mean()),
        "n_keypoints": kp.n,
        "warnings": list(tmap.warnings),
    }

    out_dir.mkdir(parents=True, exist_ok=True)
    save_transport_map(tmap, out_dir / "map.json")
    _write_json(report, out_dir / "fit_report.json")
    print(
        f"fit: {kp.n} keypoints in {fit_seconds:.3f}s, "
        f"max mismatch {report['keypoint_error_max']:.3e} -> {out_dir / 'map.json'}"
    )
    return 0


def cmd_transport(args) -> int:
    cfg = _load_config(args)
    map_path = _setting(args, cfg, "map")
    labels_path = _setting(args, cfg, "labels")
    if map_path is None or labels_path is None:
        raise UsageError("both a map file and a labels file are required")
    out_dir = Path(_setting(args, cfg, "out_dir", "."))

    tmap = load_transport_map(map_path)
    labels = PolicyLabels.from_dict(load_json(labels_path))
    if labels.dim != tmap.dim:
        raise ValueError(f"labels have dimension {labels.dim}, map expects {tmap.dim}")

    start = time.perf_counter()
    moved = transport_labels(tmap, labels)
    transport_seconds = time.perf_counter() - start
    diffeo = check_local_diffeomorphism(tmap, labels.positions)

    report = {
        "transport_seconds": transport_seconds,
        "det_positive_fraction": diffeo.fraction_positive,
        "keypoint_determinants": diffeo.keypoint_determinants.tolist(),
        "keypoints_sign_uniform": diffeo.keypoints_sign_uniform,
        "warnings": list(moved.warnings) + list(tmap.warnings),
    }
    if labels.stiffness is not None:
        drift = 0.0
        for before, after in zip(labels.stiffness, moved.stiffness):
            spec_in = np.sort(np.linalg.eigvalsh(before))
            spec_out = np.sort(np.linalg.eigvalsh(after))
            drift = max(drift, float(np.abs(spec_in - spec_out).max()))
        report["stiffness_spectrum_max_drift"] = drift

    out_dir.mkdir(parents=True, exist_ok=True)
    moved.to_csv(out_dir / "transported.csv")
    _write_json(report, out_dir / "transport_report.json")
    if diffeo.fraction_positive < 1.0:
        print(
            f"warning: det(J) > 0 on only {100 * diffeo.fraction_positive:.1f}% "
            "of label positions",
            file=sys.stderr,
        )
    print(
        f"transport: {labels.m} labels in {transport_seconds:.3f}s, "
        f"det>0 fraction {diffeo.fraction_positive:.3f} -> {out_dir / 'transported.csv'}"
    )
    return 0


def _gamma_pretransform(kp: PairedKeypoints, demo: Trajectory):
    """Rigid alignment applied before the reshaping baselines: move the
    demonstration and the source keypoints into the target's pose."""
    affine = fit_affine(kp)
    demo2 = Trajectory(positions=affine.apply(demo.positions), times=demo.times)
    kp2 = PairedKeypoints(
        source=PointSet(affine.apply(kp.source.points)),
        target=kp.target,
    )
    return demo2, kp2


def _run_method(method: str, kp: PairedKeypoints, demo: Trajectory, topology: str, seed: int):
    """Produce the transported demonstration plus bench bookkeeping.

    Returns (trajectory, extras) where extras may carry timing, the
    two-sigma band, keypoint accuracy, and det(J) statistics for gpt.
    """
    extras: dict = {}
    if method == "gpt":
        start = time.perf_counter()
        tmap = fit_transport(kp, TransportConfig(seed=seed))
        extras["fit_seconds"] = time.perf_counter() - start
        start = time.perf_counter()
        positions, variance = transport_points(tmap, demo.positions)
        extras["transport_seconds"] = time.perf_counter() - start
        extras["band_sigma"] = np.sqrt(np.maximum(variance, 0.0))
        mapped, _ = transport_points(tmap, kp.source.points)
        errors = np.linalg.norm(mapped - kp.target.points, axis=1)
        extras["keypoint_error_max"] = float(errors.max())
        extras["keypoint_error_mean"] = float(errors.mean())
        diffeo = check_local_diffeomorphism(tmap, demo.positions)
        extras["det_positive_pct"] = 100.0 * diffeo.fraction_positive
        return Trajectory(positions=positions, times=demo.times), extras

    demo2, kp2 = _gamma_pretransform(kp, demo)
    if method == "lwt":
        start = time.perf_counter()
        lwt = fit_lwt(kp2)
        extras["fit_seconds"] = time.perf_counter() - start
        positions = apply_lwt(lwt, demo2.positions)
        return Trajectory(positions=positions, times=demo2.times), extras

    assignment = assign_via_points(demo2, kp2)
    if method == "le":
        return laplacian_edit(demo2, assignment, topology=topology), extras
    if method == "reshaped_kmp":
        return reshaped_kmp(demo2, assignment), extras
    raise UsageError(f"unknown method {method!r}; valid ids: {', '.join(METHODS)}")


def _scene_svg(path: Path, demo, reference, produced: dict, keypoints, bands: dict) -> None:
    scene = SvgScene()
    for method, traj in sorted(produced.items()):
        if method in bands:
            scene.band(traj.positions, 2.0 * bands[method], fill="#ffa500", opacity=0.35)
    scene.polyline(demo.positions, color="#999999", width=1.2, dash="6,4")
    scene.polyline(reference.positions, color="#000000", width=1.8)
    for method, traj in sorted(produced.items()):
        scene.polyline(traj.positions, color=_METHOD_COLORS.get(method, "#e377c2"), width=1.6)
    scene.markers(keypoints.source.points, color="#bbbbbb", radius=3.0)
    scene.markers(keypoints.target.points, color="#d62728", radius=3.0)
    path.parent.mkdir(parents=True, exist_ok=True)
    scene.write(path)


def _single_method_ranking(method: str) -> RankingResult:
    points = {method: 0}
    per_metric = {name: {method: 0} for name in METRIC_NAMES}
    return RankingResult(points=points, per_metric_points=per_metric, ranking=((method, 1),))


def _bench_surfaces(methods, seeds, n_keypoints, out_dir: Path, alpha: float) -> int:
    tasks = [
        (profile, seed, method)
        for profile in SURFACE_PROFILES
        for seed in range(seeds)
        for method in methods
    ]

    def run(task):
        profile, seed, method = task
        scenario = make_surface_scenario(profile, n_keypoints=n_keypoints, seed=seed)
        try:
            produced, extras = _run_method(
                method, scenario.keypoints, scenario.demonstration, "ring", seed
            )
            report = compute_metrics(produced, scenario.reference)
        except Exception as exc:  # failure -> missing sample, bench continues
            return task, None, None, None, str(exc)
        return task, scenario, produced, (report, extras), None

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        outcomes = list(pool.map(run, tasks))

    rows = []
    failures = []
    scenario_reports: dict = {}
    scene_curves: dict = {}
    for task, scenario, produced, result, error in outcomes:
        profile, seed, method = task
        name = f"surface-{profile}-{seed}"
        if error is not None:
            failures.append({"scenario": name, "method": method, "error": error})
            continue
        report, extras = result
        row = {"scenario": name, "method": method, "repetition": seed}
        row.update(report.to_dict())
        rows.append(row)
        bundle = scene_curves.setdefault(name, {"scenario": scenario, "produced": {}, "bands": {}})
        bundle["produced"][method] = produced
        if "band_sigma" in extras:
            bundle["bands"][method] = extras["band_sigma"]
        if method == "gpt":
            scenario_reports[name] = {
                "fit_seconds": extras["fit_seconds"],
                "transport_seconds": extras["transport_seconds"],
                "keypoint_error_max": extras["keypoint_error_max"],
                "keypoint_error_mean": extras["keypoint_error_mean"],
                "det_positive_pct": extras["det_positive_pct"],
            }

    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(rows, out_dir / "metrics.csv")
    _emit_ranking(rows, methods, alpha, out_dir)
    if scenario_reports:
        _write_json(scenario_reports, out_dir / "report.json")
    if failures:
        _write_json({"failures": failures}, out_dir / "failures.json")
    for name, bundle in sorted(scene_curves.items()):
        scenario = bundle["scenario"]
        _scene_svg(
            out_dir / "svg" / f"{name}.svg",
            scenario.demonstration,
            scenario.reference,
            bundle["produced"],
            scenario.keypoints,
            bundle["bands"],
        )
    print(
        f"bench surfaces: {len(rows)} runs over {len(SURFACE_PROFILES)} profiles x "
        f"{seeds} seeds x {len(methods)} methods -> {out_dir}"
    )
    return 0


def _bench_frames(methods, seeds, train_seeds, out_dir: Path, alpha: float) -> int:
    train_ids = list(range(100, 100 + train_seeds))
    test_ids = list(range(200, 200 + seeds))
    tasks = [(test_seed, method) for test_seed in test_ids for method in methods]

    def run(task):
        test_seed, method = task
        rng = np.random.default_rng(test_seed)
        train_seed = train_ids[int(rng.integers(len(train_ids)))]
        kpf = FRAME_KPF.get(method, 5)
        train = random_frame_scenario(train_seed, keypoints_per_frame=kpf)
        test = random_frame_scenario(test_seed, keypoints_per_frame=kpf)
        kp = frame_pairing(train, test)
        demo = train.reference  # the training demonstration at its own frames
        try:
            produced, extras = _run_method(method, kp, demo, "chain", test_seed)
            report = compute_metrics(produced, test.reference)
        except Exception as exc:
            return task, None, None, None, str(exc)
        return task, test, produced, (report, extras), None

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        outcomes = list(pool.map(run, tasks))

    rows = []
    failures = []
    scene_curves: dict = {}
    for task, test, produced, result, error in outcomes:
        test_seed, method = task
        name = f"frame-{test_seed}"
        if error is not None:
            failures.append({"scenario": name, "method": method, "error": error})
            continue
        report, extras = result
        row = {"scenario": name, "method": method, "repetition": test_seed}
        row.update(report.to_dict())
        rows.append(row)
        bundle = scene_curves.setdefault(name, {"scenario": test, "produced": {}, "bands": {}})
        bundle["produced"][method] = produced
        if "band_sigma" in extras:
            bundle["bands"][method] = extras["band_sigma"]

    out_dir.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(rows, out_dir / "metrics.csv")
    _emit_ranking(rows, methods, alpha, out_dir)
    if failures:
        _write_json({"failures": failures}, out_dir / "failures.json")
    for name, bundle in sorted(scene_curves.items()):
        test = bundle["scenario"]
        _scene_svg(
            out_dir / "svg" / f"{name}.svg",
            test.demonstration,
            test.reference,
            bundle["produced"],
            test.keypoints,
            bundle["bands"],
        )
    print(
        f"bench frames: {len(rows)} runs over {len(test_ids)} test seeds x "
        f"{len(methods)} methods ({len(train_ids)} training seeds) -> {out_dir}"
    )
    return 0


def _emit_ranking(rows, methods, alpha: float, out_dir: Path) -> None:
    present = sorted({row["method"] for row in rows})
    if len(present) >= 2:
        samples = {
            method: {
                name: np.array([r[name] for r in rows if r["method"] == method])
                for name in METRIC_NAMES
            }
            for method in present
        }
        ranking = rank_methods(samples, alpha=alpha)
    elif len(present) == 1:
        ranking = _single_method_ranking(present[0])
    else:
        return
    save_ranking(ranking, out_dir / "ranking.json")


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    suite = _setting(args, cfg, "suite")
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; valid suites: {', '.join(SUITES)}")
    raw_methods = _setting(args, cfg, "methods")
    if raw_methods is None:
        methods = list(METHODS) if suite == "surfaces" else ["gpt", "le"]
    else:
        if isinstance(raw_methods, str):
            raw_methods = [m.strip() for m in raw_methods.split(",") if m.strip()]
        methods = [_check_method(m) for m in raw_methods]
    out_dir = Path(_setting(args, cfg, "out_dir", "bench-out"))
    alpha = float(_setting(args, cfg, "alpha", 0.05))

    if suite == "surfaces":
        seeds = int(_setting(args, cfg, "seeds", 3))
        n_keypoints = int(_setting(args, cfg, "n_keypoints", 12))
        return _bench_surfaces(methods, seeds, n_keypoints, out_dir, alpha)
    seeds = int(_setting(args, cfg, "seeds", 20))
    train_seeds = int(_setting(args, cfg, "train_seeds", 9))
    return _bench_frames(methods, seeds, train_seeds, out_dir, alpha)


def cmd_metrics(args) -> int:
    produced = Trajectory.from_dict(load_json(args.produced))
    reference = Trajectory.from_dict(load_json(args.reference))
    report = compute_metrics(produced, reference)
    payload = report.to_dict()
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        _write_json(payload, Path(args.out))
    print(text)
    return 0


def cmd_rank(args) -> int:
    rows = read_metrics_csv(args.metrics)
    if not rows:
        raise ValueError("metrics file holds no rows")
    methods = sorted({row["method"] for row in rows})
    if len(methods) == 1:
        ranking = _single_method_ranking(methods[0])
    else:
        samples = {
            method: {
                name: np.array([r[name] for r in rows if r["method"] == method])
                for name in METRIC_NAMES
            }
            for method in methods
        }
        ranking = rank_methods(samples, alpha=args.alpha)
    out = Path(args.out) if args.out else Path(args.metrics).parent / "ranking.json"
    save_ranking(ranking, out)
    print(json.dumps(ranking.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_scenario_gen(args) -> int:
    cfg = _load_config(args)
    suite = _setting(args, cfg, "suite")
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; valid suites: {', '.join(SUITES)}")
    out_dir = Path(_setting(args, cfg, "out_dir", "."))

    if suite == "surfaces":
        seeds = int(_setting(args, cfg, "seeds", 3))
        n_keypoints = int(_setting(args, cfg, "n_keypoints", 12))
        target = out_dir / "scenarios" / "surfaces"
        target.mkdir(parents=True, exist_ok=True)
        count = 0
        for profile in SURFACE_PROFILES:
            for seed in range(seeds):
                scenario = make_surface_scenario(profile, n_keypoints=n_keypoints, seed=seed)
                save_scenario(scenario, target / f"{profile}-{seed}.json")
                count += 1
        print(f"wrote {count} surface scenarios under {target}")
        return 0

    seeds = int(_setting(args, cfg, "seeds", 20))
    train_seeds = int(_setting(args, cfg, "train_seeds", 9))
    kpf = int(_setting(args, cfg, "kpf", 5))
    target = out_dir / "scenarios" / "frames"
    target.mkdir(parents=True, exist_ok=True)
    count = 0
    for seed in range(100, 100 + train_seeds):
        save_scenario(random_frame_scenario(seed, keypoints_per_frame=kpf), target / f"train-{seed}.json")
        count += 1
    for seed in range(200, 200 + seeds):
        save_scenario(random_frame_scenario(seed, keypoints_per_frame=kpf), target / f"test-{seed}.json")
        count += 1
    print(f"wrote {count} frame scenarios under {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poltrans",
        description="Keypoint-conditioned policy transportation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a transport map to a scenario's keypoints")
    fit.add_argument("--scenario", help="scenario JSON file")
    fit.add_argument("--method", help="method id (map fitting supports gpt)")
    fit.add_argument("--config", help="JSON config supplying defaults")
    fit.add_argument("--out-dir", dest="out_dir", help="output directory")
    fit.add_argument("--seed", type=int, help="GP optimizer seed")
    fit.set_defaults(func=cmd_fit)

    transport = sub.add_parser("transport", help="transport labels through a fitted map")
    transport.add_argument("--map", help="transport map JSON")
    transport.add_argument("--labels", help="policy labels JSON")
    transport.add_argument("--config", help="JSON config supplying defaults")
    transport.add_argument("--out-dir", dest="out_dir", help="output directory")
    transport.set_defaults(func=cmd_transport)

    bench = sub.add_parser("bench", help="run a benchmark suite")
    bench.add_argument("--suite", help="surfaces or frames")
    bench.add_argument("--methods", help="comma-separated method ids")
    bench.add_argument("--seeds", type=int, help="number of (test) seeds")
    bench.add_argument("--train-seeds", dest="train_seeds", type=int, help="training seeds (frames)")
    bench.add_argument("--n-keypoints", dest="n_keypoints", type=int, help="keypoints per surface")
    bench.add_argument("--alpha", type=float, help="significance level")
    bench.add_argument("--config", help="JSON config supplying defaults")
    bench.add_argument("--out-dir", dest="out_dir", help="output directory")
    bench.set_defaults(func=cmd_bench)

    metrics = sub.add_parser("metrics", help="compare two trajectory files")
    metrics.add_argument("--produced", required=True, help="trajectory JSON")
    metrics.add_argument("--reference", required=True, help="trajectory JSON")
    metrics.add_argument("--out", help="optional output JSON path")
    metrics.set_defaults(func=cmd_metrics)

    rank = sub.add_parser("rank", help="rank methods from a metrics CSV")
    rank.add_argument("--metrics", required=True, help="metrics CSV from bench")
    rank.add_argument("--alpha", type=float, default=0.05)
    rank.add_argument("--out", help="ranking JSON path")
    rank.set_defaults(func=cmd_rank)

    gen = sub.add_parser("scenario-gen", help="write scenario JSON corpora")
    gen.add_argument("--suite", help="surfaces or frames")
    gen.add_argument("--seeds", type=int, help="seeds per profile / test seeds")
    gen.add_argument("--train-seeds", dest="train_seeds", type=int)
    gen.add_argument("--n-keypoints", dest="n_keypoints", type=int)
    gen.add_argument("--kpf", type=int, help="keypoints per frame")
    gen.add_argument("--config", help="JSON config supplying defaults")
    gen.add_argument("--out-dir", dest="out_dir", help="output directory")
    gen.set_defaults(func=cmd_scenario_gen)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
