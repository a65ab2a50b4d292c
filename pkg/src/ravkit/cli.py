"""Command-line entry point: ``ravkit {generate,simulate,analyze,stoq,hamsim}``.

A run is driven by a JSON manifest; flags given on the command line
override the manifest. All outputs of one experiment live under one
``--out`` directory::

    out/manifest.json        resolved manifest echo
    out/circuits/index.tsv   one row per sequence, with generation status
    out/circuits/*.jsonl     circuit files
    out/shots.tsv            shot records
    out/analysis/            fits, run statistics, binned decay data, figures

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, analysis, formats, hamsim, plotting, protocol, stoq
from .gates import GateKind, LayerDesign, ParamRange, Slot, default_design
from .linalg import haar_random_unitary, make_rng, spawn_seeds
from .noise import (
    CoherentOverrotation,
    GlobalDepolarizing,
    Noiseless,
    NoiseModel,
    PerGateDepolarizing,
    run_shots,
    simulate,
)

log = logging.getLogger("ravkit")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

# fixed offsets that give each pipeline stage its own seed stream
_STAGE_SIMULATE = 1
_STAGE_STOQ = 2
_STAGE_HAMSIM = 3


class UsageError(ValueError):
    """Bad manifest content or flag combination; maps to exit code 2."""


class RunFailure(RuntimeError):
    """The run finished with failures; outputs written so far are kept."""


WEIGHTINGS = (analysis.POINTS, analysis.BINNED)


def stage_seed(seed: int, stage: int) -> int:
    state = np.random.SeedSequence([int(seed), stage]).generate_state(2, dtype=np.uint64)
    return int(state[0] >> np.uint64(1))


@dataclass
class ExperimentManifest:
    """Everything needed to rerun an experiment bit-exactly."""

    n_qubits: int
    m0_range: list[int]
    design: dict | None = None
    epsilon_target: float = 0.04
    sequences_per_plan: int = 50
    max_restarts: int = 25
    stoq: dict = field(default_factory=dict)
    noise: dict = field(default_factory=lambda: {"model": "none"})
    shots: int = 500
    K: list[int] = field(default_factory=lambda: [5, 10, 25, 50, 100])
    fit_model: str = "auto"
    fit_weighting: str = analysis.POINTS
    bin_size: int = 6
    seed: int = 0
    workers: int = 1
    tool_version: str = __version__

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentManifest":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown manifest keys {sorted(unknown)}")
        if "n_qubits" not in d or "m0_range" not in d:
            raise UsageError("manifest needs n_qubits and m0_range")
        d = dict(d)
        d["m0_range"] = _expand_range(d["m0_range"])
        d.pop("tool_version", None)
        try:
            m = cls(**d)
        except TypeError as exc:
            raise UsageError(str(exc)) from None
        m.validate()
        return m

    def validate(self) -> None:
        if not self.m0_range or min(self.m0_range) < 1:
            raise UsageError("m0_range must be a non-empty list of positive layer counts")
        if self.shots < 1 or any(k < 1 for k in self.K):
            raise UsageError("shots and K values must be positive")
        if self.fit_model not in (*analysis.MODELS, "auto"):
            raise UsageError(f"fit_model must be one of {analysis.MODELS + ('auto',)}")
        if self.fit_weighting not in WEIGHTINGS:
            raise UsageError(f"fit_weighting must be one of {WEIGHTINGS}")
        try:
            self.layer_design()
            self.stoq_params()
            self.noise_model()
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"invalid manifest: {exc}") from None

    def layer_design(self) -> LayerDesign:
        if self.design is None:
            return default_design(self.n_qubits)
        slots = []
        for s in self.design["slots"]:
            slots.append(
                Slot(
                    GateKind(s["kind"]),
                    int(s["count"]),
                    ParamRange(*s["theta"]),
                    ParamRange(*s.get("phi", (0.0, 0.0))),
                )
            )
        return LayerDesign(self.n_qubits, tuple(slots))

    def stoq_params(self) -> stoq.StoqParams:
        base = asdict(protocol.DEFAULT_INVERSION_PARAMS)
        base.update(self.stoq)
        return stoq.StoqParams(**base)

    def noise_model(self) -> NoiseModel:
        return noise_from_spec(self.noise.get("model", "none"), self.noise)

    def plan(self) -> protocol.ExperimentPlan:
        return protocol.ExperimentPlan(
            self.layer_design(),
            tuple(self.m0_range),
            self.epsilon_target,
            self.sequences_per_plan,
            self.seed,
            self.stoq_params(),
            self.max_restarts,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _expand_range(spec) -> list[int]:
    """Accept an explicit list or ``{"min", "max", "count"}`` with linear spacing."""
    if isinstance(spec, dict):
        try:
            lo, hi, count = int(spec["min"]), int(spec["max"]), int(spec["count"])
        except (KeyError, TypeError, ValueError):
            raise UsageError("m0_range object needs integer min, max and count") from None
        if count < 1 or lo > hi:
            raise UsageError("m0_range needs count >= 1 and min <= max")
        return sorted({int(round(x)) for x in np.linspace(lo, hi, count)})
    if not isinstance(spec, list) or not all(isinstance(x, int) for x in spec):
        raise UsageError("m0_range must be a list of integers or a {min, max, count} object")
    return list(spec)


def noise_from_spec(model: str, params: dict) -> NoiseModel:
    if model == "none":
        return Noiseless()
    if model == "global":
        return GlobalDepolarizing(float(params["lambda"]))
    if model == "per_gate":
        return PerGateDepolarizing(float(params["rate"]))
    if model == "overrotation":
        return CoherentOverrotation(float(params["delta"]))
    raise ValueError(f"unknown noise model {model!r}")


def load_manifest(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from None


def _circuit_dir(out: Path) -> Path:
    return out / "circuits"


def _sequence_id(kind: str, index: int) -> str:
    return f"{kind.lower()}_{index:04d}"


# --- generate -------------------------------------------------------------


def run_generate(manifest: ExperimentManifest, out: Path) -> list[formats.IndexEntry]:
    """Write circuit files, an index and the manifest echo.

    Raises:
        RunFailure: at least one pair exhausted its compilation budget. The
            index still lists every pair with its status.
    """
    out = Path(out)
    cdir = _circuit_dir(out)
    cdir.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(manifest.to_json())
    pairs = protocol.generate_experiment(manifest.plan(), manifest.workers)
    entries = []
    for p in pairs:
        for kind, seq in ((protocol.RAV, p.rav), (protocol.XEB, p.xeb)):
            sid = _sequence_id(kind, p.index)
            if seq is None:
                entries.append(formats.IndexEntry(p.index, sid, kind, p.m0, None, None, p.seed, p.status, ""))
                continue
            fname = f"{sid}.jsonl"
            formats.write_sequence(cdir / fname, seq, sid)
            entries.append(formats.IndexEntry(p.index, sid, kind, p.m0, seq.m, seq.epsilon, p.seed, "ok", fname))
    formats.write_index(cdir / "index.tsv", entries)
    failed = [p for p in pairs if not p.ok]
    if failed:
        raise RunFailure(f"{len(failed)} of {len(pairs)} pairs failed to compile an inverse")
    return entries


# --- simulate -------------------------------------------------------------


def load_circuits(cdir: Path) -> list[tuple[formats.IndexEntry, protocol.VerificationSequence]]:
    out = []
    for e in formats.read_index(Path(cdir) / "index.tsv"):
        if e.status != "ok":
            continue
        sid, seq = formats.read_sequence(Path(cdir) / e.file)
        if sid != e.sequence_id:
            raise formats.FormatError(f"{e.file}: header id {sid!r} does not match index {e.sequence_id!r}")
        out.append((e, seq))
    return out


def _simulate_one(seq, noise, shots, seed):
    rng = make_rng(seed)
    x0 = int(rng.integers(1 << seq.n_qubits))
    res = run_shots(seq, noise, x0, shots, rng)
    return x0, res.outcomes


def run_simulate(
    cdir: Path, noise: NoiseModel, shots: int, seed: int, out_file: Path, workers: int = 1
) -> list[formats.ShotRecord]:
    """Sample ``shots`` shots of every circuit from a uniformly random basis state."""
    circuits = load_circuits(cdir)
    seeds = spawn_seeds(stage_seed(seed, _STAGE_SIMULATE), len(circuits))
    jobs = [(seq, noise, shots, s) for (_, seq), s in zip(circuits, seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_simulate_one, *zip(*jobs)))
    else:
        results = [_simulate_one(*j) for j in jobs]
    records = [
        formats.ShotRecord(e.sequence_id, np.full(shots, x0), outcomes)
        for (e, _), (x0, outcomes) in zip(circuits, results)
    ]
    Path(out_file).parent.mkdir(parents=True, exist_ok=True)
    formats.write_shots(out_file, records)
    return records


# --- analyze --------------------------------------------------------------


@dataclass
class _SeqData:
    sequence_id: str
    kind: str
    m: int
    x0: int
    ideal: np.ndarray
    outcomes: np.ndarray


def _load_for_analysis(cdir: Path, shots_file: Path) -> list[_SeqData]:
    circuits = {e.sequence_id: (e, seq) for e, seq in load_circuits(cdir)}
    records = formats.read_shots(shots_file)
    data = []
    for sid in sorted(records):
        rec = records[sid]
        if sid not in circuits:
            raise formats.FormatError(f"{Path(shots_file).name}: no circuit for sequence {sid!r}")
        e, seq = circuits[sid]
        if np.unique(rec.x0).size != 1:
            raise formats.FormatError(f"{sid}: initial state changes between shots")
        n = 1 << seq.n_qubits
        if rec.outcomes.max(initial=0) >= n or rec.x0[0] >= n:
            raise formats.FormatError(f"{sid}: basis index out of range for {seq.n_qubits} qubits")
        x0 = int(rec.x0[0])
        ideal = simulate(seq, Noiseless(), x0).ideal_probs
        data.append(_SeqData(sid, seq.kind, seq.m, x0, ideal, rec.outcomes))
    return data


def _run_points(d: _SeqData, k: int) -> list[analysis.FidelityPoint]:
    n = d.ideal.size
    pts = []
    for run in analysis.split_runs(d.outcomes, k):
        counts = np.bincount(run, minlength=n)
        if d.kind == protocol.RAV:
            f = analysis.f_rav(float(d.ideal[d.x0]), counts[d.x0] / k, n)
        else:
            f = analysis.f_xeb(d.ideal, counts, k)
        pts.append(analysis.FidelityPoint(d.m, f, d.kind, k, d.sequence_id))
    return pts


def _try_fit(points, model, bin_size, weighting=analysis.POINTS):
    try:
        return analysis.fit_decay(points, model, bin_size, weighting)
    except analysis.FitDegenerateError as exc:
        log.warning("fit skipped: %s", exc)
        return None


def select_model(pooled_fits: dict[tuple[str, int, str], analysis.FitResult | None]) -> tuple[str, dict[str, float]]:
    """Pick the model with the lower summed binned chi2_r over all pooled fits.

    Non-finite chi2_r values are left out of the sums. Ties go to the
    exponential model.
    """
    totals = {}
    for model in analysis.MODELS:
        vals = [f.chi2_reduced for (_, _, mdl), f in pooled_fits.items() if mdl == model and f is not None]
        totals[model] = float(sum(v for v in vals if math.isfinite(v)))
    best = min(analysis.MODELS, key=lambda mdl: (totals[mdl], analysis.MODELS.index(mdl)))
    return best, totals


def run_analyze(
    cdir: Path,
    shots_file: Path,
    out: Path,
    ks: Sequence[int],
    model: str = "auto",
    kinds: Sequence[str] = (protocol.RAV, protocol.XEB),
    bin_size: int = 6,
    weighting: str = analysis.POINTS,
) -> list[analysis.StatsRow]:
    """Per-run fits, run statistics and binned decay data for every ``(kind, K)``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = [d for d in _load_for_analysis(cdir, shots_file) if d.kind in kinds]
    models = analysis.MODELS if model == "auto" else (model,)

    # points[(kind, K)][run] -> FidelityPoints of every sequence in that run
    points: dict[tuple[str, int], list[list[analysis.FidelityPoint]]] = {}
    for kind in kinds:
        seqs = [d for d in data if d.kind == kind]
        if not seqs:
            continue
        for k in ks:
            per_seq = []
            for d in seqs:
                if d.outcomes.size % k:
                    raise UsageError(f"K={k} does not divide the {d.outcomes.size} shots of {d.sequence_id}")
                try:
                    per_seq.append(_run_points(d, k))
                except ValueError as exc:
                    log.warning("sequence %s skipped: %s", d.sequence_id, exc)
            points[(kind, k)] = [list(run) for run in zip(*per_seq)]

    pooled_fits = {}
    run_fits = {}
    for (kind, k), runs in points.items():
        pooled = [p for run in runs for p in run]
        for mdl in models:
            pooled_fits[(kind, k, mdl)] = _try_fit(pooled, mdl, bin_size, weighting)
            run_fits[(kind, k, mdl)] = [_try_fit(run, mdl, bin_size, weighting) for run in runs]

    if model == "auto":
        chosen, totals = select_model(pooled_fits)
        formats.write_table(
            out / "model_selection.tsv",
            ("model", "chi2_r_sum", "selected"),
            [(mdl, totals[mdl], int(mdl == chosen)) for mdl in analysis.MODELS],
        )
    else:
        chosen = model

    fit_rows = []
    for (kind, k, mdl), fits in sorted(run_fits.items()):
        for r, f in enumerate(fits):
            if f is None:
                fit_rows.append((kind, k, r, mdl, None, None, None, "fit_degenerate"))
            else:
                fit_rows.append((kind, k, r, mdl, f.alpha, f.chi2_reduced, f.fidelity_loss, "ok"))
    formats.write_table(
        out / "fits.tsv",
        ("kind", "K", "run", "model", "alpha", "chi2_r", "fidelity_loss", "status"),
        [tuple(_finite_or_none(v) for v in row) for row in fit_rows],
    )

    grouped = {
        (kind, k): [f for f in run_fits[(kind, k, chosen)] if f is not None]
        for (kind, k) in points
    }
    rows = analysis.run_statistics(grouped)
    _write_stats(out / "stats.tsv", rows, chosen)

    for (kind, k), runs in sorted(points.items()):
        _write_decay(out, kind, k, runs, run_fits[(kind, k, chosen)], pooled_fits, chosen, models, bin_size)
    plotting.plot_run_statistics(out / "stats.png", rows)
    return rows


def _finite_or_none(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _write_stats(path: Path, rows: Sequence[analysis.StatsRow], model: str) -> None:
    table = []
    for r in rows:
        cells: list[Any] = [r.shots, model]
        status = "ok"
        for g in (r.rav, r.xeb):
            if g is None:
                cells += [None, None, None, 0]
                continue
            cells += [g.mean, g.sd, g.sd_per_mean, g.runs]
            if g.runs < 2:
                status = "insufficient_runs"
        cells += [r.ratio, status]
        table.append(tuple(_finite_or_none(c) for c in cells))
    formats.write_table(
        path,
        (
            "K", "model",
            "rav_mean", "rav_sd", "rav_sd_per_mean", "rav_runs",
            "xeb_mean", "xeb_sd", "xeb_sd_per_mean", "xeb_runs",
            "ratio", "status",
        ),
        table,
    )


def _write_decay(out, kind, k, runs, fits, pooled_fits, chosen, models, bin_size) -> None:
    rows = []
    run_bins = {}
    for r, (pts, fit) in enumerate(zip(runs, fits)):
        bins = analysis.bin_points(pts, bin_size)
        run_bins[str(r)] = bins
        for b in bins:
            rows.append((str(r), b.m, b.mean, b.sem, b.count,
                         fit.alpha if fit else None, fit.chi2_reduced if fit else None))
    pooled_pts = [p for run in runs for p in run]
    pooled_bins = analysis.bin_points(pooled_pts, bin_size)
    pf = pooled_fits[(kind, k, chosen)]
    for b in pooled_bins:
        rows.append(("all", b.m, b.mean, b.sem, b.count,
                     pf.alpha if pf else None, pf.chi2_reduced if pf else None))
    stem = f"decay_{kind.lower()}_K{k}"
    formats.write_table(
        out / f"{stem}.tsv",
        ("run", "m", "mean", "sem", "count", "fit_alpha", "chi2_r"),
        [tuple(_finite_or_none(c) for c in row) for row in rows],
        f"model={chosen}",
    )
    shown = {mdl: pooled_fits[(kind, k, mdl)] for mdl in models if pooled_fits[(kind, k, mdl)] is not None}
    plotting.plot_decay(out / f"{stem}.png", run_bins, pooled_bins, shown, f"{kind}, K={k}")


# --- stoq -----------------------------------------------------------------


def _stoq_run(target_kind, n, params, tau, eps_frac, seed):
    if target_kind == "ising":
        spec = hamsim.HamiltonianSpec.preset(n)
        target = hamsim.time_evolution_target(spec, tau)
        source = hamsim.term_instruction_source(spec, tau, eps_frac)
        compile_seed = seed
    else:
        target_seed, compile_seed = spawn_seeds(seed, 2)
        target = haar_random_unitary(n, make_rng(target_seed))
        source = stoq.GateSource(n)
    return stoq.compile(target, source, params, compile_seed)


def _instruction_obj(instr) -> dict:
    if isinstance(instr, hamsim.TermStep):
        return {"term": instr.term_index, "duration": instr.duration}
    return {"kind": instr.kind.value, "targets": list(instr.targets), "theta": instr.theta, "phi": instr.phi}


def run_stoq(
    out: Path,
    target: str,
    n: int,
    params: stoq.StoqParams,
    runs: int,
    seed: int,
    tau: float = hamsim.DEFAULT_TAU,
    eps_frac: float = 0.2,
    epsilon_target: float | None = None,
    workers: int = 1,
) -> list[stoq.CompiledSequence]:
    """Independent compilations of an Ising or Haar-random target.

    Raises:
        RunFailure: ``epsilon_target`` was given and no run reached it.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = spawn_seeds(stage_seed(seed, _STAGE_STOQ), runs)
    jobs = [(target, n, params, tau, eps_frac, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_stoq_run, *zip(*jobs)))
    else:
        results = [_stoq_run(*j) for j in jobs]

    trace_rows = [(r, i, c) for r, res in enumerate(results) for i, c in enumerate(res.cost_trace)]
    formats.write_table(out / "stoq_traces.tsv", ("run", "iteration", "cost"), trace_rows)
    formats.write_table(
        out / "stoq_summary.tsv",
        ("run", "seed", "length", "final_cost", "epsilon"),
        [(r, s, len(res), res.final_cost, res.epsilon) for r, (s, res) in enumerate(zip(seeds, results))],
        f"target={target} n={n} mean_final_cost={formats.fmt_float(float(np.mean([r.final_cost for r in results])))}",
    )
    for r, res in enumerate(results):
        header = {
            "format_version": formats.FORMAT_VERSION, "tool_version": __version__,
            "target": target, "n_qubits": n, "run": r, "final_cost": res.final_cost,
        }
        lines = [formats.dumps(header)] + [formats.dumps(_instruction_obj(i)) for i in res.instructions]
        (out / f"stoq_run{r:03d}.jsonl").write_text("\n".join(lines) + "\n")
    plotting.plot_cost_traces(out / "cost_traces.png", [r.cost_trace for r in results], f"{target}, n={n}")
    if epsilon_target is not None and not any(r.epsilon <= epsilon_target for r in results):
        raise RunFailure(f"no run reached epsilon <= {epsilon_target}")
    return results


# --- hamsim ---------------------------------------------------------------


HAMSIM_METHODS = ("trotter", "qdrift", "stoq")


def _hamsim_run(method, spec, tau, steps, reps, params, eps_frac, seed):
    if method == "trotter":
        seq = hamsim.trotter_randomized(spec, tau, steps, seed)
    elif method == "qdrift":
        seq = hamsim.qdrift(spec, tau, reps, seed)
    else:
        seq, _ = hamsim.stoq_compile(spec, tau, params, eps_frac, seed)
    return seq, hamsim.path_distance(seq, spec, tau)


def run_hamsim(
    out: Path,
    n: int,
    methods: Sequence[str],
    runs: int,
    seed: int,
    tau: float = hamsim.DEFAULT_TAU,
    steps: int = 10,
    reps: int = 1000,
    params: stoq.StoqParams = stoq.StoqParams(),
    eps_frac: float = 0.2,
    workers: int = 1,
) -> dict[str, list[tuple[hamsim.CompiledHamSequence, np.ndarray]]]:
    """Compile the Ising target with each method and record path distances."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    spec = hamsim.HamiltonianSpec.preset(n)
    method_seeds = spawn_seeds(stage_seed(seed, _STAGE_HAMSIM), len(HAMSIM_METHODS))
    results = {}
    summary = []
    for method in methods:
        seeds = spawn_seeds(method_seeds[HAMSIM_METHODS.index(method)], runs)
        jobs = [(method, spec, tau, steps, reps, params, eps_frac, s) for s in seeds]
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                res = list(pool.map(_hamsim_run, *zip(*jobs)))
        else:
            res = [_hamsim_run(*j) for j in jobs]
        results[method] = res
        rows = []
        for r, (seq, dist) in enumerate(res):
            elapsed = np.cumsum([abs(s.duration) for s in seq.steps])
            rows += [(r, m + 1, t, d) for m, (t, d) in enumerate(zip(elapsed, dist))]
            mean_d = float(dist.mean()) if dist.size else 0.0
            summary.append((method, r, len(seq.steps), seq.exec_time, seq.final_cost, mean_d))
        formats.write_table(out / f"path_{method}.tsv", ("run", "m", "elapsed_time", "distance"), rows)
    formats.write_table(
        out / "hamsim_summary.tsv",
        ("method", "run", "length", "exec_time", "final_cost", "mean_path_distance"),
        summary,
        f"n={n} tau={formats.fmt_float(tau)}",
    )
    series = {
        method: [(np.cumsum([abs(s.duration) for s in seq.steps]), dist) for seq, dist in res]
        for method, res in results.items()
    }
    plotting.plot_path_distance(out / "path_distance.png", series)
    return results


# --- argument parsing -----------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", type=Path, help="JSON manifest; flags override its values")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--workers", type=int, help="worker processes")


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ravkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate RAV and matched XEB circuit files")
    _common(p)

    p = sub.add_parser("simulate", help="sample shot records from circuit files")
    _common(p)
    p.add_argument("--circuits", type=Path, help="circuit directory (default OUT/circuits)")
    p.add_argument("--noise", choices=("none", "global", "per_gate", "overrotation"))
    p.add_argument("--strength", type=float, help="lambda, per-gate rate or over-rotation delta")
    p.add_argument("--shots", type=int, help="shots per sequence")

    p = sub.add_parser("analyze", help="fit decay curves and tabulate run statistics")
    _common(p)
    p.add_argument("--circuits", type=Path, help="circuit directory (default OUT/circuits)")
    p.add_argument("--shots-file", type=Path, help="shot records (default OUT/shots.tsv)")
    p.add_argument("--kind", choices=("RAV", "XEB", "both"), default="both")
    p.add_argument("--K", type=_int_list, help="comma-separated shots per run")
    p.add_argument("--model", choices=("exp", "gauss", "auto"))
    p.add_argument("--bin-size", type=int)
    p.add_argument("--weighting", choices=WEIGHTINGS, help="fit all points equally or SEM-weighted bin means")

    p = sub.add_parser("stoq", help="compile Ising or Haar-random targets with STOQ")
    _common(p)
    p.add_argument("--target", choices=("ising", "haar"))
    p.add_argument("--n", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--delta-beta", type=float)
    p.add_argument("--p-append", type=float)
    p.add_argument("--edit-position", choices=("random", "end"))
    p.add_argument("--tau", type=float)
    p.add_argument("--eps-frac", type=float)
    p.add_argument("--epsilon-target", type=float)

    p = sub.add_parser("hamsim", help="compare Trotter, QDRIFT and STOQ on the Ising target")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--method", choices=(*HAMSIM_METHODS, "all"))
    p.add_argument("--steps", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--delta-beta", type=float)
    p.add_argument("--runs", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--eps-frac", type=float)
    return parser


def _pick(flag, section: dict, key: str, default):
    if flag is not None:
        return flag
    return section.get(key, default)


def _experiment_manifest(args) -> tuple[ExperimentManifest, Path]:
    raw = load_manifest(args.manifest)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.workers is not None:
        raw["workers"] = args.workers
    out = args.out or raw.get("out")
    raw.pop("out", None)
    if out is None:
        raise UsageError("--out is required (or set 'out' in the manifest)")
    return ExperimentManifest.from_dict(raw), Path(out)


def _cmd_generate(args) -> None:
    manifest, out = _experiment_manifest(args)
    run_generate(manifest, out)


def _cmd_simulate(args) -> None:
    raw = load_manifest(args.manifest)
    out = Path(args.out or raw.get("out") or ".")
    noise_spec = dict(raw.get("noise", {"model": "none"}))
    if args.noise is not None:
        noise_spec = {"model": args.noise}
        if args.noise != "none":
            if args.strength is None:
                raise UsageError("--strength is required with --noise")
            key = {"global": "lambda", "per_gate": "rate", "overrotation": "delta"}[args.noise]
            noise_spec[key] = args.strength
    try:
        noise = noise_from_spec(noise_spec.get("model", "none"), noise_spec)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid noise model: {exc}") from None
    shots = _pick(args.shots, raw, "shots", 500)
    seed = _pick(args.seed, raw, "seed", 0)
    workers = _pick(args.workers, raw, "workers", 1)
    if shots < 1:
        raise UsageError("--shots must be positive")
    run_simulate(args.circuits or _circuit_dir(out), noise, shots, seed, out / "shots.tsv", workers)


def _cmd_analyze(args) -> None:
    raw = load_manifest(args.manifest)
    out = Path(args.out or raw.get("out") or ".")
    ks = _pick(args.K, raw, "K", [5, 10, 25, 50, 100])
    model = _pick(args.model, raw, "fit_model", "auto")
    bin_size = _pick(args.bin_size, raw, "bin_size", 6)
    weighting = _pick(args.weighting, raw, "fit_weighting", analysis.POINTS)
    if weighting not in WEIGHTINGS:
        raise UsageError(f"fit_weighting must be one of {WEIGHTINGS}")
    if not ks or any(k < 1 for k in ks) or bin_size < 1:
        raise UsageError("K values and bin size must be positive")
    kinds = (protocol.RAV, protocol.XEB) if args.kind == "both" else (args.kind,)
    rows = run_analyze(
        args.circuits or _circuit_dir(out),
        args.shots_file or out / "shots.tsv",
        out / "analysis",
        ks, model, kinds, bin_size, weighting,
    )
    for r in rows:
        for g in (r.rav, r.xeb):
            if g is not None and g.runs < 2:
                log.warning("K=%d has %d run(s); SD not reported", r.shots, g.runs)


def _stoq_section(args, raw: dict) -> stoq.StoqParams:
    sec = dict(raw.get("stoq", {}))
    try:
        return stoq.StoqParams(
            num_iterations=_pick(args.iterations, sec, "num_iterations", 10_000),
            delta_beta=_pick(args.delta_beta, sec, "delta_beta", 0.01),
            p_append=_pick(getattr(args, "p_append", None), sec, "p_append", 0.5),
            edit_position=_pick(getattr(args, "edit_position", None), sec, "edit_position", "random"),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cmd_stoq(args) -> None:
    raw = load_manifest(args.manifest)
    out = Path(args.out or raw.get("out") or ".")
    target = _pick(args.target, raw, "target", "ising")
    n = _pick(args.n, raw, "n_qubits", 2)
    if target == "ising" and n not in hamsim.ISING_COEFFICIENTS:
        raise UsageError(f"no Ising coefficients for n={n}; choose from {sorted(hamsim.ISING_COEFFICIENTS)}")
    runs = _pick(args.runs, raw, "runs", 16)
    if runs < 1 or n < 1:
        raise UsageError("--runs and --n must be positive")
    run_stoq(
        out, target, n, _stoq_section(args, raw), runs,
        _pick(args.seed, raw, "seed", 0),
        _pick(args.tau, raw, "tau", hamsim.DEFAULT_TAU),
        _pick(args.eps_frac, raw, "eps_frac", 0.2),
        _pick(args.epsilon_target, raw, "epsilon_target", None),
        _pick(args.workers, raw, "workers", 1),
    )


def _cmd_hamsim(args) -> None:
    raw = load_manifest(args.manifest)
    out = Path(args.out or raw.get("out") or ".")
    n = _pick(args.n, raw, "n_qubits", 2)
    if n not in hamsim.ISING_COEFFICIENTS:
        raise UsageError(f"no Ising coefficients for n={n}; choose from {sorted(hamsim.ISING_COEFFICIENTS)}")
    method = _pick(args.method, raw, "method", "all")
    methods = HAMSIM_METHODS if method == "all" else (method,)
    runs = _pick(args.runs, raw, "runs", 1)
    steps = _pick(args.steps, raw, "steps", 10)
    reps = _pick(args.reps, raw, "reps", 1000)
    if min(runs, steps, reps) < 1:
        raise UsageError("--runs, --steps and --reps must be positive")
    run_hamsim(
        out, n, methods, runs,
        _pick(args.seed, raw, "seed", 0),
        _pick(args.tau, raw, "tau", hamsim.DEFAULT_TAU),
        steps, reps, _stoq_section(args, raw),
        _pick(args.eps_frac, raw, "eps_frac", 0.2),
        _pick(args.workers, raw, "workers", 1),
    )


COMMANDS = {
    "generate": _cmd_generate,
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "stoq": _cmd_stoq,
    "hamsim": _cmd_hamsim,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"ravkit {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RunFailure, stoq.BudgetExceededError, formats.FormatError, OSError) as exc:
        print(f"ravkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
