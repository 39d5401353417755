"""Command-line tool: selection, scoring, heatmaps, benchmarks, serving.

Bandwidth resolution order everywhere: explicit flags beat the
KDPE_SIGMA_POS / KDPE_SIGMA_ROT / KDPE_SIGMA_GRIP environment variables,
which beat a --config JSON file, which beats the built-in defaults. All
machine-facing output is JSON on stdout; errors are structured JSON on
stderr with a nonzero exit code.
"""

from __future__ import annotations

import base64
import functools
import json
import os
import platform
import sys
import time

import click
import numpy as np

from . import population as pop_mod
from .density import Method, select, score_population, tr_score_population
from .errors import FormatError, KdpeError
from .heatmap import HeatmapRequest, evaluate_heatmap
from .kernel import DEFAULT_BANDWIDTHS, Bandwidths
from .population import (MixtureSpec, fig1_population, generate,
                         population_to_json_dict, quantize_f32,
                         read_population, write_population)
from .server import DEFAULT_MAX_FRAME, DEFAULT_PORT, FacadeServer, SelectionServer

_SIGMA_ENV = {
    "sigma_pos": "KDPE_SIGMA_POS",
    "sigma_rot": "KDPE_SIGMA_ROT",
    "sigma_grip": "KDPE_SIGMA_GRIP",
}


def resolve_bandwidths(config_path: str | None = None,
                       sigma_pos: float | None = None,
                       sigma_rot: float | None = None,
                       sigma_grip: float | None = None) -> Bandwidths:
    """Merge defaults, config file, environment, and flags (flags win)."""
    values = DEFAULT_BANDWIDTHS.to_dict()
    if config_path is not None:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"cannot read config {config_path}: {e}") from e
        if not isinstance(doc, dict):
            raise FormatError("config must be a JSON object")
        for key in values:
            if key in doc:
                values[key] = float(doc[key])
    for key, env in _SIGMA_ENV.items():
        raw = os.environ.get(env)
        if raw is not None and raw != "":
            try:
                values[key] = float(raw)
            except ValueError as e:
                raise FormatError(f"{env} is not a number: {raw!r}") from e
    for key, flag in (("sigma_pos", sigma_pos), ("sigma_rot", sigma_rot),
                      ("sigma_grip", sigma_grip)):
        if flag is not None:
            values[key] = flag
    try:
        return Bandwidths(**values)
    except ValueError as e:
        raise FormatError(str(e)) from e


def _bandwidth_options(f):
    f = click.option("--config", "config_path", default=None,
                     type=click.Path(exists=True, dir_okay=False),
                     help="JSON file with sigma_pos / sigma_rot / sigma_grip.")(f)
    f = click.option("--sigma-grip", type=float, default=None,
                     help="Gripper bandwidth (default 1.0).")(f)
    f = click.option("--sigma-rot", type=float, default=None,
                     help="Rotation bandwidth in radians (default 0.25).")(f)
    f = click.option("--sigma-pos", type=float, default=None,
                     help="Position bandwidth in meters (default 0.05).")(f)
    return f


def _structured_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except KdpeError as e:
            click.echo(json.dumps({"ok": False,
                                   "error": {"type": type(e).__name__,
                                             "message": str(e)}}), err=True)
            sys.exit(1)
    return wrapper


@click.group()
@click.version_option(package_name="kdpe")
def main():
    """Density-based best-of-N selection over trajectory populations."""


@main.command("select")
@click.argument("population_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["kdpe", "kdpe-ood", "uniform",
                                             "tr-kdpe"]), default="kdpe",
              help="Selection policy.")
@click.option("--step", type=int, default=None,
              help="Trajectory step to score (default: last executed step).")
@_bandwidth_options
@click.option("--seed", type=int, default=0,
              help="Seed for the uniform baseline draw.")
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json")
@_structured_errors
def cmd_select(population_file, method, step, sigma_pos, sigma_rot,
               sigma_grip, config_path, seed, fmt):
    """Score a population file and print the selected trajectory."""
    h = resolve_bandwidths(config_path, sigma_pos, sigma_rot, sigma_grip)
    pop = read_population(population_file)
    start = time.perf_counter()
    report = select(pop, Method.parse(method), step=step, h=h, seed=seed)
    elapsed_ms = (time.perf_counter() - start) * 1e3
    if fmt == "csv":
        click.echo("index,log_density,selected")
        for i, v in enumerate(report.log_densities):
            click.echo(f"{i},{v!r},{int(i == report.selected_index)}")
        return
    payload = pop.trajectories[report.selected_index].payload
    click.echo(json.dumps({
        "ok": True,
        "report": report.to_dict(),
        "n": pop.n,
        "t": pop.t,
        "observation_id": pop.observation_id,
        "seed": seed,
        "payload_b64": base64.b64encode(payload).decode("ascii") if payload else None,
        "elapsed_ms": elapsed_ms,
    }))


@main.command("score")
@click.argument("population_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["kdpe", "tr-kdpe"]),
              default="kdpe",
              help="Per-step densities (kdpe) or whole-trajectory (tr-kdpe).")
@click.option("--step", type=int, default=None)
@_bandwidth_options
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json")
@_structured_errors
def cmd_score(population_file, method, step, sigma_pos, sigma_rot, sigma_grip,
              config_path, fmt):
    """Print per-trajectory log-densities without selecting."""
    h = resolve_bandwidths(config_path, sigma_pos, sigma_rot, sigma_grip)
    pop = read_population(population_file)
    if method == "tr-kdpe":
        scores = tr_score_population(pop, h)
        scored_step = -1
    else:
        from .density import _resolve_step
        scored_step = _resolve_step(pop, step)
        scores = score_population(pop, scored_step, h)
    if fmt == "csv":
        click.echo("index,log_density")
        for i, v in enumerate(scores):
            click.echo(f"{i},{v!r}")
        return
    click.echo(json.dumps({
        "ok": True,
        "log_densities": [float(v) for v in scores],
        "method": method.replace("-", "_"),
        "scored_step": scored_step,
        "bandwidths": h.to_dict(),
    }))


@main.command("heatmap")
@click.argument("population_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--x-min", type=float, default=-0.25)
@click.option("--x-max", type=float, default=0.25)
@click.option("--y-min", type=float, default=-0.25)
@click.option("--y-max", type=float, default=0.25)
@click.option("--resolution", type=int, default=64,
              help="Grid cells per axis (square grid).")
@click.option("--resolution-x", type=int, default=None)
@click.option("--resolution-y", type=int, default=None)
@click.option("--angle", type=float, default=0.0,
              help="Probe rotation about the plane normal, radians.")
@click.option("--gripper", type=float, default=1.0,
              help="Probe gripper value.")
@click.option("--plane", type=click.Choice(["xy", "xz", "yz"]), default="xy")
@click.option("--offset", type=float, default=0.0,
              help="Out-of-plane coordinate of the probe plane.")
@click.option("--step", type=int, default=None)
@_bandwidth_options
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]),
              default="json")
@_structured_errors
def cmd_heatmap(population_file, x_min, x_max, y_min, y_max, resolution,
                resolution_x, resolution_y, angle, gripper, plane, offset,
                step, sigma_pos, sigma_rot, sigma_grip, config_path, fmt):
    """Sweep a probe action over a planar grid and print the density field."""
    h = resolve_bandwidths(config_path, sigma_pos, sigma_rot, sigma_grip)
    pop = read_population(population_file)
    try:
        req = HeatmapRequest(
            x_min=x_min, x_max=x_max, y_min=y_min, y_max=y_max,
            resolution_x=resolution_x or resolution,
            resolution_y=resolution_y or resolution,
            angle=angle, gripper=gripper, plane=plane, offset=offset,
            step=step, bandwidths=h,
        )
    except ValueError as e:
        raise click.UsageError(str(e)) from e
    result = evaluate_heatmap(pop, req)
    if fmt == "csv":
        cols = result["cols"]
        values = result["values"]
        for row in range(result["rows"]):
            cells = values[row * cols:(row + 1) * cols]
            click.echo(",".join(repr(v) for v in cells))
        return
    click.echo(json.dumps(result))


def _machine_info() -> dict:
    return {
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "cpu_count": os.cpu_count(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def _bench_spec() -> MixtureSpec:
    from . import geometry
    from .kernel import Action
    modes = []
    for weight, center, angle in ((0.4, (0.0, 0.0, 0.1), 0.0),
                                  (0.3, (0.2, -0.1, 0.1), 0.9),
                                  (0.3, (-0.2, 0.1, 0.2), -1.2)):
        mean = Action(position=np.array(center),
                      rotation=geometry.rotation_about_z(angle),
                      gripper=1.0 if weight > 0.35 else -1.0)
        modes.append(pop_mod.MixtureMode(weight=weight, mean=mean,
                                         spread_pos=0.02, spread_rot=0.1,
                                         spread_grip=0.05))
    return MixtureSpec(modes=tuple(modes))


def _timing_stats(samples_ms: list[float]) -> dict:
    arr = np.asarray(samples_ms)
    return {
        "mean": float(arr.mean()),
        "p50": float(np.percentile(arr, 50)),
        "p95": float(np.percentile(arr, 95)),
        "min": float(arr.min()),
        "max": float(arr.max()),
    }


def bench_run(n: int = 100, t: int = 8, repeats: int = 200, warmup: int = 20,
              seed: int = 0, h: Bandwidths = DEFAULT_BANDWIDTHS) -> dict:
    """Time per-step and whole-trajectory scoring on a synthetic population."""
    pop = generate(_bench_spec(), n, t, seed)
    kde_ms: list[float] = []
    tr_ms: list[float] = []
    for i in range(warmup + repeats):
        start = time.perf_counter()
        score_population(pop, None, h)
        kde_elapsed = (time.perf_counter() - start) * 1e3
        start = time.perf_counter()
        tr_score_population(pop, h)
        tr_elapsed = (time.perf_counter() - start) * 1e3
        if i >= warmup:
            kde_ms.append(kde_elapsed)
            tr_ms.append(tr_elapsed)
    return {
        "ok": True,
        "n": n,
        "t": t,
        "repeats": repeats,
        "warmup": warmup,
        "kde_ms": _timing_stats(kde_ms),
        "tr_kde_ms": _timing_stats(tr_ms),
        "machine": _machine_info(),
    }


@main.command("bench")
@click.option("--n", type=int, default=100, help="Population size.")
@click.option("--t", type=int, default=8, help="Trajectory length.")
@click.option("--repeats", type=int, default=200)
@click.option("--warmup", type=int, default=20)
@click.option("--seed", type=int, default=0)
@_bandwidth_options
@_structured_errors
def cmd_bench(n, t, repeats, warmup, seed, sigma_pos, sigma_rot, sigma_grip,
              config_path):
    """Measure scoring latency and print timing statistics with machine info."""
    h = resolve_bandwidths(config_path, sigma_pos, sigma_rot, sigma_grip)
    click.echo(json.dumps(bench_run(n, t, repeats, warmup, seed, h)))


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=DEFAULT_PORT,
              help="Binary selection protocol port (0 = ephemeral).")
@click.option("--http-port", type=int, default=None,
              help="Also serve the JSON facade on this port.")
@click.option("--static-dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="Static files served by the JSON facade (UI build).")
@click.option("--max-frame", type=int, default=DEFAULT_MAX_FRAME,
              help="Reject frames larger than this many bytes.")
@_structured_errors
def cmd_serve(host, port, http_port, static_dir, max_frame):
    """Run the selection server until interrupted."""
    server = SelectionServer((host, port), max_frame=max_frame)
    endpoints = {"binary": {"host": host, "port": server.port}}
    facade = None
    if http_port is not None:
        facade = FacadeServer((host, http_port), static_dir=static_dir,
                              max_body=max_frame)
        facade.serve_background()
        endpoints["http"] = {"host": host, "port": facade.port}
    click.echo(json.dumps({"ok": True, "serving": endpoints}), nl=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        if facade is not None:
            facade.shutdown()
            facade.server_close()


@main.command("generate")
@click.argument("spec_file", type=click.Path(exists=True, dir_okay=False))
@click.argument("output", type=click.Path(dir_okay=False, writable=True))
@click.option("--n", type=int, default=100, help="Trajectories to draw.")
@click.option("--t", type=int, default=8, help="Actions per trajectory.")
@click.option("--seed", type=int, default=0)
@click.option("--precision", type=click.Choice(["f64", "f32"]), default="f64")
@click.option("--mirror-out", default=None,
              type=click.Path(dir_okay=False, writable=True),
              help="Also write the JSON mirror here.")
@_structured_errors
def cmd_generate(spec_file, output, n, t, seed, precision, mirror_out):
    """Draw a synthetic population from a mixture spec and write it."""
    try:
        with open(spec_file, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read spec {spec_file}: {e}") from e
    spec = MixtureSpec.from_json_dict(doc)
    pop = generate(spec, n, t, seed)
    if precision == "f32":
        pop = quantize_f32(pop)
    written = write_population(pop, output)
    if mirror_out is not None:
        with open(mirror_out, "w", encoding="utf-8") as f:
            json.dump(population_to_json_dict(pop), f)
    click.echo(json.dumps({"ok": True, "path": output, "written_bytes": written,
                           "n": pop.n, "t": pop.t, "seed": seed,
                           "precision": precision}))


@main.command("fig1")
@click.option("--out", default=None,
              type=click.Path(dir_okay=False, writable=True),
              help="Write the binary population file here.")
@click.option("--json-out", default=None,
              type=click.Path(dir_okay=False, writable=True),
              help="Write the JSON mirror here.")
@_structured_errors
def cmd_fig1(out, json_out):
    """Emit the six-action planar demo population (JSON mirror to stdout)."""
    pop = fig1_population()
    wrote = {}
    if out is not None:
        wrote["written_bytes"] = write_population(pop, out)
        wrote["path"] = out
    if json_out is not None:
        with open(json_out, "w", encoding="utf-8") as f:
            json.dump(population_to_json_dict(pop), f)
        wrote["json_path"] = json_out
    if wrote:
        click.echo(json.dumps({"ok": True, **wrote}))
    else:
        click.echo(json.dumps(population_to_json_dict(pop)))


if __name__ == "__main__":
    main()
