"""End-to-end acceptance gate.

One test per headline guarantee, run in order. Each prints a single
[PASS]/[FAIL] line with the measured numbers so a log scan shows the
whole contract at a glance. Tolerances are stated inline; oracle values
come from tests/oracles.py (quaternion geometry, extended-precision
summation), never from the code under test.
"""

import json
import math
import socket
import struct
import time

import numpy as np
import pytest
from click.testing import CliRunner

from kdpe import (DEFAULT_BANDWIDTHS, Action, Bandwidths, Method,
                  fig1_population, kde_log_density, kernel,
                  population_from_bytes, population_to_bytes, quantize_f32,
                  select, tr_kde_log_density, write_population)
from kdpe.cli import bench_run, main
from kdpe.geometry import expmap, geodesic_distance, logmap
from kdpe.heatmap import HeatmapRequest, evaluate_heatmap
from kdpe.server import SelectionClient, SelectionServer

import helpers
import oracles

# Extended-precision constants for the default bandwidths
# (sigma_pos=0.05, sigma_rot=0.25, sigma_grip=1.0):
#   C = (2 pi)^(-7/2) * (sigma_pos^3 sigma_rot^3 sigma_grip)^(-1)
SELF_KERNEL = 823.4560443664597
ONE_SIGMA_FACTOR = math.exp(-0.5)


def criterion(capsys, name: str, ok: bool, detail: str):
    with capsys.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


def rel_err(value: float, reference: float) -> float:
    """Relative error, falling back to absolute near zero."""
    return abs(value - reference) / max(1.0, abs(reference))


class TestAcceptance:
    def test_c1_so3_oracle_equivalence(self, capsys):
        rng = np.random.default_rng(1001)
        start = time.perf_counter()
        worst_geo = 0.0
        worst_exp = 0.0
        worst_log = 0.0
        for _ in range(10_000):
            ra = oracles.random_rotation(rng)
            rb = oracles.random_rotation(rng)
            worst_geo = max(worst_geo,
                            abs(geodesic_distance(ra, rb)
                                - oracles.geodesic(ra, rb)))
            worst_exp = max(worst_exp,
                            float(np.max(np.abs(expmap(logmap(ra)) - ra))))
            w = rng.normal(size=3)
            w *= rng.uniform(0.0, math.pi - 1e-6) / np.linalg.norm(w)
            worst_log = max(worst_log,
                            float(np.max(np.abs(logmap(expmap(w)) - w))))
        elapsed = time.perf_counter() - start
        ok = worst_geo < 1e-9 and worst_exp < 1e-9 and worst_log < 1e-9 \
            and elapsed < 5.0
        criterion(capsys, "C1 SO(3) oracle equivalence", ok,
                  f"10000 pairs, max geodesic err {worst_geo:.2e}, "
                  f"exp(log(R)) err {worst_exp:.2e}, "
                  f"log(exp(w)) err {worst_log:.2e} (tol 1e-9), "
                  f"{elapsed:.2f}s (< 5s)")

    def test_c2_kernel_self_value(self, capsys):
        h = DEFAULT_BANDWIDTHS
        rng = np.random.default_rng(1002)
        base = helpers.random_action(rng)
        self_err = rel_err(kernel(base, base, h), SELF_KERNEL)

        offsets = []
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = h.sigma_pos
            offsets.append(Action(base.position + step, base.rotation,
                                  base.gripper))
        for axis in range(3):
            w = np.zeros(3)
            w[axis] = h.sigma_rot
            offsets.append(Action(base.position, base.rotation @ expmap(w),
                                  base.gripper))
        offsets.append(Action(base.position, base.rotation,
                              base.gripper + h.sigma_grip))
        k0 = kernel(base, base, h)
        worst_ratio = max(rel_err(kernel(other, base, h) / k0,
                                  ONE_SIGMA_FACTOR) for other in offsets)
        ok = self_err < 1e-9 and worst_ratio < 1e-12
        criterion(capsys, "C2 kernel self-value", ok,
                  f"k(a,a) vs {SELF_KERNEL} rel err {self_err:.2e} "
                  f"(tol 1e-9); 7 one-sigma offsets vs e^-0.5 "
                  f"worst rel err {worst_ratio:.2e} (tol 1e-12)")

    def test_c3_kde_oracle_equivalence(self, capsys):
        rng = np.random.default_rng(1003)
        start = time.perf_counter()
        worst_kde = 0.0
        worst_tr = 0.0
        for _ in range(100):
            n = int(rng.integers(1, 9))
            t = int(rng.integers(1, 5))
            pop = helpers.random_population(rng, n=n, t=t)
            triples = helpers.as_triples(pop)
            step = int(rng.integers(0, t))
            actions = [traj.actions[step] for traj in pop.trajectories]
            step_triples = [traj[step] for traj in triples]
            for query, q_triple in zip(actions, step_triples):
                got = kde_log_density(query, actions, DEFAULT_BANDWIDTHS)
                want = float(oracles.mp_kde_log_density(q_triple,
                                                        step_triples,
                                                        DEFAULT_BANDWIDTHS))
                worst_kde = max(worst_kde, rel_err(got, want))
            for i in range(n):
                got = tr_kde_log_density(i, pop, DEFAULT_BANDWIDTHS)
                want = float(oracles.mp_tr_log_density(i, triples,
                                                       DEFAULT_BANDWIDTHS))
                worst_tr = max(worst_tr, rel_err(got, want))
        elapsed = time.perf_counter() - start
        ok = worst_kde < 1e-9 and worst_tr < 1e-9 and elapsed < 10.0
        criterion(capsys, "C3 KDE oracle equivalence", ok,
                  f"100 populations (N<=8, T<=4), kde worst rel err "
                  f"{worst_kde:.2e}, tr worst rel err {worst_tr:.2e} "
                  f"(tol 1e-9), {elapsed:.2f}s (< 10s)")

    def test_c4_selection_correctness(self, capsys):
        kdpe_ok = 0
        ood_ok = 0
        invariant_ok = 0
        cases = 500
        for seed in range(cases):
            pop, outlier = helpers.outlier_population(seed)
            picked = select(pop, Method.KDPE)
            if picked.selected_index != outlier:
                kdpe_ok += 1
            if select(pop, Method.KDPE_OOD).selected_index == outlier:
                ood_ok += 1
            bare = select(pop, Method.KDPE, include_normalizer=False)
            bare_ood = select(pop, Method.KDPE_OOD, include_normalizer=False)
            if bare.selected_index == picked.selected_index \
                    and bare_ood.selected_index == outlier:
                invariant_ok += 1
        ok = kdpe_ok == cases and ood_ok == cases and invariant_ok == cases
        criterion(capsys, "C4 selection correctness", ok,
                  f"kdpe avoids outlier {kdpe_ok}/{cases}, kdpe_ood picks it "
                  f"{ood_ok}/{cases}, normalizer-drop invariance "
                  f"{invariant_ok}/{cases}")

    def test_c5_heatmap_reproduction(self, capsys):
        pop = fig1_population()
        h = DEFAULT_BANDWIDTHS
        rotations = pop.rotations[:, 0]
        grippers = pop.grippers[:, 0]
        positions = pop.positions[:, 0]
        hits = 0
        configs = []
        for angle_deg in (0.0, 30.0, 60.0, 90.0):
            for grip in (1.0, -1.0):
                req = HeatmapRequest(angle=math.radians(angle_deg),
                                     gripper=grip)
                result = evaluate_heatmap(pop, req)
                probe_rot = expmap(np.array([0.0, 0.0,
                                             math.radians(angle_deg)]))
                # Independent pick of the matching cluster: the action
                # whose rotation and gripper weights dominate.
                weights = [
                    math.exp(-oracles.geodesic(probe_rot, rotations[j]) ** 2
                             / (2 * h.sigma_rot ** 2)
                             - (grip - grippers[j]) ** 2
                             / (2 * h.sigma_grip ** 2))
                    for j in range(pop.n)
                ]
                best = int(np.argmax(weights))
                dx = (req.x_max - req.x_min) / req.resolution_x
                dy = (req.y_max - req.y_min) / req.resolution_y
                want_col = int((positions[best, 0] - req.x_min) / dx)
                want_row = int((positions[best, 1] - req.y_min) / dy)
                got = result["argmax"]
                hit = (abs(got["row"] - want_row) <= 1
                       and abs(got["col"] - want_col) <= 1)
                hits += hit
                configs.append(f"{angle_deg:g}deg/"
                               f"{'open' if grip > 0 else 'closed'}:"
                               f"{'ok' if hit else 'MISS'}")
        ok = hits == 8
        criterion(capsys, "C5 heatmap qualitative reproduction", ok,
                  f"{hits}/8 probe configs peak within one cell of the "
                  f"matching cluster on a 64x64 grid ({', '.join(configs)})")

    def test_c6_latency_bounds(self, capsys):
        doc = bench_run(n=100, t=8, repeats=50, warmup=10, seed=0)
        kde_ms = doc["kde_ms"]["mean"]
        tr_ms = doc["tr_kde_ms"]["mean"]
        machine = doc["machine"]
        ok = kde_ms < 3.0 and tr_ms < 30.0
        criterion(capsys, "C6 latency bounds", ok,
                  f"N=100 T=8 mean kde {kde_ms:.3f}ms (< 3ms), "
                  f"tr {tr_ms:.3f}ms (< 30ms) on {machine['platform']}, "
                  f"{machine['cpu_count']} cpus, numpy {machine['numpy']}")

    def test_c7_round_trips_and_fuzz(self, capsys, tmp_path):
        rng = np.random.default_rng(1007)

        bitwise_ok = 0
        cases = 1000
        for i in range(cases):
            n = int(rng.integers(1, 7))
            t = int(rng.integers(1, 5))
            pop = helpers.random_population(rng, n=n, t=t,
                                            with_payloads=bool(i % 3 == 0))
            if i % 4 == 0:
                pop = quantize_f32(pop)
            blob = population_to_bytes(pop)
            back = population_from_bytes(blob)
            if population_to_bytes(back) == blob and np.array_equal(
                    back.scalar_array(), pop.scalar_array()):
                bitwise_ok += 1

        server = SelectionServer(("127.0.0.1", 0))
        server.serve_background()
        fuzz_replies = 0
        fuzz_frames = 1000
        try:
            client = SelectionClient("127.0.0.1", server.port, timeout=30.0)
            template = population_to_bytes(
                helpers.random_population(rng, n=3, t=2))
            from kdpe.server import encode_frame
            valid = encode_frame(population_from_bytes(template))
            for i in range(fuzz_frames):
                if i % 10 == 0:
                    frame = bytearray(valid)
                    for _ in range(int(rng.integers(1, 6))):
                        frame[int(rng.integers(0, len(frame)))] = int(
                            rng.integers(0, 256))
                    frame = bytes(frame)
                else:
                    frame = rng.bytes(int(rng.integers(0, 600)))
                client.send_raw(frame)
                reply = client.read_reply()
                if isinstance(reply.get("ok"), bool):
                    fuzz_replies += 1
            final = client.request(population_from_bytes(template))
            survived = final["ok"]
            client.close()

            cli_match = 0
            cli_cases = 100
            runner = CliRunner()
            methods = [("kdpe", Method.KDPE), ("kdpe-ood", Method.KDPE_OOD),
                       ("uniform", Method.UNIFORM), ("tr-kdpe", Method.TR_KDPE)]
            client = SelectionClient("127.0.0.1", server.port, timeout=30.0)
            for case in range(cli_cases):
                pop, _ = helpers.outlier_population(seed=2000 + case)
                path = tmp_path / f"fixture-{case}.kdpe"
                write_population(pop, path)
                flag, method = methods[case % 4]
                seed = case
                result = runner.invoke(main, ["select", str(path), "--method",
                                              flag, "--seed", str(seed)],
                                       catch_exceptions=False)
                assert result.exit_code == 0, result.output
                cli_report = json.loads(result.output)["report"]
                wire_pop = population_from_bytes(path.read_bytes())
                server_report = client.request(wire_pop, method,
                                               seed=seed)["report"]
                if cli_report == server_report:
                    cli_match += 1
            client.close()
        finally:
            server.shutdown()
            server.server_close()

        ok = (bitwise_ok == cases and fuzz_replies == fuzz_frames and survived
              and cli_match == cli_cases)
        criterion(capsys, "C7 format and server round trips", ok,
                  f"bitwise write/read {bitwise_ok}/{cases}, fuzz replies "
                  f"{fuzz_replies}/{fuzz_frames} with server alive, "
                  f"cli/server report equality {cli_match}/{cli_cases}")
