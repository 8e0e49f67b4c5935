"""Numba kernels vs the pure-numpy fallback on the same seeded workload.

Each backend runs in its own subprocess because the backend is chosen at
import time (``POPPROTO_NO_NUMBA``). The final configurations must agree, so
the benchmark doubles as an equivalence check.

    python benchmarks/bench_kernels.py --n 64 --steps 200000
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import hashlib, json, sys, time
from popproto import NUMBA_ENABLED, Simulation, make_stack
from popproto.apps import alternating_input
from popproto.graph import generate_random_bounded_degree_tree

stack_name, n, steps, seed = sys.argv[1], int(sys.argv[2]), int(sys.argv[3]), int(sys.argv[4])
g = generate_random_bounded_degree_tree(n, 4, seed)
stack = make_stack(stack_name)
config = stack.initial_configuration(g, {"majority": alternating_input(n)}, seed=seed, mode="random")
sim = Simulation(g, stack, config, seed)
sim.run(10)  # compile (or warm caches) outside the timed region
t0 = time.perf_counter()
sim.run(steps)
elapsed = time.perf_counter() - t0
digest = hashlib.sha256(b"".join(getattr(sim.config, f).tobytes() for f in sim.config.FIELDS)).hexdigest()
print(json.dumps({"numba": NUMBA_ENABLED, "seconds": elapsed, "digest": digest}))
"""


def run_backend(no_numba: bool, stack: str, n: int, steps: int, seed: int) -> dict:
    env = dict(os.environ, POPPROTO_NO_NUMBA="1" if no_numba else "0")
    out = subprocess.run([sys.executable, "-W", "ignore", "-c", WORKER, stack, str(n), str(steps), str(seed)],
                         env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--stack", default="full")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--steps", type=int, default=200_000)
    p.add_argument("--fallback-steps", type=int, help="steps for the fallback (default steps/20)")
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args(argv)
    slow_steps = args.fallback_steps or max(1, args.steps // 20)

    fast = run_backend(False, args.stack, args.n, args.steps, args.seed)
    slow = run_backend(True, args.stack, args.n, slow_steps, args.seed)
    check = run_backend(False, args.stack, args.n, slow_steps, args.seed)

    fast_rate = args.steps / fast["seconds"]
    slow_rate = slow_steps / slow["seconds"]
    print(f"stack={args.stack} n={args.n}")
    print(f"  numba   : {fast_rate:12.0f} steps/s  ({1e6 / fast_rate:.3f} us/step)")
    print(f"  fallback: {slow_rate:12.0f} steps/s  ({1e6 / slow_rate:.3f} us/step)")
    print(f"  speed-up: {fast_rate / slow_rate:.1f}x")
    same = check["digest"] == slow["digest"]
    print(f"  identical final state after {slow_steps} steps: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
