"""Benchmarks: optimization geometry comparison and kernel backend timing.

The geometry benchmark plants two or three pure states at fixed Wasserstein
separation, fixes the state trajectory to the truth, and times the
pure-state estimation under Bures-Wasserstein geometry against the
Euclidean-Cholesky baseline.  The kernel benchmark times the compiled core
against the NumPy fallback on the fixed-point hot path.
"""

from __future__ import annotations

import time

import numpy as np

from . import _backend, _kernels_np
from .estimator import (
    LineSearchConfig,
    ThetaObjective,
    euclidean_cholesky_search,
    initialize,
    riemannian_line_search,
)
from .model import ObjectiveConfig, window_series
from .synth import SynthSpec, generate_toy

BENCH_COLUMNS = ("d", "K", "repeat", "geometry", "iterations", "wall_ms", "final_cost")


def geometry_benchmark(
    dims,
    k_list,
    repeats: int,
    seed: int = 0,
    steps_per_ramp: int = 100,
    lam: float = 100.0,
    ls_cfg: LineSearchConfig | None = None,
) -> list[dict]:
    """Compare the two pure-state geometries on planted instances.

    For each (d, K, repeat): generate a ramp dataset (trajectory fixed to
    ground truth), initialize the pure states once, then run each line
    search from that same start.  Rows carry the columns in BENCH_COLUMNS;
    per-repeat seeds are seed + repeat index.
    """
    ls_cfg = ls_cfg or LineSearchConfig()
    rows = []
    for d in dims:
        for k in k_list:
            for rep in range(repeats):
                rep_seed = seed + rep
                spec = SynthSpec(
                    n_states=k,
                    dim=d,
                    t_steps=steps_per_ramp * (k - 1),
                    seed=rep_seed,
                )
                ds = generate_toy(spec)
                data = window_series(ds.y, ds.window_config)
                cfg = ObjectiveConfig(lam=lam)
                params = initialize(data, k, samples=ds.y, seed=rep_seed)
                # The trajectory is frozen at the ground truth: only the
                # pure states are estimated here.
                fun = ThetaObjective(
                    params.seq, params.hyper, data, cfg, params.prior, xs=ds.trajectory
                )
                for geometry, searcher in (
                    ("bw", riemannian_line_search),
                    ("cholesky", euclidean_cholesky_search),
                ):
                    start = time.perf_counter()
                    _, info = searcher(params.theta, fun, ls_cfg)
                    wall_ms = (time.perf_counter() - start) * 1e3
                    rows.append(
                        {
                            "d": d,
                            "K": k,
                            "repeat": rep,
                            "geometry": geometry,
                            "iterations": info["iterations"],
                            "wall_ms": wall_ms,
                            "final_cost": info["final_value"],
                        }
                    )
    return rows


def kernel_benchmark(
    dims=(2, 3, 5, 10),
    t_len: int = 1000,
    k: int = 3,
    iters: int = 10,
    repeats: int = 3,
    seed: int = 0,
) -> list[dict]:
    """Time the barycenter fixed point (forward + adjoint) on both backends."""
    rng = np.random.default_rng(seed)
    rows = []
    backends = [("numpy", _kernels_np)]
    if _backend.HAVE_EXT:
        from . import _core

        backends.append(("ext", _core))
    for d in dims:
        covs = np.stack([_random_spd(rng, d) for _ in range(k)])
        w = rng.dirichlet(np.ones(k), size=t_len)
        sbar = rng.standard_normal((t_len, d, d))
        sbar = 0.5 * (sbar + np.swapaxes(sbar, 1, 2))
        for name, mod in backends:
            best = np.inf
            for _ in range(repeats):
                start = time.perf_counter()
                _, _, stash = mod.barycenter_cov_fixpoint(w, covs, iters, True, False)
                mod.barycenter_cov_backward(w, covs, stash, sbar)
                best = min(best, time.perf_counter() - start)
            rows.append(
                {"d": d, "K": k, "T": t_len, "backend": name, "wall_ms": best * 1e3}
            )
    return rows


def _random_spd(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))[None, :]
    lam = rng.uniform(0.5, 1.5, size=d)
    return (q * lam) @ q.T


def main():  # pragma: no cover - convenience entry point
    rows = kernel_benchmark()
    print(f"{'d':>3} {'K':>3} {'T':>6} {'backend':>8} {'wall_ms':>10}")
    for r in rows:
        print(f"{r['d']:>3} {r['K']:>3} {r['T']:>6} {r['backend']:>8} {r['wall_ms']:>10.2f}")


if __name__ == "__main__":  # pragma: no cover
    main()
