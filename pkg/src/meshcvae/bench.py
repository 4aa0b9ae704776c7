"""Per-stage wall-clock benchmark over repetitions and thread counts."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .mesh import Mesh
from .pipeline import STAGES, DenoiseConfig, ModelBundle, denoise

# reference timing for the full CVAE pipeline with n=20 on a 100k-face model
REFERENCE_POINT = {"label": "CVAE_20_pp", "faces": 100_000, "seconds": 0.9872}


@dataclass
class BenchReport:
    n_faces: int
    # samples[threads][stage] -> list of seconds, one per repetition
    samples: dict[int, dict[str, list[float]]] = field(default_factory=dict)
    identical_output: bool = True
    reference: dict = field(default_factory=lambda: dict(REFERENCE_POINT))

    def stats(self, threads: int, stage: str) -> dict[str, float]:
        xs = self.samples[threads][stage]
        return {"min": min(xs), "mean": statistics.fmean(xs),
                "median": statistics.median(xs), "max": max(xs)}

    def total(self, threads: int) -> list[float]:
        per = self.samples[threads]
        return [sum(per[s][r] for s in STAGES) for r in range(len(per[STAGES[0]]))]

    def speedup(self, threads: int, stage: str | None = None, base: int = 1) -> float:
        if stage is None:
            return statistics.fmean(self.total(base)) / statistics.fmean(self.total(threads))
        return self.stats(base, stage)["mean"] / self.stats(threads, stage)["mean"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["stage", "threads", "repetition", "seconds"])
        for t, per in self.samples.items():
            for stage in STAGES:
                for r, s in enumerate(per[stage]):
                    w.writerow([stage, t, r, repr(float(s))])
        return buf.getvalue()

    def summary_lines(self) -> list[str]:
        lines = [f"faces={self.n_faces}"]
        for t in self.samples:
            for stage in STAGES:
                st = self.stats(t, stage)
                lines.append(f"threads={t} {stage:14s} min={st['min']:.4f} mean={st['mean']:.4f} "
                             f"median={st['median']:.4f} max={st['max']:.4f}")
            lines.append(f"threads={t} total mean={statistics.fmean(self.total(t)):.4f}")
        threads = list(self.samples)
        if 1 in self.samples:
            for t in threads:
                if t != 1:
                    lines.append(f"speedup threads={t} vs 1: {self.speedup(t):.2f}x")
        lines.append(f"identical output across thread counts: {self.identical_output}")
        ref = self.reference
        lines.append(f"reference: {ref['label']} on {ref['faces']} faces = {ref['seconds']} s")
        return lines


def benchmark(noisy: Mesh, bundle: ModelBundle, cfg: DenoiseConfig | None = None,
              repetitions: int = 10, thread_counts: Sequence[int] = (1,)) -> BenchReport:
    """Run the denoiser ``repetitions`` times per thread count and record stage times.

    Adjacency is rebuilt on every run (it is part of the descriptor stage), so
    each repetition starts from a fresh mesh object.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    cfg = cfg or bundle.config
    report = BenchReport(noisy.n_faces)
    reference_vertices = None
    for t in thread_counts:
        run_cfg = replace(cfg, threads=t)
        per = {s: [] for s in STAGES}
        for _ in range(repetitions):
            fresh = Mesh(noisy.vertices, noisy.faces)
            res = denoise(fresh, bundle, run_cfg)
            for s in STAGES:
                per[s].append(res.timings[s])
            if reference_vertices is None:
                reference_vertices = res.mesh.vertices
            elif not np.array_equal(reference_vertices, res.mesh.vertices):
                report.identical_output = False
        report.samples[int(t)] = per
    return report
