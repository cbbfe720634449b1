"""Synthetic MPI software stacks and timing sweeps.

``generate_mpi_stack`` builds a layered repository: K applications that
depend on the virtual ``mpi`` through shared libraries, the ``mpich``
provider, R ABI-compatible ``mpiabi-NNN`` replicas that declare they can
replace ``mpich@3.4.3``, and a non-MPI control package ``py-shroud``.  The
cache holds every application built against mpich plus each replica.
"""

from __future__ import annotations

import csv
import gc
import io
import json
import random
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .buildcache import BuildCache
from .concretizer import SolveOptions, concretize
from .errors import SplicekitError
from .installer import stage_artifacts
from .parser import parse_constraint, parse_spec
from .repo import CanSplice, DependsOn, PackageDef, Provides, Repo, VariantDef
from .spec import BUILD, LINK_RUN
from .version import Version

MPICH_VERSION = "3.4.3"
CONTROL = "py-shroud"

CSV_COLUMNS = [
    "scenario",
    "request",
    "splice",
    "replicas",
    "repetition",
    "wall_time",
    "status",
    "builds",
    "version_penalty",
    "default_deviation",
    "splice_count",
]
SUMMARY_COLUMNS = ["scenario", "request", "splice", "replicas", "runs", "mean_wall_time", "stddev_wall_time", "builds", "splice_count", "status"]


@dataclass
class BenchScenario:
    scenario_id: str = "mpi-stack"
    apps: int = 8
    replicas: list[int] = field(default_factory=lambda: [1])
    splice: list[bool] = field(default_factory=lambda: [False, True])
    requests: Optional[list[str]] = None  # default: every app against a replica, plus the control
    repetitions: int = 10
    noise_packages: int = 0  # inflated-cache mode: unrelated packages built into the cache
    dep_density: float = 0.3
    variant_count: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if any(r < 0 for r in self.replicas):
            raise ValueError("replica counts must be >= 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.apps < 1:
            raise ValueError("at least one app is required")

    @classmethod
    def from_file(cls, path: str | Path) -> BenchScenario:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ValueError("scenario file must hold a JSON object")
        return cls(**doc)

    def to_dict(self) -> dict[str, object]:
        return asdict(self)


def replica_name(i: int) -> str:
    return f"mpiabi-{i:03d}"


def app_name(i: int) -> str:
    return f"app-{i:02d}"


def _pkg(name, versions, variants=(), deps=(), provides=(), splices=()) -> PackageDef:
    return PackageDef(
        name,
        tuple(Version.parse(v) for v in versions),
        tuple(variants),
        tuple(DependsOn(parse_constraint(s), parse_constraint(w) if w else None, k) for s, w, k in deps),
        tuple(Provides(v) for v in provides),
        tuple(CanSplice(parse_constraint(t)) for t in splices),
    )


def stack_packages(apps: int, replicas: int, noise: int = 0, dep_density: float = 0.3, variant_count: int = 1, seed: int = 0) -> list[PackageDef]:
    rng = random.Random(seed)
    pkgs = [
        _pkg("cmake", ["3.27.1", "3.20.0"]),
        _pkg("zlib", ["1.3.1", "1.2.13"], [VariantDef("pic", True)], [("cmake", None, BUILD)]),
        _pkg("mpich", [MPICH_VERSION], [VariantDef("pmi", "pmix", ("pmix", "slurm"))], [], ["mpi"]),
        _pkg("lib-core", ["2.1.0", "2.0.0"], [VariantDef("shared", True)], [("mpi", None, LINK_RUN), ("zlib", None, LINK_RUN), ("cmake", None, BUILD)]),
        _pkg("lib-io", ["1.4.0"], [], [("lib-core", None, LINK_RUN), ("mpi", None, LINK_RUN), ("cmake", None, BUILD)]),
        _pkg("lib-math", ["0.9.2", "0.9.1"], [VariantDef("openmp", False)], [("zlib", None, LINK_RUN), ("cmake", None, BUILD)]),
        _pkg(CONTROL, ["0.2.0"], [], [("lib-math", None, LINK_RUN), ("zlib", None, LINK_RUN)]),
    ]
    for i in range(replicas):
        pkgs.append(_pkg(replica_name(i), ["1.0"], [], [], ["mpi"], [f"mpich@{MPICH_VERSION}"]))
    for i in range(apps):
        lib = "lib-io" if i % 2 == 0 else "lib-core"
        deps = [("mpi", None, LINK_RUN), (lib, None, LINK_RUN), ("cmake", None, BUILD)]
        if i % 3 == 0:
            deps.append(("lib-math", None, LINK_RUN))
        variants = [VariantDef(f"opt{j}", j == 0) for j in range(variant_count)]
        pkgs.append(_pkg(app_name(i), ["1.1.0", "1.0.0"], variants, deps))
    for i in range(noise):
        deps = [("zlib", None, LINK_RUN)] if rng.random() < dep_density else []
        pkgs.append(_pkg(f"noise-{i:03d}", ["1.0"], [], deps))
    return pkgs


def generate_mpi_stack(
    apps: int = 8,
    replicas: int = 1,
    noise: int = 0,
    dep_density: float = 0.3,
    variant_count: int = 1,
    seed: int = 0,
    cache_path: str | Path | None = None,
) -> tuple[Repo, BuildCache]:
    repo = Repo.from_packages(stack_packages(apps, replicas, noise, dep_density, variant_count, seed))
    cache = BuildCache.open(cache_path) if cache_path is not None else BuildCache()
    cold = SolveOptions(reuse_enabled=False)
    # every app at every version against both zlib releases stands in for a site's build history
    requests = [
        f"{app_name(i)}@{v} ^mpich ^zlib@{z}" for i in range(apps) for v in ("1.1.0", "1.0.0") for z in ("1.3.1", "1.2.13")
    ]
    requests.append(CONTROL)
    requests += [replica_name(i) for i in range(replicas)]
    requests += [f"noise-{i:03d}" for i in range(noise)]
    for text in requests:
        spec = concretize(parse_spec(text), repo, None, cold).spec
        if spec.root not in cache:
            cache.push(spec, dependency_artifacts=stage_artifacts(spec))
    return repo, cache


def default_requests(s: BenchScenario, replicas: int) -> list[str]:
    if s.requests is not None:
        return list(s.requests)
    out = []
    for i in range(s.apps):
        out.append(f"{app_name(i)} ^{replica_name(i % replicas)}" if replicas else app_name(i))
    out.append(CONTROL)
    return out


def time_solve(request: str, repo: Repo, cache: BuildCache, splice: bool) -> tuple[float, dict[str, object]]:
    """Wall time of one solve, with the cyclic collector paused as timeit does.

    A collection pass costs time proportional to every live object, so
    leaving it on makes small solves look slower whenever the cache is big.
    """
    opts = SolveOptions(reuse_enabled=True, splice_enabled=splice)
    spec = parse_spec(request)
    was_enabled = gc.isenabled()
    gc.disable()
    start = time.perf_counter()
    try:
        result = concretize(spec, repo, cache, opts)
        elapsed = time.perf_counter() - start
    except SplicekitError as exc:
        return time.perf_counter() - start, {"status": type(exc).__name__}
    finally:
        if was_enabled:
            gc.enable()
    o = result.objective
    return elapsed, {
        "status": "ok",
        "builds": o.builds,
        "version_penalty": o.version_penalty,
        "default_deviation": o.default_deviation,
        "splice_count": o.splice_count,
    }


def run_scenario(s: BenchScenario) -> list[dict[str, object]]:
    """One row per (replica count, request, splice flag, repetition), in that order."""
    rows: list[dict[str, object]] = []
    for r in s.replicas:
        repo, cache = generate_mpi_stack(s.apps, r, s.noise_packages, s.dep_density, s.variant_count, s.seed)
        # build the solver's cached tables once, outside the timed region
        concretize(parse_spec(CONTROL), repo, cache, SolveOptions(splice_enabled=True))
        for request in default_requests(s, r):
            for splice in s.splice:
                for rep in range(s.repetitions):
                    elapsed, info = time_solve(request, repo, cache, splice)
                    row: dict[str, object] = {c: "" for c in CSV_COLUMNS}
                    row.update(
                        scenario=s.scenario_id,
                        request=request,
                        splice=int(splice),
                        replicas=r,
                        repetition=rep,
                        wall_time=f"{elapsed:.6f}",
                        **info,
                    )
                    rows.append(row)
    return rows


def summarize(rows: list[dict[str, object]]) -> list[dict[str, object]]:
    groups: dict[tuple, list[dict[str, object]]] = {}
    for row in rows:
        groups.setdefault((row["scenario"], row["request"], row["splice"], row["replicas"]), []).append(row)
    out = []
    for (scenario, request, splice, replicas), group in groups.items():
        times = [float(r["wall_time"]) for r in group]
        out.append(
            {
                "scenario": scenario,
                "request": request,
                "splice": splice,
                "replicas": replicas,
                "runs": len(group),
                "mean_wall_time": f"{statistics.fmean(times):.6f}",
                "stddev_wall_time": f"{statistics.stdev(times) if len(times) > 1 else 0.0:.6f}",
                "builds": group[0].get("builds", ""),
                "splice_count": group[0].get("splice_count", ""),
                "status": group[0]["status"],
            }
        )
    return out


def to_csv(rows: list[dict[str, object]], columns: list[str] = CSV_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in columns})
    return buf.getvalue()
