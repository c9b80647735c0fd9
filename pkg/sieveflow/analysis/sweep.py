"""ε-sweeps: one perforated solve per level, limit distances and decay fits."""
import csv
import io
import logging
import math
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Final, Iterable, Sequence

import numpy as np
from skfem import asm

from ..core.errors import (
    ConfigurationError, NumericalError, OutputError, PartialSweepError, SieveflowError,
)
from ..core.procmanager import ProcessManager
from ..core.utils import Stopwatch, atomic_write_json, atomic_write_text
from ..discretization import BCProfile, BodyForce, ZeroForce, assemble, build_space
from ..discretization.assembly import mass
from ..geometry import LayoutStrategy, PerforationParams, PipeParams, generate_layout
from ..meshing import MeshResolution, Region, SieveMesh, mesh_sieve_pipe, mesh_to_text, refine_mesh
from ..solve import (
    FlowState, SolverConfig, interpolate_bernoulli, interpolate_velocity, solve_limit_problems,
    solve_stationary, transfer_state,
)
from .constants import ConstantsProcess, FunctionalConstants, estimate_constants
from .flux import end_flux, flux_profile, trace_norm_sigma
from .norms import energy, energy_identity_residual, velocity_norms, vector_norms
from .pressure import pressure_split

_logger = logging.getLogger("sweep")

SWEEP_FORMAT: Final[str] = "sieveflow-sweep/1"
FITTED: Final[tuple[str, ...]] = ("flux", "trace")
BOUNDED: Final[tuple[str, ...]] = ("energy", "P_minus", "P_plus", "phi_minus", "phi_plus")


@dataclass(frozen=True)
class SweepRow:
    """Scalar diagnostics of one ε level. Constants are NaN when not estimated."""
    epsilon: float
    r_eps: float
    n_holes: int
    energy: float
    flux: float
    flux_spread: float
    trace: float
    phi_minus: float
    phi_plus: float
    P_minus: float
    P_plus: float
    dist_minus: float
    dist_plus: float
    dist_phi_minus: float
    dist_phi_plus: float
    interp_gap: float
    energy_residual: float
    iterations: int
    final_residual: float
    cells: int
    trace_const: float = math.nan
    poincare_const: float = math.nan
    bogovskii_lower: float = math.nan

    @classmethod
    def columns(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in self.columns()}

    def with_constants(self, constants: FunctionalConstants) -> "SweepRow":
        return replace(self, trace_const=constants.trace_const, poincare_const=constants.poincare_const,
                       bogovskii_lower=constants.bogovskii_lower)


@dataclass(frozen=True)
class DecayFit:
    """Least-squares line ``log y = slope · log r_ε + intercept``."""
    quantity: str
    slope: float
    intercept: float
    r2: float
    residual_std: float
    points: int

    def to_dict(self) -> dict[str, Any]:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "residual_std": self.residual_std, "points": self.points}


def fit_power_law(r: Sequence[float], values: Sequence[float], quantity: str) -> DecayFit | None:
    """Fit ``|values| ∝ r^slope``; None with fewer than two positive samples."""
    r = np.asarray(r, dtype=float)
    y = np.abs(np.asarray(values, dtype=float))
    keep = (r > 0.0) & (y > 0.0) & np.isfinite(y)
    if np.count_nonzero(keep) < 2:
        return None
    x, y = np.log(r[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual ** 2)) / total if total > 0.0 else 1.0
    return DecayFit(quantity, float(slope), float(intercept), r2, float(np.std(residual)), int(x.size))


def decay_dominance(r: Sequence[float], values: Sequence[float]) -> dict[str, float] | None:
    """``max |y|/√r`` and the max/min ratio of ``|y|/√r`` over the sweep."""
    r = np.asarray(r, dtype=float)
    if r.size == 0:
        return None
    scaled = np.abs(np.asarray(values, dtype=float)) / np.sqrt(r)
    lo = float(np.min(scaled))
    return {"constant": float(np.max(scaled)), "ratio": float(np.max(scaled)) / lo if lo > 0.0 else math.inf}


def uniform_bound(values: Sequence[float]) -> dict[str, float] | None:
    """Spread of ``|y|`` over the sweep and how far the last level exceeds the earlier maximum.

    ``ratio`` is max/min; ``growth`` is the last value over the maximum of the
    preceding ones (NaN for a single level).
    """
    y = np.abs(np.asarray(values, dtype=float))
    if y.size == 0:
        return None
    lo, hi = float(np.min(y)), float(np.max(y))
    growth = float(y[-1]) / float(np.max(y[:-1])) if y.size > 1 and np.max(y[:-1]) > 0.0 else math.nan
    return {"ratio": hi / lo if lo > 0.0 else math.inf, "growth": growth}


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SweepRow, ...]
    provenance: dict[str, Any] = field(default_factory=dict)
    config_hash: str | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(row, name) for row in self.rows], dtype=float)

    @property
    def fits(self) -> dict[str, DecayFit | None]:
        r = self.column("r_eps")
        return {q: fit_power_law(r, self.column(q), q) for q in FITTED}

    @property
    def dominance(self) -> dict[str, dict[str, float] | None]:
        r = self.column("r_eps")
        return {q: decay_dominance(r, self.column(q)) for q in FITTED}

    @property
    def uniform_bounds(self) -> dict[str, dict[str, float] | None]:
        return {q: uniform_bound(self.column(q)) for q in BOUNDED}

    def with_config_hash(self, config_hash: str) -> "SweepReport":
        return replace(self, config_hash=config_hash)

    def wide_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(SweepRow.columns())
        for row in self.rows:
            writer.writerow(_fmt(v) for v in row.to_dict().values())
        return buf.getvalue()

    def long_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("epsilon", "quantity", "value"))
        for row in self.rows:
            for name, value in row.to_dict().items():
                if name != "epsilon":
                    writer.writerow((_fmt(row.epsilon), name, _fmt(value)))
        return buf.getvalue()

    def summary(self) -> dict[str, Any]:
        return {
            "format": SWEEP_FORMAT,
            "config_hash": self.config_hash,
            "epsilons": [row.epsilon for row in self.rows],
            "fits": {q: fit.to_dict() if fit else None for q, fit in self.fits.items()},
            "dominance": self.dominance,
            "uniform_bounds": self.uniform_bounds,
            "provenance": self.provenance,
        }

    def write(self, out_dir: Path) -> None:
        out_dir = Path(out_dir)
        atomic_write_text(out_dir / "sweep.csv", self.wide_csv())
        atomic_write_text(out_dir / "sweep_long.csv", self.long_csv())
        atomic_write_json(out_dir / "summary.json", self.summary())
        _logger.info(f"[WRITE] sweep report with {len(self.rows)} rows to {out_dir}")

    @classmethod
    def read_csv(cls, path: Path) -> "SweepReport":
        """Rows of a wide CSV written by ``wide_csv``."""
        try:
            with Path(path).open(newline="", encoding="utf-8") as f:
                records = list(csv.DictReader(f))
        except OSError as e:
            raise OutputError(f"Cannot read {path}: {e}") from e
        kinds = {f.name: f.type for f in fields(SweepRow)}
        try:
            rows = tuple(SweepRow(**{k: int(v) if kinds[k] in (int, "int") else float(v) for k, v in r.items()})
                         for r in records)
        except (KeyError, TypeError, ValueError) as e:
            raise OutputError(f"{path}: malformed sweep CSV ({e})") from e
        return cls(rows)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True, eq=False)
class _LimitReference:
    """A limit state on the common refined mesh of its half pipe."""
    region: Region
    state: FlowState
    space: Any
    u: np.ndarray
    phi: np.ndarray
    m: Any
    k: Any
    mp: Any
    gap: float

    @classmethod
    def build(cls, state: FlowState) -> "_LimitReference":
        region = Region.MINUS if state.space.profile is BCProfile.HALF_MINUS else Region.PLUS
        space = build_space(refine_mesh(state.mesh), state.space.profile)
        u = interpolate_velocity(state, space, enforce=False)
        phi = interpolate_bernoulli(state, space)
        system = assemble(space, 0.0, 0.0)
        m, k = system.scalar_mass, system.scalar_stiffness
        own = velocity_norms(state)["h1"]
        fine = vector_norms(space.components(u), m, k)["h1"]
        return cls(region, state, space, u, phi, m, k, asm(mass, space.pbasis), abs(own - fine))

    def distances(self, state: FlowState) -> tuple[float, float]:
        """``‖u_ε − u±‖_{H¹(Ω±)}`` and ``‖Φ_ε − Φ±‖_{L²(Ω±)}``.

        ``state`` is read from this side of the sieve.
        """
        du = interpolate_velocity(state, self.space, enforce=False, side=self.region) - self.u
        dphi = interpolate_bernoulli(state, self.space, side=self.region) - self.phi
        return (vector_norms(self.space.components(du), self.m, self.k)["h1"],
                math.sqrt(max(float(dphi @ (self.mp @ dphi)), 0.0)))


def _check_epsilons(epsilons: Sequence[float]) -> tuple[float, ...]:
    eps = tuple(float(e) for e in epsilons)
    if not eps:
        raise ConfigurationError("sweep needs at least one epsilon")
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise ConfigurationError(f"sweep epsilons must be strictly descending, got {list(eps)}")
    return eps


def _row(state: FlowState, layout, minus: _LimitReference, plus: _LimitReference) -> SweepRow:
    profile = flux_profile(state)
    split = pressure_split(state)
    dist_minus, dist_phi_minus = minus.distances(state)
    dist_plus, dist_phi_plus = plus.distances(state)
    side = {r: split.side(r) for r in Region}
    return SweepRow(
        epsilon=layout.params.epsilon,
        r_eps=layout.params.r_eps,
        n_holes=layout.n_holes,
        energy=energy(state),
        flux=end_flux(state),
        flux_spread=profile.relative_spread(),
        trace=trace_norm_sigma(state),
        phi_minus=side[Region.MINUS].mean,
        phi_plus=side[Region.PLUS].mean,
        P_minus=side[Region.MINUS].norm,
        P_plus=side[Region.PLUS].norm,
        dist_minus=dist_minus,
        dist_plus=dist_plus,
        dist_phi_minus=dist_phi_minus,
        dist_phi_plus=dist_phi_plus,
        interp_gap=max(minus.gap, plus.gap),
        energy_residual=energy_identity_residual(state),
        iterations=state.iterations,
        final_residual=state.final_residual,
        cells=state.mesh.n_cells,
    )


def _worker_error(name: str, payload: dict[str, Any]) -> SieveflowError:
    cls = {2: ConfigurationError, 4: OutputError}.get(payload.get("exit_code"), NumericalError)
    return cls(f"{name}: {payload.get('message', 'worker failed')}")


def _parallel_constants(meshes: list[SieveMesh], workers: int, log_level: int) -> list[FunctionalConstants]:
    names = [f"constants-{i}" for i in range(len(meshes))]
    with ProcessManager(max_workers=workers, log_level=log_level) as pm:
        for name, mesh in zip(names, meshes):
            pm.register(ConstantsProcess(mesh_to_text(mesh), name=name))
        results = pm.run()
    out = []
    for name in names:
        status, payload = results.get(name, ("error", {"message": "no result"}))
        if status != "ok":
            raise _worker_error(name, payload)
        out.append(FunctionalConstants.from_dict(payload))
    return out


def run_sweep(pipe: PipeParams,
              epsilons: Iterable[float],
              strategy: LayoutStrategy | str = LayoutStrategy.SQUARE_LATTICE,
              p_minus: float = 1.0,
              p_plus: float = 0.0,
              f: BodyForce | None = None,
              res: MeshResolution | None = None,
              cfg: SolverConfig | None = None,
              params: PerforationParams | None = None,
              margin: float = 0.05,
              constants: bool = False,
              parallel_workers: int = 1,
              deterministic: bool = True,
              log_level: int = logging.INFO) -> SweepReport:
    """Solve the perforated problem for each ε in descending order.

    Each level warm starts from the previous solution. The two limit problems
    are solved once, and every level is compared with them on the refined
    half meshes. With ``constants`` the functional constants of every level
    mesh are estimated too, in worker processes unless ``deterministic`` or
    ``parallel_workers <= 1``.

    Args:
        params: Template for the perforation scales; its ε is replaced per level.

    Raises:
        ConfigurationError: If the epsilons are not strictly descending.
        PartialSweepError: If a stage fails; it carries the rows finished so far.
    """
    eps = _check_epsilons(epsilons)
    f = f or ZeroForce()
    res = res or MeshResolution()
    cfg = cfg or SolverConfig()
    template = params or PerforationParams(eps[0])
    provenance: dict[str, Any] = {
        "pipe": {"R": pipe.R, "h": pipe.h, "dim": pipe.dim},
        "strategy": str(LayoutStrategy(strategy)),
        "p_minus": p_minus,
        "p_plus": p_plus,
        "force": f.describe(),
        "resolution": res.to_dict(),
        "solver": cfg.to_dict(),
        "levels": [],
    }
    if not deterministic:
        provenance["created"] = datetime.now(timezone.utc).isoformat()

    rows: list[SweepRow] = []
    meshes: list[SieveMesh] = []

    def partial(stage: str, e: SieveflowError) -> PartialSweepError:
        _logger.error(f"[SWEEP] {stage} failed: {e}", exc_info=True)
        return PartialSweepError(f"sweep stopped at {stage}: {e}", e, SweepReport(tuple(rows), provenance))

    with Stopwatch() as sw:
        try:
            limits = solve_limit_problems(pipe, p_minus, p_plus, f, res, cfg)
            minus, plus = (_LimitReference.build(s) for s in limits)
        except SieveflowError as e:
            raise partial("limit problems", e) from e

        previous: FlowState | None = None
        for epsilon in eps:
            stage = f"epsilon={epsilon}"
            try:
                layout = generate_layout(pipe, template.with_epsilon(epsilon), strategy, margin=margin)
                mesh = mesh_sieve_pipe(layout, res.adapted_to(layout))
                space = build_space(mesh)
                initial = transfer_state(previous, space) if previous is not None else None
                state = solve_stationary(assemble(space, p_minus, p_plus, f), cfg, initial)
                row = _row(state, layout, minus, plus)
                if constants and (deterministic or parallel_workers <= 1):
                    row = row.with_constants(estimate_constants(mesh))
            except SieveflowError as e:
                raise partial(stage, e) from e
            rows.append(row)
            meshes.append(mesh)
            provenance["levels"].append(mesh.describe())
            previous = state
            _logger.info(f"[SWEEP] {stage} r_eps={row.r_eps:.4e} holes={row.n_holes} flux={row.flux:.4e} "
                         f"trace={row.trace:.4e} dist={row.dist_minus:.3e}/{row.dist_plus:.3e}")

        if constants and not deterministic and parallel_workers > 1:
            try:
                found = _parallel_constants(meshes, parallel_workers, log_level)
            except SieveflowError as e:
                raise partial("constants", e) from e
            rows = [row.with_constants(c) for row, c in zip(rows, found)]

    _logger.info(f"[SWEEP] {len(rows)} levels in {sw.elapsed:.1f}s")
    return SweepReport(tuple(rows), provenance)
