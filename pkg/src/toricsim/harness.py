"""Scenario runner: validated configs, noise injection, and figure data.

A :class:`ScenarioConfig` collects every knob of the seven supported
scenarios, validates all of them against the preconditions of the
operations they feed before any compute starts, and hashes canonically so
runs are reproducible.  :func:`run` dispatches to the scenario
implementations, gathers per-step metrics into a :class:`RunRecord`, and
writes CSV/JSON outputs atomically with versioned schema headers.

Determinism contract: the configuration plus the seed fix every byte of
every emitted file.  Wall time is therefore kept on the returned record
(and printed by the CLI) but never written to disk.
"""

from __future__ import annotations

import configparser
import hashlib
import itertools
import json
import math
import os
import platform
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.stats

from . import __version__
from . import lattice as lt
from . import lindblad as lb
from . import sequences as sq
from . import spectra as sp
from .pauli import PauliString

SCHEMA_VERSION = 1
OMEGA_DEFINITION = ("omega = elementary gates per unit time of the "
                    "configured pulse schedule")
KINDS = ("sequence-order-scan", "spectrum", "fidelity-scan", "thermalize",
         "cool-with-noise", "pump", "eliminate")
OUTDIR_ENV = "TORICSIM_OUTDIR"
PAIR_GAP = 4.0                      # j = 1 throughout the scenarios
STABILIZER_GAP = 2.0                # single-stabilizer flip cost at j = 1


class ConfigError(ValueError):
    """All validation problems of a config, enumerated before any compute."""

    def __init__(self, problems: Sequence[str]):
        self.problems = tuple(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(problems))


class SchemaMismatchError(RuntimeError):
    """Existing output file carries a different schema header."""


# ---------------------------------------------------------------------------
# noise model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing event of probability ``epg`` on a gate's support."""

    epg: float
    channel: str = "depolarizing"

    def __post_init__(self):
        if not 0.0 <= self.epg < 0.5:
            raise ValueError(f"epg must lie in [0, 0.5), got {self.epg}")
        if self.channel != "depolarizing":
            raise ValueError(f"unsupported noise channel {self.channel!r}")

    def apply(self, rho: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
        """(1 - epg) rho + epg * (maximally mixed on ``qubits``).

        The partial depolarization is realized as the uniform Pauli twirl
        over the support, which is manifestly trace preserving.
        """
        if self.epg == 0.0 or not qubits:
            return rho
        n = round(math.log2(rho.shape[0]))
        twirl = np.zeros_like(rho)
        for combo in itertools.product("IXYZ", repeat=len(qubits)):
            label = ["I"] * n
            for q, letter in zip(qubits, combo):
                label[q] = letter
            pauli = PauliString.from_label("".join(label)).to_dense()
            twirl += pauli @ rho @ pauli.conj().T
        return (1.0 - self.epg) * rho + (self.epg / 4 ** len(qubits)) * twirl


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------

# field name -> (ini section, parser kind, help text)
_FIELD_SPEC: dict[str, tuple[str, str, str]] = {
    "kind": ("scenario", "str", "one of " + " | ".join(KINDS)),
    "lattice_l": ("scenario", "int", "torus linear size (2 or 3)"),
    "seed": ("scenario", "int", "seed fixing every random draw"),
    "outdir": ("scenario", "str",
               f"output directory; empty defers to ${OUTDIR_ENV} then '.'"),
    "phi": ("sequence", "float", "common pulse angle alpha = beta = gamma"),
    "alpha": ("sequence", "optfloat", "explicit first pulse angle (optional)"),
    "beta": ("sequence", "optfloat", "explicit second pulse angle (optional)"),
    "gamma_angle": ("sequence", "optfloat",
                    "explicit third pulse angle (optional)"),
    "tau": ("sequence", "float", "single-pulse duration"),
    "phi_grid": ("sequence", "floats", "angles scanned for order fits"),
    "h_z": ("spectrum", "float", "uniform longitudinal field"),
    "chi_grid": ("spectrum", "floats", "two-body coupling grid"),
    "chi_pairs": ("spectrum", "str",
                  "which link pairs carry the chi term: sequence | all"),
    "n_eigenvalues": ("spectrum", "int", "eigenpairs computed per grid point"),
    "p": ("dissipation", "float", "bath weight of pair creation, in [0, 1)"),
    "lambda_star": ("dissipation", "float",
                    "pair creation/annihilation rate scale"),
    "gamma_star": ("dissipation", "float", "pair translation rate scale"),
    "t_final": ("dissipation", "float", "master-equation horizon"),
    "n_times": ("dissipation", "int", "sample count along the evolution"),
    "epg": ("noise", "float", "error probability per elementary gate"),
    "channel": ("noise", "str", "noise channel (depolarizing)"),
    "omega": ("noise", "float", OMEGA_DEFINITION),
    "ratio_grid": ("noise", "floats",
                   "cooling-to-noise rate ratios swept by cool-with-noise"),
    "epg_grid": ("noise", "floats", "per-gate error grid for entropy fits"),
    "theta": ("pump", "float", "partial-transfer pulse angle, in [0, pi/2]"),
    "gamma20": ("pump", "float", "ancilla level-2 decay rate"),
    "rabi_rate": ("pump", "optfloat",
                  "pulse Rabi rate; warns when not >= 100 * gamma20"),
    "coupling_grid": ("probe", "floats", "system-ancilla couplings g"),
    "relaxation_grid": ("probe", "floats", "ancilla relaxation rates"),
    "step_time": ("probe", "float",
                  "stroboscopic step; g * step_time < pi/2 required"),
    "policy": ("integrator", "str", "step controller: adaptive | rk4"),
    "dt": ("integrator", "optfloat", "fixed step size for the rk4 policy"),
    "rtol": ("integrator", "float", "adaptive relative tolerance"),
    "atol": ("integrator", "float", "adaptive absolute tolerance"),
}


def _parse_value(kind: str, raw: str):
    raw = raw.strip()
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "optfloat":
        return None if raw.lower() in ("", "none") else float(raw)
    if kind == "floats":
        if not raw:
            return ()
        return tuple(float(v) for v in raw.split(","))
    return raw


@dataclass
class ScenarioConfig:
    """Every scenario knob, with defaults that satisfy all preconditions."""

    kind: str
    lattice_l: int = 2
    seed: int = 7
    outdir: str = ""
    phi: float = 0.05
    alpha: float | None = None
    beta: float | None = None
    gamma_angle: float | None = None
    tau: float = 1.0
    phi_grid: tuple[float, ...] = (0.05, 0.0707, 0.1, 0.1414, 0.2)
    h_z: float = 0.05
    chi_grid: tuple[float, ...] = tuple(round(-0.5 + 0.1 * k, 10)
                                        for k in range(11))
    chi_pairs: str = "sequence"
    n_eigenvalues: int = 6
    p: float = 0.2
    lambda_star: float = 1.0
    gamma_star: float = 0.5
    t_final: float = 10.0
    n_times: int = 11
    epg: float = 0.0
    channel: str = "depolarizing"
    omega: float = 1.0
    ratio_grid: tuple[float, ...] = (10.0, 30.0, 100.0, 300.0)
    epg_grid: tuple[float, ...] = (1e-4, 3e-4, 1e-3)
    theta: float = math.pi / 6
    gamma20: float = 50.0
    rabi_rate: float | None = None
    coupling_grid: tuple[float, ...] = (0.02, 0.03, 0.045)
    relaxation_grid: tuple[float, ...] = (0.6, 1.0, 1.6)
    step_time: float = 1.0
    policy: str = "adaptive"
    dt: float | None = None
    rtol: float = 1e-9
    atol: float = 1e-12

    # -- validation (all problems enumerated before any compute) ---------

    def validate(self) -> list[str]:
        bad: list[str] = []
        if self.kind not in KINDS:
            bad.append(f"kind must be one of {', '.join(KINDS)}; got {self.kind!r}")
            return bad
        if self.lattice_l not in (2, 3):
            bad.append(f"lattice_l must be 2 or 3, got {self.lattice_l}")
        if self.seed < 0:
            bad.append("seed must be >= 0")
        if self.tau <= 0:
            bad.append("tau must be > 0")
        if self.policy not in ("adaptive", "rk4"):
            bad.append(f"policy must be adaptive or rk4, got {self.policy!r}")
        if self.dt is not None and self.dt <= 0:
            bad.append("dt must be > 0 when given")
        if self.rtol <= 0 or self.atol <= 0:
            bad.append("rtol and atol must be > 0")
        angles = (self.alpha, self.beta, self.gamma_angle)
        if any(a is not None for a in angles) and None in angles:
            bad.append("alpha, beta and gamma_angle must be given together")
        check = getattr(self, "_validate_" + self.kind.replace("-", "_"))
        check(bad)
        return bad

    def _validate_sequence_order_scan(self, bad: list[str]) -> None:
        if len(self.phi_grid) < 4:
            bad.append("phi_grid needs at least 4 angles for order fits")
        if any(not 0.0 < v <= 0.3 for v in self.phi_grid):
            bad.append("phi_grid angles must lie in (0, 0.3]")
        if list(self.phi_grid) != sorted(set(self.phi_grid)):
            bad.append("phi_grid must be strictly increasing")
        for name, value in (("alpha", self.alpha), ("beta", self.beta),
                            ("gamma_angle", self.gamma_angle)):
            if value is not None and not 0.0 < abs(value) <= 0.3:
                bad.append(f"{name} magnitude must lie in (0, 0.3]")

    def _validate_spectrum(self, bad: list[str]) -> None:
        if not self.chi_grid:
            bad.append("chi_grid must not be empty")
        if self.h_z < 0:
            bad.append("h_z must be >= 0")
        if self.chi_pairs not in ("sequence", "all"):
            bad.append(f"chi_pairs must be sequence or all, got {self.chi_pairs!r}")
        if not 5 <= self.n_eigenvalues <= 32:
            bad.append("n_eigenvalues must lie in [5, 32] (manifold plus gap)")

    def _validate_fidelity_scan(self, bad: list[str]) -> None:
        self._validate_spectrum(bad)

    def _validate_thermalize(self, bad: list[str]) -> None:
        if self.lattice_l != 2:
            bad.append("thermalize needs lattice_l = 2 (dense evolution cap)")
        if not 0.0 <= self.p < 1.0:
            bad.append(f"p must lie in [0, 1), got {self.p}")
        if self.lambda_star < 0 or self.gamma_star < 0:
            bad.append("lambda_star and gamma_star must be >= 0")
        if self.lambda_star + self.gamma_star == 0:
            bad.append("at least one of lambda_star, gamma_star must be > 0")
        if self.t_final <= 0:
            bad.append("t_final must be > 0")
        if self.n_times < 2:
            bad.append("n_times must be >= 2")

    def _validate_cool_with_noise(self, bad: list[str]) -> None:
        if self.lattice_l != 2:
            bad.append("cool-with-noise needs lattice_l = 2 (dense cap)")
        if self.lambda_star <= 0:
            bad.append("lambda_star (the cooling rate) must be > 0")
        if not 0.0 <= self.epg < 0.5:
            bad.append(f"epg must lie in [0, 0.5), got {self.epg}")
        if self.channel != "depolarizing":
            bad.append(f"unsupported noise channel {self.channel!r}")
        if self.omega <= 0:
            bad.append("omega must be > 0")
        if any(r <= 0 for r in self.ratio_grid):
            bad.append("ratio_grid entries must be > 0")
        if len(set(self.ratio_grid)) != len(self.ratio_grid):
            bad.append("ratio_grid entries must be distinct")

    def _validate_pump(self, bad: list[str]) -> None:
        if not 0.0 <= self.theta <= math.pi / 2:
            bad.append(f"theta must lie in [0, pi/2], got {self.theta}")
        if self.gamma20 <= 0:
            bad.append("gamma20 must be > 0")
        if self.rabi_rate is not None and self.rabi_rate <= 0:
            bad.append("rabi_rate must be > 0 when given")

    def _validate_eliminate(self, bad: list[str]) -> None:
        positive = [g for g in self.coupling_grid if g > 0]
        if any(g < 0 for g in self.coupling_grid):
            bad.append("coupling_grid entries must be >= 0")
        if len(set(positive)) < 2 or len(set(self.relaxation_grid)) < 2:
            bad.append("eliminate needs >= 2 positive couplings and "
                       ">= 2 relaxations")
        if any(l <= 0 for l in self.relaxation_grid):
            bad.append("relaxation_grid entries must be > 0")
        if self.step_time <= 0:
            bad.append("step_time must be > 0")
        if positive and self.relaxation_grid:
            if max(positive) > 0.1 * min(self.relaxation_grid):
                bad.append("couplings must satisfy g <= relaxation / 10")
            if max(positive) * self.step_time >= math.pi / 2:
                bad.append("stroboscopic validity needs "
                           "coupling * step_time < pi/2")

    def require_valid(self) -> None:
        problems = self.validate()
        if problems:
            raise ConfigError(problems)

    # -- canonical form, hashing, serialization --------------------------

    def canonical(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out

    def config_hash(self) -> str:
        # outdir excluded: the hash covers what is computed, not where
        # the files land, so records are byte-identical across outdirs
        data = {k: v for k, v in self.canonical().items() if k != "outdir"}
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()
                              ).hexdigest()

    def resolve_outdir(self) -> Path:
        if self.outdir:
            return Path(self.outdir)
        return Path(os.environ.get(OUTDIR_ENV, "."))

    def to_ini(self) -> str:
        lines = []
        for section in dict.fromkeys(s for s, _, _ in _FIELD_SPEC.values()):
            lines.append(f"[{section}]")
            for name, (sec, kind, _) in _FIELD_SPEC.items():
                if sec != section:
                    continue
                value = getattr(self, name)
                if kind == "floats":
                    text = ", ".join(repr(v) for v in value)
                elif value is None:
                    text = "none"
                else:
                    text = str(value)
                lines.append(f"{name} = {text}")
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_ini(cls, text: str, **overrides) -> "ScenarioConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError([f"config file does not parse: {exc}"]) from exc
        problems: list[str] = []
        values: dict = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                spec = _FIELD_SPEC.get(key)
                if spec is None or spec[0] != section:
                    problems.append(f"unknown key [{section}] {key}")
                    continue
                try:
                    values[key] = _parse_value(spec[1], raw)
                except ValueError:
                    problems.append(f"[{section}] {key}: cannot parse {raw!r}")
        if problems:
            raise ConfigError(problems)
        values.update(overrides)
        if "kind" not in values:
            raise ConfigError(["[scenario] kind is required"])
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "ScenarioConfig":
        return cls.from_ini(Path(path).read_text(), **overrides)


def describe_defaults() -> str:
    """Commented INI listing every field, its default, and what it does."""
    cfg = ScenarioConfig(kind=KINDS[0])
    lines = ["# toricsim scenario configuration (key = value sections)",
             f"# schema v{SCHEMA_VERSION}; {OMEGA_DEFINITION}", ""]
    for section in dict.fromkeys(s for s, _, _ in _FIELD_SPEC.values()):
        lines.append(f"[{section}]")
        for name, (sec, kind, help_text) in _FIELD_SPEC.items():
            if sec != section:
                continue
            value = getattr(cfg, name)
            if kind == "floats":
                text = ", ".join(repr(v) for v in value)
            elif value is None:
                text = "none"
            else:
                text = str(value)
            lines.append(f"# {help_text}")
            lines.append(f"{name} = {text}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# run records and file emission
# ---------------------------------------------------------------------------


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str


@dataclass
class RunRecord:
    """Everything a run produced, deterministic except wall time."""

    scenario: str
    config_hash: str
    versions: dict[str, str]
    omega_definition: str
    metrics: dict[str, tuple]
    assertions: list[Assertion]
    outputs: tuple[str, ...]
    wall_time_s: float

    @property
    def ok(self) -> bool:
        return all(a.passed for a in self.assertions)

    def to_json(self, include_wall_time: bool = True) -> str:
        data = {
            "scenario": self.scenario,
            "config_hash": self.config_hash,
            "versions": self.versions,
            "omega_definition": self.omega_definition,
            "metrics": {k: list(v) for k, v in self.metrics.items()},
            "assertions": [{"name": a.name, "passed": a.passed,
                            "detail": a.detail} for a in self.assertions],
            # basenames only: emitted bytes must not depend on the outdir
            "outputs": [Path(p).name for p in self.outputs],
        }
        if include_wall_time:
            data["wall_time_s"] = self.wall_time_s
        return json.dumps(data, sort_keys=True, indent=1)

    def summary_lines(self) -> list[str]:
        mark = {True: "PASS", False: "FAIL"}
        lines = [f"[{mark[a.passed]}] {a.name}: {a.detail}"
                 for a in self.assertions]
        lines.append(f"{'ok' if self.ok else 'FAILED'}: {self.scenario} "
                     f"({len(self.assertions)} assertions, "
                     f"{self.wall_time_s:.2f}s)")
        return lines


def _versions() -> dict[str, str]:
    return {"toricsim": __version__, "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version()}


def _cell(value) -> str:
    if isinstance(value, float):
        return "%.12e" % value
    return str(value)


def _csv_text(schema: str, columns: Sequence[str], rows: Sequence[Sequence],
              units: str = "") -> str:
    header = f"# toricsim-csv v{SCHEMA_VERSION} schema={schema}"
    if units:
        header += f" units={units}"
    lines = [header, ",".join(columns)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


_FIGURE_SCHEMAS: dict[str, tuple[tuple[str, ...], str]] = {
    "sequence-order-scan": (("phi", "term", "measured", "predicted",
                             "rel_error"), "coefficients in 1/tau"),
    "spectrum": (("chi", "h_z", "index", "energy", "residual"),
                 "energies in J_e = J_m = 1"),
    "fidelity": (("chi", "subspace_fidelity", "state_0", "state_1", "state_2",
                  "state_3", "manifold_spread", "gap"),
                 "energies in J_e = J_m = 1"),
    "thermalize": (("t", "energy", "entropy", "excitation_density",
                    "trace_distance_to_stationary"),
                   "energies in J_e = J_m = 1; entropy in nats"),
    "cool-with-noise": (("ratio", "gamma_c", "gamma_e", "epg",
                         "excitation_density", "fitted_temperature"),
                        "temperatures in J_e = J_m = 1"),
    "eliminate": (("coupling", "relaxation", "rate", "fit_residual"), ""),
}


def emit_figure_data(kind: str, rows: Sequence[Sequence],
                     path: str | Path | None = None) -> str:
    """Render (and optionally write) the CSV for one figure kind.

    Re-emitting onto an existing file whose schema header differs raises
    :class:`SchemaMismatchError` instead of silently changing the format.
    """
    if kind not in _FIGURE_SCHEMAS:
        raise ValueError(f"unknown figure kind {kind!r}; "
                         f"known: {', '.join(sorted(_FIGURE_SCHEMAS))}")
    columns, units = _FIGURE_SCHEMAS[kind]
    text = _csv_text(kind, columns, rows, units)
    if path is not None:
        path = Path(path)
        if path.exists():
            old_header = path.read_text().splitlines()[0]
            new_header = text.splitlines()[0]
            if old_header != new_header:
                raise SchemaMismatchError(
                    f"{path} holds schema {old_header!r}, "
                    f"refusing to overwrite with {new_header!r}")
        _atomic_write(path, text)
    return text


# ---------------------------------------------------------------------------
# shared diagnostics
# ---------------------------------------------------------------------------


def von_neumann_entropy(rho: np.ndarray) -> float:
    """S(rho) = -Tr rho ln rho in nats, clipped at the numerical floor."""
    vals = np.linalg.eigvalsh(rho)
    vals = vals[vals > 1e-15]
    return float(-(vals * np.log(vals)).sum())


def excitation_density(rho: np.ndarray, lat: lt.TorusLattice) -> float:
    """Mean flipped-stabilizer weight (1 - <h>)/2 over all stabilizers."""
    total = 0.0
    stabs = [lt.vertex_stabilizer(lat, v) for v in range(lat.n_vertices)]
    stabs += [lt.plaquette_stabilizer(lat, q) for q in range(lat.n_plaquettes)]
    for stab in stabs:
        total += (1.0 - float(np.real(np.trace(stab.to_dense() @ rho)))) / 2.0
    return total / len(stabs)


def _fitted_temperature(density: float) -> float:
    """Boltzmann inversion of the per-stabilizer excitation weight."""
    if density <= 0.0:
        return 0.0
    if density >= 0.5:
        return math.inf
    return STABILIZER_GAP / math.log((1.0 - density) / density)


# ---------------------------------------------------------------------------
# scenario implementations
# ---------------------------------------------------------------------------


@dataclass
class _Parts:
    metrics: dict[str, tuple] = field(default_factory=dict)
    assertions: list[Assertion] = field(default_factory=list)
    files: list[tuple[str, str]] = field(default_factory=list)  # name, text

    def check(self, name: str, passed: bool, detail: str) -> None:
        self.assertions.append(Assertion(name, bool(passed), detail))


def _columns(rows: Sequence[Sequence], names: Sequence[str]) -> dict[str, tuple]:
    return {name: tuple(row[i] for row in rows) for i, name in enumerate(names)}


def _run_sequence_order_scan(cfg: ScenarioConfig) -> _Parts:
    parts = _Parts()
    rows = []
    ixyi_ok = True
    for phi in cfg.phi_grid:
        targets = sq.eq3_targets(phi, cfg.tau, echoed=True)
        rep = sq.effective_hamiltonian(
            sq.echoed_u123(phi, phi, phi, tau=cfg.tau), targets=targets)
        for label, (measured, predicted) in sorted(rep.target_coefficients.items()):
            meas = float(np.real(measured))
            pred = float(np.real(predicted))
            rel = abs(meas - pred) / abs(pred)
            rows.append((phi, label, meas, pred, rel))
            if label == "IXYI" and rel >= phi:
                ixyi_ok = False
    single = sq.order_scan(lambda f: sq.u123(f, f, f, tau=cfg.tau),
                           cfg.phi_grid)
    echoed = sq.order_scan(lambda f: sq.echoed_u123(f, f, f, tau=cfg.tau),
                           cfg.phi_grid, target_terms=("ZZZZ", "IXYI"))
    parts.metrics = _columns(rows, _FIGURE_SCHEMAS["sequence-order-scan"][0])
    extra = {"single_term_slopes": single.term_slopes,
             "single_residual_slope": single.residual_slope,
             "echoed_residual_slope": echoed.residual_slope,
             "phi_grid": list(cfg.phi_grid)}
    if cfg.alpha is not None:
        a, b, g = cfg.alpha, cfg.beta, cfg.gamma_angle
        chi = (2.0 / (5.0 * cfg.tau)) * a * a * b * g * g
        triple_targets = {
            "ZZZZ": -(2.0 / (5.0 * cfg.tau)) * a * b * g
            * (1.0 - (2.0 / 3.0) * (a * a + b * b + g * g)),
            "IXYI": chi,
        }
        rep = sq.effective_hamiltonian(
            sq.echoed_u123(a, b, g, tau=cfg.tau), targets=triple_targets)
        extra["triple"] = {
            "angles": [a, b, g],
            "coefficients": {label: [float(np.real(m)), float(np.real(p))]
                             for label, (m, p) in rep.target_coefficients.items()},
        }
    parts.files.append(("sequence-order-scan.json",
                        json.dumps(extra, sort_keys=True, indent=1)))
    parts.files.append(("sequence-order-scan.csv",
                        emit_figure_data("sequence-order-scan", rows)))
    for term in ("IXZZ", "ZZYI"):
        slope = single.term_slopes.get(term, math.nan)
        parts.check(f"single-residual-order-{term.lower()}",
                    abs(slope - 4.0) <= 0.3, f"slope {slope:.3f} vs 4.0 +- 0.3")
    parts.check("echoed-residual-order", echoed.residual_slope >= 5.5,
                f"slope {echoed.residual_slope:.3f} vs >= 5.5")
    parts.check("ixyi-coefficient", ixyi_ok,
                "relative error < phi at every grid angle")
    return parts


def _run_spectrum(cfg: ScenarioConfig) -> _Parts:
    parts = _Parts()
    lat = lt.build(cfg.lattice_l)
    rows = []
    quasi = []
    for chi in cfg.chi_grid:
        h = sp.build_hamiltonian(lat, chi=chi, h_z=cfg.h_z,
                                 chi_pairs=cfg.chi_pairs)
        res = sp.lowest_eigenpairs(h, k=cfg.n_eigenvalues, seed=cfg.seed,
                                   with_vectors=False)
        rows.extend(res.report_rows(chi, cfg.h_z))
        evals = res.eigenvalues
        spread = float(evals[3] - evals[0])
        gap = float(evals[4] - evals[3])
        quasi.append({"chi": chi, "manifold_spread": spread, "gap": gap})
    parts.metrics = _columns(rows, _FIGURE_SCHEMAS["spectrum"][0])
    parts.files.append(("spectrum.csv", emit_figure_data("spectrum", rows)))
    parts.files.append(("spectrum.json",
                        json.dumps({"points": quasi}, sort_keys=True, indent=1)))
    worst = max(row[4] for row in rows)
    parts.check("eigenpair-residuals", worst < 1e-8,
                f"max residual {worst:.2e} vs < 1e-8")
    window = [q for q in quasi if abs(q["chi"]) <= 0.2]
    degen = all(q["manifold_spread"] < q["gap"] / 5.0 for q in window)
    parts.check("fourfold-quasi-degeneracy", degen,
                f"spread < gap/5 at all |chi| <= 0.2 ({len(window)} points)")
    return parts


def _run_fidelity_scan(cfg: ScenarioConfig) -> _Parts:
    parts = _Parts()
    lat = lt.build(cfg.lattice_l)
    scan = sp.fidelity_scan(lat, cfg.chi_grid, h_z=cfg.h_z,
                            k=cfg.n_eigenvalues, chi_pairs=cfg.chi_pairs,
                            seed=cfg.seed)
    rows = []
    for point in scan.points:
        if point.error is not None:
            continue
        rows.append((point.chi, point.subspace_fidelity,
                     *map(float, point.per_state),
                     point.manifold_spread, point.gap))
    parts.metrics = _columns(rows, _FIGURE_SCHEMAS["fidelity"][0])
    parts.files.append(("fidelity.csv", emit_figure_data("fidelity", rows)))
    failures = [p.chi for p in scan.points if p.error is not None]
    parts.check("solver-converged", not failures,
                f"failed chi points: {failures or 'none'}")
    window = [(chi, fid) for chi, fid, *_ in rows if abs(chi) <= 0.4]
    protected = all(fid >= 0.8 for _, fid in window)
    parts.check("protected-window", protected and bool(window),
                f"subspace fidelity >= 0.8 at all |chi| <= 0.4 "
                f"({len(window)} points)")
    at_zero = [fid for chi, fid, *_ in rows if chi == 0.0]
    if at_zero:
        parts.check("reference-limit", at_zero[0] > 0.99,
                    f"fidelity {at_zero[0]:.5f} at chi = 0")
    return parts


def _run_thermalize(cfg: ScenarioConfig) -> _Parts:
    parts = _Parts()
    lat = lt.build(cfg.lattice_l)
    model = lb.thermal_jump_set(lat, p=cfg.p, lambda_star=cfg.lambda_star,
                                gamma_star=cfg.gamma_star)
    stat = lb.stationary_state(model)
    dim = model.dim
    times = np.linspace(0.0, cfg.t_final, cfg.n_times)
    out = lb.evolve(model, np.eye(dim) / dim, cfg.t_final, policy=cfg.policy,
                    dt=cfg.dt, rtol=cfg.rtol, atol=cfg.atol,
                    sample_times=times)
    h_dense = model.hamiltonian.to_dense()
    rows = []
    for t, state in zip(out.times, out.states):
        rows.append((float(t),
                     float(np.real(np.trace(h_dense @ state))),
                     von_neumann_entropy(state),
                     excitation_density(state, lat),
                     lb.trace_distance(state, stat.rho)))
    parts.metrics = _columns(rows, _FIGURE_SCHEMAS["thermalize"][0])
    parts.files.append(("thermalize.csv", emit_figure_data("thermalize", rows)))
    report = {
        "null_dim": stat.null_dim,
        "residual": stat.residual,
        "method": stat.method,
        "temperature_target": stat.gibbs_temperature,
        "trace_distance_to_gibbs": stat.trace_distance_to_gibbs,
        "detailed_balance_temperature": stat.detailed_balance_temperature,
        "trace_distance_to_detailed_balance":
            stat.trace_distance_to_detailed_balance,
        "loop_expectations": stat.loop_expectations,
    }
    parts.files.append(("thermalize.json",
                        json.dumps(report, sort_keys=True, indent=1)))
    parts.check("stationary-residual", stat.residual < 1e-8,
                f"generator residual {stat.residual:.2e} vs < 1e-8")
    expected = 1 if cfg.p > 0 else 4
    parts.check("fixed-point-multiplicity", stat.null_dim == expected,
                f"null dimension {stat.null_dim} vs {expected}")
    distances = [row[4] for row in rows]
    monotone = all(a >= b for a, b in zip(distances, distances[1:]))
    parts.check("monotone-approach", monotone,
                "trace distance to the fixed point never increases")
    parts.check("converged", distances[-1] < 1e-6,
                f"final distance {distances[-1]:.2e} vs < 1e-6")
    return parts


@dataclass
class CoolingPoint:
    ratio: float
    gamma_c: float
    gamma_e: float
    epg: float
    excitation_density: float
    fitted_temperature: float
    residual: float
    steady: bool


@dataclass
class CoolingSweep:
    points: list[CoolingPoint]
    fit_constant: float | None
    fit_residual: float | None
    rank_correlation: float | None
    omega: float
    omega_definition: str = OMEGA_DEFINITION


def cool_with_noise(cfg: ScenarioConfig) -> CoolingSweep:
    """Steady states of engineered cooling against depolarizing noise.

    The cooling rate is Gamma_c = lambda_star per link; the noise rate is
    Gamma_e = EPG * omega per link (depolarizing on every link).  When
    ``ratio_grid`` is set, the sweep fixes Gamma_e = Gamma_c / ratio and
    reports the per-ratio EPG; an empty grid runs the single configured
    EPG point.  The fitted temperature comes from the Boltzmann inversion
    of the mean per-stabilizer excitation weight, and the sweep is fit to
    T = c * Delta / ln(Gamma_c / Gamma_e) with the residual reported.
    """
    cfg.require_valid()
    lat = lt.build(cfg.lattice_l)
    h = sp.build_hamiltonian(lat)
    gamma_c = cfg.lambda_star
    if cfg.ratio_grid:
        settings = [(r, gamma_c / r) for r in cfg.ratio_grid]
    else:
        gamma_e = cfg.epg * cfg.omega
        settings = [(math.inf if gamma_e == 0 else gamma_c / gamma_e, gamma_e)]
    points = []
    for ratio, gamma_e in settings:
        jumps = lb.cooling_jump_set(lat, lambda_star=gamma_c).jumps
        if gamma_e > 0:
            jumps = jumps + lb.depolarizing_jumps(lat.n_links, gamma=gamma_e)
        model = lb.LindbladModel(n_qubits=lat.n_links, hamiltonian=h,
                                 jumps=jumps, lattice=lat,
                                 label="cool-with-noise")
        stat = lb.stationary_state(model)
        density = excitation_density(stat.rho, lat)
        points.append(CoolingPoint(
            ratio=ratio, gamma_c=gamma_c, gamma_e=gamma_e,
            epg=gamma_e / cfg.omega, excitation_density=density,
            fitted_temperature=_fitted_temperature(density),
            residual=stat.residual, steady=stat.residual < 1e-8))
    fit_constant = fit_residual = rank = None
    usable = [pt for pt in points
              if math.isfinite(pt.ratio) and pt.ratio > 1.0
              and math.isfinite(pt.fitted_temperature)
              and pt.fitted_temperature > 0.0]
    if len(usable) >= 2:
        x = np.array([PAIR_GAP / math.log(pt.ratio) for pt in usable])
        t = np.array([pt.fitted_temperature for pt in usable])
        fit_constant = float(x @ t / (x @ x))
        fit_residual = float(np.sqrt(np.mean((t - fit_constant * x) ** 2))
                             / np.mean(t))
        rank = float(scipy.stats.spearmanr(x, t).statistic)
    return CoolingSweep(points=points, fit_constant=fit_constant,
                        fit_residual=fit_residual, rank_correlation=rank,
                        omega=cfg.omega)


def _run_cool_with_noise(cfg: ScenarioConfig) -> _Parts:
    parts = _Parts()
    sweep = cool_with_noise(cfg)
    rows = [(pt.ratio, pt.gamma_c, pt.gamma_e, pt.epg, pt.excitation_density,
             pt.fitted_temperature) for pt in sweep.points]
    parts.metrics = _columns(rows, _FIGURE_SCHEMAS["cool-with-noise"][0])
    parts.files.append(("cool-with-noise.csv",
                        emit_figure_data("cool-with-noise", rows)))
    report = {
        "fit_constant": sweep.fit_constant,
        "fit_residual": sweep.fit_residual,
        "rank_correlation": sweep.rank_correlation,
        "omega": sweep.omega,
        "omega_definition": sweep.omega_definition,
        "pair_gap": PAIR_GAP,
    }
    parts.files.append(("cool-with-noise.json",
                        json.dumps(report, sort_keys=True, indent=1)))
    parts.check("steady", all(pt.steady for pt in sweep.points),
                f"max generator residual "
                f"{max(pt.residual for pt in sweep.points):.2e}")
    swept = [pt for pt in sweep.points if math.isfinite(pt.ratio)]
    if len(swept) >= 2:
        ordered = sorted(swept, key=lambda pt: pt.ratio)
        temps = [pt.fitted_temperature for pt in ordered]
        parts.check("monotone-cooling",
                    all(a > b for a, b in zip(temps, temps[1:])),
                    "fitted temperature strictly decreases with the ratio")
        if sweep.rank_correlation is not None:
            parts.check("scaling-form", sweep.rank_correlation == 1.0,
                        f"rank correlation {sweep.rank_correlation} vs 1.0; "
                        f"form-fit residual {sweep.fit_residual:.3f} "
                        f"(reported)")
    else:
        only = sweep.points[0]
        if only.gamma_e == 0.0:
            parts.check("dark-steady-state",
                        only.excitation_density < 1e-6,
                        f"excitation density {only.excitation_density:.2e} "
                        f"vs < 1e-6 at EPG = 0")
    return parts


def _run_pump(cfg: ScenarioConfig) -> _Parts:
    parts = _Parts()
    protocol = lb.PumpProtocol(theta=cfg.theta, gamma20=cfg.gamma20,
                               delta=PAIR_GAP, rabi_rate=cfg.rabi_rate)
    res = lb.pump_ancilla(protocol)
    populations = np.real(np.diag(res.rho_pseudospin))
    closed = (math.sin(cfg.theta) ** 2, math.cos(cfg.theta) ** 2)
    report = {
        "theta": cfg.theta,
        "populations": [float(populations[0]), float(populations[1])],
        "closed_form": list(closed),
        "effective_temperature": res.effective_temperature,
        "residual_level2": res.residual_level2,
        "total_wait_time": res.total_wait_time,
        "steps": [list(map(str, step)) for step in res.steps_executed],
    }
    parts.metrics = {"population_0": (float(populations[0]),),
                     "population_1": (float(populations[1]),),
                     "effective_temperature": (res.effective_temperature,)}
    parts.files.append(("pump.json",
                        json.dumps(report, sort_keys=True, indent=1)))
    err = max(abs(populations[0] - closed[0]), abs(populations[1] - closed[1]))
    parts.check("closed-form-populations", err < 1e-4,
                f"max population error {err:.2e} vs < 1e-4")
    parts.check("residual-level2", res.residual_level2 < 1e-8,
                f"residual {res.residual_level2:.2e} vs < 1e-8")
    coherence = abs(res.rho_pseudospin[0, 1])
    parts.check("diagonal-output", coherence < 1e-10,
                f"pseudospin coherence {coherence:.2e}")
    return parts


def _run_eliminate(cfg: ScenarioConfig) -> _Parts:
    parts = _Parts()
    report = lb.adiabatic_elimination_probe(cfg.coupling_grid,
                                            cfg.relaxation_grid)
    rows = [(pt.coupling, pt.relaxation, pt.rate, pt.fit_residual)
            for pt in report.points]
    parts.metrics = _columns(rows, _FIGURE_SCHEMAS["eliminate"][0])
    parts.files.append(("eliminate.csv", emit_figure_data("eliminate", rows)))
    summary = {
        "coupling_exponent": report.coupling_exponent,
        "relaxation_exponent": report.relaxation_exponent,
        "model_residuals": report.model_residuals,
        "favored_model": report.favored_model,
        "prefactor": report.prefactor,
        "max_coupling_times_step": max(cfg.coupling_grid) * cfg.step_time,
    }
    parts.files.append(("eliminate.json",
                        json.dumps(summary, sort_keys=True, indent=1)))
    parts.check("coupling-exponent",
                abs(report.coupling_exponent - 2.0) <= 0.1,
                f"exponent {report.coupling_exponent:.3f} vs 2.0 +- 0.1")
    parts.check("model-comparison",
                set(report.model_residuals) == {"coupling^2 / relaxation",
                                                "coupling^2 * relaxation"},
                f"favored: {report.favored_model} "
                f"(residuals {report.model_residuals})")
    limit = max(cfg.coupling_grid) * cfg.step_time
    parts.check("stroboscopic-validity", limit < math.pi / 2,
                f"max coupling * step_time {limit:.3f} vs < pi/2")
    return parts


_SCENARIOS: Mapping[str, Callable[[ScenarioConfig], _Parts]] = {
    "sequence-order-scan": _run_sequence_order_scan,
    "spectrum": _run_spectrum,
    "fidelity-scan": _run_fidelity_scan,
    "thermalize": _run_thermalize,
    "cool-with-noise": _run_cool_with_noise,
    "pump": _run_pump,
    "eliminate": _run_eliminate,
}


def run(cfg: ScenarioConfig) -> RunRecord:
    """Validate, dispatch, write outputs atomically, and record the run."""
    cfg.require_valid()
    outdir = cfg.resolve_outdir()
    start = time.perf_counter()
    parts = _SCENARIOS[cfg.kind](cfg)
    wall = time.perf_counter() - start
    written = []
    for name, text in parts.files:
        path = outdir / name
        _atomic_write(path, text)
        written.append(str(path))
    record = RunRecord(
        scenario=cfg.kind, config_hash=cfg.config_hash(),
        versions=_versions(), omega_definition=OMEGA_DEFINITION,
        metrics=parts.metrics, assertions=parts.assertions,
        outputs=tuple(written), wall_time_s=wall)
    record_path = outdir / f"{cfg.kind}-record.json"
    _atomic_write(record_path, record.to_json(include_wall_time=False) + "\n")
    record.outputs = record.outputs + (str(record_path),)
    return record


# ---------------------------------------------------------------------------
# entropy per gate
# ---------------------------------------------------------------------------


@dataclass
class EntropyReport:
    epg_values: tuple[float, ...]
    entropies: tuple[float, ...]
    exponent: float
    n_gates: int
    omega: float
    omega_definition: str = OMEGA_DEFINITION


def entropy_per_gate(cfg: ScenarioConfig) -> EntropyReport:
    """Von Neumann entropy injected by one noisy stroboscopic cycle.

    One cycle is the echoed sequence for a vertex neighborhood followed by
    the echoed sequence for a plaquette neighborhood (40 pulses on a
    four-qubit register).  After every gate the depolarizing event of
    probability EPG acts on the gate's support; the initial state is pure,
    so the final entropy is the entropy produced.  The log-log slope over
    ``epg_grid`` is reported.
    """
    problems = []
    if not 0.0 < cfg.phi <= 0.3:
        problems.append("phi must lie in (0, 0.3]")
    if cfg.tau <= 0:
        problems.append("tau must be > 0")
    if len(cfg.epg_grid) < 2:
        problems.append("epg_grid needs at least 2 values")
    if any(not 0.0 < e < 0.5 for e in cfg.epg_grid):
        problems.append("epg_grid entries must lie in (0, 0.5)")
    if cfg.channel != "depolarizing":
        problems.append(f"unsupported noise channel {cfg.channel!r}")
    if problems:
        raise ConfigError(problems)
    vertex = sq.echoed_u123(cfg.phi, cfg.phi, cfg.phi, tau=cfg.tau)
    plaquette = sq.echoed_u123(cfg.phi, cfg.phi, cfg.phi,
                               generators=sq.plaquette_generators(),
                               tau=cfg.tau)
    cycle = vertex.then(plaquette, label="noisy-cycle")
    n = cycle.n_qubits
    dim = 2 ** n
    unitaries = [gate.unitary() for gate in cycle.gates]
    supports = [tuple(q for q in range(n)
                      if ((int(gate.generator.x_mask)
                           | int(gate.generator.z_mask)) >> q) & 1)
                for gate in cycle.gates]
    entropies = []
    for epg in cfg.epg_grid:
        noise = NoiseModel(epg=epg, channel=cfg.channel)
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0
        for u, support in zip(unitaries, supports):
            rho = u @ rho @ u.conj().T
            rho = noise.apply(rho, support)
        entropies.append(von_neumann_entropy(rho))
    slope = float(np.polyfit(np.log(cfg.epg_grid), np.log(entropies), 1)[0])
    return EntropyReport(
        epg_values=tuple(cfg.epg_grid), entropies=tuple(entropies),
        exponent=slope, n_gates=len(cycle.gates),
        omega=len(cycle.gates) / cycle.total_duration)
