"""Scenario configuration: YAML files, bundled presets and validation.

A scenario is a nested mapping with the blocks ``system``, ``initial_state``,
``tau``, ``dynamics``, ``run``, ``units``, ``tolerances``, ``output`` and
``analysis``. Matrices are row-major lists of rows; each entry is a real
number or a ``[re, im]`` pair.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import composite as cmp
from . import fixtures as fx
from .integrator import IntegratorConfig
from .opspace import (
    MAX_DIM,
    InvalidStateError,
    ToleranceSet,
    UnitSystem,
    is_hermitian,
    pure_state,
    spectral_decompose,
)
from .single import ConstantTau, GeneratorSet, MaxEPRTau, SingleSystem, gibbs_state


class ConfigError(ValueError):
    """Invalid scenario; ``field`` is the dotted path of the offending entry."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path
        self.message = message

    def as_dict(self) -> dict:
        return {"error": "config", "field": self.field, "message": self.message}


# ----------------------------------------------------------------------
# matrices
# ----------------------------------------------------------------------

def _entry(x, path):
    if isinstance(x, bool):
        raise ConfigError(path, "boolean is not a matrix entry")
    if isinstance(x, (int, float)):
        return complex(float(x), 0.0)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                            for v in x):
        return complex(float(x[0]), float(x[1]))
    raise ConfigError(path, f"entry must be a number or a [re, im] pair, got {x!r}")


def parse_matrix(value, path: str, hermitian: bool = True) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or not value or not all(isinstance(r, (list, tuple)) for r in value):
        raise ConfigError(path, "matrix must be a nonempty list of rows")
    n = len(value)
    if n > MAX_DIM:
        raise ConfigError(path, f"dimension {n} exceeds the supported maximum {MAX_DIM}")
    if any(len(r) != n for r in value):
        raise ConfigError(path, f"matrix must be square ({n} rows)")
    M = np.array([[_entry(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(value)])
    if not np.all(np.isfinite(M)):
        raise ConfigError(path, "matrix has non-finite entries")
    if hermitian and not is_hermitian(M, 1e-12):
        i, j = np.unravel_index(np.argmax(np.abs(M - M.conj().T)), M.shape)
        raise ConfigError(path, f"matrix is not Hermitian: entry ({i},{j}) = {M[i, j]} but ({j},{i}) = {M[j, i]}")
    return M


def matrix_to_config(M) -> list:
    """Inverse of ``parse_matrix``: real entries stay numbers, complex ones become pairs."""
    out = []
    for row in np.asarray(M):
        out.append([float(z.real) if z.imag == 0 else [float(z.real), float(z.imag)] for z in row])
    return out


# ----------------------------------------------------------------------
# presets
# ----------------------------------------------------------------------

STATE_PRESETS = {
    "QUBIT-A": fx.QUBIT_A_RHO,
    "QUTRIT-D": fx.QUTRIT_D_RHO,
    "QUTRIT-RANK2": fx.QUTRIT_RANK2_RHO,
    "TWO-QUBIT": fx.TWO_QUBIT_RHO,
    "TWO-QUBIT-CORRELATED": fx.TWO_QUBIT_CORRELATED_RHO,
}

_SZ = matrix_to_config(fx.SIGMA_Z)

PRESETS = {
    "qubit-coherence": {
        "description": "qubit with a coherence, H = diag(0, 1), constant tau",
        "system": {"H": matrix_to_config(fx.QUBIT_A_H)},
        "initial_state": {"preset": "QUBIT-A"},
        "tau": {"policy": "constant", "value": 1.0},
        "run": {"method": "RK4", "dt": 0.01, "t_end": 10.0, "sample_every": 10},
    },
    "qutrit-diagonal": {
        "description": "diagonal qutrit relaxing to the energy-matched Gibbs state",
        "system": {"H": matrix_to_config(fx.QUTRIT_D_H)},
        "initial_state": {"preset": "QUTRIT-D"},
        "tau": {"policy": "constant", "value": 1.0},
        "run": {"method": "RK4", "dt": 0.01, "t_end": 30.0, "sample_every": 10},
    },
    "gibbs": {
        "description": "qutrit started in a Gibbs state; the trajectory is constant",
        "system": {"H": matrix_to_config(fx.QUTRIT_D_H)},
        "initial_state": {"gibbs": {"beta": 0.5}},
        "tau": {"policy": "constant", "value": 1.0},
        "run": {"method": "RK4", "dt": 0.01, "t_end": 1.0, "sample_every": 10, "stop_at_equilibrium": False},
    },
    "two-qubit-correlated": {
        "description": "two noninteracting qubits in a Werner-type correlated state",
        "system": {"dims": [2, 2], "local_hamiltonians": [_SZ, _SZ]},
        "initial_state": {"preset": "TWO-QUBIT"},
        "tau": {"policy": "constant", "value": 1.0},
        "run": {"method": "RK4", "dt": 0.01, "t_end": 2.0, "sample_every": 10},
    },
    "two-qubit-generic": {
        "description": "two noninteracting qubits in a correlated state with non-trivial marginals",
        "system": {"dims": [2, 2], "local_hamiltonians": [_SZ, _SZ]},
        "initial_state": {"preset": "TWO-QUBIT-CORRELATED"},
        "tau": {"policy": "constant", "value": 1.0},
        "run": {"method": "RK4", "dt": 0.01, "t_end": 5.0, "sample_every": 10},
    },
    "appendix-g-demo": {
        "description": "the square-root-perception variant, which breaks separate energy conservation",
        "system": {"dims": [2, 2], "local_hamiltonians": [_SZ, _SZ]},
        "initial_state": {"preset": "TWO-QUBIT-CORRELATED"},
        "tau": {"policy": "constant", "value": 1.0},
        "dynamics": "flawed",
        "run": {"method": "RK4", "dt": 0.01, "t_end": 5.0, "sample_every": 10},
    },
}

DEFAULTS = {
    "dynamics": "paper",
    "tau": {"policy": "constant", "value": 1.0},
    "run": {},
    "units": {"hbar": 1.0, "k_B": 1.0},
    "tolerances": {},
    "output": {"format": "csv"},
    "analysis": {"basis": "gell-mann", "n_random": 12, "seed": 0},
}

_KNOWN_BLOCKS = {"description", "system", "initial_state", "tau", "dynamics", "run", "units", "tolerances", "output",
                 "analysis", "sweep"}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset_dict(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return copy.deepcopy(PRESETS[name])


# ----------------------------------------------------------------------
# scenario
# ----------------------------------------------------------------------

@dataclass(eq=False)
class Scenario:
    raw: dict
    system: object
    initial: object  # SpectralState
    run: IntegratorConfig
    units: UnitSystem
    tol: ToleranceSet
    dynamics: str
    composite: bool
    output: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)

    @property
    def generators(self) -> GeneratorSet:
        return self.system.generators


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _block(cfg, name) -> dict:
    b = cfg.get(name, {})
    if b is None:
        return {}
    if not isinstance(b, dict):
        raise ConfigError(name, "block must be a mapping")
    return b


def _number(block, key, path, default=None, positive=False, integer=False):
    v = block.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    if not math.isfinite(v) or (positive and not v > 0):
        raise ConfigError(f"{path}.{key}", f"expected a positive finite number, got {v!r}")
    return int(v) if integer else float(v)


def _unknown(block, allowed, path):
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}", f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _policy(block, path):
    _unknown(block, {"policy", "value", "fallback", "variance_epsilon", "per_subsystem"}, path)
    kind = str(block.get("policy", "constant")).lower()
    if kind == "constant":
        return ConstantTau(_number(block, "value", path, 1.0, positive=True))
    if kind in ("maxepr", "max_epr", "max-epr"):
        return MaxEPRTau(_number(block, "fallback", path, 1.0, positive=True),
                         _number(block, "variance_epsilon", path, 1e-12, positive=True))
    raise ConfigError(f"{path}.policy", f"unknown tau policy {kind!r} (constant | maxepr)")


def _system(cfg):
    sb = _block(cfg, "system")
    _unknown(sb, {"dims", "H", "local_hamiltonians", "V", "extras", "labels"}, "system")
    extras = [parse_matrix(G, f"system.extras[{i}]") for i, G in enumerate(sb.get("extras") or [])]
    dims = sb.get("dims")
    if dims is None:
        if "H" not in sb:
            raise ConfigError("system.H", "missing Hamiltonian")
        if "local_hamiltonians" in sb or "V" in sb:
            raise ConfigError("system.dims", "local_hamiltonians and V need dims")
        H = parse_matrix(sb["H"], "system.H")
        for i, G in enumerate(extras):
            if G.shape != H.shape:
                raise ConfigError(f"system.extras[{i}]", f"shape {G.shape} does not match H {H.shape}")
        try:
            return None, GeneratorSet(H, tuple(extras))
        except ValueError as exc:
            raise ConfigError("system.extras", str(exc)) from exc
    if not isinstance(dims, (list, tuple)) or not dims or not all(isinstance(d, int) and d >= 1 for d in dims):
        raise ConfigError("system.dims", f"expected a list of positive integers, got {dims!r}")
    total = int(np.prod(dims))
    if total > MAX_DIM:
        raise ConfigError("system.dims", f"total dimension {total} exceeds {MAX_DIM}")
    labels = tuple(sb.get("labels") or ())
    try:
        comp = cmp.CompositionStructure(tuple(dims), labels)
    except ValueError as exc:
        raise ConfigError("system.labels", str(exc)) from exc
    for i, G in enumerate(extras):
        if G.shape[0] != total:
            raise ConfigError(f"system.extras[{i}]", f"dimension {G.shape[0]} does not match {total}")
    if "local_hamiltonians" in sb:
        if "H" in sb:
            raise ConfigError("system.H", "give either H or local_hamiltonians, not both")
        hs = sb["local_hamiltonians"]
        if not isinstance(hs, list) or len(hs) != len(dims):
            raise ConfigError("system.local_hamiltonians", f"need one matrix per subsystem ({len(dims)})")
        local = []
        for J, h in enumerate(hs):
            m = parse_matrix(h, f"system.local_hamiltonians[{J}]")
            if m.shape[0] != dims[J]:
                raise ConfigError(f"system.local_hamiltonians[{J}]", f"dimension {m.shape[0]} != {dims[J]}")
            local.append(m)
        V = None
        if sb.get("V") is not None:
            V = parse_matrix(sb["V"], "system.V")
            if V.shape[0] != total:
                raise ConfigError("system.V", f"dimension {V.shape[0]} does not match {total}")
        try:
            return comp, cmp.CompositeGenerators(comp, tuple(local), V, tuple(extras))
        except ValueError as exc:
            raise ConfigError("system.extras", str(exc)) from exc
    if "H" not in sb:
        raise ConfigError("system.H", "missing Hamiltonian (H or local_hamiltonians)")
    H = parse_matrix(sb["H"], "system.H")
    if H.shape[0] != total:
        raise ConfigError("system.H", f"dimension {H.shape[0]} does not match dims product {total}")
    try:
        return comp, cmp.CompositeGenerators.from_total(comp, H, tuple(extras))
    except ValueError as exc:
        raise ConfigError("system.extras", str(exc)) from exc


def _initial(cfg, gen, units, tol):
    ib = _block(cfg, "initial_state")
    keys = [k for k in ("rho", "preset", "pure", "gibbs") if k in ib]
    _unknown(ib, {"rho", "preset", "pure", "gibbs"}, "initial_state")
    if len(keys) != 1:
        raise ConfigError("initial_state", "give exactly one of rho, preset, pure, gibbs")
    kind = keys[0]
    path = f"initial_state.{kind}"
    if kind == "rho":
        rho = parse_matrix(ib["rho"], path)
    elif kind == "preset":
        name = ib["preset"]
        if name == "maximally-mixed":
            rho = np.eye(gen.dim, dtype=complex) / gen.dim
        elif name in STATE_PRESETS:
            rho = np.array(STATE_PRESETS[name], dtype=complex)
        else:
            raise ConfigError(path, f"unknown state preset {name!r}; available: "
                                    f"{', '.join(sorted(STATE_PRESETS) + ['maximally-mixed'])}")
    elif kind == "pure":
        v = ib["pure"]
        if not isinstance(v, list) or not v:
            raise ConfigError(path, "expected a list of amplitudes")
        psi = np.array([_entry(x, f"{path}[{i}]") for i, x in enumerate(v)])
        if np.linalg.norm(psi) == 0:
            raise ConfigError(path, "zero vector")
        rho = pure_state(psi)
    else:
        gb = ib["gibbs"] if isinstance(ib["gibbs"], dict) else {}
        _unknown(gb, {"beta", "nus"}, path)
        beta = _number(gb, "beta", path, 1.0)
        nus = gb.get("nus", [0.0] * len(gen.extras))
        try:
            return gibbs_state(gen, beta, nus, units, tol)
        except (ValueError, OverflowError) as exc:
            raise ConfigError(path, str(exc)) from exc
    if rho.shape[0] != gen.dim:
        raise ConfigError(path, f"dimension {rho.shape[0]} does not match the system ({gen.dim})")
    try:
        return spectral_decompose(rho, units, tol)
    except (InvalidStateError, ValueError) as exc:
        raise ConfigError(path, f"not a valid density operator: {exc}") from exc


def _run(cfg):
    rb = _block(cfg, "run")
    allowed = {"method", "dt", "t_end", "sample_every", "projection_policy", "equilibrium_epsilon", "max_drift",
               "stop_at_equilibrium", "rtol", "atol", "min_dt", "max_steps"}
    _unknown(rb, allowed, "run")
    kw = {}
    for k in ("dt", "t_end", "equilibrium_epsilon", "max_drift", "rtol", "atol", "min_dt"):
        if k in rb:
            kw[k] = _number(rb, k, "run", positive=True)
    for k in ("sample_every", "max_steps"):
        if k in rb:
            kw[k] = _number(rb, k, "run", positive=True, integer=True)
    if "method" in rb:
        kw["method"] = str(rb["method"])
    if "projection_policy" in rb:
        kw["projection_policy"] = str(rb["projection_policy"])
    if "stop_at_equilibrium" in rb:
        if not isinstance(rb["stop_at_equilibrium"], bool):
            raise ConfigError("run.stop_at_equilibrium", "expected true or false")
        kw["stop_at_equilibrium"] = rb["stop_at_equilibrium"]
    try:
        return IntegratorConfig(**kw)
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in ("method", "projection_policy", "sample_every") if k in msg), "run")
        raise ConfigError(f"run.{key}" if key != "run" else "run", msg) from exc


def resolve(cfg: dict) -> dict:
    """Expand ``preset`` references and fill defaults; returns a plain dict."""
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "configuration must be a mapping")
    cfg = copy.deepcopy(cfg)
    if "preset" in cfg:
        base = preset_dict(cfg.pop("preset"))
        cfg = _merge(base, cfg)
    extra = sorted(set(cfg) - _KNOWN_BLOCKS)
    if extra:
        raise ConfigError(extra[0], f"unknown block (allowed: {', '.join(sorted(_KNOWN_BLOCKS))})")
    return _merge(DEFAULTS, cfg)


def build(cfg: dict) -> Scenario:
    cfg = resolve(cfg)
    ub = _block(cfg, "units")
    _unknown(ub, {"hbar", "k_B"}, "units")
    units = UnitSystem(_number(ub, "hbar", "units", 1.0, positive=True), _number(ub, "k_B", "units", 1.0, positive=True))
    tb = _block(cfg, "tolerances")
    _unknown(tb, {"rank_epsilon", "manifold_epsilon", "equilibrium_epsilon", "drift_epsilon"}, "tolerances")
    tol = ToleranceSet(**{k: _number(tb, k, "tolerances", positive=True) for k in tb})

    comp, gens = _system(cfg)
    dynamics = cfg.get("dynamics", "paper")
    if dynamics not in ("paper", "flawed", "unitary"):
        raise ConfigError("dynamics", f"expected paper | flawed | unitary, got {dynamics!r}")
    tb = _block(cfg, "tau")
    base_policy = _policy(tb, "tau")
    analysis = _block(cfg, "analysis")
    _unknown(analysis, {"basis", "partition", "n_random", "seed"}, "analysis")
    if analysis.get("basis") not in ("gell-mann", "orthogonal-extension"):
        raise ConfigError("analysis.basis", "expected gell-mann or orthogonal-extension")
    if comp is None:
        if dynamics == "flawed":
            raise ConfigError("dynamics", "the flawed variant needs a composite system (system.dims)")
        if "per_subsystem" in tb:
            raise ConfigError("tau.per_subsystem", "only meaningful for composite systems")
        system = SingleSystem(gens, base_policy, dissipation=dynamics != "unitary")
        gen = gens
    else:
        per = tb.get("per_subsystem")
        if per is not None:
            if not isinstance(per, list) or len(per) != comp.M:
                raise ConfigError("tau.per_subsystem", f"need one policy block per subsystem ({comp.M})")
            policies = [_policy(_merge({k: v for k, v in tb.items() if k != "per_subsystem"}, p or {}),
                                f"tau.per_subsystem[{J}]") for J, p in enumerate(per)]
        else:
            policies = base_policy
        partition = analysis.get("partition")
        part = None
        if partition is not None:
            if (not isinstance(partition, list) or not partition
                    or not all(isinstance(j, int) and 0 <= j < comp.M for j in partition)
                    or len(set(partition)) == comp.M):
                raise ConfigError("analysis.partition", "expected a proper, nonempty list of subsystem indices")
            part = (sorted(partition), comp.complement(partition))
        system = cmp.CompositeSystem(comp, gens, policies, dynamics, part)
        gen = gens.generator_set
    initial = _initial(cfg, gen, units, tol)
    run = _run(cfg)
    out = _block(cfg, "output")
    _unknown(out, {"dir", "format", "prefix"}, "output")
    if out.get("format", "csv") not in ("csv", "json"):
        raise ConfigError("output.format", "expected csv or json")
    for k in ("n_random", "seed"):
        _number(analysis, k, "analysis", integer=True)
    return Scenario(cfg, system, initial, run, units, tol, dynamics, comp is not None, out, analysis)


def load_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML syntax error: {exc}") from exc
    if data is None:
        raise ConfigError("<root>", "configuration file is empty")
    return data


def load(path=None, preset: str | None = None, overrides: dict | None = None) -> Scenario:
    if path is None and preset is None:
        raise ConfigError("<root>", "need --config or --preset")
    cfg = load_file(path) if path is not None else {}
    if preset is not None:
        cfg = {**cfg, "preset": preset}
    if overrides:
        cfg = _merge(cfg, overrides)
    return build(cfg)


def set_path(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with ``value`` stored under the dotted key path."""
    out = copy.deepcopy(cfg)
    node = out
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, f"{k} is not a block")
    node[keys[-1]] = value
    return out


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False)


__all__ = ["ConfigError", "Scenario", "PRESETS", "STATE_PRESETS", "build", "load", "load_file", "resolve",
           "parse_matrix", "matrix_to_config", "preset_names", "preset_dict", "set_path", "dump"]
