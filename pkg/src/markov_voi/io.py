"""File formats: matrix CSV with sidecar JSON, result bundles, hierarchy and
curve exports, traces, correction reports and run manifests.

Matrices are written with 17 significant digits so every value re-parses to
the identical double. JSON floats use Python's shortest round-trip repr,
which is equally lossless.
"""
import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import ReducedModel, harden
from .annealing import HierarchyLevel
from .errors import MarkovVoIError
from .markov import TransitionModel

FLOAT_FMT = "%.17g"


class FormatError(MarkovVoIError):
    """An input file is empty, ragged or not numeric."""


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def write_matrix(path, matrix):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with open(path, "w", newline="") as fh:
        for row in matrix:
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def read_matrix(path):
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as err:
                raise FormatError(f"{path}: line {k + 1} is not numeric") from err
    if not rows:
        raise FormatError(f"{path}: no data")
    if len({len(r) for r in rows}) != 1:
        raise FormatError(f"{path}: rows have different lengths")
    out = np.array(rows)
    if not np.all(np.isfinite(out)):
        raise FormatError(f"{path}: non-finite entries")
    return out


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def write_sidecar(path, gamma, spec=None):
    data = {"n": len(gamma), "gamma": _floats(gamma)}
    if spec is not None:
        data["spec"] = {"block_sizes": list(spec.block_sizes), "epsilon": spec.epsilon,
                        "seed": spec.seed}
    write_json(path, data)


def write_chain(path, model, spec=None):
    """Matrix CSV at ``path`` plus the sidecar JSON next to it."""
    write_matrix(path, model.pi)
    write_sidecar(sidecar_path(path), model.gamma, spec)


def load_chain(path):
    """Chain from a matrix CSV; the stationary law is recomputed, not read."""
    return TransitionModel.from_matrix(read_matrix(path))


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as err:
            raise FormatError(f"{path}: {err}") from err


def result_bundle(state, beta, divergence_bits, information_bits, phi):
    return {
        "m": int(state.m),
        "beta": float(beta),
        "psi": _floats(state.psi),
        "theta": _floats(state.theta),
        "phi": _floats(phi.phi),
        "alpha": _floats(phi.alpha),
        "divergence_bits": float(divergence_bits),
        "information_bits": float(information_bits),
    }


def level_to_dict(level):
    return {
        "m": level.m,
        "beta_critical": level.beta_critical,
        "beta": level.beta,
        "psi": _floats(level.psi),
        "theta": _floats(level.theta),
        "phi": _floats(level.phi.phi),
        "alpha": _floats(level.phi.alpha),
        "divergence_bits": level.divergence_bits,
        "information_bits": level.information_bits,
        "corrected_information_bits": level.corrected_information_bits,
        "beta_star": level.beta_star,
        "partition_information_bits": level.partition_information_bits,
        "constraint_information_bits": level.constraint_information_bits,
        "gamma_term_bits": level.gamma_term_bits,
        "kappa_term_bits": level.kappa_term_bits,
        "converged": level.converged,
    }


_LEVEL_REQUIRED = ("m", "beta_critical", "psi", "theta", "phi", "alpha", "divergence_bits",
                   "information_bits", "corrected_information_bits", "beta_star")


def level_from_dict(d):
    missing = [k for k in _LEVEL_REQUIRED if k not in d]
    if missing:
        raise FormatError(f"hierarchy level lacks {', '.join(missing)}")
    try:
        return HierarchyLevel(
            beta_critical=float(d["beta_critical"]),
            beta=float(d.get("beta", d["beta_critical"])),
            m=int(d["m"]),
            psi=np.array(d["psi"], dtype=float),
            theta=np.array(d["theta"], dtype=float),
            phi=ReducedModel(np.array(d["phi"], dtype=float), np.array(d["alpha"], dtype=float)),
            divergence_bits=float(d["divergence_bits"]),
            information_bits=float(d["information_bits"]),
            corrected_information_bits=float(d["corrected_information_bits"]),
            beta_star=float(d["beta_star"]),
            partition_information_bits=float(d.get("partition_information_bits", 0.0)),
            constraint_information_bits=float(d.get("constraint_information_bits", 0.0)),
            gamma_term_bits=float(d.get("gamma_term_bits", 0.0)),
            kappa_term_bits=float(d.get("kappa_term_bits", 0.0)),
            converged=bool(d.get("converged", True)),
        )
    except (TypeError, ValueError) as err:
        raise FormatError(f"malformed hierarchy level: {err}") from err


def write_hierarchy(path, hierarchy):
    write_json(path, [level_to_dict(lv) for lv in hierarchy])


def read_hierarchy(path):
    data = read_json(path)
    if not isinstance(data, list):
        raise FormatError(f"{path}: expected a JSON array of levels")
    levels = []
    for d in data:
        if not isinstance(d, dict):
            raise FormatError(f"{path}: every level must be a JSON object")
        levels.append(level_from_dict(d))
    return levels


CURVE_COLUMNS = ("m", "beta_critical", "divergence_bits", "information_bits",
                 "corrected_information_bits", "beta_star")


def write_curve(path, hierarchy):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for lv in hierarchy:
            vals = [lv.beta_critical, lv.divergence_bits, lv.information_bits,
                    lv.corrected_information_bits, lv.beta_star]
            fh.write(",".join([str(lv.m)] + [FLOAT_FMT % v for v in vals]) + "\n")


def write_trace(path, state):
    """``iter, objective_bits, max_delta_psi`` rows, one per update."""
    with open(path, "w", newline="") as fh:
        fh.write("iter,objective_bits,max_delta_psi\n")
        for k, (obj, delta) in enumerate(zip(state.objective_trace, state.delta_trace), 1):
            fh.write(f"{k},{FLOAT_FMT % obj},{FLOAT_FMT % delta}\n")


def correction_report(hierarchy, g_max, sample_count):
    return [{
        "m": lv.m,
        "raw_information_bits": lv.information_bits,
        "corrected_information_bits": lv.corrected_information_bits,
        "gamma_term_bits": lv.gamma_term_bits,
        "kappa_term_bits": lv.kappa_term_bits,
        "g_max": int(g_max),
        "sample_count": int(sample_count),
    } for lv in hierarchy]


def write_partition(path, psi, hardened=False):
    write_matrix(path, harden(psi) if hardened else psi)


@dataclass
class RunManifest:
    """Everything needed to re-execute a command: its name, files and the
    full set of configuration values."""

    command: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    version: str = ""
    duration_s: float = 0.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict) or "command" not in d:
            raise FormatError("manifest lacks a command")
        known = {k: d[k] for k in ("command", "inputs", "outputs", "config", "version",
                                   "duration_s") if k in d}
        return cls(**known)

    def write(self, path):
        write_json(path, self.to_dict())

    @classmethod
    def read(cls, path):
        return cls.from_dict(read_json(path))
