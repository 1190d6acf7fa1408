"""Scalar objectives of the ADC matrix and their derivatives.

An objective is a weighted sum of terms ``k11 .. k23``, ``aac``, ``isogap``
(largest minus smallest eigenvalue) and ``target(FILE)`` (Frobenius distance
to a target matrix).  Expressions such as ``"k33 + aac - 4*isogap"`` are
parsed by :func:`parse_objective`.
"""

import json
import logging
import re
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

ENTRY_TOKENS = {
    "k11": (0, 0), "k22": (1, 1), "k33": (2, 2),
    "k12": (0, 1), "k13": (0, 2), "k23": (1, 2),
}
GRAMMAR = ("objective := term (('+'|'-') term)*;  term := [number '*'] token;  "
           "token := k11|k22|k33|k12|k13|k23|aac|isogap|target(FILE)")
DEGENERACY_TOL = 1e-10
FEASIBILITY_TOL = 1e-9


class ObjectiveParseError(ValueError):
    pass


@dataclass
class ObjectiveSpec:
    """Weighted combination of ADC-matrix terms.

    ``coefficients`` holds ``c_ij`` for the sum over upper-triangle entries;
    ``sense`` is ``"maximize"`` or ``"minimize"``.
    """

    coefficients: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    aac_weight: float = 0.0
    isogap_weight: float = 0.0
    target: np.ndarray = None
    target_weight: float = 0.0
    sense: str = "maximize"
    source: str = ""

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.sense not in ("maximize", "minimize"):
            raise ValueError(f"sense must be maximize or minimize, got {self.sense!r}")
        if self.target is not None:
            self.target = check_target(self.target)
        elif self.target_weight != 0.0:
            raise ValueError("target weight given without a target matrix")

    @property
    def kind(self):
        parts = [bool(np.any(self.coefficients)) or self.aac_weight != 0.0,
                 self.isogap_weight != 0.0, self.target_weight != 0.0]
        if sum(parts) > 1:
            return "composite"
        if parts[1]:
            return "iso-gap"
        if parts[2]:
            return "target-matrix"
        return "linear-combo"

    @property
    def sign(self):
        """+1 when maximizing, -1 when minimizing."""
        return 1.0 if self.sense == "maximize" else -1.0

    def value(self, kA):
        return evaluate_objective(self, kA)[0]


def check_target(target):
    """Validate a target matrix against the feasible region of ADC matrices."""
    t = np.asarray(target, dtype=float)
    if t.shape != (3, 3) or not np.all(np.isfinite(t)):
        raise ValueError("target must be a finite 3x3 matrix")
    if not np.allclose(t, t.T, rtol=0, atol=1e-12):
        raise ValueError("target must be symmetric")
    lam = np.linalg.eigvalsh(t)
    if lam.min() < -FEASIBILITY_TOL or lam.max() > 1 + FEASIBILITY_TOL \
            or lam.sum() > 2 + FEASIBILITY_TOL:
        raise ValueError(f"target eigenvalues {lam} outside 0 <= k_i <= 1, sum <= 2")
    return t


def load_target(path):
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data.get("target", data.get("kA"))
    return check_target(data)


_TOKEN_RE = re.compile(r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
                       r"|(?P<target>target\((?P<path>[^()]*)\))"
                       r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*]))")


def _tokenize(text):
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ObjectiveParseError(f"unexpected character at {pos} in {text!r}; grammar: {GRAMMAR}")
        pos = m.end()
        if m.group("num"):
            out.append(("num", float(m.group("num"))))
        elif m.group("target"):
            out.append(("target", m.group("path").strip()))
        elif m.group("name"):
            out.append(("name", m.group("name")))
        else:
            out.append(("op", m.group("op")))
    return out


def parse_objective(text, sense=None, target_loader=load_target):
    """Parse the objective mini-language into an :class:`ObjectiveSpec`.

    Without an explicit ``sense`` the objective is maximized, except a
    pure target distance which is minimized.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ObjectiveParseError(f"empty objective; grammar: {GRAMMAR}")
    coeff = np.zeros((3, 3))
    weights = {"aac": 0.0, "isogap": 0.0, "target": 0.0}
    target = None
    k = 0
    first = True
    while k < len(tokens):
        sign = 1.0
        if tokens[k][0] == "op" and tokens[k][1] in "+-":
            sign = -1.0 if tokens[k][1] == "-" else 1.0
            k += 1
        elif not first:
            raise ObjectiveParseError(f"expected '+' or '-' before {tokens[k][1]!r}; grammar: {GRAMMAR}")
        first = False
        scale = 1.0
        if k < len(tokens) and tokens[k][0] == "num":
            scale = tokens[k][1]
            k += 1
            if k >= len(tokens) or tokens[k] != ("op", "*"):
                raise ObjectiveParseError(f"expected '*' after number; grammar: {GRAMMAR}")
            k += 1
        if k >= len(tokens):
            raise ObjectiveParseError(f"objective ends early; grammar: {GRAMMAR}")
        kind, val = tokens[k]
        k += 1
        w = sign * scale
        if kind == "name" and val in ENTRY_TOKENS:
            coeff[ENTRY_TOKENS[val]] += w
        elif kind == "name" and val in ("aac", "isogap"):
            weights[val] += w
        elif kind == "target":
            t = target_loader(val)
            if target is not None and not np.array_equal(t, target):
                raise ObjectiveParseError("only one target matrix is supported")
            target = t
            weights["target"] += w
        else:
            raise ObjectiveParseError(f"unknown term {val!r}; grammar: {GRAMMAR}")
    if sense is None:
        pure_target = not np.any(coeff) and weights["aac"] == 0 and weights["isogap"] == 0
        sense = "minimize" if pure_target and weights["target"] > 0 else "maximize"
    return ObjectiveSpec(coefficients=coeff, aac_weight=weights["aac"],
                         isogap_weight=weights["isogap"], target=target,
                         target_weight=weights["target"], sense=sense, source=text)


def evaluate_objective(spec, kA):
    """Return ``(value, dfdk, flags)``.

    ``dfdk`` is a symmetric 3x3 matrix with ``df = sum_ij dfdk_ij dk_ij``;
    ``flags`` lists notes such as a degenerate eigenvalue or a reached target.
    """
    kA = np.asarray(kA, dtype=float)
    flags = []
    C = spec.coefficients
    value = float(np.sum(C * kA))
    dfdk = 0.5 * (C + C.T)
    if spec.aac_weight:
        value += spec.aac_weight * np.trace(kA) / 3.0
        dfdk = dfdk + spec.aac_weight * np.eye(3) / 3.0
    if spec.isogap_weight:
        lam, vec = np.linalg.eigh(kA)
        scale = max(abs(lam).max(), 1.0)
        if lam[1] - lam[0] < DEGENERACY_TOL * scale or lam[2] - lam[1] < DEGENERACY_TOL * scale:
            flags.append("degenerate-eigenvalue")
        pmax, pmin = vec[:, 2], vec[:, 0]
        value += spec.isogap_weight * (lam[2] - lam[0])
        dfdk = dfdk + spec.isogap_weight * (np.outer(pmax, pmax) - np.outer(pmin, pmin))
    if spec.target_weight:
        diff = kA - spec.target
        dist = np.linalg.norm(diff)
        value += spec.target_weight * dist
        if dist < 1e-14:
            flags.append("target-reached")
        else:
            dfdk = dfdk + spec.target_weight * diff / dist
    if not np.isfinite(value):
        raise ArithmeticError("objective is not finite")
    return float(value), dfdk, flags
