"""Structured-text serialization: JSON documents with [re, im] matrix entries.

Floats are written with ``repr``, which is the shortest digit string (at most
17 significant digits) that round-trips exactly; documents therefore
deserialize to bit-identical arrays.
"""

from __future__ import annotations

import json

import numpy as np

from .flow import NahmCurve
from .model import ModelSolution, validate_model_solution


def encode_matrix(m: np.ndarray):
    """Nested lists of [re, im] pairs."""
    arr = np.asarray(m, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in arr]


def decode_matrix(data) -> np.ndarray:
    return np.array([[complex(x[0], x[1]) for x in row] for row in data], dtype=complex)


def encode_triple(t: np.ndarray):
    return [encode_matrix(t[i]) for i in range(3)]


def decode_triple(data) -> np.ndarray:
    return np.stack([decode_matrix(d) for d in data])


def encode_model(ms: ModelSolution):
    return {"gamma": encode_triple(ms.gamma), "nn": encode_triple(ms.nn)}


def decode_model(data) -> ModelSolution:
    return validate_model_solution(decode_triple(data["gamma"]), decode_triple(data["nn"]))


class _ReprFloat(float):
    def __repr__(self):  # exact round-trip formatting
        return float.__repr__(self)


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True)


def curve_to_text(curve: NahmCurve) -> str:
    doc = {
        "kind": "nahm-curve",
        "grid": [float(t) for t in curve.grid],
        "samples": [encode_triple(curve.a[k]) for k in range(len(curve.grid))],
        "tail_minus": encode_model(curve.minus),
        "tail_plus": encode_model(curve.plus),
        "tail_tol": float(curve.tail_tol),
    }
    return dumps(doc)


def curve_from_text(text: str) -> NahmCurve:
    doc = json.loads(text)
    if doc.get("kind") != "nahm-curve":
        raise ValueError("not a curve document")
    grid = np.asarray(doc["grid"], dtype=float)
    samples = np.stack([decode_triple(s) for s in doc["samples"]])
    return NahmCurve(grid=grid, a=samples,
                     minus=decode_model(doc["tail_minus"]),
                     plus=decode_model(doc["tail_plus"]),
                     tail_tol=float(doc["tail_tol"]))


def _encode_complex_array(a: np.ndarray):
    return {"shape": list(a.shape),
            "re": [float(x) for x in np.asarray(a, complex).real.ravel()],
            "im": [float(x) for x in np.asarray(a, complex).imag.ravel()]}


def _decode_complex_array(d) -> np.ndarray:
    re = np.asarray(d["re"], dtype=float)
    im = np.asarray(d["im"], dtype=float)
    return (re + 1j * im).reshape(d["shape"])


def mode_kernel_to_text(kern) -> str:
    doc = {
        "kind": "mode-kernel",
        "n": list(kern.n),
        "sign": kern.sign,
        "dim": kern.dim,
        "basis": _encode_complex_array(kern.basis),
        "angles": [float(x) for x in kern.principal_angles],
        "uncertain": bool(kern.uncertain),
        "mismatch": float(kern.matching_mismatch),
    }
    for name, tail in (("tail_minus", kern.tail_minus), ("tail_plus", kern.tail_plus)):
        if tail is None:
            doc[name] = None
        else:
            doc[name] = {
                "t_end": float(tail.t_end),
                "rates": [float(x) for x in tail.rates],
                "vectors": _encode_complex_array(tail.vectors),
                "coeffs": _encode_complex_array(tail.coeffs),
            }
    return dumps(doc)


def mode_kernel_from_text(text: str, op, sign: int):
    from .dirac import ModeKernel, TailData

    doc = json.loads(text)
    if doc.get("kind") != "mode-kernel" or doc["sign"] != sign:
        raise ValueError("kernel cache document mismatch")

    def tail(d):
        if d is None:
            return None
        return TailData(t_end=d["t_end"], rates=np.asarray(d["rates"], float),
                        vectors=_decode_complex_array(d["vectors"]),
                        coeffs=_decode_complex_array(d["coeffs"]))

    return ModeKernel(op=op, sign=sign, dim=int(doc["dim"]),
                      basis=_decode_complex_array(doc["basis"]),
                      tail_minus=tail(doc["tail_minus"]), tail_plus=tail(doc["tail_plus"]),
                      principal_angles=np.asarray(doc["angles"], float),
                      uncertain=bool(doc["uncertain"]),
                      matching_mismatch=float(doc["mismatch"]))
