"""Chebyshev correlation sequence by three-term recursion with doubling.

Each application of the scaled Hamiltonian advances xi_{n+1} = 2 H xi_n -
xi_{n-1}; two coefficients are emitted per step through the doubling
identities c_{2n} = 2 <xi_n|xi_n> - c_0 and c_{2n-1} = 2 <xi_{n-1}|xi_n> -
c_1, so n_coeffs coefficients cost n_coeffs/2 applications and three live
vectors. Checkpoints are self-describing little-endian binaries written
atomically (temp file + rename).
"""

from __future__ import annotations

import os
import struct
import hashlib
from dataclasses import dataclass

import numpy as np

from .hamiltonian import (DivergenceError, ScaledHamiltonian, StateVector,
                          dot_det)

_MAGIC = b"TVCHKP1\x00"
_PARITY_CODE = {"none": 0, "even": 1, "odd": 2}
_PARITY_NAME = {v: k for k, v in _PARITY_CODE.items()}
_HEADER = struct.Struct("<8sIQQQQBxxxqdd64s")


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or incompatible checkpoint."""


@dataclass
class ChebyshevSequence:
    coeffs: np.ndarray
    grid_hash: str
    shift: float
    half_width: float
    parity: str
    seed: int
    steps_done: int

    @property
    def n_coeffs(self):
        return len(self.coeffs)

    def energy(self, omega):
        """True energy of a scaled angular frequency."""
        return self.shift + self.half_width * np.cos(omega)

    def omega(self, energy):
        x = (np.asarray(energy, float) - self.shift) / self.half_width
        if np.any(np.abs(x) > 1.0):
            raise ValueError("energy outside the scaled spectral range")
        return np.arccos(x)


@dataclass
class _LiveState:
    c: np.ndarray          # coefficients emitted so far (contiguous prefix)
    n_done: int            # count of valid coefficients
    steps: int             # H applications performed
    v_prev: np.ndarray     # xi_{steps-1}
    v_curr: np.ndarray     # xi_steps


def _run(h: ScaledHamiltonian, state: _LiveState, n_coeffs: int,
         parity: str, seed: int, checkpoint_path=None, checkpoint_stride=0,
         progress=None) -> ChebyshevSequence:
    c = state.c
    c0, c1 = c[0], c[1]
    bound = 10.0 * abs(c0)
    total_steps = n_coeffs // 2
    while state.steps < total_steps:
        v_next = 2.0 * h.apply_scaled(state.v_curr) - state.v_prev
        state.v_prev = state.v_curr
        state.v_curr = v_next
        state.steps += 1
        n = state.steps
        c[2 * n - 1] = 2.0 * dot_det(state.v_prev, state.v_curr) - c1
        state.n_done = 2 * n
        if 2 * n < n_coeffs:
            c[2 * n] = 2.0 * dot_det(state.v_curr, state.v_curr) - c0
            state.n_done = 2 * n + 1
        recent = c[2 * n - 1:state.n_done]
        if np.any(np.abs(recent) > bound):
            raise DivergenceError(
                f"|c_n| exceeded 10*c_0 at step {n}: the scaled spectrum is "
                f"not inside [-1, 1]; re-estimate the bounds "
                f"(shift={h.shift:g}, half_width={h.half_width:g})")
        if checkpoint_path and checkpoint_stride and n % checkpoint_stride == 0:
            _write_checkpoint(checkpoint_path, h, state, n_coeffs, parity, seed)
        if progress is not None:
            progress(n, total_steps)
    if checkpoint_path:
        _write_checkpoint(checkpoint_path, h, state, n_coeffs, parity, seed)
    return ChebyshevSequence(
        coeffs=c[:n_coeffs].copy(), grid_hash=h.grid.content_hash(),
        shift=h.shift, half_width=h.half_width, parity=parity, seed=seed,
        steps_done=state.steps)


def generate_sequence(h: ScaledHamiltonian, xi0: StateVector, n_coeffs: int,
                      seed: int = 0, checkpoint_path=None,
                      checkpoint_stride: int = 0, progress=None) -> ChebyshevSequence:
    """Generate c_0 .. c_{n_coeffs-1} from a normalized start vector."""
    if n_coeffs < 2 or n_coeffs % 2:
        raise ValueError("n_coeffs must be even and >= 2")
    v0 = xi0.values
    c0 = dot_det(v0, v0)
    if abs(c0 - 1.0) > 1e-8:
        raise ValueError("xi0 must be normalized")
    v1 = h.apply_scaled(v0)
    c = np.zeros(n_coeffs + 1)
    c[0] = c0
    c[1] = dot_det(v0, v1)
    state = _LiveState(c=c, n_done=2, steps=1, v_prev=v0.copy(), v_curr=v1)
    if n_coeffs > 2:
        c[2] = 2.0 * dot_det(v1, v1) - c0
        state.n_done = 3
    return _run(h, state, n_coeffs, xi0.parity, seed,
                checkpoint_path, checkpoint_stride, progress)


# -- checkpoint format -------------------------------------------------------

def _write_checkpoint(path, h: ScaledHamiltonian, state: _LiveState,
                      n_coeffs: int, parity: str, seed: int):
    grid_hash = h.grid.content_hash().encode()
    header = _HEADER.pack(
        _MAGIC, 1, n_coeffs, state.steps, state.n_done, state.v_curr.size,
        _PARITY_CODE[parity], seed, h.shift, h.half_width, grid_hash)
    payload = (state.c[:state.n_done].astype("<f8").tobytes()
               + state.v_prev.astype("<f8").tobytes()
               + state.v_curr.astype("<f8").tobytes())
    digest = hashlib.sha256(payload).digest()
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        fh.write(digest)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def read_checkpoint(path):
    """Header dict + live state from a checkpoint file; verifies integrity."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size or raw[:8] != _MAGIC:
        raise CheckpointError(f"{path}: not a sequence checkpoint")
    (_, version, n_coeffs, steps, n_done, vec_len, pcode, seed,
     shift, half_width, grid_hash) = _HEADER.unpack(raw[:_HEADER.size])
    if version != 1:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    expect = _HEADER.size + 8 * (n_done + 2 * vec_len) + 32
    if len(raw) != expect:
        raise CheckpointError(
            f"{path}: truncated or padded checkpoint "
            f"({len(raw)} bytes, expected {expect})")
    payload = raw[_HEADER.size:-32]
    if hashlib.sha256(payload).digest() != raw[-32:]:
        raise CheckpointError(f"{path}: payload hash mismatch")
    data = np.frombuffer(payload, dtype="<f8")
    c_done = data[:n_done]
    v_prev = data[n_done:n_done + vec_len].copy()
    v_curr = data[n_done + vec_len:].copy()
    header = {
        "n_coeffs": int(n_coeffs), "steps": int(steps), "n_done": int(n_done),
        "vec_len": int(vec_len), "parity": _PARITY_NAME[pcode],
        "seed": int(seed), "shift": shift, "half_width": half_width,
        "grid_hash": grid_hash.decode(),
    }
    return header, c_done, v_prev, v_curr


def resume(path, h: ScaledHamiltonian, checkpoint_stride: int = 0,
           progress=None) -> ChebyshevSequence:
    """Continue generation from a checkpoint, bit-identically.

    Refuses (with a field-by-field diff) if the checkpoint was produced for a
    different grid, scaling, or vector length.
    """
    header, c_done, v_prev, v_curr = read_checkpoint(path)
    mismatches = []
    expected = {
        "grid_hash": h.grid.content_hash(),
        "shift": h.shift,
        "half_width": h.half_width,
        "vec_len": h.grid.n_retained,
    }
    for key, want in expected.items():
        got = header[key]
        if got != want:
            mismatches.append(f"  {key}: checkpoint={got!r} current={want!r}")
    if mismatches:
        raise CheckpointError(
            f"{path}: incompatible with the current run:\n" + "\n".join(mismatches))
    n_coeffs = header["n_coeffs"]
    c = np.zeros(n_coeffs + 1)
    c[:header["n_done"]] = c_done
    state = _LiveState(c=c, n_done=header["n_done"], steps=header["steps"],
                       v_prev=v_prev, v_curr=v_curr)
    return _run(h, state, n_coeffs, header["parity"], header["seed"],
                path, checkpoint_stride, progress)
