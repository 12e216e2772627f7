"""Windowed harmonic inversion of Chebyshev correlation sequences.

The sequence c_n = sum_k d_k cos(n w_k) is inverted window by window: the
cosines are embedded as complex exponentials e^{+-i n w}, a Fourier-type
basis psi_j = sum_n (2-delta_n0) cos(n phi_j) T_n(H) xi0 is placed at equally
spaced phi_j inside the window, and the overlap and H-moment matrices are
assembled from the c_n alone through Chebyshev product identities. The
resulting small generalized symmetric eigenproblem (regularized by
singular-value truncation) yields the line frequencies; amplitudes come from
the eigenvector normalization. Double sums over the signal collapse to
single-frequency polynomial sums via geometric-series identities, so a
window costs O(M K) + O(K^3).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import HARTREE_CM1, HARTREE_EV
from .cheby import ChebyshevSequence


class WindowError(ValueError):
    """Ill-posed inversion window."""


@dataclass(frozen=True)
class Window:
    """Inversion window in true energy, with its basis size."""

    e_min: float
    e_max: float
    basis_size: int

    def __post_init__(self):
        if not self.e_min < self.e_max:
            raise ValueError("require e_min < e_max")
        if self.basis_size < 4:
            raise ValueError("basis_size must be at least 4")


@dataclass(frozen=True)
class SpectralLine:
    omega: float           # scaled angular frequency in (0, pi)
    energy: float          # hartree; energy = shift + half_width cos(omega)
    amplitude: float
    error: float           # |E_full - E_half| once estimated; nan before
    parity: str
    window_id: int
    window_off: float = 0.0   # |omega - window center| / half window width
    converged: bool = True


def _power_matrix(z, nrows):
    """P[m, j] = z_j^m via cumulative products (cheaper than exp on outers)."""
    P = np.empty((nrows, len(z)), dtype=np.complex128)
    P[0] = 1.0
    if nrows > 1:
        np.cumprod(np.broadcast_to(z, (nrows - 1, len(z))), axis=0, out=P[1:])
    return P


class CosineSignalInverter:
    """Reusable inversion engine over one coefficient sequence."""

    def __init__(self, coeffs):
        c = np.asarray(coeffs, float)
        if len(c) < 8:
            raise ValueError("sequence too short to invert")
        self.c = c
        self.M = len(c) // 2
        M = self.M
        s = np.arange(2 * M - 1)
        d = np.arange(M)
        self._cq = {q: c[np.abs(s + q)] for q in (-1, 0, 1)}
        self._aq = {q: c[np.abs(d + q)] for q in (-1, 0, 1)}
        self._bq = {q: c[np.abs(d - q)] for q in (-1, 0, 1)}
        self._mu = np.minimum(s + 1, 2 * M - 1 - s).astype(float)
        self._Md = (M - d).astype(float)

    # -- direct kernels for (near-)singular denominators ---------------------
    def _a_direct(self, q, alpha, beta):
        M = self.M
        s = np.arange(2 * M - 1)
        m1 = np.maximum(0, s - M + 1)
        cnt = np.minimum(s, M - 1) - m1 + 1
        delta = alpha - beta
        half = 0.5 * delta
        sh = np.sin(half)
        if abs(sh) < 1e-300:
            geo = cnt.astype(complex)
        else:
            geo = np.exp(1j * half * (cnt - 1)) * (np.sin(cnt * half) / sh)
        geo = np.exp(1j * delta * m1) * geo
        return np.dot(self._cq[q], np.exp(1j * beta * s) * geo)

    def _b_direct(self, q, alpha, beta):
        M = self.M
        d = np.arange(M)
        u = np.exp(1j * (alpha + beta))
        if abs(u - 1.0) < 1e-14:
            geo = (M - d).astype(complex)
        else:
            geo = (1.0 - u ** (M - d)) / (1.0 - u)
        za = np.exp(1j * alpha * d)
        zb = np.exp(1j * beta * d)
        return (np.dot(self._aq[q] * geo, za)
                + np.dot(self._bq[q] * geo, zb) - self._bq[q][0] * geo[0])

    # -- collapsed pair matrices ---------------------------------------------
    def _pair_matrices(self, phi, P2, q, conj_second):
        """A_q and B_q for all pairs (z_j, w_l), w = z or conj(z).

        P2 is the shared power table z^m for m = 0..2M-1.
        """
        M = self.M
        z = P2[1]
        P = P2[:M]
        zM = P2[M]
        cq, aq, bq = self._cq[q], self._aq[q], self._bq[q]
        F = cq[:M] @ P
        G = cq[M:2 * M - 1] @ P[:M - 1]
        Pa = aq @ P
        Ha = aq[::-1] @ P
        Pb = bq @ P
        Hb = bq[::-1] @ P
        b0 = bq[0]
        if conj_second:
            w, Fw, Gw, wM = np.conj(z), np.conj(F), np.conj(G), np.conj(zM)
            Pbw, Haw = np.conj(Pb), np.conj(Ha)
        else:
            w, Fw, Gw, wM = z, F, G, zM
            Pbw, Haw = Pb, Ha
        numA = ((w * Fw)[None, :] - (z * F)[:, None]
                + wM[None, :] * (z * G)[:, None] - zM[:, None] * (w * Gw)[None, :])
        denA = w[None, :] - z[:, None]
        numB = (Pa[:, None] - zM[:, None] * (w * Haw)[None, :]
                + Pbw[None, :] - b0
                - wM[None, :] * (z * Hb)[:, None] + b0 * zM[:, None] * wM[None, :])
        denB = 1.0 - z[:, None] * w[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            A = numA / np.where(np.abs(denA) < 1e-6, 1.0, denA)
            B = numB / np.where(np.abs(denB) < 1e-6, 1.0, denB)
        # exact diagonals have closed coefficient forms; evaluate as matvecs
        if not conj_second:
            np.fill_diagonal(A, (cq * self._mu) @ P2[:2 * M - 1])
        else:
            bdiag = ((aq * self._Md) @ P
                     + np.conj((bq * self._Md) @ P) - bq[0] * M)
            np.fill_diagonal(B, bdiag)
        # rare near-singular off-diagonal pairs fall back to direct kernels
        badA = np.abs(denA) < 1e-6
        badB = np.abs(denB) < 1e-6
        if not conj_second:
            np.fill_diagonal(badA, False)
        else:
            np.fill_diagonal(badB, False)
        beta_of = (lambda l: -phi[l]) if conj_second else (lambda l: phi[l])
        for j, l in zip(*np.nonzero(badA)):
            A[j, l] = self._a_direct(q, phi[j], beta_of(l))
        for j, l in zip(*np.nonzero(badB)):
            B[j, l] = self._b_direct(q, phi[j], beta_of(l))
        return A, B

    def invert_omega(self, w_lo, w_hi, nbasis, svd_tol=1e-12):
        """Frequencies/amplitudes with omega strictly inside (w_lo, w_hi)."""
        if not 0.0 < w_lo < w_hi < np.pi:
            raise WindowError("omega window must lie strictly inside (0, pi)")
        need = 4.0 * nbasis * np.pi / (w_hi - w_lo)
        if len(self.c) < need:
            raise WindowError(
                f"sequence too short for this window: need ~{int(need)} "
                f"coefficients, have {len(self.c)}; widen the window or "
                f"shrink the basis")
        M = self.M
        phi = np.linspace(w_lo, w_hi, nbasis)
        P2 = _power_matrix(np.exp(1j * phi), 2 * M)
        pair = {(q, c2): self._pair_matrices(phi, P2, q, c2)
                for q in (-1, 0, 1) for c2 in (False, True)}
        m = np.arange(M)
        Z = P2[:M]
        R = (self.c[:M] @ Z).real
        RH = 0.5 * ((self.c[m + 1] + self.c[np.abs(m - 1)]) @ Z).real

        def phi_mat(c2):
            A, B = pair[(0, c2)]
            return 0.5 * (A + B)

        def psi_mat(c2):
            A1, B1 = pair[(1, c2)]
            A2, B2 = pair[(-1, c2)]
            return 0.25 * (A1 + A2 + B1 + B2)

        S = (2 * phi_mat(False).real + 2 * phi_mat(True).real
             - 2 * R[:, None] - 2 * R[None, :] + self.c[0])
        H1 = (2 * psi_mat(False).real + 2 * psi_mat(True).real
              - 2 * RH[:, None] - 2 * RH[None, :] + self.c[1])
        S = 0.5 * (S + S.T)
        H1 = 0.5 * (H1 + H1.T)

        sig, V = np.linalg.eigh(S)
        if not np.isfinite(sig[-1]) or sig[-1] <= 0.0:
            raise WindowError(
                "window overlap matrix is numerically singular; widen the "
                "basis or shrink the window")
        keep = sig > svd_tol * sig[-1]
        X = V[:, keep] / np.sqrt(sig[keep])
        lam, U = np.linalg.eigh(X.T @ H1 @ X)
        Y = X @ U
        q_vec = 2 * R - self.c[0]
        betas = Y.T @ q_vec
        inside = np.abs(lam) < 1.0
        omegas = np.arccos(np.clip(lam, -1.0, 1.0))
        inside &= (omegas > w_lo) & (omegas < w_hi)
        return omegas[inside], betas[inside] ** 2


def harmonic_invert(seq: ChebyshevSequence, window: Window,
                    svd_tol: float = 1e-12, parity=None,
                    window_id: int = 0) -> list[SpectralLine]:
    """Invert one energy window of a sequence into spectral lines."""
    scaled_lo = (window.e_min - seq.shift) / seq.half_width
    scaled_hi = (window.e_max - seq.shift) / seq.half_width
    if max(abs(scaled_lo), abs(scaled_hi)) >= 1.0:
        raise WindowError("window lies outside the scaled spectral range")
    w_lo = float(np.arccos(scaled_hi))
    w_hi = float(np.arccos(scaled_lo))
    inv = CosineSignalInverter(seq.coeffs)
    omegas, amps = inv.invert_omega(w_lo, w_hi, window.basis_size, svd_tol)
    center = 0.5 * (w_lo + w_hi)
    halfw = 0.5 * (w_hi - w_lo)
    lines = []
    for w, d in zip(omegas, amps):
        lines.append(SpectralLine(
            omega=float(w), energy=float(seq.energy(w)), amplitude=float(d),
            error=np.nan, parity=parity or seq.parity, window_id=window_id,
            window_off=float(abs(w - center) / halfw)))
    return sorted(lines, key=lambda s: s.omega)


def plan_windows(seq: ChebyshevSequence, e_lo: float = -np.inf,
                 e_hi: float = np.inf, basis_size: int = 32,
                 overlap: float = 0.5, basis_spacing: float = 1e-3,
                 omega_margin: float = 0.02, extend: bool = True):
    """Equal-width-in-omega window plan covering [e_lo, e_hi].

    Window width = basis_spacing * (basis_size - 1), raised if needed to the
    sequence-length feasibility bound (N >= 4 K pi / width); the plan is
    clipped into (omega_margin, pi - omega_margin), which covers the whole
    certified spectrum when e_lo/e_hi are infinite. With extend=True the plan
    reaches one window width beyond the requested range so that window
    interiors tile all of it.
    """
    lo = max((e_lo - seq.shift) / seq.half_width, -np.cos(omega_margin))
    hi = min((e_hi - seq.shift) / seq.half_width, np.cos(omega_margin))
    if not lo < hi:
        raise WindowError("energy range collapses after clipping to the scaled image")
    w_min = float(np.arccos(hi))
    w_max = float(np.arccos(lo))
    width = max(basis_spacing * (basis_size - 1),
                5.0 * basis_size * np.pi / seq.n_coeffs)
    if extend:
        w_min = max(omega_margin, w_min - width)
        w_max = min(np.pi - omega_margin, w_max + width)
    span = w_max - w_min
    width = min(width, span)
    # never drop below the feasibility bound N >= 4 K pi / width
    k_eff = max(8, min(basis_size,
                       int(seq.n_coeffs * width / (5.0 * np.pi))))
    spans = []
    if span - width < 1e-12:
        spans.append((w_min, w_max))
    else:
        step = width * (1.0 - overlap)
        start = w_min
        while start + width < w_max - 1e-12:
            spans.append((start, start + width))
            start += step
        spans.append((w_max - width, w_max))  # anchored, never clipped short
    windows = []
    for (a, b) in spans:
        windows.append(Window(e_min=float(seq.energy(b)),
                              e_max=float(seq.energy(a)),
                              basis_size=k_eff))
    return windows


def invert_all(seq: ChebyshevSequence, windows, svd_tol: float = 1e-12,
               interior: float = 0.5) -> list[SpectralLine]:
    """Invert every window, keeping lines from each window's interior region.

    interior is the central fraction of each window kept (overlapping plans
    make the interiors tile the range, so every line is owned by the window
    it sits deepest in).
    """
    lines = []
    for wid, win in enumerate(windows):
        got = harmonic_invert(seq, win, svd_tol=svd_tol, window_id=wid)
        lines.extend(l for l in got if l.window_off <= interior)
    return sorted(lines, key=lambda s: s.energy)


def convergence_error(lines_full, lines_half, match_tol_omega: float = 1e-6):
    """Per-line error from a half-sequence rerun; unmatched lines are flagged.

    Returns new SpectralLine objects with error = |E_full - E_half| for
    matched lines and converged=False (error inf) for the rest.
    """
    if not lines_full:
        return []
    if not lines_half:
        return [replace(l, error=np.inf, converged=False) for l in lines_full]
    half_w = np.array([l.omega for l in lines_half])
    half_e = np.array([l.energy for l in lines_half])
    used = np.zeros(len(half_w), bool)
    out = []
    for line in sorted(lines_full, key=lambda s: s.omega):
        i = int(np.argmin(np.abs(half_w - line.omega)))
        if abs(half_w[i] - line.omega) <= match_tol_omega and not used[i]:
            used[i] = True
            out.append(replace(line, error=abs(line.energy - half_e[i]),
                               converged=True))
        else:
            out.append(replace(line, error=np.inf, converged=False))
    return out


def refit_amplitudes(coeffs, omegas, rows: int | None = None):
    """Linear least-squares amplitudes for fixed frequencies.

    The eigenvector-normalization amplitudes are first-order sensitive to
    subspace truncation; with the frequencies pinned, a direct cosine fit
    over the leading coefficients recovers amplitudes near machine accuracy.
    Valid only when omegas is the complete line list of the signal.
    """
    omegas = np.asarray(omegas, float)
    if omegas.size == 0:
        return omegas.copy()
    c = np.asarray(coeffs, float)
    if rows is None:
        rows = min(len(c), max(4000, 30 * omegas.size))
    A = np.cos(np.outer(np.arange(rows), omegas))
    sol, _, rank, _ = np.linalg.lstsq(A, c[:rows], rcond=None)
    if rank < omegas.size:
        return None
    return sol


def refine_lines(coeffs, omegas, iters: int = 6, rows: int | None = None,
                 step_cap: float = 1e-4, residual_tol: float = 1e-6):
    """Polish frequencies and amplitudes on the raw sequence.

    Variable-projection Gauss-Newton on c_n ~ sum_k d_k cos(n w_k): at each
    iteration amplitudes solve a linear fit, then frequencies take a damped
    Newton step. The window solves put every line in its basin; measured
    polish is 3-4 orders of magnitude. Valid only when the line list is
    complete (a missing line biases its neighbors), which is certified a
    posteriori: unless the final relative residual falls below residual_tol,
    the fit is rejected and None is returned so the caller keeps the window
    values.
    """
    w = np.asarray(omegas, float).copy()
    if w.size == 0:
        return None
    if w.size > 1 and np.min(np.abs(np.diff(np.sort(w)))) < 1e-8:
        return None
    c = np.asarray(coeffs, float)
    if rows is None:
        rows = min(len(c), max(4000, 30 * w.size))
    n = np.arange(rows)
    y = c[:rows]
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        return None
    best = None
    best_res = np.inf
    for _ in range(iters):
        A = np.cos(np.outer(n, w))
        d, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
        if rank < w.size:
            return None
        r = y - A @ d
        res = float(np.linalg.norm(r))
        if res < best_res:
            best, best_res = (w.copy(), d), res
        elif res > 4.0 * best_res:
            break
        J = -d[None, :] * n[:, None] * np.sin(np.outer(n, w))
        dw, _, rank_j, _ = np.linalg.lstsq(J, r, rcond=None)
        if rank_j < w.size:
            break
        w = w + np.clip(dw, -step_cap, step_cap)
    if best is None or best_res > residual_tol * y_norm:
        return None
    return best


def extract_spectrum(seq: ChebyshevSequence, e_floor: float = -np.inf,
                     e_top: float = np.inf, basis_size: int = 32,
                     overlap: float = 0.5, basis_spacing: float = 1e-3,
                     svd_tol: float = 1e-12, interior: float = 0.5,
                     amplitude_floor: float = 1e-8, polish: str = "full",
                     provenance: dict | None = None) -> "LevelList":
    """Full extraction: windows, half-sequence validation, merge, polish.

    The default range is the whole certified spectrum, which the "full"
    polish requires (it fits the complete cosine model to the sequence).
    """
    def lines_of(sequence):
        windows = plan_windows(sequence, e_floor, e_top,
                               basis_size=basis_size, overlap=overlap,
                               basis_spacing=basis_spacing)
        return windows, invert_all(sequence, windows, svd_tol=svd_tol,
                                   interior=interior)

    windows, lines_full = lines_of(seq)
    half = ChebyshevSequence(
        coeffs=seq.coeffs[:seq.n_coeffs // 2], grid_hash=seq.grid_hash,
        shift=seq.shift, half_width=seq.half_width, parity=seq.parity,
        seed=seq.seed, steps_done=seq.steps_done)
    _, lines_half = lines_of(half)
    lines = convergence_error(lines_full, lines_half)
    levels = merge_and_dedupe(lines, amplitude_floor=amplitude_floor,
                              c0=seq.coeffs[0], provenance=provenance or {},
                              coverage_windows=windows)
    if len(levels) and polish != "none":
        omegas = np.arccos(np.clip(
            (levels.energies - seq.shift) / seq.half_width, -1.0, 1.0))
        if polish == "full":
            refined = refine_lines(seq.coeffs, omegas)
            if refined is not None:
                w, d = refined
                order = np.argsort(w)[::-1]   # ascending energy
                levels.energies = seq.shift + seq.half_width * np.cos(w[order])
                levels.amplitudes = d[order]
                levels.errors = levels.errors[order]
                levels.window_ids = levels.window_ids[order]
        elif polish == "amplitudes":
            refit = refit_amplitudes(seq.coeffs, omegas)
            if refit is not None:
                levels.amplitudes = refit
        else:
            raise ValueError(f"unknown polish mode {polish!r}")
    return levels


@dataclass
class LevelList:
    """Sorted extracted levels with provenance; the input to statistics."""

    energies: np.ndarray
    amplitudes: np.ndarray
    errors: np.ndarray
    parities: np.ndarray
    window_ids: np.ndarray
    provenance: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        self.energies = np.asarray(self.energies, float)
        self.amplitudes = np.asarray(self.amplitudes, float)
        self.errors = np.asarray(self.errors, float)
        self.parities = np.asarray(self.parities)
        self.window_ids = np.asarray(self.window_ids, int)
        for par in set(self.parities.tolist()):
            e = self.energies[self.parities == par]
            if e.size > 1 and not np.all(np.diff(e) > 0):
                raise ValueError(f"levels of parity {par!r} are not strictly ascending")

    def __len__(self):
        return len(self.energies)

    def select_parity(self, parity):
        m = self.parities == parity
        return self.energies[m]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["energy_hartree", "energy_ev", "energy_cm1",
                        "amplitude", "error", "parity", "window_id"])
            for e, a, err, p, wid in zip(self.energies, self.amplitudes,
                                         self.errors, self.parities,
                                         self.window_ids):
                w.writerow([f"{e:.16e}", f"{e * HARTREE_EV:.12e}",
                            f"{e * HARTREE_CM1:.10e}", f"{a:.12e}",
                            f"{err:.6e}", p, wid])

    @classmethod
    def from_csv(cls, path):
        energies, amps, errs, pars, wids = [], [], [], [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                energies.append(float(row["energy_hartree"]))
                amps.append(float(row["amplitude"]))
                errs.append(float(row["error"]))
                pars.append(row["parity"])
                wids.append(int(row["window_id"]))
        return cls(energies, amps, errs, pars, wids)

    def to_json(self, path):
        doc = {
            "levels": [
                {"energy_hartree": float(e), "energy_ev": float(e * HARTREE_EV),
                 "energy_cm1": float(e * HARTREE_CM1), "amplitude": float(a),
                 "error": None if not np.isfinite(err) else float(err),
                 "parity": str(p), "window_id": int(wid)}
                for e, a, err, p, wid in zip(self.energies, self.amplitudes,
                                             self.errors, self.parities,
                                             self.window_ids)
            ],
            "provenance": self.provenance,
            "warnings": self.warnings,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        lv = doc["levels"]
        return cls(
            [l["energy_hartree"] for l in lv],
            [l["amplitude"] for l in lv],
            [np.inf if l["error"] is None else l["error"] for l in lv],
            [l["parity"] for l in lv],
            [l["window_id"] for l in lv],
            provenance=doc.get("provenance", {}),
            warnings=doc.get("warnings", []))


def merge_and_dedupe(lines, tolerance: float | None = None,
                     amplitude_floor: float = 1e-8, c0: float = 1.0,
                     drop_unconverged: bool = True,
                     omega_tol: float = 2.5e-4,
                     provenance: dict | None = None,
                     coverage_windows=None) -> LevelList:
    """Unify window outputs into a level list.

    Lines within the merge tolerance (in energy, or omega_tol in frequency,
    whichever triggers first) collapse to the one with the smallest error
    estimate (ties: the one deepest inside its window); near-zero amplitudes
    are dropped; unconverged lines are dropped unless kept explicitly.
    """
    warnings = []
    if coverage_windows:
        wins = sorted((w.e_min, w.e_max) for w in coverage_windows)
        reach = wins[0][1]
        for lo, hi in wins[1:]:
            if lo > reach:
                warnings.append(f"window coverage gap: ({reach:g}, {lo:g}) hartree")
            reach = max(reach, hi)

    kept = [l for l in lines if l.amplitude >= amplitude_floor * c0]
    if drop_unconverged:
        kept = [l for l in kept if l.converged]
    kept.sort(key=lambda s: s.energy)

    def same_line(a, b):
        if abs(b.omega - a.omega) <= omega_tol:
            return True
        if tolerance is not None:
            return abs(b.energy - a.energy) <= tolerance
        errs = [x for x in (a.error, b.error) if np.isfinite(x)]
        tol = max(1e-9, 3.0 * max(errs) if errs else 0.0)
        return abs(b.energy - a.energy) <= tol

    merged = []
    for line in kept:
        if merged and same_line(merged[-1], line):
            old = merged[-1]
            a = old.error if np.isfinite(old.error) else np.inf
            b = line.error if np.isfinite(line.error) else np.inf
            if (b, line.window_off) < (a, old.window_off):
                merged[-1] = line
        else:
            merged.append(line)

    return LevelList(
        energies=[l.energy for l in merged],
        amplitudes=[l.amplitude for l in merged],
        errors=[l.error for l in merged],
        parities=[l.parity for l in merged],
        window_ids=[l.window_id for l in merged],
        provenance=provenance or {},
        warnings=warnings)
