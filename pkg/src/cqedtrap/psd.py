"""Tabulated one-sided power spectral densities of fractional intensity noise."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class PsdRangeError(ValueError):
    """Raised when a PSD is evaluated outside its tabulated band."""


@dataclass(frozen=True)
class NoisePsd:
    """One-sided PSD S_e(f) in 1/Hz, log-log interpolated between table points.

    Total variance of the process is the integral of S_e over [0, inf).
    """

    frequencies: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        s = np.atleast_1d(np.asarray(self.values, dtype=float))
        if f.shape != s.shape or f.ndim != 1:
            raise ValueError("frequencies and values must be 1-D arrays of equal length")
        if f.size == 0:
            raise ValueError("empty PSD table")
        if np.any(~np.isfinite(f)) or np.any(~np.isfinite(s)):
            raise ValueError("PSD table contains non-finite entries")
        if np.any(f <= 0):
            raise ValueError("PSD frequencies must be positive")
        if np.any(np.diff(f) <= 0):
            raise ValueError("PSD frequencies must be strictly increasing")
        if np.any(s < 0):
            raise ValueError("PSD values must be non-negative")
        f.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "values", s)

    @classmethod
    def flat(cls, value: float, f_min: float = 1e-3, f_max: float = 1e9) -> NoisePsd:
        return cls(np.array([f_min, f_max]), np.array([value, value]))

    @property
    def band(self) -> tuple[float, float]:
        return float(self.frequencies[0]), float(self.frequencies[-1])

    def __call__(self, f, extrapolate: bool = False):
        """Evaluate S_e at frequency ``f`` (scalar or array, Hz).

        Outside the table the edge segments are continued as power laws when
        ``extrapolate`` is set; otherwise :class:`PsdRangeError` is raised.
        """
        f_arr = np.asarray(f, dtype=float)
        lo, hi = self.band
        if not extrapolate and (np.any(f_arr < lo * (1 - 1e-12)) or np.any(f_arr > hi * (1 + 1e-12))):
            raise PsdRangeError(
                f"PSD requested at {np.min(f_arr):.6g}..{np.max(f_arr):.6g} Hz, "
                f"outside tabulated band [{lo:.6g}, {hi:.6g}] Hz"
            )
        if self.frequencies.size == 1:
            return np.full_like(f_arr, self.values[0]) if f_arr.ndim else float(self.values[0])
        out = _loglog_interp(f_arr, self.frequencies, self.values)
        return out if f_arr.ndim else float(out)


def _loglog_interp(f, ft, st):
    """Piecewise power-law interpolation; segments touching zero fall back to linear."""
    f = np.asarray(f, dtype=float)
    idx = np.clip(np.searchsorted(ft, f, side="right") - 1, 0, ft.size - 2)
    f0, f1 = ft[idx], ft[idx + 1]
    s0, s1 = st[idx], st[idx + 1]
    out = np.empty(np.shape(f))
    positive = (s0 > 0) & (s1 > 0) & (f > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = np.log(s1 / s0) / np.log(f1 / f0)
        out_log = s0 * np.exp(slope * np.log(f / f0))
    out_lin = s0 + (s1 - s0) * (f - f0) / (f1 - f0)
    out[...] = np.where(positive, out_log, np.maximum(out_lin, 0.0))
    return out


def read_psd_csv(path) -> NoisePsd:
    """Read a two-column CSV (frequency_hz, psd_per_hz). ``#`` lines are comments."""
    path = Path(path)
    freqs, vals = [], []
    with path.open(encoding="utf-8") as fh:
        rows = csv.reader(line for line in fh if line.strip() and not line.lstrip().startswith("#"))
        for row in rows:
            if row[0].strip() == "frequency_hz":
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: expected 2 columns, got {len(row)}: {row}")
            freqs.append(float(row[0]))
            vals.append(float(row[1]))
    return NoisePsd(np.array(freqs), np.array(vals))


def write_psd_csv(psd: NoisePsd, path, header_comments=()) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["frequency_hz", "psd_per_hz"])
        for f, s in zip(psd.frequencies, psd.values):
            writer.writerow([repr(float(f)), repr(float(s))])
