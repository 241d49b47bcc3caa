"""CSV profile curves: load a sampled generating curve (z, s(z)) and turn it
into a warping function, or dump a warp as a table."""
from __future__ import annotations

import csv
from typing import Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .warp_profiles import WarpingFunction, profile_to_warp

__all__ = ["load_profile_csv", "write_warp_table"]


def load_profile_csv(path: str, z_max: Optional[float] = None,
                     grid: int = 2048) -> WarpingFunction:
    """Read a two-column CSV (header row, then z, s(z) with monotone z) and
    build the warp of the corresponding surface of revolution.

    The samples are interpolated with a monotone cubic (PCHIP), which keeps
    s increasing between increasing data points and has a usable derivative.
    """
    zs, ss = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}: expected a header row with two columns")
        try:
            float(header[0])
        except ValueError:
            pass  # proper header
        else:
            raise ValueError(f"{path}: first row must be a header, not data")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}:{lineno}: need two columns")
            zs.append(float(row[0]))
            ss.append(float(row[1]))
    z = np.asarray(zs)
    s = np.asarray(ss)
    if len(z) < 4:
        raise ValueError(f"{path}: need at least 4 sample rows")
    if np.any(np.diff(z) <= 0):
        raise ValueError(f"{path}: z column must be strictly increasing")
    if abs(z[0]) > 1e-12 or abs(s[0]) > 1e-12:
        raise ValueError(f"{path}: profile must start at (0, 0)")
    if np.any(np.diff(s) <= 0):
        raise ValueError(f"{path}: s column must be strictly increasing")

    interp = PchipInterpolator(z, s, extrapolate=False)
    deriv = interp.derivative()
    top = float(z[-1]) if z_max is None else min(z_max, float(z[-1]))

    def s_fn(zz: float) -> float:
        return float(interp(min(max(zz, 0.0), z[-1])))

    def sp_fn(zz: float) -> float:
        return float(deriv(min(max(zz, 0.0), z[-1])))

    return profile_to_warp(s_fn, sp_fn, top, grid=grid, label=f"profile:{path}")


def write_warp_table(wf: WarpingFunction, path: str, n: int = 256):
    rs = np.geomspace(wf.domain_radius * 1e-4, wf.domain_radius, n)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "f", "f_prime"])
        for r in rs:
            writer.writerow([f"{r:.12g}", f"{wf.f(r):.12g}", f"{wf.f_prime(r):.12g}"])
