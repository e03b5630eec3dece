"""Hot numeric kernels with a numba and a pure-numpy implementation.

The backend is chosen once at import time from the environment:

    HISTORIES_LAB_BACKEND = auto | numba | numpy   (default: auto)

``auto`` uses numba when it imports cleanly and falls back to numpy
otherwise; ``numba``/``numpy`` force one side.  ``HISTORIES_LAB_THREADS``
caps the numba thread pool.  Both implementations perform the same
arithmetic in the same order, so results agree to the last bit for the
trajectory kernels and to ~1e-15 for the compensated path sums.
``benchmarks/bench_kernels.py`` times the two sides against each other.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "backend_name",
    "get_kernels",
    "rk4_advect_1d",
    "rk4_advect_2d",
    "path_sum_bruteforce",
]


# ---------------------------------------------------------------------------
# pure-numpy implementations


def _np_interp_1d(field, pos, dx, n, periodic):
    s = pos / dx
    i0 = np.floor(s).astype(np.int64)
    f = s - i0
    if periodic:
        a = field[i0 % n]
        b = field[(i0 + 1) % n]
    else:
        a = field[np.clip(i0, 0, n - 1)]
        b = field[np.clip(i0 + 1, 0, n - 1)]
    return a * (1.0 - f) + b * f


def _np_rk4_advect_1d(pos, alive, v0, vmid, vend, dt, dx, length, periodic):
    """One RK4 step for all trajectories in place; returns updated alive mask."""
    n = v0.shape[0]
    x = pos

    def wrap(y):
        return y % length if periodic else y

    k1 = _np_interp_1d(v0, wrap(x), dx, n, periodic)
    k2 = _np_interp_1d(vmid, wrap(x + 0.5 * dt * k1), dx, n, periodic)
    k3 = _np_interp_1d(vmid, wrap(x + 0.5 * dt * k2), dx, n, periodic)
    k4 = _np_interp_1d(vend, wrap(x + dt * k3), dx, n, periodic)
    new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if periodic:
        new %= length
    else:
        out = (new < 0.0) | (new >= length)
        alive = alive & ~out
        new = np.clip(new, 0.0, np.nextafter(length, 0.0))
    pos[alive] = new[alive]
    return alive


def _np_interp_2d(field, px, py, dx0, dx1, n0, n1, per0, per1):
    s0 = px / dx0
    s1 = py / dx1
    i0 = np.floor(s0).astype(np.int64)
    j0 = np.floor(s1).astype(np.int64)
    f0 = s0 - i0
    f1 = s1 - j0
    if per0:
        i0a, i0b = i0 % n0, (i0 + 1) % n0
    else:
        i0a, i0b = np.clip(i0, 0, n0 - 1), np.clip(i0 + 1, 0, n0 - 1)
    if per1:
        j0a, j0b = j0 % n1, (j0 + 1) % n1
    else:
        j0a, j0b = np.clip(j0, 0, n1 - 1), np.clip(j0 + 1, 0, n1 - 1)
    v00 = field[i0a, j0a]
    v01 = field[i0a, j0b]
    v10 = field[i0b, j0a]
    v11 = field[i0b, j0b]
    return (
        v00 * (1 - f0) * (1 - f1)
        + v01 * (1 - f0) * f1
        + v10 * f0 * (1 - f1)
        + v11 * f0 * f1
    )


def _np_rk4_advect_2d(pos, alive, v0, vmid, vend, dt, dx, lengths, periodic):
    n0, n1 = v0.shape[0], v0.shape[1]
    dx0, dx1 = dx
    l0, l1 = lengths
    per0, per1 = periodic

    def wrap(px, py):
        wx = px % l0 if per0 else px
        wy = py % l1 if per1 else py
        return wx, wy

    def sample(field, px, py):
        wx, wy = wrap(px, py)
        vx = _np_interp_2d(field[:, :, 0], wx, wy, dx0, dx1, n0, n1, per0, per1)
        vy = _np_interp_2d(field[:, :, 1], wx, wy, dx0, dx1, n0, n1, per0, per1)
        return vx, vy

    x, y = pos[:, 0], pos[:, 1]
    k1x, k1y = sample(v0, x, y)
    k2x, k2y = sample(vmid, x + 0.5 * dt * k1x, y + 0.5 * dt * k1y)
    k3x, k3y = sample(vmid, x + 0.5 * dt * k2x, y + 0.5 * dt * k2y)
    k4x, k4y = sample(vend, x + dt * k3x, y + dt * k3y)
    nx = x + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    ny = y + (dt / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
    if per0:
        nx %= l0
    else:
        out = (nx < 0.0) | (nx >= l0)
        alive = alive & ~out
        nx = np.clip(nx, 0.0, np.nextafter(l0, 0.0))
    if per1:
        ny %= l1
    else:
        out = (ny < 0.0) | (ny >= l1)
        alive = alive & ~out
        ny = np.clip(ny, 0.0, np.nextafter(l1, 0.0))
    pos[alive, 0] = nx[alive]
    pos[alive, 1] = ny[alive]
    return alive


def _np_path_sum_bruteforce(kernel, n_steps, allowed):
    """Enumerate every lattice path and sum its amplitude product.

    allowed[k, x] says whether site x may be occupied at slice boundary k
    (k = 0..n_steps); endpoints are unrestricted by the callers.
    Enumeration goes over the interior sites in batches; endpoint sums are
    the x', x'' gathers of the same enumeration.
    """
    m = kernel.shape[0]
    if n_steps == 1:
        out = kernel.copy()
        out[~allowed[1], :] = 0.0
        out[:, ~allowed[0]] = 0.0
        return out
    n_int = n_steps - 1
    total = m**n_int
    out = np.zeros((m, m), dtype=np.complex128)
    chunk = max(1, min(total, 1 << 16))
    digits = np.empty((chunk, n_int), dtype=np.int64)
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        idx = np.arange(start, stop, dtype=np.int64)
        t = idx
        for k in range(n_int - 1, -1, -1):
            digits[: stop - start, k] = t % m
            t = t // m
        d = digits[: stop - start]
        ok = np.ones(stop - start, dtype=bool)
        for k in range(n_int):
            ok &= allowed[k + 1][d[:, k]]
        if not ok.any():
            continue
        d = d[ok]
        w = np.ones(d.shape[0], dtype=np.complex128)
        for k in range(1, n_int):
            w *= kernel[d[:, k], d[:, k - 1]]
        first = kernel[d[:, 0], :].copy()
        first[:, ~allowed[0]] = 0.0
        last = kernel[:, d[:, n_int - 1]].copy()
        last[~allowed[n_steps], :] = 0.0
        out += (last * w) @ first
    return out


# ---------------------------------------------------------------------------
# numba implementations (compiled lazily on first use)


def _build_numba():  # pragma: no cover - exercised when numba backend active
    import numba
    from numba import njit, prange

    threads = os.environ.get("HISTORIES_LAB_THREADS")
    if threads:
        try:
            numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
        except (ValueError, RuntimeError):
            pass

    @njit(cache=True, inline="always")
    def _interp1(field, x, dx, n, periodic):
        s = x / dx
        i0 = np.int64(np.floor(s))
        f = s - i0
        if periodic:
            a = field[i0 % n]
            b = field[(i0 + 1) % n]
        else:
            ia = min(max(i0, 0), n - 1)
            ib = min(max(i0 + 1, 0), n - 1)
            a = field[ia]
            b = field[ib]
        return a * (1.0 - f) + b * f

    @njit(cache=True, parallel=True)
    def rk4_1d(pos, alive, v0, vmid, vend, dt, dx, length, periodic):
        n = v0.shape[0]
        for t in prange(pos.shape[0]):
            if not alive[t]:
                continue
            x = pos[t]
            xw = x % length if periodic else x
            k1 = _interp1(v0, xw, dx, n, periodic)
            x2 = x + 0.5 * dt * k1
            k2 = _interp1(vmid, x2 % length if periodic else x2, dx, n, periodic)
            x3 = x + 0.5 * dt * k2
            k3 = _interp1(vmid, x3 % length if periodic else x3, dx, n, periodic)
            x4 = x + dt * k3
            k4 = _interp1(vend, x4 % length if periodic else x4, dx, n, periodic)
            new = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if periodic:
                pos[t] = new % length
            else:
                if new < 0.0 or new >= length:
                    alive[t] = False
                else:
                    pos[t] = new
        return alive

    @njit(cache=True, inline="always")
    def _interp2(field, x, y, dx0, dx1, n0, n1, per0, per1):
        s0 = x / dx0
        s1 = y / dx1
        i0 = np.int64(np.floor(s0))
        j0 = np.int64(np.floor(s1))
        f0 = s0 - i0
        f1 = s1 - j0
        if per0:
            ia, ib = i0 % n0, (i0 + 1) % n0
        else:
            ia = min(max(i0, 0), n0 - 1)
            ib = min(max(i0 + 1, 0), n0 - 1)
        if per1:
            ja, jb = j0 % n1, (j0 + 1) % n1
        else:
            ja = min(max(j0, 0), n1 - 1)
            jb = min(max(j0 + 1, 0), n1 - 1)
        return (
            field[ia, ja] * (1 - f0) * (1 - f1)
            + field[ia, jb] * (1 - f0) * f1
            + field[ib, ja] * f0 * (1 - f1)
            + field[ib, jb] * f0 * f1
        )

    @njit(cache=True, parallel=True)
    def rk4_2d(pos, alive, v0, vmid, vend, dt, dx, lengths, periodic):
        n0, n1 = v0.shape[0], v0.shape[1]
        dx0, dx1 = dx[0], dx[1]
        l0, l1 = lengths[0], lengths[1]
        per0 = periodic[0]
        per1 = periodic[1]
        for t in prange(pos.shape[0]):
            if not alive[t]:
                continue
            x = pos[t, 0]
            y = pos[t, 1]

            xw = x % l0 if per0 else x
            yw = y % l1 if per1 else y
            k1x = _interp2(v0[:, :, 0], xw, yw, dx0, dx1, n0, n1, per0, per1)
            k1y = _interp2(v0[:, :, 1], xw, yw, dx0, dx1, n0, n1, per0, per1)

            ax = x + 0.5 * dt * k1x
            ay = y + 0.5 * dt * k1y
            xw = ax % l0 if per0 else ax
            yw = ay % l1 if per1 else ay
            k2x = _interp2(vmid[:, :, 0], xw, yw, dx0, dx1, n0, n1, per0, per1)
            k2y = _interp2(vmid[:, :, 1], xw, yw, dx0, dx1, n0, n1, per0, per1)

            ax = x + 0.5 * dt * k2x
            ay = y + 0.5 * dt * k2y
            xw = ax % l0 if per0 else ax
            yw = ay % l1 if per1 else ay
            k3x = _interp2(vmid[:, :, 0], xw, yw, dx0, dx1, n0, n1, per0, per1)
            k3y = _interp2(vmid[:, :, 1], xw, yw, dx0, dx1, n0, n1, per0, per1)

            ax = x + dt * k3x
            ay = y + dt * k3y
            xw = ax % l0 if per0 else ax
            yw = ay % l1 if per1 else ay
            k4x = _interp2(vend[:, :, 0], xw, yw, dx0, dx1, n0, n1, per0, per1)
            k4y = _interp2(vend[:, :, 1], xw, yw, dx0, dx1, n0, n1, per0, per1)

            nx = x + (dt / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
            ny = y + (dt / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
            dead = False
            if per0:
                nx %= l0
            elif nx < 0.0 or nx >= l0:
                dead = True
            if per1:
                ny %= l1
            elif ny < 0.0 or ny >= l1:
                dead = True
            if dead:
                alive[t] = False
            else:
                pos[t, 0] = nx
                pos[t, 1] = ny
        return alive

    @njit(cache=True, parallel=True)
    def path_sum(kernel, n_steps, allowed):
        m = kernel.shape[0]
        out = np.zeros((m, m), dtype=np.complex128)
        for x0 in prange(m):
            if not allowed[0, x0]:
                continue
            # odometer over x_1..x_n; Kahan compensation per destination site
            col_re = np.zeros(m)
            col_im = np.zeros(m)
            comp_re = np.zeros(m)
            comp_im = np.zeros(m)
            path = np.zeros(n_steps, dtype=np.int64)
            total = m**n_steps
            for _ in range(total):
                okp = True
                amp_re = 1.0
                amp_im = 0.0
                prev = x0
                for k in range(n_steps):
                    xk = path[k]
                    if not allowed[k + 1, xk]:
                        okp = False
                        break
                    kr = kernel[xk, prev].real
                    ki = kernel[xk, prev].imag
                    nre = amp_re * kr - amp_im * ki
                    nim = amp_re * ki + amp_im * kr
                    amp_re = nre
                    amp_im = nim
                    prev = xk
                if okp:
                    dest = path[n_steps - 1]
                    y = amp_re - comp_re[dest]
                    s = col_re[dest] + y
                    comp_re[dest] = (s - col_re[dest]) - y
                    col_re[dest] = s
                    y = amp_im - comp_im[dest]
                    s = col_im[dest] + y
                    comp_im[dest] = (s - col_im[dest]) - y
                    col_im[dest] = s
                # advance odometer
                for k in range(n_steps - 1, -1, -1):
                    path[k] += 1
                    if path[k] < m:
                        break
                    path[k] = 0
            for d in range(m):
                out[d, x0] = complex(col_re[d], col_im[d])
        return out

    return {
        "rk4_advect_1d": rk4_1d,
        "rk4_advect_2d": rk4_2d,
        "path_sum_bruteforce": path_sum,
        "name": "numba",
    }


_NUMPY_KERNELS = {
    "rk4_advect_1d": _np_rk4_advect_1d,
    "rk4_advect_2d": _np_rk4_advect_2d,
    "path_sum_bruteforce": _np_path_sum_bruteforce,
    "name": "numpy",
}


def get_kernels(backend: str = "auto") -> dict:
    """Return the kernel table for an explicit backend choice."""
    if backend == "numpy":
        return _NUMPY_KERNELS
    if backend == "numba":
        return _build_numba()
    if backend == "auto":
        try:
            return _build_numba()
        except ImportError:
            return _NUMPY_KERNELS
    raise ValueError(f"unknown backend {backend!r}; expected auto, numba or numpy")


_ACTIVE = get_kernels(os.environ.get("HISTORIES_LAB_BACKEND", "auto"))


def backend_name() -> str:
    return _ACTIVE["name"]


rk4_advect_1d = _ACTIVE["rk4_advect_1d"]
rk4_advect_2d = _ACTIVE["rk4_advect_2d"]
path_sum_bruteforce = _ACTIVE["path_sum_bruteforce"]
