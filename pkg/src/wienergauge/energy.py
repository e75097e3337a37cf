"""Discrete regularized p-Dirichlet energy on a Cartesian grid and its minimizer.

The energy of a grid function ``psi`` is

    E(psi) = sum_cells h^N * 2^-N * sum_corners (eps^2 + |g_c|^2)^(p/2)

where ``g_c`` is the one-sided gradient at a cell corner, built from the N
cell edges meeting at that corner. For p = 2 this is exactly the 5-point
(2-D) or 7-point (3-D) Laplacian energy.

Minimization is a damped Newton method: sparse Hessian, backtracking
Armijo line search, continuation in ``eps``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 60_000
ROUNDOFF = 64 * np.finfo(float).eps


class ConvergenceError(RuntimeError):
    """Raised when the minimizer misses its tolerance; carries the best iterate."""

    def __init__(self, msg, best=None, residual=float("nan"), iterations=0):
        super().__init__(msg)
        self.best = best
        self.residual = residual
        self.iterations = iterations


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iters: int = 200
    eps_reg: float | None = None  # None means "use h"
    continuation_steps: int = 3

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.eps_reg is not None and self.eps_reg < 0:
            raise ValueError("eps_reg must be non-negative")
        if self.continuation_steps < 0:
            raise ValueError("continuation_steps must be non-negative")

    def eps_schedule(self, h: float) -> list[float]:
        e0 = h if self.eps_reg is None else self.eps_reg
        return [e0 * 10.0 ** -k for k in range(self.continuation_steps + 1)]


@dataclass
class MinimizeInfo:
    iterations: int = 0
    residual: float = 0.0
    energies: list = field(default_factory=list)  # (eps, energy) after every accepted step
    at_roundoff: bool = False  # last eps level stopped because Newton steps fell below ulp


class Stencil:
    """Edge/corner bookkeeping for one grid shape."""

    def __init__(self, shape: tuple[int, ...], h: float):
        self.shape = tuple(shape)
        self.N = len(shape)
        self.h = h
        self.edge_shapes = []
        self.edge_offsets = []
        off = 0
        for k in range(self.N):
            s = list(shape)
            s[k] -= 1
            self.edge_shapes.append(tuple(s))
            self.edge_offsets.append(off)
            off += int(np.prod(s))
        self.n_edges = off
        self.n_nodes = int(np.prod(shape))
        self.corners = list(itertools.product((0, 1), repeat=self.N))
        self.cell_weight = h ** self.N / 2 ** self.N
        self._D = None
        self._ids = None

    def edge_slice(self, o, k):
        """Slice into axis-k edge arrays giving, per cell, the edge through corner o."""
        return tuple(slice(0, n - 1) if j == k else slice(o[j], o[j] + n - 1)
                     for j, n in enumerate(self.shape))

    def edge_diffs(self, psi: np.ndarray) -> list[np.ndarray]:
        return [np.diff(psi, axis=k) / self.h for k in range(self.N)]

    def corner_gradients(self, psi: np.ndarray):
        """Yield ``(o, g)`` with ``g`` of shape ``(N, cells...)`` for every corner."""
        de = self.edge_diffs(psi)
        for o in self.corners:
            yield o, np.stack([de[k][self.edge_slice(o, k)] for k in range(self.N)])

    @property
    def D(self) -> sp.csr_matrix:
        """Edge-difference operator, edges x nodes, scaled by 1/h."""
        if self._D is None:
            idx = np.arange(self.n_nodes).reshape(self.shape)
            rows, cols, vals = [], [], []
            for k in range(self.N):
                lo = idx[tuple(slice(0, -1) if j == k else slice(None) for j in range(self.N))].ravel()
                hi = idx[tuple(slice(1, None) if j == k else slice(None) for j in range(self.N))].ravel()
                e = self.edge_offsets[k] + np.arange(lo.size)
                rows += [e, e]
                cols += [hi, lo]
                vals += [np.full(lo.size, 1 / self.h), np.full(lo.size, -1 / self.h)]
            self._D = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                    shape=(self.n_edges, self.n_nodes))
        return self._D

    def corner_edge_ids(self, o, k) -> np.ndarray:
        if self._ids is None:
            self._ids = [self.edge_offsets[k] + np.arange(int(np.prod(s))).reshape(s)
                         for k, s in enumerate(self.edge_shapes)]
        return self._ids[k][self.edge_slice(o, k)].ravel()


class PEnergy:
    def __init__(self, stencil: Stencil, p: float, eps: float):
        self.st = stencil
        self.p = float(p)
        self.eps = float(eps)

    def value(self, psi: np.ndarray, regularized: bool = True) -> float:
        e2 = self.eps ** 2 if regularized else 0.0
        total = 0.0
        for _, g in self.st.corner_gradients(psi):
            total += np.sum((e2 + np.sum(g * g, axis=0)) ** (self.p / 2))
        return float(total * self.st.cell_weight)

    def value_and_grad(self, psi: np.ndarray):
        st, p, e2 = self.st, self.p, self.eps ** 2
        de = st.edge_diffs(psi)
        G = [np.zeros_like(d) for d in de]
        total = 0.0
        for o in st.corners:
            sl = [st.edge_slice(o, k) for k in range(st.N)]
            g = [de[k][sl[k]] for k in range(st.N)]
            s = e2 + sum(gk * gk for gk in g)
            total += np.sum(s ** (p / 2))
            a = p * s ** (p / 2 - 1) * st.cell_weight
            for k in range(st.N):
                G[k][sl[k]] += a * g[k]
        grad = st.D.T @ np.concatenate([Gk.ravel() for Gk in G])
        return float(total * st.cell_weight), grad.reshape(st.shape)

    def edge_hessian(self, psi: np.ndarray) -> sp.csr_matrix:
        st, p, e2 = self.st, self.p, self.eps ** 2
        de = st.edge_diffs(psi)
        diag = np.zeros(st.n_edges)
        rows, cols, vals = [], [], []
        for o in st.corners:
            g = [de[k][st.edge_slice(o, k)].ravel() for k in range(st.N)]
            ids = [st.corner_edge_ids(o, k) for k in range(st.N)]
            s = e2 + sum(gk * gk for gk in g)
            a = p * s ** (p / 2 - 1) * st.cell_weight
            if p == 2.0:
                for k in range(st.N):
                    diag[ids[k]] += a
                continue
            b = p * (p - 2) * s ** (p / 2 - 2) * st.cell_weight
            for k in range(st.N):
                diag[ids[k]] += a + b * g[k] * g[k]
                for l in range(st.N):
                    if l != k:
                        rows.append(ids[k])
                        cols.append(ids[l])
                        vals.append(b * g[k] * g[l])
        H = sp.diags(diag, format="csr")
        if rows:
            H = H + sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                  shape=(st.n_edges, st.n_edges))
        return H


def spd_solve(A: sp.spmatrix, b: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    n = A.shape[0]
    if n <= DIRECT_SOLVE_LIMIT:
        return spla.spsolve(A.tocsc(), b)
    import pyamg

    ml = pyamg.smoothed_aggregation_solver(A.tocsr(), symmetry="symmetric")
    x = ml.solve(b, tol=rtol, accel="cg", maxiter=400)
    return np.asarray(x)


def minimize(stencil: Stencil, p: float, psi0: np.ndarray, free: np.ndarray,
             opts: SolverOptions, ref: float | None = None) -> tuple[np.ndarray, MinimizeInfo]:
    """Minimize the regularized energy over ``free`` nodes, others held at ``psi0``.

    The residual is the free-node gradient norm divided by ``ref`` (default:
    the gradient norm at ``psi0`` for the first ``eps``). Raises
    ConvergenceError if it does not reach ``opts.tol`` within
    ``opts.max_iters`` Newton steps. A Newton step below roundoff of max|psi|
    also ends the level (``info.at_roundoff``); the residual is then whatever
    float64 allows.
    """
    psi = np.array(psi0, dtype=float)
    info = MinimizeInfo()
    fidx = np.flatnonzero(free.ravel())
    if fidx.size == 0:
        return psi, info
    Df = stencil.D[:, fidx].tocsc()
    for eps in opts.eps_schedule(stencil.h):
        en = PEnergy(stencil, p, eps)
        E, grad = en.value_and_grad(psi)
        gf = grad.ravel()[fidx]
        if ref is None:
            ref = np.linalg.norm(gf)
            if ref == 0.0:
                return psi, info
        info.energies.append((eps, E))
        info.at_roundoff = False
        scale = float(np.max(np.abs(psi)))
        while True:
            info.residual = np.linalg.norm(gf) / ref
            if info.residual <= opts.tol:
                break
            if info.iterations >= opts.max_iters:
                raise ConvergenceError(
                    f"no convergence in {opts.max_iters} iterations (residual {info.residual:.3e})",
                    best=psi, residual=info.residual, iterations=info.iterations)
            Hf = (Df.T @ en.edge_hessian(psi) @ Df).tocsr()
            step = -spd_solve(Hf, gf)
            if np.max(np.abs(step)) <= ROUNDOFF * scale:
                # the update is not representable: converged at working precision
                info.at_roundoff = True
                break
            slope = float(gf @ step)
            if slope >= 0:  # inexact solve went uphill; fall back to steepest descent
                step, slope = -gf, -float(gf @ gf)
            t = 1.0
            flat = psi.ravel()
            gnorm = np.linalg.norm(gf)
            while True:
                trial = flat.copy()
                trial[fidx] += t * step
                trial = trial.reshape(psi.shape)
                E_new, grad_new = en.value_and_grad(trial)
                gf_new = grad_new.ravel()[fidx]
                if E_new <= E + 1e-4 * t * slope:
                    break
                # energy differences at roundoff level carry no information;
                # accept on gradient decrease instead
                if abs(E_new - E) <= ROUNDOFF * abs(E) and np.linalg.norm(gf_new) < gnorm:
                    break
                t *= 0.5
                if t < 1e-10:
                    break
            info.iterations += 1
            if t < 1e-10:
                log.debug("line search stalled at eps=%g residual=%g", eps, info.residual)
                break
            psi, E, gf = trial, E_new, gf_new
            info.energies.append((eps, E))
    if info.residual > opts.tol and not info.at_roundoff:
        raise ConvergenceError(f"stalled with residual {info.residual:.3e}", best=psi,
                               residual=info.residual, iterations=info.iterations)
    return psi, info
