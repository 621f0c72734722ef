"""scikit-learn style estimators over the numerical core.

These wrap library calls so ensembles plug into pipelines, grid searches
and ``clone``. Inputs are plain arrays: seeds, block indices, eigenvalue
levels or flattened point values.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .anderson import Hamiltonian, eigensolve, positivity_shift
from .dispersive import block_datum, datum_rng, fit_loss, strichartz_norm
from .noise import build_enhanced, sample_white_noise
from .spectral import Grid, from_point_values, lp_project
from .validation import check_eps, check_grid_size, check_strichartz_pair


def _seeds(X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim == 2 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim != 1:
        raise ValueError(f"expected a 1-d array of seeds, got shape {X.shape}")
    return X.astype(np.uint64)


class AndersonSpectrumEstimator(TransformerMixin, BaseEstimator):
    """Lowest ``n_eigs`` eigenvalues of the renormalized operator for each seed.

    ``fit(seeds)`` stores the ensemble spectrum; ``transform(seeds)`` returns
    an ``(n_seeds, n_eigs)`` eigenvalue matrix for any seeds.
    """

    def __init__(self, N=32, eps=None, n_eigs=20, method="auto"):
        self.N = N
        self.eps = eps
        self.n_eigs = n_eigs
        self.method = method

    def _spectrum(self, seed):
        grid = Grid(self.N)
        eps = 2.0 / self.N if self.eps is None else self.eps
        H = Hamiltonian.from_enhanced(build_enhanced(sample_white_noise(grid, int(seed)), eps))
        return eigensolve(H, self.n_eigs, method=self.method)

    def fit(self, X, y=None):
        check_grid_size(self.N)
        if self.eps is not None:
            check_eps(self.eps)
        seeds = _seeds(X)
        self.eigenvalues_ = self.transform(seeds)
        self.mean_eigenvalues_ = self.eigenvalues_.mean(axis=0)
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        return np.array([self._spectrum(s).unshifted for s in _seeds(X)])


class WeylLawRegressor(RegressorMixin, BaseEstimator):
    """Fit ``N(lambda) ~ slope * lambda + intercept`` from eigenvalue levels.

    ``X`` holds levels ``lambda`` (one column) and ``y`` the counting function
    at those levels; ``from_eigenvalues`` builds both on a uniform grid.
    """

    def __init__(self, fit_intercept=True):
        self.fit_intercept = fit_intercept

    @staticmethod
    def from_eigenvalues(eigenvalues, lam_max, n_points=512):
        lam = np.linspace(0.0, lam_max, n_points, endpoint=False)
        return lam[:, None], np.searchsorted(np.sort(eigenvalues), lam, side="right").astype(float)

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float)
        x = X[:, 0]
        if self.fit_intercept:
            self.slope_, self.intercept_ = (float(v) for v in np.polyfit(x, y, 1))
        else:
            self.slope_, self.intercept_ = float(x @ y / (x @ x)), 0.0
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        return self.slope_ * check_array(X)[:, 0] + self.intercept_


class StrichartzLossEstimator(RegressorMixin, BaseEstimator):
    """Sobolev loss from block-wise Strichartz norms.

    ``fit(j, lhs)`` regresses ``log lhs`` on ``j log 2``; ``loss_`` is the
    slope and ``ci_`` its confidence interval. With ``collect`` the norms are
    computed here from seeds and blocks instead (``X`` rows ``(seed, j)``,
    ``y`` ignored).
    """

    def __init__(self, p=4.0, q=4.0, T=1.0, kind="schrodinger", N=32, eps=None, confidence=0.95,
                 nodes=128):
        self.p = p
        self.q = q
        self.T = T
        self.kind = kind
        self.N = N
        self.eps = eps
        self.confidence = confidence
        self.nodes = nodes

    def collect(self, X):
        """Strichartz norms for rows ``(seed, j)``; operators are cached per seed."""
        check_strichartz_pair(self.p, self.q)
        X = np.asarray(X)
        grid = Grid(self.N)
        eps = 2.0 / self.N if self.eps is None else self.eps
        cache, out = {}, []
        for seed, j in X:
            seed = int(seed)
            if seed not in cache:
                H = Hamiltonian.from_enhanced(build_enhanced(sample_white_noise(grid, seed), eps))
                if self.kind == "wave":
                    H = H.with_shift(positivity_shift(H))
                cache[seed] = eigensolve(H) if self.N <= 32 else H
            u = block_datum(grid, int(j), datum_rng(seed, int(j)))
            out.append(strichartz_norm(cache[seed], u, self.p, self.q, self.T, nodes=self.nodes, kind=self.kind))
        return np.array(out)

    def fit(self, X, y=None):
        X = np.asarray(X)
        if y is None:
            y = self.collect(X)
            js = X[:, 1]
        else:
            js = check_array(X)[:, -1]
        fit = fit_loss(js, y, confidence=self.confidence)
        self.loss_, self.intercept_, self.stderr_, self.ci_ = fit.slope, fit.intercept, fit.stderr, fit.ci
        self.n_features_in_ = X.shape[1] if X.ndim == 2 else 1
        return self

    def predict(self, X):
        """Predicted norm ``exp(intercept) 2^(loss j)``."""
        check_is_fitted(self, "loss_")
        js = check_array(X)[:, -1]
        return np.exp(self.intercept_ + self.loss_ * js * np.log(2.0))


class LittlewoodPaleyTransformer(TransformerMixin, BaseEstimator):
    """Map real point values on the ``N x N`` grid to Littlewood-Paley block norms.

    Each row of ``X`` is a flattened field; the output has one column per
    block ``-1, 0, ..., jmax`` holding ``||Delta_j u||_2`` (times ``2^(j beta)``).
    """

    def __init__(self, N=16, beta=0.0):
        self.N = N
        self.beta = beta

    def fit(self, X, y=None):
        check_grid_size(self.N)
        X = check_array(X)
        if X.shape[1] != self.N * self.N:
            raise ValueError(f"expected {self.N * self.N} columns, got {X.shape[1]}")
        self.grid_ = Grid(self.N)
        self.blocks_ = np.arange(-1, self.grid_.jmax + 1)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        weights = 2.0 ** (self.blocks_ * self.beta)
        out = np.empty((X.shape[0], self.blocks_.size))
        for i, row in enumerate(X):
            u = from_point_values(self.grid_, row.reshape(self.N, self.N), real=True)
            out[i] = [lp_project(u, j).norm() for j in self.blocks_]
        return out * weights

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "blocks_")
        return np.array([f"block_{j}" for j in self.blocks_], dtype=object)


__all__ = ["AndersonSpectrumEstimator", "WeylLawRegressor", "StrichartzLossEstimator",
           "LittlewoodPaleyTransformer"]
