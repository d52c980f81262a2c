"""Multi-channel discriminative correlation filter core.

A filter is learned by ridge regression on the circular-correlation
response: the response of the per-channel filters to the training sample
should match a desired output grid g. With unnormalized DFTs the closed
form for a single sample is, per channel and per frequency,

    H^l = conj(G) * F^l / (sum_k conj(F^k) F^k + lambda)

and for online tracking the numerator and denominator are kept as
exponentially weighted running averages. Detection divides the channel-
summed cross-spectrum by the denominator and inverts the DFT.

Sample arrays carry the feature channel on the last axis; all leading
axes are grid axes (1-D scale, 2-D translation, 3-D joint scale-space).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import dft_forward

__all__ = [
    "FeatureSample",
    "FilterModel",
    "CorrelationScores",
    "InvalidStateError",
    "solve_single",
    "brute_force_solve",
    "update",
    "detect",
]


class InvalidStateError(RuntimeError):
    """Operation attempted on an object whose state cannot support it."""


@dataclass(frozen=True)
class FeatureSample:
    """Multi-channel grid of feature values, channel on the last axis."""

    data: np.ndarray
    windowed: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim < 2:
            raise ValueError("sample needs grid axes plus a channel axis")
        if data.size == 0:
            raise ValueError("sample must be non-empty")
        if not np.all(np.isfinite(data)):
            raise ValueError("sample values must be finite")
        object.__setattr__(self, "data", data)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape[:-1]

    @property
    def channels(self) -> int:
        return self.data.shape[-1]

    def spectra(self) -> np.ndarray:
        """Per-channel DFT over the grid axes."""
        return np.fft.fftn(self.data, axes=tuple(range(self.data.ndim - 1)))


@dataclass(frozen=True)
class FilterModel:
    """Correlation filter as per-channel numerators and shared denominator."""

    numerators: np.ndarray  # complex, dims + (channels,)
    denominator: np.ndarray  # real, dims
    lam: float
    frame_count: int = 0

    @classmethod
    def initial(cls, dims, channels: int, lam: float) -> "FilterModel":
        if lam <= 0:
            raise ValueError("regularization weight must be positive")
        dims = tuple(int(d) for d in dims)
        return cls(
            numerators=np.zeros(dims + (channels,), dtype=complex),
            denominator=np.zeros(dims),
            lam=float(lam),
            frame_count=0,
        )

    @property
    def dims(self) -> tuple[int, ...]:
        return self.numerators.shape[:-1]

    @property
    def channels(self) -> int:
        return self.numerators.shape[-1]

    def filters(self) -> np.ndarray:
        """Materialize the per-channel Fourier-domain filters H^l."""
        return self.numerators / (self.denominator + self.lam)[..., None]


@dataclass(frozen=True)
class CorrelationScores:
    """Real-valued correlation response with its spectrum and argmax."""

    values: np.ndarray
    spectrum: np.ndarray
    argmax_index: tuple[int, ...]
    argmax_value: float

    @classmethod
    def from_spectrum(cls, Y: np.ndarray) -> "CorrelationScores":
        values = np.real(np.fft.ifftn(Y))
        # np.argmax returns the first maximum in row-major order, which is
        # the tie-breaking rule used throughout.
        flat = int(np.argmax(values))
        idx = np.unravel_index(flat, values.shape)
        return cls(
            values=values,
            spectrum=Y,
            argmax_index=tuple(int(i) for i in idx),
            argmax_value=float(values[idx]),
        )


def _check_pair(f: FeatureSample, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if g.shape != f.dims:
        raise ValueError(f"desired output shape {g.shape} != sample dims {f.dims}")
    return g


def solve_single(f: FeatureSample, g: np.ndarray, lam: float) -> FilterModel:
    """Exact single-sample filter; minimizes the regularized response error."""
    g = _check_pair(f, g)
    if lam <= 0:
        raise ValueError("regularization weight must be positive")
    F = f.spectra()
    G_conj = np.conj(dft_forward(g))
    numerators = G_conj[..., None] * F
    denominator = np.sum(np.conj(F) * F, axis=-1).real
    return FilterModel(numerators, denominator, float(lam), frame_count=1)


def brute_force_solve(f: FeatureSample, g: np.ndarray, lam: float) -> np.ndarray:
    """Oracle solve via the per-frequency d x d normal equations.

    Returns the materialized per-channel filters. Each frequency n is an
    independent quadratic problem (F F* + lam I) H = F conj(G); the direct
    linear solve is cross-checked against the rank-1-inverse closed form
    H = F conj(G) / (F* F + lam) before returning. Restricted to small
    grids, it exists to validate the fast path.
    """
    g = _check_pair(f, g)
    if lam <= 0:
        raise ValueError("regularization weight must be positive")
    if any(d > 16 for d in f.dims) or f.channels > 4:
        raise ValueError("oracle limited to grids <= 16 per axis and d <= 4")
    F = f.spectra().reshape(-1, f.channels)
    G = dft_forward(g).reshape(-1)
    d = f.channels
    H = np.empty_like(F)
    for n in range(F.shape[0]):
        fn = F[n]
        lhs = np.outer(fn, np.conj(fn)) + lam * np.eye(d)
        rhs = fn * np.conj(G[n])
        direct = np.linalg.solve(lhs, rhs)
        closed = fn * np.conj(G[n]) / (np.vdot(fn, fn) + lam)
        gap = np.linalg.norm(direct - closed) / max(np.linalg.norm(direct), 1e-30)
        if gap > 1e-9:
            raise AssertionError(f"rank-1 inverse identity violated: rel err {gap:.3e}")
        H[n] = direct
    return H.reshape(f.dims + (d,))


def update(model: FilterModel, f: FeatureSample, g: np.ndarray, eta: float) -> FilterModel:
    """Running-average update of numerator and denominator.

    The first update assigns full weight (a fresh model has no history);
    afterwards both terms are convex combinations with rate ``eta``.
    """
    g = _check_pair(f, g)
    if f.dims != model.dims or f.channels != model.channels:
        raise ValueError(
            f"sample {f.dims}x{f.channels} does not match model "
            f"{model.dims}x{model.channels}"
        )
    if not 0.0 < eta <= 1.0:
        raise ValueError("learning rate must be in (0, 1]")
    F = f.spectra()
    G_conj = np.conj(dft_forward(g))
    new_num = G_conj[..., None] * F
    new_den = np.sum(np.conj(F) * F, axis=-1).real
    if model.frame_count == 0:
        numerators, denominator = new_num, new_den
    else:
        numerators = (1.0 - eta) * model.numerators + eta * new_num
        denominator = (1.0 - eta) * model.denominator + eta * new_den
    return FilterModel(numerators, denominator, model.lam, model.frame_count + 1)


def detect(model: FilterModel, z: FeatureSample) -> CorrelationScores:
    """Correlation response of the model on a test sample."""
    if model.frame_count < 1:
        raise InvalidStateError("detect called on an un-trained model")
    if z.dims != model.dims or z.channels != model.channels:
        raise ValueError(
            f"test sample {z.dims}x{z.channels} does not match model "
            f"{model.dims}x{model.channels}"
        )
    Z = z.spectra()
    Y = np.sum(np.conj(model.numerators) * Z, axis=-1) / (model.denominator + model.lam)
    return CorrelationScores.from_spectrum(Y)
