"""Feature-dimensionality reduction for correlation filters.

Two schemes live here. The translation filter uses PCA on a running
target template: the filter numerator is recomputed each frame from the
projected template (the numerator is linear in the training samples, so
no separate running average is needed), while the denominator keeps its
running average with a fresh projection per frame. The scale filter uses
QR factorizations of the template and the training sample instead; with
more feature dimensions than scale bins this compression is exact, so
detection scores are unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mcdcf import CorrelationScores, FeatureSample, InvalidStateError
from .spectral import dft_forward

__all__ = [
    "CompressedFilterModel",
    "update_template",
    "learn_projection",
    "projection_spectrum",
    "compressed_update",
    "compressed_detect",
    "qr_scale_projection",
    "denominator_gap",
]


def update_template(u: np.ndarray | None, f: FeatureSample, eta: float) -> np.ndarray:
    """Exponential running average of training samples; first call copies."""
    if u is None:
        return f.data.copy()
    u = np.asarray(u, dtype=float)
    if u.shape != f.data.shape:
        raise ValueError(f"template shape {u.shape} != sample shape {f.data.shape}")
    if not 0.0 < eta <= 1.0:
        raise ValueError("learning rate must be in (0, 1]")
    return (1.0 - eta) * u + eta * f.data


def projection_spectrum(u: np.ndarray) -> np.ndarray:
    """Descending eigenvalues of the template's channel autocorrelation."""
    flat = np.asarray(u, dtype=float).reshape(-1, u.shape[-1])
    corr = flat.T @ flat
    eigvals = np.linalg.eigvalsh(corr)[::-1]
    return np.maximum(eigvals, 0.0)


def learn_projection(u: np.ndarray, d_tilde: int) -> np.ndarray:
    """Orthonormal d_tilde x d projection minimizing template reconstruction
    error; rows are the top eigenvectors of the channel autocorrelation."""
    u = np.asarray(u, dtype=float)
    d = u.shape[-1]
    if not 1 <= d_tilde <= d:
        raise ValueError(f"compressed dimension must be in [1, {d}], got {d_tilde}")
    flat = u.reshape(-1, d)
    corr = flat.T @ flat
    eigvals, vecs = np.linalg.eigh(corr)
    order = np.argsort(eigvals)[::-1]
    return vecs[:, order[:d_tilde]].T.copy()


def _project(data: np.ndarray, projection: np.ndarray) -> np.ndarray:
    return data @ projection.T


@dataclass(frozen=True)
class CompressedFilterModel:
    """Filter learned in a projected feature space.

    ``projection`` is the matrix used for the most recent update; detection
    applies it to the test sample, so a model always pairs scores with the
    basis it was trained in.
    """

    numerators: np.ndarray  # complex, dims + (d_tilde,)
    denominator: np.ndarray  # real, dims
    projection: np.ndarray  # d_tilde x d
    template_spectrum: np.ndarray  # complex, dims + (d_tilde,)
    lam: float
    frame_count: int = 0

    @classmethod
    def initial(cls, dims, d_tilde: int, channels: int, lam: float):
        if lam <= 0:
            raise ValueError("regularization weight must be positive")
        dims = tuple(int(d) for d in dims)
        return cls(
            numerators=np.zeros(dims + (d_tilde,), dtype=complex),
            denominator=np.zeros(dims),
            projection=np.zeros((d_tilde, channels)),
            template_spectrum=np.zeros(dims + (d_tilde,), dtype=complex),
            lam=float(lam),
            frame_count=0,
        )

    @property
    def dims(self) -> tuple[int, ...]:
        return self.numerators.shape[:-1]


def compressed_update(
    model: CompressedFilterModel,
    f: FeatureSample,
    u: np.ndarray,
    g: np.ndarray,
    eta: float,
    projection: np.ndarray,
    sample_projection: np.ndarray | None = None,
) -> CompressedFilterModel:
    """Update the compressed filter with a fresh projection.

    The numerator is rebuilt from the projected template (no averaging);
    the denominator averages channel power spectra of the projected
    training sample. ``sample_projection`` lets the scale filter project
    the sample with its own factorization.
    """
    proj = np.asarray(projection, dtype=float)
    sproj = proj if sample_projection is None else np.asarray(sample_projection, float)
    if proj.shape[1] != f.channels or sproj.shape[1] != f.channels:
        raise InvalidStateError("projection does not match the sample channels")
    if u.shape != f.data.shape:
        raise InvalidStateError("template does not match the sample shape")
    if not 0.0 < eta <= 1.0:
        raise ValueError("learning rate must be in (0, 1]")
    g = np.asarray(g, dtype=float)
    if g.shape != f.dims:
        raise ValueError(f"desired output shape {g.shape} != sample dims {f.dims}")

    grid_axes = tuple(range(len(f.dims)))
    G_conj = np.conj(dft_forward(g))
    U = np.fft.fftn(_project(u, proj), axes=grid_axes)
    numerators = G_conj[..., None] * U
    Ft = np.fft.fftn(_project(f.data, sproj), axes=grid_axes)
    new_den = np.sum(np.conj(Ft) * Ft, axis=-1).real
    if model.frame_count == 0:
        denominator = new_den
    else:
        denominator = (1.0 - eta) * model.denominator + eta * new_den
    return CompressedFilterModel(
        numerators=numerators,
        denominator=denominator,
        projection=proj,
        template_spectrum=U,
        lam=model.lam,
        frame_count=model.frame_count + 1,
    )


def compressed_detect(model: CompressedFilterModel, z: FeatureSample) -> CorrelationScores:
    """Correlation scores of a test sample projected with the model's basis."""
    if model.frame_count < 1:
        raise InvalidStateError("detect called on an un-trained compressed model")
    if model.projection.shape[1] != z.channels:
        raise InvalidStateError("projection does not match the test sample channels")
    grid_axes = tuple(range(len(z.dims)))
    Z = np.fft.fftn(_project(z.data, model.projection), axes=grid_axes)
    Y = np.sum(np.conj(model.numerators) * Z, axis=-1) / (model.denominator + model.lam)
    return CorrelationScores.from_spectrum(Y)


def qr_scale_projection(u_scale: np.ndarray, f_scale: np.ndarray):
    """Orthonormal projections from QR factorizations of scale template and
    sample.

    With the feature dimension d >= the number of scale bins S, both the
    template and the sample are reconstructed exactly from their projected
    versions, so the compression loses nothing. With d < S there is nothing
    to compress and identity projections are returned.
    """
    u = np.asarray(u_scale, dtype=float)
    f = np.asarray(f_scale, dtype=float)
    if u.ndim != 2 or f.shape != u.shape:
        raise ValueError("scale template and sample must share an (S, d) shape")
    s_bins, d = u.shape
    if d < s_bins:
        eye = np.eye(d)
        return eye, eye.copy()
    qu, _ = np.linalg.qr(u.T)
    qf, _ = np.linalg.qr(f.T)
    return qu.T.copy(), qf.T.copy()


def denominator_gap(model: CompressedFilterModel, reference: np.ndarray) -> float:
    """Relative gap between the compressed denominator and a reference one.

    Diagnostic only: the per-frame projections make the compressed
    denominator an approximation of the full-dimensional running average.
    """
    ref = np.asarray(reference, dtype=float)
    scale = np.linalg.norm(ref)
    if scale == 0:
        return float(np.linalg.norm(model.denominator))
    return float(np.linalg.norm(model.denominator - ref) / scale)
