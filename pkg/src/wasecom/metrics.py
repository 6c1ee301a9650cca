"""Reconstruction quality metrics: MSE, PSNR, SSIM, BLEU.

All metrics are pure numpy functions of arrays/sequences; the PSNR/SSIM pair
expects images scaled to [0, max_val].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSNR_CAP_DB = 100.0


def mse(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Mean over samples of per-sample mean squared error.

    Reduction order (feature mean, then batch mean) matches the training
    reconstruction loss bit for bit.
    """
    x, x_hat = np.asarray(x, dtype=float), np.asarray(x_hat, dtype=float)
    if x.shape != x_hat.shape:
        raise ValueError(f"mse: shape mismatch {x.shape} vs {x_hat.shape}")
    d = x - x_hat
    sq = d * d
    if sq.ndim == 1:
        return float(sq.mean())
    return float(sq.reshape(len(sq), -1).mean(axis=1).mean())


def psnr_db(x: np.ndarray, x_hat: np.ndarray, max_val: float = 1.0) -> float:
    return psnr_from_mse(mse(x, x_hat), max_val)


def psnr_from_mse(mse_value: float, max_val: float = 1.0) -> float:
    """10 log10(max^2 / mse), capped at 100 dB for (near-)exact matches."""
    if max_val <= 0:
        raise ValueError("max_val must be positive")
    if mse_value < max_val**2 * 1e-10:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(max_val**2 / mse_value))


def ssim(x: np.ndarray, y: np.ndarray, max_val: float = 1.0, window: int = 8) -> float:
    """Mean structural similarity with a uniform sliding window (stride 1).

    Per window: ((2 ux uy + c1)(2 cov + c2)) / ((ux^2 + uy^2 + c1)(vx + vy + c2))
    with c1 = (0.01 max)^2, c2 = (0.03 max)^2 and population statistics.
    Accepts a single (H, W) image or a batch (N, H, W).
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"ssim: shape mismatch {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[None], y[None]
    n, h, w = x.shape
    if window > min(h, w):
        raise ValueError(f"window {window} exceeds image side {min(h, w)}")
    c1 = (0.01 * max_val) ** 2
    c2 = (0.03 * max_val) ** 2
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            px = x[:, i:i + window, j:j + window].reshape(n, -1)
            py = y[:, i:i + window, j:j + window].reshape(n, -1)
            ux, uy = px.mean(axis=1), py.mean(axis=1)
            vx = ((px - ux[:, None]) ** 2).mean(axis=1)
            vy = ((py - uy[:, None]) ** 2).mean(axis=1)
            cov = ((px - ux[:, None]) * (py - uy[:, None])).mean(axis=1)
            num = (2 * ux * uy + c1) * (2 * cov + c2)
            den = (ux**2 + uy**2 + c1) * (vx + vy + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def _ngram_counts(tokens, n):
    counts = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i:i + n])
        counts[g] = counts.get(g, 0) + 1
    return counts


def bleu(candidate, references, max_n: int = 4, smooth: float = 1e-9) -> float:
    """Geometric mean of clipped n-gram precisions times the brevity penalty.

    Zero clipped counts are replaced by `smooth`; n-gram orders the candidate
    is too short to form are skipped.
    """
    candidate = list(candidate)
    refs = [list(r) for r in references]
    if not candidate or not refs or any(not r for r in refs):
        raise ValueError("bleu: empty candidate or reference")
    c = len(candidate)
    r = min((len(ref) for ref in refs), key=lambda L: (abs(L - c), L))
    log_precisions = []
    for n in range(1, max_n + 1):
        cand_counts = _ngram_counts(candidate, n)
        total = sum(cand_counts.values())
        if total == 0:
            break
        clipped = 0
        for g, cnt in cand_counts.items():
            best_ref = max(_ngram_counts(ref, n).get(g, 0) for ref in refs)
            clipped += min(cnt, best_ref)
        log_precisions.append(np.log(clipped if clipped > 0 else smooth) - np.log(total))
    geo = np.exp(np.mean(log_precisions))
    brevity = 1.0 if c > r else np.exp(1.0 - r / c)
    return float(brevity * geo)


@dataclass
class MetricsRecord:
    task: str
    snr_db: float
    attack: str            # "clean" or e.g. "fgsm(eps=0.01,frac=0.10)"
    mse: float
    psnr_db: float | None = None
    ssim: float | None = None
    bleu: float | None = None
    n: int = 0

    CSV_HEADER = "task,snr_db,attack,mse,psnr_db,ssim,bleu,n"

    def csv_row(self) -> str:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return ",".join([self.task, repr(float(self.snr_db)), self.attack,
                         fmt(self.mse), fmt(self.psnr_db), fmt(self.ssim),
                         fmt(self.bleu), str(self.n)])
