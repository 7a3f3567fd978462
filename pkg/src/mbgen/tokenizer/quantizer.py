"""Quantized auto-encoders: the one-codebook semantic-ID first stage and the
residual (multi-codebook) baseline."""

from __future__ import annotations

import logging

import numpy as np

from ..numerics import Adagrad, GradientTape, Tensor, ops
from ..numerics.optim import collect_grads, zero_grads
from .config import TokenizerConfig
from .kmeans import kmeans, sq_dists

log = logging.getLogger(__name__)


def init_mlp(sizes, rng: np.random.Generator, prefix: str) -> dict[str, Tensor]:
    params = {}
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{prefix}.{i}.w"] = Tensor(rng.normal(scale=np.sqrt(2.0 / a), size=(a, b)), requires_grad=True)
        params[f"{prefix}.{i}.b"] = Tensor(np.zeros(b), requires_grad=True)
    return params


def run_mlp(params: dict[str, Tensor], prefix: str, x: Tensor, n_layers: int) -> Tensor:
    h = x
    for i in range(n_layers):
        h = ops.matmul(h, params[f"{prefix}.{i}.w"]) + params[f"{prefix}.{i}.b"]
        if i < n_layers - 1:
            h = ops.relu(h)
    return h


def nearest(z: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """Index of the closest codebook row for each latent (lowest index on ties)."""
    return np.argmin(sq_dists(z, codebook), axis=1)


class QuantizedAutoencoder:
    """MLP encoder, one or more residual codebooks, MLP decoder.

    Features are standardized with the training mean and a single global
    scale before entering the encoder.
    """

    def __init__(self, in_dim: int, cfg: TokenizerConfig, n_levels: int = 1):
        self.cfg = cfg
        self.in_dim = in_dim
        self.n_levels = n_levels
        rng = np.random.default_rng([cfg.seed, 1])
        enc_sizes = [in_dim, *cfg.hidden, cfg.latent_dim]
        dec_sizes = [cfg.latent_dim, *reversed(cfg.hidden), in_dim]
        self.n_enc = len(enc_sizes) - 1
        self.n_dec = len(dec_sizes) - 1
        self.params = {**init_mlp(enc_sizes, rng, "enc"), **init_mlp(dec_sizes, rng, "dec")}
        self.codebooks = [np.zeros((cfg.codebook_size, cfg.latent_dim)) for _ in range(n_levels)]
        self.mean = np.zeros(in_dim)
        self.scale = 1.0
        self.history: list[float] = []
        self.reseeds = 0

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale

    def encode(self, x: np.ndarray) -> np.ndarray:
        return run_mlp(self.params, "enc", Tensor(self.standardize(x)), self.n_enc).data

    def quantize(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-level codes and the final residual."""
        codes = np.zeros((len(z), self.n_levels), dtype=np.int64)
        r = z.copy()
        for lvl, cb in enumerate(self.codebooks):
            codes[:, lvl] = nearest(r, cb)
            r = r - cb[codes[:, lvl]]
        return codes, r

    def _fit_scaling(self, x: np.ndarray) -> None:
        self.mean = x.mean(axis=0)
        s = float(np.sqrt(((x - self.mean) ** 2).sum(axis=1).mean()))
        self.scale = s if s > 0 else 1.0

    def _converged(self) -> bool:
        p = self.cfg.plateau_epochs
        if len(self.history) <= p:
            return False
        old, new = self.history[-p - 1], self.history[-1]
        return (old - new) / max(abs(old), 1e-12) < self.cfg.rel_tol

    # -- semantic-ID stage 1: one codebook, EMA updates, dead-code re-seeding
    def fit_ema(self, x: np.ndarray) -> "QuantizedAutoencoder":
        cfg = self.cfg
        if self.n_levels != 1:
            raise ValueError("EMA training is defined for a single codebook")
        rng = np.random.default_rng([cfg.seed, 2])
        self._fit_scaling(x)
        xs = self.standardize(x)
        n, K = len(x), cfg.codebook_size
        z0 = self.encode(x)
        if n >= K:
            cb = kmeans(z0, K, rng, max_iter=cfg.kmeans_iters, tol=cfg.kmeans_tol).centers
        else:
            cb = z0[rng.integers(n, size=K)] + 1e-3 * rng.normal(size=(K, cfg.latent_dim))
        self.codebooks[0] = cb
        ema_count = np.ones(K)
        ema_sum = cb.copy()
        idle = np.zeros(K, dtype=np.int64)
        opt = Adagrad(self.params, lr=cfg.lr)
        gamma = cfg.ema_decay
        for epoch in range(cfg.max_epochs):
            order = rng.permutation(n)
            total, used = 0.0, np.zeros(K, dtype=np.int64)
            for s in range(0, n, cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                xb = Tensor(xs[idx])
                zero_grads(self.params)
                with GradientTape() as tape:
                    z = run_mlp(self.params, "enc", xb, self.n_enc)
                    r = nearest(z.data, self.codebooks[0])
                    e = self.codebooks[0][r]
                    zq = z + (e - z.data)  # straight-through: forward e_r, gradient to z
                    xhat = run_mlp(self.params, "dec", zq, self.n_dec)
                    diff = xhat - xb
                    rec = ops.mean(ops.sum(diff * diff, axis=1))
                    qd = z - e
                    quan = ops.mean(ops.sum(qd * qd, axis=1))
                    loss = rec + quan * cfg.beta
                tape.backward(loss)
                opt.step(collect_grads(self.params))
                counts = np.bincount(r, minlength=K)
                sums = np.zeros_like(ema_sum)
                np.add.at(sums, r, z.data)
                ema_count = gamma * ema_count + (1 - gamma) * counts
                ema_sum = gamma * ema_sum + (1 - gamma) * sums
                total_count = ema_count.sum()
                smoothed = (ema_count + 1e-5) / (total_count + K * 1e-5) * total_count
                self.codebooks[0] = ema_sum / smoothed[:, None]
                used += counts
                total += float(loss.data) * len(idx)
            self.history.append(total / n)
            idle = np.where(used == 0, idle + 1, 0)
            dead = np.nonzero(idle > cfg.dead_patience)[0]
            if len(dead):
                # draw replacement latents in proportion to their quantization error,
                # so a dead entry tends to land where one code covers several modes
                z_all = self.encode(x)
                err = sq_dists(z_all, self.codebooks[0]).min(axis=1)
                w = err / err.sum() if err.sum() > 0 else None
                picks = rng.choice(n, size=len(dead), replace=n < len(dead), p=w)
                for j, p in zip(dead, picks):
                    self.codebooks[0][j] = z_all[p]
                    ema_sum[j] = z_all[p]
                    ema_count[j] = 1.0
                    idle[j] = 0
                self.reseeds += len(dead)
                log.info("epoch %d: re-seeded dead codes %s", epoch, dead.tolist())
            if self._converged():
                break
        return self

    # -- residual baseline: L codebooks learned by gradient, k-means init, no re-seeding
    def fit_residual(self, x: np.ndarray) -> "QuantizedAutoencoder":
        cfg = self.cfg
        rng = np.random.default_rng([cfg.seed, 3])
        self._fit_scaling(x)
        xs = self.standardize(x)
        n, K = len(x), cfg.codebook_size
        r0 = self.encode(x)
        cbs = []
        for _ in range(self.n_levels):
            if cfg.extra.get("rq_init", "kmeans") == "kmeans" and n >= K:
                cb = kmeans(r0, K, rng, max_iter=cfg.kmeans_iters, tol=cfg.kmeans_tol).centers
            else:
                cb = r0[rng.choice(n, size=K, replace=n < K)].copy()
            cbs.append(Tensor(cb, requires_grad=True))
            r0 = r0 - cb[nearest(r0, cb)]
        named = dict(self.params)
        for lvl, cb in enumerate(cbs):
            named[f"codebook.{lvl}"] = cb
        opt = Adagrad(named, lr=cfg.lr)
        for _epoch in range(cfg.max_epochs):
            order = rng.permutation(n)
            total = 0.0
            for s in range(0, n, cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                xb = Tensor(xs[idx])
                zero_grads(named)
                with GradientTape() as tape:
                    z = run_mlp(self.params, "enc", xb, self.n_enc)
                    resid = z
                    qsum = None
                    vq = None
                    for cb in cbs:
                        code = nearest(resid.data, cb.data)
                        e = ops.embedding(cb, code)
                        # codebook term pulls entries to residuals; commitment term pulls residuals to entries
                        cterm = ops.stop_gradient(resid) - e
                        mterm = resid - ops.stop_gradient(e)
                        term = ops.mean(ops.sum(cterm * cterm, axis=1)) + \
                            ops.mean(ops.sum(mterm * mterm, axis=1)) * cfg.beta
                        vq = term if vq is None else vq + term
                        qsum = ops.stop_gradient(e) if qsum is None else qsum + ops.stop_gradient(e)
                        resid = resid - ops.stop_gradient(e)
                    zq = z + (qsum.data - z.data)
                    xhat = run_mlp(self.params, "dec", zq, self.n_dec)
                    diff = xhat - xb
                    loss = ops.mean(ops.sum(diff * diff, axis=1)) + vq
                tape.backward(loss)
                opt.step(collect_grads(named))
                total += float(loss.data) * len(idx)
            self.history.append(total / n)
            if self._converged():
                break
        self.codebooks = [cb.data.copy() for cb in cbs]
        return self

    def state_arrays(self, prefix: str = "ae") -> dict[str, np.ndarray]:
        out = {f"{prefix}.{k}": v.data for k, v in self.params.items()}
        for lvl, cb in enumerate(self.codebooks):
            out[f"{prefix}.codebook.{lvl}"] = cb
        out[f"{prefix}.mean"] = self.mean
        out[f"{prefix}.scale"] = np.array(self.scale)
        return out

    @classmethod
    def from_arrays(cls, arrays: dict, in_dim: int, cfg: TokenizerConfig, n_levels: int,
                    prefix: str = "ae") -> "QuantizedAutoencoder":
        ae = cls(in_dim, cfg, n_levels)
        for k in ae.params:
            ae.params[k].data = arrays[f"{prefix}.{k}"].copy()
        ae.codebooks = [arrays[f"{prefix}.codebook.{lvl}"].copy() for lvl in range(n_levels)]
        ae.mean = arrays[f"{prefix}.mean"].copy()
        ae.scale = float(arrays[f"{prefix}.scale"])
        return ae
