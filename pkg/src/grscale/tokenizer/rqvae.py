"""RQ-VAE tokenizer: MLP encoder, residual quantization with straight-through
gradients, MLP decoder.

Loss per batch (means over rows, squared norms summed over features)::

    ||x - dec(z_st)||^2 + sum_l ||sg[r_l] - c_l||^2 + beta * ||r_l - sg[c_l]||^2

with ``z_st = z + sg(z_q - z)``. Passing empty width lists makes the
encoder/decoder the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from .kmeans import train_residual_kmeans
from .quantize import SidCodebooks, SidConfig, TokenizerError, _nearest


class RQVAEDivergence(FloatingPointError):
    pass


@dataclass
class RQVAEConfig:
    encoder_widths: tuple[int, ...] = (64,)
    latent_dim: int = 16
    beta_commit: float = 0.25
    epochs: int = 20
    batch_size: int = 128
    lr: float = 1e-3
    codebook_update: str = "gradient"  # or "ema"
    ema_decay: float = 0.99
    init_iters: int = 10


@dataclass
class RQVAE:
    params: dict = field(default_factory=dict)
    enc_layers: int = 0
    dec_layers: int = 0
    num_levels: int = 0

    def _mlp(self, x: Tensor, prefix: str, n: int) -> Tensor:
        for i in range(n):
            x = ad.matmul(x, self.params[f"{prefix}.{i}.w"]) + self.params[f"{prefix}.{i}.b"]
            if i < n - 1:
                x = ad.relu(x)
        return x

    def encode_tensor(self, x: Tensor) -> Tensor:
        return self._mlp(x, "enc", self.enc_layers)

    def decode_tensor(self, z: Tensor) -> Tensor:
        return self._mlp(z, "dec", self.dec_layers)

    def codebooks(self) -> SidCodebooks:
        return SidCodebooks([self.params[f"codebook.{l}"].data for l in range(self.num_levels)])

    def encode(self, x: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return self.encode_tensor(Tensor(np.asarray(x, dtype=np.float32))).data

    def loss(self, x: Tensor, beta: float):
        """Total loss plus its parts ``(recon, codebook, commit)`` as floats."""
        z = self.encode_tensor(x)
        r = z
        zq = None
        cb_loss = commit = None
        for l in range(self.num_levels):
            book = self.params[f"codebook.{l}"]
            idx = _nearest(r.data.astype(np.float64), book.data)
            c = ad.embedding_lookup(book, idx)
            d_cb = ad.stop_gradient(r) - c
            d_cm = r - ad.stop_gradient(c)
            term_cb = ad.mean(ad.sum_(d_cb * d_cb, axis=-1))
            term_cm = ad.mean(ad.sum_(d_cm * d_cm, axis=-1))
            cb_loss = term_cb if cb_loss is None else cb_loss + term_cb
            commit = term_cm if commit is None else commit + term_cm
            zq = c if zq is None else zq + c
            r = r - ad.stop_gradient(c)
        z_st = z + ad.stop_gradient(zq - z)
        diff = x - self.decode_tensor(z_st)
        recon = ad.mean(ad.sum_(diff * diff, axis=-1))
        total = recon + cb_loss + beta * commit
        return total, (recon.item(), cb_loss.item(), commit.item()), z_st


def _linear(rng, fan_in, fan_out):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32), np.zeros(fan_out, np.float32)


def build_rqvae(in_dim: int, cfg: RQVAEConfig, num_levels: int, rng: np.random.Generator) -> RQVAE:
    model = RQVAE(num_levels=num_levels)
    if cfg.encoder_widths:
        enc = [in_dim, *cfg.encoder_widths, cfg.latent_dim]
    else:
        enc = [in_dim]
    dec = enc[::-1]
    for prefix, widths in (("enc", enc), ("dec", dec)):
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            w, bias = _linear(rng, a, b)
            model.params[f"{prefix}.{i}.w"] = Tensor(w, requires_grad=True)
            model.params[f"{prefix}.{i}.b"] = Tensor(bias, requires_grad=True)
    model.enc_layers = model.dec_layers = len(enc) - 1
    return model


def train_rqvae(matrix, cfg: SidConfig, vae: RQVAEConfig = RQVAEConfig(), return_curve: bool = False):
    """Train the RQ-VAE; codebooks start from residual k-means on initial latents.

    Returns ``(codebooks, model)`` or ``(codebooks, model, loss_curve)``.
    """
    x = np.asarray(getattr(matrix, "vectors", matrix), dtype=np.float32)
    if len(x) < max(cfg.sizes):
        raise TokenizerError(f"{len(x)} items but codebook size {max(cfg.sizes)}")
    rng = np.random.default_rng([cfg.seed, 7])
    model = build_rqvae(x.shape[1], vae, cfg.num_codebooks, rng)
    init = train_residual_kmeans(model.encode(x), cfg, iters=vae.init_iters)
    for l, book in enumerate(init.levels):
        model.params[f"codebook.{l}"] = Tensor(np.array(book), requires_grad=vae.codebook_update == "gradient")
    trainable = {k: p for k, p in model.params.items() if p.requires_grad}
    opt = ad.AdamW(trainable, lr=vae.lr, weight_decay=0.0)
    ema_n = [np.ones(len(b)) for b in init.levels]
    ema_m = [np.array(b, dtype=np.float64) for b in init.levels]
    curve = []
    for epoch in range(vae.epochs):
        order = rng.permutation(len(x))
        total, batches = 0.0, 0
        for s in range(0, len(x), vae.batch_size):
            xb = Tensor(x[order[s:s + vae.batch_size]])
            loss, _, _ = model.loss(xb, vae.beta_commit)
            if not np.isfinite(loss.item()):
                raise RQVAEDivergence(f"RQ-VAE loss became non-finite at epoch {epoch}")
            grads = ad.backward(loss)
            opt.step({k: grads[p] for k, p in trainable.items() if p in grads})
            if vae.codebook_update == "ema":
                _ema_update(model, xb.data, ema_n, ema_m, vae.ema_decay)
            total += loss.item()
            batches += 1
        curve.append(total / batches)
    books = model.codebooks()
    return (books, model, curve) if return_curve else (books, model)


def _ema_update(model: RQVAE, xb: np.ndarray, ema_n, ema_m, decay: float, eps: float = 1e-5):
    r = model.encode(xb).astype(np.float64)
    for l in range(model.num_levels):
        book = model.params[f"codebook.{l}"]
        idx = _nearest(r, book.data)
        counts = np.bincount(idx, minlength=len(book.data))
        sums = np.zeros_like(ema_m[l])
        np.add.at(sums, idx, r)
        ema_n[l] = decay * ema_n[l] + (1 - decay) * counts
        ema_m[l] = decay * ema_m[l] + (1 - decay) * sums
        n = ema_n[l].sum()
        smoothed = (ema_n[l] + eps) / (n + len(counts) * eps) * n
        book.data = (ema_m[l] / smoothed[:, None]).astype(np.float32)
        r = r - book.data[idx]
