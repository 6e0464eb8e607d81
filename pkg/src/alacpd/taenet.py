"""TAEnet: a skip-connected LSTM autoencoder plus a shared autoregressive model.

The network reconstructs the current window ``X_t`` (``window`` x ``n_dims``)
as ``gate_ae * X_ae + gate_ar * X_ar``:

* ``X_ae`` comes from an encoder/decoder pair of adaptive skip-connected LSTM
  cells. The encoder reads the window; its last hidden state is fed to the
  decoder at every step; decoder states are projected back to ``n_dims``.
* ``X_ar`` predicts each row ``x_t'`` of the window from the ``window``
  samples ending ``horizon`` steps earlier, with one coefficient vector shared
  by every dimension.

All gradients are written out by hand (BPTT through both cells, the skip
path and the blend coefficient).
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._kernels import cell_backward, cell_forward
from .ndcore import (
    NonFiniteError,
    Parameter,
    SgdConfig,
    check_finite,
    finite_diff_check,
    sgd_step,
    uniform_init,
)


@dataclass(frozen=True)
class TAEnetConfig:
    window: int = 6
    n_dims: int = 1
    hidden: int = 20
    skip: int = 3
    horizon: int = 4
    use_ae: bool = True
    use_ar: bool = True

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if self.n_dims < 1 or self.hidden < 1:
            raise ValueError("n_dims and hidden must be positive")
        if self.skip < 1:
            raise ValueError("skip must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if not (self.use_ae or self.use_ar):
            raise ValueError("at least one of use_ae / use_ar must be enabled")

    @property
    def context_length(self) -> int:
        """Samples needed so that every row of the window has a full AR history."""
        return 2 * self.window + self.horizon - 1

    @property
    def variant(self) -> str:
        if self.use_ae and self.use_ar:
            return "ALACPD"
        return "ALACPDw/oAR" if self.use_ae else "ALACPDw/oAE"


class AscLstmCell:
    """LSTM cell whose output blends in a transformed state from ``skip`` steps back.

    For step ``t`` (0-based inside the sequence) the plain LSTM output is
    ``m_t = tanh(c_t) * o_t``. When ``t >= skip``::

        h_t = a * m_t + (1 - a) * tanh(h_{t-skip} @ skip_weight)

    with ``a = sigmoid(alpha_raw)``; earlier steps use ``h_t = m_t``.
    Gate order in the packed weight is input, forget, output, candidate.
    """

    def __init__(self, n_in: int, hidden: int, skip: int, rng: np.random.Generator, prefix: str = ""):
        self.n_in = n_in
        self.hidden = hidden
        self.skip = skip
        fan = n_in + hidden
        self.weight = Parameter(prefix + "weight", uniform_init(rng, (fan, 4 * hidden), fan))
        self.bias = Parameter(prefix + "bias", np.zeros(4 * hidden))
        self.skip_weight = Parameter(prefix + "skip_weight", uniform_init(rng, (hidden, hidden), hidden))
        self.alpha_raw = Parameter(prefix + "alpha_raw", np.zeros(()))

    @property
    def alpha(self) -> float:
        r = float(self.alpha_raw.value)
        if r >= 0:
            return 1.0 / (1.0 + math.exp(-r))
        e = math.exp(r)
        return e / (1.0 + e)

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias, self.skip_weight, self.alpha_raw]

    def forward(self, inputs: np.ndarray):
        inputs = np.ascontiguousarray(inputs, dtype=np.float64)
        a = self.alpha
        H, C, G, S, M = cell_forward(
            inputs, self.weight.value, self.bias.value, self.skip_weight.value, a, self.skip
        )
        if not np.all(np.isfinite(H)):
            raise NonFiniteError("non-finite hidden state in ASC-LSTM forward pass")
        return H, (inputs, a, H, C, G, S, M)

    def backward(self, state, dH: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; return the gradient w.r.t. the inputs."""
        inputs, a, H, C, G, S, M = state
        dX, dW, db, dWs, dalpha = cell_backward(
            inputs, self.weight.value, self.skip_weight.value, a, self.skip,
            H, C, G, S, M, np.ascontiguousarray(dH, dtype=np.float64),
        )
        self.weight.grad += dW
        self.bias.grad += db
        self.skip_weight.grad += dWs
        self.alpha_raw.grad += dalpha * a * (1.0 - a)
        return dX


class ArModel:
    """Linear predictor ``x_t = sum_i coef[i] * x_{t-horizon-i} + bias`` per dimension."""

    def __init__(self, window: int, horizon: int, rng: np.random.Generator):
        self.window = window
        self.horizon = horizon
        self.coef = Parameter("ar.coef", uniform_init(rng, (window,), window))
        self.bias = Parameter("ar.bias", np.zeros(()))

    def parameters(self) -> list[Parameter]:
        return [self.coef, self.bias]

    def lags(self, history: np.ndarray, t: int) -> np.ndarray:
        lo = t - self.horizon - self.window + 1
        if lo < 0 or t >= len(history) + self.horizon or t < 0:
            raise IndexError(
                f"AR prediction at t={t} needs samples {lo}..{t - self.horizon}; "
                f"history has {len(history)}"
            )
        # rows ordered by lag i = 0..window-1
        return history[t - self.horizon - np.arange(self.window)]


def ar_predict(ar: ArModel, history, t: int) -> np.ndarray:
    """Predict ``x_t`` (one value per dimension) from ``history`` (n x D, 0-based)."""
    history = np.asarray(history, dtype=np.float64)
    if history.ndim == 1:
        history = history[:, None]
    return ar.coef.value @ ar.lags(history, t) + ar.bias.value


class TAEnet:
    def __init__(self, config: TAEnetConfig, seed=None):
        if config.skip >= config.window:
            warnings.warn(
                f"skip={config.skip} >= window={config.window}: the skip path never fires",
                stacklevel=2,
            )
        self.config = config
        rng = np.random.default_rng(seed)
        D, U = config.n_dims, config.hidden
        self.encoder = AscLstmCell(D, U, config.skip, rng, "encoder.")
        self.decoder = AscLstmCell(U, U, config.skip, rng, "decoder.")
        self.out_weight = Parameter("out.weight", uniform_init(rng, (U, D), U))
        self.out_bias = Parameter("out.bias", np.zeros(D))
        self.ar = ArModel(config.window, config.horizon, rng)
        self.gate_ae = Parameter("gate_ae", np.ones(()))
        self.gate_ar = Parameter("gate_ar", np.ones(()))
        w = config.window
        L = config.context_length
        # lag_index[j, i]: context row feeding lag i of window row j
        self._lag_index = (L - w + np.arange(w))[:, None] - config.horizon - np.arange(w)[None, :]

    def parameters(self) -> list[Parameter]:
        params = []
        if self.config.use_ae:
            params += self.encoder.parameters() + self.decoder.parameters()
            params += [self.out_weight, self.out_bias, self.gate_ae]
        if self.config.use_ar:
            params += self.ar.parameters() + [self.gate_ar]
        return params

    def all_parameters(self) -> list[Parameter]:
        return (
            self.encoder.parameters()
            + self.decoder.parameters()
            + [self.out_weight, self.out_bias, self.gate_ae]
            + self.ar.parameters()
            + [self.gate_ar]
        )

    # -- forward -----------------------------------------------------------

    def _split(self, context) -> tuple[np.ndarray, np.ndarray]:
        ctx = np.asarray(context, dtype=np.float64)
        if ctx.ndim == 1:
            ctx = ctx[:, None]
        w, D = self.config.window, self.config.n_dims
        if ctx.ndim != 2 or ctx.shape[1] != D or ctx.shape[0] < w:
            raise ValueError(f"context must have shape (>= {w}, {D}); got {ctx.shape}")
        L = self.config.context_length
        if ctx.shape[0] > L:
            ctx = ctx[-L:]
        elif ctx.shape[0] < L:
            # missing history: pad, and mark the affected AR rows invalid below
            pad = np.zeros((L - ctx.shape[0], D))
            n_missing = L - ctx.shape[0]
            ctx = np.vstack((pad, ctx))
            return ctx, self._lag_index.min(axis=1) >= n_missing
        return ctx, np.ones(w, dtype=bool)

    def ae_reconstruct(self, window):
        window = np.asarray(window, dtype=np.float64)
        H_enc, enc_state = self.encoder.forward(window)
        latent = np.repeat(H_enc[-1:], window.shape[0], axis=0)
        H_dec, dec_state = self.decoder.forward(latent)
        out = H_dec @ self.out_weight.value + self.out_bias.value
        return out, (enc_state, dec_state, H_dec)

    def ar_reconstruct(self, ctx, valid):
        w, D = self.config.window, self.config.n_dims
        out = np.zeros((w, D))
        lags = ctx[self._lag_index[valid]]  # (n_valid, w, D)
        if lags.shape[0]:
            out[valid] = np.einsum("jid,i->jd", lags, self.ar.coef.value) + self.ar.bias.value
        return out, lags

    def forward(self, context):
        """Reconstruct the window formed by the last ``window`` rows of ``context``.

        ``context`` may carry up to ``context_length`` rows of preceding
        samples. Window rows whose AR lags fall before the start of the
        context get a zero AR prediction.
        Returns ``(reconstruction, loss, cache)``.
        """
        cfg = self.config
        ctx, valid = self._split(context)
        X = ctx[-cfg.window :]
        recon = np.zeros_like(X)
        ae_out = ar_out = None
        ae_state = lags = None
        if cfg.use_ae:
            ae_out, ae_state = self.ae_reconstruct(X)
            recon += self.gate_ae.value * ae_out
        if cfg.use_ar:
            ar_out, lags = self.ar_reconstruct(ctx, valid)
            recon += self.gate_ar.value * ar_out
        diff = recon - X
        loss = float(np.mean(diff * diff))
        if not np.isfinite(loss):
            raise NonFiniteError("non-finite reconstruction loss")
        return recon, loss, (diff, ae_out, ae_state, ar_out, lags, valid)

    def loss(self, context) -> float:
        return self.forward(context)[1]

    # -- backward ----------------------------------------------------------

    def backward(self, cache) -> None:
        cfg = self.config
        diff, ae_out, ae_state, ar_out, lags, valid = cache
        drecon = 2.0 * diff / diff.size
        if cfg.use_ar:
            self.gate_ar.grad += np.sum(drecon * ar_out)
            dar = self.gate_ar.value * drecon[valid]
            self.ar.coef.grad += np.einsum("jid,jd->i", lags, dar)
            self.ar.bias.grad += dar.sum()
        if cfg.use_ae:
            self.gate_ae.grad += np.sum(drecon * ae_out)
            dae = self.gate_ae.value * drecon
            enc_state, dec_state, H_dec = ae_state
            self.out_weight.grad += H_dec.T @ dae
            self.out_bias.grad += dae.sum(axis=0)
            dH_dec = dae @ self.out_weight.value.T
            dlatent = self.decoder.backward(dec_state, dH_dec)
            dH_enc = np.zeros((cfg.window, cfg.hidden))
            dH_enc[-1] = dlatent.sum(axis=0)
            self.encoder.backward(enc_state, dH_enc)

    def zero_grad(self) -> None:
        for p in self.all_parameters():
            p.zero_grad()

    def compute_gradients(self, context) -> float:
        self.zero_grad()
        _, loss, cache = self.forward(context)
        self.backward(cache)
        return loss

    def train_step(self, context, sgd: SgdConfig = SgdConfig()) -> float:
        """One SGD update on a single window; returns the loss before the update."""
        loss = self.compute_gradients(context)
        sgd_step(self.parameters(), sgd)
        return loss

    def gradient_error(self, context, epsilon: float = 1e-5) -> float:
        self.compute_gradients(context)
        return finite_diff_check(lambda: self.loss(context), self.parameters(), epsilon)

    # -- checkpoints -------------------------------------------------------

    def state_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "params": {p.name: p.value.tolist() for p in self.all_parameters()},
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "TAEnet":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = cls(TAEnetConfig(**state["config"]), seed=0)
        params = state["params"]
        for p in model.all_parameters():
            value = np.asarray(params[p.name], dtype=np.float64)
            if value.shape != p.value.shape:
                raise ValueError(f"{p.name}: shape {value.shape} != expected {p.value.shape}")
            check_finite(value, p.name)
            p.value[...] = value
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.state_dict()))

    @classmethod
    def load(cls, path) -> "TAEnet":
        return cls.from_state_dict(json.loads(Path(path).read_text()))


def random_gradcheck_config(rng: np.random.Generator) -> TAEnetConfig:
    window = int(rng.choice([3, 4]))
    return TAEnetConfig(
        window=window,
        n_dims=int(rng.choice([1, 2])),
        hidden=int(rng.choice([2, 4])),
        skip=int(rng.choice([1, 2])),
        horizon=int(rng.integers(0, 3)),
    )


def gradcheck_suite(n_configs: int = 5, seed: int = 0, epsilon: float = 1e-5) -> list[dict]:
    """Finite-difference check of full-model gradients on random small networks.

    Gates and blend coefficients are moved off their initial values so every
    branch of the backward pass carries signal.
    """
    rng = np.random.default_rng(seed)
    results = []
    for k in range(n_configs):
        cfg = random_gradcheck_config(rng)
        model = TAEnet(cfg, seed=rng)
        model.gate_ae.value[...] = rng.uniform(0.5, 1.5)
        model.gate_ar.value[...] = rng.uniform(0.5, 1.5)
        model.encoder.alpha_raw.value[...] = rng.normal()
        model.decoder.alpha_raw.value[...] = rng.normal()
        model.out_bias.value[...] = rng.normal(scale=0.1, size=cfg.n_dims)
        context = rng.normal(size=(cfg.context_length, cfg.n_dims))
        err = model.gradient_error(context, epsilon)
        results.append({"config": asdict(cfg), "max_rel_error": err})
    return results
