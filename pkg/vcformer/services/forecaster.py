"""VCformer forecaster: inverted embedding, encoder blocks, projection."""

from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..config import ModelConfig
from ..core import functional as F
from ..core.autodiff import Tape, Variable
from ..core.tensor import DTYPES, LAYERNORM_EPS
from ..errors import ConfigurationError, DimensionError
from ..layers.ablation import attention_forward, ffn_forward, init_attention_params, init_ffn_params
from ..layers.ktd import KtdParams, init_ktd_params, ktd_forward
from ..layers.nn import init_layernorm, init_mlp, layernorm, mlp, scope
from ..layers.vca import VcaParams, init_vca_params, vca_forward
from ..utils.logger import setup_logger

logger = setup_logger('forecaster')

Params = Dict[str, np.ndarray]


class VCformer:
    """
    Multivariate forecaster over variate tokens.

    Parameters live outside the model as a flat ``name -> array`` mapping
    (``embed.w1``, ``block.0.vca.w_q``, ``block.0.ktd.enc.w1``, ``proj.b2``, ...)
    so that the optimizer, the checkpoint container and the gradient checker all
    address them the same way.
    """

    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.cfg = cfg

    @property
    def dtype(self) -> str:
        return self.cfg.dtype

    def init_params(self, seed: Optional[int] = None) -> Params:
        """Fresh parameters drawn from ``seed`` (defaults to the config seed)."""
        cfg = self.cfg
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        params = init_mlp(rng, cfg.t, cfg.d, cfg.d, 'embed')
        for i in range(cfg.layers):
            prefix = f'block.{i}'
            if cfg.vca_mode == 'vca':
                params.update(init_vca_params(rng, cfg.d, f'{prefix}.vca'))
            elif cfg.vca_mode == 'attention':
                params.update(init_attention_params(rng, cfg.d, f'{prefix}.attn'))
            if cfg.vca_mode != 'none':
                params.update(init_layernorm(cfg.d, f'{prefix}.norm1'))
            if cfg.ktd_mode == 'ktd':
                params.update(init_ktd_params(rng, cfg.n, cfg.s, cfg.m, f'{prefix}.ktd'))
            elif cfg.ktd_mode == 'ffn':
                params.update(init_ffn_params(rng, cfg.d, cfg.m, f'{prefix}.ffn'))
            if cfg.ktd_mode != 'none':
                params.update(init_layernorm(cfg.d, f'{prefix}.norm2'))
        params.update(init_mlp(rng, cfg.d, cfg.d, cfg.h, 'proj'))
        np_dtype = DTYPES[cfg.dtype]
        params = {k: np.ascontiguousarray(v, dtype=np_dtype) for k, v in params.items()}
        logger.debug(f"initialized {len(params)} tensors, {self.param_count(params)} values")
        return params

    def param_count(self, params: Mapping[str, np.ndarray]) -> int:
        return int(sum(v.size for v in params.values()))

    def bind(self, tape: Tape, params: Mapping[str, np.ndarray],
             requires_grad: bool = True) -> Dict[str, Variable]:
        """Register every parameter as a named leaf of ``tape``."""
        return {k: tape.leaf(v, requires_grad=requires_grad, name=k, dtype=self.dtype)
                for k, v in params.items()}

    def _check_input(self, x: Variable) -> None:
        expected = (self.cfg.t, self.cfg.n)
        if x.value.ndim < 2 or x.shape[-2:] != expected:
            raise DimensionError("input window must be (..., T, N)", x.shape, expected)

    def block(self, X: Variable, params: Mapping[str, Variable], i: int,
              capture: Optional[Dict[str, Variable]] = None) -> Variable:
        """One encoder block: post-norm residual around each sublayer."""
        cfg = self.cfg
        prefix = f'block.{i}'
        if cfg.vca_mode != 'none':
            if cfg.vca_mode == 'vca':
                p = VcaParams.from_mapping(scope(params, f'{prefix}.vca'))
                mixed = vca_forward(X, p, capture=capture, key=prefix)
            else:
                mixed = attention_forward(X, scope(params, f'{prefix}.attn'))
            X = layernorm(F.add(X, mixed), scope(params, f'{prefix}.norm1'), LAYERNORM_EPS)
        if cfg.ktd_mode != 'none':
            if cfg.ktd_mode == 'ktd':
                p = KtdParams.from_mapping(scope(params, f'{prefix}.ktd'), cfg.ridge_eps, cfg.activation)
                detected = ktd_forward(X, p, cfg.s)
            else:
                detected = ffn_forward(X, scope(params, f'{prefix}.ffn'), cfg.activation)
            X = layernorm(F.add(X, detected), scope(params, f'{prefix}.norm2'), LAYERNORM_EPS)
        return X

    def forward(self, x, params: Mapping[str, Variable],
                capture: Optional[Dict[str, Variable]] = None) -> Variable:
        """
        Forecast the next H rows from a look-back window.

        Args:
            x: Window(s) of shape (..., T, N)
            params: Bound parameters (see ``bind``)
            capture: When given, receives each VCA block's pre-softmax map under ``block.{i}``

        Returns:
            Forecast of shape (..., H, N)
        """
        x = x if isinstance(x, Variable) else Variable.constant(x, dtype=self.dtype)
        self._check_input(x)
        tokens = F.transpose(x)
        X = mlp(tokens, scope(params, 'embed'), self.cfg.activation)
        for i in range(self.cfg.layers):
            X = self.block(X, params, i, capture)
        out = mlp(X, scope(params, 'proj'), self.cfg.activation)
        return F.transpose(out)

    def predict(self, x: np.ndarray, params: Mapping[str, np.ndarray]) -> np.ndarray:
        """Forward pass without gradient tracking."""
        bound = self.bind(Tape(), params, requires_grad=False)
        return self.forward(x, bound).value.numpy()

    def loss_and_grads(self, params: Mapping[str, np.ndarray], x: np.ndarray,
                       y: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """MSE of the forecast against ``y`` and its gradient for every parameter."""
        tape = Tape()
        bound = self.bind(tape, params)
        pred = self.forward(x, bound)
        loss = loss_mse(pred, Variable.constant(y, dtype=self.dtype))
        grads = tape.backward(loss)
        return float(loss.data), {k: grads[v] for k, v in bound.items()}

    def corr_map(self, x: np.ndarray, params: Mapping[str, np.ndarray], layer: int = 0) -> np.ndarray:
        """Pre-softmax N x N score map of block ``layer`` for one input window."""
        if self.cfg.vca_mode != 'vca':
            raise ConfigurationError(f"no correlation map with vca_mode={self.cfg.vca_mode!r}")
        if not 0 <= layer < self.cfg.layers:
            raise ConfigurationError(f"layer {layer} out of range for {self.cfg.layers} blocks")
        capture: Dict[str, Variable] = {}
        bound = self.bind(Tape(), params, requires_grad=False)
        self.forward(x, bound, capture=capture)
        return capture[f'block.{layer}'].value.numpy()


def forward(X_in, params: Mapping[str, Variable], cfg: ModelConfig,
            capture: Optional[Dict[str, Variable]] = None) -> Variable:
    return VCformer(cfg).forward(X_in, params, capture)


def loss_mse(pred: Variable, target: Variable) -> Variable:
    """Mean squared error over all H*N entries (and batch members)."""
    pred = pred if isinstance(pred, Variable) else Variable.constant(pred)
    target = target if isinstance(target, Variable) else Variable.constant(target)
    return F.mse(pred, target)
