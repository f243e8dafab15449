"""Sequence-level layers: unrolled recurrent passes (both directions),
bidirectional concatenation, and the per-timestep dense output head.

Forward passes can record caches for backpropagation through time; the
matching backward functions walk the unroll in reverse and accumulate
parameter gradients.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .cells import (
    CellParams,
    GruCellParams,
    gru_step_backward,
    gru_step_cached,
    rnn_step_backward,
    rnn_step_cached,
)


def _scan_order(timesteps: int, direction: str) -> list[int]:
    if direction == "forward":
        return list(range(timesteps))
    if direction == "backward":
        return list(range(timesteps - 1, -1, -1))
    raise ShapeError(f"direction must be 'forward' or 'backward', got {direction!r}")


def unroll(
    seq: np.ndarray,
    cell: CellParams,
    direction: str = "forward",
    input_mask: np.ndarray | None = None,
    recurrent_mask: np.ndarray | None = None,
    gru_convention: str = "z_gates_candidate",
    want_cache: bool = False,
):
    """Run one recurrent layer over a (B, T, D) sequence from a zero state.

    The output (B, T, H) is aligned with time for both directions: entry t
    of a backward pass is the state after consuming x[T-1..t]. Masks, when
    given, are (B, D) / (B, H) and are reapplied unchanged at every step.
    Returns `h_seq` or `(h_seq, cache)` when `want_cache` is set.
    """
    batch, timesteps, _ = seq.shape
    hidden = cell.hidden_size
    is_gru = isinstance(cell, GruCellParams)
    order = _scan_order(timesteps, direction)

    h = np.zeros((batch, hidden), dtype=seq.dtype)
    h_seq = np.empty((batch, timesteps, hidden), dtype=seq.dtype)
    caches: list[dict] | None = [None] * timesteps if want_cache else None

    for t in order:
        xm = seq[:, t, :] if input_mask is None else seq[:, t, :] * input_mask
        hm = h if recurrent_mask is None else h * recurrent_mask
        if is_gru:
            h, cache = gru_step_cached(xm, h, hm, cell, gru_convention)
        else:
            h, cache = rnn_step_cached(xm, h, hm, cell)
        h_seq[:, t, :] = h
        if want_cache:
            caches[t] = cache

    if not want_cache:
        return h_seq
    cache_bundle = {
        "caches": caches,
        "order": order,
        "input_mask": input_mask,
        "recurrent_mask": recurrent_mask,
        "is_gru": is_gru,
        "gru_convention": gru_convention,
        "input_shape": seq.shape,
    }
    return h_seq, cache_bundle


def unroll_backward(
    d_hseq: np.ndarray, cell: CellParams, bundle: dict
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """BPTT through one unrolled layer.

    `d_hseq` is the loss gradient w.r.t. the layer's (B, T, H) output.
    Returns the gradient w.r.t. the layer's raw input sequence plus a
    parameter-gradient dict keyed like the cell's tensors.
    """
    grads = {name: np.zeros_like(arr) for name, arr in cell.tensors()}
    d_x = np.empty(bundle["input_shape"], dtype=d_hseq.dtype)
    input_mask = bundle["input_mask"]
    recurrent_mask = bundle["recurrent_mask"]
    carry = 0.0  # gradient flowing into h at the next (reversed) scan step

    for t in reversed(bundle["order"]):
        dh = d_hseq[:, t, :] + carry
        cache = bundle["caches"][t]
        if bundle["is_gru"]:
            d_xm, d_hm, d_direct = gru_step_backward(
                dh, cache, cell, bundle["gru_convention"], grads)
        else:
            d_xm, d_hm = rnn_step_backward(dh, cache, cell, grads)
            d_direct = 0.0
        carry = d_direct + (d_hm if recurrent_mask is None else d_hm * recurrent_mask)
        d_x[:, t, :] = d_xm if input_mask is None else d_xm * input_mask
    return d_x, grads


def run_layer(
    seq: np.ndarray,
    cell: CellParams,
    direction: str = "forward",
    input_mask: np.ndarray | None = None,
    recurrent_mask: np.ndarray | None = None,
    gru_convention: str = "z_gates_candidate",
) -> np.ndarray:
    """Single-direction recurrent layer; accepts (T, D) or (B, T, D)."""
    seq = np.asarray(seq, dtype=np.float64)
    squeeze = seq.ndim == 2
    if squeeze:
        seq = seq[None]
    out = unroll(seq, cell, direction, input_mask, recurrent_mask, gru_convention)
    return out[0] if squeeze else out


def bidirectional_layer(
    seq: np.ndarray,
    cell_fwd: CellParams,
    cell_bwd: CellParams,
    input_mask_fwd: np.ndarray | None = None,
    recurrent_mask_fwd: np.ndarray | None = None,
    input_mask_bwd: np.ndarray | None = None,
    recurrent_mask_bwd: np.ndarray | None = None,
    gru_convention: str = "z_gates_candidate",
) -> np.ndarray:
    """Concatenate forward and backward passes per timestep: (.., T, 2H)."""
    if cell_fwd.hidden_size != cell_bwd.hidden_size:
        raise ShapeError("bidirectional cells must share a hidden size")
    fwd = run_layer(seq, cell_fwd, "forward", input_mask_fwd,
                    recurrent_mask_fwd, gru_convention)
    bwd = run_layer(seq, cell_bwd, "backward", input_mask_bwd,
                    recurrent_mask_bwd, gru_convention)
    return np.concatenate([fwd, bwd], axis=-1)


def dense_per_timestep(hidden_seq: np.ndarray, w_out: np.ndarray,
                       b_out: np.ndarray) -> np.ndarray:
    """tanh(h_t @ w_out + b_out) applied at every timestep."""
    hidden_seq = np.asarray(hidden_seq)
    if hidden_seq.shape[-1] != w_out.shape[0]:
        raise ShapeError(
            f"dense layer expects {w_out.shape[0]} inputs, got {hidden_seq.shape[-1]}")
    return np.tanh(hidden_seq @ w_out + b_out)


def dense_backward(d_out: np.ndarray, hidden_seq: np.ndarray, out: np.ndarray,
                   w_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the dense head: returns (d_hidden, d_w, d_b)."""
    da = d_out * (1.0 - out ** 2)
    flat_h = hidden_seq.reshape(-1, hidden_seq.shape[-1])
    flat_da = da.reshape(-1, da.shape[-1])
    d_w = flat_h.T @ flat_da
    d_b = flat_da.sum(axis=0)
    return da @ w_out.T, d_w, d_b
