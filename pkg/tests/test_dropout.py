import numpy as np
import numpy.testing as npt

from ais_outliers.nn.dropout import bernoulli_mask, sample_masks
from ais_outliers.nn.model import ModelConfig


def config(**kw):
    base = dict(cell_kind="gru", bidirectional=True, layers=1, hidden=4,
                timesteps=8, features=4)
    base.update(kw)
    return ModelConfig(**base)


def test_rate_zero_gives_identity_masks(rng):
    masks = sample_masks(config(), batch_size=3, rng=rng)
    for per_dir in masks.input_masks + masks.recurrent_masks:
        for mask in per_dir:
            npt.assert_array_equal(mask, np.ones_like(mask))
    assert masks.dense is None
    assert masks.interlayer == []


def test_fixed_seed_reproducible():
    cfg = config(recurrent_dropout_rate=0.5, dense_dropout_rate=0.3)
    a = sample_masks(cfg, 4, np.random.default_rng(99))
    b = sample_masks(cfg, 4, np.random.default_rng(99))
    for x, y in zip(a.recurrent_masks[0], b.recurrent_masks[0]):
        npt.assert_array_equal(x, y)
    npt.assert_array_equal(a.dense, b.dense)


def test_mask_values_are_zero_or_scaled(rng):
    mask = bernoulli_mask((1000,), 0.25, rng)
    assert set(np.unique(mask)) <= {0.0, 1.0 / 0.75}


def test_monte_carlo_keep_fraction(rng):
    draws = bernoulli_mask((100_000,), 0.5, rng)
    keep_fraction = float((draws > 0).mean())
    assert abs(keep_fraction - 0.5) < 0.01


def test_mask_geometry_matches_model():
    cfg = config(bidirectional=True, layers=2, hidden=4, dropout_rate=0.2,
                 recurrent_dropout_rate=0.2, input_dropout_rate=0.2,
                 dense_dropout_rate=0.2, timesteps=8)
    masks = sample_masks(cfg, 3, np.random.default_rng(0))
    assert masks.input_masks[0][0].shape == (3, 4)       # layer 0 sees features
    assert masks.input_masks[1][0].shape == (3, 8)       # layer 1 sees 2H
    assert masks.recurrent_masks[0][1].shape == (3, 4)   # per direction, H units
    assert len(masks.interlayer) == 1
    assert masks.interlayer[0].shape == (3, 8, 8)        # fresh per timestep
    assert masks.dense.shape == (3, 8, 8)


def test_recurrent_mask_is_single_timestep_constant_object():
    # The variational masks carry no time axis at all: one (B, H) draw is
    # reused for all timesteps, unlike the (B, T, D) conventional masks.
    cfg = config(recurrent_dropout_rate=0.4, dense_dropout_rate=0.4)
    masks = sample_masks(cfg, 2, np.random.default_rng(1))
    assert masks.recurrent_masks[0][0].ndim == 2
    assert masks.dense.ndim == 3
    slices = [masks.dense[:, t, :] for t in range(cfg.timesteps)]
    assert any(not np.array_equal(slices[0], s) for s in slices[1:])
