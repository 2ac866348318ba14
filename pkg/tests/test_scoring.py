import json

import numpy as np
import pytest

from clsprune.errors import FormatError, InvalidK, InvalidLayer, InvalidTrace, RoleError
from clsprune.scoring import (
    EnsembleFn,
    ImportanceScore,
    decoder_layer_importance,
    encoder_ensemble_importance,
    encoder_layer_importance,
    ensemble_layers,
    random_importance,
)
from clsprune.trace import AttentionTrace

from conftest import random_decoder_trace, random_encoder_trace
from oracles import decoder_layer_loop, encoder_layer_loop, ensemble_loop


def test_encoder_layer_head_mean():
    att = np.array([[[0.1, 0.6, 0.3], [0.3, 0.4, 0.3]]], dtype=np.float32)
    s = encoder_layer_importance(AttentionTrace.encoder(att), 0)
    np.testing.assert_allclose(s.scores, [0.2, 0.5, 0.3], atol=1e-7)
    assert s.source.to_dict() == {"kind": "encoder_layer", "layer": 0}


def test_single_head_is_identity(rng):
    t = random_encoder_trace(rng, 2, 1, 6)
    np.testing.assert_array_equal(encoder_layer_importance(t, 1).scores, t.attention[1, 0].astype(np.float64))


def test_encoder_layer_matches_loop(rng):
    t = random_encoder_trace(rng, 4, 8, 37)
    for layer in range(4):
        np.testing.assert_allclose(
            encoder_layer_importance(t, layer).scores, encoder_layer_loop(t.attention.tolist(), layer), rtol=0, atol=1e-12
        )


def test_invalid_layer(rng):
    t = random_encoder_trace(rng, 2, 1, 3)
    with pytest.raises(InvalidLayer):
        encoder_layer_importance(t, 2)
    with pytest.raises(InvalidLayer):
        encoder_layer_importance(t, -1)


def test_ensemble_layer_mapping():
    # 0-indexed: penultimate is L-2, K layers end there
    assert ensemble_layers(12, 1) == [10]
    assert ensemble_layers(12, 3) == [8, 9, 10]
    assert ensemble_layers(2, 1) == [0]
    with pytest.raises(InvalidK):
        ensemble_layers(4, 4)
    with pytest.raises(InvalidK):
        ensemble_layers(4, 0)
    with pytest.raises(InvalidTrace):
        ensemble_layers(1, 1)


def test_ensemble_two_layers():
    att = np.array([[[0.2, 0.8]], [[0.4, 0.6]], [[0.5, 0.5]]], dtype=np.float64)
    t = AttentionTrace.encoder(att)
    np.testing.assert_allclose(encoder_ensemble_importance(t, 2, "avg").scores, [0.3, 0.7], atol=1e-7)
    np.testing.assert_allclose(encoder_ensemble_importance(t, 2, "max").scores, [0.4, 0.8], atol=1e-7)
    np.testing.assert_allclose(encoder_ensemble_importance(t, 2, "min").scores, [0.2, 0.6], atol=1e-7)


def test_ensemble_k1_is_penultimate(rng):
    t = random_encoder_trace(rng, 5, 3, 9)
    pen = encoder_layer_importance(t, 3).scores
    for fn in EnsembleFn:
        np.testing.assert_array_equal(encoder_ensemble_importance(t, 1, fn).scores, pen)


def test_ensemble_requires_two_layers(rng):
    with pytest.raises(InvalidTrace):
        encoder_ensemble_importance(random_encoder_trace(rng, 1, 1, 3), 1)


def test_ensemble_matches_loop(rng):
    t = random_encoder_trace(rng, 7, 5, 20)
    for k in range(1, 7):
        for fn in ("avg", "max", "min"):
            np.testing.assert_allclose(
                encoder_ensemble_importance(t, k, fn).scores, ensemble_loop(t.attention.tolist(), k, fn), rtol=0, atol=1e-12
            )


def test_avg_is_order_free(rng):
    t = random_encoder_trace(rng, 6, 2, 11)
    a = encoder_ensemble_importance(t, 4, "avg").scores
    permuted = t.attention.copy()
    permuted[[1, 2, 3, 4]] = permuted[[4, 2, 1, 3]]
    b = encoder_ensemble_importance(AttentionTrace.encoder(permuted), 4, "avg").scores
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


def test_decoder_examples():
    one = np.array([[[[0.1, 0.7]]]], dtype=np.float32)
    np.testing.assert_array_equal(decoder_layer_importance(AttentionTrace.decoder(one), 0).scores, one[0, 0, 0])
    two = np.array([[[[0.2, 0.8], [0.6, 0.4]]]], dtype=np.float64)
    np.testing.assert_allclose(decoder_layer_importance(AttentionTrace.decoder(two), 0).scores, [0.4, 0.6], atol=1e-7)


def test_decoder_matches_loop(rng):
    t = random_decoder_trace(rng, 3, 4, 5, 30)
    for n in range(3):
        np.testing.assert_allclose(
            decoder_layer_importance(t, n).scores, decoder_layer_loop(t.attention.tolist(), n), rtol=0, atol=1e-12
        )


def test_role_checks(rng):
    with pytest.raises(RoleError):
        decoder_layer_importance(random_encoder_trace(rng, 2, 1, 3), 0)
    with pytest.raises(RoleError):
        encoder_layer_importance(random_decoder_trace(rng, 2, 1, 1, 3), 0)
    with pytest.raises(InvalidLayer):
        decoder_layer_importance(random_decoder_trace(rng, 2, 1, 1, 3), 5)


def test_random_importance():
    a = random_importance(16, 7)
    assert np.array_equal(a.scores, random_importance(16, 7).scores)
    assert not np.array_equal(a.scores, random_importance(16, 8).scores)
    assert np.all((a.scores >= 0) & (a.scores < 1))
    # counter-based: a prefix does not depend on the requested length
    np.testing.assert_array_equal(random_importance(5, 7).scores, a.scores[:5])
    big = random_importance(10_000, 3).scores
    assert 0.49 <= big.mean() <= 0.51


def test_score_json_round_trip(rng):
    t = random_encoder_trace(rng, 4, 2, 10)
    s = encoder_ensemble_importance(t, 3, "max")
    d = json.loads(s.to_json())
    assert d["n_visual"] == 10 and len(d["scores"]) == 10
    assert d["source"] == {"kind": "encoder_ensemble", "k": 3, "ensemble": "max"}
    assert ImportanceScore.from_json(s.to_json()) == s


@pytest.mark.parametrize(
    "text",
    ["not json", '{"scores": [0.1]}', '{"n_visual": 2, "scores": [0.1]}', '{"n_visual": 1, "scores": [-1.0]}',
     '{"n_visual": 1, "scores": ["x"]}'],
)
def test_score_json_malformed(text):
    with pytest.raises(FormatError):
        ImportanceScore.from_json(text)
