"""Tests for the parameter registry: initialisation, freezing and snapshots."""

import math

import numpy as np
import pytest

from traitfusion.errors import DimensionError, ParameterError
from traitfusion.nn import Module, glorot_limit


class _Tiny(Module):
    def __init__(self, seed=0):
        super().__init__("tiny")
        rng = np.random.default_rng(seed)
        self.dense("fc", 3, 2, rng)
        self.conv("conv", (4, 2, 5), rng)


class TestInitialisation:

    def test_names_and_shapes(self):
        shapes = {name: p.shape for name, p in _Tiny().named_parameters().items()}
        assert shapes == {
            "tiny.fc.weights": (2, 3),
            "tiny.fc.bias": (2,),
            "tiny.conv.kernels": (4, 2, 5),
            "tiny.conv.bias": (4,),
        }

    def test_glorot_bounds(self):
        params = _Tiny().named_parameters()
        assert glorot_limit(3, 2) == pytest.approx(math.sqrt(6.0 / 5.0))
        assert np.abs(params["tiny.fc.weights"].data).max() <= glorot_limit(3, 2)
        assert np.abs(params["tiny.conv.kernels"].data).max() <= glorot_limit(10, 20)
        np.testing.assert_array_equal(params["tiny.fc.bias"].data, 0.0)

    def test_seeded(self):
        a, b = _Tiny(seed=5).snapshot(), _Tiny(seed=5).snapshot()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_duplicate_name_rejected(self):
        module = _Tiny()
        with pytest.raises(ParameterError):
            module.dense("fc", 3, 2, np.random.default_rng(0))

    def test_parameter_count(self):
        assert _Tiny().parameter_count() == 6 + 2 + 40 + 4


class TestFreezing:

    def test_set_frozen_by_name(self):
        module = _Tiny()
        module.set_frozen(True, ["tiny.fc.weights"])
        assert [p.name for p in module.trainable_parameters()] == [
            "tiny.fc.bias", "tiny.conv.kernels", "tiny.conv.bias"]
        assert module.parameter_count(trainable_only=True) == 2 + 40 + 4

    def test_unknown_name(self):
        with pytest.raises(ParameterError):
            _Tiny().set_frozen(True, ["tiny.nope"])

    def test_flags_round_trip(self):
        source = _Tiny()
        source.set_frozen(True, ["tiny.conv.bias"])
        target = _Tiny()
        target.apply_frozen_flags(source.frozen_flags())
        assert target.frozen_flags() == source.frozen_flags()


class TestSnapshots:

    def test_restore_overwrites_in_place(self):
        module = _Tiny(seed=1)
        saved = module.snapshot()
        weights = module.named_parameters()["tiny.fc.weights"]
        weights.data += 1.0
        module.restore(saved)
        np.testing.assert_array_equal(weights.data, saved["tiny.fc.weights"])

    def test_snapshot_is_a_copy(self):
        module = _Tiny()
        saved = module.snapshot()
        module.named_parameters()["tiny.fc.bias"].data[:] = 7.0
        np.testing.assert_array_equal(saved["tiny.fc.bias"], 0.0)

    def test_restore_checks_shapes(self):
        module = _Tiny()
        saved = module.snapshot()
        saved["tiny.fc.bias"] = np.zeros(5)
        with pytest.raises(DimensionError):
            module.restore(saved)

    def test_restore_needs_every_parameter(self):
        module = _Tiny()
        saved = module.snapshot()
        del saved["tiny.conv.bias"]
        with pytest.raises(ParameterError):
            module.restore(saved)
