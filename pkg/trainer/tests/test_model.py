import pytest
import torch
from torch import nn

from anttrainer.descriptor import UnsupportedArchitecture, parse_descriptor
from anttrainer.model import build_model

from conftest import descriptor_json


def build(*layer_specs, shape=(28, 28, 1)):
    return build_model(parse_descriptor(descriptor_json(*layer_specs, shape=shape)))


class TestBuildModel:
    def test_example_stack_has_ten_way_head(self):
        model = build(
            ("Conv2D", {"filter_count": 32, "kernel_size": 3}),
            ("Flatten", {}),
            ("Dense", {"output_size": 64}),
        )
        logits = model(torch.randn(4, 1, 28, 28))
        assert logits.shape == (4, 10)

    def test_blocks_parallel_descriptor_layers(self):
        model = build(
            ("Conv2D", {"filter_count": 16, "kernel_size": 3}),
            ("BatchNorm", {}),
            ("Dropout", {"rate": 0.3}),
            ("Flatten", {}),
        )
        # Input, Conv, BatchNorm, Dropout, Flatten, Output
        assert len(model.blocks) == 6
        assert isinstance(model.blocks[2], nn.BatchNorm2d)
        assert isinstance(model.blocks[3], nn.Dropout)
        assert model.blocks[3].p == pytest.approx(0.3)
        assert isinstance(model.blocks[4], nn.Flatten)

    def test_pooling_halves_spatial_size(self):
        model = build(
            ("Pooling", {"pool_type": "max", "pool_size": 2, "stride": 2}),
            ("Flatten", {}),
        )
        assert model(torch.randn(2, 1, 28, 28)).shape == (2, 10)
        head = model.blocks[-1]
        assert head.in_features == 14 * 14 * 1

    def test_average_pooling_supported(self):
        model = build(
            ("Pooling", {"pool_type": "average", "pool_size": 2, "stride": 2}),
            ("Flatten", {}),
        )
        assert isinstance(model.blocks[1], nn.AvgPool2d)

    def test_conv_preserves_spatial_size(self):
        model = build(
            ("Conv2D", {"filter_count": 16, "kernel_size": 5}),
            ("Conv2D", {"filter_count": 32, "kernel_size": 3}),
            ("Flatten", {}),
        )
        assert model.blocks[-1].in_features == 28 * 28 * 32

    def test_dense_before_flatten_rejected(self):
        with pytest.raises(UnsupportedArchitecture) as exc:
            build(("Dense", {"output_size": 64}))
        assert exc.value.code == "UNSUPPORTED"

    def test_conv_after_flatten_rejected(self):
        with pytest.raises(UnsupportedArchitecture):
            build(("Flatten", {}), ("Conv2D", {"filter_count": 16, "kernel_size": 3}))

    def test_pooling_on_tiny_map_rejected(self):
        with pytest.raises(UnsupportedArchitecture, match="too small"):
            build(
                ("Pooling", {"pool_type": "max", "pool_size": 2, "stride": 2}),
                ("Flatten", {}),
                shape=(1, 1, 1),
            )

    def test_bad_attribute_value_rejected(self):
        with pytest.raises(UnsupportedArchitecture, match="filter_count"):
            build(("Conv2D", {"filter_count": "many", "kernel_size": 3}), ("Flatten", {}))

    def test_output_without_flatten_rejected(self):
        descriptor = parse_descriptor(
            {
                "input_shape": [28, 28, 1],
                "layers": [
                    {"kind": "Input", "attributes": {}},
                    {"kind": "Conv2D", "attributes": {"filter_count": 16, "kernel_size": 3}},
                    {"kind": "Output", "attributes": {}},
                ],
            }
        )
        with pytest.raises(UnsupportedArchitecture, match="Flatten"):
            build_model(descriptor)


class TestParseDescriptor:
    def test_unknown_kind_rejected(self):
        with pytest.raises(UnsupportedArchitecture, match="Conv3D"):
            parse_descriptor(
                {"input_shape": [28, 28, 1], "layers": [{"kind": "Conv3D"}]}
            )

    def test_bad_shape_rejected(self):
        with pytest.raises(UnsupportedArchitecture, match="input_shape"):
            parse_descriptor({"input_shape": [0, 28, 1], "layers": []})

    def test_prefix_keys_are_prefix_stable(self):
        a = parse_descriptor(
            descriptor_json(
                ("Conv2D", {"filter_count": 16, "kernel_size": 3}),
                ("Flatten", {}),
            )
        )
        b = parse_descriptor(
            descriptor_json(
                ("Conv2D", {"filter_count": 16, "kernel_size": 3}),
                ("Dropout", {"rate": 0.1}),
                ("Flatten", {}),
            )
        )
        assert a.prefix_key(2) == b.prefix_key(2)
        assert a.prefix_key(3) != b.prefix_key(3)
