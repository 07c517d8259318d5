import pytest
import torch

from anttrainer.data import load_split


@pytest.fixture(scope="session", autouse=True)
def quiet_torch():
    torch.set_num_threads(2)


@pytest.fixture(scope="session")
def tiny_data():
    return load_split("synthetic-digits", train_size=512, val_size=128, seed=0)


def descriptor_json(*layer_specs, shape=(28, 28, 1)):
    layers = [{"kind": "Input", "attributes": {}}]
    layers += [{"kind": kind, "attributes": attrs} for kind, attrs in layer_specs]
    layers += [{"kind": "Output", "attributes": {}}]
    return {"input_shape": list(shape), "layers": layers}
