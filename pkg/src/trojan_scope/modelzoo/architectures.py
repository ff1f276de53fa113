"""Three small conv nets with the layer counts of ModdedBadNet, BadNet and ModdedLeNet5.

Channel widths are scaled down so a population of them trains on one CPU core.
"""
from ..autodiff import Network


def _conv(cin, cout, k):
    return {"kind": "conv2d", "in_channels": cin, "out_channels": cout, "kernel_size": k}


def _dense(n_in, n_out):
    return {"kind": "dense", "in_features": n_in, "out_features": n_out}


RELU = {"kind": "relu"}
POOL = {"kind": "maxpool2d", "kernel_size": 2, "stride": 2}


def modded_badnet(n_classes=10, side=28):
    # 2 conv + 1 dense; z is the flattened conv output
    s = ((side - 4) // 2 - 4) // 2
    return [_conv(1, 8, 5), RELU, POOL, _conv(8, 16, 5), RELU, POOL,
            {"kind": "flatten", "penultimate": True}, _dense(16 * s * s, n_classes), {"kind": "softmax_ce"}]


def badnet(n_classes=10, side=28):
    # 2 conv + 2 dense
    s = ((side - 4) // 2 - 4) // 2
    return [_conv(1, 8, 5), RELU, POOL, _conv(8, 16, 5), RELU, POOL, {"kind": "flatten"},
            _dense(16 * s * s, 64), dict(RELU, penultimate=True), _dense(64, n_classes), {"kind": "softmax_ce"}]


def modded_lenet5(n_classes=10, side=28):
    # 3 conv + 2 dense
    s = ((side - 2) // 2 - 2) // 2 - 2
    return [_conv(1, 6, 3), RELU, POOL, _conv(6, 12, 3), RELU, POOL, _conv(12, 24, 3), RELU, {"kind": "flatten"},
            _dense(24 * s * s, 48), dict(RELU, penultimate=True), _dense(48, n_classes), {"kind": "softmax_ce"}]


ARCHITECTURES = {
    "modded_badnet": modded_badnet,
    "badnet": badnet,
    "modded_lenet5": modded_lenet5,
}


def build_network(arch_id, seed, n_classes=10, side=28):
    try:
        factory = ARCHITECTURES[arch_id]
    except KeyError:
        raise ValueError(f"unknown architecture {arch_id!r}; known: {sorted(ARCHITECTURES)}") from None
    return Network(factory(n_classes, side), (1, side, side), seed=seed, arch_id=arch_id)
