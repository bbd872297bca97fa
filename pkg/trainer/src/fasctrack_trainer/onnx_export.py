"""ONNX export of trained models.

Writes the onnx.proto3 wire format directly from the network's known
topology and state dict, producing a single-input single-output graph
(1x1xSxS float in, 1x1xSxS probabilities out) made of Conv,
ConvTranspose, MaxPool, Relu, Sigmoid and Concat nodes. This is the
hand-off boundary to the inference runtime; nothing here depends on it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch.nn as nn

from .unet import DEPTH, UNet

IR_VERSION = 8
OPSET_VERSION = 13
FLOAT_DTYPE = 1

_ATTR_INT = 2
_ATTR_INTS = 7


class ExportError(Exception):
    """The model or requested input shape cannot satisfy the contract."""


# -- protobuf wire helpers --------------------------------------------------


def _uvarint(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        out.append(byte | 0x80 if value else byte)
        if not value:
            return bytes(out)


def _key(field: int, wire: int) -> bytes:
    return _uvarint((field << 3) | wire)


def _sub(field: int, payload: bytes) -> bytes:
    return _key(field, 2) + _uvarint(len(payload)) + payload


def _vint(field: int, value: int) -> bytes:
    return _key(field, 0) + _uvarint(value)


def _text(field: int, value: str) -> bytes:
    return _sub(field, value.encode("utf-8"))


# -- ONNX messages ----------------------------------------------------------


def _tensor_proto(name: str, array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype=np.float32)
    body = b"".join(_vint(1, d) for d in array.shape)
    body += _vint(2, FLOAT_DTYPE)
    body += _text(8, name)
    body += _sub(9, array.tobytes())
    return body


def _attr_int(name: str, value: int) -> bytes:
    return _text(1, name) + _vint(3, value) + _vint(20, _ATTR_INT)


def _attr_ints(name: str, values) -> bytes:
    body = _text(1, name)
    for v in values:
        body += _vint(8, int(v))
    return body + _vint(20, _ATTR_INTS)


def _node(op: str, inputs, outputs, attrs: bytes = b"") -> bytes:
    body = b"".join(_text(1, i) for i in inputs)
    body += b"".join(_text(2, o) for o in outputs)
    body += _text(3, outputs[0])
    body += _text(4, op)
    body += attrs
    return body


def _tensor_value_info(name: str, shape) -> bytes:
    dims = b"".join(_sub(1, _vint(1, d)) for d in shape)
    tensor_type = _vint(1, FLOAT_DTYPE) + _sub(2, dims)
    return _text(1, name) + _sub(2, _sub(1, tensor_type))


class _GraphBuilder:
    def __init__(self):
        self.nodes: list[bytes] = []
        self.weights: dict[str, np.ndarray] = {}
        self._counter = 0

    def fresh(self, stem: str) -> str:
        self._counter += 1
        return f"{stem}_{self._counter}"

    def conv(self, x: str, layer: nn.Conv2d, stem: str) -> str:
        out = self.fresh(stem)
        w_name, b_name = out + "_w", out + "_b"
        self.weights[w_name] = layer.weight.detach().numpy()
        self.weights[b_name] = layer.bias.detach().numpy()
        k = layer.kernel_size
        p = layer.padding
        attrs = (
            _sub(5, _attr_ints("kernel_shape", k))
            + _sub(5, _attr_ints("pads", [p[0], p[1], p[0], p[1]]))
            + _sub(5, _attr_ints("strides", layer.stride))
            + _sub(5, _attr_ints("dilations", layer.dilation))
            + _sub(5, _attr_int("group", layer.groups))
        )
        self.nodes.append(_node("Conv", [x, w_name, b_name], [out], attrs))
        return out

    def conv_transpose(self, x: str, layer: nn.ConvTranspose2d, stem: str) -> str:
        out = self.fresh(stem)
        w_name, b_name = out + "_w", out + "_b"
        self.weights[w_name] = layer.weight.detach().numpy()
        self.weights[b_name] = layer.bias.detach().numpy()
        attrs = (
            _sub(5, _attr_ints("kernel_shape", layer.kernel_size))
            + _sub(5, _attr_ints("pads", [0, 0, 0, 0]))
            + _sub(5, _attr_ints("strides", layer.stride))
        )
        self.nodes.append(_node("ConvTranspose", [x, w_name, b_name], [out], attrs))
        return out

    def relu(self, x: str) -> str:
        out = self.fresh("relu")
        self.nodes.append(_node("Relu", [x], [out]))
        return out

    def maxpool(self, x: str) -> str:
        out = self.fresh("pool")
        attrs = (
            _sub(5, _attr_ints("kernel_shape", [2, 2]))
            + _sub(5, _attr_ints("pads", [0, 0, 0, 0]))
            + _sub(5, _attr_ints("strides", [2, 2]))
        )
        self.nodes.append(_node("MaxPool", [x], [out], attrs))
        return out

    def concat(self, a: str, b: str) -> str:
        out = self.fresh("concat")
        self.nodes.append(_node("Concat", [a, b], [out], _sub(5, _attr_int("axis", 1))))
        return out

    def sigmoid(self, x: str, name: str) -> str:
        self.nodes.append(_node("Sigmoid", [x], [name]))
        return name

    def double_conv(self, x: str, block: nn.Sequential, stem: str) -> str:
        x = self.relu(self.conv(x, block[0], stem))
        return self.relu(self.conv(x, block[2], stem))


def export_onnx(model: UNet, path, input_size: int = 512) -> Path:
    """Serialize a trained network to an ONNX file at the given input size.

    Raises ExportError when the model or size violates the interchange
    contract (single grayscale input; size divisible by 2^(levels-1)).
    """
    if not isinstance(model, UNet):
        raise ExportError(f"can only export UNet models, got {type(model).__name__}")
    if model.enc1[0].in_channels != 1:
        raise ExportError("model must take one grayscale input channel")
    stride_total = 2 ** (DEPTH - 1)
    if input_size <= 0 or input_size % stride_total != 0:
        raise ExportError(
            f"input size {input_size} is not divisible by the network stride {stride_total}"
        )

    model = model.eval()
    g = _GraphBuilder()
    e1 = g.double_conv("input", model.enc1, "enc1")
    e2 = g.double_conv(g.maxpool(e1), model.enc2, "enc2")
    e3 = g.double_conv(g.maxpool(e2), model.enc3, "enc3")
    e4 = g.double_conv(g.maxpool(e3), model.enc4, "enc4")
    b = g.double_conv(g.maxpool(e4), model.bottleneck, "bottleneck")
    d4 = g.double_conv(g.concat(e4, g.conv_transpose(b, model.up4, "up4")), model.dec4, "dec4")
    d3 = g.double_conv(g.concat(e3, g.conv_transpose(d4, model.up3, "up3")), model.dec3, "dec3")
    d2 = g.double_conv(g.concat(e2, g.conv_transpose(d3, model.up2, "up2")), model.dec2, "dec2")
    d1 = g.double_conv(g.concat(e1, g.conv_transpose(d2, model.up1, "up1")), model.dec1, "dec1")
    head = g.conv(d1, model.head, "head")
    g.sigmoid(head, "prob")

    shape = (1, 1, input_size, input_size)
    graph = b"".join(_sub(1, n) for n in g.nodes)
    graph += _text(2, "segmentation_unet")
    graph += b"".join(_sub(5, _tensor_proto(k, v)) for k, v in g.weights.items())
    graph += _sub(11, _tensor_value_info("input", shape))
    graph += _sub(12, _tensor_value_info("prob", shape))

    blob = _vint(1, IR_VERSION)
    blob += _text(2, "fasctrack-trainer")
    blob += _text(3, "0.1.0")
    blob += _sub(7, graph)
    blob += _sub(8, _text(1, "") + _vint(2, OPSET_VERSION))

    path = Path(path)
    try:
        path.write_bytes(blob)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path
