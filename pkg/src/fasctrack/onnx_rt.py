"""Minimal ONNX model loading and CPU execution with numpy.

Reads the ONNX protobuf wire format directly (no onnx/onnxruntime
dependency, neither is installable here) and executes the small operator
set a segmentation U-net needs: Conv, ConvTranspose, MaxPool, Relu,
Sigmoid, Concat. Anything outside that subset raises ModelLoadError so
unsupported artifacts fail at load time, not mid-inference.

Wire-format field numbers follow the onnx.proto3 schema (stable since
IR version 3).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import special

from .errors import InferenceError, ModelLoadError

# TensorProto.DataType
_FLOAT = 1
_INT64 = 7

SUPPORTED_OPS = {"Conv", "ConvTranspose", "MaxPool", "Relu", "Sigmoid", "Concat"}


# ---------------------------------------------------------------------------
# Protobuf wire-format primitives


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0
        self.end = len(buf)

    def eof(self) -> bool:
        return self.pos >= self.end

    def varint(self) -> int:
        result = 0
        shift = 0
        while True:
            if self.pos >= self.end:
                raise ValueError("truncated varint")
            b = self.buf[self.pos]
            self.pos += 1
            result |= (b & 0x7F) << shift
            if not b & 0x80:
                return result
            shift += 7
            if shift > 70:
                raise ValueError("varint too long")

    def tag(self) -> tuple[int, int]:
        key = self.varint()
        return key >> 3, key & 0x7

    def bytes_field(self) -> bytes:
        n = self.varint()
        if self.pos + n > self.end:
            raise ValueError("truncated length-delimited field")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def fixed32(self) -> bytes:
        out = self.buf[self.pos : self.pos + 4]
        self.pos += 4
        return out

    def fixed64(self) -> bytes:
        out = self.buf[self.pos : self.pos + 8]
        self.pos += 8
        return out

    def skip(self, wire_type: int) -> None:
        if wire_type == 0:
            self.varint()
        elif wire_type == 1:
            self.pos += 8
        elif wire_type == 2:
            self.bytes_field()
        elif wire_type == 5:
            self.pos += 4
        else:
            raise ValueError(f"unsupported wire type {wire_type}")


def _signed(value: int) -> int:
    # int64 fields are two's-complement varints
    return value - (1 << 64) if value >= (1 << 63) else value


# ---------------------------------------------------------------------------
# The ONNX message subset


@dataclass
class OnnxTensor:
    name: str = ""
    dims: tuple[int, ...] = ()
    data_type: int = _FLOAT
    array: Optional[np.ndarray] = None


@dataclass
class OnnxNode:
    op_type: str = ""
    name: str = ""
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    attrs: dict = field(default_factory=dict)


@dataclass
class OnnxGraph:
    name: str = ""
    nodes: list[OnnxNode] = field(default_factory=list)
    initializers: dict[str, np.ndarray] = field(default_factory=dict)
    inputs: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)
    outputs: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)


def _parse_tensor(buf: bytes) -> OnnxTensor:
    r = _Reader(buf)
    t = OnnxTensor()
    dims: list[int] = []
    float_data: list[float] = []
    int64_data: list[int] = []
    raw: bytes = b""
    while not r.eof():
        f, wt = r.tag()
        if f == 1 and wt == 0:
            dims.append(_signed(r.varint()))
        elif f == 1 and wt == 2:  # packed dims
            sub = _Reader(r.bytes_field())
            while not sub.eof():
                dims.append(_signed(sub.varint()))
        elif f == 2 and wt == 0:
            t.data_type = r.varint()
        elif f == 4 and wt == 2:  # packed float_data
            data = r.bytes_field()
            float_data.extend(np.frombuffer(data, dtype="<f4").tolist())
        elif f == 4 and wt == 5:
            float_data.extend(np.frombuffer(r.fixed32(), dtype="<f4").tolist())
        elif f == 7 and wt == 2:  # packed int64_data
            sub = _Reader(r.bytes_field())
            while not sub.eof():
                int64_data.append(_signed(sub.varint()))
        elif f == 7 and wt == 0:
            int64_data.append(_signed(r.varint()))
        elif f == 8 and wt == 2:
            t.name = r.bytes_field().decode("utf-8")
        elif f == 9 and wt == 2:
            raw = r.bytes_field()
        else:
            r.skip(wt)
    t.dims = tuple(dims)
    if t.data_type == _FLOAT:
        if raw:
            arr = np.frombuffer(raw, dtype="<f4")
        else:
            arr = np.asarray(float_data, dtype=np.float32)
        t.array = arr.reshape(t.dims).astype(np.float32)
    elif t.data_type == _INT64:
        if raw:
            arr = np.frombuffer(raw, dtype="<i8")
        else:
            arr = np.asarray(int64_data, dtype=np.int64)
        t.array = arr.reshape(t.dims)
    else:
        raise ValueError(f"unsupported tensor data type {t.data_type}")
    return t


def _parse_attribute(buf: bytes) -> tuple[str, object]:
    r = _Reader(buf)
    name = ""
    value: object = None
    ints: list[int] = []
    floats: list[float] = []
    while not r.eof():
        f, wt = r.tag()
        if f == 1 and wt == 2:
            name = r.bytes_field().decode("utf-8")
        elif f == 2 and wt == 5:  # f
            value = float(np.frombuffer(r.fixed32(), dtype="<f4")[0])
        elif f == 3 and wt == 0:  # i
            value = _signed(r.varint())
        elif f == 4 and wt == 2:  # s
            value = r.bytes_field()
        elif f == 5 and wt == 2:  # t
            value = _parse_tensor(r.bytes_field()).array
        elif f == 7:  # floats
            if wt == 2:
                floats.extend(np.frombuffer(r.bytes_field(), dtype="<f4").tolist())
            else:
                floats.append(float(np.frombuffer(r.fixed32(), dtype="<f4")[0]))
        elif f == 8:  # ints
            if wt == 2:
                sub = _Reader(r.bytes_field())
                while not sub.eof():
                    ints.append(_signed(sub.varint()))
            else:
                ints.append(_signed(r.varint()))
        else:
            r.skip(wt)
    if ints:
        value = ints
    elif floats:
        value = floats
    return name, value


def _parse_value_info(buf: bytes) -> tuple[str, tuple[int, ...]]:
    r = _Reader(buf)
    name = ""
    shape: tuple[int, ...] = ()
    while not r.eof():
        f, wt = r.tag()
        if f == 1 and wt == 2:
            name = r.bytes_field().decode("utf-8")
        elif f == 2 and wt == 2:  # TypeProto
            tr = _Reader(r.bytes_field())
            while not tr.eof():
                tf, twt = tr.tag()
                if tf == 1 and twt == 2:  # tensor_type
                    tt = _Reader(tr.bytes_field())
                    while not tt.eof():
                        ttf, ttwt = tt.tag()
                        if ttf == 2 and ttwt == 2:  # shape
                            sr = _Reader(tt.bytes_field())
                            dims = []
                            while not sr.eof():
                                sf, swt = sr.tag()
                                if sf == 1 and swt == 2:  # dim
                                    dr = _Reader(sr.bytes_field())
                                    dv = 0
                                    while not dr.eof():
                                        df, dwt = dr.tag()
                                        if df == 1 and dwt == 0:
                                            dv = _signed(dr.varint())
                                        else:
                                            dr.skip(dwt)
                                    dims.append(dv)
                                else:
                                    sr.skip(swt)
                            shape = tuple(dims)
                        else:
                            tt.skip(ttwt)
                else:
                    tr.skip(twt)
        else:
            r.skip(wt)
    return name, shape


def _parse_node(buf: bytes) -> OnnxNode:
    r = _Reader(buf)
    node = OnnxNode()
    while not r.eof():
        f, wt = r.tag()
        if f == 1 and wt == 2:
            node.inputs.append(r.bytes_field().decode("utf-8"))
        elif f == 2 and wt == 2:
            node.outputs.append(r.bytes_field().decode("utf-8"))
        elif f == 3 and wt == 2:
            node.name = r.bytes_field().decode("utf-8")
        elif f == 4 and wt == 2:
            node.op_type = r.bytes_field().decode("utf-8")
        elif f == 5 and wt == 2:
            k, v = _parse_attribute(r.bytes_field())
            node.attrs[k] = v
        else:
            r.skip(wt)
    return node


def _parse_graph(buf: bytes) -> OnnxGraph:
    r = _Reader(buf)
    g = OnnxGraph()
    while not r.eof():
        f, wt = r.tag()
        if f == 1 and wt == 2:
            g.nodes.append(_parse_node(r.bytes_field()))
        elif f == 2 and wt == 2:
            g.name = r.bytes_field().decode("utf-8")
        elif f == 5 and wt == 2:
            t = _parse_tensor(r.bytes_field())
            g.initializers[t.name] = t.array
        elif f == 11 and wt == 2:
            g.inputs.append(_parse_value_info(r.bytes_field()))
        elif f == 12 and wt == 2:
            g.outputs.append(_parse_value_info(r.bytes_field()))
        else:
            r.skip(wt)
    return g


def parse_model(data: bytes) -> OnnxGraph:
    """Parse ModelProto bytes and return its graph."""
    r = _Reader(data)
    graph = None
    while not r.eof():
        f, wt = r.tag()
        if f == 7 and wt == 2:
            graph = _parse_graph(r.bytes_field())
        else:
            r.skip(wt)
    if graph is None:
        raise ValueError("no graph in model file")
    return graph


# ---------------------------------------------------------------------------
# Operator kernels (float32, NCHW)


def _conv2d(x, w, b, pads, strides):
    pt, pl, pb, pr = pads
    sh, sw = strides
    n, c, _, _ = x.shape
    m, wc, kh, kw = w.shape
    if wc != c:
        raise InferenceError(f"Conv weight expects {wc} channels, input has {c}")
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    hp, wp = xp.shape[2], xp.shape[3]
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    out = np.zeros((n, m, oh, ow), dtype=np.float32)
    w2 = w.reshape(m, c, kh, kw)
    for i in range(n):
        acc = np.zeros((m, oh * ow), dtype=np.float32)
        for ky in range(kh):
            for kx in range(kw):
                patch = xp[i, :, ky : ky + sh * oh : sh, kx : kx + sw * ow : sw]
                acc += w2[:, :, ky, kx] @ patch.reshape(c, oh * ow)
        out[i] = acc.reshape(m, oh, ow)
    if b is not None:
        out += b.reshape(1, m, 1, 1)
    return out


def _conv_transpose2d(x, w, b, pads, strides):
    pt, pl, pb, pr = pads
    sh, sw = strides
    n, c, h, wd = x.shape
    wc, m, kh, kw = w.shape
    if wc != c:
        raise InferenceError(f"ConvTranspose weight expects {wc} channels, input has {c}")
    full_h = (h - 1) * sh + kh
    full_w = (wd - 1) * sw + kw
    out = np.zeros((n, m, full_h, full_w), dtype=np.float32)
    for i in range(n):
        xf = x[i].reshape(c, h * wd)
        for ky in range(kh):
            for kx in range(kw):
                contrib = (w[:, :, ky, kx].T @ xf).reshape(m, h, wd)
                out[i, :, ky : ky + sh * h : sh, kx : kx + sw * wd : sw] += contrib
    out = out[:, :, pt : full_h - pb, pl : full_w - pr]
    if b is not None:
        out = out + b.reshape(1, m, 1, 1)
    return out


def _maxpool(x, kernel, pads, strides):
    kh, kw = kernel
    pt, pl, pb, pr = pads
    sh, sw = strides
    xp = x
    if any(pads):
        xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)), constant_values=-np.inf)
    n, c, hp, wp = xp.shape
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    windows = windows[:, :, ::sh, ::sw][:, :, :oh, :ow]
    return windows.max(axis=(4, 5)).astype(np.float32)


def _attr_pads(node: OnnxNode) -> tuple[int, int, int, int]:
    pads = node.attrs.get("pads", [0, 0, 0, 0])
    if len(pads) != 4:
        raise InferenceError(f"{node.op_type} expects 2D pads, got {pads}")
    return tuple(int(p) for p in pads)  # [top, left, bottom, right]


def _attr_pair(node: OnnxNode, key: str, default=(1, 1)) -> tuple[int, int]:
    v = node.attrs.get(key)
    if v is None:
        return default
    return int(v[0]), int(v[1])


class OnnxModel:
    """A loaded single-input, single-output ONNX graph.

    Immutable after construction; ``run`` is safe to call concurrently.
    """

    def __init__(self, path):
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise ModelLoadError(f"cannot read model file {path}: {exc}") from exc
        try:
            graph = parse_model(data)
        except ValueError as exc:
            raise ModelLoadError(f"cannot parse {path}: {exc}") from exc

        unsupported = {n.op_type for n in graph.nodes} - SUPPORTED_OPS
        if unsupported:
            raise ModelLoadError(f"unsupported ops in {path}: {sorted(unsupported)}")
        graph_inputs = [(n, s) for n, s in graph.inputs if n not in graph.initializers]
        if len(graph_inputs) != 1 or len(graph.outputs) != 1:
            raise ModelLoadError(
                f"{path}: expected exactly one input and one output tensor"
            )
        self.path = path
        self.graph = graph
        self.input_name, self.input_shape = graph_inputs[0]
        self.output_name, self.output_shape = graph.outputs[0]
        self._order = self._toposort(graph)

    @staticmethod
    def _toposort(graph: OnnxGraph) -> list[OnnxNode]:
        available = set(graph.initializers)
        available.update(name for name, _ in graph.inputs)
        pending = list(graph.nodes)
        ordered: list[OnnxNode] = []
        while pending:
            progressed = False
            remaining = []
            for node in pending:
                if all(i in available for i in node.inputs if i):
                    ordered.append(node)
                    available.update(node.outputs)
                    progressed = True
                else:
                    remaining.append(node)
            if not progressed:
                raise ModelLoadError("graph has unreachable nodes or a cycle")
            pending = remaining
        return ordered

    def run(self, x: np.ndarray) -> np.ndarray:
        """Execute the graph on one NCHW float tensor."""
        x = np.asarray(x, dtype=np.float32)
        expected = tuple(self.input_shape)
        if expected and len(expected) == x.ndim:
            for want, got in zip(expected, x.shape):
                if want not in (0, got):
                    raise InferenceError(
                        f"model expects input shape {expected}, got {x.shape}"
                    )
        elif expected:
            raise InferenceError(f"model expects input shape {expected}, got {x.shape}")
        values: dict[str, np.ndarray] = dict(self.graph.initializers)
        values[self.input_name] = x
        for node in self._order:
            ins = [values[i] for i in node.inputs if i]
            if node.op_type in ("Conv", "ConvTranspose"):
                if int(node.attrs.get("group", 1)) != 1:
                    raise InferenceError(f"{node.op_type}: only group=1 is supported")
                if _attr_pair(node, "dilations") != (1, 1):
                    raise InferenceError(f"{node.op_type}: only dilation 1 is supported")
            if node.op_type == "Conv":
                out = _conv2d(
                    ins[0],
                    ins[1],
                    ins[2] if len(ins) > 2 else None,
                    _attr_pads(node),
                    _attr_pair(node, "strides"),
                )
            elif node.op_type == "ConvTranspose":
                out = _conv_transpose2d(
                    ins[0],
                    ins[1],
                    ins[2] if len(ins) > 2 else None,
                    _attr_pads(node),
                    _attr_pair(node, "strides"),
                )
            elif node.op_type == "MaxPool":
                out = _maxpool(
                    ins[0],
                    _attr_pair(node, "kernel_shape"),
                    _attr_pads(node),
                    _attr_pair(node, "strides"),
                )
            elif node.op_type == "Relu":
                out = np.maximum(ins[0], 0.0)
            elif node.op_type == "Sigmoid":
                out = special.expit(ins[0])
            elif node.op_type == "Concat":
                out = np.concatenate(ins, axis=int(node.attrs.get("axis", 0)))
            else:  # pragma: no cover - guarded at load time
                raise InferenceError(f"unsupported op {node.op_type}")
            values[node.outputs[0]] = out.astype(np.float32, copy=False)
        return values[self.output_name]
