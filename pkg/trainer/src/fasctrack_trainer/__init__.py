"""U-net training and ONNX export for the fasctrack analysis runtime."""

__version__ = "0.1.0"

from .augment import ElasticParams, augment_elastic  # noqa: F401
from .data import DatasetTooSmall, TrainSample, load_dataset  # noqa: F401
from .onnx_export import ExportError, export_onnx  # noqa: F401
from .train import TrainRun, overfit_single, train  # noqa: F401
from .unet import UNet, build_unet, conv_layer_census  # noqa: F401
