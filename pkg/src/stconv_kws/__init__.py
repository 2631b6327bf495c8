"""Small-footprint keyword spotting: separable temporal convolutions with attention.

The package is organised in layers of increasing abstraction:

* :mod:`stconv_kws.numerics` -- dense-array kernels (matmul, activations, softmax)
* :mod:`stconv_kws.frontend` -- WAV decoding and the 99x40 MFCC feature matrix
* :mod:`stconv_kws.layers` -- forward/backward passes of every network layer
* :mod:`stconv_kws.model` -- model assembly, footprint accounting, weight files
* :mod:`stconv_kws.trainer` -- cross-entropy / Adam training loop with LR decay
* :mod:`stconv_kws.dataset` -- Speech Commands V1 ingestion and batching
* :mod:`stconv_kws.evaluation` -- accuracy, confidence intervals, FAR/FRR curves
* :mod:`stconv_kws.estimator` -- scikit-learn compatible classifier facade
* :mod:`stconv_kws.cli` -- ``stconv`` command-line entry point
"""

from stconv_kws.model import ModelConfig, STConvModel, build, footprint, receptive_field
from stconv_kws.estimator import STConvClassifier

__all__ = [
    "ModelConfig",
    "STConvModel",
    "STConvClassifier",
    "build",
    "footprint",
    "receptive_field",
]

__version__ = "0.1.0"
