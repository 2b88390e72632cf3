"""Source-free model adaptation through an internal Gaussian-mixture distribution.

Thin numpy front end over the C++ library. Typical use::

    import smaui
    d = smaui.generate(seed=1)
    net, _ = smaui.train_source(d["source_x"], d["source_y"], seed=1)
    gmm = smaui.estimate_gmm(smaui.encode(net, d["source_x"]), d["source_y"], 2)
    adapted, report = smaui.adapt(net, d["target_x"], gmm, target_y=d["target_y"])
"""

from ._smaui import (
    EstimationError,
    GenerationError,
    Gmm,
    Network,
    ParseError,
    SchemaError,
    adapt,
    classify,
    cli,
    encode,
    estimate_gmm,
    evaluate,
    exact_w2_small,
    generate,
    pca_2d,
    predict_proba,
    pseudo_dataset,
    sample_gmm,
    swd2,
    train_source,
    wasserstein_1d,
)

__version__ = "0.1.0"

__all__ = [
    "EstimationError",
    "GenerationError",
    "Gmm",
    "Network",
    "ParseError",
    "SchemaError",
    "adapt",
    "classify",
    "cli",
    "encode",
    "estimate_gmm",
    "evaluate",
    "exact_w2_small",
    "generate",
    "pca_2d",
    "predict_proba",
    "pseudo_dataset",
    "sample_gmm",
    "swd2",
    "train_source",
    "wasserstein_1d",
]
