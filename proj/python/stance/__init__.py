"""Cross-sample latent stance analysis of retweet event logs.

Thin wrapper around the C++ core (`stance._core`): hierarchical PCA,
distance-percentile filtering, HDBSCAN on precomputed distances, Louvain
community detection, the planted-corpus generator and the full pipeline
runner.
"""

try:
    from ._core import *  # noqa: F401,F403  (installed wheel layout)
    from ._core import __version__  # noqa: F401
except ImportError:  # in-tree builds put _core next to the package on sys.path
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
