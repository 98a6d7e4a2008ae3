"""Desk-scale laboratory for studying degradation semantics in toy SR networks.

Pipeline: procedural corpus -> degradations -> tiny SR/classifier networks on
a small reverse-mode autodiff engine -> layer probing -> PCA + t-SNE -> cluster
separability scoring -> named experiment recipes with SVG scatterplots.

All arrays are numpy; the universal tensor layout is [n, c, h, w] float, with
images restricted to n=1, c in {1, 3}, values in [0, 1].
"""

__version__ = "0.1.0"
