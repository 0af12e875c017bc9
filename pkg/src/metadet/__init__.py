"""metadet: metadata-conditioned feature modulation for infrared small
target detection, at desk scale.

The package provides a small autodiff tensor engine with a compiled
convolution core, a metadata encoder, per-sample channel and spatial
modulation driven by fused visual and metadata cues, a Laplacian-style
edge enhancement block, a toy anchor-free detector, a deterministic
synthetic multi-domain dataset generator, and an ablation harness behind
the `metadet` command line tool.
"""

__version__ = "0.1.0"
