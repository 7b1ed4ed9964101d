"""Desk-scale video-text retrieval engine on precomputed frame/token embeddings.

Submodules:
    autodiff     dense float64 tensors with reverse-mode differentiation
    transformer  multi-head self-attention encoder layers and embeddings
    tdb          temporal difference block (difference-enhanced video encoding)
    tab          temporal alignment block (shared-center soft aggregation)
    objective    symmetric contrastive loss and fused inference similarity
    retrieval    R@K / MdR / MnR metrics and retrieval protocols
    dataio       binary embedding files, manifests, synthetic datasets
    model        parameter assembly and batch encoding
    train        Adam training loop and checkpoints
    gradcheck    finite-difference verification of every gradient
    cli          command-line entry points (train / eval / gradcheck / synth / report)
"""

__version__ = "0.1.0"
