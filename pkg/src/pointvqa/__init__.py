"""3D visual question answering with CLIP-aligned scene-encoder
pre-training, at verifiable desk scale."""

__version__ = "0.1.0"
