"""Desk-scale GAN augmentation and anomaly-detection laboratory.

Submodules:

* ``tensor``    float64 arrays with reverse-mode autodiff and Adam
* ``layers``    conv / transpose conv / dense / batchnorm / attention / blocks
* ``models``    dual-input and noise-only generators, shared discriminator
* ``training``  adversarial training loop with checkpointing
* ``augment``   GAN-based and classical augmentation with count manifests
* ``anogan``    latent-space inversion anomaly scoring
* ``metrics``   ROC, AUC, DeLong test, constrained operating points
* ``data``      synthetic lung phantoms, PGM I/O, dataset splits
* ``cli``       command-line front end for the whole experiment matrix
"""

__version__ = "0.1.0"
