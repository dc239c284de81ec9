"""Latent-space audio super-resolution.

A noise-robust waveform autoencoder compresses audio 512x in time; a
conditional flow-matching model transports Gaussian noise to
high-resolution latents conditioned on the low-resolution latent, using a
one-step Euler sampler; the decoder and a low-band replacement step
reconstruct the waveform.
"""

__version__ = "0.1.0"
