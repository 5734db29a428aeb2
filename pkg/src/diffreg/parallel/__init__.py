"""Slab-decomposed parallel runtime over an in-process message-passing model."""
from .layout import SlabLayout
from .mailbox import ALLTOALL_THRESHOLD, Mailbox, Runtime
from .slab import (PHASES, SlabKernels, comm_volume, dist_fd_divergence, dist_fd_gradient, dist_fft_forward,
                   dist_fft_inverse, dist_interpolate, dist_solve, phase_breakdown)

__all__ = ["ALLTOALL_THRESHOLD", "Mailbox", "PHASES", "Runtime", "SlabKernels", "SlabLayout", "comm_volume",
           "dist_fd_divergence", "dist_fd_gradient", "dist_fft_forward", "dist_fft_inverse", "dist_interpolate", "dist_solve",
           "phase_breakdown"]
