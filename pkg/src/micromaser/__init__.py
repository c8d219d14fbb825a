"""Atomic detection statistics of the one-atom maser."""
from .errors import (CrossCheckMismatch, DegenerateChannel, InsufficientData, InvalidParams,
                     MicromaserError, NonConvergentTruncation, NonDecayingTail, SingularResolvent,
                     StepSizeUnderflow, TruncationOverflow)
from .fockspace import Channel, ChannelSplit, MaserParams, PhotonDistribution, phi_from_tint, tint_from_phi
from .propagator import Operator, TraceQuery, resolvent_trace
from .settings import DEFAULT_NUMERICS, Numerics
from .statistics import (MaserModel, atomic_inversion, detection_rates, fano_mandel, fano_mandel_curve,
                         gamma_switch, mean_successive, sequence_probability, waiting_time,
                         waiting_time_squared, waiting_times)
from .steady import steady_state, trapping_angles

__version__ = "0.1.0"
