"""Weak-drive cavity QED field dynamics toolkit.

Models a driven optical cavity coupled to a tunable number of two-level
atoms: closed-form and numerically generalized intensity correlation
functions, a Monte Carlo atomic-beam ensemble, quantum-trajectory click
streams with a high-throughput correlator, quantum-speed fits, and the
trace-distance non-Markovianity of the cavity field.  An exact
truncated master-equation solver backs every fast path.
"""

__version__ = "0.1.0"

from .analysis import LorentzFit, SweepResult, fit_inverted_lorentzian, linear_fit, speed_sweep
from .correlator import CorrelatorConfig, correlate, rebin
from .dynamics import (
    DetuningClass,
    classes_for_atom_number,
    g2_regression,
    reduce_to_classes,
    response_kernel,
    steady_two_excitation,
    transmission_spectrum,
)
from .ensemble import (
    AtomRealization,
    BeamConfig,
    ModeGeometry,
    averaged_g2,
    averaged_kernel,
    calibrate_density,
    sample_realization,
)
from .errors import CQEDError
from .model import (
    DerivedParams,
    RateParams,
    derive,
    g2_closed_form,
    oscillation_threshold,
    purcell_rates,
)
from .nonmarkov import ReducedChannel, StatePair, blp_measure, blp_vs_coupling, trace_distance_curve
from .trace import CorrelationTrace, read_trace_csv, write_trace_csv
from .trajectories import ClickStream, TrajectoryConfig, mcwf_synthesize, read_stream, write_stream
