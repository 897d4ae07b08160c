"""Entanglement generation in Rydberg atom arrays via sequential
rapid-adiabatic-passage sweeps: protocols, open-system dynamics and the
experiment battery around them."""

__version__ = "0.1.0"

from .geometry import AtomLayout, InteractionMatrix, build_layout, interaction_matrix, perturb_positions
from .hilbert import (
    LevelScheme,
    Operator,
    QuantumState,
    basis_state,
    cesium_scheme,
    closed_scheme,
    embed_single,
    expectation,
    partial_trace,
    rubidium_scheme,
    superposition,
    two_site_projector,
)
from .dynamics import (
    IntegrationError,
    IntegratorSettings,
    LindbladChannelSet,
    channels_from_scheme,
    evolve_density,
    evolve_pure,
    hamiltonian_at,
    population_history,
    propagate_oracle,
)
from .protocols import (
    ProtocolSpec,
    build_protocol,
    default_spec,
    fidelity,
    ghz_canonicalize,
    protocol_fidelity,
    simulate_protocol,
)
from .pulses import (
    PulseSchedule,
    RapParams,
    RapSegment,
    GroundFlip,
    SquareSegment,
    IdleSegment,
    build_schedule,
    pi_g_unitary,
    rap_waveform,
    square_pi_segment,
)
from .experiments import (
    OptimizeOutcome,
    SweepResult,
    montecarlo_positions,
    optimize_pulse,
    robustness_grid,
    saturation_scan,
    time_scan,
)
