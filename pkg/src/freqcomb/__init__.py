"""freqcomb: frequency-bin qudit circuits, detection, and Bell tests.

Simulates single-photon quantum information carried by the lines of an
optical frequency comb: passive Mach-Zehnder trees that map comb lines to
spatial ports, mesh realizations of arbitrary mode unitaries, projection
measurement under finite detector response time, and CHSH / generalized
Bell quantities with their degradation as the response time grows.
"""

from ._util import SPEED_OF_LIGHT, sinc
from .bell import (
    BellSettings,
    CoincidenceSample,
    CorrelationResult,
    bell_sn,
    chsh_coincidences,
    chsh_coincidences_quadrature,
    chsh_correlation,
    chsh_s2,
    coincidence_table,
    equator_basis_vector,
    evaluate_chsh,
    find_s2_threshold,
    fourier_basis_vector,
    joint_probability,
    joint_probability_quadrature,
    maximize_bell_sn,
    maximize_s2,
    optimal_settings,
    sample_coincidence_events,
    write_chsh_sweep_csv,
    write_event_log_csv,
    write_s2max_csv,
)
from .circuits import (
    DemuxTree,
    InterferometerMesh,
    MeshElement,
    MziNode,
    RoutingError,
    RoutingReport,
    decompose_unitary,
    demux_transfer_matrix,
    netlist_from_dict,
    netlist_to_dict,
    phase_shifter_length,
    reconstruct_mesh,
    synthesize_demux,
    verify_demux,
)
from .measure import (
    DetectionWindow,
    EffectiveProjector,
    Projector,
    detection_probability,
    effective_projector,
    effective_projector_quadrature,
    evolve_projector,
    fidelity_sweep,
    projection_fidelity,
    projector_from_row,
    projector_from_state,
    write_fidelity_csv,
)
from .states import (
    BipartitePhotonState,
    FrequencyComb,
    SinglePhotonState,
    UnitaryMap,
    apply_unitary,
    basis_state,
    inner_product,
    make_bell_state,
)

__version__ = "0.1.0"
