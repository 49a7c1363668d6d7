"""Wave-optical simulation of turbulent, spatially multiplexed free-space quantum links."""

__version__ = "0.1.0"

from .grid import (  # noqa: E402
    AbsorberWindow,
    ComplexField,
    Grid,
    apply_absorber,
    apply_phase_screen,
    fresnel_propagate,
    make_absorber,
    make_grid,
)
from .turbulence import (  # noqa: E402
    PhaseScreen,
    TurbulenceParams,
    fried_parameter,
    phase_structure_function,
    rytov_variance,
    synthesize_screen_sequence,
    vonkarman_psd,
)
from .modes import ModeBank, build_banks, lg_field, mode_overlap  # noqa: E402
from .propagation import (  # noqa: E402
    CrosstalkMatrix,
    ErasureVector,
    SlabFactors,
    erasure_vector,
    propagate_realization,
    slabwise_factors,
)
from .photons import (  # noqa: E402
    OutcomeStats,
    distinguishable_stats,
    indistinguishable_stats,
    permanent,
    unitary_dilation,
)
from .channel import (  # noqa: E402
    ErasurePatternLaw,
    RailBlock,
    RailKraus,
    apply_product_channel,
    block_success,
    erasure_correlation,
    erasure_pattern_law,
    polarization_fidelity,
    rail_block,
    rail_kraus,
)
from .config import SimConfig, load_config  # noqa: E402
from .experiment import SweepRow, run_sweep, write_results  # noqa: E402
