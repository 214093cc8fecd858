"""cuffbench: a desk-scale bench for multicontact nerve-cuff stimulation.

Builds steering current patterns, runs staircase intensity ramps against a
synthetic nerve (or a hardware stub), processes evoked EMG into recruitment
curves and polar selectivity maps, and relates the results to fascicle
anatomy from annotated histology sections.
"""

__version__ = "0.1.0"

from cuffbench.electrode import (
    CuffLayout,
    CurrentPattern,
    StimConfig,
    all_configs,
    make_ring_pattern,
    make_str_pattern,
    parse_config,
)
from cuffbench.protocol import PulseSpec, RampSpec, StimEvent

__all__ = [
    "CuffLayout",
    "CurrentPattern",
    "StimConfig",
    "PulseSpec",
    "RampSpec",
    "StimEvent",
    "all_configs",
    "make_ring_pattern",
    "make_str_pattern",
    "parse_config",
    "__version__",
]
