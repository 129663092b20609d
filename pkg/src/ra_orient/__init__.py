"""Two-timescale orientation design for rotatable-antenna uplink MU-MIMO."""

from .channel import ChannelStatistics, channel_statistics, element_gain, peak_gain, sample_channel
from .errors import DegenerateGeometryError, RankDeficiencyError, StepTooLargeError
from .estimation import (EstimationStatistics, NmseReport, estimation_statistics,
                         lmmse_estimate, nmse, pilot_observation)
from .experiments import (ScenarioConfig, SweepReport, SweepSpec, apply_axis,
                          default_config, emit_csv, generate_geometry, load_config,
                          parse_config, run_sweep, validate_surrogates)
from .geometry import GeometryTables, Scenario, build_upa, geometry_tables
from .gradients import (StatDerivatives, finite_difference_gradient,
                        gradient_check_error, mean_nmse_and_gradient, mrc_gradient,
                        stat_derivatives, wzf_gradient)
from .optimizer import (PgaConfig, PgaTrace, broadside_orientation, nmse_objective,
                        optimize_orientation, pga, project_to_cap, retract_and_cap,
                        tangent_project, uniform_cap_orientation, validate_orientation)
from .simulation import (Combiner, ErgodicReport, build_combiner, ergodic_rate,
                         instantaneous_sinr)
from .surrogates import (MrcTerms, WzfTerms, mrc_surrogate, single_user_orientation,
                         wzf_surrogate)

__version__ = "0.1.0"
