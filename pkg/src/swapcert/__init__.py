"""Certify two-qubit entangled sources by tomography and by SWAP-method self-testing.

The self-testing route regularises raw Bell frequencies onto an NPA
relaxation (NQA2) and then bounds the fidelity with the target state
``cos(theta)|00> + sin(theta)|11>`` by a dual-certified SDP.
"""
from .bell import (Behavior, CorrelatorForm, CountsRecord, SignalingReport, alpha_for_theta,
                   behavior_from_counts, epsilon_deviation, from_correlators, local_bound, mu_for_theta,
                   quantum_max, signaling_deficit, tilted_chsh, to_correlators)
from .certify import (FidelityCertificate, Nqa2Result, certify_behavior, certify_pipeline,
                      epsilon_fidelity, nqa2_regularize, objective_on_moments, robust_curve,
                      swap_fidelity)
from .config import RunConfig, load_config
from .errors import (CertificateError, DomainError, EmptySettingError, SchemaError, SolverError,
                     ValidationError)
from .moments import (MomentSchema, OperatorWord, build_localizing_schema, build_moment_schema,
                      canonicalize, quantum_moment_vector)
from .quantum import (DensityMatrix, MeasurementSetting, NoiseModel, PureState, TrialPlan,
                      apply_depolarizing, born_behavior, fidelity_pure, ideal_measurements,
                      sample_counts, target_state)
from .report import CertificationReport
from .sdp import SdpProblem, SdpSolution, certified_lower_bound, solve
from .tomography import (MiscalibrationDemo, PauliExpectations, expectations_from_counts,
                         expectations_from_state, linear_inversion, miscalibration_demo,
                         project_to_physical, tomography_fidelity)

__version__ = "0.1.0"
