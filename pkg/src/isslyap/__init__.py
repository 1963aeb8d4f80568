"""Numerical toolkit for ISS Lyapunov constructions at desk scale.

Simulates mild solutions of semilinear evolution equations, certifies
exponential decay envelopes for semigroups, builds the integral and
sup-norm ISS Lyapunov functionals with their dissipation inequalities,
synthesizes robustly stabilizing feedbacks, and estimates or falsifies
ISS bounds empirically.
"""

from .compfunc import ComparisonFunction, KLFunction, compose, kl_eval, verify_class
from .evolution import (ClosedLoopSystem, DisturbanceSignal, Feedback, InputSignal,
                        SemilinearSystem, Trajectory, close_loop, closed_loop_lipschitz,
                        estimate_lipschitz, feedback_from_gain, linear_input_system,
                        rfc_probe, solve_disturbed, solve_mild)
from .harness import (EquivalenceReport, ISSEstimate, convolution_limit_check,
                      equivalence_experiment, iss_estimate, iss_falsify,
                      zero_ugas_check)
from .lyapunov import (IntegralLyapunov, LinearSystem, SupNormLyapunov,
                       check_dissipation_gamma, check_dissipation_integral,
                       check_gamma_decay, check_lipschitz_constants,
                       check_quadratic_bounds, check_sandwich, dini_derivative,
                       implication_form_gain, make_linear_system)
from .robust import (FeedbackSynthesis, UGASReport, disturbance_family,
                     feedback_gain_margins, synthesize_feedback, verify_ugas,
                     verify_ugatt, verify_ugs)
from .semigroup import (DecayCertificate, GeneratorModel, apply_semigroup,
                        certify_decay, discretize, operator_norm)

__version__ = "0.1.0"
