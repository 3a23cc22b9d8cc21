"""Detecting an anomalous path of nodes in large layered graphs.

Graphs, exponential-family node laws, path priors, detectors (Bayes
likelihood ratio, GLRT, strip and weighted average), a reproducible Monte
Carlo engine and closed-form checks.
"""
from .analysis import (bayes_risk_lb, bayes_risk_mc, lattice_var_lm, nondetectability_criterion,
                       tree_glrt_type1_bound, tree_var_lm, var_lm_from_crossings)
from .detectors import (bayes_lr_dp, glrt_max_dp, make_detector, strip_statistic, was_mu95,
                        was_statistic)
from .engine import (calibrate, estimate_power, fast_strip_power, mu95_search, path_source,
                     power_curve, seed_derive)
from .errors import CapacityError, ConfigError, FitError, NumericError, SearchError
from .families import BERNOULLI, EXPONENTIAL, GAUSSIAN, get_family, theta_star
from .graph import LayeredDag, NodeField, PathSteps, VertexSequence, build_graph
from .priors import PriorSpec, hm_sequence

__version__ = "0.1.0"
