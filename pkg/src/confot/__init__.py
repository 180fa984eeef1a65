"""Split conformal prediction sets for black-box classifier logits, with
transductive optimal-transport transfer (Conf-OT)."""

from .conformal import (ConformalThreshold, PredictionSet, SplitConformalClassifier,
                        build_prediction_set, calibrate_threshold, conformal_masks,
                        conformal_pipeline)
from .core import (ClassMarginal, LabeledSplit, ProbabilityMatrix, SimilarityMatrix,
                   argmax_class, softmax_columns)
from .exceptions import (ConfOTError, ContractError, DataError, FormatError, NumericError,
                         ParameterError, ShapeError)
from .metrics import (MetricsReport, average_set_size, ccv, empirical_coverage, evaluate,
                      top1_accuracy)
from .scores import (ScoreKind, aps_score, lac_score, raps_score, score_all_labels,
                     score_matrix, tie_breaker)
from .transport import (ConfOTClassifier, TransportConfig, TransportPlan, assemble_joint_matrix,
                        conf_ot_masks, conf_ot_pipeline, estimate_label_marginal, sinkhorn_codes)

__version__ = "0.1.0"
