"""From-scratch learners: LM-trained network, KNN, linear SVM, GP regression."""
from .angles import circular_error, circular_rmse, decode, encode
from .gpr import GprModel, predict_gpr, train_gpr
from .knn import knn
from .mlp import MlpModel, TrainReport, predict_mlp, train_mlp
from .svm import LinearSvm, train_linear_svm

__all__ = ["circular_error", "circular_rmse", "decode", "encode", "GprModel", "predict_gpr",
           "train_gpr", "knn", "MlpModel", "TrainReport", "predict_mlp", "train_mlp",
           "LinearSvm", "train_linear_svm"]
