"""Weighted counterfactual explanations for binary credit-style classifiers."""

from .bench import counterfactual_size, run_size_benchmark
from .data import Dataset, FeatureSpec, gen_synthetic, load_csv, preprocess
from .distance import WeightVector, mad_distance, weighted_distance
from .explain import Explanation, FeatureStyle, render, render_negative, render_positive, to_json
from .generator import (
    CfConfig,
    CounterfactualResult,
    explain_auto,
    generate,
    generate_many,
    generate_negative,
    generate_positive,
)
from .models import ModelConfig, Predictor, train_gradboost, train_linear_svc, train_logreg, train_mlp
from .optimizer import NelderMeadPool, nelder_mead, nelder_mead_batch
from .weights import anova_f, global_theta, importance_profile, knn_theta

__version__ = "0.1.0"
