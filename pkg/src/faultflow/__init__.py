"""Fault flow-function upscaling, copula modelling and adaptive stratified leakage studies."""
from .ecdf import EmpiricalCDF
from .facies import (FaciesModelConfig, FaciesRealization, LognormalFit, fit_lognormal, sample_realization,
                     sgr_to_perm, upscale_permeability)
from .pipeline import CaseArtifacts, build_case, fit_artifacts, run_study
from .proxy import ProxyConfig, SimResult, simulate
from .reduced import ReducedModelFit, evaluate_flow_functions, extract_y, fit_reduced_model
from .sampling import Stratification, Stratum, measure_speedup, run_adaptive, run_smc
from .upscaling import Ensemble, FlowFunctionSample, SdGrid, generate_ensemble, upscale_flow_functions

__version__ = "0.1.0"

__all__ = [
    "CaseArtifacts", "EmpiricalCDF", "Ensemble", "FaciesModelConfig", "FaciesRealization", "FlowFunctionSample",
    "LognormalFit", "ProxyConfig", "ReducedModelFit", "SdGrid", "SimResult", "Stratification", "Stratum",
    "build_case", "evaluate_flow_functions", "extract_y", "fit_artifacts", "fit_lognormal", "fit_reduced_model",
    "generate_ensemble", "measure_speedup", "run_adaptive", "run_smc", "run_study", "sample_realization",
    "sgr_to_perm", "simulate", "upscale_flow_functions", "upscale_permeability",
]
