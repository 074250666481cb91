from .fitting import (GammaFit, PathGainFit, estimate_coherence_distance, fit_gamma_fading,
                      fit_path_gain_params, sample_acf)
from .ransac import (DelayTrack, LSFit, RansacResult, SubpathEstimate, fit_scatterer_ls,
                     modelled_distance, ransac_subpaths)

__all__ = [
    "DelayTrack", "GammaFit", "LSFit", "PathGainFit", "RansacResult", "SubpathEstimate",
    "estimate_coherence_distance", "fit_gamma_fading", "fit_path_gain_params", "fit_scatterer_ls",
    "modelled_distance", "ransac_subpaths", "sample_acf",
]
