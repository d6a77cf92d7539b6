"""Path builders shared by the test modules."""
import numpy as np

from cfa.energy import GridModel, PriceModel, RenewableModel, SamplePath, sample_path


def flat_path(T, H, E, P, D, G):
    """Constant series with perfect forecasts."""
    n = T + 1
    E, P, D, G = (np.full(n, float(v)) for v in (E, P, D, G))
    F_E = np.full((n, n), np.nan)
    F_P = np.full((n, n), np.nan)
    for o in range(n):
        last = min(T, o + H)
        F_E[o, o:last + 1] = E[o:last + 1]
        F_P[o, o:last + 1] = P[o:last + 1]
    return SamplePath(E, P, D, G, F_E, F_P, seed=0, H=H)


def path_for(seed, sigma_f=25.0, T=24, H=8):
    return sample_path(T, H, seed, PriceModel(), RenewableModel(), GridModel(), sigma_f=sigma_f)
