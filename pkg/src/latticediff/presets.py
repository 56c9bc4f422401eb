"""Reference model configurations used by the docs, tests, and examples."""

from .model import DispersionSpec, GridSpec, ModelConfig, SpinSystem
from .reservoir import BathProfile


def reference_1d(n_k=128, seed=20240817):
    """Two levels {0, 1}, off-diagonal unit coupling, d = 1 lattice.

    The workhorse model of the verification suite: the level gap is 1, the
    bath is the built-in Gaussian-cutoff family at beta = 1, and the
    momentum grid is inversion symmetric with n_k points.
    """
    return ModelConfig(
        dim=1,
        dispersion=DispersionSpec("nearest_neighbor"),
        spin=SpinSystem(levels=(0.0, 1.0), couplings=((0, 1), (1, 0))),
        beta=1.0,
        bath=BathProfile("builtin_gaussian", beta=1.0, dim=1, cutoff=2.0),
        grid=GridSpec(points_per_axis=n_k, sphere_nodes=2),
        rng_seed=seed,
    )


def reference_2d(n_k=16, m_dir=16, seed=20240817):
    """Same levels and bath in d = 2 with a direction-node sphere rule."""
    return ModelConfig(
        dim=2,
        dispersion=DispersionSpec("nearest_neighbor"),
        spin=SpinSystem(levels=(0.0, 1.0), couplings=((0, 1), (1, 0))),
        beta=1.0,
        bath=BathProfile("builtin_gaussian", beta=1.0, dim=2, cutoff=2.0),
        grid=GridSpec(points_per_axis=n_k, sphere_nodes=m_dir),
        rng_seed=seed,
    )


def flat_dispersion_1d(n_k=64, seed=20240817):
    """Constant-dispersion variant (fails validation; spectral tests only)."""
    return ModelConfig(
        dim=1,
        dispersion=DispersionSpec("cosine_series", coefficients=((0.0,),)),
        spin=SpinSystem(levels=(0.0, 1.0), couplings=((0, 1), (1, 0))),
        beta=1.0,
        bath=BathProfile("builtin_gaussian", beta=1.0, dim=1, cutoff=2.0),
        grid=GridSpec(points_per_axis=n_k, sphere_nodes=2),
        rng_seed=seed,
    )
