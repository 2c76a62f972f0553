"""affinekit: affine diffusions on R+^m x R^n.

Admissible parameter sets, transform exponents (closed-form and numeric),
discounted-transform pricing of bonds, bond options, caps and equity calls,
and a Monte Carlo simulator that serves as an independent oracle.
"""

from .core import (
    AffineParams,
    CanonicalTransform,
    ShortRateSpec,
    StateVector,
    ValidationReport,
    canonical_transform,
    diffusion_matrix,
    drift,
    rho_factor,
    transform_params,
    validate_admissible,
)
from .errors import (
    AdmissibilityError,
    AffineError,
    DimensionError,
    ExplosionError,
    NoSolutionError,
    NumericalError,
    StripError,
)
from .fourier import (
    PayoffTransform,
    bs_call_price,
    bs_implied_vol,
    call_transform,
    heston_call,
    transform_price,
    vol_surface,
)
from .mc import (
    PathEnsemble,
    SimConfig,
    cir_exact_step,
    empirical_char,
    load_ensemble,
    mc_price,
    moment_explosion_probe,
    save_ensemble,
    simulate,
)
from .models import (
    CIRParams,
    HestonParams,
    VasicekParams,
    as_affine,
    cir_forward_chisq,
    cir_phi_psi,
    heston_from_variance_form,
    heston_phi_psi,
    vasicek_forward_gaussian,
    vasicek_phi_psi,
)
from .pricing import (
    DiscountedTransform,
    PriceResult,
    TenorStructure,
    atm_strike,
    black_cap_price,
    bond_option,
    bond_price,
    cap_price,
    cap_table,
    discounted_transform,
    forward_char,
    implied_vol_cap,
    noncentral_chisq_cdf,
)
from .riccati import (
    ComponentwiseRiccati,
    PhiPsi,
    RiccatiSystem,
    ScalarRiccatiSpec,
    blow_up_time,
    compare_solutions,
    integrate,
    integrate_path,
    rhs,
    scalar_riccati,
)

__version__ = "0.1.0"
