"""
AtomicLift - blind spikes deconvolution by lifting and atomic norm minimization.

Modules:
    signal_model     spikes, subspace PSF models, Fourier-domain measurement synthesis
    lifting          the lifted measurement operator X and its adjoint
    trig_poly        vector-valued trigonometric polynomial evaluation and refinement
    sdp_solver       atomic norm SDP and the AtomicLift programs (ADMM)
    dual_localizer   dual polynomial, spike localization, rank-1 factorization, scoring
    certificate_lab  numerical dual certificate construction and validation
    experiments      single runs, sweeps, noisy localization and certificate campaigns
"""

__version__ = "1.0.0"
