"""Recursive generalized cross validation for linear state-space models."""

from .asymptotic import (
    StationarySolution,
    asymptotic_gcv_init,
    asymptotic_gcv_run,
    asymptotic_gcv_step,
    smoothing_ratio,
    solve_dare,
    solve_lyapunov,
    stationary_gains,
)
from .bank import BankState, FilterBank, ParamGrid, bank_best, bank_init, bank_step, log_grid
from .gcv import GcvState, gcv_init, gcv_iter, gcv_run, gcv_step
from .kalman import KalmanState, SmootherOutput, kf_step, rts_smooth
from .oracle import BatchGcvResult, batch_gcv, batch_state_cov, fd_gamma_checks
from .statespace import (
    SamplingSchedule,
    StateSpaceModel,
    make_dc_motor_model,
    make_fir_model,
    make_spline_model,
    make_uniform_spline_model,
    stable_spline_gram,
)

__version__ = "0.1.0"
