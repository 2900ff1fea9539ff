# Numerical tolerances shared by every solver. All matrix norms are Frobenius
# unless a name says otherwise.

# A closed loop is stable when every eigenvalue modulus is below 1 - STABILITY_MARGIN.
STABILITY_MARGIN = 1e-12

SYMMETRY_TOL = 1e-10
# PSD tests accept a minimum eigenvalue down to -PSD_TOL * max(1, ||X||_F).
PSD_TOL = 1e-9
# R_ii must have a minimum eigenvalue above this.
PD_TOL = 1e-12
# Value kernels P_i count as positive definite down to -PD_VALUE_TOL * max(1, ||P||_F).
PD_VALUE_TOL = 1e-10

# Linear solves refuse matrices whose 2-norm condition number exceeds this.
COND_LIMIT = 1e12
# Least-squares regressions refuse cond(X^T X) above this (persistence of excitation).
PE_COND_LIMIT = 1e10

# Stein post-condition: ||F^T P F - P + M||_F <= STEIN_RESIDUAL_TOL * max(1, ||M||_F).
STEIN_RESIDUAL_TOL = 1e-9

# NE certificate defaults.
CERT_RESIDUAL_TOL = 1e-6
CERT_GAIN_TOL = 1e-6

# Cost evaluation refuses non-stabilizing profiles beyond this horizon.
MAX_UNSTABLE_HORIZON = 10 ** 6

# Simulated trajectories must stay within this multiple of max(1, ||x0||).
TRAJECTORY_BLOWUP_FACTOR = 1e3

# Inverse-solver defaults (simulation study settings).
DEFAULT_Q0_SCALE = 0.1
DEFAULT_ALPHA = 1.0
DEFAULT_RHO = 1e-3
DEFAULT_MAX_ITERATIONS = 10_000
# Added to Q_i^(0) when the first Stein constant term is only semidefinite.
Q0_JITTER = 1e-12
# An inverse run is declared divergent once some ||Q_i|| exceeds this multiple of
# max(1, ||Q_i^(0) + sum_j K_jo^T R_ij K_jo||); the Q updates never decrease.
Q_DIVERGENCE_FACTOR = 1e6

# Forward Nash solver defaults.
FORWARD_TOL = 1e-10
FORWARD_MAX_ITERATIONS = 2_000
FORWARD_MIN_DAMPING = 1.0 / 64

# Probing-noise defaults (sinusoidal sum used in the model-free study).
DEFAULT_NOISE_AMPLITUDE = 5e-5
DEFAULT_NUM_FREQUENCIES = 10_000
# Trajectory length defaults to this multiple of the Q-function unknown count.
DEFAULT_LENGTH_FACTOR = 3

# Environment variable that may override the output directory.
OUTPUT_DIR_ENV = "LQ_INVERSE_OUTPUT_DIR"
