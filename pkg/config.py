import os
import psutil


def _env_threads() -> int:
    value = os.environ.get('SWITCHSIM_THREADS', '')
    if value.strip():
        return max(1, int(value))
    return psutil.cpu_count(logical=True) or 1


class Config:
    VERSION = '1.0.0'

    # Parallel Monte Carlo
    THREADS = _env_threads()
    DEFAULT_SEED = 20240101

    # Time discretization
    DEFAULT_T = 1.0
    DEFAULT_N_STEPS = 100
    DEFAULT_N_PATHS = 10000

    # Numerical tolerances
    RATE_TOLERANCE = 1e-10  # row sums of user-supplied Q(x)
    DIVERGENCE_BOUND = 1e12  # state norm at which a path aborts
    JACOBIAN_STEP = 1e-5
    JACOBIAN_TOLERANCE = 1e-6

    # Studies
    MIN_DECOUPLING_EVENTS = 25  # binomial noise floor for the exponent fit
    ABORT_FRACTION_LIMIT = 0.01  # above this the CLI exits with code 3
    TRUNCATION_TAIL = 1e-6  # Poisson tail mass that fixes the series depth n_max
    ORACLE_RTOL = 1e-4

    LOG_LEVEL = os.environ.get('SWITCHSIM_LOG_LEVEL', 'INFO')
    LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


class DevelopmentConfig(Config):
    DEBUG = True


class TestingConfig(Config):
    TESTING = True
    THREADS = 2
    DEFAULT_N_STEPS = 20
    DEFAULT_N_PATHS = 500


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}


def get_config():
    return config.get(os.environ.get('SWITCHSIM_ENV', 'default'), DevelopmentConfig)
