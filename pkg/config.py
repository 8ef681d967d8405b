import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    LOG_LEVEL = os.getenv("FGEL_LOG_LEVEL", "INFO")
    DEFAULT_JOBS = int(os.getenv("FGEL_JOBS", 1))
    OUTPUT_DIR = os.getenv("FGEL_OUTPUT_DIR", "results")

    # replicate counts per experiment when a run config leaves `seeds` unset
    REPLICATES = {"heteroskedastic": 70, "iv": 50}
    IV_TEST_SIZE = 20000
    TUNING_LAMBDAS = [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
    TUNING_DIVERGENCES = ["chi2", "el", "kl"]


class FullConfig(Config):
    TESTING = False


class DeskConfig(Config):
    TESTING = False
    REPLICATES = {"heteroskedastic": 10, "iv": 10}
    IV_TEST_SIZE = 5000


class TestingConfig(DeskConfig):
    TESTING = True
    LOG_LEVEL = "WARNING"
    REPLICATES = {"heteroskedastic": 2, "iv": 2}
    IV_TEST_SIZE = 2000


config = {
    "full": FullConfig,
    "desk": DeskConfig,
    "testing": TestingConfig,
    "default": FullConfig,
}
