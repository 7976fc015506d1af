import os
import logging
from dotenv import load_dotenv

load_dotenv()


class Settings:
    def __init__(self):
        self.logger = logging.getLogger(__name__)

        # Logging
        self.LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO").upper()
        # Empty disables the file handler
        self.LOG_FILE = os.getenv("LOG_FILE", "branchnet.log")

        # Output
        self.OUTPUT_DIR = os.getenv("OUTPUT_DIR", "out")
        self.DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "0"))

        # Protocol trainings that may run at once
        self.MAX_WORKERS = int(os.getenv("MAX_WORKERS", "3"))

        # Training defaults
        self.INIT_STDDEV = float(os.getenv("INIT_STDDEV", "0.05"))
        self.ELU_ALPHA = float(os.getenv("ELU_ALPHA", "1.0"))
        self.HUBER_DELTA = float(os.getenv("HUBER_DELTA", "1.0"))

        # Hidden-feature protocol thresholds
        self.ACCURACY_BAND = float(os.getenv("ACCURACY_BAND", "0.15"))
        self.CROSS_THRESHOLD = float(os.getenv("CROSS_THRESHOLD", "0.6"))
        self.OWN_THRESHOLD = float(os.getenv("OWN_THRESHOLD", "0.6"))

        self.logger.debug("Settings initialized")

    def validate(self):
        errors = []
        if self.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            errors.append(f"LOG_LEVEL must be a logging level name, got {self.LOG_LEVEL}")
        if not 0 <= self.DEFAULT_SEED < 2 ** 64:
            errors.append("DEFAULT_SEED must be a 64-bit unsigned integer")
        if self.MAX_WORKERS < 1:
            errors.append("MAX_WORKERS must be at least 1")
        if self.INIT_STDDEV < 0:
            errors.append("INIT_STDDEV must be non-negative")
        if self.ELU_ALPHA <= 0:
            errors.append("ELU_ALPHA must be positive")
        if self.HUBER_DELTA <= 0:
            errors.append("HUBER_DELTA must be positive")
        if self.ACCURACY_BAND <= 0:
            errors.append("ACCURACY_BAND must be positive")
        if not (0.0 <= self.CROSS_THRESHOLD <= 1.0):
            errors.append("CROSS_THRESHOLD must be between 0.0 and 1.0")
        if not (0.0 <= self.OWN_THRESHOLD <= 1.0):
            errors.append("OWN_THRESHOLD must be between 0.0 and 1.0")
        if errors:
            msg = "Configuration validation failed:\n" + "\n".join(f"- {e}" for e in errors)
            self.logger.error(msg)
            raise ValueError(msg)
        self.logger.debug("Configuration validation passed")

    def get_training_defaults(self) -> dict:
        return {
            "init_stddev": self.INIT_STDDEV,
            "elu_alpha": self.ELU_ALPHA,
            "huber_delta": self.HUBER_DELTA,
        }

    def get_protocol_defaults(self) -> dict:
        return {
            "accuracy_band": self.ACCURACY_BAND,
            "cross_threshold": self.CROSS_THRESHOLD,
            "own_threshold": self.OWN_THRESHOLD,
            "max_workers": self.MAX_WORKERS,
        }

    def get_runtime_config(self) -> dict:
        return {
            "log_level": self.LOG_LEVEL,
            "log_file": self.LOG_FILE,
            "output_dir": self.OUTPUT_DIR,
            "default_seed": self.DEFAULT_SEED,
        }

    def __str__(self):
        return f"Settings(output_dir={self.OUTPUT_DIR}, seed={self.DEFAULT_SEED}, max_workers={self.MAX_WORKERS})"
