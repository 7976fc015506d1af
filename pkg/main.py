import logging
import sys

from branchnet import cli
from config.settings import Settings


def setup_logging(log_level: str = "INFO", log_file: str = "branchnet.log"):
    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, mode='a', encoding='utf-8'))
    logging.basicConfig(
        level=getattr(logging, log_level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('PIL').setLevel(logging.WARNING)
    logging.getLogger('fontTools').setLevel(logging.WARNING)


def main(argv=None) -> int:
    settings = Settings()
    setup_logging(settings.LOG_LEVEL, settings.LOG_FILE)
    return cli.main(argv, settings)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logging.info("Stopped by user (Ctrl+C)")
        sys.exit(1)
