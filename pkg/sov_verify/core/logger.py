import logging
from typing import Optional

from sov_verify.core.config import Settings, get_settings

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(settings: Optional[Settings] = None, level: Optional[str] = None) -> None:
    """Configure the package logger from settings.

    Args:
        settings: Settings to read `log_level` and `log_file` from (defaults to the cached settings)
        level: Optional level name overriding `settings.log_level`
    """
    settings = settings or get_settings()
    root = logging.getLogger("sov_verify")
    root.setLevel((level or settings.log_level).upper())

    for handler in list(root.handlers):
        root.removeHandler(handler)

    formatter = logging.Formatter(LOG_FORMAT)
    stream = logging.StreamHandler()
    stream.setFormatter(formatter)
    root.addHandler(stream)

    if settings.log_file:
        file_handler = logging.FileHandler(settings.log_file)
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)
