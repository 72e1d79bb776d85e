import logging.config

GENERIC_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"


def configure_logging(level: str = "INFO") -> None:
    """Send package logs to stderr with the generic formatter."""
    logging.config.dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {
                "generic": {"format": GENERIC_FORMAT, "datefmt": "%H:%M:%S"},
            },
            "handlers": {
                "console": {
                    "class": "logging.StreamHandler",
                    "stream": "ext://sys.stderr",
                    "level": "NOTSET",
                    "formatter": "generic",
                },
            },
            "loggers": {
                "entroscale": {"level": level.upper(), "handlers": ["console"]},
                "matplotlib": {"level": "WARNING"},
            },
            "root": {"level": "WARNING", "handlers": []},
        }
    )
