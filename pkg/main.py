import logging

from cli.commands import app
from core.config import settings

# Configure toolkit loggers
logging.basicConfig(
    level=settings.log_level,
    format=settings.LOG_FORMAT,
    datefmt=settings.LOG_DATE_FORMAT
)

logger = logging.getLogger(__name__)
logging.getLogger("numba").setLevel(logging.WARNING)


if __name__ == "__main__":
    logger.info(f"Starting {settings.TOOLKIT_NAME} {settings.VERSION}")
    app()
