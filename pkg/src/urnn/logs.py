import logging

from urnn.interfaces import LoggingServiceInterface

LOG_FORMAT = "[%(asctime)s] [%(levelname)s]  %(message)s - %(pathname)s#L%(lineno)s"
LOG_DATE_FORMAT = "%d/%b/%Y %H:%M:%S"


def get_default_logging_service(name: str = "urnn", level: int = logging.INFO) -> LoggingServiceInterface:
    """Return a stdio logger when the caller did not supply one."""
    console = logging.getLogger(name)
    console.setLevel(level)
    if not getattr(console, "_urnn_handler", None):
        hdlr = logging.StreamHandler()
        hdlr.setFormatter(
            logging.Formatter(
                fmt=LOG_FORMAT,
                datefmt=LOG_DATE_FORMAT,
            )
        )
        console.addHandler(hdlr)
        console._urnn_handler = hdlr
    console._urnn_handler.setLevel(level)
    return console
