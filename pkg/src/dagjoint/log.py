import logging

FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(verbosity=0):
    '''
    0 -> WARNING, 1 -> INFO, 2+ -> DEBUG. TensorFlow's own logger stays at ERROR.
    '''
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, format=FORMAT, force=True)
    logging.getLogger("tensorflow").setLevel(logging.ERROR)
    return logging.getLogger("dagjoint")
