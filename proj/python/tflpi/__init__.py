from ._tflpi import *  # noqa: F401,F403
from ._tflpi import __doc__  # noqa: F401
