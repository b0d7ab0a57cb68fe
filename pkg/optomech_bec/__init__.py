from . import models
from . import services
from . import controllers
from .exceptions import ConfigError, NumericalError, OptomechError
from .version import get_version
