from . import config_service
from . import meanfield_service
from . import steadystate_service
from . import fluctuation_service
from . import branch_cache
