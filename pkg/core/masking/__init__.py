from .strategies import *
from .curriculum import *
