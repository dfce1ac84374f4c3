from .patches import *
from .rope import *
