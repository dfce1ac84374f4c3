from .load_dataset import *
from .checkpoint import *
