from .gbsm import *
from .dataset import *
