from .tensor import *
from .io import *
