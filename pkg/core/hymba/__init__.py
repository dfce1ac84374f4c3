from .attention import *
from .ssm import *
from .block import *
